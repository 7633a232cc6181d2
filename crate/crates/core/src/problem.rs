//! Hamiltonians, Lagrangians, potentials and the reference problem catalog.
//!
//! Every problem has the separable mechanical form
//! `H(x, y, p) = -f(x) - W(y) + p²/2` with a macro potential `f` on ℝ and a
//! 1-periodic micro potential `W` on 𝕋. Its Lagrangian is known in closed form,
//! `L(x, y, v) = f(x) + W(y) + v²/2`, so the multiscale experiments never pay
//! for a numerical conjugation.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A uniformly sampled scalar function on `[lo, hi]`.
///
/// Periodic tables store both endpoints (`values[0] == values[n-1]`) and wrap
/// their argument into `[lo, hi)`; non-periodic tables extend constantly
/// outside the interval when evaluated with [`FunctionTable1D::eval_clamped`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionTable1D {
    pub lo: f64,
    pub hi: f64,
    pub values: Vec<f64>,
    #[serde(default)]
    pub convex: bool,
    #[serde(default)]
    pub even: bool,
    #[serde(default)]
    pub periodic: bool,
}

impl FunctionTable1D {
    pub fn new(lo: f64, hi: f64, values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 || !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::Config(format!(
                "degenerate table: [{lo}, {hi}] with {} samples",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("table contains non-finite values".into()));
        }
        Ok(FunctionTable1D {
            lo,
            hi,
            values,
            convex: false,
            even: false,
            periodic: false,
        })
    }

    /// Samples `f` at `n` equally spaced nodes including both endpoints.
    pub fn from_fn(lo: f64, hi: f64, n: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::Config(format!("table needs at least 2 samples, got {n}")));
        }
        let h = (hi - lo) / (n - 1) as f64;
        let values = (0..n).map(|i| f(lo + i as f64 * h)).collect();
        Self::new(lo, hi, values)
    }

    pub fn with_flags(mut self, convex: bool, even: bool, periodic: bool) -> Self {
        self.convex = convex;
        self.even = even;
        self.periodic = periodic;
        self
    }

    pub fn n_samples(&self) -> usize {
        self.values.len()
    }

    pub fn spacing(&self) -> f64 {
        (self.hi - self.lo) / (self.values.len() - 1) as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        if i + 1 == self.values.len() {
            self.hi
        } else {
            self.lo + i as f64 * self.spacing()
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.values.len()).map(move |i| self.node(i))
    }

    fn interp_inside(&self, x: f64) -> f64 {
        let n = self.values.len();
        let s = (x - self.lo) / self.spacing();
        let i = (s.floor() as isize).clamp(0, n as isize - 2) as usize;
        let w = s - i as f64;
        if w == 0.0 {
            return self.values[i];
        }
        self.values[i] * (1.0 - w) + self.values[i + 1] * w
    }

    /// Linear interpolation; `x` outside `[lo, hi]` is a range error unless the
    /// table is periodic.
    pub fn eval(&self, x: f64) -> Result<f64> {
        if self.periodic {
            return Ok(self.eval_periodic(x));
        }
        let slack = 1e-12 * (self.hi - self.lo);
        if !(x >= self.lo - slack && x <= self.hi + slack) {
            return Err(Error::Range(format!(
                "{x} outside table range [{}, {}]",
                self.lo, self.hi
            )));
        }
        Ok(self.interp_inside(x.clamp(self.lo, self.hi)))
    }

    /// Linear interpolation with constant extension outside the interval.
    pub fn eval_clamped(&self, x: f64) -> f64 {
        if self.periodic {
            return self.eval_periodic(x);
        }
        self.interp_inside(x.clamp(self.lo, self.hi))
    }

    fn eval_periodic(&self, x: f64) -> f64 {
        let period = self.hi - self.lo;
        let r = (x - self.lo).rem_euclid(period);
        self.interp_inside(self.lo + r)
    }

    /// Most negative normalized second difference `f[i-1] - 2 f[i] + f[i+1]`.
    pub fn min_second_difference(&self) -> f64 {
        self.values
            .windows(3)
            .map(|w| w[0] - 2.0 * w[1] + w[2])
            .fold(f64::INFINITY, f64::min)
    }

    pub fn value_range(&self) -> f64 {
        let (lo, hi) = min_max(&self.values);
        hi - lo
    }

    /// Default convexity tolerance: `1e-9 · (value range)`.
    pub fn default_convex_tol(&self) -> f64 {
        1e-9 * self.value_range().max(1.0)
    }

    pub fn is_convex(&self, tol: f64) -> bool {
        self.values.len() < 3 || self.min_second_difference() >= -tol
    }

    pub fn max_abs_slope(&self) -> f64 {
        let h = self.spacing();
        self.values
            .windows(2)
            .map(|w| ((w[1] - w[0]) / h).abs())
            .fold(0.0, f64::max)
    }
}

pub(crate) fn min_max(v: &[f64]) -> (f64, f64) {
    v.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)))
}

/// Distance from `y` to the nearest integer, i.e. the distance to 0 on 𝕋.
#[inline]
pub fn torus_dist0(y: f64) -> f64 {
    (y - y.round()).abs()
}

/// Shape of a potential. Closed-form kinds carry their parameters inline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PotentialKind {
    Zero,
    Constant { value: f64 },
    /// `slope · |x|`
    Abs { slope: f64 },
    /// `min(|x|, 1)`
    AbsClipped,
    /// `min(|x|^{1/4}, 1)`; not Lipschitz at the origin.
    QuarterPowerClipped,
    /// 1-periodic tent `1/2 - |y|` on `[-1/2, 1/2]`.
    Tent,
    /// 1-periodic well `min(1, 6 · dist_𝕋(y, 1/2))`: zero at `y = 1/2`, equal
    /// to 1 on `[-1/3, 1/3]`.
    Well,
    /// Linear interpolation of a sampled table.
    Table { table: FunctionTable1D },
}

impl PotentialKind {
    pub fn id(&self) -> &'static str {
        match self {
            PotentialKind::Zero => "zero",
            PotentialKind::Constant { .. } => "constant",
            PotentialKind::Abs { .. } => "abs",
            PotentialKind::AbsClipped => "abs_clipped",
            PotentialKind::QuarterPowerClipped => "quarter_power_clipped",
            PotentialKind::Tent => "tent",
            PotentialKind::Well => "well",
            PotentialKind::Table { .. } => "table",
        }
    }
}

/// A scalar potential with cached bounds.
///
/// `min_value`/`max_value` are exact for closed-form kinds and for tables
/// (extremes of a piecewise-linear interpolant sit at nodes). For unbounded
/// kinds (`Abs` with nonzero slope) the bounds are infinite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "PotentialKind", into = "PotentialKind")]
pub struct Potential {
    pub kind: PotentialKind,
    /// `None` when the potential is not globally Lipschitz.
    pub lipschitz_constant: Option<f64>,
    pub min_value: f64,
    pub max_value: f64,
}

impl From<PotentialKind> for Potential {
    fn from(kind: PotentialKind) -> Self {
        Potential::new(kind)
    }
}

impl From<Potential> for PotentialKind {
    fn from(p: Potential) -> Self {
        p.kind
    }
}

impl Potential {
    pub fn new(kind: PotentialKind) -> Self {
        let (lip, lo, hi) = match &kind {
            PotentialKind::Zero => (Some(0.0), 0.0, 0.0),
            PotentialKind::Constant { value } => (Some(0.0), *value, *value),
            PotentialKind::Abs { slope } => {
                if *slope == 0.0 {
                    (Some(0.0), 0.0, 0.0)
                } else if *slope > 0.0 {
                    (Some(slope.abs()), 0.0, f64::INFINITY)
                } else {
                    (Some(slope.abs()), f64::NEG_INFINITY, 0.0)
                }
            }
            PotentialKind::AbsClipped => (Some(1.0), 0.0, 1.0),
            PotentialKind::QuarterPowerClipped => (None, 0.0, 1.0),
            PotentialKind::Tent => (Some(1.0), 0.0, 0.5),
            PotentialKind::Well => (Some(6.0), 0.0, 1.0),
            PotentialKind::Table { table } => {
                let (lo, hi) = min_max(&table.values);
                (Some(table.max_abs_slope()), lo, hi)
            }
        };
        Potential {
            kind,
            lipschitz_constant: lip,
            min_value: lo,
            max_value: hi,
        }
    }

    pub fn zero() -> Self {
        Potential::new(PotentialKind::Zero)
    }

    pub fn constant(value: f64) -> Self {
        Potential::new(PotentialKind::Constant { value })
    }

    pub fn table(table: FunctionTable1D) -> Self {
        Potential::new(PotentialKind::Table { table })
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match &self.kind {
            PotentialKind::Zero => 0.0,
            PotentialKind::Constant { value } => *value,
            PotentialKind::Abs { slope } => slope * x.abs(),
            PotentialKind::AbsClipped => x.abs().min(1.0),
            PotentialKind::QuarterPowerClipped => {
                let a = x.abs();
                if a <= 1.0 {
                    a.sqrt().sqrt()
                } else {
                    1.0
                }
            }
            PotentialKind::Tent => 0.5 - torus_dist0(x),
            PotentialKind::Well => (6.0 * torus_dist0(x - 0.5)).min(1.0),
            PotentialKind::Table { table } => table.eval_clamped(x),
        }
    }

    /// True for kinds that are 1-periodic by construction.
    pub fn is_periodic(&self) -> bool {
        match &self.kind {
            PotentialKind::Zero
            | PotentialKind::Constant { .. }
            | PotentialKind::Tent
            | PotentialKind::Well => true,
            PotentialKind::Table { table } => table.periodic && table.hi - table.lo == 1.0,
            _ => false,
        }
    }

    /// Largest magnitude attained, `max(|min|, |max|)`.
    pub fn sup_abs(&self) -> f64 {
        self.min_value.abs().max(self.max_value.abs())
    }
}

/// A multiscale problem `H(x, y, p) = -f(x) - W(y) + p²/2` with initial data `g`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub name: String,
    pub macro_potential: Potential,
    pub micro_potential: Potential,
    pub initial_data: Potential,
}

impl ProblemSpec {
    pub fn new(
        name: impl Into<String>,
        macro_potential: Potential,
        micro_potential: Potential,
        initial_data: Potential,
    ) -> Result<Self> {
        if !micro_potential.is_periodic() {
            return Err(Error::Config(format!(
                "micro potential '{}' is not 1-periodic",
                micro_potential.kind.id()
            )));
        }
        if !macro_potential.min_value.is_finite() || !macro_potential.max_value.is_finite() {
            return Err(Error::Config("macro potential must be bounded".into()));
        }
        Ok(ProblemSpec {
            name: name.into(),
            macro_potential,
            micro_potential,
            initial_data,
        })
    }

    /// Constant `K₀` with `p²/2 - K₀ ≤ H ≤ p²/2 + K₀` everywhere.
    pub fn quadratic_bound(&self) -> f64 {
        self.macro_potential.sup_abs() + self.micro_potential.sup_abs()
    }

    /// Lipschitz constant of `H` in `x`; `None` when (H4) fails.
    pub fn lip_h(&self) -> Option<f64> {
        self.macro_potential.lipschitz_constant
    }

    /// `max |H(·, ·, 0)|`, the scale of the discounted solutions.
    pub fn max_abs_h0(&self) -> f64 {
        let lo = self.macro_potential.min_value + self.micro_potential.min_value;
        let hi = self.macro_potential.max_value + self.micro_potential.max_value;
        lo.abs().max(hi.abs())
    }

    /// Running cost of the multiscale problem without the kinetic part,
    /// `f(x) + W(x/ε)`.
    #[inline]
    pub fn potential_at(&self, x: f64, eps: f64) -> f64 {
        self.macro_potential.eval(x) + self.micro_potential.eval(x / eps)
    }

    /// Default speed bound `2·sqrt(2·(K₀ + Lip(g)² + 1))`.
    pub fn default_speed_bound(&self) -> f64 {
        let lg = self.initial_data.lipschitz_constant.unwrap_or(0.0);
        2.0 * (2.0 * (self.quadratic_bound() + lg * lg + 1.0)).sqrt()
    }
}

/// `H(x, y, p) = -f(x) - W(y mod 1) + p²/2`.
#[inline]
pub fn eval_h(spec: &ProblemSpec, x: f64, y: f64, p: f64) -> f64 {
    -spec.macro_potential.eval(x) - spec.micro_potential.eval(y) + 0.5 * p * p
}

/// `L(x, y, v) = f(x) + W(y mod 1) + v²/2`, the exact Legendre dual of [`eval_h`].
#[inline]
pub fn eval_l(spec: &ProblemSpec, x: f64, y: f64, v: f64) -> f64 {
    spec.macro_potential.eval(x) + spec.micro_potential.eval(y) + 0.5 * v * v
}

/// Discrete Fenchel conjugate `v ↦ max_i (v·p_i - table(p_i))` sampled on
/// `out_n` nodes of `[out_lo, out_hi]`.
///
/// Runs in `O(n + out_n)`: the maximum is attained on the lower convex hull
/// of the input points, whose edge slopes are increasing, and the output
/// nodes are visited in increasing order.
pub fn legendre_transform(
    table: &FunctionTable1D,
    out_lo: f64,
    out_hi: f64,
    out_n: usize,
) -> Result<FunctionTable1D> {
    if table.values.len() < 2 || !(table.lo < table.hi) {
        return Err(Error::Config("legendre_transform: degenerate input grid".into()));
    }
    if out_n < 2 || !(out_lo < out_hi) || !out_lo.is_finite() || !out_hi.is_finite() {
        return Err(Error::Config(format!(
            "legendre_transform: degenerate output grid [{out_lo}, {out_hi}] x {out_n}"
        )));
    }
    let pts: Vec<(f64, f64)> = table.nodes().zip(table.values.iter().copied()).collect();
    let hull = lower_hull(&pts);

    let dv = (out_hi - out_lo) / (out_n - 1) as f64;
    let mut out = Vec::with_capacity(out_n);
    let mut k = 0usize;
    for j in 0..out_n {
        let v = if j + 1 == out_n { out_hi } else { out_lo + j as f64 * dv };
        while k + 1 < hull.len() {
            let (p0, h0) = hull[k];
            let (p1, h1) = hull[k + 1];
            // Advance while the next vertex is at least as good.
            if v * p1 - h1 >= v * p0 - h0 {
                k += 1;
            } else {
                break;
            }
        }
        let (p, h) = hull[k];
        out.push(v * p - h);
    }
    let even = table.even && (out_lo + out_hi).abs() <= 1e-12 * (out_hi - out_lo);
    Ok(FunctionTable1D::new(out_lo, out_hi, out)?.with_flags(true, even, false))
}

/// Lower convex hull of points sorted by abscissa (Andrew's monotone chain).
fn lower_hull(pts: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(pts.len());
    for &q in pts {
        while hull.len() >= 2 {
            let a = hull[hull.len() - 2];
            let b = hull[hull.len() - 1];
            let cross = (b.0 - a.0) * (q.1 - a.1) - (b.1 - a.1) * (q.0 - a.0);
            if cross <= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(q);
    }
    hull
}

/// Names accepted by [`catalog`].
pub const CATALOG_NAMES: [&str; 5] = ["prop41", "prop42", "prop43_cauchy", "prop43_static", "free"];

/// The reference problems. All entries use `g ≡ 0`.
///
/// * `prop41`: `f ≡ 0`, `W = min(1, 6·dist_𝕋(y, 1/2))`, a well with
///   `min W = 0` and `W ≥ 1` on `[-1/3, 1/3]`;
/// * `prop42`: `f = min(|x|^{1/4}, 1)`, `W = 1/2 - |y|`, so `H` is not
///   Lipschitz in `x`;
/// * `prop43_cauchy`, `prop43_static`: `f = min(|x|, 1)`, `W = 1/2 - |y|`;
/// * `free`: `f ≡ 0`, `W ≡ 0`.
pub fn catalog(name: &str) -> Result<ProblemSpec> {
    let g = Potential::zero();
    match name {
        "prop41" => ProblemSpec::new(name, Potential::zero(), Potential::new(PotentialKind::Well), g),
        "prop42" => ProblemSpec::new(
            name,
            Potential::new(PotentialKind::QuarterPowerClipped),
            Potential::new(PotentialKind::Tent),
            g,
        ),
        "prop43_cauchy" | "prop43_static" => ProblemSpec::new(
            name,
            Potential::new(PotentialKind::AbsClipped),
            Potential::new(PotentialKind::Tent),
            g,
        ),
        "free" => ProblemSpec::new(name, Potential::zero(), Potential::zero(), g),
        other => Err(Error::Config(format!(
            "unknown catalog problem '{other}' (expected one of {CATALOG_NAMES:?})"
        ))),
    }
}
