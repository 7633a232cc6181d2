//! Minimal action between two space-time points.
//!
//! `m(t₁, t₂, x, y)` is the infimum of `∫ L(γ, γ/ε, -γ̇)` over curves with
//! `γ(t₁) = x`, `γ(t₂) = y`, approximated by a forward dynamic program over
//! piecewise-linear curves with grid nodes at the slice times. Variants
//! freeze the slow variable at `c`, replace `L` by the effective Lagrangian,
//! or weight each slice by `e^{-λ s}` at its left endpoint.
//!
//! Slice costs use the trapezoid rule for the potential, so the dynamic
//! program here and the Lax–Oleinik solver in [`crate::solvers`] compute the
//! same discrete quantities.

use serde::{Deserialize, Serialize};

use crate::cost::{potential_nodes, Kinetic, Slow};
use crate::dp::{self, Boundary, Kernel};
use crate::effective::EffectiveHamiltonian1D;
use crate::grid::{index_radius, Grid};
use crate::par::{self, Exec};
use crate::problem::ProblemSpec;
use crate::solvers::Resolution;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DPConfig {
    pub dt: f64,
    pub h: f64,
    pub speed_bound: f64,
    /// Explicit truncation radius; derived from the query when absent.
    pub domain_radius: Option<f64>,
    /// Tolerance of the cost-consistency check on returned minimizers.
    pub tol: f64,
    /// Largest tolerated fraction of minimizer steps at the speed bound.
    pub max_saturation: f64,
    pub exec: Exec,
}

impl DPConfig {
    pub fn new(h: f64, dt: f64, speed_bound: f64) -> Self {
        DPConfig {
            dt,
            h,
            speed_bound,
            domain_radius: None,
            tol: 1e-9,
            max_saturation: 0.01,
            exec: Exec::default(),
        }
    }

    /// `h = ε/points_per_period`, `dt = dt_over_h·h`.
    pub fn for_eps(spec: &ProblemSpec, eps: f64, res: &Resolution) -> Self {
        let h = eps / res.points_per_period;
        let m = res.speed_bound.unwrap_or_else(|| spec.default_speed_bound());
        DPConfig::new(h, res.dt_over_h * h, m)
    }

    fn validate(&self) -> Result<()> {
        for (v, name) in [(self.dt, "dt"), (self.h, "h"), (self.speed_bound, "speed_bound")] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    MEps,
    MEpsFrozen,
    MBar,
    MBarFrozen,
    MEpsDisc,
    MBarDisc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscountedKind {
    Eps,
    Bar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricQuery {
    pub kind: MetricKind,
    pub t1: f64,
    pub t2: f64,
    pub x: f64,
    pub y: f64,
    pub eps: Option<f64>,
    pub c: Option<f64>,
    pub lambda: Option<f64>,
}

/// Piecewise-linear curve with nodes at `start_time + k·dt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteCurve {
    pub start_time: f64,
    pub dt: f64,
    pub nodes: Vec<f64>,
}

impl DiscreteCurve {
    pub fn times(&self) -> Vec<f64> {
        (0..self.nodes.len())
            .map(|k| self.start_time + k as f64 * self.dt)
            .collect()
    }

    pub fn max_step(&self) -> f64 {
        self.nodes.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricResult {
    pub value: f64,
    pub minimizer: DiscreteCurve,
    pub query: MetricQuery,
    /// Bound on the change of `value` caused by snapping `x`, `y` to nodes.
    pub snapping_error: f64,
    /// Minimizer steps taken at the largest admissible velocity.
    pub saturated_steps: usize,
    pub h: f64,
}

/// Everything the dynamic program needs besides the endpoints.
struct Problem<'a> {
    spec: &'a ProblemSpec,
    eps: Option<f64>,
    slow: Slow,
    kin: Kinetic,
    lambda: Option<f64>,
}

impl Problem<'_> {
    fn potential(&self, x: f64) -> f64 {
        let f = match self.slow {
            Slow::Frozen(c) => self.spec.macro_potential.eval(c),
            Slow::Variable => self.spec.macro_potential.eval(x),
        };
        match self.eps {
            Some(e) => f + self.spec.micro_potential.eval(x / e),
            None => f,
        }
    }

    fn weight(&self, s: f64) -> f64 {
        self.lambda.map_or(1.0, |l| (-l * s).exp())
    }
}

/// Outcome of the forward sweep from a single start node.
struct Sweep {
    grid: Grid,
    dt: f64,
    w: usize,
    values: Vec<f64>,
    /// `args[k][i]`: offset to the predecessor of node `i` at slice `k + 1`.
    args: Vec<Vec<i32>>,
    start: usize,
    snap_x: f64,
    kern: Kernel,
}

/// Forward dynamic program from `x` at `t1` over the slices up to `t2`.
/// `target` restricts the sweep to nodes that can still reach it.
fn sweep(pb: &Problem, t1: f64, t2: f64, x: f64, target: Option<f64>, cfg: &DPConfig) -> Result<Sweep> {
    cfg.validate()?;
    if !(t2 > t1) || !t1.is_finite() || !t2.is_finite() {
        return Err(Error::Config(format!("need t₁ < t₂, got [{t1}, {t2}]")));
    }
    if let Some(eps) = pb.eps {
        if !(eps > 0.0) {
            return Err(Error::Config(format!("ε must be positive, got {eps}")));
        }
        if cfg.h > eps / 32.0 * (1.0 + 1e-12) {
            return Err(Error::Config(format!(
                "h = {} does not resolve ε = {eps} (need h ≤ ε/32)",
                cfg.h
            )));
        }
    }
    let exec = cfg.exec;
    let h = cfg.h;
    let span = t2 - t1;
    let steps = ((span / cfg.dt) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    let dt = span / steps as f64;
    let w = index_radius(cfg.speed_bound * dt, h);
    if w == 0 {
        return Err(Error::Config(format!(
            "speed bound × dt = {} is below the grid spacing {h}",
            cfg.speed_bound * dt
        )));
    }
    let reach = cfg.speed_bound * span;
    if let Some(y) = target {
        if (y - x).abs() > reach * (1.0 + 1e-12) {
            return Err(Error::Infeasible(format!(
                "|y - x| = {} exceeds M·(t₂ - t₁) = {reach}",
                (y - x).abs()
            )));
        }
    }
    let needed = x.abs().max(target.map_or(0.0, f64::abs)) + reach;
    let radius = match cfg.domain_radius {
        Some(r) if r < needed * (1.0 - 1e-12) => {
            return Err(Error::Config(format!(
                "domain radius {r} below max(|x|, |y|) + M·(t₂ - t₁) = {needed}"
            )))
        }
        Some(r) => r,
        None => needed,
    };
    let grid = Grid::centered(index_radius(radius, h) + 1, h);
    let (ix, _) = grid.nearest(x)?;
    let iy = match target {
        Some(y) => {
            let (iy, _) = grid.nearest(y)?;
            if iy.abs_diff(ix) > steps * w {
                return Err(Error::Infeasible(format!(
                    "snapped endpoints {} apart, reachable {}",
                    grid.x(iy) - grid.x(ix),
                    (steps * w) as f64 * h
                )));
            }
            Some(iy)
        }
        None => None,
    };

    let pot = potential_nodes(pb.spec, pb.eps, pb.slow, &grid, exec);
    let wi = w as isize;
    // moving from node i + j to node i: -γ̇ = j·h/dt
    let kern = Kernel {
        half_width: w,
        costs: (-wi..=wi)
            .map(|j| pb.kin.lagrangian(j as f64 * h / dt).map(|l| dt * l))
            .collect::<Result<Vec<_>>>()?,
    };

    let n = grid.n;
    let mut values = vec![f64::INFINITY; n];
    values[ix] = 0.0;
    let mut prev = vec![f64::INFINITY; n];
    let mut half = vec![0.0; n];
    let mut args = Vec::with_capacity(steps);
    for k in 0..steps {
        let wk = pb.weight(t1 + k as f64 * dt);
        let scaled = Kernel {
            half_width: w,
            costs: kern.costs.iter().map(|c| wk * c).collect(),
        };
        par::fill_indexed(exec, &mut half, |i| 0.5 * dt * wk * pot[i]);
        // nodes reachable from x after k + 1 slices that can still reach y
        let mut lo = ix.saturating_sub((k + 1) * w);
        let mut hi = (ix + (k + 1) * w + 1).min(n);
        if let Some(iy) = iy {
            let left = steps - k - 1;
            lo = lo.max(iy.saturating_sub(left * w));
            hi = hi.min(iy + left * w + 1);
        }
        {
            let (v, half) = (&values, &half);
            par::fill_indexed(exec, &mut prev, |i| v[i] + half[i]);
        }
        let mut next = vec![f64::INFINITY; n];
        let mut arg = vec![0i32; n];
        dp::min_plus_step_argmin(exec, &prev, &half, &scaled, Boundary::Clamp, lo, hi, &mut next, &mut arg);
        values = next;
        args.push(arg);
    }
    Ok(Sweep {
        grid,
        dt,
        w,
        values,
        args,
        start: ix,
        snap_x: (x - grid.x(ix)).abs(),
        kern,
    })
}

impl Sweep {
    fn backtrack(&self, end: usize) -> Vec<usize> {
        let steps = self.args.len();
        let mut path = vec![0usize; steps + 1];
        path[steps] = end;
        for k in (0..steps).rev() {
            let i = path[k + 1];
            path[k] = (i as i64 + self.args[k][i] as i64) as usize;
        }
        debug_assert_eq!(path[0], self.start);
        path
    }

    /// Largest slope of the kinetic cost in the position variable.
    fn kinetic_slope(&self) -> f64 {
        self.kern
            .costs
            .windows(2)
            .map(|c| (c[1] - c[0]).abs() / self.grid.h)
            .fold(0.0, f64::max)
    }
}

/// Re-integrates the slice costs along a node path.
fn path_cost(pb: &Problem, t1: f64, dt: f64, xs: &[f64]) -> Result<f64> {
    let mut total = 0.0;
    for (k, seg) in xs.windows(2).enumerate() {
        let wk = pb.weight(t1 + k as f64 * dt);
        let v = (seg[0] - seg[1]) / dt;
        let c = 0.5 * dt * (pb.potential(seg[0]) + pb.potential(seg[1])) + dt * pb.kin.lagrangian(v)?;
        total += wk * c;
    }
    Ok(total)
}

fn finish(pb: &Problem, sw: &Sweep, end: usize, query: MetricQuery, cfg: &DPConfig, snap_y: f64) -> Result<MetricResult> {
    let value = sw.values[end];
    if !value.is_finite() {
        return Err(Error::Infeasible("no admissible discrete curve".into()));
    }
    let path = sw.backtrack(end);
    let nodes: Vec<f64> = path.iter().map(|&i| sw.grid.x(i)).collect();
    let saturated_steps = path.windows(2).filter(|p| p[0].abs_diff(p[1]) == sw.w).count();
    let steps = path.len() - 1;
    if saturated_steps as f64 > cfg.max_saturation * steps as f64 {
        return Err(Error::Saturation(format!(
            "{saturated_steps} of {steps} minimizer steps at speed bound {}; increase it",
            cfg.speed_bound
        )));
    }
    let recomputed = path_cost(pb, query.t1, sw.dt, &nodes)?;
    if (recomputed - value).abs() > cfg.tol * (1.0 + value.abs()) {
        return Err(Error::Numerical(format!(
            "minimizer cost {recomputed} does not reproduce value {value}"
        )));
    }
    Ok(MetricResult {
        value,
        minimizer: DiscreteCurve {
            start_time: query.t1,
            dt: sw.dt,
            nodes,
        },
        snapping_error: (sw.snap_x + snap_y) * sw.kinetic_slope(),
        saturated_steps,
        h: sw.grid.h,
        query,
    })
}

fn run(pb: &Problem, query: MetricQuery, cfg: &DPConfig) -> Result<MetricResult> {
    let sw = sweep(pb, query.t1, query.t2, query.x, Some(query.y), cfg)?;
    let (iy, snap_y) = sw.grid.nearest(query.y)?;
    finish(pb, &sw, iy, query, cfg, snap_y)
}

fn query(kind: MetricKind, t1: f64, t2: f64, x: f64, y: f64) -> MetricQuery {
    MetricQuery {
        kind,
        t1,
        t2,
        x,
        y,
        eps: None,
        c: None,
        lambda: None,
    }
}

/// `m^ε(t₁, t₂, x, y)`.
pub fn m_eps(t1: f64, t2: f64, x: f64, y: f64, eps: f64, spec: &ProblemSpec, cfg: &DPConfig) -> Result<MetricResult> {
    let pb = Problem {
        spec,
        eps: Some(eps),
        slow: Slow::Variable,
        kin: Kinetic::Quadratic,
        lambda: None,
    };
    let q = MetricQuery {
        eps: Some(eps),
        ..query(MetricKind::MEps, t1, t2, x, y)
    };
    run(&pb, q, cfg)
}

/// `m^ε_c(t₁, t₂, x, y)`: slow variable frozen at `c`.
#[allow(clippy::too_many_arguments)]
pub fn m_eps_frozen(
    c: f64,
    t1: f64,
    t2: f64,
    x: f64,
    y: f64,
    eps: f64,
    spec: &ProblemSpec,
    cfg: &DPConfig,
) -> Result<MetricResult> {
    let pb = Problem {
        spec,
        eps: Some(eps),
        slow: Slow::Frozen(c),
        kin: Kinetic::Quadratic,
        lambda: None,
    };
    let q = MetricQuery {
        eps: Some(eps),
        c: Some(c),
        ..query(MetricKind::MEpsFrozen, t1, t2, x, y)
    };
    run(&pb, q, cfg)
}

/// `m̄(t₁, t₂, x, y)` with running cost `f(x) + L̄₁(v)`.
pub fn m_bar(
    t1: f64,
    t2: f64,
    x: f64,
    y: f64,
    spec: &ProblemSpec,
    eff: &EffectiveHamiltonian1D,
    cfg: &DPConfig,
) -> Result<MetricResult> {
    let pb = Problem {
        spec,
        eps: None,
        slow: Slow::Variable,
        kin: Kinetic::effective(eff, cfg.speed_bound)?,
        lambda: None,
    };
    run(&pb, query(MetricKind::MBar, t1, t2, x, y), cfg)
}

/// `m̄_c(t₁, t₂, x, y)`.
#[allow(clippy::too_many_arguments)]
pub fn m_bar_frozen(
    c: f64,
    t1: f64,
    t2: f64,
    x: f64,
    y: f64,
    spec: &ProblemSpec,
    eff: &EffectiveHamiltonian1D,
    cfg: &DPConfig,
) -> Result<MetricResult> {
    let pb = Problem {
        spec,
        eps: None,
        slow: Slow::Frozen(c),
        kin: Kinetic::effective(eff, cfg.speed_bound)?,
        lambda: None,
    };
    let q = MetricQuery {
        c: Some(c),
        ..query(MetricKind::MBarFrozen, t1, t2, x, y)
    };
    run(&pb, q, cfg)
}

/// `m^ε_λ` or `m̄_λ`: slice costs weighted by `e^{-λ s}` at the slice's left
/// endpoint. `eps` is required for [`DiscountedKind::Eps`], `eff` for
/// [`DiscountedKind::Bar`].
#[allow(clippy::too_many_arguments)]
pub fn m_discounted(
    kind: DiscountedKind,
    lambda: f64,
    t1: f64,
    t2: f64,
    x: f64,
    y: f64,
    eps: Option<f64>,
    spec: &ProblemSpec,
    eff: Option<&EffectiveHamiltonian1D>,
    cfg: &DPConfig,
) -> Result<MetricResult> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::Config(format!("discount must be positive, got {lambda}")));
    }
    let (eps, kin, mk) = match kind {
        DiscountedKind::Eps => {
            let e = eps.ok_or_else(|| Error::Config("m_eps_disc needs ε".into()))?;
            (Some(e), Kinetic::Quadratic, MetricKind::MEpsDisc)
        }
        DiscountedKind::Bar => {
            let eff = eff.ok_or_else(|| Error::Config("m_bar_disc needs the effective Hamiltonian".into()))?;
            (None, Kinetic::effective(eff, cfg.speed_bound)?, MetricKind::MBarDisc)
        }
    };
    let pb = Problem {
        spec,
        eps,
        slow: Slow::Variable,
        kin,
        lambda: Some(lambda),
    };
    let q = MetricQuery {
        eps,
        lambda: Some(lambda),
        ..query(mk, t1, t2, x, y)
    };
    run(&pb, q, cfg)
}

/// Evaluates `q` by dispatching on its kind. Fields the kind needs (`eps`,
/// `c`, `lambda`, the effective Hamiltonian) must be present.
pub fn evaluate_query(
    q: &MetricQuery,
    spec: &ProblemSpec,
    eff: Option<&EffectiveHamiltonian1D>,
    cfg: &DPConfig,
) -> Result<MetricResult> {
    let need = |v: Option<f64>, what: &str| {
        v.ok_or_else(|| Error::Config(format!("{:?} query needs {what}", q.kind)))
    };
    let need_eff = || eff.ok_or_else(|| Error::Config(format!("{:?} query needs the effective Hamiltonian", q.kind)));
    let (t1, t2, x, y) = (q.t1, q.t2, q.x, q.y);
    match q.kind {
        MetricKind::MEps => m_eps(t1, t2, x, y, need(q.eps, "eps")?, spec, cfg),
        MetricKind::MEpsFrozen => m_eps_frozen(need(q.c, "c")?, t1, t2, x, y, need(q.eps, "eps")?, spec, cfg),
        MetricKind::MBar => m_bar(t1, t2, x, y, spec, need_eff()?, cfg),
        MetricKind::MBarFrozen => m_bar_frozen(need(q.c, "c")?, t1, t2, x, y, spec, need_eff()?, cfg),
        MetricKind::MEpsDisc => m_discounted(
            DiscountedKind::Eps,
            need(q.lambda, "lambda")?,
            t1,
            t2,
            x,
            y,
            Some(need(q.eps, "eps")?),
            spec,
            None,
            cfg,
        ),
        MetricKind::MBarDisc => m_discounted(
            DiscountedKind::Bar,
            need(q.lambda, "lambda")?,
            t1,
            t2,
            x,
            y,
            None,
            spec,
            Some(need_eff()?),
            cfg,
        ),
    }
}

/// Minimizer of the control formula for `u^ε(x, t)`: the best curve from `x`
/// over `[0, t]` with terminal cost `g`. The returned value is
/// `m^ε(0, t, x, y*) + g(y*)` at the optimal endpoint `y*`.
pub fn optimal_curve(spec: &ProblemSpec, eps: f64, t: f64, x: f64, cfg: &DPConfig) -> Result<MetricResult> {
    let pb = Problem {
        spec,
        eps: Some(eps),
        slow: Slow::Variable,
        kin: Kinetic::Quadratic,
        lambda: None,
    };
    let sw = sweep(&pb, 0.0, t, x, None, cfg)?;
    let mut best = (f64::INFINITY, 0usize);
    for (i, v) in sw.values.iter().enumerate() {
        let c = v + spec.initial_data.eval(sw.grid.x(i));
        if c < best.0 {
            best = (c, i);
        }
    }
    let end = best.1;
    let q = MetricQuery {
        eps: Some(eps),
        ..query(MetricKind::MEps, 0.0, t, x, sw.grid.x(end))
    };
    let mut r = finish(&pb, &sw, end, q, cfg, 0.0)?;
    r.value += spec.initial_data.eval(sw.grid.x(end));
    Ok(r)
}

/// Freezing errors along a curve: with pieces `[t_k, t_{k+1}]`,
/// `t_k = k·√ε` (the last piece ends at the final time), returns
/// `Σ_k |cost_k(frozen at γ(t_k)) - cost_k|` and the number of pieces.
pub fn partition_freezing_sum(spec: &ProblemSpec, eps: f64, curve: &DiscreteCurve) -> (f64, usize) {
    let steps = curve.nodes.len() - 1;
    let t = steps as f64 * curve.dt;
    let piece = eps.sqrt();
    let pieces = ((t / piece).floor() as usize).max(1);
    let mut sum = 0.0;
    let mut k_start = 0usize;
    for p in 0..pieces {
        let k_end = if p + 1 == pieces {
            steps
        } else {
            (((p + 1) as f64 * piece / curve.dt).round() as usize).min(steps)
        };
        let c = curve.nodes[k_start];
        let fc = spec.macro_potential.eval(c);
        let mut diff = 0.0;
        for k in k_start..k_end {
            let (a, b) = (curve.nodes[k], curve.nodes[k + 1]);
            let fa = spec.macro_potential.eval(a);
            let fb = spec.macro_potential.eval(b);
            // kinetic and micro terms cancel between the two costs
            diff += 0.5 * curve.dt * ((fc - fa) + (fc - fb));
        }
        sum += diff.abs();
        k_start = k_end;
    }
    (sum, pieces)
}

/// `m^c(2t, 0, 2y) - 2·m^c(t, 0, y)` at `ε = 1`. The reverse inequality of
/// the pair is the negated gap.
pub fn check_scaling_lemma(c: f64, t: f64, y: f64, spec: &ProblemSpec, cfg: &DPConfig) -> Result<f64> {
    if y.abs() > cfg.speed_bound * t {
        return Err(Error::Infeasible(format!("|y| = {} exceeds M·t", y.abs())));
    }
    let long = m_eps_frozen(c, 0.0, 2.0 * t, 0.0, 2.0 * y, 1.0, spec, cfg)?;
    let short = m_eps_frozen(c, 0.0, t, 0.0, y, 1.0, spec, cfg)?;
    Ok(long.value - 2.0 * short.value)
}

/// `(ε, |m^ε_c(0, t, x, y) - m̄_c(0, t, x, y)|)` for each `ε`, both computed on
/// the grid `h = ε/points_per_period`.
#[allow(clippy::too_many_arguments)]
pub fn check_lemma_metric(
    c: f64,
    t: f64,
    x: f64,
    y: f64,
    eps_list: &[f64],
    spec: &ProblemSpec,
    eff: &EffectiveHamiltonian1D,
    res: &Resolution,
) -> Result<Vec<(f64, f64)>> {
    eps_list
        .iter()
        .map(|&eps| {
            let cfg = DPConfig::for_eps(spec, eps, res);
            let a = m_eps_frozen(c, 0.0, t, x, y, eps, spec, &cfg)?;
            let b = m_bar_frozen(c, 0.0, t, x, y, spec, eff, &cfg)?;
            Ok((eps, (a.value - b.value).abs()))
        })
        .collect()
}
