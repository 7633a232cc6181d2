//! Effective Hamiltonian of the periodic part of a mechanical Hamiltonian.
//!
//! For `H₁(y, p) = -W(y) + p²/2` on 𝕋 with `min W = 0` the effective
//! Hamiltonian is flat on `|p| ≤ p_c = ∫₀¹ √(2W)` and, beyond, equals the
//! unique `λ > 0` with `∫₀¹ √(2(λ + W(y))) dy = |p|`. The full effective
//! Hamiltonian of `H(x, y, p) = -f(x) - W(y) + p²/2` is `-f(x) + H̄₁(p)`.

use serde::{Deserialize, Serialize};

use crate::dp::{self, Boundary, Kernel};
use crate::par::{self, Exec};
use crate::problem::{legendre_transform, FunctionTable1D, Potential, PotentialKind, ProblemSpec};
use crate::{Error, Result};

/// A periodic micro potential as a continuous piecewise-linear function over
/// one period. Every periodic potential kind is of this form, which makes the
/// action integral exact.
struct LinearPieces {
    /// Breakpoints `(y, W(y) - shift)` covering one period.
    pts: Vec<(f64, f64)>,
}

impl LinearPieces {
    fn new(pot: &Potential, shift: f64) -> Result<Self> {
        let raw: Vec<(f64, f64)> = match &pot.kind {
            PotentialKind::Zero => vec![(0.0, 0.0), (1.0, 0.0)],
            PotentialKind::Constant { value } => vec![(0.0, *value), (1.0, *value)],
            PotentialKind::Tent => vec![(-0.5, 0.0), (0.0, 0.5), (0.5, 0.0)],
            PotentialKind::Well => {
                let s = 1.0 / 6.0;
                vec![(0.0, 1.0), (0.5 - s, 1.0), (0.5, 0.0), (0.5 + s, 1.0), (1.0, 1.0)]
            }
            PotentialKind::Table { table } if table.periodic => {
                table.nodes().zip(table.values.iter().copied()).collect()
            }
            _ => return Err(Error::Domain("micro potential must be 1-periodic".into())),
        };
        Ok(LinearPieces {
            pts: raw.into_iter().map(|(y, w)| (y, (w - shift).max(0.0))).collect(),
        })
    }

    /// `∫₀¹ √(2(λ + W))`, exact up to rounding.
    fn action(&self, lambda: f64) -> f64 {
        self.pts
            .windows(2)
            .map(|s| {
                let (y0, a) = s[0];
                let (y1, b) = s[1];
                let (ua, ub) = (2.0 * (lambda + a), 2.0 * (lambda + b));
                let (ra, rb) = (ua.sqrt(), ub.sqrt());
                if ra + rb == 0.0 {
                    return 0.0;
                }
                // mean of √u over a linear segment, written without cancellation
                (y1 - y0) * (2.0 / 3.0) * (ua + ra * rb + ub) / (ra + rb)
            })
            .sum()
    }
}

/// `∫₀¹ √(2W)`: the half-width of the flat piece of `H̄₁` (for `min W = 0`).
pub fn critical_momentum(w: &Potential) -> Result<f64> {
    check_micro(w)?;
    Ok(LinearPieces::new(w, w.min_value)?.action(0.0))
}

fn check_micro(w: &Potential) -> Result<()> {
    if w.min_value < 0.0 {
        return Err(Error::Domain(format!(
            "micro potential has negative minimum {}",
            w.min_value
        )));
    }
    if !w.is_periodic() {
        return Err(Error::Domain("micro potential must be 1-periodic".into()));
    }
    Ok(())
}

/// `H̄₁(p)` for `H₁(y, p) = -W(y) + p²/2`, to absolute tolerance `tol`.
///
/// Returns exactly `0` on the flat piece `|p| ≤ p_c + tol`; otherwise bisects
/// `∫₀¹ √(2(λ + W)) = |p|` on `λ ∈ [0, p²/2 + max W]`. A potential with
/// positive minimum `m` is handled by the shift `H̄₁[W] = H̄₁[W - m] - m`.
pub fn mechanical_effective(w: &Potential, p: f64, tol: f64) -> Result<f64> {
    check_micro(w)?;
    if !(tol > 0.0) {
        return Err(Error::Config(format!("tolerance must be positive, got {tol}")));
    }
    let shift = w.min_value;
    let pa = p.abs();
    let lam_hi = 0.5 * pa * pa + (w.max_value - shift);
    let pieces = LinearPieces::new(w, shift)?;
    Ok(solve_level(&pieces, pa, lam_hi, tol)? - shift)
}

fn solve_level(samples: &LinearPieces, pa: f64, lam_hi: f64, tol: f64) -> Result<f64> {
    let p_crit = samples.action(0.0);
    if pa <= p_crit + tol {
        return Ok(0.0);
    }
    // pad the upper end against rounding in the action at the exact root
    let (mut lo, mut hi) = (0.0f64, lam_hi * (1.0 + 1e-9) + tol);
    let (a_lo, a_hi) = (samples.action(lo), samples.action(hi));
    if !(a_lo <= pa && a_hi >= pa) {
        return Err(Error::Numerical(format!(
            "bisection bracket failure: action({lo}) = {a_lo}, action({hi}) = {a_hi}, |p| = {pa}"
        )));
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if samples.action(mid) < pa {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Tabulated `H̄(x, p) = -f(x) + H̄₁(p)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectiveHamiltonian1D {
    /// `H̄₁` on a symmetric momentum grid; even and convex.
    pub micro_table: FunctionTable1D,
    pub p_critical: f64,
    pub macro_potential: Potential,
}

impl EffectiveHamiltonian1D {
    /// Tabulates `H̄₁` on `n` nodes of `[-p_max, p_max]` (`n` odd keeps `p = 0`
    /// on the grid). Grid points are independent root-finds.
    pub fn build(spec: &ProblemSpec, p_max: f64, n: usize, tol: f64, exec: Exec) -> Result<Self> {
        let w = &spec.micro_potential;
        check_micro(w)?;
        if n < 3 || !(p_max > 0.0) {
            return Err(Error::Config(format!("degenerate momentum grid ±{p_max} x {n}")));
        }
        let shift = w.min_value;
        let samples = LinearPieces::new(w, shift)?;
        let dp = 2.0 * p_max / (n - 1) as f64;
        let mut vals: Vec<Result<f64>> = (0..n).map(|_| Ok(0.0)).collect();
        par::fill_indexed(exec, &mut vals, |i| {
            // evaluate on |p| so that the table is exactly even
            let pa = p_max - i.min(n - 1 - i) as f64 * dp;
            solve_level(&samples, pa, 0.5 * pa * pa + (w.max_value - shift), tol).map(|l| l - shift)
        });
        let values = vals.into_iter().collect::<Result<Vec<_>>>()?;
        let micro_table = FunctionTable1D::new(-p_max, p_max, values)?.with_flags(true, true, false);
        Ok(EffectiveHamiltonian1D {
            micro_table,
            p_critical: samples.action(0.0),
            macro_potential: spec.macro_potential.clone(),
        })
    }

    /// Table sized for solvers with speed bound `speed`: momenta up to
    /// `2·speed + 2`, spacing about `2e-3`.
    pub fn for_speed_bound(spec: &ProblemSpec, speed: f64, exec: Exec) -> Result<Self> {
        let p_max = 2.0 * speed + 2.0;
        let n = ((2.0 * p_max / 2e-3).ceil() as usize) | 1;
        Self::build(spec, p_max, n, 1e-10, exec)
    }

    /// `H̄₁(p)` by linear interpolation of the table.
    pub fn micro(&self, p: f64) -> Result<f64> {
        self.micro_table.eval(p)
    }
}

/// `H̄(x, p) = -f(x) + H̄₁(p)`.
pub fn effective_macro(eff: &EffectiveHamiltonian1D, x: f64, p: f64) -> Result<f64> {
    Ok(-eff.macro_potential.eval(x) + eff.micro(p)?)
}

/// `L̄₁ = (H̄₁)*` on `v_n` nodes of `[v_lo, v_hi]`. The full effective
/// Lagrangian is `L̄(x, v) = f(x) + L̄₁(v)`.
pub fn effective_lagrangian(
    eff: &EffectiveHamiltonian1D,
    v_lo: f64,
    v_hi: f64,
    v_n: usize,
) -> Result<FunctionTable1D> {
    let t = &eff.micro_table;
    if !t.is_convex(t.default_convex_tol()) {
        return Err(Error::Domain("effective Hamiltonian table is not convex".into()));
    }
    legendre_transform(t, v_lo, v_hi, v_n)
}

/// Discretization of the discounted cell problem used by [`ergodic_cell_check`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellCheckConfig {
    /// time step in units of the torus grid spacing
    pub dt_over_h: f64,
    pub max_iterations: usize,
}

impl Default for CellCheckConfig {
    fn default() -> Self {
        CellCheckConfig {
            dt_over_h: 8.0,
            max_iterations: 2000,
        }
    }
}

/// Independent estimate of `H̄₁(p)` from the discounted cell problem
/// `δ v + H₁(y, p + Dv) = 0` on 𝕋.
///
/// Its control form `v(y) = inf ∫₀^∞ e^{-δs} (W(γ) + |γ̇|²/2 - p·(-γ̇)) ds` is
/// discretized on `grid` nodes, solved to Bellman residual `< δ·1e-8` (plus rounding), and
/// `-δ · mean(v)` is returned.
pub fn ergodic_cell_check(w: &Potential, p: f64, delta: f64, grid: usize) -> Result<f64> {
    ergodic_cell_check_with(w, p, delta, grid, CellCheckConfig::default(), Exec::default())
}

pub fn ergodic_cell_check_with(
    w: &Potential,
    p: f64,
    delta: f64,
    grid: usize,
    cfg: CellCheckConfig,
    exec: Exec,
) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Config(format!("discount δ must lie in (0, 1), got {delta}")));
    }
    if grid < 64 {
        return Err(Error::Config(format!("cell grid must have at least 64 nodes, got {grid}")));
    }
    let h = 1.0 / grid as f64;
    let dt = cfg.dt_over_h * h;
    let speed = 1.5 * (p * p + 2.0 * (w.max_value - w.min_value)).sqrt() + 0.5;
    let half_width = (speed * dt / h).ceil() as usize;
    // offset j moves y to y + j h, i.e. -γ̇ = -j h / dt
    let kern = Kernel::from_fn(half_width, |j| {
        let v = -(j as f64) * h / dt;
        dt * (0.5 * v * v - p * v)
    });
    let post: Vec<f64> = (0..grid).map(|i| dt * w.eval(i as f64 * h)).collect();
    let fp = dp::discounted_fixed_point(
        exec,
        &post,
        None,
        &kern,
        -delta * dt,
        Boundary::Periodic,
        cfg.max_iterations,
    )?;
    // values are O(1/δ); allow for rounding in the Bellman sums
    let scale = fp.values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let target = delta * 1e-8 + 1024.0 * f64::EPSILON * scale;
    if fp.residual >= target {
        return Err(Error::Numerical(format!(
            "cell problem residual {:e} above {target:e} after {} policy iterations",
            fp.residual, fp.iterations
        )));
    }
    let sat = fp
        .policy
        .iter()
        .filter(|&&j| j.unsigned_abs() as usize == half_width)
        .count();
    if sat > 0 {
        return Err(Error::Saturation(format!(
            "{sat} cell-problem nodes use the maximal velocity {speed}"
        )));
    }
    let mean = fp.values.iter().sum::<f64>() / grid as f64;
    Ok(-delta * mean)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{catalog, PotentialKind};

    fn tent() -> Potential {
        Potential::new(PotentialKind::Tent)
    }

    /// Closed form of `∫₀¹ √(2(λ + 1/2 - |y|))` for the tent.
    fn tent_action(l: f64) -> f64 {
        4.0 * 2f64.sqrt() / 3.0 * ((l + 0.5).powf(1.5) - l.powf(1.5))
    }

    #[test]
    fn tent_flat_piece_and_root() {
        assert_eq!(mechanical_effective(&tent(), 2.0 / 3.0, 1e-10).unwrap(), 0.0);
        assert_eq!(mechanical_effective(&tent(), 0.0, 1e-10).unwrap(), 0.0);
        let p = tent_action(0.5);
        assert!((p - 1.218_951_4).abs() < 1e-7);
        let l = mechanical_effective(&tent(), p, 1e-10).unwrap();
        assert!((l - 0.5).abs() < 1e-8, "λ = {l}");
        let l = mechanical_effective(&tent(), 1.218_951_4, 1e-10).unwrap();
        assert!((l - 0.5).abs() < 1e-5);
    }

    #[test]
    fn critical_momentum_of_tent() {
        let pc = critical_momentum(&tent()).unwrap();
        assert!((pc - 2.0 / 3.0).abs() < 1e-8, "{pc}");
        let pc = critical_momentum(&Potential::zero()).unwrap();
        assert_eq!(pc, 0.0);
    }

    #[test]
    fn branch_boundary_matches_critical_momentum() {
        let tol = 1e-9;
        let pc = critical_momentum(&tent()).unwrap();
        assert_eq!(mechanical_effective(&tent(), pc - 10.0 * tol, tol).unwrap(), 0.0);
        assert!(mechanical_effective(&tent(), pc + 10.0 * tol, tol).unwrap() > 0.0);
    }

    #[test]
    fn free_particle_reduces_to_kinetic_energy() {
        for p in [0.1, 0.5, 1.0, 2.5] {
            let l = mechanical_effective(&Potential::zero(), p, 1e-12).unwrap();
            assert!((l - 0.5 * p * p).abs() < 1e-11);
        }
    }

    #[test]
    fn negative_minimum_is_a_domain_error() {
        let w = Potential::constant(-1.0);
        assert!(matches!(mechanical_effective(&w, 1.0, 1e-8), Err(Error::Domain(_))));
    }

    #[test]
    fn positive_minimum_shifts_the_level() {
        let w = Potential::constant(0.25);
        let l = mechanical_effective(&w, 1.0, 1e-12).unwrap();
        assert!((l - (0.5 - 0.25)).abs() < 1e-11);
    }

    #[test]
    fn table_is_even_monotone_convex() {
        let spec = catalog("prop42").unwrap();
        let eff = EffectiveHamiltonian1D::build(&spec, 3.0, 301, 1e-10, Exec::Sequential).unwrap();
        let t = &eff.micro_table;
        let n = t.n_samples();
        for i in 0..n {
            assert_eq!(t.values[i], t.values[n - 1 - i]);
        }
        for i in n / 2..n - 1 {
            assert!(t.values[i + 1] >= t.values[i]);
        }
        assert!(t.is_convex(t.default_convex_tol()));
        for (p, v) in t.nodes().zip(&t.values) {
            if p.abs() <= 2.0 / 3.0 - 1e-9 {
                assert_eq!(*v, 0.0);
            }
        }
        assert_eq!(effective_macro(&eff, 0.0, 0.0).unwrap(), 0.0);
        assert!(matches!(effective_macro(&eff, 0.0, 5.0), Err(Error::Range(_))));
    }

    #[test]
    fn effective_macro_examples() {
        let spec = catalog("prop43_cauchy").unwrap();
        let eff = EffectiveHamiltonian1D::build(&spec, 3.0, 301, 1e-10, Exec::Sequential).unwrap();
        assert_eq!(effective_macro(&eff, 1.0, 0.0).unwrap(), -1.0);

        let free = catalog("free").unwrap();
        let eff = EffectiveHamiltonian1D::build(&free, 3.0, 301, 1e-12, Exec::Sequential).unwrap();
        for x in [-0.7, 0.0, 2.0] {
            for p in [-1.0, 0.3, 2.0] {
                let h = effective_macro(&eff, x, p).unwrap();
                assert!((h - 0.5 * p * p).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn effective_lagrangian_examples() {
        let spec = catalog("prop42").unwrap();
        let eff = EffectiveHamiltonian1D::build(&spec, 6.0, 1201, 1e-10, Exec::Sequential).unwrap();
        let lbar = effective_lagrangian(&eff, -2.0, 2.0, 401).unwrap();
        assert_eq!(lbar.eval(0.0).unwrap(), 0.0);
        assert!(lbar.values.iter().all(|&v| v >= 0.0));

        let free = catalog("free").unwrap();
        let eff = EffectiveHamiltonian1D::build(&free, 6.0, 1201, 1e-12, Exec::Sequential).unwrap();
        let lbar = effective_lagrangian(&eff, -2.0, 2.0, 401).unwrap();
        let tol = 0.5 * eff.micro_table.spacing().powi(2);
        for (v, l) in lbar.nodes().zip(&lbar.values) {
            assert!((l - 0.5 * v * v).abs() <= tol);
        }
    }

    #[test]
    fn cell_check_examples() {
        let v = ergodic_cell_check(&Potential::zero(), 1.0, 1e-3, 256).unwrap();
        assert!((v - 0.5).abs() < 5e-3, "{v}");
        let v = ergodic_cell_check(&tent(), 2.0 / 3.0, 1e-3, 256).unwrap();
        assert!(v.abs() < 5e-3, "{v}");
        let v = ergodic_cell_check(&tent(), 1.218_951_4, 1e-3, 256).unwrap();
        assert!((v - 0.5).abs() < 1e-2, "{v}");
    }

    #[test]
    fn cell_check_rejects_bad_parameters() {
        assert!(matches!(ergodic_cell_check(&tent(), 1.0, 1.5, 256), Err(Error::Config(_))));
        assert!(matches!(ergodic_cell_check(&tent(), 1.0, 1e-3, 32), Err(Error::Config(_))));
    }
}
