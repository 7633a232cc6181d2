//! Running costs shared by the metric and solver dynamic programs.
//!
//! Every problem in the crate has a running cost `P(x) + K(v)`: a potential
//! `P` (multiscale `f(x) + W(x/ε)`, effective `f(x)`, or either with the slow
//! variable frozen) plus a kinetic term `K` (`v²/2`, or the effective `L̄₁`).

use crate::effective::{effective_lagrangian, EffectiveHamiltonian1D};
use crate::grid::Grid;
use crate::par::{self, Exec};
use crate::problem::{FunctionTable1D, ProblemSpec};
use crate::Result;

/// Velocity part of the running cost together with its Hamiltonian.
#[derive(Debug, Clone)]
pub enum Kinetic {
    Quadratic,
    Effective {
        hbar: FunctionTable1D,
        lbar: FunctionTable1D,
    },
}

impl Kinetic {
    /// `L̄₁` tabulated on `|v| ≤ speed_bound` (slightly padded).
    pub fn effective(eff: &EffectiveHamiltonian1D, speed_bound: f64) -> Result<Self> {
        let vmax = speed_bound * 1.001 + 1e-9;
        let n = (((2.0 * vmax / 1e-3).ceil() as usize) | 1).max(101);
        let lbar = effective_lagrangian(eff, -vmax, vmax, n)?;
        Ok(Kinetic::Effective {
            hbar: eff.micro_table.clone(),
            lbar,
        })
    }

    pub fn lagrangian(&self, v: f64) -> Result<f64> {
        match self {
            Kinetic::Quadratic => Ok(0.5 * v * v),
            Kinetic::Effective { lbar, .. } => lbar.eval(v),
        }
    }

    /// Hamiltonian at momentum `p`; effective tables extend constantly past
    /// their range, which callers avoid by clamping `p` first.
    pub fn hamiltonian(&self, p: f64) -> f64 {
        match self {
            Kinetic::Quadratic => 0.5 * p * p,
            Kinetic::Effective { hbar, .. } => hbar.eval_clamped(p),
        }
    }
}

/// Slow-variable handling of the potential.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Slow {
    Variable,
    Frozen(f64),
}

/// `P` at every node of `grid`: `f(x) + W(x/ε)` when `eps` is given, `f(x)`
/// otherwise, with `x` replaced by `c` in `f` when frozen.
pub fn potential_nodes(spec: &ProblemSpec, eps: Option<f64>, slow: Slow, grid: &Grid, exec: Exec) -> Vec<f64> {
    let mut out = vec![0.0; grid.n];
    let frozen = match slow {
        Slow::Frozen(c) => Some(spec.macro_potential.eval(c)),
        Slow::Variable => None,
    };
    par::fill_indexed(exec, &mut out, |i| {
        let x = grid.x(i);
        let f = frozen.unwrap_or_else(|| spec.macro_potential.eval(x));
        match eps {
            Some(e) => f + spec.micro_potential.eval(x / e),
            None => f,
        }
    });
    out
}

/// Samples `dt·K(-j·h/dt)` for offsets `|j| ≤ w`: moving `j` nodes forward in
/// the stored direction corresponds to the velocity `-j·h/dt` of the curve.
pub fn kinetic_kernel(kin: &Kinetic, w: usize, h: f64, dt: f64) -> Result<crate::dp::Kernel> {
    let wi = w as isize;
    let costs = (-wi..=wi)
        .map(|j| kin.lagrangian(-(j as f64) * h / dt).map(|l| dt * l))
        .collect::<Result<Vec<_>>>()?;
    Ok(crate::dp::Kernel { half_width: w, costs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::catalog;

    #[test]
    fn effective_kinetic_of_free_spec_is_quadratic() {
        let spec = catalog("free").unwrap();
        let eff = EffectiveHamiltonian1D::for_speed_bound(&spec, 3.0, Exec::Sequential).unwrap();
        let k = Kinetic::effective(&eff, 3.0).unwrap();
        for v in [-3.0, -1.1, 0.0, 0.4, 2.9] {
            assert!((k.lagrangian(v).unwrap() - 0.5 * v * v).abs() < 1e-5);
            assert!((k.hamiltonian(v) - 0.5 * v * v).abs() < 1e-5);
        }
    }

    #[test]
    fn frozen_potential_uses_c() {
        let spec = catalog("prop43_cauchy").unwrap();
        let g = Grid::symmetric(1.0, 0.25).unwrap();
        let p = potential_nodes(&spec, Some(0.5), Slow::Frozen(0.5), &g, Exec::Sequential);
        for (i, v) in p.iter().enumerate() {
            let x = g.x(i);
            assert!((v - (0.5 + spec.micro_potential.eval(x / 0.5))).abs() < 1e-15);
        }
        let q = potential_nodes(&spec, None, Slow::Variable, &g, Exec::Sequential);
        assert_eq!(q[0], 1.0);
        assert_eq!(q[4], 0.0);
    }
}
