//! Viscosity solutions of the Cauchy and discounted static problems
//!
//! ```text
//! u_t + H(x, x/ε, u_x) = 0,  u(·, 0) = g        λu + H(x, x/ε, u_x) = 0
//! ```
//!
//! and of their effective counterparts with `H̄(x, p) = -f(x) + H̄₁(p)`.
//!
//! Two independent methods are provided. [`Method::LaxOleinikDp`] runs the
//! control formula on a grid: one time step is a windowed minimum over
//! reachable nodes, with velocities truncated at the speed bound `M` and the
//! potential integrated by the trapezoid rule along each segment.
//! [`Method::LaxFriedrichs`] is the explicit monotone finite-difference scheme
//! with dissipation `θ ≥ M`, evaluating the Hamiltonian only on slopes clamped
//! to `[-M, M]`.
//!
//! Cauchy runs only update the backward cone of the reporting window, so the
//! reported values equal those of the problem on the whole line. Static runs
//! truncate to `[-R, R]` and rely on the margin beyond the window.

use serde::{Deserialize, Serialize};

use crate::cost::{kinetic_kernel, potential_nodes, Kinetic, Slow};
use crate::dp::{self, Boundary, StepStats};
use crate::effective::EffectiveHamiltonian1D;
use crate::grid::{index_radius, Grid};
use crate::par::{self, Exec};
use crate::problem::ProblemSpec;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    LaxOleinikDp,
    LaxFriedrichs,
}

impl Method {
    pub fn id(self) -> &'static str {
        match self {
            Method::LaxOleinikDp => "lax_oleinik_dp",
            Method::LaxFriedrichs => "lax_friedrichs",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Spacing of the reporting grid and of the dynamic program.
    pub h: f64,
    /// Target time step of the dynamic program; shortened to divide the
    /// horizon (Cauchy) or to `1/(4λ)` (static).
    pub dt: f64,
    pub speed_bound: f64,
    /// Values are reported on `[-report_radius, report_radius]`.
    pub report_radius: f64,
    /// Optional explicit truncation radius; rejected if too small.
    pub domain_radius: Option<f64>,
    /// Lax–Friedrichs dissipation `θ`; defaults to the speed bound.
    pub lf_dissipation: Option<f64>,
    /// Lax–Friedrichs step as a fraction of the CFL limit `h/(2θ)`.
    pub lf_cfl: f64,
    /// The finite-difference grid is `h / lf_refine`.
    pub lf_refine: usize,
    /// Number of equally spaced report times in `(0, T]`.
    pub snapshots: usize,
    /// Largest tolerated fraction of node updates pinned at the speed bound.
    pub max_saturation: f64,
    /// Static problems: truncation margin beyond the report window.
    pub static_margin: f64,
    pub fixed_point_tol: f64,
    pub iteration_cap: usize,
    pub lf_sweep_cap: usize,
    pub exec: Exec,
}

impl SolverConfig {
    pub fn new(h: f64, dt: f64, speed_bound: f64) -> Self {
        SolverConfig {
            h,
            dt,
            speed_bound,
            report_radius: 0.25,
            domain_radius: None,
            lf_dissipation: None,
            lf_cfl: 1.0,
            lf_refine: 1,
            snapshots: 1,
            max_saturation: 0.01,
            static_margin: 2.0,
            fixed_point_tol: 1e-9,
            iteration_cap: 1000,
            lf_sweep_cap: 50_000_000,
            exec: Exec::default(),
        }
    }

    fn validate(&self) -> Result<()> {
        let pos = |v: f64, name: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be positive, got {v}")))
            }
        };
        pos(self.h, "h")?;
        pos(self.dt, "dt")?;
        pos(self.speed_bound, "speed_bound")?;
        pos(self.lf_cfl, "lf_cfl")?;
        pos(self.fixed_point_tol, "fixed_point_tol")?;
        if !(self.report_radius >= 0.0) {
            return Err(Error::Config("report_radius must be nonnegative".into()));
        }
        if self.lf_cfl > 1.0 {
            return Err(Error::Config(format!(
                "CFL violation: Lax–Friedrichs step {}×h/(2θ)",
                self.lf_cfl
            )));
        }
        if self.lf_refine == 0 || self.snapshots == 0 {
            return Err(Error::Config("lf_refine and snapshots must be at least 1".into()));
        }
        Ok(())
    }

    fn theta(&self) -> Result<f64> {
        let theta = self.lf_dissipation.unwrap_or(self.speed_bound);
        if !(theta >= self.speed_bound) {
            return Err(Error::Config(format!(
                "Lax–Friedrichs dissipation {theta} below the speed bound {}",
                self.speed_bound
            )));
        }
        Ok(theta)
    }
}

/// Grid resolution rules turning `(ε, t)` into a [`SolverConfig`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Resolution {
    /// Grid nodes per micro period: `h ≤ ε / points_per_period`.
    pub points_per_period: f64,
    pub dt_over_h: f64,
    /// Minimum number of dynamic-programming steps over the horizon.
    pub min_steps: usize,
    pub speed_bound: Option<f64>,
    pub report_radius: f64,
    pub lf_refine: usize,
    /// Largest spacing used for effective solves (`None`: same as multiscale).
    pub eff_h_max: Option<f64>,
}

impl Default for Resolution {
    fn default() -> Self {
        Resolution {
            points_per_period: 32.0,
            dt_over_h: 8.0,
            min_steps: 16,
            speed_bound: None,
            report_radius: 0.25,
            lf_refine: 1,
            eff_h_max: None,
        }
    }
}

impl Resolution {
    /// Multiscale Cauchy configuration: `h = ε / (points_per_period·2^k)` with
    /// the smallest `k` giving at least `min_steps` steps, so that every micro
    /// period spans a whole number of nodes.
    pub fn cauchy(&self, spec: &ProblemSpec, eps: f64, t: f64) -> SolverConfig {
        let mut h = eps / self.points_per_period;
        while h * self.dt_over_h * self.min_steps as f64 > t * (1.0 + 1e-12) {
            h *= 0.5;
        }
        self.config(spec, h)
    }

    /// Multiscale static configuration.
    pub fn stationary(&self, spec: &ProblemSpec, eps: f64) -> SolverConfig {
        self.config(spec, eps / self.points_per_period)
    }

    /// Effective counterpart of a multiscale configuration: same grid, or a
    /// coarser dyadic one when `eff_h_max` allows.
    pub fn effective(&self, ms: &SolverConfig) -> SolverConfig {
        let mut cfg = ms.clone();
        if let Some(cap) = self.eff_h_max {
            while cfg.h * 2.0 <= cap * (1.0 + 1e-12) {
                cfg.h *= 2.0;
                cfg.dt *= 2.0;
            }
        }
        cfg
    }

    /// Same rules with `h` and `dt` halved.
    pub fn refined(&self) -> Resolution {
        Resolution {
            points_per_period: 2.0 * self.points_per_period,
            min_steps: 2 * self.min_steps,
            eff_h_max: self.eff_h_max.map(|c| 0.5 * c),
            ..self.clone()
        }
    }

    fn config(&self, spec: &ProblemSpec, h: f64) -> SolverConfig {
        let m = self.speed_bound.unwrap_or_else(|| spec.default_speed_bound());
        let mut cfg = SolverConfig::new(h, self.dt_over_h * h, m);
        cfg.report_radius = self.report_radius;
        cfg.lf_refine = self.lf_refine;
        cfg
    }
}

/// Samples of a solution on the reporting window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueField {
    pub method: Method,
    pub grid: Grid,
    /// Cauchy snapshot times, starting with `0`; empty for static fields.
    pub times: Vec<f64>,
    pub lambda: Option<f64>,
    /// One row per snapshot (a single row for static fields).
    pub values: Vec<Vec<f64>>,
    pub dt: f64,
    pub steps: usize,
    pub saturated_fraction: f64,
}

impl ValueField {
    pub fn is_static(&self) -> bool {
        self.lambda.is_some()
    }

    pub fn final_slice(&self) -> &[f64] {
        self.values.last().expect("field without slices")
    }

    /// Final-slice value at `x` (linear interpolation between nodes).
    pub fn value_at(&self, x: f64) -> Result<f64> {
        self.grid.interpolate(self.final_slice(), x)
    }

    /// Largest `|u(x+h) - u(x)| / h` over all slices.
    pub fn max_slope(&self) -> f64 {
        self.values
            .iter()
            .flat_map(|row| row.windows(2).map(|w| (w[1] - w[0]).abs() / self.grid.h))
            .fold(0.0, f64::max)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().flatten().fold(0.0, |a, v| a.max(v.abs()))
    }

    /// Linear interpolation onto `grid`, slice by slice.
    pub fn resample(&self, grid: &Grid) -> Result<ValueField> {
        if self.grid.same_nodes(grid) {
            return Ok(self.clone());
        }
        let values = self
            .values
            .iter()
            .map(|row| grid.xs().iter().map(|&x| self.grid.interpolate(row, x)).collect())
            .collect::<Result<Vec<Vec<f64>>>>()?;
        Ok(ValueField {
            grid: *grid,
            values,
            ..self.clone()
        })
    }
}

/// `max |u1 - u2|` over the nodes with `x ∈ [lo, hi]` (all nodes when
/// `window` is `None`) and over all common snapshots.
pub fn sup_norm_error(u1: &ValueField, u2: &ValueField, window: Option<(f64, f64)>) -> Result<f64> {
    if !u1.grid.same_nodes(&u2.grid) {
        return Err(Error::GridMismatch(format!("{:?} vs {:?}", u1.grid, u2.grid)));
    }
    if u1.values.len() != u2.values.len()
        || u1.times.len() != u2.times.len()
        || u1.times.iter().zip(&u2.times).any(|(a, b)| (a - b).abs() > 1e-12 * (1.0 + a.abs()))
        || u1.lambda != u2.lambda
    {
        return Err(Error::GridMismatch("snapshot times differ".into()));
    }
    let (lo, hi) = window.unwrap_or((f64::NEG_INFINITY, f64::INFINITY));
    let mut err = 0.0f64;
    for (r1, r2) in u1.values.iter().zip(&u2.values) {
        for i in 0..u1.grid.n {
            let x = u1.grid.x(i);
            if x >= lo - 1e-12 && x <= hi + 1e-12 {
                err = err.max((r1[i] - r2[i]).abs());
            }
        }
    }
    Ok(err)
}

fn check_resolves(eps: f64, h: f64) -> Result<()> {
    if !(eps > 0.0) {
        return Err(Error::Config(format!("ε must be positive, got {eps}")));
    }
    if h > eps / 32.0 * (1.0 + 1e-12) {
        return Err(Error::Config(format!("h = {h} does not resolve ε = {eps} (need h ≤ ε/32)")));
    }
    Ok(())
}

fn kinetic_for(eff: Option<&EffectiveHamiltonian1D>, cfg: &SolverConfig) -> Result<Kinetic> {
    match eff {
        None => Ok(Kinetic::Quadratic),
        Some(e) => Kinetic::effective(e, cfg.speed_bound),
    }
}

/// `u^ε` of the multiscale Cauchy problem up to time `t_end`.
pub fn solve_cauchy_ms(
    spec: &ProblemSpec,
    eps: f64,
    t_end: f64,
    cfg: &SolverConfig,
    method: Method,
) -> Result<ValueField> {
    cfg.validate()?;
    check_resolves(eps, cfg.h)?;
    solve_cauchy(spec, Some(eps), &Kinetic::Quadratic, t_end, cfg, method)
}

/// `u` of the effective Cauchy problem up to time `t_end`.
pub fn solve_cauchy_eff(
    spec: &ProblemSpec,
    eff: &EffectiveHamiltonian1D,
    t_end: f64,
    cfg: &SolverConfig,
    method: Method,
) -> Result<ValueField> {
    cfg.validate()?;
    let kin = kinetic_for(Some(eff), cfg)?;
    solve_cauchy(spec, None, &kin, t_end, cfg, method)
}

/// `u^ε` of the discounted multiscale problem.
pub fn solve_static_ms(
    spec: &ProblemSpec,
    eps: f64,
    lambda: f64,
    cfg: &SolverConfig,
    method: Method,
) -> Result<ValueField> {
    cfg.validate()?;
    check_resolves(eps, cfg.h)?;
    solve_static(spec, Some(eps), &Kinetic::Quadratic, lambda, cfg, method)
}

/// `u` of the discounted effective problem.
pub fn solve_static_eff(
    spec: &ProblemSpec,
    eff: &EffectiveHamiltonian1D,
    lambda: f64,
    cfg: &SolverConfig,
    method: Method,
) -> Result<ValueField> {
    cfg.validate()?;
    let kin = kinetic_for(Some(eff), cfg)?;
    solve_static(spec, None, &kin, lambda, cfg, method)
}

fn solve_cauchy(
    spec: &ProblemSpec,
    eps: Option<f64>,
    kin: &Kinetic,
    t_end: f64,
    cfg: &SolverConfig,
    method: Method,
) -> Result<ValueField> {
    if !(t_end > 0.0) || !t_end.is_finite() {
        return Err(Error::Config(format!("horizon must be positive, got {t_end}")));
    }
    match method {
        Method::LaxOleinikDp => cauchy_dp(spec, eps, kin, t_end, cfg),
        Method::LaxFriedrichs => cauchy_lf(spec, eps, kin, t_end, cfg),
    }
}

fn solve_static(
    spec: &ProblemSpec,
    eps: Option<f64>,
    kin: &Kinetic,
    lambda: f64,
    cfg: &SolverConfig,
    method: Method,
) -> Result<ValueField> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::Config(format!("discount must be positive, got {lambda}")));
    }
    match method {
        Method::LaxOleinikDp => static_dp(spec, eps, kin, lambda, cfg),
        Method::LaxFriedrichs => static_lf(spec, eps, kin, lambda, cfg),
    }
}

/// Step count: at least `t/dt`, rounded up to a multiple of `snapshots`.
fn step_count(t_end: f64, dt: f64, snapshots: usize) -> usize {
    let n = ((t_end / dt) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    n.div_ceil(snapshots) * snapshots
}

fn check_domain(cfg: &SolverConfig, needed: f64) -> Result<()> {
    if let Some(r) = cfg.domain_radius {
        if r < needed * (1.0 - 1e-12) {
            return Err(Error::Config(format!(
                "domain radius {r} too small: the reporting window depends on [-{needed}, {needed}]"
            )));
        }
    }
    Ok(())
}

fn check_saturation(stats: StepStats, cfg: &SolverConfig) -> Result<f64> {
    let frac = stats.saturated as f64 / stats.updated.max(1) as f64;
    if frac > cfg.max_saturation {
        return Err(Error::Saturation(format!(
            "{:.2}% of updates pinned at speed bound {}; increase it",
            100.0 * frac,
            cfg.speed_bound
        )));
    }
    Ok(frac)
}

fn window(u: &[f64], center: usize, radius: usize, stride: usize) -> Vec<f64> {
    (0..=2 * radius)
        .map(|k| u[center - radius * stride + k * stride])
        .collect()
}

fn cauchy_dp(
    spec: &ProblemSpec,
    eps: Option<f64>,
    kin: &Kinetic,
    t_end: f64,
    cfg: &SolverConfig,
) -> Result<ValueField> {
    let exec = cfg.exec;
    let h = cfg.h;
    let steps = step_count(t_end, cfg.dt, cfg.snapshots);
    let dt = t_end / steps as f64;
    let w = index_radius(cfg.speed_bound * dt, h);
    if w == 0 {
        return Err(Error::Config(format!(
            "speed bound × dt = {} is below the grid spacing {h}",
            cfg.speed_bound * dt
        )));
    }
    let report = index_radius(cfg.report_radius, h);
    let m = report + steps * w;
    check_domain(cfg, m as f64 * h)?;
    let grid = Grid::centered(m, h);
    let kern = kinetic_kernel(kin, w, h, dt)?;
    let mut half = potential_nodes(spec, eps, Slow::Variable, &grid, exec);
    for p in half.iter_mut() {
        *p *= 0.5 * dt;
    }

    let mut u = vec![0.0; grid.n];
    par::fill_indexed(exec, &mut u, |i| spec.initial_data.eval(grid.x(i)));
    let mut tmp = vec![0.0; grid.n];
    let mut out = vec![0.0; grid.n];
    let every = steps / cfg.snapshots;
    let mut times = vec![0.0];
    let mut values = vec![window(&u, m, report, 1)];
    let mut stats = StepStats::default();

    for k in 0..steps {
        // backward cone of the reporting window
        let r_in = report + (steps - k) * w;
        let r_out = r_in - w;
        let (lo, hi) = (m - r_in, m + r_in + 1);
        {
            let (u, half) = (&u, &half);
            par::for_each_chunk(exec, &mut tmp[lo..hi], 4096, |start, c| {
                for (q, t) in c.iter_mut().enumerate() {
                    let i = lo + start + q;
                    *t = u[i] + half[i];
                }
            });
        }
        stats += dp::min_plus_step(exec, &tmp, &half, &kern, m - r_out, m + r_out + 1, &mut out);
        std::mem::swap(&mut u, &mut out);
        if (k + 1) % every == 0 {
            times.push(t_end * (k + 1) as f64 / steps as f64);
            values.push(window(&u, m, report, 1));
        }
    }
    let saturated_fraction = check_saturation(stats, cfg)?;
    Ok(ValueField {
        method: Method::LaxOleinikDp,
        grid: Grid::centered(report, h),
        times,
        lambda: None,
        values,
        dt,
        steps,
        saturated_fraction,
    })
}

/// One Lax–Friedrichs update of `out[lo..hi]` from `u`. The discount term
/// `λ·u` is included when `lambda > 0`.
#[allow(clippy::too_many_arguments)]
fn lf_update(
    exec: Exec,
    u: &[f64],
    pot: &[f64],
    kin: &Kinetic,
    hl: f64,
    dt: f64,
    theta: f64,
    m_bound: f64,
    lambda: f64,
    lo: usize,
    hi: usize,
    out: &mut [f64],
) -> f64 {
    let n = u.len();
    let inv2h = 0.5 / hl;
    let diffs = par::map_chunks(exec, &mut out[lo..hi], 4096, |start, c| {
        let mut d = 0.0f64;
        for (q, o) in c.iter_mut().enumerate() {
            let i = lo + start + q;
            let u0 = u[i];
            // ghost nodes: constant extension at the ends of the array
            let um = if i > 0 { u[i - 1] } else { u0 };
            let up = if i + 1 < n { u[i + 1] } else { u0 };
            let p = ((up - um) * inv2h).clamp(-m_bound, m_bound);
            let ham = -pot[i] + kin.hamiltonian(p);
            let visc = theta * (up - 2.0 * u0 + um) * inv2h;
            let v = u0 - dt * (lambda * u0 + ham - visc);
            d = d.max((v - u0).abs());
            *o = v;
        }
        d
    });
    diffs.into_iter().fold(0.0, f64::max)
}

fn cauchy_lf(
    spec: &ProblemSpec,
    eps: Option<f64>,
    kin: &Kinetic,
    t_end: f64,
    cfg: &SolverConfig,
) -> Result<ValueField> {
    let exec = cfg.exec;
    let theta = cfg.theta()?;
    let k = cfg.lf_refine;
    let hl = cfg.h / k as f64;
    let steps = step_count(t_end, cfg.lf_cfl * hl / (2.0 * theta), cfg.snapshots);
    let dt = t_end / steps as f64;
    let report = index_radius(cfg.report_radius, cfg.h);
    let rk = report * k;
    // the stencil reaches one node per step
    let m = rk + steps + 1;
    check_domain(cfg, m as f64 * hl)?;
    let grid = Grid::centered(m, hl);
    let pot = potential_nodes(spec, eps, Slow::Variable, &grid, exec);
    let mut u = vec![0.0; grid.n];
    par::fill_indexed(exec, &mut u, |i| spec.initial_data.eval(grid.x(i)));
    let mut out = u.clone();
    let every = steps / cfg.snapshots;
    let mut times = vec![0.0];
    let mut values = vec![window(&u, m, report, k)];
    for s in 0..steps {
        let r_out = rk + (steps - s - 1);
        lf_update(
            exec,
            &u,
            &pot,
            kin,
            hl,
            dt,
            theta,
            cfg.speed_bound,
            0.0,
            m - r_out,
            m + r_out + 1,
            &mut out,
        );
        std::mem::swap(&mut u, &mut out);
        if (s + 1) % every == 0 {
            times.push(t_end * (s + 1) as f64 / steps as f64);
            values.push(window(&u, m, report, k));
        }
    }
    Ok(ValueField {
        method: Method::LaxFriedrichs,
        grid: Grid::centered(report, cfg.h),
        times,
        lambda: None,
        values,
        dt,
        steps,
        saturated_fraction: 0.0,
    })
}

/// Truncation radius of a static run, in nodes of spacing `h`.
fn static_radius(cfg: &SolverConfig, report: usize, h: f64) -> Result<usize> {
    match cfg.domain_radius {
        Some(r) => {
            let m = index_radius(r, h);
            if m <= report {
                return Err(Error::Config(format!(
                    "domain radius {r} must exceed the report radius {}",
                    cfg.report_radius
                )));
            }
            Ok(m)
        }
        None => Ok(report + index_radius(cfg.static_margin, h).max(1)),
    }
}

fn static_dp(
    spec: &ProblemSpec,
    eps: Option<f64>,
    kin: &Kinetic,
    lambda: f64,
    cfg: &SolverConfig,
) -> Result<ValueField> {
    let exec = cfg.exec;
    let h = cfg.h;
    let dt = cfg.dt.min(0.25 / lambda);
    let w = index_radius(cfg.speed_bound * dt, h);
    if w == 0 {
        return Err(Error::Config(format!(
            "speed bound × dt = {} is below the grid spacing {h}",
            cfg.speed_bound * dt
        )));
    }
    let report = index_radius(cfg.report_radius, h);
    let m = static_radius(cfg, report, h)?;
    let grid = Grid::centered(m, h);
    let log_beta = -lambda * dt;
    // costs weighted by the discounted length of a step, ∫₀^dt e^{-λs} ds,
    // so that resting at a constant cost a gives exactly a/λ
    let tau = -log_beta.exp_m1() / lambda;
    let mut kern = kinetic_kernel(kin, w, h, dt)?;
    for c in kern.costs.iter_mut() {
        *c *= tau / dt;
    }
    let mut half = potential_nodes(spec, eps, Slow::Variable, &grid, exec);
    for p in half.iter_mut() {
        *p *= 0.5 * tau;
    }
    let fp = dp::discounted_fixed_point(exec, &half, Some(&half), &kern, log_beta, Boundary::Clamp, cfg.iteration_cap)?;
    let target = cfg.fixed_point_tol * (-log_beta.exp_m1());
    if fp.residual >= target {
        return Err(Error::Numerical(format!(
            "fixed-point residual {:e} above {target:e}",
            fp.residual
        )));
    }
    let saturated = fp.policy.iter().filter(|&&j| j.unsigned_abs() as usize == w).count();
    let saturated_fraction = check_saturation(
        StepStats {
            saturated,
            updated: grid.n,
        },
        cfg,
    )?;
    Ok(ValueField {
        method: Method::LaxOleinikDp,
        grid: Grid::centered(report, h),
        times: Vec::new(),
        lambda: Some(lambda),
        values: vec![window(&fp.values, m, report, 1)],
        dt,
        steps: fp.iterations,
        saturated_fraction,
    })
}

/// Pseudo-time marching of the Lax–Friedrichs scheme to its steady state.
fn static_lf(
    spec: &ProblemSpec,
    eps: Option<f64>,
    kin: &Kinetic,
    lambda: f64,
    cfg: &SolverConfig,
) -> Result<ValueField> {
    let exec = cfg.exec;
    let theta = cfg.theta()?;
    let k = cfg.lf_refine;
    let hl = cfg.h / k as f64;
    let report = index_radius(cfg.report_radius, cfg.h);
    let m = static_radius(cfg, report, cfg.h)? * k;
    let grid = Grid::centered(m, hl);
    let pot = potential_nodes(spec, eps, Slow::Variable, &grid, exec);
    let dt = cfg.lf_cfl * hl / (2.0 * theta);
    // a step changing u by at most `stop` leaves u within fixed_point_tol of
    // the steady state, by the contraction factor 1 - λ·dt
    let stop = cfg.fixed_point_tol * lambda * dt;
    let mut u = vec![0.0; grid.n];
    let mut out = u.clone();
    for sweep in 1..=cfg.lf_sweep_cap {
        let d = lf_update(
            exec,
            &u,
            &pot,
            kin,
            hl,
            dt,
            theta,
            cfg.speed_bound,
            lambda,
            0,
            grid.n,
            &mut out,
        );
        std::mem::swap(&mut u, &mut out);
        if d <= stop {
            return Ok(ValueField {
                method: Method::LaxFriedrichs,
                grid: Grid::centered(report, cfg.h),
                times: Vec::new(),
                lambda: Some(lambda),
                values: vec![window(&u, m, report, k)],
                dt,
                steps: sweep,
                saturated_fraction: 0.0,
            });
        }
    }
    Err(Error::Numerical(format!(
        "Lax–Friedrichs pseudo-time iteration did not settle within {} sweeps",
        cfg.lf_sweep_cap
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{catalog, Potential, PotentialKind};

    fn free_with(g: Potential) -> ProblemSpec {
        ProblemSpec::new("free_g", Potential::zero(), Potential::zero(), g).unwrap()
    }

    fn eff_for(spec: &ProblemSpec, m: f64) -> EffectiveHamiltonian1D {
        EffectiveHamiltonian1D::for_speed_bound(spec, m, Exec::Sequential).unwrap()
    }

    #[test]
    fn free_spec_with_zero_data_stays_zero() {
        let spec = catalog("free").unwrap();
        let cfg = Resolution::default().cauchy(&spec, 0.1, 1.0);
        for method in [Method::LaxOleinikDp, Method::LaxFriedrichs] {
            let u = solve_cauchy_ms(&spec, 0.1, 1.0, &cfg, method).unwrap();
            assert_eq!(u.sup_norm(), 0.0);
            let s = solve_static_ms(&spec, 0.1, 0.5, &cfg, method).unwrap();
            assert!(s.sup_norm() < 1e-8);
        }
    }

    #[test]
    fn hopf_lax_oracle_for_abs_data() {
        let spec = free_with(Potential::new(PotentialKind::Abs { slope: 1.0 }));
        let m = spec.default_speed_bound();
        let eff = eff_for(&spec, m);
        let mut cfg = SolverConfig::new(1.0 / 128.0, 1.0 / 16.0, m);
        cfg.report_radius = 1.0;
        let t = 0.5;
        let u = solve_cauchy_eff(&spec, &eff, t, &cfg, Method::LaxOleinikDp).unwrap();
        // brute-force Hopf–Lax over a fine grid of starting points
        for (i, &x) in u.grid.xs().iter().enumerate() {
            let mut best = f64::INFINITY;
            for k in -4000..=4000 {
                let y = k as f64 * 1e-3;
                best = best.min(y.abs() + (x - y).powi(2) / (2.0 * t));
            }
            let got = u.final_slice()[i];
            assert!((got - best).abs() < 2e-3, "x = {x}: {got} vs {best}");
        }
        // the monotone scheme converges at rate about √h across the smoothed kink
        let lf = solve_cauchy_eff(&spec, &eff, t, &cfg, Method::LaxFriedrichs).unwrap();
        let mut fine = cfg.clone();
        fine.lf_refine = 4;
        let lf_fine = solve_cauchy_eff(&spec, &eff, t, &fine, Method::LaxFriedrichs).unwrap();
        let e1 = sup_norm_error(&u, &lf, None).unwrap();
        let e4 = sup_norm_error(&u, &lf_fine, None).unwrap();
        assert!(e1 < 0.06 && e4 < 0.6 * e1, "{e1} {e4}");
    }

    #[test]
    fn initial_slice_is_g_and_slopes_are_bounded() {
        let spec = free_with(Potential::new(PotentialKind::Abs { slope: 1.0 }));
        let mut cfg = SolverConfig::new(1.0 / 64.0, 1.0 / 8.0, spec.default_speed_bound());
        cfg.snapshots = 4;
        let u = solve_cauchy_ms(&spec, 0.5, 1.0, &cfg, Method::LaxOleinikDp).unwrap();
        assert_eq!(u.times.len(), 5);
        for (i, &x) in u.grid.xs().iter().enumerate() {
            assert_eq!(u.values[0][i], x.abs());
        }
        assert!(u.max_slope() <= cfg.speed_bound + 1e-9);
    }

    #[test]
    fn prop43_lower_bound_at_origin() {
        let spec = catalog("prop43_cauchy").unwrap();
        let cfg = Resolution::default().cauchy(&spec, 0.1, 1.0);
        let u = solve_cauchy_ms(&spec, 0.1, 1.0, &cfg, Method::LaxOleinikDp).unwrap();
        assert!(u.value_at(0.0).unwrap() >= 0.05 - 1e-3);
        let eff = eff_for(&spec, cfg.speed_bound);
        let ue = solve_cauchy_eff(&spec, &eff, 1.0, &cfg, Method::LaxOleinikDp).unwrap();
        assert!(ue.value_at(0.0).unwrap().abs() < 1e-9);
        assert!(u.max_slope() <= cfg.speed_bound);
    }

    #[test]
    fn prop41_lower_bound_at_origin() {
        let spec = catalog("prop41").unwrap();
        let cfg = Resolution::default().cauchy(&spec, 0.1, 1.0);
        let u = solve_cauchy_ms(&spec, 0.1, 1.0, &cfg, Method::LaxOleinikDp).unwrap();
        assert!(u.value_at(0.0).unwrap() >= 2f64.sqrt() / 3.0 * 0.1 - 1e-3);
    }

    #[test]
    fn static_examples() {
        let spec = catalog("prop43_static").unwrap();
        let cfg = Resolution::default().stationary(&spec, 0.1);
        let lam = 0.5;
        let u = solve_static_ms(&spec, 0.1, lam, &cfg, Method::LaxOleinikDp).unwrap();
        assert!(u.value_at(0.0).unwrap() >= 0.1 - 1e-3);
        assert!(u.sup_norm() <= spec.max_abs_h0() / lam + 1e-9);
        let eff = eff_for(&spec, cfg.speed_bound);
        let ue = solve_static_eff(&spec, &eff, lam, &cfg, Method::LaxOleinikDp).unwrap();
        assert!(ue.value_at(0.0).unwrap().abs() < 1e-9);

        let a = 0.7;
        let flat = ProblemSpec::new("flat", Potential::constant(a), Potential::zero(), Potential::zero()).unwrap();
        let eff = eff_for(&flat, cfg.speed_bound);
        for method in [Method::LaxOleinikDp, Method::LaxFriedrichs] {
            let u = solve_static_eff(&flat, &eff, lam, &cfg, method).unwrap();
            for v in u.final_slice() {
                assert!((v - a / lam).abs() < 1e-6, "{v}");
            }
        }
    }

    #[test]
    fn doubling_the_static_domain_leaves_the_window_unchanged() {
        let spec = catalog("prop43_static").unwrap();
        let mut cfg = Resolution::default().stationary(&spec, 0.2);
        let a = solve_static_ms(&spec, 0.2, 0.25, &cfg, Method::LaxOleinikDp).unwrap();
        cfg.domain_radius = Some(2.0 * (cfg.report_radius + cfg.static_margin));
        let b = solve_static_ms(&spec, 0.2, 0.25, &cfg, Method::LaxOleinikDp).unwrap();
        assert!(sup_norm_error(&a, &b, None).unwrap() < 1e-9);
    }

    #[test]
    fn configuration_errors() {
        let spec = catalog("prop43_cauchy").unwrap();
        let cfg = SolverConfig::new(0.01, 0.08, 4.0);
        assert!(matches!(
            solve_cauchy_ms(&spec, 0.1, 1.0, &cfg, Method::LaxOleinikDp),
            Err(Error::Config(_))
        ));
        let mut cfg = Resolution::default().cauchy(&spec, 0.1, 1.0);
        cfg.lf_cfl = 1.5;
        assert!(matches!(
            solve_cauchy_ms(&spec, 0.1, 1.0, &cfg, Method::LaxFriedrichs),
            Err(Error::Config(_))
        ));
        let mut cfg = Resolution::default().cauchy(&spec, 0.1, 1.0);
        cfg.lf_dissipation = Some(1.0);
        assert!(solve_cauchy_ms(&spec, 0.1, 1.0, &cfg, Method::LaxFriedrichs).is_err());
        let mut cfg = Resolution::default().cauchy(&spec, 0.1, 1.0);
        cfg.domain_radius = Some(1.0);
        assert!(matches!(
            solve_cauchy_ms(&spec, 0.1, 1.0, &cfg, Method::LaxOleinikDp),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn too_small_speed_bound_saturates() {
        let spec = free_with(Potential::new(PotentialKind::Abs { slope: 2.0 }));
        let cfg = SolverConfig::new(1.0 / 64.0, 1.0 / 4.0, 0.5);
        assert!(matches!(
            solve_cauchy_ms(&spec, 0.5, 1.0, &cfg, Method::LaxOleinikDp),
            Err(Error::Saturation(_))
        ));
    }

    #[test]
    fn sup_norm_error_examples() {
        let spec = catalog("prop43_cauchy").unwrap();
        let cfg = Resolution::default().cauchy(&spec, 0.2, 1.0);
        let u = solve_cauchy_ms(&spec, 0.2, 1.0, &cfg, Method::LaxOleinikDp).unwrap();
        assert_eq!(sup_norm_error(&u, &u, None).unwrap(), 0.0);
        let mut v = u.clone();
        for row in v.values.iter_mut() {
            for x in row.iter_mut() {
                *x += 0.3;
            }
        }
        assert!((sup_norm_error(&u, &v, None).unwrap() - 0.3).abs() < 1e-12);
        let mut w = u.clone();
        w.grid.first -= 1;
        assert!(matches!(sup_norm_error(&u, &w, None), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn constant_shift_equivariance() {
        let g1 = Potential::new(PotentialKind::Abs { slope: 0.5 });
        let spec1 = ProblemSpec::new("a", Potential::zero(), Potential::new(PotentialKind::Tent), g1).unwrap();
        let cfg = Resolution::default().cauchy(&spec1, 0.25, 0.5);
        let u1 = solve_cauchy_ms(&spec1, 0.25, 0.5, &cfg, Method::LaxOleinikDp).unwrap();
        let table = crate::problem::FunctionTable1D::from_fn(-20.0, 20.0, 40001, |x| 0.5 * x.abs() + 1.25).unwrap();
        let spec2 = ProblemSpec::new("b", Potential::zero(), Potential::new(PotentialKind::Tent), Potential::table(table)).unwrap();
        let u2 = solve_cauchy_ms(&spec2, 0.25, 0.5, &cfg, Method::LaxOleinikDp).unwrap();
        for (a, b) in u1.final_slice().iter().zip(u2.final_slice()) {
            assert!((b - a - 1.25).abs() < 1e-12);
        }
    }

    #[test]
    fn sequential_and_parallel_fields_are_identical() {
        let spec = catalog("prop41").unwrap();
        let mut cfg = Resolution::default().cauchy(&spec, 0.2, 0.5);
        cfg.exec = Exec::Sequential;
        let a = solve_cauchy_ms(&spec, 0.2, 0.5, &cfg, Method::LaxOleinikDp).unwrap();
        let b_lf = solve_cauchy_ms(&spec, 0.2, 0.5, &cfg, Method::LaxFriedrichs).unwrap();
        cfg.exec = Exec::Parallel;
        let b = solve_cauchy_ms(&spec, 0.2, 0.5, &cfg, Method::LaxOleinikDp).unwrap();
        let a_lf = solve_cauchy_ms(&spec, 0.2, 0.5, &cfg, Method::LaxFriedrichs).unwrap();
        assert_eq!(a, b);
        assert_eq!(a_lf, b_lf);
    }
}
