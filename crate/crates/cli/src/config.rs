//! Experiment configuration: one TOML file describes one reproducible run.
//!
//! ```toml
//! spec = "prop43_cauchy"        # catalog name, or an inline [problem] table
//! eps = [0.2, 0.1, 0.05]
//! t = [1.0]
//!
//! [grid]                        # solver resolution, all keys optional
//! points_per_period = 32.0      # h = ε / points_per_period, at least 32
//! dt_over_h = 8.0
//!
//! [tolerances]
//! band = 4.0
//! tol_policy = "cross"
//! ```
//!
//! Unknown keys are rejected. Parse errors carry the line and column of the
//! offending key; validation errors name the key.

use std::fmt;
use std::path::Path;

use hjlab::metric::MetricQuery;
use hjlab::problem::{catalog, ProblemSpec};
use hjlab::rates::{SweepConfig, TolPolicy};
use hjlab::solvers::{Method, Resolution};
use hjlab::verify::{AcceptanceConfig, ACCEPTANCE_IDS};
use hjlab::Exec;
use serde::{Deserialize, Serialize};

/// Smallest number of grid nodes per micro period the solvers accept.
pub const MIN_POINTS_PER_PERIOD: f64 = 32.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Target {
    SolveCauchy,
    SolveStatic,
    Effective,
    Metric,
    Rates,
    VerifyAll,
}

impl Target {
    pub fn id(self) -> &'static str {
        match self {
            Target::SolveCauchy => "solve-cauchy",
            Target::SolveStatic => "solve-static",
            Target::Effective => "effective",
            Target::Metric => "metric",
            Target::Rates => "rates",
            Target::VerifyAll => "verify-all",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Subcommand this file is meant for; checked against the invoked one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<Target>,
    /// Catalog problem name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<String>,
    #[serde(default = "default_method")]
    pub method: Method,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub eps: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub t: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub lambda: Vec<f64>,
    /// Inline problem, instead of `spec`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem: Option<ProblemSpec>,
    #[serde(default)]
    pub grid: Resolution,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub output: OutputParams,
    #[serde(default)]
    pub effective: EffectiveParams,
    #[serde(default)]
    pub metric: MetricParams,
    #[serde(default)]
    pub verify: VerifyParams,
}

fn default_method() -> Method {
    Method::LaxOleinikDp
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Allowed max/min ratio of the scaled errors across a sweep.
    pub band: f64,
    pub tol_scale: f64,
    pub tol_policy: TolPolicy,
    /// Also solve every cell with the other method.
    pub cross_check: bool,
    /// Also solve every cell at twice the resolution.
    pub refine: bool,
    /// Convexity tolerance of the `H̄₁` table; relative default when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol_convex: Option<f64>,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            band: 4.0,
            tol_scale: 1.0,
            tol_policy: TolPolicy::Cross,
            cross_check: true,
            refine: true,
            tol_convex: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputParams {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<std::path::PathBuf>,
    #[serde(default = "yes")]
    pub cache: bool,
}

impl Default for OutputParams {
    fn default() -> Self {
        OutputParams { dir: None, cache: true }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EffectiveParams {
    /// Table range `[-p_max, p_max]`; `2M + 2` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_max: Option<f64>,
    /// Table size; spacing about `2e-3` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    /// Range `[-v_max, v_max]` of the exported `L̄₁`; `M` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v_max: Option<f64>,
    /// Momenta at which `H̄₁` is evaluated exactly (not from the table).
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub p_eval: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricParams {
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub queries: Vec<MetricQuery>,
    /// Grid spacing of queries without `ε`.
    pub bar_h: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lemma: Option<LemmaParams>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scaling: Option<ScalingParams>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub audit: Option<AuditParams>,
}

impl Default for MetricParams {
    fn default() -> Self {
        MetricParams {
            queries: Vec::new(),
            bar_h: 1.0 / 64.0,
            lemma: None,
            scaling: None,
            audit: None,
        }
    }
}

/// `|m^ε_c(0, t, x, y) - m̄_c(0, t, x, y)|` over the `eps` list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LemmaParams {
    pub c: f64,
    pub t: f64,
    pub x: f64,
    pub y: f64,
    /// Optional bound on deviation/ε turning the report into a verdict.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constant: Option<f64>,
}

/// `m_c(0, 2t, 0, 2y) - 2 m_c(0, t, 0, y)` at `ε = 1` for every `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingParams {
    pub c: f64,
    pub t: Vec<f64>,
    pub y: f64,
}

/// Subadditivity `m(0, t, x, z) ≤ m(0, s, x, y) + m(s, t, y, z)` on a lattice
/// of `points³` endpoint triples in `[-radius, radius]`, at the first `ε`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditParams {
    pub points: usize,
    pub radius: f64,
    pub t: f64,
}

impl Default for AuditParams {
    fn default() -> Self {
        AuditParams {
            points: 3,
            radius: 0.2,
            t: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyParams {
    pub checks: Vec<String>,
    pub lemma_oracle_tol: f64,
    pub cell_check_tol: f64,
    pub scaling_growth: f64,
    pub comparison_pairs: usize,
    pub seed: u64,
}

impl Default for VerifyParams {
    fn default() -> Self {
        let a = AcceptanceConfig::default();
        VerifyParams {
            checks: ACCEPTANCE_IDS.iter().map(|s| s.to_string()).collect(),
            lemma_oracle_tol: a.lemma_oracle_tol,
            cell_check_tol: a.cell_check_tol,
            scaling_growth: a.scaling_growth,
            comparison_pairs: a.comparison_pairs,
            seed: a.seed,
        }
    }
}

/// A validation failure, naming the key at fault.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.key.is_empty() {
            write!(f, "{}", self.message)
        } else {
            write!(f, "key `{}`: {}", self.key, self.message)
        }
    }
}

impl std::error::Error for ConfigError {}

fn bad(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError {
        key: key.into(),
        message: message.into(),
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            target: None,
            spec: None,
            method: default_method(),
            eps: Vec::new(),
            t: Vec::new(),
            lambda: Vec::new(),
            problem: None,
            grid: Resolution::default(),
            tolerances: Tolerances::default(),
            output: OutputParams::default(),
            effective: EffectiveParams::default(),
            metric: MetricParams::default(),
            verify: VerifyParams::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| bad("", e.to_string().trim_end().to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| bad("", format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|mut e| {
            e.message = format!("{}: {}", path.display(), e.message);
            e
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes to TOML")
    }

    /// Serialization hashed for cache keys: output location and the cache
    /// toggle do not influence results and are left out.
    pub fn canonical(&self, target: Target) -> String {
        let mut c = self.clone();
        c.target = Some(target);
        c.output = OutputParams::default();
        c.to_toml()
    }

    /// The problem this configuration names, inline or from the catalog.
    pub fn problem_spec(&self) -> Result<ProblemSpec, ConfigError> {
        match (&self.spec, &self.problem) {
            (Some(_), Some(_)) => Err(bad("spec", "give either `spec` or `[problem]`, not both")),
            (None, None) => Err(bad("spec", "missing: name a catalog problem or give a [problem] table")),
            (Some(name), None) => catalog(name).map_err(|e| bad("spec", e.to_string())),
            (None, Some(p)) => ProblemSpec::new(
                p.name.clone(),
                p.macro_potential.clone(),
                p.micro_potential.clone(),
                p.initial_data.clone(),
            )
            .map_err(|e| bad("problem", e.to_string())),
        }
    }

    pub fn validate(&self, target: Target) -> Result<(), ConfigError> {
        if let Some(t) = self.target {
            if t != target {
                return Err(bad(
                    "target",
                    format!("file is for `{}` but `{}` was invoked", t.id(), target.id()),
                ));
            }
        }
        self.validate_numbers()?;
        if target == Target::VerifyAll {
            for id in &self.verify.checks {
                if !ACCEPTANCE_IDS.contains(&id.as_str()) {
                    return Err(bad("verify.checks", format!("unknown check '{id}' (known: {ACCEPTANCE_IDS:?})")));
                }
            }
            if self.verify.checks.is_empty() {
                return Err(bad("verify.checks", "list is empty"));
            }
            return Ok(());
        }
        self.problem_spec()?;
        let needs_eps = matches!(target, Target::SolveCauchy | Target::SolveStatic | Target::Rates)
            || (target == Target::Metric && (self.metric.lemma.is_some() || self.metric.audit.is_some()));
        if needs_eps && self.eps.is_empty() {
            return Err(bad("eps", "list is empty"));
        }
        match target {
            Target::SolveCauchy if self.t.is_empty() => Err(bad("t", "list is empty")),
            Target::SolveStatic if self.lambda.is_empty() => Err(bad("lambda", "list is empty")),
            Target::Rates if self.t.is_empty() && self.lambda.is_empty() => {
                Err(bad("t", "give a `t` or a `lambda` list"))
            }
            Target::Metric
                if self.metric.queries.is_empty()
                    && self.metric.lemma.is_none()
                    && self.metric.scaling.is_none()
                    && self.metric.audit.is_none() =>
            {
                Err(bad("metric", "nothing to compute: add queries, lemma, scaling or audit"))
            }
            _ => Ok(()),
        }
    }

    fn validate_numbers(&self) -> Result<(), ConfigError> {
        let positive = |key: &str, v: &[f64]| {
            v.iter()
                .find(|x| !(**x > 0.0 && x.is_finite()))
                .map_or(Ok(()), |x| Err(bad(key, format!("entries must be positive and finite, got {x}"))))
        };
        positive("eps", &self.eps)?;
        positive("t", &self.t)?;
        positive("lambda", &self.lambda)?;
        let g = &self.grid;
        if !(g.points_per_period >= MIN_POINTS_PER_PERIOD) || !g.points_per_period.is_finite() {
            return Err(bad(
                "grid.points_per_period",
                format!(
                    "must be at least {MIN_POINTS_PER_PERIOD} (h ≤ ε/{MIN_POINTS_PER_PERIOD}), got {}",
                    g.points_per_period
                ),
            ));
        }
        if !(g.dt_over_h > 0.0) || !g.dt_over_h.is_finite() {
            return Err(bad("grid.dt_over_h", format!("must be positive, got {}", g.dt_over_h)));
        }
        if !(g.report_radius >= 0.0) || !g.report_radius.is_finite() {
            return Err(bad("grid.report_radius", format!("must be nonnegative, got {}", g.report_radius)));
        }
        if g.lf_refine == 0 {
            return Err(bad("grid.lf_refine", "must be at least 1"));
        }
        if let Some(m) = g.speed_bound {
            if !(m > 0.0) || !m.is_finite() {
                return Err(bad("grid.speed_bound", format!("must be positive, got {m}")));
            }
        }
        let tol = &self.tolerances;
        if !(tol.band >= 1.0) || !tol.band.is_finite() {
            return Err(bad("tolerances.band", format!("must be at least 1, got {}", tol.band)));
        }
        if !(tol.tol_scale >= 0.0) || !tol.tol_scale.is_finite() {
            return Err(bad("tolerances.tol_scale", format!("must be nonnegative, got {}", tol.tol_scale)));
        }
        if !(self.metric.bar_h > 0.0) {
            return Err(bad("metric.bar_h", format!("must be positive, got {}", self.metric.bar_h)));
        }
        if let Some(a) = &self.metric.audit {
            if a.points == 0 || !(a.t > 0.0) || !(a.radius >= 0.0) {
                return Err(bad("metric.audit", "needs points ≥ 1, t > 0 and radius ≥ 0"));
            }
        }
        Ok(())
    }

    pub fn exec(&self, workers: Option<usize>) -> Exec {
        match workers {
            Some(1) => Exec::Sequential,
            _ => Exec::Parallel,
        }
    }

    pub fn sweep(&self, exec: Exec) -> SweepConfig {
        let other = match self.method {
            Method::LaxOleinikDp => Method::LaxFriedrichs,
            Method::LaxFriedrichs => Method::LaxOleinikDp,
        };
        SweepConfig {
            resolution: self.grid.clone(),
            method: self.method,
            cross_check: self.tolerances.cross_check.then_some(other),
            refine: self.tolerances.refine,
            band: self.tolerances.band,
            tol_scale: self.tolerances.tol_scale,
            tol_policy: self.tolerances.tol_policy,
            exec,
        }
    }

    pub fn acceptance(&self, exec: Exec) -> AcceptanceConfig {
        let v = &self.verify;
        AcceptanceConfig {
            sweep: self.sweep(exec),
            lemma_oracle_tol: v.lemma_oracle_tol,
            cell_check_tol: v.cell_check_tol,
            scaling_growth: v.scaling_growth,
            comparison_pairs: v.comparison_pairs,
            seed: v.seed,
            ..AcceptanceConfig::default()
        }
    }
}
