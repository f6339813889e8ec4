//! Experiment configuration: strict JSON schema plus scale-dependent defaults.
//!
//! A configuration file is a single JSON object.  Only `experiment` is
//! mandatory; every other field has a default that depends on the experiment
//! kind and on the scale (desk scale by default, full figure scale with
//! `--paper-scale`).  Unknown keys, malformed values, and out-of-range values
//! are all hard errors with field context, so a typo cannot silently fall
//! back to a default.
//!
//! ```json
//! {"experiment": "gaussian_sweep", "d": 10, "n": [11],
//!  "methods": ["svgd_linear"], "trials": 1, "seed": 7}
//! ```

use std::fmt;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use steinmatch_core::svgd::{BandwidthRefresh, StepScheduler, SvgdConfig};

/// Which target family and parameter grid an experiment walks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    /// Standard Gaussian, sweep over particle counts.
    GaussianSweep,
    /// Anisotropic Gaussians, sweep over covariance condition numbers.
    ConditionSweep,
    /// Gaussian mixtures, sweep over the component-mean spread `alpha`.
    GmmAlphaSweep,
    /// Gaussian–Bernoulli restricted Boltzmann machines.
    Rbm,
    /// Random cosine-feature kernels over a feature-count grid with `n = m`.
    KsdDecay,
}

impl ExperimentKind {
    /// Stable identifier used in CSV output and seed derivation.
    pub fn id(self) -> &'static str {
        match self {
            ExperimentKind::GaussianSweep => "gaussian_sweep",
            ExperimentKind::ConditionSweep => "condition_sweep",
            ExperimentKind::GmmAlphaSweep => "gmm_alpha_sweep",
            ExperimentKind::Rbm => "rbm",
            ExperimentKind::KsdDecay => "ksd_decay",
        }
    }
}

/// How a particle set is produced for one row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Exact i.i.d. samples from the target.
    MonteCarlo,
    /// Particle iteration with the RBF kernel, median bandwidth.
    SvgdRbf,
    /// Particle iteration with the linear kernel `x^T y + 1`.
    SvgdLinear,
    /// Linear kernel plus `n - d - 1` random cosine features.
    SvgdLinearRandom,
    /// Pure random cosine-feature kernel (`m` features).
    SvgdRandomFeature,
}

impl Method {
    /// Stable identifier used in CSV output and seed derivation.
    pub fn id(self) -> &'static str {
        match self {
            Method::MonteCarlo => "monte_carlo",
            Method::SvgdRbf => "svgd_rbf",
            Method::SvgdLinear => "svgd_linear",
            Method::SvgdLinearRandom => "svgd_linear_random",
            Method::SvgdRandomFeature => "svgd_random_feature",
        }
    }

    /// Fixed per-method index mixed into derived seeds.
    pub fn index(self) -> u64 {
        match self {
            Method::MonteCarlo => 0,
            Method::SvgdRbf => 1,
            Method::SvgdLinear => 2,
            Method::SvgdLinearRandom => 3,
            Method::SvgdRandomFeature => 4,
        }
    }
}

/// Step-size rule for the transport phase.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchedulerChoice {
    Adagrad,
    Fixed,
}

/// Solver knobs shared by every `svgd_*` method in one experiment.
///
/// Each run has two phases.  The *transport* phase uses the configured
/// scheduler (adaptive by default) to carry particles from the diffuse
/// initialization into the target's bulk; adaptive steps stall at a residual
/// floor of roughly the step size, so a *polish* phase with plain small fixed
/// steps and a frozen bandwidth then contracts the residual toward
/// `residual_tol`.  Either phase halves its step and restarts (up to three
/// times, deterministically) if the iteration diverges.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverSettings {
    pub step_size: f64,
    pub max_iters: usize,
    pub residual_tol: f64,
    pub scheduler: SchedulerChoice,
    pub fudge: f64,
    pub momentum: f64,
    pub polish_step_size: f64,
    pub polish_max_iters: usize,
    pub rank_rel_tol: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            step_size: 0.05,
            max_iters: 5000,
            residual_tol: 1e-7,
            scheduler: SchedulerChoice::Adagrad,
            fudge: 1e-6,
            momentum: 0.9,
            polish_step_size: 0.01,
            polish_max_iters: 100_000,
            rank_rel_tol: 1e-10,
        }
    }
}

impl SolverSettings {
    /// Core-loop configuration for the transport phase.
    pub fn transport_config(&self) -> SvgdConfig {
        SvgdConfig {
            step_size: self.step_size,
            max_iters: self.max_iters,
            residual_tol: self.residual_tol,
            scheduler: match self.scheduler {
                SchedulerChoice::Adagrad => StepScheduler::AdaGrad {
                    fudge: self.fudge,
                    momentum: self.momentum,
                },
                SchedulerChoice::Fixed => StepScheduler::Fixed,
            },
            seed: 0,
            rank_rel_tol: self.rank_rel_tol,
            bandwidth_refresh: BandwidthRefresh::KernelDefault,
        }
    }

    /// Core-loop configuration for the polish phase (fixed steps, frozen
    /// bandwidth).
    pub fn polish_config(&self) -> SvgdConfig {
        SvgdConfig {
            step_size: self.polish_step_size,
            max_iters: self.polish_max_iters,
            residual_tol: self.residual_tol,
            scheduler: StepScheduler::Fixed,
            seed: 0,
            rank_rel_tol: self.rank_rel_tol,
            bandwidth_refresh: BandwidthRefresh::Frozen,
        }
    }
}

/// Fully resolved experiment description.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub d: usize,
    /// Particle counts.  For `ksd_decay` this mirrors `m` (one grid, `n = m`).
    pub n: Vec<usize>,
    /// Feature counts (only `ksd_decay` walks this grid).
    pub m: Vec<usize>,
    pub methods: Vec<Method>,
    pub trials: usize,
    pub seed: u64,
    /// Covariance condition numbers (`condition_sweep` only).
    pub conditions: Vec<f64>,
    /// Component-mean spreads (`gmm_alpha_sweep` only).
    pub alphas: Vec<f64>,
    /// Mixture component count (`gmm_alpha_sweep` only).
    pub components: usize,
    /// Hidden dimension (`rbm` only).
    pub d_hidden: usize,
    /// Coupling magnitude (`rbm` only).
    pub weight_magnitude: f64,
    /// Exact-sample reference size for the discrepancy column; 0 disables.
    pub mmd_reference: usize,
    /// Output directory (overridable with `--out`).
    pub out: PathBuf,
    pub solver: SolverSettings,
}

/// Configuration failures, each carrying enough context to fix the file.
#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config {path}: {detail}")]
    Parse { path: PathBuf, detail: String },
    #[error("config field `{field}`: {detail}")]
    Invalid { field: &'static str, detail: String },
}

fn invalid(field: &'static str, detail: impl fmt::Display) -> ConfigError {
    ConfigError::Invalid {
        field,
        detail: detail.to_string(),
    }
}

/// Raw JSON shape.  Everything optional except the kind; unknown keys are
/// rejected so misspelled fields cannot silently revert to defaults.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    experiment: ExperimentKind,
    d: Option<usize>,
    n: Option<Vec<usize>>,
    m: Option<Vec<usize>>,
    methods: Option<Vec<Method>>,
    trials: Option<usize>,
    seed: Option<u64>,
    conditions: Option<Vec<f64>>,
    alphas: Option<Vec<f64>>,
    components: Option<usize>,
    d_hidden: Option<usize>,
    weight_magnitude: Option<f64>,
    mmd_reference: Option<usize>,
    out: Option<PathBuf>,
    svgd: Option<RawSolver>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSolver {
    step_size: Option<f64>,
    max_iters: Option<usize>,
    residual_tol: Option<f64>,
    scheduler: Option<SchedulerChoice>,
    fudge: Option<f64>,
    momentum: Option<f64>,
    polish_step_size: Option<f64>,
    polish_max_iters: Option<usize>,
    rank_rel_tol: Option<f64>,
}

/// Grid defaults per experiment kind.  Desk scale keeps every run in
/// CI-friendly territory; paper scale restores the full-size grids
/// (dimension 100 Gaussians, 15-component mixtures, RBMs with 10 hidden
/// units).
struct KindDefaults {
    d: usize,
    n: Vec<usize>,
    m: Vec<usize>,
    methods: Vec<Method>,
    components: usize,
    d_hidden: usize,
}

fn kind_defaults(kind: ExperimentKind, paper_scale: bool) -> KindDefaults {
    let standard_methods = vec![
        Method::MonteCarlo,
        Method::SvgdRbf,
        Method::SvgdLinear,
        Method::SvgdLinearRandom,
    ];
    match (kind, paper_scale) {
        (ExperimentKind::GaussianSweep, false) => KindDefaults {
            d: 10,
            n: vec![5, 8, 11, 15, 22],
            m: vec![],
            methods: standard_methods,
            components: 5,
            d_hidden: 4,
        },
        (ExperimentKind::GaussianSweep, true) => KindDefaults {
            d: 100,
            n: vec![50, 80, 101, 150, 200],
            m: vec![],
            methods: standard_methods,
            components: 15,
            d_hidden: 10,
        },
        (ExperimentKind::ConditionSweep, false) => KindDefaults {
            d: 10,
            n: vec![25],
            m: vec![],
            methods: standard_methods,
            components: 5,
            d_hidden: 4,
        },
        (ExperimentKind::ConditionSweep, true) => KindDefaults {
            d: 100,
            n: vec![250],
            m: vec![],
            methods: standard_methods,
            components: 15,
            d_hidden: 10,
        },
        (ExperimentKind::GmmAlphaSweep, false) => KindDefaults {
            d: 2,
            n: vec![50],
            m: vec![],
            methods: standard_methods,
            components: 5,
            d_hidden: 4,
        },
        (ExperimentKind::GmmAlphaSweep, true) => KindDefaults {
            d: 10,
            n: vec![100],
            m: vec![],
            methods: standard_methods,
            components: 15,
            d_hidden: 10,
        },
        (ExperimentKind::Rbm, false) => KindDefaults {
            d: 10,
            n: vec![20, 50],
            m: vec![],
            methods: standard_methods,
            components: 5,
            d_hidden: 4,
        },
        (ExperimentKind::Rbm, true) => KindDefaults {
            d: 100,
            n: vec![20, 50, 100, 200],
            m: vec![],
            methods: standard_methods,
            components: 15,
            d_hidden: 10,
        },
        (ExperimentKind::KsdDecay, false) => KindDefaults {
            d: 2,
            n: vec![],
            m: vec![8, 16, 32, 64, 128],
            methods: vec![Method::SvgdRandomFeature],
            components: 5,
            d_hidden: 4,
        },
        (ExperimentKind::KsdDecay, true) => KindDefaults {
            d: 2,
            n: vec![],
            m: vec![16, 32, 64, 128, 256, 512],
            methods: vec![Method::SvgdRandomFeature],
            components: 15,
            d_hidden: 10,
        },
    }
}

fn check_grid_usize(field: &'static str, values: &[usize]) -> Result<(), ConfigError> {
    if values.is_empty() {
        return Err(invalid(field, "must list at least one value"));
    }
    if values.contains(&0) {
        return Err(invalid(field, "values must be positive"));
    }
    if values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid(
            field,
            "values must be strictly increasing (sorted, no duplicates)",
        ));
    }
    Ok(())
}

fn check_absent<T>(
    kind: ExperimentKind,
    field: &'static str,
    value: &Option<T>,
) -> Result<(), ConfigError> {
    if value.is_some() {
        return Err(invalid(
            field,
            format!("not applicable to experiment `{}`", kind.id()),
        ));
    }
    Ok(())
}

fn resolve(raw: RawConfig, paper_scale: bool) -> Result<ExperimentConfig, ConfigError> {
    let kind = raw.experiment;
    let defaults = kind_defaults(kind, paper_scale);

    match kind {
        ExperimentKind::ConditionSweep => {
            check_absent(kind, "alphas", &raw.alphas)?;
            check_absent(kind, "components", &raw.components)?;
            check_absent(kind, "d_hidden", &raw.d_hidden)?;
            check_absent(kind, "weight_magnitude", &raw.weight_magnitude)?;
            check_absent(kind, "m", &raw.m)?;
        }
        ExperimentKind::GmmAlphaSweep => {
            check_absent(kind, "conditions", &raw.conditions)?;
            check_absent(kind, "d_hidden", &raw.d_hidden)?;
            check_absent(kind, "weight_magnitude", &raw.weight_magnitude)?;
            check_absent(kind, "m", &raw.m)?;
        }
        ExperimentKind::Rbm => {
            check_absent(kind, "conditions", &raw.conditions)?;
            check_absent(kind, "alphas", &raw.alphas)?;
            check_absent(kind, "components", &raw.components)?;
            check_absent(kind, "m", &raw.m)?;
        }
        ExperimentKind::GaussianSweep => {
            check_absent(kind, "conditions", &raw.conditions)?;
            check_absent(kind, "alphas", &raw.alphas)?;
            check_absent(kind, "components", &raw.components)?;
            check_absent(kind, "d_hidden", &raw.d_hidden)?;
            check_absent(kind, "weight_magnitude", &raw.weight_magnitude)?;
            check_absent(kind, "m", &raw.m)?;
        }
        ExperimentKind::KsdDecay => {
            check_absent(kind, "conditions", &raw.conditions)?;
            check_absent(kind, "alphas", &raw.alphas)?;
            check_absent(kind, "components", &raw.components)?;
            check_absent(kind, "d_hidden", &raw.d_hidden)?;
            check_absent(kind, "weight_magnitude", &raw.weight_magnitude)?;
            if raw.n.is_some() {
                return Err(invalid(
                    "n",
                    "ksd_decay derives the particle count from `m` (n = m); set `m` instead",
                ));
            }
        }
    }

    let d = raw.d.unwrap_or(defaults.d);
    if d == 0 {
        return Err(invalid("d", "dimension must be positive"));
    }

    let m = if kind == ExperimentKind::KsdDecay {
        let m = raw.m.unwrap_or(defaults.m);
        check_grid_usize("m", &m)?;
        m
    } else {
        vec![]
    };
    let n = if kind == ExperimentKind::KsdDecay {
        m.clone()
    } else {
        let n = raw.n.unwrap_or(defaults.n);
        check_grid_usize("n", &n)?;
        n
    };

    let methods = raw.methods.unwrap_or(defaults.methods);
    if methods.is_empty() {
        return Err(invalid("methods", "must list at least one method"));
    }
    for (i, a) in methods.iter().enumerate() {
        if methods[i + 1..].contains(a) {
            return Err(invalid("methods", format!("duplicate method `{}`", a.id())));
        }
    }

    let trials = raw.trials.unwrap_or(20);
    if trials == 0 {
        return Err(invalid("trials", "must be at least 1"));
    }

    let conditions = match kind {
        ExperimentKind::ConditionSweep => {
            let c = raw
                .conditions
                .unwrap_or_else(|| vec![1.0, 2.0, 5.0, 10.0, 20.0, 50.0]);
            if c.is_empty() {
                return Err(invalid("conditions", "must list at least one value"));
            }
            if c.iter().any(|v| !v.is_finite() || *v < 1.0) {
                return Err(invalid("conditions", "values must be finite and >= 1"));
            }
            if c.windows(2).any(|w| w[0] >= w[1]) {
                return Err(invalid("conditions", "values must be strictly increasing"));
            }
            c
        }
        _ => vec![],
    };

    let alphas = match kind {
        ExperimentKind::GmmAlphaSweep => {
            let a = raw.alphas.unwrap_or_else(|| vec![0.0, 0.5, 1.0, 2.0, 4.0]);
            if a.is_empty() {
                return Err(invalid("alphas", "must list at least one value"));
            }
            if a.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(invalid("alphas", "values must be finite and >= 0"));
            }
            if a.windows(2).any(|w| w[0] >= w[1]) {
                return Err(invalid("alphas", "values must be strictly increasing"));
            }
            a
        }
        _ => vec![],
    };

    let components = raw.components.unwrap_or(defaults.components);
    if kind == ExperimentKind::GmmAlphaSweep && components == 0 {
        return Err(invalid("components", "must be at least 1"));
    }

    let d_hidden = raw.d_hidden.unwrap_or(defaults.d_hidden);
    if kind == ExperimentKind::Rbm {
        if d_hidden == 0 {
            return Err(invalid("d_hidden", "must be at least 1"));
        }
        if d_hidden > 20 {
            return Err(invalid(
                "d_hidden",
                "exact moments enumerate 2^d_hidden hidden states; d_hidden > 20 is not supported",
            ));
        }
    }

    let weight_magnitude = raw.weight_magnitude.unwrap_or(0.1);
    if kind == ExperimentKind::Rbm && (!weight_magnitude.is_finite() || weight_magnitude < 0.0) {
        return Err(invalid("weight_magnitude", "must be finite and >= 0"));
    }

    let mmd_reference = raw
        .mmd_reference
        .unwrap_or(if paper_scale { 10_000 } else { 2000 });

    let solver = resolve_solver(raw.svgd)?;

    Ok(ExperimentConfig {
        experiment: kind,
        d,
        n,
        m,
        methods,
        trials,
        seed: raw.seed.unwrap_or(0),
        conditions,
        alphas,
        components,
        d_hidden,
        weight_magnitude,
        mmd_reference,
        out: raw.out.unwrap_or_else(|| PathBuf::from("results")),
        solver,
    })
}

fn resolve_solver(raw: Option<RawSolver>) -> Result<SolverSettings, ConfigError> {
    let mut s = SolverSettings::default();
    let Some(raw) = raw else { return Ok(s) };
    if let Some(v) = raw.step_size {
        s.step_size = v;
    }
    if let Some(v) = raw.max_iters {
        s.max_iters = v;
    }
    if let Some(v) = raw.residual_tol {
        s.residual_tol = v;
    }
    if let Some(v) = raw.scheduler {
        s.scheduler = v;
    }
    if let Some(v) = raw.fudge {
        s.fudge = v;
    }
    if let Some(v) = raw.momentum {
        s.momentum = v;
    }
    if let Some(v) = raw.polish_step_size {
        s.polish_step_size = v;
    }
    if let Some(v) = raw.polish_max_iters {
        s.polish_max_iters = v;
    }
    if let Some(v) = raw.rank_rel_tol {
        s.rank_rel_tol = v;
    }
    if !s.step_size.is_finite() || s.step_size <= 0.0 {
        return Err(invalid("svgd.step_size", "must be finite and positive"));
    }
    if !s.residual_tol.is_finite() || s.residual_tol < 0.0 {
        return Err(invalid("svgd.residual_tol", "must be finite and >= 0"));
    }
    if !s.fudge.is_finite() || s.fudge <= 0.0 {
        return Err(invalid("svgd.fudge", "must be finite and positive"));
    }
    if !s.momentum.is_finite() || !(0.0..1.0).contains(&s.momentum) {
        return Err(invalid("svgd.momentum", "must lie in [0, 1)"));
    }
    if !s.polish_step_size.is_finite() || s.polish_step_size <= 0.0 {
        return Err(invalid("svgd.polish_step_size", "must be finite and positive"));
    }
    if !s.rank_rel_tol.is_finite() || s.rank_rel_tol <= 0.0 || s.rank_rel_tol >= 1.0 {
        return Err(invalid("svgd.rank_rel_tol", "must lie in (0, 1)"));
    }
    Ok(s)
}

/// Parse a JSON string (exposed for tests; `parse_config` reads a file).
pub fn parse_config_str(
    text: &str,
    origin: &Path,
    paper_scale: bool,
) -> Result<ExperimentConfig, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let raw: RawConfig = serde_path_to_error::deserialize(de).map_err(|e| ConfigError::Parse {
        path: origin.to_path_buf(),
        detail: format!("at `{}`: {}", e.path(), e.inner()),
    })?;
    resolve(raw, paper_scale)
}

/// Read and validate an experiment configuration.
pub fn parse_config(path: &Path, paper_scale: bool) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config_str(&text, path, paper_scale)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ExperimentConfig, ConfigError> {
        parse_config_str(text, Path::new("test.json"), false)
    }

    #[test]
    fn minimal_config_is_valid() {
        let cfg = parse(
            r#"{"experiment":"gaussian_sweep","d":10,"n":[11],
                "methods":["svgd_linear"],"trials":1,"seed":7}"#,
        )
        .unwrap();
        assert_eq!(cfg.experiment, ExperimentKind::GaussianSweep);
        assert_eq!(cfg.d, 10);
        assert_eq!(cfg.n, vec![11]);
        assert_eq!(cfg.methods, vec![Method::SvgdLinear]);
        assert_eq!(cfg.trials, 1);
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.mmd_reference, 2000);
        assert_eq!(cfg.solver, SolverSettings::default());
    }

    #[test]
    fn defaults_fill_missing_fields() {
        let cfg = parse(r#"{"experiment":"gaussian_sweep"}"#).unwrap();
        assert_eq!(cfg.d, 10);
        assert_eq!(cfg.n, vec![5, 8, 11, 15, 22]);
        assert_eq!(cfg.trials, 20);
        assert_eq!(cfg.seed, 0);
        assert_eq!(cfg.methods.len(), 4);
    }

    #[test]
    fn paper_scale_changes_defaults_only() {
        let text = r#"{"experiment":"gaussian_sweep","n":[7,9]}"#;
        let desk = parse_config_str(text, Path::new("t"), false).unwrap();
        let paper = parse_config_str(text, Path::new("t"), true).unwrap();
        assert_eq!(desk.d, 10);
        assert_eq!(paper.d, 100);
        // explicit n wins at both scales
        assert_eq!(desk.n, vec![7, 9]);
        assert_eq!(paper.n, vec![7, 9]);
        assert_eq!(paper.mmd_reference, 10_000);
    }

    #[test]
    fn unknown_key_is_rejected_with_path() {
        let err = parse(r#"{"experiment":"gaussian_sweep","particles":[3]}"#).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("particles"), "got: {msg}");
    }

    #[test]
    fn wrong_kind_string_is_rejected() {
        assert!(parse(r#"{"experiment":"gauss"}"#).is_err());
    }

    #[test]
    fn unsorted_particle_counts_are_rejected() {
        let err = parse(r#"{"experiment":"gaussian_sweep","n":[10,5]}"#).unwrap_err();
        assert!(err.to_string().contains("`n`"), "got: {err}");
    }

    #[test]
    fn zero_values_are_rejected() {
        assert!(parse(r#"{"experiment":"gaussian_sweep","n":[0,5]}"#).is_err());
        assert!(parse(r#"{"experiment":"gaussian_sweep","d":0}"#).is_err());
        assert!(parse(r#"{"experiment":"gaussian_sweep","trials":0}"#).is_err());
        assert!(parse(r#"{"experiment":"gaussian_sweep","methods":[]}"#).is_err());
    }

    #[test]
    fn negative_d_is_a_schema_error_naming_the_field() {
        let err = parse(r#"{"experiment":"gaussian_sweep","d":-3}"#).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains('d'), "got: {msg}");
    }

    #[test]
    fn kind_specific_fields_are_rejected_elsewhere() {
        let err = parse(r#"{"experiment":"gaussian_sweep","alphas":[0.0,1.0]}"#).unwrap_err();
        assert!(err.to_string().contains("alphas"), "got: {err}");
        let err = parse(r#"{"experiment":"rbm","conditions":[2.0]}"#).unwrap_err();
        assert!(err.to_string().contains("conditions"), "got: {err}");
    }

    #[test]
    fn ksd_decay_derives_n_from_m() {
        let cfg = parse(r#"{"experiment":"ksd_decay","m":[8,16]}"#).unwrap();
        assert_eq!(cfg.n, vec![8, 16]);
        assert_eq!(cfg.m, vec![8, 16]);
        let err = parse(r#"{"experiment":"ksd_decay","n":[8]}"#).unwrap_err();
        assert!(err.to_string().contains("n = m"), "got: {err}");
    }

    #[test]
    fn solver_overrides_are_validated() {
        let cfg = parse(
            r#"{"experiment":"gaussian_sweep",
                "svgd":{"residual_tol":1e-9,"polish_max_iters":7}}"#,
        )
        .unwrap();
        assert_eq!(cfg.solver.residual_tol, 1e-9);
        assert_eq!(cfg.solver.polish_max_iters, 7);
        assert!(parse(r#"{"experiment":"gaussian_sweep","svgd":{"momentum":1.0}}"#).is_err());
        assert!(parse(r#"{"experiment":"gaussian_sweep","svgd":{"step_size":0.0}}"#).is_err());
        assert!(parse(r#"{"experiment":"gaussian_sweep","svgd":{"bogus":1}}"#).is_err());
    }

    #[test]
    fn duplicate_methods_are_rejected() {
        let err = parse(
            r#"{"experiment":"gaussian_sweep","methods":["svgd_rbf","svgd_rbf"]}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("duplicate"), "got: {err}");
    }

    #[test]
    fn rbm_hidden_dimension_is_capped() {
        let err = parse(r#"{"experiment":"rbm","d_hidden":25}"#).unwrap_err();
        assert!(err.to_string().contains("d_hidden"), "got: {err}");
    }
}
