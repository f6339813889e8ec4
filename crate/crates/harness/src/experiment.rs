//! Grid execution: expand a configuration into independent (grid point,
//! method, trial) cells, run them (possibly in parallel), and reduce each to
//! one result row.
//!
//! Determinism contract: every cell's randomness derives from the master
//! seed and the cell's grid indices alone, cells never share mutable state,
//! and the collected rows are sorted by a fixed key before they are returned.
//! The emitted CSV is therefore a pure function of the configuration,
//! regardless of thread count or scheduling.
//!
//! A cell that fails (e.g. diverges even after the step backoff) does not
//! abort the experiment: its row is skipped and a warning recorded, so a
//! sweep deliberately probing unstable regimes still produces the rows that
//! survived.  Strict handling of such warnings is the caller's decision.

use rayon::prelude::*;

use steinmatch_core::kernels::KernelSpec;
use steinmatch_core::metrics::{mmd_default_kernel, mmd_squared, moment_report_against};
use steinmatch_core::targets::{GaussianTarget, GmmTarget, Moments, RbmTarget, TargetModel};
use steinmatch_core::{metrics, ParticleSet};

use crate::config::{ExperimentConfig, ExperimentKind, Method};
use crate::methods::{self, SeedContext};
use crate::report::ResultRow;

/// Rows plus non-fatal failures, in deterministic order.
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub rows: Vec<ResultRow>,
    pub warnings: Vec<String>,
}

/// Experiment-level failures (cell failures become warnings instead).
#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Core(#[from] steinmatch_core::Error),
    #[error("thread pool: {0}")]
    Pool(String),
}

/// One independent unit of work.
#[derive(Debug, Clone, Copy)]
struct Cell {
    /// Condition number or alpha, when the experiment sweeps one.
    axis: Option<f64>,
    axis_index: usize,
    n: usize,
    n_index: usize,
    /// Pinned feature-bank size (`ksd_decay` only).
    m_request: Option<usize>,
    method: Method,
    trial: usize,
}

fn grid_axes(cfg: &ExperimentConfig) -> Vec<Option<f64>> {
    match cfg.experiment {
        ExperimentKind::ConditionSweep => cfg.conditions.iter().copied().map(Some).collect(),
        ExperimentKind::GmmAlphaSweep => cfg.alphas.iter().copied().map(Some).collect(),
        _ => vec![None],
    }
}

fn build_cells(cfg: &ExperimentConfig) -> Vec<Cell> {
    let axes = grid_axes(cfg);
    let mut cells = Vec::new();
    for (axis_index, axis) in axes.iter().enumerate() {
        for (n_index, &n) in cfg.n.iter().enumerate() {
            let m_request = if cfg.experiment == ExperimentKind::KsdDecay {
                Some(cfg.m[n_index])
            } else {
                None
            };
            for &method in &cfg.methods {
                for trial in 0..cfg.trials {
                    cells.push(Cell {
                        axis: *axis,
                        axis_index,
                        n,
                        n_index,
                        m_request,
                        method,
                        trial,
                    });
                }
            }
        }
    }
    cells
}

/// Instantiate the target model for one trial at one grid axis value.
fn build_target(
    cfg: &ExperimentConfig,
    axis: Option<f64>,
    model_seed: u64,
) -> steinmatch_core::Result<TargetModel> {
    match cfg.experiment {
        ExperimentKind::GaussianSweep | ExperimentKind::KsdDecay => {
            GaussianTarget::standard(cfg.d).map(Into::into)
        }
        ExperimentKind::ConditionSweep => {
            let condition = axis.expect("condition sweep cell carries an axis value");
            methods::conditioned_gaussian(cfg.d, condition, model_seed).map(Into::into)
        }
        ExperimentKind::GmmAlphaSweep => {
            let alpha = axis.expect("alpha sweep cell carries an axis value");
            GmmTarget::random_unit_cube(cfg.components, cfg.d, alpha, model_seed).map(Into::into)
        }
        ExperimentKind::Rbm => RbmTarget::random_sign_weights(
            cfg.d,
            cfg.d_hidden,
            cfg.weight_magnitude,
            model_seed,
        )
        .map(Into::into),
    }
}

/// Stein discrepancy of the final particles under an RBF kernel with median
/// bandwidth — a method-independent quality score for every row.
fn ksd_column(target: &TargetModel, particles: &ParticleSet) -> steinmatch_core::Result<Option<f64>> {
    if particles.len() < 2 {
        return Ok(None);
    }
    let kernel = KernelSpec::rbf_median(particles)?;
    metrics::ksd_squared(target, &kernel, particles).map(Some)
}

fn mmd_column(
    cfg: &ExperimentConfig,
    target: &TargetModel,
    particles: &ParticleSet,
    reference_seed: u64,
) -> steinmatch_core::Result<Option<f64>> {
    if cfg.mmd_reference == 0 {
        return Ok(None);
    }
    let reference = target.sample_exact(cfg.mmd_reference, reference_seed)?;
    let kernel = mmd_default_kernel(particles, &reference)?;
    mmd_squared(&kernel, particles, &reference).map(Some)
}

fn run_cell(cfg: &ExperimentConfig, cell: &Cell) -> steinmatch_core::Result<ResultRow> {
    let model_seed = methods::model_seed(cfg.seed, cell.trial as u64);
    let target = build_target(cfg, cell.axis, model_seed)?;
    let exact: Moments = target.exact_moments()?;
    let seeds = SeedContext {
        master: cfg.seed,
        axis_index: cell.axis_index as u64,
        n_index: cell.n_index as u64,
        trial: cell.trial as u64,
        method_index: cell.method.index(),
    };
    // ksd_decay ties the particle count to the bank size (n = m), so the
    // rank-failure fallback of growing n is not available there.
    let rank_retries = if cfg.experiment == ExperimentKind::KsdDecay {
        0
    } else {
        methods::MAX_RANK_RETRIES
    };
    let outcome = methods::run_method(
        cell.method,
        &target,
        cell.n,
        cell.m_request,
        &seeds,
        &cfg.solver,
        rank_retries,
    )?;
    let report = moment_report_against(&outcome.particles, &exact)?;
    let ksd_sq = ksd_column(&target, &outcome.particles)?;
    let mmd_sq = mmd_column(
        cfg,
        &target,
        &outcome.particles,
        methods::reference_seed(cfg.seed, cell.trial as u64),
    )?;
    Ok(ResultRow {
        experiment: cfg.experiment.id().to_string(),
        method: cell.method.id().to_string(),
        d: cfg.d,
        n: outcome.n_used,
        m: outcome.feature_count,
        trial_seed: model_seed,
        cond_or_alpha: cell.axis,
        mse_first: report.mse_first,
        mse_second: report.mse_second,
        est_avg_variance: report.est_avg_variance,
        mmd_sq,
        ksd_sq,
        residual: outcome.residual,
        rank_ok: outcome.rank_ok,
        iterations: outcome.iterations,
        wall_time: None,
    })
}

/// Deterministic output order: experiment, method, axis, n, m, then trial
/// seed, with the cell's build index as the final tiebreak.
fn sort_rows(indexed: &mut [(usize, ResultRow)]) {
    indexed.sort_by(|(ia, a), (ib, b)| {
        let axis_a = a.cond_or_alpha.unwrap_or(f64::NEG_INFINITY);
        let axis_b = b.cond_or_alpha.unwrap_or(f64::NEG_INFINITY);
        a.experiment
            .cmp(&b.experiment)
            .then_with(|| a.method.cmp(&b.method))
            .then_with(|| axis_a.total_cmp(&axis_b))
            .then_with(|| a.n.cmp(&b.n))
            .then_with(|| a.m.unwrap_or(0).cmp(&b.m.unwrap_or(0)))
            .then_with(|| a.trial_seed.cmp(&b.trial_seed))
            .then_with(|| ia.cmp(ib))
    });
}

/// Run the whole grid on `threads` workers (0 = library default) and return
/// sorted rows plus warnings for any skipped cells.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    threads: usize,
) -> Result<ExperimentOutcome, HarnessError> {
    let cells = build_cells(cfg);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| HarnessError::Pool(e.to_string()))?;
    let results: Vec<steinmatch_core::Result<ResultRow>> =
        pool.install(|| cells.par_iter().map(|cell| run_cell(cfg, cell)).collect());

    let mut indexed = Vec::with_capacity(results.len());
    let mut warnings = Vec::new();
    for (cell, (index, result)) in cells.iter().zip(results.into_iter().enumerate()) {
        match result {
            Ok(row) => indexed.push((index, row)),
            Err(e) => warnings.push(format!(
                "skipping {} / {} n={} trial={}: {e}",
                cfg.experiment.id(),
                cell.method.id(),
                cell.n,
                cell.trial,
            )),
        }
    }
    sort_rows(&mut indexed);
    Ok(ExperimentOutcome {
        rows: indexed.into_iter().map(|(_, row)| row).collect(),
        warnings,
    })
}
