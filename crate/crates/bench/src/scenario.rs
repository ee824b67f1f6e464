//! Monte Carlo orchestration.

use cdfilter::metrics::{armse_all, armse_position};
use cdfilter::{run_filter, simulate_truth, ContinuousDiscreteModel, FilterError, SamplingSchedule, TruthRecord64};
use rayon::prelude::*;

use crate::config::{Example, ScenarioConfig, SweepPoint};
use crate::error::{HarnessError, Result};

/// Truth streams tried per requested run before giving up on a sweep point.
const STREAM_BUDGET_FACTOR: usize = 20;

/// One row of output: a sweep point run with one filter.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub scenario: String,
    /// Sampling period.
    pub delta: f64,
    pub delta_ill: Option<f64>,
    pub lambda: Option<f64>,
    pub filter: String,
    pub seed: u64,
    pub armse: f64,
    /// Mean wall-clock time of one run, in milliseconds.
    pub cpu_ms: f64,
    pub failed: bool,
}

/// Truth records of one sweep point, shared by every filter.
#[derive(Debug, Clone)]
pub struct TruthSet {
    pub records: Vec<TruthRecord64>,
    /// Streams skipped because the simulated state diverged.
    pub skipped_streams: usize,
}

impl TruthSet {
    pub fn checksum(&self) -> u64 {
        self.records
            .iter()
            .fold(0xcbf2_9ce4_8422_2325u64, |acc, r| {
                (acc ^ r.measurement_checksum()).wrapping_mul(0x0100_0000_01b3)
            })
    }
}

/// Simulates `runs` truth records with the configured seed, taking streams
/// in increasing order and skipping any whose state diverges.
pub fn simulate_truths(
    model: &dyn ContinuousDiscreteModel<f64>,
    schedule: &SamplingSchedule<f64>,
    truth_step: f64,
    seed: u64,
    runs: usize,
) -> Result<TruthSet> {
    let budget = runs.saturating_mul(STREAM_BUDGET_FACTOR) as u64;
    let mut records = Vec::with_capacity(runs);
    let mut skipped = 0usize;
    let mut next = 0u64;
    while records.len() < runs {
        if next >= budget {
            return Err(HarnessError::Runtime(format!(
                "only {} of {runs} truth simulations stayed finite in {budget} streams",
                records.len()
            )));
        }
        let end = (next + (runs - records.len()) as u64).min(budget);
        let batch: Vec<_> = (next..end)
            .into_par_iter()
            .map(|stream| simulate_truth(model, schedule, truth_step, seed, stream))
            .collect();
        for outcome in batch {
            match outcome {
                Ok(r) => records.push(r),
                Err(FilterError::SimulationDiverged { .. }) => skipped += 1,
                Err(e) => return Err(e.into()),
            }
        }
        next = end;
    }
    Ok(TruthSet {
        records,
        skipped_streams: skipped,
    })
}

/// Runs every sweep point with every variant. Failed runs are recorded, not
/// raised; errors are reserved for invalid configs and truth generation.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<Vec<RunRecord>> {
    cfg.validate()?;
    let variants = cfg.variant_specs()?;
    let mut out = Vec::new();
    for point in cfg.sweep_points() {
        let model = cfg.build_model(&point)?;
        let schedule = SamplingSchedule::uniform(point.period, cfg.horizon)?;
        let truths = simulate_truths(model.as_ref(), &schedule, cfg.truth_step, cfg.seed, cfg.monte_carlo)?;
        let checksum = truths.checksum();
        for spec in &variants {
            let traces: Vec<_> = truths
                .records
                .par_iter()
                .map(|t| run_filter(&spec.variant, model.as_ref(), t))
                .collect();
            if truths.checksum() != checksum {
                return Err(HarnessError::Runtime("shared measurements changed between filters".into()));
            }
            let report = match cfg.example {
                Example::Tracking => armse_position(&truths.records, &traces)?,
                Example::Cstr | Example::VanDerPol => armse_all(&truths.records, &traces, None)?,
            };
            let total_ms: f64 = traces.iter().map(|t| t.cpu_time.as_secs_f64() * 1e3).sum();
            out.push(record(cfg, &point, spec.label(), report.armse, total_ms / traces.len() as f64, report.failed));
        }
    }
    Ok(out)
}

fn record(cfg: &ScenarioConfig, point: &SweepPoint, filter: &str, armse: f64, cpu_ms: f64, failed: bool) -> RunRecord {
    RunRecord {
        scenario: cfg.name.clone(),
        delta: point.period,
        delta_ill: point.ill_conditioning,
        lambda: point.lambda,
        filter: filter.to_string(),
        seed: cfg.seed,
        armse,
        cpu_ms,
        failed,
    }
}
