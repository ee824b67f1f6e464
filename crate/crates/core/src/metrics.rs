//! Accumulated root-mean-square errors over Monte Carlo runs.

use nalgebra::DVector;

use crate::error::{FilterError, Result};
use crate::filter::FilterTrace;
use crate::scalar::Scalar;
use crate::truth::TruthRecord;

/// Position components of the coordinated-turn state.
pub const POSITION_COMPONENTS: [usize; 3] = [0, 2, 4];

/// Tracking failure threshold on the positional ARMSE, in metres.
pub const POSITION_FAILURE_THRESHOLD: f64 = 500.0;

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    /// RMS over runs, steps and the selected components. `NaN` when no run
    /// completed.
    pub armse: f64,
    /// RMS per state component over runs and steps.
    pub per_component_armse: DVector<f64>,
    pub failed: bool,
    /// Runs that completed and entered the averages.
    pub runs_used: usize,
}

/// ARMSE over `components`. Runs whose trace failed are left out; the report
/// is failed if any run failed or the ARMSE exceeds `threshold`.
pub fn armse_over<T: Scalar>(
    truths: &[TruthRecord<T>],
    traces: &[FilterTrace<T>],
    components: &[usize],
    threshold: Option<f64>,
) -> Result<MetricReport> {
    if truths.is_empty() || truths.len() != traces.len() {
        return Err(FilterError::InvalidInput(format!(
            "need matching non-empty truth and trace lists, got {} and {}",
            truths.len(),
            traces.len()
        )));
    }
    let n = truths[0].true_states.ncols();
    if components.is_empty() || components.iter().any(|&c| c >= n) {
        return Err(FilterError::InvalidInput("component index out of range".into()));
    }
    let mut per_component = vec![0.0_f64; n];
    let mut samples = 0usize;
    let mut runs_used = 0usize;
    let mut any_failed = false;
    for (truth, trace) in truths.iter().zip(traces) {
        if trace.failed {
            any_failed = true;
            continue;
        }
        if trace.len() != truth.len() || truth.true_states.ncols() != n || trace.estimates.ncols() != n {
            return Err(FilterError::InvalidInput("trace is not aligned with its truth record".into()));
        }
        for k in 0..truth.len() {
            for (j, acc) in per_component.iter_mut().enumerate() {
                let e = (truth.true_states[(k, j)] - trace.estimates[(k, j)]).as_f64();
                *acc += e * e;
            }
        }
        samples += truth.len();
        runs_used += 1;
    }
    let (armse, per_component_armse) = if samples == 0 {
        (f64::NAN, DVector::from_element(n, f64::NAN))
    } else {
        let total: f64 = components.iter().map(|&c| per_component[c]).sum();
        let armse = (total / (samples * components.len()) as f64).sqrt();
        let per = DVector::from_iterator(n, per_component.iter().map(|s| (s / samples as f64).sqrt()));
        (armse, per)
    };
    let over = match threshold {
        Some(limit) => !(armse <= limit),
        None => !armse.is_finite(),
    };
    Ok(MetricReport {
        armse,
        per_component_armse,
        failed: any_failed || over,
        runs_used,
    })
}

/// Positional ARMSE with the 500 m failure threshold.
pub fn armse_position<T: Scalar>(truths: &[TruthRecord<T>], traces: &[FilterTrace<T>]) -> Result<MetricReport> {
    armse_over(truths, traces, &POSITION_COMPONENTS, Some(POSITION_FAILURE_THRESHOLD))
}

/// ARMSE over every state component; `threshold` of `None` fails only on
/// hard run failures.
pub fn armse_all<T: Scalar>(
    truths: &[TruthRecord<T>],
    traces: &[FilterTrace<T>],
    threshold: Option<f64>,
) -> Result<MetricReport> {
    let n = truths.first().map_or(0, |t| t.true_states.ncols());
    let all: Vec<usize> = (0..n).collect();
    armse_over(truths, traces, &all, threshold)
}
