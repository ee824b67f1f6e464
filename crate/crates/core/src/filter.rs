//! Complete filters run over a measurement sequence.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};

use crate::cubature::{measurement_update, MeasurementNoise};
use crate::error::{FilterError, Result};
use crate::linalg::relative_discrepancy;
use crate::model::ContinuousDiscreteModel;
use crate::nirk::{NirkIntegrator, NirkOptions};
use crate::propagation::{euler_time_update, time_update, GaussianBelief, ProcessNoise, Representation};
use crate::scalar::Scalar;
use crate::truth::TruthRecord;

/// How the moments are carried between measurements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FilterKind {
    /// Adaptive NIRK mean with the mid-point covariance step.
    HybridNirk,
    /// `m` equal Euler steps of the moment equations per sampling interval.
    FixedStepBaseline(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterVariant<T: Scalar> {
    pub kind: FilterKind,
    pub representation: Representation,
    /// Global tolerance of the hybrid filter's integrator.
    pub eps_g: T,
}

impl<T: Scalar> FilterVariant<T> {
    pub fn hybrid(representation: Representation, eps_g: T) -> Self {
        Self {
            kind: FilterKind::HybridNirk,
            representation,
            eps_g,
        }
    }

    pub fn baseline(representation: Representation, subdivisions: usize) -> Self {
        Self {
            kind: FilterKind::FixedStepBaseline(subdivisions),
            representation,
            eps_g: T::lit(1e-4),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let FilterKind::FixedStepBaseline(0) = self.kind {
            return Err(FilterError::InvalidInput("baseline needs at least one subdivision".into()));
        }
        if !(self.eps_g > T::zero()) {
            return Err(FilterError::InvalidInput("global tolerance must be positive".into()));
        }
        Ok(())
    }

    /// Short label, e.g. `hybrid-svd` or `baseline64-dense`.
    pub fn name(&self) -> String {
        let rep = match self.representation {
            Representation::Dense => "dense",
            Representation::Spectral => "svd",
        };
        match self.kind {
            FilterKind::HybridNirk => format!("hybrid-{rep}"),
            FilterKind::FixedStepBaseline(m) => format!("baseline{m}-{rep}"),
        }
    }
}

/// Outcome of one predict/update cycle.
#[derive(Debug, Clone, PartialEq)]
pub enum StepStatus {
    /// `mesh_steps` is the number of integrator or Euler steps taken.
    Completed { mesh_steps: usize },
    Failed(FilterError),
}

/// Filtered estimates for one run. On failure the series stop at the last
/// completed step.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterTrace<T: Scalar> {
    /// Row `k` is `x_{k|k}`.
    pub estimates: DMatrix<T>,
    /// Filtered covariances `P_{k|k}`, reconstructed for spectral filters.
    pub covariances: Vec<DMatrix<T>>,
    pub statuses: Vec<StepStatus>,
    pub cpu_time: Duration,
    pub failed: bool,
    pub failure: Option<FilterError>,
}

impl<T: Scalar> FilterTrace<T> {
    pub fn len(&self) -> usize {
        self.estimates.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn estimate(&self, k: usize) -> DVector<T> {
        self.estimates.row(k).transpose()
    }
}

enum Propagator<T: Scalar> {
    Hybrid(NirkIntegrator<T>),
    Euler(usize),
}

struct Workspace<T: Scalar> {
    process: ProcessNoise<T>,
    meas: MeasurementNoise<T>,
    propagator: Propagator<T>,
}

impl<T: Scalar> Workspace<T> {
    fn new<M: ContinuousDiscreteModel<T> + ?Sized>(variant: &FilterVariant<T>, model: &M) -> Result<Self> {
        variant.validate()?;
        let propagator = match variant.kind {
            FilterKind::HybridNirk => Propagator::Hybrid(NirkIntegrator::new(NirkOptions::new(variant.eps_g))?),
            FilterKind::FixedStepBaseline(m) => Propagator::Euler(m),
        };
        Ok(Self {
            process: ProcessNoise::from_model(model)?,
            meas: MeasurementNoise::new(model.meas_cov(1))?,
            propagator,
        })
    }

    fn cycle<M: ContinuousDiscreteModel<T> + ?Sized>(
        &mut self,
        belief: &GaussianBelief<T>,
        model: &M,
        k: usize,
        t_prev: T,
        t_next: T,
        z: &DVector<T>,
    ) -> Result<(GaussianBelief<T>, usize)> {
        let (predicted, steps) = match &self.propagator {
            Propagator::Hybrid(integ) => {
                let (b, mesh) = time_update(belief, model, &self.process, integ, t_prev, t_next)?;
                (b, mesh.len())
            }
            Propagator::Euler(m) => (euler_time_update(belief, model, &self.process, *m, t_prev, t_next)?, *m),
        };
        let r = model.meas_cov(k);
        if *r != self.meas.cov {
            self.meas = MeasurementNoise::new(r)?;
        }
        let updated = measurement_update(&predicted, z, model, k, &self.meas)?;
        Ok((updated.belief, steps))
    }
}

fn run_steps<T: Scalar, M: ContinuousDiscreteModel<T> + ?Sized>(
    variant: &FilterVariant<T>,
    model: &M,
    truth: &TruthRecord<T>,
    estimates: &mut Vec<DVector<T>>,
    covariances: &mut Vec<DMatrix<T>>,
    statuses: &mut Vec<StepStatus>,
) -> Result<()> {
    if truth.is_empty() {
        return Err(FilterError::InvalidInput("truth record has no measurements".into()));
    }
    if truth.measurements.ncols() != model.meas_dim() {
        return Err(FilterError::InvalidInput("measurement dimension does not match the model".into()));
    }
    let mut ws = Workspace::new(variant, model)?;
    let mut belief = GaussianBelief::prior(model, variant.representation)?;
    let mut t_prev = T::zero();
    for (k, &t_k) in truth.times.iter().enumerate() {
        let z = truth.measurement(k);
        match ws.cycle(&belief, model, k + 1, t_prev, t_k, &z) {
            Ok((next, mesh_steps)) => {
                estimates.push(next.mean.clone());
                covariances.push(next.cov.to_dense());
                statuses.push(StepStatus::Completed { mesh_steps });
                belief = next;
            }
            Err(e) => {
                statuses.push(StepStatus::Failed(e.clone()));
                return Err(e);
            }
        }
        t_prev = t_k;
    }
    Ok(())
}

/// Runs `variant` over the measurements of `truth`.
///
/// Errors never escape: a failing step marks the trace failed and ends it.
pub fn run_filter<T: Scalar, M: ContinuousDiscreteModel<T> + ?Sized>(
    variant: &FilterVariant<T>,
    model: &M,
    truth: &TruthRecord<T>,
) -> FilterTrace<T> {
    let start = Instant::now();
    let mut estimates = Vec::with_capacity(truth.len());
    let mut covariances = Vec::with_capacity(truth.len());
    let mut statuses = Vec::with_capacity(truth.len());
    let outcome = catch_unwind(AssertUnwindSafe(|| {
        run_steps(variant, model, truth, &mut estimates, &mut covariances, &mut statuses)
    }));
    let failure = match outcome {
        Ok(Ok(())) => None,
        Ok(Err(e)) => Some(e),
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            let e = FilterError::NumericalFailure(msg);
            if statuses.len() == estimates.len() {
                statuses.push(StepStatus::Failed(e.clone()));
            }
            Some(e)
        }
    };
    // A panic may have left a step half-recorded.
    let done = estimates.len().min(covariances.len());
    estimates.truncate(done);
    covariances.truncate(done);
    let n = model.state_dim();
    let mut est = DMatrix::zeros(done, n);
    for (k, x) in estimates.iter().enumerate() {
        est.set_row(k, &x.transpose());
    }
    FilterTrace {
        estimates: est,
        covariances,
        statuses,
        cpu_time: start.elapsed(),
        failed: failure.is_some(),
        failure,
    }
}

/// Runs the dense and spectral hybrid filters on the same record and returns
/// the largest relative discrepancy between their filtered means and
/// covariances over all steps.
pub fn equivalence_probe<T: Scalar, M: ContinuousDiscreteModel<T> + ?Sized>(
    model: &M,
    truth: &TruthRecord<T>,
    eps_g: T,
) -> Result<T> {
    let dense = run_filter(&FilterVariant::hybrid(Representation::Dense, eps_g), model, truth);
    let spectral = run_filter(&FilterVariant::hybrid(Representation::Spectral, eps_g), model, truth);
    for trace in [&dense, &spectral] {
        if let Some(e) = &trace.failure {
            return Err(e.clone());
        }
    }
    let mut worst = T::zero();
    for k in 0..dense.len() {
        let a = DMatrix::from_column_slice(model.state_dim(), 1, dense.estimate(k).as_slice());
        let b = DMatrix::from_column_slice(model.state_dim(), 1, spectral.estimate(k).as_slice());
        worst = worst
            .max(relative_discrepancy(&a, &b))
            .max(relative_discrepancy(&dense.covariances[k], &spectral.covariances[k]));
    }
    Ok(worst)
}
