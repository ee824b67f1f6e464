//! Reference trajectories: fine-step Euler–Maruyama simulation of the state
//! SDE and synthetic noisy measurements at the sampling instants.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{FilterError, Result};
use crate::linalg::spectral_from_dense;
use crate::model::ContinuousDiscreteModel;
use crate::scalar::Scalar;

/// Measurement instants `t_1 < t_2 < ... < t_K`, starting from `t_0 = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingSchedule<T: Scalar> {
    times: Vec<T>,
}

impl<T: Scalar> SamplingSchedule<T> {
    pub fn new(times: Vec<T>) -> Result<Self> {
        if times.is_empty() {
            return Err(FilterError::InvalidInput("sampling schedule is empty".into()));
        }
        let mut prev = T::zero();
        for &t in &times {
            if !(t > prev) {
                return Err(FilterError::InvalidInput(
                    "sampling instants must be positive and strictly increasing".into(),
                ));
            }
            prev = t;
        }
        Ok(Self { times })
    }

    /// `t_k = k * period` for every full period inside `[0, horizon]`; a
    /// trailing partial interval is dropped.
    pub fn uniform(period: T, horizon: T) -> Result<Self> {
        if !(period > T::zero()) || !(horizon >= period) {
            return Err(FilterError::InvalidInput(format!(
                "need 0 < period <= horizon, got period {} and horizon {}",
                period.as_f64(),
                horizon.as_f64()
            )));
        }
        let count = (horizon / period + T::lit(1e-9)).floor().as_f64() as usize;
        Self::new((1..=count).map(|k| period * T::from_count(k)).collect())
    }

    pub fn times(&self) -> &[T] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// One simulated trajectory with its measurement history.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthRecord<T: Scalar> {
    /// Sampling instants `t_k`, `k = 1..K`.
    pub times: Vec<T>,
    /// `K x n`, row `k` is the state at `t_k`.
    pub true_states: DMatrix<T>,
    /// `K x m`, row `k` is `z_k`.
    pub measurements: DMatrix<T>,
    /// Sampled `x(t_0)`.
    pub initial_state: DVector<T>,
    pub seed: u64,
    pub stream: u64,
}

impl<T: Scalar> TruthRecord<T> {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn measurement(&self, k: usize) -> DVector<T> {
        self.measurements.row(k).transpose()
    }

    pub fn state(&self, k: usize) -> DVector<T> {
        self.true_states.row(k).transpose()
    }

    /// Hash of the exact bit patterns of times and measurements.
    pub fn measurement_checksum(&self) -> u64 {
        let mut hasher = DefaultHasher::new();
        for t in &self.times {
            t.as_f64().to_bits().hash(&mut hasher);
        }
        for z in self.measurements.iter() {
            z.as_f64().to_bits().hash(&mut hasher);
        }
        hasher.finish()
    }

    /// Writes `t, x_1..x_n, z_1..z_m` rows.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let io_err = |e: csv::Error| FilterError::InvalidInput(format!("{}: {e}", path.display()));
        let mut w = csv::Writer::from_path(path).map_err(io_err)?;
        let n = self.true_states.ncols();
        let m = self.measurements.ncols();
        let header: Vec<String> = std::iter::once("t".to_string())
            .chain((1..=n).map(|i| format!("x_{i}")))
            .chain((1..=m).map(|i| format!("z_{i}")))
            .collect();
        w.write_record(&header).map_err(io_err)?;
        for k in 0..self.len() {
            let row: Vec<String> = std::iter::once(self.times[k].as_f64())
                .chain(self.true_states.row(k).iter().map(|v| v.as_f64()))
                .chain(self.measurements.row(k).iter().map(|v| v.as_f64()))
                .map(|v| v.to_string())
                .collect();
            w.write_record(&row).map_err(io_err)?;
        }
        w.flush()
            .map_err(|e| FilterError::InvalidInput(format!("{}: {e}", path.display())))
    }
}

/// A matrix `L` with `L L^T = cov`. Cholesky when `cov` is definite, the
/// spectral square root when it is only semi-definite.
pub fn noise_sqrt<T: Scalar>(cov: &DMatrix<T>) -> Result<DMatrix<T>> {
    if let Some(chol) = cov.clone().cholesky() {
        return Ok(chol.l());
    }
    Ok(spectral_from_dense(cov)?.sqrt_factor())
}

fn standard_normal<T: Scalar>(rng: &mut ChaCha8Rng, len: usize) -> DVector<T> {
    DVector::from_fn(len, |_, _| {
        let v: f64 = StandardNormal.sample(rng);
        T::lit(v)
    })
}

/// Simulates `x(t)` with Euler–Maruyama steps of size `dt` and records a
/// noisy measurement at every sampling instant.
///
/// The random stream is ChaCha8 keyed by `(seed, stream)`, so the record is a
/// pure function of its arguments.
pub fn simulate_truth<T: Scalar, M: ContinuousDiscreteModel<T> + ?Sized>(
    model: &M,
    schedule: &SamplingSchedule<T>,
    dt: T,
    seed: u64,
    stream: u64,
) -> Result<TruthRecord<T>> {
    if !(dt > T::zero()) {
        return Err(FilterError::InvalidInput("truth step must be positive".into()));
    }
    let n = model.state_dim();
    let m = model.meas_dim();
    let q = model.noise_dim();

    // Substeps per sampling interval, checked against dt.
    let mut substeps = Vec::with_capacity(schedule.len());
    let mut prev = T::zero();
    for &t in schedule.times() {
        let interval = t - prev;
        let count = (interval / dt).round();
        let mismatch = (count * dt - interval).abs();
        if count < T::one() || mismatch > T::lit(1e-9) * interval.max(T::one()) {
            return Err(FilterError::InvalidInput(format!(
                "truth step {} does not divide sampling interval {}",
                dt.as_f64(),
                interval.as_f64()
            )));
        }
        substeps.push(count.as_f64() as usize);
        prev = t;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);

    let init_sqrt = noise_sqrt(model.initial_cov())?;
    let diffusion_sqrt = model.diffusion() * noise_sqrt(model.process_cov())? * dt.sqrt();

    let initial_state = model.initial_mean() + &init_sqrt * standard_normal::<T>(&mut rng, n);
    let mut x = initial_state.clone();
    let mut true_states = DMatrix::zeros(schedule.len(), n);
    let mut measurements = DMatrix::zeros(schedule.len(), m);

    let mut t_start = T::zero();
    for (k, (&t_k, &steps)) in schedule.times().iter().zip(&substeps).enumerate() {
        for i in 0..steps {
            let t = t_start + dt * T::from_count(i);
            let drift = model.drift(t, &x);
            x += drift * dt + &diffusion_sqrt * standard_normal::<T>(&mut rng, q);
            if x.iter().any(|v| !v.is_finite()) {
                return Err(FilterError::SimulationDiverged { time: t.as_f64() });
            }
        }
        let noise = &noise_sqrt(model.meas_cov(k + 1))? * standard_normal::<T>(&mut rng, m);
        let z = model.measure(k + 1, &x) + noise;
        true_states.set_row(k, &x.transpose());
        measurements.set_row(k, &z.transpose());
        t_start = t_k;
    }

    Ok(TruthRecord {
        times: schedule.times().to_vec(),
        true_states,
        measurements,
        initial_state,
        seed,
        stream,
    })
}
