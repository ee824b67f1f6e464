//! Continuous-discrete state-space models
//!
//! ```text
//! dx(t) = f(t, x(t)) dt + G dβ(t),   E[dβ dβ^T] = Q dt
//! z_k   = h(k, x(t_k)) + v_k,        v_k ~ N(0, R_k)
//! ```
//!
//! plus the three benchmark systems: a coordinated-turn radar tracking
//! problem, a gas-phase reaction in a stirred tank reactor and the stochastic
//! Van der Pol oscillator. The first two come with an ill-conditioned
//! measurement scheme parameterised by `delta`.

use nalgebra::{DMatrix, DVector};

use crate::error::{FilterError, Result};
use crate::scalar::Scalar;

/// Noise, measurement-covariance and prior data shared by every model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelStatistics<T: Scalar> {
    pub diffusion: DMatrix<T>,
    pub process_cov: DMatrix<T>,
    pub meas_cov: DMatrix<T>,
    pub initial_mean: DVector<T>,
    pub initial_cov: DMatrix<T>,
    /// Measurement components whose residuals are angles and must be wrapped.
    pub angle_mask: Vec<bool>,
}

pub trait ContinuousDiscreteModel<T: Scalar>: Send + Sync {
    fn statistics(&self) -> &ModelStatistics<T>;

    /// Drift `f(t, x)`.
    fn drift(&self, t: T, x: &DVector<T>) -> DVector<T>;

    /// Jacobian of the drift with respect to the state.
    fn jacobian(&self, t: T, x: &DVector<T>) -> DMatrix<T>;

    /// Measurement function `h(k, x)`.
    fn measure(&self, k: usize, x: &DVector<T>) -> DVector<T>;

    fn state_dim(&self) -> usize {
        self.statistics().initial_mean.len()
    }

    fn noise_dim(&self) -> usize {
        self.statistics().diffusion.ncols()
    }

    fn meas_dim(&self) -> usize {
        self.statistics().meas_cov.nrows()
    }

    fn diffusion(&self) -> &DMatrix<T> {
        &self.statistics().diffusion
    }

    fn process_cov(&self) -> &DMatrix<T> {
        &self.statistics().process_cov
    }

    /// `R_k`; constant for every model in this crate.
    fn meas_cov(&self, _k: usize) -> &DMatrix<T> {
        &self.statistics().meas_cov
    }

    fn initial_mean(&self) -> &DVector<T> {
        &self.statistics().initial_mean
    }

    fn initial_cov(&self) -> &DMatrix<T> {
        &self.statistics().initial_cov
    }

    fn angle_mask(&self) -> &[bool] {
        &self.statistics().angle_mask
    }
}

impl<T: Scalar, M: ContinuousDiscreteModel<T> + ?Sized> ContinuousDiscreteModel<T> for Box<M> {
    fn statistics(&self) -> &ModelStatistics<T> {
        (**self).statistics()
    }
    fn drift(&self, t: T, x: &DVector<T>) -> DVector<T> {
        (**self).drift(t, x)
    }
    fn jacobian(&self, t: T, x: &DVector<T>) -> DMatrix<T> {
        (**self).jacobian(t, x)
    }
    fn measure(&self, k: usize, x: &DVector<T>) -> DVector<T> {
        (**self).measure(k, x)
    }
}

/// Which measurement scheme a benchmark model uses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MeasurementCase {
    Original,
    /// Two nearly collinear linear measurements with noise `delta^2 I_2`.
    IllConditioned(f64),
}

impl MeasurementCase {
    fn delta<T: Scalar>(self) -> Result<Option<T>> {
        match self {
            MeasurementCase::Original => Ok(None),
            MeasurementCase::IllConditioned(d) if d > 0.0 && d <= 1.0 => Ok(Some(T::lit(d))),
            MeasurementCase::IllConditioned(d) => Err(FilterError::InvalidInput(format!(
                "ill-conditioning parameter must lie in (0, 1], got {d}"
            ))),
        }
    }
}

/// `[1 ... 1; 1 ... 1 (1 + delta)]` scaled by `gain`.
fn near_collinear_rows<T: Scalar>(n: usize, delta: T, gain: T) -> DMatrix<T> {
    let mut h = DMatrix::from_element(2, n, gain);
    h[(1, n - 1)] = gain * (T::one() + delta);
    h
}

fn diag<T: Scalar>(values: &[f64]) -> DMatrix<T> {
    DMatrix::from_diagonal(&DVector::from_iterator(values.len(), values.iter().map(|&v| T::lit(v))))
}

/// Aircraft in a coordinated turn observed by a radar at the origin.
///
/// State `[x, vx, y, vy, z, vz, omega]` in metres, metres per second and
/// degrees per second; the drift converts the turn rate to radians.
#[derive(Debug, Clone)]
pub struct CoordinatedTurn<T: Scalar> {
    stats: ModelStatistics<T>,
    linear_rows: Option<DMatrix<T>>,
}

impl<T: Scalar> CoordinatedTurn<T> {
    pub const TURN_RATE_DEG: f64 = 3.0;
    pub const RANGE_SIGMA: f64 = 50.0;
    pub const ANGLE_SIGMA_DEG: f64 = 0.1;

    pub fn new(case: MeasurementCase) -> Result<Self> {
        let delta = case.delta::<T>()?;
        let sigma1 = 0.2_f64.sqrt();
        let sigma2 = 0.007;
        let diffusion = diag(&[0.0, sigma1, 0.0, sigma1, 0.0, sigma1, sigma2]);
        let initial_mean = DVector::from_iterator(
            7,
            [1000.0, 0.0, 2650.0, 150.0, 200.0, 0.0, Self::TURN_RATE_DEG].iter().map(|&v| T::lit(v)),
        );
        let (meas_cov, angle_mask, linear_rows) = match delta {
            None => {
                let angle = Self::ANGLE_SIGMA_DEG.to_radians();
                (
                    diag(&[Self::RANGE_SIGMA.powi(2), angle * angle, angle * angle]),
                    vec![false, true, true],
                    None,
                )
            }
            Some(d) => (
                DMatrix::identity(2, 2) * (d * d),
                vec![false, false],
                Some(near_collinear_rows(7, d, T::one())),
            ),
        };
        Ok(Self {
            stats: ModelStatistics {
                diffusion,
                process_cov: DMatrix::identity(7, 7),
                meas_cov,
                initial_mean,
                initial_cov: DMatrix::identity(7, 7) * T::lit(0.01),
                angle_mask,
            },
            linear_rows,
        })
    }

    fn rad_per_deg() -> T {
        T::lit(std::f64::consts::PI / 180.0)
    }
}

impl<T: Scalar> ContinuousDiscreteModel<T> for CoordinatedTurn<T> {
    fn statistics(&self) -> &ModelStatistics<T> {
        &self.stats
    }

    fn drift(&self, _t: T, x: &DVector<T>) -> DVector<T> {
        let w = x[6] * Self::rad_per_deg();
        DVector::from_vec(vec![x[1], -w * x[3], x[3], w * x[1], x[5], T::zero(), T::zero()])
    }

    fn jacobian(&self, _t: T, x: &DVector<T>) -> DMatrix<T> {
        let c = Self::rad_per_deg();
        let w = x[6] * c;
        let mut j = DMatrix::zeros(7, 7);
        j[(0, 1)] = T::one();
        j[(1, 3)] = -w;
        j[(1, 6)] = -x[3] * c;
        j[(2, 3)] = T::one();
        j[(3, 1)] = w;
        j[(3, 6)] = x[1] * c;
        j[(4, 5)] = T::one();
        j
    }

    fn measure(&self, _k: usize, x: &DVector<T>) -> DVector<T> {
        match &self.linear_rows {
            Some(h) => h * x,
            None => {
                let (e, n, u) = (x[0], x[2], x[4]);
                let ground = (e * e + n * n).sqrt();
                let range = (ground * ground + u * u).sqrt();
                DVector::from_vec(vec![range, n.atan2(e), (u / ground).atan()])
            }
        }
    }
}

/// Reversible gas-phase reaction `A <-> B + C`, `2B <-> B + C` in a
/// well-mixed isothermal continuously stirred tank reactor.
///
/// State `[c_A, c_B, c_C]` in moles per litre.
#[derive(Debug, Clone)]
pub struct Cstr<T: Scalar> {
    stats: ModelStatistics<T>,
    rates: [T; 4],
    inflow: T,
    outflow: T,
    feed: DVector<T>,
    meas_rows: DMatrix<T>,
}

impl<T: Scalar> Cstr<T> {
    pub const RT: f64 = 32.84;
    pub const DEFAULT_NOISE_SCALE: f64 = 1e-6;

    /// `noise_scale` is the diagonal entry of the process covariance `Q`.
    pub fn new(case: MeasurementCase, noise_scale: f64) -> Result<Self> {
        let delta = case.delta::<T>()?;
        if !(noise_scale >= 0.0 && noise_scale.is_finite()) {
            return Err(FilterError::InvalidInput(format!(
                "process noise scale must be finite and non-negative, got {noise_scale}"
            )));
        }
        let rt = T::lit(Self::RT);
        let initial_mean = DVector::from_vec(vec![T::lit(0.5), T::lit(0.05), T::zero()]);
        let (meas_rows, meas_cov) = match delta {
            None => (DMatrix::from_element(1, 3, rt), diag(&[0.25 * 0.25])),
            Some(d) => (near_collinear_rows(3, d, rt), DMatrix::identity(2, 2) * (d * d)),
        };
        let m = meas_rows.nrows();
        let volume = T::lit(100.0);
        Ok(Self {
            stats: ModelStatistics {
                diffusion: DMatrix::identity(3, 3),
                process_cov: DMatrix::identity(3, 3) * T::lit(noise_scale),
                meas_cov,
                initial_mean: initial_mean.clone(),
                initial_cov: DMatrix::identity(3, 3),
                angle_mask: vec![false; m],
            },
            rates: [T::lit(0.5), T::lit(0.05), T::lit(0.2), T::lit(0.01)],
            inflow: T::one() / volume,
            outflow: T::one() / volume,
            feed: initial_mean,
            meas_rows,
        })
    }

    /// Reaction rates `r = [k1 cA - k2 cB cC, k3 cB^2 - k4 cC]`.
    pub fn reaction_rates(&self, x: &DVector<T>) -> [T; 2] {
        let [k1, k2, k3, k4] = self.rates;
        [k1 * x[0] - k2 * x[1] * x[2], k3 * x[1] * x[1] - k4 * x[2]]
    }

    /// Stoichiometric matrix, one reaction per row.
    pub fn stoichiometry() -> [[f64; 3]; 2] {
        [[-1.0, 1.0, 1.0], [0.0, -2.0, 1.0]]
    }
}

impl<T: Scalar> ContinuousDiscreteModel<T> for Cstr<T> {
    fn statistics(&self) -> &ModelStatistics<T> {
        &self.stats
    }

    fn drift(&self, _t: T, x: &DVector<T>) -> DVector<T> {
        let [r1, r2] = self.reaction_rates(x);
        let nu = Self::stoichiometry();
        DVector::from_fn(3, |i, _| {
            self.inflow * self.feed[i] - self.outflow * x[i] + T::lit(nu[0][i]) * r1 + T::lit(nu[1][i]) * r2
        })
    }

    fn jacobian(&self, _t: T, x: &DVector<T>) -> DMatrix<T> {
        let [k1, k2, k3, k4] = self.rates;
        let dr1 = [k1, -k2 * x[2], -k2 * x[1]];
        let dr2 = [T::zero(), T::lit(2.0) * k3 * x[1], -k4];
        let nu = Self::stoichiometry();
        DMatrix::from_fn(3, 3, |i, j| {
            let outflow = if i == j { self.outflow } else { T::zero() };
            T::lit(nu[0][i]) * dr1[j] + T::lit(nu[1][i]) * dr2[j] - outflow
        })
    }

    fn measure(&self, _k: usize, x: &DVector<T>) -> DVector<T> {
        &self.meas_rows * x
    }
}

/// Stochastic Van der Pol oscillator with stiffness parameter `lambda`,
/// observed through `x1 + x2`.
#[derive(Debug, Clone)]
pub struct VanDerPol<T: Scalar> {
    stats: ModelStatistics<T>,
    lambda: T,
}

impl<T: Scalar> VanDerPol<T> {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(FilterError::InvalidInput(format!(
                "stiffness parameter must be positive, got {lambda}"
            )));
        }
        Ok(Self {
            stats: ModelStatistics {
                diffusion: diag(&[0.0, 1.0]),
                process_cov: DMatrix::identity(2, 2),
                meas_cov: diag(&[0.04]),
                initial_mean: DVector::from_vec(vec![T::lit(2.0), T::zero()]),
                initial_cov: diag(&[0.1, 0.1]),
                angle_mask: vec![false],
            },
            lambda: T::lit(lambda),
        })
    }

    pub fn lambda(&self) -> T {
        self.lambda
    }
}

impl<T: Scalar> ContinuousDiscreteModel<T> for VanDerPol<T> {
    fn statistics(&self) -> &ModelStatistics<T> {
        &self.stats
    }

    fn drift(&self, _t: T, x: &DVector<T>) -> DVector<T> {
        let (x1, x2) = (x[0], x[1]);
        DVector::from_vec(vec![x2, self.lambda * ((T::one() - x1 * x1) * x2 - x1)])
    }

    fn jacobian(&self, _t: T, x: &DVector<T>) -> DMatrix<T> {
        let (x1, x2) = (x[0], x[1]);
        let two = T::lit(2.0);
        DMatrix::from_row_slice(
            2,
            2,
            &[
                T::zero(),
                T::one(),
                self.lambda * (-two * x1 * x2 - T::one()),
                self.lambda * (T::one() - x1 * x1),
            ],
        )
    }

    fn measure(&self, _k: usize, x: &DVector<T>) -> DVector<T> {
        DVector::from_vec(vec![x[0] + x[1]])
    }
}

/// Linear time-invariant model `f = A x`, `h = H x`.
#[derive(Debug, Clone)]
pub struct LinearModel<T: Scalar> {
    stats: ModelStatistics<T>,
    dynamics: DMatrix<T>,
    meas_matrix: DMatrix<T>,
}

impl<T: Scalar> LinearModel<T> {
    pub fn new(
        dynamics: DMatrix<T>,
        meas_matrix: DMatrix<T>,
        stats: ModelStatistics<T>,
    ) -> Result<Self> {
        let n = stats.initial_mean.len();
        let m = stats.meas_cov.nrows();
        let shapes_ok = dynamics.shape() == (n, n)
            && meas_matrix.shape() == (m, n)
            && stats.diffusion.nrows() == n
            && stats.process_cov.shape() == (stats.diffusion.ncols(), stats.diffusion.ncols())
            && stats.initial_cov.shape() == (n, n)
            && stats.angle_mask.len() == m;
        if !shapes_ok {
            return Err(FilterError::InvalidInput("inconsistent linear model dimensions".into()));
        }
        Ok(Self {
            stats,
            dynamics,
            meas_matrix,
        })
    }

    pub fn dynamics(&self) -> &DMatrix<T> {
        &self.dynamics
    }

    pub fn meas_matrix(&self) -> &DMatrix<T> {
        &self.meas_matrix
    }
}

impl<T: Scalar> ContinuousDiscreteModel<T> for LinearModel<T> {
    fn statistics(&self) -> &ModelStatistics<T> {
        &self.stats
    }

    fn drift(&self, _t: T, x: &DVector<T>) -> DVector<T> {
        &self.dynamics * x
    }

    fn jacobian(&self, _t: T, _x: &DVector<T>) -> DMatrix<T> {
        self.dynamics.clone()
    }

    fn measure(&self, _k: usize, x: &DVector<T>) -> DVector<T> {
        &self.meas_matrix * x
    }
}
