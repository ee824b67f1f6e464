//! Time update between measurements.
//!
//! The mean follows `x' = f(t, x)` under the adaptive integrator; the
//! covariance is stepped on the very same mesh with the implicit mid-point
//! rule
//!
//! ```text
//! K = (I - tau/2 F_mid)^-1,   M = K (I + tau/2 F_mid)
//! P_next = M P M^T + tau K G Q G^T K^T
//! ```
//!
//! where `F_mid` is the drift Jacobian at the integrator's mid-point stage.
//! The spectral variant factors the pre-array `[M S_P, sqrt(tau) K G S_Q]`
//! instead of forming `P_next`.

use nalgebra::{DMatrix, DVector};

use crate::error::{FilterError, Result};
use crate::linalg::{all_finite, spectral_from_dense, symmetrize, PreArray, SpectralFactors};
use crate::model::ContinuousDiscreteModel;
use crate::nirk::{AdaptiveMesh, DriftSystem, NirkIntegrator, OdeSystem};
use crate::scalar::Scalar;

/// How a filter stores its covariance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Representation {
    Dense,
    Spectral,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Covariance<T: Scalar> {
    Dense(DMatrix<T>),
    Spectral(SpectralFactors<T>),
}

impl<T: Scalar> Covariance<T> {
    pub fn representation(&self) -> Representation {
        match self {
            Covariance::Dense(_) => Representation::Dense,
            Covariance::Spectral(_) => Representation::Spectral,
        }
    }

    pub fn to_dense(&self) -> DMatrix<T> {
        match self {
            Covariance::Dense(p) => p.clone(),
            Covariance::Spectral(f) => f.reconstruct(),
        }
    }

    /// The symmetric square root `P^(1/2)`. Dense covariances go through an
    /// eigendecomposition, which fails once roundoff has made them indefinite.
    pub fn symmetric_sqrt(&self) -> Result<DMatrix<T>> {
        match self {
            Covariance::Dense(p) => Ok(spectral_from_dense(p)?.symmetric_sqrt()),
            Covariance::Spectral(f) => Ok(f.symmetric_sqrt()),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Covariance::Dense(p) => p.nrows(),
            Covariance::Spectral(f) => f.dim(),
        }
    }
}

/// State mean and covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBelief<T: Scalar> {
    pub mean: DVector<T>,
    pub cov: Covariance<T>,
}

impl<T: Scalar> GaussianBelief<T> {
    pub fn new(mean: DVector<T>, cov: DMatrix<T>, representation: Representation) -> Result<Self> {
        if cov.shape() != (mean.len(), mean.len()) {
            return Err(FilterError::InvalidInput("covariance and mean sizes differ".into()));
        }
        let cov = match representation {
            Representation::Dense => Covariance::Dense(cov),
            Representation::Spectral => Covariance::Spectral(spectral_from_dense(&cov)?),
        };
        Ok(Self { mean, cov })
    }

    /// `N(x0, Pi0)` of the model.
    pub fn prior<M: ContinuousDiscreteModel<T> + ?Sized>(model: &M, representation: Representation) -> Result<Self> {
        Self::new(model.initial_mean().clone(), model.initial_cov().clone(), representation)
    }
}

/// `G`, `Q` and the derived products the covariance steps need.
#[derive(Debug, Clone)]
pub struct ProcessNoise<T: Scalar> {
    /// `G Q G^T`.
    pub gqg: DMatrix<T>,
    /// `G Q_Q D_Q^(1/2)`, an `n x q` square root of `G Q G^T`.
    pub sqrt: DMatrix<T>,
}

impl<T: Scalar> ProcessNoise<T> {
    pub fn new(diffusion: &DMatrix<T>, process_cov: &DMatrix<T>) -> Result<Self> {
        if diffusion.ncols() != process_cov.nrows() {
            return Err(FilterError::InvalidInput("diffusion and process covariance sizes differ".into()));
        }
        let q_factors = spectral_from_dense(process_cov)?;
        let sqrt = diffusion * q_factors.sqrt_factor();
        let mut gqg = diffusion * process_cov * diffusion.transpose();
        symmetrize(&mut gqg);
        Ok(Self { gqg, sqrt })
    }

    pub fn from_model<M: ContinuousDiscreteModel<T> + ?Sized>(model: &M) -> Result<Self> {
        Self::new(model.diffusion(), model.process_cov())
    }
}

/// `K = (I - tau/2 F)^-1` and `M = K (I + tau/2 F)` at a step mid-point.
#[derive(Debug, Clone, PartialEq)]
pub struct MidpointMatrices<T: Scalar> {
    pub k_half: DMatrix<T>,
    pub m_half: DMatrix<T>,
}

/// Builds the mid-point matrices from the Jacobian at `(t_mid, x_mid)`.
pub fn midpoint_matrices<T: Scalar, S: OdeSystem<T> + ?Sized>(
    sys: &S,
    t_mid: T,
    x_mid: &DVector<T>,
    tau: T,
) -> Result<MidpointMatrices<T>> {
    midpoint_from_jacobian(&sys.jacobian(t_mid, x_mid), tau)
        .ok_or(FilterError::SingularMidpointSystem { time: t_mid.as_f64() })
}

fn midpoint_from_jacobian<T: Scalar>(jac: &DMatrix<T>, tau: T) -> Option<MidpointMatrices<T>> {
    let n = jac.nrows();
    let eye = DMatrix::<T>::identity(n, n);
    let half = jac * (tau * T::lit(0.5));
    let lu = (&eye - &half).lu();
    if !lu.is_invertible() {
        return None;
    }
    let k_half = lu.solve(&eye)?;
    let m_half = lu.solve(&(&eye + &half))?;
    if !all_finite(&k_half) || !all_finite(&m_half) {
        return None;
    }
    Some(MidpointMatrices { k_half, m_half })
}

/// `M P M^T + tau K G Q G^T K^T`, symmetrized.
pub fn propagate_cov_dense<T: Scalar>(
    p: &DMatrix<T>,
    mm: &MidpointMatrices<T>,
    noise: &ProcessNoise<T>,
    tau: T,
) -> Result<DMatrix<T>> {
    let mut next = &mm.m_half * p * mm.m_half.transpose()
        + &mm.k_half * &noise.gqg * mm.k_half.transpose() * tau;
    symmetrize(&mut next);
    if !all_finite(&next) {
        return Err(FilterError::FilterDivergence("non-finite propagated covariance".into()));
    }
    Ok(next)
}

/// The pre-array `[M Q_P D_P^(1/2), sqrt(tau) K G Q_Q D_Q^(1/2)]`.
pub fn time_update_pre_array<T: Scalar>(
    factors: &SpectralFactors<T>,
    mm: &MidpointMatrices<T>,
    noise: &ProcessNoise<T>,
    tau: T,
) -> Result<PreArray<T>> {
    let left = &mm.m_half * factors.sqrt_factor();
    let right = &mm.k_half * &noise.sqrt * tau.sqrt();
    PreArray::from_blocks(&left, &right)
        .map_err(|_| FilterError::FilterDivergence("non-finite time-update pre-array".into()))
}

/// Spectral factors of the mid-point covariance step.
pub fn propagate_cov_svd<T: Scalar>(
    factors: &SpectralFactors<T>,
    mm: &MidpointMatrices<T>,
    noise: &ProcessNoise<T>,
    tau: T,
) -> Result<SpectralFactors<T>> {
    time_update_pre_array(factors, mm, noise, tau)?.factor()
}

fn ensure_finite_mean<T: Scalar>(x: &DVector<T>) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(FilterError::FilterDivergence("non-finite state estimate".into()))
    }
}

/// Predicts the belief from `t_prev` to `t_next`.
///
/// The mean is integrated with `integrator`; every accepted step must also
/// give a nonsingular mid-point system, otherwise it is rejected and halved
/// so the covariance can be stepped on the same mesh.
pub fn time_update<T: Scalar, M: ContinuousDiscreteModel<T> + ?Sized>(
    belief: &GaussianBelief<T>,
    model: &M,
    noise: &ProcessNoise<T>,
    integrator: &NirkIntegrator<T>,
    t_prev: T,
    t_next: T,
) -> Result<(GaussianBelief<T>, AdaptiveMesh<T>)> {
    if t_next == t_prev {
        return Ok((belief.clone(), AdaptiveMesh { nodes: vec![t_prev] }));
    }
    let sys = DriftSystem(model);
    let mut cached: Vec<MidpointMatrices<T>> = Vec::new();
    let solution = integrator.integrate_interval_guarded(&sys, t_prev, t_next, &belief.mean, |t, tau, x_mid| {
        let half = tau * T::lit(0.5);
        match midpoint_from_jacobian(&sys.jacobian(t + half, x_mid), tau) {
            Some(mm) => {
                cached.push(mm);
                true
            }
            None => false,
        }
    })?;
    ensure_finite_mean(&solution.x_end)?;

    // The final pass produced the last `mesh.len()` accepted steps.
    let steps = solution.mesh.len();
    let mids = &cached[cached.len() - steps..];
    let cov = match &belief.cov {
        Covariance::Dense(p0) => {
            let mut p = p0.clone();
            for ((_, tau), mm) in solution.mesh.steps().zip(mids) {
                p = propagate_cov_dense(&p, mm, noise, tau)?;
            }
            Covariance::Dense(p)
        }
        Covariance::Spectral(f0) => {
            let mut f = f0.clone();
            for ((_, tau), mm) in solution.mesh.steps().zip(mids) {
                f = propagate_cov_svd(&f, mm, noise, tau)?;
            }
            Covariance::Spectral(f)
        }
    };
    Ok((
        GaussianBelief {
            mean: solution.x_end,
            cov,
        },
        solution.mesh,
    ))
}

/// Fixed-step Euler–Maruyama moment propagation with `subdivisions` equal
/// steps: `x += tau f`, `P += tau (F P + P F^T + G Q G^T)`.
///
/// The spectral form factors `[(I + tau F) S_P, sqrt(tau) G S_Q]`, which
/// differs from the dense recursion by the `tau^2 F P F^T` term.
pub fn euler_time_update<T: Scalar, M: ContinuousDiscreteModel<T> + ?Sized>(
    belief: &GaussianBelief<T>,
    model: &M,
    noise: &ProcessNoise<T>,
    subdivisions: usize,
    t_prev: T,
    t_next: T,
) -> Result<GaussianBelief<T>> {
    if subdivisions == 0 {
        return Err(FilterError::InvalidInput("need at least one subdivision".into()));
    }
    let tau = (t_next - t_prev) / T::from_count(subdivisions);
    let n = belief.mean.len();
    let eye = DMatrix::<T>::identity(n, n);
    let mut x = belief.mean.clone();
    let mut cov = belief.cov.clone();
    for i in 0..subdivisions {
        let t = t_prev + tau * T::from_count(i);
        let jac = model.jacobian(t, &x);
        cov = match cov {
            Covariance::Dense(p) => {
                let fp = &jac * &p;
                let mut next = &p + (&fp + fp.transpose() + &noise.gqg) * tau;
                symmetrize(&mut next);
                if !all_finite(&next) {
                    return Err(FilterError::FilterDivergence("non-finite propagated covariance".into()));
                }
                Covariance::Dense(next)
            }
            Covariance::Spectral(f) => {
                let left = (&eye + &jac * tau) * f.sqrt_factor();
                let right = &noise.sqrt * tau.sqrt();
                let pre = PreArray::from_blocks(&left, &right)
                    .map_err(|_| FilterError::FilterDivergence("non-finite time-update pre-array".into()))?;
                Covariance::Spectral(pre.factor()?)
            }
        };
        x += model.drift(t, &x) * tau;
        ensure_finite_mean(&x)?;
    }
    Ok(GaussianBelief { mean: x, cov })
}
