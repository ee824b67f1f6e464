//! Third-degree spherical-radial cubature measurement update.
//!
//! Nodes are `x + sqrt(n) S e_j` and `x - sqrt(n) S e_j` for the symmetric
//! square root `S` of the predicted covariance. With the centred, `1/sqrt(2n)`-scaled
//! deviation matrices `X` (state) and `Z` (measurement),
//!
//! ```text
//! P_xz = X Z^T,   R_e = Z Z^T + R,   K = P_xz R_e^-1
//! ```
//!
//! The dense form updates `P - K R_e K^T`. The spectral form never builds
//! `R_e` or `P`: it factors `[Z, S_R]` for `R_e` and `[X - K Z, K S_R]` for
//! the filtered covariance.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::error::{FilterError, Result};
use crate::linalg::{all_finite, spectral_from_dense, symmetrize, thresholded_reciprocal, PreArray};
use crate::model::ContinuousDiscreteModel;
use crate::propagation::{Covariance, GaussianBelief};
use crate::scalar::Scalar;

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle<T: Scalar>(a: T) -> T {
    let pi = T::lit(PI);
    let two_pi = T::lit(2.0 * PI);
    if a > -pi && a <= pi {
        return a;
    }
    let mut w = a - two_pi * ((a + pi) / two_pi).floor();
    if w <= -pi {
        w += two_pi;
    }
    w
}

fn wrap_masked<T: Scalar>(v: &mut DVector<T>, mask: &[bool]) {
    for (x, &angle) in v.iter_mut().zip(mask) {
        if angle {
            *x = wrap_angle(*x);
        }
    }
}

/// `R` and its square root `Q_R D_R^(1/2)`.
#[derive(Debug, Clone)]
pub struct MeasurementNoise<T: Scalar> {
    pub cov: DMatrix<T>,
    pub sqrt: DMatrix<T>,
}

impl<T: Scalar> MeasurementNoise<T> {
    pub fn new(cov: &DMatrix<T>) -> Result<Self> {
        Ok(Self {
            cov: cov.clone(),
            sqrt: spectral_from_dense(cov)?.sqrt_factor(),
        })
    }
}

/// Everything the update needs from the cubature nodes.
#[derive(Debug, Clone)]
pub struct CubatureWorkspace<T: Scalar> {
    /// `n x 2n` nodes.
    pub nodes: DMatrix<T>,
    /// `m x 2n` measurement images of the nodes.
    pub images: DMatrix<T>,
    /// Predicted measurement, the node-image mean.
    pub z_pred: DVector<T>,
    /// Centred state deviations scaled by `1/sqrt(2n)`.
    pub x_dev: DMatrix<T>,
    /// Centred measurement deviations scaled by `1/sqrt(2n)`, angles wrapped.
    pub z_dev: DMatrix<T>,
}

/// Evaluates the cubature rule at `N(mean, S S^T)`.
pub fn build_cubature<T: Scalar, M: ContinuousDiscreteModel<T> + ?Sized>(
    mean: &DVector<T>,
    sqrt: &DMatrix<T>,
    model: &M,
    k: usize,
) -> Result<CubatureWorkspace<T>> {
    let n = mean.len();
    if sqrt.nrows() != n || sqrt.ncols() != n {
        return Err(FilterError::InvalidInput("square root must be n x n".into()));
    }
    let m = model.meas_dim();
    let count = 2 * n;
    let spread = T::from_count(n).sqrt();
    let norm = T::one() / T::from_count(count).sqrt();

    let mut nodes = DMatrix::zeros(n, count);
    for j in 0..n {
        let offset = sqrt.column(j) * spread;
        nodes.set_column(j, &(mean + &offset));
        nodes.set_column(n + j, &(mean - &offset));
    }
    let mut images = DMatrix::zeros(m, count);
    for j in 0..count {
        let z = model.measure(k, &nodes.column(j).into_owned());
        if z.len() != m {
            return Err(FilterError::InvalidInput("measurement has wrong dimension".into()));
        }
        images.set_column(j, &z);
    }
    if !all_finite(&images) {
        return Err(FilterError::FilterDivergence("non-finite measurement prediction".into()));
    }
    let mask = model.angle_mask();
    let mut z_pred = images.column_mean();
    // Angles are averaged as offsets from one node so that images on both
    // sides of the branch cut are not averaged to zero.
    for (i, _) in mask.iter().enumerate().filter(|(_, &a)| a) {
        let anchor = images[(i, 0)];
        let offset = images
            .row(i)
            .iter()
            .fold(T::zero(), |acc, &v| acc + wrap_angle(v - anchor))
            / T::from_count(count);
        z_pred[i] = wrap_angle(anchor + offset);
    }
    let mut x_dev = DMatrix::zeros(n, count);
    let mut z_dev = DMatrix::zeros(m, count);
    for j in 0..count {
        x_dev.set_column(j, &((nodes.column(j) - mean) * norm));
        let mut dz = images.column(j) - &z_pred;
        wrap_masked(&mut dz, mask);
        z_dev.set_column(j, &(dz * norm));
    }
    Ok(CubatureWorkspace {
        nodes,
        images,
        z_pred,
        x_dev,
        z_dev,
    })
}

/// Spectral factors `(Q_Re, d_Re)` of `R_e = Z Z^T + R` from the pre-array
/// `[Z, S_R]`.
pub fn residual_factors_svd<T: Scalar>(z_dev: &DMatrix<T>, r_sqrt: &DMatrix<T>) -> Result<(DMatrix<T>, DVector<T>)> {
    let f = PreArray::from_blocks(z_dev, r_sqrt)
        .map_err(|_| FilterError::FilterDivergence("non-finite residual pre-array".into()))?
        .factor()?;
    Ok((f.q_factor().clone(), f.d_sqrt().clone()))
}

/// `X Z^T Q_Re diag(1/d^2) Q_Re^T`, with negligible `d^2` dropped.
pub fn gain_svd<T: Scalar>(x_dev: &DMatrix<T>, z_dev: &DMatrix<T>, q_re: &DMatrix<T>, d_re: &DVector<T>) -> DMatrix<T> {
    let inv = thresholded_reciprocal(&d_re.component_mul(d_re), q_re.nrows());
    x_dev * z_dev.transpose() * q_re * DMatrix::from_diagonal(&inv) * q_re.transpose()
}

/// Filtered belief plus the quantities a caller may want to inspect.
#[derive(Debug, Clone)]
pub struct UpdateOutcome<T: Scalar> {
    pub belief: GaussianBelief<T>,
    pub innovation: DVector<T>,
    pub gain: DMatrix<T>,
}

/// Form of the dense covariance update.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DenseForm {
    /// `P - K R_e K^T`.
    Standard,
    /// `(X - K Z)(X - K Z)^T + K R K^T`.
    Symmetric,
}

fn innovation<T: Scalar, M: ContinuousDiscreteModel<T> + ?Sized>(
    z: &DVector<T>,
    ws: &CubatureWorkspace<T>,
    model: &M,
) -> Result<DVector<T>> {
    if z.len() != ws.z_pred.len() {
        return Err(FilterError::InvalidInput("measurement has wrong dimension".into()));
    }
    let mut e = z - &ws.z_pred;
    wrap_masked(&mut e, model.angle_mask());
    Ok(e)
}

fn finite_mean<T: Scalar>(x: DVector<T>) -> Result<DVector<T>> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(x)
    } else {
        Err(FilterError::FilterDivergence("non-finite filtered estimate".into()))
    }
}

/// Cubature update of a dense-covariance belief.
pub fn measurement_update_dense<T: Scalar, M: ContinuousDiscreteModel<T> + ?Sized>(
    belief: &GaussianBelief<T>,
    z: &DVector<T>,
    model: &M,
    k: usize,
    noise: &MeasurementNoise<T>,
    form: DenseForm,
) -> Result<UpdateOutcome<T>> {
    let p = belief.cov.to_dense();
    let sqrt = belief.cov.symmetric_sqrt()?;
    let ws = build_cubature(&belief.mean, &sqrt, model, k)?;
    let e = innovation(z, &ws, model)?;

    let mut r_e = &ws.z_dev * ws.z_dev.transpose() + &noise.cov;
    symmetrize(&mut r_e);
    let p_xz = &ws.x_dev * ws.z_dev.transpose();
    let lu = r_e.clone().lu();
    if !lu.is_invertible() {
        return Err(FilterError::NumericalFailure("innovation covariance is singular".into()));
    }
    let gain = lu
        .solve(&p_xz.transpose())
        .ok_or_else(|| FilterError::NumericalFailure("innovation covariance is singular".into()))?
        .transpose();
    if !all_finite(&gain) {
        return Err(FilterError::NumericalFailure("non-finite gain".into()));
    }

    let mut p_next = match form {
        DenseForm::Standard => &p - &gain * &r_e * gain.transpose(),
        DenseForm::Symmetric => {
            let resid = &ws.x_dev - &gain * &ws.z_dev;
            &resid * resid.transpose() + &gain * &noise.cov * gain.transpose()
        }
    };
    symmetrize(&mut p_next);
    if !all_finite(&p_next) {
        return Err(FilterError::FilterDivergence("non-finite filtered covariance".into()));
    }
    let mean = finite_mean(&belief.mean + &gain * &e)?;
    Ok(UpdateOutcome {
        belief: GaussianBelief {
            mean,
            cov: Covariance::Dense(p_next),
        },
        innovation: e,
        gain,
    })
}

/// Cubature update carried out on spectral factors only.
pub fn measurement_update_svd<T: Scalar, M: ContinuousDiscreteModel<T> + ?Sized>(
    belief: &GaussianBelief<T>,
    z: &DVector<T>,
    model: &M,
    k: usize,
    noise: &MeasurementNoise<T>,
) -> Result<UpdateOutcome<T>> {
    let sqrt = belief.cov.symmetric_sqrt()?;
    let ws = build_cubature(&belief.mean, &sqrt, model, k)?;
    let e = innovation(z, &ws, model)?;

    let (q_re, d_re) = residual_factors_svd(&ws.z_dev, &noise.sqrt)?;
    let gain = gain_svd(&ws.x_dev, &ws.z_dev, &q_re, &d_re);
    if !all_finite(&gain) {
        return Err(FilterError::NumericalFailure("non-finite gain".into()));
    }
    let left = &ws.x_dev - &gain * &ws.z_dev;
    let right = &gain * &noise.sqrt;
    let factors = PreArray::from_blocks(&left, &right)
        .map_err(|_| FilterError::FilterDivergence("non-finite filtered pre-array".into()))?
        .factor()?;
    let mean = finite_mean(&belief.mean + &gain * &e)?;
    Ok(UpdateOutcome {
        belief: GaussianBelief {
            mean,
            cov: Covariance::Spectral(factors),
        },
        innovation: e,
        gain,
    })
}

/// Updates in the belief's own representation, standard dense form.
pub fn measurement_update<T: Scalar, M: ContinuousDiscreteModel<T> + ?Sized>(
    belief: &GaussianBelief<T>,
    z: &DVector<T>,
    model: &M,
    k: usize,
    noise: &MeasurementNoise<T>,
) -> Result<UpdateOutcome<T>> {
    match belief.cov {
        Covariance::Dense(_) => measurement_update_dense(belief, z, model, k, noise, DenseForm::Standard),
        Covariance::Spectral(_) => measurement_update_svd(belief, z, model, k, noise),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LinearModel, ModelStatistics};
    use crate::propagation::Representation;
    use approx::assert_relative_eq;

    fn scalar_model(r: f64) -> LinearModel<f64> {
        LinearModel::new(
            DMatrix::zeros(1, 1),
            DMatrix::identity(1, 1),
            ModelStatistics {
                diffusion: DMatrix::identity(1, 1),
                process_cov: DMatrix::identity(1, 1),
                meas_cov: DMatrix::from_element(1, 1, r),
                initial_mean: DVector::zeros(1),
                initial_cov: DMatrix::identity(1, 1),
                angle_mask: vec![false],
            },
        )
        .unwrap()
    }

    #[test]
    fn wrap_examples() {
        assert_relative_eq!(wrap_angle(0.5_f64), 0.5);
        assert_relative_eq!(wrap_angle(PI), PI);
        assert_relative_eq!(wrap_angle(-PI), PI);
        assert_relative_eq!(wrap_angle(3.0 * PI / 2.0), -PI / 2.0, epsilon = 1e-15);
        assert_relative_eq!(wrap_angle(-7.0 * PI / 2.0), PI / 2.0, epsilon = 1e-14);
    }

    #[test]
    fn nodes_recover_moments() {
        let model = scalar_model(1.0);
        let mean = DVector::from_vec(vec![3.0]);
        let ws = build_cubature(&mean, &DMatrix::from_element(1, 1, 2.0), &model, 1).unwrap();
        assert_relative_eq!(ws.nodes[(0, 0)], 5.0);
        assert_relative_eq!(ws.nodes[(0, 1)], 1.0);
        assert_relative_eq!(ws.z_pred[0], 3.0);
        assert_relative_eq!((&ws.x_dev * ws.x_dev.transpose())[(0, 0)], 4.0);
    }

    #[test]
    fn scalar_kalman_update() {
        let model = scalar_model(1.0);
        let z = DVector::from_vec(vec![2.0]);
        let noise = MeasurementNoise::new(model.meas_cov(1)).unwrap();
        for rep in [Representation::Dense, Representation::Spectral] {
            let b = GaussianBelief::new(DVector::zeros(1), DMatrix::identity(1, 1), rep).unwrap();
            let out = measurement_update(&b, &z, &model, 1, &noise).unwrap();
            assert_relative_eq!(out.gain[(0, 0)], 0.5, epsilon = 1e-14);
            assert_relative_eq!(out.belief.mean[0], 1.0, epsilon = 1e-14);
            assert_relative_eq!(out.belief.cov.to_dense()[(0, 0)], 0.5, epsilon = 1e-14);
        }
    }

    #[test]
    fn dense_forms_agree() {
        let model = scalar_model(0.25);
        let noise = MeasurementNoise::new(model.meas_cov(1)).unwrap();
        let b = GaussianBelief::new(DVector::zeros(1), DMatrix::from_element(1, 1, 3.0), Representation::Dense).unwrap();
        let z = DVector::from_vec(vec![1.0]);
        let a = measurement_update_dense(&b, &z, &model, 1, &noise, DenseForm::Standard).unwrap();
        let s = measurement_update_dense(&b, &z, &model, 1, &noise, DenseForm::Symmetric).unwrap();
        assert_relative_eq!(a.belief.cov.to_dense(), s.belief.cov.to_dense(), epsilon = 1e-14);
    }

    #[test]
    fn singular_innovation_covariance_fails_dense_only() {
        // Noise-free measurement of a state with zero variance.
        let model = scalar_model(0.0);
        let noise = MeasurementNoise::new(model.meas_cov(1)).unwrap();
        let z = DVector::from_vec(vec![0.0]);
        let dense = GaussianBelief::new(DVector::zeros(1), DMatrix::zeros(1, 1), Representation::Dense).unwrap();
        assert!(measurement_update(&dense, &z, &model, 1, &noise).is_err());
        let spectral = GaussianBelief::new(DVector::zeros(1), DMatrix::zeros(1, 1), Representation::Spectral).unwrap();
        let out = measurement_update(&spectral, &z, &model, 1, &noise).unwrap();
        assert_eq!(out.gain[(0, 0)], 0.0);
    }

    #[test]
    fn residual_factors_match_dense() {
        let z_dev = DMatrix::from_row_slice(2, 4, &[0.5, -0.5, 0.1, -0.1, 0.2, -0.2, 0.3, -0.3]);
        let r_sqrt = DMatrix::from_diagonal(&DVector::from_vec(vec![0.1, 0.2]));
        let (q, d) = residual_factors_svd(&z_dev, &r_sqrt).unwrap();
        let r_e = &z_dev * z_dev.transpose() + &r_sqrt * &r_sqrt;
        let rebuilt = &q * DMatrix::from_diagonal(&d.component_mul(&d)) * q.transpose();
        assert_relative_eq!(rebuilt, r_e, epsilon = 1e-14);
    }
}
