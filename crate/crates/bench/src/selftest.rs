//! Quick numerical self-checks: integrator orders, covariance step order,
//! pre-array Gram identities and exactness of the cubature update on linear
//! models.

use cdfilter::cubature::{build_cubature, measurement_update, MeasurementNoise};
use cdfilter::linalg::{relative_discrepancy, PreArray};
use cdfilter::model::ModelStatistics;
use cdfilter::nirk::{FnSystem, NirkIntegrator, NirkOptions};
use cdfilter::propagation::{midpoint_matrices, propagate_cov_dense, ProcessNoise};
use cdfilter::{GaussianBelief, LinearModel, Representation};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{HarnessError, Result};

/// Least-squares slope of `log(err)` against `log(step)`.
pub fn fitted_slope(steps: &[f64], errors: &[f64]) -> f64 {
    let xs: Vec<f64> = steps.iter().map(|s| s.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderReport {
    pub steps: Vec<f64>,
    pub errors: Vec<f64>,
    pub slope: f64,
}

#[allow(clippy::type_complexity)]
fn growth() -> FnSystem<impl Fn(f64, &DVector<f64>) -> DVector<f64>, impl Fn(f64, &DVector<f64>) -> DMatrix<f64>> {
    FnSystem(
        |_t, x: &DVector<f64>| x.clone(),
        |_t, x: &DVector<f64>| DMatrix::identity(x.len(), x.len()),
    )
}

/// Endpoint error of fixed-step integration of `x' = x` over `[0, 1]` with
/// 1, 2, 4, 8 and 16 steps.
pub fn endpoint_order() -> Result<OrderReport> {
    let integ = NirkIntegrator::new(NirkOptions::new(1e-4))?;
    let sys = growth();
    let x0 = DVector::from_element(1, 1.0);
    let mut steps = Vec::new();
    let mut errors = Vec::new();
    for k in 0..5 {
        let count = 1usize << k;
        let (x, _) = integ.integrate_fixed(&sys, 0.0, 1.0, &x0, count)?;
        steps.push(1.0 / count as f64);
        errors.push((x[0] - 1f64.exp()).abs());
    }
    let slope = fitted_slope(&steps, &errors);
    Ok(OrderReport { steps, errors, slope })
}

/// Size of the embedded local error estimate of one step of `x' = x` from
/// `x = 1`, for step sizes `1, 1/2, ..., 1/16`.
pub fn local_estimate_order() -> Result<OrderReport> {
    let integ = NirkIntegrator::new(NirkOptions::new(1e-4))?;
    let sys = growth();
    let x0 = DVector::from_element(1, 1.0);
    let mut steps = Vec::new();
    let mut errors = Vec::new();
    for k in 0..5 {
        let tau = 0.5f64.powi(k);
        let (_, le) = integ.integrate_fixed(&sys, 0.0, tau, &x0, 1)?;
        steps.push(tau);
        errors.push(le[0][0].abs());
    }
    let slope = fitted_slope(&steps, &errors);
    Ok(OrderReport { steps, errors, slope })
}

/// Exact `P(t)` of `P' = A P + P A^T + W` by the block exponential of
/// `[[-A, W], [0, A^T]] t`.
pub fn lyapunov_exact(a: &DMatrix<f64>, w: &DMatrix<f64>, p0: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
    let n = a.nrows();
    let mut block = DMatrix::zeros(2 * n, 2 * n);
    block.view_mut((0, 0), (n, n)).copy_from(&(-a * t));
    block.view_mut((0, n), (n, n)).copy_from(&(w * t));
    block.view_mut((n, n), (n, n)).copy_from(&(a.transpose() * t));
    let e = block.exp();
    let phi_t = e.view((n, n), (n, n)).into_owned();
    let phi = phi_t.transpose();
    let gain = &phi * e.view((0, n), (n, n));
    &phi * p0 * phi_t + gain
}

/// Global error of the mid-point covariance step on a fixed stable LTI
/// system over `[0, 1]` with 2, 4, 8, 16 and 32 steps.
pub fn lyapunov_order() -> Result<OrderReport> {
    let a = DMatrix::from_row_slice(3, 3, &[-1.0, 0.6, 0.0, -0.4, -0.5, 0.3, 0.2, 0.0, -2.0]);
    let g = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.5, 1.0, 0.0, 0.3]);
    let q = DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.1, 0.2]);
    let p0 = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.1, 0.3, 1.0, -0.2, 0.1, -0.2, 0.5]);
    let noise = ProcessNoise::new(&g, &q)?;
    let exact = lyapunov_exact(&a, &noise.gqg, &p0, 1.0);
    let a_sys = a.clone();
    let sys = FnSystem(
        move |_t, x: &DVector<f64>| &a_sys * x,
        move |_t, _x: &DVector<f64>| a.clone(),
    );
    let x = DVector::zeros(3);
    let mut steps = Vec::new();
    let mut errors = Vec::new();
    for k in 1..=5 {
        let count = 1usize << k;
        let tau = 1.0 / count as f64;
        let mut p = p0.clone();
        for i in 0..count {
            let mm = midpoint_matrices(&sys, (i as f64 + 0.5) * tau, &x, tau)?;
            p = propagate_cov_dense(&p, &mm, &noise, tau)?;
        }
        steps.push(tau);
        errors.push((&p - &exact).amax());
    }
    let slope = fitted_slope(&steps, &errors);
    Ok(OrderReport { steps, errors, slope })
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let l = random_matrix(rng, n, n);
    &l * l.transpose() + DMatrix::identity(n, n) * 0.1
}

/// Worst relative Gram-reconstruction error of each pre-array kind.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GramReport {
    pub time_update: f64,
    pub residual: f64,
    pub filtered: f64,
}

impl GramReport {
    pub fn worst(&self) -> f64 {
        self.time_update.max(self.residual).max(self.filtered)
    }
}

/// Factors random pre-arrays of the time update `[M S_P, sqrt(tau) K S_GQ]`,
/// the residual `[Z, S_R]` and the filtered covariance
/// `[X - K Z, K S_R]`, and compares each reconstruction with the covariance
/// the array stands for.
pub fn gram_identities(instances: usize, seed: u64) -> Result<GramReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = GramReport {
        time_update: 0.0,
        residual: 0.0,
        filtered: 0.0,
    };
    for _ in 0..instances {
        let n = rng.random_range(2..=7);
        let q = rng.random_range(1..=n);
        let m = rng.random_range(1..=3);
        let tau: f64 = rng.random_range(0.01..1.0);

        let s_p = random_matrix(&mut rng, n, n);
        let m_half = random_matrix(&mut rng, n, n) + DMatrix::identity(n, n);
        let k_half = random_matrix(&mut rng, n, n) + DMatrix::identity(n, n);
        let s_gq = random_matrix(&mut rng, n, q);
        let pre = PreArray::from_blocks(&(&m_half * &s_p), &(&k_half * &s_gq * tau.sqrt()))?;
        let expected = &m_half * &s_p * s_p.transpose() * m_half.transpose()
            + &k_half * &s_gq * s_gq.transpose() * k_half.transpose() * tau;
        report.time_update = report
            .time_update
            .max(relative_discrepancy(&pre.factor()?.reconstruct(), &expected));

        let x_dev = random_matrix(&mut rng, n, 2 * n);
        let z_dev = random_matrix(&mut rng, m, 2 * n);
        let s_r = random_matrix(&mut rng, m, m) + DMatrix::identity(m, m);
        let r = &s_r * s_r.transpose();
        let pre = PreArray::from_blocks(&z_dev, &s_r)?;
        let r_e = &z_dev * z_dev.transpose() + &r;
        report.residual = report.residual.max(relative_discrepancy(&pre.factor()?.reconstruct(), &r_e));

        let r_e_inv = r_e
            .clone()
            .try_inverse()
            .ok_or_else(|| HarnessError::Runtime("singular residual covariance".into()))?;
        let gain = &x_dev * z_dev.transpose() * r_e_inv;
        let pre = PreArray::from_blocks(&(&x_dev - &gain * &z_dev), &(&gain * &s_r))?;
        let p = &x_dev * x_dev.transpose();
        let expected = &p - &gain * &r_e * gain.transpose();
        report.filtered = report.filtered.max(relative_discrepancy(&pre.factor()?.reconstruct(), &expected));
    }
    Ok(report)
}

/// Worst relative gap between the cubature update, in both representations,
/// and the Kalman update on random linear measurement models.
pub fn affine_exactness(instances: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let n = rng.random_range(1..=6);
        let m = rng.random_range(1..=3);
        let h = random_matrix(&mut rng, m, n);
        let r = random_spd(&mut rng, m);
        let p = random_spd(&mut rng, n);
        let mean = DVector::from_fn(n, |_, _| rng.random_range(-5.0..5.0));
        let z = DVector::from_fn(m, |_, _| rng.random_range(-5.0..5.0));
        let model = LinearModel::new(
            DMatrix::zeros(n, n),
            h.clone(),
            ModelStatistics {
                diffusion: DMatrix::identity(n, n),
                process_cov: DMatrix::zeros(n, n),
                meas_cov: r.clone(),
                initial_mean: mean.clone(),
                initial_cov: p.clone(),
                angle_mask: vec![false; m],
            },
        )?;
        let s = &h * &p * h.transpose() + &r;
        let s_inv = s
            .clone()
            .try_inverse()
            .ok_or_else(|| HarnessError::Runtime("singular innovation covariance".into()))?;
        let gain = &p * h.transpose() * s_inv;
        let x_kf = &mean + &gain * (&z - &h * &mean);
        let p_kf = &p - &gain * &s * gain.transpose();
        let noise = MeasurementNoise::new(&r)?;
        for rep in [Representation::Dense, Representation::Spectral] {
            let belief = GaussianBelief::new(mean.clone(), p.clone(), rep)?;
            let out = measurement_update(&belief, &z, &model, 1, &noise)?;
            let x_gap = relative_discrepancy(
                &DMatrix::from_column_slice(n, 1, out.belief.mean.as_slice()),
                &DMatrix::from_column_slice(n, 1, x_kf.as_slice()),
            );
            worst = worst.max(x_gap).max(relative_discrepancy(&out.belief.cov.to_dense(), &p_kf));
        }
        // The node images alone must reproduce H x and H P H^T.
        let sqrt = GaussianBelief::new(mean.clone(), p.clone(), Representation::Spectral)?
            .cov
            .symmetric_sqrt()?;
        let ws = build_cubature(&mean, &sqrt, &model, 1)?;
        let hx = &h * &mean;
        worst = worst.max(relative_discrepancy(
            &DMatrix::from_column_slice(m, 1, ws.z_pred.as_slice()),
            &DMatrix::from_column_slice(m, 1, hx.as_slice()),
        ));
    }
    Ok(worst)
}

/// Text summary of every check with its pass band.
pub fn summary() -> Result<(String, bool)> {
    let mut ok = true;
    let mut out = String::new();
    let mut line = |name: &str, value: f64, pass: bool| {
        ok &= pass;
        out.push_str(&format!("{} {name}: {value:.3e}\n", if pass { "PASS" } else { "FAIL" }));
    };
    let e = endpoint_order()?;
    line("integrator endpoint order", e.slope, (5.5..=6.5).contains(&e.slope));
    let l = local_estimate_order()?;
    line("local error estimate order", l.slope, (4.5..=5.5).contains(&l.slope));
    let c = lyapunov_order()?;
    line("mid-point covariance order", c.slope, (1.6..=2.4).contains(&c.slope));
    let g = gram_identities(1000, 1)?;
    line("gram identity, time update", g.time_update, g.time_update <= 1e-12);
    line("gram identity, residual", g.residual, g.residual <= 1e-12);
    line("gram identity, filtered", g.filtered, g.filtered <= 1e-12);
    let a = affine_exactness(100, 2)?;
    line("cubature vs Kalman on linear models", a, a <= 1e-10);
    Ok((out, ok))
}
