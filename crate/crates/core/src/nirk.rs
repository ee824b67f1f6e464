//! Variable-stepsize nested implicit Runge–Kutta pair of Gauss type, orders
//! 4 and 6, with combined local/global error control.
//!
//! One step from `(t, x)` with size `tau` solves for `y ≈ x(t + tau)`:
//!
//! ```text
//! u_k = a2[k][0] x + a2[k][1] y + tau (d2[k][0] f(x) + d2[k][1] f(y))                 k = 1, 2
//! v_j = a3[j][0] x + a3[j][1] y + tau (d3[j][0] f(x) + d3[j][1] f(y)
//!                                      + d3[j][2] f(u_1) + d3[j][3] f(u_2))            j = 1, 2, 3
//! y   = x + tau (b1 f(v_1) + b2 f(v_2) + b3 f(v_3))
//! ```
//!
//! The first level is cubic Hermite interpolation between the step ends; the
//! second level is the quintic interpolant matching values at both ends and
//! derivatives at both ends and at the first-level nodes; the final
//! quadrature is three-point Gauss–Legendre. With symmetric first-level nodes
//! the leading error of the first level cancels in the quadrature, which
//! gives order 6. The stability function is the (3,3) Padé approximant of
//! `exp`, so the scheme is A-stable.
//!
//! All stages are explicit in `(x, y)`, so the implicit solve is a simplified
//! Newton iteration on `y` alone.

use nalgebra::{DMatrix, DVector, LU};

use crate::error::{FilterError, Result};
use crate::model::ContinuousDiscreteModel;
use crate::scalar::Scalar;

/// Right-hand side of `x' = f(t, x)` and its Jacobian.
pub trait OdeSystem<T: Scalar> {
    fn rhs(&self, t: T, x: &DVector<T>) -> DVector<T>;
    fn jacobian(&self, t: T, x: &DVector<T>) -> DMatrix<T>;
}

/// Adapts a pair of closures.
pub struct FnSystem<F, J>(pub F, pub J);

impl<T, F, J> OdeSystem<T> for FnSystem<F, J>
where
    T: Scalar,
    F: Fn(T, &DVector<T>) -> DVector<T>,
    J: Fn(T, &DVector<T>) -> DMatrix<T>,
{
    fn rhs(&self, t: T, x: &DVector<T>) -> DVector<T> {
        (self.0)(t, x)
    }
    fn jacobian(&self, t: T, x: &DVector<T>) -> DMatrix<T> {
        (self.1)(t, x)
    }
}

/// Mean equation `x' = f(t, x)` of a model.
pub struct DriftSystem<'a, M: ?Sized>(pub &'a M);

impl<T: Scalar, M: ContinuousDiscreteModel<T> + ?Sized> OdeSystem<T> for DriftSystem<'_, M> {
    fn rhs(&self, t: T, x: &DVector<T>) -> DVector<T> {
        self.0.drift(t, x)
    }
    fn jacobian(&self, t: T, x: &DVector<T>) -> DMatrix<T> {
        self.0.jacobian(t, x)
    }
}

/// Tableau of the nested pair.
#[derive(Debug, Clone, PartialEq)]
pub struct NirkCoefficients<T: Scalar> {
    pub a2: [[T; 2]; 2],
    pub d2: [[T; 2]; 2],
    pub a3: [[T; 2]; 3],
    pub d3: [[T; 4]; 3],
    pub b: [T; 3],
    pub c2: [T; 2],
    pub c3: [T; 3],
}

impl<T: Scalar> NirkCoefficients<T> {
    /// Gauss-type pair: both levels use the Gauss–Legendre outer nodes
    /// `1/2 ∓ sqrt(15)/10`, the second level adds the mid-point `1/2`.
    pub fn gauss6() -> Self {
        let r = 15.0_f64.sqrt() / 10.0;
        let c2 = [0.5 - r, 0.5 + r];
        let c3 = [0.5 - r, 0.5, 0.5 + r];

        let mut a2 = [[T::zero(); 2]; 2];
        let mut d2 = [[T::zero(); 2]; 2];
        for (k, &c) in c2.iter().enumerate() {
            let h = hermite_cubic(c);
            a2[k] = [T::lit(h[0]), T::lit(h[1])];
            d2[k] = [T::lit(h[2]), T::lit(h[3])];
        }

        let basis = quintic_basis(c2);
        let mut a3 = [[T::zero(); 2]; 3];
        let mut d3 = [[T::zero(); 4]; 3];
        for (j, &c) in c3.iter().enumerate() {
            let w = basis.evaluate(c);
            a3[j] = [T::lit(w[0]), T::lit(w[1])];
            d3[j] = [T::lit(w[2]), T::lit(w[3]), T::lit(w[4]), T::lit(w[5])];
        }

        Self {
            a2,
            d2,
            a3,
            d3,
            b: [T::lit(5.0 / 18.0), T::lit(4.0 / 9.0), T::lit(5.0 / 18.0)],
            c2: [T::lit(c2[0]), T::lit(c2[1])],
            c3: [T::lit(c3[0]), T::lit(c3[1]), T::lit(c3[2])],
        }
    }
}

/// Weights `[x0, x1, f0, f1]` of the cubic Hermite interpolant at `c`.
fn hermite_cubic(c: f64) -> [f64; 4] {
    let one_minus = 1.0 - c;
    [
        (1.0 + 2.0 * c) * one_minus * one_minus,
        c * c * (3.0 - 2.0 * c),
        c * one_minus * one_minus,
        -c * c * one_minus,
    ]
}

/// Quintic interpolant on `[0, 1]` from `p(0), p(1), p'(0), p'(1), p'(s1), p'(s2)`.
struct QuinticBasis {
    /// Column `i` holds the monomial coefficients of the `i`-th cardinal polynomial.
    coefficients: DMatrix<f64>,
}

fn quintic_basis(nodes: [f64; 2]) -> QuinticBasis {
    let value_row = |s: f64| (0..6).map(move |p| s.powi(p));
    let slope_row = |s: f64| {
        (0..6).map(move |p| if p == 0 { 0.0 } else { p as f64 * s.powi(p - 1) })
    };
    let rows: Vec<f64> = value_row(0.0)
        .chain(value_row(1.0))
        .chain(slope_row(0.0))
        .chain(slope_row(1.0))
        .chain(slope_row(nodes[0]))
        .chain(slope_row(nodes[1]))
        .collect();
    let system = DMatrix::from_row_slice(6, 6, &rows);
    let coefficients = system
        .try_inverse()
        .expect("quintic interpolation nodes are unisolvent");
    QuinticBasis { coefficients }
}

impl QuinticBasis {
    fn evaluate(&self, s: f64) -> [f64; 6] {
        let powers = DVector::from_fn(6, |p, _| s.powi(p as i32));
        let w = self.coefficients.transpose() * powers;
        [w[0], w[1], w[2], w[3], w[4], w[5]]
    }
}

/// `max_i |v_i| / (|x_i| + 1)`.
pub fn scaled_norm<T: Scalar>(v: &DVector<T>, x: &DVector<T>) -> T {
    v.iter()
        .zip(x.iter())
        .fold(T::zero(), |acc, (vi, xi)| acc.max(vi.abs() / (xi.abs() + T::one())))
}

/// Result of one attempted step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome<T: Scalar> {
    pub x_next: DVector<T>,
    /// Second-level stage at `t + tau / 2`.
    pub x_mid: DVector<T>,
    /// Local error estimate of `x_next`.
    pub le: DVector<T>,
    pub scaled_le: T,
    pub accepted: bool,
    pub tau_used: T,
    pub tau_next: T,
    pub newton_iterations: usize,
}

/// Mesh `t_0 < t_1 < ... < t_end` generated inside one interval.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveMesh<T: Scalar> {
    pub nodes: Vec<T>,
}

impl<T: Scalar> AdaptiveMesh<T> {
    pub fn steps(&self) -> impl Iterator<Item = (T, T)> + '_ {
        self.nodes.windows(2).map(|w| (w[0], w[1] - w[0]))
    }

    pub fn len(&self) -> usize {
        self.nodes.len().saturating_sub(1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Mean trajectory over one interval.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalSolution<T: Scalar> {
    pub x_end: DVector<T>,
    pub mesh: AdaptiveMesh<T>,
    /// Mid-point stage of each mesh step.
    pub mid_states: Vec<DVector<T>>,
    /// Accumulated global error estimate at `t_end`.
    pub global_err: DVector<T>,
    /// Local tolerance the accepted pass ran with.
    pub eps_loc: T,
    /// Steps attempted over all passes, rejected ones included.
    pub attempted_steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NirkOptions<T: Scalar> {
    /// Bound on the scaled global error at the interval end.
    pub eps_g: T,
    /// Lower limit for the local tolerance when tightening.
    pub eps_loc_floor: T,
    pub max_steps: usize,
    pub max_newton_iterations: usize,
}

impl<T: Scalar> NirkOptions<T> {
    pub fn new(eps_g: T) -> Self {
        Self {
            eps_g,
            eps_loc_floor: T::lit(1e-14),
            max_steps: 1_000_000,
            max_newton_iterations: 50,
        }
    }
}

/// Adaptive integrator. Holds only configuration; every call is independent.
#[derive(Debug, Clone)]
pub struct NirkIntegrator<T: Scalar> {
    coefficients: NirkCoefficients<T>,
    options: NirkOptions<T>,
}

/// Stage values for a candidate endpoint.
struct Stages<T: Scalar> {
    f_end: DVector<T>,
    second: [DVector<T>; 3],
    second_rhs: [DVector<T>; 3],
}

impl<T: Scalar> NirkCoefficients<T> {
    fn stages<S: OdeSystem<T> + ?Sized>(
        &self,
        sys: &S,
        t: T,
        x: &DVector<T>,
        f_start: &DVector<T>,
        y: &DVector<T>,
        tau: T,
    ) -> Stages<T> {
        let f_end = sys.rhs(t + tau, y);
        let first: Vec<DVector<T>> = (0..2)
            .map(|k| {
                let u = x * self.a2[k][0] + y * self.a2[k][1]
                    + (f_start * self.d2[k][0] + &f_end * self.d2[k][1]) * tau;
                sys.rhs(t + self.c2[k] * tau, &u)
            })
            .collect();
        let second: [DVector<T>; 3] = std::array::from_fn(|j| {
            let d = &self.d3[j];
            x * self.a3[j][0]
                + y * self.a3[j][1]
                + (f_start * d[0] + &f_end * d[1] + &first[0] * d[2] + &first[1] * d[3]) * tau
        });
        let second_rhs: [DVector<T>; 3] =
            std::array::from_fn(|j| sys.rhs(t + self.c3[j] * tau, &second[j]));
        Stages {
            f_end,
            second,
            second_rhs,
        }
    }

    /// `I - Z sum_j b_j dv_j/dy` with `Z = tau J`, the Newton matrix of the
    /// endpoint equation for a Jacobian frozen at the step start.
    fn newton_matrix(&self, z: &DMatrix<T>) -> DMatrix<T> {
        let n = z.nrows();
        let eye = DMatrix::<T>::identity(n, n);
        let du: Vec<DMatrix<T>> = (0..2)
            .map(|k| &eye * self.a2[k][1] + z * self.d2[k][1])
            .collect();
        let mut weighted = DMatrix::<T>::zeros(n, n);
        for j in 0..3 {
            let d = &self.d3[j];
            let dv = &eye * self.a3[j][1] + z * d[1] + z * (&du[0] * d[2] + &du[1] * d[3]);
            weighted += dv * self.b[j];
        }
        eye - z * weighted
    }
}

/// Solves one step of the pair and evaluates the local error estimate.
///
/// The returned outcome has `accepted` set from `eps_loc` and `tau_next`
/// chosen by the step-size controller.
#[allow(clippy::too_many_arguments)]
pub fn nirk_step<T: Scalar, S: OdeSystem<T> + ?Sized>(
    coefficients: &NirkCoefficients<T>,
    sys: &S,
    t: T,
    x: &DVector<T>,
    tau: T,
    tol_newton: T,
    eps_loc: T,
    max_newton_iterations: usize,
) -> Result<StepOutcome<T>> {
    if !(tau > T::zero()) {
        return Err(FilterError::InvalidInput("step size must be positive".into()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(FilterError::InvalidInput("step start is not finite".into()));
    }
    let f_start = sys.rhs(t, x);
    let z = sys.jacobian(t, x) * tau;
    let lu: LU<T, nalgebra::Dyn, nalgebra::Dyn> = coefficients.newton_matrix(&z).lu();
    if !lu.is_invertible() {
        return Err(FilterError::StepRejected("singular Newton matrix".into()));
    }

    let tol_newton = tol_newton.max(T::lit(8.0) * T::ulp());
    let b = &coefficients.b;
    let mut y = x.clone();
    let mut converged = false;
    let mut iterations = 0;
    let mut previous_update = T::max_value().unwrap_or_else(|| T::lit(f64::MAX));
    while iterations < max_newton_iterations {
        iterations += 1;
        let st = coefficients.stages(sys, t, x, &f_start, &y, tau);
        let residual = &y
            - x
            - (&st.second_rhs[0] * b[0] + &st.second_rhs[1] * b[1] + &st.second_rhs[2] * b[2]) * tau;
        let update = lu
            .solve(&residual)
            .ok_or_else(|| FilterError::StepRejected("singular Newton matrix".into()))?;
        y -= &update;
        if y.iter().any(|v| !v.is_finite()) {
            return Err(FilterError::StepRejected("Newton iteration produced non-finite values".into()));
        }
        let size = scaled_norm(&update, &y);
        if size <= tol_newton {
            converged = true;
            break;
        }
        if iterations > 2 && size > T::lit(2.0) * previous_update {
            break;
        }
        previous_update = size;
    }
    if !converged {
        return Err(FilterError::StepRejected(format!(
            "Newton iteration did not converge in {iterations} iterations"
        )));
    }

    let st = coefficients.stages(sys, t, x, &f_start, &y, tau);
    let g = &st.second_rhs;
    let le = (&g[1] * T::lit(2.0 / 3.0) - &g[0] * T::lit(5.0 / 6.0) - &g[2] * T::lit(5.0 / 6.0)
        + &f_start * T::lit(0.5)
        + &st.f_end * T::lit(0.5))
        * (tau / T::lit(3.0));
    if le.iter().any(|v| !v.is_finite()) {
        return Err(FilterError::StepRejected("non-finite local error".into()));
    }
    let scaled_le = scaled_norm(&le, &y);
    let accepted = scaled_le <= eps_loc;
    let tau_next = tau * step_factor(scaled_le, eps_loc);
    let [_, x_mid, _] = st.second;
    Ok(StepOutcome {
        x_next: y,
        x_mid,
        le,
        scaled_le,
        accepted,
        tau_used: tau,
        tau_next,
        newton_iterations: iterations,
    })
}

/// `min(5, max(0.1, 0.9 (eps_loc / err)^(1/5)))`.
fn step_factor<T: Scalar>(err: T, eps_loc: T) -> T {
    let max_growth = T::lit(5.0);
    if err <= T::zero() {
        return max_growth;
    }
    let raw = T::lit(0.9) * (eps_loc / err).powf(T::lit(0.2));
    raw.max(T::lit(0.1)).min(max_growth)
}

impl<T: Scalar> NirkIntegrator<T> {
    pub fn new(options: NirkOptions<T>) -> Result<Self> {
        if !(options.eps_g > T::zero()) {
            return Err(FilterError::InvalidInput("global tolerance must be positive".into()));
        }
        Ok(Self {
            coefficients: NirkCoefficients::gauss6(),
            options,
        })
    }

    pub fn coefficients(&self) -> &NirkCoefficients<T> {
        &self.coefficients
    }

    pub fn options(&self) -> &NirkOptions<T> {
        &self.options
    }

    fn tol_newton(&self, eps_loc: T) -> T {
        (T::lit(0.01) * eps_loc).max(T::lit(64.0) * T::ulp())
    }

    /// One attempted step with Newton tolerance `0.01 * eps_loc`.
    pub fn step<S: OdeSystem<T> + ?Sized>(
        &self,
        sys: &S,
        t: T,
        x: &DVector<T>,
        tau: T,
        eps_loc: T,
    ) -> Result<StepOutcome<T>> {
        nirk_step(
            &self.coefficients,
            sys,
            t,
            x,
            tau,
            self.tol_newton(eps_loc),
            eps_loc,
            self.options.max_newton_iterations,
        )
    }

    /// Integrates `x' = f(t, x)` over `[t_start, t_end]` under the combined
    /// local/global control.
    pub fn integrate_interval<S: OdeSystem<T> + ?Sized>(
        &self,
        sys: &S,
        t_start: T,
        t_end: T,
        x_start: &DVector<T>,
    ) -> Result<IntervalSolution<T>> {
        self.integrate_interval_guarded(sys, t_start, t_end, x_start, |_, _, _| true)
    }

    /// Like [`integrate_interval`](Self::integrate_interval), but every step
    /// that passes the error test is also offered to `guard(t, tau, x_mid)`;
    /// a `false` return rejects it and halves the step.
    pub fn integrate_interval_guarded<S, G>(
        &self,
        sys: &S,
        t_start: T,
        t_end: T,
        x_start: &DVector<T>,
        mut guard: G,
    ) -> Result<IntervalSolution<T>>
    where
        S: OdeSystem<T> + ?Sized,
        G: FnMut(T, T, &DVector<T>) -> bool,
    {
        if !(t_end >= t_start) {
            return Err(FilterError::InvalidInput("interval end precedes its start".into()));
        }
        if t_end == t_start {
            return Ok(IntervalSolution {
                x_end: x_start.clone(),
                mesh: AdaptiveMesh { nodes: vec![t_start] },
                mid_states: Vec::new(),
                global_err: DVector::zeros(x_start.len()),
                eps_loc: self.options.eps_g,
                attempted_steps: 0,
            });
        }

        let mut eps_loc = self.options.eps_g;
        let mut attempted = 0usize;
        loop {
            let pass = self.single_pass(sys, t_start, t_end, x_start, eps_loc, &mut attempted, &mut guard)?;
            let achieved = scaled_norm(&pass.global_err, &pass.x_end);
            if achieved <= self.options.eps_g {
                return Ok(IntervalSolution {
                    eps_loc,
                    attempted_steps: attempted,
                    ..pass
                });
            }
            let tighter = eps_loc * T::lit(0.5);
            if tighter < self.options.eps_loc_floor {
                return Err(FilterError::AccuracyNotAttainable {
                    achieved: achieved.as_f64(),
                });
            }
            eps_loc = tighter;
        }
    }

    fn initial_step<S: OdeSystem<T> + ?Sized>(&self, sys: &S, t: T, x: &DVector<T>, span: T, eps_loc: T) -> T {
        let f = sys.rhs(t, x);
        let curvature = sys.jacobian(t, x) * &f;
        let d1 = scaled_norm(&f, x);
        let d2 = scaled_norm(&curvature, x).sqrt();
        let rate = d1.max(d2);
        let default = span / T::lit(10.0);
        if rate > T::zero() && rate.is_finite() {
            default.min(T::lit(0.5) * eps_loc.powf(T::lit(0.2)) / rate)
        } else {
            default
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn single_pass<S, G>(
        &self,
        sys: &S,
        t_start: T,
        t_end: T,
        x_start: &DVector<T>,
        eps_loc: T,
        attempted: &mut usize,
        guard: &mut G,
    ) -> Result<IntervalSolution<T>>
    where
        S: OdeSystem<T> + ?Sized,
        G: FnMut(T, T, &DVector<T>) -> bool,
    {
        let span = t_end - t_start;
        let mut t = t_start;
        let mut x = x_start.clone();
        let mut nodes = vec![t_start];
        let mut mid_states = Vec::new();
        let mut global_err = DVector::zeros(x.len());
        let mut tau = self.initial_step(sys, t, &x, span, eps_loc);
        let min_step = T::lit(16.0) * T::ulp() * t_start.abs().max(t_end.abs()).max(span);

        while t < t_end {
            *attempted += 1;
            if *attempted > self.options.max_steps {
                return Err(FilterError::StepBudgetExceeded {
                    budget: self.options.max_steps,
                });
            }
            let remaining = t_end - t;
            let last = tau >= remaining * T::lit(0.99);
            if last {
                tau = remaining;
            }
            if tau < min_step {
                return Err(FilterError::StepSizeUnderflow { time: t.as_f64() });
            }
            let outcome = match self.step(sys, t, &x, tau, eps_loc) {
                Ok(o) => o,
                Err(FilterError::StepRejected(_)) => {
                    tau *= T::lit(0.5);
                    continue;
                }
                Err(e) => return Err(e),
            };
            if !outcome.accepted {
                tau = outcome.tau_next;
                continue;
            }
            if !guard(t, tau, &outcome.x_mid) {
                tau *= T::lit(0.5);
                continue;
            }
            t = if last { t_end } else { t + tau };
            global_err -= &outcome.le;
            x = outcome.x_next;
            mid_states.push(outcome.x_mid);
            nodes.push(t);
            tau = outcome.tau_next;
        }

        Ok(IntervalSolution {
            x_end: x,
            mesh: AdaptiveMesh { nodes },
            mid_states,
            global_err,
            eps_loc,
            attempted_steps: *attempted,
        })
    }

    /// Fixed-step integration with the controller disabled. Returns the
    /// endpoint and the local error estimate of every step.
    pub fn integrate_fixed<S: OdeSystem<T> + ?Sized>(
        &self,
        sys: &S,
        t_start: T,
        t_end: T,
        x_start: &DVector<T>,
        steps: usize,
    ) -> Result<(DVector<T>, Vec<DVector<T>>)> {
        if steps == 0 {
            return Err(FilterError::InvalidInput("need at least one step".into()));
        }
        let tau = (t_end - t_start) / T::from_count(steps);
        let mut x = x_start.clone();
        let mut errors = Vec::with_capacity(steps);
        for i in 0..steps {
            let t = t_start + tau * T::from_count(i);
            let o = nirk_step(
                &self.coefficients,
                sys,
                t,
                &x,
                tau,
                T::lit(1e3) * T::ulp(),
                T::max_value().unwrap_or_else(|| T::lit(f64::MAX)),
                self.options.max_newton_iterations,
            )?;
            errors.push(o.le);
            x = o.x_next;
        }
        Ok((x, errors))
    }
}
