//! Scalar primitives shared by every solver: the normal CDF, the Gaussian heat
//! kernel, the damping kernel `Xi`, the uniform time grid, and a numerical
//! checker for the three equivalent forms of the time-derivative identity for
//! single-layer heat potentials.

use std::f64::consts::{PI, SQRT_2};

use serde::Serialize;

use crate::error::{domain, Result};
use crate::quadrature::trapezoid;

/// Uniform grid `t_n = n * delta`, `n = 0..=n_steps`, on `[0, t_end]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridSpec {
    t_end: f64,
    n_steps: usize,
}

impl GridSpec {
    pub fn new(t_end: f64, n_steps: usize) -> Result<Self> {
        if !(t_end.is_finite() && t_end > 0.0) {
            return Err(domain(format!("horizon must be positive, got {t_end}")));
        }
        if n_steps < 2 {
            return Err(domain(format!("need at least 2 steps, got {n_steps}")));
        }
        Ok(Self { t_end, n_steps })
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn delta(&self) -> f64 {
        self.t_end / self.n_steps as f64
    }

    /// Time of node `n`.
    pub fn node(&self, n: usize) -> f64 {
        n as f64 * self.delta()
    }

    /// All node times including `t_0 = 0`.
    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.n_steps).map(|n| self.node(n)).collect()
    }

    /// The grid with twice as many steps over the same horizon.
    pub fn refined(&self) -> Self {
        Self {
            t_end: self.t_end,
            n_steps: 2 * self.n_steps,
        }
    }
}

/// Standard normal cumulative distribution function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

/// Gaussian density `exp(-(y - z)^2 / 2t) / sqrt(2 pi t)`.
pub fn heat_kernel(t: f64, y: f64, z: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(domain(format!("heat kernel needs t > 0, got {t}")));
    }
    Ok(gauss(t, y - z))
}

#[inline]
pub(crate) fn gauss(t: f64, d: f64) -> f64 {
    (-d * d / (2.0 * t)).exp() / (2.0 * PI * t).sqrt()
}

/// `exp(-psi^2 / 2(t - t'))`, with the value 1 on the diagonal.
pub fn xi_kernel(t: f64, t_prime: f64, psi: f64) -> Result<f64> {
    if t < t_prime {
        return Err(domain(format!("xi kernel needs t >= t', got t={t}, t'={t_prime}")));
    }
    if t == t_prime {
        return Ok(1.0);
    }
    Ok((-psi * psi / (2.0 * (t - t_prime))).exp())
}

/// A smooth two-time kernel `Xi(t, t')` with `Xi(t, t) = 1`.
///
/// Derivatives default to central differences; override them when closed
/// forms are available.
pub trait SmoothKernel {
    fn value(&self, t: f64, tp: f64) -> f64;

    fn d_t(&self, t: f64, tp: f64) -> f64 {
        let h = FD_STEP * (1.0 + t.abs());
        (self.value(t + h, tp) - self.value(t - h, tp)) / (2.0 * h)
    }

    fn d_tp(&self, t: f64, tp: f64) -> f64 {
        let h = FD_STEP * (1.0 + tp.abs());
        (self.value(t, tp + h) - self.value(t, tp - h)) / (2.0 * h)
    }

    fn d_t_tp(&self, t: f64, tp: f64) -> f64 {
        let h = FD_STEP * (1.0 + tp.abs());
        (self.d_t(t, tp + h) - self.d_t(t, tp - h)) / (2.0 * h)
    }
}

/// A smooth weight `nu(t')`.
pub trait SmoothWeight {
    fn value(&self, t: f64) -> f64;

    fn deriv(&self, t: f64) -> f64 {
        let h = FD_STEP * (1.0 + t.abs());
        (self.value(t + h) - self.value(t - h)) / (2.0 * h)
    }
}

const FD_STEP: f64 = 1e-5;

impl<F: Fn(f64, f64) -> f64> SmoothKernel for F {
    fn value(&self, t: f64, tp: f64) -> f64 {
        self(t, tp)
    }
}

impl<F: Fn(f64) -> f64> SmoothWeight for F {
    fn value(&self, t: f64) -> f64 {
        self(t)
    }
}

/// `int_0^t Xi(t, t') nu(t') / sqrt(2 pi (t - t')) dt'`, via `t - t' = u^2`.
fn single_layer(xi: &impl SmoothKernel, nu: &impl SmoothWeight, t: f64, quad_n: usize) -> f64 {
    let f = |u: f64| {
        let tp = t - u * u;
        xi.value(t, tp) * nu.value(tp)
    };
    2.0 / (2.0 * PI).sqrt() * trapezoid(t.sqrt(), quad_n, f)
}

fn check_t(t: f64) -> Result<()> {
    if !(t > 0.0) {
        return Err(domain(format!("need t > 0, got {t}")));
    }
    Ok(())
}

/// `d/dt int_0^t Xi nu / sqrt(2 pi (t - t')) dt'` by a central difference of
/// the quadrature with step `t / 10^4`.
pub fn lemma1_lhs(
    xi: &impl SmoothKernel,
    nu: &impl SmoothWeight,
    t: f64,
    quad_n: usize,
) -> Result<f64> {
    check_t(t)?;
    let h = t * 1e-4;
    Ok((single_layer(xi, nu, t + h, quad_n) - single_layer(xi, nu, t - h, quad_n)) / (2.0 * h))
}

/// `nu(t)/sqrt(2 pi t) + 1/2 int_0^t [nu(t) - (Xi - 2 tau Xi_t) nu(t')] / sqrt(2 pi tau^3) dt'`.
pub fn lemma1_rhs_form1(
    xi: &impl SmoothKernel,
    nu: &impl SmoothWeight,
    t: f64,
    quad_n: usize,
) -> Result<f64> {
    check_t(t)?;
    let nu_t = nu.value(t);
    // bracket / tau at tau -> 0 is nu'(t) + Xi_t(t, t) nu(t)
    let limit = nu.deriv(t) + xi.d_t(t, t) * nu_t;
    let f = |u: f64| {
        if u == 0.0 {
            return limit;
        }
        let tau = u * u;
        let tp = t - tau;
        let k = xi.value(t, tp) - 2.0 * tau * xi.d_t(t, tp);
        (nu_t - k * nu.value(tp)) / tau
    };
    let integral = 2.0 / (2.0 * PI).sqrt() * trapezoid(t.sqrt(), quad_n, f);
    Ok(nu_t / (2.0 * PI * t).sqrt() + 0.5 * integral)
}

/// `int_0^t ((Xi - 2 tau Xi_t) nu)_{t'} / sqrt(2 pi tau) dt'` plus the
/// endpoint term `(Xi(t,0) - 2t Xi_t(t,0)) nu(0) / sqrt(2 pi t)`, which
/// vanishes whenever `nu(0) = 0`.
pub fn lemma1_rhs_form2(
    xi: &impl SmoothKernel,
    nu: &impl SmoothWeight,
    t: f64,
    quad_n: usize,
) -> Result<f64> {
    check_t(t)?;
    let f = |u: f64| {
        let tau = u * u;
        let tp = t - tau;
        let k = xi.value(t, tp) - 2.0 * tau * xi.d_t(t, tp);
        // d/dt' of k: Xi_t' + 2 Xi_t - 2 tau Xi_tt'
        let dk = xi.d_tp(t, tp) + 2.0 * xi.d_t(t, tp) - 2.0 * tau * xi.d_t_tp(t, tp);
        dk * nu.value(tp) + k * nu.deriv(tp)
    };
    let integral = 2.0 / (2.0 * PI).sqrt() * trapezoid(t.sqrt(), quad_n, f);
    let k0 = xi.value(t, 0.0) - 2.0 * t * xi.d_t(t, 0.0);
    Ok(integral + k0 * nu.value(0.0) / (2.0 * PI * t).sqrt())
}
