//! Exact solutions without feedback: the driftless and constant-drift
//! first-passage densities, and the zeroth-order terms of the expansion in
//! `alpha`. These serve as reference values for every solver.

use std::f64::consts::PI;

use crate::error::{domain, Result};

fn check_z(z: f64) -> Result<()> {
    if !(z > 0.0 && z.is_finite()) {
        return Err(domain(format!("start point must be positive, got {z}")));
    }
    Ok(())
}

fn check_t(t: f64) -> Result<()> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(domain(format!("time must be nonnegative, got {t}")));
    }
    Ok(())
}

/// First-passage density of `z + W` at zero. Zero at `t = 0`.
pub fn g0(t: f64, z: f64) -> Result<f64> {
    check_z(z)?;
    check_t(t)?;
    Ok(g0_raw(t, z))
}

/// Heat-potential weight without feedback, `-exp(-z^2/2t)/sqrt(2 pi t)`. Zero at `t = 0`.
pub fn nu0(t: f64, z: f64) -> Result<f64> {
    check_z(z)?;
    check_t(t)?;
    Ok(nu0_raw(t, z))
}

/// Mass absorbed in `[t', t]` without feedback, `2(Phi(z/sqrt t') - Phi(z/sqrt t))`.
pub fn omega0(t: f64, t_prime: f64, z: f64) -> Result<f64> {
    check_z(z)?;
    check_t(t_prime)?;
    if t_prime > t {
        return Err(domain(format!("need t' <= t, got t={t}, t'={t_prime}")));
    }
    Ok(omega0_raw(t, t_prime, z))
}

/// Cumulative loss without feedback, `2(1 - Phi(z/sqrt t))`.
pub fn loss0(t: f64, z: f64) -> Result<f64> {
    omega0(t, 0.0, z)
}

/// First-passage density at zero of `z + mu t + W`.
///
/// Drift `mu < 0` pushes mass towards the boundary. Reduces to [`g0`] at `mu = 0`.
pub fn g_const_drift(t: f64, z: f64, mu: f64) -> Result<f64> {
    check_z(z)?;
    check_t(t)?;
    if t == 0.0 {
        return Ok(0.0);
    }
    let d = z + mu * t;
    Ok(z * (-d * d / (2.0 * t)).exp() / (2.0 * PI * t.powi(3)).sqrt())
}

pub(crate) fn g0_raw(t: f64, z: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    z * (-z * z / (2.0 * t)).exp() / (2.0 * PI * t * t * t).sqrt()
}

pub(crate) fn nu0_raw(t: f64, z: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    -(-z * z / (2.0 * t)).exp() / (2.0 * PI * t).sqrt()
}

/// `d nu0 / dt`.
pub(crate) fn nu0_t_raw(t: f64, z: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    nu0_raw(t, z) * (z * z / (2.0 * t * t) - 0.5 / t)
}

/// `1 - Phi(x)` without cancellation for large `x`.
pub(crate) fn normal_sf(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

pub(crate) fn omega0_raw(t: f64, tp: f64, z: f64) -> f64 {
    if tp <= 0.0 {
        return 2.0 * normal_sf(z / t.sqrt());
    }
    // Phi(a) - Phi(b) = sf(b) - sf(a); accurate in the tails
    2.0 * (normal_sf(z / t.sqrt()) - normal_sf(z / tp.sqrt()))
}

/// `g0` together with its first three time derivatives.
pub(crate) fn g0_derivs(t: f64, z: f64) -> [f64; 4] {
    let g = g0_raw(t, z);
    let z2 = z * z;
    let a = -1.5 / t + z2 / (2.0 * t * t);
    let a1 = 1.5 / (t * t) - z2 / (t * t * t);
    let a2 = -3.0 / (t * t * t) + 3.0 * z2 / (t * t * t * t);
    [
        g,
        g * a,
        g * (a * a + a1),
        g * (a * a * a + 3.0 * a * a1 + a2),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

    #[test]
    fn g0_values() {
        assert!((g0(1.0, 0.5).unwrap() - 0.176_032_663_382_149_74).abs() < 1e-13);
        assert!(g0(1e-4, 0.5).unwrap() < 1e-300);
        assert_eq!(g0(0.0, 0.5).unwrap(), 0.0);
        assert!(g0(1.0, 50.0).unwrap() < 1e-300);
        assert!(g0(1.0, 0.0).is_err());
        assert!(g0(1.0, -1.0).is_err());
    }

    #[test]
    fn nu0_values() {
        assert!((nu0(1.0, 0.5).unwrap() + 0.352_065_326_764_299_5).abs() < 1e-13);
        assert_eq!(nu0(0.0, 0.5).unwrap(), 0.0);
        assert!(nu0(1e-4, 0.5).unwrap().abs() < 1e-300);
        // z -> 0 limit anchors continuity
        assert!((nu0_raw(1.0, 1e-9) + INV_SQRT_2PI).abs() < 1e-12);
        for i in 1..50 {
            let t = i as f64 * 0.07;
            let hk = crate::kernels::heat_kernel(t, 0.0, 0.5).unwrap();
            assert_eq!(nu0(t, 0.5).unwrap(), -hk);
        }
    }

    #[test]
    fn omega0_values() {
        assert!((omega0(1.0, 0.0, 0.5).unwrap() - 0.617_075_077_451_973_8).abs() < 1e-13);
        assert_eq!(omega0(0.7, 0.7, 0.5).unwrap(), 0.0);
        assert!((omega0(1.0, 0.25, 0.5).unwrap() - 0.299_764_569_589_059_7).abs() < 1e-13);
        assert!(omega0(0.5, 1.0, 0.5).is_err());
        // cross-check against trapezoid of g0
        let n = 20000;
        let h = 0.75 / n as f64;
        let s: f64 = (0..=n)
            .map(|i| {
                let w = if i == 0 || i == n { 0.5 } else { 1.0 };
                w * g0_raw(0.25 + i as f64 * h, 0.5)
            })
            .sum::<f64>()
            * h;
        assert!((s - 0.299_764_569_589_059_7).abs() < 1e-8);
    }

    #[test]
    fn omega0_derivatives_match_g0() {
        // deterministic pseudo-random pairs
        let mut state = 0x9e37_79b9_7f4a_7c15u64;
        let mut next = || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..20 {
            let tp = 0.05 + 1.5 * next();
            let t = tp + 0.05 + 1.5 * next();
            let z = 0.5;
            let h = 1e-5;
            let dt = (omega0_raw(t + h, tp, z) - omega0_raw(t - h, tp, z)) / (2.0 * h);
            let dtp = (omega0_raw(t, tp + h, z) - omega0_raw(t, tp - h, z)) / (2.0 * h);
            let (gt, gtp) = (g0_raw(t, z), g0_raw(tp, z));
            assert!(((dt - gt) / gt).abs() < 1e-6, "{dt} {gt}");
            assert!(((dtp + gtp) / gtp).abs() < 1e-6, "{dtp} {gtp}");
        }
    }

    #[test]
    fn const_drift_values() {
        let g = g_const_drift(1.0, 0.5, 0.0).unwrap();
        assert!((g - 0.176_032_663_382_149_74).abs() < 1e-13);
        // z + mu t = 0 in both cases below
        assert!((g_const_drift(1.0, 0.5, -0.5).unwrap() - 0.199_471_140_200_716_34).abs() < 1e-13);
        assert!((g_const_drift(0.5, 0.5, -1.0).unwrap() - 0.564_189_583_547_756_3).abs() < 1e-12);
        assert!(g_const_drift(1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn const_drift_total_mass() {
        // int_0^inf via t = s/(1-s) on (0,1); mu = 0 has a t^{-3/2} tail that
        // this map does not integrate accurately, so it is left out
        for &mu in &[-0.5, -1.0, 0.5] {
            let n = 200_000;
            let h = 1.0 / n as f64;
            let mass: f64 = (1..n)
                .map(|i| {
                    let s = i as f64 * h;
                    let t = s / (1.0 - s);
                    g_const_drift(t, 0.5, mu).unwrap() / ((1.0 - s) * (1.0 - s))
                })
                .sum::<f64>()
                * h;
            let expected = if mu <= 0.0 { 1.0 } else { (-2.0 * mu * 0.5f64).exp() };
            assert!((mass - expected).abs() < 1e-6, "mu {mu}: {mass}");
        }
    }

    #[test]
    fn analytic_derivatives() {
        let z = 0.5;
        for &t in &[0.05, 0.3, 1.0, 2.0] {
            let h = 1e-5 * t;
            let fd = (nu0_raw(t + h, z) - nu0_raw(t - h, z)) / (2.0 * h);
            assert!((fd - nu0_t_raw(t, z)).abs() < 1e-7 * (1.0 + fd.abs()));
            let d = g0_derivs(t, z);
            for k in 0..3 {
                let dp = g0_derivs(t + h, z)[k];
                let dm = g0_derivs(t - h, z)[k];
                let fd = (dp - dm) / (2.0 * h);
                assert!((fd - d[k + 1]).abs() < 1e-5 * (1.0 + fd.abs()), "k={k} t={t}");
            }
        }
    }
}
