//! First-order expansion of the coupled system in `alpha`:
//! `g = g0 + alpha g1 + O(alpha^2)`, with `g0`, `nu0` in closed form and the
//! first-order weight `nu1`, its derivative and `g1` by quadrature.
//!
//! Every integral over `t' in [0, t]` is taken in `u = sqrt(t - t')`, which
//! turns the `(t - t')^{-1/2}` singularities into smooth even integrands;
//! cancellations at `t' -> t` are evaluated from Taylor series of `g0`.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;

use crate::closed_form::{g0_derivs, g0_raw, normal_sf, nu0_raw, nu0_t_raw, omega0_raw};
use crate::error::{domain, input, Result};
use crate::kernels::GridSpec;
use crate::quadrature::{abel_product_integral, cumulative_trapezoid, trapezoid};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerturbationSolution {
    pub grid: GridSpec,
    pub z: f64,
    pub alpha: f64,
    pub g0: Vec<f64>,
    pub g1: Vec<f64>,
    /// `g0 + scale * alpha * g1`.
    pub g_assembled: Vec<f64>,
    pub rescaled: bool,
    pub scale: f64,
}

fn check(t_node: usize, grid: &GridSpec, z: f64) -> Result<f64> {
    if !(z.is_finite() && z > 0.0) {
        return Err(domain(format!("start point must be positive, got {z}")));
    }
    if t_node == 0 || t_node > grid.n_steps() {
        return Err(domain(format!("node must be in 1..={}, got {t_node}", grid.n_steps())));
    }
    Ok(grid.node(t_node))
}

fn u_points(t_node: usize) -> usize {
    (4 * t_node).max(2000)
}

/// Taylor expansions about `t'` are used when `tau` is tiny on the scale on
/// which `g0` varies near `t'`.
fn near_diagonal(tau: f64, tp: f64, z: f64) -> bool {
    tau < 1e-3 * tp * (tp / (z * z)).min(1.0)
}

/// `Omega0(t, t') / (t - t')` with `tau = t - t'`.
fn omega0_over_tau(t: f64, tau: f64, z: f64) -> f64 {
    let tp = t - tau;
    if near_diagonal(tau, tp, z) {
        let [g, g1, g2, g3] = g0_derivs(tp, z);
        g + tau * (g1 / 2.0 + tau * (g2 / 6.0 + tau * g3 / 24.0))
    } else {
        omega0_raw(t, tp, z) / tau
    }
}

/// First-order weight at node `t_node`.
pub fn nu1(t_node: usize, grid: &GridSpec, z: f64) -> Result<f64> {
    let t = check(t_node, grid, z)?;
    let inner = trapezoid(t.sqrt(), u_points(t_node), |u| {
        let tau = u * u;
        if tau >= t {
            return 0.0;
        }
        let ratio = if u == 0.0 { g0_raw(t, z) } else { omega0_over_tau(t, tau, z) };
        ratio * nu0_raw(t - tau, z)
    }) * 2.0
        / (2.0 * PI).sqrt();
    Ok(-inner - z * omega0_raw(t, 0.0, z) * (-z * z / (2.0 * t)).exp() / (2.0 * PI * t.powi(3)).sqrt())
}

/// Time derivative of the first-order weight at node `t_node`.
pub fn nu1_t(t_node: usize, grid: &GridSpec, z: f64) -> Result<f64> {
    let t = check(t_node, grid, z)?;
    let g_t = g0_raw(t, z);
    let integral = trapezoid(t.sqrt(), u_points(t_node), |u| {
        let tau = u * u;
        let tp = t - tau;
        if tp <= 0.0 {
            return 0.0;
        }
        // 3 g0(t')/tau - 3 Omega0/tau^2, and 3 Omega0/tau
        let (a, b) = if near_diagonal(tau, tp, z) {
            let [g, g1, g2, g3] = g0_derivs(tp, z);
            let a = -3.0 * (g1 / 2.0 + tau * (g2 / 6.0 + tau * g3 / 24.0));
            (a, 3.0 * (g + tau * (g1 / 2.0 + tau * g2 / 6.0)))
        } else {
            let om = omega0_raw(t, tp, z) / tau;
            (3.0 * (g0_raw(tp, z) - om) / tau, 3.0 * om)
        };
        a * nu0_raw(tp, z) - (b - 2.0 * g_t) * nu0_t_raw(tp, z)
    }) * 2.0
        / (2.0 * PI).sqrt();
    let z2t = z * z / t;
    let e = (-0.5 * z2t).exp();
    Ok(integral - z * z * e * e / (2.0 * PI * t.powi(3))
        + 2.0 * z * normal_sf(z / t.sqrt()) * (3.0 - z2t) * e / (2.0 * (2.0 * PI * t.powi(5)).sqrt()))
}

/// `nu1_t` at every node (`0` at node 0).
pub fn nu1_t_path(grid: &GridSpec, z: f64) -> Result<Vec<f64>> {
    let mut out: Vec<f64> = (1..=grid.n_steps())
        .into_par_iter()
        .map(|n| nu1_t(n, grid, z))
        .collect::<Result<_>>()?;
    out.insert(0, 0.0);
    Ok(out)
}

/// First-order loss rate at node `t_node` from `nu1_t` tabulated on the grid.
pub fn g1(t_node: usize, grid: &GridSpec, z: f64, nu1_t: &[f64]) -> Result<f64> {
    let t = check(t_node, grid, z)?;
    if nu1_t.len() < t_node + 1 {
        return Err(input(format!(
            "need nu1_t on nodes 0..={t_node}, got {} values",
            nu1_t.len()
        )));
    }
    let conv = abel_product_integral(&nu1_t[..=t_node], grid.delta());
    let e = (-z * z / (2.0 * t)).exp();
    Ok(-g0_raw(t, z) * nu0_raw(t, z) - conv
        - (1.0 - z * z / t) * omega0_raw(t, 0.0, z) * e / (2.0 * (2.0 * PI * t.powi(3)).sqrt()))
}

/// `g0 + alpha g1` on the grid. With `rescale_target = Some(m)`, the
/// first-order part is multiplied by the positive scalar that makes the
/// trapezoid mass of the result equal `m`.
pub fn assemble(
    alpha: f64,
    grid: &GridSpec,
    z: f64,
    rescale_target: Option<f64>,
) -> Result<PerturbationSolution> {
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(domain(format!("alpha must be nonnegative, got {alpha}")));
    }
    let nu1_t = nu1_t_path(grid, z)?;
    let g1v: Vec<f64> = std::iter::once(Ok(0.0))
        .chain((1..=grid.n_steps()).map(|n| g1(n, grid, z, &nu1_t)))
        .collect::<Result<_>>()?;
    let g0v: Vec<f64> = grid.nodes().iter().map(|&t| g0_raw(t, z)).collect();

    let scale = match rescale_target {
        None => 1.0,
        Some(target) => {
            if !(target.is_finite() && target >= 0.0) {
                return Err(input(format!("target mass must be nonnegative, got {target}")));
            }
            let m0 = *cumulative_trapezoid(&g0v, grid.delta()).last().unwrap();
            let m1 = alpha * cumulative_trapezoid(&g1v, grid.delta()).last().unwrap();
            if m1 == 0.0 {
                return Err(input("first-order term carries no mass; cannot rescale"));
            }
            let s = (target - m0) / m1;
            if !(s > 0.0) {
                return Err(input(format!("target mass {target} needs a nonpositive scale {s}")));
            }
            s
        }
    };
    let g_assembled = g0v.iter().zip(&g1v).map(|(a, b)| a + scale * alpha * b).collect();
    Ok(PerturbationSolution {
        grid: *grid,
        z,
        alpha,
        g0: g0v,
        g1: g1v,
        g_assembled,
        rescaled: rescale_target.is_some(),
        scale,
    })
}
