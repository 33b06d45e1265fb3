//! Absorbed diffusion with a known drift: the weight `nu` of the double-layer
//! heat potential, the boundary loss rate by two independent routes, and the
//! transition density of the surviving mass.
//!
//! All arrays are indexed by grid node `0..=N`; node 0 carries `nu = g = 0`.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{domain, input, Error, Result};
use crate::kernels::{gauss, GridSpec};
use crate::quadrature::{interp_linear, trapezoid, NodeInput};

/// Drift integral `M(t) = int_0^t mu`.
#[derive(Debug, Clone, PartialEq)]
pub enum DriftSpec {
    Zero,
    Linear(f64),
    /// `M` at every node `0..=N` (with `values[0] = 0`). `rates`, when given,
    /// are `M_t` at the nodes; between nodes the rate is then taken linear.
    /// Without rates each cell uses its difference quotient.
    Tabulated {
        values: Vec<f64>,
        rates: Option<Vec<f64>>,
    },
}

/// Drift resolved on a grid: node values plus the rate at both ends of each cell.
#[derive(Debug, Clone)]
pub(crate) struct Drift {
    delta: f64,
    m: Vec<f64>,
    left: Vec<f64>,
    right: Vec<f64>,
}

impl Drift {
    pub fn new(spec: &DriftSpec, grid: &GridSpec) -> Result<Self> {
        let n = grid.n_steps();
        let delta = grid.delta();
        let (m, left, right) = match spec {
            DriftSpec::Zero => (vec![0.0; n + 1], vec![0.0; n + 1], vec![0.0; n + 1]),
            DriftSpec::Linear(mu) => {
                if !mu.is_finite() {
                    return Err(input(format!("drift rate must be finite, got {mu}")));
                }
                let m = (0..=n).map(|k| mu * grid.node(k)).collect();
                (m, vec![*mu; n + 1], vec![*mu; n + 1])
            }
            DriftSpec::Tabulated { values, rates } => {
                if values.len() != n + 1 {
                    return Err(input(format!(
                        "tabulated drift has {} values, grid needs {}",
                        values.len(),
                        n + 1
                    )));
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(input("tabulated drift contains non-finite values"));
                }
                if values[0] != 0.0 {
                    return Err(input(format!("drift must vanish at t = 0, got {}", values[0])));
                }
                let mut left = vec![0.0; n + 1];
                let mut right = vec![0.0; n + 1];
                match rates {
                    Some(r) => {
                        if r.len() != n + 1 || r.iter().any(|v| !v.is_finite()) {
                            return Err(input("drift rates must be finite, one per node"));
                        }
                        left[1..].copy_from_slice(&r[..n]);
                        right[1..].copy_from_slice(&r[1..]);
                    }
                    None => {
                        for k in 1..=n {
                            let d = (values[k] - values[k - 1]) / delta;
                            left[k] = d;
                            right[k] = d;
                        }
                    }
                }
                (values.clone(), left, right)
            }
        };
        Ok(Self { delta, m, left, right })
    }

    pub fn at_node(&self, k: usize) -> f64 {
        self.m[k]
    }

    /// `M_t` at node `n >= 1`, seen from the left.
    pub fn rate_at_node(&self, n: usize) -> f64 {
        self.right[n]
    }

    /// `M(t)` between nodes, integrating the cell's linear rate back from its
    /// right node.
    pub fn at(&self, t: f64) -> f64 {
        let n = self.m.len() - 1;
        let k = ((t / self.delta).ceil() as usize).clamp(1, n);
        let s = k as f64 * self.delta - t;
        let (a, b) = (self.left[k], self.right[k]);
        self.m[k] - (b * s - (b - a) * s * s / (2.0 * self.delta))
    }

    fn node_input<'a>(&'a self, grid: &GridSpec, z: f64, nu: &'a [f64], n: usize) -> NodeInput<'a> {
        NodeInput {
            t: grid.node(n),
            delta: self.delta,
            z,
            m_hist: &self.m[..n],
            nu_hist: &nu[..n],
            m_n: self.m[n],
            rate_left: self.left[n],
            rate_right: self.right[n],
        }
    }
}

/// `nu` and the loss rate `g` at every node.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HeatPotentialSolution {
    pub grid: GridSpec,
    pub z: f64,
    pub nu: Vec<f64>,
    pub g: Vec<f64>,
}

fn check_z(z: f64) -> Result<()> {
    if !(z.is_finite() && z > 0.0) {
        return Err(domain(format!("start point must be positive, got {z}")));
    }
    Ok(())
}

fn check_nu(nu: &[f64], grid: &GridSpec) -> Result<()> {
    if nu.len() != grid.n_steps() + 1 {
        return Err(input(format!(
            "weight has {} entries, grid has {} nodes",
            nu.len(),
            grid.n_steps() + 1
        )));
    }
    Ok(())
}

/// Marches the boundary integral equation for `nu` node by node.
pub fn solve_nu(drift: &DriftSpec, grid: &GridSpec, z: f64) -> Result<Vec<f64>> {
    check_z(z)?;
    let d = Drift::new(drift, grid)?;
    let mut nu = vec![0.0; grid.n_steps() + 1];
    for n in 1..=grid.n_steps() {
        nu[n] = d
            .node_input(grid, z, &nu, n)
            .solve_nu()
            .ok_or_else(|| Error::Degenerate(format!("singular diagonal at node {n}")))?;
    }
    Ok(nu)
}

/// Loss rate from the boundary limit of the flux of the double layer.
pub fn loss_rate_hp(nu: &[f64], drift: &DriftSpec, grid: &GridSpec, z: f64) -> Result<Vec<f64>> {
    check_z(z)?;
    check_nu(nu, grid)?;
    let d = Drift::new(drift, grid)?;
    let mut g = vec![0.0; nu.len()];
    for (n, gn) in g.iter_mut().enumerate().skip(1) {
        *gn = d.node_input(grid, z, nu, n).loss_rate(nu[n]);
    }
    Ok(g)
}

/// Loss rate as minus the time derivative of the surviving mass, with the
/// derivative of the single-layer term taken in regularized form and the
/// history integrated in `u = sqrt(t - t')` on a finer, independent mesh.
pub fn loss_rate_direct(
    nu: &[f64],
    drift: &DriftSpec,
    grid: &GridSpec,
    z: f64,
) -> Result<Vec<f64>> {
    check_z(z)?;
    check_nu(nu, grid)?;
    let d = Drift::new(drift, grid)?;
    let delta = grid.delta();
    let g = (0..nu.len())
        .into_par_iter()
        .map(|n| {
            if n == 0 {
                return 0.0;
            }
            let t = grid.node(n);
            let m_n = d.at_node(n);
            let r = d.rate_at_node(n);
            let nu_n = nu[n];
            let nu_hist = &nu[..=n];
            let slope = (nu[n] - nu[n - 1]) / delta;
            let limit = slope - 0.5 * r * r * nu_n;
            let n_u = (3 * n).max(64);
            let c = trapezoid(t.sqrt(), n_u, |u| {
                if u == 0.0 {
                    return limit;
                }
                let tau = u * u;
                let tp = (t - tau).max(0.0);
                let psi = m_n - d.at(tp);
                let k = (1.0 + 2.0 * r * psi - psi * psi / tau) * (-psi * psi / (2.0 * tau)).exp();
                (nu_n - k * interp_linear(nu_hist, delta, tp)) / tau
            }) * 2.0
                / (2.0 * PI).sqrt();
            let a = m_n + z;
            -nu_n / (2.0 * PI * t).sqrt() - 0.5 * c - (r - a / (2.0 * t)) * gauss(t, a)
        })
        .collect();
    Ok(g)
}

/// `nu` then `g` (boundary-flux route).
pub fn solve(drift: &DriftSpec, grid: &GridSpec, z: f64) -> Result<HeatPotentialSolution> {
    let nu = solve_nu(drift, grid, z)?;
    let g = loss_rate_hp(&nu, drift, grid, z)?;
    Ok(HeatPotentialSolution { grid: *grid, z, nu, g })
}

/// 400 points on `[0, z + 5 sqrt(T)]`.
pub fn default_x_grid(z: f64, t_end: f64) -> Vec<f64> {
    let hi = z + 5.0 * t_end.sqrt();
    (0..400).map(|i| hi * i as f64 / 399.0).collect()
}

/// Density of the surviving paths at time `t_node * delta` on `x_grid`.
///
/// The double layer is evaluated after subtracting its value for a frozen
/// weight `nu(t)` (known in closed form as `nu(t) erfc(x / sqrt(2t))`), so
/// the remaining `u`-integrand is bounded; the mesh resolves the boundary
/// layer of width `x` near `u = 0`.
pub fn transition_density(
    nu: &[f64],
    drift: &DriftSpec,
    grid: &GridSpec,
    z: f64,
    x_grid: &[f64],
    t_node: usize,
) -> Result<Vec<f64>> {
    check_z(z)?;
    check_nu(nu, grid)?;
    if t_node == 0 || t_node > grid.n_steps() {
        return Err(domain(format!(
            "density node must be in 1..={}, got {t_node}",
            grid.n_steps()
        )));
    }
    if x_grid.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(domain("density abscissae must be finite and nonnegative"));
    }
    let d = Drift::new(drift, grid)?;
    let delta = grid.delta();
    let t = grid.node(t_node);
    let m_n = d.at_node(t_node);
    let r = d.rate_at_node(t_node);
    let nu_hist = &nu[..=t_node];
    let nu_n = nu[t_node];
    let base = (2 * t_node).max(64);
    let p = x_grid
        .par_iter()
        .map(|&x| {
            let mut h = t.sqrt() / base as f64;
            if x > 0.0 {
                h = h.min(x / 8.0);
            }
            let n_u = ((t.sqrt() / h).ceil() as usize).clamp(base, 20_000);
            let tail = trapezoid(t.sqrt(), n_u, |u| {
                if u == 0.0 {
                    return if x > 0.0 { 0.0 } else { -r * nu_n };
                }
                let tau = u * u;
                let tp = (t - tau).max(0.0);
                let y = x - (m_n - d.at(tp));
                let moving = y * (-y * y / (2.0 * tau)).exp() * interp_linear(nu_hist, delta, tp);
                let frozen = x * (-x * x / (2.0 * tau)).exp() * nu_n;
                (moving - frozen) / tau
            }) * 2.0
                / (2.0 * PI).sqrt();
            nu_n * libm::erfc(x / (2.0 * t).sqrt()) + tail + gauss(t, x - m_n - z)
        })
        .collect();
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closed_form::{g0, g_const_drift, nu0};

    fn grid(n: usize) -> GridSpec {
        GridSpec::new(1.0, n).unwrap()
    }

    #[test]
    fn zero_drift_weight_is_exact() {
        let gr = grid(200);
        let nu = solve_nu(&DriftSpec::Zero, &gr, 0.5).unwrap();
        for (n, v) in nu.iter().enumerate().skip(1) {
            let exact = nu0(gr.node(n), 0.5).unwrap();
            assert!((v - exact).abs() < 1e-15, "{n}");
        }
        assert_eq!(nu, solve_nu(&DriftSpec::Linear(0.0), &gr, 0.5).unwrap());
    }

    #[test]
    fn zero_drift_loss_rate_matches_closed_form() {
        let gr = grid(1000);
        let s = solve(&DriftSpec::Zero, &gr, 0.5).unwrap();
        let err = (1..=1000)
            .map(|n| (s.g[n] - g0(gr.node(n), 0.5).unwrap()).abs())
            .fold(0.0, f64::max);
        assert!(err < 5e-3, "{err}");
        assert!((s.g[1000] - 0.176_032_663_382_149_74).abs() < 2e-3);
    }

    #[test]
    fn exact_weight_gives_exact_rate_up_to_quadrature() {
        // with nu = nu0 at the nodes, both routes approximate g0
        let gr = grid(800);
        let nu: Vec<f64> = (0..=800)
            .map(|n| if n == 0 { 0.0 } else { nu0(gr.node(n), 0.5).unwrap() })
            .collect();
        let hp = loss_rate_hp(&nu, &DriftSpec::Zero, &gr, 0.5).unwrap();
        let dr = loss_rate_direct(&nu, &DriftSpec::Zero, &gr, 0.5).unwrap();
        for n in (80..=800).step_by(80) {
            let exact = g0(gr.node(n), 0.5).unwrap();
            assert!((hp[n] - exact).abs() < 5e-3, "hp {n}");
            assert!((dr[n] - exact).abs() < 5e-3, "direct {n}");
        }
    }

    #[test]
    fn constant_drift_matches_closed_form() {
        let gr = grid(1000);
        let drift = DriftSpec::Linear(-0.5);
        let s = solve(&drift, &gr, 0.5).unwrap();
        let err = (1..=1000)
            .map(|n| (s.g[n] - g_const_drift(gr.node(n), 0.5, -0.5).unwrap()).abs())
            .fold(0.0, f64::max);
        assert!(err < 5e-3, "{err}");
        assert!((s.g[1000] - 0.199_471_140_200_716_34).abs() < 5e-3);
    }

    #[test]
    fn tabulated_linear_drift_agrees_with_linear() {
        let gr = grid(100);
        let values: Vec<f64> = gr.nodes().iter().map(|t| -0.3 * t).collect();
        let a = solve_nu(&DriftSpec::Linear(-0.3), &gr, 0.5).unwrap();
        let b = solve_nu(&DriftSpec::Tabulated { values, rates: None }, &gr, 0.5).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-13);
        }
    }

    #[test]
    fn drift_interpolation_reproduces_quadratic() {
        // M = -t^2 has rate -2t, exactly captured by linear rates
        let gr = grid(10);
        let values: Vec<f64> = gr.nodes().iter().map(|t| -t * t).collect();
        let rates: Vec<f64> = gr.nodes().iter().map(|t| -2.0 * t).collect();
        let d = Drift::new(&DriftSpec::Tabulated { values, rates: Some(rates) }, &gr).unwrap();
        for &t in &[0.0, 0.03, 0.5, 0.77, 1.0] {
            assert!((d.at(t) + t * t).abs() < 1e-14, "{t}");
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let gr = grid(10);
        assert!(matches!(solve_nu(&DriftSpec::Zero, &gr, 0.0), Err(Error::Domain(_))));
        let bad = DriftSpec::Tabulated { values: vec![0.0; 5], rates: None };
        assert!(matches!(solve_nu(&bad, &gr, 0.5), Err(Error::Input(_))));
        let mut v = vec![0.0; 11];
        v[3] = f64::NAN;
        let bad = DriftSpec::Tabulated { values: v, rates: None };
        assert!(matches!(solve_nu(&bad, &gr, 0.5), Err(Error::Input(_))));
        assert!(loss_rate_hp(&[0.0; 4], &DriftSpec::Zero, &gr, 0.5).is_err());
        let nu = solve_nu(&DriftSpec::Zero, &gr, 0.5).unwrap();
        assert!(transition_density(&nu, &DriftSpec::Zero, &gr, 0.5, &[0.1], 0).is_err());
    }

    #[test]
    fn density_matches_images_and_vanishes_on_boundary() {
        let gr = grid(500);
        let nu = solve_nu(&DriftSpec::Zero, &gr, 0.5).unwrap();
        let p = transition_density(&nu, &DriftSpec::Zero, &gr, 0.5, &[0.0, 0.5], 500).unwrap();
        assert!(p[0].abs() < 1e-3, "{}", p[0]);
        assert!((p[1] - 0.156_971_555_882_289_33).abs() < 1e-3, "{}", p[1]);
    }
}
