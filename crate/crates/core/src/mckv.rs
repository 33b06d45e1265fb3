//! The coupled system: the drift is `M(t) = -alpha L(t)`, so the kernel
//! displacement is `Psi(t, t') = -alpha Omega(t, t')` with
//! `Omega(t, t') = int_{t'}^t g`. Each node is a scalar nonlinear equation in
//! `g_n` once `nu_n` is eliminated; it is solved by Newton–Raphson with a
//! bisection fallback, and the march stops with a report when no root exists
//! or the rate explodes.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{domain, input, Result};
use crate::heat_potential::{transition_density, DriftSpec};
use crate::kernels::{normal_cdf, GridSpec};
use crate::quadrature::NodeInput;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProblemSpec {
    pub alpha: f64,
    pub z: f64,
    pub grid: GridSpec,
}

impl ProblemSpec {
    pub fn new(alpha: f64, z: f64, grid: GridSpec) -> Result<Self> {
        if !(alpha.is_finite() && alpha >= 0.0) {
            return Err(domain(format!("alpha must be nonnegative, got {alpha}")));
        }
        if !(z.is_finite() && z > 0.0) {
            return Err(domain(format!("start point must be positive, got {z}")));
        }
        Ok(Self { alpha, z, grid })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BlowUpCause {
    NewtonDivergence,
    RateThreshold,
    /// The cumulative loss reached 1: no surviving mass is left.
    MassExhausted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BlowUpReport {
    /// First node without an accepted solution.
    pub node: usize,
    pub time: f64,
    pub cause: BlowUpCause,
    /// Last accepted loss rate.
    pub last_g: f64,
}

/// Nodal solution `0..=n`; truncated at the blow-up node if one was hit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolutionPath {
    pub grid: GridSpec,
    pub alpha: f64,
    pub z: f64,
    pub nu: Vec<f64>,
    pub g: Vec<f64>,
    /// `L_n = Omega(t_n, 0)`.
    pub loss: Vec<f64>,
    pub blow_up: Option<BlowUpReport>,
}

impl SolutionPath {
    fn start(spec: &ProblemSpec) -> Self {
        Self {
            grid: spec.grid,
            alpha: spec.alpha,
            z: spec.z,
            nu: vec![0.0],
            g: vec![0.0],
            loss: vec![0.0],
            blow_up: None,
        }
    }

    /// Index of the last computed node.
    pub fn last_node(&self) -> usize {
        self.g.len() - 1
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.g.len()).map(|n| self.grid.node(n)).collect()
    }

    /// `M = -alpha L` at the computed nodes together with its rate, for
    /// re-solving the frozen-drift problem.
    pub fn drift(&self) -> DriftSpec {
        DriftSpec::Tabulated {
            values: self.loss.iter().map(|l| -self.alpha * l).collect(),
            rates: Some(self.g.iter().map(|g| -self.alpha * g).collect()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolverOptions {
    /// Rates above this are reported as a blow-up.
    pub g_max: f64,
    pub tol: f64,
    pub max_newton: usize,
    pub bisect_steps: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            g_max: 1e6,
            tol: 1e-12,
            max_newton: 50,
            bisect_steps: 200,
        }
    }
}

/// Outcome of one time step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepOutcome {
    Accepted { nu: f64, g: f64 },
    BlowUp(BlowUpCause),
}

/// `Omega_{nl} = Omega_{(n-1)l} + delta (g_n + g_{n-1}) / 2`.
pub fn omega_update(omega_prev: f64, g_n: f64, g_n1: f64, delta: f64) -> f64 {
    omega_prev + 0.5 * delta * (g_n + g_n1)
}

fn check_interior(l: usize, n: usize) -> Result<()> {
    if l == 0 || l >= n {
        return Err(domain(format!("interior cell needs 1 <= l < n, got l={l}, n={n}")));
    }
    Ok(())
}

/// Trapezoid on cell `[t_{l-1}, t_l]` of `Omega Xi nu / sqrt(2 pi (t_n - t')^3)`.
#[allow(clippy::too_many_arguments)]
pub fn quad_i(
    l: usize,
    n: usize,
    omega_nl: f64,
    omega_nl1: f64,
    nu_l: f64,
    nu_l1: f64,
    alpha: f64,
    delta: f64,
) -> Result<f64> {
    check_interior(l, n)?;
    let term = |omega: f64, nu: f64, k: usize| {
        let tau = k as f64 * delta;
        omega * (-alpha * alpha * omega * omega / (2.0 * tau)).exp() * nu / (k as f64).powf(1.5)
    };
    Ok((term(omega_nl, nu_l, n - l) + term(omega_nl1, nu_l1, n - l + 1))
        / (8.0 * PI * delta).sqrt())
}

/// Trapezoid on cell `[t_{l-1}, t_l]` of
/// `(nu_n - (1 - alpha^2 Omega^2 / tau) Xi nu) / sqrt(2 pi tau^3)`.
#[allow(clippy::too_many_arguments)]
pub fn quad_j(
    l: usize,
    n: usize,
    omega_nl: f64,
    omega_nl1: f64,
    nu_n: f64,
    nu_l: f64,
    nu_l1: f64,
    alpha: f64,
    delta: f64,
) -> Result<f64> {
    check_interior(l, n)?;
    let term = |omega: f64, nu: f64, k: usize| {
        let tau = k as f64 * delta;
        let x = alpha * alpha * omega * omega / tau;
        (nu_n - (1.0 - x) * (-0.5 * x).exp() * nu) / (2.0 * PI * tau.powi(3)).sqrt()
    };
    Ok(0.5 * delta * (term(omega_nl, nu_l, n - l) + term(omega_nl1, nu_l1, n - l + 1)))
}

/// Last-cell potential integral `int Omega Xi nu / sqrt(2 pi tau^3)` after
/// `tau = u^2`.
pub fn quad_i_singular(g_n: f64, g_n1: f64, nu_n: f64, nu_n1: f64, alpha: f64, delta: f64) -> f64 {
    let gamma = 0.5 * delta * (g_n + g_n1);
    (delta / (2.0 * PI)).sqrt() * g_n * nu_n
        + gamma * (-alpha * alpha * gamma * gamma / (2.0 * delta)).exp() * nu_n1
            / (2.0 * PI * delta).sqrt()
}

/// Last-cell flux integral after `tau = u^2`.
pub fn quad_j_singular(g_n: f64, g_n1: f64, nu_n: f64, nu_n1: f64, alpha: f64, delta: f64) -> f64 {
    let gamma = 0.5 * delta * (g_n + g_n1);
    let a2 = alpha * alpha;
    let e = (-a2 * gamma * gamma / (2.0 * delta)).exp();
    let s1 = (2.0 * PI * delta).sqrt();
    let s3 = (2.0 * PI * delta.powi(3)).sqrt();
    ((1.0 + e) / s1 + a2 * (1.5 * delta * delta * g_n * g_n + 0.5 * gamma * gamma) / s3) * nu_n
        - ((1.0 + e) / s1 - a2 * gamma * gamma * e / s3) * nu_n1
}

/// Reusable per-march state: `M = -alpha L` at the accepted nodes.
struct Stepper {
    spec: ProblemSpec,
    opts: SolverOptions,
    m: Vec<f64>,
}

impl Stepper {
    fn new(spec: ProblemSpec, opts: SolverOptions, path: &SolutionPath) -> Self {
        let m = path.loss.iter().map(|l| -spec.alpha * l).collect();
        Self { spec, opts, m }
    }

    /// `nu_n` and the mismatch between the trial `g_n` and the rate it implies.
    fn residual(&self, path: &SolutionPath, n: usize, g: f64) -> Option<(f64, f64)> {
        let alpha = self.spec.alpha;
        let delta = self.spec.grid.delta();
        let g_prev = path.g[n - 1];
        let loss = omega_update(path.loss[n - 1], g, g_prev, delta);
        let node = NodeInput {
            t: self.spec.grid.node(n),
            delta,
            z: self.spec.z,
            m_hist: &self.m[..n],
            nu_hist: &path.nu[..n],
            m_n: -alpha * loss,
            rate_left: -alpha * g_prev,
            rate_right: -alpha * g,
        };
        let (nu, implied) = node.step()?;
        Some((nu, g - implied))
    }

    fn step(&self, path: &SolutionPath, n: usize) -> Result<StepOutcome> {
        let res = |g: f64| self.residual(path, n, g);
        let g_prev = path.g[n - 1];
        let tol = self.opts.tol;

        let mut g = g_prev;
        let mut newton = None;
        for _ in 0..self.opts.max_newton {
            let Some((nu, r)) = res(g) else { break };
            if !r.is_finite() {
                break;
            }
            if r.abs() <= tol {
                newton = Some((nu, g));
                break;
            }
            let h = (1e-7 * g.abs()).max(1e-7);
            let (Some((_, rp)), Some((_, rm))) = (res(g + h), res(g - h)) else { break };
            let slope = (rp - rm) / (2.0 * h);
            if !(slope.is_finite() && slope != 0.0) {
                break;
            }
            let dg = r / slope;
            g -= dg;
            if !g.is_finite() || g.abs() > 10.0 * self.opts.g_max {
                break;
            }
            // roundoff floor in the O(n) sums can keep |r| just above tol
            if dg.abs() <= 1e-13 * (1.0 + g.abs()) {
                let (nu, _) = res(g).unwrap_or((f64::NAN, f64::NAN));
                if nu.is_finite() {
                    newton = Some((nu, g));
                }
                break;
            }
        }

        let found = match newton {
            Some((nu, g)) if g >= -1e-6 => Some((nu, g)),
            _ => self.bisect(path, n, g_prev),
        };
        match found {
            Some((_, g)) if g > self.opts.g_max => Ok(StepOutcome::BlowUp(BlowUpCause::RateThreshold)),
            Some((nu, g)) => Ok(StepOutcome::Accepted { nu, g }),
            // a negative Newton root with no admissible bracket also means
            // the nonnegative branch has ceased to exist
            None => Ok(StepOutcome::BlowUp(BlowUpCause::NewtonDivergence)),
        }
    }

    fn bisect(&self, path: &SolutionPath, n: usize, g_prev: f64) -> Option<(f64, f64)> {
        let (mut lo, mut hi) = (0.0, 10.0 * g_prev.max(1.0));
        let (_, mut r_lo) = self.residual(path, n, lo)?;
        let (_, r_hi) = self.residual(path, n, hi)?;
        if !(r_lo.is_finite() && r_hi.is_finite()) || r_lo.signum() == r_hi.signum() {
            return None;
        }
        for _ in 0..self.opts.bisect_steps {
            let mid = 0.5 * (lo + hi);
            let (_, r) = self.residual(path, n, mid)?;
            if r == 0.0 {
                lo = mid;
                hi = mid;
                break;
            }
            if r.signum() == r_lo.signum() {
                lo = mid;
                r_lo = r;
            } else {
                hi = mid;
            }
        }
        let g = 0.5 * (lo + hi);
        let (nu, _) = self.residual(path, n, g)?;
        Some((nu, g))
    }

    fn accept(&mut self, path: &mut SolutionPath, nu: f64, g: f64) {
        let n = path.g.len();
        let loss = omega_update(path.loss[n - 1], g, path.g[n - 1], self.spec.grid.delta());
        path.nu.push(nu);
        path.g.push(g);
        path.loss.push(loss);
        self.m.push(-self.spec.alpha * loss);
    }
}

/// Solves for node `history.last_node() + 1` given the accepted prefix.
pub fn step(history: &SolutionPath, spec: &ProblemSpec, opts: &SolverOptions) -> Result<StepOutcome> {
    if history.blow_up.is_some() {
        return Err(input("cannot step past a reported blow-up"));
    }
    let n = history.last_node() + 1;
    if n > spec.grid.n_steps() {
        return Err(domain(format!("node {n} is past the end of the grid")));
    }
    Stepper::new(*spec, *opts, history).step(history, n)
}

/// Marches `n = 1..=N`, truncating at the first blow-up.
pub fn solve(spec: &ProblemSpec, opts: &SolverOptions) -> Result<SolutionPath> {
    let mut path = SolutionPath::start(spec);
    let mut stepper = Stepper::new(*spec, *opts, &path);
    for n in 1..=spec.grid.n_steps() {
        match stepper.step(&path, n)? {
            StepOutcome::Accepted { nu, g } => stepper.accept(&mut path, nu, g),
            StepOutcome::BlowUp(cause) => {
                path.blow_up = Some(BlowUpReport {
                    node: n,
                    time: spec.grid.node(n),
                    cause,
                    last_g: path.g[n - 1],
                });
                break;
            }
        }
        if *path.loss.last().unwrap() >= 1.0 {
            path.nu.pop();
            path.g.pop();
            path.loss.pop();
            path.blow_up = Some(BlowUpReport {
                node: n,
                time: spec.grid.node(n),
                cause: BlowUpCause::MassExhausted,
                last_g: path.g[n - 1],
            });
            break;
        }
    }
    Ok(path)
}

/// Residual of `Phi((alpha L_t - z)/sqrt t) = int_0^t Phi(alpha (L_t - L_s)/sqrt(t - s)) dL_s`
/// at every node `n >= 1` (entry 0 is 0), with a midpoint rule in `s` per cell.
pub fn andreas_residual(path: &SolutionPath, spec: &ProblemSpec) -> Result<Vec<f64>> {
    if path.blow_up.is_some() {
        return Err(input("identity residual needs a path without blow-up"));
    }
    let alpha = spec.alpha;
    let delta = path.grid.delta();
    let l = &path.loss;
    let mut out = vec![0.0; l.len()];
    for n in 1..l.len() {
        let t = path.grid.node(n);
        let lhs = normal_cdf((alpha * l[n] - spec.z) / t.sqrt());
        let rhs: f64 = (1..=n)
            .map(|k| {
                let l_mid = 0.5 * (l[k - 1] + l[k]);
                let gap = t - (k as f64 - 0.5) * delta;
                normal_cdf(alpha * (l[n] - l_mid) / gap.sqrt()) * (l[k] - l[k - 1])
            })
            .sum();
        out[n] = lhs - rhs;
    }
    Ok(out)
}

/// Surviving density at node `t_node` for the solved feedback drift.
pub fn density_slice(
    path: &SolutionPath,
    spec: &ProblemSpec,
    x_grid: &[f64],
    t_node: usize,
) -> Result<Vec<f64>> {
    if t_node > path.last_node() {
        return Err(domain(format!(
            "density node {t_node} is beyond the last solved node {}",
            path.last_node()
        )));
    }
    // work on the solved prefix as its own grid
    let grid = GridSpec::new(path.grid.node(path.last_node()), path.last_node())?;
    transition_density(&path.nu, &path.drift(), &grid, spec.z, x_grid, t_node)
}
