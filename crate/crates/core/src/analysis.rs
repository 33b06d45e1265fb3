//! Derived quantities: the interaction strength implied by balance-sheet
//! parameters, moments of the default time conditional on default before the
//! horizon, and empirical convergence orders.

use serde::Serialize;

use crate::error::{domain, input, Error, Result};
use crate::kernels::GridSpec;
use crate::mckv::SolutionPath;
use crate::quadrature::trapezoid_nodal;

/// Interbank share of total liabilities for three banking systems.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InterbankPreset {
    Eu,
    Canada,
    Us,
}

impl InterbankPreset {
    pub fn fraction(self) -> f64 {
        match self {
            Self::Eu => 0.12,
            Self::Canada => 0.08,
            Self::Us => 0.045,
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "eu" => Some(Self::Eu),
            "canada" => Some(Self::Canada),
            "us" => Some(Self::Us),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BankSystemParams {
    pub recovery_rate: f64,
    /// Asset volatility per square-root year.
    pub sigma: f64,
    /// Interbank liabilities over total liabilities, in `[0, 1)`.
    pub interbank_fraction: f64,
    pub external_liability: f64,
}

impl BankSystemParams {
    pub fn new(recovery_rate: f64, sigma: f64, interbank_fraction: f64) -> Result<Self> {
        let p = Self {
            recovery_rate,
            sigma,
            interbank_fraction,
            external_liability: 1.0,
        };
        p.validate()?;
        Ok(p)
    }

    fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.recovery_rate) {
            return Err(domain(format!("recovery rate must be in [0, 1], got {}", self.recovery_rate)));
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(domain(format!("volatility must be positive, got {}", self.sigma)));
        }
        if !(0.0..1.0).contains(&self.interbank_fraction) {
            return Err(domain(format!(
                "interbank fraction must be in [0, 1), got {}",
                self.interbank_fraction
            )));
        }
        if !(self.external_liability.is_finite() && self.external_liability > 0.0) {
            return Err(domain("external liability must be positive"));
        }
        Ok(())
    }

    /// Interbank liability `gamma = f L / (1 - f)`.
    pub fn gamma(&self) -> f64 {
        self.interbank_fraction * self.external_liability / (1.0 - self.interbank_fraction)
    }

    /// Default boundary `R (L + gamma) - gamma`.
    pub fn boundary(&self) -> f64 {
        let g = self.gamma();
        self.recovery_rate * (self.external_liability + g) - g
    }
}

/// `alpha = gamma (1 - R^2) / (sigma Lambda0)`.
pub fn alpha_from_bank_params(p: &BankSystemParams) -> Result<f64> {
    p.validate()?;
    let lambda0 = p.boundary();
    if lambda0 <= 0.0 {
        return Err(Error::Degenerate(format!(
            "default boundary {lambda0} is not positive; recovery too low for this exposure"
        )));
    }
    Ok(p.gamma() * (1.0 - p.recovery_rate * p.recovery_rate) / (p.sigma * lambda0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentsResult {
    pub horizon: f64,
    pub alpha: f64,
    pub cond_mean: f64,
    pub cond_var: f64,
    pub total_mass: f64,
}

/// Mean and variance of the default time given default before `T`, from the
/// loss rate `g` on the nodes of `grid` (trapezoid on the same grid).
pub fn conditional_moments(g: &[f64], grid: &GridSpec, alpha: f64) -> Result<MomentsResult> {
    if g.len() != grid.n_steps() + 1 {
        return Err(input(format!(
            "rate has {} values, grid has {} nodes",
            g.len(),
            grid.n_steps() + 1
        )));
    }
    if g.iter().any(|v| !v.is_finite()) {
        return Err(input("rate contains non-finite values"));
    }
    let d = grid.delta();
    let t = grid.nodes();
    let mass = trapezoid_nodal(g, d);
    if !(mass > 0.0) {
        return Err(Error::UndefinedConditional(format!(
            "no mass absorbed before the horizon (mass {mass})"
        )));
    }
    let weighted: Vec<f64> = g.iter().zip(&t).map(|(g, t)| g * t).collect();
    let mean = trapezoid_nodal(&weighted, d) / mass;
    let centred: Vec<f64> = g.iter().zip(&t).map(|(g, t)| g * (t - mean).powi(2)).collect();
    let var = trapezoid_nodal(&centred, d) / mass;
    Ok(MomentsResult {
        horizon: grid.t_end(),
        alpha,
        cond_mean: mean,
        cond_var: var.max(0.0),
        total_mass: mass,
    })
}

/// `log2(|a - b| / |b - c|)` in the sup norm, sampled at the nodes of the
/// coarsest of three solutions on grids of `N`, `2N` and `4N` steps.
pub fn convergence_order(coarse: &[f64], mid: &[f64], fine: &[f64]) -> Result<f64> {
    let n = coarse.len().saturating_sub(1);
    if n == 0 || mid.len() != 2 * n + 1 || fine.len() != 4 * n + 1 {
        return Err(input(format!(
            "expected nested samples of lengths N+1, 2N+1, 4N+1; got {}, {}, {}",
            coarse.len(),
            mid.len(),
            fine.len()
        )));
    }
    let sup = |f: &dyn Fn(usize) -> f64| (0..=n).map(f).fold(0.0, f64::max);
    let e1 = sup(&|k| (coarse[k] - mid[2 * k]).abs());
    let e2 = sup(&|k| (mid[2 * k] - fine[4 * k]).abs());
    if e1 == 0.0 || e2 == 0.0 {
        return Err(input("successive solutions coincide; order undefined"));
    }
    Ok((e1 / e2).log2())
}

/// [`convergence_order`] of the loss rates of three nested solves.
pub fn convergence_order_paths(paths: [&SolutionPath; 3]) -> Result<f64> {
    if paths.iter().any(|p| p.blow_up.is_some()) {
        return Err(input("convergence order needs solutions without blow-up"));
    }
    convergence_order(&paths[0].g, &paths[1].g, &paths[2].g)
}
