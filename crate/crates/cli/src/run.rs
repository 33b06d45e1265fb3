use std::time::Instant;

use anyhow::{bail, Result};
use mckv_core::analysis::{
    alpha_from_bank_params, conditional_moments, convergence_order, BankSystemParams,
};
use mckv_core::closed_form::nu0;
use mckv_core::kernels::{lemma1_lhs, lemma1_rhs_form1, lemma1_rhs_form2};
use mckv_core::mckv::{density_slice, solve};
use mckv_core::particles::simulate;
use mckv_core::perturbation::{assemble, nu1};
use mckv_core::{
    BlowUpReport, GridSpec, ParticleConfig, ParticleRun, ProblemSpec, SolutionPath, SolverOptions,
};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{Command, Settings};
use crate::output::{write_meta, Table};

/// Nodes per unit `sqrt(t)` in the lemma check quadrature.
const LEMMA_QUAD: usize = 4000;

pub struct Outcome {
    pub rows: usize,
    pub summary: String,
    pub blow_up: Option<BlowUpReport>,
}

#[derive(Serialize)]
struct Meta<'a> {
    command: Command,
    inputs: &'a Settings,
    seed: u64,
    version: &'static str,
    wall_time_s: f64,
    workers: usize,
    rows: usize,
    blow_up: Option<BlowUpReport>,
    results: Value,
}

pub fn run(s: &Settings) -> Result<Outcome> {
    let start = Instant::now();
    let (table, results, blow_up, summary) = match s.command {
        Command::Solve => cmd_solve(s)?,
        Command::Perturb => cmd_perturb(s)?,
        Command::Particles => cmd_particles(s)?,
        Command::Density => cmd_density(s)?,
        Command::Moments => cmd_moments(s)?,
        Command::Convergence => cmd_convergence(s)?,
        Command::Compare => cmd_compare(s)?,
        Command::CalibrateAlpha => cmd_calibrate(s)?,
        Command::Lemma1Check => cmd_lemma(s)?,
    };
    table.write(&s.output)?;
    write_meta(
        &s.output,
        &Meta {
            command: s.command,
            inputs: s,
            seed: s.seed,
            version: env!("CARGO_PKG_VERSION"),
            wall_time_s: start.elapsed().as_secs_f64(),
            workers: mckv_core::workers(),
            rows: table.rows(),
            blow_up,
            results,
        },
    )?;
    Ok(Outcome { rows: table.rows(), summary, blow_up })
}

type Produced = (Table, Value, Option<BlowUpReport>, String);

fn grid(s: &Settings) -> Result<GridSpec> {
    Ok(GridSpec::new(s.t_end, s.steps)?)
}

fn solve_path(s: &Settings, steps: usize) -> Result<(ProblemSpec, SolutionPath)> {
    let spec = ProblemSpec::new(s.alpha, s.z, GridSpec::new(s.t_end, steps)?)?;
    let opts = SolverOptions { g_max: s.g_max, ..SolverOptions::default() };
    let path = solve(&spec, &opts)?;
    Ok((spec, path))
}

fn particles(s: &Settings) -> Result<ParticleRun> {
    Ok(simulate(&ParticleConfig {
        n_particles: s.particles,
        n_steps: s.steps,
        seed: s.seed,
        alpha: s.alpha,
        z: s.z,
        t_end: s.t_end,
        bridge: s.bridge,
    })?)
}

fn final_loss(p: &SolutionPath) -> f64 {
    p.loss[p.last_node()]
}

fn blow_up_note(b: &Option<BlowUpReport>) -> String {
    match b {
        Some(r) => format!("; blow-up ({:?}) at t={}", r.cause, r.time),
        None => String::new(),
    }
}

fn cmd_solve(s: &Settings) -> Result<Produced> {
    let (_, p) = solve_path(s, s.steps)?;
    let mut t = Table::new(&["t", "nu", "g", "L"]);
    for n in 1..=p.last_node() {
        t.row(&[p.grid.node(n), p.nu[n], p.g[n], p.loss[n]]);
    }
    let summary = format!("L(T)={}{}", final_loss(&p), blow_up_note(&p.blow_up));
    Ok((t, json!({ "final_loss": final_loss(&p) }), p.blow_up, summary))
}

fn cmd_perturb(s: &Settings) -> Result<Produced> {
    let gr = grid(s)?;
    let sol = assemble(s.alpha, &gr, s.z, s.rescale)?;
    let d = gr.delta();
    let mut t = Table::new(&["t", "nu", "g", "L"]);
    let mut loss = 0.0;
    for n in 1..=gr.n_steps() {
        let tn = gr.node(n);
        let nu = nu0(tn, s.z)? + s.alpha * nu1(n, &gr, s.z)?;
        loss += 0.5 * d * (sol.g_assembled[n - 1] + sol.g_assembled[n]);
        t.row(&[tn, nu, sol.g_assembled[n], loss]);
    }
    let results = json!({ "final_loss": loss, "rescaled": sol.rescaled, "scale": sol.scale });
    Ok((t, results, None, format!("L(T)={loss} (scale {})", sol.scale)))
}

fn cmd_particles(s: &Settings) -> Result<Produced> {
    let r = particles(s)?;
    let times = r.times();
    let mut t = Table::new(&["t", "L_hat", "stderr"]);
    for ((t_k, l), se) in times.iter().zip(&r.l_hat).zip(&r.stderr).skip(1) {
        t.row(&[*t_k, *l, *se]);
    }
    let last = r.l_hat[s.steps];
    let summary = format!("L_hat(T)={last} +- {}", r.stderr[s.steps]);
    Ok((t, json!({ "final_loss": last, "workers": r.workers }), None, summary))
}

fn cmd_density(s: &Settings) -> Result<Produced> {
    let (spec, p) = solve_path(s, s.steps)?;
    let wanted = s.t_slice.unwrap_or(s.t_end);
    let node = ((wanted / p.grid.delta()).round() as usize).clamp(1, s.steps);
    let node = node.min(p.last_node());
    if node == 0 {
        bail!("blow-up at the first step; no density to report");
    }
    let hi = s.z + 5.0 * s.t_end.sqrt();
    let xs: Vec<f64> = (0..s.x_points).map(|i| hi * i as f64 / (s.x_points - 1) as f64).collect();
    let dens = density_slice(&p, &spec, &xs, node)?;
    let mut t = Table::new(&["x", "p"]);
    let dx = hi / (s.x_points - 1) as f64;
    let mut mass = 0.0;
    for (i, (x, v)) in xs.iter().zip(&dens).enumerate() {
        t.row(&[*x, *v]);
        if i > 0 {
            mass += 0.5 * dx * (dens[i - 1] + v);
        }
    }
    let slice = p.grid.node(node);
    let results = json!({ "t_slice": slice, "surviving_mass": 1.0 - p.loss[node], "density_mass": mass });
    let summary = format!("density at t={slice}, mass {mass}{}", blow_up_note(&p.blow_up));
    Ok((t, results, p.blow_up, summary))
}

fn cmd_moments(s: &Settings) -> Result<Produced> {
    let (_, p) = solve_path(s, s.steps)?;
    let last = p.last_node();
    if last == 0 {
        bail!("blow-up at the first step; no moments to report");
    }
    // after a blow-up the moments refer to the solved prefix
    let gr = GridSpec::new(p.grid.node(last), last)?;
    let m = conditional_moments(&p.g[..=last], &gr, s.alpha)?;
    let mut t = Table::new(&["alpha", "T", "mass", "cond_mean", "cond_var"]);
    t.row(&[m.alpha, m.horizon, m.total_mass, m.cond_mean, m.cond_var]);
    let summary = format!("mean {} var {}{}", m.cond_mean, m.cond_var, blow_up_note(&p.blow_up));
    Ok((t, serde_json::to_value(m)?, p.blow_up, summary))
}

fn cmd_convergence(s: &Settings) -> Result<Produced> {
    let paths = [s.steps, 2 * s.steps, 4 * s.steps]
        .iter()
        .map(|&n| solve_path(s, n).map(|(_, p)| p))
        .collect::<Result<Vec<_>>>()?;
    if let Some(p) = paths.iter().find(|p| p.blow_up.is_some()) {
        bail!("convergence study needs runs without blow-up{}", blow_up_note(&p.blow_up));
    }
    let mut t = Table::new(&["steps", "g_T", "L_T"]);
    for p in &paths {
        t.row(&[p.grid.n_steps() as f64, p.g[p.last_node()], final_loss(p)]);
    }
    let order_g = convergence_order(&paths[0].g, &paths[1].g, &paths[2].g)?;
    let order_l = convergence_order(&paths[0].loss, &paths[1].loss, &paths[2].loss)?;
    let results = json!({ "order_g": order_g, "order_L": order_l });
    Ok((t, results, None, format!("order g {order_g}, L {order_l}")))
}

fn cmd_compare(s: &Settings) -> Result<Produced> {
    let (_, p) = solve_path(s, s.steps)?;
    let r = particles(s)?;
    let mut t = Table::new(&["t", "L", "L_hat", "stderr"]);
    let (mut worst, mut worst_z) = (0.0f64, 0.0f64);
    for n in 1..=p.last_node() {
        let diff = (p.loss[n] - r.l_hat[n]).abs();
        worst = worst.max(diff);
        if r.stderr[n] > 0.0 {
            worst_z = worst_z.max(diff / r.stderr[n]);
        }
        t.row(&[p.grid.node(n), p.loss[n], r.l_hat[n], r.stderr[n]]);
    }
    let results = json!({ "max_abs_diff": worst, "max_diff_over_stderr": worst_z });
    let summary = format!("max |L - L_hat| = {worst} ({worst_z} stderr){}", blow_up_note(&p.blow_up));
    Ok((t, results, p.blow_up, summary))
}

fn cmd_calibrate(s: &Settings) -> Result<Produced> {
    let b = BankSystemParams::new(s.recovery, s.sigma, s.interbank_fraction)?;
    let alpha = alpha_from_bank_params(&b)?;
    let mut t = Table::new(&["recovery", "sigma", "interbank_fraction", "gamma", "boundary", "alpha"]);
    t.row(&[s.recovery, s.sigma, s.interbank_fraction, b.gamma(), b.boundary(), alpha]);
    Ok((t, json!({ "alpha": alpha }), None, format!("alpha={alpha}")))
}

/// Constant drift `-alpha t` and the zero-drift weight as test functions.
fn cmd_lemma(s: &Settings) -> Result<Produced> {
    let gr = grid(s)?;
    let (mu, z) = (-s.alpha, s.z);
    let xi = move |t: f64, tp: f64| (-mu * mu * (t - tp) / 2.0).exp();
    let nu = move |t: f64| if t <= 0.0 { 0.0 } else { nu0(t, z).unwrap_or(0.0) };
    let mut t = Table::new(&["t", "lhs", "rhs_form1", "rhs_form2"]);
    let mut worst = 0.0f64;
    for n in 1..=gr.n_steps() {
        let tn = gr.node(n);
        let lhs = lemma1_lhs(&xi, &nu, tn, LEMMA_QUAD)?;
        let r1 = lemma1_rhs_form1(&xi, &nu, tn, LEMMA_QUAD)?;
        let r2 = lemma1_rhs_form2(&xi, &nu, tn, LEMMA_QUAD)?;
        worst = worst.max((lhs - r1).abs()).max((lhs - r2).abs());
        t.row(&[tn, lhs, r1, r2]);
    }
    Ok((t, json!({ "max_abs_gap": worst }), None, format!("max gap {worst}")))
}
