use std::collections::HashMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, ValueEnum};
use mckv_core::analysis::InterbankPreset;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Coupled feedback system: t,nu,g,L
    Solve,
    /// First-order expansion in alpha: t,nu,g,L
    Perturb,
    /// Monte Carlo particle system: t,L_hat,stderr
    Particles,
    /// Surviving density at --t-slice: x,p
    Density,
    /// Conditional moments of the default time
    Moments,
    /// Self-convergence on N, 2N, 4N steps
    Convergence,
    /// Volterra loss next to the particle estimate
    Compare,
    /// Feedback strength from bank balance-sheet parameters
    CalibrateAlpha,
    /// Both sides of the single-layer derivative identity
    Lemma1Check,
}

#[derive(Debug, Parser)]
#[command(name = "mckv", version, about = "Boundary-feedback diffusion solvers", allow_negative_numbers = true)]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Command,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Starting point of the diffusion.
    #[arg(long)]
    pub z: Option<f64>,
    #[arg(long)]
    pub t_end: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub particles: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub x_points: Option<usize>,
    /// Time of the density slice (defaults to --t-end).
    #[arg(long)]
    pub t_slice: Option<f64>,
    /// CSV path; metadata goes to `<output>.meta.json`.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// key=value file; flags given on the command line win.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Rescale the first-order term so the assembled loss hits TARGET.
    #[arg(long, value_name = "TARGET")]
    pub rescale: Option<f64>,
    /// Loss rates above this count as blow-up.
    #[arg(long)]
    pub g_max: Option<f64>,
    #[arg(long)]
    pub recovery: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    /// A number in [0, 1) or one of eu, canada, us.
    #[arg(long)]
    pub interbank_fraction: Option<String>,
    /// Absorb particles only at grid times (no Brownian-bridge correction).
    #[arg(long)]
    pub no_bridge: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Settings {
    pub command: Command,
    pub alpha: f64,
    pub z: f64,
    pub t_end: f64,
    pub steps: usize,
    pub particles: usize,
    pub seed: u64,
    pub x_points: usize,
    pub t_slice: Option<f64>,
    pub output: PathBuf,
    pub rescale: Option<f64>,
    pub g_max: f64,
    pub recovery: f64,
    pub sigma: f64,
    pub interbank_fraction: f64,
    pub bridge: bool,
}

fn parse_fraction(s: &str) -> Result<f64> {
    if let Some(p) = InterbankPreset::parse(s) {
        return Ok(p.fraction());
    }
    s.trim()
        .parse()
        .with_context(|| format!("interbank fraction must be a number or eu/canada/us, got {s:?}"))
}

fn read_config(path: &Path) -> Result<HashMap<String, String>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let mut map = HashMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            bail!("{}:{}: expected key=value", path.display(), i + 1);
        };
        map.insert(k.trim().replace('-', "_"), v.trim().to_string());
    }
    Ok(map)
}

struct Layer(HashMap<String, String>);

impl Layer {
    fn get<T: std::str::FromStr>(&mut self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.0.remove(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|e| anyhow::anyhow!("config key {key}: {e}")),
        }
    }
}

impl Cli {
    pub fn resolve(&self) -> Result<Settings> {
        let mut file = Layer(match &self.config {
            Some(p) => read_config(p)?,
            None => HashMap::new(),
        });
        // read every file key, so a flag that overrides one does not leave it
        // behind as unknown
        macro_rules! pick {
            ($field:ident) => {{
                let from_file = file.get(stringify!($field))?;
                self.$field.clone().or(from_file)
            }};
        }
        let fraction_text = {
            let from_file: Option<String> = file.get("interbank_fraction")?;
            self.interbank_fraction.clone().or(from_file)
        };
        let interbank_fraction = match fraction_text {
            Some(s) => parse_fraction(&s)?,
            None => InterbankPreset::Eu.fraction(),
        };
        let bridge_file: Option<bool> = file.get("bridge")?;
        let settings = Settings {
            command: self.command,
            alpha: pick!(alpha).unwrap_or(0.0),
            z: pick!(z).unwrap_or(0.5),
            t_end: pick!(t_end).unwrap_or(1.0),
            steps: pick!(steps).unwrap_or(1000),
            particles: pick!(particles).unwrap_or(100_000),
            seed: pick!(seed).unwrap_or(1),
            x_points: pick!(x_points).unwrap_or(400),
            t_slice: pick!(t_slice),
            output: pick!(output).unwrap_or_else(|| default_output(self.command)),
            rescale: pick!(rescale),
            g_max: pick!(g_max).unwrap_or(1e6),
            recovery: pick!(recovery).unwrap_or(0.9),
            sigma: pick!(sigma).unwrap_or(0.08),
            interbank_fraction,
            bridge: !self.no_bridge && bridge_file.unwrap_or(true),
        };
        if let Some(k) = file.0.keys().next() {
            bail!("unknown config key {k:?}");
        }
        settings.validate()?;
        Ok(settings)
    }
}

fn default_output(c: Command) -> PathBuf {
    let name = c.to_possible_value().map(|v| v.get_name().to_string());
    PathBuf::from(format!("mckv-{}.csv", name.unwrap_or_default()))
}

impl Settings {
    fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| -> Result<()> {
            if !(v.is_finite() && v > 0.0) {
                bail!("--{name} must be positive and finite, got {v}");
            }
            Ok(())
        };
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            bail!("--alpha must be nonnegative, got {}", self.alpha);
        }
        positive("z", self.z)?;
        positive("t-end", self.t_end)?;
        positive("g-max", self.g_max)?;
        if self.steps == 0 || self.particles == 0 {
            bail!("--steps and --particles must be at least 1");
        }
        if self.x_points < 2 {
            bail!("--x-points must be at least 2");
        }
        if let Some(t) = self.t_slice {
            if !(t > 0.0 && t <= self.t_end) {
                bail!("--t-slice must lie in (0, t-end], got {t}");
            }
        }
        if let Some(r) = self.rescale {
            if !r.is_finite() {
                bail!("--rescale target must be finite");
            }
        }
        Ok(())
    }
}
