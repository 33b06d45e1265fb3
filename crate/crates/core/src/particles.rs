//! Euler particle system for the feedback diffusion, used as a Monte Carlo
//! benchmark. Particles start at `z`; each step moves the survivors by a
//! Gaussian increment minus `alpha` times the fraction absorbed in the
//! previous step, then removes those that crossed zero (optionally also
//! those whose Brownian bridge between the two positions touched zero).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{domain, Result};

/// Particles per independent random stream.
const BLOCK: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ParticleConfig {
    pub n_particles: usize,
    pub n_steps: usize,
    pub seed: u64,
    pub alpha: f64,
    pub z: f64,
    pub t_end: f64,
    /// Brownian-bridge absorption between time steps.
    pub bridge: bool,
}

impl ParticleConfig {
    fn validate(&self) -> Result<()> {
        if self.n_particles == 0 || self.n_steps == 0 {
            return Err(domain("need at least one particle and one step"));
        }
        if !(self.z.is_finite() && self.z > 0.0) {
            return Err(domain(format!("start point must be positive, got {}", self.z)));
        }
        if !(self.t_end.is_finite() && self.t_end > 0.0) {
            return Err(domain(format!("horizon must be positive, got {}", self.t_end)));
        }
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(domain(format!("alpha must be nonnegative, got {}", self.alpha)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParticleRun {
    pub config: ParticleConfig,
    /// Absorbed fraction at every step `0..=n_steps`.
    pub l_hat: Vec<f64>,
    /// Binomial standard error `sqrt(L(1 - L)/n)`.
    pub stderr: Vec<f64>,
    /// Rayon worker threads available during the run.
    pub workers: usize,
}

impl ParticleRun {
    pub fn times(&self) -> Vec<f64> {
        let dt = self.config.t_end / self.config.n_steps as f64;
        (0..=self.config.n_steps).map(|k| k as f64 * dt).collect()
    }
}

struct Block {
    rng: ChaCha8Rng,
    alive: Vec<f64>,
}

impl Block {
    fn advance(&mut self, sd: f64, shift: f64, bridge: bool) -> usize {
        let before = self.alive.len();
        let two_over_var = 2.0 / (sd * sd);
        let mut i = 0;
        while i < self.alive.len() {
            let y = self.alive[i];
            let dw: f64 = self.rng.sample(StandardNormal);
            let y_new = y + sd * dw - shift;
            let hit = y_new <= 0.0
                || (bridge && self.rng.random::<f64>() < (-two_over_var * y * y_new).exp());
            if hit {
                self.alive.swap_remove(i);
            } else {
                self.alive[i] = y_new;
                i += 1;
            }
        }
        before - self.alive.len()
    }
}

/// Runs the particle system. The result depends only on the configuration:
/// every block of particles owns a stream of the seeded generator.
pub fn simulate(config: &ParticleConfig) -> Result<ParticleRun> {
    config.validate()?;
    let n = config.n_particles;
    let dt = config.t_end / config.n_steps as f64;
    let sd = dt.sqrt();
    let mut blocks: Vec<Block> = (0..n.div_ceil(BLOCK))
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(b as u64);
            Block {
                rng,
                alive: vec![config.z; BLOCK.min(n - b * BLOCK)],
            }
        })
        .collect();

    let mut l_hat = Vec::with_capacity(config.n_steps + 1);
    l_hat.push(0.0);
    let mut absorbed = 0usize;
    let mut last_increment = 0.0;
    for _ in 0..config.n_steps {
        let shift = config.alpha * last_increment;
        let count: usize = blocks
            .par_iter_mut()
            .map(|b| b.advance(sd, shift, config.bridge))
            .sum();
        absorbed += count;
        last_increment = count as f64 / n as f64;
        l_hat.push(absorbed as f64 / n as f64);
    }
    let stderr = l_hat.iter().map(|l| (l * (1.0 - l) / n as f64).sqrt()).collect();
    Ok(ParticleRun {
        config: *config,
        l_hat,
        stderr,
        workers: crate::workers(),
    })
}
