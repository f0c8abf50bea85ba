//! Real-coded genetic search over the per-channel transform range.
//!
//! A chromosome holds `log10(rho)` for each color channel. Fitness is the
//! RMSE between the measured transport and its rank-k reconstruction, taken
//! in measured space (after the inverse transform). The loop is generational
//! with elitism, binary-style tournament selection, per-gene arithmetic blend
//! crossover and clamped Gaussian mutation.
//!
//! Every random draw comes from a ChaCha stream keyed by
//! `(seed, generation, slot)`, and fitness evaluation is pure, so results do
//! not depend on how many threads evaluate a generation.

use crate::factor::{compress, reconstruct, FactoredBssrdf, RhoBounds, TransformParams};
use crate::material::RgbTransport;
use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GaConfigError {
    #[error("`{field}` is invalid: {reason}")]
    Invalid { field: &'static str, reason: String },
}

fn invalid(field: &'static str, reason: impl Into<String>) -> GaConfigError {
    GaConfigError::Invalid { field, reason: reason.into() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaConfig {
    pub population_size: usize,
    pub max_generations: usize,
    pub tournament_size: usize,
    pub crossover_rate: f64,
    pub mutation_rate: f64,
    /// Standard deviation of the Gaussian mutation, in log10(rho) units.
    pub mutation_sigma: f64,
    pub elitism_count: usize,
    pub convergence_window: usize,
    pub convergence_epsilon: f64,
    pub seed: u64,
    pub rho_bounds: RhoBounds,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            population_size: 32,
            max_generations: 50,
            tournament_size: 2,
            crossover_rate: 0.9,
            mutation_rate: 0.1,
            mutation_sigma: 0.25,
            elitism_count: 1,
            convergence_window: 10,
            convergence_epsilon: 1e-6,
            seed: 0,
            rho_bounds: RhoBounds::default(),
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<(), GaConfigError> {
        if self.population_size == 0 {
            return Err(invalid("population_size", "must be positive"));
        }
        if self.max_generations == 0 {
            return Err(invalid("max_generations", "must be positive"));
        }
        if self.tournament_size < 2 {
            return Err(invalid("tournament_size", "must be at least 2"));
        }
        if self.elitism_count == 0 {
            return Err(invalid("elitism_count", "at least one elite is required for a monotone history"));
        }
        if self.elitism_count > self.population_size {
            return Err(invalid("elitism_count", "cannot exceed population_size"));
        }
        if self.elitism_count < self.population_size && self.tournament_size > self.population_size {
            return Err(invalid("tournament_size", "cannot exceed population_size"));
        }
        if !(0.0..=1.0).contains(&self.crossover_rate) {
            return Err(invalid("crossover_rate", "must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.mutation_rate) {
            return Err(invalid("mutation_rate", "must lie in [0, 1]"));
        }
        if !(self.mutation_sigma >= 0.0 && self.mutation_sigma.is_finite()) {
            return Err(invalid("mutation_sigma", "must be a nonnegative finite number"));
        }
        if self.convergence_window == 0 {
            return Err(invalid("convergence_window", "must be positive"));
        }
        if !(self.convergence_epsilon > 0.0) {
            return Err(invalid("convergence_epsilon", "must be positive"));
        }
        self.rho_bounds.validate().map_err(|e| invalid("rho_bounds", e.to_string()))
    }

    pub fn gene_bounds(&self) -> GeneBounds {
        GeneBounds { lo: self.rho_bounds.min.log10(), hi: self.rho_bounds.max.log10() }
    }
}

/// Inclusive gene range in log10(rho) units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneBounds {
    pub lo: f64,
    pub hi: f64,
}

impl GeneBounds {
    fn clamp(&self, g: f64) -> f64 {
        g.clamp(self.lo, self.hi)
    }

    pub fn contains(&self, c: &Chromosome) -> bool {
        c.genes.iter().all(|&g| g >= self.lo && g <= self.hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Chromosome {
    pub genes: [f64; 3],
}

impl Chromosome {
    pub fn from_params(p: &TransformParams) -> Self {
        Self { genes: p.rho.map(f64::log10) }
    }

    pub fn params(&self) -> TransformParams {
        TransformParams { rho: self.genes.map(|g| 10f64.powf(g)) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitnessReport {
    pub rmse: f64,
    pub per_channel_rmse: [f64; 3],
    pub clamped_entry_count: usize,
}

impl FitnessReport {
    /// Penalty assigned when compression fails, so the search stays total.
    pub fn worst() -> Self {
        Self { rmse: f64::INFINITY, per_channel_rmse: [f64::INFINITY; 3], clamped_entry_count: 0 }
    }

    pub fn is_worst(&self) -> bool {
        self.rmse.is_infinite()
    }
}

/// Measured-space RMSE of the rank-k reconstruction under chromosome `c`.
pub fn fitness(transport: &RgbTransport, c: &Chromosome, k: usize) -> FitnessReport {
    fitness_for_params(transport, &c.params(), k)
}

/// [`fitness`] for explicit transform parameters.
pub fn fitness_for_params(transport: &RgbTransport, params: &TransformParams, k: usize) -> FitnessReport {
    match compress(transport, params, k) {
        Ok(f) => factored_fitness(transport, &f),
        Err(_) => FitnessReport::worst(),
    }
}

/// Measured-space error of an existing factorization.
pub fn factored_fitness(transport: &RgbTransport, f: &FactoredBssrdf) -> FitnessReport {
    if transport.iter().any(|m| m.rows() != f.n_i() || m.cols() != f.n_o()) {
        return FitnessReport::worst();
    }
    let recon = match reconstruct(f) {
        Ok(r) => r,
        Err(_) => return FitnessReport::worst(),
    };
    let mut per_channel = [0.0; 3];
    let mut total_sq = 0.0;
    let mut total_n = 0usize;
    for (c, (m, r)) in transport.iter().zip(&recon.transport).enumerate() {
        let sq: f64 = m
            .values()
            .as_slice()
            .iter()
            .zip(r.values().as_slice())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        let n = m.rows() * m.cols();
        per_channel[c] = (sq / n as f64).sqrt();
        total_sq += sq;
        total_n += n;
    }
    FitnessReport {
        rmse: (total_sq / total_n as f64).sqrt(),
        per_channel_rmse: per_channel,
        clamped_entry_count: recon.clamped_total(),
    }
}

/// Deterministic RNG for one `(generation, slot)` cell of the search.
pub fn stream_rng(seed: u64, generation: u64, slot: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((generation << 32) | (slot & 0xffff_ffff));
    rng
}

/// Index of the best (lowest rmse) of `tournament_size` distinct members
/// drawn uniformly; ties go to the lowest index.
pub fn select_tournament<R: Rng + ?Sized>(fitnesses: &[f64], tournament_size: usize, rng: &mut R) -> usize {
    let size = tournament_size.clamp(1, fitnesses.len());
    sample_indices(rng, fitnesses.len(), size)
        .into_iter()
        .min_by(|&a, &b| fitnesses[a].total_cmp(&fitnesses[b]).then(a.cmp(&b)))
        .expect("tournament has at least one member")
}

/// Arithmetic blend with a fixed weight per gene: `l*a + (1-l)*b` and `(1-l)*a + l*b`.
pub fn blend(a: &Chromosome, b: &Chromosome, lambda: [f64; 3], bounds: &GeneBounds) -> (Chromosome, Chromosome) {
    let mut c1 = *a;
    let mut c2 = *b;
    for g in 0..3 {
        c1.genes[g] = bounds.clamp(lambda[g] * a.genes[g] + (1.0 - lambda[g]) * b.genes[g]);
        c2.genes[g] = bounds.clamp((1.0 - lambda[g]) * a.genes[g] + lambda[g] * b.genes[g]);
    }
    (c1, c2)
}

/// Per-gene blend with `lambda ~ U(0, 1)` when crossover fires, copies otherwise.
pub fn crossover_blend<R: Rng + ?Sized>(
    a: &Chromosome,
    b: &Chromosome,
    crossover_rate: f64,
    bounds: &GeneBounds,
    rng: &mut R,
) -> (Chromosome, Chromosome) {
    if rng.random::<f64>() < crossover_rate {
        let lambda = [rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()];
        blend(a, b, lambda, bounds)
    } else {
        (*a, *b)
    }
}

pub fn mutate_gaussian<R: Rng + ?Sized>(
    c: &Chromosome,
    mutation_rate: f64,
    mutation_sigma: f64,
    bounds: &GeneBounds,
    rng: &mut R,
) -> Chromosome {
    let mut out = *c;
    if mutation_sigma <= 0.0 {
        return out;
    }
    let normal = Normal::new(0.0, mutation_sigma).expect("sigma checked positive");
    for g in out.genes.iter_mut() {
        if rng.random::<f64>() < mutation_rate {
            *g = bounds.clamp(*g + normal.sample(rng));
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub generation: usize,
    pub best_rmse: f64,
    pub mean_rmse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evolution {
    pub best: Chromosome,
    pub best_fitness: FitnessReport,
    pub history: Vec<GenerationStats>,
    /// Every chromosome that was scored, in evaluation order.
    pub evaluated: Vec<Chromosome>,
}

/// Run the genetic search for the transform range at rank `k`.
pub fn evolve(transport: &RgbTransport, k: usize, cfg: &GaConfig) -> Result<Evolution, GaConfigError> {
    cfg.validate()?;
    let bounds = cfg.gene_bounds();
    let n = cfg.population_size;

    let mut population: Vec<(Chromosome, Option<FitnessReport>)> = (0..n)
        .map(|i| {
            let mut rng = stream_rng(cfg.seed, 0, i as u64);
            let genes = [(); 3].map(|_| rng.random_range(bounds.lo..=bounds.hi));
            (Chromosome { genes }, None)
        })
        .collect();

    let mut best: Option<(Chromosome, FitnessReport)> = None;
    let mut history = Vec::new();
    let mut evaluated = Vec::new();

    for generation in 0..cfg.max_generations {
        let pending: Vec<usize> = (0..n).filter(|&i| population[i].1.is_none()).collect();
        let scored: Vec<FitnessReport> =
            pending.par_iter().map(|&i| fitness(transport, &population[i].0, k)).collect();
        for (&i, f) in pending.iter().zip(scored) {
            evaluated.push(population[i].0);
            population[i].1 = Some(f);
        }
        let rmse: Vec<f64> = population.iter().map(|(_, f)| f.expect("scored").rmse).collect();

        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| rmse[a].total_cmp(&rmse[b]).then(a.cmp(&b)));
        let leader = order[0];
        if best.as_ref().is_none_or(|(_, f)| rmse[leader] < f.rmse) {
            best = Some((population[leader].0, population[leader].1.expect("scored")));
        }
        history.push(GenerationStats {
            generation,
            best_rmse: rmse[leader],
            mean_rmse: rmse.iter().sum::<f64>() / n as f64,
        });

        if converged(&history, cfg) || generation + 1 == cfg.max_generations {
            break;
        }

        let mut next: Vec<(Chromosome, Option<FitnessReport>)> =
            order.iter().take(cfg.elitism_count).map(|&i| population[i]).collect();
        let mut pair = 0u64;
        while next.len() < n {
            let mut rng = stream_rng(cfg.seed, generation as u64 + 1, pair);
            pair += 1;
            let a = select_tournament(&rmse, cfg.tournament_size, &mut rng);
            let b = select_tournament(&rmse, cfg.tournament_size, &mut rng);
            let (c1, c2) = crossover_blend(&population[a].0, &population[b].0, cfg.crossover_rate, &bounds, &mut rng);
            for child in [c1, c2] {
                if next.len() < n {
                    let m = mutate_gaussian(&child, cfg.mutation_rate, cfg.mutation_sigma, &bounds, &mut rng);
                    next.push((m, None));
                }
            }
        }
        population = next;
    }

    let (best, best_fitness) = best.expect("at least one generation ran");
    Ok(Evolution { best, best_fitness, history, evaluated })
}

fn converged(history: &[GenerationStats], cfg: &GaConfig) -> bool {
    let w = cfg.convergence_window;
    if history.len() <= w {
        return false;
    }
    let now = history[history.len() - 1].best_rmse;
    let then = history[history.len() - 1 - w].best_rmse;
    if now.is_infinite() && then.is_infinite() {
        return false;
    }
    then - now < cfg.convergence_epsilon
}

/// CSV with columns `generation,best_rmse,mean_rmse`.
pub fn write_history_csv<W: Write>(history: &[GenerationStats], writer: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    for h in history {
        w.serialize(h)?;
    }
    w.flush()?;
    Ok(())
}
