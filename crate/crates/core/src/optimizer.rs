//! Configuration search for SISO channel-gain maximization.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mnt::{end_to_end, DmaConfiguration, SystemParameters};
use crate::scenario::{derive_seed, sample_configs};

/// `|H(v)[user, feed]|^2`.
pub fn channel_gain(p: &SystemParameters, v: &DmaConfiguration, user: usize, feed: usize) -> Result<f64> {
    if user >= p.n_u() || feed >= p.n_f() {
        return Err(Error::InvalidArgument(format!(
            "link ({user}, {feed}) outside {}x{} channel",
            p.n_u(),
            p.n_f()
        )));
    }
    if v.len() != p.n_m() {
        return Err(Error::Shape(format!(
            "configuration has {} bits, expected {}",
            v.len(),
            p.n_m()
        )));
    }
    Ok(end_to_end(p, v)?[(user, feed)].norm_sqr())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GaConfig {
    pub population: usize,
    /// `None` means `100 * N_M`.
    pub max_generations: Option<usize>,
    pub stall_generations: usize,
    /// Relative best-gain increase that still counts as progress.
    pub improvement_tol: f64,
    pub seed: u64,
    /// Seed of the random baseline; `None` derives one from `seed`.
    pub baseline_seed: Option<u64>,
    pub baseline_size: usize,
    pub tournament: usize,
    pub crossover_rate: f64,
    /// Per-bit flip probability; `None` means `min(1 / N_M, 0.5)`.
    pub mutation_rate: Option<f64>,
    pub elitism: usize,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            population: 200,
            max_generations: None,
            stall_generations: 50,
            improvement_tol: 1e-6,
            seed: 0,
            baseline_seed: None,
            baseline_size: 100,
            tournament: 2,
            crossover_rate: 0.9,
            mutation_rate: None,
            elitism: 1,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidArgument(msg.into()));
        if self.population < 2 {
            return bad("population must be >= 2");
        }
        if !(self.crossover_rate > 0.0 && self.crossover_rate < 1.0) {
            return bad("crossover_rate must lie in (0, 1)");
        }
        if let Some(m) = self.mutation_rate {
            if !(m > 0.0 && m < 1.0) {
                return bad("mutation_rate must lie in (0, 1)");
            }
        }
        if self.tournament == 0 {
            return bad("tournament size must be >= 1");
        }
        if self.elitism == 0 || self.elitism >= self.population {
            return bad("elitism must be at least 1 and smaller than the population");
        }
        if self.max_generations == Some(0) || self.stall_generations == 0 {
            return bad("generation limits must be >= 1");
        }
        if !(self.improvement_tol >= 0.0) {
            return bad("improvement_tol must be non-negative");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    pub mean: f64,
    pub sd: f64,
    pub max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OptimizationResult {
    pub best_v: DmaConfiguration,
    pub best_gain: f64,
    pub generations_used: usize,
    /// Best gain in the population after each generation, starting with the
    /// initial population.
    pub gain_trace: Vec<f64>,
    pub random_baseline: Baseline,
    /// `best_gain / random_baseline.mean`.
    pub enhancement: f64,
}

fn evaluate<F>(fitness: &F, genomes: &[DmaConfiguration]) -> Result<Vec<f64>>
where
    F: Fn(&DmaConfiguration) -> Result<f64> + Sync,
{
    genomes
        .par_iter()
        .map(|v| {
            let g = fitness(v)?;
            if !g.is_finite() {
                return Err(Error::Degenerate(format!(
                    "non-finite gain for configuration {}",
                    v.to_bitstring()
                )));
            }
            Ok(g)
        })
        .collect()
}

fn tournament(rng: &mut ChaCha8Rng, gains: &[f64], size: usize) -> usize {
    let mut best = rng.random_range(0..gains.len());
    for _ in 1..size {
        let c = rng.random_range(0..gains.len());
        if gains[c] > gains[best] {
            best = c;
        }
    }
    best
}

/// Elitist genetic algorithm over length-`n_m` bitstrings, maximizing `fitness`.
///
/// The random baseline is drawn from its own seed and its best members seed the
/// initial population, so `best_gain >= random_baseline.max`. All random draws
/// come from one sequential stream; only fitness evaluation runs in parallel.
pub fn genetic_optimize<F>(fitness: F, n_m: usize, cfg: &GaConfig) -> Result<OptimizationResult>
where
    F: Fn(&DmaConfiguration) -> Result<f64> + Sync,
{
    cfg.validate()?;
    if n_m == 0 {
        return Err(Error::InvalidArgument("n_m must be >= 1".into()));
    }
    let max_generations = cfg.max_generations.unwrap_or(100 * n_m);
    let mutation = cfg.mutation_rate.unwrap_or((1.0 / n_m as f64).min(0.5));

    let baseline_seed = cfg.baseline_seed.unwrap_or_else(|| derive_seed(cfg.seed, &[0xba5e]));
    let baseline_v = sample_configs(n_m, cfg.baseline_size, baseline_seed, false);
    let baseline_g = evaluate(&fitness, &baseline_v)?;
    let baseline = summarize(&baseline_g);

    let mut order: Vec<usize> = (0..baseline_v.len()).collect();
    order.sort_by(|&i, &j| baseline_g[j].total_cmp(&baseline_g[i]));
    let mut pop: Vec<DmaConfiguration> = Vec::with_capacity(cfg.population);
    let mut gains: Vec<f64> = Vec::with_capacity(cfg.population);
    for &i in order.iter().take(cfg.population) {
        pop.push(baseline_v[i].clone());
        gains.push(baseline_g[i]);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let fresh: Vec<DmaConfiguration> = (pop.len()..cfg.population)
        .map(|_| DmaConfiguration::new((0..n_m).map(|_| rng.random::<bool>()).collect()))
        .collect();
    gains.extend(evaluate(&fitness, &fresh)?);
    pop.extend(fresh);

    let best_of = |gains: &[f64]| (0..gains.len()).fold(0, |b, i| if gains[i] > gains[b] { i } else { b });
    let mut best = best_of(&gains);
    let mut trace = vec![gains[best]];
    let mut stall = 0;
    let mut generations = 0;

    while generations < max_generations && stall < cfg.stall_generations {
        let mut ranked: Vec<usize> = (0..pop.len()).collect();
        ranked.sort_by(|&i, &j| gains[j].total_cmp(&gains[i]));
        let mut next: Vec<DmaConfiguration> = ranked[..cfg.elitism].iter().map(|&i| pop[i].clone()).collect();
        let mut next_gains: Vec<f64> = ranked[..cfg.elitism].iter().map(|&i| gains[i]).collect();

        let mut children = Vec::with_capacity(cfg.population - cfg.elitism);
        while next.len() + children.len() < cfg.population {
            let p1 = tournament(&mut rng, &gains, cfg.tournament);
            let p2 = tournament(&mut rng, &gains, cfg.tournament);
            let cross = rng.random::<f64>() < cfg.crossover_rate;
            let bits: Vec<bool> = (0..n_m)
                .map(|i| {
                    let from_second = cross && rng.random::<bool>();
                    let bit = if from_second { pop[p2].bits()[i] } else { pop[p1].bits()[i] };
                    bit ^ (rng.random::<f64>() < mutation)
                })
                .collect();
            children.push(DmaConfiguration::new(bits));
        }
        next_gains.extend(evaluate(&fitness, &children)?);
        next.extend(children);
        pop = next;
        gains = next_gains;
        generations += 1;

        let prev = trace[trace.len() - 1];
        best = best_of(&gains);
        let now = gains[best];
        trace.push(now);
        if now - prev > cfg.improvement_tol * prev.abs() {
            stall = 0;
        } else {
            stall += 1;
        }
    }

    let best_gain = gains[best];
    Ok(OptimizationResult {
        best_v: pop[best].clone(),
        best_gain,
        generations_used: generations,
        gain_trace: trace,
        random_baseline: baseline,
        enhancement: best_gain / baseline.mean,
    })
}

fn summarize(g: &[f64]) -> Baseline {
    if g.is_empty() {
        return Baseline {
            mean: f64::NAN,
            sd: f64::NAN,
            max: f64::NEG_INFINITY,
        };
    }
    let n = g.len() as f64;
    let mean = g.iter().sum::<f64>() / n;
    let sd = (g.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    Baseline {
        mean,
        sd,
        max: g.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    }
}

/// Largest `n_m` accepted by [`exhaustive_search`].
pub const EXHAUSTIVE_MAX_BITS: usize = 24;

/// Best configuration by enumerating all `2^n_m` of them.
pub fn exhaustive_search<F>(fitness: F, n_m: usize) -> Result<(DmaConfiguration, f64)>
where
    F: Fn(&DmaConfiguration) -> Result<f64> + Sync,
{
    if n_m == 0 || n_m > EXHAUSTIVE_MAX_BITS {
        return Err(Error::InvalidArgument(format!(
            "exhaustive search needs 1 <= n_m <= {EXHAUSTIVE_MAX_BITS}, got {n_m}"
        )));
    }
    let decode = |code: u64| DmaConfiguration::new((0..n_m).map(|i| code >> i & 1 == 1).collect());
    let (code, gain) = (0..1u64 << n_m)
        .into_par_iter()
        .map(|code| fitness(&decode(code)).map(|g| (code, g)))
        .try_reduce(
            || (0, f64::NEG_INFINITY),
            |a, b| Ok(if b.1 > a.1 || (b.1 == a.1 && b.0 < a.0) { b } else { a }),
        )?;
    Ok((decode(code), gain))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ones(v: &DmaConfiguration) -> Result<f64> {
        Ok(v.bits().iter().filter(|&&b| b).count() as f64)
    }

    #[test]
    fn separable_fitness_reaches_all_ones() {
        for n_m in [4, 10, 16] {
            let cfg = GaConfig {
                max_generations: Some(100),
                seed: n_m as u64,
                ..Default::default()
            };
            let res = genetic_optimize(ones, n_m, &cfg).unwrap();
            assert_eq!(res.best_v, DmaConfiguration::ones(n_m));
        }
    }

    #[test]
    fn single_bit_is_solved_immediately() {
        let res = genetic_optimize(ones, 1, &GaConfig::default()).unwrap();
        assert_eq!(res.best_gain, 1.0);
        assert_eq!(res.gain_trace[0], 1.0);
    }

    #[test]
    fn exhaustive_finds_all_ones() {
        let (v, g) = exhaustive_search(ones, 10).unwrap();
        assert_eq!(g, 10.0);
        assert_eq!(v, DmaConfiguration::ones(10));
        assert!(exhaustive_search(ones, 0).is_err());
    }

    #[test]
    fn rejects_bad_rates() {
        let cfg = GaConfig {
            crossover_rate: 1.0,
            ..Default::default()
        };
        assert!(genetic_optimize(ones, 4, &cfg).is_err());
    }
}
