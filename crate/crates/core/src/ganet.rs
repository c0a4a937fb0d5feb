//! Real-valued genetic algorithm: roulette selection, single-point
//! crossover, random-resample mutation, and optional elitism, against a
//! pluggable fitness function returning values in `[0, 1]`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// GA hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct GaConfig {
    /// Generations to run.
    pub generations: usize,
    /// Population size.
    pub population: usize,
    /// Mating pool size drawn by roulette each generation.
    pub pool_size: usize,
    /// Probability that a parent pair crosses over.
    pub crossover_prob: f64,
    /// Probability that a non-crossover child mutates.
    pub mutation_prob: f64,
    /// Fraction of genes resampled by one mutation (ceil of fraction * len).
    pub mutation_fraction: f64,
    /// Uniform initialization (and mutation resampling) range.
    pub init_low: f64,
    pub init_high: f64,
    /// Keep all parents in the next population, truncating to size by
    /// descending fitness.
    pub elitism: bool,
    pub seed: u64,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            generations: 1000,
            population: 8,
            pool_size: 4,
            crossover_prob: 0.9,
            mutation_prob: 0.9,
            mutation_fraction: 0.1,
            init_low: -1.0,
            init_high: 1.0,
            elitism: true,
            seed: 0,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population < 2 {
            return Err(Error::invalid("population must be at least 2"));
        }
        if self.generations == 0 {
            return Err(Error::invalid("generations must be at least 1"));
        }
        if self.pool_size < 2 || self.pool_size > self.population {
            return Err(Error::invalid(
                "pool_size must be between 2 and the population size",
            ));
        }
        for (name, p) in [
            ("crossover_prob", self.crossover_prob),
            ("mutation_prob", self.mutation_prob),
            ("mutation_fraction", self.mutation_fraction),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid(format!("{name} must be in [0, 1], got {p}")));
            }
        }
        if !self.init_low.is_finite() || !self.init_high.is_finite() || self.init_low > self.init_high
        {
            return Err(Error::invalid("init range must be finite with low <= high"));
        }
        Ok(())
    }
}

/// A candidate solution: a real genome and its cached fitness
/// (`None` until evaluated).
#[derive(Debug, Clone, PartialEq)]
pub struct Chromosome<T: Real> {
    pub genome: Vec<T>,
    pub fitness: Option<f64>,
}

impl<T: Real> Chromosome<T> {
    pub fn new(genome: Vec<T>) -> Self {
        Self {
            genome,
            fitness: None,
        }
    }
}

/// Best and mean fitness of one generation's population.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenStats {
    pub best: f64,
    pub mean: f64,
}

fn uniform_gene<T: Real>(rng: &mut ChaCha20Rng, low: f64, high: f64) -> T {
    T::of(low + rng.random::<f64>() * (high - low))
}

fn init_with_rng<T: Real>(
    cfg: &GaConfig,
    genome_len: usize,
    rng: &mut ChaCha20Rng,
) -> Vec<Chromosome<T>> {
    (0..cfg.population)
        .map(|_| {
            Chromosome::new(
                (0..genome_len)
                    .map(|_| uniform_gene(rng, cfg.init_low, cfg.init_high))
                    .collect(),
            )
        })
        .collect()
}

/// Seeds a fresh population of `cfg.population` genomes with genes drawn
/// i.i.d. uniform from the init range.
pub fn init_population<T: Real>(cfg: &GaConfig, genome_len: usize) -> Result<Vec<Chromosome<T>>> {
    cfg.validate()?;
    if genome_len == 0 {
        return Err(Error::invalid("genome length must be at least 1"));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    Ok(init_with_rng(cfg, genome_len, &mut rng))
}

/// Draws `pool_size` population indices with replacement, each with
/// probability proportional to fitness; when every fitness is zero the
/// draw is uniform.
pub fn roulette_select<T: Real>(
    population: &[Chromosome<T>],
    pool_size: usize,
    rng: &mut ChaCha20Rng,
) -> Result<Vec<usize>> {
    let mut total = 0.0;
    for (i, c) in population.iter().enumerate() {
        match c.fitness {
            Some(f) if f >= 0.0 => total += f,
            Some(f) => {
                return Err(Error::Contract(format!(
                    "chromosome {i} has negative fitness {f}"
                )))
            }
            None => {
                return Err(Error::Contract(format!(
                    "chromosome {i} selected before evaluation"
                )))
            }
        }
    }
    let n = population.len();
    let mut pool = Vec::with_capacity(pool_size);
    for _ in 0..pool_size {
        let idx = if total > 0.0 {
            let u = rng.random::<f64>() * total;
            let mut cum = 0.0;
            let mut chosen = n - 1;
            for (i, c) in population.iter().enumerate() {
                cum += c.fitness.unwrap();
                if u < cum {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            ((rng.random::<f64>() * n as f64) as usize).min(n - 1)
        };
        pool.push(idx);
    }
    Ok(pool)
}

/// Splices two genomes at `cut` (in `1..len`): the first child takes the
/// head of `a` and tail of `b`, the second the reverse.
pub fn crossover_at<T: Real>(a: &[T], b: &[T], cut: usize) -> Result<(Vec<T>, Vec<T>)> {
    if a.len() != b.len() {
        return Err(Error::invalid("parents have different genome lengths"));
    }
    if cut == 0 || cut >= a.len() {
        return Err(Error::invalid(format!("cut {cut} outside 1..{}", a.len())));
    }
    let mut c1 = a[..cut].to_vec();
    c1.extend_from_slice(&b[cut..]);
    let mut c2 = b[..cut].to_vec();
    c2.extend_from_slice(&a[cut..]);
    Ok((c1, c2))
}

/// With probability `crossover_prob`, single-point crossover at a uniform
/// cut; otherwise the children are copies of the parents (keeping their
/// cached fitness). Genomes shorter than 2 genes always copy. The flag
/// reports whether crossover happened.
pub fn crossover<T: Real>(
    a: &Chromosome<T>,
    b: &Chromosome<T>,
    crossover_prob: f64,
    rng: &mut ChaCha20Rng,
) -> (Chromosome<T>, Chromosome<T>, bool) {
    let len = a.genome.len();
    if len >= 2 && rng.random::<f64>() < crossover_prob {
        let cut = 1 + ((rng.random::<f64>() * (len - 1) as f64) as usize).min(len - 2);
        let (g1, g2) = crossover_at(&a.genome, &b.genome, cut).expect("valid cut");
        (Chromosome::new(g1), Chromosome::new(g2), true)
    } else {
        (a.clone(), b.clone(), false)
    }
}

/// With probability `mutation_prob`, resamples `ceil(fraction * len)`
/// distinct uniformly-chosen genes from the init range, invalidating the
/// cached fitness; otherwise returns the chromosome unchanged.
pub fn mutate<T: Real>(
    mut c: Chromosome<T>,
    mutation_prob: f64,
    mutation_fraction: f64,
    init_range: (f64, f64),
    rng: &mut ChaCha20Rng,
) -> Chromosome<T> {
    if rng.random::<f64>() >= mutation_prob {
        return c;
    }
    let len = c.genome.len();
    let n_mut = ((mutation_fraction * len as f64).ceil() as usize).min(len);
    if n_mut == 0 {
        return c;
    }
    // Partial Fisher-Yates over the index set picks distinct positions.
    let mut indices: Vec<usize> = (0..len).collect();
    for i in 0..n_mut {
        let j = i + ((rng.random::<f64>() * (len - i) as f64) as usize).min(len - i - 1);
        indices.swap(i, j);
    }
    for &idx in &indices[..n_mut] {
        c.genome[idx] = uniform_gene(rng, init_range.0, init_range.1);
    }
    c.fitness = None;
    c
}

fn evaluate<T, F>(population: &mut [Chromosome<T>], fitness_fn: &F) -> Result<()>
where
    T: Real,
    F: Fn(&[T]) -> f64 + Sync,
{
    // Parallel over individuals; results land by index, so scheduling
    // cannot change the outcome.
    let fresh: Vec<(usize, f64)> = population
        .par_iter()
        .enumerate()
        .filter(|(_, c)| c.fitness.is_none())
        .map(|(i, c)| (i, fitness_fn(&c.genome)))
        .collect();
    for (i, f) in fresh {
        if !f.is_finite() || !(0.0..=1.0).contains(&f) {
            return Err(Error::Contract(format!(
                "fitness function returned {f}, want a value in [0, 1]"
            )));
        }
        population[i].fitness = Some(f);
    }
    Ok(())
}

fn best_index<T: Real>(population: &[Chromosome<T>]) -> usize {
    let mut best = 0;
    for i in 1..population.len() {
        if population[i].fitness.unwrap() > population[best].fitness.unwrap() {
            best = i;
        }
    }
    best
}

/// Runs the GA: evaluate, roulette-select a mating pool, cross pairs with
/// probability `p_C`, mutate non-crossover children with probability
/// `p_M`, then form the next population (offspring plus, under elitism,
/// all parents, truncated to size by descending fitness, ties keeping
/// earlier individuals with parents ranked first).
///
/// Returns the best chromosome ever evaluated and per-generation
/// best/mean statistics (one entry per generation).
pub fn run<T, F>(
    cfg: &GaConfig,
    genome_len: usize,
    fitness_fn: F,
) -> Result<(Chromosome<T>, Vec<GenStats>)>
where
    T: Real,
    F: Fn(&[T]) -> f64 + Sync,
{
    cfg.validate()?;
    if genome_len == 0 {
        return Err(Error::invalid("genome length must be at least 1"));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let mut population = init_with_rng::<T>(cfg, genome_len, &mut rng);
    evaluate(&mut population, &fitness_fn)?;
    let mut best_ever = population[best_index(&population)].clone();
    let mut history = Vec::with_capacity(cfg.generations);

    for _ in 0..cfg.generations {
        let pool = roulette_select(&population, cfg.pool_size, &mut rng)?;
        let mut offspring = Vec::with_capacity(cfg.population);
        let mut pair = 0usize;
        while offspring.len() < cfg.population {
            let ia = pool[(2 * pair) % pool.len()];
            let ib = pool[(2 * pair + 1) % pool.len()];
            let (c1, c2, crossed) =
                crossover(&population[ia], &population[ib], cfg.crossover_prob, &mut rng);
            let (c1, c2) = if crossed {
                (c1, c2)
            } else {
                (
                    mutate(
                        c1,
                        cfg.mutation_prob,
                        cfg.mutation_fraction,
                        (cfg.init_low, cfg.init_high),
                        &mut rng,
                    ),
                    mutate(
                        c2,
                        cfg.mutation_prob,
                        cfg.mutation_fraction,
                        (cfg.init_low, cfg.init_high),
                        &mut rng,
                    ),
                )
            };
            offspring.push(c1);
            if offspring.len() < cfg.population {
                offspring.push(c2);
            }
            pair += 1;
        }
        evaluate(&mut offspring, &fitness_fn)?;

        population = if cfg.elitism {
            let mut all = population;
            all.extend(offspring);
            // Stable sort: ties keep insertion order, parents first.
            all.sort_by(|a, b| {
                b.fitness
                    .unwrap()
                    .partial_cmp(&a.fitness.unwrap())
                    .expect("fitness values are finite")
            });
            all.truncate(cfg.population);
            all
        } else {
            offspring
        };

        let bi = best_index(&population);
        if population[bi].fitness.unwrap() > best_ever.fitness.unwrap() {
            best_ever = population[bi].clone();
        }
        let mean = population
            .iter()
            .map(|c| c.fitness.unwrap())
            .sum::<f64>()
            / population.len() as f64;
        history.push(GenStats {
            best: population[bi].fitness.unwrap(),
            mean,
        });
    }
    Ok((best_ever, history))
}

/// Serializes a history as CSV with a `generation,best,mean` header.
pub fn history_to_csv(history: &[GenStats]) -> String {
    let mut out = String::from("generation,best,mean\n");
    for (i, s) in history.iter().enumerate() {
        out.push_str(&format!("{},{},{}\n", i, s.best, s.mean));
    }
    out
}
