//! Genetic search for the five most informative spectral bands.
//!
//! A chromosome is an ordered list of five 1-based band indices in the
//! 116-band space. Its fitness is the validation accuracy of a CNN trained
//! on just those bands. Breeding is generational: tournament selection,
//! two-point crossover, per-gene uniform integer mutation. Chromosomes with
//! out-of-range or repeated genes score 0 without training. The best
//! chromosome ever evaluated is kept as the hall of fame.

use std::collections::HashMap;
use std::ops::RangeInclusive;
use std::sync::Mutex;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cnn::{stratified_split, train_on_split, TrainConfig};
use crate::cube::{Label, LabeledSample};
use crate::preprocess::{gene_to_slot, wavelength_of_band};
use crate::scalar::Scalar;
use crate::seed::derive_seed;

pub const GENES: usize = 5;
/// Tournament redraws allowed before an invalid winner is replaced by a
/// fresh random chromosome.
const MAX_REDRAWS: usize = 64;

#[derive(Debug, Error, PartialEq)]
pub enum GaError {
    #[error("degenerate dataset: {0}")]
    DegenerateDataset(String),
    #[error("band range {lo}..={hi} holds fewer than {GENES} bands or leaves the dataset")]
    EmptySearchRange { lo: usize, hi: usize },
    #[error("invalid GA configuration: {0}")]
    BadConfig(String),
    #[error("tournament over a chromosome without fitness")]
    UnevaluatedFitness,
    #[error("band {gene} cannot be selected from a {bands}-band cube")]
    BandUnavailable { gene: usize, bands: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chromosome {
    genes: Vec<usize>,
    fitness: Option<f64>,
}

impl Chromosome {
    pub fn new(genes: Vec<usize>) -> Self {
        Chromosome { genes, fitness: None }
    }

    pub fn genes(&self) -> &[usize] {
        &self.genes
    }

    pub fn fitness(&self) -> Option<f64> {
        self.fitness
    }

    /// Exactly five unique genes inside `range`.
    pub fn is_valid(&self, range: &RangeInclusive<usize>) -> bool {
        self.genes.len() == GENES
            && self.genes.iter().all(|g| range.contains(g))
            && (1..GENES).all(|i| !self.genes[..i].contains(&self.genes[i]))
    }

    fn with_fitness(mut self, f: f64) -> Self {
        self.fitness = Some(f);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaConfig {
    pub population: usize,
    pub generations: usize,
    pub crossover_prob: f64,
    pub mutation_prob: f64,
    pub tournament_size: usize,
    /// Inclusive 1-based band interval searched.
    pub band_range: (usize, usize),
    pub seed: u64,
    pub fitness_train: TrainConfig,
}

impl Default for GaConfig {
    fn default() -> Self {
        GaConfig {
            population: 12,
            generations: 8,
            crossover_prob: 0.7,
            mutation_prob: 0.2,
            tournament_size: 3,
            band_range: (7, 107),
            seed: 0,
            fitness_train: TrainConfig::fitness(),
        }
    }
}

impl GaConfig {
    pub fn range(&self) -> RangeInclusive<usize> {
        self.band_range.0..=self.band_range.1
    }

    pub fn validate(&self) -> Result<(), GaError> {
        let (lo, hi) = self.band_range;
        if lo == 0 || hi < lo || hi - lo + 1 < GENES {
            return Err(GaError::EmptySearchRange { lo, hi });
        }
        let prob = 0.0..=1.0;
        if !prob.contains(&self.crossover_prob) || !prob.contains(&self.mutation_prob) {
            return Err(GaError::BadConfig("probabilities must lie in [0, 1]".into()));
        }
        if self.population < 2 || self.tournament_size == 0 || self.tournament_size > self.population {
            return Err(GaError::BadConfig(format!(
                "need population >= 2 and 1 <= tournament ({}) <= population ({})",
                self.tournament_size, self.population
            )));
        }
        self.fitness_train.validate().map_err(|e| GaError::BadConfig(e.to_string()))
    }
}

/// Fitness statistics of one population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    /// 0 is the random initial population.
    pub generation: usize,
    pub best: f64,
    pub mean: f64,
    pub min: f64,
    pub best_genes: Vec<usize>,
    /// Hall-of-fame fitness after this generation.
    pub best_so_far: f64,
    pub best_so_far_genes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaHistory {
    pub initial: GenerationRecord,
    /// One record per bred generation.
    pub generations: Vec<GenerationRecord>,
    /// Fitness computations actually performed (CNN trainings or
    /// surrogate calls); invalid chromosomes are not counted.
    pub evaluations: usize,
    pub cache_hits: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaResult {
    pub best: Chromosome,
    pub history: GaHistory,
}

impl GaResult {
    pub fn wavelengths_nm(&self) -> Vec<f64> {
        self.best.genes.iter().map(|&g| wavelength_of_band(g).unwrap_or(f64::NAN)).collect()
    }
}

/// Swaps `genes[p..q]` between the parents.
pub fn crossover_at(a: &Chromosome, b: &Chromosome, p: usize, q: usize) -> (Chromosome, Chromosome) {
    let mut x = a.genes.clone();
    let mut y = b.genes.clone();
    x[p..q].swap_with_slice(&mut y[p..q]);
    (Chromosome::new(x), Chromosome::new(y))
}

/// Two-point crossover with cuts `1 <= p < q < 5` drawn uniformly.
pub fn two_point_crossover<R: Rng>(a: &Chromosome, b: &Chromosome, rng: &mut R) -> (Chromosome, Chromosome) {
    let n = a.genes.len().min(b.genes.len());
    if n < 3 {
        return (Chromosome::new(a.genes.clone()), Chromosome::new(b.genes.clone()));
    }
    let p = rng.random_range(1..n - 1);
    let q = rng.random_range(p + 1..n);
    crossover_at(a, b, p, q)
}

/// Each gene is replaced by a uniform draw from `range` with probability
/// `per_gene_prob`. Fitness survives only if nothing was touched.
pub fn mutate_uniform_int<R: Rng>(
    c: &Chromosome,
    per_gene_prob: f64,
    range: &RangeInclusive<usize>,
    rng: &mut R,
) -> Chromosome {
    let mut out = c.clone();
    let mut changed = false;
    for g in out.genes.iter_mut() {
        if rng.random_bool(per_gene_prob) {
            *g = rng.random_range(range.clone());
            changed = true;
        }
    }
    if changed {
        out.fitness = None;
    }
    out
}

/// Winner among the population indices in `draws`: highest fitness, ties
/// to the earliest population index.
pub fn tournament_pick(pop: &[Chromosome], draws: &[usize]) -> Result<usize, GaError> {
    let mut best: Option<(usize, f64)> = None;
    for &i in draws {
        let f = pop[i].fitness.ok_or(GaError::UnevaluatedFitness)?;
        match best {
            Some((bi, bf)) if f < bf || (f == bf && i > bi) => {}
            _ => best = Some((i, f)),
        }
    }
    best.map(|(i, _)| i).ok_or(GaError::UnevaluatedFitness)
}

/// Draws `k` indices uniformly with replacement and returns the winner.
pub fn tournament_select<R: Rng>(pop: &[Chromosome], k: usize, rng: &mut R) -> Result<usize, GaError> {
    if pop.is_empty() {
        return Err(GaError::UnevaluatedFitness);
    }
    let draws: Vec<usize> = (0..k).map(|_| rng.random_range(0..pop.len())).collect();
    tournament_pick(pop, &draws)
}

pub fn random_chromosome<R: Rng>(range: &RangeInclusive<usize>, rng: &mut R) -> Chromosome {
    let lo = *range.start();
    let span = range.end() - lo + 1;
    Chromosome::new(sample(rng, span, GENES).into_iter().map(|i| lo + i).collect())
}

/// Cuts every sample down to the given 1-based bands, in gene order.
pub fn select_gene_bands<T: Scalar>(
    data: &[LabeledSample<T>],
    genes: &[usize],
) -> Result<Vec<LabeledSample<T>>, GaError> {
    let Some(first) = data.first() else { return Ok(Vec::new()) };
    let bands = first.cube.bands();
    let slots = genes
        .iter()
        .map(|&g| gene_to_slot(g, bands).ok_or(GaError::BandUnavailable { gene: g, bands }))
        .collect::<Result<Vec<_>, _>>()?;
    data.iter()
        .map(|s| {
            let cube = s.cube.select_bands(&slots).ok_or(GaError::BandUnavailable { gene: genes[0], bands })?;
            Ok(LabeledSample::new(cube, s.label))
        })
        .collect()
}

/// Validation accuracy of a CNN trained on the chromosome's bands.
///
/// Every chromosome of one run is scored on the same stratified split,
/// drawn from `cfg.seed`, so fitness differences are not confounded by
/// which leaves happened to land in validation. The weight initialisation
/// and batch order are seeded from `cfg.seed` and the gene list, so equal
/// genes always score equally. Failures score 0.
pub fn evaluate_fitness<T: Scalar>(genes: &[usize], data: &[LabeledSample<T>], cfg: &GaConfig) -> f64 {
    let labels: Vec<_> = data.iter().map(|s| s.label).collect();
    let (train_idx, val_idx) = stratified_split(&labels, cfg.fitness_train.val_fraction, cfg.seed);
    let seed = derive_seed(cfg.seed, &genes.iter().map(|&g| g as u64).collect::<Vec<_>>());
    let result = select_gene_bands(data, genes)
        .map_err(|e| e.to_string())
        .and_then(|subset| {
            train_on_split(&subset, &train_idx, &val_idx, &cfg.fitness_train.with_seed(seed)).map_err(|e| e.to_string())
        });
    match result {
        Ok(out) => out.history.best_val_accuracy,
        Err(e) => {
            log::warn!("fitness of {genes:?}: {e}");
            0.0
        }
    }
}

/// Thread-safe memo of fitness by ordered gene list.
#[derive(Debug, Default)]
pub struct FitnessCache {
    map: Mutex<HashMap<Vec<usize>, f64>>,
}

impl FitnessCache {
    pub fn get(&self, genes: &[usize]) -> Option<f64> {
        self.map.lock().expect("cache lock").get(genes).copied()
    }

    /// Keeps the first value stored for a gene list.
    pub fn insert(&self, genes: Vec<usize>, f: f64) -> f64 {
        *self.map.lock().expect("cache lock").entry(genes).or_insert(f)
    }

    pub fn len(&self) -> usize {
        self.map.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Runs the search with CNN validation accuracy as fitness.
pub fn run_ga<T: Scalar>(data: &[LabeledSample<T>], cfg: &GaConfig) -> Result<GaResult, GaError> {
    cfg.validate()?;
    for class in Label::ALL {
        let n = data.iter().filter(|s| s.label == class).count();
        if n < 2 {
            return Err(GaError::DegenerateDataset(format!("class {} has {n} samples", class.short())));
        }
    }
    let bands = data[0].cube.bands();
    if gene_to_slot(cfg.band_range.0, bands).is_none() || gene_to_slot(cfg.band_range.1, bands).is_none() {
        return Err(GaError::EmptySearchRange { lo: cfg.band_range.0, hi: cfg.band_range.1 });
    }
    run_ga_with(cfg, |genes| evaluate_fitness(genes, data, cfg))
}

/// The generational loop with an arbitrary fitness function, which must be
/// deterministic in the gene list.
pub fn run_ga_with<F>(cfg: &GaConfig, fitness: F) -> Result<GaResult, GaError>
where
    F: Fn(&[usize]) -> f64 + Sync,
{
    cfg.validate()?;
    let range = cfg.range();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let cache = FitnessCache::default();
    let mut evaluations = 0usize;
    let mut cache_hits = 0usize;

    let mut evaluate = |pop: Vec<Chromosome>| -> Vec<Chromosome> {
        let mut todo: Vec<Vec<usize>> = Vec::new();
        for c in &pop {
            if c.fitness.is_some() || !c.is_valid(&range) {
                continue;
            }
            if cache.get(&c.genes).is_some() || todo.contains(&c.genes) {
                cache_hits += 1;
            } else {
                todo.push(c.genes.clone());
            }
        }
        evaluations += todo.len();
        let scored: Vec<(Vec<usize>, f64)> = todo.into_par_iter().map(|g| {
            let f = fitness(&g);
            (g, f)
        }).collect();
        for (g, f) in scored {
            cache.insert(g, f);
        }
        pop.into_iter()
            .map(|c| {
                if c.fitness.is_some() {
                    c
                } else if !c.is_valid(&range) {
                    c.with_fitness(0.0)
                } else {
                    let f = cache.get(&c.genes).expect("just evaluated");
                    c.with_fitness(f)
                }
            })
            .collect()
    };

    let initial: Vec<Chromosome> = (0..cfg.population).map(|_| random_chromosome(&range, &mut rng)).collect();
    let mut pop = evaluate(initial);
    let mut hall = best_of(&pop).clone();
    let initial_record = record(0, &pop, &hall);
    let mut generations = Vec::with_capacity(cfg.generations);

    for gen in 1..=cfg.generations {
        let mut offspring: Vec<Chromosome> = Vec::with_capacity(cfg.population + 1);
        while offspring.len() < cfg.population {
            let a = select_valid(&pop, cfg, &range, &mut rng)?;
            let b = select_valid(&pop, cfg, &range, &mut rng)?;
            let (x, y) = if rng.random_bool(cfg.crossover_prob) {
                two_point_crossover(&a, &b, &mut rng)
            } else {
                (a, b)
            };
            offspring.push(mutate_uniform_int(&x, cfg.mutation_prob, &range, &mut rng));
            offspring.push(mutate_uniform_int(&y, cfg.mutation_prob, &range, &mut rng));
        }
        offspring.truncate(cfg.population);
        pop = evaluate(offspring);
        let gen_best = best_of(&pop);
        if gen_best.fitness > hall.fitness {
            hall = gen_best.clone();
        }
        generations.push(record(gen, &pop, &hall));
    }

    Ok(GaResult {
        best: hall,
        history: GaHistory { initial: initial_record, generations, evaluations, cache_hits },
    })
}

/// Tournament winner, redrawn while invalid; after `MAX_REDRAWS` failures a
/// fresh random chromosome (unevaluated) stands in.
fn select_valid(
    pop: &[Chromosome],
    cfg: &GaConfig,
    range: &RangeInclusive<usize>,
    rng: &mut ChaCha8Rng,
) -> Result<Chromosome, GaError> {
    for _ in 0..MAX_REDRAWS {
        let i = tournament_select(pop, cfg.tournament_size, rng)?;
        if pop[i].is_valid(range) {
            return Ok(pop[i].clone());
        }
    }
    Ok(random_chromosome(range, rng))
}

/// Highest fitness, earliest index on ties.
fn best_of(pop: &[Chromosome]) -> &Chromosome {
    let mut best = &pop[0];
    for c in &pop[1..] {
        if c.fitness > best.fitness {
            best = c;
        }
    }
    best
}

fn record(generation: usize, pop: &[Chromosome], hall: &Chromosome) -> GenerationRecord {
    let f: Vec<f64> = pop.iter().map(|c| c.fitness.unwrap_or(0.0)).collect();
    let best = best_of(pop);
    GenerationRecord {
        generation,
        best: best.fitness.unwrap_or(0.0),
        mean: f.iter().sum::<f64>() / f.len() as f64,
        min: f.iter().copied().fold(f64::INFINITY, f64::min),
        best_genes: best.genes.clone(),
        best_so_far: hall.fitness.unwrap_or(0.0),
        best_so_far_genes: hall.genes.clone(),
    }
}

/// Planted bands matched by some gene within `tolerance` indices.
pub fn recovered_bands(genes: &[usize], planted: &[usize], tolerance: usize) -> usize {
    planted.iter().filter(|&&p| genes.iter().any(|&g| g.abs_diff(p) <= tolerance)).count()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scored(genes: &[usize], f: f64) -> Chromosome {
        Chromosome::new(genes.to_vec()).with_fitness(f)
    }

    #[test]
    fn crossover_hand_trace() {
        let a = Chromosome::new(vec![1, 2, 3, 4, 5]);
        let b = Chromosome::new(vec![6, 7, 8, 9, 10]);
        let (x, y) = crossover_at(&a, &b, 1, 3);
        assert_eq!(x.genes(), &[1, 7, 8, 4, 5]);
        assert_eq!(y.genes(), &[6, 2, 3, 9, 10]);
    }

    #[test]
    fn crossover_of_twins_is_identity() {
        let a = scored(&[9, 8, 7, 6, 5], 0.4);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let (x, y) = two_point_crossover(&a, &a, &mut rng);
            assert_eq!((x.genes(), y.genes()), (a.genes(), a.genes()));
            assert_eq!(x.fitness(), None);
        }
    }

    #[test]
    fn zero_mutation_keeps_fitness() {
        let a = scored(&[9, 8, 7, 6, 5], 0.4);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(mutate_uniform_int(&a, 0.0, &(7..=107), &mut rng), a);
        let m = mutate_uniform_int(&a, 1.0, &(7..=107), &mut rng);
        assert_eq!(m.fitness(), None);
        assert!(m.genes().iter().all(|g| (7..=107).contains(g)));
    }

    #[test]
    fn tournament_argmax_and_ties() {
        let pop = vec![scored(&[1, 2, 3, 4, 5], 0.1), scored(&[1, 2, 3, 4, 6], 0.9), scored(&[1, 2, 3, 4, 7], 0.5)];
        assert_eq!(tournament_pick(&pop, &[0, 1, 2]).unwrap(), 1);
        let tied = vec![scored(&[1, 2, 3, 4, 5], 0.5), scored(&[1, 2, 3, 4, 6], 0.5)];
        assert_eq!(tournament_pick(&tied, &[1, 0, 1]).unwrap(), 0);
        let unscored = vec![Chromosome::new(vec![1, 2, 3, 4, 5])];
        assert_eq!(tournament_pick(&unscored, &[0]), Err(GaError::UnevaluatedFitness));
    }

    #[test]
    fn validity_rules() {
        let r = 7..=107;
        assert!(Chromosome::new(vec![7, 8, 9, 10, 107]).is_valid(&r));
        assert!(!Chromosome::new(vec![7, 8, 9, 10, 108]).is_valid(&r));
        assert!(!Chromosome::new(vec![7, 8, 9, 9, 10]).is_valid(&r));
        assert!(!Chromosome::new(vec![7, 8, 9, 10]).is_valid(&r));
    }

    #[test]
    fn config_validation() {
        assert!(GaConfig::default().validate().is_ok());
        let bad = GaConfig { band_range: (10, 13), ..GaConfig::default() };
        assert_eq!(bad.validate(), Err(GaError::EmptySearchRange { lo: 10, hi: 13 }));
        let bad = GaConfig { tournament_size: 13, ..GaConfig::default() };
        assert!(bad.validate().is_err());
        let bad = GaConfig { crossover_prob: 1.5, ..GaConfig::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn surrogate_run_has_eight_generations_and_monotone_hall() {
        let planted = [21, 32, 60, 79, 97];
        let f = |g: &[usize]| recovered_bands(g, &planted, 1) as f64 / 5.0;
        let out = run_ga_with(&GaConfig { seed: 3, ..GaConfig::default() }, f).unwrap();
        assert_eq!(out.history.generations.len(), 8);
        let mut prev = out.history.initial.best_so_far;
        for r in &out.history.generations {
            assert!(r.best_so_far >= prev);
            assert!(r.min <= r.mean && r.mean <= r.best);
            prev = r.best_so_far;
        }
        assert_eq!(out.best.fitness(), Some(prev));
        assert_eq!(run_ga_with(&GaConfig { seed: 3, ..GaConfig::default() }, f).unwrap(), out);
    }

    #[test]
    fn selection_pressure_follows_rank() {
        let pop: Vec<Chromosome> = (1..=9).map(|i| scored(&[i, 20, 30, 40, 50], i as f64 / 10.0)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut counts = [0usize; 9];
        for _ in 0..10_000 {
            counts[tournament_select(&pop, 3, &mut rng).unwrap()] += 1;
        }
        assert!(counts.windows(2).all(|w| w[0] < w[1]), "{counts:?}");
    }

    #[test]
    fn select_bands_maps_both_spaces() {
        use crate::cube::{HyperCube, Stage};
        let binned: Vec<f32> = (0..116).map(|b| b as f32).collect();
        let s = LabeledSample::new(HyperCube::new(1, 1, 116, binned, None, Stage::Binned).unwrap(), Label::Healthy);
        let out = select_gene_bands(&[s], &[21, 7, 107]).unwrap();
        assert_eq!(out[0].cube.data(), &[20.0, 6.0, 106.0]);
        let trimmed: Vec<f32> = (0..101).map(|b| b as f32).collect();
        let s = LabeledSample::new(HyperCube::new(1, 1, 101, trimmed, None, Stage::Trimmed).unwrap(), Label::Healthy);
        let out = select_gene_bands(&[s.clone()], &[7, 107]).unwrap();
        assert_eq!(out[0].cube.data(), &[0.0, 100.0]);
        assert_eq!(select_gene_bands(&[s], &[6]), Err(GaError::BandUnavailable { gene: 6, bands: 101 }));
    }
}
