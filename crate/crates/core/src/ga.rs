//! Genetic search over head architectures.
//!
//! A chromosome holds four exponents; the decoded head uses `2^gene` for the
//! conv kernel count, kernel length, pool size and dense width. Fitness is
//! the test accuracy of the extended network after a short training run.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dsp::stratified_split;
use crate::error::{Error, Result};
use crate::nn::{evaluate, init_model, train, AdamConfig, ModelState, Tensor, TrainConfig};
use crate::synthgen::BreathRecord;
use crate::transfer::{records_to_inputs, HeadArch};
use crate::NUM_CLASSES;

/// Inclusive exponent range of each gene.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GeneSpace {
    pub ranges: [(u8, u8); 4],
}

impl Default for GeneSpace {
    fn default() -> Self {
        GeneSpace {
            ranges: [(3, 8), (2, 6), (1, 3), (4, 9)],
        }
    }
}

impl GeneSpace {
    pub fn contains(&self, c: &Chromosome) -> bool {
        c.0.iter()
            .zip(&self.ranges)
            .all(|(g, (lo, hi))| (lo..=hi).contains(&g))
    }

    /// Number of distinct chromosomes.
    pub fn size(&self) -> usize {
        self.ranges
            .iter()
            .map(|(lo, hi)| (hi - lo) as usize + 1)
            .product()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Chromosome(pub [u8; 4]);

impl fmt::Display for Chromosome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [a, b, c, d] = self.0;
        write!(f, "{a},{b},{c},{d}")
    }
}

impl FromStr for Chromosome {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let genes: Vec<u8> = s
            .split(',')
            .map(|g| g.trim().parse::<u8>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::invalid(format!("chromosome {s:?}: {e}")))?;
        let genes: [u8; 4] = genes.try_into().map_err(|g: Vec<u8>| {
            Error::invalid(format!("chromosome needs 4 genes, got {}", g.len()))
        })?;
        Ok(Chromosome(genes))
    }
}

pub fn random_chromosome<R: Rng + ?Sized>(space: &GeneSpace, rng: &mut R) -> Chromosome {
    Chromosome(std::array::from_fn(|i| {
        let (lo, hi) = space.ranges[i];
        rng.random_range(lo..=hi)
    }))
}

/// Powers of two for each gene.
pub fn decode(c: &Chromosome, space: &GeneSpace) -> Result<HeadArch> {
    if !space.contains(c) {
        return Err(Error::invalid(format!(
            "chromosome [{c}] outside gene ranges {:?}",
            space.ranges
        )));
    }
    let [g1, g2, g3, g4] = c.0.map(|g| 1usize << g);
    Ok(HeadArch {
        kernels: g1,
        kernel_len: g2,
        pool: g3,
        dense_units: g4,
    })
}

/// A chromosome with its memoized fitness.
#[derive(Debug, Clone, PartialEq)]
pub struct Individual {
    pub chromosome: Chromosome,
    fitness: Option<f64>,
}

impl Individual {
    pub fn new(chromosome: Chromosome) -> Self {
        Individual {
            chromosome,
            fitness: None,
        }
    }

    pub fn with_fitness(chromosome: Chromosome, fitness: f64) -> Self {
        Individual {
            chromosome,
            fitness: Some(fitness),
        }
    }

    pub fn fitness(&self) -> Option<f64> {
        self.fitness
    }

    fn fitness_or_err(&self) -> Result<f64> {
        self.fitness.ok_or_else(|| {
            Error::invalid(format!("individual [{}] is not evaluated", self.chromosome))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParentStrategy {
    TopK,
    Roulette,
}

impl FromStr for ParentStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "topk" => Ok(ParentStrategy::TopK),
            "roulette" => Ok(ParentStrategy::Roulette),
            other => Err(Error::invalid(format!("unknown parent strategy {other:?}"))),
        }
    }
}

impl fmt::Display for ParentStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ParentStrategy::TopK => "topk",
            ParentStrategy::Roulette => "roulette",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaConfig {
    pub population_size: usize,
    pub parent_count: usize,
    pub crossover_count: usize,
    pub crossover_prob: f64,
    pub mutation_prob: f64,
    pub elite_count: usize,
    pub generations: usize,
    pub parent_strategy: ParentStrategy,
    pub fitness_epochs: usize,
    pub fitness_batch_size: usize,
    pub subset_size: usize,
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for GaConfig {
    fn default() -> Self {
        GaConfig {
            population_size: 8,
            parent_count: 6,
            crossover_count: 3,
            crossover_prob: 0.8,
            mutation_prob: 0.4,
            elite_count: 2,
            generations: 200,
            parent_strategy: ParentStrategy::Roulette,
            fitness_epochs: 1,
            fitness_batch_size: 50,
            subset_size: 1000,
            train_fraction: 0.8,
            seed: 0,
        }
    }
}

impl GaConfig {
    pub fn validate(&self, space: &GeneSpace) -> Result<()> {
        let fail = |m: String| Err(Error::invalid(m));
        if self.elite_count >= self.population_size {
            return fail(format!(
                "elite count {} must be below population size {}",
                self.elite_count, self.population_size
            ));
        }
        if self.parent_count % 2 != 0 || self.parent_count < 2 * self.crossover_count {
            return fail(format!(
                "parent count {} must be even and cover {} crossovers",
                self.parent_count, self.crossover_count
            ));
        }
        if self.parent_count > self.population_size {
            return fail("parent count exceeds population size".into());
        }
        for (name, p) in [
            ("crossover", self.crossover_prob),
            ("mutation", self.mutation_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return fail(format!("{name} probability {p} outside [0, 1]"));
            }
        }
        if space.size() < self.population_size {
            return fail("gene space is smaller than the population".into());
        }
        if self.fitness_batch_size == 0 || self.subset_size == 0 {
            return fail("fitness batch size and subset size must be positive".into());
        }
        Ok(())
    }
}

/// Statistics of one generation's population.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationLog {
    pub generation: usize,
    pub max_fitness: f64,
    pub mean_fitness: f64,
    pub best: Chromosome,
    pub fitness: Vec<f64>,
}

/// Draws `k` distinct indices with probability proportional to `weights`,
/// falling back to uniform draws once the remaining weight is zero.
pub fn roulette_without_replacement<R: Rng + ?Sized>(
    weights: &[f64],
    k: usize,
    rng: &mut R,
) -> Vec<usize> {
    let mut remaining: Vec<usize> = (0..weights.len()).collect();
    let mut out = Vec::with_capacity(k);
    for _ in 0..k.min(weights.len()) {
        let total: f64 = remaining.iter().map(|&i| weights[i].max(0.0)).sum();
        let pos = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            let mut pick = remaining.len() - 1;
            for (j, &i) in remaining.iter().enumerate() {
                let w = weights[i].max(0.0);
                if r < w {
                    pick = j;
                    break;
                }
                r -= w;
            }
            // Floating-point slack can leave r just above the last weight.
            while weights[remaining[pick]] <= 0.0 && pick > 0 {
                pick -= 1;
            }
            pick
        } else {
            rng.random_range(0..remaining.len())
        };
        out.push(remaining.remove(pos));
    }
    out
}

/// Indices sorted by descending fitness, ties by lower index.
fn ranked(fitness: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..fitness.len()).collect();
    idx.sort_by(|&a, &b| fitness[b].total_cmp(&fitness[a]).then(a.cmp(&b)));
    idx
}

/// Picks `count` parents (indices into `population`), in selection order.
pub fn select_parents<R: Rng + ?Sized>(
    population: &[Individual],
    strategy: ParentStrategy,
    count: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if population.len() < count {
        return Err(Error::invalid(format!(
            "population of {} cannot supply {count} parents",
            population.len()
        )));
    }
    let fitness: Vec<f64> = population
        .iter()
        .map(Individual::fitness_or_err)
        .collect::<Result<_>>()?;
    Ok(match strategy {
        ParentStrategy::TopK => ranked(&fitness).into_iter().take(count).collect(),
        ParentStrategy::Roulette => roulette_without_replacement(&fitness, count, rng),
    })
}

/// Single-point splice: genes at positions `cut..` are swapped.
pub fn splice(a: &Chromosome, b: &Chromosome, cut: usize) -> (Chromosome, Chromosome) {
    let mut c1 = *a;
    let mut c2 = *b;
    for i in cut..4 {
        c1.0[i] = b.0[i];
        c2.0[i] = a.0[i];
    }
    (c1, c2)
}

/// With probability `prob`, splices at a cut drawn uniformly from {1, 2, 3};
/// otherwise returns copies of the parents.
pub fn crossover<R: Rng + ?Sized>(
    a: &Chromosome,
    b: &Chromosome,
    rng: &mut R,
    prob: f64,
) -> (Chromosome, Chromosome) {
    if rng.random_bool(prob) {
        splice(a, b, rng.random_range(1..=3))
    } else {
        (*a, *b)
    }
}

/// Resamples one uniformly chosen gene to a different value in its range.
/// Genes with a single legal value are never chosen.
pub fn mutate<R: Rng + ?Sized>(c: &Chromosome, space: &GeneSpace, rng: &mut R) -> Chromosome {
    let mutable: Vec<usize> = (0..4)
        .filter(|&i| space.ranges[i].1 > space.ranges[i].0)
        .collect();
    let mut out = *c;
    if mutable.is_empty() {
        return out;
    }
    let i = mutable[rng.random_range(0..mutable.len())];
    let (lo, hi) = space.ranges[i];
    let current = c.0[i];
    // Draw from the range minus one slot, then skip over the current value.
    let mut v = rng.random_range(lo..hi);
    if (lo..=hi).contains(&current) && v >= current {
        v += 1;
    }
    out.0[i] = v;
    out
}

/// Next population: the `elite_count` fittest of `pool` survive, the rest
/// are drawn by roulette without replacement from the remaining pool, and
/// repeated chromosomes are replaced by fresh random (unevaluated) ones.
pub fn survivors<R: Rng + ?Sized>(
    pool: &[Individual],
    space: &GeneSpace,
    population_size: usize,
    elite_count: usize,
    rng: &mut R,
) -> Result<Vec<Individual>> {
    if pool.len() < population_size {
        return Err(Error::invalid(format!(
            "pool of {} is smaller than population size {population_size}",
            pool.len()
        )));
    }
    if space.size() < population_size {
        return Err(Error::invalid("gene space is smaller than the population"));
    }
    let fitness: Vec<f64> = pool
        .iter()
        .map(Individual::fitness_or_err)
        .collect::<Result<_>>()?;
    let order = ranked(&fitness);
    let elites = &order[..elite_count];
    let rest: Vec<usize> = (0..pool.len()).filter(|i| !elites.contains(i)).collect();
    let rest_fitness: Vec<f64> = rest.iter().map(|&i| fitness[i]).collect();
    let picks = roulette_without_replacement(&rest_fitness, population_size - elite_count, rng);

    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(population_size);
    for idx in elites
        .iter()
        .copied()
        .chain(picks.into_iter().map(|j| rest[j]))
    {
        let ind = &pool[idx];
        if seen.insert(ind.chromosome) {
            out.push(ind.clone());
        } else {
            let fresh = loop {
                let c = random_chromosome(space, rng);
                if !seen.contains(&c) {
                    break c;
                }
            };
            seen.insert(fresh);
            out.push(Individual::new(fresh));
        }
    }
    Ok(out)
}

/// Source of fitness values.
pub trait FitnessEvaluator {
    fn evaluate(&mut self, chromosome: &Chromosome) -> Result<f64>;
}

impl<F> FitnessEvaluator for F
where
    F: FnMut(&Chromosome) -> Result<f64>,
{
    fn evaluate(&mut self, chromosome: &Chromosome) -> Result<f64> {
        self(chromosome)
    }
}

#[derive(Debug, Clone)]
pub struct GaOutcome {
    pub logs: Vec<GenerationLog>,
    pub best: Individual,
    /// Distinct chromosomes evaluated.
    pub evaluations: usize,
}

struct Memo<'a, E> {
    inner: &'a mut E,
    cache: HashMap<Chromosome, f64>,
    best: Option<Individual>,
}

impl<E: FitnessEvaluator> Memo<'_, E> {
    fn fill(&mut self, individuals: &mut [Individual]) -> Result<()> {
        for ind in individuals.iter_mut().filter(|i| i.fitness.is_none()) {
            let f = match self.cache.get(&ind.chromosome) {
                Some(&f) => f,
                None => {
                    let f = self.inner.evaluate(&ind.chromosome)?;
                    if !(0.0..=1.0).contains(&f) {
                        return Err(Error::Numeric(format!(
                            "fitness {f} of [{}] outside [0, 1]",
                            ind.chromosome
                        )));
                    }
                    self.cache.insert(ind.chromosome, f);
                    f
                }
            };
            ind.fitness = Some(f);
            if self.best.as_ref().is_none_or(|b| f > b.fitness.unwrap()) {
                self.best = Some(ind.clone());
            }
        }
        Ok(())
    }
}

fn log_generation(generation: usize, population: &[Individual]) -> GenerationLog {
    let fitness: Vec<f64> = population.iter().map(|i| i.fitness.unwrap()).collect();
    let best_idx = ranked(&fitness)[0];
    GenerationLog {
        generation,
        max_fitness: fitness[best_idx],
        mean_fitness: fitness.iter().sum::<f64>() / fitness.len() as f64,
        best: population[best_idx].chromosome,
        fitness,
    }
}

/// The generational loop with a pluggable fitness source. Generation 0 is
/// the random initial population; every later generation runs selection,
/// crossover, at most one mutation, evaluation and survivor selection.
pub fn run_ga_with<E: FitnessEvaluator>(
    cfg: &GaConfig,
    space: &GeneSpace,
    evaluator: &mut E,
) -> Result<GaOutcome> {
    cfg.validate(space)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut memo = Memo {
        inner: evaluator,
        cache: HashMap::new(),
        best: None,
    };

    let mut seen = HashSet::new();
    let mut population = Vec::with_capacity(cfg.population_size);
    while population.len() < cfg.population_size {
        let c = random_chromosome(space, &mut rng);
        if seen.insert(c) {
            population.push(Individual::new(c));
        }
    }
    memo.fill(&mut population)?;
    let mut logs = vec![log_generation(0, &population)];

    for generation in 1..=cfg.generations {
        let parents = select_parents(&population, cfg.parent_strategy, cfg.parent_count, &mut rng)?;
        let mut offspring = Vec::with_capacity(2 * cfg.crossover_count);
        for pair in parents.chunks_exact(2).take(cfg.crossover_count) {
            let (a, b) = (
                &population[pair[0]].chromosome,
                &population[pair[1]].chromosome,
            );
            let (c1, c2) = crossover(a, b, &mut rng, cfg.crossover_prob);
            offspring.push(Individual::new(c1));
            offspring.push(Individual::new(c2));
        }
        if !offspring.is_empty() && rng.random_bool(cfg.mutation_prob) {
            let i = rng.random_range(0..offspring.len());
            offspring[i] = Individual::new(mutate(&offspring[i].chromosome, space, &mut rng));
        }
        memo.fill(&mut offspring)?;

        let mut pool = population;
        pool.extend(offspring);
        population = survivors(&pool, space, cfg.population_size, cfg.elite_count, &mut rng)?;
        memo.fill(&mut population)?;
        logs.push(log_generation(generation, &population));
    }

    Ok(GaOutcome {
        logs,
        best: memo.best.expect("initial population evaluated"),
        evaluations: memo.cache.len(),
    })
}

/// Fitness of a head on a fixed split: the frozen prefix's features are
/// computed once, then each head is freshly initialized from `head_seed`,
/// trained briefly and scored by test accuracy. Training a head-only model
/// on cached features is exactly equivalent to training the extended model
/// with its prefix frozen.
pub struct TransferFitness {
    space: GeneSpace,
    feature_shape: crate::nn::Shape,
    train_x: Vec<Tensor>,
    train_y: Vec<usize>,
    test_x: Vec<Tensor>,
    test_y: Vec<usize>,
    train_cfg: TrainConfig,
    head_seed: u64,
    classes: usize,
}

impl TransferFitness {
    pub fn new(
        trimmed: &ModelState,
        train_records: &[BreathRecord],
        test_records: &[BreathRecord],
        space: GeneSpace,
        train_cfg: TrainConfig,
        head_seed: u64,
    ) -> Result<Self> {
        if test_records.is_empty() || train_records.is_empty() {
            return Err(Error::EmptyInput("fitness train/test split"));
        }
        let features = |records: &[BreathRecord]| -> Result<(Vec<Tensor>, Vec<usize>)> {
            let (xs, ys) = records_to_inputs(records);
            let feats = xs
                .iter()
                .map(|x| trimmed.forward(x))
                .collect::<Result<Vec<_>>>()?;
            Ok((feats, ys))
        };
        let (train_x, train_y) = features(train_records)?;
        let (test_x, test_y) = features(test_records)?;
        Ok(TransferFitness {
            space,
            feature_shape: trimmed.output_shape(),
            train_x,
            train_y,
            test_x,
            test_y,
            train_cfg,
            head_seed,
            classes: NUM_CLASSES,
        })
    }
}

impl FitnessEvaluator for TransferFitness {
    fn evaluate(&mut self, chromosome: &Chromosome) -> Result<f64> {
        let head = decode(chromosome, &self.space)?;
        let mut model = init_model(
            &head.specs(self.classes),
            self.feature_shape,
            self.head_seed,
        )?;
        train(&mut model, &self.train_x, &self.train_y, &self.train_cfg)?;
        Ok(evaluate(&model, &self.test_x, &self.test_y)?.accuracy)
    }
}

/// Stratified GA subset, split once into fixed train/test partitions.
pub fn ga_subset(
    dataset: &[BreathRecord],
    cfg: &GaConfig,
) -> Result<(Vec<BreathRecord>, Vec<BreathRecord>)> {
    if dataset.is_empty() {
        return Err(Error::EmptyInput("GA dataset"));
    }
    let subset = if cfg.subset_size < dataset.len() {
        let frac = cfg.subset_size as f64 / dataset.len() as f64;
        stratified_split(dataset, frac, cfg.seed ^ 0x5EB5E7)?.0
    } else {
        dataset.to_vec()
    };
    stratified_split(&subset, cfg.train_fraction, cfg.seed ^ 0x5B117)
}

/// Runs the search with transfer-learning fitness on a preprocessed dataset.
pub fn run_ga(
    cfg: &GaConfig,
    space: &GeneSpace,
    trimmed: &ModelState,
    dataset: &[BreathRecord],
) -> Result<GaOutcome> {
    cfg.validate(space)?;
    let (train, test) = ga_subset(dataset, cfg)?;
    let train_cfg = TrainConfig {
        epochs: cfg.fitness_epochs,
        batch_size: cfg.fitness_batch_size,
        adam: AdamConfig::default(),
        shuffle_seed: cfg.seed ^ 0xF17,
    };
    let mut fitness =
        TransferFitness::new(trimmed, &train, &test, *space, train_cfg, cfg.seed ^ 0x4EAD)?;
    run_ga_with(cfg, space, &mut fitness)
}

/// One row per generation: generation, max, mean, best genes, then the
/// per-individual fitness values.
pub fn ga_log_csv(logs: &[GenerationLog]) -> String {
    let width = logs.first().map_or(0, |l| l.fitness.len());
    let mut out = String::from("generation,max_fitness,mean_fitness,g1,g2,g3,g4");
    for i in 1..=width {
        out.push_str(&format!(",f{i}"));
    }
    out.push('\n');
    for l in logs {
        out.push_str(&format!(
            "{},{},{},{}",
            l.generation, l.max_fitness, l.mean_fitness, l.best
        ));
        for f in &l.fitness {
            out.push_str(&format!(",{f}"));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn pop(fitness: &[f64]) -> Vec<Individual> {
        fitness
            .iter()
            .enumerate()
            .map(|(i, &f)| {
                Individual::with_fitness(
                    Chromosome([3 + (i % 6) as u8, 2, 1, 4 + (i / 6) as u8]),
                    f,
                )
            })
            .collect()
    }

    #[test]
    fn decode_examples() {
        let s = GeneSpace::default();
        assert_eq!(decode(&Chromosome([6, 2, 1, 4]), &s).unwrap().kernels, 64);
        assert_eq!(
            decode(&Chromosome([7, 5, 1, 8]), &s).unwrap(),
            HeadArch {
                kernels: 128,
                kernel_len: 32,
                pool: 2,
                dense_units: 256
            }
        );
        assert_eq!(
            decode(&Chromosome([3, 2, 1, 4]), &s).unwrap(),
            HeadArch {
                kernels: 8,
                kernel_len: 4,
                pool: 2,
                dense_units: 16
            }
        );
        assert!(decode(&Chromosome([9, 2, 1, 4]), &s).is_err());
        assert!(decode(&Chromosome([3, 2, 0, 4]), &s).is_err());
    }

    #[test]
    fn chromosome_text_round_trip() {
        let c: Chromosome = "7, 5,1,8".parse().unwrap();
        assert_eq!(c, Chromosome([7, 5, 1, 8]));
        assert_eq!(c.to_string(), "7,5,1,8");
        assert!("7,5,1".parse::<Chromosome>().is_err());
        assert!("7,5,x,1".parse::<Chromosome>().is_err());
    }

    #[test]
    fn topk_parents() {
        let p = pop(&[0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8]);
        let mut sel = select_parents(&p, ParentStrategy::TopK, 6, &mut rng(0)).unwrap();
        sel.sort();
        assert_eq!(sel, vec![2, 3, 4, 5, 6, 7]);
        let ties = pop(&[0.5; 8]);
        assert_eq!(
            select_parents(&ties, ParentStrategy::TopK, 6, &mut rng(0)).unwrap(),
            vec![0, 1, 2, 3, 4, 5]
        );
        assert!(select_parents(&p[..5], ParentStrategy::TopK, 6, &mut rng(0)).is_err());
    }

    #[test]
    fn roulette_zero_total_is_uniform_and_distinct() {
        let p = pop(&[0.0; 8]);
        let sel = select_parents(&p, ParentStrategy::Roulette, 6, &mut rng(3)).unwrap();
        let set: HashSet<_> = sel.iter().collect();
        assert_eq!(set.len(), 6);
    }

    #[test]
    fn roulette_skips_zero_weights_while_positive_remain() {
        let mut r = rng(4);
        for _ in 0..1000 {
            let sel = roulette_without_replacement(&[0.0, 1.0, 0.0, 2.0], 2, &mut r);
            let mut s = sel.clone();
            s.sort();
            assert_eq!(s, vec![1, 3]);
        }
    }

    #[test]
    fn splice_and_crossover() {
        let a = Chromosome([3, 4, 2, 8]);
        let b = Chromosome([8, 2, 3, 5]);
        assert_eq!(
            splice(&a, &b, 2),
            (Chromosome([3, 4, 3, 5]), Chromosome([8, 2, 2, 8]))
        );
        let mut r = rng(5);
        for _ in 0..100 {
            assert_eq!(crossover(&a, &a, &mut r, 0.8), (a, a));
            assert_eq!(crossover(&a, &b, &mut r, 0.0), (a, b));
        }
    }

    #[test]
    fn mutation_changes_exactly_one_gene() {
        let s = GeneSpace::default();
        let mut r = rng(6);
        for _ in 0..10_000 {
            let c = random_chromosome(&s, &mut r);
            let m = mutate(&c, &s, &mut r);
            assert!(s.contains(&m));
            assert_eq!(c.0.iter().zip(&m.0).filter(|(a, b)| a != b).count(), 1);
        }
    }

    #[test]
    fn two_value_gene_flips() {
        let s = GeneSpace {
            ranges: [(3, 3), (2, 2), (1, 2), (4, 4)],
        };
        let mut r = rng(7);
        for _ in 0..100 {
            assert_eq!(
                mutate(&Chromosome([3, 2, 1, 4]), &s, &mut r),
                Chromosome([3, 2, 2, 4])
            );
            assert_eq!(
                mutate(&Chromosome([3, 2, 2, 4]), &s, &mut r),
                Chromosome([3, 2, 1, 4])
            );
        }
    }

    #[test]
    fn survivors_all_identical_pool() {
        let s = GeneSpace::default();
        let c = Chromosome([5, 3, 2, 6]);
        let pool: Vec<_> = (0..8)
            .map(|i| Individual::with_fitness(c, 0.1 * i as f64))
            .collect();
        let out = survivors(&pool, &s, 8, 2, &mut rng(8)).unwrap();
        assert_eq!(out.len(), 8);
        assert_eq!(out[0], pool[7]);
        assert_eq!(out.iter().filter(|i| i.chromosome == c).count(), 1);
        assert_eq!(out.iter().filter(|i| i.fitness().is_none()).count(), 7);
        let distinct: HashSet<_> = out.iter().map(|i| i.chromosome).collect();
        assert_eq!(distinct.len(), 8);
    }

    #[test]
    fn survivors_keep_elites() {
        let s = GeneSpace::default();
        let mut r = rng(9);
        for _ in 0..200 {
            let pool: Vec<_> = (0..14)
                .map(|_| Individual::with_fitness(random_chromosome(&s, &mut r), r.random()))
                .collect();
            let out = survivors(&pool, &s, 8, 2, &mut r).unwrap();
            let fit: Vec<f64> = pool.iter().map(|i| i.fitness().unwrap()).collect();
            for &e in &ranked(&fit)[..2] {
                assert!(out.iter().any(|i| i.chromosome == pool[e].chromosome));
            }
            let distinct: HashSet<_> = out.iter().map(|i| i.chromosome).collect();
            assert_eq!(distinct.len(), 8);
        }
    }

    #[test]
    fn zero_generations_logs_initial_population() {
        let cfg = GaConfig {
            generations: 0,
            ..GaConfig::default()
        };
        let mut f = |c: &Chromosome| Ok(c.0[0] as f64 / 10.0);
        let out = run_ga_with(&cfg, &GeneSpace::default(), &mut f).unwrap();
        assert_eq!(out.logs.len(), 1);
        assert_eq!(out.best.fitness(), Some(out.logs[0].max_fitness));
        assert_eq!(out.evaluations, 8);
    }

    #[test]
    fn config_validation() {
        let s = GeneSpace::default();
        assert!(GaConfig::default().validate(&s).is_ok());
        for bad in [
            GaConfig {
                elite_count: 8,
                ..GaConfig::default()
            },
            GaConfig {
                parent_count: 5,
                ..GaConfig::default()
            },
            GaConfig {
                crossover_prob: 1.5,
                ..GaConfig::default()
            },
            GaConfig {
                mutation_prob: -0.1,
                ..GaConfig::default()
            },
        ] {
            assert!(bad.validate(&s).is_err());
        }
    }

    #[test]
    fn log_csv_layout() {
        let logs = vec![GenerationLog {
            generation: 0,
            max_fitness: 0.5,
            mean_fitness: 0.25,
            best: Chromosome([7, 5, 1, 8]),
            fitness: vec![0.5, 0.0],
        }];
        assert_eq!(
            ga_log_csv(&logs),
            "generation,max_fitness,mean_fitness,g1,g2,g3,g4,f1,f2\n0,0.5,0.25,7,5,1,8,0.5,0\n"
        );
    }
}
