use std::collections::{HashMap, HashSet};

use breath_core::ga::{
    random_chromosome, roulette_without_replacement, run_ga_with, select_parents, survivors,
    Chromosome, GaConfig, GeneSpace, Individual, ParentStrategy,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn chi_square_p(counts: &[usize], expected: &[f64]) -> f64 {
    let stat: f64 = counts
        .iter()
        .zip(expected)
        .map(|(&o, &e)| (o as f64 - e).powi(2) / e)
        .sum();
    let dist = ChiSquared::new((counts.len() - 1) as f64).unwrap();
    1.0 - dist.cdf(stat)
}

#[test]
fn roulette_equal_fitness_is_uniform() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let weights = [0.3; 8];
    let mut counts = [0usize; 8];
    for _ in 0..100_000 {
        counts[roulette_without_replacement(&weights, 1, &mut rng)[0]] += 1;
    }
    let p = chi_square_p(&counts, &[12_500.0; 8]);
    assert!(p > 0.01, "p = {p}, counts {counts:?}");
}

#[test]
fn roulette_is_proportional_to_fitness() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let weights = [0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4];
    let total: f64 = weights.iter().sum();
    let mut counts = [0usize; 8];
    for _ in 0..100_000 {
        counts[roulette_without_replacement(&weights, 1, &mut rng)[0]] += 1;
    }
    let expected: Vec<f64> = weights.iter().map(|w| 100_000.0 * w / total).collect();
    let p = chi_square_p(&counts, &expected);
    assert!(p > 0.01, "p = {p}, counts {counts:?}");
}

#[test]
fn roulette_three_to_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let hits = (0..100_000)
        .filter(|_| roulette_without_replacement(&[3.0, 1.0], 1, &mut rng)[0] == 0)
        .count();
    let share = hits as f64 / 100_000.0;
    assert!((share - 0.75).abs() < 0.01, "{share}");
}

#[test]
fn roulette_parent_selection_uses_population_fitness() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let pop: Vec<Individual> = [0.2, 0.2, 0.2, 0.2, 0.2, 0.2, 0.2, 0.2]
        .iter()
        .enumerate()
        .map(|(i, &f)| Individual::with_fitness(Chromosome([3 + i as u8 % 6, 2, 1, 4]), f))
        .collect();
    let mut first = [0usize; 8];
    for _ in 0..100_000 {
        let sel = select_parents(&pop, ParentStrategy::Roulette, 6, &mut rng).unwrap();
        assert_eq!(sel.iter().collect::<HashSet<_>>().len(), 6);
        first[sel[0]] += 1;
    }
    assert!(chi_square_p(&first, &[12_500.0; 8]) > 0.01, "{first:?}");
}

#[test]
fn first_gene_is_uniform() {
    let space = GeneSpace::default();
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    let mut counts = HashMap::new();
    for _ in 0..10_000 {
        let c = random_chromosome(&space, &mut rng);
        assert!(space.contains(&c));
        *counts.entry(c.0[0]).or_insert(0usize) += 1;
    }
    for g in 3..=8u8 {
        let share = counts[&g] as f64 / 10_000.0;
        assert!((share - 1.0 / 6.0).abs() < 0.02, "g1 = {g}: {share}");
    }
    let mut again = ChaCha8Rng::seed_from_u64(24);
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    assert_eq!(
        random_chromosome(&space, &mut again),
        random_chromosome(&space, &mut rng)
    );
}

#[test]
fn survivors_keep_elites_and_stay_distinct() {
    let space = GeneSpace::default();
    let mut rng = ChaCha8Rng::seed_from_u64(25);
    for _ in 0..500 {
        // Pools of 14 drawn from a narrow space so duplicates are common.
        let pool: Vec<Individual> = (0..14)
            .map(|_| {
                let c = Chromosome([rng.random_range(3..=4), 2, 1, rng.random_range(4..=5)]);
                Individual::with_fitness(c, rng.random_range(0.0..1.0))
            })
            .collect();
        let out = survivors(&pool, &space, 8, 2, &mut rng).unwrap();
        assert_eq!(out.len(), 8);
        let distinct: HashSet<_> = out.iter().map(|i| i.chromosome).collect();
        assert_eq!(distinct.len(), 8);
        assert!(out.iter().all(|i| space.contains(&i.chromosome)));
        let mut ranked: Vec<&Individual> = pool.iter().collect();
        ranked.sort_by(|a, b| b.fitness().unwrap().total_cmp(&a.fitness().unwrap()));
        assert_eq!(out[0].chromosome, ranked[0].chromosome);
        assert_eq!(out[0].fitness(), ranked[0].fitness());
        if ranked[1].chromosome != ranked[0].chromosome {
            assert!(out.iter().any(|i| i.chromosome == ranked[1].chromosome));
        }
    }
}

fn ga_config(generations: usize, strategy: ParentStrategy, seed: u64) -> GaConfig {
    GaConfig {
        generations,
        parent_strategy: strategy,
        seed,
        ..GaConfig::default()
    }
}

/// A noisy landscape: repeated evaluations of one chromosome would differ,
/// so any re-evaluation would show up in the counts.
fn noisy(
    seed: u64,
) -> (
    impl FnMut(&Chromosome) -> breath_core::Result<f64>,
    std::rc::Rc<std::cell::RefCell<HashMap<Chromosome, usize>>>,
) {
    let calls = std::rc::Rc::new(std::cell::RefCell::new(HashMap::new()));
    let log = calls.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f = move |c: &Chromosome| {
        *log.borrow_mut().entry(*c).or_insert(0) += 1;
        let base = c.0.iter().map(|&g| g as f64).sum::<f64>() / 26.0;
        Ok((0.7 * base + 0.3 * rng.random::<f64>()).clamp(0.0, 1.0))
    };
    (f, calls)
}

#[test]
fn fitness_is_evaluated_once_per_chromosome() {
    for strategy in [ParentStrategy::Roulette, ParentStrategy::TopK] {
        let (mut f, calls) = noisy(1);
        let out = run_ga_with(&ga_config(60, strategy, 9), &GeneSpace::default(), &mut f).unwrap();
        let calls = calls.borrow();
        assert!(calls.values().all(|&n| n == 1), "{strategy}: re-evaluation");
        assert_eq!(out.evaluations, calls.len());
    }
}

#[test]
fn max_fitness_never_decreases() {
    for seed in 0..10 {
        let (mut f, _) = noisy(seed);
        let strategy = if seed % 2 == 0 {
            ParentStrategy::Roulette
        } else {
            ParentStrategy::TopK
        };
        let out = run_ga_with(
            &ga_config(80, strategy, seed),
            &GeneSpace::default(),
            &mut f,
        )
        .unwrap();
        assert_eq!(out.logs.len(), 81);
        for w in out.logs.windows(2) {
            assert!(w[1].max_fitness >= w[0].max_fitness, "seed {seed}: {:?}", w);
        }
        let last = out.logs.last().unwrap();
        assert_eq!(out.best.fitness(), Some(last.max_fitness));
        assert!(out.logs.iter().all(|l| l.fitness.len() == 8));
    }
}

#[test]
fn populations_are_distinct_and_in_range_every_generation() {
    let space = GeneSpace::default();
    let seen_per_generation = std::rc::Rc::new(std::cell::RefCell::new(Vec::<Chromosome>::new()));
    let sink = seen_per_generation.clone();
    let mut f = move |c: &Chromosome| {
        sink.borrow_mut().push(*c);
        Ok(c.0[3] as f64 / 9.0)
    };
    let out = run_ga_with(&ga_config(40, ParentStrategy::Roulette, 3), &space, &mut f).unwrap();
    assert!(seen_per_generation
        .borrow()
        .iter()
        .all(|c| space.contains(c)));
    for log in &out.logs {
        assert!(space.contains(&log.best));
        assert!(log.fitness.iter().all(|f| (0.0..=1.0).contains(f)));
        let mean = log.fitness.iter().sum::<f64>() / 8.0;
        assert!((mean - log.mean_fitness).abs() < 1e-12);
    }
}

#[test]
fn seeded_runs_repeat() {
    let run = || {
        let (mut f, _) = noisy(4);
        run_ga_with(
            &ga_config(30, ParentStrategy::Roulette, 4),
            &GeneSpace::default(),
            &mut f,
        )
        .unwrap()
    };
    let (a, b) = (run(), run());
    assert_eq!(a.logs, b.logs);
    assert_eq!(a.best, b.best);
}

#[test]
fn zero_generations_reports_initial_argmax() {
    let (mut f, calls) = noisy(5);
    let out = run_ga_with(
        &ga_config(0, ParentStrategy::TopK, 5),
        &GeneSpace::default(),
        &mut f,
    )
    .unwrap();
    assert_eq!(out.logs.len(), 1);
    assert_eq!(calls.borrow().len(), 8);
    let l = &out.logs[0];
    let max = l.fitness.iter().cloned().fold(f64::MIN, f64::max);
    assert_eq!(l.max_fitness, max);
    assert_eq!(out.best.chromosome, l.best);
}

#[test]
fn out_of_range_fitness_is_rejected() {
    let mut f = |_: &Chromosome| Ok(1.5);
    assert!(run_ga_with(
        &ga_config(1, ParentStrategy::TopK, 0),
        &GeneSpace::default(),
        &mut f
    )
    .is_err());
}
