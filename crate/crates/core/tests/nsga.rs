mod support;

use evotraj::emo::{
    crowding_distance, dominates, fast_nondominated_sort, no_observer, nondominated_fronts, run, EvalContext,
    Evaluation, Evaluator, EvolutionConfig, Individual,
};
use evotraj::genome::{Genome, GenomeSpec, LOCI};
use evotraj::rng;
use evotraj_oracles as oracle;
use rand::Rng;
use support::zdt::{zdt1_spec, Zdt1};

fn random_points(seed: u64) -> Vec<Vec<f64>> {
    let mut r = rng::seeded(seed);
    let n = r.gen_range(1..=50);
    let m = r.gen_range(2..=4);
    // Coarse values so ties and duplicates actually occur.
    (0..n)
        .map(|_| (0..m).map(|_| r.gen_range(0..6) as f64).collect())
        .collect()
}

#[test]
fn sort_matches_peeling_oracle() {
    for seed in 0..100 {
        let pts = random_points(seed);
        assert_eq!(
            nondominated_fronts(&pts),
            oracle::brute_force_fronts(&pts),
            "seed {seed}"
        );
    }
}

#[test]
fn later_fronts_never_dominate_earlier_ones() {
    for seed in 100..200 {
        let pts = random_points(seed);
        let fronts = nondominated_fronts(&pts);
        let mut seen = vec![0usize; pts.len()];
        for f in &fronts {
            for &i in f {
                seen[i] += 1;
            }
        }
        assert!(seen.iter().all(|&c| c == 1));
        for (k, later) in fronts.iter().enumerate() {
            for earlier in &fronts[..k] {
                for &i in later {
                    for &j in earlier {
                        assert!(!dominates(&pts[i], &pts[j]).unwrap());
                    }
                }
            }
        }
    }
}

#[test]
fn thirty_three_objective_points() {
    let mut r = rng::seeded(30);
    let pts: Vec<Vec<f64>> = (0..30).map(|_| (0..3).map(|_| r.gen::<f64>()).collect()).collect();
    assert_eq!(nondominated_fronts(&pts), oracle::brute_force_fronts(&pts));
}

#[test]
fn crowding_matches_oracle() {
    for seed in 0..100 {
        let pts = random_points(seed);
        for front in oracle::brute_force_fronts(&pts) {
            let owned: Vec<Vec<f64>> = front.iter().map(|&i| pts[i].clone()).collect();
            let refs: Vec<&[f64]> = owned.iter().map(|p| p.as_slice()).collect();
            let got = crowding_distance(&refs);
            let want = oracle::crowding_distance(&owned);
            for (g, w) in got.iter().zip(&want) {
                assert!(g == w || (g - w).abs() < 1e-12, "seed {seed}: {g} vs {w}");
            }
        }
    }
}

#[test]
fn sort_sets_rank_fields() {
    let pts = random_points(7);
    let mut pop: Vec<Individual> = pts
        .iter()
        .map(|p| Individual::new(Genome::new([0; LOCI]), p.clone(), false))
        .collect();
    let fronts = fast_nondominated_sort(&mut pop);
    for (k, f) in fronts.iter().enumerate() {
        for &i in f {
            assert_eq!(pop[i].rank, k);
            assert!(pop[i].crowding >= 0.0);
        }
    }
}

/// Objectives read straight off the allele indices.
struct Indices;
impl Evaluator for Indices {
    type Artifact = ();
    fn arity(&self) -> usize {
        2
    }
    fn evaluate(&self, g: &Genome, _: &EvalContext) -> Result<Evaluation<()>, String> {
        let a = g.alleles;
        Ok(Evaluation {
            objectives: vec![(a[0] + a[7]) as f64, (a[5] + 3 * a[4]) as f64 - a[0] as f64],
            artifact: (),
        })
    }
}

#[test]
fn best_value_per_objective_never_worsens() {
    let spec = GenomeSpec::paper();
    for seed in 0..5 {
        let cfg = EvolutionConfig {
            population: 10,
            generations: 8,
            seed,
            ..Default::default()
        };
        let h = run(&cfg, &Indices, &spec, &mut no_observer).unwrap().history;
        for k in 0..2 {
            let best: Vec<f64> = h
                .snapshots
                .iter()
                .map(|s| s.iter().map(|i| i.objectives[k]).fold(f64::INFINITY, f64::min))
                .collect();
            assert!(best.windows(2).all(|w| w[1] <= w[0]), "seed {seed}: {best:?}");
        }
    }
}

/// Two identical objectives: a single-objective problem in disguise.
struct Twin;
impl Evaluator for Twin {
    type Artifact = ();
    fn arity(&self) -> usize {
        2
    }
    fn evaluate(&self, g: &Genome, _: &EvalContext) -> Result<Evaluation<()>, String> {
        let v: usize = g.alleles.iter().sum();
        Ok(Evaluation {
            objectives: vec![v as f64, v as f64],
            artifact: (),
        })
    }
}

#[test]
fn selection_pressure_on_twin_objectives() {
    let spec = GenomeSpec::paper();
    let mut ok = 0;
    for seed in 0..5 {
        let cfg = EvolutionConfig {
            population: 12,
            generations: 10,
            seed,
            ..Default::default()
        };
        let h = run(&cfg, &Twin, &spec, &mut no_observer).unwrap().history;
        let means: Vec<f64> = h
            .snapshots
            .iter()
            .map(|s| s.iter().map(|i| i.objectives[0]).sum::<f64>() / s.len() as f64)
            .collect();
        if means.windows(2).all(|w| w[1] <= w[0] + 1e-12) {
            ok += 1;
        }
    }
    assert!(ok >= 4, "{ok} of 5 seeds non-increasing");
}

#[test]
fn dominated_offspring_leave_parents_in_place() {
    // Every change away from allele 0 on locus 0 makes both objectives
    // worse, so once the optimum is in the population it never leaves.
    struct Bowl;
    impl Evaluator for Bowl {
        type Artifact = ();
        fn arity(&self) -> usize {
            2
        }
        fn evaluate(&self, g: &Genome, _: &EvalContext) -> Result<Evaluation<()>, String> {
            let v = g.alleles.iter().sum::<usize>() as f64;
            Ok(Evaluation {
                objectives: vec![v, 2.0 * v],
                artifact: (),
            })
        }
    }
    let spec = GenomeSpec::paper();
    let cfg = EvolutionConfig {
        population: 8,
        generations: 6,
        seed: 11,
        ..Default::default()
    };
    let h = run(&cfg, &Bowl, &spec, &mut no_observer).unwrap().history;
    for w in h.snapshots.windows(2) {
        let best = |s: &[Individual]| s.iter().map(|i| i.objectives[0]).fold(f64::INFINITY, f64::min);
        let winner = w[0].iter().find(|i| i.objectives[0] == best(&w[0])).unwrap();
        assert!(w[1].iter().any(|i| i.genome == winner.genome));
    }
}

#[test]
fn worker_count_does_not_change_results() {
    let spec = GenomeSpec::paper();
    let base = EvolutionConfig {
        population: 10,
        generations: 4,
        seed: 9,
        ..Default::default()
    };
    let one = run(&base, &Indices, &spec, &mut no_observer).unwrap().history;
    let four = run(
        &EvolutionConfig { workers: 4, ..base },
        &Indices,
        &spec,
        &mut no_observer,
    )
    .unwrap()
    .history;
    assert_eq!(one, four);
}

#[test]
fn zdt1_front_reaches_most_of_the_analytic_hypervolume() {
    let spec = zdt1_spec();
    let reference = [1.1, 1.1];
    let target = oracle::zdt1_front_hypervolume(reference);
    let mut ratios: Vec<f64> = (0..5)
        .map(|seed| {
            let cfg = EvolutionConfig {
                population: 24,
                generations: 30,
                seed,
                ..Default::default()
            };
            let h = run(&cfg, &Zdt1, &spec, &mut no_observer).unwrap().history;
            let pts: Vec<[f64; 2]> = h
                .final_front
                .iter()
                .map(|i| [i.objectives[0], i.objectives[1]])
                .collect();
            oracle::hypervolume_2d(&pts, reference) / target
        })
        .collect();
    ratios.sort_by(f64::total_cmp);
    eprintln!("zdt1 hypervolume ratios {ratios:?}");
    assert!(ratios[2] >= 0.95, "median {}", ratios[2]);
}
