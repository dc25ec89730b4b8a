//! Training, shape and end-to-end gradient properties of the predictor.

mod support;

use evotraj::genome::{decode, random_genome, GenomeSpec};
use evotraj::model::{Model, ModelConfig};
use evotraj::nncore::{gradient_check, GradCheckConfig};
use evotraj::rng;
use evotraj::simdata::GridShape;
use support::models::{end_to_end, memorisation, samples};

#[test]
fn memorises_eight_samples() {
    let (first, last) = memorisation();
    println!("memorisation: epoch 1 loss {first:.4e}, final loss {last:.4e}");
    assert!(last < 0.01 * first, "{last} vs {first}");
}

#[test]
fn every_genome_predicts_tau_points() {
    let spec = GenomeSpec::desk();
    let tau = 5;
    let data = samples(tau, GridShape::DESK, 1);
    let mut r = rng::seeded(42);
    for i in 0..200 {
        let g = random_genome(&spec, &mut r);
        let d = decode(&g, &spec).unwrap();
        let cfg = ModelConfig::from_decoded(&d, tau, GridShape::DESK, spec.divisor, 0.1);
        let m = Model::build(&cfg, i).unwrap();
        assert_eq!(m.parameter_count(), cfg.parameter_count());
        let t = m.predict(&data[i as usize % data.len()].inputs).unwrap();
        assert_eq!(t.points.len(), tau, "genome {g}");
        assert_eq!(t.v_f.len(), tau);
        assert_eq!(t.v_delta.len(), tau);
        assert!(t.points.iter().all(|p| p[0].is_finite() && p[1].is_finite()));
    }
}

#[test]
fn minimal_model_matches_finite_differences() {
    let data = samples(2, GridShape::new(8, 8, 1), 2);
    for seed in 0..20u64 {
        let report = gradient_check(&mut end_to_end(seed, &data), GradCheckConfig::default());
        assert!(report.passed(), "seed {seed}: {:?}", report.failures);
        let total = report.checked + report.nonsmooth;
        assert!(
            report.nonsmooth * 10 <= total,
            "seed {seed}: {} of {total} skipped",
            report.nonsmooth
        );
    }
}
