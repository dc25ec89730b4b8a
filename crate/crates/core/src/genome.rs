//! The 13-locus hyperparameter genome and its variation operators.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::nncore::{LossKind, OptimizerKind};

/// Number of loci in every genome.
pub const LOCI: usize = 13;

/// Locus names in genome order, as used in JSON output.
pub const LOCUS_NAMES: [&str; LOCI] = [
    "batch_size",
    "epochs",
    "momentum",
    "loss",
    "optimizer",
    "lstm_cells",
    "lstm_dropout",
    "hidden_units",
    "cnn_flat1",
    "cnn_flat2",
    "lstm_flat1",
    "lstm_flat2",
    "flat_dropout",
];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GenomeError {
    #[error("invalid genome spec: {0}")]
    Spec(String),
    #[error("allele index {index} out of range for locus {locus} ({len} alleles)")]
    Index { locus: usize, index: usize, len: usize },
    #[error("locus {locus} holds {found}, expected {expected}")]
    Decode {
        locus: usize,
        found: String,
        expected: &'static str,
    },
    #[error("mutation rate {0} outside [0, 1]")]
    Rate(f64),
}

pub type Result<T> = std::result::Result<T, GenomeError>;

/// One allele value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Allele {
    Int(u32),
    Real(f64),
    Loss(LossKind),
    Optimizer(OptimizerKind),
}

impl Allele {
    pub fn to_json(self) -> Value {
        match self {
            Allele::Int(v) => Value::from(v),
            Allele::Real(v) => Value::from(v),
            Allele::Loss(k) => Value::from(k.to_string()),
            Allele::Optimizer(k) => Value::from(k.to_string()),
        }
    }
}

impl fmt::Display for Allele {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Allele::Int(v) => write!(f, "{v}"),
            Allele::Real(v) => write!(f, "{v}"),
            Allele::Loss(k) => write!(f, "{k}"),
            Allele::Optimizer(k) => write!(f, "{k}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Locus {
    pub name: String,
    pub alleles: Vec<Allele>,
}

impl Locus {
    pub fn new(name: &str, alleles: Vec<Allele>) -> Self {
        Self {
            name: name.to_string(),
            alleles,
        }
    }
}

/// Allele tables plus the scaling applied when decoding.
#[derive(Debug, Clone, PartialEq)]
pub struct GenomeSpec {
    loci: Vec<Locus>,
    /// Divisor for the size-bearing loci (hidden units and the four
    /// flattened widths). 1 leaves sizes untouched.
    pub divisor: u32,
    /// Upper bound on effective epochs, if any.
    pub epoch_cap: Option<u32>,
}

fn ints(v: &[u32]) -> Vec<Allele> {
    v.iter().map(|&x| Allele::Int(x)).collect()
}

fn reals(v: &[f64]) -> Vec<Allele> {
    v.iter().map(|&x| Allele::Real(x)).collect()
}

impl GenomeSpec {
    /// The evolvable hyperparameter tables at full size.
    pub fn paper() -> Self {
        let tables = vec![
            ints(&[50, 75, 100, 125]),
            ints(&[10, 20, 30, 40, 50]),
            reals(&[0.8, 0.85, 0.9, 0.95]),
            vec![Allele::Loss(LossKind::Mse), Allele::Loss(LossKind::LogCosh)],
            OptimizerKind::ALL.iter().map(|&k| Allele::Optimizer(k)).collect(),
            ints(&[1, 2, 3, 4]),
            reals(&[0.2, 0.25, 0.3, 0.35, 0.4, 0.5]),
            ints(&[100, 125, 150, 175, 200, 225, 250]),
            ints(&[256, 512, 768, 1024]),
            ints(&[256, 512, 768, 1024]),
            ints(&[64, 128, 256, 512]),
            ints(&[64, 128, 256, 512]),
            reals(&[0.05, 0.1, 0.15, 0.2, 0.25]),
        ];
        let loci = LOCUS_NAMES.iter().zip(tables).map(|(n, a)| Locus::new(n, a)).collect();
        Self {
            loci,
            divisor: 1,
            epoch_cap: None,
        }
    }

    /// Same tables, sizes divided by 4 and epochs capped at 10.
    pub fn desk() -> Self {
        Self {
            divisor: 4,
            epoch_cap: Some(10),
            ..Self::paper()
        }
    }

    /// Arbitrary tables, e.g. for analytic test problems.
    pub fn custom(loci: Vec<Locus>) -> Result<Self> {
        if loci.len() != LOCI {
            return Err(GenomeError::Spec(format!("{} loci, expected {LOCI}", loci.len())));
        }
        if let Some(l) = loci.iter().find(|l| l.alleles.is_empty()) {
            return Err(GenomeError::Spec(format!("locus `{}` has no alleles", l.name)));
        }
        Ok(Self {
            loci,
            divisor: 1,
            epoch_cap: None,
        })
    }

    pub fn loci(&self) -> &[Locus] {
        &self.loci
    }

    pub fn table_len(&self, locus: usize) -> usize {
        self.loci[locus].alleles.len()
    }

    pub fn allele(&self, g: &Genome, locus: usize) -> Allele {
        self.loci[locus].alleles[g.alleles[locus]]
    }

    /// Checks every index against its table.
    pub fn validate(&self, g: &Genome) -> Result<()> {
        for (locus, (&index, l)) in g.alleles.iter().zip(&self.loci).enumerate() {
            if index >= l.alleles.len() {
                return Err(GenomeError::Index {
                    locus,
                    index,
                    len: l.alleles.len(),
                });
            }
        }
        Ok(())
    }

    /// `{locus_name: allele_value}`.
    pub fn values_json(&self, g: &Genome) -> Value {
        let mut map = Map::new();
        for (i, l) in self.loci.iter().enumerate() {
            map.insert(l.name.clone(), self.allele(g, i).to_json());
        }
        Value::Object(map)
    }

    /// Named values plus the exact index form.
    pub fn to_json(&self, g: &Genome) -> Value {
        serde_json::json!({ "values": self.values_json(g), "indices": g.alleles })
    }
}

/// Allele indices, one per locus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Genome {
    pub alleles: [usize; LOCI],
}

impl Genome {
    pub fn new(alleles: [usize; LOCI]) -> Self {
        Self { alleles }
    }

    /// Compact text key such as `0-3-1-...`, stable across runs.
    pub fn key(&self) -> String {
        self.alleles.iter().map(|a| a.to_string()).collect::<Vec<_>>().join("-")
    }
}

impl fmt::Display for Genome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.key())
    }
}

/// Uniform draw at every locus.
pub fn random_genome<R: Rng + ?Sized>(spec: &GenomeSpec, rng: &mut R) -> Genome {
    let mut alleles = [0; LOCI];
    for (locus, a) in alleles.iter_mut().enumerate() {
        *a = rng.gen_range(0..spec.table_len(locus));
    }
    Genome { alleles }
}

/// Children of a cut after locus `k` (1-based), `1 <= k < LOCI`.
pub fn crossover_at(a: &Genome, b: &Genome, k: usize) -> (Genome, Genome) {
    assert!((1..LOCI).contains(&k), "cut point {k} outside 1..{LOCI}");
    let mut c1 = *a;
    let mut c2 = *b;
    c1.alleles[k..].copy_from_slice(&b.alleles[k..]);
    c2.alleles[k..].copy_from_slice(&a.alleles[k..]);
    (c1, c2)
}

/// Single-point crossover with the cut uniform over the 12 interior points.
pub fn single_point_crossover<R: Rng + ?Sized>(
    spec: &GenomeSpec,
    a: &Genome,
    b: &Genome,
    rng: &mut R,
) -> Result<(Genome, Genome)> {
    spec.validate(a)?;
    spec.validate(b)?;
    let k = rng.gen_range(1..LOCI);
    Ok(crossover_at(a, b, k))
}

/// With probability `rate`, resamples one locus to a different allele.
/// Only loci with more than one allele are eligible; a spec without any
/// leaves the genome unchanged.
pub fn mutate<R: Rng + ?Sized>(spec: &GenomeSpec, g: &Genome, rate: f64, rng: &mut R) -> Result<Genome> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(GenomeError::Rate(rate));
    }
    spec.validate(g)?;
    if !rng.gen_bool(rate) {
        return Ok(*g);
    }
    let eligible: Vec<usize> = (0..LOCI).filter(|&l| spec.table_len(l) > 1).collect();
    if eligible.is_empty() {
        return Ok(*g);
    }
    let locus = eligible[rng.gen_range(0..eligible.len())];
    // Draw from the table minus the current allele.
    let current = g.alleles[locus];
    let mut pick = rng.gen_range(0..spec.table_len(locus) - 1);
    if pick >= current {
        pick += 1;
    }
    let mut out = *g;
    out.alleles[locus] = pick;
    Ok(out)
}

/// Concrete hyperparameter values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub batch_size: usize,
    pub epochs: usize,
    pub momentum: f64,
    pub loss: LossKind,
    pub optimizer: OptimizerKind,
    pub lstm_cells: usize,
    pub lstm_dropout: f64,
    pub hidden_units: usize,
    pub cnn_flat1: usize,
    pub cnn_flat2: usize,
    pub lstm_flat1: usize,
    pub lstm_flat2: usize,
    pub flat_dropout: f64,
}

/// Table values as drawn, and the values actually used for training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decoded {
    pub nominal: Hyperparameters,
    pub effective: Hyperparameters,
}

/// Maps a genome to hyperparameters. Fails only for specs whose tables do
/// not hold the expected value kinds.
pub fn decode(g: &Genome, spec: &GenomeSpec) -> Result<Decoded> {
    spec.validate(g)?;
    let int = |locus: usize| match spec.allele(g, locus) {
        Allele::Int(v) => Ok(v as usize),
        other => Err(GenomeError::Decode {
            locus,
            found: other.to_string(),
            expected: "integer",
        }),
    };
    let real = |locus: usize| match spec.allele(g, locus) {
        Allele::Real(v) => Ok(v),
        other => Err(GenomeError::Decode {
            locus,
            found: other.to_string(),
            expected: "real",
        }),
    };
    let loss = match spec.allele(g, 3) {
        Allele::Loss(k) => k,
        other => {
            return Err(GenomeError::Decode {
                locus: 3,
                found: other.to_string(),
                expected: "loss",
            })
        }
    };
    let optimizer = match spec.allele(g, 4) {
        Allele::Optimizer(k) => k,
        other => {
            return Err(GenomeError::Decode {
                locus: 4,
                found: other.to_string(),
                expected: "optimizer",
            })
        }
    };
    let nominal = Hyperparameters {
        batch_size: int(0)?,
        epochs: int(1)?,
        momentum: real(2)?,
        loss,
        optimizer,
        lstm_cells: int(5)?,
        lstm_dropout: real(6)?,
        hidden_units: int(7)?,
        cnn_flat1: int(8)?,
        cnn_flat2: int(9)?,
        lstm_flat1: int(10)?,
        lstm_flat2: int(11)?,
        flat_dropout: real(12)?,
    };
    let d = spec.divisor.max(1) as usize;
    let shrink = |v: usize| (v / d).max(1);
    let effective = Hyperparameters {
        epochs: spec
            .epoch_cap
            .map_or(nominal.epochs, |c| nominal.epochs.min(c as usize)),
        hidden_units: shrink(nominal.hidden_units),
        cnn_flat1: shrink(nominal.cnn_flat1),
        cnn_flat2: shrink(nominal.cnn_flat2),
        lstm_flat1: shrink(nominal.lstm_flat1),
        lstm_flat2: shrink(nominal.lstm_flat2),
        ..nominal
    };
    Ok(Decoded { nominal, effective })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn single_allele_spec() -> GenomeSpec {
        let loci = (0..LOCI)
            .map(|i| Locus::new(&format!("l{i}"), vec![Allele::Int(i as u32)]))
            .collect();
        GenomeSpec::custom(loci).unwrap()
    }

    #[test]
    fn tables_match_the_published_alleles() {
        let spec = GenomeSpec::paper();
        let sizes: Vec<usize> = (0..LOCI).map(|l| spec.table_len(l)).collect();
        assert_eq!(sizes, vec![4, 5, 4, 2, 7, 4, 6, 7, 4, 4, 4, 4, 5]);
        let row = |l: usize| {
            spec.loci()[l]
                .alleles
                .iter()
                .map(|a| a.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        assert_eq!(row(0), "50,75,100,125");
        assert_eq!(row(1), "10,20,30,40,50");
        assert_eq!(row(2), "0.8,0.85,0.9,0.95");
        assert_eq!(row(3), "MSE,LogCosh");
        assert_eq!(row(4), "RMSprop,NAdam,SGD,AdaGrad,Adadelta,Adam,AdaMax");
        assert_eq!(row(5), "1,2,3,4");
        assert_eq!(row(6), "0.2,0.25,0.3,0.35,0.4,0.5");
        assert_eq!(row(7), "100,125,150,175,200,225,250");
        assert_eq!(row(8), "256,512,768,1024");
        assert_eq!(row(9), "256,512,768,1024");
        assert_eq!(row(10), "64,128,256,512");
        assert_eq!(row(11), "64,128,256,512");
        assert_eq!(row(12), "0.05,0.1,0.15,0.2,0.25");
    }

    #[test]
    fn single_allele_spec_has_one_genome() {
        let spec = single_allele_spec();
        let mut r = rng::seeded(1);
        assert_eq!(random_genome(&spec, &mut r), Genome::new([0; LOCI]));
        let g = Genome::new([0; LOCI]);
        assert_eq!(mutate(&spec, &g, 1.0, &mut r).unwrap(), g);
    }

    #[test]
    fn loss_locus_is_uniform() {
        let spec = GenomeSpec::paper();
        let mut r = rng::seeded(7);
        let n = 10_000;
        let mse = (0..n).filter(|_| random_genome(&spec, &mut r).alleles[3] == 0).count();
        let frac = mse as f64 / n as f64;
        assert!((frac - 0.5).abs() <= 0.02, "{frac}");
    }

    #[test]
    fn random_genome_is_deterministic() {
        let spec = GenomeSpec::paper();
        let a = random_genome(&spec, &mut rng::seeded(3));
        let b = random_genome(&spec, &mut rng::seeded(3));
        assert_eq!(a, b);
    }

    #[test]
    fn crossover_of_equal_parents_is_identity() {
        let spec = GenomeSpec::paper();
        let mut r = rng::seeded(2);
        let a = random_genome(&spec, &mut r);
        assert_eq!(single_point_crossover(&spec, &a, &a, &mut r).unwrap(), (a, a));
    }

    #[test]
    fn forced_cut_at_six() {
        let a = Genome::new([0; LOCI]);
        let b = Genome::new([1; LOCI]);
        let (c1, c2) = crossover_at(&a, &b, 6);
        assert_eq!(c1.alleles, [0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 1, 1]);
        assert_eq!(c2.alleles, [1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0]);
    }

    #[test]
    fn crossover_rejects_invalid_parent() {
        let spec = GenomeSpec::paper();
        let mut bad = Genome::new([0; LOCI]);
        bad.alleles[3] = 2;
        let err = single_point_crossover(&spec, &bad, &Genome::new([0; LOCI]), &mut rng::seeded(0)).unwrap_err();
        assert_eq!(
            err,
            GenomeError::Index {
                locus: 3,
                index: 2,
                len: 2
            }
        );
    }

    #[test]
    fn mutation_rate_zero_and_one() {
        let spec = GenomeSpec::paper();
        let mut r = rng::seeded(4);
        for _ in 0..100 {
            let g = random_genome(&spec, &mut r);
            assert_eq!(mutate(&spec, &g, 0.0, &mut r).unwrap(), g);
            let m = mutate(&spec, &g, 1.0, &mut r).unwrap();
            let diff = (0..LOCI).filter(|&l| m.alleles[l] != g.alleles[l]).count();
            assert_eq!(diff, 1);
        }
        assert_eq!(
            mutate(&spec, &Genome::new([0; LOCI]), 1.5, &mut r),
            Err(GenomeError::Rate(1.5))
        );
    }

    #[test]
    fn half_rate_mutates_half_the_time() {
        let spec = GenomeSpec::paper();
        let mut r = rng::seeded(5);
        let g = Genome::new([0; LOCI]);
        let n = 10_000;
        let changed = (0..n).filter(|_| mutate(&spec, &g, 0.5, &mut r).unwrap() != g).count();
        let frac = changed as f64 / n as f64;
        assert!((frac - 0.5).abs() <= 0.02, "{frac}");
    }

    #[test]
    fn decode_examples() {
        let spec = GenomeSpec::desk();
        let mut g = Genome::new([0; LOCI]);
        g.alleles[5] = 2;
        g.alleles[4] = 5;
        let d = decode(&g, &spec).unwrap();
        assert_eq!(d.nominal.lstm_cells, 3);
        assert_eq!(d.nominal.optimizer, OptimizerKind::Adam);
        assert_eq!(d.nominal.hidden_units, 100);
        assert_eq!(d.effective.hidden_units, 25);
        assert_eq!(d.effective.cnn_flat1, 64);
        assert_eq!(d.effective.lstm_flat2, 16);
        g.alleles[1] = 4;
        let d = decode(&g, &spec).unwrap();
        assert_eq!((d.nominal.epochs, d.effective.epochs), (50, 10));
        let p = decode(&g, &GenomeSpec::paper()).unwrap();
        assert_eq!(p.nominal, p.effective);
    }

    #[test]
    fn decode_rejects_non_table_specs() {
        let spec = single_allele_spec();
        let err = decode(&Genome::new([0; LOCI]), &spec).unwrap_err();
        assert!(matches!(err, GenomeError::Decode { locus: 3, .. }), "{err:?}");
    }

    #[test]
    fn json_forms() {
        let spec = GenomeSpec::paper();
        let g = Genome::new([1, 0, 2, 1, 5, 0, 0, 0, 3, 0, 0, 0, 4]);
        let v = spec.to_json(&g);
        assert_eq!(v["values"]["batch_size"], 75);
        assert_eq!(v["values"]["loss"], "LogCosh");
        assert_eq!(v["values"]["optimizer"], "Adam");
        assert_eq!(v["values"]["momentum"], 0.9);
        assert_eq!(v["values"]["cnn_flat1"], 1024);
        let back: Genome = serde_json::from_value(serde_json::json!({ "alleles": v["indices"] })).unwrap();
        assert_eq!(back, g);
        assert_eq!(g.key(), "1-0-2-1-5-0-0-0-3-0-0-0-4");
    }
}
