use evotraj::emo::{EvalContext, Evaluation, Evaluator};
use evotraj::genome::{Allele, Genome, GenomeSpec, Locus, LOCI};
use evotraj_oracles as oracle;

/// ZDT1 through the genome machinery: `x1` is a base-10 number spread over
/// loci 0..3, `x2..x5` have five levels each, the remaining loci are fixed
/// at zero with a single allele.
pub struct Zdt1;

const X1_DIGITS: usize = 3;
const TAIL: usize = 4;

pub fn zdt1_spec() -> GenomeSpec {
    let mut loci = Vec::new();
    for i in 0..LOCI {
        let alleles: Vec<Allele> = if i < X1_DIGITS {
            (0..10).map(|d| Allele::Int(d)).collect()
        } else if i < X1_DIGITS + TAIL {
            (0..5).map(|d| Allele::Real(d as f64 / 4.0)).collect()
        } else {
            vec![Allele::Real(0.0)]
        };
        loci.push(Locus::new(&format!("x{i}"), alleles));
    }
    GenomeSpec::custom(loci).unwrap()
}

pub fn zdt1_vector(g: &Genome) -> Vec<f64> {
    let mut x1 = 0.0;
    let mut scale = 1.0;
    for &d in &g.alleles[..X1_DIGITS] {
        scale /= 10.0;
        x1 += d as f64 * scale;
    }
    // Stretch [0, 0.999] to [0, 1] so both front endpoints are reachable.
    let mut x = vec![x1 / (1.0 - scale)];
    x.extend(
        g.alleles[X1_DIGITS..]
            .iter()
            .enumerate()
            .map(|(k, &a)| if k < TAIL { a as f64 / 4.0 } else { 0.0 }),
    );
    x.truncate(1 + TAIL);
    x
}

impl Evaluator for Zdt1 {
    type Artifact = ();
    fn arity(&self) -> usize {
        2
    }
    fn evaluate(&self, g: &Genome, _: &EvalContext) -> Result<Evaluation<()>, String> {
        Ok(Evaluation {
            objectives: oracle::zdt1(&zdt1_vector(g)).to_vec(),
            artifact: (),
        })
    }
}
