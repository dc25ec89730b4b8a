//! NSGA-II over genomes.
//!
//! Objective vectors are in minimisation form throughout; callers negate
//! maximised objectives before handing them in.

use rand::Rng as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::genome::{mutate, random_genome, single_point_crossover, Genome, GenomeError, GenomeSpec};
use crate::rng::{self, Rng};

const EVOLVE_TAG: u64 = 0xE0;
/// Penalty used when generation 0 holds no finite value for an objective.
pub const FALLBACK_PENALTY: f64 = 1e9;

#[derive(Debug, thiserror::Error)]
pub enum EmoError {
    #[error("objective arity mismatch: {left} vs {right}")]
    Arity { left: usize, right: usize },
    #[error("invalid evolution configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Genome(#[from] GenomeError),
    #[error("worker pool: {0}")]
    Pool(String),
    #[error("observer: {0}")]
    Observer(String),
}

pub type Result<T> = std::result::Result<T, EmoError>;

/// True iff `a` is no worse everywhere and strictly better somewhere.
pub fn dominates(a: &[f64], b: &[f64]) -> Result<bool> {
    if a.len() != b.len() {
        return Err(EmoError::Arity {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(dominates_unchecked(a, b))
}

fn dominates_unchecked(a: &[f64], b: &[f64]) -> bool {
    let mut strictly = false;
    for (x, y) in a.iter().zip(b) {
        if x > y {
            return false;
        }
        if x < y {
            strictly = true;
        }
    }
    strictly
}

/// Fronts of indices into `points`, best first; each front keeps index order.
pub fn nondominated_fronts(points: &[Vec<f64>]) -> Vec<Vec<usize>> {
    let n = points.len();
    let mut dominated_by = vec![0usize; n];
    let mut dominating: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for j in i + 1..n {
            if dominates_unchecked(&points[i], &points[j]) {
                dominating[i].push(j);
                dominated_by[j] += 1;
            } else if dominates_unchecked(&points[j], &points[i]) {
                dominating[j].push(i);
                dominated_by[i] += 1;
            }
        }
    }
    let mut fronts = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&i| dominated_by[i] == 0).collect();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &i in &current {
            for &j in &dominating[i] {
                dominated_by[j] -= 1;
                if dominated_by[j] == 0 {
                    next.push(j);
                }
            }
        }
        next.sort_unstable();
        fronts.push(current);
        current = next;
    }
    fronts
}

/// Crowding distance of each point of one front. Boundary points get +inf;
/// an objective with zero range contributes nothing; sorting is stable, so
/// ties keep input order.
pub fn crowding_distance(front: &[&[f64]]) -> Vec<f64> {
    let n = front.len();
    if n <= 2 {
        return vec![f64::INFINITY; n];
    }
    let m = front[0].len();
    let mut dist = vec![0.0f64; n];
    for k in 0..m {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| front[a][k].total_cmp(&front[b][k]));
        let (lo, hi) = (front[order[0]][k], front[order[n - 1]][k]);
        dist[order[0]] = f64::INFINITY;
        dist[order[n - 1]] = f64::INFINITY;
        let range = hi - lo;
        if range <= 0.0 {
            continue;
        }
        for w in 1..n - 1 {
            dist[order[w]] += (front[order[w + 1]][k] - front[order[w - 1]][k]) / range;
        }
    }
    dist
}

fn serialize_crowding<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_infinite() {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*v)
    }
}

fn deserialize_crowding<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Num(f64),
        Text(String),
    }
    match Raw::deserialize(d)? {
        Raw::Num(v) => Ok(v),
        Raw::Text(t) if t == "inf" => Ok(f64::INFINITY),
        Raw::Text(t) => Err(serde::de::Error::custom(format!("bad crowding value `{t}`"))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub genome: Genome,
    /// Minimisation form.
    pub objectives: Vec<f64>,
    pub rank: usize,
    #[serde(serialize_with = "serialize_crowding", deserialize_with = "deserialize_crowding")]
    pub crowding: f64,
    pub failed: bool,
}

impl Individual {
    pub fn new(genome: Genome, objectives: Vec<f64>, failed: bool) -> Self {
        Self {
            genome,
            objectives,
            rank: 0,
            crowding: 0.0,
            failed,
        }
    }
}

/// Sorts `pop` into fronts and sets every `rank` and `crowding`.
pub fn fast_nondominated_sort(pop: &mut [Individual]) -> Vec<Vec<usize>> {
    let points: Vec<Vec<f64>> = pop.iter().map(|i| i.objectives.clone()).collect();
    let fronts = nondominated_fronts(&points);
    for (rank, front) in fronts.iter().enumerate() {
        let objs: Vec<&[f64]> = front.iter().map(|&i| points[i].as_slice()).collect();
        for (&i, d) in front.iter().zip(crowding_distance(&objs)) {
            pop[i].rank = rank;
            pop[i].crowding = d;
        }
    }
    fronts
}

/// `a` beats `b` under the crowded comparison: lower rank, then larger
/// crowding.
fn crowded_better(a: &Individual, b: &Individual) -> bool {
    a.rank < b.rank || (a.rank == b.rank && a.crowding > b.crowding)
}

/// Draws `size` members with replacement and returns the index of the
/// winner; remaining ties go to the lowest index.
pub fn crowded_tournament(pop: &[Individual], size: usize, rng: &mut Rng) -> usize {
    let mut best = rng.gen_range(0..pop.len());
    for _ in 1..size {
        let c = rng.gen_range(0..pop.len());
        if crowded_better(&pop[c], &pop[best]) || (!crowded_better(&pop[best], &pop[c]) && c < best) {
            best = c;
        }
    }
    best
}

/// Indices of the `n` survivors of `points`: whole fronts while they fit,
/// then the largest-crowding members of the overflowing front (ties by
/// index). Returned in selection order.
pub fn select_survivors(points: &[Vec<f64>], n: usize) -> Vec<usize> {
    let mut chosen = Vec::with_capacity(n);
    for front in nondominated_fronts(points) {
        if chosen.len() + front.len() <= n {
            chosen.extend(front);
            if chosen.len() == n {
                break;
            }
            continue;
        }
        let objs: Vec<&[f64]> = front.iter().map(|&i| points[i].as_slice()).collect();
        let crowd = crowding_distance(&objs);
        let mut order: Vec<usize> = (0..front.len()).collect();
        order.sort_by(|&a, &b| crowd[b].total_cmp(&crowd[a]).then(front[a].cmp(&front[b])));
        let room = n - chosen.len();
        chosen.extend(order[..room].iter().map(|&k| front[k]));
        break;
    }
    chosen
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvolutionConfig {
    pub population: usize,
    pub generations: usize,
    pub crossover_rate: f64,
    pub mutation_rate: f64,
    pub tournament_size: usize,
    pub seed: u64,
    /// Threads evaluating individuals concurrently.
    pub workers: usize,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        Self {
            population: 25,
            generations: 20,
            crossover_rate: 1.0,
            mutation_rate: 0.5,
            tournament_size: 3,
            seed: 0,
            workers: 1,
        }
    }
}

impl EvolutionConfig {
    /// Odd populations are accepted: the last pair contributes one child.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(EmoError::Config(m));
        if self.population < 4 {
            return bad(format!("population {} below 4", self.population));
        }
        if self.tournament_size < 2 {
            return bad(format!("tournament size {} below 2", self.tournament_size));
        }
        for (name, r) in [("crossover", self.crossover_rate), ("mutation", self.mutation_rate)] {
            if !(0.0..=1.0).contains(&r) {
                return bad(format!("{name} rate {r} outside [0, 1]"));
            }
        }
        if self.workers == 0 {
            return bad("workers must be at least 1".into());
        }
        Ok(())
    }
}

/// Identifies one evaluation; `seed` is derived from the run seed, the
/// generation and the index, so results do not depend on scheduling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalContext {
    pub generation: usize,
    pub index: usize,
    pub seed: u64,
}

pub struct Evaluation<A> {
    /// Minimisation form.
    pub objectives: Vec<f64>,
    pub artifact: A,
}

/// Maps a genome to objective values. Errors mark the individual as failed.
pub trait Evaluator: Sync {
    type Artifact: Send;
    fn arity(&self) -> usize;
    fn evaluate(&self, genome: &Genome, ctx: &EvalContext) -> std::result::Result<Evaluation<Self::Artifact>, String>;
}

/// An individual plus whatever its evaluation produced.
pub struct Member<A> {
    pub individual: Individual,
    pub artifact: Option<A>,
    /// Why evaluation failed, if it did.
    pub failure: Option<String>,
}

pub enum Event<'a, A> {
    /// One individual has been evaluated (before penalties are known for
    /// generation 0, `objectives` of failed members are empty).
    Evaluated {
        generation: usize,
        index: usize,
        member: &'a Member<A>,
    },
    /// Population after survivor selection, ranks and crowding assigned.
    Generation {
        generation: usize,
        population: &'a [Member<A>],
        penalty: &'a [f64],
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunHistory {
    /// Generation 0 first; `generations + 1` entries.
    pub snapshots: Vec<Vec<Individual>>,
    /// Rank-0 members of the last snapshot.
    pub final_front: Vec<Individual>,
    /// Objective values given to failed individuals.
    pub penalty: Vec<f64>,
}

pub struct RunOutcome<A> {
    pub history: RunHistory,
    pub population: Vec<Member<A>>,
}

/// `worst + 9 * max(|worst|, 1)` per objective over finite generation-0
/// values: ten times the worst value when it is at least 1, and always
/// strictly worse than it.
pub fn failure_penalty(values: &[&[f64]], arity: usize) -> Vec<f64> {
    (0..arity)
        .map(|k| {
            let worst = values
                .iter()
                .map(|v| v[k])
                .filter(|x| x.is_finite())
                .fold(f64::NEG_INFINITY, f64::max);
            if worst.is_finite() {
                worst + 9.0 * worst.abs().max(1.0)
            } else {
                FALLBACK_PENALTY
            }
        })
        .collect()
}

fn evaluate_all<E: Evaluator>(
    evaluator: &E,
    genomes: &[Genome],
    generation: usize,
    seed: u64,
    pool: &rayon::ThreadPool,
) -> Vec<Member<E::Artifact>> {
    use rayon::prelude::*;
    let arity = evaluator.arity();
    pool.install(|| {
        genomes
            .par_iter()
            .enumerate()
            .map(|(index, g)| {
                let ctx = EvalContext {
                    generation,
                    index,
                    seed: rng::derive_seed(seed, &[generation as u64, index as u64]),
                };
                let result = evaluator.evaluate(g, &ctx).and_then(|e| {
                    if e.objectives.len() != arity {
                        Err(format!(
                            "evaluator returned {} objectives, expected {arity}",
                            e.objectives.len()
                        ))
                    } else if let Some(v) = e.objectives.iter().find(|v| !v.is_finite()) {
                        Err(format!("non-finite objective value {v}"))
                    } else {
                        Ok(e)
                    }
                });
                match result {
                    Ok(e) => Member {
                        individual: Individual::new(*g, e.objectives, false),
                        artifact: Some(e.artifact),
                        failure: None,
                    },
                    Err(reason) => Member {
                        individual: Individual::new(*g, Vec::new(), true),
                        artifact: None,
                        failure: Some(reason),
                    },
                }
            })
            .collect()
    })
}

fn apply_penalty<A>(members: &mut [Member<A>], penalty: &[f64]) {
    for m in members.iter_mut().filter(|m| m.individual.failed) {
        m.individual.objectives = penalty.to_vec();
    }
}

fn assign_ranks<A>(members: &mut [Member<A>]) {
    let mut inds: Vec<Individual> = members.iter().map(|m| m.individual.clone()).collect();
    fast_nondominated_sort(&mut inds);
    for (m, i) in members.iter_mut().zip(inds) {
        m.individual = i;
    }
}

/// Tournament selection, crossover and mutation producing `n` children.
pub fn make_offspring(
    parents: &[Individual],
    spec: &GenomeSpec,
    config: &EvolutionConfig,
    rng: &mut Rng,
) -> Result<Vec<Genome>> {
    let n = config.population;
    let mut out = Vec::with_capacity(n + 1);
    while out.len() < n {
        let a = parents[crowded_tournament(parents, config.tournament_size, rng)].genome;
        let b = parents[crowded_tournament(parents, config.tournament_size, rng)].genome;
        let (c1, c2) = if rng.gen_bool(config.crossover_rate) {
            single_point_crossover(spec, &a, &b, rng)?
        } else {
            (a, b)
        };
        out.push(mutate(spec, &c1, config.mutation_rate, rng)?);
        out.push(mutate(spec, &c2, config.mutation_rate, rng)?);
    }
    out.truncate(n);
    Ok(out)
}

/// One generation: offspring, evaluation, elitist survival over parents and
/// offspring combined.
pub fn next_generation<E: Evaluator>(
    parents: Vec<Member<E::Artifact>>,
    evaluator: &E,
    spec: &GenomeSpec,
    config: &EvolutionConfig,
    generation: usize,
    penalty: &[f64],
    rng: &mut Rng,
    pool: &rayon::ThreadPool,
    observer: &mut dyn FnMut(Event<'_, E::Artifact>) -> std::result::Result<(), String>,
) -> Result<Vec<Member<E::Artifact>>> {
    let inds: Vec<Individual> = parents.iter().map(|m| m.individual.clone()).collect();
    let genomes = make_offspring(&inds, spec, config, rng)?;
    let mut offspring = evaluate_all(evaluator, &genomes, generation, config.seed, pool);
    apply_penalty(&mut offspring, penalty);
    for (index, member) in offspring.iter().enumerate() {
        observer(Event::Evaluated {
            generation,
            index,
            member,
        })
        .map_err(EmoError::Observer)?;
    }
    let mut combined: Vec<Option<Member<E::Artifact>>> = parents.into_iter().chain(offspring).map(Some).collect();
    let points: Vec<Vec<f64>> = combined
        .iter()
        .map(|m| m.as_ref().expect("present").individual.objectives.clone())
        .collect();
    let survivors = select_survivors(&points, config.population);
    let mut next: Vec<Member<E::Artifact>> = survivors
        .iter()
        .map(|&i| combined[i].take().expect("each survivor chosen once"))
        .collect();
    assign_ranks(&mut next);
    Ok(next)
}

/// Full run: random initial population, then `generations` rounds of
/// [`next_generation`]. The observer sees every evaluation and every
/// post-selection population as it happens.
pub fn run<E: Evaluator>(
    config: &EvolutionConfig,
    evaluator: &E,
    spec: &GenomeSpec,
    observer: &mut dyn FnMut(Event<'_, E::Artifact>) -> std::result::Result<(), String>,
) -> Result<RunOutcome<E::Artifact>> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| EmoError::Pool(e.to_string()))?;
    let mut r = rng::stream(config.seed, &[EVOLVE_TAG]);
    let genomes: Vec<Genome> = (0..config.population).map(|_| random_genome(spec, &mut r)).collect();
    let mut pop = evaluate_all(evaluator, &genomes, 0, config.seed, &pool);
    let finite: Vec<&[f64]> = pop
        .iter()
        .filter(|m| !m.individual.failed)
        .map(|m| m.individual.objectives.as_slice())
        .collect();
    let penalty = failure_penalty(&finite, evaluator.arity());
    apply_penalty(&mut pop, &penalty);
    for (index, member) in pop.iter().enumerate() {
        observer(Event::Evaluated {
            generation: 0,
            index,
            member,
        })
        .map_err(EmoError::Observer)?;
    }
    assign_ranks(&mut pop);
    let snapshot = |pop: &[Member<E::Artifact>]| pop.iter().map(|m| m.individual.clone()).collect::<Vec<_>>();
    let mut snapshots = vec![snapshot(&pop)];
    observer(Event::Generation {
        generation: 0,
        population: &pop,
        penalty: &penalty,
    })
    .map_err(EmoError::Observer)?;
    for generation in 1..=config.generations {
        pop = next_generation(
            pop, evaluator, spec, config, generation, &penalty, &mut r, &pool, observer,
        )?;
        snapshots.push(snapshot(&pop));
        observer(Event::Generation {
            generation,
            population: &pop,
            penalty: &penalty,
        })
        .map_err(EmoError::Observer)?;
    }
    let final_front = pop
        .iter()
        .filter(|m| m.individual.rank == 0)
        .map(|m| m.individual.clone())
        .collect();
    Ok(RunOutcome {
        history: RunHistory {
            snapshots,
            final_front,
            penalty,
        },
        population: pop,
    })
}

/// One line of the per-generation JSON-lines log.
pub fn log_record(generation: usize, index: usize, ind: &Individual) -> serde_json::Value {
    let crowding = if ind.crowding.is_infinite() {
        serde_json::Value::from("inf")
    } else {
        serde_json::Value::from(ind.crowding)
    };
    serde_json::json!({
        "generation": generation,
        "index": index,
        "genome": ind.genome.alleles.to_vec(),
        "objectives": ind.objectives,
        "rank": ind.rank,
        "crowding": crowding,
        "failed": ind.failed,
    })
}

/// Observer that ignores every event.
pub fn no_observer<A>(_: Event<'_, A>) -> std::result::Result<(), String> {
    Ok(())
}
