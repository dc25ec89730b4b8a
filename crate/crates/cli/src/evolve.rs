//! `evolve`: one NSGA-II run per seed over trained CNN-LSTM predictors.
//!
//! Run directory layout:
//!
//! ```text
//! run.json                 resolved configuration, penalty, status
//! evaluations.jsonl        one line per evaluated genome, in evaluation order
//! generations.jsonl        one line per population member per generation
//! histories/g<G>-i<I>.csv  training curve of evaluation I of generation G
//! final/population.json    last population with ranks and metrics
//! final/p<I>.test.csv      test-split predictions of final member I
//! final/p<I>.{json,f32}    trained parameters of final member I
//! final_front.json         rank-0 members of the last population
//! ```

use std::fs::File;
use std::io::{BufWriter, Write as _};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use evotraj::emo::{self, EvalContext, Evaluation, Evaluator, Event, Individual, Member};
use evotraj::genome::{decode, Genome, GenomeSpec};
use evotraj::model::{train, write_history_csv, Model, ModelConfig, TrainedModel, Trajectory, CONV_FILTERS};
use evotraj::objectives::{
    evaluate_trajectories, objective_value, Experiment, Objective, ObjectiveConfig, ObjectiveVector,
};
use evotraj::simdata::{load_dataset, Dataset, SequenceSample};

use crate::error::{create_dir, write, CliError, Result};
use crate::gen_data::manifest_sha256;
use crate::settings::EvolveSettings;

/// Metrics of one successful evaluation. Objective values are means over
/// the validation split; `rmse_test` is the only test-split number.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalRecord {
    pub values: Vec<f64>,
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
    pub rmse_val: f64,
    pub rmse_test: f64,
    pub parameters: usize,
    pub epochs: usize,
}

pub struct Outcome {
    pub trained: TrainedModel,
    pub record: EvalRecord,
}

pub struct NeuralEvaluator<'a> {
    pub data: &'a Dataset,
    pub spec: GenomeSpec,
    pub experiment: Experiment,
    pub objectives: ObjectiveConfig,
}

fn mean_objective(
    o: Objective,
    preds: &[Trajectory],
    samples: &[SequenceSample],
    cfg: &ObjectiveConfig,
) -> Result<f64> {
    let mut total = 0.0;
    for (p, s) in preds.iter().zip(samples) {
        total += objective_value(o, p, s, cfg).map_err(|e| CliError::Data(e.to_string()))?;
    }
    Ok(total / samples.len().max(1) as f64)
}

impl NeuralEvaluator<'_> {
    fn model_config(&self, g: &Genome) -> std::result::Result<ModelConfig, String> {
        let d = decode(g, &self.spec).map_err(|e| e.to_string())?;
        let m = &self.data.manifest;
        Ok(ModelConfig::from_decoded(
            &d,
            m.tau,
            m.grid_shape(),
            self.spec.divisor,
            m.dt,
        ))
    }

    fn train_and_measure(&self, g: &Genome, seed: u64) -> std::result::Result<Outcome, String> {
        let s = |e: &dyn std::fmt::Display| e.to_string();
        let cfg = self.model_config(g)?;
        let model = Model::build(&cfg, seed).map_err(|e| s(&e))?;
        let trained = train(model, &self.data.train, &self.data.val, seed).map_err(|e| s(&e))?;
        let val = trained.model.predict_samples(&self.data.val).map_err(|e| s(&e))?;
        let test = trained.model.predict_samples(&self.data.test).map_err(|e| s(&e))?;
        let active =
            evaluate_trajectories(&val, &self.data.val, self.experiment, &self.objectives).map_err(|e| s(&e))?;
        let m = |o, p: &[Trajectory], set: &[SequenceSample]| {
            mean_objective(o, p, set, &self.objectives).map_err(|e| s(&e))
        };
        let record = EvalRecord {
            values: active.values,
            l1: m(Objective::L1, &val, &self.data.val)?,
            l2: m(Objective::L2, &val, &self.data.val)?,
            l3: m(Objective::L3, &val, &self.data.val)?,
            rmse_val: m(Objective::Rmse, &val, &self.data.val)?,
            rmse_test: m(Objective::Rmse, &test, &self.data.test)?,
            parameters: cfg.parameter_count(),
            epochs: trained.history.len(),
        };
        if ![record.l1, record.l2, record.l3, record.rmse_val, record.rmse_test]
            .iter()
            .all(|v| v.is_finite())
        {
            return Err("non-finite metric".into());
        }
        Ok(Outcome { trained, record })
    }
}

impl Evaluator for NeuralEvaluator<'_> {
    type Artifact = Outcome;

    fn arity(&self) -> usize {
        3
    }

    fn evaluate(&self, genome: &Genome, ctx: &EvalContext) -> std::result::Result<Evaluation<Outcome>, String> {
        let outcome = self.train_and_measure(genome, ctx.seed)?;
        let objectives = ObjectiveVector {
            objectives: self.experiment.objectives().to_vec(),
            values: outcome.record.values.clone(),
        }
        .minimization();
        Ok(Evaluation {
            objectives,
            artifact: outcome,
        })
    }
}

fn jsonl(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::io(path, e))
}

fn append(w: &mut BufWriter<File>, v: &Value) -> std::result::Result<(), String> {
    serde_json::to_writer(&mut *w, v).map_err(|e| e.to_string())?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(|e| e.to_string())
}

fn natural(objectives: &[Objective], ind: &Individual) -> Option<Vec<f64>> {
    (!ind.failed).then(|| ObjectiveVector::from_minimization(objectives, &ind.objectives).values)
}

fn metrics_json(record: Option<&EvalRecord>) -> Value {
    match record {
        Some(r) => json!({
            "l1": r.l1, "l2": r.l2, "l3": r.l3,
            "rmse_val": r.rmse_val, "rmse_test": r.rmse_test,
            "parameters": r.parameters, "epochs": r.epochs,
        }),
        None => json!({
            "l1": null, "l2": null, "l3": null,
            "rmse_val": null, "rmse_test": null,
            "parameters": null, "epochs": null,
        }),
    }
}

fn merge(mut base: Value, extra: Value) -> Value {
    if let (Value::Object(b), Value::Object(e)) = (&mut base, extra) {
        b.extend(e);
    }
    base
}

fn spec_json(spec: &GenomeSpec) -> Value {
    let loci: Vec<Value> = spec
        .loci()
        .iter()
        .map(|l| json!({ "name": l.name, "alleles": l.alleles.iter().map(|a| a.to_json()).collect::<Vec<_>>() }))
        .collect();
    json!({ "divisor": spec.divisor, "epoch_cap": spec.epoch_cap, "loci": loci })
}

/// Unique per run: experiment, UTC timestamp and seed, plus a counter if
/// the name is already taken.
fn fresh_dir(out: &Path, experiment: Experiment, seed: u64) -> Result<PathBuf> {
    let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%SZ");
    let base = format!("e{}-{stamp}-s{seed}", experiment.code());
    let mut dir = out.join(&base);
    let mut k = 2;
    while dir.exists() {
        dir = out.join(format!("{base}-{k}"));
        k += 1;
    }
    create_dir(&dir)?;
    Ok(dir)
}

struct RunContext<'a> {
    settings: &'a EvolveSettings,
    experiment: Experiment,
    data: &'a Dataset,
    data_path: PathBuf,
    manifest_hash: String,
    spec: GenomeSpec,
    objectives: ObjectiveConfig,
}

impl RunContext<'_> {
    fn run_json(&self, seed: u64, penalty: Option<&[f64]>, status: &str) -> Value {
        let m = &self.data.manifest;
        let objs = self.experiment.objectives();
        let mut spread = self.settings.spread();
        spread.lane_width = m.lane_width;
        json!({
            "tool": "evotraj",
            "version": env!("CARGO_PKG_VERSION"),
            "status": status,
            "seed": seed,
            "config": self.settings,
            "experiment": {
                "code": self.experiment.code(),
                "objectives": objs.iter().map(|o| o.name()).collect::<Vec<_>>(),
                "directions": objs.iter().map(|o| format!("{:?}", o.direction()).to_lowercase()).collect::<Vec<_>>(),
            },
            "dataset": {
                "path": self.data_path,
                "manifest_sha256": self.manifest_hash,
                "tau": m.tau,
                "grid": [m.grid_w, m.grid_h, m.channels],
                "dt": m.dt,
                "counts": m.counts,
            },
            "evolution": self.settings.evolution(seed),
            "objective_config": self.objectives,
            "spread_thresholds": spread,
            "genome": spec_json(&self.spec),
            "model": {
                "conv_filters": [CONV_FILTERS.0, CONV_FILTERS.1],
                "learning_rate": "optimizer default",
            },
            "decisions": {
                "objective_split": "val",
                "mutation": "per-individual trigger, one eligible locus changed",
                "crossover": "single point, cut in 1..13",
                "pairing": "two tournaments per pair, both children kept, surplus child dropped",
                "failure_penalty": "worst + 9 * max(|worst|, 1) per objective over finite generation-0 values",
                "evaluation_seed": "derived from (seed, generation, index)",
                "maximized_objectives": "negated in the minimization vectors",
            },
            "penalty": penalty,
        })
    }
}

fn write_predictions(path: &Path, preds: &[Trajectory], samples: &[SequenceSample]) -> Result<()> {
    let mut s = String::from("sample,episode,origin_t,step,x,y,true_x,true_y\n");
    for (i, (p, smp)) in preds.iter().zip(samples).enumerate() {
        for (k, (q, t)) in p.points.iter().zip(&smp.targets).enumerate() {
            s.push_str(&format!(
                "{i},{},{},{k},{:?},{:?},{:?},{:?}\n",
                smp.id.episode, smp.id.origin_t, q[0], q[1], t[0], t[1]
            ));
        }
    }
    write(path, s)
}

fn run_seed(ctx: &RunContext<'_>, seed: u64) -> Result<PathBuf> {
    let dir = fresh_dir(&ctx.settings.out, ctx.experiment, seed)?;
    let pretty = |v: &Value| serde_json::to_string_pretty(v).expect("json value serialises");
    write(&dir.join("run.json"), pretty(&ctx.run_json(seed, None, "running")))?;
    create_dir(&dir.join("histories"))?;
    let mut evals = jsonl(&dir.join("evaluations.jsonl"))?;
    let mut gens = jsonl(&dir.join("generations.jsonl"))?;
    let objs = ctx.experiment.objectives();
    let spec = &ctx.spec;
    let evaluator = NeuralEvaluator {
        data: ctx.data,
        spec: spec.clone(),
        experiment: ctx.experiment,
        objectives: ctx.objectives,
    };
    let hist_dir = dir.join("histories");
    let mut observer = |e: Event<'_, Outcome>| -> std::result::Result<(), String> {
        match e {
            Event::Evaluated {
                generation,
                index,
                member,
            } => {
                let ind = &member.individual;
                let record = member.artifact.as_ref().map(|o| &o.record);
                let line = json!({
                    "generation": generation,
                    "index": index,
                    "genome": ind.genome.alleles,
                    "hyperparameters": spec.values_json(&ind.genome),
                    "objective_names": objs.iter().map(|o| o.name()).collect::<Vec<_>>(),
                    "values": natural(&objs, ind),
                    "objectives": ind.objectives,
                    "failed": ind.failed,
                    "failure": member.failure,
                });
                append(&mut evals, &merge(line, metrics_json(record)))?;
                if let Some(o) = &member.artifact {
                    write_history_csv(
                        &hist_dir.join(format!("g{generation}-i{index}.csv")),
                        &o.trained.history,
                    )
                    .map_err(|e| e.to_string())?;
                }
            }
            Event::Generation {
                generation, population, ..
            } => {
                for (i, m) in population.iter().enumerate() {
                    let ind = &m.individual;
                    let extra = merge(
                        json!({ "values": natural(&objs, ind) }),
                        metrics_json(m.artifact.as_ref().map(|o| &o.record)),
                    );
                    append(&mut gens, &merge(emo::log_record(generation, i, ind), extra))?;
                }
            }
        }
        Ok(())
    };
    let outcome = emo::run(&ctx.settings.evolution(seed), &evaluator, spec, &mut observer)?;
    drop(observer);
    drop(evals);
    drop(gens);

    let final_dir = dir.join("final");
    create_dir(&final_dir)?;
    let mut population = Vec::new();
    for (i, m) in outcome.population.iter().enumerate() {
        population.push(member_json(i, m, &objs, spec));
        if let Some(o) = &m.artifact {
            let preds = o
                .trained
                .model
                .predict_samples(&ctx.data.test)
                .map_err(|e| CliError::Internal(e.to_string()))?;
            write_predictions(&final_dir.join(format!("p{i}.test.csv")), &preds, &ctx.data.test)?;
            o.trained
                .model
                .save(&final_dir.join(format!("p{i}")))
                .map_err(|e| CliError::Data(e.to_string()))?;
        }
    }
    write(
        &final_dir.join("population.json"),
        pretty(&Value::Array(population.clone())),
    )?;
    let front: Vec<Value> = population
        .into_iter()
        .zip(&outcome.population)
        .filter(|(_, m)| m.individual.rank == 0)
        .map(|(v, _)| v)
        .collect();
    check_front(&outcome.history.final_front)?;
    write(&dir.join("final_front.json"), pretty(&Value::Array(front)))?;
    write(
        &dir.join("run.json"),
        pretty(&ctx.run_json(seed, Some(&outcome.history.penalty), "complete")),
    )?;
    Ok(dir)
}

fn member_json(i: usize, m: &Member<Outcome>, objs: &[Objective], spec: &GenomeSpec) -> Value {
    let ind = &m.individual;
    let base = json!({
        "index": i,
        "genome": ind.genome.alleles,
        "hyperparameters": spec.values_json(&ind.genome),
        "objective_names": objs.iter().map(|o| o.name()).collect::<Vec<_>>(),
        "values": natural(objs, ind),
        "objectives": ind.objectives,
        "rank": ind.rank,
        "crowding": if ind.crowding.is_infinite() { json!("inf") } else { json!(ind.crowding) },
        "failed": ind.failed,
    });
    merge(base, metrics_json(m.artifact.as_ref().map(|o| &o.record)))
}

/// The emitted front must be mutually non-dominated.
fn check_front(front: &[Individual]) -> Result<()> {
    for a in front {
        for b in front {
            if emo::dominates(&a.objectives, &b.objectives).map_err(|e| CliError::Internal(e.to_string()))? {
                return Err(CliError::Internal(format!(
                    "final front member {:?} dominates {:?}",
                    a.objectives, b.objectives
                )));
            }
        }
    }
    Ok(())
}

/// Runs every seed and returns the run directories in seed order.
pub fn run(settings: &EvolveSettings) -> Result<Vec<PathBuf>> {
    settings.validate()?;
    let experiment = settings.experiment()?;
    if !settings.data.join("manifest.json").is_file() {
        return Err(CliError::Data(format!("no dataset at {}", settings.data.display())));
    }
    let data = load_dataset(&settings.data)?;
    let objectives = settings.objective_config(data.manifest.dt)?;
    objectives
        .validate(data.manifest.tau)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    if settings.paper_scale {
        eprintln!(
            "warning: paper-scale settings train full-size networks for {} seeds x {} evaluations; expect days of CPU time",
            settings.seeds.len(),
            settings.population * (settings.generations + 1)
        );
    }
    let ctx = RunContext {
        settings,
        experiment,
        data: &data,
        data_path: std::fs::canonicalize(&settings.data).unwrap_or_else(|_| settings.data.clone()),
        manifest_hash: manifest_sha256(&settings.data)?,
        spec: settings.genome_spec(),
        objectives,
    };
    create_dir(&settings.out)?;
    settings.seeds.iter().map(|&seed| run_seed(&ctx, seed)).collect()
}
