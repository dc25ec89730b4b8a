//! `analyze`: summary, spread and correlation tables over run directories.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use evotraj::analysis::{
    aggregate_runs, correlations_csv, objective_correlations, spread_classify, spread_csv, summary_csv, tally_spread,
    PairCorrelation, SpreadThresholds, SpreadVerdict, Summary, OBJECTIVE_PAIRS,
};
use evotraj::objectives::Experiment;

use crate::error::{create_dir, read_to_string, write, CliError, Result};

/// Parsed contents of one run directory.
#[derive(Debug, Clone)]
pub struct RunData {
    pub dir: PathBuf,
    pub name: String,
    pub run: Value,
    pub experiment: Experiment,
    pub generations: Vec<Value>,
    pub evaluations: Vec<Value>,
}

impl RunData {
    pub fn last_generation(&self) -> usize {
        self.generations
            .iter()
            .filter_map(|r| r["generation"].as_u64())
            .max()
            .unwrap_or(0) as usize
    }

    pub fn generation(&self, g: usize) -> Vec<&Value> {
        self.generations
            .iter()
            .filter(|r| r["generation"].as_u64() == Some(g as u64))
            .collect()
    }

    /// `(rmse_val, rmse_test)` of the generation member with the lowest
    /// validation RMSE.
    pub fn best_rmse(&self, g: usize) -> Option<(f64, f64)> {
        self.generation(g)
            .into_iter()
            .filter_map(|r| Some((r["rmse_val"].as_f64()?, r["rmse_test"].as_f64()?)))
            .min_by(|a, b| a.0.total_cmp(&b.0))
    }
}

fn read_jsonl(path: &Path) -> Result<Vec<Value>> {
    read_to_string(path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(n, l)| serde_json::from_str(l).map_err(|e| CliError::Data(format!("{}:{}: {e}", path.display(), n + 1))))
        .collect()
}

pub fn load_run(dir: &Path) -> Result<RunData> {
    let run_path = dir.join("run.json");
    let run: Value = serde_json::from_str(&read_to_string(&run_path)?)
        .map_err(|e| CliError::Data(format!("{}: {e}", run_path.display())))?;
    if run["status"] != "complete" {
        return Err(CliError::Data(format!("{} is not a completed run", dir.display())));
    }
    let code = run["experiment"]["code"]
        .as_u64()
        .ok_or_else(|| CliError::Data(format!("{}: missing experiment code", run_path.display())))?;
    let experiment = Experiment::from_code(code as u32).map_err(|e| CliError::Data(e.to_string()))?;
    Ok(RunData {
        dir: dir.to_path_buf(),
        name: dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
        run,
        experiment,
        generations: read_jsonl(&dir.join("generations.jsonl"))?,
        evaluations: read_jsonl(&dir.join("evaluations.jsonl"))?,
    })
}

/// Run directories named directly, or found one level below the given
/// directories, in sorted order.
pub fn discover(paths: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in paths {
        if p.join("run.json").is_file() {
            out.push(p.clone());
            continue;
        }
        let entries = std::fs::read_dir(p).map_err(|e| CliError::io(p, e))?;
        let mut found: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|d| d.join("run.json").is_file())
            .collect();
        if found.is_empty() {
            return Err(CliError::Data(format!("no run directories under {}", p.display())));
        }
        found.sort();
        out.extend(found);
    }
    if out.is_empty() {
        return Err(CliError::Data("no run directories given".into()));
    }
    Ok(out)
}

/// Settings that must agree for runs to be analysed together.
pub fn compatibility_keys(run: &Value) -> BTreeMap<String, Value> {
    let evo = &run["evolution"];
    let mut keys = BTreeMap::new();
    let mut put = |k: &str, v: &Value| {
        keys.insert(k.to_string(), v.clone());
    };
    put("dataset.manifest_sha256", &run["dataset"]["manifest_sha256"]);
    for k in [
        "population",
        "generations",
        "crossover_rate",
        "mutation_rate",
        "tournament_size",
    ] {
        put(&format!("evolution.{k}"), &evo[k]);
    }
    put("genome", &run["genome"]);
    put("objective_config", &run["objective_config"]);
    put("spread_thresholds", &run["spread_thresholds"]);
    put("model", &run["model"]);
    keys
}

pub fn check_compatible(runs: &[RunData]) -> Result<()> {
    let first = compatibility_keys(&runs[0].run);
    for r in &runs[1..] {
        let other = compatibility_keys(&r.run);
        let differing: Vec<&str> = first
            .iter()
            .filter(|(k, v)| other.get(*k) != Some(v))
            .map(|(k, _)| k.as_str())
            .collect();
        if !differing.is_empty() {
            return Err(CliError::Data(format!(
                "incompatible runs {} and {}: {}",
                runs[0].name,
                r.name,
                differing.join(", ")
            )));
        }
    }
    Ok(())
}

/// Reads `final/p<I>.test.csv` into per-sample predicted and true points.
pub fn read_predictions(path: &Path) -> Result<(Vec<Vec<[f64; 2]>>, Vec<Vec<[f64; 2]>>)> {
    let text = read_to_string(path)?;
    let mut pred: Vec<Vec<[f64; 2]>> = Vec::new();
    let mut truth: Vec<Vec<[f64; 2]>> = Vec::new();
    let bad = |n: usize, why: &str| CliError::Data(format!("{}:{}: {why}", path.display(), n + 1));
    for (n, line) in text.lines().enumerate().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 8 {
            return Err(bad(n, "expected 8 fields"));
        }
        let num = |i: usize| f[i].parse::<f64>().map_err(|_| bad(n, "bad number"));
        let sample = f[0].parse::<usize>().map_err(|_| bad(n, "bad sample index"))?;
        if sample == pred.len() {
            pred.push(Vec::new());
            truth.push(Vec::new());
        } else if sample + 1 != pred.len() {
            return Err(bad(n, "samples out of order"));
        }
        pred[sample].push([num(4)?, num(5)?]);
        truth[sample].push([num(6)?, num(7)?]);
    }
    Ok((pred, truth))
}

#[derive(Debug, Clone)]
pub struct ModelVerdict {
    pub run: String,
    pub experiment: Experiment,
    pub member: usize,
    /// `None` for members whose training failed.
    pub verdict: Option<SpreadVerdict>,
}

impl ModelVerdict {
    pub fn good(&self) -> bool {
        self.verdict.as_ref().is_some_and(|v| v.good)
    }
}

pub fn thresholds(run: &Value) -> Result<SpreadThresholds> {
    serde_json::from_value(run["spread_thresholds"].clone())
        .map_err(|e| CliError::Data(format!("spread_thresholds: {e}")))
}

/// Classifies every member of the final population.
pub fn spread_verdicts(run: &RunData) -> Result<Vec<ModelVerdict>> {
    let th = thresholds(&run.run)?;
    let last = run.last_generation();
    run.generation(last)
        .into_iter()
        .map(|r| {
            let member = r["index"].as_u64().unwrap_or(0) as usize;
            let verdict = if r["failed"].as_bool().unwrap_or(true) {
                None
            } else {
                let (p, t) = read_predictions(&run.dir.join("final").join(format!("p{member}.test.csv")))?;
                Some(spread_classify(&p, &t, &th).map_err(|e| CliError::Data(format!("{}: {e}", run.name)))?)
            };
            Ok(ModelVerdict {
                run: run.name.clone(),
                experiment: run.experiment,
                member,
                verdict,
            })
        })
        .collect()
}

/// `[l1, l2, l3]` of every successful evaluation of every run.
pub fn pooled_domain_objectives(runs: &[RunData]) -> Vec<[f64; 3]> {
    runs.iter()
        .flat_map(|r| &r.evaluations)
        .filter_map(|e| Some([e["l1"].as_f64()?, e["l2"].as_f64()?, e["l3"].as_f64()?]))
        .collect()
}

pub struct Analysis {
    pub runs: Vec<RunData>,
    pub summary: Vec<(&'static str, BTreeMap<Experiment, Summary>)>,
    pub verdicts: Vec<ModelVerdict>,
    pub correlations: Vec<PairCorrelation>,
    pub pooled: usize,
}

pub fn analyze(paths: &[PathBuf]) -> Result<Analysis> {
    let runs = discover(paths)?
        .iter()
        .map(|d| load_run(d))
        .collect::<Result<Vec<_>>>()?;
    check_compatible(&runs)?;
    let best: Vec<(Experiment, (f64, f64))> = runs
        .iter()
        .filter_map(|r| r.best_rmse(r.last_generation()).map(|b| (r.experiment, b)))
        .collect();
    let summary = vec![
        ("RMSE_val", aggregate_runs(&best, |b| b.0)),
        ("RMSE_test", aggregate_runs(&best, |b| b.1)),
    ];
    let mut verdicts = Vec::new();
    for r in &runs {
        verdicts.extend(spread_verdicts(r)?);
    }
    let pooled = pooled_domain_objectives(&runs);
    let correlations = objective_correlations(&pooled, &OBJECTIVE_PAIRS);
    Ok(Analysis {
        pooled: pooled.len(),
        runs,
        summary,
        verdicts,
        correlations,
    })
}

fn models_csv(verdicts: &[ModelVerdict]) -> String {
    let mut s = String::from(
        "run,experiment,member,good,failed_checks,mean_dx_pred,mean_dx_true,mean_length_pred,mean_length_true,lane_change_samples,lane_change_followed\n",
    );
    for m in verdicts {
        match &m.verdict {
            Some(v) => {
                let checks: Vec<&str> = v.failed.iter().map(|c| c.name()).collect();
                s.push_str(&format!(
                    "{},{},{},{},{},{:?},{:?},{:?},{:?},{},{}\n",
                    m.run,
                    m.experiment.code(),
                    m.member,
                    v.good,
                    checks.join(";"),
                    v.mean_dx_pred,
                    v.mean_dx_true,
                    v.mean_length_pred,
                    v.mean_length_true,
                    v.lane_change_samples,
                    v.lane_change_followed
                ));
            }
            None => s.push_str(&format!(
                "{},{},{},false,training_failed,,,,,,\n",
                m.run,
                m.experiment.code(),
                m.member
            )),
        }
    }
    s
}

/// Writes `summary.csv`, `spread.csv`, `spread_models.csv`,
/// `correlations.csv` and `inputs.json` into `out`.
pub fn run(paths: &[PathBuf], out: &Path) -> Result<Analysis> {
    let a = analyze(paths)?;
    create_dir(out)?;
    write(&out.join("summary.csv"), summary_csv(&a.summary))?;
    let good: Vec<SpreadVerdict> = a
        .verdicts
        .iter()
        .map(|m| {
            m.verdict.clone().unwrap_or(SpreadVerdict {
                good: false,
                failed: Vec::new(),
                mean_dx_pred: f64::NAN,
                mean_dx_true: f64::NAN,
                mean_length_pred: f64::NAN,
                mean_length_true: f64::NAN,
                lane_change_samples: 0,
                lane_change_followed: 0,
            })
        })
        .collect();
    let tallies = tally_spread(a.verdicts.iter().zip(&good).map(|(m, v)| (m.experiment, v)));
    write(&out.join("spread.csv"), spread_csv(&tallies))?;
    write(&out.join("spread_models.csv"), models_csv(&a.verdicts))?;
    write(&out.join("correlations.csv"), correlations_csv(&a.correlations))?;
    let inputs = json!({
        "runs": a.runs.iter().map(|r| std::fs::canonicalize(&r.dir).unwrap_or_else(|_| r.dir.clone())).collect::<Vec<_>>(),
        "pooled_evaluations": a.pooled,
        "spread_thresholds": thresholds(&a.runs[0].run)?,
        "summary_metric": "per run, the final-generation member with the lowest rmse_val",
        "correlation_pool": "every successful evaluation of every generation of every run",
    });
    write(
        &out.join("inputs.json"),
        serde_json::to_string_pretty(&inputs).expect("json value serialises"),
    )?;
    Ok(a)
}
