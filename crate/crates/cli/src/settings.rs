//! Resolved `evolve` configuration: built-in defaults, then an optional
//! `key = value` file, then command-line flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use evotraj::analysis::SpreadThresholds;
use evotraj::emo::EvolutionConfig;
use evotraj::genome::GenomeSpec;
use evotraj::objectives::{Experiment, ObjectiveConfig, RmseKind, SignFloor};

use crate::error::{CliError, Result};

pub const WORKERS_ENV: &str = "EVOTRAJ_WORKERS";

/// Every tunable of an `evolve` invocation. Field names double as config
/// file keys and are echoed verbatim into `run.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolveSettings {
    pub experiment: u32,
    pub data: PathBuf,
    pub out: PathBuf,
    pub seeds: Vec<u64>,
    pub population: usize,
    pub generations: usize,
    pub crossover_rate: f64,
    pub mutation_rate: f64,
    pub tournament_size: usize,
    pub workers: usize,
    /// Divides the layer-size alleles; 1 trains the table sizes as is.
    pub divisor: u32,
    /// 0 means no cap.
    pub epoch_cap: u32,
    /// 0 means the full horizon.
    pub tau0: usize,
    pub v_min: f64,
    pub v_max: f64,
    /// `one_over_n` or a positive number.
    pub sign_floor: String,
    /// `per_step` or `root_mean_square`.
    pub rmse: String,
    pub veer: f64,
    pub distance_ratio: f64,
    pub lane_ratio: f64,
    pub lane_fraction: f64,
    pub paper_scale: bool,
}

impl Default for EvolveSettings {
    fn default() -> Self {
        let spread = SpreadThresholds::default();
        Self {
            experiment: 1,
            data: PathBuf::from("data"),
            out: PathBuf::from("runs"),
            seeds: vec![1, 2, 3],
            population: 8,
            generations: 5,
            crossover_rate: 1.0,
            mutation_rate: 0.5,
            tournament_size: 3,
            workers: 1,
            divisor: 4,
            epoch_cap: 10,
            tau0: 0,
            v_min: evotraj::simdata::V_MIN_KMH,
            v_max: evotraj::simdata::V_MAX_KMH,
            sign_floor: "one_over_n".into(),
            rmse: "per_step".into(),
            veer: spread.veer,
            distance_ratio: spread.distance_ratio,
            lane_ratio: spread.lane_ratio,
            lane_fraction: spread.lane_fraction,
            paper_scale: false,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .trim()
        .parse()
        .map_err(|e| CliError::Usage(format!("{key} = `{value}`: {e}")))
}

pub fn parse_seeds(value: &str) -> Result<Vec<u64>> {
    let seeds = value
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| parse::<u64>("seeds", s))
        .collect::<Result<Vec<_>>>()?;
    if seeds.is_empty() {
        return Err(CliError::Usage("seeds must not be empty".into()));
    }
    Ok(seeds)
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        other => Err(CliError::Usage(format!("{key} = `{other}`: expected true or false"))),
    }
}

impl EvolveSettings {
    /// The full-size preset: table sizes and epochs untouched, population
    /// and generations as published, twelve seeds.
    pub fn apply_paper_scale(&mut self) {
        self.paper_scale = true;
        self.population = 25;
        self.generations = 20;
        self.divisor = 1;
        self.epoch_cap = 0;
        self.seeds = (1..=12).collect();
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "experiment" => self.experiment = parse(key, value)?,
            "data" => self.data = PathBuf::from(value.trim()),
            "out" => self.out = PathBuf::from(value.trim()),
            "seeds" => self.seeds = parse_seeds(value)?,
            "population" => self.population = parse(key, value)?,
            "generations" => self.generations = parse(key, value)?,
            "crossover_rate" => self.crossover_rate = parse(key, value)?,
            "mutation_rate" => self.mutation_rate = parse(key, value)?,
            "tournament_size" => self.tournament_size = parse(key, value)?,
            "workers" => self.workers = parse(key, value)?,
            "divisor" => self.divisor = parse(key, value)?,
            "epoch_cap" => self.epoch_cap = parse(key, value)?,
            "tau0" => self.tau0 = parse(key, value)?,
            "v_min" => self.v_min = parse(key, value)?,
            "v_max" => self.v_max = parse(key, value)?,
            "sign_floor" => self.sign_floor = value.trim().to_string(),
            "rmse" => self.rmse = value.trim().to_string(),
            "veer" => self.veer = parse(key, value)?,
            "distance_ratio" => self.distance_ratio = parse(key, value)?,
            "lane_ratio" => self.lane_ratio = parse(key, value)?,
            "lane_fraction" => self.lane_fraction = parse(key, value)?,
            "paper_scale" => {
                if parse_bool(key, value)? {
                    self.apply_paper_scale();
                } else {
                    self.paper_scale = false;
                }
            }
            other => return Err(CliError::Usage(format!("unknown configuration key `{other}`"))),
        }
        Ok(())
    }

    /// Applies a flat `key = value` file; `#` starts a comment.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("{}:{}: expected key = value", path.display(), n + 1)))?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    /// Defaults, then `EVOTRAJ_WORKERS`, then the `--paper-scale` preset if asked
    /// for on the command line, then the file, then the flags.
    pub fn resolve(config_file: Option<&Path>, paper_scale: bool, flags: &[(&str, String)]) -> Result<Self> {
        let mut s = Self::default();
        if let Ok(w) = std::env::var(WORKERS_ENV) {
            s.set("workers", &w)?;
        }
        if paper_scale {
            s.apply_paper_scale();
        }
        if let Some(p) = config_file {
            s.apply_file(p)?;
        }
        for (k, v) in flags {
            s.set(k, v)?;
        }
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        self.experiment()?;
        self.evolution(0).validate()?;
        self.objective_config(0.1)?;
        self.spread().validate().map_err(|e| CliError::Usage(e.to_string()))?;
        if self.seeds.is_empty() {
            return Err(CliError::Usage("seeds must not be empty".into()));
        }
        if self.divisor == 0 {
            return Err(CliError::Usage("divisor must be at least 1".into()));
        }
        Ok(())
    }

    pub fn experiment(&self) -> Result<Experiment> {
        Experiment::from_code(self.experiment).map_err(|e| CliError::Usage(e.to_string()))
    }

    pub fn evolution(&self, seed: u64) -> EvolutionConfig {
        EvolutionConfig {
            population: self.population,
            generations: self.generations,
            crossover_rate: self.crossover_rate,
            mutation_rate: self.mutation_rate,
            tournament_size: self.tournament_size,
            seed,
            workers: self.workers,
        }
    }

    pub fn objective_config(&self, dt: f64) -> Result<ObjectiveConfig> {
        let sign_floor = match self.sign_floor.as_str() {
            "one_over_n" => SignFloor::OneOverN,
            other => SignFloor::Epsilon(parse("sign_floor", other)?),
        };
        let rmse = match self.rmse.as_str() {
            "per_step" => RmseKind::PerStep,
            "root_mean_square" => RmseKind::RootMeanSquare,
            other => {
                return Err(CliError::Usage(format!(
                    "rmse = `{other}`: expected per_step or root_mean_square"
                )))
            }
        };
        let cfg = ObjectiveConfig {
            tau0: (self.tau0 > 0).then_some(self.tau0),
            v_min: self.v_min,
            v_max: self.v_max,
            dt,
            sign_floor,
            rmse,
        };
        cfg.validate(self.tau0.max(1))
            .map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(cfg)
    }

    pub fn spread(&self) -> SpreadThresholds {
        SpreadThresholds {
            veer: self.veer,
            distance_ratio: self.distance_ratio,
            lane_ratio: self.lane_ratio,
            lane_fraction: self.lane_fraction,
            ..SpreadThresholds::default()
        }
    }

    pub fn genome_spec(&self) -> GenomeSpec {
        let mut spec = GenomeSpec::paper();
        spec.divisor = self.divisor;
        spec.epoch_cap = (self.epoch_cap > 0).then_some(self.epoch_cap);
        spec
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_override_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("cfg.txt");
        std::fs::write(&file, "# comment\npopulation = 12\ngenerations=7\nseeds = 4,5\n").unwrap();
        let s = EvolveSettings::resolve(Some(&file), false, &[("population", "10".into())]).unwrap();
        assert_eq!(s.population, 10);
        assert_eq!(s.generations, 7);
        assert_eq!(s.seeds, vec![4, 5]);
        assert_eq!(s.tournament_size, 3);
    }

    #[test]
    fn paper_scale_preset() {
        let s = EvolveSettings::resolve(None, true, &[]).unwrap();
        assert_eq!((s.population, s.generations, s.divisor, s.epoch_cap), (25, 20, 1, 0));
        assert_eq!(s.seeds.len(), 12);
        assert_eq!(s.genome_spec(), GenomeSpec::paper());
    }

    #[test]
    fn rejects_bad_values() {
        let bad = |k: &str, v: &str| EvolveSettings::resolve(None, false, &[(k, v.to_string())]).is_err();
        assert!(bad("experiment", "6"));
        assert!(bad("population", "3"));
        assert!(bad("seeds", ""));
        assert!(bad("colour", "red"));
        assert!(bad("rmse", "mean"));
        assert!(bad("tau0", "x"));
    }

    #[test]
    fn round_trips_through_json() {
        let s = EvolveSettings::default();
        let v: EvolveSettings = serde_json::from_value(serde_json::to_value(&s).unwrap()).unwrap();
        assert_eq!(v, s);
    }
}
