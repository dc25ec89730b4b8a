//! The five trajectory objectives and the experiment objective sets.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::model::{Model, ModelError, TrainedModel, Trajectory};
use crate::simdata::{SequenceSample, V_MAX_KMH, V_MIN_KMH};

#[derive(Debug, thiserror::Error)]
pub enum ObjectiveError {
    #[error("trajectory length mismatch: predicted {pred}, actual {actual}")]
    Length { pred: usize, actual: usize },
    #[error("unknown experiment {0}; expected 1 to 5")]
    Experiment(u32),
    #[error("invalid objective configuration: {0}")]
    Config(String),
    #[error("cannot evaluate an empty split")]
    EmptySplit,
    #[error(transparent)]
    Model(#[from] ModelError),
}

pub type Result<T> = std::result::Result<T, ObjectiveError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Objective {
    #[serde(rename = "RMSE")]
    Rmse,
    SignLoss,
    #[serde(rename = "l1")]
    L1,
    #[serde(rename = "l2")]
    L2,
    #[serde(rename = "l3")]
    L3,
}

impl Objective {
    pub fn name(self) -> &'static str {
        match self {
            Objective::Rmse => "RMSE",
            Objective::SignLoss => "SignLoss",
            Objective::L1 => "l1",
            Objective::L2 => "l2",
            Objective::L3 => "l3",
        }
    }

    pub fn direction(self) -> Direction {
        match self {
            Objective::L3 => Direction::Maximize,
            _ => Direction::Minimize,
        }
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Objective combinations, three objectives each.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub enum Experiment {
    E1,
    E2,
    E3,
    E4,
    E5,
}

impl Experiment {
    pub const ALL: [Experiment; 5] = [
        Experiment::E1,
        Experiment::E2,
        Experiment::E3,
        Experiment::E4,
        Experiment::E5,
    ];

    pub fn from_code(code: u32) -> Result<Self> {
        match code {
            1 => Ok(Experiment::E1),
            2 => Ok(Experiment::E2),
            3 => Ok(Experiment::E3),
            4 => Ok(Experiment::E4),
            5 => Ok(Experiment::E5),
            other => Err(ObjectiveError::Experiment(other)),
        }
    }

    pub fn code(self) -> u32 {
        self as u32 + 1
    }

    pub fn objectives(self) -> [Objective; 3] {
        use Objective::*;
        match self {
            Experiment::E1 => [Rmse, L2, L3],
            Experiment::E2 => [SignLoss, L2, L3],
            Experiment::E3 => [Rmse, L1, L3],
            Experiment::E4 => [SignLoss, L1, L3],
            Experiment::E5 => [L1, L2, L3],
        }
    }
}

impl TryFrom<u32> for Experiment {
    type Error = ObjectiveError;
    fn try_from(code: u32) -> Result<Self> {
        Self::from_code(code)
    }
}

impl From<Experiment> for u32 {
    fn from(e: Experiment) -> u32 {
        e.code()
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.code())
    }
}

/// How RMSE combines per-step errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum RmseKind {
    /// Mean of per-step Euclidean distances.
    #[default]
    PerStep,
    /// Square root of the mean squared distance.
    RootMeanSquare,
}

/// Denominator policy for Sign Loss when few steps agree in sign.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub enum SignFloor {
    /// `max(agree / n, 1 / n)`.
    #[default]
    OneOverN,
    /// `max(agree / n, eps)`.
    Epsilon(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveConfig {
    /// Horizon of the objective sums; `None` means the full trajectory.
    pub tau0: Option<usize>,
    pub v_min: f64,
    pub v_max: f64,
    pub dt: f64,
    pub sign_floor: SignFloor,
    pub rmse: RmseKind,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        Self {
            tau0: None,
            v_min: V_MIN_KMH,
            v_max: V_MAX_KMH,
            dt: 0.1,
            sign_floor: SignFloor::OneOverN,
            rmse: RmseKind::PerStep,
        }
    }
}

impl ObjectiveConfig {
    pub fn validate(&self, tau: usize) -> Result<()> {
        if !(self.v_min < self.v_max) {
            return Err(ObjectiveError::Config(format!(
                "v_min {} must be below v_max {}",
                self.v_min, self.v_max
            )));
        }
        if let Some(t) = self.tau0 {
            if t == 0 || t > tau {
                return Err(ObjectiveError::Config(format!("tau0 = {t} outside 1..={tau}")));
            }
        }
        if let SignFloor::Epsilon(e) = self.sign_floor {
            if !(e > 0.0) {
                return Err(ObjectiveError::Config(format!("sign floor {e} must be positive")));
            }
        }
        Ok(())
    }

    fn horizon(&self, len: usize) -> usize {
        self.tau0.map_or(len, |t| t.min(len))
    }
}

/// Sum of squared distances from the predicted points to `dest`.
pub fn l1_distance_feedback(traj: &Trajectory, dest: [f64; 2], cfg: &ObjectiveConfig) -> f64 {
    traj.points[..cfg.horizon(traj.len())]
        .iter()
        .map(|p| (p[0] - dest[0]).powi(2) + (p[1] - dest[1]).powi(2))
        .sum()
}

/// Sum of absolute heading rates.
pub fn l2_lateral(traj: &Trajectory, cfg: &ObjectiveConfig) -> f64 {
    traj.v_delta[..cfg.horizon(traj.len())].iter().map(|v| v.abs()).sum()
}

/// Sum of forward speeds clamped to `[v_min, v_max]`.
pub fn l3_longitudinal(traj: &Trajectory, cfg: &ObjectiveConfig) -> f64 {
    traj.v_f[..cfg.horizon(traj.len())]
        .iter()
        .map(|v| v.clamp(cfg.v_min, cfg.v_max))
        .sum()
}

fn check_lengths(pred: &Trajectory, actual: &Trajectory) -> Result<()> {
    if pred.len() != actual.len() || pred.is_empty() {
        return Err(ObjectiveError::Length {
            pred: pred.len(),
            actual: actual.len(),
        });
    }
    Ok(())
}

/// Mean per-step Euclidean distance.
pub fn rmse(pred: &Trajectory, actual: &Trajectory) -> Result<f64> {
    rmse_with(RmseKind::PerStep, pred, actual)
}

pub fn rmse_with(kind: RmseKind, pred: &Trajectory, actual: &Trajectory) -> Result<f64> {
    check_lengths(pred, actual)?;
    let n = pred.len() as f64;
    let sq = pred
        .points
        .iter()
        .zip(&actual.points)
        .map(|(p, a)| (p[0] - a[0]).powi(2) + (p[1] - a[1]).powi(2));
    Ok(match kind {
        RmseKind::PerStep => sq.map(f64::sqrt).sum::<f64>() / n,
        RmseKind::RootMeanSquare => (sq.sum::<f64>() / n).sqrt(),
    })
}

fn signs_agree(a: f64, b: f64) -> bool {
    a == 0.0 || b == 0.0 || (a > 0.0) == (b > 0.0)
}

/// Mean lateral magnitude error divided by the fraction of steps whose
/// lateral sign agrees.
pub fn sign_loss(pred: &Trajectory, actual: &Trajectory, floor: SignFloor) -> Result<f64> {
    check_lengths(pred, actual)?;
    let n = pred.len() as f64;
    let mut numerator = 0.0;
    let mut agree = 0usize;
    for (p, a) in pred.points.iter().zip(&actual.points) {
        numerator += (p[0].abs() - a[0].abs()).abs();
        if signs_agree(p[0], a[0]) {
            agree += 1;
        }
    }
    numerator /= n;
    let lower = match floor {
        SignFloor::OneOverN => 1.0 / n,
        SignFloor::Epsilon(e) => e,
    };
    Ok(numerator / (agree as f64 / n).max(lower))
}

/// Objective values aligned with an experiment's objective list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveVector {
    pub objectives: Vec<Objective>,
    pub values: Vec<f64>,
}

impl ObjectiveVector {
    pub fn directions(&self) -> Vec<Direction> {
        self.objectives.iter().map(|o| o.direction()).collect()
    }

    pub fn get(&self, objective: Objective) -> Option<f64> {
        self.objectives
            .iter()
            .position(|&o| o == objective)
            .map(|i| self.values[i])
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Values with maximised objectives negated.
    pub fn minimization(&self) -> Vec<f64> {
        self.objectives
            .iter()
            .zip(&self.values)
            .map(|(o, &v)| match o.direction() {
                Direction::Minimize => v,
                Direction::Maximize => -v,
            })
            .collect()
    }

    /// Inverse of [`ObjectiveVector::minimization`].
    pub fn from_minimization(objectives: &[Objective], values: &[f64]) -> Self {
        let values = objectives
            .iter()
            .zip(values)
            .map(|(o, &v)| match o.direction() {
                Direction::Minimize => v,
                Direction::Maximize => -v,
            })
            .collect();
        Self {
            objectives: objectives.to_vec(),
            values,
        }
    }
}

/// Column header of [`csv_row`].
pub const CSV_HEADER: &str = "generation,individual,obj1_name,obj1,obj2_name,obj2,obj3_name,obj3,failed";

pub fn csv_row(generation: usize, individual: usize, v: &ObjectiveVector, failed: bool) -> String {
    let mut row = format!("{generation},{individual}");
    for (o, x) in v.objectives.iter().zip(&v.values) {
        row.push_str(&format!(",{o},{x:?}"));
    }
    row.push_str(&format!(",{failed}"));
    row
}

/// Anything that maps samples to predicted trajectories.
pub trait Predictor {
    fn predict_split(&self, samples: &[SequenceSample]) -> Result<Vec<Trajectory>>;
}

impl Predictor for Model {
    fn predict_split(&self, samples: &[SequenceSample]) -> Result<Vec<Trajectory>> {
        Ok(self.predict_samples(samples)?)
    }
}

impl Predictor for TrainedModel {
    fn predict_split(&self, samples: &[SequenceSample]) -> Result<Vec<Trajectory>> {
        self.model.predict_split(samples)
    }
}

/// Value of one objective on one sample.
pub fn objective_value(
    objective: Objective,
    pred: &Trajectory,
    sample: &SequenceSample,
    cfg: &ObjectiveConfig,
) -> Result<f64> {
    let actual = || Trajectory::of_sample(sample, cfg.dt);
    Ok(match objective {
        Objective::Rmse => rmse_with(cfg.rmse, pred, &actual())?,
        Objective::SignLoss => sign_loss(pred, &actual(), cfg.sign_floor)?,
        Objective::L1 => l1_distance_feedback(pred, sample.destination(), cfg),
        Objective::L2 => l2_lateral(pred, cfg),
        Objective::L3 => l3_longitudinal(pred, cfg),
    })
}

/// Averages every objective of `experiment` over the split, given
/// predictions in sample order.
pub fn evaluate_trajectories(
    preds: &[Trajectory],
    samples: &[SequenceSample],
    experiment: Experiment,
    cfg: &ObjectiveConfig,
) -> Result<ObjectiveVector> {
    if samples.is_empty() {
        return Err(ObjectiveError::EmptySplit);
    }
    if preds.len() != samples.len() {
        return Err(ObjectiveError::Length {
            pred: preds.len(),
            actual: samples.len(),
        });
    }
    cfg.validate(samples[0].tau())?;
    let objectives = experiment.objectives();
    let mut values = Vec::with_capacity(3);
    for &o in &objectives {
        let mut total = 0.0;
        for (p, s) in preds.iter().zip(samples) {
            total += objective_value(o, p, s, cfg)?;
        }
        values.push(total / samples.len() as f64);
    }
    Ok(ObjectiveVector {
        objectives: objectives.to_vec(),
        values,
    })
}

/// Predicts the split and averages the experiment's objectives over it.
pub fn evaluate<P: Predictor + ?Sized>(
    predictor: &P,
    samples: &[SequenceSample],
    experiment: Experiment,
    cfg: &ObjectiveConfig,
) -> Result<ObjectiveVector> {
    let preds = predictor.predict_split(samples)?;
    evaluate_trajectories(&preds, samples, experiment, cfg)
}
