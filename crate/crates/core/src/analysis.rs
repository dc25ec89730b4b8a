//! Post-run analysis: spread classification of predicted trajectories,
//! aggregation of per-run metrics, and Spearman rank correlation.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::objectives::Experiment;

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum AnalysisError {
    #[error("empty prediction set")]
    Empty,
    #[error("length mismatch: {left} vs {right}")]
    Length { left: usize, right: usize },
    #[error("need at least 3 samples, got {0}")]
    TooShort(usize),
    #[error("correlation undefined: constant input")]
    Constant,
    #[error("non-finite input value")]
    NonFinite,
    #[error("invalid thresholds: {0}")]
    Thresholds(String),
}

pub type Result<T> = std::result::Result<T, AnalysisError>;

// ---------------------------------------------------------------------------
// Spread classification

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpreadThresholds {
    /// Allowed gap between predicted and true mean final lateral offset, m.
    pub veer: f64,
    /// Minimum ratio of mean predicted to mean true path length.
    pub distance_ratio: f64,
    /// Lateral displacement a prediction needs to count as a lane change,
    /// in lane widths.
    pub lane_ratio: f64,
    /// Fraction of true lane changes the predictor must follow.
    pub lane_fraction: f64,
    /// Lane width, m.
    pub lane_width: f64,
}

impl Default for SpreadThresholds {
    fn default() -> Self {
        Self {
            veer: 0.5,
            distance_ratio: 0.7,
            lane_ratio: 0.5,
            lane_fraction: 0.25,
            lane_width: 3.5,
        }
    }
}

impl SpreadThresholds {
    pub fn validate(&self) -> Result<()> {
        let ok = self.veer >= 0.0
            && self.distance_ratio >= 0.0
            && self.lane_ratio >= 0.0
            && (0.0..=1.0).contains(&self.lane_fraction)
            && self.lane_width > 0.0;
        if ok
            && [self.veer, self.distance_ratio, self.lane_ratio, self.lane_width]
                .iter()
                .all(|v| v.is_finite())
        {
            Ok(())
        } else {
            Err(AnalysisError::Thresholds(format!("{self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpreadCheck {
    Veer,
    Distance,
    LaneChange,
}

impl SpreadCheck {
    pub fn name(self) -> &'static str {
        match self {
            SpreadCheck::Veer => "veer",
            SpreadCheck::Distance => "distance",
            SpreadCheck::LaneChange => "lane_change",
        }
    }
}

/// Verdict for one model plus the statistics it was derived from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpreadVerdict {
    pub good: bool,
    pub failed: Vec<SpreadCheck>,
    pub mean_dx_pred: f64,
    pub mean_dx_true: f64,
    pub mean_length_pred: f64,
    pub mean_length_true: f64,
    /// Samples whose ground truth contains a lane change.
    pub lane_change_samples: usize,
    /// Of those, how many the prediction followed.
    pub lane_change_followed: usize,
}

/// Polyline length starting at the origin.
pub fn path_length(points: &[[f64; 2]]) -> f64 {
    let mut prev = [0.0, 0.0];
    let mut total = 0.0;
    for p in points {
        total += (p[0] - prev[0]).hypot(p[1] - prev[1]);
        prev = *p;
    }
    total
}

fn final_dx(points: &[[f64; 2]]) -> f64 {
    points.last().map_or(0.0, |p| p[0])
}

/// Classifies one model from its predictions over a split. A split with no
/// true lane change passes the lane-change check.
pub fn spread_classify(
    predictions: &[Vec<[f64; 2]>],
    truth: &[Vec<[f64; 2]>],
    th: &SpreadThresholds,
) -> Result<SpreadVerdict> {
    th.validate()?;
    if predictions.is_empty() {
        return Err(AnalysisError::Empty);
    }
    if predictions.len() != truth.len() {
        return Err(AnalysisError::Length {
            left: predictions.len(),
            right: truth.len(),
        });
    }
    let n = predictions.len() as f64;
    let mean = |f: &dyn Fn(&[[f64; 2]]) -> f64, set: &[Vec<[f64; 2]>]| set.iter().map(|t| f(t)).sum::<f64>() / n;
    let mean_dx_pred = mean(&final_dx, predictions);
    let mean_dx_true = mean(&final_dx, truth);
    let mean_length_pred = mean(&path_length, predictions);
    let mean_length_true = mean(&path_length, truth);
    if ![mean_dx_pred, mean_dx_true, mean_length_pred, mean_length_true]
        .iter()
        .all(|v| v.is_finite())
    {
        return Err(AnalysisError::NonFinite);
    }
    let mut lane_change_samples = 0;
    let mut lane_change_followed = 0;
    for (p, t) in predictions.iter().zip(truth) {
        if final_dx(t).abs() >= 0.5 * th.lane_width {
            lane_change_samples += 1;
            if final_dx(p).abs() >= th.lane_ratio * th.lane_width {
                lane_change_followed += 1;
            }
        }
    }
    let mut failed = Vec::new();
    if (mean_dx_pred - mean_dx_true).abs() > th.veer {
        failed.push(SpreadCheck::Veer);
    }
    if mean_length_pred < th.distance_ratio * mean_length_true {
        failed.push(SpreadCheck::Distance);
    }
    if lane_change_samples > 0 && (lane_change_followed as f64) < th.lane_fraction * lane_change_samples as f64 {
        failed.push(SpreadCheck::LaneChange);
    }
    Ok(SpreadVerdict {
        good: failed.is_empty(),
        failed,
        mean_dx_pred,
        mean_dx_true,
        mean_length_pred,
        mean_length_true,
        lane_change_samples,
        lane_change_followed,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub good: usize,
    pub total: usize,
}

/// Per-experiment `good/total` counts.
pub fn tally_spread<'a>(
    verdicts: impl IntoIterator<Item = (Experiment, &'a SpreadVerdict)>,
) -> BTreeMap<Experiment, Tally> {
    let mut out: BTreeMap<Experiment, Tally> = BTreeMap::new();
    for (e, v) in verdicts {
        let t = out.entry(e).or_default();
        t.total += 1;
        t.good += usize::from(v.good);
    }
    out
}

pub fn spread_csv(tallies: &BTreeMap<Experiment, Tally>) -> String {
    let mut s = String::from("experiment,good,total\n");
    for (e, t) in tallies {
        let _ = writeln!(s, "{},{},{}", e.code(), t.good, t.total);
    }
    s
}

// ---------------------------------------------------------------------------
// Spearman

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub rho: f64,
    pub p: f64,
    pub n: usize,
}

/// 1-based ranks, tied values sharing the mean of their positions.
pub fn mid_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(AnalysisError::Constant);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Two-sided p-value of `rho` at sample size `n` from the Student-t
/// approximation with `n - 2` degrees of freedom.
pub fn spearman_p_value(rho: f64, n: usize) -> f64 {
    if rho.abs() >= 1.0 {
        return 0.0;
    }
    let df = (n - 2) as f64;
    let t = rho.abs() * (df / (1.0 - rho * rho)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).expect("df is positive");
    (2.0 * (1.0 - dist.cdf(t))).clamp(0.0, 1.0)
}

pub fn spearman(x: &[f64], y: &[f64]) -> Result<Correlation> {
    if x.len() != y.len() {
        return Err(AnalysisError::Length {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < 3 {
        return Err(AnalysisError::TooShort(x.len()));
    }
    if !x.iter().chain(y).all(|v| v.is_finite()) {
        return Err(AnalysisError::NonFinite);
    }
    let rho = pearson(&mid_ranks(x), &mid_ranks(y))?;
    Ok(Correlation {
        rho,
        p: spearman_p_value(rho, x.len()),
        n: x.len(),
    })
}

/// The three domain-objective pairs, as indices into `[l1, l2, l3]`.
pub const OBJECTIVE_PAIRS: [(usize, usize); 3] = [(0, 1), (0, 2), (1, 2)];
pub const DOMAIN_NAMES: [&str; 3] = ["l1", "l2", "l3"];

#[derive(Debug, Clone, PartialEq)]
pub struct PairCorrelation {
    pub pair: (usize, usize),
    pub result: Result<Correlation>,
}

impl PairCorrelation {
    pub fn label(&self) -> String {
        format!("{} & {}", DOMAIN_NAMES[self.pair.0], DOMAIN_NAMES[self.pair.1])
    }
}

/// Spearman correlation of every pair over pooled `[l1, l2, l3]` records.
/// A failing pair does not stop the others.
pub fn objective_correlations(records: &[[f64; 3]], pairs: &[(usize, usize)]) -> Vec<PairCorrelation> {
    pairs
        .iter()
        .map(|&(a, b)| {
            let x: Vec<f64> = records.iter().map(|r| r[a]).collect();
            let y: Vec<f64> = records.iter().map(|r| r[b]).collect();
            PairCorrelation {
                pair: (a, b),
                result: spearman(&x, &y),
            }
        })
        .collect()
}

/// `pair,coefficient,p,n`; undefined correlations are written as `nan`.
pub fn correlations_csv(rows: &[PairCorrelation]) -> String {
    let mut s = String::from("pair,coefficient,p,n\n");
    for r in rows {
        match &r.result {
            Ok(c) => {
                let _ = writeln!(s, "{},{:?},{:?},{}", r.label(), c.rho, c.p, c.n);
            }
            Err(_) => {
                let _ = writeln!(s, "{},nan,nan,0", r.label());
            }
        }
    }
    s
}

// ---------------------------------------------------------------------------
// Aggregation

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single value.
    pub std: f64,
    pub n: usize,
}

pub fn summarize(values: &[f64]) -> Option<Summary> {
    if values.is_empty() {
        return None;
    }
    let n = values.len();
    let mut sorted = values.to_vec();
    // Summation in sorted order makes the result independent of run order.
    sorted.sort_by(f64::total_cmp);
    let mean = sorted.iter().sum::<f64>() / n as f64;
    let std = if n == 1 {
        0.0
    } else {
        (sorted.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
    };
    Some(Summary { mean, std, n })
}

/// Mean and std of `metric` per experiment.
pub fn aggregate_runs<R>(runs: &[(Experiment, R)], metric: impl Fn(&R) -> f64) -> BTreeMap<Experiment, Summary> {
    let mut grouped: BTreeMap<Experiment, Vec<f64>> = BTreeMap::new();
    for (e, r) in runs {
        grouped.entry(*e).or_default().push(metric(r));
    }
    grouped
        .into_iter()
        .filter_map(|(e, v)| summarize(&v).map(|s| (e, s)))
        .collect()
}

/// Experiments as columns, one `mean` and one `std` row per metric.
pub fn summary_csv(metrics: &[(&str, BTreeMap<Experiment, Summary>)]) -> String {
    let experiments: std::collections::BTreeSet<Experiment> =
        metrics.iter().flat_map(|(_, m)| m.keys().copied()).collect();
    let mut s = String::from("metric");
    for e in &experiments {
        let _ = write!(s, ",Experiment {}", e.code());
    }
    s.push('\n');
    for (name, m) in metrics {
        for (label, get) in [
            ("mean", (|x: &Summary| x.mean) as fn(&Summary) -> f64),
            ("std", |x: &Summary| x.std),
        ] {
            let _ = write!(s, "{name} {label}");
            for e in &experiments {
                match m.get(e) {
                    Some(v) => {
                        let _ = write!(s, ",{:?}", get(v));
                    }
                    None => s.push(','),
                }
            }
            s.push('\n');
        }
    }
    s
}
