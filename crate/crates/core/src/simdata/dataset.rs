use std::sync::Arc;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{render_grid, Episode, GridConfig, GridShape, OccupancyGrid, Result, SimError};
use crate::rng;

/// Identity of a window: the episode it came from and its prediction step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SampleId {
    pub episode: u32,
    pub origin_t: u32,
}

/// One training example: `tau` grids ending at `origin_t` and the `tau`
/// following ego positions relative to the position at `origin_t`.
///
/// Overlapping windows share their grids.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceSample {
    pub id: SampleId,
    pub inputs: Vec<Arc<OccupancyGrid>>,
    pub targets: Vec<[f64; 2]>,
}

impl SequenceSample {
    pub fn tau(&self) -> usize {
        self.targets.len()
    }

    /// Last ground-truth position of the window.
    pub fn destination(&self) -> [f64; 2] {
        *self.targets.last().expect("sample has at least one target")
    }
}

/// Slides a `tau`-frame window over the episode with the given stride.
///
/// Sample `k` looks at frames `k*stride .. k*stride + tau` and predicts the
/// `tau` positions after the last of them, so there are
/// `(len - 2*tau) / stride + 1` samples. Short episodes yield none.
pub fn build_sequences(episode: &Episode, tau: usize, stride: usize, grid: &GridConfig) -> Result<Vec<SequenceSample>> {
    if tau == 0 || stride == 0 {
        return Err(SimError::Config("tau and stride must be at least 1".into()));
    }
    let len = episode.len();
    if len < 2 * tau {
        return Ok(Vec::new());
    }
    let count = (len - 2 * tau) / stride + 1;
    let last_frame = (count - 1) * stride + tau;
    let frames = (0..last_frame)
        .map(|t| render_grid(episode, t, grid).map(Arc::new))
        .collect::<Result<Vec<_>>>()?;

    Ok((0..count)
        .map(|k| {
            let start = k * stride;
            let origin = start + tau - 1;
            let [ox, oy] = episode.position(origin);
            SequenceSample {
                id: SampleId {
                    episode: episode.id,
                    origin_t: origin as u32,
                },
                inputs: frames[start..start + tau].to_vec(),
                targets: (1..=tau)
                    .map(|i| {
                        let [x, y] = episode.position(origin + i);
                        [x - ox, y - oy]
                    })
                    .collect(),
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.6,
            val: 0.2,
            test: 0.2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

/// Provenance of a dataset directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub seed: u64,
    pub tau: usize,
    pub grid_w: usize,
    pub grid_h: usize,
    pub channels: usize,
    pub dt: f64,
    pub counts: SplitCounts,
    pub v_min: f64,
    pub v_max: f64,
    pub ratios: SplitRatios,
    pub stride: usize,
    pub lanes: usize,
    pub lane_width: f64,
    pub episodes: usize,
    /// Sample identities per split, in file order.
    pub samples: SplitIds,
    /// Free-form generator settings, recorded for provenance.
    #[serde(default)]
    pub generator: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SplitIds {
    pub train: Vec<SampleId>,
    pub val: Vec<SampleId>,
    pub test: Vec<SampleId>,
}

impl Manifest {
    pub fn grid_shape(&self) -> GridShape {
        GridShape::new(self.grid_w, self.grid_h, self.channels)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub train: Vec<SequenceSample>,
    pub val: Vec<SequenceSample>,
    pub test: Vec<SequenceSample>,
    pub manifest: Manifest,
}

impl Dataset {
    pub fn split(&self, name: &str) -> Option<&[SequenceSample]> {
        match name {
            "train" => Some(&self.train),
            "val" => Some(&self.val),
            "test" => Some(&self.test),
            _ => None,
        }
    }
}

/// Partitions samples into train/val/test.
///
/// Sizes are `round(n * train)`, `round(n * val)` and the remainder. The test
/// split is the tail of `samples` in their given (episode) order so that it
/// does not share overlapping windows with training data; the rest is
/// shuffled with `seed` before being divided into train and val.
///
/// The returned manifest carries counts, ratios and ids; callers fill in the
/// generator fields.
pub fn split_dataset(samples: Vec<SequenceSample>, ratios: SplitRatios, seed: u64) -> Result<Dataset> {
    if samples.is_empty() {
        return Err(SimError::EmptySamples);
    }
    let sum = ratios.train + ratios.val + ratios.test;
    if (sum - 1.0).abs() > 1e-9 || [ratios.train, ratios.val, ratios.test].iter().any(|r| *r < 0.0) {
        return Err(SimError::Config(format!(
            "split ratios must be non-negative and sum to 1, got {sum}"
        )));
    }
    let n = samples.len();
    let n_train = ((n as f64 * ratios.train).round() as usize).min(n);
    let n_val = ((n as f64 * ratios.val).round() as usize).min(n - n_train);
    let n_test = n - n_train - n_val;

    let first = samples.first().expect("non-empty");
    let tau = first.tau();
    let shape = first.inputs.first().map(|g| g.shape).unwrap_or(GridShape::DESK);

    let mut rest = samples;
    let test = rest.split_off(n - n_test);
    rest.shuffle(&mut rng::seeded(seed));
    let val = rest.split_off(n_train);
    let train = rest;

    let ids = |s: &[SequenceSample]| s.iter().map(|x| x.id).collect::<Vec<_>>();
    let manifest = Manifest {
        format_version: super::FORMAT_VERSION,
        seed,
        tau,
        grid_w: shape.width,
        grid_h: shape.height,
        channels: shape.channels,
        dt: 0.0,
        counts: SplitCounts {
            train: train.len(),
            val: val.len(),
            test: test.len(),
        },
        v_min: super::V_MIN_KMH,
        v_max: super::V_MAX_KMH,
        ratios,
        stride: 1,
        lanes: 0,
        lane_width: 0.0,
        episodes: 0,
        samples: SplitIds {
            train: ids(&train),
            val: ids(&val),
            test: ids(&test),
        },
        generator: serde_json::Value::Null,
    };
    Ok(Dataset {
        train,
        val,
        test,
        manifest,
    })
}

/// Everything [`generate_dataset`] needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateConfig {
    pub episodes: usize,
    pub tau: usize,
    pub stride: usize,
    pub seed: u64,
    pub episode: super::EpisodeConfig,
    pub grid: GridConfig,
    pub ratios: SplitRatios,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        Self {
            episodes: 10,
            tau: 5,
            stride: 2,
            seed: 0,
            episode: super::EpisodeConfig::default(),
            grid: GridConfig::default(),
            ratios: SplitRatios::default(),
        }
    }
}

const EPISODE_TAG: u64 = 0xE9;

/// Simulates `episodes` episodes (episode `k` seeded from `(seed, k)`),
/// windows them and splits the samples. The manifest records the complete
/// generator configuration.
pub fn generate_dataset(cfg: &GenerateConfig) -> Result<Dataset> {
    if cfg.episodes == 0 {
        return Err(SimError::Config("at least one episode is required".into()));
    }
    let episode_cfg = super::EpisodeConfig {
        horizon: cfg.tau,
        ..cfg.episode.clone()
    };
    let mut samples = Vec::new();
    for k in 0..cfg.episodes {
        let ep = super::simulate_episode(&episode_cfg, rng::derive_seed(cfg.seed, &[EPISODE_TAG, k as u64]))?
            .with_id(k as u32);
        samples.extend(build_sequences(&ep, cfg.tau, cfg.stride, &cfg.grid)?);
    }
    let mut ds = split_dataset(samples, cfg.ratios, cfg.seed)?;
    let m = &mut ds.manifest;
    m.dt = episode_cfg.dt;
    m.v_min = episode_cfg.v_min;
    m.v_max = episode_cfg.v_max;
    m.stride = cfg.stride;
    m.lanes = episode_cfg.lanes;
    m.lane_width = episode_cfg.lane_width;
    m.episodes = cfg.episodes;
    m.generator = serde_json::to_value(cfg).expect("generator config serialises");
    Ok(ds)
}
