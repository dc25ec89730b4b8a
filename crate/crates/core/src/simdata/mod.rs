//! Synthetic highway data: episode kinematics, occupancy-grid rendering,
//! sliding-window sequence datasets and their on-disk format.

mod dataset;
mod episode;
mod grid;
mod io;

pub use dataset::{
    build_sequences, generate_dataset, split_dataset, Dataset, GenerateConfig, Manifest, SampleId, SequenceSample,
    SplitCounts, SplitRatios,
};
pub use episode::{simulate_episode, wrap_angle, EgoState, Episode, EpisodeConfig};
pub use grid::{render_grid, GridConfig, GridShape, OccupancyGrid};
pub use io::{load_dataset, load_manifest, load_split_targets, save_dataset, FORMAT_VERSION};

use std::path::PathBuf;

/// Lower bound of the forward-velocity band, km/h.
pub const V_MIN_KMH: f64 = 80.0;
/// Upper bound of the forward-velocity band, km/h.
pub const V_MAX_KMH: f64 = 130.0;

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("timestep {t} out of range for episode of {len} states")]
    Index { t: usize, len: usize },
    #[error("format error in {}: {reason}", file.display())]
    Format { file: PathBuf, reason: String },
    #[error("unsupported dataset format version {found} (this build reads version {supported})")]
    Version { found: u32, supported: u32 },
    #[error("cannot split an empty sample list")]
    EmptySamples,
    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, SimError>;
