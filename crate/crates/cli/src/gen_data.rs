use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use evotraj::simdata::{generate_dataset, save_dataset, GenerateConfig, GridConfig, GridShape, Manifest};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GenDataArgs {
    pub episodes: usize,
    pub tau: usize,
    pub seed: u64,
    pub stride: usize,
    pub steps: usize,
    pub lane_changes: usize,
    pub grid: GridShape,
    pub out: PathBuf,
}

impl Default for GenDataArgs {
    fn default() -> Self {
        Self {
            episodes: 10,
            tau: 5,
            seed: 0,
            stride: 2,
            steps: 40,
            lane_changes: 1,
            grid: GridShape::DESK,
            out: PathBuf::from("data"),
        }
    }
}

/// Parses `WxHxC`.
pub fn parse_grid(s: &str) -> Result<GridShape> {
    let parts: Vec<usize> = s
        .split('x')
        .map(|p| p.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| CliError::Usage(format!("grid `{s}`: {e}")))?;
    match parts[..] {
        [w, h, c] => Ok(GridShape::new(w, h, c)),
        _ => Err(CliError::Usage(format!("grid `{s}`: expected WxHxC"))),
    }
}

pub fn manifest_sha256(dir: &Path) -> Result<String> {
    let path = dir.join("manifest.json");
    let bytes = std::fs::read(&path).map_err(|e| CliError::io(&path, e))?;
    Ok(hex::encode(Sha256::digest(bytes)))
}

pub fn summary(m: &Manifest, hash: &str) -> String {
    format!(
        "episodes {} tau {} stride {} grid {}x{}x{} dt {}\ntrain {} val {} test {}\nmanifest sha256 {hash}",
        m.episodes, m.tau, m.stride, m.grid_w, m.grid_h, m.channels, m.dt, m.counts.train, m.counts.val, m.counts.test
    )
}

/// Generates and writes the dataset; returns the manifest and its hash.
pub fn run(args: &GenDataArgs) -> Result<(Manifest, String)> {
    let mut cfg = GenerateConfig {
        episodes: args.episodes,
        tau: args.tau,
        stride: args.stride,
        seed: args.seed,
        grid: GridConfig::with_shape(args.grid),
        ..GenerateConfig::default()
    };
    cfg.episode.steps = args.steps;
    cfg.episode.lane_changes = args.lane_changes;
    let ds = generate_dataset(&cfg)?;
    save_dataset(&ds, &args.out)?;
    let hash = manifest_sha256(&args.out)?;
    Ok((ds.manifest, hash))
}
