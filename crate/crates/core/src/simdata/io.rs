//! Dataset directory format.
//!
//! ```text
//! manifest.json
//! {train,val,test}.grids.f32    little-endian f32, samples × tau × h × w × c
//! {train,val,test}.targets.csv  header `sample_id,step,x,y`
//! ```

use std::fs;
use std::path::Path;
use std::sync::Arc;

use crate::fsutil::write_atomic;

use super::{Dataset, GridShape, Manifest, OccupancyGrid, Result, SampleId, SequenceSample, SimError};

pub const FORMAT_VERSION: u32 = 1;

const SPLITS: [&str; 3] = ["train", "val", "test"];

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SimError + '_ {
    move |source| SimError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn format_err(path: &Path, reason: impl Into<String>) -> SimError {
    SimError::Format {
        file: path.to_path_buf(),
        reason: reason.into(),
    }
}

pub fn save_dataset(dataset: &Dataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    for name in SPLITS {
        let samples = dataset.split(name).expect("known split");
        let mut grids = Vec::new();
        let mut csv = String::from("sample_id,step,x,y\n");
        for (i, s) in samples.iter().enumerate() {
            for g in &s.inputs {
                for v in &g.cells {
                    grids.extend_from_slice(&v.to_le_bytes());
                }
            }
            for (step, [x, y]) in s.targets.iter().enumerate() {
                csv.push_str(&format!("{i},{step},{x:?},{y:?}\n"));
            }
        }
        let gpath = dir.join(format!("{name}.grids.f32"));
        write_atomic(&gpath, &grids).map_err(io_err(&gpath))?;
        let tpath = dir.join(format!("{name}.targets.csv"));
        write_atomic(&tpath, csv.as_bytes()).map_err(io_err(&tpath))?;
    }
    let mpath = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&dataset.manifest).expect("manifest serialises");
    write_atomic(&mpath, json.as_bytes()).map_err(io_err(&mpath))?;
    Ok(())
}

pub fn load_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join("manifest.json");
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let raw: serde_json::Value = serde_json::from_str(&text).map_err(|e| format_err(&path, e.to_string()))?;
    let version = raw
        .get("format_version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| format_err(&path, "missing format_version"))?;
    if version != FORMAT_VERSION as u64 {
        return Err(SimError::Version {
            found: version as u32,
            supported: FORMAT_VERSION,
        });
    }
    let manifest: Manifest = serde_json::from_value(raw).map_err(|e| format_err(&path, e.to_string()))?;
    for (name, count, ids) in [
        ("train", manifest.counts.train, &manifest.samples.train),
        ("val", manifest.counts.val, &manifest.samples.val),
        ("test", manifest.counts.test, &manifest.samples.test),
    ] {
        if ids.len() != count {
            return Err(format_err(
                &path,
                format!("{name} count {count} does not match {} listed samples", ids.len()),
            ));
        }
    }
    if manifest.tau == 0 || manifest.grid_shape().is_empty() {
        return Err(format_err(&path, "tau and grid dimensions must be positive"));
    }
    Ok(manifest)
}

fn read_targets(path: &Path, count: usize, tau: usize) -> Result<Vec<Vec<[f64; 2]>>> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut lines = text.lines();
    if lines.next() != Some("sample_id,step,x,y") {
        return Err(format_err(path, "missing `sample_id,step,x,y` header"));
    }
    let mut out = vec![Vec::with_capacity(tau); count];
    let mut rows = 0usize;
    for (lineno, line) in lines.enumerate() {
        let bad = |why: &str| format_err(path, format!("line {}: {why}", lineno + 2));
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(bad("expected 4 fields"));
        }
        let id: usize = fields[0].parse().map_err(|_| bad("bad sample_id"))?;
        let step: usize = fields[1].parse().map_err(|_| bad("bad step"))?;
        let x: f64 = fields[2].parse().map_err(|_| bad("bad x"))?;
        let y: f64 = fields[3].parse().map_err(|_| bad("bad y"))?;
        if id != rows / tau || step != rows % tau || id >= count {
            return Err(bad("rows out of order or beyond manifest count"));
        }
        out[id].push([x, y]);
        rows += 1;
    }
    if rows != count * tau {
        return Err(format_err(
            path,
            format!("expected {} target rows, found {rows}", count * tau),
        ));
    }
    Ok(out)
}

fn read_grids(path: &Path, count: usize, tau: usize, shape: GridShape) -> Result<Vec<Vec<Arc<OccupancyGrid>>>> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let expected = count * tau * shape.len() * 4;
    if bytes.len() != expected {
        return Err(format_err(
            path,
            format!(
                "truncated or oversized grid file: {} bytes, expected {expected}",
                bytes.len()
            ),
        ));
    }
    let mut values = bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]));
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let mut frames = Vec::with_capacity(tau);
        for _ in 0..tau {
            let cells: Vec<f32> = values.by_ref().take(shape.len()).collect();
            let grid = OccupancyGrid::from_cells(shape, cells).map_err(|e| format_err(path, e.to_string()))?;
            frames.push(Arc::new(grid));
        }
        out.push(frames);
    }
    Ok(out)
}

fn split_meta<'a>(m: &'a Manifest, name: &str) -> (usize, &'a [SampleId]) {
    match name {
        "train" => (m.counts.train, &m.samples.train),
        "val" => (m.counts.val, &m.samples.val),
        _ => (m.counts.test, &m.samples.test),
    }
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let manifest = load_manifest(dir)?;
    let mut splits = Vec::with_capacity(3);
    for name in SPLITS {
        let (count, ids) = split_meta(&manifest, name);
        let targets = read_targets(&dir.join(format!("{name}.targets.csv")), count, manifest.tau)?;
        let grids = read_grids(
            &dir.join(format!("{name}.grids.f32")),
            count,
            manifest.tau,
            manifest.grid_shape(),
        )?;
        splits.push(
            ids.iter()
                .zip(grids)
                .zip(targets)
                .map(|((id, inputs), targets)| SequenceSample {
                    id: *id,
                    inputs,
                    targets,
                })
                .collect::<Vec<_>>(),
        );
    }
    let test = splits.pop().unwrap();
    let val = splits.pop().unwrap();
    let train = splits.pop().unwrap();
    Ok(Dataset {
        train,
        val,
        test,
        manifest,
    })
}

/// Reads only the manifest and the targets of one split.
pub fn load_split_targets(dir: &Path, split: &str) -> Result<(Manifest, Vec<(SampleId, Vec<[f64; 2]>)>)> {
    let manifest = load_manifest(dir)?;
    if !SPLITS.contains(&split) {
        return Err(SimError::Config(format!("unknown split `{split}`")));
    }
    let (count, ids) = split_meta(&manifest, split);
    let targets = read_targets(&dir.join(format!("{split}.targets.csv")), count, manifest.tau)?;
    let pairs = ids.iter().copied().zip(targets).collect();
    Ok((manifest, pairs))
}
