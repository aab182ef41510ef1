//! On-disk forms: JSON-lines trajectory datasets and the `NPRD1` predictor
//! checkpoint (text header with the layer sizes, little-endian f64 payload).

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::mlp::Mlp;
use super::train::MlpNoisePredictor;
use super::{ConditioningContext, DiffusionError, Trajectory};
use crate::geom::WorldPoint;

#[derive(Serialize, Deserialize)]
struct SampleRecord {
    patch: Vec<f64>,
    goal: [f64; 2],
    waypoints: Vec<[f64; 2]>,
}

/// One JSON object per line: {"patch":[...],"goal":[dx,dy],"waypoints":[[x,y],...]}.
pub fn save_dataset(
    path: &Path,
    samples: &[(ConditioningContext, Trajectory)],
) -> Result<(), DiffusionError> {
    let mut w = BufWriter::new(File::create(path)?);
    for (context, trajectory) in samples {
        let record = SampleRecord {
            patch: context.observation_features.clone(),
            goal: context.goal_offset,
            waypoints: trajectory.waypoints.clone(),
        };
        let line = serde_json::to_string(&record).map_err(|e| DiffusionError::MalformedDataset {
            line: 0,
            message: e.to_string(),
        })?;
        writeln!(w, "{line}")?;
    }
    Ok(())
}

/// Records are robot-centric, so the loaded pose estimate is the origin.
pub fn load_dataset(path: &Path) -> Result<Vec<(ConditioningContext, Trajectory)>, DiffusionError> {
    let r = BufReader::new(File::open(path)?);
    let mut samples = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: SampleRecord =
            serde_json::from_str(&line).map_err(|e| DiffusionError::MalformedDataset {
                line: i + 1,
                message: e.to_string(),
            })?;
        let context = ConditioningContext {
            observation_features: record.patch,
            goal_offset: record.goal,
            localization: WorldPoint::new(0.0, 0.0),
        };
        samples.push((context, Trajectory { waypoints: record.waypoints }));
    }
    Ok(samples)
}

/// `NPRD1` layout: magic line; "patch waypoints t_max" line; layer sizes
/// line; little-endian f64 payload holding the per-feature standardization
/// mean and scale (input-dim each) followed by the parameters in
/// `Mlp::to_flat` order.
pub fn save_predictor(path: &Path, predictor: &MlpNoisePredictor) -> Result<(), DiffusionError> {
    let mut w = BufWriter::new(File::create(path)?);
    let sizes: Vec<String> = predictor.mlp().sizes().iter().map(|s| s.to_string()).collect();
    write!(
        w,
        "NPRD1\n{} {} {}\n{}\n",
        predictor.patch_len(),
        predictor.n_waypoints_raw(),
        predictor.t_max(),
        sizes.join(" ")
    )?;
    for v in predictor
        .feature_mean()
        .iter()
        .chain(predictor.feature_scale())
        .chain(&predictor.mlp().to_flat())
    {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn load_predictor(path: &Path) -> Result<MlpNoisePredictor, DiffusionError> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    let (lines, payload) = split_header(&bytes, 3)?;
    if lines[0] != "NPRD1" {
        return Err(DiffusionError::MalformedCheckpoint(format!(
            "expected magic NPRD1, found {:?}",
            lines[0]
        )));
    }
    let meta: Vec<usize> = parse_usize_line(lines[1])?;
    if meta.len() != 3 {
        return Err(DiffusionError::MalformedCheckpoint(
            "metadata line needs patch, waypoint, and step counts".into(),
        ));
    }
    let (patch_len, n_waypoints, t_max) = (meta[0], meta[1], meta[2]);
    let sizes = parse_usize_line(lines[2])?;
    if sizes.len() < 2 {
        return Err(DiffusionError::MalformedCheckpoint(
            "need at least input and output layer sizes".into(),
        ));
    }
    let expected_in = 2 * n_waypoints + patch_len + 3;
    if sizes[0] != expected_in || *sizes.last().unwrap() != 2 * n_waypoints {
        return Err(DiffusionError::MalformedCheckpoint(format!(
            "layer sizes {sizes:?} inconsistent with patch {patch_len} and {n_waypoints} waypoints"
        )));
    }
    let param_count: usize = sizes.windows(2).map(|p| p[0] * p[1] + p[1]).sum();
    let total = 2 * sizes[0] + param_count;
    if payload.len() != total * 8 {
        return Err(DiffusionError::MalformedCheckpoint(format!(
            "payload holds {} bytes, header declares {}",
            payload.len(),
            total * 8
        )));
    }
    let flat: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if flat.iter().any(|v| !v.is_finite()) {
        return Err(DiffusionError::MalformedCheckpoint(
            "non-finite parameter".into(),
        ));
    }
    let feature_mean = flat[..sizes[0]].to_vec();
    let feature_scale = flat[sizes[0]..2 * sizes[0]].to_vec();
    if feature_scale.iter().any(|s| *s <= 0.0) {
        return Err(DiffusionError::MalformedCheckpoint(
            "non-positive feature scale".into(),
        ));
    }
    let mlp = Mlp::from_flat(&sizes, &flat[2 * sizes[0]..]);
    Ok(MlpNoisePredictor::from_parts(
        mlp,
        patch_len,
        n_waypoints,
        t_max,
        feature_mean,
        feature_scale,
    ))
}

impl MlpNoisePredictor {
    // NoisePredictor::n_waypoints requires the trait in scope; this keeps io
    // self-contained.
    fn n_waypoints_raw(&self) -> usize {
        use super::NoisePredictor;
        self.n_waypoints()
    }
}

fn split_header(bytes: &[u8], lines: usize) -> Result<(Vec<&str>, &[u8]), DiffusionError> {
    let mut out = Vec::with_capacity(lines);
    let mut rest = bytes;
    for _ in 0..lines {
        let pos = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| DiffusionError::MalformedCheckpoint("header ends early".into()))?;
        let line = std::str::from_utf8(&rest[..pos])
            .map_err(|_| DiffusionError::MalformedCheckpoint("header is not UTF-8".into()))?;
        out.push(line);
        rest = &rest[pos + 1..];
    }
    Ok((out, rest))
}

fn parse_usize_line(line: &str) -> Result<Vec<usize>, DiffusionError> {
    line.split_whitespace()
        .map(|tok| {
            tok.parse()
                .map_err(|_| DiffusionError::MalformedCheckpoint(format!("bad integer {tok:?}")))
        })
        .collect()
}
