//! On-disk forms: the `TMDL1` model checkpoint (text header, little-endian
//! f64 weights then bias) and the plain-CSV training log.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::model::{TrainSample, TraversabilityModel};
use super::TraversabilityError;

/// One JSON object per line: {"features":[...],"traversed":bool}.
pub fn save_samples(path: &Path, samples: &[TrainSample]) -> Result<(), TraversabilityError> {
    let mut w = BufWriter::new(File::create(path)?);
    for sample in samples {
        let line =
            serde_json::to_string(sample).map_err(|e| TraversabilityError::MalformedDataset {
                line: 0,
                message: e.to_string(),
            })?;
        writeln!(w, "{line}")?;
    }
    Ok(())
}

pub fn load_samples(path: &Path) -> Result<Vec<TrainSample>, TraversabilityError> {
    let r = BufReader::new(File::open(path)?);
    let mut samples = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let sample: TrainSample =
            serde_json::from_str(&line).map_err(|e| TraversabilityError::MalformedDataset {
                line: i + 1,
                message: e.to_string(),
            })?;
        samples.push(sample);
    }
    Ok(samples)
}

/// `TMDL1` layout: magic line; feature-count line; little-endian f64 payload
/// of the weights followed by the bias.
pub fn save_model(path: &Path, model: &TraversabilityModel) -> Result<(), TraversabilityError> {
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "TMDL1\n{}\n", model.feature_dim())?;
    for v in model.weights().iter().chain(std::iter::once(&model.bias())) {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn load_model(path: &Path) -> Result<TraversabilityModel, TraversabilityError> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    let mut lines_end = 0;
    let mut lines = Vec::with_capacity(2);
    for _ in 0..2 {
        let pos = bytes[lines_end..]
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| TraversabilityError::MalformedCheckpoint("header ends early".into()))?;
        let line = std::str::from_utf8(&bytes[lines_end..lines_end + pos])
            .map_err(|_| TraversabilityError::MalformedCheckpoint("header is not UTF-8".into()))?;
        lines.push(line.to_owned());
        lines_end += pos + 1;
    }
    if lines[0] != "TMDL1" {
        return Err(TraversabilityError::MalformedCheckpoint(format!(
            "expected magic TMDL1, found {:?}",
            lines[0]
        )));
    }
    let dim: usize = lines[1].trim().parse().map_err(|_| {
        TraversabilityError::MalformedCheckpoint(format!("bad feature count {:?}", lines[1]))
    })?;
    let payload = &bytes[lines_end..];
    if payload.len() != (dim + 1) * 8 {
        return Err(TraversabilityError::MalformedCheckpoint(format!(
            "payload holds {} bytes, header declares {}",
            payload.len(),
            (dim + 1) * 8
        )));
    }
    let values: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(TraversabilityError::MalformedCheckpoint(
            "non-finite parameter".into(),
        ));
    }
    Ok(TraversabilityModel::new(
        values[..dim].to_vec(),
        values[dim],
    ))
}

/// Writes the per-epoch loss curve as `epoch,mean_loss` rows (1-based
/// epochs).
pub fn write_training_log(path: &Path, losses: &[f64]) -> Result<(), TraversabilityError> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "epoch,mean_loss")?;
    for (i, loss) in losses.iter().enumerate() {
        writeln!(w, "{},{}", i + 1, loss)?;
    }
    Ok(())
}
