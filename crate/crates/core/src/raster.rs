//! Georeferenced rasters: the global traversability probability map and the
//! per-cell feature grid it is predicted from.
//!
//! The world frame is a local metric frame (meters). Cell (0, 0) has its
//! corner at `(origin_x, origin_y)`; column index grows with x, row index
//! with y. Probability lookups use the cell containing the point (floor
//! convention, no interpolation) so scores are exactly reproducible.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::geom::WorldPoint;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("point ({x}, {y}) lies outside the raster extent")]
    OutOfBounds { x: f64, y: f64 },
    #[error("malformed raster header: {0}")]
    MalformedHeader(String),
    #[error("cell {index} holds {value}, outside [0, 1]")]
    ValueOutOfRange { index: usize, value: f32 },
    #[error("payload holds {actual} bytes, header declares {expected}")]
    TruncatedData { expected: usize, actual: usize },
    #[error("feature vector has {got} channels, raster declares {expected}")]
    ChannelMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Row/column index into a raster, row 0 at the origin edge.
pub type RasterIndex = (usize, usize);

/// Georeference of a raster: world pose of the grid plus its shape.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoRef {
    /// World x of the corner of cell (0, 0), meters.
    pub origin_x: f64,
    /// World y of the corner of cell (0, 0), meters.
    pub origin_y: f64,
    /// Cell edge length, meters per cell. Strictly positive.
    pub resolution: f64,
    /// Number of columns.
    pub width: usize,
    /// Number of rows.
    pub height: usize,
}

impl GeoRef {
    pub fn new(
        origin_x: f64,
        origin_y: f64,
        resolution: f64,
        width: usize,
        height: usize,
    ) -> Self {
        assert!(resolution > 0.0, "resolution must be positive");
        assert!(width >= 1 && height >= 1, "raster must have at least one cell");
        Self {
            origin_x,
            origin_y,
            resolution,
            width,
            height,
        }
    }

    pub fn cell_count(&self) -> usize {
        self.width * self.height
    }

    /// Cell containing `point`. Points exactly on a boundary belong to the
    /// cell on the larger-index side (floor convention); the far edges of the
    /// extent are outside.
    pub fn world_to_cell(&self, point: &WorldPoint) -> Result<RasterIndex, RasterError> {
        let col = (point.x - self.origin_x) / self.resolution;
        let row = (point.y - self.origin_y) / self.resolution;
        let (ci, ri) = (col.floor(), row.floor());
        if ci < 0.0 || ri < 0.0 || ci >= self.width as f64 || ri >= self.height as f64 {
            return Err(RasterError::OutOfBounds {
                x: point.x,
                y: point.y,
            });
        }
        Ok((ri as usize, ci as usize))
    }

    /// World coordinates of the center of cell `(row, col)`.
    pub fn cell_center(&self, row: usize, col: usize) -> WorldPoint {
        WorldPoint::new(
            self.origin_x + (col as f64 + 0.5) * self.resolution,
            self.origin_y + (row as f64 + 0.5) * self.resolution,
        )
    }

    pub fn contains(&self, point: &WorldPoint) -> bool {
        self.world_to_cell(point).is_ok()
    }
}

/// Pixel probability map of traversability: one value in [0, 1] per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityRaster {
    georef: GeoRef,
    cells: Vec<f32>,
}

impl ProbabilityRaster {
    pub fn new(georef: GeoRef, cells: Vec<f32>) -> Result<Self, RasterError> {
        if cells.len() != georef.cell_count() {
            return Err(RasterError::TruncatedData {
                expected: georef.cell_count(),
                actual: cells.len(),
            });
        }
        for (index, &value) in cells.iter().enumerate() {
            if !(0.0..=1.0).contains(&value) {
                return Err(RasterError::ValueOutOfRange { index, value });
            }
        }
        Ok(Self { georef, cells })
    }

    /// Uniform raster of a single value, handy for fixtures.
    pub fn uniform(georef: GeoRef, value: f32) -> Result<Self, RasterError> {
        Self::new(georef, vec![value; georef.cell_count()])
    }

    pub fn georef(&self) -> &GeoRef {
        &self.georef
    }

    pub fn cells(&self) -> &[f32] {
        &self.cells
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.cells[row * self.georef.width + col]
    }

    /// Probability at `point` using nearest-cell (containing-cell) lookup.
    pub fn sample_prob(&self, point: &WorldPoint) -> Result<f32, RasterError> {
        let (row, col) = self.georef.world_to_cell(point)?;
        Ok(self.get(row, col))
    }

    /// Copy of this raster with every cell inside any of the given disks set
    /// to 0. Used to fold currently observed dynamic obstacles into the map
    /// before scoring.
    pub fn with_zeroed_disks(&self, disks: &[(WorldPoint, f64)]) -> ProbabilityRaster {
        let mut cells = self.cells.clone();
        let g = &self.georef;
        for (center, radius) in disks {
            let r = radius.max(0.0);
            let min_col = ((center.x - r - g.origin_x) / g.resolution).floor().max(0.0) as usize;
            let max_col = (((center.x + r - g.origin_x) / g.resolution).floor() as isize)
                .clamp(0, g.width as isize - 1) as usize;
            let min_row = ((center.y - r - g.origin_y) / g.resolution).floor().max(0.0) as usize;
            let max_row = (((center.y + r - g.origin_y) / g.resolution).floor() as isize)
                .clamp(0, g.height as isize - 1) as usize;
            for row in min_row..=max_row.min(g.height - 1) {
                for col in min_col..=max_col {
                    let c = g.cell_center(row, col);
                    if c.distance(center) <= r {
                        cells[row * g.width + col] = 0.0;
                    }
                }
            }
        }
        ProbabilityRaster {
            georef: self.georef,
            cells,
        }
    }

    /// Write the `PRAV1` container: three text header lines followed by
    /// row-major little-endian f32 cells, row 0 first.
    pub fn save(&self, path: &Path) -> Result<(), RasterError> {
        let mut f = File::create(path)?;
        write_prav(self, &mut f)
    }

    pub fn load(path: &Path) -> Result<Self, RasterError> {
        let mut bytes = Vec::new();
        File::open(path)?.read_to_end(&mut bytes)?;
        read_prav(&bytes)
    }

    /// `PRAV1` container as bytes, for embedding in bundle files.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        write_prav(self, &mut out).expect("writing to memory cannot fail");
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, RasterError> {
        read_prav(bytes)
    }
}

fn write_prav(raster: &ProbabilityRaster, w: &mut impl Write) -> Result<(), RasterError> {
    let g = raster.georef();
    write!(
        w,
        "PRAV1\n{} {}\n{} {} {}\n",
        g.width, g.height, g.origin_x, g.origin_y, g.resolution
    )?;
    for &cell in raster.cells() {
        w.write_all(&cell.to_le_bytes())?;
    }
    Ok(())
}

fn read_prav(bytes: &[u8]) -> Result<ProbabilityRaster, RasterError> {
    let (lines, payload) = split_header(bytes, 3)?;
    if lines[0] != "PRAV1" {
        return Err(RasterError::MalformedHeader(format!(
            "expected magic PRAV1, found {:?}",
            lines[0]
        )));
    }
    let (width, height) = parse_dims(lines[1])?;
    let georef = parse_georef(lines[2], width, height)?;
    let cells = parse_f32_payload(payload, georef.cell_count())?;
    ProbabilityRaster::new(georef, cells)
}

/// Multi-channel per-cell feature grid, the input of the traversability
/// predictor. Channels are interleaved per cell in the payload.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRaster {
    georef: GeoRef,
    channels: usize,
    values: Vec<f32>,
}

impl FeatureRaster {
    pub fn new(georef: GeoRef, channels: usize, values: Vec<f32>) -> Result<Self, RasterError> {
        let expected = georef.cell_count() * channels;
        if channels == 0 || values.len() != expected {
            return Err(RasterError::TruncatedData {
                expected,
                actual: values.len(),
            });
        }
        Ok(Self {
            georef,
            channels,
            values,
        })
    }

    pub fn georef(&self) -> &GeoRef {
        &self.georef
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    /// Feature vector of cell `(row, col)`.
    pub fn features_at(&self, row: usize, col: usize) -> &[f32] {
        let base = (row * self.georef.width + col) * self.channels;
        &self.values[base..base + self.channels]
    }

    /// Write the `FRAS1` container; same layout as `PRAV1` with a channel
    /// count on the dimension line and no [0, 1] restriction on values.
    pub fn save(&self, path: &Path) -> Result<(), RasterError> {
        let mut f = File::create(path)?;
        self.write_fras(&mut f)
    }

    fn write_fras(&self, w: &mut impl Write) -> Result<(), RasterError> {
        let g = &self.georef;
        write!(
            w,
            "FRAS1\n{} {} {}\n{} {} {}\n",
            g.width, g.height, self.channels, g.origin_x, g.origin_y, g.resolution
        )?;
        for &v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    /// `FRAS1` container as bytes, for embedding in bundle files.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_fras(&mut out).expect("writing to memory cannot fail");
        out
    }

    pub fn load(path: &Path) -> Result<Self, RasterError> {
        let mut bytes = Vec::new();
        File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, RasterError> {
        let (lines, payload) = split_header(bytes, 3)?;
        if lines[0] != "FRAS1" {
            return Err(RasterError::MalformedHeader(format!(
                "expected magic FRAS1, found {:?}",
                lines[0]
            )));
        }
        let mut parts = lines[1].split_whitespace();
        let width = parse_usize(parts.next(), "width")?;
        let height = parse_usize(parts.next(), "height")?;
        let channels = parse_usize(parts.next(), "channels")?;
        if parts.next().is_some() {
            return Err(RasterError::MalformedHeader(
                "dimension line has trailing tokens".into(),
            ));
        }
        let georef = parse_georef(lines[2], width, height)?;
        let values = parse_f32_payload(payload, georef.cell_count() * channels)?;
        for (index, &v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(RasterError::ValueOutOfRange { index, value: v });
            }
        }
        FeatureRaster::new(georef, channels, values)
    }
}

fn split_header(bytes: &[u8], lines: usize) -> Result<(Vec<&str>, &[u8]), RasterError> {
    let mut out = Vec::with_capacity(lines);
    let mut rest = bytes;
    for _ in 0..lines {
        let pos = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| RasterError::MalformedHeader("header ends early".into()))?;
        let line = std::str::from_utf8(&rest[..pos])
            .map_err(|_| RasterError::MalformedHeader("header is not UTF-8".into()))?;
        out.push(line);
        rest = &rest[pos + 1..];
    }
    Ok((out, rest))
}

fn parse_usize(token: Option<&str>, name: &str) -> Result<usize, RasterError> {
    token
        .ok_or_else(|| RasterError::MalformedHeader(format!("missing {name}")))?
        .parse()
        .map_err(|_| RasterError::MalformedHeader(format!("unparseable {name}")))
}

fn parse_f64(token: Option<&str>, name: &str) -> Result<f64, RasterError> {
    let v: f64 = token
        .ok_or_else(|| RasterError::MalformedHeader(format!("missing {name}")))?
        .parse()
        .map_err(|_| RasterError::MalformedHeader(format!("unparseable {name}")))?;
    if !v.is_finite() {
        return Err(RasterError::MalformedHeader(format!("non-finite {name}")));
    }
    Ok(v)
}

fn parse_dims(line: &str) -> Result<(usize, usize), RasterError> {
    let mut parts = line.split_whitespace();
    let width = parse_usize(parts.next(), "width")?;
    let height = parse_usize(parts.next(), "height")?;
    if parts.next().is_some() {
        return Err(RasterError::MalformedHeader(
            "dimension line has trailing tokens".into(),
        ));
    }
    Ok((width, height))
}

fn parse_georef(line: &str, width: usize, height: usize) -> Result<GeoRef, RasterError> {
    let mut parts = line.split_whitespace();
    let origin_x = parse_f64(parts.next(), "origin_x")?;
    let origin_y = parse_f64(parts.next(), "origin_y")?;
    let resolution = parse_f64(parts.next(), "resolution")?;
    if parts.next().is_some() {
        return Err(RasterError::MalformedHeader(
            "georeference line has trailing tokens".into(),
        ));
    }
    if resolution <= 0.0 || width == 0 || height == 0 {
        return Err(RasterError::MalformedHeader(
            "resolution and dimensions must be positive".into(),
        ));
    }
    Ok(GeoRef::new(origin_x, origin_y, resolution, width, height))
}

fn parse_f32_payload(payload: &[u8], count: usize) -> Result<Vec<f32>, RasterError> {
    if payload.len() != count * 4 {
        return Err(RasterError::TruncatedData {
            expected: count * 4,
            actual: payload.len(),
        });
    }
    Ok(payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}
