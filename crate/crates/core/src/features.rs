//! Pooling, flattening and fusion of decoded feature maps.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::ops::Range;
use std::path::Path;

use thiserror::Error;

use crate::video::Frame;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("fusion error: {0}")]
    Fusion(String),
    #[error("bad feature file: {0}")]
    Format(String),
    #[error("io error on {0}: {1}")]
    Io(String, std::io::Error),
}

/// Pooling budget: spatial target grid and temporal group count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoolSpec {
    pub grid_w: usize,
    pub grid_h: usize,
    /// 1 collapses all frames into one map, 2 keeps two contiguous halves.
    pub temporal: usize,
}

impl Default for PoolSpec {
    fn default() -> Self {
        Self { grid_w: 20, grid_h: 20, temporal: 1 }
    }
}

/// Pooled, flattened, possibly fused descriptor with stream provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f32>,
    pub provenance: Vec<(String, Range<usize>)>,
}

impl FeatureVector {
    pub fn new(stream: &str, values: Vec<f32>) -> Self {
        let len = values.len();
        Self { values, provenance: vec![(stream.to_string(), 0..len)] }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// The slice belonging to one stream, if present.
    pub fn stream_slice(&self, stream: &str) -> Option<&[f32]> {
        self.provenance
            .iter()
            .find(|(name, _)| name == stream)
            .map(|(_, range)| &self.values[range.clone()])
    }
}

/// Cell boundaries partitioning `len` into `cells` near-equal spans; the
/// last `len % cells` cells take the extra pixel.
fn cell_bounds(len: usize, cells: usize) -> Vec<Range<usize>> {
    let base = len / cells;
    let rem = len % cells;
    let mut out = Vec::with_capacity(cells);
    let mut start = 0;
    for c in 0..cells {
        let size = base + usize::from(c >= cells - rem);
        out.push(start..start + size);
        start += size;
    }
    out
}

/// Sum-pool a map onto the target grid. Inputs smaller than the grid pass
/// through unchanged with a warning flag.
pub fn sum_pool_spatial(map: &Frame, spec: &PoolSpec) -> (Frame, bool) {
    if map.width() < spec.grid_w || map.height() < spec.grid_h {
        return (map.clone(), true);
    }
    let xb = cell_bounds(map.width(), spec.grid_w);
    let yb = cell_bounds(map.height(), spec.grid_h);
    let mut out = Frame::zeros(spec.grid_w, spec.grid_h);
    for (gy, yr) in yb.iter().enumerate() {
        for (gx, xr) in xb.iter().enumerate() {
            let mut acc = 0.0f32;
            for y in yr.clone() {
                for x in xr.clone() {
                    acc += map.get(x, y);
                }
            }
            out.set(gx, gy, acc);
        }
    }
    (out, false)
}

/// Sum frames within `temporal` contiguous near-equal groups (earlier groups
/// absorb the remainder). Degenerate splits leave trailing groups as zero
/// maps and set the warning flag.
pub fn sum_pool_temporal(maps: &[Frame], temporal: usize) -> (Vec<Frame>, bool) {
    assert!(!maps.is_empty(), "temporal pooling needs at least one frame");
    let (w, h) = (maps[0].width(), maps[0].height());
    let n = maps.len();
    let base = n / temporal;
    let rem = n % temporal;
    let mut out = Vec::with_capacity(temporal);
    let mut warned = false;
    let mut start = 0;
    for g in 0..temporal {
        let size = base + usize::from(g < rem);
        let mut acc = Frame::zeros(w, h);
        for m in &maps[start..start + size] {
            for (a, v) in acc.data_mut().iter_mut().zip(m.data()) {
                *a += v;
            }
        }
        if size == 0 {
            warned = true;
        }
        out.push(acc);
        start += size;
    }
    (out, warned)
}

/// Flatten pooled maps (indexed `[filter][time]`) in (x, y, t, filter)
/// order: x fastest, filter slowest.
pub fn flatten(pooled: &[Vec<Frame>], stream: &str) -> FeatureVector {
    let mut values = Vec::new();
    for per_filter in pooled {
        for map in per_filter {
            values.extend_from_slice(map.data());
        }
    }
    FeatureVector::new(stream, values)
}

fn l2_normalized(values: &[f32]) -> Vec<f32> {
    let norm = values.iter().map(|v| (*v as f64) * (*v as f64)).sum::<f64>().sqrt();
    if norm > 0.0 {
        values.iter().map(|v| (*v as f64 / norm) as f32).collect()
    } else {
        values.to_vec()
    }
}

/// Concatenate two stream vectors, each L2-normalized first (switchable
/// off); provenance records both slices in order.
pub fn fuse_concat(
    a: &FeatureVector,
    b: &FeatureVector,
    l2_normalize: bool,
) -> Result<FeatureVector, FeatureError> {
    if a.is_empty() || b.is_empty() {
        return Err(FeatureError::Fusion("cannot fuse an empty feature vector".into()));
    }
    let mut values = if l2_normalize { l2_normalized(&a.values) } else { a.values.clone() };
    let bvals = if l2_normalize { l2_normalized(&b.values) } else { b.values.clone() };
    let offset = values.len();
    values.extend_from_slice(&bvals);
    let mut provenance = a.provenance.clone();
    for (name, range) in &b.provenance {
        provenance.push((name.clone(), range.start + offset..range.end + offset));
    }
    Ok(FeatureVector { values, provenance })
}

pub const FEATURE_MAGIC: &[u8; 8] = b"FTRVEC01";

/// Feature file: magic, slice table (count, then per slice name length,
/// name bytes, start, length), total length, then f32 little-endian values.
pub fn write_features(path: &Path, fv: &FeatureVector) -> Result<(), FeatureError> {
    let file = File::create(path).map_err(|e| FeatureError::Io(path.display().to_string(), e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e: std::io::Error| FeatureError::Io(path.display().to_string(), e);
    w.write_all(FEATURE_MAGIC).map_err(io_err)?;
    w.write_all(&(fv.provenance.len() as u32).to_le_bytes()).map_err(io_err)?;
    for (name, range) in &fv.provenance {
        w.write_all(&(name.len() as u32).to_le_bytes()).map_err(io_err)?;
        w.write_all(name.as_bytes()).map_err(io_err)?;
        w.write_all(&(range.start as u32).to_le_bytes()).map_err(io_err)?;
        w.write_all(&(range.len() as u32).to_le_bytes()).map_err(io_err)?;
    }
    w.write_all(&(fv.values.len() as u32).to_le_bytes()).map_err(io_err)?;
    for v in &fv.values {
        w.write_all(&v.to_le_bytes()).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

pub fn read_features(path: &Path) -> Result<FeatureVector, FeatureError> {
    let file = File::open(path).map_err(|e| FeatureError::Io(path.display().to_string(), e))?;
    let mut r = BufReader::new(file);
    let bad = |msg: &str| FeatureError::Format(format!("{}: {msg}", path.display()));
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|_| bad("truncated magic"))?;
    if &magic != FEATURE_MAGIC {
        return Err(bad("bad magic bytes"));
    }
    let mut u32buf = [0u8; 4];
    r.read_exact(&mut u32buf).map_err(|_| bad("truncated slice count"))?;
    let n_slices = u32::from_le_bytes(u32buf) as usize;
    if n_slices > 1024 {
        return Err(bad("implausible slice count"));
    }
    let mut provenance = Vec::with_capacity(n_slices);
    for _ in 0..n_slices {
        r.read_exact(&mut u32buf).map_err(|_| bad("truncated name length"))?;
        let name_len = u32::from_le_bytes(u32buf) as usize;
        if name_len > 4096 {
            return Err(bad("implausible name length"));
        }
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name).map_err(|_| bad("truncated name"))?;
        let name = String::from_utf8(name).map_err(|_| bad("name is not utf-8"))?;
        r.read_exact(&mut u32buf).map_err(|_| bad("truncated slice start"))?;
        let start = u32::from_le_bytes(u32buf) as usize;
        r.read_exact(&mut u32buf).map_err(|_| bad("truncated slice length"))?;
        let len = u32::from_le_bytes(u32buf) as usize;
        provenance.push((name, start..start + len));
    }
    r.read_exact(&mut u32buf).map_err(|_| bad("truncated value count"))?;
    let count = u32::from_le_bytes(u32buf) as usize;
    let mut values = Vec::with_capacity(count);
    for _ in 0..count {
        r.read_exact(&mut u32buf).map_err(|_| bad("truncated values"))?;
        values.push(f32::from_le_bytes(u32buf));
    }
    for (_, range) in &provenance {
        if range.end > values.len() {
            return Err(bad("slice range exceeds value count"));
        }
    }
    Ok(FeatureVector { values, provenance })
}
