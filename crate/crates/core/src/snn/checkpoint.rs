//! Versioned binary layer checkpoints: config block, weight tensor,
//! threshold vector and RNG state, all little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{HomeostasisParams, LayerConfig, SnnError, SpikingConvLayer, StdpParams};

pub const LAYER_MAGIC: &[u8; 8] = b"SNNLAYR1";
const VERSION: u32 = 1;

pub fn save_layer(path: &Path, layer: &SpikingConvLayer) -> Result<(), SnnError> {
    let file = File::create(path).map_err(|e| SnnError::Io(path.display().to_string(), e))?;
    let mut w = BufWriter::new(file);
    write_layer_to(&mut w, layer).map_err(|e| SnnError::Io(path.display().to_string(), e))
}

pub fn write_layer_to<W: Write>(w: &mut W, layer: &SpikingConvLayer) -> std::io::Result<()> {
    let c = layer.config();
    w.write_all(LAYER_MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    for v in [
        c.kernel_w,
        c.kernel_h,
        c.kernel_td,
        c.filters,
        c.stride_x,
        c.stride_y,
        c.stride_t,
        layer.in_channels(),
    ] {
        w.write_all(&(v as u32).to_le_bytes())?;
    }
    for v in [
        c.target_time,
        c.stdp.eta_w,
        c.stdp.tau,
        c.homeo.eta_th,
        c.homeo.th_min,
        c.homeo.init_mean,
        c.homeo.init_sd,
    ] {
        w.write_all(&v.to_le_bytes())?;
    }
    w.write_all(&(layer.weights().len() as u64).to_le_bytes())?;
    for v in layer.weights() {
        w.write_all(&v.to_le_bytes())?;
    }
    for v in layer.thresholds() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.write_all(&layer.rng().get_seed())?;
    w.write_all(&layer.rng().get_word_pos().to_le_bytes())?;
    w.flush()
}

pub fn load_layer(path: &Path) -> Result<SpikingConvLayer, SnnError> {
    let file = File::open(path).map_err(|e| SnnError::Io(path.display().to_string(), e))?;
    let mut r = BufReader::new(file);
    read_layer_from(&mut r)
}

pub fn read_layer_from<R: Read>(r: &mut R) -> Result<SpikingConvLayer, SnnError> {
    let bad = |msg: &str| SnnError::Checkpoint(msg.to_string());
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|_| bad("truncated magic"))?;
    if &magic != LAYER_MAGIC {
        return Err(bad("bad magic bytes"));
    }
    let mut u32buf = [0u8; 4];
    r.read_exact(&mut u32buf).map_err(|_| bad("truncated version"))?;
    let version = u32::from_le_bytes(u32buf);
    if version != VERSION {
        return Err(SnnError::Checkpoint(format!("unsupported version {version}")));
    }
    let mut read_u32 = || -> Result<usize, SnnError> {
        let mut buf = [0u8; 4];
        r.read_exact(&mut buf).map_err(|_| bad("truncated config"))?;
        Ok(u32::from_le_bytes(buf) as usize)
    };
    let kernel_w = read_u32()?;
    let kernel_h = read_u32()?;
    let kernel_td = read_u32()?;
    let filters = read_u32()?;
    let stride_x = read_u32()?;
    let stride_y = read_u32()?;
    let stride_t = read_u32()?;
    let in_channels = read_u32()?;
    let mut read_f64 = || -> Result<f64, SnnError> {
        let mut buf = [0u8; 8];
        r.read_exact(&mut buf).map_err(|_| bad("truncated config"))?;
        Ok(f64::from_le_bytes(buf))
    };
    let target_time = read_f64()?;
    let eta_w = read_f64()?;
    let tau = read_f64()?;
    let eta_th = read_f64()?;
    let th_min = read_f64()?;
    let init_mean = read_f64()?;
    let init_sd = read_f64()?;
    let config = LayerConfig {
        kernel_w,
        kernel_h,
        kernel_td,
        filters,
        stride_x,
        stride_y,
        stride_t,
        target_time,
        stdp: StdpParams { eta_w, tau },
        homeo: HomeostasisParams { eta_th, th_min, init_mean, init_sd },
    };
    let mut u64buf = [0u8; 8];
    r.read_exact(&mut u64buf).map_err(|_| bad("truncated weight count"))?;
    let count = u64::from_le_bytes(u64buf) as usize;
    let expected = kernel_w * kernel_h * kernel_td * in_channels * filters;
    if count != expected {
        return Err(SnnError::Checkpoint(format!(
            "weight count {count} does not match config ({expected})"
        )));
    }
    let mut weights = Vec::with_capacity(count);
    let mut f64buf = [0u8; 8];
    for _ in 0..count {
        r.read_exact(&mut f64buf).map_err(|_| bad("truncated weights"))?;
        weights.push(f64::from_le_bytes(f64buf));
    }
    let mut thresholds = Vec::with_capacity(filters);
    for _ in 0..filters {
        r.read_exact(&mut f64buf).map_err(|_| bad("truncated thresholds"))?;
        thresholds.push(f64::from_le_bytes(f64buf));
    }
    let mut seed = [0u8; 32];
    r.read_exact(&mut seed).map_err(|_| bad("truncated rng seed"))?;
    let mut posbuf = [0u8; 16];
    r.read_exact(&mut posbuf).map_err(|_| bad("truncated rng position"))?;
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_word_pos(u128::from_le_bytes(posbuf));
    SpikingConvLayer::from_parts(config, in_channels, weights, thresholds, rng)
}
