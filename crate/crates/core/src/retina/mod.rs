//! Retina-style preprocessing and the spike codec: difference-of-Gaussians
//! on/off filtering, minimum-intensity cutoff, latency coding and first-spike
//! decoding.

mod spikes;

pub use spikes::{read_spike_dump, write_spike_dump, SpikeEvent, SpikingTensor};

use thiserror::Error;

use crate::video::{Frame, VideoTensor};

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("invalid DoG parameters: {0}")]
    InvalidParams(String),
    #[error("event out of bounds: {0}")]
    EventOutOfBounds(String),
    #[error("duplicate event at {0}")]
    DuplicateEvent(String),
    #[error("bad spike dump: {0}")]
    Dump(String),
}

/// On-center/off-center filter parameters. The cutoff is a minimum pixel
/// intensity on the usual 0–255 scale, applied after normalization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DoGParams {
    pub size: usize,
    pub sigma1: f64,
    pub sigma2: f64,
    pub cutoff: f64,
}

impl Default for DoGParams {
    fn default() -> Self {
        Self { size: 7, sigma1: 1.0, sigma2: 4.0, cutoff: 0.0 }
    }
}

impl DoGParams {
    pub fn validate(&self) -> Result<(), CodecError> {
        if self.size < 3 || self.size % 2 == 0 {
            return Err(CodecError::InvalidParams(format!(
                "kernel size must be odd and >= 3, got {}",
                self.size
            )));
        }
        if !(self.sigma1 > 0.0 && self.sigma2 > 0.0 && self.sigma1 < self.sigma2) {
            return Err(CodecError::InvalidParams(format!(
                "need 0 < sigma1 < sigma2, got {} and {}",
                self.sigma1, self.sigma2
            )));
        }
        if !(0.0..=255.0).contains(&self.cutoff) {
            return Err(CodecError::InvalidParams(format!(
                "cutoff must be in [0, 255], got {}",
                self.cutoff
            )));
        }
        Ok(())
    }
}

/// `size`x`size` Gaussian normalized to unit sum over its support.
pub fn gaussian_kernel(size: usize, sigma: f64) -> Vec<f64> {
    let half = (size / 2) as isize;
    let mut k = Vec::with_capacity(size * size);
    for i in -half..=half {
        for j in -half..=half {
            k.push((-((i * i + j * j) as f64) / (2.0 * sigma * sigma)).exp());
        }
    }
    let sum: f64 = k.iter().sum();
    for v in &mut k {
        *v /= sum;
    }
    k
}

/// Difference of two unit-sum Gaussians; entries sum to zero.
pub fn build_dog_kernel(params: &DoGParams) -> Result<Vec<f64>, CodecError> {
    params.validate()?;
    let g1 = gaussian_kernel(params.size, params.sigma1);
    let g2 = gaussian_kernel(params.size, params.sigma2);
    Ok(g1.iter().zip(&g2).map(|(a, b)| a - b).collect())
}

/// On-center/off-center filtering of one frame. The raw response is split
/// into its positive (on) and negative (off) parts, both divided by the
/// frame's max absolute response so latency coding spans the full range,
/// then clipped to [0, 1]. Borders replicate the edge pixel; output dims
/// equal input dims. The kernel is accumulated against the center-pixel
/// difference so constant regions respond with an exact zero instead of
/// summation noise that the normalization would blow up.
pub fn dog_filter(frame: &Frame, params: &DoGParams) -> Result<(Frame, Frame), CodecError> {
    let kernel = build_dog_kernel(params)?;
    let (w, h) = (frame.width(), frame.height());
    let half = (params.size / 2) as isize;
    let mut response = vec![0.0f64; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let center = frame.get(x as usize, y as usize) as f64;
            let mut acc = 0.0f64;
            for ky in -half..=half {
                let sy = (y + ky).clamp(0, h as isize - 1) as usize;
                for kx in -half..=half {
                    let sx = (x + kx).clamp(0, w as isize - 1) as usize;
                    let kv = kernel[((ky + half) * params.size as isize + (kx + half)) as usize];
                    acc += kv * (frame.get(sx, sy) as f64 - center);
                }
            }
            response[y as usize * w + x as usize] = acc;
        }
    }
    let max_abs = response.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let scale = if max_abs > 0.0 { 1.0 / max_abs } else { 0.0 };
    let mut on = Frame::zeros(w, h);
    let mut off = Frame::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            let v = response[y * w + x] * scale;
            on.set(x, y, (v.max(0.0) as f32).clamp(0.0, 1.0));
            off.set(x, y, ((-v).max(0.0) as f32).clamp(0.0, 1.0));
        }
    }
    Ok((on, off))
}

/// Zero out values whose 0–255 intensity falls below `theta_min`.
pub fn apply_cutoff(frame: &Frame, theta_min: f64) -> Frame {
    let mut out = frame.clone();
    for v in out.data_mut() {
        if (*v as f64) * 255.0 < theta_min {
            *v = 0.0;
        }
    }
    out
}

/// Full retina preprocessing of a clip: per input plane, DoG on/off
/// filtering plus cutoff. Input channel `c` maps to output channels `2c`
/// (on) and `2c + 1` (off).
pub fn dog_preprocess_clip(
    clip: &VideoTensor,
    params: &DoGParams,
) -> Result<VideoTensor, CodecError> {
    params.validate()?;
    let mut out =
        VideoTensor::zeros(clip.width(), clip.height(), clip.channels() * 2, clip.temporal_depth());
    for n in 0..clip.temporal_depth() {
        for c in 0..clip.channels() {
            let plane = clip.plane(c, n);
            let (on, off) = dog_filter(&plane, params)?;
            let on = apply_cutoff(&on, params.cutoff);
            let off = apply_cutoff(&off, params.cutoff);
            for y in 0..clip.height() {
                for x in 0..clip.width() {
                    out.set(x, y, 2 * c, n, on.get(x, y));
                    out.set(x, y, 2 * c + 1, n, off.get(x, y));
                }
            }
        }
    }
    Ok(out)
}

/// Latency coding: a value `x > 0` becomes one spike at `(1 - x) *
/// t_exposition`; zero values stay silent.
pub fn latency_encode(tensor: &VideoTensor, t_exposition: f64) -> SpikingTensor {
    let mut events = Vec::new();
    for n in 0..tensor.temporal_depth() {
        for c in 0..tensor.channels() {
            for y in 0..tensor.height() {
                for x in 0..tensor.width() {
                    let v = tensor.get(x, y, c, n) as f64;
                    if v > 0.0 {
                        events.push(SpikeEvent {
                            x: x as u32,
                            y: y as u32,
                            z: n as u32,
                            c: c as u32,
                            t: (1.0 - v) * t_exposition,
                        });
                    }
                }
            }
        }
    }
    SpikingTensor::from_events(
        tensor.width(),
        tensor.height(),
        tensor.channels(),
        tensor.temporal_depth(),
        events,
    )
    .expect("encoded events are in bounds and unique by construction")
}

/// Inverse of latency coding: the first (only) spike per coordinate decodes
/// to `1 - t / t_exposition`; silent coordinates decode to zero.
pub fn decode_first_spike(spikes: &SpikingTensor, t_exposition: f64) -> VideoTensor {
    let mut out = VideoTensor::zeros(
        spikes.width(),
        spikes.height(),
        spikes.channels(),
        spikes.temporal_depth(),
    );
    for e in spikes.events() {
        let v = (1.0 - e.t / t_exposition).clamp(0.0, 1.0) as f32;
        out.set(e.x as usize, e.y as usize, e.c as usize, e.z as usize, v);
    }
    out
}
