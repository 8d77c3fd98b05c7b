//! Clip ingestion, frame sampling, resizing, dataset manifests and splits,
//! and the synthetic motion micro-datasets.

mod format;
mod manifest;
mod synth;
mod tensor;

pub use format::{read_clip, read_clip_from, write_clip, write_clip_to, CLIP_MAGIC};
pub use manifest::{
    make_splits, read_manifest, write_manifest, DatasetManifest, Sample, Split, SplitProtocol,
};
pub use synth::{generate_synthetic, SyntheticClass, SyntheticDataset, SynthSpec};
pub use tensor::{Frame, VideoTensor};

use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum VideoError {
    #[error("invalid tensor dims: {0}")]
    InvalidDims(String),
    #[error("value {0} outside [0,1]")]
    ValueRange(f32),
    #[error("empty input: no frames")]
    EmptyInput,
    #[error("unreadable frame {0}: {1}")]
    Ingest(String, String),
    #[error("manifest error: {0}")]
    Manifest(String),
    #[error("bad clip file: {0}")]
    Format(String),
    #[error("io error on {0}: {1}")]
    Io(String, std::io::Error),
}

/// Frame sampling and scaling protocol for one clip.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClipSpec {
    pub frames_per_clip: usize,
    /// Distance between selected source frames; 4 means "skip three".
    pub frame_stride: usize,
    pub spatial_scale: f64,
}

impl Default for ClipSpec {
    fn default() -> Self {
        Self { frames_per_clip: 10, frame_stride: 4, spatial_scale: 0.5 }
    }
}

impl ClipSpec {
    pub fn validate(&self) -> Result<(), VideoError> {
        if self.frames_per_clip < 1 || self.frame_stride < 1 {
            return Err(VideoError::InvalidDims(
                "frames_per_clip and frame_stride must be >= 1".into(),
            ));
        }
        if !(self.spatial_scale > 0.0 && self.spatial_scale <= 1.0) {
            return Err(VideoError::InvalidDims("spatial_scale must be in (0,1]".into()));
        }
        Ok(())
    }
}

/// Source frame indices for a clip: `k * stride` modulo the source length,
/// so short videos loop until `frames_per_clip` frames are collected.
pub fn sample_indices(source_len: usize, spec: &ClipSpec) -> Vec<usize> {
    (0..spec.frames_per_clip)
        .map(|k| (k * spec.frame_stride) % source_len)
        .collect()
}

/// Bilinear resize by `scale` (corner alignment off). Output dims are
/// `ceil(dim * scale)`. A frame with a 1-pixel dimension is returned
/// unchanged, flagged as a warning.
pub fn resize_scale(frame: &Frame, scale: f64) -> (Frame, bool) {
    if scale == 1.0 {
        return (frame.clone(), false);
    }
    if frame.width() < 2 || frame.height() < 2 {
        return (frame.clone(), true);
    }
    let out_w = ((frame.width() as f64 * scale).ceil() as usize).max(1);
    let out_h = ((frame.height() as f64 * scale).ceil() as usize).max(1);
    let ratio_x = frame.width() as f64 / out_w as f64;
    let ratio_y = frame.height() as f64 / out_h as f64;
    let mut out = Frame::zeros(out_w, out_h);
    for oy in 0..out_h {
        let sy = ((oy as f64 + 0.5) * ratio_y - 0.5).clamp(0.0, (frame.height() - 1) as f64);
        let y0 = sy.floor() as usize;
        let y1 = (y0 + 1).min(frame.height() - 1);
        let fy = (sy - y0 as f64) as f32;
        for ox in 0..out_w {
            let sx = ((ox as f64 + 0.5) * ratio_x - 0.5).clamp(0.0, (frame.width() - 1) as f64);
            let x0 = sx.floor() as usize;
            let x1 = (x0 + 1).min(frame.width() - 1);
            let fx = (sx - x0 as f64) as f32;
            let top = frame.get(x0, y0) * (1.0 - fx) + frame.get(x1, y0) * fx;
            let bot = frame.get(x0, y1) * (1.0 - fx) + frame.get(x1, y1) * fx;
            out.set(ox, oy, (top * (1.0 - fy) + bot * fy).clamp(0.0, 1.0));
        }
    }
    (out, false)
}

/// Halve both frame dimensions (bilinear, output dims `ceil(dim / 2)`).
pub fn resize_half(frame: &Frame) -> (Frame, bool) {
    resize_scale(frame, 0.5)
}

/// Load a clip from a source path: either a flat binary tensor file or a
/// directory of lossless frame images (sorted by file name). Frames are
/// grayscale-converted, sampled per `spec`, resized by `spec.spatial_scale`
/// and normalized to [0, 1].
pub fn load_clip(source: &Path, spec: &ClipSpec) -> Result<VideoTensor, VideoError> {
    spec.validate()?;
    let frames = if source.is_dir() {
        load_frame_dir(source)?
    } else {
        let tensor = read_clip(source)?;
        if tensor.channels() != 1 {
            return Err(VideoError::Format(format!(
                "clip source must be single-channel, got {} channels",
                tensor.channels()
            )));
        }
        (0..tensor.temporal_depth()).map(|n| tensor.plane(0, n)).collect()
    };
    if frames.is_empty() {
        return Err(VideoError::EmptyInput);
    }
    let picked: Vec<Frame> = sample_indices(frames.len(), spec)
        .into_iter()
        .map(|i| resize_scale(&frames[i], spec.spatial_scale).0)
        .collect();
    VideoTensor::from_frames(&picked)
}

/// Rec. 601 luminance from 8-bit RGB, normalized to [0, 1].
fn luminance(r: u8, g: u8, b: u8) -> f32 {
    (0.299 * r as f32 + 0.587 * g as f32 + 0.114 * b as f32) / 255.0
}

fn load_frame_dir(dir: &Path) -> Result<Vec<Frame>, VideoError> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| VideoError::Io(dir.display().to_string(), e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            matches!(
                p.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()).as_deref(),
                Some("png") | Some("pgm") | Some("ppm") | Some("bmp")
            )
        })
        .collect();
    paths.sort();
    let mut frames = Vec::with_capacity(paths.len());
    for p in &paths {
        let img = image::open(p)
            .map_err(|e| VideoError::Ingest(p.display().to_string(), e.to_string()))?;
        let rgb = img.to_rgb8();
        let (w, h) = (rgb.width() as usize, rgb.height() as usize);
        let mut data = Vec::with_capacity(w * h);
        for px in rgb.pixels() {
            data.push(luminance(px[0], px[1], px[2]).clamp(0.0, 1.0));
        }
        frames.push(Frame::new(w, h, data)?);
    }
    Ok(frames)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent enumeration of the looping rule: walk the infinite
    /// sequence 0, s, 2s, ... over a circular source until n frames are out.
    fn index_oracle(source_len: usize, n: usize, stride: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut pos = 0usize;
        while out.len() < n {
            out.push(pos % source_len);
            pos += stride;
        }
        out
    }

    #[test]
    fn sampling_defaults_pick_ten_frames_stride_four() {
        let spec = ClipSpec::default();
        let idx = sample_indices(40, &spec);
        assert_eq!(idx, vec![0, 4, 8, 12, 16, 20, 24, 28, 32, 36]);
    }

    #[test]
    fn short_source_loops_per_enumeration_oracle() {
        let spec = ClipSpec::default();
        let idx = sample_indices(20, &spec);
        assert_eq!(idx, index_oracle(20, 10, 4));
        assert_eq!(idx, vec![0, 4, 8, 12, 16, 0, 4, 8, 12, 16]);
        for len in 1..50 {
            assert_eq!(sample_indices(len, &spec), index_oracle(len, 10, 4));
        }
    }

    #[test]
    fn single_frame_identity() {
        let spec = ClipSpec { frames_per_clip: 1, frame_stride: 1, spatial_scale: 1.0 };
        assert_eq!(sample_indices(1, &spec), vec![0]);
    }

    #[test]
    fn resize_half_constant_invariance() {
        let f = Frame::new(4, 4, vec![0.5; 16]).unwrap();
        let (half, warned) = resize_half(&f);
        assert!(!warned);
        assert_eq!(half.width(), 2);
        assert_eq!(half.height(), 2);
        for v in half.data() {
            assert!((v - 0.5).abs() < 1e-6);
        }
    }

    #[test]
    fn resize_half_two_by_two_averages() {
        let f = Frame::new(2, 2, vec![0.0, 1.0, 0.0, 1.0]).unwrap();
        let (half, warned) = resize_half(&f);
        assert!(!warned);
        assert_eq!((half.width(), half.height()), (1, 1));
        assert!((half.get(0, 0) - 0.5).abs() < 1e-6);
    }

    #[test]
    fn resize_half_kth_dims() {
        let f = Frame::zeros(160, 120);
        let (half, _) = resize_half(&f);
        assert_eq!((half.width(), half.height()), (80, 60));
    }

    #[test]
    fn resize_one_pixel_dim_warns_and_passes_through() {
        let f = Frame::new(1, 4, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let (out, warned) = resize_half(&f);
        assert!(warned);
        assert_eq!(out, f);
    }

    #[test]
    fn odd_dims_round_up() {
        let f = Frame::zeros(37, 5);
        let (half, _) = resize_half(&f);
        assert_eq!((half.width(), half.height()), (19, 3));
    }
}
