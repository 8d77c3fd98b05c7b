//! Temporal-stream input representations: early fusion, frame subtraction,
//! dense optical flow with HSV rendering, and the motion grid.

mod flow;

pub use flow::{
    clip_flow, dense_flow, read_flow_file, write_flow_file, FlowField, FlowParams, FLOW_MAGIC,
};

use thiserror::Error;

use crate::video::{Frame, VideoTensor};

#[derive(Debug, Error)]
pub enum MotionError {
    #[error("stream configuration error: {0}")]
    StreamConfig(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("bad flow file: {0}")]
    Format(String),
    #[error("io error on {0}: {1}")]
    Io(String, std::io::Error),
}

/// Row-interleave all frames of a clip into one tall frame: output row
/// `r = x * l_td + n` is row `x` of frame `n`.
pub fn early_fuse(clip: &VideoTensor) -> Result<Frame, MotionError> {
    if clip.channels() != 1 {
        return Err(MotionError::StreamConfig(format!(
            "early fusion needs a single-channel clip, got {} channels",
            clip.channels()
        )));
    }
    let td = clip.temporal_depth();
    let mut out = Frame::zeros(clip.width(), clip.height() * td);
    for n in 0..td {
        for x_row in 0..clip.height() {
            let r = x_row * td + n;
            for y_col in 0..clip.width() {
                out.set(y_col, r, clip.get(y_col, x_row, 0, n));
            }
        }
    }
    Ok(out)
}

/// Inverse of [`early_fuse`]: splits a fused frame back into `l_td` frames.
pub fn early_defuse(frame: &Frame, temporal_depth: usize) -> Result<VideoTensor, MotionError> {
    if temporal_depth == 0 || frame.height() % temporal_depth != 0 {
        return Err(MotionError::Input(format!(
            "fused height {} is not divisible by temporal depth {temporal_depth}",
            frame.height()
        )));
    }
    let h = frame.height() / temporal_depth;
    let mut out = VideoTensor::zeros(frame.width(), h, 1, temporal_depth);
    for n in 0..temporal_depth {
        for x_row in 0..h {
            for y_col in 0..frame.width() {
                out.set(y_col, x_row, 0, n, frame.get(y_col, x_row * temporal_depth + n));
            }
        }
    }
    Ok(out)
}

/// Absolute difference of consecutive frames; the output has one frame less.
pub fn frame_subtract(clip: &VideoTensor) -> Result<VideoTensor, MotionError> {
    if clip.channels() != 1 {
        return Err(MotionError::StreamConfig(format!(
            "frame subtraction needs a single-channel clip, got {} channels",
            clip.channels()
        )));
    }
    if clip.temporal_depth() < 2 {
        return Err(MotionError::StreamConfig(
            "frame subtraction needs at least 2 frames".into(),
        ));
    }
    let mut out = VideoTensor::zeros(clip.width(), clip.height(), 1, clip.temporal_depth() - 1);
    for n in 0..clip.temporal_depth() - 1 {
        for y in 0..clip.height() {
            for x in 0..clip.width() {
                let d = (clip.get(x, y, 0, n) - clip.get(x, y, 0, n + 1)).abs();
                out.set(x, y, 0, n, d);
            }
        }
    }
    Ok(out)
}

/// The four per-direction displacement maps of a flow field, before any
/// normalization: left/right split the horizontal component, up/down the
/// vertical one.
pub fn directional_maps(flow: &FlowField) -> [Frame; 4] {
    let (w, h) = (flow.width(), flow.height());
    let mut maps = [Frame::zeros(w, h), Frame::zeros(w, h), Frame::zeros(w, h), Frame::zeros(w, h)];
    for y in 0..h {
        for x in 0..w {
            let ofx = flow.x(x, y);
            let ofy = flow.y(x, y);
            maps[0].set(x, y, (ofx.abs() - ofx) / 2.0);
            maps[1].set(x, y, (ofx.abs() + ofx) / 2.0);
            maps[2].set(x, y, (ofy.abs() - ofy) / 2.0);
            maps[3].set(x, y, (ofy.abs() + ofy) / 2.0);
        }
    }
    maps
}

/// Tile the directional maps of a flow sequence into one composite frame:
/// one row of tiles per flow field, columns ordered left, right, up, down.
/// All tiles share one normalization by the global max over every map.
pub fn motion_grid(flows: &[FlowField]) -> Result<Frame, MotionError> {
    let first = flows.first().ok_or_else(|| MotionError::Input("no flow fields".into()))?;
    let (w, h) = (first.width(), first.height());
    if flows.iter().any(|f| f.width() != w || f.height() != h) {
        return Err(MotionError::Input("flow fields have mismatched dims".into()));
    }
    let all_maps: Vec<[Frame; 4]> = flows.iter().map(directional_maps).collect();
    let global_max = all_maps
        .iter()
        .flat_map(|maps| maps.iter())
        .map(Frame::max_abs)
        .fold(0.0f32, f32::max);
    let scale = if global_max > 0.0 { 1.0 / global_max } else { 0.0 };
    let mut out = Frame::zeros(4 * w, flows.len() * h);
    for (row, maps) in all_maps.iter().enumerate() {
        for (col, map) in maps.iter().enumerate() {
            for y in 0..h {
                for x in 0..w {
                    out.set(col * w + x, row * h + y, (map.get(x, y) * scale).clamp(0.0, 1.0));
                }
            }
        }
    }
    Ok(out)
}

/// Render a flow field in HSV and convert to RGB: hue encodes orientation
/// (0° = rightward, increasing from +x towards +y), saturation is 1, value
/// is the magnitude normalized by the field's max magnitude. The result is
/// a single 3-channel frame with values in [0, 1].
pub fn flow_to_rgb(flow: &FlowField) -> VideoTensor {
    let (w, h) = (flow.width(), flow.height());
    let mut max_mag = 0.0f64;
    for y in 0..h {
        for x in 0..w {
            let m = (flow.x(x, y) as f64).hypot(flow.y(x, y) as f64);
            max_mag = max_mag.max(m);
        }
    }
    let mut out = VideoTensor::zeros(w, h, 3, 1);
    for y in 0..h {
        for x in 0..w {
            let (ofx, ofy) = (flow.x(x, y) as f64, flow.y(x, y) as f64);
            let mag = ofx.hypot(ofy);
            let value = if max_mag > 0.0 { mag / max_mag } else { 0.0 };
            let mut hue = ofy.atan2(ofx).to_degrees();
            if hue < 0.0 {
                hue += 360.0;
            }
            let (r, g, b) = hsv_to_rgb(hue % 360.0, 1.0, value);
            out.set(x, y, 0, 0, r as f32);
            out.set(x, y, 1, 0, g as f32);
            out.set(x, y, 2, 0, b as f32);
        }
    }
    out
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> (f64, f64, f64) {
    let c = v * s;
    let hp = h / 60.0;
    let x = c * (1.0 - (hp % 2.0 - 1.0).abs());
    let (r1, g1, b1) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    (r1 + m, g1 + m, b1 + m)
}
