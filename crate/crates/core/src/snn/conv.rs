//! Spiking convolution: sliding the layer's filters over a spiking tensor,
//! event-driven, with optional winner-takes-all competition per location.

use super::{SnnError, SpikingConvLayer};
use crate::retina::{SpikeEvent, SpikingTensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Competition {
    /// At most one output spike per location: the earliest-firing filter
    /// wins, ties broken by the lowest filter index.
    On,
    /// Every (location, filter) pair may emit its first spike.
    Off,
}

/// Output grid dims (width, height, temporal) for the sliding kernel:
/// `floor((input - kernel) / stride) + 1` per axis.
pub fn output_dims(
    input: (usize, usize, usize),
    layer: &SpikingConvLayer,
) -> Result<(usize, usize, usize), SnnError> {
    let c = layer.config();
    let (w, h, td) = input;
    if c.kernel_w > w || c.kernel_h > h || c.kernel_td > td {
        return Err(SnnError::Config(format!(
            "kernel {}x{}x{} larger than input {w}x{h}x{td}",
            c.kernel_w, c.kernel_h, c.kernel_td
        )));
    }
    Ok((
        (w - c.kernel_w) / c.stride_x + 1,
        (h - c.kernel_h) / c.stride_y + 1,
        (td - c.kernel_td) / c.stride_t + 1,
    ))
}

/// Convolve a spiking sample with the layer, producing output spiking
/// feature maps with one channel per filter.
pub fn conv_forward(
    sample: &SpikingTensor,
    layer: &SpikingConvLayer,
    competition: Competition,
) -> Result<SpikingTensor, SnnError> {
    if sample.channels() != layer.in_channels() {
        return Err(SnnError::Config(format!(
            "sample has {} channels, layer expects {}",
            sample.channels(),
            layer.in_channels()
        )));
    }
    let (out_w, out_h, out_td) =
        output_dims((sample.width(), sample.height(), sample.temporal_depth()), layer)?;
    let c = *layer.config();
    let f_k = c.filters;
    let grid = sample.first_spike_grid();
    let mut out_events = Vec::new();

    // reused per location
    let mut rf: Vec<(f64, usize)> = Vec::with_capacity(
        c.kernel_w * c.kernel_h * c.kernel_td * layer.in_channels(),
    );
    let mut potentials = vec![0.0f64; f_k];
    let mut fire_time: Vec<Option<f64>> = vec![None; f_k];

    for oz in 0..out_td {
        let z0 = oz * c.stride_t;
        for oy in 0..out_h {
            let y0 = oy * c.stride_y;
            for ox in 0..out_w {
                let x0 = ox * c.stride_x;
                rf.clear();
                for m in 0..c.kernel_td {
                    for ch in 0..layer.in_channels() {
                        for j in 0..c.kernel_h {
                            for i in 0..c.kernel_w {
                                let gi = sample.coord_index(
                                    (x0 + i) as u32,
                                    (y0 + j) as u32,
                                    (z0 + m) as u32,
                                    ch as u32,
                                );
                                if let Some(t) = grid[gi] {
                                    rf.push((t, layer.weight_base(i, j, m, ch)));
                                }
                            }
                        }
                    }
                }
                if rf.is_empty() {
                    continue;
                }
                rf.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
                potentials.iter_mut().for_each(|v| *v = 0.0);
                fire_time.iter_mut().for_each(|v| *v = None);

                // walk equal-time groups so results are independent of
                // within-group event order
                let mut idx = 0;
                let mut live = f_k;
                'groups: while idx < rf.len() && live > 0 {
                    let t = rf[idx].0;
                    while idx < rf.len() && rf[idx].0 == t {
                        let base = rf[idx].1;
                        for k in 0..f_k {
                            potentials[k] += layer.weights()[base + k];
                        }
                        idx += 1;
                    }
                    for k in 0..f_k {
                        if fire_time[k].is_none() && potentials[k] >= layer.thresholds()[k] {
                            fire_time[k] = Some(t);
                            live -= 1;
                            if competition == Competition::On {
                                break 'groups;
                            }
                        }
                    }
                }

                match competition {
                    Competition::On => {
                        // earliest fire; the group walk stops at the first
                        // group with any crossing, ties resolve to lowest k
                        if let Some((k, t)) = fire_time
                            .iter()
                            .enumerate()
                            .filter_map(|(k, t)| t.map(|t| (k, t)))
                            .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)))
                        {
                            out_events.push(SpikeEvent {
                                x: ox as u32,
                                y: oy as u32,
                                z: oz as u32,
                                c: k as u32,
                                t,
                            });
                        }
                    }
                    Competition::Off => {
                        for (k, t) in fire_time.iter().enumerate() {
                            if let Some(t) = t {
                                out_events.push(SpikeEvent {
                                    x: ox as u32,
                                    y: oy as u32,
                                    z: oz as u32,
                                    c: k as u32,
                                    t: *t,
                                });
                            }
                        }
                    }
                }
            }
        }
    }
    SpikingTensor::from_events(out_w, out_h, f_k, out_td, out_events)
        .map_err(|e| SnnError::Config(format!("internal: bad conv output: {e}")))
}

/// Inference: forward pass with competition off and no plasticity.
pub fn infer(sample: &SpikingTensor, layer: &SpikingConvLayer) -> Result<SpikingTensor, SnnError> {
    conv_forward(sample, layer, Competition::Off)
}
