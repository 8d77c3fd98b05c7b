//! Patch-based unsupervised training: random receptive-field patches compete
//! through WTA, the winner learns by STDP, and every filter's threshold
//! adapts towards the target timestamp.

use rand::seq::SliceRandom;
use rand::Rng;

use super::{stdp_update, SnnError, SpikingConvLayer};
use crate::retina::{SpikeEvent, SpikingTensor};

/// A receptive-field-sized sub-tensor with events re-based to the window
/// origin (times unchanged).
#[derive(Debug, Clone)]
pub struct Patch {
    pub tensor: SpikingTensor,
    pub origin: (usize, usize, usize),
}

/// Draw `count` uniformly random receptive-field patches from a sample.
/// Positions cover every valid kernel placement; determinism follows the
/// layer RNG state.
pub fn sample_patches(
    sample: &SpikingTensor,
    layer: &mut SpikingConvLayer,
    count: usize,
) -> Result<Vec<Patch>, SnnError> {
    let c = *layer.config();
    if sample.channels() != layer.in_channels() {
        return Err(SnnError::Config(format!(
            "sample has {} channels, layer expects {}",
            sample.channels(),
            layer.in_channels()
        )));
    }
    if c.kernel_w > sample.width()
        || c.kernel_h > sample.height()
        || c.kernel_td > sample.temporal_depth()
    {
        return Err(SnnError::Config(format!(
            "sample {}x{}x{} smaller than kernel {}x{}x{}",
            sample.width(),
            sample.height(),
            sample.temporal_depth(),
            c.kernel_w,
            c.kernel_h,
            c.kernel_td
        )));
    }
    let max_x = sample.width() - c.kernel_w;
    let max_y = sample.height() - c.kernel_h;
    let max_z = sample.temporal_depth() - c.kernel_td;
    let mut patches = Vec::with_capacity(count);
    for _ in 0..count {
        let rng = layer.rng_mut();
        let x0 = rng.gen_range(0..=max_x);
        let y0 = rng.gen_range(0..=max_y);
        let z0 = rng.gen_range(0..=max_z);
        let events: Vec<SpikeEvent> = sample
            .events()
            .iter()
            .filter(|e| {
                (e.x as usize) >= x0
                    && (e.x as usize) < x0 + c.kernel_w
                    && (e.y as usize) >= y0
                    && (e.y as usize) < y0 + c.kernel_h
                    && (e.z as usize) >= z0
                    && (e.z as usize) < z0 + c.kernel_td
            })
            .map(|e| SpikeEvent {
                x: e.x - x0 as u32,
                y: e.y - y0 as u32,
                z: e.z - z0 as u32,
                c: e.c,
                t: e.t,
            })
            .collect();
        let tensor = SpikingTensor::from_events(
            c.kernel_w,
            c.kernel_h,
            sample.channels(),
            c.kernel_td,
            events,
        )
        .map_err(|e| SnnError::Config(format!("internal: bad patch: {e}")))?;
        patches.push(Patch { tensor, origin: (x0, y0, z0) });
    }
    Ok(patches)
}

/// Present one patch to every filter and return the WTA winner and its fire
/// time, if any filter fired. Equal-time spikes are accumulated together;
/// simultaneous winners resolve to the lowest filter index.
pub fn present_patch(layer: &SpikingConvLayer, patch: &Patch) -> Option<(usize, f64)> {
    let c = layer.config();
    let f_k = c.filters;
    let events = patch.tensor.events();
    if events.is_empty() {
        return None;
    }
    let mut potentials = vec![0.0f64; f_k];
    let mut idx = 0;
    while idx < events.len() {
        let t = events[idx].t;
        while idx < events.len() && events[idx].t == t {
            let e = &events[idx];
            let base =
                layer.weight_base(e.x as usize, e.y as usize, e.z as usize, e.c as usize);
            for k in 0..f_k {
                potentials[k] += layer.weights()[base + k];
            }
            idx += 1;
        }
        for k in 0..f_k {
            if potentials[k] >= layer.thresholds()[k] {
                return Some((k, t));
            }
        }
    }
    None
}

/// STDP over every synapse of the winning filter: spiking inputs at or
/// before the fire time potentiate, later or silent inputs depress.
fn apply_stdp(layer: &mut SpikingConvLayer, winner: usize, t_post: f64, patch: &Patch) {
    let c = *layer.config();
    let grid = patch.tensor.first_spike_grid();
    let in_ch = layer.in_channels();
    let stdp = c.stdp;
    for i in 0..c.kernel_w {
        for j in 0..c.kernel_h {
            for m in 0..c.kernel_td {
                for ch in 0..in_ch {
                    let widx = layer.weight_base(i, j, m, ch) + winner;
                    let t_pre = grid[patch.tensor.coord_index(
                        i as u32,
                        j as u32,
                        m as u32,
                        ch as u32,
                    )];
                    let w = layer.weights()[widx];
                    layer.weights_mut()[widx] = stdp_update(w, t_pre, t_post, &stdp);
                }
            }
        }
    }
}

/// One training presentation: WTA over the patch, STDP on the winner,
/// threshold adaptation for every filter. Returns the winner and fire time.
pub fn learn_patch(layer: &mut SpikingConvLayer, patch: &Patch) -> Option<(usize, f64)> {
    let fired = present_patch(layer, patch)?;
    let (winner, t) = fired;
    apply_stdp(layer, winner, t, patch);
    let f_k = layer.config().filters;
    layer.adapt_thresholds(winner, t, f_k);
    Some(fired)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainOptions {
    pub patches_per_clip: usize,
    pub epochs: usize,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self { patches_per_clip: 20, epochs: 1 }
    }
}

/// Instrumentation counters and stall diagnostics for one training run.
#[derive(Debug, Clone, Default)]
pub struct TrainStats {
    pub patches_presented: usize,
    pub patches_fired: usize,
    pub stdp_updates: usize,
    pub wins_per_filter: Vec<usize>,
    /// Epochs in which no patch produced a fire, with diagnostics.
    pub stalled_epochs: Vec<StallDiagnostics>,
}

#[derive(Debug, Clone)]
pub struct StallDiagnostics {
    pub epoch: usize,
    pub threshold_min: f64,
    pub threshold_mean: f64,
    pub threshold_max: f64,
    pub total_events_seen: usize,
}

/// Train the layer in place over the clips: per epoch the clip order is
/// shuffled, random patches are presented, the WTA winner learns by STDP and
/// all thresholds adapt. Fully deterministic given the layer seed.
pub fn train_layer(
    layer: &mut SpikingConvLayer,
    clips: &[SpikingTensor],
    options: &TrainOptions,
) -> Result<TrainStats, SnnError> {
    if clips.is_empty() {
        return Err(SnnError::Config("no training clips".into()));
    }
    let f_k = layer.config().filters;
    let mut stats = TrainStats { wins_per_filter: vec![0; f_k], ..TrainStats::default() };
    for epoch in 0..options.epochs {
        let mut order: Vec<usize> = (0..clips.len()).collect();
        order.shuffle(layer.rng_mut());
        let mut epoch_fires = 0usize;
        let mut epoch_events = 0usize;
        for &clip_idx in &order {
            let patches = sample_patches(&clips[clip_idx], layer, options.patches_per_clip)?;
            for patch in &patches {
                epoch_events += patch.tensor.len();
                stats.patches_presented += 1;
                if let Some((winner, _)) = learn_patch(layer, patch) {
                    stats.stdp_updates += 1;
                    stats.patches_fired += 1;
                    stats.wins_per_filter[winner] += 1;
                    epoch_fires += 1;
                }
            }
        }
        if epoch_fires == 0 {
            let th = layer.thresholds();
            stats.stalled_epochs.push(StallDiagnostics {
                epoch,
                threshold_min: th.iter().cloned().fold(f64::INFINITY, f64::min),
                threshold_mean: th.iter().sum::<f64>() / th.len() as f64,
                threshold_max: th.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                total_events_seen: epoch_events,
            });
        }
    }
    Ok(stats)
}
