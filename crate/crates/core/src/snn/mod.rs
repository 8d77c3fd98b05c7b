//! The event-driven core: integrate-and-fire neurons, spiking convolution,
//! winner-takes-all competition, STDP, and threshold homeostasis.

mod checkpoint;
mod conv;
mod train;

pub use checkpoint::{load_layer, read_layer_from, save_layer, write_layer_to, LAYER_MAGIC};
pub use conv::{conv_forward, infer, output_dims, Competition};
pub use train::{
    learn_patch, present_patch, sample_patches, train_layer, Patch, TrainOptions, TrainStats,
};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use thiserror::Error;

/// Presentation window for one sample; spike times live in [0, 1].
pub const T_EXPOSITION: f64 = 1.0;

#[derive(Debug, Error)]
pub enum SnnError {
    #[error("layer configuration error: {0}")]
    Config(String),
    #[error("bad checkpoint: {0}")]
    Checkpoint(String),
    #[error("io error on {0}: {1}")]
    Io(String, std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StdpParams {
    pub eta_w: f64,
    pub tau: f64,
}

impl Default for StdpParams {
    fn default() -> Self {
        Self { eta_w: 0.1, tau: 0.1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomeostasisParams {
    pub eta_th: f64,
    pub th_min: f64,
    /// Initial thresholds are drawn from a Gaussian with these moments.
    pub init_mean: f64,
    pub init_sd: f64,
}

impl Default for HomeostasisParams {
    fn default() -> Self {
        Self { eta_th: 1.0, th_min: 1.0, init_mean: 5.0, init_sd: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerConfig {
    pub kernel_w: usize,
    pub kernel_h: usize,
    /// Temporal kernel size; 1 makes the layer 2D (applied framewise).
    pub kernel_td: usize,
    pub filters: usize,
    pub stride_x: usize,
    pub stride_y: usize,
    pub stride_t: usize,
    /// Target firing timestamp for threshold homeostasis.
    pub target_time: f64,
    pub stdp: StdpParams,
    pub homeo: HomeostasisParams,
}

impl LayerConfig {
    pub fn conv2d() -> Self {
        Self {
            kernel_w: 5,
            kernel_h: 5,
            kernel_td: 1,
            filters: 64,
            stride_x: 1,
            stride_y: 1,
            stride_t: 1,
            target_time: 0.65,
            stdp: StdpParams::default(),
            homeo: HomeostasisParams::default(),
        }
    }

    pub fn conv3d() -> Self {
        Self { kernel_td: 2, ..Self::conv2d() }
    }

    pub fn is_2d(&self) -> bool {
        self.kernel_td == 1
    }

    pub fn validate(&self) -> Result<(), SnnError> {
        if self.kernel_w < 1 || self.kernel_h < 1 || self.kernel_td < 1 {
            return Err(SnnError::Config("kernel dims must be >= 1".into()));
        }
        if self.filters < 1 {
            return Err(SnnError::Config("filter count must be >= 1".into()));
        }
        if self.stride_x < 1 || self.stride_y < 1 || self.stride_t < 1 {
            return Err(SnnError::Config("strides must be >= 1".into()));
        }
        if !(self.target_time > 0.0 && self.target_time < T_EXPOSITION) {
            return Err(SnnError::Config(format!(
                "target time must lie in (0, {T_EXPOSITION}), got {}",
                self.target_time
            )));
        }
        if self.stdp.eta_w <= 0.0 || self.stdp.tau <= 0.0 {
            return Err(SnnError::Config("STDP rates must be positive".into()));
        }
        if self.homeo.eta_th <= 0.0 || self.homeo.th_min <= 0.0 {
            return Err(SnnError::Config("homeostasis rates must be positive".into()));
        }
        Ok(())
    }
}

/// A trainable spiking convolutional layer: shared weights per filter, one
/// adaptive threshold per filter, and the RNG that drives patch sampling and
/// shuffling during training.
#[derive(Debug, Clone)]
pub struct SpikingConvLayer {
    config: LayerConfig,
    in_channels: usize,
    /// Indexed (i, j, m, c, k) with k fastest:
    /// `(((i*f_h + j)*f_td + m)*in_channels + c)*f_k + k`.
    weights: Vec<f64>,
    thresholds: Vec<f64>,
    rng: ChaCha8Rng,
}

impl SpikingConvLayer {
    pub fn new(config: LayerConfig, in_channels: usize, seed: u64) -> Result<Self, SnnError> {
        config.validate()?;
        if in_channels < 1 {
            return Err(SnnError::Config("input channel count must be >= 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let count = config.kernel_w
            * config.kernel_h
            * config.kernel_td
            * in_channels
            * config.filters;
        let uniform = Uniform::new_inclusive(0.0f64, 1.0);
        let weights: Vec<f64> = (0..count).map(|_| uniform.sample(&mut rng)).collect();
        let normal = Normal::new(config.homeo.init_mean, config.homeo.init_sd)
            .map_err(|e| SnnError::Config(e.to_string()))?;
        let thresholds: Vec<f64> = (0..config.filters)
            .map(|_| normal.sample(&mut rng).max(config.homeo.th_min))
            .collect();
        Ok(Self { config, in_channels, weights, thresholds, rng })
    }

    /// Rebuild a layer from explicit state (checkpoints, oracles).
    pub fn from_parts(
        config: LayerConfig,
        in_channels: usize,
        weights: Vec<f64>,
        thresholds: Vec<f64>,
        rng: ChaCha8Rng,
    ) -> Result<Self, SnnError> {
        config.validate()?;
        let count = config.kernel_w
            * config.kernel_h
            * config.kernel_td
            * in_channels
            * config.filters;
        if weights.len() != count {
            return Err(SnnError::Config(format!(
                "weight count {} does not match config ({count})",
                weights.len()
            )));
        }
        if thresholds.len() != config.filters {
            return Err(SnnError::Config("threshold count does not match filters".into()));
        }
        if weights.iter().any(|w| !(0.0..=1.0).contains(w)) {
            return Err(SnnError::Config("weights must lie in [0, 1]".into()));
        }
        if thresholds.iter().any(|t| *t < config.homeo.th_min) {
            return Err(SnnError::Config("thresholds must respect th_min".into()));
        }
        Ok(Self { config, in_channels, weights, thresholds, rng })
    }

    pub fn config(&self) -> &LayerConfig {
        &self.config
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub(crate) fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    pub(crate) fn rng(&self) -> &ChaCha8Rng {
        &self.rng
    }

    /// Base index into the weight vector for kernel cell (i, j, m, c); add
    /// the filter index to address one synapse.
    #[inline]
    pub fn weight_base(&self, i: usize, j: usize, m: usize, c: usize) -> usize {
        (((i * self.config.kernel_h + j) * self.config.kernel_td + m) * self.in_channels + c)
            * self.config.filters
    }

    /// One filter's weights gathered out of the interleaved layout.
    pub fn filter_weights(&self, k: usize) -> Vec<f64> {
        self.weights.iter().skip(k).step_by(self.config.filters).copied().collect()
    }

    pub(crate) fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    /// Apply the homeostasis update after a fire at time `t` won by filter
    /// `winner`, with `l_d` filters competing.
    pub fn adapt_thresholds(&mut self, winner: usize, t: f64, l_d: usize) {
        let homeo = self.config.homeo;
        let t_hat = self.config.target_time;
        adapt_thresholds(&mut self.thresholds, winner, t, l_d, t_hat, &homeo);
    }
}

/// Integrate-and-fire over a sorted spike train: the potential accumulates
/// `weights[i]` at `times[i]` and the neuron fires at the first timestamp
/// where it reaches `v_th`. Events sharing a timestamp are accumulated
/// together, so the result is invariant to permuting equal-time events.
pub fn integrate(times: &[f64], weights: &[f64], v_th: f64) -> Option<f64> {
    debug_assert_eq!(times.len(), weights.len());
    let mut v = 0.0f64;
    let mut i = 0;
    while i < times.len() {
        let t = times[i];
        while i < times.len() && times[i] == t {
            v += weights[i];
            i += 1;
        }
        if v >= v_th {
            return Some(t);
        }
    }
    None
}

/// STDP weight change for one synapse given the input spike time (if any)
/// and the post-synaptic fire time. Synapses that never spiked in the
/// window depress as if their spike sat at the window end. The result is
/// clamped to [0, 1].
pub fn stdp_update(w: f64, t_pre: Option<f64>, t_post: f64, params: &StdpParams) -> f64 {
    let delta = match t_pre {
        Some(tp) if tp <= t_post => params.eta_w * (-(t_post - tp) / params.tau).exp(),
        Some(tp) => -params.eta_w * (-(tp - t_post) / params.tau).exp(),
        None => -params.eta_w * (-(T_EXPOSITION - t_post) / params.tau).exp(),
    };
    (w + delta).clamp(0.0, 1.0)
}

/// Threshold homeostasis: every competing filter moves by `-eta_th (t - t̂)`,
/// the winner additionally by `+eta_th` and each loser by `-eta_th / l_d`,
/// floored at `th_min`. The winner/loser adjustment is a competition
/// balancing term; with a single filter there is no competition and only
/// the target-time term applies.
pub fn adapt_thresholds(
    thresholds: &mut [f64],
    winner: usize,
    t: f64,
    l_d: usize,
    t_hat: f64,
    homeo: &HomeostasisParams,
) {
    let d1 = -homeo.eta_th * (t - t_hat);
    for (k, th) in thresholds.iter_mut().enumerate() {
        let d2 = if l_d < 2 {
            0.0
        } else if k == winner {
            homeo.eta_th
        } else {
            -homeo.eta_th / l_d as f64
        };
        *th = (*th + d1 + d2).max(homeo.th_min);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrate_fires_at_cumulative_crossing() {
        assert_eq!(integrate(&[0.1, 0.2], &[0.6, 0.5], 1.0), Some(0.2));
    }

    #[test]
    fn integrate_never_fires_below_threshold() {
        assert_eq!(integrate(&[0.1, 0.5, 0.9], &[0.3, 0.3, 0.3], 1.0), None);
    }

    #[test]
    fn integrate_matches_prefix_sum_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        for _ in 0..200 {
            let n = rng.gen_range(1..60);
            let mut times: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
            times.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let weights: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
            let v_th = rng.gen_range(0.5..5.0);
            // independent oracle: scan prefix sums grouped by timestamp
            let mut expected = None;
            let mut acc = 0.0;
            let mut i = 0;
            while i < n {
                let mut j = i;
                while j < n && times[j] == times[i] {
                    acc += weights[j];
                    j += 1;
                }
                if acc >= v_th {
                    expected = Some(times[i]);
                    break;
                }
                i = j;
            }
            assert_eq!(integrate(&times, &weights, v_th), expected);
        }
    }

    #[test]
    fn integrate_is_invariant_to_equal_time_permutations() {
        let times = vec![0.2, 0.2, 0.2, 0.4];
        let weights = vec![0.5, 0.3, 0.4, 0.2];
        let base = integrate(&times, &weights, 1.0);
        let perm_weights = vec![0.4, 0.5, 0.3, 0.2];
        assert_eq!(base, integrate(&times, &perm_weights, 1.0));
        assert_eq!(base, Some(0.2));
    }

    #[test]
    fn stdp_boundary_and_decay_values() {
        let p = StdpParams::default();
        // coincident spikes gain the full learning rate
        assert!((stdp_update(0.5, Some(0.3), 0.3, &p) - 0.6).abs() < 1e-12);
        // one time-constant later: eta * e^-1
        let w = stdp_update(0.5, Some(0.55), 0.65, &p);
        assert!((w - (0.5 + 0.1 * (-1.0f64).exp())).abs() < 1e-12);
        assert!((w - 0.536787944117144235).abs() < 1e-12);
        // depression two time-constants out, clamped at zero from w = 0.01
        let w = stdp_update(0.01, Some(0.85), 0.65, &p);
        assert!((w - 0.0).abs() < 1e-15, "expected clamp to 0, got {w}");
        let delta = stdp_update(0.5, Some(0.85), 0.65, &p) - 0.5;
        assert!((delta + 0.013533528323661271).abs() < 1e-12);
    }

    #[test]
    fn stdp_sign_and_magnitude_bounds() {
        let p = StdpParams::default();
        for i in 0..=1000 {
            let dt = (i as f64 - 500.0) / 500.0; // t_post - t_pre in [-1, 1]
            let t_post = 0.5 + dt / 2.0;
            let t_pre = 0.5 - dt / 2.0;
            let delta = stdp_update(0.5, Some(t_pre), t_post, &p) - 0.5;
            if dt >= 0.0 {
                assert!(delta >= 0.0);
            } else {
                assert!(delta < 0.0);
            }
            assert!(delta.abs() <= p.eta_w + 1e-15);
        }
    }

    #[test]
    fn stdp_potentiation_strictly_decreases_with_gap() {
        let p = StdpParams::default();
        let mut last = f64::MAX;
        for i in 0..100 {
            let gap = i as f64 * 0.009;
            let delta = stdp_update(0.0, Some(0.9 - gap), 0.9, &p);
            if i > 0 {
                assert!(delta < last);
            }
            last = delta;
        }
    }

    #[test]
    fn silent_synapse_depresses_as_window_end() {
        let p = StdpParams::default();
        let silent = stdp_update(0.5, None, 0.65, &p);
        let window_end = stdp_update(0.5, Some(T_EXPOSITION), 0.65, &p);
        assert!((silent - window_end).abs() < 1e-15);
        assert!(silent < 0.5);
    }

    #[test]
    fn threshold_update_examples() {
        let homeo = HomeostasisParams::default();
        let mut th = vec![5.0; 64];
        // fire exactly at the target: winner +1, losers -1/64
        adapt_thresholds(&mut th, 0, 0.65, 64, 0.65, &homeo);
        assert!((th[0] - 6.0).abs() < 1e-12);
        for k in 1..64 {
            assert!((th[k] - 4.984375).abs() < 1e-12);
        }
    }

    #[test]
    fn thresholds_floor_at_minimum() {
        let homeo = HomeostasisParams::default();
        let mut th = vec![1.2, 1.2];
        // late fire drives everything down; floor holds
        adapt_thresholds(&mut th, 0, 0.99, 2, 0.1, &homeo);
        assert!(th.iter().all(|v| *v >= homeo.th_min));
        assert_eq!(th[1], homeo.th_min);
    }

    #[test]
    fn single_filter_has_no_competition_term() {
        let homeo = HomeostasisParams::default();
        let mut th = vec![5.0];
        adapt_thresholds(&mut th, 0, 0.65, 1, 0.65, &homeo);
        assert!((th[0] - 5.0).abs() < 1e-12);
        adapt_thresholds(&mut th, 0, 0.45, 1, 0.65, &homeo);
        assert!((th[0] - 5.2).abs() < 1e-12);
    }

    #[test]
    fn layer_construction_is_seeded_and_bounded() {
        let layer = SpikingConvLayer::new(LayerConfig::conv2d(), 2, 42).unwrap();
        let again = SpikingConvLayer::new(LayerConfig::conv2d(), 2, 42).unwrap();
        assert_eq!(layer.weights(), again.weights());
        assert_eq!(layer.thresholds(), again.thresholds());
        assert!(layer.weights().iter().all(|w| (0.0..=1.0).contains(w)));
        assert!(layer.thresholds().iter().all(|t| *t >= 1.0));
        assert_eq!(layer.weights().len(), 5 * 5 * 1 * 2 * 64);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut config = LayerConfig::conv2d();
        config.target_time = 1.5;
        assert!(SpikingConvLayer::new(config, 1, 0).is_err());
        let mut config = LayerConfig::conv2d();
        config.stride_x = 0;
        assert!(SpikingConvLayer::new(config, 1, 0).is_err());
    }
}
