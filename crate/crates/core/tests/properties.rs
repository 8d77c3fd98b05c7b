//! Property tests over the codec, stream preprocessors, pooling and
//! learning-rule invariants.

use proptest::prelude::*;

use spikestream::classifier::aggregate_runs;
use spikestream::features::{sum_pool_spatial, PoolSpec};
use spikestream::motion::{directional_maps, early_defuse, early_fuse, frame_subtract, FlowField};
use spikestream::retina::{decode_first_spike, dog_filter, latency_encode, DoGParams};
use spikestream::snn::{integrate, stdp_update, StdpParams};
use spikestream::video::{Frame, VideoTensor};

fn values_in_unit(n: usize) -> impl Strategy<Value = Vec<f32>> {
    proptest::collection::vec(0.0f32..=1.0, n..=n)
}

proptest! {
    #[test]
    fn codec_roundtrip_is_identity(values in values_in_unit(64)) {
        let tensor = VideoTensor::new(8, 8, 1, 1, values).unwrap();
        let back = decode_first_spike(&latency_encode(&tensor, 1.0), 1.0);
        for (a, b) in tensor.data().iter().zip(back.data()) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn on_off_channels_are_disjoint(values in values_in_unit(144)) {
        let frame = Frame::new(12, 12, values).unwrap();
        let (on, off) = dog_filter(&frame, &DoGParams::default()).unwrap();
        for (a, b) in on.data().iter().zip(off.data()) {
            prop_assert_eq!(a * b, 0.0);
        }
    }

    #[test]
    fn stdp_sign_follows_timing(
        t_pre in 0.0f64..1.0,
        t_post in 0.0f64..1.0,
        w in 0.2f64..0.8,
    ) {
        let params = StdpParams::default();
        let delta = stdp_update(w, Some(t_pre), t_post, &params) - w;
        if t_pre <= t_post {
            prop_assert!(delta >= 0.0);
        } else {
            prop_assert!(delta < 0.0);
        }
        prop_assert!(delta.abs() <= params.eta_w + 1e-15);
    }

    #[test]
    fn weights_stay_clamped_under_any_update_sequence(
        updates in proptest::collection::vec((0.0f64..1.0, 0.0f64..1.0), 1..50),
        w0 in 0.0f64..=1.0,
    ) {
        let params = StdpParams::default();
        let mut w = w0;
        for (t_pre, t_post) in updates {
            w = stdp_update(w, Some(t_pre), t_post, &params);
            prop_assert!((0.0..=1.0).contains(&w));
        }
    }

    #[test]
    fn early_fusion_is_a_bijection(
        values in values_in_unit(60),
        td in 1usize..=5,
    ) {
        // 60 pixels split as 4 wide, 15/td tall per frame when divisible
        if 15 % td != 0 {
            return Ok(());
        }
        let clip = VideoTensor::new(4, 15 / td, 1, td, values).unwrap();
        let fused = early_fuse(&clip).unwrap();
        // pixel-count preservation plus exact reconstruction make the map a
        // bijection on pixels
        prop_assert_eq!(fused.data().len(), clip.data().len());
        let back = early_defuse(&fused, td).unwrap();
        prop_assert_eq!(back, clip);
    }

    #[test]
    fn frame_subtract_ignores_constant_offsets(
        values in proptest::collection::vec(0.0f32..=0.5, 32..=32),
        offset in 0.0f32..=0.5,
    ) {
        let clip = VideoTensor::new(4, 4, 1, 2, values.clone()).unwrap();
        let shifted = VideoTensor::new(
            4,
            4,
            1,
            2,
            values.iter().map(|v| v + offset).collect(),
        )
        .unwrap();
        let a = frame_subtract(&clip).unwrap();
        let b = frame_subtract(&shifted).unwrap();
        for (x, y) in a.data().iter().zip(b.data()) {
            prop_assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn motion_grid_maps_are_disjoint_and_reconstruct_flow(
        ofx in proptest::collection::vec(-5.0f32..5.0, 24..=24),
        ofy in proptest::collection::vec(-5.0f32..5.0, 24..=24),
    ) {
        let flow = FlowField::new(6, 4, ofx, ofy).unwrap();
        let [ml, mr, mu, md] = directional_maps(&flow);
        for y in 0..4 {
            for x in 0..6 {
                prop_assert_eq!(mr.get(x, y) - ml.get(x, y), flow.x(x, y));
                prop_assert_eq!(md.get(x, y) - mu.get(x, y), flow.y(x, y));
                prop_assert_eq!(ml.get(x, y) * mr.get(x, y), 0.0);
                prop_assert_eq!(mu.get(x, y) * md.get(x, y), 0.0);
                prop_assert!(ml.get(x, y) >= 0.0 && mr.get(x, y) >= 0.0);
                prop_assert!(mu.get(x, y) >= 0.0 && md.get(x, y) >= 0.0);
            }
        }
    }

    #[test]
    fn pooling_commutes_with_scaling(
        values in values_in_unit(25 * 25),
        scale in 0.1f32..4.0,
    ) {
        let spec = PoolSpec { grid_w: 5, grid_h: 5, temporal: 1 };
        let frame = Frame::new(25, 25, values.clone()).unwrap();
        let scaled = Frame::new(25, 25, values.iter().map(|v| v * scale).collect()).unwrap();
        let (a, _) = sum_pool_spatial(&frame, &spec);
        let (b, _) = sum_pool_spatial(&scaled, &spec);
        for (x, y) in a.data().iter().zip(b.data()) {
            prop_assert!((x * scale - y).abs() < 1e-3);
        }
    }

    #[test]
    fn integrate_is_order_independent_within_a_timestamp(
        weights in proptest::collection::vec(0.1f64..1.0, 6..=6),
        v_th in 0.5f64..3.0,
    ) {
        // three events share t=0.2; permuting them must not change the result
        let times = [0.1, 0.2, 0.2, 0.2, 0.5, 0.9];
        let base = integrate(&times, &weights, v_th);
        let mut permuted = weights.clone();
        permuted.swap(1, 3);
        prop_assert_eq!(base, integrate(&times, &permuted, v_th));
        permuted.swap(2, 3);
        prop_assert_eq!(base, integrate(&times, &permuted, v_th));
    }

    #[test]
    fn aggregate_mean_is_bounded_by_runs(
        accs in proptest::collection::vec(0.0f64..100.0, 1..6),
    ) {
        let summary = aggregate_runs(&accs);
        let min = accs.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = accs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(summary.mean >= min - 1e-9 && summary.mean <= max + 1e-9);
        prop_assert!(summary.std >= 0.0);
    }
}
