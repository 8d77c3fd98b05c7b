//! Per-clip stream computations shared by the stages and the runner:
//! preprocess a clip into a stream's input representation, encode it to
//! spikes, and turn inferred feature maps into pooled feature vectors.

use super::config::{ExperimentConfig, LayerSettings, StreamSpec};
use super::ExperimentError;
use crate::features::{flatten, sum_pool_spatial, sum_pool_temporal, FeatureVector, PoolSpec};
use crate::motion::{clip_flow, early_fuse, flow_to_rgb, frame_subtract, motion_grid};
use crate::retina::{decode_first_spike, dog_preprocess_clip, latency_encode, SpikingTensor};
use crate::snn::{infer, LayerConfig, SpikingConvLayer};
use crate::video::VideoTensor;

/// On/off channel count entering the layer for a stream: two per input
/// channel after retina filtering.
pub fn stream_in_channels(stream: StreamSpec) -> usize {
    match stream {
        StreamSpec::OpticalFlow2d => 6,
        _ => 2,
    }
}

pub fn layer_config_for(stream: StreamSpec, settings: &LayerSettings) -> LayerConfig {
    let base = if stream.is_3d() { LayerConfig::conv3d() } else { LayerConfig::conv2d() };
    LayerConfig {
        filters: settings.filters,
        target_time: settings.target_time,
        ..base
    }
}

fn stage_err(stage: &str, clip_id: &str, err: impl std::fmt::Display) -> ExperimentError {
    ExperimentError::Stage { stage: stage.to_string(), detail: format!("{clip_id}: {err}") }
}

/// Build the stream's input representation and run it through the retina
/// codec, yielding the on/off value tensor ready for latency coding.
/// `precomputed_flow` bypasses flow estimation for the flow-based streams.
pub fn preprocess_stream(
    clip: &VideoTensor,
    clip_id: &str,
    stream: StreamSpec,
    config: &ExperimentConfig,
    precomputed_flow: Option<&[crate::motion::FlowField]>,
) -> Result<VideoTensor, ExperimentError> {
    let err = |e: &dyn std::fmt::Display| stage_err("preprocess", clip_id, e);
    let get_flows = || -> Result<Vec<crate::motion::FlowField>, ExperimentError> {
        match precomputed_flow {
            Some(fields) => {
                if fields.len() + 1 != clip.temporal_depth() {
                    return Err(stage_err(
                        "preprocess",
                        clip_id,
                        format!(
                            "precomputed flow has {} fields for {} frames",
                            fields.len(),
                            clip.temporal_depth()
                        ),
                    ));
                }
                Ok(fields.to_vec())
            }
            None => clip_flow(clip, &config.flow).map_err(|e| err(&e)),
        }
    };
    let rep = match stream {
        StreamSpec::Raw2d | StreamSpec::Raw3d => clip.clone(),
        StreamSpec::EarlyFusion2d => {
            let fused = early_fuse(clip).map_err(|e| err(&e))?;
            VideoTensor::from_frames(std::slice::from_ref(&fused)).map_err(|e| err(&e))?
        }
        StreamSpec::FrameSubtraction2d => frame_subtract(clip).map_err(|e| err(&e))?,
        StreamSpec::OpticalFlow2d => {
            let flows = get_flows()?;
            let frames: Vec<VideoTensor> = flows.iter().map(flow_to_rgb).collect();
            let mut out =
                VideoTensor::zeros(clip.width(), clip.height(), 3, frames.len());
            for (n, f) in frames.iter().enumerate() {
                for c in 0..3 {
                    for y in 0..clip.height() {
                        for x in 0..clip.width() {
                            out.set(x, y, c, n, f.get(x, y, c, 0));
                        }
                    }
                }
            }
            out
        }
        StreamSpec::MotionGrid2d => {
            let flows = get_flows()?;
            let grid = motion_grid(&flows).map_err(|e| err(&e))?;
            VideoTensor::from_frames(std::slice::from_ref(&grid)).map_err(|e| err(&e))?
        }
    };
    dog_preprocess_clip(&rep, &config.codec).map_err(|e| stage_err("encode", clip_id, e))
}

/// Preprocess and latency-encode one clip for a stream.
pub fn encode_stream_clip(
    clip: &VideoTensor,
    clip_id: &str,
    stream: StreamSpec,
    config: &ExperimentConfig,
    precomputed_flow: Option<&[crate::motion::FlowField]>,
) -> Result<SpikingTensor, ExperimentError> {
    Ok(latency_encode(
        &preprocess_stream(clip, clip_id, stream, config, precomputed_flow)?,
        1.0,
    ))
}

/// Inference, decoding and pooling of one encoded clip through a trained
/// layer, flattened into the stream's feature vector.
pub fn extract_clip_features(
    spikes: &SpikingTensor,
    clip_id: &str,
    layer: &SpikingConvLayer,
    stream: StreamSpec,
    config: &ExperimentConfig,
) -> Result<FeatureVector, ExperimentError> {
    let maps = infer(spikes, layer).map_err(|e| stage_err("extract", clip_id, e))?;
    let decoded = decode_first_spike(&maps, 1.0);
    let spec = PoolSpec {
        grid_w: config.pool_grid_w,
        grid_h: config.pool_grid_h,
        temporal: stream.temporal_pool(),
    };
    let mut pooled = Vec::with_capacity(decoded.channels());
    for k in 0..decoded.channels() {
        let per_frame: Vec<_> = (0..decoded.temporal_depth())
            .map(|z| sum_pool_spatial(&decoded.plane(k, z), &spec).0)
            .collect();
        let (groups, _) = sum_pool_temporal(&per_frame, spec.temporal);
        pooled.push(groups);
    }
    Ok(flatten(&pooled, stream.id()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::video::{generate_synthetic, SyntheticClass, SynthSpec};

    fn tiny_config() -> ExperimentConfig {
        let mut config = ExperimentConfig::default();
        config.layer.filters = 4;
        config.pool_grid_w = 8;
        config.pool_grid_h = 8;
        config
    }

    fn one_clip() -> VideoTensor {
        let ds = generate_synthetic(&SynthSpec {
            classes: vec![SyntheticClass::BarRight],
            n_per_class: 1,
            seed: 11,
            ..SynthSpec::default()
        })
        .unwrap();
        ds.clips.into_iter().next().unwrap()
    }

    #[test]
    fn stream_representations_have_expected_shapes() {
        let config = tiny_config();
        let clip = one_clip();
        let raw = preprocess_stream(&clip, "c", StreamSpec::Raw2d, &config, None).unwrap();
        assert_eq!((raw.channels(), raw.temporal_depth()), (2, 10));
        let fs = preprocess_stream(&clip, "c", StreamSpec::FrameSubtraction2d, &config, None).unwrap();
        assert_eq!((fs.channels(), fs.temporal_depth()), (2, 9));
        let ef = preprocess_stream(&clip, "c", StreamSpec::EarlyFusion2d, &config, None).unwrap();
        assert_eq!((ef.height(), ef.temporal_depth()), (400, 1));
        let mg = preprocess_stream(&clip, "c", StreamSpec::MotionGrid2d, &config, None).unwrap();
        assert_eq!((mg.width(), mg.height(), mg.temporal_depth()), (160, 360, 1));
        let of = preprocess_stream(&clip, "c", StreamSpec::OpticalFlow2d, &config, None).unwrap();
        assert_eq!((of.channels(), of.temporal_depth()), (6, 9));
    }

    #[test]
    fn feature_lengths_follow_the_pool_budget() {
        let config = tiny_config();
        let clip = one_clip();
        let spikes = encode_stream_clip(&clip, "c", StreamSpec::Raw2d, &config, None).unwrap();
        let layer = SpikingConvLayer::new(
            layer_config_for(StreamSpec::Raw2d, &config.layer),
            stream_in_channels(StreamSpec::Raw2d),
            3,
        )
        .unwrap();
        let fv = extract_clip_features(&spikes, "c", &layer, StreamSpec::Raw2d, &config).unwrap();
        // 8x8 grid, one temporal group, 4 filters
        assert_eq!(fv.len(), 8 * 8 * 4);

        let spikes =
            encode_stream_clip(&clip, "c", StreamSpec::FrameSubtraction2d, &config, None).unwrap();
        let layer = SpikingConvLayer::new(
            layer_config_for(StreamSpec::FrameSubtraction2d, &config.layer),
            2,
            3,
        )
        .unwrap();
        let fv =
            extract_clip_features(&spikes, "c", &layer, StreamSpec::FrameSubtraction2d, &config)
                .unwrap();
        assert_eq!(fv.len(), 8 * 8 * 2 * 4);
    }

    #[test]
    fn encoding_is_deterministic() {
        let config = tiny_config();
        let clip = one_clip();
        let a = encode_stream_clip(&clip, "c", StreamSpec::Raw2d, &config, None).unwrap();
        let b = encode_stream_clip(&clip, "c", StreamSpec::Raw2d, &config, None).unwrap();
        assert_eq!(a, b);
    }
}
