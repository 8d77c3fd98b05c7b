//! Declarative experiment configuration: flat `key = value` lines with
//! dotted section prefixes, diff-able and trivially parsed.

use std::path::{Path, PathBuf};

use super::ExperimentError;
use crate::motion::FlowParams;
use crate::retina::DoGParams;
use crate::video::{ClipSpec, SplitProtocol, SyntheticClass, SynthSpec};

/// The input representation feeding one stream's spiking layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamSpec {
    /// Raw frames through a 2D layer, per-frame maps pooled late into one.
    Raw2d,
    /// Row-interleaved single-frame motion representation, 2D layer.
    EarlyFusion2d,
    /// Optical flow rendered to RGB frames, 2D layer.
    OpticalFlow2d,
    /// Absolute consecutive-frame differences, 2D layer.
    FrameSubtraction2d,
    /// Tiled per-direction flow magnitudes, single frame, 2D layer.
    MotionGrid2d,
    /// Raw frames through a 3D layer (spatio-temporal kernels).
    Raw3d,
}

impl StreamSpec {
    pub fn id(&self) -> &'static str {
        match self {
            Self::Raw2d => "raw-2d",
            Self::EarlyFusion2d => "early-fusion-2d",
            Self::OpticalFlow2d => "optical-flow-2d",
            Self::FrameSubtraction2d => "frame-subtraction-2d",
            Self::MotionGrid2d => "motion-grid-2d",
            Self::Raw3d => "raw-3d",
        }
    }

    pub fn is_3d(&self) -> bool {
        matches!(self, Self::Raw3d)
    }

    /// The input representation feeding the retina codec; 2D and 3D raw
    /// streams share their encoded spikes.
    pub fn rep_id(&self) -> &'static str {
        match self {
            Self::Raw2d | Self::Raw3d => "raw",
            Self::EarlyFusion2d => "early-fusion",
            Self::OpticalFlow2d => "optical-flow",
            Self::FrameSubtraction2d => "frame-subtraction",
            Self::MotionGrid2d => "motion-grid",
        }
    }

    pub fn uses_flow(&self) -> bool {
        matches!(self, Self::OpticalFlow2d | Self::MotionGrid2d)
    }

    /// Temporal pooling depth of the stream's feature budget: single-map
    /// representations (and the late-fused spatial stream) collapse to one,
    /// multi-frame temporal representations keep two halves.
    pub fn temporal_pool(&self) -> usize {
        match self {
            Self::Raw2d | Self::EarlyFusion2d | Self::MotionGrid2d => 1,
            Self::OpticalFlow2d | Self::FrameSubtraction2d | Self::Raw3d => 2,
        }
    }
}

/// The six supported temporal-stream configurations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TemporalKind {
    EarlyFusion,
    OpticalFlow,
    FrameSubtraction,
    MotionGrid,
    Conv3d,
    FrameSubtractionPlusConv3d,
}

impl TemporalKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "early-fusion" => Some(Self::EarlyFusion),
            "optical-flow" => Some(Self::OpticalFlow),
            "frame-subtraction" => Some(Self::FrameSubtraction),
            "motion-grid" => Some(Self::MotionGrid),
            "conv3d" => Some(Self::Conv3d),
            "frame-subtraction+conv3d" => Some(Self::FrameSubtractionPlusConv3d),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::EarlyFusion => "early-fusion",
            Self::OpticalFlow => "optical-flow",
            Self::FrameSubtraction => "frame-subtraction",
            Self::MotionGrid => "motion-grid",
            Self::Conv3d => "conv3d",
            Self::FrameSubtractionPlusConv3d => "frame-subtraction+conv3d",
        }
    }

    /// Resolve the two stream representations: stream A is the spatial
    /// stream (raw frames) except in the combined configuration, where a
    /// frame-subtraction 2D stream takes its place next to the 3D one.
    pub fn streams(&self) -> (StreamSpec, StreamSpec) {
        match self {
            Self::EarlyFusion => (StreamSpec::Raw2d, StreamSpec::EarlyFusion2d),
            Self::OpticalFlow => (StreamSpec::Raw2d, StreamSpec::OpticalFlow2d),
            Self::FrameSubtraction => (StreamSpec::Raw2d, StreamSpec::FrameSubtraction2d),
            Self::MotionGrid => (StreamSpec::Raw2d, StreamSpec::MotionGrid2d),
            Self::Conv3d => (StreamSpec::Raw2d, StreamSpec::Raw3d),
            Self::FrameSubtractionPlusConv3d => {
                (StreamSpec::FrameSubtraction2d, StreamSpec::Raw3d)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetConfig {
    Manifest { path: PathBuf, protocol: SplitProtocol },
    Synthetic(SynthSpec),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerSettings {
    pub filters: usize,
    pub target_time: f64,
    pub patches_per_clip: usize,
    pub epochs: usize,
}

impl Default for LayerSettings {
    fn default() -> Self {
        Self { filters: 64, target_time: 0.65, patches_per_clip: 20, epochs: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvmSettings {
    pub c: f64,
    pub epochs: usize,
}

impl Default for SvmSettings {
    fn default() -> Self {
        Self { c: 1.0, epochs: 200 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    pub dataset: DatasetConfig,
    pub clip: ClipSpec,
    pub codec: DoGParams,
    pub temporal: TemporalKind,
    pub layer: LayerSettings,
    pub pool_grid_w: usize,
    pub pool_grid_h: usize,
    pub svm: SvmSettings,
    pub fusion_l2_normalize: bool,
    pub runs: usize,
    pub seeds: Vec<u64>,
    pub flow: FlowParams,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "experiment".into(),
            dataset: DatasetConfig::Synthetic(SynthSpec::default()),
            clip: ClipSpec::default(),
            codec: DoGParams::default(),
            temporal: TemporalKind::FrameSubtraction,
            layer: LayerSettings::default(),
            pool_grid_w: 20,
            pool_grid_h: 20,
            svm: SvmSettings::default(),
            fusion_l2_normalize: true,
            runs: 3,
            seeds: vec![1, 2, 3],
            flow: FlowParams::default(),
        }
    }
}

fn usage(msg: impl Into<String>) -> ExperimentError {
    ExperimentError::Usage(msg.into())
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ExperimentError> {
        let mut config = Self::default();
        let mut synth = SynthSpec::default();
        let mut manifest_path: Option<PathBuf> = None;
        let mut protocol = SplitProtocol::ClassThirds;
        let mut kind = "synthetic".to_string();
        let mut seeds_given = false;

        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| usage(format!("line {}: expected key = value", lineno + 1)))?;
            let key = key.trim();
            let value = value.trim();
            let parse_usize = |v: &str| {
                v.parse::<usize>().map_err(|_| usage(format!("{key}: bad integer {v:?}")))
            };
            let parse_f64 = |v: &str| {
                v.parse::<f64>().map_err(|_| usage(format!("{key}: bad number {v:?}")))
            };
            let parse_bool = |v: &str| match v {
                "true" | "yes" | "on" => Ok(true),
                "false" | "no" | "off" => Ok(false),
                _ => Err(usage(format!("{key}: bad boolean {v:?}"))),
            };
            match key {
                "name" => config.name = value.to_string(),
                "dataset.kind" => kind = value.to_string(),
                "dataset.manifest.path" => manifest_path = Some(PathBuf::from(value)),
                "dataset.manifest.protocol" => {
                    protocol = SplitProtocol::parse(value)
                        .ok_or_else(|| usage(format!("unknown split protocol {value:?}")))?;
                }
                "dataset.synthetic.classes" => {
                    let classes: Option<Vec<_>> =
                        value.split(',').map(|s| SyntheticClass::parse(s.trim())).collect();
                    synth.classes =
                        classes.ok_or_else(|| usage(format!("bad class list {value:?}")))?;
                }
                "dataset.synthetic.per-class" => synth.n_per_class = parse_usize(value)?,
                "dataset.synthetic.seed" => {
                    synth.seed = value
                        .parse::<u64>()
                        .map_err(|_| usage(format!("{key}: bad seed {value:?}")))?;
                }
                "dataset.synthetic.width" => synth.width = parse_usize(value)?,
                "dataset.synthetic.height" => synth.height = parse_usize(value)?,
                "dataset.synthetic.frames" => synth.frames = parse_usize(value)?,
                "dataset.synthetic.noise" => synth.noise = parse_f64(value)? as f32,
                "dataset.synthetic.bar-width" => synth.bar_width = parse_usize(value)?,
                "clip.frames-per-clip" => config.clip.frames_per_clip = parse_usize(value)?,
                "clip.frame-stride" => config.clip.frame_stride = parse_usize(value)?,
                "clip.spatial-scale" => config.clip.spatial_scale = parse_f64(value)?,
                "codec.dog.size" => config.codec.size = parse_usize(value)?,
                "codec.dog.sigma1" => config.codec.sigma1 = parse_f64(value)?,
                "codec.dog.sigma2" => config.codec.sigma2 = parse_f64(value)?,
                "codec.cutoff" => config.codec.cutoff = parse_f64(value)?,
                "temporal.kind" => {
                    config.temporal = TemporalKind::parse(value)
                        .ok_or_else(|| usage(format!("unknown temporal kind {value:?}")))?;
                }
                "layer.filters" => config.layer.filters = parse_usize(value)?,
                "layer.target-time" => config.layer.target_time = parse_f64(value)?,
                "layer.patches-per-clip" => config.layer.patches_per_clip = parse_usize(value)?,
                "layer.epochs" => config.layer.epochs = parse_usize(value)?,
                "pool.grid-width" => config.pool_grid_w = parse_usize(value)?,
                "pool.grid-height" => config.pool_grid_h = parse_usize(value)?,
                "svm.c" => config.svm.c = parse_f64(value)?,
                "svm.epochs" => config.svm.epochs = parse_usize(value)?,
                "fusion.l2-normalize" => config.fusion_l2_normalize = parse_bool(value)?,
                "runs" => config.runs = parse_usize(value)?,
                "seeds" => {
                    let seeds: Result<Vec<u64>, _> =
                        value.split(',').map(|s| s.trim().parse::<u64>()).collect();
                    config.seeds =
                        seeds.map_err(|_| usage(format!("bad seed list {value:?}")))?;
                    seeds_given = true;
                }
                "flow.levels" => config.flow.levels = parse_usize(value)?,
                "flow.window" => config.flow.window = parse_usize(value)?,
                "flow.iterations" => config.flow.iterations = parse_usize(value)?,
                "flow.poly-n" => config.flow.poly_n = parse_usize(value)?,
                "flow.poly-sigma" => config.flow.poly_sigma = parse_f64(value)?,
                _ => return Err(usage(format!("unknown config key {key:?}"))),
            }
        }
        config.dataset = match kind.as_str() {
            "synthetic" => DatasetConfig::Synthetic(synth),
            "manifest" => DatasetConfig::Manifest {
                path: manifest_path
                    .ok_or_else(|| usage("dataset.manifest.path required for manifest kind"))?,
                protocol,
            },
            other => return Err(usage(format!("unknown dataset kind {other:?}"))),
        };
        if !seeds_given {
            config.seeds = (1..=config.runs as u64).collect();
        }
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.runs < 1 {
            return Err(usage("runs must be >= 1"));
        }
        if self.seeds.len() != self.runs {
            return Err(usage(format!(
                "seeds length {} must equal runs {}",
                self.seeds.len(),
                self.runs
            )));
        }
        if self.pool_grid_w < 1 || self.pool_grid_h < 1 {
            return Err(usage("pool grid dims must be >= 1"));
        }
        self.clip.validate().map_err(|e| usage(e.to_string()))?;
        self.codec.validate().map_err(|e| usage(e.to_string()))?;
        self.flow.validate().map_err(|e| usage(e.to_string()))?;
        if let DatasetConfig::Synthetic(s) = &self.dataset {
            if s.classes.is_empty() || s.n_per_class < 1 {
                return Err(usage("synthetic dataset needs classes and per-class count"));
            }
        }
        if !(self.layer.target_time > 0.0 && self.layer.target_time < 1.0) {
            return Err(usage("layer.target-time must lie in (0, 1)"));
        }
        if self.layer.filters < 1 {
            return Err(usage("layer.filters must be >= 1"));
        }
        Ok(())
    }

    pub fn streams(&self) -> (StreamSpec, StreamSpec) {
        self.temporal.streams()
    }

    /// Canonical serialization used for cache keys and config echoing; every
    /// field appears, in fixed order.
    pub fn canonical(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("name = {}\n", self.name));
        match &self.dataset {
            DatasetConfig::Synthetic(s) => {
                out.push_str("dataset.kind = synthetic\n");
                let classes: Vec<&str> = s.classes.iter().map(|c| c.name()).collect();
                out.push_str(&format!("dataset.synthetic.classes = {}\n", classes.join(",")));
                out.push_str(&format!("dataset.synthetic.per-class = {}\n", s.n_per_class));
                out.push_str(&format!("dataset.synthetic.seed = {}\n", s.seed));
                out.push_str(&format!("dataset.synthetic.width = {}\n", s.width));
                out.push_str(&format!("dataset.synthetic.height = {}\n", s.height));
                out.push_str(&format!("dataset.synthetic.frames = {}\n", s.frames));
                out.push_str(&format!("dataset.synthetic.noise = {}\n", s.noise));
                out.push_str(&format!("dataset.synthetic.bar-width = {}\n", s.bar_width));
            }
            DatasetConfig::Manifest { path, protocol } => {
                out.push_str("dataset.kind = manifest\n");
                out.push_str(&format!("dataset.manifest.path = {}\n", path.display()));
                out.push_str(&format!("dataset.manifest.protocol = {}\n", protocol.name()));
            }
        }
        out.push_str(&format!("clip.frames-per-clip = {}\n", self.clip.frames_per_clip));
        out.push_str(&format!("clip.frame-stride = {}\n", self.clip.frame_stride));
        out.push_str(&format!("clip.spatial-scale = {}\n", self.clip.spatial_scale));
        out.push_str(&format!("codec.dog.size = {}\n", self.codec.size));
        out.push_str(&format!("codec.dog.sigma1 = {}\n", self.codec.sigma1));
        out.push_str(&format!("codec.dog.sigma2 = {}\n", self.codec.sigma2));
        out.push_str(&format!("codec.cutoff = {}\n", self.codec.cutoff));
        out.push_str(&format!("temporal.kind = {}\n", self.temporal.name()));
        out.push_str(&format!("layer.filters = {}\n", self.layer.filters));
        out.push_str(&format!("layer.target-time = {}\n", self.layer.target_time));
        out.push_str(&format!("layer.patches-per-clip = {}\n", self.layer.patches_per_clip));
        out.push_str(&format!("layer.epochs = {}\n", self.layer.epochs));
        out.push_str(&format!("pool.grid-width = {}\n", self.pool_grid_w));
        out.push_str(&format!("pool.grid-height = {}\n", self.pool_grid_h));
        out.push_str(&format!("svm.c = {}\n", self.svm.c));
        out.push_str(&format!("svm.epochs = {}\n", self.svm.epochs));
        out.push_str(&format!("fusion.l2-normalize = {}\n", self.fusion_l2_normalize));
        out.push_str(&format!("runs = {}\n", self.runs));
        let seeds: Vec<String> = self.seeds.iter().map(|s| s.to_string()).collect();
        out.push_str(&format!("seeds = {}\n", seeds.join(",")));
        out.push_str(&format!("flow.levels = {}\n", self.flow.levels));
        out.push_str(&format!("flow.window = {}\n", self.flow.window));
        out.push_str(&format!("flow.iterations = {}\n", self.flow.iterations));
        out.push_str(&format!("flow.poly-n = {}\n", self.flow.poly_n));
        out.push_str(&format!("flow.poly-sigma = {}\n", self.flow.poly_sigma));
        out
    }

    /// Config slice that determines a stream's encoded spikes.
    pub fn encode_scope(&self, stream: StreamSpec) -> String {
        let mut scope = String::new();
        match &self.dataset {
            DatasetConfig::Synthetic(s) => {
                let classes: Vec<&str> = s.classes.iter().map(|c| c.name()).collect();
                scope.push_str(&format!(
                    "synthetic:{}:{}:{}:{}x{}x{}:{}:{}\n",
                    classes.join(","),
                    s.n_per_class,
                    s.seed,
                    s.width,
                    s.height,
                    s.frames,
                    s.noise,
                    s.bar_width
                ));
            }
            DatasetConfig::Manifest { path, protocol } => {
                scope.push_str(&format!("manifest:{}:{}\n", path.display(), protocol.name()));
                scope.push_str(&format!(
                    "clip:{}:{}:{}\n",
                    self.clip.frames_per_clip, self.clip.frame_stride, self.clip.spatial_scale
                ));
            }
        }
        scope.push_str(&format!(
            "codec:{}:{}:{}:{}\n",
            self.codec.size, self.codec.sigma1, self.codec.sigma2, self.codec.cutoff
        ));
        scope.push_str(&format!("rep:{}\n", stream.rep_id()));
        if stream.uses_flow() {
            scope.push_str(&format!(
                "flow:{}:{}:{}:{}:{}\n",
                self.flow.levels,
                self.flow.window,
                self.flow.iterations,
                self.flow.poly_n,
                self.flow.poly_sigma
            ));
        }
        scope
    }

    /// Config slice that determines a trained layer for (stream, run).
    pub fn train_scope(&self, stream: StreamSpec, run_seed: u64) -> String {
        format!(
            "{}layer:{}:{}:{}:{}:3d={}\nseed:{run_seed}\n",
            self.encode_scope(stream),
            self.layer.filters,
            self.layer.target_time,
            self.layer.patches_per_clip,
            self.layer.epochs,
            stream.is_3d(),
        )
    }

    /// Config slice that determines extracted features for (stream, run).
    pub fn feature_scope(&self, stream: StreamSpec, run_seed: u64) -> String {
        format!(
            "{}pool:{}:{}:{}\n",
            self.train_scope(stream, run_seed),
            self.pool_grid_w,
            self.pool_grid_h,
            stream.temporal_pool()
        )
    }
}
