//! Seeded synthetic motion micro-datasets.
//!
//! Motion classes show a bright bar sweeping across a static textured, noisy
//! background; appearance classes are distinct static textures. Texture and
//! motion are correlated by class (checkerboard for horizontal motion,
//! diagonal stripes for vertical), so appearance alone carries partial
//! information while motion direction carries the rest.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::manifest::{DatasetManifest, Sample, SplitProtocol};
use super::tensor::VideoTensor;
use super::VideoError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyntheticClass {
    BarLeft,
    BarRight,
    BarUp,
    BarDown,
    StaticA,
    StaticB,
}

impl SyntheticClass {
    pub const ALL: [SyntheticClass; 6] = [
        Self::BarLeft,
        Self::BarRight,
        Self::BarUp,
        Self::BarDown,
        Self::StaticA,
        Self::StaticB,
    ];

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "bar-left" => Some(Self::BarLeft),
            "bar-right" => Some(Self::BarRight),
            "bar-up" => Some(Self::BarUp),
            "bar-down" => Some(Self::BarDown),
            "static-A" | "static-a" => Some(Self::StaticA),
            "static-B" | "static-b" => Some(Self::StaticB),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::BarLeft => "bar-left",
            Self::BarRight => "bar-right",
            Self::BarUp => "bar-up",
            Self::BarDown => "bar-down",
            Self::StaticA => "static-A",
            Self::StaticB => "static-B",
        }
    }

    fn is_motion(&self) -> bool {
        !matches!(self, Self::StaticA | Self::StaticB)
    }

    /// Horizontal-motion and static-A clips share the checkerboard texture;
    /// vertical-motion and static-B clips share the stripes.
    fn texture(&self) -> Texture {
        match self {
            Self::BarLeft | Self::BarRight | Self::StaticA => Texture::Checker,
            Self::BarUp | Self::BarDown | Self::StaticB => Texture::Stripes,
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Texture {
    Checker,
    Stripes,
}

impl Texture {
    fn value(&self, x: usize, y: usize, phase_x: usize, phase_y: usize) -> f32 {
        let (x, y) = (x + phase_x, y + phase_y);
        let on = match self {
            Texture::Checker => (x / 4 + y / 4) % 2 == 0,
            Texture::Stripes => ((x + y) / 4) % 2 == 0,
        };
        if on {
            0.35
        } else {
            0.15
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub classes: Vec<SyntheticClass>,
    pub n_per_class: usize,
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    /// Uniform noise amplitude added to the background, frozen per clip.
    pub noise: f32,
    pub bar_width: usize,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            classes: SyntheticClass::ALL.to_vec(),
            n_per_class: 5,
            seed: 0,
            width: 40,
            height: 40,
            frames: 10,
            noise: 0.08,
            bar_width: 3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub manifest: DatasetManifest,
    /// `clips[i]` is the clip for `manifest.samples[i]`.
    pub clips: Vec<VideoTensor>,
}

pub fn generate_synthetic(spec: &SynthSpec) -> Result<SyntheticDataset, VideoError> {
    if spec.n_per_class < 1 || spec.classes.is_empty() {
        return Err(VideoError::Manifest("need at least one class and one clip".into()));
    }
    if spec.width < 16 || spec.height < 16 || spec.frames < 1 {
        return Err(VideoError::InvalidDims("synthetic clips must be at least 16x16x1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut samples = Vec::new();
    let mut clips = Vec::new();
    for class in &spec.classes {
        for i in 0..spec.n_per_class {
            let clip_id = format!("{}_{:03}", class.name(), i);
            samples.push(Sample {
                clip_id: clip_id.clone(),
                subject: format!("s{:02}", i % 5),
                label: class.name().to_string(),
                path: format!("clips/{clip_id}.vt").into(),
            });
            clips.push(render_clip(spec, *class, &mut rng));
        }
    }
    let manifest = DatasetManifest::from_samples(samples, SplitProtocol::ClassThirds)?;
    Ok(SyntheticDataset { manifest, clips })
}

fn render_clip(spec: &SynthSpec, class: SyntheticClass, rng: &mut ChaCha8Rng) -> VideoTensor {
    let (w, h) = (spec.width, spec.height);
    let phase_x = rng.gen_range(0..8usize);
    let phase_y = rng.gen_range(0..8usize);
    let speed = rng.gen_range(1..=2usize);
    let start_jitter = rng.gen_range(0..4usize);
    let texture = class.texture();

    // Static background, frozen across frames so motion is the only change.
    let mut background = vec![0.0f32; w * h];
    for y in 0..h {
        for x in 0..w {
            let noise = if spec.noise > 0.0 { rng.gen_range(0.0..spec.noise) } else { 0.0 };
            background[y * w + x] = (texture.value(x, y, phase_x, phase_y) + noise).clamp(0.0, 1.0);
        }
    }

    let margin = 2usize;
    let bar_w = spec.bar_width;
    let mut tensor = VideoTensor::zeros(w, h, 1, spec.frames);
    for n in 0..spec.frames {
        let mut frame = background.clone();
        if class.is_motion() {
            // Opposite directions traverse the same span in reversed time
            // order, so time-pooled appearance cannot reveal direction.
            let step = |k: usize| margin + start_jitter + speed * k;
            let rev = spec.frames - 1 - n;
            let (axis_len, pos) = match class {
                SyntheticClass::BarRight => (w, step(n).min(w - bar_w)),
                SyntheticClass::BarLeft => (w, step(rev).min(w - bar_w)),
                SyntheticClass::BarDown => (h, step(n).min(h - bar_w)),
                SyntheticClass::BarUp => (h, step(rev).min(h - bar_w)),
                _ => unreachable!(),
            };
            debug_assert!(pos + bar_w <= axis_len);
            match class {
                SyntheticClass::BarRight | SyntheticClass::BarLeft => {
                    for y in 0..h {
                        for x in pos..pos + bar_w {
                            frame[y * w + x] = 1.0;
                        }
                    }
                }
                SyntheticClass::BarDown | SyntheticClass::BarUp => {
                    for y in pos..pos + bar_w {
                        for x in 0..w {
                            frame[y * w + x] = 1.0;
                        }
                    }
                }
                _ => unreachable!(),
            }
        }
        for y in 0..h {
            for x in 0..w {
                tensor.set(x, y, 0, n, frame[y * w + x]);
            }
        }
    }
    tensor
}
