//! Event-driven two-stream spiking convolutional networks for video, trained
//! with unsupervised STDP and evaluated through a deterministic experiment
//! harness.
//!
//! The crate is organized along the pipeline:
//!
//! * [`video`] — clip ingestion, frame sampling, dataset manifests and splits,
//!   plus the synthetic motion micro-datasets used by the test benches.
//! * [`retina`] — on-center/off-center DoG preprocessing, intensity cutoff,
//!   latency coding into spikes and first-spike decoding back to values.
//! * [`motion`] — temporal-stream input representations: early fusion, frame
//!   subtraction, dense optical flow, HSV flow rendering and the motion grid.
//! * [`snn`] — integrate-and-fire neurons, 2D/3D spiking convolution,
//!   winner-takes-all competition, STDP updates and threshold homeostasis.
//! * [`features`] — sum pooling, flattening and stream fusion.
//! * [`classifier`] — linear one-vs-rest SVM readout and run aggregation.
//! * [`experiment`] — declarative configs, the content-addressed artifact
//!   cache, pipeline stages and the end-to-end experiment runner.

pub mod classifier;
pub mod experiment;
pub mod features;
pub mod motion;
pub mod retina;
pub mod snn;
pub mod video;
