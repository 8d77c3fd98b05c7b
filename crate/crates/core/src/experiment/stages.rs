//! File-based pipeline stages. Each stage reads the artifacts of its
//! upstream stages out of the workspace, writes its own under a keyed
//! directory, and is skipped when the key already matches, so composing the
//! stages by hand produces the same bytes as the monolithic runner.

use std::collections::BTreeSet;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use super::cache::{atomic_write, content_key, PipelineCache};
use super::config::{DatasetConfig, ExperimentConfig, StreamSpec};
use super::pipeline::{
    encode_stream_clip, extract_clip_features, layer_config_for, stream_in_channels,
};
use super::{derive_seed, ExperimentError};
use crate::classifier::{evaluate, save_model, train_svm, Evaluation, SvmParams};
use crate::features::{fuse_concat, read_features, write_features, FeatureVector};
use crate::retina::{read_spike_dump, write_spike_dump, SpikingTensor};
use crate::snn::{load_layer, save_layer, train_layer, SpikingConvLayer, TrainOptions};
use crate::video::{
    generate_synthetic, load_clip, make_splits, read_clip, read_manifest, write_clip,
    write_manifest, DatasetManifest, Split, VideoTensor,
};

/// Which of the two streams a stage operates on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamRole {
    A,
    B,
}

impl StreamRole {
    pub fn resolve(&self, config: &ExperimentConfig) -> StreamSpec {
        let (a, b) = config.streams();
        match self {
            Self::A => a,
            Self::B => b,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "a" | "A" | "spatial" => Some(Self::A),
            "b" | "B" | "temporal" => Some(Self::B),
            _ => None,
        }
    }
}

/// Result column: each stream alone plus the fusion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Column {
    Stream(StreamRole),
    Fused,
}

impl Column {
    pub fn id(&self, config: &ExperimentConfig) -> String {
        match self {
            Self::Stream(role) => role.resolve(config).id().to_string(),
            Self::Fused => "fused".to_string(),
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "fused" => Some(Self::Fused),
            other => StreamRole::parse(other).map(Self::Stream),
        }
    }
}

fn data_err(msg: impl Into<String>) -> ExperimentError {
    ExperimentError::Data(msg.into())
}

fn sanitize_id(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' })
        .collect()
}

fn run_seed(config: &ExperimentConfig, run: usize) -> Result<u64, ExperimentError> {
    config
        .seeds
        .get(run)
        .copied()
        .ok_or_else(|| ExperimentError::Usage(format!("run index {run} out of range")))
}

// ---------------------------------------------------------------------------
// dataset

fn dataset_scope(config: &ExperimentConfig) -> String {
    match &config.dataset {
        DatasetConfig::Synthetic(s) => {
            let classes: Vec<&str> = s.classes.iter().map(|c| c.name()).collect();
            format!(
                "synthetic:{}:{}:{}:{}x{}x{}:{}:{}",
                classes.join(","),
                s.n_per_class,
                s.seed,
                s.width,
                s.height,
                s.frames,
                s.noise,
                s.bar_width
            )
        }
        DatasetConfig::Manifest { path, protocol } => {
            format!("manifest:{}:{}", path.display(), protocol.name())
        }
    }
}

/// Materialize a synthetic dataset into the workspace (clips + manifest).
/// For manifest datasets this is a no-op returning the configured path.
pub fn stage_synth(
    config: &ExperimentConfig,
    cache: &mut PipelineCache,
) -> Result<PathBuf, ExperimentError> {
    match &config.dataset {
        DatasetConfig::Manifest { path, .. } => Ok(path.clone()),
        DatasetConfig::Synthetic(spec) => {
            let key = content_key(&["synth", &dataset_scope(config)]);
            let (dir, ready) = cache.stage_dir("dataset", &key)?;
            let manifest_path = dir.join("manifest.tsv");
            if ready {
                return Ok(manifest_path);
            }
            let ds = generate_synthetic(spec)
                .map_err(|e| ExperimentError::Stage { stage: "synth".into(), detail: e.to_string() })?;
            let clips_dir = dir.join("clips");
            fs::create_dir_all(&clips_dir)
                .map_err(|e| ExperimentError::Internal(format!("mkdir clips: {e}")))?;
            for (sample, clip) in ds.manifest.samples.iter().zip(&ds.clips) {
                let path = dir.join(&sample.path);
                write_clip(&path, clip).map_err(|e| ExperimentError::Stage {
                    stage: "synth".into(),
                    detail: format!("{}: {e}", sample.clip_id),
                })?;
            }
            write_manifest(&manifest_path, &ds.manifest)
                .map_err(|e| ExperimentError::Stage { stage: "synth".into(), detail: e.to_string() })?;
            cache.commit(&dir, &key)?;
            Ok(manifest_path)
        }
    }
}

/// Load the manifest (materializing synthetic data first if needed).
pub fn load_dataset(
    config: &ExperimentConfig,
    cache: &mut PipelineCache,
) -> Result<DatasetManifest, ExperimentError> {
    let manifest_path = stage_synth(config, cache)?;
    let protocol = match &config.dataset {
        DatasetConfig::Manifest { protocol, .. } => *protocol,
        DatasetConfig::Synthetic(_) => crate::video::SplitProtocol::ClassThirds,
    };
    let manifest = read_manifest(&manifest_path, protocol).map_err(|e| data_err(e.to_string()))?;
    let mut seen = BTreeSet::new();
    for s in &manifest.samples {
        if !seen.insert(sanitize_id(&s.clip_id)) {
            return Err(data_err(format!(
                "clip id {:?} is not unique after sanitization",
                s.clip_id
            )));
        }
    }
    Ok(manifest)
}

fn load_sample_clip(
    config: &ExperimentConfig,
    sample_path: &Path,
) -> Result<VideoTensor, ExperimentError> {
    match &config.dataset {
        // synthetic clips are generated in final form; the sampling protocol
        // applies to external frame data
        DatasetConfig::Synthetic(_) => {
            read_clip(sample_path).map_err(|e| data_err(e.to_string()))
        }
        DatasetConfig::Manifest { .. } => {
            load_clip(sample_path, &config.clip).map_err(|e| data_err(e.to_string()))
        }
    }
}

// ---------------------------------------------------------------------------
// encode

fn encode_key(config: &ExperimentConfig, stream: StreamSpec) -> String {
    content_key(&["encode", &config.encode_scope(stream)])
}

fn encoded_stage_name(stream: StreamSpec) -> String {
    format!("encoded/{}", stream.rep_id())
}

/// Encode every clip of the dataset for one stream: spike dump plus a stats
/// sidecar (dims, event count, mean spike time).
pub fn stage_encode(
    config: &ExperimentConfig,
    cache: &mut PipelineCache,
    role: StreamRole,
) -> Result<(), ExperimentError> {
    let stream = role.resolve(config);
    let key = encode_key(config, stream);
    let (dir, ready) = cache.stage_dir(&encoded_stage_name(stream), &key)?;
    if ready {
        return Ok(());
    }
    let manifest = load_dataset(config, cache)?;
    for sample in &manifest.samples {
        let clip = load_sample_clip(config, &sample.path)?;
        // a sibling .flow file supplies precomputed optical flow
        let flow_path = sample.path.with_extension("flow");
        let precomputed = if stream.uses_flow() && flow_path.is_file() {
            Some(
                crate::motion::read_flow_file(&flow_path)
                    .map_err(|e| data_err(format!("{}: {e}", flow_path.display())))?,
            )
        } else {
            None
        };
        let spikes =
            encode_stream_clip(&clip, &sample.clip_id, stream, config, precomputed.as_deref())?;
        write_encoded(&dir, &sample.clip_id, &spikes)?;
    }
    cache.commit(&dir, &key)?;
    Ok(())
}

fn write_encoded(
    dir: &Path,
    clip_id: &str,
    spikes: &SpikingTensor,
) -> Result<(), ExperimentError> {
    let base = sanitize_id(clip_id);
    let mut dump = Vec::new();
    write_spike_dump(&mut dump, spikes)
        .map_err(|e| ExperimentError::Internal(format!("dump {clip_id}: {e}")))?;
    atomic_write(&dir.join(format!("{base}.spikes")), &dump)?;
    let stats = format!(
        "width={}\nheight={}\nchannels={}\ntemporal_depth={}\nevents={}\nmean_spike_time={}\n",
        spikes.width(),
        spikes.height(),
        spikes.channels(),
        spikes.temporal_depth(),
        spikes.len(),
        spikes.mean_spike_time()
    );
    atomic_write(&dir.join(format!("{base}.stats")), stats.as_bytes())
}

pub fn read_encoded(dir: &Path, clip_id: &str) -> Result<SpikingTensor, ExperimentError> {
    let base = sanitize_id(clip_id);
    let stats_path = dir.join(format!("{base}.stats"));
    let stats = fs::read_to_string(&stats_path)
        .map_err(|e| data_err(format!("missing stats {}: {e}", stats_path.display())))?;
    let mut dims = (0usize, 0usize, 0usize, 0usize);
    for line in stats.lines() {
        if let Some((k, v)) = line.split_once('=') {
            let v = v.trim();
            match k.trim() {
                "width" => dims.0 = v.parse().unwrap_or(0),
                "height" => dims.1 = v.parse().unwrap_or(0),
                "channels" => dims.2 = v.parse().unwrap_or(0),
                "temporal_depth" => dims.3 = v.parse().unwrap_or(0),
                _ => {}
            }
        }
    }
    let dump_path = dir.join(format!("{base}.spikes"));
    let file = fs::File::open(&dump_path)
        .map_err(|e| data_err(format!("missing spike dump {}: {e}", dump_path.display())))?;
    read_spike_dump(&mut BufReader::new(file), dims)
        .map_err(|e| data_err(format!("{}: {e}", dump_path.display())))
}

fn require_encoded(
    config: &ExperimentConfig,
    cache: &PipelineCache,
    stream: StreamSpec,
) -> Result<PathBuf, ExperimentError> {
    cache
        .peek(&encoded_stage_name(stream), &encode_key(config, stream))
        .ok_or_else(|| {
            data_err(format!(
                "encoded spikes for stream {} not found; run `encode --stream {}` first",
                stream.id(),
                stream.id()
            ))
        })
}

// ---------------------------------------------------------------------------
// train

fn train_key(config: &ExperimentConfig, stream: StreamSpec, seed: u64) -> String {
    content_key(&["train", &config.train_scope(stream, seed)])
}

fn layers_stage_name(stream: StreamSpec, run: usize) -> String {
    format!("layers/{}/run{}", stream.id(), run + 1)
}

/// Train the stream's layer for one run, one checkpoint per fold.
pub fn stage_train(
    config: &ExperimentConfig,
    cache: &mut PipelineCache,
    role: StreamRole,
    run: usize,
) -> Result<(), ExperimentError> {
    let stream = role.resolve(config);
    let seed = run_seed(config, run)?;
    let key = train_key(config, stream, seed);
    let (dir, ready) = cache.stage_dir(&layers_stage_name(stream, run), &key)?;
    if ready {
        return Ok(());
    }
    let encoded_dir = require_encoded(config, cache, stream)?;
    let manifest = load_dataset(config, cache)?;
    let splits = make_splits(&manifest).map_err(|e| data_err(e.to_string()))?;
    for (f, split) in splits.iter().enumerate() {
        let clips: Vec<SpikingTensor> = split
            .train
            .iter()
            .map(|&i| read_encoded(&encoded_dir, &manifest.samples[i].clip_id))
            .collect::<Result<_, _>>()?;
        let layer_seed = derive_seed(seed, &format!("layer/{}/fold{f}", stream.id()));
        let mut layer = SpikingConvLayer::new(
            layer_config_for(stream, &config.layer),
            stream_in_channels(stream),
            layer_seed,
        )
        .map_err(|e| ExperimentError::Stage { stage: "train".into(), detail: e.to_string() })?;
        let options = TrainOptions {
            patches_per_clip: config.layer.patches_per_clip,
            epochs: config.layer.epochs,
        };
        let stats = train_layer(&mut layer, &clips, &options)
            .map_err(|e| ExperimentError::Stage { stage: "train".into(), detail: e.to_string() })?;
        save_layer(&dir.join(format!("fold{f}.layer")), &layer)
            .map_err(|e| ExperimentError::Internal(e.to_string()))?;
        let stats_text = format!(
            "patches_presented={}\npatches_fired={}\nstdp_updates={}\nstalled_epochs={}\n",
            stats.patches_presented,
            stats.patches_fired,
            stats.stdp_updates,
            stats.stalled_epochs.len()
        );
        atomic_write(&dir.join(format!("fold{f}.stats")), stats_text.as_bytes())?;
    }
    cache.commit(&dir, &key)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// extract

fn feature_key(config: &ExperimentConfig, stream: StreamSpec, seed: u64) -> String {
    content_key(&["features", &config.feature_scope(stream, seed)])
}

fn features_stage_name(id: &str, run: usize) -> String {
    format!("features/{id}/run{}", run + 1)
}

/// Extract pooled feature vectors for every sample of every fold.
pub fn stage_extract(
    config: &ExperimentConfig,
    cache: &mut PipelineCache,
    role: StreamRole,
    run: usize,
) -> Result<(), ExperimentError> {
    let stream = role.resolve(config);
    let seed = run_seed(config, run)?;
    let key = feature_key(config, stream, seed);
    let (dir, ready) = cache.stage_dir(&features_stage_name(stream.id(), run), &key)?;
    if ready {
        return Ok(());
    }
    let encoded_dir = require_encoded(config, cache, stream)?;
    let layers_dir = cache
        .peek(&layers_stage_name(stream, run), &train_key(config, stream, seed))
        .ok_or_else(|| {
            data_err(format!(
                "trained layer for stream {} run {} not found; run `train-stream` first",
                stream.id(),
                run + 1
            ))
        })?;
    let manifest = load_dataset(config, cache)?;
    let splits = make_splits(&manifest).map_err(|e| data_err(e.to_string()))?;
    for (f, split) in splits.iter().enumerate() {
        let layer = load_layer(&layers_dir.join(format!("fold{f}.layer")))
            .map_err(|e| data_err(e.to_string()))?;
        let fold_dir = dir.join(format!("fold{f}"));
        fs::create_dir_all(&fold_dir)
            .map_err(|e| ExperimentError::Internal(format!("mkdir fold: {e}")))?;
        for &i in split.train.iter().chain(&split.test) {
            let sample = &manifest.samples[i];
            let spikes = read_encoded(&encoded_dir, &sample.clip_id)?;
            let fv = extract_clip_features(&spikes, &sample.clip_id, &layer, stream, config)?;
            write_features(
                &fold_dir.join(format!("{}.feat", sanitize_id(&sample.clip_id))),
                &fv,
            )
            .map_err(|e| ExperimentError::Stage {
                stage: "extract".into(),
                detail: format!("{}: {e}", sample.clip_id),
            })?;
        }
    }
    cache.commit(&dir, &key)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// fuse

fn fused_key(config: &ExperimentConfig, seed: u64) -> String {
    let (a, b) = config.streams();
    content_key(&[
        "fused",
        &config.feature_scope(a, seed),
        &config.feature_scope(b, seed),
        &format!("l2={}", config.fusion_l2_normalize),
    ])
}

/// Fuse both streams' features per sample (stream A slice first).
pub fn stage_fuse(
    config: &ExperimentConfig,
    cache: &mut PipelineCache,
    run: usize,
) -> Result<(), ExperimentError> {
    let seed = run_seed(config, run)?;
    let (a, b) = config.streams();
    let key = fused_key(config, seed);
    let (dir, ready) = cache.stage_dir(&features_stage_name("fused", run), &key)?;
    if ready {
        return Ok(());
    }
    let dir_a = require_features(config, cache, a, run)?;
    let dir_b = require_features(config, cache, b, run)?;
    let manifest = load_dataset(config, cache)?;
    let splits = make_splits(&manifest).map_err(|e| data_err(e.to_string()))?;
    for (f, split) in splits.iter().enumerate() {
        let fold_dir = dir.join(format!("fold{f}"));
        fs::create_dir_all(&fold_dir)
            .map_err(|e| ExperimentError::Internal(format!("mkdir fold: {e}")))?;
        for &i in split.train.iter().chain(&split.test) {
            let name = format!("{}.feat", sanitize_id(&manifest.samples[i].clip_id));
            let fa = read_features(&dir_a.join(format!("fold{f}")).join(&name))
                .map_err(|e| data_err(e.to_string()))?;
            let fb = read_features(&dir_b.join(format!("fold{f}")).join(&name))
                .map_err(|e| data_err(e.to_string()))?;
            let fused = fuse_concat(&fa, &fb, config.fusion_l2_normalize).map_err(|e| {
                ExperimentError::Stage {
                    stage: "fuse".into(),
                    detail: format!("{}: {e}", manifest.samples[i].clip_id),
                }
            })?;
            write_features(&fold_dir.join(&name), &fused)
                .map_err(|e| ExperimentError::Internal(e.to_string()))?;
        }
    }
    cache.commit(&dir, &key)?;
    Ok(())
}

fn require_features(
    config: &ExperimentConfig,
    cache: &PipelineCache,
    stream: StreamSpec,
    run: usize,
) -> Result<PathBuf, ExperimentError> {
    let seed = config.seeds[run];
    cache
        .peek(&features_stage_name(stream.id(), run), &feature_key(config, stream, seed))
        .ok_or_else(|| {
            data_err(format!(
                "features for stream {} run {} not found; run `extract` first",
                stream.id(),
                run + 1
            ))
        })
}

// ---------------------------------------------------------------------------
// classify

fn classify_key(config: &ExperimentConfig, column: Column, seed: u64) -> String {
    let upstream = match column {
        Column::Stream(role) => {
            let stream = role.resolve(config);
            config.feature_scope(stream, seed)
        }
        Column::Fused => {
            let (a, b) = config.streams();
            format!(
                "{}{}l2={}",
                config.feature_scope(a, seed),
                config.feature_scope(b, seed),
                config.fusion_l2_normalize
            )
        }
    };
    content_key(&[
        "classify",
        &upstream,
        &format!("svm:{}:{}:seed={seed}", config.svm.c, config.svm.epochs),
    ])
}

fn results_stage_name(column_id: &str, run: usize) -> String {
    format!("results/{column_id}/run{}", run + 1)
}

/// One run's accuracy for a column: train the SVM on each fold's training
/// features, evaluate the fold's test features, and merge folds
/// sample-weighted.
pub fn stage_classify(
    config: &ExperimentConfig,
    cache: &mut PipelineCache,
    column: Column,
    run: usize,
) -> Result<Evaluation, ExperimentError> {
    let seed = run_seed(config, run)?;
    let column_id = column.id(config);
    let key = classify_key(config, column, seed);
    let (dir, ready) = cache.stage_dir(&results_stage_name(&column_id, run), &key)?;
    if ready {
        return read_result(&dir);
    }
    let features_dir = match column {
        Column::Stream(role) => require_features(config, cache, role.resolve(config), run)?,
        Column::Fused => cache
            .peek(&features_stage_name("fused", run), &fused_key(config, seed))
            .ok_or_else(|| {
                data_err(format!("fused features for run {} not found; run `fuse` first", run + 1))
            })?,
    };
    let manifest = load_dataset(config, cache)?;
    let splits = make_splits(&manifest).map_err(|e| data_err(e.to_string()))?;
    let n_classes = manifest.class_names.len();
    let mut folds = Vec::with_capacity(splits.len());
    for (f, split) in splits.iter().enumerate() {
        let fold_dir = features_dir.join(format!("fold{f}"));
        let gather = |ids: &[usize]| -> Result<(Vec<Vec<f32>>, Vec<usize>), ExperimentError> {
            let mut features = Vec::with_capacity(ids.len());
            let mut labels = Vec::with_capacity(ids.len());
            for &i in ids {
                let sample = &manifest.samples[i];
                let fv: FeatureVector = read_features(
                    &fold_dir.join(format!("{}.feat", sanitize_id(&sample.clip_id))),
                )
                .map_err(|e| data_err(e.to_string()))?;
                features.push(fv.values);
                labels.push(manifest.class_index(&sample.label).ok_or_else(|| {
                    ExperimentError::Internal(format!("label {:?} missing", sample.label))
                })?);
            }
            Ok((features, labels))
        };
        let (train_x, train_y) = gather(&split.train)?;
        let (test_x, test_y) = gather(&split.test)?;
        let svm_seed = derive_seed(seed, &format!("svm/{column_id}/fold{f}"));
        let params = SvmParams { c: config.svm.c, epochs: config.svm.epochs };
        let model = train_svm(&train_x, &train_y, n_classes, &params, svm_seed).map_err(|e| {
            ExperimentError::Stage { stage: "classify".into(), detail: e.to_string() }
        })?;
        save_model(&dir.join(format!("fold{f}.svm")), &model)
            .map_err(|e| ExperimentError::Internal(e.to_string()))?;
        let eval = evaluate(&model, &test_x, &test_y).map_err(|e| ExperimentError::Stage {
            stage: "classify".into(),
            detail: e.to_string(),
        })?;
        folds.push(eval);
    }
    let merged = Evaluation::merge(&folds);
    write_result(&dir, &merged)?;
    cache.commit(&dir, &key)?;
    Ok(merged)
}

fn write_result(dir: &Path, eval: &Evaluation) -> Result<(), ExperimentError> {
    let rows: Vec<String> = eval
        .confusion
        .iter()
        .map(|row| row.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","))
        .collect();
    let text = format!(
        "accuracy={}\ncorrect={}\ntotal={}\nconfusion={}\n",
        eval.accuracy(),
        eval.correct,
        eval.total,
        rows.join(";")
    );
    atomic_write(&dir.join("result.txt"), text.as_bytes())
}

fn read_result(dir: &Path) -> Result<Evaluation, ExperimentError> {
    let path = dir.join("result.txt");
    let text = fs::read_to_string(&path)
        .map_err(|e| data_err(format!("missing result {}: {e}", path.display())))?;
    let mut correct = 0usize;
    let mut total = 0usize;
    let mut confusion = Vec::new();
    for line in text.lines() {
        if let Some((k, v)) = line.split_once('=') {
            match k {
                "correct" => correct = v.parse().map_err(|_| data_err("bad result file"))?,
                "total" => total = v.parse().map_err(|_| data_err("bad result file"))?,
                "confusion" => {
                    for row in v.split(';') {
                        let parsed: Result<Vec<usize>, _> =
                            row.split(',').map(|c| c.parse::<usize>()).collect();
                        confusion.push(parsed.map_err(|_| data_err("bad confusion row"))?);
                    }
                }
                _ => {}
            }
        }
    }
    Ok(Evaluation { correct, total, confusion })
}

/// Read one run's cached result for a column, for `report`.
pub fn load_result(
    config: &ExperimentConfig,
    cache: &PipelineCache,
    column: Column,
    run: usize,
) -> Result<Evaluation, ExperimentError> {
    let seed = run_seed(config, run)?;
    let column_id = column.id(config);
    let dir = cache
        .peek(&results_stage_name(&column_id, run), &classify_key(config, column, seed))
        .ok_or_else(|| {
            data_err(format!(
                "results for {column_id} run {} not found; run `classify` first",
                run + 1
            ))
        })?;
    read_result(&dir)
}

/// Fold list for external callers (CLI stats and tests).
pub fn dataset_splits(
    config: &ExperimentConfig,
    cache: &mut PipelineCache,
) -> Result<(DatasetManifest, Vec<Split>), ExperimentError> {
    let manifest = load_dataset(config, cache)?;
    let splits = make_splits(&manifest).map_err(|e| data_err(e.to_string()))?;
    Ok((manifest, splits))
}
