//! Supervised readout: one-vs-rest linear SVMs trained by hinge-loss
//! subgradient descent, accuracy/confusion metrics and multi-run
//! aggregation.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SvmError {
    #[error("degenerate training set: {0}")]
    DegenerateTraining(String),
    #[error("feature length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("empty test set")]
    EmptyTestSet,
    #[error("bad model checkpoint: {0}")]
    Checkpoint(String),
    #[error("io error on {0}: {1}")]
    Io(String, std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvmParams {
    /// Inverse regularization strength; the L2 penalty is 1/(C n).
    pub c: f64,
    pub epochs: usize,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self { c: 1.0, epochs: 200 }
    }
}

/// One-vs-rest linear model: one weight vector and bias per class.
#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    pub feature_len: usize,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
}

impl SvmModel {
    pub fn classes(&self) -> usize {
        self.weights.len()
    }
}

/// Train one-vs-rest binary hinge classifiers with per-epoch shuffling
/// driven by `seed`. An epoch without a single margin violation ends the
/// class early; on separable data this reaches zero training error well
/// within the budget.
pub fn train_svm(
    features: &[Vec<f32>],
    labels: &[usize],
    n_classes: usize,
    params: &SvmParams,
    seed: u64,
) -> Result<SvmModel, SvmError> {
    if features.is_empty() || features.len() != labels.len() {
        return Err(SvmError::DegenerateTraining("no training samples".into()));
    }
    if n_classes < 2 {
        return Err(SvmError::DegenerateTraining(format!(
            "need at least 2 classes, got {n_classes}"
        )));
    }
    let feature_len = features[0].len();
    for f in features {
        if f.len() != feature_len {
            return Err(SvmError::LengthMismatch { expected: feature_len, got: f.len() });
        }
    }
    if labels.iter().any(|&l| l >= n_classes) {
        return Err(SvmError::DegenerateTraining("label outside class range".into()));
    }
    let n = features.len() as f64;
    let lambda = 1.0 / (params.c * n);
    let mut weights = Vec::with_capacity(n_classes);
    let mut biases = Vec::with_capacity(n_classes);
    for class in 0..n_classes {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (class as u64).wrapping_mul(0x9E3779B97F4A7C15));
        let mut w = vec![0.0f64; feature_len];
        let mut b = 0.0f64;
        let mut t = 0usize;
        let mut order: Vec<usize> = (0..features.len()).collect();
        for _ in 0..params.epochs {
            order.shuffle(&mut rng);
            let mut violations = 0usize;
            for &i in &order {
                t += 1;
                let eta = 1.0 / (lambda * t as f64);
                let y = if labels[i] == class { 1.0 } else { -1.0 };
                let margin = y * (dot(&w, &features[i]) + b);
                let shrink = 1.0 - eta * lambda;
                for wv in &mut w {
                    *wv *= shrink;
                }
                if margin < 1.0 {
                    violations += 1;
                    let step = eta * y;
                    for (wv, x) in w.iter_mut().zip(&features[i]) {
                        *wv += step * *x as f64;
                    }
                    b += step;
                }
            }
            if violations == 0 {
                break;
            }
        }
        weights.push(w);
        biases.push(b);
    }
    Ok(SvmModel { feature_len, weights, biases })
}

fn dot(w: &[f64], x: &[f32]) -> f64 {
    w.iter().zip(x).map(|(a, b)| a * *b as f64).sum()
}

/// Per-class decision values.
pub fn decision_values(model: &SvmModel, feature: &[f32]) -> Result<Vec<f64>, SvmError> {
    if feature.len() != model.feature_len {
        return Err(SvmError::LengthMismatch { expected: model.feature_len, got: feature.len() });
    }
    Ok(model
        .weights
        .iter()
        .zip(&model.biases)
        .map(|(w, b)| dot(w, feature) + b)
        .collect())
}

/// Argmax over the per-class decision values; ties take the lowest index.
pub fn predict(model: &SvmModel, feature: &[f32]) -> Result<usize, SvmError> {
    let values = decision_values(model, feature)?;
    let mut best = 0usize;
    for (k, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = k;
        }
    }
    Ok(best)
}

/// Accuracy and confusion counts over one test set.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub correct: usize,
    pub total: usize,
    /// `confusion[true_class][predicted_class]`
    pub confusion: Vec<Vec<usize>>,
}

impl Evaluation {
    pub fn accuracy(&self) -> f64 {
        100.0 * self.correct as f64 / self.total as f64
    }

    /// Merge fold evaluations; the combined accuracy is the sample-weighted
    /// mean over folds.
    pub fn merge(folds: &[Evaluation]) -> Evaluation {
        assert!(!folds.is_empty());
        let classes = folds[0].confusion.len();
        let mut out = Evaluation {
            correct: 0,
            total: 0,
            confusion: vec![vec![0; classes]; classes],
        };
        for f in folds {
            out.correct += f.correct;
            out.total += f.total;
            for (row_out, row_in) in out.confusion.iter_mut().zip(&f.confusion) {
                for (a, b) in row_out.iter_mut().zip(row_in) {
                    *a += b;
                }
            }
        }
        out
    }
}

pub fn evaluate(
    model: &SvmModel,
    features: &[Vec<f32>],
    labels: &[usize],
) -> Result<Evaluation, SvmError> {
    if features.is_empty() {
        return Err(SvmError::EmptyTestSet);
    }
    let classes = model.classes();
    let mut confusion = vec![vec![0usize; classes]; classes];
    let mut correct = 0;
    for (f, &label) in features.iter().zip(labels) {
        let pred = predict(model, f)?;
        confusion[label][pred] += 1;
        if pred == label {
            correct += 1;
        }
    }
    Ok(Evaluation { correct, total: features.len(), confusion })
}

/// Round half-up to two decimals (table formatting convention).
pub fn round2(v: f64) -> f64 {
    ((v * 100.0 + 0.5 + 1e-9).floor()) / 100.0
}

/// Accuracies of repeated runs with their mean and population standard
/// deviation, formatted like the result tables.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub accuracies: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

pub fn aggregate_runs(accuracies: &[f64]) -> RunSummary {
    assert!(!accuracies.is_empty(), "need at least one run");
    let n = accuracies.len() as f64;
    let mean = accuracies.iter().sum::<f64>() / n;
    let var = accuracies.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
    RunSummary { accuracies: accuracies.to_vec(), mean, std: var.sqrt() }
}

impl RunSummary {
    pub fn formatted(&self) -> String {
        format!("{:.2} \u{00b1} {:.2}", round2(self.mean), round2(self.std))
    }
}

pub const MODEL_MAGIC: &[u8; 8] = b"SVMMODL1";
const MODEL_VERSION: u32 = 1;

pub fn save_model(path: &Path, model: &SvmModel) -> Result<(), SvmError> {
    let file = File::create(path).map_err(|e| SvmError::Io(path.display().to_string(), e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e: std::io::Error| SvmError::Io(path.display().to_string(), e);
    w.write_all(MODEL_MAGIC).map_err(io_err)?;
    w.write_all(&MODEL_VERSION.to_le_bytes()).map_err(io_err)?;
    w.write_all(&(model.classes() as u32).to_le_bytes()).map_err(io_err)?;
    w.write_all(&(model.feature_len as u64).to_le_bytes()).map_err(io_err)?;
    for (weights, bias) in model.weights.iter().zip(&model.biases) {
        for v in weights {
            w.write_all(&v.to_le_bytes()).map_err(io_err)?;
        }
        w.write_all(&bias.to_le_bytes()).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

pub fn load_model(path: &Path) -> Result<SvmModel, SvmError> {
    let file = File::open(path).map_err(|e| SvmError::Io(path.display().to_string(), e))?;
    let mut r = BufReader::new(file);
    let bad = |msg: &str| SvmError::Checkpoint(format!("{}: {msg}", path.display()));
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|_| bad("truncated magic"))?;
    if &magic != MODEL_MAGIC {
        return Err(bad("bad magic bytes"));
    }
    let mut u32buf = [0u8; 4];
    r.read_exact(&mut u32buf).map_err(|_| bad("truncated version"))?;
    if u32::from_le_bytes(u32buf) != MODEL_VERSION {
        return Err(bad("unsupported version"));
    }
    r.read_exact(&mut u32buf).map_err(|_| bad("truncated class count"))?;
    let classes = u32::from_le_bytes(u32buf) as usize;
    let mut u64buf = [0u8; 8];
    r.read_exact(&mut u64buf).map_err(|_| bad("truncated feature length"))?;
    let feature_len = u64::from_le_bytes(u64buf) as usize;
    let mut weights = Vec::with_capacity(classes);
    let mut biases = Vec::with_capacity(classes);
    let mut f64buf = [0u8; 8];
    for _ in 0..classes {
        let mut w = Vec::with_capacity(feature_len);
        for _ in 0..feature_len {
            r.read_exact(&mut f64buf).map_err(|_| bad("truncated weights"))?;
            w.push(f64::from_le_bytes(f64buf));
        }
        weights.push(w);
        r.read_exact(&mut f64buf).map_err(|_| bad("truncated bias"))?;
        biases.push(f64::from_le_bytes(f64buf));
    }
    Ok(SvmModel { feature_len, weights, biases })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn separable_two_class() -> (Vec<Vec<f32>>, Vec<usize>) {
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for i in 0..10 {
            features.push(vec![1.0 + 0.1 * i as f32, 2.0]);
            labels.push(0);
            features.push(vec![-1.0 - 0.1 * i as f32, -2.0]);
            labels.push(1);
        }
        (features, labels)
    }

    #[test]
    fn separable_data_reaches_full_training_accuracy() {
        let (features, labels) = separable_two_class();
        let model = train_svm(&features, &labels, 2, &SvmParams::default(), 1).unwrap();
        let eval = evaluate(&model, &features, &labels).unwrap();
        assert_eq!(eval.accuracy(), 100.0);
    }

    #[test]
    fn one_binary_model_per_class() {
        let features: Vec<Vec<f32>> = (0..12)
            .map(|i| vec![(i % 6) as f32, (i % 6) as f32 * 0.5])
            .collect();
        let labels: Vec<usize> = (0..12).map(|i| i % 6).collect();
        let model = train_svm(&features, &labels, 6, &SvmParams::default(), 3).unwrap();
        assert_eq!(model.classes(), 6);
        assert_eq!(model.weights[0].len(), 2);
    }

    #[test]
    fn training_is_deterministic() {
        let (features, labels) = separable_two_class();
        let a = train_svm(&features, &labels, 2, &SvmParams::default(), 9).unwrap();
        let b = train_svm(&features, &labels, 2, &SvmParams::default(), 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_class_is_degenerate() {
        let features = vec![vec![1.0f32], vec![2.0]];
        let labels = vec![0, 0];
        assert!(train_svm(&features, &labels, 1, &SvmParams::default(), 0).is_err());
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let features = vec![vec![1.0f32, 2.0], vec![2.0]];
        let labels = vec![0, 1];
        assert!(matches!(
            train_svm(&features, &labels, 2, &SvmParams::default(), 0),
            Err(SvmError::LengthMismatch { .. })
        ));
        let (features, labels) = separable_two_class();
        let model = train_svm(&features, &labels, 2, &SvmParams::default(), 0).unwrap();
        assert!(predict(&model, &[1.0]).is_err());
    }

    #[test]
    fn zero_feature_predicts_bias_argmax() {
        let model = SvmModel {
            feature_len: 2,
            weights: vec![vec![1.0, 1.0], vec![-1.0, 0.5], vec![0.0, 0.0]],
            biases: vec![-0.5, 0.75, 0.2],
        };
        assert_eq!(predict(&model, &[0.0, 0.0]).unwrap(), 1);
    }

    #[test]
    fn prediction_is_scale_invariant_with_zero_biases() {
        let model = SvmModel {
            feature_len: 2,
            weights: vec![vec![1.0, -1.0], vec![-0.5, 2.0], vec![0.3, 0.3]],
            biases: vec![0.0, 0.0, 0.0],
        };
        let x = vec![0.7f32, 0.2];
        let scaled: Vec<f32> = x.iter().map(|v| v * 100.0).collect();
        assert_eq!(predict(&model, &x).unwrap(), predict(&model, &scaled).unwrap());
    }

    #[test]
    fn ties_take_lowest_class_index() {
        let model = SvmModel {
            feature_len: 1,
            weights: vec![vec![0.0], vec![0.0]],
            biases: vec![0.5, 0.5],
        };
        assert_eq!(predict(&model, &[1.0]).unwrap(), 0);
    }

    #[test]
    fn accuracy_and_confusion_counts() {
        let model = SvmModel {
            feature_len: 1,
            weights: vec![vec![1.0], vec![-1.0]],
            biases: vec![0.0, 0.0],
        };
        let features = vec![vec![1.0f32], vec![-1.0], vec![1.0]];
        let labels = vec![0, 1, 1];
        let eval = evaluate(&model, &features, &labels).unwrap();
        assert_eq!(eval.correct, 2);
        assert!((eval.accuracy() - 66.6666).abs() < 0.001);
        assert_eq!(format!("{:.2}", round2(eval.accuracy())), "66.67");
        assert_eq!(eval.confusion[1][0], 1);
        let total: usize = eval.confusion.iter().flatten().sum();
        assert_eq!(total, 3);
    }

    #[test]
    fn empty_test_set_is_rejected() {
        let model = SvmModel { feature_len: 1, weights: vec![vec![0.0]], biases: vec![0.0] };
        assert!(matches!(evaluate(&model, &[], &[]), Err(SvmError::EmptyTestSet)));
    }

    #[test]
    fn fold_merge_is_sample_weighted() {
        // 3-fold toy manifest: fold sizes 2, 3, 5 with 1, 3, 2 correct.
        // weighted accuracy = 6/10 = 60%, not the fold-mean 63.33%
        let folds = vec![
            Evaluation { correct: 1, total: 2, confusion: vec![vec![1, 1], vec![0, 0]] },
            Evaluation { correct: 3, total: 3, confusion: vec![vec![2, 0], vec![0, 1]] },
            Evaluation { correct: 2, total: 5, confusion: vec![vec![2, 3], vec![0, 0]] },
        ];
        let merged = Evaluation::merge(&folds);
        assert_eq!(merged.total, 10);
        assert_eq!(merged.correct, 6);
        assert_eq!(merged.accuracy(), 60.0);
        assert_eq!(merged.confusion[0][1], 4);
    }

    #[test]
    fn aggregation_examples() {
        let s = aggregate_runs(&[50.0, 50.0, 50.0]);
        assert_eq!(s.formatted(), "50.00 ± 0.00");
        let s = aggregate_runs(&[54.0, 55.0, 56.0]);
        // population sigma = sqrt(2/3), frozen from a hand calculation
        assert!((s.std - 0.816496580927726).abs() < 1e-12);
        assert_eq!(s.formatted(), "55.00 ± 0.82");
        let s = aggregate_runs(&[72.5]);
        assert_eq!(s.mean, 72.5);
        assert_eq!(s.std, 0.0);
    }

    #[test]
    fn aggregate_mean_lies_within_run_range() {
        let s = aggregate_runs(&[61.2, 58.7, 64.9]);
        let min = 58.7;
        let max = 64.9;
        assert!(s.mean >= min && s.mean <= max);
    }

    #[test]
    fn rounding_is_half_up() {
        assert_eq!(round2(66.66666), 66.67);
        assert_eq!(round2(62.125), 62.13);
        assert_eq!(round2(62.124), 62.12);
    }

    #[test]
    fn model_checkpoint_roundtrip() {
        let (features, labels) = separable_two_class();
        let model = train_svm(&features, &labels, 2, &SvmParams::default(), 5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.svm");
        save_model(&path, &model).unwrap();
        let back = load_model(&path).unwrap();
        assert_eq!(model, back);
    }
}
