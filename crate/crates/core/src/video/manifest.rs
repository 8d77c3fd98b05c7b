//! Dataset manifests and train/test split protocols.
//!
//! Manifest files are line-oriented text, one sample per line:
//! `clip_id<TAB>subject<TAB>class<TAB>path`. Class names are the
//! lexicographically sorted set of labels so the ordering does not depend on
//! line order.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use super::VideoError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sample {
    pub clip_id: String,
    pub subject: String,
    pub label: String,
    pub path: PathBuf,
}

/// Split protocols used by the supported dataset families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitProtocol {
    /// The published KTH subject partition (validation subjects are held out
    /// of both sides).
    FixedSubjectSplit,
    /// One fold per subject; that subject's clips are the test set.
    LeaveOneSubjectOut,
    /// Single fold; the last third of each class (ordered by clip id) tests.
    ClassThirds,
}

impl SplitProtocol {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "fixed-subject-split" => Some(Self::FixedSubjectSplit),
            "leave-one-subject-out" => Some(Self::LeaveOneSubjectOut),
            "class-thirds" => Some(Self::ClassThirds),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::FixedSubjectSplit => "fixed-subject-split",
            Self::LeaveOneSubjectOut => "leave-one-subject-out",
            Self::ClassThirds => "class-thirds",
        }
    }
}

#[derive(Debug, Clone)]
pub struct DatasetManifest {
    pub samples: Vec<Sample>,
    pub class_names: Vec<String>,
    pub split_protocol: SplitProtocol,
}

/// One fold: indices into `manifest.samples`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl DatasetManifest {
    pub fn from_samples(
        samples: Vec<Sample>,
        split_protocol: SplitProtocol,
    ) -> Result<Self, VideoError> {
        if samples.is_empty() {
            return Err(VideoError::Manifest("no samples".into()));
        }
        let class_names: Vec<String> = samples
            .iter()
            .map(|s| s.label.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        Ok(Self { samples, class_names, split_protocol })
    }

    pub fn class_index(&self, label: &str) -> Option<usize> {
        self.class_names.iter().position(|c| c == label)
    }
}

pub fn read_manifest(path: &Path, protocol: SplitProtocol) -> Result<DatasetManifest, VideoError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| VideoError::Io(path.display().to_string(), e))?;
    let base = path.parent().unwrap_or_else(|| Path::new(""));
    let mut samples = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim_end();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(VideoError::Manifest(format!(
                "{}:{}: expected 4 tab-separated fields, got {}",
                path.display(),
                lineno + 1,
                fields.len()
            )));
        }
        let sample_path = PathBuf::from(fields[3]);
        let sample_path =
            if sample_path.is_absolute() { sample_path } else { base.join(sample_path) };
        samples.push(Sample {
            clip_id: fields[0].to_string(),
            subject: fields[1].to_string(),
            label: fields[2].to_string(),
            path: sample_path,
        });
    }
    DatasetManifest::from_samples(samples, protocol)
}

pub fn write_manifest(path: &Path, manifest: &DatasetManifest) -> Result<(), VideoError> {
    let mut text = String::new();
    for s in &manifest.samples {
        text.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            s.clip_id,
            s.subject,
            s.label,
            s.path.display()
        ));
    }
    std::fs::write(path, text).map_err(|e| VideoError::Io(path.display().to_string(), e))
}

const KTH_TRAIN_SUBJECTS: [u32; 8] = [11, 12, 13, 14, 15, 16, 17, 18];
const KTH_TEST_SUBJECTS: [u32; 9] = [2, 3, 5, 6, 7, 8, 9, 10, 22];

fn subject_number(subject: &str) -> Option<u32> {
    let digits: String = subject.chars().filter(|c| c.is_ascii_digit()).collect();
    digits.parse().ok()
}

/// Build the fold list for the manifest's split protocol. Every fold is a
/// disjoint train/test partition of the usable samples.
pub fn make_splits(manifest: &DatasetManifest) -> Result<Vec<Split>, VideoError> {
    match manifest.split_protocol {
        SplitProtocol::FixedSubjectSplit => {
            let mut train = Vec::new();
            let mut test = Vec::new();
            for (i, s) in manifest.samples.iter().enumerate() {
                let num = subject_number(&s.subject).ok_or_else(|| {
                    VideoError::Manifest(format!(
                        "sample {} has non-numeric subject {:?} under fixed-subject-split",
                        s.clip_id, s.subject
                    ))
                })?;
                if KTH_TRAIN_SUBJECTS.contains(&num) {
                    train.push(i);
                } else if KTH_TEST_SUBJECTS.contains(&num) {
                    test.push(i);
                }
                // remaining subjects are the validation block and stay unused
            }
            if train.is_empty() || test.is_empty() {
                return Err(VideoError::Manifest(
                    "fixed-subject-split produced an empty train or test set".into(),
                ));
            }
            Ok(vec![Split { train, test }])
        }
        SplitProtocol::LeaveOneSubjectOut => {
            let subjects: BTreeSet<&str> =
                manifest.samples.iter().map(|s| s.subject.as_str()).collect();
            if subjects.iter().any(|s| s.is_empty()) {
                return Err(VideoError::Manifest(
                    "leave-one-subject-out requires subject ids".into(),
                ));
            }
            if subjects.len() < 2 {
                return Err(VideoError::Manifest(
                    "leave-one-subject-out needs at least 2 subjects (train would be empty)"
                        .into(),
                ));
            }
            Ok(subjects
                .into_iter()
                .map(|held_out| {
                    let (test, train) = (0..manifest.samples.len())
                        .partition(|&i| manifest.samples[i].subject == held_out);
                    Split { train, test }
                })
                .collect())
        }
        SplitProtocol::ClassThirds => {
            let mut train = Vec::new();
            let mut test = Vec::new();
            for class in &manifest.class_names {
                let mut members: Vec<usize> = (0..manifest.samples.len())
                    .filter(|&i| &manifest.samples[i].label == class)
                    .collect();
                members.sort_by(|&a, &b| {
                    manifest.samples[a].clip_id.cmp(&manifest.samples[b].clip_id)
                });
                let n = members.len();
                let n_test = if n >= 2 { (n + 1) / 3 } else { 0 };
                let cut = n - n_test;
                train.extend_from_slice(&members[..cut]);
                test.extend_from_slice(&members[cut..]);
            }
            if test.is_empty() {
                return Err(VideoError::Manifest(
                    "class-thirds produced an empty test set".into(),
                ));
            }
            Ok(vec![Split { train, test }])
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(id: &str, subject: &str, label: &str) -> Sample {
        Sample {
            clip_id: id.to_string(),
            subject: subject.to_string(),
            label: label.to_string(),
            path: PathBuf::from(format!("{id}.vt")),
        }
    }

    fn kth_manifest() -> DatasetManifest {
        let mut samples = Vec::new();
        for subj in 1..=25 {
            for label in ["boxing", "walking"] {
                samples.push(sample(
                    &format!("person{subj:02}_{label}"),
                    &format!("person{subj:02}"),
                    label,
                ));
            }
        }
        DatasetManifest::from_samples(samples, SplitProtocol::FixedSubjectSplit).unwrap()
    }

    #[test]
    fn kth_fixed_split_uses_published_subjects() {
        let manifest = kth_manifest();
        let splits = make_splits(&manifest).unwrap();
        assert_eq!(splits.len(), 1);
        let train_subjects: BTreeSet<u32> = splits[0]
            .train
            .iter()
            .map(|&i| subject_number(&manifest.samples[i].subject).unwrap())
            .collect();
        let test_subjects: BTreeSet<u32> = splits[0]
            .test
            .iter()
            .map(|&i| subject_number(&manifest.samples[i].subject).unwrap())
            .collect();
        assert_eq!(train_subjects, KTH_TRAIN_SUBJECTS.iter().copied().collect());
        assert_eq!(test_subjects, KTH_TEST_SUBJECTS.iter().copied().collect());
    }

    #[test]
    fn leave_one_subject_out_gives_one_fold_per_subject() {
        let samples: Vec<Sample> = (1..=9)
            .flat_map(|s| {
                (0..2).map(move |k| {
                    sample(&format!("s{s}_c{k}"), &format!("subj{s}"), &format!("act{k}"))
                })
            })
            .collect();
        let manifest =
            DatasetManifest::from_samples(samples, SplitProtocol::LeaveOneSubjectOut).unwrap();
        let splits = make_splits(&manifest).unwrap();
        assert_eq!(splits.len(), 9);
        for split in &splits {
            assert_eq!(split.test.len(), 2);
            assert_eq!(split.train.len(), 16);
            let test_subject = &manifest.samples[split.test[0]].subject;
            assert!(split.test.iter().all(|&i| &manifest.samples[i].subject == test_subject));
            assert!(split.train.iter().all(|&i| &manifest.samples[i].subject != test_subject));
        }
    }

    #[test]
    fn single_subject_loso_errors() {
        let manifest = DatasetManifest::from_samples(
            vec![sample("a", "s1", "x"), sample("b", "s1", "y")],
            SplitProtocol::LeaveOneSubjectOut,
        )
        .unwrap();
        assert!(make_splits(&manifest).is_err());
    }

    #[test]
    fn class_thirds_takes_last_third_per_class() {
        let samples: Vec<Sample> = (0..15)
            .map(|i| sample(&format!("clip{i:02}"), "s", "run"))
            .chain((0..15).map(|i| sample(&format!("dive{i:02}"), "s", "dive")))
            .collect();
        let manifest =
            DatasetManifest::from_samples(samples, SplitProtocol::ClassThirds).unwrap();
        let splits = make_splits(&manifest).unwrap();
        assert_eq!(splits.len(), 1);
        assert_eq!(splits[0].test.len(), 10);
        assert_eq!(splits[0].train.len(), 20);
    }

    #[test]
    fn splits_partition_disjoint_and_cover() {
        let manifest = kth_manifest();
        for split in make_splits(&manifest).unwrap() {
            let train: BTreeSet<_> = split.train.iter().collect();
            let test: BTreeSet<_> = split.test.iter().collect();
            assert!(train.is_disjoint(&test));
        }
    }

    #[test]
    fn non_numeric_subject_under_fixed_split_errors() {
        let manifest = DatasetManifest::from_samples(
            vec![sample("a", "alice", "x"), sample("b", "bob", "x")],
            SplitProtocol::FixedSubjectSplit,
        )
        .unwrap();
        assert!(make_splits(&manifest).is_err());
    }

    #[test]
    fn manifest_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = kth_manifest();
        let path = dir.path().join("manifest.tsv");
        write_manifest(&path, &manifest).unwrap();
        let back = read_manifest(&path, SplitProtocol::FixedSubjectSplit).unwrap();
        assert_eq!(back.samples.len(), manifest.samples.len());
        assert_eq!(back.class_names, manifest.class_names);
    }
}
