//! Objective-model evaluation harness: repeated content-separated
//! train/test splits with median SROCC/PLCC over pluggable predictors
//! that consume precomputed feature vectors.

use std::collections::{BTreeSet, HashSet};
use std::io::Read;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{CaptureTag, ImageId};
use crate::seed;
use crate::stats;

pub const MIN_GROUPS: usize = 10;

#[derive(Debug, Error)]
pub enum BenchmarkError {
    #[error("dataset needs at least {MIN_GROUPS} content groups, has {0}")]
    TooFewGroups(usize),
    #[error("feature dimensionality differs: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("item {0} has a non-finite feature or mos")]
    NonFinite(ImageId),
    #[error("duplicate dataset name `{0}` in combination")]
    DuplicateDataset(String),
    #[error("nothing to combine")]
    NoDatasets,
    #[error("train fraction must lie in (0, 1), got {0}")]
    BadTrainFraction(f64),
    #[error("unknown predictor `{0}`")]
    UnknownPredictor(String),
    #[error("dataset row {row}: {message}")]
    Parse { row: usize, message: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchItem {
    pub image_id: ImageId,
    pub features: Vec<f64>,
    pub mos: f64,
    pub capture_tag: CaptureTag,
    pub content_group: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkDataset {
    pub name: String,
    pub items: Vec<BenchItem>,
}

impl BenchmarkDataset {
    pub fn dimension(&self) -> Option<usize> {
        self.items.first().map(|i| i.features.len())
    }

    /// Content groups in sorted order.
    pub fn groups(&self) -> Vec<&str> {
        let set: BTreeSet<&str> = self
            .items
            .iter()
            .map(|i| i.content_group.as_str())
            .collect();
        set.into_iter().collect()
    }

    pub fn check(&self) -> Result<(), BenchmarkError> {
        let dim = self.dimension().unwrap_or(0);
        for item in &self.items {
            if item.features.len() != dim {
                return Err(BenchmarkError::DimensionMismatch(dim, item.features.len()));
            }
            if !item.mos.is_finite() || item.features.iter().any(|f| !f.is_finite()) {
                return Err(BenchmarkError::NonFinite(item.image_id.clone()));
            }
        }
        Ok(())
    }

    /// Reads `image_id,content_group,capture_tag,mos,f1..fD`. An empty
    /// content group makes the image its own group.
    pub fn from_csv_reader<R: Read>(name: &str, input: R) -> Result<Self, BenchmarkError> {
        let mut rdr = csv::Reader::from_reader(input);
        let mut items = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let row = i + 2;
            let field = |k: usize| rec.get(k).unwrap_or("").trim();
            let parse = |k: usize| -> Result<f64, BenchmarkError> {
                field(k).parse::<f64>().map_err(|e| BenchmarkError::Parse {
                    row,
                    message: format!("column {}: {e}", k + 1),
                })
            };
            if rec.len() < 4 {
                return Err(BenchmarkError::Parse {
                    row,
                    message: "expected at least 4 columns".into(),
                });
            }
            let image_id = ImageId::new(field(0));
            let content_group = match field(1) {
                "" => image_id.to_string(),
                g => g.to_owned(),
            };
            let capture_tag = field(2)
                .parse::<CaptureTag>()
                .map_err(|message| BenchmarkError::Parse { row, message })?;
            let mos = parse(3)?;
            let features = (4..rec.len()).map(parse).collect::<Result<Vec<_>, _>>()?;
            items.push(BenchItem {
                image_id,
                features,
                mos,
                capture_tag,
                content_group,
            });
        }
        let ds = BenchmarkDataset {
            name: name.to_owned(),
            items,
        };
        ds.check()?;
        Ok(ds)
    }

    pub fn load(path: &Path) -> Result<Self, BenchmarkError> {
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "dataset".into());
        Self::from_csv_reader(&name, std::fs::File::open(path)?)
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<(), BenchmarkError> {
        let mut w = csv::Writer::from_writer(out);
        let dim = self.dimension().unwrap_or(0);
        let mut header: Vec<String> = ["image_id", "content_group", "capture_tag", "mos"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        header.extend((1..=dim).map(|i| format!("f{i}")));
        w.write_record(&header)?;
        for it in &self.items {
            let mut row = vec![
                it.image_id.to_string(),
                it.content_group.clone(),
                match it.capture_tag {
                    CaptureTag::Day => "day".into(),
                    CaptureTag::Night => "night".into(),
                },
                format!("{:?}", it.mos),
            ];
            row.extend(it.features.iter().map(|f| format!("{f:?}")));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Drops night captures unless `include` is set. Returns the filtered
/// dataset and how many items were removed.
pub fn filter_night(dataset: &BenchmarkDataset, include: bool) -> (BenchmarkDataset, usize) {
    if include {
        return (dataset.clone(), 0);
    }
    let items: Vec<BenchItem> = dataset
        .items
        .iter()
        .filter(|i| i.capture_tag != CaptureTag::Night)
        .cloned()
        .collect();
    let removed = dataset.items.len() - items.len();
    (
        BenchmarkDataset {
            name: dataset.name.clone(),
            items,
        },
        removed,
    )
}

/// Pools datasets. Item ids and content groups are prefixed with the
/// source name; MOS values are kept on their original scales.
pub fn combine_datasets(datasets: &[BenchmarkDataset]) -> Result<BenchmarkDataset, BenchmarkError> {
    match datasets {
        [] => return Err(BenchmarkError::NoDatasets),
        [only] => return Ok(only.clone()),
        _ => {}
    }
    let mut names = HashSet::new();
    let mut dim: Option<usize> = None;
    for ds in datasets {
        if !names.insert(ds.name.as_str()) {
            return Err(BenchmarkError::DuplicateDataset(ds.name.clone()));
        }
        if let Some(d) = ds.dimension() {
            match dim {
                Some(expected) if expected != d => {
                    return Err(BenchmarkError::DimensionMismatch(expected, d))
                }
                _ => dim = Some(d),
            }
        }
    }
    let items = datasets
        .iter()
        .flat_map(|ds| {
            ds.items.iter().map(move |it| BenchItem {
                image_id: ImageId::new(format!("{}/{}", ds.name, it.image_id)),
                content_group: format!("{}/{}", ds.name, it.content_group),
                ..it.clone()
            })
        })
        .collect();
    Ok(BenchmarkDataset {
        name: datasets
            .iter()
            .map(|d| d.name.as_str())
            .collect::<Vec<_>>()
            .join("+"),
        items,
    })
}

#[derive(Debug, Error, Clone, PartialEq, Serialize, Deserialize)]
#[error("{0}")]
pub struct PredictorError(pub String);

/// A learned quality model.
pub trait TrainedModel: Send + Sync {
    fn predict(&self, item: &BenchItem) -> Result<f64, PredictorError>;
}

pub trait Predictor: Send + Sync {
    fn name(&self) -> &str;
    fn train(
        &self,
        training: &[&BenchItem],
        seed: u64,
    ) -> Result<Box<dyn TrainedModel>, PredictorError>;
}

/// Returns the ground-truth MOS. Upper bound for the harness.
pub struct OraclePredictor;

struct OracleModel;

impl TrainedModel for OracleModel {
    fn predict(&self, item: &BenchItem) -> Result<f64, PredictorError> {
        Ok(item.mos)
    }
}

impl Predictor for OraclePredictor {
    fn name(&self) -> &str {
        "oracle"
    }

    fn train(&self, _: &[&BenchItem], _: u64) -> Result<Box<dyn TrainedModel>, PredictorError> {
        Ok(Box::new(OracleModel))
    }
}

/// Ground truth plus Gaussian noise. The noise for an item depends only on
/// the seed and the item id, so predictions do not depend on evaluation
/// order.
pub struct NoisyOraclePredictor {
    pub sigma: f64,
}

struct NoisyOracleModel {
    noise: Normal<f64>,
    seed: u64,
}

impl TrainedModel for NoisyOracleModel {
    fn predict(&self, item: &BenchItem) -> Result<f64, PredictorError> {
        let mut rng = seed::rng(seed::derive_str(self.seed, item.image_id.as_str()));
        Ok(item.mos + self.noise.sample(&mut rng))
    }
}

impl Predictor for NoisyOraclePredictor {
    fn name(&self) -> &str {
        "noisy-oracle"
    }

    fn train(&self, _: &[&BenchItem], seed: u64) -> Result<Box<dyn TrainedModel>, PredictorError> {
        let noise = Normal::new(0.0, self.sigma).map_err(|e| PredictorError(e.to_string()))?;
        Ok(Box::new(NoisyOracleModel { noise, seed }))
    }
}

/// Predicts the training MOS mean for everything.
pub struct ConstantPredictor;

struct ConstantModel(f64);

impl TrainedModel for ConstantModel {
    fn predict(&self, _: &BenchItem) -> Result<f64, PredictorError> {
        Ok(self.0)
    }
}

impl Predictor for ConstantPredictor {
    fn name(&self) -> &str {
        "constant"
    }

    fn train(
        &self,
        training: &[&BenchItem],
        _: u64,
    ) -> Result<Box<dyn TrainedModel>, PredictorError> {
        if training.is_empty() {
            return Err(PredictorError("empty training set".into()));
        }
        let m = training.iter().map(|i| i.mos).sum::<f64>() / training.len() as f64;
        Ok(Box::new(ConstantModel(m)))
    }
}

/// Uniform draws over the training MOS range.
pub struct RandomPredictor;

struct RandomModel {
    lo: f64,
    hi: f64,
    seed: u64,
}

impl TrainedModel for RandomModel {
    fn predict(&self, item: &BenchItem) -> Result<f64, PredictorError> {
        let mut rng = seed::rng(seed::derive_str(self.seed, item.image_id.as_str()));
        if self.hi > self.lo {
            Ok(rng.random_range(self.lo..self.hi))
        } else {
            Ok(self.lo)
        }
    }
}

impl Predictor for RandomPredictor {
    fn name(&self) -> &str {
        "random"
    }

    fn train(
        &self,
        training: &[&BenchItem],
        seed: u64,
    ) -> Result<Box<dyn TrainedModel>, PredictorError> {
        if training.is_empty() {
            return Err(PredictorError("empty training set".into()));
        }
        let lo = training.iter().map(|i| i.mos).fold(f64::INFINITY, f64::min);
        let hi = training
            .iter()
            .map(|i| i.mos)
            .fold(f64::NEG_INFINITY, f64::max);
        Ok(Box::new(RandomModel { lo, hi, seed }))
    }
}

/// k-nearest neighbours in standardized feature space; predicts the mean
/// MOS of the neighbours.
pub struct KnnPredictor {
    pub k: usize,
}

struct KnnModel {
    k: usize,
    center: Vec<f64>,
    scale: Vec<f64>,
    points: Vec<(Vec<f64>, f64)>,
}

impl KnnModel {
    fn standardize(&self, f: &[f64]) -> Vec<f64> {
        f.iter()
            .zip(self.center.iter().zip(&self.scale))
            .map(|(x, (c, s))| (x - c) / s)
            .collect()
    }
}

impl TrainedModel for KnnModel {
    fn predict(&self, item: &BenchItem) -> Result<f64, PredictorError> {
        if item.features.len() != self.center.len() {
            return Err(PredictorError(format!(
                "expected {} features, got {}",
                self.center.len(),
                item.features.len()
            )));
        }
        let q = self.standardize(&item.features);
        let mut dist: Vec<(f64, f64)> = self
            .points
            .iter()
            .map(|(p, mos)| {
                let d: f64 = p.iter().zip(&q).map(|(a, b)| (a - b) * (a - b)).sum();
                (d, *mos)
            })
            .collect();
        dist.sort_by(|a, b| a.0.total_cmp(&b.0));
        let k = self.k.min(dist.len());
        Ok(dist[..k].iter().map(|(_, m)| m).sum::<f64>() / k as f64)
    }
}

impl Predictor for KnnPredictor {
    fn name(&self) -> &str {
        "knn"
    }

    fn train(
        &self,
        training: &[&BenchItem],
        _: u64,
    ) -> Result<Box<dyn TrainedModel>, PredictorError> {
        if training.is_empty() || self.k == 0 {
            return Err(PredictorError("knn needs k >= 1 and a training set".into()));
        }
        let dim = training[0].features.len();
        let n = training.len() as f64;
        let mut center = vec![0.0; dim];
        for it in training {
            for (c, f) in center.iter_mut().zip(&it.features) {
                *c += f / n;
            }
        }
        let mut scale = vec![0.0; dim];
        for it in training {
            for ((s, f), c) in scale.iter_mut().zip(&it.features).zip(&center) {
                *s += (f - c) * (f - c) / n;
            }
        }
        for s in &mut scale {
            *s = if *s > 0.0 { s.sqrt() } else { 1.0 };
        }
        let mut model = KnnModel {
            k: self.k,
            center,
            scale,
            points: Vec::with_capacity(training.len()),
        };
        model.points = training
            .iter()
            .map(|it| (model.standardize(&it.features), it.mos))
            .collect();
        Ok(Box::new(model))
    }
}

/// Builds one of the shipped baselines by name.
pub fn predictor_by_name(name: &str) -> Result<Box<dyn Predictor>, BenchmarkError> {
    match name {
        "oracle" => Ok(Box::new(OraclePredictor)),
        "noisy-oracle" => Ok(Box::new(NoisyOraclePredictor { sigma: 10.0 })),
        "constant" => Ok(Box::new(ConstantPredictor)),
        "random" => Ok(Box::new(RandomPredictor)),
        "knn" => Ok(Box::new(KnnPredictor { k: 5 })),
        other => Err(BenchmarkError::UnknownPredictor(other.to_owned())),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolOptions {
    pub n_iter: usize,
    pub train_frac: f64,
    pub seed: u64,
}

impl Default for ProtocolOptions {
    fn default() -> Self {
        ProtocolOptions {
            n_iter: 50,
            train_frac: 0.8,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupSplit {
    pub train: BTreeSet<String>,
    pub test: BTreeSet<String>,
}

/// Partitions the content groups for one iteration.
pub fn split_groups(dataset: &BenchmarkDataset, train_frac: f64, seed: u64) -> GroupSplit {
    let mut groups: Vec<&str> = dataset.groups();
    let g = groups.len();
    let n_train = ((train_frac * g as f64).round() as usize).clamp(1, g.saturating_sub(1).max(1));
    groups.shuffle(&mut seed::rng(seed));
    GroupSplit {
        train: groups[..n_train].iter().map(|s| s.to_string()).collect(),
        test: groups[n_train..].iter().map(|s| s.to_string()).collect(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum IterationResult {
    Ok { srocc: f64, plcc: f64 },
    Failed { error: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationOutcome {
    pub index: usize,
    pub seed: u64,
    pub n_train: usize,
    pub n_test: usize,
    #[serde(flatten)]
    pub result: IterationResult,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolReport {
    pub dataset: String,
    pub predictor: String,
    pub n_items: usize,
    pub n_groups: usize,
    pub median_srocc: Option<f64>,
    pub median_plcc: Option<f64>,
    pub failed_iterations: usize,
    pub per_iter: Vec<IterationOutcome>,
}

fn run_iteration(
    dataset: &BenchmarkDataset,
    predictor: &dyn Predictor,
    train_frac: f64,
    index: usize,
    seed: u64,
) -> IterationOutcome {
    let split = split_groups(dataset, train_frac, seed);
    let (train, test): (Vec<&BenchItem>, Vec<&BenchItem>) = dataset
        .items
        .iter()
        .partition(|it| split.train.contains(&it.content_group));
    let result = (|| {
        let model = predictor.train(&train, seed).map_err(|e| e.0)?;
        let predicted = test
            .iter()
            .map(|it| model.predict(it))
            .collect::<Result<Vec<f64>, _>>()
            .map_err(|e| e.0)?;
        let truth: Vec<f64> = test.iter().map(|it| it.mos).collect();
        let s = stats::srocc(&predicted, &truth).map_err(|e| e.to_string())?;
        let p = stats::plcc(&predicted, &truth).map_err(|e| e.to_string())?;
        Ok::<_, String>(IterationResult::Ok {
            srocc: s.value,
            plcc: p.value,
        })
    })()
    .unwrap_or_else(|error| IterationResult::Failed { error });
    IterationOutcome {
        index,
        seed,
        n_train: train.len(),
        n_test: test.len(),
        result,
    }
}

/// Repeats a random content-separated split `n_iter` times, trains on the
/// train side, and correlates predictions with MOS on the test side.
/// Medians are taken over the successful iterations; failed iterations are
/// kept in `per_iter` with their error.
pub fn run_protocol(
    dataset: &BenchmarkDataset,
    predictor: &dyn Predictor,
    opts: ProtocolOptions,
) -> Result<ProtocolReport, BenchmarkError> {
    if !(opts.train_frac > 0.0 && opts.train_frac < 1.0) {
        return Err(BenchmarkError::BadTrainFraction(opts.train_frac));
    }
    dataset.check()?;
    let n_groups = dataset.groups().len();
    if n_groups < MIN_GROUPS {
        return Err(BenchmarkError::TooFewGroups(n_groups));
    }
    let per_iter: Vec<IterationOutcome> = (0..opts.n_iter)
        .into_par_iter()
        .map(|i| {
            run_iteration(
                dataset,
                predictor,
                opts.train_frac,
                i,
                seed::derive(opts.seed, i as u64),
            )
        })
        .collect();
    let (srocc, plcc): (Vec<f64>, Vec<f64>) = per_iter
        .iter()
        .filter_map(|o| match o.result {
            IterationResult::Ok { srocc, plcc } => Some((srocc, plcc)),
            IterationResult::Failed { .. } => None,
        })
        .unzip();
    Ok(ProtocolReport {
        dataset: dataset.name.clone(),
        predictor: predictor.name().to_owned(),
        n_items: dataset.items.len(),
        n_groups,
        median_srocc: stats::median_lower(&srocc),
        median_plcc: stats::median_lower(&plcc),
        failed_iterations: per_iter.len() - srocc.len(),
        per_iter,
    })
}

/// Synthetic dataset: MOS uniform on `[10, 90]`, features are noisy
/// functions of MOS, `night` items tagged night, one group per item unless
/// `items_per_group > 1`.
pub fn synthetic_dataset(
    name: &str,
    n_items: usize,
    night: usize,
    items_per_group: usize,
    seed: u64,
) -> BenchmarkDataset {
    let mut rng = seed::rng(seed);
    let noise = Normal::new(0.0, 8.0).expect("valid sigma");
    let per = items_per_group.max(1);
    let mut night_slots: Vec<usize> = (0..n_items).collect();
    night_slots.shuffle(&mut rng);
    let night_set: HashSet<usize> = night_slots.into_iter().take(night).collect();
    let items = (0..n_items)
        .map(|i| {
            let mos: f64 = rng.random_range(10.0..90.0);
            let features = vec![
                mos + noise.sample(&mut rng),
                (mos / 10.0).sin() + noise.sample(&mut rng) / 20.0,
                noise.sample(&mut rng),
            ];
            BenchItem {
                image_id: ImageId::new(format!("{name}-{i:05}")),
                features,
                mos,
                capture_tag: if night_set.contains(&i) {
                    CaptureTag::Night
                } else {
                    CaptureTag::Day
                },
                content_group: format!("g{:05}", i / per),
            }
        })
        .collect();
    BenchmarkDataset {
        name: name.to_owned(),
        items,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracle_is_perfect() {
        let ds = synthetic_dataset("toy", 200, 0, 1, 1);
        let r = run_protocol(&ds, &OraclePredictor, ProtocolOptions::default()).unwrap();
        assert_eq!(r.median_srocc, Some(1.0));
        assert!((r.median_plcc.unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(r.per_iter.len(), 50);
        assert_eq!(r.failed_iterations, 0);
    }

    #[test]
    fn constant_predictor_reports_error_rows() {
        let ds = synthetic_dataset("toy", 50, 0, 1, 2);
        let r = run_protocol(&ds, &ConstantPredictor, ProtocolOptions::default()).unwrap();
        assert_eq!(r.failed_iterations, 50);
        assert_eq!(r.median_srocc, None);
        assert!(r
            .per_iter
            .iter()
            .all(|o| matches!(&o.result, IterationResult::Failed { error } if error.contains("zero variance"))));
    }

    #[test]
    fn too_few_groups() {
        let ds = synthetic_dataset("toy", 30, 0, 3, 2);
        assert_eq!(ds.groups().len(), 10);
        assert!(run_protocol(&ds, &OraclePredictor, ProtocolOptions::default()).is_ok());
        let small = synthetic_dataset("toy", 27, 0, 3, 2);
        assert!(matches!(
            run_protocol(&small, &OraclePredictor, ProtocolOptions::default()),
            Err(BenchmarkError::TooFewGroups(9))
        ));
    }

    #[test]
    fn night_filter_counts() {
        let ds = synthetic_dataset("live", 1162, 149, 1, 5);
        let (day, removed) = filter_night(&ds, false);
        assert_eq!((day.items.len(), removed), (1013, 149));
        assert_eq!(filter_night(&ds, true).0, ds);
        let (again, removed) = filter_night(&day, false);
        assert_eq!((again, removed), (day, 0));
    }

    #[test]
    fn combine_namespaces_and_counts() {
        let a = synthetic_dataset("a", 40, 0, 4, 1);
        let b = synthetic_dataset("b", 25, 0, 1, 2);
        assert_eq!(combine_datasets(std::slice::from_ref(&a)).unwrap(), a);
        let ab = combine_datasets(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(ab.items.len(), 65);
        assert_eq!(ab.groups().len(), 10 + 25);
        assert!(ab.items[0].image_id.as_str().starts_with("a/"));
        assert!(matches!(
            combine_datasets(&[a.clone(), a.clone()]),
            Err(BenchmarkError::DuplicateDataset(_))
        ));
        let mut c = b.clone();
        c.name = "c".into();
        c.items.iter_mut().for_each(|i| i.features.push(0.0));
        assert!(matches!(
            combine_datasets(&[a, c]),
            Err(BenchmarkError::DimensionMismatch(3, 4))
        ));
    }

    #[test]
    fn csv_round_trip() {
        let ds = synthetic_dataset("rt", 12, 3, 2, 9);
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        let back = BenchmarkDataset::from_csv_reader("rt", buf.as_slice()).unwrap();
        assert_eq!(back, ds);
        let bad = "image_id,content_group,capture_tag,mos,f1\na,,dusk,50,1\n";
        assert!(matches!(
            BenchmarkDataset::from_csv_reader("x", bad.as_bytes()),
            Err(BenchmarkError::Parse { row: 2, .. })
        ));
    }

    #[test]
    fn knn_learns_something() {
        let ds = synthetic_dataset("knn", 300, 0, 1, 4);
        let r = run_protocol(
            &ds,
            &KnnPredictor { k: 5 },
            ProtocolOptions {
                n_iter: 10,
                ..ProtocolOptions::default()
            },
        )
        .unwrap();
        assert!(r.median_srocc.unwrap() > 0.8);
    }
}
