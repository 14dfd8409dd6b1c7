//! Labeled datasets: generated from analytic models or read from disk.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::classifier::{HardClassifier, LinearClassifier};
use crate::densities::{DataModel, IsoGaussian, IsoMixture};
use crate::stats::RngStream;
use crate::{Error, Point, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub points: Vec<Point>,
    pub labels: Vec<usize>,
    pub classes: usize,
    pub dim: usize,
    pub provenance: String,
}

impl LabeledDataset {
    pub fn new(points: Vec<Point>, labels: Vec<usize>, classes: usize, dim: usize, provenance: String) -> Result<Self> {
        if points.len() != labels.len() {
            return Err(Error::domain("points and labels differ in length"));
        }
        if let Some(p) = points.iter().find(|p| p.len() != dim) {
            return Err(Error::Dimension { expected: dim, got: p.len() });
        }
        if labels.iter().any(|&l| l >= classes) {
            return Err(Error::domain("label out of range"));
        }
        Ok(Self { points, labels, classes, dim, provenance })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.classes];
        self.labels.iter().for_each(|&l| c[l] += 1);
        c
    }

    pub fn truncate(&mut self, n: usize) {
        self.points.truncate(n);
        self.labels.truncate(n);
    }
}

/// Dataset section of an experiment config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSpec {
    /// One isotropic Gaussian component per class.
    Mixture {
        means: Vec<Point>,
        sigma0: f64,
        /// Class proportions; balanced when absent.
        #[serde(default)]
        weights: Option<Vec<f64>>,
        n_train: usize,
        n_test: usize,
    },
    /// Isotropic Gaussian data labeled by the hyperplane `⟨w, x⟩ + b > 0`.
    Gaussian {
        dim: usize,
        sigma0: f64,
        w: Point,
        b: f64,
        n_train: usize,
        n_test: usize,
    },
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
        #[serde(default)]
        max_train: Option<usize>,
        #[serde(default)]
        max_test: Option<usize>,
    },
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self::Mixture {
            means: vec![vec![2.0, 0.0], vec![-2.0, 0.0]],
            sigma0: 0.5,
            weights: None,
            n_train: 2000,
            n_test: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: LabeledDataset,
    pub test: LabeledDataset,
}

const SPLIT_TRAIN: u64 = 0;
const SPLIT_TEST: u64 = 1;
const DATASET_STREAM: u64 = 0xda7a;

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Mixture { means, sigma0, weights, .. } => {
                if means.len() < 2 {
                    return Err(Error::config("dataset needs at least two class means"));
                }
                self.closed_form_model()?;
                let _ = (sigma0, weights);
                Ok(())
            }
            Self::Gaussian { dim, w, .. } => {
                if w.len() != *dim {
                    return Err(Error::config("dataset.w must have length dataset.dim"));
                }
                LinearClassifier::new(w.clone(), 0.0).map_err(|_| Error::config("dataset.w must be nonzero"))?;
                self.closed_form_model().map(|_| ())
            }
            Self::Idx { train_images, train_labels, test_images, test_labels, .. } => {
                for p in [train_images, train_labels, test_images, test_labels] {
                    if !p.exists() {
                        return Err(Error::Missing(p.clone()));
                    }
                }
                Ok(())
            }
        }
    }

    /// The analytic data distribution, when there is one.
    pub fn closed_form_model(&self) -> Result<DataModel> {
        let to_config = |e: Error| Error::config(e.to_string());
        match self {
            Self::Mixture { means, sigma0, weights, .. } => {
                let k = means.len();
                let w = match weights {
                    Some(w) => {
                        let total: f64 = w.iter().sum();
                        w.iter().map(|v| v / total).collect()
                    }
                    None => vec![1.0 / k as f64; k],
                };
                Ok(IsoMixture::new(means.clone(), w, *sigma0).map_err(to_config)?.into())
            }
            Self::Gaussian { dim, sigma0, .. } => Ok(IsoGaussian::centered(*dim, *sigma0).map_err(to_config)?.into()),
            Self::Idx { .. } => Err(Error::config("IDX data has no closed-form model")),
        }
    }

    /// The labeling hyperplane of a Gaussian dataset.
    pub fn labeling_hyperplane(&self) -> Option<LinearClassifier> {
        match self {
            Self::Gaussian { w, b, .. } => LinearClassifier::new(w.clone(), *b).ok(),
            _ => None,
        }
    }
}

/// Train and test splits, deterministic in `seed`.
pub fn gen_dataset(spec: &DatasetSpec, seed: u64) -> Result<Splits> {
    spec.validate()?;
    match spec {
        DatasetSpec::Mixture { means, weights, n_train, n_test, .. } => {
            let model = spec.closed_form_model()?;
            let DataModel::Mixture(mix) = &model else { unreachable!() };
            let k = means.len();
            let make = |n: usize, split: u64| -> Result<LabeledDataset> {
                let mut gen = RngStream::keyed(seed, &[DATASET_STREAM, split]);
                let labels = assign_labels(n, k, weights.as_deref(), &mut gen);
                let points = labels.iter().map(|&l| component_sample(mix, l, &mut gen)).collect();
                LabeledDataset::new(points, labels, k, means[0].len(), "mixture".into())
            };
            Ok(Splits { train: make(*n_train, SPLIT_TRAIN)?, test: make(*n_test, SPLIT_TEST)? })
        }
        DatasetSpec::Gaussian { dim, n_train, n_test, .. } => {
            let model = spec.closed_form_model()?;
            let h = spec.labeling_hyperplane().expect("validated");
            let make = |n: usize, split: u64| -> Result<LabeledDataset> {
                let mut gen = RngStream::keyed(seed, &[DATASET_STREAM, split]);
                let points = model.sample(n, &mut gen);
                let labels = points.iter().map(|p| h.predict_class(p)).collect();
                LabeledDataset::new(points, labels, 2, *dim, "gaussian".into())
            };
            Ok(Splits { train: make(*n_train, SPLIT_TRAIN)?, test: make(*n_test, SPLIT_TEST)? })
        }
        DatasetSpec::Idx { train_images, train_labels, test_images, test_labels, max_train, max_test } => {
            let mut train = super::idx::load_idx(train_images, train_labels)?;
            let mut test = super::idx::load_idx(test_images, test_labels)?;
            let classes = train.classes.max(test.classes);
            train.classes = classes;
            test.classes = classes;
            if let Some(n) = max_train {
                train.truncate(*n);
            }
            if let Some(n) = max_test {
                test.truncate(*n);
            }
            Ok(Splits { train, test })
        }
    }
}

/// Exactly proportional counts (largest remainder), shuffled.
fn assign_labels(n: usize, k: usize, weights: Option<&[f64]>, gen: &mut RngStream) -> Vec<usize> {
    let w: Vec<f64> = match weights {
        Some(w) => {
            let s: f64 = w.iter().sum();
            w.iter().map(|v| v / s).collect()
        }
        None => vec![1.0 / k as f64; k],
    };
    let mut counts: Vec<usize> = w.iter().map(|p| (p * n as f64).floor() as usize).collect();
    let mut rem: Vec<(usize, f64)> = w.iter().enumerate().map(|(i, p)| (i, p * n as f64 - counts[i] as f64)).collect();
    rem.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let missing = n - counts.iter().sum::<usize>();
    for (i, _) in rem.into_iter().take(missing) {
        counts[i] += 1;
    }
    let mut labels: Vec<usize> = counts.iter().enumerate().flat_map(|(c, &m)| std::iter::repeat_n(c, m)).collect();
    for i in (1..labels.len()).rev() {
        let j = gen.index(i + 1);
        labels.swap(i, j);
    }
    labels
}

fn component_sample(mix: &IsoMixture, component: usize, gen: &mut RngStream) -> Point {
    mix.means[component].iter().map(|m| m + mix.sigma0 * gen.normal()).collect()
}

/// `label,x0,…` rows with 17 significant digits.
pub fn write_dataset_csv(ds: &LabeledDataset, path: &Path) -> Result<()> {
    let mut header = vec!["label".to_string()];
    header.extend((0..ds.dim).map(|i| format!("x{i}")));
    let rows = ds.points.iter().zip(&ds.labels).map(|(p, l)| {
        let mut r = vec![l.to_string()];
        r.extend(p.iter().map(|v| super::report::fmt_f64(*v)));
        r
    });
    super::report::write_csv(path, &header, rows)
}
