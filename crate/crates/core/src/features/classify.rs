//! Multinomial softmax regression with full-batch gradient descent, and stratified
//! k-fold cross-validation.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub const DEFAULT_CV_SEED: u64 = 20_240_611;

#[derive(Debug, Error, PartialEq)]
pub enum ClassifyError {
    #[error("training data needs at least two classes")]
    DegenerateTraining,
    #[error("no training samples")]
    Empty,
    #[error("sample {0} has a different feature count")]
    Ragged(usize),
    #[error("{features} feature rows but {labels} labels")]
    LabelCount { features: usize, labels: usize },
    #[error("fold count must be at least 2")]
    TooFewFolds,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SoftmaxConfig {
    pub iterations: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub standardize: bool,
}

impl Default for SoftmaxConfig {
    fn default() -> Self {
        Self {
            iterations: 500,
            learning_rate: 0.5,
            l2: 1e-3,
            standardize: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxModel {
    pub classes: Vec<String>,
    mean: Vec<f64>,
    scale: Vec<f64>,
    /// Row `c`: bias then one weight per feature.
    weights: Vec<Vec<f64>>,
}

fn check_shape(x: &[Vec<f64>]) -> Result<usize, ClassifyError> {
    let d = x.first().ok_or(ClassifyError::Empty)?.len();
    match x.iter().position(|r| r.len() != d) {
        Some(i) => Err(ClassifyError::Ragged(i)),
        None => Ok(d),
    }
}

impl SoftmaxModel {
    /// Zero-initialised weights, `iterations` full-batch steps on mean cross-entropy plus `l2 |W|^2 / 2`.
    pub fn train(x: &[Vec<f64>], labels: &[String], config: &SoftmaxConfig) -> Result<Self, ClassifyError> {
        let d = check_shape(x)?;
        if labels.len() != x.len() {
            return Err(ClassifyError::LabelCount {
                features: x.len(),
                labels: labels.len(),
            });
        }
        let mut classes: Vec<String> = labels.to_vec();
        classes.sort();
        classes.dedup();
        if classes.len() < 2 {
            return Err(ClassifyError::DegenerateTraining);
        }
        let y: Vec<usize> = labels
            .iter()
            .map(|l| classes.binary_search(l).expect("label present"))
            .collect();
        let n = x.len() as f64;
        let (mean, scale) = if config.standardize {
            let mean: Vec<f64> = (0..d).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n).collect();
            let scale = (0..d)
                .map(|j| {
                    let var = x.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n;
                    let sd = var.sqrt();
                    if sd > 1e-12 * (1.0 + mean[j].abs()) { sd } else { 1.0 }
                })
                .collect();
            (mean, scale)
        } else {
            (vec![0.0; d], vec![1.0; d])
        };
        let mut model = Self {
            classes,
            mean,
            scale,
            weights: Vec::new(),
        };
        let c = model.classes.len();
        model.weights = vec![vec![0.0; d + 1]; c];
        let z: Vec<Vec<f64>> = x.iter().map(|r| model.standardized(r)).collect();
        for _ in 0..config.iterations {
            let mut grad = vec![vec![0.0; d + 1]; c];
            for (zi, &yi) in z.iter().zip(&y) {
                let p = model.probabilities_standardized(zi);
                for k in 0..c {
                    let e = p[k] - if k == yi { 1.0 } else { 0.0 };
                    grad[k][0] += e;
                    for j in 0..d {
                        grad[k][j + 1] += e * zi[j];
                    }
                }
            }
            for k in 0..c {
                for j in 0..=d {
                    let reg = if j == 0 { 0.0 } else { config.l2 * model.weights[k][j] };
                    model.weights[k][j] -= config.learning_rate * (grad[k][j] / n + reg);
                }
            }
        }
        Ok(model)
    }

    fn standardized(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    fn probabilities_standardized(&self, z: &[f64]) -> Vec<f64> {
        let logits: Vec<f64> = self
            .weights
            .iter()
            .map(|w| w[0] + w[1..].iter().zip(z).map(|(a, b)| a * b).sum::<f64>())
            .collect();
        let top = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exp: Vec<f64> = logits.iter().map(|l| (l - top).exp()).collect();
        let total: f64 = exp.iter().sum();
        exp.into_iter().map(|e| e / total).collect()
    }

    /// Class probabilities in `classes` order.
    pub fn scores(&self, x: &[f64]) -> Vec<f64> {
        self.probabilities_standardized(&self.standardized(x))
    }

    /// Index into `classes` of the highest score; ties go to the lower index.
    pub fn predict_index(&self, x: &[f64]) -> usize {
        let s = self.scores(x);
        (0..s.len()).fold(0, |best, k| if s[k] > s[best] { k } else { best })
    }

    pub fn predict(&self, x: &[f64]) -> &str {
        &self.classes[self.predict_index(x)]
    }
}

/// Test-index sets for `k` folds. Each class is shuffled with a seeded ChaCha8 RNG
/// and dealt round-robin, continuing across classes so fold sizes stay balanced.
pub fn stratified_folds(labels: &[String], k: usize, seed: u64) -> Result<Vec<Vec<usize>>, ClassifyError> {
    if k < 2 {
        return Err(ClassifyError::TooFewFolds);
    }
    let mut classes: Vec<&String> = labels.iter().collect();
    classes.sort();
    classes.dedup();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![Vec::new(); k];
    let mut next = 0;
    for c in classes {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| &labels[i] == c).collect();
        idx.shuffle(&mut rng);
        for i in idx {
            folds[next % k].push(i);
            next += 1;
        }
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    folds.retain(|f| !f.is_empty());
    Ok(folds)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossValidation {
    pub accuracy: f64,
    /// Out-of-fold prediction per sample.
    pub predictions: Vec<String>,
    pub scores: Vec<Vec<f64>>,
    pub classes: Vec<String>,
}

/// Out-of-fold predictions from `k` stratified folds.
pub fn cross_validate(
    x: &[Vec<f64>],
    labels: &[String],
    k: usize,
    seed: u64,
    config: &SoftmaxConfig,
) -> Result<CrossValidation, ClassifyError> {
    check_shape(x)?;
    if labels.len() != x.len() {
        return Err(ClassifyError::LabelCount {
            features: x.len(),
            labels: labels.len(),
        });
    }
    let mut classes: Vec<String> = labels.to_vec();
    classes.sort();
    classes.dedup();
    let mut predictions = vec![String::new(); x.len()];
    let mut scores = vec![Vec::new(); x.len()];
    for test in stratified_folds(labels, k, seed)? {
        let train: Vec<usize> = (0..x.len()).filter(|i| test.binary_search(i).is_err()).collect();
        let tx: Vec<Vec<f64>> = train.iter().map(|&i| x[i].clone()).collect();
        let ty: Vec<String> = train.iter().map(|&i| labels[i].clone()).collect();
        let model = SoftmaxModel::train(&tx, &ty, config)?;
        for &i in &test {
            predictions[i] = model.predict(&x[i]).to_string();
            let s = model.scores(&x[i]);
            // report against the full class list, zero for classes absent from this fold's training set
            scores[i] = classes
                .iter()
                .map(|c| model.classes.iter().position(|m| m == c).map_or(0.0, |p| s[p]))
                .collect();
        }
    }
    let correct = predictions.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(CrossValidation {
        accuracy: correct as f64 / x.len() as f64,
        predictions,
        scores,
        classes,
    })
}
