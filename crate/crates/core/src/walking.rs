//! Walking detection from SNR time series: four window statistics and an
//! l2-regularised logistic regression.

use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{stratified_folds, BinaryMetrics};
use crate::model::LabeledSample;

pub const NUM_FEATURES: usize = 4;

type Params = SVector<f64, 5>;

/// Window statistics of an SNR series (dB).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WalkingFeatures {
    /// Sample standard deviation.
    pub std_dev: f64,
    /// max - min.
    pub peak: f64,
    /// max - median.
    pub head_size: f64,
    /// Mean cubed deviation from the mean.
    pub third_moment: f64,
}

impl WalkingFeatures {
    pub fn to_array(&self) -> [f64; NUM_FEATURES] {
        [self.std_dev, self.peak, self.head_size, self.third_moment]
    }
}

pub fn extract_features(snr_window: &[f64]) -> Result<WalkingFeatures> {
    let n = snr_window.len();
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, got: n });
    }
    let nf = n as f64;
    let mean = snr_window.iter().sum::<f64>() / nf;
    let (mut sq, mut cube) = (0.0, 0.0);
    for s in snr_window {
        let d = s - mean;
        sq += d * d;
        cube += d * d * d;
    }
    let mut sorted = snr_window.to_vec();
    sorted.sort_by(f64::total_cmp);
    let max = sorted[n - 1];
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    };
    Ok(WalkingFeatures {
        std_dev: (sq / (nf - 1.0)).sqrt(),
        peak: max - sorted[0],
        head_size: max - median,
        third_moment: cube / nf,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// l2 penalty on the weights (not the bias).
    pub lambda: f64,
    pub max_iters: usize,
    /// Stop once the Newton step norm falls below this.
    pub tol: f64,
    pub threshold: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda: 1e-3,
            max_iters: 100,
            tol: 1e-10,
            threshold: 0.5,
        }
    }
}

/// Logistic model over standardised features. Serialises as
/// `{weights, bias, feature_means, feature_stds, threshold}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub weights: [f64; NUM_FEATURES],
    pub bias: f64,
    pub feature_means: [f64; NUM_FEATURES],
    pub feature_stds: [f64; NUM_FEATURES],
    pub threshold: f64,
}

impl LogisticModel {
    pub fn standardize(&self, f: &WalkingFeatures) -> [f64; NUM_FEATURES] {
        let raw = f.to_array();
        std::array::from_fn(|i| (raw[i] - self.feature_means[i]) / self.feature_stds[i])
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Regularised mean negative log-likelihood and its gradient with respect
/// to `params = [w_1..w_4, b]`.
pub fn objective_and_gradient(
    params: &[f64; NUM_FEATURES + 1],
    xs: &[[f64; NUM_FEATURES]],
    labels: &[bool],
    lambda: f64,
) -> (f64, [f64; NUM_FEATURES + 1]) {
    let n = xs.len() as f64;
    let mut value = 0.0;
    let mut grad = [0.0; NUM_FEATURES + 1];
    for (x, &y) in xs.iter().zip(labels) {
        let z = params[NUM_FEATURES] + (0..NUM_FEATURES).map(|i| params[i] * x[i]).sum::<f64>();
        let t = if y { 1.0 } else { 0.0 };
        value += softplus(z) - t * z;
        let r = sigmoid(z) - t;
        for i in 0..NUM_FEATURES {
            grad[i] += r * x[i];
        }
        grad[NUM_FEATURES] += r;
    }
    value /= n;
    grad.iter_mut().for_each(|g| *g /= n);
    for i in 0..NUM_FEATURES {
        value += 0.5 * lambda * params[i] * params[i];
        grad[i] += lambda * params[i];
    }
    (value, grad)
}

fn hessian(params: &Params, xs: &[[f64; NUM_FEATURES]], lambda: f64) -> SMatrix<f64, 5, 5> {
    let n = xs.len() as f64;
    let mut h = SMatrix::<f64, 5, 5>::zeros();
    for x in xs {
        let xa = Params::new(x[0], x[1], x[2], x[3], 1.0);
        let p = sigmoid(params.dot(&xa));
        h += xa * xa.transpose() * (p * (1.0 - p) / n);
    }
    for i in 0..NUM_FEATURES {
        h[(i, i)] += lambda;
    }
    h
}

/// Fits on precomputed features with damped Newton steps.
pub fn train_features(data: &[(WalkingFeatures, bool)], cfg: &TrainConfig) -> Result<LogisticModel> {
    let positives = data.iter().filter(|(_, y)| *y).count();
    if positives == 0 || positives == data.len() {
        return Err(Error::DegenerateTraining(format!(
            "need both walking and non-walking windows ({positives} of {} walking)",
            data.len()
        )));
    }
    let n = data.len() as f64;
    let raw: Vec<[f64; NUM_FEATURES]> = data.iter().map(|(f, _)| f.to_array()).collect();
    let mut means = [0.0; NUM_FEATURES];
    let mut stds = [0.0; NUM_FEATURES];
    for i in 0..NUM_FEATURES {
        means[i] = raw.iter().map(|r| r[i]).sum::<f64>() / n;
        let var = raw.iter().map(|r| (r[i] - means[i]).powi(2)).sum::<f64>() / n;
        // constant features standardise to zero and keep a zero weight
        stds[i] = if var > 0.0 { var.sqrt() } else { 1.0 };
    }
    let xs: Vec<[f64; NUM_FEATURES]> = raw
        .iter()
        .map(|r| std::array::from_fn(|i| (r[i] - means[i]) / stds[i]))
        .collect();
    let labels: Vec<bool> = data.iter().map(|(_, y)| *y).collect();

    let mut theta = Params::zeros();
    for _ in 0..cfg.max_iters {
        let params: [f64; 5] = theta.into();
        let (value, grad) = objective_and_gradient(&params, &xs, &labels, cfg.lambda);
        let g = Params::from(grad);
        let step = match hessian(&theta, &xs, cfg.lambda).cholesky() {
            Some(ch) => ch.solve(&g),
            None => g,
        };
        let mut t = 1.0;
        let mut next = theta - step * t;
        while t > 1e-12 {
            let (v, _) = objective_and_gradient(&next.into(), &xs, &labels, cfg.lambda);
            if v <= value - 1e-4 * t * g.dot(&step) {
                break;
            }
            t *= 0.5;
            next = theta - step * t;
        }
        let moved = (next - theta).norm();
        theta = next;
        if moved < cfg.tol {
            break;
        }
    }
    Ok(LogisticModel {
        weights: [theta[0], theta[1], theta[2], theta[3]],
        bias: theta[4],
        feature_means: means,
        feature_stds: stds,
        threshold: cfg.threshold,
    })
}

/// Fits on raw SNR windows labelled walking / not walking.
pub fn train(windows: &[(Vec<f64>, bool)], cfg: &TrainConfig) -> Result<LogisticModel> {
    let data = windows
        .iter()
        .map(|(w, y)| Ok((extract_features(w)?, *y)))
        .collect::<Result<Vec<_>>>()?;
    train_features(&data, cfg)
}

/// `(probability, is_walking)`.
pub fn predict(model: &LogisticModel, features: &WalkingFeatures) -> (f64, bool) {
    let x = model.standardize(features);
    let z = model.bias + (0..NUM_FEATURES).map(|i| model.weights[i] * x[i]).sum::<f64>();
    let p = sigmoid(z);
    (p, p >= model.threshold)
}

/// Stratified k-fold detection metrics, summed over folds.
pub fn cross_validate(windows: &[(Vec<f64>, bool)], folds: usize, seed: u64, cfg: &TrainConfig) -> Result<BinaryMetrics> {
    let positives = windows.iter().filter(|(_, y)| *y).count();
    if positives == 0 || positives == windows.len() {
        return Err(Error::DegenerateTraining(format!(
            "need both walking and non-walking windows ({positives} of {} walking)",
            windows.len()
        )));
    }
    let features = windows
        .iter()
        .map(|(w, y)| Ok((extract_features(w)?, *y)))
        .collect::<Result<Vec<_>>>()?;
    let strata: Vec<usize> = windows.iter().map(|(_, y)| usize::from(*y)).collect();
    let mut pairs = Vec::with_capacity(windows.len());
    for fold in stratified_folds(&strata, folds, seed)? {
        let training: Vec<_> = fold.train.iter().map(|&i| features[i]).collect();
        let model = train_features(&training, cfg)?;
        pairs.extend(fold.test.iter().map(|&i| (features[i].1, predict(&model, &features[i].0).1)));
    }
    Ok(BinaryMetrics::from_predictions(pairs))
}

/// Non-overlapping SNR windows of `len` samples within each run of
/// consecutive same-label samples, with the walking flag of the run.
pub fn snr_windows(data: &[LabeledSample], len: usize) -> Vec<(Vec<f64>, bool)> {
    let mut out = Vec::new();
    if len == 0 {
        return out;
    }
    let mut start = 0;
    while start < data.len() {
        let label = data[start].label;
        let end = (start..data.len()).find(|&i| data[i].label != label).unwrap_or(data.len());
        let run: Vec<f64> = data[start..end].iter().map(|s| s.sample.snr_db).collect();
        for chunk in run.chunks_exact(len) {
            out.push((chunk.to_vec(), label.is_walking()));
        }
        start = end;
    }
    out
}
