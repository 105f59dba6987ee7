//! Single-sample SRC, window fusion (l1-voting, l1-sumup, l1-weighting) and
//! the kNN-voting baseline.

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ActivityClass, CoefficientVector, CsiVector, Dictionary, LabeledSample, Sample};
use crate::solver::{class_residuals, BpdnSolver, SolverConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowConfig {
    pub ws: usize,
    pub stride: usize,
}

impl WindowConfig {
    /// Non-overlapping windows of `ws` samples.
    pub fn non_overlapping(ws: usize) -> Result<Self> {
        Self::new(ws, ws)
    }

    pub fn new(ws: usize, stride: usize) -> Result<Self> {
        if ws == 0 || stride == 0 {
            return Err(Error::Parameter(format!("window size and stride must be >= 1 (ws={ws}, stride={stride})")));
        }
        Ok(Self { ws, stride })
    }

    /// Start indices of every complete window in a run of `len` samples.
    pub fn starts(&self, len: usize) -> impl Iterator<Item = usize> + '_ {
        (0..).map(move |i| i * self.stride).take_while(move |s| s + self.ws <= len)
    }
}

/// Per-sample fusion weights, non-negative and summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionWeights(pub Vec<f64>);

impl FusionWeights {
    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0 / n as f64; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// `w_i = A_i / sum_j A_j` with `A_i = 10^(S_i / 20)`.
///
/// Amplitudes are taken relative to the strongest sample, which cancels in
/// the ratio and keeps large dB values from overflowing. Equal SNRs give
/// exactly uniform weights.
pub fn compute_weights(snrs_db: &[f64]) -> Result<FusionWeights> {
    if snrs_db.is_empty() {
        return Err(Error::EmptyInput("no SNR values".into()));
    }
    if let Some(s) = snrs_db.iter().find(|s| !s.is_finite()) {
        return Err(Error::Range(format!("non-finite SNR {s}")));
    }
    let peak = snrs_db.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let amps: Vec<f64> = snrs_db.iter().map(|s| 10f64.powf((s - peak) / 20.0)).collect();
    let total: f64 = amps.iter().sum();
    Ok(FusionWeights(amps.into_iter().map(|a| a / total).collect()))
}

/// Vector representation fed to the classifiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputMode {
    /// Complex CSI values.
    Complex,
    /// Per-sub-carrier amplitudes, real-valued.
    RealAmplitude,
    /// Amplitudes stacked on top of phases, real-valued, length `2N`.
    FeaturesInColumn,
}

impl InputMode {
    pub const ALL: [InputMode; 3] = [InputMode::Complex, InputMode::RealAmplitude, InputMode::FeaturesInColumn];

    pub fn name(self) -> &'static str {
        match self {
            InputMode::Complex => "complex",
            InputMode::RealAmplitude => "real-amplitude",
            InputMode::FeaturesInColumn => "features-in-column",
        }
    }

    pub fn represent(self, values: &[Complex64]) -> Vec<Complex64> {
        let real = |x: f64| Complex64::new(x, 0.0);
        match self {
            InputMode::Complex => values.to_vec(),
            InputMode::RealAmplitude => values.iter().map(|v| real(v.norm())).collect(),
            InputMode::FeaturesInColumn => values
                .iter()
                .map(|v| real(v.norm()))
                .chain(values.iter().map(|v| real(v.arg())))
                .collect(),
        }
    }
}

impl fmt::Display for InputMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for InputMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Parameter(format!("unknown input mode '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FusionMethod {
    Voting,
    Sumup,
    Weighting,
}

impl FusionMethod {
    pub const ALL: [FusionMethod; 3] = [FusionMethod::Voting, FusionMethod::Sumup, FusionMethod::Weighting];
}

/// Outcome of single-sample SRC.
#[derive(Debug, Clone, PartialEq)]
pub struct SrcDecision {
    pub class: ActivityClass,
    /// One residual per dictionary class block, in block order.
    pub residuals: Vec<f64>,
    pub x_hat: CoefficientVector,
    pub converged: bool,
}

/// First class with the smallest residual; blocks are in fixed class order.
fn argmin_class(dict: &Dictionary, residuals: &[f64]) -> ActivityClass {
    let mut best = 0;
    for (i, r) in residuals.iter().enumerate() {
        if *r < residuals[best] {
            best = i;
        }
    }
    dict.blocks()[best].class
}

/// An SRC classifier: dictionary, cached solver and the input mode its
/// atoms were built in.
#[derive(Debug, Clone)]
pub struct SrcModel {
    dict: Dictionary,
    solver: BpdnSolver,
    cfg: SolverConfig,
}

impl SrcModel {
    pub fn new(dict: Dictionary, cfg: SolverConfig) -> Result<Self> {
        cfg.validate()?;
        let solver = BpdnSolver::for_dictionary(&dict)?;
        Ok(Self { dict, solver, cfg })
    }

    /// Dictionary of unit-norm atoms from already-represented training vectors.
    pub fn train(columns: &[(ActivityClass, Vec<Complex64>)], cfg: SolverConfig) -> Result<Self> {
        Self::new(Dictionary::from_columns(columns, true)?, cfg)
    }

    pub fn dictionary(&self) -> &Dictionary {
        &self.dict
    }

    pub fn classify(&self, y: &[Complex64]) -> Result<SrcDecision> {
        let result = self.solver.solve_slice(y, &self.cfg)?;
        let residuals = class_residuals(&self.dict, y, &result.x_hat)?;
        Ok(SrcDecision {
            class: argmin_class(&self.dict, &residuals),
            residuals,
            x_hat: result.x_hat,
            converged: result.converged,
        })
    }

    /// Per-sample SRC over a window, solved once and shared by every fusion.
    pub fn solve_window(&self, window: &[Vec<Complex64>]) -> Result<Vec<SrcDecision>> {
        window.iter().map(|y| self.classify(y)).collect()
    }

    /// Fused decision for one method from per-sample solutions.
    pub fn fuse(
        &self,
        window: &[Vec<Complex64>],
        snrs_db: &[f64],
        decisions: &[SrcDecision],
        method: FusionMethod,
    ) -> Result<ActivityClass> {
        if window.is_empty() {
            return Err(Error::EmptyInput("empty window".into()));
        }
        if window.len() != decisions.len() || window.len() != snrs_db.len() {
            return Err(Error::Dimension {
                expected: window.len(),
                found: decisions.len().min(snrs_db.len()),
            });
        }
        match method {
            FusionMethod::Voting => Ok(vote(&self.dict, decisions)),
            FusionMethod::Sumup => self.fused_residual_decision(window, decisions, &FusionWeights::uniform(window.len())),
            FusionMethod::Weighting => self.fused_residual_decision(window, decisions, &compute_weights(snrs_db)?),
        }
    }

    /// Residuals of the weighted mean coefficients against the observation
    /// fused with the same weights.
    fn fused_residual_decision(
        &self,
        window: &[Vec<Complex64>],
        decisions: &[SrcDecision],
        weights: &FusionWeights,
    ) -> Result<ActivityClass> {
        let (y, x) = fuse_pair(window, decisions, weights);
        let residuals = class_residuals(&self.dict, y.as_slice(), &x)?;
        Ok(argmin_class(&self.dict, &residuals))
    }

    pub fn fuse_classify(&self, window: &[Vec<Complex64>], snrs_db: &[f64], method: FusionMethod) -> Result<ActivityClass> {
        let decisions = self.solve_window(window)?;
        self.fuse(window, snrs_db, &decisions, method)
    }
}

/// `(sum_i w_i y_i, sum_i w_i x_i)`.
pub fn fuse_pair(
    window: &[Vec<Complex64>],
    decisions: &[SrcDecision],
    weights: &FusionWeights,
) -> (DVector<Complex64>, CoefficientVector) {
    let mut y = DVector::<Complex64>::zeros(window[0].len());
    let mut x = DVector::<Complex64>::zeros(decisions[0].x_hat.len());
    for ((yi, d), &w) in window.iter().zip(decisions).zip(weights.as_slice()) {
        y.axpy(Complex64::new(w, 0.0), &DVector::from_column_slice(yi), Complex64::new(1.0, 0.0));
        x.axpy(Complex64::new(w, 0.0), &d.x_hat.0, Complex64::new(1.0, 0.0));
    }
    (y, CoefficientVector(x))
}

/// Majority vote; ties go to the smallest summed residual, then class order.
fn vote(dict: &Dictionary, decisions: &[SrcDecision]) -> ActivityClass {
    let blocks = dict.blocks();
    let mut counts = vec![0usize; blocks.len()];
    let mut residual_sums = vec![0.0; blocks.len()];
    for d in decisions {
        let i = blocks.iter().position(|b| b.class == d.class).expect("decision class in dictionary");
        counts[i] += 1;
        for (sum, r) in residual_sums.iter_mut().zip(&d.residuals) {
            *sum += r;
        }
    }
    let top = *counts.iter().max().expect("non-empty dictionary");
    let mut best: Option<usize> = None;
    for i in (0..blocks.len()).filter(|&i| counts[i] == top) {
        if best.is_none_or(|b| residual_sums[i] < residual_sums[b]) {
            best = Some(i);
        }
    }
    blocks[best.expect("at least one class with the top count")].class
}

/// Single-sample SRC of `y` against `dict`.
pub fn src_classify(dict: &Dictionary, y: &CsiVector, cfg: &SolverConfig) -> Result<(ActivityClass, Vec<f64>)> {
    if y.len() != dict.rows() {
        return Err(Error::Dimension {
            expected: dict.rows(),
            found: y.len(),
        });
    }
    let model = SrcModel::new(dict.clone(), *cfg)?;
    let decision = model.classify(y.values())?;
    Ok((decision.class, decision.residuals))
}

/// Window decision for `method`. `dict` must have been built from vectors
/// in the same `mode`.
pub fn fuse_classify(
    dict: &Dictionary,
    window: &[Sample],
    method: FusionMethod,
    mode: InputMode,
    cfg: &SolverConfig,
) -> Result<ActivityClass> {
    if window.is_empty() {
        return Err(Error::EmptyInput("empty window".into()));
    }
    let band = window[0].csi.band();
    if window.iter().any(|s| s.csi.band() != band) {
        return Err(Error::Parameter("window samples come from different bands".into()));
    }
    let ys: Vec<_> = window.iter().map(|s| mode.represent(s.csi.values())).collect();
    let snrs: Vec<_> = window.iter().map(|s| s.snr_db).collect();
    SrcModel::new(dict.clone(), *cfg)?.fuse_classify(&ys, &snrs, method)
}

/// Euclidean distance, complex coordinates contributing `|a_k - b_k|^2`.
pub fn euclidean_distance(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt()
}

/// Most frequent class, ties in fixed class order.
fn modal_class(labels: impl IntoIterator<Item = ActivityClass>) -> Option<ActivityClass> {
    let mut counts = [0usize; 8];
    let mut any = false;
    for l in labels {
        counts[l.index()] += 1;
        any = true;
    }
    if !any {
        return None;
    }
    let top = *counts.iter().max()?;
    ActivityClass::ALL.into_iter().find(|c| counts[c.index()] == top)
}

/// kNN over represented training vectors.
#[derive(Debug, Clone)]
pub struct KnnModel {
    training: Vec<(ActivityClass, Vec<Complex64>)>,
    k: usize,
}

impl KnnModel {
    pub fn new(training: Vec<(ActivityClass, Vec<Complex64>)>, k: usize) -> Result<Self> {
        if training.is_empty() {
            return Err(Error::EmptyInput("no training vectors".into()));
        }
        if k == 0 || k > training.len() {
            return Err(Error::Parameter(format!(
                "k must lie in 1..={}, got {k}",
                training.len()
            )));
        }
        Ok(Self { training, k })
    }

    pub fn classify(&self, y: &[Complex64]) -> ActivityClass {
        let mut dists: Vec<(f64, usize)> = self
            .training
            .iter()
            .enumerate()
            .map(|(i, (_, v))| (euclidean_distance(v, y), i))
            .collect();
        dists.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        modal_class(dists[..self.k].iter().map(|&(_, i)| self.training[i].0)).expect("k >= 1")
    }

    /// Majority over per-sample decisions.
    pub fn classify_window(&self, window: &[Vec<Complex64>]) -> Result<ActivityClass> {
        modal_class(window.iter().map(|y| self.classify(y))).ok_or_else(|| Error::EmptyInput("empty window".into()))
    }
}

pub fn knn_classify(training: &[LabeledSample], window: &[Sample], k: usize, mode: InputMode) -> Result<ActivityClass> {
    let columns = training
        .iter()
        .map(|s| (s.label, mode.represent(s.sample.csi.values())))
        .collect();
    let model = KnnModel::new(columns, k)?;
    let ys: Vec<_> = window.iter().map(|s| mode.represent(s.csi.values())).collect();
    model.classify_window(&ys)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::BandDescriptor;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn weights_examples() {
        assert_eq!(compute_weights(&[20.0, 20.0]).unwrap().0, vec![0.5, 0.5]);
        let w = compute_weights(&[20.0, 40.0]).unwrap().0;
        assert!((w[0] - 1.0 / 11.0).abs() < 1e-15);
        assert!((w[1] - 10.0 / 11.0).abs() < 1e-15);
        assert!(compute_weights(&[]).is_err());
        assert!(compute_weights(&[f64::NAN]).is_err());
    }

    #[test]
    fn representations_have_expected_shape() {
        let v = [Complex64::new(3.0, 4.0), Complex64::new(0.0, -2.0)];
        assert_eq!(InputMode::Complex.represent(&v), v.to_vec());
        assert_eq!(InputMode::RealAmplitude.represent(&v), vec![c(5.0), c(2.0)]);
        let f = InputMode::FeaturesInColumn.represent(&v);
        assert_eq!(f.len(), 4);
        assert_eq!(f[1], c(2.0));
        assert!((f[3].re + std::f64::consts::FRAC_PI_2).abs() < 1e-15);
        for m in InputMode::ALL {
            assert_eq!(m.name().parse::<InputMode>().unwrap(), m);
        }
    }

    #[test]
    fn window_starts() {
        let w = WindowConfig::non_overlapping(3).unwrap();
        assert_eq!(w.starts(10).collect::<Vec<_>>(), vec![0, 3, 6]);
        assert_eq!(WindowConfig::new(2, 1).unwrap().starts(3).collect::<Vec<_>>(), vec![0, 1]);
        assert!(WindowConfig::new(0, 1).is_err());
    }

    fn knn_training() -> Vec<LabeledSample> {
        let band = BandDescriptor::new(5800.0, 20.0, 1).unwrap();
        [(ActivityClass::E, 1.0), (ActivityClass::L, 3.0), (ActivityClass::L, 3.5)]
            .into_iter()
            .enumerate()
            .map(|(i, (label, v))| LabeledSample {
                sample: Sample::new(CsiVector::new(vec![c(v)], band).unwrap(), 20.0, i as u64).unwrap(),
                label,
            })
            .collect()
    }

    #[test]
    fn knn_nearest_and_identical() {
        let training = knn_training();
        let band = *training[0].sample.csi.band();
        let q = Sample::new(CsiVector::new(vec![c(0.0)], band).unwrap(), 20.0, 0).unwrap();
        assert_eq!(knn_classify(&training, &[q], 1, InputMode::Complex).unwrap(), ActivityClass::E);
        let q = training[2].sample.clone();
        assert_eq!(knn_classify(&training, &[q.clone()], 1, InputMode::Complex).unwrap(), ActivityClass::L);
        assert!(knn_classify(&training, &[q.clone()], 0, InputMode::Complex).is_err());
        assert!(knn_classify(&training, &[q], 4, InputMode::Complex).is_err());
    }

    #[test]
    fn modal_ties_use_class_order() {
        assert_eq!(
            modal_class([ActivityClass::WL, ActivityClass::L, ActivityClass::WL, ActivityClass::L]),
            Some(ActivityClass::L)
        );
        assert_eq!(modal_class(Vec::new()), None);
    }
}
