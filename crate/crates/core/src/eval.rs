//! Cross-validation harness: windowing, stratified folds, bandwidth-window
//! sweeps, accuracy / confusion / binary metrics and the class-distance
//! separability metric.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{euclidean_distance, FusionMethod, InputMode, KnnModel, SrcModel};
use crate::error::{Error, Result};
use crate::model::{ActivityClass, BandDescriptor, LabeledSample};
use crate::preprocess::{sanitise, slice_band, smooth, BandSelection, SmoothingConfig};
use crate::rng::substream;
use crate::solver::SolverConfig;

const MHZ_SLACK: f64 = 1e-9;

/// Rows are true classes, columns predictions, both in fixed class order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub classes: Vec<ActivityClass>,
    pub counts: Vec<Vec<u64>>,
}

impl Default for ConfusionMatrix {
    fn default() -> Self {
        Self::new()
    }
}

impl ConfusionMatrix {
    pub fn new() -> Self {
        Self {
            classes: ActivityClass::ALL.to_vec(),
            counts: vec![vec![0; ActivityClass::ALL.len()]; ActivityClass::ALL.len()],
        }
    }

    pub fn record(&mut self, truth: ActivityClass, predicted: ActivityClass) {
        self.counts[truth.index()][predicted.index()] += 1;
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        for (row, o) in self.counts.iter_mut().zip(&other.counts) {
            for (c, v) in row.iter_mut().zip(o) {
                *c += v;
            }
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.counts.len()).map(|i| self.counts[i][i]).sum()
    }

    pub fn row_sums(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    /// `trace / total`, or `None` when empty.
    pub fn accuracy(&self) -> Option<f64> {
        let total = self.total();
        (total > 0).then(|| self.trace() as f64 / total as f64)
    }

    /// Walking ({WB, WL}) as the positive class.
    pub fn walking_metrics(&self) -> BinaryMetrics {
        let (mut tp, mut tn, mut fp, mut fn_) = (0, 0, 0, 0);
        for truth in ActivityClass::ALL {
            for pred in ActivityClass::ALL {
                let n = self.counts[truth.index()][pred.index()];
                match (truth.is_walking(), pred.is_walking()) {
                    (true, true) => tp += n,
                    (false, false) => tn += n,
                    (false, true) => fp += n,
                    (true, false) => fn_ += n,
                }
            }
        }
        BinaryMetrics::from_counts(tp, tn, fp, fn_)
    }

    /// CSV grid: header `true\predicted,<labels>`, one row per true class.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("true\\predicted");
        for c in &self.classes {
            let _ = write!(s, ",{c}");
        }
        s.push('\n');
        for (c, row) in self.classes.iter().zip(&self.counts) {
            s.push_str(c.label());
            for v in row {
                let _ = write!(s, ",{v}");
            }
            s.push('\n');
        }
        s
    }
}

/// Binary detection counts and rates; a rate with a zero denominator is `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinaryMetrics {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tpr: Option<f64>,
    pub fpr: Option<f64>,
    pub f1: Option<f64>,
}

impl BinaryMetrics {
    pub fn from_counts(tp: u64, tn: u64, fp: u64, fn_: u64) -> Self {
        let ratio = |num: u64, den: u64| (den > 0).then(|| num as f64 / den as f64);
        Self {
            tp,
            tn,
            fp,
            fn_,
            tpr: ratio(tp, tp + fn_),
            fpr: ratio(fp, fp + tn),
            f1: ratio(2 * tp, 2 * tp + fp + fn_),
        }
    }

    pub fn from_predictions(pairs: impl IntoIterator<Item = (bool, bool)>) -> Self {
        let (mut tp, mut tn, mut fp, mut fn_) = (0, 0, 0, 0);
        for (truth, pred) in pairs {
            match (truth, pred) {
                (true, true) => tp += 1,
                (false, false) => tn += 1,
                (false, true) => fp += 1,
                (true, false) => fn_ += 1,
            }
        }
        Self::from_counts(tp, tn, fp, fn_)
    }
}

/// `ws` consecutive samples of one class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Window {
    pub label: ActivityClass,
    pub start: usize,
    pub len: usize,
}

impl Window {
    pub fn indices(&self) -> std::ops::Range<usize> {
        self.start..self.start + self.len
    }
}

/// Non-overlapping windows inside each run of consecutive same-label
/// samples; a trailing partial window is dropped.
pub fn form_windows(data: &[LabeledSample], ws: usize) -> Result<Vec<Window>> {
    if ws == 0 {
        return Err(Error::Parameter("window size must be >= 1".into()));
    }
    let mut out = Vec::new();
    let mut start = 0;
    while start < data.len() {
        let label = data[start].label;
        let end = (start..data.len()).find(|&i| data[i].label != label).unwrap_or(data.len());
        let mut s = start;
        while s + ws <= end {
            out.push(Window { label, start: s, len: ws });
            s += ws;
        }
        start = end;
    }
    Ok(out)
}

/// Window indices of one cross-validation fold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Stratified k-fold partition of `windows` by class.
pub fn kfold_split(windows: &[Window], k: usize, seed: u64) -> Result<Vec<Fold>> {
    let strata: Vec<usize> = windows.iter().map(|w| w.label.index()).collect();
    stratified_folds(&strata, k, seed)
}

/// Stratified k-fold partition of items labelled by `strata`.
///
/// Each stratum is shuffled with the seed and dealt round-robin, the
/// starting fold rotating with the stratum so fold sizes stay balanced.
pub fn stratified_folds(strata: &[usize], k: usize, seed: u64) -> Result<Vec<Fold>> {
    if k < 2 {
        return Err(Error::Parameter(format!("fold count must be >= 2, got {k}")));
    }
    let mut keys: Vec<usize> = strata.to_vec();
    keys.sort_unstable();
    keys.dedup();
    let mut assignment = vec![0usize; strata.len()];
    for (rank, &key) in keys.iter().enumerate() {
        let mut ids: Vec<usize> = (0..strata.len()).filter(|&i| strata[i] == key).collect();
        if ids.len() < k {
            return Err(Error::Stratification(format!(
                "stratum {key} has {} items, fewer than {k} folds",
                ids.len()
            )));
        }
        ids.shuffle(&mut substream(seed, &format!("kfold/{key}")));
        for (pos, id) in ids.into_iter().enumerate() {
            assignment[id] = (pos + rank) % k;
        }
    }
    Ok((0..k)
        .map(|f| Fold {
            train: (0..strata.len()).filter(|&i| assignment[i] != f).collect(),
            test: (0..strata.len()).filter(|&i| assignment[i] == f).collect(),
        })
        .collect())
}

/// Selections of `width_mhz` at offsets `0, step, 2 step, ...` that fit
/// completely in the band.
pub fn band_sweep(band: &BandDescriptor, width_mhz: f64, step_mhz: f64) -> Result<Vec<BandSelection>> {
    let total = band.total_bandwidth_mhz;
    if !(step_mhz.is_finite() && step_mhz > 0.0) {
        return Err(Error::Parameter(format!("band step must be > 0, got {step_mhz}")));
    }
    if !(width_mhz.is_finite() && width_mhz > 0.0) || width_mhz > total * (1.0 + MHZ_SLACK) {
        return Err(Error::Range(format!("window of {width_mhz} MHz does not fit a {total} MHz band")));
    }
    let count = ((total - width_mhz) / step_mhz + MHZ_SLACK).floor() as usize + 1;
    (0..count)
        .map(|j| BandSelection::new(band, j as f64 * step_mhz, width_mhz))
        .collect()
}

/// Descriptor of a sliced sub-band carrying its requested width, so a
/// bandwidth window as wide as the sub-band resolves to one selection.
pub fn nominal_sub_band(band: &BandDescriptor, sel: &BandSelection) -> BandDescriptor {
    BandDescriptor {
        total_bandwidth_mhz: sel.width_mhz,
        ..sel.sliced_band(band)
    }
}

/// Classification methods compared by the harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    L1Voting,
    L1Sumup,
    L1Weighting,
    KnnVoting,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::L1Voting, Method::L1Sumup, Method::L1Weighting, Method::KnnVoting];

    pub fn name(self) -> &'static str {
        match self {
            Method::L1Voting => "l1-voting",
            Method::L1Sumup => "l1-sumup",
            Method::L1Weighting => "l1-weighting",
            Method::KnnVoting => "knn-voting",
        }
    }

    pub fn fusion(self) -> Option<FusionMethod> {
        match self {
            Method::L1Voting => Some(FusionMethod::Voting),
            Method::L1Sumup => Some(FusionMethod::Sumup),
            Method::L1Weighting => Some(FusionMethod::Weighting),
            Method::KnnVoting => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Parameter(format!("unknown method '{s}'")))
    }
}

/// Per-sample preparation applied on the full band before any slicing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Preprocessing {
    pub sanitise: bool,
    /// Exponential smoothing within each same-label run.
    pub smoothing: Option<SmoothingConfig>,
}

impl Default for Preprocessing {
    fn default() -> Self {
        Self {
            sanitise: true,
            smoothing: None,
        }
    }
}

/// Applies `prep` to every sample, smoothing within same-label runs.
pub fn preprocess_dataset(data: &[LabeledSample], prep: &Preprocessing) -> Result<Vec<LabeledSample>> {
    let mut out: Vec<LabeledSample> = data.to_vec();
    if prep.sanitise {
        for s in out.iter_mut() {
            s.sample.csi = sanitise(&s.sample.csi);
        }
    }
    if let Some(cfg) = prep.smoothing {
        let mut start = 0;
        while start < out.len() {
            let label = out[start].label;
            let end = (start..out.len()).find(|&i| out[i].label != label).unwrap_or(out.len());
            let stream: Vec<_> = out[start..end].iter().map(|s| s.sample.csi.clone()).collect();
            for (s, csi) in out[start..end].iter_mut().zip(smooth(&stream, cfg)?) {
                s.sample.csi = csi;
            }
            start = end;
        }
    }
    Ok(out)
}

/// Restricts every sample to `sel`.
pub fn slice_dataset(data: &[LabeledSample], sel: &BandSelection) -> Result<Vec<LabeledSample>> {
    data.iter()
        .map(|s| {
            let mut s = s.clone();
            s.sample.csi = slice_band(&s.sample.csi, sel)?;
            Ok(s)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub ws: Vec<usize>,
    pub widths_mhz: Vec<f64>,
    pub step_mhz: f64,
    pub methods: Vec<Method>,
    pub modes: Vec<InputMode>,
    pub folds: usize,
    pub seed: u64,
    /// Neighbours for kNN-voting.
    pub k_neighbors: usize,
    /// `(start, width)` MHz sub-band the dataset is cut to before sweeping.
    pub sub_band: Option<(f64, f64)>,
    pub preprocessing: Preprocessing,
    /// Also report walking-vs-rest detection metrics.
    pub walking_metrics: bool,
    /// Worker threads for independent cells; 0 lets the pool decide.
    pub jobs: usize,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            ws: vec![1],
            widths_mhz: vec![20.0],
            step_mhz: 5.0,
            methods: vec![Method::L1Weighting],
            modes: vec![InputMode::Complex],
            folds: 10,
            seed: 0,
            k_neighbors: 5,
            sub_band: None,
            preprocessing: Preprocessing::default(),
            walking_metrics: false,
            jobs: 1,
        }
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.folds < 2 {
            return Err(Error::Config(format!("fold count must be >= 2, got {}", self.folds)));
        }
        if self.ws.is_empty() || self.ws.contains(&0) {
            return Err(Error::Config("window sizes must be non-empty and >= 1".into()));
        }
        if self.widths_mhz.is_empty() || self.methods.is_empty() || self.modes.is_empty() {
            return Err(Error::Config("widths, methods and modes must be non-empty".into()));
        }
        if self.k_neighbors == 0 {
            return Err(Error::Config("k must be >= 1".into()));
        }
        Ok(())
    }
}

/// A test window as seen by an [`Engine`].
#[derive(Debug, Clone)]
pub struct TestWindow {
    /// Ground truth, available to oracle stubs only.
    pub truth: ActivityClass,
    pub vectors: Vec<Vec<Complex64>>,
    pub snrs_db: Vec<f64>,
}

/// A classifier trained on one fold.
pub trait Fitted {
    /// One decision per method, in `methods` order.
    fn predict(&self, window: &TestWindow, methods: &[Method]) -> Result<Vec<ActivityClass>>;
}

/// Builds a [`Fitted`] classifier from training vectors.
pub trait Engine: Sync {
    fn fit(
        &self,
        training: Vec<(ActivityClass, Vec<Complex64>)>,
        methods: &[Method],
        solver: &SolverConfig,
        k_neighbors: usize,
    ) -> Result<Box<dyn Fitted>>;
}

/// SRC fusion methods and kNN-voting.
#[derive(Debug, Clone, Copy, Default)]
pub struct StandardEngine;

struct StandardFitted {
    src: Option<SrcModel>,
    knn: Option<KnnModel>,
}

impl Engine for StandardEngine {
    fn fit(
        &self,
        training: Vec<(ActivityClass, Vec<Complex64>)>,
        methods: &[Method],
        solver: &SolverConfig,
        k_neighbors: usize,
    ) -> Result<Box<dyn Fitted>> {
        let src = if methods.iter().any(|m| m.fusion().is_some()) {
            Some(SrcModel::train(&training, *solver)?)
        } else {
            None
        };
        let knn = if methods.contains(&Method::KnnVoting) {
            Some(KnnModel::new(training, k_neighbors)?)
        } else {
            None
        };
        Ok(Box::new(StandardFitted { src, knn }))
    }
}

impl Fitted for StandardFitted {
    fn predict(&self, window: &TestWindow, methods: &[Method]) -> Result<Vec<ActivityClass>> {
        let decisions = match &self.src {
            Some(src) => Some(src.solve_window(&window.vectors)?),
            None => None,
        };
        methods
            .iter()
            .map(|m| match (m.fusion(), &self.src, &decisions, &self.knn) {
                (Some(f), Some(src), Some(d), _) => src.fuse(&window.vectors, &window.snrs_db, d, f),
                (None, _, _, Some(knn)) => knn.classify_window(&window.vectors),
                _ => Err(Error::Config(format!("method {m} was not fitted"))),
            })
            .collect()
    }
}

/// Test hook: always answers the ground truth.
#[derive(Debug, Clone, Copy, Default)]
pub struct OracleEngine;

struct OracleFitted;

impl Engine for OracleEngine {
    fn fit(&self, _: Vec<(ActivityClass, Vec<Complex64>)>, _: &[Method], _: &SolverConfig, _: usize) -> Result<Box<dyn Fitted>> {
        Ok(Box::new(OracleFitted))
    }
}

impl Fitted for OracleFitted {
    fn predict(&self, window: &TestWindow, methods: &[Method]) -> Result<Vec<ActivityClass>> {
        Ok(vec![window.truth; methods.len()])
    }
}

/// Test hook: always answers one class.
#[derive(Debug, Clone, Copy)]
pub struct ConstantEngine(pub ActivityClass);

struct ConstantFitted(ActivityClass);

impl Engine for ConstantEngine {
    fn fit(&self, _: Vec<(ActivityClass, Vec<Complex64>)>, _: &[Method], _: &SolverConfig, _: usize) -> Result<Box<dyn Fitted>> {
        Ok(Box::new(ConstantFitted(self.0)))
    }
}

impl Fitted for ConstantFitted {
    fn predict(&self, _: &TestWindow, methods: &[Method]) -> Result<Vec<ActivityClass>> {
        Ok(vec![self.0; methods.len()])
    }
}

/// Accuracy of one fold at one band offset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub offset_mhz: f64,
    pub fold: usize,
    pub accuracy: f64,
    pub correct: u64,
    pub total: u64,
}

/// Everything measured for one `(ws, B, method, mode)` combination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub ws: usize,
    pub width_mhz: f64,
    pub method: Method,
    pub mode: InputMode,
    /// Mean over band offsets of the mean over folds.
    pub accuracy: f64,
    pub folds: Vec<FoldResult>,
    /// Summed over folds and band offsets.
    pub confusion: ConfusionMatrix,
    pub binary: Option<BinaryMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub spec: SweepSpec,
    pub solver: SolverConfig,
    pub cells: Vec<CellReport>,
}

impl EvalReport {
    pub fn cell(&self, ws: usize, width_mhz: f64, method: Method, mode: InputMode) -> Option<&CellReport> {
        self.cells
            .iter()
            .find(|c| c.ws == ws && c.width_mhz == width_mhz && c.method == method && c.mode == mode)
    }

    /// Flat rows `ws,B,offset,method,mode,fold,accuracy`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("ws,B,offset,method,mode,fold,accuracy\n");
        for c in &self.cells {
            for f in &c.folds {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{},{}",
                    c.ws, c.width_mhz, f.offset_mhz, c.method, c.mode, f.fold, f.accuracy
                );
            }
        }
        s
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

struct Task {
    ws_idx: usize,
    width_idx: usize,
    offset_idx: usize,
    mode: InputMode,
    fold: usize,
}

struct TaskResult {
    /// Per method: confusion of this fold.
    confusion: Vec<ConfusionMatrix>,
}

pub fn evaluate(data: &[LabeledSample], spec: &SweepSpec, solver: &SolverConfig) -> Result<EvalReport> {
    evaluate_with(data, spec, solver, &StandardEngine)
}

/// Runs the sweep with a custom classifier engine.
pub fn evaluate_with(
    data: &[LabeledSample],
    spec: &SweepSpec,
    solver: &SolverConfig,
    engine: &dyn Engine,
) -> Result<EvalReport> {
    spec.validate()?;
    solver.validate()?;
    let first = data.first().ok_or_else(|| Error::EmptyInput("no samples to evaluate".into()))?;
    let band = *first.sample.csi.band();
    if data.iter().any(|s| s.sample.csi.band() != &band) {
        return Err(Error::Parameter("samples come from different bands".into()));
    }

    let mut prepared = preprocess_dataset(data, &spec.preprocessing)?;
    let mut band = band;
    if let Some((start, width)) = spec.sub_band {
        let sel = BandSelection::new(&band, start, width).map_err(|e| Error::Config(format!("sub-band: {e}")))?;
        prepared = slice_dataset(&prepared, &sel)?;
        band = nominal_sub_band(&band, &sel);
    }

    let windowing = spec
        .ws
        .iter()
        .map(|&ws| {
            let windows = form_windows(&prepared, ws)?;
            let folds = kfold_split(&windows, spec.folds, spec.seed)?;
            Ok((windows, folds))
        })
        .collect::<Result<Vec<_>>>()?;
    let sweeps = spec
        .widths_mhz
        .iter()
        .map(|&w| band_sweep(&band, w, spec.step_mhz).map_err(|e| Error::Config(e.to_string())))
        .collect::<Result<Vec<_>>>()?;

    let mut tasks = Vec::new();
    for ws_idx in 0..spec.ws.len() {
        for (width_idx, sweep) in sweeps.iter().enumerate() {
            for offset_idx in 0..sweep.len() {
                for &mode in &spec.modes {
                    for fold in 0..spec.folds {
                        tasks.push(Task { ws_idx, width_idx, offset_idx, mode, fold });
                    }
                }
            }
        }
    }

    let run = |t: &Task| -> Result<TaskResult> {
        let (windows, folds) = &windowing[t.ws_idx];
        let sel = &sweeps[t.width_idx][t.offset_idx];
        let fold = &folds[t.fold];
        let represent = |i: usize| t.mode.represent(&prepared[i].sample.csi.values()[sel.lo..sel.hi]);
        let training = fold
            .train
            .iter()
            .flat_map(|&w| windows[w].indices())
            .map(|i| (prepared[i].label, represent(i)))
            .collect();
        let fitted = engine.fit(training, &spec.methods, solver, spec.k_neighbors)?;
        let mut confusion = vec![ConfusionMatrix::new(); spec.methods.len()];
        for &w in &fold.test {
            let win = &windows[w];
            let test = TestWindow {
                truth: win.label,
                vectors: win.indices().map(represent).collect(),
                snrs_db: win.indices().map(|i| prepared[i].sample.snr_db).collect(),
            };
            for (cm, pred) in confusion.iter_mut().zip(fitted.predict(&test, &spec.methods)?) {
                cm.record(win.label, pred);
            }
        }
        Ok(TaskResult { confusion })
    };

    let results: Vec<TaskResult> = if spec.jobs == 1 {
        tasks.iter().map(run).collect::<Result<_>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(spec.jobs)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        pool.install(|| tasks.par_iter().map(run).collect::<Result<_>>())?
    };

    let mut cells = Vec::new();
    for (ws_idx, &ws) in spec.ws.iter().enumerate() {
        for (width_idx, &width) in spec.widths_mhz.iter().enumerate() {
            let sweep = &sweeps[width_idx];
            for (m_idx, &method) in spec.methods.iter().enumerate() {
                for &mode in &spec.modes {
                    let mut confusion = ConfusionMatrix::new();
                    let mut folds = Vec::new();
                    let mut offset_means = Vec::new();
                    for (offset_idx, sel) in sweep.iter().enumerate() {
                        let mut fold_accs = Vec::new();
                        for (task, result) in tasks.iter().zip(&results) {
                            if task.ws_idx != ws_idx
                                || task.width_idx != width_idx
                                || task.offset_idx != offset_idx
                                || task.mode != mode
                            {
                                continue;
                            }
                            let cm = &result.confusion[m_idx];
                            confusion.merge(cm);
                            let accuracy = cm.accuracy().unwrap_or(0.0);
                            fold_accs.push(accuracy);
                            folds.push(FoldResult {
                                offset_mhz: sel.start_mhz_offset,
                                fold: task.fold,
                                accuracy,
                                correct: cm.trace(),
                                total: cm.total(),
                            });
                        }
                        offset_means.push(fold_accs.iter().sum::<f64>() / fold_accs.len() as f64);
                    }
                    let accuracy = offset_means.iter().sum::<f64>() / offset_means.len() as f64;
                    let binary = spec.walking_metrics.then(|| confusion.walking_metrics());
                    cells.push(CellReport {
                        ws,
                        width_mhz: width,
                        method,
                        mode,
                        accuracy,
                        folds,
                        confusion,
                        binary,
                    });
                }
            }
        }
    }
    Ok(EvalReport {
        spec: spec.clone(),
        solver: *solver,
        cells,
    })
}

fn normalized(v: &[Complex64]) -> Result<Vec<Complex64>> {
    let norm = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::Normalization);
    }
    Ok(v.iter().map(|x| x / norm).collect())
}

fn mean_pairwise(a: &[Vec<Complex64>], b: &[Vec<Complex64>]) -> f64 {
    let mut sum = 0.0;
    for x in a {
        for y in b {
            sum += euclidean_distance(x, y);
        }
    }
    sum / (a.len() * b.len()) as f64
}

/// Separability of two classes: twice the mean cross-class distance minus
/// both mean within-class distances, over unit-normalised vectors.
pub fn class_distance(c1: &[Vec<Complex64>], c2: &[Vec<Complex64>]) -> Result<f64> {
    if c1.is_empty() || c2.is_empty() {
        return Err(Error::EmptyInput("class_distance needs two non-empty classes".into()));
    }
    let a = c1.iter().map(|v| normalized(v)).collect::<Result<Vec<_>>>()?;
    let b = c2.iter().map(|v| normalized(v)).collect::<Result<Vec<_>>>()?;
    Ok(2.0 * mean_pairwise(&a, &b) - mean_pairwise(&a, &a) - mean_pairwise(&b, &b))
}

/// Mean [`class_distance`] over all unordered pairs of groups.
pub fn aggregate_class_distance(groups: &[Vec<Vec<Complex64>>]) -> Result<f64> {
    if groups.len() < 2 {
        return Err(Error::Parameter(format!("need at least 2 classes, got {}", groups.len())));
    }
    let mut sum = 0.0;
    let mut pairs = 0;
    for i in 0..groups.len() {
        for j in i + 1..groups.len() {
            sum += class_distance(&groups[i], &groups[j])?;
            pairs += 1;
        }
    }
    Ok(sum / pairs as f64)
}

/// Groups `data` by class (fixed class order) in representation `mode`.
pub fn group_by_class(data: &[LabeledSample], mode: InputMode) -> Vec<(ActivityClass, Vec<Vec<Complex64>>)> {
    ActivityClass::ALL
        .into_iter()
        .filter_map(|c| {
            let vs: Vec<_> = data
                .iter()
                .filter(|s| s.label == c)
                .map(|s| mode.represent(s.sample.csi.values()))
                .collect();
            (!vs.is_empty()).then_some((c, vs))
        })
        .collect()
}

/// Aggregate class distance of a dataset in representation `mode`.
pub fn dataset_class_distance(data: &[LabeledSample], mode: InputMode) -> Result<f64> {
    let groups: Vec<_> = group_by_class(data, mode).into_iter().map(|(_, v)| v).collect();
    aggregate_class_distance(&groups)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CsiVector, Sample};

    fn labeled(labels: &[(ActivityClass, usize)]) -> Vec<LabeledSample> {
        let band = BandDescriptor::new(5800.0, 20.0, 2).unwrap();
        let mut out = Vec::new();
        for &(label, n) in labels {
            for _ in 0..n {
                let seq = out.len() as u64;
                let csi = CsiVector::new(vec![Complex64::new(1.0 + seq as f64, 0.5); 2], band).unwrap();
                out.push(LabeledSample { sample: Sample::new(csi, 20.0, seq).unwrap(), label });
            }
        }
        out
    }

    #[test]
    fn band_sweep_counts() {
        let wasp = BandDescriptor::wasp_5800();
        assert_eq!(band_sweep(&wasp, 20.0, 5.0).unwrap().len(), 22);
        let b20 = BandDescriptor::new(5785.0, 20.0, 51).unwrap();
        assert_eq!(band_sweep(&b20, 20.0, 5.0).unwrap().len(), 1);
        assert_eq!(band_sweep(&b20, 5.0, 5.0).unwrap().len(), 4);
        assert!(matches!(band_sweep(&b20, 25.0, 5.0), Err(Error::Range(_))));
        assert!(band_sweep(&b20, 5.0, 0.0).is_err());
    }

    #[test]
    fn windows_stay_inside_runs() {
        let data = labeled(&[(ActivityClass::E, 5), (ActivityClass::L, 4), (ActivityClass::E, 2)]);
        let w = form_windows(&data, 2).unwrap();
        let starts: Vec<_> = w.iter().map(|w| (w.label, w.start)).collect();
        assert_eq!(
            starts,
            vec![
                (ActivityClass::E, 0),
                (ActivityClass::E, 2),
                (ActivityClass::L, 5),
                (ActivityClass::L, 7),
                (ActivityClass::E, 9)
            ]
        );
    }

    #[test]
    fn one_window_per_class_per_fold() {
        let spec: Vec<_> = ActivityClass::ALL.iter().map(|&c| (c, 10)).collect();
        let data = labeled(&spec);
        let windows = form_windows(&data, 1).unwrap();
        assert_eq!(windows.len(), 80);
        let folds = kfold_split(&windows, 10, 7).unwrap();
        for f in &folds {
            assert_eq!(f.test.len(), 8);
            let mut classes: Vec<_> = f.test.iter().map(|&i| windows[i].label).collect();
            classes.sort();
            assert_eq!(classes, ActivityClass::ALL.to_vec());
            assert_eq!(f.train.len(), 72);
        }
        assert_eq!(folds, kfold_split(&windows, 10, 7).unwrap());
    }

    #[test]
    fn two_folds_of_four() {
        let data = labeled(&[(ActivityClass::SiB, 4)]);
        let windows = form_windows(&data, 1).unwrap();
        let folds = kfold_split(&windows, 2, 1).unwrap();
        assert_eq!(folds[0].test.len(), 2);
        assert_eq!(folds[1].test.len(), 2);
        assert!(matches!(kfold_split(&windows, 5, 1), Err(Error::Stratification(_))));
        assert!(kfold_split(&windows, 1, 1).is_err());
    }

    #[test]
    fn binary_metric_identities() {
        let m = BinaryMetrics::from_counts(3, 5, 1, 2);
        assert_eq!(m.tpr, Some(0.6));
        assert_eq!(m.fpr, Some(1.0 / 6.0));
        assert_eq!(m.f1, Some(6.0 / 9.0));
        let empty = BinaryMetrics::from_counts(0, 4, 0, 0);
        assert_eq!(empty.tpr, None);
        assert_eq!(empty.fpr, Some(0.0));
        assert_eq!(empty.f1, None);
    }

    #[test]
    fn confusion_walking_grouping() {
        let mut cm = ConfusionMatrix::new();
        cm.record(ActivityClass::WB, ActivityClass::WL);
        cm.record(ActivityClass::WL, ActivityClass::E);
        cm.record(ActivityClass::E, ActivityClass::E);
        cm.record(ActivityClass::L, ActivityClass::WB);
        let m = cm.walking_metrics();
        assert_eq!((m.tp, m.tn, m.fp, m.fn_), (1, 1, 1, 1));
        assert_eq!(cm.accuracy(), Some(0.25));
        assert!(cm.to_csv().starts_with("true\\predicted,E,L,SiB,SiL,StB,StL,WB,WL\nE,1,0"));
    }

    #[test]
    fn class_distance_examples() {
        let e1 = vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)];
        let e2 = vec![Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)];
        let d = class_distance(&[e1.clone()], &[e2.clone()]).unwrap();
        assert_eq!(d, 2.0 * 2f64.sqrt());
        assert_eq!(class_distance(&[e1.clone(), e2.clone()], &[e1.clone(), e2.clone()]).unwrap(), 0.0);
        assert!(matches!(
            class_distance(&[e1.clone()], &[vec![Complex64::new(0.0, 0.0); 2]]),
            Err(Error::Normalization)
        ));
        assert!(aggregate_class_distance(&[vec![e1.clone()]]).is_err());
        let two = aggregate_class_distance(&[vec![e1.clone()], vec![e2.clone()]]).unwrap();
        assert_eq!(two, d);
        let same = aggregate_class_distance(&[vec![e1.clone()], vec![e1.clone()], vec![e1]]).unwrap();
        assert_eq!(same, 0.0);
    }
}
