use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use csi_src::channel_sim::{generate as simulate, RfiConfig, ScenarioConfig};
use csi_src::classifier::InputMode;
use csi_src::dataset::{read_dataset_file, save_dataset, Dataset, DatasetFormat, FORMAT_VERSION};
use csi_src::eval::{
    band_sweep, class_distance as pair_distance, evaluate_with, group_by_class, nominal_sub_band, preprocess_dataset, slice_dataset,
    BinaryMetrics, Engine, Method, OracleEngine, Preprocessing, StandardEngine, SweepSpec,
};
use csi_src::preprocess::{BandSelection, SmoothingConfig};
use csi_src::solver::{NoiseLevel, SolverConfig};
use csi_src::walking::{cross_validate, snr_windows, TrainConfig};
use csi_src::{BandDescriptor, Error, LabeledSample, Result};

use crate::{ClassDistanceArgs, EvaluateArgs, GenerateArgs, PrepArgs, SolverArgs, WalkingArgs};

const REPORT_FORMAT_VERSION: u32 = 1;

#[derive(Serialize)]
struct Manifest<'a, C: Serialize> {
    tool: &'static str,
    tool_version: &'static str,
    dataset_format_version: u32,
    report_format_version: u32,
    command: &'static str,
    seed: u64,
    config: &'a C,
}

fn write_manifest<C: Serialize>(out_dir: &Path, command: &'static str, seed: u64, config: &C) -> Result<()> {
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        tool_version: env!("CARGO_PKG_VERSION"),
        dataset_format_version: FORMAT_VERSION,
        report_format_version: REPORT_FORMAT_VERSION,
        command,
        seed,
        config,
    };
    write(out_dir, "manifest.json", &(serde_json::to_string_pretty(&manifest)? + "\n"))
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    fs::write(dir.join(name), contents)?;
    Ok(())
}

fn load(path: &Path) -> Result<Dataset> {
    read_dataset_file(path, DatasetFormat::from_path(path))
}

fn solver_config(a: &SolverArgs) -> Result<SolverConfig> {
    let cfg = SolverConfig {
        epsilon: match a.epsilon_abs {
            Some(v) => NoiseLevel::Absolute(v),
            None => NoiseLevel::Relative(a.epsilon),
        },
        max_iters: a.max_iters,
        tol: a.tol,
        rho: a.rho,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn preprocessing(a: &PrepArgs) -> Result<Preprocessing> {
    Ok(Preprocessing {
        sanitise: !a.no_sanitise,
        smoothing: a.smoothing.map(SmoothingConfig::new).transpose()?,
    })
}

fn sub_band(a: &PrepArgs) -> Result<Option<(f64, f64)>> {
    match a.sub_band.as_deref() {
        None => Ok(None),
        Some(&[start, width]) => Ok(Some((start, width))),
        Some(v) => Err(Error::Config(format!("--sub-band takes START,WIDTH, got {} values", v.len()))),
    }
}

fn parse_all<T: std::str::FromStr<Err = Error>>(items: &[String]) -> Result<Vec<T>> {
    items.iter().map(|s| s.parse()).collect()
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn generate(a: &GenerateArgs) -> Result<()> {
    let mut scenario = match &a.scenario {
        Some(p) => ScenarioConfig::from_json(&fs::read_to_string(p)?)?,
        None => ScenarioConfig::default(),
    };
    scenario.seed = a.seed;
    if let Some(n) = a.packets_per_class {
        scenario.packets_per_class = n;
    }
    let rfi = match &a.rfi_config {
        Some(p) => Some(RfiConfig::from_json(&fs::read_to_string(p)?)?),
        None => a.rfi.then(RfiConfig::default),
    };
    let samples = simulate(&scenario, rfi.as_ref())?;
    fs::create_dir_all(&a.out_dir)?;
    let (name, format) = if a.binary {
        ("dataset.bin", DatasetFormat::Binary)
    } else {
        ("dataset.txt", DatasetFormat::Text)
    };
    save_dataset(&a.out_dir.join(name), &scenario.band, &samples, format)?;

    #[derive(Serialize)]
    struct Config<'a> {
        flags: &'a GenerateArgs,
        dataset: &'a str,
        scenario: &'a ScenarioConfig,
        rfi: Option<&'a RfiConfig>,
    }
    let config = Config {
        flags: a,
        dataset: name,
        scenario: &scenario,
        rfi: rfi.as_ref(),
    };
    write_manifest(&a.out_dir, "generate", a.seed, &config)
}

pub fn evaluate(a: &EvaluateArgs) -> Result<()> {
    let spec = SweepSpec {
        ws: a.ws.clone(),
        widths_mhz: a.bands.clone(),
        step_mhz: a.step,
        methods: parse_all(&a.methods)?,
        modes: parse_all(&a.modes)?,
        folds: a.folds,
        seed: a.seed,
        k_neighbors: a.k,
        sub_band: sub_band(&a.prep)?,
        preprocessing: preprocessing(&a.prep)?,
        walking_metrics: a.walking_metrics,
        jobs: a.jobs,
    };
    let solver = solver_config(&a.solver)?;
    let data = load(&a.data)?;
    let engine: &dyn Engine = if a.stub_oracle { &OracleEngine } else { &StandardEngine };
    let report = evaluate_with(&data.samples, &spec, &solver, engine)?;

    fs::create_dir_all(a.out_dir.join("confusion"))?;
    write(&a.out_dir, "report.json", &(report.to_json()? + "\n"))?;
    write(&a.out_dir, "report.csv", &report.to_csv())?;
    for c in &report.cells {
        let name = format!("confusion/ws{}_B{}_{}_{}.csv", c.ws, c.width_mhz, c.method, c.mode);
        write(&a.out_dir, &name, &c.confusion.to_csv())?;
    }
    write_manifest(&a.out_dir, "evaluate", a.seed, a)
}

/// Row of the walking-detection table.
#[derive(Debug, Serialize)]
struct WalkingRow {
    bandwidth_mhz: f64,
    snr_window: usize,
    snr: BinaryMetrics,
    csi: BinaryMetrics,
}

fn swept_band(data: &Dataset, sub: Option<(f64, f64)>) -> Result<BandDescriptor> {
    Ok(match sub {
        Some((start, width)) => nominal_sub_band(&data.band, &BandSelection::new(&data.band, start, width)?),
        None => data.band,
    })
}

pub fn walking(a: &WalkingArgs) -> Result<()> {
    let method: Method = a.method.parse()?;
    let mode: InputMode = a.mode.parse()?;
    let solver = solver_config(&a.solver)?;
    let data = load(&a.data)?;
    let sub = sub_band(&a.prep)?;
    let band = swept_band(&data, sub)?;
    let train_cfg = TrainConfig::default();

    let mut rows = Vec::new();
    for &width in &a.bands {
        let offsets = band_sweep(&band, width, a.step)?.len();
        let snr_window = a.snr_window.unwrap_or(a.ws * offsets);
        let snr = cross_validate(&snr_windows(&data.samples, snr_window), a.folds, a.seed, &train_cfg)?;
        let spec = SweepSpec {
            ws: vec![a.ws],
            widths_mhz: vec![width],
            step_mhz: a.step,
            methods: vec![method],
            modes: vec![mode],
            folds: a.folds,
            seed: a.seed,
            k_neighbors: a.k,
            sub_band: sub,
            preprocessing: preprocessing(&a.prep)?,
            walking_metrics: true,
            jobs: a.jobs,
        };
        let report = evaluate_with(&data.samples, &spec, &solver, &StandardEngine)?;
        let csi = report.cells[0].confusion.walking_metrics();
        rows.push(WalkingRow {
            bandwidth_mhz: width,
            snr_window,
            snr,
            csi,
        });
    }

    let mut csv = String::from("bandwidth,tpr_snr,fpr_snr,f1_snr,tpr_csi,fpr_csi,f1_csi\n");
    for r in &rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            r.bandwidth_mhz,
            opt(r.snr.tpr),
            opt(r.snr.fpr),
            opt(r.snr.f1),
            opt(r.csi.tpr),
            opt(r.csi.fpr),
            opt(r.csi.f1)
        );
    }
    fs::create_dir_all(&a.out_dir)?;
    write(&a.out_dir, "walking.csv", &csv)?;
    write(&a.out_dir, "walking.json", &(serde_json::to_string_pretty(&rows)? + "\n"))?;
    write_manifest(&a.out_dir, "walking", a.seed, a)
}

#[derive(Debug, Serialize)]
struct ModeDistance {
    mode: InputMode,
    aggregate: f64,
    /// `(class, class, distance)` for every unordered pair.
    pairs: Vec<(String, String, f64)>,
}

fn prepared(data: &Dataset, prep: &PrepArgs) -> Result<Vec<LabeledSample>> {
    let samples = preprocess_dataset(&data.samples, &preprocessing(prep)?)?;
    match sub_band(prep)? {
        Some((start, width)) => slice_dataset(&samples, &BandSelection::new(&data.band, start, width)?),
        None => Ok(samples),
    }
}

pub fn class_distance(a: &ClassDistanceArgs) -> Result<()> {
    let modes: Vec<InputMode> = parse_all(&a.modes)?;
    let data = load(&a.data)?;
    let samples = prepared(&data, &a.prep)?;
    let mut results = Vec::new();
    for mode in modes {
        let groups = group_by_class(&samples, mode);
        if groups.len() < 2 {
            return Err(Error::Parameter(format!("need at least 2 classes, got {}", groups.len())));
        }
        let mut pairs = Vec::new();
        for i in 0..groups.len() {
            for j in i + 1..groups.len() {
                let d = pair_distance(&groups[i].1, &groups[j].1)?;
                pairs.push((groups[i].0.to_string(), groups[j].0.to_string(), d));
            }
        }
        let aggregate = pairs.iter().map(|p| p.2).sum::<f64>() / pairs.len() as f64;
        results.push(ModeDistance { mode, aggregate, pairs });
    }

    let mut csv = String::from("mode,distance\n");
    for r in &results {
        let _ = writeln!(csv, "{},{}", r.mode, r.aggregate);
    }
    fs::create_dir_all(&a.out_dir)?;
    write(&a.out_dir, "class_distance.csv", &csv)?;
    write(&a.out_dir, "class_distance.json", &(serde_json::to_string_pretty(&results)? + "\n"))?;
    write_manifest(&a.out_dir, "class-distance", 0, a)
}
