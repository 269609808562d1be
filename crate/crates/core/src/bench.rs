//! Experiment harness: repeated random view sampling, method comparison,
//! convergence sweeps and spectrum reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::{synthesize_ground_truth, DetectorArray, Fidelity, RealTimeModel, Sinogram};
use crate::geometry::{AssemblySpec, GridSpec};
use crate::io::{self, CsvOptions};
use crate::recon::{self, ErrorReport, ReconImage};
use crate::rom::{self, Interpolator, SnapshotDatabase};

/// Where the reference sinogram comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case")]
pub enum GroundTruthSource {
    /// A measured sinogram: `.csv` is imported, anything else is read as a
    /// saved artifact.
    File {
        path: PathBuf,
        #[serde(default = "default_delimiter")]
        delimiter: char,
        #[serde(default)]
        header_rows: usize,
    },
    Synthetic(Fidelity),
}

fn default_delimiter() -> char {
    ','
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KPolicy {
    EqualToNs,
    Fixed(usize),
    /// Fewest modes reaching this information variance.
    VarianceTarget(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_truth")]
    pub ground_truth: GroundTruthSource,
    /// Bundled layout name or a path to a layout TOML file.
    #[serde(default = "default_assembly")]
    pub assembly: String,
    /// Pixel size of the real-time model, mm.
    #[serde(default = "default_realtime_dx")]
    pub realtime_dx: f64,
    #[serde(default = "default_n_s")]
    pub n_s_values: Vec<usize>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default = "default_k_policy")]
    pub k_policy: KPolicy,
    /// Directory where expensive sinograms are cached between runs.
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
}

fn default_truth() -> GroundTruthSource {
    GroundTruthSource::Synthetic(Fidelity::default())
}
fn default_assembly() -> String {
    "pwr_10x10_3x3gap".into()
}
fn default_realtime_dx() -> f64 {
    0.5
}
fn default_n_s() -> Vec<usize> {
    vec![60]
}
fn default_trials() -> usize {
    100
}
fn default_seed() -> u64 {
    42
}
fn default_threshold() -> f64 {
    0.10
}
fn default_k_policy() -> KPolicy {
    KPolicy::EqualToNs
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            ground_truth: default_truth(),
            assembly: default_assembly(),
            realtime_dx: default_realtime_dx(),
            n_s_values: default_n_s(),
            trials: default_trials(),
            seed: default_seed(),
            threshold: default_threshold(),
            k_policy: default_k_policy(),
            cache_dir: None,
        }
    }
}

/// n_s = 30, 40, …, 120.
pub fn default_sweep() -> Vec<usize> {
    (30..=120).step_by(10).collect()
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::Config(format!("threshold {} outside [0, 1]", self.threshold)));
        }
        if self.n_s_values.is_empty() || self.n_s_values.iter().any(|&n| !(1..=360).contains(&n)) {
            return Err(Error::Config("n_s_values must lie in [1, 360]".into()));
        }
        if !(self.realtime_dx > 0.0) {
            return Err(Error::Config("realtime_dx must be positive".into()));
        }
        match self.k_policy {
            KPolicy::Fixed(0) => return Err(Error::Config("fixed k must be at least 1".into())),
            KPolicy::VarianceTarget(v) if !(v > 0.0 && v <= 1.0) => {
                return Err(Error::Config("variance target must lie in (0, 1]".into()))
            }
            _ => {}
        }
        if let GroundTruthSource::Synthetic(f) = &self.ground_truth {
            f.validate()?;
        }
        Ok(())
    }

    pub fn assembly_spec(&self) -> Result<AssemblySpec> {
        match AssemblySpec::bundled(&self.assembly) {
            Some(spec) => Ok(spec),
            None => AssemblySpec::load(&self.assembly),
        }
    }

    /// FNV-1a digest of the serialized configuration.
    pub fn digest(&self) -> String {
        format!("{:016x}", fnv1a(self.to_toml_string().as_bytes()))
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Independent, reproducible per-trial seed (SplitMix64 finalizer over the
/// master seed and trial index).
pub fn trial_seed(master: u64, trial: usize) -> u64 {
    let mut z = master
        .wrapping_add((trial as u64).wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    PaPod,
    RealTime,
    PodiLinear,
    PodiRbf,
    DataLinear,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::PaPod,
        Method::RealTime,
        Method::PodiLinear,
        Method::PodiRbf,
        Method::DataLinear,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::PaPod => "pa-pod",
            Method::RealTime => "realtime",
            Method::PodiLinear => "podi-linear",
            Method::PodiRbf => "podi-rbf",
            Method::DataLinear => "data-linear",
        }
    }
}

/// Pixel fractions at the configured threshold for one trial. Methods not
/// evaluated in a run are left empty.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub n_s: usize,
    pub trial: usize,
    pub seed: u64,
    pub k: usize,
    #[serde(rename = "pa-pod")]
    pub papod: Option<f64>,
    pub realtime: Option<f64>,
    #[serde(rename = "podi-linear")]
    pub podi_linear: Option<f64>,
    #[serde(rename = "podi-rbf")]
    pub podi_rbf: Option<f64>,
    #[serde(rename = "data-linear")]
    pub data_linear: Option<f64>,
}

impl TrialResult {
    pub fn fraction(&self, method: Method) -> Option<f64> {
        match method {
            Method::PaPod => self.papod,
            Method::RealTime => self.realtime,
            Method::PodiLinear => self.podi_linear,
            Method::PodiRbf => self.podi_rbf,
            Method::DataLinear => self.data_linear,
        }
    }

    fn set(&mut self, method: Method, value: f64) {
        let slot = match method {
            Method::PaPod => &mut self.papod,
            Method::RealTime => &mut self.realtime,
            Method::PodiLinear => &mut self.podi_linear,
            Method::PodiRbf => &mut self.podi_rbf,
            Method::DataLinear => &mut self.data_linear,
        };
        *slot = Some(value);
    }
}

/// Everything a trial needs that does not depend on the sampled views.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub config: ExperimentConfig,
    /// Normalized reference sinogram.
    pub truth: Sinogram,
    /// Normalized real-time sinogram at the reference angles.
    pub realtime: Sinogram,
    pub truth_image: ReconImage,
    pub realtime_report: ErrorReport,
}

fn cached(
    dir: Option<&Path>,
    name: &str,
    provenance: &str,
    make: impl FnOnce() -> Result<Sinogram>,
) -> Result<Sinogram> {
    let Some(dir) = dir else { return make() };
    let base = dir.join(name);
    if base.with_extension("bin").exists() {
        log::info!("loading cached {}", base.display());
        return io::load(&base);
    }
    let s = make()?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    io::save(&s, &base, provenance)?;
    Ok(s)
}

fn load_truth_file(path: &Path, delimiter: char, header_rows: usize) -> Result<Sinogram> {
    let guidance = |e: Error| match e {
        Error::Io { path, source } => Error::Io {
            path,
            source: std::io::Error::new(
                source.kind(),
                format!("{source}; set ground_truth.source = \"synthetic\" to run on a simulated reference"),
            ),
        },
        other => other,
    };
    let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        let delimiter = u8::try_from(delimiter)
            .map_err(|_| Error::Config(format!("delimiter {delimiter:?} is not a single byte")))?;
        let options = CsvOptions {
            delimiter,
            header_rows,
            angles: None,
        };
        io::import_csv_sinogram(path, &options).map_err(guidance)
    } else {
        io::load(path).map_err(guidance)
    }
}

impl Experiment {
    /// Loads or synthesizes the reference, runs the real-time model at the
    /// same angles and reconstructs both.
    pub fn prepare(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let spec = config.assembly_spec()?;
        let array = DetectorArray::default();
        let cache = config.cache_dir.as_deref();
        let truth = match &config.ground_truth {
            GroundTruthSource::File {
                path,
                delimiter,
                header_rows,
            } => load_truth_file(path, *delimiter, *header_rows)?,
            GroundTruthSource::Synthetic(fidelity) => {
                let key = format!(
                    "truth-{:016x}",
                    fnv1a(format!("{}{:?}{}", spec.to_toml_string(), fidelity, config.seed).as_bytes())
                );
                let provenance = format!("synthetic {fidelity:?} seed {}", config.seed);
                cached(cache, &key, &provenance, || {
                    synthesize_ground_truth(&spec, &array, fidelity, config.seed)
                })?
            }
        };
        let truth = if truth.normalized { truth } else { truth.normalize()? };
        if truth.n_rows() != array.n_rows() {
            return Err(Error::Shape(format!(
                "reference has {} detector rows, the detector array has {}",
                truth.n_rows(),
                array.n_rows()
            )));
        }
        let key = format!(
            "realtime-{:016x}",
            fnv1a(format!("{}{}{:?}", spec.to_toml_string(), config.realtime_dx, truth.angles).as_bytes())
        );
        let realtime = cached(cache, &key, &format!("real-time dx {}", config.realtime_dx), || {
            let grid = GridSpec::for_assembly(&spec, config.realtime_dx)?;
            RealTimeModel::new(&spec, &grid, &array)?.sinogram(&truth.angles)
        })?;
        let realtime = if realtime.normalized { realtime } else { realtime.normalize()? };
        Self::from_sinograms(config, truth, realtime)
    }

    /// Experiment over given normalized sinograms.
    pub fn from_sinograms(config: &ExperimentConfig, truth: Sinogram, realtime: Sinogram) -> Result<Self> {
        config.validate()?;
        if truth.values.shape() != realtime.values.shape() || truth.angles != realtime.angles {
            return Err(Error::Shape("reference and real-time sinograms differ in layout".into()));
        }
        let truth_image = recon::fbp(&truth)?;
        let realtime_report = recon::error_map(&recon::fbp(&realtime)?, &truth_image)?;
        Ok(Experiment {
            config: config.clone(),
            truth,
            realtime,
            truth_image,
            realtime_report,
        })
    }

    fn modes(&self, db: &SnapshotDatabase) -> Result<usize> {
        let n_s = db.n_samples();
        let cap = n_s.min(self.truth.n_rows());
        Ok(match self.config.k_policy {
            KPolicy::EqualToNs => cap,
            KPolicy::Fixed(k) => k.min(cap),
            KPolicy::VarianceTarget(v) => rom::basis_from_matrix(&db.matrix, 1)?.modes_for_variance(v).clamp(1, cap),
        })
    }

    /// Reconstructed sinogram of one method from one snapshot database.
    pub fn approximate(&self, method: Method, db: &SnapshotDatabase, k: usize) -> Result<Sinogram> {
        let angles = &self.truth.angles;
        match method {
            Method::RealTime => Ok(self.realtime.clone()),
            Method::DataLinear => rom::linear_data_interpolation(db, angles),
            Method::PaPod | Method::PodiLinear | Method::PodiRbf => {
                let basis = rom::build_basis(db, k)?;
                let coeffs = match method {
                    Method::PaPod => rom::papod_coefficients(&basis, &self.realtime, db)?,
                    Method::PodiLinear => rom::podi_coefficients(&basis, db, angles, Interpolator::Linear)?,
                    _ => rom::podi_coefficients(&basis, db, angles, Interpolator::Rbf)?,
                };
                rom::reconstruct(&basis, &coeffs)
            }
        }
    }

    /// Error report of one method against the reference reconstruction.
    pub fn evaluate(&self, method: Method, db: &SnapshotDatabase, k: usize) -> Result<ErrorReport> {
        if method == Method::RealTime {
            return Ok(self.realtime_report.clone());
        }
        let approx = self.approximate(method, db, k)?;
        recon::error_map(&recon::fbp(&approx)?, &self.truth_image)
    }

    /// One sampled trial evaluated for `methods`; the reports come back in
    /// the same order.
    pub fn trial(&self, n_s: usize, trial: usize, methods: &[Method]) -> Result<(TrialResult, Vec<ErrorReport>)> {
        let seed = trial_seed(self.config.seed, trial);
        let db = rom::sample_views(&self.truth, n_s, seed)?;
        let k = self.modes(&db)?;
        let mut result = TrialResult {
            n_s,
            trial,
            seed,
            k,
            papod: None,
            realtime: None,
            podi_linear: None,
            podi_rbf: None,
            data_linear: None,
        };
        let mut reports = Vec::with_capacity(methods.len());
        for &m in methods {
            let report = self.evaluate(m, &db, k)?;
            result.set(m, recon::pixel_fraction(&report, self.config.threshold)?);
            reports.push(report);
        }
        Ok((result, reports))
    }

    fn trials(&self, n_s: usize, methods: &[Method]) -> Result<Vec<(TrialResult, Vec<ErrorReport>)>> {
        (0..self.config.trials)
            .into_par_iter()
            .map(|t| self.trial(n_s, t, methods))
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct Comparison {
    /// Trials for every configured n_s, ordered by (n_s, trial).
    pub trials: Vec<TrialResult>,
    /// Per-pixel median error map of each method at the first n_s.
    pub median: BTreeMap<Method, ErrorReport>,
}

/// All methods on `config.trials` random view sets for each configured n_s.
pub fn run_comparison(experiment: &Experiment) -> Result<Comparison> {
    let mut trials = Vec::new();
    let mut median = BTreeMap::new();
    for (i, &n_s) in experiment.config.n_s_values.iter().enumerate() {
        let runs = experiment.trials(n_s, &Method::ALL)?;
        if i == 0 {
            for (j, &m) in Method::ALL.iter().enumerate() {
                let reports: Vec<ErrorReport> = runs.iter().map(|(_, r)| r[j].clone()).collect();
                median.insert(m, recon::median_error_map(&reports)?);
            }
        }
        trials.extend(runs.into_iter().map(|(t, _)| t));
    }
    Ok(Comparison { trials, median })
}

/// PA-POD (with the real-time fraction alongside) over the n_s sweep.
pub fn run_convergence(experiment: &Experiment) -> Result<Vec<TrialResult>> {
    let mut out = Vec::new();
    for &n_s in &experiment.config.n_s_values {
        out.extend(
            experiment
                .trials(n_s, &[Method::PaPod, Method::RealTime])?
                .into_iter()
                .map(|(t, _)| t),
        );
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergencePoint {
    pub n_s: usize,
    pub trials: usize,
    pub mean: f64,
    /// Sample standard deviation (n − 1 denominator); 0 for one trial.
    pub std: f64,
}

/// Mean and spread of one method's fraction for every n_s present.
pub fn summarize(results: &[TrialResult], method: Method) -> Vec<ConvergencePoint> {
    let mut groups: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for r in results {
        if let Some(f) = r.fraction(method) {
            groups.entry(r.n_s).or_default().push(f);
        }
    }
    groups
        .into_iter()
        .map(|(n_s, v)| {
            let n = v.len() as f64;
            let mean = v.iter().sum::<f64>() / n;
            let std = if v.len() > 1 {
                (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            ConvergencePoint {
                n_s,
                trials: v.len(),
                mean,
                std,
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub singular_values: Vec<f64>,
    pub normalized_spectrum: Vec<f64>,
    /// Information variance of the first j modes, j = 0..=len.
    pub cumulative: Vec<f64>,
    pub modes_80: usize,
    pub modes_90: usize,
    pub modes_95: usize,
}

/// Singular-value spectrum of a full sinogram.
pub fn run_spectrum(sinogram: &Sinogram) -> Result<SpectrumReport> {
    let basis = rom::basis_from_matrix(&sinogram.values, 1)?;
    Ok(SpectrumReport {
        cumulative: basis.cumulative_variance(),
        modes_80: basis.modes_for_variance(0.80),
        modes_90: basis.modes_for_variance(0.90),
        modes_95: basis.modes_for_variance(0.95),
        singular_values: basis.singular_values,
        normalized_spectrum: basis.normalized_spectrum,
    })
}

pub fn write_trials(results: &[TrialResult], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
    for r in results {
        w.serialize(r).map_err(|e| csv_io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_trials(path: impl AsRef<Path>) -> Result<Vec<TrialResult>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_io(path, e))?;
    r.deserialize()
        .map(|row| row.map_err(|e| csv_io(path, e)))
        .collect()
}

fn csv_io(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        other => Error::Parse {
            path: path.into(),
            line,
            column: 0,
            message: format!("{other:?}"),
        },
    }
}

pub fn write_convergence(points: &[ConvergencePoint], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
    for p in points {
        w.serialize(p).map_err(|e| csv_io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_spectrum(report: &SpectrumReport, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
    w.write_record(["mode", "singular_value", "normalized", "cumulative"])
        .map_err(|e| csv_io(path, e))?;
    for (j, (d, s)) in report.singular_values.iter().zip(&report.normalized_spectrum).enumerate() {
        w.write_record([
            j.to_string(),
            format!("{d:.16e}"),
            format!("{s:.16e}"),
            format!("{:.16e}", report.cumulative[j + 1]),
        ])
        .map_err(|e| csv_io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Plain-text digest of a set of trials.
pub fn summary_text(config: &ExperimentConfig, results: &[TrialResult]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "config digest {}", config.digest());
    let _ = writeln!(out, "seed {}  trials {}  threshold {}", config.seed, config.trials, config.threshold);
    for m in Method::ALL {
        for p in summarize(results, m) {
            let _ = writeln!(
                out,
                "{:<12} n_s {:>3}  mean {:.4}  std {:.4}  ({} trials)",
                m.name(),
                p.n_s,
                p.mean,
                p.std,
                p.trials
            );
        }
    }
    out
}
