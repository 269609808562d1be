use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use papod::bench::{self, Experiment, ExperimentConfig, GroundTruthSource, KPolicy, Method};
use papod::forward::{synthesize_ground_truth, DetectorArray, RealTimeModel, Sinogram};
use papod::geometry::GridSpec;
use papod::io::{self, Artifact, CsvOptions};
use papod::recon::{self, ReconImage};
use papod::rom::{self, Interpolator};
use papod::{Error, Result};

#[derive(Parser)]
#[command(name = "papod", version, about = "Physics-aware POD for sparse-view gamma emission sinograms")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// View count: total views for `forward`/`truth`, sampled views for
    /// `papod`/`podi`, comma-separated sweep for `compare`/`converge`.
    #[arg(long, global = true)]
    views: Option<String>,
    /// Number of POD modes (default: equal to the sampled view count).
    #[arg(long, global = true)]
    modes: Option<usize>,
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    #[arg(long, global = true, value_enum, default_value_t = Format::Bin)]
    format: Format,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Bin,
    Png,
}

#[derive(Subcommand)]
enum Command {
    /// Real-time model sinogram of the configured assembly.
    Forward {
        /// Pixel size in mm (default: the configuration's realtime_dx).
        #[arg(long)]
        dx: Option<f64>,
    },
    /// Synthesize the reference sinogram, or check an existing one.
    Truth {
        /// Validate this sinogram instead of synthesizing.
        #[arg(long)]
        check: Option<PathBuf>,
    },
    /// PA-POD reconstruction of a reference from a random view sample.
    Papod {
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        realtime: PathBuf,
    },
    /// PODI reconstruction from a random view sample.
    Podi {
        #[arg(long)]
        truth: PathBuf,
        #[arg(long, value_enum, default_value_t = Scheme::Linear)]
        interp: Scheme,
    },
    /// Filtered backprojection of a sinogram.
    Fbp {
        #[arg(long)]
        input: PathBuf,
    },
    /// Masked relative-error map of one sinogram's reconstruction against another's.
    Metrics {
        #[arg(long)]
        approx: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long, default_value_t = 0.10)]
        threshold: f64,
    },
    /// All methods over repeated random samples.
    Compare,
    /// PA-POD pixel fraction over a sweep of sample sizes.
    Converge,
    /// Singular-value spectrum of a full sinogram.
    Spectrum {
        /// Sinogram to analyse (default: the configured reference).
        #[arg(long)]
        input: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Scheme {
    Linear,
    Rbf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn config(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(k) = common.modes {
        cfg.k_policy = KPolicy::Fixed(k);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn view_list(common: &Common) -> Result<Option<Vec<usize>>> {
    common
        .views
        .as_deref()
        .map(|text| {
            text.split(',')
                .map(|v| {
                    v.trim()
                        .parse()
                        .map_err(|_| Error::Argument(format!("`{v}` is not a view count")))
                })
                .collect()
        })
        .transpose()
}

fn single_view_count(common: &Common, default: usize) -> Result<usize> {
    match view_list(common)?.as_deref() {
        None => Ok(default),
        Some([n]) => Ok(*n),
        Some(_) => Err(Error::Argument("expected a single view count".into())),
    }
}

fn read_sinogram(path: &Path) -> Result<Sinogram> {
    let s = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        io::import_csv_sinogram(path, &CsvOptions::default())?
    } else {
        io::load(path)?
    };
    if s.normalized {
        Ok(s)
    } else {
        s.normalize()
    }
}

fn emit<A: Artifact>(common: &Common, name: &str, artifact: &A, provenance: &str) -> Result<PathBuf> {
    let dir = &common.out_dir;
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.clone(),
        source: e,
    })?;
    let base = dir.join(name);
    let path = match common.format {
        Format::Bin => {
            io::save(artifact, &base, provenance)?;
            base.with_extension("bin")
        }
        Format::Csv => {
            let p = base.with_extension("csv");
            io::write_csv(artifact.matrix(), &p)?;
            p
        }
        Format::Png => {
            let p = base.with_extension("png");
            io::write_png(artifact.matrix(), A::KIND, &p, provenance)?;
            p
        }
    };
    log::info!("wrote {}", path.display());
    Ok(path)
}

fn run(cli: &Cli) -> Result<()> {
    let common = &cli.common;
    let cfg = config(common)?;
    match &cli.command {
        Command::Forward { dx } => {
            let spec = cfg.assembly_spec()?;
            let grid = GridSpec::for_assembly(&spec, dx.unwrap_or(cfg.realtime_dx))?;
            let angles = Sinogram::uniform_angles(single_view_count(common, 360)?);
            let s = RealTimeModel::new(&spec, &grid, &DetectorArray::default())?
                .sinogram(&angles)?
                .normalize()?;
            emit(common, "realtime", &s, &format!("real-time dx {} mm", grid.dx))?;
        }
        Command::Truth { check } => match check {
            Some(path) => {
                let s = read_sinogram(path)?;
                let rows = DetectorArray::default().n_rows();
                if s.n_rows() != rows {
                    return Err(Error::Shape(format!("{} rows, expected {rows}", s.n_rows())));
                }
                println!("{} rows × {} views, range [{}, {}]", s.n_rows(), s.n_views(), s.values.min(), s.values.max());
            }
            None => {
                let GroundTruthSource::Synthetic(mut fidelity) = cfg.ground_truth.clone() else {
                    return Err(Error::Config("`truth` synthesizes only from a synthetic source".into()));
                };
                fidelity.views = single_view_count(common, fidelity.views)?;
                let spec = cfg.assembly_spec()?;
                let s = synthesize_ground_truth(&spec, &DetectorArray::default(), &fidelity, cfg.seed)?;
                emit(common, "truth", &s, &format!("synthetic {fidelity:?} seed {}", cfg.seed))?;
            }
        },
        Command::Papod { truth, realtime } => {
            let truth = read_sinogram(truth)?;
            let realtime = read_sinogram(realtime)?;
            let db = rom::sample_views(&truth, single_view_count(common, 60)?, cfg.seed)?;
            let k = common.modes.unwrap_or(db.n_samples()).min(db.n_samples());
            let basis = rom::build_basis(&db, k)?;
            let coeffs = rom::papod_coefficients(&basis, &realtime, &db)?;
            let provenance = format!("seed {} n_s {} k {}", cfg.seed, db.n_samples(), basis.k);
            emit(common, "basis", &basis, &provenance)?;
            emit(common, "coefficients", &coeffs, &provenance)?;
            emit(common, "papod", &rom::reconstruct(&basis, &coeffs)?, &provenance)?;
        }
        Command::Podi { truth, interp } => {
            let truth = read_sinogram(truth)?;
            let db = rom::sample_views(&truth, single_view_count(common, 60)?, cfg.seed)?;
            let k = common.modes.unwrap_or(db.n_samples()).min(db.n_samples());
            let basis = rom::build_basis(&db, k)?;
            let scheme = match interp {
                Scheme::Linear => Interpolator::Linear,
                Scheme::Rbf => Interpolator::Rbf,
            };
            let coeffs = rom::podi_coefficients(&basis, &db, &truth.angles, scheme)?;
            let provenance = format!("seed {} n_s {} k {}", cfg.seed, db.n_samples(), basis.k);
            emit(common, "podi", &rom::reconstruct(&basis, &coeffs)?, &provenance)?;
        }
        Command::Fbp { input } => {
            let img = recon::fbp(&read_sinogram(input)?)?;
            emit(common, "image", &img, &input.display().to_string())?;
        }
        Command::Metrics {
            approx,
            truth,
            threshold,
        } => {
            let a: ReconImage = recon::fbp(&read_sinogram(approx)?)?;
            let t = recon::fbp(&read_sinogram(truth)?)?;
            let report = recon::error_map(&a, &t)?;
            println!("pixel fraction at {threshold}: {:.4}", recon::pixel_fraction(&report, *threshold)?);
            emit(common, "error_map", &report, &format!("{} vs {}", approx.display(), truth.display()))?;
            write_curve(&common.out_dir.join("curve.csv"), &report.curve)?;
        }
        Command::Compare => {
            let mut cfg = cfg;
            if let Some(v) = view_list(common)? {
                cfg.n_s_values = v;
            }
            let exp = Experiment::prepare(&cfg)?;
            let result = bench::run_comparison(&exp)?;
            let dir = &common.out_dir;
            std::fs::create_dir_all(dir).map_err(|e| Error::Io {
                path: dir.clone(),
                source: e,
            })?;
            bench::write_trials(&result.trials, dir.join("trials.csv"))?;
            for (m, report) in &result.median {
                let name = format!("median_{}", m.name());
                emit(common, &name, report, &cfg.digest())?;
                write_curve(&dir.join(format!("{name}_curve.csv")), &report.curve)?;
            }
            write_summary(dir, &bench::summary_text(&cfg, &result.trials))?;
        }
        Command::Converge => {
            let mut cfg = cfg;
            cfg.n_s_values = view_list(common)?.unwrap_or_else(bench::default_sweep);
            let exp = Experiment::prepare(&cfg)?;
            let results = bench::run_convergence(&exp)?;
            let dir = &common.out_dir;
            std::fs::create_dir_all(dir).map_err(|e| Error::Io {
                path: dir.clone(),
                source: e,
            })?;
            bench::write_trials(&results, dir.join("convergence_trials.csv"))?;
            bench::write_convergence(&bench::summarize(&results, Method::PaPod), dir.join("convergence.csv"))?;
            write_summary(dir, &bench::summary_text(&cfg, &results))?;
        }
        Command::Spectrum { input } => {
            let s = match input {
                Some(p) => read_sinogram(p)?,
                None => Experiment::prepare(&cfg)?.truth,
            };
            let report = bench::run_spectrum(&s)?;
            std::fs::create_dir_all(&common.out_dir).map_err(|e| Error::Io {
                path: common.out_dir.clone(),
                source: e,
            })?;
            bench::write_spectrum(&report, common.out_dir.join("spectrum.csv"))?;
            println!(
                "modes for 80/90/95 % information variance: {}/{}/{}",
                report.modes_80, report.modes_90, report.modes_95
            );
        }
    }
    Ok(())
}

fn write_curve(path: &Path, curve: &[(f64, f64)]) -> Result<()> {
    let mut text = String::from("threshold,fraction\n");
    for (t, f) in curve {
        text.push_str(&format!("{t},{f:.16e}\n"));
    }
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.into(),
        source: e,
    })
}

fn write_summary(dir: &Path, text: &str) -> Result<()> {
    print!("{text}");
    let path = dir.join("summary.txt");
    std::fs::write(&path, text).map_err(|e| Error::Io { path, source: e })
}
