//! Acceptance suite: one PASS/FAIL/SKIP line per criterion.
//!
//! Criteria 1–3 need the measured PWR sinogram; point `PAPOD_IAEA_SINOGRAM`
//! at a CSV (detector rows × views) or a saved sinogram artifact to run them.
//! Without it they are reported as SKIP and criterion 4 stands in for them.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use papod::bench::{self, Experiment, ExperimentConfig, GroundTruthSource, Method};
use papod::forward::{
    segment_integral, solid_angle_fraction, view_flux, DetectorArray, Fidelity, RealTimeModel, ResponseTables,
    Sinogram,
};
use papod::geometry::{rasterize, AssemblySpec, GridSpec, MaterialMap};
use papod::recon::{self, ReconImage};
use papod::rom::{self, Interpolator};

#[derive(Clone, Copy, PartialEq, Eq)]
enum Status {
    Pass,
    Fail,
    Skip,
}

struct Suite {
    failures: usize,
}

impl Suite {
    fn report(&mut self, id: &str, status: Status, text: &str) {
        let tag = match status {
            Status::Pass => "PASS",
            Status::Fail => {
                self.failures += 1;
                "FAIL"
            }
            Status::Skip => "SKIP",
        };
        println!("{tag} [{id}] {text}");
    }

    fn check(&mut self, id: &str, ok: bool, text: &str) {
        self.report(id, if ok { Status::Pass } else { Status::Fail }, text);
    }
}

fn detail(text: &str) {
    println!("       {text}");
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

fn cache_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance-cache")
}

fn main() {
    // The harness is ours: ignore whatever libtest flags cargo forwards.
    let _ = env_logger::builder().is_test(true).try_init();
    let mut suite = Suite { failures: 0 };
    let started = Instant::now();

    match std::env::var_os("PAPOD_IAEA_SINOGRAM") {
        Some(path) => measured_criteria(&mut suite, PathBuf::from(path)),
        None => {
            for id in ["1", "2", "3"] {
                suite.report(
                    id,
                    Status::Skip,
                    "measured PWR sinogram not available (set PAPOD_IAEA_SINOGRAM); replaced by criterion 4",
                );
            }
        }
    }

    criterion_5(&mut suite);
    criterion_6(&mut suite);
    criterion_7(&mut suite);
    criterion_4(&mut suite);
    criterion_8(&mut suite);
    criterion_9(&mut suite);

    println!("acceptance finished in {:.1} s, {} failing", secs(started.elapsed()), suite.failures);
    if suite.failures > 0 {
        std::process::exit(1);
    }
}

fn measured_criteria(suite: &mut Suite, path: PathBuf) {
    let base = ExperimentConfig {
        ground_truth: GroundTruthSource::File {
            path,
            delimiter: ',',
            header_rows: 0,
        },
        cache_dir: Some(cache_dir()),
        ..ExperimentConfig::default()
    };
    let experiment = match Experiment::prepare(&base) {
        Ok(e) => e,
        Err(e) => {
            for id in ["1", "2", "3"] {
                suite.check(id, false, &format!("cannot load measured sinogram: {e}"));
            }
            return;
        }
    };

    let t = Instant::now();
    let spectrum = bench::run_spectrum(&experiment.truth).expect("spectrum");
    let elapsed = t.elapsed();
    let near = |got: usize, want: usize| got.abs_diff(want) <= 2;
    suite.check(
        "1",
        near(spectrum.modes_80, 8) && near(spectrum.modes_90, 27) && near(spectrum.modes_95, 45) && elapsed.as_secs() < 10,
        &format!(
            "spectrum reaches 80/90/95 % at {}/{}/{} modes (want 8/27/45 ± 2), {:.2} s (< 10 s)",
            spectrum.modes_80,
            spectrum.modes_90,
            spectrum.modes_95,
            secs(elapsed)
        ),
    );

    let t = Instant::now();
    let comparison = bench::run_comparison(&experiment).expect("comparison");
    let elapsed = t.elapsed();
    let papod = recon::pixel_fraction(&comparison.median[&Method::PaPod], 0.10).unwrap();
    let realtime = recon::pixel_fraction(&comparison.median[&Method::RealTime], 0.10).unwrap();
    suite.check(
        "2",
        (0.53..=0.62).contains(&papod) && (0.25..=0.33).contains(&realtime) && elapsed.as_secs() < 1800,
        &format!(
            "median-map 10 % fraction: PA-POD {papod:.3} (want [0.53, 0.62]), real-time {realtime:.3} (want [0.25, 0.33]), {:.0} s",
            secs(elapsed)
        ),
    );

    let mut long = experiment;
    long.config.trials = 1000;
    long.config.n_s_values = vec![60];
    let results = bench::run_convergence(&long).expect("convergence");
    let p = &bench::summarize(&results, Method::PaPod)[0];
    suite.check(
        "3",
        (0.51..=0.58).contains(&p.mean) && p.std <= 0.03,
        &format!("n_s = 60 over 1000 trials: mean {:.4} (want [0.51, 0.58]), std {:.4} (≤ 0.03)", p.mean, p.std),
    );
}

/// Uniform directions inside the cone around `axis` with half-angle
/// `alpha`; returns the fraction of the full sphere hitting the face.
fn monte_carlo_fraction(point: [f64; 3], y: (f64, f64), z: (f64, f64), x_plane: f64, rays: usize, seed: u64) -> f64 {
    let center = [x_plane - point[0], (y.0 + y.1) / 2.0 - point[1], (z.0 + z.1) / 2.0 - point[2]];
    let norm = |v: [f64; 3]| (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    let unit = |v: [f64; 3]| {
        let n = norm(v);
        [v[0] / n, v[1] / n, v[2] / n]
    };
    let axis = unit(center);
    let mut alpha: f64 = 0.0;
    for yy in [y.0, y.1] {
        for zz in [z.0, z.1] {
            let c = unit([x_plane - point[0], yy - point[1], zz - point[2]]);
            let dot = (c[0] * axis[0] + c[1] * axis[1] + c[2] * axis[2]).clamp(-1.0, 1.0);
            alpha = alpha.max(dot.acos());
        }
    }
    alpha *= 1.05;
    // Orthonormal frame around the axis.
    let helper = if axis[2].abs() < 0.9 { [0.0, 0.0, 1.0] } else { [1.0, 0.0, 0.0] };
    let cross = |a: [f64; 3], b: [f64; 3]| [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]];
    let e1 = unit(cross(axis, helper));
    let e2 = cross(axis, e1);
    let one_minus_cos = 2.0 * (alpha / 2.0).sin().powi(2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = 0usize;
    for _ in 0..rays {
        let u: f64 = rng.random();
        let phi = 2.0 * std::f64::consts::PI * rng.random::<f64>();
        let omc = u * one_minus_cos;
        let cos_t = 1.0 - omc;
        let sin_t = (omc * (2.0 - omc)).sqrt();
        let (s, c) = phi.sin_cos();
        let d = [
            cos_t * axis[0] + sin_t * (c * e1[0] + s * e2[0]),
            cos_t * axis[1] + sin_t * (c * e1[1] + s * e2[1]),
            cos_t * axis[2] + sin_t * (c * e1[2] + s * e2[2]),
        ];
        if d[0] <= 0.0 {
            continue;
        }
        let t = (x_plane - point[0]) / d[0];
        let (hy, hz) = (point[1] + t * d[1], point[2] + t * d[2]);
        if hy >= y.0 && hy <= y.1 && hz >= z.0 && hz <= z.1 {
            hits += 1;
        }
    }
    one_minus_cos / 2.0 * hits as f64 / rays as f64
}

/// Midpoint-rule integral of the pixel map along a segment.
fn dense_quadrature(map: &MaterialMap, a: (f64, f64), b: (f64, f64), samples: usize) -> f64 {
    let grid = &map.grid;
    let n = grid.n_xy() as isize;
    let half = grid.covered_half_width();
    let len = (b.0 - a.0).hypot(b.1 - a.1);
    let h = 1.0 / samples as f64;
    let mut sum = 0.0;
    for s in 0..samples {
        let t = (s as f64 + 0.5) * h;
        let (x, y) = (a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1));
        let ix = ((x + half) / grid.dx).floor() as isize;
        let iy = ((y + half) / grid.dx).floor() as isize;
        if (0..n).contains(&ix) && (0..n).contains(&iy) {
            sum += map.mu[(iy * n + ix) as usize];
        }
    }
    sum * h * len
}

fn criterion_5(suite: &mut Suite) {
    let t = Instant::now();
    let array = DetectorArray::default();
    let rows = array.row_positions();
    let mut rng = ChaCha8Rng::seed_from_u64(5);

    // Solid angle against Monte Carlo ray casting.
    let mut worst_sa: f64 = 0.0;
    for case in 0..5 {
        let point = [rng.random_range(-60.0..60.0), rng.random_range(-60.0..60.0), rng.random_range(-40.0..40.0)];
        let det = rng.random_range(0..rows.len());
        let exact = solid_angle_fraction(point, det, &array).unwrap();
        let y = (rows[det] - array.face_width / 2.0, rows[det] + array.face_width / 2.0);
        let z = (-array.face_height / 2.0, array.face_height / 2.0);
        let mc = monte_carlo_fraction(point, y, z, array.standoff_radius, 1_000_000, 100 + case);
        worst_sa = worst_sa.max((mc - exact).abs() / exact);
    }
    detail(&format!("solid angle vs 10^6-ray Monte Carlo: worst relative error {worst_sa:.2e} (≤ 5e-3)"));

    // Line integrals against dense quadrature on the rasterized assembly.
    let spec = AssemblySpec::pwr_10x10_3x3gap();
    let grid = GridSpec::for_assembly(&spec, 0.5).unwrap();
    let map = rasterize(&spec, &grid, 17.0).unwrap();
    let mut worst_li: f64 = 0.0;
    for _ in 0..50 {
        let a = (rng.random_range(-80.0..80.0), rng.random_range(-80.0..80.0));
        let b = if rng.random::<bool>() {
            (300.0, rng.random_range(-180.0..180.0))
        } else {
            (rng.random_range(-80.0..80.0), rng.random_range(-80.0..80.0))
        };
        let exact = segment_integral(&map, a, b);
        let dense = dense_quadrature(&map, a, b, 1_000_000);
        worst_li = worst_li.max((exact - dense).abs() / dense.abs().max(1e-12));
    }
    detail(&format!("line integrals vs 10^6-point quadrature on 50 segments: worst relative error {worst_li:.2e} (≤ 1e-4)"));

    // Uniform medium closed form.
    let ugrid = GridSpec::new(0.5, 100.0, 10.0, 50.0).unwrap();
    let mu0 = 0.1356;
    let uniform = MaterialMap::uniform(ugrid, 1.0, mu0);
    let mut worst_u: f64 = 0.0;
    for _ in 0..200 {
        let a: (f64, f64) = (rng.random_range(-99.0..99.0), rng.random_range(-99.0..99.0));
        let b: (f64, f64) = (rng.random_range(-99.0..99.0), rng.random_range(-99.0..99.0));
        let want = mu0 * (b.0 - a.0).hypot(b.1 - a.1);
        worst_u = worst_u.max((segment_integral(&uniform, a, b) - want).abs() / want);
    }
    detail(&format!("uniform medium closed form: worst relative error {worst_u:.2e} (≤ 1e-10)"));

    // Flux linearity in emission and monotonicity in attenuation.
    let small = AssemblySpec::full_lattice(4, 4, 12.6, 4.75);
    let sgrid = GridSpec::for_assembly(&small, 1.0).unwrap();
    let tables = ResponseTables::build(&sgrid, &array).unwrap();
    let base = rasterize(&small, &sgrid, 33.0).unwrap();
    let mut l1 = base.clone();
    let mut l2 = base.clone();
    for p in 0..sgrid.n_pix() {
        l1.lambda[p] = rng.random_range(0.0..100.0);
        l2.lambda[p] = rng.random_range(0.0..100.0);
    }
    let mut combo = base.clone();
    let (alpha, beta) = (2.0, 0.5);
    for p in 0..sgrid.n_pix() {
        combo.lambda[p] = alpha * l1.lambda[p] + beta * l2.lambda[p];
    }
    let (f1, f2, fc) = (
        view_flux(&l1, &tables, &array).unwrap(),
        view_flux(&l2, &tables, &array).unwrap(),
        view_flux(&combo, &tables, &array).unwrap(),
    );
    let lin_err = f1
        .iter()
        .zip(&f2)
        .zip(&fc)
        .map(|((a, b), c)| (alpha * a + beta * b - c).abs() / c.abs().max(1e-300))
        .fold(0.0, f64::max);
    let mut doubled = l1.clone();
    doubled.lambda.iter_mut().for_each(|v| *v *= 2.0);
    let exact_double = view_flux(&doubled, &tables, &array)
        .unwrap()
        .iter()
        .zip(&f1)
        .all(|(d, f)| *d == 2.0 * f);
    let mut monotone = true;
    let mut denser = base.clone();
    let before = view_flux(&denser, &tables, &array).unwrap();
    for _ in 0..5 {
        for _ in 0..200 {
            let p = rng.random_range(0..sgrid.n_pix());
            denser.mu[p] += rng.random_range(0.0..0.2);
        }
        let after = view_flux(&denser, &tables, &array).unwrap();
        monotone &= after.iter().zip(&before).all(|(a, b)| a <= b);
    }
    detail(&format!(
        "flux linearity: relative error {lin_err:.1e} (round-off), doubling exact: {exact_double}; μ-monotone: {monotone}"
    ));

    let elapsed = t.elapsed();
    suite.check(
        "5",
        worst_sa <= 5e-3 && worst_li <= 1e-4 && worst_u <= 1e-10 && lin_err <= 1e-12 && exact_double && monotone && elapsed.as_secs() < 60,
        &format!("forward-model oracles, {:.1} s (< 60 s)", secs(elapsed)),
    );
}

fn criterion_6(suite: &mut Suite) {
    // A real-time sinogram stands in for data here; the invariants are
    // properties of the algebra, not of the data.
    let spec = AssemblySpec::pwr_10x10_3x3gap();
    let grid = GridSpec::for_assembly(&spec, 1.0).unwrap();
    let array = DetectorArray::default();
    let sino = RealTimeModel::new(&spec, &grid, &array)
        .unwrap()
        .sinogram(&Sinogram::uniform_angles(360))
        .unwrap()
        .normalize()
        .unwrap();
    let t = Instant::now();
    let db = rom::sample_views(&sino, 60, 42).unwrap();
    let basis = rom::build_basis(&db, 60).unwrap();

    let gram = basis.modes.tr_mul(&basis.modes);
    let ortho = (gram - DMatrix::identity(basis.k, basis.k)).amax();
    detail(&format!("orthonormality max|UᵀU − I| = {ortho:.1e} (< 1e-10) with k = {}", basis.k));

    let coeffs = rom::sampled_coefficients(&basis, &db).unwrap();
    let rebuilt = rom::reconstruct(&basis, &coeffs).unwrap();
    let identity = (&rebuilt.values - &db.matrix).norm() / db.matrix.norm();
    detail(&format!("complete-basis reconstruction relative error {identity:.1e} (< 1e-8)"));

    // Eckart–Young: the truncation error equals the discarded eigenvalue
    // mass of the Gram matrix, computed by a separate symmetric solver.
    let mut eig = db.matrix.tr_mul(&db.matrix).symmetric_eigenvalues().as_slice().to_vec();
    eig.sort_by(|a, b| b.total_cmp(a));
    let total: f64 = eig.iter().sum();
    let mut ey_worst: f64 = 0.0;
    let mut ey_optimal = true;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for k in [1, 5, 10, 20, 40] {
        let bk = rom::build_basis(&db, k).unwrap();
        let resid = &db.matrix - &bk.modes * bk.modes.tr_mul(&db.matrix);
        let err2 = resid.norm_squared();
        let tail: f64 = eig[k..].iter().map(|v| v.max(0.0)).sum();
        ey_worst = ey_worst.max((err2 - tail).abs() / total);
        // Any other k-dimensional subspace does at least as badly.
        let random = DMatrix::from_fn(db.matrix.nrows(), k, |_, _| rng.random::<f64>() - 0.5).qr().q();
        let other = (&db.matrix - &random * random.tr_mul(&db.matrix)).norm_squared();
        ey_optimal &= other >= err2;
    }
    detail(&format!(
        "Eckart–Young: |‖Ŝ − U_kU_kᵀŜ‖² − Σ_(j≥k) λ_j| / Σλ ≤ {ey_worst:.1e} (< 1e-10); beats random subspaces: {ey_optimal}"
    ));

    let podi = rom::podi_coefficients(&basis, &db, &db.sampled_angles, Interpolator::Linear).unwrap();
    let knots_exact = podi.values == coeffs.values;
    detail(&format!("PODI linear reproduces knot coefficients bit-for-bit: {knots_exact}"));

    let a = rom::papod_coefficients(&basis, &sino, &db).unwrap();
    let scaled = Sinogram::new(&sino.values * 37.5, sino.angles.clone()).unwrap();
    let b = rom::papod_coefficients(&basis, &scaled, &db).unwrap();
    let scale_err = (&a.values - &b.values).amax() / a.values.amax();
    detail(&format!("PA-POD scale invariance (R → 37.5·R): max deviation {scale_err:.1e} (< 1e-10)"));

    let elapsed = t.elapsed();
    suite.check(
        "6",
        ortho < 1e-10 && identity < 1e-8 && ey_worst < 1e-10 && ey_optimal && knots_exact && scale_err < 1e-10 && elapsed.as_secs() < 60,
        &format!("ROM invariants, {:.1} s (< 60 s)", secs(elapsed)),
    );
}

fn disk_sinogram(n: usize, views: usize, radius: f64, x0: f64, y0: f64) -> Sinogram {
    let center = (n as f64 - 1.0) / 2.0;
    let angles = Sinogram::uniform_angles(views);
    let values = DMatrix::from_fn(n, views, |i, m| {
        let (s, c) = angles[m].to_radians().sin_cos();
        let t = i as f64 - center - (x0 * s + y0 * c);
        if t.abs() < radius {
            2.0 * (radius * radius - t * t).sqrt()
        } else {
            0.0
        }
    });
    Sinogram::new(values, angles).unwrap()
}

fn argmax(img: &ReconImage) -> (usize, usize) {
    let mut best = (0, 0);
    for r in 0..img.size() {
        for c in 0..img.size() {
            if img.pixels[(r, c)] > img.pixels[best] {
                best = (r, c);
            }
        }
    }
    best
}

fn criterion_7(suite: &mut Suite) {
    let t = Instant::now();
    let n = 182;
    let mut impulse = DMatrix::zeros(n, 360);
    impulse.row_mut(n / 2).fill(1.0);
    let img = recon::fbp(&Sinogram::new(impulse, Sinogram::uniform_angles(360)).unwrap()).unwrap();
    let (r, c) = argmax(&img);
    let center = (n as f64 - 1.0) / 2.0;
    let offset = (r as f64 - center).abs().max((c as f64 - center).abs());
    detail(&format!("impulse peak at ({r}, {c}), {offset:.1} pixels from the rotation center (≤ 1)"));

    let (radius, x0, y0) = (30.0, 12.0, -7.0);
    let disk = recon::fbp(&disk_sinogram(n, 360, radius, x0, y0)).unwrap();
    let (mut sum, mut count) = (0.0, 0usize);
    for r in 0..n {
        for c in 0..n {
            let (x, y) = (c as f64 - center, center - r as f64);
            if (x - x0).hypot(y - y0) < 0.8 * radius {
                sum += (disk.pixels[(r, c)] - 1.0).abs();
                count += 1;
            }
        }
    }
    let disk_err = sum / count as f64;
    detail(&format!("analytic disk phantom: mean interior error {:.2} % (< 5 %)", 100.0 * disk_err));

    let a = disk_sinogram(n, 360, 20.0, -15.0, 10.0);
    let b = disk_sinogram(n, 360, 8.0, 30.0, 25.0);
    let combo = Sinogram::new(&a.values * 1.7 - &b.values * 0.3, a.angles.clone()).unwrap();
    let lhs = recon::fbp(&combo).unwrap().pixels;
    let rhs = recon::fbp(&a).unwrap().pixels * 1.7 - recon::fbp(&b).unwrap().pixels * 0.3;
    let lin = (&lhs - &rhs).norm() / rhs.norm();
    detail(&format!("linearity relative error {lin:.1e} (< 1e-8)"));

    let elapsed = t.elapsed();
    suite.check(
        "7",
        offset <= 1.0 && disk_err < 0.05 && lin < 1e-8 && elapsed.as_secs() < 60,
        &format!("FBP oracles, {:.1} s (< 60 s)", secs(elapsed)),
    );
}

fn criterion_4(suite: &mut Suite) {
    let t = Instant::now();
    let config = ExperimentConfig {
        seed: 42,
        trials: 100,
        n_s_values: vec![60],
        cache_dir: Some(cache_dir()),
        ..ExperimentConfig::default()
    };
    let experiment = Experiment::prepare(&config).expect("synthetic experiment");
    detail(&format!("synthetic reference and real-time sinograms ready after {:.0} s", secs(t.elapsed())));

    let realtime = recon::pixel_fraction(&experiment.realtime_report, 0.10).unwrap();
    suite.check(
        "4-cal",
        (0.2..=0.5).contains(&realtime),
        &format!("real-time 10 % fraction on the synthetic reference {realtime:.3} (calibration target [0.2, 0.5])"),
    );

    let comparison = bench::run_comparison(&experiment).expect("comparison");
    let trials = &comparison.trials;
    let fr = |t: &bench::TrialResult, m| t.fraction(m).unwrap();
    let gap_wins = trials
        .iter()
        .filter(|t| fr(t, Method::PaPod) - fr(t, Method::RealTime) >= 0.10)
        .count();
    let baseline_wins = trials
        .iter()
        .filter(|t| {
            let p = fr(t, Method::PaPod);
            p > fr(t, Method::PodiLinear) && p > fr(t, Method::PodiRbf) && p > fr(t, Method::DataLinear)
        })
        .count();
    for m in Method::ALL {
        let pts = bench::summarize(trials, m);
        let median = recon::pixel_fraction(&comparison.median[&m], 0.10).unwrap();
        detail(&format!(
            "{:<12} mean {:.3} std {:.3}, median-map fraction {:.3}",
            m.name(),
            pts[0].mean,
            pts[0].std,
            median
        ));
    }
    suite.check(
        "4a",
        gap_wins >= 95,
        &format!("PA-POD beats real-time by ≥ 0.10 in {gap_wins}/100 trials (≥ 95) at n_s = 60"),
    );
    suite.check(
        "4b",
        baseline_wins >= 95,
        &format!("PA-POD beats PODI-linear, PODI-rbf and data-linear in {baseline_wins}/100 trials (≥ 95)"),
    );

    let mut sweep = experiment;
    sweep.config.n_s_values = bench::default_sweep();
    let results = bench::run_convergence(&sweep).expect("convergence");
    let points = bench::summarize(&results, Method::PaPod);
    let worst = points.iter().map(|p| p.std).fold(0.0, f64::max);
    for p in &points {
        detail(&format!("n_s {:>3}: mean {:.4} std {:.4}", p.n_s, p.mean, p.std));
    }
    suite.check(
        "4c",
        worst <= 0.03,
        &format!(
            "convergence sweep n_s = 30..120, 100 trials each: largest std {worst:.4} (≤ 0.03); {:.0} s total",
            secs(t.elapsed())
        ),
    );
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("thread pool")
        .install(f)
}

fn criterion_8(suite: &mut Suite) {
    let spec = AssemblySpec::pwr_10x10_3x3gap();
    let array = DetectorArray::default();
    let fidelity = Fidelity {
        dx: 1.0,
        face_subsamples: 2,
        ..Fidelity::default()
    };
    let run = || {
        let grid = GridSpec::for_assembly(&spec, 2.5).unwrap();
        let realtime = RealTimeModel::new(&spec, &grid, &array)
            .unwrap()
            .sinogram(&Sinogram::uniform_angles(360))
            .unwrap()
            .normalize()
            .unwrap();
        let truth = papod::forward::synthesize_ground_truth(&spec, &array, &fidelity, 42).unwrap();
        let config = ExperimentConfig {
            trials: 6,
            n_s_values: vec![40],
            ..ExperimentConfig::default()
        };
        let exp = Experiment::from_sinograms(&config, truth.clone(), realtime.clone()).unwrap();
        let comparison = bench::run_comparison(&exp).unwrap();
        let image = exp.truth_image.pixels.clone();
        let medians: Vec<_> = comparison.median.values().map(|r| r.error_map.clone()).collect();
        (realtime, truth, image, comparison.trials, medians)
    };
    let bits = |m: &DMatrix<f64>| m.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    let same = |a: &(Sinogram, Sinogram, DMatrix<f64>, Vec<bench::TrialResult>, Vec<DMatrix<f64>>),
                b: &(Sinogram, Sinogram, DMatrix<f64>, Vec<bench::TrialResult>, Vec<DMatrix<f64>>)| {
        bits(&a.0.values) == bits(&b.0.values)
            && bits(&a.1.values) == bits(&b.1.values)
            && bits(&a.2) == bits(&b.2)
            && a.3 == b.3
            && a.4.iter().zip(&b.4).all(|(x, y)| bits(x) == bits(y))
    };
    let t = Instant::now();
    let one = in_pool(1, run);
    let again = in_pool(1, run);
    let four = in_pool(4, run);
    let ok = same(&one, &again) && same(&one, &four);
    suite.check(
        "8",
        ok,
        &format!(
            "forward, synthesis, sampling, POD, all methods, FBP and median maps bit-identical across runs and 1/4 threads ({:.0} s)",
            secs(t.elapsed())
        ),
    );
}

fn criterion_9(suite: &mut Suite) {
    let spec = AssemblySpec::pwr_10x10_3x3gap();
    let grid = GridSpec::for_assembly(&spec, 0.5).unwrap();
    let array = DetectorArray::default();
    let angles = Sinogram::uniform_angles(360);
    let timed = |threads: Option<usize>| {
        let work = || {
            let t = Instant::now();
            let s = RealTimeModel::new(&spec, &grid, &array).unwrap().sinogram(&angles).unwrap();
            (t.elapsed(), s.values.shape())
        };
        match threads {
            Some(n) => in_pool(n, work),
            None => work(),
        }
    };
    let (single, shape) = timed(Some(1));
    let (parallel, _) = timed(None);
    suite.check(
        "9",
        shape == (182, 360) && single.as_secs() < 600 && parallel.as_secs() < 120,
        &format!(
            "182 × 360 real-time sinogram at dx = 0.5 mm: {:.1} s on 1 thread (< 600 s), {:.1} s on {} threads (< 120 s)",
            secs(single),
            secs(parallel),
            rayon::current_num_threads()
        ),
    );
}
