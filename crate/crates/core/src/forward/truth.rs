//! Synthetic stand-in for a measured sinogram: the same physics on a finer
//! mesh with subdivided detector faces, plus the effects a measurement has
//! and the real-time model ignores: a broad scattered component, detector
//! crosstalk, per-detector efficiency spread and counting noise.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use super::{DetectorArray, RealTimeModel, Sinogram};
use crate::error::{Error, Result};
use crate::geometry::{AssemblySpec, GridSpec};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Fidelity {
    /// Pixel size of the fine mesh, mm.
    pub dx: f64,
    /// Strips per detector face, each traced separately.
    pub face_subsamples: usize,
    /// Expected counts at the normalized maximum.
    pub count_scale: f64,
    pub poisson: bool,
    /// Gaussian blur across detector rows, standard deviation in rows.
    pub blur_rows: Option<f64>,
    /// Amplitude of the scattered component relative to the primary flux.
    pub scatter_fraction: f64,
    /// Width of the scatter kernel across rows, standard deviation in rows.
    pub scatter_width_rows: f64,
    /// Relative standard deviation of per-row detector efficiency.
    pub gain_spread: f64,
    pub views: usize,
}

impl Default for Fidelity {
    fn default() -> Self {
        Fidelity {
            dx: 0.25,
            face_subsamples: 2,
            count_scale: 1e3,
            poisson: true,
            blur_rows: Some(0.5),
            scatter_fraction: 0.2,
            scatter_width_rows: 15.0,
            gain_spread: 0.08,
            views: 360,
        }
    }
}

impl Fidelity {
    /// No refinement at all: reproduces the real-time model at `dx`.
    pub fn exact(dx: f64) -> Self {
        Fidelity {
            dx,
            face_subsamples: 1,
            count_scale: 1.0,
            poisson: false,
            blur_rows: None,
            scatter_fraction: 0.0,
            scatter_width_rows: 15.0,
            gain_spread: 0.0,
            views: 360,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.count_scale > 0.0) {
            return Err(Error::Config("count_scale must be positive".into()));
        }
        if !(self.dx > 0.0) || self.face_subsamples == 0 || self.views == 0 {
            return Err(Error::Config(
                "fidelity needs positive dx, face_subsamples and views".into(),
            ));
        }
        if self.blur_rows.is_some_and(|s| !(s >= 0.0)) {
            return Err(Error::Config("blur_rows must be non-negative".into()));
        }
        if !(self.scatter_fraction >= 0.0) || !(self.scatter_width_rows > 0.0) {
            return Err(Error::Config("scatter needs a non-negative fraction and a positive width".into()));
        }
        if !(self.gain_spread >= 0.0) || self.gain_spread >= 0.3 {
            return Err(Error::Config("gain_spread must lie in [0, 0.3)".into()));
        }
        Ok(())
    }
}

/// Deterministic (for a fixed seed) min-max normalized ground-truth
/// sinogram over `fidelity.views` equally spaced views.
///
/// The primary flux is normalized, the scattered component (a wide row
/// blur of the primary) is added, then crosstalk blur, row gains and
/// Poisson counts are applied in that order, and the result is normalized
/// again. Gains and counts draw from one stream seeded by `seed`.
pub fn synthesize_ground_truth(
    spec: &AssemblySpec,
    array: &DetectorArray,
    fidelity: &Fidelity,
    seed: u64,
) -> Result<Sinogram> {
    fidelity.validate()?;
    let grid = GridSpec::for_assembly(spec, fidelity.dx)?;
    let model = RealTimeModel::with_subsamples(spec, &grid, array, fidelity.face_subsamples)?;
    let mut s = model
        .sinogram(&Sinogram::uniform_angles(fidelity.views))?
        .normalize()?;
    if fidelity.scatter_fraction > 0.0 {
        s.values += blur_rows(&s.values, fidelity.scatter_width_rows) * fidelity.scatter_fraction;
    }
    if let Some(sigma) = fidelity.blur_rows.filter(|&s| s > 0.0) {
        s.values = blur_rows(&s.values, sigma);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if fidelity.gain_spread > 0.0 {
        let dist = Normal::new(1.0, fidelity.gain_spread)
            .map_err(|e| Error::Config(format!("gain spread: {e}")))?;
        for mut row in s.values.row_iter_mut() {
            row *= dist.sample(&mut rng).max(0.0);
        }
    }
    if fidelity.poisson {
        s.values = apply_poisson(&s.values, fidelity.count_scale, &mut rng)?;
    }
    s.normalize()
}

/// Gaussian smoothing of every column across rows; the kernel is truncated
/// at 4σ and renormalized where it runs off the array.
pub fn blur_rows(values: &DMatrix<f64>, sigma: f64) -> DMatrix<f64> {
    let reach = (4.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-reach..=reach)
        .map(|k| (-(k as f64).powi(2) / (2.0 * sigma * sigma)).exp())
        .collect();
    let n = values.nrows() as isize;
    DMatrix::from_fn(values.nrows(), values.ncols(), |i, m| {
        let (mut acc, mut weight) = (0.0, 0.0);
        for (k, w) in (-reach..=reach).zip(&kernel) {
            let j = i as isize + k;
            if (0..n).contains(&j) {
                acc += w * values[(j as usize, m)];
                weight += w;
            }
        }
        acc / weight
    })
}

/// Replaces each entry `v` by `Poisson(scale·v) / scale`.
pub fn apply_poisson(values: &DMatrix<f64>, scale: f64, rng: &mut ChaCha8Rng) -> Result<DMatrix<f64>> {
    if !(scale > 0.0) {
        return Err(Error::Config("count scale must be positive".into()));
    }
    let mut out = values.clone();
    // Column-major traversal fixes the order in which the stream is consumed.
    for v in out.iter_mut() {
        let mean = *v * scale;
        *v = if mean > 0.0 {
            let dist = Poisson::new(mean).map_err(|e| Error::Numerical(format!("poisson: {e}")))?;
            dist.sample(rng) / scale
        } else {
            0.0
        };
    }
    Ok(out)
}
