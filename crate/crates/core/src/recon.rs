//! Ramp-filtered backprojection and the relative-error metrics computed on
//! reconstructed images.

use nalgebra::DMatrix;
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::sinogram::Sinogram;

/// Mask keeps reference pixels above this fraction of the reference maximum.
pub const MASK_FRACTION: f64 = 0.15;

/// Square reconstruction, `pixels[(row, col)]`, row 0 at the top (+y).
#[derive(Clone, Debug, PartialEq)]
pub struct ReconImage {
    pub pixels: DMatrix<f64>,
    /// Side length of a pixel; 1.0 means one detector-row pitch.
    pub pixel_size: f64,
}

impl ReconImage {
    pub fn size(&self) -> usize {
        self.pixels.nrows()
    }
}

/// Frequency response of the band-limited ramp, built from the spatial
/// ramp kernel (1/4 at 0, −1/(πn)² at odd n) and doubled.
fn ramp_response(len: usize) -> Vec<f64> {
    let mut kernel = vec![Complex::new(0.0, 0.0); len];
    kernel[0].re = 0.25;
    for (k, slot) in kernel.iter_mut().enumerate().skip(1) {
        let n = k.min(len - k);
        if n % 2 == 1 {
            slot.re = -1.0 / (std::f64::consts::PI * n as f64).powi(2);
        }
    }
    FftPlanner::new().plan_fft_forward(len).process(&mut kernel);
    kernel.iter().map(|c| 2.0 * c.re).collect()
}

fn padded_length(n: usize) -> usize {
    (2 * n).next_power_of_two().max(64)
}

/// Ramp-filters every view of the sinogram.
pub fn ramp_filter(values: &DMatrix<f64>) -> DMatrix<f64> {
    let n = values.nrows();
    let len = padded_length(n);
    let response = ramp_response(len);
    let mut planner = FftPlanner::new();
    let forward = planner.plan_fft_forward(len);
    let inverse = planner.plan_fft_inverse(len);
    let mut out = DMatrix::zeros(n, values.ncols());
    let mut buf = vec![Complex::new(0.0, 0.0); len];
    for m in 0..values.ncols() {
        buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
        for i in 0..n {
            buf[i].re = values[(i, m)];
        }
        forward.process(&mut buf);
        for (c, h) in buf.iter_mut().zip(&response) {
            *c *= *h;
        }
        inverse.process(&mut buf);
        for i in 0..n {
            out[(i, m)] = buf[i].re / len as f64;
        }
    }
    out
}

fn is_full_circle(angles: &[f64]) -> bool {
    let uniform = Sinogram::uniform_angles(angles.len());
    angles.len() >= 2 && angles.iter().zip(&uniform).all(|(a, b)| (a - b).abs() < 1e-9)
}

/// Filtered backprojection onto an N × N image, N the detector-row count.
///
/// Detector row `i` sits at lateral offset `i − (N−1)/2`; a point `(x, y)`
/// of the unrotated object projects to `t = x·sin θ + y·cos θ` at view θ.
pub fn fbp(sinogram: &Sinogram) -> Result<ReconImage> {
    let n_views = sinogram.n_views();
    if n_views < 2 {
        return Err(Error::Argument("filtered backprojection needs at least two views".into()));
    }
    if !is_full_circle(&sinogram.angles) {
        log::warn!("backprojecting {n_views} views that do not cover 360° uniformly");
    }
    let n = sinogram.n_rows();
    let filtered = ramp_filter(&sinogram.values);
    let trig: Vec<(f64, f64)> = sinogram
        .angles
        .iter()
        .map(|a| crate::geometry::rotation(*a))
        .collect();
    let center = (n as f64 - 1.0) / 2.0;
    let scale = std::f64::consts::PI / (2.0 * n_views as f64);

    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|r| {
            let y = center - r as f64;
            let mut acc = vec![0.0; n];
            for (m, &(cos, sin)) in trig.iter().enumerate() {
                let column = filtered.column(m);
                for (c, slot) in acc.iter_mut().enumerate() {
                    let x = c as f64 - center;
                    let u = x * sin + y * cos + center;
                    if u < 0.0 || u > (n - 1) as f64 {
                        continue;
                    }
                    let i0 = u.floor() as usize;
                    let w = u - i0 as f64;
                    let v = if i0 + 1 < n {
                        column[i0] * (1.0 - w) + column[i0 + 1] * w
                    } else {
                        column[i0]
                    };
                    *slot += v;
                }
            }
            acc.into_iter().map(|v| v * scale).collect()
        })
        .collect();
    Ok(ReconImage {
        pixels: DMatrix::from_fn(n, n, |r, c| rows[r][c]),
        pixel_size: 1.0,
    })
}

/// Masked pixel-wise relative error of an approximation against a
/// reference reconstruction.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorReport {
    /// `|approx − truth| / truth` inside the mask, NaN outside.
    pub error_map: DMatrix<f64>,
    pub mask: DMatrix<bool>,
    /// `(threshold, pixel fraction)` on the standard threshold grid.
    pub curve: Vec<(f64, f64)>,
}

/// Thresholds 0.00, 0.01, …, 1.00.
pub fn threshold_grid() -> Vec<f64> {
    (0..=100).map(|i| i as f64 / 100.0).collect()
}

/// Pixels of `truth` above 15 % of its maximum.
pub fn reference_mask(truth: &ReconImage) -> Result<DMatrix<bool>> {
    let max = truth.pixels.max();
    if !(max > 0.0) {
        return Err(Error::EmptyMask);
    }
    let cut = MASK_FRACTION * max;
    let mask = truth.pixels.map(|v| v > cut);
    if !mask.iter().any(|&m| m) {
        return Err(Error::EmptyMask);
    }
    Ok(mask)
}

pub fn error_map(approx: &ReconImage, truth: &ReconImage) -> Result<ErrorReport> {
    if approx.pixels.shape() != truth.pixels.shape() {
        return Err(Error::Shape(format!(
            "images are {:?} and {:?}",
            approx.pixels.shape(),
            truth.pixels.shape()
        )));
    }
    let mask = reference_mask(truth)?;
    let error_map = DMatrix::from_fn(truth.size(), truth.size(), |r, c| {
        if mask[(r, c)] {
            let t = truth.pixels[(r, c)];
            ((approx.pixels[(r, c)] - t) / t).abs()
        } else {
            f64::NAN
        }
    });
    Ok(with_curve(error_map, mask))
}

/// Rebuilds a report from a stored map: NaN marks pixels outside the mask.
pub(crate) fn report_from_map(error_map: DMatrix<f64>) -> ErrorReport {
    let mask = error_map.map(|e| !e.is_nan());
    with_curve(error_map, mask)
}

fn with_curve(error_map: DMatrix<f64>, mask: DMatrix<bool>) -> ErrorReport {
    let mut report = ErrorReport {
        error_map,
        mask,
        curve: Vec::new(),
    };
    let mut errors = masked_errors(&report);
    errors.sort_by(f64::total_cmp);
    let total = errors.len() as f64;
    report.curve = threshold_grid()
        .into_iter()
        .map(|t| (t, errors.partition_point(|&e| e <= t) as f64 / total))
        .collect();
    report
}

fn masked_errors(report: &ErrorReport) -> Vec<f64> {
    report
        .error_map
        .iter()
        .zip(report.mask.iter())
        .filter(|(_, &m)| m)
        .map(|(&e, _)| e)
        .collect()
}

/// Fraction of masked pixels whose relative error is at most `threshold`.
pub fn pixel_fraction(report: &ErrorReport, threshold: f64) -> Result<f64> {
    if !(threshold >= 0.0) {
        return Err(Error::Argument(format!("threshold {threshold} must be non-negative")));
    }
    let errors = masked_errors(report);
    if errors.is_empty() {
        return Err(Error::EmptyMask);
    }
    Ok(errors.iter().filter(|&&e| e <= threshold).count() as f64 / errors.len() as f64)
}

/// Per-pixel median over several reports sharing one mask.
pub fn median_error_map(reports: &[ErrorReport]) -> Result<ErrorReport> {
    let first = reports
        .first()
        .ok_or_else(|| Error::Argument("median of zero error reports".into()))?;
    if reports.iter().any(|r| r.mask != first.mask) {
        return Err(Error::Argument("error reports have different masks".into()));
    }
    let (rows, cols) = first.error_map.shape();
    let mut samples = Vec::with_capacity(reports.len());
    let median = DMatrix::from_fn(rows, cols, |r, c| {
        if !first.mask[(r, c)] {
            return f64::NAN;
        }
        samples.clear();
        samples.extend(reports.iter().map(|rep| rep.error_map[(r, c)]));
        samples.sort_by(f64::total_cmp);
        let k = samples.len();
        if k % 2 == 1 {
            samples[k / 2]
        } else {
            0.5 * (samples[k / 2 - 1] + samples[k / 2])
        }
    });
    Ok(with_curve(median, first.mask.clone()))
}
