use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Detector rows × angular views. Column `m` was recorded at `angles[m]`
/// degrees.
#[derive(Clone, Debug, PartialEq)]
pub struct Sinogram {
    pub values: DMatrix<f64>,
    pub angles: Vec<f64>,
    pub normalized: bool,
}

impl Sinogram {
    pub fn new(values: DMatrix<f64>, angles: Vec<f64>) -> Result<Self> {
        check_angles(&angles, values.ncols())?;
        Ok(Sinogram {
            values,
            angles,
            normalized: false,
        })
    }

    /// `n` equally spaced views starting at 0°; `n = 360` gives 1° steps.
    pub fn uniform_angles(n: usize) -> Vec<f64> {
        (0..n).map(|m| m as f64 * 360.0 / n as f64).collect()
    }

    pub fn n_rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_views(&self) -> usize {
        self.values.ncols()
    }

    /// Global min-max rescaling onto [0, 1].
    pub fn normalize(&self) -> Result<Sinogram> {
        let min = self.values.min();
        let max = self.values.max();
        if !(max > min) || !min.is_finite() || !max.is_finite() {
            return Err(Error::Numerical(format!(
                "cannot min-max normalize a sinogram with range [{min}, {max}]"
            )));
        }
        let scale = max - min;
        Ok(Sinogram {
            values: self.values.map(|v| ((v - min) / scale).clamp(0.0, 1.0)),
            angles: self.angles.clone(),
            normalized: true,
        })
    }

    /// Index of the column recorded at `angle`, if any.
    pub fn column_of(&self, angle: f64) -> Option<usize> {
        self.angles
            .iter()
            .position(|&a| (a - angle).abs() < 1e-9)
    }
}

pub(crate) fn check_angles(angles: &[f64], n_cols: usize) -> Result<()> {
    if angles.len() != n_cols {
        return Err(Error::Shape(format!(
            "{} angles for {n_cols} sinogram columns",
            angles.len()
        )));
    }
    if let Some(a) = angles.iter().find(|a| !(0.0..360.0).contains(*a)) {
        return Err(Error::Argument(format!("angle {a} outside [0, 360)")));
    }
    if angles.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Argument("angles must be strictly increasing".into()));
    }
    Ok(())
}
