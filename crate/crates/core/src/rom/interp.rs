//! Periodic (0°–360°) interpolation of row-wise data over view angle.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Ridge added to the RBF kernel diagonal.
pub const RBF_RIDGE: f64 = 1e-8;

/// Interpolates every row of `values` (one column per knot) linearly in
/// angle, wrapping across the 0°/360° seam. Targets that coincide with a
/// knot return the knot column exactly. `knots` must be sorted and distinct.
pub fn periodic_linear(knots: &[f64], values: &DMatrix<f64>, targets: &[f64]) -> DMatrix<f64> {
    let n = knots.len();
    let mut out = DMatrix::zeros(values.nrows(), targets.len());
    for (m, &t) in targets.iter().enumerate() {
        let t = t.rem_euclid(360.0);
        let pos = knots.partition_point(|&k| k <= t);
        let (left, left_angle) = if pos == 0 {
            (n - 1, knots[n - 1] - 360.0)
        } else {
            (pos - 1, knots[pos - 1])
        };
        let (right, right_angle) = if pos == n {
            (0, knots[0] + 360.0)
        } else {
            (pos, knots[pos])
        };
        let w = (t - left_angle) / (right_angle - left_angle);
        if w == 0.0 {
            out.set_column(m, &values.column(left));
        } else {
            out.set_column(m, &(values.column(left) * (1.0 - w) + values.column(right) * w));
        }
    }
    out
}

/// Shortest angular distance in degrees.
fn wrapped_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    d.min(360.0 - d)
}

/// Gaussian shape parameter: the mean gap between consecutive knots on the
/// circle.
pub fn rbf_shape(n_knots: usize) -> f64 {
    360.0 / n_knots as f64
}

/// Gaussian radial-basis interpolant over the circle of angles, shared by
/// all rows of the fitted data.
#[derive(Clone, Debug)]
pub struct RbfInterpolant {
    knots: Vec<f64>,
    shape: f64,
    /// n_knots × n_rows weights.
    weights: DMatrix<f64>,
}

impl RbfInterpolant {
    pub fn fit(knots: &[f64], values: &DMatrix<f64>) -> Result<Self> {
        let n = knots.len();
        if values.ncols() != n {
            return Err(Error::Shape(format!("{} knots for {} value columns", n, values.ncols())));
        }
        let shape = rbf_shape(n);
        let kernel = |d: f64| (-(d / shape).powi(2)).exp();
        let mut system = DMatrix::from_fn(n, n, |i, j| kernel(wrapped_distance(knots[i], knots[j])));
        for i in 0..n {
            system[(i, i)] += RBF_RIDGE;
        }
        let rhs = values.transpose();
        let weights = match system.clone().cholesky() {
            Some(ch) => ch.solve(&rhs),
            None => system
                .lu()
                .solve(&rhs)
                .ok_or_else(|| Error::Numerical("singular RBF kernel system".into()))?,
        };
        Ok(RbfInterpolant {
            knots: knots.to_vec(),
            shape,
            weights,
        })
    }

    /// Interpolated values, one column per target angle.
    pub fn evaluate(&self, targets: &[f64]) -> DMatrix<f64> {
        let kernel = DMatrix::from_fn(targets.len(), self.knots.len(), |m, j| {
            (-(wrapped_distance(targets[m], self.knots[j]) / self.shape).powi(2)).exp()
        });
        (kernel * &self.weights).transpose()
    }
}
