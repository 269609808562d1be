//! Reduced-order core: snapshot database, POD basis, coefficient estimation
//! and reconstruction.
//!
//! The approximate sinogram is `S̃ = U·C̃`, with `U` the leading left
//! singular vectors of the sampled views. Physics-aware coefficients come
//! from projecting the dense real-time sinogram onto `U`; the PODI baselines
//! interpolate the projections of the sampled views instead.

mod interp;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sinogram::Sinogram;

pub use interp::{periodic_linear, rbf_shape, RbfInterpolant, RBF_RIDGE};

/// Column-stacked ground-truth views `Ŝ` at the sampled angles.
#[derive(Clone, Debug, PartialEq)]
pub struct SnapshotDatabase {
    pub matrix: DMatrix<f64>,
    pub sampled_angles: Vec<f64>,
    /// Column indices into the sinogram the views were taken from.
    pub indices: Vec<usize>,
}

impl SnapshotDatabase {
    /// Database from explicit column indices of `sinogram`.
    pub fn from_indices(sinogram: &Sinogram, indices: &[usize]) -> Result<Self> {
        let mut idx = indices.to_vec();
        idx.sort_unstable();
        if idx.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Argument("sampled views must be distinct".into()));
        }
        if idx.is_empty() || idx.last().is_some_and(|&i| i >= sinogram.n_views()) {
            return Err(Error::Argument(format!(
                "need between 1 and {} valid view indices",
                sinogram.n_views()
            )));
        }
        Ok(SnapshotDatabase {
            matrix: sinogram.values.select_columns(&idx),
            sampled_angles: idx.iter().map(|&i| sinogram.angles[i]).collect(),
            indices: idx,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.matrix.ncols()
    }
}

/// Draws `n_s` distinct views uniformly without replacement.
pub fn sample_views(sinogram: &Sinogram, n_s: usize, seed: u64) -> Result<SnapshotDatabase> {
    let n = sinogram.n_views();
    if n_s == 0 || n_s > n {
        return Err(Error::Argument(format!("n_s = {n_s} outside [1, {n}]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let indices = rand::seq::index::sample(&mut rng, n, n_s).into_vec();
    SnapshotDatabase::from_indices(sinogram, &indices)
}

/// Leading POD modes of a snapshot database plus its full spectrum.
#[derive(Clone, Debug, PartialEq)]
pub struct PodBasis {
    /// N × k, orthonormal columns.
    pub modes: DMatrix<f64>,
    /// Descending singular values δ_j of the whole database.
    pub singular_values: Vec<f64>,
    /// σ_j = δ_j / Σ δ_l.
    pub normalized_spectrum: Vec<f64>,
    pub k: usize,
}

impl PodBasis {
    /// Σ_{l<j} σ_l for every j = 0..=len.
    pub fn cumulative_variance(&self) -> Vec<f64> {
        cumulative(&self.singular_values)
    }

    /// Smallest number of modes whose information variance reaches `target`.
    pub fn modes_for_variance(&self, target: f64) -> usize {
        let cum = self.cumulative_variance();
        cum.iter()
            .position(|&v| v >= target)
            .unwrap_or(cum.len() - 1)
    }
}

fn cumulative(delta: &[f64]) -> Vec<f64> {
    let total: f64 = delta.iter().sum();
    let mut out = Vec::with_capacity(delta.len() + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for d in delta {
        acc += d;
        out.push(if total > 0.0 { acc / total } else { 0.0 });
    }
    out
}

/// Thin SVD of `db`, keeping the first `k` left singular vectors.
pub fn build_basis(db: &SnapshotDatabase, k: usize) -> Result<PodBasis> {
    basis_from_matrix(&db.matrix, k)
}

/// POD basis of an arbitrary column-snapshot matrix.
pub fn basis_from_matrix(matrix: &DMatrix<f64>, k: usize) -> Result<PodBasis> {
    let (n, n_s) = matrix.shape();
    let full = n.min(n_s);
    if k == 0 || k > full {
        return Err(Error::Argument(format!("k = {k} outside [1, {full}]")));
    }
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("database contains non-finite values".into()));
    }
    let (u, delta) = thin_svd(matrix)?;

    let tol = delta[0] * n.max(n_s) as f64 * f64::EPSILON;
    let rank = delta.iter().take_while(|&&d| d > tol).count();
    if rank == 0 {
        return Err(Error::Numerical("database has rank zero".into()));
    }
    let k_used = if k > rank {
        log::warn!("requested {k} modes but the database has numerical rank {rank}; using {rank}");
        rank
    } else {
        k
    };

    let total: f64 = delta.iter().sum();
    Ok(PodBasis {
        modes: u.columns(0, k_used).into_owned(),
        normalized_spectrum: delta.iter().map(|d| d / total).collect(),
        singular_values: delta,
        k: k_used,
    })
}

/// Left singular vectors (N × min(N, n_s)) and singular values, sorted
/// descending, each vector's largest-magnitude entry made positive.
fn thin_svd(matrix: &DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let svd = matrix.clone().svd(true, false);
    let u = svd
        .u
        .ok_or_else(|| Error::Numerical("SVD did not return left singular vectors".into()))?;
    let sv = svd.singular_values;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]));
    let mut sorted = u.select_columns(&order);
    for mut col in sorted.column_iter_mut() {
        let pivot = col.iter().copied().fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
        if pivot < 0.0 {
            col.neg_mut();
        }
    }
    Ok((sorted, order.iter().map(|&i| sv[i].max(0.0)).collect()))
}

/// Fraction of the total information variance captured by the first `j`
/// modes.
pub fn information_variance(basis: &PodBasis, j: usize) -> Result<f64> {
    let len = basis.singular_values.len();
    if j > len {
        return Err(Error::Argument(format!("j = {j} exceeds spectrum length {len}")));
    }
    Ok(basis.cumulative_variance()[j])
}

/// How a coefficient matrix was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoefficientSource {
    SampledProjection,
    PhysicsAware,
    InterpolatedLinear,
    InterpolatedRbf,
}

/// k × N_views POD coefficients; row `i` pairs with mode `u_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientMatrix {
    pub values: DMatrix<f64>,
    pub source: CoefficientSource,
    pub angles: Vec<f64>,
}

/// `Uᵀ X`.
pub fn project(basis: &PodBasis, data: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if data.nrows() != basis.modes.nrows() {
        return Err(Error::Shape(format!(
            "data has {} rows, basis modes have {}",
            data.nrows(),
            basis.modes.nrows()
        )));
    }
    Ok(basis.modes.tr_mul(data))
}

/// Projection of the sampled views themselves (PODI's `C = Uᵀ Ŝ`).
pub fn sampled_coefficients(basis: &PodBasis, db: &SnapshotDatabase) -> Result<CoefficientMatrix> {
    Ok(CoefficientMatrix {
        values: project(basis, &db.matrix)?,
        source: CoefficientSource::SampledProjection,
        angles: db.sampled_angles.clone(),
    })
}

/// Physics-aware coefficients: project the real-time sinogram onto the
/// basis, then rescale each row by the least-squares factor that best
/// matches the sampled projections at the sampled angles.
pub fn papod_coefficients(
    basis: &PodBasis,
    realtime: &Sinogram,
    db: &SnapshotDatabase,
) -> Result<CoefficientMatrix> {
    let raw = project(basis, &realtime.values)?;
    let sampled = project(basis, &db.matrix)?;
    let columns = db
        .sampled_angles
        .iter()
        .map(|&a| {
            realtime.column_of(a).ok_or_else(|| {
                Error::Shape(format!("real-time sinogram has no view at sampled angle {a}"))
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut values = raw;
    for i in 0..basis.k {
        let (mut num, mut den) = (0.0, 0.0);
        for (n, &m) in columns.iter().enumerate() {
            let proxy = values[(i, m)];
            num += proxy * sampled[(i, n)];
            den += proxy * proxy;
        }
        let scale = if den > 0.0 { num / den } else { 1.0 };
        values.row_mut(i).scale_mut(scale);
    }
    Ok(CoefficientMatrix {
        values,
        source: CoefficientSource::PhysicsAware,
        angles: realtime.angles.clone(),
    })
}

/// `S̃ = U·C`.
pub fn reconstruct(basis: &PodBasis, coeffs: &CoefficientMatrix) -> Result<Sinogram> {
    if coeffs.values.nrows() != basis.k {
        return Err(Error::Shape(format!(
            "{} coefficient rows for {} modes",
            coeffs.values.nrows(),
            basis.k
        )));
    }
    Sinogram::new(&basis.modes * &coeffs.values, coeffs.angles.clone())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Interpolator {
    Linear,
    Rbf,
}

/// PODI: interpolate the sampled projections `Uᵀ Ŝ` over angle, one row at
/// a time, periodic across 0°/360°.
pub fn podi_coefficients(
    basis: &PodBasis,
    db: &SnapshotDatabase,
    target_angles: &[f64],
    scheme: Interpolator,
) -> Result<CoefficientMatrix> {
    check_knots(&db.sampled_angles)?;
    let sampled = project(basis, &db.matrix)?;
    let (values, source) = match scheme {
        Interpolator::Linear => (
            periodic_linear(&db.sampled_angles, &sampled, target_angles),
            CoefficientSource::InterpolatedLinear,
        ),
        Interpolator::Rbf => (
            RbfInterpolant::fit(&db.sampled_angles, &sampled)?.evaluate(target_angles),
            CoefficientSource::InterpolatedRbf,
        ),
    };
    Ok(CoefficientMatrix {
        values,
        source,
        angles: target_angles.to_vec(),
    })
}

/// Non-POD baseline: linear interpolation of every detector row over angle.
pub fn linear_data_interpolation(db: &SnapshotDatabase, target_angles: &[f64]) -> Result<Sinogram> {
    check_knots(&db.sampled_angles)?;
    Sinogram::new(
        periodic_linear(&db.sampled_angles, &db.matrix, target_angles),
        target_angles.to_vec(),
    )
}

fn check_knots(angles: &[f64]) -> Result<()> {
    if angles.len() < 2 {
        return Err(Error::Argument("interpolation needs at least two sampled views".into()));
    }
    if angles.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Argument(
            "sampled angles must be distinct and sorted".into(),
        ));
    }
    Ok(())
}
