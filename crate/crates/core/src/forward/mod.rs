//! Real-time approximate forward model: Lambert-Beer attenuated flux from
//! every emitting pixel to every detector row, at any rotation angle.
//!
//! The flux of row `i` is `Σ_p r_{i,p} · exp(−c_{i,p} · d_{i,p}·μ) · λ_p`,
//! where `r` and `c` depend only on geometry and are tabulated once, and the
//! optical depth `d·μ` is traced through the rotated attenuation map for
//! every view.

mod detector;
mod trace;
mod truth;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{rasterize, AssemblySpec, GridSpec, MaterialMap};

pub use crate::sinogram::Sinogram;
pub use detector::{
    column_response, correction_factor, detector_response, element_response, rect_solid_angle,
    solid_angle_fraction, Collimator, DetectorArray, FaceElement,
};
pub use trace::{pixel_to_point, segment_integral};
pub use truth::{apply_poisson, blur_rows, synthesize_ground_truth, Fidelity};

/// One nonzero response of a face element to a pixel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TableEntry {
    pub pixel: u32,
    pub r: f64,
    pub c: f64,
}

/// Angle-independent response `r` and correction `c` for every face element
/// and pixel, stored sparsely: pairs the collimator hides are omitted and
/// read back as `r = 0`, `c = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct ResponseTables {
    pub grid: GridSpec,
    pub n_rows: usize,
    pub elements: Vec<FaceElement>,
    pub entries: Vec<Vec<TableEntry>>,
}

impl ResponseTables {
    /// Tables for every pixel of the grid, one face element per row.
    pub fn build(grid: &GridSpec, array: &DetectorArray) -> Result<Self> {
        Self::build_masked(grid, array, 1, None)
    }

    /// Tables restricted to pixels with `mask[p]` set (all pixels when
    /// `mask` is `None`), with each face split into `subsamples` strips.
    pub fn build_masked(
        grid: &GridSpec,
        array: &DetectorArray,
        subsamples: usize,
        mask: Option<&[bool]>,
    ) -> Result<Self> {
        grid.validate()?;
        array.validate(grid.covered_half_width() * std::f64::consts::SQRT_2)?;
        if let Some(m) = mask {
            if m.len() != grid.n_pix() {
                return Err(Error::Shape("pixel mask does not match the grid".into()));
            }
        }
        let heights = grid.voxel_heights();
        let elements = array.face_elements(subsamples);
        let entries = elements
            .par_iter()
            .map(|face| -> Result<Vec<TableEntry>> {
                let mut row = Vec::new();
                for p in 0..grid.n_pix() {
                    if mask.is_some_and(|m| !m[p]) {
                        continue;
                    }
                    let (x, y) = grid.pixel_center(p);
                    if !detector::in_footprint(x, y, face, array) {
                        continue;
                    }
                    let (r, c) = column_response(x, y, &heights, face, array)?;
                    if r > 0.0 {
                        row.push(TableEntry { pixel: p as u32, r, c });
                    }
                }
                Ok(row)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ResponseTables {
            grid: *grid,
            n_rows: array.n_rows(),
            elements,
            entries,
        })
    }

    /// Total number of stored (element, pixel) pairs.
    pub fn nnz(&self) -> usize {
        self.entries.iter().map(Vec::len).sum()
    }

    /// `r_{i,p}` summed over the face elements of row `i`.
    pub fn r(&self, row: usize, pixel: usize) -> f64 {
        self.lookup(row, pixel).0
    }

    /// `c_{i,p}` of row `i` (first element when the face is subdivided).
    pub fn c(&self, row: usize, pixel: usize) -> f64 {
        self.lookup(row, pixel).1
    }

    fn lookup(&self, row: usize, pixel: usize) -> (f64, f64) {
        let mut r = 0.0;
        let mut c = None;
        for (e, face) in self.elements.iter().enumerate() {
            if face.row != row {
                continue;
            }
            if let Ok(k) = self.entries[e].binary_search_by_key(&(pixel as u32), |t| t.pixel) {
                r += self.entries[e][k].r;
                c.get_or_insert(self.entries[e][k].c);
            }
        }
        (r, c.unwrap_or(1.0))
    }
}

/// d_{i,p}·μ: optical depth from the center of `pixel` to the face center of
/// detector row `detector`.
pub fn line_integral(detector: usize, pixel: usize, mu_map: &MaterialMap, array: &DetectorArray) -> Result<f64> {
    let rows = array.row_positions();
    let y = *rows
        .get(detector)
        .ok_or_else(|| Error::Argument(format!("detector {detector} out of range")))?;
    if pixel >= mu_map.grid.n_pix() {
        return Err(Error::Argument(format!("pixel {pixel} out of range")));
    }
    Ok(pixel_to_point(mu_map, pixel, (array.standoff_radius, y)))
}

/// Flux at every detector row for one rotated material map.
pub fn view_flux(material: &MaterialMap, tables: &ResponseTables, array: &DetectorArray) -> Result<Vec<f64>> {
    if material.grid != tables.grid || material.lambda.len() != tables.grid.n_pix() {
        return Err(Error::Shape(
            "material map and response tables were built on different grids".into(),
        ));
    }
    if tables.n_rows != array.n_rows() {
        return Err(Error::Shape(format!(
            "tables hold {} rows, detector array has {}",
            tables.n_rows,
            array.n_rows()
        )));
    }
    let mut flux = vec![0.0; tables.n_rows];
    for (face, entries) in tables.elements.iter().zip(&tables.entries) {
        let target = (array.standoff_radius, face.center);
        let mut sum = 0.0;
        for e in entries {
            let lambda = material.lambda[e.pixel as usize];
            if lambda == 0.0 {
                continue;
            }
            let depth = pixel_to_point(material, e.pixel as usize, target);
            sum += e.r * (-e.c * depth).exp() * lambda;
        }
        flux[face.row] += sum;
    }
    Ok(flux)
}

/// Assembly, grid, detectors and their response tables, ready to produce
/// views at arbitrary angles.
#[derive(Clone, Debug)]
pub struct RealTimeModel {
    pub spec: AssemblySpec,
    pub grid: GridSpec,
    pub array: DetectorArray,
    pub tables: ResponseTables,
}

impl RealTimeModel {
    pub fn new(spec: &AssemblySpec, grid: &GridSpec, array: &DetectorArray) -> Result<Self> {
        Self::with_subsamples(spec, grid, array, 1)
    }

    pub fn with_subsamples(
        spec: &AssemblySpec,
        grid: &GridSpec,
        array: &DetectorArray,
        subsamples: usize,
    ) -> Result<Self> {
        spec.validate()?;
        array.validate(spec.circumscribed_radius())?;
        // Without background emission only pixels some rotation can cover
        // with fuel ever contribute.
        let mask: Option<Vec<bool>> = (spec.emission_background == 0.0).then(|| {
            let reach = spec.circumscribed_radius() + grid.dx;
            (0..grid.n_pix())
                .map(|p| {
                    let (x, y) = grid.pixel_center(p);
                    x.hypot(y) <= reach
                })
                .collect()
        });
        let tables = ResponseTables::build_masked(grid, array, subsamples, mask.as_deref())?;
        Ok(RealTimeModel {
            spec: spec.clone(),
            grid: *grid,
            array: *array,
            tables,
        })
    }

    pub fn view(&self, angle: f64) -> Result<Vec<f64>> {
        let map = rasterize(&self.spec, &self.grid, angle)?;
        view_flux(&map, &self.tables, &self.array)
    }

    /// One column per angle, evaluated in parallel.
    pub fn sinogram(&self, angles: &[f64]) -> Result<Sinogram> {
        if angles.is_empty() {
            return Err(Error::Argument("at least one view angle is required".into()));
        }
        crate::sinogram::check_angles(angles, angles.len())?;
        let columns = angles
            .par_iter()
            .map(|&a| self.view(a))
            .collect::<Result<Vec<_>>>()?;
        let n = self.array.n_rows();
        let values = DMatrix::from_fn(n, angles.len(), |i, m| columns[m][i]);
        Sinogram::new(values, angles.to_vec())
    }
}

/// The real-time sinogram `R` of an assembly at the given angles (raw flux,
/// not normalized).
pub fn full_sinogram(
    spec: &AssemblySpec,
    grid: &GridSpec,
    array: &DetectorArray,
    angles: &[f64],
) -> Result<Sinogram> {
    RealTimeModel::new(spec, grid, array)?.sinogram(angles)
}
