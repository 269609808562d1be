//! Detector layout and the purely geometric response of a detector face to
//! a voxel: solid angle through the collimator slit and the out-of-plane
//! path correction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::GridSpec;

/// Tungsten slit in front of each detector face.
///
/// Only the transaxial aperture is modeled: a voxel sees the part of the
/// face that is visible through the slit entrance, which sits `length` mm in
/// front of the face and is `slit_width` mm wide.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Collimator {
    pub length: f64,
    pub slit_width: f64,
}

impl Default for Collimator {
    fn default() -> Self {
        Collimator {
            length: 100.0,
            slit_width: 1.5,
        }
    }
}

/// Two staggered linear detector heads merged into one array of effective
/// rows. The faces sit in the plane `x = standoff_radius` and look towards
/// the origin along −x; row positions run along y.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectorArray {
    /// Detectors per head.
    pub n_detectors: usize,
    /// Detector pitch within one head, mm.
    pub pitch: f64,
    /// Lateral stagger of the second head, mm. Zero means a single head.
    pub head_offset: f64,
    pub face_width: f64,
    pub face_height: f64,
    pub standoff_radius: f64,
    pub collimator: Option<Collimator>,
}

impl Default for DetectorArray {
    fn default() -> Self {
        DetectorArray {
            n_detectors: 91,
            pitch: 4.0,
            head_offset: 2.0,
            face_width: 4.0,
            face_height: 5.0,
            standoff_radius: 300.0,
            collimator: Some(Collimator::default()),
        }
    }
}

impl DetectorArray {
    pub fn validate(&self, assembly_radius: f64) -> Result<()> {
        if self.n_detectors == 0 {
            return Err(Error::Config("detector array needs at least one detector".into()));
        }
        let positive = [self.pitch, self.face_width, self.face_height, self.standoff_radius];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Config("detector pitch, face and standoff must be positive".into()));
        }
        if !(self.head_offset >= 0.0) {
            return Err(Error::Config("head_offset must be non-negative".into()));
        }
        let front = self.standoff_radius - self.collimator.map_or(0.0, |c| c.length);
        if !(front > assembly_radius) {
            return Err(Error::Config(format!(
                "detector front at {front} mm does not clear the {assembly_radius} mm assembly radius"
            )));
        }
        if let Some(c) = self.collimator {
            if !(c.length > 0.0 && c.slit_width > 0.0) {
                return Err(Error::Config("collimator length and slit width must be positive".into()));
            }
        }
        Ok(())
    }

    /// Number of measurement rows N after merging both heads.
    pub fn n_rows(&self) -> usize {
        if self.head_offset > 0.0 {
            2 * self.n_detectors
        } else {
            self.n_detectors
        }
    }

    /// Lateral (y) position of every merged row, ascending and symmetric
    /// about zero.
    pub fn row_positions(&self) -> Vec<f64> {
        let mid = (self.n_detectors as f64 - 1.0) / 2.0;
        let head = |shift: f64| {
            (0..self.n_detectors).map(move |j| (j as f64 - mid) * self.pitch + shift)
        };
        let mut rows: Vec<f64> = if self.head_offset > 0.0 {
            head(-self.head_offset / 2.0)
                .chain(head(self.head_offset / 2.0))
                .collect()
        } else {
            head(0.0).collect()
        };
        rows.sort_by(f64::total_cmp);
        rows
    }

    /// Effective spacing between merged rows.
    pub fn row_pitch(&self) -> f64 {
        let rows = self.row_positions();
        if rows.len() < 2 {
            self.pitch
        } else {
            (rows[rows.len() - 1] - rows[0]) / (rows.len() - 1) as f64
        }
    }

    /// Face elements for every row, each face split into `subsamples`
    /// equal strips across its width.
    pub fn face_elements(&self, subsamples: usize) -> Vec<FaceElement> {
        let m = subsamples.max(1);
        let width = self.face_width / m as f64;
        self.row_positions()
            .into_iter()
            .enumerate()
            .flat_map(|(row, y)| {
                (0..m).map(move |s| FaceElement {
                    row,
                    slit_center: y,
                    center: y - self.face_width / 2.0 + (s as f64 + 0.5) * width,
                    width,
                })
            })
            .collect()
    }
}

/// A rectangular strip of one detector face.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FaceElement {
    pub row: usize,
    /// Lateral position of the row's collimator slit.
    pub slit_center: f64,
    /// Lateral center of this strip.
    pub center: f64,
    pub width: f64,
}

/// Solid angle of the rectangle `[y1, y2] × [z1, z2]` lying in a plane at
/// perpendicular distance `d` from the observer, coordinates relative to the
/// foot of the perpendicular.
pub fn rect_solid_angle(d: f64, y1: f64, y2: f64, z1: f64, z2: f64) -> f64 {
    let corner = |a: f64, b: f64| (a * b / (d * (a * a + b * b + d * d).sqrt())).atan();
    corner(y2, z2) - corner(y1, z2) - corner(y2, z1) + corner(y1, z1)
}

fn row_face(detector: usize, array: &DetectorArray) -> Result<FaceElement> {
    let rows = array.row_positions();
    let y = *rows.get(detector).ok_or_else(|| {
        Error::Argument(format!("detector {detector} out of range for {} rows", rows.len()))
    })?;
    Ok(FaceElement {
        row: detector,
        slit_center: y,
        center: y,
        width: array.face_width,
    })
}

/// Ω/4π subtended by the bare face of `detector` at `point`, ignoring the
/// collimator.
pub fn solid_angle_fraction(point: [f64; 3], detector: usize, array: &DetectorArray) -> Result<f64> {
    let face = row_face(detector, array)?;
    let d = array.standoff_radius - point[0];
    if !(d > 0.0) {
        return Err(Error::Geometry(format!(
            "point at x = {} mm is not in front of the detector plane",
            point[0]
        )));
    }
    let (y1, y2) = (face.center - face.width / 2.0 - point[1], face.center + face.width / 2.0 - point[1]);
    let h = array.face_height / 2.0;
    Ok(rect_solid_angle(d, y1, y2, -h - point[2], h - point[2]) / (4.0 * std::f64::consts::PI))
}

/// Ω/4π of the part of a face element visible from `point` through the
/// collimator slit (the whole element when there is no collimator).
pub fn element_response(point: [f64; 3], face: &FaceElement, array: &DetectorArray) -> f64 {
    let d = array.standoff_radius - point[0];
    let mut lo = face.center - face.width / 2.0;
    let mut hi = face.center + face.width / 2.0;
    if let Some(col) = array.collimator {
        let entrance = d - col.length;
        if entrance <= 0.0 {
            return 0.0;
        }
        // Slit edges projected from the point onto the face plane.
        let stretch = d / entrance;
        let py = point[1];
        lo = lo.max(py + (face.slit_center - col.slit_width / 2.0 - py) * stretch);
        hi = hi.min(py + (face.slit_center + col.slit_width / 2.0 - py) * stretch);
        if hi <= lo {
            return 0.0;
        }
    }
    let h = array.face_height / 2.0;
    rect_solid_angle(d, lo - point[1], hi - point[1], -h - point[2], h - point[2])
        / (4.0 * std::f64::consts::PI)
}

/// Cheap test of whether any voxel above `(x, y)` can see the element.
pub(crate) fn in_footprint(x: f64, y: f64, face: &FaceElement, array: &DetectorArray) -> bool {
    let d = array.standoff_radius - x;
    if d <= 0.0 {
        return false;
    }
    match array.collimator {
        None => true,
        Some(col) => {
            let entrance = d - col.length;
            if entrance <= 0.0 {
                return false;
            }
            let stretch = d / entrance;
            let lo = (face.center - face.width / 2.0).max(y + (face.slit_center - col.slit_width / 2.0 - y) * stretch);
            let hi = (face.center + face.width / 2.0).min(y + (face.slit_center + col.slit_width / 2.0 - y) * stretch);
            hi > lo
        }
    }
}

/// Response `r` and attenuation correction `c` of one face element to the
/// voxel column above pixel center `(x, y)`.
///
/// `r` is the mean voxel response; `c` is the response-weighted mean of
/// `1/cos α` with α the elevation of each voxel seen from the face center.
/// `c = 1` when `r = 0`.
pub fn column_response(
    x: f64,
    y: f64,
    heights: &[f64],
    face: &FaceElement,
    array: &DetectorArray,
) -> Result<(f64, f64)> {
    let planar = (array.standoff_radius - x).hypot(face.center - y);
    let mut sum_r = 0.0;
    let mut sum_weighted = 0.0;
    for &z in heights {
        let rs = element_response([x, y, z], face, array);
        if rs == 0.0 {
            continue;
        }
        if !(planar > 0.0) {
            return Err(Error::Geometry(
                "voxel directly above the detector face: elevation angle is 90°".into(),
            ));
        }
        let inv_cos = (planar * planar + z * z).sqrt() / planar;
        sum_r += rs;
        sum_weighted += rs * inv_cos;
    }
    if sum_r == 0.0 {
        return Ok((0.0, 1.0));
    }
    Ok((sum_r / heights.len() as f64, sum_weighted / sum_r))
}

/// r_{i,p}: mean solid-angle fraction of detector row `detector` over the
/// voxel column of `pixel`.
pub fn detector_response(detector: usize, pixel: usize, grid: &GridSpec, array: &DetectorArray) -> Result<f64> {
    pixel_pair(detector, pixel, grid, array).map(|(r, _)| r)
}

/// c_{i,p}: path-length correction for voxels out of the detector plane.
pub fn correction_factor(detector: usize, pixel: usize, grid: &GridSpec, array: &DetectorArray) -> Result<f64> {
    let (r, c) = pixel_pair(detector, pixel, grid, array)?;
    if !(r > 0.0) {
        return Err(Error::Geometry(format!(
            "detector {detector} has zero response to pixel {pixel}"
        )));
    }
    Ok(c)
}

fn pixel_pair(detector: usize, pixel: usize, grid: &GridSpec, array: &DetectorArray) -> Result<(f64, f64)> {
    if pixel >= grid.n_pix() {
        return Err(Error::Argument(format!("pixel {pixel} out of range")));
    }
    let face = row_face(detector, array)?;
    let (x, y) = grid.pixel_center(pixel);
    column_response(x, y, &grid.voxel_heights(), &face, array)
}
