//! Fuel-assembly layouts and their rasterization onto the investigation grid.
//!
//! The assembly rotates counter-clockwise about the grid origin while the
//! detectors stay fixed. Pixels are classified by whether their center lies
//! inside a (rotated) pin disk; emission and attenuation are constant over
//! each pixel.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Water emission, arbitrary units.
pub const EMISSION_WATER: f64 = 0.0;
/// Spent-fuel emission, arbitrary units.
pub const EMISSION_FUEL: f64 = 100.0;
/// Water attenuation, mm⁻¹.
pub const ATTENUATION_WATER: f64 = 0.0085;
/// Spent-fuel attenuation, mm⁻¹.
pub const ATTENUATION_FUEL: f64 = 0.1356;

const PWR_10X10_3X3GAP: &str = include_str!("../layouts/pwr_10x10_3x3gap.toml");

/// Pin lattice geometry plus material constants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssemblySpec {
    pub lattice_rows: usize,
    pub lattice_cols: usize,
    /// Center-to-center pin distance, mm.
    pub pin_pitch: f64,
    /// mm.
    pub pin_radius: f64,
    /// `(row, col)` lattice positions without a pin. Row 0 is the top row.
    #[serde(default)]
    pub missing_pins: BTreeSet<(usize, usize)>,
    #[serde(default = "default_emission_fuel")]
    pub emission_fuel: f64,
    #[serde(default)]
    pub emission_background: f64,
    #[serde(default = "default_attenuation_fuel")]
    pub attenuation_fuel: f64,
    #[serde(default = "default_attenuation_background")]
    pub attenuation_background: f64,
    /// Explicit pin centers (mm) replacing the rectangular lattice, for
    /// layouts such as hexagonal bundles.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pin_centers: Option<Vec<(f64, f64)>>,
}

fn default_emission_fuel() -> f64 {
    EMISSION_FUEL
}
fn default_attenuation_fuel() -> f64 {
    ATTENUATION_FUEL
}
fn default_attenuation_background() -> f64 {
    ATTENUATION_WATER
}

impl AssemblySpec {
    /// Full rectangular lattice with the default water/fuel materials.
    pub fn full_lattice(rows: usize, cols: usize, pin_pitch: f64, pin_radius: f64) -> Self {
        AssemblySpec {
            lattice_rows: rows,
            lattice_cols: cols,
            pin_pitch,
            pin_radius,
            missing_pins: BTreeSet::new(),
            emission_fuel: EMISSION_FUEL,
            emission_background: EMISSION_WATER,
            attenuation_fuel: ATTENUATION_FUEL,
            attenuation_background: ATTENUATION_WATER,
            pin_centers: None,
        }
    }

    /// 10×10 PWR assembly with a 3×3 block of pins removed below and left
    /// of the center.
    pub fn pwr_10x10_3x3gap() -> Self {
        Self::from_toml_str(PWR_10X10_3X3GAP).expect("bundled layout is valid")
    }

    /// Looks up a layout shipped with the crate.
    pub fn bundled(name: &str) -> Option<Self> {
        match name {
            "pwr_10x10_3x3gap" => Some(Self::pwr_10x10_3x3gap()),
            _ => None,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let spec: AssemblySpec =
            toml::from_str(text).map_err(|e| Error::Config(format!("assembly layout: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("assembly spec serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.pin_radius > 0.0) {
            return Err(Error::Config("pin_radius must be positive".into()));
        }
        if self.pin_centers.is_none() {
            if self.lattice_rows == 0 || self.lattice_cols == 0 {
                return Err(Error::Config("lattice must have at least one row and column".into()));
            }
            if !(self.pin_pitch > 2.0 * self.pin_radius) {
                return Err(Error::Config(format!(
                    "pin_pitch {} must exceed the pin diameter {}",
                    self.pin_pitch,
                    2.0 * self.pin_radius
                )));
            }
        }
        if let Some(&(r, c)) = self
            .missing_pins
            .iter()
            .find(|&&(r, c)| r >= self.lattice_rows || c >= self.lattice_cols)
        {
            return Err(Error::Config(format!(
                "missing pin ({r}, {c}) outside the {}x{} lattice",
                self.lattice_rows, self.lattice_cols
            )));
        }
        let materials = [
            self.emission_fuel,
            self.emission_background,
            self.attenuation_fuel,
            self.attenuation_background,
        ];
        if materials.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Config(
                "emission and attenuation values must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }

    /// Centers (mm) of the pins actually present, unrotated.
    pub fn pin_positions(&self) -> Vec<(f64, f64)> {
        if let Some(centers) = &self.pin_centers {
            return centers.clone();
        }
        let row_mid = (self.lattice_rows as f64 - 1.0) / 2.0;
        let col_mid = (self.lattice_cols as f64 - 1.0) / 2.0;
        let mut out = Vec::with_capacity(self.lattice_rows * self.lattice_cols);
        for row in 0..self.lattice_rows {
            for col in 0..self.lattice_cols {
                if self.missing_pins.contains(&(row, col)) {
                    continue;
                }
                let x = (col as f64 - col_mid) * self.pin_pitch;
                let y = (row_mid - row as f64) * self.pin_pitch;
                out.push((x, y));
            }
        }
        out
    }

    /// Radius of the smallest origin-centered disk containing every
    /// lattice position (present or not), including the pin radius.
    pub fn circumscribed_radius(&self) -> f64 {
        let centers = match &self.pin_centers {
            Some(c) => c.clone(),
            None => {
                let mut full = self.clone();
                full.missing_pins.clear();
                full.pin_positions()
            }
        };
        centers
            .iter()
            .map(|&(x, y)| x.hypot(y))
            .fold(0.0, f64::max)
            + self.pin_radius
    }
}

/// Regular investigation grid: square pixels in the assembly plane, each
/// extended axially into a column of voxels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dx: f64,
    pub dy: f64,
    pub dz: f64,
    pub half_extent_xy: f64,
    pub half_extent_z: f64,
}

impl GridSpec {
    pub fn new(dx: f64, half_extent_xy: f64, dz: f64, half_extent_z: f64) -> Result<Self> {
        let grid = GridSpec {
            dx,
            dy: dx,
            dz,
            half_extent_xy,
            half_extent_z,
        };
        grid.validate()?;
        Ok(grid)
    }

    /// Default grid for an assembly: one pin pitch of margin around the
    /// circumscribed disk, 10 voxels of 10 mm axially.
    pub fn for_assembly(spec: &AssemblySpec, dx: f64) -> Result<Self> {
        let margin = if spec.pin_pitch > 0.0 {
            spec.pin_pitch
        } else {
            2.0 * spec.pin_radius
        };
        Self::new(dx, spec.circumscribed_radius() + margin, 10.0, 50.0)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [self.dx, self.dy, self.dz, self.half_extent_xy, self.half_extent_z];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Config("grid spacings and extents must be positive".into()));
        }
        if self.dx != self.dy {
            return Err(Error::Config("grid pixels must be square (dx = dy)".into()));
        }
        Ok(())
    }

    /// Pixels along each in-plane axis.
    pub fn n_xy(&self) -> usize {
        (2.0 * self.half_extent_xy / self.dx).ceil() as usize
    }

    pub fn n_pix(&self) -> usize {
        self.n_xy() * self.n_xy()
    }

    /// Voxels in each pixel column.
    pub fn n_vox(&self) -> usize {
        ((2.0 * self.half_extent_z / self.dz).ceil() as usize).max(1)
    }

    /// Half width of the pixel lattice actually laid down, which may exceed
    /// `half_extent_xy` by less than one pixel.
    pub fn covered_half_width(&self) -> f64 {
        self.n_xy() as f64 * self.dx / 2.0
    }

    /// Axis coordinate (mm) of the center of pixel `i` along x or y.
    #[inline]
    pub fn axis_center(&self, i: usize) -> f64 {
        (i as f64 + 0.5 - self.n_xy() as f64 / 2.0) * self.dx
    }

    #[inline]
    pub fn pixel_index(&self, ix: usize, iy: usize) -> usize {
        iy * self.n_xy() + ix
    }

    #[inline]
    pub fn pixel_coords(&self, pixel: usize) -> (usize, usize) {
        let n = self.n_xy();
        (pixel % n, pixel / n)
    }

    #[inline]
    pub fn pixel_center(&self, pixel: usize) -> (f64, f64) {
        let (ix, iy) = self.pixel_coords(pixel);
        (self.axis_center(ix), self.axis_center(iy))
    }

    /// Axial mid-heights (mm) of the voxels in every pixel column.
    pub fn voxel_heights(&self) -> Vec<f64> {
        let n = self.n_vox();
        (0..n)
            .map(|k| (k as f64 + 0.5 - n as f64 / 2.0) * self.dz)
            .collect()
    }
}

/// 3D barycenters of the voxel column above and below `pixel`.
pub fn voxel_centers(grid: &GridSpec, pixel: usize) -> Result<Vec<[f64; 3]>> {
    if pixel >= grid.n_pix() {
        return Err(Error::Argument(format!(
            "pixel {pixel} out of range for {} pixels",
            grid.n_pix()
        )));
    }
    let (x, y) = grid.pixel_center(pixel);
    Ok(grid.voxel_heights().into_iter().map(|z| [x, y, z]).collect())
}

/// Inclusive pixel-index bounding box.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PixelBounds {
    pub ix0: usize,
    pub ix1: usize,
    pub iy0: usize,
    pub iy1: usize,
}

/// Per-pixel emission and attenuation at one rotation angle.
#[derive(Clone, Debug, PartialEq)]
pub struct MaterialMap {
    pub grid: GridSpec,
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
    /// Degrees.
    pub angle: f64,
    /// Background attenuation holding everywhere outside `active`. When set,
    /// ray traversal may integrate the uniform remainder in closed form.
    pub background_mu: Option<f64>,
    pub active: Option<PixelBounds>,
}

impl MaterialMap {
    /// Map with arbitrary per-pixel values and no known background.
    pub fn from_values(grid: GridSpec, lambda: Vec<f64>, mu: Vec<f64>) -> Result<Self> {
        let n = grid.n_pix();
        if lambda.len() != n || mu.len() != n {
            return Err(Error::Shape(format!(
                "material arrays have {} / {} entries, grid has {n} pixels",
                lambda.len(),
                mu.len()
            )));
        }
        Ok(MaterialMap {
            grid,
            lambda,
            mu,
            angle: 0.0,
            background_mu: None,
            active: None,
        })
    }

    pub fn uniform(grid: GridSpec, lambda: f64, mu: f64) -> Self {
        let n = grid.n_pix();
        MaterialMap {
            grid,
            lambda: vec![lambda; n],
            mu: vec![mu; n],
            angle: 0.0,
            background_mu: None,
            active: None,
        }
    }
}

/// `(cos, sin)` of an angle in degrees, exact at multiples of 90°.
pub fn rotation(angle_deg: f64) -> (f64, f64) {
    let a = angle_deg.rem_euclid(360.0);
    if a == 0.0 {
        (1.0, 0.0)
    } else if a == 90.0 {
        (0.0, 1.0)
    } else if a == 180.0 {
        (-1.0, 0.0)
    } else if a == 270.0 {
        (0.0, -1.0)
    } else {
        let (s, c) = a.to_radians().sin_cos();
        (c, s)
    }
}

/// Rotates the pins counter-clockwise by `angle` degrees and classifies each
/// pixel center as fuel or background.
pub fn rasterize(spec: &AssemblySpec, grid: &GridSpec, angle: f64) -> Result<MaterialMap> {
    if !(0.0..360.0).contains(&angle) {
        return Err(Error::Argument(format!("angle {angle} outside [0, 360)")));
    }
    spec.validate()?;
    grid.validate()?;

    let n = grid.n_xy();
    let half = grid.covered_half_width();
    let radius = spec.pin_radius;
    let r2 = radius * radius;
    let (cos, sin) = rotation(angle);

    let mut lambda = vec![spec.emission_background; n * n];
    let mut mu = vec![spec.attenuation_background; n * n];
    let mut active: Option<PixelBounds> = None;

    for (x0, y0) in spec.pin_positions() {
        let cx = x0 * cos - y0 * sin;
        let cy = x0 * sin + y0 * cos;
        if cx.abs() + radius > half || cy.abs() + radius > half {
            return Err(Error::DomainCoverage(format!(
                "pin at ({cx:.2}, {cy:.2}) mm with radius {radius} mm exceeds the ±{half} mm grid"
            )));
        }
        let to_index = |v: f64| ((v + half) / grid.dx).floor().clamp(0.0, (n - 1) as f64) as usize;
        let (ix0, ix1) = (to_index(cx - radius), to_index(cx + radius));
        let (iy0, iy1) = (to_index(cy - radius), to_index(cy + radius));
        for iy in iy0..=iy1 {
            let py = grid.axis_center(iy) - cy;
            for ix in ix0..=ix1 {
                let px = grid.axis_center(ix) - cx;
                if px * px + py * py <= r2 {
                    let p = iy * n + ix;
                    lambda[p] = spec.emission_fuel;
                    mu[p] = spec.attenuation_fuel;
                }
            }
        }
        active = Some(match active {
            None => PixelBounds { ix0, ix1, iy0, iy1 },
            Some(b) => PixelBounds {
                ix0: b.ix0.min(ix0),
                ix1: b.ix1.max(ix1),
                iy0: b.iy0.min(iy0),
                iy1: b.iy1.max(iy1),
            },
        });
    }

    Ok(MaterialMap {
        grid: *grid,
        lambda,
        mu,
        angle,
        background_mu: Some(spec.attenuation_background),
        active,
    })
}
