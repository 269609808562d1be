//! Persistence: raw little-endian `f64` payloads with TOML sidecars, CSV
//! tables, and tone-mapped PNG previews.
//!
//! An artifact saved at `dir/name` becomes two files:
//!
//! * `dir/name.bin`: `rows × cols` IEEE-754 binary64 values, little-endian,
//!   row-major (row 0 first, columns left to right), no header. Its length is
//!   exactly `rows·cols·8` bytes.
//! * `dir/name.toml`: an [`ArtifactHeader`] describing the payload.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::recon::{ErrorReport, ReconImage};
use crate::rom::{CoefficientMatrix, CoefficientSource, PodBasis};
use crate::sinogram::Sinogram;

pub const DTYPE: &str = "f64le";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArtifactKind {
    Sinogram,
    Basis,
    Coefficients,
    Image,
    ErrorMap,
}

/// Linear map used to turn a matrix into 8-bit gray levels:
/// `level = round(255·(v − min)/(max − min))`, clamped; NaN maps to 0.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToneMap {
    pub min: f64,
    pub max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArtifactHeader {
    pub kind: ArtifactKind,
    pub rows: usize,
    pub cols: usize,
    pub dtype: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub angles: Option<Vec<f64>>,
    #[serde(default)]
    pub normalized: bool,
    #[serde(default)]
    pub provenance: String,
    /// Basis only: the full descending spectrum and its normalization.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub singular_values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalized_spectrum: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<CoefficientSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pixel_size: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tone_map: Option<ToneMap>,
}

impl ArtifactHeader {
    pub fn new(kind: ArtifactKind, rows: usize, cols: usize) -> Self {
        ArtifactHeader {
            kind,
            rows,
            cols,
            dtype: DTYPE.into(),
            angles: None,
            normalized: false,
            provenance: String::new(),
            singular_values: None,
            normalized_spectrum: None,
            source: None,
            pixel_size: None,
            tone_map: None,
        }
    }
}

/// Anything stored as one matrix plus a header.
pub trait Artifact: Sized {
    const KIND: ArtifactKind;
    fn matrix(&self) -> &DMatrix<f64>;
    /// Header fields beyond kind and shape.
    fn describe(&self, header: &mut ArtifactHeader);
    fn from_parts(header: &ArtifactHeader, matrix: DMatrix<f64>) -> Result<Self>;
}

fn missing(field: &str) -> Error {
    Error::Config(format!("sidecar lacks `{field}`"))
}

impl Artifact for Sinogram {
    const KIND: ArtifactKind = ArtifactKind::Sinogram;
    fn matrix(&self) -> &DMatrix<f64> {
        &self.values
    }
    fn describe(&self, h: &mut ArtifactHeader) {
        h.angles = Some(self.angles.clone());
        h.normalized = self.normalized;
    }
    fn from_parts(h: &ArtifactHeader, matrix: DMatrix<f64>) -> Result<Self> {
        let angles = h
            .angles
            .clone()
            .unwrap_or_else(|| (0..h.cols).map(|m| m as f64).collect());
        let mut s = Sinogram::new(matrix, angles)?;
        s.normalized = h.normalized;
        Ok(s)
    }
}

impl Artifact for PodBasis {
    const KIND: ArtifactKind = ArtifactKind::Basis;
    fn matrix(&self) -> &DMatrix<f64> {
        &self.modes
    }
    fn describe(&self, h: &mut ArtifactHeader) {
        h.singular_values = Some(self.singular_values.clone());
        h.normalized_spectrum = Some(self.normalized_spectrum.clone());
    }
    fn from_parts(h: &ArtifactHeader, modes: DMatrix<f64>) -> Result<Self> {
        Ok(PodBasis {
            k: modes.ncols(),
            modes,
            singular_values: h.singular_values.clone().ok_or_else(|| missing("singular_values"))?,
            normalized_spectrum: h
                .normalized_spectrum
                .clone()
                .ok_or_else(|| missing("normalized_spectrum"))?,
        })
    }
}

impl Artifact for CoefficientMatrix {
    const KIND: ArtifactKind = ArtifactKind::Coefficients;
    fn matrix(&self) -> &DMatrix<f64> {
        &self.values
    }
    fn describe(&self, h: &mut ArtifactHeader) {
        h.angles = Some(self.angles.clone());
        h.source = Some(self.source);
    }
    fn from_parts(h: &ArtifactHeader, values: DMatrix<f64>) -> Result<Self> {
        let angles = h.angles.clone().ok_or_else(|| missing("angles"))?;
        if angles.len() != values.ncols() {
            return Err(Error::Shape(format!("{} angles for {} columns", angles.len(), values.ncols())));
        }
        Ok(CoefficientMatrix {
            values,
            source: h.source.ok_or_else(|| missing("source"))?,
            angles,
        })
    }
}

impl Artifact for ReconImage {
    const KIND: ArtifactKind = ArtifactKind::Image;
    fn matrix(&self) -> &DMatrix<f64> {
        &self.pixels
    }
    fn describe(&self, h: &mut ArtifactHeader) {
        h.pixel_size = Some(self.pixel_size);
    }
    fn from_parts(h: &ArtifactHeader, pixels: DMatrix<f64>) -> Result<Self> {
        Ok(ReconImage {
            pixels,
            pixel_size: h.pixel_size.unwrap_or(1.0),
        })
    }
}

/// Error maps keep NaN outside the mask, so the mask is recovered on load.
impl Artifact for ErrorReport {
    const KIND: ArtifactKind = ArtifactKind::ErrorMap;
    fn matrix(&self) -> &DMatrix<f64> {
        &self.error_map
    }
    fn describe(&self, _: &mut ArtifactHeader) {}
    fn from_parts(_: &ArtifactHeader, map: DMatrix<f64>) -> Result<Self> {
        Ok(crate::recon::report_from_map(map))
    }
}

fn payload_path(base: &Path) -> PathBuf {
    base.with_extension("bin")
}

fn sidecar_path(base: &Path) -> PathBuf {
    base.with_extension("toml")
}

pub fn png_sidecar_path(png: &Path) -> PathBuf {
    png.with_extension("png.toml")
}

fn encode(m: &DMatrix<f64>) -> Vec<u8> {
    let mut bytes = Vec::with_capacity(m.len() * 8);
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            bytes.extend_from_slice(&m[(r, c)].to_le_bytes());
        }
    }
    bytes
}

fn decode(bytes: &[u8], rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_row_iterator(
        rows,
        cols,
        bytes
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("chunk of 8"))),
    )
}

/// Writes `base.bin` and `base.toml`. Any extension on `base` is replaced.
pub fn save<A: Artifact>(artifact: &A, base: impl AsRef<Path>, provenance: &str) -> Result<()> {
    let base = base.as_ref();
    let m = artifact.matrix();
    let mut header = ArtifactHeader::new(A::KIND, m.nrows(), m.ncols());
    header.provenance = provenance.into();
    artifact.describe(&mut header);
    write_pair(base, &header, m)
}

fn write_pair(base: &Path, header: &ArtifactHeader, m: &DMatrix<f64>) -> Result<()> {
    let text = toml::to_string(header)
        .map_err(|e| Error::Numerical(format!("cannot serialize sidecar: {e}")))?;
    let bin = payload_path(base);
    fs::write(&bin, encode(m)).map_err(|e| Error::io(&bin, e))?;
    let side = sidecar_path(base);
    fs::write(&side, text).map_err(|e| Error::io(&side, e))
}

pub fn read_header(base: impl AsRef<Path>) -> Result<ArtifactHeader> {
    let side = sidecar_path(base.as_ref());
    let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    toml::from_str(&text).map_err(|e| Error::Parse {
        path: side,
        line: e.span().map_or(0, |s| text[..s.start].lines().count().max(1)),
        column: 0,
        message: e.message().to_string(),
    })
}

/// Reads a header and its raw matrix, checking dtype and payload length.
pub fn load_raw(base: impl AsRef<Path>) -> Result<(ArtifactHeader, DMatrix<f64>)> {
    let base = base.as_ref();
    let header = read_header(base)?;
    if header.dtype != DTYPE {
        return Err(Error::Config(format!("unsupported dtype `{}`", header.dtype)));
    }
    let bin = payload_path(base);
    let bytes = fs::read(&bin).map_err(|e| Error::io(&bin, e))?;
    let expected = header.rows * header.cols * 8;
    if bytes.len() != expected {
        return Err(Error::Shape(format!(
            "{}: payload has {} bytes, header implies {expected}",
            bin.display(),
            bytes.len()
        )));
    }
    let m = decode(&bytes, header.rows, header.cols);
    Ok((header, m))
}

pub fn load<A: Artifact>(base: impl AsRef<Path>) -> Result<A> {
    let (header, m) = load_raw(base)?;
    if header.kind != A::KIND {
        return Err(Error::Config(format!("expected a {:?} artifact, found {:?}", A::KIND, header.kind)));
    }
    A::from_parts(&header, m)
}

/// Comma-separated matrix, one line per row, 17 significant digits.
pub fn write_csv(m: &DMatrix<f64>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = String::with_capacity(m.len() * 24);
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            if c > 0 {
                text.push(',');
            }
            text.push_str(&format!("{:.16e}", m[(r, c)]));
        }
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[derive(Clone, Debug, PartialEq)]
pub struct CsvOptions {
    pub delimiter: u8,
    /// Leading lines skipped before the numeric table.
    pub header_rows: usize,
    /// View angles in degrees; 0, 1, 2, … when absent.
    pub angles: Option<Vec<f64>>,
}

impl Default for CsvOptions {
    fn default() -> Self {
        CsvOptions {
            delimiter: b',',
            header_rows: 0,
            angles: None,
        }
    }
}

/// Numeric table, detector rows by lines and views by columns.
pub fn read_csv_matrix(path: impl AsRef<Path>, options: &CsvOptions) -> Result<DMatrix<f64>> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(options.delimiter)
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        if i < options.header_rows {
            continue;
        }
        let line = record.position().map_or(i + 1, |p| p.line() as usize);
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        let width = *cols.get_or_insert(record.len());
        if record.len() != width {
            return Err(Error::Parse {
                path: path.into(),
                line,
                column: record.len().min(width) + 1,
                message: format!("row has {} fields, expected {width}", record.len()),
            });
        }
        for (j, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                path: path.into(),
                line,
                column: j + 1,
                message: format!("`{cell}` is not a number"),
            })?;
            data.push(v);
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| Error::Parse {
        path: path.into(),
        line: 0,
        column: 0,
        message: "no numeric rows".into(),
    })?;
    Ok(DMatrix::from_row_slice(rows, cols, &data))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        other => Error::Parse {
            path: path.into(),
            line,
            column: 0,
            message: format!("{other:?}"),
        },
    }
}

/// Imports an externally measured sinogram.
pub fn import_csv_sinogram(path: impl AsRef<Path>, options: &CsvOptions) -> Result<Sinogram> {
    let m = read_csv_matrix(&path, options)?;
    if m.nrows() == 1 && m.ncols() == 1 {
        log::warn!("{}: degenerate 1 × 1 sinogram", path.as_ref().display());
    }
    let angles = match &options.angles {
        Some(a) => a.clone(),
        None => (0..m.ncols()).map(|i| i as f64).collect(),
    };
    Sinogram::new(m, angles)
}

fn tone_map_of(m: &DMatrix<f64>) -> ToneMap {
    let finite = m.iter().copied().filter(|v| v.is_finite());
    let min = finite.clone().fold(f64::INFINITY, f64::min);
    let max = finite.fold(f64::NEG_INFINITY, f64::max);
    if min.is_finite() {
        ToneMap { min, max }
    } else {
        ToneMap { min: 0.0, max: 0.0 }
    }
}

fn gray(v: f64, t: &ToneMap) -> u8 {
    if !v.is_finite() || t.max <= t.min {
        return 0;
    }
    (255.0 * ((v - t.min) / (t.max - t.min)).clamp(0.0, 1.0)).round() as u8
}

/// 8-bit grayscale PNG of `m` with min-max tone mapping. The mapping is
/// recorded in a sidecar next to the image (`name.png` → `name.png.toml`).
pub fn write_png(
    m: &DMatrix<f64>,
    kind: ArtifactKind,
    path: impl AsRef<Path>,
    provenance: &str,
) -> Result<ToneMap> {
    let path = path.as_ref();
    let tone = tone_map_of(m);
    let (w, h) = (m.ncols() as u32, m.nrows() as u32);
    let img = image::GrayImage::from_fn(w, h, |x, y| image::Luma([gray(m[(y as usize, x as usize)], &tone)]));
    img.save_with_format(path, image::ImageFormat::Png).map_err(|e| match e {
        image::ImageError::IoError(source) => Error::io(path, source),
        other => Error::Numerical(format!("{}: {other}", path.display())),
    })?;
    let mut header = ArtifactHeader::new(kind, m.nrows(), m.ncols());
    header.dtype = "u8-png".into();
    header.provenance = provenance.into();
    header.tone_map = Some(tone);
    let text = toml::to_string(&header)
        .map_err(|e| Error::Numerical(format!("cannot serialize sidecar: {e}")))?;
    let side = png_sidecar_path(path);
    fs::write(&side, text).map_err(|e| Error::io(&side, e))?;
    Ok(tone)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rom::basis_from_matrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(rows, cols, |_, _| rng.random::<f64>() * 10f64.powi(rng.random_range(-8..8)))
    }

    #[test]
    fn sinogram_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = Sinogram::new(random(182, 360, 1), Sinogram::uniform_angles(360)).unwrap();
        s.normalized = true;
        let base = dir.path().join("truth");
        save(&s, &base, "seed 1").unwrap();
        assert_eq!(fs::metadata(base.with_extension("bin")).unwrap().len(), 182 * 360 * 8);
        let back: Sinogram = load(&base).unwrap();
        assert_eq!(back, s);
        assert!(back.values.iter().zip(s.values.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
        assert_eq!(read_header(&base).unwrap().provenance, "seed 1");
    }

    #[test]
    fn basis_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let basis = basis_from_matrix(&random(40, 12, 2), 5).unwrap();
        save(&basis, dir.path().join("basis"), "").unwrap();
        let back: PodBasis = load(dir.path().join("basis")).unwrap();
        assert_eq!(back, basis);
    }

    #[test]
    fn error_map_round_trip_keeps_mask() {
        let dir = tempfile::tempdir().unwrap();
        let truth = ReconImage {
            pixels: DMatrix::from_fn(6, 6, |r, c| (r * c) as f64),
            pixel_size: 1.0,
        };
        let approx = ReconImage {
            pixels: truth.pixels.map(|v| v * 1.05 + 0.1),
            pixel_size: 1.0,
        };
        let rep = crate::recon::error_map(&approx, &truth).unwrap();
        save(&rep, dir.path().join("err"), "").unwrap();
        let back: ErrorReport = load(dir.path().join("err")).unwrap();
        assert_eq!(back.mask, rep.mask);
        assert_eq!(back.curve, rep.curve);
    }

    #[test]
    fn wrong_kind_and_truncated_payload_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let base = dir.path().join("s");
        let s = Sinogram::new(random(4, 3, 3), vec![0.0, 1.0, 2.0]).unwrap();
        save(&s, &base, "").unwrap();
        assert!(matches!(load::<PodBasis>(&base), Err(Error::Config(_))));
        fs::write(base.with_extension("bin"), [0u8; 10]).unwrap();
        assert!(matches!(load::<Sinogram>(&base), Err(Error::Shape(_))));
        assert!(matches!(load::<Sinogram>(dir.path().join("absent")), Err(Error::Io { .. })));
    }

    #[test]
    fn csv_round_trip_within_1e_12() {
        let dir = tempfile::tempdir().unwrap();
        let m = random(182, 360, 4);
        let path = dir.path().join("s.csv");
        write_csv(&m, &path).unwrap();
        let s = import_csv_sinogram(&path, &CsvOptions::default()).unwrap();
        assert_eq!(s.values.shape(), (182, 360));
        assert_eq!(s.angles[359], 359.0);
        for (a, b) in s.values.iter().zip(m.iter()) {
            assert!((a - b).abs() <= 1e-12 * b.abs());
        }
    }

    #[test]
    fn csv_errors_name_line_and_column() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        fs::write(&path, "1,2,3\n4,x,6\n").unwrap();
        match import_csv_sinogram(&path, &CsvOptions::default()) {
            Err(Error::Parse { line, column, .. }) => assert_eq!((line, column), (2, 2)),
            other => panic!("{other:?}"),
        }
        fs::write(&path, "1,2,3\n4,5\n").unwrap();
        assert!(matches!(
            import_csv_sinogram(&path, &CsvOptions::default()),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn csv_options_and_degenerate_table() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.tsv");
        fs::write(&path, "detector\tview\n1\t2\n3\t4\n").unwrap();
        let opts = CsvOptions {
            delimiter: b'\t',
            header_rows: 1,
            angles: Some(vec![0.0, 180.0]),
        };
        let s = import_csv_sinogram(&path, &opts).unwrap();
        assert_eq!(s.values, DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]));
        assert_eq!(s.angles, vec![0.0, 180.0]);
        fs::write(&path, "7\n").unwrap();
        let one = import_csv_sinogram(&path, &CsvOptions::default()).unwrap();
        assert_eq!(one.values.shape(), (1, 1));
    }

    #[test]
    fn png_records_tone_map() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = DMatrix::from_fn(5, 7, |r, c| (r + c) as f64 - 2.0);
        m[(0, 0)] = f64::NAN;
        let path = dir.path().join("map.png");
        let tone = write_png(&m, ArtifactKind::ErrorMap, &path, "").unwrap();
        assert_eq!(tone, ToneMap { min: -1.0, max: 8.0 });
        let img = image::open(&path).unwrap().to_luma8();
        assert_eq!(img.dimensions(), (7, 5));
        assert_eq!(img.get_pixel(6, 4).0[0], 255);
        let text = fs::read_to_string(png_sidecar_path(&path)).unwrap();
        let header: ArtifactHeader = toml::from_str(&text).unwrap();
        assert_eq!(header.tone_map, Some(tone));
        assert_eq!(header.kind, ArtifactKind::ErrorMap);
    }
}
