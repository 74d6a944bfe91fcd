//! On-disk formats: a JSON header beside a raw little-endian `f32` array.
//!
//! `<base>.json` holds the geometry, `dtype` (`"f32"` for real spectra,
//! `"c64"` for interleaved complex) and `byte_order` (`"little"`), plus an
//! optional dispersion polynomial. `<base>.raw` holds `n_x · n_z` samples,
//! A-scan index slowest. Every writer goes through a temporary file in the
//! destination directory and a rename.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use image::{ImageBuffer, ImageFormat, Luma};
use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::data::{make_grid, DispersionModel, GridSpec, RealSpectra, SusceptibilityImage};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F32,
    C64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ByteOrder {
    Little,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispersionHeader {
    pub k_0: f64,
    pub coeffs: Vec<f64>,
}

/// Contents of a `.json` sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub n_x: usize,
    pub n_z: usize,
    pub k_min: f64,
    pub k_max: f64,
    pub lateral_pitch: f64,
    pub focal_z_index: usize,
    pub dtype: Dtype,
    pub byte_order: ByteOrder,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dispersion: Option<DispersionHeader>,
}

impl Header {
    pub fn new(grid: &GridSpec, dtype: Dtype, d: Option<&DispersionModel>) -> Self {
        Header {
            n_x: grid.n_x(),
            n_z: grid.n_z(),
            k_min: grid.k_min(),
            k_max: grid.k_max(),
            lateral_pitch: grid.lateral_pitch(),
            focal_z_index: grid.focal_z_index(),
            dtype,
            byte_order: ByteOrder::Little,
            dispersion: d.map(|d| DispersionHeader {
                k_0: d.k_0(),
                coeffs: d.coeffs().to_vec(),
            }),
        }
    }

    pub fn grid(&self) -> Result<GridSpec> {
        make_grid(self.n_x, self.n_z, self.k_min, self.k_max, self.lateral_pitch, self.focal_z_index)
    }

    pub fn dispersion_model(&self, grid: &GridSpec) -> Result<Option<DispersionModel>> {
        self.dispersion
            .as_ref()
            .map(|h| DispersionModel::new(grid, h.k_0, &h.coeffs))
            .transpose()
    }
}

/// `foo`, `foo.json` and `foo.raw` all name the pair `foo.json` + `foo.raw`.
pub fn sidecar_paths(base: &Path) -> (PathBuf, PathBuf) {
    let stem = match base.extension().and_then(|e| e.to_str()) {
        Some("json") | Some("raw") => base.with_extension(""),
        _ => base.to_path_buf(),
    };
    let mut json = stem.clone().into_os_string();
    json.push(".json");
    let mut raw = stem.into_os_string();
    raw.push(".raw");
    (PathBuf::from(json), PathBuf::from(raw))
}

/// Writes `bytes` to `path` via a sibling temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

fn read_header(path: &Path) -> Result<Header> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Header {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

fn read_samples(path: &Path, expected: usize) -> Result<Vec<f32>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() != expected * 4 {
        return Err(Error::Header {
            path: path.to_path_buf(),
            reason: format!("expected {} bytes of data, found {}", expected * 4, bytes.len()),
        });
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

/// A loaded array with its header.
#[derive(Debug, Clone)]
pub enum Loaded {
    Real(RealSpectra),
    Complex(SusceptibilityImage),
}

/// Reads a sidecar pair of either dtype.
pub fn read_array(base: &Path) -> Result<(Header, Loaded)> {
    let (json, raw) = sidecar_paths(base);
    let header = read_header(&json)?;
    let grid = Arc::new(header.grid().map_err(|e| Error::Header {
        path: json.clone(),
        reason: e.to_string(),
    })?);
    let n = header.n_x * header.n_z;
    let loaded = match header.dtype {
        Dtype::F32 => {
            let v = read_samples(&raw, n)?;
            let data = Array2::from_shape_vec(grid.shape(), v.into_iter().map(f64::from).collect())
                .expect("length checked");
            Loaded::Real(RealSpectra::new(grid, data)?)
        }
        Dtype::C64 => {
            let v = read_samples(&raw, 2 * n)?;
            let vals = v
                .chunks_exact(2)
                .map(|c| Complex64::new(c[0] as f64, c[1] as f64))
                .collect();
            let data = Array2::from_shape_vec(grid.shape(), vals).expect("length checked");
            Loaded::Complex(SusceptibilityImage::new(grid, data)?)
        }
    };
    Ok((header, loaded))
}

/// Reads real spectra and any dispersion recorded in the header.
pub fn read_real(base: &Path) -> Result<(RealSpectra, Option<DispersionModel>)> {
    let (header, loaded) = read_array(base)?;
    match loaded {
        Loaded::Real(s) => {
            let d = header.dispersion_model(s.grid())?;
            Ok((s, d))
        }
        Loaded::Complex(_) => Err(Error::Header {
            path: sidecar_paths(base).0,
            reason: "expected dtype f32 (real spectra), found c64".into(),
        }),
    }
}

/// Reads a complex image.
pub fn read_image(base: &Path) -> Result<SusceptibilityImage> {
    match read_array(base)?.1 {
        Loaded::Complex(img) => Ok(img),
        Loaded::Real(_) => Err(Error::Header {
            path: sidecar_paths(base).0,
            reason: "expected dtype c64 (complex image), found f32".into(),
        }),
    }
}

fn write_pair(base: &Path, header: &Header, samples: impl Iterator<Item = f64>) -> Result<()> {
    let (json, raw) = sidecar_paths(base);
    let mut bytes = Vec::new();
    for v in samples {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    let mut text = serde_json::to_string_pretty(header)?;
    text.push('\n');
    write_atomic(&raw, &bytes)?;
    write_atomic(&json, text.as_bytes())
}

pub fn write_real(base: &Path, s: &RealSpectra, d: Option<&DispersionModel>) -> Result<()> {
    let header = Header::new(s.grid(), Dtype::F32, d);
    write_pair(base, &header, s.data().iter().copied())
}

pub fn write_image(base: &Path, img: &SusceptibilityImage, d: Option<&DispersionModel>) -> Result<()> {
    let header = Header::new(img.grid(), Dtype::C64, d);
    write_pair(base, &header, img.data().iter().flat_map(|c| [c.re, c.im]))
}

/// 16-bit grayscale PNG with lateral position across and depth down.
pub fn write_png16(path: &Path, img: &Array2<u16>) -> Result<()> {
    let (n_x, n_z) = img.dim();
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_fn(n_x as u32, n_z as u32, |x, z| Luma([img[[x as usize, z as usize]]]));
    let mut out = std::io::Cursor::new(Vec::new());
    buf.write_to(&mut out, ImageFormat::Png)?;
    write_atomic(path, &out.into_inner())
}

/// Serialises `rows` as CSV with a header row and writes atomically.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::io(path, e.into_error()))?;
    write_atomic(path, &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sidecar_names() {
        let (j, r) = sidecar_paths(Path::new("a/b.raw"));
        assert_eq!(j, PathBuf::from("a/b.json"));
        assert_eq!(r, PathBuf::from("a/b.raw"));
        let (j, _) = sidecar_paths(Path::new("scan.v2"));
        assert_eq!(j, PathBuf::from("scan.v2.json"));
    }

    #[test]
    fn real_round_trip_with_dispersion() {
        let dir = tempfile::tempdir().unwrap();
        let g = Arc::new(make_grid(3, 8, 7.5, 8.2, 2.0, 4).unwrap());
        let data = Array2::from_shape_fn(g.shape(), |(x, z)| x as f64 - 0.25 * z as f64);
        let s = RealSpectra::new(g.clone(), data).unwrap();
        let d = DispersionModel::new(&g, 7.8, &[120.0, -3.0]).unwrap();
        let base = dir.path().join("s");
        write_real(&base, &s, Some(&d)).unwrap();
        let (back, dback) = read_real(&base).unwrap();
        assert_eq!(back, s);
        assert_eq!(dback.unwrap(), d);
        assert!(read_image(&base).is_err());
    }

    #[test]
    fn truncated_raw_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let g = Arc::new(make_grid(2, 4, 7.5, 8.2, 2.0, 2).unwrap());
        let base = dir.path().join("img");
        write_image(&base, &SusceptibilityImage::zeros(g), None).unwrap();
        fs::write(dir.path().join("img.raw"), [0u8; 10]).unwrap();
        assert!(matches!(read_array(&base), Err(Error::Header { .. })));
    }

    #[test]
    fn bad_byte_order_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let g = Arc::new(make_grid(2, 4, 7.5, 8.2, 2.0, 2).unwrap());
        let base = dir.path().join("img");
        write_image(&base, &SusceptibilityImage::zeros(g), None).unwrap();
        let json = dir.path().join("img.json");
        let text = fs::read_to_string(&json).unwrap().replace("little", "big");
        fs::write(&json, text).unwrap();
        assert!(matches!(read_array(&base), Err(Error::Header { .. })));
    }
}
