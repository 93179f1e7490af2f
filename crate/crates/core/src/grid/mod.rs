//! Canonical volume/mask representation, physical geometry, preprocessing
//! and file IO shared by every other module.
//!
//! Conventions fixed here and relied on everywhere else:
//! * voxel `(0,0,0)` center sits at the physical origin, axes aligned,
//! * voxel `(i,j,k)` center is at `(i·sx, j·sy, k·sz)` mm,
//! * volumes and masks are immutable after construction.

mod nifti;

pub use nifti::{read_mask, read_volume, write_mask, write_volume};

use crate::error::{Error, Result};
use crate::interp::sample_trilinear_clamp;
use ndarray::Array3;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Modality tag carried by a [`Volume`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Modality {
    Mr,
    Ct,
    /// Synthesized CT produced from MR.
    Sct,
    /// Intra-procedural CT after probe/artifact inpainting.
    InpCt,
    Phantom,
}

impl Default for Modality {
    fn default() -> Self {
        Modality::Phantom
    }
}

/// Scalar 3D image grid with physical spacing in mm/voxel.
#[derive(Debug, Clone)]
pub struct Volume {
    data: Array3<f32>,
    spacing: [f32; 3],
    modality: Modality,
}

impl Volume {
    /// Builds a volume, checking that every voxel is finite and the spacing
    /// is strictly positive.
    pub fn new(data: Array3<f32>, spacing: [f32; 3], modality: Modality) -> Result<Self> {
        if spacing.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::invalid(format!(
                "spacing must be strictly positive, got {spacing:?}"
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("volume contains NaN/Inf voxels".into()));
        }
        Ok(Volume {
            data,
            spacing,
            modality,
        })
    }

    pub fn data(&self) -> &Array3<f32> {
        &self.data
    }

    pub fn spacing(&self) -> [f32; 3] {
        self.spacing
    }

    pub fn modality(&self) -> Modality {
        self.modality
    }

    pub fn shape(&self) -> [usize; 3] {
        let (a, b, c) = self.data.dim();
        [a, b, c]
    }

    /// Physical extent per axis in mm: the interpolation domain
    /// `[0, (n-1)·s]`.
    pub fn extent_mm(&self) -> [f64; 3] {
        let s = self.shape();
        [
            (s[0] - 1) as f64 * self.spacing[0] as f64,
            (s[1] - 1) as f64 * self.spacing[1] as f64,
            (s[2] - 1) as f64 * self.spacing[2] as f64,
        ]
    }

    /// Returns a copy with a different modality tag.
    pub fn retagged(&self, modality: Modality) -> Volume {
        Volume {
            data: self.data.clone(),
            spacing: self.spacing,
            modality,
        }
    }

    /// Replaces the voxel data, keeping geometry, re-running invariants.
    pub fn with_data(&self, data: Array3<f32>) -> Result<Volume> {
        if data.dim() != self.data.dim() {
            return Err(Error::shape(
                &self.shape(),
                &[data.dim().0, data.dim().1, data.dim().2],
                "with_data",
            ));
        }
        Volume::new(data, self.spacing, self.modality)
    }
}

/// Dense {0,1} validity/ROI mask on the same grid contract as [`Volume`].
#[derive(Debug, Clone)]
pub struct BinaryMask {
    data: Array3<u8>,
    spacing: [f32; 3],
}

impl BinaryMask {
    pub fn new(data: Array3<u8>, spacing: [f32; 3]) -> Result<Self> {
        if spacing.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::invalid(format!(
                "spacing must be strictly positive, got {spacing:?}"
            )));
        }
        if data.iter().any(|&v| v > 1) {
            return Err(Error::invalid("mask values must be exactly 0 or 1"));
        }
        Ok(BinaryMask { data, spacing })
    }

    pub fn data(&self) -> &Array3<u8> {
        &self.data
    }

    pub fn spacing(&self) -> [f32; 3] {
        self.spacing
    }

    pub fn shape(&self) -> [usize; 3] {
        let (a, b, c) = self.data.dim();
        [a, b, c]
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v == 1).count()
    }

    /// Complement mask (1 ↔ 0). Probe masks arrive as "1 = probe region"
    /// and are inverted to "1 = valid" at the inpainting boundary.
    pub fn complement(&self) -> BinaryMask {
        BinaryMask {
            data: self.data.mapv(|v| 1 - v),
            spacing: self.spacing,
        }
    }
}

/// Named physical-space points in mm.
#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkSet {
    pub points: Vec<[f64; 3]>,
    pub names: Vec<String>,
}

impl LandmarkSet {
    pub fn new(points: Vec<[f64; 3]>, names: Vec<String>) -> Result<Self> {
        if !names.is_empty() && names.len() != points.len() {
            return Err(Error::invalid(format!(
                "landmark names ({}) do not match point count ({})",
                names.len(),
                points.len()
            )));
        }
        let names = if names.is_empty() {
            (0..points.len()).map(|i| format!("p{i}")).collect()
        } else {
            names
        };
        Ok(LandmarkSet { points, names })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Checks that every point lies inside the volume's physical extent.
    pub fn check_inside(&self, vol: &Volume) -> Result<()> {
        let ext = vol.extent_mm();
        for (p, name) in self.points.iter().zip(&self.names) {
            for a in 0..3 {
                if p[a] < 0.0 || p[a] > ext[a] {
                    return Err(Error::invalid(format!(
                        "landmark {name} at {p:?} outside physical extent {ext:?}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Writes `name,x_mm,y_mm,z_mm` lines.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("name,x_mm,y_mm,z_mm\n");
        for (p, name) in self.points.iter().zip(&self.names) {
            out.push_str(&format!("{},{:.17e},{:.17e},{:.17e}\n", name, p[0], p[1], p[2]));
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut points = Vec::new();
        let mut names = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || (lineno == 0 && line.starts_with("name")) {
                continue;
            }
            let parts: Vec<&str> = line.split(',').collect();
            if parts.len() != 4 {
                return Err(Error::Parse {
                    offset: lineno,
                    message: format!("landmark line {lineno} has {} fields, expected 4", parts.len()),
                });
            }
            let coord = |s: &str| -> Result<f64> {
                s.trim().parse::<f64>().map_err(|e| Error::Parse {
                    offset: lineno,
                    message: format!("bad coordinate '{s}': {e}"),
                })
            };
            names.push(parts[0].to_string());
            points.push([coord(parts[1])?, coord(parts[2])?, coord(parts[3])?]);
        }
        LandmarkSet::new(points, names)
    }
}

/// Clamps every voxel into `[lo, hi]`.
pub fn clamp_intensity(v: &Volume, lo: f32, hi: f32) -> Result<Volume> {
    if !(lo < hi) {
        return Err(Error::invalid(format!(
            "clamp range requires lo < hi, got [{lo}, {hi}]"
        )));
    }
    let data = v.data.mapv(|x| x.clamp(lo, hi));
    v.with_data(data)
}

/// Affinely rescales intensities so min → 0 and max → 1.
///
/// A constant volume cannot be rescaled; it maps to all zeros and the
/// returned flag is true.
pub fn normalize_unit(v: &Volume) -> (Volume, bool) {
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for &x in v.data.iter() {
        let x = x as f64;
        if x < min {
            min = x;
        }
        if x > max {
            max = x;
        }
    }
    if max <= min {
        let zeros = Array3::<f32>::zeros(v.data.dim());
        let out = Volume {
            data: zeros,
            spacing: v.spacing,
            modality: v.modality,
        };
        return (out, true);
    }
    let scale = 1.0 / (max - min);
    let data = v.data.mapv(|x| (((x as f64) - min) * scale) as f32);
    let out = Volume {
        data,
        spacing: v.spacing,
        modality: v.modality,
    };
    (out, false)
}

/// Trilinear resampling onto a new grid.
///
/// Voxel `(0,0,0)` of the new grid coincides with voxel `(0,0,0)` of the
/// input; samples are taken at the new voxel centers in physical space with
/// clamped interpolation.
pub fn resample(v: &Volume, new_shape: [usize; 3], new_spacing: [f32; 3]) -> Result<Volume> {
    if new_shape.iter().any(|&n| n == 0) {
        return Err(Error::invalid(format!(
            "resample target shape must be positive, got {new_shape:?}"
        )));
    }
    if new_spacing.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
        return Err(Error::invalid(format!(
            "resample target spacing must be positive, got {new_spacing:?}"
        )));
    }
    let src = v.data.view();
    let [sx, sy, sz] = v.spacing;
    let mut out = Array3::<f32>::zeros((new_shape[0], new_shape[1], new_shape[2]));
    for i in 0..new_shape[0] {
        let px = i as f64 * new_spacing[0] as f64 / sx as f64;
        for j in 0..new_shape[1] {
            let py = j as f64 * new_spacing[1] as f64 / sy as f64;
            for k in 0..new_shape[2] {
                let pz = k as f64 * new_spacing[2] as f64 / sz as f64;
                out[[i, j, k]] = sample_trilinear_clamp(&src, px, py, pz) as f32;
            }
        }
    }
    Volume::new(out, new_spacing, v.modality)
}

/// Nearest-neighbour resampling for label masks onto a new grid.
pub fn resample_mask(m: &BinaryMask, new_shape: [usize; 3], new_spacing: [f32; 3]) -> Result<BinaryMask> {
    if new_shape.iter().any(|&n| n == 0) || new_spacing.iter().any(|&s| !(s > 0.0)) {
        return Err(Error::invalid("resample target must be positive".to_string()));
    }
    let (nx, ny, nz) = m.data.dim();
    let [sx, sy, sz] = m.spacing;
    let mut out = Array3::<u8>::zeros((new_shape[0], new_shape[1], new_shape[2]));
    for i in 0..new_shape[0] {
        let px = (i as f64 * new_spacing[0] as f64 / sx as f64).round() as isize;
        for j in 0..new_shape[1] {
            let py = (j as f64 * new_spacing[1] as f64 / sy as f64).round() as isize;
            for k in 0..new_shape[2] {
                let pz = (k as f64 * new_spacing[2] as f64 / sz as f64).round() as isize;
                let inside = px >= 0
                    && px < nx as isize
                    && py >= 0
                    && py < ny as isize
                    && pz >= 0
                    && pz < nz as isize;
                out[[i, j, k]] = if inside {
                    m.data[[px as usize, py as usize, pz as usize]]
                } else {
                    0
                };
            }
        }
    }
    BinaryMask::new(out, new_spacing)
}
