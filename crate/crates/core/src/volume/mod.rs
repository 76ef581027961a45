//! CT volumes, lesion masks and the preprocessing chain
//! (resample -> resize -> window -> mask).
//!
//! Voxel data is stored x-fastest: `index = x + X * (y + Y * z)`, with `z`
//! the cranio-caudal axis. `origin` is the physical position (mm) of the
//! centre of voxel `(0, 0, 0)`; a volume with `n` voxels of spacing `s` along
//! an axis covers `[origin - s/2, origin + (n - 1/2) s]`.

mod intensity;
mod resample;
pub mod rvol;

pub use intensity::{apply_mask, window, window_soft_tissue, SOFT_TISSUE_LEVEL, SOFT_TISSUE_WIDTH};
pub use resample::{align_mask, isotropic_geometry, resample_isotropic, resample_mask_to, resample_to, resize_to_grid};
pub use rvol::{read_mask, read_volume, write_mask, write_volume};

use crate::error::{Error, Result};

/// Target grid of the encoder input chain.
pub const MODEL_GRID: [usize; 3] = [224, 224, 128];

/// Shape and physical placement of a voxel grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Geometry {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub origin: [f64; 3],
}

impl Geometry {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], origin: [f64; 3]) -> Result<Self> {
        let geom = Geometry { dims, spacing, origin };
        geom.validate()?;
        Ok(geom)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.contains(&0) {
            return Err(Error::InvalidVolume(format!("zero dimension in {:?}", self.dims)));
        }
        if self.spacing.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
            return Err(Error::InvalidVolume(format!("spacing must be positive, got {:?}", self.spacing)));
        }
        if self.origin.iter().any(|o| !o.is_finite()) {
            return Err(Error::InvalidVolume(format!("non-finite origin {:?}", self.origin)));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    /// Physical extent (mm) along each axis.
    pub fn extent(&self) -> [f64; 3] {
        [0, 1, 2].map(|a| self.dims[a] as f64 * self.spacing[a])
    }

    /// Lower corner of the covered box.
    pub fn lower_corner(&self) -> [f64; 3] {
        [0, 1, 2].map(|a| self.origin[a] - 0.5 * self.spacing[a])
    }

    /// Physical centre (mm) of voxel index `i` along `axis`.
    #[inline]
    pub fn center(&self, axis: usize, i: usize) -> f64 {
        self.origin[axis] + i as f64 * self.spacing[axis]
    }

    /// Geometry covering the same box with new dims.
    pub fn regrid(&self, dims: [usize; 3]) -> Geometry {
        let extent = self.extent();
        let lower = self.lower_corner();
        let spacing = [0, 1, 2].map(|a| extent[a] / dims[a] as f64);
        let origin = [0, 1, 2].map(|a| lower[a] + 0.5 * spacing[a]);
        Geometry { dims, spacing, origin }
    }

    pub fn same_grid(&self, other: &Geometry, tol: f64) -> bool {
        self.dims == other.dims
            && (0..3).all(|a| {
                (self.spacing[a] - other.spacing[a]).abs() <= tol
                    && (self.origin[a] - other.origin[a]).abs() <= tol
            })
    }
}

/// A scalar field on a [`Geometry`].
#[derive(Clone, Debug, PartialEq)]
pub struct Volume<T> {
    pub geometry: Geometry,
    pub data: Vec<T>,
}

impl<T: Copy> Volume<T> {
    pub fn new(geometry: Geometry, data: Vec<T>) -> Result<Self> {
        geometry.validate()?;
        if data.len() != geometry.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} voxels for dims {:?}",
                data.len(),
                geometry.dims
            )));
        }
        Ok(Volume { geometry, data })
    }

    pub fn filled(geometry: Geometry, value: T) -> Self {
        Volume {
            data: vec![value; geometry.len()],
            geometry,
        }
    }

    pub fn from_fn(geometry: Geometry, mut f: impl FnMut(usize, usize, usize) -> T) -> Self {
        let [nx, ny, nz] = geometry.dims;
        let mut data = Vec::with_capacity(geometry.len());
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    data.push(f(x, y, z));
                }
            }
        }
        Volume { geometry, data }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.geometry.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.geometry.spacing
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> T {
        self.data[self.geometry.index(x, y, z)]
    }

    /// Contiguous axial slice `z`.
    pub fn axial(&self, z: usize) -> &[T] {
        let plane = self.geometry.dims[0] * self.geometry.dims[1];
        &self.data[z * plane..(z + 1) * plane]
    }
}

/// CT intensities in Hounsfield units.
pub type CtVolume = Volume<f32>;

/// Binary lesion labels (0 or 1).
pub type LesionMask = Volume<u8>;

impl Volume<f32> {
    pub fn check_finite(&self) -> Result<()> {
        match self.data.iter().position(|v| !v.is_finite()) {
            Some(index) => Err(Error::NonFiniteValue { index }),
            None => Ok(()),
        }
    }
}

impl Volume<u8> {
    pub fn check_binary(&self) -> Result<()> {
        match self.data.iter().position(|&v| v > 1) {
            Some(i) => Err(Error::InvalidVolume(format!("mask value {} at element {i}", self.data[i]))),
            None => Ok(()),
        }
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v == 1).count()
    }
}

/// Windowed intensities in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedVolume(pub(crate) Volume<f32>);

impl NormalizedVolume {
    pub fn volume(&self) -> &Volume<f32> {
        &self.0
    }

    pub fn into_inner(self) -> Volume<f32> {
        self.0
    }

    /// Wraps data that is already normalized. Fails on values outside `[0, 1]`.
    pub fn from_volume(vol: Volume<f32>) -> Result<Self> {
        if let Some(i) = vol.data.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidVolume(format!(
                "normalized value {} out of [0, 1] at element {i}",
                vol.data[i]
            )));
        }
        Ok(NormalizedVolume(vol))
    }
}

/// Normalized intensities with background forced to zero.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskedVolume(pub(crate) Volume<f32>);

impl MaskedVolume {
    pub fn volume(&self) -> &Volume<f32> {
        &self.0
    }

    pub fn dims(&self) -> [usize; 3] {
        self.0.geometry.dims
    }
}
