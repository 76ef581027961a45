//! Lesion-density slice selection and 2.5D stacking.
//!
//! Density is the raw lesion-voxel count of an axial slice; every slice of
//! the resized grid has the same in-plane area, so counts rank the same way
//! as fractions.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{rvol, Geometry, LesionMask, MaskedVolume, Volume};

/// Number of slices stacked into channels.
pub const STACK_DEPTH: usize = 3;

/// Three axial slices stored as channel planes, `index = x + X * (y + Y * c)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SliceStack {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
    /// Source z-index of each channel, strictly increasing.
    pub slice_indices: [usize; STACK_DEPTH],
}

impl SliceStack {
    pub fn channel(&self, c: usize) -> &[f32] {
        let plane = self.width * self.height;
        &self.data[c * plane..(c + 1) * plane]
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f32 {
        self.data[x + self.width * (y + self.height * c)]
    }

    /// Writes `<stem>.rvol` (shape X,Y,3) and `<stem>.json` with the indices.
    pub fn save(&self, rvol_path: &Path) -> Result<()> {
        let geometry = Geometry::new([self.width, self.height, STACK_DEPTH], [1.0; 3], [0.0; 3])?;
        rvol::write_volume(
            rvol_path,
            &Volume {
                geometry,
                data: self.data.clone(),
            },
        )?;
        let meta = StackMeta {
            slice_indices: self.slice_indices,
        };
        let side = sidecar_path(rvol_path);
        std::fs::write(&side, serde_json::to_vec_pretty(&meta)?).map_err(|e| Error::io(&side, e))
    }

    pub fn load(rvol_path: &Path) -> Result<SliceStack> {
        let vol = rvol::read_volume(rvol_path)?;
        let [w, h, d] = vol.geometry.dims;
        if d != STACK_DEPTH {
            return Err(Error::ShapeMismatch(format!("slice stack depth {d}, expected {STACK_DEPTH}")));
        }
        let side = sidecar_path(rvol_path);
        let text = std::fs::read(&side).map_err(|e| Error::io(&side, e))?;
        let meta: StackMeta = serde_json::from_slice(&text)?;
        check_increasing(&meta.slice_indices)?;
        Ok(SliceStack {
            width: w,
            height: h,
            data: vol.data,
            slice_indices: meta.slice_indices,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct StackMeta {
    slice_indices: [usize; STACK_DEPTH],
}

pub fn sidecar_path(rvol_path: &Path) -> std::path::PathBuf {
    rvol_path.with_extension("json")
}

/// Lesion voxels per axial slice.
pub fn lesion_density_profile(mask: &LesionMask) -> Vec<usize> {
    let d = mask.geometry.dims[2];
    (0..d)
        .map(|z| mask.axial(z).iter().filter(|&&v| v == 1).count())
        .collect()
}

/// The `k` slices with the largest counts (ties go to the smaller z), in
/// ascending z order.
pub fn select_top_k(profile: &[usize], k: usize) -> Result<Vec<usize>> {
    let nonzero = profile.iter().filter(|&&c| c > 0).count();
    if nonzero < k {
        return Err(Error::InsufficientLesionSlices { needed: k, found: nonzero });
    }
    let mut order: Vec<usize> = (0..profile.len()).collect();
    order.sort_by(|&a, &b| profile[b].cmp(&profile[a]).then(a.cmp(&b)));
    let mut picked = order[..k].to_vec();
    picked.sort_unstable();
    Ok(picked)
}

fn check_increasing(indices: &[usize]) -> Result<()> {
    if indices.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidSliceIndices(format!("non-increasing indices {indices:?}")));
    }
    Ok(())
}

pub fn stack_slices(vol: &MaskedVolume, indices: &[usize]) -> Result<SliceStack> {
    if indices.len() != STACK_DEPTH {
        return Err(Error::InvalidSliceIndices(format!(
            "expected {STACK_DEPTH} indices, got {}",
            indices.len()
        )));
    }
    check_increasing(indices)?;
    let v = vol.volume();
    let [w, h, d] = v.geometry.dims;
    if let Some(&bad) = indices.iter().find(|&&z| z >= d) {
        return Err(Error::InvalidSliceIndices(format!("index {bad} out of range for depth {d}")));
    }
    let mut data = Vec::with_capacity(w * h * STACK_DEPTH);
    for &z in indices {
        data.extend_from_slice(v.axial(z));
    }
    Ok(SliceStack {
        width: w,
        height: h,
        data,
        slice_indices: [indices[0], indices[1], indices[2]],
    })
}
