//! Per-patient preprocessing: volume and mask in, slice stack and lesion
//! morphology out.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoder::{encode, Embedding, EncoderParams};
use crate::error::{Error, Result};
use crate::morphology::{self, Connectivity, MorphologyRecord};
use crate::sliceselect::{lesion_density_profile, select_top_k, stack_slices, SliceStack, STACK_DEPTH};
use crate::volume::{
    align_mask, apply_mask, resample_isotropic, resample_mask_to, resize_to_grid, window, CtVolume, LesionMask,
    MODEL_GRID, SOFT_TISSUE_LEVEL, SOFT_TISSUE_WIDTH,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    pub window_level: f64,
    pub window_width: f64,
    pub grid: [usize; 3],
    pub isotropic_mm: f64,
    /// Connectivity for the largest-component fraction (6, 18 or 26).
    pub connectivity: u8,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            window_level: SOFT_TISSUE_LEVEL,
            window_width: SOFT_TISSUE_WIDTH,
            grid: MODEL_GRID,
            isotropic_mm: 1.0,
            connectivity: 26,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        Connectivity::try_from(self.connectivity)?;
        if !(self.window_width > 0.0 && self.window_width.is_finite()) {
            return Err(Error::Config(format!("window width must be positive, got {}", self.window_width)));
        }
        if !(self.isotropic_mm > 0.0 && self.isotropic_mm.is_finite()) {
            return Err(Error::Config(format!("isotropic spacing must be positive, got {}", self.isotropic_mm)));
        }
        if self.grid.contains(&0) || self.grid[2] < STACK_DEPTH {
            return Err(Error::Config(format!("invalid grid {:?}", self.grid)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Preprocessed {
    pub stack: SliceStack,
    /// Measured on the isotropic grid, before resizing.
    pub morphology: MorphologyRecord,
}

/// align -> isotropic resample -> resize -> window -> mask -> top-3 slices.
/// Fails with `InsufficientLesionSlices` before any morphology is computed
/// when the lesion spans fewer than three slices of the model grid.
pub fn preprocess_patient(ct: &CtVolume, mask: &LesionMask, cfg: &PreprocessConfig) -> Result<Preprocessed> {
    cfg.validate()?;
    ct.check_finite()?;
    mask.check_binary()?;
    let aligned = align_mask(mask, ct)?;
    let iso_ct = resample_isotropic(ct, cfg.isotropic_mm)?;
    let iso_mask = resample_mask_to(&aligned, iso_ct.geometry)?;

    let grid_ct = resize_to_grid(&iso_ct, cfg.grid)?;
    let grid_mask = resample_mask_to(&iso_mask, grid_ct.geometry)?;
    let indices = select_top_k(&lesion_density_profile(&grid_mask), STACK_DEPTH)?;

    let normalized = window(&grid_ct, cfg.window_level, cfg.window_width)?;
    let masked = apply_mask(&normalized, &grid_mask)?;
    let stack = stack_slices(&masked, &indices)?;
    let morphology = morphology::measure(&iso_mask, Connectivity::try_from(cfg.connectivity)?)?;
    Ok(Preprocessed { stack, morphology })
}

/// Encodes stacks in parallel, preserving order.
pub fn encode_all(stacks: &[&SliceStack], params: &EncoderParams) -> Result<Vec<Embedding>> {
    stacks.par_iter().map(|s| encode(s, params)).collect()
}
