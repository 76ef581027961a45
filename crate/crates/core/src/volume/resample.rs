use super::{CtVolume, Geometry, LesionMask, Volume};
use crate::error::{Error, Result};

/// Per-axis interpolation stencil: lower index, upper index, upper weight.
fn linear_stencil(src: &Geometry, dst: &Geometry, axis: usize) -> Vec<(usize, usize, f64)> {
    let n = src.dims[axis];
    let max = (n - 1) as f64;
    (0..dst.dims[axis])
        .map(|j| {
            let c = ((dst.center(axis, j) - src.origin[axis]) / src.spacing[axis]).clamp(0.0, max);
            let i0 = c.floor() as usize;
            let i1 = (i0 + 1).min(n - 1);
            (i0, i1, c - i0 as f64)
        })
        .collect()
}

fn nearest_stencil(src: &Geometry, dst: &Geometry, axis: usize) -> Vec<usize> {
    let max = (src.dims[axis] - 1) as f64;
    (0..dst.dims[axis])
        .map(|j| {
            let c = (dst.center(axis, j) - src.origin[axis]) / src.spacing[axis];
            // round half up, with slack for representation error at exact halves
            (c + 0.5 + 1e-9).floor().clamp(0.0, max) as usize
        })
        .collect()
}

/// Trilinear resampling onto an arbitrary grid, clamping to the edge outside
/// the source support.
pub fn resample_to(vol: &CtVolume, target: Geometry) -> Result<CtVolume> {
    vol.geometry.validate()?;
    target.validate()?;
    let src = &vol.geometry;
    let sx = linear_stencil(src, &target, 0);
    let sy = linear_stencil(src, &target, 1);
    let sz = linear_stencil(src, &target, 2);
    let [nx, ny, _] = src.dims;
    let plane = nx * ny;
    let at = |x: usize, y: usize, z: usize| vol.data[x + nx * y + plane * z] as f64;

    let mut data = Vec::with_capacity(target.len());
    for &(z0, z1, wz) in &sz {
        for &(y0, y1, wy) in &sy {
            for &(x0, x1, wx) in &sx {
                let c00 = at(x0, y0, z0) * (1.0 - wx) + at(x1, y0, z0) * wx;
                let c10 = at(x0, y1, z0) * (1.0 - wx) + at(x1, y1, z0) * wx;
                let c01 = at(x0, y0, z1) * (1.0 - wx) + at(x1, y0, z1) * wx;
                let c11 = at(x0, y1, z1) * (1.0 - wx) + at(x1, y1, z1) * wx;
                let c0 = c00 * (1.0 - wy) + c10 * wy;
                let c1 = c01 * (1.0 - wy) + c11 * wy;
                data.push((c0 * (1.0 - wz) + c1 * wz) as f32);
            }
        }
    }
    Ok(Volume {
        geometry: target,
        data,
    })
}

/// Geometry of the isotropic grid covering `geom`'s box from its lower corner.
pub fn isotropic_geometry(geom: &Geometry, target_mm: f64) -> Geometry {
    let lower = geom.lower_corner();
    let dims = [0, 1, 2].map(|a| ((geom.dims[a] as f64 * geom.spacing[a] / target_mm).round() as usize).max(1));
    Geometry {
        dims,
        spacing: [target_mm; 3],
        origin: lower.map(|l| l + 0.5 * target_mm),
    }
}

/// Resamples to `target_mm` isotropic spacing with trilinear interpolation.
pub fn resample_isotropic(vol: &CtVolume, target_mm: f64) -> Result<CtVolume> {
    if !(target_mm > 0.0 && target_mm.is_finite()) {
        return Err(Error::InvalidVolume(format!("target spacing must be > 0, got {target_mm}")));
    }
    vol.geometry.validate()?;
    resample_to(vol, isotropic_geometry(&vol.geometry, target_mm))
}

/// Scales the full physical extent onto `dims` voxels (per-axis factors may
/// differ); spacing becomes extent / dims.
pub fn resize_to_grid(vol: &CtVolume, dims: [usize; 3]) -> Result<CtVolume> {
    if dims.contains(&0) {
        return Err(Error::InvalidVolume(format!("zero target dimension {dims:?}")));
    }
    vol.geometry.validate()?;
    resample_to(vol, vol.geometry.regrid(dims))
}

/// Nearest-neighbour resampling of a mask onto `target`.
pub fn resample_mask_to(mask: &LesionMask, target: Geometry) -> Result<LesionMask> {
    mask.geometry.validate()?;
    target.validate()?;
    let src = &mask.geometry;
    let sx = nearest_stencil(src, &target, 0);
    let sy = nearest_stencil(src, &target, 1);
    let sz = nearest_stencil(src, &target, 2);
    let mut data = Vec::with_capacity(target.len());
    for &z in &sz {
        for &y in &sy {
            for &x in &sx {
                data.push(mask.data[src.index(x, y, z)]);
            }
        }
    }
    Ok(Volume {
        geometry: target,
        data,
    })
}

/// Puts `mask` onto the grid of `to`. The two boxes must agree to within one
/// voxel of the target grid on every face.
pub fn align_mask(mask: &LesionMask, to: &CtVolume) -> Result<LesionMask> {
    let m = &mask.geometry;
    let v = &to.geometry;
    m.validate()?;
    v.validate()?;
    for axis in 0..3 {
        let tol = v.spacing[axis] * (1.0 + 1e-9);
        let lo = (m.lower_corner()[axis] - v.lower_corner()[axis]).abs();
        let hi = ((m.lower_corner()[axis] + m.extent()[axis]) - (v.lower_corner()[axis] + v.extent()[axis])).abs();
        if lo > tol || hi > tol {
            return Err(Error::Alignment(format!(
                "mask and volume extents differ by more than one voxel along axis {axis} ({lo:.3} mm / {hi:.3} mm)"
            )));
        }
    }
    if m.same_grid(v, 1e-9) {
        return Ok(mask.clone());
    }
    resample_mask_to(mask, *v)
}
