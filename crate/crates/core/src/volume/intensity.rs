use super::{LesionMask, MaskedVolume, NormalizedVolume, Volume};
use crate::error::{Error, Result};

pub const SOFT_TISSUE_LEVEL: f64 = 40.0;
pub const SOFT_TISSUE_WIDTH: f64 = 400.0;

/// Affine window `clamp((v - (level - width/2)) / width, 0, 1)`.
pub fn window(vol: &Volume<f32>, level: f64, width: f64) -> Result<NormalizedVolume> {
    if !(width > 0.0 && width.is_finite()) {
        return Err(Error::InvalidWindow(width));
    }
    let low = level - 0.5 * width;
    let data = vol
        .data
        .iter()
        .map(|&v| ((v as f64 - low) / width).clamp(0.0, 1.0) as f32)
        .collect();
    Ok(NormalizedVolume(Volume {
        geometry: vol.geometry,
        data,
    }))
}

pub fn window_soft_tissue(vol: &Volume<f32>) -> NormalizedVolume {
    window(vol, SOFT_TISSUE_LEVEL, SOFT_TISSUE_WIDTH).expect("constant window is valid")
}

/// Voxelwise product of a normalized volume with a binary mask.
pub fn apply_mask(vol: &NormalizedVolume, mask: &LesionMask) -> Result<MaskedVolume> {
    let v = &vol.0;
    if v.geometry.dims != mask.geometry.dims {
        return Err(Error::ShapeMismatch(format!(
            "volume {:?} vs mask {:?}",
            v.geometry.dims, mask.geometry.dims
        )));
    }
    let data = v
        .data
        .iter()
        .zip(&mask.data)
        .map(|(&x, &m)| if m == 1 { x } else { 0.0 })
        .collect();
    Ok(MaskedVolume(Volume {
        geometry: v.geometry,
        data,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Geometry;
    use proptest::prelude::*;

    fn line(values: &[f32]) -> Volume<f32> {
        let g = Geometry::new([values.len(), 1, 1], [1.0; 3], [0.0; 3]).unwrap();
        Volume::new(g, values.to_vec()).unwrap()
    }

    #[test]
    fn soft_tissue_window_points() {
        let out = window_soft_tissue(&line(&[-160.0, 240.0, 40.0, 140.0, -1000.0, 3000.0]));
        assert_eq!(out.volume().data, vec![0.0, 1.0, 0.5, 0.75, 0.0, 1.0]);
    }

    #[test]
    fn window_rejects_non_positive_width() {
        assert!(matches!(window(&line(&[0.0]), 40.0, 0.0), Err(Error::InvalidWindow(_))));
        assert!(matches!(window(&line(&[0.0]), 40.0, -5.0), Err(Error::InvalidWindow(_))));
    }

    #[test]
    fn mask_identity_zero_and_checkerboard() {
        let g = Geometry::new([4, 4, 2], [1.0; 3], [0.0; 3]).unwrap();
        let vol = NormalizedVolume(Volume::filled(g, 0.5));
        let ones = Volume::filled(g, 1u8);
        let zeros = Volume::filled(g, 0u8);
        assert_eq!(apply_mask(&vol, &ones).unwrap().volume().data, vol.0.data);
        assert!(apply_mask(&vol, &zeros).unwrap().volume().data.iter().all(|&v| v == 0.0));

        let checker = Volume::from_fn(g, |x, y, z| ((x + y + z) % 2) as u8);
        let out = apply_mask(&vol, &checker).unwrap();
        for z in 0..2 {
            for y in 0..4 {
                for x in 0..4 {
                    let expected = if (x + y + z) % 2 == 1 { 0.5 } else { 0.0 };
                    assert_eq!(out.volume().get(x, y, z), expected);
                }
            }
        }
    }

    #[test]
    fn mask_shape_mismatch() {
        let a = Geometry::new([2, 2, 2], [1.0; 3], [0.0; 3]).unwrap();
        let b = Geometry::new([2, 2, 3], [1.0; 3], [0.0; 3]).unwrap();
        let vol = NormalizedVolume(Volume::filled(a, 0.5));
        assert!(matches!(apply_mask(&vol, &Volume::filled(b, 1u8)), Err(Error::ShapeMismatch(_))));
    }

    proptest! {
        #[test]
        fn window_is_monotone_and_idempotent(mut hu in prop::collection::vec(-2000.0f32..3000.0, 2..64)) {
            hu.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let once = window_soft_tissue(&line(&hu));
            let d = &once.volume().data;
            prop_assert!(d.windows(2).all(|w| w[0] <= w[1]));
            prop_assert!(d.iter().all(|v| (0.0..=1.0).contains(v)));
            let twice = window(once.volume(), 0.5, 1.0).unwrap();
            prop_assert_eq!(&twice.volume().data, d);
        }

        #[test]
        fn masking_is_idempotent(bits in prop::collection::vec(0u8..2, 27), vals in prop::collection::vec(0.0f32..=1.0, 27)) {
            let g = Geometry::new([3, 3, 3], [1.0; 3], [0.0; 3]).unwrap();
            let mask = Volume::new(g, bits).unwrap();
            let vol = NormalizedVolume(Volume::new(g, vals).unwrap());
            let once = apply_mask(&vol, &mask).unwrap();
            let twice = apply_mask(&NormalizedVolume(once.0.clone()), &mask).unwrap();
            prop_assert_eq!(once, twice);
        }
    }
}
