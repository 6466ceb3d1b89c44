use crate::error::Result;
use crate::features::extractor::{extract_features, FeatureExtractorSpec};
use crate::geometry::BBox;
use crate::raster::Raster;

/// Fixed-length appearance descriptor for an image region.
pub fn region_descriptor(image: &Raster, b: &BBox, spec: &FeatureExtractorSpec) -> Result<Vec<f32>> {
    let crop = image.crop_resize(b, spec.crop_size, spec.crop_size)?;
    let map = extract_features(&crop, spec)?;
    let mut v = map.data().to_vec();
    l2_normalize(&mut v);
    Ok(v)
}

/// In-place L2 normalization; zero vectors stay zero.
pub fn l2_normalize(v: &mut [f32]) {
    let n = v.iter().map(|x| (*x as f64) * (*x as f64)).sum::<f64>().sqrt();
    if n > 0.0 {
        let inv = (1.0 / n) as f32;
        for x in v.iter_mut() {
            *x *= inv;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use proptest::prelude::*;

    fn blocks() -> Raster {
        Raster::from_fn(96, 96, |x, y| {
            let a = ((x / 16) + (y / 24)) % 3;
            0.1 + 0.3 * a as f32
        })
    }

    #[test]
    fn length_is_fixed() {
        let spec = FeatureExtractorSpec::default();
        assert_eq!(spec.descriptor_len(), 576);
        let img = blocks();
        for b in [
            BBox::new(0.0, 0.0, 96.0, 96.0).unwrap(),
            BBox::new(10.0, 3.0, 20.0, 90.0).unwrap(),
            BBox::new(-5.0, 40.0, 300.0, 41.5).unwrap(),
        ] {
            assert_eq!(region_descriptor(&img, &b, &spec).unwrap().len(), 576);
        }
    }

    #[test]
    fn constant_crop_is_zero() {
        let img = Raster::filled(80, 80, 0.6);
        let b = BBox::new(5.0, 5.0, 70.0, 50.0).unwrap();
        let d = region_descriptor(&img, &b, &FeatureExtractorSpec::default()).unwrap();
        assert!(d.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn intensity_scaling_invariance() {
        let img = blocks();
        let doubled = img.map(|v| 2.0 * v);
        let b = BBox::new(16.0, 8.0, 80.0, 72.0).unwrap();
        let spec = FeatureExtractorSpec::default();
        let a = region_descriptor(&img, &b, &spec).unwrap();
        let c = region_descriptor(&doubled, &b, &spec).unwrap();
        assert!(a.iter().any(|&v| v != 0.0));
        for (u, v) in a.iter().zip(&c) {
            assert!((u - v).abs() < 1e-5, "{u} vs {v}");
        }
    }

    #[test]
    fn outside_box_fails() {
        let img = blocks();
        let b = BBox::new(200.0, 200.0, 300.0, 300.0).unwrap();
        assert!(matches!(
            region_descriptor(&img, &b, &FeatureExtractorSpec::default()),
            Err(Error::EmptyAfterClip)
        ));
    }

    proptest! {
        #[test]
        fn unit_norm_or_zero(x in 0.0f64..80.0, y in 0.0f64..80.0, w in 1.0f64..90.0, h in 1.0f64..90.0) {
            let img = blocks();
            let b = BBox::new(x, y, x + w, y + h).unwrap();
            let d = region_descriptor(&img, &b, &FeatureExtractorSpec::default()).unwrap();
            prop_assert_eq!(d.len(), 576);
            let n: f64 = d.iter().map(|v| (*v as f64).powi(2)).sum::<f64>().sqrt();
            prop_assert!(n == 0.0 || (n - 1.0).abs() < 1e-5);
        }
    }
}
