//! Centered stair crops.
//!
//! Morpheme `k` of `K` is paired with a centered box whose side is
//! `1/2 + (k-1)/(2(K-1))` of the image, so the first morpheme sees the
//! central half and the last one sees the whole frame.

use crate::error::{Error, Result};
use crate::model::{PromptDecomposition, Raster};

/// Box lengths `L_1..L_K`, nondecreasing, ending at 1.
#[derive(Clone, Debug, PartialEq)]
pub struct StairSpec {
    lengths: Vec<f64>,
}

impl StairSpec {
    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    pub fn len(&self) -> usize {
        self.lengths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lengths.is_empty()
    }
}

pub fn stair_lengths(count: i64) -> Result<StairSpec> {
    if count <= 0 {
        return Err(Error::InvalidMorphemeCount(count));
    }
    if count == 1 {
        return Ok(StairSpec { lengths: vec![1.0] });
    }
    let denom = 2.0 * (count - 1) as f64;
    let lengths = (0..count).map(|i| 0.5 + i as f64 / denom).collect();
    Ok(StairSpec { lengths })
}

/// Pixel rectangle of the centered box: `(x, y, width, height)`.
pub fn center_box(width: u32, height: u32, length: f64) -> Result<(u32, u32, u32, u32)> {
    if !(length > 0.0 && length <= 1.0) {
        return Err(Error::BoxLengthOutOfRange(length));
    }
    let side = |dim: u32| ((length * dim as f64).round() as u32).clamp(1, dim);
    let (w, h) = (side(width), side(height));
    Ok(((width - w) / 2, (height - h) / 2, w, h))
}

/// Copies the centered sub-image with both sides scaled by `length`.
pub fn crop_center_box(image: &Raster, length: f64) -> Result<Raster> {
    let (x, y, w, h) = center_box(image.width(), image.height(), length)?;
    if (w, h) == (image.width(), image.height()) {
        return Ok(image.clone());
    }
    let start = x as usize * 3;
    let end = start + w as usize * 3;
    let mut pixels = Vec::with_capacity(w as usize * h as usize * 3);
    for row in y..y + h {
        pixels.extend_from_slice(&image.row(row)[start..end]);
    }
    Raster::new(w, h, pixels)
}

/// One crop per morpheme, smallest first.
pub fn stairs_for(image: &Raster, decomposition: &PromptDecomposition) -> Result<Vec<Raster>> {
    stair_lengths(decomposition.count() as i64)?
        .lengths()
        .iter()
        .map(|&l| crop_center_box(image, l))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PromptText;
    use crate::prompt_seg::{default_rules, split_prompt};
    use proptest::prelude::*;

    fn gradient(w: u32, h: u32) -> Raster {
        let mut px = Vec::with_capacity((w * h * 3) as usize);
        for y in 0..h {
            for x in 0..w {
                px.extend_from_slice(&[(x % 256) as u8, (y % 256) as u8, ((x + y) % 251) as u8]);
            }
        }
        Raster::new(w, h, px).unwrap()
    }

    #[test]
    fn three_stairs() {
        assert_eq!(stair_lengths(3).unwrap().lengths(), [0.5, 0.75, 1.0]);
    }

    #[test]
    fn two_and_one_stairs() {
        assert_eq!(stair_lengths(2).unwrap().lengths(), [0.5, 1.0]);
        assert_eq!(stair_lengths(1).unwrap().lengths(), [1.0]);
    }

    #[test]
    fn nonpositive_count_is_rejected() {
        assert!(matches!(stair_lengths(0), Err(Error::InvalidMorphemeCount(0))));
        assert!(matches!(stair_lengths(-2), Err(Error::InvalidMorphemeCount(-2))));
    }

    #[test]
    fn half_box_on_square() {
        let img = gradient(512, 512);
        let c = crop_center_box(&img, 0.5).unwrap();
        assert_eq!((c.width(), c.height()), (256, 256));
        assert_eq!(c.pixel(0, 0), img.pixel(128, 128));
    }

    #[test]
    fn full_box_is_identity() {
        let img = gradient(37, 11);
        assert_eq!(crop_center_box(&img, 1.0).unwrap(), img);
    }

    #[test]
    fn non_square_three_quarter_box() {
        let img = gradient(100, 60);
        let c = crop_center_box(&img, 0.75).unwrap();
        assert_eq!((c.width(), c.height()), (75, 45));
        assert_eq!(center_box(100, 60, 0.75).unwrap(), (12, 7, 75, 45));
        // brute-force every pixel against the source
        for y in 0..45 {
            for x in 0..75 {
                assert_eq!(c.pixel(x, y), img.pixel(x + 12, y + 7));
            }
        }
    }

    #[test]
    fn out_of_range_lengths() {
        let img = gradient(4, 4);
        for l in [0.0, -0.1, 1.0001, f64::NAN] {
            assert!(matches!(crop_center_box(&img, l), Err(Error::BoxLengthOutOfRange(_))));
        }
    }

    #[test]
    fn tiny_box_clamps_to_one_pixel() {
        let img = gradient(3, 3);
        let c = crop_center_box(&img, 0.01).unwrap();
        assert_eq!((c.width(), c.height()), (1, 1));
        assert_eq!(c.pixel(0, 0), img.pixel(1, 1));
    }

    fn decomposition(text: &str) -> PromptDecomposition {
        split_prompt(&PromptText::new(text).unwrap(), &default_rules()).unwrap()
    }

    #[test]
    fn stairs_sizes() {
        let sizes = |img: &Raster, text: &str| -> Vec<(u32, u32)> {
            stairs_for(img, &decomposition(text))
                .unwrap()
                .iter()
                .map(|r| (r.width(), r.height()))
                .collect()
        };
        let square = gradient(512, 512);
        assert_eq!(sizes(&square, "sunset"), [(512, 512)]);
        assert_eq!(sizes(&square, "a, b, c"), [(256, 256), (384, 384), (512, 512)]);
        assert_eq!(sizes(&gradient(200, 100), "a, b"), [(100, 50), (200, 100)]);
    }

    proptest! {
        #[test]
        fn stair_geometry(w in 64u32..300, h in 64u32..300, k in 1i64..9) {
            let spec = stair_lengths(k).unwrap();
            let boxes: Vec<_> = spec.lengths().iter().map(|&l| center_box(w, h, l).unwrap()).collect();
            for pair in boxes.windows(2) {
                let (a, b) = (pair[0], pair[1]);
                // nesting
                prop_assert!(b.0 <= a.0 && b.1 <= a.1);
                prop_assert!(a.0 + a.2 <= b.0 + b.2 && a.1 + a.3 <= b.1 + b.3);
                // strictly increasing area
                prop_assert!((a.2 as u64) * (a.3 as u64) < (b.2 as u64) * (b.3 as u64));
            }
            prop_assert_eq!(*boxes.last().unwrap(), (0, 0, w, h));
        }

        #[test]
        fn crops_copy_source_pixels(w in 1u32..40, h in 1u32..40, l in 0.01f64..=1.0) {
            let img = gradient(w, h);
            let (x0, y0, cw, ch) = center_box(w, h, l).unwrap();
            let c = crop_center_box(&img, l).unwrap();
            prop_assert_eq!((c.width(), c.height()), (cw, ch));
            for y in 0..ch {
                for x in 0..cw {
                    prop_assert_eq!(c.pixel(x, y), img.pixel(x + x0, y + y0));
                }
            }
        }
    }
}
