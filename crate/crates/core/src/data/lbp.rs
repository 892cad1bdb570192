//! Uniform local binary patterns, histogrammed per square cell.
//!
//! Each interior pixel gets an 8-bit code from its 3x3 neighborhood: bit `i`
//! is set when neighbor `i` is at least as bright as the center, with the
//! neighbors taken counter-clockwise starting east:
//!
//! ```text
//! 3 2 1
//! 4 c 0
//! 5 6 7
//! ```
//!
//! Codes fold into 58 bins: the 56 patterns with exactly two circular 0/1
//! transitions (bin `7 * start + run - 1`, for a run of `run` ones starting at
//! bit `start`), one bin for the flat patterns 0x00 and 0xff, and one bin for
//! every remaining non-uniform pattern.

use crate::model::FeatureVector;
use crate::{Error, Result};

pub const LBP_BINS: usize = 58;
const FLAT_BIN: u8 = 56;
const NON_UNIFORM_BIN: u8 = 57;

const fn build_bins() -> [u8; 256] {
    let mut table = [NON_UNIFORM_BIN; 256];
    table[0x00] = FLAT_BIN;
    table[0xff] = FLAT_BIN;
    let mut start = 0;
    while start < 8 {
        let mut run = 1;
        while run < 8 {
            let ones: u16 = (1 << run) - 1;
            let code = ((ones << start) | (ones >> (8 - start))) as u8;
            table[code as usize] = (7 * start + run - 1) as u8;
            run += 1;
        }
        start += 1;
    }
    table
}

static BINS: [u8; 256] = build_bins();

pub fn uniform_bin(code: u8) -> usize {
    BINS[code as usize] as usize
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Format("image dimensions must be positive".into()));
        }
        if pixels.len() != width * height {
            return Err(Error::shape("image pixels", width * height, pixels.len()));
        }
        Ok(Self { width, height, pixels })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> u8) -> Result<Self> {
        let pixels = (0..height).flat_map(|y| (0..width).map(move |x| (x, y))).map(|(x, y)| f(x, y)).collect();
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }
}

/// Code of an interior pixel; `None` on the one-pixel border.
pub fn lbp_code(img: &GrayImage, x: usize, y: usize) -> Option<u8> {
    if x == 0 || y == 0 || x + 1 >= img.width || y + 1 >= img.height {
        return None;
    }
    let c = img.get(x, y);
    let neighbors = [
        img.get(x + 1, y),
        img.get(x + 1, y - 1),
        img.get(x, y - 1),
        img.get(x - 1, y - 1),
        img.get(x - 1, y),
        img.get(x - 1, y + 1),
        img.get(x, y + 1),
        img.get(x + 1, y + 1),
    ];
    let mut code = 0u8;
    for (i, n) in neighbors.iter().enumerate() {
        if *n >= c {
            code |= 1 << i;
        }
    }
    Some(code)
}

pub fn lbp_dim(height: usize, width: usize, cell: usize) -> usize {
    (height / cell) * (width / cell) * LBP_BINS
}

/// Concatenated per-cell histograms, cells row-major from the top-left,
/// trailing partial cells dropped, each histogram L1-normalized.
pub fn lbp_extract(img: &GrayImage, cell: usize) -> Result<FeatureVector<f32>> {
    if cell < 2 {
        return Err(Error::Config(format!("LBP cell size must be at least 2, got {cell}")));
    }
    if img.width < cell + 2 || img.height < cell + 2 {
        return Err(Error::Format(format!(
            "{}x{} image too small for LBP cell size {cell}",
            img.width, img.height
        )));
    }
    let (rows, cols) = (img.height / cell, img.width / cell);
    let mut hist = vec![0f32; rows * cols * LBP_BINS];
    let mut counts = vec![0u32; rows * cols];
    for y in 1..(rows * cell).min(img.height - 1) {
        for x in 1..(cols * cell).min(img.width - 1) {
            let code = lbp_code(img, x, y).expect("interior pixel");
            let c = (y / cell) * cols + x / cell;
            hist[c * LBP_BINS + uniform_bin(code)] += 1.0;
            counts[c] += 1;
        }
    }
    for (h, &n) in hist.chunks_exact_mut(LBP_BINS).zip(&counts) {
        // Every cell holds interior pixels once cell >= 2 and the image has a border.
        let n = n as f32;
        for v in h {
            *v /= n;
        }
    }
    Ok(FeatureVector {
        kind: "lbp".into(),
        values: hist,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;
    use proptest::prelude::*;

    fn transitions(code: u8) -> u32 {
        (code ^ code.rotate_right(1)).count_ones()
    }

    #[test]
    fn bin_table_matches_transition_count() {
        let mut seen = [0usize; LBP_BINS];
        for code in 0..=255u8 {
            let b = uniform_bin(code);
            seen[b] += 1;
            match transitions(code) {
                0 => assert_eq!(b, 56),
                2 => assert!(b < 56),
                _ => assert_eq!(b, 57),
            }
        }
        assert!(seen[..56].iter().all(|&n| n == 1));
        assert_eq!(seen[56], 2);
        assert_eq!(seen[57], 256 - 58);
    }

    fn noise_image(w: usize, h: usize, seed: u64, hi: u64) -> GrayImage {
        let mut rng = SeededRng::new(seed);
        let px = (0..w * h).map(|_| (rng.next_u64() % hi) as u8).collect();
        GrayImage::new(w, h, px).unwrap()
    }

    #[test]
    fn celeba_crop_gives_4640() {
        let img = noise_image(178, 218, 1, 256);
        let d = lbp_extract(&img, 20).unwrap();
        assert_eq!(d.values.len(), 4640);
        assert_eq!(lbp_dim(218, 178, 20), 10 * 8 * 58);
    }

    #[test]
    fn constant_image_is_one_hot_per_cell() {
        let img = GrayImage::new(60, 45, vec![128; 60 * 45]).unwrap();
        let d = lbp_extract(&img, 20).unwrap();
        assert_eq!(d.values.len(), 2 * 3 * 58);
        for cell in d.values.chunks_exact(LBP_BINS) {
            assert_eq!(cell[FLAT_BIN as usize], 1.0);
            assert_eq!(cell.iter().sum::<f32>(), 1.0);
        }
    }

    #[test]
    fn intensity_shift_is_invisible() {
        let img = noise_image(178, 218, 2, 240);
        let shifted = GrayImage::new(178, 218, img.pixels().iter().map(|p| p + 10).collect()).unwrap();
        assert_eq!(lbp_extract(&img, 20).unwrap(), lbp_extract(&shifted, 20).unwrap());
    }

    #[test]
    fn too_small_or_bad_cell() {
        let img = GrayImage::new(21, 30, vec![0; 21 * 30]).unwrap();
        assert!(lbp_extract(&img, 20).is_err());
        assert!(lbp_extract(&img, 1).is_err());
        assert!(lbp_extract(&img, 0).is_err());
    }

    #[test]
    fn codes_follow_the_neighbor_order() {
        // Only the east neighbor is bright.
        let img = GrayImage::from_fn(3, 3, |x, y| if (x, y) == (2, 1) { 200 } else if (x, y) == (1, 1) { 100 } else { 0 }).unwrap();
        assert_eq!(lbp_code(&img, 1, 1), Some(0b0000_0001));
        assert_eq!(lbp_code(&img, 0, 1), None);
        assert_eq!(uniform_bin(0b0000_0001), 0);
    }

    proptest! {
        #[test]
        fn dimension_formula_and_normalization(w in 4usize..60, h in 4usize..60, cell in 2usize..12, seed in any::<u64>()) {
            prop_assume!(w >= cell + 2 && h >= cell + 2);
            let img = noise_image(w, h, seed, 256);
            let d = lbp_extract(&img, cell).unwrap();
            prop_assert_eq!(d.values.len(), lbp_dim(h, w, cell));
            for c in d.values.chunks_exact(LBP_BINS) {
                prop_assert!((c.iter().sum::<f32>() - 1.0).abs() < 1e-5);
            }
        }
    }
}
