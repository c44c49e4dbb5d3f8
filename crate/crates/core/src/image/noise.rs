//! Salt-and-pepper corruption.
//!
//! Randomness comes from ChaCha8 (`rand_chacha::ChaCha8Rng::seed_from_u64`).
//! Pixels are visited in row-major order; each consumes one `f64` draw for the
//! corruption test and, only if corrupted, a second `f64` draw for the
//! salt/pepper choice. The stream is therefore a pure function of the seed and
//! the image size.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{GrayImage, PixelMask, ShapeError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Total corruption probability, salt plus pepper.
    pub density: f64,
    /// Share of corrupted pixels that become 255.
    #[serde(default = "default_salt_fraction")]
    pub salt_fraction: f64,
    pub seed: u64,
}

fn default_salt_fraction() -> f64 {
    0.5
}

impl NoiseSpec {
    pub fn new(density: f64, seed: u64) -> Self {
        Self {
            density,
            salt_fraction: 0.5,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.density) {
            return Err(format!("noise density {} outside [0, 1]", self.density));
        }
        if !(0.0..=1.0).contains(&self.salt_fraction) {
            return Err(format!(
                "salt fraction {} outside [0, 1]",
                self.salt_fraction
            ));
        }
        Ok(())
    }
}

/// Ground-truth record of which pixels were overwritten.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorruptionMask(pub PixelMask);

#[derive(Serialize, Deserialize)]
struct CoordinateList {
    width: usize,
    height: usize,
    /// `[row, col]` pairs in row-major order.
    corrupted: Vec<[usize; 2]>,
}

impl CorruptionMask {
    pub fn count(&self) -> usize {
        self.0.count_ones()
    }

    /// 0 = clean, 255 = corrupted.
    pub fn to_image(&self) -> GrayImage {
        GrayImage::new(
            self.0.width(),
            self.0.height(),
            self.0.data().iter().map(|&b| if b { 255 } else { 0 }).collect(),
        )
        .expect("mask shape is valid")
    }

    pub fn to_json(&self) -> String {
        let list = CoordinateList {
            width: self.0.width(),
            height: self.0.height(),
            corrupted: self.0.ones().into_iter().map(|(r, c)| [r, c]).collect(),
        };
        serde_json::to_string(&list).expect("plain data serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, String> {
        let list: CoordinateList = serde_json::from_str(text).map_err(|e| e.to_string())?;
        let mut data = vec![false; list.width * list.height];
        for [r, c] in list.corrupted {
            if r >= list.height || c >= list.width {
                return Err(format!("coordinate ({r}, {c}) outside mask"));
            }
            data[r * list.width + c] = true;
        }
        PixelMask::new(list.width, list.height, data)
            .map(CorruptionMask)
            .map_err(|e: ShapeError| e.to_string())
    }
}

/// Corrupt each pixel independently with probability `spec.density`.
///
/// Panics if `spec` is out of range; call [`NoiseSpec::validate`] first for
/// untrusted input.
pub fn inject_sap(image: &GrayImage, spec: &NoiseSpec) -> (GrayImage, CorruptionMask) {
    spec.validate().expect("invalid noise spec");
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut data = image.data().to_vec();
    let mut mask = vec![false; data.len()];
    for (px, hit) in data.iter_mut().zip(mask.iter_mut()) {
        if rng.random::<f64>() < spec.density {
            *hit = true;
            *px = if rng.random::<f64>() < spec.salt_fraction {
                255
            } else {
                0
            };
        }
    }
    let (w, h) = (image.width(), image.height());
    (
        GrayImage::new(w, h, data).expect("shape preserved"),
        CorruptionMask(PixelMask::new(w, h, mask).expect("shape preserved")),
    )
}
