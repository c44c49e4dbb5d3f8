//! Grayscale image containers, normalization, and the pixel-mask algebra
//! used ahead of selective convolution.

mod noise;
mod pgm;

pub use noise::{inject_sap, CorruptionMask, NoiseSpec};
pub use pgm::{load_pgm, save_pgm, PgmError, PgmFormat};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::ser::SerializeStruct;
use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ShapeError {
    #[error("image dimensions must be at least 1x1, got {width}x{height}")]
    Empty { width: usize, height: usize },
    #[error("expected {expected} samples for the given dimensions, found {found}")]
    Length { expected: usize, found: usize },
    #[error("shape mismatch: {0}x{1} vs {2}x{3}")]
    Mismatch(usize, usize, usize, usize),
    #[error("crop {crop_w}x{crop_h} does not fit in a {width}x{height} image")]
    Crop {
        crop_w: usize,
        crop_h: usize,
        width: usize,
        height: usize,
    },
}

fn check_shape(width: usize, height: usize, len: usize) -> Result<(), ShapeError> {
    if width == 0 || height == 0 {
        return Err(ShapeError::Empty { width, height });
    }
    if width * height != len {
        return Err(ShapeError::Length {
            expected: width * height,
            found: len,
        });
    }
    Ok(())
}

/// An 8-bit grayscale raster, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self, ShapeError> {
        check_shape(width, height, data.len())?;
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Result<Self, ShapeError> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.data[row * self.width + col]
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    /// Deterministic center crop. Odd leftovers go to the bottom/right margin.
    pub fn center_crop(&self, crop_w: usize, crop_h: usize) -> Result<GrayImage, ShapeError> {
        self.check_crop(crop_w, crop_h)?;
        let left = (self.width - crop_w) / 2;
        let top = (self.height - crop_h) / 2;
        Ok(self.crop_at(left, top, crop_w, crop_h))
    }

    /// Crop at an offset drawn uniformly from a ChaCha8 stream seeded with `seed`.
    pub fn random_crop(
        &self,
        crop_w: usize,
        crop_h: usize,
        seed: u64,
    ) -> Result<GrayImage, ShapeError> {
        self.check_crop(crop_w, crop_h)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let left = rng.random_range(0..=self.width - crop_w);
        let top = rng.random_range(0..=self.height - crop_h);
        Ok(self.crop_at(left, top, crop_w, crop_h))
    }

    fn check_crop(&self, crop_w: usize, crop_h: usize) -> Result<(), ShapeError> {
        if crop_w == 0 || crop_h == 0 || crop_w > self.width || crop_h > self.height {
            return Err(ShapeError::Crop {
                crop_w,
                crop_h,
                width: self.width,
                height: self.height,
            });
        }
        Ok(())
    }

    fn crop_at(&self, left: usize, top: usize, crop_w: usize, crop_h: usize) -> GrayImage {
        let mut data = Vec::with_capacity(crop_w * crop_h);
        for row in top..top + crop_h {
            let start = row * self.width + left;
            data.extend_from_slice(&self.data[start..start + crop_w]);
        }
        GrayImage {
            width: crop_w,
            height: crop_h,
            data,
        }
    }
}

/// Real-valued image in normalized intensity units. Intermediate results may
/// leave `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageTensor {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl ImageTensor {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self, ShapeError> {
        check_shape(width, height, data.len())?;
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Result<Self, ShapeError> {
        Self::new(width, height, vec![0.0; width * height])
    }

    /// Validates a deserialized tensor, which bypasses [`ImageTensor::new`].
    pub fn validate(&self) -> Result<(), ShapeError> {
        check_shape(self.width, self.height, self.data.len())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    pub fn same_shape<T: Shaped>(&self, other: &T) -> Result<(), ShapeError> {
        let (w, h) = other.dims();
        if (w, h) != (self.width, self.height) {
            return Err(ShapeError::Mismatch(self.width, self.height, w, h));
        }
        Ok(())
    }

    pub(crate) fn from_parts(width: usize, height: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(width * height, data.len());
        Self {
            width,
            height,
            data,
        }
    }
}

/// Binary map over an image: `true` is 1, `false` is 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PixelMask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl PixelMask {
    pub fn new(width: usize, height: usize, data: Vec<bool>) -> Result<Self, ShapeError> {
        check_shape(width, height, data.len())?;
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.data[row * self.width + col]
    }

    pub fn count_ones(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    /// The mask as a 0.0/1.0 tensor.
    pub fn to_tensor(&self) -> ImageTensor {
        ImageTensor::from_parts(
            self.width,
            self.height,
            self.data.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        )
    }

    /// Coordinates `(row, col)` of every set element, row-major.
    pub fn ones(&self) -> Vec<(usize, usize)> {
        self.data
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| (i / self.width, i % self.width))
            .collect()
    }

    pub(crate) fn from_parts(width: usize, height: usize, data: Vec<bool>) -> Self {
        debug_assert_eq!(width * height, data.len());
        Self {
            width,
            height,
            data,
        }
    }
}

impl Serialize for PixelMask {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut st = serializer.serialize_struct("PixelMask", 3)?;
        st.serialize_field("width", &self.width())?;
        st.serialize_field("height", &self.height())?;
        let bits: Vec<u8> = self.data().iter().map(|&b| u8::from(b)).collect();
        st.serialize_field("data", &bits)?;
        st.end()
    }
}

pub trait Shaped {
    fn dims(&self) -> (usize, usize);
}

impl Shaped for GrayImage {
    fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }
}

impl Shaped for ImageTensor {
    fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }
}

impl Shaped for PixelMask {
    fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }
}

pub fn normalize(image: &GrayImage) -> ImageTensor {
    ImageTensor::from_parts(
        image.width,
        image.height,
        image.data.iter().map(|&p| f64::from(p) / 255.0).collect(),
    )
}

/// Clamp to `[0, 1]`, scale by 255, round half away from zero.
pub fn denormalize(tensor: &ImageTensor) -> GrayImage {
    GrayImage {
        width: tensor.width,
        height: tensor.height,
        // f64::round is half-away-from-zero
        data: tensor
            .data
            .iter()
            .map(|&v| {
                let v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
                (v * 255.0).round() as u8
            })
            .collect(),
    }
}

/// Elements equal to 1 become 0; everything else passes through.
pub fn preprocess(a: &ImageTensor) -> ImageTensor {
    ImageTensor::from_parts(
        a.width,
        a.height,
        a.data
            .iter()
            .map(|&v| if v == 1.0 { 0.0 } else { v })
            .collect(),
    )
}

/// 1 where the element is nonzero. Behavioral stand-in for the gain limiter.
pub fn nonnoisy_mask(a: &ImageTensor) -> PixelMask {
    PixelMask::from_parts(
        a.width,
        a.height,
        a.data.iter().map(|&v| v != 0.0).collect(),
    )
}

pub fn invert_mask(mask: &PixelMask) -> PixelMask {
    PixelMask::from_parts(
        mask.width,
        mask.height,
        mask.data.iter().map(|&b| !b).collect(),
    )
}
