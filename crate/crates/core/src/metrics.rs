//! PSNR and SSIM on 8-bit grids.
//!
//! SSIM uses the usual Wang et al. parameterization: 11x11 Gaussian window
//! with sigma 1.5, `K1 = 0.01`, `K2 = 0.03`, `L = 255`, averaged over the
//! valid (unpadded) window positions.

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::image::{GrayImage, ShapeError, Shaped};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;
pub const SSIM_L: f64 = 255.0;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error("image {width}x{height} is smaller than the {window}x{window} SSIM window")]
    TooSmall {
        width: usize,
        height: usize,
        window: usize,
    },
}

/// Decibels; `inf` for identical images.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Psnr(pub f64);

impl Psnr {
    pub fn is_infinite(&self) -> bool {
        self.0.is_infinite()
    }
}

impl Serialize for Psnr {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.0.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for Psnr {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Psnr(v)),
            Raw::Text(t) if t == "inf" => Ok(Psnr(f64::INFINITY)),
            Raw::Text(t) => Err(serde::de::Error::custom(format!("bad psnr value {t:?}"))),
        }
    }
}

impl std::fmt::Display for Psnr {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.0.is_infinite() {
            f.write_str("inf")
        } else {
            write!(f, "{:.4}", self.0)
        }
    }
}

pub fn mse(reference: &GrayImage, test: &GrayImage) -> Result<f64, MetricError> {
    check_shape(reference, test)?;
    let sum: u64 = reference
        .data()
        .iter()
        .zip(test.data())
        .map(|(&a, &b)| {
            let d = i64::from(a) - i64::from(b);
            (d * d) as u64
        })
        .sum();
    Ok(sum as f64 / reference.data().len() as f64)
}

pub fn psnr(reference: &GrayImage, test: &GrayImage) -> Result<Psnr, MetricError> {
    let e = mse(reference, test)?;
    if e == 0.0 {
        return Ok(Psnr(f64::INFINITY));
    }
    Ok(Psnr(10.0 * (SSIM_L * SSIM_L / e).log10()))
}

fn check_shape(a: &GrayImage, b: &GrayImage) -> Result<(), ShapeError> {
    if a.dims() != b.dims() {
        let ((aw, ah), (bw, bh)) = (a.dims(), b.dims());
        return Err(ShapeError::Mismatch(aw, ah, bw, bh));
    }
    Ok(())
}

/// Normalized 1-D Gaussian taps.
pub fn gaussian_taps(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size / 2) as f64;
    let raw: Vec<f64> = (0..size)
        .map(|i| {
            let x = i as f64 - c;
            (-(x * x) / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|t| t / total).collect()
}

/// Valid-region separable filtering: rows then columns.
fn filter_valid(src: &[f64], w: usize, h: usize, taps: &[f64]) -> Vec<f64> {
    let k = taps.len();
    let ow = w - k + 1;
    let oh = h - k + 1;
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = taps.iter().enumerate().map(|(i, t)| t * src[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = taps.iter().enumerate().map(|(i, t)| t * rows[(y + i) * ow + x]).sum();
        }
    }
    out
}

pub fn ssim(reference: &GrayImage, test: &GrayImage) -> Result<f64, MetricError> {
    check_shape(reference, test)?;
    let (w, h) = reference.dims();
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(MetricError::TooSmall {
            width: w,
            height: h,
            window: SSIM_WINDOW,
        });
    }
    let x: Vec<f64> = reference.data().iter().map(|&v| f64::from(v)).collect();
    let y: Vec<f64> = test.data().iter().map(|&v| f64::from(v)).collect();
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a * b).collect();

    let taps = gaussian_taps(SSIM_WINDOW, SSIM_SIGMA);
    let mu_x = filter_valid(&x, w, h, &taps);
    let mu_y = filter_valid(&y, w, h, &taps);
    let s_xx = filter_valid(&xx, w, h, &taps);
    let s_yy = filter_valid(&yy, w, h, &taps);
    let s_xy = filter_valid(&xy, w, h, &taps);

    let c1 = (SSIM_K1 * SSIM_L).powi(2);
    let c2 = (SSIM_K2 * SSIM_L).powi(2);
    let n = mu_x.len();
    let mut total = 0.0;
    for i in 0..n {
        let (mx, my) = (mu_x[i], mu_y[i]);
        let vx = s_xx[i] - mx * mx;
        let vy = s_yy[i] - my * my;
        let cov = s_xy[i] - mx * my;
        total += ((2.0 * mx * my + c1) * (2.0 * cov + c2))
            / ((mx * mx + my * my + c1) * (vx + vy + c2));
    }
    Ok(total / n as f64)
}
