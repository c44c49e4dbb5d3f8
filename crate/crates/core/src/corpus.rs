//! Procedural grayscale test images.
//!
//! Everything here uses integer-seeded ChaCha8 draws and IEEE-exact
//! arithmetic (`+ - * / sqrt`), so the bytes are reproducible across
//! platforms. `corpus.sha256` pins the named images.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::image::GrayImage;

/// Pixel values stay inside `[LOW, HIGH]`, away from the noise extremes.
const LOW: f64 = 16.0;
const HIGH: f64 = 239.0;

pub const TEXTURE_KINDS: &[&str] = &["gradient", "rings", "clouds", "blocks", "mixed"];

/// Named images of the bundled corpus, all 100x100, seed 0.
pub const CORPUS_NAMES: &[&str] = TEXTURE_KINDS;

pub const CORPUS_SIZE: usize = 100;

#[derive(Debug, thiserror::Error, PartialEq)]
#[error("unknown texture {0:?}")]
pub struct UnknownTexture(pub String);

fn to_u8(v: f64) -> u8 {
    (LOW + (HIGH - LOW) * v.clamp(0.0, 1.0)).round() as u8
}

fn render(w: usize, h: usize, f: impl Fn(f64, f64) -> f64) -> GrayImage {
    let data = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .map(|(x, y)| to_u8(f(x as f64 / w as f64, y as f64 / h as f64)))
        .collect();
    GrayImage::new(w, h, data).expect("positive dimensions")
}

/// Bilinear value noise on a `cells x cells` lattice.
struct Lattice {
    cells: usize,
    values: Vec<f64>,
}

impl Lattice {
    fn new(cells: usize, rng: &mut ChaCha8Rng) -> Self {
        let n = (cells + 1) * (cells + 1);
        Self {
            cells,
            values: (0..n).map(|_| rng.random::<f64>()).collect(),
        }
    }

    fn at(&self, u: f64, v: f64) -> f64 {
        let gx = u * self.cells as f64;
        let gy = v * self.cells as f64;
        let x0 = (gx.floor() as usize).min(self.cells - 1);
        let y0 = (gy.floor() as usize).min(self.cells - 1);
        let (tx, ty) = (gx - x0 as f64, gy - y0 as f64);
        // smoothstep keeps the lattice lines from showing
        let (sx, sy) = (tx * tx * (3.0 - 2.0 * tx), ty * ty * (3.0 - 2.0 * ty));
        let stride = self.cells + 1;
        let v00 = self.values[y0 * stride + x0];
        let v10 = self.values[y0 * stride + x0 + 1];
        let v01 = self.values[(y0 + 1) * stride + x0];
        let v11 = self.values[(y0 + 1) * stride + x0 + 1];
        let top = v00 + (v10 - v00) * sx;
        let bottom = v01 + (v11 - v01) * sx;
        top + (bottom - top) * sy
    }
}

fn clouds(rng: &mut ChaCha8Rng) -> impl Fn(f64, f64) -> f64 {
    let octaves: Vec<Lattice> = [3, 6, 12, 24].iter().map(|&c| Lattice::new(c, rng)).collect();
    move |u, v| {
        let mut amp = 0.5;
        let mut acc = 0.0;
        let mut norm = 0.0;
        for o in &octaves {
            acc += amp * o.at(u, v);
            norm += amp;
            amp *= 0.5;
        }
        acc / norm
    }
}

struct Block {
    x0: f64,
    y0: f64,
    x1: f64,
    y1: f64,
    level: f64,
}

fn blocks(rng: &mut ChaCha8Rng) -> impl Fn(f64, f64) -> f64 {
    let background = rng.random::<f64>();
    let list: Vec<Block> = (0..12)
        .map(|_| {
            let (x0, y0) = (rng.random::<f64>(), rng.random::<f64>());
            let (dw, dh) = (0.1 + 0.4 * rng.random::<f64>(), 0.1 + 0.4 * rng.random::<f64>());
            Block {
                x0,
                y0,
                x1: x0 + dw,
                y1: y0 + dh,
                level: rng.random::<f64>(),
            }
        })
        .collect();
    move |u, v| {
        list.iter()
            .rev()
            .find(|b| u >= b.x0 && u < b.x1 && v >= b.y0 && v < b.y1)
            .map_or(background, |b| b.level)
    }
}

fn triangle(t: f64) -> f64 {
    let f = t - t.floor();
    if f < 0.5 {
        2.0 * f
    } else {
        2.0 - 2.0 * f
    }
}

/// Render a texture. `seed` varies the random draws and geometry.
pub fn texture(kind: &str, width: usize, height: usize, seed: u64) -> Result<GrayImage, UnknownTexture> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let img = match kind {
        "gradient" => {
            let (a, b) = (0.3 + 0.7 * rng.random::<f64>(), 0.3 + 0.7 * rng.random::<f64>());
            render(width, height, |u, v| (a * u + b * v) / (a + b))
        }
        "rings" => {
            let (cx, cy) = (rng.random::<f64>(), rng.random::<f64>());
            let period = 0.08 + 0.12 * rng.random::<f64>();
            render(width, height, |u, v| {
                let r = ((u - cx) * (u - cx) + (v - cy) * (v - cy)).sqrt();
                triangle(r / period)
            })
        }
        "clouds" => render(width, height, clouds(&mut rng)),
        "blocks" => render(width, height, blocks(&mut rng)),
        "mixed" => {
            let c = clouds(&mut rng);
            let b = blocks(&mut rng);
            render(width, height, |u, v| 0.5 * c(u, v) + 0.5 * b(u, v))
        }
        other => return Err(UnknownTexture(other.to_string())),
    };
    Ok(img)
}

/// A named corpus image.
pub fn corpus_image(name: &str) -> Result<GrayImage, UnknownTexture> {
    texture(name, CORPUS_SIZE, CORPUS_SIZE, 0)
}

/// The `index`-th image of a seeded evaluation set: texture kinds cycle, the
/// seed changes every draw.
pub fn seeded_image(index: u64, size: usize, base_seed: u64) -> GrayImage {
    let kind = TEXTURE_KINDS[(index % TEXTURE_KINDS.len() as u64) as usize];
    texture(kind, size, size, base_seed.wrapping_add(index)).expect("kind is from the list")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn values_avoid_noise_levels() {
        for &k in TEXTURE_KINDS {
            for seed in 0..5 {
                let img = texture(k, 40, 30, seed).unwrap();
                assert_eq!((img.width(), img.height()), (40, 30));
                assert!(img.data().iter().all(|&v| (16..=239).contains(&v)), "{k}");
            }
        }
    }

    #[test]
    fn textures_are_not_flat() {
        for &k in TEXTURE_KINDS {
            let img = corpus_image(k).unwrap();
            let min = img.data().iter().min().unwrap();
            let max = img.data().iter().max().unwrap();
            assert!(max - min > 40, "{k}: {min}..{max}");
        }
    }

    #[test]
    fn seeds_change_images() {
        assert_eq!(texture("clouds", 20, 20, 3), texture("clouds", 20, 20, 3));
        assert_ne!(texture("clouds", 20, 20, 3), texture("clouds", 20, 20, 4));
        assert_ne!(seeded_image(0, 20, 0), seeded_image(5, 20, 0));
        assert!(texture("plasma", 4, 4, 0).is_err());
    }
}
