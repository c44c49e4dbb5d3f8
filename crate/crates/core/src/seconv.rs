//! Ideal selective-convolution restoration.
//!
//! Two variants share the same convolution maps:
//!
//! * selective (FPSC/TSC): `N = A_conv / M_conv` where `M_conv != 0`, gated by
//!   the reliability map `F = [fixed_conv(M) >= s - 2]`;
//! * theory-MSCE: zeros in `M_conv` become 1 before dividing and `F == 1`.
//!
//! Only noisy pixels (mask 0) ever receive an update.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::image::{invert_mask, nonnoisy_mask, ImageTensor, PixelMask, Shaped};
use crate::quantize::{FullPrecisionKernel, Kernel};

/// Zero-padded "same" cross-correlation (no kernel flip).
pub fn conv2d_same(input: &ImageTensor, kernel: &FullPrecisionKernel) -> ImageTensor {
    let (w, h) = input.dims();
    let s = kernel.size();
    let r = (s / 2) as isize;
    let src = input.data();
    let weights = kernel.weights();
    let mut out = vec![0.0; w * h];
    out.par_chunks_mut(w).enumerate().for_each(|(row, line)| {
        for (col, slot) in line.iter_mut().enumerate() {
            let mut acc = 0.0;
            for ky in 0..s {
                let y = row as isize + ky as isize - r;
                if y < 0 || y >= h as isize {
                    continue;
                }
                let base = y as usize * w;
                for kx in 0..s {
                    let x = col as isize + kx as isize - r;
                    if x < 0 || x >= w as isize {
                        continue;
                    }
                    acc += weights[ky * s + kx] * src[base + x as usize];
                }
            }
            *slot = acc;
        }
    });
    ImageTensor::from_parts(w, h, out)
}

/// All-ones `s x s` convolution of a mask: the count of set pixels per window.
pub fn fixed_conv(mask: &PixelMask, size: usize) -> ImageTensor {
    let ones = FullPrecisionKernel::ones(size).expect("caller passes an odd size");
    conv2d_same(&mask.to_tensor(), &ones)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ReliabilityRule {
    /// Restore only where at least `s - 2` window pixels are non-noisy.
    #[default]
    Thresholded,
    AlwaysOne,
}

/// Which ideal formula a stage evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReferenceVariant {
    Selective,
    TheoryMsce,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage {
    pub kernel: Kernel,
    pub rule: ReliabilityRule,
}

impl Stage {
    pub fn new(kernel: Kernel, rule: ReliabilityRule) -> Self {
        Self { kernel, rule }
    }

    pub fn size(&self) -> usize {
        self.kernel.size()
    }

    /// Reliability threshold `s - 2`.
    pub fn eta(&self) -> usize {
        self.size() - 2
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StagePlan {
    pub stages: Vec<Stage>,
}

impl StagePlan {
    pub fn single(kernel: Kernel) -> Self {
        Self {
            stages: vec![Stage::new(kernel, ReliabilityRule::Thresholded)],
        }
    }

    /// Kernel sizes of the full layer sequence.
    pub const FULL_CASCADE: [usize; 7] = [3, 5, 7, 9, 11, 13, 15];

    pub fn sizes(&self) -> Vec<usize> {
        self.stages.iter().map(Stage::size).collect()
    }
}

/// Per-stage intermediates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageTrace {
    pub size: usize,
    pub eta: usize,
    pub a_conv: ImageTensor,
    pub m_conv: ImageTensor,
    pub f_conv: ImageTensor,
    /// Normalized weighted average `N`.
    pub n: ImageTensor,
    /// Noisy map `M_A`.
    pub noisy: PixelMask,
    /// Reliability map `F_M`.
    pub reliability: PixelMask,
    /// `(row, col)` of noisy pixels whose value changed.
    pub restored: Vec<(usize, usize)>,
}

/// One selective stage: FPSC with a full-precision kernel, TSC with a ternary one.
pub fn restore_selective(
    a: &ImageTensor,
    mask: &PixelMask,
    kernel: &FullPrecisionKernel,
    rule: ReliabilityRule,
) -> (ImageTensor, StageTrace) {
    restore(a, mask, kernel, ReferenceVariant::Selective, rule)
}

/// Selective stage with the thresholded reliability rule.
pub fn restore_tsc(
    a: &ImageTensor,
    mask: &PixelMask,
    kernel: &FullPrecisionKernel,
) -> (ImageTensor, StageTrace) {
    restore_selective(a, mask, kernel, ReliabilityRule::Thresholded)
}

/// Zero-to-one denominator, no reliability gate.
pub fn restore_theory_msce(
    a: &ImageTensor,
    mask: &PixelMask,
    kernel: &FullPrecisionKernel,
) -> (ImageTensor, StageTrace) {
    restore(
        a,
        mask,
        kernel,
        ReferenceVariant::TheoryMsce,
        ReliabilityRule::AlwaysOne,
    )
}

fn restore(
    a: &ImageTensor,
    mask: &PixelMask,
    kernel: &FullPrecisionKernel,
    variant: ReferenceVariant,
    rule: ReliabilityRule,
) -> (ImageTensor, StageTrace) {
    a.same_shape(mask).expect("tensor and mask shapes differ");
    let (w, h) = a.dims();
    let s = kernel.size();
    let eta = s - 2;
    let a_conv = conv2d_same(a, kernel);
    let m_conv = conv2d_same(&mask.to_tensor(), kernel);
    let f_conv = fixed_conv(mask, s);
    let noisy = invert_mask(mask);

    let n: Vec<f64> = a_conv
        .data()
        .iter()
        .zip(m_conv.data())
        .map(|(&num, &den)| match variant {
            ReferenceVariant::Selective if den != 0.0 => num / den,
            ReferenceVariant::Selective => 0.0,
            ReferenceVariant::TheoryMsce => num / if den == 0.0 { 1.0 } else { den },
        })
        .collect();
    let reliability: Vec<bool> = match (variant, rule) {
        (ReferenceVariant::Selective, ReliabilityRule::Thresholded) => {
            f_conv.data().iter().map(|&c| c >= eta as f64).collect()
        }
        _ => vec![true; w * h],
    };

    let mut out = a.data().to_vec();
    let mut restored = Vec::new();
    for i in 0..w * h {
        let update = if noisy.data()[i] && reliability[i] {
            n[i]
        } else {
            0.0
        };
        out[i] += update;
        if update != 0.0 {
            restored.push((i / w, i % w));
        }
    }
    let trace = StageTrace {
        size: s,
        eta,
        a_conv,
        m_conv,
        f_conv,
        n: ImageTensor::from_parts(w, h, n),
        noisy,
        reliability: PixelMask::from_parts(w, h, reliability),
        restored,
    };
    (ImageTensor::from_parts(w, h, out), trace)
}

/// Run every stage in order, recomputing the non-noisy map from each stage's
/// output. `a` must already be preprocessed.
pub fn cascade(
    a: &ImageTensor,
    plan: &StagePlan,
    variant: ReferenceVariant,
) -> (ImageTensor, Vec<StageTrace>) {
    let mut current = a.clone();
    let mut traces = Vec::with_capacity(plan.stages.len());
    for stage in &plan.stages {
        let mask = nonnoisy_mask(&current);
        let kernel = stage.kernel.to_full();
        let (next, trace) = match variant {
            ReferenceVariant::Selective => restore_selective(&current, &mask, &kernel, stage.rule),
            ReferenceVariant::TheoryMsce => restore_theory_msce(&current, &mask, &kernel),
        };
        current = next;
        traces.push(trace);
    }
    (current, traces)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::preprocess;
    use crate::quantize::TernaryKernel;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn t(w: usize, h: usize, d: &[f64]) -> ImageTensor {
        ImageTensor::new(w, h, d.to_vec()).unwrap()
    }

    fn ones3() -> FullPrecisionKernel {
        FullPrecisionKernel::ones(3).unwrap()
    }

    /// Random preprocessed image: each pixel noisy (0) with probability `d`.
    fn random_image(rng: &mut ChaCha8Rng, w: usize, h: usize, d: f64) -> ImageTensor {
        let data = (0..w * h)
            .map(|_| {
                if rng.random::<f64>() < d {
                    0.0
                } else {
                    f64::from(rng.random_range(1u8..255)) / 255.0
                }
            })
            .collect();
        preprocess(&ImageTensor::new(w, h, data).unwrap())
    }

    #[test]
    fn conv_interior_and_corner() {
        let img = t(3, 3, &[1.0; 9]);
        let out = conv2d_same(&img, &ones3());
        assert_eq!(out.get(1, 1), 9.0);
        assert_eq!(out.get(0, 0), 4.0);
        assert_eq!(out.get(0, 1), 6.0);
    }

    #[test]
    fn conv_does_not_flip() {
        // a single tap to the right of center picks the right neighbour
        let k = FullPrecisionKernel::new(3, vec![0., 0., 0., 0., 0., 1., 0., 0., 0.]).unwrap();
        let out = conv2d_same(&t(3, 1, &[1.0, 2.0, 3.0]), &k);
        assert_eq!(out.data(), &[2.0, 3.0, 0.0]);
    }

    #[test]
    fn fixed_conv_counts() {
        let mut d = vec![false; 25];
        d[12] = true;
        let m = PixelMask::new(5, 5, d).unwrap();
        let f = fixed_conv(&m, 3);
        for r in 0..5 {
            for c in 0..5 {
                let covered = (1..=3).contains(&r) && (1..=3).contains(&c);
                assert_eq!(f.get(r, c), if covered { 1.0 } else { 0.0 });
            }
        }
        let full = PixelMask::new(5, 5, vec![true; 25]).unwrap();
        assert_eq!(fixed_conv(&full, 3).get(2, 2), 9.0);
        assert_eq!(fixed_conv(&full, 5).get(2, 2), 25.0);
    }

    #[test]
    fn hand_window() {
        let a = t(3, 3, &[0.0, 0.5, 0.0, 0.2, 0.0, 0.4, 0.0, 0.0, 0.0]);
        let mask = nonnoisy_mask(&a);
        let (out, trace) = restore_tsc(&a, &mask, &ones3());
        assert_abs_diff_eq!(out.get(1, 1), 1.1 / 3.0, epsilon = 1e-15);
        assert_eq!(trace.f_conv.get(1, 1), 3.0);
        assert!(trace.reliability.get(1, 1));
        // non-noisy pixels untouched
        assert_eq!(out.get(0, 1), 0.5);
        assert_eq!(out.get(1, 2), 0.4);
        let (msce, _) = restore_theory_msce(&a, &mask, &ones3());
        assert_abs_diff_eq!(msce.get(1, 1), 1.1 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn fully_noisy_image_is_untouched() {
        let a = ImageTensor::zeros(5, 5).unwrap();
        let mask = nonnoisy_mask(&a);
        let (out, trace) = restore_tsc(&a, &mask, &ones3());
        assert_eq!(out, a);
        assert!(trace.restored.is_empty());
        assert_eq!(trace.reliability.count_ones(), 0);
        let (msce, _) = restore_theory_msce(&a, &mask, &ones3());
        assert_eq!(msce, a);
    }

    #[test]
    fn negative_denominator_is_divided_literally() {
        // -1 tap on the left neighbour only
        let k = FullPrecisionKernel::new(3, vec![0., 0., 0., -1., 0., 0., 0., 0., 0.]).unwrap();
        let a = t(3, 1, &[0.4, 0.0, 0.0]);
        let mask = nonnoisy_mask(&a);
        let (out, trace) = restore_selective(&a, &mask, &k, ReliabilityRule::AlwaysOne);
        assert_eq!(trace.m_conv.get(0, 1), -1.0);
        assert_abs_diff_eq!(out.get(0, 1), 0.4, epsilon = 1e-15);
        let (msce, _) = restore_theory_msce(&a, &mask, &k);
        assert_abs_diff_eq!(msce.get(0, 1), 0.4, epsilon = 1e-15);
    }

    #[test]
    fn all_ones_update_is_window_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let a = random_image(&mut rng, 9, 7, 0.6);
            let mask = nonnoisy_mask(&a);
            let (out, trace) = restore_tsc(&a, &mask, &ones3());
            for r in 0..7usize {
                for c in 0..9usize {
                    if mask.get(r, c) {
                        assert_eq!(out.get(r, c), a.get(r, c));
                        continue;
                    }
                    let mut vals = vec![];
                    for y in r.saturating_sub(1)..=(r + 1).min(6) {
                        for x in c.saturating_sub(1)..=(c + 1).min(8) {
                            if mask.get(y, x) {
                                vals.push(a.get(y, x));
                            }
                        }
                    }
                    if vals.is_empty() {
                        assert_eq!(out.get(r, c), 0.0);
                        assert!(!trace.reliability.get(r, c));
                    } else {
                        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
                        assert_abs_diff_eq!(out.get(r, c), mean, epsilon = 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn msce_restored_set_contains_tsc() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let signed = TernaryKernel::new(3, vec![0, 1, 0, 1, 1, -1, 0, 1, 0])
            .unwrap()
            .to_full();
        for trial in 0..100 {
            let d = 0.3 + 0.6 * (trial as f64 / 100.0);
            let a = random_image(&mut rng, 12, 10, d);
            let mask = nonnoisy_mask(&a);
            for k in [ones3(), signed.clone()] {
                let (_, tsc) = restore_tsc(&a, &mask, &k);
                let (_, msce) = restore_theory_msce(&a, &mask, &k);
                for p in &tsc.restored {
                    assert!(msce.restored.contains(p), "trial {trial}: {p:?}");
                }
            }
        }
    }

    #[test]
    fn cascade_behaviour() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let single = StagePlan::single(Kernel::Full(ones3()));
        let deep = StagePlan {
            stages: [3, 5, 7]
                .iter()
                .map(|&s| {
                    Stage::new(
                        Kernel::Full(FullPrecisionKernel::ones(s).unwrap()),
                        ReliabilityRule::Thresholded,
                    )
                })
                .collect(),
        };
        for _ in 0..20 {
            let a = random_image(&mut rng, 16, 16, 0.8);
            let mask = nonnoisy_mask(&a);
            let (once, _) = restore_tsc(&a, &mask, &ones3());
            let (via_plan, traces) = cascade(&a, &single, ReferenceVariant::Selective);
            assert_eq!(once, via_plan);
            assert_eq!(traces.len(), 1);

            let (out, traces) = cascade(&a, &deep, ReferenceVariant::Selective);
            let still_zero_single = once.data().iter().filter(|&&v| v == 0.0).count();
            let still_zero_deep = out.data().iter().filter(|&&v| v == 0.0).count();
            assert!(still_zero_deep <= still_zero_single);
            for tr in &traces {
                for &(r, c) in &tr.restored {
                    assert!(tr.noisy.get(r, c));
                }
            }
        }
        let clean = t(3, 2, &[0.2, 0.3, 0.4, 0.5, 0.6, 0.7]);
        assert_eq!(cascade(&clean, &deep, ReferenceVariant::Selective).0, clean);
    }

    #[test]
    fn conv_is_thread_count_independent() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_image(&mut rng, 40, 30, 0.3);
        let k = FullPrecisionKernel::new(5, (0..25).map(|i| (i as f64 * 0.37).sin()).collect())
            .unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let serial = pool.install(|| conv2d_same(&a, &k));
        let parallel = conv2d_same(&a, &k);
        assert_eq!(serial, parallel);
    }
}
