//! Node-level behavioral model of the memristive selective-convolution
//! circuits.
//!
//! Each window is evaluated as a chain of ideal blocks: two memristor
//! crossbars (pixel voltages and mask voltages), an optional resistor
//! crossbar with the fixed all-ones kernel (MSC only), the zero-to-one signal
//! converter, the divider, the inverter on the center mask signal, a
//! multiplier and an adder. Op-amp outputs saturate at `±rail`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::device::{DeviceError, DeviceParams};
use crate::image::{nonnoisy_mask, ImageTensor, PixelMask, Shaped};
use crate::quantize::{ConductancePair, Kernel, TernaryKernel};
use crate::seconv::StagePlan;

#[derive(Debug, Error, PartialEq)]
pub enum CircuitError {
    #[error("invalid circuit config: {0}")]
    Config(String),
    #[error(transparent)]
    Device(#[from] DeviceError),
    #[error("circuit stages need ternary kernels (stage {stage} has full-precision weights)")]
    NotTernary { stage: usize },
    #[error("single-device mode cannot encode weight -1 (tap {tap})")]
    NegativeWeightInSingleMode { tap: usize },
    #[error("window needs {expected} signals, got {found}")]
    SignalCount { expected: usize, found: usize },
    #[error("{0} signals do not form an odd square window")]
    WindowShape(usize),
    #[error("mask signal {value} at tap {tap} is not 0 or 1 V")]
    MaskLevel { tap: usize, value: f64 },
    #[error("pixel signal at tap {tap} is {value} V but its mask is 0 V")]
    UnmaskedPixel { tap: usize, value: f64 },
    #[error("divider denominator {0} V is not positive; converter wiring is wrong")]
    NonPositiveDenominator(f64),
    #[error("read voltage {volts} V exceeds device threshold {v_th} V and would disturb stored weights")]
    ReadDisturb { volts: f64, v_th: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum WeightMode {
    /// `G+ - G-` pair per weight.
    #[default]
    Differential,
    /// One device per weight: `G_ON` for 1, `G_OFF` for 0.
    Single,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum CircuitModel {
    Msc,
    Msce,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CircuitConfig {
    pub device: DeviceParams,
    pub weight_mode: WeightMode,
    /// Feedback resistance of the current-to-voltage stages, ohms. `None`
    /// selects unit gain for a ±1 weight in the active mode.
    pub transimpedance_gain: Option<f64>,
    /// Reference of the zero-to-one converter, volts.
    pub zero2one_ref: f64,
    /// Comparator absorb band, volts.
    pub comparator_band: f64,
    pub rail: f64,
    pub divider_floor: f64,
    /// Relative standard deviation of programmed conductances.
    pub conductance_sigma: f64,
    pub conductance_seed: u64,
}

impl Default for CircuitConfig {
    fn default() -> Self {
        Self {
            device: DeviceParams::default(),
            weight_mode: WeightMode::Differential,
            transimpedance_gain: None,
            zero2one_ref: 0.0,
            comparator_band: 1e-9,
            rail: 15.0,
            divider_floor: 1e-6,
            conductance_sigma: 0.0,
            conductance_seed: 0,
        }
    }
}

impl CircuitConfig {
    pub fn validate(&self) -> Result<(), CircuitError> {
        self.device.validate()?;
        let bad = |what: &str| Err(CircuitError::Config(what.to_string()));
        if let Some(g) = self.transimpedance_gain {
            if !(g > 0.0 && g.is_finite()) {
                return bad("transimpedance_gain must be positive");
            }
        }
        if !(self.rail > 0.0) {
            return bad("rail must be positive");
        }
        if !(self.divider_floor > 0.0) {
            return bad("divider_floor must be positive");
        }
        if !(self.conductance_sigma >= 0.0) {
            return bad("conductance_sigma must be non-negative");
        }
        if !(self.comparator_band >= 0.0) {
            return bad("comparator_band must be non-negative");
        }
        Ok(())
    }

    /// Effective feedback resistance for `mode`.
    pub fn gain_for(&self, mode: WeightMode) -> f64 {
        self.transimpedance_gain.unwrap_or(match mode {
            WeightMode::Differential => 1.0 / (self.device.g_on() - self.device.g_off()),
            WeightMode::Single => 1.0 / self.device.g_on(),
        })
    }
}

/// A block output after rail saturation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Node {
    pub volts: f64,
    pub clamped: bool,
}

fn saturate(v: f64, rail: f64) -> Node {
    let c = v.clamp(-rail, rail);
    Node {
        volts: c,
        clamped: c != v,
    }
}

/// One programmed array column pair (the minus column is absent in single mode).
#[derive(Debug, Clone, PartialEq)]
pub struct Crossbar {
    plus: Vec<f64>,
    minus: Option<Vec<f64>>,
    gain: f64,
    rail: f64,
}

impl Crossbar {
    /// Program a ternary kernel. `rng` perturbs conductances when
    /// `conductance_sigma > 0`.
    pub fn program(
        kernel: &TernaryKernel,
        config: &CircuitConfig,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self, CircuitError> {
        let p = &config.device;
        let mut perturb = |g: f64| {
            if config.conductance_sigma > 0.0 {
                let z: f64 = StandardNormal.sample(rng);
                (g * (1.0 + config.conductance_sigma * z)).max(g * 1e-6)
            } else {
                g
            }
        };
        let (plus, minus) = match config.weight_mode {
            WeightMode::Differential => {
                let pairs: Vec<ConductancePair> = kernel
                    .weights()
                    .iter()
                    .map(|&w| ConductancePair::for_weight(w, p))
                    .collect();
                let plus: Vec<f64> = pairs.iter().map(|c| perturb(c.g_plus)).collect();
                let minus: Vec<f64> = pairs.iter().map(|c| perturb(c.g_minus)).collect();
                (plus, Some(minus))
            }
            WeightMode::Single => {
                let mut plus = Vec::with_capacity(kernel.weights().len());
                for (tap, &w) in kernel.weights().iter().enumerate() {
                    let g = match w {
                        1 => p.g_on(),
                        0 => p.g_off(),
                        _ => return Err(CircuitError::NegativeWeightInSingleMode { tap }),
                    };
                    plus.push(perturb(g));
                }
                (plus, None)
            }
        };
        Ok(Self {
            plus,
            minus,
            gain: config.gain_for(config.weight_mode),
            rail: config.rail,
        })
    }

    /// Resistor array holding the fixed all-ones kernel. Always differential
    /// and unperturbed.
    pub fn fixed(size: usize, config: &CircuitConfig) -> Self {
        let n = size * size;
        Self {
            plus: vec![config.device.g_on(); n],
            minus: Some(vec![config.device.g_off(); n]),
            gain: config.gain_for(WeightMode::Differential),
            rail: config.rail,
        }
    }

    pub fn taps(&self) -> usize {
        self.plus.len()
    }

    /// Column currents through transimpedance stages, then the subtractor.
    /// Returns the output node and the number of saturated op-amps.
    pub fn convolve(&self, signals: &[f64]) -> (Node, u32) {
        debug_assert_eq!(signals.len(), self.plus.len());
        let i_plus: f64 = signals.iter().zip(&self.plus).map(|(v, g)| v * g).sum();
        let v_plus = saturate(self.gain * i_plus, self.rail);
        let mut clamps = u32::from(v_plus.clamped);
        let v_minus = match &self.minus {
            Some(minus) => {
                let i_minus: f64 = signals.iter().zip(minus).map(|(v, g)| v * g).sum();
                let n = saturate(self.gain * i_minus, self.rail);
                clamps += u32::from(n.clamped);
                n.volts
            }
            None => 0.0,
        };
        let out = saturate(v_plus.volts - v_minus, self.rail);
        clamps += u32::from(out.clamped);
        (out, clamps)
    }
}

/// Dot product of `signals` with a kernel's conductance pairs.
pub fn crossbar_conv(signals: &[f64], crossbar: &Crossbar) -> Result<f64, CircuitError> {
    if signals.len() != crossbar.taps() {
        return Err(CircuitError::SignalCount {
            expected: crossbar.taps(),
            found: signals.len(),
        });
    }
    Ok(crossbar.convolve(signals).0.volts)
}

/// Fixed-kernel (resistor) convolution of mask signals.
pub fn rc_fixed_conv(mask_signals: &[f64], size: usize, config: &CircuitConfig) -> Result<f64, CircuitError> {
    crossbar_conv(mask_signals, &Crossbar::fixed(size, config))
}

/// Pass the input when it is above the reference, otherwise output 1 V.
pub fn signal_convert_zero2one(v_in: f64, config: &CircuitConfig) -> f64 {
    if v_in > config.zero2one_ref + config.comparator_band {
        v_in
    } else {
        1.0
    }
}

/// 1 V when `v_in >= eta` (within `band`), else 0 V.
pub fn comparator_threshold(v_in: f64, eta: f64, band: f64) -> f64 {
    if v_in >= eta - band {
        1.0
    } else {
        0.0
    }
}

/// `v1 / max(v2, floor)`, saturated. The denominator must arrive positive.
pub fn divider(v1: f64, v2: f64, config: &CircuitConfig) -> Result<Node, CircuitError> {
    if !(v2 > 0.0) {
        return Err(CircuitError::NonPositiveDenominator(v2));
    }
    Ok(saturate(v1 / v2.max(config.divider_floor), config.rail))
}

/// `V_out = 1 - V_in`.
pub fn inverter(v: f64) -> f64 {
    1.0 - v
}

/// Pixel and mask voltages of one `s x s` window, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSignals {
    v: Vec<f64>,
    m: Vec<f64>,
}

impl WindowSignals {
    pub fn new(v: Vec<f64>, m: Vec<f64>) -> Result<Self, CircuitError> {
        if v.len() != m.len() {
            return Err(CircuitError::SignalCount {
                expected: v.len(),
                found: m.len(),
            });
        }
        let s = (v.len() as f64).sqrt().round() as usize;
        if s * s != v.len() || s.is_multiple_of(2) {
            return Err(CircuitError::WindowShape(v.len()));
        }
        for (tap, (&vi, &mi)) in v.iter().zip(&m).enumerate() {
            if mi != 0.0 && mi != 1.0 {
                return Err(CircuitError::MaskLevel { tap, value: mi });
            }
            if mi == 0.0 && vi != 0.0 {
                return Err(CircuitError::UnmaskedPixel { tap, value: vi });
            }
        }
        Ok(Self { v, m })
    }

    /// Window centered at `(row, col)`, zero outside the image.
    pub fn extract(a: &ImageTensor, mask: &PixelMask, row: usize, col: usize, size: usize) -> Self {
        let (w, h) = a.dims();
        let r = (size / 2) as isize;
        let mut v = Vec::with_capacity(size * size);
        let mut m = Vec::with_capacity(size * size);
        for dy in -r..=r {
            for dx in -r..=r {
                let y = row as isize + dy;
                let x = col as isize + dx;
                if y < 0 || x < 0 || y >= h as isize || x >= w as isize {
                    v.push(0.0);
                    m.push(0.0);
                } else {
                    let (y, x) = (y as usize, x as usize);
                    v.push(a.get(y, x));
                    m.push(if mask.get(y, x) { 1.0 } else { 0.0 });
                }
            }
        }
        Self { v, m }
    }

    pub fn size(&self) -> usize {
        (self.v.len() as f64).sqrt().round() as usize
    }

    /// Zero-based index of the central tap.
    pub fn center(&self) -> usize {
        self.v.len() / 2
    }

    pub fn pixels(&self) -> &[f64] {
        &self.v
    }

    pub fn masks(&self) -> &[f64] {
        &self.m
    }
}

/// Both memristor arrays and the resistor array for one stage.
#[derive(Debug, Clone)]
pub struct ProgrammedStage {
    pub size: usize,
    pub pixel_array: Crossbar,
    pub mask_array: Crossbar,
    pub fixed_array: Crossbar,
}

impl ProgrammedStage {
    pub fn program(
        kernel: &TernaryKernel,
        config: &CircuitConfig,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self, CircuitError> {
        Ok(Self {
            size: kernel.size(),
            pixel_array: Crossbar::program(kernel, config, rng)?,
            mask_array: Crossbar::program(kernel, config, rng)?,
            fixed_array: Crossbar::fixed(kernel.size(), config),
        })
    }

    pub fn eta(&self) -> f64 {
        (self.size - 2) as f64
    }
}

/// Every internal node of one window evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WindowNodes {
    pub a_conv: f64,
    pub m_conv: f64,
    /// Fixed-kernel count; absent in MSCE.
    pub f_conv: Option<f64>,
    pub zero2one: f64,
    pub n: f64,
    /// Inverted center mask.
    pub m_noisy: f64,
    /// Reliability gate; 1 in MSCE.
    pub f: f64,
    pub update: f64,
    pub output: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct WindowFlags {
    pub negative_denominator: bool,
    pub zero_denominator: bool,
    pub floor_engaged: bool,
    pub clamped_nodes: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WindowOutput {
    pub nodes: WindowNodes,
    pub flags: WindowFlags,
}

impl WindowOutput {
    pub fn value(&self) -> f64 {
        self.nodes.output
    }
}

/// Evaluate one window through the full MSC topology.
pub fn window_msc(
    signals: &WindowSignals,
    stage: &ProgrammedStage,
    config: &CircuitConfig,
) -> Result<WindowOutput, CircuitError> {
    evaluate_window(signals, stage, config, CircuitModel::Msc)
}

/// MSCE: no resistor array and no reliability gate.
pub fn window_msce(
    signals: &WindowSignals,
    stage: &ProgrammedStage,
    config: &CircuitConfig,
) -> Result<WindowOutput, CircuitError> {
    evaluate_window(signals, stage, config, CircuitModel::Msce)
}

fn evaluate_window(
    signals: &WindowSignals,
    stage: &ProgrammedStage,
    config: &CircuitConfig,
    model: CircuitModel,
) -> Result<WindowOutput, CircuitError> {
    let taps = stage.size * stage.size;
    if signals.v.len() != taps {
        return Err(CircuitError::SignalCount {
            expected: taps,
            found: signals.v.len(),
        });
    }
    let mut flags = WindowFlags::default();
    let (a_conv, c1) = stage.pixel_array.convolve(&signals.v);
    let (m_conv, c2) = stage.mask_array.convolve(&signals.m);
    flags.clamped_nodes += c1 + c2;

    let (f_conv, f) = match model {
        CircuitModel::Msc => {
            let (fc, c3) = stage.fixed_array.convolve(&signals.m);
            flags.clamped_nodes += c3;
            (
                Some(fc.volts),
                comparator_threshold(fc.volts, stage.eta(), config.comparator_band),
            )
        }
        CircuitModel::Msce => (None, 1.0),
    };

    let zero2one = signal_convert_zero2one(m_conv.volts, config);
    flags.negative_denominator = m_conv.volts < -config.comparator_band;
    flags.zero_denominator = m_conv.volts.abs() <= config.comparator_band;
    flags.floor_engaged = zero2one < config.divider_floor;
    let n = divider(a_conv.volts, zero2one, config)?;
    flags.clamped_nodes += u32::from(n.clamped);

    let center = signals.center();
    let m_noisy = inverter(signals.m[center]);
    let update = n.volts * m_noisy * f;
    let out = saturate(signals.v[center] + update, config.rail);
    flags.clamped_nodes += u32::from(out.clamped);

    Ok(WindowOutput {
        nodes: WindowNodes {
            a_conv: a_conv.volts,
            m_conv: m_conv.volts,
            f_conv,
            zero2one,
            n: n.volts,
            m_noisy,
            f,
            update,
            output: out.volts,
        },
        flags,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DivergenceCounters {
    /// Noisy-center windows whose mask convolution was negative (converted to 1 V).
    pub negative_denominator_windows: usize,
    /// Noisy-center windows whose mask convolution was zero.
    pub zero_denominator_windows: usize,
    /// Windows where the divider floor set the denominator.
    pub floor_engaged_windows: usize,
    /// Saturated op-amp outputs over all windows.
    pub clamped_nodes: usize,
    pub restored_pixels: usize,
}

impl DivergenceCounters {
    fn add(&mut self, other: &DivergenceCounters) {
        self.negative_denominator_windows += other.negative_denominator_windows;
        self.zero_denominator_windows += other.zero_denominator_windows;
        self.floor_engaged_windows += other.floor_engaged_windows;
        self.clamped_nodes += other.clamped_nodes;
        self.restored_pixels += other.restored_pixels;
    }
}

/// Per-stage node maps assembled from every window.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CircuitStageTrace {
    pub size: usize,
    pub a_conv: ImageTensor,
    pub m_conv: ImageTensor,
    pub f_conv: Option<ImageTensor>,
    pub zero2one: ImageTensor,
    pub n: ImageTensor,
    pub m_noisy: ImageTensor,
    pub f: ImageTensor,
    pub output: ImageTensor,
    pub restored: Vec<(usize, usize)>,
    pub counters: DivergenceCounters,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CircuitRun {
    pub model: CircuitModel,
    pub stages: Vec<CircuitStageTrace>,
    pub counters: DivergenceCounters,
}

/// Slide the window circuit over every pixel for each stage of `plan`.
///
/// Every stage needs a ternary kernel. Conductance perturbations are drawn
/// once per run from `config.conductance_seed`.
pub fn denoise_image_circuit(
    a: &ImageTensor,
    model: CircuitModel,
    plan: &StagePlan,
    config: &CircuitConfig,
) -> Result<(ImageTensor, CircuitRun), CircuitError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.conductance_seed);
    let mut programmed = Vec::with_capacity(plan.stages.len());
    for (i, stage) in plan.stages.iter().enumerate() {
        let Kernel::Ternary(k) = &stage.kernel else {
            return Err(CircuitError::NotTernary { stage: i });
        };
        programmed.push(ProgrammedStage::program(k, config, &mut rng)?);
    }

    let (w, h) = a.dims();
    let mut current = a.clone();
    let mut stages = Vec::with_capacity(programmed.len());
    let mut total = DivergenceCounters::default();
    for stage in &programmed {
        let v_th = config.device.v_th;
        if let Some(&volts) = current.data().iter().find(|v| v.abs() > v_th) {
            return Err(CircuitError::ReadDisturb { volts, v_th });
        }
        let mask = nonnoisy_mask(&current);
        let rows: Vec<Vec<WindowOutput>> = (0..h)
            .into_par_iter()
            .map(|row| {
                (0..w)
                    .map(|col| {
                        let sig = WindowSignals::extract(&current, &mask, row, col, stage.size);
                        evaluate_window(&sig, stage, config, model)
                    })
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        let outputs: Vec<WindowOutput> = rows.into_iter().flatten().collect();

        let mut counters = DivergenceCounters::default();
        let mut restored = Vec::new();
        for (i, o) in outputs.iter().enumerate() {
            counters.clamped_nodes += o.flags.clamped_nodes as usize;
            counters.floor_engaged_windows += usize::from(o.flags.floor_engaged);
            if !mask.data()[i] {
                counters.negative_denominator_windows += usize::from(o.flags.negative_denominator);
                counters.zero_denominator_windows += usize::from(o.flags.zero_denominator);
                if o.nodes.update != 0.0 {
                    restored.push((i / w, i % w));
                }
            }
        }
        counters.restored_pixels = restored.len();
        total.add(&counters);

        let map = |f: &dyn Fn(&WindowOutput) -> f64| {
            ImageTensor::new(w, h, outputs.iter().map(f).collect()).expect("shape preserved")
        };
        let output = map(&|o| o.nodes.output);
        stages.push(CircuitStageTrace {
            size: stage.size,
            a_conv: map(&|o| o.nodes.a_conv),
            m_conv: map(&|o| o.nodes.m_conv),
            f_conv: match model {
                CircuitModel::Msc => Some(map(&|o| o.nodes.f_conv.unwrap_or(0.0))),
                CircuitModel::Msce => None,
            },
            zero2one: map(&|o| o.nodes.zero2one),
            n: map(&|o| o.nodes.n),
            m_noisy: map(&|o| o.nodes.m_noisy),
            f: map(&|o| o.nodes.f),
            output: output.clone(),
            restored,
            counters,
        });
        current = output;
    }
    Ok((
        current,
        CircuitRun {
            model,
            stages,
            counters: total,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::preprocess;
    use crate::seconv::{restore_theory_msce, restore_tsc};
    use approx::assert_abs_diff_eq;

    fn cfg() -> CircuitConfig {
        CircuitConfig::default()
    }

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(0)
    }

    fn ones3() -> TernaryKernel {
        TernaryKernel::ones(3).unwrap()
    }

    #[test]
    fn differential_crossbar_is_exact_dot_product() {
        let bar = Crossbar::program(&ones3(), &cfg(), &mut rng()).unwrap();
        assert_eq!(crossbar_conv(&[1.0; 9], &bar).unwrap(), 9.0);
        assert_eq!(crossbar_conv(&[0.0; 9], &bar).unwrap(), 0.0);
        assert!(crossbar_conv(&[0.0; 4], &bar).is_err());
    }

    #[test]
    fn single_mode_leaks_through_zero_taps() {
        let config = CircuitConfig {
            weight_mode: WeightMode::Single,
            ..cfg()
        };
        let k = TernaryKernel::new(3, vec![1, 0, 0, 0, 0, 0, 0, 0, 0]).unwrap();
        let bar = Crossbar::program(&k, &config, &mut rng()).unwrap();
        let v = [0.5, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8];
        let expected = 0.5 + 0.01 * v[1..].iter().sum::<f64>();
        assert_abs_diff_eq!(crossbar_conv(&v, &bar).unwrap(), expected, epsilon = 1e-12);
        let signed = TernaryKernel::new(3, vec![-1, 0, 0, 0, 0, 0, 0, 0, 0]).unwrap();
        assert_eq!(
            Crossbar::program(&signed, &config, &mut rng()).unwrap_err(),
            CircuitError::NegativeWeightInSingleMode { tap: 0 }
        );
    }

    #[test]
    fn fixed_array_counts_mask_voltages() {
        let mut m = [0.0; 9];
        m[0] = 1.0;
        m[4] = 1.0;
        m[8] = 1.0;
        assert_eq!(rc_fixed_conv(&m, 3, &cfg()).unwrap(), 3.0);
        assert_eq!(rc_fixed_conv(&[0.0; 9], 3, &cfg()).unwrap(), 0.0);
    }

    #[test]
    fn converter_comparator_divider_inverter() {
        let c = cfg();
        assert_eq!(signal_convert_zero2one(0.0, &c), 1.0);
        assert_eq!(signal_convert_zero2one(0.5, &c), 0.5);
        assert_eq!(signal_convert_zero2one(-0.01, &c), 1.0);

        assert_eq!(comparator_threshold(3.0, 1.0, 1e-9), 1.0);
        assert_eq!(comparator_threshold(0.0, 1.0, 1e-9), 0.0);
        assert_eq!(comparator_threshold(1.0, 1.0, 1e-9), 1.0);
        assert_eq!(comparator_threshold(1.0 - 1e-12, 1.0, 1e-9), 1.0);

        assert_abs_diff_eq!(divider(1.1, 3.0, &c).unwrap().volts, 0.36667, epsilon = 1e-5);
        assert_eq!(divider(0.0, 7.0, &c).unwrap().volts, 0.0);
        assert_eq!(divider(-0.5, 2.0, &c).unwrap().volts, -0.25);
        assert!(divider(1.0, 1e-9, &c).unwrap().clamped);
        assert_eq!(
            divider(1.0, 0.0, &c).unwrap_err(),
            CircuitError::NonPositiveDenominator(0.0)
        );

        assert_eq!(inverter(1.0), 0.0);
        assert_eq!(inverter(0.0), 1.0);
        assert_eq!(inverter(inverter(0.25)), 0.25);
    }

    fn hand_window() -> WindowSignals {
        let v = vec![0.0, 0.5, 0.0, 0.2, 0.0, 0.4, 0.0, 0.0, 0.0];
        let m = v.iter().map(|&x| if x != 0.0 { 1.0 } else { 0.0 }).collect();
        WindowSignals::new(v, m).unwrap()
    }

    #[test]
    fn hand_window_matches_ideal() {
        let stage = ProgrammedStage::program(&ones3(), &cfg(), &mut rng()).unwrap();
        let msc = window_msc(&hand_window(), &stage, &cfg()).unwrap();
        assert_abs_diff_eq!(msc.value(), 1.1 / 3.0, epsilon = 1e-12);
        assert_eq!(msc.nodes.f, 1.0);
        let msce = window_msce(&hand_window(), &stage, &cfg()).unwrap();
        assert_abs_diff_eq!(msce.value(), msc.value(), epsilon = 1e-15);
        assert_eq!(msce.nodes.f_conv, None);
    }

    #[test]
    fn clean_center_passes_through() {
        let v = vec![0.3, 0.5, 0.0, 0.2, 0.6, 0.4, 0.0, 0.0, 0.9];
        let m = v.iter().map(|&x| if x != 0.0 { 1.0 } else { 0.0 }).collect();
        let sig = WindowSignals::new(v, m).unwrap();
        let stage = ProgrammedStage::program(&ones3(), &cfg(), &mut rng()).unwrap();
        assert_eq!(window_msc(&sig, &stage, &cfg()).unwrap().value(), 0.6);
        assert_eq!(window_msce(&sig, &stage, &cfg()).unwrap().value(), 0.6);
    }

    #[test]
    fn isolated_noisy_pixel_stays_zero() {
        let sig = WindowSignals::new(vec![0.0; 9], vec![0.0; 9]).unwrap();
        let stage = ProgrammedStage::program(&ones3(), &cfg(), &mut rng()).unwrap();
        let out = window_msce(&sig, &stage, &cfg()).unwrap();
        assert_eq!(out.value(), 0.0);
        assert_eq!(out.nodes.zero2one, 1.0);
        assert!(out.flags.zero_denominator);
    }

    #[test]
    fn negative_mask_sum_diverges_from_reference() {
        // only the -1 tap sees a clean pixel
        let k = TernaryKernel::new(3, vec![0, 1, 0, 1, 1, -1, 0, 1, 0]).unwrap();
        let stage = ProgrammedStage::program(&k, &cfg(), &mut rng()).unwrap();
        let mut v = vec![0.0; 9];
        v[5] = 0.4;
        let m: Vec<f64> = v.iter().map(|&x| if x != 0.0 { 1.0 } else { 0.0 }).collect();
        let sig = WindowSignals::new(v, m).unwrap();
        let out = window_msc(&sig, &stage, &cfg()).unwrap();
        assert!(out.flags.negative_denominator);
        assert_abs_diff_eq!(out.nodes.m_conv, -1.0, epsilon = 1e-12);
        assert_eq!(out.nodes.zero2one, 1.0);
        // circuit: -0.4 / 1; reference: -0.4 / -1
        assert_abs_diff_eq!(out.value(), -0.4, epsilon = 1e-12);
    }

    #[test]
    fn window_signal_validation() {
        assert!(matches!(
            WindowSignals::new(vec![0.0; 9], vec![0.5; 9]),
            Err(CircuitError::MaskLevel { .. })
        ));
        assert!(matches!(
            WindowSignals::new(vec![0.2; 9], vec![0.0; 9]),
            Err(CircuitError::UnmaskedPixel { .. })
        ));
        assert!(matches!(
            WindowSignals::new(vec![0.0; 8], vec![0.0; 8]),
            Err(CircuitError::WindowShape(8))
        ));
    }

    #[test]
    fn bad_converter_reference_trips_divider_contract() {
        let config = CircuitConfig {
            zero2one_ref: -0.5,
            ..cfg()
        };
        let stage = ProgrammedStage::program(&ones3(), &config, &mut rng()).unwrap();
        let sig = WindowSignals::new(vec![0.0; 9], vec![0.0; 9]).unwrap();
        assert_eq!(
            window_msce(&sig, &stage, &config).unwrap_err(),
            CircuitError::NonPositiveDenominator(0.0)
        );
    }

    fn sample_image(seed: u64, d: f64) -> ImageTensor {
        use rand::Rng;
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..100)
            .map(|_| {
                if r.random::<f64>() < d {
                    0.0
                } else {
                    f64::from(r.random_range(1u8..255)) / 255.0
                }
            })
            .collect();
        preprocess(&ImageTensor::new(10, 10, data).unwrap())
    }

    #[test]
    fn image_driver_matches_reference_for_all_ones() {
        let plan = StagePlan::single(Kernel::Ternary(ones3()));
        for seed in 0..20 {
            let a = sample_image(seed, 0.5);
            let mask = nonnoisy_mask(&a);
            let (tsc, tr) = restore_tsc(&a, &mask, &ones3().to_full());
            let (msc, run) = denoise_image_circuit(&a, CircuitModel::Msc, &plan, &cfg()).unwrap();
            for (x, y) in tsc.data().iter().zip(msc.data()) {
                assert!((x - y).abs() <= 1e-12);
            }
            assert_eq!(run.stages[0].restored, tr.restored);
            let (theory, _) = restore_theory_msce(&a, &mask, &ones3().to_full());
            let (msce, _) = denoise_image_circuit(&a, CircuitModel::Msce, &plan, &cfg()).unwrap();
            for (x, y) in theory.data().iter().zip(msce.data()) {
                assert!((x - y).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn image_driver_rejects_full_precision_and_overdrive() {
        let fp = crate::quantize::FullPrecisionKernel::ones(3).unwrap();
        let plan = StagePlan::single(Kernel::Full(fp));
        let a = sample_image(1, 0.2);
        assert_eq!(
            denoise_image_circuit(&a, CircuitModel::Msc, &plan, &cfg()).unwrap_err(),
            CircuitError::NotTernary { stage: 0 }
        );
        let plan = StagePlan::single(Kernel::Ternary(ones3()));
        let hot = ImageTensor::new(2, 1, vec![0.5, 2.0]).unwrap();
        assert!(matches!(
            denoise_image_circuit(&hot, CircuitModel::Msce, &plan, &cfg()),
            Err(CircuitError::ReadDisturb { .. })
        ));
    }

    #[test]
    fn variability_is_seeded() {
        let config = CircuitConfig {
            conductance_sigma: 0.05,
            conductance_seed: 9,
            ..cfg()
        };
        let plan = StagePlan::single(Kernel::Ternary(ones3()));
        let a = sample_image(4, 0.4);
        let (x, _) = denoise_image_circuit(&a, CircuitModel::Msce, &plan, &config).unwrap();
        let (y, _) = denoise_image_circuit(&a, CircuitModel::Msce, &plan, &config).unwrap();
        assert_eq!(x, y);
        let (ideal, _) = denoise_image_circuit(&a, CircuitModel::Msce, &plan, &cfg()).unwrap();
        assert_ne!(x, ideal);
    }
}
