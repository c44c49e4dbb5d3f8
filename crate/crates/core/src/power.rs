//! Static read power of the crossbars and programming-power bookkeeping.
//!
//! Every input voltage drives one conductance pair per crossbar it feeds:
//! the pixel array and the mask array in both circuits, plus the resistor
//! pair of the fixed-kernel array in MSC. Op-amps, comparators and switches
//! are not counted.

use serde::{Deserialize, Serialize};

use crate::circuit::CircuitModel;
use crate::device::DeviceParams;
use crate::quantize::TernaryKernel;

/// Read voltages tabulated per weight class.
pub const TABLE_VOLTAGES: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

/// Densities tabulated for 100x100 images.
pub const TABLE_DENSITIES: [f64; 8] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum WeightClass {
    #[serde(rename = "0")]
    Zero,
    #[serde(rename = "1/-1")]
    Nonzero,
}

impl WeightClass {
    pub fn of(weight: i8) -> Self {
        if weight == 0 {
            WeightClass::Zero
        } else {
            WeightClass::Nonzero
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            WeightClass::Zero => "0",
            WeightClass::Nonzero => "1/-1",
        }
    }
}

/// Published per-input values, microwatts, indexed like [`TABLE_VOLTAGES`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PublishedRow {
    pub class: WeightClass,
    pub model: CircuitModel,
    pub cells: [f64; 9],
    pub mean: f64,
}

pub const PUBLISHED_PER_INPUT: [PublishedRow; 4] = [
    PublishedRow {
        class: WeightClass::Zero,
        model: CircuitModel::Msc,
        cells: [103.02, 103.08, 103.18, 103.32, 103.5, 103.72, 103.98, 104.28, 104.62],
        mean: 103.36,
    },
    PublishedRow {
        class: WeightClass::Zero,
        model: CircuitModel::Msce,
        cells: [2.02, 2.08, 2.18, 2.32, 2.5, 2.72, 2.98, 3.28, 3.62],
        mean: 2.36,
    },
    PublishedRow {
        class: WeightClass::Nonzero,
        model: CircuitModel::Msc,
        cells: [204.01, 206.04, 211.09, 218.16, 227.25, 238.36, 251.49, 266.64, 283.81],
        mean: 234.09,
    },
    PublishedRow {
        class: WeightClass::Nonzero,
        model: CircuitModel::Msce,
        cells: [103.01, 105.04, 110.09, 117.16, 126.25, 137.36, 150.49, 165.64, 182.81],
        mean: 133.09,
    },
];

/// Published image power, watts, indexed like [`TABLE_DENSITIES`].
pub const PUBLISHED_PER_IMAGE_MSC: [f64; 8] = [1.58, 1.41, 1.23, 1.06, 0.88, 0.70, 0.53, 0.35];
pub const PUBLISHED_PER_IMAGE_MSCE: [f64; 8] = [0.67, 0.60, 0.52, 0.45, 0.37, 0.30, 0.22, 0.15];

/// Published per-input kernel means, microwatts.
pub const PUBLISHED_KERNEL_MEAN_MSCE: f64 = 74.98;
pub const PUBLISHED_KERNEL_MEAN_MSC: f64 = 175.98;

/// Published per-device programming power at 2 V, microwatts.
pub const PUBLISHED_PROGRAMMING_POWER_UW: f64 = 15.7;

pub fn published_row(class: WeightClass, model: CircuitModel) -> &'static PublishedRow {
    PUBLISHED_PER_INPUT
        .iter()
        .find(|r| r.class == class && r.model == model)
        .expect("table covers every class and model")
}

/// Which per-class means feed the kernel average.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeanBasis {
    /// Mean of the model's own cells.
    #[default]
    Model,
    /// The printed Mean column.
    Published,
}

/// Power of one conductance pair at read voltage `v`, microwatts.
pub fn pair_power(v: f64, class: WeightClass, params: &DeviceParams) -> f64 {
    let s = match class {
        WeightClass::Zero => 2.0 * params.g_off(),
        WeightClass::Nonzero => params.g_on() + params.g_off(),
    };
    v * v * s * 1e6
}

/// Power drawn by one input (pixel voltage `v`, mask voltage `m`), microwatts.
pub fn input_power(
    v: f64,
    m: f64,
    class: WeightClass,
    model: CircuitModel,
    params: &DeviceParams,
) -> f64 {
    let msce = pair_power(v, class, params) + pair_power(m, class, params);
    match model {
        CircuitModel::Msce => msce,
        CircuitModel::Msc => msce + pair_power(m, WeightClass::Nonzero, params),
    }
}

/// Model value of one table cell next to the printed one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerCell {
    pub volts: f64,
    pub model_uw: f64,
    pub published_uw: f64,
    /// The printed value disagrees with the model beyond rounding.
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerRow {
    pub class: WeightClass,
    pub model: CircuitModel,
    pub cells: Vec<PowerCell>,
    /// Mean of the model cells.
    pub model_mean_uw: f64,
    /// Mean of the printed cells.
    pub published_cells_mean_uw: f64,
    /// The printed Mean column.
    pub published_mean_uw: f64,
}

/// Per-input cells at each tabulated voltage with `m = 1 V`.
pub fn power_table(params: &DeviceParams) -> Vec<PowerRow> {
    PUBLISHED_PER_INPUT
        .iter()
        .map(|p| {
            let cells: Vec<PowerCell> = TABLE_VOLTAGES
                .iter()
                .zip(p.cells)
                .map(|(&v, published)| {
                    let model = input_power(v, 1.0, p.class, p.model, params);
                    PowerCell {
                        volts: v,
                        model_uw: model,
                        published_uw: published,
                        flagged: (model - published).abs() > 0.01,
                    }
                })
                .collect();
            let n = cells.len() as f64;
            PowerRow {
                class: p.class,
                model: p.model,
                model_mean_uw: cells.iter().map(|c| c.model_uw).sum::<f64>() / n,
                published_cells_mean_uw: p.cells.iter().sum::<f64>() / n,
                published_mean_uw: p.mean,
                cells,
            }
        })
        .collect()
}

fn class_mean(class: WeightClass, model: CircuitModel, basis: MeanBasis, params: &DeviceParams) -> f64 {
    match basis {
        MeanBasis::Published => published_row(class, model).mean,
        MeanBasis::Model => {
            TABLE_VOLTAGES
                .iter()
                .map(|&v| input_power(v, 1.0, class, model, params))
                .sum::<f64>()
                / TABLE_VOLTAGES.len() as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelPowerProfile {
    pub model: CircuitModel,
    pub basis: MeanBasis,
    pub nonzero_weights: usize,
    pub zero_weights: usize,
    pub nonzero_mean_uw: f64,
    pub zero_mean_uw: f64,
    /// All `s^2` inputs of one window, microwatts.
    pub window_total_uw: f64,
    pub per_input_mean_uw: f64,
}

/// Average power of one window of `kernel`, built from per-class means.
pub fn kernel_power_profile(
    kernel: &TernaryKernel,
    model: CircuitModel,
    basis: MeanBasis,
    params: &DeviceParams,
) -> KernelPowerProfile {
    let n1 = kernel.nonzero_count();
    let n0 = kernel.zero_count();
    let m1 = class_mean(WeightClass::Nonzero, model, basis, params);
    let m0 = class_mean(WeightClass::Zero, model, basis, params);
    let total = n1 as f64 * m1 + n0 as f64 * m0;
    KernelPowerProfile {
        model,
        basis,
        nonzero_weights: n1,
        zero_weights: n0,
        nonzero_mean_uw: m1,
        zero_mean_uw: m0,
        window_total_uw: total,
        per_input_mean_uw: total / (n1 + n0) as f64,
    }
}

/// Watts for an image of `n_pixels` at density `d`: noisy pixels are read at
/// 0 V and draw nothing, every clean pixel is billed once.
pub fn image_power(n_pixels: usize, d: f64, per_input_mean_uw: f64) -> f64 {
    n_pixels as f64 * (1.0 - d) * per_input_mean_uw * 1e-6
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImagePowerRow {
    pub model: CircuitModel,
    pub per_input_mean_uw: f64,
    pub watts: Vec<f64>,
    pub published_watts: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImagePowerTable {
    pub n_pixels: usize,
    pub densities: Vec<f64>,
    pub basis: MeanBasis,
    pub msc: ImagePowerRow,
    pub msce: ImagePowerRow,
    /// MSCE watts over MSC watts, per density.
    pub ratio: Vec<f64>,
}

pub fn image_power_table(
    kernel: &TernaryKernel,
    n_pixels: usize,
    basis: MeanBasis,
    params: &DeviceParams,
) -> ImagePowerTable {
    let row = |model, published: &[f64; 8]| {
        let mean = kernel_power_profile(kernel, model, basis, params).per_input_mean_uw;
        ImagePowerRow {
            model,
            per_input_mean_uw: mean,
            watts: TABLE_DENSITIES
                .iter()
                .map(|&d| image_power(n_pixels, d, mean))
                .collect(),
            published_watts: published.to_vec(),
        }
    };
    let msc = row(CircuitModel::Msc, &PUBLISHED_PER_IMAGE_MSC);
    let msce = row(CircuitModel::Msce, &PUBLISHED_PER_IMAGE_MSCE);
    let ratio = msce.watts.iter().zip(&msc.watts).map(|(e, c)| e / c).collect();
    ImagePowerTable {
        n_pixels,
        densities: TABLE_DENSITIES.to_vec(),
        basis,
        msc,
        msce,
        ratio,
    }
}

/// Upper bound when every device switches fully, microwatts.
pub fn programming_power_total(n_memristors: usize, per_device_uw: f64) -> f64 {
    n_memristors as f64 * per_device_uw
}

/// Memristors in both crossbars of an `s x s` kernel (two per weight, two arrays).
pub fn memristor_count(kernel: &TernaryKernel) -> usize {
    4 * kernel.weights().len()
}

fn model_label(m: CircuitModel) -> &'static str {
    match m {
        CircuitModel::Msc => "MSC",
        CircuitModel::Msce => "MSCE",
    }
}

/// Per-input table as CSV: one row per (class, model) with the model cells,
/// then a flagged-cell annotation section.
pub fn power_table_csv(rows: &[PowerRow]) -> String {
    let mut out = String::from("weight,model");
    for v in TABLE_VOLTAGES {
        out.push_str(&format!(",{v:.1}V"));
    }
    out.push_str(",mean,published_mean\n");
    for r in rows {
        out.push_str(&format!("{},{}", r.class.label(), model_label(r.model)));
        for c in &r.cells {
            out.push_str(&format!(",{:.2}", c.model_uw));
        }
        out.push_str(&format!(",{:.2},{:.2}\n", r.model_mean_uw, r.published_mean_uw));
    }
    out.push_str("\nflagged,weight,model,volts,model_uw,published_uw\n");
    for r in rows {
        for c in r.cells.iter().filter(|c| c.flagged) {
            out.push_str(&format!(
                "flagged,{},{},{:.1},{:.2},{:.2}\n",
                r.class.label(),
                model_label(r.model),
                c.volts,
                c.model_uw,
                c.published_uw
            ));
        }
    }
    out
}

pub fn image_power_csv(table: &ImagePowerTable) -> String {
    let mut out = String::from("model");
    for d in &table.densities {
        out.push_str(&format!(",{:.0}%", d * 100.0));
    }
    out.push('\n');
    for row in [&table.msc, &table.msce] {
        out.push_str(model_label(row.model));
        for w in &row.watts {
            out.push_str(&format!(",{w:.2}"));
        }
        out.push('\n');
    }
    out.push_str("MSCE/MSC");
    for r in &table.ratio {
        out.push_str(&format!(",{r:.4}"));
    }
    out.push('\n');
    out
}
