//! Convolution kernels, ternary quantization, and the differential
//! conductance encoding of ternary weights.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::device::DeviceParams;

#[derive(Debug, Error, PartialEq)]
pub enum KernelError {
    #[error("kernel size must be odd and >= 3, got {0}")]
    Size(usize),
    #[error("kernel of size {size} needs {} weights, found {found}", size * size)]
    Shape { size: usize, found: usize },
    #[error("ternary weight {value} at index {index} is not one of -1, 0, 1")]
    Domain { index: usize, value: f64 },
    #[error("non-finite weight at index {0}")]
    NonFinite(usize),
    #[error("weight file: {0}")]
    Json(String),
    #[error("unknown kernel name '{0}'")]
    UnknownName(String),
}

fn check_size(size: usize, found: usize) -> Result<(), KernelError> {
    if size < 3 || size.is_multiple_of(2) {
        return Err(KernelError::Size(size));
    }
    if size * size != found {
        return Err(KernelError::Shape { size, found });
    }
    Ok(())
}

/// Real-valued `s x s` kernel, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FullPrecisionKernel {
    size: usize,
    weights: Vec<f64>,
}

impl FullPrecisionKernel {
    pub fn new(size: usize, weights: Vec<f64>) -> Result<Self, KernelError> {
        check_size(size, weights.len())?;
        if let Some(i) = weights.iter().position(|w| !w.is_finite()) {
            return Err(KernelError::NonFinite(i));
        }
        Ok(Self { size, weights })
    }

    /// The fixed (all-ones) kernel.
    pub fn ones(size: usize) -> Result<Self, KernelError> {
        Self::new(size, vec![1.0; size * size])
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn is_non_negative(&self) -> bool {
        self.weights.iter().all(|&w| w >= 0.0)
    }
}

/// Kernel with weights in {-1, 0, +1}, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TernaryKernel {
    size: usize,
    weights: Vec<i8>,
}

impl TernaryKernel {
    pub fn new(size: usize, weights: Vec<i8>) -> Result<Self, KernelError> {
        check_size(size, weights.len())?;
        if let Some(i) = weights.iter().position(|w| !(-1..=1).contains(w)) {
            return Err(KernelError::Domain {
                index: i,
                value: f64::from(weights[i]),
            });
        }
        Ok(Self { size, weights })
    }

    pub fn ones(size: usize) -> Result<Self, KernelError> {
        Self::new(size, vec![1; size * size])
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn weights(&self) -> &[i8] {
        &self.weights
    }

    pub fn nonzero_count(&self) -> usize {
        self.weights.iter().filter(|&&w| w != 0).count()
    }

    pub fn zero_count(&self) -> usize {
        self.weights.len() - self.nonzero_count()
    }

    pub fn is_non_negative(&self) -> bool {
        self.weights.iter().all(|&w| w >= 0)
    }

    pub fn to_full(&self) -> FullPrecisionKernel {
        FullPrecisionKernel {
            size: self.size,
            weights: self.weights.iter().map(|&w| f64::from(w)).collect(),
        }
    }
}

/// `0.75 * mean(|W|)`.
pub fn threshold(kernel: &FullPrecisionKernel) -> f64 {
    threshold_of(&kernel.weights)
}

/// [`threshold`] on a bare weight list.
pub fn threshold_of(weights: &[f64]) -> f64 {
    0.75 * weights.iter().map(|w| w.abs()).sum::<f64>() / weights.len() as f64
}

/// Ternarize with the magnitude threshold. `|W| == theta` maps to 0, so an
/// all-zero kernel stays all-zero.
pub fn ternarize(kernel: &FullPrecisionKernel) -> TernaryKernel {
    TernaryKernel {
        size: kernel.size,
        weights: ternarize_weights(&kernel.weights),
    }
}

/// [`ternarize`] on a bare weight list.
pub fn ternarize_weights(weights: &[f64]) -> Vec<i8> {
    let theta = threshold_of(weights);
    weights
        .iter()
        .map(|&w| {
            if w > theta {
                1
            } else if w < -theta {
                -1
            } else {
                0
            }
        })
        .collect()
}

/// One weight as two device conductances, siemens.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConductancePair {
    pub g_plus: f64,
    pub g_minus: f64,
}

impl ConductancePair {
    pub fn for_weight(weight: i8, params: &DeviceParams) -> Self {
        let (on, off) = (params.g_on(), params.g_off());
        match weight {
            1 => Self {
                g_plus: on,
                g_minus: off,
            },
            -1 => Self {
                g_plus: off,
                g_minus: on,
            },
            _ => Self {
                g_plus: off,
                g_minus: off,
            },
        }
    }

    /// Sign of `g_plus - g_minus` as a ternary weight.
    pub fn recovered_weight(&self) -> i8 {
        let d = self.g_plus - self.g_minus;
        if d > 0.0 {
            1
        } else if d < 0.0 {
            -1
        } else {
            0
        }
    }
}

pub fn map_conductance(kernel: &TernaryKernel, params: &DeviceParams) -> Vec<ConductancePair> {
    kernel
        .weights
        .iter()
        .map(|&w| ConductancePair::for_weight(w, params))
        .collect()
}

/// A kernel as read from a weight file.
#[derive(Debug, Clone, PartialEq)]
pub enum Kernel {
    Full(FullPrecisionKernel),
    Ternary(TernaryKernel),
}

impl Kernel {
    pub fn size(&self) -> usize {
        match self {
            Kernel::Full(k) => k.size(),
            Kernel::Ternary(k) => k.size(),
        }
    }

    pub fn to_full(&self) -> FullPrecisionKernel {
        match self {
            Kernel::Full(k) => k.clone(),
            Kernel::Ternary(k) => k.to_full(),
        }
    }

    pub fn is_ternary(&self) -> bool {
        matches!(self, Kernel::Ternary(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Precision {
    Full,
    Ternary,
}

#[derive(Serialize, Deserialize)]
struct WeightFile {
    size: usize,
    precision: Precision,
    weights: Vec<f64>,
}

/// Parse a `{size, precision, weights}` JSON weight file.
pub fn load_weights(bytes: &[u8]) -> Result<Kernel, KernelError> {
    let file: WeightFile =
        serde_json::from_slice(bytes).map_err(|e| KernelError::Json(e.to_string()))?;
    check_size(file.size, file.weights.len())?;
    match file.precision {
        Precision::Full => FullPrecisionKernel::new(file.size, file.weights).map(Kernel::Full),
        Precision::Ternary => {
            let mut out = Vec::with_capacity(file.weights.len());
            for (index, &value) in file.weights.iter().enumerate() {
                if value != -1.0 && value != 0.0 && value != 1.0 {
                    return Err(KernelError::Domain { index, value });
                }
                out.push(value as i8);
            }
            TernaryKernel::new(file.size, out).map(Kernel::Ternary)
        }
    }
}

pub fn save_weights(kernel: &Kernel) -> Vec<u8> {
    let file = match kernel {
        Kernel::Full(k) => WeightFile {
            size: k.size,
            precision: Precision::Full,
            weights: k.weights.clone(),
        },
        Kernel::Ternary(k) => WeightFile {
            size: k.size,
            precision: Precision::Ternary,
            weights: k.weights.iter().map(|&w| f64::from(w)).collect(),
        },
    };
    let mut out = serde_json::to_vec_pretty(&file).expect("plain data serializes");
    out.push(b'\n');
    out
}

/// Names accepted by [`fixture`].
pub const FIXTURE_NAMES: &[&str] = &["ones", "cross", "signed", "fp", "fp-signed"];

/// Built-in kernels.
///
/// * `ones`: the fixed all-ones kernel, any odd `size`.
/// * `cross`: 3x3 ternary plus shape: five `+1` taps, four `0` corners.
/// * `signed`: 3x3 ternary with five nonzero taps, one of them `-1`.
/// * `fp`: 3x3 full-precision kernel that ternarizes to `cross`.
/// * `fp-signed`: 3x3 full-precision kernel that ternarizes to `signed`.
///
/// The 3x3 fixtures ignore `size`.
pub fn fixture(name: &str, size: usize) -> Result<Kernel, KernelError> {
    match name {
        "ones" => TernaryKernel::ones(size).map(Kernel::Ternary),
        "cross" => TernaryKernel::new(3, vec![0, 1, 0, 1, 1, 1, 0, 1, 0]).map(Kernel::Ternary),
        "signed" => TernaryKernel::new(3, vec![0, 1, 0, 1, 1, -1, 0, 1, 0]).map(Kernel::Ternary),
        "fp" => FullPrecisionKernel::new(3, vec![0.2, 0.9, 0.2, 0.9, 1.0, 0.9, 0.2, 0.9, 0.2])
            .map(Kernel::Full),
        "fp-signed" => FullPrecisionKernel::new(
            3,
            vec![0.1, 0.8, -0.15, 0.7, 0.9, -0.85, 0.05, 0.75, 0.2],
        )
        .map(Kernel::Full),
        other => Err(KernelError::UnknownName(other.to_string())),
    }
}
