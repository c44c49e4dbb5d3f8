//! End-to-end experiment drivers: noise, restoration by any of the four
//! models, metrics and power, plus sweeps, the weight-encoding ablation and
//! single-window traces.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::{
    denoise_image_circuit, CircuitConfig, CircuitError, CircuitModel, CircuitRun, CircuitStageTrace,
    DivergenceCounters, WeightMode,
};
use crate::corpus::seeded_image;
use crate::image::{
    denormalize, inject_sap, nonnoisy_mask, normalize, preprocess, GrayImage, ImageTensor,
    NoiseSpec, ShapeError,
};
use crate::metrics::{psnr, ssim, MetricError, Psnr};
use crate::power::{input_power, WeightClass};
use crate::quantize::{fixture, ternarize, Kernel, KernelError, TernaryKernel};
use crate::seconv::{cascade, restore_theory_msce, restore_tsc, ReferenceVariant, ReliabilityRule, Stage, StagePlan, StageTrace};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("bad stage list '{0}': {1}")]
    StageSyntax(String, String),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("stage {index} declares size {declared} but kernel '{kernel}' is {actual}x{actual}")]
    StageSize {
        index: usize,
        declared: usize,
        kernel: String,
        actual: usize,
    },
    #[error("model {model} needs ternary weights; stage {stage} is full precision (enable quantize)")]
    NeedsTernary { model: Model, stage: usize },
    #[error("ablation needs a non-negative kernel; stage {0} has a negative weight")]
    NegativeKernel(usize),
    #[error("invalid noise spec: {0}")]
    Noise(String),
    #[error("empty {0}")]
    Empty(&'static str),
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Shape(#[from] ShapeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Model {
    Fpsc,
    Tsc,
    Msc,
    Msce,
}

impl Model {
    pub const ALL: [Model; 4] = [Model::Fpsc, Model::Tsc, Model::Msc, Model::Msce];

    pub fn name(&self) -> &'static str {
        match self {
            Model::Fpsc => "FPSC",
            Model::Tsc => "TSC",
            Model::Msc => "MSC",
            Model::Msce => "MSCE",
        }
    }

    pub fn circuit(&self) -> Option<CircuitModel> {
        match self {
            Model::Msc => Some(CircuitModel::Msc),
            Model::Msce => Some(CircuitModel::Msce),
            _ => None,
        }
    }
}

impl std::fmt::Display for Model {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Model {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "FPSC" => Ok(Model::Fpsc),
            "TSC" => Ok(Model::Tsc),
            "MSC" => Ok(Model::Msc),
            "MSCE" => Ok(Model::Msce),
            _ => Err(format!("unknown model '{s}' (expected FPSC, TSC, MSC or MSCE)")),
        }
    }
}

/// One stage as written in a config: kernel size, kernel name, reliability rule.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageSpec {
    pub size: usize,
    /// Fixture name or weight-file path.
    pub kernel: String,
    #[serde(default)]
    pub rule: ReliabilityRule,
}

impl StageSpec {
    pub fn new(size: usize, kernel: &str) -> Self {
        Self {
            size,
            kernel: kernel.to_string(),
            rule: ReliabilityRule::Thresholded,
        }
    }

    /// Build the stage from an already loaded kernel, checking its size.
    pub fn with_kernel(&self, index: usize, kernel: Kernel) -> Result<Stage, PipelineError> {
        if kernel.size() != self.size {
            return Err(PipelineError::StageSize {
                index,
                declared: self.size,
                kernel: self.kernel.clone(),
                actual: kernel.size(),
            });
        }
        Ok(Stage::new(kernel, self.rule))
    }

    /// Build the stage from a fixture name.
    pub fn fixture_stage(&self, index: usize) -> Result<Stage, PipelineError> {
        self.with_kernel(index, fixture(&self.kernel, self.size)?)
    }
}

/// Parse `size:kernel[:rule]` items separated by commas, e.g.
/// `3:cross,5:ones:always-one`. A bare size means the all-ones kernel.
pub fn parse_stages(text: &str) -> Result<Vec<StageSpec>, PipelineError> {
    let err = |why: &str| PipelineError::StageSyntax(text.to_string(), why.to_string());
    let mut out = Vec::new();
    for item in text.split(',').map(str::trim) {
        if item.is_empty() {
            return Err(err("empty item"));
        }
        let parts: Vec<&str> = item.split(':').collect();
        if parts.len() > 3 {
            return Err(err("too many ':' fields"));
        }
        let size: usize = parts[0]
            .parse()
            .map_err(|_| err(&format!("'{}' is not a kernel size", parts[0])))?;
        let kernel = parts.get(1).copied().unwrap_or("ones");
        let rule = match parts.get(2).copied() {
            None | Some("thresholded") => ReliabilityRule::Thresholded,
            Some("always-one") => ReliabilityRule::AlwaysOne,
            Some(other) => return Err(err(&format!("unknown rule '{other}'"))),
        };
        out.push(StageSpec {
            size,
            kernel: kernel.to_string(),
            rule,
        });
    }
    Ok(out)
}

/// Stage specs for the seven-layer sequence with one kernel name throughout.
pub fn full_cascade_specs(kernel: &str) -> Vec<StageSpec> {
    StagePlan::FULL_CASCADE
        .iter()
        .map(|&s| StageSpec::new(s, kernel))
        .collect()
}

/// Resolve fixture-named specs into a plan.
pub fn fixture_plan(specs: &[StageSpec]) -> Result<StagePlan, PipelineError> {
    if specs.is_empty() {
        return Err(PipelineError::Empty("stage list"));
    }
    let stages = specs
        .iter()
        .enumerate()
        .map(|(i, s)| s.fixture_stage(i))
        .collect::<Result<_, _>>()?;
    Ok(StagePlan { stages })
}

/// Adapt a plan to `model`: ternary models quantize full-precision stages
/// when `quantize` is set and refuse them otherwise.
pub fn plan_for_model(plan: &StagePlan, model: Model, quantize: bool) -> Result<StagePlan, PipelineError> {
    let mut stages = Vec::with_capacity(plan.stages.len());
    for (i, st) in plan.stages.iter().enumerate() {
        let kernel = match (&st.kernel, model) {
            (k, Model::Fpsc) => k.clone(),
            (Kernel::Ternary(k), _) => Kernel::Ternary(k.clone()),
            (Kernel::Full(k), _) if quantize => Kernel::Ternary(ternarize(k)),
            (Kernel::Full(_), _) => return Err(PipelineError::NeedsTernary { model, stage: i }),
        };
        stages.push(Stage::new(kernel, st.rule));
    }
    Ok(StagePlan { stages })
}

/// Everything that determines one denoising run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: Model,
    pub stages: Vec<StageSpec>,
    pub noise: NoiseSpec,
    /// Ternarize full-precision kernels for TSC/MSC/MSCE.
    pub quantize: bool,
    pub circuit: CircuitConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            model: Model::Tsc,
            stages: vec![StageSpec::new(3, "ones")],
            noise: NoiseSpec::new(0.1, 0),
            quantize: false,
            circuit: CircuitConfig::default(),
        }
    }
}

/// Result of restoring one already-corrupted image.
#[derive(Debug, Clone, PartialEq)]
pub struct Restoration {
    pub restored: GrayImage,
    pub tensor: ImageTensor,
    pub noisy_pixels: usize,
    pub restored_pixels: usize,
    pub divergence: Option<DivergenceCounters>,
    pub power_w: Option<f64>,
    pub reference_traces: Vec<StageTrace>,
    pub circuit_run: Option<CircuitRun>,
}

/// Per-input static power of `kernel` at pixel voltage `v` (mask at 1 V),
/// watts, averaged over the kernel's weight classes.
fn pixel_power_w(v: f64, kernel: &TernaryKernel, model: CircuitModel, config: &CircuitConfig) -> f64 {
    let n1 = kernel.nonzero_count() as f64;
    let n0 = kernel.zero_count() as f64;
    let p1 = input_power(v, 1.0, WeightClass::Nonzero, model, &config.device);
    let p0 = input_power(v, 1.0, WeightClass::Zero, model, &config.device);
    (n1 * p1 + n0 * p0) / (n1 + n0) * 1e-6
}

fn circuit_power(run: &CircuitRun, input: &ImageTensor, plan: &StagePlan, config: &CircuitConfig) -> f64 {
    let mut total = 0.0;
    let mut current = input;
    for (trace, stage) in run.stages.iter().zip(&plan.stages) {
        let Kernel::Ternary(k) = &stage.kernel else {
            continue;
        };
        total += current
            .data()
            .iter()
            .filter(|&&v| v != 0.0)
            .map(|&v| pixel_power_w(v, k, run.model, config))
            .sum::<f64>();
        current = &trace.output;
    }
    total
}

/// Preprocess `noisy`, restore it with `model` and convert back to 8 bits.
/// `plan` must already suit the model (see [`plan_for_model`]).
pub fn restore_image(
    noisy: &GrayImage,
    model: Model,
    plan: &StagePlan,
    circuit: &CircuitConfig,
) -> Result<Restoration, PipelineError> {
    let a = preprocess(&normalize(noisy));
    let noisy_pixels = nonnoisy_mask(&a).data().iter().filter(|&&b| !b).count();
    match model.circuit() {
        None => {
            let variant = ReferenceVariant::Selective;
            let (out, traces) = cascade(&a, plan, variant);
            Ok(Restoration {
                restored: denormalize(&out),
                tensor: out,
                noisy_pixels,
                restored_pixels: traces.iter().map(|t| t.restored.len()).sum(),
                divergence: None,
                power_w: None,
                reference_traces: traces,
                circuit_run: None,
            })
        }
        Some(cm) => {
            let (out, run) = denoise_image_circuit(&a, cm, plan, circuit)?;
            let power = circuit_power(&run, &a, plan, circuit);
            Ok(Restoration {
                restored: denormalize(&out),
                tensor: out,
                noisy_pixels,
                restored_pixels: run.counters.restored_pixels,
                divergence: Some(run.counters),
                power_w: Some(power),
                reference_traces: Vec::new(),
                circuit_run: Some(run),
            })
        }
    }
}

/// Theory-MSCE cascade, the ideal counterpart of the MSCE circuit.
pub fn restore_theory(noisy: &GrayImage, plan: &StagePlan) -> (GrayImage, Vec<StageTrace>) {
    let a = preprocess(&normalize(noisy));
    let (out, traces) = cascade(&a, plan, ReferenceVariant::TheoryMsce);
    (denormalize(&out), traces)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenoiseReport {
    pub model: Model,
    pub stage_sizes: Vec<usize>,
    pub density: f64,
    pub seed: u64,
    pub psnr: Psnr,
    /// `None` when the image is smaller than the SSIM window.
    pub ssim: Option<f64>,
    pub ssim_definition: String,
    /// Pixels read as noise after preprocessing (corrupted or originally 0/255).
    pub noisy_pixel_count: usize,
    pub restored_pixel_count: usize,
    pub divergence: Option<DivergenceCounters>,
    /// Static crossbar power summed over stages; circuit models only.
    pub power_estimate_w: Option<f64>,
    /// Effective configuration after defaults.
    pub config: ExperimentConfig,
}

pub const SSIM_DEFINITION: &str = "gaussian 11x11 sigma=1.5 K1=0.01 K2=0.03 L=255 valid";

fn ssim_or_none(a: &GrayImage, b: &GrayImage) -> Result<Option<f64>, PipelineError> {
    match ssim(a, b) {
        Ok(s) => Ok(Some(s)),
        Err(MetricError::TooSmall { .. }) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

/// Compare `restoration` against the clean image and fill a report.
pub fn report(
    clean: &GrayImage,
    restoration: &Restoration,
    plan: &StagePlan,
    config: &ExperimentConfig,
) -> Result<DenoiseReport, PipelineError> {
    Ok(DenoiseReport {
        model: config.model,
        stage_sizes: plan.sizes(),
        density: config.noise.density,
        seed: config.noise.seed,
        psnr: psnr(clean, &restoration.restored)?,
        ssim: ssim_or_none(clean, &restoration.restored)?,
        ssim_definition: SSIM_DEFINITION.to_string(),
        noisy_pixel_count: restoration.noisy_pixels,
        restored_pixel_count: restoration.restored_pixels,
        divergence: restoration.divergence,
        power_estimate_w: restoration.power_w,
        config: config.clone(),
    })
}

/// Corrupt `clean`, restore it and report. `plan` holds the resolved stages of
/// `config.stages`.
pub fn run_experiment(
    clean: &GrayImage,
    plan: &StagePlan,
    config: &ExperimentConfig,
) -> Result<(GrayImage, Restoration, DenoiseReport), PipelineError> {
    config.noise.validate().map_err(PipelineError::Noise)?;
    let plan = plan_for_model(plan, config.model, config.quantize)?;
    let (noisy, _) = inject_sap(clean, &config.noise);
    let r = restore_image(&noisy, config.model, &plan, &config.circuit)?;
    let rep = report(clean, &r, &plan, config)?;
    Ok((noisy, r, rep))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub model: Model,
    pub density: f64,
    pub images: usize,
    /// Noise seed of image `i` is `noise_seed_base + i`.
    pub noise_seed_base: u64,
    pub mean_psnr: Psnr,
    pub mean_ssim: Option<f64>,
    pub mean_restored: f64,
    pub mean_power_w: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub models: Vec<Model>,
    pub densities: Vec<f64>,
    /// Seeded corpus images per cell.
    pub images: usize,
    pub image_size: usize,
    pub image_seed: u64,
    pub noise_seed: u64,
    pub salt_fraction: f64,
    pub quantize: bool,
    pub circuit: CircuitConfig,
    pub stages: Vec<StageSpec>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            models: Model::ALL.to_vec(),
            densities: vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8],
            images: 5,
            image_size: 100,
            image_seed: 0,
            noise_seed: 0,
            salt_fraction: 0.5,
            quantize: true,
            circuit: CircuitConfig::default(),
            stages: vec![StageSpec::new(3, "ones")],
        }
    }
}

/// The evaluation images of a sweep or ablation.
pub fn evaluation_images(count: usize, size: usize, seed: u64) -> Vec<GrayImage> {
    (0..count as u64).map(|i| seeded_image(i, size, seed)).collect()
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// One row per (model, density); every cell sees the same images and the
/// same noise seeds, so rows are paired.
pub fn sweep(plan: &StagePlan, config: &SweepConfig, images: &[GrayImage]) -> Result<Vec<SweepRow>, PipelineError> {
    if config.densities.is_empty() {
        return Err(PipelineError::Empty("density list"));
    }
    if images.is_empty() {
        return Err(PipelineError::Empty("image set"));
    }
    let mut rows = Vec::new();
    for &model in &config.models {
        let model_plan = plan_for_model(plan, model, config.quantize)?;
        for &density in &config.densities {
            let (mut ps, mut ss, mut rs, mut ws) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
            for (i, clean) in images.iter().enumerate() {
                let spec = NoiseSpec {
                    density,
                    salt_fraction: config.salt_fraction,
                    seed: config.noise_seed + i as u64,
                };
                spec.validate().map_err(PipelineError::Noise)?;
                let (noisy, _) = inject_sap(clean, &spec);
                let r = restore_image(&noisy, model, &model_plan, &config.circuit)?;
                ps.push(psnr(clean, &r.restored)?.0);
                if let Some(s) = ssim_or_none(clean, &r.restored)? {
                    ss.push(s);
                }
                rs.push(r.restored_pixels as f64);
                if let Some(w) = r.power_w {
                    ws.push(w);
                }
            }
            rows.push(SweepRow {
                model,
                density,
                images: images.len(),
                noise_seed_base: config.noise_seed,
                mean_psnr: Psnr(mean(&ps)),
                mean_ssim: (ss.len() == images.len()).then(|| mean(&ss)),
                mean_restored: mean(&rs),
                mean_power_w: (!ws.is_empty()).then(|| mean(&ws)),
            });
        }
    }
    Ok(rows)
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("model,density,images,noise_seed_base,mean_psnr_db,mean_ssim,mean_restored,mean_power_w\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{:.2},{}\n",
            r.model,
            r.density,
            r.images,
            r.noise_seed_base,
            r.mean_psnr,
            r.mean_ssim.map_or(String::new(), |s| format!("{s:.6}")),
            r.mean_restored,
            r.mean_power_w.map_or(String::new(), |w| format!("{w:.6}")),
        ));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub image: usize,
    pub noise_seed: u64,
    pub differential_psnr: Psnr,
    pub single_psnr: Psnr,
    pub differential_ssim: Option<f64>,
    pub single_ssim: Option<f64>,
    /// Mean of `single - differential` over restored pixels, normalized units.
    pub mean_restored_bias: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub model: Model,
    pub density: f64,
    pub stage_sizes: Vec<usize>,
    pub rows: Vec<AblationRow>,
    /// Images where the differential encoding scores strictly higher PSNR.
    pub differential_wins: usize,
    pub circuit: CircuitConfig,
}

/// Run the circuit with paired and single-device weight encodings on each
/// image at one density. The kernel must be non-negative.
pub fn ablation(
    plan: &StagePlan,
    model: Model,
    density: f64,
    noise_seed: u64,
    circuit: &CircuitConfig,
    images: &[GrayImage],
) -> Result<AblationReport, PipelineError> {
    if images.is_empty() {
        return Err(PipelineError::Empty("image set"));
    }
    let plan = plan_for_model(plan, model, true)?;
    for (i, st) in plan.stages.iter().enumerate() {
        if !st.kernel.to_full().is_non_negative() {
            return Err(PipelineError::NegativeKernel(i));
        }
    }
    let diff_cfg = CircuitConfig {
        weight_mode: WeightMode::Differential,
        ..*circuit
    };
    let single_cfg = CircuitConfig {
        weight_mode: WeightMode::Single,
        ..*circuit
    };
    let mut rows = Vec::with_capacity(images.len());
    for (i, clean) in images.iter().enumerate() {
        let seed = noise_seed + i as u64;
        let (noisy, _) = inject_sap(clean, &NoiseSpec::new(density, seed));
        let d = restore_image(&noisy, model, &plan, &diff_cfg)?;
        let s = restore_image(&noisy, model, &plan, &single_cfg)?;
        let a = preprocess(&normalize(&noisy));
        let noisy_mask = nonnoisy_mask(&a);
        let diffs: Vec<f64> = (0..a.data().len())
            .filter(|&k| !noisy_mask.data()[k])
            .map(|k| s.tensor.data()[k] - d.tensor.data()[k])
            .collect();
        rows.push(AblationRow {
            image: i,
            noise_seed: seed,
            differential_psnr: psnr(clean, &d.restored)?,
            single_psnr: psnr(clean, &s.restored)?,
            differential_ssim: ssim_or_none(clean, &d.restored)?,
            single_ssim: ssim_or_none(clean, &s.restored)?,
            mean_restored_bias: if diffs.is_empty() { 0.0 } else { mean(&diffs) },
        });
    }
    let differential_wins = rows
        .iter()
        .filter(|r| r.differential_psnr.0 > r.single_psnr.0)
        .count();
    Ok(AblationReport {
        model,
        density,
        stage_sizes: plan.sizes(),
        rows,
        differential_wins,
        circuit: *circuit,
    })
}

pub fn ablation_csv(report: &AblationReport) -> String {
    let mut out = String::from("image,noise_seed,differential_psnr_db,single_psnr_db,differential_ssim,single_ssim,mean_restored_bias\n");
    let opt = |v: Option<f64>| v.map_or(String::new(), |s| format!("{s:.6}"));
    for r in &report.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{:.6e}\n",
            r.image,
            r.noise_seed,
            r.differential_psnr,
            r.single_psnr,
            opt(r.differential_ssim),
            opt(r.single_ssim),
            r.mean_restored_bias
        ));
    }
    out
}

/// Largest absolute difference between two maps of one node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NodeDeltas {
    pub a_conv: f64,
    pub m_conv: f64,
    pub n: f64,
    pub output: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceReport {
    pub input: ImageTensor,
    pub kernel: Vec<i8>,
    pub tsc: StageTrace,
    pub tsc_output: ImageTensor,
    pub msc: CircuitStageTrace,
    pub msc_vs_tsc: NodeDeltas,
    pub theory_msce: StageTrace,
    pub theory_msce_output: ImageTensor,
    pub msce: CircuitStageTrace,
    pub msce_vs_theory: NodeDeltas,
}

fn max_delta(a: &ImageTensor, b: &ImageTensor) -> f64 {
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn deltas(reference: &StageTrace, out: &ImageTensor, circuit: &CircuitStageTrace) -> NodeDeltas {
    NodeDeltas {
        a_conv: max_delta(&reference.a_conv, &circuit.a_conv),
        m_conv: max_delta(&reference.m_conv, &circuit.m_conv),
        n: max_delta(&reference.n, &circuit.n),
        output: max_delta(out, &circuit.output),
    }
}

/// Every intermediate of one stage on a small tensor, for the theory and
/// circuit paths side by side. `input` is preprocessed first.
pub fn trace(input: &ImageTensor, kernel: &TernaryKernel, circuit: &CircuitConfig) -> Result<TraceReport, PipelineError> {
    let a = preprocess(input);
    let mask = nonnoisy_mask(&a);
    let full = kernel.to_full();
    let plan = StagePlan::single(Kernel::Ternary(kernel.clone()));
    let (tsc_out, tsc) = restore_tsc(&a, &mask, &full);
    let (theory_out, theory) = restore_theory_msce(&a, &mask, &full);
    let (_, msc_run) = denoise_image_circuit(&a, CircuitModel::Msc, &plan, circuit)?;
    let (_, msce_run) = denoise_image_circuit(&a, CircuitModel::Msce, &plan, circuit)?;
    let msc = msc_run.stages.into_iter().next().expect("one stage");
    let msce = msce_run.stages.into_iter().next().expect("one stage");
    Ok(TraceReport {
        input: a,
        kernel: kernel.weights().to_vec(),
        msc_vs_tsc: deltas(&tsc, &tsc_out, &msc),
        msce_vs_theory: deltas(&theory, &theory_out, &msce),
        tsc,
        tsc_output: tsc_out,
        msc,
        theory_msce: theory,
        theory_msce_output: theory_out,
        msce,
    })
}
