//! Browser bindings: corrupt-and-restore, per-image power and the memristor
//! programming transient. Every export returns a JSON string.

use memseconv::circuit::{CircuitConfig, WeightMode};
use memseconv::corpus::texture;
use memseconv::device::{program_constant, trajectory, DeviceParams, MemristorDevice};
use memseconv::image::{inject_sap, NoiseSpec};
use memseconv::metrics::{psnr, ssim};
use memseconv::pipeline::{fixture_plan, parse_stages, plan_for_model, restore_image, Model};
use memseconv::power::{image_power_table, MeanBasis};
use memseconv::quantize::{fixture, Kernel};
use serde::Serialize;
use wasm_bindgen::prelude::*;

fn js_err(e: impl ToString) -> JsValue {
    JsValue::from_str(&e.to_string())
}

fn json<T: Serialize>(v: &T) -> Result<String, JsValue> {
    serde_json::to_string(v).map_err(js_err)
}

#[derive(Serialize)]
struct DenoiseResult {
    width: usize,
    height: usize,
    clean: Vec<u8>,
    noisy: Vec<u8>,
    restored: Vec<u8>,
    noisy_psnr: String,
    psnr: String,
    ssim: Option<f64>,
    noisy_pixels: usize,
    restored_pixels: usize,
    power_w: Option<f64>,
}

/// Corrupt a procedural texture and restore it.
///
/// `stages` uses the CLI syntax (`3:cross,5:ones`); `weight_mode` is
/// `differential` or `single`.
#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn denoise(
    texture_kind: &str,
    size: usize,
    texture_seed: u32,
    density: f64,
    noise_seed: u32,
    model: &str,
    stages: &str,
    weight_mode: &str,
) -> Result<String, JsValue> {
    let clean = texture(texture_kind, size, size, u64::from(texture_seed)).map_err(js_err)?;
    let spec = NoiseSpec::new(density, u64::from(noise_seed));
    spec.validate().map_err(js_err)?;
    let model: Model = model.parse().map_err(js_err)?;
    let plan = fixture_plan(&parse_stages(stages).map_err(js_err)?).map_err(js_err)?;
    let plan = plan_for_model(&plan, model, true).map_err(js_err)?;
    let circuit = CircuitConfig {
        weight_mode: match weight_mode {
            "single" => WeightMode::Single,
            _ => WeightMode::Differential,
        },
        ..CircuitConfig::default()
    };
    let (noisy, _) = inject_sap(&clean, &spec);
    let r = restore_image(&noisy, model, &plan, &circuit).map_err(js_err)?;
    json(&DenoiseResult {
        width: clean.width(),
        height: clean.height(),
        noisy_psnr: psnr(&clean, &noisy).map_err(js_err)?.to_string(),
        psnr: psnr(&clean, &r.restored).map_err(js_err)?.to_string(),
        ssim: ssim(&clean, &r.restored).ok(),
        noisy_pixels: r.noisy_pixels,
        restored_pixels: r.restored_pixels,
        power_w: r.power_w,
        clean: clean.into_data(),
        noisy: noisy.into_data(),
        restored: r.restored.into_data(),
    })
}

/// MSC and MSCE power for an image of `n_pixels` at each tabulated density.
#[wasm_bindgen]
pub fn power_vs_density(kernel: &str, n_pixels: usize, published_basis: bool) -> Result<String, JsValue> {
    let k = match fixture(kernel, 3).map_err(js_err)? {
        Kernel::Ternary(k) => k,
        Kernel::Full(k) => memseconv::quantize::ternarize(&k),
    };
    let basis = if published_basis {
        MeanBasis::Published
    } else {
        MeanBasis::Model
    };
    json(&image_power_table(&k, n_pixels, basis, &DeviceParams::default()))
}

#[derive(Serialize)]
struct Transient {
    times: Vec<f64>,
    resistance: Vec<f64>,
    current: Vec<f64>,
    switch_time: Option<f64>,
    energy_j: f64,
    mean_power_w: f64,
}

/// Resistance and current of one device driven from `R_ON` at `volts`.
#[wasm_bindgen]
pub fn memristor_transient(volts: f64, v_th: f64, duration: f64, points: usize) -> Result<String, JsValue> {
    let params = DeviceParams {
        v_th,
        ..DeviceParams::default()
    };
    let dev = MemristorDevice::at_on(params).map_err(js_err)?;
    let dt = duration / points.max(1) as f64;
    let traj = trajectory(&dev, volts, dt, duration).map_err(js_err)?;
    let exact = program_constant(&dev, volts);
    json(&Transient {
        times: traj.iter().map(|p| p.0).collect(),
        current: traj.iter().map(|p| volts / p.1).collect(),
        resistance: traj.iter().map(|p| p.1).collect(),
        switch_time: exact.switch_time(),
        energy_j: exact.energy(),
        mean_power_w: exact.mean_power(),
    })
}
