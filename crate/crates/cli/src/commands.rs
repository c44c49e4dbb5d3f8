use std::path::{Path, PathBuf};

use memseconv::circuit::CircuitConfig;
use memseconv::device::{program_constant, program_euler, MemristorDevice};
use memseconv::image::{inject_sap, load_pgm, save_pgm, GrayImage, ImageTensor, NoiseSpec, PgmFormat};
use memseconv::pipeline::{
    ablation, ablation_csv, evaluation_images, parse_stages, plan_for_model, report, restore_image,
    sweep, sweep_csv, trace, ExperimentConfig, Model, StageSpec, SweepConfig,
};
use memseconv::power::{
    image_power_csv, image_power_table, kernel_power_profile, memristor_count, power_table,
    power_table_csv, programming_power_total, MeanBasis, PUBLISHED_PROGRAMMING_POWER_UW,
};
use memseconv::quantize::{fixture, load_weights, save_weights, ternarize, threshold, Kernel, FIXTURE_NAMES};
use memseconv::{CircuitModel, StagePlan};
use serde::{Deserialize, Serialize};

use crate::config::{CropSection, FileConfig, Format};
use crate::error::CliError;
use crate::{
    AblationArgs, AddNoiseArgs, CircuitArgs, Cli, Command, DenoiseArgs, InputArgs, ModelArgs,
    NoiseArgs, PowerArgs, QuantizeArgs, SweepArgs, TraceArgs,
};

struct Ctx {
    file: FileConfig,
    format: Format,
    out: Option<PathBuf>,
}

impl Ctx {
    fn out_dir(&self) -> Result<&Path, CliError> {
        let dir = self
            .out
            .as_deref()
            .ok_or_else(|| CliError::Config("this command needs --out DIR".into()))?;
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(dir)
    }

    fn write(&self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.out_dir()?.join(name);
        std::fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))
    }

    /// Write into `--out` when given, else print.
    fn emit(&self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        if self.out.is_some() {
            self.write(name, bytes)
        } else {
            use std::io::Write;
            std::io::stdout()
                .write_all(bytes)
                .map_err(|e| CliError::io(Path::new("<stdout>"), e))
        }
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let ctx = Ctx {
        format: cli.format.or(file.format).unwrap_or_default(),
        out: cli.out.clone().or_else(|| file.out.clone()),
        file,
    };
    match cli.command {
        Command::AddNoise(a) => add_noise(&ctx, a),
        Command::Denoise(a) => denoise(&ctx, a),
        Command::Sweep(a) => cmd_sweep(&ctx, a),
        Command::Ablation(a) => cmd_ablation(&ctx, a),
        Command::Power(a) => power(&ctx, a),
        Command::Trace(a) => cmd_trace(&ctx, a),
        Command::Quantize(a) => quantize(&ctx, a),
    }
}

fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(value).expect("report types serialize");
    v.push(b'\n');
    v
}

/// CSV preceded by a comment line carrying the effective config.
fn csv_with_config<T: Serialize>(config: &T, body: &str) -> Vec<u8> {
    let cfg = serde_json::to_string(config).expect("config serializes");
    format!("# config: {cfg}\n{body}").into_bytes()
}

fn read_image(path: &Path) -> Result<GrayImage, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    load_pgm(&bytes).map_err(|e| CliError::format(path, e))
}

fn crop(img: GrayImage, crop: Option<&CropSection>) -> Result<GrayImage, CliError> {
    let Some(c) = crop else {
        return Ok(img);
    };
    let out = match c.random_seed {
        Some(seed) => img.random_crop(c.width, c.height, seed),
        None => img.center_crop(c.width, c.height),
    };
    out.map_err(|e| CliError::Config(e.to_string()))
}

fn resolve_crop(args: &InputArgs, file: &FileConfig) -> Option<CropSection> {
    match args.crop {
        Some((width, height)) => Some(CropSection {
            width,
            height,
            random_seed: args.crop_seed,
        }),
        None => file.crop.clone(),
    }
}

fn resolve_noise(args: &NoiseArgs, file: &FileConfig, base: Option<&NoiseSpec>) -> Result<NoiseSpec, CliError> {
    let spec = NoiseSpec {
        density: args
            .density
            .or(base.map(|b| b.density))
            .or(file.noise.density)
            .unwrap_or(0.1),
        salt_fraction: args
            .salt_fraction
            .or(base.map(|b| b.salt_fraction))
            .or(file.noise.salt_fraction)
            .unwrap_or(0.5),
        seed: args.seed.or(base.map(|b| b.seed)).or(file.noise.seed).unwrap_or(0),
    };
    spec.validate().map_err(CliError::Config)?;
    Ok(spec)
}

fn resolve_circuit(args: &CircuitArgs, file: &FileConfig) -> Result<CircuitConfig, CliError> {
    let mut c = file.circuit.unwrap_or_default();
    if let Some(v) = args.weight_mode {
        c.weight_mode = v;
    }
    if let Some(v) = args.rail {
        c.rail = v;
    }
    if let Some(v) = args.transimpedance_gain {
        c.transimpedance_gain = Some(v);
    }
    if let Some(v) = args.divider_floor {
        c.divider_floor = v;
    }
    if let Some(v) = args.conductance_sigma {
        c.conductance_sigma = v;
    }
    if let Some(v) = args.conductance_seed {
        c.conductance_seed = v;
    }
    if let Some(v) = args.r_on {
        c.device.r_on = v;
    }
    if let Some(v) = args.r_off {
        c.device.r_off = v;
    }
    if let Some(v) = args.v_th {
        c.device.v_th = v;
    }
    if let Some(v) = args.beta {
        c.device.beta = v;
    }
    c.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(c)
}

/// Fixture name, or a weight-file path.
fn load_kernel(name: &str, size: usize) -> Result<Kernel, CliError> {
    if FIXTURE_NAMES.contains(&name) {
        return fixture(name, size).map_err(|e| CliError::Config(e.to_string()));
    }
    let path = Path::new(name);
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    load_weights(&bytes).map_err(|e| CliError::format(path, e))
}

fn resolve_specs(args: &ModelArgs, file: &FileConfig, default_kernel: &str) -> Result<Vec<StageSpec>, CliError> {
    if let Some(text) = &args.stages {
        return Ok(parse_stages(text)?);
    }
    if args.kernel.is_none() {
        if let Some(stages) = &file.stages {
            return Ok(stages.clone());
        }
    }
    let name = args
        .kernel
        .clone()
        .or_else(|| file.kernel.clone())
        .unwrap_or_else(|| default_kernel.to_string());
    let size = load_kernel(&name, 3)?.size();
    Ok(vec![StageSpec::new(size, &name)])
}

fn resolve_plan(specs: &[StageSpec]) -> Result<StagePlan, CliError> {
    if specs.is_empty() {
        return Err(CliError::Config("empty stage list".into()));
    }
    let stages = specs
        .iter()
        .enumerate()
        .map(|(i, s)| Ok(s.with_kernel(i, load_kernel(&s.kernel, s.size)?)?))
        .collect::<Result<_, CliError>>()?;
    Ok(StagePlan { stages })
}

/// Written next to a noisy image so the run can be repeated exactly.
#[derive(Debug, Serialize, Deserialize)]
struct Provenance {
    input: PathBuf,
    crop: Option<CropSection>,
    noise: NoiseSpec,
}

fn input_path(args: &InputArgs, file: &FileConfig) -> Result<PathBuf, CliError> {
    args.input
        .clone()
        .or_else(|| file.input.clone())
        .ok_or_else(|| CliError::Config("no input image (use --input or `input` in the config)".into()))
}

fn add_noise(ctx: &Ctx, a: AddNoiseArgs) -> Result<(), CliError> {
    let path = input_path(&a.input, &ctx.file)?;
    let crop_cfg = resolve_crop(&a.input, &ctx.file);
    let clean = crop(read_image(&path)?, crop_cfg.as_ref())?;
    let noise = resolve_noise(&a.noise, &ctx.file, None)?;
    let (noisy, mask) = inject_sap(&clean, &noise);
    ctx.write("noisy.pgm", &save_pgm(&noisy, PgmFormat::P5))?;
    ctx.write("mask.pgm", &save_pgm(&mask.to_image(), PgmFormat::P5))?;
    ctx.write("mask.json", mask.to_json().as_bytes())?;
    let prov = Provenance {
        input: path,
        crop: crop_cfg,
        noise,
    };
    ctx.write("provenance.json", &to_json(&prov))
}

fn denoise(ctx: &Ctx, a: DenoiseArgs) -> Result<(), CliError> {
    let prov: Option<Provenance> = match &a.provenance {
        Some(p) => {
            let bytes = std::fs::read(p).map_err(|e| CliError::io(p, e))?;
            Some(serde_json::from_slice(&bytes).map_err(|e| CliError::format(p, e))?)
        }
        None => None,
    };
    let path = match (&a.input.input, &prov) {
        (Some(p), _) => p.clone(),
        (None, Some(pr)) => pr.input.clone(),
        (None, None) => input_path(&a.input, &ctx.file)?,
    };
    let crop_cfg = match (&a.input.crop, &prov) {
        (None, Some(pr)) => pr.crop.clone(),
        _ => resolve_crop(&a.input, &ctx.file),
    };
    let clean = crop(read_image(&path)?, crop_cfg.as_ref())?;
    let noise = resolve_noise(&a.noise, &ctx.file, prov.as_ref().map(|p| &p.noise))?;
    let specs = resolve_specs(&a.model, &ctx.file, "ones")?;
    let plan = resolve_plan(&specs)?;
    let config = ExperimentConfig {
        model: a.model.model.or(ctx.file.model).unwrap_or(Model::Tsc),
        stages: specs,
        noise,
        quantize: a.model.quantize || ctx.file.quantize.unwrap_or(false),
        circuit: resolve_circuit(&a.model.circuit, &ctx.file)?,
    };
    let model_plan = plan_for_model(&plan, config.model, config.quantize)?;
    let (noisy, _) = inject_sap(&clean, &config.noise);
    let restoration = restore_image(&noisy, config.model, &model_plan, &config.circuit)?;
    let rep = report(&clean, &restoration, &model_plan, &config)?;

    ctx.write("noisy.pgm", &save_pgm(&noisy, PgmFormat::P5))?;
    ctx.write("restored.pgm", &save_pgm(&restoration.restored, PgmFormat::P5))?;
    match ctx.format {
        Format::Json => ctx.write("report.json", &to_json(&rep)),
        Format::Csv => {
            let d = rep.divergence.unwrap_or_default();
            let body = format!(
                "model,stages,density,seed,psnr_db,ssim,noisy_pixels,restored_pixels,negative_denominator_windows,zero_denominator_windows,clamped_nodes,power_w\n{},{},{},{},{},{},{},{},{},{},{},{}\n",
                rep.model,
                rep.stage_sizes.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(" "),
                rep.density,
                rep.seed,
                rep.psnr,
                rep.ssim.map_or(String::new(), |s| format!("{s:.6}")),
                rep.noisy_pixel_count,
                rep.restored_pixel_count,
                d.negative_denominator_windows,
                d.zero_denominator_windows,
                d.clamped_nodes,
                rep.power_estimate_w.map_or(String::new(), |w| format!("{w:.6}")),
            );
            ctx.write("report.csv", &csv_with_config(&rep.config, &body))
        }
    }
}

#[derive(Serialize)]
struct SweepOutput<'a> {
    config: &'a SweepConfig,
    image_files: &'a [PathBuf],
    rows: &'a [memseconv::pipeline::SweepRow],
}

fn cmd_sweep(ctx: &Ctx, a: SweepArgs) -> Result<(), CliError> {
    let f = &ctx.file;
    let defaults = SweepConfig::default();
    let specs = resolve_specs(&a.model, f, "ones")?;
    let plan = resolve_plan(&specs)?;
    let config = SweepConfig {
        models: a.models.or_else(|| f.sweep.models.clone()).unwrap_or(defaults.models),
        densities: a
            .densities
            .or_else(|| f.sweep.densities.clone())
            .unwrap_or(defaults.densities),
        images: a.images.or(f.sweep.images).unwrap_or(defaults.images),
        image_size: a.image_size.or(f.sweep.image_size).unwrap_or(defaults.image_size),
        image_seed: a.image_seed.or(f.sweep.image_seed).unwrap_or(defaults.image_seed),
        noise_seed: a.seed.or(f.noise.seed).unwrap_or(defaults.noise_seed),
        salt_fraction: f.noise.salt_fraction.unwrap_or(defaults.salt_fraction),
        quantize: a.model.quantize || f.quantize.unwrap_or(defaults.quantize),
        circuit: resolve_circuit(&a.model.circuit, f)?,
        stages: specs,
    };
    let images = if a.image_files.is_empty() {
        evaluation_images(config.images, config.image_size, config.image_seed)
    } else {
        a.image_files.iter().map(|p| read_image(p)).collect::<Result<_, _>>()?
    };
    let rows = sweep(&plan, &config, &images)?;
    match ctx.format {
        Format::Json => ctx.emit(
            "sweep.json",
            &to_json(&SweepOutput {
                config: &config,
                image_files: &a.image_files,
                rows: &rows,
            }),
        ),
        Format::Csv => ctx.emit("sweep.csv", &csv_with_config(&config, &sweep_csv(&rows))),
    }
}

#[derive(Serialize)]
struct AblationConfig {
    model: Model,
    density: f64,
    images: usize,
    image_size: usize,
    image_seed: u64,
    noise_seed: u64,
    stages: Vec<StageSpec>,
    circuit: CircuitConfig,
}

fn cmd_ablation(ctx: &Ctx, a: AblationArgs) -> Result<(), CliError> {
    let f = &ctx.file;
    let specs = resolve_specs(&a.model, f, "cross")?;
    let plan = resolve_plan(&specs)?;
    let cfg = AblationConfig {
        model: a.model.model.or(f.model).unwrap_or(Model::Msce),
        density: a.density.or(f.ablation.density).unwrap_or(0.6),
        images: a.images.or(f.ablation.images).unwrap_or(50),
        image_size: a.image_size.or(f.ablation.image_size).unwrap_or(100),
        image_seed: a.image_seed.or(f.ablation.image_seed).unwrap_or(0),
        noise_seed: a.seed.or(f.noise.seed).unwrap_or(0),
        stages: specs,
        circuit: resolve_circuit(&a.model.circuit, f)?,
    };
    if cfg.model.circuit().is_none() {
        return Err(CliError::Config("ablation-fig7 needs a circuit model (MSC or MSCE)".into()));
    }
    let images = evaluation_images(cfg.images, cfg.image_size, cfg.image_seed);
    let rep = ablation(&plan, cfg.model, cfg.density, cfg.noise_seed, &cfg.circuit, &images)?;
    match ctx.format {
        Format::Json => {
            #[derive(Serialize)]
            struct Out<'a> {
                config: &'a AblationConfig,
                report: &'a memseconv::pipeline::AblationReport,
            }
            ctx.emit("ablation.json", &to_json(&Out { config: &cfg, report: &rep }))
        }
        Format::Csv => ctx.emit("ablation.csv", &csv_with_config(&cfg, &ablation_csv(&rep))),
    }
}

#[derive(Serialize)]
struct ProgrammingSummary {
    volts: f64,
    dt: f64,
    switch_time_s: Option<f64>,
    energy_j: f64,
    mean_power_uw: f64,
    euler_switch_time_s: Option<f64>,
    euler_energy_j: f64,
    memristors: usize,
    total_uw: f64,
    published_per_device_uw: f64,
    published_total_uw: f64,
}

fn power(ctx: &Ctx, a: PowerArgs) -> Result<(), CliError> {
    let f = &ctx.file;
    let circuit = resolve_circuit(&a.circuit, f)?;
    let name = a.kernel.clone().or_else(|| f.kernel.clone()).unwrap_or_else(|| "cross".into());
    let kernel = match load_kernel(&name, 3)? {
        Kernel::Ternary(k) => k,
        Kernel::Full(k) => ternarize(&k),
    };
    let basis = a.basis.or(f.power.basis).unwrap_or(MeanBasis::Published);
    let n_pixels = a.n_pixels.or(f.power.n_pixels).unwrap_or(10_000);
    let volts = a.program_voltage.or(f.power.program_voltage).unwrap_or(2.0);
    let dt = a.dt.or(f.power.dt).unwrap_or(1e-4);

    let params = circuit.device;
    let per_input = power_table(&params);
    let per_image = image_power_table(&kernel, n_pixels, basis, &params);
    let dev = MemristorDevice::at_on(params).map_err(|e| CliError::Config(e.to_string()))?;
    let exact = program_constant(&dev, volts);
    let euler = program_euler(&dev, volts, dt, 100.0).map_err(|e| CliError::Config(e.to_string()))?;
    let count = memristor_count(&kernel);
    let programming = ProgrammingSummary {
        volts,
        dt,
        switch_time_s: exact.switch_time(),
        energy_j: exact.energy(),
        mean_power_uw: exact.mean_power() * 1e6,
        euler_switch_time_s: euler.switch_time(),
        euler_energy_j: euler.energy(),
        memristors: count,
        total_uw: programming_power_total(count, exact.mean_power() * 1e6),
        published_per_device_uw: PUBLISHED_PROGRAMMING_POWER_UW,
        published_total_uw: programming_power_total(count, PUBLISHED_PROGRAMMING_POWER_UW),
    };
    match ctx.format {
        Format::Json => {
            #[derive(Serialize)]
            struct Out<'a> {
                kernel: &'a [i8],
                basis: MeanBasis,
                scope: &'static str,
                per_input: &'a [memseconv::power::PowerRow],
                kernel_profiles: Vec<memseconv::power::KernelPowerProfile>,
                per_image: &'a memseconv::power::ImagePowerTable,
                programming: &'a ProgrammingSummary,
            }
            let profiles = [CircuitModel::Msc, CircuitModel::Msce]
                .iter()
                .map(|&m| kernel_power_profile(&kernel, m, basis, &params))
                .collect();
            ctx.emit(
                "power.json",
                &to_json(&Out {
                    kernel: kernel.weights(),
                    basis,
                    scope: "memristor and resistor arrays only; op-amps, comparators and switches excluded",
                    per_input: &per_input,
                    kernel_profiles: profiles,
                    per_image: &per_image,
                    programming: &programming,
                }),
            )
        }
        Format::Csv => {
            let p = &programming;
            let prog = format!(
                "volts,switch_time_s,energy_j,mean_power_uw,euler_switch_time_s,euler_energy_j,memristors,total_uw,published_per_device_uw,published_total_uw\n{},{},{},{},{},{},{},{},{},{}\n",
                p.volts,
                p.switch_time_s.map_or(String::new(), |t| t.to_string()),
                p.energy_j,
                p.mean_power_uw,
                p.euler_switch_time_s.map_or(String::new(), |t| t.to_string()),
                p.euler_energy_j,
                p.memristors,
                p.total_uw,
                p.published_per_device_uw,
                p.published_total_uw
            );
            if ctx.out.is_some() {
                ctx.write("per_input.csv", power_table_csv(&per_input).as_bytes())?;
                ctx.write("per_image.csv", image_power_csv(&per_image).as_bytes())?;
                ctx.write("programming.csv", prog.as_bytes())
            } else {
                let all = format!("{}\n{}\n{}", power_table_csv(&per_input), image_power_csv(&per_image), prog);
                ctx.emit("", all.as_bytes())
            }
        }
    }
}

fn cmd_trace(ctx: &Ctx, a: TraceArgs) -> Result<(), CliError> {
    let bytes = std::fs::read(&a.input).map_err(|e| CliError::io(&a.input, e))?;
    let tensor: ImageTensor = serde_json::from_slice(&bytes).map_err(|e| CliError::format(&a.input, e))?;
    tensor.validate().map_err(|e| CliError::format(&a.input, e))?;
    let name = a
        .model
        .kernel
        .clone()
        .or_else(|| ctx.file.kernel.clone())
        .unwrap_or_else(|| "ones".into());
    let kernel = match load_kernel(&name, 3)? {
        Kernel::Ternary(k) => k,
        Kernel::Full(k) if a.model.quantize || ctx.file.quantize.unwrap_or(false) => ternarize(&k),
        Kernel::Full(_) => {
            return Err(CliError::Config(format!(
                "kernel '{name}' is full precision; pass --quantize to trace it"
            )))
        }
    };
    let circuit = resolve_circuit(&a.model.circuit, &ctx.file)?;
    let t = trace(&tensor, &kernel, &circuit)?;
    ctx.emit("trace.json", &to_json(&t))
}

fn quantize(ctx: &Ctx, a: QuantizeArgs) -> Result<(), CliError> {
    let kernel = load_kernel(&a.weights, 3)?;
    let Kernel::Full(k) = kernel else {
        return Err(CliError::Config(format!("'{}' is already ternary", a.weights)));
    };
    eprintln!("threshold = {}", threshold(&k));
    ctx.emit("ternary.json", &save_weights(&Kernel::Ternary(ternarize(&k))))
}
