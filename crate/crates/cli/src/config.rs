//! TOML run configuration. Every key has a matching command-line flag; flags
//! win over the file, the file wins over built-in defaults.

use std::path::{Path, PathBuf};

use memseconv::circuit::CircuitConfig;
use memseconv::pipeline::{Model, StageSpec};
use memseconv::power::MeanBasis;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSection {
    pub density: Option<f64>,
    pub seed: Option<u64>,
    pub salt_fraction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CropSection {
    pub width: usize,
    pub height: usize,
    /// Seeded random placement; center crop when absent.
    #[serde(default)]
    pub random_seed: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub models: Option<Vec<Model>>,
    pub densities: Option<Vec<f64>>,
    pub images: Option<usize>,
    pub image_size: Option<usize>,
    pub image_seed: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationSection {
    pub density: Option<f64>,
    pub images: Option<usize>,
    pub image_size: Option<usize>,
    pub image_seed: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PowerSection {
    pub basis: Option<MeanBasis>,
    pub n_pixels: Option<usize>,
    pub program_voltage: Option<f64>,
    pub dt: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub input: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
    pub model: Option<Model>,
    /// Fixture name or weight-file path used when `stages` is absent.
    pub kernel: Option<String>,
    pub stages: Option<Vec<StageSpec>>,
    pub quantize: Option<bool>,
    pub noise: NoiseSection,
    pub crop: Option<CropSection>,
    pub circuit: Option<CircuitConfig>,
    pub sweep: SweepSection,
    pub ablation: AblationSection,
    pub power: PowerSection,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_a_full_file() {
        let text = r#"
            model = "MSCE"
            kernel = "cross"
            quantize = true
            format = "csv"

            [[stages]]
            size = 3
            kernel = "cross"

            [[stages]]
            size = 5
            kernel = "ones"
            rule = "always-one"

            [noise]
            density = 0.6
            seed = 7

            [crop]
            width = 64
            height = 64

            [circuit]
            weight_mode = "single"
            rail = 12.0

            [circuit.device]
            r_on = 2e4

            [sweep]
            densities = [0.1, 0.5]
            models = ["TSC", "MSCE"]

            [power]
            basis = "published"
        "#;
        let c: FileConfig = toml::from_str(text).unwrap();
        assert_eq!(c.model, Some(Model::Msce));
        assert_eq!(c.stages.as_ref().unwrap().len(), 2);
        let circuit = c.circuit.unwrap();
        assert_eq!(circuit.rail, 12.0);
        assert_eq!(circuit.device.r_on, 2e4);
        assert_eq!(circuit.device.r_off, 1e6);
        assert_eq!(circuit.divider_floor, 1e-6);
        assert_eq!(c.power.basis, Some(MeanBasis::Published));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<FileConfig>("modle = \"TSC\"").is_err());
        assert!(toml::from_str::<FileConfig>("[noise]\ndensty = 0.1").is_err());
    }
}
