//! The TOML run configuration. Every section is optional; command-line
//! flags override whatever it sets.

use std::path::{Path, PathBuf};

use polydis::arranger::ArrangerConfig;
use polydis::trainer::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Environment variable naming the directory that relative input paths
/// are resolved against.
pub const DATA_ROOT_ENV: &str = "POLYDIS_DATA_ROOT";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    pub hop_beats: u32,
    /// Tracks forming the `melody` stream; empty means no melody stream.
    pub melody_tracks: Vec<String>,
    /// Tracks forming the `piano` stream; empty means every track.
    pub accompaniment_tracks: Vec<String>,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            hop_beats: 8,
            melody_tracks: Vec::new(),
            accompaniment_tracks: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateConfig {
    /// Beats per chord symbol in `--chords` strings.
    pub beats_per_chord: usize,
    pub n: usize,
    pub seed: u64,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        Self {
            beats_per_chord: 2,
            n: 4,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum EvalSplit {
    /// Every segment under `--data`.
    #[default]
    All,
    /// The held-out songs of the training split.
    Test,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    pub probabilities: Vec<f64>,
    pub seed: u64,
    pub split: EvalSplit,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        Self {
            probabilities: polydis::eval::default_probabilities(),
            seed: 0,
            split: EvalSplit::All,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    pub data_root: Option<PathBuf>,
    pub preprocess: PreprocessConfig,
    pub train: TrainConfig,
    pub arranger: ArrangerConfig,
    pub generate: GenerateConfig,
    pub evaluate: EvaluateConfig,
}

impl CliConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| {
            CliError::usage(
                format!("malformed config: {}", e.message()),
                "compare the file with the sections in README.md (preprocess, train, arranger, generate, evaluate)",
            )
        })
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::usage(
                format!("cannot read config {}: {e}", path.display()),
                "pass an existing TOML file to --config",
            )
        })?;
        Self::from_toml(&text)
    }
}

/// Resolves relative input paths against an optional data root.
#[derive(Clone, Debug, Default)]
pub struct Paths {
    pub root: Option<PathBuf>,
}

impl Paths {
    pub fn input(&self, p: &Path) -> PathBuf {
        match &self.root {
            Some(r) if p.is_relative() => r.join(p),
            _ => p.to_path_buf(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_are_optional_and_strict() {
        let c = CliConfig::from_toml("").unwrap();
        assert_eq!(c, CliConfig::default());
        let c = CliConfig::from_toml(
            "[train]\nepochs = 2\n[train.model]\nlatent_dim = 32\n[generate]\nbeats_per_chord = 4\n[evaluate]\nsplit = \"test\"",
        )
        .unwrap();
        assert_eq!(c.train.epochs, 2);
        assert_eq!(c.train.model.latent_dim, 32);
        assert_eq!(c.generate.beats_per_chord, 4);
        assert_eq!(c.evaluate.split, EvalSplit::Test);
        let e = CliConfig::from_toml("[train]\nepoch = 2").unwrap_err();
        assert_eq!(e.code(), 1);
        assert!(CliConfig::from_toml("[sampling]").is_err());
    }

    #[test]
    fn relative_inputs_use_the_root() {
        let p = Paths {
            root: Some("/data".into()),
        };
        assert_eq!(p.input(Path::new("x/a.mid")), PathBuf::from("/data/x/a.mid"));
        assert_eq!(p.input(Path::new("/abs.mid")), PathBuf::from("/abs.mid"));
        assert_eq!(Paths::default().input(Path::new("a")), PathBuf::from("a"));
    }
}
