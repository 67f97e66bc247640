//! Declarative run configuration.
//!
//! A config file is a TOML document mirroring the library types: top-level
//! `output_dir`, a `[data]` section choosing the corpus source, `[synthetic]`
//! for the generated corpus shape, and `[train]` (with nested
//! `[train.encoder]`, `[train.loss]`, `[train.augment]`) for the run itself.
//! Every key is optional and falls back to the library default, so the empty
//! document is a complete configuration; unknown keys anywhere are rejected.
//! Commands echo the fully resolved document into their output directory so
//! a run can be reproduced from its artifacts alone.
//!
//! The environment variable `CDDG_OUTPUT_DIR`, when set, overrides
//! `output_dir` before resolution.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{generate_synthetic, load_directory, DGDataset, SyntheticSpec};
use crate::training::TrainConfig;
use crate::{Error, Result};

/// Output-root override variable.
pub const OUTPUT_DIR_ENV: &str = "CDDG_OUTPUT_DIR";

/// Where the dataset comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    /// Generate the corpus in memory from `[synthetic]`.
    #[default]
    Synthetic,
    /// Load a `domain/class/image` directory tree from `data.path`.
    Directory,
}

/// The `[data]` section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub source: SourceKind,
    /// Corpus root; required for (and only valid with) the directory source.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

/// One parsed configuration document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    /// Root directory for run artifacts.
    pub output_dir: PathBuf,
    pub data: DataSection,
    pub synthetic: SyntheticSpec,
    pub train: TrainConfig,
}

impl Default for ConfigFile {
    fn default() -> Self {
        Self {
            output_dir: PathBuf::from("runs"),
            data: DataSection::default(),
            synthetic: SyntheticSpec::default(),
            train: TrainConfig::default(),
        }
    }
}

impl ConfigFile {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ConfigFile =
            toml::from_str(text).map_err(|e| Error::Config(format!("config parse: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.synthetic.validate()?;
        match self.data.source {
            SourceKind::Synthetic => {
                if self.data.path.is_some() {
                    return Err(Error::Config(
                        "data.path is only valid with data.source = \"directory\"".into(),
                    ));
                }
            }
            SourceKind::Directory => {
                if self.data.path.is_none() {
                    return Err(Error::Config(
                        "data.source = \"directory\" requires data.path".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Fold the environment override into `output_dir`. Call once, before
    /// any artifact path is derived, so the echoed document and the actual
    /// run agree.
    pub fn resolved(mut self) -> Self {
        if let Some(dir) = std::env::var_os(OUTPUT_DIR_ENV) {
            self.output_dir = PathBuf::from(dir);
        }
        self
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(format!("config render: {e}")))
    }

    /// Write the resolved document as `config.toml` under `dir`.
    pub fn echo_to(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join("config.toml");
        std::fs::write(&path, self.to_toml_string()?)?;
        Ok(path)
    }

    /// Materialize the configured dataset. Directory corpora are resized to
    /// the encoder's input shape.
    pub fn load_dataset(&self) -> Result<DGDataset> {
        match self.data.source {
            SourceKind::Synthetic => generate_synthetic(&self.synthetic),
            SourceKind::Directory => {
                let path = self.data.path.as_ref().ok_or_else(|| {
                    Error::Config("data.source = \"directory\" requires data.path".into())
                })?;
                let (h, w, _) = self.train.encoder.input_shape;
                load_directory(path, (h, w))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::networks::Architecture;
    use crate::training::TrainVariant;

    #[test]
    fn empty_document_is_the_default_config() {
        let cfg = ConfigFile::from_toml_str("").unwrap();
        assert_eq!(cfg, ConfigFile::default());
        assert_eq!(cfg.output_dir, PathBuf::from("runs"));
        assert_eq!(cfg.train.batch_size, 32);
        assert_eq!(cfg.synthetic.num_classes, 5);
    }

    #[test]
    fn partial_tables_override_only_their_keys() {
        let cfg = ConfigFile::from_toml_str(
            r#"
            [train]
            steps = 420
            variant = "full_ind"

            [train.encoder]
            architecture = "mlp"
            widths = [16]

            [synthetic]
            n_per_cell = 7
            "#,
        )
        .unwrap();
        assert_eq!(cfg.train.steps, 420);
        assert_eq!(cfg.train.variant, TrainVariant::FullInd);
        assert_eq!(cfg.train.encoder.architecture, Architecture::Mlp);
        assert_eq!(cfg.train.encoder.widths, vec![16]);
        // Untouched keys keep their defaults.
        assert_eq!(cfg.train.batch_size, 32);
        assert_eq!(cfg.train.encoder.embedding_dim, 128);
        assert_eq!(cfg.synthetic.n_per_cell, 7);
        assert_eq!(cfg.synthetic.num_domains, 4);
    }

    #[test]
    fn unknown_keys_are_rejected_at_every_level() {
        for doc in [
            "stepz = 3",
            "[train]\nstepz = 3",
            "[train.encoder]\nembeding_dim = 8",
            "[train.loss]\ntemperture = 0.2",
            "[synthetic]\nnum_clases = 3",
            "[data]\nsauce = \"synthetic\"",
        ] {
            assert!(
                matches!(ConfigFile::from_toml_str(doc), Err(Error::Config(_))),
                "accepted bad document: {doc}"
            );
        }
    }

    #[test]
    fn directory_source_requires_a_path_and_synthetic_forbids_one() {
        let err = ConfigFile::from_toml_str("[data]\nsource = \"directory\"");
        assert!(matches!(err, Err(Error::Config(_))));
        let err = ConfigFile::from_toml_str("[data]\npath = \"corpus\"");
        assert!(matches!(err, Err(Error::Config(_))));
        let ok = ConfigFile::from_toml_str("[data]\nsource = \"directory\"\npath = \"corpus\"");
        assert!(ok.is_ok());
    }

    #[test]
    fn echo_round_trips_exactly() {
        let cfg = ConfigFile::from_toml_str(
            r#"
            output_dir = "artifacts"
            [train]
            steps = 17
            eval_every = 17
            learning_rate = 0.0005
            [train.loss]
            alpha = 0.5
            "#,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = cfg.echo_to(dir.path()).unwrap();
        assert_eq!(path.file_name().unwrap(), "config.toml");
        let reloaded = ConfigFile::load(&path).unwrap();
        assert_eq!(reloaded, cfg);
    }

    #[test]
    fn invalid_nested_values_fail_validation() {
        let err = ConfigFile::from_toml_str("[synthetic]\nnum_classes = 1");
        assert!(matches!(err, Err(Error::Config(_))));
        let err = ConfigFile::from_toml_str("[train]\nbatch_size = 1");
        assert!(err.is_err());
        let err = ConfigFile::from_toml_str("[train.loss]\ntemperature = 0.0");
        assert!(err.is_err());
    }

    #[test]
    fn synthetic_dataset_loads_from_config() {
        let cfg = ConfigFile::from_toml_str(
            "[synthetic]\nnum_classes = 2\nnum_domains = 2\nn_per_cell = 3\nimage_size = 8",
        )
        .unwrap();
        let ds = cfg.load_dataset().unwrap();
        assert_eq!(ds.examples.len(), 2 * 2 * 3);
    }
}
