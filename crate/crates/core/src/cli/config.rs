use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::client_opt::{ClientHyper, ClientKind};
use crate::data::{SplitSpec, SyntheticSpec, FEATURES};
use crate::error::{Error, Result};
use crate::federation::{EvalSplit, FederationConfig};
use crate::model::{ModelDims, PartitionScheme};
use crate::server_opt::{ServerHyper, ServerKind};

/// Where client series come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase")]
pub enum DataSource {
    /// One CSV file per client, read in file-name order.
    Csv { dir: PathBuf },
    Synthetic(SyntheticSpec),
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Synthetic(SyntheticSpec::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub hidden: usize,
    /// Look-back `T`.
    pub lookback: usize,
    /// Look-ahead `L`.
    pub horizon: usize,
    pub mlp_hidden: Vec<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let d = ModelDims::default();
        ModelConfig {
            hidden: d.hidden,
            lookback: d.lookback,
            horizon: 4,
            mlp_hidden: d.mlp_hidden,
        }
    }
}

impl ModelConfig {
    pub fn dims(&self) -> ModelDims {
        ModelDims {
            input: 1 + FEATURES,
            hidden: self.hidden,
            lookback: self.lookback,
            mlp_hidden: self.mlp_hidden.clone(),
        }
    }
}

/// The single cell `train` runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FederationSection {
    pub rounds: usize,
    #[serde(with = "scheme_name")]
    pub scheme: PartitionScheme,
    pub client_opt: ClientKind,
    pub server_opt: ServerKind,
    /// Bytes per transmitted element.
    pub wire_bytes: usize,
}

impl Default for FederationSection {
    fn default() -> Self {
        let f = FederationConfig::default();
        FederationSection {
            rounds: f.rounds,
            scheme: f.scheme,
            client_opt: f.client_kind,
            server_opt: f.server_kind,
            wire_bytes: f.wire_bytes,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Score validation MASE after every round.
    pub per_round_validation: bool,
    /// Split scored at the end of a run.
    pub final_split: EvalSplit,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            per_round_validation: true,
            final_split: EvalSplit::Test,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    #[serde(with = "scheme_names")]
    pub schemes: Vec<PartitionScheme>,
    pub client_opts: Vec<ClientKind>,
    pub server_opts: Vec<ServerKind>,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            schemes: vec![PartitionScheme::P1, PartitionScheme::P2, PartitionScheme::P3],
            client_opts: ClientKind::ALL.to_vec(),
            server_opts: ServerKind::ALL.to_vec(),
        }
    }
}

/// Everything one experiment needs. Every key has a default, so a minimal
/// file names only the data and what it wants to change.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Worker threads: clients within a `train` run, cells within a `grid`.
    pub parallel: usize,
    pub data: DataSource,
    pub model: ModelConfig,
    pub split: SplitSpec,
    pub federation: FederationSection,
    pub client: ClientHyper,
    pub server: ServerHyper,
    pub eval: EvalConfig,
    pub grid: GridSpec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            out_dir: PathBuf::from("runs"),
            parallel: 1,
            data: DataSource::default(),
            model: ModelConfig::default(),
            split: SplitSpec::default(),
            federation: FederationSection::default(),
            client: ClientHyper::default(),
            server: ServerHyper::default(),
            eval: EvalConfig::default(),
            grid: GridSpec::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    /// Read a config file. A relative CSV directory is taken relative to the
    /// file's own directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::File {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let mut cfg = Self::from_toml(&text).map_err(|e| Error::File {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        if let DataSource::Csv { dir } = &mut cfg.data {
            if dir.is_relative() {
                if let Some(base) = path.parent() {
                    *dir = base.join(&*dir);
                }
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.dims().validate()?;
        if self.model.horizon == 0 {
            return Err(Error::invalid("look-ahead must be at least 1"));
        }
        if self.parallel == 0 {
            return Err(Error::invalid("parallel must be at least 1"));
        }
        self.split.validate()?;
        self.federation_config().validate()?;
        match &self.data {
            DataSource::Csv { dir } if !dir.is_dir() => Err(Error::File {
                path: dir.clone(),
                message: "data directory does not exist".into(),
            }),
            DataSource::Synthetic(spec) => spec.heterogeneity.validate(),
            _ => Ok(()),
        }
    }

    pub fn federation_config(&self) -> FederationConfig {
        FederationConfig {
            rounds: self.federation.rounds,
            scheme: self.federation.scheme.clone(),
            client_kind: self.federation.client_opt,
            client: self.client.clone(),
            server_kind: self.federation.server_opt,
            server: self.server.clone(),
            seed: self.seed,
            wire_bytes: self.federation.wire_bytes,
            parallel: self.parallel,
            validate: self.eval.per_round_validation,
        }
    }
}

mod scheme_name {
    use super::*;

    pub fn serialize<S: Serializer>(s: &PartitionScheme, ser: S) -> std::result::Result<S::Ok, S::Error> {
        ser.serialize_str(&s.label())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<PartitionScheme, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

mod scheme_names {
    use super::*;

    pub fn serialize<S: Serializer>(s: &[PartitionScheme], ser: S) -> std::result::Result<S::Ok, S::Error> {
        ser.collect_seq(s.iter().map(|p| p.label()))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<PartitionScheme>, D::Error> {
        Vec::<String>::deserialize(d)?
            .iter()
            .map(|s| s.parse().map_err(serde::de::Error::custom))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_gets_defaults() {
        let cfg = ExperimentConfig::from_toml("[data]\nsource = \"synthetic\"\nclients = 3\n").unwrap();
        assert_eq!(cfg.model.dims(), ModelDims::default());
        assert_eq!(cfg.model.horizon, 4);
        assert_eq!(cfg.client.batch_size, 16);
        assert_eq!(cfg.split, SplitSpec::default());
        match &cfg.data {
            DataSource::Synthetic(s) => {
                assert_eq!(s.clients, 3);
                assert_eq!(s.length, SyntheticSpec::default().length);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn round_trip_is_idempotent() {
        let mut cfg = ExperimentConfig::default();
        cfg.federation.scheme = PartitionScheme::P3;
        cfg.grid.schemes = vec![PartitionScheme::P2];
        cfg.client.eps = 1e-8;
        cfg.server.weighting = crate::server_opt::Weighting::Samples;
        let once = cfg.to_toml().unwrap();
        let back = ExperimentConfig::from_toml(&once).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.to_toml().unwrap(), once);

        let csv = ExperimentConfig {
            data: DataSource::Csv { dir: "data/meters".into() },
            ..ExperimentConfig::default()
        };
        let text = csv.to_toml().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), csv);
    }

    #[test]
    fn unknown_keys_and_names_are_rejected() {
        assert!(ExperimentConfig::from_toml("sead = 3\n").is_err());
        assert!(ExperimentConfig::from_toml("[federation]\nscheme = \"P4\"\n").is_err());
        assert!(ExperimentConfig::from_toml("[federation]\nclient_opt = \"sgd\"\n").is_err());
    }

    #[test]
    fn missing_data_dir_fails_validation() {
        let cfg = ExperimentConfig {
            data: DataSource::Csv {
                dir: "/definitely/not/here".into(),
            },
            ..ExperimentConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::File { .. })));
    }
}
