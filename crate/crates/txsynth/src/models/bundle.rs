//! Trained-model serialization.
//!
//! A bundle is a versioned JSON document holding the full architecture,
//! every parameter as a 64-bit float, the preprocessing metadata needed to
//! move between dollar and log space, and the training configuration.
//! serde_json renders floats with shortest round-trip precision, so a
//! save/load cycle is bit-exact.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::PreprocessMeta;
use crate::error::{Error, Result};
use crate::models::{GanModel, TrainConfig, VaeModel};

pub const BUNDLE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BundleModel {
    Vae(VaeModel),
    Gan(GanModel),
}

impl BundleModel {
    pub fn kind(&self) -> &'static str {
        match self {
            BundleModel::Vae(_) => "vae",
            BundleModel::Gan(m) => m.variant().name(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub format_version: u32,
    pub model: BundleModel,
    pub preprocessing: PreprocessMeta,
    pub train_config: TrainConfig,
}

impl ModelBundle {
    pub fn new(model: BundleModel, preprocessing: PreprocessMeta, train_config: TrainConfig) -> Self {
        ModelBundle { format_version: BUNDLE_FORMAT_VERSION, model, preprocessing, train_config }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Format(format!("cannot read bundle {}: {e}", path.display())))?;
        let bundle: ModelBundle = serde_json::from_str(&text)
            .map_err(|e| Error::Format(format!("cannot parse bundle {}: {e}", path.display())))?;
        if bundle.format_version != BUNDLE_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported bundle format version {} (expected {BUNDLE_FORMAT_VERSION})",
                bundle.format_version
            )));
        }
        match &bundle.model {
            BundleModel::Vae(m) => m.validate()?,
            BundleModel::Gan(m) => m.validate()?,
        }
        Ok(bundle)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{GanArch, GanVariant, VaeArch};
    use crate::num::RngStream;

    fn meta() -> PreprocessMeta {
        PreprocessMeta {
            categories: vec!["a".into(), "b".into(), "c".into(), "d".into()],
            transform: "log1p".into(),
            activity_threshold: 100.0,
            split_fraction: 0.8,
            split_seed: 3,
            aux_columns: crate::data::AUX_COLUMNS.iter().map(|s| s.to_string()).collect(),
            aux_mean: vec![0.0; 5],
            aux_std: vec![1.0; 5],
        }
    }

    #[test]
    fn vae_bundle_roundtrip_is_bit_exact() {
        let model = VaeModel::new(4, &VaeArch::default(), &mut RngStream::new(1));
        let bundle = ModelBundle::new(BundleModel::Vae(model), meta(), TrainConfig::default());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vae.bundle.json");
        bundle.save(&path).unwrap();
        let loaded = ModelBundle::load(&path).unwrap();
        match (&bundle.model, &loaded.model) {
            (BundleModel::Vae(a), BundleModel::Vae(b)) => {
                let pa = a.flatten_params();
                let pb = b.flatten_params();
                assert_eq!(pa.len(), pb.len());
                for (x, y) in pa.iter().zip(&pb) {
                    assert_eq!(x.to_bits(), y.to_bits(), "parameters must round-trip bit-exactly");
                }
            }
            _ => panic!("model kind changed"),
        }
        assert_eq!(bundle, loaded);
    }

    #[test]
    fn gan_bundle_roundtrip() {
        let model = GanModel::new(4, 5, GanVariant::Wcgan, &GanArch::default(), &mut RngStream::new(2));
        let bundle = ModelBundle::new(BundleModel::Gan(model), meta(), TrainConfig::default());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gan.bundle.json");
        bundle.save(&path).unwrap();
        assert_eq!(ModelBundle::load(&path).unwrap(), bundle);
    }

    #[test]
    fn wrong_version_is_rejected() {
        let model = VaeModel::new(2, &VaeArch::default(), &mut RngStream::new(3));
        let mut bundle = ModelBundle::new(BundleModel::Vae(model), meta(), TrainConfig::default());
        bundle.format_version = 99;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.bundle.json");
        bundle.save(&path).unwrap();
        assert!(ModelBundle::load(&path).is_err());
    }
}
