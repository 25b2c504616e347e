//! From-scratch regressors mapping binary feature vectors to a bound
//! value in [0,1], plus a two-stage hyperparameter tuner.

pub mod activation;
pub mod gbdt;
pub mod mlp;
pub mod rf;
pub mod tree;
pub mod tune;

use serde::{Deserialize, Serialize};

use crate::datagen::Dataset;

pub use activation::{activation, mish, ActivationKind};
pub use gbdt::{gbdt_train, GbdtConfig, GbdtModel};
pub use mlp::{adam_step, mlp_init, mlp_train, AdamState, BatchMode, MlpConfig, MlpModel, TrainReport};
pub use rf::{rf_train, ForestConfig, ForestModel};
pub use tune::{tune, SearchSpace, TuneReport};

/// Which bound a model is trained against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LabelColumn {
    Lb,
    Ub,
}

impl std::fmt::Display for LabelColumn {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LabelColumn::Lb => "lb",
            LabelColumn::Ub => "ub",
        })
    }
}

/// Anything that maps a feature vector to a real prediction.
pub trait Predictor {
    fn predict(&self, features: &[f64]) -> f64;
}

impl<F: Fn(&[f64]) -> f64> Predictor for F {
    fn predict(&self, features: &[f64]) -> f64 {
        self(features)
    }
}

/// Dataset rows as (features, label) pairs for the chosen bound.
pub fn training_rows(dataset: &Dataset, label: LabelColumn) -> Vec<(Vec<f64>, f64)> {
    dataset
        .records
        .iter()
        .map(|r| {
            let feats: Vec<f64> = r
                .key
                .bits(dataset.n_observed)
                .iter()
                .map(|&b| b as u8 as f64)
                .collect();
            let y = match label {
                LabelColumn::Lb => r.lb,
                LabelColumn::Ub => r.ub,
            };
            (feats, y)
        })
        .collect()
}

/// Persistent form of a trained model: kind tag, full parameters, and
/// training provenance. Loading reproduces predictions bit-exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavedModel {
    pub kind: String,
    pub label: LabelColumn,
    pub params: ModelParams,
    pub meta: ModelMeta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ModelParams {
    Mlp(mlp::MlpModel),
    Forest(rf::ForestModel),
    Gbdt(gbdt::GbdtModel),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub seed: u64,
    pub dataset_hash: String,
    pub train_mse: f64,
    pub train_mae: f64,
}

impl Predictor for ModelParams {
    fn predict(&self, features: &[f64]) -> f64 {
        match self {
            ModelParams::Mlp(m) => m.forward(features),
            ModelParams::Forest(m) => m.predict(features),
            ModelParams::Gbdt(m) => m.predict(features),
        }
    }
}

impl SavedModel {
    pub fn save(&self, path: &std::path::Path) -> crate::Result<()> {
        let f = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(f), self)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> crate::Result<SavedModel> {
        Ok(serde_json::from_reader(std::fs::File::open(path)?)?)
    }
}

/// Derives a child seed from a parent seed and an index (splitmix64 on
/// the combined value). Used for per-tree and per-candidate streams.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_mul(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}
