use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bagstore::TaskKind;
use crate::error::{Error, Result};
use crate::numkit::AdamConfig;

/// Learning-rate multiplier of the topological stream in `multi_lr`.
pub const MULTI_LR_FACTOR: f64 = 10.0;

/// Training protocols and comparators known to the trainer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    /// Statistical stream first, then the frozen-base topological residual.
    TwoStage,
    Joint,
    MultiLr,
    StatOnly,
    TopoOnly,
    NoTexture,
    MeanPool,
    AttnMil,
}

impl Variant {
    pub const ALL: [Variant; 8] = [
        Variant::TwoStage,
        Variant::Joint,
        Variant::MultiLr,
        Variant::StatOnly,
        Variant::TopoOnly,
        Variant::NoTexture,
        Variant::MeanPool,
        Variant::AttnMil,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::TwoStage => "two_stage",
            Variant::Joint => "joint",
            Variant::MultiLr => "multi_lr",
            Variant::StatOnly => "stat_only",
            Variant::TopoOnly => "topo_only",
            Variant::NoTexture => "no_texture",
            Variant::MeanPool => "meanpool",
            Variant::AttnMil => "abmil",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Variant::TwoStage => "statistical stream, then frozen base plus topological residual with texture loss",
            Variant::Joint => "both streams trained together on the full loss, no stop-gradient",
            Variant::MultiLr => "joint with the topological learning rate scaled by 10",
            Variant::StatOnly => "statistical stream alone",
            Variant::TopoOnly => "topological stream alone, texture loss kept",
            Variant::NoTexture => "two-stage with texture weight 0",
            Variant::MeanPool => "mean-pooled embeddings into an MLP",
            Variant::AttnMil => "tanh-attention pooling into an MLP",
        }
    }

    pub fn is_two_stage(self) -> bool {
        matches!(self, Variant::TwoStage | Variant::NoTexture)
    }

    pub fn has_topo(self) -> bool {
        matches!(
            self,
            Variant::TwoStage | Variant::Joint | Variant::MultiLr | Variant::TopoOnly | Variant::NoTexture
        )
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == key || (key == "full" && *v == Variant::TwoStage))
            .ok_or_else(|| Error::UnknownVariant(s.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub variant: Variant,
    pub stage1_epochs: usize,
    /// `None` picks 30 epochs for classification and 20 for survival.
    pub stage2_epochs: Option<usize>,
    pub lr: f64,
    pub weight_decay: f64,
    pub margin: f64,
    pub texture_weight: f64,
    pub prototypes: usize,
    pub tau_init: f64,
    pub k_knn: usize,
    /// Width of the statistical head and baseline heads.
    pub hidden: usize,
    /// Width of the GCN layers; `None` uses `hidden`. A narrower GCN trains
    /// with its learning rate scaled by `hidden / topo_hidden`, so each Adam
    /// step moves the residual logits about as far as at full width.
    pub topo_hidden: Option<usize>,
    pub dropout: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Instances sampled from the training split for codebook seeding.
    pub kmeans_sample: usize,
    /// Record the residual-gating terms on every step.
    pub log_prop1: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            variant: Variant::TwoStage,
            stage1_epochs: 10,
            stage2_epochs: None,
            lr: 2e-4,
            weight_decay: 1e-4,
            margin: 0.3,
            texture_weight: 1.0,
            prototypes: 32,
            tau_init: 1.0,
            k_knn: 8,
            hidden: 512,
            topo_hidden: None,
            dropout: 0.25,
            batch_size: 1,
            seed: 0,
            kmeans_sample: 20_000,
            log_prop1: true,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("invalid value {value:?} for {key}")))
}

impl TrainConfig {
    pub fn stage2_epochs_for(&self, task: TaskKind) -> usize {
        self.stage2_epochs.unwrap_or(match task {
            TaskKind::Classification => 30,
            TaskKind::Survival => 20,
        })
    }

    pub fn topo_width(&self) -> usize {
        self.topo_hidden.unwrap_or(self.hidden)
    }

    /// Learning-rate multiplier of the topological stream before any
    /// variant-specific factor.
    pub fn topo_width_factor(&self) -> f64 {
        self.hidden as f64 / self.topo_width() as f64
    }

    /// Texture weight actually applied: zero for `no_texture`.
    pub fn effective_texture_weight(&self) -> f64 {
        if self.variant == Variant::NoTexture {
            0.0
        } else {
            self.texture_weight
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            weight_decay: self.weight_decay,
            ..AdamConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lr", self.lr),
            ("tau_init", self.tau_init),
        ];
        for (k, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{k} must be positive, got {v}")));
            }
        }
        for (k, v) in [
            ("weight_decay", self.weight_decay),
            ("margin", self.margin),
            ("texture_weight", self.texture_weight),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{k} must be nonnegative, got {v}")));
            }
        }
        for (k, v) in [
            ("prototypes", self.prototypes),
            ("k_knn", self.k_knn),
            ("hidden", self.hidden),
            ("topo_hidden", self.topo_width()),
            ("batch_size", self.batch_size),
            ("kmeans_sample", self.kmeans_sample),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{k} must be positive")));
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout must lie in [0, 1), got {}", self.dropout)));
        }
        Ok(())
    }

    pub const KEYS: [&'static str; 17] = [
        "variant",
        "stage1_epochs",
        "stage2_epochs",
        "lr",
        "weight_decay",
        "margin",
        "texture_weight",
        "prototypes",
        "tau_init",
        "k_knn",
        "hidden",
        "topo_hidden",
        "dropout",
        "batch_size",
        "seed",
        "kmeans_sample",
        "log_prop1",
    ];

    /// Applies one `key=value` setting; unknown keys are rejected by name.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "variant" => self.variant = value.parse()?,
            "stage1_epochs" => self.stage1_epochs = parse(key, value)?,
            "stage2_epochs" => {
                self.stage2_epochs = match value.trim() {
                    "auto" | "" => None,
                    v => Some(parse(key, v)?),
                }
            }
            "lr" => self.lr = parse(key, value)?,
            "weight_decay" => self.weight_decay = parse(key, value)?,
            "margin" => self.margin = parse(key, value)?,
            "texture_weight" => self.texture_weight = parse(key, value)?,
            "prototypes" => self.prototypes = parse(key, value)?,
            "tau_init" => self.tau_init = parse(key, value)?,
            "k_knn" => self.k_knn = parse(key, value)?,
            "hidden" => self.hidden = parse(key, value)?,
            "topo_hidden" => {
                self.topo_hidden = match value.trim() {
                    "auto" | "" => None,
                    v => Some(parse(key, v)?),
                }
            }
            "dropout" => self.dropout = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "kmeans_sample" => self.kmeans_sample = parse(key, value)?,
            "log_prop1" => self.log_prop1 = parse(key, value)?,
            _ => return Err(Error::Config(format!("unknown training key {key:?}"))),
        }
        Ok(())
    }

    /// Every field as `key=value` lines in [`TrainConfig::KEYS`] order.
    pub fn to_kv(&self) -> String {
        let s2 = self.stage2_epochs.map_or("auto".to_string(), |v| v.to_string());
        let values = [
            self.variant.name().to_string(),
            self.stage1_epochs.to_string(),
            s2,
            self.lr.to_string(),
            self.weight_decay.to_string(),
            self.margin.to_string(),
            self.texture_weight.to_string(),
            self.prototypes.to_string(),
            self.tau_init.to_string(),
            self.k_knn.to_string(),
            self.hidden.to_string(),
            self.topo_hidden.map_or("auto".to_string(), |v| v.to_string()),
            self.dropout.to_string(),
            self.batch_size.to_string(),
            self.seed.to_string(),
            self.kmeans_sample.to_string(),
            self.log_prop1.to_string(),
        ];
        Self::KEYS
            .iter()
            .zip(values)
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }
}
