//! The five task decoders behind one interface. Tree models read the
//! 20-value summary features; the CNN ensemble reads fixed-length
//! sequences.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{featurize_summary, ScanpathSample};
use crate::error::{Error, Result};
use crate::neural::{fit_ensemble, EnsembleConfig, InceptionEnsemble};
use crate::numeric::{argmax, RngState};
use crate::trees::{fit_gbdt, fit_random_forest, ForestModel, ForestParams, GbdtModel, GbdtParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecoderKind {
    Rf,
    Lgbm,
    Gb,
    Hgb,
    Itc,
}

impl DecoderKind {
    pub const ALL: [DecoderKind; 5] = [
        DecoderKind::Rf,
        DecoderKind::Lgbm,
        DecoderKind::Gb,
        DecoderKind::Hgb,
        DecoderKind::Itc,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DecoderKind::Rf => "rf",
            DecoderKind::Lgbm => "lgbm",
            DecoderKind::Gb => "gb",
            DecoderKind::Hgb => "hgb",
            DecoderKind::Itc => "itc",
        }
    }

    /// Column label used in reports.
    pub fn label(self) -> &'static str {
        match self {
            DecoderKind::Rf => "RF",
            DecoderKind::Lgbm => "LGBM",
            DecoderKind::Gb => "GB",
            DecoderKind::Hgb => "HGB",
            DecoderKind::Itc => "ITC",
        }
    }

    /// Stable index used to derive per-decoder seeds.
    pub fn canonical_index(self) -> u64 {
        self as u64
    }
}

impl fmt::Display for DecoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DecoderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DecoderKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown decoder `{s}`")))
    }
}

/// Per-decoder hyperparameters. When deserialising, each object given is
/// laid over that decoder's preset, so `{"hgb": {"rounds": 50}}` keeps the
/// histogram binning and leaf limits of the HGB preset.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecoderConfig {
    pub rf: ForestParams,
    pub lgbm: GbdtParams,
    pub gb: GbdtParams,
    pub hgb: GbdtParams,
    pub itc: EnsembleConfig,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        DecoderConfig {
            rf: ForestParams::default(),
            lgbm: GbdtParams::lgbm(),
            gb: GbdtParams::gb(),
            hgb: GbdtParams::hgb(),
            itc: EnsembleConfig::default(),
        }
    }
}

fn overlay(base: &mut serde_json::Value, patch: serde_json::Value) {
    match (base, patch) {
        (serde_json::Value::Object(b), serde_json::Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    // Tagged enums (binning, growth) are replaced whole.
                    Some(slot) if slot.is_object() && v.get("mode").is_none() && v.get("policy").is_none() => overlay(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, p) => *b = p,
    }
}

impl<'de> Deserialize<'de> for DecoderConfig {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let patch = serde_json::Value::deserialize(d)?;
        if !patch.is_object() {
            return Err(D::Error::custom("decoder config must be an object"));
        }
        let mut base = serde_json::to_value(DecoderConfig::default()).map_err(D::Error::custom)?;
        overlay(&mut base, patch);
        let obj = base.as_object().expect("object");
        if let Some(k) = obj.keys().find(|k| !["rf", "lgbm", "gb", "hgb", "itc"].contains(&k.as_str())) {
            return Err(D::Error::custom(format!("unknown decoder `{k}`")));
        }
        let field = |k: &str| obj[k].clone();
        Ok(DecoderConfig {
            rf: serde_json::from_value(field("rf")).map_err(D::Error::custom)?,
            lgbm: serde_json::from_value(field("lgbm")).map_err(D::Error::custom)?,
            gb: serde_json::from_value(field("gb")).map_err(D::Error::custom)?,
            hgb: serde_json::from_value(field("hgb")).map_err(D::Error::custom)?,
            itc: serde_json::from_value(field("itc")).map_err(D::Error::custom)?,
        })
    }
}

#[derive(Debug, Clone)]
pub enum DecoderModel {
    Forest(ForestModel),
    Gbdt(GbdtModel),
    Itc(InceptionEnsemble),
}

fn labels(samples: &[ScanpathSample]) -> Vec<usize> {
    samples.iter().map(|s| s.task.index()).collect()
}

pub fn summary_features(samples: &[ScanpathSample]) -> Vec<Vec<f64>> {
    samples.iter().map(featurize_summary).collect()
}

/// Trains `kind` on `train`, whose task labels are the targets.
pub fn fit_decoder(
    kind: DecoderKind,
    train: &[ScanpathSample],
    config: &DecoderConfig,
    rng: &RngState,
) -> Result<DecoderModel> {
    if train.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    if let Some(s) = train.iter().find(|s| s.is_empty()) {
        return Err(Error::EmptyGroup(format!(
            "scanpath {}/{} has no fixations",
            s.participant_id, s.image_id
        )));
    }
    let y = labels(train);
    Ok(match kind {
        DecoderKind::Itc => DecoderModel::Itc(fit_ensemble(train, &y, &config.itc, rng)?),
        DecoderKind::Rf => DecoderModel::Forest(fit_random_forest(&summary_features(train), &y, &config.rf, rng)?),
        DecoderKind::Lgbm => DecoderModel::Gbdt(fit_gbdt(&summary_features(train), &y, &config.lgbm)?),
        DecoderKind::Gb => DecoderModel::Gbdt(fit_gbdt(&summary_features(train), &y, &config.gb)?),
        DecoderKind::Hgb => DecoderModel::Gbdt(fit_gbdt(&summary_features(train), &y, &config.hgb)?),
    })
}

impl DecoderModel {
    pub fn predict_proba(&self, samples: &[ScanpathSample]) -> Result<Vec<Vec<f64>>> {
        match self {
            DecoderModel::Forest(m) => m.predict_proba(&summary_features(samples)),
            DecoderModel::Gbdt(m) => m.predict_proba(&summary_features(samples)),
            DecoderModel::Itc(m) => m.predict_proba(samples),
        }
    }

    /// Predicted task indices (0-based).
    pub fn predict(&self, samples: &[ScanpathSample]) -> Result<Vec<usize>> {
        Ok(self.predict_proba(samples)?.iter().map(|p| argmax(p)).collect())
    }

    /// Fraction of `samples` whose task is predicted correctly.
    pub fn accuracy(&self, samples: &[ScanpathSample]) -> Result<f64> {
        if samples.is_empty() {
            return Err(Error::InsufficientData { needed: 1, got: 0 });
        }
        let pred = self.predict(samples)?;
        let hits = pred
            .iter()
            .zip(samples)
            .filter(|(p, s)| **p == s.task.index())
            .count();
        Ok(hits as f64 / samples.len() as f64)
    }
}
