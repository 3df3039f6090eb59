//! Scenario description files.
//!
//! A scenario is a JSON object:
//!
//! ```json
//! {
//!   "geometry": { "n_elements": 256, "layout": "ula" },
//!   "snr_db_list": [-20, -18],
//!   "budget": 256,
//!   "trials": 100000,
//!   "prior_source": { "kind": "table" },
//!   "locations": [ { "id": 1, "weight": 0.5, "x": 0, "y": 0, "prior": [0.7, 0.3] } ],
//!   "gps_sigma_m": 0.0,
//!   "channel_mode": { "kind": "planted" },
//!   "strategies": [ { "kind": "proposed" }, { "kind": "top_k", "k": 2 } ],
//!   "seed": 7,
//!   "wideband_k": null,
//!   "compression": false
//! }
//! ```
//!
//! `budget` is a single count or a list. Location `prior` entries cover the
//! first codewords and are zero-padded to the codebook size. `weight` may be
//! omitted on every location for equal weights.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::ArrayGeometry;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Budgets {
    One(u32),
    Many(Vec<u32>),
}

impl Budgets {
    pub fn values(&self) -> Vec<u32> {
        match self {
            Budgets::One(b) => vec![*b],
            Budgets::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PriorSource {
    /// Per-location `prior` vectors in the scenario file.
    Table,
    /// Optimal-beam counts from a `scene_id,x,y,optimal_index` CSV.
    Empirical { path: PathBuf },
    /// A trained prior model queried at the (GPS-perturbed) location.
    Model { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChannelMode {
    /// The channel is a scaled codeword drawn from the location's prior.
    #[default]
    Planted,
    /// Channels replayed from a channel dump (evaluation scenes only).
    Dataset { path: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StrategySpec {
    /// Greedy set growth with water-filled repetitions.
    Proposed,
    /// The `k` most probable beams with equal repetitions.
    TopK { k: usize },
    /// Every codeword with equal repetitions.
    Exhaustive,
    /// The `s` most probable beams with water-filled repetitions.
    FixedS { s: usize },
}

impl StrategySpec {
    pub fn label(&self) -> String {
        match self {
            StrategySpec::Proposed => "proposed".into(),
            StrategySpec::TopK { k } => format!("top{k}"),
            StrategySpec::Exhaustive => "exhaustive".into(),
            StrategySpec::FixedS { s } => format!("fixed_s{s}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocationSpec {
    pub id: u32,
    #[serde(default)]
    pub weight: Option<f64>,
    #[serde(default)]
    pub x: f64,
    #[serde(default)]
    pub y: f64,
    #[serde(default)]
    pub prior: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub geometry: ArrayGeometry,
    pub snr_db_list: Vec<f64>,
    pub budget: Budgets,
    pub trials: u64,
    #[serde(default = "default_prior_source")]
    pub prior_source: PriorSource,
    pub locations: Vec<LocationSpec>,
    #[serde(default)]
    pub gps_sigma_m: f64,
    #[serde(default)]
    pub channel_mode: ChannelMode,
    pub strategies: Vec<StrategySpec>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub wideband_k: Option<u32>,
    /// Send the proposed and fixed-size plans through the two-coefficient
    /// feedback code before probing.
    #[serde(default)]
    pub compression: bool,
}

fn default_prior_source() -> PriorSource {
    PriorSource::Table
}

const WEIGHT_TOL: f64 = 1e-9;

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: ScenarioConfig = serde_json::from_str(&text)?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        cfg.validate()?;
        Ok(cfg)
    }

    /// Makes relative data paths relative to the scenario file's directory.
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match &mut self.prior_source {
            PriorSource::Empirical { path } | PriorSource::Model { path } => fix(path),
            PriorSource::Table => {}
        }
        if let ChannelMode::Dataset { path } = &mut self.channel_mode {
            fix(path);
        }
    }

    pub fn budgets(&self) -> Vec<u32> {
        self.budget.values()
    }

    /// Selection probability of each location.
    pub fn location_weights(&self) -> Vec<f64> {
        let n = self.locations.len() as f64;
        self.locations.iter().map(|l| l.weight.unwrap_or(1.0 / n)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Scenario(msg));
        self.geometry.validate()?;
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.snr_db_list.is_empty() {
            return bad("snr_db_list is empty".into());
        }
        if let Some(s) = self.snr_db_list.iter().find(|s| !s.is_finite()) {
            return bad(format!("SNR {s} is not finite"));
        }
        let budgets = self.budgets();
        if budgets.is_empty() || budgets.contains(&0) {
            return bad("budgets must be a non-empty list of positive counts".into());
        }
        if self.locations.is_empty() {
            return bad("no locations".into());
        }
        let given = self.locations.iter().filter(|l| l.weight.is_some()).count();
        if given != 0 && given != self.locations.len() {
            return bad("give a weight for every location or for none".into());
        }
        let weights = self.location_weights();
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return bad("location weights must be nonnegative".into());
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_TOL {
            return bad(format!("location weights sum to {total}, not 1"));
        }
        if !(self.gps_sigma_m.is_finite() && self.gps_sigma_m >= 0.0) {
            return bad("gps_sigma_m must be nonnegative".into());
        }
        if self.strategies.is_empty() {
            return bad("no strategies".into());
        }
        let n = self.geometry.n_elements;
        for s in &self.strategies {
            match *s {
                StrategySpec::TopK { k } if k == 0 || k > n => {
                    return bad(format!("top-k size {k} outside 1..={n}"));
                }
                StrategySpec::FixedS { s } if s == 0 || s > n => {
                    return bad(format!("fixed set size {s} outside 1..={n}"));
                }
                _ => {}
            }
        }
        for loc in &self.locations {
            if let Some(p) = &loc.prior {
                if p.len() > n {
                    return bad(format!("location {} prior has more than {n} entries", loc.id));
                }
            }
        }
        let needs_table = matches!(self.prior_source, PriorSource::Table)
            || (matches!(self.channel_mode, ChannelMode::Planted)
                && matches!(self.prior_source, PriorSource::Model { .. }));
        if needs_table {
            if let Some(loc) = self.locations.iter().find(|l| l.prior.is_none()) {
                return bad(format!("location {} needs a prior vector", loc.id));
            }
        }
        if self.wideband_k == Some(0) {
            return bad("wideband_k must be at least 1".into());
        }
        if self.wideband_k.is_some() && !matches!(self.channel_mode, ChannelMode::Planted) {
            return bad("wideband_k is only supported with planted channels".into());
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON encoding, as lowercase hex.
    pub fn config_hash(&self) -> String {
        let json = serde_json::to_string(self).expect("scenario serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> ScenarioConfig {
        serde_json::from_str(
            r#"{
                "geometry": {"n_elements": 8, "layout": "ula"},
                "snr_db_list": [-10],
                "budget": 16,
                "trials": 10,
                "locations": [{"id": 1, "prior": [0.6, 0.4]}, {"id": 2, "prior": [1.0]}],
                "strategies": [{"kind": "proposed"}, {"kind": "top_k", "k": 2}]
            }"#,
        )
        .unwrap()
    }

    #[test]
    fn parses_with_defaults() {
        let cfg = minimal();
        cfg.validate().unwrap();
        assert_eq!(cfg.prior_source, PriorSource::Table);
        assert_eq!(cfg.channel_mode, ChannelMode::Planted);
        assert_eq!(cfg.location_weights(), vec![0.5, 0.5]);
        assert_eq!(cfg.budgets(), vec![16]);
        assert_eq!(cfg.strategies[1].label(), "top2");
    }

    #[test]
    fn rejects_bad_configs() {
        let mut cfg = minimal();
        cfg.trials = 0;
        assert!(cfg.validate().is_err());

        let mut cfg = minimal();
        cfg.snr_db_list.clear();
        assert!(cfg.validate().is_err());

        let mut cfg = minimal();
        cfg.locations[0].weight = Some(0.7);
        assert!(cfg.validate().is_err());
        cfg.locations[1].weight = Some(0.2);
        assert!(cfg.validate().is_err());
        cfg.locations[1].weight = Some(0.3);
        cfg.validate().unwrap();

        let mut cfg = minimal();
        cfg.strategies.push(StrategySpec::TopK { k: 9 });
        assert!(cfg.validate().is_err());

        let mut cfg = minimal();
        cfg.locations[1].prior = None;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = minimal();
        let mut b = minimal();
        assert_eq!(a.config_hash(), b.config_hash());
        assert_eq!(a.config_hash().len(), 64);
        b.seed = 1;
        assert_ne!(a.config_hash(), b.config_hash());
    }

    #[test]
    fn budget_list() {
        let mut cfg = minimal();
        cfg.budget = serde_json::from_str("[64, 128]").unwrap();
        assert_eq!(cfg.budgets(), vec![64, 128]);
    }
}
