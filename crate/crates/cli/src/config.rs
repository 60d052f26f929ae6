use std::path::Path;

use oanbv::experiments::{Method, TrialParams};
use oanbv::scene::Family;
use oanbv::{Error, Result};
use serde::{Deserialize, Serialize};

/// Everything a command reads. Loaded from JSON (unknown keys rejected),
/// then overridden by flags; the materialized result goes into the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Root seed; scene seeds are `seed, seed + 1, ...`.
    pub seed: u64,
    /// Worker threads; `None` uses every available core.
    pub workers: Option<usize>,
    pub trial: TrialParams,
    pub run: RunSection,
    pub sweep: SweepSection,
    pub ablate_alignment: AlignmentSection,
    pub ablate_viewpoints: ViewpointSection,
    pub scene: SceneSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub family: Family,
    pub methods: Vec<Method>,
    pub scenes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub families: Vec<Family>,
    /// Trials per family.
    pub trials: usize,
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlignmentSection {
    pub family: Family,
    pub seeds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ViewpointSection {
    pub family: Family,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSection {
    pub family: Family,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 0,
            workers: None,
            trial: TrialParams::default(),
            run: RunSection::default(),
            sweep: SweepSection::default(),
            ablate_alignment: AlignmentSection::default(),
            ablate_viewpoints: ViewpointSection::default(),
            scene: SceneSection::default(),
        }
    }
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            family: Family::Indoor,
            methods: vec![Method::OaNbv, Method::Pred, Method::Volumetric],
            scenes: 200,
        }
    }
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            families: vec![Family::Indoor, Family::Outdoor],
            trials: 250,
            step: 0.1,
        }
    }
}

impl Default for AlignmentSection {
    fn default() -> Self {
        Self {
            family: Family::Outdoor,
            seeds: 100,
        }
    }
}

impl Default for ViewpointSection {
    fn default() -> Self {
        Self {
            family: Family::Indoor,
            trials: 10,
        }
    }
}

impl Default for SceneSection {
    fn default() -> Self {
        Self { family: Family::Indoor }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        self.trial.validate()?;
        if self.workers == Some(0) {
            return Err(Error::InvalidArgument("workers must be positive".into()));
        }
        if self.run.scenes == 0 {
            return Err(Error::InvalidArgument("run needs at least one scene".into()));
        }
        if self.run.methods.is_empty() {
            return Err(Error::InvalidArgument("run needs at least one method".into()));
        }
        if self.sweep.trials == 0 || self.sweep.families.is_empty() {
            return Err(Error::InvalidArgument("sweep needs at least one trial".into()));
        }
        if self.ablate_alignment.seeds == 0 || self.ablate_viewpoints.trials == 0 {
            return Err(Error::InvalidArgument("ablation needs at least one seed".into()));
        }
        Ok(())
    }
}

/// `seed, seed + 1, ..., seed + n - 1`, wrapping.
pub fn scene_seeds(root: u64, n: usize) -> Vec<u64> {
    (0..n as u64).map(|i| root.wrapping_add(i)).collect()
}

/// Comma-separated values of a `FromStr` type.
pub fn parse_list<T: std::str::FromStr<Err = Error>>(s: &str) -> Result<Vec<T>> {
    s.split(',').map(|t| t.trim().parse()).collect()
}

/// `w_v,w_a,w_o`.
pub fn parse_weights(s: &str) -> Result<oanbv::scoring::Weights> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| Error::Parse(format!("weight '{t}': {e}"))))
        .collect::<Result<_>>()?;
    match v.as_slice() {
        &[w_v, w_a, w_o] => oanbv::scoring::Weights::new(w_v, w_a, w_o),
        _ => Err(Error::Parse(format!("expected three weights w_v,w_a,w_o, got {}", v.len()))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_json() {
        let c = Config::default();
        let s = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<Config>(&s).unwrap(), c);
    }

    #[test]
    fn unknown_key_is_named() {
        let e = serde_json::from_str::<Config>(r#"{"trial": {"iterationz": 3}}"#).unwrap_err();
        assert!(e.to_string().contains("iterationz"));
    }

    #[test]
    fn partial_document_keeps_defaults() {
        let c: Config = serde_json::from_str(r#"{"seed": 9, "run": {"scenes": 3}}"#).unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.run.scenes, 3);
        assert_eq!(c.run.methods, RunSection::default().methods);
    }

    #[test]
    fn weights_must_sum_to_one() {
        assert!(parse_weights("0.5,0.6,0.2").is_err());
        assert!(parse_weights("0.03,0.14,0.83").is_ok());
        assert!(parse_weights("0.5,0.5").is_err());
    }
}
