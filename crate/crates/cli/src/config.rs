//! Experiment configuration: JSON files with per-experiment defaults.
//!
//! Parsing is two-stage: a raw layer where every field is optional (and
//! unknown fields are rejected), then resolution against the defaults of the
//! chosen experiment/algorithm pair. Flag overrides sit on top:
//! flag > `MHGP_OUTPUT_DIR` env > file > default.

use mhgp_core::targets::KineticsParams;
use serde::{Deserialize, Serialize};

#[derive(Debug)]
pub enum ConfigError {
    Message(String),
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ConfigError::Message(m) => write!(f, "{m}"),
        }
    }
}

impl std::error::Error for ConfigError {}

fn err<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError::Message(msg.into()))
}

fn positive(v: f64) -> bool {
    v.is_finite() && v > 0.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Banana,
    Kinetics,
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Mhgp,
    Mh,
    Dram,
}

/// Proposal-covariance scale: a number, or the named `2.4^2/d` preset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScaleSetting {
    Named(String),
    Value(f64),
}

/// Fully-resolved experiment configuration; what `defaults` prints and what
/// `summary.json` echoes.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub algorithm: Algorithm,
    pub iterations: usize,
    pub seed: u64,
    pub output_dir: String,
    pub x0: Vec<f64>,
    pub banana: BananaSettings,
    pub kinetics: KineticsSettings,
    pub gaussian: GaussianSettings,
    pub mhgp: MhgpSettings,
    pub mh: MhSettings,
    pub dram: DramSettings,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BananaSettings {
    pub b: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KineticsSettings {
    pub true_params: KineticsParams,
    pub noise_sigma: f64,
    pub data_seed: u64,
    /// Uniform prior box, one [low, high] per parameter.
    pub bounds: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianSettings {
    pub dim: usize,
    /// Correlation for the 2-D correlated variant; 0 gives the standard
    /// normal in `dim` dimensions.
    pub rho: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MhgpSettings {
    pub threshold: f64,
    pub local_k: usize,
    pub proposal_scale: ScaleSetting,
    pub bo_budget: usize,
    pub bo_bounds: Vec<(f64, f64)>,
    pub bo_candidates: usize,
    pub bo_xi: f64,
    pub refine_steps: usize,
    pub refine_iso_sigma: f64,
    pub refine_recheck_every: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MhSettings {
    /// Isotropic proposal standard deviation.
    pub proposal_sigma: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DramSettings {
    /// Initial (pre-adaptation) proposal standard deviation per dimension.
    pub initial_stds: Vec<f64>,
    pub adapt_start: usize,
    pub adapt_interval: usize,
    pub dr_scale: f64,
}

// Raw layer: everything optional, unknown fields rejected.

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    experiment: Experiment,
    algorithm: Algorithm,
    #[serde(default)]
    iterations: Option<usize>,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    output_dir: Option<String>,
    #[serde(default)]
    x0: Option<Vec<f64>>,
    #[serde(default)]
    banana: Option<RawBanana>,
    #[serde(default)]
    kinetics: Option<RawKinetics>,
    #[serde(default)]
    gaussian: Option<RawGaussian>,
    #[serde(default)]
    mhgp: Option<RawMhgp>,
    #[serde(default)]
    mh: Option<RawMh>,
    #[serde(default)]
    dram: Option<RawDram>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBanana {
    b: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawKinetics {
    true_params: Option<KineticsParams>,
    noise_sigma: Option<f64>,
    data_seed: Option<u64>,
    bounds: Option<Vec<(f64, f64)>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGaussian {
    dim: Option<usize>,
    rho: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMhgp {
    threshold: Option<f64>,
    local_k: Option<usize>,
    proposal_scale: Option<ScaleSetting>,
    bo_budget: Option<usize>,
    bo_bounds: Option<Vec<(f64, f64)>>,
    bo_candidates: Option<usize>,
    bo_xi: Option<f64>,
    refine_steps: Option<usize>,
    refine_iso_sigma: Option<f64>,
    refine_recheck_every: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMh {
    proposal_sigma: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDram {
    initial_stds: Option<Vec<f64>>,
    adapt_start: Option<usize>,
    adapt_interval: Option<usize>,
    dr_scale: Option<f64>,
}

/// Default kinetics prior box in sampling order
/// [k1_ref, e1, k2_ref, e2, a0_batch1, a0_batch2].
pub fn default_kinetics_bounds() -> Vec<(f64, f64)> {
    vec![
        (0.02, 0.3),
        (4.0e4, 1.6e5),
        (0.01, 0.15),
        (5.0e4, 2.0e5),
        (0.7, 1.4),
        (0.7, 1.4),
    ]
}

impl ExperimentConfig {
    /// Fully-populated defaults for an experiment/algorithm pair.
    pub fn defaults(experiment: Experiment, algorithm: Algorithm) -> Self {
        let kinetics_bounds = default_kinetics_bounds();
        let truth = KineticsParams::default_truth();
        let (iterations, x0, bo_bounds, mh_sigma, dram_stds) = match experiment {
            Experiment::Banana => (
                15_000,
                vec![-10.0, -10.0],
                vec![(-25.0, 25.0), (-40.0, 20.0)],
                2.5,
                vec![2.5, 2.5],
            ),
            Experiment::Kinetics => {
                let mid: Vec<f64> = kinetics_bounds
                    .iter()
                    .map(|(lo, hi)| 0.5 * (lo + hi))
                    .collect();
                let x0 = match algorithm {
                    // The baseline chain starts at the data-generating
                    // parameters; the surrogate pipeline finds the mode
                    // itself from mid-box.
                    Algorithm::Dram => truth.to_vector().iter().cloned().collect(),
                    _ => mid,
                };
                let stds: Vec<f64> = kinetics_bounds
                    .iter()
                    .map(|(lo, hi)| 0.01 * (hi - lo))
                    .collect();
                (5_000, x0, kinetics_bounds.clone(), 0.01, stds)
            }
            Experiment::Gaussian => (
                20_000,
                vec![3.0, 3.0],
                vec![(-8.0, 8.0), (-8.0, 8.0)],
                1.7,
                vec![1.0, 1.0],
            ),
        };
        let (bo_budget, refine_steps) = match experiment {
            Experiment::Kinetics => (150, 300),
            _ => (50, 100),
        };
        Self {
            experiment,
            algorithm,
            iterations,
            seed: 0,
            output_dir: "out".to_string(),
            x0,
            banana: BananaSettings { b: 0.1 },
            kinetics: KineticsSettings {
                true_params: truth,
                noise_sigma: 0.01,
                data_seed: 7,
                bounds: kinetics_bounds,
            },
            gaussian: GaussianSettings { dim: 2, rho: 0.0 },
            mhgp: MhgpSettings {
                threshold: 0.1,
                local_k: 50,
                proposal_scale: ScaleSetting::Value(0.5),
                bo_budget,
                bo_bounds,
                bo_candidates: 2048,
                bo_xi: 0.01,
                refine_steps,
                refine_iso_sigma: 0.05,
                refine_recheck_every: 25,
            },
            mh: MhSettings {
                proposal_sigma: mh_sigma,
            },
            dram: DramSettings {
                initial_stds: dram_stds,
                adapt_start: 200,
                adapt_interval: 100,
                dr_scale: 0.2,
            },
        }
    }

    /// Parse a JSON config, resolving omitted fields against the defaults of
    /// its experiment/algorithm pair. Unknown fields anywhere are an error.
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let raw: RawConfig = match serde_json::from_str(text) {
            Ok(r) => r,
            Err(e) => return err(format!("config parse error: {e}")),
        };
        let mut cfg = Self::defaults(raw.experiment, raw.algorithm);
        if let Some(v) = raw.iterations {
            cfg.iterations = v;
        }
        if let Some(v) = raw.seed {
            cfg.seed = v;
        }
        if let Some(v) = raw.output_dir {
            cfg.output_dir = v;
        }
        if let Some(v) = raw.x0 {
            cfg.x0 = v;
        }
        if let Some(b) = raw.banana {
            if let Some(v) = b.b {
                cfg.banana.b = v;
            }
        }
        if let Some(k) = raw.kinetics {
            if let Some(v) = k.true_params {
                cfg.kinetics.true_params = v;
            }
            if let Some(v) = k.noise_sigma {
                cfg.kinetics.noise_sigma = v;
            }
            if let Some(v) = k.data_seed {
                cfg.kinetics.data_seed = v;
            }
            if let Some(v) = k.bounds {
                // The prior box doubles as the BO search box unless the
                // mhgp section overrides it explicitly below.
                cfg.mhgp.bo_bounds = v.clone();
                cfg.kinetics.bounds = v;
            }
        }
        if let Some(g) = raw.gaussian {
            if let Some(v) = g.dim {
                cfg.gaussian.dim = v;
            }
            if let Some(v) = g.rho {
                cfg.gaussian.rho = v;
            }
        }
        if let Some(m) = raw.mhgp {
            if let Some(v) = m.threshold {
                cfg.mhgp.threshold = v;
            }
            if let Some(v) = m.local_k {
                cfg.mhgp.local_k = v;
            }
            if let Some(v) = m.proposal_scale {
                cfg.mhgp.proposal_scale = v;
            }
            if let Some(v) = m.bo_budget {
                cfg.mhgp.bo_budget = v;
            }
            if let Some(v) = m.bo_bounds {
                cfg.mhgp.bo_bounds = v;
            }
            if let Some(v) = m.bo_candidates {
                cfg.mhgp.bo_candidates = v;
            }
            if let Some(v) = m.bo_xi {
                cfg.mhgp.bo_xi = v;
            }
            if let Some(v) = m.refine_steps {
                cfg.mhgp.refine_steps = v;
            }
            if let Some(v) = m.refine_iso_sigma {
                cfg.mhgp.refine_iso_sigma = v;
            }
            if let Some(v) = m.refine_recheck_every {
                cfg.mhgp.refine_recheck_every = v;
            }
        }
        if let Some(m) = raw.mh {
            if let Some(v) = m.proposal_sigma {
                cfg.mh.proposal_sigma = v;
            }
        }
        if let Some(d) = raw.dram {
            if let Some(v) = d.initial_stds {
                cfg.dram.initial_stds = v;
            }
            if let Some(v) = d.adapt_start {
                cfg.dram.adapt_start = v;
            }
            if let Some(v) = d.adapt_interval {
                cfg.dram.adapt_interval = v;
            }
            if let Some(v) = d.dr_scale {
                cfg.dram.dr_scale = v;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn dim(&self) -> usize {
        match self.experiment {
            Experiment::Banana => 2,
            Experiment::Kinetics => 6,
            Experiment::Gaussian => self.gaussian.dim,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.iterations == 0 {
            return err("iterations: must be at least 1");
        }
        let d = self.dim();
        if self.x0.len() != d {
            return err(format!("x0: expected {d} coordinates, got {}", self.x0.len()));
        }
        if !positive(self.mhgp.threshold) {
            return err("mhgp.threshold: must be positive");
        }
        if self.mhgp.local_k == 0 {
            return err("mhgp.local_k: must be at least 1");
        }
        if let ScaleSetting::Named(name) = &self.mhgp.proposal_scale {
            if name != "haario" {
                return err(format!(
                    "mhgp.proposal_scale: unknown preset {name:?} (use a number or \"haario\")"
                ));
            }
        }
        if let ScaleSetting::Value(v) = self.mhgp.proposal_scale {
            if !positive(v) {
                return err("mhgp.proposal_scale: must be positive");
            }
        }
        if self.mhgp.bo_bounds.len() != d {
            return err(format!(
                "mhgp.bo_bounds: expected {d} pairs, got {}",
                self.mhgp.bo_bounds.len()
            ));
        }
        if self.mhgp.bo_bounds.iter().any(|(lo, hi)| lo >= hi) {
            return err("mhgp.bo_bounds: each pair must satisfy low < high");
        }
        if self.mhgp.bo_candidates == 0 {
            return err("mhgp.bo_candidates: must be at least 1");
        }
        if !positive(self.mhgp.refine_iso_sigma) {
            return err("mhgp.refine_iso_sigma: must be positive");
        }
        if !positive(self.mh.proposal_sigma) {
            return err("mh.proposal_sigma: must be positive");
        }
        if self.dram.initial_stds.len() != d {
            return err(format!(
                "dram.initial_stds: expected {d} entries, got {}",
                self.dram.initial_stds.len()
            ));
        }
        if self.dram.initial_stds.iter().any(|s| !positive(*s)) {
            return err("dram.initial_stds: entries must be positive");
        }
        if !positive(self.dram.dr_scale) {
            return err("dram.dr_scale: must be positive");
        }
        if self.dram.adapt_interval == 0 {
            return err("dram.adapt_interval: must be at least 1");
        }
        match self.experiment {
            Experiment::Banana => {
                if !positive(self.banana.b) {
                    return err("banana.b: must be positive");
                }
            }
            Experiment::Kinetics => {
                if self.kinetics.bounds.len() != 6 {
                    return err("kinetics.bounds: expected 6 pairs");
                }
                if self.kinetics.bounds.iter().any(|(lo, hi)| lo >= hi || *lo <= 0.0) {
                    return err("kinetics.bounds: pairs must be positive with low < high");
                }
                if !positive(self.kinetics.noise_sigma) {
                    return err("kinetics.noise_sigma: must be positive");
                }
            }
            Experiment::Gaussian => {
                if self.gaussian.dim == 0 {
                    return err("gaussian.dim: must be at least 1");
                }
                if self.gaussian.rho != 0.0 && self.gaussian.dim != 2 {
                    return err("gaussian.rho: correlation requires dim = 2");
                }
                if self.gaussian.rho.abs() >= 1.0 {
                    return err("gaussian.rho: must lie in (-1, 1)");
                }
            }
        }
        Ok(())
    }

    pub fn gamma(&self) -> mhgp_core::samplers::ProposalScale {
        match &self.mhgp.proposal_scale {
            ScaleSetting::Named(_) => mhgp_core::samplers::ProposalScale::Haario,
            ScaleSetting::Value(v) => mhgp_core::samplers::ProposalScale::Fixed(*v),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_parser() {
        for exp in [Experiment::Banana, Experiment::Kinetics, Experiment::Gaussian] {
            for alg in [Algorithm::Mhgp, Algorithm::Mh, Algorithm::Dram] {
                let cfg = ExperimentConfig::defaults(exp, alg);
                let json = serde_json::to_string_pretty(&cfg).unwrap();
                let parsed = ExperimentConfig::from_json(&json).unwrap();
                assert_eq!(serde_json::to_string(&parsed).unwrap(), serde_json::to_string(&cfg).unwrap());
            }
        }
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let json = r#"{"experiment":"banana","algorithm":"mh","bogus":1}"#;
        let e = ExperimentConfig::from_json(json).unwrap_err();
        assert!(e.to_string().contains("bogus"), "{e}");
    }

    #[test]
    fn unknown_nested_fields_are_rejected() {
        let json = r#"{"experiment":"banana","algorithm":"mhgp","mhgp":{"thresh":0.2}}"#;
        assert!(ExperimentConfig::from_json(json).is_err());
    }

    #[test]
    fn zero_iterations_invalid() {
        let json = r#"{"experiment":"banana","algorithm":"mh","iterations":0}"#;
        let e = ExperimentConfig::from_json(json).unwrap_err();
        assert!(e.to_string().contains("iterations"), "{e}");
    }

    #[test]
    fn partial_file_inherits_defaults() {
        let json = r#"{"experiment":"banana","algorithm":"mhgp","seed":9,"mhgp":{"threshold":0.2}}"#;
        let cfg = ExperimentConfig::from_json(json).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.mhgp.threshold, 0.2);
        assert_eq!(cfg.mhgp.local_k, 50);
        assert_eq!(cfg.iterations, 15_000);
    }

    #[test]
    fn haario_preset_accepted() {
        let json =
            r#"{"experiment":"banana","algorithm":"mhgp","mhgp":{"proposal_scale":"haario"}}"#;
        let cfg = ExperimentConfig::from_json(json).unwrap();
        assert!(matches!(
            cfg.gamma(),
            mhgp_core::samplers::ProposalScale::Haario
        ));
        let bad = r#"{"experiment":"banana","algorithm":"mhgp","mhgp":{"proposal_scale":"big"}}"#;
        assert!(ExperimentConfig::from_json(bad).is_err());
    }
}
