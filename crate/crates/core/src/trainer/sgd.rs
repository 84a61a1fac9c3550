//! Plain stochastic gradient descent on the spectral MMD loss.

use serde::{Deserialize, Serialize};

use crate::arch::{ArchSpec, GeneratorSet};
use crate::charfn::{InitScheme, ThetaVector};
use crate::error::{Error, Result};
use crate::kernel::{KernelSpec, SpectralPmf};
use crate::rng::{self, tags};

use super::estimate::{mmd_gradient_estimate, mmd_loss_estimate, CharSource};
use super::target::{Target, TargetSpec};

fn default_frequencies() -> usize {
    32
}

fn default_z_samples() -> usize {
    128
}

/// Training run description, as read from JSON.
///
/// `init` accepts the strings understood by [`InitScheme`]; when omitted, or
/// given as plain `"gaussian"`, angles are drawn with `γ² = 1/D`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub arch: String,
    pub kernel: String,
    #[serde(default)]
    pub init: Option<String>,
    pub learning_rate: f64,
    pub steps: usize,
    #[serde(default = "default_frequencies")]
    pub frequencies_per_step: usize,
    /// `z` samples per characteristic-value estimate; 0 selects exact
    /// evaluation.
    #[serde(default = "default_z_samples")]
    pub z_samples: usize,
    pub seed: u64,
    pub target: TargetSpec,
}

/// Parsed and validated form of a [`TrainConfig`].
#[derive(Clone, Debug)]
pub struct TrainSetup {
    pub arch: GeneratorSet,
    pub pmf: SpectralPmf,
    pub scheme: InitScheme,
    pub target: Target,
    pub source: CharSource,
}

impl TrainConfig {
    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn resolve(&self) -> Result<TrainSetup> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::invalid(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if self.frequencies_per_step < 2 {
            return Err(Error::invalid("frequencies_per_step must be at least 2"));
        }
        if self.z_samples == 1 {
            return Err(Error::invalid("z_samples must be 0 (exact) or at least 2"));
        }
        let arch = self.arch.parse::<ArchSpec>()?.build()?;
        let pmf = self.kernel.parse::<KernelSpec>()?.build(arch.n())?;
        let scheme = match self.init.as_deref() {
            None | Some("gaussian") => InitScheme::Gaussian {
                gamma: (1.0 / arch.len().max(1) as f64).sqrt(),
            },
            Some(s) => s.parse()?,
        };
        scheme.moments()?;
        let target = self.target.build(arch.n())?;
        let source = if self.z_samples == 0 {
            CharSource::Exact
        } else {
            CharSource::MonteCarlo(self.z_samples)
        };
        Ok(TrainSetup {
            arch,
            pmf,
            scheme,
            target,
            source,
        })
    }
}

/// One row of a training trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub loss: f64,
    pub loss_stderr: f64,
    pub grad_norm: f64,
    /// FNV-1a hash of the bit patterns of `θ` at this step.
    pub theta_hash: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub initial_theta: Vec<f64>,
    pub records: Vec<StepRecord>,
    pub final_theta: Vec<f64>,
}

pub fn theta_hash(theta: &[f64]) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for v in theta {
        for b in v.to_bits().to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    format!("{h:016x}")
}

/// Runs `steps` SGD updates from a seeded initialisation. Step `t` records
/// the loss and gradient estimate at `θ_t`; the last record is evaluated at
/// the final angles and not followed by an update.
pub fn train_setup(setup: &TrainSetup, config: &TrainConfig) -> Result<TrainTrace> {
    let d = setup.arch.len();
    let mut init_rng = rng::substream(config.seed, &[tags::INIT]);
    let mut theta: ThetaVector = setup.scheme.sample_theta(d, &mut init_rng)?;
    let initial_theta = theta.to_vec();
    let mut records = Vec::with_capacity(config.steps + 1);
    for step in 0..=config.steps {
        let mut r = rng::substream(config.seed, &[tags::STEP, step as u64]);
        let loss = mmd_loss_estimate(
            &setup.arch,
            &theta,
            &setup.target,
            &setup.pmf,
            config.frequencies_per_step,
            setup.source,
            &mut r,
        )?;
        let grad = mmd_gradient_estimate(
            &setup.arch,
            &theta,
            &setup.target,
            &setup.pmf,
            config.frequencies_per_step,
            setup.source,
            &mut r,
        )?;
        records.push(StepRecord {
            step,
            loss: loss.mean,
            loss_stderr: loss.stderr,
            grad_norm: grad.norm(),
            theta_hash: theta_hash(&theta),
        });
        if step < config.steps {
            for (t, g) in theta.as_mut_slice().iter_mut().zip(&grad.mean) {
                *t -= config.learning_rate * g;
            }
        }
    }
    Ok(TrainTrace {
        initial_theta,
        records,
        final_theta: theta.into_inner(),
    })
}

pub fn train(config: &TrainConfig) -> Result<TrainTrace> {
    let setup = config.resolve()?;
    train_setup(&setup, config)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(steps: usize) -> TrainConfig {
        TrainConfig::from_json_str(&format!(
            r#"{{
                "arch": "complete:3",
                "kernel": "gaussian:3",
                "learning_rate": 0.1,
                "steps": {steps},
                "frequencies_per_step": 8,
                "z_samples": 16,
                "seed": 5,
                "target": {{"kind": "planted", "terms": [{{"a": "100", "c": 0.4}}]}}
            }}"#
        ))
        .unwrap()
    }

    #[test]
    fn zero_steps_records_initialisation_only() {
        let cfg = config(0);
        let trace = train(&cfg).unwrap();
        assert_eq!(trace.records.len(), 1);
        assert_eq!(trace.final_theta, trace.initial_theta);
        assert_eq!(trace.records[0].theta_hash, theta_hash(&trace.initial_theta));
    }

    #[test]
    fn identical_seeds_give_identical_traces() {
        let cfg = config(20);
        let a = train(&cfg).unwrap();
        let b = train(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.records.len(), 21);
        let mut other = cfg.clone();
        other.seed = 6;
        assert_ne!(train(&other).unwrap().final_theta, a.final_theta);
    }

    #[test]
    fn traces_do_not_depend_on_thread_count() {
        let cfg = config(10);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| train(&cfg)).unwrap();
        let b = four.install(|| train(&cfg)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn config_validation() {
        let mut cfg = config(1);
        cfg.learning_rate = 0.0;
        assert!(cfg.resolve().is_err());
        let mut cfg = config(1);
        cfg.z_samples = 1;
        assert!(cfg.resolve().is_err());
        let mut cfg = config(1);
        cfg.arch = "ring:3".into();
        assert!(cfg.resolve().is_err());
        assert!(TrainConfig::from_json_str(r#"{"arch": "complete:3"}"#).is_err());
        let setup = config(1).resolve().unwrap();
        let gamma = (1.0f64 / 6.0).sqrt();
        assert_eq!(setup.scheme, InitScheme::Gaussian { gamma });
    }
}
