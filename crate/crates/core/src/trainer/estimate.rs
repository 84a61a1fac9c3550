//! Spectral Monte-Carlo estimators of the MMD loss and its gradient.
//!
//! Each estimator samples frequencies from `Λ` and, for each, estimates the
//! model's characteristic value from uniformly drawn `z`. Products of two
//! estimated factors use independent `z` batches so the products stay
//! unbiased. Frequencies are processed in parallel, each on its own random
//! substream derived from a key drawn from the caller's stream.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arch::GeneratorSet;
use crate::charfn::{mc_char, mc_char_with_grads, CharEvaluator};
use crate::error::{Error, Result};
use crate::gf2::DEFAULT_CAP;
use crate::kernel::SpectralPmf;
use crate::rng;
use crate::stats::Estimate;

use super::target::Target;

/// How the model's characteristic values are obtained per frequency.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CharSource {
    /// Two independent batches of this many `z` samples.
    MonteCarlo(usize),
    /// Exact row-space evaluation.
    Exact,
}

fn check_counts(n_freq: usize, source: CharSource) -> Result<()> {
    if n_freq < 2 {
        return Err(Error::invalid(format!("need at least 2 frequencies, got {n_freq}")));
    }
    if let CharSource::MonteCarlo(z) = source {
        if z < 2 {
            return Err(Error::invalid(format!("need at least 2 z samples, got {z}")));
        }
    }
    Ok(())
}

/// Unbiased estimate of `E_{a~Λ} (C^a_p - C^a_θ)^2`.
pub fn mmd_loss_estimate<R: Rng + ?Sized>(
    g: &GeneratorSet,
    theta: &[f64],
    target: &Target,
    pmf: &SpectralPmf,
    n_freq: usize,
    source: CharSource,
    rng: &mut R,
) -> Result<Estimate> {
    check_counts(n_freq, source)?;
    let key: u64 = rng.random();
    let terms = (0..n_freq)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::substream(key, &[i as u64]);
            let a = pmf.sample(&mut r);
            let cp = target.char_value(&a)?;
            Ok(match source {
                CharSource::Exact => {
                    let c = CharEvaluator::new(g, &a, DEFAULT_CAP)?.value(theta)?;
                    (cp - c) * (cp - c)
                }
                CharSource::MonteCarlo(z) => {
                    let c1 = mc_char(g, theta, &a, z, &mut r)?.mean;
                    let c2 = mc_char(g, theta, &a, z, &mut r)?.mean;
                    (cp - c1) * (cp - c2)
                }
            })
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(Estimate::from_samples(&terms))
}

/// Componentwise gradient estimate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientEstimate {
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    pub samples: usize,
}

impl GradientEstimate {
    pub fn norm(&self) -> f64 {
        self.mean.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Unbiased estimate of `∂L/∂θ_ℓ = -2 E_{a~Λ} (C^a_p - C^a_θ) ∂C^a_θ/∂θ_ℓ`
/// for every `ℓ`. A sampled `a` contributes only to `ℓ ∈ S^a`.
pub fn mmd_gradient_estimate<R: Rng + ?Sized>(
    g: &GeneratorSet,
    theta: &[f64],
    target: &Target,
    pmf: &SpectralPmf,
    n_freq: usize,
    source: CharSource,
    rng: &mut R,
) -> Result<GradientEstimate> {
    check_counts(n_freq, source)?;
    let key: u64 = rng.random();
    let contributions = (0..n_freq)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::substream(key, &[i as u64]);
            let a = pmf.sample(&mut r);
            let cp = target.char_value(&a)?;
            let (idx, resid, grads) = match source {
                CharSource::Exact => {
                    let ev = CharEvaluator::new(g, &a, DEFAULT_CAP)?;
                    let (c, grads) = ev.value_and_grad(theta)?;
                    (ev.indices().to_vec(), cp - c, grads)
                }
                CharSource::MonteCarlo(z) => {
                    let c1 = mc_char(g, theta, &a, z, &mut r)?.mean;
                    let (idx, _, grads) = mc_char_with_grads(g, theta, &a, z, &mut r)?;
                    (idx, cp - c1, grads)
                }
            };
            Ok(idx
                .into_iter()
                .zip(grads)
                .map(|(j, d)| (j, -2.0 * resid * d))
                .collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?;
    let d = g.len();
    let mut s1 = vec![0.0; d];
    let mut s2 = vec![0.0; d];
    for sample in &contributions {
        for &(j, v) in sample {
            s1[j] += v;
            s2[j] += v * v;
        }
    }
    let k = n_freq as f64;
    let mean: Vec<f64> = s1.iter().map(|s| s / k).collect();
    let stderr = s2
        .iter()
        .zip(&mean)
        .map(|(s, m)| ((s / k - m * m).max(0.0) * k / (k - 1.0) / k).sqrt())
        .collect();
    Ok(GradientEstimate {
        mean,
        stderr,
        samples: n_freq,
    })
}
