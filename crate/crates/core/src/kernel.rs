//! Spectral distributions over frequencies.
//!
//! A stationary kernel on bit strings is characterised by its spectrum `Λ`,
//! a probability mass function over frequencies `a ∈ F_2^n`. The MMD between
//! two distributions is the `Λ`-weighted squared difference of their
//! characteristic functions, so the spectrum decides which frequencies the
//! loss can see.
//!
//! Three families are provided:
//!
//! * the Gaussian kernel, whose spectrum is the product-Bernoulli measure
//!   `Λ(a) = τ^{|a|} (1 - τ)^{n - |a|}` with `τ = (1 - e^{-1/(2σ)}) / 2`;
//! * weight bands, equal mass on each allowed Hamming weight and uniform
//!   within a weight class;
//! * explicit tables.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::gf2::BitVec;

const MASS_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
enum Kind {
    Gaussian { sigma: f64, tau: f64 },
    WeightBand { weights: Vec<usize> },
    Explicit { entries: Vec<(BitVec, f64)>, cumulative: Vec<f64> },
}

/// A probability mass function over `F_2^n`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralPmf {
    n: usize,
    kind: Kind,
}

/// Per-bit rate of the Gaussian-kernel spectrum with bandwidth `sigma`.
pub fn gaussian_tau(sigma: f64) -> f64 {
    -(-1.0 / (2.0 * sigma)).exp_m1() / 2.0
}

/// `C(n, k)` as a float.
pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Spectrum of the Gaussian kernel with bandwidth `sigma` on `n` bits.
pub fn gaussian_spectrum(n: usize, sigma: f64) -> Result<SpectralPmf> {
    if !(sigma > 0.0) {
        return Err(Error::invalid(format!("gaussian bandwidth must be positive, got {sigma}")));
    }
    Ok(SpectralPmf {
        n,
        kind: Kind::Gaussian {
            sigma,
            tau: gaussian_tau(sigma),
        },
    })
}

/// Equal mass on each listed Hamming weight, uniform within each class.
pub fn weight_band(n: usize, weights: &[usize]) -> Result<SpectralPmf> {
    let set: BTreeSet<usize> = weights.iter().copied().collect();
    if set.is_empty() {
        return Err(Error::invalid("weight band needs at least one weight"));
    }
    if let Some(&k) = set.iter().find(|&&k| k > n) {
        return Err(Error::invalid(format!("weight {k} exceeds n = {n}")));
    }
    Ok(SpectralPmf {
        n,
        kind: Kind::WeightBand {
            weights: set.into_iter().collect(),
        },
    })
}

/// Explicit `(frequency, probability)` table.
pub fn explicit(n: usize, entries: Vec<(BitVec, f64)>) -> Result<SpectralPmf> {
    let mut seen = BTreeSet::new();
    let mut cumulative = Vec::with_capacity(entries.len());
    let mut total = 0.0;
    for (a, p) in &entries {
        check_dim(n, a.len())?;
        if !(*p >= 0.0) || !p.is_finite() {
            return Err(Error::invalid(format!("probability {p} for {a} is not a finite non-negative number")));
        }
        if !seen.insert(a.clone()) {
            return Err(Error::invalid(format!("frequency {a} listed twice")));
        }
        total += p;
        cumulative.push(total);
    }
    if (total - 1.0).abs() > MASS_TOLERANCE {
        return Err(Error::invalid(format!("explicit spectrum sums to {total}, not 1")));
    }
    Ok(SpectralPmf {
        n,
        kind: Kind::Explicit { entries, cumulative },
    })
}

/// All mass on a single frequency.
pub fn point_mass(a: BitVec) -> SpectralPmf {
    let n = a.len();
    explicit(n, vec![(a, 1.0)]).expect("point mass is a valid pmf")
}

#[derive(Serialize, Deserialize)]
struct ExplicitEntry {
    a: BitVec,
    p: f64,
}

/// Loads an explicit spectrum from a JSON list of `{"a": "0101", "p": 0.25}`.
pub fn load_explicit(path: &Path, n: usize) -> Result<SpectralPmf> {
    let text = std::fs::read_to_string(path)?;
    let entries: Vec<ExplicitEntry> = serde_json::from_str(&text)?;
    explicit(n, entries.into_iter().map(|e| (e.a, e.p)).collect())
}

/// All `a ∈ F_2^n` of weight `k`, in lexicographic order of their supports.
pub fn weight_class(n: usize, k: usize) -> impl Iterator<Item = BitVec> {
    let mut idx: Option<Vec<usize>> = if k <= n { Some((0..k).collect()) } else { None };
    std::iter::from_fn(move || {
        let cur = idx.as_mut()?;
        let out = BitVec::from_indices(n, cur.iter().copied());
        // advance to next combination
        let mut i = k;
        loop {
            if i == 0 {
                idx = None;
                break;
            }
            i -= 1;
            if cur[i] < n - k + i {
                cur[i] += 1;
                for t in i + 1..k {
                    cur[t] = cur[t - 1] + 1;
                }
                break;
            }
        }
        Some(out)
    })
}

impl SpectralPmf {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Per-bit rate for the Gaussian kind.
    pub fn tau(&self) -> Option<f64> {
        match self.kind {
            Kind::Gaussian { tau, .. } => Some(tau),
            _ => None,
        }
    }

    /// `Λ(a)`.
    pub fn weight(&self, a: &BitVec) -> Result<f64> {
        check_dim(self.n, a.len())?;
        Ok(match &self.kind {
            Kind::Gaussian { tau, .. } => {
                let k = a.weight();
                tau.powi(k as i32) * (1.0 - tau).powi((self.n - k) as i32)
            }
            Kind::WeightBand { weights } => {
                let k = a.weight();
                if weights.contains(&k) {
                    1.0 / weights.len() as f64 / binomial(self.n, k)
                } else {
                    0.0
                }
            }
            Kind::Explicit { entries, .. } => entries
                .iter()
                .find(|(b, _)| b == a)
                .map_or(0.0, |(_, p)| *p),
        })
    }

    /// Total mass on Hamming weight `k`.
    pub fn class_mass(&self, k: usize) -> f64 {
        if k > self.n {
            return 0.0;
        }
        match &self.kind {
            Kind::Gaussian { tau, .. } => {
                binomial(self.n, k) * tau.powi(k as i32) * (1.0 - tau).powi((self.n - k) as i32)
            }
            Kind::WeightBand { weights } => {
                if weights.contains(&k) {
                    1.0 / weights.len() as f64
                } else {
                    0.0
                }
            }
            Kind::Explicit { entries, .. } => entries
                .iter()
                .filter(|(a, _)| a.weight() == k)
                .map(|(_, p)| p)
                .sum(),
        }
    }

    /// Draws a frequency with probability `Λ(a)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> BitVec {
        match &self.kind {
            Kind::Gaussian { tau, .. } => {
                let mut a = BitVec::zeros(self.n);
                for k in 0..self.n {
                    if rng.random::<f64>() < *tau {
                        a.set(k, true);
                    }
                }
                a
            }
            Kind::WeightBand { weights } => {
                let k = weights[rng.random_range(0..weights.len())];
                BitVec::from_indices(self.n, index::sample(rng, self.n, k))
            }
            Kind::Explicit { entries, cumulative } => {
                let total = *cumulative.last().expect("explicit pmf is non-empty");
                let u = rng.random::<f64>() * total;
                let i = cumulative.partition_point(|&c| c <= u).min(entries.len() - 1);
                entries[i].0.clone()
            }
        }
    }

    /// Frequencies with nonzero mass together with their mass. Gaussian
    /// spectra have full support, so they need `n <= cap`.
    pub fn support(&self, cap: u32) -> Result<Vec<(BitVec, f64)>> {
        match &self.kind {
            Kind::Gaussian { .. } => {
                if self.n > cap as usize {
                    return Err(Error::Capacity {
                        what: "spectrum support",
                        required: self.n,
                        cap,
                    });
                }
                (0..1u64 << self.n)
                    .map(|x| {
                        let a = BitVec::from_u64(self.n, x);
                        let w = self.weight(&a)?;
                        Ok((a, w))
                    })
                    .collect()
            }
            Kind::WeightBand { weights } => {
                let count: f64 = weights.iter().map(|&k| binomial(self.n, k)).sum();
                if count > (1u64 << cap) as f64 {
                    return Err(Error::Capacity {
                        what: "spectrum support",
                        required: count.log2().ceil() as usize,
                        cap,
                    });
                }
                let mut out = Vec::new();
                for &k in weights {
                    let w = 1.0 / weights.len() as f64 / binomial(self.n, k);
                    out.extend(weight_class(self.n, k).map(|a| (a, w)));
                }
                Ok(out)
            }
            Kind::Explicit { entries, .. } => Ok(entries.iter().filter(|(_, p)| *p > 0.0).cloned().collect()),
        }
    }

    /// `Λ` as a dense table indexed by the integer value of `a`.
    pub fn table(&self) -> Result<Vec<f64>> {
        if self.n > 24 {
            return Err(Error::Capacity {
                what: "dense spectrum table",
                required: self.n,
                cap: 24,
            });
        }
        let mut t = vec![0.0; 1 << self.n];
        match &self.kind {
            Kind::Explicit { entries, .. } => {
                for (a, p) in entries {
                    t[a.to_u64().expect("n <= 24") as usize] = *p;
                }
            }
            _ => {
                for (x, slot) in t.iter_mut().enumerate() {
                    *slot = self.weight(&BitVec::from_u64(self.n, x as u64))?;
                }
            }
        }
        Ok(t)
    }
}

/// Kernel descriptor: `gaussian:<sigma>`, `band:<k1,k2,...>` or
/// `explicit:<path>`. The qubit count is supplied when building.
#[derive(Clone, Debug, PartialEq)]
pub enum KernelSpec {
    Gaussian(f64),
    Band(Vec<usize>),
    Explicit(PathBuf),
}

impl KernelSpec {
    pub fn build(&self, n: usize) -> Result<SpectralPmf> {
        match self {
            KernelSpec::Gaussian(sigma) => gaussian_spectrum(n, *sigma),
            KernelSpec::Band(ws) => weight_band(n, ws),
            KernelSpec::Explicit(path) => load_explicit(path, n),
        }
    }
}

impl FromStr for KernelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, rest) = s
            .split_once(':')
            .ok_or_else(|| Error::parse(format!("kernel {s:?} has no ':'")))?;
        match kind {
            "gaussian" => rest
                .trim()
                .parse()
                .map(KernelSpec::Gaussian)
                .map_err(|_| Error::parse(format!("bad bandwidth {rest:?}"))),
            "band" => rest
                .split(',')
                .map(|w| w.trim().parse().map_err(|_| Error::parse(format!("bad weight {w:?}"))))
                .collect::<Result<Vec<_>>>()
                .map(KernelSpec::Band),
            "explicit" => Ok(KernelSpec::Explicit(PathBuf::from(rest))),
            _ => Err(Error::parse(format!("unknown kernel kind {kind:?}"))),
        }
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelSpec::Gaussian(s) => write!(f, "gaussian:{s}"),
            KernelSpec::Band(ws) => {
                let ws: Vec<String> = ws.iter().map(|w| w.to_string()).collect();
                write!(f, "band:{}", ws.join(","))
            }
            KernelSpec::Explicit(p) => write!(f, "explicit:{}", p.display()),
        }
    }
}
