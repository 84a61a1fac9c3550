//! Target distributions and their characteristic values `C^a_p`.

use std::path::PathBuf;

use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::gf2::BitVec;
use crate::oracle::{fourier_char_all, fwht, OutputDistribution, MAX_QUBITS};
use crate::rng::{self, tags};

/// One planted Fourier term `c_a (-1)^{a·x}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantedTerm {
    pub a: BitVec,
    pub c: f64,
}

/// How to build a target; the register size comes from the architecture.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TargetSpec {
    /// Samples file, one bit string per line.
    Dataset { path: PathBuf },
    /// Dense probability table of length `2^n`.
    Explicit { probs: Vec<f64> },
    /// Uniform draw from the probability simplex.
    Dirichlet { seed: u64 },
    /// `p(x) = 2^{-n} (1 + Σ c_a (-1)^{a·x})`.
    Planted { terms: Vec<PlantedTerm> },
}

#[derive(Clone, Debug)]
enum Source {
    Samples(Vec<BitVec>),
    Table(OutputDistribution),
    Planted(Vec<PlantedTerm>),
}

/// A built target with cached characteristic values when `n <= 20`.
#[derive(Clone, Debug)]
pub struct Target {
    n: usize,
    source: Source,
    chars: Option<Vec<f64>>,
}

impl TargetSpec {
    pub fn build(&self, n: usize) -> Result<Target> {
        match self {
            TargetSpec::Dataset { path } => {
                let text = std::fs::read_to_string(path)?;
                Target::from_samples(n, parse_dataset(&text)?)
            }
            TargetSpec::Explicit { probs } => Target::from_distribution(OutputDistribution::new(n, probs.clone())?),
            TargetSpec::Dirichlet { seed } => dirichlet_target(n, *seed),
            TargetSpec::Planted { terms } => planted_target(n, terms.clone()),
        }
    }
}

/// Reads one bit string per line; blank lines and `#` comments are skipped.
pub fn parse_dataset(text: &str) -> Result<Vec<BitVec>> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::parse)
        .collect()
}

/// Characteristic table with `C^0` pinned to exactly 1.
fn normalised_chars(p: &OutputDistribution) -> Vec<f64> {
    let mut c = fourier_char_all(p);
    c[0] = 1.0;
    c
}

impl Target {
    pub fn from_samples(n: usize, samples: Vec<BitVec>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid("dataset is empty"));
        }
        for s in &samples {
            check_dim(n, s.len())?;
        }
        let chars = if n <= MAX_QUBITS {
            Some(normalised_chars(&OutputDistribution::empirical(n, &samples)?))
        } else {
            None
        };
        Ok(Target {
            n,
            source: Source::Samples(samples),
            chars,
        })
    }

    pub fn from_distribution(p: OutputDistribution) -> Result<Self> {
        let chars = Some(normalised_chars(&p));
        Ok(Target {
            n: p.n(),
            source: Source::Table(p),
            chars,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `C^a_p`.
    pub fn char_value(&self, a: &BitVec) -> Result<f64> {
        check_dim(self.n, a.len())?;
        if let Some(c) = &self.chars {
            return Ok(c[a.to_u64().expect("n <= 20") as usize]);
        }
        Ok(match &self.source {
            Source::Samples(xs) => {
                let odd = xs.iter().filter(|x| x.parity_with(a)).count();
                1.0 - 2.0 * odd as f64 / xs.len() as f64
            }
            Source::Planted(terms) => {
                if a.is_zero() {
                    1.0
                } else {
                    terms.iter().find(|t| &t.a == a).map_or(0.0, |t| t.c)
                }
            }
            Source::Table(_) => unreachable!("tables always cache their characteristic values"),
        })
    }

    /// Dense `C^a_p` table, when `n <= 20`.
    pub fn char_table(&self) -> Result<&[f64]> {
        self.chars.as_deref().ok_or(Error::Capacity {
            what: "dense target table",
            required: self.n,
            cap: MAX_QUBITS as u32,
        })
    }

    /// Dense probabilities, when `n <= 20`.
    pub fn distribution(&self) -> Result<OutputDistribution> {
        match &self.source {
            Source::Table(p) => Ok(p.clone()),
            Source::Samples(xs) => OutputDistribution::empirical(self.n, xs),
            Source::Planted(_) => {
                let mut probs = self.char_table()?.to_vec();
                fwht(&mut probs);
                let scale = (-(self.n as f64)).exp2();
                probs.iter_mut().for_each(|p| *p = (*p * scale).max(0.0));
                OutputDistribution::new(self.n, probs)
            }
        }
    }
}

/// `C^a_p` of a target.
pub fn target_char(target: &Target, a: &BitVec) -> Result<f64> {
    target.char_value(a)
}

/// Ensemble variance `E[(C^a_p)^2] = 1 / (2^n + 1)` of the flat Dirichlet
/// target, for every `a ≠ 0`.
pub fn dirichlet_sigma2(n: usize) -> f64 {
    1.0 / ((n as f64).exp2() + 1.0)
}

/// Uniform draw from the simplex over `2^n` outcomes, by normalised
/// exponential spacings.
pub fn dirichlet_target(n: usize, seed: u64) -> Result<Target> {
    if n > MAX_QUBITS {
        return Err(Error::Capacity {
            what: "dirichlet target",
            required: n,
            cap: MAX_QUBITS as u32,
        });
    }
    let mut r = rng::substream(seed, &[tags::TARGET]);
    let mut probs: Vec<f64> = (0..1usize << n).map(|_| Exp1.sample(&mut r)).collect();
    let total: f64 = crate::stats::pairwise_sum(&probs);
    probs.iter_mut().for_each(|p| *p /= total);
    Target::from_distribution(OutputDistribution::new(n, probs)?)
}

/// Planted low-order target. Frequencies must be distinct and nonzero; the
/// implied table must be non-negative (checked exactly for `n <= 20`, and by
/// `Σ |c_a| <= 1` beyond).
pub fn planted_target(n: usize, terms: Vec<PlantedTerm>) -> Result<Target> {
    let mut seen = std::collections::BTreeSet::new();
    for t in &terms {
        check_dim(n, t.a.len())?;
        if t.a.is_zero() {
            return Err(Error::invalid("planted frequency 0 is fixed at 1"));
        }
        if !(-1.0..=1.0).contains(&t.c) {
            return Err(Error::invalid(format!("planted amplitude {} outside [-1, 1]", t.c)));
        }
        if !seen.insert(t.a.clone()) {
            return Err(Error::invalid(format!("planted frequency {} listed twice", t.a)));
        }
    }
    if n > MAX_QUBITS {
        let l1: f64 = terms.iter().map(|t| t.c.abs()).sum();
        if l1 > 1.0 {
            return Err(Error::invalid(format!(
                "cannot certify non-negativity for n = {n} with Σ|c_a| = {l1} > 1"
            )));
        }
        return Ok(Target {
            n,
            source: Source::Planted(terms),
            chars: None,
        });
    }
    let mut chars = vec![0.0; 1 << n];
    chars[0] = 1.0;
    for t in &terms {
        chars[t.a.to_u64().expect("n <= 20") as usize] = t.c;
    }
    let mut probs = chars.clone();
    fwht(&mut probs);
    let scale = (-(n as f64)).exp2();
    if let Some(x) = probs.iter().position(|p| p * scale < -1e-12) {
        return Err(Error::invalid(format!(
            "planted amplitudes give negative probability {} at x = {}",
            probs[x] * scale,
            BitVec::from_u64(n, x as u64)
        )));
    }
    Ok(Target {
        n,
        source: Source::Planted(terms),
        chars: Some(chars),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::Estimate;

    fn bv(s: &str) -> BitVec {
        s.parse().unwrap()
    }

    #[test]
    fn trivial_characteristic_values() {
        let t = Target::from_samples(3, vec![bv("000"); 5]).unwrap();
        for x in 0..8 {
            assert_eq!(t.char_value(&BitVec::from_u64(3, x)).unwrap(), 1.0);
        }
        let t = Target::from_samples(2, vec![bv("10"), bv("11")]).unwrap();
        assert_eq!(t.char_value(&bv("10")).unwrap(), -1.0);
        assert_eq!(t.char_value(&bv("01")).unwrap(), 0.0);
        assert!(Target::from_samples(2, vec![]).is_err());
        assert!(t.char_value(&bv("1")).is_err());

        let terms = vec![PlantedTerm { a: bv("1000"), c: 0.4 }, PlantedTerm { a: bv("0110"), c: -0.3 }];
        let p = planted_target(4, terms.clone()).unwrap();
        assert_eq!(p.char_value(&bv("1000")).unwrap(), 0.4);
        assert_eq!(p.char_value(&bv("0110")).unwrap(), -0.3);
        assert_eq!(p.char_value(&bv("0000")).unwrap(), 1.0);
        assert_eq!(p.char_value(&bv("1111")).unwrap(), 0.0);
        let dist = p.distribution().unwrap();
        let back = fourier_char_all(&dist);
        assert!((back[1] - 0.4).abs() < 1e-15);

        let wide = planted_target(30, vec![PlantedTerm { a: BitVec::unit(30, 3), c: 0.5 }]).unwrap();
        assert_eq!(wide.char_value(&BitVec::unit(30, 3)).unwrap(), 0.5);
        assert_eq!(wide.char_value(&BitVec::zeros(30)).unwrap(), 1.0);
    }

    #[test]
    fn planted_validation() {
        let bad = vec![PlantedTerm { a: bv("10"), c: 0.9 }, PlantedTerm { a: bv("01"), c: 0.9 }, PlantedTerm { a: bv("11"), c: -0.9 }];
        assert!(planted_target(2, bad).is_err());
        assert!(planted_target(2, vec![PlantedTerm { a: bv("00"), c: 0.1 }]).is_err());
        assert!(planted_target(2, vec![PlantedTerm { a: bv("10"), c: 1.5 }]).is_err());
        let dup = vec![PlantedTerm { a: bv("10"), c: 0.1 }, PlantedTerm { a: bv("10"), c: 0.2 }];
        assert!(planted_target(2, dup).is_err());
    }

    #[test]
    fn dataset_parsing() {
        let xs = parse_dataset("# header\n0101\n\n1100\n").unwrap();
        assert_eq!(xs, vec![bv("0101"), bv("1100")]);
        assert!(parse_dataset("01x1").is_err());
    }

    #[test]
    fn dirichlet_ensemble_moments() {
        let n = 4;
        let seeds = 10_000u64;
        let tables: Vec<Vec<f64>> = (0..seeds)
            .map(|s| dirichlet_target(n, s).unwrap().char_table().unwrap().to_vec())
            .collect();
        let sigma2 = dirichlet_sigma2(n);
        for a in [1usize, 6, 15] {
            let first: Vec<f64> = tables.iter().map(|t| t[a]).collect();
            assert!(Estimate::from_samples(&first).z_score(0.0) < 4.0);
            let second: Vec<f64> = tables.iter().map(|t| t[a] * t[a]).collect();
            let e = Estimate::from_samples(&second);
            assert!(e.z_score(sigma2) < 4.0, "a={a}: {} ± {} vs {sigma2}", e.mean, e.stderr);
            let cross: Vec<f64> = tables.iter().map(|t| t[a] * t[(a + 3) % 16]).collect();
            assert!(Estimate::from_samples(&cross).z_score(0.0) < 4.0);
        }
    }
}
