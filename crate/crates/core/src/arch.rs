//! Generator sets for IQP circuits and the critical rank of a frequency.
//!
//! A circuit on `n` qubits applies `exp(i θ_j Z^{s_j})` for each generator
//! `s_j`. For a frequency `a`, the generators with odd overlap `a · s_j = 1`
//! form the anticommuting set; its span dimension is the critical rank.
//!
//! Built-in families list the single-qubit generators first (qubit order) and
//! then two-qubit generators in lexicographic pair order, so the index of each
//! parameter is stable across runs.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::gf2::{self, BitVec};
use crate::rng;

/// Ordered list of generators; repeats are allowed and each owns a parameter.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GeneratorSet {
    n: usize,
    generators: Vec<BitVec>,
    label: String,
}

#[derive(Serialize, Deserialize)]
struct GeneratorFile {
    n: usize,
    generators: Vec<BitVec>,
}

impl GeneratorSet {
    pub fn new(n: usize, generators: Vec<BitVec>, label: impl Into<String>) -> Result<Self> {
        for g in &generators {
            check_dim(n, g.len())?;
        }
        Ok(GeneratorSet {
            n,
            generators,
            label: label.into(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of generators `D`.
    pub fn len(&self) -> usize {
        self.generators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.generators.is_empty()
    }

    pub fn generators(&self) -> &[BitVec] {
        &self.generators
    }

    pub fn generator(&self, index: usize) -> Result<&BitVec> {
        self.generators.get(index).ok_or(Error::Index {
            index,
            len: self.generators.len(),
        })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Appends a generator (used for monotonicity experiments).
    pub fn push(&mut self, g: BitVec) -> Result<()> {
        check_dim(self.n, g.len())?;
        self.generators.push(g);
        Ok(())
    }

    /// Generators packed into words, when `n <= 64`.
    pub fn masks(&self) -> Option<Vec<u64>> {
        if self.n > 64 {
            return None;
        }
        Some(self.generators.iter().map(|g| g.to_u64().unwrap_or(0)).collect())
    }

    /// Indices `ℓ` (0-based) with `a · s_ℓ = 1`, in list order.
    pub fn anticommuting_subset(&self, a: &BitVec) -> Result<Vec<usize>> {
        check_dim(self.n, a.len())?;
        Ok(self
            .generators
            .iter()
            .enumerate()
            .filter(|(_, g)| g.parity_with(a))
            .map(|(i, _)| i)
            .collect())
    }

    /// Size and critical rank of the anticommuting set of `a`.
    pub fn critical_rank(&self, a: &BitVec) -> Result<RankReport> {
        let indices = self.anticommuting_subset(a)?;
        let r_a = if self.n <= 64 {
            gf2::rank_u64(indices.iter().map(|&i| self.generators[i].to_u64().unwrap_or(0)))
        } else {
            let sel: Vec<BitVec> = indices.iter().map(|&i| self.generators[i].clone()).collect();
            gf2::rank(&sel)?
        };
        Ok(RankReport {
            frequency: a.clone(),
            m_a: indices.len(),
            r_a,
            indices,
        })
    }

    pub fn from_json_str(s: &str, label: impl Into<String>) -> Result<Self> {
        let file: GeneratorFile = serde_json::from_str(s)?;
        Self::new(file.n, file.generators, label)
    }

    pub fn to_json_string(&self) -> Result<String> {
        let file = GeneratorFile {
            n: self.n,
            generators: self.generators.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text, format!("file:{}", path.display()))
    }
}

/// Result of [`GeneratorSet::critical_rank`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RankReport {
    pub frequency: BitVec,
    /// Size of the anticommuting set.
    pub m_a: usize,
    /// Critical rank.
    pub r_a: usize,
    /// 0-based positions of the anticommuting generators.
    pub indices: Vec<usize>,
}

fn singles(n: usize) -> Vec<BitVec> {
    (0..n).map(|k| BitVec::unit(n, k)).collect()
}

/// All single-qubit generators and nothing else.
pub fn product(n: usize) -> Result<GeneratorSet> {
    if n == 0 {
        return Err(Error::Dimension { expected: 1, found: 0 });
    }
    GeneratorSet::new(n, singles(n), format!("product:{n}"))
}

/// Singles plus nearest-neighbour pairs on an open-boundary grid, vertex
/// `(i, j)` mapped to qubit `i * cols + j`.
pub fn lattice(rows: usize, cols: usize) -> Result<GeneratorSet> {
    if rows == 0 || cols == 0 {
        return Err(Error::invalid(format!("lattice needs positive sides, got {rows}x{cols}")));
    }
    let n = rows * cols;
    let mut edges = Vec::new();
    for i in 0..rows {
        for j in 0..cols {
            let v = i * cols + j;
            if j + 1 < cols {
                edges.push((v, v + 1));
            }
            if i + 1 < rows {
                edges.push((v, v + cols));
            }
        }
    }
    edges.sort_unstable();
    let mut gens = singles(n);
    gens.extend(edges.into_iter().map(|(u, v)| BitVec::from_indices(n, [u, v])));
    GeneratorSet::new(n, gens, format!("lattice:{rows}x{cols}"))
}

/// Edge probability `min(1, c ln n / n)` used by [`erdos_renyi`].
pub fn er_edge_probability(n: usize, c: f64) -> f64 {
    (c * (n as f64).ln() / n as f64).clamp(0.0, 1.0)
}

/// Singles plus each pair `{i, j}` kept independently with probability
/// `min(1, c ln n / n)`. Pairs are visited in lexicographic order with one
/// uniform draw each from the stream keyed by `seed`.
pub fn erdos_renyi(n: usize, c: f64, seed: u64) -> Result<GeneratorSet> {
    if n < 2 {
        return Err(Error::invalid(format!("erdos-renyi needs n >= 2, got {n}")));
    }
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::invalid(format!("erdos-renyi needs c > 0, got {c}")));
    }
    let p = er_edge_probability(n, c);
    let mut stream = rng::substream(seed, &[rng::tags::GRAPH]);
    let mut gens = singles(n);
    for i in 0..n {
        for j in i + 1..n {
            let u: f64 = stream.random();
            if u < p {
                gens.push(BitVec::from_indices(n, [i, j]));
            }
        }
    }
    GeneratorSet::new(n, gens, format!("er:{n}:{c}:{seed}"))
}

/// All singles and all pairs.
pub fn complete(n: usize) -> Result<GeneratorSet> {
    if n == 0 {
        return Err(Error::Dimension { expected: 1, found: 0 });
    }
    let mut gens = singles(n);
    for i in 0..n {
        for j in i + 1..n {
            gens.push(BitVec::from_indices(n, [i, j]));
        }
    }
    GeneratorSet::new(n, gens, format!("complete:{n}"))
}

/// Architecture descriptor: `product:<n>`, `lattice:<rows>x<cols>`,
/// `er:<n>:<c>:<seed>`, `complete:<n>` or `file:<path>`.
#[derive(Clone, Debug, PartialEq)]
pub enum ArchSpec {
    Product(usize),
    Lattice { rows: usize, cols: usize },
    ErdosRenyi { n: usize, c: f64, seed: u64 },
    Complete(usize),
    File(PathBuf),
}

impl ArchSpec {
    pub fn build(&self) -> Result<GeneratorSet> {
        match self {
            ArchSpec::Product(n) => product(*n),
            ArchSpec::Lattice { rows, cols } => lattice(*rows, *cols),
            ArchSpec::ErdosRenyi { n, c, seed } => erdos_renyi(*n, *c, *seed),
            ArchSpec::Complete(n) => complete(*n),
            ArchSpec::File(p) => GeneratorSet::load(p),
        }
    }
}

fn parse_num<T: FromStr>(s: &str, what: &str) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| Error::parse(format!("bad {what} {s:?}")))
}

impl FromStr for ArchSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, rest) = s
            .split_once(':')
            .ok_or_else(|| Error::parse(format!("architecture {s:?} has no ':'")))?;
        match kind {
            "product" => Ok(ArchSpec::Product(parse_num(rest, "qubit count")?)),
            "complete" => Ok(ArchSpec::Complete(parse_num(rest, "qubit count")?)),
            "lattice" => {
                let (r, c) = rest
                    .split_once('x')
                    .ok_or_else(|| Error::parse(format!("lattice wants <rows>x<cols>, got {rest:?}")))?;
                Ok(ArchSpec::Lattice {
                    rows: parse_num(r, "row count")?,
                    cols: parse_num(c, "column count")?,
                })
            }
            "er" => {
                let parts: Vec<&str> = rest.split(':').collect();
                let [n, c, seed] = parts.as_slice() else {
                    return Err(Error::parse(format!("er wants <n>:<c>:<seed>, got {rest:?}")));
                };
                Ok(ArchSpec::ErdosRenyi {
                    n: parse_num(n, "qubit count")?,
                    c: parse_num(c, "density constant")?,
                    seed: parse_num(seed, "seed")?,
                })
            }
            "file" => Ok(ArchSpec::File(PathBuf::from(rest))),
            _ => Err(Error::parse(format!("unknown architecture kind {kind:?}"))),
        }
    }
}

impl fmt::Display for ArchSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ArchSpec::Product(n) => write!(f, "product:{n}"),
            ArchSpec::Lattice { rows, cols } => write!(f, "lattice:{rows}x{cols}"),
            ArchSpec::ErdosRenyi { n, c, seed } => write!(f, "er:{n}:{c}:{seed}"),
            ArchSpec::Complete(n) => write!(f, "complete:{n}"),
            ArchSpec::File(p) => write!(f, "file:{}", p.display()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn bv(s: &str) -> BitVec {
        s.parse().unwrap()
    }

    fn strings(g: &GeneratorSet) -> Vec<String> {
        g.generators().iter().map(|v| v.to_string()).collect()
    }

    #[test]
    fn product_examples() {
        assert_eq!(strings(&product(3).unwrap()), ["100", "010", "001"]);
        assert_eq!(strings(&product(1).unwrap()), ["1"]);
        assert_eq!(strings(&product(2).unwrap()), ["10", "01"]);
        assert!(product(0).is_err());
    }

    #[test]
    fn lattice_examples() {
        let g = lattice(2, 2).unwrap();
        assert_eq!(g.len(), 8);
        let pairs: BTreeSet<String> = strings(&g)[4..].iter().cloned().collect();
        assert_eq!(pairs, BTreeSet::from(["1100", "1010", "0101", "0011"].map(String::from)));

        assert_eq!(strings(&lattice(1, 3).unwrap()), ["100", "010", "001", "110", "011"]);
        assert_eq!(strings(&lattice(1, 1).unwrap()), ["1"]);

        let g = lattice(3, 4).unwrap();
        assert_eq!(g.len(), 12 + 3 * 3 + 2 * 4);
    }

    #[test]
    fn complete_examples() {
        assert_eq!(complete(3).unwrap().len(), 6);
        assert_eq!(strings(&complete(2).unwrap()), ["10", "01", "11"]);
        assert_eq!(complete(5).unwrap().len(), 15);
    }

    #[test]
    fn erdos_renyi_limits() {
        let g = erdos_renyi(4, 1e-9, 3).unwrap();
        assert_eq!(g.len(), 4);
        let g = erdos_renyi(4, 100.0, 3).unwrap();
        assert_eq!(g, GeneratorSet { label: g.label.clone(), ..complete(4).unwrap() });
        assert!(erdos_renyi(4, 0.0, 1).is_err());
        assert!(erdos_renyi(1, 1.0, 1).is_err());
    }

    #[test]
    fn erdos_renyi_is_reproducible() {
        assert_eq!(erdos_renyi(20, 3.0, 11).unwrap(), erdos_renyi(20, 3.0, 11).unwrap());
        assert_ne!(
            erdos_renyi(20, 3.0, 11).unwrap().generators(),
            erdos_renyi(20, 3.0, 12).unwrap().generators()
        );
    }

    #[test]
    fn erdos_renyi_edge_count_is_binomial() {
        // n = 64, c = 3: 2016 pairs, p = 3 ln 64 / 64.
        let (n, c) = (64, 3.0);
        let pairs = (n * (n - 1) / 2) as f64;
        let p = er_edge_probability(n, c);
        let sigma = (pairs * p * (1.0 - p)).sqrt();
        let edges = erdos_renyi(n, c, 7).unwrap().len() - n;
        assert!((edges as f64 - pairs * p).abs() <= 3.0 * sigma, "edges {edges}");
        // and over many seeds the mean settles
        let mean: f64 = (0..200)
            .map(|s| (erdos_renyi(n, c, s).unwrap().len() - n) as f64)
            .sum::<f64>()
            / 200.0;
        assert!((mean - pairs * p).abs() <= 3.0 * sigma / 200f64.sqrt());
    }

    #[test]
    fn anticommuting_examples() {
        assert_eq!(product(3).unwrap().anticommuting_subset(&bv("101")).unwrap(), [0, 2]);
        let g = lattice(2, 2).unwrap();
        let idx = g.anticommuting_subset(&bv("1000")).unwrap();
        let sel: BTreeSet<String> = idx.iter().map(|&i| g.generators()[i].to_string()).collect();
        assert_eq!(sel, BTreeSet::from(["1000", "1100", "1010"].map(String::from)));
        assert!(complete(4).unwrap().anticommuting_subset(&bv("0000")).unwrap().is_empty());
        assert!(g.anticommuting_subset(&bv("100")).is_err());
    }

    #[test]
    fn critical_rank_examples() {
        let g = product(6).unwrap();
        for a in 0u64..64 {
            let a = BitVec::from_u64(6, a);
            assert_eq!(g.critical_rank(&a).unwrap().r_a, a.weight());
        }
        let r = lattice(2, 2).unwrap().critical_rank(&bv("1000")).unwrap();
        assert_eq!((r.m_a, r.r_a), (3, 3));
        let g = complete(5).unwrap();
        for a in 1u64..32 {
            assert_eq!(g.critical_rank(&BitVec::from_u64(5, a)).unwrap().r_a, 5);
        }
    }

    fn closed_neighbourhood(rows: usize, cols: usize, a: &BitVec) -> usize {
        let mut hood = BTreeSet::new();
        for v in a.ones() {
            let (i, j) = (v / cols, v % cols);
            hood.insert(v);
            if j > 0 {
                hood.insert(v - 1);
            }
            if j + 1 < cols {
                hood.insert(v + 1);
            }
            if i > 0 {
                hood.insert(v - cols);
            }
            if i + 1 < rows {
                hood.insert(v + cols);
            }
        }
        hood.len()
    }

    #[test]
    fn lattice_rank_is_closed_neighbourhood_size() {
        let g = lattice(2, 3).unwrap();
        for a in 0u64..64 {
            let a = BitVec::from_u64(6, a);
            assert_eq!(g.critical_rank(&a).unwrap().r_a, closed_neighbourhood(2, 3, &a), "a = {a}");
        }
    }

    #[test]
    fn er_mean_rank_matches_binomial_neighbourhood() {
        // E[r_a] = |a| + (n - |a|) q with q = 1 - (1 - p)^|a|
        let (n, c, k) = (24, 3.0, 2);
        let p = er_edge_probability(n, c);
        let q = 1.0 - (1.0 - p).powi(k as i32);
        let want = k as f64 + (n - k) as f64 * q;
        let a = BitVec::from_indices(n, 0..k);
        let ranks: Vec<f64> = (0..1000)
            .map(|s| erdos_renyi(n, c, s).unwrap().critical_rank(&a).unwrap().r_a as f64)
            .collect();
        let est = crate::stats::Estimate::from_samples(&ranks);
        assert!(est.z_score(want) < 3.0, "mean {} want {want} se {}", est.mean, est.stderr);
    }

    #[test]
    fn spec_strings_round_trip() {
        for s in ["product:8", "lattice:2x3", "er:16:3:7", "complete:5", "file:g.json"] {
            let spec: ArchSpec = s.parse().unwrap();
            assert_eq!(spec.to_string(), s);
        }
        assert!("ring:4".parse::<ArchSpec>().is_err());
        assert!("lattice:2-3".parse::<ArchSpec>().is_err());
    }

    #[test]
    fn json_round_trip() {
        let g = lattice(2, 2).unwrap();
        let text = g.to_json_string().unwrap();
        assert!(text.contains("\"1100\""));
        let back = GeneratorSet::from_json_str(&text, "x").unwrap();
        assert_eq!(back.generators(), g.generators());
        let bad = r#"{"n": 3, "generators": ["10"]}"#;
        assert!(GeneratorSet::from_json_str(bad, "x").is_err());
    }

    proptest! {
        #[test]
        fn adding_generators_never_lowers_rank(seed in 0u64..1000, extra in prop::collection::vec(1u64..256, 1..6), a in 1u64..256) {
            let mut g = erdos_renyi(8, 2.0, seed).unwrap();
            let a = BitVec::from_u64(8, a);
            let mut prev = g.critical_rank(&a).unwrap().r_a;
            for x in extra {
                g.push(BitVec::from_u64(8, x)).unwrap();
                let r = g.critical_rank(&a).unwrap().r_a;
                prop_assert!(r >= prev);
                prev = r;
            }
        }

        #[test]
        fn lattice_rank_sandwich(rows in 1usize..=5, cols in 1usize..=5, bits in any::<u64>()) {
            let n = rows * cols;
            let a = BitVec::from_u64(n, bits);
            prop_assume!(!a.is_zero());
            let r = lattice(rows, cols).unwrap().critical_rank(&a).unwrap();
            prop_assert!(a.weight() <= r.r_a && r.r_a <= 5 * a.weight());
            prop_assert!(r.r_a >= 1);
            prop_assert_eq!(r.r_a, closed_neighbourhood(rows, cols, &a));
        }
    }
}
