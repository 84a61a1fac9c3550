//! Characteristic-function values of IQP circuits.
//!
//! For a generator set `G`, angles `θ` and a frequency `a`, the value
//! `C^a_θ = Σ_x (-1)^{a·x} q_θ(x)` depends only on the anticommuting
//! generators `S^a`. Writing `y_j = s_j · z` for `z ∈ F_2^n`,
//!
//! ```text
//! C^a_θ = E_z cos(2 Σ_{j∈S^a} θ_j (-1)^{y_j}),
//! ```
//!
//! and the vector `y` only ranges over the `2^{r^a}` points of the image of
//! `z ↦ (s_j · z)_j`, so the exact value costs `2^{r^a}` terms. The same
//! integrand also gives an unbiased Monte-Carlo estimator.
//!
//! The variance formulas over random `θ` depend on the initialisation only
//! through `μ = E sin²2θ`, `ν = E cos²2θ` and `κ = E cos 2θ`.

use std::f64::consts::TAU;
use std::fmt;
use std::ops::Deref;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::arch::GeneratorSet;
use crate::error::{Error, Result};
use crate::gf2::{BitVec, NullSpace, RowSpace};
use crate::stats::{pairwise_sum, Estimate};

/// Default Monte-Carlo sample count per query.
pub const DEFAULT_MC_SAMPLES: usize = 10_000;

/// Circuit angles, index-aligned with the generators.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ThetaVector(Vec<f64>);

impl ThetaVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("angle {v} is not finite")));
        }
        Ok(ThetaVector(values))
    }

    pub fn zeros(d: usize) -> Self {
        ThetaVector(vec![0.0; d])
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for ThetaVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for ThetaVector {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        ThetaVector::new(v)
    }
}

impl From<ThetaVector> for Vec<f64> {
    fn from(t: ThetaVector) -> Vec<f64> {
        t.0
    }
}

/// Trigonometric moments `(μ, ν, κ)` of a symmetric angle distribution.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mu: f64,
    pub nu: f64,
    pub kappa: f64,
}

/// Distribution of the initial angles.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum InitScheme {
    /// Uniform on `[0, 2π)`.
    Uniform,
    /// Centred normal with standard deviation `gamma`.
    Gaussian { gamma: f64 },
    /// `±phi` with equal probability.
    Coin { phi: f64 },
    /// Raw moments; usable in closed forms only.
    Moments { mu: f64, nu: f64, kappa: f64 },
}

impl InitScheme {
    pub fn moments(&self) -> Result<Moments> {
        match *self {
            InitScheme::Uniform => Ok(Moments {
                mu: 0.5,
                nu: 0.5,
                kappa: 0.0,
            }),
            InitScheme::Gaussian { gamma } => {
                if !(gamma > 0.0) || !gamma.is_finite() {
                    return Err(Error::invalid(format!("gaussian width must be positive, got {gamma}")));
                }
                let e8 = (-8.0 * gamma * gamma).exp();
                Ok(Moments {
                    mu: -(-8.0 * gamma * gamma).exp_m1() / 2.0,
                    nu: (1.0 + e8) / 2.0,
                    kappa: (-2.0 * gamma * gamma).exp(),
                })
            }
            InitScheme::Coin { phi } => {
                if !phi.is_finite() {
                    return Err(Error::invalid("coin angle must be finite"));
                }
                let s = (2.0 * phi).sin();
                let c = (2.0 * phi).cos();
                Ok(Moments {
                    mu: s * s,
                    nu: c * c,
                    kappa: c,
                })
            }
            InitScheme::Moments { mu, nu, kappa } => {
                let ok = (0.0..=1.0).contains(&mu)
                    && (0.0..=1.0).contains(&nu)
                    && (mu + nu - 1.0).abs() <= 1e-12
                    && kappa * kappa <= nu + 1e-12;
                if !ok {
                    return Err(Error::invalid(format!(
                        "moments (mu={mu}, nu={nu}, kappa={kappa}) need mu + nu = 1 and kappa^2 <= nu"
                    )));
                }
                Ok(Moments { mu, nu, kappa })
            }
        }
    }

    /// Draws one angle. The `Moments` kind has no sampler.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        match *self {
            InitScheme::Uniform => Ok(rng.random::<f64>() * TAU),
            InitScheme::Gaussian { gamma } => {
                let normal = Normal::new(0.0, gamma).map_err(|e| Error::invalid(e.to_string()))?;
                Ok(normal.sample(rng))
            }
            InitScheme::Coin { phi } => Ok(if rng.random::<bool>() { phi } else { -phi }),
            InitScheme::Moments { .. } => Err(Error::invalid("a moments-only scheme cannot be sampled")),
        }
    }

    /// Draws `d` independent angles.
    pub fn sample_theta<R: Rng + ?Sized>(&self, d: usize, rng: &mut R) -> Result<ThetaVector> {
        self.moments()?;
        let values = (0..d).map(|_| self.sample(rng)).collect::<Result<Vec<_>>>()?;
        Ok(ThetaVector(values))
    }
}

impl FromStr for InitScheme {
    type Err = Error;

    /// `uniform`, `gaussian:<gamma>`, `coin:<phi>` or `moments:<mu>,<nu>,<kappa>`.
    fn from_str(s: &str) -> Result<Self> {
        let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
        let num = |t: &str| -> Result<f64> {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::parse(format!("bad number {t:?} in init scheme {s:?}")))
        };
        let scheme = match kind {
            "uniform" => InitScheme::Uniform,
            "gaussian" => InitScheme::Gaussian { gamma: num(rest)? },
            "coin" => InitScheme::Coin { phi: num(rest)? },
            "moments" => {
                let parts: Vec<&str> = rest.split(',').collect();
                if parts.len() != 3 {
                    return Err(Error::parse(format!("moments scheme needs three numbers, got {rest:?}")));
                }
                InitScheme::Moments {
                    mu: num(parts[0])?,
                    nu: num(parts[1])?,
                    kappa: num(parts[2])?,
                }
            }
            _ => return Err(Error::parse(format!("unknown init scheme {s:?}"))),
        };
        scheme.moments()?;
        Ok(scheme)
    }
}

impl fmt::Display for InitScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitScheme::Uniform => write!(f, "uniform"),
            InitScheme::Gaussian { gamma } => write!(f, "gaussian:{gamma}"),
            InitScheme::Coin { phi } => write!(f, "coin:{phi}"),
            InitScheme::Moments { mu, nu, kappa } => write!(f, "moments:{mu},{nu},{kappa}"),
        }
    }
}

pub fn init_moments(scheme: &InitScheme) -> Result<Moments> {
    scheme.moments()
}

fn check_theta(g: &GeneratorSet, theta: &[f64]) -> Result<()> {
    crate::error::check_dim(g.len(), theta.len())
}

/// Exact evaluator for one `(G, a)` pair, reusable across many `θ`.
#[derive(Clone, Debug)]
pub struct CharEvaluator {
    indices: Vec<usize>,
    space: RowSpace,
    d: usize,
}

const REFRESH: u64 = 256;

impl CharEvaluator {
    pub fn new(g: &GeneratorSet, a: &BitVec, cap: u32) -> Result<Self> {
        let indices = g.anticommuting_subset(a)?;
        let rows: Vec<BitVec> = indices.iter().map(|&i| g.generators()[i].clone()).collect();
        let space = RowSpace::new(&rows)?;
        if space.rank() > cap as usize {
            return Err(Error::Capacity {
                what: "exact characteristic function",
                required: space.rank(),
                cap,
            });
        }
        Ok(CharEvaluator {
            indices,
            space,
            d: g.len(),
        })
    }

    /// 0-based generator indices in `S^a`.
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn rank(&self) -> usize {
        self.space.rank()
    }

    /// Walks the image in Gray order and hands each `(y, phase)` to `visit`.
    fn walk(&self, theta: &[f64], mut visit: impl FnMut(&[bool], f64)) {
        let m = self.indices.len();
        let th: Vec<f64> = self.indices.iter().map(|&i| theta[i]).collect();
        let mut y = vec![false; m];
        let fresh = |y: &[bool]| -> f64 {
            th.iter()
                .zip(y)
                .map(|(t, &b)| if b { -t } else { *t })
                .sum()
        };
        let mut phase = fresh(&y);
        visit(&y, phase);
        let total = 1u64 << self.rank();
        let basis = self.space.basis();
        for step in 1..total {
            let b = step.trailing_zeros() as usize;
            for j in basis[b].ones() {
                phase += if y[j] { 2.0 * th[j] } else { -2.0 * th[j] };
                y[j] = !y[j];
            }
            if step % REFRESH == 0 {
                phase = fresh(&y);
            }
            visit(&y, phase);
        }
    }

    /// `C^a_θ`.
    pub fn value(&self, theta: &[f64]) -> Result<f64> {
        if theta.len() != self.d {
            return Err(Error::Dimension {
                expected: self.d,
                found: theta.len(),
            });
        }
        let mut acc = Chunked::default();
        self.walk(theta, |_, phase| acc.add((2.0 * phase).cos()));
        Ok(acc.finish() / (1u64 << self.rank()) as f64)
    }

    /// `C^a_θ` and `∂C/∂θ_j` for each `j` in [`Self::indices`].
    pub fn value_and_grad(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        if theta.len() != self.d {
            return Err(Error::Dimension {
                expected: self.d,
                found: theta.len(),
            });
        }
        let m = self.indices.len();
        let mut acc = Chunked::default();
        let mut grads = vec![Chunked::default(); m];
        self.walk(theta, |y, phase| {
            acc.add((2.0 * phase).cos());
            let s = -2.0 * (2.0 * phase).sin();
            for (gj, &yj) in grads.iter_mut().zip(y) {
                gj.add(if yj { -s } else { s });
            }
        });
        let norm = (1u64 << self.rank()) as f64;
        Ok((acc.finish() / norm, grads.into_iter().map(|g| g.finish() / norm).collect()))
    }

    /// Gradient over all `D` generators (zero outside `S^a`).
    pub fn full_grad(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (c, g) = self.value_and_grad(theta)?;
        let mut out = vec![0.0; self.d];
        for (&i, v) in self.indices.iter().zip(g) {
            out[i] = v;
        }
        Ok((c, out))
    }
}

/// Sums in fixed blocks and combines the block sums pairwise.
#[derive(Clone, Default)]
struct Chunked {
    blocks: Vec<f64>,
    cur: f64,
    count: u32,
}

impl Chunked {
    fn add(&mut self, x: f64) {
        self.cur += x;
        self.count += 1;
        if self.count == 1024 {
            self.blocks.push(self.cur);
            self.cur = 0.0;
            self.count = 0;
        }
    }

    fn finish(mut self) -> f64 {
        self.blocks.push(self.cur);
        pairwise_sum(&self.blocks)
    }
}

/// Exact `C^a_θ`.
pub fn exact_char(g: &GeneratorSet, theta: &[f64], a: &BitVec, cap: u32) -> Result<f64> {
    check_theta(g, theta)?;
    CharEvaluator::new(g, a, cap)?.value(theta)
}

/// Exact `∂C^a_θ / ∂θ_ℓ` (0-based `ℓ`).
pub fn exact_char_grad(g: &GeneratorSet, theta: &[f64], a: &BitVec, ell: usize, cap: u32) -> Result<f64> {
    check_theta(g, theta)?;
    g.generator(ell)?;
    let ev = CharEvaluator::new(g, a, cap)?;
    let Some(pos) = ev.indices().iter().position(|&i| i == ell) else {
        return Ok(0.0);
    };
    let (_, grads) = ev.value_and_grad(theta)?;
    Ok(grads[pos])
}

/// Anticommuting generators packed for fast parity against random `z`.
enum Packed {
    Words(Vec<u64>),
    Wide(Vec<BitVec>),
}

impl Packed {
    fn new(g: &GeneratorSet, indices: &[usize]) -> Self {
        match g.masks() {
            Some(m) => Packed::Words(indices.iter().map(|&i| m[i]).collect()),
            None => Packed::Wide(indices.iter().map(|&i| g.generators()[i].clone()).collect()),
        }
    }

    /// Fills `signs[j] = s_j · z` for a fresh uniform `z`.
    fn draw<R: Rng + ?Sized>(&self, n: usize, rng: &mut R, signs: &mut [bool]) {
        match self {
            Packed::Words(ws) => {
                let z = if n == 64 {
                    rng.random::<u64>()
                } else {
                    rng.random::<u64>() & ((1u64 << n) - 1)
                };
                for (s, w) in signs.iter_mut().zip(ws) {
                    *s = (w & z).count_ones() & 1 == 1;
                }
            }
            Packed::Wide(vs) => {
                let z = BitVec::random(n, rng);
                for (s, v) in signs.iter_mut().zip(vs) {
                    *s = v.parity_with(&z);
                }
            }
        }
    }
}

fn phase_of(th: &[f64], signs: &[bool]) -> f64 {
    th.iter()
        .zip(signs)
        .map(|(t, &b)| if b { -t } else { *t })
        .sum()
}

fn check_samples(samples: usize) -> Result<()> {
    if samples < 2 {
        return Err(Error::invalid(format!("need at least 2 Monte-Carlo samples, got {samples}")));
    }
    Ok(())
}

/// Monte-Carlo estimate of `C^a_θ` from `samples` uniform `z`.
pub fn mc_char<R: Rng + ?Sized>(
    g: &GeneratorSet,
    theta: &[f64],
    a: &BitVec,
    samples: usize,
    rng: &mut R,
) -> Result<Estimate> {
    check_samples(samples)?;
    check_theta(g, theta)?;
    let idx = g.anticommuting_subset(a)?;
    if idx.is_empty() {
        return Ok(Estimate::exact(1.0, samples));
    }
    let th: Vec<f64> = idx.iter().map(|&i| theta[i]).collect();
    let packed = Packed::new(g, &idx);
    let mut signs = vec![false; idx.len()];
    let xs: Vec<f64> = (0..samples)
        .map(|_| {
            packed.draw(g.n(), rng, &mut signs);
            (2.0 * phase_of(&th, &signs)).cos()
        })
        .collect();
    Ok(Estimate::from_samples(&xs))
}

/// Monte-Carlo estimate of `∂C^a_θ / ∂θ_ℓ`.
pub fn mc_char_grad<R: Rng + ?Sized>(
    g: &GeneratorSet,
    theta: &[f64],
    a: &BitVec,
    ell: usize,
    samples: usize,
    rng: &mut R,
) -> Result<Estimate> {
    check_samples(samples)?;
    check_theta(g, theta)?;
    g.generator(ell)?;
    let idx = g.anticommuting_subset(a)?;
    let Some(pos) = idx.iter().position(|&i| i == ell) else {
        return Ok(Estimate::exact(0.0, samples));
    };
    let th: Vec<f64> = idx.iter().map(|&i| theta[i]).collect();
    let packed = Packed::new(g, &idx);
    let mut signs = vec![false; idx.len()];
    let xs: Vec<f64> = (0..samples)
        .map(|_| {
            packed.draw(g.n(), rng, &mut signs);
            let v = -2.0 * (2.0 * phase_of(&th, &signs)).sin();
            if signs[pos] {
                -v
            } else {
                v
            }
        })
        .collect();
    Ok(Estimate::from_samples(&xs))
}

/// Monte-Carlo means of `C^a_θ` and of `∂C^a_θ/∂θ_j` for every `j ∈ S^a`,
/// all from one batch of `z`. Returns `(indices, value, gradients)`.
pub fn mc_char_with_grads<R: Rng + ?Sized>(
    g: &GeneratorSet,
    theta: &[f64],
    a: &BitVec,
    samples: usize,
    rng: &mut R,
) -> Result<(Vec<usize>, f64, Vec<f64>)> {
    check_samples(samples)?;
    check_theta(g, theta)?;
    let idx = g.anticommuting_subset(a)?;
    if idx.is_empty() {
        return Ok((idx, 1.0, Vec::new()));
    }
    let th: Vec<f64> = idx.iter().map(|&i| theta[i]).collect();
    let packed = Packed::new(g, &idx);
    let mut signs = vec![false; idx.len()];
    let mut c = 0.0;
    let mut grads = vec![0.0; idx.len()];
    for _ in 0..samples {
        packed.draw(g.n(), rng, &mut signs);
        let phase = phase_of(&th, &signs);
        c += (2.0 * phase).cos();
        let s = -2.0 * (2.0 * phase).sin();
        for (gj, &b) in grads.iter_mut().zip(&signs) {
            *gj += if b { -s } else { s };
        }
    }
    let k = samples as f64;
    grads.iter_mut().for_each(|v| *v /= k);
    Ok((idx, c / k, grads))
}

/// `E_θ C^a_θ = κ^{m^a}`.
pub fn mean_char(g: &GeneratorSet, a: &BitVec, scheme: &InitScheme) -> Result<f64> {
    let m = g.anticommuting_subset(a)?.len();
    Ok(scheme.moments()?.kappa.powi(m as i32))
}

fn null_space_of(g: &GeneratorSet, idx: &[usize]) -> Result<NullSpace> {
    let cols: Vec<BitVec> = idx.iter().map(|&i| g.generators()[i].clone()).collect();
    NullSpace::new(&cols)
}

fn is_uniform(scheme: &InitScheme) -> bool {
    matches!(scheme, InitScheme::Uniform)
}

/// Closed-form `Var_θ C^a_θ`.
///
/// With `S^a` empty the value is the constant 1 and the variance is 0.
pub fn var_char_closed(g: &GeneratorSet, a: &BitVec, scheme: &InitScheme, cap: u32) -> Result<f64> {
    let mo = scheme.moments()?;
    let idx = g.anticommuting_subset(a)?;
    let m = idx.len();
    if m == 0 {
        return Ok(0.0);
    }
    let ns = null_space_of(g, &idx)?;
    if is_uniform(scheme) {
        return Ok((-(ns.rank() as f64)).exp2());
    }
    let mut by_size = vec![0u64; m + 1];
    ns.for_each(cap, |j| by_size[j.weight()] += 1)?;
    let terms: Vec<f64> = by_size
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(k, &c)| c as f64 * mo.mu.powi(k as i32) * mo.nu.powi((m - k) as i32))
        .collect();
    Ok(pairwise_sum(&terms) - mo.kappa.powi(2 * m as i32))
}

/// Closed-form `Var_θ ∂C^a_θ/∂θ_ℓ` for every generator at once; entries
/// outside `S^a` are 0.
pub fn var_grad_closed_all(g: &GeneratorSet, a: &BitVec, scheme: &InitScheme, cap: u32) -> Result<Vec<f64>> {
    let mo = scheme.moments()?;
    let idx = g.anticommuting_subset(a)?;
    let m = idx.len();
    let mut out = vec![0.0; g.len()];
    if m == 0 {
        return Ok(out);
    }
    let ns = null_space_of(g, &idx)?;
    if is_uniform(scheme) {
        let v = (2.0 - ns.rank() as f64).exp2();
        for &i in &idx {
            out[i] = v;
        }
        return Ok(out);
    }
    // per position p: counts of J by size, split by whether p ∈ J
    let mut with = vec![vec![0u64; m + 1]; m];
    let mut without = vec![vec![0u64; m + 1]; m];
    ns.for_each(cap, |j| {
        let k = j.weight();
        for p in 0..m {
            if j.get(p) {
                with[p][k] += 1;
            } else {
                without[p][k] += 1;
            }
        }
    })?;
    let pw = |x: f64, e: i64| if e < 0 { 0.0 } else { x.powi(e as i32) };
    for (p, &i) in idx.iter().enumerate() {
        let mut terms = Vec::new();
        for k in 0..=m {
            let (kk, mm) = (k as i64, m as i64);
            if with[p][k] > 0 {
                terms.push(with[p][k] as f64 * pw(mo.mu, kk - 1) * pw(mo.nu, mm - kk + 1));
            }
            if without[p][k] > 0 {
                terms.push(without[p][k] as f64 * pw(mo.mu, kk + 1) * pw(mo.nu, mm - kk - 1));
            }
        }
        out[i] = 4.0 * pairwise_sum(&terms);
    }
    Ok(out)
}

/// Closed-form `Var_θ ∂C^a_θ/∂θ_ℓ` (0-based `ℓ`).
pub fn var_grad_closed(g: &GeneratorSet, a: &BitVec, ell: usize, scheme: &InitScheme, cap: u32) -> Result<f64> {
    g.generator(ell)?;
    Ok(var_grad_closed_all(g, a, scheme, cap)?[ell])
}

/// `4 μ ν^{m-1}`, the `J = ∅` term of the gradient-variance sum, which
/// lower-bounds it for any `ℓ ∈ S^a` with `|S^a| = m`.
pub fn var_grad_lower_bound(m: usize, scheme: &InitScheme) -> Result<f64> {
    if m == 0 {
        return Ok(0.0);
    }
    let mo = scheme.moments()?;
    Ok(4.0 * mo.mu * mo.nu.powi(m as i32 - 1))
}

/// `4 μ ν^{D-1}` for a Gaussian initialisation of width `gamma`.
pub fn gaussian_grad_lower_bound(d: usize, gamma: f64) -> Result<f64> {
    if d == 0 {
        return Err(Error::invalid("need at least one generator"));
    }
    var_grad_lower_bound(d, &InitScheme::Gaussian { gamma })
}
