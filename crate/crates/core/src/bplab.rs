//! Trainability experiments: empirical variances against closed forms,
//! scaling scans across architecture families, MMD gradient-variance bounds,
//! anti-concentration sums and per-frequency trainability verdicts.
//!
//! Randomised work is split into fixed-size blocks of draws; block `b` draws
//! from the substream `(seed, tag, b)`, so results do not depend on how many
//! worker threads run.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::arch::{complete, erdos_renyi, lattice, product, GeneratorSet};
use crate::charfn::{var_char_closed, var_grad_closed_all, var_grad_lower_bound, CharEvaluator, InitScheme};
use crate::error::{Error, Result};
use crate::gf2::{rank_u64, BitVec};
use crate::kernel::SpectralPmf;
use crate::oracle::{mmd_grad_all, MAX_QUBITS};
use crate::rng::{self, tags, Stream};
use crate::stats::{fit_line, pairwise_sum, variance_jackknife, Estimate, SlopeFit};
use crate::trainer::{dirichlet_target, mmd_gradient_estimate, CharSource, Target};

const BLOCK: usize = 1024;

/// Runs `f` once per draw on seeded per-block streams, in parallel.
fn par_draws<T, F>(draws: usize, seed: u64, tag: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&mut Stream) -> Result<T> + Sync,
{
    let blocks = draws.div_ceil(BLOCK);
    let parts = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut r = rng::substream(seed, &[tag, b as u64]);
            let len = BLOCK.min(draws - b * BLOCK);
            (0..len).map(|_| f(&mut r)).collect::<Result<Vec<T>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(parts.into_iter().flatten().collect())
}

/// What a variance is taken of.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Quantity {
    /// `C^a_θ`.
    Char,
    /// `∂C^a_θ / ∂θ_ℓ`.
    Grad,
    /// `∂L/∂θ_ℓ` of the MMD loss.
    MmdGrad,
}

impl FromStr for Quantity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "char" => Ok(Quantity::Char),
            "grad" => Ok(Quantity::Grad),
            "mmd-grad" => Ok(Quantity::MmdGrad),
            _ => Err(Error::parse(format!("unknown quantity {s:?}; expected char, grad or mmd-grad"))),
        }
    }
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Quantity::Char => "char",
            Quantity::Grad => "grad",
            Quantity::MmdGrad => "mmd-grad",
        })
    }
}

/// Inputs of a variance experiment. `a` is required for `Char` and `Grad`,
/// `target` and `pmf` for `MmdGrad`.
#[derive(Clone, Debug)]
pub struct VarianceRequest<'a> {
    pub quantity: Quantity,
    pub arch: &'a GeneratorSet,
    pub a: Option<&'a BitVec>,
    /// 0-based parameter index.
    pub ell: usize,
    pub scheme: InitScheme,
    pub target: Option<&'a Target>,
    pub pmf: Option<&'a SpectralPmf>,
    pub draws: usize,
    pub seed: u64,
    pub cap: u32,
}

/// One measured variance.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VarianceRecord {
    pub quantity: Quantity,
    pub arch: String,
    pub n: usize,
    pub a: Option<BitVec>,
    pub ell: usize,
    pub scheme: String,
    /// Closed form when one exists and fits the caps.
    pub closed_form: Option<f64>,
    /// Sample variance with jackknife standard error.
    pub empirical: Estimate,
    pub draws: usize,
    pub seed: u64,
}

impl VarianceRecord {
    /// `|closed - empirical| / stderr`.
    pub fn agreement(&self) -> Option<f64> {
        self.closed_form.map(|c| self.empirical.z_score(c))
    }
}

/// Closed-form variance of `C^a_θ` or `∂C^a_θ/∂θ_ℓ`; `None` for the MMD
/// gradient or when the enumeration exceeds `cap`.
pub fn closed_variance(req: &VarianceRequest<'_>) -> Result<Option<f64>> {
    let res = match req.quantity {
        Quantity::MmdGrad => return Ok(None),
        Quantity::Char => var_char_closed(req.arch, require_a(req)?, &req.scheme, req.cap),
        Quantity::Grad => {
            req.arch.generator(req.ell)?;
            var_grad_closed_all(req.arch, require_a(req)?, &req.scheme, req.cap).map(|v| v[req.ell])
        }
    };
    match res {
        Ok(v) => Ok(Some(v)),
        Err(e) if e.is_capacity() => Ok(None),
        Err(e) => Err(e),
    }
}

fn require_a<'a>(req: &VarianceRequest<'a>) -> Result<&'a BitVec> {
    req.a.ok_or_else(|| Error::invalid(format!("quantity {} needs a frequency", req.quantity)))
}

/// Samples `draws` initialisations and returns the per-draw values of the
/// requested quantity, in draw order.
pub fn sample_quantity(req: &VarianceRequest<'_>) -> Result<Vec<f64>> {
    let g = req.arch;
    let d = g.len();
    g.generator(req.ell)?;
    match req.quantity {
        Quantity::Char | Quantity::Grad => {
            let a = require_a(req)?;
            let ev = CharEvaluator::new(g, a, req.cap)?;
            let pos = ev.indices().iter().position(|&i| i == req.ell);
            let grad = req.quantity == Quantity::Grad;
            par_draws(req.draws, req.seed, tags::THETA, |r| {
                let th = req.scheme.sample_theta(d, r)?;
                if !grad {
                    return ev.value(&th);
                }
                match pos {
                    None => Ok(0.0),
                    Some(p) => Ok(ev.value_and_grad(&th)?.1[p]),
                }
            })
        }
        Quantity::MmdGrad => {
            let (target, pmf) = match (req.target, req.pmf) {
                (Some(t), Some(p)) => (t, p),
                _ => return Err(Error::invalid("mmd-grad needs a target and a kernel spectrum")),
            };
            crate::error::check_dim(g.n(), target.n())?;
            crate::error::check_dim(g.n(), pmf.n())?;
            if g.n() <= MAX_QUBITS {
                let chars = target.char_table()?;
                let lambda = pmf.table()?;
                return par_draws(req.draws, req.seed, tags::THETA, |r| {
                    let th = req.scheme.sample_theta(d, r)?;
                    Ok(mmd_grad_all(g, &th, chars, &lambda)?[req.ell])
                });
            }
            match pmf.support(req.cap) {
                Ok(support) => {
                    let terms = support
                        .iter()
                        .map(|(a, w)| {
                            let ev = CharEvaluator::new(g, a, req.cap)?;
                            let pos = ev.indices().iter().position(|&i| i == req.ell);
                            Ok((ev, pos, *w, target.char_value(a)?))
                        })
                        .collect::<Result<Vec<_>>>()?;
                    par_draws(req.draws, req.seed, tags::THETA, |r| {
                        let th = req.scheme.sample_theta(d, r)?;
                        let mut parts = Vec::with_capacity(terms.len());
                        for (ev, pos, w, cp) in &terms {
                            if let Some(p) = pos {
                                let (c, gr) = ev.value_and_grad(&th)?;
                                parts.push(-2.0 * w * (cp - c) * gr[*p]);
                            }
                        }
                        Ok(pairwise_sum(&parts))
                    })
                }
                Err(e) if e.is_capacity() => par_draws(req.draws, req.seed, tags::THETA, |r| {
                    let th = req.scheme.sample_theta(d, r)?;
                    let est = mmd_gradient_estimate(g, &th, target, pmf, 256, CharSource::MonteCarlo(256), r)?;
                    Ok(est.mean[req.ell])
                }),
                Err(e) => Err(e),
            }
        }
    }
}

/// Empirical variance over initialisations, paired with the closed form.
pub fn empirical_variance(req: &VarianceRequest<'_>) -> Result<VarianceRecord> {
    if req.draws < 2 {
        return Err(Error::invalid(format!("need at least 2 draws, got {}", req.draws)));
    }
    let closed_form = closed_variance(req)?;
    let values = sample_quantity(req)?;
    Ok(VarianceRecord {
        quantity: req.quantity,
        arch: req.arch.label().to_string(),
        n: req.arch.n(),
        a: req.a.cloned(),
        ell: req.ell,
        scheme: req.scheme.to_string(),
        closed_form,
        empirical: variance_jackknife(&values),
        draws: req.draws,
        seed: req.seed,
    })
}

/// Architecture family for scaling scans.
#[derive(Clone, Debug, PartialEq)]
pub enum Family {
    Product,
    /// Lattice with a fixed number of rows; `n` must be a multiple of it.
    Lattice { rows: usize },
    ErdosRenyi { c: f64, graph_seeds: usize },
    Complete,
}

impl Family {
    /// Instance at register size `n`; `graph_seed` only matters for
    /// Erdős–Rényi graphs.
    pub fn build(&self, n: usize, graph_seed: u64) -> Result<GeneratorSet> {
        match *self {
            Family::Product => product(n),
            Family::Lattice { rows } => {
                if rows == 0 || n % rows != 0 {
                    return Err(Error::invalid(format!("n = {n} is not a multiple of {rows} rows")));
                }
                lattice(rows, n / rows)
            }
            Family::ErdosRenyi { c, .. } => erdos_renyi(n, c, graph_seed),
            Family::Complete => complete(n),
        }
    }

    /// Number of graphs averaged per register size.
    pub fn graphs(&self) -> usize {
        match *self {
            Family::ErdosRenyi { graph_seeds, .. } => graph_seeds.max(1),
            _ => 1,
        }
    }
}

impl FromStr for Family {
    type Err = Error;

    /// `product`, `lattice:<rows>`, `er:<c>[:<graphs>]` or `complete`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let num = |t: &str| t.parse::<f64>().map_err(|_| Error::parse(format!("bad number {t:?} in family {s:?}")));
        match parts.as_slice() {
            ["product"] => Ok(Family::Product),
            ["complete"] => Ok(Family::Complete),
            ["lattice"] => Ok(Family::Lattice { rows: 2 }),
            ["lattice", r] => Ok(Family::Lattice { rows: num(r)? as usize }),
            ["er", c] => Ok(Family::ErdosRenyi { c: num(c)?, graph_seeds: 100 }),
            ["er", c, k] => Ok(Family::ErdosRenyi {
                c: num(c)?,
                graph_seeds: num(k)? as usize,
            }),
            _ => Err(Error::parse(format!("unknown family {s:?}"))),
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Family::Product => write!(f, "product"),
            Family::Lattice { rows } => write!(f, "lattice:{rows}"),
            Family::ErdosRenyi { c, graph_seeds } => write!(f, "er:{c}:{graph_seeds}"),
            Family::Complete => write!(f, "complete"),
        }
    }
}

/// Frequency chosen at each `n`: the first `k` coordinates set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ASelector {
    FixedWeight(usize),
    /// Weight `max(1, round(frac · n))`.
    ScaledWeight(f64),
}

impl ASelector {
    pub fn frequency(&self, n: usize) -> Result<BitVec> {
        let k = match *self {
            ASelector::FixedWeight(k) => k,
            ASelector::ScaledWeight(f) => ((f * n as f64).round() as usize).max(1),
        };
        if k > n {
            return Err(Error::invalid(format!("weight {k} exceeds n = {n}")));
        }
        Ok(BitVec::from_indices(n, 0..k))
    }
}

/// Parameter chosen at each `n`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EllSelector {
    /// First generator in the anticommuting set.
    First,
    Index(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScanMethod {
    Closed,
    Empirical { draws: usize },
}

#[derive(Clone, Debug)]
pub struct ScanRequest {
    pub family: Family,
    pub ns: Vec<usize>,
    pub a: ASelector,
    pub ell: EllSelector,
    pub quantity: Quantity,
    pub scheme: InitScheme,
    pub method: ScanMethod,
    pub seed: u64,
    pub cap: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScanPoint {
    pub n: usize,
    pub a: BitVec,
    /// Mean over graphs (one graph for deterministic families).
    pub variance: f64,
    pub stderr: f64,
    pub per_graph: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScalingCurve {
    pub family: String,
    pub points: Vec<ScanPoint>,
    /// Least-squares slope of `log2(variance)` against `n`; absent with fewer
    /// than three points or a non-positive variance.
    pub fit: Option<SlopeFit>,
}

fn one_variance(req: &ScanRequest, g: &GeneratorSet, a: &BitVec, seed: u64) -> Result<(f64, f64)> {
    let ell = match req.ell {
        EllSelector::Index(i) => i,
        EllSelector::First => match g.anticommuting_subset(a)?.first() {
            Some(&i) => i,
            None if req.quantity == Quantity::Char => 0,
            None => return Err(Error::invalid(format!("frequency {a} anticommutes with no generator"))),
        },
    };
    let vr = VarianceRequest {
        quantity: req.quantity,
        arch: g,
        a: Some(a),
        ell,
        scheme: req.scheme,
        target: None,
        pmf: None,
        draws: 0,
        seed,
        cap: req.cap,
    };
    match req.method {
        ScanMethod::Closed => closed_variance(&vr)?
            .map(|v| (v, 0.0))
            .ok_or(Error::Capacity {
                what: "closed-form variance",
                required: g.len(),
                cap: req.cap,
            }),
        ScanMethod::Empirical { draws } => {
            let rec = empirical_variance(&VarianceRequest { draws, ..vr })?;
            Ok((rec.empirical.mean, rec.empirical.stderr))
        }
    }
}

/// Graph and draw seeds for instance `k` at register size `n`.
pub fn instance_seeds(seed: u64, n: usize, k: usize) -> (u64, u64) {
    let mut r = rng::substream(seed, &[tags::GRAPH, n as u64, k as u64]);
    (r.random(), r.random())
}

/// Variance of a fixed quantity across a sweep of register sizes.
pub fn bp_scaling_scan(req: &ScanRequest) -> Result<ScalingCurve> {
    if req.quantity == Quantity::MmdGrad {
        return Err(Error::invalid("scans cover char and grad only"));
    }
    let mut points = Vec::with_capacity(req.ns.len());
    for &n in &req.ns {
        let a = req.a.frequency(n)?;
        let graphs = req.family.graphs();
        let per: Vec<(f64, f64)> = (0..graphs)
            .into_par_iter()
            .map(|k| {
                let (graph_seed, draw_seed) = instance_seeds(req.seed, n, k);
                let g = req.family.build(n, graph_seed)?;
                one_variance(req, &g, &a, draw_seed)
            })
            .collect::<Result<Vec<_>>>()?;
        let values: Vec<f64> = per.iter().map(|p| p.0).collect();
        let (variance, stderr) = if graphs == 1 {
            per[0]
        } else {
            let e = Estimate::from_samples(&values);
            (e.mean, e.stderr)
        };
        points.push(ScanPoint {
            n,
            a,
            variance,
            stderr,
            per_graph: values,
        });
    }
    let fit = if points.iter().all(|p| p.variance > 0.0) {
        let x: Vec<f64> = points.iter().map(|p| p.n as f64).collect();
        let y: Vec<f64> = points.iter().map(|p| p.variance.log2()).collect();
        fit_line(&x, &y)
    } else {
        None
    };
    Ok(ScalingCurve {
        family: req.family.to_string(),
        points,
        fit,
    })
}

/// Largest register for exhaustive anti-concentration sums.
pub const ANTICONCENTRATION_CAP: u32 = 24;

fn rank_of(masks: &[u64], a: u64) -> usize {
    rank_u64(masks.iter().copied().filter(|m| (m & a).count_ones() & 1 == 1))
}

/// `Σ_a 2^{-r^a}` over all `2^n` frequencies, `a = 0` included.
pub fn anticoncentration_sum_exact(g: &GeneratorSet) -> Result<f64> {
    let n = g.n();
    if n > ANTICONCENTRATION_CAP as usize {
        return Err(Error::Capacity {
            what: "anti-concentration sum",
            required: n,
            cap: ANTICONCENTRATION_CAP,
        });
    }
    let masks = g.masks().expect("n <= 24");
    let counts = (0..1u64 << n)
        .into_par_iter()
        .fold(
            || vec![0u64; n + 1],
            |mut c, a| {
                c[rank_of(&masks, a)] += 1;
                c
            },
        )
        .reduce(
            || vec![0u64; n + 1],
            |mut x, y| {
                x.iter_mut().zip(y).for_each(|(u, v)| *u += v);
                x
            },
        );
    // every term is dyadic, so this sum is exact
    Ok(counts
        .iter()
        .enumerate()
        .map(|(r, &c)| c as f64 * (-(r as f64)).exp2())
        .sum())
}

/// Monte-Carlo estimate of `Σ_a 2^{-r^a} = 2^n E_a 2^{-r^a}`.
pub fn anticoncentration_sum_mc(g: &GeneratorSet, samples: usize, seed: u64) -> Result<Estimate> {
    if samples < 2 {
        return Err(Error::invalid(format!("need at least 2 samples, got {samples}")));
    }
    let n = g.n();
    let scale = (n as f64).exp2();
    let masks = g.masks();
    let values = par_draws(samples, seed, tags::FREQUENCY, |r| {
        let r_a = match &masks {
            Some(m) => {
                let a = if n == 64 { r.random::<u64>() } else { r.random::<u64>() & ((1u64 << n) - 1) };
                rank_of(m, a)
            }
            None => g.critical_rank(&BitVec::random(n, r))?.r_a,
        };
        Ok(scale * (-(r_a as f64)).exp2())
    })?;
    Ok(Estimate::from_samples(&values))
}

/// Expected anti-concentration sum over Erdős–Rényi graphs with edge
/// probability `p = min(1, c ln n / n)`:
/// `Σ_k C(n,k) 2^{-n} (1 + (1-p)^k)^{n-k}`, summed in log space.
pub fn er_anticoncentration_formula(n: usize, c: f64) -> Result<f64> {
    if n < 2 {
        return Err(Error::invalid(format!("need n >= 2, got {n}")));
    }
    if !(c > 0.0) {
        return Err(Error::invalid(format!("need c > 0, got {c}")));
    }
    let p = crate::arch::er_edge_probability(n, c);
    let ln_lambda = (1.0 - p).ln();
    let nf = n as f64;
    let mut ln_binom = 0.0;
    let mut logs = Vec::with_capacity(n + 1);
    for k in 0..=n {
        if k > 0 {
            ln_binom += ((n - k + 1) as f64).ln() - (k as f64).ln();
        }
        let lam_k = if k == 0 { 1.0 } else { (k as f64 * ln_lambda).exp() };
        logs.push(ln_binom - nf * std::f64::consts::LN_2 + (n - k) as f64 * lam_k.ln_1p());
    }
    let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let parts: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
    Ok(top.exp() * pairwise_sum(&parts))
}

/// Sum `Σ_a f(a, Λ(a))` over the support of `Λ`, in parallel and in support
/// order.
fn spectral_sum(pmf: &SpectralPmf, cap: u32, f: impl Fn(&BitVec, f64) -> Result<f64> + Sync) -> Result<f64> {
    let support = pmf.support(cap)?;
    let terms = support
        .par_iter()
        .map(|(a, w)| f(a, *w))
        .collect::<Result<Vec<f64>>>()?;
    Ok(pairwise_sum(&terms))
}

/// `16 Σ_a Λ(a) Var_θ ∂C^a_θ/∂θ_ℓ`, an upper bound on the MMD-gradient
/// variance for any target.
pub fn mmd_grad_var_upper(g: &GeneratorSet, ell: usize, pmf: &SpectralPmf, scheme: &InitScheme, cap: u32) -> Result<f64> {
    g.generator(ell)?;
    crate::error::check_dim(g.n(), pmf.n())?;
    let s = 16.0 * spectral_sum(pmf, cap, |a, w| Ok(w * var_grad_closed_all(g, a, scheme, cap)?[ell]))?;
    Ok(s)
}

/// Target-ensemble variances `σ_a² = E_p (C^a_p)^2`.
#[derive(Clone, Debug, PartialEq)]
pub enum Sigma2 {
    Constant(f64),
    Map(HashMap<BitVec, f64>),
}

impl Sigma2 {
    fn get(&self, a: &BitVec) -> Option<f64> {
        match self {
            Sigma2::Constant(v) => Some(*v),
            Sigma2::Map(m) => m.get(a).copied(),
        }
    }
}

/// `4 Σ_a Λ(a)² σ_a² Var_θ ∂C^a_θ/∂θ_ℓ`, a lower bound on the
/// target-averaged MMD-gradient variance for mean-zero, uncorrelated targets.
pub fn mmd_grad_var_lower_avg(
    g: &GeneratorSet,
    ell: usize,
    pmf: &SpectralPmf,
    scheme: &InitScheme,
    sigma2: &Sigma2,
    cap: u32,
) -> Result<f64> {
    g.generator(ell)?;
    crate::error::check_dim(g.n(), pmf.n())?;
    let s = spectral_sum(pmf, cap, |a, w| {
        let v = var_grad_closed_all(g, a, scheme, cap)?[ell];
        if v == 0.0 {
            return Ok(0.0);
        }
        let s2 = sigma2
            .get(a)
            .ok_or_else(|| Error::invalid(format!("no target variance given for frequency {a}")))?;
        Ok(w * w * s2 * v)
    })?;
    Ok(4.0 * s)
}

/// Target-averaged MMD-gradient variance over flat Dirichlet targets.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnsembleVariance {
    /// Mean over targets of the per-target sample variance over `θ`.
    pub mean: Estimate,
    pub per_target: Vec<f64>,
}

/// Estimates `E_p Var_θ ∂L/∂θ_ℓ` with `targets` Dirichlet targets and
/// `draws` independent initialisations per target.
pub fn ensemble_mmd_grad_variance(
    g: &GeneratorSet,
    ell: usize,
    pmf: &SpectralPmf,
    scheme: &InitScheme,
    targets: usize,
    draws: usize,
    seed: u64,
) -> Result<EnsembleVariance> {
    if targets < 2 || draws < 2 {
        return Err(Error::invalid("need at least 2 targets and 2 draws"));
    }
    g.generator(ell)?;
    let lambda = pmf.table()?;
    let d = g.len();
    let per_target = (0..targets)
        .into_par_iter()
        .map(|k| {
            let t = dirichlet_target(g.n(), rng::substream(seed, &[tags::TARGET, k as u64]).random())?;
            let chars = t.char_table()?;
            let mut r = rng::substream(seed, &[tags::THETA, k as u64]);
            let values = (0..draws)
                .map(|_| {
                    let th = scheme.sample_theta(d, &mut r)?;
                    Ok(mmd_grad_all(g, &th, chars, &lambda)?[ell])
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok(variance_jackknife(&values).mean)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(EnsembleVariance {
        mean: Estimate::from_samples(&per_target),
        per_target,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum VerdictMethod {
    Closed,
    /// Capacity exceeded; the `J = ∅` lower bound was used instead.
    LowerBound,
}

/// Trainability verdict for one frequency.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Verdict {
    pub a: BitVec,
    pub m_a: usize,
    pub r_a: usize,
    /// Parameter with the largest gradient variance, if any.
    pub best_ell: Option<usize>,
    pub variance: f64,
    pub threshold: f64,
    pub trainable: bool,
    pub method: VerdictMethod,
}

/// Default exponent `e` of the `n^{-e}` trainability threshold.
pub const DEFAULT_THRESHOLD_EXPONENT: f64 = 3.0;

/// A frequency is trainable when some parameter's gradient variance is at
/// least `n^{-exponent}`.
pub fn classify_trainability(
    g: &GeneratorSet,
    freqs: &[BitVec],
    scheme: &InitScheme,
    exponent: f64,
    cap: u32,
) -> Result<Vec<Verdict>> {
    let threshold = (g.n() as f64).powf(-exponent);
    freqs
        .par_iter()
        .map(|a| {
            let rep = g.critical_rank(a)?;
            let (best_ell, variance, method) = match var_grad_closed_all(g, a, scheme, cap) {
                Ok(v) => {
                    let best = rep
                        .indices
                        .iter()
                        .copied()
                        .fold(None::<usize>, |acc, i| match acc {
                            Some(j) if v[j] >= v[i] => Some(j),
                            _ => Some(i),
                        });
                    (best, best.map_or(0.0, |i| v[i]), VerdictMethod::Closed)
                }
                Err(e) if e.is_capacity() => (
                    rep.indices.first().copied(),
                    var_grad_lower_bound(rep.m_a, scheme)?,
                    VerdictMethod::LowerBound,
                ),
                Err(e) => return Err(e),
            };
            Ok(Verdict {
                a: a.clone(),
                m_a: rep.m_a,
                r_a: rep.r_a,
                best_ell,
                variance,
                threshold,
                trainable: variance >= threshold,
                method,
            })
        })
        .collect()
}

/// Monte-Carlo value of `E_θ[C^a C^b ∂_ℓC^a ∂_ℓC^b]` under uniform angles,
/// next to the value `2^{-3n+4-|K|}` with `K` the generators anticommuting
/// with both `a` and `b`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FourCopyReport {
    pub k_size: usize,
    pub reference: f64,
    pub estimate: Estimate,
}

pub fn four_copy_diagnostic(
    g: &GeneratorSet,
    a: &BitVec,
    b: &BitVec,
    ell: usize,
    draws: usize,
    seed: u64,
    cap: u32,
) -> Result<FourCopyReport> {
    g.generator(ell)?;
    let ea = CharEvaluator::new(g, a, cap)?;
    let eb = CharEvaluator::new(g, b, cap)?;
    let k_size = g
        .generators()
        .iter()
        .filter(|s| s.parity_with(a) && s.parity_with(b))
        .count();
    let d = g.len();
    let values = par_draws(draws, seed, tags::THETA, |r| {
        let th = InitScheme::Uniform.sample_theta(d, r)?;
        let (ca, ga) = ea.full_grad(&th)?;
        let (cb, gb) = eb.full_grad(&th)?;
        Ok(ca * cb * ga[ell] * gb[ell])
    })?;
    let n = g.n() as f64;
    Ok(FourCopyReport {
        k_size,
        reference: (-3.0 * n + 4.0 - k_size as f64).exp2(),
        estimate: Estimate::from_samples(&values),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gf2::DEFAULT_CAP;
    use crate::kernel::{explicit, gaussian_spectrum, point_mass};

    fn bv(s: &str) -> BitVec {
        s.parse().unwrap()
    }

    fn req<'a>(q: Quantity, g: &'a GeneratorSet, a: &'a BitVec, ell: usize, draws: usize) -> VarianceRequest<'a> {
        VarianceRequest {
            quantity: q,
            arch: g,
            a: Some(a),
            ell,
            scheme: InitScheme::Uniform,
            target: None,
            pmf: None,
            draws,
            seed: 3,
            cap: DEFAULT_CAP,
        }
    }

    #[test]
    fn empirical_examples() {
        let g = complete(6).unwrap();
        let a = BitVec::unit(6, 0);
        let rec = empirical_variance(&req(Quantity::Grad, &g, &a, 0, 100_000)).unwrap();
        assert_eq!(rec.closed_form, Some(0.0625));
        assert!(rec.agreement().unwrap() < 3.0, "{rec:?}");

        let g = product(4).unwrap();
        let a = bv("1111");
        let rec = empirical_variance(&req(Quantity::Char, &g, &a, 0, 100_000)).unwrap();
        assert_eq!(rec.closed_form, Some(0.0625));
        assert!(rec.agreement().unwrap() < 3.0, "{rec:?}");

        let a = bv("1000");
        let rec = empirical_variance(&req(Quantity::Grad, &g, &a, 2, 1000)).unwrap();
        assert_eq!(rec.empirical.mean, 0.0);
        assert_eq!(rec.closed_form, Some(0.0));
    }

    #[test]
    fn draws_are_thread_count_independent() {
        let g = lattice(2, 3).unwrap();
        let a = bv("110010");
        let r = req(Quantity::Grad, &g, &a, 0, 3000);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let x = one.install(|| sample_quantity(&r)).unwrap();
        let y = sample_quantity(&r).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn mmd_grad_requires_inputs() {
        let g = complete(3).unwrap();
        let a = bv("100");
        assert!(empirical_variance(&req(Quantity::MmdGrad, &g, &a, 0, 10)).is_err());
    }

    #[test]
    fn scan_slopes_from_closed_forms() {
        let base = ScanRequest {
            family: Family::Complete,
            ns: vec![4, 6, 8, 10, 12],
            a: ASelector::FixedWeight(1),
            ell: EllSelector::First,
            quantity: Quantity::Grad,
            scheme: InitScheme::Uniform,
            method: ScanMethod::Closed,
            seed: 1,
            cap: DEFAULT_CAP,
        };
        let fit = bp_scaling_scan(&base).unwrap().fit.unwrap();
        assert!((fit.slope + 1.0).abs() < 1e-12);
        let prod = ScanRequest {
            family: Family::Product,
            a: ASelector::FixedWeight(2),
            ..base.clone()
        };
        let curve = bp_scaling_scan(&prod).unwrap();
        assert!(curve.fit.unwrap().slope.abs() < 1e-12);
        assert!(curve.points.iter().all(|p| p.variance == 1.0));
        let lat = ScanRequest {
            family: Family::Lattice { rows: 3 },
            ns: vec![5],
            ..base
        };
        assert!(bp_scaling_scan(&lat).is_err());
    }

    #[test]
    fn er_scan_matches_degree_formula() {
        let n = 24;
        let c = 3.0;
        let scan = ScanRequest {
            family: Family::ErdosRenyi { c, graph_seeds: 400 },
            ns: vec![n],
            a: ASelector::FixedWeight(1),
            ell: EllSelector::First,
            quantity: Quantity::Grad,
            scheme: InitScheme::Uniform,
            method: ScanMethod::Closed,
            seed: 9,
            cap: DEFAULT_CAP,
        };
        let pt = &bp_scaling_scan(&scan).unwrap().points[0];
        let p = crate::arch::er_edge_probability(n, c);
        let want = 2.0 * (1.0 - p / 2.0).powi(n as i32 - 1);
        assert!((pt.variance - want).abs() < 3.0 * pt.stderr, "{} ± {} vs {want}", pt.variance, pt.stderr);
    }

    #[test]
    fn anticoncentration_closed_values() {
        for n in 1..=12 {
            let p = anticoncentration_sum_exact(&product(n).unwrap()).unwrap();
            assert_eq!(p, 1.5f64.powi(n as i32));
        }
        for n in 2..=12 {
            let c = anticoncentration_sum_exact(&complete(n).unwrap()).unwrap();
            assert_eq!(c, 2.0 - (-(n as f64)).exp2());
        }
        let g = lattice(3, 4).unwrap();
        let s = anticoncentration_sum_exact(&g).unwrap();
        assert!((33.0f64 / 32.0).powi(12) <= s && s <= 1.5f64.powi(12));
        assert!(anticoncentration_sum_exact(&product(25).unwrap()).unwrap_err().is_capacity());
    }

    #[test]
    fn anticoncentration_monte_carlo() {
        let g = product(8).unwrap();
        let e = anticoncentration_sum_mc(&g, 100_000, 1).unwrap();
        assert!(e.z_score(1.5f64.powi(8)) < 4.0);
        let g = complete(10).unwrap();
        let e = anticoncentration_sum_mc(&g, 100_000, 2).unwrap();
        assert!(e.z_score(2.0 - 2f64.powi(-10)) < 4.0);
        let g = erdos_renyi(10, 2.0, 4).unwrap();
        let e = anticoncentration_sum_mc(&g, 100_000, 3).unwrap();
        assert!(e.z_score(anticoncentration_sum_exact(&g).unwrap()) < 4.0);
    }

    #[test]
    fn er_formula_is_graph_average() {
        let (n, c) = (8, 2.0);
        let vals: Vec<f64> = (0..2000)
            .map(|s| anticoncentration_sum_exact(&erdos_renyi(n, c, s).unwrap()).unwrap())
            .collect();
        let e = Estimate::from_samples(&vals);
        let f = er_anticoncentration_formula(n, c).unwrap();
        assert!(e.z_score(f) < 4.0, "{} ± {} vs {f}", e.mean, e.stderr);
    }

    #[test]
    fn er_formula_decreases_towards_two() {
        let vals: Vec<f64> = [16, 64, 256, 1024, 4096]
            .iter()
            .map(|&n| er_anticoncentration_formula(n, 3.0).unwrap())
            .collect();
        assert!(vals.windows(2).all(|w| w[1] < w[0]), "{vals:?}");
        assert!(vals[4] > 2.0 && vals[4] < 2.1);
        assert!(er_anticoncentration_formula(1, 3.0).is_err());
        assert!(er_anticoncentration_formula(10, 0.0).is_err());
    }

    #[test]
    fn bound_examples() {
        let g = lattice(2, 2).unwrap();
        let a = bv("1100");
        let rep = g.critical_rank(&a).unwrap();
        let ell = rep.indices[0];
        let pm = point_mass(a.clone());
        let up = mmd_grad_var_upper(&g, ell, &pm, &InitScheme::Uniform, DEFAULT_CAP).unwrap();
        assert_eq!(up, 16.0 * (2.0 - rep.r_a as f64).exp2());
        let lo = mmd_grad_var_lower_avg(&g, ell, &pm, &InitScheme::Uniform, &Sigma2::Constant(0.3), DEFAULT_CAP).unwrap();
        assert!((lo - 4.0 * 0.3 * (2.0 - rep.r_a as f64).exp2()).abs() < 1e-15);
        let zero = mmd_grad_var_lower_avg(&g, ell, &pm, &InitScheme::Uniform, &Sigma2::Constant(0.0), DEFAULT_CAP).unwrap();
        assert_eq!(zero, 0.0);
        let missing = Sigma2::Map(HashMap::new());
        assert!(mmd_grad_var_lower_avg(&g, ell, &pm, &InitScheme::Uniform, &missing, DEFAULT_CAP).is_err());
    }

    #[test]
    fn product_upper_bound_by_weight_classes() {
        for n in [3usize, 6, 10] {
            let g = product(n).unwrap();
            let pmf = gaussian_spectrum(n, 2.0).unwrap();
            let tau = pmf.tau().unwrap();
            let ell = 1;
            let up = mmd_grad_var_upper(&g, ell, &pmf, &InitScheme::Uniform, DEFAULT_CAP).unwrap();
            // a must contain bit ℓ; r^a = |a| = 1 + j with j other bits among n - 1
            let by_class: f64 = (0..n)
                .map(|j| {
                    crate::kernel::binomial(n - 1, j)
                        * tau.powi(j as i32 + 1)
                        * (1.0 - tau).powi((n - 1 - j) as i32)
                        * (1.0 - j as f64).exp2()
                })
                .sum();
            assert!((up - 16.0 * by_class).abs() < 1e-12, "n={n}: {up} vs {}", 16.0 * by_class);
        }
    }

    #[test]
    fn ensemble_sits_between_bounds() {
        let g = erdos_renyi(4, 2.0, 1).unwrap();
        let pmf = gaussian_spectrum(4, 1.0).unwrap();
        let ell = 0;
        let s = InitScheme::Uniform;
        let lo = mmd_grad_var_lower_avg(&g, ell, &pmf, &s, &Sigma2::Constant(crate::trainer::dirichlet_sigma2(4)), DEFAULT_CAP)
            .unwrap();
        let up = mmd_grad_var_upper(&g, ell, &pmf, &s, DEFAULT_CAP).unwrap();
        let ens = ensemble_mmd_grad_variance(&g, ell, &pmf, &s, 100, 400, 5).unwrap();
        assert!(lo <= ens.mean.mean && ens.mean.mean <= up, "{lo} {} {up}", ens.mean.mean);
    }

    #[test]
    fn mmd_grad_paths_agree_past_oracle_cap() {
        // explicit spectrum on 22 qubits goes through the support sum
        let n = 22;
        let g = product(n).unwrap();
        let a1 = BitVec::unit(n, 0);
        let a2 = BitVec::from_indices(n, [0, 5]);
        let pmf = explicit(n, vec![(a1.clone(), 0.5), (a2.clone(), 0.5)]).unwrap();
        let target = crate::trainer::planted_target(
            n,
            vec![crate::trainer::PlantedTerm { a: a1.clone(), c: 0.3 }],
        )
        .unwrap();
        let r = VarianceRequest {
            quantity: Quantity::MmdGrad,
            arch: &g,
            a: None,
            ell: 0,
            scheme: InitScheme::Uniform,
            target: Some(&target),
            pmf: Some(&pmf),
            draws: 20_000,
            seed: 1,
            cap: DEFAULT_CAP,
        };
        let rec = empirical_variance(&r).unwrap();
        // grad = -2[0.5 (0.3 - cos 2θ0)(-2 sin 2θ0) + 0.5 (0 - cos 2θ0 cos 2θ5)(-2 sin 2θ0 cos 2θ5)]
        // whose variance under uniform angles is 0.09·2 + ... ; compare with a direct sample
        let mut rr = rng::stream(77);
        let direct: Vec<f64> = (0..20_000)
            .map(|_| {
                let th = InitScheme::Uniform.sample_theta(n, &mut rr).unwrap();
                let (c0, s0, c5) = ((2.0 * th[0]).cos(), (2.0 * th[0]).sin(), (2.0 * th[5]).cos());
                -2.0 * (0.5 * (0.3 - c0) * (-2.0 * s0) + 0.5 * (-c0 * c5) * (-2.0 * s0 * c5))
            })
            .collect();
        let d = variance_jackknife(&direct);
        let z = (rec.empirical.mean - d.mean).abs() / (rec.empirical.stderr.hypot(d.stderr));
        assert!(z < 4.0, "{} vs {}", rec.empirical.mean, d.mean);
    }

    #[test]
    fn trainability_examples() {
        let g = complete(20).unwrap();
        let a = vec![BitVec::unit(20, 3), BitVec::from_indices(20, 0..7)];
        let v = classify_trainability(&g, &a, &InitScheme::Uniform, 3.0, DEFAULT_CAP).unwrap();
        assert!(v.iter().all(|x| !x.trainable && x.method == VerdictMethod::Closed));
        assert_eq!(v[0].variance, 2f64.powi(-18));

        let g = product(64).unwrap();
        let a = vec![BitVec::from_indices(64, [10, 40])];
        let v = classify_trainability(&g, &a, &InitScheme::Uniform, 3.0, DEFAULT_CAP).unwrap();
        assert!(v[0].trainable);
        assert_eq!(v[0].variance, 1.0);
        assert_eq!(v[0].best_ell, Some(10));

        let g = complete(12).unwrap();
        let d = g.len();
        let gauss = InitScheme::Gaussian { gamma: (1.0 / d as f64).sqrt() };
        let a = vec![BitVec::from_indices(12, 0..6)];
        let v = classify_trainability(&g, &a, &gauss, 3.0, 4).unwrap();
        assert_eq!(v[0].method, VerdictMethod::LowerBound);
        assert!(v[0].trainable);
        let exact = classify_trainability(&g, &a, &gauss, 3.0, DEFAULT_CAP).unwrap();
        assert!(exact[0].variance >= v[0].variance);
    }

    #[test]
    fn four_copy_reference_is_reported() {
        let g = complete(4).unwrap();
        let rep = four_copy_diagnostic(&g, &bv("1000"), &bv("0100"), 0, 2000, 1, DEFAULT_CAP).unwrap();
        assert_eq!(rep.k_size, 1);
        assert_eq!(rep.reference, 2f64.powi(-9));
        assert!(rep.estimate.stderr.is_finite());
    }
}
