//! Brute-force statevector simulation for small registers.
//!
//! The circuit is diagonal in the computational basis between two Hadamard
//! layers, so the state before the final layer is `2^{-n/2} e^{iΦ(z)}` with
//! phase function `Φ(z) = Σ_j θ_j (-1)^{s_j · z}`. Both `Φ` and the output
//! amplitudes are Walsh-Hadamard transforms, which keeps everything at
//! `O(n 2^n)`.
//!
//! Index `x` of a table is the integer whose bit `k` is coordinate `k`.

use rand::Rng;

use crate::arch::GeneratorSet;
use crate::error::{check_dim, Error, Result};
use crate::gf2::BitVec;
use crate::kernel::SpectralPmf;
use crate::stats::pairwise_sum;

/// Largest register the oracle simulates.
pub const MAX_QUBITS: usize = 20;

fn check_n(n: usize) -> Result<()> {
    if n > MAX_QUBITS {
        Err(Error::Capacity {
            what: "statevector oracle",
            required: n,
            cap: MAX_QUBITS as u32,
        })
    } else {
        Ok(())
    }
}

/// In-place unnormalised Walsh-Hadamard transform,
/// `v[a] <- Σ_x (-1)^{a·x} v[x]`.
pub fn fwht(v: &mut [f64]) {
    let len = v.len();
    assert!(len.is_power_of_two(), "transform length {len} is not a power of two");
    let mut h = 1;
    while h < len {
        for block in v.chunks_exact_mut(2 * h) {
            let (lo, hi) = block.split_at_mut(h);
            for (x, y) in lo.iter_mut().zip(hi.iter_mut()) {
                let (a, b) = (*x, *y);
                *x = a + b;
                *y = a - b;
            }
        }
        h *= 2;
    }
}

/// A distribution over `F_2^n` stored as a dense table.
#[derive(Clone, Debug, PartialEq)]
pub struct OutputDistribution {
    n: usize,
    probs: Vec<f64>,
}

impl OutputDistribution {
    pub fn new(n: usize, probs: Vec<f64>) -> Result<Self> {
        check_n(n)?;
        check_dim(1 << n, probs.len())?;
        if let Some(p) = probs.iter().find(|p| !(**p >= 0.0)) {
            return Err(Error::invalid(format!("negative or NaN probability {p}")));
        }
        let total = pairwise_sum(&probs);
        if (total - 1.0).abs() > 1e-10 {
            return Err(Error::invalid(format!("probabilities sum to {total}")));
        }
        Ok(OutputDistribution { n, probs })
    }

    pub fn uniform(n: usize) -> Result<Self> {
        check_n(n)?;
        let len = 1usize << n;
        Ok(OutputDistribution {
            n,
            probs: vec![1.0 / len as f64; len],
        })
    }

    pub fn point_mass(x: &BitVec) -> Result<Self> {
        check_n(x.len())?;
        let mut probs = vec![0.0; 1 << x.len()];
        probs[x.to_u64().expect("n <= 20") as usize] = 1.0;
        Ok(OutputDistribution { n: x.len(), probs })
    }

    /// Empirical distribution of a list of bit strings.
    pub fn empirical(n: usize, samples: &[BitVec]) -> Result<Self> {
        check_n(n)?;
        if samples.is_empty() {
            return Err(Error::invalid("empty sample list"));
        }
        let mut probs = vec![0.0; 1 << n];
        let w = 1.0 / samples.len() as f64;
        for s in samples {
            check_dim(n, s.len())?;
            probs[s.to_u64().expect("n <= 20") as usize] += w;
        }
        Ok(OutputDistribution { n, probs })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, x: &BitVec) -> Result<f64> {
        check_dim(self.n, x.len())?;
        Ok(self.probs[x.to_u64().expect("n <= 20") as usize])
    }

    /// Draws `shots` strings by inverse CDF.
    pub fn sample<R: Rng + ?Sized>(&self, shots: usize, rng: &mut R) -> Vec<BitVec> {
        let mut cdf = Vec::with_capacity(self.probs.len());
        let mut acc = 0.0;
        for p in &self.probs {
            acc += p;
            cdf.push(acc);
        }
        let last = self.probs.iter().rposition(|&p| p > 0.0).unwrap_or(0);
        (0..shots)
            .map(|_| {
                let u = rng.random::<f64>() * acc;
                let x = cdf.partition_point(|&c| c <= u).min(last);
                BitVec::from_u64(self.n, x as u64)
            })
            .collect()
    }
}

/// `Φ(z)` for every `z`.
pub fn phase_table(g: &GeneratorSet, theta: &[f64]) -> Result<Vec<f64>> {
    check_n(g.n())?;
    check_dim(g.len(), theta.len())?;
    let mut f = vec![0.0; 1 << g.n()];
    for (s, t) in g.generators().iter().zip(theta) {
        f[s.to_u64().expect("n <= 20") as usize] += t;
    }
    fwht(&mut f);
    Ok(f)
}

/// Complex table as separate real and imaginary parts.
struct Complex {
    re: Vec<f64>,
    im: Vec<f64>,
}

impl Complex {
    fn transform(&mut self, scale: f64) {
        fwht(&mut self.re);
        fwht(&mut self.im);
        if scale != 1.0 {
            self.re.iter_mut().for_each(|v| *v *= scale);
            self.im.iter_mut().for_each(|v| *v *= scale);
        }
    }
}

/// `ψ(z) = e^{iΦ(z)}` and output amplitudes `φ(x) = 2^{-n} Σ_z (-1)^{x·z} ψ(z)`.
fn amplitudes(g: &GeneratorSet, theta: &[f64]) -> Result<(Complex, Complex)> {
    let phase = phase_table(g, theta)?;
    let psi = Complex {
        re: phase.iter().map(|p| p.cos()).collect(),
        im: phase.iter().map(|p| p.sin()).collect(),
    };
    let mut phi = Complex {
        re: psi.re.clone(),
        im: psi.im.clone(),
    };
    phi.transform((-(g.n() as f64)).exp2());
    Ok((psi, phi))
}

/// Output distribution `q_θ` of the circuit.
pub fn statevector_probs(g: &GeneratorSet, theta: &[f64]) -> Result<OutputDistribution> {
    let (_, phi) = amplitudes(g, theta)?;
    let probs = phi.re.iter().zip(&phi.im).map(|(r, i)| r * r + i * i).collect();
    Ok(OutputDistribution { n: g.n(), probs })
}

/// `C^a = Σ_x (-1)^{a·x} q(x)` for every `a`; entry 0 is 1.
pub fn fourier_char_all(q: &OutputDistribution) -> Vec<f64> {
    let mut c = q.probs.clone();
    fwht(&mut c);
    c
}

/// `∂C^a_θ / ∂θ_ℓ` for every `a`.
pub fn char_grad_all(g: &GeneratorSet, theta: &[f64], ell: usize) -> Result<Vec<f64>> {
    let s = g.generator(ell)?.to_u64().unwrap_or(0);
    let (psi, phi) = amplitudes(g, theta)?;
    let n = g.n();
    // dψ(z) = i χ_ℓ(z) ψ(z)
    let mut dphi = Complex {
        re: Vec::with_capacity(1 << n),
        im: Vec::with_capacity(1 << n),
    };
    for z in 0..1usize << n {
        let chi = if (s & z as u64).count_ones() & 1 == 1 { -1.0 } else { 1.0 };
        dphi.re.push(-chi * psi.im[z]);
        dphi.im.push(chi * psi.re[z]);
    }
    dphi.transform((-(n as f64)).exp2());
    let mut dq: Vec<f64> = (0..1usize << n)
        .map(|x| 2.0 * (phi.re[x] * dphi.re[x] + phi.im[x] * dphi.im[x]))
        .collect();
    fwht(&mut dq);
    Ok(dq)
}

/// Exact MMD `Σ_a Λ(a) (C^a_p - C^a_q)^2`.
pub fn mmd_exact(p: &OutputDistribution, q: &OutputDistribution, pmf: &SpectralPmf) -> Result<f64> {
    check_dim(p.n, q.n)?;
    check_dim(p.n, pmf.n())?;
    let cp = fourier_char_all(p);
    let cq = fourier_char_all(q);
    mmd_from_chars(&cp, &cq, &pmf.table()?)
}

/// MMD from precomputed characteristic tables and a dense spectrum table.
pub fn mmd_from_chars(cp: &[f64], cq: &[f64], lambda: &[f64]) -> Result<f64> {
    check_dim(cp.len(), cq.len())?;
    check_dim(cp.len(), lambda.len())?;
    let terms: Vec<f64> = lambda
        .iter()
        .zip(cp.iter().zip(cq))
        .map(|(l, (a, b))| l * (a - b) * (a - b))
        .collect();
    Ok(pairwise_sum(&terms))
}

/// Analytic `∂L/∂θ_ℓ` for every `ℓ`, where
/// `L(θ) = Σ_a Λ(a) (C^a_p - C^a_θ)^2`.
///
/// With `w(a) = Λ(a)(C^a_p - C^a_θ)` and `W = H w`, the sum
/// `Σ_a w(a) ∂_ℓ C^a_θ` equals `2^{1-n} Σ_z χ_ℓ(z) B(z)` where
/// `B(z) = Re(i ψ(z) · H(W φ̄)(z))`, so one more transform of `B` gives every
/// parameter at once.
pub fn mmd_grad_all(
    g: &GeneratorSet,
    theta: &[f64],
    target_chars: &[f64],
    lambda: &[f64],
) -> Result<Vec<f64>> {
    let n = g.n();
    check_n(n)?;
    check_dim(1 << n, target_chars.len())?;
    check_dim(1 << n, lambda.len())?;
    let (psi, phi) = amplitudes(g, theta)?;
    let mut c_theta: Vec<f64> = phi.re.iter().zip(&phi.im).map(|(r, i)| r * r + i * i).collect();
    fwht(&mut c_theta);
    let mut w: Vec<f64> = (0..1usize << n)
        .map(|a| lambda[a] * (target_chars[a] - c_theta[a]))
        .collect();
    fwht(&mut w);
    let mut t = Complex {
        re: (0..1usize << n).map(|x| w[x] * phi.re[x]).collect(),
        im: (0..1usize << n).map(|x| -w[x] * phi.im[x]).collect(),
    };
    t.transform(1.0);
    // Re(i ψ t) = -(ψ.re t.im + ψ.im t.re)
    let mut b: Vec<f64> = (0..1usize << n)
        .map(|z| -(psi.re[z] * t.im[z] + psi.im[z] * t.re[z]))
        .collect();
    fwht(&mut b);
    let scale = -2.0 * (1.0 - n as f64).exp2();
    Ok(g.generators()
        .iter()
        .map(|s| scale * b[s.to_u64().expect("n <= 20") as usize])
        .collect())
}

/// Central finite difference of [`mmd_exact`] in `θ_ℓ`.
pub fn mmd_grad_fd(
    g: &GeneratorSet,
    theta: &[f64],
    ell: usize,
    p: &OutputDistribution,
    pmf: &SpectralPmf,
    h: f64,
) -> Result<f64> {
    if !(h > 0.0) {
        return Err(Error::invalid(format!("step must be positive, got {h}")));
    }
    g.generator(ell)?;
    check_dim(g.len(), theta.len())?;
    let mut tp = theta.to_vec();
    let mut tm = theta.to_vec();
    tp[ell] += h;
    tm[ell] -= h;
    let lp = mmd_exact(p, &statevector_probs(g, &tp)?, pmf)?;
    let lm = mmd_exact(p, &statevector_probs(g, &tm)?, pmf)?;
    Ok((lp - lm) / (2.0 * h))
}

/// `Σ_x q(x)^2`.
pub fn collision_probability(q: &OutputDistribution) -> f64 {
    let sq: Vec<f64> = q.probs.iter().map(|p| p * p).collect();
    pairwise_sum(&sq)
}

/// I.i.d. measurement outcomes of the circuit.
pub fn sample_bitstrings<R: Rng + ?Sized>(
    g: &GeneratorSet,
    theta: &[f64],
    shots: usize,
    rng: &mut R,
) -> Result<Vec<BitVec>> {
    if shots == 0 {
        return Err(Error::invalid("need at least one shot"));
    }
    Ok(statevector_probs(g, theta)?.sample(shots, rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::{complete, erdos_renyi, lattice, product};
    use crate::charfn::{exact_char, CharEvaluator, InitScheme};
    use crate::gf2::DEFAULT_CAP;
    use crate::kernel::{explicit, gaussian_spectrum, weight_band};
    use crate::rng;
    use std::f64::consts::FRAC_PI_4;

    fn bv(s: &str) -> BitVec {
        s.parse().unwrap()
    }

    #[test]
    fn identity_circuit_maps_to_zero_string() {
        let g = complete(4).unwrap();
        let q = statevector_probs(&g, &vec![0.0; g.len()]).unwrap();
        assert!((q.probs()[0] - 1.0).abs() < 1e-15);
        let mut r = rng::stream(0);
        assert!(sample_bitstrings(&g, &vec![0.0; g.len()], 100, &mut r)
            .unwrap()
            .iter()
            .all(BitVec::is_zero));
    }

    #[test]
    fn single_qubit_hand_calculation() {
        let g = GeneratorSet::new(1, vec![bv("1")], "single").unwrap();
        let q = statevector_probs(&g, &[FRAC_PI_4]).unwrap();
        assert!((q.probs()[0] - 0.5).abs() < 1e-15);
        assert!((q.probs()[1] - 0.5).abs() < 1e-15);
        let q = statevector_probs(&g, &[0.3]).unwrap();
        assert!((q.probs()[0] - 0.3f64.cos().powi(2)).abs() < 1e-15);
    }

    #[test]
    fn capacity_and_dimension_errors() {
        let g = product(21).unwrap();
        assert!(statevector_probs(&g, &[0.0; 21]).unwrap_err().is_capacity());
        let g = product(3).unwrap();
        assert!(statevector_probs(&g, &[0.0; 2]).is_err());
        assert!(OutputDistribution::new(1, vec![0.5, 0.6]).is_err());
        assert!(OutputDistribution::new(1, vec![1.5, -0.5]).is_err());
    }

    #[test]
    fn fourier_of_simple_distributions() {
        let u = OutputDistribution::uniform(3).unwrap();
        let c = fourier_char_all(&u);
        assert!((c[0] - 1.0).abs() < 1e-15);
        assert!(c[1..].iter().all(|v| v.abs() < 1e-15));
        let x0 = bv("101");
        let c = fourier_char_all(&OutputDistribution::point_mass(&x0).unwrap());
        for a in 0..8u64 {
            let want = if BitVec::from_u64(3, a).parity_with(&x0) { -1.0 } else { 1.0 };
            assert_eq!(c[a as usize], want);
        }
        assert_eq!(collision_probability(&u), 0.125);
        assert_eq!(collision_probability(&OutputDistribution::point_mass(&x0).unwrap()), 1.0);
    }

    #[test]
    fn statevector_matches_exact_characteristic_function() {
        let mut r = rng::stream(4);
        for n in [2usize, 5, 8, 10] {
            let archs = [
                product(n).unwrap(),
                complete(n).unwrap(),
                erdos_renyi(n, 2.0, n as u64).unwrap(),
                lattice(2, n / 2).unwrap(),
            ];
            for g in &archs {
                let n = g.n();
                for _ in 0..5 {
                    let th = InitScheme::Uniform.sample_theta(g.len(), &mut r).unwrap();
                    let q = statevector_probs(g, &th).unwrap();
                    assert!((q.probs().iter().sum::<f64>() - 1.0).abs() < 1e-10);
                    let c = fourier_char_all(&q);
                    let coll = collision_probability(&q);
                    let parseval: f64 = c.iter().map(|v| v * v).sum::<f64>() / (1u64 << n) as f64;
                    assert!((coll - parseval).abs() < 1e-8 / (1u64 << n) as f64, "{} n={n}: {coll} vs {parseval}", g.label());
                    for _ in 0..20 {
                        let a = BitVec::random(n, &mut r);
                        let e = exact_char(g, &th, &a, DEFAULT_CAP).unwrap();
                        let x = a.to_u64().unwrap() as usize;
                        assert!((e - c[x]).abs() < 1e-9, "{} a={a}: {e} vs {}", g.label(), c[x]);
                    }
                }
            }
        }
    }

    #[test]
    fn char_gradients_match_evaluator() {
        let mut r = rng::stream(5);
        let g = erdos_renyi(6, 3.0, 1).unwrap();
        let th = InitScheme::Uniform.sample_theta(g.len(), &mut r).unwrap();
        for ell in [0, 3, g.len() - 1] {
            let all = char_grad_all(&g, &th, ell).unwrap();
            for x in 0..64u64 {
                let a = BitVec::from_u64(6, x);
                let (_, grad) = CharEvaluator::new(&g, &a, DEFAULT_CAP).unwrap().full_grad(&th).unwrap();
                assert!((all[x as usize] - grad[ell]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn mmd_examples() {
        let p = OutputDistribution::point_mass(&bv("0")).unwrap();
        let q = OutputDistribution::uniform(1).unwrap();
        let pmf = explicit(1, vec![(bv("0"), 0.5), (bv("1"), 0.5)]).unwrap();
        assert!((mmd_exact(&p, &q, &pmf).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(mmd_exact(&q, &q, &pmf).unwrap(), 0.0);
        let pmf3 = gaussian_spectrum(3, 1.0).unwrap();
        assert!(mmd_exact(&p, &OutputDistribution::uniform(3).unwrap(), &pmf3).is_err());
    }

    #[test]
    fn stationary_point_has_zero_gradient() {
        let g = lattice(2, 2).unwrap();
        let th = vec![0.0; g.len()];
        let p = statevector_probs(&g, &th).unwrap();
        let pmf = gaussian_spectrum(4, 2.0).unwrap();
        for ell in 0..g.len() {
            assert!(mmd_grad_fd(&g, &th, ell, &p, &pmf, 1e-4).unwrap().abs() < 1e-12);
        }
        let grads = mmd_grad_all(&g, &th, &fourier_char_all(&p), &pmf.table().unwrap()).unwrap();
        assert!(grads.iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn analytic_mmd_gradient_matches_finite_differences() {
        let mut r = rng::stream(6);
        for n in [2usize, 4, 6, 8] {
            let g = erdos_renyi(n, 2.5, 10 + n as u64).unwrap();
            let th = InitScheme::Uniform.sample_theta(g.len(), &mut r).unwrap();
            let other = InitScheme::Uniform.sample_theta(g.len(), &mut r).unwrap();
            let p = statevector_probs(&g, &other).unwrap();
            let cp = fourier_char_all(&p);
            for pmf in [gaussian_spectrum(n, 1.5).unwrap(), weight_band(n, &[1, 2]).unwrap()] {
                let lambda = pmf.table().unwrap();
                let grads = mmd_grad_all(&g, &th, &cp, &lambda).unwrap();
                // direct per-frequency sum
                let cq = fourier_char_all(&statevector_probs(&g, &th).unwrap());
                for (ell, &grad) in grads.iter().enumerate() {
                    let dc = char_grad_all(&g, &th, ell).unwrap();
                    let direct: f64 = (0..1usize << n)
                        .map(|a| -2.0 * lambda[a] * (cp[a] - cq[a]) * dc[a])
                        .sum();
                    assert!((direct - grad).abs() < 1e-12);
                    let fd = mmd_grad_fd(&g, &th, ell, &p, &pmf, 1e-5).unwrap();
                    assert!((fd - grad).abs() < 1e-5, "n={n} ell={ell}: {fd} vs {grad}");
                }
            }
        }
    }

    #[test]
    fn finite_difference_error_is_second_order() {
        let mut r = rng::stream(7);
        let g = complete(4).unwrap();
        let th = InitScheme::Uniform.sample_theta(g.len(), &mut r).unwrap();
        let p = OutputDistribution::uniform(4).unwrap();
        let pmf = gaussian_spectrum(4, 1.0).unwrap();
        let exact = mmd_grad_all(&g, &th, &fourier_char_all(&p), &pmf.table().unwrap()).unwrap()[2];
        let e1 = (mmd_grad_fd(&g, &th, 2, &p, &pmf, 1e-2).unwrap() - exact).abs();
        let e2 = (mmd_grad_fd(&g, &th, 2, &p, &pmf, 5e-3).unwrap() - exact).abs();
        let ratio = e1 / e2;
        assert!((3.5..4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn uniform_output_sampling_passes_chi_square() {
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        // product circuit at θ = π/4 on every qubit gives the uniform distribution
        let g = product(4).unwrap();
        let th = vec![FRAC_PI_4; 4];
        let q = statevector_probs(&g, &th).unwrap();
        assert!(q.probs().iter().all(|p| (p - 1.0 / 16.0).abs() < 1e-15));
        let shots = 1_000_000;
        let mut r = rng::stream(8);
        let mut counts = [0u64; 16];
        for s in sample_bitstrings(&g, &th, shots, &mut r).unwrap() {
            counts[s.to_u64().unwrap() as usize] += 1;
        }
        let e = shots as f64 / 16.0;
        let stat: f64 = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
        assert!(stat < ChiSquared::new(15.0).unwrap().inverse_cdf(0.99));
    }

    #[test]
    fn empirical_chars_from_shots() {
        let mut r = rng::stream(9);
        let g = lattice(2, 2).unwrap();
        let th = InitScheme::Uniform.sample_theta(g.len(), &mut r).unwrap();
        let exact = fourier_char_all(&statevector_probs(&g, &th).unwrap());
        let shots = 100_000;
        let emp = OutputDistribution::empirical(4, &sample_bitstrings(&g, &th, shots, &mut r).unwrap()).unwrap();
        let c = fourier_char_all(&emp);
        for a in 0..16 {
            assert!((c[a] - exact[a]).abs() < 4.0 / (shots as f64).sqrt());
        }
    }

    #[test]
    fn complete_graph_collision_probability_averages_to_two() {
        for n in [4usize, 6] {
            let g = complete(n).unwrap();
            let mut r = rng::stream(100 + n as u64);
            let xs: Vec<f64> = (0..1000)
                .map(|_| {
                    let th = InitScheme::Uniform.sample_theta(g.len(), &mut r).unwrap();
                    (1u64 << n) as f64 * collision_probability(&statevector_probs(&g, &th).unwrap())
                })
                .collect();
            let e = crate::stats::Estimate::from_samples(&xs);
            let want = 2.0 - (-(n as f64)).exp2();
            assert!(e.z_score(want) < 3.0, "n={n}: {} ± {} vs {want}", e.mean, e.stderr);
        }
    }
}
