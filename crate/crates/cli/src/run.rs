use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use iqpbp::arch::{complete, erdos_renyi, lattice, product, ArchSpec, GeneratorSet};
use iqpbp::bplab::{
    anticoncentration_sum_exact, anticoncentration_sum_mc, bp_scaling_scan, closed_variance, empirical_variance,
    er_anticoncentration_formula, instance_seeds, ASelector, EllSelector, Family, Quantity, ScanMethod, ScanRequest,
    VarianceRequest,
};
use iqpbp::charfn::{exact_char, exact_char_grad, InitScheme, ThetaVector};
use iqpbp::gf2::BitVec;
use iqpbp::kernel::{binomial, weight_class, KernelSpec};
use iqpbp::oracle::{char_grad_all, fourier_char_all, sample_bitstrings, statevector_probs};
use iqpbp::rng::{self, tags};
use iqpbp::stats::Estimate;
use iqpbp::trainer::{train, PlantedTerm, TargetSpec, TrainConfig};

use crate::args::*;
use crate::output::{csv_writer, num, open, opt_num, sibling};
use crate::Failure;

type Res<T> = std::result::Result<T, Failure>;

fn arch(spec: &str) -> Res<GeneratorSet> {
    Ok(spec.parse::<ArchSpec>()?.build()?)
}

fn frequency(s: &str, n: usize) -> Res<BitVec> {
    let a: BitVec = s.parse()?;
    if a.len() != n {
        return Err(Failure::Args(format!("frequency {s} has {} bits, architecture has {n} qubits", a.len())));
    }
    Ok(a)
}

/// `4,6,8`, `2-16` or a mix such as `2-4,8`.
pub fn int_list(s: &str) -> Res<Vec<usize>> {
    let bad = || Failure::Args(format!("bad integer list {s:?}"));
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once('-') {
            Some((lo, hi)) => {
                let lo: usize = lo.trim().parse().map_err(|_| bad())?;
                let hi: usize = hi.trim().parse().map_err(|_| bad())?;
                if lo > hi {
                    return Err(bad());
                }
                out.extend(lo..=hi);
            }
            None => out.push(part.parse().map_err(|_| bad())?),
        }
    }
    if out.is_empty() {
        return Err(bad());
    }
    Ok(out)
}

fn one_based(ell: usize) -> Res<usize> {
    ell.checked_sub(1)
        .ok_or_else(|| Failure::Args("parameter indices start at 1".into()))
}

/// Target strings: `dirichlet:SEED`, `planted:A=C,...`, `dataset:PATH`,
/// `explicit:PATH` (JSON probability array) or `file:PATH` (JSON spec).
pub fn target_spec(s: &str) -> Res<TargetSpec> {
    let (kind, rest) = s
        .split_once(':')
        .ok_or_else(|| Failure::Args(format!("target {s:?} has no ':'")))?;
    Ok(match kind {
        "dirichlet" => TargetSpec::Dirichlet {
            seed: rest
                .parse()
                .map_err(|_| Failure::Args(format!("bad dirichlet seed {rest:?}")))?,
        },
        "planted" => {
            let terms = rest
                .split(',')
                .map(|t| {
                    let (a, c) = t
                        .split_once('=')
                        .ok_or_else(|| Failure::Args(format!("planted term {t:?} wants A=C")))?;
                    Ok(PlantedTerm {
                        a: a.trim().parse()?,
                        c: c.trim()
                            .parse()
                            .map_err(|_| Failure::Args(format!("bad amplitude {c:?}")))?,
                    })
                })
                .collect::<Res<Vec<_>>>()?;
            TargetSpec::Planted { terms }
        }
        "dataset" => TargetSpec::Dataset { path: rest.into() },
        "explicit" => TargetSpec::Explicit {
            probs: serde_json::from_str(&std::fs::read_to_string(rest)?).map_err(iqpbp::Error::from)?,
        },
        "file" => serde_json::from_str(&std::fs::read_to_string(rest)?).map_err(iqpbp::Error::from)?,
        _ => return Err(Failure::Args(format!("unknown target kind {kind:?}"))),
    })
}

pub fn ranks(args: &RanksArgs, global: &Global) -> Res<Vec<PathBuf>> {
    let g = arch(&args.arch)?;
    let n = g.n();
    let cap = global.cap.min(24);
    let freqs: Vec<BitVec> = if !args.a.is_empty() {
        args.a.iter().map(|s| frequency(s, n)).collect::<Res<_>>()?
    } else if let Some(w) = &args.weights {
        let ks = int_list(w)?;
        if let Some(k) = ks.iter().find(|&&k| k > n) {
            return Err(Failure::Args(format!("weight {k} exceeds n = {n}")));
        }
        let total: f64 = ks.iter().map(|&k| binomial(n, k)).sum();
        if total > (cap as f64).exp2() {
            return Err(iqpbp::Error::Capacity {
                what: "weight sweep",
                required: total.log2().ceil() as usize,
                cap,
            }
            .into());
        }
        ks.iter().flat_map(|&k| weight_class(n, k)).collect()
    } else if args.exhaustive {
        if n > cap as usize {
            return Err(iqpbp::Error::Capacity {
                what: "exhaustive frequency sweep",
                required: n,
                cap,
            }
            .into());
        }
        (0..1u64 << n).map(|x| BitVec::from_u64(n, x)).collect()
    } else {
        return Err(Failure::Args("give --a, --weights or --exhaustive".into()));
    };
    let rows = freqs
        .par_iter()
        .map(|a| g.critical_rank(a))
        .collect::<iqpbp::Result<Vec<_>>>()?;
    let mut w = csv_writer(global.out.as_deref())?;
    w.write_record(["a", "weight", "m_a", "r_a", "var_char_uniform", "var_grad_uniform"])?;
    for r in rows {
        let (vc, vg) = if r.m_a == 0 {
            (0.0, 0.0)
        } else {
            ((-(r.r_a as f64)).exp2(), (2.0 - r.r_a as f64).exp2())
        };
        w.write_record([
            r.frequency.to_string(),
            r.frequency.weight().to_string(),
            r.m_a.to_string(),
            r.r_a.to_string(),
            num(vc),
            num(vg),
        ])?;
    }
    w.flush()?;
    Ok(vec![])
}

pub fn variance(args: &VarianceArgs, global: &Global) -> Res<Vec<PathBuf>> {
    let g = arch(&args.arch)?;
    let n = g.n();
    let quantity: Quantity = args.quantity.parse()?;
    let scheme: InitScheme = args.init.parse()?;
    let ell = one_based(args.ell)?;
    let a = match (&args.a, quantity) {
        (Some(s), _) => Some(frequency(s, n)?),
        (None, Quantity::MmdGrad) => None,
        (None, _) => return Err(Failure::Args(format!("--a is required for {quantity}"))),
    };
    let (target, pmf) = if quantity == Quantity::MmdGrad {
        let k = args
            .kernel
            .as_deref()
            .ok_or_else(|| Failure::Args("mmd-grad needs --kernel".into()))?;
        let t = args
            .target
            .as_deref()
            .ok_or_else(|| Failure::Args("mmd-grad needs --target".into()))?;
        (Some(target_spec(t)?.build(n)?), Some(k.parse::<KernelSpec>()?.build(n)?))
    } else {
        (None, None)
    };
    let seed = global.seed.unwrap_or(0);
    let req = VarianceRequest {
        quantity,
        arch: &g,
        a: a.as_ref(),
        ell,
        scheme,
        target: target.as_ref(),
        pmf: pmf.as_ref(),
        draws: args.draws,
        seed,
        cap: global.cap,
    };
    let (closed, emp) = match args.mode {
        Mode::Closed => {
            let c = closed_variance(&req)?;
            if c.is_none() {
                if quantity == Quantity::MmdGrad {
                    return Err(Failure::Args("mmd-grad has no closed form; use --mode empirical".into()));
                }
                return Err(iqpbp::Error::Capacity {
                    what: "closed-form variance",
                    required: g.len(),
                    cap: global.cap,
                }
                .into());
            }
            (c, None)
        }
        Mode::Empirical => (None, Some(empirical_variance(&req)?)),
        Mode::Both => {
            let rec = empirical_variance(&req)?;
            (rec.closed_form, Some(rec))
        }
    };
    let mut w = csv_writer(global.out.as_deref())?;
    let mut header = vec!["arch", "n", "a", "ell", "scheme", "closed_form", "empirical", "stderr", "draws", "seed"];
    if args.mode == Mode::Both {
        header.push("agreement");
    }
    w.write_record(&header)?;
    let mut row = vec![
        g.label().to_string(),
        n.to_string(),
        a.map(|a| a.to_string()).unwrap_or_default(),
        args.ell.to_string(),
        scheme.to_string(),
        opt_num(closed),
        opt_num(emp.as_ref().map(|e| e.empirical.mean)),
        opt_num(emp.as_ref().map(|e| e.empirical.stderr)),
        emp.as_ref().map_or(0, |e| e.draws).to_string(),
        seed.to_string(),
    ];
    if args.mode == Mode::Both {
        row.push(opt_num(closed.zip(emp.as_ref()).map(|(c, e)| e.empirical.z_score(c))));
    }
    w.write_record(&row)?;
    w.flush()?;
    Ok(vec![])
}

pub fn anticoncentration(args: &AnticoncentrationArgs, global: &Global) -> Res<Vec<PathBuf>> {
    let seed = global.seed.unwrap_or(0);
    let single = |g: &GeneratorSet, seed: u64| -> Res<(f64, f64)> {
        match args.samples {
            Some(s) => {
                let e = anticoncentration_sum_mc(g, s, seed)?;
                Ok((e.mean, e.stderr))
            }
            None => Ok((anticoncentration_sum_exact(g)?, 0.0)),
        }
    };
    let method = if args.samples.is_some() { "mc" } else { "exact" };
    let mut rows: Vec<(usize, f64, String, f64)> = Vec::new();
    match (&args.arch, &args.family) {
        (Some(a), _) => {
            let g = arch(a)?;
            let (v, se) = single(&g, seed)?;
            rows.push((g.n(), v, method.into(), se));
        }
        (None, Some(f)) => {
            let ns = int_list(
                args.n
                    .as_deref()
                    .ok_or_else(|| Failure::Args("a family sweep needs --n".into()))?,
            )?;
            if let Some(c) = f.strip_prefix("er-formula:") {
                let c: f64 = c
                    .parse()
                    .map_err(|_| Failure::Args(format!("bad density constant {c:?}")))?;
                for n in ns {
                    rows.push((n, er_anticoncentration_formula(n, c)?, "formula".into(), 0.0));
                }
            } else {
                let family: Family = f.parse()?;
                for n in ns {
                    let vals = (0..family.graphs())
                        .into_par_iter()
                        .map(|k| {
                            let (gs, ds) = instance_seeds(seed, n, k);
                            single(&family.build(n, gs)?, ds)
                        })
                        .collect::<Res<Vec<_>>>()?;
                    if vals.len() == 1 {
                        rows.push((n, vals[0].0, method.into(), vals[0].1));
                    } else {
                        let e = Estimate::from_samples(&vals.iter().map(|v| v.0).collect::<Vec<_>>());
                        rows.push((n, e.mean, format!("{method}-mean"), e.stderr));
                    }
                }
            }
        }
        (None, None) => return Err(Failure::Args("give --arch or --family".into())),
    }
    let mut w = csv_writer(global.out.as_deref())?;
    w.write_record(["n", "value", "method", "stderr"])?;
    for (n, v, m, se) in rows {
        w.write_record([n.to_string(), num(v), m, num(se)])?;
    }
    w.flush()?;
    Ok(vec![])
}

pub fn scan(args: &ScanArgs, global: &Global) -> Res<Vec<PathBuf>> {
    let quantity: Quantity = args.quantity.parse()?;
    let ell = match args.ell.as_str() {
        "first" => EllSelector::First,
        s => EllSelector::Index(one_based(
            s.parse()
                .map_err(|_| Failure::Args(format!("--ell wants 'first' or an index, got {s:?}")))?,
        )?),
    };
    let req = ScanRequest {
        family: args.family.parse()?,
        ns: int_list(&args.n)?,
        a: match args.a_fraction {
            Some(f) => ASelector::ScaledWeight(f),
            None => ASelector::FixedWeight(args.a_weight),
        },
        ell,
        quantity,
        scheme: args.init.parse()?,
        method: match args.draws {
            Some(draws) => ScanMethod::Empirical { draws },
            None => ScanMethod::Closed,
        },
        seed: global.seed.unwrap_or(0),
        cap: global.cap,
    };
    let curve = bp_scaling_scan(&req)?;
    let mut w = csv_writer(global.out.as_deref())?;
    w.write_record(["n", "value", "stderr"])?;
    for p in &curve.points {
        w.write_record([p.n.to_string(), num(p.variance), num(p.stderr)])?;
    }
    w.flush()?;
    match &curve.fit {
        Some(f) => eprintln!(
            "log2 slope {} (95% interval {} .. {})",
            num(f.slope),
            num(f.ci_low),
            num(f.ci_high)
        ),
        None => eprintln!("no slope fit (needs 3 points with positive variance)"),
    }
    let mut extra = Vec::new();
    if let Some(p) = &args.fit_out {
        std::fs::write(p, serde_json::to_string_pretty(&curve).map_err(iqpbp::Error::from)? + "\n")?;
        extra.push(p.clone());
    }
    Ok(extra)
}

pub fn train_cmd(args: &TrainArgs, global: &Global) -> Res<(Vec<PathBuf>, u64)> {
    let mut cfg = TrainConfig::from_json_str(&std::fs::read_to_string(&args.config)?)?;
    if let Some(s) = global.seed {
        cfg.seed = s;
    }
    let trace = train(&cfg)?;
    let mut w = csv_writer(global.out.as_deref())?;
    w.write_record(["step", "loss", "loss_stderr", "grad_norm"])?;
    for r in &trace.records {
        w.write_record([r.step.to_string(), num(r.loss), num(r.loss_stderr), num(r.grad_norm)])?;
    }
    w.flush()?;
    let theta_path = args
        .theta_out
        .clone()
        .or_else(|| global.out.as_deref().map(|o| sibling(o, ".theta.json")));
    let theta_json = serde_json::to_string(&trace.final_theta).map_err(iqpbp::Error::from)?;
    match &theta_path {
        Some(p) => std::fs::write(p, theta_json + "\n")?,
        None => eprintln!("final theta: {theta_json}"),
    }
    Ok((theta_path.into_iter().collect(), cfg.seed))
}

fn circuit_theta(args: &CircuitArgs, g: &GeneratorSet, seed: u64) -> Res<ThetaVector> {
    match &args.theta {
        Some(p) => {
            let v: Vec<f64> = serde_json::from_str(&std::fs::read_to_string(p)?).map_err(iqpbp::Error::from)?;
            if v.len() != g.len() {
                return Err(Failure::Args(format!("theta has {} angles, architecture has {}", v.len(), g.len())));
            }
            Ok(ThetaVector::new(v)?)
        }
        None => {
            let scheme: InitScheme = args.init.parse()?;
            Ok(scheme.sample_theta(g.len(), &mut rng::substream(seed, &[tags::INIT]))?)
        }
    }
}

pub fn sample(args: &CircuitArgs, global: &Global) -> Res<Vec<PathBuf>> {
    let g = arch(&args.arch)?;
    let seed = global.seed.unwrap_or(0);
    let theta = circuit_theta(args, &g, seed)?;
    let xs = sample_bitstrings(&g, &theta, args.shots, &mut rng::substream(seed, &[tags::SHOTS]))?;
    let mut w = open(global.out.as_deref())?;
    for x in xs {
        writeln!(w, "{x}")?;
    }
    w.flush()?;
    Ok(vec![])
}

pub fn probs(args: &CircuitArgs, global: &Global) -> Res<Vec<PathBuf>> {
    let g = arch(&args.arch)?;
    let theta = circuit_theta(args, &g, global.seed.unwrap_or(0))?;
    let q = statevector_probs(&g, &theta)?;
    let mut w = csv_writer(global.out.as_deref())?;
    w.write_record(["x", "probability"])?;
    for (x, p) in q.probs().iter().enumerate() {
        w.write_record([BitVec::from_u64(g.n(), x as u64).to_string(), num(*p)])?;
    }
    w.flush()?;
    Ok(vec![])
}

#[derive(Debug, Serialize)]
struct VerifyRow {
    arch: String,
    trials: usize,
    max_char_error: f64,
    max_grad_error: f64,
    pass: bool,
}

/// Returns whether every architecture passed.
pub fn oracle_verify(args: &OracleVerifyArgs, global: &Global) -> Res<bool> {
    let n = args.n;
    if n < 2 {
        return Err(Failure::Args("oracle-verify needs n >= 2".into()));
    }
    let seed = global.seed.unwrap_or(0);
    let mut archs = vec![product(n)?];
    archs.push(if n % 2 == 0 { lattice(2, n / 2)? } else { lattice(1, n)? });
    archs.push(erdos_renyi(n, 3.0, instance_seeds(seed, n, 0).0)?);
    archs.push(complete(n)?);
    let mut rows = Vec::new();
    for (i, g) in archs.iter().enumerate() {
        let errs = (0..args.trials)
            .into_par_iter()
            .map(|t| {
                let mut r = rng::substream(seed, &[tags::INSTANCE, i as u64, t as u64]);
                let th = InitScheme::Uniform.sample_theta(g.len(), &mut r)?;
                let a = BitVec::random(n, &mut r);
                let ell = t % g.len();
                let oracle = fourier_char_all(&statevector_probs(g, &th)?);
                let idx = a.to_u64().expect("n <= 20") as usize;
                let ce = (exact_char(g, &th, &a, global.cap)? - oracle[idx]).abs();
                let grads = char_grad_all(g, &th, ell)?;
                let ge = (exact_char_grad(g, &th, &a, ell, global.cap)? - grads[idx]).abs();
                Ok((ce, ge))
            })
            .collect::<iqpbp::Result<Vec<_>>>()?;
        let mc = errs.iter().map(|e| e.0).fold(0.0, f64::max);
        let mg = errs.iter().map(|e| e.1).fold(0.0, f64::max);
        rows.push(VerifyRow {
            arch: g.label().to_string(),
            trials: args.trials,
            max_char_error: mc,
            max_grad_error: mg,
            pass: mc <= args.tol && mg <= args.tol,
        });
    }
    let mut w = csv_writer(global.out.as_deref())?;
    w.write_record(["arch", "trials", "max_char_error", "max_grad_error", "pass"])?;
    for r in &rows {
        w.write_record([
            r.arch.clone(),
            r.trials.to_string(),
            num(r.max_char_error),
            num(r.max_grad_error),
            r.pass.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(rows.iter().all(|r| r.pass))
}

pub fn manifest_path(global: &Global) -> Option<PathBuf> {
    global
        .manifest
        .clone()
        .or_else(|| global.out.as_deref().map(|o: &Path| sibling(o, ".manifest.json")))
}
