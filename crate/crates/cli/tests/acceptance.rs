//! Acceptance suite: nine criteria, one PASS/FAIL line each. Exits non-zero
//! when any criterion fails.

use std::collections::BTreeMap;
use std::fs;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use nsfde_cli::{run_config, Example5Params, Experiment, ExperimentConfig};
use nsfde_core::integrator::{simulate_ensemble, strong_order_probe, EnsembleOptions, SchemeConfig};
use nsfde_core::lab::invariants::{moment_bound_check, segment_coupling_bound_check};
use nsfde_core::lab::{
    coupling_decay, empirical_dl, stability_in_distribution_report, CouplingOptions,
    DistributionOptions,
};
use nsfde_core::measures::{Atom, ExpComponent};
use nsfde_core::model::checks::neutral_bound_ratios;
use nsfde_core::model::sampler::{random_pair, random_segment};
use nsfde_core::model::{
    DeclaredParams, DiffusionSpec, DriftSpec, MatrixSpec, ModelSpec, NeutralSpec, Pointwise,
};
use nsfde_core::rng::{keyed_rng, uniform, Domain};
use nsfde_core::{
    CheckConfig, ConstantLedger, EpsChoice, ExampleConstants, FadingMeasure, InitialData,
    NeutralModel, Segment,
};

type Verdict = Result<String, String>;
type Criterion = (u32, &'static str, u64, fn() -> Verdict);

const SEED: u64 = 20_240_611;

fn sqrt2() -> f64 {
    2f64.sqrt()
}

fn example() -> NeutralModel {
    NeutralModel::example5(450.0, sqrt2(), 1.0, 0.25, ExampleConstants::Stated).unwrap()
}

fn scalar(a: f64, g: Pointwise, sigma0: f64) -> NeutralModel {
    NeutralModel::new(ModelSpec {
        name: None,
        dim: 1,
        r: 0.25,
        measure: FadingMeasure::exponential(1.0).unwrap(),
        neutral: NeutralSpec { kappa: MatrixSpec::Scalar(0.0) },
        drift: DriftSpec { a: MatrixSpec::Scalar(a), ..Default::default() },
        diffusion: DiffusionSpec { g, c: MatrixSpec::Scalar(0.0), sigma0: MatrixSpec::Scalar(sigma0) },
        declared: DeclaredParams { k: 0.5, lambda1: 1.0, lambda2: 1.0, lambda3: 1.0, lambda4: 1.0 },
    })
    .unwrap()
}

fn ensure(ok: bool, msg: String) -> Verdict {
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

// ---------------------------------------------------------------- 1

fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    #[allow(clippy::too_many_arguments)]
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (flm, frm) = (f(0.5 * (a + m)), f(0.5 * (m + b)));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
                + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
        }
    }
    let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
    rec(f, a, b, fa, fm, fb, (b - a) / 6.0 * (fa + 4.0 * fm + fb), tol, 50)
}

/// Atoms summed directly; densities integrated after `θ = −s/(1−s)`.
fn moment_oracle(mu: &FadingMeasure, r: f64) -> f64 {
    let mut total: f64 = mu.atoms().iter().map(|a| a.w * (-r * a.theta).exp()).sum();
    for e in mu.exp_components() {
        let f = |s: f64| {
            if s >= 1.0 {
                return 0.0;
            }
            let theta = -s / (1.0 - s);
            e.w * e.rho * ((e.rho - r) * theta).exp() / ((1.0 - s) * (1.0 - s))
        };
        total += simpson(&f, 0.0, 1.0, 1e-13);
    }
    total
}

fn random_mixture(i: u64) -> FadingMeasure {
    let mut rng = keyed_rng(SEED, Domain::Sampling, i);
    let n_atoms = (uniform(&mut rng) * 3.0) as usize;
    let n_exp = if n_atoms == 0 { 1 + (uniform(&mut rng) * 2.0) as usize } else { (uniform(&mut rng) * 3.0) as usize };
    let mut raw_atoms: Vec<(f64, f64)> = (0..n_atoms).map(|_| (-5.0 * uniform(&mut rng), 0.05 + uniform(&mut rng))).collect();
    let raw_exp: Vec<(f64, f64)> = (0..n_exp).map(|_| (0.6 + 19.4 * uniform(&mut rng), 0.05 + uniform(&mut rng))).collect();
    let total: f64 = raw_atoms.iter().chain(&raw_exp).map(|p| p.1).sum();
    raw_atoms.iter_mut().for_each(|p| p.1 /= total);
    let mut atoms: Vec<Atom> = raw_atoms.iter().map(|&(theta, w)| Atom { theta, w }).collect();
    let exp: Vec<ExpComponent> = raw_exp.iter().map(|&(rho, w)| ExpComponent { rho, w: w / total }).collect();
    let s: f64 = atoms.iter().map(|a| a.w).chain(exp.iter().map(|e| e.w)).sum();
    if let Some(a) = atoms.first_mut() {
        a.w += 1.0 - s;
    }
    FadingMeasure::new(atoms, exp).unwrap()
}

fn moments() -> Verdict {
    let mut worst = 0.0f64;
    let mut non_monotone = 0;
    let mut zero_not_one = 0;
    for i in 0..200 {
        let mu = random_mixture(i);
        let mut rng = keyed_rng(SEED, Domain::Checks, i);
        let r = 0.5 * uniform(&mut rng);
        let (exact, oracle) = (mu.r_moment(r), moment_oracle(&mu, r));
        worst = worst.max(((exact - oracle) / oracle).abs());
        if mu.r_moment(0.0) != 1.0 {
            zero_not_one += 1;
        }
        let mut rs: Vec<f64> = (0..20).map(|_| 0.5 * uniform(&mut rng)).collect();
        rs.sort_by(f64::total_cmp);
        non_monotone += rs.windows(2).filter(|w| mu.r_moment(w[0]) > mu.r_moment(w[1])).count();
    }
    ensure(
        worst < 1e-8 && non_monotone == 0 && zero_not_one == 0,
        format!("max rel err {worst:.2e}, monotonicity failures {non_monotone}, mu(0) != 1 on {zero_not_one}"),
    )
}

// ---------------------------------------------------------------- 2

fn norms_and_neutral_bounds() -> Verdict {
    let (h, depth, dim, r) = (0.05, 80, 2, 0.25);
    let mut rng = keyed_rng(SEED, Domain::Sampling, 1 << 20);
    let mut failures = 0usize;
    for i in 0..10_000 {
        let (phi, psi, _, _) = random_pair(&mut rng, h, depth, dim, r);
        let (np, nq) = (phi.cr_norm(r).unwrap(), psi.cr_norm(r).unwrap());
        let nd = phi.sub(&psi).unwrap().cr_norm(r).unwrap();
        let (s, _) = random_segment(&mut rng, h, depth, dim, r);
        let ns = s.cr_norm(r).unwrap();
        let c = 4.0 * uniform(&mut rng) - 2.0;
        let ok = np >= 0.0
            && (np > 0.0 || phi.sup_norm() == 0.0)
            && s.sub(&s).unwrap().cr_norm(r).unwrap() == 0.0
            && s.scaled(-2.0).cr_norm(r).unwrap() == 2.0 * ns
            && s.scaled(0.5).cr_norm(r).unwrap() == 0.5 * ns
            // exact up to the rounding of the product itself
            && (s.scaled(c).cr_norm(r).unwrap() - c.abs() * ns).abs() <= 4.0 * f64::EPSILON * c.abs() * ns
            && nd <= (np + nq) * (1.0 + 4.0 * f64::EPSILON);
        if !ok {
            failures += 1;
            eprintln!("  axiom failure on sample {i}");
        }
    }
    let (single, pair) = neutral_bound_ratios(&example(), &CheckConfig::with_trials(10_000, SEED)).unwrap();
    let bound_ok = single <= 1.0 + 1e-9 && pair <= 1.0 + 1e-9;
    ensure(
        failures == 0 && bound_ok,
        format!("axiom failures {failures}/10000, max ratio single {single:.4}, pairwise {pair:.4}"),
    )
}

// ---------------------------------------------------------------- 3

fn integrator_oracle() -> Verdict {
    let ou = scalar(-1.0, Pointwise::Zero, 1.0);
    let cfg = SchemeConfig::new(1e-3, 2.0, SEED).forced();
    let xi = cfg.initial_segment(&ou, &InitialData::constant(&[1.0])).unwrap();
    let ens = simulate_ensemble(&ou, &xi, 10_000, &cfg, &EnsembleOptions::at(&[2.0])).unwrap();
    let cp = &ens.checkpoints[0];
    let mean = (-2.0f64).exp();
    let second = (-4.0f64).exp() + (1.0 - (-4.0f64).exp()) / 2.0;
    let z_mean = (cp.mean[0] - mean) / cp.mean_stderr[0];
    let z_second = (cp.second_moment.estimate - second) / cp.second_moment.stderr;

    let h = [0.1, 0.05, 0.025, 0.0125];
    let probe_cfg = SchemeConfig::new(0.1, 1.0, SEED).forced();
    let init = InitialData::constant(&[1.0]);
    let mult = strong_order_probe(&scalar(-1.0, Pointwise::IdentityScale { scale: 1.0 }, 0.0), &init, &h, 1.0, 1000, &probe_cfg)
        .unwrap()
        .slope;
    let add = strong_order_probe(&scalar(-1.0, Pointwise::Zero, 1.0), &init, &h, 1.0, 1000, &probe_cfg).unwrap().slope;
    ensure(
        z_mean.abs() <= 3.0 && z_second.abs() <= 3.0 && (0.35..=0.65).contains(&mult) && (0.8..=1.2).contains(&add),
        format!(
            "E x(2) = {:.5} (z {z_mean:+.2}), E|x(2)|^2 = {:.5} (z {z_second:+.2}), order slopes: multiplicative {mult:.3}, additive {add:.3}",
            cp.mean[0], cp.second_moment.estimate
        ),
    )
}

// ---------------------------------------------------------------- 4

fn ledger_goldens() -> Verdict {
    let l = ConstantLedger::compute(&example(), EpsChoice::Search, None).unwrap();
    // hand evaluation: k = 1/4, mu(2r) = 2, lambda3 = 1 + √2, lambda4 = (1 + √2)/√2
    let (k, mu) = (0.25, 2.0);
    let l3 = 1.0 + sqrt2();
    let l4 = l3 / sqrt2();
    let rhs = 73.0 * l3 + 2.0 * 112.5 * mu + 73.0 * l4 * mu;
    let margin = 900.0 - rhs;
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * b.abs().max(1.0);
    let ok = close(l.m_const, 3.75)
        && close(l.m_const, (1.0 + k) * (1.0 + mu))
        && close(l.k1, 2.0 / 3.0)
        && close(l.k2, 16.0 / 9.0)
        && l.admissible
        && close(l.lambda_max, 0.5)
        && close(l.margin, margin)
        && (rhs - 875.5).abs() < 0.05;
    ensure(
        ok,
        format!(
            "M {}, k1 {:.6}, k2 {:.6}, admissible {}, lambda_max {}, margin {:.4} = 900 - {:.4}",
            l.m_const, l.k1, l.k2, l.admissible, l.lambda_max, l.margin, 900.0 - l.margin
        ),
    )
}

// ---------------------------------------------------------------- 5

const CHECKPOINTS: [f64; 5] = [1.0, 2.0, 4.0, 8.0, 16.0];

fn flagship_cfg() -> SchemeConfig {
    SchemeConfig::new(0.01, 16.0, SEED)
}

fn moment_bound() -> Verdict {
    let model = example();
    let ledger = ConstantLedger::compute(&model, EpsChoice::Search, None).unwrap();
    let cfg = flagship_cfg();
    let xi = cfg.initial_segment(&model, &InitialData::constant(&[1.0])).unwrap();
    let ens = simulate_ensemble(&model, &xi, 2000, &cfg, &EnsembleOptions::at(&CHECKPOINTS)).unwrap();
    let check = moment_bound_check(&ens, &ledger);
    let worst = check
        .points
        .iter()
        .filter_map(|p| p.bound.map(|b| p.estimate / b))
        .fold(0.0f64, f64::max);
    ensure(
        check.checked && check.pass,
        format!("{} checkpoints, {} violations, max estimate/bound {worst:.2e}", check.points.len(), check.counterexamples.len()),
    )
}

// ---------------------------------------------------------------- 6

fn coupling() -> Verdict {
    let model = example();
    let ledger = ConstantLedger::compute(&model, EpsChoice::Search, None).unwrap();
    let lambda = ledger.lambda.ok_or("ledger has no lambda")?;
    let cfg = flagship_cfg();
    let xi = cfg.initial_segment(&model, &InitialData::constant(&[1.0])).unwrap();
    let eta = cfg.initial_segment(&model, &InitialData::constant(&[0.0])).unwrap();
    let cps: Vec<f64> = (1..=16).map(f64::from).collect();
    let rep = coupling_decay(&model, &xi, &eta, &cfg, &CouplingOptions::new(2000, &cps)).unwrap();
    let rate = rep.fit.as_ref().map(|f| f.rate).ok_or_else(|| format!("no fit: {:?}", rep.fit_note))?;
    let seg = segment_coupling_bound_check(&rep, &ledger, cfg.h);
    ensure(
        rate >= 0.8 * lambda && seg.checked && seg.pass,
        format!(
            "envelope rate {rate:.3} vs 0.8*lambda = {:.3}, segment bound violations {}",
            0.8 * lambda,
            seg.counterexamples.len()
        ),
    )
}

// ---------------------------------------------------------------- 7

fn frozen() -> NeutralModel {
    scalar(0.0, Pointwise::Zero, 0.0)
}

fn distribution() -> Verdict {
    let model = example();
    let cfg = flagship_cfg();
    let xis = [1.0, 0.0].map(|v| cfg.initial_segment(&model, &InitialData::constant(&[v])).unwrap());
    let mut opts = DistributionOptions::new(&CHECKPOINTS, 2000);
    opts.family_seed = SEED;
    let rep = stability_in_distribution_report(&model, &xis, &cfg, &opts).unwrap();

    let cfg0 = SchemeConfig::new(0.01, 16.0, SEED).forced();
    let m0 = frozen();
    let xis0 = [1.0, 0.0].map(|v| cfg0.initial_segment(&m0, &InitialData::constant(&[v])).unwrap());
    let mut opts0 = DistributionOptions::new(&CHECKPOINTS, 200);
    opts0.family_seed = SEED;
    let control = stability_in_distribution_report(&m0, &xis0, &cfg0, &opts0).unwrap();
    let flat = control.cross.iter().all(|c| (c - 1.0).abs() <= 0.02);
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(" ");
    ensure(
        rep.cross_decreasing && rep.final_within_floor && flat,
        format!(
            "cross [{}], floor [{}], control [{}]",
            fmt(&rep.cross),
            fmt(&rep.noise_floor),
            fmt(&control.cross)
        ),
    )
}

// ---------------------------------------------------------------- 8

fn calibration() -> Verdict {
    let mut got = Vec::new();
    let mut ok = true;
    for (gap, expect) in [(0.5, 0.5), (1.0, 1.0), (5.0, 2.0)] {
        let a = vec![Segment::constant(0.05, 200, &[0.0, 0.0]).unwrap()];
        let b = vec![Segment::constant(0.05, 200, &[gap, 0.0]).unwrap()];
        let e = empirical_dl(&a, &b, 0.25, 1000, SEED).unwrap().estimate;
        ok &= (e - expect).abs() <= 0.05;
        got.push(format!("{gap} -> {e:.4}"));
    }
    ensure(ok, got.join(", "))
}

// ---------------------------------------------------------------- 9

fn artifacts(cfg: &ExperimentConfig, threads: usize) -> BTreeMap<String, Vec<u8>> {
    let dir = tempfile::tempdir().unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
    let out = pool.install(|| run_config(cfg, dir.path())).unwrap();
    out.files.iter().map(|f| (f.clone(), fs::read(dir.path().join(f)).unwrap())).collect()
}

fn determinism() -> Verdict {
    let mut p = Example5Params::new(450.0, sqrt2(), 1.0, 0.25);
    p.n_paths = 200;
    p.checkpoints = vec![1.0, 2.0, 4.0];
    p.family_size = 300;
    p.check.trials = 2000;
    let example = ExperimentConfig {
        model: None,
        scheme: None,
        experiment: Experiment::Example5(p),
        master_seed: SEED,
        output_dir: None,
    };
    let ou = nsfde_cli::parse_config(
        r#"{
          "model": {"dim": 1, "r": 0.25, "measure": {"exp": [{"rho": 1.0, "w": 1.0}]},
                    "drift": {"a": -1.0}, "diffusion": {"sigma0": 1.0},
                    "declared": {"k": 0.5, "lambda1": 1.0, "lambda2": 1.0, "lambda3": 1.0, "lambda4": 1.0}},
          "scheme": {"h": 0.01, "T": 2.0, "force": true},
          "experiment": {"kind": "simulate", "n_paths": 500, "checkpoints": [1.0, 2.0], "invariant_paths": 2, "write_path": true},
          "master_seed": 5
        }"#,
    )
    .unwrap();
    let mut compared = 0;
    for cfg in [&example, &ou] {
        let base = artifacts(cfg, 1);
        for k in [4, 8] {
            let other = artifacts(cfg, k);
            if other != base {
                let diff: Vec<_> = base.keys().filter(|f| base.get(*f) != other.get(*f)).cloned().collect();
                return Err(format!("{k} threads differ from 1 thread in {diff:?}"));
            }
        }
        compared += base.len();
    }
    Ok(format!("{compared} artifacts byte-identical under 1, 4 and 8 threads"))
}

// ----------------------------------------------------------------

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        (1, "moment closed forms", 10, moments),
        (2, "norm axioms and neutral-map bounds", 30, norms_and_neutral_bounds),
        (3, "integrator oracle and strong order", 180, integrator_oracle),
        (4, "constant ledger goldens", 1, ledger_goldens),
        (5, "second-moment bound", 300, moment_bound),
        (6, "coupling decay", 300, coupling),
        (7, "stability in distribution", 300, distribution),
        (8, "d_L calibration", 10, calibration),
        (9, "determinism across thread counts", 120, determinism),
    ];
    let filter: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (n, name, budget, run) in criteria {
        if !filter.is_empty() && !filter.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let res = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let took = start.elapsed();
        let (res, over) = match res {
            Ok(msg) if took > Duration::from_secs(budget) => (Err(msg), true),
            r => (r, false),
        };
        let (tag, msg) = match res {
            Ok(m) => ("PASS", m),
            Err(m) => {
                failed += 1;
                ("FAIL", m)
            }
        };
        let time = format!("{:.1}s of {budget}s{}", took.as_secs_f64(), if over { ", over budget" } else { "" });
        println!("criterion {n} [{name}]: {tag}: {msg} ({time})");
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criterion/criteria failed");
        ExitCode::FAILURE
    }
}
