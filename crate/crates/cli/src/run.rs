//! Executes one experiment and writes its artifacts.

use std::path::Path;

use anyhow::{bail, Context};
use serde_json::{json, Value};

use nsfde_core::integrator::PathSimulator;
use nsfde_core::lab::bounds::BoundCheck;
use nsfde_core::lab::invariants::{
    check_path_invariants, coupling_bound_check, moment_bound_check, segment_bound_check,
    segment_coupling_bound_check,
};
use nsfde_core::lab::write_curve_csv;
use nsfde_core::model::checks::neutral_bound_ratios;
use nsfde_core::model::{monotone_check, verify_h1, verify_h2_diffusion, verify_h2_drift};
use nsfde_core::{
    coupling_decay, example5_threshold, simulate_ensemble, stability_in_distribution_report,
    strong_order_probe, ConstantLedger, CouplingOptions, DistributionOptions, EnsembleOptions,
    InitialData, NeutralModel, SchemeConfig,
};

use crate::config::{
    CheckSection, Example5Params, Experiment, ExperimentConfig, LedgerSection, SchemeSection,
};
use crate::output::{ArtifactDir, Verdict};

/// Fitted coupling rates below this fraction of the ledger `λ` count as a
/// violation.
pub const RATE_FRACTION: f64 = 0.8;

#[derive(Debug)]
pub struct RunOutcome {
    pub verdict: Verdict,
    pub files: Vec<String>,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        self.verdict.exit_code()
    }
}

struct Ctx<'a> {
    out: &'a mut ArtifactDir,
    verdict: &'a mut Verdict,
    seed: u64,
}

/// Runs `cfg`, writing `report.json` and any curves into `out`.
pub fn run_config(cfg: &ExperimentConfig, out: &Path) -> anyhow::Result<RunOutcome> {
    let mut dir = ArtifactDir::create(out)?;
    let mut verdict = Verdict::new();
    let mut ctx = Ctx { out: &mut dir, verdict: &mut verdict, seed: cfg.master_seed };
    let (kind, model_name, body) = match &cfg.experiment {
        Experiment::Example5(p) => ("example5", None, example5(&mut ctx, p, cfg.scheme.as_ref())?),
        exp => {
            let spec = cfg.model.clone().context("`model` is required for this experiment")?;
            let model = NeutralModel::new(spec)?;
            let name = model.name();
            let scheme = || -> anyhow::Result<SchemeConfig> {
                Ok(cfg.scheme.as_ref().context("`scheme` is required for this experiment")?.with_seed(cfg.master_seed))
            };
            let body = match exp {
                Experiment::Check { check, ledger } => {
                    let l = ledger_of(&model, ledger)?;
                    json!({ "ledger": l, "checks": checks(&mut ctx, &model, &l, check)? })
                }
                Experiment::Constants { ledger } => {
                    let l = ledger_of(&model, ledger)?;
                    note_admissibility(&mut ctx, &l);
                    json!({ "ledger": l })
                }
                Experiment::Simulate { initial, n_paths, checkpoints, ledger, invariant_paths, write_path } => {
                    let l = ledger_of(&model, ledger)?;
                    note_admissibility(&mut ctx, &l);
                    let init = initial.clone().unwrap_or_else(|| ones(&model, 1.0));
                    let sim = SimulateArgs { n_paths: *n_paths, checkpoints, invariant_paths: *invariant_paths, write_path: *write_path };
                    simulate(&mut ctx, &model, &l, &scheme()?, &init, &sim)?
                }
                Experiment::Coupling { xi, eta, n_pairs, checkpoints, window, burn_in, ledger } => {
                    let l = ledger_of(&model, ledger)?;
                    note_admissibility(&mut ctx, &l);
                    let xi = xi.clone().unwrap_or_else(|| ones(&model, 1.0));
                    let eta = eta.clone().unwrap_or_else(|| ones(&model, 0.0));
                    let opts = CouplingOptions { n_pairs: *n_pairs, checkpoints: checkpoints.clone(), window: *window, burn_in: *burn_in };
                    coupling(&mut ctx, &model, &l, &scheme()?, &xi, &eta, &opts)?
                }
                Experiment::Distribution { initial, n_paths, checkpoints, family_size, segment_stride, ledger } => {
                    let l = ledger_of(&model, ledger)?;
                    note_admissibility(&mut ctx, &l);
                    let opts = DistributionOptions {
                        checkpoints: checkpoints.clone(),
                        n_paths: *n_paths,
                        family_size: *family_size,
                        family_seed: cfg.master_seed,
                        segment_stride: *segment_stride,
                    };
                    distribution(&mut ctx, &model, &l, &scheme()?, initial, &opts)?
                }
                Experiment::Order { initial, h_list, horizon, n_paths } => {
                    let init = initial.clone().unwrap_or_else(|| ones(&model, 1.0));
                    let base = cfg.scheme.clone().unwrap_or_else(|| SchemeSection::new(h_list[0], *horizon));
                    let rep = strong_order_probe(&model, &init, h_list, *horizon, *n_paths, &base.with_seed(cfg.master_seed))?;
                    ctx.out.write_with("order.csv", |buf| {
                        let mut w = csv::Writer::from_writer(buf);
                        w.write_record(["h", "rms_error"])?;
                        for (h, e) in rep.h.iter().zip(&rep.rms_error) {
                            w.write_record([h.to_string(), e.to_string()])?;
                        }
                        w.flush()?;
                        Ok(())
                    })?;
                    json!({ "order": rep })
                }
                Experiment::Example5(_) => unreachable!(),
            };
            (kind_name(exp), Some(name), body)
        }
    };
    let mut report = json!({
        "kind": kind,
        "master_seed": cfg.master_seed,
        "verdict": &verdict,
    });
    if let Some(name) = model_name {
        report["model"] = Value::String(name);
    }
    if let (Value::Object(r), Value::Object(b)) = (&mut report, body) {
        r.extend(b);
    }
    dir.write_json("report.json", &report)?;
    Ok(RunOutcome { verdict, files: dir.files().to_vec() })
}

fn kind_name(exp: &Experiment) -> &'static str {
    match exp {
        Experiment::Check { .. } => "check",
        Experiment::Constants { .. } => "constants",
        Experiment::Simulate { .. } => "simulate",
        Experiment::Coupling { .. } => "coupling",
        Experiment::Distribution { .. } => "distribution",
        Experiment::Order { .. } => "order",
        Experiment::Example5(_) => "example5",
    }
}

fn ones(model: &NeutralModel, v: f64) -> InitialData {
    InitialData::constant(&vec![v; model.dim()])
}

fn ledger_of(model: &NeutralModel, s: &LedgerSection) -> anyhow::Result<ConstantLedger> {
    Ok(ConstantLedger::compute(model, s.eps, s.lambda)?)
}

fn note_admissibility(ctx: &mut Ctx<'_>, l: &ConstantLedger) {
    if !l.admissible {
        ctx.verdict.finding(format!("ledger inadmissible: {}", l.reasons.join("; ")));
    }
}

fn checks(
    ctx: &mut Ctx<'_>,
    model: &NeutralModel,
    ledger: &ConstantLedger,
    s: &CheckSection,
) -> anyhow::Result<Value> {
    let cc = s.with_seed(ctx.seed);
    let reports = [
        verify_h1(model, &cc)?,
        verify_h2_drift(model, &cc)?,
        verify_h2_diffusion(model, &cc)?,
        monotone_check(model, ledger, &cc)?,
    ];
    for r in &reports {
        ctx.verdict.require(
            r.pass,
            format!("{} falsified at trial {} (relative excess {:.3e})", r.condition, r.worst_trial, r.max_excess),
        );
    }
    let (single, pair) = neutral_bound_ratios(model, &cc)?;
    let bound_ok = single <= 1.0 + cc.tol && pair <= 1.0 + cc.tol;
    ctx.verdict.require(bound_ok, format!("neutral bound ratios {single:.6} / {pair:.6} exceed 1"));
    Ok(json!({
        "conditions": reports,
        "neutral_bound": { "single_ratio": single, "pair_ratio": pair, "pass": bound_ok },
    }))
}

fn record_bound(ctx: &mut Ctx<'_>, check: &BoundCheck, file: &str) -> anyhow::Result<()> {
    ctx.out.write_with(file, |buf| Ok(check.write_csv(buf)?))?;
    if !check.checked {
        ctx.verdict.finding(format!("{}: no ledger bound available", check.name));
    }
    ctx.verdict.require(
        check.pass,
        format!("{}: {} checkpoint(s) above the ledger bound", check.name, check.counterexamples.len()),
    );
    Ok(())
}

struct SimulateArgs<'a> {
    n_paths: usize,
    checkpoints: &'a [f64],
    invariant_paths: usize,
    write_path: bool,
}

fn simulate(
    ctx: &mut Ctx<'_>,
    model: &NeutralModel,
    ledger: &ConstantLedger,
    cfg: &SchemeConfig,
    init: &InitialData,
    args: &SimulateArgs<'_>,
) -> anyhow::Result<Value> {
    let xi = cfg.initial_segment(model, init)?;
    let ens = simulate_ensemble(model, &xi, args.n_paths, cfg, &EnsembleOptions::at(args.checkpoints))?;
    let moment = moment_bound_check(&ens, ledger);
    let segment = segment_bound_check(&ens, ledger);
    record_bound(ctx, &moment, "second_moment.csv")?;
    record_bound(ctx, &segment, "segment_norm.csv")?;

    let sim = PathSimulator::new(model, &xi, cfg)?;
    let mut invariants = Vec::new();
    for i in 0..args.invariant_paths.min(args.n_paths) {
        let (path, _) = sim.run_index(i as u64).map_err(|e| anyhow::anyhow!("path {i}: {e}"))?;
        let inv = check_path_invariants(model, &path, ledger)?;
        ctx.verdict.require(inv.pass, format!("pathwise inequality fails on path {i}"));
        invariants.push(inv);
    }
    if args.write_path {
        let (path, _) = sim.run_index(0)?;
        ctx.out.write_with("path_0.csv", |buf| Ok(path.write_csv(buf)?))?;
    }
    Ok(json!({
        "ledger": ledger,
        "ensemble": ens,
        "bounds": [moment, segment],
        "path_invariants": invariants,
    }))
}

fn coupling(
    ctx: &mut Ctx<'_>,
    model: &NeutralModel,
    ledger: &ConstantLedger,
    cfg: &SchemeConfig,
    xi: &InitialData,
    eta: &InitialData,
    opts: &CouplingOptions,
) -> anyhow::Result<Value> {
    let a = cfg.initial_segment(model, xi)?;
    let b = cfg.initial_segment(model, eta)?;
    let rep = coupling_decay(model, &a, &b, cfg, opts)?;
    let running = coupling_bound_check(&rep, ledger, cfg.h);
    let segment = segment_coupling_bound_check(&rep, ledger, cfg.h);
    record_bound(ctx, &running, "coupling_running_sup.csv")?;
    record_bound(ctx, &segment, "coupling_segment_norm.csv")?;
    ctx.out.write_with("coupling_envelope.csv", |buf| Ok(write_curve_csv(&rep.envelope, buf)?))?;

    let mut rate_ratio = None;
    match (&rep.fit, ledger.lambda) {
        (Some(fit), Some(lambda)) => {
            let q = fit.rate / lambda;
            rate_ratio = Some(q);
            ctx.verdict.require(
                q >= RATE_FRACTION,
                format!("coupling decay rate {:.4} is below {RATE_FRACTION}·λ = {:.4}", fit.rate, RATE_FRACTION * lambda),
            );
        }
        (None, _) if rep.initial_diff_norm_sq > 0.0 => {
            ctx.verdict.violation(rep.fit_note.clone().unwrap_or_else(|| "no decay fit".into()));
        }
        _ => {}
    }
    Ok(json!({
        "ledger": ledger,
        "coupling": rep,
        "rate_over_lambda": rate_ratio,
        "bounds": [running, segment],
    }))
}

fn distribution(
    ctx: &mut Ctx<'_>,
    model: &NeutralModel,
    ledger: &ConstantLedger,
    cfg: &SchemeConfig,
    initial: &[InitialData],
    opts: &DistributionOptions,
) -> anyhow::Result<Value> {
    let xis = initial.iter().map(|i| cfg.initial_segment(model, i)).collect::<Result<Vec<_>, _>>()?;
    let rep = stability_in_distribution_report(model, &xis, cfg, opts)?;
    ctx.out.write_with("distribution.csv", |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["t", "cross_dl", "noise_floor"])?;
        for ((t, c), f) in rep.checkpoints.iter().zip(&rep.cross).zip(&rep.noise_floor) {
            w.write_record([t.to_string(), c.to_string(), f.to_string()])?;
        }
        w.flush()?;
        Ok(())
    })?;
    if !rep.pass {
        if ledger.admissible {
            ctx.verdict.violation(format!("stability in distribution not observed: {}", rep.note));
        } else {
            ctx.verdict.finding(format!("no mixing observed for an inadmissible model: {}", rep.note));
        }
    }
    Ok(json!({ "ledger": ledger, "distribution": rep }))
}

fn example5(
    ctx: &mut Ctx<'_>,
    p: &Example5Params,
    scheme: Option<&SchemeSection>,
) -> anyhow::Result<Value> {
    let model = NeutralModel::example5(p.c, p.eps, p.rho, p.r, p.constants)?;
    let Some(&horizon) = p.checkpoints.last() else { bail!("example5 needs at least one checkpoint") };
    let cfg = scheme.cloned().unwrap_or_else(|| SchemeSection::new(0.01, horizon)).with_seed(ctx.seed);
    let ledger = ledger_of(&model, &p.ledger)?;
    let mu2r = model.measure().r_moment(2.0 * p.r);
    let threshold = if mu2r < 4.0 { Some(example5_threshold(p.eps, mu2r)?) } else { None };
    let check = checks(ctx, &model, &ledger, &p.check)?;
    note_admissibility(ctx, &ledger);

    let mut body = json!({
        "model": model.name(),
        "parameters": p,
        "mu2r": mu2r,
        "threshold": threshold,
        "above_threshold": threshold.map(|t| p.c > t),
        "checks": check,
        "ledger": ledger,
    });
    if !(ledger.admissible || cfg.force) {
        ctx.verdict.finding("simulations skipped: the ledger is not admissible");
        return Ok(body);
    }
    let sim = SimulateArgs { n_paths: p.n_paths, checkpoints: &p.checkpoints, invariant_paths: 4, write_path: false };
    let s = simulate(ctx, &model, &ledger, &cfg, &InitialData::constant(&[1.0]), &sim)?;
    let n_steps = (horizon.floor() as usize).max(1);
    let coupling_cps: Vec<f64> = (1..=n_steps).map(|i| i as f64).collect();
    let opts = CouplingOptions::new(p.n_paths, &coupling_cps);
    let c = coupling(ctx, &model, &ledger, &cfg, &InitialData::constant(&[1.0]), &InitialData::constant(&[0.0]), &opts)?;
    let dopts = DistributionOptions {
        checkpoints: p.checkpoints.clone(),
        n_paths: p.n_paths,
        family_size: p.family_size,
        family_seed: ctx.seed,
        segment_stride: 0,
    };
    let init = [InitialData::constant(&[1.0]), InitialData::constant(&[0.0])];
    let d = distribution(ctx, &model, &ledger, &cfg, &init, &dopts)?;
    body["simulate"] = json!({ "ensemble": s["ensemble"], "bounds": s["bounds"], "path_invariants": s["path_invariants"] });
    body["coupling"] = json!({ "report": c["coupling"], "rate_over_lambda": c["rate_over_lambda"], "bounds": c["bounds"] });
    body["distribution"] = d["distribution"].clone();
    Ok(body)
}
