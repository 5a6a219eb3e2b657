use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use crysplas::config::{ExperimentConfig, Gate, SystemsSpec};
use crysplas::crystal::validate_systems;
use crysplas::energy::{
    constant_weights, evaluate, gnd_energy, slip_power_per_plane, undulating_energy,
    upper_bound_flat, ElasticModel, Model,
};
use crysplas::io::{systems_to_json, write_displacement_csv, write_slip_csv, write_table};
use crysplas::laminate::{build_laminate, convergence_study, fitted_rate, laminate_limit, LaminationPlan};
use crysplas::oracle::random::{self, SmoothScalar};
use crysplas::oracle::{
    chain_check, cofactor_identity_check, curl_lower_bound_check, div_bound_check, example_41, example_52, exclusion_check,
    BoxCover, Ex41Options, Ex52Options, FrameTransform, Verdict,
};
use crysplas::solve::{minimize, Boundary};
use crysplas::{Error, SlipField64};

use crate::args::{Cli, Command, ElasticArg, EnergyCmd, ExampleCmd, LaminateCmd, ModelArg, OracleCmd, SystemsCmd};
use crate::output::Outputs;
use crate::Failure;

type Run = std::result::Result<(), Failure>;

fn load(cli: &Cli) -> crysplas::Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    let o = &cli.overrides;
    if let Some(s) = &o.systems {
        cfg.systems = SystemsSpec::Preset(s.clone());
    }
    if let Some(v) = o.p {
        cfg.params.p = v;
    }
    if let Some(v) = o.q {
        cfg.density.q = v;
    }
    if let Some(v) = o.sigma {
        cfg.params.sigma = v;
    }
    if let Some(v) = o.tau {
        cfg.params.tau = v;
    }
    if let Some(v) = o.eps_reg {
        cfg.params.eps_reg = v;
    }
    if let Some(v) = o.seed {
        cfg.seed = v;
    }
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    Ok(cfg)
}

pub fn run(cli: Cli) -> Run {
    let Some(command) = &cli.command else {
        return Err(Failure::Input { kind: "usage", reason: "no command given (see --help)".into() });
    };
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| Failure::Input { kind: "config", reason: e.to_string() })?;
    }
    let mut cfg = load(&cli)?;
    let mut out = Outputs::new(&cfg.out);
    let verdict = match command {
        Command::Systems { action: SystemsCmd::Validate } => systems_validate(&cfg, &mut out)?,
        Command::Energy { action: EnergyCmd::Eval { model, elastic, lambda } } => {
            energy_eval(&cfg, &mut out, *model, *elastic, *lambda)?
        }
        Command::Laminate { action } => laminate(&mut cfg, &mut out, action)?,
        Command::Minimize(a) => {
            if let Some(g) = a.gamma {
                let mut s = cfg.solver_config();
                s.boundary = Boundary::shear(g);
                cfg.solver = Some(s);
            }
            if let Some(m) = a.max_outer {
                let mut s = cfg.solver_config();
                s.max_outer = m;
                cfg.solver = Some(s);
            }
            run_minimize(&cfg, &mut out)?
        }
        Command::Oracle { action } => oracle(&cfg, &mut out, action)?,
        Command::Example { action } => example(&cfg, &mut out, action, cli.overrides.p)?,
    };
    out.manifest(&json!({ "args": command, "overrides": &cli.overrides }), &cfg, cfg.seed)?;
    match verdict {
        None => Ok(()),
        Some(reason) => Err(Failure::Check(reason)),
    }
}

/// `Some(reason)` when the command ran but its check failed.
type Outcome = std::result::Result<Option<String>, Failure>;

fn failed_if(cond: bool, reason: impl FnOnce() -> String) -> Option<String> {
    cond.then(reason)
}

fn systems_validate(cfg: &ExperimentConfig, out: &mut Outputs) -> Outcome {
    let set = cfg.systems()?;
    let report = validate_systems(&set);
    let pairs = cfg.pairs(&set).err().map(|e| e.to_string());
    let doc: serde_json::Value = serde_json::from_str(&systems_to_json(&set)?).map_err(Error::from)?;
    let pass = report.passed() && pairs.is_none();
    out.json("systems.json", &json!({ "pass": pass, "systems": doc, "report": report, "pairs_error": pairs }))?;
    Ok(failed_if(!pass, || format!("slip systems invalid: {report:?}")))
}

fn energy_eval(cfg: &ExperimentConfig, out: &mut Outputs, model: ModelArg, elastic: ElasticArg, lambda: Option<f64>) -> Outcome {
    let core = match model {
        ModelArg::Nonlinear => Model::Nonlinear,
        ModelArg::Linear => Model::Linear,
        ModelArg::Relaxed => Model::Relaxed,
        ModelArg::Regularized => Model::Regularized,
        ModelArg::Lb => Model::LowerBound,
        ModelArg::Ub1 | ModelArg::Undulating => Model::UpperBoundFlat,
    };
    cfg.validate_model(core)?;
    let el = match (model, elastic) {
        (ModelArg::Nonlinear, _) | (_, ElasticArg::Nonlinear) => {
            Gate::Nonlinear.check(cfg.params.p, cfg.density.q)?;
            ElasticModel::Nonlinear(cfg.density.clone())
        }
        _ => ElasticModel::Linear,
    };
    let set = cfg.systems()?;
    let pairs = cfg.pairs(&set)?;
    let sf = cfg.slip_field()?;
    let u = cfg.displacement()?;
    let report = match model {
        ModelArg::Ub1 => upper_bound_flat(&u, &sf, &pairs, &cfg.params, &el)?,
        ModelArg::Undulating => {
            let l = lambda.unwrap_or(cfg.laminate.lambda);
            let w = constant_weights(&sf, l);
            let (report, parts) = undulating_energy(&u, &sf, &pairs, &w, &cfg.params, &el)?;
            out.json("undulating_parts.json", &parts)?;
            report
        }
        _ => evaluate(core, &u, &sf, Some(&pairs), &cfg.params, &el)?,
    };
    out.json("energy.json", &report)?;
    Ok(failed_if(!report.feasible, || "state violates the side condition; total is inf".into()))
}

fn laminate(cfg: &mut ExperimentConfig, out: &mut Outputs, action: &LaminateCmd) -> Outcome {
    cfg.validate(Gate::Evaluate)?;
    let set = cfg.systems()?;
    let pairs = cfg.pairs(&set)?;
    let sf = cfg.slip_field()?;
    let params = cfg.params.clone();
    match action {
        LaminateCmd::Build { level, lambda } => {
            if let Some(n) = level {
                cfg.laminate.level = *n;
            }
            if let Some(l) = lambda {
                cfg.laminate.lambda = *l;
            }
            let plan = LaminationPlan::uniform(cfg.laminate.level, pairs.clone(), cfg.laminate.lambda)?;
            let lam = build_laminate(&sf, &plan)?;
            let hardening: f64 = slip_power_per_plane(&lam, params.p).iter().sum();
            let gnd = gnd_energy(&lam)?;
            let limit = laminate_limit(&sf, &pairs, &constant_weights(&sf, cfg.laminate.lambda), &params)?;
            out.with("laminate_slip.csv", |b| write_slip_csv(&lam, b))?;
            out.json(
                "laminate.json",
                &json!({
                    "level": plan.level,
                    "lambda": cfg.laminate.lambda,
                    "thickness": plan.thickness(),
                    "hardening": hardening,
                    "gnd": gnd,
                    "plastic": params.tau * hardening + params.sigma * gnd,
                    "predicted_limit": limit,
                }),
            )?;
        }
        LaminateCmd::Study { from, to, lambda } => {
            let [a, b] = &mut cfg.laminate.levels;
            if let Some(v) = from {
                *a = *v;
            }
            if let Some(v) = to {
                *b = *v;
            }
            if let Some(l) = lambda {
                cfg.laminate.lambda = *l;
            }
            let [lo, hi] = cfg.laminate.levels;
            if lo == 0 || lo > hi {
                return Err(Error::Config(format!("level range {lo}..={hi} is empty or starts at 0")).into());
            }
            let plan = LaminationPlan::uniform(lo, pairs, cfg.laminate.lambda)?;
            let table = convergence_study(&sf, &cfg.displacement()?, &plan, lo..=hi, &params)?;
            out.with("convergence.csv", |b| write_table(&table, b))?;
            out.json("convergence.json", &json!({ "rows": table, "fitted_rate": finite(fitted_rate(&table)) }))?;
        }
    }
    Ok(None)
}

fn finite(x: f64) -> serde_json::Value {
    if x.is_finite() {
        json!(x)
    } else {
        json!(null)
    }
}

fn run_minimize(cfg: &ExperimentConfig, out: &mut Outputs) -> Outcome {
    cfg.validate_model(Model::SinglePlaneLinear)?;
    let solver = cfg.solver_config();
    let template = SlipField64::zeros(&cfg.grid, &cfg.systems()?);
    let trace = minimize(&solver, &template)?;
    let totals = trace.totals();
    let monotone = totals.windows(2).all(|w| w[1] <= w[0] + 1e-10);
    let feasible = trace.feasible.iter().all(|f| *f);
    out.with("trace.csv", |b| write_table(&trace.rows(), b))?;
    out.with("slip.csv", |b| write_slip_csv(&trace.s, b))?;
    out.with("displacement.csv", |b| write_displacement_csv(&trace.u, b))?;
    out.json(
        "minimize.json",
        &json!({
            "stop": trace.stop,
            "iterations": trace.reports.len() - 1,
            "monotone": monotone,
            "feasible": feasible,
            "final": trace.reports.last(),
            "steps": trace.steps,
            "rejections": trace.rejections,
        }),
    )?;
    Ok(failed_if(!(monotone && feasible), || format!("trace monotone {monotone}, feasible {feasible}")))
}

fn verdict<D: Serialize>(out: &mut Outputs, name: &str, pass: bool, worst: f64, details: &D) -> Outcome {
    out.json(&format!("oracle_{name}.json"), &Verdict::new(pass, worst, details))?;
    Ok(failed_if(!pass, || format!("oracle {name} failed (worst {worst:e})")))
}

fn plane_pair(cfg: &ExperimentConfig, planes: &[usize]) -> crysplas::Result<([usize; 2], FrameTransform<f64>)> {
    let set = cfg.systems()?;
    let [i, j] = [planes[0], planes[1]];
    if i == j || i >= set.len() || j >= set.len() {
        return Err(Error::Config(format!("plane pair [{i}, {j}] invalid for {} planes", set.len())));
    }
    Ok(([i, j], FrameTransform::from_normals(set.normal(i), set.normal(j))?))
}

fn oracle(cfg: &ExperimentConfig, out: &mut Outputs, action: &OracleCmd) -> Outcome {
    cfg.validate(Gate::Evaluate)?;
    let set = cfg.systems()?;
    let g = &cfg.grid;
    let given = cfg.fields.slip.is_some();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let suite = |count: usize| if given { 1 } else { count };
    match action {
        OracleCmd::Cof(s) => {
            let mut worst = 0.0f64;
            for _ in 0..suite(s.count) {
                let (y, sf) = if given {
                    (cfg.displacement()?, cfg.slip_field()?)
                } else {
                    (random::affine_deformation(&mut rng, g), random::single_plane_field(&mut rng, g, &set, 0.2))
                };
                worst = worst.max(cofactor_identity_check(&y, &sf)?);
            }
            verdict(out, "cof", worst <= 1e-12, worst, &json!({ "states": suite(s.count), "tolerance": 1e-12 }))
        }
        OracleCmd::Div(s) => {
            let (mut violations, mut worst) = (0usize, f64::NEG_INFINITY);
            for _ in 0..suite(s.count) {
                let sf = if given { cfg.slip_field()? } else { random::in_plane_field(&mut rng, g, &set) };
                for j in 0..sf.planes() {
                    let d = div_bound_check(&sf, j)?;
                    violations += d.div.iter().zip(&d.bound).filter(|(a, b)| a.abs() > **b).count();
                    worst = worst.max(d.violation);
                }
            }
            verdict(out, "div", violations == 0, worst, &json!({ "fields": suite(s.count), "violations": violations }))
        }
        OracleCmd::Curl { suite: s, pair } => {
            let (planes, tr) = plane_pair(cfg, &pair.planes)?;
            let mut reports = Vec::new();
            for _ in 0..suite(s.count) {
                let sf = if given { cfg.slip_field()? } else { random::in_plane_field(&mut rng, g, &set) };
                reports.push(curl_lower_bound_check(&sf, planes, &tr)?);
            }
            let pass = reports.iter().all(|r| r.pass);
            let worst = reports.iter().map(|r| r.margin).fold(f64::INFINITY, f64::min);
            verdict(out, "curl", pass, worst, &json!({ "transform": tr, "reports": reports }))
        }
        OracleCmd::Exclusion { suite: s, pair, infeasible, l, delta } => {
            let (planes, tr) = plane_pair(cfg, &pair.planes)?;
            let cover = BoxCover::uniform(g, tr, *l, *delta)?;
            if given {
                let sf = cfg.slip_field()?;
                return match exclusion_check(&sf, planes, &cover, true) {
                    Ok(r) => verdict(out, "exclusion", r.pass, r.failed_slices as f64, &r),
                    Err(e @ Error::Infeasible { .. }) => {
                        verdict(out, "exclusion", false, f64::NAN, &json!({ "rejected_at_gate": e.to_string() }))
                    }
                    Err(e) => Err(e.into()),
                };
            }
            let mut reports = Vec::new();
            for _ in 0..s.count {
                let sf = random::two_plane_feasible(&mut rng, g, &set_pair(&set, planes));
                reports.push(exclusion_check(&remap(&sf, &set, planes), planes, &cover, false)?);
            }
            let mut rejected = 0;
            for _ in 0..*infeasible {
                let bad = random::two_plane_infeasible(&mut rng, g, &set_pair(&set, planes), 1);
                if matches!(exclusion_check(&remap(&bad, &set, planes), planes, &cover, false), Err(Error::Infeasible { .. })) {
                    rejected += 1;
                }
            }
            let failed: usize = reports.iter().map(|r| r.failed_slices).sum();
            let pass = reports.iter().all(|r| r.pass) && rejected == *infeasible;
            verdict(
                out,
                "exclusion",
                pass,
                failed as f64,
                &json!({
                    "feasible_fields": s.count,
                    "feasible_passed": reports.iter().filter(|r| r.pass).count(),
                    "failed_slices": failed,
                    "infeasible_fields": infeasible,
                    "rejected_at_gate": rejected,
                    "reports": reports,
                }),
            )
        }
        OracleCmd::Chain(s) => {
            let pairs = cfg.pairs(&set)?;
            let el = ElasticModel::Linear;
            let mut reports = Vec::new();
            for _ in 0..suite(s.count) {
                let (u, sf) = if given {
                    (cfg.displacement()?, cfg.slip_field()?)
                } else {
                    let j = rand::Rng::gen_range(&mut rng, 0..set.len());
                    let (f1, f2) = (SmoothScalar::sample(&mut rng), SmoothScalar::sample(&mut rng));
                    let pair = pairs[j];
                    let sf = SlipField64::from_fn(g, &set, |k, x| {
                        if k == j {
                            pair.slip(f1.eval(x), f2.eval(x))
                        } else {
                            crysplas::Vec3f::zero()
                        }
                    });
                    (crysplas::DisplacementField64::zeros(g), sf)
                };
                reports.push(chain_check(&u, &sf, &pairs, &cfg.params, &el)?);
            }
            let pass = reports.iter().all(|r| r.pass);
            let worst = reports.iter().map(|r| r.gap / r.upper_flat.abs().max(1.0)).fold(f64::NEG_INFINITY, f64::max);
            verdict(out, "chain", pass, worst, &json!({ "reports": reports }))
        }
    }
}

/// The two selected planes as a two-plane set.
fn set_pair(set: &crysplas::SlipSystemSet64, planes: [usize; 2]) -> crysplas::SlipSystemSet64 {
    crysplas::SlipSystemSet64::new(planes.iter().map(|&j| set.planes[j].clone()).collect())
}

/// Embeds a two-plane field into the full set at positions `planes`.
fn remap(sf: &SlipField64, set: &crysplas::SlipSystemSet64, planes: [usize; 2]) -> SlipField64 {
    let mut full = SlipField64::zeros(&sf.grid, set);
    for (k, &j) in planes.iter().enumerate() {
        full.slips[j] = sf.slips[k].clone();
    }
    full
}

fn example(cfg: &ExperimentConfig, out: &mut Outputs, action: &ExampleCmd, p: Option<f64>) -> Outcome {
    match action {
        ExampleCmd::Ex41 { x, eps, nodes } => {
            let r = example_41::<f64>(&Ex41Options { x: *x, eps: *eps, nodes: *nodes })?;
            out.json("ex41.json", &r)?;
        }
        ExampleCmd::Ex52 { widths, h } => {
            let mut o = Ex52Options::new(p.unwrap_or(1.0));
            if let Some(w) = widths {
                o.widths = w.clone();
            }
            if let Some(h) = h {
                o.h = *h;
            }
            o.sigma = cfg.params.sigma;
            o.tau = cfg.params.tau;
            let r = example_52::<f64>(&o)?;
            out.with("ex52.csv", |b| write_table(&r.rows, b))?;
            out.json("ex52.json", &r)?;
        }
    }
    Ok(None)
}
