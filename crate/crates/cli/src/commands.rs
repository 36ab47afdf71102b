//! One function per subcommand. Each fills the config's unset fields with
//! the values it actually used, so the echoed config reproduces the run.

use std::collections::BTreeMap;

use ergoflow_core::coeffs::{CoefficientFunction, RecurrenceReport};
use ergoflow_core::estimators::{
    exit_probability, gamma_birkhoff, ks_critical_one_sample, ks_distance, mean_and_se,
    two_point_rate_seeds, EXIT_HORIZON_FOCUSING_TIMES,
};
use ergoflow_core::flow::{advance, Direction, Ensemble, Scheme, StepOptions};
use ergoflow_core::measures::{
    boundary_classification, build_measures, spectral_gap_bound, trial_potential, MeasureTable,
};
use ergoflow_core::noise::{grid_steps, NoisePath, Side};
use ergoflow_core::oracle::{fitted_order, ou_exact_xinf, strong_error, OuParams};
use ergoflow_core::pullback::{
    default_schedule, pullback_map, pullback_process, sample_xinf, schedule_steps, spde_residual,
    stagnation_bisect, XinfSample, DEFAULT_BISECTION_TOL, DEFAULT_XINF_TOL, PULLBACK_SCHEME,
};
use ergoflow_core::{make_model, validate_recurrence, DiffusionModel, ModelSpec, RecurrenceStatus};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::output::{fmt, Artifacts, Table};
use crate::CliError;

type Outcome = Result<Artifacts, (Artifacts, CliError)>;

pub fn default_out(command: &str) -> String {
    match command {
        "gamma" => "gamma.json".into(),
        "analyze" => "table.csv".into(),
        other => format!("{other}.csv"),
    }
}

pub fn run(command: &str, cfg: &mut RunConfig) -> Outcome {
    let mut art = Artifacts::default();
    let res = match command {
        "analyze" => analyze(cfg, &mut art),
        "simulate" => simulate(cfg, &mut art),
        "focusing" => focusing(cfg, &mut art),
        "gamma" => gamma(cfg, &mut art),
        "exit-prob" => exit_prob(cfg, &mut art),
        "sample-invariant" => sample_invariant(cfg, &mut art),
        "attractor" => attractor(cfg, &mut art),
        "gap" => gap(cfg, &mut art),
        "spde-residual" => spde(cfg, &mut art),
        "oracle-check" => oracle_check(cfg, &mut art),
        "dump-noise" => dump_noise(cfg, &mut art),
        other => Err(CliError::Config(format!("unknown command '{other}'"))),
    };
    match res {
        Ok(()) => Ok(art),
        Err(e) => Err((art, e)),
    }
}

/// Model that has passed the recurrence check, with its report.
fn recurrent_model(cfg: &RunConfig) -> Result<(DiffusionModel, RecurrenceReport), CliError> {
    let mut model = make_model(&cfg.model)?;
    let report = validate_recurrence(&mut model, cfg.window, cfg.divergence_cutoff);
    match &report.status {
        RecurrenceStatus::PositiveRecurrent => Ok((model, report)),
        RecurrenceStatus::Rejected(reason) => Err(CliError::Core(ergoflow_core::Error::NotRecurrent(reason.clone()))),
        RecurrenceStatus::Unchecked => unreachable!("validate_recurrence always sets a status"),
    }
}

fn setup(cfg: &RunConfig) -> Result<(DiffusionModel, MeasureTable, f64), CliError> {
    let (model, _) = recurrent_model(cfg)?;
    let table = build_measures(&model, cfg.window, cfg.n_grid)?;
    let gamma = table.gamma.finite("this command")?;
    Ok((model, table, gamma))
}

/// Smallest grid time at or above t.
fn grid_ceil(t: f64, dt: f64) -> f64 {
    let n = (t / dt - 1e-9).ceil().max(1.0);
    n * dt
}

fn seeds(cfg: &RunConfig, n: usize) -> Vec<u64> {
    (0..n as u64).map(|i| cfg.seed.wrapping_add(i)).collect()
}

fn threshold(cfg: &mut RunConfig, table: &MeasureTable) -> f64 {
    *cfg.escape_threshold.get_or_insert_with(|| table.escape_threshold())
}

fn schedule(cfg: &mut RunConfig, gamma: f64) -> Vec<f64> {
    cfg.schedule.get_or_insert_with(|| default_schedule(gamma)).clone()
}

fn analyze(cfg: &mut RunConfig, art: &mut Artifacts) -> Result<(), CliError> {
    let mut model = make_model(&cfg.model)?;
    let report = validate_recurrence(&mut model, cfg.window, cfg.divergence_cutoff);
    art.result = json!({ "recurrence": report });
    if let RecurrenceStatus::Rejected(reason) = &report.status {
        return Err(CliError::Core(ergoflow_core::Error::NotRecurrent(reason.clone())));
    }
    let table = build_measures(&model, cfg.window, cfg.n_grid)?;
    art.count("grid_points", table.grid.len() as u64);
    let mut t = Table::new(&[
        "x", "pi_pdf", "pi_cdf", "ln_psi2", "ln_scale_prime", "scale", "sharp_scale", "sharp_speed",
    ]);
    for i in 0..table.grid.len() {
        t.push(vec![
            fmt(table.grid[i]),
            fmt(table.pi_pdf(i)),
            fmt(table.pi_cdf[i]),
            fmt(table.ln_psi2[i]),
            fmt(table.ln_s_prime[i]),
            fmt(table.s[i]),
            fmt(table.sharp_scale[i]),
            fmt(table.sharp_speed[i]),
        ]);
    }
    art.table = Some(t);
    let gap = spectral_gap_bound(&table, &model)?;
    art.result = json!({
        "recurrence": report,
        "lambda": table.lambda,
        "gamma": table.gamma,
        "gamma_alt": table.gamma_alt,
        "quadrature_error": table.quadrature_error,
        "escape_threshold": table.escape_threshold(),
        "tail_mass": table.tail_mass(),
        "boundaries": boundary_classification(&table),
        "spectral_gap": gap,
    });
    Ok(())
}

fn simulate(cfg: &mut RunConfig, art: &mut Artifacts) -> Result<(), CliError> {
    let (model, table, _) = setup(cfg)?;
    let dt = cfg.dt;
    let t = *cfg.t.get_or_insert(10.0);
    let n = grid_steps(t, dt)?;
    let x0 = cfg.x0.get_or_insert_with(|| vec![-2.0, -1.0, 0.0, 1.0, 2.0]).clone();
    let direction = *cfg.direction.get_or_insert(Direction::Forward);
    let scheme = *cfg.scheme.get_or_insert(Scheme::Milstein);
    let every = *cfg.record_every.get_or_insert((n / 1000).max(1));
    let escape = match direction {
        Direction::Sharp => Some(threshold(cfg, &table)),
        Direction::Forward => cfg.escape_threshold,
    };
    let mut path = NoisePath::new(cfg.seed, dt)?;
    path.extend(Side::Plus, n)?;
    let view = path.view();
    let mut ens = Ensemble::new(&x0, dt);
    let opts = StepOptions {
        scheme,
        escape_threshold: escape,
        jacobian: direction == Direction::Forward,
    };
    let mut rows = Table::new(&["t", "x0", "x", "status", "log_jacobian", "log_jacobian_chain"]);
    let record = |ens: &Ensemble, rows: &mut Table| {
        let chain = ens.log_jacobian_chain(&table);
        for k in 0..ens.len() {
            rows.push(vec![
                fmt(ens.time()),
                fmt(x0[k]),
                fmt(ens.x[k]),
                ens.status[k].label().to_string(),
                fmt(ens.log_jacobian[k]),
                fmt(chain[k]),
            ]);
        }
    };
    record(&ens, &mut rows);
    let mut done = 0;
    let mut failure = None;
    while done < n {
        let take = every.min(n - done);
        if let Err(e) = advance(&model, &view, &mut ens, take, direction, opts) {
            failure = Some(e);
            break;
        }
        done += take;
        record(&ens, &mut rows);
    }
    art.count("steps", (done * x0.len()) as u64);
    art.table = Some(rows);
    art.result = json!({
        "final": ens.x,
        "status": ens.status.iter().map(|s| s.label()).collect::<Vec<_>>(),
        "order_violations": ens.order_violations,
    });
    match failure {
        Some(e) => Err(e.into()),
        None => Ok(()),
    }
}

fn focusing(cfg: &mut RunConfig, art: &mut Artifacts) -> Result<(), CliError> {
    let (model, table, gamma) = setup(cfg)?;
    let dt = cfg.dt;
    let t = *cfg.t.get_or_insert(grid_ceil(20f64.max(20.0 / gamma), dt));
    let a = *cfg.a.get_or_insert(-1.0);
    let b = *cfg.b.get_or_insert(1.0);
    let n = *cfg.paths.get_or_insert(50);
    let seeds = seeds(cfg, n);
    let (mean, per) = two_point_rate_seeds(&model, &table, &seeds, dt, a, b, t)?;
    art.count("steps", (2 * grid_steps(t, dt)? * n) as u64);
    let mut rows = Table::new(&["seed", "slope", "std_error", "r_squared", "switch_time"]);
    for (s, r) in seeds.iter().zip(&per) {
        rows.push(vec![
            s.to_string(),
            fmt(r.value),
            fmt(r.std_error),
            fmt(r.diagnostics["r_squared"]),
            fmt(r.diagnostics.get("switch_time").copied().unwrap_or(f64::NAN)),
        ]);
    }
    art.table = Some(rows);
    art.result = json!({
        "gamma_quadrature": gamma,
        "mean_slope": mean,
        "relative_error": (mean.value + gamma).abs() / gamma,
    });
    Ok(())
}

fn gamma(cfg: &mut RunConfig, art: &mut Artifacts) -> Result<(), CliError> {
    let (model, table, gamma) = setup(cfg)?;
    let dt = cfg.dt;
    let method = cfg.method.get_or_insert_with(|| "all".into()).clone();
    let mut doc = BTreeMap::new();
    let alt = table.gamma_alt.finite("gamma")?;
    doc.insert("quadrature", json!(gamma));
    doc.insert("quadrature_alt", json!(alt));
    doc.insert("forms_relative_difference", json!((gamma - alt).abs() / gamma));
    let mut checks = BTreeMap::new();
    checks.insert("forms_agree", (gamma - alt).abs() <= 1e-6 * gamma);
    if method == "birkhoff" || method == "all" {
        let t = *cfg.t.get_or_insert(grid_ceil(1000f64.max(1000.0 / gamma), dt));
        let r = gamma_birkhoff(&model, &table, cfg.seed, dt, t, cfg.burn_in)?;
        art.count("steps", grid_steps(t, dt)? as u64);
        let within = (r.value - gamma).abs() <= 3.0 * r.std_error;
        doc.insert("birkhoff", json!(r));
        checks.insert("birkhoff_within_3_se", within);
    }
    if method == "two-point" || method == "all" {
        let t = grid_ceil(20f64.max(20.0 / gamma), dt);
        let n = *cfg.paths.get_or_insert(50);
        let a = *cfg.a.get_or_insert(-1.0);
        let b = *cfg.b.get_or_insert(1.0);
        let (mean, _) = two_point_rate_seeds(&model, &table, &seeds(cfg, n), dt, a, b, t)?;
        art.count("steps", (2 * grid_steps(t, dt)? * n) as u64);
        let within = (mean.value + gamma).abs() <= (3.0 * mean.std_error).max(0.1 * gamma);
        doc.insert("two_point", json!(mean));
        doc.insert("two_point_horizon", json!(t));
        checks.insert("two_point_within", within);
    }
    if !["quadrature", "birkhoff", "two-point", "all"].contains(&method.as_str()) {
        return Err(CliError::Config(format!("at 'method': unknown method '{method}'")));
    }
    doc.insert("checks", json!(checks));
    art.result = json!(doc);
    Ok(())
}

fn exit_prob(cfg: &mut RunConfig, art: &mut Artifacts) -> Result<(), CliError> {
    let (model, table, gamma) = setup(cfg)?;
    let dt = cfg.dt;
    let th = threshold(cfg, &table);
    let t = *cfg.t.get_or_insert(grid_ceil(EXIT_HORIZON_FOCUSING_TIMES / gamma, dt));
    let n = *cfg.paths.get_or_insert(10_000);
    let x0 = cfg
        .x0
        .get_or_insert_with(|| {
            // ten points between the 5% and 95% quantiles of Π
            let q = |p: f64| {
                let i = table.pi_cdf.partition_point(|&c| c < p);
                table.grid[i.min(table.grid.len() - 1)]
            };
            let (lo, hi) = (q(0.05), q(0.95));
            (0..10).map(|i| lo + (hi - lo) * i as f64 / 9.0).collect()
        })
        .clone();
    let reports = exit_probability(&model, &table, &x0, n, t, cfg.seed, dt, th)?;
    art.count("paths", n as u64);
    let mut rows = Table::new(&["x0", "estimate", "stderr", "pi_cdf", "z_score", "undecided_fraction"]);
    for r in &reports {
        let d = &r.diagnostics;
        rows.push(vec![
            fmt(d["x0"]),
            fmt(r.value),
            fmt(r.std_error),
            fmt(d["pi_cdf"]),
            fmt(d["z_score"]),
            fmt(d["undecided_fraction"]),
        ]);
    }
    art.table = Some(rows);
    let worst = reports.iter().map(|r| r.diagnostics["z_score"].abs()).fold(0.0, f64::max);
    art.result = json!({ "max_abs_z": worst, "horizon": t, "escape_threshold": th });
    Ok(())
}

fn sample_invariant(cfg: &mut RunConfig, art: &mut Artifacts) -> Result<(), CliError> {
    let (model, table, gamma) = setup(cfg)?;
    let dt = cfg.dt;
    let n = *cfg.paths.get_or_insert(1000);
    let x0 = cfg.x0.get_or_insert_with(|| vec![-3.0, 0.0, 3.0]).clone();
    let sched = schedule(cfg, gamma);
    let tol = *cfg.tol.get_or_insert(DEFAULT_XINF_TOL);
    let scheme = *cfg.scheme.get_or_insert(PULLBACK_SCHEME);
    let n_max = *schedule_steps(&sched, dt)?.last().expect("non-empty schedule");
    let seeds = seeds(cfg, n);
    let samples: Vec<Result<XinfSample, ergoflow_core::Error>> = seeds
        .par_iter()
        .map(|&s| {
            let mut path = NoisePath::new(s, dt)?;
            path.extend(Side::Plus, n_max)?;
            sample_xinf(&model, &path.view(), &x0, &sched, tol, scheme)
        })
        .collect();
    let mut rows = Table::new(&["seed", "xinf", "T_used", "spread", "converged"]);
    let mut values = Vec::new();
    let mut failed = Vec::new();
    for (s, r) in seeds.iter().zip(&samples) {
        match r {
            Ok(x) => {
                art.count("steps", x.history.iter().map(|(t, v)| (t / dt).round() as u64 * v.len() as u64).sum());
                values.push(x.estimate);
                rows.push(vec![s.to_string(), fmt(x.estimate), fmt(x.horizon), fmt(x.spread), "true".into()]);
            }
            Err(e) => {
                failed.push(json!({"seed": s, "error": e.to_string()}));
                rows.push(vec![s.to_string(), fmt(f64::NAN), fmt(n_max as f64 * dt), fmt(f64::NAN), "false".into()]);
            }
        }
    }
    art.table = Some(rows);
    let ks = if values.is_empty() { f64::NAN } else { ks_distance(&values, |y| table.pi_cdf_at(y))? };
    let stats = mean_and_se(&values).ok();
    let var = stats.map(|(m, _)| values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (values.len() as f64 - 1.0));
    art.result = json!({
        "n_converged": values.len(),
        "failed": failed,
        "ks_statistic": ks,
        "ks_critical_1pct": ks_critical_one_sample(values.len().max(1)),
        "mean": stats.map(|s| s.0),
        "variance": var,
    });
    if failed.is_empty() {
        Ok(())
    } else {
        Err(ergoflow_core::Error::NonConvergence(format!("{} of {n} seeds did not converge", failed.len())).into())
    }
}

fn attractor(cfg: &mut RunConfig, art: &mut Artifacts) -> Result<(), CliError> {
    let (model, table, gamma) = setup(cfg)?;
    let dt = cfg.dt;
    let x0 = cfg.x0.get_or_insert_with(|| vec![-3.0, -1.5, 0.0, 1.5, 3.0]).clone();
    let sched = schedule(cfg, gamma);
    let tol = *cfg.tol.get_or_insert(DEFAULT_XINF_TOL);
    let btol = *cfg.bisection_tol.get_or_insert(DEFAULT_BISECTION_TOL);
    let th = threshold(cfg, &table);
    let scheme = *cfg.scheme.get_or_insert(PULLBACK_SCHEME);
    let edge = th / 1.5;
    let bracket = *cfg.bracket.get_or_insert([-edge, edge]);
    let steps = schedule_steps(&sched, dt)?;
    let n_max = *steps.last().expect("non-empty schedule");
    let mut path = NoisePath::new(cfg.seed, dt)?;
    path.extend(Side::Plus, n_max)?;
    path.extend(Side::Minus, n_max)?;
    let view = path.view();
    let mut rows = Table::new(&["T", "x0", "value", "method"]);
    let mut last_reversed = Vec::new();
    let mut last_forward = Vec::new();
    for &n in &steps {
        let rev = pullback_map(&model, &view, n, &x0, scheme)?;
        let fwd = pullback_process(&model, &view.rotated(), n, &x0, scheme)?;
        art.count("steps", (2 * n * x0.len()) as u64);
        for (k, &x) in x0.iter().enumerate() {
            rows.push(vec![fmt(n as f64 * dt), fmt(x), fmt(rev[k]), "reversed".into()]);
        }
        for (k, &x) in x0.iter().enumerate() {
            rows.push(vec![fmt(n as f64 * dt), fmt(x), fmt(fwd[k]), "forward_from_minus_T".into()]);
        }
        last_reversed = rev;
        last_forward = fwd;
    }
    art.table = Some(rows);
    let xinf = sample_xinf(&model, &view, &x0, &sched, tol, scheme);
    let bis = stagnation_bisect(&model, &view, n_max, (bracket[0], bracket[1]), btol, th, scheme);
    if let Ok(b) = &bis {
        art.count("steps", (b.history.len() * n_max) as u64);
        if let Some(t) = &mut art.table {
            t.push(vec![fmt(n_max as f64 * dt), fmt(f64::NAN), fmt(b.estimate), "bisection".into()]);
        }
    }
    let spread = |v: &[f64]| {
        v.iter().copied().fold(f64::NEG_INFINITY, f64::max) - v.iter().copied().fold(f64::INFINITY, f64::min)
    };
    let mut estimates = Vec::new();
    if let Ok(x) = &xinf {
        estimates.push(x.estimate);
    }
    if let Ok(b) = &bis {
        estimates.push(b.estimate);
    }
    estimates.extend(&last_forward);
    art.result = json!({
        "reversed": xinf.as_ref().ok().map(|x| json!({"estimate": x.estimate, "horizon": x.horizon, "spread": x.spread, "drift": x.drift})),
        "bisection": bis.as_ref().ok().map(|b| json!({"estimate": b.estimate, "lo": b.lo, "hi": b.hi, "evaluations": b.history.len()})),
        "forward_from_minus_T": last_forward,
        "reversed_at_t_max": last_reversed,
        "attractor_spread": spread(&last_forward),
        "max_disagreement": spread(&estimates),
    });
    xinf?;
    bis?;
    Ok(())
}

fn gap(cfg: &mut RunConfig, art: &mut Artifacts) -> Result<(), CliError> {
    let (model, _) = recurrent_model(cfg)?;
    let table = build_measures(&model, cfg.window, cfg.n_grid)?;
    let report = spectral_gap_bound(&table, &model)?;
    art.count("grid_points", table.grid.len() as u64);
    if let (Some(alpha), Some(beta)) = (report.alpha_norm, report.beta_shift) {
        let v = trial_potential(&table);
        let mut rows = Table::new(&["x", "V", "F", "pi_pdf"]);
        for i in 0..table.grid.len() {
            rows.push(vec![fmt(table.grid[i]), fmt(v[i]), fmt(alpha * (v[i] + beta)), fmt(table.pi_pdf(i))]);
        }
        art.table = Some(rows);
    }
    art.result = json!(report);
    Ok(())
}

fn spde(cfg: &mut RunConfig, art: &mut Artifacts) -> Result<(), CliError> {
    let (model, _, _) = setup(cfg)?;
    let src = cfg.f.get_or_insert_with(|| "x".into()).clone();
    let f = CoefficientFunction::parse(&src, &BTreeMap::new())?;
    let t = *cfg.t.get_or_insert(1.0);
    let dts = cfg.dt_list.get_or_insert_with(|| vec![4e-3, 2e-3, 1e-3]).clone();
    let x_grid = cfg.x_grid.get_or_insert_with(|| (0..11).map(|i| -1.0 + 0.2 * i as f64).collect()).clone();
    let n_seeds = *cfg.paths.get_or_insert(10);
    let scheme = *cfg.scheme.get_or_insert(PULLBACK_SCHEME);
    let seeds = seeds(cfg, n_seeds);
    let mut rows = Table::new(&["dt", "t", "rms"]);
    let mut finals = Vec::new();
    let mut dx_dominated = Vec::new();
    for &dt in &dts {
        let n = grid_steps(t, dt)?;
        let runs: Vec<ergoflow_core::Result<_>> = seeds
            .par_iter()
            .map(|&s| {
                let mut path = NoisePath::new(s, dt)?;
                path.extend(Side::Plus, n)?;
                spde_residual(&model, &path.view(), &f, &x_grid, n, scheme)
            })
            .collect();
        let runs = runs.into_iter().collect::<ergoflow_core::Result<Vec<_>>>()?;
        art.count("steps", (n * (n + 1) / 2 * 3 * x_grid.len() * n_seeds) as u64);
        let stride = ((0.01 / dt).round() as usize).max(1);
        for k in 0..n {
            if (k + 1) % stride != 0 && k + 1 != n {
                continue;
            }
            let ms = runs.iter().map(|r| r.rms[k].powi(2)).sum::<f64>() / runs.len() as f64;
            rows.push(vec![fmt(dt), fmt(runs[0].times[k]), fmt(ms.sqrt())]);
        }
        let ms = runs.iter().map(|r| r.rms[n - 1].powi(2)).sum::<f64>() / runs.len() as f64;
        finals.push(ms.sqrt());
        dx_dominated.push(runs.iter().any(|r| r.dx_dominated));
    }
    art.table = Some(rows);
    let order = if finals.iter().all(|&e| e > 0.0) && dts.len() > 1 { Some(fitted_order(&dts, &finals)) } else { None };
    art.result = json!({
        "final_rms": finals,
        "fitted_order": order,
        "dx_dominated": dx_dominated,
    });
    Ok(())
}

fn oracle_check(cfg: &mut RunConfig, art: &mut Artifacts) -> Result<(), CliError> {
    let (beta, sigma0) = match &cfg.model {
        ModelSpec::Catalog { kind, params } if kind == "ou" => (
            params.get("beta").copied().unwrap_or(1.0),
            params.get("sigma0").copied().unwrap_or(1.0),
        ),
        _ => return Err(CliError::Config("at 'model': oracle-check needs the 'ou' catalog model".into())),
    };
    let p = OuParams::new(beta, sigma0)?;
    let (model, _) = recurrent_model(cfg)?;
    let t = *cfg.t.get_or_insert(1.0);
    let dts = cfg.dt_list.get_or_insert_with(|| vec![4e-3, 2e-3, 1e-3]).clone();
    let n_seeds = *cfg.paths.get_or_insert(100);
    let x0 = cfg.x0.get_or_insert_with(|| vec![0.5])[0];
    let seeds = seeds(cfg, n_seeds);
    let mut rows = Table::new(&["dt", "scheme", "rms_error", "seeds"]);
    let mut orders = BTreeMap::new();
    for (scheme, label) in [(Scheme::Milstein, "milstein"), (Scheme::StratonovichRk4, "stratonovich_rk4")] {
        let errs: Vec<f64> = dts
            .par_iter()
            .map(|&dt| strong_error(&model, &p, scheme, dt, t, x0, &seeds))
            .collect::<ergoflow_core::Result<_>>()?;
        for (&dt, e) in dts.iter().zip(&errs) {
            art.count("steps", (grid_steps(t, dt)? * n_seeds) as u64);
            rows.push(vec![fmt(dt), label.into(), fmt(*e), n_seeds.to_string()]);
        }
        if dts.len() > 1 {
            orders.insert(label, fitted_order(&dts, &errs));
        }
    }
    art.table = Some(rows);
    // pullback against the exact stagnation point on the first few seeds
    let dt = cfg.dt;
    let sched = default_schedule(beta);
    let n_max = schedule_steps(&sched, dt)?.last().copied().unwrap_or(0).max(grid_ceil(20.0 / beta, dt).round() as usize);
    let mut xinf_diff: f64 = 0.0;
    for &s in seeds.iter().take(20) {
        let mut path = NoisePath::new(s, dt)?;
        path.extend(Side::Plus, n_max)?;
        let exact = ou_exact_xinf(&p, &path.view(), n_max)?;
        let est = sample_xinf(&model, &path.view(), &[-3.0, 0.0, 3.0], &sched, DEFAULT_XINF_TOL, PULLBACK_SCHEME)?;
        xinf_diff = xinf_diff.max((exact.value - est.estimate).abs());
    }
    art.result = json!({
        "beta": beta,
        "sigma0": sigma0,
        "fitted_order": orders,
        "xinf_max_abs_difference": xinf_diff,
        "xinf_seeds": seeds.len().min(20),
    });
    Ok(())
}

fn dump_noise(cfg: &mut RunConfig, art: &mut Artifacts) -> Result<(), CliError> {
    let dt = cfg.dt;
    let t = *cfg.t.get_or_insert(1.0);
    let n = grid_steps(t, dt)?;
    let mut path = NoisePath::new(cfg.seed, dt)?;
    path.extend(Side::Plus, n)?;
    path.extend(Side::Minus, n)?;
    let mut rows = Table::new(&["side", "index", "t", "increment", "b"]);
    for (side, sign) in [(Side::Plus, 1.0), (Side::Minus, -1.0)] {
        let mut b = 0.0;
        for (i, &inc) in path.increments(side).iter().enumerate() {
            // b(t_{i+1}) on the plus side, b(−t_{i+1}) on the minus side
            b += inc;
            rows.push(vec![side.label().into(), i.to_string(), fmt(sign * (i + 1) as f64 * dt), fmt(inc), fmt(b)]);
        }
    }
    art.count("increments", 2 * n as u64);
    art.table = Some(rows);
    let v: Value = json!({ "seed": cfg.seed, "steps_per_side": n });
    art.result = v;
    Ok(())
}
