//! Dispatch from a validated config to the library entry points, and
//! flattening of the library reports into rows.

use anyhow::{anyhow, bail, Result};
use levylab::bernstein::{
    check_mu_upper_bound, default_t_grid, mu_consistency_errors, mu_ratio_sup,
    CompleteBernsteinFunction,
};
use levylab::geometry::{dist, Domain};
use levylab::kernels::{check_j_asymptotics, j_ratio_sup, ProcessModel};
use levylab::potential::{
    accessibility_finite, accessibility_infinity, factorization_probe,
    martin_limit_finite, martin_limit_infinity, oscillation_experiment_finite,
    oscillation_experiment_infinity, AccessibilityVerdict, HarmonicSpec, MartinReport,
    OscillationReport,
};
use levylab::simulate::levy_system_check;

use crate::config::{ExperimentConfig, TargetSpec};
use crate::report::ReportRow;

pub struct Outcome {
    pub rows: Vec<ReportRow>,
    pub verdicts: Vec<String>,
    pub z_scores: Vec<f64>,
    pub samples_total: u64,
}

/// Seed-block stride between sub-experiments; each library call advances
/// its own internal block sequence, which stays well below this.
const BLOCK_STRIDE: u64 = 1 << 20;

macro_rules! req {
    ($cfg:expr, $field:ident) => {
        $cfg.$field
            .as_ref()
            .ok_or_else(|| anyhow!(concat!("missing field ", stringify!($field))))?
    };
}

pub fn run(cfg: &ExperimentConfig, seed: u64) -> Result<Outcome> {
    let n = cfg.n.unwrap_or(100_000);
    let budget = cfg.budget.unwrap_or(4000);
    match cfg.kind.as_str() {
        "levy-system" => levy_system(cfg, seed, n, budget),
        "accessibility" => accessibility(cfg, seed, n, budget),
        "martin-finite" | "martin-infinity" => martin(cfg, seed, n, budget),
        "oscillation-finite" | "oscillation-infinity" => oscillation(cfg, seed, n, budget),
        "bernstein-audit" => bernstein_audit(cfg),
        "kernel-audit" => kernel_audit(cfg),
        "factorization-probe" => factorization(cfg, seed, n, budget),
        other => bail!("unknown experiment kind {other:?}"),
    }
}

fn model_and_domain(cfg: &ExperimentConfig) -> Result<(ProcessModel, Domain)> {
    let model = ProcessModel::from_id(&cfg.model)?;
    let dom = Domain::parse(model.dim(), req!(cfg, domain))?;
    Ok((model, dom))
}

fn levy_system(cfg: &ExperimentConfig, seed: u64, n: u64, budget: u64) -> Result<Outcome> {
    let (model, dom) = model_and_domain(cfg)?;
    let a_set = Domain::parse(model.dim(), req!(cfg, a_set))?;
    let shell = req!(cfg, shell);
    let rep = levy_system_check(
        &model,
        &dom,
        req!(cfg, x),
        &a_set,
        (shell[0], shell[1]),
        n,
        budget,
        seed,
        0,
    )?;
    let verdict =
        if rep.z_score.abs() <= 3.0 { "consistent" } else { "inconsistent" };
    Ok(Outcome {
        samples_total: rep.walk_estimate.n + rep.kernel_estimate.n,
        rows: vec![
            ReportRow::from_estimate("walk", &rep.walk_estimate),
            ReportRow::from_estimate("kernel", &rep.kernel_estimate),
        ],
        verdicts: vec![verdict.into()],
        z_scores: vec![rep.z_score],
    })
}

fn verdict_rows(
    label: &str,
    v: &AccessibilityVerdict,
    rows: &mut Vec<ReportRow>,
    samples: &mut u64,
) -> String {
    for (k, inc) in v.ladder.iter().enumerate() {
        rows.push(ReportRow::exact(format!("{label}:ladder[{k}]"), *inc, "ok"));
    }
    if let Some(est) = &v.estimate {
        rows.push(ReportRow::from_estimate(format!("{label}:estimate"), est));
        *samples += est.n;
    }
    format!("{label}: {:?} ({})", v.status, v.criterion)
}

fn accessibility(cfg: &ExperimentConfig, seed: u64, n: u64, budget: u64) -> Result<Outcome> {
    let (model, dom) = model_and_domain(cfg)?;
    let mut rows = Vec::new();
    let mut verdicts = Vec::new();
    let mut samples = 0;
    let anchors: Vec<(&str, &Vec<f64>)> = [("x", cfg.x.as_ref()), ("x0", cfg.x0.as_ref())]
        .into_iter()
        .filter_map(|(l, p)| p.map(|p| (l, p)))
        .collect();
    if anchors.is_empty() {
        bail!("missing field x");
    }
    for (i, (label, anchor)) in anchors.iter().enumerate() {
        let v = match &cfg.z0 {
            Some(z0) => accessibility_finite(
                &model,
                &dom,
                z0,
                anchor,
                n,
                budget,
                seed,
                i as u64 * BLOCK_STRIDE,
            )?,
            None => accessibility_infinity(
                &model,
                &dom,
                anchor,
                n,
                budget,
                seed,
                i as u64 * BLOCK_STRIDE,
            )?,
        };
        verdicts.push(verdict_rows(label, &v, &mut rows, &mut samples));
        samples += n;
    }
    if verdicts.len() == 2 {
        let stable = verdicts[0].split(": ").nth(1) == verdicts[1].split(": ").nth(1);
        verdicts.push(format!("anchors agree: {stable}"));
    }
    Ok(Outcome { rows, verdicts, z_scores: vec![], samples_total: samples })
}

fn martin_rows(rep: &MartinReport) -> Outcome {
    let mut rows = Vec::new();
    let mut samples = 0;
    for (r, est) in &rep.ratio_sequence {
        rows.push(ReportRow::from_estimate(format!("ratio@r={r}"), est));
        samples += est.n;
    }
    if let Some(p) = &rep.predicted_limit {
        rows.push(ReportRow::from_estimate("predicted_limit", p));
    }
    rows.push(ReportRow::exact(
        "normalization_residual",
        rep.normalization_check,
        "ok",
    ));
    let mut verdicts = vec![format!(
        "boundary point: {:?} ({})",
        rep.verdict.status, rep.verdict.criterion
    )];
    let mut z_scores = Vec::new();
    if let Some(z) = rep.agreement_z {
        z_scores.push(z);
        verdicts.push(format!(
            "limit agreement: {}",
            if z.abs() <= 3.0 { "within 3 sigma" } else { "off" }
        ));
    }
    Outcome { rows, verdicts, z_scores, samples_total: samples }
}

fn martin(cfg: &ExperimentConfig, seed: u64, n: u64, budget: u64) -> Result<Outcome> {
    let (model, dom) = model_and_domain(cfg)?;
    let rep = if cfg.kind == "martin-finite" {
        martin_limit_finite(
            &model,
            &dom,
            req!(cfg, x),
            req!(cfg, x0),
            req!(cfg, z0),
            req!(cfg, probe_dir),
            req!(cfg, radii),
            n,
            budget,
            seed,
            0,
        )?
    } else {
        martin_limit_infinity(
            &model,
            &dom,
            req!(cfg, x),
            req!(cfg, x0),
            req!(cfg, probe_dir),
            req!(cfg, radii),
            n,
            budget,
            seed,
            0,
        )?
    };
    Ok(martin_rows(&rep))
}

fn spec_from_target(d: usize, z0: &[f64], t: &TargetSpec) -> Result<HarmonicSpec> {
    let target = Domain::ball(d, t.center.clone(), t.radius)?;
    Ok(HarmonicSpec {
        target,
        scale: t.scale,
        outer_radius: dist(z0, &t.center) + t.radius,
        enclosing_center: t.center.clone(),
        enclosing_radius: t.radius,
    })
}

fn oscillation_rows(rep: &OscillationReport) -> Outcome {
    let mut rows = Vec::new();
    let mut samples = 0;
    for (r, est) in &rep.probe_ratios {
        rows.push(ReportRow::from_estimate(format!("ratio@r={r}"), est));
        samples += est.n;
    }
    rows.push(ReportRow::from_estimate("mass_ratio", &rep.mass_ratio));
    samples += rep.mass_ratio.n;
    let final_z = rep.z_scores.last().copied().unwrap_or(f64::NAN);
    Outcome {
        rows,
        verdicts: vec![format!(
            "final probe vs mass ratio: {}",
            if final_z.abs() <= 3.0 { "within 3 sigma" } else { "off" }
        )],
        z_scores: rep.z_scores.clone(),
        samples_total: samples,
    }
}

fn oscillation(cfg: &ExperimentConfig, seed: u64, n: u64, budget: u64) -> Result<Outcome> {
    let (model, dom) = model_and_domain(cfg)?;
    let z0 = req!(cfg, z0);
    let sep = *req!(cfg, separation);
    let f1 = spec_from_target(model.dim(), z0, req!(cfg, target1))?;
    let f2 = spec_from_target(model.dim(), z0, req!(cfg, target2))?;
    let rep = if cfg.kind == "oscillation-infinity" {
        oscillation_experiment_infinity(
            &model,
            &dom,
            z0,
            sep,
            &f1,
            &f2,
            req!(cfg, probe_dir),
            req!(cfg, radii),
            n,
            budget,
            seed,
            0,
        )?
    } else {
        oscillation_experiment_finite(
            &model,
            &dom,
            z0,
            sep,
            &f1,
            &f2,
            req!(cfg, probe_dir),
            req!(cfg, radii),
            n,
            budget,
            seed,
            0,
        )?
    };
    Ok(oscillation_rows(&rep))
}

fn bernstein_audit(cfg: &ExperimentConfig) -> Result<Outcome> {
    let f = CompleteBernsteinFunction::from_id(&cfg.model)?;
    let mut rows = Vec::new();
    let mut verdicts = Vec::new();
    let grid = default_t_grid();
    if f.has_mu() {
        let upper = check_mu_upper_bound(&f, &grid)?;
        rows.push(ReportRow::exact(
            "mu_upper_bound_margin",
            upper.margin,
            if upper.holds { "holds" } else { "violated" },
        ));
        verdicts.push(format!(
            "density upper bound: {}",
            if upper.holds { "holds" } else { "violated" }
        ));
        let ratio = mu_ratio_sup(&f, 1.0, 0.1, 400)?;
        rows.push(ReportRow::exact("mu_ratio_sup(t0=1,delta=0.1)", ratio, "ok"));
    } else {
        verdicts.push("no explicit density; bound audit skipped".into());
    }
    for (lam, err) in mu_consistency_errors(&f, &[0.1, 1.0, 10.0])? {
        let flag = if err < 1e-6 { "ok" } else { "loose" };
        rows.push(ReportRow::exact(format!("laplace_residual@{lam}"), err, flag));
    }
    let consistent = rows
        .iter()
        .filter(|r| r.probe_label.starts_with("laplace"))
        .all(|r| r.flag == "ok");
    verdicts.push(format!(
        "transform consistency: {}",
        if consistent { "holds" } else { "loose" }
    ));
    Ok(Outcome { rows, verdicts, z_scores: vec![], samples_total: 0 })
}

fn kernel_audit(cfg: &ExperimentConfig) -> Result<Outcome> {
    let model = ProcessModel::from_id(&cfg.model)?;
    let r_grid: Vec<f64> = match &cfg.radii {
        Some(r) => r.clone(),
        None => (0..12).map(|k| 2.0f64.powi(k)).collect(),
    };
    let rep = check_j_asymptotics(&model, &r_grid, 0.05)?;
    let mut rows: Vec<ReportRow> = rep
        .ratios
        .iter()
        .map(|(r, v)| ReportRow::exact(format!("j_ratio@r={r}"), *v, "ok"))
        .collect();
    let sup = j_ratio_sup(&model, 0.5, 0.1)?;
    rows.push(ReportRow::exact("j_ratio_sup(r0=0.5,delta=0.1)", sup, "ok"));
    Ok(Outcome {
        rows,
        verdicts: vec![format!(
            "tail shape stabilizes: {}",
            if rep.stabilizes { "yes" } else { "no" }
        )],
        z_scores: vec![],
        samples_total: 0,
    })
}

fn factorization(cfg: &ExperimentConfig, seed: u64, n: u64, budget: u64) -> Result<Outcome> {
    let model = ProcessModel::from_id(&cfg.model)?;
    let d = model.dim();
    let domains: Vec<Domain> = req!(cfg, domains)
        .iter()
        .map(|expr| Domain::parse(d, expr))
        .collect::<levylab::error::Result<_>>()?;
    let rep = factorization_probe(
        &model,
        &domains,
        req!(cfg, z0),
        *req!(cfg, separation),
        *req!(cfg, a),
        req!(cfg, x_grid),
        n,
        budget,
        seed,
        0,
    )?;
    let mut rows: Vec<ReportRow> = rep
        .per_domain
        .iter()
        .enumerate()
        .map(|(i, c)| ReportRow::exact(format!("domain[{i}]:constant"), *c, "ok"))
        .collect();
    rows.push(ReportRow::exact(
        "c_hat",
        rep.c_hat,
        if rep.trend_flag { "trend" } else { "ok" },
    ));
    Ok(Outcome {
        rows,
        verdicts: vec![format!(
            "constant uniform over the family: {}",
            if rep.trend_flag { "doubtful" } else { "plausible" }
        )],
        z_scores: vec![],
        samples_total: n * req!(cfg, x_grid).len() as u64,
    })
}
