//! The five subcommands. Each writes its CSV and `summary_<cmd>.json` and
//! returns whether its checks passed.

use anyhow::{Context, Result};
use blowuplab_core::charts::ChartPoint;
use blowuplab_core::manifolds::{
    cm_closed_form, cm_closed_form_k1, convergence_report, ls_slope, rel_dev, solve_invariance_order2, CenterGrid,
    InvarianceSystem, ManifoldExpansion,
};
use blowuplab_core::model::ModelParams;
use blowuplab_core::passage::{passage, Outcome, PassageConfig, PassageReport};
use blowuplab_core::pdecheck::{k1_pde_consistency, k2_limit_compare, k2_limit_distances};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::json;

use crate::config::{config_hash, ConfigError, RunConfig};
use crate::output::{num, write_csv, write_gnuplot, write_json, write_summary, Summary};

/// Settings shared by all commands.
pub struct Ctx {
    pub out: std::path::PathBuf,
    pub seed: u64,
    pub tol: Option<f64>,
    pub gnuplot: bool,
    pub itinerary: bool,
}

pub const SWEEP_HEADER: [&str; 8] = [
    "mu",
    "eps",
    "k0",
    "outcome",
    "exit_v",
    "n_sections",
    "drift_max",
    "mode_env_max",
];

pub const PDECHECK_HEADER: [&str; 4] = ["eps", "k0", "T_snapshot", "l2_distance"];

pub const COEFFS_HEADER: [&str; 11] = [
    "chart",
    "k0",
    "mu",
    "c",
    "a",
    "a1_star",
    "graph_var",
    "monomial",
    "closed_form",
    "oracle",
    "rel_dev",
];

fn finish(ctx: &Ctx, cmd: &str, pass: bool, hash: String, metrics: serde_json::Value) -> Result<bool> {
    let summary = Summary {
        pass,
        config_sha256: hash,
        metrics,
    };
    let path = write_summary(&ctx.out, cmd, &summary)?;
    println!("{cmd}: {} ({})", if pass { "PASS" } else { "FAIL" }, path.display());
    Ok(pass)
}

fn monomial_name(e: &ManifoldExpansion, mono: &[usize]) -> String {
    match mono {
        [a] => e.center_vars[*a].clone(),
        [a, b] if a == b => format!("{}^2", e.center_vars[*a]),
        _ => mono.iter().map(|&i| e.center_vars[i].as_str()).collect::<Vec<_>>().join("*"),
    }
}

struct CoeffCase {
    chart: &'static str,
    k0: usize,
    mu: f64,
    c: Option<f64>,
    a: Option<f64>,
    a1: Option<f64>,
}

pub fn cmd_coeffs(cfg: &RunConfig, ctx: &Ctx) -> Result<bool> {
    let mut sc = cfg.coeffs.clone();
    if let Some(t) = ctx.tol {
        sc.rtol = t;
    }
    for &c in &sc.c_list {
        if c == 0.0 {
            return Err(ConfigError("c = 0: normal hyperbolicity lost".into()).into());
        }
        if c > 0.0 {
            return Err(ConfigError(format!("c = {c}: expansions need the attracting branch c < 0")).into());
        }
    }
    let hash = config_hash(&sc, ctx.seed, ctx.tol);
    let mut cases = Vec::new();
    for &k0 in &sc.k0_list {
        for &mu in &sc.mu_list {
            for &c in &sc.c_list {
                for &a in &sc.a_list {
                    cases.push(CoeffCase {
                        chart: "ORIG",
                        k0,
                        mu,
                        c: Some(c),
                        a: Some(a),
                        a1: None,
                    });
                }
            }
            for &a1 in &sc.a1_list {
                cases.push(CoeffCase {
                    chart: "K1",
                    k0,
                    mu,
                    c: None,
                    a: None,
                    a1: Some(a1),
                });
            }
        }
    }
    let results: Vec<(Vec<Vec<String>>, f64)> = cases
        .par_iter()
        .map(|cs| -> Result<(Vec<Vec<String>>, f64)> {
            let label = format!("{} k0={} mu={}", cs.chart, cs.k0, cs.mu);
            let (closed, sys) = match (cs.c, cs.a, cs.a1) {
                (Some(c), Some(a), _) => (
                    cm_closed_form(cs.k0, c, cs.mu, a),
                    InvarianceSystem::orig(cs.k0, c, cs.mu, a),
                ),
                (_, _, Some(a1)) => (cm_closed_form_k1(cs.k0, a1, cs.mu), InvarianceSystem::k1(cs.k0, a1, cs.mu)),
                _ => unreachable!("every case has a base point"),
            };
            let closed = closed.with_context(|| label.clone())?;
            let oracle = solve_invariance_order2(&sys.with_context(|| label.clone())?).with_context(|| label.clone())?;
            let opt = |x: Option<f64>| x.map(num).unwrap_or_default();
            let mut rows = Vec::new();
            let mut worst = 0.0f64;
            for (g, mono, x) in closed.entries() {
                let y = oracle.coeff(g, &mono);
                let d = rel_dev(x, y);
                worst = worst.max(d);
                rows.push(vec![
                    cs.chart.to_string(),
                    cs.k0.to_string(),
                    num(cs.mu),
                    opt(cs.c),
                    opt(cs.a),
                    opt(cs.a1),
                    closed.graph_vars[g].clone(),
                    monomial_name(&closed, &mono),
                    num(x),
                    num(y),
                    num(d),
                ]);
            }
            Ok((rows, worst))
        })
        .collect::<Result<_>>()?;
    let worst = results.iter().fold(0.0f64, |m, r| m.max(r.1));
    let rows: Vec<Vec<String>> = results.into_iter().flat_map(|r| r.0).collect();
    write_csv(&ctx.out.join("coeffs.csv"), &hash, &COEFFS_HEADER, &rows)?;
    let pass = worst < sc.rtol;
    finish(
        ctx,
        "coeffs",
        pass,
        hash,
        json!({ "max_rel_dev": worst, "rtol": sc.rtol, "n_cases": cases.len(), "n_coeffs": rows.len() }),
    )
}

fn sweep_row(r: &PassageReport) -> Vec<String> {
    vec![
        num(r.config.mu),
        num(r.config.eps),
        r.config.k0.to_string(),
        r.outcome.to_string(),
        num(r.exit_v),
        r.n_sections().to_string(),
        num(r.drift_max()),
        num(r.mode_env_max()),
    ]
}

/// Whether a run shows the regime its `μ` predicts.
fn expected(r: &PassageReport) -> bool {
    if r.config.mu < 1.0 {
        r.outcome == Outcome::Exchange && r.exchange_near_target() && r.caps_ok()
    } else {
        r.outcome == Outcome::Jump && r.caps_ok()
    }
}

fn with_tol(mut p: PassageConfig, tol: Option<f64>) -> PassageConfig {
    if let Some(t) = tol {
        p.rtol = t;
    }
    p
}

fn validate(p: &PassageConfig) -> Result<()> {
    p.levels()
        .map(|_| ())
        .map_err(|e| ConfigError(format!("mu={} eps={:e} k0={}: {e}", p.mu, p.eps, p.k0)).into())
}

pub fn cmd_passage(cfg: &RunConfig, ctx: &Ctx) -> Result<bool> {
    let p = with_tol(cfg.passage.clone(), ctx.tol);
    validate(&p)?;
    let hash = config_hash(&p, ctx.seed, ctx.tol);
    let r = passage(&p).with_context(|| format!("passage mu={} eps={:e} k0={}", p.mu, p.eps, p.k0))?;
    write_csv(&ctx.out.join("passage.csv"), &hash, &SWEEP_HEADER, &[sweep_row(&r)])?;
    if ctx.itinerary {
        write_json(&ctx.out.join("itinerary_passage.json"), &r)?;
    }
    finish(
        ctx,
        "passage",
        expected(&r),
        hash,
        json!({
            "outcome": r.outcome,
            "exit_u": r.exit_u,
            "exit_v": r.exit_v,
            "exchange_distance": r.exchange_distance,
            "v13_entry": r.v13_entry,
            "n_sections": r.n_sections(),
            "drift_max": r.drift_max(),
            "mode_env_max": r.mode_env_max(),
            "caps_ok": r.caps_ok(),
            "levels": r.levels,
            "detail": r.detail,
        }),
    )
}

pub fn cmd_sweep(cfg: &RunConfig, ctx: &Ctx) -> Result<bool> {
    let base = with_tol(cfg.passage.clone(), ctx.tol);
    let sw = &cfg.sweep;
    let mut runs = Vec::new();
    for &mu in &sw.mu_list {
        for &k0 in &sw.k0_list {
            for &eps in &sw.eps_list {
                runs.push(base.clone().with_mu(mu).with_k0(k0).with_eps(eps));
            }
        }
    }
    for p in &runs {
        validate(p)?;
    }
    let hash = config_hash(&json!({ "base": base, "sweep": sw }), ctx.seed, ctx.tol);
    let reports: Vec<PassageReport> = runs
        .par_iter()
        .map(|p| passage(p).with_context(|| format!("passage mu={} eps={:e} k0={}", p.mu, p.eps, p.k0)))
        .collect::<Result<_>>()?;
    write_csv(
        &ctx.out.join("sweep.csv"),
        &hash,
        &SWEEP_HEADER,
        &reports.iter().map(sweep_row).collect::<Vec<_>>(),
    )?;
    let outcomes_ok = reports.iter().all(expected);
    let mut fits = Vec::new();
    for &mu in sw.mu_list.iter().filter(|m| **m > 1.0) {
        for &k0 in &sw.k0_list {
            let pts: Vec<(f64, f64)> = reports
                .iter()
                .filter(|r| r.config.mu == mu && r.config.k0 == k0 && r.outcome == Outcome::Jump)
                .map(|r| (r.config.eps.ln(), r.exit_v.abs().ln()))
                .collect();
            if pts.len() >= 2 {
                let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
                fits.push(json!({ "mu": mu, "k0": k0, "slope": ls_slope(&x, &y) }));
            }
        }
    }
    let slopes: Vec<f64> = fits.iter().filter_map(|f| f["slope"].as_f64()).collect();
    let mean = slopes.iter().sum::<f64>() / slopes.len().max(1) as f64;
    let slopes_ok = slopes.iter().all(|s| {
        (s - sw.slope_target).abs() <= sw.slope_window && (s - mean).abs() <= sw.slope_stability
    });
    if ctx.gnuplot {
        write_gnuplot(
            &ctx.out.join("sweep.gp"),
            "sweep.csv",
            "set logscale xy\nset xlabel 'eps'\nset ylabel '|exit_v|'\nplot file using 2:(abs($5)) with points",
        )?;
    }
    let n_exchange = reports.iter().filter(|r| r.outcome == Outcome::Exchange).count();
    let n_jump = reports.iter().filter(|r| r.outcome == Outcome::Jump).count();
    finish(
        ctx,
        "sweep",
        outcomes_ok && slopes_ok,
        hash,
        json!({
            "runs": reports.len(),
            "exchange": n_exchange,
            "jump": n_jump,
            "outcomes_as_expected": outcomes_ok,
            "slope": if slopes.is_empty() { None } else { Some(mean) },
            "fits": fits,
        }),
    )
}

pub fn cmd_converge(cfg: &RunConfig, ctx: &Ctx) -> Result<bool> {
    let cc = &cfg.converge;
    let hash = config_hash(cc, ctx.seed, ctx.tol);
    let theta = cc.random_theta.then(|| {
        let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
        (2..=cc.k_ref).map(|_| rng.gen_range(-1.0..=1.0)).collect()
    });
    let grid = CenterGrid {
        n: cc.grid_n,
        v1_half_width: cc.v1_half_width,
        sigma_max: cc.sigma_max,
        eps_max: cc.eps_max,
        theta,
    };
    let rep = convergence_report(&cc.k0_list, cc.c, cc.mu, cc.a, &grid, cc.k_ref).context("convergence report")?;
    let rows: Vec<Vec<String>> = rep
        .rows
        .iter()
        .map(|r| vec![r.k0.to_string(), num(r.sup_distance), num(r.hausdorff)])
        .collect();
    write_csv(&ctx.out.join("converge.csv"), &hash, &["k0", "sup_distance", "hausdorff"], &rows)?;
    if ctx.gnuplot {
        write_gnuplot(
            &ctx.out.join("converge.gp"),
            "converge.csv",
            "set logscale xy\nset xlabel 'k0'\nplot file using 1:2 with linespoints, file using 1:3 with linespoints",
        )?;
    }
    let pass = rep.monotone() && rep.hausdorff_monotone() && rep.decay_exponent >= cc.min_decay_exponent;
    finish(
        ctx,
        "converge",
        pass,
        hash,
        json!({
            "k_ref": rep.k_ref,
            "monotone": rep.monotone(),
            "hausdorff_monotone": rep.hausdorff_monotone(),
            "decay_exponent": rep.decay_exponent,
            "hausdorff_exponent": rep.hausdorff_exponent,
        }),
    )
}

fn random_k1_point(rng: &mut ChaCha8Rng, k0: usize) -> ChartPoint {
    let modes = |rng: &mut ChaCha8Rng| (2..=k0).map(|_| rng.gen_range(-0.3..0.3)).collect::<Vec<f64>>();
    let (r, e, a, v) = (
        rng.gen_range(0.1..1.0),
        rng.gen_range(0.0..0.5),
        rng.gen_range(0.2..2.0),
        rng.gen_range(-1.0..1.0),
    );
    let mu = modes(rng);
    let mv = modes(rng);
    ChartPoint::k1(r, e, a, v, mu, mv)
}

pub fn cmd_pdecheck(cfg: &RunConfig, ctx: &Ctx) -> Result<bool> {
    let mut pc = cfg.pdecheck.clone();
    if let Some(t) = ctx.tol {
        pc.rtol = t;
    }
    let hash = config_hash(&pc, ctx.seed, ctx.tol);
    let limit = pc.limit();
    let rep = k2_limit_compare(&limit).context("planar limit comparison")?;
    let rows: Vec<Vec<String>> = rep
        .rows
        .iter()
        .map(|r| vec![num(r.eps), r.k0.to_string(), num(r.t_snapshot), num(r.l2_distance)])
        .collect();
    write_csv(&ctx.out.join("pdecheck.csv"), &hash, &PDECHECK_HEADER, &rows)?;
    if ctx.gnuplot {
        write_gnuplot(
            &ctx.out.join("pdecheck.gp"),
            "pdecheck.csv",
            "set logscale y\nset xlabel 'T'\nplot file using 3:4:1 with points palette",
        )?;
    }
    let exact = if rep.blowup_time.is_none() {
        let mut m = 0.0f64;
        for &eps in &limit.eps_list {
            m = k2_limit_distances(&limit, eps, 0.0, 0.0)?.iter().fold(m, |m, d| m.max(*d));
        }
        Some(m)
    } else {
        None
    };
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
    let mut points = Vec::new();
    for k0 in 1..=pc.modal_k0_max {
        for _ in 0..pc.modal_samples {
            points.push((k0, rng.gen_range(-1.0..3.0), random_k1_point(&mut rng, k0)));
        }
    }
    let modal = points
        .par_iter()
        .map(|(k0, mu, p)| k1_pde_consistency(&ModelParams::new(*mu, 1.0, 0.0, *k0)?, p))
        .collect::<blowuplab_core::Result<Vec<f64>>>()
        .context("modal identity")?
        .into_iter()
        .fold(0.0f64, f64::max);
    let pass = rep.blowup_time.is_none()
        && rep.monotone()
        && exact.is_some_and(|e| e < pc.exact_tol)
        && modal < pc.modal_tol;
    finish(
        ctx,
        "pdecheck",
        pass,
        hash,
        json!({
            "sup_distance": rep.sup_distance,
            "monotone": rep.monotone(),
            "blowup_time": rep.blowup_time,
            "constant_data_distance": exact,
            "modal_max_defect": modal,
        }),
    )
}

pub fn run(cmd: &str, cfg: &RunConfig, ctx: &Ctx) -> Result<bool> {
    std::fs::create_dir_all(&ctx.out).with_context(|| format!("creating {}", ctx.out.display()))?;
    match cmd {
        "coeffs" => cmd_coeffs(cfg, ctx),
        "passage" => cmd_passage(cfg, ctx),
        "sweep" => cmd_sweep(cfg, ctx),
        "converge" => cmd_converge(cfg, ctx),
        "pdecheck" => cmd_pdecheck(cfg, ctx),
        other => Err(ConfigError(format!("unknown command {other}")).into()),
    }
}
