//! Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

use std::time::Instant;

use blowuplab_core::charts::{blowdown, kappa12, kappa21, kappa23, kappa32, lift, Chart, ChartPoint, ChartSystem};
use blowuplab_core::manifolds::{
    cm_closed_form, cm_closed_form_k1, compare, convergence_report, default_direction, logspace,
    residual_ray_slope, solve_invariance_order2, CenterGrid, InvarianceSystem, ManifoldExpansion, K_REF,
};
use blowuplab_core::model::{GalerkinState, ModelParams};
use blowuplab_core::ode::Tolerances;
use blowuplab_core::passage::{exit_scaling_fit, passage, Outcome, PassageConfig};
use blowuplab_core::pdecheck::{k1_pde_consistency, k2_limit_compare, k2_limit_distances, sample_at, LimitConfig};
use blowuplab_core::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 20240611;

const ORACLE_RTOL: f64 = 1e-8;
const RAY_SLOPE_MIN: f64 = 2.7;
const RAY_SCALE_LO: f64 = 1e-4;
const RAY_SCALE_HI: f64 = 1e-2;
const RAY_POINTS: usize = 7;
const CHART_TOL: f64 = 1e-12;
const CHART_SAMPLES: usize = 100;
const BLOWDOWN_TOL: f64 = 1e-6;
const DRIFT_TOL: f64 = 1e-9;
const EXIT_SLOPE_TARGET: f64 = 0.25;
const EXIT_SLOPE_WINDOW: f64 = 0.1;
const EXIT_SLOPE_STABILITY: f64 = 0.02;
const DECAY_EXPONENT_MIN: f64 = 1.0;
const MODAL_TOL: f64 = 1e-10;
const LIMIT_EXACT_TOL: f64 = 1e-8;

const ORACLE_K0: [usize; 4] = [1, 2, 3, 8];
const ORACLE_MU: [f64; 3] = [0.0, 0.5, 2.0];
const ORACLE_C: [f64; 2] = [-0.1, -0.5];
const ORACLE_A: [f64; 2] = [0.5, 1.0];
const ORACLE_A1: [f64; 2] = [0.0, 0.2];

/// Tight tolerances for trajectory comparisons.
fn tight() -> Tolerances {
    Tolerances::new(1e-12, 1e-15)
}

type Check = Result<(bool, String)>;
type Criterion = (&'static str, fn() -> Check);

/// Every closed-form expansion paired with its invariance system.
fn all_expansions() -> Result<Vec<(String, ManifoldExpansion, InvarianceSystem)>> {
    let mut out = Vec::new();
    for &k0 in &ORACLE_K0 {
        for &mu in &ORACLE_MU {
            for &c in &ORACLE_C {
                for &a in &ORACLE_A {
                    out.push((
                        format!("orig k0={k0} mu={mu} c={c} a={a}"),
                        cm_closed_form(k0, c, mu, a)?,
                        InvarianceSystem::orig(k0, c, mu, a)?,
                    ));
                }
            }
            for &a1 in &ORACLE_A1 {
                out.push((
                    format!("K1 k0={k0} mu={mu} a1*={a1}"),
                    cm_closed_form_k1(k0, a1, mu)?,
                    InvarianceSystem::k1(k0, a1, mu)?,
                ));
            }
        }
    }
    Ok(out)
}

fn c1_oracle() -> Check {
    let mut worst = (0.0f64, String::new());
    let mut n = 0;
    let mut ok = true;
    for (label, closed, sys) in all_expansions()? {
        let oracle = solve_invariance_order2(&sys)?;
        let cmp = compare(&oracle, &closed)?;
        n += cmp.n_coeffs;
        ok &= cmp.max_rel_dev < ORACLE_RTOL;
        if cmp.max_rel_dev >= worst.0 {
            worst = (cmp.max_rel_dev, label);
        }
    }
    Ok((ok, format!("{n} coefficients, max rel dev {:.2e} ({})", worst.0, worst.1)))
}

fn c2_ray_slope() -> Check {
    let scales = logspace(RAY_SCALE_LO, RAY_SCALE_HI, RAY_POINTS);
    let mut worst = (f64::INFINITY, String::new());
    for (label, e, sys) in all_expansions()? {
        let fit = residual_ray_slope(&e, &sys, &default_direction(e.nc()), &scales)?;
        if fit.slope < worst.0 {
            worst = (fit.slope, label);
        }
    }
    Ok((worst.0 >= RAY_SLOPE_MIN, format!("min slope {:.3} ({})", worst.0, worst.1)))
}

fn modes(rng: &mut ChaCha8Rng, k0: usize, scale: f64) -> Vec<f64> {
    (2..=k0).map(|_| rng.gen_range(-scale..scale)).collect()
}

fn point_dev(p: &ChartPoint, q: &ChartPoint) -> f64 {
    p.to_vec()
        .iter()
        .zip(q.to_vec())
        .map(|(x, y)| (x - y).abs() / x.abs().max(1.0))
        .fold(0.0, f64::max)
}

fn blowdown_dev(p: &ChartPoint, q: &ChartPoint) -> Result<f64> {
    let (s, e, a) = blowdown(p)?;
    let (t, f, b) = blowdown(q)?;
    let mut x = s.to_flat();
    x.extend([e, a]);
    let mut y = t.to_flat();
    y.extend([f, b]);
    Ok(x.iter().zip(&y).map(|(x, y)| (x - y).abs() / x.abs().max(1.0)).fold(0.0, f64::max))
}

fn c3_chart_algebra() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let (mut round, mut down) = (0.0f64, 0.0f64);
    for _ in 0..CHART_SAMPLES {
        let k0 = rng.gen_range(1..=8);
        let p1 = ChartPoint::k1(
            rng.gen_range(0.1..1.0),
            rng.gen_range(0.01..1.0),
            rng.gen_range(0.1..2.0),
            rng.gen_range(-1.0..1.0),
            modes(&mut rng, k0, 0.5),
            modes(&mut rng, k0, 0.5),
        );
        let p3 = ChartPoint::k3(
            rng.gen_range(0.1..1.0),
            rng.gen_range(0.01..1.0),
            rng.gen_range(0.1..2.0),
            rng.gen_range(-1.0..1.0),
            modes(&mut rng, k0, 0.5),
            modes(&mut rng, k0, 0.5),
        );
        let mut k2 = |sign: f64| {
            ChartPoint::k2(
                rng.gen_range(0.1..1.0),
                rng.gen_range(0.1..2.0),
                sign * rng.gen_range(0.2..3.0),
                rng.gen_range(-2.0..2.0),
                modes(&mut rng, k0, 0.5),
                modes(&mut rng, k0, 0.5),
            )
        };
        let p2m = k2(-1.0);
        let p2p = k2(1.0);
        round = round.max(point_dev(&p1, &kappa21(&kappa12(&p1)?)?));
        round = round.max(point_dev(&p2p, &kappa32(&kappa23(&p2p)?)?));
        round = round.max(point_dev(&p2m, &kappa12(&kappa21(&p2m)?)?));
        round = round.max(point_dev(&p3, &kappa23(&kappa32(&p3)?)?));
        down = down
            .max(blowdown_dev(&p1, &kappa12(&p1)?)?)
            .max(blowdown_dev(&p2m, &kappa21(&p2m)?)?)
            .max(blowdown_dev(&p2p, &kappa23(&p2p)?)?)
            .max(blowdown_dev(&p3, &kappa32(&p3)?)?);
    }
    Ok((
        round < CHART_TOL && down < CHART_TOL,
        format!("{CHART_SAMPLES} points, round trip {round:.2e}, blowdown {down:.2e}"),
    ))
}

fn orig_start(k0: usize, u1: f64, v1: f64) -> GalerkinState {
    let mut s = GalerkinState::zeros(k0);
    s.u[0] = u1;
    s.v[0] = v1;
    for k in 2..=k0 {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        s.u[k - 1] = sign * 0.02 / (k * k) as f64;
        s.v[k - 1] = -sign * 0.01 / (k * k) as f64;
    }
    s
}

/// Sup distance between the blown-down chart trajectory and the original
/// trajectory, matched through the clock `dt/dτ = r⁻³`.
fn blowdown_consistency(params: &ModelParams, start: &GalerkinState, chart: Chart, tau_end: f64) -> Result<(f64, f64)> {
    let k0 = params.k0;
    let p = lift(start, params.eps, params.a, chart)?;
    let mut y0 = p.to_vec();
    y0.push(0.0);
    let taus: Vec<f64> = (1..=20).map(|i| tau_end * i as f64 / 20.0).collect();
    let sys = ChartSystem::new(chart, params).with_clock();
    let ys = sample_at(&sys, &y0, &taus, tight())?;
    let ts: Vec<f64> = ys.iter().map(|y| y[2 * k0 + 3]).collect();
    let orig = ChartSystem::new(Chart::Orig, params);
    let xs = sample_at(&orig, &ChartPoint::orig(start, params.eps, params.a).to_vec(), &ts, tight())?;
    let mut sup = 0.0f64;
    for (y, x) in ys.iter().zip(&xs) {
        let (s, _, _) = blowdown(&ChartPoint::from_vec(chart, &y[..2 * k0 + 3], k0)?)?;
        let (t, _, _) = blowdown(&ChartPoint::from_vec(Chart::Orig, x, k0)?)?;
        sup = sup.max(s.distance(&t));
    }
    Ok((sup, *ts.last().unwrap_or(&0.0)))
}

fn c4_desingularization() -> Check {
    let (mut worst, mut t_min) = (0.0f64, f64::INFINITY);
    for k0 in [1, 2, 4, 8] {
        let params = ModelParams::new(0.5, 1.0, 1e-3, k0)?;
        for (chart, u1, v1, tau) in [(Chart::K1, -0.2, -0.1, 0.2), (Chart::K2, -0.05, 0.05, 0.3), (Chart::K3, 0.2, 0.1, 0.2)] {
            let (d, t) = blowdown_consistency(&params, &orig_start(k0, u1, v1), chart, tau)?;
            worst = worst.max(d);
            t_min = t_min.min(t);
        }
    }
    Ok((
        worst < BLOWDOWN_TOL,
        format!("k0 <= 8, charts K1/K2/K3, sup distance {worst:.2e} over t >= {t_min:.2}"),
    ))
}

/// Max relative change per unit time of `(r⁸ε_i, a_i/r²)` along a chart run.
fn invariant_drift(params: &ModelParams, start: &GalerkinState, chart: Chart, tau_end: f64) -> Result<f64> {
    let k0 = params.k0;
    let p = lift(start, params.eps, params.a, chart)?;
    let inv = |q: &ChartPoint| -> (f64, f64) {
        match q.chart {
            Chart::Orig => (q.eps_i, q.a_i),
            Chart::K2 => (q.r, q.a_i),
            _ => (q.r.powi(8) * q.eps_i, q.a_i / (q.r * q.r)),
        }
    };
    let (e0, a0) = inv(&p);
    let taus: Vec<f64> = (1..=50).map(|i| tau_end * i as f64 / 50.0).collect();
    let ys = sample_at(&ChartSystem::new(chart, params), &p.to_vec(), &taus, tight())?;
    let mut worst = 0.0f64;
    for y in &ys {
        let (e, a) = inv(&ChartPoint::from_vec(chart, y, k0)?);
        worst = worst.max(((e - e0) / e0).abs()).max(((a - a0) / a0).abs());
    }
    Ok(worst / tau_end.max(1.0))
}

fn c5_conserved() -> Check {
    let mut worst = 0.0f64;
    for k0 in [2, 8] {
        let params = ModelParams::new(0.5, 1.0, 1e-3, k0)?;
        worst = worst.max(invariant_drift(&params, &orig_start(k0, -0.2, -0.1), Chart::Orig, 5.0)?);
        worst = worst.max(invariant_drift(&params, &orig_start(k0, -0.2, -0.1), Chart::K1, 5.0)?);
        worst = worst.max(invariant_drift(&params, &orig_start(k0, -0.05, 0.05), Chart::K2, 2.0)?);
        worst = worst.max(invariant_drift(&params, &orig_start(k0, 0.2, 0.1), Chart::K3, 5.0)?);
    }
    let standalone = worst;
    let mut chain = 0.0f64;
    for mu in [0.5, 2.0] {
        let cfg = PassageConfig {
            rtol: 1e-12,
            atol: 1e-15,
            ..PassageConfig::default().with_mu(mu)
        };
        chain = chain.max(passage(&cfg)?.drift_max());
    }
    worst = worst.max(chain);
    Ok((
        worst < DRIFT_TOL,
        format!("standalone segments {standalone:.2e}, passage chain {chain:.2e} per unit time"),
    ))
}

fn c6_dichotomy() -> Check {
    let mut ok = true;
    let mut lines = Vec::new();
    let mut worst_dist = 0.0f64;
    for eps in [1e-3, 1e-4] {
        for k0 in [4, 8, 16] {
            let ex = passage(&PassageConfig::default().with_mu(0.5).with_eps(eps).with_k0(k0))?;
            let jp = passage(&PassageConfig::default().with_mu(2.0).with_eps(eps).with_k0(k0))?;
            let good = ex.outcome == Outcome::Exchange && ex.exchange_near_target() && jp.outcome == Outcome::Jump;
            ok &= good;
            worst_dist = worst_dist.max(ex.exchange_distance.unwrap_or(f64::INFINITY));
            if !good {
                lines.push(format!("eps={eps} k0={k0}: {} / {}", ex.outcome, jp.outcome));
            }
        }
    }
    let detail = if lines.is_empty() {
        format!("6 EXCHANGE + 6 JUMP, max exchange distance {worst_dist:.2e}")
    } else {
        lines.join("; ")
    };
    Ok((ok, detail))
}

fn c7_exit_scaling() -> Check {
    let eps = [1e-3, 1e-4, 1e-5];
    let base = PassageConfig::default().with_mu(2.0);
    let mut slopes = Vec::new();
    for k0 in [4, 8, 16] {
        slopes.push(exit_scaling_fit(&base, &eps, k0)?.slope);
    }
    let mid = slopes[1];
    let in_window = slopes.iter().all(|s| (s - EXIT_SLOPE_TARGET).abs() <= EXIT_SLOPE_WINDOW);
    let stable = slopes.iter().all(|s| (s - mid).abs() <= EXIT_SLOPE_STABILITY);
    Ok((
        in_window && stable,
        format!("slopes k0=4,8,16: {:.4}, {:.4}, {:.4}", slopes[0], slopes[1], slopes[2]),
    ))
}

fn c8_convergence() -> Check {
    let rep = convergence_report(&[2, 4, 8, 16, 32], -0.1, 0.5, 1.0, &CenterGrid::default(), K_REF)?;
    let ok = rep.monotone() && rep.hausdorff_monotone() && rep.decay_exponent >= DECAY_EXPONENT_MIN;
    let sup: Vec<String> = rep.rows.iter().map(|r| format!("{:.2e}", r.sup_distance)).collect();
    Ok((
        ok,
        format!(
            "sup [{}], decay exponent {:.2}, Hausdorff exponent {:.2}",
            sup.join(", "),
            rep.decay_exponent,
            rep.hausdorff_exponent
        ),
    ))
}

fn c9_modal_identity() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst = 0.0f64;
    for k0 in 1..=12 {
        let params = ModelParams::new(rng.gen_range(-1.0..3.0), 1.0, 1e-3, k0)?;
        for _ in 0..10 {
            let p = ChartPoint::k1(
                rng.gen_range(0.1..1.0),
                rng.gen_range(0.0..0.5),
                rng.gen_range(0.2..2.0),
                rng.gen_range(-1.0..1.0),
                modes(&mut rng, k0, 0.3),
                modes(&mut rng, k0, 0.3),
            );
            worst = worst.max(k1_pde_consistency(&params, &p)?);
        }
    }
    Ok((worst < MODAL_TOL, format!("k0 = 1..12, max defect {worst:.2e}")))
}

fn c10_k2_limit() -> Check {
    let cfg = LimitConfig::default();
    let rep = k2_limit_compare(&cfg)?;
    let mut exact = 0.0f64;
    for &eps in &cfg.eps_list {
        exact = k2_limit_distances(&cfg, eps, 0.0, 0.0)?.iter().fold(exact, |m, d| m.max(*d));
    }
    let per_eps: Vec<String> = cfg
        .eps_list
        .iter()
        .map(|e| {
            let d = rep.rows.iter().filter(|r| r.eps == *e).fold(0.0f64, |m, r| m.max(r.l2_distance));
            format!("{e:.0e}: {d:.2e}")
        })
        .collect();
    Ok((
        rep.monotone() && exact < LIMIT_EXACT_TOL,
        format!("sup distance {}; constant data {exact:.2e}", per_eps.join(", ")),
    ))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("coefficient oracle equivalence", c1_oracle),
        ("invariance residual order", c2_ray_slope),
        ("chart algebra", c3_chart_algebra),
        ("desingularization consistency", c4_desingularization),
        ("conserved quantities", c5_conserved),
        ("exchange/jump dichotomy", c6_dichotomy),
        ("exit scaling", c7_exit_scaling),
        ("manifold convergence", c8_convergence),
        ("modal identity", c9_modal_identity),
        ("planar limit of K2", c10_k2_limit),
    ];
    let mut failures = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (pass, detail) = match check() {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        failures += usize::from(!pass);
        println!(
            "{} {:>2} {name}: {detail} [{:.1} s]",
            if pass { "PASS" } else { "FAIL" },
            i + 1,
            start.elapsed().as_secs_f64()
        );
    }
    if failures > 0 {
        println!("{failures} criteria failed");
        std::process::exit(1);
    }
}
