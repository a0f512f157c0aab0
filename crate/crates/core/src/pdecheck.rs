//! Cross-checks between the Galerkin hierarchy and its PDE readings:
//! high-truncation reference runs, the chart-K1 moving-interval PDE as a
//! modal identity, and the planar limit of the scaling chart K2.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::charts::{field_k1, lift, Chart, ChartPoint, ChartSystem};
use crate::error::{Error, Result};
use crate::model::{GalerkinState, ModelParams};
use crate::ode::{integrate, integrate_to_section, Direction, FnSystem, Guard, OdeSystem, Section, SectionOutcome, Tolerances};
use crate::spectral::{eigenfunction, eigenvalue, grid, mean_product};

/// Per-step tolerance of reference runs.
pub const REFERENCE_RTOL: f64 = 1e-10;
pub const REFERENCE_ATOL: f64 = 1e-13;
/// Quadrature intervals per mode for the modal identity.
const QUAD_INTERVALS_PER_MODE: usize = 16;
/// `|U₀|` above this counts as blow-up of the planar limit.
pub const BLOWUP_LEVEL: f64 = 1e6;

/// Snapshots of a high-truncation run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceRun {
    pub k0_ref: usize,
    pub ts: Vec<f64>,
    pub states: Vec<GalerkinState>,
    /// `L²` norm of `(u, v)` per snapshot (coefficient `ℓ²` norm).
    pub norms: Vec<f64>,
}

/// `n + 1` uniform snapshot times on `[0, t_end]`.
pub fn snapshot_times(t_end: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|i| t_end * i as f64 / n.max(1) as f64).collect()
}

/// Integrates the original-coordinate Galerkin system at `params.k0` and
/// samples it at `times`.
pub fn reference_solve(params: &ModelParams, initial: &GalerkinState, times: &[f64]) -> Result<ReferenceRun> {
    let start = ChartPoint::orig(&initial.resized(params.k0), params.eps, params.a);
    let sys = ChartSystem::new(Chart::Orig, params);
    let ys = sample_at(&sys, &start.to_vec(), times, Tolerances::new(REFERENCE_RTOL, REFERENCE_ATOL))?;
    let mut states = Vec::with_capacity(times.len());
    for y in &ys {
        let p = ChartPoint::from_vec(Chart::Orig, y, params.k0)?;
        let mut u = vec![p.u1];
        u.extend(&p.modes_u);
        let mut v = vec![p.v1];
        v.extend(&p.modes_v);
        states.push(GalerkinState { u, v });
    }
    Ok(ReferenceRun {
        k0_ref: params.k0,
        ts: times.to_vec(),
        norms: states.iter().map(|s| s.norm()).collect(),
        states,
    })
}

/// Sup over common snapshots of the padded `L²` distance between two runs.
pub fn sup_distance(a: &ReferenceRun, b: &ReferenceRun) -> Result<f64> {
    if a.ts != b.ts {
        return Err(Error::domain("runs use different snapshot times"));
    }
    Ok(a.states
        .iter()
        .zip(&b.states)
        .map(|(x, y)| x.distance(y))
        .fold(0.0, f64::max))
}

/// One row of a truncation self-convergence table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelfConvergenceRow {
    pub k0: usize,
    /// `sup_t ‖x^{k0}(t) − x^{2k0}(t)‖`.
    pub sup_distance: f64,
}

/// Compares each `k0` against `2·k0` from the same initial data (built at
/// `2·max k0` and truncated).
pub fn self_convergence(
    params: &ModelParams,
    k0_list: &[usize],
    initial: impl Fn(usize) -> Result<GalerkinState> + Sync,
    times: &[f64],
) -> Result<Vec<SelfConvergenceRow>> {
    k0_list
        .par_iter()
        .map(|&k0| {
            let coarse = reference_solve(&params.with_k0(k0)?, &initial(k0)?, times)?;
            let fine = reference_solve(&params.with_k0(2 * k0)?, &initial(2 * k0)?, times)?;
            Ok(SelfConvergenceRow {
                k0,
                sup_distance: sup_distance(&coarse, &fine)?,
            })
        })
        .collect()
}

/// States at sorted `times`, integrating up to each time exactly.
pub fn sample_at<S: OdeSystem + ?Sized>(sys: &S, y0: &[f64], times: &[f64], tol: Tolerances) -> Result<Vec<Vec<f64>>> {
    if times.windows(2).any(|w| w[1] < w[0]) || times.first().is_some_and(|t| *t < 0.0) {
        return Err(Error::domain("snapshot times must be nonnegative and sorted"));
    }
    let mut t = 0.0;
    let mut y = y0.to_vec();
    let mut out = Vec::with_capacity(times.len());
    for &tk in times {
        if tk > t {
            y = integrate(sys, t, &y, tk, tol)?.last().to_vec();
            t = tk;
        }
        out.push(y.clone());
    }
    Ok(out)
}

fn trapezoid(samples: &[f64], dx: f64) -> f64 {
    let n = samples.len();
    dx * (samples.iter().sum::<f64>() - 0.5 * (samples[0] + samples[n - 1]))
}

/// Componentwise difference between the chart-K1 Galerkin field and the
/// modal projection of the moving-interval PDE
/// `∂u = √(2a₁)(u'' + u² − v²) + F u`, `∂v = √(2a₁)(ε₁r₁⁸ v'' + ε₁) + F v`,
/// `F = 2a₁ε₁μ + ‖u‖² − ‖v‖²`, together with `r₁, ε₁, a₁`.
///
/// The PDE side synthesizes `u, v` on a grid over `[−a₁, a₁]` and projects
/// with the trapezoid rule, which is exact for the cosine products involved.
/// Returns the max absolute defect over the compared components.
pub fn k1_pde_consistency(params: &ModelParams, point: &ChartPoint) -> Result<f64> {
    let d = k1_pde_defects(params, point)?;
    Ok(d.iter().fold(0.0f64, |m, x| m.max(x.abs())))
}

/// Per-component defects on the common layout (the fixed `u₁` slot reads 0).
pub fn k1_pde_defects(params: &ModelParams, point: &ChartPoint) -> Result<Vec<f64>> {
    let chart = field_k1(point, params)?;
    let k0 = params.k0;
    let (r, e1, a1, mu) = (point.r, point.eps_i, point.a_i, params.mu);
    let mut uc = vec![point.u1];
    uc.extend(&point.modes_u);
    let mut vc = vec![point.v1];
    vc.extend(&point.modes_v);
    let n = QUAD_INTERVALS_PER_MODE * k0.max(2) + 1;
    let xs = grid(a1, n);
    let dx = xs[1] - xs[0];
    let basis: Vec<Vec<f64>> = (1..=k0)
        .map(|k| xs.iter().map(|&x| eigenfunction(k, a1, x)).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;
    let synth = |c: &[f64]| -> Vec<f64> {
        (0..n).map(|i| c.iter().zip(&basis).map(|(ck, ek)| ck * ek[i]).sum()).collect()
    };
    let u = synth(&uc);
    let v = synth(&vc);
    let nonlin: Vec<f64> = u.iter().zip(&v).map(|(p, q)| p * p - q * q).collect();
    let norm2 = |f: &[f64]| trapezoid(&f.iter().map(|x| x * x).collect::<Vec<_>>(), dx);
    let f = 2.0 * a1 * e1 * mu + norm2(&u) - norm2(&v);
    let s = (2.0 * a1).sqrt();
    let proj = |g: &[f64], k: usize| trapezoid(&g.iter().zip(&basis[k - 1]).map(|(x, y)| x * y).collect::<Vec<_>>(), dx);
    let mut pde = vec![0.0; 2 * k0 + 3];
    pde[0] = -r * f / 3.0;
    pde[1] = 8.0 * e1 * f / 3.0;
    pde[2] = -2.0 * a1 * f / 3.0;
    pde[4] = s * e1 * mean_product(1, a1)? + f * vc[0];
    for k in 2..=k0 {
        let lam = eigenvalue(k, a1)?;
        pde[5 + k - 2] = s * (lam * uc[k - 1] + proj(&nonlin, k)) + f * uc[k - 1];
        pde[5 + k0 - 1 + k - 2] = s * e1 * r.powi(8) * lam * vc[k - 1] + f * vc[k - 1];
    }
    let lhs = chart.to_vec();
    Ok(lhs.iter().zip(&pde).enumerate().map(|(i, (x, y))| if i == 3 { 0.0 } else { x - y }).collect())
}

/// Setup for the comparison of the K2 Galerkin system with the planar limit
/// `U̇₀ = U₀² − V₀² + μ`, `V̇₀ = 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LimitConfig {
    /// Physical half-length; the K2 half-length is `a₂ = a ε^{1/4}`.
    pub a: f64,
    pub mu: f64,
    pub eps_list: Vec<f64>,
    pub k0: usize,
    /// Final time in the normalized clock `T = √(2a₂) τ`.
    pub t_end: f64,
    /// Snapshot times in `(0, t_end]`.
    pub snapshots: Vec<f64>,
    pub u0: f64,
    pub v0: f64,
    /// Normalized size of the higher `u`-mode perturbation.
    pub perturbation: f64,
    pub rtol: f64,
    pub atol: f64,
}

impl Default for LimitConfig {
    fn default() -> Self {
        LimitConfig {
            a: 1.0,
            mu: 0.0,
            eps_list: vec![1e-2, 1e-3, 1e-4],
            k0: 8,
            t_end: 1.0,
            snapshots: vec![0.25, 0.5, 0.75, 1.0],
            u0: -1.0,
            v0: -1.0,
            perturbation: 0.05,
            rtol: 1e-11,
            atol: 1e-13,
        }
    }
}

/// One snapshot distance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitRow {
    pub eps: f64,
    pub k0: usize,
    pub t_snapshot: f64,
    /// Mean-square `L²` distance over the scaled interval.
    pub l2_distance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitReport {
    pub rows: Vec<LimitRow>,
    /// Per `ε` in input order: max over snapshots.
    pub sup_distance: Vec<f64>,
    /// Set when the planar limit leaves `|U₀| < BLOWUP_LEVEL` before `t_end`.
    pub blowup_time: Option<f64>,
}

impl LimitReport {
    /// Whether the sup distances decrease strictly along the `ε` list.
    pub fn monotone(&self) -> bool {
        self.sup_distance.windows(2).all(|w| w[1] < w[0])
    }
}

/// Planar limit trajectory at `times`, or the blow-up time.
pub fn planar_limit(mu: f64, u0: f64, v0: f64, times: &[f64], tol: Tolerances) -> Result<std::result::Result<Vec<(f64, f64)>, f64>> {
    let t_end = times.iter().fold(0.0f64, |m, t| m.max(*t));
    let sys = FnSystem::new(2, move |_t, y: &[f64], d: &mut [f64]| {
        d[0] = y[0] * y[0] - y[1] * y[1] + mu;
        d[1] = 1.0;
    });
    let stop = [Section::new("end", Direction::Rising, move |_y: &[f64]| -1.0)];
    let guard = [Guard::new("blow-up", |y: &[f64]| y[0].abs() < BLOWUP_LEVEL)];
    if let SectionOutcome::Miss {
        t,
        reason: crate::ode::MissReason::Guard(_),
        ..
    } = integrate_to_section(&sys, 0.0, &[u0, v0], &stop, &guard, t_end, tol, |_| {})?
    {
        return Ok(Err(t));
    }
    Ok(Ok(sample_at(&sys, &[u0, v0], times, tol)?
        .into_iter()
        .map(|y| (y[0], y[1]))
        .collect()))
}

/// K2 initial point: first mode at the normalized constants, `u`-modes
/// `(−1)^k p k^{-2}` in normalized units, `v`-modes zero.
pub fn k2_limit_start(cfg: &LimitConfig, eps: f64, r2: f64, perturbation: f64) -> ChartPoint {
    let a2 = cfg.a * eps.powf(0.25);
    let s = (2.0 * a2).sqrt();
    let modes_u = (2..=cfg.k0)
        .map(|k| {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            sign * perturbation * s / (k * k) as f64
        })
        .collect();
    ChartPoint::k2(r2, a2, s * cfg.u0, s * cfg.v0, modes_u, vec![0.0; cfg.k0 - 1])
}

/// Normalized mean-square distance of a K2 point from the constants `(U₀, V₀)`.
fn limit_distance(p: &ChartPoint, u0: f64, v0: f64) -> f64 {
    let two_a2 = 2.0 * p.a_i;
    let s = two_a2.sqrt();
    let modes: f64 = p.modes_u.iter().chain(&p.modes_v).map(|x| x * x).sum::<f64>() / two_a2;
    ((p.u1 / s - u0).powi(2) + (p.v1 / s - v0).powi(2) + modes).sqrt()
}

/// Runs the K2 system for one `ε` with `r₂`, perturbation given, returning
/// the distances at the snapshots.
pub fn k2_limit_distances(cfg: &LimitConfig, eps: f64, r2: f64, perturbation: f64) -> Result<Vec<f64>> {
    let tol = Tolerances::new(cfg.rtol, cfg.atol);
    let limit = match planar_limit(cfg.mu, cfg.u0, cfg.v0, &cfg.snapshots, tol)? {
        Ok(l) => l,
        Err(t) => return Err(Error::Numeric(format!("planar limit blows up at T = {t}"))),
    };
    let start = k2_limit_start(cfg, eps, r2, perturbation);
    let s = (2.0 * start.a_i).sqrt();
    let params = ModelParams::new(cfg.mu, cfg.a, eps, cfg.k0)?;
    let sys = ChartSystem::new(Chart::K2, &params);
    let taus: Vec<f64> = cfg.snapshots.iter().map(|t| t / s).collect();
    let ys = sample_at(&sys, &start.to_vec(), &taus, tol)?;
    ys.iter()
        .zip(&limit)
        .map(|(y, &(u0, v0))| Ok(limit_distance(&ChartPoint::from_vec(Chart::K2, y, cfg.k0)?, u0, v0)))
        .collect()
}

/// K2 Galerkin system with `r₂ = ε^{1/8}`, `a₂ = aε^{1/4}` against the planar limit.
pub fn k2_limit_compare(cfg: &LimitConfig) -> Result<LimitReport> {
    if cfg.k0 < 1 || cfg.eps_list.is_empty() || cfg.eps_list.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::Config("need k0 >= 1 and a nonempty list of positive eps".into()));
    }
    if cfg.snapshots.iter().any(|t| !(*t > 0.0 && *t <= cfg.t_end)) {
        return Err(Error::Config("snapshots must lie in (0, t_end]".into()));
    }
    let tol = Tolerances::new(cfg.rtol, cfg.atol);
    if let Err(t) = planar_limit(cfg.mu, cfg.u0, cfg.v0, &cfg.snapshots, tol)? {
        return Ok(LimitReport {
            rows: Vec::new(),
            sup_distance: Vec::new(),
            blowup_time: Some(t),
        });
    }
    let per_eps: Vec<Vec<f64>> = cfg
        .eps_list
        .par_iter()
        .map(|&eps| k2_limit_distances(cfg, eps, eps.powf(0.125), cfg.perturbation))
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for (&eps, ds) in cfg.eps_list.iter().zip(&per_eps) {
        for (&t, &d) in cfg.snapshots.iter().zip(ds) {
            rows.push(LimitRow {
                eps,
                k0: cfg.k0,
                t_snapshot: t,
                l2_distance: d,
            });
        }
    }
    Ok(LimitReport {
        rows,
        sup_distance: per_eps.iter().map(|d| d.iter().fold(0.0, |m: f64, x| m.max(*x))).collect(),
        blowup_time: None,
    })
}

/// Lifts an original-coordinate state into K1 and evaluates the modal identity.
pub fn k1_pde_consistency_at(params: &ModelParams, state: &GalerkinState, eps: f64) -> Result<f64> {
    let p = lift(state, eps, params.a, Chart::K1)?;
    k1_pde_consistency(params, &p)
}
