//! Passage through the blown-up transcritical point: entry near the
//! attracting branch in chart K1, transit through the scaling chart K2, and
//! exit either back through K1 (exchange of stability) or through K3 (jump).

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::charts::{blowdown, kappa12, kappa21, kappa23, lift, Chart, ChartPoint, ChartSystem, IA, IE, IR, IU1, IV1};
use crate::error::{Error, Result};
use crate::manifolds::ls_slope;
use crate::model::{initial_condition, DecayProfile, ModelParams};
use crate::ode::{integrate_to_section, BoxConstraint, Direction, Guard, Section, SectionOutcome, StepView, Tolerances};
use crate::spectral::{b_coeff, inverse_b_sum_infinite};

/// Upper bound on the K1 exit half-length `ν`.
pub const NU_MAX: f64 = PI * PI / std::f64::consts::SQRT_2;
/// Default K1 radius of the entry and exit sections.
pub const DEFAULT_RHO: f64 = 0.8;
/// Default half-width of the `v_{1,2}` window on the exchange exit of K2.
pub const DEFAULT_BETA: f64 = 0.5;
/// Largest admissible default `δ`.
pub const DELTA_MAX: f64 = 0.1;
/// Fraction of the `δ` bound used for the default `δ`.
pub const DELTA_SAFETY: f64 = 0.5;
/// Default size of the higher-mode entry coefficients, `|u_k| = A k^{-p}`.
pub const DEFAULT_MODE_AMPLITUDE: f64 = 1e-3;
/// Default per-segment cap on desingularized time.
pub const DEFAULT_MAX_TIME: f64 = 1e7;
/// Radius (relative to `ρ³`) of the exchange target ball.
pub const EXCHANGE_BALL: f64 = 0.1;
/// K2 trajectories with `|u_{1,2}|` or `|v_{1,2}|` above this multiple of
/// the section level are treated as having left the chart box.
const K2_ESCAPE_FACTOR: f64 = 50.0;

/// Ω(μ) default: `2 √(max(μ−1, 0) + 1)`.
pub fn default_omega(mu: f64) -> f64 {
    2.0 * ((mu - 1.0).max(0.0) + 1.0).sqrt()
}

/// Constant `K = max(C_u, C_v) Σ_{k≥2} 1/|b_k|` of the `δ` constraint.
pub fn k_constant(c_u: f64, c_v: f64) -> f64 {
    c_u.max(c_v) * inverse_b_sum_infinite()
}

/// Which of `a` and `ν = a(ε/δ)^{1/4}` is held fixed when `ε` varies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scaling {
    /// `ν` fixed; the half-length `a = ν(δ/ε)^{1/4}` grows as `ε → 0` and
    /// the K2 half-length `a₂ = δ^{1/4}ν` stays fixed.
    FixedNu,
    /// `a` fixed; `ν` is derived.
    FixedA,
}

/// Section and entry parameters of a passage run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PassageConfig {
    pub mu: f64,
    pub scaling: Scaling,
    /// Half-length, used with [`Scaling::FixedA`].
    pub a: f64,
    /// K1 exit half-length `a₁`, used with [`Scaling::FixedNu`].
    pub nu: f64,
    pub eps: f64,
    pub k0: usize,
    pub rho: f64,
    pub beta: f64,
    /// `ε₁` level of the K1 exit section; derived when absent.
    pub delta: Option<f64>,
    pub c_u: f64,
    pub c_v: f64,
    /// Cap on `v_{1,2}` at the jump exit of K2; `default_omega(μ)` when absent.
    pub omega: Option<f64>,
    /// Entry data `u_k = v_k = (−1)^k A k^{-p}` for `k ≥ 2`.
    pub mode_amplitude: f64,
    pub decay_exponent: f64,
    pub rtol: f64,
    pub atol: f64,
    pub max_time: f64,
}

impl Default for PassageConfig {
    fn default() -> Self {
        PassageConfig {
            mu: 0.5,
            scaling: Scaling::FixedNu,
            a: 1.0,
            nu: 1.0,
            eps: 1e-4,
            k0: 8,
            rho: DEFAULT_RHO,
            beta: DEFAULT_BETA,
            delta: None,
            c_u: 1.0,
            c_v: 1.0,
            omega: None,
            mode_amplitude: DEFAULT_MODE_AMPLITUDE,
            decay_exponent: 2.0,
            rtol: 1e-9,
            atol: 1e-12,
            max_time: DEFAULT_MAX_TIME,
        }
    }
}

/// Derived section levels after validation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SectionLevels {
    /// Half-length of the run.
    pub a: f64,
    pub rho: f64,
    pub beta: f64,
    pub delta: f64,
    /// `a₁` at the K1 exit section, `a (ε/δ)^{1/4}`.
    pub nu: f64,
    pub omega: f64,
    pub k: f64,
    /// `δ` bound `4ν²(μ−1)²/K²`.
    pub delta_bound: f64,
}

impl PassageConfig {
    pub fn with_mu(mut self, mu: f64) -> Self {
        self.mu = mu;
        self
    }

    pub fn with_eps(mut self, eps: f64) -> Self {
        self.eps = eps;
        self
    }

    pub fn with_k0(mut self, k0: usize) -> Self {
        self.k0 = k0;
        self
    }

    /// Fixed half-length `a`.
    pub fn with_fixed_a(mut self, a: f64) -> Self {
        self.scaling = Scaling::FixedA;
        self.a = a;
        self
    }

    /// Fixed K1 exit half-length `ν`.
    pub fn with_fixed_nu(mut self, nu: f64) -> Self {
        self.scaling = Scaling::FixedNu;
        self.nu = nu;
        self
    }

    pub fn tolerances(&self) -> Tolerances {
        Tolerances::new(self.rtol, self.atol)
    }

    /// Validates the configuration and derives `δ`, `ν`, `Ω`.
    pub fn levels(&self) -> Result<SectionLevels> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.eps > 0.0) || self.k0 < 1 {
            return bad(format!("need eps > 0 and k0 >= 1 (eps={}, k0={})", self.eps, self.k0));
        }
        if !self.mu.is_finite() || self.mu == 1.0 {
            return bad("mu = 1 is the canard case; passage needs mu != 1".into());
        }
        if !(self.rho > 0.0 && self.rho < 1.0) || !(self.beta > 0.0) {
            return bad(format!("need 0 < rho < 1 and beta > 0 (rho={}, beta={})", self.rho, self.beta));
        }
        if !(self.c_u > 0.0 && self.c_v > 0.0) {
            return bad("mode caps C_u, C_v must be positive".into());
        }
        if !(self.rtol > 0.0 && self.atol > 0.0 && self.max_time > 0.0) {
            return bad("tolerances and max_time must be positive".into());
        }
        let k = k_constant(self.c_u, self.c_v);
        let dm = (self.mu - 1.0).powi(2);
        let (delta, nu, a) = match self.scaling {
            Scaling::FixedNu => {
                if !(self.nu > 0.0) {
                    return bad(format!("nu must be positive, got {}", self.nu));
                }
                let delta = self
                    .delta
                    .unwrap_or_else(|| DELTA_MAX.min(DELTA_SAFETY * 4.0 * self.nu.powi(2) * dm / (k * k)));
                (delta, self.nu, self.nu * (delta / self.eps).powf(0.25))
            }
            Scaling::FixedA => {
                if !(self.a > 0.0) {
                    return bad(format!("a must be positive, got {}", self.a));
                }
                // δ = (1/2)·4ν²(μ−1)²/K² with ν = a(ε/δ)^{1/4}, solved for δ.
                let delta = self.delta.unwrap_or_else(|| {
                    DELTA_MAX.min((DELTA_SAFETY * 4.0 * self.a.powi(2) * self.eps.sqrt() * dm / (k * k)).powf(2.0 / 3.0))
                });
                (delta, self.a * (self.eps / delta).powf(0.25), self.a)
            }
        };
        if !(delta > 0.0 && delta < 1.0) {
            return bad(format!("delta = {delta} must lie in (0, 1)"));
        }
        let delta_bound = 4.0 * nu * nu * dm / (k * k);
        if !(delta < delta_bound) {
            return bad(format!(
                "delta < 4 nu^2 (mu-1)^2 / K^2 violated: {delta:e} >= {delta_bound:e} (nu={nu:e}, K={k:e})"
            ));
        }
        if !(nu < NU_MAX) {
            return bad(format!("nu < pi^2/sqrt(2) violated: nu = {nu}"));
        }
        let eps1_in = self.eps / self.rho.powi(8);
        if !(eps1_in < delta) {
            return bad(format!(
                "entry eps1 = eps/rho^8 = {eps1_in:e} must be below delta = {delta:e}"
            ));
        }
        let omega = self.omega.unwrap_or_else(|| default_omega(self.mu));
        if !(omega > 0.0) {
            return bad("omega must be positive".into());
        }
        Ok(SectionLevels {
            a,
            rho: self.rho,
            beta: self.beta,
            delta,
            nu,
            omega,
            k,
            delta_bound,
        })
    }

    /// Model parameters of the run (`ε` is carried by the chart coordinates).
    pub fn params(&self, levels: &SectionLevels) -> Result<ModelParams> {
        ModelParams::new(self.mu, levels.a, self.eps, self.k0)
    }

    /// Entry point on the K1 entry section: the lifted near-homogeneous state
    /// with `u₁ = v₁ = −ρ³`.
    pub fn entry(&self, levels: &SectionLevels) -> Result<ChartPoint> {
        let a = levels.a;
        let s = initial_condition(
            -self.rho.powi(3),
            self.mode_amplitude * PI * PI / (2.0 * a).powi(3),
            DecayProfile {
                exponent: self.decay_exponent,
            },
            self.k0,
            a,
        )?;
        lift(&s, self.eps, a, Chart::K1)
    }
}

/// How a passage ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Outcome {
    Exchange,
    Jump,
    EscapedBox,
    MaxTime,
}

impl std::fmt::Display for Outcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Outcome::Exchange => "EXCHANGE",
            Outcome::Jump => "JUMP",
            Outcome::EscapedBox => "ESCAPED_BOX",
            Outcome::MaxTime => "MAX_TIME",
        })
    }
}

/// One section crossing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ItineraryEntry {
    pub segment: usize,
    pub chart: Chart,
    pub section: String,
    pub point: ChartPoint,
    /// Desingularized time within the segment.
    pub segment_time: f64,
    /// Sum of the segment times so far (strictly increasing along the itinerary).
    pub elapsed: f64,
}

/// Relative drift of the chart invariants over one segment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentDrift {
    pub chart: Chart,
    pub duration: f64,
    /// `max |ΔQ/Q₀| / max(T, 1)` for `Q = r⁸ε_i` (or `r` in K2).
    pub eps_drift: f64,
    /// Same for `Q = r⁻² a_i` (or `a₂` in K2).
    pub a_drift: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PassageReport {
    pub config: PassageConfig,
    pub levels: SectionLevels,
    pub itinerary: Vec<ItineraryEntry>,
    pub outcome: Outcome,
    /// Original-coordinate `v₁` at the end of the run.
    pub exit_v: f64,
    /// Original-coordinate `u₁` at the end of the run.
    pub exit_u: f64,
    /// Distance of the final original state from `(−ρ³, ρ³, 0, …)`, exchange only.
    pub exchange_distance: Option<f64>,
    /// `v_{1,3}` at the K3 entry section, jump only.
    pub v13_entry: Option<f64>,
    pub drifts: Vec<SegmentDrift>,
    /// Per mode `k = 2..`: max of `|u_k|, |v_k|` over the run in units of `ε^{3/8}`.
    pub envelope: Vec<f64>,
    /// Per mode: max over the K2 segment of `u_{k,2}²|b_k|/δ^{3/4}` and
    /// `v_{k,2}²|b_k|/δ^{3/4}`, to be compared with `C_u`, `C_v`.
    pub k2_cap_ratio_u: Vec<f64>,
    pub k2_cap_ratio_v: Vec<f64>,
    pub detail: Option<String>,
}

impl PassageReport {
    pub fn n_sections(&self) -> usize {
        self.itinerary.len()
    }

    pub fn drift_max(&self) -> f64 {
        self.drifts.iter().fold(0.0f64, |m, d| m.max(d.eps_drift).max(d.a_drift))
    }

    pub fn mode_env_max(&self) -> f64 {
        self.envelope.iter().fold(0.0f64, |m, x| m.max(*x))
    }

    /// Whether the K2 mode caps held on the whole K2 segment.
    pub fn caps_ok(&self) -> bool {
        let c = &self.config;
        self.k2_cap_ratio_u.iter().all(|x| *x <= c.c_u) && self.k2_cap_ratio_v.iter().all(|x| *x <= c.c_v)
    }

    /// The exchange target check with radius `EXCHANGE_BALL·ρ³`.
    pub fn exchange_near_target(&self) -> bool {
        self.exchange_distance
            .is_some_and(|d| d <= EXCHANGE_BALL * self.config.rho.powi(3))
    }
}

struct Tracker {
    eps_unit: f64,
    envelope: Vec<f64>,
    cap_u: Vec<f64>,
    cap_v: Vec<f64>,
    delta: f64,
}

impl Tracker {
    fn observe(&mut self, chart: Chart, y: &[f64], k0: usize) {
        let r3 = if chart == Chart::K2 { self.eps_unit } else { y[IR].powi(3) } / self.eps_unit;
        let scale = if chart == Chart::Orig { 1.0 / self.eps_unit } else { r3 };
        for m in 0..k0 - 1 {
            let uk = y[5 + m];
            let vk = y[5 + k0 - 1 + m];
            self.envelope[m] = self.envelope[m].max(uk.abs() * scale).max(vk.abs() * scale);
            if chart == Chart::K2 {
                let w = b_coeff(m + 2).abs() / self.delta.powf(0.75);
                self.cap_u[m] = self.cap_u[m].max(uk * uk * w);
                self.cap_v[m] = self.cap_v[m].max(vk * vk * w);
            }
        }
    }
}

struct DriftMeter {
    chart: Chart,
    q0: (f64, f64),
    max: (f64, f64),
    t0: f64,
    t: f64,
}

fn invariants(chart: Chart, y: &[f64]) -> (f64, f64) {
    match chart {
        Chart::K2 => (y[IR], y[IA]),
        _ => (y[IR].powi(8) * y[IE], y[IA] / (y[IR] * y[IR])),
    }
}

impl DriftMeter {
    fn new(chart: Chart, t0: f64, y: &[f64]) -> Self {
        DriftMeter {
            chart,
            q0: invariants(chart, y),
            max: (0.0, 0.0),
            t0,
            t: t0,
        }
    }

    fn observe(&mut self, v: &StepView<'_>) {
        let q = invariants(self.chart, v.y);
        let rel = |x: f64, x0: f64| if x0 == 0.0 { (x - x0).abs() } else { ((x - x0) / x0).abs() };
        self.max.0 = self.max.0.max(rel(q.0, self.q0.0));
        self.max.1 = self.max.1.max(rel(q.1, self.q0.1));
        self.t = v.t;
    }

    fn finish(self) -> SegmentDrift {
        let dur = self.t - self.t0;
        SegmentDrift {
            chart: self.chart,
            duration: dur,
            eps_drift: self.max.0 / dur.max(1.0),
            a_drift: self.max.1 / dur.max(1.0),
        }
    }
}

struct Segment {
    hit: Option<(String, f64, Vec<f64>)>,
    end: Vec<f64>,
    outcome: Option<(Outcome, String)>,
    drift: SegmentDrift,
}

fn run_segment(
    sys: &ChartSystem<'_>,
    y0: &[f64],
    sections: &[Section<'_>],
    guards: &[Guard<'_>],
    cfg: &PassageConfig,
    tracker: &mut Tracker,
) -> Result<Segment> {
    let chart = sys.chart;
    let k0 = sys.params.k0;
    let mut meter = DriftMeter::new(chart, 0.0, y0);
    let out = integrate_to_section(sys, 0.0, y0, sections, guards, cfg.max_time, cfg.tolerances(), |v| {
        meter.observe(&v);
        tracker.observe(chart, v.y, k0);
    })?;
    let drift = meter.finish();
    Ok(match out {
        SectionOutcome::Hit(h) => Segment {
            end: h.y.clone(),
            hit: Some((h.name, h.t, h.y)),
            outcome: None,
            drift,
        },
        SectionOutcome::BoxViolation { hit, label, value, lo, hi } => Segment {
            end: hit.y.clone(),
            outcome: Some((
                Outcome::EscapedBox,
                format!("{:?} section {}: {label} = {value:e} outside [{lo:e}, {hi:e}]", chart, hit.name),
            )),
            hit: Some((hit.name, hit.t, hit.y)),
            drift,
        },
        SectionOutcome::Miss { t, y, reason } => {
            let (o, why) = match reason {
                crate::ode::MissReason::MaxTime => (Outcome::MaxTime, format!("{chart:?}: no section before t = {t:e}")),
                crate::ode::MissReason::Guard(g) => (Outcome::EscapedBox, format!("{chart:?}: left {g} at t = {t:e}")),
            };
            Segment {
                hit: None,
                end: y,
                outcome: Some((o, why)),
                drift,
            }
        }
    })
}

fn finite_guard<'a>() -> Guard<'a> {
    Guard::new("finite state", |y: &[f64]| y.iter().all(|x| x.is_finite()))
}

/// Runs one passage from the lifted entry point.
pub fn passage(cfg: &PassageConfig) -> Result<PassageReport> {
    let levels = cfg.levels()?;
    let params = cfg.params(&levels)?;
    let entry = cfg.entry(&levels)?;
    passage_from(cfg, &levels, &params, entry)
}

fn passage_from(
    cfg: &PassageConfig,
    levels: &SectionLevels,
    params: &ModelParams,
    entry: ChartPoint,
) -> Result<PassageReport> {
    let k0 = cfg.k0;
    let delta = levels.delta;
    let rho = levels.rho;
    let mut tracker = Tracker {
        eps_unit: cfg.eps.powf(0.375),
        envelope: vec![0.0; k0.saturating_sub(1)],
        cap_u: vec![0.0; k0.saturating_sub(1)],
        cap_v: vec![0.0; k0.saturating_sub(1)],
        delta,
    };
    let mut report = PassageReport {
        config: cfg.clone(),
        levels: *levels,
        itinerary: vec![ItineraryEntry {
            segment: 0,
            chart: Chart::K1,
            section: "K1 entry r1 = rho".into(),
            point: entry.clone(),
            segment_time: 0.0,
            elapsed: 0.0,
        }],
        outcome: Outcome::MaxTime,
        exit_v: f64::NAN,
        exit_u: f64::NAN,
        exchange_distance: None,
        v13_entry: None,
        drifts: Vec::new(),
        envelope: Vec::new(),
        k2_cap_ratio_u: Vec::new(),
        k2_cap_ratio_v: Vec::new(),
        detail: None,
    };
    let mut elapsed = 0.0;
    let mut record = |report: &mut PassageReport, seg: usize, chart: Chart, name: String, t: f64, y: &[f64]| -> Result<()> {
        elapsed += t;
        report.itinerary.push(ItineraryEntry {
            segment: seg,
            chart,
            section: name,
            point: ChartPoint::from_vec(chart, y, k0)?,
            segment_time: t,
            elapsed,
        });
        Ok(())
    };
    let finish = |mut report: PassageReport, tracker: Tracker, chart: Chart, y: &[f64], outcome: Outcome, detail: Option<String>| -> Result<PassageReport> {
        let p = ChartPoint::from_vec(chart, y, k0)?;
        let (s, _, _) = blowdown(&p)?;
        report.exit_u = s.u[0];
        report.exit_v = s.v[0];
        report.outcome = outcome;
        report.detail = detail;
        report.envelope = tracker.envelope;
        report.k2_cap_ratio_u = tracker.cap_u;
        report.k2_cap_ratio_v = tracker.cap_v;
        if outcome == Outcome::Exchange {
            let r3 = rho.powi(3);
            let mut d2 = (s.u[0] + r3).powi(2) + (s.v[0] - r3).powi(2);
            d2 += s.u[1..].iter().chain(&s.v[1..]).map(|x| x * x).sum::<f64>();
            report.exchange_distance = Some(d2.sqrt());
        }
        Ok(report)
    };

    // Segment 1: K1 from r1 = rho to eps1 = delta.
    let k1 = ChartSystem::new(Chart::K1, params);
    let y0 = entry.to_vec();
    let s1 = [Section::new("K1 exit eps1 = delta", Direction::Rising, move |y: &[f64]| y[IE] - delta)];
    let g1 = [finite_guard(), Guard::new("K1 box |v11| < 2", |y: &[f64]| y[IV1].abs() < 2.0 && y[IR] > 0.0)];
    let seg = run_segment(&k1, &y0, &s1, &g1, cfg, &mut tracker)?;
    report.drifts.push(seg.drift);
    if let Some((o, why)) = seg.outcome {
        return finish(report, tracker, Chart::K1, &seg.end, o, Some(why));
    }
    let (name, t, y) = seg.hit.expect("hit");
    record(&mut report, 1, Chart::K1, name, t, &y)?;
    let p2 = kappa12(&ChartPoint::from_vec(Chart::K1, &y, k0)?)?;

    // Segment 2: K2 to either exit.
    let lvl = delta.powf(-0.375);
    let v_cap = levels.omega * delta.powf(-0.125);
    let beta = levels.beta;
    let k2 = ChartSystem::new(Chart::K2, params);
    let s2 = [
        Section::new("K2 exit u12 = -delta^(-3/8)", Direction::Falling, move |y: &[f64]| y[IU1] + lvl)
            .with_box(BoxConstraint::new("v12", lvl - beta, lvl + beta, |y: &[f64]| y[IV1])),
        Section::new("K2 exit u12 = delta^(-3/8)", Direction::Rising, move |y: &[f64]| y[IU1] - lvl)
            .with_box(BoxConstraint::new("v12", f64::NEG_INFINITY, v_cap, |y: &[f64]| y[IV1])),
    ];
    let esc = K2_ESCAPE_FACTOR * lvl.max(v_cap);
    let g2 = [
        finite_guard(),
        Guard::new("K2 box", move |y: &[f64]| y[IU1].abs() < esc && y[IV1].abs() < esc),
    ];
    let seg = run_segment(&k2, &p2.to_vec(), &s2, &g2, cfg, &mut tracker)?;
    report.drifts.push(seg.drift);
    if let Some((o, why)) = seg.outcome {
        if let Some((name, t, y)) = &seg.hit {
            record(&mut report, 2, Chart::K2, name.clone(), *t, y)?;
        }
        return finish(report, tracker, Chart::K2, &seg.end, o, Some(why));
    }
    let (name, t, y) = seg.hit.expect("hit");
    let exchange = y[IU1] < 0.0;
    record(&mut report, 2, Chart::K2, name, t, &y)?;
    let p2_out = ChartPoint::from_vec(Chart::K2, &y, k0)?;

    // Segment 3: back to K1 (exchange) or on to K3 (jump), until r = rho.
    let (chart3, p3) = if exchange {
        (Chart::K1, kappa21(&p2_out)?)
    } else {
        (Chart::K3, kappa23(&p2_out)?)
    };
    if !exchange {
        report.v13_entry = Some(p3.v1);
    }
    let sys3 = ChartSystem::new(chart3, params);
    let s3 = [Section::new(
        if exchange { "K1 exit r1 = rho" } else { "K3 exit r3 = rho" },
        Direction::Rising,
        move |y: &[f64]| y[IR] - rho,
    )];
    let g3 = [
        finite_guard(),
        Guard::new("chart box |v1| < 2", |y: &[f64]| y[IV1].abs() < 2.0 && y[IR] > 0.0),
    ];
    let seg = run_segment(&sys3, &p3.to_vec(), &s3, &g3, cfg, &mut tracker)?;
    report.drifts.push(seg.drift);
    if let Some((o, why)) = seg.outcome {
        return finish(report, tracker, chart3, &seg.end, o, Some(why));
    }
    let (name, t, y) = seg.hit.expect("hit");
    record(&mut report, 3, chart3, name, t, &y)?;
    let outcome = if exchange { Outcome::Exchange } else { Outcome::Jump };
    finish(report, tracker, chart3, &y, outcome, None)
}

/// Per-mode maxima of the run envelope next to the K2 caps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeEnvelope {
    pub k: usize,
    /// `max |u_k|, |v_k|` over the run, in units of `ε^{3/8}`.
    pub amplitude: f64,
    /// `√(C δ^{3/4}/|b_k|)`, the K2 cap on `|u_{k,2}|`, `|v_{k,2}|`.
    pub cap: f64,
    pub cap_ratio_u: f64,
    pub cap_ratio_v: f64,
}

pub fn mode_envelope(report: &PassageReport) -> Vec<ModeEnvelope> {
    let c = report.config.c_u.max(report.config.c_v);
    report
        .envelope
        .iter()
        .enumerate()
        .map(|(m, &amp)| {
            let k = m + 2;
            ModeEnvelope {
                k,
                amplitude: amp,
                cap: (c * report.levels.delta.powf(0.75) / b_coeff(k).abs()).sqrt(),
                cap_ratio_u: report.k2_cap_ratio_u.get(m).copied().unwrap_or(0.0),
                cap_ratio_v: report.k2_cap_ratio_v.get(m).copied().unwrap_or(0.0),
            }
        })
        .collect()
}

/// Fitted power law of the exit slow variable against `ε`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub k0: usize,
    pub eps: Vec<f64>,
    pub exit_v: Vec<f64>,
    pub slope: f64,
    pub reports: Vec<PassageReport>,
}

/// Runs a jump passage per `ε` (in parallel) and fits `log|exit_v|` against `log ε`.
pub fn exit_scaling_fit(base: &PassageConfig, eps_list: &[f64], k0: usize) -> Result<ScalingFit> {
    if !(base.mu > 1.0) {
        return Err(Error::Config(format!("exit scaling needs mu > 1, got {}", base.mu)));
    }
    if eps_list.len() < 2 {
        return Err(Error::Config("need at least two eps values".into()));
    }
    let (lo, hi) = eps_list
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(l, h), &e| (l.min(e), h.max(e)));
    if !((hi / lo).log10() >= 1.5) {
        return Err(Error::Config(format!(
            "eps list must span at least 1.5 decades, spans {:.2}",
            (hi / lo).log10()
        )));
    }
    let reports: Vec<PassageReport> = eps_list
        .par_iter()
        .map(|&e| passage(&base.clone().with_eps(e).with_k0(k0)))
        .collect::<Result<_>>()?;
    let failing: Vec<String> = reports
        .iter()
        .filter(|r| r.outcome != Outcome::Jump)
        .map(|r| format!("eps={:e} ({})", r.config.eps, r.outcome))
        .collect();
    if !failing.is_empty() {
        return Err(Error::Numeric(format!("passage did not jump for {}", failing.join(", "))));
    }
    let exit_v: Vec<f64> = reports.iter().map(|r| r.exit_v).collect();
    let lx: Vec<f64> = eps_list.iter().map(|e| e.ln()).collect();
    let ly: Vec<f64> = exit_v.iter().map(|v| v.abs().max(f64::MIN_POSITIVE).ln()).collect();
    Ok(ScalingFit {
        k0,
        eps: eps_list.to_vec(),
        exit_v,
        slope: ls_slope(&lx, &ly),
        reports,
    })
}
