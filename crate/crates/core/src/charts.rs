//! Blow-up charts K1 (entry), K2 (scaling) and K3 (exit): blow-down and lift
//! maps, desingularized chart vector fields, and transition maps.
//!
//! Every chart point uses the common layout
//! `[r, eps_i, a_i, u1, v1, U_2..U_k0, V_2..V_k0]`. The slots that a chart
//! fixes hold their constant value: `r = 1` in the original chart,
//! `u1 = -1` in K1, `eps_i = 1` in K2 and `u1 = +1` in K3. The blow-down is
//! then uniform: `u = r³ u1`, `v = r³ v1`, modes times `r³`, `ε = r⁸ eps_i`,
//! `a = r⁻² a_i`.

use std::f64::consts::SQRT_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jet::Scalar;
use crate::model::{coupling_row, field_terms, mode_energy, FieldVar, GalerkinState, ModelParams};
use crate::ode::OdeSystem;

/// Chart coordinates below this `a_i` make the stiff coefficient `a_i^{-3/2}`
/// unusable.
pub const A_FLOOR: f64 = 1e-8;

/// Quasi-homogeneous weights of `(u, v, ε, a)` in the blow-up.
pub const WEIGHT_U: f64 = 3.0;
pub const WEIGHT_V: f64 = 3.0;
pub const WEIGHT_EPS: f64 = 8.0;
pub const WEIGHT_A: f64 = -2.0;
/// Power of `r` removed by desingularization.
pub const DESING_POWER: f64 = 3.0;

pub(crate) const IR: usize = 0;
pub(crate) const IE: usize = 1;
pub(crate) const IA: usize = 2;
pub(crate) const IU1: usize = 3;
pub(crate) const IV1: usize = 4;
pub(crate) const IMODES: usize = 5;

/// Coordinate system tag.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Chart {
    #[serde(rename = "ORIG")]
    Orig,
    K1,
    K2,
    K3,
}

impl Chart {
    /// Fixed value of the `u1` slot in the directional charts.
    fn fixed_u1(self) -> Option<f64> {
        match self {
            Chart::K1 => Some(-1.0),
            Chart::K3 => Some(1.0),
            _ => None,
        }
    }
}

/// Tagged coordinates in one chart.
#[derive(Clone, Debug, PartialEq)]
pub struct ChartPoint {
    pub chart: Chart,
    pub r: f64,
    /// `ε₁`, `ε₃`, or `ε` in the original chart; `1` in K2.
    pub eps_i: f64,
    pub a_i: f64,
    /// `u` slot of the first mode (`u_{1,2}` in K2, fixed `∓1` in K1/K3).
    pub u1: f64,
    /// `v_{1,i}`.
    pub v1: f64,
    /// `u_{k,i}` for `k = 2..=k0`.
    pub modes_u: Vec<f64>,
    /// `v_{k,i}` for `k = 2..=k0`.
    pub modes_v: Vec<f64>,
}

impl ChartPoint {
    pub fn orig(state: &GalerkinState, eps: f64, a: f64) -> Self {
        ChartPoint {
            chart: Chart::Orig,
            r: 1.0,
            eps_i: eps,
            a_i: a,
            u1: state.u[0],
            v1: state.v[0],
            modes_u: state.u[1..].to_vec(),
            modes_v: state.v[1..].to_vec(),
        }
    }

    pub fn k1(r: f64, eps1: f64, a1: f64, v11: f64, modes_u: Vec<f64>, modes_v: Vec<f64>) -> Self {
        ChartPoint {
            chart: Chart::K1,
            r,
            eps_i: eps1,
            a_i: a1,
            u1: -1.0,
            v1: v11,
            modes_u,
            modes_v,
        }
    }

    pub fn k2(r: f64, a2: f64, u12: f64, v12: f64, modes_u: Vec<f64>, modes_v: Vec<f64>) -> Self {
        ChartPoint {
            chart: Chart::K2,
            r,
            eps_i: 1.0,
            a_i: a2,
            u1: u12,
            v1: v12,
            modes_u,
            modes_v,
        }
    }

    pub fn k3(r: f64, eps3: f64, a3: f64, v13: f64, modes_u: Vec<f64>, modes_v: Vec<f64>) -> Self {
        ChartPoint {
            chart: Chart::K3,
            r,
            eps_i: eps3,
            a_i: a3,
            u1: 1.0,
            v1: v13,
            modes_u,
            modes_v,
        }
    }

    pub fn k0(&self) -> usize {
        self.modes_u.len() + 1
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut y = vec![self.r, self.eps_i, self.a_i, self.u1, self.v1];
        y.extend_from_slice(&self.modes_u);
        y.extend_from_slice(&self.modes_v);
        y
    }

    /// Inverse of [`ChartPoint::to_vec`]; extra trailing entries (a clock)
    /// are ignored.
    pub fn from_vec(chart: Chart, y: &[f64], k0: usize) -> Result<Self> {
        let n = 2 * k0 + 3;
        if y.len() < n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: y.len(),
            });
        }
        Ok(ChartPoint {
            chart,
            r: y[IR],
            eps_i: y[IE],
            a_i: y[IA],
            u1: y[IU1],
            v1: y[IV1],
            modes_u: y[IMODES..IMODES + k0 - 1].to_vec(),
            modes_v: y[IMODES + k0 - 1..n].to_vec(),
        })
    }

    /// Checks sign conventions and lengths.
    pub fn validate(&self) -> Result<()> {
        if self.modes_u.len() != self.modes_v.len() {
            return Err(Error::DimensionMismatch {
                expected: self.modes_u.len(),
                got: self.modes_v.len(),
            });
        }
        if !self.to_vec().iter().all(|x| x.is_finite()) {
            return Err(Error::ChartDomain("non-finite chart coordinate".into()));
        }
        if self.r < 0.0 || self.a_i < 0.0 || self.eps_i < 0.0 {
            return Err(Error::ChartDomain(format!(
                "{:?}: r, a_i, eps_i must be nonnegative (r={}, a_i={}, eps_i={})",
                self.chart, self.r, self.a_i, self.eps_i
            )));
        }
        match self.chart {
            Chart::Orig if self.r != 1.0 => Err(Error::ChartDomain("original chart has r = 1".into())),
            Chart::K2 if self.eps_i != 1.0 => Err(Error::ChartDomain("K2 has no eps coordinate".into())),
            Chart::K1 | Chart::K3 if Some(self.u1) != self.chart.fixed_u1() => Err(Error::ChartDomain(
                format!("{:?} fixes the first u coordinate to {:?}", self.chart, self.chart.fixed_u1()),
            )),
            _ => Ok(()),
        }
    }

    fn expect(&self, chart: Chart) -> Result<()> {
        if self.chart != chart {
            return Err(Error::ChartDomain(format!(
                "expected a {chart:?} point, got {:?}",
                self.chart
            )));
        }
        Ok(())
    }
}

/// First-mode pair in the JSON record.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FirstMode {
    pub u: f64,
    pub v: f64,
}

/// JSON layout of a [`ChartPoint`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChartPointRecord {
    pub chart: Chart,
    pub r: f64,
    pub eps_i: Option<f64>,
    pub a_i: f64,
    pub first_mode: FirstMode,
    pub modes_u: Vec<f64>,
    pub modes_v: Vec<f64>,
}

impl From<&ChartPoint> for ChartPointRecord {
    fn from(p: &ChartPoint) -> Self {
        ChartPointRecord {
            chart: p.chart,
            r: p.r,
            eps_i: (p.chart != Chart::K2).then_some(p.eps_i),
            a_i: p.a_i,
            first_mode: FirstMode { u: p.u1, v: p.v1 },
            modes_u: p.modes_u.clone(),
            modes_v: p.modes_v.clone(),
        }
    }
}

impl TryFrom<ChartPointRecord> for ChartPoint {
    type Error = Error;

    fn try_from(r: ChartPointRecord) -> Result<Self> {
        let eps_i = match (r.chart, r.eps_i) {
            (Chart::K2, None) => 1.0,
            (Chart::K2, Some(_)) => return Err(Error::ChartDomain("K2 record carries eps_i".into())),
            (_, Some(e)) => e,
            (c, None) => return Err(Error::ChartDomain(format!("{c:?} record lacks eps_i"))),
        };
        let p = ChartPoint {
            chart: r.chart,
            r: r.r,
            eps_i,
            a_i: r.a_i,
            u1: r.first_mode.u,
            v1: r.first_mode.v,
            modes_u: r.modes_u,
            modes_v: r.modes_v,
        };
        p.validate()?;
        Ok(p)
    }
}

impl Serialize for ChartPoint {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ChartPointRecord::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for ChartPoint {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rec = ChartPointRecord::deserialize(d)?;
        ChartPoint::try_from(rec).map_err(serde::de::Error::custom)
    }
}

/// Blow-down of the state and `ε`; valid at `r = 0`.
pub fn blowdown_state(p: &ChartPoint) -> Result<(GalerkinState, f64)> {
    p.validate()?;
    let r3 = p.r.powi(3);
    let mut u = vec![r3 * p.u1];
    u.extend(p.modes_u.iter().map(|x| r3 * x));
    let mut v = vec![r3 * p.v1];
    v.extend(p.modes_v.iter().map(|x| r3 * x));
    Ok((GalerkinState { u, v }, p.r.powi(8) * p.eps_i))
}

/// Blow-down to original coordinates `(state, ε, a)`.
pub fn blowdown(p: &ChartPoint) -> Result<(GalerkinState, f64, f64)> {
    let (s, eps) = blowdown_state(p)?;
    if p.r == 0.0 {
        return Err(Error::SingularMap(format!(
            "{:?} point with r = 0 lies on the blown-up locus; a is not recoverable",
            p.chart
        )));
    }
    Ok((s, eps, p.a_i / (p.r * p.r)))
}

/// Whether a chart point is consistent with the physical half-length:
/// `a_i = r² a` to relative tolerance `rtol`.
pub fn wedge_consistent(p: &ChartPoint, a: f64, rtol: f64) -> bool {
    (p.a_i - p.r * p.r * a).abs() <= rtol * p.a_i.abs().max(p.r * p.r * a.abs())
}

/// Admissible range of the recovered half-length along chart trajectories.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WedgeBounds {
    pub a_min: f64,
    pub a_max: f64,
}

impl WedgeBounds {
    /// Bounds `a·[1/factor, factor]` around a target half-length.
    pub fn around(a: f64, factor: f64) -> Self {
        WedgeBounds {
            a_min: a / factor,
            a_max: a * factor,
        }
    }

    /// `true` when `a_i / r²` lies inside the bounds (or `r = 0`).
    pub fn contains(&self, r: f64, a_i: f64) -> bool {
        if r == 0.0 {
            return true;
        }
        let a = a_i / (r * r);
        a >= self.a_min && a <= self.a_max
    }
}

/// Lift of an original-coordinate state into `chart`.
pub fn lift(state: &GalerkinState, eps: f64, a: f64, chart: Chart) -> Result<ChartPoint> {
    if state.u.len() != state.v.len() || state.u.is_empty() {
        return Err(Error::DimensionMismatch {
            expected: state.u.len(),
            got: state.v.len(),
        });
    }
    if !(a > 0.0) || !(eps >= 0.0) {
        return Err(Error::ChartDomain(format!("need a > 0 and eps >= 0 (a={a}, eps={eps})")));
    }
    let u1 = state.u[0];
    let r = match chart {
        Chart::Orig => return Ok(ChartPoint::orig(state, eps, a)),
        Chart::K1 if u1 < 0.0 => (-u1).cbrt(),
        Chart::K3 if u1 > 0.0 => u1.cbrt(),
        Chart::K2 if eps > 0.0 => eps.powf(0.125),
        _ => {
            return Err(Error::ChartDomain(format!(
                "{chart:?} requires {} (u1={u1}, eps={eps})",
                match chart {
                    Chart::K1 => "u1 < 0",
                    Chart::K3 => "u1 > 0",
                    _ => "eps > 0",
                }
            )))
        }
    };
    let r3 = r.powi(3);
    let modes_u = state.u[1..].iter().map(|x| x / r3).collect();
    let modes_v = state.v[1..].iter().map(|x| x / r3).collect();
    let v1 = state.v[0] / r3;
    let ai = a * r * r;
    Ok(match chart {
        Chart::K1 => ChartPoint::k1(r, eps / r.powi(8), ai, v1, modes_u, modes_v),
        Chart::K3 => ChartPoint::k3(r, eps / r.powi(8), ai, v1, modes_u, modes_v),
        _ => ChartPoint::k2(r, ai, u1 / r3, v1, modes_u, modes_v),
    })
}

/// Polynomial chart field on the common layout (hooks excluded).
///
/// In K1/K3, with `s = u1 = ∓1`, the desingularized equations read
/// `r' = s r F/3`, `ε' = -8 s ε F/3`, `a' = 2 s a F/3` and every other
/// coordinate gets `-s x F` added to its core term. In K2 and the original
/// chart `r`, `ε`, `a` are constant.
pub fn chart_rhs<S: Scalar>(chart: Chart, p: &ModelParams, y: &[S], out: &mut [S]) {
    let k0 = p.k0;
    let r = y[IR].clone();
    let e = y[IE].clone();
    let a = y[IA].clone();
    let u1 = y[IU1].clone();
    let v1 = y[IV1].clone();
    let uh = &y[IMODES..IMODES + k0 - 1];
    let vh = &y[IMODES + k0 - 1..IMODES + 2 * k0 - 2];
    let ae = a.clone() * e.clone();
    let f = u1.sq() - v1.sq() + ae.clone() * (2.0 * p.mu) + mode_energy(uh, vh);
    let ainv = a.powf(-1.5);
    let r8e = match chart {
        Chart::Orig => e.clone(),
        _ => r.powf(8.0) * e.clone(),
    };
    let dv_core = ae * 2.0;
    let mut du = Vec::with_capacity(k0 - 1);
    let mut dv = Vec::with_capacity(k0 - 1);
    for k in 2..=k0 {
        let lam = ainv.clone() * p.b()[k - 1];
        let uk = uh[k - 2].clone();
        let vk = vh[k - 2].clone();
        let row = &p.coupling().terms[k - 2];
        du.push(
            lam.clone() * uk.clone()
                + (uk * u1.clone() - vk.clone() * v1.clone()) * 2.0
                + coupling_row(row, uh, vh) * SQRT_2,
        );
        dv.push(r8e.clone() * lam * vk);
    }
    match chart.fixed_u1() {
        Some(s) => {
            out[IR] = r * f.clone() * (s / 3.0);
            out[IE] = e * f.clone() * (-8.0 * s / 3.0);
            out[IA] = a * f.clone() * (2.0 * s / 3.0);
            out[IU1] = S::from(0.0);
            out[IV1] = dv_core - v1 * f.clone() * s;
            for m in 0..k0 - 1 {
                out[IMODES + m] = du[m].clone() - uh[m].clone() * f.clone() * s;
                out[IMODES + k0 - 1 + m] = dv[m].clone() - vh[m].clone() * f.clone() * s;
            }
        }
        None => {
            out[IR] = S::from(0.0);
            out[IE] = S::from(0.0);
            out[IA] = S::from(0.0);
            out[IU1] = f;
            out[IV1] = dv_core;
            for m in 0..k0 - 1 {
                out[IMODES + m] = du[m].clone();
                out[IMODES + k0 - 1 + m] = dv[m].clone();
            }
        }
    }
}

/// Adds the chart-transported hook contribution to `out` (f64 only).
///
/// The original-time increment `δX` of a coordinate of weight `w` becomes
/// `δx = (δX - w r^{w-1} x δr) / r^w`, divided by `r³` for the desingularized
/// clock, where `δr` follows from the fixed `u1` slot (K1/K3) or vanishes (K2).
fn add_hooks(chart: Chart, p: &ModelParams, y: &[f64], out: &mut [f64]) {
    let Some(h) = &p.hooks else { return };
    let k0 = p.k0;
    let r = y[IR];
    let pt = match ChartPoint::from_vec(chart, y, k0) {
        Ok(pt) => pt,
        Err(_) => return,
    };
    let Ok((state, eps)) = blowdown_state(&pt) else { return };
    if chart != Chart::Orig && r <= 0.0 {
        return;
    }
    let a = if chart == Chart::Orig { y[IA] } else { y[IA] / (r * r) };
    let mut hu = vec![0.0; k0];
    let mut hv = vec![0.0; k0];
    h.eval(&state.u, &state.v, eps, a, &mut hu, &mut hv);
    let du: Vec<f64> = hu;
    let dv: Vec<f64> = hv.iter().map(|x| eps * x).collect();
    if chart == Chart::Orig {
        out[IU1] += du[0];
        out[IV1] += dv[0];
        for m in 0..k0 - 1 {
            out[IMODES + m] += du[m + 1];
            out[IMODES + k0 - 1 + m] += dv[m + 1];
        }
        return;
    }
    let r2 = r * r;
    let r3 = r2 * r;
    let dr = match chart.fixed_u1() {
        Some(s) => du[0] / (3.0 * s * r2),
        None => 0.0,
    };
    let conv = |d_x: f64, w: f64, x: f64| (d_x - w * r.powf(w - 1.0) * x * dr) / r.powf(w) / r3;
    out[IR] += dr / r3;
    out[IE] += conv(0.0, WEIGHT_EPS, y[IE]);
    out[IA] += conv(0.0, WEIGHT_A, y[IA]);
    if chart.fixed_u1().is_none() {
        out[IU1] += conv(du[0], WEIGHT_U, y[IU1]);
    }
    out[IV1] += conv(dv[0], WEIGHT_V, y[IV1]);
    for m in 0..k0 - 1 {
        out[IMODES + m] += conv(du[m + 1], WEIGHT_U, y[IMODES + m]);
        out[IMODES + k0 - 1 + m] += conv(dv[m + 1], WEIGHT_V, y[IMODES + k0 - 1 + m]);
    }
}

fn check_field_point(p: &ChartPoint, params: &ModelParams, chart: Chart) -> Result<()> {
    p.expect(chart)?;
    p.validate()?;
    if p.k0() != params.k0 {
        return Err(Error::DimensionMismatch {
            expected: params.k0,
            got: p.k0(),
        });
    }
    if p.a_i <= A_FLOOR {
        return Err(Error::SingularCoefficient(format!(
            "{chart:?}: a_i = {} below the floor {A_FLOOR}",
            p.a_i
        )));
    }
    Ok(())
}

/// Chart vector field as a derivative point (same chart tag).
pub fn field(point: &ChartPoint, params: &ModelParams) -> Result<ChartPoint> {
    check_field_point(point, params, point.chart)?;
    let y = point.to_vec();
    let mut d = vec![0.0; y.len()];
    chart_rhs(point.chart, params, &y, &mut d);
    add_hooks(point.chart, params, &y, &mut d);
    let mut out = ChartPoint::from_vec(point.chart, &d, params.k0)?;
    out.chart = point.chart;
    Ok(out)
}

pub fn field_k1(point: &ChartPoint, params: &ModelParams) -> Result<ChartPoint> {
    point.expect(Chart::K1)?;
    field(point, params)
}

pub fn field_k2(point: &ChartPoint, params: &ModelParams) -> Result<ChartPoint> {
    point.expect(Chart::K2)?;
    field(point, params)
}

pub fn field_k3(point: &ChartPoint, params: &ModelParams) -> Result<ChartPoint> {
    point.expect(Chart::K3)?;
    field(point, params)
}

/// Chart field as an [`OdeSystem`] on the common layout, optionally with an
/// original-time clock `t' = r⁻³` appended.
pub struct ChartSystem<'p> {
    pub chart: Chart,
    pub params: &'p ModelParams,
    pub clock: bool,
}

impl<'p> ChartSystem<'p> {
    pub fn new(chart: Chart, params: &'p ModelParams) -> Self {
        ChartSystem {
            chart,
            params,
            clock: false,
        }
    }

    pub fn with_clock(mut self) -> Self {
        self.clock = true;
        self
    }
}

impl OdeSystem for ChartSystem<'_> {
    fn dim(&self) -> usize {
        2 * self.params.k0 + 3 + usize::from(self.clock)
    }

    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
        let n = 2 * self.params.k0 + 3;
        chart_rhs(self.chart, self.params, &y[..n], &mut dy[..n]);
        add_hooks(self.chart, self.params, &y[..n], &mut dy[..n]);
        if self.clock {
            dy[n] = y[IR].powi(-3);
        }
    }

    fn stiff_diag(&self, y: &[f64], d: &mut [f64]) {
        d.fill(0.0);
        let k0 = self.params.k0;
        let a = y[IA];
        if !(a > 0.0) {
            return;
        }
        let ainv = a.powf(-1.5);
        let r8e = match self.chart {
            Chart::Orig => y[IE],
            _ => y[IR].powi(8) * y[IE],
        };
        for k in 2..=k0 {
            let lam = self.params.b()[k - 1] * ainv;
            d[IMODES + k - 2] = lam;
            d[IMODES + k0 - 1 + k - 2] = r8e * lam;
        }
    }
}

fn kappa_forward(p: &ChartPoint, from: Chart, sign: f64) -> Result<ChartPoint> {
    p.expect(from)?;
    p.validate()?;
    if !(p.eps_i > 0.0) {
        return Err(Error::ChartDomain(format!("{from:?} -> K2 requires eps_i > 0")));
    }
    let s = p.eps_i.powf(-0.375);
    Ok(ChartPoint::k2(
        p.eps_i.powf(0.125) * p.r,
        p.eps_i.powf(0.25) * p.a_i,
        sign * s,
        s * p.v1,
        p.modes_u.iter().map(|x| s * x).collect(),
        p.modes_v.iter().map(|x| s * x).collect(),
    ))
}

fn kappa_back(p: &ChartPoint, to: Chart, sign: f64) -> Result<ChartPoint> {
    p.expect(Chart::K2)?;
    p.validate()?;
    if !(sign * p.u1 > 0.0) {
        return Err(Error::ChartDomain(format!(
            "K2 -> {to:?} requires u_(1,2) {} 0, got {}",
            if sign < 0.0 { "<" } else { ">" },
            p.u1
        )));
    }
    let m = p.u1.abs();
    let v = p.v1 / m;
    let mu: Vec<f64> = p.modes_u.iter().map(|x| x / m).collect();
    let mv: Vec<f64> = p.modes_v.iter().map(|x| x / m).collect();
    let (r, e, a) = (m.cbrt() * p.r, m.powf(-8.0 / 3.0), m.powf(2.0 / 3.0) * p.a_i);
    Ok(if to == Chart::K1 {
        ChartPoint::k1(r, e, a, v, mu, mv)
    } else {
        ChartPoint::k3(r, e, a, v, mu, mv)
    })
}

/// K1 → K2.
pub fn kappa12(p: &ChartPoint) -> Result<ChartPoint> {
    kappa_forward(p, Chart::K1, -1.0)
}

/// K2 (with `u_{1,2} < 0`) → K1.
pub fn kappa21(p: &ChartPoint) -> Result<ChartPoint> {
    kappa_back(p, Chart::K1, -1.0)
}

/// K3 → K2.
pub fn kappa32(p: &ChartPoint) -> Result<ChartPoint> {
    kappa_forward(p, Chart::K3, 1.0)
}

/// K2 (with `u_{1,2} > 0`) → K3.
pub fn kappa23(p: &ChartPoint) -> Result<ChartPoint> {
    kappa_back(p, Chart::K3, 1.0)
}

/// `p_{a,1}^-(a₁)`: the K1 equilibrium on the attracting branch.
pub fn p_a1_minus(a1: f64, k0: usize) -> ChartPoint {
    ChartPoint::k1(0.0, 0.0, a1, -1.0, vec![0.0; k0 - 1], vec![0.0; k0 - 1])
}

/// `p_{r,3}^±(a₃)`: K3 points with `v_{1,3} = ±1`.
pub fn p_r3(sign: f64, a3: f64, k0: usize) -> ChartPoint {
    ChartPoint::k3(0.0, 0.0, a3, sign.signum(), vec![0.0; k0 - 1], vec![0.0; k0 - 1])
}

/// `q_3^{out}(a₃)`: the K3 point with `v_{1,3} = 0`.
pub fn q3_out(a3: f64, k0: usize) -> ChartPoint {
    ChartPoint::k3(0.0, 0.0, a3, 0.0, vec![0.0; k0 - 1], vec![0.0; k0 - 1])
}

/// Jacobian of the polynomial chart field on the common layout.
pub fn jacobian(point: &ChartPoint, params: &ModelParams) -> Result<Vec<Vec<f64>>> {
    check_field_point(point, params, point.chart)?;
    let y = point.to_vec();
    let x = crate::jet::Jet::seed(&y);
    let mut out = vec![crate::jet::Jet::constant(0.0); y.len()];
    chart_rhs(point.chart, params, &x, &mut out);
    Ok(out
        .iter()
        .map(|j| (0..y.len()).map(|i| j.grad(i)).collect())
        .collect())
}

/// Weighted degree of one field monomial.
#[derive(Clone, Debug, PartialEq)]
pub struct DegreeEntry {
    pub component: FieldVar,
    pub factors: Vec<(FieldVar, f64)>,
    pub degree: f64,
    pub expected: f64,
    /// Extra powers of `r` beyond the desingularization, carried by the slow
    /// diffusion terms `ε λ̂_k v_k`.
    pub extra_r: f64,
}

/// Result of auditing all monomials of the truncated field.
#[derive(Clone, Debug, PartialEq)]
pub struct DegreeAudit {
    pub entries: Vec<DegreeEntry>,
    /// Terms whose degree matches neither the generic rule nor the
    /// documented `r⁸` exception.
    pub anomalies: Vec<DegreeEntry>,
}

impl DegreeAudit {
    pub fn ok(&self) -> bool {
        self.anomalies.is_empty()
    }
}

fn weight(v: FieldVar) -> f64 {
    match v {
        FieldVar::U(_) => WEIGHT_U,
        FieldVar::V(_) => WEIGHT_V,
        FieldVar::Eps => WEIGHT_EPS,
        FieldVar::A => WEIGHT_A,
    }
}

/// Checks that every monomial has weighted degree `N + w(component)` with
/// `N = 3`, except `ε λ̂_k v_k` (k ≥ 2), which carries an extra `r⁸`.
pub fn degree_audit(params: &ModelParams) -> DegreeAudit {
    let mut entries = Vec::new();
    let mut anomalies = Vec::new();
    for t in field_terms(params) {
        let degree: f64 = t.factors.iter().map(|&(v, p)| weight(v) * p).sum();
        let generic = DESING_POWER + weight(t.component);
        let slow_diffusion = matches!(t.component, FieldVar::V(k) if k >= 2);
        let extra_r = if slow_diffusion { WEIGHT_EPS } else { 0.0 };
        let e = DegreeEntry {
            component: t.component,
            factors: t.factors,
            degree,
            expected: generic + extra_r,
            extra_r,
        };
        if (e.degree - e.expected).abs() > 1e-12 {
            anomalies.push(e.clone());
        }
        entries.push(e);
    }
    DegreeAudit { entries, anomalies }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
    }

    #[test]
    fn blowdown_examples() {
        let p = ChartPoint::k1(0.1, 1.0, 0.01, 1.0, vec![], vec![]);
        let (s, e, a) = blowdown(&p).unwrap();
        assert!(close(s.u[0], -1e-3, 1e-14) && close(s.v[0], 1e-3, 1e-14));
        assert!(close(e, 1e-8, 1e-14) && close(a, 1.0, 1e-14));
        let z = ChartPoint::k2(0.0, 0.5, 0.3, -0.2, vec![0.1], vec![0.2]);
        let (s, e) = blowdown_state(&z).unwrap();
        assert_eq!(s.norm(), 0.0);
        assert_eq!(e, 0.0);
        assert!(matches!(blowdown(&z), Err(Error::SingularMap(_))));
        let p = ChartPoint::k3(0.1, 0.5, 0.01, -1.0, vec![], vec![]);
        let (s, _, _) = blowdown(&p).unwrap();
        assert!(close(s.u[0], 1e-3, 1e-14) && close(s.v[0], -1e-3, 1e-14));
    }

    #[test]
    fn lift_examples() {
        let s = GalerkinState {
            u: vec![-8e-3, 1e-4],
            v: vec![2e-3, -1e-4],
        };
        let p = lift(&s, 1e-6, 1.0, Chart::K1).unwrap();
        assert!(close(p.r, 0.2, 1e-14));
        let p2 = lift(&s, 0.5f64.powi(8), 1.0, Chart::K2).unwrap();
        assert!(close(p2.r, 0.5, 1e-14));
        assert!(lift(&s, 1e-6, 1.0, Chart::K3).is_err());
        assert!(lift(&s, 0.0, 1.0, Chart::K2).is_err());
    }

    #[test]
    fn kappa12_example() {
        let p = ChartPoint::k1(1.0, 0.5f64.powi(8), 1.0, 0.1, vec![], vec![]);
        let q = kappa12(&p).unwrap();
        assert!(close(q.u1, -8.0, 1e-14) && close(q.v1, 0.8, 1e-14));
        assert!(close(q.r, 0.5, 1e-14) && close(q.a_i, 0.25, 1e-14));
        let b = kappa21(&q).unwrap();
        assert!(close(b.eps_i, p.eps_i, 1e-14) && close(b.v1, 0.1, 1e-14));
        let p3 = ChartPoint::k3(1.0, 0.5f64.powi(8), 1.0, 0.1, vec![], vec![]);
        assert!(close(kappa32(&p3).unwrap().u1, 8.0, 1e-14));
        assert!(kappa21(&kappa32(&p3).unwrap()).is_err());
        assert!(kappa23(&q).is_err());
    }

    #[test]
    fn k1_equilibrium_and_eigenvalues() {
        let params = ModelParams::new(0.5, 1.0, 0.0, 4).unwrap();
        let a1 = 0.3;
        let p = p_a1_minus(a1, 4);
        let d = field_k1(&p, &params).unwrap();
        assert!(d.to_vec().iter().all(|x| *x == 0.0));
        let j = jacobian(&p, &params).unwrap();
        assert!(close(j[IV1][IV1], -2.0, 1e-14));
        for k in 2..=4 {
            let i = IMODES + k - 2;
            assert!(close(j[i][i], -2.0 + params.b()[k - 1] * a1.powf(-1.5), 1e-13));
        }
    }

    #[test]
    fn k2_reduced_examples() {
        let params = ModelParams::new(0.7, 1.0, 0.0, 3).unwrap();
        let p = ChartPoint::k2(0.0, 0.4, 0.3, -0.5, vec![0.0, 0.0], vec![0.1, -0.2]);
        let q = ChartPoint::k2(0.0, 0.4, 0.3, -0.5, vec![0.0; 2], vec![0.0; 2]);
        let d = field_k2(&q, &params).unwrap();
        assert!(close(d.u1, 0.09 - 0.25 + 2.0 * 0.4 * 0.7, 1e-14));
        assert!(close(d.v1, 0.8, 1e-14));
        let d = field_k2(&p, &params).unwrap();
        assert!(d.modes_v.iter().all(|x| *x == 0.0));
        assert_eq!((d.r, d.a_i), (0.0, 0.0));
    }

    #[test]
    fn k3_eigenvalues() {
        let params = ModelParams::new(2.0, 1.0, 0.0, 3).unwrap();
        let a3 = 0.5;
        let j = jacobian(&q3_out(a3, 3), &params).unwrap();
        assert!(close(j[IV1][IV1], -1.0, 1e-14));
        for s in [1.0, -1.0] {
            let p = p_r3(s, a3, 3);
            let j = jacobian(&p, &params).unwrap();
            assert!(close(j[IV1][IV1], 2.0, 1e-14));
            for k in 2..=3 {
                let i = IMODES + k - 2;
                assert!(close(j[i][i], 2.0 + params.b()[k - 1] * a3.powf(-1.5), 1e-13));
            }
        }
    }

    #[test]
    fn singular_coefficient_below_floor() {
        let params = ModelParams::new(0.5, 1.0, 0.0, 2).unwrap();
        let p = p_a1_minus(0.0, 2);
        assert!(matches!(field_k1(&p, &params), Err(Error::SingularCoefficient(_))));
        assert!(field_k2(&p, &params).is_err());
    }

    #[test]
    fn degree_audit_passes() {
        let params = ModelParams::new(0.5, 1.0, 0.01, 6).unwrap();
        let audit = degree_audit(&params);
        assert!(audit.ok(), "{:?}", audit.anomalies);
        assert!(audit.entries.iter().any(|e| e.extra_r == 8.0));
    }

    #[test]
    fn json_round_trip() {
        let p = ChartPoint::k2(0.3, 0.5, -2.0, 0.1, vec![0.01], vec![0.02]);
        let s = serde_json::to_string(&p).unwrap();
        assert!(s.contains("\"eps_i\":null"));
        let q: ChartPoint = serde_json::from_str(&s).unwrap();
        assert_eq!(p, q);
        let p = ChartPoint::k1(0.3, 0.5, 0.2, -0.9, vec![0.01], vec![0.02]);
        let q: ChartPoint = serde_json::from_str(&serde_json::to_string(&p).unwrap()).unwrap();
        assert_eq!(p, q);
    }
}
