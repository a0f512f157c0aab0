//! Truncated Galerkin vector field in original coordinates, critical branches
//! and initial-data constructors.

use std::f64::consts::{PI, SQRT_2};
use std::fmt::Debug;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jet::Scalar;
use crate::spectral::{b_coeff, SparseCoupling};

/// Higher-order terms `H_k^u`, `H_k^v` added to the polynomial field.
///
/// Implementations supply their own bounds; the library only transports the
/// values through the chart scalings.
pub trait Hooks: Send + Sync + Debug {
    fn eval(&self, u: &[f64], v: &[f64], eps: f64, a: f64, hu: &mut [f64], hv: &mut [f64]);
}

/// Scalars of the problem: bifurcation constant, half-length, time-scale
/// ratio and truncation level.
#[derive(Clone, Debug)]
pub struct ModelParams {
    pub mu: f64,
    pub a: f64,
    pub eps: f64,
    pub k0: usize,
    pub hooks: Option<Arc<dyn Hooks>>,
    coupling: Arc<SparseCoupling>,
    b: Arc<Vec<f64>>,
}

impl ModelParams {
    pub fn new(mu: f64, a: f64, eps: f64, k0: usize) -> Result<Self> {
        if !mu.is_finite() {
            return Err(Error::domain("mu must be finite"));
        }
        if !(a > 0.0) || !a.is_finite() {
            return Err(Error::domain(format!("half-length must be positive, got {a}")));
        }
        if !(eps >= 0.0) || !eps.is_finite() {
            return Err(Error::domain(format!("eps must be nonnegative, got {eps}")));
        }
        if k0 < 1 {
            return Err(Error::domain("truncation level must be >= 1"));
        }
        Ok(ModelParams {
            mu,
            a,
            eps,
            k0,
            hooks: None,
            coupling: Arc::new(SparseCoupling::new(k0)),
            b: Arc::new((1..=k0).map(b_coeff).collect()),
        })
    }

    pub fn with_hooks(mut self, hooks: Arc<dyn Hooks>) -> Self {
        self.hooks = Some(hooks);
        self
    }

    pub fn with_eps(&self, eps: f64) -> Result<Self> {
        let mut p = ModelParams::new(self.mu, self.a, eps, self.k0)?;
        p.hooks = self.hooks.clone();
        Ok(p)
    }

    pub fn with_k0(&self, k0: usize) -> Result<Self> {
        let mut p = ModelParams::new(self.mu, self.a, self.eps, k0)?;
        p.hooks = self.hooks.clone();
        Ok(p)
    }

    pub fn with_mu(&self, mu: f64) -> Result<Self> {
        let mut p = ModelParams::new(mu, self.a, self.eps, self.k0)?;
        p.hooks = self.hooks.clone();
        Ok(p)
    }

    pub fn coupling(&self) -> &SparseCoupling {
        &self.coupling
    }

    /// `b_k` for `k = 1..=k0` (index `k - 1`).
    pub fn b(&self) -> &[f64] {
        &self.b
    }

    /// `λ̂_k = b_k a^{-3/2}`.
    pub fn lambda_hat(&self, k: usize) -> f64 {
        self.b[k - 1] * self.a.powf(-1.5)
    }

    pub fn record(&self) -> ParamsRecord {
        ParamsRecord {
            mu: self.mu,
            a: self.a,
            eps: self.eps,
            k0: self.k0,
        }
    }
}

/// Plain-data view of [`ModelParams`] for serialization.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamsRecord {
    pub mu: f64,
    pub a: f64,
    pub eps: f64,
    pub k0: usize,
}

/// Mode coefficients `(u_1..u_k0, v_1..v_k0)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GalerkinState {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl GalerkinState {
    pub fn zeros(k0: usize) -> Self {
        GalerkinState {
            u: vec![0.0; k0],
            v: vec![0.0; k0],
        }
    }

    pub fn k0(&self) -> usize {
        self.u.len()
    }

    fn check(&self, k0: usize) -> Result<()> {
        if self.u.len() != k0 {
            return Err(Error::DimensionMismatch {
                expected: k0,
                got: self.u.len(),
            });
        }
        if self.v.len() != k0 {
            return Err(Error::DimensionMismatch {
                expected: k0,
                got: self.v.len(),
            });
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.u.iter().chain(&self.v).all(|x| x.is_finite())
    }

    /// `Σ u_k² + Σ v_k²`, the squared L² norm of the pair by Parseval.
    pub fn norm_sq(&self) -> f64 {
        self.u.iter().chain(&self.v).map(|x| x * x).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// Zero-padded (or truncated) copy with `k0` modes.
    pub fn resized(&self, k0: usize) -> Self {
        let mut s = GalerkinState::zeros(k0);
        let m = k0.min(self.k0());
        s.u[..m].copy_from_slice(&self.u[..m]);
        s.v[..m].copy_from_slice(&self.v[..m]);
        s
    }

    /// L² distance after padding both states to a common length.
    pub fn distance(&self, other: &GalerkinState) -> f64 {
        let k = self.k0().max(other.k0());
        let (p, q) = (self.resized(k), other.resized(k));
        p.u.iter()
            .zip(&q.u)
            .chain(p.v.iter().zip(&q.v))
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    }

    /// Flat layout `[u_1..u_k0, v_1..v_k0]`.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut x = self.u.clone();
        x.extend_from_slice(&self.v);
        x
    }

    pub fn from_flat(x: &[f64]) -> Result<Self> {
        if !x.len().is_multiple_of(2) || x.is_empty() {
            return Err(Error::domain("flat state must have even positive length"));
        }
        let k0 = x.len() / 2;
        Ok(GalerkinState {
            u: x[..k0].to_vec(),
            v: x[k0..].to_vec(),
        })
    }
}

/// `Σ_{(i,j)} α_{i,j}^k (u_i u_j - v_i v_j)` over one row of a sparse coupling;
/// `u[m]`, `v[m]` hold mode `m + 2`.
pub(crate) fn coupling_row<S: Scalar>(row: &[(usize, usize, f64)], u: &[S], v: &[S]) -> S {
    let mut acc = S::from(0.0);
    for &(i, j, al) in row {
        let t = u[i - 2].clone() * u[j - 2].clone() - v[i - 2].clone() * v[j - 2].clone();
        acc = acc + t * al;
    }
    acc
}

/// `Σ_{m≥2} (u_m² - v_m²)` for higher-mode slices.
pub(crate) fn mode_energy<S: Scalar>(u: &[S], v: &[S]) -> S {
    let mut acc = S::from(0.0);
    for (x, y) in u.iter().zip(v) {
        acc = acc + x.sq() - y.sq();
    }
    acc
}

/// Polynomial Galerkin field on the flat layout `x = [u_1..u_k0, v_1..v_k0, ε]`
/// with the half-length `a` held fixed; `out[2k0] = ε̇ = 0`.
pub fn orig_rhs_flat<S: Scalar>(p: &ModelParams, x: &[S], out: &mut [S]) {
    let k0 = p.k0;
    let (u, rest) = x.split_at(k0);
    let (v, tail) = rest.split_at(k0);
    let eps = tail[0].clone();
    let a = p.a;
    let mu = p.mu;
    let (u1, v1) = (u[0].clone(), v[0].clone());
    let (uh, vh) = (&u[1..], &v[1..]);
    out[0] = u1.sq() - v1.sq() + eps.clone() * (2.0 * a * mu) + mode_energy(uh, vh);
    out[k0] = eps.clone() * (2.0 * a);
    let ainv = a.powf(-1.5);
    for k in 2..=k0 {
        let lam = p.b[k - 1] * ainv;
        let uk = u[k - 1].clone();
        let vk = v[k - 1].clone();
        let row = &p.coupling.terms[k - 2];
        out[k - 1] = uk.clone() * lam
            + (uk * u1.clone() - vk.clone() * v1.clone()) * 2.0
            + coupling_row(row, uh, vh) * SQRT_2;
        out[k0 + k - 1] = eps.clone() * vk * lam;
    }
    out[2 * k0] = S::from(0.0);
}

/// Right-hand side of the `k0`-truncated system after the time change,
/// including hooks when present.
pub fn vector_field(params: &ModelParams, state: &GalerkinState) -> Result<GalerkinState> {
    state.check(params.k0)?;
    let k0 = params.k0;
    let mut x = state.to_flat();
    x.push(params.eps);
    let mut out = vec![0.0; 2 * k0 + 1];
    orig_rhs_flat(params, &x, &mut out);
    let mut d = GalerkinState {
        u: out[..k0].to_vec(),
        v: out[k0..2 * k0].to_vec(),
    };
    if let Some(h) = &params.hooks {
        let mut hu = vec![0.0; k0];
        let mut hv = vec![0.0; k0];
        h.eval(&state.u, &state.v, params.eps, params.a, &mut hu, &mut hv);
        for k in 0..k0 {
            d.u[k] += hu[k];
            d.v[k] += params.eps * hv[k];
        }
    }
    Ok(d)
}

/// Field before the time change, `1/√(2a)` times [`vector_field`].
pub fn vector_field_unscaled(params: &ModelParams, state: &GalerkinState) -> Result<GalerkinState> {
    let mut d = vector_field(params, state)?;
    let s = 1.0 / (2.0 * params.a).sqrt();
    d.u.iter_mut().chain(d.v.iter_mut()).for_each(|x| *x *= s);
    Ok(d)
}

/// Branch selector for the critical manifold.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    /// `u_1 = v_1 < 0`.
    Minus,
    /// `u_1 = -v_1 < 0`.
    Plus,
}

/// Point on `S_a^{-}` or `S_a^{+}` with all higher modes zero.
pub fn critical_branch(branch: Branch, v1: f64, k0: usize) -> Result<GalerkinState> {
    if k0 < 1 {
        return Err(Error::domain("truncation level must be >= 1"));
    }
    let u1 = match branch {
        Branch::Minus if v1 < 0.0 => v1,
        Branch::Plus if v1 > 0.0 => -v1,
        _ => {
            return Err(Error::domain(format!(
                "v1 = {v1} does not lie on the {branch:?} attracting branch"
            )))
        }
    };
    let mut s = GalerkinState::zeros(k0);
    s.u[0] = u1;
    s.v[0] = v1;
    Ok(s)
}

/// Decay law for higher-mode perturbations, `|v_k| ∝ k^{-exponent}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayProfile {
    pub exponent: f64,
}

impl Default for DecayProfile {
    fn default() -> Self {
        DecayProfile { exponent: 2.0 }
    }
}

/// Near-homogeneous data: `(u_1, v_1) = (c, c)` and
/// `u_k = v_k = (-1)^k (2a)³ π^{-2} k^{-p} δ` for `k ≥ 2`.
pub fn initial_condition(
    c: f64,
    delta: f64,
    profile: DecayProfile,
    k0: usize,
    a: f64,
) -> Result<GalerkinState> {
    if !(c < 0.0) {
        return Err(Error::domain(format!("c must be negative, got {c}")));
    }
    if !(delta >= 0.0) {
        return Err(Error::domain(format!("delta must be nonnegative, got {delta}")));
    }
    if profile.exponent < 2.0 {
        return Err(Error::domain("decay exponent must be >= 2"));
    }
    let mut s = critical_branch(Branch::Minus, c, k0)?;
    let amp = (2.0 * a).powi(3) / (PI * PI) * delta;
    for k in 2..=k0 {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        let val = sign * amp * (k as f64).powf(-profile.exponent);
        s.u[k - 1] = val;
        s.v[k - 1] = val;
    }
    Ok(s)
}

/// Whether the first `k0` components of the fields at two truncation levels
/// agree to `1e-13` for a state given at the larger level.
pub fn nesting_check(small: &ModelParams, large: &ModelParams, state: &GalerkinState) -> Result<bool> {
    if large.k0 < small.k0 {
        return Err(Error::domain("second parameter set must have the larger truncation"));
    }
    let f_large = vector_field(large, state)?;
    let f_small = vector_field(small, &state.resized(small.k0))?;
    let k0 = small.k0;
    let scale = f_large
        .u
        .iter()
        .chain(&f_large.v)
        .fold(1.0f64, |m, x| m.max(x.abs()));
    let ok = (0..k0).all(|k| {
        (f_large.u[k] - f_small.u[k]).abs() <= 1e-13 * scale
            && (f_large.v[k] - f_small.v[k]).abs() <= 1e-13 * scale
    });
    Ok(ok)
}

/// Flat serialization record of a state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateRecord {
    pub k0: usize,
    pub mu: f64,
    pub a: f64,
    pub eps: f64,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl StateRecord {
    pub fn new(params: &ModelParams, state: &GalerkinState) -> Self {
        StateRecord {
            k0: state.k0(),
            mu: params.mu,
            a: params.a,
            eps: params.eps,
            u: state.u.clone(),
            v: state.v.clone(),
        }
    }

    pub fn csv_header(k0: usize) -> Vec<String> {
        let mut h: Vec<String> = ["k0", "mu", "a", "eps"].iter().map(|s| s.to_string()).collect();
        h.extend((1..=k0).map(|k| format!("u_{k}")));
        h.extend((1..=k0).map(|k| format!("v_{k}")));
        h
    }

    pub fn csv_row(&self) -> Vec<String> {
        let mut r = vec![
            self.k0.to_string(),
            format!("{:e}", self.mu),
            format!("{:e}", self.a),
            format!("{:e}", self.eps),
        ];
        r.extend(self.u.iter().chain(&self.v).map(|x| format!("{x:e}")));
        r
    }

    pub fn from_csv_row(row: &[String]) -> Result<Self> {
        let parse = |s: &String| -> Result<f64> {
            s.trim()
                .parse::<f64>()
                .map_err(|e| Error::domain(format!("bad number {s:?}: {e}")))
        };
        if row.len() < 4 {
            return Err(Error::domain("state row too short"));
        }
        let k0: usize = row[0]
            .trim()
            .parse()
            .map_err(|e| Error::domain(format!("bad k0 {:?}: {e}", row[0])))?;
        if row.len() != 4 + 2 * k0 {
            return Err(Error::DimensionMismatch {
                expected: 4 + 2 * k0,
                got: row.len(),
            });
        }
        let vals = row[4..].iter().map(parse).collect::<Result<Vec<_>>>()?;
        Ok(StateRecord {
            k0,
            mu: parse(&row[1])?,
            a: parse(&row[2])?,
            eps: parse(&row[3])?,
            u: vals[..k0].to_vec(),
            v: vals[k0..].to_vec(),
        })
    }

    pub fn state(&self) -> GalerkinState {
        GalerkinState {
            u: self.u.clone(),
            v: self.v.clone(),
        }
    }
}

/// Variable appearing in a monomial of the field.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FieldVar {
    U(usize),
    V(usize),
    Eps,
    A,
}

/// One monomial `coeff · Π var^pow` of a field component.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldTerm {
    /// `FieldVar::U(k)` or `FieldVar::V(k)`: the component this term feeds.
    pub component: FieldVar,
    pub coeff: f64,
    pub factors: Vec<(FieldVar, f64)>,
}

/// Monomial listing of the hook-free field (after the time change).
pub fn field_terms(params: &ModelParams) -> Vec<FieldTerm> {
    use FieldVar::*;
    let k0 = params.k0;
    let mut t = Vec::new();
    let mut push = |component, coeff, factors: Vec<(FieldVar, f64)>| {
        t.push(FieldTerm {
            component,
            coeff,
            factors,
        })
    };
    for j in 1..=k0 {
        push(U(1), 1.0, vec![(U(j), 2.0)]);
        push(U(1), -1.0, vec![(V(j), 2.0)]);
    }
    push(U(1), 2.0 * params.mu, vec![(Eps, 1.0), (A, 1.0)]);
    push(V(1), 2.0, vec![(Eps, 1.0), (A, 1.0)]);
    for k in 2..=k0 {
        let b = params.b[k - 1];
        push(U(k), b, vec![(A, -1.5), (U(k), 1.0)]);
        push(U(k), 2.0, vec![(U(k), 1.0), (U(1), 1.0)]);
        push(U(k), -2.0, vec![(V(k), 1.0), (V(1), 1.0)]);
        for &(i, j, al) in &params.coupling.terms[k - 2] {
            push(U(k), SQRT_2 * al, vec![(U(i), 1.0), (U(j), 1.0)]);
            push(U(k), -SQRT_2 * al, vec![(V(i), 1.0), (V(j), 1.0)]);
        }
        push(V(k), b, vec![(Eps, 1.0), (A, -1.5), (V(k), 1.0)]);
    }
    t
}

/// Evaluates a monomial listing at a state.
pub fn eval_terms(terms: &[FieldTerm], state: &GalerkinState, eps: f64, a: f64) -> GalerkinState {
    let k0 = state.k0();
    let mut d = GalerkinState::zeros(k0);
    for term in terms {
        let mut val = term.coeff;
        for &(var, pw) in &term.factors {
            let base = match var {
                FieldVar::U(k) => state.u[k - 1],
                FieldVar::V(k) => state.v[k - 1],
                FieldVar::Eps => eps,
                FieldVar::A => a,
            };
            val *= if pw == 1.0 { base } else { base.powf(pw) };
        }
        match term.component {
            FieldVar::U(k) => d.u[k - 1] += val,
            FieldVar::V(k) => d.v[k - 1] += val,
            _ => unreachable!("terms feed mode components only"),
        }
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_mode_example() {
        let p = ModelParams::new(1.0, 1.0, 0.01, 1).unwrap();
        let s = GalerkinState {
            u: vec![0.2],
            v: vec![0.1],
        };
        let d = vector_field(&p, &s).unwrap();
        assert!((d.u[0] - 0.05).abs() < 1e-15);
        assert!((d.v[0] - 0.02).abs() < 1e-15);
    }

    #[test]
    fn second_mode_example() {
        let p = ModelParams::new(0.3, 1.0, 0.0, 2).unwrap();
        let s = GalerkinState {
            u: vec![-0.1, 0.2],
            v: vec![-0.1, 0.0],
        };
        let d = vector_field(&p, &s).unwrap();
        assert!((d.u[1] - (0.2 * b_coeff(2) - 0.04)).abs() < 1e-14);
    }

    #[test]
    fn critical_points_are_layer_equilibria() {
        for (br, v1) in [(Branch::Minus, -0.3), (Branch::Plus, 0.3)] {
            let s = critical_branch(br, v1, 4).unwrap();
            assert_eq!(s.u[0], -0.3);
            let p = ModelParams::new(0.7, 1.0, 0.0, 4).unwrap();
            let d = vector_field(&p, &s).unwrap();
            assert!(d.norm() == 0.0);
        }
        assert!(critical_branch(Branch::Minus, 0.3, 4).is_err());
        assert!(critical_branch(Branch::Plus, -0.3, 4).is_err());
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let p = ModelParams::new(0.0, 1.0, 0.1, 3).unwrap();
        let s = GalerkinState::zeros(2);
        assert!(matches!(
            vector_field(&p, &s),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn initial_condition_bounds() {
        let a = 0.9;
        let d = 0.05;
        let s0 = initial_condition(-0.2, 0.0, DecayProfile::default(), 6, a).unwrap();
        assert_eq!(s0, critical_branch(Branch::Minus, -0.2, 6).unwrap());
        let s = initial_condition(-0.2, d, DecayProfile::default(), 32, a).unwrap();
        for k in 2..=32 {
            let vk = s.v[k - 1].abs();
            assert!(vk <= (2.0 * a).powi(3) / (PI * PI) / (k * k) as f64 * d * (1.0 + 1e-14));
            let lam = b_coeff(k) * a.powf(-1.5);
            assert!((lam * vk).abs() <= (2.0 * a).powf(1.5) * d * (1.0 + 1e-14));
        }
    }

    #[test]
    fn nesting_examples() {
        let small = ModelParams::new(0.5, 1.0, 0.01, 3).unwrap();
        let large = ModelParams::new(0.5, 1.0, 0.01, 6).unwrap();
        let s = GalerkinState {
            u: vec![-0.2, 0.01, -0.02],
            v: vec![-0.1, 0.03, 0.005],
        };
        assert!(nesting_check(&small, &large, &s.resized(6)).unwrap());
        let mut bad = s.resized(6);
        bad.u[3] = 0.5;
        assert!(!nesting_check(&small, &large, &bad).unwrap());
    }

    #[test]
    fn term_listing_reproduces_field() {
        let p = ModelParams::new(0.4, 0.8, 0.02, 5).unwrap();
        let s = GalerkinState {
            u: vec![-0.2, 0.01, -0.02, 0.03, 0.004],
            v: vec![-0.1, 0.03, 0.005, -0.01, 0.02],
        };
        let d = vector_field(&p, &s).unwrap();
        let e = eval_terms(&field_terms(&p), &s, p.eps, p.a);
        assert!(d.distance(&e) < 1e-14);
    }

    #[test]
    fn state_record_round_trip() {
        let p = ModelParams::new(0.4, 0.8, 0.02, 3).unwrap();
        let s = GalerkinState {
            u: vec![-0.2, 0.01, -0.02],
            v: vec![-0.1, 0.03, 0.005],
        };
        let rec = StateRecord::new(&p, &s);
        assert_eq!(StateRecord::csv_header(3).len(), rec.csv_row().len());
        let back = StateRecord::from_csv_row(&rec.csv_row()).unwrap();
        assert_eq!(back, rec);
        let json = serde_json::to_string(&rec).unwrap();
        assert_eq!(serde_json::from_str::<StateRecord>(&json).unwrap(), rec);
    }
}
