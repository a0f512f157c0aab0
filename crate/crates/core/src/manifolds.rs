//! Quadratic center-manifold expansions: closed forms in original
//! coordinates and in chart K1, an independent order-by-order solver of the
//! invariance equation, residual checks, tail bounds and convergence
//! diagnostics.

use std::collections::BTreeMap;
use std::f64::consts::SQRT_2;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::charts::{chart_rhs, Chart};
use crate::error::{Error, Result};
use crate::jet::{Jet, Scalar};
use crate::model::{orig_rhs_flat, Branch, ModelParams};
use crate::spectral::{b_coeff, SparseCoupling};

/// Relative tolerance for coefficient comparisons.
pub const COMPARE_RTOL: f64 = 1e-8;
/// Absolute floor for structurally zero coefficients.
pub const COMPARE_ABS_FLOOR: f64 = 1e-12;
/// Homological solves are rejected when an eigenvalue of the graph block is
/// below this fraction of the normal rate.
pub const RESONANCE_RTOL: f64 = 1e-6;
/// Largest admissible `|c|` for original-coordinate expansions.
pub const C_MAX: f64 = 1.0;
/// Equilibrium check for the oracle: `|F(x0)|` must stay below this.
const EQUILIBRIUM_TOL: f64 = 1e-12;
const NEWTON_MAX_ITER: usize = 50;
const NILPOTENT_TOL: f64 = 1e-8;

/// Polynomial `Σ lin_a z_a + Σ_{a≤b} quad[a][b] z_a z_b`.
#[derive(Clone, Debug, PartialEq)]
pub struct Quadratic {
    pub lin: Vec<f64>,
    /// Upper triangle; `quad[a][b]` with `a ≤ b` is the coefficient of `z_a z_b`.
    pub quad: Vec<Vec<f64>>,
}

impl Quadratic {
    pub fn zeros(n: usize) -> Self {
        Quadratic {
            lin: vec![0.0; n],
            quad: vec![vec![0.0; n]; n],
        }
    }

    pub fn n(&self) -> usize {
        self.lin.len()
    }

    fn add_quad(&mut self, a: usize, b: usize, v: f64) {
        let (i, j) = if a <= b { (a, b) } else { (b, a) };
        self.quad[i][j] += v;
    }

    pub fn eval<S: Scalar>(&self, z: &[S]) -> S {
        let n = self.n();
        let mut acc = S::from(0.0);
        for a in 0..n {
            if self.lin[a] != 0.0 {
                acc = acc + z[a].clone() * self.lin[a];
            }
            for b in a..n {
                let q = self.quad[a][b];
                if q != 0.0 {
                    acc = acc + z[a].clone() * z[b].clone() * q;
                }
            }
        }
        acc
    }

    /// `∂/∂z_c` at `z`.
    pub fn grad<S: Scalar>(&self, z: &[S], c: usize) -> S {
        let n = self.n();
        let mut acc = S::from(self.lin[c]);
        for b in 0..n {
            let q = if b >= c { self.quad[c][b] } else { self.quad[b][c] };
            let q = if b == c { 2.0 * q } else { q };
            if q != 0.0 {
                acc = acc + z[b].clone() * q;
            }
        }
        acc
    }
}

/// Scalars fixing the base point of an expansion.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum ExpansionBase {
    /// Original coordinates at `u₁ = v₁ = c`, higher modes zero, `ε = 0`.
    Orig { c: f64, a: f64 },
    /// Chart K1 at `p_{a,1}^-(a₁*)`.
    K1 { a1_star: f64 },
}

/// Quadratic graph over the center variables, in displacements from the
/// base point.
#[derive(Clone, Debug, PartialEq)]
pub struct ManifoldExpansion {
    pub chart: Chart,
    pub k0: usize,
    pub mu: f64,
    pub base: ExpansionBase,
    pub graph_vars: Vec<String>,
    pub center_vars: Vec<String>,
    pub polys: Vec<Quadratic>,
}

/// One stored coefficient in the JSON layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoeffRecord {
    pub graph_var: String,
    pub monomial: Vec<(String, u32)>,
    pub value: f64,
}

/// JSON layout of an expansion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpansionRecord {
    pub chart: Chart,
    pub base_point: BTreeMap<String, f64>,
    pub k0: usize,
    pub coeffs: Vec<CoeffRecord>,
}

fn orig_names(k0: usize) -> (Vec<String>, Vec<String>) {
    let graph = (1..=k0).map(|k| format!("u{k}")).collect();
    let mut center: Vec<String> = (1..=k0).map(|k| format!("v{k}")).collect();
    center.push("eps".into());
    (graph, center)
}

fn k1_names(k0: usize) -> (Vec<String>, Vec<String>) {
    let mut graph = vec!["v11".to_string()];
    graph.extend((2..=k0).map(|k| format!("u{k}1")));
    let mut center: Vec<String> = ["r1", "eps1", "a1"].iter().map(|s| s.to_string()).collect();
    center.extend((2..=k0).map(|k| format!("v{k}1")));
    (graph, center)
}

impl ManifoldExpansion {
    fn empty(chart: Chart, k0: usize, mu: f64, base: ExpansionBase) -> Self {
        let (graph_vars, center_vars) = match chart {
            Chart::K1 => k1_names(k0),
            _ => orig_names(k0),
        };
        let nc = center_vars.len();
        ManifoldExpansion {
            chart,
            k0,
            mu,
            base,
            polys: vec![Quadratic::zeros(nc); graph_vars.len()],
            graph_vars,
            center_vars,
        }
    }

    pub fn ng(&self) -> usize {
        self.graph_vars.len()
    }

    pub fn nc(&self) -> usize {
        self.center_vars.len()
    }

    /// Graph displacements at center displacement `z`.
    pub fn eval(&self, z: &[f64]) -> Vec<f64> {
        self.polys.iter().map(|p| p.eval(z)).collect()
    }

    /// Base-point values of graph and center variables.
    pub fn base_point(&self) -> BTreeMap<String, f64> {
        let mut m = BTreeMap::new();
        for n in self.graph_vars.iter().chain(&self.center_vars) {
            m.insert(n.clone(), 0.0);
        }
        match self.base {
            ExpansionBase::Orig { c, .. } => {
                m.insert("u1".into(), c);
                m.insert("v1".into(), c);
            }
            ExpansionBase::K1 { a1_star } => {
                m.insert("v11".into(), -1.0);
                m.insert("a1".into(), a1_star);
            }
        }
        m
    }

    /// Coefficient of a monomial given by center indices (empty, one or two).
    pub fn coeff(&self, g: usize, mono: &[usize]) -> f64 {
        match mono {
            [a] => self.polys[g].lin[*a],
            [a, b] => {
                let (i, j) = if a <= b { (*a, *b) } else { (*b, *a) };
                self.polys[g].quad[i][j]
            }
            _ => 0.0,
        }
    }

    /// Coefficient looked up by variable names, e.g. `("u1", &["v2", "v2"])`.
    pub fn coeff_by_name(&self, graph: &str, mono: &[&str]) -> Option<f64> {
        let g = self.graph_vars.iter().position(|n| n == graph)?;
        let idx: Option<Vec<usize>> = mono
            .iter()
            .map(|m| self.center_vars.iter().position(|n| n == m))
            .collect();
        Some(self.coeff(g, &idx?))
    }

    /// All linear and quadratic coefficients as `(graph, monomial, value)`.
    pub fn entries(&self) -> Vec<(usize, Vec<usize>, f64)> {
        let nc = self.nc();
        let mut out = Vec::new();
        for (g, p) in self.polys.iter().enumerate() {
            for a in 0..nc {
                out.push((g, vec![a], p.lin[a]));
            }
            for a in 0..nc {
                for b in a..nc {
                    out.push((g, vec![a, b], p.quad[a][b]));
                }
            }
        }
        out
    }

    pub fn record(&self) -> ExpansionRecord {
        let coeffs = self
            .entries()
            .into_iter()
            .filter(|(_, _, v)| *v != 0.0)
            .map(|(g, mono, value)| {
                let mut m: Vec<(String, u32)> = Vec::new();
                for a in mono {
                    let name = self.center_vars[a].clone();
                    match m.iter_mut().find(|(n, _)| *n == name) {
                        Some(e) => e.1 += 1,
                        None => m.push((name, 1)),
                    }
                }
                CoeffRecord {
                    graph_var: self.graph_vars[g].clone(),
                    monomial: m,
                    value,
                }
            })
            .collect();
        ExpansionRecord {
            chart: self.chart,
            base_point: self.base_point(),
            k0: self.k0,
            coeffs,
        }
    }
}

fn check_c(c: f64) -> Result<()> {
    if c == 0.0 {
        return Err(Error::domain("c = 0: normal hyperbolicity lost"));
    }
    if !(c < 0.0) {
        return Err(Error::domain(format!(
            "c = {c} >= 0: the expansion requires the attracting branch c < 0"
        )));
    }
    if c.abs() > C_MAX {
        return Err(Error::domain(format!("|c| = {} exceeds {C_MAX}", c.abs())));
    }
    Ok(())
}

/// Closed-form quadratic expansion of `(u₁, …, u_{k0})` over
/// `(ṽ₁ = v₁ − c, v₂, …, v_{k0}, ε)` at `u₁ = v₁ = c`.
pub fn cm_closed_form(k0: usize, c: f64, mu: f64, a: f64) -> Result<ManifoldExpansion> {
    check_c(c)?;
    let params = ModelParams::new(mu, a, 0.0, k0)?;
    let lam: Vec<f64> = (1..=k0).map(|k| params.lambda_hat(k)).collect();
    for k in 2..=k0 {
        if (lam[k - 1] + 2.0 * c).abs() < RESONANCE_RTOL * (2.0 * c).abs() {
            return Err(Error::Resonance(format!(
                "λ̂_{k} + 2c = {:e} vanishes",
                lam[k - 1] + 2.0 * c
            )));
        }
    }
    let mut e = ManifoldExpansion::empty(Chart::Orig, k0, mu, ExpansionBase::Orig { c, a });
    let iv1 = 0;
    let ieps = k0;
    let m: Vec<f64> = (1..=k0).map(|k| 2.0 * c / (2.0 * c + lam[k - 1])).collect();
    {
        let h1 = &mut e.polys[0];
        h1.lin[iv1] = 1.0;
        h1.lin[ieps] = a * (1.0 - mu) / c;
        h1.add_quad(iv1, ieps, a * (mu - 1.0) / (c * c));
        h1.add_quad(ieps, ieps, -a * a * (mu - 3.0) * (mu - 1.0) / (2.0 * c.powi(3)));
        for j in 2..=k0 {
            let l = lam[j - 1];
            h1.add_quad(j - 1, j - 1, 1.0 / (2.0 * c) - 2.0 * c / (l + 2.0 * c).powi(2));
        }
    }
    let coupling = params.coupling();
    for k in 2..=k0 {
        let l = lam[k - 1];
        let d = l + 2.0 * c;
        let hk = &mut e.polys[k - 1];
        hk.lin[k - 1] = m[k - 1];
        hk.add_quad(
            k - 1,
            ieps,
            2.0 * (c * l * (2.0 * c + l) + 4.0 * a * c * (mu - 1.0) + 2.0 * a * l * mu) / d.powi(3),
        );
        hk.add_quad(iv1, k - 1, 2.0 * l / (d * d));
        for &(i, j, al) in &coupling.terms[k - 2] {
            hk.add_quad(i - 1, j - 1, -SQRT_2 * al * (m[i - 1] * m[j - 1] - 1.0) / d);
        }
    }
    Ok(e)
}

/// Closed-form quadratic expansion in chart K1 of `(ṽ_{1,1}, u_{2,1}, …)`
/// over `(r₁, ε₁, ã₁, v_{2,1}, …)` at `p_{a,1}^-(a₁*)`; finite at `a₁* = 0`.
pub fn cm_closed_form_k1(k0: usize, a1_star: f64, mu: f64) -> Result<ManifoldExpansion> {
    if !(a1_star >= 0.0) || !a1_star.is_finite() {
        return Err(Error::domain(format!("a1* must be nonnegative, got {a1_star}")));
    }
    if !mu.is_finite() || k0 < 1 {
        return Err(Error::domain("need finite mu and k0 >= 1"));
    }
    let aa = a1_star;
    let a32 = aa.powf(1.5);
    let mut e = ManifoldExpansion::empty(Chart::K1, k0, mu, ExpansionBase::K1 { a1_star });
    let (ie, ia) = (1, 2);
    let iv = |k: usize| 3 + k - 2;
    let b: Vec<f64> = (1..=k0).map(b_coeff).collect();
    // m_k = 2/(2 - β_k) with β_k = b_k A^{-3/2}, written to stay finite at A = 0.
    let m: Vec<f64> = (1..=k0)
        .map(|k| if k == 1 { 0.0 } else { 2.0 * a32 / (2.0 * a32 - b[k - 1]) })
        .collect();
    {
        let h = &mut e.polys[0];
        h.lin[ie] = aa * (1.0 - mu);
        h.add_quad(ia, ie, 1.0 - mu);
        h.add_quad(ie, ie, aa * aa * (mu * mu - 1.0) / 2.0);
        for k in 2..=k0 {
            h.add_quad(iv(k), iv(k), (1.0 - m[k - 1] * m[k - 1]) / 2.0);
        }
    }
    let coupling = SparseCoupling::new(k0);
    for k in 2..=k0 {
        let bk = b[k - 1];
        let den = bk - 2.0 * a32;
        if den.abs() < RESONANCE_RTOL {
            return Err(Error::Resonance(format!("b_{k} - 2 a1*^(3/2) vanishes")));
        }
        let h = &mut e.polys[k - 1];
        h.lin[iv(k)] = m[k - 1];
        let p = 2.0 * aa.powf(2.5) * (1.0 - mu) / den + 4.0 * aa.powi(4) * bk / den.powi(3);
        let q = -3.0 * bk * aa.sqrt() / (den * den);
        h.add_quad(ie, iv(k), p);
        h.add_quad(ia, iv(k), q);
        // 1/(β_k - 2) = A^{3/2}/(b_k - 2A^{3/2}).
        let inv = a32 / den;
        for &(i, j, al) in &coupling.terms[k - 2] {
            h.add_quad(iv(i), iv(j), -SQRT_2 * al * (m[i - 1] * m[j - 1] - 1.0) * inv);
        }
    }
    Ok(e)
}

/// First-order reduced branch in chart K1 with `ρ₁ = a₁ε₁`:
/// `h^-(ρ₁) = -1 + (1-μ)ρ₁`, `h^+(ρ₁) = 1 + (1+μ)ρ₁`.
pub fn reduced_hpm(branch: Branch, rho1: f64, mu: f64) -> f64 {
    match branch {
        Branch::Minus => -1.0 + (1.0 - mu) * rho1,
        Branch::Plus => 1.0 + (1.0 + mu) * rho1,
    }
}

/// A vector field with a distinguished equilibrium, variables ordered
/// `[graph…, center…]`.
#[derive(Clone, Debug)]
pub enum InvarianceSystem {
    /// Original coordinates, `x = [u₁…u_{k0}, v₁…v_{k0}, ε]`, base `u₁ = v₁ = c`.
    Orig { params: ModelParams, c: f64 },
    /// Chart K1, `x = [v₁₁, u_{2,1}…, r₁, ε₁, a₁, v_{2,1}…]` at `p_{a,1}^-(a₁*)`.
    K1 { params: ModelParams, a1_star: f64 },
    /// Chart K1 in the stiff limit `a₁* = 0`: `u_{k,1} ≡ 0`, the `r₁⁸` diffusion
    /// term dropped; `x = [v₁₁, r₁, ε₁, a₁, v_{2,1}…]`.
    K1Stiff { mu: f64, k0: usize },
}

impl InvarianceSystem {
    pub fn orig(k0: usize, c: f64, mu: f64, a: f64) -> Result<Self> {
        check_c(c)?;
        Ok(InvarianceSystem::Orig {
            params: ModelParams::new(mu, a, 0.0, k0)?,
            c,
        })
    }

    /// K1 system at `a₁*`; `a₁* = 0` selects the stiff limit.
    pub fn k1(k0: usize, a1_star: f64, mu: f64) -> Result<Self> {
        if !(a1_star >= 0.0) {
            return Err(Error::domain("a1* must be nonnegative"));
        }
        if a1_star == 0.0 {
            return Ok(InvarianceSystem::K1Stiff { mu, k0 });
        }
        Ok(InvarianceSystem::K1 {
            params: ModelParams::new(mu, 1.0, 0.0, k0)?,
            a1_star,
        })
    }

    /// System matching an expansion's base point.
    pub fn for_expansion(e: &ManifoldExpansion) -> Result<Self> {
        match e.base {
            ExpansionBase::Orig { c, a } => Self::orig(e.k0, c, e.mu, a),
            ExpansionBase::K1 { a1_star } => Self::k1(e.k0, a1_star, e.mu),
        }
    }

    pub fn k0(&self) -> usize {
        match self {
            InvarianceSystem::Orig { params, .. } | InvarianceSystem::K1 { params, .. } => params.k0,
            InvarianceSystem::K1Stiff { k0, .. } => *k0,
        }
    }

    pub fn ng(&self) -> usize {
        match self {
            InvarianceSystem::K1Stiff { .. } => 1,
            _ => self.k0(),
        }
    }

    pub fn nc(&self) -> usize {
        match self {
            InvarianceSystem::Orig { .. } => self.k0() + 1,
            _ => self.k0() + 2,
        }
    }

    /// Scale of the normal rate used in the resonance threshold.
    pub fn normal_rate(&self) -> f64 {
        match self {
            InvarianceSystem::Orig { c, .. } => (2.0 * c).abs(),
            _ => 2.0,
        }
    }

    pub fn base(&self) -> Vec<f64> {
        let k0 = self.k0();
        match self {
            InvarianceSystem::Orig { c, .. } => {
                let mut x = vec![0.0; 2 * k0 + 1];
                x[0] = *c;
                x[k0] = *c;
                x
            }
            InvarianceSystem::K1 { a1_star, .. } => {
                let mut x = vec![0.0; 2 * k0 + 2];
                x[0] = -1.0;
                x[k0 + 2] = *a1_star;
                x
            }
            InvarianceSystem::K1Stiff { .. } => {
                let mut x = vec![0.0; k0 + 3];
                x[0] = -1.0;
                x
            }
        }
    }

    /// Field in the `[graph…, center…]` ordering.
    pub fn eval<S: Scalar>(&self, x: &[S], out: &mut [S]) {
        match self {
            InvarianceSystem::Orig { params, .. } => orig_rhs_flat(params, x, out),
            InvarianceSystem::K1 { params, .. } => {
                let k0 = params.k0;
                let m = k0 - 1;
                let mut y = Vec::with_capacity(2 * k0 + 3);
                y.push(x[k0].clone());
                y.push(x[k0 + 1].clone());
                y.push(x[k0 + 2].clone());
                y.push(S::from(-1.0));
                y.push(x[0].clone());
                y.extend_from_slice(&x[1..k0]);
                y.extend_from_slice(&x[k0 + 3..k0 + 3 + m]);
                let mut d = vec![S::from(0.0); y.len()];
                chart_rhs(Chart::K1, params, &y, &mut d);
                out[0] = d[4].clone();
                out[1..k0].clone_from_slice(&d[5..5 + m]);
                out[k0] = d[0].clone();
                out[k0 + 1] = d[1].clone();
                out[k0 + 2] = d[2].clone();
                out[k0 + 3..k0 + 3 + m].clone_from_slice(&d[5 + m..5 + 2 * m]);
            }
            InvarianceSystem::K1Stiff { mu, k0 } => {
                let v = x[0].clone();
                let r = x[1].clone();
                let e = x[2].clone();
                let a = x[3].clone();
                let vk = &x[4..4 + k0 - 1];
                let mut f = S::from(1.0) - v.sq() + a.clone() * e.clone() * (2.0 * mu);
                for w in vk {
                    f = f - w.sq();
                }
                out[0] = a.clone() * e.clone() * 2.0 + v * f.clone();
                out[1] = -(r * f.clone()) / 3.0;
                out[2] = e * f.clone() * (8.0 / 3.0);
                out[3] = -(a * f.clone()) * (2.0 / 3.0);
                for (i, w) in vk.iter().enumerate() {
                    out[4 + i] = w.clone() * f.clone();
                }
            }
        }
    }

    /// Value, Jacobian and Hessians at the base point.
    pub fn jet(&self) -> FieldJet {
        let x0 = self.base();
        let n = x0.len();
        let x = Jet::seed(&x0);
        let mut out = vec![Jet::constant(0.0); n];
        self.eval(&x, &mut out);
        let value = out.iter().map(|j| j.value()).collect();
        let jac = DMatrix::from_fn(n, n, |i, j| out[i].grad(j));
        let hess = out
            .iter()
            .map(|o| DMatrix::from_fn(n, n, |i, j| o.hess(i, j)))
            .collect();
        FieldJet {
            ng: self.ng(),
            nc: self.nc(),
            value,
            jac,
            hess,
        }
    }
}

/// Second-order jet of a field at an equilibrium, `[graph…, center…]` order.
#[derive(Clone, Debug)]
pub struct FieldJet {
    pub ng: usize,
    pub nc: usize,
    pub value: Vec<f64>,
    pub jac: DMatrix<f64>,
    pub hess: Vec<DMatrix<f64>>,
}

/// Solves `(I ⊗ P − Qᵀ ⊗ I) vec X = vec R` for `X` (`P` is `ng×ng`, `Q` is `nc×nc`).
fn sylvester(p: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (ng, nc) = (p.nrows(), q.nrows());
    let n = ng * nc;
    let mut k = DMatrix::zeros(n, n);
    for j in 0..nc {
        for i in 0..ng {
            let row = i + j * ng;
            for i2 in 0..ng {
                k[(row, i2 + j * ng)] += p[(i, i2)];
            }
            for j2 in 0..nc {
                k[(row, i + j2 * ng)] -= q[(j2, j)];
            }
        }
    }
    let rhs = DVector::from_iterator(n, (0..nc).flat_map(|j| (0..ng).map(move |i| (i, j))).map(|(i, j)| r[(i, j)]));
    let sol = k
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Resonance("singular Sylvester operator".into()))?;
    Ok(DMatrix::from_fn(ng, nc, |i, j| sol[i + j * ng]))
}

/// Order-two solution of the invariance equation from a field jet.
///
/// Solves the Riccati equation `A H + B − H (C H + D) = 0` for the tangent
/// `H` by Newton's method, then the homological equation
/// `Σ (A − H C) W − (W M + Mᵀ W) = H P_c − P_g` for the symmetric quadratic
/// coefficient matrices `W_g`, with `M = C H + D`.
pub fn solve_jet(jet: &FieldJet, normal_rate: f64) -> Result<(DMatrix<f64>, Vec<DMatrix<f64>>)> {
    let (ng, nc) = (jet.ng, jet.nc);
    let scale = jet.jac.iter().fold(1.0f64, |m, x| m.max(x.abs()));
    if jet.value.iter().any(|v| v.abs() > EQUILIBRIUM_TOL * scale) {
        return Err(Error::domain("base point is not an equilibrium"));
    }
    let a = jet.jac.view((0, 0), (ng, ng)).into_owned();
    let b = jet.jac.view((0, ng), (ng, nc)).into_owned();
    let c = jet.jac.view((ng, 0), (nc, ng)).into_owned();
    let d = jet.jac.view((ng, ng), (nc, nc)).into_owned();
    let mut h = sylvester(&a, &d, &(-&b))?;
    for _ in 0..NEWTON_MAX_ITER {
        let res = &a * &h + &b - &h * (&c * &h + &d);
        if res.amax() <= 1e-15 * scale * (1.0 + h.amax()) {
            break;
        }
        let p = &a - &h * &c;
        let q = &c * &h + &d;
        let dx = sylvester(&p, &q, &(-res))?;
        h += dx;
    }
    let res = &a * &h + &b - &h * (&c * &h + &d);
    if res.amax() > 1e-10 * scale * (1.0 + h.amax()) {
        return Err(Error::numeric(format!(
            "tangent equation did not converge (residual {:e})",
            res.amax()
        )));
    }
    let m = &c * &h + &d;
    let mut mp = DMatrix::identity(nc, nc);
    for _ in 0..nc {
        mp = &mp * &m;
    }
    let mscale = m.amax().max(1.0).powi(nc as i32);
    if mp.amax() > NILPOTENT_TOL * mscale {
        return Err(Error::numeric("center block is not nilpotent; not a center manifold"));
    }
    let at = &a - &h * &c;
    let min_eig = at
        .clone()
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(f64::INFINITY, f64::min);
    if !(min_eig >= RESONANCE_RTOL * normal_rate) {
        return Err(Error::Resonance(format!(
            "graph eigenvalue of size {min_eig:e} below {RESONANCE_RTOL:e}·{normal_rate}"
        )));
    }
    let mut e = DMatrix::zeros(ng + nc, nc);
    e.view_mut((0, 0), (ng, nc)).copy_from(&h);
    e.view_mut((ng, 0), (nc, nc)).fill_with_identity();
    let p: Vec<DMatrix<f64>> = jet.hess.iter().map(|hs| e.transpose() * hs * &e * 0.5).collect();
    let pairs: Vec<(usize, usize)> = (0..nc).flat_map(|i| (i..nc).map(move |j| (i, j))).collect();
    let np = pairs.len();
    let n = ng * np;
    let mut lmat = DMatrix::zeros(n, n);
    for g0 in 0..ng {
        for (pi, &(i, j)) in pairs.iter().enumerate() {
            let col = g0 * np + pi;
            let mut s = DMatrix::zeros(nc, nc);
            s[(i, j)] = 1.0;
            s[(j, i)] = 1.0;
            let sm = &s * &m + m.transpose() * &s;
            for g in 0..ng {
                let w = at[(g, g0)];
                for (qi, &(k, l)) in pairs.iter().enumerate() {
                    let mut v = w * s[(k, l)];
                    if g == g0 {
                        v -= sm[(k, l)];
                    }
                    lmat[(g * np + qi, col)] = v;
                }
            }
        }
    }
    let mut rhs = DVector::zeros(n);
    for g in 0..ng {
        let mut t = -p[g].clone();
        for cc in 0..nc {
            t += &p[ng + cc] * h[(g, cc)];
        }
        for (qi, &(k, l)) in pairs.iter().enumerate() {
            rhs[g * np + qi] = t[(k, l)];
        }
    }
    let sol = lmat
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Resonance("singular homological operator".into()))?;
    let w = (0..ng)
        .map(|g| {
            let mut wg = DMatrix::zeros(nc, nc);
            for (pi, &(i, j)) in pairs.iter().enumerate() {
                wg[(i, j)] = sol[g * np + pi];
                wg[(j, i)] = sol[g * np + pi];
            }
            wg
        })
        .collect();
    Ok((h, w))
}

/// Independent oracle: solves the invariance equation of `sys` to second
/// order and returns the expansion in the same variables as the closed forms.
pub fn solve_invariance_order2(sys: &InvarianceSystem) -> Result<ManifoldExpansion> {
    let jet = sys.jet();
    let (h, w) = solve_jet(&jet, sys.normal_rate())?;
    let k0 = sys.k0();
    let (chart, mu, base) = match sys {
        InvarianceSystem::Orig { params, c } => (Chart::Orig, params.mu, ExpansionBase::Orig { c: *c, a: params.a }),
        InvarianceSystem::K1 { params, a1_star } => (Chart::K1, params.mu, ExpansionBase::K1 { a1_star: *a1_star }),
        InvarianceSystem::K1Stiff { mu, .. } => (Chart::K1, *mu, ExpansionBase::K1 { a1_star: 0.0 }),
    };
    let mut e = ManifoldExpansion::empty(chart, k0, mu, base);
    let nc = sys.nc();
    // The stiff system omits u_{k,1} (identically zero) from the graph, and
    // its center variables coincide with the full K1 ones.
    for g in 0..sys.ng() {
        let poly = &mut e.polys[g];
        for a in 0..nc {
            poly.lin[a] = h[(g, a)];
            for b in a..nc {
                poly.quad[a][b] = if a == b { w[g][(a, a)] } else { 2.0 * w[g][(a, b)] };
            }
        }
    }
    Ok(e)
}

/// Worst coefficient mismatch between two expansions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    /// `max |x − y| / max(|x|, |y|, floor/rtol)`; passes when `≤ COMPARE_RTOL`.
    pub max_rel_dev: f64,
    pub worst_graph: String,
    pub worst_monomial: Vec<String>,
    pub n_coeffs: usize,
}

impl Comparison {
    pub fn pass(&self) -> bool {
        self.max_rel_dev <= COMPARE_RTOL
    }
}

pub fn rel_dev(x: f64, y: f64) -> f64 {
    (x - y).abs() / x.abs().max(y.abs()).max(COMPARE_ABS_FLOOR / COMPARE_RTOL)
}

pub fn compare(a: &ManifoldExpansion, b: &ManifoldExpansion) -> Result<Comparison> {
    if a.graph_vars != b.graph_vars || a.center_vars != b.center_vars {
        return Err(Error::domain("expansions use different variables"));
    }
    let mut out = Comparison {
        max_rel_dev: 0.0,
        worst_graph: String::new(),
        worst_monomial: Vec::new(),
        n_coeffs: 0,
    };
    for ((g, mono, x), (_, _, y)) in a.entries().into_iter().zip(b.entries()) {
        out.n_coeffs += 1;
        let d = rel_dev(x, y);
        if !(d <= out.max_rel_dev) {
            out.max_rel_dev = d;
            out.worst_graph = a.graph_vars[g].clone();
            out.worst_monomial = mono.iter().map(|&i| a.center_vars[i].clone()).collect();
        }
    }
    Ok(out)
}

/// Invariance defect `F_g(x) − Σ_c ∂h_g/∂z_c F_c(x)` on the graph over `z`.
pub fn invariance_defect<S: Scalar>(e: &ManifoldExpansion, sys: &InvarianceSystem, z: &[S]) -> Vec<S> {
    let ng = sys.ng();
    let nc = sys.nc();
    let x0 = sys.base();
    let mut x: Vec<S> = Vec::with_capacity(ng + nc);
    for g in 0..ng {
        x.push(e.polys[g].eval(z) + x0[g]);
    }
    for c in 0..nc {
        x.push(z[c].clone() + x0[ng + c]);
    }
    let mut f = vec![S::from(0.0); ng + nc];
    sys.eval(&x, &mut f);
    (0..ng)
        .map(|g| {
            let mut r = f[g].clone();
            for c in 0..nc {
                r = r - e.polys[g].grad(z, c) * f[ng + c].clone();
            }
            r
        })
        .collect()
}

/// Max-norm invariance defect at a center sample.
pub fn invariance_residual(e: &ManifoldExpansion, sys: &InvarianceSystem, z: &[f64]) -> Result<f64> {
    if z.len() != sys.nc() || e.nc() != sys.nc() {
        return Err(Error::DimensionMismatch {
            expected: sys.nc(),
            got: z.len(),
        });
    }
    Ok(invariance_defect(e, sys, z).iter().fold(0.0, |m: f64, r| m.max(r.abs())))
}

/// Residuals along `s·direction` and their log-log slope.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RayFit {
    pub scales: Vec<f64>,
    pub residuals: Vec<f64>,
    /// Least-squares slope; `+∞` when every residual is exactly zero.
    pub slope: f64,
}

/// Least-squares slope of `y` against `x`.
pub fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// `n` log-spaced values from `lo` to `hi`.
pub fn logspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / (n - 1).max(1) as f64).exp())
        .collect()
}

/// Default ray direction: every center coordinate positive, decaying with index.
pub fn default_direction(nc: usize) -> Vec<f64> {
    (0..nc).map(|i| 1.0 / (1.0 + i as f64)).collect()
}

pub fn residual_ray_slope(
    e: &ManifoldExpansion,
    sys: &InvarianceSystem,
    direction: &[f64],
    scales: &[f64],
) -> Result<RayFit> {
    let mut residuals = Vec::with_capacity(scales.len());
    for &s in scales {
        let z: Vec<f64> = direction.iter().map(|d| s * d).collect();
        residuals.push(invariance_residual(e, sys, &z)?);
    }
    let slope = if residuals.iter().all(|r| *r == 0.0) {
        f64::INFINITY
    } else {
        let lx: Vec<f64> = scales.iter().map(|s| s.ln()).collect();
        let ly: Vec<f64> = residuals.iter().map(|r| r.max(f64::MIN_POSITIVE).ln()).collect();
        ls_slope(&lx, &ly)
    };
    Ok(RayFit {
        scales: scales.to_vec(),
        residuals,
        slope,
    })
}

/// Tensor grid over `(ṽ₁, σ, ε)` with center displacement
/// `v = ṽ₁ e₁ + σ Σ_{k≥2} θ_k k⁻² e_k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CenterGrid {
    pub n: usize,
    pub v1_half_width: f64,
    pub sigma_max: f64,
    pub eps_max: f64,
    /// Mode pattern `θ_k` for `k = 2..`; `(-1)^k` when absent.
    pub theta: Option<Vec<f64>>,
}

impl Default for CenterGrid {
    fn default() -> Self {
        // ‖(k⁻²)_{k≥2}‖ = (π⁴/90 − 1)^{1/2}, so σ_max keeps ‖v‖ ≤ 0.1.
        let tail = (std::f64::consts::PI.powi(4) / 90.0 - 1.0).sqrt();
        CenterGrid {
            n: 5,
            v1_half_width: 0.05,
            sigma_max: 0.05 / tail,
            eps_max: 0.01,
            theta: None,
        }
    }
}

impl CenterGrid {
    fn theta(&self, k: usize) -> f64 {
        match &self.theta {
            Some(t) => t.get(k - 2).copied().unwrap_or(0.0),
            None => {
                if k.is_multiple_of(2) {
                    1.0
                } else {
                    -1.0
                }
            }
        }
    }

    fn axis(&self, lo: f64, hi: f64) -> Vec<f64> {
        if self.n == 1 {
            return vec![0.5 * (lo + hi)];
        }
        (0..self.n)
            .map(|i| lo + (hi - lo) * i as f64 / (self.n - 1) as f64)
            .collect()
    }

    /// Original-coordinate center samples `[ṽ₁, v₂…v_{k0}, ε]`.
    pub fn points(&self, k0: usize) -> Vec<Vec<f64>> {
        let mut out = Vec::with_capacity(self.n.pow(3));
        for &v1 in &self.axis(-self.v1_half_width, self.v1_half_width) {
            for &s in &self.axis(0.0, self.sigma_max) {
                for &e in &self.axis(0.0, self.eps_max) {
                    let mut z = vec![v1];
                    z.extend((2..=k0).map(|k| s * self.theta(k) / (k * k) as f64));
                    z.push(e);
                    out.push(z);
                }
            }
        }
        out
    }
}

/// Fitted tail constant for one mode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailEntry {
    pub k: usize,
    /// Smallest `C` with `|h_k| ≤ C/|λ_k| (‖v‖² + 1 + ε)` on the samples.
    pub c_fit: f64,
    pub max_abs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    pub entries: Vec<TailEntry>,
    pub c_max: f64,
}

/// Fits the tail constants over center samples (`|λ̂_k|` weights in original
/// coordinates, `|b_k|` in K1).
pub fn tail_bound_check(e: &ManifoldExpansion, samples: &[Vec<f64>]) -> Result<TailReport> {
    if samples.is_empty() {
        return Err(Error::EmptySet("no samples for the tail bound".into()));
    }
    let (first_mode, eps_idx, weight): (usize, usize, Box<dyn Fn(usize) -> f64>) = match e.base {
        ExpansionBase::Orig { a, .. } => (
            1,
            e.k0,
            Box::new(move |k| (b_coeff(k) * a.powf(-1.5)).abs()),
        ),
        ExpansionBase::K1 { .. } => (1, 1, Box::new(|k| b_coeff(k).abs())),
    };
    let mut entries: Vec<TailEntry> = (2..=e.k0)
        .map(|k| TailEntry {
            k,
            c_fit: 0.0,
            max_abs: 0.0,
        })
        .collect();
    for z in samples {
        if z.len() != e.nc() {
            return Err(Error::DimensionMismatch {
                expected: e.nc(),
                got: z.len(),
            });
        }
        let h = e.eval(z);
        let vnorm2: f64 = z
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != eps_idx && (e.chart == Chart::Orig || *i >= 3))
            .map(|(_, x)| x * x)
            .sum();
        let bound = vnorm2 + 1.0 + z[eps_idx].abs();
        for (idx, ent) in entries.iter_mut().enumerate() {
            let k = idx + 2;
            let hk = h[k - 1 + first_mode - 1].abs();
            ent.max_abs = ent.max_abs.max(hk);
            ent.c_fit = ent.c_fit.max(hk * weight(k) / bound);
        }
    }
    let c_max = entries.iter().fold(0.0f64, |m, x| m.max(x.c_fit));
    Ok(TailReport { entries, c_max })
}

/// Hausdorff distance of two finite point clouds in ℓ² (shorter points are
/// zero-padded).
pub fn hausdorff_distance(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySet("Hausdorff distance of an empty sample".into()));
    }
    let d = |x: &[f64], y: &[f64]| -> f64 {
        let n = x.len().max(y.len());
        (0..n)
            .map(|i| {
                let d = x.get(i).copied().unwrap_or(0.0) - y.get(i).copied().unwrap_or(0.0);
                d * d
            })
            .sum::<f64>()
            .sqrt()
    };
    let directed = |p: &[Vec<f64>], q: &[Vec<f64>]| -> f64 {
        p.par_iter()
            .map(|x| q.iter().map(|y| d(x, y)).fold(f64::INFINITY, f64::min))
            .reduce(|| 0.0, f64::max)
    };
    Ok(directed(a, b).max(directed(b, a)))
}

/// One row of a convergence table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub k0: usize,
    pub sup_distance: f64,
    pub hausdorff: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub k_ref: usize,
    pub rows: Vec<ConvergenceRow>,
    /// `−slope` of `log sup_distance` against `log k0`.
    pub decay_exponent: f64,
    pub hausdorff_exponent: f64,
}

impl ConvergenceReport {
    pub fn monotone(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].sup_distance <= w[0].sup_distance)
    }

    pub fn hausdorff_monotone(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].hausdorff <= w[0].hausdorff)
    }
}

/// Reference truncation for manifold convergence.
pub const K_REF: usize = 64;

fn manifold_point(e: &ManifoldExpansion, c: f64, z: &[f64]) -> Vec<f64> {
    let k0 = e.k0;
    let h = e.eval(z);
    let mut p = Vec::with_capacity(2 * K_REF + 1);
    for k in 0..K_REF {
        p.push(if k < k0 { h[k] + if k == 0 { c } else { 0.0 } } else { 0.0 });
    }
    for k in 0..K_REF {
        p.push(if k < k0 { z[k] + if k == 0 { c } else { 0.0 } } else { 0.0 });
    }
    p.push(z[k0]);
    p
}

/// Sup-grid distances `‖h^{k0} − h^{k_ref}‖` and Hausdorff distances of the
/// sampled manifolds, in original coordinates.
pub fn convergence_report(
    k0_list: &[usize],
    c: f64,
    mu: f64,
    a: f64,
    grid: &CenterGrid,
    k_ref: usize,
) -> Result<ConvergenceReport> {
    if k0_list.is_empty() {
        return Err(Error::EmptySet("no truncation levels".into()));
    }
    if k_ref > K_REF || k0_list.iter().any(|&k| k == 0 || k >= k_ref) {
        return Err(Error::domain(format!(
            "truncations must lie in 1..{k_ref} and k_ref <= {K_REF}"
        )));
    }
    let href = cm_closed_form(k_ref, c, mu, a)?;
    let ref_pts = grid.points(k_ref);
    let ref_cloud: Vec<Vec<f64>> = ref_pts.iter().map(|z| manifold_point(&href, c, z)).collect();
    let rows: Vec<ConvergenceRow> = k0_list
        .par_iter()
        .map(|&k0| -> Result<ConvergenceRow> {
            let e = cm_closed_form(k0, c, mu, a)?;
            let mut sup: f64 = 0.0;
            let mut cloud = Vec::with_capacity(ref_pts.len());
            for zr in &ref_pts {
                let mut z: Vec<f64> = zr[..k0].to_vec();
                z.push(zr[k_ref]);
                let h = e.eval(&z);
                let hr = href.eval(zr);
                let d = (0..k_ref)
                    .map(|k| {
                        let x = if k < k0 { h[k] } else { 0.0 };
                        (x - hr[k]).powi(2)
                    })
                    .sum::<f64>()
                    .sqrt();
                sup = sup.max(d);
                cloud.push(manifold_point(&e, c, &z));
            }
            Ok(ConvergenceRow {
                k0,
                sup_distance: sup,
                hausdorff: hausdorff_distance(&cloud, &ref_cloud)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let lk: Vec<f64> = rows.iter().map(|r| (r.k0 as f64).ln()).collect();
    let fit = |vals: Vec<f64>| -> f64 {
        if rows.len() < 2 {
            return f64::NAN;
        }
        -ls_slope(&lk, &vals.iter().map(|d| d.max(f64::MIN_POSITIVE).ln()).collect::<Vec<_>>())
    };
    let decay_exponent = fit(rows.iter().map(|r| r.sup_distance).collect());
    let hausdorff_exponent = fit(rows.iter().map(|r| r.hausdorff).collect());
    Ok(ConvergenceReport {
        k_ref,
        rows,
        decay_exponent,
        hausdorff_exponent,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn k0_1_coefficients() {
        let e = cm_closed_form(1, -0.5, 0.0, 1.0).unwrap();
        // Standard-form coordinates x1 = ṽ1, x2 = 2aε.
        let b12 = e.coeff_by_name("u1", &["v1", "eps"]).unwrap() / 2.0;
        assert!((b12 + 2.0).abs() < 1e-14);
        let b22 = e.coeff_by_name("u1", &["eps", "eps"]).unwrap() / 4.0;
        assert!((b22 - 3.0).abs() < 1e-14);
        assert_eq!(e.coeff_by_name("u1", &["v1", "v1"]).unwrap(), 0.0);
        assert_eq!(e.coeff_by_name("u1", &["v1"]).unwrap(), 1.0);
    }

    #[test]
    fn k0_2_v2_square() {
        let (c, a) = (-0.1, 0.5);
        let e = cm_closed_form(2, c, 0.5, a).unwrap();
        let l2 = b_coeff(2) * a.powf(-1.5);
        let want = 1.0 / (2.0 * c) - 2.0 * c / (l2 + 2.0 * c).powi(2);
        assert!(rel_dev(e.coeff_by_name("u1", &["v2", "v2"]).unwrap(), want) < 1e-15);
        let c13 = 2.0 * l2 / (l2 + 2.0 * c).powi(2);
        assert!(rel_dev(e.coeff_by_name("u2", &["v1", "v2"]).unwrap(), c13) < 1e-15);
    }

    #[test]
    fn mu_one_kills_eps_corrections() {
        let e = cm_closed_form(3, -0.3, 1.0, 1.0).unwrap();
        for m in [&["eps"][..], &["v1", "eps"], &["eps", "eps"]] {
            assert_eq!(e.coeff_by_name("u1", m).unwrap(), 0.0);
        }
    }

    #[test]
    fn rejects_nonnegative_c() {
        let err = cm_closed_form(2, 0.0, 0.0, 1.0).unwrap_err();
        assert!(err.to_string().contains("normal hyperbolicity lost"));
        assert!(cm_closed_form(2, 0.2, 0.0, 1.0).is_err());
    }

    #[test]
    fn oracle_matches_k0_1() {
        let e = cm_closed_form(1, -0.5, 0.5, 1.0).unwrap();
        let o = solve_invariance_order2(&InvarianceSystem::orig(1, -0.5, 0.5, 1.0).unwrap()).unwrap();
        let cmp = compare(&e, &o).unwrap();
        assert!(cmp.pass(), "{cmp:?}");
    }

    #[test]
    fn oracle_matches_orig_k0_5() {
        for (c, mu, a) in [(-0.5, 0.5, 1.0), (-0.05, 2.0, 0.3), (-1.0, -1.0, 2.0)] {
            let e = cm_closed_form(5, c, mu, a).unwrap();
            let o = solve_invariance_order2(&InvarianceSystem::orig(5, c, mu, a).unwrap()).unwrap();
            let cmp = compare(&e, &o).unwrap();
            assert!(cmp.pass(), "c={c} mu={mu} a={a} {cmp:?}");
        }
    }

    #[test]
    fn oracle_matches_k1() {
        for (a1, mu) in [(0.0, 0.5), (0.3, 0.5), (1.0, 2.0), (0.05, -1.0)] {
            let e = cm_closed_form_k1(4, a1, mu).unwrap();
            let o = solve_invariance_order2(&InvarianceSystem::k1(4, a1, mu).unwrap()).unwrap();
            let cmp = compare(&e, &o).unwrap();
            assert!(cmp.pass(), "a1={a1} mu={mu} {cmp:?}");
        }
    }

    #[test]
    fn k1_at_zero_is_finite() {
        let e = cm_closed_form_k1(4, 0.0, 0.5).unwrap();
        for g in 1..4 {
            assert!(e.polys[g].lin.iter().all(|x| *x == 0.0));
            assert!(e.polys[g].quad.iter().flatten().all(|x| *x == 0.0));
        }
        assert!((e.coeff_by_name("v11", &["eps1", "a1"]).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn k1_leading_eps_coefficient() {
        let e = cm_closed_form_k1(3, 0.2, 2.0).unwrap();
        assert!((e.coeff_by_name("v11", &["eps1"]).unwrap() - 0.2 * (1.0 - 2.0)).abs() < 1e-15);
    }

    #[test]
    fn reduced_branches() {
        assert_eq!(reduced_hpm(Branch::Minus, 0.0, 0.3), -1.0);
        assert!((reduced_hpm(Branch::Plus, 0.1, 2.0) - 1.3).abs() < 1e-15);
        // F1 at the reduced branch with ρ1 = a1 ε1.
        let (mu, a1) = (0.4, 0.5);
        for rho in [1e-2, 1e-3] {
            let e1 = rho / a1;
            let v = reduced_hpm(Branch::Minus, rho, mu);
            let f = 1.0 - v * v + 2.0 * a1 * e1 * mu;
            assert!((f - 2.0 * rho).abs() < 2.0 * rho * rho);
        }
    }

    #[test]
    fn residual_zero_at_base_and_cubic_along_ray() {
        let e = cm_closed_form(3, -0.5, 0.0, 1.0).unwrap();
        let sys = InvarianceSystem::for_expansion(&e).unwrap();
        assert!(invariance_residual(&e, &sys, &[0.0; 4]).unwrap() < 1e-14);
        let fit = residual_ray_slope(&e, &sys, &default_direction(4), &logspace(1e-4, 1e-2, 7)).unwrap();
        assert!(fit.slope >= 2.7, "{fit:?}");
        let mut bad = e.clone();
        bad.polys[1].quad[0][1] += 0.1;
        let fit = residual_ray_slope(&bad, &sys, &default_direction(4), &logspace(1e-4, 1e-2, 7)).unwrap();
        assert!((fit.slope - 2.0).abs() < 0.1, "{fit:?}");
    }

    #[test]
    fn k0_1_invariance_cancels_through_degree_two() {
        for mu in [0.0, 0.5, 2.0] {
            let e = cm_closed_form(1, -0.3, mu, 0.7).unwrap();
            let sys = InvarianceSystem::for_expansion(&e).unwrap();
            let z = Jet::seed(&[0.0, 0.0]);
            let r = &invariance_defect(&e, &sys, &z)[0];
            assert!(r.value().abs() < 1e-15);
            for i in 0..2 {
                assert!(r.grad(i).abs() < 1e-14);
                for j in 0..2 {
                    assert!(r.hess(i, j).abs() < 1e-13, "mu={mu} ({i},{j}) {}", r.hess(i, j));
                }
            }
        }
    }

    #[test]
    fn single_v2_feeds_modes_one_and_three() {
        let e = cm_closed_form(6, -0.5, 0.5, 1.0).unwrap();
        let iv2 = 1;
        for k in 1..=6 {
            let q = e.polys[k - 1].quad[iv2][iv2];
            assert_eq!(q != 0.0, k == 1 || k == 3, "k={k} q={q}");
        }
    }

    #[test]
    fn hausdorff_examples() {
        let a = vec![vec![0.0, 1.0], vec![2.0, 0.0]];
        assert_eq!(hausdorff_distance(&a, &a).unwrap(), 0.0);
        let d = hausdorff_distance(&[vec![0.0, 0.0]], &[vec![3.0, 4.0]]).unwrap();
        assert!((d - 5.0).abs() < 1e-15);
        assert!(hausdorff_distance(&[], &a).is_err());
    }

    #[test]
    fn expansion_json_layout() {
        let e = cm_closed_form(2, -0.5, 0.0, 1.0).unwrap();
        let j = serde_json::to_value(e.record()).unwrap();
        assert_eq!(j["chart"], "ORIG");
        assert_eq!(j["k0"], 2);
        assert_eq!(j["base_point"]["u1"], -0.5);
        assert!(j["coeffs"].as_array().unwrap().iter().any(|c| c["graph_var"] == "u2"));
    }
}
