//! Adaptive integration: Dormand-Prince 5(4) with PI control and dense
//! output, a fourth-order exponential integrator for stiff diagonal parts,
//! and section-event location.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Event-location target for `|g| ` at a section hit.
pub const EVENT_TOL: f64 = 1e-10;
const EVENT_MAX_ITER: usize = 200;
const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;
const PI_BETA: f64 = 0.04;
const TAYLOR_RADIUS: f64 = 1.0;
const TAYLOR_TERMS: usize = 24;

/// Autonomous or time-dependent first-order system `y' = f(t, y)`.
pub trait OdeSystem: Sync {
    fn dim(&self) -> usize;

    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]);

    /// Diagonal of a stiff linear part, frozen at `y` over one step.
    fn stiff_diag(&self, _y: &[f64], d: &mut [f64]) {
        d.fill(0.0);
    }
}

/// Closure-backed system.
pub struct FnSystem<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(f64, &[f64], &mut [f64]) + Sync> FnSystem<F> {
    pub fn new(dim: usize, f: F) -> Self {
        FnSystem { dim, f }
    }
}

impl<F: Fn(f64, &[f64], &mut [f64]) + Sync> OdeSystem for FnSystem<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) {
        (self.f)(t, y, dy)
    }
}

/// Stepping scheme.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    /// Explicit Dormand-Prince 5(4).
    Dopri5,
    /// Cox-Matthews exponential RK4 on the stiff diagonal, step doubling for
    /// error control.
    Etd4,
    /// `Etd4` when the stiff diagonal at the start exceeds
    /// [`AUTO_STIFF_THRESHOLD`], otherwise `Dopri5`.
    Auto,
}

/// Magnitude of the stiff diagonal above which [`Method::Auto`] picks `Etd4`.
pub const AUTO_STIFF_THRESHOLD: f64 = 200.0;

/// Error tolerances and step controls.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
    pub h_min: f64,
    pub h_max: f64,
    pub max_steps: usize,
    pub method: Method,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            rtol: 1e-9,
            atol: 1e-12,
            h_min: 1e-14,
            h_max: f64::INFINITY,
            max_steps: 2_000_000,
            method: Method::Auto,
        }
    }
}

impl Tolerances {
    pub fn new(rtol: f64, atol: f64) -> Self {
        Tolerances {
            rtol,
            atol,
            ..Default::default()
        }
    }

    pub fn with_method(mut self, method: Method) -> Self {
        self.method = method;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.rtol > 0.0) || !(self.atol > 0.0) {
            return Err(Error::config("tolerances must be positive"));
        }
        if !(self.h_min > 0.0) || !(self.h_max > self.h_min) {
            return Err(Error::config("need 0 < h_min < h_max"));
        }
        Ok(())
    }
}

/// Dense interpolant over one accepted step.
#[derive(Clone, Debug)]
enum Dense {
    Dopri { rc: [Vec<f64>; 5] },
    Hermite { y0: Vec<f64>, y1: Vec<f64>, f0: Vec<f64>, f1: Vec<f64> },
}

/// One accepted step with its interpolant.
#[derive(Clone, Debug)]
pub struct DenseStep {
    pub t0: f64,
    pub h: f64,
    dense: Dense,
}

impl DenseStep {
    pub fn eval(&self, t: f64) -> Vec<f64> {
        let th = if self.h == 0.0 { 0.0 } else { (t - self.t0) / self.h };
        match &self.dense {
            Dense::Dopri { rc } => {
                let t1 = 1.0 - th;
                (0..rc[0].len())
                    .map(|i| {
                        rc[0][i]
                            + th * (rc[1][i] + t1 * (rc[2][i] + th * (rc[3][i] + t1 * rc[4][i])))
                    })
                    .collect()
            }
            Dense::Hermite { y0, y1, f0, f1 } => {
                let h = self.h;
                let h00 = (1.0 + 2.0 * th) * (1.0 - th).powi(2);
                let h10 = th * (1.0 - th).powi(2);
                let h01 = th * th * (3.0 - 2.0 * th);
                let h11 = th * th * (th - 1.0);
                (0..y0.len())
                    .map(|i| h00 * y0[i] + h10 * h * f0[i] + h01 * y1[i] + h11 * h * f1[i])
                    .collect()
            }
        }
    }
}

/// Stored solution with dense output.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub ts: Vec<f64>,
    pub ys: Vec<Vec<f64>>,
    steps: Vec<DenseStep>,
}

impl Trajectory {
    pub fn t_end(&self) -> f64 {
        *self.ts.last().expect("trajectory has at least one point")
    }

    pub fn last(&self) -> &[f64] {
        self.ys.last().expect("trajectory has at least one point")
    }

    pub fn n_steps(&self) -> usize {
        self.steps.len()
    }

    /// Dense-output value at `t` in `[t0, t_end]`.
    pub fn eval(&self, t: f64) -> Result<Vec<f64>> {
        let (t0, t1) = (self.ts[0], self.t_end());
        let span = (t1 - t0).abs().max(1e-300);
        if (t - t0) * (t - t1) > 1e-12 * span * span {
            return Err(Error::domain(format!("t = {t} outside [{t0}, {t1}]")));
        }
        if self.steps.is_empty() {
            return Ok(self.ys[0].clone());
        }
        let idx = self
            .steps
            .partition_point(|s| s.t0 + s.h < t)
            .min(self.steps.len() - 1);
        Ok(self.steps[idx].eval(t))
    }
}

/// Direction filter for a section crossing.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Rising,
    Falling,
    Either,
}

type ScalarFn<'a> = Box<dyn Fn(&[f64]) -> f64 + Send + Sync + 'a>;

/// Interval constraint checked at a section hit.
pub struct BoxConstraint<'a> {
    pub label: String,
    pub f: ScalarFn<'a>,
    pub lo: f64,
    pub hi: f64,
}

impl<'a> BoxConstraint<'a> {
    pub fn new(
        label: impl Into<String>,
        lo: f64,
        hi: f64,
        f: impl Fn(&[f64]) -> f64 + Send + Sync + 'a,
    ) -> Self {
        BoxConstraint {
            label: label.into(),
            f: Box::new(f),
            lo,
            hi,
        }
    }
}

/// Zero set of a scalar condition with optional box constraints.
pub struct Section<'a> {
    pub name: String,
    pub g: ScalarFn<'a>,
    pub direction: Direction,
    /// Report a hit at `t = 0` when the start already satisfies the condition.
    pub allow_start_hit: bool,
    pub boxes: Vec<BoxConstraint<'a>>,
}

impl<'a> Section<'a> {
    pub fn new(
        name: impl Into<String>,
        direction: Direction,
        g: impl Fn(&[f64]) -> f64 + Send + Sync + 'a,
    ) -> Self {
        Section {
            name: name.into(),
            g: Box::new(g),
            direction,
            allow_start_hit: false,
            boxes: Vec::new(),
        }
    }

    pub fn allow_start_hit(mut self) -> Self {
        self.allow_start_hit = true;
        self
    }

    pub fn with_box(mut self, b: BoxConstraint<'a>) -> Self {
        self.boxes.push(b);
        self
    }

    fn crossed(&self, g0: f64, g1: f64) -> bool {
        let rising = g0 < 0.0 && g1 >= 0.0;
        let falling = g0 > 0.0 && g1 <= 0.0;
        match self.direction {
            Direction::Rising => rising,
            Direction::Falling => falling,
            Direction::Either => rising || falling,
        }
    }
}

/// Predicate that must hold along the trajectory (e.g. a chart wedge).
/// State predicate of a guard.
pub type Predicate<'a> = Box<dyn Fn(&[f64]) -> bool + Send + Sync + 'a>;

pub struct Guard<'a> {
    pub label: String,
    pub ok: Predicate<'a>,
}

impl<'a> Guard<'a> {
    pub fn new(label: impl Into<String>, ok: impl Fn(&[f64]) -> bool + Send + Sync + 'a) -> Self {
        Guard {
            label: label.into(),
            ok: Box::new(ok),
        }
    }
}

/// Section hit with the full state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SectionHit {
    pub section: usize,
    pub name: String,
    pub t: f64,
    pub y: Vec<f64>,
}

/// Why a section search stopped without a hit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum MissReason {
    MaxTime,
    Guard(String),
}

/// Result of [`integrate_to_section`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum SectionOutcome {
    Hit(SectionHit),
    BoxViolation {
        hit: SectionHit,
        label: String,
        value: f64,
        lo: f64,
        hi: f64,
    },
    Miss {
        t: f64,
        y: Vec<f64>,
        reason: MissReason,
    },
}

/// φ_1, φ_2, φ_3 of the exponential integrator.
fn phis(z: f64) -> (f64, f64, f64) {
    if z.abs() < TAYLOR_RADIUS {
        let mut p = [0.0; 3];
        // φ_k(z) = Σ z^n / (n + k)!
        for (k, pk) in p.iter_mut().enumerate() {
            let kk = k + 1;
            let mut fact: f64 = (1..=kk).map(|m| m as f64).product();
            let mut zn = 1.0;
            let mut s = 0.0;
            for n in 0..TAYLOR_TERMS {
                s += zn / fact;
                zn *= z;
                fact *= (n + kk + 1) as f64;
            }
            *pk = s;
        }
        (p[0], p[1], p[2])
    } else {
        let e = z.exp();
        let p1 = (e - 1.0) / z;
        let p2 = (e - 1.0 - z) / (z * z);
        let p3 = (e - 1.0 - z - 0.5 * z * z) / (z * z * z);
        (p1, p2, p3)
    }
}

struct StepOut {
    y1: Vec<f64>,
    /// Weighted error norm (≤ 1 accepts).
    err: f64,
    dense: Dense,
}

struct Stepper<'s, S: OdeSystem + ?Sized> {
    sys: &'s S,
    tol: Tolerances,
    etd: bool,
    n: usize,
    nfev: usize,
}

impl<'s, S: OdeSystem + ?Sized> Stepper<'s, S> {
    fn f(&mut self, t: f64, y: &[f64]) -> Vec<f64> {
        let mut d = vec![0.0; self.n];
        self.sys.rhs(t, y, &mut d);
        self.nfev += 1;
        d
    }

    fn err_norm(&self, y0: &[f64], y1: &[f64], e: &[f64]) -> f64 {
        let s: f64 = (0..self.n)
            .map(|i| {
                let sc = self.tol.atol + self.tol.rtol * y0[i].abs().max(y1[i].abs());
                (e[i] / sc).powi(2)
            })
            .sum();
        (s / self.n as f64).sqrt()
    }

    fn dopri(&mut self, t: f64, y: &[f64], f0: &[f64], h: f64) -> StepOut {
        const C2: f64 = 1.0 / 5.0;
        const C3: f64 = 3.0 / 10.0;
        const C4: f64 = 4.0 / 5.0;
        const C5: f64 = 8.0 / 9.0;
        const A21: f64 = 1.0 / 5.0;
        const A31: f64 = 3.0 / 40.0;
        const A32: f64 = 9.0 / 40.0;
        const A41: f64 = 44.0 / 45.0;
        const A42: f64 = -56.0 / 15.0;
        const A43: f64 = 32.0 / 9.0;
        const A51: f64 = 19372.0 / 6561.0;
        const A52: f64 = -25360.0 / 2187.0;
        const A53: f64 = 64448.0 / 6561.0;
        const A54: f64 = -212.0 / 729.0;
        const A61: f64 = 9017.0 / 3168.0;
        const A62: f64 = -355.0 / 33.0;
        const A63: f64 = 46732.0 / 5247.0;
        const A64: f64 = 49.0 / 176.0;
        const A65: f64 = -5103.0 / 18656.0;
        const A71: f64 = 35.0 / 384.0;
        const A73: f64 = 500.0 / 1113.0;
        const A74: f64 = 125.0 / 192.0;
        const A75: f64 = -2187.0 / 6784.0;
        const A76: f64 = 11.0 / 84.0;
        const E1: f64 = 71.0 / 57600.0;
        const E3: f64 = -71.0 / 16695.0;
        const E4: f64 = 71.0 / 1920.0;
        const E5: f64 = -17253.0 / 339200.0;
        const E6: f64 = 22.0 / 525.0;
        const E7: f64 = -1.0 / 40.0;
        const D1: f64 = -12715105075.0 / 11282082432.0;
        const D3: f64 = 87487479700.0 / 32700410799.0;
        const D4: f64 = -10690763975.0 / 1880347072.0;
        const D5: f64 = 701980252875.0 / 199316789632.0;
        const D6: f64 = -1453857185.0 / 822651844.0;
        const D7: f64 = 69997945.0 / 29380423.0;

        let n = self.n;
        let k1 = f0;
        let stage = |coef: &[(f64, &[f64])]| -> Vec<f64> {
            (0..n)
                .map(|i| y[i] + h * coef.iter().map(|(c, k)| c * k[i]).sum::<f64>())
                .collect()
        };
        let y2 = stage(&[(A21, k1)]);
        let k2 = self.f(t + C2 * h, &y2);
        let y3 = stage(&[(A31, k1), (A32, &k2)]);
        let k3 = self.f(t + C3 * h, &y3);
        let y4 = stage(&[(A41, k1), (A42, &k2), (A43, &k3)]);
        let k4 = self.f(t + C4 * h, &y4);
        let y5 = stage(&[(A51, k1), (A52, &k2), (A53, &k3), (A54, &k4)]);
        let k5 = self.f(t + C5 * h, &y5);
        let y6 = stage(&[(A61, k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]);
        let k6 = self.f(t + h, &y6);
        let y1 = stage(&[(A71, k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
        let k7 = self.f(t + h, &y1);
        let e: Vec<f64> = (0..n)
            .map(|i| {
                h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i])
            })
            .collect();
        let err = self.err_norm(y, &y1, &e);
        let ydiff: Vec<f64> = (0..n).map(|i| y1[i] - y[i]).collect();
        let bspl: Vec<f64> = (0..n).map(|i| h * k1[i] - ydiff[i]).collect();
        let rc4: Vec<f64> = (0..n).map(|i| ydiff[i] - h * k7[i] - bspl[i]).collect();
        let rc5: Vec<f64> = (0..n)
            .map(|i| {
                h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i])
            })
            .collect();
        StepOut {
            y1,
            err,
            dense: Dense::Dopri {
                rc: [y.to_vec(), ydiff, bspl, rc4, rc5],
            },
        }
    }

    /// One Cox-Matthews step with the diagonal frozen at `y`.
    fn etd_single(&mut self, t: f64, y: &[f64], f0: &[f64], h: f64) -> Vec<f64> {
        let n = self.n;
        let mut l = vec![0.0; n];
        self.sys.stiff_diag(y, &mut l);
        let nl = |f: &[f64], x: &[f64]| -> Vec<f64> { (0..n).map(|i| f[i] - l[i] * x[i]).collect() };
        let e2: Vec<f64> = l.iter().map(|li| (li * h / 2.0).exp()).collect();
        let q: Vec<f64> = l.iter().map(|li| h / 2.0 * phis(li * h / 2.0).0).collect();
        let nu = nl(f0, y);
        let a: Vec<f64> = (0..n).map(|i| e2[i] * y[i] + q[i] * nu[i]).collect();
        let fa = self.f(t + h / 2.0, &a);
        let na = nl(&fa, &a);
        let b: Vec<f64> = (0..n).map(|i| e2[i] * y[i] + q[i] * na[i]).collect();
        let fb = self.f(t + h / 2.0, &b);
        let nb = nl(&fb, &b);
        let c: Vec<f64> = (0..n)
            .map(|i| e2[i] * a[i] + q[i] * (2.0 * nb[i] - nu[i]))
            .collect();
        let fc = self.f(t + h, &c);
        let nc = nl(&fc, &c);
        (0..n)
            .map(|i| {
                let z = l[i] * h;
                let (p1, p2, p3) = phis(z);
                let w1 = p1 - 3.0 * p2 + 4.0 * p3;
                let w2 = 2.0 * (p2 - 2.0 * p3);
                let w3 = 4.0 * p3 - p2;
                z.exp() * y[i] + h * (w1 * nu[i] + w2 * (na[i] + nb[i]) + w3 * nc[i])
            })
            .collect()
    }

    fn etd(&mut self, t: f64, y: &[f64], f0: &[f64], h: f64) -> StepOut {
        let big = self.etd_single(t, y, f0, h);
        let half = self.etd_single(t, y, f0, h / 2.0);
        let fh = self.f(t + h / 2.0, &half);
        let y1 = self.etd_single(t + h / 2.0, &half, &fh, h / 2.0);
        let e: Vec<f64> = (0..self.n).map(|i| (y1[i] - big[i]) / 15.0).collect();
        let err = self.err_norm(y, &y1, &e);
        let f1 = self.f(t + h, &y1);
        StepOut {
            dense: Dense::Hermite {
                y0: y.to_vec(),
                y1: y1.clone(),
                f0: f0.to_vec(),
                f1,
            },
            y1,
            err,
        }
    }

    fn step(&mut self, t: f64, y: &[f64], f0: &[f64], h: f64) -> StepOut {
        if self.etd {
            self.etd(t, y, f0, h)
        } else {
            self.dopri(t, y, f0, h)
        }
    }

    /// Cheap single step used inside event location.
    fn probe(&mut self, t: f64, y: &[f64], f0: &[f64], h: f64) -> Vec<f64> {
        if h == 0.0 {
            return y.to_vec();
        }
        if self.etd {
            self.etd_single(t, y, f0, h)
        } else {
            self.dopri(t, y, f0, h).y1
        }
    }

    fn initial_h(&mut self, t: f64, y: &[f64], f0: &[f64], span: f64) -> f64 {
        let sc = |i: usize| self.tol.atol + self.tol.rtol * y[i].abs();
        let d0 = (0..self.n).map(|i| (y[i] / sc(i)).powi(2)).sum::<f64>().sqrt();
        let d1 = (0..self.n).map(|i| (f0[i] / sc(i)).powi(2)).sum::<f64>().sqrt();
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        let mut l = vec![0.0; self.n];
        self.sys.stiff_diag(y, &mut l);
        let lmax = l.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let h0 = if !self.etd && lmax > 0.0 { h0.min(1.0 / lmax) } else { h0 };
        let _ = t;
        h0.min(span.abs()).min(self.tol.h_max).max(self.tol.h_min * 10.0)
    }
}

fn choose_etd<S: OdeSystem + ?Sized>(sys: &S, y0: &[f64], method: Method) -> bool {
    match method {
        Method::Dopri5 => false,
        Method::Etd4 => true,
        Method::Auto => {
            let mut l = vec![0.0; sys.dim()];
            sys.stiff_diag(y0, &mut l);
            l.iter().any(|x| x.abs() > AUTO_STIFF_THRESHOLD)
        }
    }
}

/// Accepted-step information passed to observers.
pub struct StepView<'v> {
    pub t: f64,
    pub y: &'v [f64],
}

struct Driver<'s, S: OdeSystem + ?Sized> {
    st: Stepper<'s, S>,
    t: f64,
    y: Vec<f64>,
    f: Vec<f64>,
    h: f64,
    facold: f64,
    steps: usize,
}

struct Accepted {
    t0: f64,
    y0: Vec<f64>,
    f0: Vec<f64>,
    h: f64,
    dense: Dense,
}

impl<'s, S: OdeSystem + ?Sized> Driver<'s, S> {
    fn new(sys: &'s S, t0: f64, y0: &[f64], t_end: f64, tol: Tolerances) -> Result<Self> {
        tol.validate()?;
        if y0.len() != sys.dim() {
            return Err(Error::DimensionMismatch {
                expected: sys.dim(),
                got: y0.len(),
            });
        }
        if !y0.iter().all(|x| x.is_finite()) {
            return Err(Error::numeric("non-finite initial state"));
        }
        let etd = choose_etd(sys, y0, tol.method);
        let mut st = Stepper {
            sys,
            tol,
            etd,
            n: y0.len(),
            nfev: 0,
        };
        let f = st.f(t0, y0);
        if !f.iter().all(|x| x.is_finite()) {
            return Err(Error::numeric("non-finite vector field at the initial state"));
        }
        let h = st.initial_h(t0, y0, &f, t_end - t0);
        Ok(Driver {
            st,
            t: t0,
            y: y0.to_vec(),
            f,
            h,
            facold: 1e-4,
            steps: 0,
        })
    }

    /// Advances one accepted step not beyond `t_end`.
    fn advance(&mut self, t_end: f64) -> Result<Accepted> {
        let tol = self.st.tol;
        loop {
            self.steps += 1;
            if self.steps > tol.max_steps {
                return Err(Error::Stiffness {
                    t: self.t,
                    h: self.h,
                    steps: self.steps,
                    detail: "step budget exhausted".into(),
                });
            }
            let remaining = t_end - self.t;
            let last = self.h >= remaining * (1.0 - 1e-12);
            let h = if last { remaining } else { self.h };
            let out = self.st.step(self.t, &self.y, &self.f, h);
            let finite = out.err.is_finite() && out.y1.iter().all(|x| x.is_finite());
            if finite && out.err <= 1.0 {
                let t0 = self.t;
                let y0 = std::mem::replace(&mut self.y, out.y1);
                let f0 = std::mem::take(&mut self.f);
                self.t = if last { t_end } else { t0 + h };
                self.f = self.st.f(self.t, &self.y);
                if !self.f.iter().all(|x| x.is_finite()) {
                    return Err(Error::numeric(format!(
                        "non-finite vector field at t = {}",
                        self.t
                    )));
                }
                let expo = 0.2 - 0.75 * PI_BETA;
                let fac11 = out.err.max(1e-16).powf(expo);
                let fac = (fac11 / self.facold.powf(PI_BETA) / SAFETY).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
                self.facold = out.err.max(1e-4);
                self.h = (h / fac).min(tol.h_max);
                return Ok(Accepted {
                    t0,
                    y0,
                    f0,
                    h,
                    dense: out.dense,
                });
            }
            let shrink = if finite {
                (SAFETY * out.err.powf(-0.2)).max(FAC_MIN)
            } else {
                0.25
            };
            self.h = h * shrink;
            if self.h < tol.h_min {
                return Err(Error::Stiffness {
                    t: self.t,
                    h: self.h,
                    steps: self.steps,
                    detail: if finite {
                        format!("step size underflow (error norm {:.3e})", out.err)
                    } else {
                        "non-finite stage values".into()
                    },
                });
            }
        }
    }
}

/// Integrates from `t0` to `t_end`, storing every accepted step.
pub fn integrate<S: OdeSystem + ?Sized>(
    sys: &S,
    t0: f64,
    y0: &[f64],
    t_end: f64,
    tol: Tolerances,
) -> Result<Trajectory> {
    if !(t_end >= t0) {
        return Err(Error::domain("integration runs forward in time only"));
    }
    let mut drv = Driver::new(sys, t0, y0, t_end, tol)?;
    let mut tr = Trajectory {
        ts: vec![t0],
        ys: vec![y0.to_vec()],
        steps: Vec::new(),
    };
    while drv.t < t_end {
        let acc = drv.advance(t_end)?;
        tr.steps.push(DenseStep {
            t0: acc.t0,
            h: acc.h,
            dense: acc.dense,
        });
        tr.ts.push(drv.t);
        tr.ys.push(drv.y.clone());
    }
    Ok(tr)
}

/// Integrates until the first crossing of any section, a guard failure, or
/// `t0 + max_time`. `observer` sees the start and every accepted step end.
#[allow(clippy::too_many_arguments)]
pub fn integrate_to_section<S: OdeSystem + ?Sized>(
    sys: &S,
    t0: f64,
    y0: &[f64],
    sections: &[Section<'_>],
    guards: &[Guard<'_>],
    max_time: f64,
    tol: Tolerances,
    mut observer: impl FnMut(StepView<'_>),
) -> Result<SectionOutcome> {
    if sections.is_empty() {
        return Err(Error::domain("no sections given"));
    }
    let t_end = t0 + max_time;
    observer(StepView { t: t0, y: y0 });
    for (idx, s) in sections.iter().enumerate() {
        if s.allow_start_hit && (s.g)(y0).abs() <= EVENT_TOL {
            return Ok(finish_hit(idx, s, t0, y0.to_vec()));
        }
    }
    for g in guards {
        if !(g.ok)(y0) {
            return Ok(SectionOutcome::Miss {
                t: t0,
                y: y0.to_vec(),
                reason: MissReason::Guard(g.label.clone()),
            });
        }
    }
    let mut drv = Driver::new(sys, t0, y0, t_end, tol)?;
    let mut g_prev: Vec<f64> = sections.iter().map(|s| (s.g)(y0)).collect();
    while drv.t < t_end {
        let acc = drv.advance(t_end)?;
        let g_new: Vec<f64> = sections.iter().map(|s| (s.g)(&drv.y)).collect();
        let mut best: Option<(usize, f64, Vec<f64>)> = None;
        for (idx, s) in sections.iter().enumerate() {
            if !s.crossed(g_prev[idx], g_new[idx]) {
                continue;
            }
            let (sh, yh) = locate(&mut drv.st, &acc, s, g_prev[idx], g_new[idx]);
            if best.as_ref().is_none_or(|b| sh < b.1) {
                best = Some((idx, sh, yh));
            }
        }
        if let Some((idx, sh, yh)) = best {
            let t_hit = acc.t0 + sh;
            observer(StepView { t: t_hit, y: &yh });
            return Ok(finish_hit(idx, &sections[idx], t_hit, yh));
        }
        observer(StepView { t: drv.t, y: &drv.y });
        for g in guards {
            if !(g.ok)(&drv.y) {
                return Ok(SectionOutcome::Miss {
                    t: drv.t,
                    y: drv.y.clone(),
                    reason: MissReason::Guard(g.label.clone()),
                });
            }
        }
        g_prev = g_new;
    }
    Ok(SectionOutcome::Miss {
        t: drv.t,
        y: drv.y,
        reason: MissReason::MaxTime,
    })
}

fn finish_hit(idx: usize, s: &Section<'_>, t: f64, y: Vec<f64>) -> SectionOutcome {
    let hit = SectionHit {
        section: idx,
        name: s.name.clone(),
        t,
        y,
    };
    for b in &s.boxes {
        let v = (b.f)(&hit.y);
        if !(v >= b.lo && v <= b.hi) {
            return SectionOutcome::BoxViolation {
                label: b.label.clone(),
                value: v,
                lo: b.lo,
                hi: b.hi,
                hit,
            };
        }
    }
    SectionOutcome::Hit(hit)
}

/// Illinois iteration on `s ↦ g(step(y0, s))` over `[0, h]`.
fn locate<S: OdeSystem + ?Sized>(
    st: &mut Stepper<'_, S>,
    acc: &Accepted,
    s: &Section<'_>,
    g0: f64,
    g1: f64,
) -> (f64, Vec<f64>) {
    let mut eval = |x: f64| -> (f64, Vec<f64>) {
        let y = st.probe(acc.t0, &acc.y0, &acc.f0, x);
        ((s.g)(&y), y)
    };
    let (mut a, mut fa) = (0.0, g0);
    let (mut b, mut fb) = (acc.h, g1);
    let mut yb = None;
    if fb.abs() <= EVENT_TOL {
        let (v, y) = eval(b);
        if v.abs() <= EVENT_TOL {
            return (b, y);
        }
        fb = v;
        yb = Some(y);
    }
    let mut side = 0i8;
    for _ in 0..EVENT_MAX_ITER {
        let mut c = b - fb * (b - a) / (fb - fa);
        if !c.is_finite() || c <= a.min(b) || c >= a.max(b) {
            c = 0.5 * (a + b);
        }
        let (fc, yc) = eval(c);
        if fc.abs() <= EVENT_TOL || (b - a).abs() <= 4.0 * f64::EPSILON * acc.h.abs().max(acc.t0.abs()) {
            return (c, yc);
        }
        if fc * fb < 0.0 {
            a = b;
            fa = fb;
            side = 0;
        } else {
            if side == 1 {
                fa *= 0.5;
            }
            side = 1;
        }
        b = c;
        fb = fc;
        yb = Some(yc);
    }
    (b, yb.unwrap_or_else(|| eval(b).1))
}
