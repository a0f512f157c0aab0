//! Neumann cosine eigenbasis of the Laplacian on `[-a, a]`, its eigenvalues,
//! and the triple-product coupling coefficients of the Galerkin nonlinearity.

use std::f64::consts::{PI, SQRT_2};

use crate::error::{Error, Result};

/// Largest mode index for which dense coupling tables are built.
pub const KMAX_CAP: usize = 128;

/// Grid points used by the quadrature cross-checks.
pub const QUADRATURE_POINTS: usize = 2048;

/// Minimum grid intervals per wavelength for a resolved projection.
const MIN_POINTS_PER_WAVELENGTH: f64 = 8.0;

fn check_mode(k: usize, a: f64) -> Result<()> {
    if k < 1 {
        return Err(Error::domain(format!("mode index must be >= 1, got {k}")));
    }
    if !(a > 0.0) || !a.is_finite() {
        return Err(Error::domain(format!("half-length must be positive, got {a}")));
    }
    Ok(())
}

/// `b_k = -π²(k-1)² 2^{-3/2}`, the `a`-independent part of the scaled eigenvalue.
pub fn b_coeff(k: usize) -> f64 {
    let m = (k as f64) - 1.0;
    -PI * PI * m * m / (2.0 * SQRT_2)
}

/// `λ_k = -(π(k-1)/(2a))²`.
pub fn eigenvalue(k: usize, a: f64) -> Result<f64> {
    check_mode(k, a)?;
    let w = PI * ((k as f64) - 1.0) / (2.0 * a);
    Ok(-w * w)
}

/// `λ̂_k = b_k a^{-3/2}`, equal to `√(2a) λ_k`.
pub fn scaled_eigenvalue(k: usize, a: f64) -> Result<f64> {
    check_mode(k, a)?;
    Ok(b_coeff(k) * a.powf(-1.5))
}

fn check_position(a: f64, x: f64) -> Result<()> {
    let slack = 1e-12 * a.max(1.0);
    if !(x >= -a - slack && x <= a + slack) {
        return Err(Error::domain(format!("position {x} outside [-{a}, {a}]")));
    }
    Ok(())
}

/// Orthonormal eigenfunction `e_k(x)`; `e_1 = 1/√(2a)`,
/// `e_k = a^{-1/2} cos(π(k-1)(x+a)/(2a))` for `k ≥ 2`.
pub fn eigenfunction(k: usize, a: f64, x: f64) -> Result<f64> {
    check_mode(k, a)?;
    check_position(a, x)?;
    Ok(eigenfunction_unchecked(k, a, x))
}

pub(crate) fn eigenfunction_unchecked(k: usize, a: f64, x: f64) -> f64 {
    if k == 1 {
        1.0 / (2.0f64 * a).sqrt()
    } else {
        let w = PI * ((k as f64) - 1.0) / (2.0 * a);
        (w * (x + a)).cos() / a.sqrt()
    }
}

/// Spatial derivative `e_k'(x)`.
pub fn eigenfunction_derivative(k: usize, a: f64, x: f64) -> Result<f64> {
    check_mode(k, a)?;
    check_position(a, x)?;
    if k == 1 {
        return Ok(0.0);
    }
    let w = PI * ((k as f64) - 1.0) / (2.0 * a);
    Ok(-w * (w * (x + a)).sin() / a.sqrt())
}

/// Coupling coefficient `α_{i,j}^k = √a ⟨e_i e_j, e_k⟩` for `i, j, k ≥ 2`.
///
/// Each of the resonances `i + j - k = 1` and `k - |i - j| = 1` contributes 1/2.
pub fn alpha(i: usize, j: usize, k: usize) -> Result<f64> {
    if i < 2 || j < 2 || k < 2 {
        return Err(Error::domain(format!(
            "coupling indices must be >= 2, got ({i}, {j}, {k})"
        )));
    }
    Ok(alpha_unchecked(i, j, k))
}

pub(crate) fn alpha_unchecked(i: usize, j: usize, k: usize) -> f64 {
    let (i, j, k) = (i as i64, j as i64, k as i64);
    let mut s = 0.0;
    if i + j - k == 1 {
        s += 0.5;
    }
    if k - (i - j).abs() == 1 {
        s += 0.5;
    }
    s
}

/// `⟨e_i e_j, e_k⟩` on `[-a, a]` for all indices `≥ 1`.
pub fn triple_product(i: usize, j: usize, k: usize, a: f64) -> Result<f64> {
    for m in [i, j, k] {
        check_mode(m, a)?;
    }
    let ones = [i, j, k].iter().filter(|&&m| m == 1).count();
    let val = match ones {
        0 => alpha_unchecked(i, j, k) / a.sqrt(),
        1 => {
            let (p, q) = match (i, j, k) {
                (1, p, q) | (p, 1, q) | (p, q, 1) => (p, q),
                _ => unreachable!(),
            };
            if p == q {
                1.0 / (2.0f64 * a).sqrt()
            } else {
                0.0
            }
        }
        2 => 0.0,
        _ => 1.0 / (2.0f64 * a).sqrt(),
    };
    Ok(val)
}

/// `⟨1, e_k⟩`, nonzero only for `k = 1`.
pub fn mean_product(k: usize, a: f64) -> Result<f64> {
    check_mode(k, a)?;
    Ok(if k == 1 { (2.0f64 * a).sqrt() } else { 0.0 })
}

/// Composite Simpson rule on uniformly spaced samples; an odd number of
/// intervals closes with Simpson's 3/8 rule on the last three.
pub fn simpson(samples: &[f64], dx: f64) -> f64 {
    let n = samples.len();
    match n {
        0 | 1 => return 0.0,
        2 => return 0.5 * dx * (samples[0] + samples[1]),
        _ => {}
    }
    let intervals = n - 1;
    let even_part = if intervals.is_multiple_of(2) { intervals } else { intervals - 3 };
    let mut s = 0.0;
    if even_part > 0 {
        let mut acc = samples[0] + samples[even_part];
        for (idx, y) in samples.iter().enumerate().take(even_part).skip(1) {
            acc += if idx % 2 == 1 { 4.0 * y } else { 2.0 * y };
        }
        s += acc * dx / 3.0;
    }
    if even_part < intervals {
        let o = even_part;
        s += 3.0 * dx / 8.0
            * (samples[o] + 3.0 * samples[o + 1] + 3.0 * samples[o + 2] + samples[o + 3]);
    }
    s
}

/// Uniform grid of `n` points covering `[-a, a]`.
pub fn grid(a: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2, "grid needs at least two points");
    let dx = 2.0 * a / ((n - 1) as f64);
    (0..n).map(|i| -a + dx * i as f64).collect()
}

/// Result of a quadrature projection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub value: f64,
    /// Set when the grid has fewer than eight intervals per wavelength of `e_k`.
    pub under_resolved: bool,
}

/// `⟨f, e_k⟩` by composite Simpson quadrature of samples on a uniform grid over `[-a, a]`.
pub fn project(samples: &[f64], k: usize, a: f64) -> Result<Projection> {
    check_mode(k, a)?;
    let n = samples.len();
    if n < 3 {
        return Err(Error::domain("projection needs at least three samples"));
    }
    let xs = grid(a, n);
    let dx = xs[1] - xs[0];
    let prod: Vec<f64> = samples
        .iter()
        .zip(&xs)
        .map(|(f, &x)| f * eigenfunction_unchecked(k, a, x))
        .collect();
    let intervals_per_wavelength = if k == 1 {
        f64::INFINITY
    } else {
        2.0 * ((n - 1) as f64) / ((k - 1) as f64)
    };
    Ok(Projection {
        value: simpson(&prod, dx),
        under_resolved: intervals_per_wavelength < MIN_POINTS_PER_WAVELENGTH,
    })
}

/// Pointwise value of `Σ_k c_k e_k(x)` with `coeffs[0] = c_1`.
pub fn synthesize(coeffs: &[f64], a: f64, x: f64) -> f64 {
    coeffs
        .iter()
        .enumerate()
        .map(|(idx, c)| c * eigenfunction_unchecked(idx + 1, a, x))
        .sum()
}

/// Partial sum `Σ_{k=2}^{kmax} 1/|b_k|`.
pub fn inverse_b_sum(kmax: usize) -> f64 {
    (2..=kmax).map(|k| 1.0 / b_coeff(k).abs()).sum()
}

/// `Σ_{k≥2} 1/|b_k| = 2^{3/2}/6`, from `Σ 1/n² = π²/6`.
pub fn inverse_b_sum_infinite() -> f64 {
    2.0 * SQRT_2 / 6.0
}

/// Tail bound `π^{-2} 2^{3/2} / (kmax - 1)` for `Σ_{k>kmax} 1/|b_k|`.
pub fn inverse_b_tail_bound(kmax: usize) -> f64 {
    2.0 * SQRT_2 / (PI * PI * ((kmax - 1) as f64))
}

/// Cached eigen-data on a fixed interval.
#[derive(Debug, Clone, PartialEq)]
pub struct Basis {
    pub a: f64,
    pub kmax: usize,
    eigenvalues: Vec<f64>,
}

impl Basis {
    pub fn new(a: f64, kmax: usize) -> Result<Self> {
        check_mode(kmax, a)?;
        let eigenvalues = (1..=kmax)
            .map(|k| eigenvalue(k, a))
            .collect::<Result<Vec<_>>>()?;
        Ok(Basis {
            a,
            kmax,
            eigenvalues,
        })
    }

    pub fn eigenvalue(&self, k: usize) -> Result<f64> {
        if k < 1 || k > self.kmax {
            return Err(Error::domain(format!("mode {k} outside 1..={}", self.kmax)));
        }
        Ok(self.eigenvalues[k - 1])
    }

    pub fn eigenfunction(&self, k: usize, x: f64) -> Result<f64> {
        eigenfunction(k, self.a, x)
    }

    /// Gram matrix `⟨e_j, e_k⟩` by Simpson quadrature on `n` points.
    pub fn gram_matrix(&self, n: usize) -> Vec<Vec<f64>> {
        let xs = grid(self.a, n);
        let dx = xs[1] - xs[0];
        let vals: Vec<Vec<f64>> = (1..=self.kmax)
            .map(|k| xs.iter().map(|&x| eigenfunction_unchecked(k, self.a, x)).collect())
            .collect();
        (0..self.kmax)
            .map(|j| {
                (0..self.kmax)
                    .map(|k| {
                        let prod: Vec<f64> =
                            vals[j].iter().zip(&vals[k]).map(|(p, q)| p * q).collect();
                        simpson(&prod, dx)
                    })
                    .collect()
            })
            .collect()
    }
}

/// Dense table of `α_{i,j}^k` for `2 ≤ i, j, k ≤ kmax`.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingTable {
    pub kmax: usize,
    alpha: Vec<f64>,
}

impl CouplingTable {
    pub fn new(kmax: usize) -> Result<Self> {
        if !(2..=KMAX_CAP).contains(&kmax) {
            return Err(Error::domain(format!(
                "coupling table size must lie in 2..={KMAX_CAP}, got {kmax}"
            )));
        }
        let m = kmax - 1;
        let mut alpha = vec![0.0; m * m * m];
        for i in 2..=kmax {
            for j in 2..=kmax {
                for k in 2..=kmax {
                    alpha[((i - 2) * m + (j - 2)) * m + (k - 2)] = alpha_unchecked(i, j, k);
                }
            }
        }
        Ok(CouplingTable { kmax, alpha })
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> Result<f64> {
        let r = 2..=self.kmax;
        if !(r.contains(&i) && r.contains(&j) && r.contains(&k)) {
            return Err(Error::domain(format!(
                "coupling indices ({i}, {j}, {k}) outside 2..={}",
                self.kmax
            )));
        }
        let m = self.kmax - 1;
        Ok(self.alpha[((i - 2) * m + (j - 2)) * m + (k - 2)])
    }
}

/// Nonzero couplings of a truncation, grouped by target mode.
///
/// `terms[k - 2]` lists `(i, j, α_{i,j}^k)` over ordered pairs with `2 ≤ i, j ≤ k0`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseCoupling {
    pub k0: usize,
    pub terms: Vec<Vec<(usize, usize, f64)>>,
}

impl SparseCoupling {
    pub fn new(k0: usize) -> Self {
        let mut terms = Vec::with_capacity(k0.saturating_sub(1));
        for k in 2..=k0 {
            let mut row = Vec::new();
            for i in 2..=k0 {
                let mut cands = [0i64; 3];
                cands[0] = (k + 1) as i64 - i as i64;
                cands[1] = i as i64 + (k as i64 - 1);
                cands[2] = i as i64 - (k as i64 - 1);
                let mut seen: Vec<usize> = Vec::with_capacity(3);
                for c in cands {
                    if c >= 2 && c <= k0 as i64 && !seen.contains(&(c as usize)) {
                        let j = c as usize;
                        seen.push(j);
                        let al = alpha_unchecked(i, j, k);
                        if al != 0.0 {
                            row.push((i, j, al));
                        }
                    }
                }
            }
            terms.push(row);
        }
        SparseCoupling { k0, terms }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigenvalue_examples() {
        assert_eq!(eigenvalue(1, 1.0).unwrap(), 0.0);
        assert!((eigenvalue(2, 1.0).unwrap() + (PI / 2.0).powi(2)).abs() < 1e-14);
        assert!((eigenvalue(3, 2.0).unwrap() + (PI / 2.0).powi(2)).abs() < 1e-14);
        assert!(eigenvalue(0, 1.0).is_err());
        assert!(eigenvalue(2, 0.0).is_err());
        assert!(eigenvalue(2, -1.0).is_err());
    }

    #[test]
    fn scaled_eigenvalue_examples() {
        assert_eq!(scaled_eigenvalue(1, 0.7).unwrap(), 0.0);
        assert!((b_coeff(2) + 3.48943).abs() < 1e-5);
        let lhs = scaled_eigenvalue(5, 2.0).unwrap();
        let rhs = 4f64.sqrt() * eigenvalue(5, 2.0).unwrap();
        assert!((lhs - rhs).abs() <= 1e-13 * rhs.abs());
    }

    #[test]
    fn eigenfunction_examples() {
        assert!((eigenfunction(1, 1.0, 0.3).unwrap() - 1.0 / SQRT_2).abs() < 1e-15);
        assert!((eigenfunction(2, 1.0, -1.0).unwrap() - 1.0).abs() < 1e-15);
        assert!(eigenfunction(2, 1.0, 1.5).is_err());
        let xs = grid(1.0, QUADRATURE_POINTS);
        let sq: Vec<f64> = xs.iter().map(|&x| eigenfunction(2, 1.0, x).unwrap().powi(2)).collect();
        assert!((simpson(&sq, xs[1] - xs[0]) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn alpha_examples() {
        assert_eq!(alpha(2, 2, 3).unwrap(), 0.5);
        assert_eq!(alpha(2, 3, 4).unwrap(), 0.5);
        assert_eq!(alpha(2, 2, 2).unwrap(), 0.0);
        assert!(alpha(1, 2, 3).is_err());
    }

    #[test]
    fn simpson_is_exact_for_cubics_both_parities() {
        for n in [5usize, 6, 7, 8] {
            let xs: Vec<f64> = (0..n).map(|i| i as f64 * 0.25).collect();
            let ys: Vec<f64> = xs.iter().map(|x| x * x * x - 2.0 * x + 1.0).collect();
            let b = xs[n - 1];
            let exact = b.powi(4) / 4.0 - b * b + b;
            assert!((simpson(&ys, 0.25) - exact).abs() < 1e-13, "n = {n}");
        }
    }

    #[test]
    fn projection_examples() {
        let a = 1.3;
        let xs = grid(a, QUADRATURE_POINTS);
        let e2: Vec<f64> = xs.iter().map(|&x| eigenfunction_unchecked(2, a, x)).collect();
        assert!((project(&e2, 2, a).unwrap().value - 1.0).abs() < 1e-10);
        assert!(project(&e2, 3, a).unwrap().value.abs() < 1e-10);
        let c = vec![0.7; xs.len()];
        let p = project(&c, 1, a).unwrap().value;
        assert!((p - 0.7 * (2.0f64 * a).sqrt()).abs() < 1e-12);
        assert!(project(&grid(a, 9), 40, a).unwrap().under_resolved);
    }

    #[test]
    fn synthesize_examples() {
        let a = 0.8;
        assert!((synthesize(&[(2.0f64 * a).sqrt()], a, 0.1) - 1.0).abs() < 1e-15);
        assert_eq!(synthesize(&[0.0, 0.0, 0.0], a, 0.1), 0.0);
    }

    #[test]
    fn sparse_coupling_matches_dense_rule() {
        let k0 = 9;
        let sc = SparseCoupling::new(k0);
        for k in 2..=k0 {
            let mut dense = 0.0;
            let mut sparse = 0.0;
            for i in 2..=k0 {
                for j in 2..=k0 {
                    let w = (i * 31 + j * 7) as f64;
                    dense += alpha_unchecked(i, j, k) * w;
                }
            }
            for &(i, j, al) in &sc.terms[k - 2] {
                sparse += al * (i * 31 + j * 7) as f64;
            }
            assert_eq!(dense, sparse, "k = {k}");
        }
    }

    #[test]
    fn triple_product_with_constant_mode() {
        let a = 0.6;
        let c = 1.0 / (2.0f64 * a).sqrt();
        assert!((triple_product(1, 3, 3, a).unwrap() - c).abs() < 1e-15);
        assert_eq!(triple_product(1, 2, 3, a).unwrap(), 0.0);
        assert_eq!(triple_product(1, 1, 3, a).unwrap(), 0.0);
        assert!((triple_product(1, 1, 1, a).unwrap() - c).abs() < 1e-15);
        assert!((triple_product(2, 2, 3, a).unwrap() - 0.5 / a.sqrt()).abs() < 1e-15);
    }
}
