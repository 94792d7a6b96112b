//! Riemann theta functions with box truncation and an explicit Gaussian tail bound.

use crate::error::{Error, Result};
use crate::C64;
use nalgebra::{DMatrix, SymmetricEigen};
use std::f64::consts::PI;

pub const DEFAULT_TOL: f64 = 1e-12;

/// Symmetric purely imaginary `g x g` matrix with positive definite imaginary part.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodMatrix {
    b: DMatrix<C64>,
    lambda_min: f64,
}

impl PeriodMatrix {
    pub fn new(b: DMatrix<C64>) -> Result<Self> {
        let g = b.nrows();
        if b.ncols() != g {
            return Err(Error::Invalid("period matrix must be square".into()));
        }
        for i in 0..g {
            for j in 0..g {
                let v = b[(i, j)];
                if !(v.re.is_finite() && v.im.is_finite()) {
                    return Err(Error::Invalid("period matrix has non-finite entries".into()));
                }
                if (v - b[(j, i)]).norm() >= 1e-9 * (1.0 + v.norm()) {
                    return Err(Error::Invalid(format!("period matrix not symmetric at ({i}, {j})")));
                }
                if v.re.abs() >= 1e-9 {
                    return Err(Error::Invalid(format!("period matrix entry ({i}, {j}) not purely imaginary")));
                }
            }
        }
        let lambda_min = if g == 0 {
            f64::INFINITY
        } else {
            let im = DMatrix::from_fn(g, g, |i, j| 0.5 * (b[(i, j)].im + b[(j, i)].im));
            SymmetricEigen::new(im).eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
        };
        if lambda_min <= 0.0 {
            return Err(Error::Invalid("imaginary part of period matrix is not positive definite".into()));
        }
        Ok(PeriodMatrix { b, lambda_min })
    }

    /// `diag(i t_1, ..., i t_g)` style constructor from the imaginary part only.
    pub fn from_imaginary(im: DMatrix<f64>) -> Result<Self> {
        Self::new(im.map(|v| C64::new(0.0, v)))
    }

    pub fn genus(&self) -> usize {
        self.b.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.b
    }

    pub fn lambda_min(&self) -> f64 {
        self.lambda_min
    }

    fn quad_form(&self, m: &[i64]) -> C64 {
        let g = self.genus();
        let mut s = C64::new(0.0, 0.0);
        for i in 0..g {
            for j in 0..g {
                s += self.b[(i, j)] * (m[i] * m[j]) as f64;
            }
        }
        s
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<C64> {
        let g = self.genus();
        (0..g).map(|i| (0..g).map(|j| self.b[(i, j)] * v[j]).sum()).collect()
    }
}

/// Half-integer characteristic `[delta1; delta2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Characteristic {
    pub delta1: Vec<f64>,
    pub delta2: Vec<f64>,
}

impl Characteristic {
    pub fn new(delta1: Vec<f64>, delta2: Vec<f64>) -> Result<Self> {
        if delta1.len() != delta2.len() {
            return Err(Error::Invalid("characteristic halves differ in length".into()));
        }
        if delta1.iter().chain(&delta2).any(|&d| d != 0.0 && d != 0.5) {
            return Err(Error::Invalid("characteristic entries must be 0 or 1/2".into()));
        }
        Ok(Characteristic { delta1, delta2 })
    }

    /// `delta1 = delta2 = e_k / 2`, an odd characteristic.
    pub fn odd_unit(g: usize, k: usize) -> Result<Self> {
        if k >= g {
            return Err(Error::Index { index: k, genus: g });
        }
        let mut d = vec![0.0; g];
        d[k] = 0.5;
        Ok(Characteristic { delta1: d.clone(), delta2: d })
    }

    /// `4 <delta1, delta2> mod 2`.
    pub fn parity(&self) -> u8 {
        let s: f64 = self.delta1.iter().zip(&self.delta2).map(|(a, b)| 4.0 * a * b).sum();
        (s.round() as i64).rem_euclid(2) as u8
    }

    pub fn is_odd(&self) -> bool {
        self.parity() == 1
    }
}

fn tail_bound(g: usize, lambda: f64, b: f64, r: usize) -> f64 {
    let mut total = 0.0;
    let mut k = r + 1;
    loop {
        let kf = k as f64;
        let t = 2.0 * g as f64 * (2.0 * kf + 1.0).powi(g as i32 - 1) * (-PI * lambda * kf * kf + 2.0 * PI * b * kf).exp();
        total += t;
        if t < 1e-30 * total.max(1e-300) || t == 0.0 || k > r + 10_000 {
            break;
        }
        k += 1;
    }
    total
}

/// Smallest box radius whose tail bound is below `tol` for all `|Im z|_2 <= im_z_bound`.
pub fn truncation_radius(b: &PeriodMatrix, im_z_bound: f64, tol: f64) -> Result<usize> {
    if !(tol > 0.0) {
        return Err(Error::Invalid("tolerance must be positive".into()));
    }
    let g = b.genus();
    if g == 0 {
        return Ok(0);
    }
    let lambda = b.lambda_min();
    let mut r = (im_z_bound.max(0.0) / lambda).ceil() as usize;
    while tail_bound(g, lambda, im_z_bound.max(0.0), r) >= tol {
        r += 1;
    }
    Ok(r)
}

fn check_len(z: &[C64], b: &PeriodMatrix) -> Result<()> {
    if z.len() != b.genus() {
        return Err(Error::Invalid(format!("argument has length {} but genus is {}", z.len(), b.genus())));
    }
    if z.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
        return Err(Error::Numeric("non-finite theta argument".into()));
    }
    Ok(())
}

/// Sum over the box `|m|_inf <= r`, pairing `m` with `-m`.
pub fn theta_at_radius(z: &[C64], b: &PeriodMatrix, r: usize) -> C64 {
    let g = b.genus();
    if g == 0 {
        return C64::new(1.0, 0.0);
    }
    let r = r as i64;
    let mut m = vec![-r; g];
    let mut total = C64::new(1.0, 0.0);
    loop {
        // keep m whose first nonzero coordinate is positive
        if let Some(&first) = m.iter().find(|&&v| v != 0) {
            if first > 0 {
                let q = (C64::i() * PI * b.quad_form(&m)).exp();
                let zm: C64 = z.iter().zip(&m).map(|(zi, &mi)| *zi * mi as f64).sum();
                total += q * (zm * (2.0 * PI)).cos() * 2.0;
            }
        }
        let mut i = 0;
        while i < g {
            m[i] += 1;
            if m[i] <= r {
                break;
            }
            m[i] = -r;
            i += 1;
        }
        if i == g {
            break;
        }
    }
    total
}

/// Riemann theta function of `z` with period matrix `b`, truncated so the tail is below `tol`.
pub fn theta(z: &[C64], b: &PeriodMatrix, tol: f64) -> Result<C64> {
    check_len(z, b)?;
    let bound = z.iter().map(|v| v.im * v.im).sum::<f64>().sqrt();
    let r = truncation_radius(b, bound, tol)?;
    Ok(theta_at_radius(z, b, r))
}

pub fn theta_real(x: &[f64], b: &PeriodMatrix, tol: f64) -> Result<f64> {
    let z: Vec<C64> = x.iter().map(|&v| C64::new(v, 0.0)).collect();
    Ok(theta(&z, b, tol)?.re)
}

/// Theta function with characteristic, through the shifted-argument prefactor formula.
pub fn theta_char(delta: &Characteristic, z: &[C64], b: &PeriodMatrix, tol: f64) -> Result<C64> {
    check_len(z, b)?;
    let g = b.genus();
    if delta.delta1.len() != g {
        return Err(Error::Invalid("characteristic length differs from genus".into()));
    }
    let bd1 = b.mul_vec(&delta.delta1);
    let quad: C64 = bd1.iter().zip(&delta.delta1).map(|(x, d)| *x * *d).sum();
    let lin: C64 = (0..g).map(|i| (z[i] + delta.delta2[i]) * delta.delta1[i]).sum();
    let shifted: Vec<C64> = (0..g).map(|i| z[i] + delta.delta2[i] + bd1[i]).collect();
    let pre = (C64::i() * PI * (quad + lin * 2.0)).exp();
    Ok(pre * theta(&shifted, b, tol)?)
}
