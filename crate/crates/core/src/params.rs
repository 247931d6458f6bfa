//! Distribution parameters, the quadratic-form representation, moments and
//! the characteristic function.

use crate::error::{Gx2Error, Result};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Which tail (or which side of a point) a probability refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Lower,
    Upper,
}

impl Side {
    pub fn opposite(self) -> Side {
        match self {
            Side::Lower => Side::Upper,
            Side::Upper => Side::Lower,
        }
    }
}

/// Quantity being evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Cdf,
    Pdf,
}

/// Parameters of `Σ w_i χ'²(k_i, λ_i) + s·z + m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gx2Params {
    pub w: Vec<f64>,
    pub k: Vec<u32>,
    pub lambda: Vec<f64>,
    pub s: f64,
    pub m: f64,
}

impl Gx2Params {
    pub fn new(w: Vec<f64>, k: Vec<u32>, lambda: Vec<f64>, s: f64, m: f64) -> Result<Self> {
        let p = Gx2Params { w, k, lambda, s, m };
        p.validate()?;
        Ok(p)
    }

    /// Pure normal `s·z + m`.
    pub fn normal(s: f64, m: f64) -> Result<Self> {
        Self::new(vec![], vec![], vec![], s, m)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.w.len();
        if self.k.len() != n || self.lambda.len() != n {
            return Err(Gx2Error::InvalidParams(format!(
                "w, k and lambda must have equal lengths (got {}, {}, {})",
                n,
                self.k.len(),
                self.lambda.len()
            )));
        }
        if self.k.iter().any(|&k| k == 0) {
            return Err(Gx2Error::InvalidParams(
                "degrees of freedom must be >= 1".into(),
            ));
        }
        if self.lambda.iter().any(|&l| !(l >= 0.0) || !l.is_finite()) {
            return Err(Gx2Error::InvalidParams(
                "non-centralities must be finite and >= 0".into(),
            ));
        }
        if self.w.iter().any(|w| !w.is_finite()) || !self.s.is_finite() || !self.m.is_finite() {
            return Err(Gx2Error::InvalidParams("parameters must be finite".into()));
        }
        if self.w.iter().all(|&w| w == 0.0) && self.s == 0.0 {
            return Err(Gx2Error::InvalidParams("distribution is a constant".into()));
        }
        Ok(())
    }

    pub fn n_terms(&self) -> usize {
        self.w.len()
    }

    /// Total chi-square degrees of freedom Σk.
    pub fn dof(&self) -> u32 {
        self.k.iter().sum()
    }

    /// Dimension of the underlying standard normal.
    pub fn dim(&self) -> usize {
        self.dof() as usize + usize::from(self.s != 0.0)
    }

    pub fn is_ellipse(&self) -> bool {
        self.s == 0.0
            && !self.w.is_empty()
            && (self.w.iter().all(|&w| w > 0.0) || self.w.iter().all(|&w| w < 0.0))
    }

    /// The side on which the support ends at `m`, if any.
    pub fn finite_tail_side(&self) -> Option<Side> {
        if !self.is_ellipse() {
            None
        } else if self.w[0] > 0.0 {
            Some(Side::Lower)
        } else {
            Some(Side::Upper)
        }
    }

    /// Distribution of `-X`.
    pub fn flipped(&self) -> Self {
        Gx2Params {
            w: self.w.iter().map(|w| -w).collect(),
            k: self.k.clone(),
            lambda: self.lambda.clone(),
            s: -self.s,
            m: -self.m,
        }
    }

    /// Copy with all-positive weights, for elliptical parameters given either sign.
    pub(crate) fn positive_orientation(&self) -> (Self, bool) {
        if self.w.iter().all(|&w| w < 0.0) && !self.w.is_empty() {
            (self.flipped(), true)
        } else {
            (self.clone(), false)
        }
    }

    /// Merge blocks sharing the same weight (k and λ summed).
    pub fn merged(&self) -> Self {
        let mut w: Vec<f64> = Vec::new();
        let mut k: Vec<u32> = Vec::new();
        let mut l: Vec<f64> = Vec::new();
        for i in 0..self.w.len() {
            if let Some(j) = w.iter().position(|&x| x == self.w[i]) {
                k[j] += self.k[i];
                l[j] += self.lambda[i];
            } else {
                w.push(self.w[i]);
                k.push(self.k[i]);
                l.push(self.lambda[i]);
            }
        }
        Gx2Params {
            w,
            k,
            lambda: l,
            s: self.s,
            m: self.m,
        }
    }
}

/// Multivariate normal N(μ, Σ) with cached symmetric square root of Σ.
#[derive(Debug, Clone)]
pub struct NormalSpec {
    pub mu: DVector<f64>,
    pub sigma: DMatrix<f64>,
    pub sqrt_sigma: DMatrix<f64>,
}

impl NormalSpec {
    pub fn new(mu: DVector<f64>, sigma: DMatrix<f64>) -> Result<Self> {
        let d = mu.len();
        if sigma.nrows() != d || sigma.ncols() != d {
            return Err(Gx2Error::InvalidArgument(
                "covariance shape does not match mean".into(),
            ));
        }
        check_symmetric(&sigma, "covariance")?;
        let eig = SymmetricEigen::new(0.5 * (&sigma + sigma.transpose()));
        if eig.eigenvalues.iter().any(|&e| !(e > 0.0)) {
            return Err(Gx2Error::InvalidArgument(
                "covariance is not positive definite".into(),
            ));
        }
        let root = DVector::from_iterator(d, eig.eigenvalues.iter().map(|e| e.sqrt()));
        let v = &eig.eigenvectors;
        let sqrt_sigma = v * DMatrix::from_diagonal(&root) * v.transpose();
        Ok(NormalSpec {
            mu,
            sigma,
            sqrt_sigma,
        })
    }

    pub fn standard(dim: usize) -> Self {
        NormalSpec {
            mu: DVector::zeros(dim),
            sigma: DMatrix::identity(dim, dim),
            sqrt_sigma: DMatrix::identity(dim, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }
}

fn check_symmetric(a: &DMatrix<f64>, what: &str) -> Result<()> {
    let scale = a.amax().max(f64::MIN_POSITIVE);
    if (a - a.transpose()).amax() > 1e-12 * scale {
        return Err(Gx2Error::InvalidArgument(format!(
            "{what} matrix is not symmetric"
        )));
    }
    Ok(())
}

/// Coefficients of `x'Q₂x + q₁'x + q₀`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadForm {
    pub q2: DMatrix<f64>,
    pub q1: DVector<f64>,
    pub q0: f64,
}

impl QuadForm {
    pub fn new(q2: DMatrix<f64>, q1: DVector<f64>, q0: f64) -> Result<Self> {
        if q2.nrows() != q2.ncols() || q2.nrows() != q1.len() {
            return Err(Gx2Error::InvalidArgument(
                "quadratic coefficient dimensions disagree".into(),
            ));
        }
        check_symmetric(&q2, "quadratic")?;
        Ok(QuadForm { q2, q1, q0 })
    }

    pub fn dim(&self) -> usize {
        self.q1.len()
    }

    pub fn eval(&self, x: &DVector<f64>) -> f64 {
        (x.transpose() * &self.q2 * x)[0] + self.q1.dot(x) + self.q0
    }

    /// The same function expressed over the standard normal `z`, with `x = Sz + μ`.
    pub fn standardized(&self, normal: &NormalSpec) -> Result<QuadForm> {
        if normal.dim() != self.dim() {
            return Err(Gx2Error::InvalidArgument(
                "normal and quadratic dimensions differ".into(),
            ));
        }
        let s = &normal.sqrt_sigma;
        let mu = &normal.mu;
        let q2 = s * &self.q2 * s;
        let q2 = 0.5 * (&q2 + q2.transpose());
        let q1 = s * (2.0 * &self.q2 * mu + &self.q1);
        let q0 = (mu.transpose() * &self.q2 * mu)[0] + self.q1.dot(mu) + self.q0;
        Ok(QuadForm { q2, q1, q0 })
    }
}

/// Canonical quadratic of a standard normal whose value has the given distribution.
pub fn gx2_to_quad(p: &Gx2Params) -> QuadForm {
    let d = p.dim();
    let mut diag = Vec::with_capacity(d);
    let mut q1 = Vec::with_capacity(d);
    for i in 0..p.w.len() {
        for j in 0..p.k[i] {
            diag.push(p.w[i]);
            q1.push(if j == 0 {
                -2.0 * p.w[i] * p.lambda[i].sqrt()
            } else {
                0.0
            });
        }
    }
    if p.s != 0.0 {
        diag.push(0.0);
        q1.push(p.s);
    }
    let q0 = p.w.iter().zip(&p.lambda).map(|(w, l)| w * l).sum::<f64>() + p.m;
    QuadForm {
        q2: DMatrix::from_diagonal(&DVector::from_vec(diag)),
        q1: DVector::from_vec(q1),
        q0,
    }
}

/// Distribution of `q(x)` for `x ~ normal`.
pub fn quad_to_gx2(quad: &QuadForm, normal: &NormalSpec) -> Result<Gx2Params> {
    let std = quad.standardized(normal)?;
    let eig = SymmetricEigen::new(std.q2.clone());
    let d = std.dim();
    let max_abs = eig.eigenvalues.amax();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

    let proj: Vec<f64> = (0..d)
        .map(|j| eig.eigenvectors.column(j).dot(&std.q1))
        .collect();
    let is_zero = |e: f64| e.abs() <= 1e-12 * max_abs || max_abs == 0.0;

    let (mut w, mut k, mut lambda) = (Vec::new(), Vec::new(), Vec::new());
    let mut s2 = 0.0;
    let mut m = std.q0;
    let mut i = 0;
    while i < d {
        let e0 = eig.eigenvalues[order[i]];
        let mut j = i + 1;
        while j < d && (eig.eigenvalues[order[j]] - e0).abs() <= 1e-8 * max_abs {
            j += 1;
        }
        let block = &order[i..j];
        if is_zero(e0) {
            s2 += block.iter().map(|&c| proj[c] * proj[c]).sum::<f64>();
        } else {
            let wi = block.iter().map(|&c| eig.eigenvalues[c]).sum::<f64>() / block.len() as f64;
            let b2: f64 = block.iter().map(|&c| proj[c] * proj[c]).sum();
            w.push(wi);
            k.push(block.len() as u32);
            lambda.push(b2 / (4.0 * wi * wi));
            m -= b2 / (4.0 * wi);
        }
        i = j;
    }
    Gx2Params::new(w, k, lambda, s2.sqrt(), m)
}

/// Mean, variance and third central moment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub m1: f64,
    pub m2: f64,
    pub m3: f64,
}

pub fn moments(p: &Gx2Params) -> Moments {
    let mut m1 = p.m;
    let mut m2 = p.s * p.s;
    let mut m3 = 0.0;
    for i in 0..p.w.len() {
        let (w, k, l) = (p.w[i], p.k[i] as f64, p.lambda[i]);
        m1 += w * (k + l);
        m2 += 2.0 * w * w * (k + 2.0 * l);
        m3 += 8.0 * w * w * w * (k + 3.0 * l);
    }
    Moments { m1, m2, m3 }
}

/// `ln φ(t)` with the principal branch for each factor.
pub fn ln_charfun(p: &Gx2Params, t: f64) -> Complex64 {
    let mut acc = Complex64::new(-0.5 * p.s * p.s * t * t, t * p.m);
    for i in 0..p.w.len() {
        let wt = p.w[i] * t;
        let z = Complex64::new(1.0, -2.0 * wt);
        acc += Complex64::new(0.0, wt * p.lambda[i]) / z - 0.5 * p.k[i] as f64 * z.ln();
    }
    acc
}

/// Characteristic function `E[e^{itX}]`.
pub fn charfun(p: &Gx2Params, t: f64) -> Complex64 {
    ln_charfun(p, t).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn par(w: &[f64], k: &[u32], l: &[f64], s: f64, m: f64) -> Gx2Params {
        Gx2Params::new(w.to_vec(), k.to_vec(), l.to_vec(), s, m).unwrap()
    }

    #[test]
    fn canonical_form_examples() {
        let q = gx2_to_quad(&par(&[1.0, -1.0], &[1, 1], &[2.0, 4.0], 0.0, 0.0));
        assert_eq!(
            q.q2,
            DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0]))
        );
        assert!((q.q1[0] + 2.0 * 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(q.q1[1], 4.0);
        assert_eq!(q.q0, -2.0);

        let q = gx2_to_quad(&par(&[2.0], &[2], &[4.0], 3.0, 5.0));
        assert_eq!(q.dim(), 3);
        assert_eq!(q.q1.as_slice(), &[-8.0, 0.0, 3.0]);
        assert_eq!(q.q0, 13.0);
        assert_eq!(q.q2[(2, 2)], 0.0);
    }

    #[test]
    fn inverse_map_examples() {
        let quad = QuadForm::new(
            DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0])),
            DVector::from_vec(vec![-2.0 * 2f64.sqrt(), 4.0]),
            -2.0,
        )
        .unwrap();
        let p = quad_to_gx2(&quad, &NormalSpec::standard(2)).unwrap();
        // eigenvalues come out ascending
        assert_eq!(p.k, vec![1, 1]);
        assert!((p.w[0] + 1.0).abs() < 1e-12 && (p.w[1] - 1.0).abs() < 1e-12);
        assert!((p.lambda[0] - 4.0).abs() < 1e-12 && (p.lambda[1] - 2.0).abs() < 1e-12);
        assert!(p.s.abs() < 1e-12 && p.m.abs() < 1e-12);

        let quad =
            QuadForm::new(DMatrix::zeros(2, 2), DVector::from_vec(vec![1.0, 0.0]), 5.0).unwrap();
        let p = quad_to_gx2(&quad, &NormalSpec::standard(2)).unwrap();
        assert!(p.w.is_empty());
        assert!((p.s - 1.0).abs() < 1e-15 && p.m == 5.0);
    }

    #[test]
    fn non_symmetric_rejected() {
        let q2 = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert!(QuadForm::new(q2, DVector::zeros(2), 0.0).is_err());
    }

    #[test]
    fn moment_examples() {
        let mo = moments(&par(&[2.0], &[3], &[4.0], 1.0, 5.0));
        assert_eq!((mo.m1, mo.m2, mo.m3), (19.0, 89.0, 960.0));
        let mo = moments(&par(&[1.0], &[5], &[0.0], 0.0, 0.0));
        assert_eq!((mo.m1, mo.m2, mo.m3), (5.0, 10.0, 40.0));
    }

    #[test]
    fn charfun_examples() {
        let p = par(&[1.0], &[1], &[0.0], 0.0, 0.0);
        assert_eq!(charfun(&p, 0.0), Complex64::new(1.0, 0.0));
        // (1 - 2i)^{-1/2}: modulus 5^{-1/4}, argument atan(2)/2
        let v = charfun(&p, 1.0);
        let r = 5f64.powf(-0.25);
        let th = 0.5 * 2f64.atan();
        assert!((v - Complex64::from_polar(r, th)).norm() < 1e-15);
        let g = Gx2Params::normal(1.0, 0.0).unwrap();
        assert!((charfun(&g, 1.3).re - (-0.5f64 * 1.69).exp()).abs() < 1e-15);
    }

    #[test]
    fn constant_rejected() {
        assert!(Gx2Params::normal(0.0, 1.0).is_err());
        assert!(Gx2Params::new(vec![1.0], vec![0], vec![0.0], 0.0, 0.0).is_err());
        assert!(Gx2Params::new(vec![1.0], vec![1], vec![-1.0], 0.0, 0.0).is_err());
    }
}
