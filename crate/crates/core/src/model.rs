//! Model geometry: the tangential quadratic form, run parameters, the smooth cutoff
//! profiles, the dyadic ladder in transverse energy, and the Airy eigenpairs of the
//! one-dimensional operator `-d^2/dx^2 + |theta|^2 + x q(theta)` on the half-line.

use crate::airy::{self, AiryZeroTable};
use crate::error::{Error, Result};
use crate::quad::Panels;
use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Positive definite form `q(theta) = sum q_jk theta_j theta_k` with `m0 = inf sqrt(q)` and
/// `M0 = sup sqrt(q)` over the unit sphere.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuadraticForm {
    pub dim: usize,
    pub coeffs: Vec<Vec<f64>>,
    pub m0: f64,
    #[serde(rename = "M0")]
    pub m0_sup: f64,
}

impl QuadraticForm {
    pub fn new(coeffs: Vec<Vec<f64>>) -> Result<Self> {
        let dim = coeffs.len();
        if dim == 0 || coeffs.iter().any(|r| r.len() != dim) {
            return Err(Error::Precondition("quadratic form must be a non-empty square matrix".into()));
        }
        for j in 0..dim {
            for k in 0..dim {
                let (a, b) = (coeffs[j][k], coeffs[k][j]);
                if !a.is_finite() || (a - b).abs() > 1e-14 * (1.0 + a.abs()) {
                    return Err(Error::Precondition(format!("q is not symmetric at ({j},{k})")));
                }
            }
        }
        let m = DMatrix::from_fn(dim, dim, |j, k| coeffs[j][k]);
        let eig = SymmetricEigen::new(m).eigenvalues;
        let lo = eig.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !(lo > 0.0) {
            return Err(Error::Precondition(format!("q is not positive definite (eigenvalue {lo})")));
        }
        Ok(QuadraticForm { dim, coeffs, m0: lo.sqrt(), m0_sup: hi.sqrt() })
    }

    /// `q(theta) = |theta|^2`.
    pub fn identity(dim: usize) -> Self {
        let coeffs = (0..dim).map(|j| (0..dim).map(|k| if j == k { 1.0 } else { 0.0 }).collect()).collect();
        QuadraticForm::new(coeffs).expect("identity is positive definite")
    }

    /// Two-dimensional model with `q(theta) = q11 theta^2`.
    pub fn planar(q11: f64) -> Result<Self> {
        QuadraticForm::new(vec![vec![q11]])
    }

    pub fn eval(&self, theta: &[f64]) -> Result<f64> {
        if theta.len() != self.dim {
            return Err(Error::Shape { expected: self.dim, got: theta.len() });
        }
        Ok(self.eval_unchecked(theta))
    }

    pub fn eval_unchecked(&self, theta: &[f64]) -> f64 {
        let mut s = 0.0;
        for (j, row) in self.coeffs.iter().enumerate() {
            for (k, c) in row.iter().enumerate() {
                s += c * theta[j] * theta[k];
            }
        }
        s
    }

    /// `grad q(theta) = 2 Q theta`.
    pub fn grad(&self, theta: &[f64]) -> Vec<f64> {
        self.coeffs.iter().map(|row| 2.0 * row.iter().zip(theta).map(|(c, t)| c * t).sum::<f64>()).collect()
    }

    /// Sampled `(inf, sup)` of `sqrt(q)` on the unit sphere; exact in one dimension.
    pub fn sampled_bounds(&self, samples: usize) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = 0.0f64;
        let mut visit = |th: &[f64]| {
            let v = self.eval_unchecked(th).sqrt();
            lo = lo.min(v);
            hi = hi.max(v);
        };
        match self.dim {
            1 => visit(&[1.0]),
            2 => {
                for i in 0..samples {
                    let a = PI * i as f64 / samples as f64;
                    visit(&[a.cos(), a.sin()]);
                }
            }
            _ => {
                // Fibonacci-style sweep over the first three coordinates, remaining ones zero,
                // plus the coordinate axes.
                let n = samples.max(8);
                let mut th = vec![0.0; self.dim];
                for i in 0..n {
                    let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
                    let r = (1.0 - z * z).sqrt();
                    let phi = PI * (3.0 - 5f64.sqrt()) * i as f64;
                    th.iter_mut().for_each(|v| *v = 0.0);
                    th[0] = r * phi.cos();
                    th[1] = r * phi.sin();
                    th[2] = z;
                    visit(&th);
                }
            }
        }
        (lo, hi)
    }
}

/// JSON geometry fragment `{"d": .., "q": [[..]], "eps0": ..}`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub d: usize,
    pub q: Vec<Vec<f64>>,
    pub eps0: f64,
}

impl GeometryConfig {
    pub fn build(&self) -> Result<QuadraticForm> {
        if self.d < 2 {
            return Err(Error::Precondition(format!("d must be >= 2, got {}", self.d)));
        }
        let form = QuadraticForm::new(self.q.clone())?;
        if form.dim != self.d - 1 {
            return Err(Error::Shape { expected: self.d - 1, got: form.dim });
        }
        if !(self.eps0 > 0.0 && self.eps0 < form.m0 / 2.0) {
            return Err(Error::Precondition(format!(
                "eps0 = {} must lie in (0, m0/2) = (0, {})",
                self.eps0,
                form.m0 / 2.0
            )));
        }
        Ok(form)
    }
}

/// Semiclassical run parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub h: f64,
    pub a: f64,
    pub eps0: f64,
    pub d: usize,
}

impl ModelParams {
    pub fn new(h: f64, a: f64, eps0: f64) -> Self {
        ModelParams { h, a, eps0, d: 2 }
    }

    pub fn validate(&self, form: &QuadraticForm) -> Result<()> {
        if !(self.h > 0.0 && self.h < 1.0) {
            return Err(Error::Precondition(format!("h = {} must lie in (0, 1)", self.h)));
        }
        if !(self.a >= 0.0 && self.a <= self.eps0) {
            return Err(Error::Precondition(format!("a = {} must lie in [0, eps0 = {}]", self.a, self.eps0)));
        }
        if !(self.eps0 > 0.0 && self.eps0 < form.m0 / 2.0) {
            return Err(Error::Precondition(format!(
                "eps0 = {} must lie in (0, m0/2 = {})",
                self.eps0,
                form.m0 / 2.0
            )));
        }
        if self.d != form.dim + 1 {
            return Err(Error::Shape { expected: form.dim + 1, got: self.d });
        }
        Ok(())
    }

    /// `sup(a, h^{2/3})`, the smallest meaningful transverse scale.
    pub fn gamma_floor(&self) -> f64 {
        self.a.max(self.h.powf(2.0 / 3.0))
    }
}

/// Smooth step: 0 for `t <= 0`, 1 for `t >= 1`.
pub fn plateau(t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    if t >= 1.0 {
        return 1.0;
    }
    let s = |x: f64| (-1.0 / x).exp();
    let (a, b) = (s(t), s(1.0 - t));
    a / (a + b)
}

/// Bump supported in `[1/2, 3/2]`, equal to one on `[3/4, 5/4]`.
pub fn psi(u: f64) -> f64 {
    plateau(4.0 * (u - 0.5)) * plateau(4.0 * (1.5 - u))
}

/// Cutoff on the full frequency `h sqrt(lambda)`: one on `[1/2, 2]`, supported in `[1/4, 9/4]`.
/// Since `|eta|^2 <= h^2 lambda <= |eta|^2 (1 + eps0)` with `eps0 < 1/2`, it is identically one
/// wherever `psi(|eta|)` and the transverse weight are both nonzero.
pub fn psi1(u: f64) -> f64 {
    plateau(4.0 * (u - 0.25)) * plateau(4.0 * (2.25 - u))
}

/// Even cutoff supported in `[-1, 1]`, equal to one on `[-1/2, 1/2]`.
pub fn phi(u: f64) -> f64 {
    plateau(2.0 * (1.0 - u.abs()))
}

/// `phi(u) - phi(2u)`, supported in `1/4 <= |u| <= 1`.
pub fn psi2(u: f64) -> f64 {
    phi(u) - phi(2.0 * u)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Cutoff {
    Psi,
    Psi1,
    Psi2,
    Phi,
}

/// The cutoff profiles. `psi1` is replaced by one when dropped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffFamily {
    pub drop_psi1: bool,
}

impl Default for CutoffFamily {
    fn default() -> Self {
        CutoffFamily { drop_psi1: false }
    }
}

impl CutoffFamily {
    pub fn eval(&self, which: Cutoff, u: f64, scale: f64) -> f64 {
        let v = u / scale;
        match which {
            Cutoff::Psi => psi(v),
            Cutoff::Psi1 => {
                if self.drop_psi1 {
                    1.0
                } else {
                    psi1(v)
                }
            }
            Cutoff::Psi2 => psi2(v),
            Cutoff::Phi => phi(v),
        }
    }
}

/// Dyadic split of `phi(./eps0)`: `psi2` blocks at `gamma_j = eps0 2^{-j}` down to a bottom
/// `phi` block at `gamma_bottom` in `[sup(a, h^{2/3}), 2 sup(a, h^{2/3}))`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DyadicLadder {
    pub eps0: f64,
    pub blocks: Vec<f64>,
    pub bottom: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Block {
    Ring(f64),
    Bottom(f64),
}

impl Block {
    pub fn gamma(&self) -> f64 {
        match *self {
            Block::Ring(g) | Block::Bottom(g) => g,
        }
    }

    /// Weight of transverse energy `u` in this block.
    pub fn weight(&self, u: f64) -> f64 {
        match *self {
            Block::Ring(g) => psi2(u / g),
            Block::Bottom(g) => phi(u / g),
        }
    }

    /// Range of `u` where the weight can be non-zero.
    pub fn support(&self) -> (f64, f64) {
        match *self {
            Block::Ring(g) => (g / 4.0, g),
            Block::Bottom(g) => (0.0, g),
        }
    }
}

impl DyadicLadder {
    pub fn new(params: &ModelParams) -> Self {
        let floor = params.gamma_floor();
        let mut blocks = Vec::new();
        let mut g = params.eps0;
        while g >= 2.0 * floor {
            blocks.push(g);
            g *= 0.5;
        }
        DyadicLadder { eps0: params.eps0, blocks, bottom: g }
    }

    pub fn all(&self) -> Vec<Block> {
        let mut v: Vec<Block> = self.blocks.iter().map(|&g| Block::Ring(g)).collect();
        v.push(Block::Bottom(self.bottom));
        v
    }

    /// Sum of all block weights, which telescopes to `phi(u/eps0)`.
    pub fn total_weight(&self, u: f64) -> f64 {
        self.all().iter().map(|b| b.weight(u)).sum()
    }
}

/// `lambda_k(theta) = |theta|^2 + w_k q(theta)^{2/3}`.
pub fn eigenvalue(form: &QuadraticForm, table: &AiryZeroTable, k: usize, theta: &[f64]) -> Result<f64> {
    let q = form.eval(theta)?;
    let n2: f64 = theta.iter().map(|t| t * t).sum();
    Ok(n2 + table.omega(k) * q.powf(2.0 / 3.0))
}

/// Normalization `sqrt(2 pi) q^{1/6} / sqrt(L'(w_k))` of the k-th eigenfunction.
pub fn eigen_norm(q: f64, lprime: f64) -> f64 {
    (2.0 * PI).sqrt() * q.powf(1.0 / 6.0) / lprime.sqrt()
}

/// `e_k(x, theta)`, normalized in `L^2(0, inf)`.
pub fn eigenfunction(form: &QuadraticForm, table: &AiryZeroTable, k: usize, x: f64, theta: &[f64]) -> Result<f64> {
    if x < 0.0 {
        return Err(Error::Domain(format!("eigenfunctions live on x >= 0, got {x}")));
    }
    let q = form.eval(theta)?;
    Ok(eigenfunction_q(table, k, x, q))
}

/// `e_k` given `q(theta)` directly.
pub fn eigenfunction_q(table: &AiryZeroTable, k: usize, x: f64, q: f64) -> f64 {
    let e = &table.entries[k - 1];
    eigen_norm(q, e.lprime) * airy::ai(x * q.cbrt() - e.omega)
}

/// Turning point `w_k / q^{1/3}` of the k-th mode.
pub fn turning_point(table: &AiryZeroTable, k: usize, q: f64) -> f64 {
    table.omega(k) / q.cbrt()
}

/// Quadrature nodes on `[0, top]` suited to modes up to the given turning point.
pub fn x_panels(top: f64) -> Panels {
    let panels = (top / 0.5).ceil().max(4.0) as usize;
    Panels::new(0.0, top, panels, 16)
}

/// `L^2` distance between `f` and its projection on the first `k_max` modes.
pub fn delta_expansion_residual<F: Fn(f64) -> f64>(
    form: &QuadraticForm,
    table: &AiryZeroTable,
    theta: &[f64],
    f: F,
    x_sup: f64,
    k_max: usize,
) -> Result<f64> {
    let q = form.eval(theta)?;
    let top = x_sup.max(turning_point(table, k_max, q)) + 15.0 / q.cbrt();
    let p = x_panels(top);
    let fv: Vec<f64> = p.nodes.iter().map(|&x| f(x)).collect();
    let mut proj = vec![0.0; p.len()];
    for k in 1..=k_max {
        let ek: Vec<f64> = p.nodes.iter().map(|&x| eigenfunction_q(table, k, x, q)).collect();
        let c: f64 = ek.iter().zip(&fv).zip(&p.weights).map(|((e, f), w)| e * f * w).sum();
        proj.iter_mut().zip(&ek).for_each(|(s, e)| *s += c * e);
    }
    let r2: f64 = fv.iter().zip(&proj).zip(&p.weights).map(|((f, s), w)| (f - s) * (f - s) * w).sum();
    Ok(r2.max(0.0).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn form_evaluation() {
        let id = QuadraticForm::identity(1);
        assert_eq!(id.eval(&[1.0]).unwrap(), 1.0);
        let q2 = QuadraticForm::planar(2.0).unwrap();
        assert_eq!(q2.eval(&[3.0]).unwrap(), 18.0);
        let th = [0.7];
        assert!((q2.eval(&[2.5 * th[0]]).unwrap() - 6.25 * q2.eval(&th).unwrap()).abs() < 1e-14);
        assert!(matches!(q2.eval(&[1.0, 2.0]), Err(Error::Shape { .. })));
        assert!((q2.m0 - 2f64.sqrt()).abs() < 1e-15 && q2.m0 == q2.m0_sup);
    }

    #[test]
    fn rejects_indefinite_forms() {
        assert!(QuadraticForm::new(vec![vec![1.0, 2.0], vec![2.0, 1.0]]).is_err());
        assert!(QuadraticForm::new(vec![vec![1.0, 0.1], vec![0.0, 1.0]]).is_err());
    }

    #[test]
    fn bounds_match_sampling() {
        let f = QuadraticForm::new(vec![vec![2.0, 0.3], vec![0.3, 1.0]]).unwrap();
        let (lo, hi) = f.sampled_bounds(20000);
        assert!((lo - f.m0).abs() < 1e-6 && (hi - f.m0_sup).abs() < 1e-6);
    }

    #[test]
    fn cutoff_shapes() {
        let c = CutoffFamily::default();
        assert_eq!(c.eval(Cutoff::Psi, 1.0, 1.0), 1.0);
        assert_eq!(c.eval(Cutoff::Psi, 0.4, 1.0), 0.0);
        assert_eq!(c.eval(Cutoff::Phi, 0.5, 1.0), 1.0);
        assert_eq!(c.eval(Cutoff::Phi, 1.0, 1.0), 0.0);
        assert_eq!(psi2(0.2), 0.0);
        assert_eq!(psi2(1.0), 0.0);
        assert!(psi2(0.6) > 0.0);
        assert_eq!(CutoffFamily { drop_psi1: true }.eval(Cutoff::Psi1, 0.1, 1.0), 1.0);
    }

    #[test]
    fn ladder_telescopes() {
        let p = ModelParams::new(0.05, 0.05, 0.3);
        let lad = DyadicLadder::new(&p);
        assert!(lad.bottom >= p.gamma_floor() && lad.bottom < 2.0 * p.gamma_floor());
        for i in 0..2000 {
            let u = 0.4 * i as f64 / 1999.0;
            assert!((lad.total_weight(u) - phi(u / p.eps0)).abs() < 1e-12, "u={u}");
        }
        assert!((lad.total_weight(0.3 * p.eps0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn eigenpairs() {
        let t = AiryZeroTable::shared();
        let id = QuadraticForm::identity(1);
        let l1 = eigenvalue(&id, t, 1, &[1.0]).unwrap();
        assert!((l1 - 1.0 - t.omega(1)).abs() < 1e-15);
        assert!(eigenvalue(&id, t, 3, &[1.0]).unwrap() > l1);
        assert!(eigenfunction(&id, t, 4, 0.0, &[1.0]).unwrap().abs() < 1e-12);
        assert!(eigenfunction(&id, t, 1, -0.1, &[1.0]).is_err());
    }
}
