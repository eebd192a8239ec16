//! Green function as a sum over boundary reflections.
//!
//! Poisson summation over the Airy zeros turns the eigenmode sum into
//! `G = sum_N G_N`, where each packet carries `e^{-i N L(w)}`:
//!
//! `G_N = (2 pi h)^{-1} int d eta e^{i(y eta + t eta^2)/h} psi Q int d w e^{-i N L(w)} e^{i t w q^{2/3} h^{-1/3}} psi1 W chi Ai(xQ - w) Ai(aQ - w)`
//!
//! with `Q = q^{1/3}/h^{2/3}`. `chi` switches on between `w = 1/2` and `3/2`, below the first
//! zero, so it leaves the mode sum untouched. Writing both Airy factors as cubic oscillatory
//! integrals in `(sigma, s)` and `w = Q gamma alpha` gives the four-variable phase
//! [`phi_n`]; [`Reflection::v_n_reduced`] applies stationary phase in `(alpha, eta)` to it.
//! The brute evaluator keeps the Airy factors in closed form, which is the same integral
//! over the full `(sigma, s)` plane, and integrates `(eta, w)` directly.
//!
//! Packets are reported as `V_N = G_N h^d (t/h)^{(d-1)/2}` and everything here is `d = 2`.

use crate::airy::{self, AiryZeroTable, PhaseLConfig};
use crate::error::{Error, Result};
use crate::green_spectral::{FieldMeta, GreenField, Weighting};
use crate::model::{plateau, Cutoff, CutoffFamily, ModelParams, QuadraticForm};
use crate::quad::Panels;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::Write;

/// Everything the packet phase depends on, for `d = 2` with `q(eta) = qc eta^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhaseParams {
    pub n: i64,
    pub gamma: f64,
    pub a: f64,
    pub h: f64,
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub qc: f64,
}

impl PhaseParams {
    fn sqrt_q(&self, eta: f64) -> f64 {
        self.qc.sqrt() * eta.abs()
    }

    /// The cubic part `sigma^3/3 + sigma(x/g - alpha) + s^3/3 + s(a/g - alpha) - (4/3) N alpha^{3/2}`.
    fn packet(&self, alpha: f64, sigma: f64, s: f64) -> f64 {
        let g = self.gamma;
        sigma.powi(3) / 3.0 + sigma * (self.x / g - alpha) + s.powi(3) / 3.0 + s * (self.a / g - alpha)
            - 4.0 / 3.0 * self.n as f64 * alpha.powf(1.5)
    }

    fn lambda(&self) -> f64 {
        self.gamma.powf(1.5) / self.h
    }
}

/// Packet phase `y eta + t eta^2 (1 + gamma alpha q(eta/|eta|)) + gamma^{3/2} q^{1/2}(eta) P`.
pub fn phi_n(p: &PhaseParams, eta: f64, alpha: f64, sigma: f64, s: f64) -> f64 {
    let g = p.gamma;
    p.y * eta + p.t * eta * eta * (1.0 + g * alpha * p.qc) + g.powf(1.5) * p.sqrt_q(eta) * p.packet(alpha, sigma, s)
}

/// `(d_alpha, d_eta)` of [`phi_n`].
pub fn phi_n_grad(p: &PhaseParams, eta: f64, alpha: f64, sigma: f64, s: f64) -> (f64, f64) {
    let g = p.gamma;
    let g32 = g.powf(1.5);
    let n = p.n as f64;
    let da = p.t * eta * eta * g * p.qc - g32 * p.sqrt_q(eta) * (sigma + s + 2.0 * n * alpha.sqrt());
    let de = p.y + 2.0 * eta * p.t * (1.0 + g * alpha * p.qc) + g32 * p.qc.sqrt() * eta.signum() * p.packet(alpha, sigma, s);
    (da, de)
}

/// Hessian of [`phi_n`] in `(alpha, eta)`.
pub fn phi_n_hessian(p: &PhaseParams, eta: f64, alpha: f64, sigma: f64, s: f64) -> [[f64; 2]; 2] {
    let g = p.gamma;
    let g32 = g.powf(1.5);
    let n = p.n as f64;
    let aa = -g32 * p.sqrt_q(eta) * n / alpha.sqrt();
    let ae = 2.0 * eta * p.t * g * p.qc - g32 * p.qc.sqrt() * eta.signum() * (sigma + s + 2.0 * n * alpha.sqrt());
    let ee = 2.0 * p.t * (1.0 + g * alpha * p.qc);
    [[aa, ae], [ae, ee]]
}

/// The constant fixing the admissible range of reflections, from the form bounds.
pub fn window_constant(form: &QuadraticForm, eps0: f64) -> f64 {
    4.0 * (1.5f64.sqrt() / (form.m0 - eps0)).max((form.m0_sup + eps0) / 0.5f64.sqrt())
}

/// Reflections that can carry a stationary point: `N >= 1` with `2N` in `[T/M, M T]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct NWindow {
    pub lo: i64,
    pub hi: i64,
    /// The packet never reaches the boundary and only `N = 0` remains.
    pub free_only: bool,
}

impl NWindow {
    pub fn contains(&self, n: i64) -> bool {
        !self.free_only && n >= self.lo && n <= self.hi
    }

    pub fn iter(&self) -> impl Iterator<Item = i64> {
        let (lo, hi) = if self.free_only { (1, 0) } else { (self.lo, self.hi) };
        lo..=hi
    }
}

pub fn n_window(t: f64, gamma: f64, a: f64, form: &QuadraticForm, eps0: f64) -> Result<NWindow> {
    if !(t > 0.0) {
        return Err(Error::Precondition(format!("t = {t} must be positive")));
    }
    let threshold = (a / gamma.sqrt()) / (2.0 * 1.5f64.sqrt() * form.m0_sup.powf(2.0 / 3.0));
    if t < threshold {
        return Ok(NWindow { lo: 1, hi: 0, free_only: true });
    }
    let m = window_constant(form, eps0);
    let big_t = t / gamma.sqrt();
    let lo = ((big_t / m) / 2.0).ceil().max(1.0) as i64;
    let hi = ((m * big_t) / 2.0).floor() as i64;
    Ok(NWindow { lo, hi, free_only: hi < lo })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CriticalPoint {
    pub alpha_c: f64,
    pub eta_c: f64,
    pub residual_alpha: f64,
    pub residual_eta: f64,
    pub converged: bool,
    pub iterations: usize,
}

const ALPHA_BOX: (f64, f64) = (0.25, 2.0);
const ETA_BOX: (f64, f64) = (0.25, 2.0);

/// Damped Newton for the critical point of [`phi_n`] in `(alpha, eta)`, `N >= 1`.
pub fn solve_crit(p: &PhaseParams, sigma: f64, s: f64) -> Result<CriticalPoint> {
    if p.n < 1 {
        return Err(Error::NoCriticalPoint(format!("N = {} has no stationary alpha", p.n)));
    }
    if !(p.t > 0.0) {
        return Err(Error::Precondition("t must be positive".into()));
    }
    let n = p.n as f64;
    let mut eta = -p.y / (2.0 * p.t);
    if !(eta.abs() >= ETA_BOX.0 && eta.abs() <= ETA_BOX.1) {
        return Err(Error::NoCriticalPoint(format!("|y|/2t = {} outside the frequency window", eta.abs())));
    }
    let root = (p.t * p.sqrt_q(eta) / p.gamma.sqrt() - sigma - s) / (2.0 * n);
    if root <= 0.0 {
        return Err(Error::NoCriticalPoint("alpha equation has no positive root".into()));
    }
    let mut alpha = (root * root).clamp(ALPHA_BOX.0, ALPHA_BOX.1);
    let scale = 1.0 + p.y.abs() + p.t;
    let side = eta.signum();
    let in_box = |al: f64, et: f64| {
        al >= ALPHA_BOX.0 && al <= ALPHA_BOX.1 && et.abs() >= ETA_BOX.0 && et.abs() <= ETA_BOX.1 && et.signum() == side
    };
    for it in 0..50 {
        let (ga, ge) = phi_n_grad(p, eta, alpha, sigma, s);
        if ga.abs() < 1e-12 * scale && ge.abs() < 1e-12 * scale {
            return Ok(CriticalPoint { alpha_c: alpha, eta_c: eta, residual_alpha: ga, residual_eta: ge, converged: true, iterations: it });
        }
        let hs = phi_n_hessian(p, eta, alpha, sigma, s);
        let det = hs[0][0] * hs[1][1] - hs[0][1] * hs[1][0];
        if det == 0.0 || !det.is_finite() {
            break;
        }
        let da = (hs[1][1] * ga - hs[0][1] * ge) / det;
        let de = (hs[0][0] * ge - hs[1][0] * ga) / det;
        let mut step = 1.0;
        let norm0 = ga.hypot(ge);
        loop {
            let (na, ne) = (alpha - step * da, eta - step * de);
            if in_box(na, ne) {
                let (g2a, g2e) = phi_n_grad(p, ne, na, sigma, s);
                if g2a.hypot(g2e) < norm0 || step < 1e-3 {
                    alpha = na;
                    eta = ne;
                    break;
                }
            }
            step *= 0.5;
            if step < 1e-6 {
                return Err(Error::NoCriticalPoint("Newton step leaves the admissible box".into()));
            }
        }
    }
    let (ga, ge) = phi_n_grad(p, eta, alpha, sigma, s);
    if ga.abs() < 1e-12 * scale && ge.abs() < 1e-12 * scale {
        return Ok(CriticalPoint { alpha_c: alpha, eta_c: eta, residual_alpha: ga, residual_eta: ge, converged: true, iterations: 50 });
    }
    Err(Error::NoCriticalPoint(format!("no convergence after 50 iterations (residuals {ga:.2e}, {ge:.2e})")))
}

/// Leading critical frequency: root of `eta + a qc^2 Tq^2 eta^3 = -Yq/Tq` (odd and increasing).
fn eta_leading(qc: f64, a: f64, yq: f64, tq: f64) -> f64 {
    let rhs = -yq / tq;
    let c = a * qc * qc * tq * tq;
    let mut e = rhs;
    for _ in 0..100 {
        let f = e + c * e.powi(3) - rhs;
        let step = f / (1.0 + 3.0 * c * e * e);
        e -= step;
        if step.abs() < 1e-16 * (1.0 + e.abs()) {
            break;
        }
    }
    e
}

/// `K_a` at scaled position `Yq = Y/4N` and time `Tq = T/2N`, with `Y = y/sqrt(a)`, `T = t/sqrt(a)`.
pub fn k_fun(form: &QuadraticForm, a: f64, yq: f64, tq: f64) -> Result<f64> {
    if !(tq > 0.0) {
        return Err(Error::Precondition(format!("T/2N = {tq} must be positive")));
    }
    let qc = form.coeffs[0][0];
    let e = eta_leading(qc, a, yq, tq);
    Ok(tq * qc.sqrt() * e.abs())
}

/// The two points `y = +-sqrt(a) |Y|` where `K_a = 1` for reflection `n` at time `t`.
pub fn swallowtail_locus(form: &QuadraticForm, a: f64, t: f64, n: i64) -> Result<[f64; 2]> {
    if n < 1 || !(a > 0.0) || !(t > 0.0) {
        return Err(Error::Precondition(format!("locus needs N >= 1, a > 0, t > 0 (N = {n}, a = {a}, t = {t})")));
    }
    let qc = form.coeffs[0][0];
    let tq = t / a.sqrt() / (2.0 * n as f64);
    let eta = 1.0 / (tq * qc.sqrt());
    if !(0.5..=1.5).contains(&eta) {
        return Err(Error::NoLocus(format!("K = 1 needs |eta| = {eta:.4}, outside [1/2, 3/2]")));
    }
    let yq = tq * (eta + a * qc * qc * tq * tq * eta.powi(3));
    let y = a.sqrt() * 4.0 * n as f64 * yq;
    Ok([-y, y])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Brute,
    Reduced,
    Free,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PacketValue {
    /// In `V` units: `G_N h^d (t/h)^{(d-1)/2}`.
    pub value: Complex64,
    pub method: Method,
    pub err_est: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReflectionConfig {
    /// Target for `|I_n - I_2n|` relative to the largest value.
    pub tol: f64,
    /// Budget on `eta x w` (brute) or `sigma x s` (reduced) nodes.
    pub max_nodes: usize,
    /// Extra reflections summed beyond the admissible window on each side.
    pub n_margin: i64,
    /// Largest `h t / gamma^2` for which the reduced evaluator is trusted.
    pub b_regime_limit: f64,
    pub drop_psi1: bool,
}

impl Default for ReflectionConfig {
    fn default() -> Self {
        ReflectionConfig { tol: 1e-6, max_nodes: 20_000_000, n_margin: 64, b_regime_limit: 4.0, drop_psi1: false }
    }
}

/// Per-reflection fields plus their sum.
#[derive(Debug, Clone, Serialize)]
pub struct PacketSum {
    pub ns: Vec<i64>,
    /// `G_N` on the grid, one per entry of `ns`.
    pub packets: Vec<GreenField>,
    pub total: GreenField,
    /// Largest `|G_N|` among the outermost two reflections on each side, relative to `sup |G|`.
    pub tail: f64,
}

impl PacketSum {
    /// Per-reflection breakdown at one grid point, `V` units.
    pub fn write_breakdown_csv<W: Write>(&self, ix: usize, iy: usize, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["N", "re", "im", "abs", "method", "err_est"])?;
        for (n, f) in self.ns.iter().zip(&self.packets) {
            let scale = v_scale(f.h, f.t);
            let v = f.at(ix, iy) * scale;
            let e = f.err[ix * f.ys.len() + iy] * scale;
            w.write_record([
                n.to_string(),
                format!("{:.16e}", v.re),
                format!("{:.16e}", v.im),
                format!("{:.16e}", v.norm()),
                "brute".to_string(),
                format!("{e:.6e}"),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Factor taking `G` to `V` units for `d = 2`.
pub fn v_scale(h: f64, t: f64) -> f64 {
    h * h * (t / h).sqrt()
}

/// Lower end of the `w` integration; the taper reaches one at `TAPER_TOP`.
const TAPER_START: f64 = 0.5;
const TAPER_TOP: f64 = 1.5;

/// Switches on below the first Airy zero, so it leaves the mode sum untouched.
fn floor_taper(omega: f64) -> f64 {
    plateau((omega - TAPER_START) / (TAPER_TOP - TAPER_START))
}

pub struct Reflection<'a> {
    pub params: ModelParams,
    pub form: &'a QuadraticForm,
    pub table: &'a AiryZeroTable,
    pub cfg: ReflectionConfig,
    pub cutoffs: CutoffFamily,
    pub phase_cfg: PhaseLConfig,
    qc: f64,
}

impl<'a> Reflection<'a> {
    pub fn new(params: ModelParams, form: &'a QuadraticForm, table: &'a AiryZeroTable, cfg: ReflectionConfig) -> Result<Self> {
        params.validate(form)?;
        if params.d != 2 {
            return Err(Error::Precondition(format!("reflection evaluator is d = 2 only, got {}", params.d)));
        }
        Ok(Reflection {
            params,
            form,
            table,
            cfg,
            cutoffs: CutoffFamily { drop_psi1: cfg.drop_psi1 },
            phase_cfg: PhaseLConfig::default(),
            qc: form.coeffs[0][0],
        })
    }

    fn h23(&self) -> f64 {
        self.params.h.powf(2.0 / 3.0)
    }

    pub fn phase_params(&self, n: i64, gamma: f64, t: f64, x: f64, y: f64) -> PhaseParams {
        PhaseParams { n, gamma, a: self.params.a, h: self.params.h, t, x, y, qc: self.qc }
    }

    /// Range of `w` carrying weight, clipped below by the floor taper.
    fn omega_range(&self, weighting: &Weighting) -> (f64, f64) {
        let (u_lo, u_hi) = weighting.support(self.params.eps0);
        let q13_min = (self.qc * 0.25).cbrt();
        let q13_max = (self.qc * 2.25).cbrt();
        ((u_lo * q13_min / self.h23()).max(TAPER_START), u_hi * q13_max / self.h23())
    }

    /// Reflections summed by the brute evaluator.
    pub fn n_range(&self, t: f64, weighting: &Weighting) -> Result<(i64, i64)> {
        let gamma = weighting.gamma().unwrap_or(self.params.eps0);
        let win = n_window(t, gamma, self.params.a, self.form, self.params.eps0)?;
        let hi = if win.free_only { 0 } else { win.hi };
        Ok((-self.cfg.n_margin, hi + self.cfg.n_margin))
    }

    fn brute_pass(
        &self,
        t: f64,
        xs: &[f64],
        ys: &[f64],
        weighting: &Weighting,
        ns: &[i64],
        eta_panels: usize,
        omega_panels: usize,
    ) -> Vec<Vec<Complex64>> {
        let h = self.params.h;
        let h23 = self.h23();
        let h13 = h.cbrt();
        let a = self.params.a;
        let eps0 = self.params.eps0;
        let pe = Panels::join(vec![Panels::new(-1.5, -0.5, eta_panels, 16), Panels::new(0.5, 1.5, eta_panels, 16)]);
        let (w_lo, w_hi) = self.omega_range(weighting);
        let pw = Panels::new(w_lo, w_hi, omega_panels, 16);
        let ls: Vec<f64> = pw.nodes.iter().map(|&w| airy::phase_l(w, &self.phase_cfg)).collect();
        // e^{-i N L(w_m)} for every N, laid out [n][m].
        let rot: Vec<Vec<Complex64>> =
            ns.iter().map(|&n| ls.iter().map(|&l| Complex64::from_polar(1.0, -(n as f64) * l)).collect()).collect();
        let ny = ys.len();
        let rows: Vec<Vec<Vec<Complex64>>> = xs
            .par_iter()
            .map(|&x| {
                // cols[j][n] = sum_m base(j, m) rot[n][m]
                let cols: Vec<Vec<Complex64>> = pe
                    .nodes
                    .par_iter()
                    .map(|&eta| {
                        let zero = vec![Complex64::new(0.0, 0.0); ns.len()];
                        let r = eta.abs();
                        let env = self.cutoffs.eval(Cutoff::Psi, r, 1.0);
                        if env == 0.0 {
                            return zero;
                        }
                        let q = self.qc * r * r;
                        let q13 = q.cbrt();
                        let q23 = q13 * q13;
                        let big_q = q13 / h23;
                        let mut base = Vec::with_capacity(pw.len());
                        for (m, (&w, &ww)) in pw.nodes.iter().zip(&pw.weights).enumerate() {
                            let u = w / big_q;
                            let wt = weighting.weight(u, eps0) * floor_taper(w);
                            let p1 = if wt == 0.0 { 0.0 } else { self.cutoffs.eval(Cutoff::Psi1, (r * r + h23 * w * q23).sqrt(), 1.0) };
                            if wt * p1 == 0.0 {
                                continue;
                            }
                            let mag = env * big_q * wt * p1 * airy::ai(x * big_q - w) * airy::ai(a * big_q - w) * ww;
                            base.push((m, Complex64::from_polar(mag, t * w * q23 / h13)));
                        }
                        if base.is_empty() {
                            return zero;
                        }
                        rot.iter().map(|rn| base.iter().map(|&(m, b)| b * rn[m]).sum()).collect()
                    })
                    .collect();
                let amps: Vec<Vec<Complex64>> = (0..ns.len()).map(|k| cols.iter().map(|c| c[k]).collect()).collect();
                amps.iter()
                    .map(|amp| {
                        ys.iter()
                            .map(|&y| {
                                let mut s = Complex64::new(0.0, 0.0);
                                for ((&eta, &w), f) in pe.nodes.iter().zip(&pe.weights).zip(amp) {
                                    if f.re == 0.0 && f.im == 0.0 {
                                        continue;
                                    }
                                    s += f * Complex64::from_polar(w, (t * eta * eta + y * eta) / h);
                                }
                                s / (2.0 * PI * h)
                            })
                            .collect::<Vec<_>>()
                    })
                    .collect()
            })
            .collect();
        // Reorder to [n][ix * ny + iy].
        (0..ns.len())
            .map(|k| {
                let mut v = Vec::with_capacity(xs.len() * ny);
                for row in &rows {
                    v.extend_from_slice(&row[k]);
                }
                v
            })
            .collect()
    }

    /// All packets `G_N` for `N` in [`Reflection::n_range`] on the grid, by direct `(eta, w)` quadrature.
    pub fn brute(&self, t: f64, xs: &[f64], ys: &[f64], weighting: Weighting) -> Result<PacketSum> {
        let (lo, hi) = self.n_range(t, &weighting)?;
        self.brute_ns(t, xs, ys, weighting, &(lo..=hi).collect::<Vec<_>>())
    }

    pub fn brute_ns(&self, t: f64, xs: &[f64], ys: &[f64], weighting: Weighting, ns: &[i64]) -> Result<PacketSum> {
        if !(t > 0.0) {
            return Err(Error::Precondition(format!("t = {t} must be positive")));
        }
        if xs.iter().any(|&x| x < 0.0) {
            return Err(Error::Domain("x must be >= 0".into()));
        }
        if let Some(g) = weighting.gamma() {
            if g > self.params.eps0 * (1.0 + 1e-12) {
                return Err(Error::Precondition(format!("gamma = {g} exceeds eps0 = {}", self.params.eps0)));
            }
        }
        let h = self.params.h;
        let (w_lo, w_hi) = self.omega_range(&weighting);
        let n_abs = ns.iter().map(|n| n.unsigned_abs()).max().unwrap_or(0) as f64;
        let y_max = ys.iter().fold(0.0f64, |m, y| m.max(y.abs()));
        let x_max = xs.iter().fold(self.params.a, |m, &x| m.max(x));
        let q23_max = (self.qc * 2.25).powf(2.0 / 3.0);
        let w_rate = (n_abs + 2.0) * (2.0 * w_hi.sqrt() + 1.0) + t * q23_max / h.cbrt();
        let eta_rate = (3.0 * t + y_max) / h
            + t * w_hi * q23_max / h.cbrt() * 2.0
            + 2.0 * x_max * (self.qc * 2.25).cbrt() / self.h23() * (w_hi.sqrt() + 1.0);
        let mut pw = (((w_hi - w_lo).max(0.0) * w_rate / 6.0).ceil() as usize).max(2);
        let mut pe = ((eta_rate / 6.0).ceil() as usize).max(4);
        let fine_nodes = (2 * pe * 16 * 2) * (2 * pw * 16);
        if fine_nodes > self.cfg.max_nodes {
            return Err(Error::UnresolvedOscillation { nodes: fine_nodes, budget: self.cfg.max_nodes, phase_variation: eta_rate.max(w_rate) });
        }
        let mut coarse = self.brute_pass(t, xs, ys, &weighting, ns, pe, pw);
        loop {
            let nodes = (2 * pe * 16 * 2) * (2 * pw * 16);
            if nodes > self.cfg.max_nodes {
                return Err(Error::UnresolvedOscillation { nodes, budget: self.cfg.max_nodes, phase_variation: eta_rate.max(w_rate) });
            }
            let fine = self.brute_pass(t, xs, ys, &weighting, ns, 2 * pe, 2 * pw);
            let total: Vec<Complex64> =
                (0..xs.len() * ys.len()).map(|i| fine.iter().map(|f| f[i]).sum()).collect();
            let sup = total.iter().fold(0.0f64, |m, v| m.max(v.norm()));
            let errs: Vec<Vec<f64>> =
                fine.iter().zip(&coarse).map(|(f, c)| f.iter().zip(c).map(|(a, b)| (a - b).norm()).collect()).collect();
            let max_err = errs.iter().flatten().cloned().fold(0.0, f64::max);
            if max_err <= self.cfg.tol * sup.max(1e-300) || sup == 0.0 {
                let meta = |what: &str| FieldMeta {
                    evaluator: what.to_string(),
                    nodes,
                    budget: self.cfg.max_nodes,
                    tolerance: self.cfg.tol,
                    max_err,
                    notes: vec![format!("w in [{w_lo:.4}, {w_hi:.4}]")],
                };
                let mk = |values: Vec<Complex64>, err: Vec<f64>, what: &str| GreenField {
                    t,
                    h,
                    a: self.params.a,
                    gamma: weighting.gamma(),
                    xs: xs.to_vec(),
                    ys: ys.to_vec(),
                    values,
                    err,
                    meta: meta(what),
                };
                let tot_err: Vec<f64> = (0..total.len()).map(|i| errs.iter().map(|e| e[i]).sum()).collect();
                let edge: Vec<usize> = if ns.len() <= 4 { vec![] } else { vec![0, 1, ns.len() - 2, ns.len() - 1] };
                let tail = edge
                    .iter()
                    .map(|&k| fine[k].iter().fold(0.0f64, |m, v| m.max(v.norm())))
                    .fold(0.0, f64::max)
                    / sup.max(1e-300);
                let packets = fine
                    .into_iter()
                    .zip(errs)
                    .zip(ns)
                    .map(|((v, e), n)| mk(v, e, &format!("reflection brute N={n}")))
                    .collect();
                let mut total = mk(total, tot_err, "reflection brute total");
                total.meta.notes.push(format!("N in [{}, {}], tail {tail:.2e}", ns[0], ns[ns.len() - 1]));
                return Ok(PacketSum { ns: ns.to_vec(), packets, total, tail });
            }
            coarse = fine;
            pe *= 2;
            pw *= 2;
        }
    }

    /// Sum over reflections at a point.
    pub fn g_total(&self, t: f64, x: f64, y: f64, weighting: Weighting) -> Result<(Complex64, f64)> {
        let s = self.brute(t, &[x], &[y], weighting)?;
        Ok((s.total.values[0], s.total.err[0]))
    }

    /// One packet by direct quadrature, `V` units.
    pub fn v_n_brute(&self, n: i64, t: f64, x: f64, y: f64, weighting: Weighting) -> Result<PacketValue> {
        let s = self.brute_ns(t, &[x], &[y], weighting, &[n])?;
        let k = v_scale(self.params.h, t);
        Ok(PacketValue { value: s.total.values[0] * k, method: Method::Brute, err_est: s.total.err[0] * k })
    }

    fn reduced_pass(&self, p: &PhaseParams, weighting: &Weighting, panels: usize, clip: f64) -> (Complex64, usize) {
        let h = p.h;
        let eps0 = self.params.eps0;
        let n = p.n as f64;
        let ps = Panels::new(-clip, clip, panels, 16);
        let rows: Vec<(Complex64, usize)> = ps
            .nodes
            .par_iter()
            .zip(&ps.weights)
            .map(|(&sigma, &ws)| {
                let mut acc = Complex64::new(0.0, 0.0);
                let mut fails = 0;
                for (&s, &wt) in ps.nodes.iter().zip(&ps.weights) {
                    let cl = crate::model::phi(sigma.hypot(s) / clip);
                    if cl == 0.0 {
                        continue;
                    }
                    let cp = match solve_crit(p, sigma, s) {
                        Ok(c) => c,
                        Err(_) => {
                            fails += 1;
                            continue;
                        }
                    };
                    let (al, et) = (cp.alpha_c, cp.eta_c);
                    let r = et.abs();
                    let q = self.qc * r * r;
                    let w = weighting.weight(p.gamma * al, eps0);
                    let env = self.cutoffs.eval(Cutoff::Psi, r, 1.0);
                    let p1 = self.cutoffs.eval(Cutoff::Psi1, (r * r + p.gamma * al * q).sqrt(), 1.0);
                    let sym = q * env * p1 * w * cl;
                    if sym == 0.0 {
                        continue;
                    }
                    let hs = phi_n_hessian(p, et, al, sigma, s);
                    let det = hs[0][0] * hs[1][1] - hs[0][1] * hs[1][0];
                    let sig = if det < 0.0 { 0.0 } else if hs[0][0] > 0.0 { 2.0 } else { -2.0 };
                    let omega = q.cbrt() * p.gamma * al / self.h23();
                    let b = 4.0 / 3.0 * omega.powf(1.5) + PI / 2.0 - airy::phase_l(omega, &self.phase_cfg);
                    let ph = phi_n(p, et, al, sigma, s) / h + n * (b - PI / 2.0) + PI / 4.0 * sig;
                    acc += Complex64::from_polar(sym * ws * wt * 2.0 * PI * h / det.abs().sqrt(), ph);
                }
                (acc, fails)
            })
            .collect();
        let pref = p.gamma * p.gamma / h.powi(3) / (2.0 * PI).powi(3);
        let (v, f) = rows.iter().fold((Complex64::new(0.0, 0.0), 0), |(a, b), (c, d)| (a + c, b + d));
        (v * pref, f)
    }

    /// Stationary phase in `(alpha, eta)` followed by `(sigma, s)` quadrature, `N >= 1`, `V` units.
    pub fn v_n_reduced(&self, n: i64, t: f64, x: f64, y: f64, weighting: Weighting) -> Result<PacketValue> {
        let gamma = weighting.gamma().unwrap_or(self.params.eps0);
        let h = self.params.h;
        if h * t / (gamma * gamma) > self.cfg.b_regime_limit {
            return Err(Error::Precondition(format!(
                "h t / gamma^2 = {:.3} exceeds {}; the reflection correction is not a bounded symbol there",
                h * t / (gamma * gamma),
                self.cfg.b_regime_limit
            )));
        }
        if n == 0 {
            return self.v_0_free(t, x, y, weighting);
        }
        if n < 0 {
            return Err(Error::NoCriticalPoint(format!("N = {n} has no critical point on the admissible box")));
        }
        let p = self.phase_params(n, gamma, t, x, y);
        let eta0 = -y / (2.0 * t);
        let alpha0 = (t * p.sqrt_q(eta0) / (2.0 * n as f64 * gamma.sqrt())).powi(2);
        // Smooth clip: one up to 3/2 sqrt(alpha), past every stationary sigma and s, zero at 3 sqrt(alpha).
        let clip = 3.0 * alpha0.max(0.25).sqrt();
        let lam = p.lambda() * (self.qc * 2.25).sqrt();
        let rate = lam * (clip * clip + (x / gamma).max(self.params.a / gamma) + 2.0);
        let mut panels = ((2.0 * clip * rate / 6.0).ceil() as usize).max(4);
        if (2 * panels * 16).pow(2) > self.cfg.max_nodes {
            return Err(Error::UnresolvedOscillation { nodes: (2 * panels * 16).pow(2), budget: self.cfg.max_nodes, phase_variation: rate });
        }
        let (mut coarse, _) = self.reduced_pass(&p, &weighting, panels, clip);
        loop {
            let nodes = (2 * panels * 16).pow(2);
            if nodes > self.cfg.max_nodes {
                return Err(Error::UnresolvedOscillation { nodes, budget: self.cfg.max_nodes, phase_variation: rate });
            }
            let (fine, _) = self.reduced_pass(&p, &weighting, 2 * panels, clip);
            let err = (fine - coarse).norm();
            if err <= self.cfg.tol.max(1e-8) * fine.norm() || fine.norm() == 0.0 {
                let k = v_scale(h, t);
                return Ok(PacketValue { value: fine * k, method: Method::Reduced, err_est: err * k });
            }
            coarse = fine;
            panels *= 2;
        }
    }

    fn free_pass(&self, t: f64, x: f64, ys: &[f64], weighting: &Weighting, gamma: f64, pe: usize, px: usize) -> Vec<Complex64> {
        let h = self.params.h;
        let a = self.params.a;
        let eps0 = self.params.eps0;
        let g32 = gamma.powf(1.5);
        let (_, u_hi) = weighting.support(eps0);
        let xi_max = (u_hi / gamma).sqrt();
        let peta = Panels::join(vec![Panels::new(-1.5, -0.5, pe, 16), Panels::new(0.5, 1.5, pe, 16)]);
        let pxi = Panels::new(-xi_max, xi_max, px, 16);
        // Amplitude and y-independent phase on the (eta, xi2) grid, folded over xi2.
        let amps: Vec<Complex64> = peta
            .nodes
            .par_iter()
            .map(|&eta| {
                let r = eta.abs();
                let env = self.cutoffs.eval(Cutoff::Psi, r, 1.0);
                if env == 0.0 {
                    return Complex64::new(0.0, 0.0);
                }
                let q = self.qc * r * r;
                let sq = q.sqrt();
                let xi1 = t * sq / (2.0 * gamma.sqrt());
                let mut acc = Complex64::new(0.0, 0.0);
                for (&xi2, &w2) in pxi.nodes.iter().zip(&pxi.weights) {
                    let alpha = xi1 * xi1 + xi2 * xi2 + (x + a) / (2.0 * gamma);
                    let w = weighting.weight(gamma * alpha, eps0);
                    if w == 0.0 {
                        continue;
                    }
                    let p1 = self.cutoffs.eval(Cutoff::Psi1, (r * r + gamma * alpha * q).sqrt(), 1.0);
                    let ph = t * eta * eta
                        + g32 * sq * (2.0 / 3.0 * xi1.powi(3) + 2.0 * xi1 * xi2 * xi2 + xi1 * (x + a) / gamma + xi2 * (x - a) / gamma);
                    acc += Complex64::from_polar(sq * env * p1 * w * w2, ph / h);
                }
                acc
            })
            .collect();
        let pref = gamma.sqrt() / (h * h * (2.0 * PI).powi(2));
        ys.iter()
            .map(|&y| {
                let mut s = Complex64::new(0.0, 0.0);
                for ((&eta, &w), f) in peta.nodes.iter().zip(&peta.weights).zip(&amps) {
                    s += f * Complex64::from_polar(w, y * eta / h);
                }
                s * pref
            })
            .collect()
    }

    /// Free packet `G_0` on the grid from its own reduction (exact in the first
    /// transverse frequency and `alpha`, quadrature in the second frequency and `eta`).
    pub fn free_field(&self, t: f64, xs: &[f64], ys: &[f64], weighting: Weighting) -> Result<GreenField> {
        let h = self.params.h;
        if !(t > h) {
            return Err(Error::Precondition(format!("free packet needs t > h (t = {t}, h = {h})")));
        }
        let gamma = weighting.gamma().unwrap_or(self.params.eps0);
        let (_, u_hi) = weighting.support(self.params.eps0);
        let xi_max = (u_hi / gamma).sqrt();
        let y_max = ys.iter().fold(0.0f64, |m, y| m.max(y.abs()));
        let x_max = xs.iter().fold(self.params.a, |m, &x| m.max(x));
        let g32 = gamma.powf(1.5);
        let sq_max = (self.qc * 2.25).sqrt();
        let xi1_max = t * sq_max / (2.0 * gamma.sqrt());
        let xi_rate = g32 * sq_max * (4.0 * xi1_max * xi_max + x_max / gamma) / h;
        let eta_rate = (3.0 * t + y_max) / h + g32 * self.qc.sqrt() * (xi1_max.powi(3) + 2.0 * xi1_max * xi_max * xi_max + 2.0 * xi1_max * x_max / gamma + xi_max * x_max / gamma) * 3.0 / h;
        let mut pe = ((eta_rate / 6.0).ceil() as usize).max(4);
        let mut px = ((2.0 * xi_max * xi_rate / 6.0).ceil() as usize).max(4);
        let run = |pe: usize, px: usize| -> Vec<Complex64> {
            xs.iter().flat_map(|&x| self.free_pass(t, x, ys, &weighting, gamma, pe, px)).collect()
        };
        if (2 * pe * 32) * (2 * px * 16) > self.cfg.max_nodes {
            return Err(Error::UnresolvedOscillation { nodes: (2 * pe * 32) * (2 * px * 16), budget: self.cfg.max_nodes, phase_variation: eta_rate.max(xi_rate) });
        }
        let mut coarse = run(pe, px);
        loop {
            let nodes = (2 * pe * 32) * (2 * px * 16);
            if nodes > self.cfg.max_nodes {
                return Err(Error::UnresolvedOscillation { nodes, budget: self.cfg.max_nodes, phase_variation: eta_rate.max(xi_rate) });
            }
            let fine = run(2 * pe, 2 * px);
            let err: Vec<f64> = fine.iter().zip(&coarse).map(|(a, b)| (a - b).norm()).collect();
            let sup = fine.iter().fold(0.0f64, |m, v| m.max(v.norm()));
            let max_err = err.iter().cloned().fold(0.0, f64::max);
            if max_err <= self.cfg.tol * sup.max(1e-300) || sup == 0.0 {
                return Ok(GreenField {
                    t,
                    h,
                    a: self.params.a,
                    gamma: weighting.gamma(),
                    xs: xs.to_vec(),
                    ys: ys.to_vec(),
                    values: fine,
                    err,
                    meta: FieldMeta {
                        evaluator: "reflection free".into(),
                        nodes,
                        budget: self.cfg.max_nodes,
                        tolerance: self.cfg.tol,
                        max_err,
                        notes: vec!["leading-order reduction in (xi1, alpha)".into()],
                    },
                });
            }
            coarse = fine;
            pe *= 2;
            px *= 2;
        }
    }

    /// The free packet at a point, `V` units.
    pub fn v_0_free(&self, t: f64, x: f64, y: f64, weighting: Weighting) -> Result<PacketValue> {
        let f = self.free_field(t, &[x], &[y], weighting)?;
        let k = v_scale(self.params.h, t);
        Ok(PacketValue { value: f.values[0] * k, method: Method::Free, err_est: f.err[0] * k })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn pp(n: i64) -> PhaseParams {
        PhaseParams { n, gamma: 0.25, a: 0.2, h: 0.05, t: 0.6, x: 0.1, y: -1.1, qc: 1.0 }
    }

    #[test]
    fn free_phase_without_packets() {
        let mut p = pp(0);
        p.y = 0.0;
        let v = phi_n(&p, 0.9, 0.7, 0.0, 0.0);
        assert!((v - 0.6 * 0.81 * (1.0 + 0.25 * 0.7)).abs() < 1e-15);
    }

    #[test]
    fn gradient_matches_differences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let p = pp(rng.random_range(0..5));
            let (eta, al, sg, s) = (rng.random_range(0.6..1.4), rng.random_range(0.3..1.8), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let (da, de) = phi_n_grad(&p, eta, al, sg, s);
            let e = 1e-5;
            let fa = (phi_n(&p, eta, al + e, sg, s) - phi_n(&p, eta, al - e, sg, s)) / (2.0 * e);
            let fe = (phi_n(&p, eta + e, al, sg, s) - phi_n(&p, eta - e, al, sg, s)) / (2.0 * e);
            assert!((da - fa).abs() < 1e-7 && (de - fe).abs() < 1e-7, "{da} {fa} {de} {fe}");
            let hs = phi_n_hessian(&p, eta, al, sg, s);
            let ha = (phi_n_grad(&p, eta, al + e, sg, s).0 - phi_n_grad(&p, eta, al - e, sg, s).0) / (2.0 * e);
            let he = (phi_n_grad(&p, eta + e, al, sg, s).1 - phi_n_grad(&p, eta - e, al, sg, s).1) / (2.0 * e);
            let hx = (phi_n_grad(&p, eta + e, al, sg, s).0 - phi_n_grad(&p, eta - e, al, sg, s).0) / (2.0 * e);
            assert!((hs[0][0] - ha).abs() < 1e-6 && (hs[1][1] - he).abs() < 1e-6 && (hs[0][1] - hx).abs() < 1e-6);
        }
    }

    #[test]
    fn window_for_unit_form() {
        let f = QuadraticForm::identity(1);
        let m = window_constant(&f, 0.3);
        let expect = 4.0 * (1.5f64.sqrt() / 0.7).max(1.3 / 0.5f64.sqrt());
        assert!((m - expect).abs() < 1e-14);
        let w = n_window(0.6, 0.25, 0.03, &f, 0.3).unwrap();
        assert_eq!((w.lo, w.hi), (1, (m * 1.2 / 2.0).floor() as i64));
        let a = 0.05;
        let thr = (a / (8.0 * a as f64).sqrt()) / (2.0 * 1.5f64.sqrt());
        assert!(n_window(0.9 * thr, 8.0 * a, a, &f, 0.3).unwrap().free_only);
    }

    #[test]
    fn tiny_gamma_critical_point() {
        let p = PhaseParams { n: 2, gamma: 1e-4, a: 1e-5, h: 1e-6, t: 0.04, x: 2e-5, y: -0.06, qc: 1.0 };
        let c = solve_crit(&p, 0.0, 0.0).unwrap();
        assert!(c.converged);
        let eta0 = 0.75;
        assert!((c.eta_c - eta0).abs() < 1e-3, "{}", c.eta_c);
        let alpha0 = (p.t / p.gamma.sqrt() * eta0 / 4.0).powi(2);
        assert!((c.alpha_c - alpha0).abs() < 1e-2 * alpha0, "{} {}", c.alpha_c, alpha0);
    }

    #[test]
    fn k_and_locus() {
        let f = QuadraticForm::identity(1);
        assert!((k_fun(&f, 0.0, 0.7, 0.9).unwrap() - 0.7).abs() < 1e-15);
        let [_, y] = swallowtail_locus(&f, 0.2, 1.3, 1).unwrap();
        let tq = 1.3 / 0.2f64.sqrt() / 2.0;
        let yq = y / 0.2f64.sqrt() / 4.0;
        assert!((k_fun(&f, 0.2, yq, tq).unwrap() - 1.0).abs() < 1e-10);
        // a -> 0 with T fixed: |Y| = 4N
        let a: f64 = 1e-10;
        let t = 0.8 * 4.0 * a.sqrt();
        let [_, y] = swallowtail_locus(&f, a, t, 2).unwrap();
        assert!((y / a.sqrt() - 8.0).abs() < 1e-6);
    }
}
