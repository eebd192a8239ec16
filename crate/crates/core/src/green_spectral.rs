//! Green function of the semiclassical flow as a sum over Airy eigenmodes.
//!
//! For `d = 2` the tangential frequency `eta` ranges over `1/2 <= |eta| <= 3/2` and
//!
//! `G(t,x,y) = (2 pi h)^{-1} sum_k int e^{i(t lambda + y eta)/h} psi psi1 w(u_k) e_k(x) e_k(a) d eta`
//!
//! with `t lambda = t(eta^2 + h^{2/3} w_k q(eta)^{2/3})` and transverse energy
//! `u_k = h^{2/3} w_k / q(eta)^{1/3}` weighted by one dyadic block or by `phi(u/eps0)`.
//! For each `x` the mode sum is folded into an amplitude `F_x(eta)`, after which every `y`
//! is a single oscillatory integral. For `d = 3` with a radial form the angular integral
//! is done by the trapezoid rule on the circle and `y` stands for `|y|`.

use crate::airy::{self, AiryZeroTable};
use crate::error::{Error, Result};
use crate::model::{Block, CutoffFamily, DyadicLadder, ModelParams, QuadraticForm};
use crate::quad::Panels;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::Write;

/// Complex samples of a Green function on a rectangular `(x, y)` grid.
#[derive(Debug, Clone, Serialize)]
pub struct GreenField {
    pub t: f64,
    pub h: f64,
    pub a: f64,
    /// `None` for the full truncated Green function.
    pub gamma: Option<f64>,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    /// Row-major in `x`: index `ix * ys.len() + iy`.
    pub values: Vec<Complex64>,
    pub err: Vec<f64>,
    pub meta: FieldMeta,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct FieldMeta {
    pub evaluator: String,
    pub nodes: usize,
    pub budget: usize,
    pub tolerance: f64,
    pub max_err: f64,
    pub notes: Vec<String>,
}

/// Location and value of the largest `|G|` on a grid.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SupPoint {
    pub sup: f64,
    pub x: f64,
    pub y: f64,
    pub ix: usize,
    pub iy: usize,
    /// The maximum sits on the edge of the grid and a wider grid may find more.
    pub on_boundary: bool,
}

impl GreenField {
    pub fn at(&self, ix: usize, iy: usize) -> Complex64 {
        self.values[ix * self.ys.len() + iy]
    }

    pub fn sup(&self) -> SupPoint {
        let ny = self.ys.len();
        let mut best = (0usize, f64::NEG_INFINITY);
        for (i, v) in self.values.iter().enumerate() {
            if v.norm() > best.1 {
                best = (i, v.norm());
            }
        }
        let (ix, iy) = (best.0 / ny, best.0 % ny);
        SupPoint {
            sup: best.1,
            x: self.xs[ix],
            y: self.ys[iy],
            ix,
            iy,
            on_boundary: (self.xs.len() > 1 && (ix == 0 || ix + 1 == self.xs.len()))
                || (ny > 1 && (iy == 0 || iy + 1 == ny)),
        }
    }

    /// CSV with columns `t,x,y,re,im,abs,err_est`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "x", "y", "re", "im", "abs", "err_est"])?;
        for (ix, x) in self.xs.iter().enumerate() {
            for (iy, y) in self.ys.iter().enumerate() {
                let v = self.at(ix, iy);
                let e = self.err[ix * self.ys.len() + iy];
                w.write_record([
                    format!("{:.16e}", self.t),
                    format!("{x:.16e}"),
                    format!("{y:.16e}"),
                    format!("{:.16e}", v.re),
                    format!("{:.16e}", v.im),
                    format!("{:.16e}", v.norm()),
                    format!("{e:.6e}"),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Evenly spaced grid including both ends.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Which part of the transverse spectrum to keep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Weighting {
    Block(Block),
    /// `phi(u / eps0)`, the whole truncated Green function.
    Total,
}

impl Weighting {
    pub fn weight(&self, u: f64, eps0: f64) -> f64 {
        match self {
            Weighting::Block(b) => b.weight(u),
            Weighting::Total => crate::model::phi(u / eps0),
        }
    }

    pub fn support(&self, eps0: f64) -> (f64, f64) {
        match self {
            Weighting::Block(b) => b.support(),
            Weighting::Total => (0.0, eps0),
        }
    }

    pub fn gamma(&self) -> Option<f64> {
        match self {
            Weighting::Block(b) => Some(b.gamma()),
            Weighting::Total => None,
        }
    }
}

/// Range of mode indices that can carry weight in a block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModeWindow {
    pub gamma: f64,
    pub k_lo: usize,
    pub k_hi: usize,
}

impl ModeWindow {
    pub fn is_empty(&self) -> bool {
        self.k_lo > self.k_hi
    }

    pub fn len(&self) -> usize {
        if self.is_empty() {
            0
        } else {
            self.k_hi - self.k_lo + 1
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectralConfig {
    /// Target for `|I_n - I_2n|` relative to the largest value on the grid.
    pub tol: f64,
    /// Budget on tangential quadrature nodes.
    pub max_nodes: usize,
    pub drop_psi1: bool,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        SpectralConfig { tol: 1e-6, max_nodes: 400_000, drop_psi1: false }
    }
}

/// Eigenmode-sum evaluator bound to one geometry and parameter set.
pub struct Spectral<'a> {
    pub params: ModelParams,
    pub form: &'a QuadraticForm,
    pub table: &'a AiryZeroTable,
    pub cfg: SpectralConfig,
    pub cutoffs: CutoffFamily,
    /// Scalar such that `q(eta) = qc |eta|^2`; only isotropic forms are supported for d = 3.
    qc: f64,
}

impl<'a> Spectral<'a> {
    pub fn new(params: ModelParams, form: &'a QuadraticForm, table: &'a AiryZeroTable, cfg: SpectralConfig) -> Result<Self> {
        params.validate(form)?;
        let qc = match params.d {
            2 => form.coeffs[0][0],
            3 => {
                let c = form.coeffs[0][0];
                if (form.m0 - form.m0_sup).abs() > 1e-12 * form.m0 {
                    return Err(Error::Precondition("d = 3 needs a radial (isotropic) form".into()));
                }
                c
            }
            d => return Err(Error::Precondition(format!("spectral evaluator supports d = 2 or 3, got {d}"))),
        };
        Ok(Spectral { params, form, table, cfg, cutoffs: CutoffFamily { drop_psi1: cfg.drop_psi1 }, qc })
    }

    pub fn ladder(&self) -> DyadicLadder {
        DyadicLadder::new(&self.params)
    }

    fn h23(&self) -> f64 {
        self.params.h.powf(2.0 / 3.0)
    }

    /// Modes whose transverse energy meets the weighting's support for some `|eta|` in `[1/2, 3/2]`.
    pub fn window(&self, weighting: &Weighting) -> Result<ModeWindow> {
        let eps0 = self.params.eps0;
        if let Some(g) = weighting.gamma() {
            if g > eps0 * (1.0 + 1e-12) {
                return Err(Error::Precondition(format!("gamma = {g} exceeds eps0 = {eps0}")));
            }
            if !(g > 0.0) {
                return Err(Error::Precondition(format!("gamma = {g} must be positive")));
            }
        }
        let (u_lo, u_hi) = weighting.support(eps0);
        let q13_min = (self.qc * 0.25).cbrt();
        let q13_max = (self.qc * 2.25).cbrt();
        let w_lo = u_lo * q13_min / self.h23();
        let w_hi = u_hi * q13_max / self.h23();
        let k_lo = self.table.first_at_least(w_lo);
        let k_hi = self.table.first_at_least(w_hi) - 1;
        if k_hi >= self.table.len() {
            return Err(Error::Precondition(format!(
                "zero table of {} entries does not cover w = {w_hi}",
                self.table.len()
            )));
        }
        Ok(ModeWindow { gamma: weighting.gamma().unwrap_or(eps0), k_lo, k_hi })
    }

    /// Window for the dyadic block at scale `gamma` (ring block).
    pub fn mode_window(&self, gamma: f64) -> Result<ModeWindow> {
        self.window(&Weighting::Block(Block::Ring(gamma)))
    }

    /// Mode-summed amplitude `F_x(eta)` at the quadrature nodes, without the free phase.
    fn amplitude(&self, t: f64, x: f64, etas: &[f64], weighting: &Weighting, win: &ModeWindow) -> Vec<Complex64> {
        let h = self.params.h;
        let h23 = self.h23();
        let a = self.params.a;
        let eps0 = self.params.eps0;
        etas.iter()
            .map(|&eta| {
                let r = eta.abs();
                let env = self.cutoffs.eval(crate::model::Cutoff::Psi, r, 1.0);
                if env == 0.0 {
                    return Complex64::new(0.0, 0.0);
                }
                let q = self.qc * r * r;
                let q13 = q.cbrt();
                let q23 = q13 * q13;
                let big_q = q13 / h23;
                let mut acc = Complex64::new(0.0, 0.0);
                for k in win.k_lo..=win.k_hi {
                    let e = &self.table.entries[k - 1];
                    let u = h23 * e.omega / q13;
                    let w = weighting.weight(u, eps0);
                    if w == 0.0 {
                        continue;
                    }
                    let p1 = self.cutoffs.eval(crate::model::Cutoff::Psi1, (r * r + h23 * e.omega * q23).sqrt(), 1.0);
                    if p1 == 0.0 {
                        continue;
                    }
                    let modes = 2.0 * PI * big_q / e.lprime * airy::ai(x * big_q - e.omega) * airy::ai(a * big_q - e.omega);
                    let ph = t * h23 * e.omega * q23 / h;
                    acc += Complex64::from_polar(w * p1 * modes, ph);
                }
                acc * env
            })
            .collect()
    }

    /// Largest phase rate in `eta` over the grid, used to size the first quadrature pass.
    fn phase_rate(&self, t: f64, y_max: f64, win: &ModeWindow) -> f64 {
        let h = self.params.h;
        let w_max = if win.is_empty() { 0.0 } else { self.table.omega(win.k_hi) };
        let transverse = t * self.h23() * w_max * (4.0 / 3.0) * self.qc.powf(2.0 / 3.0) * 1.5f64.powf(1.0 / 3.0);
        // Airy factors: d/d eta of x Q(eta), with Q ~ q^{1/3} / h^{2/3}.
        let airy_rate = (2.0 / 3.0) * (self.qc * 2.25).cbrt() / self.h23() * 2.0 * (self.params.eps0 + w_max.sqrt());
        (3.0 * t + y_max + transverse) / h + airy_rate
    }

    fn nodes(&self, panels_per_side: usize) -> Panels {
        match self.params.d {
            2 => Panels::join(vec![
                Panels::new(-1.5, -0.5, panels_per_side, 16),
                Panels::new(0.5, 1.5, panels_per_side, 16),
            ]),
            _ => Panels::new(0.5, 1.5, panels_per_side, 16),
        }
    }

    fn transform(&self, t: f64, p: &Panels, amps: &[Complex64], ys: &[f64]) -> Vec<Complex64> {
        let h = self.params.h;
        match self.params.d {
            2 => ys
                .iter()
                .map(|&y| {
                    let mut s = Complex64::new(0.0, 0.0);
                    for ((&eta, &w), &f) in p.nodes.iter().zip(&p.weights).zip(amps) {
                        if f.re == 0.0 && f.im == 0.0 {
                            continue;
                        }
                        s += f * Complex64::from_polar(w, (t * eta * eta + y * eta) / h);
                    }
                    s / (2.0 * PI * h)
                })
                .collect(),
            _ => ys
                .iter()
                .map(|&y| {
                    let mut s = Complex64::new(0.0, 0.0);
                    for ((&rho, &w), &f) in p.nodes.iter().zip(&p.weights).zip(amps) {
                        if f.re == 0.0 && f.im == 0.0 {
                            continue;
                        }
                        let ang = angular(y.abs() * rho / h);
                        s += f * ang * Complex64::from_polar(w * rho, t * rho * rho / h);
                    }
                    s / (2.0 * PI * h).powi(2)
                })
                .collect(),
        }
    }

    fn pass(&self, t: f64, xs: &[f64], ys: &[f64], weighting: &Weighting, win: &ModeWindow, panels: usize) -> Vec<Complex64> {
        let p = self.nodes(panels);
        let rows: Vec<Vec<Complex64>> = xs
            .par_iter()
            .map(|&x| {
                let amps = self.amplitude(t, x, &p.nodes, weighting, win);
                self.transform(t, &p, &amps, ys)
            })
            .collect();
        rows.into_iter().flatten().collect()
    }

    /// Field of one dyadic block (or of the total) on the grid `xs x ys`.
    pub fn field(&self, t: f64, xs: &[f64], ys: &[f64], weighting: Weighting) -> Result<GreenField> {
        if !(t >= 0.0) {
            return Err(Error::Precondition(format!("t = {t} must be >= 0")));
        }
        if xs.iter().any(|&x| x < 0.0) {
            return Err(Error::Domain("x must be >= 0".into()));
        }
        let win = self.window(&weighting)?;
        self.field_in_window(t, xs, ys, weighting, win)
    }

    /// As [`Spectral::field`] but summing over an explicit mode range.
    pub fn field_in_window(&self, t: f64, xs: &[f64], ys: &[f64], weighting: Weighting, win: ModeWindow) -> Result<GreenField> {
        if win.k_lo == 0 || win.k_hi > self.table.len() {
            return Err(Error::Precondition(format!("mode {} is beyond the zero table", win.k_hi)));
        }
        let mut meta = FieldMeta {
            evaluator: format!("spectral d={}", self.params.d),
            budget: self.cfg.max_nodes,
            tolerance: self.cfg.tol,
            ..Default::default()
        };
        let n_field = xs.len() * ys.len();
        if win.is_empty() {
            meta.notes.push("empty mode window".into());
            return Ok(GreenField {
                t,
                h: self.params.h,
                a: self.params.a,
                gamma: weighting.gamma(),
                xs: xs.to_vec(),
                ys: ys.to_vec(),
                values: vec![Complex64::new(0.0, 0.0); n_field],
                err: vec![0.0; n_field],
                meta,
            });
        }
        let y_max = ys.iter().fold(0.0f64, |m, y| m.max(y.abs()));
        let rate = self.phase_rate(t, y_max, &win);
        let mut panels = ((rate / 6.0).ceil() as usize).max(4);
        let sides = if self.params.d == 2 { 2 } else { 1 };
        if 2 * panels * 16 * sides > self.cfg.max_nodes {
            return Err(Error::UnresolvedOscillation { nodes: 2 * panels * 16 * sides, budget: self.cfg.max_nodes, phase_variation: rate });
        }
        let mut coarse = self.pass(t, xs, ys, &weighting, &win, panels);
        loop {
            let nodes = 2 * panels * 16 * sides;
            if nodes > self.cfg.max_nodes {
                return Err(Error::UnresolvedOscillation {
                    nodes,
                    budget: self.cfg.max_nodes,
                    phase_variation: rate,
                });
            }
            let fine = self.pass(t, xs, ys, &weighting, &win, 2 * panels);
            let err: Vec<f64> = fine.iter().zip(&coarse).map(|(f, c)| (f - c).norm()).collect();
            let sup = fine.iter().fold(0.0f64, |m, v| m.max(v.norm()));
            let max_err = err.iter().cloned().fold(0.0, f64::max);
            if max_err <= self.cfg.tol * sup.max(1e-300) || sup == 0.0 {
                meta.nodes = nodes;
                meta.max_err = max_err;
                meta.notes.push(format!("modes {}..={}", win.k_lo, win.k_hi));
                meta.notes.push(format!(
                    "modes above w = {:.3} (transverse energy beyond eps0) are dropped",
                    self.table.omega(win.k_hi)
                ));
                return Ok(GreenField {
                    t,
                    h: self.params.h,
                    a: self.params.a,
                    gamma: weighting.gamma(),
                    xs: xs.to_vec(),
                    ys: ys.to_vec(),
                    values: fine,
                    err,
                    meta,
                });
            }
            coarse = fine;
            panels *= 2;
        }
    }

    /// One dyadic block at a point.
    pub fn g_gamma(&self, t: f64, x: f64, y: f64, block: Block) -> Result<(Complex64, f64)> {
        let f = self.field(t, &[x], &[y], Weighting::Block(block))?;
        Ok((f.values[0], f.err[0]))
    }

    /// The truncated Green function at a point.
    pub fn g_total(&self, t: f64, x: f64, y: f64) -> Result<(Complex64, f64)> {
        let f = self.field(t, &[x], &[y], Weighting::Total)?;
        Ok((f.values[0], f.err[0]))
    }

    /// Sum of the block fields over the dyadic ladder.
    pub fn field_by_blocks(&self, t: f64, xs: &[f64], ys: &[f64]) -> Result<GreenField> {
        let mut total: Option<GreenField> = None;
        for b in self.ladder().all() {
            let f = self.field(t, xs, ys, Weighting::Block(b))?;
            total = Some(match total {
                None => f,
                Some(mut acc) => {
                    acc.values.iter_mut().zip(&f.values).for_each(|(a, b)| *a += b);
                    acc.err.iter_mut().zip(&f.err).for_each(|(a, b)| *a += b);
                    acc.meta.nodes += f.meta.nodes;
                    acc.meta.max_err += f.meta.max_err;
                    acc
                }
            });
        }
        let mut t = total.expect("ladder has a bottom block");
        t.gamma = None;
        t.meta.evaluator = format!("spectral-blocks d={}", self.params.d);
        Ok(t)
    }
}

/// `int_0^{2 pi} e^{i z cos th} d th` by the trapezoid rule, exact to rounding for enough nodes.
fn angular(z: f64) -> Complex64 {
    let n = (z.abs() as usize + 32).next_power_of_two();
    let s: Complex64 = (0..n)
        .map(|j| Complex64::from_polar(1.0, z * (2.0 * PI * j as f64 / n as f64).cos()))
        .sum();
    s * (2.0 * PI / n as f64)
}
