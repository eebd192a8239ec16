//! Split-step solver for the cubic NLS `-i v_t + Lap v = kappa |v|^2 v` with Dirichlet data on
//! the model half-space, periodized in `y` with period `2 pi l`.
//!
//! The state lives in the Airy-Fourier eigenbasis `e_k(x, m/l) e^{i m y/l} / sqrt(2 pi l)`,
//! where `-Lap e = lambda_{k,m} e`. The linear flow is the exact multiplier
//! `e^{i lambda dt}`; the cubic term is a pointwise phase rotation on a Gauss-Legendre
//! `x` grid times a uniform `y` grid, followed by projection back onto the retained modes.
//! The `m = 0` row carries no confined modes (`q(0) = 0`) and is not represented, so data
//! should live on odd `m`, a set the cubic term preserves.
//!
//! Checkpoints are little-endian binary:
//!
//! | bytes | content |
//! |---|---|
//! | 8 | magic `CVXNLS01` |
//! | 8 | time, f64 |
//! | 8 | period scale `l`, f64 |
//! | 8 | `q11`, f64 |
//! | 8 | `x_max`, f64 |
//! | 4 | row count, u32 |
//!
//! followed, per row, by `m` (i64), the mode count `K` (u32) and `K` pairs of f64 `(re, im)`.

use crate::airy::AiryZeroTable;
use crate::error::{Error, Result};
use crate::model::{eigen_norm, QuadraticForm};
use crate::quad::{linear_fit, Panels};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::{Read, Write};
use std::sync::Arc;

/// Distance kept between the last turning point and the end of the `x` interval.
pub const TAIL_BUFFER: f64 = 5.0;

const MAGIC: &[u8; 8] = b"CVXNLS01";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DomainConfig {
    pub x_max: f64,
    /// Gauss-Legendre panels of 16 nodes on `[0, x_max]`.
    pub x_panels: usize,
    /// `l` in the period `2 pi l`.
    pub period_scale: f64,
    /// Fourier modes `m` in `[-n_y/2, n_y/2]`, `m != 0`.
    pub n_y: usize,
    pub k_max: usize,
    /// Coefficient of the planar form `q(theta) = q11 theta^2`.
    pub q11: f64,
    /// Keep only rows with `m` in this closed range.
    pub m_band: Option<[i64; 2]>,
}

impl Default for DomainConfig {
    fn default() -> Self {
        DomainConfig { x_max: 20.0, x_panels: 40, period_scale: 1.0, n_y: 8, k_max: 12, q11: 1.0, m_band: None }
    }
}

/// Retained modes of one Fourier row.
#[derive(Debug, Clone)]
pub struct ModeRow {
    pub m: i64,
    pub theta: f64,
    pub lambdas: Vec<f64>,
    /// `e_k(x_i)` stored row-major, `k` outer.
    basis: Vec<f64>,
}

impl ModeRow {
    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    pub fn basis(&self, k: usize) -> &[f64] {
        let n = self.basis.len() / self.len().max(1);
        &self.basis[k * n..(k + 1) * n]
    }
}

/// Truncated domain with precomputed transform tables.
pub struct PeriodizedDomain {
    pub cfg: DomainConfig,
    pub x: Vec<f64>,
    pub wx: Vec<f64>,
    /// Points of the uniform `y` grid; more than `2 n_y` so the cubic term does not alias
    /// back onto retained rows.
    pub n_grid_y: usize,
    pub rows: Vec<ModeRow>,
    pub gram_defect: f64,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for PeriodizedDomain {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PeriodizedDomain")
            .field("cfg", &self.cfg)
            .field("n_x", &self.x.len())
            .field("n_grid_y", &self.n_grid_y)
            .field("modes", &self.mode_count())
            .field("gram_defect", &self.gram_defect)
            .finish()
    }
}

/// Values on the `x` by `y` tensor grid, index `ix * n_grid_y + iy`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    pub values: Vec<Complex64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralState {
    pub time: f64,
    /// One vector per domain row, in the row order of the domain.
    pub coeffs: Vec<Vec<Complex64>>,
}

impl SpectralState {
    pub fn zeros(domain: &PeriodizedDomain) -> Self {
        SpectralState { time: 0.0, coeffs: domain.rows.iter().map(|r| vec![Complex64::new(0.0, 0.0); r.len()]).collect() }
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().flatten().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    /// `max |a - b|` over all coefficients.
    pub fn max_diff(&self, other: &SpectralState) -> f64 {
        self.coeffs
            .iter()
            .flatten()
            .zip(other.coeffs.iter().flatten())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

pub fn build_transform(cfg: &DomainConfig, table: &AiryZeroTable) -> Result<PeriodizedDomain> {
    if !(cfg.x_max > TAIL_BUFFER) || cfg.x_panels == 0 || cfg.n_y < 2 || cfg.k_max == 0 || !(cfg.q11 > 0.0) || !(cfg.period_scale > 0.0) {
        return Err(Error::Precondition(format!("invalid domain {cfg:?}")));
    }
    if cfg.k_max > table.len() {
        return Err(Error::Precondition(format!("k_max = {} exceeds the zero table", cfg.k_max)));
    }
    let panels = Panels::new(0.0, cfg.x_max, cfg.x_panels, 16);
    let half = (cfg.n_y / 2) as i64;
    let limit = cfg.x_max - TAIL_BUFFER;
    let [band_lo, band_hi] = cfg.m_band.unwrap_or([-half, half]);
    let ms: Vec<i64> = (-half..=half).filter(|&m| m != 0 && (band_lo..=band_hi).contains(&m)).collect();
    if ms.is_empty() {
        return Err(Error::Precondition(format!("no Fourier row left in band {:?} with n_y = {}", cfg.m_band, cfg.n_y)));
    }
    let mut rows = Vec::with_capacity(ms.len());
    for m in ms {
        let theta = m as f64 / cfg.period_scale;
        let q = cfg.q11 * theta * theta;
        let q13 = q.cbrt();
        let turning = table.omega(cfg.k_max) / q13;
        if turning >= limit {
            return Err(Error::TurningPointOverflow { k: cfg.k_max, turning, limit });
        }
        let mut lambdas = Vec::with_capacity(cfg.k_max);
        let mut basis = Vec::with_capacity(cfg.k_max * panels.len());
        for k in 1..=cfg.k_max {
            let e = &table.entries[k - 1];
            lambdas.push(theta * theta + e.omega * q13 * q13);
            let norm = eigen_norm(q, e.lprime);
            basis.extend(panels.nodes.iter().map(|&x| norm * crate::airy::ai(x * q13 - e.omega)));
        }
        rows.push(ModeRow { m, theta, lambdas, basis });
    }
    let n_grid_y = 2 * cfg.n_y + 2;
    let mut planner = FftPlanner::new();
    let mut domain = PeriodizedDomain {
        cfg: cfg.clone(),
        x: panels.nodes,
        wx: panels.weights,
        n_grid_y,
        rows,
        gram_defect: 0.0,
        fft: planner.plan_fft_forward(n_grid_y),
        ifft: planner.plan_fft_inverse(n_grid_y),
    };
    domain.gram_defect = domain.gram();
    if domain.gram_defect > 1e-8 {
        return Err(Error::NonConvergence {
            what: format!("x quadrature: Gram matrix off identity by {:.2e}; raise x_panels", domain.gram_defect),
        });
    }
    Ok(domain)
}

impl PeriodizedDomain {
    pub fn mode_count(&self) -> usize {
        self.rows.iter().map(|r| r.len()).sum()
    }

    fn gram(&self) -> f64 {
        self.rows
            .par_iter()
            .map(|r| {
                let mut worst = 0.0f64;
                for j in 0..r.len() {
                    for k in j..r.len() {
                        let g: f64 = r.basis(j).iter().zip(r.basis(k)).zip(&self.wx).map(|((a, b), w)| a * b * w).sum();
                        let target = if j == k { 1.0 } else { 0.0 };
                        worst = worst.max((g - target).abs());
                    }
                }
                worst
            })
            .reduce(|| 0.0, f64::max)
    }

    pub fn y_nodes(&self) -> Vec<f64> {
        let p = 2.0 * PI * self.cfg.period_scale;
        (0..self.n_grid_y).map(|j| p * j as f64 / self.n_grid_y as f64).collect()
    }

    fn bin(&self, m: i64) -> usize {
        m.rem_euclid(self.n_grid_y as i64) as usize
    }

    pub fn row_index(&self, m: i64) -> Option<usize> {
        self.rows.iter().position(|r| r.m == m)
    }

    pub fn to_physical(&self, state: &SpectralState) -> Result<Grid> {
        self.check_state(state)?;
        let nx = self.x.len();
        let ny = self.n_grid_y;
        let scale = 1.0 / (2.0 * PI * self.cfg.period_scale).sqrt();
        // Per row, the x profile f_m(x_i) = sum_k c_k e_k(x_i).
        let profiles: Vec<Vec<Complex64>> = self
            .rows
            .par_iter()
            .zip(&state.coeffs)
            .map(|(r, c)| {
                let mut f = vec![Complex64::new(0.0, 0.0); nx];
                for (k, ck) in c.iter().enumerate() {
                    if ck.re == 0.0 && ck.im == 0.0 {
                        continue;
                    }
                    for (fi, &b) in f.iter_mut().zip(r.basis(k)) {
                        *fi += ck * b;
                    }
                }
                f
            })
            .collect();
        let mut values = vec![Complex64::new(0.0, 0.0); nx * ny];
        values.par_chunks_mut(ny).enumerate().for_each(|(ix, line)| {
            for (r, p) in self.rows.iter().zip(&profiles) {
                line[self.bin(r.m)] += p[ix] * scale;
            }
            self.ifft.process(line);
        });
        Ok(Grid { nx, ny, values })
    }

    /// Projection onto the retained modes, with warnings for content at the edge rows.
    pub fn to_spectral(&self, grid: &Grid) -> Result<(SpectralState, Vec<String>)> {
        let nx = self.x.len();
        let ny = self.n_grid_y;
        if grid.nx != nx || grid.ny != ny || grid.values.len() != nx * ny {
            return Err(Error::Shape { expected: nx * ny, got: grid.values.len() });
        }
        let mut lines = grid.values.clone();
        lines.par_chunks_mut(ny).for_each(|line| self.fft.process(line));
        let scale = (2.0 * PI * self.cfg.period_scale).sqrt() / ny as f64;
        let coeffs: Vec<Vec<Complex64>> = self
            .rows
            .par_iter()
            .map(|r| {
                let b = self.bin(r.m);
                let prof: Vec<Complex64> = (0..nx).map(|ix| lines[ix * ny + b] * scale * self.wx[ix]).collect();
                (0..r.len()).map(|k| r.basis(k).iter().zip(&prof).map(|(&e, p)| p * e).sum()).collect()
            })
            .collect();
        let state = SpectralState { time: 0.0, coeffs };
        let warnings = self.aliasing_warnings(&state);
        Ok((state, warnings))
    }

    /// Rows at `|m| = n_y/2` are the last ones kept; content there is likely truncated.
    pub fn aliasing_warnings(&self, state: &SpectralState) -> Vec<String> {
        let total = mass(state);
        let edge = (self.cfg.n_y / 2) as i64;
        self.rows
            .iter()
            .zip(&state.coeffs)
            .filter(|(r, _)| r.m.abs() == edge)
            .filter_map(|(r, c)| {
                let e: f64 = c.iter().map(|v| v.norm_sqr()).sum();
                (e > 1e-12 * total.max(1e-300)).then(|| format!("aliasing: mass {e:.3e} at edge row m = {}", r.m))
            })
            .collect()
    }

    /// Discrete `L^2` norm squared on the grid.
    pub fn grid_mass(&self, grid: &Grid) -> f64 {
        let dy = 2.0 * PI * self.cfg.period_scale / self.n_grid_y as f64;
        grid.values.chunks(grid.ny).zip(&self.wx).map(|(line, w)| w * dy * line.iter().map(|v| v.norm_sqr()).sum::<f64>()).sum()
    }

    fn grid_quartic(&self, grid: &Grid) -> f64 {
        let dy = 2.0 * PI * self.cfg.period_scale / self.n_grid_y as f64;
        grid.values.chunks(grid.ny).zip(&self.wx).map(|(line, w)| w * dy * line.iter().map(|v| v.norm_sqr().powi(2)).sum::<f64>()).sum()
    }

    fn check_state(&self, state: &SpectralState) -> Result<()> {
        if state.coeffs.len() != self.rows.len() {
            return Err(Error::Shape { expected: self.rows.len(), got: state.coeffs.len() });
        }
        for (r, c) in self.rows.iter().zip(&state.coeffs) {
            if c.len() != r.len() {
                return Err(Error::Shape { expected: r.len(), got: c.len() });
            }
        }
        Ok(())
    }

    /// The planar form the domain was built with.
    pub fn form(&self) -> QuadraticForm {
        QuadraticForm::planar(self.cfg.q11).expect("validated at build time")
    }

    /// Projection of `f(x, y)` onto the retained modes.
    pub fn project<F: Fn(f64, f64) -> Complex64 + Sync>(&self, f: F) -> Result<SpectralState> {
        let ys = self.y_nodes();
        let ny = self.n_grid_y;
        let mut values = vec![Complex64::new(0.0, 0.0); self.x.len() * ny];
        values.par_chunks_mut(ny).enumerate().for_each(|(ix, line)| {
            for (v, &y) in line.iter_mut().zip(&ys) {
                *v = f(self.x[ix], y);
            }
        });
        Ok(self.to_spectral(&Grid { nx: self.x.len(), ny, values })?.0)
    }
}

/// Evaluates states on a chosen `x` grid and a uniform `y` grid of `ny` points.
pub struct PointSampler {
    pub xs: Vec<f64>,
    pub ny: usize,
    basis: Vec<Vec<f64>>,
    bins: Vec<usize>,
    ifft: Arc<dyn Fft<f64>>,
}

impl PeriodizedDomain {
    pub fn sampler(&self, xs: &[f64], ny: usize) -> Result<PointSampler> {
        let top = self.rows.iter().map(|r| r.m.abs()).max().unwrap_or(0) as usize;
        if ny <= 2 * top {
            return Err(Error::Precondition(format!("{ny} y points cannot resolve |m| = {top}")));
        }
        let table = AiryZeroTable::shared();
        let basis = self
            .rows
            .par_iter()
            .map(|r| {
                let q = self.cfg.q11 * r.theta * r.theta;
                let q13 = q.cbrt();
                let mut b = Vec::with_capacity(r.len() * xs.len());
                for e in &table.entries[..r.len()] {
                    let norm = eigen_norm(q, e.lprime);
                    b.extend(xs.iter().map(|&x| norm * crate::airy::ai(x * q13 - e.omega)));
                }
                b
            })
            .collect();
        let bins = self.rows.iter().map(|r| r.m.rem_euclid(ny as i64) as usize).collect();
        Ok(PointSampler { xs: xs.to_vec(), ny, basis, bins, ifft: FftPlanner::new().plan_fft_inverse(ny) })
    }
}

impl PointSampler {
    /// Values at `(xs[i], 2 pi l j / ny)`, index `i * ny + j`.
    pub fn values(&self, domain: &PeriodizedDomain, state: &SpectralState) -> Result<Vec<Complex64>> {
        domain.check_state(state)?;
        let nx = self.xs.len();
        let scale = 1.0 / (2.0 * PI * domain.cfg.period_scale).sqrt();
        let mut out = vec![Complex64::new(0.0, 0.0); nx * self.ny];
        out.par_chunks_mut(self.ny).enumerate().for_each(|(ix, line)| {
            for ((c, b), &bin) in state.coeffs.iter().zip(&self.basis).zip(&self.bins) {
                let f: Complex64 = c.iter().enumerate().map(|(k, ck)| ck * b[k * nx + ix]).sum();
                line[bin] += f * scale;
            }
            self.ifft.process(line);
        });
        Ok(out)
    }

    pub fn sup(&self, domain: &PeriodizedDomain, state: &SpectralState) -> Result<f64> {
        Ok(self.values(domain, state)?.iter().map(|v| v.norm()).fold(0.0, f64::max))
    }
}

pub fn linear_flow(domain: &PeriodizedDomain, state: &SpectralState, dt: f64) -> SpectralState {
    let coeffs = domain
        .rows
        .iter()
        .zip(&state.coeffs)
        // Rotating in polar form keeps the rounding of |c| unbiased; a fixed multiplier
        // repeated over many steps would drift by its own norm error.
        .map(|(r, c)| c.iter().zip(&r.lambdas).map(|(v, &l)| Complex64::from_polar(v.norm(), v.arg() + l * dt)).collect())
        .collect();
    SpectralState { time: state.time + dt, coeffs }
}

/// Exact flow of `v_t = i kappa |v|^2 v` over `dt`.
pub fn nonlinear_phase(grid: &mut Grid, dt: f64, kappa: f64) {
    grid.values.par_iter_mut().for_each(|v| *v *= Complex64::from_polar(1.0, kappa * v.norm_sqr() * dt));
}

/// Half kick, exact linear flow, half kick.
/// Nonlinear substep in the retained modes: `c <- exp(i A) c` with `A = P (kappa dt |v|^2) P`.
///
/// `A` is Hermitian, so the substep is unitary even though `|v|^2 v` leaves the retained band.
/// `|v|^2` is frozen at the start, which matches the pointwise rotation `e^{i kappa dt |v|^2} v`
/// up to the part projected away.
pub fn galerkin_phase(domain: &PeriodizedDomain, state: &SpectralState, dt: f64, kappa: f64) -> Result<SpectralState> {
    let g = domain.to_physical(state)?;
    let theta: Vec<f64> = g.values.iter().map(|v| kappa * dt * v.norm_sqr()).collect();
    let apply = |s: &SpectralState| -> Result<SpectralState> {
        let mut p = domain.to_physical(s)?;
        for (v, th) in p.values.iter_mut().zip(&theta) {
            *v *= Complex64::new(0.0, *th);
        }
        Ok(domain.to_spectral(&p)?.0)
    };
    let floor = 1e-18 * mass(state).sqrt();
    let mut sum = state.clone();
    let mut term = state.clone();
    for j in 1..=40 {
        term = apply(&term)?;
        let inv = 1.0 / j as f64;
        for (t, s) in term.coeffs.iter_mut().flatten().zip(sum.coeffs.iter_mut().flatten()) {
            *t *= inv;
            *s += *t;
        }
        if mass(&term).sqrt() <= floor {
            break;
        }
    }
    sum.time = state.time;
    Ok(sum)
}

pub fn strang_step(domain: &PeriodizedDomain, state: &SpectralState, dt: f64, kappa: f64) -> Result<SpectralState> {
    if kappa == 0.0 {
        return Ok(linear_flow(domain, state, dt));
    }
    let a = galerkin_phase(domain, state, 0.5 * dt, kappa)?;
    let b = linear_flow(domain, &a, dt);
    galerkin_phase(domain, &b, 0.5 * dt, kappa)
}

pub fn mass(state: &SpectralState) -> f64 {
    state.coeffs.iter().flatten().map(|c| c.norm_sqr()).sum()
}

/// `sum lambda |c|^2 / 2 + kappa/4 int |v|^4`.
pub fn energy(domain: &PeriodizedDomain, state: &SpectralState, kappa: f64) -> Result<f64> {
    let kinetic: f64 = domain
        .rows
        .iter()
        .zip(&state.coeffs)
        .map(|(r, c)| c.iter().zip(&r.lambdas).map(|(v, l)| l * v.norm_sqr()).sum::<f64>())
        .sum();
    let potential = if kappa == 0.0 { 0.0 } else { domain.grid_quartic(&domain.to_physical(state)?) };
    Ok(0.5 * kinetic + 0.25 * kappa * potential)
}

/// `(sum (1 + lambda)^m |c|^2)^{1/2}`.
pub fn hm_norm(domain: &PeriodizedDomain, state: &SpectralState, order: u32) -> f64 {
    domain
        .rows
        .iter()
        .zip(&state.coeffs)
        .map(|(r, c)| c.iter().zip(&r.lambdas).map(|(v, l)| (1.0 + l).powi(order as i32) * v.norm_sqr()).sum::<f64>())
        .sum::<f64>()
        .sqrt()
}

/// Largest `|v(0, y)|` over the `y` grid.
pub fn boundary_trace(domain: &PeriodizedDomain, state: &SpectralState) -> Result<f64> {
    // Evaluate the expansion at x = 0 directly; the quadrature grid has no node there.
    let table = AiryZeroTable::shared();
    let ny = domain.n_grid_y;
    let scale = 1.0 / (2.0 * PI * domain.cfg.period_scale).sqrt();
    let mut line = vec![Complex64::new(0.0, 0.0); ny];
    for (r, c) in domain.rows.iter().zip(&state.coeffs) {
        let q = domain.cfg.q11 * r.theta * r.theta;
        let f: Complex64 = c
            .iter()
            .enumerate()
            .map(|(k, ck)| {
                let e = &table.entries[k];
                ck * eigen_norm(q, e.lprime) * crate::airy::ai(-e.omega)
            })
            .sum();
        line[domain.bin(r.m)] += f * scale;
    }
    domain.ifft.process(&mut line);
    Ok(line.iter().map(|v| v.norm()).fold(0.0, f64::max))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub t: f64,
    pub mass: f64,
    pub energy: f64,
    pub h1: f64,
    pub hm: BTreeMap<u32, f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ObservableSeries {
    pub samples: Vec<Observation>,
}

impl ObservableSeries {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let orders: Vec<u32> = self.samples.first().map(|s| s.hm.keys().copied().collect()).unwrap_or_default();
        let mut header = vec!["t".to_string(), "mass".into(), "energy".into(), "h1".into()];
        header.extend(orders.iter().map(|m| format!("h{m}")));
        w.write_record(&header)?;
        for s in &self.samples {
            let mut rec = vec![format!("{:.17e}", s.t), format!("{:.17e}", s.mass), format!("{:.17e}", s.energy), format!("{:.17e}", s.h1)];
            rec.extend(orders.iter().map(|m| format!("{:.17e}", s.hm[m])));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the layout written by [`ObservableSeries::write_csv`].
    pub fn read_csv<R: std::io::Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        if header.len() < 4 || header[..4] != ["t", "mass", "energy", "h1"] {
            return Err(Error::Precondition(format!("unexpected series header {header:?}")));
        }
        let orders: Vec<u32> = header[4..]
            .iter()
            .map(|c| c.strip_prefix('h').and_then(|m| m.parse().ok()).ok_or_else(|| Error::Precondition(format!("bad column {c}"))))
            .collect::<Result<_>>()?;
        let mut samples = Vec::new();
        for (row, rec) in r.records().enumerate() {
            let rec = rec?;
            let vals: Vec<f64> = rec
                .iter()
                .map(|v| v.trim().parse::<f64>().map_err(|_| Error::Precondition(format!("row {}: bad number {v:?}", row + 1))))
                .collect::<Result<_>>()?;
            if vals.len() != header.len() {
                return Err(Error::Shape { expected: header.len(), got: vals.len() });
            }
            let hm = orders.iter().copied().zip(vals[4..].iter().copied()).collect();
            samples.push(Observation { t: vals[0], mass: vals[1], energy: vals[2], h1: vals[3], hm });
        }
        Ok(ObservableSeries { samples })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolveConfig {
    pub t_end: f64,
    pub dt: f64,
    pub kappa: f64,
    /// Observation cadence in time units; zero records only the endpoints.
    pub observe_every: f64,
    /// Sobolev orders recorded besides `h1`.
    pub orders: Vec<u32>,
    /// Focusing runs need the initial mass below this.
    pub focusing_mass_limit: f64,
}

impl Default for EvolveConfig {
    fn default() -> Self {
        EvolveConfig { t_end: 1.0, dt: 1e-3, kappa: 1.0, observe_every: 0.01, orders: vec![2], focusing_mass_limit: 0.1 }
    }
}

#[derive(Debug, Clone)]
pub struct EvolveOutcome {
    /// Last state with finite coefficients.
    pub state: SpectralState,
    pub series: ObservableSeries,
    /// Time at which a non-finite value appeared, if the run stopped early.
    pub aborted_at: Option<f64>,
}

pub fn observe(domain: &PeriodizedDomain, state: &SpectralState, kappa: f64, orders: &[u32]) -> Result<Observation> {
    Ok(Observation {
        t: state.time,
        mass: mass(state),
        energy: energy(domain, state, kappa)?,
        h1: hm_norm(domain, state, 1),
        hm: orders.iter().filter(|&&m| m != 1).map(|&m| (m, hm_norm(domain, state, m))).collect(),
    })
}

pub fn evolve(domain: &PeriodizedDomain, initial: &SpectralState, cfg: &EvolveConfig) -> Result<EvolveOutcome> {
    if !(cfg.dt > 0.0) || !(cfg.t_end >= 0.0) || !cfg.dt.is_finite() {
        return Err(Error::Precondition(format!("dt = {} and t_end = {} must be positive", cfg.dt, cfg.t_end)));
    }
    if ![-1.0, 0.0, 1.0].contains(&cfg.kappa) {
        return Err(Error::Precondition(format!("kappa must be -1, 0 or 1, got {}", cfg.kappa)));
    }
    if cfg.kappa < 0.0 && mass(initial) > cfg.focusing_mass_limit {
        return Err(Error::Precondition(format!(
            "focusing run needs mass <= {}, data has {}",
            cfg.focusing_mass_limit,
            mass(initial)
        )));
    }
    let steps = (cfg.t_end / cfg.dt).round() as usize;
    let every = if cfg.observe_every > 0.0 { ((cfg.observe_every / cfg.dt).round() as usize).max(1) } else { steps.max(1) };
    let mut series = ObservableSeries::default();
    let mut state = initial.clone();
    series.samples.push(observe(domain, &state, cfg.kappa, &cfg.orders)?);
    for i in 1..=steps {
        let mut next = strang_step(domain, &state, cfg.dt, cfg.kappa)?;
        next.time = initial.time + i as f64 * cfg.dt;
        if !next.is_finite() {
            return Ok(EvolveOutcome { state, series, aborted_at: Some(next.time) });
        }
        state = next;
        if i % every == 0 || i == steps {
            series.samples.push(observe(domain, &state, cfg.kappa, &cfg.orders)?);
        }
    }
    Ok(EvolveOutcome { state, series, aborted_at: None })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrowthReport {
    pub order: u32,
    pub rate: f64,
    pub intercept: f64,
    /// Largest excess of `log ||v||_{H^m}` over the fitted line.
    pub max_excess: f64,
    pub pass: bool,
}

/// Affine envelope of `log ||v(t)||_{H^m}`; passes when no sample rises `log 2` above it.
pub fn growth_report(series: &ObservableSeries, order: u32) -> Result<GrowthReport> {
    let s = &series.samples;
    if s.len() < 3 || s.last().unwrap().t - s[0].t < 10.0 - 1e-9 {
        return Err(Error::Precondition("growth report needs a series spanning at least 10 time units".into()));
    }
    let ts: Vec<f64> = s.iter().map(|o| o.t).collect();
    let ls: Vec<f64> = s
        .iter()
        .map(|o| if order == 1 { o.h1 } else { *o.hm.get(&order).unwrap_or(&f64::NAN) })
        .map(f64::ln)
        .collect();
    if ls.iter().any(|v| !v.is_finite()) {
        return Err(Error::Precondition(format!("series has no finite H^{order} record")));
    }
    let (rate, intercept, _) = linear_fit(&ts, &ls);
    let max_excess = ts.iter().zip(&ls).map(|(t, l)| l - (intercept + rate * t)).fold(f64::MIN, f64::max);
    Ok(GrowthReport { order, rate, intercept, max_excess, pass: max_excess <= 2f64.ln() })
}

/// First Airy mode in the rows `m = +-m0`, with total mass `amplitude^2`.
pub fn gallery_state(domain: &PeriodizedDomain, m0: i64, amplitude: f64) -> Result<SpectralState> {
    let mut s = SpectralState::zeros(domain);
    for m in [m0, -m0] {
        let i = domain.row_index(m).ok_or_else(|| Error::Precondition(format!("row m = {m} is not retained")))?;
        s.coeffs[i][0] = Complex64::new(amplitude / 2f64.sqrt(), 0.0);
    }
    Ok(s)
}

/// Random coefficients on odd rows and modes `k <= k_hi`, scaled to mass `amplitude^2`.
pub fn random_state(domain: &PeriodizedDomain, seed: u64, k_hi: usize, amplitude: f64) -> SpectralState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = SpectralState::zeros(domain);
    for (r, c) in domain.rows.iter().zip(s.coeffs.iter_mut()) {
        let edge = r.m.abs() as usize == domain.cfg.n_y / 2;
        if r.m % 2 == 0 || edge {
            continue;
        }
        for (k, v) in c.iter_mut().enumerate().take(k_hi) {
            // Decaying spectrum keeps the data smooth.
            let decay = 1.0 / (1.0 + (k * k) as f64 + (r.m * r.m) as f64);
            *v = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * decay;
        }
    }
    let m = mass(&s).sqrt();
    for v in s.coeffs.iter_mut().flatten() {
        *v *= amplitude / m;
    }
    s
}

pub fn write_checkpoint<W: Write>(domain: &PeriodizedDomain, state: &SpectralState, mut out: W) -> Result<()> {
    domain.check_state(state)?;
    out.write_all(MAGIC)?;
    for v in [state.time, domain.cfg.period_scale, domain.cfg.q11, domain.cfg.x_max] {
        out.write_all(&v.to_le_bytes())?;
    }
    out.write_all(&(domain.rows.len() as u32).to_le_bytes())?;
    for (r, c) in domain.rows.iter().zip(&state.coeffs) {
        out.write_all(&r.m.to_le_bytes())?;
        out.write_all(&(c.len() as u32).to_le_bytes())?;
        for v in c {
            out.write_all(&v.re.to_le_bytes())?;
            out.write_all(&v.im.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_checkpoint<R: Read>(domain: &PeriodizedDomain, mut input: R) -> Result<SpectralState> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Domain("not a checkpoint file".into()));
    }
    let mut f8 = [0u8; 8];
    let mut u4 = [0u8; 4];
    let next_f64 = |input: &mut R, buf: &mut [u8; 8]| -> Result<f64> {
        input.read_exact(buf)?;
        Ok(f64::from_le_bytes(*buf))
    };
    let time = next_f64(&mut input, &mut f8)?;
    let header = [next_f64(&mut input, &mut f8)?, next_f64(&mut input, &mut f8)?, next_f64(&mut input, &mut f8)?];
    if header != [domain.cfg.period_scale, domain.cfg.q11, domain.cfg.x_max] {
        return Err(Error::Domain(format!("checkpoint domain {header:?} does not match")));
    }
    input.read_exact(&mut u4)?;
    let rows = u32::from_le_bytes(u4) as usize;
    if rows != domain.rows.len() {
        return Err(Error::Shape { expected: domain.rows.len(), got: rows });
    }
    let mut coeffs = Vec::with_capacity(rows);
    for r in &domain.rows {
        input.read_exact(&mut f8)?;
        let m = i64::from_le_bytes(f8);
        if m != r.m {
            return Err(Error::Domain(format!("checkpoint row m = {m}, domain has {}", r.m)));
        }
        input.read_exact(&mut u4)?;
        let k = u32::from_le_bytes(u4) as usize;
        if k != r.len() {
            return Err(Error::Shape { expected: r.len(), got: k });
        }
        let mut c = Vec::with_capacity(k);
        for _ in 0..k {
            let re = next_f64(&mut input, &mut f8)?;
            let im = next_f64(&mut input, &mut f8)?;
            c.push(Complex64::new(re, im));
        }
        coeffs.push(c);
    }
    Ok(SpectralState { time, coeffs })
}
