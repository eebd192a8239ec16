//! Parameter sweeps, sup-norm scans, decay fits and the bound checks built on them.
//!
//! Every check returns a [`BoundReport`]. Bounds with unquantified constants are tested
//! by ratio spread: the ratio of the measured quantity to the bound shape must stay within
//! a factor [`RATIO_SPREAD`] across the sweep.

use crate::airy::{self, AiryZeroTable};
use crate::error::{Error, Result};
use crate::green_reflection::{k_fun, swallowtail_locus, v_scale, Reflection, ReflectionConfig};
use crate::green_spectral::{linspace, GreenField, Spectral, SpectralConfig, SupPoint, Weighting};
use crate::model::{eigen_norm, psi, Block, DyadicLadder, ModelParams, QuadraticForm};
use crate::nls::{build_transform, linear_flow, mass, DomainConfig, PeriodizedDomain, SpectralState};
use crate::quad::linear_fit;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;

/// Largest accepted max/min ratio for a single fitted constant.
pub const RATIO_SPREAD: f64 = 10.0;
/// Upper end of the validated time range.
pub const T0: f64 = 1.0;

/// The `y` annulus `|y| / 2t in [1/4, 2]` on the negative side, where the parametrix lives.
pub fn annulus(t: f64, n: usize) -> Vec<f64> {
    linspace(-4.0 * t, -0.5 * t, n)
}

pub fn sup_field(field: &GreenField) -> SupPoint {
    field.sup()
}

/// `max / min` of positive values.
pub fn spread(values: &[f64]) -> f64 {
    let (lo, hi) = values.iter().fold((f64::MAX, 0.0f64), |(l, u), &v| (l.min(v), u.max(v)));
    if values.is_empty() || lo <= 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub exponent: f64,
    pub log_constant: f64,
    pub r_squared: f64,
    pub window: (f64, f64),
}

/// Least-squares slope of `log value` against `log t`.
pub fn fit_decay(series: &[(f64, f64)]) -> Result<DecayFit> {
    fit_decay_spread(series, 0.5)
}

/// [`fit_decay`] with a configurable minimum spread of `t`, in decades.
pub fn fit_decay_spread(series: &[(f64, f64)], min_decades: f64) -> Result<DecayFit> {
    if series.len() < 5 {
        return Err(Error::DegenerateFit(format!("{} points, at least 5 needed", series.len())));
    }
    let fit = power_fit(series)?;
    let decades = (fit.window.1 / fit.window.0).log10();
    if decades < min_decades {
        return Err(Error::DegenerateFit(format!("t spans {decades:.3} decades, at least {min_decades} needed")));
    }
    Ok(fit)
}

/// Power-law fit without the point-count and spread policy of [`fit_decay`].
pub fn power_fit(series: &[(f64, f64)]) -> Result<DecayFit> {
    if series.len() < 2 || series.iter().any(|&(t, v)| !(t > 0.0) || !(v > 0.0)) {
        return Err(Error::DegenerateFit("power fit needs two or more positive points".into()));
    }
    let lx: Vec<f64> = series.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = series.iter().map(|p| p.1.ln()).collect();
    let (exponent, log_constant, r_squared) = linear_fit(&lx, &ly);
    let lo = series.iter().map(|p| p.0).fold(f64::MAX, f64::min);
    let hi = series.iter().map(|p| p.0).fold(0.0, f64::max);
    Ok(DecayFit { exponent, log_constant, r_squared: r_squared.clamp(0.0, 1.0), window: (lo, hi) })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvaluatorKind {
    Spectral,
    Reflection,
    /// Only the reflection-free packet.
    Free,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    Tangential,
    Transverse,
    Gallery,
    SmallA,
}

/// Receiver depths scanned: `[0, a]`, or `[0, 2a]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum XSpan {
    Half,
    Full,
}

fn default_tol() -> f64 {
    1e-6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub evaluator: EvaluatorKind,
    pub regime: Regime,
    pub h: f64,
    pub a: f64,
    pub eps0: f64,
    pub t_list: Vec<f64>,
    pub x_span: XSpan,
    pub nx: usize,
    pub ny: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default)]
    pub max_nodes: Option<usize>,
    /// Overrides `x_span` with the scan `[0, x_max]`.
    #[serde(default)]
    pub x_max: Option<f64>,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.t_list.is_empty() || self.t_list.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Precondition("t_list must be nonempty and strictly increasing".into()));
        }
        if let Some(&t) = self.t_list.iter().find(|&&t| !(t > self.h && t <= T0)) {
            return Err(Error::Precondition(format!("t = {t} outside (h, T0] = ({}, {T0}]", self.h)));
        }
        if self.x_max.is_some_and(|x| !(x > 0.0)) {
            return Err(Error::Precondition("x_max must be positive".into()));
        }
        if self.nx < 2 || self.ny < 2 {
            return Err(Error::Precondition("grids need at least two points per axis".into()));
        }
        Ok(())
    }

    pub fn params(&self) -> ModelParams {
        ModelParams::new(self.h, self.a, self.eps0)
    }

    pub fn xs(&self) -> Vec<f64> {
        let top = match (self.x_max, self.x_span) {
            (Some(x), _) => x,
            (None, XSpan::Half) => self.a,
            (None, XSpan::Full) => 2.0 * self.a,
        };
        linspace(0.0, top, self.nx)
    }

    /// Field of the given weighting at time `t` on the sweep grid.
    pub fn field(&self, form: &QuadraticForm, t: f64, weighting: Weighting) -> Result<GreenField> {
        self.field_at(form, t, &self.xs(), &annulus(t, self.ny), weighting)
    }

    pub fn field_at(&self, form: &QuadraticForm, t: f64, xs: &[f64], ys: &[f64], weighting: Weighting) -> Result<GreenField> {
        let table = AiryZeroTable::shared();
        match self.evaluator {
            EvaluatorKind::Spectral => {
                let mut cfg = SpectralConfig { tol: self.tol, ..Default::default() };
                if let Some(n) = self.max_nodes {
                    cfg.max_nodes = n;
                }
                Spectral::new(self.params(), form, table, cfg)?.field(t, xs, ys, weighting)
            }
            EvaluatorKind::Reflection | EvaluatorKind::Free => {
                let mut cfg = ReflectionConfig { tol: self.tol, ..Default::default() };
                if let Some(n) = self.max_nodes {
                    cfg.max_nodes = n;
                }
                let r = Reflection::new(self.params(), form, table, cfg)?;
                if self.evaluator == EvaluatorKind::Free {
                    r.free_field(t, xs, ys, weighting)
                } else {
                    Ok(r.brute(t, xs, ys, weighting)?.total)
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub t: f64,
    pub sup: f64,
    pub x: f64,
    pub y: f64,
    /// The maximum sits on the edge of the grid; refine or widen before trusting it.
    pub on_boundary: bool,
}

impl SweepPoint {
    fn from_sup(t: f64, s: &SupPoint) -> Self {
        SweepPoint { t, sup: s.sup, x: s.x, y: s.y, on_boundary: s.on_boundary }
    }
}

/// Sup of the field over the sweep grid at every listed time.
pub fn run_sweep(spec: &SweepSpec, form: &QuadraticForm, weighting: Weighting) -> Result<Vec<SweepPoint>> {
    spec.validate()?;
    spec.t_list.iter().map(|&t| Ok(SweepPoint::from_sup(t, &spec.field(form, t, weighting)?.sup()))).collect()
}

pub fn write_sweep_csv<W: Write>(points: &[SweepPoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "sup", "x", "y", "on_boundary"])?;
    for p in points {
        w.write_record([format!("{:.17e}", p.t), format!("{:.17e}", p.sup), format!("{:.17e}", p.x), format!("{:.17e}", p.y), p.on_boundary.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    Pass,
    Fail,
}

impl Verdict {
    pub fn from_bool(ok: bool) -> Self {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub claim: String,
    pub regime: String,
    pub params: serde_json::Value,
    pub ratios: Vec<f64>,
    pub fit: Option<DecayFit>,
    pub verdict: Verdict,
    #[serde(default)]
    pub notes: Vec<String>,
    #[serde(default)]
    pub points: Vec<SweepPoint>,
}

impl BoundReport {
    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    pub fn write_json<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer_pretty(out, self)?;
        Ok(())
    }

    /// One line: claim, verdict and the notes.
    pub fn summary(&self) -> String {
        format!("{} [{}] {:?}: {}", self.claim, self.regime, self.verdict, self.notes.join("; "))
    }
}

fn params_json<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).unwrap_or(serde_json::Value::Null)
}

/// `h^{-2} (h/t)^{3/4}`, the `d = 2` upper bound shape.
pub fn upper_bound_scale(h: f64, t: f64) -> f64 {
    (h / t).powf(0.75) / (h * h)
}

/// Ratios `sup / [h^{-2} (h/t)^{3/4}]` over the sweep, judged by their spread.
pub fn verify_dispersion_upper(spec: &SweepSpec, form: &QuadraticForm) -> Result<BoundReport> {
    let points = run_sweep(spec, form, Weighting::Total)?;
    let ratios: Vec<f64> = points.iter().map(|p| p.sup / upper_bound_scale(spec.h, p.t)).collect();
    let s = spread(&ratios);
    let fit = fit_decay(&points.iter().map(|p| (p.t, p.sup)).collect::<Vec<_>>()).ok();
    let mut notes = vec![format!("ratio spread {s:.3} (limit {RATIO_SPREAD}), fitted C = {:.4e}", ratios.iter().fold(0.0f64, |m, &r| m.max(r)))];
    let edge = points.iter().filter(|p| p.on_boundary).count();
    if edge > 0 {
        notes.push(format!("{edge} maxima on the grid edge"));
    }
    Ok(BoundReport {
        claim: "dispersion upper bound h^-2 (h/t)^(3/4)".into(),
        regime: format!("{:?}", spec.regime).to_lowercase(),
        params: params_json(spec),
        ratios,
        fit,
        verdict: Verdict::from_bool(s < RATIO_SPREAD),
        notes,
        points,
    })
}

/// Decay of the reflection-free packet, expected at `-d/2 = -1`.
pub fn verify_free_decay(spec: &SweepSpec, form: &QuadraticForm) -> Result<BoundReport> {
    let spec = SweepSpec { evaluator: EvaluatorKind::Free, ..spec.clone() };
    let points = run_sweep(&spec, form, Weighting::Total)?;
    let fit = fit_decay(&points.iter().map(|p| (p.t, p.sup)).collect::<Vec<_>>())?;
    Ok(BoundReport {
        claim: "free decay exponent -1".into(),
        regime: "free".into(),
        params: params_json(&spec),
        ratios: points.iter().map(|p| p.sup * spec.h * spec.h * (p.t / spec.h)).collect(),
        fit: Some(fit),
        verdict: Verdict::from_bool((fit.exponent + 1.0).abs() <= 0.05),
        notes: vec![format!("exponent {:.4}", fit.exponent)],
        points,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SaturationSpec {
    pub sweep: SweepSpec,
    /// Source depths for the prefactor fit.
    pub a_list: Vec<f64>,
    /// Time at which the prefactor is fitted.
    pub a_fit_t: f64,
    /// Minimum `t` spread of the exponent fit, in decades.
    pub min_decades: f64,
}

/// Refuses `t` outside `sqrt(a) <= t` and `t h^{1/3} <= a`, the weak form of `t h^{1/3} << a`.
pub fn saturation_window(h: f64, a: f64, ts: &[f64]) -> Result<()> {
    for &t in ts {
        if t < a.sqrt() - 1e-12 {
            return Err(Error::Precondition(format!("saturation window needs sqrt(a) <= t: sqrt({a}) = {:.4} > t = {t}", a.sqrt())));
        }
        if t * h.cbrt() > a {
            return Err(Error::Precondition(format!("saturation window needs t h^(1/3) << a: t h^(1/3) = {:.4} > a = {a} at t = {t}", t * h.cbrt())));
        }
    }
    Ok(())
}

/// `y < 0` points of the `K_a = 1` loci at time `t` for every reflection count that has one.
pub fn locus_points(form: &QuadraticForm, a: f64, t: f64) -> Vec<(i64, f64)> {
    let top = (t / a.sqrt()).ceil() as i64 + 1;
    (1..=top).filter_map(|n| swallowtail_locus(form, a, t, n).ok().map(|[y, _]| (n, y))).collect()
}

/// Exponent `-3/4`, prefactor `a^{1/4}` and the position of the maximum on the locus.
pub fn verify_saturation(spec: &SaturationSpec, form: &QuadraticForm) -> Result<BoundReport> {
    let sw = &spec.sweep;
    sw.validate()?;
    saturation_window(sw.h, sw.a, &sw.t_list)?;
    for &a in &spec.a_list {
        saturation_window(sw.h, a, &[spec.a_fit_t])?;
    }
    let xs = sw.xs();
    let dx = xs[1] - xs[0];
    let mut points = Vec::new();
    let mut locus_ok = true;
    let mut notes = Vec::new();
    for &t in &sw.t_list {
        let ys = annulus(t, sw.ny);
        let dy = ys[1] - ys[0];
        let f = sw.field_at(form, t, &xs, &ys, Weighting::Total)?;
        let s = f.sup();
        points.push(SweepPoint::from_sup(t, &s));
        let loci = locus_points(form, sw.a, t);
        let hit = loci.iter().find(|&&(_, y)| (s.y - y).abs() <= dy * (1.0 + 1e-9));
        let at_a = (s.x - sw.a).abs() <= dx * (1.0 + 1e-9);
        if !(at_a && hit.is_some()) {
            locus_ok = false;
        }
        let nearest = loci.iter().map(|&(n, y)| format!("N={n} y={y:.4}")).collect::<Vec<_>>().join(", ");
        notes.push(format!("t={t}: max at ({:.4}, {:.4}); loci [{nearest}]", s.x, s.y));
    }
    let fit = fit_decay_spread(&points.iter().map(|p| (p.t, p.sup)).collect::<Vec<_>>(), spec.min_decades)?;
    let t_ok = (fit.exponent + 0.75).abs() <= 0.05;
    let mut a_series = Vec::new();
    for &a in &spec.a_list {
        let s = SweepSpec { a, ..sw.clone() };
        let f = s.field_at(form, spec.a_fit_t, &s.xs(), &annulus(spec.a_fit_t, sw.ny), Weighting::Total)?;
        a_series.push((a, f.sup().sup));
    }
    let a_fit = power_fit(&a_series)?;
    let a_ok = (a_fit.exponent - 0.25).abs() <= 0.07;
    notes.insert(0, format!("t exponent {:.4} (target -0.75 +- 0.05)", fit.exponent));
    notes.insert(1, format!("a exponent {:.4} at t = {} (target 0.25 +- 0.07)", a_fit.exponent, spec.a_fit_t));
    notes.insert(2, format!("maximum on the locus at x = a: {locus_ok}"));
    // Separation of the swallowtail term from the transverse remainder.
    let eps = ModelParams::new(sw.h, sw.a, sw.eps0);
    let sep = sw.t_list.iter().all(|&t| (sw.h * sw.a / t).powf(0.25) > sw.h.cbrt() * (eps.eps0 / sw.a).ln().max(1.0));
    notes.push(format!("(ha/t)^(1/4) exceeds h^(1/3) log(eps0/a) across the window: {sep}"));
    Ok(BoundReport {
        claim: "saturation (ha/t)^(1/4) loss".into(),
        regime: "tangential".into(),
        params: params_json(spec),
        ratios: points.iter().map(|p| p.sup / (sw.a.powf(0.25) * upper_bound_scale(sw.h, p.t))).collect(),
        fit: Some(fit),
        verdict: Verdict::from_bool(t_ok && a_ok && locus_ok),
        notes,
        points,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransverseSpec {
    pub h: f64,
    pub a: f64,
    pub eps0: f64,
    pub t_list: Vec<f64>,
    pub nx: usize,
    pub ny: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransverseRegime {
    /// `t / sqrt(gamma) >~ lambda_gamma^{1/3}`.
    Late,
    /// `a / gamma <~ t / sqrt(gamma) <~ lambda_gamma^{1/3}`.
    Middle,
    /// Before the first reflection reaches the receiver.
    NoReflection,
    /// Between the no-reflection cut and `a / gamma`; no single bound applies.
    Seam,
}

/// Transverse regime of block `gamma` at time `t`.
pub fn transverse_regime(h: f64, a: f64, gamma: f64, t: f64, m0: f64) -> TransverseRegime {
    let s = t / gamma.sqrt();
    let lam13 = (gamma.powf(1.5) / h).cbrt();
    if s >= lam13 {
        TransverseRegime::Late
    } else if s >= a / gamma {
        TransverseRegime::Middle
    } else if s <= a / gamma / (2.0 * 1.5f64.sqrt() * m0.powf(2.0 / 3.0)) {
        TransverseRegime::NoReflection
    } else {
        TransverseRegime::Seam
    }
}

/// Bound shape of one transverse block in `d = 2`.
pub fn transverse_bound(h: f64, gamma: f64, t: f64, regime: TransverseRegime) -> Option<f64> {
    let base = (h / t).sqrt() / (h * h);
    match regime {
        TransverseRegime::Late => Some(base * (t * h / gamma).sqrt()),
        TransverseRegime::Middle => Some(base * h.cbrt()),
        TransverseRegime::NoReflection => Some(h / t / (h * h)),
        TransverseRegime::Seam => None,
    }
}

/// Bound shape for the sum over blocks `8a < gamma <= eps0`; the branch switches at `t = a / h^{1/3}`.
pub fn transverse_sum_bound(h: f64, a: f64, eps0: f64, t: f64) -> f64 {
    let base = (h / t).sqrt() / (h * h);
    let log = (eps0 / a).ln().max(1.0);
    if t <= a / h.cbrt() {
        base * h.cbrt() * log
    } else {
        base * ((h * t / a).sqrt() + h.cbrt() * log)
    }
}

/// Per-regime ratio tests for the transverse blocks, plus the summed bound.
pub fn verify_transverse(spec: &TransverseSpec, form: &QuadraticForm) -> Result<BoundReport> {
    let params = ModelParams::new(spec.h, spec.a, spec.eps0);
    let eval = Spectral::new(params, form, AiryZeroTable::shared(), SpectralConfig { tol: spec.tol, ..Default::default() })?;
    let blocks: Vec<f64> = DyadicLadder::new(&params)
        .all()
        .into_iter()
        .filter_map(|b| match b {
            Block::Ring(g) if g > 8.0 * spec.a => Some(g),
            _ => None,
        })
        .collect();
    if blocks.is_empty() {
        return Err(Error::Precondition(format!("no block with gamma > 8a = {}", 8.0 * spec.a)));
    }
    let xs = linspace(0.0, spec.a, spec.nx);
    let mut by_regime: std::collections::BTreeMap<String, Vec<f64>> = Default::default();
    let mut sum_ratios = Vec::new();
    let mut points = Vec::new();
    for &t in &spec.t_list {
        let ys = annulus(t, spec.ny);
        let mut block_sum = 0.0;
        for &g in &blocks {
            let f = eval.field(t, &xs, &ys, Weighting::Block(Block::Ring(g)))?;
            let s = f.sup();
            block_sum += s.sup;
            points.push(SweepPoint::from_sup(t, &s));
            let regime = transverse_regime(spec.h, spec.a, g, t, form.m0);
            if let Some(b) = transverse_bound(spec.h, g, t, regime) {
                by_regime.entry(format!("{regime:?}")).or_default().push(s.sup / b);
            }
        }
        if t >= spec.a {
            sum_ratios.push(block_sum / transverse_sum_bound(spec.h, spec.a, spec.eps0, t));
        }
    }
    let mut ok = true;
    let mut notes = Vec::new();
    let mut ratios = Vec::new();
    for (name, r) in &by_regime {
        let s = spread(r);
        ok &= s < RATIO_SPREAD;
        notes.push(format!("{name}: {} ratios, spread {s:.3}", r.len()));
        ratios.extend(r);
    }
    if !sum_ratios.is_empty() {
        let s = spread(&sum_ratios);
        ok &= s < RATIO_SPREAD;
        notes.push(format!("summed blocks: spread {s:.3}"));
    }
    // The two branches of the summed bound meet at t = a / h^{1/3}.
    let seam = spec.a / spec.h.cbrt();
    let left = transverse_sum_bound(spec.h, spec.a, spec.eps0, seam);
    let right = transverse_sum_bound(spec.h, spec.a, spec.eps0, seam * (1.0 + 1e-9));
    let seam_ratio = left.max(right) / left.min(right);
    ok &= seam_ratio <= 4.0;
    notes.push(format!("branch ratio at t = a/h^(1/3): {seam_ratio:.3}"));
    Ok(BoundReport {
        claim: "transverse block bounds".into(),
        regime: "transverse".into(),
        params: params_json(spec),
        ratios,
        fit: None,
        verdict: Verdict::from_bool(ok),
        notes,
        points,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PacketRegime {
    /// `N >= lambda^{1/3}`.
    Many,
    /// `N < lambda^{1/3}`, away from `K_a = 1`.
    Far,
    /// `N < lambda^{1/3}`, `|K_a - 1| <= 1/4N^2`.
    Near,
}

/// Applicable bound shape for `|V_N|` in `v_scale` units, with `d = |K_a - 1|`.
pub fn packet_bound(h: f64, lambda: f64, n: i64, d: f64) -> (PacketRegime, f64) {
    let nf = n as f64;
    let l13 = lambda.cbrt();
    let h13 = h.cbrt();
    if nf >= l13 {
        (PacketRegime::Many, h13 / ((nf / l13).sqrt() + lambda.powf(1.0 / 6.0) * (4.0 * nf).sqrt() * d.sqrt()))
    } else if d <= 0.25 / (nf * nf) {
        (PacketRegime::Near, h13 / ((nf / l13).powf(0.25) + nf.cbrt() * d.powf(1.0 / 6.0)))
    } else {
        (PacketRegime::Far, h13 / (1.0 + 2.0 * nf * d.sqrt()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PacketCase {
    pub h: f64,
    pub a: f64,
    pub t: f64,
    pub n: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PacketSpec {
    pub cases: Vec<PacketCase>,
    pub nx: usize,
    pub ny: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default)]
    pub max_nodes: Option<usize>,
}

/// Packet bounds over `x <= a`, with one constant per inequality: the largest ratio of `|V_N|`
/// to the applicable bound within each `(h, a)` sweep, compared across sweeps. Also the locus
/// value `|V_N| (N / lambda^{1/3})^{1/4} / h^{1/3}` at `x = a`.
pub fn verify_packet_bounds(spec: &PacketSpec, form: &QuadraticForm) -> Result<BoundReport> {
    type SweepKey = (u64, u64);
    let table = AiryZeroTable::shared();
    let mut constants: std::collections::BTreeMap<PacketRegime, std::collections::BTreeMap<SweepKey, f64>> = Default::default();
    let mut locus = Vec::new();
    let mut notes = Vec::new();
    for c in &spec.cases {
        // The block gamma = a, inside a ladder that has it as a rung.
        let mut eps0 = c.a;
        while 2.0 * eps0 < 0.5 * form.m0 {
            eps0 *= 2.0;
        }
        let params = ModelParams::new(c.h, c.a, eps0);
        let mut cfg = ReflectionConfig { tol: spec.tol, ..Default::default() };
        if let Some(n) = spec.max_nodes {
            cfg.max_nodes = n;
        }
        let r = Reflection::new(params, form, table, cfg)?;
        let w = Weighting::Block(Block::Ring(c.a));
        let lambda = c.a.powf(1.5) / c.h;
        let xs = linspace(0.0, c.a, spec.nx);
        let ys = annulus(c.t, spec.ny);
        let g = r.brute_ns(c.t, &xs, &ys, w, &[c.n])?;
        let f = &g.packets[0];
        let scale = v_scale(c.h, c.t);
        let tq = c.t / c.a.sqrt() / (2.0 * c.n as f64);
        let key = (c.h.to_bits(), c.a.to_bits());
        let mut case_max: std::collections::BTreeMap<PacketRegime, f64> = Default::default();
        for (iy, &y) in ys.iter().enumerate() {
            let yq = y / c.a.sqrt() / (4.0 * c.n as f64);
            let d = (k_fun(form, c.a, yq, tq)? - 1.0).abs();
            let (regime, bound) = packet_bound(c.h, lambda, c.n, d);
            for ix in 0..xs.len() {
                let v = f.at(ix, iy).norm() * scale;
                let e = case_max.entry(regime).or_insert(0.0);
                *e = e.max(v / bound);
            }
        }
        let mut line = format!("h={} a={} t={} N={}:", c.h, c.a, c.t, c.n);
        for (k, v) in &case_max {
            line.push_str(&format!(" {k:?} {v:.4}"));
            let e = constants.entry(*k).or_default().entry(key).or_insert(0.0);
            *e = e.max(*v);
        }
        if let Ok([y, _]) = swallowtail_locus(form, c.a, c.t, c.n) {
            let pv = r.v_n_brute(c.n, c.t, c.a, y, w)?;
            let val = pv.value.norm() * (c.n as f64 / lambda.cbrt()).powf(0.25) / c.h.cbrt();
            locus.push(val);
            line.push_str(&format!(", locus y={y:.4} value {val:.4}"));
        }
        notes.push(line);
    }
    let mut ok = true;
    let mut ratios = Vec::new();
    let mut head = Vec::new();
    for (k, per_sweep) in &constants {
        let v: Vec<f64> = per_sweep.values().copied().collect();
        let s = spread(&v);
        ok &= s < RATIO_SPREAD;
        head.push(format!("{k:?}: {} sweeps, constant spread {s:.3}, C = {:.4}", v.len(), v.iter().fold(0.0f64, |m, &x| m.max(x))));
        ratios.extend(v);
    }
    if locus.is_empty() {
        ok = false;
        head.push("no case has a K_a = 1 locus".into());
    } else {
        let s = spread(&locus);
        ok &= s < RATIO_SPREAD;
        head.insert(0, format!("locus band spread {s:.3} over {} cases", locus.len()));
    }
    head.extend(notes);
    Ok(BoundReport {
        claim: "reflected packet bounds".into(),
        regime: "tangential".into(),
        params: params_json(spec),
        ratios,
        fit: None,
        verdict: Verdict::from_bool(ok),
        notes: head,
        points: Vec::new(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AiryScan {
    pub ls: Vec<usize>,
    /// `sup_b sum_{k<=L} w_k^{-1/2} Ai^2(b - w_k)` over real `b`.
    pub sup_ai: Vec<f64>,
    /// Same with `Ai'^2`, over `b >= 0`.
    pub sup_aip: Vec<f64>,
}

/// Both sums on a `b` grid of step `b_step`, each maximum refined by golden section.
pub fn airy_sums(ls: &[usize], b_step: f64) -> Result<AiryScan> {
    let table = AiryZeroTable::shared();
    let top = *ls.iter().max().ok_or_else(|| Error::Precondition("empty L list".into()))?;
    if top > table.len() {
        return Err(Error::Precondition(format!("L = {top} exceeds the zero table ({})", table.len())));
    }
    if ls.iter().any(|&l| l == 0) || !(b_step > 0.0) {
        return Err(Error::Precondition("L >= 1 and a positive b step are required".into()));
    }
    let sums = |b: f64, l: usize| -> (f64, f64) {
        table.entries[..l].iter().fold((0.0, 0.0), |(s, sp), e| {
            let (a, ap) = airy::airy(b - e.omega);
            let w = 1.0 / e.omega.sqrt();
            (s + w * a * a, sp + w * ap * ap)
        })
    };
    let per_l: Vec<(f64, f64)> = ls
        .par_iter()
        .map(|&l| {
            let hi = table.omega(l) + 6.0;
            let n = ((hi + 6.0) / b_step).ceil() as usize;
            let grid: Vec<f64> = (0..=n).map(|i| -6.0 + i as f64 * b_step).collect();
            let vals: Vec<(f64, f64)> = grid.iter().map(|&b| sums(b, l)).collect();
            let refine = |pick: &dyn Fn(f64) -> f64, i: usize, lo_b: f64| {
                let (mut lo, mut hi) = ((grid[i] - b_step).max(lo_b), grid[i] + b_step);
                let g = 0.5 * (5f64.sqrt() - 1.0);
                for _ in 0..40 {
                    let (m1, m2) = (hi - g * (hi - lo), lo + g * (hi - lo));
                    if pick(m1) < pick(m2) {
                        lo = m1;
                    } else {
                        hi = m2;
                    }
                }
                pick(0.5 * (lo + hi)).max(pick(grid[i]))
            };
            let argmax = |f: &dyn Fn(&(f64, f64)) -> f64, from: usize| {
                (from..vals.len()).max_by(|&i, &j| f(&vals[i]).total_cmp(&f(&vals[j]))).unwrap()
            };
            let i_s = argmax(&|v| v.0, 0);
            let first_pos = grid.iter().position(|&b| b >= 0.0).unwrap_or(0);
            let i_sp = argmax(&|v| v.1, first_pos);
            let s = refine(&|b| sums(b, l).0, i_s, f64::NEG_INFINITY);
            let sp = refine(&|b| sums(b, l).1, i_sp, 0.0);
            (s, sp)
        })
        .collect();
    Ok(AiryScan { ls: ls.to_vec(), sup_ai: per_l.iter().map(|p| p.0).collect(), sup_aip: per_l.iter().map(|p| p.1).collect() })
}

/// Growth exponents of the two sums: at most `1/3` and `1`, each with slack `0.05`.
pub fn airy_sum_scan(ls: &[usize], b_step: f64) -> Result<(AiryScan, BoundReport)> {
    let scan = airy_sums(ls, b_step)?;
    let s_fit = power_fit(&scan.ls.iter().zip(&scan.sup_ai).map(|(&l, &v)| (l as f64, v)).collect::<Vec<_>>())?;
    let sp_fit = power_fit(&scan.ls.iter().zip(&scan.sup_aip).map(|(&l, &v)| (l as f64, v)).collect::<Vec<_>>())?;
    let ok = s_fit.exponent <= 1.0 / 3.0 + 0.05 && sp_fit.exponent <= 1.0 + 0.05;
    let report = BoundReport {
        claim: "Airy sums grow like L^(1/3) and L".into(),
        regime: "gallery".into(),
        params: serde_json::json!({ "L": ls, "b_step": b_step }),
        ratios: scan.sup_ai.iter().zip(&scan.ls).map(|(v, &l)| v / (l as f64).cbrt()).collect(),
        fit: Some(s_fit),
        verdict: Verdict::from_bool(ok),
        notes: vec![format!("Ai^2 sum exponent {:.4} (<= 0.3833)", s_fit.exponent), format!("Ai'^2 sum exponent {:.4} (<= 1.05)", sp_fit.exponent)],
        points: Vec::new(),
    };
    Ok((scan, report))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataFamily {
    /// Spectral projection of a point source on the first Airy mode, at depth `h^{2/3}`.
    Gallery,
    /// Random coefficients in the frequency window.
    Random,
    /// Spectral projection of a point source far from the boundary.
    FreeLike,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrichartzSpec {
    pub q: f64,
    /// `None` is `r = infinity`.
    pub r: Option<f64>,
    pub hs: Vec<f64>,
    pub families: Vec<DataFamily>,
    /// Semiclassical time horizon `T0`.
    pub t_end: f64,
    /// Source depth of the free-like data.
    pub far_depth: f64,
    pub seed: u64,
}

impl Default for StrichartzSpec {
    fn default() -> Self {
        StrichartzSpec {
            q: 8.0 / 3.0,
            r: None,
            hs: vec![0.1, 0.05, 0.025],
            families: vec![DataFamily::Gallery, DataFamily::Random, DataFamily::FreeLike],
            t_end: 1.0,
            far_depth: 1.0,
            seed: 17,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrichartzRecord {
    pub family: DataFamily,
    pub h: f64,
    pub quotient: f64,
    /// Sample spacing coarser than `h/3` in some direction, so the sup may be grid-limited.
    pub grid_limited: bool,
}

/// Domain for data at tangential frequency `m ~ 1/h` and total frequency `h^2 lambda in [1/2, 3/2]`.
pub fn strichartz_domain(h: f64) -> Result<PeriodizedDomain> {
    let table = AiryZeroTable::shared();
    let m_lo = (0.5 / h).ceil() as i64;
    let m_hi = (1.5 / h).floor() as i64;
    let cap = 1.5 / (h * h);
    let k_max = (m_lo..=m_hi)
        .map(|m| {
            let mf = m as f64;
            table.entries.iter().take_while(|e| mf * mf + e.omega * mf.powf(4.0 / 3.0) <= cap).count()
        })
        .max()
        .unwrap_or(0)
        .max(1);
    let turning = table.omega(k_max) / (m_lo as f64).powf(2.0 / 3.0);
    let x_max = (turning + 6.0).ceil();
    // Fastest local wavenumber is on the top row; about four radians per panel.
    let wavenumber = (m_hi as f64).powf(2.0 / 3.0) * table.omega(k_max).sqrt();
    let cfg = DomainConfig {
        x_max,
        x_panels: (x_max * wavenumber.max(16.0) / 4.0).ceil() as usize,
        period_scale: 1.0,
        n_y: 2 * m_hi as usize,
        k_max,
        q11: 1.0,
        m_band: Some([m_lo, m_hi]),
    };
    build_transform(&cfg, table)
}

/// Unit-mass data of the given family in the window `psi(h m) psi(h^2 lambda)`.
pub fn strichartz_data(domain: &PeriodizedDomain, h: f64, family: DataFamily, far_depth: f64, seed: u64) -> SpectralState {
    let table = AiryZeroTable::shared();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = SpectralState::zeros(domain);
    for (row, c) in domain.rows.iter().zip(s.coeffs.iter_mut()) {
        let q = domain.cfg.q11 * row.theta * row.theta;
        let ty = psi(h * row.theta.abs());
        for (k, v) in c.iter_mut().enumerate() {
            let w = ty * psi(h * h * row.lambdas[k]);
            let e = &table.entries[k];
            let at = |x: f64| eigen_norm(q, e.lprime) * airy::ai(x * q.cbrt() - e.omega);
            *v = match family {
                DataFamily::Gallery if k == 0 => Complex64::new(w * at(h.powf(2.0 / 3.0)), 0.0),
                DataFamily::Gallery => Complex64::new(0.0, 0.0),
                DataFamily::FreeLike => Complex64::new(w * at(far_depth), 0.0),
                DataFamily::Random => Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * w,
            };
        }
    }
    let norm = mass(&s).sqrt();
    for v in s.coeffs.iter_mut().flatten() {
        *v /= norm;
    }
    s
}

/// Semiclassical sample times: steps of `h/16` up to `4h`, then geometric with ratio 1.05.
fn probe_times(h: f64, t_end: f64) -> Vec<f64> {
    let mut ts: Vec<f64> = (0..=64).map(|j| h * j as f64 / 16.0).take_while(|&t| t < t_end).collect();
    let mut t = *ts.last().unwrap_or(&0.0);
    while t < t_end {
        t = (t * 1.05).min(t_end);
        ts.push(t);
    }
    ts
}

/// `||v||_{L^q(0, T0) L^r} / ||v_0||_{L^2}` for the semiclassical flow of `data`.
pub fn strichartz_quotient(domain: &PeriodizedDomain, data: &SpectralState, h: f64, q: f64, r: Option<f64>, t_end: f64) -> Result<(f64, bool)> {
    let table = AiryZeroTable::shared();
    let m_lo = domain.rows.iter().map(|r| r.m.abs()).min().unwrap_or(1) as f64;
    let k = domain.rows.iter().map(|r| r.len()).max().unwrap_or(1);
    let x_top = (table.omega(k) / m_lo.powf(2.0 / 3.0) + 1.0).min(domain.cfg.x_max);
    let spacing = h / 3.0;
    let nxs = (x_top / spacing).ceil() as usize + 1;
    let xs = linspace(0.0, x_top, nxs);
    let ny = ((2.0 * std::f64::consts::PI * domain.cfg.period_scale / spacing).ceil() as usize).next_power_of_two();
    let sampler = domain.sampler(&xs, ny)?;
    let dx = xs[1] - xs[0];
    let dy = 2.0 * std::f64::consts::PI * domain.cfg.period_scale / ny as f64;
    let grid_limited = dx > spacing * (1.0 + 1e-9) || dy > spacing * (1.0 + 1e-9);
    let ts = probe_times(h, t_end);
    let norms: Vec<f64> = ts
        .iter()
        .map(|&t| {
            // Semiclassical time t is classical time h t.
            let v = sampler.values(domain, &linear_flow(domain, data, h * t))?;
            Ok(match r {
                None => v.iter().map(|z| z.norm()).fold(0.0, f64::max),
                Some(r) => (v.iter().map(|z| z.norm().powf(r)).sum::<f64>() * dx * dy).powf(1.0 / r),
            })
        })
        .collect::<Result<_>>()?;
    let integral: f64 = ts.windows(2).zip(norms.windows(2)).map(|(t, n)| 0.5 * (t[1] - t[0]) * (n[0].powf(q) + n[1].powf(q))).sum();
    Ok((integral.powf(1.0 / q) / mass(data).sqrt(), grid_limited))
}

/// Exponent of the free semiclassical quotient, `d/2 - 1/q - d/r` in `d = 2`.
pub fn free_exponent(q: f64, r: Option<f64>) -> f64 {
    1.0 - 1.0 / q - r.map_or(0.0, |r| 2.0 / r)
}

/// Loss per data family: the fitted `h`-exponent of the quotient minus the free exponent.
pub fn strichartz_probe(spec: &StrichartzSpec) -> Result<(Vec<StrichartzRecord>, BoundReport)> {
    if spec.hs.len() < 2 || spec.families.is_empty() {
        return Err(Error::Precondition("the probe needs two or more h values and a data family".into()));
    }
    let mut records = Vec::new();
    for &h in &spec.hs {
        let domain = strichartz_domain(h)?;
        for &family in &spec.families {
            let data = strichartz_data(&domain, h, family, spec.far_depth, spec.seed);
            let (quotient, grid_limited) = strichartz_quotient(&domain, &data, h, spec.q, spec.r, spec.t_end)?;
            records.push(StrichartzRecord { family, h, quotient, grid_limited });
        }
    }
    let base = free_exponent(spec.q, spec.r);
    let mut losses = Vec::new();
    let mut notes = Vec::new();
    for &family in &spec.families {
        let series: Vec<(f64, f64)> = records.iter().filter(|r| r.family == family).map(|r| (1.0 / r.h, r.quotient)).collect();
        let loss = power_fit(&series)?.exponent - base;
        notes.push(format!("{family:?}: loss {loss:.4}"));
        losses.push((family, loss));
    }
    let get = |f: DataFamily| losses.iter().find(|p| p.0 == f).map(|p| p.1);
    let mut ok = true;
    if let Some(l) = get(DataFamily::Gallery) {
        ok &= l >= 1.0 / 6.0 - 0.05;
    }
    if let Some(l) = get(DataFamily::FreeLike) {
        ok &= l.abs() <= 0.05;
    }
    let worst = losses.iter().map(|p| p.1).fold(f64::MIN, f64::max);
    ok &= worst <= 0.25 + 0.05;
    notes.push(format!("worst loss {worst:.4}; free exponent {base:.4}"));
    if records.iter().any(|r| r.grid_limited) {
        notes.push("some sups are grid-limited".into());
    }
    let report = BoundReport {
        claim: "Strichartz loss for the pair (q, r)".into(),
        regime: "gallery".into(),
        params: params_json(spec),
        ratios: records.iter().map(|r| r.quotient).collect(),
        fit: None,
        verdict: Verdict::from_bool(ok),
        notes,
        points: Vec::new(),
    };
    Ok((records, report))
}
