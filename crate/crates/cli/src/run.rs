//! Executes one command: parses its parameters, runs it, writes artifacts and verdicts.

use crate::config::*;
use convexlab::airy::{self, AiryZeroTable, Bump, PhaseLConfig};
use convexlab::green_reflection::{Reflection, ReflectionConfig};
use convexlab::green_spectral::{linspace, GreenField, Spectral, SpectralConfig, Weighting};
use convexlab::harness::{self, BoundReport, EvaluatorKind, Verdict};
use convexlab::model::{Block, ModelParams, QuadraticForm};
use convexlab::nls;
use convexlab::Error;
use serde::Serialize;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

/// Why a run stopped before producing verdicts.
#[derive(Debug)]
pub enum Failure {
    Config(String),
    Budget(String),
    Numeric(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Budget(_) => 3,
            Failure::Numeric(_) => 1,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Budget(m) | Failure::Numeric(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::Precondition(_) | Error::Domain(_) | Error::TurningPointOverflow { .. } | Error::Shape { .. } => Failure::Config(msg),
            Error::UnresolvedOscillation { .. } | Error::NonConvergence { .. } => Failure::Budget(msg),
            _ => Failure::Numeric(msg),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.0)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Numeric(format!("io: {e}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct Claim {
    pub claim: String,
    pub verdict: Verdict,
    pub detail: String,
}

impl Claim {
    fn new(claim: &str, ok: bool, detail: String) -> Self {
        Claim { claim: claim.into(), verdict: Verdict::from_bool(ok), detail }
    }

    fn from_report(r: &BoundReport) -> Self {
        Claim { claim: r.claim.clone(), verdict: r.verdict, detail: r.notes.iter().take(3).cloned().collect::<Vec<_>>().join("; ") }
    }

    pub fn line(&self) -> String {
        let v = match self.verdict {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
        };
        format!("{v} {}: {}", self.claim, self.detail)
    }
}

/// Files written into the output directory, in write order.
pub struct Outputs {
    dir: PathBuf,
    pub files: Vec<String>,
}

impl Outputs {
    pub fn new(dir: &Path) -> Result<Self, Failure> {
        std::fs::create_dir_all(dir).map_err(|e| Failure::Config(format!("output directory {}: {e}", dir.display())))?;
        Ok(Outputs { dir: dir.to_path_buf(), files: Vec::new() })
    }

    fn write(&mut self, name: &str, fill: impl FnOnce(&mut Vec<u8>) -> convexlab::Result<()>) -> Result<(), Failure> {
        let mut buf = Vec::new();
        fill(&mut buf)?;
        std::fs::write(self.dir.join(name), buf)?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), Failure> {
        self.write(name, |b| {
            serde_json::to_writer_pretty(&mut *b, value)?;
            b.push(b'\n');
            Ok(())
        })
    }
}

pub struct Outcome {
    /// Parameters after defaults, as run.
    pub params: serde_json::Value,
    pub claims: Vec<Claim>,
    /// Input files read by the run, with their content hashes.
    pub inputs: Vec<(String, String)>,
}

fn resolved<P: Serialize>(p: &P) -> serde_json::Value {
    serde_json::to_value(p).expect("parameters serialize")
}

fn say(verbose: bool, msg: impl FnOnce() -> String) {
    if verbose {
        eprintln!("{}", msg());
    }
}

pub fn execute(cfg: &RunConfig, out: &mut Outputs, verbose: bool) -> Result<Outcome, Failure> {
    let form = QuadraticForm::identity(1);
    let table = AiryZeroTable::shared();
    let mut inputs = Vec::new();
    let (params, claims) = match cfg.command {
        Command::AiryCheck => {
            let p: AiryCheckParams = parse_params(&cfg.params, || Some(Default::default()))?;
            if p.k_max == 0 || p.k_max > table.len() {
                return Err(Failure::Config(format!("config field `params.k_max`: must lie in 1..={}", table.len())));
            }
            let lcfg = PhaseLConfig::default();
            let (mut ai_res, mut l_res, mut lp_rel) = (0.0f64, 0.0f64, 0.0f64);
            for k in 1..=p.k_max {
                let w = table.omega(k);
                ai_res = ai_res.max(airy::ai(-w).abs());
                l_res = l_res.max((airy::phase_l(w, &lcfg) - 2.0 * PI * k as f64).abs());
                let q = airy::lprime_by_quadrature(w);
                lp_rel = lp_rel.max((table.lprime(k) - q).abs() / q);
            }
            let l0 = (airy::phase_l(0.0, &lcfg) - PI / 3.0).abs();
            out.write("airy_zeros.csv", |b| table.write_csv(b))?;
            let claims = vec![
                Claim::new("Ai(-w_k) = 0", ai_res < 1e-12, format!("max residual {ai_res:.2e} for k <= {}", p.k_max)),
                Claim::new("L(w_k) = 2 pi k", l_res < 1e-9, format!("max error {l_res:.2e}")),
                Claim::new("L(0) = pi/3", l0 < 1e-12, format!("error {l0:.2e}")),
                Claim::new("L'(w_k) closed form matches quadrature", lp_rel < 1e-8, format!("max relative gap {lp_rel:.2e}")),
            ];
            (resolved(&p), claims)
        }
        Command::PoissonCheck => {
            let p: PoissonParams = parse_params(&cfg.params, || Some(Default::default()))?;
            if p.n_max.is_empty() {
                return Err(Failure::Config("config field `params.n_max`: needs at least one value".into()));
            }
            let bump = Bump::new(p.center.unwrap_or(table.omega(1)), p.half_width);
            let lcfg = PhaseLConfig::default();
            let mut rows = Vec::new();
            for &n in &p.n_max {
                let r = airy::poisson_sum_check(&bump, n, p.k_max, table, &lcfg, p.tolerance)?;
                say(verbose, || format!("n_max {n}: gap {:.3e}", r.gap));
                rows.push((n, r));
            }
            out.write("poisson.csv", |b| {
                let mut w = csv::Writer::from_writer(b);
                w.write_record(["n_max", "lhs_re", "lhs_im", "rhs", "gap", "relative_gap", "tail_warning"])?;
                for (n, r) in &rows {
                    w.write_record([n.to_string(), format!("{:.17e}", r.lhs.re), format!("{:.17e}", r.lhs.im), format!("{:.17e}", r.rhs), format!("{:.17e}", r.gap), format!("{:.17e}", r.gap / r.rhs.abs()), r.tail_warning.to_string()])?;
                }
                w.flush()?;
                Ok(())
            })?;
            let rel: Vec<f64> = rows.iter().map(|(_, r)| r.gap / r.rhs.abs()).collect();
            let last = *rel.last().unwrap();
            let halving = rel.windows(2).all(|w| w[1] <= 0.5 * w[0]);
            let claims = vec![
                Claim::new("Airy-Poisson relative gap below tolerance", last < p.tolerance, format!("{last:.2e} at n_max = {}", p.n_max.last().unwrap())),
                Claim::new("gap halves per doubling", halving, format!("{rel:?}")),
            ];
            (resolved(&p), claims)
        }
        Command::GreenEval => {
            let p: GreenParams = parse_params(&cfg.params, || Some(Default::default()))?;
            let f = green_field(&p, &form, p.evaluator)?;
            out.write("green.csv", |b| f.write_csv(b))?;
            let sup = f.sup().sup;
            let ok = f.meta.max_err <= p.tol * sup * (1.0 + 1e-9) || f.meta.max_err == 0.0;
            (resolved(&p), vec![Claim::new("error estimate within tolerance", ok, format!("sup {sup:.4e}, max error estimate {:.2e}", f.meta.max_err))])
        }
        Command::CrossValidate => {
            let p: GreenParams = parse_params(&cfg.params, || Some(Default::default()))?;
            let s = green_field(&p, &form, EvaluatorKind::Spectral)?;
            let r = green_field(&p, &form, EvaluatorKind::Reflection)?;
            let sup = s.sup().sup;
            let gap = s.values.iter().zip(&r.values).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max) / sup;
            out.write("cross.csv", |b| {
                let mut w = csv::Writer::from_writer(b);
                w.write_record(["x", "y", "spectral_re", "spectral_im", "reflection_re", "reflection_im", "abs_diff"])?;
                for (ix, x) in s.xs.iter().enumerate() {
                    for (iy, y) in s.ys.iter().enumerate() {
                        let (u, v) = (s.at(ix, iy), r.at(ix, iy));
                        w.write_record([x, y, &u.re, &u.im, &v.re, &v.im, &(u - v).norm()].map(|z| format!("{z:.16e}")))?;
                    }
                }
                w.flush()?;
                Ok(())
            })?;
            (resolved(&p), vec![Claim::new("eigenmode and reflection sums agree", gap < p.max_gap, format!("relative gap {gap:.3e} (limit {})", p.max_gap))])
        }
        Command::DispersionSweep => {
            let p: DispersionParams = parse_params(&cfg.params, || Some(Default::default()))?;
            let r = match p.claim {
                SweepClaim::Upper => harness::verify_dispersion_upper(&p.sweep, &form)?,
                SweepClaim::Free => harness::verify_free_decay(&p.sweep, &form)?,
            };
            report_artifacts(out, &r)?;
            (resolved(&p), vec![Claim::from_report(&r)])
        }
        Command::Saturation => {
            let p = parse_params(&cfg.params, || Some(default_saturation()))?;
            let r = harness::verify_saturation(&p, &form)?;
            report_artifacts(out, &r)?;
            (resolved(&p), vec![Claim::from_report(&r)])
        }
        Command::Transverse => {
            let p = parse_params(&cfg.params, || Some(default_transverse()))?;
            let r = harness::verify_transverse(&p, &form)?;
            report_artifacts(out, &r)?;
            (resolved(&p), vec![Claim::from_report(&r)])
        }
        Command::AirySums => {
            let p: AirySumParams = parse_params(&cfg.params, || Some(Default::default()))?;
            let (scan, r) = harness::airy_sum_scan(&p.ls, p.b_step)?;
            out.write("airy_sums.csv", |b| {
                let mut w = csv::Writer::from_writer(b);
                w.write_record(["L", "sup_ai2", "sup_aip2"])?;
                for ((l, s), sp) in scan.ls.iter().zip(&scan.sup_ai).zip(&scan.sup_aip) {
                    w.write_record([l.to_string(), format!("{s:.17e}"), format!("{sp:.17e}")])?;
                }
                w.flush()?;
                Ok(())
            })?;
            out.json("report.json", &r)?;
            (resolved(&p), vec![Claim::from_report(&r)])
        }
        Command::StrichartzProbe => {
            let mut p = parse_params(&cfg.params, || Some(default_strichartz()))?;
            p.seed = cfg.seed;
            let (records, r) = harness::strichartz_probe(&p)?;
            out.write("strichartz.csv", |b| {
                let mut w = csv::Writer::from_writer(b);
                w.write_record(["family", "h", "quotient", "grid_limited"])?;
                for rec in &records {
                    let fam = serde_json::to_value(rec.family)?.as_str().unwrap_or_default().to_string();
                    w.write_record([fam, format!("{:.17e}", rec.h), format!("{:.17e}", rec.quotient), rec.grid_limited.to_string()])?;
                }
                w.flush()?;
                Ok(())
            })?;
            out.json("report.json", &r)?;
            (resolved(&p), vec![Claim::from_report(&r)])
        }
        Command::NlsRun => {
            let p: NlsParams = parse_params(&cfg.params, || Some(Default::default()))?;
            let domain = nls::build_transform(&p.domain, table)?;
            let data = match p.data {
                InitialData::Gallery { m0, amplitude } => nls::gallery_state(&domain, m0, amplitude)?,
                InitialData::Random { k_hi, amplitude } => nls::random_state(&domain, cfg.seed, k_hi, amplitude),
            };
            say(verbose, || format!("{} modes, {} steps", domain.mode_count(), (p.evolve.t_end / p.evolve.dt).round()));
            let run = nls::evolve(&domain, &data, &p.evolve)?;
            out.write("series.csv", |b| run.series.write_csv(b))?;
            if p.checkpoint {
                out.write("checkpoint.bin", |b| nls::write_checkpoint(&domain, &run.state, b))?;
            }
            let steps = (run.state.time / p.evolve.dt).round().max(1.0);
            let m0 = nls::mass(&data);
            let drift = (nls::mass(&run.state) - m0).abs() / m0.max(f64::MIN_POSITIVE);
            let per_1e4 = drift * 1e4 / steps;
            let trace = nls::boundary_trace(&domain, &run.state)?;
            let claims = vec![
                Claim::new("run completed", run.aborted_at.is_none(), match run.aborted_at {
                    Some(t) => format!("non-finite state at t = {t}"),
                    None => format!("t = {}", run.state.time),
                }),
                Claim::new("mass conserved", per_1e4 < 1e-10, format!("relative drift {drift:.2e} over {steps} steps")),
                Claim::new("Dirichlet trace vanishes", trace < 1e-10, format!("sup |v(0, y)| = {trace:.2e}")),
            ];
            (resolved(&p), claims)
        }
        Command::GrowthReport => {
            let p: GrowthParams = parse_params(&cfg.params, || None)?;
            let bytes = std::fs::read(&p.series).map_err(|e| Failure::Config(format!("config field `params.series`: {}: {e}", p.series.display())))?;
            inputs.push((p.series.display().to_string(), crate::manifest::sha256_hex(&bytes)));
            let series = nls::ObservableSeries::read_csv(bytes.as_slice())?;
            let g = nls::growth_report(&series, p.order)?;
            out.json("growth.json", &g)?;
            let claim = Claim::new(
                &format!("log H^{} norm under an affine envelope", p.order),
                g.pass,
                format!("rate {:.3e}, largest excess {:.3e}", g.rate, g.max_excess),
            );
            (resolved(&p), vec![claim])
        }
    };
    Ok(Outcome { params, claims, inputs })
}

fn green_field(p: &GreenParams, form: &QuadraticForm, kind: EvaluatorKind) -> Result<GreenField, Failure> {
    if p.x.n == 0 || p.y.n == 0 {
        return Err(Failure::Config("config field `params.x`/`params.y`: grids need at least one point".into()));
    }
    let params = ModelParams::new(p.h, p.a, p.eps0);
    let xs = linspace(p.x.lo, p.x.hi, p.x.n);
    let ys = linspace(p.y.lo, p.y.hi, p.y.n);
    let w = p.gamma.map_or(Weighting::Total, |g| Weighting::Block(Block::Ring(g)));
    let table = AiryZeroTable::shared();
    Ok(match kind {
        EvaluatorKind::Spectral => Spectral::new(params, form, table, SpectralConfig { tol: p.tol, ..Default::default() })?.field(p.t, &xs, &ys, w)?,
        EvaluatorKind::Reflection => Reflection::new(params, form, table, ReflectionConfig { tol: p.tol, ..Default::default() })?.brute(p.t, &xs, &ys, w)?.total,
        EvaluatorKind::Free => Reflection::new(params, form, table, ReflectionConfig { tol: p.tol, ..Default::default() })?.free_field(p.t, &xs, &ys, w)?,
    })
}

fn report_artifacts(out: &mut Outputs, r: &BoundReport) -> Result<(), Failure> {
    out.write("sweep.csv", |b| harness::write_sweep_csv(&r.points, b))?;
    out.json("report.json", r)
}
