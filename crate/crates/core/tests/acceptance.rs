//! End-to-end acceptance checks. Each test prints one PASS/FAIL line before asserting.

use convexlab::airy::{self, AiryZeroTable, Bump, PhaseLConfig};
use convexlab::green_reflection::{Reflection, ReflectionConfig};
use convexlab::green_spectral::{linspace, Spectral, SpectralConfig, Weighting};
use convexlab::harness::*;
use convexlab::model::{ModelParams, QuadraticForm};
use convexlab::nls::*;
use std::f64::consts::PI;

fn report(n: usize, name: &str, ok: bool, detail: &str) {
    println!("criterion {n:>2} {name}: {} ({detail})", if ok { "PASS" } else { "FAIL" });
}

fn form() -> QuadraticForm {
    QuadraticForm::identity(1)
}

#[test]
fn c01_airy_zeros_and_phase() {
    let table = AiryZeroTable::shared();
    let cfg = PhaseLConfig::default();
    let mut ai_res = 0.0f64;
    let mut l_res = 0.0f64;
    let mut lp_rel = 0.0f64;
    for k in 1..=50 {
        let w = table.omega(k);
        ai_res = ai_res.max(airy::ai(-w).abs());
        l_res = l_res.max((airy::phase_l(w, &cfg) - 2.0 * PI * k as f64).abs());
        let q = airy::lprime_by_quadrature(w);
        lp_rel = lp_rel.max((table.lprime(k) - q).abs() / q);
    }
    let l0 = (airy::phase_l(0.0, &cfg) - PI / 3.0).abs();
    let ok = ai_res < 1e-12 && l_res < 1e-9 && l0 < 1e-12 && lp_rel < 1e-8;
    report(1, "Airy zeros and phase", ok, &format!("Ai {ai_res:.1e}, L {l_res:.1e}, L(0) {l0:.1e}, L' {lp_rel:.1e}"));
    assert!(ok);
}

#[test]
fn c02_airy_poisson() {
    let table = AiryZeroTable::shared();
    let cfg = PhaseLConfig::default();
    let bump = Bump::new(table.omega(1), 0.25);
    let gaps: Vec<f64> = [25, 50, 100, 200]
        .iter()
        .map(|&n| {
            let r = airy::poisson_sum_check(&bump, n, 10, table, &cfg, 1e-6).unwrap();
            r.gap / r.rhs.abs()
        })
        .collect();
    let halving = gaps.windows(2).all(|w| w[1] <= 0.5 * w[0]);
    let ok = gaps[3] < 1e-6 && halving;
    report(2, "Airy-Poisson identity", ok, &format!("relative gaps {}", gaps.iter().map(|g| format!("{g:.2e}")).collect::<Vec<_>>().join(" ")));
    assert!(ok);
}

#[test]
fn c03_representations_agree() {
    let params = ModelParams::new(0.05, 0.25, 0.3);
    let form = form();
    let table = AiryZeroTable::shared();
    let xs = linspace(0.05, 0.45, 5);
    let ys = linspace(-1.6, -0.6, 5);
    let g = Spectral::new(params, &form, table, SpectralConfig::default()).unwrap().field(0.6, &xs, &ys, Weighting::Total).unwrap();
    let r = Reflection::new(params, &form, table, ReflectionConfig::default()).unwrap().brute(0.6, &xs, &ys, Weighting::Total).unwrap();
    let gap = g.values.iter().zip(&r.total.values).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max) / g.sup().sup;
    let ok = gap < 0.02;
    report(3, "eigenmode and reflection sums", ok, &format!("relative gap {gap:.2e}"));
    assert!(ok);
}

#[test]
fn c04_free_decay() {
    let spec = SweepSpec {
        evaluator: EvaluatorKind::Free,
        regime: Regime::Tangential,
        h: 0.01,
        a: 0.1,
        eps0: 0.45,
        t_list: (0..6).map(|i| 0.05 * 10f64.powf(i as f64 / 5.0)).collect(),
        x_span: XSpan::Half,
        nx: 3,
        ny: 71,
        tol: 1e-6,
        max_nodes: None,
        x_max: None,
    };
    let r = verify_free_decay(&spec, &form()).unwrap();
    report(4, "free decay", r.passed(), &r.notes.join("; "));
    assert!(r.passed());
}

#[test]
fn c05_saturation() {
    let spec = SaturationSpec {
        sweep: SweepSpec {
            evaluator: EvaluatorKind::Spectral,
            regime: Regime::Tangential,
            h: 0.02,
            a: 0.3,
            eps0: 0.45,
            t_list: (0..9).map(|i| 0.55 + 0.05 * i as f64).collect(),
            x_span: XSpan::Half,
            nx: 13,
            ny: 141,
            tol: 1e-6,
            max_nodes: None,
            x_max: None,
        },
        a_list: vec![0.15, 0.2, 0.3],
        a_fit_t: 0.55,
        min_decades: 0.2,
    };
    let r = verify_saturation(&spec, &form()).unwrap();
    report(5, "saturation", r.passed(), &r.notes[..3].join("; "));
    assert!(r.passed(), "{}", r.summary());
}

#[test]
fn c06_upper_bound() {
    let form = form();
    let ts: Vec<f64> = (0..9).map(|i| 0.5 + 0.05 * i as f64).collect();
    let sweep = |regime, h: f64, a: f64, x_max| SweepSpec {
        evaluator: EvaluatorKind::Spectral,
        regime,
        h,
        a,
        eps0: 0.3,
        t_list: ts.clone(),
        x_span: XSpan::Full,
        nx: 9,
        ny: 141,
        tol: 1e-6,
        max_nodes: None,
        x_max,
    };
    let gallery_h: f64 = 0.02;
    let strip = 6.0 * gallery_h.powf(2.0 / 3.0);
    let mut reports = vec![
        verify_dispersion_upper(&sweep(Regime::Tangential, 0.05, 0.25, None), &form).unwrap(),
        verify_dispersion_upper(&sweep(Regime::Gallery, gallery_h, gallery_h.powf(2.0 / 3.0) / 2.0, Some(strip)), &form).unwrap(),
    ];
    let transverse = TransverseSpec { h: 0.01, a: 0.02, eps0: 0.4, t_list: (0..10).map(|i| 0.1 * 1.3f64.powi(i)).filter(|&t| t <= 1.0).chain([1.0]).collect(), nx: 5, ny: 141, tol: 1e-6 };
    reports.push(verify_transverse(&transverse, &form).unwrap());
    let ok = reports.iter().all(|r| r.passed());
    let detail: Vec<String> = reports.iter().map(|r| format!("{}: {}", r.regime, r.notes.join(", "))).collect();
    report(6, "upper bound ratios", ok, &detail.join("; "));
    assert!(ok);
}

#[test]
fn c07_packet_bounds() {
    let mut cases = Vec::new();
    for (h, a) in [(0.02, 0.2), (0.01, 0.2), (0.02, 0.3)] {
        for (t, n) in [(0.7, 1), (0.9, 1), (1.1, 1), (1.4, 2), (1.7, 2)] {
            cases.push(PacketCase { h, a, t, n });
        }
    }
    let spec = PacketSpec { cases, nx: 9, ny: 161, tol: 1e-6, max_nodes: None };
    let r = verify_packet_bounds(&spec, &form()).unwrap();
    report(7, "reflected packet bounds", r.passed(), &r.notes.iter().take(4).cloned().collect::<Vec<_>>().join("; "));
    assert!(r.passed(), "{}", r.summary());
}

#[test]
fn c08_airy_sums() {
    let (_, r) = airy_sum_scan(&[16, 32, 64, 128, 256, 512, 1024], 0.02).unwrap();
    report(8, "Airy sums", r.passed(), &r.notes.join("; "));
    assert!(r.passed());
}

#[test]
fn c09_strichartz() {
    let (_, r) = strichartz_probe(&StrichartzSpec::default()).unwrap();
    report(9, "Strichartz probe", r.passed(), &r.notes.join("; "));
    assert!(r.passed(), "{}", r.summary());
}

#[test]
fn c10_nls_solver() {
    let domain = build_transform(&DomainConfig::default(), AiryZeroTable::shared()).unwrap();
    let data = random_state(&domain, 3, 6, 0.5);
    let run = |dt: f64, t_end: f64| {
        let cfg = EvolveConfig { t_end, dt, kappa: 1.0, observe_every: 0.1, orders: vec![], ..Default::default() };
        evolve(&domain, &data, &cfg).unwrap()
    };

    let long = run(1e-3, 10.0);
    let mass_drift = (mass(&long.state) - mass(&data)).abs() / mass(&data);
    let energy_drift = |out: &EvolveOutcome| {
        let e0 = out.series.samples[0].energy;
        out.series.samples.iter().map(|o| (o.energy - e0).abs()).fold(0.0, f64::max) / e0.abs()
    };
    let e_coarse = energy_drift(&run(1e-3, 1.0));
    let e_fine = energy_drift(&run(5e-4, 1.0));
    let energy_order = (e_coarse / e_fine).log2();

    let strang = |dt: f64| {
        let n = (0.2 / dt).round() as usize;
        (0..n).fold(data.clone(), |v, _| strang_step(&domain, &v, dt, 1.0).unwrap())
    };
    let reference = strang(0.02 / 8.0);
    let (e1, e2) = (strang(0.02).max_diff(&reference), strang(0.01).max_diff(&reference));
    let strang_order = ((e1 / e2) * (1.0 - 1.0 / 16.0) / (1.0 - 1.0 / 64.0)).log2();

    let gallery = gallery_state(&domain, 1, 0.3).unwrap();
    let cfg = EvolveConfig { t_end: 10.0, dt: 1e-3, kappa: 1.0, observe_every: 0.05, orders: vec![2], ..Default::default() };
    let out = evolve(&domain, &gallery, &cfg).unwrap();
    let trace = boundary_trace(&domain, &out.state).unwrap();
    let growth = growth_report(&out.series, 2).unwrap();

    let ok = mass_drift < 1e-10
        && e_coarse < 1e-4
        && (energy_order - 2.0).abs() < 0.3
        && (strang_order - 2.0).abs() < 0.1
        && trace < 1e-10
        && growth.pass;
    let detail = format!(
        "mass drift {mass_drift:.1e} over 1e4 steps, energy drift {e_coarse:.1e} (order {energy_order:.2}), Strang order {strang_order:.3}, trace {trace:.1e}, H2 rate {:.2e} excess {:.2e}",
        growth.rate, growth.max_excess
    );
    report(10, "NLS solver", ok, &detail);
    assert!(ok);
}
