use convexlab::airy::AiryZeroTable;
use convexlab::green_reflection::*;
use convexlab::green_spectral::{linspace, Weighting};
use convexlab::model::*;
use convexlab::quad::{linear_fit, Panels};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

fn unit() -> QuadraticForm {
    QuadraticForm::identity(1)
}

fn params(n: i64, gamma: f64, t: f64, x: f64, y: f64) -> PhaseParams {
    PhaseParams { n, gamma, a: 0.2 * gamma, h: 0.01, t, x, y, qc: 1.0 }
}

#[test]
fn phase_is_odd_under_full_reversal() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let p = PhaseParams {
            n: rng.random_range(-6..7),
            gamma: rng.random_range(0.05..0.3),
            a: rng.random_range(0.01..0.2),
            h: 0.02,
            t: rng.random_range(0.1..1.0),
            x: rng.random_range(0.0..0.3),
            y: rng.random_range(-2.0..2.0),
            qc: 1.0,
        };
        let (eta, al, sg, s) = (rng.random_range(-1.4..1.4), rng.random_range(0.3..1.5), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let back = PhaseParams { n: -p.n, t: -p.t, y: -p.y, ..p };
        let (f, b) = (phi_n(&p, eta, al, sg, s), phi_n(&back, eta, al, -sg, -s));
        assert!((f + b).abs() < 1e-13 * (1.0 + f.abs()), "{f} vs {b}");
    }
}

#[test]
fn solver_meets_its_residual_contract() {
    let mut solved = 0;
    for i in 0..9 {
        for j in 0..9 {
            let (sg, s) = (-0.8 + 0.2 * i as f64, -0.8 + 0.2 * j as f64);
            let p = params(2, 0.25, 1.5, 0.05, -2.7);
            match solve_crit(&p, sg, s) {
                Ok(c) => {
                    solved += 1;
                    let (ga, ge) = phi_n_grad(&p, c.eta_c, c.alpha_c, sg, s);
                    let scale = 1.0 + p.y.abs() + p.t;
                    assert!(c.converged && ga.abs() < 1e-12 * scale && ge.abs() < 1e-12 * scale);
                    assert!((0.25..=2.0).contains(&c.alpha_c) && c.eta_c > 0.0);
                }
                Err(e) => assert!(e.to_string().contains("critical"), "{e}"),
            }
        }
    }
    assert!(solved > 40, "only {solved} of 81 solved");
}

#[test]
fn critical_alpha_follows_its_expansion() {
    // At fixed T = t / sqrt(gamma) the gap between sqrt(alpha_c) and its leading expansion is
    // linear in gamma.
    let big_t = 2.7 / 0.5;
    let eta0 = 0.9;
    for &(sg, s) in &[(0.3, 0.1), (-0.2, 0.4), (0.5, -0.5)] {
        let gammas: Vec<f64> = (0..6).map(|i| 1e-4 * 4f64.powi(i)).collect();
        let gaps: Vec<f64> = gammas
            .iter()
            .map(|&g| {
                let t = big_t * g.sqrt();
                let p = params(2, g, t, 0.2 * g, -2.0 * t * eta0);
                let c = solve_crit(&p, sg, s).unwrap();
                let lead = (big_t * eta0 - sg - s) / 4.0;
                (c.alpha_c.sqrt() - lead).abs()
            })
            .collect();
        let (slope, _, _) = linear_fit(&gammas.iter().map(|g| g.ln()).collect::<Vec<_>>(), &gaps.iter().map(|g| g.ln()).collect::<Vec<_>>());
        assert!((slope - 1.0).abs() < 0.1, "({sg},{s}): slope {slope}, gaps {gaps:?}");
    }
}

#[test]
fn hessian_determinant_grows_linearly_in_reflections() {
    // The time is matched to N so that alpha_c stays near 1/2; then det / t is linear in N.
    let gamma: f64 = 0.01;
    let eta0: f64 = 0.9;
    let mut ln_n = vec![];
    let mut ln_det = vec![];
    for n in 1..=8 {
        let t = gamma.sqrt() * 2.0 * n as f64 * 0.5f64.sqrt() / eta0;
        let p = params(n, gamma, t, 0.5 * gamma, -2.0 * t * eta0);
        let c = solve_crit(&p, 0.0, 0.0).unwrap();
        assert!((c.alpha_c - 0.5).abs() < 0.05, "N={n}: alpha_c {}", c.alpha_c);
        let hs = phi_n_hessian(&p, c.eta_c, c.alpha_c, 0.0, 0.0);
        let det = hs[0][0] * hs[1][1] - hs[0][1] * hs[1][0];
        ln_n.push((n as f64).ln());
        ln_det.push((det.abs() / (t * gamma.powf(1.5))).ln());
    }
    let (slope, _, _) = linear_fit(&ln_n, &ln_det);
    assert!((slope - 1.0).abs() < 0.1, "slope {slope}");
}

#[test]
fn critical_value_is_stationary_in_sigma_on_the_fold() {
    // The reduced phase has d/d sigma = gamma^{3/2} q^{1/2} (sigma^2 + x/gamma - alpha_c).
    let p = params(2, 0.25, 1.5, 0.05, -2.7);
    let s = 0.1;
    let reduced = |sg: f64| {
        let c = solve_crit(&p, sg, s).unwrap();
        (phi_n(&p, c.eta_c, c.alpha_c, sg, s), c)
    };
    let mut sg = 0.3;
    for _ in 0..100 {
        let (_, c) = reduced(sg);
        sg = (c.alpha_c - p.x / p.gamma).sqrt();
    }
    let e = 1e-5;
    let slope = (reduced(sg + e).0 - reduced(sg - e).0) / (2.0 * e);
    assert!(slope.abs() < 1e-7, "d phi / d sigma = {slope:e} at sigma = {sg}");
    let (_, c) = reduced(0.0);
    let off = (reduced(e).0 - reduced(-e).0) / (2.0 * e);
    let expect = p.gamma.powf(1.5) * c.eta_c.abs() * (p.x / p.gamma - c.alpha_c);
    assert!((off - expect).abs() < 1e-7, "{off} vs {expect}");
}

#[test]
fn stationary_phase_in_alpha_and_eta_converges() {
    // Leading-order stationary phase at fixed (sigma, s) against direct quadrature of the
    // (alpha, eta) integral with the packet symbol.
    let amp = |eta: f64, al: f64| eta * eta * psi(eta.abs()) * psi2(al);
    let gap = |h: f64, sg: f64, s: f64| {
        let p = PhaseParams { n: 1, gamma: 0.3, a: 0.05, h, t: 0.8, x: 0.05, y: -1.6, qc: 1.0 };
        let panels = (0.25 / h).clamp(50.0, 400.0) as usize;
        let pa = Panels::new(0.25, 1.0, panels, 16);
        let pe = Panels::new(0.5, 1.5, 2 * panels, 16);
        let mut num = Complex64::new(0.0, 0.0);
        for (&al, &wa) in pa.nodes.iter().zip(&pa.weights) {
            for (&et, &we) in pe.nodes.iter().zip(&pe.weights) {
                let v = amp(et, al);
                if v != 0.0 {
                    num += Complex64::from_polar(v * wa * we, phi_n(&p, et, al, sg, s) / h);
                }
            }
        }
        let c = solve_crit(&p, sg, s).unwrap();
        let hs = phi_n_hessian(&p, c.eta_c, c.alpha_c, sg, s);
        let det = hs[0][0] * hs[1][1] - hs[0][1] * hs[1][0];
        let sig = if det < 0.0 { 0.0 } else if hs[0][0] > 0.0 { 2.0 } else { -2.0 };
        let sp = Complex64::from_polar(
            amp(c.eta_c, c.alpha_c) * 2.0 * PI * h / det.abs().sqrt(),
            phi_n(&p, c.eta_c, c.alpha_c, sg, s) / h + PI / 4.0 * sig,
        );
        (num - sp).norm() / num.norm()
    };
    for &(sg, s) in &[(0.3, -0.2), (-0.5, 0.1)] {
        let coarse = gap(0.01, sg, s);
        let fine = gap(0.000625, sg, s);
        assert!(fine < coarse / 2.0 && fine < 0.1, "({sg},{s}): {coarse} -> {fine}");
    }
}

#[test]
fn packets_fall_off_outside_the_window() {
    // Packets beyond the admissible window decay algebraically in N; they are below 1e-6 of
    // the largest packet only some forty reflections out.
    let form = unit();
    let (h, a, t) = (0.05, 0.25, 0.6);
    let r = Reflection::new(ModelParams::new(h, a, 0.3), &form, AiryZeroTable::shared(), ReflectionConfig::default()).unwrap();
    let win = n_window(t, 0.3, a, &form, 0.3).unwrap();
    let inside: Vec<i64> = (0..=win.hi).collect();
    let outside: Vec<i64> = [8, 16, 32, 48, 64].iter().map(|d| win.hi + d).collect();
    let ns: Vec<i64> = inside.iter().chain(&outside).copied().collect();
    let xs = linspace(0.05, 0.45, 3);
    let ys = linspace(-1.6, -0.6, 5);
    let sum = r.brute_ns(t, &xs, &ys, Weighting::Total, &ns).unwrap();
    let sups: Vec<f64> = sum.packets.iter().map(|p| p.sup().sup).collect();
    let top = sups[..inside.len()].iter().cloned().fold(0.0, f64::max);
    let tail = &sups[inside.len()..];
    assert!(tail.windows(2).all(|w| w[1] < w[0]), "{tail:?}");
    assert!(tail[0] < 1e-1 * top && tail[3] < 1e-6 * top, "{:?}", tail.iter().map(|v| v / top).collect::<Vec<_>>());
}

#[test]
fn free_packet_obeys_the_flat_bound() {
    let form = unit();
    let h = 0.01;
    let cfg = ReflectionConfig { tol: 1e-4, ..Default::default() };
    let r = Reflection::new(ModelParams::new(h, 0.1, 0.3), &form, AiryZeroTable::shared(), cfg).unwrap();
    let cs: Vec<f64> = [0.1, 0.2, 0.4, 0.8]
        .iter()
        .map(|&t| {
            let f = r.free_field(t, &linspace(0.0, 0.1, 3), &linspace(-4.0 * t, -0.5 * t, 61), Weighting::Total).unwrap();
            f.sup().sup * h * h * (t / h)
        })
        .collect();
    let (lo, hi) = cs.iter().fold((f64::MAX, 0.0f64), |(l, u), &c| (l.min(c), u.max(c)));
    assert!(hi / lo < 2.0, "constants {cs:?}");
}

#[test]
fn reduced_free_packet_is_the_free_evaluation() {
    let form = unit();
    let r = Reflection::new(ModelParams::new(0.02, 0.1, 0.3), &form, AiryZeroTable::shared(), ReflectionConfig::default()).unwrap();
    let a = r.v_n_reduced(0, 0.4, 0.05, -0.7, Weighting::Total).unwrap();
    let b = r.v_0_free(0.4, 0.05, -0.7, Weighting::Total).unwrap();
    assert!((a.value - b.value).norm() <= 1e-3 * b.value.norm());
    assert!(r.v_n_reduced(-1, 0.4, 0.05, -0.7, Weighting::Total).is_err());
}

#[test]
fn reduced_packets_refuse_long_times() {
    let form = unit();
    let r = Reflection::new(ModelParams::new(0.05, 0.01, 0.3), &form, AiryZeroTable::shared(), ReflectionConfig::default()).unwrap();
    // h t / gamma^2 = 0.05 * 5 / 0.0225 exceeds the configured limit.
    let block = Weighting::Block(Block::Ring(0.15));
    let err = r.v_n_reduced(1, 5.0, 0.01, -9.0, block).unwrap_err();
    assert!(err.to_string().contains("h t / gamma^2"), "{err}");
}

#[test]
fn k_is_smooth_and_increasing() {
    let form = unit();
    let (a, tq) = (0.2, 0.9);
    let ys: Vec<f64> = (1..=60).map(|i| 0.05 * i as f64).collect();
    let ks: Vec<f64> = ys.iter().map(|&y| k_fun(&form, a, -y, tq).unwrap()).collect();
    assert!(ks.windows(2).all(|w| w[1] > w[0]));
    for &y in &[0.3, 1.1, 2.4] {
        let e = 1e-5;
        let fd = (k_fun(&form, a, -(y + e), tq).unwrap() - k_fun(&form, a, -(y - e), tq).unwrap()) / (2.0 * e);
        // K = Tq |eta| with eta + c eta^3 = |Y|/(4N Tq), so dK/d|Y/4N| = 1 / (1 + 3 c eta^2).
        let eta = k_fun(&form, a, -y, tq).unwrap() / tq;
        let exact = 1.0 / (1.0 + 3.0 * a * tq * tq * eta * eta);
        assert!((fd - exact).abs() < 1e-6, "{fd} vs {exact}");
    }
}

#[test]
fn loci_of_distinct_reflections_are_disjoint() {
    let form = unit();
    let (a, t) = (0.2, 1.3);
    let win = n_window(t, 0.3, a, &form, 0.3).unwrap();
    let mut pts = vec![];
    for n in win.iter() {
        if let Ok([lo, hi]) = swallowtail_locus(&form, a, t, n) {
            let tq = t / a.sqrt() / (2.0 * n as f64);
            let k = k_fun(&form, a, hi / a.sqrt() / (4.0 * n as f64), tq).unwrap();
            assert!((k - 1.0).abs() < 1e-10);
            pts.push((n, lo, hi));
        }
    }
    assert!(pts.len() >= 2, "{pts:?}");
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            assert!((pts[i].2 - pts[j].2).abs() > 1e-3 && (pts[i].1 - pts[j].1).abs() > 1e-3);
        }
    }
}
