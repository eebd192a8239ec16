use convexlab::airy::{self, AiryZeroTable, Bump, PhaseLConfig};
use std::f64::consts::PI;

#[test]
fn shared_table_invariants() {
    let t = AiryZeroTable::shared();
    let cfg = PhaseLConfig::default();
    let mut prev = 2.33;
    for e in &t.entries {
        assert!(e.omega > prev, "k={}", e.k);
        prev = e.omega;
        let r = airy::ai(-e.omega);
        assert!(r.abs() < 1e-12, "k={} residual {r:e}", e.k);
        let l = airy::phase_l(e.omega, &cfg);
        assert!((l - 2.0 * PI * e.k as f64).abs() < 1e-9, "k={} L={l}", e.k);
        assert!(e.lprime > 0.0);
        let ap = airy::ai_prime(-e.omega);
        assert!((e.lprime - 2.0 * PI * ap * ap).abs() < 1e-8);
    }
}

#[test]
fn phase_is_strictly_increasing() {
    let cfg = PhaseLConfig::default();
    let mut prev = airy::phase_l(-20.0, &cfg);
    for i in 1..=1400 {
        let w = -20.0 + 0.05 * i as f64;
        let l = airy::phase_l(w, &cfg);
        assert!(l > prev, "w={w}: {l} <= {prev}");
        prev = l;
    }
}

#[test]
fn series_remainder_decays() {
    let mut prev = f64::INFINITY;
    for u in [10.0, 100.0, 1000.0] {
        let b = airy::b_remainder(u, 20).unwrap();
        assert!(b.direct > 0.0 && b.direct < prev);
        assert!((b.direct * u - 5.0 / 24.0).abs() < 0.05 / u.sqrt(), "u={u} uB={}", b.direct * u);
        prev = b.direct;
    }
    let t = AiryZeroTable::shared();
    for k in [10, 50, 300] {
        let w = t.omega(k);
        let u = w.powf(1.5);
        let b = airy::b_remainder(u, 20).unwrap();
        let l = 4.0 / 3.0 * u + PI / 2.0 - b.direct;
        assert!((l - 2.0 * PI * k as f64).abs() < 1e-8, "k={k}");
    }
}

#[test]
fn poisson_gap_shrinks_with_shells() {
    let t = AiryZeroTable::shared();
    let cfg = PhaseLConfig::default();
    let bump = Bump::new(t.omega(1), 0.25);
    let mut prev = f64::INFINITY;
    for n in [25, 50, 100, 200] {
        let r = airy::poisson_sum_check(&bump, n, 10, t, &cfg, 1e-6).unwrap();
        println!("n_max={n} gap={:.3e} rel={:.3e}", r.gap, r.gap / r.rhs);
        assert!(r.gap <= 0.5 * prev);
        prev = r.gap;
        if n == 200 {
            assert!(r.gap / r.rhs.abs() < 1e-6);
        }
    }
    let doubled = Bump { amplitude: 2.0, ..bump };
    let a = airy::poisson_sum_check(&bump, 50, 10, t, &cfg, 1e-6).unwrap();
    let b = airy::poisson_sum_check(&doubled, 50, 10, t, &cfg, 1e-6).unwrap();
    assert!((b.lhs - 2.0 * a.lhs).norm() < 1e-14 && (b.rhs - 2.0 * a.rhs).abs() < 1e-14);
}
