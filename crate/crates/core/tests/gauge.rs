use dgeo_core::gauge::{
    builtin_gauge, gauge_from_pair, legendre_conjugate_fn, EquivalenceTransform, GaugeFn, GaugeKind, GaugeTriple,
    Interval, ScalarFn,
};
use dgeo_core::rng;
use proptest::prelude::*;
use rand::Rng;

fn suite() -> Vec<GaugeTriple> {
    [
        GaugeKind::Kl,
        GaugeKind::Power { q: 1.2 },
        GaugeKind::Power { q: 1.5 },
        GaugeKind::Power { q: 2.0 },
        GaugeKind::Escort { q: 1.5 },
        GaugeKind::ScaledLog { lambda: 2.0 },
    ]
    .into_iter()
    .map(|k| builtin_gauge(k, Interval::positive_half_line()).unwrap())
    .collect()
}

fn log_uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    (lo.ln() + rng.random::<f64>() * (hi.ln() - lo.ln())).exp()
}

#[test]
fn kernel_is_nonnegative_and_matches_its_integral_form() {
    let mut r = rng::stream(7, 0);
    for g in suite() {
        for _ in 0..1000 {
            let t = log_uniform(&mut r, 0.05, 20.0);
            let s = log_uniform(&mut r, 0.05, 20.0);
            let d = g.d(t, s).unwrap();
            assert!(d >= 0.0);
            if d <= 1e-12 {
                assert!((t - s).abs() <= 1e-5, "{}: d={d} at ({t},{s})", g.name());
            }
            let dq = g.d_by_quadrature(t, s).unwrap();
            assert!((d - dq).abs() <= 1e-10 * d.max(1.0), "{}: {d} vs {dq}", g.name());
        }
    }
}

#[test]
fn kl_kernel_matches_relative_entropy_integrand() {
    let g = builtin_gauge(GaugeKind::Kl, Interval::positive_half_line()).unwrap();
    for (t, s) in [(2.0f64, 1.0f64), (0.3, 1.7), (5.0, 0.2)] {
        let oracle = t * (t / s).ln() - (t - s);
        assert!((g.d(t, s).unwrap() - oracle).abs() < 1e-14 * oracle.max(1.0));
    }
    assert!((g.d(2.0, 1.0).unwrap() - 0.386_294_361_119_890_6).abs() < 1e-15);
}

#[test]
fn exp_inverts_ell() {
    let mut r = rng::stream(7, 1);
    for g in suite() {
        for _ in 0..200 {
            let t = log_uniform(&mut r, 1e-3, 1e3);
            let back = g.exp(g.ell().value(t));
            assert!((back - t).abs() <= 1e-9 * t, "{}: {back} vs {t}", g.name());
        }
    }
}

#[test]
fn kernel_derivatives_recover_m_and_gamma() {
    for g in suite() {
        let der = g.derived();
        for t in [0.4, 1.0, 2.5] {
            let h = 1e-3 * t;
            let d = |a: f64, b: f64| g.d(a, b).unwrap();
            // ∂²d/∂t∂s at (t, s)
            let mixed = |s: f64| (d(t + h, s + h) - d(t + h, s - h) - d(t - h, s + h) + d(t - h, s - h)) / (4.0 * h * h);
            let m = -mixed(t);
            assert!((m - der.m.value(t)).abs() <= 1e-4 * der.m.value(t).abs(), "{}: m", g.name());
            let k = 2.0 * h;
            let third = -(mixed(t + k) - mixed(t - k)) / (2.0 * k);
            let gamma = der.gamma.value(t);
            assert!((third - gamma).abs() <= 1e-4 * gamma.abs().max(1e-3), "{}: gamma {third} vs {gamma}", g.name());
        }
    }
}

#[test]
fn chi_identities() {
    for g in suite() {
        let der = g.derived();
        for t in g.interval().grid(64, None) {
            let chi = der.chi.value(t);
            let m = der.m.value(t);
            let tau1 = g.tau().d1(t);
            assert!((chi * m - tau1).abs() <= 1e-9 * tau1.abs().max(1.0));
            let lhs = der.gamma.value(t) + g.chi_d1(t) / chi * m;
            assert!(lhs.abs() <= 1e-9 * der.gamma.value(t).abs().max(1.0), "{}: {lhs}", g.name());
        }
    }
}

#[test]
fn derived_functions_have_consistent_derivatives() {
    for g in suite() {
        let der = g.derived();
        let pts = [0.3, 0.9, 1.7, 4.0];
        for (name, f) in [("ell", &der.ell), ("s", &der.s), ("s_star", &der.s_star), ("chi", &der.chi)] {
            let defect = f.derivative_defect(&pts);
            assert!(defect < 1e-5, "{} {name}: {defect}", g.name());
        }
        assert!(g.h().derivative_defect(&[0.5, 1.0, 3.0]) < 1e-5);
        assert!(g.tau().derivative_defect(&[0.5, 1.0, 3.0]) < 1e-5);
    }
}

#[test]
fn entropy_density_and_s_star_examples() {
    let kl = builtin_gauge(GaugeKind::Kl, Interval::positive_half_line()).unwrap();
    for t in [0.1, 1.0, 3.0] {
        assert!((kl.s_star(t) + t).abs() < 1e-14 * t.max(1.0));
        assert!((kl.entropy_density(t) + t * t.ln()).abs() < 1e-15);
    }
}

fn random_transform(r: &mut impl Rng) -> EquivalenceTransform {
    EquivalenceTransform::new(
        r.random_range(-3.0..3.0),
        r.random_range(-3.0..3.0),
        r.random_range(-3.0..3.0),
        log_uniform(r, 0.2, 5.0),
    )
    .unwrap()
}

#[test]
fn equivalence_preserves_kernel_and_fingerprint() {
    let mut r = rng::stream(11, 0);
    let grid = Interval::positive_half_line().grid(64, None);
    for g in suite() {
        for _ in 0..100 {
            let tr = random_transform(&mut r);
            let g1 = g.apply_equivalence(&tr).unwrap();
            for _ in 0..5 {
                let t = log_uniform(&mut r, 0.05, 20.0);
                let s = log_uniform(&mut r, 0.05, 20.0);
                let (a, b) = (g.d(t, s).unwrap(), g1.d(t, s).unwrap());
                assert!((a - b).abs() <= 1e-12 * a.max(1.0), "{}: {a} vs {b}", g.name());
            }
            for ((m, c), (m1, c1)) in g.fingerprint(&grid).into_iter().zip(g1.fingerprint(&grid)) {
                assert!((m - m1).abs() <= 1e-8 * m.abs().max(1.0));
                assert!((c - c1).abs() <= 1e-8 * c.abs().max(1.0));
            }
            let u = g1.ell().value(1.3);
            assert!((g1.exp(u) - 1.3).abs() < 1e-12);
        }
    }
}

#[test]
fn scaled_kl_transform_matches_original() {
    let g = builtin_gauge(GaugeKind::Kl, Interval::positive_half_line()).unwrap();
    let g1 = g.apply_equivalence(&EquivalenceTransform::new(0.0, 0.0, 0.0, 2.0).unwrap()).unwrap();
    let mut r = rng::stream(12, 0);
    for _ in 0..20 {
        let (t, s) = (log_uniform(&mut r, 0.1, 10.0), log_uniform(&mut r, 0.1, 10.0));
        assert!((g.d(t, s).unwrap() - g1.d(t, s).unwrap()).abs() <= 1e-12);
    }
}

#[test]
fn pair_construction_recovers_kl() {
    let i = Interval::positive_half_line();
    let tau = ScalarFn::new(i, |t| t, |_| 1.0, |_| 0.0);
    let ell = ScalarFn::new(i, |t| t.ln() + 1.0, |t| 1.0 / t, |t| -1.0 / (t * t));
    let g = gauge_from_pair(tau, ell, 1.0).unwrap();
    let kl = builtin_gauge(GaugeKind::Kl, i).unwrap();
    let mut r = rng::stream(13, 0);
    for _ in 0..30 {
        let (t, s) = (log_uniform(&mut r, 0.05, 20.0), log_uniform(&mut r, 0.05, 20.0));
        let a = g.d(t, s).unwrap();
        assert!((a - kl.d(t, s).unwrap()).abs() <= 1e-8 * a.max(1.0));
        // the same kernel read off the quadrature-built h
        let h = g.h();
        let via_h = h.value(t) - h.value(s) - (t - s) * h.d1(s);
        assert!((via_h - a).abs() <= 1e-8 * a.max(1.0));
        assert!((g.ell().value(t) - kl.ell().value(t)).abs() < 1e-14);
    }
    assert_eq!(g.d(2.0, 2.0).unwrap(), 0.0);
    assert!((g.exp(0.0) - (-1f64).exp()).abs() < 1e-12);
}

#[test]
fn pair_swap_reverses_arguments() {
    let i = Interval::positive_half_line();
    let tau = ScalarFn::new(i, |t: f64| t.powf(1.5), |t: f64| 1.5 * t.sqrt(), |t: f64| 0.75 / t.sqrt());
    let ell = ScalarFn::new(i, |t: f64| t.ln(), |t| 1.0 / t, |t| -1.0 / (t * t));
    let g = gauge_from_pair(tau.clone(), ell.clone(), 1.0).unwrap();
    let g_swapped = gauge_from_pair(ell, tau, 1.0).unwrap();
    let mut r = rng::stream(14, 0);
    for _ in 0..30 {
        let (t, s) = (log_uniform(&mut r, 0.1, 10.0), log_uniform(&mut r, 0.1, 10.0));
        let a = g.d(t, s).unwrap();
        let b = g_swapped.d(s, t).unwrap();
        assert!((a - b).abs() <= 1e-9 * a.max(1.0), "{a} vs {b}");
    }
}

#[test]
fn pair_construction_rejects_decreasing_input() {
    let i = Interval::positive_half_line();
    let tau = ScalarFn::new(i, |t| t, |_| 1.0, |_| 0.0);
    let ell = ScalarFn::new(i, |t: f64| -t.ln(), |t| -1.0 / t, |t| 1.0 / (t * t));
    assert!(gauge_from_pair(tau, ell, 1.0).is_err());
}

#[test]
fn legendre_involution() {
    let gauges: Vec<_> = [
        GaugeKind::Kl,
        GaugeKind::Power { q: 1.0 },
        GaugeKind::Power { q: 1.2 },
        GaugeKind::Power { q: 1.5 },
        GaugeKind::Power { q: 2.0 },
    ]
    .into_iter()
    .map(|k| builtin_gauge(k, Interval::positive_half_line()).unwrap())
    .collect();
    let mut r = rng::stream(15, 0);
    for g in gauges {
        assert!(g.is_legendre_type());
        let star = g.h_star();
        let star_star = legendre_conjugate_fn(&star);
        for _ in 0..10 {
            let x = log_uniform(&mut r, 0.05, 20.0);
            let a = g.h().value(x);
            let b = star_star.value(x);
            assert!((a - b).abs() <= 1e-8 * a.abs().max(1.0), "{}: {a} vs {b}", g.name());
        }
        // convexity of the conjugate on a grid inside its domain
        let (lo, hi) = g.ell_range();
        let (a, b) = (lo.max(-5.0), if hi.is_finite() { hi - 0.2 } else { 3.0 });
        let n = 40;
        let ys: Vec<f64> = (0..=n).map(|i| a + (b - a) * i as f64 / n as f64).collect();
        for w in ys.windows(3) {
            let second = star.value(w[0]) - 2.0 * star.value(w[1]) + star.value(w[2]);
            assert!(second >= -1e-12, "{}", g.name());
        }
    }
}

#[test]
fn kl_conjugate_is_shifted_exponential() {
    let g = builtin_gauge(GaugeKind::Kl, Interval::positive_half_line()).unwrap();
    for u in [-4.0, -1.0, 0.0, 1.0, 2.5] {
        let v = g.legendre_conjugate(u).unwrap();
        assert!((v - (u - 1.0f64).exp()).abs() <= 1e-10);
    }
}

proptest! {
    #[test]
    fn kernel_nonnegative_for_any_power(q in 0.5f64..2.5, t in 0.01f64..50.0, s in 0.01f64..50.0) {
        let g = builtin_gauge(GaugeKind::Power { q }, Interval::positive_half_line()).unwrap();
        let d = g.d(t, s).unwrap();
        prop_assert!(d >= 0.0);
    }

    #[test]
    fn escort_exp_roundtrip(q in 1.0f64..2.0, t in 1e-3f64..1e3) {
        let g = builtin_gauge(GaugeKind::Escort { q }, Interval::positive_half_line()).unwrap();
        let back = g.exp(g.ell().value(t));
        prop_assert!((back - t).abs() <= 1e-9 * t);
    }

    #[test]
    fn bounded_interval_rejects_outside_points(t in 2.0f64..10.0) {
        let g = builtin_gauge(GaugeKind::Kl, Interval::new(0.5, 2.0).unwrap()).unwrap();
        prop_assert!(g.d(t, 1.0).is_err());
    }
}

#[test]
fn eval_agrees_with_the_component_functions() {
    for g in suite() {
        for t in [0.1, 0.7, 1.0, 3.5, 12.0] {
            let r = g.tau().value(t);
            assert_eq!(g.eval(GaugeFn::Tau, t).unwrap(), r);
            assert_eq!(g.eval(GaugeFn::Ell, t).unwrap(), g.ell().value(t));
            assert_eq!(g.eval(GaugeFn::SStar, t).unwrap(), g.s_star(t));
            let u = g.eval(GaugeFn::Ell, t).unwrap();
            let back = g.eval(GaugeFn::Exp, u).unwrap();
            assert!((back - t).abs() <= 1e-10 * t, "{}: exp(ell({t})) = {back}", g.name());
            let h = g.eval(GaugeFn::H, r).unwrap();
            assert!(h.is_finite());
            let m = g.eval(GaugeFn::M, t).unwrap();
            assert!(m > 0.0, "{}: m({t}) = {m}", g.name());
        }
        assert!(g.eval(GaugeFn::Tau, -1.0).is_err());
        assert!(g.eval(GaugeFn::Chi, 0.0).is_err());
    }
}

#[test]
fn eval_h_star_is_the_legendre_conjugate() {
    let g = builtin_gauge(GaugeKind::Power { q: 1.5 }, Interval::positive_half_line()).unwrap();
    for t in [0.3, 1.0, 4.0] {
        let x = g.ell().value(t);
        assert_eq!(g.eval(GaugeFn::HStar, x).unwrap(), g.legendre_conjugate(x).unwrap());
    }
}

#[test]
fn involution_report_is_tight() {
    for g in suite() {
        let rep = g.involution_check(9);
        assert_eq!(rep.points.len(), 9);
        assert_eq!(rep.h.len(), rep.h_star_star.len());
        assert!(rep.max_rel_defect <= 1e-8, "{}: {}", g.name(), rep.max_rel_defect);
    }
}

#[test]
fn equivalence_report_matches_direct_comparison() {
    let mut r = rng::stream(31, 0);
    for g in suite() {
        let rep = g.equivalence_check(&EquivalenceTransform::IDENTITY, 5).unwrap();
        assert_eq!(rep.pairs, 25);
        assert_eq!(rep.max_kernel_defect, 0.0);
        assert_eq!(rep.max_fingerprint_defect, 0.0);
        let tr = random_transform(&mut r);
        let rep = g.equivalence_check(&tr, 7).unwrap();
        assert_eq!(rep.transform, tr);
        assert!(rep.max_kernel_defect <= 1e-12, "{}: {}", g.name(), rep.max_kernel_defect);
        assert!(rep.max_fingerprint_defect <= 1e-8, "{}: {}", g.name(), rep.max_fingerprint_defect);
    }
}
