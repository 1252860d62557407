use dgeo_core::discrete::{DiscreteFamilySpec, FamilyFile};
use dgeo_core::gauge::{builtin_gauge, GaugeDescriptor, GaugeKind, Interval};
use dgeo_core::quad::{integrate, QuadOptions};
use dgeo_core::{diff, linalg, rng, Error};
use proptest::prelude::*;
use rand::Rng;

fn family(kind: GaugeKind, t: Vec<Vec<f64>>, c: Vec<f64>) -> DiscreteFamilySpec {
    let g = builtin_gauge(kind, Interval::positive_half_line()).unwrap();
    let n = t[0].len();
    DiscreteFamilySpec::new(vec![1.0; n], g, t, c, None).unwrap()
}

fn coin() -> DiscreteFamilySpec {
    family(GaugeKind::Kl, vec![vec![1.0, 0.0]], vec![0.0; 2])
}

fn simplex(kind: GaugeKind, size: usize) -> DiscreteFamilySpec {
    let t = (0..size - 1)
        .map(|i| (0..size).map(|x| if x == i { 1.0 } else { 0.0 }).collect())
        .collect();
    family(kind, t, vec![0.0; size])
}

fn random_density(r: &mut impl Rng, n: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..n).map(|_| r.random_range(0.2..1.0)).collect();
    let s: f64 = v.iter().sum();
    v.into_iter().map(|x| x / s).collect()
}

fn random_theta(r: &mut impl Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| r.random_range(-scale..scale)).collect()
}

#[test]
fn power_family_with_zero_exponent_is_uniform() {
    let s = family(GaugeKind::Power { q: 1.5 }, vec![vec![1.0, -1.0, 0.0]], vec![0.0; 3]);
    let m = s.normalize(&[0.0]).unwrap();
    for p in &m.p {
        assert!((p - 1.0 / 3.0).abs() < 1e-15);
    }
    assert!((m.psi + s.gauge().ell().value(1.0 / 3.0)).abs() < 1e-14);
}

#[test]
fn coin_divergence_and_entropy() {
    let s = coin();
    let d = s.divergence(&[0.75, 0.25], &[0.5, 0.5]).unwrap();
    let oracle = 0.75 * 1.5f64.ln() + 0.25 * 0.5f64.ln();
    assert!((d - oracle).abs() < 1e-15);
    assert!((d - 0.130812).abs() < 1e-6);
    assert_eq!(s.divergence(&[0.3, 0.7], &[0.3, 0.7]).unwrap(), 0.0);
    let back = s.divergence(&[0.5, 0.5], &[0.75, 0.25]).unwrap();
    assert!((back - d).abs() > 1e-3);
    assert!((s.entropy(&[0.5, 0.5]).unwrap() - 2f64.ln()).abs() < 1e-15);
    let e = s.entropy(&[1.0 - 1e-9, 1e-9]).unwrap();
    assert!(e.abs() < 1e-7);
}

#[test]
fn power2_entropy_matches_integral_definition() {
    let s = family(GaugeKind::Power { q: 2.0 }, vec![vec![1.0, 0.0]], vec![0.0; 2]);
    // h_2(1/2) = ∫_1^{1/2} ln_2(t) dt with ln_2(t) = 1 − 1/t
    let h = integrate(|t| 1.0 - 1.0 / t, 1.0, 0.5, QuadOptions::default()).unwrap().value;
    assert!((s.entropy(&[0.5, 0.5]).unwrap() + 2.0 * h).abs() < 1e-12);
}

fn psi_of(s: &DiscreteFamilySpec) -> impl Fn(&[f64]) -> f64 + '_ {
    move |th| s.normalize(th).unwrap().psi
}

fn check_psi_derivatives(s: &DiscreteFamilySpec, theta: &[f64]) {
    let g = s.psi_gradient(theta).unwrap();
    let g_fd = diff::gradient(&psi_of(s), theta, 1e-4);
    for (a, b) in g.iter().zip(&g_fd) {
        assert!((a - b).abs() <= 1e-5 * a.abs().max(1e-3), "{a} vs {b}");
    }
    let h = s.psi_hessian(theta).unwrap();
    let h_fd = diff::hessian(&psi_of(s), theta, 1e-4);
    let scale = h.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(linalg::max_abs_diff(&h, &h_fd) <= 1e-5 * scale, "{h:?} vs {h_fd:?}");
    assert!(linalg::sym_eigenvalues(&h)[0] > 0.0);
}

#[test]
fn psi_derivatives_match_finite_differences() {
    let s = coin();
    assert!((s.psi_gradient(&[0.0]).unwrap()[0] - 0.5).abs() < 1e-15);
    check_psi_derivatives(&s, &[0.0]);
    check_psi_derivatives(&s, &[1.3]);
    let s4 = simplex(GaugeKind::Power { q: 1.5 }, 4);
    check_psi_derivatives(&s4, &[0.2, -0.3, 0.1]);
    check_psi_derivatives(&s4, &[0.0, 0.0, 0.0]);
    let e3 = simplex(GaugeKind::Escort { q: 1.5 }, 3);
    check_psi_derivatives(&e3, &[0.3, -0.2]);
}

/// `−∂_i ∂'_j D(p_θ, p_θ')` at `θ' = θ`.
fn metric_from_divergence(s: &DiscreteFamilySpec, theta: &[f64]) -> Vec<Vec<f64>> {
    let n = theta.len();
    let d = |a: &[f64], b: &[f64]| {
        let pa = s.normalize(a).unwrap().p;
        let pb = s.normalize(b).unwrap().p;
        s.divergence(&pa, &pb).unwrap()
    };
    let h = 1e-3;
    let mut out = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            let shift = |v: &[f64], k: usize, e: f64| {
                let mut w = v.to_vec();
                w[k] += e;
                w
            };
            let v = d(&shift(theta, i, h), &shift(theta, j, h)) - d(&shift(theta, i, h), &shift(theta, j, -h))
                - d(&shift(theta, i, -h), &shift(theta, j, h))
                + d(&shift(theta, i, -h), &shift(theta, j, -h));
            out[i][j] = -v / (4.0 * h * h);
        }
    }
    out
}

#[test]
fn metric_matches_divergence_second_derivative() {
    let s = coin();
    let g = s.metric(&[0.0]).unwrap();
    assert!((g[0][0] - 0.25).abs() < 1e-15);
    assert!((metric_from_divergence(&s, &[0.0])[0][0] - 0.25).abs() < 1e-4);
    for s in [simplex(GaugeKind::Power { q: 1.5 }, 4), simplex(GaugeKind::Power { q: 1.5 }, 3), simplex(GaugeKind::Escort { q: 1.5 }, 3)] {
        let theta = vec![0.15; s.dim()];
        let g = s.metric(&theta).unwrap();
        let g_fd = metric_from_divergence(&s, &theta);
        assert!(linalg::max_abs_diff(&g, &g_fd) <= 1e-4, "{g:?} vs {g_fd:?}");
        assert!(linalg::sym_eigenvalues(&g)[0] > 0.0);
    }
}

#[test]
fn connection_vanishes_for_identity_tau() {
    let mut r = rng::stream(21, 0);
    for s in [coin(), simplex(GaugeKind::Power { q: 1.5 }, 4)] {
        for _ in 0..10 {
            let theta = random_theta(&mut r, s.dim(), 1.0);
            let c = s.connection_raw(&theta).unwrap();
            assert!(c.iter().flatten().flatten().all(|v| v.abs() <= 1e-8));
        }
    }
}

#[test]
fn escort_connection_matches_third_derivative_of_divergence() {
    // g(∇_{∂i}∂j, ∂k) = −∂'_i ∂'_j ∂_k D(p_θ, p_θ') on the diagonal
    let s = simplex(GaugeKind::Escort { q: 1.5 }, 3);
    let theta = [0.2, -0.1];
    let c = s.connection_raw(&theta).unwrap();
    assert!(c.iter().flatten().flatten().any(|v| v.abs() > 1e-3));
    let d = |a: &[f64], b: &[f64]| {
        let pa = s.normalize(a).unwrap().p;
        let pb = s.normalize(b).unwrap().p;
        s.divergence(&pa, &pb).unwrap()
    };
    let h = 2e-3;
    for k in 0..2 {
        // ∂_k D as a function of θ'
        let dk = |b: &[f64]| {
            let mut p = theta.to_vec();
            let mut m = theta.to_vec();
            p[k] += h;
            m[k] -= h;
            (d(&p, b) - d(&m, b)) / (2.0 * h)
        };
        let hess = diff::hessian(&dk, &theta, h);
        for i in 0..2 {
            for j in 0..2 {
                assert!((-hess[i][j] - c[i][j][k]).abs() < 2e-4, "{i}{j}{k}: {} vs {}", -hess[i][j], c[i][j][k]);
            }
        }
    }
}

#[test]
fn hessian_structure_on_tau_identity_families() {
    let rep = coin().hessian_check(&[0.0]).unwrap();
    assert!(rep.max_defect <= 1e-6, "{}", rep.max_defect);
    // Φ = 1 + ψ for kl
    let psi = coin().normalize(&[0.0]).unwrap().psi;
    assert!((rep.potential - (1.0 + psi)).abs() < 1e-14);
    let s4 = simplex(GaugeKind::Power { q: 1.5 }, 4);
    let rep = s4.hessian_check(&[0.1, -0.2, 0.3]).unwrap();
    assert!(rep.max_defect <= 1e-5, "{}", rep.max_defect);
    assert!(rep.connection_max <= 1e-8);
}

#[test]
fn hessian_check_not_applicable_for_escort_simplex() {
    let s = simplex(GaugeKind::Escort { q: 1.5 }, 3);
    assert!(matches!(s.hessian_check(&[0.1, 0.2]), Err(Error::NotApplicable(_))));
}

#[test]
fn canonical_divergence_identity() {
    let s = coin();
    let z = s.canonical_divergence_check(&[0.0], &[0.0]).unwrap();
    assert!(z.defect < 1e-15 && z.divergence_side == 0.0);
    let c = s.canonical_divergence_check(&[0.0], &[3f64.ln()]).unwrap();
    let p = [0.5f64, 0.5];
    let q = [0.75, 0.25];
    let kl: f64 = p.iter().zip(&q).map(|(a, b)| a * (a / b).ln()).sum();
    assert!((c.divergence_side - kl).abs() < 1e-15);
    assert!(c.defect <= 1e-9);
    let s3 = simplex(GaugeKind::Power { q: 1.5 }, 3);
    let mut r = rng::stream(22, 0);
    for _ in 0..50 {
        let a = random_theta(&mut r, 2, 1.0);
        let b = random_theta(&mut r, 2, 1.0);
        let c = s3.canonical_divergence_check(&a, &b).unwrap();
        assert!(c.defect <= 1e-7, "{}", c.defect);
    }
}

#[test]
fn conformal_identity_for_escort() {
    let s = simplex(GaugeKind::Escort { q: 1.5 }, 3);
    assert!(s.conformal_check(&[0.1, 0.1], &[0.1, 0.1]).unwrap().defect < 1e-15);
    let mut r = rng::stream(23, 0);
    for _ in 0..20 {
        let a = random_theta(&mut r, 2, 1.0);
        let b = random_theta(&mut r, 2, 1.0);
        let c = s.conformal_check(&a, &b).unwrap();
        assert!(c.defect <= 1e-7, "{}", c.defect);
        let g = s.psi_gradient(&a).unwrap();
        let e = s.escort_tau_mean(&a).unwrap();
        for (x, y) in g.iter().zip(&e) {
            assert!((x - y).abs() <= 1e-8);
        }
    }
    let p = simplex(GaugeKind::Power { q: 1.5 }, 3);
    assert!(matches!(p.conformal_check(&[0.0, 0.0], &[0.1, 0.1]), Err(Error::NotApplicable(_))));
}

#[test]
fn projection_recovers_family_members() {
    let s = family(GaugeKind::Power { q: 1.5 }, vec![vec![1.0, 2.0, 0.0, -1.0], vec![0.5, -1.0, 1.0, 0.0]], vec![0.1, 0.0, -0.2, 0.3]);
    let theta = [0.3, -0.4];
    let rho = s.normalize(&theta).unwrap().p;
    let proj = s.project(&rho).unwrap();
    for (a, b) in proj.theta.iter().zip(&theta) {
        assert!((a - b).abs() <= 1e-8);
    }
    let c = coin();
    let proj = c.project(&[0.9, 0.1]).unwrap();
    assert!((proj.p[0] - 0.9).abs() < 1e-10 && (proj.p[1] - 0.1).abs() < 1e-10);
}

#[test]
fn pythagorean_additivity() {
    let mut r = rng::stream(24, 0);
    let specs = [
        family(GaugeKind::Kl, vec![vec![1.0, 2.0, 0.0, -1.0], vec![0.5, -1.0, 1.0, 0.0]], vec![0.1, 0.0, -0.2, 0.3]),
        family(GaugeKind::Power { q: 1.5 }, vec![vec![1.0, 2.0, 0.0, -1.0]], vec![0.0; 4]),
        family(GaugeKind::Power { q: 2.0 }, vec![vec![0.0, 1.0, 2.0, 3.0, 4.0], vec![1.0, 0.0, 0.0, 1.0, 0.0]], vec![0.0; 5]),
    ];
    for s in &specs {
        for _ in 0..50 {
            let rho = random_density(&mut r, s.size());
            let proj = s.project(&rho).unwrap();
            assert!(proj.residual <= 1e-10);
            let other = s.normalize(&random_theta(&mut r, s.dim(), 0.8)).unwrap().p;
            let lhs = s.divergence(&rho, &other).unwrap();
            let rhs = s.divergence(&rho, &proj.p).unwrap() + s.divergence(&proj.p, &other).unwrap();
            assert!((lhs - rhs).abs() <= 1e-9, "{lhs} vs {rhs}");
        }
    }
}

#[test]
fn entropy_maximization() {
    let mut r = rng::stream(25, 0);
    for kind in [GaugeKind::Kl, GaugeKind::Power { q: 2.0 }] {
        let s = family(kind, vec![vec![0.0, 1.0, 2.0]], vec![0.0; 3]);
        for _ in 0..20 {
            let rho = random_density(&mut r, 3);
            let rep = s.entropy_max_check(&rho).unwrap();
            assert!(rep.holds);
            assert!(rep.entropy_projected > rep.entropy_source);
            assert!((rep.entropy_projected - rep.entropy_source - rep.divergence).abs() < 1e-10);
        }
        let member = s.normalize(&[0.4]).unwrap().p;
        let rep = s.entropy_max_check(&member).unwrap();
        assert!(rep.holds && (rep.entropy_projected - rep.entropy_source).abs() <= 1e-10);
    }
    let with_offset = family(GaugeKind::Kl, vec![vec![0.0, 1.0, 2.0]], vec![0.0, 0.1, 0.0]);
    assert!(matches!(with_offset.entropy_max_check(&[0.2, 0.3, 0.5]), Err(Error::NotApplicable(_))));
}

#[test]
fn affine_reparametrization_preserves_densities() {
    let s = coin();
    let grid = s.theta_grid(9, 1.0);
    let id = s.affine_reparam_check(&vec![vec![1.0]], &[0.0], &[0.0], &grid).unwrap();
    assert_eq!(id.max_density_defect, 0.0);
    let rep = s.affine_reparam_check(&vec![vec![2.0]], &[1.0], &[0.0], &grid).unwrap();
    assert!(rep.max_density_defect <= 1e-12);
    let s3 = family(GaugeKind::Power { q: 1.5 }, vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]], vec![0.0; 3]);
    let mut r = rng::stream(26, 0);
    for _ in 0..10 {
        let a = vec![random_theta(&mut r, 2, 2.0), random_theta(&mut r, 2, 2.0)];
        if linalg::rank(&a, 1e-6) < 2 {
            continue;
        }
        let v1 = random_theta(&mut r, 2, 0.3);
        let v2 = random_theta(&mut r, 2, 0.3);
        let rep = s3.affine_reparam_check(&a, &v1, &v2, &s3.theta_grid(16, 0.5)).unwrap();
        assert!(rep.max_density_defect <= 1e-10, "{}", rep.max_density_defect);
        assert!(rep.max_psi_defect <= 1e-10);
    }
    assert!(matches!(
        s3.affine_reparam_check(&vec![vec![1.0, 2.0], vec![2.0, 4.0]], &[0.0, 0.0], &[0.0, 0.0], &[]),
        Err(Error::Singular(_))
    ));
}

#[test]
fn family_file_round_trip() {
    let f = FamilyFile {
        weights: vec![1.0, 1.0],
        gauge: GaugeDescriptor::new(GaugeKind::Kl),
        t: vec![vec![1.0, 0.0]],
        c: vec![],
        theta_box: Some(vec![[Some(-5.0), None]]),
    };
    let s = f.build().unwrap();
    assert_eq!(s.theta_box()[0], (-5.0, f64::INFINITY));
    assert_eq!(s.offset(), &[0.0, 0.0]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn densities_are_normalized(q in 1.0f64..2.0, a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let s = family(GaugeKind::Power { q }, vec![vec![1.0, 0.0, -1.0], vec![0.0, 1.0, 1.0]], vec![0.0, 0.3, 0.0]);
        let m = s.normalize(&[a, b]).unwrap();
        let mass: f64 = m.p.iter().sum();
        prop_assert!((mass - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn psi_increases_along_nonnegative_directions(q in 1.0f64..2.0, a in -1.0f64..1.0, step in 0.01f64..0.5) {
        // T ≥ 0 everywhere with one positive entry
        let s = family(GaugeKind::Power { q }, vec![vec![0.0, 1.0, 2.0]], vec![0.0; 3]);
        let p0 = s.normalize(&[a]).unwrap().psi;
        let p1 = s.normalize(&[a + step]).unwrap().psi;
        prop_assert!(p1 > p0);
    }

    #[test]
    fn metric_is_positive_definite(a in -1.0f64..1.0, b in -1.0f64..1.0, c in -1.0f64..1.0) {
        let s = simplex(GaugeKind::Power { q: 1.5 }, 4);
        let g = s.metric(&[a, b, c]).unwrap();
        prop_assert!(linalg::sym_eigenvalues(&g)[0] > 0.0);
    }
}

#[test]
fn family_file_diagnostics() {
    let coin = FamilyFile {
        weights: vec![1.0, 1.0],
        gauge: GaugeDescriptor::new(GaugeKind::Kl),
        t: vec![vec![1.0, 0.0]],
        c: vec![],
        theta_box: None,
    };
    assert!(coin.diagnostics().is_empty());
    let rank = FamilyFile { weights: vec![1.0; 3], t: vec![vec![1.0; 3], vec![0.0, 1.0, 0.0]], ..coin.clone() };
    assert_eq!(rank.diagnostics().len(), 1);
    assert!(rank.build().is_err());
    let mut bad_gauge = coin.clone();
    bad_gauge.gauge.lo = 2.0;
    bad_gauge.gauge.hi = Some(1.0);
    let msgs = bad_gauge.diagnostics();
    assert_eq!(msgs.len(), 1);
    assert!(msgs[0].starts_with("gauge: "), "{msgs:?}");
}
