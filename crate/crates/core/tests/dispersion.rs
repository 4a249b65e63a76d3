use approx::assert_relative_eq;
use nalgebra::DMatrix;
use proptest::prelude::*;
use vortexkam_core::dispersion::*;
use vortexkam_core::{Depth, DispersionParams, TangentialSites};

fn params(g: f64, depth: Depth) -> DispersionParams {
    DispersionParams::new(g, depth, [0.0, 3.0]).unwrap()
}

/// Real matrix of `∂_t η = G ψ`, `∂_t ψ = −g η + γ ∂_x^{−1} G ψ` on
/// `{cos jx, sin jx}_{1≤j≤K}`, coordinates ordered `(η_c, η_s, ψ_c, ψ_s)` per mode.
fn physical_generator(k: usize, g: f64, gamma: f64, depth: Depth) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(4 * k, 4 * k);
    for m in 0..k {
        let j = (m + 1) as f64;
        let gj = match depth {
            Depth::Infinite => j,
            Depth::Finite { h } => j * (h * j).tanh(),
        };
        let o = 4 * m;
        a[(o, o + 2)] = gj;
        a[(o + 1, o + 3)] = gj;
        a[(o + 2, o)] = -g;
        a[(o + 3, o + 1)] = -g;
        // ∂_x^{-1}: cos ↦ sin/j, sin ↦ −cos/j
        a[(o + 3, o + 2)] = gamma * gj / j;
        a[(o + 2, o + 3)] = -gamma * gj / j;
    }
    a
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

#[test]
fn eigenvalue_oracle_matches_big_omega() {
    let k = 32;
    for depth in [Depth::Infinite, Depth::Finite { h: 1.0 }] {
        for gamma in [0.0, 1.0, 2.0] {
            let p = params(1.0, depth);
            let eig = physical_generator(k, 1.0, gamma, depth).complex_eigenvalues();
            let got = sorted(eig.iter().map(|z| z.im).collect());
            let mut want = Vec::new();
            for j in 1..=k as i64 {
                for s in [j, -j] {
                    let w = big_omega_j(s, &p, gamma).unwrap();
                    want.push(w);
                    want.push(-w);
                }
            }
            let want = sorted(want);
            for (a, b) in got.iter().zip(&want) {
                assert!(
                    (a - b).abs() < 1e-9,
                    "depth {depth:?} gamma {gamma}: {a} vs {b}"
                );
            }
            assert!(eig.iter().all(|z| z.re.abs() < 1e-9));
        }
    }
}

#[test]
fn symbol_examples() {
    assert_eq!(symbol_g0(4, Depth::Infinite).unwrap(), 4.0);
    assert_eq!(symbol_g0(-3, Depth::Infinite).unwrap(), 3.0);
    // tanh(1) from its exponential definition
    let e2 = 1f64.exp().powi(2);
    assert_relative_eq!(
        symbol_g0(1, Depth::Finite { h: 1.0 }).unwrap(),
        (e2 - 1.0) / (e2 + 1.0),
        epsilon = 1e-15
    );
}

#[test]
fn omega_examples() {
    let p = params(1.0, Depth::Infinite);
    assert_relative_eq!(omega_j(1, &p, 2.0).unwrap(), 2f64.sqrt(), epsilon = 1e-15);
    assert_relative_eq!(omega_j(5, &p, 0.0).unwrap(), 5f64.sqrt(), epsilon = 1e-15);
    assert_relative_eq!(omega_j(-5, &p, 0.0).unwrap(), 5f64.sqrt(), epsilon = 1e-15);
    let q = params(9.81, Depth::Finite { h: 1.0 });
    assert_relative_eq!(
        omega_j(2, &q, 0.0).unwrap(),
        (9.81 * 2.0 * 2f64.tanh()).sqrt(),
        epsilon = 1e-14
    );
    assert_relative_eq!(
        big_omega_j(1, &p, 2.0).unwrap(),
        2f64.sqrt() + 1.0,
        epsilon = 1e-15
    );
    assert_relative_eq!(
        big_omega_j(-1, &p, 2.0).unwrap(),
        2f64.sqrt() - 1.0,
        epsilon = 1e-15
    );
    assert_relative_eq!(big_omega_j(4, &p, 0.0).unwrap(), 2.0, epsilon = 1e-15);
}

#[test]
fn coefficient_examples() {
    let p = params(1.0, Depth::Infinite);
    let c = coeffs_m_p(1, &p, 0.0).unwrap();
    assert_relative_eq!(c.m, 1.0, epsilon = 1e-15);
    assert_relative_eq!(c.p_plus, 1.0, epsilon = 1e-15);
    assert_relative_eq!(c.p_minus, -1.0, epsilon = 1e-15);
    let c = coeffs_m_p(2, &p, 2.0).unwrap();
    assert_relative_eq!(c.p_plus - c.p_minus, 2.0 / c.m, epsilon = 1e-14);
    // M_n = (G_n / (g + γ²G_n/(4n²)))^{1/4}
    let q = params(9.81, Depth::Finite { h: 2.0 });
    let g3 = 3.0 * 6f64.tanh();
    let want = (g3 / (9.81 + g3 / 36.0)).powf(0.25);
    assert_relative_eq!(coeffs_m_p(3, &q, 1.0).unwrap().m, want, epsilon = 1e-14);
    assert!(coeffs_m_p(0, &p, 0.0).is_err());
}

#[test]
fn remainder_examples() {
    let p = params(1.0, Depth::Infinite);
    assert!(c_j_remainder(10_000, &p, 0.0).unwrap().abs() < 1e-12);
    assert_relative_eq!(
        c_j_remainder(1, &p, 2.0).unwrap(),
        2f64.sqrt() - 1.0,
        epsilon = 1e-14
    );
    let sup = (1..=10_000)
        .map(|j| c_j_remainder(j, &p, 1.5).unwrap().abs())
        .fold(0.0, f64::max);
    assert!(sup.is_finite() && sup < 1.0);
}

#[test]
fn jet_examples() {
    let p = params(1.0, Depth::Infinite);
    assert_relative_eq!(
        dgamma_omega(2, 2, &p, 0.0).unwrap(),
        2f64.sqrt() / 8.0,
        epsilon = 1e-14
    );
    assert_relative_eq!(dgamma_omega(1, 1, &p, 0.0).unwrap(), 0.5, epsilon = 1e-15);
    assert_relative_eq!(dgamma_omega(-1, 1, &p, 0.0).unwrap(), -0.5, epsilon = 1e-15);
    for j in [1i64, 2, 5, -3] {
        for n in 1..=3 {
            let a = dgamma_omega(j, 2 * n, &p, 0.0).unwrap();
            let b = even_jet_at_zero(j, n, &p).unwrap();
            assert_relative_eq!(a, b, max_relative = 1e-6);
        }
    }
}

#[test]
fn jets_match_richardson_differences() {
    let p = params(1.0, Depth::Finite { h: 0.7 });
    let f = |g: f64| big_omega_j(3, &p, g).unwrap();
    let gamma = 0.8;
    let d = |h: f64| (f(gamma + h) - f(gamma - h)) / (2.0 * h);
    let rich = (4.0 * d(1e-3) - d(2e-3)) / 3.0;
    assert_relative_eq!(
        dgamma_omega(3, 1, &p, gamma).unwrap(),
        rich,
        max_relative = 1e-9
    );
}

#[test]
fn tangential_examples() {
    let p = params(1.0, Depth::Infinite);
    let s = TangentialSites::new(vec![1, 2], vec![1, 1]).unwrap();
    let v = tangential_vector(&s, &p, 0.0);
    assert_relative_eq!(v[0], 1.0);
    assert_relative_eq!(v[1], 2f64.sqrt());
    let s2 = TangentialSites::new(vec![1, 2], vec![1, -1]).unwrap();
    let v2 = tangential_vector(&s2, &p, 2.0);
    assert_relative_eq!(v2[0], big_omega_j(1, &p, 2.0).unwrap());
    assert_relative_eq!(v2[1], big_omega_j(-2, &p, 2.0).unwrap());
}

#[test]
fn site_zero_rejected() {
    let p = params(1.0, Depth::Infinite);
    assert!(omega_j(0, &p, 0.0).is_err());
    assert!(big_omega_j(0, &p, 0.0).is_err());
}

proptest! {
    #[test]
    fn evenness_and_splitting(j in 1i64..10_000, gamma in -3.0f64..3.0, h in prop_oneof![Just(None), (0.1f64..5.0).prop_map(Some)]) {
        let depth = h.map_or(Depth::Infinite, |h| Depth::Finite { h });
        let p = params(1.3, depth);
        prop_assert_eq!(omega_j(j, &p, gamma).unwrap(), omega_j(-j, &p, gamma).unwrap());
        prop_assert_eq!(symbol_g0(j, depth).unwrap(), symbol_g0(-j, depth).unwrap());
        let (a, b) = (big_omega_j(j, &p, gamma).unwrap(), big_omega_j(-j, &p, gamma).unwrap());
        let w = omega_j(j, &p, gamma).unwrap();
        prop_assert!(((a + b) - 2.0 * w).abs() <= 1e-12 * w);
        let gj = symbol_g0(j, depth).unwrap();
        let odd = gamma * gj / j as f64;
        prop_assert!(((a - b) - odd).abs() <= 1e-12 * w.max(odd.abs()).max(1.0));
    }

    #[test]
    fn finite_depth_limit(j in 1i64..2000, h in 0.05f64..4.0) {
        let gj = symbol_g0(j, Depth::Finite { h }).unwrap();
        let a = j as f64;
        prop_assert!((gj - a).abs() <= 2.0 * a * (-2.0 * h * a).exp() + 1e-12 * a);
    }

    #[test]
    fn asymptotic_remainder_bounded(j in 1i64..10_000, gamma in 0.5f64..1.5) {
        let p = params(1.0, Depth::Finite { h: 1.0 });
        let w = omega_j(j, &p, gamma).unwrap();
        let s = (j as f64).sqrt();
        prop_assert!(((w - s) * s).abs() <= 1.0);
    }
}
