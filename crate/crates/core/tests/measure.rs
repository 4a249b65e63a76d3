use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vortexkam_core::measure::*;
use vortexkam_core::{DispersionParams, TangentialSites};

fn sites() -> TangentialSites {
    TangentialSites::new(vec![1, 2], vec![1, 1]).unwrap()
}

fn freqs(eps: f64) -> PerturbedFrequencies {
    PerturbedFrequencies::new(
        sites(),
        DispersionParams::deep(9.81, 0.5, 1.5),
        ModelConstants::synthetic(eps),
    )
    .unwrap()
}

fn upsilons() -> Vec<f64> {
    (4..=10).map(|k| 2f64.powi(-k)).collect()
}

/// Midpoint Riemann sum of the indicator of `|f| < δ`.
fn riemann(f: impl Fn(f64) -> f64, a: f64, b: f64, delta: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    (0..n)
        .filter(|&k| f(a + (k as f64 + 0.5) * h).abs() < delta)
        .count() as f64
        * h
}

#[test]
fn sublevel_examples() {
    let r = sublevel_measure(|g| g, [0.0, 1.0], 0.1, 4096).unwrap();
    assert!((r.measure - 0.1).abs() < 1e-14);
    assert_eq!(r.intervals.len(), 1);
    for d in [1e-2, 1e-5, 1e-9] {
        let r = sublevel_measure(|g| g * g, [-1.0, 1.0], d, 4096).unwrap();
        assert!((r.measure - 2.0 * d.sqrt()).abs() < 1e-12 * d.sqrt().max(1e-3));
    }
}

#[test]
fn sublevel_matches_riemann_on_trig_polynomials() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let n = 1_000_000;
    for _ in 0..100 {
        let coef: Vec<(f64, f64)> = (1..=5)
            .map(|_| (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let c0 = rng.random_range(-0.5..0.5);
        let f = |g: f64| {
            c0 + coef
                .iter()
                .enumerate()
                .map(|(k, (a, b))| {
                    let w = (k + 1) as f64 * std::f64::consts::TAU;
                    a * (w * g).cos() + b * (w * g).sin()
                })
                .sum::<f64>()
        };
        let delta = rng.random_range(0.05..0.5);
        let got = sublevel_measure(f, [0.0, 1.0], delta, 4096).unwrap();
        let want = riemann(f, 0.0, 1.0, delta, n);
        // one grid cell of slack per interval endpoint
        let tol = 1e-6 * (2 * got.intervals.len()).max(1) as f64;
        assert!(
            (got.measure - want).abs() <= tol,
            "{} vs {want}",
            got.measure
        );
    }
}

#[test]
fn double_zero_gives_half_exponent() {
    let deltas: Vec<f64> = (4..=12).map(|k| 10f64.powf(-(k as f64) / 2.0)).collect();
    let meas: Vec<f64> = deltas
        .iter()
        .map(|&d| {
            sublevel_measure(|g| (g - 0.73).powi(2) * (1.0 + g), [0.5, 1.5], d, 4096)
                .unwrap()
                .measure
        })
        .collect();
    let fit = fit_scaling(&deltas, &meas, 0.5).unwrap();
    assert!(
        (fit.free_slope - 0.5).abs() < 1e-3,
        "slope {}",
        fit.free_slope
    );
    assert!(fit.residual < 1e-3);
}

#[test]
fn unperturbed_zero_family_away_from_zero() {
    let f = freqs(0.0);
    let d = DivisorParams::with_defaults(1e-3, default_tau(1, 2), 1, 2);
    let t = ResonantTuple {
        family: Family::R0,
        ell: vec![1, 1],
        j: None,
        jprime: None,
    };
    assert!((0..=100).all(|k| t.divisor(&f, 0.5 + k as f64 / 100.0) > 1.0));
    assert_eq!(resonant_set_measure(&t, &f, &d, 4096).unwrap().measure, 0.0);
}

#[test]
fn russmann_constant_transfers_across_upsilon() {
    // fit C per family at the largest υ, then check the bound at smaller υ
    let f = freqs(1e-3);
    let tau = default_tau(1, 2);
    let tuples = enumerate_resonant(&sites(), 2, 40).unwrap();
    for family in [
        Family::R0,
        Family::RT,
        Family::RI,
        Family::RIIOpposite,
        Family::RIISame,
        Family::Q,
    ] {
        let fam: Vec<&ResonantTuple> = tuples.iter().filter(|t| t.family == family).collect();
        let ratio = |u: f64| -> Vec<f64> {
            let d = DivisorParams::with_defaults(u, tau, 1, 2);
            fam.iter()
                .map(|t| {
                    resonant_set_measure(t, &f, &d, 1024).unwrap().measure
                        / t.russmann_scale(u, tau)
                })
                .collect()
        };
        let c = ratio(2f64.powi(-4)).into_iter().fold(0.0, f64::max);
        for k in [6, 8, 10] {
            let worst = ratio(2f64.powi(-k)).into_iter().fold(0.0, f64::max);
            assert!(
                worst <= 1.05 * c + 1e-300,
                "{family:?} k={k}: {worst} > {c}"
            );
        }
    }
}

#[test]
fn emptiness_examples() {
    let f = freqs(1e-3);
    let big = ResonantTuple {
        family: Family::Q,
        ell: vec![1, 0],
        j: Some(10_000),
        jprime: Some(10_000),
    };
    assert!(emptiness_filter(&big, &f, 1e-2));
    let small = ResonantTuple {
        family: Family::Q,
        ell: vec![20, 20],
        j: Some(3),
        jprime: Some(4),
    };
    assert!(!emptiness_filter(&small, &f, 1e-2));
    let other = ResonantTuple {
        family: Family::RI,
        ell: vec![1, 0],
        j: Some(10_000),
        jprime: None,
    };
    assert!(!emptiness_filter(&other, &f, 1e-2));
}

#[test]
fn emptiness_boundary_is_monotone() {
    let f = freqs(1e-3);
    let upsilon = 1e-2;
    let c = f.emptiness_constant(upsilon).unwrap();
    let ell = vec![2, -1];
    let mut flipped = false;
    for j in 3..20_000i64 {
        let t = ResonantTuple {
            family: Family::Q,
            ell: ell.clone(),
            j: Some(j),
            jprime: Some(j),
        };
        let e = emptiness_filter(&t, &f, upsilon);
        assert_eq!(e, 2.0 * (j as f64).sqrt() > c * 3.0, "j {j}");
        assert!(!flipped || e, "filter flipped back at j {j}");
        flipped |= e;
    }
    assert!(flipped);
}

#[test]
fn filtered_q_sets_are_empty() {
    let f = freqs(1e-3);
    let tau = default_tau(1, 2);
    let upsilon = 2f64.powi(-4);
    let mut checked = 0;
    for t in enumerate_resonant(&sites(), 2, 400).unwrap() {
        if !emptiness_filter(&t, &f, upsilon) {
            continue;
        }
        let thr = upsilon * t.weight(tau);
        let min = (0..=200)
            .map(|k| t.divisor(&f, 0.5 + k as f64 / 200.0).abs())
            .fold(f64::INFINITY, f64::min);
        assert!(min >= thr, "{t:?}: {min} < {thr}");
        checked += 1;
    }
    assert!(checked > 100);
}

#[test]
fn inclusion_examples() {
    let f = freqs(0.0);
    let d = DivisorParams::with_defaults(2f64.powi(-4), default_tau(1, 2), 1, 2);
    let mask = rt_union_mask(&f, &d, 2, 1024);
    // ȷ·ℓ + j − j' = 0 with ℓ = (1, 0)
    let huge = ResonantTuple {
        family: Family::RIISame,
        ell: vec![1, 0],
        j: Some(10_000),
        jprime: Some(10_001),
    };
    assert_eq!(
        inclusion_check(&huge, &f, &d, 1.0, &mask).unwrap(),
        Inclusion::Holds
    );
    let low = ResonantTuple {
        family: Family::RIISame,
        ell: vec![1, 0],
        j: Some(3),
        jprime: Some(4),
    };
    assert_eq!(
        inclusion_check(&low, &f, &d, 1.0, &mask).unwrap(),
        Inclusion::NotApplicable
    );
    let bad = ResonantTuple {
        family: Family::RIISame,
        ell: vec![1, 0],
        j: Some(3),
        jprime: Some(9),
    };
    assert!(inclusion_check(&bad, &f, &d, 1.0, &mask).is_err());
}

#[test]
fn inclusion_holds_on_random_models() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let tau = default_tau(1, 2);
    for trial in 0..1000 {
        let eps = 10f64.powf(rng.random_range(-5.0..-2.0));
        let model = ModelConstants {
            m1: rng.random_range(-eps..eps),
            m_half: 1.0 + rng.random_range(-eps..eps),
            m0: rng.random_range(-eps..eps),
            rho: rng.random_range(-eps..eps),
            kappa: rng.random_range(1.0..4.0),
            tangential_amp: rng.random_range(-eps..eps),
        };
        let f = PerturbedFrequencies::new(sites(), DispersionParams::deep(9.81, 0.5, 1.5), model)
            .unwrap();
        let d = DivisorParams::with_defaults(2f64.powi(-rng.random_range(4..8)), tau, 1, 2);
        let mask = rt_union_mask(&f, &d, 2, 256);
        let ell = vec![rng.random_range(-2..=2i64), rng.random_range(-2..=2i64)];
        let sign = if rng.random_bool(0.5) { 1 } else { -1 };
        let base = rng.random_range(200_000..1_000_000i64);
        let j = sign * base;
        let jp = j + sites().momentum(&ell);
        if ell == [0, 0] {
            continue;
        }
        let t = ResonantTuple {
            family: Family::RIISame,
            ell,
            j: Some(j),
            jprime: Some(jp),
        };
        assert_eq!(
            inclusion_check(&t, &f, &d, 1.0, &mask).unwrap(),
            Inclusion::Holds,
            "trial {trial}: {t:?}"
        );
    }
}

#[test]
fn unperturbed_small_box_is_empty_below_threshold() {
    let f = freqs(0.0);
    let cut = MeasureCutoffs {
        ell_max: 1,
        j_max: 6,
        grid: 1024,
    };
    let probe =
        cantor_complement_measure(&f, &[2f64.powi(-4)], default_tau(1, 2), 1, 1.0, &cut).unwrap();
    let thr = probe.empty_threshold();
    assert!(thr > 0.0 && probe.crossing_tuples().is_empty());
    let below =
        cantor_complement_measure(&f, &[0.9 * thr.min(0.5)], default_tau(1, 2), 1, 1.0, &cut)
            .unwrap();
    assert_eq!(below.breakdowns[0].union_measure, 0.0);
}

#[test]
fn unperturbed_full_box_has_genuine_crossings() {
    let f = freqs(0.0);
    let scan = cantor_complement_measure(
        &f,
        &[2f64.powi(-10)],
        default_tau(1, 2),
        1,
        1.0,
        &MeasureCutoffs::default(),
    )
    .unwrap();
    assert_eq!(scan.empty_threshold(), 0.0);
    let crossing = scan.crossing_tuples();
    assert!(!crossing.is_empty());
    for t in crossing {
        assert_eq!(t.family, Family::Q);
        let vals: Vec<f64> = (0..=2000)
            .map(|k| t.divisor(&f, 0.5 + k as f64 / 2000.0))
            .collect();
        let (lo, hi) = vals
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
                (a.min(v), b.max(v))
            });
        assert!(lo < 0.0 && hi > 0.0, "{t:?}");
    }
}

#[test]
fn scan_invariants_and_scaling() {
    let f = freqs(1e-3);
    let ups = upsilons();
    let scan = cantor_complement_measure(
        &f,
        &ups,
        default_tau(1, 2),
        1,
        1.0,
        &MeasureCutoffs::default(),
    )
    .unwrap();
    let meas: Vec<f64> = scan.breakdowns.iter().map(|b| b.union_measure).collect();
    for w in meas.windows(2) {
        assert!(w[1] <= w[0]);
    }
    for b in &scan.breakdowns {
        assert!(b.union_measure <= 1.0);
        assert!(b.union_measure <= b.r0 + b.rt + b.ri + b.rii_opposite + b.rii_same + b.q + 1e-15);
        assert_eq!(b.grid_insufficient, 0);
    }
    for i in 0..scan.tuples.len() {
        for u in 1..ups.len() {
            assert!(scan.per_tuple[u][i] <= scan.per_tuple[u - 1][i]);
        }
    }
    let fit = fit_scaling(&ups, &meas, 1.0).unwrap();
    assert!(fit.residual <= 0.15, "{fit:?}");
    assert!((fit.free_slope - 1.0).abs() <= 0.15, "{fit:?}");
    for (u, m) in ups.iter().zip(&meas) {
        assert!(*m <= fit.c_bound * u * (1.0 + 1e-12));
    }
}

#[test]
fn merged_length_handles_overlaps() {
    assert_eq!(merged_length(vec![(0.0, 1.0), (0.5, 2.0), (3.0, 4.0)]), 3.0);
    assert_eq!(merged_length(vec![]), 0.0);
}

#[test]
fn divisor_validation() {
    assert!(DivisorParams {
        upsilon: 0.5,
        tau: 9.0,
        upsilon0: 0.4,
        tau0: 2.0
    }
    .validate()
    .is_err());
    assert!(DivisorParams {
        upsilon: 0.1,
        tau: 1.0,
        upsilon0: 0.5,
        tau0: 2.0
    }
    .validate()
    .is_err());
    assert!(DivisorParams::with_defaults(0.1, 9.0, 1, 2)
        .validate()
        .is_ok());
}
