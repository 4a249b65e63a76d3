use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use vortexkam_core::dispersion::big_omega_j;
use vortexkam_core::kam_reduce::{
    build_l0, default_omega, run_reduction, NormalForm, NormalFormConstants, RemainderSpec,
};
use vortexkam_core::measure::{
    cantor_complement_measure, default_tau, MeasureCutoffs, ModelConstants, PerturbedFrequencies,
};
use vortexkam_core::straightening::{
    compose, quadratic_irrational_frequencies, random_even_profile, run_straightening, KamSchedule,
    TransportOp,
};
use vortexkam_core::transversality::{verify_transversality, TransversalityConfig, TupleKind};
use vortexkam_core::{DispersionParams, TangentialSites};

fn sites() -> TangentialSites {
    TangentialSites::new(vec![1, 2], vec![1, 1]).unwrap()
}

fn dispersion(c: &mut Criterion) {
    let p = DispersionParams::deep(1.0, 0.5, 1.5);
    c.bench_function("big_omega_j/1024 modes", |b| {
        b.iter(|| {
            (1..=1024)
                .map(|j| big_omega_j(black_box(j), &p, 0.9).unwrap())
                .sum::<f64>()
        })
    });
}

fn transversality(c: &mut Criterion) {
    let p = DispersionParams::deep(1.0, 0.5, 1.5);
    let cfg = TransversalityConfig {
        ell_max: 4,
        j_max: 10,
        gamma_grid: 128,
        ..Default::default()
    };
    c.bench_function("transversality/second-plus small box", |b| {
        b.iter(|| {
            verify_transversality(&sites(), &p, TupleKind::SecondPlus, black_box(&cfg)).unwrap()
        })
    });
}

fn measure(c: &mut Criterion) {
    let f = PerturbedFrequencies::new(
        sites(),
        DispersionParams::deep(1.0, 0.5, 1.5),
        ModelConstants::synthetic(1e-3),
    )
    .unwrap();
    let cut = MeasureCutoffs {
        ell_max: 1,
        j_max: 12,
        grid: 1024,
    };
    let ups = [2f64.powi(-4), 2f64.powi(-6)];
    let mut g = c.benchmark_group("measure");
    g.sample_size(10);
    g.bench_function("cantor scan ell 1 j 12", |b| {
        b.iter(|| {
            cantor_complement_measure(&f, &ups, default_tau(1, 2), 1, 1.0, black_box(&cut)).unwrap()
        })
    });
    g.finish();
}

fn straightening(c: &mut Criterion) {
    let jv = [1, 2];
    let p0 = random_even_profile(&jv, 12, 6.0, 0.3, 2.0, 1e-3, 7).unwrap();
    let beta = random_even_profile(&jv, 12, 2.0, 0.3, 2.0, 1e-3, 8)
        .unwrap()
        .dx();
    c.bench_function("compose/L 12", |b| {
        b.iter(|| compose(black_box(&p0), &beta).unwrap())
    });
    let x0 = TransportOp {
        m1: 0.0,
        p: p0.clone(),
        omega: quadratic_irrational_frequencies(2),
    };
    let sch = KamSchedule {
        nbar: 2,
        ..Default::default()
    };
    let mut g = c.benchmark_group("straightening");
    g.sample_size(10);
    g.bench_function("two steps L 12", |b| {
        b.iter(|| run_straightening(black_box(&x0), &sch).unwrap())
    });
    g.finish();
}

fn kam(c: &mut Criterion) {
    let s = sites();
    let params = DispersionParams::deep(1.0, 0.5, 1.5);
    let nf = NormalForm::new(&s, &params, NormalFormConstants::default(), 0.9, 8).unwrap();
    let spec = RemainderSpec {
        l_op: 3,
        j_max: 8,
        ..Default::default()
    };
    let (nf, op) = build_l0(&nf, &s, &spec).unwrap();
    let omega = default_omega(&s, &params, 0.9);
    let sch = KamSchedule {
        nbar: 2,
        ..Default::default()
    };
    let mut g = c.benchmark_group("kam");
    g.sample_size(10);
    g.bench_function("reduction l_op 3 j 8", |b| {
        b.iter(|| run_reduction(&nf, black_box(&op), &s, &omega, spec.eps, &sch).unwrap())
    });
    g.finish();
}

criterion_group!(
    benches,
    dispersion,
    transversality,
    measure,
    straightening,
    kam
);
criterion_main!(benches);
