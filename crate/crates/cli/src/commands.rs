//! Subcommands and the run driver.

use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use vortexkam_core::dispersion::{self, CoeffsMP};
use vortexkam_core::kam_reduce::{
    build_l0, default_omega, run_reduction, sector_remainder, Component, NormalForm,
    NormalFormConstants, ReductionHistory, RemainderSpec,
};
use vortexkam_core::linear_waves::{
    check_reversible_torus, residual_linear_system, synthesize_torus, LinearWaveSpec,
    ReversibilityCheck,
};
use vortexkam_core::measure::{
    cantor_complement_measure, default_tau, fit_scaling, CantorScan, MeasureBreakdown,
    MeasureCutoffs, ModelConstants, PerturbedFrequencies, ResonantTuple, ScalingFit,
};
use vortexkam_core::straightening::{
    default_test_functions, quadratic_irrational_frequencies, random_even_profile,
    run_straightening, verify_conjugacy, KamSchedule, StepDiagnostics, TransportOp,
};
use vortexkam_core::torus::grid_points;
use vortexkam_core::transversality::{
    f_monotonicity_check, jet_matrix_det0, verify_transversality, JetDeterminant,
    MonotonicityCheck, TransversalityConfig, TransversalityReport,
};
use vortexkam_core::{DispersionParams, Error};

use crate::artifacts::{ArtifactWriter, Manifest, Timing};
use crate::config::RunConfig;
use crate::json::csv_f64;

/// Subcommands of the `vortexkam` binary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Dispersion,
    Synth,
    Transversality,
    Measure,
    Straighten,
    Reduce,
    /// Every stage above, in order, with one manifest.
    All,
}

impl Command {
    pub const STAGES: [Command; 6] = [
        Command::Dispersion,
        Command::Synth,
        Command::Transversality,
        Command::Measure,
        Command::Straighten,
        Command::Reduce,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Dispersion => "dispersion",
            Command::Synth => "synth",
            Command::Transversality => "transversality",
            Command::Measure => "measure",
            Command::Straighten => "straighten",
            Command::Reduce => "reduce",
            Command::All => "all",
        }
    }

    fn stages(self) -> Vec<Command> {
        match self {
            Command::All => Self::STAGES.to_vec(),
            c => vec![c],
        }
    }
}

pub const EXIT_OK: u8 = 0;
pub const EXIT_IO: u8 = 1;
pub const EXIT_INVALID: u8 = 2;
pub const EXIT_DIVERGED: u8 = 3;

/// Failure of a run.
#[derive(Debug)]
pub enum RunError {
    Invalid(String),
    Io(anyhow::Error),
}

impl RunError {
    pub fn exit_code(&self) -> u8 {
        match self {
            RunError::Invalid(_) => EXIT_INVALID,
            RunError::Io(_) => EXIT_IO,
        }
    }
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Invalid(m) => write!(f, "invalid input: {m}"),
            RunError::Io(e) => write!(f, "{e:#}"),
        }
    }
}

impl std::error::Error for RunError {}

impl From<anyhow::Error> for RunError {
    fn from(e: anyhow::Error) -> Self {
        RunError::Io(e)
    }
}

/// Errors of one stage: divergence is recorded and the run continues.
enum StageError {
    Run(RunError),
    Diverged(String),
}

impl From<Error> for StageError {
    fn from(e: Error) -> Self {
        match e {
            Error::Invalid(m) => StageError::Run(RunError::Invalid(m)),
            Error::Divergence(m) => StageError::Diverged(m),
        }
    }
}

impl From<anyhow::Error> for StageError {
    fn from(e: anyhow::Error) -> Self {
        StageError::Run(RunError::Io(e))
    }
}

type StageResult = Result<Option<String>, StageError>;

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads; `None` or zero uses all cores.
    pub threads: Option<usize>,
}

/// Outcome of a completed run.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub exit_code: u8,
    /// `stage: reason` for every stage that flagged divergence.
    pub divergences: Vec<String>,
    pub manifest: Manifest,
}

/// Run `command` with `cfg`, writing every artifact into `out`.
pub fn run(
    command: Command,
    cfg: &RunConfig,
    out: &Path,
    opts: &RunOptions,
) -> Result<RunSummary, RunError> {
    cfg.validate()
        .map_err(|e| RunError::Invalid(e.to_string()))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.threads.unwrap_or(0))
        .build()
        .map_err(|e| RunError::Io(e.into()))?;
    let mut w = ArtifactWriter::new(out)?;
    w.write_json("config.json", cfg)?;
    let mut timing = Vec::new();
    let mut divergences = Vec::new();
    for stage in command.stages() {
        let t0 = Instant::now();
        let res = pool.install(|| run_stage(stage, cfg, &mut w));
        timing.push(Timing {
            stage: stage.name().to_string(),
            seconds: t0.elapsed().as_secs_f64(),
        });
        match res {
            Ok(None) => {}
            Ok(Some(reason)) => divergences.push(format!("{}: {reason}", stage.name())),
            Err(StageError::Diverged(reason)) => {
                w.write_json(
                    &format!("{}.json", stage.name()),
                    &FailedStage {
                        diverged: true,
                        reason: &reason,
                    },
                )?;
                divergences.push(format!("{}: {reason}", stage.name()));
            }
            Err(StageError::Run(e)) => return Err(e),
        }
    }
    let exit_code = if divergences.is_empty() {
        EXIT_OK
    } else {
        EXIT_DIVERGED
    };
    let manifest = Manifest {
        tool: "vortexkam".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        subcommand: command.name().into(),
        seed: cfg.seed,
        threads: pool.current_num_threads(),
        exit_code,
        files: Vec::new(),
        timing,
    };
    let manifest = w.finish(manifest)?;
    Ok(RunSummary {
        exit_code,
        divergences,
        manifest,
    })
}

#[derive(Serialize)]
struct FailedStage<'a> {
    diverged: bool,
    reason: &'a str,
}

fn run_stage(stage: Command, cfg: &RunConfig, w: &mut ArtifactWriter) -> StageResult {
    match stage {
        Command::Dispersion => run_dispersion(cfg, w),
        Command::Synth => run_synth(cfg, w),
        Command::Transversality => run_transversality(cfg, w),
        Command::Measure => run_measure(cfg, w),
        Command::Straighten => run_straighten(cfg, w),
        Command::Reduce => run_reduce(cfg, w),
        Command::All => unreachable!("expanded by Command::stages"),
    }
}

fn join_ints(v: &[i64]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(";")
}

fn opt_int(v: Option<i64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

#[derive(Serialize)]
struct DispersionRow {
    gamma: f64,
    j: i64,
    omega: f64,
    big_omega: f64,
    c_j: f64,
    m: f64,
    p_plus: f64,
    p_minus: f64,
}

#[derive(Serialize)]
struct DispersionReport<'a> {
    params: DispersionParams,
    modes: i64,
    gammas: &'a [f64],
    jvec: &'a [i64],
    /// Even-jet determinant at `γ = 0` for the tangential sites.
    vandermonde: JetDeterminant,
    monotonicity: MonotonicityCheck,
    rows: &'a [DispersionRow],
}

fn run_dispersion(cfg: &RunConfig, w: &mut ArtifactWriter) -> StageResult {
    let params = cfg.dispersion.params();
    let gammas = cfg.dispersion.gamma_samples();
    let k = cfg.dispersion.modes;
    let mut rows = Vec::new();
    for &gamma in &gammas {
        for j in (-k..=k).filter(|&j| j != 0) {
            let CoeffsMP { m, p_plus, p_minus } = dispersion::coeffs_m_p(j.abs(), &params, gamma)?;
            rows.push(DispersionRow {
                gamma,
                j,
                omega: dispersion::omega_j(j, &params, gamma)?,
                big_omega: dispersion::big_omega_j(j, &params, gamma)?,
                c_j: dispersion::c_j_remainder(j, &params, gamma)?,
                m,
                p_plus,
                p_minus,
            });
        }
    }
    let report = DispersionReport {
        params,
        modes: k,
        gammas: &gammas,
        jvec: cfg.sites.jvec(),
        vandermonde: jet_matrix_det0(cfg.sites.jvec(), &params)?,
        monotonicity: f_monotonicity_check(params.depth, k.max(2))?,
        rows: &rows,
    };
    w.write_json("dispersion.json", &report)?;
    let header = [
        "gamma",
        "j",
        "omega",
        "big_omega",
        "c_j",
        "m",
        "p_plus",
        "p_minus",
    ];
    w.write_csv(
        "dispersion.csv",
        &header,
        rows.iter().map(|r| {
            vec![
                csv_f64(r.gamma),
                r.j.to_string(),
                csv_f64(r.omega),
                csv_f64(r.big_omega),
                csv_f64(r.c_j),
                csv_f64(r.m),
                csv_f64(r.p_plus),
                csv_f64(r.p_minus),
            ]
        }),
    )?;
    Ok(None)
}

#[derive(Serialize)]
struct SynthMode {
    ell: Vec<i64>,
    j: i64,
    eta_re: f64,
    eta_im: f64,
    psi_re: f64,
    psi_im: f64,
}

#[derive(Serialize)]
struct SynthResidual {
    t: f64,
    residual: f64,
}

#[derive(Serialize)]
struct SynthReport {
    seed: u64,
    gamma: f64,
    amplitudes: Vec<f64>,
    omega: Vec<f64>,
    reversibility: ReversibilityCheck,
    modes: Vec<SynthMode>,
    residuals: Vec<SynthResidual>,
    max_residual: f64,
}

fn run_synth(cfg: &RunConfig, w: &mut ArtifactWriter) -> StageResult {
    let params = cfg.dispersion.params();
    let s = &cfg.synth;
    let [a, b] = params.gamma_interval;
    let gamma = s.gamma.unwrap_or(0.5 * (a + b));
    let amplitudes = s
        .amplitudes
        .clone()
        .unwrap_or_else(|| vec![0.01; cfg.sites.nu()]);
    let spec = LinearWaveSpec {
        sites: cfg.sites.clone(),
        amplitudes: amplitudes.clone(),
        params,
        gamma,
    };
    let torus = synthesize_torus(&spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let residuals: Vec<SynthResidual> = (0..s.times)
        .map(|_| {
            let t = rng.random_range(-s.t_max..s.t_max);
            SynthResidual {
                t,
                residual: residual_linear_system(&torus, &params, gamma, t),
            }
        })
        .collect();
    let max_residual = residuals.iter().map(|r| r.residual).fold(0.0, f64::max);
    let modes = torus
        .modes
        .iter()
        .map(|m| SynthMode {
            ell: m.ell.clone(),
            j: m.j,
            eta_re: m.eta.re,
            eta_im: m.eta.im,
            psi_re: m.second.re,
            psi_im: m.second.im,
        })
        .collect();
    let report = SynthReport {
        seed: cfg.seed,
        gamma,
        amplitudes,
        omega: torus.omega.clone(),
        reversibility: check_reversible_torus(&torus, 1e-14),
        modes,
        residuals,
        max_residual,
    };
    w.write_json("synth.json", &report)?;
    let u = torus.at_time(0.0);
    let n = s.grid;
    w.write_csv(
        "synth.csv",
        &["x", "eta", "psi"],
        (0..n).map(|k| {
            let x = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
            vec![
                csv_f64(x),
                csv_f64(u.eta.eval(x)),
                csv_f64(u.second.eval(x)),
            ]
        }),
    )?;
    Ok(None)
}

#[derive(Serialize)]
struct TransversalityOutput<'a> {
    params: DispersionParams,
    jvec: &'a [i64],
    config: TransversalityConfig,
    success: bool,
    /// Largest `m₀` needed over the families, `null` if any failed.
    m0: Option<usize>,
    /// Smallest `ρ₀` over the families.
    rho0: f64,
    reports: &'a [TransversalityReport],
}

fn run_transversality(cfg: &RunConfig, w: &mut ArtifactWriter) -> StageResult {
    let params = cfg.dispersion.params();
    let config = cfg.transversality.verifier();
    let mut reports = Vec::new();
    for &kind in &cfg.transversality.kinds {
        reports.push(verify_transversality(&cfg.sites, &params, kind, &config)?);
    }
    let success = reports.iter().all(|r| r.success());
    let m0 = if success {
        reports.iter().filter_map(|r| r.m0).max()
    } else {
        None
    };
    let rho0 = reports.iter().map(|r| r.rho0).fold(f64::INFINITY, f64::min);
    let out = TransversalityOutput {
        params,
        jvec: cfg.sites.jvec(),
        config,
        success,
        m0,
        rho0,
        reports: &reports,
    };
    w.write_json("transversality.json", &out)?;
    Ok(None)
}

#[derive(Serialize)]
struct UnperturbedSummary {
    measures: Vec<f64>,
    /// Largest `υ` with every resonant set empty; zero if some divisor crosses zero.
    empty_threshold: f64,
    /// Whether every measure at `υ` below the threshold is zero.
    zero_below_threshold: bool,
    crossings: Vec<ResonantTuple>,
}

#[derive(Serialize)]
struct MeasureReport<'a> {
    params: DispersionParams,
    jvec: &'a [i64],
    model: ModelConstants,
    eps: f64,
    tau: f64,
    m0: usize,
    c1: f64,
    cutoffs: MeasureCutoffs,
    upsilons: &'a [f64],
    tuples: usize,
    measures: Vec<f64>,
    /// Measures strictly decrease as `υ` decreases.
    monotone: bool,
    fit: Option<ScalingFit>,
    breakdowns: &'a [MeasureBreakdown],
    empty_threshold: f64,
    crossings: Vec<ResonantTuple>,
    unperturbed: Option<UnperturbedSummary>,
}

fn union_measures(scan: &CantorScan) -> Vec<f64> {
    scan.breakdowns.iter().map(|b| b.union_measure).collect()
}

fn strictly_decreasing_in_upsilon(upsilons: &[f64], measures: &[f64]) -> bool {
    let mut pairs: Vec<(f64, f64)> = upsilons
        .iter()
        .copied()
        .zip(measures.iter().copied())
        .collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    pairs.windows(2).all(|w| w[1].1 < w[0].1)
}

fn run_measure(cfg: &RunConfig, w: &mut ArtifactWriter) -> StageResult {
    let m = &cfg.measure;
    let params = cfg.dispersion.params();
    let nu = cfg.sites.nu();
    let m0 = cfg.divisors.m0;
    let tau = cfg.divisors.tau.unwrap_or_else(|| default_tau(m0, nu));
    let c1 = cfg.divisors.c1;
    let model = m.model();
    let freqs = PerturbedFrequencies::new(cfg.sites.clone(), params, model)?;
    let scan = cantor_complement_measure(&freqs, &m.upsilons, tau, m0, c1, &m.cutoffs)?;
    let measures = union_measures(&scan);
    let unperturbed = if m.unperturbed {
        let f0 =
            PerturbedFrequencies::new(cfg.sites.clone(), params, ModelConstants::unperturbed())?;
        let s0 = cantor_complement_measure(&f0, &m.upsilons, tau, m0, c1, &m.cutoffs)?;
        let measures = union_measures(&s0);
        let threshold = s0.empty_threshold();
        let zero_below_threshold = m
            .upsilons
            .iter()
            .zip(&measures)
            .filter(|(u, _)| **u < threshold)
            .all(|(_, v)| *v == 0.0);
        Some(UnperturbedSummary {
            measures,
            empty_threshold: threshold,
            zero_below_threshold,
            crossings: s0.crossing_tuples().into_iter().cloned().collect(),
        })
    } else {
        None
    };
    let report = MeasureReport {
        params,
        jvec: cfg.sites.jvec(),
        model,
        eps: m.eps,
        tau,
        m0,
        c1,
        cutoffs: m.cutoffs,
        upsilons: &m.upsilons,
        tuples: scan.tuples.len(),
        monotone: strictly_decreasing_in_upsilon(&m.upsilons, &measures),
        fit: fit_scaling(&m.upsilons, &measures, 1.0 / m0 as f64),
        measures,
        breakdowns: &scan.breakdowns,
        empty_threshold: scan.empty_threshold(),
        crossings: scan.crossing_tuples().into_iter().cloned().collect(),
        unperturbed,
    };
    w.write_json("measure.json", &report)?;
    let mut rows = Vec::new();
    for (k, &u) in m.upsilons.iter().enumerate() {
        for (t, v) in scan.tuples.iter().zip(&scan.per_tuple[k]) {
            rows.push(vec![
                csv_f64(u),
                t.family.name().to_string(),
                join_ints(&t.ell),
                opt_int(t.j),
                opt_int(t.jprime),
                csv_f64(*v),
            ]);
        }
    }
    w.write_csv(
        "measure.csv",
        &["upsilon", "family", "ell", "j", "jprime", "measure"],
        rows,
    )?;
    Ok(None)
}

#[derive(Serialize)]
struct StraightenReport<'a> {
    seed: u64,
    omega: &'a [f64],
    l_max: i64,
    schedule: &'a KamSchedule,
    steps: &'a [StepDiagnostics],
    /// `‖p_n‖_{s₀}` for `n = 0..=n̄`.
    norms: Vec<f64>,
    ratios: Vec<f64>,
    strictly_decreasing: bool,
    super_geometric: bool,
    /// Hermitian and parity defects vanish exactly at every step.
    structure_exact: bool,
    final_m1: f64,
    final_norm: f64,
    beta_norm: f64,
    conjugacy_residual: f64,
    /// `1e−8 + ‖p_n̄‖_{s₀}`.
    conjugacy_tolerance: f64,
    smallness: f64,
    diverged: bool,
}

fn run_straighten(cfg: &RunConfig, w: &mut ArtifactWriter) -> StageResult {
    let st = &cfg.straightening;
    let sch = &cfg.schedule;
    let jv = cfg.sites.jvec();
    let nu = cfg.sites.nu();
    let omega = st
        .omega
        .clone()
        .unwrap_or_else(|| quadratic_irrational_frequencies(nu));
    let p0 = random_even_profile(
        jv, st.l_max, st.support, st.decay, sch.s0, st.norm, cfg.seed,
    )?;
    let x0 = TransportOp {
        m1: st.m1,
        p: p0,
        omega: omega.clone(),
    };
    let h = run_straightening(&x0, sch)?;
    let norms = h.norms(sch.s0);
    let ratios: Vec<f64> = norms.windows(2).map(|w| w[1] / w[0]).collect();
    let tests = default_test_functions(jv, st.test_l_max);
    let conj = verify_conjugacy(&x0, &h.beta, &h.final_op, &tests, st.conjugacy_grid);
    let final_norm = *norms.last().expect("norms has n̄ + 1 entries");
    let report = StraightenReport {
        seed: cfg.seed,
        omega: &omega,
        l_max: st.l_max,
        schedule: sch,
        steps: &h.steps,
        strictly_decreasing: norms.windows(2).all(|w| w[1] < w[0]),
        super_geometric: ratios.windows(2).all(|w| w[1] < w[0]),
        structure_exact: h
            .steps
            .iter()
            .all(|d| d.hermitian_defect == 0.0 && d.parity_defect == 0.0),
        norms: norms.clone(),
        ratios,
        final_m1: h.final_op.m1,
        final_norm,
        beta_norm: h.beta.norm_s(sch.s0),
        conjugacy_residual: conj,
        conjugacy_tolerance: 1e-8 + final_norm,
        smallness: h.smallness,
        diverged: h.diverged,
    };
    w.write_json("straighten.json", &report)?;
    if let Some(m) = st.profile_grid {
        let pts = grid_points(nu, m);
        let a = x0.p.to_grid(m);
        let b = h.final_op.p.to_grid(m);
        let c = h.beta.to_grid(m);
        let mut header: Vec<String> = (1..=nu).map(|k| format!("psi_{k}")).collect();
        header.extend(["p0", "p_final", "beta"].map(String::from));
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        let rows = pts.iter().enumerate().map(|(i, p)| {
            let mut r: Vec<String> = p.iter().map(|x| csv_f64(*x)).collect();
            r.extend([csv_f64(a[i]), csv_f64(b[i]), csv_f64(c[i])]);
            r
        });
        w.write_csv("straighten_profiles.csv", &header, rows)?;
    }
    Ok(h.diverged.then(|| "norms stopped decreasing".to_string()))
}

#[derive(Serialize)]
struct ReduceReport<'a> {
    seed: u64,
    gamma: f64,
    omega: &'a [f64],
    remainder: RemainderSpec,
    normal_form: NormalFormConstants,
    schedule: &'a KamSchedule,
    final_off_diagonal: f64,
    /// `max_n max_j |Re R_j^j(0)|`; zero when every `r_j` is real.
    max_correction_imag: f64,
    /// `sup_j |j|^{1/2} |μ_j⁽ⁿ⁾ − μ_j⁽⁰⁾| / ε`.
    eigenvalue_weight_over_eps: f64,
    history: &'a ReductionHistory,
}

fn run_reduce(cfg: &RunConfig, w: &mut ArtifactWriter) -> StageResult {
    let r = &cfg.reduction;
    let params = cfg.dispersion.params();
    let sites = &cfg.sites;
    let spec = r.remainder(cfg.seed);
    let nf = NormalForm::new(sites, &params, r.normal_form, r.gamma, r.j_max)?;
    let (nf, table) = build_l0(&nf, sites, &spec)?;
    let omega = default_omega(sites, &params, r.gamma);
    let schedule = KamSchedule {
        nbar: r.steps,
        ..cfg.schedule.clone()
    };
    let res = run_reduction(&nf, &table, sites, &omega, spec.eps, &schedule)?;
    let h = &res.history;
    let report = ReduceReport {
        seed: cfg.seed,
        gamma: r.gamma,
        omega: &omega,
        remainder: spec,
        normal_form: r.normal_form,
        schedule: &schedule,
        final_off_diagonal: h.final_remainder.off_diagonal,
        max_correction_imag: h
            .steps
            .iter()
            .map(|s| s.correction_imag)
            .fold(0.0, f64::max),
        eigenvalue_weight_over_eps: h.eigenvalue_weight / spec.eps,
        history: h,
    };
    w.write_json("reduce.json", &report)?;
    if r.dump {
        w.write_bytes("reduce_dump.bin", &dump_bytes(&res, &omega))?;
    }
    Ok(h.diverged.then(|| {
        h.divergence_reason
            .clone()
            .unwrap_or_else(|| "diverged".into())
    }))
}

/// Little-endian dump of the final transformation and remainder; layout in docs/formats.md.
fn dump_bytes(res: &vortexkam_core::kam_reduce::ReductionResult, omega: &[f64]) -> Vec<u8> {
    let op = &res.state.op;
    let mut b = Vec::new();
    b.extend(op.l_op.to_le_bytes());
    b.extend(op.j_max.to_le_bytes());
    b.extend((op.nu as u64).to_le_bytes());
    b.extend((op.sectors.len() as u64).to_le_bytes());
    for (s, u) in op.sectors.iter().zip(&res.transform) {
        let n = s.basis.len();
        b.extend(s.momentum.to_le_bytes());
        b.extend((n as u64).to_le_bytes());
        for bi in &s.basis {
            let comp: u64 = if bi.comp == Component::U { 0 } else { 1 };
            b.extend(comp.to_le_bytes());
            for l in &bi.ell {
                b.extend(l.to_le_bytes());
            }
            b.extend(bi.j.to_le_bytes());
        }
        for r in 0..n {
            for c in 0..n {
                b.extend(u[(r, c)].to_le_bytes());
                b.extend(0f64.to_le_bytes());
            }
        }
        // R = i(A − H)
        let rem = sector_remainder(s, &res.state.normal, omega);
        for r in 0..n {
            for c in 0..n {
                b.extend(0f64.to_le_bytes());
                b.extend(rem[(r, c)].to_le_bytes());
            }
        }
    }
    b
}
