//! The run configuration: one JSON document with a section per module.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use vortexkam_core::kam_reduce::{NormalFormConstants, RemainderSpec};
use vortexkam_core::measure::{MeasureCutoffs, ModelConstants};
use vortexkam_core::straightening::KamSchedule;
use vortexkam_core::transversality::{TransversalityConfig, TupleKind};
use vortexkam_core::{Depth, DispersionParams, TangentialSites};

/// Complete configuration. Every section is optional and falls back to its defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub dispersion: DispersionSection,
    pub sites: TangentialSites,
    pub divisors: DivisorSection,
    pub schedule: KamSchedule,
    pub synth: SynthSection,
    pub transversality: TransversalitySection,
    pub measure: MeasureSection,
    pub straightening: StraighteningSection,
    pub reduction: ReductionSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            dispersion: DispersionSection::default(),
            sites: TangentialSites::new(vec![1, 2], vec![1, 1]).expect("default sites are valid"),
            divisors: DivisorSection::default(),
            schedule: KamSchedule::default(),
            synth: SynthSection::default(),
            transversality: TransversalitySection::default(),
            measure: MeasureSection::default(),
            straightening: StraighteningSection::default(),
            reduction: ReductionSection::default(),
        }
    }
}

/// Physical parameters plus the sampling of the dispersion table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DispersionSection {
    pub g: f64,
    pub depth: Depth,
    pub gamma_interval: [f64; 2],
    /// Table covers `1 ≤ |j| ≤ modes`.
    pub modes: i64,
    /// Vorticities sampled in the table; `null` means five points across the interval.
    pub gammas: Option<Vec<f64>>,
}

impl Default for DispersionSection {
    fn default() -> Self {
        Self {
            g: 1.0,
            depth: Depth::Infinite,
            gamma_interval: [0.5, 1.5],
            modes: 32,
            gammas: None,
        }
    }
}

impl DispersionSection {
    pub fn params(&self) -> DispersionParams {
        DispersionParams {
            g: self.g,
            depth: self.depth,
            gamma_interval: self.gamma_interval,
        }
    }

    pub fn gamma_samples(&self) -> Vec<f64> {
        match &self.gammas {
            Some(v) => v.clone(),
            None => {
                let [a, b] = self.gamma_interval;
                (0..5).map(|k| a + (b - a) * k as f64 / 4.0).collect()
            }
        }
    }
}

/// Non-degeneracy index and Diophantine exponent used by the measure scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DivisorSection {
    pub m0: usize,
    /// `null` selects the smallest admissible exponent for `m0` and `ν`.
    pub tau: Option<f64>,
    pub c1: f64,
}

impl Default for DivisorSection {
    fn default() -> Self {
        Self {
            m0: 1,
            tau: None,
            c1: 1.0,
        }
    }
}

/// Linear traveling solution and its residual check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSection {
    /// One action per site; `null` means 0.01 each.
    pub amplitudes: Option<Vec<f64>>,
    /// `null` means the midpoint of the vorticity interval.
    pub gamma: Option<f64>,
    /// Number of random evaluation times in `[−t_max, t_max]`.
    pub times: usize,
    pub t_max: f64,
    /// Points of the `x` grid in the profile CSV.
    pub grid: usize,
}

impl Default for SynthSection {
    fn default() -> Self {
        Self {
            amplitudes: None,
            gamma: None,
            times: 20,
            t_max: 100.0,
            grid: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransversalitySection {
    pub kinds: Vec<TupleKind>,
    pub ell_max: i64,
    pub j_max: i64,
    pub m0_max: usize,
    pub gamma_grid: usize,
    pub refine: usize,
    pub positivity_floor: f64,
}

impl Default for TransversalitySection {
    fn default() -> Self {
        let c = TransversalityConfig::default();
        Self {
            kinds: TupleKind::ALL.to_vec(),
            ell_max: c.ell_max,
            j_max: c.j_max,
            m0_max: c.m0_max,
            gamma_grid: c.gamma_grid,
            refine: c.refine,
            positivity_floor: c.positivity_floor,
        }
    }
}

impl TransversalitySection {
    pub fn verifier(&self) -> TransversalityConfig {
        TransversalityConfig {
            ell_max: self.ell_max,
            j_max: self.j_max,
            m0_max: self.m0_max,
            gamma_grid: self.gamma_grid,
            refine: self.refine,
            positivity_floor: self.positivity_floor,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeasureSection {
    pub eps: f64,
    pub upsilons: Vec<f64>,
    /// Explicit model constants; `null` uses the synthetic model at `eps`.
    pub model: Option<ModelConstants>,
    pub cutoffs: MeasureCutoffs,
    /// Also scan the unperturbed model and report its emptiness threshold.
    pub unperturbed: bool,
}

impl Default for MeasureSection {
    fn default() -> Self {
        Self {
            eps: 1e-3,
            upsilons: (4..=10).map(|k| 2f64.powi(-k)).collect(),
            model: None,
            cutoffs: MeasureCutoffs::default(),
            unperturbed: true,
        }
    }
}

impl MeasureSection {
    pub fn model(&self) -> ModelConstants {
        self.model
            .unwrap_or_else(|| ModelConstants::synthetic(self.eps))
    }
}

/// Initial transport operator and output sampling for the straightening run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StraighteningSection {
    /// Fourier box `|ℓ|_∞ ≤ l_max`.
    pub l_max: i64,
    /// Random `p₀` is supported in `⟨ℓ⟩ ≤ support`.
    pub support: f64,
    pub decay: f64,
    /// `‖p₀‖_{s₀}`.
    pub norm: f64,
    pub m1: f64,
    /// `null` uses quadratic-irrational frequencies.
    pub omega: Option<Vec<f64>>,
    pub test_l_max: i64,
    pub conjugacy_grid: usize,
    /// Points per axis of the profile CSV; `null` disables it.
    pub profile_grid: Option<usize>,
}

impl Default for StraighteningSection {
    fn default() -> Self {
        Self {
            l_max: 16,
            support: 8.0,
            decay: 0.3,
            norm: 1e-3,
            m1: 0.0,
            omega: None,
            test_l_max: 2,
            conjugacy_grid: 64,
            profile_grid: Some(32),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReductionSection {
    pub gamma: f64,
    pub eps: f64,
    pub decay_ell: f64,
    pub decay_j: f64,
    pub l_op: i64,
    pub j_max: i64,
    pub steps: usize,
    pub normal_form: NormalFormConstants,
    /// Write the final transformation and remainder to `reduce_dump.bin`.
    pub dump: bool,
}

impl Default for ReductionSection {
    fn default() -> Self {
        let r = RemainderSpec::default();
        Self {
            gamma: 0.9,
            eps: r.eps,
            decay_ell: r.decay_ell,
            decay_j: r.decay_j,
            l_op: r.l_op,
            j_max: r.j_max,
            steps: 3,
            normal_form: NormalFormConstants::default(),
            dump: false,
        }
    }
}

impl ReductionSection {
    pub fn remainder(&self, seed: u64) -> RemainderSpec {
        RemainderSpec {
            eps: self.eps,
            decay_ell: self.decay_ell,
            decay_j: self.decay_j,
            l_op: self.l_op,
            j_max: self.j_max,
            seed,
        }
    }
}

/// A configuration problem, with the offending location when known.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl ConfigError {
    fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() || self.path == "." {
            write!(f, "{}", self.message)
        } else {
            write!(f, "{}: {}", self.path, self.message)
        }
    }
}

impl std::error::Error for ConfigError {}

/// Read, parse and validate a configuration file.
pub fn parse_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::new("", format!("cannot read {}: {e}", path.display())))?;
    parse_config_str(&text)
}

pub fn parse_config_str(text: &str) -> Result<RunConfig, ConfigError> {
    let mut de = serde_json::Deserializer::from_str(text);
    let cfg: RunConfig = serde_path_to_error::deserialize(&mut de)
        .map_err(|e| ConfigError::new(e.path().to_string(), e.inner().to_string()))?;
    de.end().map_err(|e| ConfigError::new("", e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

fn check(ok: bool, path: &str, msg: &str) -> Result<(), ConfigError> {
    if ok {
        Ok(())
    } else {
        Err(ConfigError::new(path, msg))
    }
}

fn within(x: f64, [a, b]: [f64; 2]) -> bool {
    x >= a && x <= b
}

impl RunConfig {
    /// Range checks beyond the schema; reports the first violation.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let d = &self.dispersion;
        check(
            d.g > 0.0 && d.g.is_finite(),
            "dispersion.g",
            "must be positive and finite",
        )?;
        if let Depth::Finite { h } = d.depth {
            check(
                h > 0.0 && h.is_finite(),
                "dispersion.depth.h",
                "must be positive and finite",
            )?;
        }
        let [g1, g2] = d.gamma_interval;
        check(
            g1.is_finite() && g2.is_finite(),
            "dispersion.gamma_interval",
            "endpoints must be finite",
        )?;
        check(
            g1 <= g2,
            "dispersion.gamma_interval",
            "need gamma1 <= gamma2",
        )?;
        check(d.modes >= 1, "dispersion.modes", "must be at least 1")?;
        if let Some(gs) = &d.gammas {
            check(!gs.is_empty(), "dispersion.gammas", "must not be empty")?;
            check(
                gs.iter().all(|g| g.is_finite()),
                "dispersion.gammas",
                "values must be finite",
            )?;
        }

        let dv = &self.divisors;
        check(dv.m0 >= 1, "divisors.m0", "must be at least 1")?;
        if let Some(t) = dv.tau {
            check(
                t >= 1.0 && t.is_finite(),
                "divisors.tau",
                "must be finite and at least 1",
            )?;
        }
        check(
            dv.c1 > 0.0 && dv.c1.is_finite(),
            "divisors.c1",
            "must be positive and finite",
        )?;

        self.schedule
            .validate()
            .map_err(|e| ConfigError::new("schedule", strip(&e)))?;

        let nu = self.sites.nu();
        let s = &self.synth;
        if let Some(a) = &s.amplitudes {
            check(
                a.len() == nu,
                "synth.amplitudes",
                "need one amplitude per site",
            )?;
            check(
                a.iter().all(|x| x.is_finite() && *x >= 0.0),
                "synth.amplitudes",
                "must be finite and nonnegative",
            )?;
        }
        if let Some(g) = s.gamma {
            check(
                within(g, d.gamma_interval),
                "synth.gamma",
                "must lie in dispersion.gamma_interval",
            )?;
        }
        check(s.times >= 1, "synth.times", "must be at least 1")?;
        check(
            s.t_max > 0.0 && s.t_max.is_finite(),
            "synth.t_max",
            "must be positive and finite",
        )?;
        check(s.grid >= 2, "synth.grid", "must be at least 2")?;

        let t = &self.transversality;
        check(
            !t.kinds.is_empty(),
            "transversality.kinds",
            "must not be empty",
        )?;
        t.verifier()
            .validate()
            .map_err(|e| ConfigError::new("transversality", strip(&e)))?;

        let m = &self.measure;
        check(
            m.eps >= 0.0 && m.eps.is_finite(),
            "measure.eps",
            "must be finite and nonnegative",
        )?;
        check(
            !m.upsilons.is_empty(),
            "measure.upsilons",
            "must not be empty",
        )?;
        for (k, u) in m.upsilons.iter().enumerate() {
            check(
                *u > 0.0 && *u < 1.0,
                &format!("measure.upsilons[{k}]"),
                "upsilon must lie in (0, 1)",
            )?;
        }
        check(
            m.cutoffs.ell_max >= 0,
            "measure.cutoffs.ell_max",
            "must be nonnegative",
        )?;
        check(
            m.cutoffs.j_max >= 1,
            "measure.cutoffs.j_max",
            "must be at least 1",
        )?;
        check(
            m.cutoffs.grid >= 16,
            "measure.cutoffs.grid",
            "must be at least 16",
        )?;
        if let Some(c) = &m.model {
            let all = [c.m1, c.m_half, c.m0, c.rho, c.kappa, c.tangential_amp];
            check(
                all.iter().all(|x| x.is_finite()),
                "measure.model",
                "constants must be finite",
            )?;
        }

        let st = &self.straightening;
        check(st.l_max >= 1, "straightening.l_max", "must be at least 1")?;
        check(
            st.support >= 1.0 && st.support.is_finite(),
            "straightening.support",
            "must be at least 1",
        )?;
        check(
            st.decay >= 0.0 && st.decay.is_finite(),
            "straightening.decay",
            "must be finite and nonnegative",
        )?;
        check(
            st.norm > 0.0 && st.norm.is_finite(),
            "straightening.norm",
            "must be positive and finite",
        )?;
        check(st.m1.is_finite(), "straightening.m1", "must be finite")?;
        if let Some(w) = &st.omega {
            check(
                w.len() == nu,
                "straightening.omega",
                "need one frequency per site",
            )?;
            check(
                w.iter().all(|x| x.is_finite()),
                "straightening.omega",
                "must be finite",
            )?;
        }
        check(
            st.test_l_max >= 0,
            "straightening.test_l_max",
            "must be nonnegative",
        )?;
        check(
            st.conjugacy_grid >= 4,
            "straightening.conjugacy_grid",
            "must be at least 4",
        )?;
        if let Some(g) = st.profile_grid {
            check(g >= 2, "straightening.profile_grid", "must be at least 2")?;
        }

        let r = &self.reduction;
        check(
            within(r.gamma, d.gamma_interval),
            "reduction.gamma",
            "must lie in dispersion.gamma_interval",
        )?;
        check(r.steps >= 1, "reduction.steps", "must be at least 1")?;
        r.remainder(self.seed)
            .validate()
            .map_err(|e| ConfigError::new("reduction", strip(&e)))?;
        let nf = &r.normal_form;
        check(
            nf.m1.is_finite() && nf.m_half.is_finite() && nf.m0.is_finite(),
            "reduction.normal_form",
            "constants must be finite",
        )?;
        Ok(())
    }
}

fn strip(e: &vortexkam_core::Error) -> String {
    match e {
        vortexkam_core::Error::Invalid(m) | vortexkam_core::Error::Divergence(m) => m.clone(),
    }
}
