//! Measure of the nearly-resonant vorticity sets for a synthetic model of the
//! perturbed frequencies, with Rüssmann-type scaling fits.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dispersion::{self, Depth, DispersionParams};
use crate::error::{Error, Result};
use crate::lattice::{box_points, bracket};
use crate::sites::TangentialSites;
use crate::transversality::{enumerate_tuples, TupleKind};

/// `(υ, τ)` and the secondary pair `(υ₀, τ₀)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DivisorParams {
    pub upsilon: f64,
    pub tau: f64,
    pub upsilon0: f64,
    pub tau0: f64,
}

impl DivisorParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.upsilon > 0.0 && self.upsilon <= self.upsilon0 && self.upsilon0 < 1.0) {
            return Err(Error::invalid("divisors: need 0 < upsilon <= upsilon0 < 1"));
        }
        if !(self.tau >= self.tau0 && self.tau0 >= 1.0 && self.tau.is_finite()) {
            return Err(Error::invalid("divisors: need tau >= tau0 >= 1"));
        }
        Ok(())
    }

    /// `υ₀ = υ^{1/(4m₀)}`, `τ₀ = m₀ν`.
    pub fn with_defaults(upsilon: f64, tau: f64, m0: usize, nu: usize) -> Self {
        let tau0 = (m0 * nu).max(1) as f64;
        Self {
            upsilon,
            tau: tau.max(tau0),
            upsilon0: upsilon.powf(1.0 / (4.0 * m0.max(1) as f64)),
            tau0,
        }
    }
}

/// Smallest admissible integer-plus-one choice `τ = m₀(2m₀ν + ν + 2) + 1`.
pub fn default_tau(m0: usize, nu: usize) -> f64 {
    (m0 * (2 * m0 * nu + nu + 2) + 1) as f64
}

/// Constants of `μ_j = m₁ j + m_{1/2} Ω_j − m₀ sgn j + ρ|j|^{−1/2} cos(κγ)` and of
/// `Ω⃗_ε = Ω⃗ + a (cos(κγ + k))_k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConstants {
    pub m1: f64,
    pub m_half: f64,
    pub m0: f64,
    pub rho: f64,
    pub kappa: f64,
    pub tangential_amp: f64,
}

impl ModelConstants {
    /// `m₁ = m₀ = ε/2`, `m_{1/2} = 1 + ε/2`, `ρ = ε`, `κ = 3`, `a = ε/2`.
    pub fn synthetic(eps: f64) -> Self {
        Self {
            m1: 0.5 * eps,
            m_half: 1.0 + 0.5 * eps,
            m0: 0.5 * eps,
            rho: eps,
            kappa: 3.0,
            tangential_amp: 0.5 * eps,
        }
    }

    pub fn unperturbed() -> Self {
        Self::synthetic(0.0)
    }
}

/// The perturbed frequency maps over a dispersion setting.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbedFrequencies {
    pub sites: TangentialSites,
    pub params: DispersionParams,
    pub model: ModelConstants,
}

impl PerturbedFrequencies {
    pub fn new(
        sites: TangentialSites,
        params: DispersionParams,
        model: ModelConstants,
    ) -> Result<Self> {
        params.validate()?;
        if !(model.m_half > 0.0) {
            return Err(Error::invalid("model: m_half must be positive"));
        }
        Ok(Self {
            sites,
            params,
            model,
        })
    }

    pub fn omega_eps(&self, gamma: f64) -> Vec<f64> {
        let mut w = dispersion::tangential_vector(&self.sites, &self.params, gamma);
        for (k, v) in w.iter_mut().enumerate() {
            *v += self.model.tangential_amp * (self.model.kappa * gamma + k as f64).cos();
        }
        w
    }

    pub fn mu(&self, j: i64, gamma: f64) -> f64 {
        let c = &self.model;
        c.m1 * j as f64 + c.m_half * dispersion::big_omega_raw(j, &self.params, gamma)
            - c.m0 * dispersion::sgn(j)
            + c.rho * (j.abs() as f64).powf(-0.5) * (c.kappa * gamma).cos()
    }

    /// Rigorous bound on `sup |Ω⃗_ε|_∞` over `[γ₁, γ₂]`.
    fn omega_sup_bound(&self) -> f64 {
        let gmax = self.params.gamma_interval[0]
            .abs()
            .max(self.params.gamma_interval[1].abs());
        self.sites
            .jvec()
            .iter()
            .map(|&j| {
                let gj = dispersion::g0(j, self.params.depth);
                (self.params.g * gj).sqrt() + gmax * gj / j.abs() as f64
            })
            .fold(0.0, f64::max)
            + self.model.tangential_amp.abs()
    }

    /// Constant `C` of the emptiness criterion: `Q_{ℓ,j,j'} = ∅` whenever
    /// `|j|^{1/2} + |j'|^{1/2} > C⟨ℓ⟩`. `None` when the bound degenerates.
    pub fn emptiness_constant(&self, upsilon: f64) -> Option<f64> {
        let c = &self.model;
        let tanh_min = match self.params.depth {
            Depth::Infinite => 1.0,
            Depth::Finite { h } => h.tanh(),
        };
        let cg = (self.params.g * tanh_min).sqrt();
        let den = c.m_half * cg - 4.0 * upsilon;
        if den <= 0.0 {
            return None;
        }
        let jinf = self.sites.jvec().iter().map(|j| j.abs()).max().unwrap_or(0) as f64;
        let gmax = self.params.gamma_interval[0]
            .abs()
            .max(self.params.gamma_interval[1].abs());
        let a = self.omega_sup_bound() + c.m1.abs() * jinf;
        let b = c.m_half * gmax + 2.0 * c.m0.abs() + 2.0 * c.rho.abs();
        Some((a + b) / den)
    }
}

/// Resonant-set families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    R0,
    RT,
    RI,
    /// Second-order difference divisors with `j j' < 0`.
    RIIOpposite,
    /// Second-order difference divisors with `j j' > 0`.
    RIISame,
    Q,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::R0 => "R0",
            Family::RT => "RT",
            Family::RI => "RI",
            Family::RIIOpposite => "RII-I1",
            Family::RIISame => "RII-I2",
            Family::Q => "Q",
        }
    }
}

/// A resonant-set index with its family.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResonantTuple {
    pub family: Family,
    pub ell: Vec<i64>,
    pub j: Option<i64>,
    pub jprime: Option<i64>,
}

impl ResonantTuple {
    /// The divisor whose sublevel set is measured.
    pub fn divisor(&self, freqs: &PerturbedFrequencies, gamma: f64) -> f64 {
        let w = freqs.omega_eps(gamma);
        let base: f64 = w.iter().zip(&self.ell).map(|(a, &l)| a * l as f64).sum();
        match self.family {
            Family::R0 => base,
            Family::RT => base - freqs.model.m1 * freqs.sites.momentum(&self.ell) as f64,
            Family::RI => base + freqs.mu(self.j.unwrap(), gamma),
            Family::RIIOpposite | Family::RIISame => {
                base + freqs.mu(self.j.unwrap(), gamma) - freqs.mu(self.jprime.unwrap(), gamma)
            }
            Family::Q => {
                base + freqs.mu(self.j.unwrap(), gamma) + freqs.mu(self.jprime.unwrap(), gamma)
            }
        }
    }

    /// Threshold divided by `υ`.
    pub fn weight(&self, tau: f64) -> f64 {
        let b = bracket(&self.ell).powf(-tau);
        let sq = |j: Option<i64>| (j.unwrap().abs() as f64).sqrt();
        match self.family {
            Family::R0 | Family::RT => 8.0 * b,
            Family::RI => 4.0 * sq(self.j) * b,
            Family::RIIOpposite | Family::RIISame => 4.0 * b,
            Family::Q => 4.0 * (sq(self.j) + sq(self.jprime)) * b,
        }
    }

    /// `threshold/⟨ℓ⟩`, the quantity raised to `1/m₀` in the Rüssmann bounds.
    pub fn russmann_scale(&self, upsilon: f64, tau: f64) -> f64 {
        upsilon * self.weight(tau) / bracket(&self.ell)
    }
}

fn lex_positive(ell: &[i64]) -> bool {
    ell.iter().find(|&&l| l != 0).is_some_and(|&l| l > 0)
}

/// Enumerate the resonant tuples in the truncation, in a fixed order. Tuples
/// whose sets coincide (`ℓ ↦ −ℓ` for R0/RT, swapping `j, j'` for Q, and
/// `(ℓ, j, j') ↦ (−ℓ, j', j)` for RII) appear once.
pub fn enumerate_resonant(
    sites: &TangentialSites,
    ell_max: i64,
    j_max: i64,
) -> Result<Vec<ResonantTuple>> {
    let mut out = Vec::new();
    for t in enumerate_tuples(sites, ell_max, j_max, TupleKind::Zero)? {
        if !lex_positive(&t.ell) {
            continue;
        }
        out.push(ResonantTuple {
            family: Family::R0,
            ell: t.ell.clone(),
            j: None,
            jprime: None,
        });
        out.push(ResonantTuple {
            family: Family::RT,
            ell: t.ell,
            j: None,
            jprime: None,
        });
    }
    for t in enumerate_tuples(sites, ell_max, j_max, TupleKind::First)? {
        out.push(ResonantTuple {
            family: Family::RI,
            ell: t.ell,
            j: t.j,
            jprime: None,
        });
    }
    for t in enumerate_tuples(sites, ell_max, j_max, TupleKind::SecondMinus)? {
        let (j, jp) = (t.j.unwrap(), t.jprime.unwrap());
        if j == jp || (crate::lattice::neg(&t.ell), jp) < (t.ell.clone(), j) {
            continue;
        }
        let family = if j * jp < 0 {
            Family::RIIOpposite
        } else {
            Family::RIISame
        };
        out.push(ResonantTuple {
            family,
            ell: t.ell,
            j: t.j,
            jprime: t.jprime,
        });
    }
    for t in enumerate_tuples(sites, ell_max, j_max, TupleKind::SecondPlus)? {
        if t.j > t.jprime {
            continue;
        }
        out.push(ResonantTuple {
            family: Family::Q,
            ell: t.ell,
            j: t.j,
            jprime: t.jprime,
        });
    }
    Ok(out)
}

/// `{γ : |f(γ)| < δ}` as a union of intervals.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SublevelResult {
    pub measure: f64,
    pub intervals: Vec<(f64, f64)>,
    pub grid_insufficient: bool,
}

/// Grid samples of a function plus refined interior extrema, reusable for many
/// levels `δ`.
pub struct ScannedFunction<F: Fn(f64) -> f64> {
    f: F,
    xs: Vec<f64>,
    ys: Vec<f64>,
    /// `(cell start index, abscissa, value)` of refined local minima (`min`) and maxima.
    minima: Vec<(usize, f64, f64)>,
    maxima: Vec<(usize, f64, f64)>,
    grid_insufficient: bool,
}

impl<F: Fn(f64) -> f64> ScannedFunction<F> {
    pub fn new(f: F, interval: [f64; 2], grid: usize) -> Result<Self> {
        let [a, b] = interval;
        if !(a <= b) || !a.is_finite() || !b.is_finite() {
            return Err(Error::invalid("sublevel: invalid interval"));
        }
        if grid < 3 {
            return Err(Error::invalid("sublevel: grid must have at least 3 points"));
        }
        let xs: Vec<f64> = (0..grid)
            .map(|k| a + (b - a) * k as f64 / (grid - 1) as f64)
            .collect();
        let ys: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
        let mut minima = Vec::new();
        let mut maxima = Vec::new();
        for k in 1..grid - 1 {
            let (l, c, r) = (ys[k - 1], ys[k], ys[k + 1]);
            if c <= l && c <= r {
                let (x, y) = golden(&f, xs[k - 1], xs[k + 1], 1.0);
                minima.push((k, x, y));
            }
            if c >= l && c >= r {
                let (x, y) = golden(&f, xs[k - 1], xs[k + 1], -1.0);
                maxima.push((k, x, -y));
            }
        }
        let grid_insufficient = minima.len() + maxima.len() > grid / 8;
        Ok(Self {
            f,
            xs,
            ys,
            minima,
            maxima,
            grid_insufficient,
        })
    }

    /// Smallest `|f|` seen on the grid and at refined extrema.
    pub fn min_abs(&self) -> f64 {
        let g = self.ys.iter().fold(f64::INFINITY, |a, v| a.min(v.abs()));
        let e = self
            .minima
            .iter()
            .chain(&self.maxima)
            .fold(f64::INFINITY, |a, v| a.min(v.2.abs()));
        g.min(e)
    }

    /// Whether `f` changes sign (on the grid or at refined extrema).
    pub fn has_sign_change(&self) -> bool {
        let pos = self.ys.iter().any(|&y| y > 0.0) || self.maxima.iter().any(|m| m.2 > 0.0);
        let neg = self.ys.iter().any(|&y| y < 0.0) || self.minima.iter().any(|m| m.2 < 0.0);
        (pos && neg) || self.ys.contains(&0.0)
    }

    pub fn sublevel(&self, delta: f64) -> SublevelResult {
        let n = self.xs.len();
        let mut cuts = vec![self.xs[0], self.xs[n - 1]];
        for level in [delta, -delta] {
            for k in 0..n - 1 {
                let (a, b) = (self.ys[k] - level, self.ys[k + 1] - level);
                if a == 0.0 {
                    cuts.push(self.xs[k]);
                } else if a * b < 0.0 {
                    cuts.push(bisect(
                        |x| (self.f)(x) - level,
                        self.xs[k],
                        self.xs[k + 1],
                        a,
                    ));
                }
            }
        }
        // Excursions through the level between grid points.
        for &(k, x, y) in &self.minima {
            if y < delta
                && self.ys[k - 1] >= delta
                && self.ys[k] >= delta
                && self.ys[k + 1] >= delta
            {
                cuts.push(bisect(
                    |t| (self.f)(t) - delta,
                    self.xs[k - 1],
                    x,
                    self.ys[k - 1] - delta,
                ));
                cuts.push(bisect(
                    |t| (self.f)(t) - delta,
                    x,
                    self.xs[k + 1],
                    y - delta,
                ));
            }
        }
        for &(k, x, y) in &self.maxima {
            if y > -delta
                && self.ys[k - 1] <= -delta
                && self.ys[k] <= -delta
                && self.ys[k + 1] <= -delta
            {
                cuts.push(bisect(
                    |t| (self.f)(t) + delta,
                    self.xs[k - 1],
                    x,
                    self.ys[k - 1] + delta,
                ));
                cuts.push(bisect(
                    |t| (self.f)(t) + delta,
                    x,
                    self.xs[k + 1],
                    y + delta,
                ));
            }
        }
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let mut intervals: Vec<(f64, f64)> = Vec::new();
        for w in cuts.windows(2) {
            let (a, b) = (w[0], w[1]);
            if b <= a {
                continue;
            }
            if (self.f)(0.5 * (a + b)).abs() < delta {
                match intervals.last_mut() {
                    Some(last) if last.1 == a => last.1 = b,
                    _ => intervals.push((a, b)),
                }
            }
        }
        let measure = intervals.iter().map(|(a, b)| b - a).sum();
        SublevelResult {
            measure,
            intervals,
            grid_insufficient: self.grid_insufficient,
        }
    }
}

/// Lebesgue measure of `{γ ∈ [γ₁, γ₂] : |f(γ)| < δ}`.
pub fn sublevel_measure(
    f: impl Fn(f64) -> f64,
    interval: [f64; 2],
    delta: f64,
    grid: usize,
) -> Result<SublevelResult> {
    if !(delta > 0.0) {
        return Err(Error::invalid("sublevel: delta must be positive"));
    }
    Ok(ScannedFunction::new(f, interval, grid)?.sublevel(delta))
}

fn bisect(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, fa: f64) -> f64 {
    let sa = fa.signum();
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let fm = f(m);
        if fm == 0.0 {
            return m;
        }
        if fm.signum() == sa {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Golden-section search for the minimum of `sign·f` on `[a, b]`; returns
/// `(x, sign·f(x))`.
fn golden(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64, sign: f64) -> (f64, f64) {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let mut fc = sign * f(c);
    let mut fd = sign * f(d);
    for _ in 0..80 {
        if (b - a).abs() <= 1e-15 * (1.0 + a.abs()) {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = sign * f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = sign * f(d);
        }
    }
    if fc < fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Measure of one resonant set.
pub fn resonant_set_measure(
    tuple: &ResonantTuple,
    freqs: &PerturbedFrequencies,
    divisors: &DivisorParams,
    grid: usize,
) -> Result<SublevelResult> {
    divisors.validate()?;
    sublevel_measure(
        |g| tuple.divisor(freqs, g),
        freqs.params.gamma_interval,
        divisors.upsilon * tuple.weight(divisors.tau),
        grid,
    )
}

/// Analytic emptiness test for second-plus tuples: `true` means the set is
/// provably empty and may be skipped.
pub fn emptiness_filter(tuple: &ResonantTuple, freqs: &PerturbedFrequencies, upsilon: f64) -> bool {
    if tuple.family != Family::Q {
        return false;
    }
    let Some(c) = freqs.emptiness_constant(upsilon) else {
        return false;
    };
    let s = (tuple.j.unwrap().abs() as f64).sqrt() + (tuple.jprime.unwrap().abs() as f64).sqrt();
    s > c * bracket(&tuple.ell)
}

/// Grid mask of `⋃_{ℓ≠0} R_ℓ^{(T)}(υ₀, τ₀)` over the truncation `|ℓ|_∞ ≤ ell_max`.
pub struct RtMask {
    pub gammas: Vec<f64>,
    pub inside: Vec<bool>,
}

pub fn rt_union_mask(
    freqs: &PerturbedFrequencies,
    divisors: &DivisorParams,
    ell_max: i64,
    grid: usize,
) -> RtMask {
    let [a, b] = freqs.params.gamma_interval;
    let gammas: Vec<f64> = (0..grid)
        .map(|k| a + (b - a) * k as f64 / (grid - 1).max(1) as f64)
        .collect();
    let ells: Vec<Vec<i64>> = box_points(freqs.sites.nu(), ell_max)
        .into_iter()
        .filter(|l| l.iter().any(|&x| x != 0))
        .collect();
    let inside = gammas
        .par_iter()
        .map(|&g| {
            let w = freqs.omega_eps(g);
            ells.iter().any(|l| {
                let v: f64 = w.iter().zip(l).map(|(a, &x)| a * x as f64).sum::<f64>()
                    - freqs.model.m1 * freqs.sites.momentum(l) as f64;
                v.abs() < 8.0 * divisors.upsilon0 * bracket(l).powf(-divisors.tau0)
            })
        })
        .collect();
    RtMask { gammas, inside }
}

/// Outcome of [`inclusion_check`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Inclusion {
    /// `min(|j|, |j'|)` is below `C₁ υ₀^{−2} ⟨ℓ⟩^{2(τ₀+1)}`; nothing is claimed.
    NotApplicable,
    Holds,
    Violated {
        gamma: f64,
    },
}

/// Check that, off `⋃ R^{(T)}(υ₀, τ₀)`, the difference divisor of a same-sign
/// tuple stays above `4υ⟨ℓ⟩^{−τ}` whenever `min(|j|, |j'|) ≥ C₁υ₀^{−2}⟨ℓ⟩^{2(τ₀+1)}`.
pub fn inclusion_check(
    tuple: &ResonantTuple,
    freqs: &PerturbedFrequencies,
    divisors: &DivisorParams,
    c1: f64,
    mask: &RtMask,
) -> Result<Inclusion> {
    let (Some(j), Some(jp)) = (tuple.j, tuple.jprime) else {
        return Err(Error::invalid("inclusion_check needs a second-order tuple"));
    };
    if j * jp <= 0 || freqs.sites.momentum(&tuple.ell) + j - jp != 0 {
        return Err(Error::invalid(
            "inclusion_check needs j j' > 0 and the difference momentum condition",
        ));
    }
    let br = bracket(&tuple.ell);
    let bound = c1 * divisors.upsilon0.powi(-2) * br.powf(2.0 * (divisors.tau0 + 1.0));
    if ((j.abs().min(jp.abs())) as f64) < bound {
        return Ok(Inclusion::NotApplicable);
    }
    let thr = 4.0 * divisors.upsilon * br.powf(-divisors.tau);
    for (&g, &inside) in mask.gammas.iter().zip(&mask.inside) {
        if !inside && tuple.divisor(freqs, g).abs() < thr {
            return Ok(Inclusion::Violated { gamma: g });
        }
    }
    Ok(Inclusion::Holds)
}

/// Truncation and resolution of a Cantor-complement computation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeasureCutoffs {
    pub ell_max: i64,
    pub j_max: i64,
    pub grid: usize,
}

impl Default for MeasureCutoffs {
    fn default() -> Self {
        Self {
            ell_max: 2,
            j_max: 40,
            grid: 4096,
        }
    }
}

/// Per-family sums and the merged union.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeasureBreakdown {
    pub upsilon: f64,
    /// `|⋃ all resonant sets|`, at most `γ₂ − γ₁`.
    pub union_measure: f64,
    pub r0: f64,
    pub rt: f64,
    pub ri: f64,
    pub rii_opposite: f64,
    pub rii_same: f64,
    pub q: f64,
    /// `|⋃ R^{(T)}(υ₀, τ₀)|` on the grid plus the same-sign sets not covered by the inclusion bound.
    pub rii_same_bound: f64,
    pub q_filtered: usize,
    pub tuples: usize,
    pub grid_insufficient: usize,
}

/// Measures of every tuple at several `υ`, sharing the grid scans.
pub struct CantorScan {
    pub tuples: Vec<ResonantTuple>,
    /// `[υ index][tuple index]`.
    pub per_tuple: Vec<Vec<f64>>,
    pub breakdowns: Vec<MeasureBreakdown>,
    /// Whether each tuple's divisor changes sign on the interval.
    pub crossing: Vec<bool>,
    /// `min |f| / weight` per tuple, zero where the divisor crosses.
    pub min_ratio: Vec<f64>,
}

impl CantorScan {
    /// Largest `υ` for which every set in the truncation is empty: zero if any
    /// divisor crosses zero on the interval.
    pub fn empty_threshold(&self) -> f64 {
        self.min_ratio.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn crossing_tuples(&self) -> Vec<&ResonantTuple> {
        self.tuples
            .iter()
            .zip(&self.crossing)
            .filter(|(_, &c)| c)
            .map(|(t, _)| t)
            .collect()
    }
}

/// Compute the Cantor-complement measure on the truncation for each `υ` in `upsilons`.
pub fn cantor_complement_measure(
    freqs: &PerturbedFrequencies,
    upsilons: &[f64],
    tau: f64,
    m0: usize,
    c1: f64,
    cutoffs: &MeasureCutoffs,
) -> Result<CantorScan> {
    if upsilons.is_empty() {
        return Err(Error::invalid("measure: empty upsilon list"));
    }
    let divs: Vec<DivisorParams> = upsilons
        .iter()
        .map(|&u| DivisorParams::with_defaults(u, tau, m0, freqs.sites.nu()))
        .collect();
    for d in &divs {
        d.validate()?;
    }
    let tuples = enumerate_resonant(&freqs.sites, cutoffs.ell_max, cutoffs.j_max)?;
    let interval = freqs.params.gamma_interval;
    let scans: Vec<(Vec<SublevelResult>, bool, f64)> = tuples
        .par_iter()
        .map(|t| {
            let w = t.weight(tau);
            let sc = ScannedFunction::new(|g| t.divisor(freqs, g), interval, cutoffs.grid)?;
            let res = divs.iter().map(|d| sc.sublevel(d.upsilon * w)).collect();
            let cross = sc.has_sign_change();
            Ok((res, cross, if cross { 0.0 } else { sc.min_abs() / w }))
        })
        .collect::<Result<_>>()?;
    let mut per_tuple = vec![vec![0.0; tuples.len()]; divs.len()];
    let mut breakdowns = Vec::with_capacity(divs.len());
    for (u, d) in divs.iter().enumerate() {
        let mask = rt_union_mask(freqs, d, cutoffs.ell_max, cutoffs.grid);
        let rt0 = mask_measure(&mask);
        let mut b = MeasureBreakdown {
            upsilon: d.upsilon,
            union_measure: 0.0,
            r0: 0.0,
            rt: 0.0,
            ri: 0.0,
            rii_opposite: 0.0,
            rii_same: 0.0,
            q: 0.0,
            rii_same_bound: rt0,
            q_filtered: 0,
            tuples: tuples.len(),
            grid_insufficient: 0,
        };
        let mut all = Vec::new();
        for (i, t) in tuples.iter().enumerate() {
            let r = &scans[i].0[u];
            per_tuple[u][i] = r.measure;
            if r.grid_insufficient {
                b.grid_insufficient += 1;
            }
            all.extend_from_slice(&r.intervals);
            match t.family {
                Family::R0 => b.r0 += r.measure,
                Family::RT => b.rt += r.measure,
                Family::RI => b.ri += r.measure,
                Family::RIIOpposite => b.rii_opposite += r.measure,
                Family::RIISame => {
                    b.rii_same += r.measure;
                    if inclusion_check(t, freqs, d, c1, &mask)? == Inclusion::NotApplicable {
                        b.rii_same_bound += r.measure;
                    }
                }
                Family::Q => {
                    if emptiness_filter(t, freqs, d.upsilon) {
                        b.q_filtered += 1;
                    }
                    b.q += r.measure;
                }
            }
        }
        b.union_measure = merged_length(all);
        breakdowns.push(b);
    }
    let crossing = scans.iter().map(|s| s.1).collect();
    let min_ratio = scans.iter().map(|s| s.2).collect();
    Ok(CantorScan {
        tuples,
        per_tuple,
        breakdowns,
        crossing,
        min_ratio,
    })
}

fn mask_measure(mask: &RtMask) -> f64 {
    let n = mask.gammas.len();
    if n < 2 {
        return 0.0;
    }
    let h = mask.gammas[1] - mask.gammas[0];
    let count = mask.inside.iter().filter(|&&b| b).count();
    (count as f64 * h).min(mask.gammas[n - 1] - mask.gammas[0])
}

/// Total length of a union of intervals.
pub fn merged_length(mut iv: Vec<(f64, f64)>) -> f64 {
    iv.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut total = 0.0;
    let mut cur: Option<(f64, f64)> = None;
    for (a, b) in iv {
        match cur {
            Some((ca, cb)) if a <= cb => cur = Some((ca, cb.max(b))),
            Some((ca, cb)) => {
                total += cb - ca;
                cur = Some((a, b));
            }
            None => cur = Some((a, b)),
        }
    }
    if let Some((a, b)) = cur {
        total += b - a;
    }
    total
}

/// Log-log regression of `measure ≈ C υ^{1/m₀}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScalingFit {
    pub exponent: f64,
    /// Least-squares `C` with the exponent fixed.
    pub c_fit: f64,
    /// Root-mean-square residual in natural log.
    pub residual: f64,
    /// Smallest `C` with `measure ≤ C υ^{1/m₀}` at every point.
    pub c_bound: f64,
    /// Free least-squares slope, for reference.
    pub free_slope: f64,
}

/// Fit with fixed exponent; `None` if any measure is zero.
pub fn fit_scaling(upsilons: &[f64], measures: &[f64], exponent: f64) -> Option<ScalingFit> {
    if upsilons.len() != measures.len()
        || upsilons.len() < 2
        || measures.iter().any(|&m| !(m > 0.0))
    {
        return None;
    }
    let xs: Vec<f64> = upsilons.iter().map(|u| u.ln()).collect();
    let ys: Vec<f64> = measures.iter().map(|m| m.ln()).collect();
    let n = xs.len() as f64;
    let logc = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| y - exponent * x)
        .sum::<f64>()
        / n;
    let residual = (xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - logc - exponent * x).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    let c_bound = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - exponent * x).exp())
        .fold(0.0, f64::max);
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    Some(ScalingFit {
        exponent,
        c_fit: logc.exp(),
        residual,
        c_bound,
        free_slope: sxy / sxx,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn linear_sublevel() {
        let r = sublevel_measure(|g| g, [0.0, 1.0], 0.1, 101).unwrap();
        assert_relative_eq!(r.measure, 0.1, epsilon = 1e-14);
    }

    #[test]
    fn quadratic_sublevel() {
        let d = 1e-4;
        let r = sublevel_measure(|g| g * g, [-1.0, 1.0], d, 64).unwrap();
        assert_relative_eq!(r.measure, 2.0 * d.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn tangency_between_grid_points() {
        // minimum 0.0005 at 0.33 is never sampled by an 11-point grid
        let r = sublevel_measure(
            |g| (g - 0.33).powi(2) * 100.0 + 0.0005,
            [0.0, 1.0],
            0.001,
            11,
        )
        .unwrap();
        assert_relative_eq!(r.measure, 2.0 * (0.0005f64 / 100.0).sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn default_tau_value() {
        assert_eq!(default_tau(1, 2), 9.0);
    }

    #[test]
    fn merged_union() {
        assert_relative_eq!(merged_length(vec![(0.0, 1.0), (0.5, 2.0), (3.0, 4.0)]), 3.0);
    }
}
