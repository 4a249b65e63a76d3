//! KAM almost-diagonalization of `ω·∂_φ + iD + R` on a finite truncation of the
//! `(ℓ, j)` lattice.
//!
//! The operator acts on pairs `(u, w)` with `w = ū`. A basis vector is either
//! `u` at `(ℓ, j)`, `j ∈ S₀ᶜ`, or `w` at `(ℓ, k)`, `−k ∈ S₀ᶜ`; its momentum is
//! `ȷ·ℓ + j` (resp. `ȷ·ℓ + k`) and the operator is block diagonal in momentum.
//! Reversibility makes the operator `i·A` with `A` real, and reality gives
//! `A = −QAQ` where `Q` swaps `u(ℓ, j)` and `w(−ℓ, −j)`. Only sectors with
//! non-negative momentum are stored; sector `−p` is the `Q`-image of sector `p`.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cutoff::cutoff_chi;
use crate::dispersion::{self, DispersionParams};
use crate::error::{Error, Result};
use crate::expm::expm;
use crate::lattice::{box_points, bracket, dot};
use crate::sites::TangentialSites;
use crate::straightening::KamSchedule;

/// Bound on `‖X‖₁` above which a step is declared divergent.
pub const EXPM_GUARD: f64 = 50.0;

/// Constants of `μ_j⁽⁰⁾ = m₁ j + m_{1/2} Ω_j(γ) − m₀ sgn j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NormalFormConstants {
    pub m1: f64,
    pub m_half: f64,
    pub m0: f64,
}

impl Default for NormalFormConstants {
    fn default() -> Self {
        Self {
            m1: 0.0,
            m_half: 1.0,
            m0: 0.0,
        }
    }
}

/// Diagonal part: real eigenvalues `μ_j` for normal `|j| ≤ J`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormalForm {
    pub j_max: i64,
    /// `(j, μ_j)` sorted by `j`.
    pub mu: Vec<(i64, f64)>,
    pub m1: f64,
    pub m_half: f64,
    pub m0: f64,
    pub gamma: f64,
}

impl NormalForm {
    pub fn new(
        sites: &TangentialSites,
        params: &DispersionParams,
        consts: NormalFormConstants,
        gamma: f64,
        j_max: i64,
    ) -> Result<Self> {
        params.validate()?;
        if j_max < 1 {
            return Err(Error::invalid("normal form: j_max must be at least 1"));
        }
        if ![consts.m1, consts.m_half, consts.m0, gamma]
            .iter()
            .all(|x| x.is_finite())
        {
            return Err(Error::invalid("normal form: constants must be finite"));
        }
        let mu = (-j_max..=j_max)
            .filter(|&j| sites.is_normal(j))
            .map(|j| {
                let v = consts.m1 * j as f64
                    + consts.m_half * dispersion::big_omega_raw(j, params, gamma)
                    - consts.m0 * dispersion::sgn(j);
                (j, v)
            })
            .collect();
        Ok(Self {
            j_max,
            mu,
            m1: consts.m1,
            m_half: consts.m_half,
            m0: consts.m0,
            gamma,
        })
    }

    pub fn mu(&self, j: i64) -> Option<f64> {
        self.mu
            .binary_search_by_key(&j, |e| e.0)
            .ok()
            .map(|i| self.mu[i].1)
    }

    pub fn indices(&self) -> impl Iterator<Item = i64> + '_ {
        self.mu.iter().map(|e| e.0)
    }

    fn mu_at(&self, j: i64) -> f64 {
        self.mu(j).expect("index outside normal form")
    }

    /// `μ_j + r_j` for each listed correction.
    pub fn corrected(&self, r: &[(i64, f64)]) -> Self {
        let mut out = self.clone();
        for &(j, v) in r {
            if let Ok(i) = out.mu.binary_search_by_key(&j, |e| e.0) {
                out.mu[i].1 += v;
            }
        }
        out
    }
}

/// One Fourier coefficient `R_j^{j'}(ℓ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientEntry {
    pub ell: Vec<i64>,
    pub j: i64,
    pub jprime: i64,
    pub value: Complex64,
}

/// Coefficient tables of a Toeplitz-in-`φ` remainder. In `diag`,
/// `j, j' ∈ S₀ᶜ` with `ȷ·ℓ + j − j' = 0`; in `off`, `j ∈ S₀ᶜ`, `−j' ∈ S₀ᶜ` with
/// the same constraint, `j'` indexing the Fourier modes of the conjugate component.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedOperator {
    pub l_op: i64,
    pub j_max: i64,
    pub diag: Vec<CoefficientEntry>,
    pub off: Vec<CoefficientEntry>,
}

/// Outcome of [`TruncatedOperator::structure_check`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StructureReport {
    pub momentum_violations: usize,
    pub index_violations: usize,
    pub reversibility_violations: usize,
}

impl StructureReport {
    pub fn ok(&self) -> bool {
        self.momentum_violations == 0
            && self.index_violations == 0
            && self.reversibility_violations == 0
    }
}

type Key = (Vec<i64>, i64, i64);

impl TruncatedOperator {
    pub fn zeros(l_op: i64, j_max: i64) -> Self {
        Self {
            l_op,
            j_max,
            diag: Vec::new(),
            off: Vec::new(),
        }
    }

    /// Exact checks: momentum support, index sets, and purely imaginary coefficients.
    pub fn structure_check(&self, sites: &TangentialSites) -> StructureReport {
        let mut rep = StructureReport {
            momentum_violations: 0,
            index_violations: 0,
            reversibility_violations: 0,
        };
        for (block, off) in [(&self.diag, false), (&self.off, true)] {
            for e in block {
                if sites.momentum(&e.ell) + e.j - e.jprime != 0 {
                    rep.momentum_violations += 1;
                }
                let jp_ok = if off {
                    sites.is_normal(-e.jprime)
                } else {
                    sites.is_normal(e.jprime)
                };
                if !sites.is_normal(e.j)
                    || !jp_ok
                    || e.j.abs() > self.j_max
                    || e.jprime.abs() > self.j_max
                {
                    rep.index_violations += 1;
                }
                if e.value.re != 0.0 {
                    rep.reversibility_violations += 1;
                }
            }
        }
        rep
    }

    fn maps(&self) -> (HashMap<Key, f64>, HashMap<Key, f64>) {
        let f = |v: &[CoefficientEntry]| {
            v.iter()
                .map(|e| ((e.ell.clone(), e.j, e.jprime), e.value.im))
                .collect()
        };
        (f(&self.diag), f(&self.off))
    }
}

/// Synthetic remainder: amplitude and decay
/// `|R_j^{j'}(ℓ)| ∈ ε⟨ℓ⟩^{−decay_ell}(⟨j⟩^{1/2}⟨j'⟩^{1/2})^{−decay_j}·[1/2, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RemainderSpec {
    pub eps: f64,
    pub decay_ell: f64,
    pub decay_j: f64,
    pub l_op: i64,
    pub j_max: i64,
    pub seed: u64,
}

impl Default for RemainderSpec {
    fn default() -> Self {
        Self {
            eps: 1e-3,
            decay_ell: 2.0,
            decay_j: 0.5,
            l_op: 8,
            j_max: 16,
            seed: 0,
        }
    }
}

impl RemainderSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps >= 0.0 && self.eps.is_finite()) {
            return Err(Error::invalid(
                "remainder.eps must be finite and non-negative",
            ));
        }
        if !(self.decay_ell >= 0.0 && self.decay_ell.is_finite())
            || !(self.decay_j >= 0.0 && self.decay_j.is_finite())
        {
            return Err(Error::invalid(
                "remainder decay exponents must be finite and non-negative",
            ));
        }
        if self.l_op < 0 || self.j_max < 1 {
            return Err(Error::invalid("remainder: need l_op >= 0 and j_max >= 1"));
        }
        Ok(())
    }
}

fn jbr(j: i64) -> f64 {
    (j.abs().max(1)) as f64
}

/// Random reversible momentum-preserving remainder over `normal`.
pub fn build_l0(
    normal: &NormalForm,
    sites: &TangentialSites,
    spec: &RemainderSpec,
) -> Result<(NormalForm, TruncatedOperator)> {
    spec.validate()?;
    if normal.j_max < spec.j_max {
        return Err(Error::invalid(
            "remainder.j_max exceeds the normal-form range",
        ));
    }
    let mut nf = normal.clone();
    nf.mu.retain(|e| e.0.abs() <= spec.j_max);
    nf.j_max = spec.j_max;
    let mut op = TruncatedOperator::zeros(spec.l_op, spec.j_max);
    if spec.eps == 0.0 {
        return Ok((nf, op));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let js: Vec<i64> = nf.indices().collect();
    for ell in box_points(sites.nu(), spec.l_op) {
        let m = sites.momentum(&ell);
        let lw = spec.eps * bracket(&ell).powf(-spec.decay_ell);
        for &j in &js {
            let jp = j + m;
            if jp.abs() > spec.j_max {
                continue;
            }
            for off in [false, true] {
                let ok = if off {
                    sites.is_normal(-jp)
                } else {
                    sites.is_normal(jp)
                };
                if !ok {
                    continue;
                }
                let mag: f64 = rng.random_range(0.5..=1.0);
                let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                let v = sign * mag * lw * (jbr(j).sqrt() * jbr(jp).sqrt()).powf(-spec.decay_j);
                let e = CoefficientEntry {
                    ell: ell.clone(),
                    j,
                    jprime: jp,
                    value: Complex64::new(0.0, v),
                };
                if off {
                    op.off.push(e);
                } else {
                    op.diag.push(e);
                }
            }
        }
    }
    Ok((nf, op))
}

/// Least-squares decay exponents `(decay_ell, decay_j)` of a table.
pub fn fit_entry_decay(op: &TruncatedOperator) -> Option<(f64, f64)> {
    let rows: Vec<[f64; 3]> = op
        .diag
        .iter()
        .chain(&op.off)
        .filter(|e| e.value.norm() > 0.0)
        .map(|e| {
            [
                bracket(&e.ell).ln(),
                0.5 * (jbr(e.j) * jbr(e.jprime)).ln(),
                e.value.norm().ln(),
            ]
        })
        .collect();
    if rows.len() < 3 {
        return None;
    }
    let mut ata = nalgebra::Matrix3::<f64>::zeros();
    let mut atb = nalgebra::Vector3::<f64>::zeros();
    for r in &rows {
        let x = nalgebra::Vector3::new(1.0, r[0], r[1]);
        ata += x * x.transpose();
        atb += x * r[2];
    }
    let c = ata.lu().solve(&atb)?;
    Some((-c[1], -c[2]))
}

/// Difference divisors `ω·ℓ + μ_j − μ_{j'}` or sum divisors `ω·ℓ + μ_j + μ_{−j'}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DivisorKind {
    Difference,
    Sum,
}

pub fn melnikov_divisor(
    sites: &TangentialSites,
    omega: &[f64],
    normal: &NormalForm,
    ell: &[i64],
    j: i64,
    jprime: i64,
    kind: DivisorKind,
) -> Result<f64> {
    if ell.len() != sites.nu() || omega.len() != sites.nu() {
        return Err(Error::invalid("melnikov_divisor: dimension mismatch"));
    }
    if sites.momentum(ell) + j - jprime != 0 {
        return Err(Error::invalid(
            "melnikov_divisor: momentum constraint violated",
        ));
    }
    let mj = normal
        .mu(j)
        .ok_or_else(|| Error::invalid("melnikov_divisor: j outside the normal form"))?;
    let other = match kind {
        DivisorKind::Difference => normal.mu(jprime).map(|m| -m),
        DivisorKind::Sum => normal.mu(-jprime),
    }
    .ok_or_else(|| Error::invalid("melnikov_divisor: j' outside the normal form"))?;
    Ok(dot(omega, ell) + mj + other)
}

/// `υ⟨ℓ⟩^{−τ}` or `υ(|j|^{1/2} + |j'|^{1/2})⟨ℓ⟩^{−τ}`.
pub fn melnikov_threshold(
    kind: DivisorKind,
    ell: &[i64],
    j: i64,
    jprime: i64,
    upsilon: f64,
    tau: f64,
) -> f64 {
    let b = upsilon * bracket(ell).powf(-tau);
    match kind {
        DivisorKind::Difference => b,
        DivisorKind::Sum => b * ((j.abs() as f64).sqrt() + (jprime.abs() as f64).sqrt()),
    }
}

/// Solution of the homological equation on coefficient tables.
#[derive(Debug, Clone, PartialEq)]
pub struct TableHomological {
    pub x: TruncatedOperator,
    pub suppressed: usize,
    pub min_margin: f64,
}

/// `X = −R/(i·div)·χ(div/threshold)` for `⟨ℓ⟩ ≤ N`, excluding `(0, j, j)`.
pub fn solve_homological_matrix(
    r: &TruncatedOperator,
    sites: &TangentialSites,
    normal: &NormalForm,
    omega: &[f64],
    upsilon: f64,
    tau: f64,
    n: f64,
) -> Result<TableHomological> {
    let mut x = TruncatedOperator::zeros(r.l_op, r.j_max);
    let mut suppressed = 0;
    let mut min_margin = f64::INFINITY;
    for (src, kind) in [
        (&r.diag, DivisorKind::Difference),
        (&r.off, DivisorKind::Sum),
    ] {
        for e in src {
            if bracket(&e.ell) > n
                || (kind == DivisorKind::Difference
                    && e.j == e.jprime
                    && e.ell.iter().all(|&l| l == 0))
            {
                continue;
            }
            let d = melnikov_divisor(sites, omega, normal, &e.ell, e.j, e.jprime, kind)?;
            let thr = melnikov_threshold(kind, &e.ell, e.j, e.jprime, upsilon, tau);
            min_margin = min_margin.min(d.abs() / thr);
            let c = cutoff_chi(d / thr);
            if c < 1.0 {
                suppressed += 1;
            }
            if c == 0.0 {
                continue;
            }
            let v = -e.value * c / (Complex64::i() * d);
            let out = CoefficientEntry {
                ell: e.ell.clone(),
                j: e.j,
                jprime: e.jprime,
                value: v,
            };
            if kind == DivisorKind::Difference {
                x.diag.push(out);
            } else {
                x.off.push(out);
            }
        }
    }
    Ok(TableHomological {
        x,
        suppressed,
        min_margin,
    })
}

/// Largest entry of `ω·∂_φX − i[X, D] + Π_N R − [R]` over coefficients with
/// cutoff equal to one.
#[allow(clippy::too_many_arguments)]
pub fn homological_residual(
    x: &TruncatedOperator,
    r: &TruncatedOperator,
    sites: &TangentialSites,
    normal: &NormalForm,
    omega: &[f64],
    upsilon: f64,
    tau: f64,
    n: f64,
) -> Result<f64> {
    let cmap = |v: &[CoefficientEntry]| -> HashMap<Key, Complex64> {
        v.iter()
            .map(|e| ((e.ell.clone(), e.j, e.jprime), e.value))
            .collect()
    };
    let (xd, xo) = (cmap(&x.diag), cmap(&x.off));
    let mut worst: f64 = 0.0;
    for (src, xm, kind) in [
        (&r.diag, &xd, DivisorKind::Difference),
        (&r.off, &xo, DivisorKind::Sum),
    ] {
        for e in src {
            let zero = e.ell.iter().all(|&l| l == 0);
            if kind == DivisorKind::Difference && zero && e.j == e.jprime {
                continue;
            }
            let d = melnikov_divisor(sites, omega, normal, &e.ell, e.j, e.jprime, kind)?;
            let thr = melnikov_threshold(kind, &e.ell, e.j, e.jprime, upsilon, tau);
            let inside = bracket(&e.ell) <= n;
            if inside && cutoff_chi(d / thr) < 1.0 {
                continue;
            }
            let xv = xm
                .get(&(e.ell.clone(), e.j, e.jprime))
                .copied()
                .unwrap_or_default();
            let pr = if inside {
                e.value
            } else {
                Complex64::new(0.0, 0.0)
            };
            worst = worst.max((Complex64::i() * d * xv + pr).norm());
        }
    }
    Ok(worst)
}

/// Component of a basis vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Component {
    U,
    W,
}

/// `u` at `(ℓ, j)` or `w` at `(ℓ, k)`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct BasisIndex {
    pub comp: Component,
    pub ell: Vec<i64>,
    pub j: i64,
}

impl BasisIndex {
    fn mirror(&self) -> Self {
        let comp = if self.comp == Component::U {
            Component::W
        } else {
            Component::U
        };
        Self {
            comp,
            ell: self.ell.iter().map(|x| -x).collect(),
            j: -self.j,
        }
    }
}

/// Dense real block `A` of one momentum sector.
#[derive(Debug, Clone, PartialEq)]
pub struct Sector {
    pub momentum: i64,
    pub basis: Vec<BasisIndex>,
    pub a: DMatrix<f64>,
    /// Position of `Q(b)` for each basis vector; only filled for momentum zero.
    mirror: Vec<usize>,
}

/// The truncated operator as momentum sectors `0..=p_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct SectorOperator {
    pub nu: usize,
    pub l_op: i64,
    pub j_max: i64,
    pub sectors: Vec<Sector>,
}

fn diag_values(basis: &[BasisIndex], normal: &NormalForm, omega: &[f64]) -> Vec<f64> {
    basis
        .iter()
        .map(|b| match b.comp {
            Component::U => dot(omega, &b.ell) + normal.mu_at(b.j),
            Component::W => dot(omega, &b.ell) - normal.mu_at(-b.j),
        })
        .collect()
}

impl SectorOperator {
    /// Matrix of `i^{−1}(ω·∂_φ + iD + R)` restricted to `|ℓ|_∞ ≤ l_op`, `|j| ≤ J`.
    pub fn assemble(
        sites: &TangentialSites,
        normal: &NormalForm,
        omega: &[f64],
        table: &TruncatedOperator,
    ) -> Result<Self> {
        if omega.len() != sites.nu() {
            return Err(Error::invalid("omega has the wrong dimension"));
        }
        if normal.j_max != table.j_max {
            return Err(Error::invalid(
                "normal form and remainder use different j_max",
            ));
        }
        let jmax = table.j_max;
        let mut by_p: HashMap<i64, Vec<BasisIndex>> = HashMap::new();
        for ell in box_points(sites.nu(), table.l_op) {
            let m = sites.momentum(&ell);
            for j in -jmax..=jmax {
                if sites.is_normal(j) && m + j >= 0 {
                    by_p.entry(m + j).or_default().push(BasisIndex {
                        comp: Component::U,
                        ell: ell.clone(),
                        j,
                    });
                }
                if sites.is_normal(-j) && m + j >= 0 {
                    by_p.entry(m + j).or_default().push(BasisIndex {
                        comp: Component::W,
                        ell: ell.clone(),
                        j,
                    });
                }
            }
        }
        let (dmap, omap) = table.maps();
        let pmax = by_p.keys().copied().max().unwrap_or(0);
        let sectors = (0..=pmax)
            .into_par_iter()
            .map(|p| {
                let mut basis = by_p.get(&p).cloned().unwrap_or_default();
                basis.sort();
                let n = basis.len();
                let h = diag_values(&basis, normal, omega);
                let mut a = DMatrix::<f64>::zeros(n, n);
                for (r, ba) in basis.iter().enumerate() {
                    for (c, bb) in basis.iter().enumerate() {
                        let v = match (ba.comp, bb.comp) {
                            (Component::U, Component::U) => {
                                let dl: Vec<i64> =
                                    ba.ell.iter().zip(&bb.ell).map(|(x, y)| x - y).collect();
                                dmap.get(&(dl, ba.j, bb.j)).copied()
                            }
                            (Component::U, Component::W) => {
                                let dl: Vec<i64> =
                                    ba.ell.iter().zip(&bb.ell).map(|(x, y)| x - y).collect();
                                omap.get(&(dl, ba.j, bb.j)).copied()
                            }
                            (Component::W, Component::W) => {
                                let dl: Vec<i64> =
                                    ba.ell.iter().zip(&bb.ell).map(|(x, y)| y - x).collect();
                                dmap.get(&(dl, -ba.j, -bb.j)).map(|v| -v)
                            }
                            (Component::W, Component::U) => {
                                let dl: Vec<i64> =
                                    ba.ell.iter().zip(&bb.ell).map(|(x, y)| y - x).collect();
                                omap.get(&(dl, -ba.j, -bb.j)).map(|v| -v)
                            }
                        };
                        a[(r, c)] = v.unwrap_or(0.0);
                    }
                    a[(r, r)] += h[r];
                }
                let mirror = if p == 0 {
                    mirror_positions(&basis)
                } else {
                    Vec::new()
                };
                let mut s = Sector {
                    momentum: p,
                    basis,
                    a,
                    mirror,
                };
                s.symmetrize();
                s
            })
            .collect();
        Ok(Self {
            nu: sites.nu(),
            l_op: table.l_op,
            j_max: jmax,
            sectors,
        })
    }

    pub fn dim(&self) -> usize {
        self.sectors
            .iter()
            .map(|s| {
                if s.momentum == 0 {
                    s.basis.len()
                } else {
                    2 * s.basis.len()
                }
            })
            .sum()
    }

    /// Exact checks: every basis vector carries its sector's momentum, the
    /// momentum-zero block satisfies `A = −QAQ`, and all entries are real.
    pub fn structure_check(&self, sites: &TangentialSites) -> StructureReport {
        let mut rep = StructureReport {
            momentum_violations: 0,
            index_violations: 0,
            reversibility_violations: 0,
        };
        for s in &self.sectors {
            for b in &s.basis {
                if sites.momentum(&b.ell) + b.j != s.momentum {
                    rep.momentum_violations += 1;
                }
                let ok = match b.comp {
                    Component::U => sites.is_normal(b.j),
                    Component::W => sites.is_normal(-b.j),
                };
                if !ok || b.j.abs() > self.j_max || b.ell.iter().any(|l| l.abs() > self.l_op) {
                    rep.index_violations += 1;
                }
            }
            if s.a.iter().any(|v| !v.is_finite()) {
                rep.reversibility_violations += 1;
            }
            if s.momentum == 0 {
                let n = s.basis.len();
                for r in 0..n {
                    for c in 0..n {
                        if s.a[(r, c)] != -s.a[(s.mirror[r], s.mirror[c])] {
                            rep.reversibility_violations += 1;
                        }
                    }
                }
            }
        }
        rep
    }
}

fn mirror_positions(basis: &[BasisIndex]) -> Vec<usize> {
    let pos: HashMap<&BasisIndex, usize> = basis.iter().enumerate().map(|(i, b)| (b, i)).collect();
    basis.iter().map(|b| pos[&b.mirror()]).collect()
}

impl Sector {
    /// Enforce `A = −QAQ` exactly on the self-mirrored sector.
    fn symmetrize(&mut self) {
        if self.momentum != 0 {
            return;
        }
        let n = self.basis.len();
        let old = self.a.clone();
        for r in 0..n {
            for c in 0..n {
                self.a[(r, c)] = (old[(r, c)] - old[(self.mirror[r], self.mirror[c])]) / 2.0;
            }
        }
    }
}

/// Norms of a remainder on the whole truncation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RemainderNorms {
    /// Spectral norm of `R`.
    pub full: f64,
    /// Spectral norm of `R` with its diagonal removed.
    pub off_diagonal: f64,
    /// Largest diagonal entry of `R`.
    pub diagonal_max: f64,
    /// Frobenius norm of `R` (upper bound for `full`).
    pub frobenius: f64,
    /// Spectral norm of `⟨D⟩^{1/4}|R|⟨D⟩^{1/4}`.
    pub weighted: f64,
}

/// Largest singular value by power iteration on `MᵀM`.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    let n = m.ncols();
    if n == 0 || m.nrows() == 0 {
        return 0.0;
    }
    let mut v = DVector::from_fn(n, |i, _| 1.0 + 0.1 * ((i * 7919 % 101) as f64 / 101.0));
    v /= v.norm();
    let mut sigma = 0.0;
    for _ in 0..500 {
        let w = m.tr_mul(&(m * &v));
        let nw = w.norm();
        if nw == 0.0 {
            return 0.0;
        }
        let next = nw.sqrt();
        v = w / nw;
        if (next - sigma).abs() <= 1e-12 * next {
            sigma = next;
            break;
        }
        sigma = next;
    }
    sigma
}

fn remainder_of(s: &Sector, h: &[f64]) -> DMatrix<f64> {
    let mut r = s.a.clone();
    for (i, v) in h.iter().enumerate() {
        r[(i, i)] -= v;
    }
    r
}

/// `A − H` of one sector, the real matrix of `i^{−1}R`.
pub fn sector_remainder(s: &Sector, normal: &NormalForm, omega: &[f64]) -> DMatrix<f64> {
    remainder_of(s, &diag_values(&s.basis, normal, omega))
}

/// Norms of `A − H` with `H` built from `normal`.
pub fn remainder_norms(op: &SectorOperator, normal: &NormalForm, omega: &[f64]) -> RemainderNorms {
    let per: Vec<(f64, f64, f64, f64, f64)> = op
        .sectors
        .par_iter()
        .map(|s| {
            let h = diag_values(&s.basis, normal, omega);
            let r = remainder_of(s, &h);
            let mut off = r.clone();
            let mut dmax: f64 = 0.0;
            for i in 0..off.nrows() {
                dmax = dmax.max(off[(i, i)].abs());
                off[(i, i)] = 0.0;
            }
            let w: Vec<f64> = s.basis.iter().map(|b| jbr(b.j).powf(0.25)).collect();
            let weighted =
                DMatrix::from_fn(r.nrows(), r.ncols(), |i, k| w[i] * r[(i, k)].abs() * w[k]);
            let frob2 = r.norm_squared() * if s.momentum == 0 { 1.0 } else { 2.0 };
            (
                spectral_norm(&r),
                spectral_norm(&off),
                dmax,
                frob2,
                spectral_norm(&weighted),
            )
        })
        .collect();
    let mut out = RemainderNorms {
        full: 0.0,
        off_diagonal: 0.0,
        diagonal_max: 0.0,
        frobenius: 0.0,
        weighted: 0.0,
    };
    for p in per {
        out.full = out.full.max(p.0);
        out.off_diagonal = out.off_diagonal.max(p.1);
        out.diagonal_max = out.diagonal_max.max(p.2);
        out.frobenius += p.3;
        out.weighted = out.weighted.max(p.4);
    }
    out.frobenius = out.frobenius.sqrt();
    out
}

/// A divisor whose cutoff factor was below one.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuppressedEntry {
    pub row: BasisIndex,
    pub col: BasisIndex,
    pub divisor: f64,
    pub threshold: f64,
    pub cutoff: f64,
    pub entry: f64,
}

/// Per-step record.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KamStepDiagnostics {
    pub n: usize,
    pub scale: f64,
    pub remainder: RemainderNorms,
    /// `(j, r_j)` absorbed into the diagonal at this step.
    pub corrections: Vec<(i64, f64)>,
    /// `sup_j |j|^{1/2} |r_j|`.
    pub correction_weight: f64,
    /// `max |Re R_j^j(0)|` of the complex coefficient, zero for a reversible remainder.
    pub correction_imag: f64,
    pub generator_norm1: f64,
    /// `min |div|/threshold` over the pairs with `⟨Δℓ⟩ ≤ N`.
    pub melnikov_margin: f64,
    pub in_melnikov_set: bool,
    pub suppressed: Vec<SuppressedEntry>,
    /// Largest entry of exact minus second-order Lie conjugation.
    pub lie_defect: f64,
}

/// State of the iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct KamState {
    pub normal: NormalForm,
    pub op: SectorOperator,
}

struct SectorStep {
    a: DMatrix<f64>,
    e_plus: DMatrix<f64>,
    e_minus: DMatrix<f64>,
    xnorm: f64,
    margin: f64,
    suppressed: Vec<SuppressedEntry>,
    lie: f64,
}

/// Largest absolute entry.
fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |a, v| a.max(v.abs()))
}

fn sector_step(s: &Sector, h: &[f64], upsilon: f64, tau: f64, scale: f64) -> Result<SectorStep> {
    let n = s.basis.len();
    let r = remainder_of(s, h);
    let mut x = DMatrix::<f64>::zeros(n, n);
    let mut margin = f64::INFINITY;
    let mut suppressed = Vec::new();
    for a in 0..n {
        for b in 0..n {
            if a == b {
                continue;
            }
            let (ba, bb) = (&s.basis[a], &s.basis[b]);
            let dl: Vec<i64> = ba.ell.iter().zip(&bb.ell).map(|(x, y)| x - y).collect();
            if bracket(&dl) > scale {
                continue;
            }
            let d = h[a] - h[b];
            let kind = if ba.comp == bb.comp {
                DivisorKind::Difference
            } else {
                DivisorKind::Sum
            };
            let thr = melnikov_threshold(kind, &dl, ba.j, bb.j, upsilon, tau);
            margin = margin.min(d.abs() / thr);
            let rv = r[(a, b)];
            if rv == 0.0 {
                continue;
            }
            let c = cutoff_chi(d / thr);
            if c < 1.0 {
                suppressed.push(SuppressedEntry {
                    row: ba.clone(),
                    col: bb.clone(),
                    divisor: d,
                    threshold: thr,
                    cutoff: c,
                    entry: rv,
                });
            }
            if c > 0.0 {
                x[(a, b)] = -rv * c / d;
            }
        }
    }
    let xnorm = crate::expm::norm1(&x);
    let e_plus = expm(&x, EXPM_GUARD)?;
    let e_minus = expm(&(-&x), EXPM_GUARD)?;
    let a_new = &e_minus * &s.a * &e_plus;
    let comm = &s.a * &x - &x * &s.a;
    let lie2 = &s.a + &comm + (&comm * &x - &x * &comm) * 0.5;
    let lie = max_abs(&(&a_new - lie2));
    Ok(SectorStep {
        a: a_new,
        e_plus,
        e_minus,
        xnorm,
        margin,
        suppressed,
        lie,
    })
}

/// Per-sector transforms of one step: `e^{X}` and `e^{−X}`.
pub struct StepTransforms {
    pub plus: Vec<DMatrix<f64>>,
    pub minus: Vec<DMatrix<f64>>,
}

/// One KAM step: absorb `[R]` into the diagonal and conjugate by `e^{X}` exactly.
pub fn kam_step(
    state: &KamState,
    omega: &[f64],
    schedule: &KamSchedule,
    n: usize,
) -> Result<(KamState, KamStepDiagnostics, StepTransforms)> {
    schedule.validate()?;
    let scale = schedule.scale(n as i64);
    let normal = &state.normal;
    let remainder = remainder_norms(&state.op, normal, omega);
    let mut corrections = Vec::new();
    for s in &state.op.sectors {
        let h = diag_values(&s.basis, normal, omega);
        for (i, b) in s.basis.iter().enumerate() {
            if b.ell.iter().all(|&l| l == 0) {
                let rv = s.a[(i, i)] - h[i];
                match b.comp {
                    Component::U => corrections.push((b.j, rv)),
                    Component::W if b.j != 0 => corrections.push((-b.j, -rv)),
                    Component::W => {}
                }
            }
        }
    }
    corrections.sort_by_key(|c| c.0);
    corrections.dedup_by_key(|c| c.0);
    let steps: Vec<SectorStep> = state
        .op
        .sectors
        .par_iter()
        .map(|s| {
            let h = diag_values(&s.basis, normal, omega);
            sector_step(s, &h, schedule.upsilon, schedule.tau, scale)
        })
        .collect::<Result<_>>()?;
    let mut op = state.op.clone();
    let mut plus = Vec::with_capacity(steps.len());
    let mut minus = Vec::with_capacity(steps.len());
    let mut diag = KamStepDiagnostics {
        n,
        scale,
        remainder,
        correction_weight: corrections
            .iter()
            .map(|&(j, r)| (j.abs() as f64).sqrt() * r.abs())
            .fold(0.0, f64::max),
        correction_imag: 0.0,
        corrections: corrections.clone(),
        generator_norm1: 0.0,
        melnikov_margin: f64::INFINITY,
        in_melnikov_set: true,
        suppressed: Vec::new(),
        lie_defect: 0.0,
    };
    for (sec, st) in op.sectors.iter_mut().zip(steps) {
        sec.a = st.a;
        sec.symmetrize();
        diag.generator_norm1 = diag.generator_norm1.max(st.xnorm);
        diag.melnikov_margin = diag.melnikov_margin.min(st.margin);
        diag.suppressed.extend(st.suppressed);
        diag.lie_defect = diag.lie_defect.max(st.lie);
        plus.push(st.e_plus);
        minus.push(st.e_minus);
    }
    diag.in_melnikov_set = diag.melnikov_margin >= 1.0;
    let normal = normal.corrected(&corrections);
    Ok((
        KamState { normal, op },
        diag,
        StepTransforms { plus, minus },
    ))
}

/// Complete reduction record.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReductionHistory {
    pub steps: Vec<KamStepDiagnostics>,
    /// `μ⁽ⁿ⁾` after each completed step, starting with `μ⁽⁰⁾`.
    pub mu: Vec<Vec<(i64, f64)>>,
    pub final_remainder: RemainderNorms,
    /// Off-diagonal spectral norm before each step and after the last one.
    pub off_diagonal_norms: Vec<f64>,
    /// Whether `off_diagonal_norms` decreases with decreasing step ratios.
    pub super_geometric: bool,
    /// `max |U^{−1}A₀U − A_n|` over all sectors.
    pub conjugacy_error: f64,
    /// `sup_j |j|^{1/2} |μ_j⁽ⁿ⁾ − μ_j⁽⁰⁾|`.
    pub eigenvalue_weight: f64,
    /// `sup_j |j|^{1/2} |μ_j⁽ⁿ⁾ − μ_j⁽ⁿ⁻¹⁾|` per step.
    pub eigenvalue_drift: Vec<f64>,
    pub structure: StructureReport,
    pub dim: usize,
    pub sectors: usize,
    /// `N₀^{τ₁+1} ε υ^{−4}`, reported only.
    pub smallness: f64,
    pub diverged: bool,
    pub divergence_reason: Option<String>,
}

/// Final operator and accumulated transformation.
pub struct ReductionResult {
    pub history: ReductionHistory,
    pub state: KamState,
    /// Per-sector `U = e^{X₀} ⋯ e^{X_{n−1}}`.
    pub transform: Vec<DMatrix<f64>>,
}

/// Run `schedule.nbar` steps of the reduction starting from `L₀`.
pub fn run_reduction(
    normal: &NormalForm,
    table: &TruncatedOperator,
    sites: &TangentialSites,
    omega: &[f64],
    eps: f64,
    schedule: &KamSchedule,
) -> Result<ReductionResult> {
    schedule.validate()?;
    let t = table.structure_check(sites);
    if !t.ok() {
        return Err(Error::invalid(format!(
            "remainder violates its structure: {t:?}"
        )));
    }
    let op0 = SectorOperator::assemble(sites, normal, omega, table)?;
    let mut state = KamState {
        normal: normal.clone(),
        op: op0.clone(),
    };
    let mut u: Vec<DMatrix<f64>> = op0
        .sectors
        .iter()
        .map(|s| DMatrix::identity(s.basis.len(), s.basis.len()))
        .collect();
    let mut uinv = u.clone();
    let mut steps = Vec::new();
    let mut mu = vec![normal.mu.clone()];
    let mut diverged = false;
    let mut reason = None;
    let mut structure = state.op.structure_check(sites);
    for n in 0..schedule.nbar {
        match kam_step(&state, omega, schedule, n) {
            Ok((next, d, tr)) => {
                for (k, (p, m)) in tr.plus.into_iter().zip(tr.minus).enumerate() {
                    u[k] = &u[k] * p;
                    uinv[k] = m * &uinv[k];
                }
                state = next;
                mu.push(state.normal.mu.clone());
                steps.push(d);
                let s = state.op.structure_check(sites);
                if !s.ok() {
                    structure = s;
                }
            }
            Err(Error::Divergence(msg)) => {
                diverged = true;
                reason = Some(msg);
                break;
            }
            Err(e) => return Err(e),
        }
    }
    let final_remainder = remainder_norms(&state.op, &state.normal, omega);
    if !diverged {
        if !final_remainder.full.is_finite() {
            diverged = true;
            reason = Some("non-finite remainder".into());
        } else if let Some(first) = steps.first() {
            if final_remainder.full > first.remainder.full {
                diverged = true;
                reason = Some("remainder grew over the iteration".into());
            }
        }
    }
    let conjugacy_error = op0
        .sectors
        .par_iter()
        .zip(&state.op.sectors)
        .zip(u.par_iter().zip(&uinv))
        .map(|((s0, sn), (uu, ui))| max_abs(&(ui * &s0.a * uu - &sn.a)))
        .reduce(|| 0.0, f64::max);
    let weight = |a: &[(i64, f64)], b: &[(i64, f64)]| {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x.0.abs() as f64).sqrt() * (x.1 - y.1).abs())
            .fold(0.0, f64::max)
    };
    let eigenvalue_weight = weight(mu.last().unwrap(), &mu[0]);
    let mut off_diagonal_norms: Vec<f64> = steps.iter().map(|s| s.remainder.off_diagonal).collect();
    off_diagonal_norms.push(final_remainder.off_diagonal);
    let ratios: Vec<f64> = off_diagonal_norms.windows(2).map(|w| w[1] / w[0]).collect();
    let super_geometric =
        !diverged && ratios.iter().all(|&r| r < 1.0) && ratios.windows(2).all(|w| w[1] < w[0]);
    let eigenvalue_drift = mu.windows(2).map(|w| weight(&w[1], &w[0])).collect();
    let smallness =
        (schedule.n0 as f64).powf(schedule.tau1() + 1.0) * eps * schedule.upsilon.powi(-4);
    let history = ReductionHistory {
        steps,
        mu,
        final_remainder,
        off_diagonal_norms,
        super_geometric,
        conjugacy_error,
        eigenvalue_weight,
        eigenvalue_drift,
        structure,
        dim: state.op.dim(),
        sectors: state.op.sectors.len(),
        smallness,
        diverged,
        divergence_reason: reason,
    };
    Ok(ReductionResult {
        history,
        state,
        transform: u,
    })
}

/// `Ω⃗(γ)`, the default frequency vector.
pub fn default_omega(sites: &TangentialSites, params: &DispersionParams, gamma: f64) -> Vec<f64> {
    dispersion::tangential_vector(sites, params, gamma)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup(
        eps: f64,
        l_op: i64,
        j_max: i64,
    ) -> (TangentialSites, NormalForm, TruncatedOperator, Vec<f64>) {
        let sites = TangentialSites::new(vec![1, 2], vec![1, 1]).unwrap();
        let params = DispersionParams::deep(1.0, 0.5, 1.5);
        let nf =
            NormalForm::new(&sites, &params, NormalFormConstants::default(), 1.0, j_max).unwrap();
        let spec = RemainderSpec {
            eps,
            l_op,
            j_max,
            ..Default::default()
        };
        let (nf, op) = build_l0(&nf, &sites, &spec).unwrap();
        let omega = default_omega(&sites, &params, 1.0);
        (sites, nf, op, omega)
    }

    #[test]
    fn zero_remainder() {
        let (sites, _, op, _) = setup(0.0, 3, 6);
        assert!(op.diag.is_empty() && op.off.is_empty());
        assert!(op.structure_check(&sites).ok());
    }

    #[test]
    fn generated_structure() {
        let (sites, _, op, _) = setup(1e-3, 3, 8);
        assert!(op.structure_check(&sites).ok());
        let (a, b) = fit_entry_decay(&op).unwrap();
        assert!((a - 2.0).abs() < 0.1 && (b - 0.5).abs() < 0.1);
    }

    #[test]
    fn sector_assembly_structure() {
        let (sites, nf, op, omega) = setup(1e-3, 2, 6);
        let s = SectorOperator::assemble(&sites, &nf, &omega, &op).unwrap();
        assert!(s.structure_check(&sites).ok());
        let n_l = 25;
        let n_u = (-6..=6).filter(|&j| sites.is_normal(j)).count();
        assert_eq!(s.dim(), 2 * n_l * n_u);
    }
}
