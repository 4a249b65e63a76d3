//! Non-degeneracy of the frequency curves and transversality of the Melnikov
//! divisors `Ω⃗·ℓ`, `Ω⃗·ℓ + Ω_j`, `Ω⃗·ℓ + Ω_j ∓ Ω_{j'}` in the vorticity.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dispersion::{self, big_omega_jet, Depth, DispersionParams, MAX_JET_ORDER};
use crate::error::{Error, Result};
use crate::lattice::{box_points, bracket};
use crate::sites::TangentialSites;

/// The four divisor families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TupleKind {
    /// `Ω⃗·ℓ`, `ℓ ≠ 0`.
    Zero,
    /// `Ω⃗·ℓ + Ω_j`, `ȷ·ℓ + j = 0`.
    First,
    /// `Ω⃗·ℓ + Ω_j − Ω_{j'}`, `ȷ·ℓ + j − j' = 0`, `(ℓ, j, j') ≠ (0, j, j)`.
    SecondMinus,
    /// `Ω⃗·ℓ + Ω_j + Ω_{j'}`, `ȷ·ℓ + j + j' = 0`.
    SecondPlus,
}

impl TupleKind {
    pub const ALL: [TupleKind; 4] = [
        TupleKind::Zero,
        TupleKind::First,
        TupleKind::SecondMinus,
        TupleKind::SecondPlus,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TupleKind::Zero => "zero",
            TupleKind::First => "first",
            TupleKind::SecondMinus => "second-minus",
            TupleKind::SecondPlus => "second-plus",
        }
    }
}

/// An index tuple satisfying the momentum constraint of its family.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MomentumTuple {
    pub kind: TupleKind,
    pub ell: Vec<i64>,
    pub j: Option<i64>,
    pub jprime: Option<i64>,
}

impl MomentumTuple {
    /// Exact integer check of the family constraint and the index exclusions.
    pub fn satisfies_constraint(&self, sites: &TangentialSites) -> bool {
        let m = sites.momentum(&self.ell);
        match (self.kind, self.j, self.jprime) {
            (TupleKind::Zero, None, None) => self.ell.iter().any(|&l| l != 0),
            (TupleKind::First, Some(j), None) => sites.is_normal(j) && m + j == 0,
            (TupleKind::SecondMinus, Some(j), Some(jp)) => {
                sites.is_normal(j)
                    && sites.is_normal(jp)
                    && m + j - jp == 0
                    && !(self.ell.iter().all(|&l| l == 0) && j == jp)
            }
            (TupleKind::SecondPlus, Some(j), Some(jp)) => {
                sites.is_normal(j) && sites.is_normal(jp) && m + j + jp == 0
            }
            _ => false,
        }
    }

    /// `(site, coefficient)` pairs such that the divisor is `Σ c Ω_site`.
    pub fn terms(&self, sites: &TangentialSites) -> Vec<(i64, f64)> {
        let mut t: Vec<(i64, f64)> = sites
            .jvec()
            .iter()
            .zip(&self.ell)
            .filter(|(_, &l)| l != 0)
            .map(|(&j, &l)| (j, l as f64))
            .collect();
        match self.kind {
            TupleKind::Zero => {}
            TupleKind::First => t.push((self.j.unwrap(), 1.0)),
            TupleKind::SecondMinus => {
                t.push((self.j.unwrap(), 1.0));
                t.push((self.jprime.unwrap(), -1.0));
            }
            TupleKind::SecondPlus => {
                t.push((self.j.unwrap(), 1.0));
                t.push((self.jprime.unwrap(), 1.0));
            }
        }
        t
    }

    /// Derivatives `0..=order` of the divisor at `γ`.
    pub fn jet(
        &self,
        sites: &TangentialSites,
        params: &DispersionParams,
        gamma: f64,
        order: usize,
    ) -> Vec<f64> {
        let mut out = vec![0.0; order + 1];
        for (j, c) in self.terms(sites) {
            for (o, v) in out.iter_mut().zip(big_omega_jet(j, params, gamma, order)) {
                *o += c * v;
            }
        }
        out
    }
}

/// All tuples of `kind` with `|ℓ|_∞ ≤ ell_max` and `|j|, |j'| ≤ j_max`, in
/// lexicographic order of `(ℓ, j)`.
pub fn enumerate_tuples(
    sites: &TangentialSites,
    ell_max: i64,
    j_max: i64,
    kind: TupleKind,
) -> Result<Vec<MomentumTuple>> {
    if ell_max < 1 || j_max < 1 {
        return Err(Error::invalid("ell_max and j_max must be at least 1"));
    }
    let mut out = Vec::new();
    for ell in box_points(sites.nu(), ell_max) {
        let m = sites.momentum(&ell);
        let zero = ell.iter().all(|&l| l == 0);
        match kind {
            TupleKind::Zero => {
                if !zero {
                    out.push(MomentumTuple {
                        kind,
                        ell,
                        j: None,
                        jprime: None,
                    });
                }
            }
            TupleKind::First => {
                let j = -m;
                if j.abs() <= j_max && sites.is_normal(j) {
                    out.push(MomentumTuple {
                        kind,
                        ell,
                        j: Some(j),
                        jprime: None,
                    });
                }
            }
            TupleKind::SecondMinus | TupleKind::SecondPlus => {
                for j in -j_max..=j_max {
                    if !sites.is_normal(j) {
                        continue;
                    }
                    let jp = if kind == TupleKind::SecondMinus {
                        j + m
                    } else {
                        -j - m
                    };
                    if jp.abs() > j_max || !sites.is_normal(jp) {
                        continue;
                    }
                    if kind == TupleKind::SecondMinus && zero && j == jp {
                        continue;
                    }
                    out.push(MomentumTuple {
                        kind,
                        ell: ell.clone(),
                        j: Some(j),
                        jprime: Some(jp),
                    });
                }
            }
        }
    }
    Ok(out)
}

/// `f(j) = G_{|j|}(0)/j²`.
pub fn f_nondegeneracy(j: i64, depth: Depth) -> f64 {
    let jf = j as f64;
    dispersion::g0(j, depth) / (jf * jf)
}

/// Both evaluations of `det A(0)`, with `A` the matrix of even jets
/// `∂_γ^{2n} Ω_{j_a}(0)`, `n = 1..N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JetDeterminant {
    pub from_jets: f64,
    pub closed_form: f64,
    pub relative_difference: f64,
}

/// `det A(0)` from Taylor jets and from the Vandermonde product.
pub fn jet_matrix_det0(js: &[i64], params: &DispersionParams) -> Result<JetDeterminant> {
    params.validate()?;
    let n = js.len();
    if n == 0 {
        return Err(Error::invalid("empty site list"));
    }
    if 2 * n > MAX_JET_ORDER {
        return Err(Error::invalid(format!(
            "at most {} sites supported",
            MAX_JET_ORDER / 2
        )));
    }
    for (a, &j) in js.iter().enumerate() {
        if j == 0 {
            return Err(Error::invalid("site 0 is not allowed"));
        }
        if js[..a].iter().any(|&k| k.abs() == j.abs()) {
            return Err(Error::invalid(format!(
                "sites must have distinct moduli; |{j}| repeats"
            )));
        }
    }
    let mut m = nalgebra::DMatrix::<f64>::zeros(n, n);
    for (c, &j) in js.iter().enumerate() {
        let jet = big_omega_jet(j, params, 0.0, 2 * n);
        for r in 0..n {
            m[(r, c)] = jet[2 * (r + 1)];
        }
    }
    let from_jets = m.determinant();
    let f: Vec<f64> = js
        .iter()
        .map(|&j| f_nondegeneracy(j, params.depth))
        .collect();
    let mut closed = 1.0;
    for k in 1..=n {
        closed *= dispersion::jet_coefficient_b(k, params.g);
    }
    for (&j, &fj) in js.iter().zip(&f) {
        closed *= (params.g * dispersion::g0(j, params.depth)).sqrt() * fj;
    }
    for q in 0..n {
        for p in 0..q {
            closed *= f[q] - f[p];
        }
    }
    let relative_difference = ((from_jets - closed) / closed).abs();
    Ok(JetDeterminant {
        from_jets,
        closed_form: closed,
        relative_difference,
    })
}

/// Result of the monotonicity scan of `f(j)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MonotonicityCheck {
    pub decreasing: bool,
    /// `min_j (f(j) − f(j+1))/f(j)` over the scanned range.
    pub min_relative_gap: f64,
}

/// Strict decrease of `f(j) = G_j(0)/j²` on `1..=j_max`.
pub fn f_monotonicity_check(depth: Depth, j_max: i64) -> Result<MonotonicityCheck> {
    if j_max < 2 {
        return Err(Error::invalid("j_max must be at least 2"));
    }
    depth.validate()?;
    let mut min_gap = f64::INFINITY;
    let mut prev = f_nondegeneracy(1, depth);
    for j in 2..=j_max {
        let cur = f_nondegeneracy(j, depth);
        min_gap = min_gap.min((prev - cur) / prev);
        prev = cur;
    }
    Ok(MonotonicityCheck {
        decreasing: min_gap > 0.0,
        min_relative_gap: min_gap,
    })
}

/// Parameters of [`verify_transversality`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransversalityConfig {
    pub ell_max: i64,
    pub j_max: i64,
    pub m0_max: usize,
    pub gamma_grid: usize,
    pub refine: usize,
    pub positivity_floor: f64,
}

impl Default for TransversalityConfig {
    fn default() -> Self {
        Self {
            ell_max: 20,
            j_max: 40,
            m0_max: 5,
            gamma_grid: 512,
            refine: 8,
            positivity_floor: 1e-8,
        }
    }
}

impl TransversalityConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ell_max < 1 || self.j_max < 1 {
            return Err(Error::invalid(
                "transversality: ell_max and j_max must be at least 1",
            ));
        }
        if self.m0_max + 1 > MAX_JET_ORDER {
            return Err(Error::invalid(format!(
                "transversality: m0_max must be below {MAX_JET_ORDER}"
            )));
        }
        if self.gamma_grid < 2 || self.refine < 1 {
            return Err(Error::invalid(
                "transversality: gamma_grid ≥ 2 and refine ≥ 1 required",
            ));
        }
        if !(self.positivity_floor > 0.0) {
            return Err(Error::invalid(
                "transversality: positivity_floor must be positive",
            ));
        }
        Ok(())
    }
}

/// Lower bound for second-plus tuples with `max(|j|, |j'|) > j_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailMargin {
    /// `√(g tanh h)(√(j_max+1) + 1) − max|γ| − ν ell_max sup|Ω⃗|`; the divisor
    /// of every tail tuple exceeds this value.
    pub margin: f64,
    /// Smallest `j_max` for which the margin is positive.
    pub j_max_needed: i64,
}

/// Outcome of [`verify_transversality`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransversalityReport {
    pub kind: TupleKind,
    pub m0: Option<usize>,
    pub rho0: f64,
    /// `min over tuples, γ of max_{n ≤ m} |∂_γ^n f| / ⟨ℓ⟩`, for `m = 0..=m0_max`.
    pub rho0_by_m: Vec<f64>,
    pub worst_tuple: Option<MomentumTuple>,
    pub worst_gamma: f64,
    pub gamma_grid: usize,
    pub tuples: usize,
    pub refined_tuples: usize,
    pub tail: Option<TailMargin>,
}

impl TransversalityReport {
    pub fn success(&self) -> bool {
        self.m0.is_some() && self.rho0 > 0.0
    }
}

struct JetTable {
    offset: i64,
    order: usize,
    /// `[site][grid point][derivative]`, flattened.
    data: Vec<f64>,
    n: usize,
}

impl JetTable {
    fn build(js_max: i64, gammas: &[f64], order: usize, params: &DispersionParams) -> Self {
        let sites: Vec<i64> = (-js_max..=js_max).collect();
        let n = gammas.len();
        let data: Vec<f64> = sites
            .par_iter()
            .flat_map_iter(|&j| {
                let mut row = Vec::with_capacity(n * (order + 1));
                for &g in gammas {
                    if j == 0 {
                        row.extend(std::iter::repeat(0.0).take(order + 1));
                    } else {
                        row.extend(big_omega_jet(j, params, g, order));
                    }
                }
                row
            })
            .collect();
        Self {
            offset: js_max,
            order,
            data,
            n,
        }
    }

    fn get(&self, j: i64, k: usize) -> &[f64] {
        let w = self.order + 1;
        let base = ((j + self.offset) as usize * self.n + k) * w;
        &self.data[base..base + w]
    }
}

struct TupleOutcome {
    rho: Vec<f64>,
    gamma: Vec<f64>,
    refined: bool,
}

fn grid_pass(terms: &[(i64, f64)], table: &JetTable, order: usize) -> Vec<Vec<f64>> {
    (0..table.n)
        .map(|k| {
            let mut d = vec![0.0; order + 1];
            for &(j, c) in terms {
                for (o, v) in d.iter_mut().zip(table.get(j, k)) {
                    *o += c * v;
                }
            }
            d
        })
        .collect()
}

fn level(d: &[f64], m: usize) -> f64 {
    d[..=m].iter().fold(0.0f64, |a, v| a.max(v.abs()))
}

/// Verify `max_{n ≤ m₀} |∂_γ^n f(γ)| ≥ ρ₀⟨ℓ⟩` for every tuple of `kind` on
/// `[γ₁, γ₂]`.
///
/// Each tuple is sampled on a uniform grid. For each `m`, tuples whose grid minimum,
/// lowered by a first-order Lipschitz allowance, could undercut the global grid
/// minimum are refined: roots of `∂^n f` (`n ≤ m`) by bisection and an oversampled
/// scan of the cells around the grid minimiser. The value for a given `m` does not
/// depend on `m0_max`.
pub fn verify_transversality(
    sites: &TangentialSites,
    params: &DispersionParams,
    kind: TupleKind,
    cfg: &TransversalityConfig,
) -> Result<TransversalityReport> {
    params.validate()?;
    cfg.validate()?;
    let tuples = enumerate_tuples(sites, cfg.ell_max, cfg.j_max, kind)?;
    let [g1, g2] = params.gamma_interval;
    let n = if g1 == g2 { 1 } else { cfg.gamma_grid };
    let h = if n > 1 {
        (g2 - g1) / (n - 1) as f64
    } else {
        0.0
    };
    let gammas: Vec<f64> = (0..n)
        .map(|k| if n == 1 { g1 } else { g1 + h * k as f64 })
        .collect();
    let order = cfg.m0_max + 1;
    let js_max = cfg
        .j_max
        .max(sites.nbar().iter().copied().max().unwrap_or(1));
    let table = JetTable::build(js_max, &gammas, order, params);
    let mm = cfg.m0_max;

    // Pass 1: grid values and Lipschitz lower bounds.
    let pass1: Vec<(Vec<f64>, Vec<f64>, Vec<usize>)> = tuples
        .par_iter()
        .map(|t| {
            let terms = t.terms(sites);
            let br = bracket(&t.ell);
            let jets = grid_pass(&terms, &table, order);
            let mut best = vec![f64::INFINITY; mm + 1];
            let mut lower = vec![f64::INFINITY; mm + 1];
            let mut arg = vec![0usize; mm + 1];
            for m in 0..=mm {
                for k in 0..n {
                    let v = level(&jets[k], m) / br;
                    if v < best[m] {
                        best[m] = v;
                        arg[m] = k;
                    }
                    let slope = jets[k][1..=m + 1]
                        .iter()
                        .fold(0.0f64, |a, x| a.max(x.abs()));
                    let slope_next = if k + 1 < n {
                        jets[k + 1][1..=m + 1]
                            .iter()
                            .fold(0.0f64, |a, x| a.max(x.abs()))
                    } else {
                        0.0
                    };
                    let lb = (level(&jets[k], m) - 0.5 * h * slope.max(slope_next)) / br;
                    lower[m] = lower[m].min(lb);
                }
            }
            (best, lower, arg)
        })
        .collect();
    let grid_min: Vec<f64> = (0..=mm)
        .map(|m| {
            pass1
                .iter()
                .map(|(b, _, _)| b[m])
                .fold(f64::INFINITY, f64::min)
        })
        .collect();

    // Pass 2: refine the tuples that could undercut the grid minimum.
    let outcomes: Vec<TupleOutcome> = tuples
        .par_iter()
        .zip(&pass1)
        .map(|(t, (best, lower, arg))| {
            let mut rho = best.clone();
            let mut gam: Vec<f64> = arg.iter().map(|&k| gammas[k]).collect();
            let needs: Vec<bool> = (0..=mm)
                .map(|m| n > 1 && lower[m] <= grid_min[m].max(cfg.positivity_floor))
                .collect();
            if !needs.iter().any(|&b| b) {
                return TupleOutcome {
                    rho,
                    gamma: gam,
                    refined: false,
                };
            }
            let br = bracket(&t.ell);
            let terms = t.terms(sites);
            let jets = grid_pass(&terms, &table, order);
            let eval = |g: f64| t.jet(sites, params, g, order);
            let mut roots: Vec<Vec<f64>> = vec![Vec::new(); mm + 1];
            let top = (0..=mm).rev().find(|&m| needs[m]).unwrap_or(0);
            for (d, r) in roots.iter_mut().enumerate().take(top + 1) {
                for k in 0..n - 1 {
                    let (a, b) = (jets[k][d], jets[k + 1][d]);
                    if a == 0.0 {
                        r.push(gammas[k]);
                    } else if a * b < 0.0 {
                        r.push(bisect(|g| eval(g)[d], gammas[k], gammas[k + 1], a));
                    }
                }
            }
            for m in (0..=mm).filter(|&m| needs[m]) {
                let mut cands: Vec<f64> = roots[..=m].iter().flatten().copied().collect();
                let k = arg[m];
                let lo = gammas[k.saturating_sub(1)];
                let hi = gammas[(k + 1).min(n - 1)];
                let steps = 2 * cfg.refine;
                for s in 0..=steps {
                    cands.push(lo + (hi - lo) * s as f64 / steps as f64);
                }
                for g in cands {
                    let v = level(&eval(g), m) / br;
                    if v < rho[m] {
                        rho[m] = v;
                        gam[m] = g;
                    }
                }
            }
            TupleOutcome {
                rho,
                gamma: gam,
                refined: true,
            }
        })
        .collect();

    let mut rho0_by_m = vec![f64::INFINITY; mm + 1];
    let mut worst = vec![(0usize, 0.0); mm + 1];
    for (i, o) in outcomes.iter().enumerate() {
        for m in 0..=mm {
            if o.rho[m] < rho0_by_m[m] {
                rho0_by_m[m] = o.rho[m];
                worst[m] = (i, o.gamma[m]);
            }
        }
    }
    let m0 = (0..=mm).find(|&m| rho0_by_m[m] > cfg.positivity_floor);
    let report_m = m0.unwrap_or(mm);
    let (wi, wg) = worst[report_m];
    let tail = (kind == TupleKind::SecondPlus).then(|| tail_margin(sites, params, cfg));
    Ok(TransversalityReport {
        kind,
        m0,
        rho0: if m0.is_some() {
            rho0_by_m[report_m]
        } else {
            0.0
        },
        rho0_by_m,
        worst_tuple: tuples.get(wi).cloned(),
        worst_gamma: wg,
        gamma_grid: n,
        tuples: tuples.len(),
        refined_tuples: outcomes.iter().filter(|o| o.refined).count(),
        tail,
    })
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

fn tail_margin(
    sites: &TangentialSites,
    params: &DispersionParams,
    cfg: &TransversalityConfig,
) -> TailMargin {
    let [g1, g2] = params.gamma_interval;
    let tanh_min = match params.depth {
        Depth::Infinite => 1.0,
        Depth::Finite { h } => h.tanh(),
    };
    let gmax = g1.abs().max(g2.abs());
    let samples = 257;
    let sup_omega = (0..samples)
        .map(|k| g1 + (g2 - g1) * k as f64 / (samples - 1) as f64)
        .flat_map(|g| dispersion::tangential_vector(sites, params, g))
        .fold(0.0f64, |a, v| a.max(v.abs()));
    // Ω_j is increasing in the Lipschitz sense along the grid only approximately; pad by 1%.
    let rhs = gmax + 1.01 * sup_omega * (sites.nu() as f64) * cfg.ell_max as f64;
    let c = (params.g * tanh_min).sqrt();
    let margin = c * (((cfg.j_max + 1) as f64).sqrt() + 1.0) - rhs;
    let x = rhs / c - 1.0;
    let j_needed = if x <= 0.0 { 1 } else { (x * x).ceil() as i64 };
    TailMargin {
        margin,
        j_max_needed: j_needed.max(1),
    }
}
