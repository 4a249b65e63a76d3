//! Almost-straightening of `ω·∂_φ + (m₁ + p(φ, x))∂_x` by successive torus
//! diffeomorphisms `x ↦ x + g_n(φ, x)`.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cutoff::cutoff_chi;
use crate::error::{Error, Result};
use crate::lattice::{bracket, dot};
use crate::torus::{grid_points, grid_size, Parity, TravelingWaveFn};

/// `ω·∂_φ + (m₁ + p)∂_x` acting on traveling waves.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportOp {
    pub m1: f64,
    pub p: TravelingWaveFn,
    pub omega: Vec<f64>,
}

/// Scales and divisor parameters of the iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KamSchedule {
    pub n0: u32,
    pub chi: f64,
    pub nbar: usize,
    pub upsilon: f64,
    pub tau: f64,
    pub k0: u32,
    pub s0: f64,
    pub tol: f64,
}

impl Default for KamSchedule {
    fn default() -> Self {
        Self {
            n0: 8,
            chi: 1.5,
            nbar: 4,
            upsilon: 0.01,
            tau: 3.0,
            k0: 3,
            s0: 2.0,
            tol: 1e-12,
        }
    }
}

impl KamSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.n0 < 2 {
            return Err(Error::invalid("schedule.n0 must be at least 2"));
        }
        if !(self.chi > 1.0 && self.chi.is_finite()) {
            return Err(Error::invalid("schedule.chi must exceed 1"));
        }
        if !(self.upsilon > 0.0 && self.upsilon < 1.0) {
            return Err(Error::invalid("schedule.upsilon must lie in (0, 1)"));
        }
        if !(self.tau >= 1.0 && self.tau.is_finite()) {
            return Err(Error::invalid("schedule.tau must be at least 1"));
        }
        if !(self.tol > 0.0) {
            return Err(Error::invalid("schedule.tol must be positive"));
        }
        if !(self.s0 >= 0.0 && self.s0.is_finite()) {
            return Err(Error::invalid("schedule.s0 must be nonnegative"));
        }
        Ok(())
    }

    /// `N_n = N₀^{χ^n}`, with `N_{−1} = 1`.
    pub fn scale(&self, n: i64) -> f64 {
        if n < 0 {
            1.0
        } else {
            (self.n0 as f64).powf(self.chi.powi(n as i32))
        }
    }

    /// `τ₁ = k₀ + (k₀ + 1)τ`.
    pub fn tau1(&self) -> f64 {
        self.k0 as f64 + (self.k0 as f64 + 1.0) * self.tau
    }

    /// `a = 3(τ₁ + 1)`.
    pub fn a(&self) -> f64 {
        3.0 * (self.tau1() + 1.0)
    }

    /// `b = [a] + 2`.
    pub fn b(&self) -> f64 {
        self.a().floor() + 2.0
    }
}

/// Outcome of the scalar homological equation.
#[derive(Debug, Clone, PartialEq)]
pub struct HomologicalSolution {
    pub g: TravelingWaveFn,
    /// `min |ω·ℓ + m₁ j| ⟨ℓ⟩^τ / υ` over `0 < ⟨ℓ⟩ ≤ N`; at least one on the non-resonant set.
    pub margin: f64,
    pub suppressed: usize,
}

/// `g_ℓ = −χ(d_ℓ υ^{−1}⟨ℓ⟩^τ)(Π_N p − ⟨p⟩)_ℓ / (i d_ℓ)`, `d_ℓ = ω·ℓ + m₁ j`, `j = −ȷ·ℓ`.
pub fn solve_homological(
    p: &TravelingWaveFn,
    m1: f64,
    omega: &[f64],
    upsilon: f64,
    tau: f64,
    n: f64,
) -> HomologicalSolution {
    let mut margin = f64::INFINITY;
    let mut suppressed = 0usize;
    let modes = p.modes();
    let mut g = TravelingWaveFn::zeros(p.jvec(), p.l_max(), Parity::Odd);
    for (ell, c) in modes.iter().zip(p.coeffs()) {
        let br = bracket(ell);
        if ell.iter().all(|&l| l == 0) || br > n {
            continue;
        }
        let d = transport_divisor(omega, m1, p.jvec(), ell);
        let scaled = d.abs() * br.powf(tau) / upsilon;
        margin = margin.min(scaled);
        let chi = cutoff_chi(scaled);
        if chi < 1.0 {
            suppressed += 1;
        }
        if chi > 0.0 {
            g.set(ell, -chi * c / Complex64::new(0.0, d));
        }
    }
    HomologicalSolution {
        g,
        margin,
        suppressed,
    }
}

/// `ω·ℓ + m₁ j` with `j = −ȷ·ℓ`.
pub fn transport_divisor(omega: &[f64], m1: f64, jvec: &[i64], ell: &[i64]) -> f64 {
    let j: i64 = -jvec.iter().zip(ell).map(|(a, b)| a * b).sum::<i64>();
    dot(omega, ell) + m1 * j as f64
}

/// `(ω·∂_φ + m₁∂_x)g + Π_N p − ⟨p⟩`.
pub fn homological_residual(
    g: &TravelingWaveFn,
    p: &TravelingWaveFn,
    m1: f64,
    omega: &[f64],
    n: f64,
) -> TravelingWaveFn {
    let lhs = g.omega_dphi(omega).add(&g.dx().scale(m1));
    let mut r = lhs.add(&p.project_low(n)).with_parity(Parity::Even);
    let zero = vec![0; p.nu()];
    let c = r.get(&zero);
    r.set(&zero, c - p.get(&zero));
    r
}

fn check_diffeo(beta: &TravelingWaveFn, m: usize) -> Result<f64> {
    let bx = beta.dx().to_grid(m);
    let sup = bx.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if !(sup < 1.0) {
        return Err(Error::invalid(format!(
            "x + β is not a diffeomorphism: sup|β_x| = {sup}"
        )));
    }
    Ok(sup)
}

/// Displaced nodes `ψ − ȷ B(ψ)` on the `m`-point grid.
fn displaced_nodes(beta: &TravelingWaveFn, m: usize) -> Vec<Vec<f64>> {
    let b = beta.to_grid(m);
    let jv = beta.jvec();
    grid_points(beta.nu(), m)
        .into_iter()
        .zip(b)
        .map(|(mut p, bk)| {
            for (pa, &ja) in p.iter_mut().zip(jv) {
                *pa -= ja as f64 * bk;
            }
            p
        })
        .collect()
}

/// `u(φ, x + β(φ, x))`, i.e. the profile `V(ψ) = U(ψ − ȷ B(ψ))`, truncated to
/// the box of `u`.
pub fn compose(u: &TravelingWaveFn, beta: &TravelingWaveFn) -> Result<TravelingWaveFn> {
    let parity = match (u.parity(), beta.parity()) {
        (p, Parity::Odd) => p,
        _ => Parity::None,
    };
    let m = grid_size(u.l_max().max(beta.l_max()));
    check_diffeo(beta, m)?;
    let nodes = displaced_nodes(beta, m);
    let vals = u.eval_points(&nodes);
    let mut out = TravelingWaveFn::from_grid(u.jvec(), u.l_max(), parity, m, &vals);
    out.symmetrize();
    Ok(out)
}

/// Raw (unsymmetrized) composition, used to report the structural defects.
pub fn compose_raw(u: &TravelingWaveFn, beta: &TravelingWaveFn) -> Result<TravelingWaveFn> {
    let m = grid_size(u.l_max().max(beta.l_max()));
    check_diffeo(beta, m)?;
    let nodes = displaced_nodes(beta, m);
    let vals = u.eval_points(&nodes);
    Ok(TravelingWaveFn::from_grid(
        u.jvec(),
        u.l_max(),
        u.parity(),
        m,
        &vals,
    ))
}

/// `β̆` with `y = x + β(φ, x) ⇔ x = y + β̆(φ, y)`, via the fixed point
/// `B̆(ψ) = −B(ψ − ȷ B̆(ψ))` at each grid node.
pub fn invert_diffeo(beta: &TravelingWaveFn, tol: f64) -> Result<TravelingWaveFn> {
    let m = grid_size(beta.l_max());
    check_diffeo(beta, m)?;
    let nodes = grid_points(beta.nu(), m);
    let scale = beta.to_grid(m).iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let jv = beta.jvec().to_vec();
    let solved: Vec<Option<f64>> = nodes
        .par_iter()
        .map(|psi| {
            let step = |b: f64| {
                let q: Vec<f64> = psi
                    .iter()
                    .zip(&jv)
                    .map(|(p, &j)| p - j as f64 * b)
                    .collect();
                -beta.eval_complex(&q).re
            };
            [1.0, 0.5]
                .iter()
                .find_map(|&damp| fixed_point(step, damp, tol * scale.max(f64::MIN_POSITIVE), 200))
        })
        .collect();
    let mut vals = Vec::with_capacity(solved.len());
    for (k, s) in solved.into_iter().enumerate() {
        vals.push(s.ok_or_else(|| {
            Error::divergence(format!(
                "inverse diffeomorphism: no contraction at node {k}"
            ))
        })?);
    }
    let parity = if beta.parity() == Parity::Odd {
        Parity::Odd
    } else {
        Parity::None
    };
    let mut out = TravelingWaveFn::from_grid(beta.jvec(), beta.l_max(), parity, m, &vals);
    out.symmetrize();
    Ok(out)
}

fn fixed_point(f: impl Fn(f64) -> f64, damp: f64, tol: f64, max_iter: usize) -> Option<f64> {
    let mut b = 0.0;
    for _ in 0..max_iter {
        let next = (1.0 - damp) * b + damp * f(b);
        let delta = (next - b).abs();
        b = next;
        if !b.is_finite() {
            return None;
        }
        if delta <= tol {
            // one extra sweep pushes the error well below the tolerance
            return Some((1.0 - damp) * b + damp * f(b));
        }
    }
    None
}

/// Per-step diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepDiagnostics {
    pub n: usize,
    pub scale: f64,
    pub m1: f64,
    pub mean_p: f64,
    pub norm_p_s0: f64,
    pub norms: Vec<(f64, f64)>,
    pub norm_g_s0: f64,
    pub divisor_margin: f64,
    pub in_nonresonant_set: bool,
    pub suppressed_modes: usize,
    pub homological_residual: f64,
    pub raw_hermitian_defect: f64,
    pub raw_parity_defect: f64,
    pub hermitian_defect: f64,
    pub parity_defect: f64,
}

/// Result of one step.
#[derive(Debug, Clone)]
pub struct StepOutput {
    pub next: TransportOp,
    pub g: TravelingWaveFn,
    pub diagnostics: StepDiagnostics,
}

/// One conjugation: `m_{1,n+1} = m_{1,n} + ⟨p_n⟩` and
/// `p_{n+1} = G_n^{−1}(Π_{N_n}^⊥ p_n + p_n (g_n)_x + r_n)`, where `r_n` is the
/// homological residual left by the cutoff (zero on the non-resonant set).
pub fn straighten_step(op: &TransportOp, schedule: &KamSchedule, n: usize) -> Result<StepOutput> {
    let nn = schedule.scale(n as i64);
    let p = &op.p;
    let sol = solve_homological(p, op.m1, &op.omega, schedule.upsilon, schedule.tau, nn);
    let g = sol.g;
    let r = homological_residual(&g, p, op.m1, &op.omega, nn);
    let q = p
        .project_high(nn)
        .add(&p.mul(&g.dx(), Parity::Even))
        .add(&r)
        .with_parity(Parity::Even);
    let g_inv = invert_diffeo(&g, schedule.tol)?;
    let raw = compose_raw(&q, &g_inv)?;
    let mut p_next = raw.clone();
    p_next.symmetrize();
    let norms = [0.0, 1.0, schedule.s0]
        .iter()
        .map(|&s| (s, p.norm_s(s)))
        .collect();
    let diagnostics = StepDiagnostics {
        n,
        scale: nn,
        m1: op.m1,
        mean_p: p.mean(),
        norm_p_s0: p.norm_s(schedule.s0),
        norms,
        norm_g_s0: g.norm_s(schedule.s0),
        divisor_margin: sol.margin,
        in_nonresonant_set: sol.margin >= 1.0,
        suppressed_modes: sol.suppressed,
        homological_residual: r.norm_s(0.0),
        raw_hermitian_defect: raw.hermitian_defect(),
        raw_parity_defect: raw.parity_defect(),
        hermitian_defect: p_next.hermitian_defect().max(g.hermitian_defect()),
        parity_defect: p_next.parity_defect().max(g.parity_defect()),
    };
    let next = TransportOp {
        m1: op.m1 + p.mean(),
        p: p_next,
        omega: op.omega.clone(),
    };
    Ok(StepOutput {
        next,
        g,
        diagnostics,
    })
}

/// History of [`run_straightening`].
#[derive(Debug, Clone)]
pub struct StraighteningHistory {
    pub steps: Vec<StepDiagnostics>,
    pub final_op: TransportOp,
    pub beta: TravelingWaveFn,
    pub diverged: bool,
    /// `N₀^{τ₁}‖p₀‖_{s₀}/υ`; small values indicate the perturbative regime.
    pub smallness: f64,
}

impl StraighteningHistory {
    /// `‖p_n‖_{s₀}` for `n = 0..=n̄`.
    pub fn norms(&self, s0: f64) -> Vec<f64> {
        let mut v: Vec<f64> = self.steps.iter().map(|d| d.norm_p_s0).collect();
        v.push(self.final_op.p.norm_s(s0));
        v
    }
}

/// `n̄` steps starting from `X₀ = ω·∂_φ + (m₁ + p₀)∂_x`; `β` accumulates as
/// `β_{n+1} = β_n + g_n(φ, x + β_n)`.
pub fn run_straightening(x0: &TransportOp, schedule: &KamSchedule) -> Result<StraighteningHistory> {
    schedule.validate()?;
    let p0 = &x0.p;
    if p0.parity() != Parity::Even {
        return Err(Error::invalid("p0 must be declared even in (φ, x)"));
    }
    if x0.omega.len() != p0.nu() {
        return Err(Error::invalid("omega length must equal ν"));
    }
    let tol = 1e-13 * p0.max_abs().max(f64::MIN_POSITIVE);
    if p0.hermitian_defect() > tol || p0.parity_defect() > tol {
        return Err(Error::invalid("p0 must be real-valued and even"));
    }
    let mut op = x0.clone();
    let mut beta = TravelingWaveFn::zeros(p0.jvec(), p0.l_max(), Parity::Odd);
    let mut steps = Vec::with_capacity(schedule.nbar);
    let mut diverged = false;
    for n in 0..schedule.nbar {
        let out = straighten_step(&op, schedule, n)?;
        let shifted = compose(&out.g, &beta)?;
        beta = beta.add(&shifted).with_parity(Parity::Odd);
        beta.symmetrize();
        if out.next.p.norm_s(schedule.s0) > op.p.norm_s(schedule.s0) {
            diverged = true;
        }
        steps.push(out.diagnostics);
        op = out.next;
    }
    let smallness =
        (schedule.n0 as f64).powf(schedule.tau1()) * p0.norm_s(schedule.s0) / schedule.upsilon;
    Ok(StraighteningHistory {
        steps,
        final_op: op,
        beta,
        diverged,
        smallness,
    })
}

/// `max_v ‖X₀(Bv) − B(X_n v)‖ / ‖v‖` with `(Bv)(φ, x) = v(φ, x + β)`, evaluated
/// pointwise (root mean square) on an `m`-point grid without any truncation.
pub fn verify_conjugacy(
    x0: &TransportOp,
    beta: &TravelingWaveFn,
    xn: &TransportOp,
    testfns: &[TravelingWaveFn],
    m: usize,
) -> f64 {
    let nu = beta.nu();
    let jv: Vec<f64> = beta.jvec().iter().map(|&j| j as f64).collect();
    let grad = |u: &TravelingWaveFn| -> Vec<TravelingWaveFn> {
        (0..nu)
            .map(|a| u.map_modes(Parity::None, |l, c| c * Complex64::new(0.0, l[a] as f64)))
            .collect()
    };
    let dbeta = grad(beta);
    let nodes = grid_points(nu, m);
    testfns
        .iter()
        .map(|v| {
            let dv = grad(v);
            let terms: Vec<f64> = nodes
                .par_iter()
                .map(|psi| {
                    let b = beta.eval_complex(psi).re;
                    let db: Vec<f64> = dbeta.iter().map(|d| d.eval_complex(psi).re).collect();
                    let q: Vec<f64> = psi.iter().zip(&jv).map(|(p, j)| p - j * b).collect();
                    let gv: Vec<f64> = dv.iter().map(|d| d.eval_complex(&q).re).collect();
                    // chain rule for w(ψ) = V(ψ − ȷB(ψ))
                    let jgv: f64 = jv.iter().zip(&gv).map(|(j, g)| j * g).sum();
                    let gw: Vec<f64> = (0..nu).map(|k| gv[k] - jgv * db[k]).collect();
                    let lhs = dot_f(&x0.omega, &gw)
                        - (x0.m1 + x0.p.eval_complex(psi).re) * dot_f(&jv, &gw);
                    let rhs = dot_f(&xn.omega, &gv) - (xn.m1 + xn.p.eval_complex(&q).re) * jgv;
                    (lhs - rhs).powi(2)
                })
                .collect();
            // sequential sum keeps the result independent of the thread count
            let sq: f64 = terms.iter().sum();
            (sq / nodes.len() as f64).sqrt() / v.norm_s(0.0)
        })
        .fold(0.0, f64::max)
}

fn dot_f(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Real test functions `cos ψ_a`, `sin ψ_a`, `cos(ψ_a + ψ_b)`.
pub fn default_test_functions(jvec: &[i64], l_max: i64) -> Vec<TravelingWaveFn> {
    let nu = jvec.len();
    let half = Complex64::new(0.5, 0.0);
    let ihalf = Complex64::new(0.0, -0.5);
    let unit = |a: usize, s: i64| {
        let mut e = vec![0; nu];
        e[a] = s;
        e
    };
    let mut out = Vec::new();
    for a in 0..nu {
        out.push(
            TravelingWaveFn::from_coeffs(
                jvec,
                l_max,
                Parity::Even,
                [(unit(a, 1), half), (unit(a, -1), half)],
            )
            .unwrap(),
        );
        out.push(
            TravelingWaveFn::from_coeffs(
                jvec,
                l_max,
                Parity::Odd,
                [(unit(a, 1), ihalf), (unit(a, -1), -ihalf)],
            )
            .unwrap(),
        );
    }
    if nu >= 2 {
        let mut l = vec![0; nu];
        l[0] = 1;
        l[1] = 1;
        let nl: Vec<i64> = l.iter().map(|x| -x).collect();
        out.push(
            TravelingWaveFn::from_coeffs(jvec, l_max, Parity::Even, [(l, half), (nl, half)])
                .unwrap(),
        );
    }
    out
}

/// `(1, √2 − 1, √3 − 1, √5 − 2, …)`: distinct quadratic irrationals after the first entry.
pub fn quadratic_irrational_frequencies(nu: usize) -> Vec<f64> {
    let mut out = vec![1.0];
    let mut k = 2u64;
    while out.len() < nu {
        let r = (k as f64).sqrt();
        if r.fract() != 0.0 {
            out.push(r - r.floor());
        }
        k += 1;
    }
    out.truncate(nu);
    out
}

/// Random real even profile supported in `⟨ℓ⟩ ≤ support` with coefficients
/// decaying like `e^{−decay ⟨ℓ⟩}`, scaled to `‖p‖_{s} = norm`.
pub fn random_even_profile(
    jvec: &[i64],
    l_max: i64,
    support: f64,
    decay: f64,
    s: f64,
    norm: f64,
    seed: u64,
) -> Result<TravelingWaveFn> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = TravelingWaveFn::zeros(jvec, l_max, Parity::Even);
    let modes = p.modes();
    let n = modes.len();
    for ell in &modes[n / 2..n] {
        if bracket(ell) > support {
            continue;
        }
        let v: f64 = rng.random_range(-1.0..1.0) * (-decay * bracket(ell)).exp();
        p.set(ell, Complex64::new(v, 0.0));
        let neg: Vec<i64> = ell.iter().map(|x| -x).collect();
        p.set(&neg, Complex64::new(v, 0.0));
    }
    let cur = p.norm_s(s);
    if cur == 0.0 {
        return Err(Error::invalid("random profile has empty support"));
    }
    Ok(p.scale(norm / cur))
}

/// A zero profile with matching box, used as `p` of a constant-coefficient operator.
pub fn zero_profile(jvec: &[i64], l_max: i64) -> TravelingWaveFn {
    TravelingWaveFn::zeros(jvec, l_max, Parity::Even)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cos_profile(eps: f64) -> TravelingWaveFn {
        TravelingWaveFn::from_coeffs(
            &[1, 2],
            6,
            Parity::Even,
            [
                (vec![1, 0], Complex64::new(0.5 * eps, 0.0)),
                (vec![-1, 0], Complex64::new(0.5 * eps, 0.0)),
            ],
        )
        .unwrap()
    }

    #[test]
    fn constant_p_gives_zero_g() {
        let mut p = zero_profile(&[1, 2], 3);
        p.set(&[0, 0], Complex64::new(0.7, 0.0));
        let sol = solve_homological(&p, 0.0, &[1.0, 2f64.sqrt() - 1.0], 0.01, 3.0, 8.0);
        assert_eq!(sol.g.max_abs(), 0.0);
    }

    #[test]
    fn single_harmonic_homological() {
        let eps = 1e-3;
        let omega = [1.0, 2f64.sqrt() - 1.0];
        let p = cos_profile(eps);
        let sol = solve_homological(&p, 0.0, &omega, 0.01, 3.0, 8.0);
        // g = −ε sin(ψ₁)
        assert_relative_eq!(
            sol.g.eval_complex(&[0.4, 0.0]).re,
            -eps * 0.4f64.sin(),
            epsilon = 1e-18
        );
        let r = homological_residual(&sol.g, &p, 0.0, &omega, 8.0);
        assert!(r.norm_s(0.0) < 1e-18);
    }

    #[test]
    fn constant_p_absorbed_in_one_step() {
        let mut p = zero_profile(&[1, 2], 3);
        p.set(&[0, 0], Complex64::new(0.25, 0.0));
        let op = TransportOp {
            m1: 0.0,
            p,
            omega: vec![1.0, 2f64.sqrt() - 1.0],
        };
        let out = straighten_step(&op, &KamSchedule::default(), 0).unwrap();
        assert_eq!(out.next.m1, 0.25);
        assert!(out.next.p.max_abs() < 1e-16);
    }

    #[test]
    fn compose_constant_shift_is_phase() {
        let u = TravelingWaveFn::from_coeffs(
            &[1, 2],
            4,
            Parity::None,
            [(vec![1, 0], Complex64::new(1.0, 0.0))],
        )
        .unwrap();
        let mut b = TravelingWaveFn::zeros(&[1, 2], 4, Parity::None);
        b.set(&[0, 0], Complex64::new(0.3, 0.0));
        let m = grid_size(4);
        let v = TravelingWaveFn::from_grid(
            &[1, 2],
            4,
            Parity::None,
            m,
            &u.eval_points(&displaced_nodes(&b, m)),
        );
        // real part of e^{i(ψ₁ − 0.3)} only; compare the real-valued reconstruction
        let x = [0.9, 0.2];
        assert_relative_eq!(v.eval_complex(&x).re, (0.9f64 - 0.3).cos(), epsilon = 1e-14);
    }

    #[test]
    fn inverse_of_constant_shift() {
        let mut b = TravelingWaveFn::zeros(&[1, 2], 3, Parity::None);
        b.set(&[0, 0], Complex64::new(0.2, 0.0));
        let inv = invert_diffeo(&b, 1e-13).unwrap();
        assert_relative_eq!(inv.mean(), -0.2, epsilon = 1e-15);
    }

    #[test]
    fn frequencies_are_quadratic_irrationals() {
        let w = quadratic_irrational_frequencies(4);
        assert_eq!(w[0], 1.0);
        assert_relative_eq!(w[1], 2f64.sqrt() - 1.0);
        assert_relative_eq!(w[2], 3f64.sqrt() - 1.0);
        assert_relative_eq!(w[3], 5f64.sqrt() - 2.0);
    }

    #[test]
    fn scales_and_exponents() {
        let s = KamSchedule::default();
        assert_eq!(s.scale(-1), 1.0);
        assert_eq!(s.scale(0), 8.0);
        assert_relative_eq!(s.scale(2), 8f64.powf(2.25));
        assert_eq!(s.tau1(), 15.0);
        assert_eq!(s.a(), 48.0);
        assert_eq!(s.b(), 50.0);
    }
}
