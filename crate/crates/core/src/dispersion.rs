//! Linear dispersion relation of gravity waves with constant vorticity.
//!
//! All quantities are closed-form Fourier multipliers in the wavenumber `j`.
//! Vorticity derivatives are computed by exact Taylor-mode propagation of the
//! square root, so any order up to [`MAX_JET_ORDER`] is available at every `γ`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sites::TangentialSites;

/// Highest supported vorticity-derivative order.
pub const MAX_JET_ORDER: usize = 16;

/// Fluid depth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Depth {
    Finite { h: f64 },
    Infinite,
}

impl Depth {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Depth::Finite { h } if !(h > 0.0 && h.is_finite()) => Err(Error::invalid(format!(
                "depth.h must be positive and finite, got {h}"
            ))),
            _ => Ok(()),
        }
    }
}

/// Gravity, depth and admissible vorticity interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DispersionParams {
    pub g: f64,
    pub depth: Depth,
    pub gamma_interval: [f64; 2],
}

impl DispersionParams {
    pub fn new(g: f64, depth: Depth, gamma_interval: [f64; 2]) -> Result<Self> {
        let p = Self {
            g,
            depth,
            gamma_interval,
        };
        p.validate()?;
        Ok(p)
    }

    /// Infinite depth, `g`, with the interval `[γ₁, γ₂]`.
    pub fn deep(g: f64, gamma1: f64, gamma2: f64) -> Self {
        Self {
            g,
            depth: Depth::Infinite,
            gamma_interval: [gamma1, gamma2],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.g > 0.0 && self.g.is_finite()) {
            return Err(Error::invalid(format!(
                "dispersion.g must be positive, got {}",
                self.g
            )));
        }
        self.depth.validate()?;
        let [a, b] = self.gamma_interval;
        if !(a.is_finite() && b.is_finite()) || a > b {
            return Err(Error::invalid(format!(
                "dispersion.gamma_interval: need gamma1 <= gamma2, got [{a}, {b}]"
            )));
        }
        Ok(())
    }
}

fn tanh_stable(x: f64) -> f64 {
    if x.abs() > 20.0 {
        let e = (-2.0 * x.abs()).exp();
        (-(-2.0 * x.abs()).exp_m1() / (1.0 + e)).copysign(x)
    } else {
        x.tanh()
    }
}

fn check_site(j: i64) -> Result<()> {
    if j == 0 {
        Err(Error::invalid("wavenumber j = 0 is not a site"))
    } else {
        Ok(())
    }
}

/// `G_j(0)`: `j·tanh(hj)` at finite depth, `|j|` at infinite depth.
pub fn symbol_g0(j: i64, depth: Depth) -> Result<f64> {
    check_site(j)?;
    Ok(g0(j, depth))
}

pub(crate) fn g0(j: i64, depth: Depth) -> f64 {
    let a = j.unsigned_abs() as f64;
    match depth {
        Depth::Infinite => a,
        Depth::Finite { h } => a * tanh_stable(h * a),
    }
}

/// `G_j(0)/|j| − 1`, evaluated without cancellation.
fn g0_ratio_minus_one(j: i64, depth: Depth) -> f64 {
    match depth {
        Depth::Infinite => 0.0,
        Depth::Finite { h } => {
            let e = (-2.0 * h * j.unsigned_abs() as f64).exp();
            -2.0 * e / (1.0 + e)
        }
    }
}

pub(crate) fn sgn(j: i64) -> f64 {
    j.signum() as f64
}

/// `ω_j(γ) = sqrt(g G_j + (γ/2 · G_j/j)²)`, even in `j`.
pub fn omega_j(j: i64, params: &DispersionParams, gamma: f64) -> Result<f64> {
    check_site(j)?;
    Ok(omega_raw(j, params, gamma))
}

fn omega_raw(j: i64, p: &DispersionParams, gamma: f64) -> f64 {
    let gj = g0(j, p.depth);
    let b = 0.5 * gamma * gj / j as f64;
    (p.g * gj + b * b).sqrt()
}

/// `Ω_j(γ) = ω_j(γ) + (γ/2)·G_j/j`.
pub fn big_omega_j(j: i64, params: &DispersionParams, gamma: f64) -> Result<f64> {
    check_site(j)?;
    Ok(big_omega_raw(j, params, gamma))
}

pub(crate) fn big_omega_raw(j: i64, p: &DispersionParams, gamma: f64) -> f64 {
    let gj = g0(j, p.depth);
    omega_raw(j, p, gamma) + 0.5 * gamma * gj / j as f64
}

/// The symplectic normalisation `M_n` and the coefficients `P_{±n}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoeffsMP {
    pub m: f64,
    pub p_plus: f64,
    pub p_minus: f64,
}

/// `M_j = (G_j/(g + γ² G_j/(4j²)))^{1/4}`, even in `j`.
pub fn coeff_m(j: i64, params: &DispersionParams, gamma: f64) -> Result<f64> {
    check_site(j)?;
    Ok(coeff_m_raw(j, params, gamma))
}

pub(crate) fn coeff_m_raw(j: i64, p: &DispersionParams, gamma: f64) -> f64 {
    let gj = g0(j, p.depth);
    let jf = j as f64;
    (gj / (p.g + gamma * gamma * gj / (4.0 * jf * jf))).powf(0.25)
}

/// `(M_n, P_n, P_{−n})` with `P_{±n} = (γ/2) M_n/n ± M_n^{−1}`.
pub fn coeffs_m_p(n: i64, params: &DispersionParams, gamma: f64) -> Result<CoeffsMP> {
    if n < 1 {
        return Err(Error::invalid(format!(
            "coeffs_m_p: n must be >= 1, got {n}"
        )));
    }
    let m = coeff_m_raw(n, params, gamma);
    let base = 0.5 * gamma * m / n as f64;
    Ok(CoeffsMP {
        m,
        p_plus: base + 1.0 / m,
        p_minus: base - 1.0 / m,
    })
}

/// `c_j(γ) = (ω_j − √g|j|^{1/2})·√g|j|^{1/2}` in rationalised form.
pub fn c_j_remainder(j: i64, params: &DispersionParams, gamma: f64) -> Result<f64> {
    check_site(j)?;
    let a = j.unsigned_abs() as f64;
    let ratio = g0(j, params.depth) / a;
    let q = 0.5 * gamma * ratio;
    let num = params.g * a * g0_ratio_minus_one(j, params.depth) + q * q;
    let den = 1.0 + (ratio + q * q / (params.g * a)).sqrt();
    Ok(num / den)
}

/// Taylor coefficients `[Ω_j(γ), Ω_j'(γ), Ω_j''(γ)/2!, …]` up to `order`.
pub fn big_omega_taylor(j: i64, params: &DispersionParams, gamma: f64, order: usize) -> Vec<f64> {
    let gj = g0(j, params.depth);
    let k = 0.5 * gj / j as f64;
    let b = k * k;
    let q = [params.g * gj + b * gamma * gamma, 2.0 * b * gamma, b];
    let mut s = vec![0.0; order + 1];
    s[0] = q[0].sqrt();
    for n in 1..=order {
        let qn = if n < 3 { q[n] } else { 0.0 };
        let mut acc = qn;
        for i in 1..n {
            acc -= s[i] * s[n - i];
        }
        s[n] = acc / (2.0 * s[0]);
    }
    s[0] += k * gamma;
    if order >= 1 {
        s[1] += k;
    }
    s
}

/// Derivatives `[∂_γ^0 Ω_j, …, ∂_γ^order Ω_j]` at `γ`.
pub fn big_omega_jet(j: i64, params: &DispersionParams, gamma: f64, order: usize) -> Vec<f64> {
    let mut c = big_omega_taylor(j, params, gamma, order);
    let mut fact = 1.0;
    for (n, v) in c.iter_mut().enumerate().skip(1) {
        fact *= n as f64;
        *v *= fact;
    }
    c
}

/// `∂_γ^n Ω_j(γ)`.
pub fn dgamma_omega(j: i64, n: usize, params: &DispersionParams, gamma: f64) -> Result<f64> {
    check_site(j)?;
    if n > MAX_JET_ORDER {
        return Err(Error::invalid(format!(
            "derivative order {n} exceeds the supported maximum {MAX_JET_ORDER}"
        )));
    }
    Ok(big_omega_jet(j, params, gamma, n)[n])
}

/// Closed form of `∂_γ^{2n} Ω_j(0) = b_{2n} g_j (G_{|j|}/j²)^n` for `n ≥ 1`.
pub fn even_jet_at_zero(j: i64, n: usize, params: &DispersionParams) -> Result<f64> {
    check_site(j)?;
    if n == 0 {
        return Ok(omega_raw(j, params, 0.0));
    }
    let gj = g0(j, params.depth);
    let jf = j as f64;
    Ok(jet_coefficient_b(n, params.g) * (params.g * gj).sqrt() * (gj / (jf * jf)).powi(n as i32))
}

/// `b_{2n} = (2n)! binom(1/2, n) / (g^n 2^{2n})`.
pub fn jet_coefficient_b(n: usize, g: f64) -> f64 {
    let mut binom = 1.0;
    for k in 0..n {
        binom *= (0.5 - k as f64) / (k as f64 + 1.0);
    }
    let mut fact = 1.0;
    for k in 1..=2 * n {
        fact *= k as f64;
    }
    fact * binom / (g.powi(n as i32) * 4f64.powi(n as i32))
}

/// The tangential frequency vector `(Ω_{ȷ_a}(γ))_a`.
pub fn tangential_vector(
    sites: &TangentialSites,
    params: &DispersionParams,
    gamma: f64,
) -> Vec<f64> {
    sites
        .jvec()
        .iter()
        .map(|&j| big_omega_raw(j, params, gamma))
        .collect()
}
