//! Reversible quasi-periodic traveling solutions of the linearised system and the
//! coordinate changes relating `(η, ψ)`, `(η, ζ)` and the complex variable `z`.
//!
//! Snapshot fields are stored as full Fourier tables in `x` over `|j| ≤ J`;
//! quasi-periodic fields as sparse tables over `(ℓ, j)`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::Serialize;

use crate::dispersion::{self, DispersionParams};
use crate::error::{Error, Result};
use crate::sites::TangentialSites;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Fourier coefficients `u_j`, `|j| ≤ jmax`, of a function of `x ∈ T`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeField {
    jmax: i64,
    coeffs: Vec<Complex64>,
}

impl ModeField {
    pub fn zeros(jmax: i64) -> Self {
        Self {
            jmax,
            coeffs: vec![Complex64::new(0.0, 0.0); (2 * jmax + 1) as usize],
        }
    }

    pub fn jmax(&self) -> i64 {
        self.jmax
    }

    pub fn get(&self, j: i64) -> Complex64 {
        if j.abs() > self.jmax {
            Complex64::new(0.0, 0.0)
        } else {
            self.coeffs[(j + self.jmax) as usize]
        }
    }

    pub fn set(&mut self, j: i64, v: Complex64) {
        assert!(
            j.abs() <= self.jmax,
            "mode {j} outside truncation {}",
            self.jmax
        );
        self.coeffs[(j + self.jmax) as usize] = v;
    }

    pub fn add(&mut self, j: i64, v: Complex64) {
        let cur = self.get(j);
        self.set(j, cur + v);
    }

    pub fn modes(&self) -> impl Iterator<Item = (i64, Complex64)> + '_ {
        self.coeffs
            .iter()
            .enumerate()
            .map(move |(k, c)| (k as i64 - self.jmax, *c))
    }

    /// Apply a Fourier multiplier `j ↦ m(j)`.
    pub fn map_modes(&self, m: impl Fn(i64, Complex64) -> Complex64) -> Self {
        let coeffs = self.modes().map(|(j, c)| m(j, c)).collect();
        Self {
            jmax: self.jmax,
            coeffs,
        }
    }

    /// Coefficient-space `ℓ²` norm.
    pub fn norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Largest violation of `u_{−j} = conj(u_j)`.
    pub fn hermitian_defect(&self) -> f64 {
        (0..=self.jmax)
            .map(|j| (self.get(-j) - self.get(j).conj()).norm())
            .fold(0.0, f64::max)
    }

    /// Real part of the sum `Σ u_j e^{ijx}`.
    pub fn eval(&self, x: f64) -> f64 {
        self.modes()
            .map(|(j, c)| (c * Complex64::from_polar(1.0, j as f64 * x)).re)
            .sum()
    }

    /// `(u, v)_{L²(T)} = 2π Σ u_j conj(v_j)` (real part).
    pub fn l2_inner(&self, other: &Self) -> f64 {
        let jm = self.jmax.max(other.jmax);
        2.0 * PI
            * (-jm..=jm)
                .map(|j| (self.get(j) * other.get(j).conj()).re)
                .sum::<f64>()
    }

    pub fn sub(&self, other: &Self) -> Self {
        let jm = self.jmax.max(other.jmax);
        let mut out = Self::zeros(jm);
        for j in -jm..=jm {
            out.set(j, self.get(j) - other.get(j));
        }
        out
    }
}

/// A pair of real fields: `(η, ψ)` or `(η, ζ)` depending on context.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveField {
    pub eta: ModeField,
    pub second: ModeField,
}

impl WaveField {
    pub fn zeros(jmax: i64) -> Self {
        Self {
            eta: ModeField::zeros(jmax),
            second: ModeField::zeros(jmax),
        }
    }

    pub fn jmax(&self) -> i64 {
        self.eta.jmax.max(self.second.jmax)
    }

    pub fn norm(&self) -> f64 {
        self.eta.norm().hypot(self.second.norm())
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self {
            eta: self.eta.sub(&other.eta),
            second: self.second.sub(&other.second),
        }
    }

    /// `(u, v)_{L²}` summed over both components.
    pub fn l2_inner(&self, other: &Self) -> f64 {
        self.eta.l2_inner(&other.eta) + self.second.l2_inner(&other.second)
    }
}

/// One coefficient of a quasi-periodic field: `e^{i(ℓ·φ + jx)}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TorusMode {
    pub ell: Vec<i64>,
    pub j: i64,
    pub eta: Complex64,
    pub second: Complex64,
}

/// A quasi-periodic field `u(φ, x)` with `φ = ω t`.
#[derive(Debug, Clone, PartialEq)]
pub struct TorusField {
    pub omega: Vec<f64>,
    pub modes: Vec<TorusMode>,
}

impl TorusField {
    pub fn jmax(&self) -> i64 {
        self.modes.iter().map(|m| m.j.abs()).max().unwrap_or(0)
    }

    fn phase(&self, ell: &[i64], t: f64) -> f64 {
        self.omega
            .iter()
            .zip(ell)
            .map(|(w, &l)| w * l as f64)
            .sum::<f64>()
            * t
    }

    /// Snapshot at time `t`.
    pub fn at_time(&self, t: f64) -> WaveField {
        self.snapshot(t, false)
    }

    /// Time derivative of the snapshot at `t`.
    pub fn time_derivative(&self, t: f64) -> WaveField {
        self.snapshot(t, true)
    }

    fn snapshot(&self, t: f64, derivative: bool) -> WaveField {
        let mut out = WaveField::zeros(self.jmax());
        for m in &self.modes {
            let mut f = Complex64::from_polar(1.0, self.phase(&m.ell, t));
            if derivative {
                f *= I * crate::lattice::dot(&self.omega, &m.ell);
            }
            out.eta.add(m.j, m.eta * f);
            out.second.add(m.j, m.second * f);
        }
        out
    }

    /// Translate in space by `ς`: `u(φ, x + ς)`.
    pub fn shift_x(&self, s: f64) -> Self {
        let modes = self
            .modes
            .iter()
            .map(|m| {
                let f = Complex64::from_polar(1.0, m.j as f64 * s);
                TorusMode {
                    eta: m.eta * f,
                    second: m.second * f,
                    ..m.clone()
                }
            })
            .collect();
        Self {
            omega: self.omega.clone(),
            modes,
        }
    }

    /// Translate the angles by `θ`: `u(φ + θ, x)`.
    pub fn shift_angles(&self, theta: &[f64]) -> Self {
        let modes = self
            .modes
            .iter()
            .map(|m| {
                let f = Complex64::from_polar(1.0, crate::lattice::dot(theta, &m.ell));
                TorusMode {
                    eta: m.eta * f,
                    second: m.second * f,
                    ..m.clone()
                }
            })
            .collect();
        Self {
            omega: self.omega.clone(),
            modes,
        }
    }
}

/// Input of [`synthesize_linear`].
#[derive(Debug, Clone)]
pub struct LinearWaveSpec {
    pub sites: TangentialSites,
    pub amplitudes: Vec<f64>,
    pub params: DispersionParams,
    pub gamma: f64,
}

impl LinearWaveSpec {
    pub fn validate(&self) -> Result<()> {
        if self.amplitudes.len() != self.sites.nu() {
            return Err(Error::invalid(format!(
                "amplitudes: expected {} values, got {}",
                self.sites.nu(),
                self.amplitudes.len()
            )));
        }
        if self
            .amplitudes
            .iter()
            .any(|a| !(a.is_finite() && *a >= 0.0))
        {
            return Err(Error::invalid("amplitudes must be finite and nonnegative"));
        }
        self.params.validate()
    }
}

/// The reversible traveling solution `(η, ψ)(φ, x)` with `φ = Ω⃗(γ) t`.
pub fn synthesize_torus(spec: &LinearWaveSpec) -> Result<TorusField> {
    spec.validate()?;
    let nu = spec.sites.nu();
    let omega = dispersion::tangential_vector(&spec.sites, &spec.params, spec.gamma);
    let mut modes = Vec::with_capacity(2 * nu);
    for a in 0..nu {
        let n = spec.sites.nbar()[a];
        let sigma = spec.sites.sigma()[a];
        let ja = spec.sites.jvec()[a];
        let c = dispersion::coeffs_m_p(n, &spec.params, spec.gamma)?;
        let root = spec.amplitudes[a].sqrt();
        let p = if sigma > 0 { c.p_plus } else { c.p_minus };
        let amp_eta = c.m * root;
        let amp_psi = -(sigma as f64) * p * root;
        let mut ell = vec![0i64; nu];
        ell[a] = 1;
        modes.push(TorusMode {
            ell: ell.clone(),
            j: -ja,
            eta: Complex64::new(0.5 * amp_eta, 0.0),
            second: Complex64::new(0.0, -0.5 * amp_psi),
        });
        ell[a] = -1;
        modes.push(TorusMode {
            ell,
            j: ja,
            eta: Complex64::new(0.5 * amp_eta, 0.0),
            second: Complex64::new(0.0, 0.5 * amp_psi),
        });
    }
    Ok(TorusField { omega, modes })
}

/// The linear solution evaluated at time `t`.
pub fn synthesize_linear(spec: &LinearWaveSpec, t: f64) -> Result<WaveField> {
    Ok(synthesize_torus(spec)?.at_time(t))
}

/// Direction of the Wahlén change of variables.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// `(η, ψ) ↦ (η, ζ)`.
    Forward,
    /// `(η, ζ) ↦ (η, ψ)`.
    Backward,
}

/// Symbol of `∂_x^{−1}`: `1/(ij)` off zero, `0` at zero.
fn inv_dx(j: i64) -> Complex64 {
    if j == 0 {
        Complex64::new(0.0, 0.0)
    } else {
        Complex64::new(0.0, -1.0 / j as f64)
    }
}

/// `ζ = ψ − (γ/2) ∂_x^{−1} η` and its inverse.
pub fn wahlen(field: &WaveField, gamma: f64, direction: Direction) -> WaveField {
    let sign = match direction {
        Direction::Forward => -1.0,
        Direction::Backward => 1.0,
    };
    let jm = field.jmax();
    let mut second = ModeField::zeros(jm);
    for j in -jm..=jm {
        second.set(
            j,
            field.second.get(j) + sign * 0.5 * gamma * inv_dx(j) * field.eta.get(j),
        );
    }
    let mut eta = ModeField::zeros(jm);
    for j in -jm..=jm {
        eta.set(j, field.eta.get(j));
    }
    WaveField { eta, second }
}

/// Fourier coefficients `z_j` of the complex variable; the zero mode is unused.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexModes {
    pub z: ModeField,
}

/// `z = (M^{−1} η + i M ζ)/√2` per mode; the zero modes of `η, ζ` are dropped.
pub fn complexify(field: &WaveField, params: &DispersionParams, gamma: f64) -> ComplexModes {
    let jm = field.jmax();
    let mut z = ModeField::zeros(jm);
    for j in -jm..=jm {
        if j == 0 {
            continue;
        }
        let m = dispersion::coeff_m_raw(j, params, gamma);
        z.set(
            j,
            (field.eta.get(j) / m + I * m * field.second.get(j)) / 2f64.sqrt(),
        );
    }
    ComplexModes { z }
}

/// Inverse of [`complexify`]: `η = M(z + z̄)/√2`, `ζ = −i M^{−1}(z − z̄)/√2`.
pub fn decomplexify(z: &ComplexModes, params: &DispersionParams, gamma: f64) -> WaveField {
    let jm = z.z.jmax();
    let mut out = WaveField::zeros(jm);
    for j in -jm..=jm {
        if j == 0 {
            continue;
        }
        let m = dispersion::coeff_m_raw(j, params, gamma);
        let zj = z.z.get(j);
        let zbar = z.z.get(-j).conj();
        out.eta.set(j, m * (zj + zbar) / 2f64.sqrt());
        out.second.set(j, -I * (zj - zbar) / (m * 2f64.sqrt()));
    }
    out
}

/// Diagonal flow `z_j(t) = e^{−iΩ_j t} z_j(0)`.
pub fn evolve_linear(
    z0: &ComplexModes,
    t: f64,
    params: &DispersionParams,
    gamma: f64,
) -> ComplexModes {
    let z = z0.z.map_modes(|j, c| {
        if j == 0 {
            c
        } else {
            c * Complex64::from_polar(1.0, -dispersion::big_omega_raw(j, params, gamma) * t)
        }
    });
    ComplexModes { z }
}

/// Outcome of a reversibility test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReversibilityCheck {
    pub reversible: bool,
    pub defect: f64,
}

/// Reversibility of complex data: all `z_j` real. Defect `max |z_j − conj z_j|`.
pub fn check_reversible_z(z: &ComplexModes, tol: f64) -> ReversibilityCheck {
    let defect =
        z.z.modes()
            .map(|(_, c)| (c - c.conj()).norm())
            .fold(0.0, f64::max);
    ReversibilityCheck {
        reversible: defect <= tol,
        defect,
    }
}

/// Reversibility of a quasi-periodic field: `η(−φ,−x) = η`, `ψ(−φ,−x) = −ψ`,
/// i.e. real `η` coefficients and imaginary `ψ` coefficients.
pub fn check_reversible_torus(field: &TorusField, tol: f64) -> ReversibilityCheck {
    let defect = field
        .modes
        .iter()
        .map(|m| {
            (m.eta - m.eta.conj())
                .norm()
                .max((m.second + m.second.conj()).norm())
        })
        .fold(0.0, f64::max);
    ReversibilityCheck {
        reversible: defect <= tol,
        defect,
    }
}

/// Tangential angles, actions and the normal component of a snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct AaCoordinates {
    pub theta: Vec<f64>,
    pub actions: Vec<f64>,
    pub normal: WaveField,
}

/// Split an `(η, ζ)` snapshot into action-angle variables on the tangential
/// subspace (modes `z_j`, `j ∈ S`) and the normal remainder.
pub fn aa_coordinates(
    field: &WaveField,
    sites: &TangentialSites,
    xi: &[f64],
    params: &DispersionParams,
    gamma: f64,
) -> Result<AaCoordinates> {
    if xi.len() != sites.nu() {
        return Err(Error::invalid("xi must have one entry per tangential site"));
    }
    let mut z = complexify(field, params, gamma);
    let mut theta = Vec::with_capacity(xi.len());
    let mut actions = Vec::with_capacity(xi.len());
    for (&j, &x) in sites.jvec().iter().zip(xi) {
        let zj = z.z.get(j);
        theta.push(-zj.arg());
        actions.push(2.0 * PI * zj.norm_sqr() - x);
        if j.abs() <= z.z.jmax() {
            z.z.set(j, Complex64::new(0.0, 0.0));
        }
    }
    let normal = decomplexify(&z, params, gamma);
    Ok(AaCoordinates {
        theta,
        actions,
        normal,
    })
}

/// `v^⊺(θ, I) + w`, inverse of [`aa_coordinates`]. Requires `|I_j| < ξ_j`.
pub fn aa_embed(
    aa: &AaCoordinates,
    sites: &TangentialSites,
    xi: &[f64],
    params: &DispersionParams,
    gamma: f64,
) -> Result<WaveField> {
    if xi.len() != sites.nu() || aa.theta.len() != sites.nu() || aa.actions.len() != sites.nu() {
        return Err(Error::invalid(
            "aa_embed: dimension mismatch with the tangential sites",
        ));
    }
    for (i, x) in aa.actions.iter().zip(xi) {
        if !(i.abs() < *x) {
            return Err(Error::invalid(format!(
                "aa_embed: action {i} violates |I| < xi = {x}"
            )));
        }
    }
    let jm = aa
        .normal
        .jmax()
        .max(sites.nbar().iter().copied().max().unwrap_or(0));
    let mut w = WaveField::zeros(jm);
    for j in -jm..=jm {
        w.eta.set(j, aa.normal.eta.get(j));
        w.second.set(j, aa.normal.second.get(j));
    }
    let mut z = complexify(&w, params, gamma);
    for (a, (&j, x)) in sites.jvec().iter().zip(xi).enumerate() {
        let r = ((aa.actions[a] + x) / (2.0 * PI)).sqrt();
        z.z.add(j, Complex64::from_polar(r, -aa.theta[a]));
    }
    Ok(decomplexify(&z, params, gamma))
}

/// The tangential torus `v^⊺(θ, I)` alone.
pub fn tangential_torus(
    theta: &[f64],
    actions: &[f64],
    sites: &TangentialSites,
    xi: &[f64],
    params: &DispersionParams,
    gamma: f64,
) -> Result<WaveField> {
    let jm = sites.nbar().iter().copied().max().unwrap_or(1);
    let aa = AaCoordinates {
        theta: theta.to_vec(),
        actions: actions.to_vec(),
        normal: WaveField::zeros(jm),
    };
    aa_embed(&aa, sites, xi, params, gamma)
}

/// Apply the Hamiltonian operator `Ω_W` of the linear system in `(η, ζ)`.
pub fn apply_omega_w(field: &WaveField, params: &DispersionParams, gamma: f64) -> WaveField {
    let jm = field.jmax();
    let mut out = WaveField::zeros(jm);
    for j in -jm..=jm {
        if j == 0 {
            out.eta.set(0, params.g * field.eta.get(0));
            continue;
        }
        let gj = dispersion::g0(j, params.depth);
        let jf = j as f64;
        let a = params.g + gamma * gamma * gj / (4.0 * jf * jf);
        let b = I * 0.5 * gamma * gj / jf;
        let (e, s) = (field.eta.get(j), field.second.get(j));
        out.eta.set(j, a * e + b * s);
        out.second.set(j, -b * e + gj * s);
    }
    out
}

/// Spectral norm of the residual of `∂_t η = G(0)ψ`, `∂_t ψ = −gη + γ ∂_x^{−1} G(0) ψ`
/// at time `t`, with `∂_t` taken analytically.
pub fn residual_linear_system(
    field: &TorusField,
    params: &DispersionParams,
    gamma: f64,
    t: f64,
) -> f64 {
    let u = field.at_time(t);
    let du = field.time_derivative(t);
    let jm = u.jmax();
    let mut acc = 0.0;
    for j in -jm..=jm {
        let gj = if j == 0 {
            0.0
        } else {
            dispersion::g0(j, params.depth)
        };
        let (eta, psi) = (u.eta.get(j), u.second.get(j));
        let r1 = du.eta.get(j) - gj * psi;
        let r2 = du.second.get(j) + params.g * eta - gamma * inv_dx(j) * gj * psi;
        acc += r1.norm_sqr() + r2.norm_sqr();
    }
    acc.sqrt()
}

/// Projections `α_j, β_j` computed from `L²` pairings on a uniform grid.
pub fn projections_alpha_beta(
    field: &WaveField,
    j: i64,
    params: &DispersionParams,
    gamma: f64,
    grid: usize,
) -> (f64, f64) {
    let m = dispersion::coeff_m_raw(j, params, gamma);
    let h = 2.0 * PI / grid as f64;
    let (mut ec, mut es, mut zc, mut zs) = (0.0, 0.0, 0.0, 0.0);
    for k in 0..grid {
        let x = k as f64 * h;
        let (c, s) = ((j as f64 * x).cos(), (j as f64 * x).sin());
        let e = field.eta.eval(x);
        let z = field.second.eval(x);
        ec += e * c * h;
        es += e * s * h;
        zc += z * c * h;
        zs += z * s * h;
    }
    let alpha = (ec / m + m * zs) / (2.0 * PI);
    let beta = (m * zc - es / m) / (2.0 * PI);
    (alpha, beta)
}
