//! Quasi-periodic traveling waves `u(φ, x) = U(φ − ȷ x)` stored through the
//! profile coefficients `U_ℓ`, `|ℓ|_∞ ≤ L`, on `T^ν`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{box_index, box_points, bracket};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Parity in `(φ, x)`, equivalently in `ψ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    Even,
    Odd,
    None,
}

/// Truncated profile of a quasi-periodic traveling wave.
#[derive(Debug, Clone, PartialEq)]
pub struct TravelingWaveFn {
    jvec: Vec<i64>,
    l_max: i64,
    coeffs: Vec<Complex64>,
    parity: Parity,
}

/// One row of the coefficient table of a traveling wave, with the induced
/// spatial index `j = −ȷ·ℓ`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoefficientRow {
    pub l: Vec<i64>,
    pub j: i64,
    pub re: f64,
    pub im: f64,
}

impl TravelingWaveFn {
    pub fn zeros(jvec: &[i64], l_max: i64, parity: Parity) -> Self {
        let n = (2 * l_max + 1).pow(jvec.len() as u32) as usize;
        Self {
            jvec: jvec.to_vec(),
            l_max,
            coeffs: vec![ZERO; n],
            parity,
        }
    }

    /// Build from `(ℓ, U_ℓ)` pairs; coefficients outside the box are rejected.
    pub fn from_coeffs(
        jvec: &[i64],
        l_max: i64,
        parity: Parity,
        entries: impl IntoIterator<Item = (Vec<i64>, Complex64)>,
    ) -> Result<Self> {
        let mut u = Self::zeros(jvec, l_max, parity);
        for (ell, c) in entries {
            if ell.len() != jvec.len() {
                return Err(Error::invalid("mode dimension does not match ν"));
            }
            let k = box_index(&ell, l_max)
                .ok_or_else(|| Error::invalid(format!("mode {ell:?} outside |ℓ|_∞ ≤ {l_max}")))?;
            u.coeffs[k] += c;
        }
        Ok(u)
    }

    pub fn nu(&self) -> usize {
        self.jvec.len()
    }

    pub fn l_max(&self) -> i64 {
        self.l_max
    }

    pub fn jvec(&self) -> &[i64] {
        &self.jvec
    }

    pub fn parity(&self) -> Parity {
        self.parity
    }

    pub fn with_parity(mut self, parity: Parity) -> Self {
        self.parity = parity;
        self
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn modes(&self) -> Vec<Vec<i64>> {
        box_points(self.nu(), self.l_max)
    }

    pub fn get(&self, ell: &[i64]) -> Complex64 {
        box_index(ell, self.l_max).map_or(ZERO, |k| self.coeffs[k])
    }

    pub fn set(&mut self, ell: &[i64], v: Complex64) {
        let k = box_index(ell, self.l_max).expect("mode outside truncation box");
        self.coeffs[k] = v;
    }

    /// `⟨U⟩ = U_0`.
    pub fn mean(&self) -> f64 {
        self.get(&vec![0; self.nu()]).re
    }

    /// `‖U‖_s = (Σ |U_ℓ|² ⟨ℓ⟩^{2s})^{1/2}`.
    pub fn norm_s(&self, s: f64) -> f64 {
        self.modes()
            .iter()
            .zip(&self.coeffs)
            .map(|(l, c)| c.norm_sqr() * bracket(l).powf(2.0 * s))
            .sum::<f64>()
            .sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Momentum `j = −ȷ·ℓ` carried by profile mode `ℓ`.
    pub fn spatial_index(&self, ell: &[i64]) -> i64 {
        -self.jvec.iter().zip(ell).map(|(a, b)| a * b).sum::<i64>()
    }

    pub fn coefficient_table(&self) -> Vec<CoefficientRow> {
        self.modes()
            .into_iter()
            .zip(&self.coeffs)
            .filter(|(_, c)| c.norm() > 0.0)
            .map(|(l, c)| CoefficientRow {
                j: self.spatial_index(&l),
                l,
                re: c.re,
                im: c.im,
            })
            .collect()
    }

    /// `max |U_{−ℓ} − conj(U_ℓ)|`.
    pub fn hermitian_defect(&self) -> f64 {
        let n = self.coeffs.len();
        (0..n)
            .map(|k| (self.coeffs[n - 1 - k] - self.coeffs[k].conj()).norm())
            .fold(0.0, f64::max)
    }

    /// Violation of the declared parity: imaginary parts for even, real parts
    /// for odd, zero otherwise.
    pub fn parity_defect(&self) -> f64 {
        match self.parity {
            Parity::Even => self.coeffs.iter().map(|c| c.im.abs()).fold(0.0, f64::max),
            Parity::Odd => self.coeffs.iter().map(|c| c.re.abs()).fold(0.0, f64::max),
            Parity::None => 0.0,
        }
    }

    /// Project onto real-valued functions of the declared parity.
    pub fn symmetrize(&mut self) {
        let n = self.coeffs.len();
        let old = self.coeffs.clone();
        for k in 0..n {
            let mut c = 0.5 * (old[k] + old[n - 1 - k].conj());
            match self.parity {
                Parity::Even => c.im = 0.0,
                Parity::Odd => c.re = 0.0,
                Parity::None => {}
            }
            self.coeffs[k] = c;
        }
    }

    fn zip_with(&self, other: &Self, f: impl Fn(Complex64, Complex64) -> Complex64) -> Self {
        assert_eq!(
            self.jvec, other.jvec,
            "traveling waves over different sites"
        );
        let l = self.l_max.max(other.l_max);
        let mut out = Self::zeros(&self.jvec, l, self.parity);
        for ell in out.modes() {
            let v = f(self.get(&ell), other.get(&ell));
            out.set(&ell, v);
        }
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.coeffs.iter_mut().for_each(|c| *c *= s);
        out
    }

    /// Apply a multiplier `ℓ ↦ m(ℓ)` to the coefficients.
    pub fn map_modes(&self, parity: Parity, m: impl Fn(&[i64], Complex64) -> Complex64) -> Self {
        let coeffs = self
            .modes()
            .iter()
            .zip(&self.coeffs)
            .map(|(l, c)| m(l, *c))
            .collect();
        Self {
            jvec: self.jvec.clone(),
            l_max: self.l_max,
            coeffs,
            parity,
        }
    }

    /// `∂_x u`, i.e. `−ȷ·∇_ψ U`.
    pub fn dx(&self) -> Self {
        let p = flip(self.parity);
        let jv = self.jvec.clone();
        self.map_modes(p, |l, c| {
            let m: i64 = jv.iter().zip(l).map(|(a, b)| a * b).sum();
            c * Complex64::new(0.0, -(m as f64))
        })
    }

    /// `ω·∂_φ u`, i.e. `ω·∇_ψ U`.
    pub fn omega_dphi(&self, omega: &[f64]) -> Self {
        let p = flip(self.parity);
        self.map_modes(p, |l, c| {
            c * Complex64::new(0.0, crate::lattice::dot(omega, l))
        })
    }

    /// `Π_N`: keep `⟨ℓ⟩ ≤ N`.
    pub fn project_low(&self, n: f64) -> Self {
        self.map_modes(self.parity, |l, c| if bracket(l) <= n { c } else { ZERO })
    }

    /// `Π_N^⊥ = Id − Π_N`.
    pub fn project_high(&self, n: f64) -> Self {
        self.map_modes(self.parity, |l, c| if bracket(l) > n { c } else { ZERO })
    }

    /// Copy into a box of a different size, dropping modes outside it.
    pub fn resized(&self, l_max: i64) -> Self {
        let mut out = Self::zeros(&self.jvec, l_max, self.parity);
        for ell in out.modes() {
            let v = self.get(&ell);
            out.set(&ell, v);
        }
        out
    }

    /// Values of the real part at arbitrary points `ψ ∈ T^ν`.
    pub fn eval_points(&self, points: &[Vec<f64>]) -> Vec<f64> {
        points.par_iter().map(|p| self.eval_complex(p).re).collect()
    }

    /// `Σ_ℓ U_ℓ e^{iℓ·ψ}` by contracting one axis at a time.
    pub fn eval_complex(&self, psi: &[f64]) -> Complex64 {
        let width = (2 * self.l_max + 1) as usize;
        let mut buf = self.coeffs.clone();
        for a in (0..self.nu()).rev() {
            let phases = phase_row(psi[a], self.l_max);
            let outer = buf.len() / width;
            let mut next = vec![ZERO; outer];
            for (o, slot) in next.iter_mut().enumerate() {
                *slot = buf[o * width..(o + 1) * width]
                    .iter()
                    .zip(&phases)
                    .map(|(c, e)| c * e)
                    .sum();
            }
            buf = next;
        }
        buf[0]
    }

    /// Real samples on the uniform grid with `m` points per axis.
    pub fn to_grid(&self, m: usize) -> Vec<f64> {
        let nu = self.nu();
        let width = (2 * self.l_max + 1) as usize;
        let syn = synthesis_matrix(m, self.l_max);
        let mut data = self.coeffs.clone();
        let mut dims = vec![width; nu];
        for a in 0..nu {
            data = transform_axis(&data, &dims, a, &syn, m);
            dims[a] = m;
        }
        data.into_iter().map(|c| c.re).collect()
    }

    /// Discrete Fourier coefficients of real grid samples, truncated to `|ℓ|_∞ ≤ l_max`.
    pub fn from_grid(jvec: &[i64], l_max: i64, parity: Parity, m: usize, values: &[f64]) -> Self {
        let nu = jvec.len();
        assert_eq!(values.len(), m.pow(nu as u32));
        let width = (2 * l_max + 1) as usize;
        let ana = analysis_matrix(m, l_max);
        let mut data: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        let mut dims = vec![m; nu];
        for a in 0..nu {
            data = transform_axis(&data, &dims, a, &ana, width);
            dims[a] = width;
        }
        Self {
            jvec: jvec.to_vec(),
            l_max,
            coeffs: data,
            parity,
        }
    }

    /// Pointwise product, computed on a grid fine enough to be alias-free in the box.
    pub fn mul(&self, other: &Self, parity: Parity) -> Self {
        let l = self.l_max.max(other.l_max);
        let m = grid_size(l);
        let a = self.to_grid(m);
        let b = other.to_grid(m);
        let prod: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x * y).collect();
        let mut out = Self::from_grid(&self.jvec, l, parity, m, &prod);
        out.symmetrize();
        out
    }
}

fn flip(p: Parity) -> Parity {
    match p {
        Parity::Even => Parity::Odd,
        Parity::Odd => Parity::Even,
        Parity::None => Parity::None,
    }
}

/// Uniform grid nodes `2πk/m` on `T^ν`, last axis fastest.
pub fn grid_points(nu: usize, m: usize) -> Vec<Vec<f64>> {
    let total = m.pow(nu as u32);
    (0..total)
        .map(|mut k| {
            let mut p = vec![0.0; nu];
            for a in (0..nu).rev() {
                p[a] = 2.0 * PI * (k % m) as f64 / m as f64;
                k /= m;
            }
            p
        })
        .collect()
}

/// Points per axis used for products and compositions: two-fold oversampling.
pub fn grid_size(l_max: i64) -> usize {
    (2 * (2 * l_max + 1)) as usize
}

fn phase_row(theta: f64, l_max: i64) -> Vec<Complex64> {
    (-l_max..=l_max)
        .map(|l| Complex64::from_polar(1.0, l as f64 * theta))
        .collect()
}

fn synthesis_matrix(m: usize, l_max: i64) -> Vec<Vec<Complex64>> {
    (0..m)
        .map(|k| phase_row(2.0 * PI * k as f64 / m as f64, l_max))
        .collect()
}

fn analysis_matrix(m: usize, l_max: i64) -> Vec<Vec<Complex64>> {
    (-l_max..=l_max)
        .map(|l| {
            (0..m)
                .map(|k| {
                    Complex64::from_polar(
                        1.0 / m as f64,
                        -2.0 * PI * (l * k as i64) as f64 / m as f64,
                    )
                })
                .collect()
        })
        .collect()
}

/// Multiply along `axis` by `mat` (rows: output index, columns: input index).
fn transform_axis(
    data: &[Complex64],
    dims: &[usize],
    axis: usize,
    mat: &[Vec<Complex64>],
    out_n: usize,
) -> Vec<Complex64> {
    let n_in = dims[axis];
    let inner: usize = dims[axis + 1..].iter().product();
    let outer: usize = dims[..axis].iter().product();
    let mut out = vec![ZERO; outer * out_n * inner];
    out.par_chunks_mut(out_n * inner)
        .enumerate()
        .for_each(|(o, chunk)| {
            let base = o * n_in * inner;
            for r in 0..out_n {
                let row = &mat[r];
                for i in 0..inner {
                    let mut acc = ZERO;
                    for (k, w) in row.iter().enumerate() {
                        acc += w * data[base + k * inner + i];
                    }
                    chunk[r * inner + i] = acc;
                }
            }
        });
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cos1() -> TravelingWaveFn {
        TravelingWaveFn::from_coeffs(
            &[1, 2],
            3,
            Parity::Even,
            [
                (vec![1, 0], Complex64::new(0.5, 0.0)),
                (vec![-1, 0], Complex64::new(0.5, 0.0)),
            ],
        )
        .unwrap()
    }

    #[test]
    fn grid_roundtrip() {
        let mut u = cos1();
        u.set(&[2, -1], Complex64::new(0.1, 0.2));
        u.set(&[-2, 1], Complex64::new(0.1, -0.2));
        let m = grid_size(3);
        let back = TravelingWaveFn::from_grid(&[1, 2], 3, Parity::None, m, &u.to_grid(m));
        for (a, b) in back.coeffs().iter().zip(u.coeffs()) {
            assert!((a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn pointwise_eval_matches_grid() {
        let u = cos1();
        let m = 8;
        let g = u.to_grid(m);
        let pts = grid_points(2, m);
        let direct = u.eval_points(&pts);
        for (a, b) in g.iter().zip(&direct) {
            assert_relative_eq!(*a, *b, epsilon = 1e-14);
        }
        assert_relative_eq!(
            u.eval_complex(&[0.3, 1.1]).re,
            0.3f64.cos(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn product_of_cosines() {
        let u = cos1();
        let p = u.mul(&u, Parity::Even);
        assert_relative_eq!(p.get(&[0, 0]).re, 0.5, epsilon = 1e-14);
        assert_relative_eq!(p.get(&[2, 0]).re, 0.25, epsilon = 1e-14);
    }

    #[test]
    fn dx_of_traveling_cosine() {
        let d = cos1().dx();
        // cos(ψ₁) with ψ₁ = φ₁ − x has ∂_x = sin(ψ₁).
        assert_relative_eq!(
            d.eval_complex(&[0.7, 0.0]).re,
            0.7f64.sin(),
            epsilon = 1e-15
        );
        assert_eq!(d.parity(), Parity::Odd);
    }
}
