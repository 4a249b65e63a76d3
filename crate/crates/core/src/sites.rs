//! Tangential sites: the excited wavenumbers, their signs and the momentum vector.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Excited sites `n̄_1 < … < n̄_ν` with signs `σ_a`, giving the momentum vector
/// `ȷ_a = σ_a n̄_a`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "SitesRepr", into = "SitesRepr")]
pub struct TangentialSites {
    nbar: Vec<i64>,
    sigma: Vec<i64>,
    jvec: Vec<i64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SitesRepr {
    nbar: Vec<i64>,
    sigma: Vec<i64>,
}

impl TryFrom<SitesRepr> for TangentialSites {
    type Error = Error;
    fn try_from(r: SitesRepr) -> Result<Self> {
        TangentialSites::new(r.nbar, r.sigma)
    }
}

impl From<TangentialSites> for SitesRepr {
    fn from(s: TangentialSites) -> Self {
        SitesRepr {
            nbar: s.nbar,
            sigma: s.sigma,
        }
    }
}

impl TangentialSites {
    pub fn new(nbar: Vec<i64>, sigma: Vec<i64>) -> Result<Self> {
        if nbar.is_empty() {
            return Err(Error::invalid(
                "sites: at least one tangential site is required",
            ));
        }
        if nbar.len() != sigma.len() {
            return Err(Error::invalid(format!(
                "sites: nbar has {} entries but sigma has {}",
                nbar.len(),
                sigma.len()
            )));
        }
        if nbar[0] < 1 {
            return Err(Error::invalid(
                "sites.nbar: entries must be positive integers",
            ));
        }
        for w in nbar.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::invalid(
                    "sites.nbar: moduli must be distinct and strictly increasing",
                ));
            }
        }
        if let Some(s) = sigma.iter().find(|s| **s != 1 && **s != -1) {
            return Err(Error::invalid(format!(
                "sites.sigma: sign {s} is not +1 or -1"
            )));
        }
        let jvec = nbar.iter().zip(&sigma).map(|(n, s)| n * s).collect();
        Ok(Self { nbar, sigma, jvec })
    }

    /// Number of tangential frequencies `ν`.
    pub fn nu(&self) -> usize {
        self.nbar.len()
    }

    pub fn nbar(&self) -> &[i64] {
        &self.nbar
    }

    pub fn sigma(&self) -> &[i64] {
        &self.sigma
    }

    /// The momentum vector `ȷ`.
    pub fn jvec(&self) -> &[i64] {
        &self.jvec
    }

    /// `ȷ·ℓ`.
    pub fn momentum(&self, ell: &[i64]) -> i64 {
        self.jvec.iter().zip(ell).map(|(a, b)| a * b).sum()
    }

    /// Whether `j` is a tangential site (an element of `S = {ȷ_a}`).
    pub fn is_tangential(&self, j: i64) -> bool {
        self.jvec.contains(&j)
    }

    /// Whether `j` is a normal index, i.e. `j ∉ S ∪ {0}`.
    pub fn is_normal(&self, j: i64) -> bool {
        j != 0 && !self.is_tangential(j)
    }
}
