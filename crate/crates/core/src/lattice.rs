//! Integer-lattice helpers shared by the enumeration, measure and operator modules.

/// `⟨ℓ⟩ = max(1, |ℓ|₁)`.
pub fn bracket(ell: &[i64]) -> f64 {
    ell.iter().map(|v| v.unsigned_abs()).sum::<u64>().max(1) as f64
}

/// `|ℓ|_∞`.
pub fn sup_norm(ell: &[i64]) -> i64 {
    ell.iter().map(|v| v.abs()).max().unwrap_or(0)
}

/// All `ℓ ∈ Z^ν` with `|ℓ|_∞ ≤ l_max`, in lexicographic order.
pub fn box_points(nu: usize, l_max: i64) -> Vec<Vec<i64>> {
    let side = (2 * l_max + 1) as usize;
    let total = side.pow(nu as u32);
    let mut out = Vec::with_capacity(total);
    let mut cur = vec![-l_max; nu];
    for _ in 0..total {
        out.push(cur.clone());
        for d in (0..nu).rev() {
            if cur[d] < l_max {
                cur[d] += 1;
                break;
            }
            cur[d] = -l_max;
        }
    }
    out
}

/// Row-major position of `ℓ` inside the box of half-width `l_max`, or `None` when outside.
pub fn box_index(ell: &[i64], l_max: i64) -> Option<usize> {
    let side = 2 * l_max + 1;
    let mut idx = 0i64;
    for &v in ell {
        if v.abs() > l_max {
            return None;
        }
        idx = idx * side + (v + l_max);
    }
    Some(idx as usize)
}

pub fn dot(a: &[f64], ell: &[i64]) -> f64 {
    a.iter().zip(ell).map(|(x, &l)| x * l as f64).sum()
}

pub fn neg(ell: &[i64]) -> Vec<i64> {
    ell.iter().map(|v| -v).collect()
}
