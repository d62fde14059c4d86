//! Thomas algorithm for tridiagonal systems.
//!
//! Row `i` reads `sub[i] * x[i-1] + diag[i] * x[i] + sup[i] * x[i+1] = rhs[i]`;
//! `sub[0]` and `sup[n-1]` are ignored.

/// Solves the system, returning `None` on a zero pivot or length mismatch.
pub fn solve(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Option<Vec<f64>> {
    let n = diag.len();
    if sub.len() != n || sup.len() != n || rhs.len() != n {
        return None;
    }
    let mut x = rhs.to_vec();
    let mut scratch = vec![0.0; n];
    solve_in_place(sub, diag, sup, &mut x, &mut scratch).then_some(x)
}

/// In-place variant: `rhs` is overwritten with the solution. `scratch` must
/// have the same length as `diag`.
pub fn solve_in_place(
    sub: &[f64],
    diag: &[f64],
    sup: &[f64],
    rhs: &mut [f64],
    scratch: &mut [f64],
) -> bool {
    let n = diag.len();
    if n == 0 {
        return true;
    }
    let mut beta = diag[0];
    if beta == 0.0 || !beta.is_finite() {
        return false;
    }
    rhs[0] /= beta;
    for i in 1..n {
        scratch[i] = sup[i - 1] / beta;
        beta = diag[i] - sub[i] * scratch[i];
        if beta == 0.0 || !beta.is_finite() {
            return false;
        }
        rhs[i] = (rhs[i] - sub[i] * rhs[i - 1]) / beta;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= scratch[i + 1] * rhs[i + 1];
    }
    true
}
