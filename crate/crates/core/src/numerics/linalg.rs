use super::{Matrix, NumericsError, Tolerances, Vector};

pub fn ensure_finite(m: &Matrix) -> Result<(), NumericsError> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(NumericsError::NonFinite)
    }
}

/// Builds a matrix from row slices, rejecting ragged input and NaN/Inf.
pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<Matrix, NumericsError> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(NumericsError::DimensionMismatch("ragged rows".into()));
    }
    let m = Matrix::from_fn(nrows, ncols, |i, j| rows[i][j]);
    ensure_finite(&m)?;
    Ok(m)
}

fn ensure_square(m: &Matrix) -> Result<(), NumericsError> {
    if m.is_square() {
        Ok(())
    } else {
        Err(NumericsError::NonSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        })
    }
}

pub fn frobenius_norm(m: &Matrix) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Induced ∞-norm (max absolute row sum).
pub fn infinity_norm(m: &Matrix) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn matrix_power(m: &Matrix, k: usize) -> Matrix {
    let mut out = Matrix::identity(m.nrows(), m.ncols());
    for _ in 0..k {
        out = &out * m;
    }
    out
}

/// Spectral radius.
///
/// Entrywise nonnegative matrices go through a bisection on the M-matrix test
/// (`rI - M` has positive leading pivots iff `r > ρ(M)`), which stays accurate
/// on defective Perron roots. Everything else uses the real Schur form.
pub fn spectral_radius(m: &Matrix) -> Result<f64, NumericsError> {
    ensure_square(m)?;
    ensure_finite(m)?;
    if m.nrows() == 0 {
        return Ok(0.0);
    }
    if m.iter().all(|&v| v >= 0.0) {
        return Ok(perron_root(m));
    }
    let eig = m.clone().complex_eigenvalues();
    Ok(eig.iter().map(|z| z.norm()).fold(0.0, f64::max))
}

/// `rI - m` is a nonsingular M-matrix iff Gaussian elimination without pivoting
/// yields strictly positive pivots; this holds exactly when `r > ρ(m)`.
fn exceeds_perron_root(m: &Matrix, r: f64) -> bool {
    let n = m.nrows();
    let mut a = -m.clone();
    for i in 0..n {
        a[(i, i)] += r;
    }
    for k in 0..n {
        let p = a[(k, k)];
        if p <= 0.0 {
            return false;
        }
        for i in (k + 1)..n {
            let f = a[(i, k)] / p;
            if f != 0.0 {
                for j in (k + 1)..n {
                    a[(i, j)] -= f * a[(k, j)];
                }
            }
        }
    }
    true
}

fn perron_root(m: &Matrix) -> f64 {
    let mut hi = infinity_norm(m);
    if hi == 0.0 {
        return 0.0;
    }
    let mut lo = 0.0;
    // make sure hi is a strict upper bound
    hi *= 1.0 + 1e-12;
    hi += f64::MIN_POSITIVE;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if exceeds_perron_root(m, mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Solves `a x = b` by LU, refusing systems whose condition estimate exceeds
/// [`Tolerances::condition_limit`].
pub fn solve_linear(a: &Matrix, b: &Vector) -> Result<Vector, NumericsError> {
    ensure_square(a)?;
    ensure_finite(a)?;
    if a.nrows() != b.len() {
        return Err(NumericsError::DimensionMismatch(format!(
            "{}x{} system with rhs of length {}",
            a.nrows(),
            a.ncols(),
            b.len()
        )));
    }
    if a.nrows() == 0 {
        return Ok(Vector::zeros(0));
    }
    let sv = a.clone().singular_values();
    let smax = sv.max();
    let smin = sv.min();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(condition <= Tolerances::DEFAULT.condition_limit) {
        return Err(NumericsError::SingularMatrix { condition });
    }
    let x = a
        .clone()
        .lu()
        .solve(b)
        .ok_or(NumericsError::SingularMatrix { condition })?;
    Ok(x)
}

/// Matrix exponential (Padé approximant with scaling and squaring).
pub fn matrix_exponential(m: &Matrix) -> Result<Matrix, NumericsError> {
    ensure_square(m)?;
    ensure_finite(m)?;
    Ok(m.clone().exp())
}

/// Moore–Penrose pseudo-inverse via SVD.
pub fn pseudo_inverse(m: &Matrix) -> Matrix {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Matrix::zeros(m.ncols(), m.nrows());
    }
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let eps = smax * f64::EPSILON * (m.nrows().max(m.ncols()) as f64);
    svd.pseudo_inverse(eps.max(f64::MIN_POSITIVE))
        .unwrap_or_else(|_| Matrix::zeros(m.ncols(), m.nrows()))
}
