//! Small dense solvers. Matrices are row-major `Vec<f64>` of size `n * n`.

/// Returned when elimination meets a zero pivot.
#[derive(Debug, Clone, PartialEq)]
pub struct Singular {
    /// Ratio of the largest to the smallest pivot magnitude seen, a cheap
    /// condition estimate.
    pub condition_estimate: f64,
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub fn solve(a: &[f64], b: &[f64]) -> Result<Vec<f64>, Singular> {
    let n = b.len();
    assert_eq!(a.len(), n * n, "matrix must be n x n");
    let mut m = a.to_vec();
    let mut rhs = b.to_vec();
    let mut max_pivot = 0.0f64;
    let mut min_pivot = f64::INFINITY;
    let scale = m.iter().fold(0.0f64, |acc, v| acc.max(v.abs())).max(f64::MIN_POSITIVE);

    for col in 0..n {
        let (piv_row, piv_val) = (col..n)
            .map(|r| (r, m[r * n + col].abs()))
            .fold((col, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        max_pivot = max_pivot.max(piv_val);
        min_pivot = min_pivot.min(piv_val);
        if piv_val <= scale * 1e-14 || !piv_val.is_finite() {
            return Err(Singular {
                condition_estimate: max_pivot / piv_val.max(f64::MIN_POSITIVE),
            });
        }
        if piv_row != col {
            for c in 0..n {
                m.swap(col * n + c, piv_row * n + c);
            }
            rhs.swap(col, piv_row);
        }
        let p = m[col * n + col];
        for r in (col + 1)..n {
            let f = m[r * n + col] / p;
            if f == 0.0 {
                continue;
            }
            for c in col..n {
                m[r * n + c] -= f * m[col * n + c];
            }
            rhs[r] -= f * rhs[col];
        }
    }

    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let mut acc = rhs[r];
        for c in (r + 1)..n {
            acc -= m[r * n + c] * x[c];
        }
        x[r] = acc / m[r * n + r];
    }
    Ok(x)
}

/// Solves with one round of iterative refinement against the original system.
pub fn solve_refined(a: &[f64], b: &[f64]) -> Result<Vec<f64>, Singular> {
    let n = b.len();
    let mut x = solve(a, b)?;
    let resid: Vec<f64> = (0..n)
        .map(|r| b[r] - (0..n).map(|c| a[r * n + c] * x[c]).sum::<f64>())
        .collect();
    let dx = solve(a, &resid)?;
    for (xi, d) in x.iter_mut().zip(dx) {
        *xi += d;
    }
    Ok(x)
}

/// Lower-triangular factor `l` with `l l^T = a` for a symmetric positive
/// semi-definite `a`. Pivots that are zero up to `tol` (relative to the
/// diagonal) produce a zero column, so rank-deficient PSD input still
/// factors. Returns `None` when a pivot is clearly negative.
pub fn cholesky_psd(a: &[f64], n: usize, tol: f64) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= l[j * n + k] * l[j * n + k];
        }
        let diag_scale = a[j * n + j].abs().max(1.0);
        if d < -tol * diag_scale {
            return None;
        }
        if d <= tol * diag_scale {
            // column j is (numerically) in the span of the previous ones
            for i in (j + 1)..n {
                let mut s = a[i * n + j];
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                if s.abs() > tol.sqrt() * diag_scale {
                    return None;
                }
            }
            continue;
        }
        let djj = d.sqrt();
        l[j * n + j] = djj;
        for i in (j + 1)..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = s / djj;
        }
    }
    Some(l)
}
