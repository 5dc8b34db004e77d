//! Dense reference linear algebra: matrix exponential action, dense LU, and
//! finite-difference weights derived from first principles (Vandermonde
//! solves) rather than the closed-form stencils used by the solver.

use crate::error::{PricerError, Result};

pub type DenseMat = Vec<Vec<f64>>;

/// e^{dt A} v by scaling and squaring on the vector: split dt into substeps
/// so the scaled norm is small, then sum the Taylor series of each substep to
/// machine precision.
pub fn dense_expm_propagate(a: &DenseMat, v: &[f64], dt: f64) -> Result<Vec<f64>> {
    let n = v.len();
    if a.len() != n || a.iter().any(|row| row.len() != n) {
        return Err(PricerError::InvalidConfig("dense_expm_propagate: shape mismatch".into()));
    }
    if n > 3000 {
        return Err(PricerError::InvalidConfig("dense_expm_propagate: size cap is 3000".into()));
    }
    let inf_norm = a
        .iter()
        .map(|row| row.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0f64, f64::max);
    let total = inf_norm * dt.abs();
    let substeps = (total / 0.5).ceil().max(1.0) as usize;
    let h = dt / substeps as f64;

    let mut x = v.to_vec();
    let mut term = vec![0.0; n];
    let mut next = vec![0.0; n];
    for _ in 0..substeps {
        term.copy_from_slice(&x);
        let mut k = 1usize;
        loop {
            // term <- (h/k) A term
            for (i, row) in a.iter().enumerate() {
                let mut acc = 0.0;
                for (j, &aij) in row.iter().enumerate() {
                    acc += aij * term[j];
                }
                next[i] = acc * h / k as f64;
            }
            std::mem::swap(&mut term, &mut next);
            let tnorm: f64 = term.iter().map(|t| t.abs()).fold(0.0, f64::max);
            let xnorm: f64 = x.iter().map(|t| t.abs()).fold(0.0, f64::max).max(1e-300);
            for i in 0..n {
                x[i] += term[i];
            }
            if !tnorm.is_finite() {
                return Err(PricerError::SolveFailure("dense_expm_propagate overflow".into()));
            }
            if tnorm <= 1e-16 * xnorm || k > 200 {
                break;
            }
            k += 1;
        }
    }
    Ok(x)
}

/// Solve A x = b densely with partial pivoting.
pub fn dense_solve(a: &DenseMat, b: &[f64]) -> Result<Vec<f64>> {
    let n = b.len();
    let mut m: DenseMat = a.to_vec();
    let mut x = b.to_vec();
    for col in 0..n {
        let mut piv = col;
        for r in col + 1..n {
            if m[r][col].abs() > m[piv][col].abs() {
                piv = r;
            }
        }
        if m[piv][col].abs() < 1e-300 {
            return Err(PricerError::Singular("dense_solve".into()));
        }
        m.swap(col, piv);
        x.swap(col, piv);
        let d = m[col][col];
        for j in col..n {
            m[col][j] /= d;
        }
        x[col] /= d;
        for r in 0..n {
            if r != col {
                let f = m[r][col];
                if f != 0.0 {
                    for j in col..n {
                        m[r][j] -= f * m[col][j];
                    }
                    x[r] -= f * x[col];
                }
            }
        }
    }
    Ok(x)
}

/// Derivative weights at x0 over the given nodes, from the Vandermonde system
/// sum_j w_j (x_j - x0)^p = p! [p == order], p = 0..len-1.
pub fn dense_lagrange_weights(xs: &[f64], x0: f64, order: usize) -> Vec<f64> {
    let n = xs.len();
    let mut vander: DenseMat = vec![vec![0.0; n]; n];
    let mut rhs = vec![0.0; n];
    let mut fact = 1.0;
    for p in 0..n {
        if p > 0 {
            fact *= p as f64;
        }
        for (j, &xj) in xs.iter().enumerate() {
            vander[p][j] = (xj - x0).powi(p as i32);
        }
        if p == order {
            rhs[p] = fact;
        }
    }
    dense_solve(&vander, &rhs).expect("vandermonde solvable for distinct nodes")
}

/// Dense one-sided first-derivative matrix on `x`, second order where the
/// grid allows it, degrading exactly like the solver's boundary policy.
pub fn dense_lagrange_d1(x: &[f64], forward: bool, second_order: bool) -> DenseMat {
    let n = x.len();
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        let support: Vec<usize> = if forward {
            if second_order && i + 2 < n {
                vec![i, i + 1, i + 2]
            } else if i + 1 < n {
                vec![i, i + 1]
            } else {
                continue;
            }
        } else if second_order && i >= 2 {
            vec![i - 2, i - 1, i]
        } else if i >= 1 {
            vec![i - 1, i]
        } else {
            continue;
        };
        let xs: Vec<f64> = support.iter().map(|&j| x[j]).collect();
        let w = dense_lagrange_weights(&xs, x[i], 1);
        for (k, &j) in support.iter().enumerate() {
            d[i][j] = w[k];
        }
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expm_of_zero_is_identity() {
        let a = vec![vec![0.0; 4]; 4];
        let v = vec![1.0, -2.0, 3.5, 0.25];
        let out = dense_expm_propagate(&a, &v, 1.7).unwrap();
        assert_eq!(out, v);
    }

    #[test]
    fn expm_of_diagonal() {
        let n = 3;
        let mut a = vec![vec![0.0; n]; n];
        for i in 0..n {
            a[i][i] = -1.0;
        }
        let v = vec![2.0, 4.0, -1.0];
        let out = dense_expm_propagate(&a, &v, 1.0).unwrap();
        for i in 0..n {
            assert!((out[i] - v[i] * (-1.0f64).exp()).abs() < 1e-14);
        }
    }

    #[test]
    fn expm_matches_rotation() {
        // exp(t J) with J = [[0,-1],[1,0]] is a rotation by t
        let a = vec![vec![0.0, -1.0], vec![1.0, 0.0]];
        let v = vec![1.0, 0.0];
        let t = 0.7;
        let out = dense_expm_propagate(&a, &v, t).unwrap();
        assert!((out[0] - t.cos()).abs() < 1e-13);
        assert!((out[1] - t.sin()).abs() < 1e-13);
    }

    #[test]
    fn lagrange_weights_reproduce_uniform_stencils() {
        let w = dense_lagrange_weights(&[0.0, 1.0, 2.0], 2.0, 1);
        // backward second-order at the right end: (1/2, -2, 3/2)
        assert!((w[0] - 0.5).abs() < 1e-12);
        assert!((w[1] + 2.0).abs() < 1e-12);
        assert!((w[2] - 1.5).abs() < 1e-12);

        let w2 = dense_lagrange_weights(&[0.0, 1.0, 2.0], 1.0, 2);
        for (a, b) in w2.iter().zip([1.0, -2.0, 1.0]) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
