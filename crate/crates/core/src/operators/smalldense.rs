//! Small dense LU used only by the EM-matrix probe.

/// Invert a small dense matrix by Gauss-Jordan with partial pivoting.
/// Returns None when numerically singular.
pub fn invert(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a.iter().map(|row| {
        debug_assert_eq!(row.len(), n);
        row.clone()
    }).collect();
    let mut inv: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    for col in 0..n {
        let mut piv = col;
        for r in col + 1..n {
            if m[r][col].abs() > m[piv][col].abs() {
                piv = r;
            }
        }
        if m[piv][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, piv);
        inv.swap(col, piv);
        let d = m[col][col];
        for j in 0..n {
            m[col][j] /= d;
            inv[col][j] /= d;
        }
        for r in 0..n {
            if r != col {
                let f = m[r][col];
                if f != 0.0 {
                    for j in 0..n {
                        m[r][j] -= f * m[col][j];
                        inv[r][j] -= f * inv[col][j];
                    }
                }
            }
        }
    }
    Some(inv)
}

#[cfg(test)]
mod tests {
    #[test]
    fn inverts_small_matrix() {
        let a = vec![vec![2.0, 1.0], vec![1.0, 3.0]];
        let inv = super::invert(&a).unwrap();
        // det = 5
        assert!((inv[0][0] - 0.6).abs() < 1e-14);
        assert!((inv[0][1] + 0.2).abs() < 1e-14);
        assert!((inv[1][0] + 0.2).abs() < 1e-14);
        assert!((inv[1][1] - 0.4).abs() < 1e-14);
    }
}
