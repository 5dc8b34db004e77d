//! Discrete differential operators: one-sided and central stencils on
//! non-uniform grids, banded matrix plumbing, EM-matrix diagnostics and the
//! assembly of the convection-diffusion operators F0..F3.

mod assemble;
mod smalldense;
pub mod solve;
mod stencil;

pub use assemble::{assemble_f, AxisOperator, DiffOperators, Discounting, FOperator, MixedPair, MixedPairTerm};
pub use stencil::{
    stencil_first_central, stencil_first_order, stencil_first_order2, stencil_rows_first,
    stencil_rows_second, stencil_second, Dir, StencilRow,
};

use crate::error::{PricerError, Result};

/// A banded matrix with offsets -2..=+2 plus optional explicit row overrides.
#[derive(Debug, Clone, PartialEq)]
pub struct BandedOperator {
    size: usize,
    /// bands[b][i] holds the entry (i, i + b - 2); out-of-range entries stay 0.
    bands: [Vec<f64>; 5],
    /// Rows replaced wholesale by explicit (col, value) entries.
    pub boundary_rows: Vec<BoundaryRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryRow {
    pub row: usize,
    pub entries: Vec<(usize, f64)>,
}

impl BandedOperator {
    pub fn zeros(size: usize) -> Self {
        BandedOperator {
            size,
            bands: std::array::from_fn(|_| vec![0.0; size]),
            boundary_rows: Vec::new(),
        }
    }

    pub fn identity(size: usize) -> Self {
        let mut op = Self::zeros(size);
        for i in 0..size {
            op.bands[2][i] = 1.0;
        }
        op
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, row: usize, offset: isize) -> f64 {
        debug_assert!((-2..=2).contains(&offset));
        self.bands[(offset + 2) as usize][row]
    }

    pub fn set(&mut self, row: usize, offset: isize, value: f64) {
        debug_assert!((-2..=2).contains(&offset));
        let col = row as isize + offset;
        debug_assert!(col >= 0 && (col as usize) < self.size, "entry out of range");
        self.bands[(offset + 2) as usize][row] = value;
    }

    pub fn add(&mut self, row: usize, offset: isize, value: f64) {
        let cur = self.get(row, offset);
        self.set(row, offset, cur + value);
    }

    /// Coefficient vector of one band, offset in -2..=2.
    pub fn band(&self, offset: isize) -> &[f64] {
        &self.bands[(offset + 2) as usize]
    }

    pub fn clear_row(&mut self, row: usize) {
        for b in &mut self.bands {
            b[row] = 0.0;
        }
    }

    /// self += c * other.
    pub fn scaled_add(&mut self, c: f64, other: &BandedOperator) {
        assert_eq!(self.size, other.size);
        for b in 0..5 {
            for i in 0..self.size {
                self.bands[b][i] += c * other.bands[b][i];
            }
        }
    }

    pub fn scale(&mut self, c: f64) {
        for b in &mut self.bands {
            for x in b.iter_mut() {
                *x *= c;
            }
        }
    }

    pub fn add_diag(&mut self, c: f64) {
        for i in 0..self.size {
            self.bands[2][i] += c;
        }
    }

    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.size);
        assert_eq!(y.len(), self.size);
        let n = self.size as isize;
        for i in 0..self.size {
            let mut acc = 0.0;
            for off in -2isize..=2 {
                let j = i as isize + off;
                if j >= 0 && j < n {
                    acc += self.bands[(off + 2) as usize][i] * x[j as usize];
                }
            }
            y[i] = acc;
        }
        for br in &self.boundary_rows {
            let mut acc = 0.0;
            for &(col, val) in &br.entries {
                acc += val * x[col];
            }
            y[br.row] = acc;
        }
    }

    pub fn apply_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.size];
        self.apply(x, &mut y);
        y
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.size]; self.size];
        let n = self.size as isize;
        for i in 0..self.size {
            for off in -2isize..=2 {
                let j = i as isize + off;
                if j >= 0 && j < n {
                    d[i][j as usize] = self.bands[(off + 2) as usize][i];
                }
            }
        }
        for br in &self.boundary_rows {
            for x in d[br.row].iter_mut() {
                *x = 0.0;
            }
            for &(col, val) in &br.entries {
                d[br.row][col] = val;
            }
        }
        d
    }

    /// Coordinate-format text dump `(row, col, value)` for debugging.
    pub fn dump_coo(&self) -> String {
        let mut out = String::from("row,col,value\n");
        let dense = self.to_dense();
        for (i, row) in dense.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    out.push_str(&format!("{i},{j},{v:.17e}\n"));
                }
            }
        }
        out
    }

    /// Solve self * x = rhs by banded LU. The operators produced here are
    /// diagonally dominant, so no pivoting is applied; a vanishing pivot is
    /// reported as a failure.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        if !self.boundary_rows.is_empty() {
            return Err(PricerError::SolveFailure(
                "banded solve does not support explicit boundary rows".into(),
            ));
        }
        let mut work = solve::PentaWork::new(self.size);
        for i in 0..self.size {
            work.sub2[i] = self.bands[0][i];
            work.sub1[i] = self.bands[1][i];
            work.diag[i] = self.bands[2][i];
            work.sup1[i] = self.bands[3][i];
            work.sup2[i] = self.bands[4][i];
        }
        let mut x = rhs.to_vec();
        work.solve(&mut x)?;
        Ok(x)
    }
}

/// Result of the EM-matrix probe.
#[derive(Debug, Clone, PartialEq)]
pub struct EmReport {
    pub is_em: bool,
    /// First entry violating the requirement that failed the check.
    pub offending_entry: Option<(usize, usize, f64)>,
    /// Minimum entry of the dense inverse (populated for sizes <= 500).
    pub inverse_min: Option<f64>,
}

/// Size cap for the dense-inverse probe inside [`em_check`].
pub const EM_DENSE_CAP: usize = 500;

/// Checks the EM-matrix property: positive diagonal and, for sizes up to
/// [`EM_DENSE_CAP`], elementwise non-negativity of the dense inverse. Larger
/// matrices get the strict sign-pattern check (non-positive off-diagonals)
/// instead of the inverse probe.
pub fn em_check(op: &BandedOperator) -> Result<EmReport> {
    let n = op.size();
    let dense = op.to_dense();
    for (i, row) in dense.iter().enumerate() {
        if row[i] <= 0.0 {
            return Ok(EmReport { is_em: false, offending_entry: Some((i, i, row[i])), inverse_min: None });
        }
    }
    if n <= EM_DENSE_CAP {
        let inv = smalldense::invert(&dense)
            .ok_or_else(|| PricerError::Singular("em_check dense inverse".into()))?;
        let mut min = f64::INFINITY;
        let mut arg = (0, 0);
        for (i, row) in inv.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if v < min {
                    min = v;
                    arg = (i, j);
                }
            }
        }
        let ok = min >= -1e-12;
        Ok(EmReport {
            is_em: ok,
            offending_entry: if ok { None } else { Some((arg.0, arg.1, min)) },
            inverse_min: Some(min),
        })
    } else {
        for (i, row) in dense.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if i != j && v > 0.0 {
                    return Ok(EmReport { is_em: false, offending_entry: Some((i, j, v)), inverse_min: None });
                }
            }
        }
        Ok(EmReport { is_em: true, offending_entry: None, inverse_min: None })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_is_em() {
        let rep = em_check(&BandedOperator::identity(10)).unwrap();
        assert!(rep.is_em);
        assert!(rep.inverse_min.unwrap() >= 0.0);
    }

    #[test]
    fn classic_tridiagonal_m_matrix() {
        let n = 20;
        let mut op = BandedOperator::zeros(n);
        for i in 0..n {
            op.set(i, 0, 2.0);
            if i > 0 {
                op.set(i, -1, -1.0);
            }
            if i + 1 < n {
                op.set(i, 1, -1.0);
            }
        }
        let rep = em_check(&op).unwrap();
        assert!(rep.is_em);
        assert!(rep.inverse_min.unwrap() >= 0.0);
    }

    #[test]
    fn negative_diagonal_rejected() {
        let mut op = BandedOperator::identity(5);
        op.set(3, 0, -1.0);
        let rep = em_check(&op).unwrap();
        assert!(!rep.is_em);
        assert_eq!(rep.offending_entry.unwrap().0, 3);
    }

    #[test]
    fn banded_solve_matches_dense() {
        let n = 12;
        let mut op = BandedOperator::zeros(n);
        for i in 0..n {
            op.set(i, 0, 4.0 + 0.1 * i as f64);
            if i > 0 {
                op.set(i, -1, -1.0);
            }
            if i > 1 {
                op.set(i, -2, 0.3);
            }
            if i + 1 < n {
                op.set(i, 1, -0.8);
            }
            if i + 2 < n {
                op.set(i, 2, 0.2);
            }
        }
        let x_true: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).sin() + 1.5).collect();
        let rhs = op.apply_vec(&x_true);
        let x = op.solve(&rhs).unwrap();
        for i in 0..n {
            assert!((x[i] - x_true[i]).abs() < 1e-11, "i={i}");
        }
    }

    #[test]
    fn coo_dump_lists_nonzeros() {
        let mut op = BandedOperator::identity(3);
        op.set(0, 1, 5.0);
        let dump = op.dump_coo();
        assert!(dump.contains("0,1,5"));
        assert_eq!(dump.lines().count(), 5);
    }
}
