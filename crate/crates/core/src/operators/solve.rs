//! Banded linear solves used by every implicit stage: pentadiagonal LU and
//! the two triangular 3-band substitutions.

use crate::error::{PricerError, Result};

/// Workspace for a pentadiagonal solve, reusable across lines.
#[derive(Debug, Clone)]
pub struct PentaWork {
    pub sub2: Vec<f64>,
    pub sub1: Vec<f64>,
    pub diag: Vec<f64>,
    pub sup1: Vec<f64>,
    pub sup2: Vec<f64>,
}

impl PentaWork {
    pub fn new(n: usize) -> Self {
        PentaWork {
            sub2: vec![0.0; n],
            sub1: vec![0.0; n],
            diag: vec![0.0; n],
            sup1: vec![0.0; n],
            sup2: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn resize(&mut self, n: usize) {
        self.sub2.resize(n, 0.0);
        self.sub1.resize(n, 0.0);
        self.diag.resize(n, 0.0);
        self.sup1.resize(n, 0.0);
        self.sup2.resize(n, 0.0);
    }

    pub fn clear(&mut self) {
        for v in [&mut self.sub2, &mut self.sub1, &mut self.diag, &mut self.sup1, &mut self.sup2] {
            v.iter_mut().for_each(|x| *x = 0.0);
        }
    }

    /// LU without pivoting; destroys the stored bands and overwrites `rhs`
    /// with the solution. The matrices assembled in this crate are diagonally
    /// dominant, so the missing pivoting is not a practical restriction.
    pub fn solve(&mut self, rhs: &mut [f64]) -> Result<()> {
        let n = rhs.len();
        debug_assert_eq!(n, self.diag.len());
        if n == 0 {
            return Ok(());
        }
        let scale = self.diag.iter().fold(0.0f64, |m, &d| m.max(d.abs())).max(1.0);
        let tiny = 1e-14 * scale;
        for i in 0..n {
            if i >= 2 {
                let piv = self.diag[i - 2];
                if piv.abs() <= tiny {
                    return Err(PricerError::Singular(format!("penta pivot at row {}", i - 2)));
                }
                let m2 = self.sub2[i] / piv;
                self.sub1[i] -= m2 * self.sup1[i - 2];
                self.diag[i] -= m2 * self.sup2[i - 2];
                rhs[i] -= m2 * rhs[i - 2];
            }
            if i >= 1 {
                let piv = self.diag[i - 1];
                if piv.abs() <= tiny {
                    return Err(PricerError::Singular(format!("penta pivot at row {}", i - 1)));
                }
                let m1 = self.sub1[i] / piv;
                self.diag[i] -= m1 * self.sup1[i - 1];
                if i + 1 < n {
                    self.sup1[i] -= m1 * self.sup2[i - 1];
                }
                rhs[i] -= m1 * rhs[i - 1];
            }
        }
        if self.diag[n - 1].abs() <= tiny {
            return Err(PricerError::Singular("penta pivot at last row".into()));
        }
        rhs[n - 1] /= self.diag[n - 1];
        if n >= 2 {
            rhs[n - 2] = (rhs[n - 2] - self.sup1[n - 2] * rhs[n - 1]) / self.diag[n - 2];
        }
        for i in (0..n.saturating_sub(2)).rev() {
            rhs[i] = (rhs[i] - self.sup1[i] * rhs[i + 1] - self.sup2[i] * rhs[i + 2]) / self.diag[i];
        }
        Ok(())
    }
}

/// Solve L x = rhs in place where L has bands at offsets 0, -1, -2.
pub fn solve_lower3(diag: &[f64], sub1: &[f64], sub2: &[f64], rhs: &mut [f64]) -> Result<()> {
    let n = rhs.len();
    for i in 0..n {
        let mut acc = rhs[i];
        if i >= 1 {
            acc -= sub1[i] * rhs[i - 1];
        }
        if i >= 2 {
            acc -= sub2[i] * rhs[i - 2];
        }
        let d = diag[i];
        if d.abs() < 1e-300 {
            return Err(PricerError::Singular(format!("lower-triangular pivot at row {i}")));
        }
        rhs[i] = acc / d;
    }
    Ok(())
}

/// Solve U x = rhs in place where U has bands at offsets 0, +1, +2.
pub fn solve_upper3(diag: &[f64], sup1: &[f64], sup2: &[f64], rhs: &mut [f64]) -> Result<()> {
    let n = rhs.len();
    for i in (0..n).rev() {
        let mut acc = rhs[i];
        if i + 1 < n {
            acc -= sup1[i] * rhs[i + 1];
        }
        if i + 2 < n {
            acc -= sup2[i] * rhs[i + 2];
        }
        let d = diag[i];
        if d.abs() < 1e-300 {
            return Err(PricerError::Singular(format!("upper-triangular pivot at row {i}")));
        }
        rhs[i] = acc / d;
    }
    Ok(())
}
