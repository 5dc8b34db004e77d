//! Finite-difference stencils on non-uniform grids.
//!
//! One-sided second-order weights are derived from the Lagrange derivative on
//! three nodes, so row sums vanish exactly (constants are annihilated) and
//! the weights reduce to the familiar (-3, 4, -1)/(2h) pattern on uniform
//! grids. Rows too close to a boundary degrade to the first-order one-sided
//! stencil in the same direction, or to a zero row when no neighbour exists.

use crate::error::{PricerError, Result};
use crate::grid::Grid1D;

use super::BandedOperator;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dir {
    Forward,
    Backward,
}

/// Entry (offset, weight); up to three per stencil row.
pub type StencilRow = [(isize, f64); 3];

const EMPTY_ROW: StencilRow = [(0, 0.0), (0, 0.0), (0, 0.0)];

/// One-sided first-derivative row, first order.
pub fn d1_row_first_order(x: &[f64], i: usize, dir: Dir) -> StencilRow {
    let n = x.len();
    match dir {
        Dir::Backward if i >= 1 => {
            let h = x[i] - x[i - 1];
            [(0, 1.0 / h), (-1, -1.0 / h), (0, 0.0)]
        }
        Dir::Forward if i + 1 < n => {
            let h = x[i + 1] - x[i];
            [(0, -1.0 / h), (1, 1.0 / h), (0, 0.0)]
        }
        _ => EMPTY_ROW,
    }
}

/// One-sided first-derivative row, second order where the grid allows it,
/// degrading to first order one node from the boundary.
pub fn d1_row_second_order(x: &[f64], i: usize, dir: Dir) -> StencilRow {
    let n = x.len();
    match dir {
        Dir::Backward => {
            if i >= 2 {
                let d1 = x[i] - x[i - 1];
                let d2 = x[i] - x[i - 2];
                [
                    (0, 1.0 / d1 + 1.0 / d2),
                    (-1, -d2 / (d1 * (d2 - d1))),
                    (-2, d1 / (d2 * (d2 - d1))),
                ]
            } else {
                d1_row_first_order(x, i, Dir::Backward)
            }
        }
        Dir::Forward => {
            if i + 2 < n {
                let e1 = x[i + 1] - x[i];
                let e2 = x[i + 2] - x[i];
                [
                    (0, -(1.0 / e1 + 1.0 / e2)),
                    (1, e2 / (e1 * (e2 - e1))),
                    (2, -e1 / (e2 * (e2 - e1))),
                ]
            } else {
                d1_row_first_order(x, i, Dir::Forward)
            }
        }
    }
}

/// Central first-derivative row, one-sided second order at the two ends.
pub fn d1_row_central(x: &[f64], i: usize) -> StencilRow {
    let n = x.len();
    if i == 0 {
        d1_row_second_order(x, i, Dir::Forward)
    } else if i + 1 == n {
        d1_row_second_order(x, i, Dir::Backward)
    } else {
        let h = x[i] - x[i - 1];
        let hh = x[i + 1] - x[i];
        [
            (-1, -hh / (h * (h + hh))),
            (0, (hh - h) / (h * hh)),
            (1, h / (hh * (h + hh))),
        ]
    }
}

/// Central second-derivative row; zero at the two boundary rows.
pub fn d2_row_central(x: &[f64], i: usize) -> StencilRow {
    let n = x.len();
    if i == 0 || i + 1 == n {
        return EMPTY_ROW;
    }
    let h = x[i] - x[i - 1];
    let hh = x[i + 1] - x[i];
    [
        (-1, 2.0 / (h * (h + hh))),
        (0, -2.0 / (h * hh)),
        (1, 2.0 / (hh * (h + hh))),
    ]
}

/// Cached first-order one-sided rows for every index of a node vector.
pub fn stencil_rows_first(x: &[f64], dir: Dir) -> Vec<StencilRow> {
    (0..x.len()).map(|i| d1_row_first_order(x, i, dir)).collect()
}

/// Cached second-order one-sided rows for every index of a node vector.
pub fn stencil_rows_second(x: &[f64], dir: Dir) -> Vec<StencilRow> {
    (0..x.len()).map(|i| d1_row_second_order(x, i, dir)).collect()
}

fn rows_to_operator(g: &Grid1D, row_fn: impl Fn(&[f64], usize) -> StencilRow) -> BandedOperator {
    let x = g.nodes();
    let n = x.len();
    let mut op = BandedOperator::zeros(n);
    for i in 0..n {
        for (off, w) in row_fn(x, i) {
            if w != 0.0 {
                op.add(i, off, w);
            }
        }
    }
    op
}

/// First-order one-sided discretization of the first derivative (A^F / A^B).
/// Rows lacking the needed neighbour are zero.
pub fn stencil_first_order(dir: Dir, g: &Grid1D) -> Result<BandedOperator> {
    if g.len() < 2 {
        return Err(PricerError::InvalidGrid("stencil needs >= 2 nodes".into()));
    }
    Ok(rows_to_operator(g, |x, i| d1_row_first_order(x, i, dir)))
}

/// Second-order one-sided discretization of the first derivative
/// (A^F_2 / A^B_2), exact on quadratics.
pub fn stencil_first_order2(dir: Dir, g: &Grid1D) -> Result<BandedOperator> {
    if g.len() < 3 {
        return Err(PricerError::InvalidGrid("stencil needs >= 3 nodes".into()));
    }
    Ok(rows_to_operator(g, |x, i| d1_row_second_order(x, i, dir)))
}

/// Central discretization of the second derivative (A^C_2), annihilating
/// linear functions on interior rows.
pub fn stencil_second(g: &Grid1D) -> Result<BandedOperator> {
    if g.len() < 3 {
        return Err(PricerError::InvalidGrid("stencil needs >= 3 nodes".into()));
    }
    Ok(rows_to_operator(g, d2_row_central))
}

/// Central discretization of the first derivative (A^C), one-sided at the ends.
pub fn stencil_first_central(g: &Grid1D) -> Result<BandedOperator> {
    if g.len() < 3 {
        return Err(PricerError::InvalidGrid("stencil needs >= 3 nodes".into()));
    }
    Ok(rows_to_operator(g, d1_row_central))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_nonuniform_grid;

    fn uniform(n: usize, h: f64) -> Grid1D {
        Grid1D::from_nodes((0..n).map(|i| i as f64 * h).collect()).unwrap()
    }

    #[test]
    fn first_order_annihilates_constants_and_exact_on_linears() {
        let g = uniform(11, 1.0);
        let ones = vec![1.0; 11];
        let xs: Vec<f64> = g.nodes().to_vec();
        for dir in [Dir::Forward, Dir::Backward] {
            let a = stencil_first_order(dir, &g).unwrap();
            let c = a.apply_vec(&ones);
            let d = a.apply_vec(&xs);
            for i in 1..10 {
                assert!(c[i].abs() < 1e-14);
                assert!((d[i] - 1.0).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn first_order_forward_error_on_quadratic_is_exactly_h() {
        // (f(x+h)-f(x))/h - 2x = h for f = x^2
        for &h in &[0.5, 1.0, 2.0] {
            let g = uniform(9, h);
            let a = stencil_first_order(Dir::Forward, &g).unwrap();
            let f: Vec<f64> = g.nodes().iter().map(|&x| x * x).collect();
            let d = a.apply_vec(&f);
            for i in 0..8 {
                let err = d[i] - 2.0 * g.node(i);
                assert!((err - h).abs() < 1e-12, "h={h} i={i} err={err}");
            }
        }
    }

    #[test]
    fn second_order_one_sided_exact_on_quadratics() {
        let g = uniform(6, 1.0);
        let f: Vec<f64> = g.nodes().iter().map(|&x| x * x).collect();
        let ab = stencil_first_order2(Dir::Backward, &g).unwrap();
        let d = ab.apply_vec(&f);
        // row at x=2: (3*4 - 4*1 + 0)/2 = 4
        assert!((d[2] - 4.0).abs() < 1e-13);
        let af = stencil_first_order2(Dir::Forward, &g).unwrap();
        let d = af.apply_vec(&f);
        // row at x=0: (-3*0 + 4*1 - 4)/2 = 0
        assert!(d[0].abs() < 1e-13);
        for i in 2..6 {
            let dd = ab.apply_vec(&f);
            assert!((dd[i] - 2.0 * g.node(i)).abs() < 1e-12);
        }
    }

    #[test]
    fn one_sided_second_order_converges_at_order_two_on_nonuniform_grid() {
        // refinement study for sin(x) on a stretched grid
        let mut errs = Vec::new();
        for level in 0..4 {
            let n = 16 * (1 << level) + 1;
            let g = build_nonuniform_grid(0.0, 2.0, n, 0.7, 0.5).unwrap();
            let f: Vec<f64> = g.nodes().iter().map(|&x| x.sin()).collect();
            let a = stencil_first_order2(Dir::Backward, &g).unwrap();
            let d = a.apply_vec(&f);
            let mut emax = 0.0f64;
            for i in 2..n {
                emax = emax.max((d[i] - g.node(i).cos()).abs());
            }
            errs.push(emax);
        }
        for w in errs.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!(order >= 1.9, "observed order {order}, errs {errs:?}");
        }
    }

    #[test]
    fn second_derivative_basics() {
        let g = uniform(9, 0.5);
        let a = stencil_second(&g).unwrap();
        let lin: Vec<f64> = g.nodes().iter().map(|&x| 3.0 * x + 1.0).collect();
        let d = a.apply_vec(&lin);
        for i in 1..8 {
            assert!(d[i].abs() < 1e-13);
        }
        let quad: Vec<f64> = g.nodes().iter().map(|&x| x * x).collect();
        let d = a.apply_vec(&quad);
        for i in 1..8 {
            assert!((d[i] - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn second_derivative_order_two_on_exponential() {
        let mut errs = Vec::new();
        for level in 0..4 {
            let n = 20 * (1 << level) + 1;
            let g = build_nonuniform_grid(0.0, 1.0, n, 0.5, 5.0).unwrap();
            let f: Vec<f64> = g.nodes().iter().map(|&x| x.exp()).collect();
            let a = stencil_second(&g).unwrap();
            let d = a.apply_vec(&f);
            let mut emax = 0.0f64;
            for i in 1..n - 1 {
                emax = emax.max((d[i] - g.node(i).exp()).abs());
            }
            errs.push(emax);
        }
        for w in errs.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!(order >= 1.8, "observed order {order}, errs {errs:?}");
        }
    }

    #[test]
    fn composition_matches_central_second_on_uniform_grid() {
        // A^C_2 = A^F A^B on a uniform grid (interior rows)
        let g = uniform(10, 0.25);
        let af = stencil_first_order(Dir::Forward, &g).unwrap();
        let ab = stencil_first_order(Dir::Backward, &g).unwrap();
        let ac2 = stencil_second(&g).unwrap();
        let f: Vec<f64> = g.nodes().iter().map(|&x| (2.0 * x).cos()).collect();
        let comp = af.apply_vec(&ab.apply_vec(&f));
        let direct = ac2.apply_vec(&f);
        for i in 2..8 {
            assert!((comp[i] - direct[i]).abs() < 1e-11);
        }
    }

    #[test]
    fn grid_too_small_errors() {
        let g = uniform(2, 1.0);
        assert!(stencil_first_order2(Dir::Forward, &g).is_err());
        assert!(stencil_second(&g).is_err());
    }
}
