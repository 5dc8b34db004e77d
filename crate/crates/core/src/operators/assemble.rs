//! Assembly of the convection-diffusion operators.
//!
//! F1 = (r - q) S d/dS + 1/2 sigma_s^2 S^{2c} v d2/dS2       (- r/2 with discounting)
//! F2 = kappa_v (theta_v - v) d/dv + 1/2 xi_v^2 v^{2a} d2/dv2
//! F3 = kappa_r (theta_r - r) d/dr + 1/2 xi_r^2 r^{2b} d2/dr2 (- r/2 with discounting)
//! F0 = rho_sv W(S) W(v) dSdv + rho_sr W(S) W(r) sqrt(v) dSdr + rho_vr W(v) W(r) / sqrt(v) dvdr,
//!      with W(S) = sigma_s S^c, W(v) = xi_v v^{a+1/2}, W(r) = xi_r r^b.
//!
//! Advection uses upwinded one-sided second-order stencils (direction chosen by
//! the sign of the local drift), diffusion uses the central stencil. Boundary
//! rows: one-sided drift, diffusion dropped; the top v row enforces the
//! homogeneous first-derivative condition (zero operator row); cross terms use
//! central first derivatives.

use ndarray::{Array3, ArrayView3, Axis, Zip};

use crate::error::{PricerError, Result};
use crate::grid::Grid3D;
use crate::model::ModelSpec;

use super::solve::PentaWork;
use super::stencil::{d1_row_central, d1_row_second_order, d2_row_central, Dir, StencilRow};

/// Whether the -rV discount enters the operator (split -r/2 into F1 and F3).
/// `Off` reproduces the bare convection-diffusion operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Discounting {
    On,
    Off,
}

/// A coefficient field c(i; p, q) = sum_m axis_m[i] * perp1_m[p] * perp2_m[q],
/// with `None` profiles standing for all-ones.
#[derive(Debug, Clone, Default)]
struct SepCoef {
    terms: Vec<(Vec<f64>, Option<Vec<f64>>, Option<Vec<f64>>)>,
}

impl SepCoef {
    fn push(&mut self, axis: Vec<f64>, perp1: Option<Vec<f64>>, perp2: Option<Vec<f64>>) {
        self.terms.push((axis, perp1, perp2));
    }

    /// Per-line scalars s_m = perp1_m[p] * perp2_m[q].
    fn line_scalars(&self, p: usize, q: usize, out: &mut Vec<f64>) {
        out.clear();
        for (_, b, c) in &self.terms {
            let sb = b.as_ref().map_or(1.0, |v| v[p]);
            let sc = c.as_ref().map_or(1.0, |v| v[q]);
            out.push(sb * sc);
        }
    }

    fn eval_with(&self, i: usize, scalars: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (m, (a, _, _)) in self.terms.iter().enumerate() {
            acc += scalars[m] * a[i];
        }
        acc
    }
}

/// One of the three one-dimensional operators F1, F2, F3 over the tensor grid.
/// Line matrices are assembled on demand from separable coefficient profiles.
pub struct AxisOperator {
    pub axis: usize,
    nodes: Vec<f64>,
    rows_fwd: Vec<StencilRow>,
    rows_bwd: Vec<StencilRow>,
    rows_d2: Vec<StencilRow>,
    drift: SepCoef,
    diff: SepCoef,
    react: SepCoef,
    /// Homogeneous first-derivative condition at the top row (used on the v axis).
    zero_top_row: bool,
}

impl AxisOperator {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Drift upwind direction at a row, None when the row carries no stencil.
    pub fn drift_direction(&self, i: usize, p: usize, q: usize) -> Option<Dir> {
        let n = self.nodes.len();
        if self.zero_top_row && i + 1 == n {
            return None;
        }
        let mut scal = Vec::new();
        self.drift.line_scalars(p, q, &mut scal);
        let c1 = self.drift.eval_with(i, &scal);
        if c1 == 0.0 {
            return None;
        }
        Some(if i == 0 {
            Dir::Forward
        } else if i + 1 == n {
            Dir::Backward
        } else if c1 >= 0.0 {
            Dir::Forward
        } else {
            Dir::Backward
        })
    }

    /// Write the operator row coefficients for one perpendicular line into
    /// `bands` (as the bare operator, no identity shift).
    pub fn fill_line(&self, p: usize, q: usize, bands: &mut PentaWork, scal: &mut LineScalars) {
        let n = self.nodes.len();
        bands.resize(n);
        bands.clear();
        self.drift.line_scalars(p, q, &mut scal.drift);
        self.diff.line_scalars(p, q, &mut scal.diff);
        self.react.line_scalars(p, q, &mut scal.react);
        for i in 0..n {
            if self.zero_top_row && i + 1 == n {
                continue;
            }
            let c1 = self.drift.eval_with(i, &scal.drift);
            let c2 = self.diff.eval_with(i, &scal.diff);
            let c0 = self.react.eval_with(i, &scal.react);
            let row1 = if i == 0 {
                &self.rows_fwd[i]
            } else if i + 1 == n || c1 < 0.0 {
                &self.rows_bwd[i]
            } else {
                &self.rows_fwd[i]
            };
            if c1 != 0.0 {
                for &(off, w) in row1 {
                    if w != 0.0 {
                        band_at(bands, off)[i] += c1 * w;
                    }
                }
            }
            if c2 != 0.0 {
                for &(off, w) in &self.rows_d2[i] {
                    if w != 0.0 {
                        band_at(bands, off)[i] += c2 * w;
                    }
                }
            }
            bands.diag[i] += c0;
        }
    }

    /// Fill bands with I - coef * F_line, ready for an implicit solve.
    pub fn fill_line_implicit(&self, p: usize, q: usize, coef: f64, bands: &mut PentaWork, scal: &mut LineScalars) {
        self.fill_line(p, q, bands, scal);
        let n = self.nodes.len();
        for v in [&mut bands.sub2, &mut bands.sub1, &mut bands.diag, &mut bands.sup1, &mut bands.sup2] {
            v.iter_mut().for_each(|x| *x = -coef * *x);
        }
        for i in 0..n {
            bands.diag[i] += 1.0;
        }
    }

    /// y (+)= F_axis x over the whole 3D field.
    pub fn apply(&self, x: &ArrayView3<f64>, y: &mut Array3<f64>, add: bool) {
        let axis = Axis(self.axis);
        let n = self.nodes.len();
        Zip::indexed(y.lanes_mut(axis)).and(x.lanes(axis)).par_for_each(|idx, mut out, inp| {
            let (p, q) = (idx.0, idx.1);
            with_line_scratch(|bands, scal, _| {
                self.fill_line(p, q, bands, scal);
                for i in 0..n {
                    let mut acc = 0.0;
                    if i >= 2 {
                        acc += bands.sub2[i] * inp[i - 2];
                    }
                    if i >= 1 {
                        acc += bands.sub1[i] * inp[i - 1];
                    }
                    acc += bands.diag[i] * inp[i];
                    if i + 1 < n {
                        acc += bands.sup1[i] * inp[i + 1];
                    }
                    if i + 2 < n {
                        acc += bands.sup2[i] * inp[i + 2];
                    }
                    if add {
                        out[i] += acc;
                    } else {
                        out[i] = acc;
                    }
                }
            });
        });
    }

    /// Solve (I - coef * F_axis) out = rhs line by line.
    pub fn solve_implicit(&self, coef: f64, rhs: &ArrayView3<f64>, out: &mut Array3<f64>) -> Result<()> {
        let axis = Axis(self.axis);
        let n = self.nodes.len();
        let failed = std::sync::atomic::AtomicBool::new(false);
        Zip::indexed(out.lanes_mut(axis)).and(rhs.lanes(axis)).par_for_each(|idx, mut out, inp| {
            let (p, q) = (idx.0, idx.1);
            with_line_scratch(|bands, scal, line| {
                self.fill_line_implicit(p, q, coef, bands, scal);
                line.resize(n, 0.0);
                for i in 0..n {
                    line[i] = inp[i];
                }
                match bands.solve(line) {
                    Ok(()) => {
                        for i in 0..n {
                            out[i] = line[i];
                        }
                    }
                    Err(_) => failed.store(true, std::sync::atomic::Ordering::Relaxed),
                }
            });
        });
        if failed.load(std::sync::atomic::Ordering::Relaxed) {
            return Err(PricerError::SolveFailure(format!("implicit solve on axis {}", self.axis)));
        }
        Ok(())
    }
}

thread_local! {
    static LINE_SCRATCH: std::cell::RefCell<(PentaWork, LineScalars, Vec<f64>)> =
        std::cell::RefCell::new((PentaWork::new(0), LineScalars::default(), Vec::new()));
}

fn with_line_scratch<R>(f: impl FnOnce(&mut PentaWork, &mut LineScalars, &mut Vec<f64>) -> R) -> R {
    LINE_SCRATCH.with(|cell| {
        let mut guard = cell.borrow_mut();
        let (bands, scal, line) = &mut *guard;
        f(bands, scal, line)
    })
}

fn band_at(bands: &mut PentaWork, off: isize) -> &mut Vec<f64> {
    match off {
        -2 => &mut bands.sub2,
        -1 => &mut bands.sub1,
        0 => &mut bands.diag,
        1 => &mut bands.sup1,
        2 => &mut bands.sup2,
        _ => unreachable!(),
    }
}

#[derive(Debug, Default)]
pub struct LineScalars {
    drift: Vec<f64>,
    diff: Vec<f64>,
    react: Vec<f64>,
}

/// Identifies one cross-derivative pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MixedPair {
    Sv,
    Sr,
    Vr,
}

impl MixedPair {
    pub const ALL: [MixedPair; 3] = [MixedPair::Sv, MixedPair::Sr, MixedPair::Vr];

    pub fn axis1(self) -> usize {
        match self {
            MixedPair::Sv | MixedPair::Sr => 0,
            MixedPair::Vr => 1,
        }
    }

    pub fn axis2(self) -> usize {
        match self {
            MixedPair::Sv => 1,
            MixedPair::Sr | MixedPair::Vr => 2,
        }
    }

    /// The axis perpendicular to the pair plane.
    pub fn third(self) -> usize {
        3 - self.axis1() - self.axis2()
    }
}

/// One term of F0: rho * w1(axis1) * w2(axis2) * extra(third) * d_axis1 d_axis2.
pub struct MixedPairTerm {
    pub pair: MixedPair,
    pub rho: f64,
    pub w_axis1: Vec<f64>,
    pub w_axis2: Vec<f64>,
    /// Profile along the third axis; None means 1.
    pub extra: Option<Vec<f64>>,
}

impl MixedPairTerm {
    /// Largest |coefficient| over the grid; zero means the term is inactive.
    pub fn max_abs_coef(&self) -> f64 {
        let m1 = self.w_axis1.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
        let m2 = self.w_axis2.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
        let me = self.extra.as_ref().map_or(1.0, |e| e.iter().fold(0.0f64, |m, &x| m.max(x.abs())));
        self.rho.abs() * m1 * m2 * me
    }
}

/// The mixed-derivative operator F0 as the sum of up to three pair terms.
pub struct MixedOperator {
    pub terms: Vec<MixedPairTerm>,
    rows_central: [Vec<StencilRow>; 3],
    dims: (usize, usize, usize),
}

impl MixedOperator {
    /// y (+)= F0 x; `tmp` is a scratch field of the same shape.
    pub fn apply(&self, x: &ArrayView3<f64>, y: &mut Array3<f64>, tmp: &mut Array3<f64>, add: bool) {
        if !add {
            y.fill(0.0);
        }
        for term in &self.terms {
            if term.max_abs_coef() == 0.0 {
                continue;
            }
            let a1 = term.pair.axis1();
            let a2 = term.pair.axis2();
            // tmp = d_axis2 x
            apply_d1(x, tmp, a2, &self.rows_central[a2]);
            // y += coef * d_axis1 tmp
            let rows1 = &self.rows_central[a1];
            let n1 = self.dims_axis(a1);
            let rho = term.rho;
            Zip::indexed(y.lanes_mut(Axis(a1))).and(tmp.lanes(Axis(a1))).par_for_each(|idx, mut out, inp| {
                let (p, q) = (idx.0, idx.1);
                // map (axis, p, q) back to grid indices to read the weights
                for i in 0..n1 {
                    let (ii, jj, kk) = unperm(a1, i, p, q);
                    let coef = rho
                        * term.w_axis1[[ii, jj, kk][a1]]
                        * term.w_axis2[[ii, jj, kk][a2]]
                        * term.extra.as_ref().map_or(1.0, |e| e[[ii, jj, kk][term.pair.third()]]);
                    if coef == 0.0 {
                        continue;
                    }
                    let mut acc = 0.0;
                    for &(off, w) in &rows1[i] {
                        if w != 0.0 {
                            let j = (i as isize + off) as usize;
                            acc += w * inp[j];
                        }
                    }
                    out[i] += coef * acc;
                }
            });
        }
    }

    fn dims_axis(&self, axis: usize) -> usize {
        match axis {
            0 => self.dims.0,
            1 => self.dims.1,
            2 => self.dims.2,
            _ => unreachable!(),
        }
    }
}

/// Reconstruct (i, j, k) from a lane coordinate: `i` runs along `axis`,
/// (p, q) are the remaining indices in axis order.
#[inline]
pub fn unperm(axis: usize, i: usize, p: usize, q: usize) -> (usize, usize, usize) {
    match axis {
        0 => (i, p, q),
        1 => (p, i, q),
        2 => (p, q, i),
        _ => unreachable!(),
    }
}

fn apply_d1(x: &ArrayView3<f64>, out: &mut Array3<f64>, axis: usize, rows: &[StencilRow]) {
    let n = rows.len();
    Zip::from(out.lanes_mut(Axis(axis))).and(x.lanes(Axis(axis))).par_for_each(|mut o, inp| {
        for i in 0..n {
            let mut acc = 0.0;
            for &(off, w) in &rows[i] {
                if w != 0.0 {
                    acc += w * inp[(i as isize + off) as usize];
                }
            }
            o[i] = acc;
        }
    });
}

/// All four operators assembled at one time point.
pub struct DiffOperators {
    pub f0: MixedOperator,
    pub f1: AxisOperator,
    pub f2: AxisOperator,
    pub f3: AxisOperator,
}

impl DiffOperators {
    pub fn assemble(model: &ModelSpec, grid: &Grid3D, t: f64, disc: Discounting) -> Result<Self> {
        model.validate()?;
        let d = &model.diffusion;
        let s: Vec<f64> = grid.s_grid.nodes().to_vec();
        let v: Vec<f64> = grid.v_grid.nodes().to_vec();
        let r: Vec<f64> = grid.r_grid.nodes().to_vec();
        let (ns, nv, nr) = (s.len(), v.len(), r.len());

        let kv = d.kappa_v.at(t);
        let tv = d.theta_v.at(t);
        let kr = d.kappa_r.at(t);
        let tr = d.theta_r.at(t);

        let sigma: Vec<f64> = s.iter().map(|&si| d.local_vol.at(si, t)).collect();
        let s_pow_c: Vec<f64> = s.iter().map(|&si| si.powf(d.c_pow)).collect();
        let w_s: Vec<f64> = (0..ns).map(|i| sigma[i] * s_pow_c[i]).collect();
        let w_v: Vec<f64> = v.iter().map(|&vj| d.xi_v * vj.powf(d.a_pow + 0.5)).collect();
        let w_r: Vec<f64> = r.iter().map(|&rk| d.xi_r * rk.powf(d.b_pow)).collect();
        let sqrt_v: Vec<f64> = v.iter().map(|&vj| vj.sqrt()).collect();
        let xi_v_pow_a: Vec<f64> = v.iter().map(|&vj| d.xi_v * vj.powf(d.a_pow)).collect();

        let half_r: Vec<f64> = r.iter().map(|&rk| -0.5 * rk).collect();

        // F1 along S, perpendicular (v, r)
        let mut f1_drift = SepCoef::default();
        f1_drift.push(s.clone(), None, Some(r.clone()));
        f1_drift.push(s.iter().map(|&si| -d.q * si).collect(), None, None);
        let mut f1_diff = SepCoef::default();
        f1_diff.push(
            (0..ns).map(|i| 0.5 * sigma[i] * sigma[i] * s[i].powf(2.0 * d.c_pow)).collect(),
            Some(v.clone()),
            None,
        );
        let mut f1_react = SepCoef::default();
        if disc == Discounting::On {
            f1_react.push(vec![1.0; ns], None, Some(half_r.clone()));
        }
        let f1 = AxisOperator {
            axis: 0,
            rows_fwd: (0..ns).map(|i| d1_row_second_order(&s, i, Dir::Forward)).collect(),
            rows_bwd: (0..ns).map(|i| d1_row_second_order(&s, i, Dir::Backward)).collect(),
            rows_d2: (0..ns).map(|i| d2_row_central(&s, i)).collect(),
            nodes: s.clone(),
            drift: f1_drift,
            diff: f1_diff,
            react: f1_react,
            zero_top_row: false,
        };

        // F2 along v, coefficients independent of the perpendicular axes
        let mut f2_drift = SepCoef::default();
        f2_drift.push(v.iter().map(|&vj| kv * (tv - vj)).collect(), None, None);
        let mut f2_diff = SepCoef::default();
        f2_diff.push(v.iter().map(|&vj| 0.5 * d.xi_v * d.xi_v * vj.powf(2.0 * d.a_pow)).collect(), None, None);
        let f2 = AxisOperator {
            axis: 1,
            rows_fwd: (0..nv).map(|j| d1_row_second_order(&v, j, Dir::Forward)).collect(),
            rows_bwd: (0..nv).map(|j| d1_row_second_order(&v, j, Dir::Backward)).collect(),
            rows_d2: (0..nv).map(|j| d2_row_central(&v, j)).collect(),
            nodes: v.clone(),
            drift: f2_drift,
            diff: f2_diff,
            react: SepCoef::default(),
            zero_top_row: true,
        };

        // F3 along r
        let mut f3_drift = SepCoef::default();
        f3_drift.push(r.iter().map(|&rk| kr * (tr - rk)).collect(), None, None);
        let mut f3_diff = SepCoef::default();
        f3_diff.push(r.iter().map(|&rk| 0.5 * d.xi_r * d.xi_r * rk.powf(2.0 * d.b_pow)).collect(), None, None);
        let mut f3_react = SepCoef::default();
        if disc == Discounting::On {
            f3_react.push(half_r, None, None);
        }
        let f3 = AxisOperator {
            axis: 2,
            rows_fwd: (0..nr).map(|k| d1_row_second_order(&r, k, Dir::Forward)).collect(),
            rows_bwd: (0..nr).map(|k| d1_row_second_order(&r, k, Dir::Backward)).collect(),
            rows_d2: (0..nr).map(|k| d2_row_central(&r, k)).collect(),
            nodes: r.clone(),
            drift: f3_drift,
            diff: f3_diff,
            react: f3_react,
            zero_top_row: false,
        };

        let terms = vec![
            MixedPairTerm { pair: MixedPair::Sv, rho: d.rho_sv, w_axis1: w_s.clone(), w_axis2: w_v.clone(), extra: None },
            MixedPairTerm { pair: MixedPair::Sr, rho: d.rho_sr, w_axis1: w_s, w_axis2: w_r.clone(), extra: Some(sqrt_v) },
            MixedPairTerm { pair: MixedPair::Vr, rho: d.rho_vr, w_axis1: xi_v_pow_a, w_axis2: w_r, extra: None },
        ];
        let f0 = MixedOperator {
            terms,
            rows_central: [
                (0..ns).map(|i| d1_row_central(&s, i)).collect(),
                (0..nv).map(|j| d1_row_central(&v, j)).collect(),
                (0..nr).map(|k| d1_row_central(&r, k)).collect(),
            ],
            dims: (ns, nv, nr),
        };

        Ok(DiffOperators { f0, f1, f2, f3 })
    }

    pub fn axis_op(&self, j: usize) -> &AxisOperator {
        match j {
            1 => &self.f1,
            2 => &self.f2,
            3 => &self.f3,
            _ => panic!("axis operator index must be 1..=3"),
        }
    }

    /// y = (F0 + F1 + F2 + F3) x.
    pub fn apply_full(&self, x: &ArrayView3<f64>, y: &mut Array3<f64>, tmp: &mut Array3<f64>) {
        self.f1.apply(x, y, false);
        self.f2.apply(x, y, true);
        self.f3.apply(x, y, true);
        self.f0.apply(x, y, tmp, true);
    }
}

/// Spec-level view of one assembled operator.
pub enum FOperator<'a> {
    Mixed(&'a MixedOperator),
    Axis(&'a AxisOperator),
}

impl FOperator<'_> {
    pub fn apply(&self, x: &ArrayView3<f64>, y: &mut Array3<f64>, tmp: &mut Array3<f64>) {
        match self {
            FOperator::Mixed(op) => op.apply(x, y, tmp, false),
            FOperator::Axis(op) => op.apply(x, y, false),
        }
    }
}

/// Assemble F_k (k = 0..3) for a model/grid at time t.
pub fn assemble_f(
    ops: &DiffOperators,
    k: usize,
) -> FOperator<'_> {
    match k {
        0 => FOperator::Mixed(&ops.f0),
        1 => FOperator::Axis(&ops.f1),
        2 => FOperator::Axis(&ops.f2),
        3 => FOperator::Axis(&ops.f3),
        _ => panic!("operator index must be 0..=3"),
    }
}
