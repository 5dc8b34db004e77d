//! Hundsdorfer-Verwer stepping.
//!
//! One step advances the field from tau to tau + dt:
//!   Y0    predictor (explicit Euler, or the implicit two-stage / fully
//!         implicit variants),
//!   Y_j   = Y_{j-1} + theta dt [F_j Y_j - F_j V],   j = 1..3 (implicit),
//!   Yt0   = Y0 + dt/2 [F Y3 - F V]   (explicit form), or the algebraic
//!         recombination Yt0 = Y0 + 1/2 [Yt3s - Y0 - Y3 + V] where Yt3s is
//!         the predictor applied to Y3 (implicit variants),
//!   Yt_j  = Yt_{j-1} + theta dt [F_j Yt_j - F_j Y3],
//! and returns Yt3. Coefficients are frozen at the left endpoint of the step.

use ndarray::Array3;

use crate::error::Result;
use crate::grid::Grid3D;
use crate::model::ModelSpec;
use crate::operators::{DiffOperators, Discounting};

use super::mixed::{mixed_chain_solve, order2_for};
use super::{Scheme, SolverConfig, StepDiagnostics, ValueField};

/// Reusable buffers for one grid size.
pub struct Workspace {
    b1: Array3<f64>,
    b2: Array3<f64>,
    b3: Array3<f64>,
    b4: Array3<f64>,
    b5: Array3<f64>,
    b6: Array3<f64>,
}

impl Workspace {
    pub fn new(grid: &Grid3D) -> Self {
        let dims = grid.dims();
        Workspace {
            b1: Array3::zeros(dims),
            b2: Array3::zeros(dims),
            b3: Array3::zeros(dims),
            b4: Array3::zeros(dims),
            b5: Array3::zeros(dims),
            b6: Array3::zeros(dims),
        }
    }
}

fn discounting(cfg: &SolverConfig) -> Discounting {
    if cfg.discounting {
        Discounting::On
    } else {
        Discounting::Off
    }
}

/// The Y0 predictor: an O(dt)-accurate approximation of exp(dt F) applied to `v`.
fn predictor(
    v: &Array3<f64>,
    ops: &DiffOperators,
    grid: &Grid3D,
    cfg: &SolverConfig,
    dt: f64,
    scheme: Scheme,
    out: &mut Array3<f64>,
    tmp: &mut Array3<f64>,
    tmp2: &mut Array3<f64>,
    diag: &mut StepDiagnostics,
) -> Result<()> {
    match scheme {
        Scheme::HvExplicitMixed => {
            // Y0 = V + dt F V
            ops.apply_full(&v.view(), out, tmp);
            out.zip_mut_with(v, |y, &x| *y = x + dt * *y);
        }
        Scheme::ImplicitA | Scheme::ImplicitB => {
            // implicit mixed solve, then explicit (F1 + F2 + F3)
            tmp2.assign(v);
            let md = mixed_chain_solve(tmp2, ops, grid, cfg, dt, order2_for(scheme))?;
            diag.absorb_mixed(&md);
            ops.f1.apply(&tmp2.view(), out, false);
            ops.f2.apply(&tmp2.view(), out, true);
            ops.f3.apply(&tmp2.view(), out, true);
            out.zip_mut_with(tmp2, |y, &x| *y = x + dt * *y);
        }
        Scheme::FullyImplicit => {
            // all four factors implicit
            tmp2.assign(v);
            let md = mixed_chain_solve(tmp2, ops, grid, cfg, dt, order2_for(scheme))?;
            diag.absorb_mixed(&md);
            ops.f1.solve_implicit(dt, &tmp2.view(), tmp)?;
            ops.f2.solve_implicit(dt, &tmp.view(), tmp2)?;
            ops.f3.solve_implicit(dt, &tmp2.view(), out)?;
        }
    }
    Ok(())
}

fn hv_skeleton(
    v: &ValueField,
    m: &ModelSpec,
    g: &Grid3D,
    cfg: &SolverConfig,
    t_left: f64,
    dt: f64,
    scheme: Scheme,
    ws: &mut Workspace,
    diag: &mut StepDiagnostics,
) -> Result<ValueField> {
    let ops = DiffOperators::assemble(m, g, t_left, discounting(cfg))?;
    let theta = cfg.theta;
    let vv = &v.data;

    // b1 = Y0
    {
        let Workspace { b1, b2, b3, b4, .. } = ws;
        predictor(vv, &ops, g, cfg, dt, scheme, b1, b2, b3, diag)?;
        let _ = b4;
    }

    // first sweep: b2 = Y_j (in place per stage), b3 = rhs scratch, b4 = F_j V
    ws.b2.assign(&ws.b1);
    for j in 1..=3 {
        let op = ops.axis_op(j);
        op.apply(&vv.view(), &mut ws.b4, false);
        ws.b3.assign(&ws.b2);
        ws.b3.zip_mut_with(&ws.b4, |r, &f| *r -= theta * dt * f);
        op.solve_implicit(theta * dt, &ws.b3.view(), &mut ws.b2)?;
    }
    // b2 now holds Y3; keep it in b5 for the second sweep
    ws.b5.assign(&ws.b2);

    // Yt0 into b1
    match scheme {
        Scheme::HvExplicitMixed => {
            // Yt0 = Y0 + dt/2 [F Y3 - F V]
            ops.apply_full(&ws.b5.view(), &mut ws.b3, &mut ws.b4);
            ws.b1.zip_mut_with(&ws.b3, |y, &f| *y += 0.5 * dt * f);
            ops.apply_full(&vv.view(), &mut ws.b3, &mut ws.b4);
            ws.b1.zip_mut_with(&ws.b3, |y, &f| *y -= 0.5 * dt * f);
        }
        _ => {
            // Yt0 = Y0 + 1/2 [Yt3s - Y0 - Y3 + V], Yt3s = predictor(Y3)
            {
                let Workspace { b2, b3, b4, b5, b6, .. } = ws;
                predictor(b5, &ops, g, cfg, dt, scheme, b6, b3, b4, diag)?;
                let _ = b2;
            }
            let b1 = &mut ws.b1;
            let b5 = &ws.b5;
            let b6 = &ws.b6;
            ndarray::Zip::from(b1).and(b6).and(b5).and(vv).for_each(|y0, &yt3s, &y3, &v0| {
                *y0 += 0.5 * (yt3s - *y0 - y3 + v0);
            });
        }
    }

    // second sweep: Yt_j from b1, using F_j Y3 (b5) on the rhs
    ws.b2.assign(&ws.b1);
    for j in 1..=3 {
        let op = ops.axis_op(j);
        op.apply(&ws.b5.view(), &mut ws.b4, false);
        ws.b3.assign(&ws.b2);
        ws.b3.zip_mut_with(&ws.b4, |r, &f| *r -= theta * dt * f);
        op.solve_implicit(theta * dt, &ws.b3.view(), &mut ws.b2)?;
    }

    diag.field_min = ws.b2.iter().cloned().fold(f64::INFINITY, f64::min);
    diag.field_max = ws.b2.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(ValueField::new(ws.b2.clone(), v.time_label + dt))
}

/// Classic HV step with the mixed derivative treated explicitly.
pub fn hv_step(
    v: &ValueField,
    m: &ModelSpec,
    g: &Grid3D,
    cfg: &SolverConfig,
    t_left: f64,
    dt: f64,
    ws: &mut Workspace,
    diag: &mut StepDiagnostics,
) -> Result<ValueField> {
    hv_skeleton(v, m, g, cfg, t_left, dt, Scheme::HvExplicitMixed, ws, diag)
}

/// HV step with the Y0 stage replaced by the implicit-mixed two-stage
/// predictor and the Yt0 stage by its algebraic recombination.
pub fn hv_with_implicit_mixed(
    v: &ValueField,
    m: &ModelSpec,
    g: &Grid3D,
    cfg: &SolverConfig,
    t_left: f64,
    dt: f64,
    ws: &mut Workspace,
    diag: &mut StepDiagnostics,
) -> Result<ValueField> {
    let scheme = match cfg.scheme {
        Scheme::ImplicitA => Scheme::ImplicitA,
        _ => Scheme::ImplicitB,
    };
    hv_skeleton(v, m, g, cfg, t_left, dt, scheme, ws, diag)
}

/// One first-order fully implicit step: the mixed factor solved pairwise,
/// then three implicit one-dimensional solves.
pub fn fully_implicit_step(
    v: &ValueField,
    m: &ModelSpec,
    g: &Grid3D,
    cfg: &SolverConfig,
    t_left: f64,
    dt: f64,
    ws: &mut Workspace,
    diag: &mut StepDiagnostics,
) -> Result<ValueField> {
    let ops = DiffOperators::assemble(m, g, t_left, discounting(cfg))?;
    let Workspace { b1, b2, b3, .. } = ws;
    predictor(&v.data, &ops, g, cfg, dt, Scheme::FullyImplicit, b1, b2, b3, diag)?;
    diag.field_min = b1.iter().cloned().fold(f64::INFINITY, f64::min);
    diag.field_max = b1.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(ValueField::new(b1.clone(), v.time_label + dt))
}

/// One diffusion step under the configured scheme. `damped` replaces the step
/// by the first-order fully implicit predictor (Rannacher-style start-up).
#[allow(clippy::too_many_arguments)]
pub fn diffusion_step(
    v: &ValueField,
    m: &ModelSpec,
    g: &Grid3D,
    cfg: &SolverConfig,
    t_left: f64,
    dt: f64,
    damped: bool,
    ws: &mut Workspace,
    diag: &mut StepDiagnostics,
) -> Result<ValueField> {
    if damped {
        return fully_implicit_step(v, m, g, cfg, t_left, dt, ws, diag);
    }
    hv_skeleton(v, m, g, cfg, t_left, dt, cfg.scheme, ws, diag)
}
