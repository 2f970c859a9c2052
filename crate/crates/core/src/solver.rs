//! Crank-Nicolson sweeps for the state, adjoint and tangent systems.
//!
//! The semidiscrete state system is `M dq/dt + A q + G(u(t)) q = 0` with
//! the control coupling
//!
//! ```text
//! G(u) = sum_k { u_{4,k} S_{4,k} + u_{1,k} S_{1,k}
//!              - u_{3,k} S_{3,k} - u_{2,k} S_{2,k} },   S = B + C + L,
//! ```
//!
//! a bilinear control system: `G` is linear in the coefficients. Crank-
//! Nicolson with step `dt` yields one banded solve per step with
//! `T+(u) = M/dt + (A + G(u))/2` and `T-(u) = M/dt - (A + G(u))/2`.
//!
//! Two adjoint discretizations are provided. The discrete adjoint
//! transposes the fully discrete constraint and makes the reduced gradient
//! exact for the discrete cost; the continuous adjoint discretizes the
//! adjoint PDE with the same scheme, using the adjoint coupling
//!
//! ```text
//! G_adj(u) = -sum_k { u_{4,k} B_{4,k} + u_{1,k} B_{1,k}
//!                   - u_{3,k} B_{3,k} - u_{2,k} B_{2,k} },
//! ```
//!
//! which equals `G(u)^T` up to the quadrature residual of the
//! integration-by-parts identity. The two adjoints differ by O(dt) in the
//! instants at which they effectively evaluate.
//!
//! Every linear system is solved by banded LU with partial pivoting and
//! verified to a relative residual of `SOLVE_TOL`; gradient accuracy
//! inherits this tolerance.

use crate::actuation::ControlTrajectory;
use crate::assembly::{DensityField, OperatorSet};
use crate::band::BandLu;
use crate::error::{Error, Result};
use crate::mesh::Side;
use crate::sparse::CsrMatrix;

/// Relative residual bound enforced after every linear solve.
pub const SOLVE_TOL: f64 = 1e-10;

/// Nodal state vectors q_0..q_N.
#[derive(Clone, Debug)]
pub struct StateTrajectory {
    pub steps: Vec<Vec<f64>>,
    pub dt: f64,
}

impl StateTrajectory {
    pub fn n_steps(&self) -> usize {
        self.steps.len() - 1
    }

    /// q_i for i in 0..=N.
    pub fn at(&self, i: usize) -> &[f64] {
        &self.steps[i]
    }

    pub fn terminal(&self) -> &[f64] {
        self.steps.last().unwrap()
    }

    /// Total number of stored scalars, n_nodes * (N + 1).
    pub fn flat_len(&self) -> usize {
        self.steps.iter().map(Vec::len).sum()
    }
}

/// Nodal adjoint vectors p_1..p_N. The continuous-adjoint sweep also
/// reaches t = 0 and stores that extra vector in `p0`.
#[derive(Clone, Debug)]
pub struct AdjointTrajectory {
    steps: Vec<Vec<f64>>,
    pub dt: f64,
    pub p0: Option<Vec<f64>>,
}

impl AdjointTrajectory {
    pub fn n_steps(&self) -> usize {
        self.steps.len()
    }

    /// p_i for i in 1..=N.
    pub fn at(&self, i: usize) -> &[f64] {
        assert!(i >= 1, "adjoint instants start at 1");
        &self.steps[i - 1]
    }

    /// Total number of stored scalars (excluding `p0`), n_nodes * N.
    pub fn flat_len(&self) -> usize {
        self.steps.iter().map(Vec::len).sum()
    }

    /// Iterate (instant, vector) pairs for i = 1..=N.
    pub fn iter(&self) -> impl Iterator<Item = (usize, &[f64])> {
        self.steps.iter().enumerate().map(|(k, p)| (k + 1, p.as_slice()))
    }
}

/// Accumulate the control coupling values `sum s_a u_{a,k} W_{a,k}` over
/// the shared pattern, where `W` is either the full coupling S = B + C + L
/// (state) or the transport family B negated (adjoint).
fn accumulate_coupling(
    family: &[CsrMatrix],
    n_basis: usize,
    instant: &[f64],
    sign_flip: f64,
    out: &mut [f64],
) {
    out.fill(0.0);
    for side in Side::ALL {
        for k in 0..n_basis {
            let u = instant[side.index() * n_basis + k];
            if u != 0.0 {
                let coeff = sign_flip * side.orientation() * u;
                for (o, v) in out.iter_mut().zip(family[side.index() * n_basis + k].values()) {
                    *o += coeff * v;
                }
            }
        }
    }
}

/// Control coupling of the state system (linear in the coefficients;
/// zero coefficients give the zero matrix).
pub fn state_coupling(ops: &OperatorSet, instant: &[f64]) -> CsrMatrix {
    assert_eq!(instant.len(), 4 * ops.n_basis());
    let mut values = vec![0.0; ops.mass.nnz()];
    accumulate_coupling(&ops.coupling, ops.n_basis(), instant, 1.0, &mut values);
    ops.mass.with_values(values)
}

/// Control coupling of the continuous-adjoint system: only the transport
/// matrices appear, with flipped sign.
pub fn adjoint_coupling(ops: &OperatorSet, instant: &[f64]) -> CsrMatrix {
    assert_eq!(instant.len(), 4 * ops.n_basis());
    let mut values = vec![0.0; ops.mass.nnz()];
    accumulate_coupling(&ops.transport, ops.n_basis(), instant, -1.0, &mut values);
    ops.mass.with_values(values)
}

/// T+(u) and T-(u) value arrays from precomputed coupling values.
fn transition_values(ops: &OperatorSet, coupling: &[f64], dt: f64) -> (Vec<f64>, Vec<f64>) {
    let m = ops.mass.values();
    let a = ops.diffusion.values();
    let mut plus = vec![0.0; m.len()];
    let mut minus = vec![0.0; m.len()];
    for i in 0..m.len() {
        let half = 0.5 * (a[i] + coupling[i]);
        plus[i] = m[i] / dt + half;
        minus[i] = m[i] / dt - half;
    }
    (plus, minus)
}

fn checked_solve(matrix: &CsrMatrix, bandwidth: usize, rhs: &[f64], index: usize) -> Result<Vec<f64>> {
    let lu = BandLu::factor(matrix, bandwidth, bandwidth).map_err(|e| Error::LinearSolve {
        index,
        reason: e.to_string(),
    })?;
    let x = lu.solve(rhs);
    let ax = matrix.matvec_alloc(&x);
    let rhs_norm = rhs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let resid = ax
        .iter()
        .zip(rhs)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    if resid > SOLVE_TOL * rhs_norm.max(1e-300) {
        return Err(Error::LinearSolve {
            index,
            reason: format!("relative residual {:.3e} exceeds {SOLVE_TOL:.0e}", resid / rhs_norm),
        });
    }
    Ok(x)
}

fn check_shapes(ops: &OperatorSet, ctrl: &ControlTrajectory, nodal_len: usize) -> Result<()> {
    if ctrl.n_basis() != ops.n_basis() {
        return Err(Error::ShapeMismatch(format!(
            "control has {} basis functions, operators have {}",
            ctrl.n_basis(),
            ops.n_basis()
        )));
    }
    if nodal_len != ops.n_nodes() {
        return Err(Error::ShapeMismatch(format!(
            "nodal vector has {} entries, mesh has {} nodes",
            nodal_len,
            ops.n_nodes()
        )));
    }
    Ok(())
}

/// Forward Crank-Nicolson sweep: `T+(u_{i+1}) q_{i+1} = T-(u_i) q_i` for
/// i = 0..N-1 from the projected initial density.
pub fn solve_forward(
    ops: &OperatorSet,
    ctrl: &ControlTrajectory,
    q0: &DensityField,
) -> Result<StateTrajectory> {
    check_shapes(ops, ctrl, q0.nodal.len())?;
    let n = ctrl.n_steps();
    let dt = ctrl.dt();
    let nb = ops.n_basis();
    let mut coupling_cur = vec![0.0; ops.mass.nnz()];
    let mut coupling_next = vec![0.0; ops.mass.nnz()];
    accumulate_coupling(&ops.coupling, nb, ctrl.instant(0), 1.0, &mut coupling_cur);

    let mut steps = Vec::with_capacity(n + 1);
    steps.push(q0.nodal.clone());
    for i in 0..n {
        accumulate_coupling(&ops.coupling, nb, ctrl.instant(i + 1), 1.0, &mut coupling_next);
        let (plus, _) = transition_values(ops, &coupling_next, dt);
        let (_, minus) = transition_values(ops, &coupling_cur, dt);
        let a_plus = ops.mass.with_values(plus);
        let a_minus = ops.mass.with_values(minus);
        let rhs = a_minus.matvec_alloc(&steps[i]);
        let q_next = checked_solve(&a_plus, ops.bandwidth, &rhs, i + 1)?;
        steps.push(q_next);
        std::mem::swap(&mut coupling_cur, &mut coupling_next);
    }
    Ok(StateTrajectory { steps, dt })
}

/// Discrete adjoint (transpose of the discrete constraint):
/// `T+(u_N)^T p_N = (M/dt)(q_N - q_target)`, then
/// `T+(u_i)^T p_i = T-(u_i)^T p_{i+1}` backward for i = N-1..1.
pub fn solve_adjoint_discrete(
    ops: &OperatorSet,
    ctrl: &ControlTrajectory,
    state: &StateTrajectory,
    target: &DensityField,
) -> Result<AdjointTrajectory> {
    check_shapes(ops, ctrl, target.nodal.len())?;
    let n = ctrl.n_steps();
    if state.n_steps() != n {
        return Err(Error::ShapeMismatch(format!(
            "state has {} steps, control has {}",
            state.n_steps(),
            n
        )));
    }
    let dt = ctrl.dt();
    let nb = ops.n_basis();
    let mut coupling = vec![0.0; ops.mass.nnz()];

    let mut reversed: Vec<Vec<f64>> = Vec::with_capacity(n);
    accumulate_coupling(&ops.coupling, nb, ctrl.instant(n), 1.0, &mut coupling);
    let (plus, _) = transition_values(ops, &coupling, dt);
    let a_plus_t = ops.mass.with_values(plus).transpose();
    let misfit: Vec<f64> = state
        .terminal()
        .iter()
        .zip(&target.nodal)
        .map(|(q, t)| q - t)
        .collect();
    let mut rhs = ops.mass.matvec_alloc(&misfit);
    for v in &mut rhs {
        *v /= dt;
    }
    reversed.push(checked_solve(&a_plus_t, ops.bandwidth, &rhs, n)?);

    for i in (1..n).rev() {
        accumulate_coupling(&ops.coupling, nb, ctrl.instant(i), 1.0, &mut coupling);
        let (plus, minus) = transition_values(ops, &coupling, dt);
        let a_plus_t = ops.mass.with_values(plus).transpose();
        let a_minus_t = ops.mass.with_values(minus).transpose();
        let rhs = a_minus_t.matvec_alloc(reversed.last().unwrap());
        reversed.push(checked_solve(&a_plus_t, ops.bandwidth, &rhs, i)?);
    }
    reversed.reverse();
    Ok(AdjointTrajectory {
        steps: reversed,
        dt,
        p0: None,
    })
}

/// Continuous adjoint discretized with the same Crank-Nicolson scheme:
/// `p_N = q_N - q_target`, then `T_adj+(u_i) p_i = T_adj-(u_{i+1}) p_{i+1}`
/// backward down to i = 0 (the t = 0 vector lands in `p0`).
pub fn solve_adjoint_continuous(
    ops: &OperatorSet,
    ctrl: &ControlTrajectory,
    state: &StateTrajectory,
    target: &DensityField,
) -> Result<AdjointTrajectory> {
    check_shapes(ops, ctrl, target.nodal.len())?;
    let n = ctrl.n_steps();
    if state.n_steps() != n {
        return Err(Error::ShapeMismatch(format!(
            "state has {} steps, control has {}",
            state.n_steps(),
            n
        )));
    }
    let dt = ctrl.dt();
    let nb = ops.n_basis();
    let mut coupling = vec![0.0; ops.mass.nnz()];

    let terminal: Vec<f64> = state
        .terminal()
        .iter()
        .zip(&target.nodal)
        .map(|(q, t)| q - t)
        .collect();
    let mut reversed: Vec<Vec<f64>> = vec![terminal];
    for i in (0..n).rev() {
        accumulate_coupling(&ops.transport, nb, ctrl.instant(i + 1), -1.0, &mut coupling);
        let (_, minus) = transition_values(ops, &coupling, dt);
        let a_minus = ops.mass.with_values(minus);
        let rhs = a_minus.matvec_alloc(reversed.last().unwrap());

        accumulate_coupling(&ops.transport, nb, ctrl.instant(i), -1.0, &mut coupling);
        let (plus, _) = transition_values(ops, &coupling, dt);
        let a_plus = ops.mass.with_values(plus);
        reversed.push(checked_solve(&a_plus, ops.bandwidth, &rhs, i)?);
    }
    let p0 = reversed.pop();
    reversed.reverse();
    Ok(AdjointTrajectory {
        steps: reversed,
        dt,
        p0,
    })
}

/// Tangent (directional derivative) sweep: the exact derivative of the
/// forward recurrence along a control direction h,
/// `T+(u_{i+1}) z_{i+1} = T-(u_i) z_i - G(h_i) q_i / 2 - G(h_{i+1}) q_{i+1} / 2`
/// with z_0 = 0.
pub fn solve_tangent(
    ops: &OperatorSet,
    ctrl: &ControlTrajectory,
    state: &StateTrajectory,
    direction: &ControlTrajectory,
) -> Result<StateTrajectory> {
    check_shapes(ops, ctrl, ops.n_nodes())?;
    if direction.n_steps() != ctrl.n_steps() || direction.n_basis() != ctrl.n_basis() {
        return Err(Error::ShapeMismatch(
            "direction and control trajectories must have identical shape".into(),
        ));
    }
    if state.n_steps() != ctrl.n_steps() {
        return Err(Error::ShapeMismatch(format!(
            "state has {} steps, control has {}",
            state.n_steps(),
            ctrl.n_steps()
        )));
    }
    let n = ctrl.n_steps();
    let dt = ctrl.dt();
    let nb = ops.n_basis();
    let n_nodes = ops.n_nodes();
    let mut coupling = vec![0.0; ops.mass.nnz()];

    let mut steps = Vec::with_capacity(n + 1);
    steps.push(vec![0.0; n_nodes]);
    for i in 0..n {
        accumulate_coupling(&ops.coupling, nb, ctrl.instant(i), 1.0, &mut coupling);
        let (_, minus) = transition_values(ops, &coupling, dt);
        let mut rhs = ops.mass.with_values(minus).matvec_alloc(&steps[i]);

        let dir_cur = state_coupling(ops, direction.instant(i)).matvec_alloc(state.at(i));
        let dir_next = state_coupling(ops, direction.instant(i + 1)).matvec_alloc(state.at(i + 1));
        for (r, (a, b)) in rhs.iter_mut().zip(dir_cur.iter().zip(&dir_next)) {
            *r -= 0.5 * (a + b);
        }

        accumulate_coupling(&ops.coupling, nb, ctrl.instant(i + 1), 1.0, &mut coupling);
        let (plus, _) = transition_values(ops, &coupling, dt);
        let a_plus = ops.mass.with_values(plus);
        steps.push(checked_solve(&a_plus, ops.bandwidth, &rhs, i + 1)?);
    }
    Ok(StateTrajectory { steps, dt })
}
