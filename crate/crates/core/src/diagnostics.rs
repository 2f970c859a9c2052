//! Computable monitors for the structural identities and well-posedness
//! estimates behind the discretization.
//!
//! Everything here is a check, not a solve path: integration-by-parts
//! residuals of the assembled matrix families, transpose-consistency of
//! the two adjoint couplings, the velocity-field norm bound, the Garding
//! constants, energy estimates along a state trajectory, and
//! finite-difference plus tangent/adjoint cross-checks of the reduced
//! gradient. A failed flag indicates a solver or assembly bug.

use crate::actuation::{side_coeffs, velocity_sup_norm, ControlTrajectory};
use crate::assembly::{ibp_residual, OperatorSet};
use crate::mesh::Side;
use crate::ocp::{control_energy_gradient, Problem};
use crate::solver::{solve_tangent, StateTrajectory};
use crate::error::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fmt;

/// Default 1-D / per-axis sample count for sup-norm estimates.
pub const SUP_SAMPLES: usize = 64;

/// Scaled-relative-error tolerance of the gradient finite-difference
/// check.
pub const GRADIENT_FD_TOL: f64 = 1e-6;

/// Relative tolerance of the tangent/adjoint duality identity.
pub const DUALITY_TOL: f64 = 1e-8;

/// Expected relative integration-by-parts residual per quadrature order,
/// measured on the 10x10 reference configuration (Gaussian basis of width
/// 0.1, decay rate 1) and padded by a safety factor.
pub fn ibp_tolerance(quad_order: usize) -> f64 {
    match quad_order {
        2 => 1e-2,
        3 => 1e-6,
        4 => 1e-8,
        5 => 1e-10,
        _ => 1e-12,
    }
}

#[derive(Clone, Debug)]
pub struct StructureChecks {
    /// Max-abs of B + B^T + C + L per family (side-major).
    pub ibp_residuals: Vec<f64>,
    pub ibp_max: f64,
    /// Largest entry among the B/C/L families; reference scale of the
    /// relative residual.
    pub matrix_scale: f64,
    /// Max over the sample controls of |G(u)^T - G_adj(u)|.
    pub commutation_residual: f64,
    pub pass: bool,
}

/// Fill the structural residuals: integration-by-parts identity per
/// family plus transpose-consistency of the couplings over the provided
/// sample control blocks.
///
/// The commutation residual is linear in the coefficients; the `pass`
/// bound (twice the worst per-family residual) is calibrated for samples
/// in the unit box [0, 1].
pub fn check_structure(ops: &OperatorSet, sample_controls: &[Vec<f64>]) -> StructureChecks {
    let nb = ops.n_basis();
    let mut ibp_residuals = Vec::with_capacity(4 * nb);
    for side in Side::ALL {
        for k in 0..nb {
            ibp_residuals.push(ibp_residual(ops, side, k));
        }
    }
    let ibp_max = ibp_residuals.iter().fold(0.0f64, |m, v| m.max(*v));
    let matrix_scale = ops
        .transport
        .iter()
        .chain(&ops.reaction)
        .chain(&ops.boundary_flux)
        .map(|m| m.max_abs())
        .fold(0.0, f64::max);

    let mut commutation_residual: f64 = 0.0;
    for u in sample_controls {
        let gq_t = crate::solver::state_coupling(ops, u).transpose();
        let gp = crate::solver::adjoint_coupling(ops, u);
        for (i, j, v) in gq_t.iter() {
            commutation_residual = commutation_residual.max((v - gp.get(i, j)).abs());
        }
    }

    let tol = ibp_tolerance(ops.quad_order);
    let pass = ibp_max <= tol * matrix_scale
        && commutation_residual <= 2.0 * ibp_max.max(f64::MIN_POSITIVE);
    StructureChecks {
        ibp_residuals,
        ibp_max,
        matrix_scale,
        commutation_residual,
        pass,
    }
}

/// Squared control norm: trapezoid in time of the summed squared per-side
/// sup norms, `sum_a int |u_a(t)|_sup^2 dt`, sampled on a `samples`-point
/// grid per side.
pub fn control_norm_sq(ctrl: &ControlTrajectory, ops: &OperatorSet, samples: usize) -> f64 {
    let n = ctrl.n_steps();
    let nb = ops.n_basis();
    let mut acc = 0.0;
    for i in 0..=n {
        let w = if i == 0 || i == n { 0.5 } else { 1.0 };
        let per_side: f64 = Side::ALL
            .iter()
            .map(|&s| {
                ops.basis
                    .boundary_sup(side_coeffs(ctrl.instant(i), s, nb), samples)
                    .powi(2)
            })
            .sum();
        acc += w * ctrl.dt() * per_side;
    }
    acc
}

#[derive(Clone, Debug)]
pub struct VelocityChecks {
    /// Trapezoid-in-time integral of the squared sampled sup norm of v.
    pub bound_lhs: f64,
    /// Eight times the squared control norm with the same quadrature.
    pub bound_rhs: f64,
    /// Garding shift lambda(t_i) = |v(t_i)|_sup^2 / mu per instant.
    pub garding_lambda: Vec<f64>,
    /// Minimal weak-coercivity constant over the horizon.
    pub coercivity_floor: f64,
    pub pass: bool,
}

pub fn check_velocity(ctrl: &ControlTrajectory, ops: &OperatorSet, samples: usize) -> VelocityChecks {
    let n = ctrl.n_steps();
    let mu = ops.mu;
    let mut lhs = 0.0;
    let mut garding_lambda = Vec::with_capacity(n + 1);
    let mut coercivity_floor = f64::INFINITY;
    for i in 0..=n {
        let w = if i == 0 || i == n { 0.5 } else { 1.0 };
        let sup = velocity_sup_norm(ctrl.instant(i), &ops.basis, &ops.model, samples);
        lhs += w * ctrl.dt() * sup * sup;
        garding_lambda.push(sup * sup / mu);
        coercivity_floor = coercivity_floor.min((0.5 * mu).min(sup * sup / (2.0 * mu)));
    }
    let rhs = 8.0 * control_norm_sq(ctrl, ops, samples);
    VelocityChecks {
        bound_lhs: lhs,
        bound_rhs: rhs,
        garding_lambda,
        coercivity_floor,
        pass: lhs <= rhs * (1.0 + 1e-12) + f64::MIN_POSITIVE,
    }
}

#[derive(Clone, Copy, Debug)]
pub struct EnergyBound {
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

impl EnergyBound {
    fn new(lhs: f64, rhs: f64) -> EnergyBound {
        EnergyBound {
            lhs,
            rhs,
            pass: lhs <= rhs * (1.0 + 1e-12),
        }
    }
}

#[derive(Clone, Debug)]
pub struct EnergyChecks {
    /// max_i |q_i|_M^2 against the exponential bound.
    pub linf_l2: EnergyBound,
    /// Trapezoid of |q_i|_M^2 against T times the same bound.
    pub l2_l2: EnergyBound,
    /// Trapezoid of the full H1 norm against the coercivity-weighted
    /// bound (infinite, hence trivially satisfied, for zero velocity).
    pub l2_h1: EnergyBound,
}

impl EnergyChecks {
    pub fn all_pass(&self) -> bool {
        self.linf_l2.pass && self.l2_l2.pass && self.l2_h1.pass
    }
}

/// Energy estimates along a computed state trajectory: with
/// `E = exp(16 |u|^2 / mu)` and initial energy `e0 = |q_0|_M^2`,
///
/// ```text
/// max_i |q_i|_M^2           <= E e0
/// int |q|_M^2 dt            <= T E e0
/// int (|q|_M^2 + |grad q|^2) <= (1/2 + 8 |u|^2 E / mu) e0 / floor
/// ```
pub fn check_energy(
    ops: &OperatorSet,
    ctrl: &ControlTrajectory,
    state: &StateTrajectory,
    samples: usize,
) -> EnergyChecks {
    let n = ctrl.n_steps();
    let mu = ops.mu;
    let t_final = ctrl.dt() * n as f64;
    let u_sq = control_norm_sq(ctrl, ops, samples);
    let vel = check_velocity(ctrl, ops, samples);
    let e0 = ops.l2_norm_sq(state.at(0));
    let growth = (16.0 * u_sq / mu).exp();

    let mut sup_l2 = 0.0f64;
    let mut int_l2 = 0.0;
    let mut int_h1 = 0.0;
    for i in 0..=n {
        let w = if i == 0 || i == n { 0.5 } else { 1.0 };
        let l2 = ops.l2_norm_sq(state.at(i));
        sup_l2 = sup_l2.max(l2);
        int_l2 += w * ctrl.dt() * l2;
        int_h1 += w * ctrl.dt() * (l2 + ops.h1_seminorm_sq(state.at(i)));
    }

    let h1_rhs = if vel.coercivity_floor > 0.0 {
        (0.5 + 8.0 / mu * u_sq * growth) * e0 / vel.coercivity_floor
    } else {
        f64::INFINITY
    };

    EnergyChecks {
        linf_l2: EnergyBound::new(sup_l2, growth * e0),
        l2_l2: EnergyBound::new(int_l2, t_final * growth * e0),
        l2_h1: EnergyBound::new(int_h1, h1_rhs),
    }
}

#[derive(Clone, Copy, Debug)]
pub struct GradientChecks {
    /// Worst relative error of directional central differences against
    /// the adjoint gradient pairing.
    pub fd_error: f64,
    /// Worst relative mismatch of the tangent/adjoint duality identity.
    pub duality_error: f64,
    pub probes: usize,
    pub pass: bool,
}

/// Cross-check the reduced gradient with `n_probes` random directions:
/// central finite differences of the full cost (step 1e-5) against the
/// gradient pairing, and the duality identity pairing the non-penalty
/// part of the gradient with the tangent solution.
///
/// Error normalization: the finite-difference mismatch is relative to the
/// larger of the two pairings, falling back to the absolute mismatch when
/// both sit below the finite-difference noise floor (so a stationary
/// point reads as zero error, not as noise divided by noise). The duality
/// mismatch is a pure rounding quantity of order 1e-12; it is measured
/// against the norm product |g - alpha-part| |h|, which bounds the
/// pairing and is immune to cancellation in unlucky directions.
pub fn check_gradients(
    problem: &Problem,
    ctrl: &ControlTrajectory,
    n_probes: usize,
    seed: u64,
) -> Result<GradientChecks> {
    let eps = 1e-5;
    let noise_floor = 1e-9;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (_, state) = problem.cost_of(ctrl)?;
    let grad = problem.gradient(ctrl)?;
    let alpha_part = control_energy_gradient(ctrl, problem.alpha);
    let misfit: Vec<f64> = state
        .terminal()
        .iter()
        .zip(&problem.target.nodal)
        .map(|(q, t)| q - t)
        .collect();
    let adjoint_part_norm: f64 = grad
        .iter()
        .zip(&alpha_part)
        .map(|(g, a)| (g - a) * (g - a))
        .sum::<f64>()
        .sqrt();

    let mut fd_error = 0.0f64;
    let mut duality_error = 0.0f64;
    for _ in 0..n_probes {
        let h: Vec<f64> = (0..ctrl.flat_len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let h_norm: f64 = h.iter().map(|x| x * x).sum::<f64>().sqrt();
        let pairing: f64 = grad.iter().zip(&h).map(|(a, b)| a * b).sum();

        let mut up = ctrl.clone();
        let mut dn = ctrl.clone();
        for ((u, d), hi) in up.as_flat_mut().iter_mut().zip(dn.as_flat_mut()).zip(&h) {
            *u += eps * hi;
            *d -= eps * hi;
        }
        let (cu, _) = problem.cost_of(&up)?;
        let (cd, _) = problem.cost_of(&dn)?;
        let fd = (cu.total - cd.total) / (2.0 * eps);
        let fd_scale = pairing.abs().max(fd.abs());
        fd_error = fd_error.max(if fd_scale > noise_floor {
            (pairing - fd).abs() / fd_scale
        } else {
            (pairing - fd).abs()
        });

        let dir = ControlTrajectory::from_flat(h.clone(), ctrl.n_steps(), ctrl.n_basis(), ctrl.dt())?;
        let z = solve_tangent(problem.ops, ctrl, &state, &dir)?;
        let lhs: f64 = grad
            .iter()
            .zip(&alpha_part)
            .zip(&h)
            .map(|((g, a), hi)| (g - a) * hi)
            .sum();
        let rhs = problem.ops.mass.bilinear(&misfit, z.terminal());
        let du_scale = lhs.abs().max(rhs.abs()).max(adjoint_part_norm * h_norm);
        duality_error = duality_error.max(if du_scale > noise_floor {
            (lhs - rhs).abs() / du_scale
        } else {
            (lhs - rhs).abs()
        });
    }

    Ok(GradientChecks {
        fd_error,
        duality_error,
        probes: n_probes,
        pass: fd_error <= GRADIENT_FD_TOL && duality_error <= DUALITY_TOL,
    })
}

/// Aggregated report; sections are present when the corresponding check
/// ran. Reproducible bit-for-bit for fixed seeds and inputs.
#[derive(Clone, Debug, Default)]
pub struct DiagnosticsReport {
    pub structure: Option<StructureChecks>,
    pub velocity: Option<VelocityChecks>,
    pub energy: Option<EnergyChecks>,
    pub gradients: Option<GradientChecks>,
}

impl DiagnosticsReport {
    pub fn all_pass(&self) -> bool {
        self.structure.as_ref().is_none_or(|s| s.pass)
            && self.velocity.as_ref().is_none_or(|v| v.pass)
            && self.energy.as_ref().is_none_or(|e| e.all_pass())
            && self.gradients.as_ref().is_none_or(|g| g.pass)
    }
}

impl fmt::Display for DiagnosticsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(s) = &self.structure {
            writeln!(f, "ibp_residual_max: {:e}", s.ibp_max)?;
            writeln!(f, "matrix_scale: {:e}", s.matrix_scale)?;
            writeln!(
                f,
                "ibp_residual_relative: {:e}",
                s.ibp_max / s.matrix_scale.max(f64::MIN_POSITIVE)
            )?;
            writeln!(f, "commutation_residual: {:e}", s.commutation_residual)?;
            writeln!(f, "structure_pass: {}", s.pass)?;
        }
        if let Some(v) = &self.velocity {
            writeln!(f, "velocity_bound_lhs: {:e}", v.bound_lhs)?;
            writeln!(f, "velocity_bound_rhs: {:e}", v.bound_rhs)?;
            writeln!(f, "coercivity_floor: {:e}", v.coercivity_floor)?;
            writeln!(f, "velocity_pass: {}", v.pass)?;
        }
        if let Some(e) = &self.energy {
            writeln!(f, "energy_linf_l2_lhs: {:e}", e.linf_l2.lhs)?;
            writeln!(f, "energy_linf_l2_rhs: {:e}", e.linf_l2.rhs)?;
            writeln!(f, "energy_l2_l2_lhs: {:e}", e.l2_l2.lhs)?;
            writeln!(f, "energy_l2_l2_rhs: {:e}", e.l2_l2.rhs)?;
            writeln!(f, "energy_l2_h1_lhs: {:e}", e.l2_h1.lhs)?;
            writeln!(f, "energy_l2_h1_rhs: {:e}", e.l2_h1.rhs)?;
            writeln!(f, "energy_pass: {}", e.all_pass())?;
        }
        if let Some(g) = &self.gradients {
            writeln!(f, "gradient_fd_error: {:e}", g.fd_error)?;
            writeln!(f, "tangent_adjoint_error: {:e}", g.duality_error)?;
            writeln!(f, "gradient_probes: {}", g.probes)?;
            writeln!(f, "gradient_pass: {}", g.pass)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::actuation::{ActuatorModel, ControlBasis};
    use crate::assembly::assemble_operators;
    use crate::mesh::Mesh;
    use crate::solver::solve_forward;

    fn gaussian_ops(nx: usize, n_basis: usize, order: usize) -> OperatorSet {
        let mesh = Mesh::structured(nx, nx).unwrap();
        assemble_operators(
            &mesh,
            &ControlBasis::with_default_width(n_basis),
            &ActuatorModel::new(1.0, 1.0),
            0.1,
            order,
        )
        .unwrap()
    }

    fn exact_ops(nx: usize) -> OperatorSet {
        let mesh = Mesh::structured(nx, nx).unwrap();
        assemble_operators(
            &mesh,
            &ControlBasis::constant(),
            &ActuatorModel::new(0.0, 1.0),
            0.1,
            4,
        )
        .unwrap()
    }

    #[test]
    fn exact_configuration_passes_structure_checks_tightly() {
        let ops = exact_ops(8);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let samples: Vec<Vec<f64>> = (0..5)
            .map(|_| (0..4).map(|_| rng.gen_range(0.0..1.0)).collect())
            .collect();
        let s = check_structure(&ops, &samples);
        assert!(s.ibp_max <= 1e-13, "ibp {:.3e}", s.ibp_max);
        assert!(s.pass);
    }

    #[test]
    fn zero_sample_control_has_zero_commutation_residual() {
        let ops = gaussian_ops(5, 2, 4);
        let s = check_structure(&ops, &[vec![0.0; 8]]);
        assert_eq!(s.commutation_residual, 0.0);
    }

    #[test]
    fn gaussian_configuration_meets_the_order_tolerance() {
        let ops = gaussian_ops(6, 3, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let samples: Vec<Vec<f64>> = (0..10)
            .map(|_| (0..12).map(|_| rng.gen_range(0.0..1.0)).collect())
            .collect();
        let s = check_structure(&ops, &samples);
        assert!(s.pass, "relative {:.3e}", s.ibp_max / s.matrix_scale);
        assert!(s.commutation_residual <= 2.0 * s.ibp_max);
    }

    #[test]
    fn velocity_bound_holds_for_random_feasible_controls() {
        let ops = gaussian_ops(4, 4, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let ctrl = ControlTrajectory::random_feasible(12, 4, 0.0025, 1.0, &mut rng);
            let v = check_velocity(&ctrl, &ops, SUP_SAMPLES);
            assert!(v.pass, "lhs {} rhs {}", v.bound_lhs, v.bound_rhs);
            assert_eq!(v.garding_lambda.len(), 13);
        }
    }

    #[test]
    fn zero_control_energy_bounds_are_tight_at_uniform_start() {
        let ops = gaussian_ops(5, 2, 4);
        let ctrl = ControlTrajectory::zeros(8, 2, 0.0025);
        let uniform = ops.project_density(|_| 1.0).unwrap();
        let q = solve_forward(&ops, &ctrl, &uniform).unwrap();
        let e = check_energy(&ops, &ctrl, &q, SUP_SAMPLES);
        assert!(e.all_pass());
        // exp(0) = 1: the sup bound is attained at the initial instant
        assert!((e.linf_l2.lhs - e.linf_l2.rhs).abs() < 1e-12);
        // zero velocity: the H1 bound degenerates to +infinity
        assert!(e.l2_h1.rhs.is_infinite());
    }

    #[test]
    fn diffusion_from_a_bump_still_satisfies_the_estimates() {
        let ops = gaussian_ops(6, 2, 4);
        let ctrl = ControlTrajectory::zeros(10, 2, 0.0025);
        let q0 = ops
            .project_density(|x| ((-(x[0] - 0.4).powi(2) - (x[1] - 0.5).powi(2)) / 0.01).exp())
            .unwrap();
        let q = solve_forward(&ops, &ctrl, &q0).unwrap();
        let e = check_energy(&ops, &ctrl, &q, SUP_SAMPLES);
        assert!(e.all_pass());
        assert!((e.linf_l2.lhs - e.linf_l2.rhs).abs() < 1e-9 * e.linf_l2.rhs);
    }

    #[test]
    fn random_controls_satisfy_the_loose_energy_bounds() {
        let ops = gaussian_ops(6, 3, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let ctrl = ControlTrajectory::random_feasible(10, 3, 0.0025, 1.0, &mut rng);
        let q0 = ops.project_density(|_| 1.0).unwrap();
        let q = solve_forward(&ops, &ctrl, &q0).unwrap();
        let e = check_energy(&ops, &ctrl, &q, SUP_SAMPLES);
        assert!(e.all_pass());
        assert!(e.linf_l2.lhs < e.linf_l2.rhs, "bounds should be loose here");
    }

    #[test]
    fn gradient_checks_pass_on_a_coarse_instance() {
        let ops = gaussian_ops(2, 2, 4);
        let problem = Problem {
            ops: &ops,
            initial: ops.project_density(|_| 1.0).unwrap(),
            target: ops
                .project_density(|x| ((-(x[0] - 0.3).powi(2) - (x[1] - 0.6).powi(2)) / 0.02).exp())
                .unwrap(),
            alpha: 1e-4,
            u_max: 1.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let ctrl = ControlTrajectory::random_feasible(4, 2, 0.005, 1.0, &mut rng);
        let g = check_gradients(&problem, &ctrl, 5, 11).unwrap();
        assert!(g.pass, "fd {:.3e} duality {:.3e}", g.fd_error, g.duality_error);
    }

    #[test]
    fn trivial_instance_has_vanishing_errors() {
        let ops = gaussian_ops(3, 2, 4);
        let uniform = ops.project_density(|_| 1.0).unwrap();
        let problem = Problem {
            ops: &ops,
            initial: uniform.clone(),
            target: uniform,
            alpha: 1e-4,
            u_max: 1.0,
        };
        let ctrl = ControlTrajectory::zeros(4, 2, 0.005);
        let g = check_gradients(&problem, &ctrl, 3, 1).unwrap();
        // cost is exactly quadratic in u around zero control with zero
        // adjoint: both identities hold to rounding
        assert!(g.duality_error <= 1e-10);
        assert!(g.pass);
    }

    #[test]
    fn report_prints_every_section() {
        let ops = gaussian_ops(3, 2, 4);
        let ctrl = ControlTrajectory::zeros(4, 2, 0.005);
        let uniform = ops.project_density(|_| 1.0).unwrap();
        let q = solve_forward(&ops, &ctrl, &uniform).unwrap();
        let report = DiagnosticsReport {
            structure: Some(check_structure(&ops, &[vec![0.5; 8]])),
            velocity: Some(check_velocity(&ctrl, &ops, 16)),
            energy: Some(check_energy(&ops, &ctrl, &q, 16)),
            gradients: None,
        };
        let text = report.to_string();
        for key in [
            "ibp_residual_max",
            "commutation_residual",
            "velocity_bound_lhs",
            "energy_l2_h1_rhs",
        ] {
            assert!(text.contains(key), "missing {key} in report:\n{text}");
        }
        assert!(report.all_pass());
    }
}
