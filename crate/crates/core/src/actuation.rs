//! Control basis, actuator decay model, and the induced velocity field.
//!
//! Each side of the unit square carries one actuator stack whose intensity
//! along the side is expanded in a 1-D Gaussian radial basis,
//! `u_a(s, t) = sum_k psi_k(s) u_{a,k}(t)`. An actuator pushes inward with
//! strength decaying like `exp(-c d)` in the distance `d` from its side, so
//! the velocity field is
//!
//! ```text
//! v1(x, t) = u4(x2, t) e^{-c x1} - u2(x2, t) e^{-c (1 - x1)}
//! v2(x, t) = u1(x1, t) e^{-c x2} - u3(x1, t) e^{-c (1 - x2)}
//! ```
//!
//! which is linear in the control coefficients.

use crate::error::{Error, Result};
use crate::mesh::Side;
use rand::Rng;

/// 1-D Gaussian radial basis on [0, 1] with evenly spaced centers
/// (k - 1/2) / n for k = 1..n.
#[derive(Clone, Debug)]
pub struct ControlBasis {
    centers: Vec<f64>,
    width: f64,
}

impl ControlBasis {
    pub fn gaussian(n_basis: usize, width: f64) -> ControlBasis {
        assert!(n_basis >= 1 && width > 0.0);
        let centers = (1..=n_basis).map(|k| (k as f64 - 0.5) / n_basis as f64).collect();
        ControlBasis { centers, width }
    }

    /// Default width 1 / n_basis, matching the center spacing.
    pub fn with_default_width(n_basis: usize) -> ControlBasis {
        ControlBasis::gaussian(n_basis, 1.0 / n_basis as f64)
    }

    /// Single basis function that is identically 1.0 in f64 arithmetic
    /// (wide-width limit of a Gaussian). Together with a zero decay rate
    /// this makes every assembly integrand polynomial, so the structural
    /// matrix identities hold to machine precision.
    pub fn constant() -> ControlBasis {
        ControlBasis::gaussian(1, 1e8)
    }

    pub fn n_basis(&self) -> usize {
        self.centers.len()
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    /// psi_k(s) for the 0-based basis index `k`.
    pub fn eval(&self, k: usize, s: f64) -> f64 {
        let d = s - self.centers[k];
        (-d * d / (2.0 * self.width * self.width)).exp()
    }

    /// u(s) = sum_k psi_k(s) coeffs[k].
    pub fn boundary_value(&self, coeffs: &[f64], s: f64) -> f64 {
        assert_eq!(coeffs.len(), self.n_basis());
        coeffs
            .iter()
            .enumerate()
            .map(|(k, &c)| c * self.eval(k, s))
            .sum()
    }

    /// max over an `samples`-point grid of |u(s)|; a lower bound on the
    /// true sup norm that tightens with resolution.
    pub fn boundary_sup(&self, coeffs: &[f64], samples: usize) -> f64 {
        let samples = samples.max(2);
        (0..samples)
            .map(|i| i as f64 / (samples - 1) as f64)
            .map(|s| self.boundary_value(coeffs, s).abs())
            .fold(0.0, f64::max)
    }
}

/// Exponential actuator decay and the control bound.
#[derive(Clone, Copy, Debug)]
pub struct ActuatorModel {
    /// Decay rate c >= 0; zero means the push is uniform across the domain.
    pub decay: f64,
    /// Upper bound of the admissible box 0 <= u <= u_max.
    pub u_max: f64,
}

impl ActuatorModel {
    pub fn new(decay: f64, u_max: f64) -> ActuatorModel {
        ActuatorModel { decay, u_max }
    }

    /// e^{-c d(x, side)}, in (0, 1].
    pub fn profile(&self, side: Side, x: [f64; 2]) -> f64 {
        (-self.decay * side.distance(x)).exp()
    }

    /// Derivative of the profile along the side's normal axis.
    pub fn profile_derivative(&self, side: Side, x: [f64; 2]) -> f64 {
        self.decay * side.normal_sign() * self.profile(side, x)
    }

    /// Unit-intensity velocity contribution of one side at `x`: the signed
    /// decay profile directed along the side's inward normal axis.
    pub fn unit_field(&self, side: Side, x: [f64; 2]) -> [f64; 2] {
        let mut v = [0.0, 0.0];
        v[side.axis()] = side.orientation() * self.profile(side, x);
        v
    }
}

/// Slice out one side's coefficients from a per-instant block laid out
/// side-major: `[u_{1,1..Nc}, u_{2,1..Nc}, u_{3,1..Nc}, u_{4,1..Nc}]`.
pub fn side_coeffs(instant: &[f64], side: Side, n_basis: usize) -> &[f64] {
    let start = side.index() * n_basis;
    &instant[start..start + n_basis]
}

/// Velocity field induced by one instant's control coefficients.
///
/// `instant` holds the 4 * n_basis coefficients, side-major. The result is
/// linear in the coefficients; the point must lie in the closed unit
/// square.
pub fn eval_velocity(
    instant: &[f64],
    basis: &ControlBasis,
    model: &ActuatorModel,
    x: [f64; 2],
) -> Result<[f64; 2]> {
    if !(0.0..=1.0).contains(&x[0]) || !(0.0..=1.0).contains(&x[1]) {
        return Err(Error::PointOutsideDomain(x[0], x[1]));
    }
    assert_eq!(instant.len(), 4 * basis.n_basis());
    let mut v = [0.0, 0.0];
    for side in Side::ALL {
        let u = basis.boundary_value(side_coeffs(instant, side, basis.n_basis()), x[side.tangent_axis()]);
        v[side.axis()] += side.orientation() * model.profile(side, x) * u;
    }
    Ok(v)
}

/// Max Euclidean norm of the velocity over a tensor grid with
/// `samples_per_axis` points per axis (clamped to at least 2). Sampling
/// the same 1-D grid that `boundary_sup` uses keeps the sampled velocity
/// bound dominated by the sampled control norm.
pub fn velocity_sup_norm(
    instant: &[f64],
    basis: &ControlBasis,
    model: &ActuatorModel,
    samples_per_axis: usize,
) -> f64 {
    let m = samples_per_axis.max(2);
    let grid: Vec<f64> = (0..m).map(|i| i as f64 / (m - 1) as f64).collect();
    let nb = basis.n_basis();
    // u_a at grid points, one row per side
    let mut traces = vec![vec![0.0; m]; 4];
    for side in Side::ALL {
        let coeffs = side_coeffs(instant, side, nb);
        for (i, &s) in grid.iter().enumerate() {
            traces[side.index()][i] = basis.boundary_value(coeffs, s);
        }
    }
    let mut sup: f64 = 0.0;
    for (ix, &x1) in grid.iter().enumerate() {
        let p4 = model.profile(Side::Left, [x1, 0.0]);
        let p2 = model.profile(Side::Right, [x1, 0.0]);
        for (iy, &x2) in grid.iter().enumerate() {
            let p1 = model.profile(Side::Bottom, [0.0, x2]);
            let p3 = model.profile(Side::Top, [0.0, x2]);
            let v1 = traces[Side::Left.index()][iy] * p4 - traces[Side::Right.index()][iy] * p2;
            let v2 = traces[Side::Bottom.index()][ix] * p1 - traces[Side::Top.index()][ix] * p3;
            sup = sup.max((v1 * v1 + v2 * v2).sqrt());
        }
    }
    sup
}

/// Control coefficients u_{i,a,k} for time instants i = 0..N, sides
/// a = 1..4 and basis indices k = 1..N_c, stored flat with index
/// `i * 4 * N_c + (a - 1) * N_c + (k - 1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlTrajectory {
    values: Vec<f64>,
    n_steps: usize,
    n_basis: usize,
    dt: f64,
}

impl ControlTrajectory {
    pub fn zeros(n_steps: usize, n_basis: usize, dt: f64) -> ControlTrajectory {
        assert!(n_steps >= 1 && n_basis >= 1 && dt > 0.0);
        ControlTrajectory {
            values: vec![0.0; (n_steps + 1) * 4 * n_basis],
            n_steps,
            n_basis,
            dt,
        }
    }

    pub fn from_flat(values: Vec<f64>, n_steps: usize, n_basis: usize, dt: f64) -> Result<ControlTrajectory> {
        if values.len() != (n_steps + 1) * 4 * n_basis {
            return Err(Error::ShapeMismatch(format!(
                "flat control has {} entries, expected {}",
                values.len(),
                (n_steps + 1) * 4 * n_basis
            )));
        }
        Ok(ControlTrajectory {
            values,
            n_steps,
            n_basis,
            dt,
        })
    }

    /// Number of time steps N; there are N + 1 instants.
    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn n_instants(&self) -> usize {
        self.n_steps + 1
    }

    pub fn n_basis(&self) -> usize {
        self.n_basis
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn block_len(&self) -> usize {
        4 * self.n_basis
    }

    pub fn flat_len(&self) -> usize {
        self.values.len()
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.values
    }

    pub fn as_flat_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn flat_index(&self, i: usize, side: Side, k: usize) -> usize {
        i * self.block_len() + side.index() * self.n_basis + k
    }

    /// Coefficient block of instant `i`.
    pub fn instant(&self, i: usize) -> &[f64] {
        let b = self.block_len();
        &self.values[i * b..(i + 1) * b]
    }

    pub fn instant_mut(&mut self, i: usize) -> &mut [f64] {
        let b = self.block_len();
        &mut self.values[i * b..(i + 1) * b]
    }

    pub fn get(&self, i: usize, side: Side, k: usize) -> f64 {
        self.values[self.flat_index(i, side, k)]
    }

    pub fn set(&mut self, i: usize, side: Side, k: usize, v: f64) {
        let idx = self.flat_index(i, side, k);
        self.values[idx] = v;
    }

    pub fn is_feasible(&self, u_max: f64) -> bool {
        self.values.iter().all(|&v| (0.0..=u_max).contains(&v))
    }

    /// Clamp every coefficient into [0, u_max].
    pub fn project_into_box(&mut self, u_max: f64) {
        for v in &mut self.values {
            *v = v.clamp(0.0, u_max);
        }
    }

    /// Coefficients at continuous time t, piecewise linear between the
    /// stored instants; t is clamped to [0, N dt].
    pub fn interpolate(&self, t: f64) -> Vec<f64> {
        let s = (t / self.dt).clamp(0.0, self.n_steps as f64);
        let i = (s.floor() as usize).min(self.n_steps - 1);
        let w = s - i as f64;
        let a = self.instant(i);
        let b = self.instant(i + 1);
        a.iter().zip(b).map(|(x, y)| (1.0 - w) * x + w * y).collect()
    }

    /// Uniform random coefficients in [0, u_max]; test and diagnostics
    /// helper.
    pub fn random_feasible(
        n_steps: usize,
        n_basis: usize,
        dt: f64,
        u_max: f64,
        rng: &mut impl Rng,
    ) -> ControlTrajectory {
        let mut ctrl = ControlTrajectory::zeros(n_steps, n_basis, dt);
        for v in &mut ctrl.values {
            *v = rng.gen_range(0.0..=u_max);
        }
        ctrl
    }
}
