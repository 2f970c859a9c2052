//! Microscopic validation: reflected Euler-Maruyama particles under the
//! actuated velocity field.
//!
//! Each particle follows `dX = v(X, t) dt + sqrt(2 mu) dW` inside the
//! closed unit square; the Skorokhod reflection term confining the exact
//! process is approximated by coordinate-wise mirror reflection of the
//! proposed step, a standard weak-order-preserving treatment. Particles do
//! not interact. Each particle owns a counter-based RNG stream derived
//! from (seed, epoch, index), so results are identical for any thread
//! count.

use crate::actuation::{eval_velocity, ActuatorModel, ControlBasis, ControlTrajectory};
use crate::assembly::DensityField;
use crate::error::{Error, Result};
use crate::mesh::Mesh;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

#[derive(Clone, Debug)]
pub struct ParticleEnsemble {
    pub positions: Vec<[f64; 2]>,
    pub seed: u64,
    pub time: f64,
    /// Counts RNG-consuming passes so repeated simulation segments never
    /// reuse random draws.
    pub epoch: u64,
}

fn stream_rng(seed: u64, epoch: u64, idx: u64) -> ChaCha8Rng {
    // splitmix-style mixing of (seed, epoch) into the base key
    let mut z = seed ^ epoch.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    let mut rng = ChaCha8Rng::seed_from_u64(z);
    rng.set_stream(idx);
    rng
}

/// Mirror a coordinate into [0, 1]; terminates for any finite input.
fn reflect(mut x: f64) -> f64 {
    loop {
        if x < 0.0 {
            x = -x;
        } else if x > 1.0 {
            x = 2.0 - x;
        } else {
            return x;
        }
    }
}

impl ParticleEnsemble {
    /// Independent uniform positions on the unit square.
    pub fn uniform(n: usize, seed: u64) -> ParticleEnsemble {
        let positions = (0..n as u64)
            .into_par_iter()
            .map(|i| {
                let mut rng = stream_rng(seed, 0, i);
                [rng.gen::<f64>(), rng.gen::<f64>()]
            })
            .collect();
        ParticleEnsemble {
            positions,
            seed,
            time: 0.0,
            epoch: 1,
        }
    }

    /// Rejection sampling from a bounded density; `envelope` must
    /// dominate `f` on the square (a safety-factored grid maximum works
    /// for the smooth shapes used here).
    pub fn from_density(
        f: impl Fn([f64; 2]) -> f64 + Sync,
        envelope: f64,
        n: usize,
        seed: u64,
    ) -> ParticleEnsemble {
        assert!(envelope > 0.0);
        let positions = (0..n as u64)
            .into_par_iter()
            .map(|i| {
                let mut rng = stream_rng(seed, 0, i);
                loop {
                    let x = [rng.gen::<f64>(), rng.gen::<f64>()];
                    let u: f64 = rng.gen();
                    if u * envelope <= f(x) {
                        return x;
                    }
                }
            })
            .collect();
        ParticleEnsemble {
            positions,
            seed,
            time: 0.0,
            epoch: 1,
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// Advance the ensemble through the whole control horizon with
/// `substeps_per_dt` Euler-Maruyama substeps per control step. Control
/// coefficients are piecewise linear in time between the stored instants.
pub fn simulate(
    ensemble: &ParticleEnsemble,
    ctrl: &ControlTrajectory,
    basis: &ControlBasis,
    model: &ActuatorModel,
    mu: f64,
    substeps_per_dt: usize,
) -> Result<ParticleEnsemble> {
    assert!(substeps_per_dt >= 1);
    assert!(mu >= 0.0);
    let delta = ctrl.dt() / substeps_per_dt as f64;
    // a priori step guard so mirror reflection stays single-bounce in
    // essentially all cases and never wraps past the far wall
    let v_sup = (0..=ctrl.n_steps())
        .map(|i| crate::actuation::velocity_sup_norm(ctrl.instant(i), basis, model, 33))
        .fold(0.0f64, f64::max);
    let bound = v_sup * delta + 6.0 * (2.0 * mu * delta).sqrt();
    if bound >= 1.0 {
        return Err(Error::StepTooLarge(bound));
    }

    let total_steps = ctrl.n_steps() * substeps_per_dt;
    // shared per-substep coefficient blocks
    let instants: Vec<Vec<f64>> = (0..total_steps)
        .map(|k| ctrl.interpolate(k as f64 * delta))
        .collect();
    let noise_scale = (2.0 * mu * delta).sqrt();

    let positions: Result<Vec<[f64; 2]>> = ensemble
        .positions
        .par_iter()
        .enumerate()
        .map(|(idx, &start)| {
            let mut rng = stream_rng(ensemble.seed, ensemble.epoch, idx as u64);
            let mut x = start;
            for coeffs in &instants {
                let v = eval_velocity(coeffs, basis, model, x)?;
                let xi0: f64 = rng.sample(StandardNormal);
                let xi1: f64 = rng.sample(StandardNormal);
                x[0] = reflect(x[0] + v[0] * delta + noise_scale * xi0);
                x[1] = reflect(x[1] + v[1] * delta + noise_scale * xi1);
            }
            Ok(x)
        })
        .collect();

    Ok(ParticleEnsemble {
        positions: positions?,
        seed: ensemble.seed,
        time: ensemble.time + ctrl.n_steps() as f64 * ctrl.dt(),
        epoch: ensemble.epoch + 1,
    })
}

/// Histogram density on a bins x bins grid; integrates to one by
/// construction.
#[derive(Clone, Debug)]
pub struct BinnedDensity {
    pub bins: usize,
    /// Row-major cell values, normalized by cell area and particle count.
    pub values: Vec<f64>,
}

impl BinnedDensity {
    pub fn cell_area(&self) -> f64 {
        1.0 / (self.bins * self.bins) as f64
    }

    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.cell_area()
    }
}

pub fn empirical_density(ensemble: &ParticleEnsemble, bins_per_axis: usize) -> BinnedDensity {
    assert!(bins_per_axis >= 1 && !ensemble.is_empty());
    let b = bins_per_axis;
    let mut counts = vec![0usize; b * b];
    for p in &ensemble.positions {
        let i = ((p[0] * b as f64) as usize).min(b - 1);
        let j = ((p[1] * b as f64) as usize).min(b - 1);
        counts[j * b + i] += 1;
    }
    let cell_area = 1.0 / (b * b) as f64;
    let n = ensemble.len() as f64;
    BinnedDensity {
        bins: b,
        values: counts.iter().map(|&c| c as f64 / (n * cell_area)).collect(),
    }
}

/// L1 and L2 distances between a binned density and the bin averages of a
/// nodal field (each bin averaged over a 4x4 midpoint subgrid).
pub fn compare(binned: &BinnedDensity, field: &DensityField, mesh: &Mesh) -> Result<(f64, f64)> {
    let b = binned.bins;
    let sub = 4usize;
    let cell_area = binned.cell_area();
    let mut l1 = 0.0;
    let mut l2 = 0.0;
    for j in 0..b {
        for i in 0..b {
            let mut avg = 0.0;
            for sj in 0..sub {
                for si in 0..sub {
                    let x = (i as f64 + (si as f64 + 0.5) / sub as f64) / b as f64;
                    let y = (j as f64 + (sj as f64 + 0.5) / sub as f64) / b as f64;
                    avg += mesh.interpolate(&field.nodal, [x, y])?;
                }
            }
            avg /= (sub * sub) as f64;
            let d = (binned.values[j * b + i] - avg).abs();
            l1 += d * cell_area;
            l2 += d * d * cell_area;
        }
    }
    Ok((l1, l2.sqrt()))
}
