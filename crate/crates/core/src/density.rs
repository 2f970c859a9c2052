//! Declarative density shapes for initial and target distributions.
//!
//! Shapes are evaluated pointwise and normalized to unit mass only after
//! projection onto the mesh, so the parameters here need not integrate
//! to one.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DensitySpec {
    Uniform,
    /// Sum of isotropic Gaussian bumps.
    GaussianMixture {
        centers: Vec<[f64; 2]>,
        widths: Vec<f64>,
        weights: Vec<f64>,
    },
    /// Smoothed indicator of an annular sector; `angles` are radians
    /// measured counter-clockwise from the positive x1 axis, the sector
    /// spans from angles[0] to angles[1] going counter-clockwise.
    AnnulusSector {
        center: [f64; 2],
        radii: [f64; 2],
        angles: [f64; 2],
        smoothing: f64,
    },
}

impl DensitySpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            DensitySpec::Uniform => Ok(()),
            DensitySpec::GaussianMixture {
                centers,
                widths,
                weights,
            } => {
                if centers.is_empty() {
                    return Err(Error::config("density", "gaussian mixture needs at least one bump"));
                }
                if centers.len() != widths.len() || centers.len() != weights.len() {
                    return Err(Error::config(
                        "density",
                        "centers, widths and weights must have equal lengths",
                    ));
                }
                if widths.iter().any(|&w| w <= 0.0) || weights.iter().any(|&w| w <= 0.0) {
                    return Err(Error::config("density", "widths and weights must be positive"));
                }
                Ok(())
            }
            DensitySpec::AnnulusSector {
                radii, smoothing, ..
            } => {
                if radii[0] < 0.0 || radii[1] <= radii[0] {
                    return Err(Error::config("density", "need 0 <= r_inner < r_outer"));
                }
                if *smoothing <= 0.0 {
                    return Err(Error::config("density", "smoothing must be positive"));
                }
                Ok(())
            }
        }
    }

    /// Pointwise (unnormalized) value; nonnegative everywhere.
    pub fn eval(&self, x: [f64; 2]) -> f64 {
        match self {
            DensitySpec::Uniform => 1.0,
            DensitySpec::GaussianMixture {
                centers,
                widths,
                weights,
            } => centers
                .iter()
                .zip(widths)
                .zip(weights)
                .map(|((c, &w), &a)| {
                    let dx = x[0] - c[0];
                    let dy = x[1] - c[1];
                    a * (-(dx * dx + dy * dy) / (2.0 * w * w)).exp()
                })
                .sum(),
            DensitySpec::AnnulusSector {
                center,
                radii,
                angles,
                smoothing,
            } => {
                let dx = x[0] - center[0];
                let dy = x[1] - center[1];
                let r = (dx * dx + dy * dy).sqrt();
                let theta = dy.atan2(dx);
                let tau = 2.0 * std::f64::consts::PI;
                let span = (angles[1] - angles[0]).rem_euclid(tau);
                let span = if span == 0.0 { tau } else { span };
                let dtheta = (theta - angles[0]).rem_euclid(tau);
                let r_mid = 0.5 * (radii[0] + radii[1]);
                logistic((r - radii[0]) / smoothing)
                    * logistic((radii[1] - r) / smoothing)
                    * logistic(dtheta * r_mid / smoothing)
                    * logistic((span - dtheta) * r_mid / smoothing)
            }
        }
    }

    /// Max over an m x m grid; envelope for rejection sampling.
    pub fn grid_max(&self, m: usize) -> f64 {
        let m = m.max(2);
        let mut best: f64 = 0.0;
        for j in 0..m {
            for i in 0..m {
                let x = [i as f64 / (m - 1) as f64, j as f64 / (m - 1) as f64];
                best = best.max(self.eval(x));
            }
        }
        best
    }
}

fn logistic(t: f64) -> f64 {
    1.0 / (1.0 + (-t.clamp(-40.0, 40.0)).exp())
}
