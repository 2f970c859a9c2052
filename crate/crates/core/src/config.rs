//! Run configuration: a sectioned, human-editable TOML file.
//!
//! ```toml
//! [problem]
//! mu = 0.1
//! alpha = 1e-4
//! decay = 1.0
//! t_final = 0.1
//! dt = 0.0025
//! u_max = 10.0
//! nx = 26
//! ny = 26
//! n_basis = 10
//! quad_order = 4
//!
//! [initial_density]
//! kind = "uniform"
//!
//! [target_density]
//! kind = "gaussian-mixture"
//! centers = [[0.25, 0.25], [0.75, 0.25], [0.5, 0.75]]
//! widths = [0.07, 0.07, 0.07]
//! weights = [1.0, 1.0, 1.0]
//! ```
//!
//! Optional `[optimizer]`, `[particles]` and `[output]` sections override
//! the defaults below.

use crate::actuation::{ActuatorModel, ControlBasis};
use crate::density::DensitySpec;
use crate::error::{Error, Result};
use crate::ocp::OptimizerOptions;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub problem: ModelConfig,
    pub initial_density: DensitySpec,
    pub target_density: DensitySpec,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub particles: ParticlesConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub mu: f64,
    pub alpha: f64,
    /// Actuator decay rate c.
    pub decay: f64,
    pub t_final: f64,
    pub dt: f64,
    pub u_max: f64,
    pub nx: usize,
    pub ny: usize,
    pub n_basis: usize,
    /// Gaussian basis width; defaults to 1 / n_basis.
    #[serde(default)]
    pub rbf_width: Option<f64>,
    #[serde(default = "default_quad_order")]
    pub quad_order: usize,
}

fn default_quad_order() -> usize {
    4
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub tol_g: Option<f64>,
    pub tol_f: f64,
    pub patience: usize,
    pub max_iters: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            tol_g: None,
            tol_f: 1e-9,
            patience: 5,
            max_iters: 500,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParticlesConfig {
    pub count: usize,
    pub seed: u64,
    pub substeps: usize,
    pub bins: usize,
}

impl Default for ParticlesConfig {
    fn default() -> Self {
        ParticlesConfig {
            count: 100_000,
            seed: 42,
            substeps: 1,
            bins: 10,
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: Option<String>,
}

impl ProblemConfig {
    /// Reference setup: unit-square workspace at 27x27 nodes, the usual
    /// scalars (mu 0.1, alpha 1e-4, T 0.1, dt 0.0025, 10 basis functions)
    /// and a three-bump target from a uniform start.
    pub fn baseline() -> ProblemConfig {
        ProblemConfig {
            problem: ModelConfig {
                mu: 0.1,
                alpha: 1e-4,
                decay: 1.0,
                t_final: 0.1,
                dt: 0.0025,
                u_max: 10.0,
                nx: 26,
                ny: 26,
                n_basis: 10,
                rbf_width: None,
                quad_order: 4,
            },
            initial_density: DensitySpec::Uniform,
            target_density: DensitySpec::GaussianMixture {
                centers: vec![[0.25, 0.25], [0.75, 0.25], [0.5, 0.75]],
                widths: vec![0.07, 0.07, 0.07],
                weights: vec![1.0, 1.0, 1.0],
            },
            optimizer: OptimizerConfig::default(),
            particles: ParticlesConfig::default(),
            output: OutputConfig::default(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<ProblemConfig> {
        let cfg: ProblemConfig =
            toml::from_str(text).map_err(|e| Error::config("<toml>", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Number of time steps N; t_final / dt must be a positive integer.
    pub fn n_steps(&self) -> Result<usize> {
        let ratio = self.problem.t_final / self.problem.dt;
        let n = ratio.round();
        if n < 1.0 || (ratio - n).abs() > 1e-9 * n.max(1.0) {
            return Err(Error::config(
                "problem.dt",
                format!("t_final / dt = {ratio} is not a positive integer"),
            ));
        }
        Ok(n as usize)
    }

    pub fn basis(&self) -> ControlBasis {
        let width = self
            .problem
            .rbf_width
            .unwrap_or(1.0 / self.problem.n_basis as f64);
        ControlBasis::gaussian(self.problem.n_basis, width)
    }

    pub fn model(&self) -> ActuatorModel {
        ActuatorModel::new(self.problem.decay, self.problem.u_max)
    }

    pub fn optimizer_options(&self) -> OptimizerOptions {
        OptimizerOptions {
            tol_g: self.optimizer.tol_g,
            tol_f: self.optimizer.tol_f,
            patience: self.optimizer.patience,
            max_iters: self.optimizer.max_iters,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.problem;
        let positive = [
            ("problem.mu", p.mu),
            ("problem.alpha", p.alpha),
            ("problem.t_final", p.t_final),
            ("problem.dt", p.dt),
            ("problem.u_max", p.u_max),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(name, format!("must be positive, got {v}")));
            }
        }
        if p.decay < 0.0 || !p.decay.is_finite() {
            return Err(Error::config("problem.decay", "must be nonnegative"));
        }
        if p.nx == 0 || p.ny == 0 {
            return Err(Error::config("problem.nx", "mesh resolution must be at least 1x1"));
        }
        if p.n_basis == 0 {
            return Err(Error::config("problem.n_basis", "need at least one basis function"));
        }
        if let Some(w) = p.rbf_width {
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::config("problem.rbf_width", "must be positive"));
            }
        }
        if !(2..=6).contains(&p.quad_order) {
            return Err(Error::config(
                "problem.quad_order",
                format!("supported range is 2..=6, got {}", p.quad_order),
            ));
        }
        self.n_steps()?;
        self.initial_density.validate()?;
        self.target_density.validate()?;
        if self.particles.count == 0 || self.particles.substeps == 0 || self.particles.bins == 0 {
            return Err(Error::config(
                "particles",
                "count, substeps and bins must be positive",
            ));
        }
        if self.optimizer.max_iters == 0 {
            return Err(Error::config("optimizer.max_iters", "must be positive"));
        }
        Ok(())
    }
}
