//! Experiment configuration (JSON) and validation.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use ltpid_core::harmonic::required_samples_per_period;
use ltpid_core::{Integrator, Quadrature};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemConfig,
    /// Truncation order of the identified model.
    pub p: usize,
    pub grid: GridConfig,
    pub trajectories: TrajectoryConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default = "one")]
    pub trials: usize,
    /// Root seed; every trial derives its own streams from it.
    pub seed: u64,
    #[serde(default)]
    pub thresholds: Thresholds,
    /// Restricts the phasor error to `|k| ≤ error_harmonics` when set.
    #[serde(default)]
    pub error_harmonics: Option<usize>,
    #[serde(default)]
    pub validation: ValidationConfig,
    #[serde(default = "default_output")]
    pub output: PathBuf,
}

fn one() -> usize {
    1
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SystemConfig {
    Random {
        n: usize,
        m: usize,
        degree: usize,
        #[serde(default = "default_scale")]
        scale: f64,
        /// Scale of `B`; defaults to `scale`.
        #[serde(default)]
        input_scale: Option<f64>,
        seed: u64,
        #[serde(default = "unit_period")]
        period: f64,
    },
    ExampleB {
        #[serde(default = "default_k_sim")]
        k_sim: usize,
    },
    /// JSON phasor files; `b` absent for autonomous systems.
    File {
        a: PathBuf,
        #[serde(default)]
        b: Option<PathBuf>,
    },
}

fn default_scale() -> f64 {
    3.0
}

fn unit_period() -> f64 {
    1.0
}

fn default_k_sim() -> usize {
    200
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegratorKind {
    Rk4,
    CrankNicolson,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadratureKind {
    Trapezoidal,
    RightEndpoint,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// `N`, so that `dt = T/N`.
    pub samples_per_period: usize,
    #[serde(default = "default_substeps")]
    pub substeps: usize,
    #[serde(default = "default_integrator")]
    pub integrator: IntegratorKind,
    #[serde(default = "default_quadrature")]
    pub quadrature: QuadratureKind,
}

fn default_substeps() -> usize {
    8
}

fn default_integrator() -> IntegratorKind {
    IntegratorKind::Rk4
}

fn default_quadrature() -> QuadratureKind {
    QuadratureKind::Trapezoidal
}

impl GridConfig {
    pub fn integrator(&self) -> Integrator {
        match self.integrator {
            IntegratorKind::Rk4 => Integrator::Rk4 {
                substeps: self.substeps,
            },
            IntegratorKind::CrankNicolson => Integrator::CrankNicolson,
        }
    }

    pub fn quadrature(&self) -> Quadrature {
        match self.quadrature {
            QuadratureKind::Trapezoidal => Quadrature::Trapezoidal,
            QuadratureKind::RightEndpoint => Quadrature::RightEndpoint,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryConfig {
    pub count: usize,
    /// Samples per trajectory.
    pub length: usize,
    /// Total regression columns `L`; all frames are used when absent.
    #[serde(default)]
    pub columns: Option<usize>,
    #[serde(default = "one")]
    pub stride: usize,
    /// Initial states are uniform on `[-x0_range, x0_range]^n`.
    #[serde(default = "unit_period")]
    pub x0_range: f64,
    #[serde(default)]
    pub input: InputConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputConfig {
    pub degree: usize,
    /// `Σ_k ‖U_k‖₂` of every segment.
    pub amplitude: f64,
    /// Whole periods per segment.
    pub segment_periods: usize,
}

impl Default for InputConfig {
    fn default() -> Self {
        Self {
            degree: 10,
            amplitude: 1.0,
            segment_periods: 1,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    /// `3σ = ratio·|x_i(t)|`.
    pub ratio: f64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    pub noiseless_pct: f64,
    pub noisy_pct: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            noiseless_pct: 1e-3,
            noisy_pct: 15.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidationConfig {
    /// Length of the fresh trajectory in periods.
    pub horizon_periods: usize,
    /// Gate on trajectory NRMSE instead of the phasor error.
    #[serde(default)]
    pub use_nrmse: bool,
    #[serde(default = "default_nrmse_threshold")]
    pub nrmse_threshold_pct: f64,
}

fn default_nrmse_threshold() -> f64 {
    20.0
}

impl Default for ValidationConfig {
    fn default() -> Self {
        Self {
            horizon_periods: 2,
            use_nrmse: false,
            nrmse_threshold_pct: default_nrmse_threshold(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut config: Self =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        // phasor files are resolved next to the config
        if let SystemConfig::File { a, b } = &mut config.system {
            let base = path.parent().unwrap_or(Path::new("."));
            *a = base.join(&*a);
            if let Some(b) = b {
                *b = base.join(&*b);
            }
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        let big_n = self.grid.samples_per_period;
        let needed = required_samples_per_period(self.p);
        if big_n < needed {
            bail!(
                "samples_per_period = {big_n} is below {needed} required for p = {} (N >= 4p)",
                self.p
            );
        }
        if self.trajectories.length < 2 * big_n {
            bail!(
                "trajectory length {} spans less than 2 periods ({} samples)",
                self.trajectories.length,
                2 * big_n
            );
        }
        if self.trials < 1 {
            bail!("trials must be at least 1");
        }
        if self.trajectories.count < 1 {
            bail!("at least one trajectory is required");
        }
        if self.trajectories.stride < 1 || self.grid.substeps < 1 {
            bail!("stride and substeps must be at least 1");
        }
        if !(self.noise.ratio >= 0.0) {
            bail!("noise ratio must be non-negative");
        }
        if self.trajectories.input.segment_periods < 1 {
            bail!("input segments must be at least one period long");
        }
        if let Some(l) = self.trajectories.columns {
            let available = self.trajectories.count * self.frames_per_trajectory();
            if l > available {
                bail!("columns = {l} but {} trajectories provide only {available}", self.trajectories.count);
            }
        }
        if let SystemConfig::Random { n, scale, .. } = &self.system {
            if *n == 0 || !(*scale > 0.0) {
                bail!("random system needs n >= 1 and scale > 0");
            }
        }
        if let SystemConfig::ExampleB { k_sim } = &self.system {
            if *k_sim < 5 {
                bail!("k_sim must be at least 5");
            }
        }
        Ok(())
    }

    /// Regression columns contributed by one trajectory.
    pub fn frames_per_trajectory(&self) -> usize {
        let frames = self.trajectories.length - self.grid.samples_per_period;
        frames.div_ceil(self.trajectories.stride)
    }

    pub fn is_noisy(&self) -> bool {
        self.noise.ratio > 0.0
    }

    /// Phasor-error threshold matching the noise setting.
    pub fn threshold_pct(&self) -> f64 {
        if self.is_noisy() {
            self.thresholds.noisy_pct
        } else {
            self.thresholds.noiseless_pct
        }
    }

    /// Copy with `columns = l` and just enough trajectories to supply them.
    pub fn with_columns(&self, l: usize) -> Self {
        let mut c = self.clone();
        c.trajectories.count = l.div_ceil(self.frames_per_trajectory()).max(1);
        c.trajectories.columns = Some(l);
        c
    }
}

/// Built-in configurations.
pub mod presets {
    use super::*;

    pub const NAMES: &[&str] = &["example-a", "example-a-noisy", "example-b"];

    pub fn by_name(name: &str) -> Option<ExperimentConfig> {
        match name {
            "example-a" => Some(example_a()),
            "example-a-noisy" => Some(example_a_noisy()),
            "example-b" => Some(example_b()),
            _ => None,
        }
    }

    /// `n = 3, m = 2`, degree 10, `p = 10`, `dt = T/40`, `L = 105`. Phasor
    /// magnitudes are on the order of unnormalized standard normal draws.
    pub fn example_a() -> ExperimentConfig {
        ExperimentConfig {
            system: SystemConfig::Random {
                n: 3,
                m: 2,
                degree: 10,
                scale: 40.0,
                input_scale: None,
                seed: 2024,
                period: 1.0,
            },
            p: 10,
            grid: GridConfig {
                samples_per_period: 40,
                substeps: 8,
                integrator: IntegratorKind::CrankNicolson,
                quadrature: QuadratureKind::Trapezoidal,
            },
            trajectories: TrajectoryConfig {
                count: 3,
                length: 80,
                columns: Some(105),
                stride: 1,
                x0_range: 1.0,
                input: InputConfig {
                    degree: 10,
                    amplitude: 40.0,
                    segment_periods: 1,
                },
            },
            noise: NoiseConfig::default(),
            trials: 20,
            seed: 1,
            thresholds: Thresholds::default(),
            error_harmonics: None,
            validation: ValidationConfig::default(),
            output: default_output(),
        }
    }

    /// [`example_a`] with 5 % proportional noise and `L = 315`.
    pub fn example_a_noisy() -> ExperimentConfig {
        let mut c = example_a();
        c.noise = NoiseConfig { ratio: 0.05, seed: 99 };
        c.trajectories.columns = Some(315);
        c.trajectories.count = 8;
        c
    }

    /// `K_sim = 200`, `p = 25`, `dt = T/256`, 16 trajectories × 512 samples,
    /// error restricted to `|k| ≤ 10`.
    pub fn example_b() -> ExperimentConfig {
        ExperimentConfig {
            system: SystemConfig::ExampleB { k_sim: 200 },
            p: 25,
            grid: GridConfig {
                samples_per_period: 256,
                substeps: 8,
                integrator: IntegratorKind::Rk4,
                quadrature: QuadratureKind::Trapezoidal,
            },
            trajectories: TrajectoryConfig {
                count: 16,
                length: 512,
                columns: None,
                stride: 1,
                x0_range: 1.0,
                input: InputConfig {
                    degree: 25,
                    amplitude: 1.0,
                    segment_periods: 1,
                },
            },
            noise: NoiseConfig::default(),
            trials: 1,
            seed: 7,
            thresholds: Thresholds {
                noiseless_pct: 5.0,
                noisy_pct: 15.0,
            },
            error_harmonics: Some(10),
            validation: ValidationConfig {
                horizon_periods: 2,
                use_nrmse: true,
                nrmse_threshold_pct: 10.0,
            },
            output: default_output(),
        }
    }
}
