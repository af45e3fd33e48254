//! Experiment configuration: TOML with one block per subcommand plus the
//! shared `[run]`, `[model]`, `[ode]` and `[solver]` blocks.
//!
//! Every block rejects unknown keys. Omitted keys take the documented
//! defaults, but a subcommand that integrates the Lorenz system needs an
//! explicit `[ode]` block and one that uses the geometric model needs
//! `[model]`.

use std::path::{Path, PathBuf};

use lorenzlab_core::dimension::RadiiGrid;
use lorenzlab_core::ergodic::Segments;
use lorenzlab_core::model::ModelConfig;
use lorenzlab_core::ode::{Params3, Solver};
use lorenzlab_core::statistics::{CompactSet, FiberPsi, PrefactorCorrection, TRAPPING_BOX};
use serde::{Deserialize, Serialize};

use crate::error::LabError;

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub run: RunBlock,
    pub model: Option<ModelConfig>,
    pub ode: Option<Params3>,
    pub solver: Option<Solver>,
    pub simulate: Option<SimulateBlock>,
    pub lyapunov: Option<LyapunovBlock>,
    pub measure: Option<MeasureBlock>,
    pub dimension: Option<DimensionBlock>,
    pub hitting: Option<HittingBlock>,
    pub recurrence: Option<RecurrenceBlock>,
    pub loglaw: Option<HittingBlock>,
    pub correlations: Option<CorrelationsBlock>,
    pub deviations: Option<DeviationsBlock>,
    pub escape: Option<EscapeBlock>,
    pub lapcheck: Option<LapcheckBlock>,
    #[serde(rename = "diagnose-nue")]
    pub diagnose_nue: Option<NueBlock>,
    pub sensitivity: Option<SensitivityBlock>,
    pub entropy: Option<EntropyBlock>,
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunBlock {
    pub seed: u64,
    pub out: Option<PathBuf>,
    /// Defaults to the available parallelism. Never affects results.
    pub workers: Option<usize>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, LabError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LabError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, LabError> {
        toml::from_str(text).map_err(|e| LabError::Config(e.to_string()))
    }

    pub fn require_model(&self) -> Result<ModelConfig, LabError> {
        self.model.ok_or_else(|| LabError::Config("this subcommand needs a [model] block".into()))
    }

    pub fn require_ode(&self) -> Result<Params3, LabError> {
        self.ode.ok_or_else(|| LabError::Config("this subcommand needs an [ode] block".into()))
    }

    pub fn solver(&self) -> Solver {
        self.solver.unwrap_or(Solver::Rk4 { dt: 0.01 })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowOrMap {
    Flow,
    Map,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SimSystem {
    Ode,
    Model,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Down,
    Up,
    Both,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateBlock {
    pub system: SimSystem,
    pub initial: [f64; 3],
    pub t_final: f64,
    pub sample_dt: f64,
    /// Also emit crossings of the plane `z = section_z` (default `r - 1`).
    pub section: bool,
    pub section_z: Option<f64>,
    pub direction: Direction,
    /// Model orbit: start on the section and number of return-map steps.
    pub initial_section: [f64; 2],
    pub iterations: u64,
}

impl Default for SimulateBlock {
    fn default() -> Self {
        Self {
            system: SimSystem::Ode,
            initial: [1.0, 1.0, 20.0],
            t_final: 10.0,
            sample_dt: 0.01,
            section: false,
            section_z: None,
            direction: Direction::Down,
            initial_section: [0.1, 0.0],
            iterations: 1000,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct LyapunovBlock {
    pub system: FlowOrMap,
    pub initial: [f64; 3],
    pub horizon: f64,
    pub renorm_period: f64,
    pub dt: f64,
    pub transient: f64,
    pub trace_points: usize,
    pub x0: f64,
    pub iterations: u64,
}

impl Default for LyapunovBlock {
    fn default() -> Self {
        Self {
            system: FlowOrMap::Flow,
            initial: [1.0, 1.0, 20.0],
            horizon: 500.0,
            renorm_period: 1.0,
            dt: 5e-3,
            transient: 20.0,
            trace_points: 50,
            x0: 0.1234,
            iterations: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeasureBlock {
    pub system: FlowOrMap,
    pub observable: String,
    pub initial: [f64; 3],
    pub transient: f64,
    pub horizon: f64,
    pub x0: f64,
    pub iterations: u64,
    pub trace_points: usize,
    /// Bins of the quotient histogram (map) or per axis of the trapping box (flow).
    pub bins: usize,
    pub flow_bins: usize,
    /// Flow histogram sampling interval.
    pub sample_dt: f64,
}

impl Default for MeasureBlock {
    fn default() -> Self {
        Self {
            system: FlowOrMap::Map,
            observable: "x".into(),
            initial: [1.0, 1.0, 20.0],
            transient: 20.0,
            horizon: 1000.0,
            x0: 0.1234,
            iterations: 1_000_000,
            trace_points: 50,
            bins: 100,
            flow_bins: 20,
            sample_dt: 0.05,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct DimensionBlock {
    pub grid: RadiiGrid,
    pub probes: usize,
    pub segments: Segments,
    /// Laps feeding the flow dimension; one sample every `flow_dt`.
    pub flow_segments: Segments,
    pub flow_dt: f64,
    /// Probe height as a fraction of `r0`.
    pub probe_height: f64,
    pub min_ball_count: u64,
}

impl Default for DimensionBlock {
    fn default() -> Self {
        Self {
            grid: RadiiGrid::default(),
            probes: 10,
            segments: Segments { count: 100, len: 100_000, burn_in: 1000 },
            flow_segments: Segments { count: 1000, len: 100_000, burn_in: 1000 },
            flow_dt: 0.05,
            probe_height: 0.5,
            min_ball_count: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum HitSystem {
    Semiflow,
    Map,
}

/// Shared by `hitting` and `loglaw`.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct HittingBlock {
    pub system: HitSystem,
    pub grid: RadiiGrid,
    pub seeds: u64,
    /// Semiflow time or map iterations before a record is censored.
    pub max_time: f64,
    /// Target base point; drawn from the invariant measure when absent.
    pub target_x: Option<f64>,
    /// Target height as a fraction of `r0` (semiflow).
    pub probe_height: f64,
    /// Starts are pushed forward by a uniform time in `[0, start_spread]`.
    pub start_spread: f64,
    pub min_uncensored: u64,
    /// Samples for the local-dimension references (loglaw).
    pub segments: Segments,
    pub flow_segments: Segments,
    pub flow_dt: f64,
    pub min_ball_count: u64,
}

impl Default for HittingBlock {
    fn default() -> Self {
        Self {
            system: HitSystem::Semiflow,
            grid: RadiiGrid::default(),
            seeds: 200,
            max_time: 1e6,
            target_x: None,
            probe_height: 0.5,
            start_spread: 100.0,
            min_uncensored: 50,
            segments: Segments { count: 100, len: 100_000, burn_in: 1000 },
            flow_segments: Segments { count: 1000, len: 100_000, burn_in: 1000 },
            flow_dt: 0.05,
            min_ball_count: 100,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct RecurrenceBlock {
    pub grid: RadiiGrid,
    pub probes: u64,
    pub max_iter: u64,
    pub segments: Segments,
    pub min_ball_count: u64,
}

impl Default for RecurrenceBlock {
    fn default() -> Self {
        Self {
            grid: RadiiGrid::default(),
            probes: 1000,
            max_iter: 100_000_000,
            segments: Segments { count: 100, len: 100_000, burn_in: 1000 },
            min_ball_count: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrSource {
    Model,
    Doubling,
    Coin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrMode {
    Orbit,
    Ensemble,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorrelationsBlock {
    pub source: CorrSource,
    pub mode: CorrMode,
    pub g: String,
    pub f: String,
    pub max_lag: usize,
    pub segments: Segments,
    pub ensemble: u64,
}

impl Default for CorrelationsBlock {
    fn default() -> Self {
        Self {
            source: CorrSource::Model,
            mode: CorrMode::Orbit,
            g: "x".into(),
            f: "x".into(),
            max_lag: 10,
            segments: Segments { count: 40_000, len: 100_000, burn_in: 1000 },
            ensemble: 100_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DevSystem {
    Semiflow,
    Ode,
    Coin,
    Projection,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeviationsBlock {
    pub system: DevSystem,
    pub epsilon: f64,
    pub horizons: Vec<f64>,
    pub samples: u64,
    /// Flow observable for `ode`; the semiflow uses `psi(x, s) = x`.
    pub observable: String,
    pub correction: Option<PrefactorCorrection>,
    pub confidence: f64,
    /// Semiflow reference: independent segments of base laps.
    pub reference_segments: Segments,
    /// ODE reference: one orbit of this length after a transient.
    pub reference_initial: [f64; 3],
    pub reference_horizon: f64,
    pub reference_transient: f64,
    pub reference_batches: usize,
    /// Projection check.
    pub n_grid: Vec<usize>,
    pub delta: f64,
    pub psi: Option<FiberPsi>,
    pub psi_draws: u64,
    pub reference_len: u64,
}

impl Default for DeviationsBlock {
    fn default() -> Self {
        Self {
            system: DevSystem::Semiflow,
            epsilon: 0.1,
            horizons: (1..=10).map(|k| 20.0 * k as f64).collect(),
            samples: 100_000,
            observable: "x_over_20".into(),
            correction: None,
            confidence: 0.95,
            reference_segments: Segments { count: 100, len: 100_000, burn_in: 1000 },
            reference_initial: [1.0, 1.0, 20.0],
            reference_horizon: 1e6,
            reference_transient: 20.0,
            reference_batches: 100,
            n_grid: vec![1, 2, 4, 8, 16, 32, 64],
            delta: 0.03,
            psi: None,
            psi_draws: 10,
            reference_len: 100_000,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct EscapeBlock {
    /// Explicit set; default is the trapping box minus a ball around the
    /// heaviest cell of the reference orbit.
    pub set: Option<CompactSet>,
    pub lo: [f64; 3],
    pub hi: [f64; 3],
    pub ball_radius: f64,
    pub bins: usize,
    pub reference_horizon: f64,
    pub reference_transient: f64,
    pub initial: [f64; 3],
    pub horizons: Vec<f64>,
    pub samples: u64,
    pub check_dt: f64,
}

impl Default for EscapeBlock {
    fn default() -> Self {
        Self {
            set: None,
            lo: TRAPPING_BOX.0,
            hi: TRAPPING_BOX.1,
            ball_radius: 1.0,
            bins: 20,
            reference_horizon: 1000.0,
            reference_transient: 20.0,
            initial: [1.0, 1.0, 20.0],
            horizons: (1..=10).map(|k| 5.0 * k as f64).collect(),
            samples: 100_000,
            check_dt: 0.01,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct LapcheckBlock {
    pub checks: u64,
    pub horizon_min: f64,
    pub horizon_max: f64,
    pub ratio_horizon: f64,
    pub ratio_starts: u64,
    pub reference: Segments,
}

impl Default for LapcheckBlock {
    fn default() -> Self {
        Self {
            checks: 1000,
            horizon_min: 10.0,
            horizon_max: 200.0,
            ratio_horizon: 1e4,
            ratio_starts: 10,
            reference: Segments { count: 100, len: 100_000, burn_in: 1000 },
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct NueBlock {
    pub seeds: u64,
    pub n_grid: Vec<u64>,
    pub delta: f64,
    pub epsilon: f64,
}

impl Default for NueBlock {
    fn default() -> Self {
        Self { seeds: 10_000, n_grid: vec![100, 1000, 10_000], delta: 0.03, epsilon: 0.5 }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensitivityBlock {
    pub system: FlowOrMap,
    pub initial: [f64; 3],
    pub x0: f64,
    pub d0: f64,
    pub delta_star: f64,
    pub horizon: f64,
    pub sample_dt: f64,
    pub iterations: u64,
}

impl Default for SensitivityBlock {
    fn default() -> Self {
        Self {
            system: FlowOrMap::Flow,
            initial: [1.0, 1.0, 20.0],
            x0: 0.1234,
            d0: 1e-8,
            delta_star: 1.0,
            horizon: 60.0,
            sample_dt: 0.01,
            iterations: 200,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct EntropyBlock {
    pub k: usize,
    pub segments: Segments,
}

impl Default for EntropyBlock {
    fn default() -> Self {
        Self { k: 12, segments: Segments { count: 10, len: 100_000, burn_in: 1000 } }
    }
}

/// A resolved block, or the defaults when the block is absent.
pub fn block<T: Default + Clone>(b: &Option<T>) -> T {
    b.clone().unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_key_is_rejected() {
        let e = ExperimentConfig::parse("[ode]\na = 10.0\nr = 28.0\nb = 2.6\nrr = 1.0\n").unwrap_err();
        assert!(e.to_string().contains("rr"), "{e}");
        assert!(ExperimentConfig::parse("[simulate]\ntfinal = 1.0\n").is_err());
        assert!(ExperimentConfig::parse("[bogus]\n").is_err());
        assert!(ExperimentConfig::parse("[solver]\nkind = \"rk4\"\ndt = 0.01\nh = 1\n").is_err());
    }

    #[test]
    fn blocks_parse() {
        let c = ExperimentConfig::parse(
            "[run]\nseed = 7\n[model]\nlambda1 = 11.8\nB = 0.4\n[solver]\nkind = \"dopri45\"\nrtol = 1e-9\natol = 1e-12\nh_max = 0.1\n[diagnose-nue]\nseeds = 5\n",
        )
        .unwrap();
        assert_eq!(c.run.seed, 7);
        assert_eq!(c.model.unwrap().b_contract, 0.4);
        assert_eq!(c.model.unwrap().a_cusp, 0.3);
        assert!(matches!(c.solver(), Solver::Dopri45 { .. }));
        assert_eq!(c.diagnose_nue.unwrap().seeds, 5);
    }

    #[test]
    fn missing_system_block_is_reported() {
        let c = ExperimentConfig::parse("").unwrap();
        assert!(c.require_ode().is_err());
        assert!(c.require_model().is_err());
    }
}
