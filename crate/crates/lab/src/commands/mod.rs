//! One function per subcommand. Each resolves its parameters (defaults
//! filled in), hands them to [`Env::begin`] for the manifest, computes, and
//! writes its files.

mod deviations;
mod dimension;
mod flow;
mod map;
mod stats;

use lorenzlab_core::ergodic::{Segments, MODEL_DOMAIN};
use lorenzlab_core::model::ModelParams;
use lorenzlab_core::ode::{Solver, State3};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::{LabError, LabResult};
use crate::Env;

pub fn dispatch(cfg: &ExperimentConfig, env: &mut Env) -> LabResult<()> {
    match env.subcommand {
        "simulate" => flow::simulate(cfg, env),
        "spectrum" => flow::spectrum(cfg, env),
        "lyapunov" => flow::lyapunov(cfg, env),
        "measure" => flow::measure(cfg, env),
        "sensitivity" => flow::sensitivity(cfg, env),
        "dimension" => dimension::dimension(cfg, env),
        "hitting" => dimension::hitting(cfg, env, false),
        "loglaw" => dimension::hitting(cfg, env, true),
        "recurrence" => dimension::recurrence(cfg, env),
        "correlations" => stats::correlations(cfg, env),
        "escape" => stats::escape(cfg, env),
        "lapcheck" => stats::lapcheck(cfg, env),
        "deviations" => deviations::deviations(cfg, env),
        "diagnose-nue" => map::diagnose_nue(cfg, env),
        "entropy" => map::entropy(cfg, env),
        other => Err(LabError::Config(format!("unknown subcommand {other:?}"))),
    }
}

/// Independent master seed for one use of randomness inside a run.
pub fn subseed(seed: u64, tag: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(tag.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().unwrap())
}

pub(crate) fn model(cfg: &ExperimentConfig) -> LabResult<ModelParams> {
    Ok(ModelParams::new(&cfg.require_model()?)?)
}

pub(crate) fn solver(cfg: &ExperimentConfig) -> LabResult<Solver> {
    let s = cfg.solver();
    s.validate()?;
    Ok(s)
}

pub(crate) fn state(a: [f64; 3]) -> LabResult<State3> {
    let s = State3::from_array(a);
    if !s.is_finite() {
        return Err(LabError::Config(format!("initial state {a:?} is not finite")));
    }
    Ok(s)
}

pub(crate) fn check_segments(s: &Segments, what: &str) -> LabResult<()> {
    Segments::new(s.count, s.len, s.burn_in).map_err(|e| LabError::Config(format!("{what}: {e}")))?;
    Ok(())
}

/// Points distributed by the invariant measure of the quotient map: ends of
/// burnt-in segments with uniform starts.
pub(crate) fn invariant_points(m: &ModelParams, seed: u64, n: u64, burn_in: u64) -> Vec<f64> {
    let seg = Segments { count: n, len: 1, burn_in };
    (0..n).map(|i| seg.start(m, MODEL_DOMAIN, seed, i)).collect()
}

pub(crate) fn positive(v: f64, what: &str) -> LabResult<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(LabError::Config(format!("{what} must be finite and > 0, got {v}")))
    }
}
