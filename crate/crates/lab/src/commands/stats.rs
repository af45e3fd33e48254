use lorenzlab_core::ergodic::{Doubling, IntervalMap, MODEL_DOMAIN};
use lorenzlab_core::model::{ModelParams, QuotientBase, SectionBase, SectionPoint, Suspension};
use lorenzlab_core::ode::{integrate, State3};
use lorenzlab_core::rng::StreamRng;
use lorenzlab_core::statistics::{
    escape_precheck, first_exit_time, heaviest_cell, lap_decomposition_check, mean_roof, sample_box, CompactSet,
    CorrTally, EscapeTally, FiberPsi, LapCheck,
};
use serde_json::json;

use super::{check_segments, invariant_points, model, positive, solver, state, subseed};
use crate::config::{block, CorrMode, CorrSource, ExperimentConfig};
use crate::error::{LabError, LabResult};
use crate::observables::{map_observable, MapFn};
use crate::output::Cell;
use crate::par::fold_chunks;
use crate::Env;

fn orbit_tally<M: IntervalMap + Sync>(
    env: &Env,
    map: &M,
    domain: (f64, f64),
    seg: &lorenzlab_core::ergodic::Segments,
    max_lag: usize,
    g: &MapFn,
    f: &MapFn,
    seed: u64,
) -> LabResult<CorrTally> {
    fold_chunks(
        &env.pool,
        seg.count,
        16,
        CorrTally::new(max_lag),
        |range| {
            let mut t = CorrTally::new(max_lag);
            for i in range {
                let x0 = seg.start(map, domain, seed, i);
                t.add_orbit(map, x0, 0, seg.len, g, f);
            }
            Ok(t)
        },
        |a, b| a.merge(b),
    )
}

fn ensemble_tally<M: IntervalMap + Sync>(
    env: &Env,
    map: &M,
    domain: (f64, f64),
    n: u64,
    max_lag: usize,
    g: &MapFn,
    f: &MapFn,
    seed: u64,
) -> LabResult<CorrTally> {
    fold_chunks(
        &env.pool,
        n,
        10_000,
        CorrTally::new(max_lag),
        |range| {
            let mut t = CorrTally::new(max_lag);
            for i in range {
                let mut rng = StreamRng::new(seed, i);
                t.add_member(map, rng.uniform_in(domain.0, domain.1), g, f);
            }
            Ok(t)
        },
        |a, b| a.merge(b),
    )
}

pub fn correlations(cfg: &ExperimentConfig, env: &mut Env) -> LabResult<()> {
    let b = block(&cfg.correlations);
    if b.max_lag == 0 {
        return Err(LabError::Config("max_lag must be >= 1".into()));
    }
    let seed = subseed(env.seed, "correlations");
    let tally = match b.source {
        CorrSource::Model => {
            let m = model(cfg)?;
            let (g, f) = (map_observable(&b.g, Some(&m))?, map_observable(&b.f, Some(&m))?);
            check_segments(&b.segments, "segments")?;
            env.begin(&json!({ "model": m.config(), "correlations": b }))?;
            match b.mode {
                CorrMode::Orbit => orbit_tally(env, &m, MODEL_DOMAIN, &b.segments, b.max_lag, &g.eval, &f.eval, seed)?,
                CorrMode::Ensemble => {
                    ensemble_tally(env, &m, MODEL_DOMAIN, b.ensemble, b.max_lag, &g.eval, &f.eval, seed)?
                }
            }
        }
        CorrSource::Doubling => {
            if b.mode == CorrMode::Orbit {
                return Err(LabError::Config(
                    "the doubling map collapses to 0 in floating point; use mode = \"ensemble\"".into(),
                ));
            }
            let (g, f) = (map_observable(&b.g, None)?, map_observable(&b.f, None)?);
            env.begin(&json!({ "correlations": b }))?;
            ensemble_tally(env, &Doubling, (0.0, 1.0), b.ensemble, b.max_lag, &g.eval, &f.eval, seed)?
        }
        CorrSource::Coin => {
            check_segments(&b.segments, "segments")?;
            env.begin(&json!({ "correlations": b }))?;
            let seg = b.segments;
            fold_chunks(
                &env.pool,
                seg.count,
                16,
                CorrTally::new(b.max_lag),
                |range| {
                    let mut t = CorrTally::new(b.max_lag);
                    for i in range {
                        let mut rng = StreamRng::new(seed, i);
                        let xs: Vec<f64> = (0..seg.len).map(|_| f64::from(u8::from(rng.bit()))).collect();
                        t.add_series(&xs, &xs);
                    }
                    Ok(t)
                },
                |a, b| a.merge(b),
            )?
        }
    };
    let (gn, fname) = match b.source {
        CorrSource::Coin => ("bit", "bit"),
        _ => (b.g.as_str(), b.f.as_str()),
    };
    let curve = tally.curve(gn, fname)?;
    let fit = curve.exponential_fit();
    // Rough per-lag standard error: the i.i.d. value sqrt(var g var f / N).
    let se = curve.noise_floor / 3.0;
    env.csv(
        "curve",
        &["lag", "value", "normalized", "stderr"],
        (0..curve.lags.len())
            .map(|i| vec![curve.lags[i].into(), curve.values[i].into(), curve.normalized[i].into(), se.into()]),
    )?;
    env.json("fit", &json!({ "curve": curve, "fit": fit }))
}

pub fn escape(cfg: &ExperimentConfig, env: &mut Env) -> LabResult<()> {
    let b = block(&cfg.escape);
    let p = cfg.require_ode()?;
    let sv = solver(cfg)?;
    let s0 = state(b.initial)?;
    positive(b.reference_horizon, "reference_horizon")?;
    positive(b.check_dt, "check_dt")?;
    if b.horizons.is_empty() || b.samples == 0 {
        return Err(LabError::Config("need horizons and samples >= 1".into()));
    }
    env.begin(&json!({ "ode": p, "solver": sv, "escape": b }))?;
    let tr = integrate(s0, &p, b.reference_transient + b.reference_horizon, sv, 0.05)?;
    let reference: Vec<State3> = tr.iter().filter(|(t, _)| *t >= b.reference_transient).map(|(_, s)| s).collect();
    let outside_box = reference.iter().filter(|s| !CompactSet::Box { lo: b.lo, hi: b.hi }.contains(s)).count();
    if outside_box > 0 {
        return Err(LabError::Precondition(format!(
            "{outside_box} reference samples leave the box {:?}..{:?}; it does not trap the attractor",
            b.lo, b.hi
        )));
    }
    let (k, center) = match b.set {
        Some(k) => (k, None),
        None => {
            let c = heaviest_cell(&reference, b.lo, b.hi, b.bins)?;
            (CompactSet::BoxMinusBall { lo: b.lo, hi: b.hi, center: c, radius: b.ball_radius }, Some(c))
        }
    };
    let outside = escape_precheck(&k, &reference)?;
    let (lo, hi) = k.bounds();
    let t_max = b.horizons.iter().copied().fold(0.0, f64::max);
    let seed = subseed(env.seed, "escape");
    let horizons = b.horizons.clone();
    let tally = fold_chunks(
        &env.pool,
        b.samples,
        500,
        EscapeTally::new(horizons.clone())?,
        |range| {
            let mut t = EscapeTally::new(horizons.clone())?;
            for i in range {
                let mut rng = StreamRng::new(seed, i);
                let x = sample_box(&mut rng, lo, hi);
                t.record(first_exit_time(x, &p, sv, &k, t_max, b.check_dt)?);
            }
            Ok(t)
        },
        |a, o| a.merge(o),
    )?;
    let curve = tally.curve(&k, outside)?;
    let fit = curve.fit();
    env.csv(
        "curve",
        &["horizon", "value", "stderr", "staying"],
        (0..curve.horizons.len()).map(|i| {
            vec![
                curve.horizons[i].into(),
                curve.staying_fractions[i].into(),
                curve.stderr[i].into(),
                curve.staying[i].into(),
            ]
        }),
    )?;
    env.json(
        "fit",
        &json!({
            "curve": curve, "fit": fit, "significant_decay": fit.significant_decay(),
            "heaviest_cell": center, "reference_samples": reference.len(),
        }),
    )
}

pub fn lapcheck(cfg: &ExperimentConfig, env: &mut Env) -> LabResult<()> {
    let b = block(&cfg.lapcheck);
    let m: ModelParams = model(cfg)?;
    check_segments(&b.reference, "reference")?;
    positive(b.horizon_min, "horizon_min")?;
    positive(b.ratio_horizon, "ratio_horizon")?;
    if !(b.horizon_max >= b.horizon_min) {
        return Err(LabError::Config("horizon_max must be >= horizon_min".into()));
    }
    env.begin(&json!({ "model": m.config(), "lapcheck": b }))?;
    let base = SectionBase(m);
    let susp = Suspension::new(base);
    let starts = invariant_points(&m, subseed(env.seed, "roof"), b.reference.count, b.reference.burn_in);
    let mu_r = mean_roof(&QuotientBase(m), &starts, 0, b.reference.len)?;
    let seed = subseed(env.seed, "lapcheck");
    let draw = |rng: &mut StreamRng| -> LabResult<_> {
        let p = SectionPoint::new(rng.uniform_in(-0.5, 0.5), rng.uniform_in(-0.5, 0.5))?;
        let s = rng.uniform() * m.r(p.x);
        Ok((susp.point(p, s)?, FiberPsi::random(rng)))
    };
    let run = |i: u64, horizon: Option<f64>| -> LabResult<(FiberPsi, LapCheck)> {
        let mut rng = StreamRng::new(seed, i);
        let (q, psi) = draw(&mut rng)?;
        let t = horizon.unwrap_or_else(|| rng.uniform_in(b.horizon_min, b.horizon_max));
        let c = lap_decomposition_check(&susp, &q, |p: &SectionPoint, h| psi.eval(p.x, p.y, h), t, Some(mu_r))?;
        Ok((psi, c))
    };
    let total = b.checks + b.ratio_starts;
    let checks: Vec<(String, FiberPsi, LapCheck)> = fold_chunks(
        &env.pool,
        total,
        50,
        Vec::new(),
        |range| {
            range
                .map(|i| {
                    if i < b.checks {
                        run(i, None).map(|(p, c)| ("identity".to_string(), p, c))
                    } else {
                        run(i, Some(b.ratio_horizon)).map(|(p, c)| ("ratio".to_string(), p, c))
                    }
                })
                .collect()
        },
        |a, o| a.extend(o.iter().cloned()),
    )?;
    let identity: Vec<&LapCheck> = checks.iter().filter(|c| c.0 == "identity").map(|c| &c.2).collect();
    let ratio: Vec<&LapCheck> = checks.iter().filter(|c| c.0 == "ratio").map(|c| &c.2).collect();
    let max_residual = identity.iter().map(|c| c.residual).fold(0.0, f64::max);
    let max_ratio = ratio.iter().filter_map(|c| c.ratio_discrepancy).fold(0.0, f64::max);
    env.json(
        "report",
        &json!({
            "mean_roof": mu_r, "checks": identity.len(),
            "identity_holds": identity.iter().all(|c| c.identity_holds()),
            "partial": identity.iter().filter(|c| c.partial).count(),
            "max_residual": max_residual, "ratio_checks": ratio.len(),
            "max_ratio_discrepancy": max_ratio,
        }),
    )?;
    env.csv(
        "checks",
        &[
            "index",
            "kind",
            "horizon",
            "laps",
            "time_average",
            "lap_average",
            "boundary",
            "residual",
            "lap_ratio",
            "expected_ratio",
            "ratio_discrepancy",
            "partial",
        ],
        checks.iter().enumerate().map(|(i, (kind, _, c))| {
            vec![
                i.into(),
                kind.as_str().into(),
                c.horizon.into(),
                c.laps.into(),
                c.time_average.into(),
                c.lap_average.into(),
                c.boundary.into(),
                c.residual.into(),
                c.lap_ratio.into(),
                Cell::F(c.expected_ratio.unwrap_or(f64::NAN)),
                Cell::F(c.ratio_discrepancy.unwrap_or(f64::NAN)),
                c.partial.into(),
            ]
        }),
    )
}
