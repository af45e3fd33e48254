use lorenzlab_core::model::{QuotientBase, Suspension};
use lorenzlab_core::rng::StreamRng;
use lorenzlab_core::statistics::{
    bernoulli_cramer_rate, coin_averages, fit_deviation_curve, ode_time_averages, reference_ode_mean,
    reference_suspension_mean, sample_box, sample_under_roof, suspension_time_averages, DeviationTally, FiberPsi,
    PrefactorCorrection, ProjectionSetup, ProjectionTally, ReferenceMean, TRAPPING_BOX,
};
use serde_json::json;

use super::{check_segments, invariant_points, model, positive, solver, state, subseed};
use crate::config::{block, DevSystem, DeviationsBlock, ExperimentConfig};
use crate::error::{LabError, LabResult};
use crate::observables::flow_observable;
use crate::output::Cell;
use crate::par::fold_chunks;
use crate::Env;

fn admit(r: &ReferenceMean, eps: f64) -> LabResult<()> {
    if r.admits(eps) {
        Ok(())
    } else {
        Err(LabError::Precondition(format!(
            "reference mean {} has standard error {} > epsilon/10 = {}",
            r.mean,
            r.stderr,
            eps / 10.0
        )))
    }
}

fn check_common(b: &DeviationsBlock) -> LabResult<()> {
    positive(b.epsilon, "epsilon")?;
    if b.horizons.is_empty() || b.horizons.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
        return Err(LabError::Config("horizons must be non-empty and positive".into()));
    }
    if b.horizons.windows(2).any(|w| w[0] >= w[1]) {
        return Err(LabError::Config("horizons must be strictly increasing".into()));
    }
    if b.samples == 0 || !(b.confidence > 0.0 && b.confidence < 1.0) {
        return Err(LabError::Config("need samples >= 1 and confidence in (0, 1)".into()));
    }
    Ok(())
}

/// Runs `sample(rng)` for every index and tallies the returned averages;
/// `None` marks a discarded sample.
fn tally<S>(env: &Env, b: &DeviationsBlock, reference: f64, chunk: u64, sample: S) -> LabResult<DeviationTally>
where
    S: Fn(&mut StreamRng) -> LabResult<Option<Vec<f64>>> + Sync + Send,
{
    let seed = subseed(env.seed, "deviations");
    let empty = DeviationTally::new(b.horizons.clone(), reference, b.epsilon)?;
    fold_chunks(
        &env.pool,
        b.samples,
        chunk,
        empty.clone(),
        |range| {
            let mut t = empty.clone();
            for i in range {
                let mut rng = StreamRng::new(seed, i);
                match sample(&mut rng)? {
                    Some(a) => t.record(&a),
                    None => t.discard(),
                }
            }
            Ok(t)
        },
        |a, o| a.merge(o),
    )
}

fn write_curve(
    env: &mut Env,
    b: &DeviationsBlock,
    t: &DeviationTally,
    reference: serde_json::Value,
    correction: PrefactorCorrection,
    extra: serde_json::Value,
) -> LabResult<()> {
    let curve = t.curve(b.confidence)?;
    let fit = fit_deviation_curve(&curve, correction);
    env.csv(
        "curve",
        &["horizon", "value", "stderr", "ci_lower", "ci_upper", "deviating", "samples"],
        (0..curve.horizons.len()).map(|i| {
            vec![
                curve.horizons[i].into(),
                curve.fractions[i].into(),
                curve.stderr[i].into(),
                curve.ci_lower[i].into(),
                curve.ci_upper[i].into(),
                curve.deviating[i].into(),
                Cell::U(curve.samples),
            ]
        }),
    )?;
    env.json(
        "fit",
        &json!({
            "reference": reference, "curve": curve, "fit": fit,
            "significant_decay": fit.significant_decay(), "extra": extra,
        }),
    )
}

pub fn deviations(cfg: &ExperimentConfig, env: &mut Env) -> LabResult<()> {
    let b = block(&cfg.deviations);
    match b.system {
        DevSystem::Semiflow => semiflow(cfg, env, b),
        DevSystem::Ode => ode(cfg, env, b),
        DevSystem::Coin => coin(env, b),
        DevSystem::Projection => projection(cfg, env, b),
    }
}

fn semiflow(cfg: &ExperimentConfig, env: &mut Env, b: DeviationsBlock) -> LabResult<()> {
    let m = model(cfg)?;
    check_common(&b)?;
    check_segments(&b.reference_segments, "reference_segments")?;
    env.begin(&json!({ "model": m.config(), "deviations": b, "observable": "x" }))?;
    // psi(x, s) = x, integrated over heights a..b of one lap.
    let fiber = |x: &f64, a: f64, bb: f64| x * (bb - a);
    let rs = &b.reference_segments;
    let starts = invariant_points(&m, subseed(env.seed, "reference"), rs.count, rs.burn_in);
    let reference = reference_suspension_mean(&QuotientBase(m), &starts, 0, rs.len, &fiber)?;
    admit(&reference, b.epsilon)?;
    let susp = Suspension::new(QuotientBase(m));
    let t = tally(env, &b, reference.mean, 500, |rng| {
        let (x, s) = sample_under_roof(rng, &m);
        let q = susp.point(x, s)?;
        Ok(suspension_time_averages(&susp, &q, &b.horizons, &fiber).ok())
    })?;
    let corr = b.correction.unwrap_or(PrefactorCorrection::None);
    write_curve(env, &b, &t, json!(reference), corr, json!(null))
}

fn ode(cfg: &ExperimentConfig, env: &mut Env, b: DeviationsBlock) -> LabResult<()> {
    let p = cfg.require_ode()?;
    let sv = solver(cfg)?;
    let psi = flow_observable(&b.observable)?;
    check_common(&b)?;
    positive(b.reference_horizon, "reference_horizon")?;
    let s0 = state(b.reference_initial)?;
    env.begin(&json!({ "ode": p, "solver": sv, "deviations": b }))?;
    let reference =
        reference_ode_mean(s0, &p, sv, b.reference_transient, b.reference_horizon, b.reference_batches, &psi.eval)?;
    admit(&reference, b.epsilon)?;
    let (lo, hi) = TRAPPING_BOX;
    let t = tally(env, &b, reference.mean, 100, |rng| {
        let x = sample_box(rng, lo, hi);
        Ok(Some(ode_time_averages(x, &p, sv, &b.horizons, &psi.eval)?))
    })?;
    let corr = b.correction.unwrap_or(PrefactorCorrection::None);
    write_curve(env, &b, &t, json!(reference), corr, json!(null))
}

fn coin(env: &mut Env, b: DeviationsBlock) -> LabResult<()> {
    check_common(&b)?;
    if b.horizons.iter().any(|t| t.fract() != 0.0) {
        return Err(LabError::Config("coin horizons must be whole numbers of tosses".into()));
    }
    env.begin(&json!({ "deviations": b }))?;
    let hs: Vec<u64> = b.horizons.iter().map(|&t| t as u64).collect();
    let t = tally(env, &b, 0.5, 10_000, |rng| Ok(Some(coin_averages(rng, &hs))))?;
    let corr = b.correction.unwrap_or(PrefactorCorrection::BahadurRao);
    // Deviations of the mean on either side; the two tails are equal.
    let rate = bernoulli_cramer_rate(0.5, b.epsilon);
    write_curve(env, &b, &t, json!({ "mean": 0.5 }), corr, json!({ "cramer_rate": rate }))
}

fn projection(cfg: &ExperimentConfig, env: &mut Env, b: DeviationsBlock) -> LabResult<()> {
    let m = model(cfg)?;
    positive(b.epsilon, "epsilon")?;
    positive(b.delta, "delta")?;
    if b.n_grid.is_empty() || b.n_grid.contains(&0) || b.samples == 0 {
        return Err(LabError::Config("need a non-empty n_grid of positive lengths and samples >= 1".into()));
    }
    env.begin(&json!({ "model": m.config(), "deviations": b }))?;
    let psis: Vec<FiberPsi> = match b.psi {
        Some(p) => vec![p],
        None => (0..b.psi_draws).map(|j| FiberPsi::random(&mut StreamRng::new(subseed(env.seed, "psi"), j))).collect(),
    };
    let x0 = invariant_points(&m, subseed(env.seed, "reference"), 1, b.reference_segments.burn_in)[0];
    let mut reports = Vec::new();
    let mut rows = Vec::new();
    for (j, psi) in psis.iter().enumerate() {
        let setup = ProjectionSetup::new(m, *psi, b.epsilon, b.delta, b.n_grid.clone(), b.reference_len, (x0, 0.0))?;
        let seed = subseed(env.seed, &format!("projection{j}"));
        let t = fold_chunks(
            &env.pool,
            b.samples,
            1000,
            ProjectionTally::new(b.n_grid.len()),
            |range| Ok(setup.run(seed, range)),
            |a, o| a.merge(o),
        )?;
        let rep = setup.report(&t);
        for r in &rep.rows {
            rows.push(vec![
                j.into(),
                r.n.into(),
                r.f_deviating.into(),
                r.zeta_deviating.into(),
                r.slow_recurrence.into(),
                r.violations.into(),
                r.beyond_burn_in.into(),
            ]);
        }
        reports.push(json!({ "report": rep, "violations_beyond_burn_in": rep.violations_beyond_burn_in() }));
    }
    env.json("projection", &json!({ "reports": reports }))?;
    env.csv(
        "projection",
        &["psi_index", "n", "f_deviating", "zeta_deviating", "slow_recurrence", "violations", "beyond_burn_in"],
        rows,
    )
}
