use lorenzlab_core::dimension::{
    flow_vs_section_dimension, hitting_times_map, hitting_times_suspension, local_dimension, loglaw_regression,
    recurrence_times_map, BallTally, HitRecord, LocalDimension, MassCurve,
};
use lorenzlab_core::ergodic::{IntervalMap, Segments, MODEL_DOMAIN};
use lorenzlab_core::model::{ModelParams, QuotientBase, Suspension};
use lorenzlab_core::rng::StreamRng;
use rayon::ThreadPool;
use serde::Serialize;
use serde_json::json;

use super::{check_segments, invariant_points, model, positive, subseed};
use crate::config::{block, ExperimentConfig, HitSystem};
use crate::error::{LabError, LabResult};
use crate::output::Cell;
use crate::par::{fold_chunks, map_chunks};
use crate::Env;

/// Probe centres sorted by coordinate, for visiting only the probes within
/// the largest radius of a sample.
struct ProbeIndex {
    sorted: Vec<(f64, usize)>,
}

impl ProbeIndex {
    fn new(xs: &[f64]) -> Self {
        let mut sorted: Vec<(f64, usize)> = xs.iter().copied().zip(0..).collect();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        Self { sorted }
    }

    #[inline]
    fn near<F: FnMut(usize, f64)>(&self, x: f64, r: f64, mut f: F) {
        let lo = self.sorted.partition_point(|p| p.0 < x - r);
        for &(px, i) in &self.sorted[lo..] {
            if px > x + r {
                break;
            }
            f(i, (x - px).abs());
        }
    }
}

const SEGMENT_CHUNK: u64 = 4;

/// Ball counts around each probe for samples of the quotient invariant measure.
pub(crate) fn section_tally(
    pool: &ThreadPool,
    m: &ModelParams,
    probes: &[f64],
    radii: &[f64],
    seg: &Segments,
    seed: u64,
) -> LabResult<BallTally> {
    let idx = ProbeIndex::new(probes);
    let r_max = *radii.last().unwrap();
    fold_chunks(
        pool,
        seg.count,
        SEGMENT_CHUNK,
        BallTally::new(probes.len(), radii.to_vec()),
        |range| {
            let mut t = BallTally::new(probes.len(), radii.to_vec());
            for i in range {
                seg.visit(m, MODEL_DOMAIN, seed, i, |x| {
                    idx.near(x, r_max, |p, d| t.add(p, d));
                    t.sample_done();
                });
            }
            Ok(t)
        },
        |a, b| a.merge(b),
    )
}

/// Ball counts in the max metric around `(probe, s0)` for the suspension
/// semiflow sampled every `dt` time units along independent segments.
pub(crate) fn flow_tally(
    pool: &ThreadPool,
    m: &ModelParams,
    probes: &[f64],
    s0: f64,
    radii: &[f64],
    seg: &Segments,
    dt: f64,
    seed: u64,
) -> LabResult<BallTally> {
    let idx = ProbeIndex::new(probes);
    let r_max = *radii.last().unwrap();
    fold_chunks(
        pool,
        seg.count,
        SEGMENT_CHUNK,
        BallTally::new(probes.len(), radii.to_vec()),
        |range| {
            let mut t = BallTally::new(probes.len(), radii.to_vec());
            for i in range {
                let mut x = seg.start(m, MODEL_DOMAIN, seed, i);
                let mut h = 0.0;
                for _ in 0..seg.len {
                    let r = m.r(x);
                    while h < r {
                        let dh = (h - s0).abs();
                        if dh <= r_max {
                            idx.near(x, r_max, |p, dx| t.add(p, dx.max(dh)));
                        }
                        t.sample_done();
                        h += dt;
                    }
                    h -= r;
                    match m.apply(x) {
                        Some(y) => x = y,
                        None => break,
                    }
                }
            }
            Ok(t)
        },
        |a, b| a.merge(b),
    )
}

#[derive(Serialize)]
struct DimEstimate {
    curve: Option<MassCurve>,
    estimate: Option<LocalDimension>,
    error: Option<String>,
}

fn estimate(t: &BallTally, p: usize, min_count: u64) -> DimEstimate {
    match t.curve(p, min_count).map_err(LabError::from).and_then(|c| Ok((local_dimension(&c)?, c))) {
        Ok((d, c)) => DimEstimate { curve: Some(c), estimate: Some(d), error: None },
        Err(e) => DimEstimate { curve: None, estimate: None, error: Some(e.to_string()) },
    }
}

fn mass_rows(rows: &mut Vec<Vec<Cell>>, probe: usize, kind: &str, e: &DimEstimate) {
    if let Some(c) = &e.curve {
        for i in 0..c.radii.len() {
            rows.push(vec![probe.into(), kind.into(), c.radii[i].into(), c.masses[i].into(), c.counts[i].into()]);
        }
    }
}

fn probe_height(h: f64) -> LabResult<()> {
    if h > 0.0 && h < 1.0 {
        Ok(())
    } else {
        Err(LabError::Config(format!("probe_height must lie in (0, 1), got {h}")))
    }
}

pub fn dimension(cfg: &ExperimentConfig, env: &mut Env) -> LabResult<()> {
    let b = block(&cfg.dimension);
    let m = model(cfg)?;
    b.grid.validate()?;
    check_segments(&b.segments, "segments")?;
    check_segments(&b.flow_segments, "flow_segments")?;
    positive(b.flow_dt, "flow_dt")?;
    probe_height(b.probe_height)?;
    if b.probes == 0 {
        return Err(LabError::Config("probes must be >= 1".into()));
    }
    env.begin(&json!({ "model": m.config(), "dimension": b }))?;
    let radii = b.grid.radii();
    let s0 = b.probe_height * m.r0;
    let probes = invariant_points(&m, subseed(env.seed, "probes"), b.probes as u64, b.segments.burn_in);
    let sec = section_tally(&env.pool, &m, &probes, &radii, &b.segments, subseed(env.seed, "section"))?;
    let flo = flow_tally(&env.pool, &m, &probes, s0, &radii, &b.flow_segments, b.flow_dt, subseed(env.seed, "flow"))?;
    let mut rows = Vec::new();
    let mut per_probe = Vec::new();
    let (mut ds, mut df) = (Vec::new(), Vec::new());
    for (p, &x) in probes.iter().enumerate() {
        let es = estimate(&sec, p, b.min_ball_count);
        let ef = estimate(&flo, p, b.min_ball_count);
        mass_rows(&mut rows, p, "section", &es);
        mass_rows(&mut rows, p, "flow", &ef);
        if let (Some(a), Some(c)) = (&es.estimate, &ef.estimate) {
            ds.push(a.clone());
            df.push(c.clone());
        }
        per_probe.push(json!({ "probe": p, "x": x, "s": s0, "section": es, "flow": ef }));
    }
    let pairs = if ds.is_empty() { None } else { Some(flow_vs_section_dimension(&ds, &df)?) };
    env.json(
        "report",
        &json!({
            "probes": per_probe, "pairs": pairs, "section_samples": sec.total, "flow_samples": flo.total,
        }),
    )?;
    env.csv("mass", &["probe_id", "kind", "r", "mass", "count"], rows)
}

fn records_csv(env: &mut Env, recs: &[HitRecord]) -> LabResult<()> {
    env.csv(
        "records",
        &["probe_id", "r", "tau", "censored", "seed"],
        recs.iter().map(|h| vec![h.probe.into(), h.r.into(), h.tau.into(), h.censored.into(), h.seed.into()]),
    )
}

pub fn hitting(cfg: &ExperimentConfig, env: &mut Env, loglaw: bool) -> LabResult<()> {
    let b = if loglaw { block(&cfg.loglaw) } else { block(&cfg.hitting) };
    let m = model(cfg)?;
    b.grid.validate()?;
    check_segments(&b.segments, "segments")?;
    check_segments(&b.flow_segments, "flow_segments")?;
    positive(b.max_time, "max_time")?;
    positive(b.flow_dt, "flow_dt")?;
    probe_height(b.probe_height)?;
    if !(b.start_spread >= 0.0) || b.seeds == 0 {
        return Err(LabError::Config("need start_spread >= 0 and seeds >= 1".into()));
    }
    if let Some(x) = b.target_x {
        if !(x.abs() > 0.0 && x.abs() <= 0.5) {
            return Err(LabError::Config(format!("target_x must lie in [-1/2, 1/2] minus 0, got {x}")));
        }
    }
    let sub = if loglaw { "loglaw" } else { "hitting" };
    env.begin(&json!({ "model": m.config(), sub: b }))?;
    let radii = b.grid.radii();
    let x0 = b.target_x.unwrap_or_else(|| invariant_points(&m, subseed(env.seed, "target"), 1, b.segments.burn_in)[0]);
    let s0 = b.probe_height * m.r0;
    let (start_seed, spread_seed) = (subseed(env.seed, "start_base"), subseed(env.seed, "start_time"));
    let susp = Suspension::new(QuotientBase(m));
    let seg = b.segments;
    let parts = map_chunks(&env.pool, b.seeds, 4, |range| {
        let mut out = Vec::new();
        for k in range {
            let xb = seg.start(&m, MODEL_DOMAIN, start_seed, k);
            let times = match b.system {
                HitSystem::Semiflow => {
                    let mut rng = StreamRng::new(spread_seed, k);
                    let q = susp.point(xb, rng.uniform() * m.r(xb))?;
                    let (q, _) = susp.evolve(&q, rng.uniform() * b.start_spread)?;
                    hitting_times_suspension(&susp, &q, (x0, s0), &radii, b.max_time)?
                }
                HitSystem::Map => hitting_times_map(&m, xb, x0, &radii, b.max_time as u64),
            };
            for (i, t) in times.iter().enumerate() {
                out.push(HitRecord {
                    probe: 0,
                    seed: k,
                    r: radii[i],
                    tau: t.unwrap_or(b.max_time),
                    censored: t.is_none(),
                });
            }
        }
        Ok(out)
    })?;
    let recs: Vec<HitRecord> = parts.into_iter().flatten().collect();
    let censored: Vec<u64> =
        radii.iter().map(|&r| recs.iter().filter(|h| h.r == r && h.censored).count() as u64).collect();
    let target = json!({ "x": x0, "s": if b.system == HitSystem::Semiflow { Some(s0) } else { None } });
    if loglaw {
        let sec = section_tally(&env.pool, &m, &[x0], &radii, &b.segments, subseed(env.seed, "section"))?;
        let es = estimate(&sec, 0, b.min_ball_count);
        let d_section = es
            .estimate
            .as_ref()
            .ok_or_else(|| {
                LabError::Precondition(format!("section dimension at target: {}", es.error.clone().unwrap()))
            })?
            .d_hat;
        let ef = if b.system == HitSystem::Semiflow {
            let flo =
                flow_tally(&env.pool, &m, &[x0], s0, &radii, &b.flow_segments, b.flow_dt, subseed(env.seed, "flow"))?;
            Some(estimate(&flo, 0, b.min_ball_count))
        } else {
            None
        };
        let d_flow = ef.as_ref().and_then(|e| e.estimate.as_ref().map(|d| d.d_hat));
        // Semiflow slopes estimate d_mu - 1 = d_F; map slopes estimate d_F.
        let rep = loglaw_regression(&recs, d_section, b.min_uncensored)?;
        env.json(
            "fit",
            &json!({
                "slope": rep.slope, "stderr": rep.stderr, "reference": rep.reference,
                "discrepancy_sigmas": rep.discrepancy_sigmas, "radii_used": rep.radii_used,
                "slope_error": (rep.slope - rep.reference).abs(),
                "fit": rep.fit, "per_radius": rep.per_radius, "flagged": rep.flagged,
                "target": target, "section_dimension": es, "flow_dimension": ef,
                "dimension_difference": d_flow.map(|d| d - (d_section + 1.0)),
            }),
        )?;
    } else {
        env.json("summary", &json!({ "target": target, "radii": radii, "seeds": b.seeds, "censored": censored }))?;
    }
    records_csv(env, &recs)
}

pub fn recurrence(cfg: &ExperimentConfig, env: &mut Env) -> LabResult<()> {
    let b = block(&cfg.recurrence);
    let m = model(cfg)?;
    b.grid.validate()?;
    check_segments(&b.segments, "segments")?;
    if b.probes == 0 || b.max_iter == 0 {
        return Err(LabError::Config("probes and max_iter must be >= 1".into()));
    }
    env.begin(&json!({ "model": m.config(), "recurrence": b }))?;
    let radii = b.grid.radii();
    let probes = invariant_points(&m, subseed(env.seed, "probes"), b.probes, b.segments.burn_in);
    let parts = map_chunks(&env.pool, b.probes, 16, |range| {
        let mut out = Vec::new();
        for p in range {
            let times = recurrence_times_map(&m, probes[p as usize], &radii, b.max_iter);
            for (i, t) in times.iter().enumerate() {
                out.push(HitRecord {
                    probe: p as usize,
                    seed: p,
                    r: radii[i],
                    tau: t.unwrap_or(b.max_iter as f64),
                    censored: t.is_none(),
                });
            }
        }
        Ok(out)
    })?;
    let recs: Vec<HitRecord> = parts.into_iter().flatten().collect();
    let sec = section_tally(&env.pool, &m, &probes, &radii, &b.segments, subseed(env.seed, "section"))?;
    let dims: Vec<f64> = (0..probes.len())
        .filter_map(|p| sec.curve(p, b.min_ball_count).ok().and_then(|c| local_dimension(&c).ok()).map(|d| d.d_hat))
        .collect();
    if dims.is_empty() {
        return Err(LabError::Precondition("no probe has a usable local dimension".into()));
    }
    let reference = dims.iter().sum::<f64>() / dims.len() as f64;
    let mut mean_log = Vec::new();
    let mut used = Vec::new();
    let mut cens = Vec::new();
    for &r in &radii {
        let (mut s, mut n, mut c) = (0.0, 0u64, 0u64);
        for h in recs.iter().filter(|h| h.r == r) {
            if h.censored {
                c += 1;
            } else {
                s += h.tau.ln();
                n += 1;
            }
        }
        mean_log.push(if n > 0 { s / n as f64 } else { f64::NAN });
        used.push(n);
        cens.push(c);
    }
    let secants: Vec<f64> =
        (0..radii.len() - 1).map(|i| (mean_log[i] - mean_log[i + 1]) / (radii[i + 1].ln() - radii[i].ln())).collect();
    let max_dev = secants.iter().map(|s| (s - reference).abs()).fold(0.0, f64::max);
    env.json(
        "report",
        &json!({
            "reference": reference, "probes_with_dimension": dims.len(), "radii": radii,
            "mean_log_tau": mean_log, "uncensored": used, "censored": cens,
            "secants": secants, "max_secant_deviation": max_dev, "section_samples": sec.total,
        }),
    )?;
    records_csv(env, &recs)
}
