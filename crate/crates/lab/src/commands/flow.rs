use lorenzlab_core::ergodic::{
    birkhoff_flow, birkhoff_map, flow_lyapunov_spectrum, map_lyapunov, sensitivity_flow, sensitivity_map, Axis,
    EmpiricalHistogram, FlowLyapunovOptions, LyapunovReport,
};
use lorenzlab_core::model::{return_map, SectionPoint};
use lorenzlab_core::ode::{collect_section_events, equilibrium_spectrum, integrate, CrossingFilter, SectionDetector};
use lorenzlab_core::statistics::TRAPPING_BOX;
use serde::Serialize;
use serde_json::json;

use super::{model, positive, solver, state};
use crate::config::{block, Direction, ExperimentConfig, FlowOrMap, SimSystem};
use crate::error::{LabError, LabResult};
use crate::observables::{flow_observable, map_observable};
use crate::output::Cell;
use crate::Env;

pub fn simulate(cfg: &ExperimentConfig, env: &mut Env) -> LabResult<()> {
    let b = block(&cfg.simulate);
    match b.system {
        SimSystem::Ode => {
            let p = cfg.require_ode()?;
            let sv = solver(cfg)?;
            let s0 = state(b.initial)?;
            if !(b.t_final >= 0.0 && b.t_final.is_finite()) {
                return Err(LabError::Config(format!("t_final must be >= 0, got {}", b.t_final)));
            }
            positive(b.sample_dt, "sample_dt")?;
            let section_z = b.section_z.unwrap_or(p.r - 1.0);
            env.begin(&json!({ "ode": p, "solver": sv, "simulate": b, "section_z": section_z }))?;
            let tr = integrate(s0, &p, b.t_final, sv, b.sample_dt)?;
            env.csv(
                "trajectory",
                &["t", "x", "y", "z"],
                tr.iter().map(|(t, s)| vec![t.into(), s.x.into(), s.y.into(), s.z.into()]),
            )?;
            if b.section {
                let filter = match b.direction {
                    Direction::Down => CrossingFilter::Down,
                    Direction::Up => CrossingFilter::Up,
                    Direction::Both => CrossingFilter::Both,
                };
                let det = SectionDetector::new(section_z, filter).with_sample_dt(b.sample_dt);
                let ev = collect_section_events(s0, &p, sv, 0.0, b.t_final, &det)?;
                env.csv(
                    "section",
                    &["t", "x", "y", "direction"],
                    ev.iter()
                        .map(|e| vec![e.time.into(), e.point.x.into(), e.point.y.into(), (e.direction as i64).into()]),
                )?;
            }
        }
        SimSystem::Model => {
            let m = model(cfg)?;
            let [x, y] = b.initial_section;
            let mut p = SectionPoint::new(x, y)?;
            env.begin(&json!({ "model": m.config(), "simulate": b }))?;
            let mut rows = vec![vec![Cell::U(0), p.x.into(), p.y.into()]];
            for n in 1..=b.iterations {
                match return_map(&p, &m) {
                    Ok(q) => p = q,
                    Err(e) => {
                        eprintln!("orbit stopped after {} returns: {e}", n - 1);
                        break;
                    }
                }
                rows.push(vec![n.into(), p.x.into(), p.y.into()]);
            }
            env.csv("orbit", &["n", "x", "y"], rows)?;
        }
    }
    Ok(())
}

pub fn spectrum(cfg: &ExperimentConfig, env: &mut Env) -> LabResult<()> {
    let p = cfg.require_ode()?;
    env.begin(&json!({ "ode": p }))?;
    let s = equilibrium_spectrum(&p)?;
    let (alpha, beta) =
        if s.lorenz_like { (Some(-s.lambda3 / s.lambda1), Some(-s.lambda2 / s.lambda1)) } else { (None, None) };
    env.json(
        "report",
        &json!({
            "lambda1": s.lambda1,
            "lambda2": s.lambda2,
            "lambda3": s.lambda3,
            "sorted_descending": s.sorted_descending(),
            "lorenz_like": s.lorenz_like,
            "alpha": alpha,
            "beta": beta,
            "classical_regime": p.is_classical_regime(),
        }),
    )
}

#[derive(Serialize)]
struct LyapunovOut<'a> {
    estimate: &'a [f64],
    trace: &'a [(f64, Vec<f64>)],
    horizon: f64,
    params_hash: String,
    renorm_period: Option<f64>,
    max_log_derivative: Option<f64>,
    partial: bool,
    sum: f64,
    /// Flow only: the exact phase-volume contraction rate.
    divergence: Option<f64>,
    sum_relative_error: Option<f64>,
    /// Exponents within 0.02 of zero.
    near_zero: usize,
}

fn trace_csv(env: &mut Env, rep: &LyapunovReport) -> LabResult<()> {
    let k = rep.exponents.len();
    let names = ["lambda1", "lambda2", "lambda3"];
    let mut header = vec!["t"];
    header.extend_from_slice(&names[..k]);
    env.csv(
        "trace",
        &header,
        rep.trace.iter().map(|(t, v)| {
            let mut row = vec![Cell::F(*t)];
            row.extend(v.iter().map(|&x| Cell::F(x)));
            row
        }),
    )
}

pub fn lyapunov(cfg: &ExperimentConfig, env: &mut Env) -> LabResult<()> {
    let b = block(&cfg.lyapunov);
    let (rep, divergence) = match b.system {
        FlowOrMap::Flow => {
            let p = cfg.require_ode()?;
            let s0 = state(b.initial)?;
            env.begin(&json!({ "ode": p, "lyapunov": b }))?;
            let opts = FlowLyapunovOptions { dt: b.dt, transient: b.transient, trace_points: b.trace_points };
            (flow_lyapunov_spectrum(s0, &p, b.horizon, b.renorm_period, &opts)?, Some(p.divergence()))
        }
        FlowOrMap::Map => {
            let m = model(cfg)?;
            env.begin(&json!({ "model": m.config(), "lyapunov": b }))?;
            (map_lyapunov(&m, b.x0, b.iterations, b.trace_points)?, None)
        }
    };
    let sum: f64 = rep.exponents.iter().sum();
    let out = LyapunovOut {
        estimate: &rep.exponents,
        trace: &rep.trace,
        horizon: rep.horizon,
        params_hash: env.params_hash(),
        renorm_period: rep.renorm_period,
        max_log_derivative: rep.max_log_derivative,
        partial: rep.partial,
        sum,
        divergence,
        sum_relative_error: divergence.map(|d| ((sum - d) / d).abs()),
        near_zero: rep.exponents.iter().filter(|l| l.abs() < 0.02).count(),
    };
    env.json("report", &out)?;
    trace_csv(env, &rep)
}

pub fn measure(cfg: &ExperimentConfig, env: &mut Env) -> LabResult<()> {
    let b = block(&cfg.measure);
    match b.system {
        FlowOrMap::Map => {
            let m = model(cfg)?;
            let obs = map_observable(&b.observable, Some(&m))?;
            env.begin(&json!({ "model": m.config(), "measure": b }))?;
            let rep = birkhoff_map(&m, b.x0, &obs, b.iterations, b.trace_points)?;
            let mut h = EmpiricalHistogram::new(vec![Axis::new(-0.5, 0.5, b.bins)?])?;
            let mut x = b.x0;
            for _ in 0..rep.horizon as u64 {
                h.add(&[x]);
                x = m.f(x);
            }
            let ph = env.params_hash();
            env.json(
                "report",
                &json!({
                    "estimate": rep.average, "trace": rep.trace, "horizon": rep.horizon,
                    "params_hash": ph, "observable": obs.name, "regularity": obs.regularity,
                    "partial": rep.partial, "out_of_grid": h.out_of_grid,
                }),
            )?;
            let masses = h.masses();
            env.csv(
                "histogram",
                &["x_lo", "mass"],
                (0..masses.len()).map(|i| vec![h.lower_edges(i)[0].into(), masses[i].into()]),
            )
        }
        FlowOrMap::Flow => {
            let p = cfg.require_ode()?;
            let sv = solver(cfg)?;
            let s0 = state(b.initial)?;
            let obs = flow_observable(&b.observable)?;
            positive(b.sample_dt, "sample_dt")?;
            env.begin(&json!({ "ode": p, "solver": sv, "measure": b }))?;
            let rep = birkhoff_flow(s0, &p, sv, b.transient, b.horizon, &obs, b.trace_points)?;
            let (lo, hi) = TRAPPING_BOX;
            let axes = (0..3).map(|k| Axis::new(lo[k], hi[k], b.flow_bins)).collect::<Result<Vec<_>, _>>()?;
            let mut h = EmpiricalHistogram::new(axes)?;
            let tr = integrate(s0, &p, b.transient + b.horizon, sv, b.sample_dt)?;
            for (t, s) in tr.iter() {
                if t >= b.transient {
                    h.add(&s.to_array());
                }
            }
            let ph = env.params_hash();
            env.json(
                "report",
                &json!({
                    "estimate": rep.average, "trace": rep.trace, "horizon": rep.horizon,
                    "params_hash": ph, "observable": obs.name, "partial": rep.partial,
                    "out_of_grid": h.out_of_grid, "histogram_samples": h.total,
                }),
            )?;
            let masses = h.masses();
            env.csv(
                "histogram",
                &["x_lo", "y_lo", "z_lo", "mass"],
                (0..masses.len()).filter(|&i| masses[i] > 0.0).map(|i| {
                    let e = h.lower_edges(i);
                    vec![e[0].into(), e[1].into(), e[2].into(), masses[i].into()]
                }),
            )
        }
    }
}

pub fn sensitivity(cfg: &ExperimentConfig, env: &mut Env) -> LabResult<()> {
    let b = block(&cfg.sensitivity);
    let rep = match b.system {
        FlowOrMap::Flow => {
            let p = cfg.require_ode()?;
            let sv = solver(cfg)?;
            let s0 = state(b.initial)?;
            env.begin(&json!({ "ode": p, "solver": sv, "sensitivity": b }))?;
            sensitivity_flow(s0, &p, sv, b.d0, b.delta_star, b.horizon, b.sample_dt)?
        }
        FlowOrMap::Map => {
            let m = model(cfg)?;
            env.begin(&json!({ "model": m.config(), "sensitivity": b }))?;
            sensitivity_map(&m, b.x0, b.d0, b.delta_star, b.iterations)?
        }
    };
    let ph = env.params_hash();
    env.json(
        "report",
        &json!({
            "estimate": rep.exceed_time, "horizon": rep.horizon, "params_hash": ph,
            "delta_star": rep.delta_star, "censored": rep.censored(),
        }),
    )?;
    env.csv("curve", &["t", "distance"], rep.curve.iter().map(|&(t, d)| vec![t.into(), d.into()]))
}
