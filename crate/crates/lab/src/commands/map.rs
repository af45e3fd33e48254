use lorenzlab_core::ergodic::{
    entropy_plugin_estimate, itinerary, map_lyapunov, nue_seed, NueReport, NueSeed, MODEL_DOMAIN,
};
use lorenzlab_core::rng::StreamRng;
use serde_json::json;

use super::{check_segments, model, positive, subseed};
use crate::config::{block, ExperimentConfig};
use crate::error::{LabError, LabResult};
use crate::output::Cell;
use crate::par::map_chunks;
use crate::Env;

pub fn diagnose_nue(cfg: &ExperimentConfig, env: &mut Env) -> LabResult<()> {
    let b = block(&cfg.diagnose_nue);
    let m = model(cfg)?;
    positive(b.delta, "delta")?;
    positive(b.epsilon, "epsilon")?;
    if b.seeds == 0 || b.n_grid.is_empty() || b.n_grid.contains(&0) {
        return Err(LabError::Config("need seeds >= 1 and a non-empty n_grid of positive lengths".into()));
    }
    env.begin(&json!({ "model": m.config(), "diagnose-nue": b }))?;
    let seed = subseed(env.seed, "nue");
    let parts = map_chunks(&env.pool, b.seeds, 16, |range| {
        range
            .map(|i| {
                let x0 = StreamRng::new(seed, i).uniform_in(MODEL_DOMAIN.0, MODEL_DOMAIN.1);
                Ok((x0, nue_seed(&m, x0, &b.n_grid, b.delta)?))
            })
            .collect::<LabResult<Vec<_>>>()
    })?;
    let all: Vec<(f64, NueSeed)> = parts.into_iter().flatten().collect();
    let seeds: Vec<NueSeed> = all.iter().map(|s| s.1.clone()).collect();
    let rep = NueReport::from_seeds(&seeds, &b.n_grid, b.delta, b.epsilon)?;
    env.json(
        "report",
        &json!({
            "report": rep, "tail_decreasing": rep.tail_decreasing(),
            "expansion_bound": -(2f64.sqrt().ln()),
        }),
    )?;
    let mut header: Vec<String> =
        ["seed", "x0", "expansion_average", "visit_frequency", "max_visit_log", "partial"].map(String::from).to_vec();
    header.extend(b.n_grid.iter().map(|n| format!("recurrence_n{n}")));
    let hdr: Vec<&str> = header.iter().map(String::as_str).collect();
    env.csv(
        "seeds",
        &hdr,
        all.iter().enumerate().map(|(i, (x0, s))| {
            let mut row: Vec<Cell> = vec![
                i.into(),
                (*x0).into(),
                s.expansion_average.into(),
                s.visit_frequency.into(),
                s.max_visit_log.into(),
                s.partial.into(),
            ];
            row.extend(s.recurrence_averages.iter().map(|&v| Cell::F(v)));
            row
        }),
    )
}

pub fn entropy(cfg: &ExperimentConfig, env: &mut Env) -> LabResult<()> {
    let b = block(&cfg.entropy);
    let m = model(cfg)?;
    check_segments(&b.segments, "segments")?;
    env.begin(&json!({ "model": m.config(), "entropy": b }))?;
    let seed = subseed(env.seed, "entropy");
    let seg = b.segments;
    let parts = map_chunks(&env.pool, seg.count, 4, |range| {
        let mut out = Vec::new();
        for i in range {
            let x0 = seg.start(&m, MODEL_DOMAIN, seed, i);
            out.extend(itinerary(&m, x0, seg.len as usize)?);
        }
        Ok(out)
    })?;
    let symbols: Vec<u8> = parts.concat();
    let rep = entropy_plugin_estimate(&symbols, b.k)?;
    // Lyapunov exponent of the quotient map on the first segment, for comparison.
    let lyap = map_lyapunov(&m, seg.start(&m, MODEL_DOMAIN, seed, 0), seg.len, 0)?;
    let ph = env.params_hash();
    env.json(
        "report",
        &json!({
            "estimate": rep.estimate(), "horizon": rep.n, "params_hash": ph, "k_used": rep.k_used,
            "requested_k": rep.requested_k, "warnings": rep.warnings, "caveat": rep.caveat,
            "map_lyapunov": lyap.exponents[0],
        }),
    )?;
    env.csv(
        "blocks",
        &["k", "block_entropy", "difference"],
        (0..rep.block_entropies.len()).map(|i| {
            vec![
                (i + 1).into(),
                rep.block_entropies[i].into(),
                Cell::F(rep.differences.get(i).copied().unwrap_or(f64::NAN)),
            ]
        }),
    )
}
