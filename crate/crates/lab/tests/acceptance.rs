//! Acceptance criteria, one PASS/FAIL line each. Runs without the libtest
//! harness: `cargo test -p lorenzlab --test acceptance`.

use std::fs;
use std::path::Path;
use std::time::Instant;

use lorenzlab::{run, ExperimentConfig, Overrides};
use lorenzlab_core::dimension::{ball_mass_curve, local_dimension, MassCurve, RadiiGrid};
use lorenzlab_core::model::{return_map, ModelParams, QuotientBase, SectionPoint, Suspension, SuspensionBase};
use lorenzlab_core::rng::StreamRng;
use serde_json::Value;

const ODE: &str = "[ode]\na = 10.0\nr = 28.0\nb = 2.6666666666666665\n";
const SEED: &str = "[run]\nseed = 20240601\n";

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Runs `sub` with `toml` into a fresh directory and returns the directory.
fn lab(sub: &str, toml: &str, workers: Option<usize>) -> Result<tempfile::TempDir, String> {
    let cfg = ExperimentConfig::parse(&format!("{SEED}{toml}")).map_err(|e| format!("config: {e}"))?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    run(sub, &cfg, &Overrides { out: Some(dir.path().into()), workers, ..Default::default() })
        .map_err(|e| format!("{sub} failed: {e}"))?;
    Ok(dir)
}

fn json(dir: &Path, name: &str) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join(name)).unwrap()).unwrap()
}

fn f(v: &Value) -> f64 {
    v.as_f64().unwrap_or(f64::NAN)
}

fn floats(v: &Value) -> Vec<f64> {
    v.as_array().map(|a| a.iter().map(f).collect()).unwrap_or_default()
}

fn c01_spectrum() -> Outcome {
    let t = Instant::now();
    let d = lab("spectrum", ODE, None)?;
    let secs = t.elapsed().as_secs_f64();
    let v = json(d.path(), "spectrum_report.json");
    let want = [11.827723451163456, -22.827723451163456, -8.0 / 3.0];
    let got = [f(&v["lambda1"]), f(&v["lambda2"]), f(&v["lambda3"])];
    let err = got.iter().zip(want).map(|(g, w)| (g - w).abs()).fold(0.0, f64::max);
    check(
        err <= 1e-3 && v["lorenz_like"] == true && secs < 1.0,
        format!("max error {err:.2e}, lorenz_like {}, {secs:.3}s", v["lorenz_like"]),
    )
}

fn c02_lyapunov() -> Outcome {
    let t = Instant::now();
    let d = lab("lyapunov", &format!("{ODE}[lyapunov]\nhorizon = 500.0\n"), None)?;
    let secs = t.elapsed().as_secs_f64();
    let v = json(d.path(), "lyapunov_report.json");
    let e = floats(&v["estimate"]);
    let near_zero = e.iter().filter(|l| l.abs() < 0.02).count();
    let sum_err = (e.iter().sum::<f64>() + 41.0 / 3.0).abs() / (41.0 / 3.0);
    check(
        e.len() == 3 && near_zero == 1 && e[0] > 0.0 && sum_err <= 0.02 && secs < 60.0,
        format!("spectrum {e:.4?}, sum error {sum_err:.2e}, {secs:.1}s"),
    )
}

fn c03_structure() -> Outcome {
    let m = ModelParams::classical();
    let c = m.contraction_factor();
    let n = 1_000_000;
    let mut rng = StreamRng::new(3, 0);
    let (mut foliation, mut expansion, mut contraction, mut domain) = (0u64, f64::INFINITY, 0.0f64, 0u64);
    let (mut neg_max, mut pos_min) = (f64::NEG_INFINITY, f64::INFINITY);
    for i in 0..n {
        // Grid over (-1/2, 1/2) avoiding 0 exactly.
        let x = -0.5 + (i as f64 + 0.5) / n as f64;
        expansion = expansion.min(m.df(x));
        let (y1, y2) = (rng.uniform_in(-0.5, 0.5), rng.uniform_in(-0.5, 0.5));
        let p1 = SectionPoint::new(x, y1).unwrap();
        let p2 = SectionPoint::new(x, y2).unwrap();
        let (a, b) = (return_map(&p1, &m).unwrap(), return_map(&p2, &m).unwrap());
        if a.x != b.x {
            foliation += 1;
        }
        if a.x.abs() > 0.5 || a.y.abs() > 0.5 {
            domain += 1;
        }
        if y1 != y2 {
            contraction = contraction.max((a.y - b.y).abs() / (y1 - y2).abs());
        }
        for p in [a, b] {
            if x < 0.0 {
                neg_max = neg_max.max(p.y);
            } else {
                pos_min = pos_min.min(p.y);
            }
        }
    }
    check(
        foliation == 0
            && expansion >= std::f64::consts::SQRT_2
            && contraction <= c * (1.0 + 1e-12)
            && neg_max < pos_min
            && domain == 0,
        format!(
            "foliation breaks {foliation}, min f' {expansion:.6}, fiber ratio {contraction:.4} <= {c:.4}, \
             branch gap {:.4}, out of square {domain}",
            pos_min - neg_max
        ),
    )
}

fn c04_semigroup() -> Outcome {
    let m = ModelParams::classical();
    let s = Suspension::new(QuotientBase(m));
    let mut rng = StreamRng::new(4, 0);
    let (mut worst, mut lap_breaks, mut base_breaks) = (0.0f64, 0u64, 0u64);
    for _ in 0..10_000 {
        let x = rng.uniform_in(-0.5, 0.5);
        let r = s.base.roof(&x).map_err(|e| e.to_string())?;
        let q = s.point(x, rng.uniform() * r).map_err(|e| e.to_string())?;
        let (t, u) = (rng.uniform_in(0.0, 20.0), rng.uniform_in(0.0, 20.0));
        let (a, na) = s.evolve(&q, t).map_err(|e| e.to_string())?;
        let (ab, nb) = s.evolve(&a, u).map_err(|e| e.to_string())?;
        let (direct, nd) = s.evolve(&q, t + u).map_err(|e| e.to_string())?;
        if na + nb != nd {
            lap_breaks += 1;
            continue;
        }
        if ab.base != direct.base {
            base_breaks += 1;
        }
        worst = worst.max((ab.s - direct.s).abs());
    }
    check(
        worst <= 1e-10 && lap_breaks == 0 && base_breaks == 0,
        format!("max height error {worst:.2e}, lap mismatches {lap_breaks}, base mismatches {base_breaks}"),
    )
}

fn c05_dimension_fixtures() -> Outcome {
    let radii = RadiiGrid::new(1e-3, 1e-1, 9).unwrap().radii();
    let mut planted = 0.0f64;
    for d in [0.5, 1.0, 1.7, 2.0, 2.06] {
        let masses: Vec<f64> = radii.iter().map(|r| 0.3 * r.powf(d)).collect();
        let est = local_dimension(&MassCurve::from_masses(&radii, &masses)).map_err(|e| e.to_string())?;
        planted = planted.max((est.d_hat - d).abs());
    }
    let grid = RadiiGrid::new(0.01, 0.2, 7).unwrap();
    let mut rng = StreamRng::new(5, 0);
    let n = 2_000_000;
    let segment: Vec<f64> = (0..n).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
    let d1 = local_dimension(&ball_mass_curve(&segment, |x| x.abs(), &grid).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?
        .d_hat;
    let mut disk = Vec::with_capacity(n);
    while disk.len() < n {
        let (x, y) = (rng.uniform_in(-1.0, 1.0), rng.uniform_in(-1.0, 1.0));
        if x * x + y * y <= 1.0 {
            disk.push((x, y));
        }
    }
    let d2 = local_dimension(&ball_mass_curve(&disk, |p| p.0.hypot(p.1), &grid).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?
        .d_hat;
    check(
        planted <= 1e-12 && (d1 - 1.0).abs() <= 0.05 && (d2 - 2.0).abs() <= 0.05,
        format!("planted slope error {planted:.1e}, segment {d1:.4}, disk {d2:.4}"),
    )
}

fn c06_loglaw() -> Outcome {
    let d = lab("loglaw", &format!("{ODE}[model]\n[loglaw]\n"), None)?;
    let v = json(d.path(), "loglaw_fit.json");
    let (slope, reference, diff) = (f(&v["slope"]), f(&v["reference"]), f(&v["dimension_difference"]));
    check(
        (slope - reference).abs() <= 0.2 && diff.abs() <= 0.15,
        format!("slope {slope:.4} vs section dimension {reference:.4}, flow minus section minus 1 = {diff:.4}"),
    )
}

fn c07_recurrence() -> Outcome {
    let d = lab("recurrence", "[model]\n[recurrence]\n", None)?;
    let v = json(d.path(), "recurrence_report.json");
    let reference = f(&v["reference"]);
    let secants = floats(&v["secants"]);
    let worst = secants.iter().map(|s| (s - reference).abs()).fold(0.0, f64::max);
    check(
        !secants.is_empty() && worst <= 0.25,
        format!("reference {reference:.4}, secants {secants:.3?}, max deviation {worst:.3}"),
    )
}

fn c08_correlations() -> Outcome {
    let d = lab("correlations", "[model]\n[correlations]\n", None)?;
    let v = json(d.path(), "correlations_fit.json");
    let fit = &v["fit"]["fit"];
    let (slope, r2, usable) = (f(&fit["slope"]), f(&fit["r_squared"]), v["fit"]["usable_lags"].as_u64().unwrap_or(0));
    let model_ok = slope < 0.0 && r2 >= 0.9 && usable >= 5;

    let d = lab("correlations", "[correlations]\nsource = \"coin\"\nmode = \"ensemble\"\n", None)?;
    let v = json(d.path(), "correlations_fit.json");
    let coin = floats(&v["curve"]["values"]);
    let coin_tail = coin.iter().skip(1).map(|c| c.abs() / coin[0]).fold(0.0, f64::max);
    let coin_ok = (coin[0] - 0.25).abs() <= 0.02 * 0.25 && coin_tail <= 0.02;

    let d = lab(
        "correlations",
        "[correlations]\nsource = \"doubling\"\nmode = \"ensemble\"\ng = \"cos2pix\"\nf = \"cos2pix\"\n",
        None,
    )?;
    let v = json(d.path(), "correlations_fit.json");
    let dy = floats(&v["curve"]["values"]);
    let dy_tail = dy.iter().skip(1).map(|c| c.abs() / dy[0]).fold(0.0, f64::max);
    let dy_ok = (dy[0] - 0.5).abs() <= 0.02 * 0.5 && dy_tail <= 0.02;
    check(
        model_ok && coin_ok && dy_ok,
        format!(
            "model slope {slope:.3} R2 {r2:.3} usable {usable}; coin C0 {:.4} tail {coin_tail:.4}; \
             doubling C0 {:.4} tail {dy_tail:.4}",
            coin[0], dy[0]
        ),
    )
}

fn c09_deviations() -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for (name, toml) in [
        ("semiflow", "[model]\n[deviations]\nsamples = 100000\n".to_string()),
        ("ode", format!("{ODE}[deviations]\nsystem = \"ode\"\nsamples = 100000\n")),
    ] {
        let d = lab("deviations", &toml, None)?;
        let v = json(d.path(), "deviations_fit.json");
        let (slope, sig) = (f(&v["fit"]["fit"]["slope"]), f(&v["fit"]["significance"]));
        ok &= slope < 0.0 && sig >= 2.0;
        parts.push(format!("{name} slope {slope:.4} ({sig:.1} sigma)"));
    }
    let horizons: Vec<String> = (2..=14).map(|k| format!("{}.0", 10 * k)).collect();
    let d = lab(
        "deviations",
        &format!(
            "[deviations]\nsystem = \"coin\"\nsamples = 1000000\nepsilon = 0.2\nhorizons = [{}]\n",
            horizons.join(", ")
        ),
        None,
    )?;
    let v = json(d.path(), "deviations_fit.json");
    let (rate, cramer) = (f(&v["fit"]["rate"]), f(&v["extra"]["cramer_rate"]));
    let rel = (rate - cramer).abs() / cramer;
    ok &= rel <= 0.1;
    parts.push(format!("coin rate {rate:.5} vs {cramer:.5} ({:.1}%)", 100.0 * rel));
    check(ok, parts.join("; "))
}

fn c10_escape() -> Outcome {
    let d = lab("escape", &format!("{ODE}[escape]\n"), None)?;
    let v = json(d.path(), "escape_fit.json");
    let (slope, sig) = (f(&v["fit"]["fit"]["slope"]), f(&v["fit"]["significance"]));
    let fr = floats(&v["curve"]["staying_fractions"]);
    let monotone = fr.windows(2).all(|w| w[1] <= w[0]);
    check(slope < 0.0 && sig >= 2.0 && monotone, format!("slope {slope:.4} ({sig:.1} sigma), fractions {fr:.3?}"))
}

fn c11_lapcheck() -> Outcome {
    let d = lab("lapcheck", "[model]\n[lapcheck]\n", None)?;
    let v = json(d.path(), "lapcheck_report.json");
    let (res, ratio) = (f(&v["max_residual"]), f(&v["max_ratio_discrepancy"]));
    check(
        res <= 1e-8 && v["identity_holds"] == true && ratio <= 0.02,
        format!("max residual {res:.2e}, identity {}, ratio discrepancy {ratio:.2e}", v["identity_holds"]),
    )
}

fn c12_nue() -> Outcome {
    let d = lab("diagnose-nue", "[model]\n[diagnose-nue]\n", None)?;
    let v = json(d.path(), "diagnose-nue_report.json");
    let max_exp = f(&v["report"]["max_expansion_average"]);
    let fr = floats(&v["report"]["tail_fractions"]);
    check(
        max_exp <= -std::f64::consts::SQRT_2.ln() && v["tail_decreasing"] == true,
        format!("max expansion average {max_exp:.4}, tail fractions {fr:.4?}"),
    )
}

fn c13_determinism() -> Outcome {
    let toml = format!(
        "{ODE}[model]\n[deviations]\nsamples = 2000\n\
         reference_segments = {{ count = 8, len = 50000, burn_in = 1000 }}\n"
    );
    let mut listed = Vec::new();
    for sub in ["deviations", "lapcheck", "simulate"] {
        let a = lab(sub, &toml, Some(1))?;
        let b = lab(sub, &toml, Some(4))?;
        let read = |p: &Path| {
            let mut v: Vec<(String, Vec<u8>)> = fs::read_dir(p)
                .unwrap()
                .map(|e| e.unwrap())
                .map(|e| (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap()))
                .collect();
            v.sort();
            v
        };
        let (ra, rb) = (read(a.path()), read(b.path()));
        if ra != rb {
            return Err(format!("{sub}: outputs differ between 1 and 4 workers"));
        }
        listed.push(format!("{sub} {} files", ra.len()));
    }
    Ok(format!("byte-identical across worker counts: {}", listed.join(", ")))
}

fn main() {
    let criteria: [Criterion; 13] = [
        ("01 equilibrium spectrum", c01_spectrum),
        ("02 lyapunov spectrum", c02_lyapunov),
        ("03 model structure", c03_structure),
        ("04 suspension semigroup", c04_semigroup),
        ("05 dimension fixtures", c05_dimension_fixtures),
        ("06 hitting-time log law", c06_loglaw),
        ("07 recurrence secants", c07_recurrence),
        ("08 correlation decay", c08_correlations),
        ("09 large deviations", c09_deviations),
        ("10 escape rate", c10_escape),
        ("11 lap decomposition", c11_lapcheck),
        ("12 non-uniform expansion", c12_nue),
        ("13 determinism", c13_determinism),
    ];
    let only: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, c) in criteria {
        if !only.is_empty() && !only.iter().any(|o| name.contains(o.as_str())) {
            continue;
        }
        let t = Instant::now();
        let r = std::panic::catch_unwind(c).unwrap_or_else(|_| Err("panicked".into()));
        let secs = t.elapsed().as_secs_f64();
        match r {
            Ok(d) => println!("PASS {name}: {d} [{secs:.1}s]"),
            Err(d) => {
                failed += 1;
                println!("FAIL {name}: {d} [{secs:.1}s]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
