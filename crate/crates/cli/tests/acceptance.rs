//! End-to-end acceptance checks. Prints one line per criterion and exits
//! nonzero if any fails.

use std::fs;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use urban_causal::dataset::presets::Preset;
use urban_causal::dataset::{quantile_levels, standardize};
use urban_causal::discovery::policy::{backward, decode_edge_logits, encode, encode_with_cache, PolicyParams};
use urban_causal::discovery::{
    acyclicity_penalty, encoder_state, exhaustive_search, sample_graph, surrogate_logit_grad, surrogate_loss,
    train_discovery, TrainConfig,
};
use urban_causal::effects::{
    estimate_all_effects, fit_ordinal_regression, mean_loglik, naive_top_bottom, sample_ordinal, EffectsOptions,
    RawParams,
};
use urban_causal::prediction::{run_experiment, ExperimentConfig, Mlp, PredictorKind, StrategyKind};
use urban_causal::stats::pearson;
use urban_causal::{CausalGraph, Dimension, FactorMeta, FactorTable, TreatmentAssignment};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn normal<R: Rng>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

// 1 -------------------------------------------------------------------------

fn has_cycle(adj: &[bool], d: usize) -> bool {
    fn visit(v: usize, adj: &[bool], d: usize, state: &mut [u8]) -> bool {
        state[v] = 1;
        for w in 0..d {
            if adj[v * d + w] && (state[w] == 1 || (state[w] == 0 && visit(w, adj, d, state))) {
                return true;
            }
        }
        state[v] = 2;
        false
    }
    let mut state = vec![0u8; d];
    (0..d).any(|v| state[v] == 0 && visit(v, adj, d, &mut state))
}

fn acyclicity_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut cyclic, mut disagreements) = (0, 0);
    for _ in 0..1000 {
        let d = rng.random_range(2..=8);
        let adj: Vec<bool> = (0..d * d).map(|k| k / d != k % d && rng.random_bool(0.3)).collect();
        let cycle = has_cycle(&adj, d);
        cyclic += cycle as usize;
        if (acyclicity_penalty(&adj, d) == 0.0) == cycle {
            disagreements += 1;
        }
    }
    let two = acyclicity_penalty(&[false, true, true, false], 2);
    let target = 2.0 * 1f64.cosh() - 2.0;
    outcome(
        disagreements == 0 && (two - target).abs() < 1e-6,
        format!("{disagreements} disagreements over 1000 matrices ({cyclic} cyclic); 2-cycle {two:.8} vs {target:.8}"),
    )
}

// 2 -------------------------------------------------------------------------

fn exhaustive_recovery() -> Outcome {
    let mut parts = Vec::new();
    let mut pass = true;
    for preset in [Preset::Chain3, Preset::Diamond4] {
        let spec = preset.spec();
        let mut hits = 0;
        for seed in 0..5 {
            let t = standardize(&spec.generate(1000, seed).unwrap()).unwrap();
            let best = exhaustive_search(&t).unwrap();
            let cfg = TrainConfig {
                episodes: 2000,
                batch_size: 64,
                seed,
                ..Default::default()
            };
            let r = train_discovery(&t, &cfg).unwrap();
            hits += ((r.best_score - best.score).abs() <= 1e-6) as usize;
        }
        pass &= hits >= 4;
        parts.push(format!("{preset} {hits}/5"));
    }
    outcome(pass, parts.join(", "))
}

// 3 -------------------------------------------------------------------------

/// Largest relative error between an analytic gradient and central
/// differences of `f`. The denominator floor keeps entries whose true value
/// is at the finite-difference noise level from dominating.
fn max_rel_error(analytic: &[f64], x: &[f64], floor: f64, f: impl Fn(&[f64]) -> f64) -> f64 {
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for (k, g) in analytic.iter().enumerate() {
        let mut v = x.to_vec();
        v[k] += h;
        let up = f(&v);
        v[k] -= 2.0 * h;
        let numeric = (up - f(&v)) / (2.0 * h);
        worst = worst.max((g - numeric).abs() / g.abs().max(numeric.abs()).max(floor));
    }
    worst
}

fn gradient_checks() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut policy, mut ordinal, mut mlp): (f64, f64, f64) = (0.0, 0.0, 0.0);

    let spec = Preset::Diamond4.spec();
    let table = standardize(&spec.generate(200, 3).unwrap()).unwrap();
    for _ in 0..3 {
        let state = encoder_state(&table, 16, &mut rng);
        let params = PolicyParams::init(state.nrows(), 4, &mut rng);
        let logits = decode_edge_logits(&encode(&state, &params).unwrap(), &params).unwrap();
        let graphs: Vec<CausalGraph> =
            (0..6).map(|_| sample_graph(&logits, &table.names(), &mut rng).unwrap().graph).collect();
        let batch: Vec<(&CausalGraph, f64)> = graphs.iter().map(|g| (g, normal(&mut rng))).collect();
        let cache = encode_with_cache(&state, &params).unwrap();
        let analytic = backward(&state, &params, &cache, &surrogate_logit_grad(&logits, &batch)).to_flat();
        let err = max_rel_error(&analytic, &params.to_flat(), 1e-3, |v| {
            let mut p = params.clone();
            p.set_flat(v);
            surrogate_loss(&decode_edge_logits(&encode(&state, &p).unwrap(), &p).unwrap(), &batch)
        });
        policy = policy.max(err);
    }

    let x = DMatrix::from_fn(300, 2, |_, _| normal(&mut rng));
    let levels = sample_ordinal(&x, &[1.0, -0.5], &[-1.0, 0.0, 1.0], &mut rng);
    for _ in 0..3 {
        let w: Vec<f64> = (0..2).map(|_| normal(&mut rng)).collect();
        let mut theta = vec![normal(&mut rng)];
        for _ in 0..2 {
            theta.push(theta.last().unwrap() + rng.random_range(0.2..1.5));
        }
        let raw = RawParams::from_model(&w, &theta);
        let (_, grad) = mean_loglik(&x, &levels, 4, &raw);
        let err = max_rel_error(&grad, &raw.0, 1e-6, |v| mean_loglik(&x, &levels, 4, &RawParams(v.to_vec())).0);
        ordinal = ordinal.max(err);
    }

    let xb = DMatrix::from_fn(8, 3, |_, _| normal(&mut rng));
    let yb: Vec<f64> = (0..8).map(|_| normal(&mut rng)).collect();
    for point in 0..3 {
        let model = Mlp::init(3, &[6, 5], 100 + point);
        let (_, grads) = model.loss_and_grad(&xb, &yb);
        let flat = |m: &Mlp| -> Vec<f64> {
            m.layers.iter().flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied().collect::<Vec<_>>()).collect()
        };
        let analytic: Vec<f64> =
            grads.iter().flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied().collect::<Vec<_>>()).collect();
        let err = max_rel_error(&analytic, &flat(&model), 1e-4, |v| {
            let mut m = model.clone();
            let mut k = 0;
            for l in &mut m.layers {
                for p in l.weights.iter_mut().chain(l.bias.iter_mut()) {
                    *p = v[k];
                    k += 1;
                }
            }
            m.loss(&xb, &yb)
        });
        mlp = mlp.max(err);
    }
    outcome(
        policy < 1e-4 && ordinal < 1e-4 && mlp < 1e-4,
        format!("max relative error: policy {policy:.2e}, ordinal {ordinal:.2e}, mlp {mlp:.2e}"),
    )
}

// 4 -------------------------------------------------------------------------

fn ordinal_recovery() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n = 20_000;
    let x = DMatrix::from_fn(n, 1, |_, _| normal(&mut rng));
    let levels = sample_ordinal(&x, &[1.5], &[-1.0, 0.0, 1.0], &mut rng);
    let m = fit_ordinal_regression(&x, &TreatmentAssignment::from_levels(levels, 4).unwrap()).unwrap();
    let truth = [-1.0, 0.0, 1.0];
    let cov_err = (m.w[0] - 1.5).abs().max(m.theta.iter().zip(truth).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));

    let flat: Vec<usize> = (0..n).map(|i| 1 + i % 4).collect();
    let m0 = fit_ordinal_regression(&DMatrix::zeros(n, 0), &TreatmentAssignment::from_levels(flat, 4).unwrap()).unwrap();
    let logit = |p: f64| (p / (1.0 - p)).ln();
    let flat_err = (1..4).map(|d| (m0.theta[d - 1] - logit(d as f64 / 4.0)).abs()).fold(0.0, f64::max);
    outcome(
        m.converged && cov_err <= 0.1 && flat_err <= 0.02,
        format!(
            "w {:.4}, theta [{:.4}, {:.4}, {:.4}], max error {cov_err:.4}; no-covariate max error {flat_err:.2e}",
            m.w[0], m.theta[0], m.theta[1], m.theta[2]
        ),
    )
}

// 5 -------------------------------------------------------------------------

fn balancing() -> Outcome {
    let spec = Preset::ConfoundedTriple.spec();
    let mut pass = true;
    let mut parts = Vec::new();
    for seed in 0..5 {
        let t = spec.generate(2000, seed).unwrap();
        let r = estimate_all_effects(&spec.graph, &t, &EffectsOptions::default()).unwrap();
        let eb = r.balance.iter().find(|b| b.treatment == "T" && b.outcome == "Y").unwrap();
        for c in &eb.report.confounders {
            pass &= c.rel_diff_before > 0.5 && c.rel_diff_after < 0.5 * c.rel_diff_before;
            parts.push(format!("{:.3}->{:.3}", c.rel_diff_before, c.rel_diff_after));
        }
    }
    outcome(pass, format!("confounder X before->after: {}", parts.join(", ")))
}

// 6 -------------------------------------------------------------------------

fn table_of(cols: &[(&str, Dimension, Vec<f64>)]) -> FactorTable {
    let n = cols[0].2.len();
    let data = DMatrix::from_fn(n, cols.len(), |i, j| cols[j].2[i]);
    let meta = cols.iter().map(|(name, dim, _)| FactorMeta::new(*name, *dim)).collect();
    FactorTable::new(data, meta, (0..n).map(|i| format!("r{i}")).collect()).unwrap()
}

/// X drives the treatment up and the outcome down, so the raw association is
/// negative although each treatment level adds +2 to the outcome.
fn sign_flip() -> Outcome {
    let n = 2000;
    let mut good = 0;
    let mut parts = Vec::new();
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(600 + seed);
        let x: Vec<f64> = (0..n).map(|_| normal(&mut rng)).collect();
        let t: Vec<f64> = x.iter().map(|v| 3.0 * v + normal(&mut rng)).collect();
        let lv = quantile_levels(&t, 4).unwrap();
        let y: Vec<f64> = (0..n).map(|i| 2.0 * lv.levels[i] as f64 - 4.0 * x[i] + 0.5 * normal(&mut rng)).collect();
        let raw = pearson(&t, &y).unwrap().0;
        let naive = naive_top_bottom(&y, &lv);
        let table = table_of(&[
            ("X", Dimension::Citizens, x),
            ("T", Dimension::Locations, t),
            ("Y", Dimension::Mobility, y),
        ]);
        let g = CausalGraph::from_edges(table.names(), &[(0, 1), (0, 2), (1, 2)]).unwrap();
        let r = estimate_all_effects(&g, &table, &EffectsOptions::default()).unwrap();
        let e = r.results.iter().find(|e| e.treatment == "T" && e.outcome == "Y").unwrap();
        let ok = (1.5..=2.5).contains(&e.ate) && e.significant && raw < 0.0 && (naive - 2.0).abs() > (e.ate - 2.0).abs();
        good += ok as usize;
        parts.push(format!("ATE {:.3} (p {:.1e}), raw r {:.3}, naive {:.3}", e.ate, e.p_value, raw, naive));
    }
    outcome(good >= 3, format!("{good}/5 seeds: {}", parts.join("; ")))
}

// 7 -------------------------------------------------------------------------

fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let mx = xs.iter().sum::<f64>() / xs.len() as f64;
    let my = ys.iter().sum::<f64>() / ys.len() as f64;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

fn selection_benefit() -> Outcome {
    let spec = Preset::Distractor16.spec();
    let table = standardize(&spec.generate(3000, 0).unwrap()).unwrap();
    let cfg = ExperimentConfig {
        outcomes: vec!["Y".into()],
        predictors: vec![PredictorKind::Linear],
        repeats: 5,
        seed: 0,
        ..Default::default()
    };
    let report = run_experiment(&table, &spec.graph, &cfg).unwrap();
    if let Some(bad) = report.rows.iter().find(|r| r.error.is_some()) {
        return outcome(false, format!("cell failed: {bad:?}"));
    }
    let mean = |s: StrategyKind, f: f64| {
        let v: Vec<f64> = report
            .rows
            .iter()
            .filter(|r| r.strategy == s && r.train_fraction == f)
            .map(|r| r.rmse.unwrap())
            .collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    let sig = mean(StrategyKind::CausalSignificance, 0.2);
    let corr = mean(StrategyKind::CorrelationP, 0.2);
    let mut declines = true;
    let mut parts = vec![format!("at 0.2 significance {sig:.4} vs correlation {corr:.4}")];
    for s in StrategyKind::ALL {
        let ys: Vec<f64> = cfg.fractions.iter().map(|&f| mean(s, f)).collect();
        let b = slope(&cfg.fractions, &ys);
        let (first, last) = (ys[0], *ys.last().unwrap());
        declines &= last <= first && b <= 0.0;
        parts.push(format!("{s} {first:.4}->{last:.4} slope {b:+.4}"));
    }
    outcome(sig <= corr && declines, parts.join("; "))
}

// 8 -------------------------------------------------------------------------

const PIPELINE: [&str; 5] = ["synth", "discover", "effects", "predict", "report"];

fn run_pipeline(dir: &Path, preset: &str) -> Result<(), String> {
    let config = format!(
        "seed = 17\n[synth]\npreset = \"{preset}\"\nn = 1000\n[predict]\npredictors = [\"linear\", \"mlp\"]\n[predict.mlp]\nhidden_sizes = [16, 16]\nepochs = 300\n"
    );
    fs::write(dir.join("run.toml"), config).map_err(|e| e.to_string())?;
    for stage in PIPELINE {
        let out = Command::new(env!("CARGO_BIN_EXE_urbancause"))
            .current_dir(dir)
            .args([stage, "--config", "run.toml"])
            .output()
            .map_err(|e| e.to_string())?;
        if !out.status.success() {
            return Err(format!("{preset} {stage}: {}", String::from_utf8_lossy(&out.stderr)));
        }
    }
    Ok(())
}

fn determinism() -> Outcome {
    let mut compared = 0;
    for preset in ["chain3", "confounded-triple"] {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        for dir in [a.path(), b.path()] {
            if let Err(e) = run_pipeline(dir, preset) {
                return outcome(false, e);
            }
        }
        let mut names: Vec<String> = fs::read_dir(a.path().join("out"))
            .unwrap()
            .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
            .filter(|n| n != "manifest.json")
            .collect();
        names.sort();
        for name in &names {
            let x = fs::read(a.path().join("out").join(name)).unwrap();
            let y = fs::read(b.path().join("out").join(name));
            if y.ok().as_ref() != Some(&x) {
                return outcome(false, format!("{preset}: {name} differs between runs"));
            }
            compared += 1;
        }
    }
    outcome(compared > 0, format!("{compared} output files byte-identical across two runs"))
}

// 9 -------------------------------------------------------------------------

fn causal_order() -> Outcome {
    let g = Preset::Diamond4.spec().graph;
    let levels = g.causal_order_names().unwrap();
    let expected = vec![vec!["A".to_string()], vec!["B".into(), "C".into()], vec!["D".into()]];
    outcome(levels == expected, format!("{levels:?}"))
}

fn main() -> ExitCode {
    let criteria: [(&str, Duration, fn() -> Outcome); 9] = [
        ("acyclicity oracle equivalence", Duration::from_secs(5), acyclicity_oracle),
        ("BIC exhaustive-optimum recovery", Duration::from_secs(300), exhaustive_recovery),
        ("gradient checks", Duration::from_secs(60), gradient_checks),
        ("ordinal parameter recovery", Duration::from_secs(30), ordinal_recovery),
        ("confounder balancing", Duration::from_secs(30), balancing),
        ("ATE recovery under a sign-flipping confounder", Duration::from_secs(60), sign_flip),
        ("small-sample selection benefit", Duration::from_secs(300), selection_benefit),
        ("pipeline determinism", Duration::from_secs(600), determinism),
        ("causal order on diamond4", Duration::from_secs(1), causal_order),
    ];
    let mut failed = 0;
    for (k, (name, limit, check)) in criteria.iter().enumerate() {
        let clock = Instant::now();
        let o = check();
        let took = clock.elapsed();
        let pass = o.pass && took <= *limit;
        failed += !pass as usize;
        println!(
            "[{}] {} {name}: {} ({:.2} s, limit {} s)",
            if pass { "PASS" } else { "FAIL" },
            k + 1,
            o.detail,
            took.as_secs_f64(),
            limit.as_secs()
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} of {} criteria failed", criteria.len());
        ExitCode::FAILURE
    }
}
