//! Acceptance suite. Runs every criterion at its stated tolerance and prints one line each:
//!
//! ```text
//! cargo test -p survkit-cli --test acceptance
//! cargo test -p survkit-cli --test acceptance -- 4 7    # selected criteria only
//! ```
//!
//! Every reference value is computed here, independently of the library code under test.

// `ensure!(x <= tol)` must fail on NaN, which the negated comparison does.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use survkit::data::{synth_cohort, SurvivalTarget, SynthModel};
use survkit::estimators::{breslow_baseline, censoring_survival, kaplan_meier, nelson_aalen};
use survkit::explain::{
    background_sample, permutation_importance, shapley_values, PermutationConfig, ShapleyMode,
};
use survkit::hpo::{best_trial, optimize, sample_random, Assignment, CmaConfig, ParamSpec, Sampler, TpeConfig};
use survkit::losses::{aft_loss, cox_loss, logistic_loss, squared_loss, AftDistribution, AftLossConfig, LossEval};
use survkit::metrics::{harrell_c, ibs, ipcw_c, TimeGrid};
use survkit::models::{fit, predict_curves, predict_risk, Family, ModelParams, ParamValue, RiskModel};
use survkit::preprocess::split_indices;
use survkit::{Cohort64, FittedModel64, StepFunction64, SurvError};

type Target = SurvivalTarget<f64>;
type Outcome = std::result::Result<String, String>;
type Check = fn() -> Outcome;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn float_of(v: &ParamValue) -> f64 {
    match v {
        ParamValue::Float(x) => *x,
        ParamValue::Int(x) => *x as f64,
        ParamValue::Str(s) => panic!("expected a number, got {s}"),
    }
}

/// Random targets: integer times when `tied`, continuous otherwise.
fn random_targets(r: &mut ChaCha8Rng, n: usize, tied: bool, censor_p: f64) -> Vec<Target> {
    let max_time = r.random_range(3..40);
    (0..n)
        .map(|_| {
            let t = if tied {
                r.random_range(1..=max_time) as f64
            } else {
                r.random_range(0.01..20.0)
            };
            Target::new(t, !r.random_bool(censor_p))
        })
        .collect()
}

// ---------------------------------------------------------------------------------------------
// 1 + 2: concordance

/// Exhaustive pair enumeration: (concordant, discordant, tied risk).
fn harrell_oracle(targets: &[Target], risk: &[f64]) -> (u64, u64, u64) {
    let (mut conc, mut disc, mut tied) = (0, 0, 0);
    for i in 0..targets.len() {
        for j in (i + 1)..targets.len() {
            let (a, b) = (&targets[i], &targets[j]);
            // (earlier subject, later subject) of a comparable pair, if any
            let pair = if a.time < b.time {
                a.event.then_some((i, j))
            } else if b.time < a.time {
                b.event.then_some((j, i))
            } else if a.event != b.event {
                Some(if a.event { (i, j) } else { (j, i) })
            } else {
                None
            };
            if let Some((early, late)) = pair {
                if risk[early] > risk[late] {
                    conc += 1;
                } else if risk[early] < risk[late] {
                    disc += 1;
                } else {
                    tied += 1;
                }
            }
        }
    }
    (conc, disc, tied)
}

fn criterion_1() -> Outcome {
    let started = Instant::now();
    let mut checked = 0;
    for seed in 0..100u64 {
        let mut r = rng(1000 + seed);
        let n = r.random_range(2..=500);
        let tied = seed % 2 == 0;
        let censor_p = r.random_range(0.0..0.7);
        let targets = random_targets(&mut r, n, tied, censor_p);
        let levels = [3, 10, 1000][seed as usize % 3];
        let risk: Vec<f64> = (0..n).map(|_| r.random_range(0..levels) as f64).collect();
        let (conc, disc, tie) = harrell_oracle(&targets, &risk);
        let comparable = conc + disc + tie;
        if comparable == 0 {
            continue;
        }
        let got = harrell_c(&targets, &risk).map_err(|e| format!("seed {seed}: {e}"))?;
        let expected = (conc as f64 + 0.5 * tie as f64) / comparable as f64;
        ensure!(
            got.concordant == conc as f64 && got.discordant == disc as f64 && got.tied_risk == tie as f64,
            "seed {seed}: counts {:?} vs oracle ({conc}, {disc}, {tie})",
            (got.concordant, got.discordant, got.tied_risk)
        );
        ensure!(got.c_index == expected, "seed {seed}: {} vs oracle {expected}", got.c_index);
        checked += 1;
    }
    let elapsed = started.elapsed();
    ensure!(checked >= 95, "only {checked} instances had comparable pairs");
    ensure!(elapsed < Duration::from_secs(10), "took {elapsed:?}");
    Ok(format!("{checked} instances exact, {:.2}s", elapsed.as_secs_f64()))
}

fn criterion_2() -> Outcome {
    let mut worst = 0.0f64;
    for seed in 0..50u64 {
        let mut r = rng(2000 + seed);
        let n = r.random_range(10..=400);
        let targets = random_targets(&mut r, n, seed % 2 == 0, 0.0);
        let risk: Vec<f64> = (0..n).map(|_| r.random_range(0..20) as f64 + r.random_range(0.0..1.0)).collect();
        let g = censoring_survival(&targets).map_err(|e| e.to_string())?;
        let h = harrell_c(&targets, &risk).map_err(|e| e.to_string())?.c_index;
        let u = ipcw_c(&targets, &risk, &g, None).map_err(|e| e.to_string())?.c_index;
        worst = worst.max((h - u).abs());
    }
    ensure!(worst <= 1e-12, "max |ipcw - harrell| = {worst:e}");
    Ok(format!("50 instances, max |ipcw - harrell| = {worst:e}"))
}

// ---------------------------------------------------------------------------------------------
// 3: estimator fixtures

fn criterion_3() -> Outcome {
    let fixture = Target::from_pairs(&[(2.0, true), (3.0, true), (3.0, true), (5.0, false)]);
    let err = |e: SurvError| e.to_string();

    let km = kaplan_meier(&fixture).map_err(err)?;
    for (t, s) in [(1.0, 1.0), (2.0, 0.75), (3.0, 0.25), (5.0, 0.25)] {
        ensure!(km.eval(t) == s, "KM({t}) = {} vs {s}", km.eval(t));
    }
    let na = nelson_aalen(&fixture).map_err(err)?;
    for (t, h) in [(1.0, 0.0), (2.0, 0.25), (3.0, 0.25 + 2.0 / 3.0), (5.0, 0.25 + 2.0 / 3.0)] {
        ensure!((na.eval(t) - h).abs() <= 1e-15, "NA({t}) = {} vs {h}", na.eval(t));
    }
    let g = censoring_survival(&fixture).map_err(err)?;
    for (t, v) in [(1.0, 1.0), (2.0, 1.0), (3.0, 1.0), (4.99, 1.0), (5.0, 0.0)] {
        ensure!(g.eval(t) == v, "G({t}) = {} vs {v}", g.eval(t));
    }

    let censored = Target::from_pairs(&[(1.0, false), (2.0, false), (4.0, false)]);
    let km0 = kaplan_meier(&censored).map_err(err)?;
    let na0 = nelson_aalen(&censored).map_err(err)?;
    for t in [0.5, 1.0, 3.0, 10.0] {
        ensure!(km0.eval(t) == 1.0 && na0.eval(t) == 0.0, "all-censored fixture at {t}");
    }

    let two = Target::from_pairs(&[(1.0, true), (2.0, true)]);
    let h0 = breslow_baseline(&two, &[0.0, 0.0]).map_err(err)?;
    ensure!(h0.eval(1.0) == 0.5 && h0.eval(2.0) == 1.5, "Breslow fixture {:?}", h0.values());

    let mut worst = 0.0f64;
    for seed in 0..20u64 {
        let mut r = rng(3000 + seed);
        let n = r.random_range(5..200);
        let targets = random_targets(&mut r, n, seed % 2 == 0, 0.4);
        if !targets.iter().any(|t| t.event) {
            continue;
        }
        let h = breslow_baseline(&targets, &vec![0.0; n]).map_err(err)?;
        let na = nelson_aalen(&targets).map_err(err)?;
        for t in targets.iter().map(|t| t.time).chain([0.0, 100.0]) {
            worst = worst.max((h.eval(t) - na.eval(t)).abs());
        }
    }
    ensure!(worst <= 1e-12, "Breslow(eta = 0) vs NA: {worst:e}");
    Ok(format!("fixtures exact, Breslow(eta = 0) vs NA max diff {worst:e}"))
}

// ---------------------------------------------------------------------------------------------
// 4: gradient checks

/// `|a - b|` relative to the larger magnitude, with an absolute floor of 1e-3 so that
/// gradients at the level of finite-difference noise are compared absolutely.
fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
}

/// Worst relative error between analytic gradients and central differences of the loss.
fn fd_worst(f: &dyn Fn(&[f64]) -> LossEval<f64>, x: &[f64]) -> f64 {
    let h = 1e-5;
    let base = f(x);
    let mut worst = 0.0f64;
    for k in 0..x.len() {
        let mut up = x.to_vec();
        let mut dn = x.to_vec();
        up[k] += h;
        dn[k] -= h;
        let fd = (f(&up).loss - f(&dn).loss) / (2.0 * h);
        worst = worst.max(rel_err(fd, base.gradients[k]));
    }
    worst
}

/// Breslow partial likelihood coded from its definition, O(n^2).
fn cox_oracle(targets: &[Target], eta: &[f64], w: &[f64]) -> f64 {
    let mut loss = 0.0;
    for i in 0..targets.len() {
        if targets[i].event {
            let risk_set: f64 = (0..targets.len())
                .filter(|&j| targets[j].time >= targets[i].time)
                .map(|j| w[j] * eta[j].exp())
                .sum();
            loss -= w[i] * (eta[i] - risk_set.ln());
        }
    }
    loss
}

fn criterion_4() -> Outcome {
    let mut report = Vec::new();
    let names = ["cox", "aft_normal", "aft_logistic", "logistic", "squared"];
    for (li, name) in names.iter().enumerate() {
        let mut worst = 0.0f64;
        let mut worst_value = 0.0f64;
        let mut worst_sum = 0.0f64;
        for seed in 0..100u64 {
            let mut r = rng(4000 + 100 * li as u64 + seed);
            let n = r.random_range(2..60);
            let mut targets = random_targets(&mut r, n, seed % 2 == 0, 0.35);
            targets[0].event = true;
            let uniform = seed % 3 == 0;
            let w: Vec<f64> = (0..n).map(|_| if uniform { 1.0 } else { r.random_range(0.2..3.0) }).collect();
            let x: Vec<f64> = match *name {
                "cox" => (0..n).map(|_| r.random_range(-2.0..2.0)).collect(),
                "aft_normal" | "aft_logistic" => targets.iter().map(|t| t.time.ln() + r.random_range(-2.0..2.0)).collect(),
                "logistic" => (0..n).map(|_| r.random_range(-4.0..4.0)).collect(),
                _ => targets.iter().map(|t| t.time + r.random_range(-5.0..5.0)).collect(),
            };
            let sigma = r.random_range(0.5..2.0);
            let f = |p: &[f64]| -> LossEval<f64> {
                let weights = Some(&w[..]);
                match *name {
                    "cox" => cox_loss(&targets, p, weights),
                    "aft_normal" => aft_loss(&targets, p, weights, &AftLossConfig { distribution: AftDistribution::Normal, sigma }),
                    "aft_logistic" => aft_loss(&targets, p, weights, &AftLossConfig { distribution: AftDistribution::Logistic, sigma }),
                    "logistic" => logistic_loss(&targets, p, weights),
                    _ => squared_loss(&targets, p, weights),
                }
                .unwrap()
            };
            worst = worst.max(fd_worst(&f, &x));
            let value = f(&x).loss;
            let oracle = match *name {
                "cox" => Some(cox_oracle(&targets, &x, &w)),
                "squared" => Some(targets.iter().zip(&x).zip(&w).map(|((t, p), w)| 0.5 * w * (t.time - p).powi(2)).sum()),
                "logistic" => Some(
                    targets
                        .iter()
                        .zip(&x)
                        .zip(&w)
                        .map(|((t, &p), w)| {
                            let q = 1.0 / (1.0 + (-p).exp());
                            -w * if t.event { q.ln() } else { (1.0 - q).ln() }
                        })
                        .sum(),
                ),
                _ => None,
            };
            if let Some(o) = oracle {
                worst_value = worst_value.max((value - o).abs() / o.abs().max(1.0));
            }
            if *name == "cox" && uniform {
                let g = cox_loss(&targets, &x, None).unwrap();
                worst_sum = worst_sum.max(g.gradients.iter().sum::<f64>().abs());
            }
        }
        ensure!(worst < 1e-5, "{name}: gradient vs central difference rel err {worst:e}");
        ensure!(worst_value < 1e-12, "{name}: loss vs direct formula rel err {worst_value:e}");
        ensure!(worst_sum < 1e-10, "cox: gradient sum {worst_sum:e} under uniform weights");
        report.push(format!("{name} {worst:.1e}"));
    }
    Ok(format!("100 instances each, worst rel err: {}", report.join(", ")))
}

// ---------------------------------------------------------------------------------------------
// 5: model sanity

fn params_for(family: Family, train: &Cohort64) -> ModelParams {
    let mut p = ModelParams::default_for(family);
    if family == Family::HorizonClassifier {
        let mut times: Vec<f64> = train.targets().iter().map(|t| t.time).collect();
        times.sort_by(f64::total_cmp);
        p.apply("horizon", &ParamValue::Float(times[times.len() / 2])).unwrap();
    }
    p.set_seed(11);
    p
}

fn held_out_c(family: Family, model: SynthModel, beta: &[f64], seed: u64) -> f64 {
    let cohort = synth_cohort::<f64>(3000, 5, model, beta, 0.3, seed).unwrap().cohort;
    let (train_idx, test_idx) = split_indices(cohort.targets(), 0.2, true, seed).unwrap();
    let (train, test) = (cohort.select_rows(&train_idx), cohort.select_rows(&test_idx));
    let fitted = fit(&train, &params_for(family, &train)).unwrap();
    let risk = predict_risk(&fitted, test.features()).unwrap();
    harrell_c(test.targets(), &risk).unwrap().c_index
}

fn criterion_5() -> Outcome {
    let started = Instant::now();
    let strong = [1.0, 1.0, 0.0, 0.0, 0.0];
    let mut parts = Vec::new();
    for (family, model, floor) in [
        (Family::Rsf, SynthModel::ProportionalHazards, 0.70),
        (Family::Gbsa, SynthModel::ProportionalHazards, 0.70),
        (Family::GbCox, SynthModel::ProportionalHazards, 0.70),
        (Family::GbAft, SynthModel::LognormalAft, 0.70),
        (Family::Ssvm, SynthModel::ProportionalHazards, 0.65),
    ] {
        let c = held_out_c(family, model, &strong, 21);
        ensure!(c >= floor, "{family}: C = {c:.4} < {floor}");
        parts.push(format!("{family} {c:.3}"));
    }
    let mut null = Vec::new();
    for family in Family::ALL {
        let c = held_out_c(family, SynthModel::ProportionalHazards, &[0.0; 5], 22);
        ensure!((c - 0.5).abs() <= 0.04, "{family} on beta = 0: C = {c:.4}");
        null.push(format!("{family} {c:.3}"));
    }
    let elapsed = started.elapsed();
    ensure!(elapsed < Duration::from_secs(300), "took {elapsed:?}");
    Ok(format!(
        "signal: {}; null: {}; {:.1}s",
        parts.join(", "),
        null.join(", "),
        elapsed.as_secs_f64()
    ))
}

// ---------------------------------------------------------------------------------------------
// 6: integrated Brier score

/// Product-limit estimate at `t` (or just before `t` when `left`), counting subjects with
/// `is_event` as events; at tied times `is_event` subjects leave the risk set first.
fn product_limit(targets: &[Target], is_event: impl Fn(&Target) -> bool, t: f64, left: bool) -> f64 {
    let mut times: Vec<f64> = targets.iter().filter(|s| is_event(s)).map(|s| s.time).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let mut s = 1.0;
    for u in times {
        if u > t || (left && u == t) {
            break;
        }
        let at_risk = targets.iter().filter(|s| s.time >= u).count() as f64;
        let d = targets.iter().filter(|s| s.time == u && is_event(s)).count() as f64;
        s *= 1.0 - d / at_risk;
    }
    s
}

/// Direct-summation IBS: Graf's weighted Brier score at each grid time, trapezoidal mean.
fn ibs_oracle(grid: &[f64], predicted: &dyn Fn(usize, f64) -> f64, targets: &[Target]) -> f64 {
    let censoring = |t: f64, left: bool| product_limit(targets, |s| !s.event, t, left);
    let g_at_event: Vec<f64> = targets.iter().map(|s| censoring(s.time, true)).collect();
    let scores: Vec<f64> = grid
        .iter()
        .map(|&t| {
            let g_t = censoring(t, false);
            let mut total = 0.0;
            for (i, s) in targets.iter().enumerate() {
                let p = predicted(i, t);
                if s.time <= t && s.event {
                    total += p * p / g_at_event[i];
                } else if s.time > t {
                    total += (1.0 - p) * (1.0 - p) / g_t;
                }
            }
            total / targets.len() as f64
        })
        .collect();
    let mut area = 0.0;
    for k in 1..grid.len() {
        area += 0.5 * (scores[k] + scores[k - 1]) * (grid[k] - grid[k - 1]);
    }
    area / (grid[grid.len() - 1] - grid[0])
}

fn criterion_6() -> Outcome {
    let cohort = synth_cohort::<f64>(500, 3, SynthModel::ProportionalHazards, &[1.0, 0.5, 0.0], 0.3, 6)
        .unwrap()
        .cohort;
    let targets = cohort.targets();
    let g = censoring_survival(targets).map_err(|e| e.to_string())?;
    let grid = TimeGrid::default_for(targets, &g, 100).map_err(|e| e.to_string())?;
    let km = kaplan_meier(targets).map_err(|e| e.to_string())?;
    let curves = vec![km.clone(); targets.len()];
    let got = ibs(&grid, &curves, targets, &g).map_err(|e| e.to_string())?;
    let km_oracle = |_: usize, t: f64| product_limit(targets, |s| s.event, t, false);
    let expected = ibs_oracle(grid.times(), &km_oracle, targets);
    let diff = (got - expected).abs();
    ensure!(diff <= 1e-9, "KM predictor: {got} vs oracle {expected}");

    let uncensored = synth_cohort::<f64>(500, 3, SynthModel::ProportionalHazards, &[1.0, 0.5, 0.0], 0.0, 7)
        .unwrap()
        .cohort;
    let targets = uncensored.targets();
    let g = censoring_survival(targets).map_err(|e| e.to_string())?;
    let grid = TimeGrid::default_for(targets, &g, 100).map_err(|e| e.to_string())?;
    let perfect: Vec<StepFunction64> = targets
        .iter()
        .map(|t| StepFunction64::new(vec![t.time], vec![0.0], 1.0).unwrap())
        .collect();
    let zero = ibs(&grid, &perfect, targets, &g).map_err(|e| e.to_string())?;
    ensure!(zero.abs() <= 1e-12, "perfect predictor: {zero}");
    let half = vec![StepFunction64::constant(0.5); targets.len()];
    let quarter = ibs(&grid, &half, targets, &g).map_err(|e| e.to_string())?;
    ensure!((quarter - 0.25).abs() <= 1e-12, "constant 1/2: {quarter}");
    Ok(format!("KM predictor {got:.6} (|diff| {diff:.1e}), perfect {zero}, constant 1/2 {quarter}"))
}

// ---------------------------------------------------------------------------------------------
// 7: samplers

fn criterion_7() -> Outcome {
    let line = [ParamSpec::float("x", 0.0, 1.0)];
    let quadratic = |a: &Assignment| -> survkit::Result<(f64, Vec<f64>)> {
        let x = float_of(&a["x"]);
        Ok((-(x - 0.7).powi(2), Vec::new()))
    };
    let tpe = Sampler::Tpe(TpeConfig::default());
    let tpe_hits = (0..100u64)
        .filter(|&seed| {
            let trials = optimize(&line, &tpe, 150, 7000 + seed, quadratic).unwrap();
            let best = &trials[best_trial(&trials).unwrap()];
            (float_of(&best.params["x"]) - 0.7).abs() <= 0.05
        })
        .count();
    ensure!(tpe_hits >= 95, "TPE within 0.05 in {tpe_hits}/100 runs");

    let cube: Vec<ParamSpec> = (0..3).map(|i| ParamSpec::float(&format!("x{i}"), 0.0, 1.0)).collect();
    let distance = |a: &Assignment| -> f64 {
        (0..3).map(|i| (float_of(&a[&format!("x{i}")]) - 0.5).powi(2)).sum::<f64>().sqrt()
    };
    let sphere = |a: &Assignment| -> survkit::Result<(f64, Vec<f64>)> { Ok((-distance(a).powi(2), Vec::new())) };
    let cma = Sampler::CmaEs(CmaConfig::default());
    let mut cma_hits = 0;
    let mut distances = Vec::new();
    for seed in 0..100u64 {
        let trials = optimize(&cube, &cma, 300, 7500 + seed, sphere).unwrap();
        let dist = distance(&trials[best_trial(&trials).unwrap()].params);
        distances.push(dist);
        if dist <= 1e-3 {
            cma_hits += 1;
        }
    }
    distances.sort_by(f64::total_cmp);
    ensure!(
        cma_hits >= 95,
        "CMA-ES within 1e-3 in {cma_hits}/100 runs (median distance {:.2e})",
        distances[50]
    );

    // chi-square goodness of fit over 10 equal bins; 27.88 is the 0.999 quantile with 9 df
    let space = [
        ParamSpec::float("f", 0.0, 1.0),
        ParamSpec::log_float("l", 1e-3, 1e1),
        ParamSpec::int("i", 0, 9),
        ParamSpec::categorical("c", &["a", "b", "c", "d", "e", "f", "g", "h", "i", "j"]),
    ];
    let n = 10_000;
    let mut bins = vec![[0usize; 10]; 4];
    let mut mean = 0.0;
    for idx in 0..n {
        let a = sample_random(&space, 77, idx);
        let f = float_of(&a["f"]);
        mean += f / n as f64;
        bins[0][((f * 10.0) as usize).min(9)] += 1;
        let l = (float_of(&a["l"]).log10() + 3.0) / 4.0;
        bins[1][((l * 10.0) as usize).min(9)] += 1;
        bins[2][float_of(&a["i"]) as usize] += 1;
        let ParamValue::Str(c) = &a["c"] else { panic!("categorical") };
        bins[3][(c.as_bytes()[0] - b'a') as usize] += 1;
    }
    ensure!((0.48..=0.52).contains(&mean), "uniform float mean {mean}");
    let expected = n as f64 / 10.0;
    let mut chi = Vec::new();
    for (b, name) in bins.iter().zip(["float", "log_float", "int", "categorical"]) {
        let stat: f64 = b.iter().map(|&o| (o as f64 - expected).powi(2) / expected).sum();
        ensure!(stat < 27.88, "{name}: chi-square {stat:.2}");
        chi.push(format!("{name} {stat:.1}"));
    }
    Ok(format!(
        "TPE {tpe_hits}/100, CMA-ES {cma_hits}/100 (median distance {:.1e}), random mean {mean:.4}, chi-square {}",
        distances[50],
        chi.join(", ")
    ))
}

// ---------------------------------------------------------------------------------------------
// 8: attribution

/// `x0 x1 + sin(x2) + x0 x3^2`; feature 4 is never read.
struct Interacting;

impl RiskModel<f64> for Interacting {
    fn n_features(&self) -> usize {
        5
    }

    fn predict_risk(&self, x: ArrayView2<'_, f64>) -> survkit::Result<Vec<f64>> {
        Ok(x.outer_iter().map(|r| r[0] * r[1] + r[2].sin() + r[0] * r[3] * r[3]).collect())
    }
}

/// `x0 x1 + x2`.
struct Product;

impl RiskModel<f64> for Product {
    fn n_features(&self) -> usize {
        3
    }

    fn predict_risk(&self, x: ArrayView2<'_, f64>) -> survkit::Result<Vec<f64>> {
        Ok(x.outer_iter().map(|r| r[0] * r[1] + r[2]).collect())
    }
}

/// Risk is feature 0.
struct FirstColumn(usize);

impl RiskModel<f64> for FirstColumn {
    fn n_features(&self) -> usize {
        self.0
    }

    fn predict_risk(&self, x: ArrayView2<'_, f64>) -> survkit::Result<Vec<f64>> {
        Ok(x.column(0).to_vec())
    }
}

fn all_orderings(d: usize) -> Vec<Vec<usize>> {
    if d == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for rest in all_orderings(d - 1) {
        for pos in 0..=rest.len() {
            let mut p = rest.clone();
            p.insert(pos, d - 1);
            out.push(p);
        }
    }
    out
}

/// Shapley values as the mean marginal contribution over all d! orderings.
fn shapley_oracle<M: RiskModel<f64>>(model: &M, x: ArrayView1<'_, f64>, bg: ArrayView2<'_, f64>) -> Vec<f64> {
    let d = x.len();
    let value = |mask: &[bool]| -> f64 {
        let mut rows = bg.to_owned();
        for mut row in rows.outer_iter_mut() {
            for j in 0..d {
                if mask[j] {
                    row[j] = x[j];
                }
            }
        }
        let risk = model.predict_risk(rows.view()).unwrap();
        risk.iter().sum::<f64>() / risk.len() as f64
    };
    let orderings = all_orderings(d);
    let mut phi = vec![0.0; d];
    for order in &orderings {
        let mut mask = vec![false; d];
        let mut prev = value(&mask);
        for &j in order {
            mask[j] = true;
            let next = value(&mask);
            phi[j] += next - prev;
            prev = next;
        }
    }
    phi.iter().map(|p| p / orderings.len() as f64).collect()
}

fn gaussian_matrix(n: usize, d: usize, seed: u64) -> Array2<f64> {
    synth_cohort::<f64>(n, d, SynthModel::ProportionalHazards, &vec![0.0; d], 0.0, seed)
        .unwrap()
        .cohort
        .features()
        .to_owned()
}

fn criterion_8() -> Outcome {
    let bg = gaussian_matrix(25, 5, 81);
    let instances = gaussian_matrix(5, 5, 82);
    let (mut eff, mut vs_oracle, mut dummy) = (0.0f64, 0.0f64, 0.0f64);
    for x in instances.outer_iter() {
        let phi = shapley_values(&Interacting, x, bg.view(), ShapleyMode::Exact, 0).map_err(|e| e.to_string())?;
        eff = eff.max(phi.residual.abs());
        let oracle = shapley_oracle(&Interacting, x, bg.view());
        for (a, b) in phi.values.iter().zip(&oracle) {
            vs_oracle = vs_oracle.max((a - b).abs());
        }
        dummy = dummy.max(phi.values[4].abs());
    }
    ensure!(eff <= 1e-9, "efficiency residual {eff:e}");
    ensure!(vs_oracle <= 1e-9, "exact vs ordering oracle {vs_oracle:e}");
    ensure!(dummy <= 1e-12, "dummy feature got {dummy:e}");

    let mut sym_bg = gaussian_matrix(30, 3, 83);
    let first = sym_bg.column(0).to_owned();
    sym_bg.column_mut(1).assign(&first);
    let x = Array1::from(vec![0.8, 0.8, -0.3]);
    let phi = shapley_values(&Product, x.view(), sym_bg.view(), ShapleyMode::Exact, 0).map_err(|e| e.to_string())?;
    let sym = (phi.values[0] - phi.values[1]).abs();
    ensure!(sym <= 1e-12, "symmetry: {:?}", phi.values);

    // Monte Carlo against exact on a random survival forest with six inputs
    let cohort = synth_cohort::<f64>(400, 6, SynthModel::ProportionalHazards, &[1.0, -0.7, 0.4, 0.0, 0.0, 0.0], 0.3, 84)
        .unwrap()
        .cohort;
    let mut params = ModelParams::default_for(Family::Rsf);
    params.apply("n_trees", &ParamValue::Int(50)).unwrap();
    params.set_seed(84);
    let forest = fit(&cohort, &params).map_err(|e| e.to_string())?;
    let bg = background_sample(&cohort, 30, 85).map_err(|e| e.to_string())?;
    let mut mc_ratio = 0.0f64;
    for r in [3, 50, 222] {
        let x = cohort.features().row(r).to_owned();
        let exact = shapley_values(&forest, x.view(), bg.view(), ShapleyMode::Exact, 0).map_err(|e| e.to_string())?;
        let mc = shapley_values(&forest, x.view(), bg.view(), ShapleyMode::MonteCarlo { n_permutations: 2000 }, 86 + r as u64)
            .map_err(|e| e.to_string())?;
        let scale = exact.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let worst = exact.values.iter().zip(&mc.values).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        mc_ratio = mc_ratio.max(worst / scale);
    }
    ensure!(mc_ratio < 0.02, "Monte Carlo deviation {:.2}% of max |phi|", 100.0 * mc_ratio);

    // permutation importance of an oracle model reading only feature 0
    let eval = synth_cohort::<f64>(1000, 5, SynthModel::ProportionalHazards, &[1.0, 0.0, 0.0, 0.0, 0.0], 0.3, 87)
        .unwrap()
        .cohort;
    let report = permutation_importance(
        &FirstColumn(5),
        &eval,
        &PermutationConfig {
            n_repeats: 10,
            seed: 88,
            ..PermutationConfig::default()
        },
    )
    .map_err(|e| e.to_string())?;
    let margin = |report: &survkit::explain::ImportanceReport| -> std::result::Result<(f64, f64), String> {
        let signal = report.features[0].value;
        let noise = report.features[1..].iter().map(|f| f.value.abs()).fold(0.0f64, f64::max);
        let ranking = report.ranking();
        ensure!(ranking[0] == 0, "ranking {ranking:?}");
        ensure!(signal > 0.0 && signal >= 10.0 * noise, "signal {signal} vs noise {noise}");
        Ok((signal, noise))
    };
    let (signal, noise) = margin(&report)?;

    // the same check on a fitted model, whose unused inputs can carry small spurious splits
    let mut params = ModelParams::default_for(Family::GbCox);
    params.set_seed(89);
    let train = synth_cohort::<f64>(2000, 5, SynthModel::ProportionalHazards, &[1.0, 0.0, 0.0, 0.0, 0.0], 0.3, 90)
        .unwrap()
        .cohort;
    let boosted = fit(&train, &params).map_err(|e| e.to_string())?;
    let fitted = permutation_importance(
        &boosted,
        &eval,
        &PermutationConfig {
            n_repeats: 10,
            seed: 91,
            ..PermutationConfig::default()
        },
    )
    .map_err(|e| e.to_string())?;
    let (fit_signal, fit_noise) = margin(&fitted).map_err(|e| format!("fitted gb_cox: {e}"))?;
    Ok(format!(
        "efficiency {eff:.1e}, vs ordering oracle {vs_oracle:.1e}, dummy {dummy:.1e}, symmetry {sym:.1e}, \
         MC deviation {:.2}% of max |phi|, PI signal {signal:.3} vs noise {noise:.1e} (oracle model), \
         {fit_signal:.3} vs {fit_noise:.1e} (fitted gb_cox)",
        100.0 * mc_ratio
    ))
}

// ---------------------------------------------------------------------------------------------
// 9 + 10: command-line pipeline

fn cli(verb: &str, config: &Path) -> i32 {
    survkit_cli::main_with_args(["survkit", verb, "--config", config.to_str().unwrap()])
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("run.conf");
    fs::write(&path, format!("out = {}\n{body}", dir.join("out").display())).unwrap();
    path
}

fn criterion_9() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cohort = synth_cohort::<f64>(500, 4, SynthModel::ProportionalHazards, &[1.0, 1.0, 0.0, 0.0], 0.3, 9)
        .unwrap()
        .cohort;
    let input = tmp.path().join("cohort.csv");
    cohort.write_csv(fs::File::create(&input).unwrap()).unwrap();
    let body = format!(
        "input = {}\ninput_format = cohort\nfamilies = rsf,gbsa,ssvm,gb_cox,gb_aft,gb_reg_weighted\n\
         param.rsf.n_trees = 30\nparam.gbsa.n_rounds = 30\nparam.gb_cox.n_rounds = 30\n\
         param.gb_aft.n_rounds = 30\nparam.gb_reg_weighted.n_rounds = 30\n",
        input.display()
    );
    let config = write_config(tmp.path(), &body);
    ensure!(cli("prep", &config) == 0, "prep failed");
    ensure!(cli("train-eval", &config) == 0, "train-eval failed");
    let out = tmp.path().join("out");

    let metrics: Value = serde_json::from_str(&fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
    let mut seen = Vec::new();
    for row in metrics["models"].as_array().unwrap() {
        let name = row["model"].as_str().unwrap();
        let (want_ibs, want_auc) = match name {
            "gb_cox" => (false, true),
            "gb_aft" | "gb_reg_weighted" => (false, false),
            _ => (true, true),
        };
        let (has_ibs, has_auc) = (row.get("ibs").is_some(), row.get("mean_td_auc").is_some());
        ensure!(
            has_ibs == want_ibs && has_auc == want_auc,
            "{name}: ibs {has_ibs}, td-auc {has_auc}"
        );
        seen.push(name.to_string());
    }
    ensure!(seen.len() == 6, "models reported: {seen:?}");
    let table = fs::read_to_string(out.join("metrics.csv")).unwrap();
    for line in table.lines().skip(1) {
        let cells: Vec<&str> = line.split(',').collect();
        let blank = |k: usize| cells[k].is_empty();
        let ok = match cells[0] {
            "gb_cox" => blank(3) && !blank(4) && !blank(5),
            "gb_aft" | "gb_reg_weighted" => blank(3) && blank(4) && blank(5),
            _ => !blank(3) && !blank(4) && !blank(5),
        };
        ensure!(ok, "metrics.csv row {line}");
    }

    let test = Cohort64::read_csv(fs::File::open(out.join("test.csv")).unwrap()).unwrap();
    let grid = TimeGrid::new(vec![0.5, 1.0, 2.0]).unwrap();
    for name in ["gb_cox", "gb_aft", "gb_reg_weighted"] {
        let model = FittedModel64::read_json(fs::File::open(out.join(format!("models/{name}.json"))).unwrap()).unwrap();
        match predict_curves(&model, test.features(), &grid) {
            Err(SurvError::NoSurvivalFunction(_)) => {}
            other => return Err(format!("{name}: predict_curves gave {:?}", other.map(|c| c.len()))),
        }
    }
    Ok("IBS absent for gb_cox/gb_aft/gb_reg_weighted, td-AUC absent for gb_aft/gb_reg_weighted, typed curve error".into())
}

fn files_under(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

const E2E_CONFIG: &str = "
seed = 20240601
synth.n = 700
synth.format = registry
families = rsf,gbsa,ssvm,gb_cox,gb_aft,gb_reg_weighted,horizon_classifier
horizons = 12, 24
samplers = all
trials = 5
folds = 3
explain.repeats = 3
explain.background = 10
explain.sample = 20
";

fn criterion_10() -> Outcome {
    let started = Instant::now();
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut runs = Vec::new();
    for k in 0..2 {
        let dir = tmp.path().join(format!("run{k}"));
        fs::create_dir_all(&dir).unwrap();
        let input = dir.join("out/synth.csv");
        let config = write_config(&dir, &format!("input = {}\n{E2E_CONFIG}", input.display()));
        for verb in ["synth", "prep", "hpo", "train-eval", "explain"] {
            let code = cli(verb, &config);
            ensure!(code == 0, "run {k}: {verb} exited with {code}");
        }
        runs.push(files_under(&dir.join("out")));
    }
    let (a, b) = (&runs[0], &runs[1]);
    let names: Vec<&PathBuf> = a.iter().map(|(p, _)| p).collect();
    ensure!(
        names == b.iter().map(|(p, _)| p).collect::<Vec<_>>(),
        "different file sets"
    );
    for ((path, x), (_, y)) in a.iter().zip(b) {
        ensure!(x == y, "{} differs between runs", path.display());
    }
    let elapsed = started.elapsed();
    ensure!(elapsed < Duration::from_secs(600), "took {elapsed:?}");
    let studies = names.iter().filter(|p| p.starts_with("studies")).count();
    Ok(format!(
        "{} files byte-identical ({studies} studies), {:.1}s for both runs",
        a.len(),
        elapsed.as_secs_f64()
    ))
}

fn main() {
    let criteria: [(&str, Check); 10] = [
        ("harrell_c matches the pairwise oracle", criterion_1),
        ("ipcw_c reduces to harrell_c without censoring", criterion_2),
        ("estimator fixtures", criterion_3),
        ("loss gradients match finite differences", criterion_4),
        ("model sanity on synthetic cohorts", criterion_5),
        ("integrated Brier score oracle", criterion_6),
        ("sampler convergence", criterion_7),
        ("attribution axioms", criterion_8),
        ("applicability matrix", criterion_9),
        ("end-to-end determinism", criterion_10),
    ];
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let number = k + 1;
        if !only.is_empty() && !only.contains(&number) {
            continue;
        }
        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|panic| {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {number:>2} PASS ({secs:.1}s) {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {number:>2} FAIL ({secs:.1}s) {name}: {detail}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
