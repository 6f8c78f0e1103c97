//! Acceptance suite. Each criterion runs in isolation and prints one
//! `PASS`/`FAIL` line; the test fails if any criterion fails. Tolerances are
//! fixed here and must not be loosened to make a criterion pass.
//!
//! Run with `cargo test -p ris-cli --test acceptance -- --nocapture`.

mod support;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Instant;

use async_trait::async_trait;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use ris_core::features::{fallback_embed, raw_row, structural_features, NormStats, FEATURE_DIM};
use ris_core::judging::aggregate_verdicts;
use ris_core::stats::{cohens_d, fleiss_kappa, pearson_r, posthoc_power, rwr_table, threshold_sweep, RatingMatrix};
use ris_core::trace::{extract_final_answer, parse_steps};
use ris_core::verifier::{
    focal_loss, load, read_model, save, sigmoid, stratified_split, train, write_model, EvalReport, Example, Mlp,
    TrainConfig, VerifierError, VerifierModel, CANONICAL_DIMS,
};
use ris_core::{Condition, Dataset, ReasoningTrace, ScoredTrace, TaskRecord};
use ris_gateway::{ChatRequest, ChatTransport, GatewayError, JudgeConfig, JudgePanel, JudgeSpec};
use serde_json::{json, Value};

// Pinned tolerances and budgets.
const STATS_TOL: f64 = 1e-9;
const POWER_TOL: f64 = 1e-6;
const PROPERTY_CASES: usize = 1_000;
const FOCAL_CLOSED_FORM: f64 = 0.0433217;
const FOCAL_REDUCTION_TOL: f64 = 1e-12;
const FOCAL_GRAD_REL_TOL: f64 = 1e-5;
const TRAIN_MIN_VAL_F1: f64 = 0.95;
const TRAIN_MAX_EPOCHS: usize = 200;
const TRAIN_MAX_SECS: f64 = 120.0;
const PARSE_MAX_SECS: f64 = 1.0;
const LATENCY_REQUESTS: usize = 1_000;
const LATENCY_P50_MS: f64 = 10.0;
const LATENCY_P99_MS: f64 = 25.0;
const RIS_THRESHOLD: f64 = 0.8;

type Verdict = Result<String, String>;

macro_rules! require {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn runtime() -> tokio::runtime::Runtime {
    tokio::runtime::Builder::new_multi_thread().worker_threads(4).enable_all().build().unwrap()
}

#[test]
fn acceptance() {
    let criteria: Vec<(&str, fn() -> Verdict)> = vec![
        ("parser fixtures", parser_fixtures),
        ("statistics oracle suite", statistics_oracles),
        ("RIS pipeline with mock judge panel", ris_pipeline),
        ("focal loss", focal),
        ("trainer", trainer),
        ("evaluation metrics", evaluation_metrics),
        ("model codec round-trip", codec),
        ("service latency", service_latency),
        ("end-to-end desk-scale run", end_to_end),
    ];
    let mut failed = Vec::new();
    for (name, check) in criteria {
        let start = Instant::now();
        let verdict = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|panic| {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match verdict {
            Ok(detail) => println!("PASS  {name:<38} ({secs:.2}s) {detail}"),
            Err(reason) => {
                println!("FAIL  {name:<38} ({secs:.2}s) {reason}");
                failed.push(name);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

// ---------------------------------------------------------------------------

#[derive(serde::Deserialize)]
struct ParserCase {
    name: String,
    raw_output: String,
    steps: Vec<String>,
    final_answer: Option<String>,
}

fn parser_fixtures() -> Verdict {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/parser_cases.json");
    let cases: Vec<ParserCase> = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    require!(cases.len() == 25, "expected 25 fixtures, found {}", cases.len());
    require!(
        cases.iter().any(|c| c.raw_output.starts_with("Step 1: To find 15% of 80")),
        "worked percentage example missing"
    );
    let start = Instant::now();
    for case in &cases {
        let steps = parse_steps(&case.raw_output);
        let texts: Vec<&str> = steps.iter().map(|s| s.text.as_str()).collect();
        require!(texts == case.steps, "`{}`: steps {texts:?}, labeled {:?}", case.name, case.steps);
        let answer = extract_final_answer(&case.raw_output);
        require!(answer == case.final_answer, "`{}`: answer {answer:?}, labeled {:?}", case.name, case.final_answer);
    }
    let secs = start.elapsed().as_secs_f64();
    require!(secs < PARSE_MAX_SECS, "parsing took {secs}s");
    Ok(format!("25/25 fixtures in {:.1} ms", secs * 1e3))
}

// ---------------------------------------------------------------------------
// Statistics: independent oracles.

/// Fleiss' kappa by enumerating ordered rater pairs.
fn kappa_oracle(ratings: &[Vec<usize>], k: usize) -> f64 {
    let n = ratings[0].len();
    let mut agree = 0.0;
    let mut totals = vec![0usize; k];
    for item in ratings {
        let pairs = (0..n).flat_map(|a| (0..n).map(move |b| (a, b))).filter(|&(a, b)| a != b && item[a] == item[b]).count();
        agree += pairs as f64 / (n * (n - 1)) as f64;
        item.iter().for_each(|&c| totals[c] += 1);
    }
    let p_bar = agree / ratings.len() as f64;
    let all = (ratings.len() * n) as f64;
    let p_e: f64 = totals.iter().map(|&t| (t as f64 / all).powi(2)).sum();
    (p_bar - p_e) / (1.0 - p_e)
}

fn rating_matrix(ratings: &[Vec<usize>], k: usize) -> RatingMatrix {
    RatingMatrix::new(
        ratings.iter().map(|item| (0..k).map(|c| item.iter().filter(|&&r| r == c).count() as u32).collect()).collect(),
    )
    .unwrap()
}

fn d_oracle(t: &[f64], b: &[f64]) -> f64 {
    let m = |x: &[f64]| x.iter().sum::<f64>() / x.len() as f64;
    let ss = |x: &[f64]| x.iter().map(|v| (v - m(x)).powi(2)).sum::<f64>();
    (m(t) - m(b)) / ((ss(t) + ss(b)) / (t.len() + b.len() - 2) as f64).sqrt()
}

fn r_oracle(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let z = |v: &[f64]| {
        let mu = v.iter().sum::<f64>() / n;
        let sd = (v.iter().map(|a| (a - mu).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        v.iter().map(|a| (a - mu) / sd).collect::<Vec<_>>()
    };
    z(x).iter().zip(z(y)).map(|(a, b)| a * b).sum::<f64>() / (n - 1.0)
}

/// Normal CDF by Simpson integration; the critical value by bisection.
fn power_oracle(d: f64, n1: usize, n2: usize, alpha: f64) -> f64 {
    let phi = |x: f64| {
        let pdf = |t: f64| (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let steps = 20_000;
        let h = x / steps as f64;
        let inner: f64 = (1..steps).map(|i| pdf(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 }).sum();
        0.5 + (pdf(0.0) + pdf(x) + inner) * h / 3.0
    };
    let (mut lo, mut hi) = (0.0, 10.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if phi(mid) < 1.0 - alpha / 2.0 { lo = mid } else { hi = mid }
    }
    let z = 0.5 * (lo + hi);
    let lambda = d.abs() * ((n1 * n2) as f64 / (n1 + n2) as f64).sqrt();
    phi(lambda - z) + phi(-lambda - z)
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

fn statistics_oracles() -> Verdict {
    // Agreement.
    let unanimous = vec![vec![0, 0, 0], vec![2, 2, 2], vec![1, 1, 1]];
    require!(fleiss_kappa(&rating_matrix(&unanimous, 3)) == 1.0, "kappa on unanimous input is not 1");
    let spread = vec![vec![0, 1, 2]; 4];
    let k = fleiss_kappa(&rating_matrix(&spread, 3));
    require!(close(k, -0.5, STATS_TOL) && close(k, kappa_oracle(&spread, 3), STATS_TOL), "spread kappa {k}");
    let mixed = vec![vec![2, 2, 1], vec![0, 0, 0]];
    let k = fleiss_kappa(&rating_matrix(&mixed, 3));
    require!(close(k, 5.0 / 11.0, STATS_TOL) && close(k, kappa_oracle(&mixed, 3), STATS_TOL), "mixed kappa {k}");

    // Effect size and correlation fixtures.
    require!(close(cohens_d(&[2.0, 3.0, 4.0], &[1.0, 2.0, 3.0]).unwrap(), 1.0, STATS_TOL), "d of unit shift");
    let (t, b) = ([0.9, 0.75, 1.0, 0.6, 0.85], [0.5, 0.8, 0.65, 0.7]);
    require!(close(cohens_d(&t, &b).unwrap(), d_oracle(&t, &b), STATS_TOL), "d fixture");
    let x = [1.0, 2.0, 3.0, 4.0];
    let r = pearson_r(&x, &[1.0, 3.0, 2.0, 4.0]).unwrap();
    require!(close(r, 0.8, STATS_TOL) && close(r, r_oracle(&x, &[1.0, 3.0, 2.0, 4.0]), STATS_TOL), "r fixture {r}");
    for (d, n1, n2) in [(0.0, 298, 298), (0.41, 298, 298), (0.2, 50, 80), (-0.35, 120, 100), (0.8, 10, 12)] {
        let (ours, oracle) = (posthoc_power(d, n1, n2, 0.05), power_oracle(d, n1, n2, 0.05));
        require!(close(ours, oracle, POWER_TOL), "power d={d}: {ours} vs {oracle}");
    }

    // Random cases.
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let sample = |rng: &mut ChaCha8Rng| {
        let n = rng.random_range(2..30);
        (0..n).map(|_| rng.random::<f64>()).collect::<Vec<f64>>()
    };
    for case in 0..PROPERTY_CASES {
        let (t, b) = (sample(&mut rng), sample(&mut rng));
        let d = cohens_d(&t, &b).unwrap();
        require!(close(d, d_oracle(&t, &b), STATS_TOL * d.abs().max(1.0)), "case {case}: d vs oracle");
        require!(cohens_d(&b, &t).unwrap() == -d, "case {case}: d is not antisymmetric");

        let n = rng.random_range(3..40);
        let x: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let r = pearson_r(&x, &y).unwrap();
        require!(close(r, r_oracle(&x, &y), STATS_TOL), "case {case}: r vs oracle");
        let (a, s, c, e) = (rng.random_range(0.1..10.0), rng.random_range(-5.0..5.0), rng.random_range(0.1..10.0), rng.random_range(-5.0..5.0));
        let x2: Vec<f64> = x.iter().map(|v| a * v + s).collect();
        let y2: Vec<f64> = y.iter().map(|v| c * v + e).collect();
        require!(close(pearson_r(&x2, &y2).unwrap(), r, STATS_TOL), "case {case}: r not affine invariant");

        let raters = rng.random_range(2..6);
        let items: Vec<Vec<usize>> = (0..rng.random_range(2..20)).map(|_| (0..raters).map(|_| rng.random_range(0..3)).collect()).collect();
        let oracle = kappa_oracle(&items, 3);
        if oracle.is_finite() {
            require!(close(fleiss_kappa(&rating_matrix(&items, 3)), oracle, STATS_TOL), "case {case}: kappa vs oracle");
        }
    }
    Ok(format!("fixtures + {PROPERTY_CASES} random cases within {STATS_TOL:e} (power {POWER_TOL:e})"))
}

// ---------------------------------------------------------------------------
// RIS pipeline over a scripted panel.

/// Judge `j` answers with the j-th field of the `v=a/b/c` token in the step.
#[derive(Default)]
struct ScriptedJudges {
    calls: AtomicUsize,
}

#[async_trait]
impl ChatTransport for ScriptedJudges {
    async fn complete(&self, _base: &str, request: &ChatRequest) -> Result<String, GatewayError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let judge: usize = request.model.strip_prefix("judge-").unwrap().parse().unwrap();
        let prompt = &request.messages.last().unwrap().content;
        let step = prompt.lines().find_map(|l| l.strip_prefix("Generated Step: ")).unwrap();
        let token = step.split("v=").nth(1).unwrap().split(';').next().unwrap();
        Ok(format!("Score: {}", token.split('/').nth(judge).unwrap()))
    }
}

fn panel_triple(aggregate: f64, variant: usize) -> &'static str {
    let options: &[&str] = match aggregate {
        a if a == 1.0 => &["1.0/1.0/1.0", "1.0/1.0/0.0", "0.5/1.0/1.0"],
        a if a == 0.5 => &["0.0/0.5/1.0", "0.5/0.5/1.0", "1.0/0.0/0.5"],
        _ => &["0.0/0.0/0.0", "0.0/0.0/0.5", "1.0/0.0/0.0"],
    };
    options[variant % options.len()]
}

/// (step aggregates, RIS) for each designed integrity level.
fn design(ris: &str) -> (Vec<f64>, f64) {
    match ris {
        "1" => (vec![1.0, 1.0], 1.0),
        "7/8" => (vec![1.0, 1.0, 1.0, 0.5], 0.875),
        "4/5" => (vec![1.0, 1.0, 1.0, 1.0, 0.0], 0.8),
        "3/4" => (vec![1.0, 0.5], 0.75),
        "2/3" => (vec![1.0, 1.0, 0.0], 2.0 / 3.0),
        "1/2" => (vec![1.0, 0.0], 0.5),
        _ => (vec![0.0, 0.0], 0.0),
    }
}

#[derive(Clone, Copy)]
enum Outcome {
    Correct,
    Wrong,
    NoAnswer,
}

/// 60 traces, 15 per (model, dataset) cell.
fn ris_corpus() -> Vec<(TaskRecord, ReasoningTrace, f64)> {
    use Outcome::*;
    let plan: [(&str, Dataset, Vec<(&str, Outcome, usize)>); 4] = [
        ("A", Dataset::Gsm8k, vec![
            ("1", Correct, 4), ("7/8", Correct, 2), ("4/5", Correct, 1), ("3/4", Correct, 1), ("1/2", Correct, 2),
            ("0", Wrong, 2), ("1", Wrong, 2), ("1/2", NoAnswer, 1),
        ]),
        ("A", Dataset::Arc, vec![("1", Correct, 6), ("4/5", Correct, 3), ("2/3", Correct, 3), ("1/2", Wrong, 3)]),
        ("B", Dataset::Gsm8k, vec![("1/2", Correct, 4), ("1", Correct, 4), ("0", Wrong, 7)]),
        ("B", Dataset::Arc, vec![("1", Wrong, 5), ("1/2", Wrong, 5), ("3/4", NoAnswer, 5)]),
    ];
    let mut out = Vec::new();
    for (model, dataset, groups) in plan {
        let (gold, wrong) = if dataset == Dataset::Arc { ("B", "C") } else { ("42", "7") };
        let mut i = 0;
        for (level, outcome, count) in groups {
            for _ in 0..count {
                let id = format!("{model}-{dataset}-{i}");
                let record = TaskRecord {
                    id: id.clone(),
                    dataset,
                    question: format!("Question {id}?"),
                    gold_answer: gold.into(),
                    context: None,
                    metadata: Default::default(),
                };
                let (aggregates, ris) = design(level);
                let mut raw = String::new();
                for (s, agg) in aggregates.into_iter().enumerate() {
                    raw.push_str(&format!("Step {}: part {s} v={};\n", s + 1, panel_triple(agg, i + s)));
                }
                match outcome {
                    Correct => raw.push_str(&format!("Answer: [{gold}]")),
                    Wrong => raw.push_str(&format!("Answer: [{wrong}]")),
                    NoAnswer => {}
                }
                let trace = ReasoningTrace::from_output(&record, model, Condition::Baseline, raw);
                out.push((record, trace, ris));
                i += 1;
            }
        }
    }
    out
}

fn ris_pipeline() -> Verdict {
    let corpus = ris_corpus();
    require!(corpus.len() == 60, "corpus has {} traces", corpus.len());
    let config = JudgeConfig {
        judges: (0..3).map(|j| JudgeSpec::new(format!("judge-{j}"))).collect(),
        api_base: Some("http://judges.invalid".into()),
        ..JudgeConfig::default()
    };
    let transport = Arc::new(ScriptedJudges::default());
    let panel = JudgePanel::new(config, transport.clone()).map_err(|e| e.to_string())?;
    let items: Vec<_> = corpus.iter().map(|(r, t, _)| (r.clone(), t.clone())).collect();
    let scored: Vec<ScoredTrace> = runtime()
        .block_on(panel.score_all(&items, RIS_THRESHOLD))
        .into_iter()
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;

    for (s, (_, _, ris)) in scored.iter().zip(&corpus) {
        require!(s.ris == *ris, "{}: RIS {} != {ris}", s.trace.record_id, s.ris);
    }
    let boundary = scored.iter().filter(|s| s.ris == 0.8).collect::<Vec<_>>();
    require!(boundary.len() == 4 && boundary.iter().all(|s| !s.flawed), "a trace at RIS 0.8 counted as flawed");

    // Counted by hand from the plan above.
    let table = rwr_table(&scored, RIS_THRESHOLD);
    let rows: Vec<(String, Dataset, usize, usize, Option<f64>)> = table
        .rows
        .iter()
        .map(|r| (r.model.clone(), r.dataset, r.correct_count, r.flawed_given_correct_count, r.rwr_rate))
        .collect();
    let expected = vec![
        ("A".to_string(), Dataset::Gsm8k, 10, 3, Some(0.3)),
        ("A".to_string(), Dataset::Arc, 12, 3, Some(0.25)),
        ("B".to_string(), Dataset::Gsm8k, 8, 4, Some(0.5)),
        ("B".to_string(), Dataset::Arc, 0, 0, None),
    ];
    require!(rows == expected, "RWR rows {rows:?}");
    require!(
        table.model_averages == [("A".to_string(), Some(0.275)), ("B".to_string(), Some(0.5))],
        "model averages {:?}",
        table.model_averages
    );
    require!(table.dataset_averages == [(Dataset::Gsm8k, Some(0.4)), (Dataset::Arc, Some(0.25))], "dataset averages");
    require!(table.overall_average.is_some_and(|v| close(v, 0.35, 1e-15)), "overall {:?}", table.overall_average);

    let sweep: Vec<(f64, usize, Option<f64>)> = threshold_sweep(&scored, &[0.7, 0.8, 0.9])
        .map_err(|e| e.to_string())?
        .iter()
        .map(|p| (p.threshold, p.flagged, p.rwr_rate))
        .collect();
    let expected_sweep = [(0.7, 27, Some(9.0 / 30.0)), (0.8, 33, Some(10.0 / 30.0)), (0.9, 39, Some(16.0 / 30.0))];
    require!(sweep == expected_sweep, "sweep {sweep:?}");

    // Majority vote does not depend on judge order.
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for case in 0..PROPERTY_CASES {
        let n = rng.random_range(1..=5);
        let mut scores: Vec<f64> = (0..n).map(|_| [0.0, 0.5, 1.0][rng.random_range(0..3)]).collect();
        let a = aggregate_verdicts(&scores);
        scores.shuffle(&mut rng);
        require!(aggregate_verdicts(&scores) == a, "case {case}: {scores:?} depends on order");
    }
    Ok(format!(
        "60 traces, {} judge calls, exact table and sweep; {PROPERTY_CASES} shuffled panels",
        transport.calls.load(Ordering::SeqCst)
    ))
}

// ---------------------------------------------------------------------------

fn focal() -> Verdict {
    let (loss, _) = focal_loss(0.5, true, 2.0, 0.25);
    require!(close(loss, 0.25 * 0.25 * std::f64::consts::LN_2, 1e-15), "closed form {loss}");
    require!((loss * 1e7).round() / 1e7 == FOCAL_CLOSED_FORM, "{loss} does not round to {FOCAL_CLOSED_FORM}");

    let mut worst_reduction: f64 = 0.0;
    for i in 1..100 {
        let p = i as f64 / 100.0;
        for y in [false, true] {
            for alpha in [0.1, 0.25, 0.5, 0.9] {
                let (pt, at) = if y { (p, alpha) } else { (1.0 - p, 1.0 - alpha) };
                worst_reduction = worst_reduction.max((focal_loss(p, y, 0.0, alpha).0 + at * pt.ln()).abs());
            }
        }
    }
    require!(worst_reduction <= FOCAL_REDUCTION_TOL, "γ=0 deviates from weighted CE by {worst_reduction}");

    let h = 1e-4;
    let mut worst_grad: f64 = 0.0;
    for p in [0.02f64, 0.1, 0.25, 0.5, 0.75, 0.9, 0.98] {
        let z = (p / (1.0 - p)).ln();
        for y in [false, true] {
            for gamma in [0.0, 0.5, 1.0, 2.0, 3.0] {
                for alpha in [0.25, 0.5, 0.75] {
                    let f = |z: f64| focal_loss(sigmoid(z), y, gamma, alpha).0;
                    let numeric = (f(z + h) - f(z - h)) / (2.0 * h);
                    let analytic = focal_loss(sigmoid(z), y, gamma, alpha).1;
                    worst_grad = worst_grad.max((analytic - numeric).abs() / analytic.abs().max(numeric.abs()));
                }
            }
        }
    }
    require!(worst_grad <= FOCAL_GRAD_REL_TOL, "gradient relative error {worst_grad}");
    Ok(format!("loss {loss:.7}; γ=0 error {worst_reduction:.1e}; gradient rel. error {worst_grad:.1e}"))
}

/// Points labeled by a random hyperplane and pushed to distance ≥ 1 from it.
fn separable(n: usize, seed: u64) -> Vec<Example> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w: Vec<f64> = (0..FEATURE_DIM).map(|_| StandardNormal.sample(&mut rng)).collect();
    let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
    w.iter_mut().for_each(|v| *v /= norm);
    (0..n)
        .map(|_| {
            let mut x: Vec<f64> = (0..FEATURE_DIM).map(|_| StandardNormal.sample(&mut rng)).collect();
            let side = x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() >= 0.0;
            let shift = if side { 1.0 } else { -1.0 };
            x.iter_mut().zip(&w).for_each(|(a, b)| *a += shift * b);
            Example { features: x, label: side }
        })
        .collect()
}

fn trainer() -> Verdict {
    let data = separable(2000, 42);
    let config = TrainConfig { seed: 1234, ..TrainConfig::default() };
    require!(config.max_epochs == TRAIN_MAX_EPOCHS, "epoch budget is {}", config.max_epochs);
    let start = Instant::now();
    let (model, history) = train(&data, &config).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    require!(secs < TRAIN_MAX_SECS, "training took {secs:.1}s");
    require!(history.epochs.len() <= TRAIN_MAX_EPOCHS, "{} epochs", history.epochs.len());
    require!(history.best_val_macro_f1 >= TRAIN_MIN_VAL_F1, "best val macro-F1 {}", history.best_val_macro_f1);

    let (again, _) = train(&data, &config).map_err(|e| e.to_string())?;
    let bits = |m: &VerifierModel| {
        m.network().layers.iter().flat_map(|l| l.weights.iter().chain(l.bias.iter()).map(|v| v.to_bits()).collect::<Vec<_>>()).collect::<Vec<_>>()
    };
    require!(bits(&model) == bits(&again), "same seed gave different parameters");

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for trial in 0..200 {
        let labels: Vec<bool> = (0..rng.random_range(4..300)).map(|_| rng.random_bool(0.3)).collect();
        let pos = labels.iter().filter(|&&l| l).count();
        if pos == 0 || pos == labels.len() {
            continue;
        }
        let ratio = rng.random_range(0.05..0.95);
        let (train_idx, test_idx) = stratified_split(&labels, ratio, trial).map_err(|e| e.to_string())?;
        require!(train_idx.len() + test_idx.len() == labels.len(), "trial {trial}: split loses items");
        for class in [true, false] {
            let size = labels.iter().filter(|&&l| l == class).count() as f64;
            let got = train_idx.iter().filter(|&&i| labels[i] == class).count() as f64;
            require!((got - ratio * size).abs() <= 1.0, "trial {trial}: class {class} got {got} of {size}");
        }
    }
    Ok(format!(
        "val macro-F1 {:.3} at epoch {}/{} in {secs:.1}s; bit-identical rerun; split within 1",
        history.best_val_macro_f1,
        history.best_epoch,
        history.epochs.len()
    ))
}

fn evaluation_metrics() -> Verdict {
    // 8 TP, 2 FP, 2 FN, 8 TN: every per-class precision, recall and F1 is 0.8.
    let r = EvalReport::from_counts(8, 2, 2, 8, 0.5);
    require!(
        [r.precision_flawed, r.recall_flawed, r.f1_flawed, r.precision_clean, r.recall_clean, r.f1_clean, r.macro_f1]
            == [0.8; 7],
        "{r:?}"
    );
    let mut predicted = vec![true; 10];
    predicted.extend([false; 10]);
    let actual: Vec<bool> = (0..20).map(|i| (i < 8) || (10..12).contains(&i)).collect();
    require!(EvalReport::from_predictions(&predicted, &actual, 0.5) == r, "predictions disagree with the counts");
    let json = serde_json::to_value(&r).unwrap();
    require!(json["precision_flawed"] == 0.8, "report lacks precision_flawed");
    Ok("macro F1 = 0.8 exactly; precision_flawed present".into())
}

fn canonical_model(seed: u64) -> VerifierModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let norm = NormStats { mean: [3.0, 200.0, 60.0, 15.0, 8.0, 4.0, 0.9], std: [1.2, 90.0, 25.0, 6.0, 4.0, 3.0, 0.3] };
    VerifierModel::new(Mlp::he_uniform(&CANONICAL_DIMS, &mut rng), norm, 0.5).unwrap()
}

fn codec() -> Verdict {
    let model = canonical_model(21);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.risv");
    save(&path, &model, None).map_err(|e| e.to_string())?;
    let (loaded, _) = load(&path).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for i in 0..100 {
        let row: Vec<f64> = (0..FEATURE_DIM).map(|_| 2.0 * rng.random_range(-1.0..1.0)).collect();
        let (a, b) = (model.forward_slice(&row).unwrap(), loaded.forward_slice(&row).unwrap());
        require!(a.to_bits() == b.to_bits(), "input {i}: {a} != {b}");
    }
    let mut bytes = Vec::new();
    write_model(&mut bytes, &model, None).unwrap();
    let mut flipped = bytes.clone();
    let mid = bytes.len() / 2;
    flipped[mid] ^= 0x01;
    for (what, b) in [("truncated", &bytes[..bytes.len() - 9]), ("bit-flipped", &flipped[..])] {
        require!(matches!(read_model(b), Err(VerifierError::CorruptModel(_))), "{what} file accepted");
    }
    Ok("100/100 bit-identical; truncated and bit-flipped files rejected".into())
}

// ---------------------------------------------------------------------------

fn service_latency() -> Verdict {
    let rt = runtime();
    rt.block_on(async {
        let state = ris_service::ServiceState::empty();
        state.install(canonical_model(3), "acceptance".into());
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
        let base = format!("http://{}", listener.local_addr().unwrap());
        let (stop, stopped) = tokio::sync::oneshot::channel::<()>();
        let server = tokio::spawn(ris_service::serve(listener, state, async {
            let _ = stopped.await;
        }));

        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let rows: Vec<Vec<f64>> = (0..LATENCY_REQUESTS)
            .map(|i| {
                let text = format!("Step 1: Take {i} apples. Step 2: Add {} more to get {}. Answer: {}", i % 7, i + i % 7, i + i % 7);
                let trace = ReasoningTrace::from_output(
                    &TaskRecord {
                        id: i.to_string(),
                        dataset: Dataset::Gsm8k,
                        question: String::new(),
                        gold_answer: String::new(),
                        context: None,
                        metadata: Default::default(),
                    },
                    "m",
                    Condition::Baseline,
                    text.clone(),
                );
                let mut row = raw_row(&fallback_embed(&text), &structural_features(&trace));
                row[rng.random_range(0..FEATURE_DIM - 7)] += 0.01;
                row
            })
            .collect();

        let client = reqwest::Client::new();
        let url = format!("{base}/v1/verify");
        let mut latencies = Vec::with_capacity(LATENCY_REQUESTS);
        let mut first = Vec::with_capacity(LATENCY_REQUESTS);
        for row in &rows {
            let start = Instant::now();
            let body: Value = client.post(&url).json(&json!({ "features": row })).send().await.unwrap().json().await.unwrap();
            latencies.push(start.elapsed().as_secs_f64() * 1e3);
            first.push((body["probability"].as_f64().unwrap(), body["flagged"].as_bool().unwrap()));
        }
        for (row, expected) in rows.iter().zip(&first).take(100) {
            let body: Value = client.post(&url).json(&json!({ "features": row })).send().await.unwrap().json().await.unwrap();
            let again = (body["probability"].as_f64().unwrap(), body["flagged"].as_bool().unwrap());
            require!(again.0.to_bits() == expected.0.to_bits() && again.1 == expected.1, "non-deterministic response");
        }
        let _ = stop.send(());
        server.await.unwrap().unwrap();

        latencies.sort_by(f64::total_cmp);
        let pct = |q: f64| latencies[((q * latencies.len() as f64).ceil() as usize).saturating_sub(1)];
        let (p50, p99) = (pct(0.50), pct(0.99));
        require!(p50 <= LATENCY_P50_MS, "p50 {p50:.2} ms");
        require!(p99 <= LATENCY_P99_MS, "p99 {p99:.2} ms");
        Ok(format!("p50 {p50:.2} ms, p99 {p99:.2} ms over {LATENCY_REQUESTS} requests; deterministic"))
    })
}

// ---------------------------------------------------------------------------

fn end_to_end() -> Verdict {
    runtime().block_on(async {
        let (base, counters) = support::spawn_mock_llm().await;
        let dir = tempfile::tempdir().unwrap();
        let d = dir.path();
        let config = support::write_config(d).display().to_string();
        let records = support::records();
        std::fs::write(d.join("records.jsonl"), records.iter().map(|r| serde_json::to_string(r).unwrap() + "\n").collect::<String>())
            .unwrap();
        let p = |name: &str| d.join(name).display().to_string();
        let steps: [Vec<String>; 5] = [
            vec!["generate".into(), "--in".into(), p("records.jsonl"), "--out".into(), p("traces.jsonl")],
            vec!["judge".into(), "--in".into(), p("traces.jsonl"), "--records".into(), p("records.jsonl"), "--out".into(), p("scored.jsonl")],
            vec!["classify".into(), "--in".into(), p("scored.jsonl"), "--records".into(), p("records.jsonl"), "--out".into(), p("classified.jsonl")],
            vec!["stats".into(), "--in".into(), p("classified.jsonl"), "--out".into(), p("rwr.csv")],
            vec!["report".into(), "--in".into(), p("classified.jsonl"), "--out".into(), p("report")],
        ];
        for args in steps {
            let mut full = vec!["--config".to_string(), config.clone()];
            full.extend(args.iter().cloned());
            let out = support::ris_async(full, vec![("RIS_API_BASE".into(), base.clone())]).await;
            require!(out.status.success(), "`ris {}` failed: {}", args[0], String::from_utf8_lossy(&out.stderr));
        }

        let report = d.join("report");
        let artifacts: Vec<PathBuf> = ["rwr_table.csv", "threshold_sweep.csv", "error_deltas.csv", "effect_sizes.csv", "effects.svg"]
            .iter()
            .map(|f| report.join(f))
            .chain([d.join("rwr.csv")])
            .collect();
        for a in &artifacts {
            require!(a.exists(), "{} missing", a.display());
        }
        let classified: Vec<Value> =
            std::fs::read_to_string(d.join("classified.jsonl")).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        require!(classified.len() == 40, "{} traces", classified.len());

        // The RWR table agrees with the traces and with the design.
        let rwr = support::read_csv(&d.join("rwr.csv"));
        let correct = classified.iter().filter(|t| t["trace"]["answer_correct"] == true).count();
        let rwr_count = classified
            .iter()
            .filter(|t| t["trace"]["answer_correct"] == true && t["ris"].as_f64().unwrap() < RIS_THRESHOLD)
            .count();
        require!((correct, rwr_count) == (support::EXPECTED_CORRECT, support::EXPECTED_RWR), "design mismatch: {correct}, {rwr_count}");
        require!(
            rwr[1][2..5] == [40.to_string(), correct.to_string(), rwr_count.to_string()],
            "rwr.csv row {:?}",
            rwr[1]
        );
        require!(std::fs::read(d.join("rwr.csv")).unwrap() == std::fs::read(report.join("rwr_table.csv")).unwrap(), "stats and report tables differ");

        // Error deltas: per condition, percentages renormalize to 100 and
        // deltas cancel; counted steps match the labels in the traces.
        let deltas = support::read_csv(&report.join("error_deltas.csv"));
        for condition in ["Baseline", "RAG", "SelfCritique", "Verification"] {
            let rows: Vec<&Vec<String>> = deltas.iter().filter(|r| r[0] == condition).collect();
            require!(!rows.is_empty(), "no delta rows for {condition}");
            let percent: f64 = rows.iter().map(|r| r[4].parse::<f64>().unwrap()).sum();
            let delta: f64 = rows.iter().map(|r| r[5].parse::<f64>().unwrap()).sum();
            require!(close(percent, 100.0, 1e-9), "{condition} percentages sum to {percent}");
            require!(close(delta, 0.0, 1e-9), "{condition} deltas sum to {delta}");
            let labels: usize = classified
                .iter()
                .filter(|t| t["trace"]["condition"] == condition)
                .map(|t| t["error_labels"].as_array().unwrap().len())
                .sum();
            let counted: usize = rows[0][1].parse::<usize>().unwrap() + rows[0][2].parse::<usize>().unwrap();
            require!(counted == labels, "{condition}: table counts {counted} labels, traces hold {labels}");
        }
        let effects = support::read_csv(&report.join("effect_sizes.csv"));
        let svg = std::fs::read_to_string(report.join("effects.svg")).unwrap();
        let bars = svg.matches("class=\"bar ").count();
        require!(effects.len() - 1 == 3 && bars == 3, "{} effect rows, {bars} bars", effects.len() - 1);
        Ok(format!(
            "4 conditions × 10 records; {} generator + {} judge calls; {} artifacts consistent",
            counters.generator_calls(),
            counters.judge_calls(),
            artifacts.len()
        ))
    })
}
