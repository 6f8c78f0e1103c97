//! Shared fixtures for the command-line tests: a mock chat-completion server
//! playing both the trace generator and a three-judge panel, the records it
//! understands, and helpers for running the `ris` binary.
#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use axum::extract::State;
use axum::routing::post;
use axum::{Json, Router};
use ris_core::{Dataset, TaskRecord};
use serde_json::{json, Value};

#[derive(Clone, Default)]
pub struct Counters {
    pub generator: Arc<AtomicUsize>,
    pub judges: Arc<AtomicUsize>,
}

impl Counters {
    pub fn judge_calls(&self) -> usize {
        self.judges.load(Ordering::SeqCst)
    }
    pub fn generator_calls(&self) -> usize {
        self.generator.load(Ordering::SeqCst)
    }
}

/// Ten GSM8K-style records; record k asks for k + k.
pub fn records() -> Vec<TaskRecord> {
    (0..10)
        .map(|k| TaskRecord {
            id: format!("q{k}"),
            dataset: Dataset::Gsm8k,
            question: format!("Item {k}: what is {k} plus {k}?"),
            gold_answer: (2 * k).to_string(),
            context: Some(format!("Adding {k} to itself doubles it.")),
            metadata: Default::default(),
        })
        .collect()
}

/// Step aggregates the scripted panel will award, per condition and record:
///
/// | condition    | records   | aggregates           | RIS  |
/// |--------------|-----------|----------------------|------|
/// | Baseline     | 0–3       | 1, 0.5               | 0.75 |
/// | Baseline     | 4–9       | 1, 1                 | 1.0  |
/// | RAG          | 0         | 1, 0                 | 0.5  |
/// | RAG          | 1–9       | 1, 1, 1              | 1.0  |
/// | SelfCritique | 0–5       | 1, 1, 1, 1, 0        | 0.8  |
/// | SelfCritique | 6–9       | 0.5, 0.5             | 0.5  |
/// | Verification | all       | 1, 1, 0.5, 0.5       | 0.75 |
///
/// Records 0 and 5 answer wrongly, so 8 of 10 traces per condition are
/// correct. Flawed-and-correct (RIS < 0.8): Baseline 3 (q1–q3), RAG 0,
/// SelfCritique 4 (q6–q9), Verification 8 — 15 of 32.
pub fn aggregates(condition: &str, k: usize) -> Vec<f64> {
    match (condition, k) {
        ("Baseline", 0..=3) => vec![1.0, 0.5],
        ("Baseline", _) => vec![1.0, 1.0],
        ("RAG", 0) => vec![1.0, 0.0],
        ("RAG", _) => vec![1.0, 1.0, 1.0],
        ("SelfCritique", 0..=5) => vec![1.0, 1.0, 1.0, 1.0, 0.0],
        ("SelfCritique", _) => vec![0.5, 0.5],
        ("Verification", _) => vec![1.0, 1.0, 0.5, 0.5],
        _ => unreachable!("{condition}"),
    }
}

pub const EXPECTED_CORRECT: usize = 32;
pub const EXPECTED_RWR: usize = 15;

fn panel(aggregate: f64, variant: usize) -> &'static str {
    let options: &[&str] = match aggregate {
        a if a == 1.0 => &["1.0/1.0/1.0", "1.0/1.0/0.5", "0.0/1.0/1.0"],
        a if a == 0.5 => &["0.5/0.5/0.5", "0.0/0.5/1.0", "0.5/1.0/0.5"],
        _ => &["0.0/0.0/0.0", "0.0/0.5/0.0"],
    };
    options[variant % options.len()]
}

fn error_for(condition: &str, pos: usize) -> &'static str {
    match (condition, pos % 2) {
        ("Baseline", _) => "Numerical Miscalculation/Numerical Miscalculation/Other",
        ("RAG", _) => "Factual Error/Factual Error/Logical Leap",
        ("SelfCritique", _) => "Logical Leap/Logical Leap/Logical Leap",
        (_, 0) => "Numerical Miscalculation/Logical Leap/Numerical Miscalculation",
        _ => "Factual Error/Other/Factual Error",
    }
}

fn condition_of(system: &str, user: &str) -> &'static str {
    if system.starts_with("Verify each step") {
        "Verification"
    } else if system.contains("review your reasoning") {
        "SelfCritique"
    } else if user.starts_with("Context:") {
        "RAG"
    } else {
        "Baseline"
    }
}

/// The completion the mock generator writes for a record and condition.
pub fn completion_for(condition: &str, k: usize) -> String {
    let mut out = String::new();
    for (i, agg) in aggregates(condition, k).into_iter().enumerate() {
        let usage = if i % 2 == 0 { "Misapplication/Misapplication/Correct" } else { "Correct/Irrelevant/Correct" };
        out.push_str(&format!(
            "Step {}: Work on {k} + {k}, part {i} v={}; err={}; use={};\n",
            i + 1,
            panel(agg, k + i),
            error_for(condition, i),
            usage
        ));
    }
    let answer = if k % 5 == 0 { 2 * k + 1 } else { 2 * k };
    out.push_str(&format!("Answer: [{answer}]"));
    out
}

fn field<'a>(step: &'a str, tag: &str, judge: usize) -> &'a str {
    let start = step.find(tag).map(|i| i + tag.len()).unwrap_or(step.len());
    let rest = &step[start..];
    let end = rest.find(';').unwrap_or(rest.len());
    rest[..end].split('/').nth(judge).unwrap_or("")
}

async fn chat(State(c): State<Counters>, Json(body): Json<Value>) -> Json<Value> {
    let model = body["model"].as_str().unwrap_or_default();
    let messages = body["messages"].as_array().cloned().unwrap_or_default();
    let content = |role: &str| {
        messages
            .iter()
            .find(|m| m["role"] == role)
            .and_then(|m| m["content"].as_str())
            .unwrap_or_default()
            .to_string()
    };
    let reply = if let Some(judge) = model.strip_prefix("judge-") {
        c.judges.fetch_add(1, Ordering::SeqCst);
        let judge: usize = judge.parse().unwrap();
        let prompt = content("user");
        let step = prompt.lines().find_map(|l| l.strip_prefix("Generated Step: ")).unwrap_or_default();
        if prompt.contains("Output only the category name") {
            field(step, "err=", judge).to_string()
        } else if prompt.contains("'Misapplication'") {
            field(step, "use=", judge).to_string()
        } else {
            format!("Score: {}", field(step, "v=", judge))
        }
    } else {
        c.generator.fetch_add(1, Ordering::SeqCst);
        let user = content("user");
        let condition = condition_of(&content("system"), &user);
        let k: usize = user.split("Item ").nth(1).and_then(|s| s.split(':').next()).unwrap().parse().unwrap();
        completion_for(condition, k)
    };
    Json(json!({"choices": [{"message": {"role": "assistant", "content": reply}}]}))
}

/// Starts the mock on an ephemeral port and returns its base URL.
pub async fn spawn_mock_llm() -> (String, Counters) {
    let counters = Counters::default();
    let app = Router::new().route("/chat/completions", post(chat)).with_state(counters.clone());
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    (base, counters)
}

/// Judge configuration pointing three scripted judges at the mock.
pub fn write_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("ris.toml");
    std::fs::write(
        &path,
        "seed = 7\n\n[generation]\nmodels = [\"gen-a\"]\ntemperature = 0.0\n\n\
         [judges]\nmax_in_flight = 16\n\
         [[judges.judges]]\nmodel = \"judge-0\"\n[[judges.judges]]\nmodel = \"judge-1\"\n[[judges.judges]]\nmodel = \"judge-2\"\n",
    )
    .unwrap();
    path
}

pub fn ris(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ris"));
    cmd.args(args).env_remove("RIS_API_BASE").env_remove("RIS_EMBED_BASE").env("RIS_LOG", "warn");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("running ris")
}

/// Runs `ris` off the async runtime so the in-process mock keeps serving.
pub async fn ris_async(args: Vec<String>, env: Vec<(String, String)>) -> Output {
    tokio::task::spawn_blocking(move || {
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        let env: Vec<(&str, &str)> = env.iter().map(|(k, v)| (k.as_str(), v.as_str())).collect();
        ris(&args, &env)
    })
    .await
    .unwrap()
}

pub fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "ris failed ({:?})\nstdout:\n{}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

pub fn read_csv(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}
