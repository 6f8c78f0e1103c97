//! Subcommand implementations.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use ris_core::features::{fallback_embed, raw_row, structural_features, FeatureRecord};
use ris_core::stats::{
    effect_sizes, error_delta_table, mean_error_position, misuse_ris_correlation, panel_kappa, rwr_table,
    threshold_sweep, StatsError, DELTA_CATEGORIES,
};
use ris_core::trace::{read_records, read_traces, write_traces};
use ris_core::verifier::{self, stratified_split, train, Example};
use ris_core::{jsonl, ReasoningTrace, ScoredTrace, TaskRecord};
use ris_gateway::{EmbeddingClient, GatewayError, Generator, HttpTransport, JudgePanel};
use ris_service::ServiceState;
use serde::Serialize;
use tracing::{info, warn};

use crate::config::RunConfig;
use crate::manifest::RunManifest;
use crate::report::{self, pct, text_table};
use crate::{Cli, Command};

pub async fn run(cli: Cli) -> anyhow::Result<()> {
    let mut config = RunConfig::load(cli.config.as_deref())?;
    // The decision threshold of `predict` is a different quantity from the
    // RIS threshold, so it never lands in the config.
    let ris_threshold = if matches!(cli.command, Command::Predict(_)) { None } else { cli.threshold };
    config.apply_overrides(cli.seed, ris_threshold)?;
    match cli.command {
        Command::Generate(a) => generate(config, a).await,
        Command::Judge(a) => judge(config, a).await,
        Command::Classify(a) => classify(config, a).await,
        Command::Features(a) => features(config, a).await,
        Command::Train(a) => train_cmd(config, a),
        Command::Eval(a) => eval(config, a),
        Command::Predict(a) => predict(config, a, cli.threshold).await,
        Command::Stats(a) => stats(config, a),
        Command::Report(a) => report_cmd(config, a),
        Command::Serve(a) => serve(config, a).await,
    }
}

fn transport(retry: &ris_gateway::RetryPolicy) -> anyhow::Result<Arc<HttpTransport>> {
    Ok(Arc::new(HttpTransport::from_env(retry.clone())?))
}

fn records_by_id(path: &Path) -> anyhow::Result<HashMap<String, TaskRecord>> {
    let records = read_records(path).with_context(|| format!("reading records {}", path.display()))?;
    Ok(records.into_iter().map(|r| (r.id.clone(), r)).collect())
}

fn read_scored(path: &Path) -> anyhow::Result<Vec<ScoredTrace>> {
    jsonl::read(path).with_context(|| format!("reading scored traces {}", path.display()))
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> anyhow::Result<()> {
    jsonl::write(path, items).with_context(|| format!("writing {}", path.display()))
}

async fn generate(mut config: RunConfig, a: crate::GenerateArgs) -> anyhow::Result<()> {
    if let Some(base) = a.base {
        config.generation.api_base = Some(base);
    }
    if let Some(t) = a.temperature {
        config.generation.temperature = t;
    }
    if !a.generators.is_empty() {
        config.generation.models = a.generators;
    }
    if !a.conditions.is_empty() {
        config.generation.conditions = a.conditions;
    }
    let g = &config.generation;
    let Some(base) = g.api_base.clone() else {
        bail!("no generator endpoint: pass --base, set generation.api_base, or export RIS_API_BASE");
    };
    let manifest = RunManifest::new("generate", &config, &[&a.input], &[&a.out]);
    let records = read_records(&a.input).with_context(|| format!("reading records {}", a.input.display()))?;
    let generator = Generator::new(base, g.temperature, g.max_in_flight, transport(&g.retry)?);

    let mut traces = Vec::new();
    let mut skipped = 0;
    for result in generator.generate_grid(&g.models, &g.conditions, &records).await {
        match result {
            Ok(t) => traces.push(t),
            Err(GatewayError::MissingContext(e)) => {
                warn!("skipping: {e}");
                skipped += 1;
            }
            Err(e) => return Err(e).context("generation failed"),
        }
    }
    write_traces(&a.out, &traces).with_context(|| format!("writing {}", a.out.display()))?;
    info!(traces = traces.len(), skipped, out = %a.out.display(), "generated");
    manifest.finish()
}

fn judge_panel(config: &mut RunConfig, a: &crate::JudgeArgs) -> anyhow::Result<JudgePanel> {
    if let Some(base) = &a.base {
        config.judges.api_base = Some(base.clone());
    }
    if let Some(cache) = &a.cache {
        config.judges.cache_path = Some(cache.clone());
    }
    let t = transport(&config.judges.retry)?;
    Ok(JudgePanel::new(config.judges.clone(), t)?)
}

async fn judge(mut config: RunConfig, a: crate::JudgeArgs) -> anyhow::Result<()> {
    let panel = judge_panel(&mut config, &a)?;
    let manifest = RunManifest::new("judge", &config, &[&a.input, &a.records], &[&a.out]);
    let records = records_by_id(&a.records)?;
    let traces = read_traces(&a.input).with_context(|| format!("reading traces {}", a.input.display()))?;
    let items = traces
        .into_iter()
        .map(|t| match records.get(&t.record_id) {
            Some(r) => Ok((r.clone(), t)),
            None => bail!("trace references unknown record `{}`", t.record_id),
        })
        .collect::<anyhow::Result<Vec<_>>>()?;

    let mut scored = Vec::with_capacity(items.len());
    for (result, (_, trace)) in panel.score_all(&items, config.threshold).await.into_iter().zip(&items) {
        match result {
            Ok(s) => scored.push(s),
            Err(GatewayError::Judging(e)) => warn!(record = %trace.record_id, model = %trace.model, "not scored: {e}"),
            Err(e) => return Err(e).context("judging failed"),
        }
    }
    write_jsonl(&a.out, &scored)?;
    let flawed = scored.iter().filter(|s| s.flawed).count();
    info!(scored = scored.len(), flawed, threshold = config.threshold, "judged");
    manifest.finish()
}

async fn classify(mut config: RunConfig, a: crate::JudgeArgs) -> anyhow::Result<()> {
    let panel = judge_panel(&mut config, &a)?;
    let manifest = RunManifest::new("classify", &config, &[&a.input, &a.records], &[&a.out]);
    let records = records_by_id(&a.records)?;
    let mut scored = read_scored(&a.input)?;
    let results = futures::future::join_all(scored.iter_mut().map(|s| {
        let record = records.get(&s.trace.record_id);
        let panel = &panel;
        async move {
            let record = record.with_context(|| format!("unknown record `{}`", s.trace.record_id))?;
            panel.classify(record, s).await.map_err(anyhow::Error::from)
        }
    }))
    .await;
    results.into_iter().collect::<anyhow::Result<Vec<()>>>().context("classification failed")?;
    write_jsonl(&a.out, &scored)?;
    let labels: usize = scored.iter().filter_map(|s| s.error_labels.as_ref()).map(Vec::len).sum();
    info!(traces = scored.len(), error_labels = labels, "classified");
    manifest.finish()
}

async fn embeddings(base: Option<&str>, config: &RunConfig, texts: Vec<String>) -> anyhow::Result<Vec<Vec<f64>>> {
    match base {
        Some(base) => {
            let client = EmbeddingClient::new(base, config.embedding.retry.clone())?;
            Ok(client.fetch_embedding(&texts).await.context("embedding provider")?)
        }
        None => Ok(texts.iter().map(|t| fallback_embed(t)).collect()),
    }
}

async fn features(mut config: RunConfig, a: crate::FeaturesArgs) -> anyhow::Result<()> {
    if a.embed_base.is_some() {
        config.embedding.base = a.embed_base;
    }
    let manifest = RunManifest::new("features", &config, &[&a.input], &[&a.out]);
    let scored = read_scored(&a.input)?;
    let texts = scored.iter().map(|s| s.trace.raw_output.clone()).collect();
    let vectors = embeddings(config.embedding.base.as_deref(), &config, texts).await?;
    let rows: Vec<FeatureRecord> = scored
        .iter()
        .zip(vectors)
        .map(|(s, emb)| FeatureRecord {
            record_id: s.trace.record_id.clone(),
            features: raw_row(&emb, &structural_features(&s.trace)),
            label: s.flawed_at(config.threshold) as u8,
        })
        .collect();
    write_jsonl(&a.out, &rows)?;
    let flawed = rows.iter().filter(|r| r.label == 1).count();
    info!(rows = rows.len(), flawed, "features written");
    manifest.finish()
}

fn read_examples(path: &Path) -> anyhow::Result<Vec<FeatureRecord>> {
    let rows: Vec<FeatureRecord> = jsonl::read(path).with_context(|| format!("reading features {}", path.display()))?;
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.label > 1) {
        bail!("{}: line {} has label {}; expected 0 or 1", path.display(), i + 1, r.label);
    }
    Ok(rows)
}

fn examples(rows: &[FeatureRecord]) -> Vec<Example> {
    rows.iter().map(|r| Example { features: r.features.clone(), label: r.label == 1 }).collect()
}

fn train_cmd(config: RunConfig, a: crate::TrainArgs) -> anyhow::Result<()> {
    if !(a.test_fraction > 0.0 && a.test_fraction < 1.0) {
        bail!("--test-fraction {} must lie strictly between 0 and 1", a.test_fraction);
    }
    let test_out = a.test_out.clone().unwrap_or_else(|| {
        let mut name = a.out.file_name().unwrap_or_default().to_os_string();
        name.push(".test.jsonl");
        a.out.with_file_name(name)
    });
    let manifest = RunManifest::new("train", &config, &[&a.input], &[&a.out, &test_out]);
    let rows = read_examples(&a.input)?;
    let labels: Vec<bool> = rows.iter().map(|r| r.label == 1).collect();
    let (train_idx, test_idx) = stratified_split(&labels, 1.0 - a.test_fraction, config.seed)?;
    let all = examples(&rows);
    let train_set: Vec<Example> = train_idx.iter().map(|&i| all[i].clone()).collect();
    let test_rows: Vec<FeatureRecord> = test_idx.iter().map(|&i| rows[i].clone()).collect();

    let (model, history) = train(&train_set, &config.train)?;
    info!(
        epochs = history.epochs.len(),
        best_epoch = history.best_epoch,
        stopped_early = history.stopped_early,
        "training finished"
    );
    let report = model.evaluate(&examples(&test_rows))?;
    info!(
        macro_f1 = report.macro_f1,
        precision_flawed = report.precision_flawed,
        recall_flawed = report.recall_flawed,
        n = report.n,
        "held-out evaluation"
    );
    verifier::save(&a.out, &model, Some(manifest.digest.clone()))
        .with_context(|| format!("writing {}", a.out.display()))?;
    write_jsonl(&test_out, &test_rows)?;
    manifest.finish()
}

fn eval(config: RunConfig, a: crate::EvalArgs) -> anyhow::Result<()> {
    let outputs: Vec<&Path> = a.out.iter().map(PathBuf::as_path).collect();
    let manifest = RunManifest::new("eval", &config, &[&a.model, &a.input], &outputs);
    let (model, _) = verifier::load(&a.model).with_context(|| format!("loading {}", a.model.display()))?;
    let rows = read_examples(&a.input)?;
    if rows.is_empty() {
        bail!("{} holds no rows to evaluate", a.input.display());
    }
    let report = model.evaluate(&examples(&rows))?;
    let text = serde_json::to_string_pretty(&report)?;
    println!("{text}");
    if let Some(out) = &a.out {
        std::fs::write(out, format!("{text}\n")).with_context(|| format!("writing {}", out.display()))?;
        manifest.finish()?;
    }
    Ok(())
}

#[derive(Serialize)]
struct PredictionLine<'a> {
    record_id: &'a str,
    model: &'a str,
    condition: ris_core::Condition,
    probability: f64,
    flagged: bool,
}

async fn predict(mut config: RunConfig, a: crate::PredictArgs, threshold: Option<f64>) -> anyhow::Result<()> {
    if a.embed_base.is_some() {
        config.embedding.base = a.embed_base;
    }
    if let Some(t) = threshold {
        anyhow::ensure!((0.0..=1.0).contains(&t), "threshold {t} outside [0, 1]");
    }
    let outputs: Vec<&Path> = a.out.iter().map(PathBuf::as_path).collect();
    let manifest = RunManifest::new("predict", &config, &[&a.model, &a.input], &outputs);
    let (model, _) = verifier::load(&a.model).with_context(|| format!("loading {}", a.model.display()))?;
    let traces: Vec<ReasoningTrace> =
        read_traces(&a.input).with_context(|| format!("reading traces {}", a.input.display()))?;
    let texts = traces.iter().map(|t| t.raw_output.clone()).collect();
    let vectors = embeddings(config.embedding.base.as_deref(), &config, texts).await?;

    let mut out = String::new();
    for (t, emb) in traces.iter().zip(vectors) {
        let fv = model.normalize_raw(&raw_row(&emb, &structural_features(t)))?;
        let p = model.predict(&fv, threshold);
        let line = PredictionLine {
            record_id: &t.record_id,
            model: &t.model,
            condition: t.condition,
            probability: p.probability,
            flagged: p.flagged,
        };
        out.push_str(&serde_json::to_string(&line)?);
        out.push('\n');
    }
    match &a.out {
        Some(path) => {
            std::fs::write(path, out).with_context(|| format!("writing {}", path.display()))?;
            manifest.finish()?;
        }
        None => print!("{out}"),
    }
    Ok(())
}

fn stats(config: RunConfig, a: crate::StatsArgs) -> anyhow::Result<()> {
    let outputs: Vec<&Path> = a.out.iter().map(PathBuf::as_path).collect();
    let manifest = RunManifest::new("stats", &config, &[&a.input], &outputs);
    let scored = read_scored(&a.input)?;
    let table = rwr_table(&scored, config.threshold);
    if let Some(out) = &a.out {
        report::write_rwr_csv(out, &table)?;
    }

    println!("Right-for-wrong-reasons rate (RIS < {})", config.threshold);
    let mut rows: Vec<Vec<String>> = table
        .rows
        .iter()
        .map(|r| {
            vec![
                r.model.clone(),
                r.dataset.to_string(),
                r.correct_count.to_string(),
                r.flawed_given_correct_count.to_string(),
                pct(r.rwr_rate),
            ]
        })
        .collect();
    rows.extend(table.model_averages.iter().map(|(m, v)| vec![m.clone(), "Avg".into(), String::new(), String::new(), pct(*v)]));
    rows.extend(
        table.dataset_averages.iter().map(|(d, v)| vec!["Avg".into(), d.to_string(), String::new(), String::new(), pct(*v)]),
    );
    rows.push(vec!["Avg".into(), "Avg".into(), String::new(), String::new(), pct(table.overall_average)]);
    println!("{}", text_table(&["model", "dataset", "correct", "flawed", "rwr"], &rows));

    match threshold_sweep(&scored, &config.stats.sweep) {
        Ok(sweep) => {
            let rows: Vec<Vec<String>> = sweep
                .iter()
                .map(|p| vec![p.threshold.to_string(), format!("{}/{}", p.flagged, p.total), pct(p.rwr_rate)])
                .collect();
            println!("Threshold sensitivity");
            println!("{}", text_table(&["threshold", "flagged", "rwr"], &rows));
        }
        Err(e) => println!("Threshold sensitivity: {e}\n"),
    }

    match error_delta_table(&report::error_labels_by_condition(&scored)) {
        Ok(deltas) => {
            let mut header = vec!["condition".to_string()];
            for c in DELTA_CATEGORIES {
                header.push(format!("{c} %"));
                header.push(format!("{c} Δpp"));
            }
            let rows: Vec<Vec<String>> = deltas
                .rows
                .iter()
                .map(|r| {
                    let mut row = vec![r.condition.to_string()];
                    for i in 0..3 {
                        row.push(r.percent.map(|p| format!("{:.1}", p[i])).unwrap_or_else(|| "-".into()));
                        row.push(r.delta_pp.map(|d| format!("{:+.1}", d[i])).unwrap_or_else(|| "-".into()));
                    }
                    row
                })
                .collect();
            let header: Vec<&str> = header.iter().map(String::as_str).collect();
            println!("Error distribution");
            println!("{}", text_table(&header, &rows));
        }
        Err(StatsError::MissingBaseline) => println!("Error distribution: no classified Baseline traces\n"),
        Err(e) => return Err(e.into()),
    }

    let positions = mean_error_position(&scored);
    if !positions.is_empty() {
        let rows: Vec<Vec<String>> = positions.iter().map(|(c, p)| vec![c.to_string(), format!("{p:.3}")]).collect();
        println!("Mean normalized error position");
        println!("{}", text_table(&["condition", "position"], &rows));
    }

    let effects = effect_sizes(&scored, config.stats.alpha);
    if !effects.is_empty() {
        let f = |v: Option<f64>| v.map(|x| format!("{x:.3}")).unwrap_or_else(|| "-".into());
        let rows: Vec<Vec<String>> = effects
            .iter()
            .map(|r| {
                vec![
                    r.model.clone(),
                    r.dataset.to_string(),
                    r.intervention.to_string(),
                    f(r.d),
                    format!("{}/{}", r.n_treatment, r.n_baseline),
                    f(r.power),
                ]
            })
            .collect();
        println!("Effect sizes (Cohen's d of RIS vs Baseline)");
        println!("{}", text_table(&["model", "dataset", "intervention", "d", "n", "power"], &rows));
    }

    match panel_kappa(&scored) {
        Ok(k) => println!("Panel agreement (Fleiss' kappa): {k:.3}"),
        Err(e) => println!("Panel agreement: {e}"),
    }
    match misuse_ris_correlation(&scored) {
        Ok(r) => println!("Context misuse vs RIS (Pearson r): {r:.3}"),
        Err(e) => println!("Context misuse vs RIS: {e}"),
    }
    if a.out.is_some() {
        manifest.finish()?;
    }
    Ok(())
}

fn report_cmd(config: RunConfig, a: crate::ReportArgs) -> anyhow::Result<()> {
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let manifest = RunManifest::new("report", &config, &[&a.input], &[&a.out]);
    let scored = read_scored(&a.input)?;

    report::write_rwr_csv(&a.out.join("rwr_table.csv"), &rwr_table(&scored, config.threshold))?;
    let sweep = if scored.is_empty() { Vec::new() } else { threshold_sweep(&scored, &config.stats.sweep)? };
    report::write_sweep_csv(&a.out.join("threshold_sweep.csv"), &sweep)?;
    let deltas = match error_delta_table(&report::error_labels_by_condition(&scored)) {
        Ok(t) => Some(t),
        Err(StatsError::MissingBaseline) => {
            warn!("no classified Baseline traces; error_deltas.csv has headers only");
            None
        }
        Err(e) => return Err(e.into()),
    };
    report::write_error_deltas_csv(&a.out.join("error_deltas.csv"), deltas.as_ref())?;
    let effects = effect_sizes(&scored, config.stats.alpha);
    report::write_effects_csv(&a.out.join("effect_sizes.csv"), &effects)?;
    let svg_path = a.out.join("effects.svg");
    std::fs::write(&svg_path, report::render_effects_svg(&effects))
        .with_context(|| format!("writing {}", svg_path.display()))?;
    info!(dir = %a.out.display(), effects = effects.len(), "report written");
    manifest.finish()
}

async fn serve(config: RunConfig, a: crate::ServeArgs) -> anyhow::Result<()> {
    let addr = a.addr.unwrap_or(config.service.addr.clone());
    let embed_base = a.embed_base.or(config.embedding.base.clone());
    let mut state = ServiceState::empty();
    if let Some(base) = &embed_base {
        state = state.with_embedder(EmbeddingClient::new(base, config.embedding.retry.clone())?);
        info!(%base, "raw outputs will be embedded by the provider");
    }
    let listener =
        tokio::net::TcpListener::bind(&addr).await.with_context(|| format!("binding {addr}"))?;
    let digest = state.load(&a.model).with_context(|| format!("loading {}", a.model.display()))?;
    info!(model = %a.model.display(), %digest, "model loaded");
    ris_service::serve(listener, state, async {
        let _ = tokio::signal::ctrl_c().await;
        info!("shutting down");
    })
    .await?;
    Ok(())
}
