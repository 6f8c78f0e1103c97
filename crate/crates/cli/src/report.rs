//! CSV, aligned-text and SVG renderings of the statistics tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use anyhow::Context;
use ris_core::stats::{EffectRow, ErrorDeltaTable, RwrTable, SweepPoint, DELTA_CATEGORIES};
use ris_core::{Condition, ErrorCategory, ScoredTrace};

pub const EFFECT_COLUMNS: [&str; 7] = ["model", "dataset", "intervention", "d", "n_treatment", "n_baseline", "power"];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn writer(path: &Path) -> anyhow::Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))
}

/// Per-cell rows, then `Avg` rows: model averages (dataset `Avg`), dataset
/// averages (model `Avg`) and the overall mean.
pub fn write_rwr_csv(path: &Path, table: &RwrTable) -> anyhow::Result<()> {
    let mut w = writer(path)?;
    w.write_record(["model", "dataset", "n_traces", "correct", "flawed_given_correct", "rwr_rate"])?;
    for r in &table.rows {
        w.write_record([
            r.model.clone(),
            r.dataset.to_string(),
            r.n_traces.to_string(),
            r.correct_count.to_string(),
            r.flawed_given_correct_count.to_string(),
            opt(r.rwr_rate),
        ])?;
    }
    for (model, rate) in &table.model_averages {
        w.write_record([model.as_str(), "Avg", "", "", "", &opt(*rate)])?;
    }
    for (dataset, rate) in &table.dataset_averages {
        w.write_record(["Avg", dataset.as_str(), "", "", "", &opt(*rate)])?;
    }
    w.write_record(["Avg", "Avg", "", "", "", &opt(table.overall_average)])?;
    w.flush()?;
    Ok(())
}

pub fn write_sweep_csv(path: &Path, sweep: &[SweepPoint]) -> anyhow::Result<()> {
    let mut w = writer(path)?;
    w.write_record(["threshold", "flagged", "total", "flagged_fraction", "rwr_rate"])?;
    for p in sweep {
        w.write_record([
            p.threshold.to_string(),
            p.flagged.to_string(),
            p.total.to_string(),
            p.flagged_fraction.to_string(),
            opt(p.rwr_rate),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Long format: one line per (condition, category). `None` writes the
/// header only.
pub fn write_error_deltas_csv(path: &Path, table: Option<&ErrorDeltaTable>) -> anyhow::Result<()> {
    let mut w = writer(path)?;
    w.write_record(["condition", "counted", "other", "category", "percent", "delta_pp"])?;
    for row in table.map(|t| t.rows.as_slice()).unwrap_or_default() {
        for (i, cat) in DELTA_CATEGORIES.iter().enumerate() {
            w.write_record([
                row.condition.to_string(),
                row.counted.to_string(),
                row.other.to_string(),
                cat.to_string(),
                opt(row.percent.map(|p| p[i])),
                opt(row.delta_pp.map(|d| d[i])),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_effects_csv(path: &Path, rows: &[EffectRow]) -> anyhow::Result<()> {
    let mut w = writer(path)?;
    w.write_record(EFFECT_COLUMNS)?;
    for r in rows {
        w.write_record([
            r.model.clone(),
            r.dataset.to_string(),
            r.intervention.to_string(),
            opt(r.d),
            r.n_treatment.to_string(),
            r.n_baseline.to_string(),
            opt(r.power),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn error_labels_by_condition(scored: &[ScoredTrace]) -> BTreeMap<Condition, Vec<ErrorCategory>> {
    let mut out: BTreeMap<Condition, Vec<ErrorCategory>> = BTreeMap::new();
    for s in scored {
        if let Some(labels) = &s.error_labels {
            out.entry(s.trace.condition).or_default().extend(labels.iter().map(|l| l.label));
        }
    }
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Grouped bar chart of Cohen's d: one group per (model, dataset), one bar per
/// intervention. Positive bars rise from the zero line in red, negative bars
/// hang below it in blue. Rows without a defined d draw no bar.
pub fn render_effects_svg(rows: &[EffectRow]) -> String {
    const BAR: f64 = 18.0;
    const GAP: f64 = 6.0;
    const GROUP_GAP: f64 = 28.0;
    const LEFT: f64 = 56.0;
    const HALF: f64 = 120.0;
    const ZERO_Y: f64 = 40.0 + HALF;

    let mut groups: BTreeMap<(String, String), Vec<&EffectRow>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.d.is_some()) {
        groups.entry((r.model.clone(), r.dataset.to_string())).or_default().push(r);
    }
    let max_abs = rows.iter().filter_map(|r| r.d).map(f64::abs).fold(0.0, f64::max);
    let scale = if max_abs > 0.0 { HALF / max_abs } else { HALF };
    let plot_w: f64 = groups.values().map(|g| g.len() as f64 * (BAR + GAP) + GROUP_GAP).sum::<f64>().max(120.0);
    let width = LEFT + plot_w + 20.0;
    let height = ZERO_Y + HALF + 60.0;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    let _ = writeln!(
        svg,
        r#"<text x="{LEFT}" y="20" font-family="sans-serif" font-size="13">Cohen's d of RIS vs Baseline (red: improvement, blue: degradation)</text>"#
    );
    let _ = writeln!(
        svg,
        r##"<line class="zero" x1="{LEFT}" y1="{ZERO_Y}" x2="{}" y2="{ZERO_Y}" stroke="#333" stroke-width="1"/>"##,
        LEFT + plot_w
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="10" text-anchor="end">0</text>"#,
        LEFT - 6.0,
        ZERO_Y + 3.0
    );
    let mut x = LEFT + GROUP_GAP / 2.0;
    for ((model, dataset), bars) in &groups {
        let group_start = x;
        for r in bars {
            let d = r.d.expect("filtered");
            let h = d.abs() * scale;
            let (class, fill, y) = if d >= 0.0 { ("positive", "#c0392b", ZERO_Y - h) } else { ("negative", "#2e6fb7", ZERO_Y) };
            let _ = writeln!(
                svg,
                r#"<rect class="bar {class}" x="{x}" y="{y}" width="{BAR}" height="{h}" fill="{fill}" data-model="{}" data-dataset="{}" data-intervention="{}" data-d="{d}"><title>{} / {} / {}: d = {d:.3}</title></rect>"#,
                escape(&r.model),
                r.dataset,
                r.intervention,
                escape(&r.model),
                r.dataset,
                r.intervention,
            );
            x += BAR + GAP;
        }
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="10" text-anchor="middle">{} / {}</text>"#,
            (group_start + x - GAP) / 2.0,
            ZERO_Y + HALF + 20.0,
            escape(model),
            escape(dataset)
        );
        x += GROUP_GAP;
    }
    svg.push_str("</svg>\n");
    svg
}

/// Left-aligned plain-text table.
pub fn text_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: Vec<&str>| {
        cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect::<Vec<_>>().join("  ").trim_end().to_string()
    };
    let mut out = line(header.to_vec());
    out.push('\n');
    for row in rows {
        out.push_str(&line(row.iter().map(String::as_str).collect()));
        out.push('\n');
    }
    out
}

pub fn pct(v: Option<f64>) -> String {
    v.map(|x| format!("{:.1}%", 100.0 * x)).unwrap_or_else(|| "-".into())
}
