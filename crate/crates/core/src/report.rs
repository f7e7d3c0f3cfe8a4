//! Aggregate tables (TSV, Markdown) and a grouped bar chart (SVG).
//!
//! The chart draws one panel per comparison family (the part of the spec name
//! before `/`), one bar group per language, and one bar per comparison
//! variant and corpus version. Bar heights share one linear scale so they are
//! directly comparable across panels.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::embedding::CorpusVersion;
use crate::error::{Error, Result};
use crate::weat::AggregateResult;

pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub language: String,
    pub corpus_version: CorpusVersion,
    pub spec_name: String,
    pub mean_statistic: f64,
    pub mean_effect_size: f64,
    pub mean_p_value: f64,
    pub n_runs: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub oov_dropped: Vec<String>,
}

impl ReportRow {
    pub fn key(&self) -> String {
        format!("{}/{}/{}", self.language, self.corpus_version, self.spec_name)
    }

    fn family(&self) -> &str {
        self.spec_name.split('/').next().unwrap_or(&self.spec_name)
    }

    fn variant(&self) -> &str {
        self.spec_name.split_once('/').map_or("", |(_, v)| v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub toolkit_version: String,
    pub config: BTreeMap<String, String>,
    pub rows: Vec<ReportRow>,
}

impl RunReport {
    /// Rows sorted by spec name, language and corpus version.
    pub fn from_aggregates(aggregates: &[AggregateResult], config: BTreeMap<String, String>) -> Result<Self> {
        if aggregates.is_empty() {
            return Err(Error::Invalid("no aggregate results to report".into()));
        }
        let mut rows = Vec::with_capacity(aggregates.len());
        let mut keys = BTreeSet::new();
        for agg in aggregates {
            if agg.n_runs == 0 {
                return Err(Error::Invalid(format!("aggregate '{}' has no runs", agg.spec_name)));
            }
            let dropped: BTreeSet<&String> = agg.per_run.iter().flat_map(|r| &r.oov_dropped).collect();
            let row = ReportRow {
                language: agg.language.clone(),
                corpus_version: agg.corpus_version,
                spec_name: agg.spec_name.clone(),
                mean_statistic: agg.mean_statistic,
                mean_effect_size: agg.mean_effect_size,
                mean_p_value: agg.mean_p_value,
                n_runs: agg.n_runs,
                oov_dropped: dropped.into_iter().cloned().collect(),
            };
            if !keys.insert(row.key()) {
                return Err(Error::Invalid(format!("duplicate report row {}", row.key())));
            }
            rows.push(row);
        }
        rows.sort_by(|a, b| {
            (&a.spec_name, &a.language, a.corpus_version).cmp(&(&b.spec_name, &b.language, b.corpus_version))
        });
        Ok(RunReport {
            toolkit_version: TOOLKIT_VERSION.to_owned(),
            config,
            rows,
        })
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("language\tversion\tspec\tm.t.s.\tm.e.s.\tm.p.v.\tn_runs\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{:.3}\t{:.3}\t{:.3}\t{}",
                r.language, r.corpus_version, r.spec_name, r.mean_statistic, r.mean_effect_size, r.mean_p_value, r.n_runs
            );
        }
        out
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::from(
            "| language | version | spec | m.t.s. | m.e.s. | m.p.v. | n_runs |\n\
             |---|---|---|---:|---:|---:|---:|\n",
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "| {} | {} | {} | {:.3} | {:.3} | {:.3} | {} |",
                r.language, r.corpus_version, r.spec_name, r.mean_statistic, r.mean_effect_size, r.mean_p_value, r.n_runs
            );
        }
        let dropped: Vec<&ReportRow> = self.rows.iter().filter(|r| !r.oov_dropped.is_empty()).collect();
        if !dropped.is_empty() {
            out.push_str("\nStimulus words skipped as out-of-vocabulary:\n\n");
            for r in dropped {
                let _ = writeln!(out, "- {}: {}", r.key(), r.oov_dropped.join(", "));
            }
        }
        out
    }

    pub fn to_svg(&self) -> String {
        render_svg(&self.rows)
    }

    /// Writes `report.tsv`, `report.md`, `report.svg` and `report.json` into `dir`.
    pub fn write_all(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let files = [
            ("report.tsv", self.to_tsv()),
            ("report.md", self.to_markdown()),
            ("report.svg", self.to_svg()),
            ("report.json", serde_json::to_string_pretty(self)? + "\n"),
        ];
        for (name, content) in files {
            let path = dir.join(name);
            std::fs::write(&path, content).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}

pub fn load_aggregate(path: impl AsRef<Path>) -> Result<AggregateResult> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Invalid(format!("{}: {e}", path.display())))
}

const PLOT_HEIGHT: f64 = 320.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 30.0;
const MARGIN_TOP: f64 = 70.0;
const MARGIN_BOTTOM: f64 = 140.0;
const BAR_WIDTH: f64 = 16.0;
const BAR_GAP: f64 = 3.0;
const GROUP_GAP: f64 = 22.0;
const PANEL_GAP: f64 = 50.0;
const FONT: &str = "font-family=\"Helvetica, Arial, sans-serif\"";

fn version_color(v: CorpusVersion) -> &'static str {
    match v {
        CorpusVersion::Raw => "#4c72b0",
        CorpusVersion::Lemmatized => "#dd8452",
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Tick spacing of 1, 2 or 5 times a power of ten giving about five ticks.
fn tick_step(range: f64) -> f64 {
    let raw = range / 5.0;
    let magnitude = 10f64.powf(raw.log10().floor());
    [1.0, 2.0, 5.0, 10.0]
        .into_iter()
        .map(|m| m * magnitude)
        .find(|&s| s >= raw)
        .unwrap_or(10.0 * magnitude)
}

fn render_svg(rows: &[ReportRow]) -> String {
    // family -> language -> bars
    let mut panels: Vec<(&str, BTreeMap<&str, Vec<&ReportRow>>)> = Vec::new();
    for row in rows {
        let family = row.family();
        let idx = match panels.iter().position(|(f, _)| *f == family) {
            Some(i) => i,
            None => {
                panels.push((family, BTreeMap::new()));
                panels.len() - 1
            }
        };
        panels[idx].1.entry(row.language.as_str()).or_default().push(row);
    }
    for (_, groups) in &mut panels {
        for bars in groups.values_mut() {
            bars.sort_by(|a, b| (a.variant(), a.corpus_version).cmp(&(b.variant(), b.corpus_version)));
        }
    }

    let max = rows.iter().map(|r| r.mean_statistic).fold(0.0f64, f64::max);
    let min = rows.iter().map(|r| r.mean_statistic).fold(0.0f64, f64::min);
    let span = if max - min > 0.0 { max - min } else { 1.0 };
    let step = tick_step(span);
    let top = (max / step).ceil() * step;
    let bottom = (min / step).floor() * step;
    let top = if top - bottom <= 0.0 { step } else { top };
    let scale = PLOT_HEIGHT / (top - bottom);
    let zero_y = MARGIN_TOP + top * scale;

    let group_width = |bars: usize| bars as f64 * (BAR_WIDTH + BAR_GAP) - BAR_GAP;
    let panel_width = |groups: &BTreeMap<&str, Vec<&ReportRow>>| {
        groups.values().map(|b| group_width(b.len())).sum::<f64>() + GROUP_GAP * (groups.len() as f64 + 1.0)
    };
    let plot_width = panels.iter().map(|(_, g)| panel_width(g)).sum::<f64>()
        + PANEL_GAP * panels.len().saturating_sub(1) as f64;
    let width = MARGIN_LEFT + plot_width + MARGIN_RIGHT;
    let height = MARGIN_TOP + PLOT_HEIGHT + MARGIN_BOTTOM;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.1}" height="{height:.1}" viewBox="0 0 {width:.1} {height:.1}">"#
    );
    let _ = writeln!(svg, r#"<rect x="0" y="0" width="{width:.1}" height="{height:.1}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="28" text-anchor="middle" {FONT} font-size="16" font-weight="bold">WEAT mean test statistic</text>"#,
        width / 2.0
    );

    // Axis, ticks and grid.
    let mut tick = bottom;
    while tick <= top + step * 1e-9 {
        let y = zero_y - tick * scale;
        let _ = writeln!(
            svg,
            r##"<line x1="{MARGIN_LEFT:.1}" y1="{y:.4}" x2="{:.1}" y2="{y:.4}" stroke="#e5e5e5" stroke-width="1"/>"##,
            MARGIN_LEFT + plot_width
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.4}" text-anchor="end" {FONT} font-size="11">{}</text>"#,
            MARGIN_LEFT - 6.0,
            y + 4.0,
            format_tick(tick, step)
        );
        tick += step;
    }
    let _ = writeln!(
        svg,
        r##"<line x1="{MARGIN_LEFT:.1}" y1="{MARGIN_TOP:.1}" x2="{MARGIN_LEFT:.1}" y2="{:.1}" stroke="#333" stroke-width="1"/>"##,
        MARGIN_TOP + PLOT_HEIGHT
    );
    let _ = writeln!(
        svg,
        r#"<text transform="translate(18 {:.1}) rotate(-90)" text-anchor="middle" {FONT} font-size="12">m.t.s.</text>"#,
        MARGIN_TOP + PLOT_HEIGHT / 2.0
    );

    let mut x = MARGIN_LEFT;
    for (family, groups) in &panels {
        let pw = panel_width(groups);
        let _ = writeln!(
            svg,
            r#"<text x="{:.4}" y="{:.1}" text-anchor="middle" {FONT} font-size="13" font-weight="bold">{}</text>"#,
            x + pw / 2.0,
            MARGIN_TOP - 14.0,
            escape(family)
        );
        let mut gx = x + GROUP_GAP;
        for (language, bars) in groups {
            for (i, row) in bars.iter().enumerate() {
                let bx = gx + i as f64 * (BAR_WIDTH + BAR_GAP);
                let h = row.mean_statistic.abs() * scale;
                let y = if row.mean_statistic >= 0.0 { zero_y - h } else { zero_y };
                let _ = writeln!(
                    svg,
                    r#"<rect class="bar" data-key="{}" data-mts="{}" x="{bx:.4}" y="{y:.4}" width="{BAR_WIDTH:.1}" height="{h:.4}" fill="{}"><title>{}: {:.3}</title></rect>"#,
                    escape(&row.key()),
                    row.mean_statistic,
                    version_color(row.corpus_version),
                    escape(&row.key()),
                    row.mean_statistic
                );
                let variant = row.variant();
                if !variant.is_empty() {
                    let lx = bx + BAR_WIDTH / 2.0;
                    let ly = MARGIN_TOP + PLOT_HEIGHT + 30.0;
                    let _ = writeln!(
                        svg,
                        r#"<text transform="translate({lx:.4} {ly:.1}) rotate(-60)" text-anchor="end" {FONT} font-size="10">{}</text>"#,
                        escape(variant)
                    );
                }
            }
            let gw = group_width(bars.len());
            let _ = writeln!(
                svg,
                r#"<text x="{:.4}" y="{:.1}" text-anchor="middle" {FONT} font-size="12">{}</text>"#,
                gx + gw / 2.0,
                MARGIN_TOP + PLOT_HEIGHT + 16.0,
                escape(&language.to_uppercase())
            );
            gx += gw + GROUP_GAP;
        }
        x += pw + PANEL_GAP;
    }
    let _ = writeln!(
        svg,
        r##"<line x1="{MARGIN_LEFT:.1}" y1="{zero_y:.4}" x2="{:.1}" y2="{zero_y:.4}" stroke="#333" stroke-width="1"/>"##,
        MARGIN_LEFT + plot_width
    );

    // Legend.
    let ly = height - 24.0;
    for (i, version) in [CorpusVersion::Raw, CorpusVersion::Lemmatized].into_iter().enumerate() {
        let lx = MARGIN_LEFT + i as f64 * 110.0;
        let _ = writeln!(
            svg,
            r#"<rect x="{lx:.1}" y="{:.1}" width="12" height="12" fill="{}"/>"#,
            ly - 10.0,
            version_color(version)
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{ly:.1}" {FONT} font-size="12">{version}</text>"#,
            lx + 18.0
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn format_tick(value: f64, step: f64) -> String {
    let decimals = if step >= 1.0 { 0 } else { (-step.log10().floor()) as usize };
    let v = if value.abs() < step * 1e-9 { 0.0 } else { value };
    format!("{v:.decimals$}")
}
