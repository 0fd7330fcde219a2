//! CSV, SVG and plain-text renderings of results.
//!
//! Cell CSV schema (`govtrust.cells/1`): a `#`-prefixed schema line, a header,
//! then for every cell eight `profile` rows (table order) followed by three
//! `marginal` rows per round. Values use Rust's shortest round-trip float
//! formatting; a degenerate cell has empty profile values and no marginal
//! rows.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::egt::StationaryResult;
use crate::game::{enumerate_profiles, payoff_table, ActionProfile, GameParams, TrustMode};

use super::aggregate::CellResult;
use super::config::Treatment;
use super::ExperimentError;

pub const CELLS_SCHEMA: &str = "govtrust.cells/1";

const HEADER: [&str; 12] = [
    "record",
    "mode",
    "epsilon",
    "c_r",
    "b_fo",
    "treatment",
    "valid",
    "invalid",
    "profile",
    "round",
    "marginal",
    "value",
];

/// Fill colours for the eight profiles, table order.
pub const PROFILE_COLOURS: [&str; 8] = [
    "#1b9e77", "#66c2a5", "#d95f02", "#fc8d62", "#7570b3", "#8da0cb", "#e7298a", "#666666",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordKind {
    Profile,
    Marginal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarginalKind {
    UserTrust,
    DeveloperComply,
    RegulatorComply,
}

impl MarginalKind {
    pub const ALL: [MarginalKind; 3] = [
        MarginalKind::UserTrust,
        MarginalKind::DeveloperComply,
        MarginalKind::RegulatorComply,
    ];
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub record: RecordKind,
    pub mode: TrustMode,
    pub epsilon: f64,
    pub c_r: f64,
    pub b_fo: f64,
    pub treatment: Treatment,
    pub valid: u32,
    pub invalid: u32,
    pub profile: Option<String>,
    pub round: Option<u32>,
    pub marginal: Option<MarginalKind>,
    pub value: Option<f64>,
}

/// Flattens cells into CSV rows.
pub fn cell_rows(results: &[CellResult]) -> Vec<ReportRow> {
    let mut rows = Vec::new();
    for cell in results {
        let k = &cell.key;
        let base = |record| ReportRow {
            record,
            mode: k.mode,
            epsilon: k.epsilon,
            c_r: k.c_r,
            b_fo: k.b_fo,
            treatment: k.treatment,
            valid: cell.valid_games,
            invalid: cell.invalid_games,
            profile: None,
            round: None,
            marginal: None,
            value: None,
        };
        for p in enumerate_profiles(k.mode) {
            rows.push(ReportRow {
                profile: Some(p.label(k.mode)),
                value: cell.frequency(p),
                ..base(RecordKind::Profile)
            });
        }
        for m in &cell.per_round_marginals {
            for (kind, value) in MarginalKind::ALL.into_iter().zip([
                m.user_trust,
                m.developer_comply,
                m.regulator_comply,
            ]) {
                rows.push(ReportRow {
                    round: Some(m.round),
                    marginal: Some(kind),
                    value: Some(value),
                    ..base(RecordKind::Marginal)
                });
            }
        }
    }
    rows
}

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(ToString::to_string).unwrap_or_default()
}

fn marginal_name(m: MarginalKind) -> &'static str {
    match m {
        MarginalKind::UserTrust => "user_trust",
        MarginalKind::DeveloperComply => "developer_comply",
        MarginalKind::RegulatorComply => "regulator_comply",
    }
}

/// Canonical CSV text for `rows`.
pub fn rows_to_csv(rows: &[ReportRow]) -> Result<String, ExperimentError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(HEADER)?;
    for r in rows {
        w.write_record([
            match r.record {
                RecordKind::Profile => "profile".to_string(),
                RecordKind::Marginal => "marginal".to_string(),
            },
            r.mode.to_string(),
            r.epsilon.to_string(),
            r.c_r.to_string(),
            r.b_fo.to_string(),
            r.treatment.to_string(),
            r.valid.to_string(),
            r.invalid.to_string(),
            opt(&r.profile),
            opt(&r.round),
            r.marginal
                .map(marginal_name)
                .unwrap_or_default()
                .to_string(),
            opt(&r.value),
        ])?;
    }
    let body = String::from_utf8(
        w.into_inner()
            .map_err(|e| ExperimentError::Io(e.into_error()))?,
    )
    .expect("csv output is utf-8");
    Ok(format!("# {CELLS_SCHEMA}\n{body}"))
}

/// CSV for a set of cell results.
pub fn cells_to_csv(results: &[CellResult]) -> Result<String, ExperimentError> {
    rows_to_csv(&cell_rows(results))
}

/// Parses CSV written by [`rows_to_csv`].
pub fn parse_csv(text: &str) -> Result<Vec<ReportRow>, ExperimentError> {
    let mut lines = text.splitn(2, '\n');
    let first = lines.next().unwrap_or("");
    if first.trim() != format!("# {CELLS_SCHEMA}") {
        return Err(ExperimentError::Report(format!(
            "expected schema line `# {CELLS_SCHEMA}`, got `{first}`"
        )));
    }
    let mut reader = csv::Reader::from_reader(lines.next().unwrap_or("").as_bytes());
    let header = reader.headers()?.clone();
    if header.iter().ne(HEADER) {
        return Err(ExperimentError::Report(format!(
            "unexpected header {header:?}"
        )));
    }
    let bad = |what: &str, row: usize| ExperimentError::Report(format!("row {row}: bad {what}"));
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let n = i + 1;
        let f = |idx: usize| rec.get(idx).unwrap_or("");
        let num = |idx: usize, what: &str| f(idx).parse::<f64>().map_err(|_| bad(what, n));
        let opt_num = |idx: usize, what: &str| -> Result<Option<f64>, ExperimentError> {
            if f(idx).is_empty() {
                Ok(None)
            } else {
                num(idx, what).map(Some)
            }
        };
        rows.push(ReportRow {
            record: match f(0) {
                "profile" => RecordKind::Profile,
                "marginal" => RecordKind::Marginal,
                _ => return Err(bad("record", n)),
            },
            mode: f(1).parse().map_err(|_| bad("mode", n))?,
            epsilon: num(2, "epsilon")?,
            c_r: num(3, "c_r")?,
            b_fo: num(4, "b_fo")?,
            treatment: f(5).parse().map_err(|_| bad("treatment", n))?,
            valid: f(6).parse().map_err(|_| bad("valid", n))?,
            invalid: f(7).parse().map_err(|_| bad("invalid", n))?,
            profile: Some(f(8).to_string()).filter(|s| !s.is_empty()),
            round: if f(9).is_empty() {
                None
            } else {
                Some(f(9).parse().map_err(|_| bad("round", n))?)
            },
            marginal: match f(10) {
                "" => None,
                "user_trust" => Some(MarginalKind::UserTrust),
                "developer_comply" => Some(MarginalKind::DeveloperComply),
                "regulator_comply" => Some(MarginalKind::RegulatorComply),
                _ => return Err(bad("marginal", n)),
            },
            value: opt_num(11, "value")?,
        });
    }
    Ok(rows)
}

/// Aligned text table of profile frequencies, one line per cell.
pub fn cells_to_text(results: &[CellResult]) -> String {
    let mut out = String::new();
    let mode_labels = |mode: TrustMode| enumerate_profiles(mode).map(|p| p.label(mode));
    let mut last_mode = None;
    for cell in results {
        let k = &cell.key;
        if last_mode != Some(k.mode) {
            let _ = write!(
                out,
                "{:<14} {:>6} {:>5} {:>5} {:<22} {:>5} {:>5}",
                "mode", "eps", "c_R", "b_fo", "treatment", "valid", "inval"
            );
            for l in mode_labels(k.mode) {
                let _ = write!(out, " {l:>6}");
            }
            out.push('\n');
            last_mode = Some(k.mode);
        }
        let _ = write!(
            out,
            "{:<14} {:>6} {:>5} {:>5} {:<22} {:>5} {:>5}",
            k.mode.as_str(),
            k.epsilon,
            k.c_r,
            k.b_fo,
            k.treatment.to_string(),
            cell.valid_games,
            cell.invalid_games
        );
        match cell.profile_frequencies {
            Some(f) => f.iter().for_each(|x| {
                let _ = write!(out, " {x:>6.3}");
            }),
            None => out.push_str("   (degenerate: no valid games)"),
        }
        out.push('\n');
    }
    out
}

/// Stacked-bar SVG: one panel per (mode, epsilon, c_R, treatment), one bar
/// per `b_fo`, eight segments per bar in table order. Every segment carries
/// `data-profile`, `data-b-fo`, `data-value`, `data-y0` and `data-y1`;
/// degenerate cells are drawn as a hatched bar with `data-degenerate`.
pub fn cells_to_svg(results: &[CellResult]) -> String {
    const PANEL_W: f64 = 260.0;
    const PANEL_H: f64 = 200.0;
    const MARGIN: f64 = 40.0;
    const PLOT_H: f64 = 130.0;
    const COLS: usize = 2;

    let mut panels: BTreeMap<_, Vec<&CellResult>> = BTreeMap::new();
    for cell in results {
        panels.entry(cell.key.panel()).or_default().push(cell);
    }
    let rows = panels.len().div_ceil(COLS).max(1);
    let width = COLS as f64 * PANEL_W + MARGIN;
    let height = rows as f64 * PANEL_H + MARGIN + 40.0;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" data-schema="{CELLS_SCHEMA}">"#
    );
    s.push_str(
        "<defs><pattern id=\"hatch\" width=\"6\" height=\"6\" patternUnits=\"userSpaceOnUse\" patternTransform=\"rotate(45)\">\
         <line x1=\"0\" y1=\"0\" x2=\"0\" y2=\"6\" stroke=\"#999\" stroke-width=\"2\"/></pattern></defs>\n",
    );

    for (idx, ((mode, _, _, treatment), cells)) in panels.iter().enumerate() {
        let mut cells = cells.clone();
        cells.sort_by(|a, b| a.key.b_fo.total_cmp(&b.key.b_fo));
        let first = cells[0].key;
        let ox = MARGIN / 2.0 + (idx % COLS) as f64 * PANEL_W;
        let oy = MARGIN / 2.0 + (idx / COLS) as f64 * PANEL_H;
        let _ = writeln!(
            s,
            r#"<g class="panel" data-mode="{mode}" data-epsilon="{}" data-c-r="{}" data-treatment="{treatment}" transform="translate({ox},{oy})">"#,
            first.epsilon, first.c_r
        );
        let _ = writeln!(
            s,
            r#"<text x="0" y="12" font-size="11" font-family="sans-serif">{mode}, ε={}, c_R={}, {treatment}</text>"#,
            first.epsilon, first.c_r
        );
        let top = 20.0;
        let _ = writeln!(
            s,
            r##"<line x1="0" y1="{}" x2="{}" y2="{}" stroke="#000"/>"##,
            top + PLOT_H,
            PANEL_W - 20.0,
            top + PLOT_H
        );
        let slot = (PANEL_W - 20.0) / cells.len() as f64;
        let bar_w = slot * 0.7;
        for (i, cell) in cells.iter().enumerate() {
            let x = i as f64 * slot + (slot - bar_w) / 2.0;
            let b_fo = cell.key.b_fo;
            let _ = writeln!(
                s,
                r#"<g class="bar" data-b-fo="{b_fo}" data-valid="{}" data-invalid="{}">"#,
                cell.valid_games, cell.invalid_games
            );
            match cell.profile_frequencies {
                Some(freqs) => {
                    let mut y0 = 0.0;
                    for (p, value) in enumerate_profiles(cell.key.mode).iter().zip(freqs) {
                        let y1 = y0 + value;
                        let _ = writeln!(
                            s,
                            r#"<rect class="segment" data-profile="{}" data-b-fo="{b_fo}" data-value="{value}" data-y0="{y0}" data-y1="{y1}" x="{x:.2}" y="{:.2}" width="{bar_w:.2}" height="{:.2}" fill="{}"/>"#,
                            p.label(cell.key.mode),
                            top + PLOT_H * (1.0 - y1),
                            PLOT_H * value,
                            PROFILE_COLOURS[p.index()],
                        );
                        y0 = y1;
                    }
                }
                None => {
                    let _ = writeln!(
                        s,
                        r##"<rect class="degenerate" data-degenerate="true" data-b-fo="{b_fo}" x="{x:.2}" y="{top}" width="{bar_w:.2}" height="{PLOT_H}" fill="url(#hatch)" stroke="#999"/>"##
                    );
                    let _ = writeln!(
                        s,
                        r#"<text x="{:.2}" y="{}" font-size="8" text-anchor="middle" font-family="sans-serif">n=0 ({} invalid)</text>"#,
                        x + bar_w / 2.0,
                        top + PLOT_H / 2.0,
                        cell.invalid_games
                    );
                }
            }
            let _ = writeln!(
                s,
                r#"<text x="{:.2}" y="{}" font-size="9" text-anchor="middle" font-family="sans-serif">{b_fo}</text>"#,
                x + bar_w / 2.0,
                top + PLOT_H + 12.0
            );
            s.push_str("</g>\n");
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="9" text-anchor="middle" font-family="sans-serif">b_fo</text>"#,
            (PANEL_W - 20.0) / 2.0,
            top + PLOT_H + 26.0
        );
        s.push_str("</g>\n");
    }

    // legend in table order
    let legend_mode = results
        .first()
        .map_or(TrustMode::Conditional, |c| c.key.mode);
    let ly = height - 24.0;
    s.push_str("<g class=\"legend\">\n");
    for p in enumerate_profiles(legend_mode) {
        let lx = MARGIN / 2.0 + p.index() as f64 * 62.0;
        let _ = writeln!(
            s,
            r#"<rect x="{lx}" y="{ly}" width="10" height="10" fill="{}"/><text x="{}" y="{}" font-size="9" font-family="sans-serif">{}</text>"#,
            PROFILE_COLOURS[p.index()],
            lx + 13.0,
            ly + 9.0,
            legend_label(p)
        );
    }
    s.push_str("</g>\n</svg>\n");
    s
}

fn legend_label(p: ActionProfile) -> String {
    let code = p.label(TrustMode::Unconditional);
    if p.user_trusts {
        format!("(C){code}")
    } else {
        code
    }
}

/// Both payoff tables... or one, as aligned text.
pub fn payoff_table_text(params: &GameParams, modes: &[TrustMode]) -> String {
    let mut out = String::new();
    for &mode in modes {
        let _ = writeln!(out, "{mode} trust");
        let _ = writeln!(
            out,
            "{:<8} {:>10} {:>10} {:>10}",
            "profile", "user", "developer", "regulator"
        );
        for (p, pay) in payoff_table(params, mode) {
            let _ = writeln!(
                out,
                "{:<8} {:>10} {:>10} {:>10}",
                p.label(mode),
                pay.user,
                pay.developer,
                pay.regulator
            );
        }
        out.push('\n');
    }
    out
}

pub fn payoff_table_csv(params: &GameParams, modes: &[TrustMode]) -> String {
    let mut out = String::from("mode,profile,user,developer,regulator\n");
    for &mode in modes {
        for (p, pay) in payoff_table(params, mode) {
            let _ = writeln!(
                out,
                "{mode},{},{},{},{}",
                p.label(mode),
                pay.user,
                pay.developer,
                pay.regulator
            );
        }
    }
    out
}

pub fn stationary_text(result: &StationaryResult) -> String {
    let mut out = format!("{:<8} {:>12}\n", "profile", "probability");
    for (p, x) in result.entries() {
        let _ = writeln!(out, "{:<8} {:>12.6}", p.label(result.mode), x);
    }
    out
}

pub fn stationary_csv(result: &StationaryResult) -> String {
    let mut out = String::from("mode,profile,probability\n");
    for (p, x) in result.entries() {
        let _ = writeln!(out, "{},{},{}", result.mode, p.label(result.mode), x);
    }
    out
}
