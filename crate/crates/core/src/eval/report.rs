use std::str::FromStr;

use crate::{Error, Result};

use super::EvalReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Markdown,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "md" | "markdown" => Ok(Self::Markdown),
            other => Err(Error::Config(format!("unknown report format `{other}` (csv|markdown)"))),
        }
    }
}

pub fn report_emit(report: &EvalReport, format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::Csv => emit_csv(report),
        ReportFormat::Markdown => Ok(emit_markdown(report)),
    }
}

fn ap_field(ap: Option<f64>) -> String {
    ap.map_or_else(|| "n/a".to_string(), |v| v.to_string())
}

fn csv_section(header: &[&str], rows: Vec<Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().flexible(true).from_writer(Vec::new());
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(&r).map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| Error::Format(e.to_string()))
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(format!("csv: {e}"))
}

// Three sections separated by blank lines: per-attribute APs, per-mask
// means, and the aggregate over masks. Floats use shortest round-trip form.
fn emit_csv(r: &EvalReport) -> Result<String> {
    let per_attr = r
        .rows
        .iter()
        .flat_map(|row| {
            r.attributes
                .iter()
                .zip(&row.aps)
                .map(|(a, ap)| vec![row.label.clone(), a.clone(), ap_field(*ap)])
        })
        .collect();
    let means = r.rows.iter().map(|row| vec![row.label.clone(), row.mean_ap.to_string()]).collect();
    let mut out = csv_section(&["mask", "attribute", "ap"], per_attr)?;
    out.push(b'\n');
    out.extend(csv_section(&["mask", "mean_ap"], means)?);
    out.push(b'\n');
    out.extend(csv_section(
        &["aggregate", "mean", "std"],
        vec![vec!["all".into(), r.mean.to_string(), r.std.to_string()]],
    )?);
    String::from_utf8(out).map_err(|e| Error::Format(e.to_string()))
}

fn table(header: Vec<String>, rows: Vec<Vec<String>>) -> String {
    let mut widths: Vec<usize> = header.iter().map(String::len).collect();
    for r in &rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: &[String]| {
        let body: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        format!("| {} |\n", body.join(" | "))
    };
    let mut s = line(&header);
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    s.push_str(&format!("|-{}-|\n", rule.join("-|-")));
    for r in &rows {
        s.push_str(&line(r));
    }
    s
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |v| format!("{:.2}", 100.0 * v))
}

fn emit_markdown(r: &EvalReport) -> String {
    let mut rows: Vec<Vec<String>> = r.rows.iter().map(|row| vec![row.label.clone(), pct(Some(row.mean_ap))]).collect();
    rows.push(vec![
        format!("mean of {}", r.rows.len()),
        format!("{} ± {}", pct(Some(r.mean)), pct(Some(r.std))),
    ]);
    let mut s = String::from("## Mean AP (%) per feature combination\n\n");
    s.push_str(&table(vec!["mask".into(), "mAP".into()], rows));

    let mut header = vec!["attribute".to_string(), "prevalence".into(), "random".into()];
    header.extend(r.rows.iter().map(|row| row.label.clone()));
    let rows = r
        .attributes
        .iter()
        .enumerate()
        .map(|(a, name)| {
            let mut cells = vec![name.clone(), pct(r.prevalence.get(a).copied()), pct(r.random_ap.get(a).copied().flatten())];
            cells.extend(r.rows.iter().map(|row| pct(row.aps[a])));
            cells
        })
        .collect();
    s.push_str("\n## AP (%) per attribute\n\n");
    s.push_str(&table(header, rows));
    s
}

/// Numbers recovered from a CSV report.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParsedReport {
    pub aps: Vec<(String, String, Option<f64>)>,
    pub means: Vec<(String, f64)>,
    pub aggregate: (f64, f64),
}

pub fn parse_report_csv(text: &str) -> Result<ParsedReport> {
    let mut rd = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let num = |s: &str| s.parse::<f64>().map_err(|_| Error::Format(format!("bad number `{s}`")));
    let mut out = ParsedReport::default();
    let mut section = "";
    let mut seen_aggregate = false;
    for rec in rd.records() {
        let rec = rec.map_err(csv_err)?;
        let f: Vec<&str> = rec.iter().collect();
        match f.as_slice() {
            ["mask", "attribute", "ap"] => section = "ap",
            ["mask", "mean_ap"] => section = "mean",
            ["aggregate", "mean", "std"] => section = "agg",
            [m, a, ap] if section == "ap" => {
                let v = if *ap == "n/a" { None } else { Some(num(ap)?) };
                out.aps.push((m.to_string(), a.to_string(), v));
            }
            [m, v] if section == "mean" => out.means.push((m.to_string(), num(v)?)),
            [_, m, s] if section == "agg" => {
                out.aggregate = (num(m)?, num(s)?);
                seen_aggregate = true;
            }
            other => return Err(Error::Format(format!("unexpected report row {other:?}"))),
        }
    }
    if !seen_aggregate {
        return Err(Error::Format("report has no aggregate row".into()));
    }
    Ok(out)
}
