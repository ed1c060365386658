//! metrics.csv, summary.json and SVG charts.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::eval::{summarize, MetricsRecord, SummaryTable};

pub const METRICS_HEADER: [&str; 9] = [
    "seed",
    "t",
    "fl",
    "cl",
    "arch",
    "ap_global",
    "ap_local",
    "dept",
    "mean_rec_error",
];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Format(format!("{}: {other:?}", path.display())),
    }
}

/// One row per department plus an `ALL` row per record.
pub fn write_metrics_csv(records: &[MetricsRecord], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(METRICS_HEADER).map_err(|e| csv_err(path, e))?;
    for r in records {
        let head = [r.seed.to_string(), r.t.to_string(), r.fl.clone(), r.cl.clone(), r.arch.clone()];
        let aps = [opt(r.ap_global), opt(r.ap_local)];
        let depts = r
            .dept_errors
            .iter()
            .map(|(d, e)| (d.as_str(), *e))
            .chain(std::iter::once(("ALL", r.mean_rec_error)));
        for (dept, err) in depts {
            let mut line: Vec<String> = head.to_vec();
            line.extend(aps.iter().cloned());
            line.push(dept.to_string());
            line.push(err.to_string());
            w.write_record(&line).map_err(|e| csv_err(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Inverse of [`write_metrics_csv`].
pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricsRecord>> {
    let mut rd = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header: Vec<String> = rd.headers().map_err(|e| csv_err(path, e))?.iter().map(str::to_string).collect();
    if header != METRICS_HEADER {
        return Err(Error::Format(format!("{}: unexpected header {header:?}", path.display())));
    }
    let bad = |line: u64, what: &str| Error::Format(format!("{}:{line}: bad {what}", path.display()));
    let mut out: Vec<MetricsRecord> = Vec::new();
    let mut current: Option<MetricsRecord> = None;
    for rec in rd.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let f = |i: usize| rec.get(i).unwrap_or("");
        let optf = |s: &str, what: &str| -> Result<Option<f64>> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|_| bad(line, what))
            }
        };
        let err: f64 = f(8).parse().map_err(|_| bad(line, "mean_rec_error"))?;
        let r = current.get_or_insert_with(|| MetricsRecord {
            seed: 0,
            t: 0,
            fl: String::new(),
            cl: String::new(),
            arch: String::new(),
            ap_global: None,
            ap_local: None,
            dept_errors: BTreeMap::new(),
            mean_rec_error: f64::NAN,
        });
        r.seed = f(0).parse().map_err(|_| bad(line, "seed"))?;
        r.t = f(1).parse().map_err(|_| bad(line, "t"))?;
        r.fl = f(2).to_string();
        r.cl = f(3).to_string();
        r.arch = f(4).to_string();
        r.ap_global = optf(f(5), "ap_global")?;
        r.ap_local = optf(f(6), "ap_local")?;
        if f(7) == "ALL" {
            r.mean_rec_error = err;
            out.push(current.take().expect("record in progress"));
        } else {
            r.dept_errors.insert(f(7).to_string(), err);
        }
    }
    if current.is_some() {
        return Err(Error::Format(format!("{}: record without ALL row", path.display())));
    }
    Ok(out)
}

fn write_file(path: &Path, content: &str) -> Result<()> {
    fs::write(path, content).map_err(|e| Error::io(path, e))
}

pub fn write_summary_json(table: &SummaryTable, path: &Path) -> Result<()> {
    let mut s = serde_json::to_string_pretty(&table.to_json()).expect("summary serializes");
    s.push('\n');
    write_file(path, &s)
}

/// metrics.csv, summary.json and charts. Returns the written paths.
pub fn emit_reports(table: &SummaryTable, records: &[MetricsRecord], out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();
    let metrics = out_dir.join("metrics.csv");
    write_metrics_csv(records, &metrics)?;
    written.push(metrics);
    let summary = out_dir.join("summary.json");
    write_summary_json(table, &summary)?;
    written.push(summary);
    written.extend(write_charts(records, out_dir)?);
    Ok(written)
}

/// Regenerate charts and summary from an existing metrics.csv.
pub fn replot(run_dir: &Path) -> Result<Vec<PathBuf>> {
    let records = read_metrics_csv(&run_dir.join("metrics.csv"))?;
    let summary = run_dir.join("summary.json");
    write_summary_json(&summarize(&records), &summary)?;
    let mut written = vec![summary];
    written.extend(write_charts(&records, run_dir)?);
    Ok(written)
}

type Series = (String, Vec<(f64, f64)>);

/// Mean over seeds per experience.
fn seed_mean_series<F>(records: &[&MetricsRecord], pick: F) -> Vec<(f64, f64)>
where
    F: Fn(&MetricsRecord) -> Option<f64>,
{
    let mut by_t: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for r in records {
        if let Some(v) = pick(r) {
            by_t.entry(r.t).or_default().push(v);
        }
    }
    by_t.into_iter()
        .map(|(t, v)| ((t + 1) as f64, v.iter().sum::<f64>() / v.len() as f64))
        .collect()
}

fn slug(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() { c } else { '_' }).collect()
}

pub fn write_charts(records: &[MetricsRecord], out_dir: &Path) -> Result<Vec<PathBuf>> {
    let mut groups: BTreeMap<(String, String, String), Vec<&MetricsRecord>> = BTreeMap::new();
    for r in records {
        groups.entry((r.arch.clone(), r.fl.clone(), r.cl.clone())).or_default().push(r);
    }
    let mut written = Vec::new();
    for (name, pick) in [
        ("ap_global", (|r: &MetricsRecord| r.ap_global) as fn(&MetricsRecord) -> Option<f64>),
        ("ap_local", |r: &MetricsRecord| r.ap_local),
    ] {
        let series: Vec<Series> = groups
            .iter()
            .map(|((arch, fl, cl), recs)| (format!("{fl}+{cl} ({arch})"), seed_mean_series(recs, pick)))
            .filter(|(_, pts)| !pts.is_empty())
            .collect();
        if series.is_empty() {
            continue;
        }
        let path = out_dir.join(format!("{name}.svg"));
        write_file(&path, &line_chart(&format!("{name} vs experience"), "AP", &series, Some((0.0, 1.0))))?;
        written.push(path);
    }
    for ((arch, fl, cl), recs) in &groups {
        let mut depts: Vec<&String> = recs.iter().flat_map(|r| r.dept_errors.keys()).collect();
        depts.sort();
        depts.dedup();
        let series: Vec<Series> = depts
            .iter()
            .map(|d| ((*d).clone(), seed_mean_series(recs, |r| r.dept_errors.get(*d).copied())))
            .collect();
        if series.is_empty() {
            continue;
        }
        let path = out_dir.join(format!("dept_error_{}_{}_{}.svg", slug(fl), slug(cl), slug(arch)));
        let title = format!("reconstruction error per department, {fl}+{cl} ({arch})");
        write_file(&path, &line_chart(&title, "mean error", &series, None))?;
        written.push(path);
    }
    Ok(written)
}

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Minimal SVG 1.1 line chart over experience index.
pub fn line_chart(title: &str, y_label: &str, series: &[Series], y_range: Option<(f64, f64)>) -> String {
    let (w, h) = (720.0, 420.0);
    let (left, right, top, bottom) = (60.0, 220.0, 40.0, 50.0);
    let pw = w - left - right;
    let ph = h - top - bottom;
    let pts = series.iter().flat_map(|(_, p)| p.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        if y.is_finite() {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
    }
    if let Some((a, b)) = y_range {
        y0 = a;
        y1 = b;
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    let sx = |x: f64| left + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| top + ph - (y - y0) / (y1 - y0) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="22" font-family="sans-serif" font-size="14" text-anchor="middle">{}</text>"#,
        left + pw / 2.0,
        esc(title)
    );
    let _ = writeln!(
        s,
        r#"<path d="M{left},{top} V{} H{}" fill="none" stroke="black"/>"#,
        top + ph,
        left + pw
    );
    for i in 0..=4 {
        let y = y0 + (y1 - y0) * i as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.1}" font-family="sans-serif" font-size="10" text-anchor="end">{:.3}</text>"#,
            left - 4.0,
            sy(y) + 3.0,
            y
        );
    }
    let n_ticks = (x1 - x0).round() as usize;
    for i in 0..=n_ticks.min(20) {
        let x = x0 + (x1 - x0) * i as f64 / n_ticks.clamp(1, 20) as f64;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{}" font-family="sans-serif" font-size="10" text-anchor="middle">{}</text>"#,
            sx(x),
            top + ph + 14.0,
            x.round()
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="middle">experience</text>"#,
        left + pw / 2.0,
        h - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" font-family="sans-serif" font-size="11" text-anchor="middle" transform="rotate(-90 14 {})">{}</text>"#,
        top + ph / 2.0,
        top + ph / 2.0,
        esc(y_label)
    );
    for (k, (name, points)) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let d: Vec<String> = points
            .iter()
            .filter(|(_, y)| y.is_finite())
            .enumerate()
            .map(|(i, &(x, y))| format!("{}{:.2},{:.2}", if i == 0 { "M" } else { "L" }, sx(x), sy(y)))
            .collect();
        let _ = writeln!(s, r#"<path d="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#, d.join(" "));
        let ly = top + 12.0 + 16.0 * k as f64;
        let lx = left + pw + 12.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#,
            lx + 18.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="10">{}</text>"#,
            lx + 22.0,
            ly + 3.0,
            esc(name)
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(seed: u64, t: usize) -> MetricsRecord {
        MetricsRecord {
            seed,
            t,
            fl: "fedavg".into(),
            cl: "replay".into(),
            arch: "shallow".into(),
            ap_global: Some(0.25 * (t + 1) as f64),
            ap_local: None,
            dept_errors: [("A".to_string(), 0.1), ("B".to_string(), 1.0 / 3.0)].into_iter().collect(),
            mean_rec_error: 0.2,
        }
    }

    #[test]
    fn empty_records_give_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        write_metrics_csv(&[], &p).unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), METRICS_HEADER.join(",") + "\n");
    }

    #[test]
    fn csv_round_trip_and_row_count() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        let recs: Vec<_> = (0..2).flat_map(|s| (0..3).map(move |t| rec(s, t))).collect();
        write_metrics_csv(&recs, &p).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        // 2 seeds x 3 experiences x (2 departments + ALL)
        assert_eq!(text.lines().count(), 1 + 2 * 3 * 3);
        assert_eq!(read_metrics_csv(&p).unwrap(), recs);
    }

    #[test]
    fn reports_are_reproducible() {
        let dir = tempfile::tempdir().unwrap();
        let recs = vec![rec(1, 0), rec(1, 1)];
        let a = emit_reports(&summarize(&recs), &recs, dir.path()).unwrap();
        let first: Vec<Vec<u8>> = a.iter().map(|p| fs::read(p).unwrap()).collect();
        let b = emit_reports(&summarize(&recs), &recs, dir.path()).unwrap();
        assert_eq!(a, b);
        let second: Vec<Vec<u8>> = b.iter().map(|p| fs::read(p).unwrap()).collect();
        assert_eq!(first, second);
        assert!(a.iter().any(|p| p.ends_with("ap_global.svg")));
    }
}
