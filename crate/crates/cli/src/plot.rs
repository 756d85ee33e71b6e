//! Static SVG figures, with the plotted numbers as CSV, from whatever stage
//! outputs exist. Missing inputs are skipped, so an empty output root yields
//! no figures.

use std::fmt::Write as _;
use std::path::Path;

use dsi_core::analytics::{ErrorReport, FstHistogram, Histogram, ParameterHistogram};
use serde::Deserialize;

use crate::arrayfile::{write_bytes, ArrayFile};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

const W: f64 = 640.0;
const H: f64 = 400.0;
const PAD: f64 = 56.0;
const PRIOR_COLOR: &str = "#9e9e9e";
const POST_COLOR: &str = "#1f77b4";
const TRUTH_COLOR: &str = "#d62728";

/// Linear map from data to plot coordinates.
struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn new(x: (f64, f64), y: (f64, f64)) -> Self {
        let widen = |(lo, hi): (f64, f64)| {
            if hi > lo {
                (lo, hi)
            } else {
                (lo - 0.5 * lo.abs().max(1e-12), hi + 0.5 * hi.abs().max(1e-12))
            }
        };
        Self { x: widen(x), y: widen(y) }
    }

    fn px(&self, x: f64) -> f64 {
        PAD + (x - self.x.0) / (self.x.1 - self.x.0) * (W - 2.0 * PAD)
    }

    fn py(&self, y: f64) -> f64 {
        H - PAD - (y - self.y.0) / (self.y.1 - self.y.0) * (H - 2.0 * PAD)
    }
}

struct Svg {
    body: String,
}

impl Svg {
    fn new(title: &str) -> Self {
        let mut body = String::new();
        let _ = write!(
            body,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12"><rect width="100%" height="100%" fill="white"/><text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#,
            W / 2.0,
            escape(title)
        );
        Self { body }
    }

    fn axes(&mut self, f: &Frame, xlabel: &str, ylabel: &str) {
        let _ = write!(
            self.body,
            r#"<rect x="{PAD}" y="{PAD}" width="{}" height="{}" fill="none" stroke="black"/>"#,
            W - 2.0 * PAD,
            H - 2.0 * PAD
        );
        for (v, anchor_y) in [(f.y.0, H - PAD), (f.y.1, PAD)] {
            let _ = write!(
                self.body,
                r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
                PAD - 4.0,
                anchor_y + 4.0,
                fmt_num(v)
            );
        }
        for (v, x) in [(f.x.0, PAD), (f.x.1, W - PAD)] {
            let _ = write!(
                self.body,
                r#"<text x="{x}" y="{}" text-anchor="middle">{}</text>"#,
                H - PAD + 16.0,
                fmt_num(v)
            );
        }
        let _ = write!(
            self.body,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text><text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{}</text>"#,
            W / 2.0,
            H - 12.0,
            escape(xlabel),
            H / 2.0,
            H / 2.0,
            escape(ylabel)
        );
    }

    fn polyline(&mut self, f: &Frame, pts: &[(f64, f64)], color: &str, dash: bool) {
        let coords: Vec<String> = pts
            .iter()
            .filter(|p| p.0.is_finite() && p.1.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", f.px(x), f.py(y)))
            .collect();
        let dash = if dash { r#" stroke-dasharray="5,3""# } else { "" };
        let _ = write!(
            self.body,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>"#,
            coords.join(" ")
        );
    }

    fn band(&mut self, f: &Frame, xs: &[f64], lo: &[f64], hi: &[f64], color: &str) {
        let mut coords: Vec<String> = xs.iter().zip(lo).map(|(&x, &y)| format!("{:.2},{:.2}", f.px(x), f.py(y))).collect();
        coords.extend(xs.iter().zip(hi).rev().map(|(&x, &y)| format!("{:.2},{:.2}", f.px(x), f.py(y))));
        let _ = write!(
            self.body,
            r#"<polygon points="{}" fill="{color}" fill-opacity="0.35" stroke="none"/>"#,
            coords.join(" ")
        );
    }

    fn rect(&mut self, x0: f64, y0: f64, x1: f64, y1: f64, color: &str, opacity: f64) {
        let _ = write!(
            self.body,
            r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{color}" fill-opacity="{opacity}"/>"#,
            x0.min(x1),
            y0.min(y1),
            (x1 - x0).abs(),
            (y1 - y0).abs()
        );
    }

    fn vline(&mut self, f: &Frame, x: f64, color: &str) {
        let _ = write!(
            self.body,
            r#"<line x1="{0:.2}" x2="{0:.2}" y1="{PAD}" y2="{1}" stroke="{color}" stroke-width="2"/>"#,
            f.px(x),
            H - PAD
        );
    }

    fn legend(&mut self, items: &[(&str, &str)]) {
        for (k, (label, color)) in items.iter().enumerate() {
            let y = PAD + 14.0 + 16.0 * k as f64;
            let _ = write!(
                self.body,
                r#"<rect x="{}" y="{}" width="12" height="10" fill="{color}"/><text x="{}" y="{}">{}</text>"#,
                W - PAD - 120.0,
                y - 9.0,
                W - PAD - 104.0,
                y,
                escape(label)
            );
        }
    }

    fn finish(mut self) -> String {
        self.body.push_str("</svg>\n");
        self.body
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn fmt_num(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-2 || v.abs() >= 1e4) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

fn span(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<Option<T>> {
    if !path.exists() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
    serde_json::from_str(&text).map(Some).map_err(|e| CliError::Corrupt {
        path: path.display().to_string(),
        detail: e.to_string(),
    })
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<Option<Vec<T>>> {
    if !path.exists() {
        return Ok(None);
    }
    let corrupt = |e: csv::Error| CliError::Corrupt {
        path: path.display().to_string(),
        detail: e.to_string(),
    };
    let mut r = csv::Reader::from_path(path).map_err(corrupt)?;
    let rows = r.deserialize().collect::<Result<Vec<T>, _>>().map_err(corrupt)?;
    Ok(Some(rows))
}

#[derive(Deserialize)]
struct LossRow {
    epoch: f64,
    train_loss: f64,
    val_loss: Option<f64>,
}

#[derive(Deserialize)]
struct BandRow {
    well: usize,
    field: String,
    cell: usize,
    year: f64,
    prior_p10: f64,
    prior_p90: f64,
    post_p10: f64,
    post_p50: f64,
    post_p90: f64,
    truth: f64,
}

fn loss_plot(rows: &[LossRow]) -> String {
    let log = |v: f64| v.max(1e-300).log10();
    let xs = span(rows.iter().map(|r| r.epoch));
    let ys = span(rows.iter().flat_map(|r| [Some(r.train_loss), r.val_loss]).flatten().map(log));
    let f = Frame::new(xs, ys);
    let mut s = Svg::new("Training history");
    s.axes(&f, "epoch", "log10 loss");
    let train: Vec<(f64, f64)> = rows.iter().map(|r| (r.epoch, log(r.train_loss))).collect();
    s.polyline(&f, &train, POST_COLOR, false);
    let val: Vec<(f64, f64)> = rows.iter().filter_map(|r| r.val_loss.map(|v| (r.epoch, log(v)))).collect();
    if !val.is_empty() {
        s.polyline(&f, &val, TRUTH_COLOR, true);
    }
    s.legend(&[("training", POST_COLOR), ("validation", TRUTH_COLOR)]);
    s.finish()
}

fn error_plot(report: &ErrorReport) -> String {
    let boxes = [
        ("pressure", report.pressure),
        ("strain", report.strain),
        ("sigma_n_eff", report.sigma_n_eff),
        ("tau", report.tau),
    ];
    let hi = boxes.iter().map(|b| b.1.p90).fold(0.0, f64::max);
    let f = Frame::new((0.0, boxes.len() as f64), (0.0, hi * 1.1));
    let mut s = Svg::new("Held-out reconstruction errors (P10/P25/P50/P75/P90)");
    s.axes(&f, "field", "range-normalized error");
    for (k, (name, b)) in boxes.iter().enumerate() {
        let (x0, x1) = (f.px(k as f64 + 0.25), f.px(k as f64 + 0.75));
        let xm = f.px(k as f64 + 0.5);
        s.rect(x0, f.py(b.p25), x1, f.py(b.p75), POST_COLOR, 0.5);
        let _ = write!(
            s.body,
            r#"<line x1="{x0:.2}" x2="{x1:.2}" y1="{0:.2}" y2="{0:.2}" stroke="black" stroke-width="2"/><line x1="{xm:.2}" x2="{xm:.2}" y1="{1:.2}" y2="{2:.2}" stroke="black"/><text x="{xm:.2}" y="{3}" text-anchor="middle">{name}</text>"#,
            f.py(b.p50),
            f.py(b.p10),
            f.py(b.p90),
            H - PAD - 6.0,
        );
    }
    s.finish()
}

fn histogram_plot(title: &str, xlabel: &str, prior: &Histogram, post: &Histogram, truth: Option<f64>) -> String {
    let density = |h: &Histogram| -> Vec<f64> {
        let n = h.total().max(1) as f64;
        h.counts.iter().map(|&c| c as f64 / n).collect()
    };
    let (dp, dq) = (density(prior), density(post));
    let lo = prior.edges[0].min(post.edges[0]);
    let hi = prior.edges[prior.edges.len() - 1].max(post.edges[post.edges.len() - 1]);
    let top = dp.iter().chain(&dq).copied().fold(0.0, f64::max);
    let f = Frame::new((lo, hi), (0.0, top * 1.1));
    let mut s = Svg::new(title);
    s.axes(&f, xlabel, "fraction of members");
    for (h, d, color) in [(prior, &dp, PRIOR_COLOR), (post, &dq, POST_COLOR)] {
        for (b, &v) in d.iter().enumerate() {
            if v > 0.0 {
                s.rect(f.px(h.edges[b]), f.py(0.0), f.px(h.edges[b + 1]), f.py(v), color, 0.6);
            }
        }
    }
    if let Some(t) = truth {
        s.vline(&f, t, TRUTH_COLOR);
    }
    s.legend(&[("prior", PRIOR_COLOR), ("posterior", POST_COLOR), ("truth", TRUTH_COLOR)]);
    s.finish()
}

fn band_plot(title: &str, rows: &[&BandRow]) -> String {
    let xs: Vec<f64> = rows.iter().map(|r| r.year).collect();
    let ys = span(rows.iter().flat_map(|r| [r.prior_p10, r.prior_p90, r.post_p10, r.post_p90, r.truth]));
    let f = Frame::new(span(xs.iter().copied()), ys);
    let mut s = Svg::new(title);
    s.axes(&f, "year", &rows[0].field);
    let col = |g: fn(&BandRow) -> f64| -> Vec<f64> { rows.iter().map(|r| g(r)).collect() };
    s.band(&f, &xs, &col(|r| r.prior_p10), &col(|r| r.prior_p90), PRIOR_COLOR);
    s.band(&f, &xs, &col(|r| r.post_p10), &col(|r| r.post_p90), POST_COLOR);
    let p50: Vec<(f64, f64)> = rows.iter().map(|r| (r.year, r.post_p50)).collect();
    s.polyline(&f, &p50, POST_COLOR, false);
    let truth: Vec<(f64, f64)> = rows.iter().map(|r| (r.year, r.truth)).collect();
    s.polyline(&f, &truth, TRUTH_COLOR, true);
    s.legend(&[("prior P10-P90", PRIOR_COLOR), ("posterior P10-P90", POST_COLOR), ("truth", TRUTH_COLOR)]);
    s.finish()
}

/// Top-layer maps side by side on a shared color scale.
fn map_panel(title: &str, maps: &[(String, Vec<f64>)], nx: usize, ny: usize) -> String {
    let (lo, hi) = span(maps.iter().flat_map(|(_, m)| m[..nx * ny].iter().copied()));
    let cell = ((W - 20.0) / (maps.len() as f64 * (nx as f64 + 2.0))).min((H - 80.0) / ny as f64);
    let mut s = Svg::new(title);
    for (k, (label, m)) in maps.iter().enumerate() {
        let x0 = 10.0 + k as f64 * (nx as f64 + 2.0) * cell;
        let _ = write!(
            s.body,
            r#"<text x="{:.2}" y="52" text-anchor="middle">{}</text>"#,
            x0 + 0.5 * nx as f64 * cell,
            escape(label)
        );
        for j in 0..ny {
            for i in 0..nx {
                let v = m[j * nx + i];
                let t = if hi > lo { (v - lo) / (hi - lo) } else { 0.5 };
                let r = (255.0 * t) as u8;
                let b = (255.0 * (1.0 - t)) as u8;
                let _ = write!(
                    s.body,
                    "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{cell:.2}\" height=\"{cell:.2}\" fill=\"rgb({r},64,{b})\"/>",
                    x0 + i as f64 * cell,
                    60.0 + (ny - 1 - j) as f64 * cell
                );
            }
        }
    }
    let _ = write!(
        s.body,
        r#"<text x="10" y="{}">color range {} to {}</text>"#,
        H - 8.0,
        fmt_num(lo),
        fmt_num(hi)
    );
    s.finish()
}

fn csv_text(header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> CliResult<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| CliError::Runtime(format!("csv: {e}"));
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(&r).map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Runtime(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// One row per histogram bin.
fn histogram_csv(prior: &Histogram, post: &Histogram) -> CliResult<String> {
    csv_text(
        &["bin_lo", "bin_hi", "prior_count", "posterior_count"],
        (0..prior.counts.len()).map(|b| {
            vec![
                prior.edges[b].to_string(),
                prior.edges[b + 1].to_string(),
                prior.counts[b].to_string(),
                post.counts.get(b).map_or(String::new(), |c| c.to_string()),
            ]
        }),
    )
}

fn slug(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() { c } else { '_' }).collect()
}

/// Writes every figure (and its CSV) whose inputs exist; returns the paths written,
/// relative to the output root.
pub fn cmd_plot(cfg: &RunConfig) -> CliResult<Vec<String>> {
    let root = &cfg.output_dir;
    let mut figures: Vec<(String, String)> = Vec::new();

    if let Some(rows) = read_csv::<LossRow>(&root.join("train/loss.csv"))? {
        if !rows.is_empty() {
            figures.push(("loss.svg".into(), loss_plot(&rows)));
        }
    }
    if let Some(r) = read_json::<ErrorReport>(&root.join("train/error_report.json"))? {
        figures.push(("errors.svg".into(), error_plot(&r)));
    }
    if let Some(hs) = read_json::<Vec<FstHistogram>>(&root.join("dsi/fst_histograms.json"))? {
        for h in &hs {
            let title = format!("Average slip tendency, {}", h.fault);
            figures.push((format!("fst_{}.csv", slug(&h.fault)), histogram_csv(&h.prior, &h.posterior)?));
            figures.push((
                format!("fst_{}.svg", slug(&h.fault)),
                histogram_plot(&title, "average FST", &h.prior, &h.posterior, h.truth),
            ));
        }
    }
    if let Some(hs) = read_json::<Vec<ParameterHistogram>>(&root.join("dsi/parameter_histograms.json"))? {
        for h in &hs {
            figures.push((format!("param_{}.csv", slug(&h.name)), histogram_csv(&h.prior, &h.posterior)?));
            figures.push((
                format!("param_{}.svg", slug(&h.name)),
                histogram_plot(&h.name, &h.name, &h.prior, &h.posterior, h.truth),
            ));
        }
    }
    if let Some(rows) = read_csv::<BandRow>(&root.join("dsi/bands.csv"))? {
        // One figure per well and field, at the shallowest monitored cell.
        let mut keys: Vec<(usize, String)> = rows.iter().map(|r| (r.well, r.field.clone())).collect();
        keys.dedup();
        keys.sort();
        keys.dedup();
        for (well, field) in keys {
            let cell = rows
                .iter()
                .filter(|r| r.well == well && r.field == field)
                .map(|r| r.cell)
                .min()
                .expect("key came from rows");
            let sel: Vec<&BandRow> = rows.iter().filter(|r| r.well == well && r.field == field && r.cell == cell).collect();
            let text = csv_text(
                &["year", "prior_p10", "prior_p90", "post_p10", "post_p50", "post_p90", "truth"],
                sel.iter().map(|r| {
                    [r.year, r.prior_p10, r.prior_p90, r.post_p10, r.post_p50, r.post_p90, r.truth]
                        .iter()
                        .map(|v| v.to_string())
                        .collect()
                }),
            )?;
            figures.push((format!("band_well{well}_{}.csv", slug(&field)), text));
            figures.push((
                format!("band_well{well}_{}.svg", slug(&field)),
                band_plot(&format!("Monitor {well}, {field}, cell {cell}"), &sel),
            ));
        }
    }
    let reps = root.join("dsi/representative_pressure.fdsi");
    let truth = root.join("dsi/truth_pressure.fdsi");
    if reps.exists() && truth.exists() {
        let mut maps = vec![("truth".to_string(), ArrayFile::read(&truth)?.data)];
        for (k, m) in ArrayFile::read(&reps)?.to_rows()?.into_iter().enumerate() {
            maps.push((format!("representative {}", k + 1), m));
        }
        figures.push((
            "representatives.svg".into(),
            map_panel("Final pressure, top layer", &maps, cfg.grid.nx, cfg.grid.ny),
        ));
    }

    let mut written = Vec::with_capacity(figures.len());
    for (name, svg) in figures {
        let rel = format!("plots/{name}");
        write_bytes(&root.join(&rel), svg.as_bytes())?;
        written.push(rel);
    }
    Ok(written)
}
