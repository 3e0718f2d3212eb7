use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::ComparisonReport;
use crate::{Error, Result};

/// Published accuracies (percent) drawn as reference bars in the baseline
/// figure: (dataset, experiment, model, accuracy).
pub const REFERENCE_ACCURACY: [(&str, u8, &str, f64); 16] = [
    ("simpson", 1, "vgg16 (BL)", 74.0),
    ("simpson", 1, "resnet50 (BL)", 73.0),
    ("simpson", 2, "zhang (BL)", 57.0),
    ("simpson", 2, "kim (BL)", 68.0),
    ("simpson", 3, "tems+bilstm", 67.0),
    ("simpson", 3, "tems+bert", 79.0),
    ("simpson", 4, "tems1+bilstm", 61.0),
    ("simpson", 4, "tems1+bert", 62.0),
    ("mvsa", 1, "vgg16 (BL)", 54.0),
    ("mvsa", 1, "resnet50 (BL)", 59.0),
    ("mvsa", 2, "zhang (BL)", 58.0),
    ("mvsa", 2, "kim (BL)", 63.0),
    ("mvsa", 3, "tems+bilstm", 66.0),
    ("mvsa", 3, "tems+bert", 84.0),
    ("mvsa", 4, "tems1+bilstm", 63.0),
    ("mvsa", 4, "tems1+bert", 69.0),
];

const METRIC_COLORS: [(&str, &str); 4] = [
    ("Acc", "#4e79a7"),
    ("Pre", "#f28e2b"),
    ("F1", "#59a14f"),
    ("Rec", "#e15759"),
];

fn file_stem(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c.to_ascii_lowercase() } else { '_' })
        .collect()
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

struct Canvas {
    svg: String,
    height: f64,
    plot_top: f64,
    plot_bottom: f64,
}

impl Canvas {
    fn new(width: f64, height: f64, title: &str) -> Self {
        let mut svg = String::new();
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"#
        );
        let _ = writeln!(svg, r##"<rect width="{width}" height="{height}" fill="#ffffff"/>"##);
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
            width / 2.0,
            escape(title)
        );
        let mut c = Canvas {
            svg,
            height,
            plot_top: 40.0,
            plot_bottom: height - 70.0,
        };
        c.axis(width);
        c
    }

    fn y(&self, v: f64) -> f64 {
        self.plot_bottom - v.clamp(0.0, 1.0) * (self.plot_bottom - self.plot_top)
    }

    fn axis(&mut self, width: f64) {
        for tick in 0..=5 {
            let v = tick as f64 / 5.0;
            let y = self.y(v);
            let _ = writeln!(
                self.svg,
                r##"<line x1="50" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#dddddd"/><text x="44" y="{:.1}" text-anchor="end">{:.1}</text>"##,
                width - 20.0,
                y + 4.0,
                v
            );
        }
    }

    fn bar(&mut self, x: f64, w: f64, v: f64, color: &str) {
        let y = self.y(v);
        let _ = writeln!(
            self.svg,
            r#"<rect x="{x:.1}" y="{y:.1}" width="{w:.1}" height="{:.1}" fill="{color}"/>"#,
            self.plot_bottom - y
        );
    }

    fn label(&mut self, x: f64, text: &str) {
        let y = self.plot_bottom + 14.0;
        let _ = writeln!(
            self.svg,
            r#"<text x="{x:.1}" y="{y:.1}" text-anchor="end" transform="rotate(-30 {x:.1} {y:.1})">{}</text>"#,
            escape(text)
        );
    }

    fn mean_marker(&mut self, x: f64, v: f64) {
        let y = self.y(v);
        let _ = writeln!(
            self.svg,
            r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle" font-size="16" font-weight="bold">×</text>"#,
            y + 5.0
        );
    }

    fn legend(&mut self, x: f64, entries: &[(&str, &str)]) {
        for (i, (name, color)) in entries.iter().enumerate() {
            let y = self.height - 18.0;
            let xi = x + i as f64 * 110.0;
            let _ = writeln!(
                self.svg,
                r#"<rect x="{xi:.1}" y="{:.1}" width="10" height="10" fill="{color}"/><text x="{:.1}" y="{y:.1}">{}</text>"#,
                y - 9.0,
                xi + 14.0,
                escape(name)
            );
        }
    }

    fn finish(mut self) -> String {
        self.svg.push_str("</svg>\n");
        self.svg
    }
}

fn dataset_figure(report: &ComparisonReport, dataset: &str) -> String {
    let rows: Vec<_> = report.rows.iter().filter(|r| r.dataset == dataset).collect();
    let group_w = 80.0;
    let width = 90.0 + group_w * rows.len() as f64;
    let averaging = rows.first().map_or("macro", |r| r.metrics.averaging.as_str());
    let mut c = Canvas::new(
        width.max(400.0),
        360.0,
        &format!("{dataset}: accuracy and {averaging} P/F1/R (× = experiment mean accuracy)"),
    );
    for (i, r) in rows.iter().enumerate() {
        let x0 = 60.0 + i as f64 * group_w;
        let m = &r.metrics;
        for (k, v) in [m.accuracy, m.precision, m.f1, m.recall].into_iter().enumerate() {
            c.bar(x0 + k as f64 * 16.0, 14.0, v, METRIC_COLORS[k].1);
        }
        c.label(x0 + 40.0, &r.label());
    }
    for mean in report.means.iter().filter(|m| m.dataset == dataset) {
        let xs: Vec<f64> = rows
            .iter()
            .enumerate()
            .filter(|(_, r)| r.experiment == mean.experiment)
            .map(|(i, _)| 60.0 + i as f64 * group_w + 32.0)
            .collect();
        let x = xs.iter().sum::<f64>() / xs.len() as f64;
        c.mean_marker(x, mean.accuracy);
    }
    c.legend(60.0, &METRIC_COLORS);
    c.finish()
}

fn baseline_figure(report: &ComparisonReport) -> String {
    let mut bars: Vec<(String, f64, &str)> = Vec::new();
    for dataset in report.datasets() {
        for (d, e, model, acc) in REFERENCE_ACCURACY {
            if d == dataset {
                bars.push((format!("{d} exp{e} {model}"), acc / 100.0, "#bab0ac"));
            }
        }
        for r in report.rows.iter().filter(|r| r.dataset == dataset) {
            bars.push((format!("{} {}", r.dataset, r.label()), r.metrics.accuracy, "#4e79a7"));
        }
    }
    let step = 28.0;
    let width = 100.0 + step * bars.len() as f64;
    let mut c = Canvas::new(width.max(400.0), 420.0, "Accuracy against published reference results");
    c.plot_bottom = 420.0 - 150.0;
    for (i, (name, v, color)) in bars.iter().enumerate() {
        let x = 60.0 + i as f64 * step;
        c.bar(x, 20.0, *v, color);
        c.label(x + 10.0, name);
    }
    c.legend(60.0, &[("reference", "#bab0ac"), ("this run", "#4e79a7")]);
    c.finish()
}

/// Writes `comparison_<dataset>.svg` for each dataset and
/// `baseline_comparison.svg`. Output depends only on the report.
pub fn emit_plots(report: &ComparisonReport, out_dir: &Path) -> Result<Vec<PathBuf>> {
    if report.is_empty() {
        return Err(Error::InvalidArgument("cannot plot an empty report".into()));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut files: Vec<(PathBuf, String)> = report
        .datasets()
        .iter()
        .map(|d| (out_dir.join(format!("comparison_{}.svg", file_stem(d))), dataset_figure(report, d)))
        .collect();
    files.push((out_dir.join("baseline_comparison.svg"), baseline_figure(report)));
    for (path, svg) in &files {
        std::fs::write(path, svg).map_err(|e| Error::io(path, e))?;
    }
    Ok(files.into_iter().map(|(p, _)| p).collect())
}
