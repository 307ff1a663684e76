//! Output files: per-run and summary CSV, run metadata and SVG line plots.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde_json::json;
use thiserror::Error;
use uos_transfer::metrics::{self, Method};

use crate::config::{format_input_gen, format_mismatch, format_policy, SystemSpec};
use crate::runner::{ResultsTable, SummaryRow};

#[derive(Debug, Error)]
pub enum EmitError {
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("cannot write {path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("nothing to write: results table is empty")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Svg,
}

impl Format {
    pub fn parse_list(s: &str) -> Result<Vec<Format>, String> {
        s.split(',')
            .map(|f| match f.trim() {
                "csv" => Ok(Format::Csv),
                "svg" => Ok(Format::Svg),
                other => Err(format!("unknown format {other:?} (csv, svg)")),
            })
            .collect()
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> EmitError + '_ {
    move |source| EmitError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> EmitError + '_ {
    move |source| EmitError::Csv {
        path: path.to_path_buf(),
        source,
    }
}

pub fn write_results_csv(table: &ResultsTable, path: &Path) -> Result<(), EmitError> {
    let file = File::create(path).map_err(io_err(path))?;
    metrics::write_records(&table.rows, BufWriter::new(file)).map_err(csv_err(path))
}

pub const SUMMARY_HEADER: [&str; 10] = [
    "method",
    "ratio",
    "runs",
    "discarded",
    "tnse",
    "av",
    "avr",
    "p_c",
    "empty_data_updates",
    "empty_transfers",
];

pub fn write_summary_csv(summary: &[SummaryRow], path: &Path) -> Result<(), EmitError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let f = metrics::format_float;
    w.write_record(SUMMARY_HEADER).map_err(csv_err(path))?;
    for s in summary {
        w.write_record([
            s.method.label().to_string(),
            f(s.ratio),
            s.runs.to_string(),
            s.discarded.to_string(),
            f(s.tnse),
            f(s.av),
            f(s.avr),
            f(s.p_c),
            s.empty_data_updates.to_string(),
            s.empty_transfers.to_string(),
        ])
        .map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

fn finite_or_null(v: f64) -> serde_json::Value {
    if v.is_finite() {
        json!(v)
    } else {
        serde_json::Value::Null
    }
}

pub fn metadata(table: &ResultsTable, scale: f64) -> serde_json::Value {
    let cfg = &table.config;
    let mut assumptions = Vec::new();
    if let SystemSpec::Named { name, factor } = &cfg.system {
        if *factor != 1.0 {
            assumptions.push(format!(
                "transition matrix of {name} multiplied by {factor} in synthesis and in every analysis model"
            ));
        }
    }
    if scale > 1.0 {
        assumptions.push(format!("reduced scale 1/{scale}: fewer Monte Carlo runs and a shorter horizon"));
    }
    let discards: Vec<serde_json::Value> = table
        .summary()
        .iter()
        .map(|s| json!({ "method": s.method.label(), "ratio": s.ratio, "discarded": s.discarded, "runs": s.runs }))
        .collect();
    json!({
        "software_version": table.version,
        "experiment_id": cfg.experiment_id.to_string(),
        "n_sources": table.n_sources,
        "scale": scale,
        "config": {
            "system": cfg.system.label(),
            "ratios": cfg.ratios,
            "r": cfg.r,
            "rho": cfg.rho,
            "horizon": cfg.horizon,
            "t_lo": cfg.t_lo,
            "mc_runs": cfg.mc_runs,
            "mismatch": format_mismatch(&cfg.mismatch),
            "synthesis_graph": format!("{:?}", cfg.synthesis_graph),
            "alpha": cfg.alpha,
            "prior_halfwidth": cfg.prior_halfwidth,
            "input_gen": format_input_gen(&cfg.input_gen),
            "empty_policy": format_policy(cfg.empty_policy),
            "master_seed": cfg.master_seed,
            "initial_state": cfg.initial_state(),
        },
        "config_text": cfg.to_toml_string(),
        "assumptions": assumptions,
        "wall_clock_seconds": table.wall_clock,
        "paired_runs_verified": table.paired_runs_verified,
        "bcm_order_sensitivity": table
            .bcm_order_gap
            .iter()
            .map(|(r, g)| json!({ "ratio": r, "mean_relative_tnse_change": finite_or_null(*g) }))
            .collect::<Vec<_>>(),
        "discards": discards,
    })
}

pub fn write_metadata(table: &ResultsTable, scale: f64, path: &Path) -> Result<(), EmitError> {
    let text = serde_json::to_string_pretty(&metadata(table, scale)).expect("json value serializes");
    fs::write(path, text + "\n").map_err(io_err(path))
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 110.0;
const MARGIN_T: f64 = 30.0;
const MARGIN_B: f64 = 50.0;

fn method_style(m: Method) -> (&'static str, &'static str) {
    match m {
        Method::Isolated => ("#555555", "6,4"),
        Method::Btl => ("#c0392b", "none"),
        Method::Bcm => ("#2471a3", "none"),
    }
}

/// Line plot of one summary metric against `log10(ratio)`. TNSE, AV and AVR
/// use a log10 vertical axis, containment a linear one on [0, 1].
pub fn plot_svg(summary: &[SummaryRow], metric: &str) -> String {
    let value = |s: &SummaryRow| match metric {
        "tnse" => s.tnse,
        "av" => s.av,
        "avr" => s.avr,
        _ => s.p_c,
    };
    let log_y = metric != "p_c";
    let ty = |v: f64| if log_y { v.log10() } else { v };
    let points: Vec<(Method, f64, f64)> = summary
        .iter()
        .filter(|s| s.ratio > 0.0)
        .map(|s| (s.method, s.ratio.log10(), value(s)))
        .filter(|(_, _, v)| v.is_finite() && (!log_y || *v > 0.0))
        .map(|(m, x, v)| (m, x, ty(v)))
        .collect();
    let (mut x0, mut x1) = points
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.1), b.max(p.1)));
    let (mut y0, mut y1) = if log_y {
        let (a, b) = points
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.2), b.max(p.2)));
        (a.floor(), b.ceil())
    } else {
        (0.0, 1.0)
    };
    if !x0.is_finite() {
        (x0, x1) = (0.0, 1.0);
    }
    if !y0.is_finite() {
        (y0, y1) = (0.0, 1.0);
    }
    if x1 - x0 < 1e-9 {
        (x0, x1) = (x0 - 0.5, x1 + 0.5);
    }
    if y1 - y0 < 1e-9 {
        (y0, y1) = (y0 - 0.5, y1 + 0.5);
    }
    let pw = WIDTH - MARGIN_L - MARGIN_R;
    let ph = HEIGHT - MARGIN_T - MARGIN_B;
    let sx = |x: f64| MARGIN_L + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| MARGIN_T + (1.0 - (y - y0) / (y1 - y0)) * ph;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    // Ticks at integer decades on the x axis.
    let mut k = x0.ceil();
    while k <= x1 + 1e-9 {
        let x = sx(k);
        let _ = writeln!(
            svg,
            r##"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="#dddddd"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{k}</text>"##,
            MARGIN_T,
            MARGIN_T + ph,
            MARGIN_T + ph + 16.0
        );
        k += 1.0;
    }
    let y_ticks: Vec<f64> = if log_y {
        let step = ((y1 - y0) / 8.0).ceil().max(1.0);
        let mut v = Vec::new();
        let mut t = y0;
        while t <= y1 + 1e-9 {
            v.push(t);
            t += step;
        }
        v
    } else {
        (0..=5).map(|i| i as f64 * 0.2).collect()
    };
    for t in y_ticks {
        let y = sy(t);
        let label = if log_y { format!("1e{t}") } else { format!("{t:.1}") };
        let _ = writeln!(
            svg,
            r##"<line x1="{MARGIN_L}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#dddddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">{label}</text>"##,
            MARGIN_L + pw,
            MARGIN_L - 6.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">log10(r_s / r)</text>"#,
        MARGIN_L + pw / 2.0,
        HEIGHT - 10.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
        MARGIN_T + ph / 2.0,
        MARGIN_T + ph / 2.0,
        metric.to_uppercase()
    );
    for (i, m) in Method::ALL.iter().enumerate() {
        let (color, dash) = method_style(*m);
        let pts: Vec<String> = points
            .iter()
            .filter(|p| p.0 == *m)
            .map(|p| format!("{:.2},{:.2}", sx(p.1), sy(p.2)))
            .collect();
        if !pts.is_empty() {
            let _ = writeln!(
                svg,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2" stroke-dasharray="{dash}"/>"#,
                pts.join(" ")
            );
        }
        let ly = MARGIN_T + 14.0 + 18.0 * i as f64;
        let lx = MARGIN_L + pw + 10.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2" stroke-dasharray="{dash}"/><text x="{:.2}" y="{:.2}">{}</text>"#,
            lx + 24.0,
            lx + 30.0,
            ly + 4.0,
            m.label()
        );
    }
    svg.push_str("</svg>\n");
    svg
}

pub const PLOTTED_METRICS: [&str; 4] = ["tnse", "av", "avr", "p_c"];

/// Writes the requested outputs into `dir`; returns the files written.
pub fn emit(table: &ResultsTable, dir: &Path, formats: &[Format], scale: f64) -> Result<Vec<PathBuf>, EmitError> {
    if table.rows.is_empty() {
        return Err(EmitError::Empty);
    }
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut written = Vec::new();
    let summary = table.summary();
    if formats.contains(&Format::Csv) {
        let p = dir.join("results.csv");
        write_results_csv(table, &p)?;
        written.push(p);
        let p = dir.join("summary.csv");
        write_summary_csv(&summary, &p)?;
        written.push(p);
    }
    if formats.contains(&Format::Svg) {
        for m in PLOTTED_METRICS {
            let p = dir.join(format!("{m}.svg"));
            fs::write(&p, plot_svg(&summary, m)).map_err(io_err(&p))?;
            written.push(p);
        }
    }
    let p = dir.join("metadata.json");
    write_metadata(table, scale, &p)?;
    written.push(p);
    Ok(written)
}
