//! SVG line plots of trace CSVs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::run::CSV_COLUMNS;
use super::CliError;

/// Floor applied to values before taking logarithms.
pub const LOG_FLOOR: f64 = 1e-16;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const MARGIN_LEFT: f64 = 80.0;
const MARGIN_RIGHT: f64 = 190.0;
const MARGIN_TOP: f64 = 30.0;
const MARGIN_BOTTOM: f64 = 70.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum XAxis {
    #[default]
    #[value(name = "grad_evals")]
    GradEvals,
    #[value(name = "t")]
    T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum YAxis {
    #[default]
    #[value(name = "F")]
    F,
    #[value(name = "exact_residual")]
    ExactResidual,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct PlotOptions {
    pub x: XAxis,
    pub y: YAxis,
    pub log_y: bool,
}

/// One parsed CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub run_id: usize,
    pub algorithm: String,
    pub setting: String,
    pub seed: u64,
    pub t: usize,
    pub grad_evals: usize,
    pub objective: f64,
    pub residual: Option<f64>,
    pub nnz: usize,
    pub wall_ms: f64,
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, line: usize) -> Result<T, CliError> {
    let raw = rec.get(i).unwrap_or("");
    raw.parse()
        .map_err(|_| CliError::Validation(format!("line {line}: bad {} value '{raw}'", CSV_COLUMNS[i])))
}

/// Parses a trace CSV; the header must be exactly the trace columns.
pub fn parse_trace_csv(text: &str) -> Result<Vec<TraceRow>, CliError> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header = r.headers().map_err(|e| CliError::Validation(format!("CSV header: {e}")))?.clone();
    let got: Vec<&str> = header.iter().collect();
    if got.is_empty() || got == [""] {
        return Err(CliError::Validation("CSV is empty".into()));
    }
    if let Some(c) = got.iter().find(|c| !CSV_COLUMNS.contains(c)) {
        return Err(CliError::Validation(format!("unknown CSV column '{c}'")));
    }
    if let Some(c) = CSV_COLUMNS.iter().find(|c| !got.contains(c)) {
        return Err(CliError::Validation(format!("missing CSV column '{c}'")));
    }
    if got != CSV_COLUMNS {
        return Err(CliError::Validation(format!("CSV columns must be in order {}", CSV_COLUMNS.join(","))));
    }
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| CliError::Validation(format!("line {line}: {e}")))?;
        let objective = match rec.get(6).unwrap_or("") {
            "inf" => f64::INFINITY,
            _ => field(&rec, 6, line)?,
        };
        let residual = match rec.get(7).unwrap_or("") {
            "" => None,
            _ => Some(field(&rec, 7, line)?),
        };
        rows.push(TraceRow {
            run_id: field(&rec, 0, line)?,
            algorithm: field(&rec, 1, line)?,
            setting: field(&rec, 2, line)?,
            seed: field(&rec, 3, line)?,
            t: field(&rec, 4, line)?,
            grad_evals: field(&rec, 5, line)?,
            objective,
            residual,
            nnz: field(&rec, 8, line)?,
            wall_ms: field(&rec, 9, line)?,
        });
    }
    if rows.is_empty() {
        return Err(CliError::Validation("CSV has no data rows".into()));
    }
    Ok(rows)
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

/// Per-(algorithm, setting) curve of per-iteration medians over seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub algorithm: String,
    pub setting: String,
    pub points: Vec<(f64, f64)>,
}

/// Per-iteration x and y samples of one (algorithm, setting) group.
type Group = BTreeMap<usize, (Vec<f64>, Vec<f64>)>;

pub fn median_curves(rows: &[TraceRow], opts: &PlotOptions) -> Vec<Curve> {
    let mut groups: BTreeMap<(String, String), Group> = BTreeMap::new();
    for r in rows {
        let y = match opts.y {
            YAxis::F => Some(r.objective),
            YAxis::ExactResidual => r.residual,
        };
        let Some(y) = y.filter(|v| v.is_finite()) else { continue };
        let x = match opts.x {
            XAxis::GradEvals => r.grad_evals as f64,
            XAxis::T => r.t as f64,
        };
        let slot = groups.entry((r.algorithm.clone(), r.setting.clone())).or_default().entry(r.t).or_default();
        slot.0.push(x);
        slot.1.push(y);
    }
    groups
        .into_iter()
        .map(|((algorithm, setting), by_t)| {
            let points = by_t.into_values().map(|(mut xs, mut ys)| (median(&mut xs), median(&mut ys))).collect();
            Curve { algorithm, setting, points }
        })
        .collect()
}

fn nice_ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    let span = (hi - lo).max(f64::MIN_POSITIVE);
    let raw = span / target as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| span / s <= target as f64).unwrap_or(10.0 * mag);
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + 1e-9 * step {
        out.push(if t.abs() < 1e-12 * step { 0.0 } else { t });
        t += step;
    }
    out
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e5 || v.abs() < 1e-3 {
        format!("{v:.1e}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Renders curves as a standalone SVG document.
pub fn render_svg(rows: &[TraceRow], opts: &PlotOptions) -> Result<String, CliError> {
    let curves = median_curves(rows, opts);
    let clamped = opts.log_y && curves.iter().any(|c| c.points.iter().any(|p| p.1 < LOG_FLOOR));
    let ty = |y: f64| if opts.log_y { y.max(LOG_FLOOR).log10() } else { y };
    let pts: Vec<(f64, f64)> = curves.iter().flat_map(|c| c.points.iter().map(|&(x, y)| (x, ty(y)))).collect();
    if pts.is_empty() {
        return Err(CliError::Validation("no finite values to plot".into()));
    }
    let (mut x0, mut x1) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, p| (a.0.min(p.0), a.1.max(p.0)));
    let (mut y0, mut y1) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, p| (a.0.min(p.1), a.1.max(p.1)));
    if x1 - x0 <= 0.0 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    if y1 - y0 <= 0.0 {
        let pad = if y0 == 0.0 { 0.5 } else { 0.05 * y0.abs() };
        y0 -= pad;
        y1 += pad;
    }
    let (pw, ph) = (WIDTH - MARGIN_LEFT - MARGIN_RIGHT, HEIGHT - MARGIN_TOP - MARGIN_BOTTOM);
    let sx = |x: f64| MARGIN_LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| MARGIN_TOP + (1.0 - (y - y0) / (y1 - y0)) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<rect x="{MARGIN_LEFT}" y="{MARGIN_TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for t in nice_ticks(x0, x1, 6) {
        let x = sx(t);
        let yb = MARGIN_TOP + ph;
        let _ = writeln!(s, r#"<line x1="{x:.2}" y1="{yb}" x2="{x:.2}" y2="{:.2}" stroke="black"/>"#, yb + 5.0);
        let _ = writeln!(s, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, yb + 18.0, fmt_tick(t));
    }
    for t in nice_ticks(y0, y1, 6) {
        let y = sy(t);
        let label = if opts.log_y { format!("1e{}", fmt_tick(t)) } else { fmt_tick(t) };
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{y:.2}" x2="{MARGIN_LEFT}" y2="{y:.2}" stroke="black"/>"#,
            MARGIN_LEFT - 5.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{label}</text>"#,
            MARGIN_LEFT - 8.0,
            y + 4.0
        );
    }
    let x_label = match opts.x {
        XAxis::GradEvals => "stochastic gradient evaluations",
        XAxis::T => "iteration t",
    };
    let y_name = match opts.y {
        YAxis::F => "F(x)",
        YAxis::ExactResidual => "exact residual",
    };
    let y_label = if opts.log_y { format!("log10 {y_name}") } else { y_name.to_string() };
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{x_label}</text>"#,
        MARGIN_LEFT + pw / 2.0,
        MARGIN_TOP + ph + 40.0
    );
    let _ = writeln!(
        s,
        r#"<text x="20" y="{:.2}" text-anchor="middle" transform="rotate(-90 20 {:.2})">{y_label}</text>"#,
        MARGIN_TOP + ph / 2.0,
        MARGIN_TOP + ph / 2.0
    );
    for (i, c) in curves.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let dash = if c.setting == "finite_sum" { r#" stroke-dasharray="6,4""# } else { "" };
        let path: Vec<String> = c.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(ty(y)))).collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5"{dash} points="{}"/>"#,
            path.join(" ")
        );
        let ly = MARGIN_TOP + 10.0 + 18.0 * i as f64;
        let lx = WIDTH - MARGIN_RIGHT + 12.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" y1="{ly}" x2="{:.2}" y2="{ly}" stroke="{color}" stroke-width="1.5"{dash}/>"#,
            lx + 28.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}">{} ({})</text>"#,
            lx + 34.0,
            ly + 4.0,
            escape(&c.algorithm),
            escape(&c.setting)
        );
    }
    if clamped {
        let _ = writeln!(
            s,
            r#"<text x="{MARGIN_LEFT}" y="{:.2}" font-size="10">values below {LOG_FLOOR:e} drawn at {LOG_FLOOR:e}</text>"#,
            HEIGHT - 8.0
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn cmd_plot(csv_path: &Path, out: &Path, opts: &PlotOptions) -> Result<(), CliError> {
    let text =
        fs::read_to_string(csv_path).map_err(|e| CliError::Validation(format!("{}: {e}", csv_path.display())))?;
    let rows = parse_trace_csv(&text)?;
    let svg = render_svg(&rows, opts)?;
    fs::write(out, svg).map_err(|e| CliError::Runtime(format!("{}: {e}", out.display())))
}
