use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::closed_loop::TrajectoryRow;
use super::metrics::MetricsReport;
use crate::engine::{ControlInput, EngineState};
use crate::error::{Error, Result};
use crate::genmodel::FitReport;

const FORMAT_VERSION: u32 = 1;

pub const TRAJECTORY_HEADER: &str = "run,cycle,ca50,imep,dpmax,nvo,fuel,eth,ca50_ref,imep_ref,solver_flag,solve_ms";

/// Sidecar of a trajectory CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub format_version: u32,
    pub controller: String,
    pub seed: u64,
    pub runs: usize,
    pub cycles: usize,
}

impl TrajectoryMeta {
    pub fn new(controller: &str, seed: u64, runs: usize, cycles: usize) -> Self {
        TrajectoryMeta {
            format_version: FORMAT_VERSION,
            controller: controller.to_string(),
            seed,
            runs,
            cycles,
        }
    }

    pub fn sidecar_path(csv: &Path) -> PathBuf {
        let mut s = csv.as_os_str().to_owned();
        s.push(".meta.json");
        PathBuf::from(s)
    }
}

/// Metrics file: the report plus enough context to tell files apart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsDocument {
    pub format_version: u32,
    pub controller: String,
    pub seed: u64,
    pub metrics: MetricsReport,
}

impl MetricsDocument {
    pub fn new(controller: &str, seed: u64, metrics: MetricsReport) -> Self {
        MetricsDocument {
            format_version: FORMAT_VERSION,
            controller: controller.to_string(),
            seed,
            metrics,
        }
    }
}

/// Fit-report file written by the model evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDocument {
    pub format_version: u32,
    pub test_records: usize,
    pub report: FitReport,
}

impl FitDocument {
    pub fn new(test_records: usize, report: FitReport) -> Self {
        FitDocument {
            format_version: FORMAT_VERSION,
            test_records,
            report,
        }
    }
}

/// Side-by-side metrics of several controllers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonDocument {
    pub format_version: u32,
    pub seed: u64,
    pub controllers: Vec<MetricsDocument>,
}

impl ComparisonDocument {
    pub fn new(seed: u64, controllers: Vec<MetricsDocument>) -> Self {
        ComparisonDocument {
            format_version: FORMAT_VERSION,
            seed,
            controllers,
        }
    }
}

/// Writes the log with floats at 9 significant digits, plus the sidecar.
pub fn write_trajectory_csv(path: &Path, rows: &[TrajectoryRow], meta: &TrajectoryMeta) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "{TRAJECTORY_HEADER}").map_err(io)?;
    for r in rows {
        writeln!(
            w,
            "{},{},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e},{},{:.8e}",
            r.run,
            r.cycle,
            r.state.ca50,
            r.state.imep,
            r.state.dpmax,
            r.input.nvo,
            r.input.fuel,
            r.input.eth,
            r.ca50_ref,
            r.imep_ref,
            r.solver_flag,
            r.solve_ms
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)?;
    write_json(&TrajectoryMeta::sidecar_path(path), meta)
}

pub fn read_trajectory_csv(path: &Path) -> Result<Vec<TrajectoryRow>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::parse(path, "empty file"))?
        .map_err(|e| Error::io(path, e))?;
    if header.trim() != TRAJECTORY_HEADER {
        return Err(Error::parse(path, format!("unexpected header `{header}`")));
    }
    let mut out = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |what: String| Error::parse(path, format!("line {}: {what}", lineno + 2));
        let t: Vec<&str> = line.split(',').map(str::trim).collect();
        if t.len() != 12 {
            return Err(bad(format!("expected 12 fields, found {}", t.len())));
        }
        let int = |s: &str| s.parse::<u64>().map_err(|e| bad(format!("`{s}`: {e}")));
        let num = |s: &str| s.parse::<f64>().map_err(|e| bad(format!("`{s}`: {e}")));
        out.push(TrajectoryRow {
            run: int(t[0])? as usize,
            cycle: int(t[1])? as usize,
            state: EngineState::new(num(t[2])?, num(t[3])?, num(t[4])?),
            input: ControlInput::new(num(t[5])?, num(t[6])?, num(t[7])?),
            ca50_ref: num(t[8])?,
            imep_ref: num(t[9])?,
            solver_flag: int(t[10])? as u32,
            solve_ms: num(t[11])?,
        });
    }
    Ok(out)
}

pub fn read_trajectory_meta(csv: &Path) -> Result<TrajectoryMeta> {
    let meta: TrajectoryMeta = read_json(&TrajectoryMeta::sidecar_path(csv))?;
    if meta.format_version != FORMAT_VERSION {
        return Err(Error::parse(
            csv,
            format!("unsupported format_version {}", meta.format_version),
        ));
    }
    Ok(meta)
}

pub fn write_metrics_json(path: &Path, doc: &MetricsDocument) -> Result<()> {
    write_json(path, doc)
}

pub fn read_metrics_json(path: &Path) -> Result<MetricsDocument> {
    let doc: MetricsDocument = read_json(path)?;
    if doc.format_version != FORMAT_VERSION {
        return Err(Error::parse(
            path,
            format!("unsupported format_version {}", doc.format_version),
        ));
    }
    Ok(doc)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::parse(path, e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))
}

/// Per-cycle mean and population standard deviation across runs.
pub fn cycle_bands(rows: &[TrajectoryRow], value: impl Fn(&TrajectoryRow) -> f64) -> Vec<(f64, f64)> {
    let cycles = rows.iter().map(|r| r.cycle + 1).max().unwrap_or(0);
    let mut acc = vec![(0usize, 0.0, 0.0); cycles];
    for r in rows {
        let v = value(r);
        let a = &mut acc[r.cycle];
        a.0 += 1;
        a.1 += v;
        a.2 += v * v;
    }
    acc.into_iter()
        .map(|(n, s, ss)| {
            if n == 0 {
                return (f64::NAN, f64::NAN);
            }
            let m = s / n as f64;
            (m, (ss / n as f64 - m * m).max(0.0).sqrt())
        })
        .collect()
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// Standalone SVG with a CA50 and an IMEP panel: per controller the
/// cross-run mean and a band of one standard deviation, plus the reference.
pub fn emit_plot(path: &Path, series: &[(String, Vec<TrajectoryRow>)]) -> Result<()> {
    if series.is_empty() || series.iter().any(|(_, r)| r.is_empty()) {
        return Err(Error::InvalidArgument("plot needs at least one non-empty log".into()));
    }
    let (w, ph, margin) = (900.0, 300.0, 60.0);
    let height = 2.0 * ph + 3.0 * margin;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{height}" viewBox="0 0 {w} {height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    type Field = fn(&TrajectoryRow) -> f64;
    let panels: [(&str, Field, Field); 2] = [
        ("CA50 [deg CA]", |r| r.state.ca50, |r| r.ca50_ref),
        ("IMEP [bar]", |r| r.state.imep, |r| r.imep_ref),
    ];
    for (k, (label, value, reference)) in panels.iter().enumerate() {
        let top = margin + k as f64 * (ph + margin);
        let bands: Vec<Vec<(f64, f64)>> = series.iter().map(|(_, rows)| cycle_bands(rows, value)).collect();
        let refs = cycle_bands(&series[0].1, reference);
        let cycles = bands.iter().map(Vec::len).max().unwrap_or(1).max(2);
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for (m, s) in bands.iter().flatten().chain(refs.iter()) {
            if m.is_finite() {
                lo = lo.min(m - s);
                hi = hi.max(m + s);
            }
        }
        if !(hi > lo) {
            hi = lo + 1.0;
        }
        let pad = 0.05 * (hi - lo);
        let (lo, hi) = (lo - pad, hi + pad);
        let px = |c: usize| margin + (w - 2.0 * margin) * c as f64 / (cycles - 1) as f64;
        let py = |v: f64| top + ph * (hi - v) / (hi - lo);

        let _ = writeln!(
            svg,
            r#"<rect x="{margin}" y="{top}" width="{}" height="{ph}" fill="none" stroke="black"/>"#,
            w - 2.0 * margin
        );
        let _ = writeln!(svg, r#"<text x="{margin}" y="{}">{label}</text>"#, top - 8.0);
        for t in 0..=4 {
            let v = lo + (hi - lo) * t as f64 / 4.0;
            let _ = writeln!(
                svg,
                r#"<text x="{}" y="{:.1}" text-anchor="end">{v:.2}</text>"#,
                margin - 4.0,
                py(v) + 4.0
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="middle">cycle</text>"#,
            w / 2.0,
            top + ph + 20.0
        );
        for (i, band) in bands.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            let pts: Vec<(usize, f64, f64)> = band
                .iter()
                .enumerate()
                .filter(|(_, (m, _))| m.is_finite())
                .map(|(c, (m, s))| (c, *m, *s))
                .collect();
            let mut poly = String::new();
            for &(c, m, s) in &pts {
                let _ = write!(poly, "{:.1},{:.1} ", px(c), py(m + s));
            }
            for &(c, m, s) in pts.iter().rev() {
                let _ = write!(poly, "{:.1},{:.1} ", px(c), py(m - s));
            }
            let _ = writeln!(
                svg,
                r#"<polygon points="{}" fill="{color}" fill-opacity="0.15" stroke="none"/>"#,
                poly.trim_end()
            );
            let line: Vec<String> = pts
                .iter()
                .map(|&(c, m, _)| format!("{:.1},{:.1}", px(c), py(m)))
                .collect();
            let _ = writeln!(
                svg,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
                line.join(" ")
            );
        }
        let line: Vec<String> = refs
            .iter()
            .enumerate()
            .filter(|(_, (m, _))| m.is_finite())
            .map(|(c, (m, _))| format!("{:.1},{:.1}", px(c), py(*m)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="black" stroke-dasharray="4 3"/>"#,
            line.join(" ")
        );
    }
    for (i, (name, _)) in series.iter().enumerate() {
        let x = margin + 110.0 * i as f64;
        let y = height - 20.0;
        let color = PALETTE[i % PALETTE.len()];
        let _ = writeln!(
            svg,
            r#"<line x1="{x}" y1="{y}" x2="{}" y2="{y}" stroke="{color}" stroke-width="3"/><text x="{}" y="{}">{name}</text>"#,
            x + 20.0,
            x + 25.0,
            y + 4.0
        );
    }
    let _ = writeln!(svg, "</svg>");
    fs::write(path, svg).map_err(|e| Error::io(path, e))
}
