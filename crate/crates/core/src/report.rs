//! Report and table emission: one JSON report per run, CSV for tabular data,
//! hand-rolled SVG for plots.
//!
//! Everything written here is deterministic for a fixed (config, seed) pair:
//! maps serialize with sorted keys, floats use shortest round-trip formatting,
//! and the only nondeterministic field, wall_time_ms, is the one field the
//! equivalence predicate ignores. Files are written to a temp path and
//! renamed into place so readers never observe a partial artifact.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::measure::{
    Case2Output, Case3Output, Case4Output, GridMeasure, Normalization, ResidualReport, Tail,
};
use crate::monster::MonsterSeedSummary;
use crate::seed::GENERATOR_ID;
use crate::system::SystemReport;
use crate::walk::{ClassVerdict, PhiEstimate, SideEvidence, SideReading};

pub const TOOL_NAME: &str = "rdsline";

/// Top-level run report, serialized as report.json.
#[derive(Debug, Serialize)]
pub struct Report {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    /// SHA-256 of the exact config text the run was started from.
    pub config_sha256: String,
    pub master_seed: u64,
    pub workers: usize,
    pub generator: &'static str,
    pub outcome: Outcome,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub refusal: Option<String>,
    pub result: Value,
    pub wall_time_ms: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Ok,
    Refused,
}

impl Report {
    pub fn new(command: impl Into<String>, config_text: &str) -> Self {
        Report {
            tool: TOOL_NAME,
            version: env!("CARGO_PKG_VERSION"),
            command: command.into(),
            label: None,
            config_sha256: sha256_hex(config_text.as_bytes()),
            master_seed: 0,
            workers: 1,
            generator: GENERATOR_ID,
            outcome: Outcome::Ok,
            refusal: None,
            result: Value::Null,
            wall_time_ms: 0,
        }
    }

    pub fn refuse(&mut self, reason: impl Into<String>) {
        self.outcome = Outcome::Refused;
        self.refusal = Some(reason.into());
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("report serializes");
        text.push('\n');
        text
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    let digest = h.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// Writes via a temp file in the target directory plus rename, so a crash
/// never leaves a truncated artifact under the final name.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path.file_name().and_then(|n| n.to_str()).ok_or_else(|| {
        io::Error::new(io::ErrorKind::InvalidInput, format!("bad artifact path {path:?}"))
    })?;
    let tmp = dir.join(format!(".{name}.tmp-{}", std::process::id()));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}

/// One CSV table rendered in memory; rows are preformatted cells.
pub fn csv_bytes(header: &[&str], rows: &[Vec<String>]) -> Vec<u8> {
    let mut text = String::new();
    text.push_str(&header.join(","));
    text.push('\n');
    for row in rows {
        text.push_str(&row.join(","));
        text.push('\n');
    }
    text.into_bytes()
}

pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> io::Result<()> {
    atomic_write(path, &csv_bytes(header, rows))
}

/// True when two report documents differ at most in wall time.
pub fn reports_equivalent(a: &str, b: &str) -> bool {
    fn normalized(text: &str) -> Option<Value> {
        let mut v: Value = serde_json::from_str(text).ok()?;
        if let Some(obj) = v.as_object_mut() {
            obj.insert("wall_time_ms".into(), json!(0));
        }
        Some(v)
    }
    match (normalized(a), normalized(b)) {
        (Some(x), Some(y)) => x == y,
        _ => false,
    }
}

// ---- JSON payload builders ----

pub fn phi_estimate_json(e: &PhiEstimate) -> Value {
    json!({
        "x": e.x,
        "phi_plus": e.phi_plus(),
        "phi_minus": e.phi_minus(),
        "phi_zero": e.phi_zero(),
        "ci_halfwidth": e.ci_halfwidth(),
        "trials": e.trials,
        "certified_early": e.certified_early,
    })
}

pub fn phi_table_json(estimates: &[PhiEstimate]) -> Value {
    Value::Array(estimates.iter().map(phi_estimate_json).collect())
}

/// CSV rows matching the documented phi table layout.
pub fn phi_csv(estimates: &[PhiEstimate]) -> (Vec<&'static str>, Vec<Vec<String>>) {
    let header = vec!["x", "phi_plus", "phi_minus", "phi_zero", "ci", "trials"];
    let rows = estimates
        .iter()
        .map(|e| {
            vec![
                e.x.to_string(),
                e.phi_plus().to_string(),
                e.phi_minus().to_string(),
                e.phi_zero().to_string(),
                e.ci_halfwidth().to_string(),
                e.trials.to_string(),
            ]
        })
        .collect();
    (header, rows)
}

fn evidence_name(e: &SideEvidence) -> &'static str {
    match e {
        SideEvidence::PlusDominant => "plus_dominant",
        SideEvidence::MinusDominant => "minus_dominant",
        SideEvidence::Recurrent => "recurrent",
        SideEvidence::Split => "split",
        SideEvidence::Inconclusive => "inconclusive",
    }
}

pub fn side_reading_json(r: &SideReading) -> Value {
    json!({
        "evidence": evidence_name(&r.evidence),
        "probes": phi_table_json(&r.estimates),
    })
}

pub fn verdict_json(v: &ClassVerdict) -> Value {
    match v {
        ClassVerdict::Classified { class, flipped, swapped, forward, inverse, notes } => json!({
            "status": "classified",
            "class": class,
            "flipped": flipped,
            "swapped": swapped,
            "forward": side_reading_json(forward),
            "inverse": side_reading_json(inverse),
            "notes": notes,
        }),
        ClassVerdict::Refused { reason, forward, inverse, notes } => json!({
            "status": "refused",
            "reason": reason,
            "forward": side_reading_json(forward),
            "inverse": side_reading_json(inverse),
            "notes": notes,
        }),
    }
}

pub fn system_report_json(r: &SystemReport) -> Value {
    json!({
        "valid": r.is_valid(),
        "violations": r.violations,
        "shiftable": r.shiftability.shiftable,
        "shiftability_proved": r.shiftability.proved,
        "shiftability_window": r.shiftability.window,
        "counterexample": r.shiftability.counterexample.as_ref().map(|c| json!({
            "point": c.point,
            "missing": format!("{:?}", c.missing),
        })),
        "compact_displacement": r.compact_displacement,
        "notes": r.notes,
    })
}

fn tail_json(t: Tail) -> Value {
    match t {
        Tail::Finite { mass } => json!({"kind": "finite", "mass": mass}),
        Tail::Infinite => json!({"kind": "infinite"}),
    }
}

fn normalization_json(n: Normalization) -> Value {
    match n {
        Normalization::Probability => json!({"kind": "probability"}),
        Normalization::UnitMassOn { lo, hi } => {
            json!({"kind": "unit_mass_on", "lo": lo, "hi": hi})
        }
        Normalization::UnitMassOnRay { from } => {
            json!({"kind": "unit_mass_on_ray", "from": from})
        }
    }
}

/// Header block every measure report shares: window, tails, normalization,
/// and the stationarity check outcome.
pub fn measure_header_json(
    m: &GridMeasure,
    residual: &ResidualReport,
    checked_against: &str,
    tolerance: f64,
) -> Value {
    json!({
        "window": m.window(),
        "grid_points": m.len(),
        "left_tail": tail_json(m.left_tail()),
        "right_tail": tail_json(m.right_tail()),
        "normalization": normalization_json(m.normalization()),
        "total_mass": m.total_mass(),
        "residual": {
            "sup": residual.sup,
            "checked": residual.checked,
            "skipped": residual.skipped,
            "tail_clamp": residual.tail_clamp,
            "against": checked_against,
            "tolerance": tolerance,
        },
    })
}

/// CSV of the measure's relative CDF: mass of (window_start, x].
pub fn measure_csv(m: &GridMeasure) -> (Vec<&'static str>, Vec<Vec<String>>) {
    let header = vec!["x", "cdf"];
    let rows = (0..m.len())
        .map(|j| vec![m.grid_point(j).to_string(), m.rel_cdf()[j].to_string()])
        .collect();
    (header, rows)
}

pub fn case4_json(out: &Case4Output, header: Value) -> Value {
    json!({
        "case": "probability",
        "measure": header,
        "isotonic_adjustment": out.isotonic_adjustment,
        "phi": phi_table_json(&out.phi),
        "gate": verdict_json(&out.gate),
    })
}

pub fn case2_json(out: &Case2Output, level: f64, header: Value) -> Value {
    json!({
        "case": "semi_infinite",
        "level": level,
        "measure": header,
        "psi_at_zero": out.psi_at_zero,
        "unit_ray_mass": out.unit_ray_mass,
        "truncated_fraction": out.truncated_fraction,
        "gate": verdict_json(&out.gate),
    })
}

pub fn case3_json(out: &Case3Output, header: Value) -> Value {
    let levels: Vec<Value> = out
        .levels
        .iter()
        .map(|l| {
            json!({
                "plateau": l.tent.plateau(),
                "support": l.tent.support(),
                "no_stop_fraction": l.no_stop_fraction,
                "stop_points": l.histogram.total(),
            })
        })
        .collect();
    json!({
        "case": "occupation",
        "measure": header,
        "levels": levels,
        "consistency": out.consistency,
        "gate": verdict_json(&out.gate),
    })
}

pub fn monster_json(
    variant: &str,
    steps: u64,
    interval: (f64, f64),
    perturbation: f64,
    seeds: &[MonsterSeedSummary],
) -> Value {
    json!({
        "variant": variant,
        "steps": steps,
        "interval": interval,
        "perturbation": perturbation,
        "seeds": seeds,
    })
}

// ---- SVG plotting ----

const PALETTE: [&str; 5] = ["#1f6fb4", "#d62728", "#2c9c4b", "#9467bd", "#e8850c"];
const W: f64 = 800.0;
const H: f64 = 480.0;
const ML: f64 = 62.0;
const MR: f64 = 18.0;
const MT: f64 = 34.0;
const MB: f64 = 46.0;

pub struct Series<'a> {
    pub name: &'a str,
    pub points: &'a [(f64, f64)],
}

fn fmt(v: f64) -> String {
    format!("{v:.2}")
}

fn svg_open(title: &str) -> String {
    format!(
        concat!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" ",
            "viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\" font-size=\"12\">\n",
            "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n",
            "<text x=\"{tx}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">{title}</text>\n"
        ),
        w = W,
        h = H,
        tx = W / 2.0,
        title = title,
    )
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        ML + (x - self.x0) / (self.x1 - self.x0) * (W - ML - MR)
    }

    fn py(&self, y: f64) -> f64 {
        H - MB - (y - self.y0) / (self.y1 - self.y0) * (H - MT - MB)
    }

    fn axes(&self, out: &mut String) {
        let (l, r, t, b) = (ML, W - MR, MT, H - MB);
        out.push_str(&format!(
            "<rect x=\"{l}\" y=\"{t}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#444\"/>\n",
            r - l,
            b - t
        ));
        for i in 0..=4 {
            let fx = self.x0 + (self.x1 - self.x0) * i as f64 / 4.0;
            let px = self.px(fx);
            out.push_str(&format!(
                "<line x1=\"{px:.2}\" y1=\"{b}\" x2=\"{px:.2}\" y2=\"{:.2}\" stroke=\"#444\"/>\n",
                b + 4.0
            ));
            out.push_str(&format!(
                "<text x=\"{px:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>\n",
                b + 18.0,
                fmt(fx)
            ));
            let fy = self.y0 + (self.y1 - self.y0) * i as f64 / 4.0;
            let py = self.py(fy);
            out.push_str(&format!(
                "<line x1=\"{:.2}\" y1=\"{py:.2}\" x2=\"{l}\" y2=\"{py:.2}\" stroke=\"#444\"/>\n",
                l - 4.0
            ));
            out.push_str(&format!(
                "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{}</text>\n",
                l - 8.0,
                py + 4.0,
                fmt(fy)
            ));
        }
    }
}

fn frame_over(series: &[Series]) -> Frame {
    let mut f =
        Frame { x0: f64::INFINITY, x1: f64::NEG_INFINITY, y0: f64::INFINITY, y1: f64::NEG_INFINITY };
    for s in series {
        for &(x, y) in s.points {
            f.x0 = f.x0.min(x);
            f.x1 = f.x1.max(x);
            f.y0 = f.y0.min(y);
            f.y1 = f.y1.max(y);
        }
    }
    if !(f.x0 < f.x1) {
        f.x1 = f.x0 + 1.0;
    }
    if !(f.y0 < f.y1) {
        f.y1 = f.y0 + 1.0;
    }
    let pad = (f.y1 - f.y0) * 0.05;
    f.y0 -= pad;
    f.y1 += pad;
    f
}

/// Polyline chart of one or more series over a shared frame.
pub fn svg_line_chart(title: &str, series: &[Series]) -> String {
    let frame = frame_over(series);
    let mut out = svg_open(title);
    frame.axes(&mut out);
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", frame.px(x), frame.py(y)))
            .collect();
        out.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            pts.join(" ")
        ));
        let ly = MT + 16.0 * i as f64 + 12.0;
        out.push_str(&format!(
            "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"12\" height=\"4\" fill=\"{color}\"/>\n",
            ML + 10.0,
            ly - 4.0
        ));
        out.push_str(&format!("<text x=\"{:.2}\" y=\"{ly:.2}\">{}</text>\n", ML + 28.0, s.name));
    }
    out.push_str("</svg>\n");
    out
}

/// Bar chart for binned masses.
pub fn svg_histogram(title: &str, bins: &[(f64, f64)], bin_width: f64) -> String {
    let points: Vec<(f64, f64)> = bins.to_vec();
    let series = [Series { name: "mass", points: &points }];
    let mut frame = frame_over(&series);
    frame.y0 = frame.y0.min(0.0);
    let mut out = svg_open(title);
    frame.axes(&mut out);
    let px_width = (frame.px(bin_width) - frame.px(0.0)).abs().max(1.0);
    for &(c, m) in bins {
        let x = frame.px(c) - px_width / 2.0;
        let y = frame.py(m);
        let base = frame.py(0.0);
        out.push_str(&format!(
            "<rect x=\"{x:.2}\" y=\"{y:.2}\" width=\"{px_width:.2}\" height=\"{:.2}\" \
             fill=\"{}\" stroke=\"none\"/>\n",
            (base - y).max(0.0),
            PALETTE[0]
        ));
    }
    out.push_str("</svg>\n");
    out
}

/// Writes report.json into `dir` and returns its path.
pub fn write_report(dir: &Path, report: &Report) -> io::Result<PathBuf> {
    let path = dir.join("report.json");
    atomic_write(&path, report.to_json().as_bytes())?;
    Ok(path)
}
