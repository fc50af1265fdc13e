//! Output artifacts: CSV tables, the check report, an SVG plot and the run
//! manifest.

use std::fmt::Write as _;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::oracle::{OptimumReport, OracleError};
use crate::simulator::Trajectory;

fn push_row(out: &mut String, cells: impl IntoIterator<Item = String>) {
    let mut first = true;
    for c in cells {
        if !first {
            out.push(',');
        }
        out.push_str(&c);
        first = false;
    }
    out.push('\n');
}

fn num(v: f64) -> String {
    format!("{v:e}")
}

/// One row per agent per sample:
/// `t,agent,x_1..x_m,u_1..u_m,phi_norm,margin_1..margin_q,W1,consensus_linf`.
/// Agents are 1-based; agents with fewer than `q_max` constraints leave the
/// trailing margin cells empty.
pub fn trajectory_csv(trajectory: &Trajectory) -> String {
    let mut out = String::new();
    let Some(first) = trajectory.records.first() else { return out };
    let m = first.x.first().map_or(0, |x| x.len());
    let q = first.margins.iter().map(Vec::len).max().unwrap_or(0);
    let mut header = vec!["t".to_string(), "agent".to_string()];
    header.extend((1..=m).map(|k| format!("x_{k}")));
    header.extend((1..=m).map(|k| format!("u_{k}")));
    header.push("phi_norm".into());
    header.extend((1..=q).map(|k| format!("margin_{k}")));
    header.push("W1".into());
    header.push("consensus_linf".into());
    push_row(&mut out, header);
    for r in &trajectory.records {
        for i in 0..r.x.len() {
            let mut row = vec![num(r.t), (i + 1).to_string()];
            row.extend(r.x[i].iter().map(|&v| num(v)));
            row.extend(r.u[i].iter().map(|&v| num(v)));
            row.push(num(r.phi[i].norm()));
            row.extend((0..q).map(|k| r.margins[i].get(k).map_or(String::new(), |&v| num(v))));
            row.push(num(r.diagnostics.w1));
            row.push(num(r.diagnostics.consensus_linf));
            push_row(&mut out, row);
        }
    }
    out
}

/// One row per sample with the network diagnostics and the empirical
/// sups of the time-partials and Hessian spectra.
pub fn diagnostics_csv(trajectory: &Trajectory) -> String {
    let mut out = String::new();
    push_row(
        &mut out,
        [
            "t",
            "W1",
            "consensus_linf",
            "edge_l1",
            "phi_max",
            "margin_max",
            "tracking_max",
            "hessian_min",
            "hessian_max",
            "objective_time_gradient_sup",
            "constraint_time_gradient_sup",
            "constraint_time_value_sup",
        ]
        .map(String::from),
    );
    for r in &trajectory.records {
        let d = r.diagnostics;
        let h_min = r.hessian_extrema.iter().map(|h| h.0).fold(f64::INFINITY, f64::min);
        let h_max = r.hessian_extrema.iter().map(|h| h.1).fold(f64::NEG_INFINITY, f64::max);
        let s = r.assumption_sups;
        push_row(
            &mut out,
            [
                num(d.t),
                num(d.w1),
                num(d.consensus_linf),
                num(d.edge_l1),
                num(d.phi_max),
                num(d.margin_max),
                d.tracking_max.map_or(String::new(), num),
                num(h_min),
                num(h_max),
                num(s.objective_time_gradient),
                num(s.constraint_time_gradient),
                num(s.constraint_time_value),
            ],
        );
    }
    out
}

/// `t,ystar_1..m,ytilde_1..m,gap,barrier_bound,kkt_bound,status`; failed rows
/// keep `t`, leave the numbers empty and carry the error in `status`.
pub fn oracle_csv(times: &[f64], rows: &[Result<OptimumReport, OracleError>], m: usize) -> String {
    let mut out = String::new();
    let mut header = vec!["t".to_string()];
    header.extend((1..=m).map(|k| format!("ystar_{k}")));
    header.extend((1..=m).map(|k| format!("ytilde_{k}")));
    header.extend(["gap", "barrier_bound", "kkt_bound", "status"].map(String::from));
    push_row(&mut out, header);
    for (&t, row) in times.iter().zip(rows) {
        let mut cells = vec![num(t)];
        match row {
            Ok(r) => {
                cells.extend(r.y_star.iter().map(|&v| num(v)));
                cells.extend(r.y_tilde.iter().map(|&v| num(v)));
                cells.extend([num(r.objective_gap), num(r.barrier_bound), num(r.kkt_bound), "ok".into()]);
            }
            Err(e) => {
                cells.extend(std::iter::repeat_n(String::new(), 2 * m + 3));
                cells.push(e.to_string().replace(',', ";"));
            }
        }
        push_row(&mut out, cells);
    }
    out
}

/// Points, stroke colour, dashed.
type Series<'a> = (Vec<(f64, f64)>, &'a str, bool);

struct Panel<'a> {
    title: &'a str,
    series: Vec<Series<'a>>,
}

fn polyline(points: &[(f64, f64)], map: &dyn Fn(f64, f64) -> (f64, f64), color: &str, dashed: bool) -> String {
    let mut d = String::new();
    for &(x, y) in points.iter().filter(|p| p.1.is_finite()) {
        let (px, py) = map(x, y);
        let _ = write!(d, "{px:.2},{py:.2} ");
    }
    let dash = if dashed { " stroke-dasharray=\"6 3\"" } else { "" };
    format!("<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1\"{dash} points=\"{}\"/>\n", d.trim_end())
}

const PALETTE: [&str; 6] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"];

fn render(panels: &[Panel]) -> String {
    let (w, ph, pad) = (800.0, 240.0, 40.0);
    let h = ph * panels.len() as f64;
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\" font-size=\"11\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    );
    for (k, panel) in panels.iter().enumerate() {
        let top = k as f64 * ph;
        let pts = panel.series.iter().flat_map(|s| s.0.iter()).filter(|p| p.1.is_finite());
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for &(x, y) in pts {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        if !x0.is_finite() {
            continue;
        }
        if x1 == x0 {
            x1 = x0 + 1.0;
        }
        if y1 == y0 {
            y1 = y0 + 1.0;
        }
        let map = |x: f64, y: f64| {
            (pad + (x - x0) / (x1 - x0) * (w - 2.0 * pad), top + ph - pad + (y0 - y) / (y1 - y0) * (ph - 2.0 * pad) + pad * 0.5)
        };
        let (ax, ay) = map(x0, y0);
        let (bx, by) = map(x1, y1);
        let _ = writeln!(svg, "<rect x=\"{ax:.2}\" y=\"{by:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"none\" stroke=\"#888\"/>", bx - ax, ay - by);
        let _ = writeln!(svg, "<text x=\"{pad}\" y=\"{:.2}\">{}</text>", top + 14.0, panel.title);
        let _ = writeln!(svg, "<text x=\"2\" y=\"{:.2}\">{y1:.3}</text>", by + 4.0);
        let _ = writeln!(svg, "<text x=\"2\" y=\"{:.2}\">{y0:.3}</text>", ay);
        let _ = writeln!(svg, "<text x=\"{:.2}\" y=\"{:.2}\">t = {x1}</text>", bx - 50.0, ay + 14.0);
        for (points, color, dashed) in &panel.series {
            svg.push_str(&polyline(points, &map, color, *dashed));
        }
    }
    svg.push_str("</svg>\n");
    svg
}

/// Line charts of every state component and every margin against time, with
/// the oracle optimum dashed when available.
pub fn trajectory_svg(trajectory: &Trajectory, oracle: &[OptimumReport]) -> String {
    let Some(first) = trajectory.records.first() else { return render(&[]) };
    let n = first.x.len();
    let m = first.x.first().map_or(0, |x| x.len());
    let q = first.margins.iter().map(Vec::len).max().unwrap_or(0);
    let titles: Vec<String> = (1..=m).map(|k| format!("state component {k}")).collect();
    let mut panels: Vec<Panel> = Vec::new();
    for (k, title) in titles.iter().enumerate() {
        let mut series: Vec<_> = (0..n)
            .map(|i| (trajectory.records.iter().map(|r| (r.t, r.x[i][k])).collect(), PALETTE[i % PALETTE.len()], false))
            .collect();
        if !oracle.is_empty() {
            series.push((oracle.iter().map(|o| (o.t, o.y_star[k])).collect(), "black", true));
        }
        panels.push(Panel { title, series });
    }
    let mut margins = Vec::new();
    for i in 0..n {
        for j in 0..q {
            if j < first.margins[i].len() {
                margins.push((
                    trajectory.records.iter().map(|r| (r.t, r.margins[i][j])).collect(),
                    PALETTE[i % PALETTE.len()],
                    false,
                ));
            }
        }
    }
    if !margins.is_empty() {
        panels.push(Panel { title: "margins g - 1/rho", series: margins });
    }
    render(&panels)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmittedFile {
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

/// Record of one CLI run.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub scenario: String,
    pub output_dir: String,
    pub files: Vec<EmittedFile>,
    pub duration_seconds: f64,
    pub config: serde_json::Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub summary: Option<serde_json::Value>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes `contents` to `dir/name` and returns its manifest entry.
pub fn emit(dir: &Path, name: &str, contents: &[u8]) -> io::Result<EmittedFile> {
    let path: PathBuf = dir.join(name);
    std::fs::write(&path, contents)?;
    Ok(EmittedFile { path: name.to_string(), sha256: sha256_hex(contents), bytes: contents.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::DiagnosticsRecord;
    use crate::simulator::{AssumptionSample, Record};
    use nalgebra::DVector;

    fn record(t: f64) -> Record {
        let x = vec![DVector::from_column_slice(&[1.0, 2.0]), DVector::from_column_slice(&[0.5, -1.0])];
        Record {
            t,
            u: x.clone(),
            phi: x.clone(),
            x,
            margins: vec![vec![-1.0], vec![]],
            hessian_extrema: vec![(1.0, 3.0), (1.0, 3.0)],
            sgn_sum: DVector::zeros(2),
            diagnostics: DiagnosticsRecord {
                t,
                w1: 0.5,
                consensus_linf: 1.0,
                edge_l1: 2.0,
                phi_max: 1.0,
                margin_max: -1.0,
                tracking_max: None,
            },
            assumption_sups: AssumptionSample::default(),
        }
    }

    fn traj() -> Trajectory {
        Trajectory { records: vec![record(0.0), record(0.1)], steps: 1, halvings: 0, max_sgn_residual: 0.0, max_margin: -1.0 }
    }

    #[test]
    fn trajectory_layout() {
        let csv = trajectory_csv(&traj());
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "t,agent,x_1,x_2,u_1,u_2,phi_norm,margin_1,W1,consensus_linf");
        assert_eq!(lines.len(), 5);
        assert!(lines[1].starts_with("0e0,1,1e0,2e0,"));
        // agent 2 has no constraint: empty margin cell
        assert!(lines[2].contains(",,5e-1,1e0"), "{}", lines[2]);
        assert!(lines.iter().all(|l| l.split(',').count() == 10));
    }

    #[test]
    fn diagnostics_layout() {
        let csv = diagnostics_csv(&traj());
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.lines().all(|l| l.split(',').count() == 12));
    }

    #[test]
    fn oracle_failure_row_flagged() {
        let rows = vec![Err(OracleError::InfeasibleStart { t: 0.0, violation: 1.0 })];
        let csv = oracle_csv(&[0.0], &rows, 2);
        let line = csv.lines().nth(1).unwrap();
        assert_eq!(line.split(',').count(), 9);
        assert!(line.contains("no strictly feasible point"));
    }

    #[test]
    fn svg_is_well_formed() {
        let svg = trajectory_svg(&traj(), &[]);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<polyline").count(), 2 + 2 + 1);
    }

    #[test]
    fn hashes() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
        let dir = tempfile::tempdir().unwrap();
        let f = emit(dir.path(), "a.txt", b"abc").unwrap();
        assert_eq!(f.bytes, 3);
        assert_eq!(std::fs::read(dir.path().join("a.txt")).unwrap(), b"abc");
    }
}
