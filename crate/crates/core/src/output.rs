//! Trajectory CSV and SVG plots.
//!
//! Columns: `time`, `x[i][k]`, `u[i][k]` (single integrator) or
//! `qdot[i][k]` (Euler-Lagrange), `V`, `spread`, `margin`, then one
//! `d[i-j]` per initial edge. Agent and component indices are 1-based.
//! The SVG is rendered from a parsed table only, so it can be regenerated
//! from a CSV file alone.

use std::fmt::Write as _;

use crate::config::NetworkKind;
use crate::simulator::TrajectoryRecord;
use crate::{Error, Result};

pub fn csv_header(record: &TrajectoryRecord) -> Vec<String> {
    let vel = match record.kind {
        NetworkKind::SingleIntegrator => "u",
        NetworkKind::EulerLagrange => "qdot",
    };
    let mut cols = vec!["time".to_string()];
    for prefix in ["x", vel] {
        for i in 0..record.n_agents {
            for k in 0..record.dim {
                cols.push(format!("{prefix}[{}][{}]", i + 1, k + 1));
            }
        }
    }
    cols.extend(["V", "spread", "margin"].map(String::from));
    cols.extend(record.edges.iter().map(|(i, j)| format!("d[{}-{}]", i + 1, j + 1)));
    cols
}

pub fn write_csv<W: std::io::Write>(record: &TrajectoryRecord, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Csv(e.to_string());
    w.write_record(csv_header(record)).map_err(csv_err)?;
    let mut row = Vec::new();
    for s in &record.samples {
        row.clear();
        let values = std::iter::once(s.t)
            .chain(s.positions.iter().copied())
            .chain(s.velocities.iter().copied())
            .chain([s.lyapunov, s.spread, s.margin])
            .chain(s.distances.iter().copied());
        row.extend(values.map(|v| format!("{v:.16e}")));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Csv(e.to_string()))
}

pub fn to_csv_string(record: &TrajectoryRecord) -> Result<String> {
    let mut buf = Vec::new();
    write_csv(record, &mut buf)?;
    String::from_utf8(buf).map_err(|e| Error::Csv(e.to_string()))
}

/// A parsed trajectory CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl TrajectoryTable {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn column(&self, idx: usize) -> impl Iterator<Item = f64> + '_ {
        self.rows.iter().map(move |r| r[idx])
    }

    /// Indices of the columns whose name starts with `prefix`.
    pub fn columns_with_prefix(&self, prefix: &str) -> Vec<usize> {
        self.columns
            .iter()
            .enumerate()
            .filter(|(_, c)| c.starts_with(prefix))
            .map(|(i, _)| i)
            .collect()
    }
}

/// Parses and validates a trajectory CSV: first column `time`, strictly
/// increasing; all other cells numeric; `V`, `spread` and `margin` present.
pub fn parse_trajectory_csv(text: &str) -> Result<TrajectoryTable> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let columns: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Csv(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if columns.first().map(String::as_str) != Some("time") {
        return Err(Error::Csv("first column must be `time`".into()));
    }
    for required in ["V", "spread", "margin"] {
        if !columns.iter().any(|c| c == required) {
            return Err(Error::Csv(format!("missing column `{required}`")));
        }
    }
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Csv(e.to_string()))?;
        if rec.len() != columns.len() {
            return Err(Error::Csv(format!(
                "row {} has {} fields, header has {}",
                line + 1,
                rec.len(),
                columns.len()
            )));
        }
        let row = rec
            .iter()
            .enumerate()
            .map(|(c, field)| {
                field.trim().parse::<f64>().map_err(|_| {
                    Error::Csv(format!("row {} column `{}`: not a number: {field:?}", line + 1, columns[c]))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if !row[0].is_finite() {
            return Err(Error::Csv(format!("row {}: non-finite time", line + 1)));
        }
        if let Some(prev) = rows.last() {
            if !(row[0] > prev[0]) {
                return Err(Error::Csv(format!(
                    "row {}: time {} does not increase (previous {})",
                    line + 1,
                    row[0],
                    prev[0]
                )));
            }
        }
        rows.push(row);
    }
    Ok(TrajectoryTable { columns, rows })
}

const WIDTH: f64 = 720.0;
const PANEL_HEIGHT: f64 = 260.0;
const PAD: f64 = 48.0;
const COLORS: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

fn finite_range(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if lo > hi {
        return None;
    }
    if hi - lo < 1e-12 {
        return Some((lo - 0.5, hi + 0.5));
    }
    Some((lo, hi))
}

struct Panel<'a> {
    title: &'a str,
    top: f64,
    t_range: (f64, f64),
    y_range: (f64, f64),
}

impl Panel<'_> {
    fn px(&self, t: f64) -> f64 {
        PAD + (t - self.t_range.0) / (self.t_range.1 - self.t_range.0).max(1e-300) * (WIDTH - 2.0 * PAD)
    }

    fn py(&self, y: f64) -> f64 {
        let h = PANEL_HEIGHT - 2.0 * PAD;
        self.top + PAD + (self.y_range.1 - y) / (self.y_range.1 - self.y_range.0) * h
    }

    fn frame(&self, svg: &mut String) {
        let (x0, x1) = (PAD, WIDTH - PAD);
        let (y0, y1) = (self.top + PAD, self.top + PANEL_HEIGHT - PAD);
        let _ = writeln!(
            svg,
            r##"<rect x="{x0}" y="{y0}" width="{}" height="{}" fill="none" stroke="#444"/>"##,
            x1 - x0,
            y1 - y0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" font-size="14" text-anchor="middle">{}</text>"#,
            WIDTH / 2.0,
            self.top + PAD - 12.0,
            self.title
        );
        for (v, y) in [(self.y_range.0, y1), (self.y_range.1, y0)] {
            let _ = writeln!(
                svg,
                r#"<text x="{}" y="{}" font-size="10" text-anchor="end">{v:.3}</text>"#,
                x0 - 4.0,
                y + 3.0
            );
        }
        for (v, x) in [(self.t_range.0, x0), (self.t_range.1, x1)] {
            let _ = writeln!(
                svg,
                r#"<text x="{x}" y="{}" font-size="10" text-anchor="middle">{v:.2} s</text>"#,
                y1 + 14.0
            );
        }
    }

    fn polyline(&self, svg: &mut String, points: impl Iterator<Item = (f64, f64)>, color: &str, label: &str) {
        let mut path = String::new();
        for (t, y) in points.filter(|(_, y)| y.is_finite()) {
            let _ = write!(path, "{:.2},{:.2} ", self.px(t), self.py(y));
        }
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"><title>{label}</title></polyline>"#,
            path.trim_end()
        );
    }
}

/// Radius recovered from the table: `margin + max edge distance` on the
/// first row. `None` without edge columns.
fn radius_from_table(table: &TrajectoryTable, edges: &[usize]) -> Option<f64> {
    let first = table.rows.first()?;
    let margin = first[table.column_index("margin")?];
    let max_d = edges.iter().map(|&c| first[c]).fold(f64::NEG_INFINITY, f64::max);
    let r = margin + max_d;
    r.is_finite().then_some(r)
}

/// Two stacked panels: positions against time, and initial-edge distances
/// against time with the radius drawn as a dashed line.
pub fn render_svg(table: &TrajectoryTable) -> String {
    let positions = table.columns_with_prefix("x[");
    let edges = table.columns_with_prefix("d[");
    let times: Vec<f64> = table.column(0).collect();
    let t_range = match (times.first(), times.last()) {
        (Some(&a), Some(&b)) if b > a => (a, b),
        (Some(&a), _) => (a, a + 1.0),
        _ => (0.0, 1.0),
    };
    let radius = radius_from_table(table, &edges);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{}" viewBox="0 0 {WIDTH} {}">"#,
        2.0 * PANEL_HEIGHT,
        2.0 * PANEL_HEIGHT
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);

    let pos_range = finite_range(positions.iter().flat_map(|&c| table.column(c))).unwrap_or((0.0, 1.0));
    let panel = Panel {
        title: "positions",
        top: 0.0,
        t_range,
        y_range: pos_range,
    };
    panel.frame(&mut svg);
    for (n, &c) in positions.iter().enumerate() {
        let pts = times.iter().copied().zip(table.column(c));
        panel.polyline(&mut svg, pts, COLORS[n % COLORS.len()], &table.columns[c]);
    }

    let dist_range = finite_range(
        edges
            .iter()
            .flat_map(|&c| table.column(c))
            .chain(radius)
            .chain(std::iter::once(0.0)),
    )
    .unwrap_or((0.0, 1.0));
    let panel = Panel {
        title: "link distances",
        top: PANEL_HEIGHT,
        t_range,
        y_range: (dist_range.0, dist_range.1 * 1.05),
    };
    panel.frame(&mut svg);
    if let Some(r) = radius {
        let y = panel.py(r);
        let _ = writeln!(
            svg,
            r##"<line x1="{PAD}" y1="{y:.2}" x2="{}" y2="{y:.2}" stroke="#000" stroke-dasharray="6,4"><title>r = {r}</title></line>"##,
            WIDTH - PAD
        );
    }
    for (n, &c) in edges.iter().enumerate() {
        let pts = times.iter().copied().zip(table.column(c));
        panel.polyline(&mut svg, pts, COLORS[n % COLORS.len()], &table.columns[c]);
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = "time,x[1][1],x[2][1],u[1][1],u[2][1],V,spread,margin,d[1-2]\n\
        0,0,0.5,0,0,0.5,0.5,0.5,0.5\n\
        0.1,0.1,0.4,0,0,0.2,0.3,0.7,0.3\n";

    #[test]
    fn parses_small_table() {
        let t = parse_trajectory_csv(SMALL).unwrap();
        assert_eq!(t.columns.len(), 9);
        assert_eq!(t.rows.len(), 2);
        assert_eq!(t.column_index("d[1-2]"), Some(8));
        assert_eq!(radius_from_table(&t, &t.columns_with_prefix("d[")), Some(1.0));
    }

    #[test]
    fn rejects_malformed_tables() {
        assert!(parse_trajectory_csv("").is_err());
        assert!(parse_trajectory_csv("t,V,spread,margin\n0,0,0,0\n").is_err());
        assert!(parse_trajectory_csv("time,V,spread\n0,0,0\n").is_err());
        assert!(parse_trajectory_csv("time,V,spread,margin\n0,0,0\n").is_err());
        assert!(parse_trajectory_csv("time,V,spread,margin\n0,0,0,abc\n").is_err());
        assert!(parse_trajectory_csv("time,V,spread,margin\n1,0,0,0\n1,0,0,0\n").is_err());
        assert!(parse_trajectory_csv("time,V,spread,margin\nNaN,0,0,0\n").is_err());
    }

    #[test]
    fn svg_has_one_polyline_per_series() {
        let svg = render_svg(&parse_trajectory_csv(SMALL).unwrap());
        assert!(svg.starts_with("<svg"));
        assert_eq!(svg.matches("<polyline").count(), 3);
        assert!(svg.contains("r = 1"));
    }

    #[test]
    fn svg_of_header_only_table() {
        let svg = render_svg(&parse_trajectory_csv("time,V,spread,margin\n").unwrap());
        assert!(svg.ends_with("</svg>\n"));
    }
}
