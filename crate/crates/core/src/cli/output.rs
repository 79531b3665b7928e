use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::cli::CliError;
use crate::flow::Trajectory;

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    CliError::Output {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

/// `t, x_1..x_n, lambda_1..lambda_m[, err_norm], active_1..active_m`.
pub fn write_trajectory_csv(path: &Path, traj: &Trajectory) -> Result<(), CliError> {
    let (n, m) = match traj.states.first() {
        Some(s) => (s.x.len(), s.lambda.len()),
        None => (0, 0),
    };
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|i| format!("x_{i}")));
    header.extend((1..=m).map(|j| format!("lambda_{j}")));
    if traj.err_norms.is_some() {
        header.push("err_norm".into());
    }
    header.extend((1..=m).map(|j| format!("active_{j}")));
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    for (k, (t, s)) in traj.times.iter().zip(&traj.states).enumerate() {
        let mut row = vec![t.to_string()];
        row.extend(s.x.iter().map(f64::to_string));
        row.extend(s.lambda.iter().map(f64::to_string));
        if let Some(e) = &traj.err_norms {
            row.push(e[k].to_string());
        }
        row.extend(
            traj.active_flags[k]
                .iter()
                .map(|a| if *a { "1".to_string() } else { "0".to_string() }),
        );
        w.write_record(&row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn write_error_csv(path: &Path, times: &[f64], errs: &[f64]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(["t", "err_norm"]).map_err(|e| csv_error(path, e))?;
    for (t, e) in times.iter().zip(errs) {
        w.write_record([t.to_string(), e.to_string()])
            .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub struct Series<'a> {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub color: &'a str,
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

pub fn palette(k: usize) -> &'static str {
    PALETTE[k % PALETTE.len()]
}

/// Minimal SVG line chart. With `log_y`, non-positive values are dropped and
/// the axis is `log10`.
pub fn line_chart_svg(title: &str, x_label: &str, series: &[Series], log_y: bool) -> String {
    let (w, h, pad) = (640.0, 400.0, 50.0);
    let tf = |y: f64| if log_y { y.log10() } else { y };
    let pts: Vec<Vec<(f64, f64)>> = series
        .iter()
        .map(|s| {
            s.points
                .iter()
                .filter(|(x, y)| x.is_finite() && y.is_finite() && (!log_y || *y > 0.0))
                .map(|(x, y)| (*x, tf(*y)))
                .collect()
        })
        .collect();
    let all = pts.iter().flatten();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for (x, y) in all {
        x0 = x0.min(*x);
        x1 = x1.max(*x);
        y0 = y0.min(*y);
        y1 = y1.max(*y);
    }
    if !(x1 > x0) {
        x1 = x0 + 1.0;
    }
    if !(y1 > y0) {
        y1 = y0 + 1.0;
    }
    let sx = |x: f64| pad + (x - x0) / (x1 - x0) * (w - 2.0 * pad);
    let sy = |y: f64| h - pad - (y - y0) / (y1 - y0) * (h - 2.0 * pad);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="20" text-anchor="middle" font-family="sans-serif" font-size="14">{}</text>"#,
        w / 2.0,
        escape(title)
    );
    let _ = writeln!(
        s,
        r#"<path d="M{pad},{pad} L{pad},{} L{},{}" stroke="black" fill="none"/>"#,
        h - pad,
        w - pad,
        h - pad
    );
    let y_tick = |v: f64| {
        if log_y {
            format!("1e{v:.0}")
        } else {
            format!("{v:.3}")
        }
    };
    for (v, anchor_y) in [(y0, h - pad), (y1, pad)] {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{anchor_y}" text-anchor="end" font-family="sans-serif" font-size="10">{}</text>"#,
            pad - 4.0,
            y_tick(v)
        );
    }
    for (v, anchor_x) in [(x0, pad), (x1, w - pad)] {
        let _ = writeln!(
            s,
            r#"<text x="{anchor_x}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="10">{v:.3}</text>"#,
            h - pad + 14.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12">{}</text>"#,
        w / 2.0,
        h - 10.0,
        escape(x_label)
    );
    for (k, (ser, p)) in series.iter().zip(&pts).enumerate() {
        if p.is_empty() {
            continue;
        }
        let mut d = String::new();
        for (i, (x, y)) in p.iter().enumerate() {
            let _ = write!(d, "{}{:.2},{:.2} ", if i == 0 { "M" } else { "L" }, sx(*x), sy(*y));
        }
        let _ = writeln!(
            s,
            r#"<path d="{}" stroke="{}" stroke-width="1.5" fill="none"/>"#,
            d.trim_end(),
            ser.color
        );
        let ly = pad + 14.0 * k as f64;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{ly}" font-family="sans-serif" font-size="11" fill="{}">{}</text>"#,
            w - pad - 90.0,
            ser.color,
            escape(&ser.label)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Trajectory (`x_i`, `λ_j` against time) and error (log scale) plots. Plot
/// failures are logged and otherwise ignored.
pub fn write_plots(dir: &Path, stem: &str, traj: &Trajectory) {
    let mut series = Vec::new();
    if let Some(first) = traj.states.first() {
        for i in 0..first.x.len() {
            series.push(Series {
                label: format!("x_{}", i + 1),
                points: traj.times.iter().zip(&traj.states).map(|(t, s)| (*t, s.x[i])).collect(),
                color: palette(i),
            });
        }
        for j in 0..first.lambda.len() {
            series.push(Series {
                label: format!("lambda_{}", j + 1),
                points: traj
                    .times
                    .iter()
                    .zip(&traj.states)
                    .map(|(t, s)| (*t, s.lambda[j]))
                    .collect(),
                color: palette(first.x.len() + j),
            });
        }
    }
    let path = dir.join(format!("{stem}.svg"));
    if let Err(e) = fs::write(&path, line_chart_svg("trajectories", "t [s]", &series, false)) {
        log::warn!("could not write {}: {e}", path.display());
    }
    if let Some(errs) = &traj.err_norms {
        let series = [Series {
            label: "|x - x*|".into(),
            points: traj.times.iter().copied().zip(errs.iter().copied()).collect(),
            color: palette(0),
        }];
        let path = dir.join(format!("{stem}_error.svg"));
        if let Err(e) = fs::write(&path, line_chart_svg("error norm", "t [s]", &series, true)) {
            log::warn!("could not write {}: {e}", path.display());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn svg_is_well_formed_and_drops_nonpositive_on_log_axis() {
        let s = line_chart_svg(
            "a<b",
            "t",
            &[Series {
                label: "e".into(),
                points: vec![(0.0, 1.0), (1.0, 0.0), (2.0, 1e-3)],
                color: "#000",
            }],
            true,
        );
        assert!(s.starts_with("<svg") && s.ends_with("</svg>\n"));
        assert!(s.contains("a&lt;b"));
        let data = s.lines().find(|l| l.contains("stroke-width=\"1.5\"")).unwrap();
        assert_eq!(data.matches('L').count(), 1);
    }
}
