//! CSV tables and the plain-text report.
//!
//! Every number is written with 17 significant digits so identical runs
//! give byte-identical files.

use std::fmt::Write as _;
use std::path::Path;

use crate::perturb::BoundReport;

use super::SolverRun;

pub(crate) fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_rows(path: &Path, header: Vec<String>, rows: impl Iterator<Item = Vec<String>>) -> Result<(), String> {
    let io = |e: csv::Error| format!("cannot write {}: {e}", path.display());
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| format!("cannot create {}: {e}", dir.display()))?;
    }
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(&header).map_err(io)?;
    for row in rows {
        w.write_record(&row).map_err(io)?;
    }
    w.flush().map_err(|e| format!("cannot write {}: {e}", path.display()))
}

/// `t, <solver>_u1, ..., <solver>_un, ...` at every grid node.
pub(crate) fn write_solution(path: &Path, runs: &[SolverRun]) -> Result<(), String> {
    let Some(first) = runs.first() else {
        return Ok(());
    };
    let grid = *first.u.grid();
    let mut header = vec!["t".to_string()];
    for r in runs {
        header.extend((1..=r.u.shape().0).map(|k| format!("{}_u{k}", r.kind)));
    }
    let rows = (0..grid.len()).map(|i| {
        let mut row = vec![num(grid.node(i))];
        for r in runs {
            row.extend(r.u.value(i).iter().map(|&v| num(v)));
        }
        row
    });
    write_rows(path, header, rows)
}

/// `t, <solver>, ...` residuals at the interior nodes.
pub(crate) fn write_residual(path: &Path, runs: &[SolverRun]) -> Result<(), String> {
    let with: Vec<_> = runs
        .iter()
        .filter_map(|r| r.residual.as_ref().map(|s| (r.kind, s)))
        .collect();
    let Some((_, first)) = with.first() else {
        return Ok(());
    };
    let mut header = vec!["t".to_string()];
    header.extend(with.iter().map(|(k, _)| k.to_string()));
    let times: Vec<f64> = first.iter().map(|(t, _)| t).collect();
    let rows = times.iter().enumerate().map(|(i, &t)| {
        let mut row = vec![num(t)];
        row.extend(with.iter().map(|(_, s)| num(s.values()[i])));
        row
    });
    write_rows(path, header, rows)
}

pub(crate) fn write_bounds(path: &Path, report: &BoundReport) -> Result<(), String> {
    let header = ["s", "norm_C", "bound_C", "margin_C", "norm_S", "bound_S", "margin_S"]
        .map(String::from)
        .to_vec();
    let rows = report.rows.iter().map(|r| {
        [
            r.s,
            r.norm_c,
            r.bound_c,
            r.margin_c(),
            r.norm_s,
            r.bound_s,
            r.margin_s(),
        ]
        .map(num)
        .to_vec()
    });
    write_rows(path, header, rows)
}

/// Line-oriented report; `sections` are `(title, lines)` pairs.
pub(crate) fn render_report(sections: &[(String, Vec<String>)]) -> String {
    let mut out = String::new();
    for (title, lines) in sections {
        let _ = writeln!(out, "{title}");
        for line in lines {
            let _ = writeln!(out, "  {line}");
        }
        out.push('\n');
    }
    out
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<(), String> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| format!("cannot create {}: {e}", dir.display()))?;
    }
    std::fs::write(path, text).map_err(|e| format!("cannot write {}: {e}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, std::f64::consts::E, 1e300] {
            assert_eq!(num(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(num(1.0), "1.0000000000000000e0");
    }

    #[test]
    fn report_layout() {
        let text = render_report(&[("a".into(), vec!["x".into(), "y".into()]), ("b".into(), vec![])]);
        assert_eq!(text, "a\n  x\n  y\n\nb\n\n");
    }
}
