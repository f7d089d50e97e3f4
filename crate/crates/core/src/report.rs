//! Collates the artifacts of earlier runs in one directory into `report.md`.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::io::{read_json, SolveSummary};

pub const THRESHOLDS: &str = "thresholds.csv";
pub const VALUES: &str = "values.json";
pub const RESPONSE: &str = "best_response.csv";
pub const RESPONSE_VALUES: &str = "best_response_values.json";
pub const VALUE_SAMPLES: &str = "values.csv";
pub const CHECKS: &str = "checks.csv";
pub const HISTORY: &str = "history.csv";
pub const SUMMARY: &str = "summary.json";
pub const STATS: &str = "stats.csv";
pub const DENSITY: &str = "density.csv";
pub const EVENTS: &str = "events.csv";
pub const PATH: &str = "path.csv";
pub const CHAIN: &str = "chain.csv";
pub const SWEEP: &str = "sweep.csv";
pub const CURVES: &str = "integration_curve.csv";
pub const LAMBDA_STAR: &str = "lambda_star.csv";
pub const REPORT: &str = "report.md";

/// Any one of these makes a directory reportable.
const ANCHORS: [&str; 5] = [SUMMARY, STATS, CHAIN, SWEEP, LAMBDA_STAR];

fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        k => Error::Config(format!("{}: {k:?}", path.display())),
    })?;
    let header = r.headers()?.iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|r| r.iter().map(String::from).collect()))
        .collect::<std::result::Result<_, _>>()?;
    Ok((header, rows))
}

fn markdown(out: &mut String, header: &[String], rows: &[Vec<String>], cols: Option<&[usize]>) {
    let pick = |r: &[String]| -> Vec<String> {
        match cols {
            Some(c) => c.iter().map(|&i| r.get(i).cloned().unwrap_or_default()).collect(),
            None => r.to_vec(),
        }
    };
    let h = pick(header);
    let _ = writeln!(out, "| {} |", h.join(" | "));
    let _ = writeln!(out, "|{}", "---|".repeat(h.len()));
    for r in rows {
        let _ = writeln!(out, "| {} |", pick(r).join(" | "));
    }
    out.push('\n');
}

fn need(dir: &Path, name: &str, because: &str) -> Result<std::path::PathBuf> {
    let p = dir.join(name);
    if p.is_file() {
        Ok(p)
    } else {
        Err(Error::Config(format!("{}: missing {name} (required with {because})", dir.display())))
    }
}

/// Writes `report.md` into `dir` and returns its text.
pub fn run_report(dir: &Path) -> Result<String> {
    if !ANCHORS.iter().any(|a| dir.join(a).is_file()) {
        return Err(Error::Config(format!(
            "{}: nothing to report; expected at least one of {}",
            dir.display(),
            ANCHORS.join(", ")
        )));
    }
    let mut out = String::from("# Run report\n\n");

    if dir.join(SUMMARY).is_file() {
        let s: SolveSummary = read_json(&dir.join(SUMMARY))?;
        let (th, tr) = read_table(&need(dir, THRESHOLDS, SUMMARY)?)?;
        let (ch, cr) = read_table(&need(dir, CHECKS, SUMMARY)?)?;
        let _ = writeln!(out, "## Equilibrium\n");
        let _ = writeln!(out, "- type: {}", s.type_tag);
        let _ = writeln!(out, "- branch: {} ({} mode)", s.branch, s.mode);
        let _ = writeln!(out, "- converged: {} after {} iterations", s.converged, s.iterations);
        let _ = writeln!(out, "- fixed-point delta: {:e}", s.fixed_point_delta);
        let _ = writeln!(out, "- selected forms: consumer {}, producer {}", s.consumer_kind, s.producer_kind);
        let _ = writeln!(out, "- strategies: {}", s.strategies);
        if let Some((a, b)) = &s.cycle {
            let _ = writeln!(out, "- period-2 cycle between {a} and {b}");
        }
        out.push('\n');
        markdown(&mut out, &th, &tr, None);
        let failed = cr.iter().filter(|r| r.get(1).map(String::as_str) != Some("true")).count();
        let _ = writeln!(out, "## Checks\n");
        if failed == 0 {
            let _ = writeln!(out, "All {} checks pass.\n", cr.len());
        } else {
            let _ = writeln!(out, "{failed} of {} checks fail.\n", cr.len());
        }
        markdown(&mut out, &ch, &cr, None);
    }

    if dir.join(STATS).is_file() {
        let (h, r) = read_table(&dir.join(STATS))?;
        let _ = writeln!(out, "## Long-run statistics\n");
        markdown(&mut out, &h, &r, None);
    }

    if dir.join(CHAIN).is_file() {
        let (h, r) = read_table(&dir.join(CHAIN))?;
        let _ = writeln!(out, "## Jump chain\n");
        markdown(&mut out, &h, &r, Some(&[0, 1, 2, 3, 4]));
    }

    if dir.join(SWEEP).is_file() {
        let (h, r) = read_table(&dir.join(SWEEP))?;
        let _ = writeln!(out, "## Sweep over {}\n", h.first().map(String::as_str).unwrap_or("?"));
        let ok = r.iter().filter(|x| x.get(1).map(String::as_str) == Some("ok")).count();
        let _ = writeln!(out, "{ok} of {} points converged.\n", r.len());
        markdown(&mut out, &h, &r, Some(&[0, 1, 3, 4, 5, 6, 7, 2]));
    }

    if dir.join(LAMBDA_STAR).is_file() {
        let (h, r) = read_table(&dir.join(LAMBDA_STAR))?;
        let _ = writeln!(out, "## Integration study\n");
        let _ = writeln!(out, "lambda weights the consumer profit (pi_c_end); 0 is the pure producer end.\n");
        markdown(&mut out, &h, &r, Some(&[0, 1, 3, 9, 10, 11, 2]));
    }

    let path = dir.join(REPORT);
    std::fs::write(&path, &out).map_err(|e| Error::io(&path, e))?;
    Ok(out)
}
