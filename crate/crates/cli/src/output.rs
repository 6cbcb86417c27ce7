//! Result emission: deterministic CSV and JSON files, written atomically
//! (temp file + rename) so repeated invocations replace rather than append.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use pso_core::meanfield::MfaCurve;
use pso_core::runner::{PhaseDiagram, RunReport};

/// Write `contents` to `path` via a sibling temp file and an atomic rename.
pub fn write_atomic(path: &Path, contents: &str) -> io::Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "output path has no file name"))?
        .to_string_lossy()
        .into_owned();
    let tmp = path.with_file_name(format!("{file_name}.tmp"));
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)
}

/// 17 significant digits: every f64 round-trips exactly through this.
fn csv_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// The diagnostics series as CSV: t, H, variance, best_value, then the d
/// consensus coordinates.
pub fn series_csv(report: &RunReport) -> String {
    let d = report.final_consensus.len();
    let mut s = String::from("t,H,variance,best_value");
    for k in 0..d {
        write!(s, ",consensus_{k}").unwrap();
    }
    s.push('\n');
    for r in &report.series {
        write!(
            s,
            "{},{},{},{}",
            csv_f64(r.t),
            csv_f64(r.h),
            csv_f64(r.variance),
            csv_f64(r.best_value)
        )
        .unwrap();
        for c in &r.consensus {
            s.push(',');
            s.push_str(&csv_f64(*c));
        }
        s.push('\n');
    }
    s
}

/// Long-format phase diagram: one row per (m, sigma2) cell.
pub fn phase_csv(diagram: &PhaseDiagram) -> String {
    let mut s = String::from("m,sigma2,success_prob\n");
    for cell in &diagram.cells {
        writeln!(
            s,
            "{},{},{}",
            csv_f64(cell.mass),
            csv_f64(cell.sigma2),
            csv_f64(cell.success_prob)
        )
        .unwrap();
    }
    s
}

/// Coupling-error curve: one row per system size.
pub fn mfa_csv(curve: &MfaCurve) -> String {
    let mut s = String::from("n,error,stderr,retained\n");
    for p in &curve.points {
        writeln!(
            s,
            "{},{},{},{}",
            p.particles,
            csv_f64(p.mean_error),
            csv_f64(p.stderr),
            p.retained
        )
        .unwrap();
    }
    s
}

/// Envelope check rows: alpha, estimate, sample minimum, admissible width.
pub fn laplace_csv(rows: &[(f64, f64, f64, f64)]) -> String {
    let mut s = String::from("alpha,estimate,min,width\n");
    for (alpha, estimate, min, width) in rows {
        writeln!(
            s,
            "{},{},{},{}",
            csv_f64(*alpha),
            csv_f64(*estimate),
            csv_f64(*min),
            csv_f64(*width)
        )
        .unwrap();
    }
    s
}

pub fn to_json<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serialization cannot fail");
    s.push('\n');
    s
}
