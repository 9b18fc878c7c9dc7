//! Command implementations behind the binary: `check`, `solve` and `study`.
//! Each returns the process exit code; artifacts are written through the
//! supplied paths and human-readable output goes to the given writers.
//!
//! Exit codes: 0 success/converged, 1 failed audit or refused gate,
//! 2 malformed spec or usage, 3 non-convergence (partial trace still
//! written), 4 singular reciprocal weight (with the node time).

use std::fs;
use std::io::Write;
use std::path::Path;

use qfde_core::engine::EngineError;
use qfde_core::oracle::oracle_compare;
use qfde_core::qfde::{check_instance, solve, SolveConfig, SolveError};
use qfde_core::{OperatorError, ProblemInstance};

use crate::report::{
    fmt17, observed_order, to_json_pretty, write_solution_csv, write_trace_csv, CheckJson, Meta,
    SolveJson, StudyJson, StudyOrder, StudyRow, SCHEMA_VERSION,
};
use crate::spec_format::{parse_document, ProblemSpecDocument};

pub const EXIT_OK: i32 = 0;
pub const EXIT_AUDIT_FAIL: i32 = 1;
pub const EXIT_SPEC: i32 = 2;
pub const EXIT_NONCONVERGENCE: i32 = 3;
pub const EXIT_SINGULAR: i32 = 4;

pub struct SolveFlags {
    pub solution: Option<std::path::PathBuf>,
    pub trace: Option<std::path::PathBuf>,
    pub json: Option<std::path::PathBuf>,
    pub override_gate: bool,
    pub record_iterates: bool,
    pub seed: Option<u64>,
}

fn load_document(path: &Path, err: &mut impl Write) -> Result<ProblemSpecDocument, i32> {
    let text = match fs::read_to_string(path) {
        Ok(text) => text,
        Err(e) => {
            let _ = writeln!(err, "error: cannot read {}: {e}", path.display());
            return Err(EXIT_SPEC);
        }
    };
    match parse_document(&text) {
        Ok(doc) => Ok(doc),
        Err(e) => {
            let _ = writeln!(err, "error: {}: {e}", path.display());
            Err(EXIT_SPEC)
        }
    }
}

fn write_artifact(path: &Path, content: &str, err: &mut impl Write) -> Result<(), i32> {
    if let Err(e) = fs::write(path, content) {
        let _ = writeln!(err, "error: cannot write {}: {e}", path.display());
        return Err(EXIT_SPEC);
    }
    Ok(())
}

pub fn cmd_check(
    spec_path: &Path,
    json_path: Option<&Path>,
    seed: Option<u64>,
    out: &mut impl Write,
    err: &mut impl Write,
) -> i32 {
    let doc = match load_document(spec_path, err) {
        Ok(doc) => doc,
        Err(code) => return code,
    };
    let inst = match doc.to_instance(None) {
        Ok(inst) => inst,
        Err(e) => {
            let _ = writeln!(err, "error: {}: {e}", spec_path.display());
            return EXIT_SPEC;
        }
    };
    let report = check_instance(&inst, doc.audit_trials, seed.unwrap_or(doc.audit_seed));
    let _ = write!(out, "{report}");
    if let Some(path) = json_path {
        let json = to_json_pretty(&CheckJson {
            schema_version: SCHEMA_VERSION,
            command: "check",
            spec_path: &spec_path.display().to_string(),
            overall: report.overall,
            report: &report,
            meta: Meta::now(),
        });
        if let Err(code) = write_artifact(path, &json, err) {
            return code;
        }
    }
    if report.overall {
        EXIT_OK
    } else {
        EXIT_AUDIT_FAIL
    }
}

fn singular_exit(source: &OperatorError, err: &mut impl Write) -> Option<i32> {
    source.singular_time().map(|t| {
        let _ = writeln!(err, "error: singular reciprocal weight at t = {t}: {source}");
        EXIT_SINGULAR
    })
}

pub fn cmd_solve(
    spec_path: &Path,
    flags: &SolveFlags,
    out: &mut impl Write,
    err: &mut impl Write,
) -> i32 {
    let doc = match load_document(spec_path, err) {
        Ok(doc) => doc,
        Err(code) => return code,
    };
    let inst = match doc.to_instance(None) {
        Ok(inst) => inst,
        Err(e) => {
            let _ = writeln!(err, "error: {}: {e}", spec_path.display());
            return EXIT_SPEC;
        }
    };
    let mut engine = doc.engine_config();
    if flags.record_iterates {
        engine.record_full_iterates = true;
    }
    let cfg = SolveConfig {
        engine,
        audit_trials: doc.audit_trials,
        audit_seed: flags.seed.unwrap_or(doc.audit_seed),
        override_gate: flags.override_gate,
    };

    let mut report = match solve(&inst, &cfg) {
        Ok(report) => report,
        Err(SolveError::GateRefused { report }) => {
            let _ = write!(err, "{report}");
            let _ = writeln!(err, "gate refused; rerun with --override-gate to iterate anyway");
            return EXIT_AUDIT_FAIL;
        }
        Err(SolveError::NonConvergence { iterations, trace }) => {
            let _ = writeln!(
                err,
                "error: not converged after {iterations} iterations (last delta {:?})",
                trace.last_delta()
            );
            if let Some(path) = &flags.trace {
                let mut buf = Vec::new();
                let _ = write_trace_csv(&mut buf, &trace, flags.record_iterates);
                let _ = write_artifact(path, &String::from_utf8_lossy(&buf), err);
            }
            return EXIT_NONCONVERGENCE;
        }
        Err(SolveError::Engine(EngineError::Operator { source, trace, .. })) => {
            if let Some(code) = singular_exit(&source, err) {
                if let Some(path) = &flags.trace {
                    let mut buf = Vec::new();
                    let _ = write_trace_csv(&mut buf, &trace, flags.record_iterates);
                    let _ = write_artifact(path, &String::from_utf8_lossy(&buf), err);
                }
                return code;
            }
            let _ = writeln!(err, "error: {source}");
            return EXIT_NONCONVERGENCE;
        }
        Err(SolveError::Operator(source)) => {
            if let Some(code) = singular_exit(&source, err) {
                return code;
            }
            let _ = writeln!(err, "error: {source}");
            return EXIT_NONCONVERGENCE;
        }
        Err(SolveError::Resolvent(e)) => {
            let _ = writeln!(err, "error: {e}");
            return EXIT_NONCONVERGENCE;
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return EXIT_NONCONVERGENCE;
        }
    };

    match oracle_compare(&inst, &report) {
        Ok(gap) => report.oracle_gap = Some(gap),
        Err(e) => {
            let _ = writeln!(err, "note: oracle comparison unavailable: {e}");
        }
    }

    let _ = writeln!(
        err,
        "converged in {} iterations; ode residual {}, oracle gap {}, gate {}{}",
        report.trace.iterations,
        fmt17(report.ode_residual),
        report
            .oracle_gap
            .map(fmt17)
            .unwrap_or_else(|| "n/a".into()),
        if report.hypothesis_report.overall { "PASS" } else { "FAIL" },
        if report.gate_overridden { " (overridden)" } else { "" },
    );

    match &flags.solution {
        Some(path) => {
            let mut buf = Vec::new();
            let _ = write_solution_csv(&mut buf, &inst, &report);
            if let Err(code) = write_artifact(path, &String::from_utf8_lossy(&buf), err) {
                return code;
            }
        }
        None => {
            let _ = write_solution_csv(out, &inst, &report);
        }
    }
    if let Some(path) = &flags.trace {
        let mut buf = Vec::new();
        let _ = write_trace_csv(&mut buf, &report.trace, flags.record_iterates);
        if let Err(code) = write_artifact(path, &String::from_utf8_lossy(&buf), err) {
            return code;
        }
    }
    if let Some(path) = &flags.json {
        let json = to_json_pretty(&SolveJson::from_report(
            &spec_path.display().to_string(),
            &report,
        ));
        if let Err(code) = write_artifact(path, &json, err) {
            return code;
        }
    }
    EXIT_OK
}

fn study_row(doc: &ProblemSpecDocument, n: usize, seed: Option<u64>) -> StudyRow {
    let h = doc.t_end / (n - 1) as f64;
    let run = || -> Result<(f64, f64), String> {
        let inst: ProblemInstance = doc.to_instance(Some(n)).map_err(|e| e.to_string())?;
        let cfg = SolveConfig {
            engine: doc.engine_config(),
            audit_trials: doc.audit_trials,
            audit_seed: seed.unwrap_or(doc.audit_seed),
            override_gate: false,
        };
        let mut report = solve(&inst, &cfg).map_err(|e| e.to_string())?;
        let gap = oracle_compare(&inst, &report).map_err(|e| e.to_string())?;
        report.oracle_gap = Some(gap);
        Ok((gap, report.ode_residual))
    };
    match run() {
        Ok((gap, residual)) => StudyRow {
            n_points: n,
            h,
            oracle_gap: Some(gap),
            ode_residual: Some(residual),
            error: None,
        },
        Err(e) => StudyRow {
            n_points: n,
            h,
            oracle_gap: None,
            ode_residual: None,
            error: Some(e),
        },
    }
}

#[cfg(feature = "parallel")]
fn study_rows(doc: &ProblemSpecDocument, grids: &[usize], seed: Option<u64>) -> Vec<StudyRow> {
    use rayon::prelude::*;
    grids
        .par_iter()
        .map(|n| study_row(doc, *n, seed))
        .collect()
}

#[cfg(not(feature = "parallel"))]
fn study_rows(doc: &ProblemSpecDocument, grids: &[usize], seed: Option<u64>) -> Vec<StudyRow> {
    grids.iter().map(|n| study_row(doc, *n, seed)).collect()
}

/// Re-solve on each grid and print observed convergence orders between
/// consecutive levels. Failed rows are marked and the study continues.
pub fn cmd_study(
    spec_path: &Path,
    grids: &[usize],
    json_path: Option<&Path>,
    seed: Option<u64>,
    out: &mut impl Write,
    err: &mut impl Write,
) -> i32 {
    if grids.len() < 2 {
        let _ = writeln!(err, "error: a grid study needs at least two grid sizes (--grids n1,n2,...)");
        return EXIT_SPEC;
    }
    if grids.iter().any(|n| *n < 2) {
        let _ = writeln!(err, "error: every grid needs at least 2 nodes");
        return EXIT_SPEC;
    }
    let doc = match load_document(spec_path, err) {
        Ok(doc) => doc,
        Err(code) => return code,
    };
    let mut grids = grids.to_vec();
    grids.sort_unstable();
    grids.dedup();

    let (rows, gap_orders, residual_orders) = run_study(&doc, &grids, seed);

    let fmt_order = |o: &Option<StudyOrder>| -> String {
        match o {
            None => "-".into(),
            Some(StudyOrder::Exact) => "exact".into(),
            Some(StudyOrder::Order(p)) => format!("{p:.3}"),
        }
    };
    let _ = writeln!(
        out,
        "{:>9} {:>13} {:>13} {:>13} {:>9} {:>9}",
        "n_points", "h", "oracle_gap", "ode_residual", "p_gap", "p_res"
    );
    for (i, row) in rows.iter().enumerate() {
        let gap = row.oracle_gap.map(|v| format!("{v:.6e}")).unwrap_or_else(|| "FAILED".into());
        let res = row.ode_residual.map(|v| format!("{v:.6e}")).unwrap_or_else(|| "FAILED".into());
        let p_gap = if i > 0 { fmt_order(&gap_orders[i - 1]) } else { "-".into() };
        let p_res = if i > 0 { fmt_order(&residual_orders[i - 1]) } else { "-".into() };
        let _ = writeln!(
            out,
            "{:>9} {:>13.6e} {:>13} {:>13} {:>9} {:>9}",
            row.n_points, row.h, gap, res, p_gap, p_res
        );
        if let Some(e) = &row.error {
            let _ = writeln!(err, "  note: n = {}: {e}", row.n_points);
        }
    }

    if let Some(path) = json_path {
        let json = to_json_pretty(&StudyJson {
            schema_version: SCHEMA_VERSION,
            command: "study",
            spec_path: &spec_path.display().to_string(),
            rows: &rows,
            gap_orders: &gap_orders,
            residual_orders: &residual_orders,
            meta: Meta::now(),
        });
        if let Err(code) = write_artifact(path, &json, err) {
            return code;
        }
    }

    if rows.iter().filter(|r| r.error.is_none()).count() >= 2 {
        EXIT_OK
    } else {
        EXIT_NONCONVERGENCE
    }
}

/// Library-level study used by tests: rows plus both order columns.
pub fn run_study(
    doc: &ProblemSpecDocument,
    grids: &[usize],
    seed: Option<u64>,
) -> (Vec<StudyRow>, Vec<Option<StudyOrder>>, Vec<Option<StudyOrder>>) {
    let rows = study_rows(doc, grids, seed);
    let order_between = |a: &StudyRow, b: &StudyRow, pick: fn(&StudyRow) -> Option<f64>| {
        match (pick(a), pick(b)) {
            (Some(ea), Some(eb)) => Some(observed_order((a.h, ea), (b.h, eb))),
            _ => None,
        }
    };
    let gap_orders = rows
        .windows(2)
        .map(|w| order_between(&w[0], &w[1], |r| r.oracle_gap))
        .collect();
    let residual_orders = rows
        .windows(2)
        .map(|w| order_between(&w[0], &w[1], |r| r.ode_residual))
        .collect();
    (rows, gap_orders, residual_orders)
}
