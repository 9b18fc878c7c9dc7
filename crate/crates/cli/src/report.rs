//! JSON and CSV artifact emitters. JSON reports are deterministic for a
//! fixed spec and seed except for the `meta` block, which carries the wall
//! clock; CSV numbers are written with 17 significant digits so downstream
//! analysis never loses bits.

use std::io::{self, Write};
use std::time::{SystemTime, UNIX_EPOCH};

use qfde_core::qfde::HypothesisReport;
use qfde_core::{IterationTrace, ProblemInstance, SolutionReport, StopReason};
use serde::Serialize;

pub const SCHEMA_VERSION: &str = "1";

/// Full round-trip decimal form of an f64 (17 significant digits).
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Serialize)]
pub struct Meta {
    pub unix_time: u64,
}

impl Meta {
    pub fn now() -> Self {
        Meta {
            unix_time: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        }
    }
}

#[derive(Serialize)]
pub struct CheckJson<'a> {
    pub schema_version: &'static str,
    pub command: &'static str,
    pub spec_path: &'a str,
    pub overall: bool,
    pub report: &'a HypothesisReport,
    pub meta: Meta,
}

#[derive(Serialize)]
pub struct SolveJson<'a> {
    pub schema_version: &'static str,
    pub command: &'static str,
    pub spec_path: &'a str,
    pub converged: bool,
    pub reason: StopReason,
    pub iterations: usize,
    pub gate_overall: bool,
    pub gate_overridden: bool,
    pub ode_residual: f64,
    pub initial_condition_error: f64,
    pub y0_gap: f64,
    pub oracle_gap: Option<f64>,
    pub final_delta: Option<f64>,
    pub final_residual: Option<f64>,
    pub hypotheses: &'a HypothesisReport,
    pub meta: Meta,
}

impl<'a> SolveJson<'a> {
    pub fn from_report(spec_path: &'a str, report: &'a SolutionReport) -> Self {
        SolveJson {
            schema_version: SCHEMA_VERSION,
            command: "solve",
            spec_path,
            converged: report.trace.converged,
            reason: report.trace.reason,
            iterations: report.trace.iterations,
            gate_overall: report.hypothesis_report.overall,
            gate_overridden: report.gate_overridden,
            ode_residual: report.ode_residual,
            initial_condition_error: report.initial_condition_error,
            y0_gap: report.y0_gap,
            oracle_gap: report.oracle_gap,
            final_delta: report.trace.last_delta(),
            final_residual: report.trace.final_residual,
            hypotheses: &report.hypothesis_report,
            meta: Meta::now(),
        }
    }
}

#[derive(Serialize, Clone, Copy, Debug, PartialEq)]
#[serde(tag = "kind", content = "value")]
pub enum StudyOrder {
    /// Gaps at roundoff level; an order estimate would be meaningless.
    Exact,
    Order(f64),
}

#[derive(Serialize, Clone, Debug)]
pub struct StudyRow {
    pub n_points: usize,
    pub h: f64,
    pub oracle_gap: Option<f64>,
    pub ode_residual: Option<f64>,
    pub error: Option<String>,
}

#[derive(Serialize)]
pub struct StudyJson<'a> {
    pub schema_version: &'static str,
    pub command: &'static str,
    pub spec_path: &'a str,
    pub rows: &'a [StudyRow],
    /// Observed order between consecutive successful rows, gap column.
    pub gap_orders: &'a [Option<StudyOrder>],
    /// Same for the residual column.
    pub residual_orders: &'a [Option<StudyOrder>],
    pub meta: Meta,
}

pub fn to_json_pretty<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report serialization cannot fail")
}

/// `t,x_star,y_star` rows at full precision.
pub fn write_solution_csv(
    out: &mut impl Write,
    inst: &ProblemInstance,
    report: &SolutionReport,
) -> io::Result<()> {
    writeln!(out, "# schema_version={SCHEMA_VERSION}")?;
    writeln!(out, "t,x_star,y_star")?;
    for (t, (x, y)) in inst
        .grid
        .nodes()
        .zip(report.x_star.values().iter().zip(report.y_star.values()))
    {
        writeln!(out, "{},{},{}", fmt17(t), fmt17(*x), fmt17(*y))?;
    }
    Ok(())
}

/// `iter,delta,monotone_flag,residual_if_available` rows, one per iteration;
/// with `with_digests` the per-iterate min/max/sup columns are appended.
pub fn write_trace_csv(
    out: &mut impl Write,
    trace: &IterationTrace,
    with_digests: bool,
) -> io::Result<()> {
    writeln!(out, "# schema_version={SCHEMA_VERSION}")?;
    if with_digests {
        writeln!(out, "iter,delta,monotone_flag,residual_if_available,min,max,sup_norm")?;
    } else {
        writeln!(out, "iter,delta,monotone_flag,residual_if_available")?;
    }
    for (i, (delta, flag)) in trace.deltas.iter().zip(&trace.monotone_flags).enumerate() {
        let residual = if i + 1 == trace.deltas.len() {
            trace.final_residual.map(fmt17).unwrap_or_default()
        } else {
            String::new()
        };
        if with_digests {
            // digests[i + 1] describes the iterate this step produced.
            let d = &trace.digests[i + 1];
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                i + 1,
                fmt17(*delta),
                flag.as_str(),
                residual,
                fmt17(d.min),
                fmt17(d.max),
                fmt17(d.sup_norm),
            )?;
        } else {
            writeln!(out, "{},{},{},{}", i + 1, fmt17(*delta), flag.as_str(), residual)?;
        }
    }
    Ok(())
}

/// Observed order between two mesh levels; `Exact` when both measurements
/// sit at roundoff level.
pub fn observed_order(coarse: (f64, f64), fine: (f64, f64)) -> StudyOrder {
    let (h_coarse, err_coarse) = coarse;
    let (h_fine, err_fine) = fine;
    if err_coarse <= 1e-12 && err_fine <= 1e-12 {
        return StudyOrder::Exact;
    }
    if err_fine == 0.0 {
        return StudyOrder::Exact;
    }
    StudyOrder::Order((err_coarse / err_fine).ln() / (h_coarse / h_fine).ln())
}
