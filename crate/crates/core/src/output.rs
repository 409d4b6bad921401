//! Run artifacts: per-step time series, run summaries and sweep aggregates.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::engine::{equilibrium_step, StepReport};

pub const TIMESERIES_HEADER: &str =
    "step,n_solvent,n_defaulted,n_bankrupt,avg_leverage,avg_haircut,stock_price,risky_price,risky_p_sell,fire_sale_volume";

/// Steps without any solvency change before a run counts as settled.
pub const EQUILIBRIUM_QUIET_STEPS: usize = 20;

#[derive(Debug, thiserror::Error)]
#[error("{path}: {source}")]
pub struct OutputError {
    pub path: PathBuf,
    #[source]
    pub source: io::Error,
}

/// Keeps values that round to zero from printing as `-0.000000`.
fn unsigned_zero(x: f64) -> f64 {
    if x.abs() < 5e-7 {
        0.0
    } else {
        x
    }
}

pub fn timeseries_csv(reports: &[StepReport]) -> String {
    let mut out = String::with_capacity(80 * (reports.len() + 1));
    out.push_str(TIMESERIES_HEADER);
    out.push('\n');
    for r in reports {
        writeln!(
            out,
            "{},{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            r.step,
            r.n_solvent,
            r.n_defaulted,
            r.n_bankrupt,
            unsigned_zero(r.avg_leverage),
            unsigned_zero(r.avg_haircut),
            unsigned_zero(r.stock_price),
            unsigned_zero(r.risky_price),
            unsigned_zero(r.risky_p_sell),
            unsigned_zero(r.fire_sale_volume)
        )
        .expect("writing to a String");
    }
    out
}

pub fn write_timeseries(reports: &[StepReport], path: &Path) -> Result<(), OutputError> {
    write_file(path, &timeseries_csv(reports))
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), OutputError> {
    fs::write(path, contents).map_err(|source| OutputError { path: path.to_path_buf(), source })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub steps: u64,
    pub shock_step: u64,
    pub final_solvent: usize,
    pub final_defaulted: usize,
    pub final_bankrupt: usize,
    pub peak_haircut: f64,
    /// Mean bank leverage on the step before the shock.
    pub leverage_before: f64,
    /// Mean bank leverage on the final step.
    pub leverage_after: f64,
    pub equilibrium_step: Option<u64>,
    pub max_conservation_error: f64,
}

impl RunSummary {
    pub fn from_reports(reports: &[StepReport], seed: u64, shock_step: u64) -> Option<RunSummary> {
        let last = reports.last()?;
        let before = reports.iter().rev().find(|r| r.step < shock_step).unwrap_or(&reports[0]);
        Some(RunSummary {
            seed,
            steps: last.step,
            shock_step,
            final_solvent: last.n_solvent,
            final_defaulted: last.n_defaulted,
            final_bankrupt: last.n_bankrupt,
            peak_haircut: reports.iter().map(|r| r.avg_haircut).fold(0.0, f64::max),
            leverage_before: before.avg_leverage,
            leverage_after: last.avg_leverage,
            equilibrium_step: equilibrium_step(reports, EQUILIBRIUM_QUIET_STEPS),
            max_conservation_error: reports
                .iter()
                .map(|r| r.audit.cash_error.max(r.audit.quantity_error))
                .fold(0.0, f64::max),
        })
    }
}

pub const SWEEP_HEADER: &str = "param_value,n_seeds,mean_final_bankrupt,stderr_final_bankrupt";

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub param_value: f64,
    pub n_seeds: usize,
    pub mean_final_bankrupt: f64,
    /// Sample standard deviation over `sqrt(n)`; zero for a single seed.
    pub stderr_final_bankrupt: f64,
}

pub fn aggregate(param_value: f64, finals: &[f64]) -> SweepPoint {
    let n = finals.len();
    let mean = if n == 0 { f64::NAN } else { finals.iter().sum::<f64>() / n as f64 };
    let stderr = if n < 2 {
        0.0
    } else {
        let var = finals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    };
    SweepPoint { param_value, n_seeds: n, mean_final_bankrupt: mean, stderr_final_bankrupt: stderr }
}

pub fn sweep_csv(points: &[SweepPoint]) -> String {
    let mut out = String::from(SWEEP_HEADER);
    out.push('\n');
    for p in points {
        writeln!(
            out,
            "{:.6},{},{:.6},{:.6}",
            p.param_value, p.n_seeds, p.mean_final_bankrupt, p.stderr_final_bankrupt
        )
        .expect("writing to a String");
    }
    out
}

/// `steps` evenly spaced values from `from` to `to` inclusive.
pub fn sweep_values(from: f64, to: f64, steps: usize) -> Vec<f64> {
    match steps {
        0 => Vec::new(),
        1 => vec![from],
        _ => (0..steps).map(|i| from + (to - from) * i as f64 / (steps - 1) as f64).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::Audit;

    fn report(step: u64, solvent: usize) -> StepReport {
        StepReport {
            step,
            n_solvent: solvent,
            n_defaulted: 0,
            n_bankrupt: 0,
            avg_leverage: 3.5,
            avg_haircut: 0.0,
            stock_price: 100.0,
            risky_price: 100.0,
            risky_p_sell: 1.0,
            fire_sale_volume: 0.0,
            n_above_limits: 0,
            transitions: 0,
            audit: Audit::default(),
        }
    }

    #[test]
    fn header_only_for_no_reports() {
        assert_eq!(timeseries_csv(&[]), format!("{TIMESERIES_HEADER}\n"));
    }

    #[test]
    fn one_row() {
        let csv = timeseries_csv(&[report(0, 100)]);
        let row = csv.lines().nth(1).unwrap();
        assert_eq!(row, "0,100,0,0,3.500000,0.000000,100.000000,100.000000,1.000000,0.000000");
        assert!(!csv.contains('\r'));
    }

    #[test]
    fn aggregate_mean_and_stderr() {
        let p = aggregate(0.8, &[1.0, 2.0, 3.0, 6.0]);
        assert_eq!(p.mean_final_bankrupt, 3.0);
        assert!((p.stderr_final_bankrupt - (14.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
        assert_eq!(aggregate(1.0, &[5.0]).stderr_final_bankrupt, 0.0);
    }

    #[test]
    fn sweep_grid() {
        let v = sweep_values(1.0, 0.6, 5);
        assert_eq!(v.len(), 5);
        assert!((v[1] - 0.9).abs() < 1e-12);
        assert_eq!(v[4], 0.6);
        assert_eq!(sweep_values(0.5, 0.1, 1), vec![0.5]);
    }

    #[test]
    fn io_error_names_path() {
        let err = write_timeseries(&[], Path::new("/nonexistent-dir/x.csv")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent-dir/x.csv"));
    }

    #[test]
    fn summary_uses_step_before_shock() {
        let mut r = vec![report(0, 10), report(1, 10), report(2, 9)];
        r[1].avg_leverage = 4.0;
        r[2].avg_leverage = 2.0;
        r[2].avg_haircut = 0.7;
        let s = RunSummary::from_reports(&r, 7, 2).unwrap();
        assert_eq!((s.leverage_before, s.leverage_after, s.peak_haircut), (4.0, 2.0, 0.7));
        assert_eq!(s.final_solvent, 9);
    }
}
