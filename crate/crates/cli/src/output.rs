//! CSV emission and parsing for run artifacts.
//!
//! Trajectories use the fixed header `t,E,M,F,Ms,u`, comma separation and
//! `.` decimals; floats are written in shortest round-trip form, so parsing
//! a file back reproduces the original values bit for bit.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};

use sitstab::experiments::{ComparisonRow, EvidenceRun, RobustnessRun, RunOutcome};
use sitstab::integrate::Trajectory;
use sitstab::model::State;

pub fn write_trajectory_csv(path: &Path, traj: &Trajectory) -> Result<()> {
    let mut w = csv::Writer::from_path(path)
        .with_context(|| format!("cannot create {}", path.display()))?;
    w.write_record(["t", "E", "M", "F", "Ms", "u"])?;
    for i in 0..traj.len() {
        let z = traj.states[i];
        w.write_record([
            traj.times[i].to_string(),
            z.eggs.to_string(),
            z.males.to_string(),
            z.females.to_string(),
            z.sterile.to_string(),
            traj.controls[i].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trajectory_csv(path: &Path) -> Result<Trajectory> {
    let mut r =
        csv::Reader::from_path(path).with_context(|| format!("cannot open {}", path.display()))?;
    if r.headers()? != vec!["t", "E", "M", "F", "Ms", "u"] {
        bail!("{} is not a trajectory file (bad header)", path.display());
    }
    let mut traj = Trajectory::default();
    for record in r.records() {
        let record = record?;
        let field = |i: usize| -> Result<f64> {
            record
                .get(i)
                .context("short record")?
                .parse::<f64>()
                .context("malformed float")
        };
        traj.times.push(field(0)?);
        traj.states
            .push(State::new(field(1)?, field(2)?, field(3)?, field(4)?));
        traj.controls.push(field(5)?);
    }
    Ok(traj)
}

pub fn write_comparison_csv(path: &Path, rows: &[ComparisonRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)
        .with_context(|| format!("cannot create {}", path.display()))?;
    w.write_record(["gain", "T_days", "cost"])?;
    for row in rows {
        w.write_record([
            row.gain.to_string(),
            row.intervention_time
                .map(|t| t.to_string())
                .unwrap_or_default(),
            row.cost.map(|c| c.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn outcome_label(outcome: &RunOutcome) -> &str {
    match outcome {
        RunOutcome::Converged => "converged",
        RunOutcome::Diverged => "diverged",
        RunOutcome::Failed(_) => "failed",
    }
}

/// One CSV per run (`run_NNN.csv`, columns `t,log10_wild_total`) plus
/// `summary.csv` with outcome and sampled parameters.
pub fn write_robustness(dir: &Path, runs: &[RobustnessRun]) -> Result<()> {
    fs::create_dir_all(dir)?;
    for run in runs {
        let mut w = csv::Writer::from_path(dir.join(format!("run_{:03}.csv", run.index)))?;
        w.write_record(["t", "log10_wild_total"])?;
        for (t, v) in &run.log_total_trace {
            w.write_record([t.to_string(), v.to_string()])?;
        }
        w.flush()?;
    }
    let mut w = csv::Writer::from_path(dir.join("summary.csv"))?;
    w.write_record([
        "run",
        "outcome",
        "final_wild_total",
        "beta_e",
        "nu_e",
        "delta_e",
        "delta_f",
        "delta_m",
        "delta_s",
        "gamma_s",
    ])?;
    for run in runs {
        let p = run.truth_params;
        w.write_record([
            run.index.to_string(),
            outcome_label(&run.outcome).to_string(),
            run.final_wild_total.to_string(),
            p.beta_e.to_string(),
            p.nu_e.to_string(),
            p.delta_e.to_string(),
            p.delta_f.to_string(),
            p.delta_m.to_string(),
            p.delta_s.to_string(),
            p.gamma_s.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One CSV per run (`run_NNN.csv`, columns `t,l1_total`) plus `summary.csv`.
pub fn write_evidence(dir: &Path, runs: &[EvidenceRun]) -> Result<()> {
    fs::create_dir_all(dir)?;
    for run in runs {
        let mut w = csv::Writer::from_path(dir.join(format!("run_{:03}.csv", run.index)))?;
        w.write_record(["t", "l1_total"])?;
        for (t, v) in &run.trace {
            w.write_record([t.to_string(), v.to_string()])?;
        }
        w.flush()?;
    }
    let mut w = csv::Writer::from_path(dir.join("summary.csv"))?;
    w.write_record(["run", "converged", "final_wild_total"])?;
    for run in runs {
        w.write_record([
            run.index.to_string(),
            run.converged.to_string(),
            run.final_wild_total.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trajectory_csv_round_trips_floats_exactly() {
        let traj = Trajectory {
            times: vec![0.0, 0.1 + 0.2, 1.0 / 3.0],
            states: vec![
                State::new(21910.04081632653, 5587.0604081632655, 13419.9, 0.0),
                State::new(1e-300, 2.5e17, 0.1, f64::MIN_POSITIVE),
                State::new(0.0, 0.0, 0.0, 116097.36932525509),
            ],
            controls: vec![0.0, 664.853, 1.0e-17],
            ..Default::default()
        };

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("traj.csv");
        write_trajectory_csv(&path, &traj).unwrap();
        let back = read_trajectory_csv(&path).unwrap();
        assert_eq!(back.times, traj.times);
        assert_eq!(back.controls, traj.controls);
        for (a, b) in back.states.iter().zip(&traj.states) {
            assert_eq!(
                a.as_array().map(f64::to_bits),
                b.as_array().map(f64::to_bits)
            );
        }
    }

    #[test]
    fn comparison_rows_with_missing_crossings_leave_cells_empty() {
        let rows = [
            ComparisonRow {
                gain: 22.0,
                intervention_time: Some(319.5),
                cost: Some(1.7e7),
            },
            ComparisonRow {
                gain: 9.06,
                intervention_time: None,
                cost: None,
            },
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("table.csv");
        write_comparison_csv(&path, &rows).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("gain,T_days,cost"));
        assert_eq!(lines.next(), Some("22,319.5,17000000"));
        assert_eq!(lines.next(), Some("9.06,,"));
    }
}
