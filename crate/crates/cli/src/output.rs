//! CSV writers. Floats are written in shortest round-trip form.

use anyhow::{Context, Result};
use consensus_forge::SimulationResult64;
use std::path::Path;

use crate::commands::RunSummary;

fn num(v: f64) -> String {
    format!("{v:?}")
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))
}

pub fn trajectory_header(n: usize, agents: usize, m_in: usize) -> Vec<String> {
    let mut cols = vec!["t".to_string()];
    cols.extend((1..=n).map(|c| format!("x0_{c}")));
    for i in 1..=agents {
        cols.extend((1..=n).map(|c| format!("x{i}_{c}")));
    }
    cols.extend((1..=agents * m_in).map(|c| format!("u_{c}")));
    cols.push("e_norm".into());
    cols.push("J_running".into());
    cols
}

/// One row per recorded sample: time, leader state, agent states, inputs
/// (agent-major), `‖e‖` and the running cost.
pub fn write_trajectory(path: &Path, r: &SimulationResult64) -> Result<()> {
    let mut w = writer(path)?;
    let n = r.leader.first().map_or(0, Vec::len);
    let agents = r.agents.first().map_or(0, Vec::len);
    let m_in = r.controls.first().and_then(|u| u.first()).map_or(0, Vec::len);
    w.write_record(trajectory_header(n, agents, m_in))?;
    let norms = r.error_norms();
    for s in 0..r.len() {
        let row = std::iter::once(&r.times[s])
            .chain(&r.leader[s])
            .chain(r.agents[s].iter().flatten())
            .chain(r.controls[s].iter().flatten())
            .chain([&norms[s], &r.running_cost[s]])
            .map(|&v| num(v));
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

/// `x_i[component] - x0[component]` for every agent of every run, against
/// time. All runs must share the time grid.
pub fn write_relative(
    path: &Path,
    runs: &[(&str, &SimulationResult64)],
    component: usize,
) -> Result<()> {
    let mut w = writer(path)?;
    let mut header = vec!["t".to_string()];
    for (label, r) in runs {
        let agents = r.agents.first().map_or(0, Vec::len);
        header.extend((1..=agents).map(|i| format!("{label}_agent{i}")));
    }
    w.write_record(&header)?;
    let samples = runs.iter().map(|(_, r)| r.len()).min().unwrap_or(0);
    for s in 0..samples {
        let mut row = vec![num(runs[0].1.times[s])];
        for (_, r) in runs {
            let lead = r.leader[s][component];
            row.extend(r.agents[s].iter().map(|x| num(x[component] - lead)));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn sweep_table(runs: &[(f64, RunSummary)]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["k", "J_direct", "bound_total", "verdict", "tail_indicator", "iqc", "sync"])?;
    for (k, r) in runs {
        let bound = r.bound.as_ref().map_or(String::new(), |b| num(b.bound_total));
        let verdict = if r.admissible { r.verdict_label() } else { "outside-class" };
        let pass = |ok: bool| if ok { "pass" } else { "fail" };
        w.write_record([
            num(*k),
            num(r.result.final_cost),
            bound,
            verdict.into(),
            num(r.tail_indicator()),
            pass(r.result.iqc_passed()).into(),
            pass(r.synchronized()).into(),
        ])?;
    }
    w.flush()?;
    let bytes = w.into_inner().map_err(|e| anyhow::anyhow!("{}", e.error()))?;
    Ok(String::from_utf8(bytes)?)
}
