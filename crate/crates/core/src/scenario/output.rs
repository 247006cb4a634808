//! Run artifacts: CSV logs, a JSON schema sidecar, the resolved config and
//! a run summary.
//!
//! | file             | rows                         | columns                                   |
//! |------------------|------------------------------|-------------------------------------------|
//! | `trajectory.csv` | every `log_interval` steps   | `time, q_0.., u_0..`                      |
//! | `diagnostics.csv`| every step                   | Newton and energy diagnostics             |
//! | `probe.csv`      | every step (if probes)       | `time, x_n, y_n, z_n` per probe node      |
//! | `control.csv`    | every controller update      | residual and increment norms, RMSE        |

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use super::ScenarioConfig;
use crate::control::ControlRecord;
use crate::error::{Result, SimError};
use crate::stepper::{Simulation, StepReport};
use crate::vector::node_pos;

const DIAGNOSTIC_COLUMNS: [&str; 12] = [
    "step",
    "time",
    "iterations",
    "residual",
    "substeps",
    "active_contacts",
    "max_penetration",
    "kinetic",
    "elastic",
    "gravity",
    "contact",
    "total_energy",
];

const CONTROL_COLUMNS: [&str; 5] = ["time", "residual_rms", "increment_rms", "rmse", "integral_max"];

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct RunSummary {
    pub name: String,
    pub status: String,
    pub steps: usize,
    pub frames: usize,
    pub final_time: f64,
    pub wall_seconds: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub struct OutputWriter {
    dir: PathBuf,
    interval: usize,
    probes: Vec<usize>,
    trajectory: Option<BufWriter<File>>,
    diagnostics: BufWriter<File>,
    probe: Option<BufWriter<File>>,
    summary: RunSummary,
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn row(w: &mut impl Write, vals: impl IntoIterator<Item = f64>) -> Result<()> {
    let mut first = true;
    for v in vals {
        if !first {
            w.write_all(b",")?;
        }
        write!(w, "{v}")?;
        first = false;
    }
    w.write_all(b"\n")?;
    Ok(())
}

impl OutputWriter {
    /// Creates `dir`, writes the resolved config, the schema and the first
    /// trajectory frame.
    pub fn create(dir: &Path, cfg: &ScenarioConfig, sim: &Simulation) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("resolved.toml"), cfg.to_toml()?)?;
        let n = sim.robot.total_dofs();
        let probes = cfg.output.probes.clone();

        let q_cols: Vec<String> = (0..n).map(|i| format!("q{i}")).chain((0..n).map(|i| format!("u{i}"))).collect();
        let probe_cols: Vec<String> = probes
            .iter()
            .flat_map(|p| ["x", "y", "z"].map(|a| format!("{a}{p}")))
            .collect();
        let traj_cols: Vec<String> = std::iter::once("time".to_string()).chain(q_cols.iter().cloned()).collect();
        let probe_all: Vec<String> = std::iter::once("time".to_string()).chain(probe_cols.iter().cloned()).collect();
        let schema = json!({
            "format_version": 1,
            "scenario": cfg.name,
            "delimiter": ",",
            "units": "SI (m, s, kg, N, J, rad)",
            "dt": cfg.sim.dt,
            "log_interval": cfg.output.log_interval,
            "dofs": {
                "nodes": sim.robot.n_nodes(),
                "twist_angles": sim.robot.layout.n_twist_edges,
                "midedge_angles": sim.robot.layout.n_xi_edges,
                "order": "x,y,z of every node, then twist angles, then mid-edge angles",
            },
            "files": {
                "trajectory.csv": if cfg.output.trajectory {
                    json!({"rows": "every log_interval steps, starting at t = 0", "columns": traj_cols})
                } else { json!(null) },
                "diagnostics.csv": {"rows": "every step", "columns": DIAGNOSTIC_COLUMNS},
                "probe.csv": if probes.is_empty() { json!(null) } else {
                    json!({"rows": "every step, starting at t = 0", "columns": probe_all})
                },
                "control.csv": if cfg.controller.is_some() {
                    json!({"rows": "every controller update", "columns": CONTROL_COLUMNS, "note": "rmse is empty without a reference shape"})
                } else { json!(null) },
                "summary.json": {"rows": "one object"},
            },
        });
        let text = serde_json::to_string_pretty(&schema).map_err(|e| SimError::Config(e.to_string()))?;
        std::fs::write(dir.join("schema.json"), text)?;

        let trajectory = if cfg.output.trajectory {
            let mut w = create(dir, "trajectory.csv")?;
            writeln!(w, "time,{}", q_cols.join(","))?;
            Some(w)
        } else {
            None
        };
        let mut diagnostics = create(dir, "diagnostics.csv")?;
        writeln!(diagnostics, "{}", DIAGNOSTIC_COLUMNS.join(","))?;
        let probe = if probes.is_empty() {
            None
        } else {
            let mut w = create(dir, "probe.csv")?;
            writeln!(w, "time,{}", probe_cols.join(","))?;
            Some(w)
        };
        let mut out = Self {
            dir: dir.to_path_buf(),
            interval: cfg.output.log_interval,
            probes,
            trajectory,
            diagnostics,
            probe,
            summary: RunSummary {
                name: cfg.name.clone(),
                status: "running".into(),
                ..Default::default()
            },
        };
        out.frame(sim)?;
        out.probe_row(sim)?;
        Ok(out)
    }

    fn frame(&mut self, sim: &Simulation) -> Result<()> {
        if let Some(w) = self.trajectory.as_mut() {
            let s = &sim.state;
            row(w, std::iter::once(s.time).chain(s.q.iter().copied()).chain(s.u.iter().copied()))?;
        }
        self.summary.frames += 1;
        Ok(())
    }

    fn probe_row(&mut self, sim: &Simulation) -> Result<()> {
        if let Some(w) = self.probe.as_mut() {
            let q = &sim.state.q;
            let vals = self.probes.iter().flat_map(|&n| node_pos(q, n).to_array());
            row(w, std::iter::once(sim.state.time).chain(vals))?;
        }
        Ok(())
    }

    /// Logs one committed step.
    pub fn record(&mut self, sim: &Simulation, r: &StepReport) -> Result<()> {
        let e = sim.energy()?;
        row(
            &mut self.diagnostics,
            [
                r.step as f64,
                r.time,
                r.iterations as f64,
                r.residual,
                r.substeps as f64,
                r.active_contacts as f64,
                r.max_penetration,
                e.kinetic,
                e.elastic,
                e.gravity,
                e.contact,
                e.total(),
            ],
        )?;
        self.probe_row(sim)?;
        self.summary.steps = r.step;
        self.summary.final_time = r.time;
        if r.step % self.interval == 0 {
            self.frame(sim)?;
        }
        Ok(())
    }

    /// Writes controller records and the summary, and flushes everything.
    pub fn finish(
        &mut self,
        sim: &Simulation,
        records: &[ControlRecord],
        wall_seconds: f64,
        error: Option<&SimError>,
    ) -> Result<()> {
        if !records.is_empty() {
            let mut w = create(&self.dir, "control.csv")?;
            writeln!(w, "{}", CONTROL_COLUMNS.join(","))?;
            for r in records {
                let rmse = r.rmse.map(|v| v.to_string()).unwrap_or_default();
                writeln!(w, "{},{},{},{},{}", r.time, r.residual_rms, r.increment_rms, rmse, r.integral_max)?;
            }
            w.flush()?;
        }
        self.summary.final_time = sim.state.time;
        self.summary.wall_seconds = wall_seconds;
        self.summary.status = if error.is_some() { "failed" } else { "completed" }.into();
        self.summary.error = error.map(|e| e.to_string());
        if let Some(w) = self.trajectory.as_mut() {
            w.flush()?;
        }
        if let Some(w) = self.probe.as_mut() {
            w.flush()?;
        }
        self.diagnostics.flush()?;
        let text = serde_json::to_string_pretty(&self.summary).map_err(|e| SimError::Config(e.to_string()))?;
        std::fs::write(self.dir.join("summary.json"), text)?;
        Ok(())
    }

    pub fn summary(&self) -> &RunSummary {
        &self.summary
    }
}
