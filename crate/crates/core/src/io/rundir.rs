//! Run directories: metadata, series CSV, per-step report CSV, stored
//! snapshots, and failure dumps.
//!
//! ```text
//! <run>/metadata.json          resolved config, certificates, scheme flags, version, status
//! <run>/series.csv             functional series, one row per committed state
//! <run>/steps.csv              per-step solver report
//! <run>/report.json            warnings, hard violations, mass-identity residuals
//! <run>/history/SSSSSS_X.upas  snapshot of species X after step SSSSSS
//! <run>/failure/SSSSSS_X.upas  state that triggered a halt
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::functionals::{FieldHistory, FunctionalSeries};
use crate::io::config::RunConfig;
use crate::io::snapshot::{read_snapshot, write_atomic, write_snapshot};
use crate::model::{BoundCertificates, Species};
use crate::monitors::{L1Check, Violation};
use crate::stepper::{OutputSink, StateFields, StepReport};

pub const HISTORY_DIR: &str = "history";
pub const FAILURE_DIR: &str = "failure";

/// Output sink writing snapshots into a run directory.
#[derive(Debug)]
pub struct RunDirectory {
    root: PathBuf,
    snapshot_every: usize,
    final_step: usize,
    steps_csv: String,
}

impl RunDirectory {
    /// Creates `root`, which must not exist or be empty.
    pub fn create(root: &Path, snapshot_every: usize, final_step: usize) -> Result<Self> {
        if root.exists() {
            let mut entries = fs::read_dir(root).map_err(|e| Error::io(root, e))?;
            if entries.next().is_some() {
                return Err(Error::Config(format!("run directory {} exists and is not empty", root.display())));
            }
        }
        fs::create_dir_all(root.join(HISTORY_DIR)).map_err(|e| Error::io(root, e))?;
        Ok(RunDirectory {
            root: root.to_path_buf(),
            snapshot_every,
            final_step,
            steps_csv: String::from(
                "step,t,dt,picard_iterations,picard_converged,picard_residual,stability_C,stability_N,cg_C,cg_N,cg_A,cg_I,cg_P,clipped_cells\n",
            ),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn write_state(&self, dir: &Path, step: usize, state: &StateFields) -> Result<()> {
        for s in Species::ALL {
            write_snapshot(&dir.join(snapshot_name(step, s)), state.get(s), state.time(), Some(s))?;
        }
        Ok(())
    }

    pub fn write_metadata(&self, meta: &RunMetadata) -> Result<()> {
        let text = serde_json::to_string_pretty(meta).map_err(|e| Error::Config(format!("cannot encode metadata: {e}")))?;
        write_atomic(&self.root.join("metadata.json"), text.as_bytes())
    }

    pub fn write_series(&self, series: &FunctionalSeries) -> Result<()> {
        write_atomic(&self.root.join("series.csv"), series_csv(series).as_bytes())
    }

    pub fn write_report(&self, report: &RunReport) -> Result<()> {
        let text = serde_json::to_string_pretty(report).map_err(|e| Error::Config(format!("cannot encode report: {e}")))?;
        write_atomic(&self.root.join("report.json"), text.as_bytes())
    }

    pub fn write_steps(&self) -> Result<()> {
        write_atomic(&self.root.join("steps.csv"), self.steps_csv.as_bytes())
    }
}

impl OutputSink for RunDirectory {
    fn record(&mut self, step: usize, state: &StateFields, report: Option<&StepReport>) -> Result<()> {
        if let Some(r) = report {
            let _ = writeln!(
                self.steps_csv,
                "{step},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                state.time(),
                r.dt_used,
                r.picard_iterations,
                r.picard_converged,
                r.picard_residual_history.last().copied().unwrap_or(0.0),
                r.stability_numbers[0],
                r.stability_numbers[1],
                r.linear_solver_iterations[0],
                r.linear_solver_iterations[1],
                r.linear_solver_iterations[2],
                r.linear_solver_iterations[3],
                r.linear_solver_iterations[4],
                r.clipped_cells
            );
        }
        let due = step == 0 || step == self.final_step || (self.snapshot_every > 0 && step.is_multiple_of(self.snapshot_every));
        if due {
            self.write_state(&self.root.join(HISTORY_DIR), step, state)?;
        }
        Ok(())
    }

    fn dump_failure(&mut self, step: usize, state: &StateFields) -> Result<Option<PathBuf>> {
        let dir = self.root.join(FAILURE_DIR);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        self.write_state(&dir, step, state)?;
        Ok(Some(dir))
    }
}

pub fn snapshot_name(step: usize, s: Species) -> String {
    format!("{step:06}_{s}.upas")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    MonitorHalt,
    Failed,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunMetadata {
    pub code_version: String,
    pub config: RunConfig,
    pub certificates: BoundCertificates,
    pub positivity_enforced: bool,
    pub status: RunStatus,
    pub steps_completed: usize,
    pub final_time: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct RunReport {
    pub warnings: Vec<Violation>,
    pub hard_violations: Vec<Violation>,
    pub l1_checks: Vec<L1Check>,
}

/// Column order: `t`, per species `L1_X,L2_X,Linf_X,min_X`, per species
/// `supL2_X,gradsq_X`, then `margin_A,margin_V` (empty without a ceiling).
pub fn series_csv(series: &FunctionalSeries) -> String {
    let mut s = String::from("t");
    for sp in Species::ALL {
        let _ = write!(s, ",L1_{sp},L2_{sp},Linf_{sp},min_{sp}");
    }
    for sp in Species::ALL {
        let _ = write!(s, ",supL2_{sp},gradsq_{sp}");
    }
    s.push_str(",margin_A,margin_V\n");
    for r in &series.records {
        let _ = write!(s, "{}", r.t);
        for n in &r.species {
            let _ = write!(s, ",{},{},{},{}", n.l1, n.l2, n.linf, n.min);
        }
        for n in &r.species {
            let _ = write!(s, ",{},{}", n.sup_l2, n.grad_sq_integral);
        }
        let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
        let _ = writeln!(s, ",{},{}", opt(r.ceiling_margin_a), opt(r.ceiling_margin_v));
    }
    s
}

/// Reads stored snapshots from a run directory (or its `history` folder).
///
/// Species present at every stored step are kept; times come from the headers.
pub fn load_history(dir: &Path) -> Result<FieldHistory> {
    let hist = if dir.join(HISTORY_DIR).is_dir() { dir.join(HISTORY_DIR) } else { dir.to_path_buf() };
    let mut steps: BTreeMap<usize, BTreeMap<Species, PathBuf>> = BTreeMap::new();
    for entry in fs::read_dir(&hist).map_err(|e| Error::io(&hist, e))? {
        let path = entry.map_err(|e| Error::io(&hist, e))?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else { continue };
        let Some(stem) = name.strip_suffix(".upas") else { continue };
        let Some((step, sp)) = stem.split_once('_') else { continue };
        if sp.len() != 1 {
            continue;
        }
        let (Ok(step), Some(sp)) = (step.parse::<usize>(), sp.chars().next().and_then(Species::from_letter)) else { continue };
        steps.entry(step).or_default().insert(sp, path.clone());
    }
    if steps.is_empty() {
        return Err(Error::Diagnostic(format!("no snapshots found in {}", hist.display())));
    }
    let species: Vec<Species> = Species::ALL.into_iter().filter(|s| steps.values().all(|m| m.contains_key(s))).collect();
    if species.is_empty() {
        return Err(Error::Diagnostic("no species is stored at every step".into()));
    }
    let mut history: Option<FieldHistory> = None;
    for files in steps.values() {
        let snaps: Vec<_> = species.iter().map(|s| read_snapshot(&files[s])).collect::<Result<_>>()?;
        let t = snaps[0].time;
        let grid = *snaps[0].field.grid();
        let h = history.get_or_insert_with(|| FieldHistory::new(grid, &species));
        if snaps.iter().any(|s| *s.field.grid() != *h.grid() || s.time != t) {
            return Err(Error::Diagnostic("stored snapshots disagree on grid or time".into()));
        }
        let fields: Vec<(Species, &[f64])> = species.iter().zip(&snaps).map(|(s, sn)| (*s, sn.field.values())).collect();
        h.push(t, &fields)?;
    }
    Ok(history.expect("non-empty"))
}
