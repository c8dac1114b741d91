//! Files written by a run.

use anyhow::{Context, Result};
use fwdback::scheme::{PatchRecord, StatePair};
use fwdback::verify::VerificationReport;
use serde::Serialize;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

pub struct OutDir(PathBuf);

impl OutDir {
    /// Creates the directory and checks that it takes files.
    pub fn create(path: &Path) -> Result<Self> {
        std::fs::create_dir_all(path).with_context(|| format!("cannot create output directory {}", path.display()))?;
        let probe = path.join(".write-check");
        std::fs::write(&probe, b"").with_context(|| format!("output directory {} is not writable", path.display()))?;
        std::fs::remove_file(&probe).ok();
        Ok(Self(path.to_path_buf()))
    }

    pub fn path(&self) -> &Path {
        &self.0
    }

    pub fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        let path = self.0.join(name);
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    }

    pub fn report(&self, rep: &VerificationReport) -> Result<()> {
        self.json(&format!("report_pass{}.json", rep.pass_index), rep)
    }

    /// Long-format CSV of `u` (mean restored) and `v` at the cell centres,
    /// one row per cell and time level.
    pub fn state(&self, name: &str, state: &StatePair) -> Result<()> {
        let path = self.0.join(name);
        let mut w = csv::Writer::from_path(&path).with_context(|| format!("writing {}", path.display()))?;
        let grid = &state.grid;
        let two_d = grid.dim == 2;
        if two_d {
            w.write_record(["x", "y", "t", "value", "vx", "vy"])?;
        } else {
            w.write_record(["x", "t", "value", "vx", "vy"])?;
        }
        let u = state.u_with_offset();
        for k in 0..grid.levels() {
            let t = grid.time(k);
            for j in 0..grid.ny {
                for i in 0..grid.nx {
                    let c = grid.cell(i, j);
                    let (x, y) = grid.cell_center(c);
                    let vx = 0.5 * (state.v.x[k][grid.x_face(i, j)] + state.v.x[k][grid.x_face(i + 1, j)]);
                    let vy = if two_d { 0.5 * (state.v.y[k][grid.y_face(i, j)] + state.v.y[k][grid.y_face(i, j + 1)]) } else { 0.0 };
                    let value = u.slices[k][c];
                    let mut row = vec![x.to_string()];
                    if two_d {
                        row.push(y.to_string());
                    }
                    row.extend([t, value, vx, vy].iter().map(f64::to_string));
                    w.write_record(&row)?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Patch audit keyed by box id.
    pub fn patches(&self, patches: &[PatchRecord]) -> Result<()> {
        let by_id: BTreeMap<usize, &PatchRecord> = patches.iter().map(|p| (p.id, p)).collect();
        self.json("patches.json", &by_id)
    }
}
