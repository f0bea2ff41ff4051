//! CSV and summary artifacts. All numbers go through [`fmt_num`]; lines end
//! in `\n` and the decimal separator is always `.`.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::ArrayView2;

use crate::grid::{ControlTrajectory, GridSpec};
use crate::mc_oracle::Snapshot;
use crate::scenario::ScenarioRun;
use crate::sqh::SqhTrace;
use crate::Result;

/// Snapshot times used when none are requested.
pub const DEFAULT_SNAPSHOTS: [f64; 6] = [0.0, 1.25, 2.5, 3.75, 5.0, 10.0];

/// Ten significant digits, positional for moderate magnitudes and
/// scientific otherwise.
pub fn fmt_num(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{x:.9e}");
    let exp: i32 = sci.split_once('e').and_then(|(_, e)| e.parse().ok()).unwrap_or(0);
    if (-5..10).contains(&exp) {
        let decimals = (9 - exp).max(0) as usize;
        format!("{x:.decimals$}")
    } else {
        sci
    }
}

pub fn density_filename(t: f64) -> String {
    format!("density_t{t:.2}.csv")
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

/// Nodal field with header `x1,x2,<value_name>`, `x1` varying slowest.
pub fn write_field_csv(path: &Path, field: &ArrayView2<f64>, grid: &GridSpec, value_name: &str) -> Result<()> {
    grid.check_slice(field)?;
    let mut w = create(path)?;
    writeln!(w, "x1,x2,{value_name}")?;
    for ((i, j), v) in field.indexed_iter() {
        writeln!(w, "{},{},{}", fmt_num(grid.coord(i)), fmt_num(grid.coord(j)), fmt_num(*v))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_controls_csv(path: &Path, u: &ControlTrajectory, grid: &GridSpec) -> Result<()> {
    u.check_grid(grid)?;
    let mut w = create(path)?;
    writeln!(w, "t,alpha,v,eta")?;
    for (k, c) in u.values.iter().enumerate() {
        writeln!(
            w,
            "{},{},{},{}",
            fmt_num(grid.time(k)),
            fmt_num(c.u1),
            fmt_num(c.u2),
            fmt_num(c.u3)
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trace_csv(path: &Path, trace: &SqhTrace) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "iter,J,tau,eps,accepted,retries")?;
    for r in &trace.records {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.iter,
            fmt_num(r.j),
            fmt_num(r.tau),
            fmt_num(r.eps),
            u8::from(r.accepted),
            r.retries
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_dynamics_csv(path: &Path, rows: &[[f64; 4]]) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "t,S,I,R")?;
    for r in rows {
        writeln!(w, "{},{},{},{}", fmt_num(r[0]), fmt_num(r[1]), fmt_num(r[2]), fmt_num(r[3]))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_points_csv(path: &Path, snap: &Snapshot) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "path_id,x1,x2")?;
    for (id, x) in snap.points.iter().enumerate() {
        writeln!(w, "{id},{},{}", fmt_num(x.x1), fmt_num(x.x2))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary(path: &Path, run: &ScenarioRun) -> Result<()> {
    let mut w = create(path)?;
    let b = &run.breakdown;
    writeln!(w, "label={}", run.config.label)?;
    match &run.trace {
        Some(t) => {
            writeln!(w, "status={}", t.status)?;
            writeln!(w, "accepted_iterations={}", t.accepted_count())?;
            writeln!(w, "trials={}", t.records.len())?;
            writeln!(w, "final_eps={}", fmt_num(t.final_eps))?;
        }
        None => writeln!(w, "status=not_optimized")?,
    }
    writeln!(w, "J={}", fmt_num(b.total()))?;
    writeln!(w, "control_cost={}", fmt_num(b.control))?;
    writeln!(w, "running_cost={}", fmt_num(b.running))?;
    writeln!(w, "terminal_cost={}", fmt_num(b.terminal))?;
    w.flush()?;
    Ok(())
}

/// Write every artifact of `run` into `dir` (created if needed) and return
/// the paths written.
pub fn write_run(run: &ScenarioRun, dir: &Path, snapshots: &[f64]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let grid = &run.config.grid;
    let mut written = Vec::new();
    let mut put = |name: String| {
        let p = dir.join(name);
        written.push(p.clone());
        p
    };
    write_controls_csv(&put("controls.csv".into()), &run.control, grid)?;
    if let Some(t) = &run.trace {
        write_trace_csv(&put("trace.csv".into()), t)?;
    }
    write_dynamics_csv(&put("dynamics.csv".into()), &run.dynamics)?;
    for &t in snapshots {
        let f = run.density.at_time(t)?;
        write_field_csv(&put(density_filename(t)), &f.view(), grid, "f")?;
    }
    write_summary(&put("summary.txt".into()), run)?;
    Ok(written)
}
