//! File writers. Floats use Rust's shortest round-trip formatting, so equal
//! runs give equal bytes.

use anyhow::{Context, Result};
use gks_core::coupled::CoupledTrajectory;
use gks_core::{SpectralField, Trajectory};
use nalgebra::DMatrix;
use serde::Serialize;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

/// Output directory that remembers what it wrote, for the manifest.
pub struct OutDir {
    root: PathBuf,
    files: Vec<String>,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        Ok(OutDir {
            root: root.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = self.root.join(name);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, &text)
    }

    /// Writes `manifest.json` listing the resolved config and every file.
    pub fn finish<T: Serialize>(mut self, command: &str, config: &T) -> Result<()> {
        #[derive(Serialize)]
        struct Manifest<'a, T> {
            command: &'a str,
            version: &'a str,
            config: &'a T,
            files: &'a [String],
        }
        let files = self.files.clone();
        let m = Manifest {
            command,
            version: env!("CARGO_PKG_VERSION"),
            config,
            files: &files,
        };
        self.json("manifest.json", &m)
    }
}

fn row(out: &mut String, t: f64, values: impl IntoIterator<Item = f64>) {
    write!(out, "{t}").unwrap();
    for v in values {
        write!(out, ",{v}").unwrap();
    }
    out.push('\n');
}

fn header(prefix: &str, first: usize, count: usize) -> String {
    (first..first + count).map(|i| format!(",{prefix}{i}")).collect()
}

/// `t,x0..x{M-1}` on an `M`-point grid.
pub fn grid_csv(traj: &Trajectory, grid: usize) -> String {
    let mut out = format!("t{}\n", header("x", 0, grid));
    for (t, u) in traj.times.iter().zip(&traj.states) {
        row(&mut out, *t, u.to_grid(grid));
    }
    out
}

/// `t,f1..fm`.
pub fn controls_csv(times: &[f64], controls: &[Vec<f64>]) -> String {
    let m = controls.first().map_or(0, |f| f.len());
    let mut out = format!("t{}\n", header("f", 1, m));
    for (t, f) in times.iter().zip(controls) {
        row(&mut out, *t, f.iter().copied());
    }
    out
}

/// `t,<name>` for one scalar series per column name.
pub fn series_csv(names: &[&str], times: &[f64], columns: &[&[f64]]) -> String {
    let mut out = format!("t,{}\n", names.join(","));
    for (i, t) in times.iter().enumerate() {
        row(&mut out, *t, columns.iter().map(|c| c[i]));
    }
    out
}

/// Rows of the matrix, columns `k0..`.
pub fn matrix_csv(m: &DMatrix<f64>) -> String {
    let mut out = (0..m.ncols()).map(|j| format!("k{j}")).collect::<Vec<_>>().join(",");
    out.push('\n');
    for i in 0..m.nrows() {
        let r: Vec<String> = (0..m.ncols()).map(|j| format!("{}", m[(i, j)])).collect();
        out.push_str(&r.join(","));
        out.push('\n');
    }
    out
}

/// Plain list of the `2N + 1` coefficients, one per line.
pub fn coefficients_txt(u: &SpectralField) -> String {
    let mut out = String::new();
    for c in u.coeffs() {
        writeln!(out, "{c}").unwrap();
    }
    out
}

/// `t,u1_x0..,u2_x0..`.
pub fn coupled_grid_csv(traj: &CoupledTrajectory, grid: usize) -> String {
    let mut out = format!("t{}{}\n", header("u1_x", 0, grid), header("u2_x", 0, grid));
    for (t, u) in traj.times.iter().zip(&traj.states) {
        let mut g = u.u1.to_grid(grid);
        g.extend(u.u2.to_grid(grid));
        row(&mut out, *t, g);
    }
    out
}

/// `t,u1_f1..,u2_f1..` with `m1` controls on the first field.
pub fn coupled_controls_csv(traj: &CoupledTrajectory, m1: usize) -> String {
    let m = traj.controls.first().map_or(0, |f| f.len());
    let mut out = format!("t{}{}\n", header("u1_f", 1, m1), header("u2_f", 1, m - m1));
    for (t, f) in traj.times.iter().zip(&traj.controls) {
        row(&mut out, *t, f.iter().copied());
    }
    out
}
