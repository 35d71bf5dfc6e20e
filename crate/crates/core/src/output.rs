//! Snapshots in primitive variables and their CSV form.
//!
//! File layout:
//!
//! ```text
//! # t=<seconds> alpha=<alpha> delta=<delta>
//! x,rho_m,v_m,rho_c,v_c
//! 2.5,0.09,10.9391765,0.01,13.6775676
//! ```
//!
//! Values carry 9 significant digits.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{Closures, GridState};

pub const CSV_HEADER: &str = "x,rho_m,v_m,rho_c,v_c";

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    /// Simulation time (s).
    pub time: f64,
    /// Cell centres (m).
    pub x: Vec<f64>,
    pub rho_m: Vec<f64>,
    pub v_m: Vec<f64>,
    pub rho_c: Vec<f64>,
    pub v_c: Vec<f64>,
}

impl Snapshot {
    pub fn from_grid(grid: &GridState, closures: &Closures, time: f64) -> Self {
        let n = grid.len();
        let mut s = Snapshot {
            time,
            x: Vec::with_capacity(n),
            rho_m: Vec::with_capacity(n),
            v_m: Vec::with_capacity(n),
            rho_c: Vec::with_capacity(n),
            v_c: Vec::with_capacity(n),
        };
        for (i, cell) in grid.cells.iter().enumerate() {
            s.x.push(grid.x(i));
            s.rho_m.push(cell.moto.rho);
            s.v_m.push(cell.moto.velocity(&closures.moto));
            s.rho_c.push(cell.car.rho);
            s.v_c.push(cell.car.velocity(&closures.car));
        }
        s
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Total density `rho_m + rho_c` per cell.
    pub fn total_density(&self) -> impl Iterator<Item = f64> + '_ {
        self.rho_m.iter().zip(&self.rho_c).map(|(m, c)| m + c)
    }

    /// `max - min` of the total density.
    pub fn density_spread(&self) -> f64 {
        let (lo, hi) = self
            .total_density()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r), hi.max(r)));
        if lo.is_finite() {
            hi - lo
        } else {
            0.0
        }
    }

    /// `(sum rho_m dx, sum rho_c dx)` using the cell spacing.
    pub fn class_masses(&self) -> (f64, f64) {
        let dx = if self.x.len() > 1 {
            self.x[1] - self.x[0]
        } else {
            1.0
        };
        (
            self.rho_m.iter().sum::<f64>() * dx,
            self.rho_c.iter().sum::<f64>() * dx,
        )
    }

    fn check_lengths(&self) -> Result<()> {
        let n = self.x.len();
        if [self.rho_m.len(), self.v_m.len(), self.rho_c.len(), self.v_c.len()]
            .iter()
            .any(|&l| l != n)
        {
            return Err(Error::Invariant("snapshot columns differ in length".into()));
        }
        Ok(())
    }
}

/// `v` with 9 significant digits, fixed notation for moderate magnitudes.
pub fn format_sig9(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    let sci = format!("{v:.8e}");
    let exp: i32 = sci
        .rsplit_once('e')
        .and_then(|(_, e)| e.parse().ok())
        .unwrap_or(0);
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        let fixed = format!("{v:.decimals$}");
        if fixed.contains('.') {
            fixed.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            fixed
        }
    } else {
        sci
    }
}

pub fn write_snapshot_csv(snapshot: &Snapshot, alpha: f64, delta: f64, path: &Path) -> Result<()> {
    snapshot.check_lengths()?;
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(
        w,
        "# t={} alpha={} delta={}",
        format_sig9(snapshot.time),
        format_sig9(alpha),
        format_sig9(delta)
    )?;
    writeln!(w, "{CSV_HEADER}")?;
    for i in 0..snapshot.len() {
        writeln!(
            w,
            "{},{},{},{},{}",
            format_sig9(snapshot.x[i]),
            format_sig9(snapshot.rho_m[i]),
            format_sig9(snapshot.v_m[i]),
            format_sig9(snapshot.rho_c[i]),
            format_sig9(snapshot.v_c[i])
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a file written by [`write_snapshot_csv`]; returns `(snapshot, alpha, delta)`.
pub fn read_snapshot_csv(path: &Path) -> Result<(Snapshot, f64, f64)> {
    let reader = BufReader::new(fs::File::open(path)?);
    let bad = |msg: String| Error::Invariant(format!("{}: {msg}", path.display()));
    let mut lines = reader.lines();
    let comment = lines.next().ok_or_else(|| bad("empty file".into()))??;
    let mut meta = [f64::NAN; 3];
    for part in comment.trim_start_matches('#').split_whitespace() {
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| bad(format!("bad comment field `{part}`")))?;
        let idx = match key {
            "t" => 0,
            "alpha" => 1,
            "delta" => 2,
            _ => continue,
        };
        meta[idx] = value.parse().map_err(|_| bad(format!("bad number `{value}`")))?;
    }
    let header = lines.next().ok_or_else(|| bad("missing header".into()))??;
    if header.trim() != CSV_HEADER {
        return Err(bad(format!("unexpected header `{header}`")));
    }
    let mut s = Snapshot {
        time: meta[0],
        x: vec![],
        rho_m: vec![],
        v_m: vec![],
        rho_c: vec![],
        v_c: vec![],
    };
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let vals = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| bad(format!("{e} in `{line}`")))?;
        if vals.len() != 5 {
            return Err(bad(format!("expected 5 columns in `{line}`")));
        }
        s.x.push(vals[0]);
        s.rho_m.push(vals[1]);
        s.v_m.push(vals[2]);
        s.rho_c.push(vals[3]);
        s.v_c.push(vals[4]);
    }
    Ok((s, meta[1], meta[2]))
}
