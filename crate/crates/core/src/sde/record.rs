use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fmt_f64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Integrator {
    EulerMaruyama,
    Galerkin,
    DossSussmann,
}

impl Integrator {
    pub fn tag(&self) -> &'static str {
        match self {
            Integrator::EulerMaruyama => "em",
            Integrator::Galerkin => "galerkin",
            Integrator::DossSussmann => "doss-sussmann",
        }
    }
}

/// Grid values or mode coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StateKind {
    Grid,
    Modes,
}

/// Per-snapshot diagnostics. `None` where the state is not in `S`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Diagnostics {
    pub theta: Vec<Option<f64>>,
    pub norm_h: Vec<f64>,
    pub norm_hm1: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub integrator: Integrator,
    pub seed: u64,
    pub dt: f64,
    pub steps: usize,
    pub kind: StateKind,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// Empty when diagnostics were switched off.
    pub diagnostics: Diagnostics,
    /// H-norm of the part of `u₀` outside the simulated modes (Galerkin only).
    pub projection_residual: Option<f64>,
}

/// The CSV view of a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryTable {
    pub kind: StateKind,
    pub times: Vec<f64>,
    pub diagnostics: Diagnostics,
    pub states: Vec<Vec<f64>>,
}

fn opt(v: Option<f64>) -> String {
    fmt_f64(v.unwrap_or(f64::NAN))
}

impl TrajectoryRecord {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> &[f64] {
        self.states.last().map(|s| s.as_slice()).unwrap_or(&[])
    }

    pub fn has_diagnostics(&self) -> bool {
        !self.diagnostics.norm_h.is_empty()
    }

    /// Checks the record invariants: strictly increasing times and matching lengths.
    pub fn check(&self) -> Result<()> {
        if self.times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter("times not strictly increasing".into()));
        }
        let n = self.times.len();
        if self.states.len() != n {
            return Err(Error::DimensionMismatch { left: self.states.len(), right: n });
        }
        let d = &self.diagnostics;
        if self.has_diagnostics() && (d.norm_h.len() != n || d.theta.len() != n || d.norm_hm1.len() != n) {
            return Err(Error::DimensionMismatch { left: d.norm_h.len(), right: n });
        }
        Ok(())
    }

    /// `t,theta,norm_h,norm_hm1,u_0..u_{n-1}` (or `c_1..c_N` for modes).
    /// Missing diagnostics are written as `NaN`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let width = self.states.first().map_or(0, |s| s.len());
        let mut header = vec!["t".to_string(), "theta".into(), "norm_h".into(), "norm_hm1".into()];
        header.extend((0..width).map(|j| match self.kind {
            StateKind::Grid => format!("u_{j}"),
            StateKind::Modes => format!("c_{}", j + 1),
        }));
        writeln!(out, "{}", header.join(","))?;
        let diag = self.has_diagnostics();
        for (k, t) in self.times.iter().enumerate() {
            let mut row = vec![fmt_f64(*t)];
            if diag {
                row.push(opt(self.diagnostics.theta[k]));
                row.push(fmt_f64(self.diagnostics.norm_h[k]));
                row.push(opt(self.diagnostics.norm_hm1[k]));
            } else {
                row.extend(std::iter::repeat_n(fmt_f64(f64::NAN), 3));
            }
            row.extend(self.states[k].iter().map(|v| fmt_f64(*v)));
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn to_table(&self) -> TrajectoryTable {
        let n = self.times.len();
        let diagnostics = if self.has_diagnostics() {
            self.diagnostics.clone()
        } else {
            Diagnostics { theta: vec![None; n], norm_h: vec![f64::NAN; n], norm_hm1: vec![None; n] }
        };
        TrajectoryTable { kind: self.kind, times: self.times.clone(), diagnostics, states: self.states.clone() }
    }
}

impl TrajectoryTable {
    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::InsufficientData("empty trajectory CSV".into()))?
            .map_err(|e| Error::InvalidParameter(e.to_string()))?;
        let cols: Vec<&str> = header.split(',').collect();
        if cols.len() < 4 || cols[..4] != ["t", "theta", "norm_h", "norm_hm1"] {
            return Err(Error::InvalidParameter(format!("unexpected trajectory header: {header}")));
        }
        let kind = match cols.get(4) {
            Some(c) if c.starts_with("c_") => StateKind::Modes,
            _ => StateKind::Grid,
        };
        let mut table = TrajectoryTable { kind, times: vec![], diagnostics: Diagnostics::default(), states: vec![] };
        for (lineno, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::InvalidParameter(e.to_string()))?;
            if line.is_empty() {
                continue;
            }
            let vals = line
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::InvalidParameter(format!("line {}: {e}", lineno + 2)))?;
            if vals.len() != cols.len() {
                return Err(Error::DimensionMismatch { left: vals.len(), right: cols.len() });
            }
            let some = |v: f64| if v.is_nan() { None } else { Some(v) };
            table.times.push(vals[0]);
            table.diagnostics.theta.push(some(vals[1]));
            table.diagnostics.norm_h.push(vals[2]);
            table.diagnostics.norm_hm1.push(some(vals[3]));
            table.states.push(vals[4..].to_vec());
        }
        Ok(table)
    }
}
