//! Lagrangian action of piecewise-linear paths.
//!
//! The forcing integral `int f(gamma) . dB` is defined through integration by
//! parts,
//!
//! ```text
//! f(gamma_t) . B_t - f(gamma_s) . B_s - int_s^t Df(gamma_r) gamma'_r . B_r dr,
//! ```
//!
//! which makes sense for paths that anticipate the noise. The remaining
//! Riemann integral is evaluated by composite trapezoid with `subsamples`
//! intervals on every Brownian grid piece, with `B` interpolated linearly.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::env::{grid_index, Forcing};
use crate::error::{param, Error, Result};
use crate::hamiltonian::PowerLawHamiltonian;

pub const DEFAULT_SUBSAMPLES: usize = 4;

/// Piecewise-linear path on the uniform grid `s + k dt`, `k = 0..=K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretePath {
    pub s: f64,
    pub t: f64,
    pub dim: usize,
    /// Row-major `(K + 1) x dim`.
    pub nodes: Vec<f64>,
}

impl DiscretePath {
    pub fn new(s: f64, t: f64, dim: usize, nodes: Vec<f64>) -> Result<DiscretePath> {
        if !(t > s) {
            return param(format!("path needs s < t, got s = {s}, t = {t}"));
        }
        if dim == 0 || !nodes.len().is_multiple_of(dim) || nodes.len() / dim < 2 {
            return param("a path needs at least two nodes");
        }
        Ok(DiscretePath { s, t, dim, nodes })
    }

    /// Straight line from `x` to `y` with `segments` equal pieces.
    pub fn straight(x: &[f64], y: &[f64], s: f64, t: f64, segments: usize) -> Result<DiscretePath> {
        if x.len() != y.len() || segments == 0 {
            return param("straight path needs matching endpoints and at least one segment");
        }
        let mut nodes = Vec::with_capacity((segments + 1) * x.len());
        for k in 0..=segments {
            let lam = k as f64 / segments as f64;
            nodes.extend(x.iter().zip(y).map(|(a, b)| a + (b - a) * lam));
        }
        DiscretePath::new(s, t, x.len(), nodes)
    }

    pub fn segments(&self) -> usize {
        self.nodes.len() / self.dim - 1
    }

    pub fn step(&self) -> f64 {
        (self.t - self.s) / self.segments() as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        self.s + k as f64 * self.step()
    }

    pub fn node(&self, k: usize) -> &[f64] {
        &self.nodes[k * self.dim..(k + 1) * self.dim]
    }

    pub fn velocity(&self, k: usize) -> Vec<f64> {
        let dt = self.step();
        self.node(k + 1).iter().zip(self.node(k)).map(|(b, a)| (b - a) / dt).collect()
    }

    /// Sub-path over node range `[from, to]`.
    pub fn slice(&self, from: usize, to: usize) -> Result<DiscretePath> {
        if from >= to || to > self.segments() {
            return param("invalid sub-path range");
        }
        DiscretePath::new(
            self.time(from),
            self.time(to),
            self.dim,
            self.nodes[from * self.dim..(to + 1) * self.dim].to_vec(),
        )
    }

    /// Translates every node by `-y`.
    pub fn translated(&self, y: &[f64]) -> DiscretePath {
        let mut out = self.clone();
        for node in out.nodes.chunks_mut(self.dim) {
            for (a, b) in node.iter_mut().zip(y) {
                *a -= b;
            }
        }
        out
    }

    /// Debug dump: `k,t,x1[,x2..]`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["k".to_string(), "t".to_string()];
        header.extend((1..=self.dim).map(|a| format!("x{a}")));
        w.write_record(&header)?;
        for k in 0..=self.segments() {
            let mut row = vec![k.to_string(), self.time(k).to_string()];
            row.extend(self.node(k).iter().map(|x| x.to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionBreakdown {
    pub kinetic: f64,
    pub forcing: f64,
    pub total: f64,
}

/// `sum_k H*(v_k) dt`, exact for piecewise-linear paths.
pub fn kinetic_action(path: &DiscretePath, h: &PowerLawHamiltonian) -> f64 {
    let dt = path.step();
    (0..path.segments()).map(|k| h.h_star(&path.velocity(k)) * dt).sum()
}

/// Number of Brownian steps per path step, checking grid alignment.
pub(crate) fn alignment(s: f64, step: f64, segments: usize, forcing: &Forcing) -> Result<(usize, usize)> {
    let bdt = forcing.path.dt();
    let start = grid_index(s, bdt)
        .ok_or_else(|| Error::Alignment(format!("start time {s} is off the Brownian grid (dt = {bdt})")))?;
    let ratio = grid_index(step, bdt).filter(|r| *r >= 1).ok_or_else(|| {
        Error::Alignment(format!("path step {step} is not a multiple of the Brownian step {bdt}"))
    })?;
    if start + ratio * segments > forcing.path.steps() {
        return Err(Error::Range(format!(
            "path ends at {} beyond the Brownian horizon {}",
            s + step * segments as f64,
            forcing.path.horizon()
        )));
    }
    Ok((start, ratio))
}

/// `f(x) . B(node)`.
pub(crate) fn boundary_term(forcing: &Forcing, x: &[f64], node: usize, buf: &mut [f64]) -> f64 {
    forcing.field.value(x, buf);
    buf.iter().zip(forcing.path.node(node)).map(|(f, b)| f * b).sum()
}

/// Scratch space for repeated segment integrals.
pub(crate) struct Scratch {
    grad: Vec<f64>,
    x: Vec<f64>,
    b: Vec<f64>,
}

impl Scratch {
    pub(crate) fn new(forcing: &Forcing) -> Scratch {
        let (d, m) = (forcing.field.dim(), forcing.field.channels());
        Scratch { grad: vec![0.0; d * m], x: vec![0.0; d], b: vec![0.0; m] }
    }
}

/// `int Df(gamma) gamma' . B dr` over one straight segment from `a` to `b`
/// starting at Brownian node `start` and spanning `ratio` Brownian steps.
pub(crate) fn segment_gradient_term(
    forcing: &Forcing,
    a: &[f64],
    b: &[f64],
    start: usize,
    ratio: usize,
    subsamples: usize,
    scratch: &mut Scratch,
) -> f64 {
    if forcing.field.is_constant() {
        return 0.0;
    }
    let d = a.len();
    let m = forcing.field.channels();
    let bdt = forcing.path.dt();
    let step = bdt * ratio as f64;
    let intervals = ratio * subsamples;
    let h = step / intervals as f64;
    let mut total = 0.0;
    for q in 0..=intervals {
        let lam = q as f64 / intervals as f64;
        for i in 0..d {
            scratch.x[i] = a[i] + (b[i] - a[i]) * lam;
        }
        let piece = (q / subsamples).min(ratio - 1);
        let frac = (q - piece * subsamples) as f64 / subsamples as f64;
        let (b0, b1) = (forcing.path.node(start + piece), forcing.path.node(start + piece + 1));
        for c in 0..m {
            scratch.b[c] = b0[c] + (b1[c] - b0[c]) * frac;
        }
        forcing.field.gradient(&scratch.x, &mut scratch.grad);
        let mut integrand = 0.0;
        for c in 0..m {
            let row = &scratch.grad[c * d..(c + 1) * d];
            let dir: f64 = row.iter().zip(a.iter().zip(b)).map(|(g, (x0, x1))| g * (x1 - x0)).sum();
            integrand += dir * scratch.b[c];
        }
        let w = if q == 0 || q == intervals { 0.5 } else { 1.0 };
        total += w * integrand;
    }
    // The direction above is the displacement; divide by the step to get gamma'.
    total * h / step
}

/// Forcing integral of a path aligned with the Brownian grid.
pub fn forcing_integral(path: &DiscretePath, forcing: &Forcing, subsamples: usize) -> Result<f64> {
    if subsamples == 0 {
        return param("subsamples must be at least 1");
    }
    if forcing.field.dim() != path.dim {
        return param("path and field dimensions differ");
    }
    let k_max = path.segments();
    let (start, ratio) = alignment(path.s, path.step(), k_max, forcing)?;
    let mut buf = vec![0.0; forcing.field.channels()];
    let boundary = boundary_term(forcing, path.node(k_max), start + ratio * k_max, &mut buf)
        - boundary_term(forcing, path.node(0), start, &mut buf);
    let mut scratch = Scratch::new(forcing);
    let mut integral = 0.0;
    for k in 0..k_max {
        integral += segment_gradient_term(
            forcing,
            path.node(k),
            path.node(k + 1),
            start + ratio * k,
            ratio,
            subsamples,
            &mut scratch,
        );
    }
    Ok(boundary - integral)
}

pub fn total_action(
    path: &DiscretePath,
    forcing: &Forcing,
    h: &PowerLawHamiltonian,
    subsamples: usize,
) -> Result<ActionBreakdown> {
    let kinetic = kinetic_action(path, h);
    let forcing = forcing_integral(path, forcing, subsamples)?;
    Ok(ActionBreakdown { kinetic, forcing, total: kinetic + forcing })
}
