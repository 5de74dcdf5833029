//! Random Lagrangian `L(x, y, s, t)` by dynamic programming on a space-time
//! lattice, with local descent to polish lattice minimizers.
//!
//! Along a lattice path the boundary terms of the forcing integral telescope,
//! so the Bellman recursion runs on the edge cost `H*(w) dt - int Df(gamma)
//! gamma' . B` and adds `f . B` at the two ends. The same min-plus sweep
//! started from `u0` on every cell is the Hopf-Lax solver.

use serde::{Deserialize, Serialize};

use crate::action::{
    alignment, boundary_term, segment_gradient_term, total_action, ActionBreakdown, DiscretePath,
    Scratch, DEFAULT_SUBSAMPLES,
};
use crate::env::{Forcing, ScaledField};
use crate::error::{param, Error, Result};
use crate::hamiltonian::PowerLawHamiltonian;

fn default_subsamples() -> usize {
    DEFAULT_SUBSAMPLES
}

/// Space-time lattice. Cells sit at `i h + drift t`; with a nonzero drift the
/// lattice moves with constant velocity, which keeps `T v` on cell `0` for
/// every horizon `T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeSpec {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub h: f64,
    pub dt: f64,
    pub v_max: f64,
    #[serde(default = "default_subsamples")]
    pub subsamples: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub drift: Vec<f64>,
}

impl LatticeSpec {
    pub fn cube(d: usize, half_width: f64, h: f64, dt: f64, v_max: f64) -> LatticeSpec {
        LatticeSpec {
            lower: vec![-half_width; d],
            upper: vec![half_width; d],
            h,
            dt,
            v_max,
            subsamples: DEFAULT_SUBSAMPLES,
            drift: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn drift_or_zero(&self) -> Vec<f64> {
        if self.drift.is_empty() {
            vec![0.0; self.dim()]
        } else {
            self.drift.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.lower.len();
        if d == 0 || d > 2 {
            return param(format!("lattice dimension {d} unsupported; only d = 1, 2"));
        }
        if self.upper.len() != d || (!self.drift.is_empty() && self.drift.len() != d) {
            return param("lattice lower/upper/drift lengths differ");
        }
        if self.lower.iter().zip(&self.upper).any(|(a, b)| !(a < b)) {
            return param("lattice box needs lower < upper on every axis");
        }
        if !(self.h > 0.0) || !(self.dt > 0.0) || !(self.v_max > 0.0) {
            return param("lattice h, dt and v_max must be positive");
        }
        if self.v_max * self.dt < self.h * (1.0 - 1e-12) {
            return param(format!(
                "v_max dt = {} is below h = {}; paths could not move",
                self.v_max * self.dt,
                self.h
            ));
        }
        if self.subsamples == 0 {
            return param("subsamples must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "dp")]
    Dp,
    #[serde(rename = "dp+descent")]
    DpDescent,
    #[serde(rename = "straight-line")]
    StraightLine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagrangianEstimate {
    /// Action of `minimizer`, recomputed with the path evaluator.
    pub value: f64,
    pub minimizer: DiscretePath,
    pub breakdown: ActionBreakdown,
    pub method: Method,
    /// Raw Bellman value on the lattice (equal to `value` up to rounding).
    pub lattice_value: f64,
    pub subsamples: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

const ALIGN_TOL: f64 = 1e-9;

pub(crate) struct Geometry {
    pub d: usize,
    pub h: f64,
    pub dt: f64,
    pub lo: [i64; 2],
    pub n: [usize; 2],
    pub drift: [f64; 2],
    pub offsets: Vec<[i64; 2]>,
    pub vel: Vec<[f64; 2]>,
    pub kin: Vec<f64>,
    pub max_offset: f64,
    pub subsamples: usize,
}

impl Geometry {
    pub fn new(spec: &LatticeSpec, ham: &PowerLawHamiltonian) -> Result<Geometry> {
        spec.validate()?;
        let d = spec.dim();
        let mut lo = [0i64; 2];
        let mut n = [1usize; 2];
        for a in 0..d {
            let first = (spec.lower[a] / spec.h - ALIGN_TOL).ceil() as i64;
            let last = (spec.upper[a] / spec.h + ALIGN_TOL).floor() as i64;
            if last < first {
                return param("lattice box holds no cells");
            }
            lo[a] = first;
            n[a] = (last - first + 1) as usize;
        }
        let drift_v = spec.drift_or_zero();
        let mut drift = [0.0; 2];
        drift[..d].copy_from_slice(&drift_v);
        let reach = spec.v_max * spec.dt / spec.h;
        let r = (reach + 1e-9).floor() as i64;
        let mut offsets = Vec::new();
        match d {
            1 => offsets.extend((-r..=r).map(|o| [o, 0])),
            _ => {
                for o0 in -r..=r {
                    for o1 in -r..=r {
                        if ((o0 * o0 + o1 * o1) as f64).sqrt() <= reach + 1e-9 {
                            offsets.push([o0, o1]);
                        }
                    }
                }
            }
        }
        // Visiting sources in increasing flat index lets strict `<` pick the
        // lowest index among ties.
        let n1 = n[1] as i64;
        offsets.sort_by_key(|o| std::cmp::Reverse(o[0] * n1 + o[1]));
        let max_offset = offsets
            .iter()
            .map(|o| ((o[0] * o[0] + o[1] * o[1]) as f64).sqrt())
            .fold(0.0, f64::max);
        let qp = ham.q_prime();
        let mut vel = Vec::with_capacity(offsets.len());
        let mut kin = Vec::with_capacity(offsets.len());
        for o in &offsets {
            let mut w = [0.0; 2];
            for a in 0..d {
                w[a] = o[a] as f64 * spec.h / spec.dt + drift[a];
            }
            let speed = (w[0] * w[0] + w[1] * w[1]).sqrt();
            vel.push(w);
            kin.push(ham.h_star_of_norm(speed, qp) * spec.dt);
        }
        Ok(Geometry {
            d,
            h: spec.h,
            dt: spec.dt,
            lo,
            n,
            drift,
            offsets,
            vel,
            kin,
            max_offset,
            subsamples: spec.subsamples,
        })
    }

    pub fn ncells(&self) -> usize {
        self.n[0] * self.n[1]
    }

    #[inline]
    pub fn coords(&self, cell: usize) -> [usize; 2] {
        [cell / self.n[1], cell % self.n[1]]
    }

    pub fn position(&self, cell: usize, t: f64) -> [f64; 2] {
        let c = self.coords(cell);
        let mut x = [0.0; 2];
        for a in 0..self.d {
            x[a] = (self.lo[a] + c[a] as i64) as f64 * self.h + self.drift[a] * t;
        }
        x
    }

    pub fn locate(&self, x: &[f64], t: f64) -> Result<usize> {
        if x.len() != self.d {
            return param("point dimension differs from the lattice");
        }
        let mut c = [0usize; 2];
        for a in 0..self.d {
            let r = (x[a] - self.drift[a] * t) / self.h;
            let k = r.round();
            if (r - k).abs() > ALIGN_TOL * r.abs().max(1.0) {
                return Err(Error::Alignment(format!("point {x:?} is not a lattice node at time {t}")));
            }
            let idx = k as i64 - self.lo[a];
            if idx < 0 || idx >= self.n[a] as i64 {
                return Err(Error::OutsideBox(format!("point {x:?} lies outside the lattice box")));
            }
            c[a] = idx as usize;
        }
        Ok(c[0] * self.n[1] + c[1])
    }

    pub fn is_boundary(&self, cell: usize) -> bool {
        let c = self.coords(cell);
        (0..self.d).any(|a| c[a] == 0 || c[a] + 1 == self.n[a])
    }

    #[inline]
    pub fn source(&self, j: usize, oi: usize) -> Option<usize> {
        let o = self.offsets[oi];
        if self.d == 1 {
            let i = j as i64 - o[0];
            return (i >= 0 && i < self.n[0] as i64).then_some(i as usize);
        }
        let c = self.coords(j);
        let i0 = c[0] as i64 - o[0];
        let i1 = c[1] as i64 - o[1];
        (i0 >= 0 && i0 < self.n[0] as i64 && i1 >= 0 && i1 < self.n[1] as i64)
            .then(|| i0 as usize * self.n[1] + i1 as usize)
    }

    pub fn slices(&self, s: f64, t: f64) -> Result<usize> {
        let r = (t - s) / self.dt;
        let k = r.round();
        if k < 0.0 || (r - k).abs() > ALIGN_TOL * r.abs().max(1.0) {
            return Err(Error::Alignment(format!(
                "time span {} is not a multiple of the lattice step {}",
                t - s,
                self.dt
            )));
        }
        Ok(k as usize)
    }
}

/// Per-sweep evaluation context: Brownian alignment and static field tables.
pub(crate) struct Sweeper<'a> {
    pub geo: &'a Geometry,
    pub forcing: Forcing<'a>,
    start_node: usize,
    ratio: usize,
    nq: usize,
    weights: Vec<f64>,
    constant: bool,
    /// 1-d: `Df` on the fine lattice of step `h / nq` when the lattice is static.
    df_static: Option<Vec<f64>>,
    n_fine: usize,
    s: f64,
}

/// Per-slice tables for the edge costs out of slice `k`.
pub(crate) struct Slice {
    t: f64,
    b_quad: Vec<f64>,
    g: Vec<f64>,
}

impl<'a> Sweeper<'a> {
    pub fn new(geo: &'a Geometry, forcing: Forcing<'a>, s: f64, slices: usize) -> Result<Sweeper<'a>> {
        if forcing.field.dim() != geo.d {
            return param("field and lattice dimensions differ");
        }
        let (start_node, ratio) = alignment(s, geo.dt, slices, &forcing)?;
        let nq = ratio * geo.subsamples;
        let step = geo.dt / nq as f64;
        let weights: Vec<f64> = (0..=nq)
            .map(|q| if q == 0 || q == nq { 0.5 * step } else { step })
            .collect();
        let constant = forcing.field.is_constant();
        let n_fine = (geo.n[0] - 1) * nq + 1;
        let df_static = if geo.d == 1 && !constant && geo.drift[0] == 0.0 {
            let m = forcing.field.channels();
            let mut table = vec![0.0; n_fine * m];
            let base = geo.lo[0] * nq as i64;
            for fine in 0..n_fine {
                let x = (base + fine as i64) as f64 * geo.h / nq as f64;
                forcing.field.gradient(&[x], &mut table[fine * m..(fine + 1) * m]);
            }
            Some(table)
        } else {
            None
        };
        Ok(Sweeper { geo, forcing, start_node, ratio, nq, weights, constant, df_static, n_fine, s })
    }

    pub fn time(&self, k: usize) -> f64 {
        self.s + k as f64 * self.geo.dt
    }

    /// `f(x_cell) . B(t_k)` for every cell.
    pub fn boundary(&self, k: usize) -> Vec<f64> {
        let node = self.start_node + k * self.ratio;
        let t = self.time(k);
        let mut buf = vec![0.0; self.forcing.field.channels()];
        (0..self.geo.ncells())
            .map(|cell| {
                let x = self.geo.position(cell, t);
                boundary_term(&self.forcing, &x[..self.geo.d], node, &mut buf)
            })
            .collect()
    }

    pub fn slice(&self, k: usize) -> Slice {
        let t = self.time(k);
        let m = self.forcing.field.channels();
        let mut b_quad = vec![0.0; (self.nq + 1) * m];
        let first = self.start_node + k * self.ratio;
        let sub = self.geo.subsamples;
        for q in 0..=self.nq {
            let piece = (q / sub).min(self.ratio - 1);
            let frac = (q - piece * sub) as f64 / sub as f64;
            let (b0, b1) = (self.forcing.path.node(first + piece), self.forcing.path.node(first + piece + 1));
            for c in 0..m {
                b_quad[q * m + c] = b0[c] + (b1[c] - b0[c]) * frac;
            }
        }
        let mut g = Vec::new();
        if self.geo.d == 1 && !self.constant {
            g = vec![0.0; (self.nq + 1) * self.n_fine];
            let base = self.geo.lo[0] * self.nq as i64;
            let mut grad = vec![0.0; m];
            for q in 0..=self.nq {
                let bq = &b_quad[q * m..(q + 1) * m];
                let row = &mut g[q * self.n_fine..(q + 1) * self.n_fine];
                match &self.df_static {
                    Some(table) => {
                        for (fine, out) in row.iter_mut().enumerate() {
                            let df = &table[fine * m..(fine + 1) * m];
                            *out = df.iter().zip(bq).map(|(a, b)| a * b).sum();
                        }
                    }
                    None => {
                        let tq = t + q as f64 * self.geo.dt / self.nq as f64;
                        for (fine, out) in row.iter_mut().enumerate() {
                            let x = (base + fine as i64) as f64 * self.geo.h / self.nq as f64
                                + self.geo.drift[0] * tq;
                            self.forcing.field.gradient(&[x], &mut grad);
                            *out = grad.iter().zip(bq).map(|(a, b)| a * b).sum();
                        }
                    }
                }
            }
        }
        Slice { t, b_quad, g }
    }

    /// `H*(w) dt - int Df(gamma) gamma' . B` for the edge leaving cell `i`
    /// with offset `oi` during slice `sl`.
    #[inline]
    pub fn edge(&self, sl: &Slice, i: usize, oi: usize) -> f64 {
        let kin = self.geo.kin[oi];
        if self.constant {
            return kin;
        }
        if self.geo.d == 1 {
            let o = self.geo.offsets[oi][0];
            let base = i as i64 * self.nq as i64;
            let mut acc = 0.0;
            for (q, w) in self.weights.iter().enumerate() {
                acc += w * sl.g[(q as i64 * self.n_fine as i64 + base + o * q as i64) as usize];
            }
            return kin - self.geo.vel[oi][0] * acc;
        }
        self.edge_direct(sl, i, oi)
    }

    fn edge_direct(&self, sl: &Slice, i: usize, oi: usize) -> f64 {
        let d = self.geo.d;
        let m = self.forcing.field.channels();
        let x0 = self.geo.position(i, sl.t);
        let w = self.geo.vel[oi];
        let mut grad = [0.0; 16];
        let grad = &mut grad[..m * d];
        let mut x = [0.0; 2];
        let mut acc = 0.0;
        for (q, wt) in self.weights.iter().enumerate() {
            let tau = q as f64 * self.geo.dt / self.nq as f64;
            for a in 0..d {
                x[a] = x0[a] + w[a] * tau;
            }
            self.forcing.field.gradient(&x[..d], grad);
            let bq = &sl.b_quad[q * m..(q + 1) * m];
            let mut val = 0.0;
            for c in 0..m {
                let row = &grad[c * d..(c + 1) * d];
                val += bq[c] * (row[0] * w[0] + if d == 2 { row[1] * w[1] } else { 0.0 });
            }
            acc += wt * val;
        }
        self.geo.kin[oi] - acc
    }
}

pub(crate) struct SweepOutput {
    /// Value functions (with the end boundary term) at the recorded slices.
    pub values: Vec<Vec<f64>>,
    /// Whether the optimal path into each cell touched the box boundary.
    pub touched: Vec<Vec<bool>>,
    /// Argmin offsets for slices `1..=K` when requested.
    pub back: Vec<Vec<u16>>,
}

/// Min-plus sweep from `init` at time `s` through `slices` steps.
pub(crate) fn sweep(
    geo: &Geometry,
    forcing: Forcing,
    s: f64,
    slices: usize,
    init: &[f64],
    record: &[usize],
    keep_back: bool,
) -> Result<SweepOutput> {
    if geo.ncells() * geo.offsets.len() > u32::MAX as usize || geo.offsets.len() > u16::MAX as usize {
        return param("lattice too large");
    }
    let sw = Sweeper::new(geo, forcing, s, slices)?;
    let n = geo.ncells();
    let f0 = sw.boundary(0);
    let mut v: Vec<f64> = init.iter().zip(&f0).map(|(u, f)| u - f).collect();
    let mut touched: Vec<bool> = (0..n).map(|c| init[c].is_finite() && geo.is_boundary(c)).collect();
    let mut out = SweepOutput { values: Vec::new(), touched: Vec::new(), back: Vec::new() };
    let mut next = vec![f64::INFINITY; n];
    let mut next_touch = vec![false; n];
    let mut record_iter = record.iter().peekable();
    while let Some(&&0) = record_iter.peek() {
        out.values.push(init.to_vec());
        out.touched.push(touched.clone());
        record_iter.next();
    }
    for k in 0..slices {
        let sl = sw.slice(k);
        let mut back = if keep_back { vec![u16::MAX; n] } else { Vec::new() };
        for j in 0..n {
            let mut best = f64::INFINITY;
            let mut arg = usize::MAX;
            for oi in 0..geo.offsets.len() {
                let Some(i) = geo.source(j, oi) else { continue };
                let vi = v[i];
                if vi == f64::INFINITY {
                    continue;
                }
                let c = vi + sw.edge(&sl, i, oi);
                if c < best {
                    best = c;
                    arg = oi;
                }
            }
            next[j] = best;
            if arg != usize::MAX {
                let i = geo.source(j, arg).unwrap_or(j);
                next_touch[j] = touched[i] || geo.is_boundary(j);
                if keep_back {
                    back[j] = arg as u16;
                }
            } else {
                next_touch[j] = false;
            }
        }
        std::mem::swap(&mut v, &mut next);
        std::mem::swap(&mut touched, &mut next_touch);
        if keep_back {
            out.back.push(back);
        }
        while let Some(&&r) = record_iter.peek() {
            if r != k + 1 {
                break;
            }
            let fk = sw.boundary(k + 1);
            out.values.push(v.iter().zip(&fk).map(|(a, f)| a + f).collect());
            out.touched.push(touched.clone());
            record_iter.next();
        }
    }
    if record_iter.next().is_some() {
        return param("record slices must be sorted and within the sweep");
    }
    Ok(out)
}

fn endpoint_init(geo: &Geometry, x: &[f64], s: f64) -> Result<(usize, Vec<f64>)> {
    let cell = geo.locate(x, s)?;
    let mut init = vec![f64::INFINITY; geo.ncells()];
    init[cell] = 0.0;
    Ok((cell, init))
}

fn margin_warning(spec: &LatticeSpec, geo: &Geometry, x: &[f64], y: &[f64], s: f64, t: f64) -> Option<String> {
    let need = spec.v_max * (t - s) / 2.0;
    let drift = geo.drift;
    for a in 0..geo.d {
        for (p, time) in [(x[a], s), (y[a], t)] {
            let rel = p - drift[a] * time;
            if rel - spec.lower[a] < need || spec.upper[a] - rel < need {
                return Some(format!(
                    "lattice box margin below v_max (t - s) / 2 = {need}; paths may be truncated"
                ));
            }
        }
    }
    None
}

/// Lattice minimization of the action from `(x, s)` to `(y, t)`.
pub fn dp_lagrangian(
    x: &[f64],
    y: &[f64],
    s: f64,
    t: f64,
    forcing: &Forcing,
    ham: &PowerLawHamiltonian,
    spec: &LatticeSpec,
) -> Result<LagrangianEstimate> {
    let geo = Geometry::new(spec, ham)?;
    let slices = geo.slices(s, t)?;
    if slices == 0 {
        return param("dp_lagrangian needs s < t");
    }
    let (_, init) = endpoint_init(&geo, x, s)?;
    let target = geo.locate(y, t)?;
    let out = sweep(&geo, *forcing, s, slices, &init, &[slices], true)?;
    let lattice_value = out.values[0][target];
    if !lattice_value.is_finite() {
        return Err(Error::Infeasible(format!(
            "endpoint {y:?} unreachable from {x:?} with v_max = {}",
            spec.v_max
        )));
    }
    let mut cells = vec![target; slices + 1];
    let mut saturated = false;
    for k in (0..slices).rev() {
        let oi = out.back[k][cells[k + 1]] as usize;
        let o = geo.offsets[oi];
        saturated |= ((o[0] * o[0] + o[1] * o[1]) as f64).sqrt() >= geo.max_offset && geo.max_offset > 0.0;
        cells[k] = geo.source(cells[k + 1], oi).expect("backpointer leaves the lattice");
    }
    let mut nodes = Vec::with_capacity((slices + 1) * geo.d);
    for (k, cell) in cells.iter().enumerate() {
        let tk = s + k as f64 * geo.dt;
        nodes.extend_from_slice(&geo.position(*cell, tk)[..geo.d]);
    }
    // Endpoints exactly as requested rather than reconstructed.
    nodes[..geo.d].copy_from_slice(x);
    let last = slices * geo.d;
    nodes[last..].copy_from_slice(y);
    let minimizer = DiscretePath::new(s, t, geo.d, nodes)?;
    let breakdown = total_action(&minimizer, forcing, ham, spec.subsamples)?;
    let mut warnings = Vec::new();
    if saturated {
        warnings.push("minimizer saturates the speed cap v_max".to_string());
    }
    if cells.iter().any(|c| geo.is_boundary(*c)) {
        warnings.push("minimizer touches the lattice box".to_string());
    }
    warnings.extend(margin_warning(spec, &geo, x, y, s, t));
    Ok(LagrangianEstimate {
        value: breakdown.total,
        minimizer,
        breakdown,
        method: Method::Dp,
        lattice_value,
        subsamples: spec.subsamples,
        warnings,
    })
}

/// Min-plus sweep from the grid function `init` (one value per lattice cell,
/// `+inf` allowed) at time `s`; returns the value functions at `times`.
pub fn min_plus_sweep(
    init: &[f64],
    s: f64,
    times: &[f64],
    forcing: &Forcing,
    ham: &PowerLawHamiltonian,
    spec: &LatticeSpec,
) -> Result<Vec<Vec<f64>>> {
    let geo = Geometry::new(spec, ham)?;
    if init.len() != geo.ncells() {
        return param(format!("expected {} initial values, got {}", geo.ncells(), init.len()));
    }
    let slices = times.iter().map(|t| geo.slices(s, *t)).collect::<Result<Vec<_>>>()?;
    if slices.windows(2).any(|w| w[0] > w[1]) {
        return param("times must be non-decreasing");
    }
    let k_max = slices.last().copied().unwrap_or(0);
    Ok(sweep(&geo, *forcing, s, k_max, init, &slices, false)?.values)
}

/// Cell positions of a lattice at time `t`, row-major.
pub fn lattice_points(spec: &LatticeSpec, t: f64) -> Result<Vec<Vec<f64>>> {
    let geo = Geometry::new(spec, &PowerLawHamiltonian::quadratic())?;
    Ok((0..geo.ncells()).map(|c| geo.position(c, t)[..geo.d].to_vec()).collect())
}

/// Doubles `v_max` (up to four times) while the endpoint is unreachable.
pub fn dp_lagrangian_adaptive(
    x: &[f64],
    y: &[f64],
    s: f64,
    t: f64,
    forcing: &Forcing,
    ham: &PowerLawHamiltonian,
    spec: &LatticeSpec,
) -> Result<LagrangianEstimate> {
    let mut spec = spec.clone();
    for _ in 0..4 {
        match dp_lagrangian(x, y, s, t, forcing, ham, &spec) {
            Err(Error::Infeasible(_)) => spec.v_max *= 2.0,
            other => return other,
        }
    }
    dp_lagrangian(x, y, s, t, forcing, ham, &spec)
}

/// Speed cap from the a priori `L^q'` bound on minimizer velocities.
pub fn default_v_max(ham: &PowerLawHamiltonian, c_hat: f64, x: &[f64], y: &[f64], s: f64, t: f64) -> f64 {
    let qp = ham.q_prime();
    let tau = t - s;
    let dist: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let energy = c_hat * (1.0 + dist.powf(qp) / tau.powf(qp - 1.0));
    4.0 * energy.powf(1.0 / qp) / tau.powf(1.0 / qp)
}

/// Bellman values `L(x, y_k, s, t_k)` for several endpoints from one sweep.
///
/// Returns the values and, per endpoint, whether the optimal lattice path
/// touched the box boundary.
pub fn dp_profile(
    x: &[f64],
    s: f64,
    targets: &[(Vec<f64>, f64)],
    forcing: &Forcing,
    ham: &PowerLawHamiltonian,
    spec: &LatticeSpec,
) -> Result<Vec<(f64, bool)>> {
    let geo = Geometry::new(spec, ham)?;
    let (_, init) = endpoint_init(&geo, x, s)?;
    let mut slices = Vec::with_capacity(targets.len());
    for (_, t) in targets {
        slices.push(geo.slices(s, *t)?);
    }
    let mut record = slices.clone();
    record.sort_unstable();
    record.dedup();
    let k_max = *record.last().unwrap_or(&0);
    let out = sweep(&geo, *forcing, s, k_max, &init, &record, false)?;
    targets
        .iter()
        .zip(&slices)
        .map(|((y, t), k)| {
            let slot = record.binary_search(k).expect("recorded slice");
            let cell = geo.locate(y, *t)?;
            let value = out.values[slot][cell];
            if !value.is_finite() {
                return Err(Error::Infeasible(format!("endpoint {y:?} at t = {t} unreachable")));
            }
            Ok((value, out.touched[slot][cell]))
        })
        .collect()
}

pub fn straight_line(
    x: &[f64],
    y: &[f64],
    s: f64,
    t: f64,
    segments: usize,
    forcing: &Forcing,
    ham: &PowerLawHamiltonian,
    subsamples: usize,
) -> Result<LagrangianEstimate> {
    let minimizer = DiscretePath::straight(x, y, s, t, segments)?;
    let breakdown = total_action(&minimizer, forcing, ham, subsamples)?;
    Ok(LagrangianEstimate {
        value: breakdown.total,
        minimizer,
        breakdown,
        method: Method::StraightLine,
        lattice_value: breakdown.total,
        subsamples,
        warnings: Vec::new(),
    })
}

const GOLDEN: f64 = 0.618_033_988_749_894_9;

/// Golden-section minimization of `f` around `centre`, widening the bracket
/// while the minimum sits on its edge. Returns the best point seen, which is
/// `centre` itself unless something strictly better was found.
fn line_search(mut f: impl FnMut(f64) -> f64, centre: f64, f_centre: f64, width: f64) -> (f64, f64) {
    let mut best = (centre, f_centre);
    let (mut c, mut w) = (centre, width);
    for _ in 0..8 {
        let (mut lo, mut hi) = (c - w, c + w);
        let mut x1 = hi - GOLDEN * (hi - lo);
        let mut x2 = lo + GOLDEN * (hi - lo);
        let mut f1 = f(x1);
        let mut f2 = f(x2);
        while hi - lo > 1e-10 * (1.0 + c.abs()) {
            if f1 <= f2 {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - GOLDEN * (hi - lo);
                f1 = f(x1);
            } else {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + GOLDEN * (hi - lo);
                f2 = f(x2);
            }
        }
        let (xm, fm) = if f1 <= f2 { (x1, f1) } else { (x2, f2) };
        if fm < best.1 {
            best = (xm, fm);
        }
        let at_edge = (xm - (c - w)).abs() < 0.01 * w || (c + w - xm).abs() < 0.01 * w;
        if !at_edge {
            break;
        }
        c = xm;
        w *= 2.0;
    }
    best
}

/// Coordinate-wise golden-section descent on the interior nodes.
///
/// Coordinates are swept coarse to fine in a hierarchical basis: at level
/// `w` a coordinate moves the nodes within `w` steps of a centre node by a
/// tent-shaped amount, and level 1 is the plain nodal coordinate. A move only
/// changes the segments under its tent, so line searches use that local cost.
/// The returned value is recomputed from scratch and never exceeds the input.
pub fn descent_refine(
    estimate: &LagrangianEstimate,
    forcing: &Forcing,
    ham: &PowerLawHamiltonian,
    iterations: usize,
) -> Result<LagrangianEstimate> {
    let path = &estimate.minimizer;
    let subsamples = estimate.subsamples.max(1);
    let k_max = path.segments();
    let d = path.dim;
    let dt = path.step();
    let (start, ratio) = alignment(path.s, dt, k_max, forcing)?;
    let mut nodes = path.nodes.clone();
    let mut trial = nodes.clone();
    let mut scratch = Scratch::new(forcing);
    let qp = ham.q_prime();

    let local = |nodes: &[f64], from: usize, to: usize, scratch: &mut Scratch| -> f64 {
        let mut total = 0.0;
        for k in from..to {
            let (a, b) = (&nodes[k * d..(k + 1) * d], &nodes[(k + 1) * d..(k + 2) * d]);
            let speed = a.iter().zip(b).map(|(x, y)| (y - x) * (y - x)).sum::<f64>().sqrt() / dt;
            total += ham.h_star_of_norm(speed, qp) * dt
                - segment_gradient_term(forcing, a, b, start + k * ratio, ratio, subsamples, scratch);
        }
        total
    };

    let mut levels = Vec::new();
    let mut w = 1;
    while 2 * w <= k_max / 2 {
        w *= 2;
    }
    while w >= 1 {
        levels.push(w);
        w /= 2;
    }

    for _ in 0..iterations {
        let mut improvement = 0.0;
        for &w in &levels {
            let mut k = w;
            while k < k_max {
                let (left, right) = (w.min(k), w.min(k_max - k));
                let (from, to) = (k - left, k + right);
                let tent = |j: usize| -> f64 {
                    if j <= k {
                        1.0 - (k - j) as f64 / left as f64
                    } else {
                        1.0 - (j - k) as f64 / right as f64
                    }
                };
                for a in 0..d {
                    let f0 = local(&nodes, from, to, &mut scratch);
                    let spread = (nodes[k * d + a] - nodes[(k - 1) * d + a])
                        .abs()
                        .max((nodes[(k + 1) * d + a] - nodes[k * d + a]).abs());
                    let width = spread * w as f64 + 1e-3;
                    trial[from * d..(to + 1) * d].copy_from_slice(&nodes[from * d..(to + 1) * d]);
                    let mut eval = |delta: f64| -> f64 {
                        for j in from + 1..to {
                            trial[j * d + a] = nodes[j * d + a] + delta * tent(j);
                        }
                        local(&trial, from, to, &mut scratch)
                    };
                    let (delta, fm) = line_search(&mut eval, 0.0, f0, width);
                    if fm < f0 {
                        for j in from + 1..to {
                            nodes[j * d + a] += delta * tent(j);
                        }
                        improvement += f0 - fm;
                    }
                }
                k += w;
            }
        }
        if improvement < 1e-8 {
            break;
        }
    }
    let minimizer = DiscretePath::new(path.s, path.t, d, nodes)?;
    let breakdown = total_action(&minimizer, forcing, ham, subsamples)?;
    if breakdown.total > estimate.value {
        let mut same = estimate.clone();
        same.method = Method::DpDescent;
        return Ok(same);
    }
    Ok(LagrangianEstimate {
        value: breakdown.total,
        minimizer,
        breakdown,
        method: Method::DpDescent,
        lattice_value: estimate.lattice_value,
        subsamples,
        warnings: estimate.warnings.clone(),
    })
}

fn scale_estimate(mut est: LagrangianEstimate, eps: f64) -> LagrangianEstimate {
    est.value *= eps;
    est.lattice_value *= eps;
    est.breakdown.kinetic *= eps;
    est.breakdown.forcing *= eps;
    est.breakdown.total = est.breakdown.kinetic + est.breakdown.forcing;
    est.minimizer.s *= eps;
    est.minimizer.t *= eps;
    for x in est.minimizer.nodes.iter_mut() {
        *x *= eps;
    }
    est
}

/// `L^eps(x, y, s, t) = eps L_{A f}(x / eps, y / eps, s / eps, t / eps)` with
/// forcing amplitude `A = eps^(theta - 1/2)`; the lattice is in the unscaled
/// frame.
pub fn scaled_lagrangian(
    x: &[f64],
    y: &[f64],
    s: f64,
    t: f64,
    eps: f64,
    theta: f64,
    forcing: &Forcing,
    ham: &PowerLawHamiltonian,
    spec: &LatticeSpec,
) -> Result<LagrangianEstimate> {
    if !(eps > 0.0) {
        return param("eps must be positive");
    }
    let field = ScaledField { inner: forcing.field, amplitude: eps.powf(theta - 0.5), scale: 1.0 };
    let micro = Forcing { field: &field, path: forcing.path };
    let xs: Vec<f64> = x.iter().map(|v| v / eps).collect();
    let ys: Vec<f64> = y.iter().map(|v| v / eps).collect();
    let est = dp_lagrangian(&xs, &ys, s / eps, t / eps, &micro, ham, spec)?;
    Ok(scale_estimate(est, eps))
}

/// One sub-additivity query `(x, z, y, s, r, t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Triple {
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    pub y: Vec<f64>,
    pub s: f64,
    pub r: f64,
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub triple: Triple,
    pub whole: f64,
    pub split: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubadditivityReport {
    pub checked: usize,
    pub violations: Vec<Violation>,
}

/// Checks `L(x,y,s,t) <= L(x,z,s,r) + L(z,y,r,t)` on the lattice, with a
/// relative tolerance of `1e-9`.
pub fn check_subadditivity(
    forcing: &Forcing,
    ham: &PowerLawHamiltonian,
    spec: &LatticeSpec,
    triples: &[Triple],
) -> Result<SubadditivityReport> {
    let mut violations = Vec::new();
    for tr in triples {
        let whole = lattice_value(&tr.x, &tr.y, tr.s, tr.t, forcing, ham, spec)?;
        let first = lattice_value(&tr.x, &tr.z, tr.s, tr.r, forcing, ham, spec)?;
        let second = lattice_value(&tr.z, &tr.y, tr.r, tr.t, forcing, ham, spec)?;
        let split = first + second;
        let scale = whole.abs().max(first.abs()).max(second.abs()).max(1.0);
        if whole > split + 1e-9 * scale {
            violations.push(Violation { triple: tr.clone(), whole, split });
        }
    }
    Ok(SubadditivityReport { checked: triples.len(), violations })
}

/// Raw Bellman value; zero for the degenerate span `s == t`, `x == y`.
fn lattice_value(
    x: &[f64],
    y: &[f64],
    s: f64,
    t: f64,
    forcing: &Forcing,
    ham: &PowerLawHamiltonian,
    spec: &LatticeSpec,
) -> Result<f64> {
    if s == t {
        return if x == y {
            Ok(0.0)
        } else {
            Err(Error::Infeasible("distinct endpoints with zero time span".into()))
        };
    }
    Ok(dp_profile(x, s, &[(y.to_vec(), t)], forcing, ham, spec)?[0].0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthSample {
    pub distance: f64,
    pub span: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthReport {
    pub alpha: f64,
    /// Smallest `C >= 1` for which the two-sided envelope holds on every sample.
    pub c_hat: f64,
    pub samples: Vec<GrowthSample>,
}

pub const GROWTH_ALPHA: f64 = 0.45;

/// Smallest `C >= 1` with `A/C - C tau^alpha <= L <= C A + C tau^alpha`,
/// `A = |y - x|^q' / tau^(q' - 1)`.
pub fn envelope_constant(ham: &PowerLawHamiltonian, samples: &[GrowthSample], alpha: f64) -> f64 {
    let qp = ham.q_prime();
    samples.iter().fold(1.0f64, |c, smp| {
        let a = smp.distance.powf(qp) / smp.span.powf(qp - 1.0);
        let ta = smp.span.powf(alpha);
        let upper = smp.value / (a + ta);
        let l = smp.value;
        let lower = (-l + (l * l + 4.0 * ta * a).sqrt()) / (2.0 * ta);
        c.max(upper).max(lower)
    })
}

/// Evaluates `L` on the given endpoint pairs and fits the envelope constant.
pub fn check_growth(
    forcing: &Forcing,
    ham: &PowerLawHamiltonian,
    spec: &LatticeSpec,
    endpoints: &[(Vec<f64>, Vec<f64>, f64, f64)],
) -> Result<GrowthReport> {
    let mut samples = Vec::with_capacity(endpoints.len());
    for (x, y, s, t) in endpoints {
        let value = dp_lagrangian(x, y, *s, *t, forcing, ham, spec)?.value;
        let distance = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        samples.push(GrowthSample { distance, span: t - s, value });
    }
    let c_hat = envelope_constant(ham, &samples, GROWTH_ALPHA);
    Ok(GrowthReport { alpha: GROWTH_ALPHA, c_hat, samples })
}
