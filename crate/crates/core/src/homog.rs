//! Monte Carlo estimation of the effective Lagrangian and Hamiltonian,
//! enhancement certificates, and the scaling experiments.

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::action::{total_action, DiscretePath};
use crate::env::{grad_energy, sample_environment_tagged, FieldSpec};
use crate::error::{param, Error, Result};
use crate::hamiltonian::{convexify, legendre_numeric, unit_directions, PowerLawHamiltonian};
use crate::hj::{hopf_lax_solve, HopfLaxOptions, InitialDatum, LatticeResolution};
use crate::optimizer::{dp_profile, scaled_lagrangian, LatticeSpec};
use crate::stats::{self, Summary, Z95_ONE_SIDED, Z95_TWO_SIDED};

pub const LBAR_TAG: &str = "lbar";
pub const TENT_TAG: &str = "tent";
pub const SCALING_TAG: &str = "scaling";
pub const TAILS_TAG: &str = "tails";
pub const CONVERGENCE_TAG: &str = "homog";

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubadditiveSchedule {
    pub horizons: Vec<f64>,
    pub samples: usize,
    pub velocities: Vec<Vec<f64>>,
}

impl SubadditiveSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.horizons.is_empty() || self.horizons.iter().any(|t| !(*t > 0.0)) {
            return param("schedule horizons must be positive");
        }
        if self.horizons.windows(2).any(|w| !(w[0] < w[1])) {
            return param("schedule horizons must be strictly increasing");
        }
        if self.samples < 2 {
            return param("schedule needs at least two samples per horizon");
        }
        Ok(())
    }
}

impl Default for SubadditiveSchedule {
    fn default() -> Self {
        SubadditiveSchedule { horizons: vec![4.0, 8.0, 16.0, 32.0], samples: 128, velocities: vec![vec![0.0]] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonRow {
    pub horizon: f64,
    pub mean: f64,
    pub std_dev: f64,
    pub se: f64,
    pub touched_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LbarEstimate {
    pub v: Vec<f64>,
    /// Mean at the largest horizon.
    pub value: f64,
    /// Two-sided 95% half-width at the largest horizon.
    pub half_width: f64,
    pub table: Vec<HorizonRow>,
    pub converged: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// Brownian step and lattice shared by the estimators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorLattice {
    /// Co-moving box; its drift is set to the velocity being estimated.
    pub lattice: LatticeSpec,
    pub path_dt: f64,
}

/// `(1/T) L(0, T v, 0, T)` averaged over environments for every horizon of
/// the schedule. Realization `i` uses the same environment for every `v`.
pub fn estimate_lbar(
    v: &[f64],
    schedule: &SubadditiveSchedule,
    field: &FieldSpec,
    ham: &PowerLawHamiltonian,
    est: &EstimatorLattice,
    master_seed: u64,
) -> Result<LbarEstimate> {
    schedule.validate()?;
    let d = field.dimension;
    if v.len() != d || est.lattice.dim() != d {
        return param("velocity, field and lattice dimensions differ");
    }
    let mut lattice = est.lattice.clone();
    lattice.drift = v.to_vec();
    let t_max = *schedule.horizons.last().expect("validated");
    let targets: Vec<(Vec<f64>, f64)> =
        schedule.horizons.iter().map(|t| (v.iter().map(|a| a * t).collect(), *t)).collect();
    let origin = vec![0.0; d];
    let per_sample: Vec<Vec<(f64, bool)>> = (0..schedule.samples as u64)
        .into_par_iter()
        .map(|i| {
            let env = sample_environment_tagged(field, t_max, est.path_dt, master_seed, LBAR_TAG, i)?;
            dp_profile(&origin, 0.0, &targets, &env.forcing(), ham, &lattice)
        })
        .collect::<Result<_>>()?;
    let mut table = Vec::with_capacity(targets.len());
    for (j, t) in schedule.horizons.iter().enumerate() {
        let values: Vec<f64> = per_sample.iter().map(|row| row[j].0 / t).collect();
        let touched = per_sample.iter().filter(|row| row[j].1).count() as f64 / per_sample.len() as f64;
        if touched > 0.1 {
            return Err(Error::Truncation(format!(
                "{:.0}% of optimal paths touch the lattice box at T = {t}; enlarge the box",
                100.0 * touched
            )));
        }
        let s = Summary::of(&values);
        table.push(HorizonRow { horizon: *t, mean: s.mean, std_dev: s.std_dev, se: s.se, touched_fraction: touched });
    }
    let converged = table.windows(2).all(|w| (w[1].mean - w[0].mean).abs() <= 3.0 * w[0].se.hypot(w[1].se));
    let mut warnings = Vec::new();
    if !converged {
        warnings.push(format!("L-bar({v:?}) not converged: successive horizon means differ by more than 3 SE"));
    }
    if table.iter().any(|r| r.touched_fraction > 0.0) {
        warnings.push(format!("some optimal paths for v = {v:?} touch the lattice box"));
    }
    let last = table.last().expect("non-empty");
    Ok(LbarEstimate {
        v: v.to_vec(),
        value: last.mean,
        half_width: Z95_TWO_SIDED * last.se,
        table,
        converged,
        warnings,
    })
}

/// Sampled `L-bar` with the derived `H-bar` on a momentum grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectiveTable {
    pub dim: usize,
    pub v: Vec<Vec<f64>>,
    pub lbar: Vec<f64>,
    pub half_width: Vec<f64>,
    pub p: Vec<Vec<f64>>,
    pub hbar: Vec<f64>,
    /// Conjugate of `L-bar + half_width`: a lower confidence value for `H-bar`.
    pub hbar_lower: Vec<f64>,
    pub truncated: Vec<bool>,
}

impl EffectiveTable {
    pub fn from_samples(v: Vec<Vec<f64>>, lbar: Vec<f64>, half_width: Vec<f64>) -> Result<EffectiveTable> {
        let dim = v.first().map_or(0, |x| x.len());
        if dim == 0 || v.iter().any(|x| x.len() != dim) || lbar.len() != v.len() || half_width.len() != v.len() {
            return param("effective table needs equal-length, non-empty v, lbar and half_width columns");
        }
        Ok(EffectiveTable { dim, v, lbar, half_width, p: Vec::new(), hbar: Vec::new(), hbar_lower: Vec::new(), truncated: Vec::new() })
    }

    pub fn from_estimates(estimates: &[LbarEstimate]) -> Result<EffectiveTable> {
        EffectiveTable::from_samples(
            estimates.iter().map(|e| e.v.clone()).collect(),
            estimates.iter().map(|e| e.value).collect(),
            estimates.iter().map(|e| e.half_width).collect(),
        )
    }

    /// `L-bar` at `v`: exact sample, else linear interpolation in one
    /// dimension, else the nearest sample.
    pub fn lbar_at(&self, v: &[f64]) -> f64 {
        let dist = |x: &Vec<f64>| x.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        if self.dim == 1 {
            let mut order: Vec<usize> = (0..self.v.len()).collect();
            order.sort_by(|a, b| self.v[*a][0].total_cmp(&self.v[*b][0]));
            for w in order.windows(2) {
                let (a, b) = (self.v[w[0]][0], self.v[w[1]][0]);
                if a <= v[0] && v[0] <= b && b > a {
                    let s = (v[0] - a) / (b - a);
                    return self.lbar[w[0]] * (1.0 - s) + self.lbar[w[1]] * s;
                }
            }
        }
        let i = (0..self.v.len()).min_by(|a, b| dist(&self.v[*a]).total_cmp(&dist(&self.v[*b]))).unwrap_or(0);
        self.lbar[i]
    }

    /// Rows `kind,x1..xd,value,half_width,truncated`; `v` rows carry
    /// `L-bar`, `p` rows carry `H-bar` with `half_width = H-bar - lower`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["kind".to_string()];
        header.extend((1..=self.dim).map(|a| format!("x{a}")));
        header.extend(["value", "half_width", "truncated"].map(String::from));
        w.write_record(&header)?;
        for (i, v) in self.v.iter().enumerate() {
            let mut rec = vec!["v".to_string()];
            rec.extend(v.iter().map(|x| x.to_string()));
            rec.extend([self.lbar[i].to_string(), self.half_width[i].to_string(), "0".into()]);
            w.write_record(&rec)?;
        }
        for (j, p) in self.p.iter().enumerate() {
            let mut rec = vec!["p".to_string()];
            rec.extend(p.iter().map(|x| x.to_string()));
            rec.extend([
                self.hbar[j].to_string(),
                (self.hbar[j] - self.hbar_lower[j]).to_string(),
                (self.truncated[j] as u8).to_string(),
            ]);
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<EffectiveTable> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
        let headers = reader.headers()?.clone();
        let dim = headers.len().checked_sub(4).filter(|d| (1..=4).contains(d)).ok_or_else(|| {
            Error::Parse("effective table header must be kind,x1..xd,value,half_width,truncated".into())
        })?;
        let mut expected = vec!["kind".to_string()];
        expected.extend((1..=dim).map(|a| format!("x{a}")));
        expected.extend(["value", "half_width", "truncated"].map(String::from));
        if headers.iter().ne(expected.iter().map(String::as_str)) {
            return Err(Error::Parse(format!("unexpected effective table header {headers:?}")));
        }
        let num = |s: &str| -> Result<f64> {
            let x = s.parse::<f64>().map_err(|e| Error::Parse(format!("{s:?}: {e}")))?;
            if x.is_nan() {
                return Err(Error::Parse("NaN in effective table".into()));
            }
            Ok(x)
        };
        let mut table = EffectiveTable {
            dim,
            v: Vec::new(),
            lbar: Vec::new(),
            half_width: Vec::new(),
            p: Vec::new(),
            hbar: Vec::new(),
            hbar_lower: Vec::new(),
            truncated: Vec::new(),
        };
        for record in reader.records() {
            let record = record?;
            if record.len() != dim + 4 {
                return Err(Error::Parse("effective table row has the wrong field count".into()));
            }
            let x: Vec<f64> = (1..=dim).map(|a| num(&record[a])).collect::<Result<_>>()?;
            let value = num(&record[dim + 1])?;
            let hw = num(&record[dim + 2])?;
            let flag = match &record[dim + 3] {
                "0" => false,
                "1" => true,
                other => return Err(Error::Parse(format!("truncated flag {other:?} is not 0 or 1"))),
            };
            match &record[0] {
                "v" => {
                    table.v.push(x);
                    table.lbar.push(value);
                    table.half_width.push(hw);
                }
                "p" => {
                    table.p.push(x);
                    table.hbar.push(value);
                    table.hbar_lower.push(value - hw);
                    table.truncated.push(flag);
                }
                other => return Err(Error::Parse(format!("row kind {other:?} is not v or p"))),
            }
        }
        if table.v.is_empty() {
            return Err(Error::Parse("effective table has no v rows".into()));
        }
        Ok(table)
    }

    /// Midpoint convexity on sampled collinear triples: returns the
    /// `(left, middle, right)` indices where `L-bar(mid)` exceeds the chord by
    /// more than the combined half-widths.
    pub fn convexity_violations(&self) -> Vec<(usize, usize, usize)> {
        let n = self.v.len();
        let mut out = Vec::new();
        for i in 0..n {
            for k in i + 1..n {
                let mid: Vec<f64> = self.v[i].iter().zip(&self.v[k]).map(|(a, b)| 0.5 * (a + b)).collect();
                let Some(j) = (0..n).find(|j| norm(&sub(&self.v[*j], &mid)) < 1e-9) else {
                    continue;
                };
                if j == i || j == k {
                    continue;
                }
                let chord = 0.5 * (self.lbar[i] + self.lbar[k]);
                let tol = (self.half_width[i].powi(2) + self.half_width[j].powi(2) + self.half_width[k].powi(2)).sqrt();
                if self.lbar[j] > chord + tol + 1e-12 {
                    out.push((i, j, k));
                }
            }
        }
        out
    }

    /// Largest violation of `p.v - L-bar(v) <= H-bar(p)` over sampled pairs.
    pub fn duality_gap(&self) -> f64 {
        let mut worst = f64::NEG_INFINITY;
        for (p, h) in self.p.iter().zip(&self.hbar) {
            for (v, l) in self.v.iter().zip(&self.lbar) {
                worst = worst.max(dot(p, v) - l - h);
            }
        }
        worst
    }
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Fills the momentum block of `table` with `H-bar = (conv L-bar)^*`.
pub fn effective_hamiltonian(table: &EffectiveTable, p_grid: &[Vec<f64>]) -> Result<EffectiveTable> {
    if p_grid.iter().any(|p| p.len() != table.dim) {
        return param("momentum grid dimension differs from the table");
    }
    let convex = convexify(&table.v, &table.lbar)?;
    let raised: Vec<f64> = table.lbar.iter().zip(&table.half_width).map(|(l, h)| l + h).collect();
    let convex_hi = convexify(&table.v, &raised)?;
    let mut out = table.clone();
    out.p = p_grid.to_vec();
    out.hbar.clear();
    out.hbar_lower.clear();
    out.truncated.clear();
    for p in p_grid {
        let c = legendre_numeric(&table.v, &convex, p)?;
        let lo = legendre_numeric(&table.v, &convex_hi, p)?;
        out.hbar.push(c.value);
        out.hbar_lower.push(lo.value);
        out.truncated.push(c.truncation_suspect);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnhancementCertificate {
    pub v: Vec<f64>,
    pub m: f64,
    pub delta: f64,
    pub blocks: usize,
    pub samples: usize,
    pub mean: f64,
    pub se: f64,
    /// One-sided 95% upper confidence bound on `L-bar(v)`.
    pub upper: f64,
    pub reference: f64,
    /// `H*(v) - upper`; positive gaps certify enhancement.
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TentOptions {
    pub m: f64,
    pub delta: f64,
    pub blocks: usize,
    pub samples: usize,
    pub path_dt: f64,
    #[serde(default = "default_tent_subsamples")]
    pub subsamples: usize,
}

fn default_tent_subsamples() -> usize {
    crate::action::DEFAULT_SUBSAMPLES
}

/// `lambda = 0.45 kappa`.
pub fn default_lambda(field: &FieldSpec) -> f64 {
    0.45 * field.kappa
}

/// `M = 4 (1 + G(v))^2 / E|Df(0)|^4` and `delta = c E|Df(0)|^(2/lambda)`
/// with `c = 1` shrunk until `delta <= M/2`.
pub fn default_tent_parameters(v: &[f64], field: &FieldSpec, ham: &PowerLawHamiltonian) -> Result<(f64, f64)> {
    let e = grad_energy(field);
    if !(e > 0.0) {
        return param("tent parameters need a nonconstant field");
    }
    let g = ham.growth_g(v);
    let m = 4.0 * (1.0 + g).powi(2) / (e * e);
    let raw = e.powf(1.0 / default_lambda(field));
    Ok((m, raw.min(m / 2.0)))
}

fn tent_directions(d: usize) -> Vec<Vec<f64>> {
    match d {
        1 => (0..=64).map(|i| vec![-1.0 + i as f64 / 32.0]).collect(),
        _ => {
            let mut dirs = unit_directions(d, 64);
            dirs.push(vec![0.0; d]);
            dirs
        }
    }
}

/// Upper confidence bound on `L-bar(v)` from tent-perturbed straight paths,
/// minimizing each block independently over a finite direction net.
pub fn tent_upper_bound(
    v: &[f64],
    opts: &TentOptions,
    field: &FieldSpec,
    ham: &PowerLawHamiltonian,
    master_seed: u64,
) -> Result<EnhancementCertificate> {
    let TentOptions { m, delta, blocks, samples, path_dt, subsamples } = *opts;
    if !(delta >= 0.0) || delta > m / 2.0 {
        return param(format!("tent amplitude delta = {delta} must lie in [0, M/2 = {}]", m / 2.0));
    }
    if blocks == 0 || samples < 2 || !(path_dt > 0.0) {
        return param("tent bound needs blocks >= 1, samples >= 2 and a positive path step");
    }
    let seg = (m / path_dt).round();
    if seg < 2.0 || (m / path_dt - seg).abs() > 1e-9 * seg || !(seg as usize).is_multiple_of(2) {
        return Err(Error::Alignment(format!("M = {m} must be an even multiple of the path step {path_dt}")));
    }
    let seg = seg as usize;
    let d = field.dimension;
    if v.len() != d {
        return param("velocity and field dimensions differ");
    }
    let dirs = tent_directions(d);
    let horizon = m * blocks as f64;
    let per_sample: Vec<f64> = (0..samples as u64)
        .into_par_iter()
        .map(|i| -> Result<f64> {
            let env = sample_environment_tagged(field, horizon, path_dt, master_seed, TENT_TAG, i)?;
            let forcing = env.forcing();
            let mut total = 0.0;
            for k in 0..blocks {
                let s = k as f64 * m;
                let mut best = f64::INFINITY;
                for u in &dirs {
                    let mut nodes = Vec::with_capacity((seg + 1) * d);
                    for j in 0..=seg {
                        let r = j as f64 / seg as f64;
                        let eta = 1.0 - (2.0 * r - 1.0).abs();
                        let time = s + r * m;
                        nodes.extend((0..d).map(|a| v[a] * time + delta * u[a] * eta));
                    }
                    let path = DiscretePath::new(s, s + m, d, nodes)?;
                    best = best.min(total_action(&path, &forcing, ham, subsamples)?.total);
                }
                total += best;
            }
            Ok(total / horizon)
        })
        .collect::<Result<_>>()?;
    let s = Summary::of(&per_sample);
    let upper = s.mean + Z95_ONE_SIDED * s.se;
    let reference = ham.h_star(v);
    Ok(EnhancementCertificate {
        v: v.to_vec(),
        m,
        delta,
        blocks,
        samples,
        mean: s.mean,
        se: s.se,
        upper,
        reference,
        gap: reference - upper,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub p: Vec<f64>,
    pub hbar: f64,
    pub hbar_lower: f64,
    pub h: f64,
    /// `H-bar(p) - H(p)`.
    pub gap: f64,
    /// `H-bar_lower(p) - H(p)`; positive means enhancement at 95% confidence.
    pub gap_lower: f64,
    /// `(E|Df(0)|^2)^(2 + 1/lambda) / (1 + G(v(p)))`, shape reference only.
    pub expression: f64,
    pub truncated: bool,
}

pub fn enhancement_gap(
    p: &[f64],
    table: &EffectiveTable,
    field: &FieldSpec,
    ham: &PowerLawHamiltonian,
    lambda: f64,
) -> Result<GapReport> {
    let filled = effective_hamiltonian(table, &[p.to_vec()])?;
    let h = ham.h(p);
    let e = grad_energy(field);
    let expression = e.powf(2.0 + 1.0 / lambda) / (1.0 + ham.growth_g(&ham.map_v(p)));
    Ok(GapReport {
        p: p.to_vec(),
        hbar: filled.hbar[0],
        hbar_lower: filled.hbar_lower[0],
        h,
        gap: filled.hbar[0] - h,
        gap_lower: filled.hbar_lower[0] - h,
        expression,
        truncated: filled.truncated[0],
    })
}

/// Brute-force `min_y u0(y) + t H*((x - y)/t)` over a grid of step `step`
/// in the ball of the given radius.
pub fn noiseless_value(u0: &InitialDatum, x: &[f64], t: f64, ham: &PowerLawHamiltonian, radius: f64, step: f64) -> f64 {
    let n = (radius / step).ceil() as i64;
    let mut best = f64::INFINITY;
    let mut y = x.to_vec();
    let mut w = vec![0.0; x.len()];
    let mut visit = |offs: &[i64]| {
        for a in 0..x.len() {
            w[a] = offs[a] as f64 * step;
            y[a] = x[a] - w[a];
        }
        let vel: Vec<f64> = w.iter().map(|c| c / t).collect();
        best = best.min(u0.eval(&y) + t * ham.h_star(&vel));
    };
    match x.len() {
        1 => (-n..=n).for_each(|i| visit(&[i])),
        _ => {
            for i in -n..=n {
                for j in -n..=n {
                    visit(&[i, j]);
                }
            }
        }
    }
    best
}

/// `min_v u0(x - t v) + t L-bar(v)` over the sampled velocities.
pub fn effective_value(u0: &InitialDatum, x: &[f64], t: f64, table: &EffectiveTable) -> f64 {
    table
        .v
        .iter()
        .zip(&table.lbar)
        .map(|(v, l)| {
            let y: Vec<f64> = x.iter().zip(v).map(|(a, b)| a - t * b).collect();
            u0.eval(&y) + t * l
        })
        .fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingOptions {
    pub thetas: Vec<f64>,
    pub eps_list: Vec<f64>,
    pub x: Vec<f64>,
    pub t: f64,
    pub u0: InitialDatum,
    /// Microscopic lattice; its step must resolve `eps / 8` in macroscopic units.
    pub resolution: LatticeResolution,
    pub radius: f64,
    pub samples: usize,
    pub path_dt: f64,
    /// `H-bar` solution at the probe, for the critical exponent.
    #[serde(default)]
    pub reference: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub theta: f64,
    pub eps: f64,
    pub median: f64,
    pub median_se: f64,
    pub noiseless_distance: f64,
    pub reference_distance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingClass {
    pub theta: f64,
    pub regime: String,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub noiseless: f64,
    pub rows: Vec<ScalingRow>,
    pub classes: Vec<ScalingClass>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// `u^eps(x, t)` for one realization at one `(theta, eps)`.
fn probe_value(
    opts: &ScalingOptions,
    field: &FieldSpec,
    ham: &PowerLawHamiltonian,
    theta: f64,
    eps: f64,
    master_seed: u64,
    index: u64,
) -> Result<(f64, bool)> {
    let horizon = opts.t / eps;
    let env = sample_environment_tagged(field, horizon, opts.path_dt, master_seed, SCALING_TAG, index)?;
    let pad = eps * opts.resolution.h;
    let hl = HopfLaxOptions {
        resolution: opts.resolution.clone(),
        lower: opts.x.iter().map(|a| a - pad).collect(),
        upper: opts.x.iter().map(|a| a + pad).collect(),
        radius: Some(opts.radius),
        c_hat: 2.0,
        stride: 1,
    };
    let sol = hopf_lax_solve(&opts.u0, &env.forcing(), ham, eps, theta, &hl, &[opts.t])?;
    let i = sol.nearest(&opts.x);
    Ok((sol.values[0][i], !sol.warnings.is_empty()))
}

/// Median of `u^eps(x, t)` over realizations for every `(theta, eps)`.
pub fn scaling_study(
    opts: &ScalingOptions,
    field: &FieldSpec,
    ham: &PowerLawHamiltonian,
    master_seed: u64,
) -> Result<ScalingReport> {
    if opts.resolution.h > 0.125 {
        return Err(Error::Resolution(format!(
            "microscopic step {} exceeds 1/8, so h > eps/8 in macroscopic units",
            opts.resolution.h
        )));
    }
    if opts.eps_list.windows(2).any(|w| !(w[0] > w[1])) || opts.eps_list.iter().any(|e| !(*e > 0.0)) {
        return param("eps list must be positive and strictly decreasing");
    }
    if opts.samples < 2 {
        return param("scaling study needs at least two samples");
    }
    let noiseless = noiseless_value(&opts.u0, &opts.x, opts.t, ham, opts.radius, 1e-3);
    let mut rows = Vec::new();
    let mut truncated = 0;
    for &theta in &opts.thetas {
        for &eps in &opts.eps_list {
            let vals: Vec<(f64, bool)> = (0..opts.samples as u64)
                .into_par_iter()
                .map(|i| probe_value(opts, field, ham, theta, eps, master_seed, i))
                .collect::<Result<_>>()?;
            truncated += vals.iter().filter(|v| v.1).count();
            let xs: Vec<f64> = vals.iter().map(|v| v.0).collect();
            let median = stats::median(&xs);
            rows.push(ScalingRow {
                theta,
                eps,
                median,
                median_se: stats::median_se(&xs),
                noiseless_distance: (median - noiseless).abs(),
                reference_distance: opts.reference.map(|r| (median - r).abs()),
            });
        }
    }
    let classes = opts
        .thetas
        .iter()
        .map(|&theta| {
            let sel: Vec<&ScalingRow> = rows.iter().filter(|r| r.theta == theta).collect();
            let ses: Vec<f64> = sel.iter().map(|r| r.median_se).collect();
            if theta > 0.5 {
                let d: Vec<f64> = sel.iter().map(|r| r.noiseless_distance).collect();
                ScalingClass {
                    theta,
                    regime: "noise vanishes".into(),
                    holds: stats::is_decreasing_within(&d, &ses, 3.0),
                }
            } else if theta < 0.5 {
                let m: Vec<f64> = sel.iter().map(|r| r.median).collect();
                ScalingClass {
                    theta,
                    regime: "diverges to -inf".into(),
                    holds: m.windows(2).all(|w| w[1] < w[0]),
                }
            } else {
                let holds = match opts.reference {
                    Some(_) => {
                        let d: Vec<f64> = sel.iter().map(|r| r.reference_distance.unwrap_or(f64::NAN)).collect();
                        stats::is_decreasing_within(&d, &ses, 3.0)
                    }
                    None => false,
                };
                ScalingClass { theta, regime: "homogenizes to H-bar".into(), holds }
            }
        })
        .collect();
    let mut warnings = Vec::new();
    if truncated > 0 {
        warnings.push(format!("{truncated} probe solves reported localization truncation"));
    }
    Ok(ScalingReport { noiseless, rows, classes, warnings })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TailsOptions {
    pub eps_list: Vec<f64>,
    pub r: f64,
    pub samples: usize,
    pub u0: InitialDatum,
    pub resolution: LatticeResolution,
    pub radius: f64,
    /// Macroscopic spacing of the space grid in `B_R`.
    pub spacing: f64,
    /// Output times inside `[1/R, R]`.
    pub times: Vec<f64>,
    pub path_dt: f64,
    #[serde(default = "default_theta_reg")]
    pub theta_reg: f64,
}

fn default_theta_reg() -> f64 {
    0.3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailsRow {
    pub eps: f64,
    pub median: f64,
    pub median_se: f64,
    pub seminorms: Vec<f64>,
    /// `P(seminorm > median + lambda)` at the report's `lambdas`.
    pub survival: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailsReport {
    pub alpha: f64,
    pub beta: f64,
    pub lambdas: Vec<f64>,
    pub rows: Vec<TailsRow>,
    /// Log-log slope of the median seminorm against `eps`.
    pub slope: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// Discrete Hölder quotient `sup |w(x,s) - w(y,t)| / (|x-y|^alpha + |s-t|^beta)`.
pub fn holder_seminorm(points: &[Vec<f64>], times: &[f64], values: &[Vec<f64>], alpha: f64, beta: f64) -> f64 {
    let mut best = 0.0f64;
    let n = points.len();
    for k1 in 0..times.len() {
        for k2 in k1..times.len() {
            let dt = (times[k1] - times[k2]).abs().powf(beta);
            for i in 0..n {
                let j0 = if k1 == k2 { i + 1 } else { 0 };
                for j in j0..n {
                    let dx = norm(&sub(&points[i], &points[j])).powf(alpha);
                    let den = dx + dt;
                    if den > 0.0 {
                        best = best.max((values[k1][i] - values[k2][j]).abs() / den);
                    }
                }
            }
        }
    }
    best
}

/// Hölder seminorm of `u^eps - median(u^eps)` (critical scaling) over
/// `B_R x [1/R, R]`, per realization and `eps`.
pub fn regularity_tails(
    opts: &TailsOptions,
    field: &FieldSpec,
    ham: &PowerLawHamiltonian,
    master_seed: u64,
) -> Result<TailsReport> {
    if opts.samples < 100 {
        return Err(Error::Statistics(format!("{} samples are too few for tail quantiles; need 100", opts.samples)));
    }
    if !(opts.r > 1.0) {
        return param("R must exceed 1");
    }
    if opts.times.iter().any(|t| *t < 1.0 / opts.r - 1e-12 || *t > opts.r + 1e-12) {
        return param("tail times must lie in [1/R, R]");
    }
    let d = field.dimension;
    let alpha = opts.theta_reg;
    let beta = opts.theta_reg / ham.q;
    let t_max = opts.times.iter().copied().fold(0.0, f64::max);
    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    for &eps in &opts.eps_list {
        let micro = opts.spacing / (eps * opts.resolution.h);
        let stride = micro.round();
        if stride < 1.0 || (micro - stride).abs() > 1e-9 * micro {
            return Err(Error::Alignment(format!(
                "spacing {} is not a multiple of the macroscopic lattice step {}",
                opts.spacing,
                eps * opts.resolution.h
            )));
        }
        let hl = HopfLaxOptions {
            resolution: opts.resolution.clone(),
            lower: vec![-opts.r; d],
            upper: vec![opts.r; d],
            radius: Some(opts.radius),
            c_hat: 2.0,
            stride: stride as usize,
        };
        let sols: Vec<crate::hj::SolutionField> = (0..opts.samples as u64)
            .into_par_iter()
            .map(|i| {
                let env = sample_environment_tagged(field, t_max / eps, opts.path_dt, master_seed, TAILS_TAG, i)?;
                hopf_lax_solve(&opts.u0, &env.forcing(), ham, eps, 0.5, &hl, &opts.times)
            })
            .collect::<Result<_>>()?;
        let first = &sols[0];
        let keep: Vec<usize> = (0..first.points.len()).filter(|i| norm(&first.points[*i]) <= opts.r + 1e-9).collect();
        let points: Vec<Vec<f64>> = keep.iter().map(|i| first.points[*i].clone()).collect();
        let center: Vec<Vec<f64>> = (0..opts.times.len())
            .map(|k| keep.iter().map(|i| stats::median(&sols.iter().map(|s| s.values[k][*i]).collect::<Vec<_>>())).collect())
            .collect();
        let seminorms: Vec<f64> = sols
            .iter()
            .map(|s| {
                let w: Vec<Vec<f64>> = (0..opts.times.len())
                    .map(|k| keep.iter().zip(&center[k]).map(|(i, c)| s.values[k][*i] - c).collect())
                    .collect();
                holder_seminorm(&points, &opts.times, &w, alpha, beta)
            })
            .collect();
        let truncated = sols.iter().filter(|s| !s.warnings.is_empty()).count();
        if truncated > 0 {
            warnings.push(format!("eps = {eps}: {truncated} solves reported localization truncation"));
        }
        rows.push(TailsRow {
            eps,
            median: stats::median(&seminorms),
            median_se: stats::median_se(&seminorms),
            seminorms,
            survival: Vec::new(),
        });
    }
    let scale = rows.iter().map(|r| r.median).fold(0.0, f64::max);
    let lambdas: Vec<f64> = (0..=10).map(|i| scale * i as f64 / 10.0).collect();
    for row in &mut rows {
        let shifted: Vec<f64> = lambdas.iter().map(|l| row.median + l).collect();
        row.survival = stats::survival(&row.seminorms, &shifted);
    }
    let eps: Vec<f64> = rows.iter().map(|r| r.eps).collect();
    let med: Vec<f64> = rows.iter().map(|r| r.median).collect();
    let slope = if med.iter().all(|m| *m > 0.0) && eps.len() >= 2 { stats::log_log_slope(&eps, &med) } else { f64::NAN };
    Ok(TailsReport { alpha, beta, lambdas, rows, slope, warnings })
}

/// One probe `(x, y, s, t)` for the local-uniform convergence diagnostic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Probe {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub s: f64,
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceOptions {
    pub probes: Vec<Probe>,
    pub eps_list: Vec<f64>,
    pub samples: usize,
    /// Microscopic lattice for `L^eps`.
    pub lattice: LatticeSpec,
    pub path_dt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub eps: f64,
    pub mean: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub rows: Vec<ConvergenceRow>,
    pub decreasing: bool,
}

/// Mean over realizations of `max_probe |L^eps - (t-s) L-bar((y-x)/(t-s))|`.
pub fn homog_convergence(
    opts: &ConvergenceOptions,
    table: &EffectiveTable,
    field: &FieldSpec,
    ham: &PowerLawHamiltonian,
    master_seed: u64,
) -> Result<ConvergenceReport> {
    if opts.samples < 2 || opts.probes.is_empty() {
        return param("convergence diagnostic needs probes and at least two samples");
    }
    let t_max = opts.probes.iter().map(|p| p.t).fold(0.0, f64::max);
    let mut rows = Vec::new();
    for &eps in &opts.eps_list {
        let per: Vec<f64> = (0..opts.samples as u64)
            .into_par_iter()
            .map(|i| -> Result<f64> {
                let env = sample_environment_tagged(field, t_max / eps, opts.path_dt, master_seed, CONVERGENCE_TAG, i)?;
                let mut worst = 0.0f64;
                for pr in &opts.probes {
                    let l = scaled_lagrangian(&pr.x, &pr.y, pr.s, pr.t, eps, 0.5, &env.forcing(), ham, &opts.lattice)?;
                    let tau = pr.t - pr.s;
                    let v: Vec<f64> = pr.y.iter().zip(&pr.x).map(|(b, a)| (b - a) / tau).collect();
                    worst = worst.max((l.value - tau * table.lbar_at(&v)).abs());
                }
                Ok(worst)
            })
            .collect::<Result<_>>()?;
        let s = Summary::of(&per);
        rows.push(ConvergenceRow { eps, mean: s.mean, se: s.se });
    }
    let means: Vec<f64> = rows.iter().map(|r| r.mean).collect();
    let ses: Vec<f64> = rows.iter().map(|r| r.se).collect();
    let decreasing = stats::is_decreasing_within(&means, &ses, 3.0);
    Ok(ConvergenceReport { rows, decreasing })
}
