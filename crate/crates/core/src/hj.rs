//! Initial-value problem `du + H(Du) dt = eps^theta f(x/eps) . dB^eps`.
//!
//! Two solvers: the Hopf-Lax formula `u(x,t) = min_y u0(y) + L^eps(y,x,0,t)`
//! evaluated as one min-plus lattice sweep in the microscopic frame, and a
//! Lax-Friedrichs scheme for the transformed equation
//! `v_t + H(Dv + Dg(x) . B(t)) = 0`, `v = u - g . B`, `g = eps^theta f(./eps)`.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::env::{BrownianPath, Forcing, ScaledField, VectorField};
use crate::error::{param, Error, Result};
use crate::hamiltonian::PowerLawHamiltonian;
use crate::optimizer::{sweep, Geometry, LatticeSpec, GROWTH_ALPHA};

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialDatum {
    /// `p . x`
    Linear { p: Vec<f64> },
    /// `height (1 - |x - c|^2 / r^2)^2` inside the ball, zero outside.
    Bump { center: Vec<f64>, radius: f64, height: f64 },
    /// `slope |x - c|`
    Cone { center: Vec<f64>, slope: f64 },
    /// Piecewise-linear interpolation of `(x_i, u_i)` in one dimension,
    /// constant beyond the end points.
    Tabulated { x: Vec<f64>, u: Vec<f64> },
}

impl InitialDatum {
    pub fn zero(d: usize) -> InitialDatum {
        InitialDatum::Linear { p: vec![0.0; d] }
    }

    pub fn dim(&self) -> Option<usize> {
        match self {
            InitialDatum::Linear { p } => Some(p.len()),
            InitialDatum::Bump { center, .. } | InitialDatum::Cone { center, .. } => Some(center.len()),
            InitialDatum::Tabulated { .. } => Some(1),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            InitialDatum::Linear { p } if p.iter().all(|x| x.is_finite()) => Ok(()),
            InitialDatum::Bump { radius, height, center }
                if *radius > 0.0 && height.is_finite() && center.iter().all(|x| x.is_finite()) =>
            {
                Ok(())
            }
            InitialDatum::Cone { slope, center } if slope.is_finite() && center.iter().all(|x| x.is_finite()) => {
                Ok(())
            }
            InitialDatum::Tabulated { x, u } => {
                if x.is_empty() || x.len() != u.len() {
                    return param("tabulated datum needs matching, non-empty x and u columns");
                }
                if x.iter().chain(u).any(|v| !v.is_finite()) {
                    return param("tabulated datum has non-finite entries");
                }
                if x.windows(2).any(|w| !(w[0] < w[1])) {
                    return param("tabulated x must be strictly increasing");
                }
                Ok(())
            }
            _ => param(format!("invalid initial datum {self:?}")),
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            InitialDatum::Linear { p } => p.iter().zip(x).map(|(a, b)| a * b).sum(),
            InitialDatum::Bump { center, radius, height } => {
                let r2: f64 = x.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum::<f64>() / (radius * radius);
                if r2 >= 1.0 {
                    0.0
                } else {
                    height * (1.0 - r2) * (1.0 - r2)
                }
            }
            InitialDatum::Cone { center, slope } => {
                slope * x.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum::<f64>().sqrt()
            }
            InitialDatum::Tabulated { x: xs, u } => {
                let z = x[0];
                if z <= xs[0] {
                    return u[0];
                }
                if z >= xs[xs.len() - 1] {
                    return u[u.len() - 1];
                }
                let k = xs.partition_point(|v| *v <= z);
                let (x0, x1, u0, u1) = (xs[k - 1], xs[k], u[k - 1], u[k]);
                u0 + (u1 - u0) * (z - x0) / (x1 - x0)
            }
        }
    }

    /// Parses a two-column CSV (`x,u` header) into a tabulated datum.
    pub fn parse_tabulated<R: Read>(input: R) -> Result<InitialDatum> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
        let headers = reader.headers()?.clone();
        if headers.len() != 2 || &headers[0] != "x" || &headers[1] != "u" {
            return Err(Error::Parse("tabulated datum header must be `x,u`".into()));
        }
        let (mut x, mut u) = (Vec::new(), Vec::new());
        for record in reader.records() {
            let record = record?;
            if record.len() != 2 {
                return Err(Error::Parse("tabulated datum rows need two fields".into()));
            }
            let parse = |s: &str| s.parse::<f64>().map_err(|e| Error::Parse(format!("{s:?}: {e}")));
            x.push(parse(&record[0])?);
            u.push(parse(&record[1])?);
        }
        let datum = InitialDatum::Tabulated { x, u };
        datum.validate()?;
        Ok(datum)
    }

    pub fn write_tabulated<W: Write>(&self, out: W) -> Result<()> {
        let InitialDatum::Tabulated { x, u } = self else {
            return param("only tabulated data serialize to CSV");
        };
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x", "u"])?;
        for (a, b) in x.iter().zip(u) {
            w.write_record([a.to_string(), b.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Grid values `u(x_i, t_k)` with row-major points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionField {
    pub dim: usize,
    pub points: Vec<Vec<f64>>,
    pub times: Vec<f64>,
    /// `values[k][i] = u(points[i], times[k])`.
    pub values: Vec<Vec<f64>>,
    pub method: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl SolutionField {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = (1..=self.dim).map(|a| format!("x{a}")).collect();
        header.push("t".into());
        header.push("u".into());
        w.write_record(&header)?;
        for (t, row) in self.times.iter().zip(&self.values) {
            for (p, u) in self.points.iter().zip(row) {
                let mut rec: Vec<String> = p.iter().map(|x| x.to_string()).collect();
                rec.push(t.to_string());
                rec.push(u.to_string());
                w.write_record(&rec)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Index of the point closest to `x`.
    pub fn nearest(&self, x: &[f64]) -> usize {
        let dist = |p: &Vec<f64>| p.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        (0..self.points.len())
            .min_by(|a, b| dist(&self.points[*a]).total_cmp(&dist(&self.points[*b])))
            .unwrap_or(0)
    }

    pub fn time_index(&self, t: f64) -> Option<usize> {
        self.times.iter().position(|s| (s - t).abs() <= 1e-9 * t.abs().max(1.0))
    }
}

/// Lattice steps of the Hopf-Lax sweep, in the microscopic frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeResolution {
    pub h: f64,
    pub dt: f64,
    pub v_max: f64,
    #[serde(default = "default_subsamples")]
    pub subsamples: usize,
}

fn default_subsamples() -> usize {
    crate::action::DEFAULT_SUBSAMPLES
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HopfLaxOptions {
    pub resolution: LatticeResolution,
    /// Macroscopic output box.
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Localization radius; derived from `c_hat` when absent.
    #[serde(default)]
    pub radius: Option<f64>,
    /// Envelope constant from the growth diagnostic.
    #[serde(default = "default_c_hat")]
    pub c_hat: f64,
    /// Keep every `stride`-th lattice cell in the output.
    #[serde(default = "default_stride")]
    pub stride: usize,
}

fn default_c_hat() -> f64 {
    2.0
}

fn default_stride() -> usize {
    1
}

/// `M = 1.5 ((C (2 + 2 |u0| + C t^alpha)) t^(q'-1))^(1/q')`: sources farther
/// than `M` from `x` cannot be optimal.
pub fn localization_radius(u0_sup: f64, t: f64, c_hat: f64, ham: &PowerLawHamiltonian) -> f64 {
    let qp = ham.q_prime();
    let inner = c_hat * (2.0 + 2.0 * u0_sup + c_hat * t.powf(GROWTH_ALPHA));
    1.5 * (inner * t.powf(qp - 1.0)).powf(1.0 / qp)
}

fn sup_over(u0: &InitialDatum, lower: &[f64], upper: &[f64]) -> f64 {
    let n = 64;
    let d = lower.len();
    let mut best = 0.0f64;
    let total = if d == 1 { n + 1 } else { (n + 1) * (n + 1) };
    for idx in 0..total {
        let (i, j) = (idx % (n + 1), idx / (n + 1));
        let mut x = vec![0.0; d];
        x[0] = lower[0] + (upper[0] - lower[0]) * i as f64 / n as f64;
        if d == 2 {
            x[1] = lower[1] + (upper[1] - lower[1]) * j as f64 / n as f64;
        }
        best = best.max(u0.eval(&x).abs());
    }
    best
}

/// Hopf-Lax solution at macroscopic `times` (each a multiple of `eps dt`).
pub fn hopf_lax_solve(
    u0: &InitialDatum,
    forcing: &Forcing,
    ham: &PowerLawHamiltonian,
    eps: f64,
    theta: f64,
    opts: &HopfLaxOptions,
    times: &[f64],
) -> Result<SolutionField> {
    u0.validate()?;
    if !(eps > 0.0) {
        return param("eps must be positive");
    }
    let d = opts.lower.len();
    if opts.upper.len() != d || u0.dim().is_some_and(|k| k != d) {
        return param("output box and datum dimensions differ");
    }
    let t_max = times.iter().copied().fold(0.0, f64::max);
    let radius = match opts.radius {
        Some(r) => r,
        None => localization_radius(sup_over(u0, &opts.lower, &opts.upper), t_max, opts.c_hat, ham),
    };
    let res = &opts.resolution;
    let spec = LatticeSpec {
        lower: opts.lower.iter().map(|a| (a - radius) / eps).collect(),
        upper: opts.upper.iter().map(|b| (b + radius) / eps).collect(),
        h: res.h,
        dt: res.dt,
        v_max: res.v_max,
        subsamples: res.subsamples,
        drift: Vec::new(),
    };
    let geo = Geometry::new(&spec, ham)?;
    let field = ScaledField { inner: forcing.field, amplitude: eps.powf(theta - 0.5), scale: 1.0 };
    let micro = Forcing { field: &field, path: forcing.path };
    let slices: Vec<usize> = times.iter().map(|t| geo.slices(0.0, t / eps)).collect::<Result<_>>()?;
    let mut record = slices.clone();
    record.sort_unstable();
    record.dedup();
    let init: Vec<f64> = (0..geo.ncells())
        .map(|c| {
            let x: Vec<f64> = geo.position(c, 0.0)[..d].iter().map(|v| v * eps).collect();
            u0.eval(&x) / eps
        })
        .collect();
    let k_max = record.last().copied().unwrap_or(0);
    let out = sweep(&geo, micro, 0.0, k_max, &init, &record, false)?;

    let stride = opts.stride.max(1);
    let inside = |c: usize| -> bool {
        let coords = geo.coords(c);
        let x = geo.position(c, 0.0);
        (0..d).all(|a| {
            let mx = x[a] * eps;
            mx >= opts.lower[a] - 1e-9 && mx <= opts.upper[a] + 1e-9 && coords[a] % stride == 0
        })
    };
    let cells: Vec<usize> = (0..geo.ncells()).filter(|c| inside(*c)).collect();
    let points: Vec<Vec<f64>> =
        cells.iter().map(|c| geo.position(*c, 0.0)[..d].iter().map(|v| v * eps).collect()).collect();
    let mut values = Vec::with_capacity(times.len());
    let mut touched = 0;
    for k in &slices {
        if *k == 0 {
            values.push(points.iter().map(|p| u0.eval(p)).collect());
            continue;
        }
        let slot = record.binary_search(k).expect("recorded");
        values.push(cells.iter().map(|c| out.values[slot][*c] * eps).collect());
        touched += cells.iter().filter(|c| out.touched[slot][**c]).count();
    }
    let mut warnings = Vec::new();
    if touched > 0 {
        warnings.push(format!(
            "truncation: {touched} output values come from paths touching the localization box (radius {radius})"
        ));
    }
    Ok(SolutionField { dim: d, points, times: times.to_vec(), values, method: "hopf-lax".into(), warnings })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FdGrid {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub h: f64,
}

/// Lax-Friedrichs solution of the transformed equation, mapped back to `u`.
///
/// The dissipation coefficient defaults to `max |DH|` over momenta of size
/// `Lip(u0) + 2 sup|Dg| sup|B|` and is raised whenever the discrete momenta
/// outgrow it; passing it explicitly fixes it, so two solves use identical
/// time steps.
pub fn fd_transformed_solve(
    u0: &InitialDatum,
    forcing: &Forcing,
    ham: &PowerLawHamiltonian,
    eps: f64,
    theta: f64,
    grid: &FdGrid,
    cfl: f64,
    times: &[f64],
    dissipation: Option<f64>,
) -> Result<SolutionField> {
    u0.validate()?;
    if !(cfl > 0.0 && cfl <= 1.0) {
        return Err(Error::StepSize(format!("cfl = {cfl} must lie in (0, 1]")));
    }
    if !(eps > 0.0) || !(grid.h > 0.0) {
        return param("eps and h must be positive");
    }
    if times.windows(2).any(|w| w[0] > w[1]) || times.iter().any(|t| *t < 0.0) {
        return param("times must be non-negative and sorted");
    }
    let d = grid.lower.len();
    if d == 0 || d > 2 || grid.upper.len() != d || forcing.field.dim() != d {
        return param("finite differences support d = 1, 2 with matching field dimension");
    }
    let mut warnings = Vec::new();
    if grid.h > eps / 8.0 {
        warnings.push(format!("h = {} does not resolve eps / 8 = {}", grid.h, eps / 8.0));
    }
    let t_max = times.last().copied().unwrap_or(0.0);
    let bpath: BrownianPath = forcing.path.rescale(eps, t_max.max(eps * forcing.path.dt()))?;
    let g = ScaledField { inner: forcing.field, amplitude: eps.powf(theta), scale: 1.0 / eps };
    let m = g.channels();

    let mut n = [1usize; 2];
    let mut lo = [0.0; 2];
    for a in 0..d {
        lo[a] = grid.lower[a];
        n[a] = ((grid.upper[a] - grid.lower[a]) / grid.h + 1e-9).floor() as usize + 1;
        if n[a] < 3 {
            return param("finite-difference grid needs at least three nodes per axis");
        }
    }
    let total = n[0] * n[1];
    let point = |idx: usize| -> Vec<f64> {
        let (i, j) = (idx / n[1], idx % n[1]);
        let mut x = vec![lo[0] + i as f64 * grid.h];
        if d == 2 {
            x.push(lo[1] + j as f64 * grid.h);
        }
        x
    };
    let points: Vec<Vec<f64>> = (0..total).map(point).collect();
    let mut gval = vec![0.0; total * m];
    let mut dg = vec![0.0; total * m * d];
    for (idx, x) in points.iter().enumerate() {
        g.value(x, &mut gval[idx * m..(idx + 1) * m]);
        g.gradient(x, &mut dg[idx * m * d..(idx + 1) * m * d]);
    }
    let mut u: Vec<f64> = points.iter().map(|x| u0.eval(x)).collect();

    let alpha0 = match dissipation {
        Some(a) => a,
        None => {
            let mut lip = 0.0f64;
            for idx in 0..total {
                let (i, j) = (idx / n[1], idx % n[1]);
                if i + 1 < n[0] {
                    lip = lip.max((u[idx + n[1]] - u[idx]).abs() / grid.h);
                }
                if d == 2 && j + 1 < n[1] {
                    lip = lip.max((u[idx + 1] - u[idx]).abs() / grid.h);
                }
            }
            let dg_sup = (0..total).map(|i| norm(&dg[i * m * d..(i + 1) * m * d])).fold(0.0, f64::max);
            let b_sup = (0..=bpath.steps()).map(|k| norm(bpath.node(k))).fold(0.0, f64::max);
            let p = lip + 2.0 * dg_sup * b_sup;
            (ham.c * p.powf(ham.q - 1.0)).max(1e-12)
        }
    };
    let adaptive = dissipation.is_none();
    let mut alpha = alpha0;

    let mut out_values = Vec::with_capacity(times.len());
    let mut t = 0.0;
    let mut next = u.clone();
    let mut pbar = vec![0.0; total * d];
    let mut jump = vec![0.0; total];
    let mut bmid = vec![0.0; m];
    let mut bout = vec![0.0; m];
    let mut worst = 0.0f64;
    let stride = [n[1], 1];
    for &t_out in times {
        while t_out - t > 1e-12 * t_out.max(1.0) {
            // Momenta are frozen at the start of the step to size it.
            bpath.eval(t, &mut bmid);
            let mut speed = 0.0f64;
            for idx in 0..total {
                let c = [idx / n[1], idx % n[1]];
                jump[idx] = 0.0;
                for a in 0..d {
                    let s = stride[a];
                    let minus = if c[a] > 0 { Some((u[idx] - u[idx - s]) / grid.h) } else { None };
                    let plus = if c[a] + 1 < n[a] { Some((u[idx + s] - u[idx]) / grid.h) } else { None };
                    // Ghost nodes copy the edge value, which keeps the scheme monotone.
                    let (pm, pp) = (minus.unwrap_or(0.0), plus.unwrap_or(0.0));
                    pbar[idx * d + a] = 0.5 * (pm + pp);
                    jump[idx] += 0.5 * (pp - pm);
                }
                let mut p = [0.0; 2];
                for a in 0..d {
                    let shift: f64 = (0..m).map(|ch| dg[idx * m * d + ch * d + a] * bmid[ch]).sum();
                    p[a] = pbar[idx * d + a] + shift;
                }
                speed = speed.max(ham.c * norm(&p[..d]).powf(ham.q - 1.0));
            }
            if adaptive && speed > alpha {
                alpha = 1.25 * speed;
            }
            let dt = (cfl * grid.h / (d as f64 * alpha)).min(t_out - t);
            bpath.eval(t + 0.5 * dt, &mut bmid);
            for idx in 0..total {
                let mut p = [0.0; 2];
                for a in 0..d {
                    let shift: f64 = (0..m).map(|ch| dg[idx * m * d + ch * d + a] * bmid[ch]).sum();
                    p[a] = pbar[idx * d + a] + shift;
                }
                let p = &p[..d];
                let sp = ham.c * norm(p).powf(ham.q - 1.0);
                if sp > alpha * (1.0 + 1e-9) {
                    worst = worst.max(sp);
                }
                next[idx] = u[idx] - dt * (ham.h(p) - alpha * jump[idx]);
            }
            std::mem::swap(&mut u, &mut next);
            t += dt;
        }
        t = t.max(t_out);
        if t_out == 0.0 {
            out_values.push(points.iter().map(|x| u0.eval(x)).collect());
            continue;
        }
        bpath.eval(t_out, &mut bout);
        out_values.push(
            (0..total)
                .map(|idx| u[idx] + (0..m).map(|c| gval[idx * m + c] * bout[c]).sum::<f64>())
                .collect(),
        );
    }
    if worst > 0.0 {
        warnings.push(format!(
            "observed |DH| = {worst} exceeded the dissipation coefficient (now {alpha}); the scheme may not be monotone"
        ));
    }
    Ok(SolutionField { dim: d, points, times: times.to_vec(), values: out_values, method: "lax-friedrichs".into(), warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{sample_environment, FieldSpec};

    fn quadratic() -> PowerLawHamiltonian {
        PowerLawHamiltonian::quadratic()
    }

    fn opts(radius: f64) -> HopfLaxOptions {
        HopfLaxOptions {
            resolution: LatticeResolution { h: 1.0 / 64.0, dt: 1.0 / 16.0, v_max: 4.0, subsamples: 2 },
            lower: vec![-1.0],
            upper: vec![1.0],
            radius: Some(radius),
            c_hat: 2.0,
            stride: 4,
        }
    }

    #[test]
    fn tabulated_round_trip() {
        let datum = InitialDatum::parse_tabulated("x,u\n-1,0\n0,1.5\n2,-1\n".as_bytes()).unwrap();
        assert_eq!(datum.eval(&[-0.5]), 0.75);
        assert_eq!(datum.eval(&[5.0]), -1.0);
        let mut buf = Vec::new();
        datum.write_tabulated(&mut buf).unwrap();
        assert_eq!(InitialDatum::parse_tabulated(buf.as_slice()).unwrap(), datum);
        assert!(InitialDatum::parse_tabulated("x,u\n1,0\n0,1\n".as_bytes()).is_err());
        assert!(InitialDatum::parse_tabulated("a,b\n".as_bytes()).is_err());
    }

    #[test]
    fn zero_noise_linear_datum() {
        let env = sample_environment(&FieldSpec::zero(1, 1), 1.0, 1.0 / 32.0, 1, 0).unwrap();
        let u0 = InitialDatum::Linear { p: vec![0.75] };
        let sol = hopf_lax_solve(&u0, &env.forcing(), &quadratic(), 1.0, 0.5, &opts(2.0), &[0.0, 0.5, 1.0]).unwrap();
        for (k, t) in sol.times.iter().enumerate() {
            for (p, u) in sol.points.iter().zip(&sol.values[k]) {
                let exact = 0.75 * p[0] - t * 0.75 * 0.75 / 2.0;
                assert!((u - exact).abs() < 0.02, "t = {t}, x = {p:?}: {u} vs {exact}");
            }
        }
    }

    #[test]
    fn zero_noise_cone_matches_brute_force() {
        let env = sample_environment(&FieldSpec::zero(1, 1), 1.0, 1.0 / 32.0, 1, 0).unwrap();
        let u0 = InitialDatum::Cone { center: vec![0.0], slope: 1.0 };
        let sol = hopf_lax_solve(&u0, &env.forcing(), &quadratic(), 1.0, 0.5, &opts(2.0), &[1.0]).unwrap();
        for (p, u) in sol.points.iter().zip(&sol.values[0]) {
            let exact = (-3000..=3000)
                .map(|i| {
                    let y = p[0] + i as f64 * 1e-3;
                    y.abs() + (p[0] - y).powi(2) / 2.0
                })
                .fold(f64::INFINITY, f64::min);
            assert!((u - exact).abs() < 0.02, "x = {p:?}: {u} vs {exact}");
        }
    }

    #[test]
    fn comparison_and_constant_covariance() {
        let env = sample_environment(&FieldSpec::single_mode(0.5, 1.0), 1.0, 1.0 / 32.0, 3, 0).unwrap();
        let bump = InitialDatum::Bump { center: vec![0.0], radius: 1.0, height: 1.0 };
        let lifted = InitialDatum::Tabulated {
            x: (-40..=40).map(|i| i as f64 * 0.1).collect(),
            u: (-40..=40).map(|i| bump.eval(&[i as f64 * 0.1]) + 0.25).collect(),
        };
        let o = opts(1.0);
        let a = hopf_lax_solve(&bump, &env.forcing(), &quadratic(), 1.0, 0.5, &o, &[1.0]).unwrap();
        let b = hopf_lax_solve(&lifted, &env.forcing(), &quadratic(), 1.0, 0.5, &o, &[1.0]).unwrap();
        for (x, y) in a.values[0].iter().zip(&b.values[0]) {
            assert!(x <= y);
        }
    }

    #[test]
    fn fd_constant_field_decouples() {
        let env = sample_environment(&FieldSpec::constant(1, vec![0.8]), 1.0, 1.0 / 64.0, 2, 0).unwrap();
        let zero = sample_environment(&FieldSpec::zero(1, 1), 1.0, 1.0 / 64.0, 2, 0).unwrap();
        let u0 = InitialDatum::Bump { center: vec![0.0], radius: 1.0, height: 1.0 };
        let grid = FdGrid { lower: vec![-2.0], upper: vec![2.0], h: 1.0 / 64.0 };
        let a = fd_transformed_solve(&u0, &env.forcing(), &quadratic(), 1.0, 0.5, &grid, 0.9, &[1.0], Some(2.0)).unwrap();
        let b = fd_transformed_solve(&u0, &zero.forcing(), &quadratic(), 1.0, 0.5, &grid, 0.9, &[1.0], Some(2.0)).unwrap();
        let shift = 0.8 * env.path.node(64)[0];
        for (x, y) in a.values[0].iter().zip(&b.values[0]) {
            assert!((x - y - shift).abs() < 1e-12);
        }
    }

    #[test]
    fn fd_linear_transport() {
        let zero = sample_environment(&FieldSpec::zero(1, 1), 1.0, 1.0 / 64.0, 2, 0).unwrap();
        let u0 = InitialDatum::Linear { p: vec![0.5] };
        let grid = FdGrid { lower: vec![-2.0], upper: vec![2.0], h: 1.0 / 128.0 };
        let sol = fd_transformed_solve(&u0, &zero.forcing(), &quadratic(), 1.0, 0.5, &grid, 0.9, &[1.0], None).unwrap();
        // The edges carry an artificial boundary layer.
        for (p, u) in sol.points.iter().zip(&sol.values[0]).filter(|(p, _)| p[0].abs() <= 1.0) {
            assert!((u - (0.5 * p[0] - 0.125)).abs() < 0.05);
        }
        assert!(fd_transformed_solve(&u0, &zero.forcing(), &quadratic(), 1.0, 0.5, &grid, 1.5, &[1.0], None).is_err());
    }
}
