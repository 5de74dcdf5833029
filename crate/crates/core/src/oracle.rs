//! Closed-form fixture: quadratic kinetic cost with the unbounded linear field
//! `f(x) = x` in one dimension.
//!
//! For `H*(v) = v^2 / 2` the minimal action from `(0, a)` back to `(0, b)` is
//!
//! ```text
//! psi = 1/2 [ (int_a^b B)^2 / (b - a) - int_a^b B^2 ],
//! ```
//!
//! attained by `gamma_t = int_a^t (B - mean B)`. Its mean is `-T^2 / 12` on
//! `[0, T]`, so the time-averaged action is unbounded in `T`: the boundedness
//! assumption on `f` cannot be dropped.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::action::DiscretePath;
use crate::env::{grid_index, sample_path, BrownianPath, Forcing, VectorField};
use crate::error::{param, Error, Result};
use crate::hamiltonian::PowerLawHamiltonian;
use crate::optimizer::{descent_refine, dp_lagrangian, LatticeSpec};

pub const PSI_TAG: &str = "psi";

/// `f(x) = x` for `d = m = 1`. Deliberately outside the bounded field class.
#[derive(Debug, Clone, Copy, Default)]
pub struct LinearField;

impl VectorField for LinearField {
    fn dim(&self) -> usize {
        1
    }

    fn channels(&self) -> usize {
        1
    }

    fn value(&self, x: &[f64], out: &mut [f64]) {
        out[0] = x[0];
    }

    fn gradient(&self, _x: &[f64], out: &mut [f64]) {
        out[0] = 1.0;
    }
}

#[derive(Debug, Clone)]
pub struct PsiFixture {
    pub a: f64,
    pub b: f64,
    pub path: BrownianPath,
}

impl PsiFixture {
    pub fn new(a: f64, b: f64, path: BrownianPath) -> Result<PsiFixture> {
        if !(b > a) {
            return param("psi fixture needs a < b");
        }
        if path.channels() != 1 {
            return param("psi fixture needs a scalar path");
        }
        let fix = PsiFixture { a, b, path };
        fix.range()?;
        Ok(fix)
    }

    fn range(&self) -> Result<(usize, usize)> {
        let dt = self.path.dt();
        let (Some(i), Some(j)) = (grid_index(self.a, dt), grid_index(self.b, dt)) else {
            return Err(Error::Alignment("psi interval endpoints must lie on the path grid".into()));
        };
        if j > self.path.steps() {
            return Err(Error::Range("psi interval exceeds the path horizon".into()));
        }
        Ok((i, j))
    }

    /// Trapezoid integrals `(int B, int B^2)` over `[a, b]`.
    fn integrals(&self) -> (f64, f64) {
        let (i, j) = self.range().expect("validated");
        let dt = self.path.dt();
        let (mut s1, mut s2) = (0.0, 0.0);
        for k in i..j {
            let (u, v) = (self.path.node(k)[0], self.path.node(k + 1)[0]);
            s1 += 0.5 * (u + v) * dt;
            s2 += 0.5 * (u * u + v * v) * dt;
        }
        (s1, s2)
    }
}

pub fn psi_value(fix: &PsiFixture) -> f64 {
    let (s1, s2) = fix.integrals();
    0.5 * (s1 * s1 / (fix.b - fix.a) - s2)
}

/// The closed-form minimizer on the Brownian grid, by cumulative trapezoid.
pub fn psi_minimizer(fix: &PsiFixture) -> DiscretePath {
    let (i, j) = fix.range().expect("validated");
    let (s1, _) = fix.integrals();
    let mean = s1 / (fix.b - fix.a);
    let dt = fix.path.dt();
    let mut nodes = Vec::with_capacity(j - i + 1);
    let mut acc = 0.0;
    nodes.push(0.0);
    for k in i..j {
        acc += (0.5 * (fix.path.node(k)[0] + fix.path.node(k + 1)[0]) - mean) * dt;
        nodes.push(acc);
    }
    DiscretePath { s: fix.a, t: fix.b, dim: 1, nodes }
}

/// Monte Carlo sample of `psi([0, T)) / T` with `steps` Brownian steps.
pub fn psi_mean_samples(horizon: f64, steps: usize, samples: usize, master_seed: u64) -> Result<Vec<f64>> {
    let dt = horizon / steps as f64;
    (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let path = sample_path(horizon, dt, 1, master_seed, PSI_TAG, i)?;
            Ok(psi_value(&PsiFixture::new(0.0, horizon, path)?) / horizon)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsiRow {
    pub realization: u64,
    pub psi_closed_form: f64,
    pub dp_value: f64,
    pub relative_error: f64,
    /// Sup distance between the refined path and the closed-form minimizer.
    pub path_distance: f64,
    pub excluded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsiReport {
    pub rows: Vec<PsiRow>,
    pub excluded: usize,
    /// Fraction of included realizations within 5% relative error.
    pub fraction_within: f64,
    /// Fraction of included realizations with path distance at most 0.05.
    pub path_fraction_within: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PsiDpOptions {
    pub horizon: f64,
    /// Brownian steps on `[0, T]`.
    pub path_steps: usize,
    pub lattice: LatticeSpec,
    pub descent_iterations: usize,
}

impl PsiDpOptions {
    /// `T = 1`, `h = 1/64`, `dt = 1/128`, `V_max = 8`, box `[-3, 3]`.
    pub fn standard() -> PsiDpOptions {
        let mut lattice = LatticeSpec::cube(1, 3.0, 1.0 / 64.0, 1.0 / 128.0, 8.0);
        // f is linear, so the trapezoid rule is exact with one interval per piece.
        lattice.subsamples = 1;
        PsiDpOptions { horizon: 1.0, path_steps: 512, lattice, descent_iterations: 400 }
    }
}

/// Compares lattice minimization (plus descent) with the closed form.
pub fn psi_vs_dp(opts: &PsiDpOptions, samples: usize, master_seed: u64) -> Result<PsiReport> {
    let ham = PowerLawHamiltonian::quadratic();
    let t = opts.horizon;
    let dt = t / opts.path_steps as f64;
    let rows: Vec<PsiRow> = (0..samples as u64)
        .into_par_iter()
        .map(|i| -> Result<PsiRow> {
            let path = sample_path(t, dt, 1, master_seed, PSI_TAG, i)?;
            let fix = PsiFixture::new(0.0, t, path)?;
            let psi = psi_value(&fix);
            let forcing = Forcing { field: &LinearField, path: &fix.path };
            let est = dp_lagrangian(&[0.0], &[0.0], 0.0, t, &forcing, &ham, &opts.lattice)?;
            let refined = descent_refine(&est, &forcing, &ham, opts.descent_iterations)?;
            let excluded = est.warnings.iter().any(|w| w.contains("touches"));
            let star = psi_minimizer(&fix);
            let ratio = opts.path_steps / refined.minimizer.segments();
            let path_distance = (0..=refined.minimizer.segments())
                .map(|k| (refined.minimizer.node(k)[0] - star.node(k * ratio)[0]).abs())
                .fold(0.0, f64::max);
            Ok(PsiRow {
                realization: i,
                psi_closed_form: psi,
                dp_value: refined.value,
                relative_error: (refined.value - psi).abs() / psi.abs(),
                path_distance,
                excluded,
            })
        })
        .collect::<Result<_>>()?;
    let included: Vec<&PsiRow> = rows.iter().filter(|r| !r.excluded).collect();
    let n = included.len().max(1) as f64;
    let fraction_within = included.iter().filter(|r| r.relative_error <= 0.05).count() as f64 / n;
    let path_fraction_within = included.iter().filter(|r| r.path_distance <= 0.05).count() as f64 / n;
    Ok(PsiReport { excluded: rows.len() - included.len(), rows, fraction_within, path_fraction_within })
}
