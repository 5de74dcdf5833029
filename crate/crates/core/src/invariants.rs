//! Property checks run by `check-invariants`: conjugate duality of the
//! Hamiltonian, sub-additivity of the lattice Lagrangian, and convexity,
//! duality and baseline dominance of the estimated effective functions.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::env::{sample_environment_tagged, substream};
use crate::error::Result;
use crate::hamiltonian::{cube_grid, legendre_numeric, PowerLawHamiltonian};
use crate::homog::{effective_hamiltonian, estimate_lbar, EffectiveTable, EstimatorLattice};
use crate::optimizer::{check_subadditivity, LatticeSpec, Triple};

pub const INVARIANT_TAG: &str = "invariants";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantReport {
    pub checks: Vec<Check>,
    /// The effective table the `L-bar` checks were run on.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<EffectiveTable>,
}

impl InvariantReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }
}

fn check(name: &str, passed: bool, detail: String) -> Check {
    Check { name: name.into(), passed, detail }
}

fn random_point(rng: &mut impl Rng, d: usize, radius: f64) -> Vec<f64> {
    (0..d).map(|_| radius * (2.0 * rng.random::<f64>() - 1.0)).collect()
}

/// Fenchel-Young inequality on random pairs, with equality at `v = v(p)`.
pub fn fenchel_young(ham: &PowerLawHamiltonian, d: usize, seed: u64) -> Check {
    let mut rng = substream(seed, INVARIANT_TAG, 1, 0);
    let mut worst_gap = f64::INFINITY;
    let mut worst_eq = 0.0f64;
    for _ in 0..500 {
        let p = random_point(&mut rng, d, 3.0);
        let v = random_point(&mut rng, d, 3.0);
        let pv: f64 = p.iter().zip(&v).map(|(a, b)| a * b).sum();
        worst_gap = worst_gap.min(ham.h(&p) + ham.h_star(&v) - pv);
        let vp = ham.map_v(&p);
        let pvp: f64 = p.iter().zip(&vp).map(|(a, b)| a * b).sum();
        let scale = 1.0 + pvp.abs();
        worst_eq = worst_eq.max((ham.h(&p) + ham.h_star(&vp) - pvp).abs() / scale);
    }
    let passed = worst_gap >= -1e-12 && worst_eq <= 1e-10;
    check("fenchel-young", passed, format!("min H + H* - p.v = {worst_gap:e}; max equality defect {worst_eq:e}"))
}

/// Midpoint convexity of `H` and `H*` on random segments.
pub fn convexity_of_h(ham: &PowerLawHamiltonian, d: usize, seed: u64) -> Check {
    let mut rng = substream(seed, INVARIANT_TAG, 2, 0);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..1000 {
        let a = random_point(&mut rng, d, 4.0);
        let b = random_point(&mut rng, d, 4.0);
        let m: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect();
        for f in [PowerLawHamiltonian::h, PowerLawHamiltonian::h_star] {
            let (fa, fb, fm) = (f(ham, &a), f(ham, &b), f(ham, &m));
            worst = worst.max((fm - 0.5 * (fa + fb)) / (1.0 + fa.abs() + fb.abs()));
        }
    }
    check("convexity of H and H*", worst <= 1e-12, format!("max midpoint excess {worst:e}"))
}

/// Numeric conjugate of `H*` on a grid against the closed-form `H`.
pub fn biconjugation(ham: &PowerLawHamiltonian, momenta: &[Vec<f64>]) -> Result<Check> {
    let d = momenta.first().map_or(1, |p| p.len());
    let max_p = momenta.iter().map(|p| p.iter().map(|x| x * x).sum::<f64>().sqrt()).fold(1.0, f64::max);
    // The maximizer is v(p), of norm c |p|^(q-1).
    let radius = ham.legendre_radius(max_p).min(1.5 * (ham.c * max_p.powf(ham.q - 1.0)) + 1.0);
    let step = if d == 1 { 1e-3 } else { 0.02 };
    let points = cube_grid(d, radius, step);
    let values: Vec<f64> = points.iter().map(|v| ham.h_star(v)).collect();
    let tol = if d == 1 { 1e-4 } else { 2e-3 };
    let mut worst = 0.0f64;
    let mut truncated = false;
    for p in momenta {
        let c = legendre_numeric(&points, &values, p)?;
        truncated |= c.truncation_suspect;
        worst = worst.max((c.value - ham.h(p)).abs());
    }
    Ok(check(
        "biconjugation",
        worst <= tol && !truncated,
        format!("max |(H*)*(p) - H(p)| = {worst:e} (tolerance {tol:e}); boundary maximizer: {truncated}"),
    ))
}

/// Sub-additivity of the lattice Lagrangian on random grid-aligned triples.
pub fn subadditivity(cfg: &ExperimentConfig, lattice: &LatticeSpec, triples: usize) -> Result<Check> {
    let d = cfg.field.dimension;
    let span = 4.0;
    let env = sample_environment_tagged(&cfg.field, span, cfg.path_dt, cfg.seed, INVARIANT_TAG, 0)?;
    let mut rng = substream(cfg.seed, INVARIANT_TAG, 3, 0);
    let h = lattice.h;
    let steps = (span / lattice.dt).round() as i64;
    let mut list = Vec::with_capacity(triples);
    // Endpoints stay within half the speed cap of each other and inside [-3, 3].
    let step = |rng: &mut rand_chacha::ChaCha8Rng, from: &[f64], dt: f64| -> Vec<f64> {
        let reach = 0.5 * lattice.v_max * dt;
        from.iter()
            .map(|a| ((a + rng.random_range(-reach..=reach)).clamp(-3.0, 3.0) / h).trunc() * h)
            .collect()
    };
    while list.len() < triples {
        let k0 = rng.random_range(0..steps - 1);
        let k1 = rng.random_range(k0 + 1..steps);
        let k2 = rng.random_range(k1 + 1..=steps);
        let (s, r, t) = (k0 as f64 * lattice.dt, k1 as f64 * lattice.dt, k2 as f64 * lattice.dt);
        let x: Vec<f64> = (0..d).map(|_| (rng.random_range(-2.0..=2.0) / h).round() * h).collect();
        let z = step(&mut rng, &x, r - s);
        let y = step(&mut rng, &z, t - r);
        list.push(Triple { x, z, y, s, r, t });
    }
    let report = check_subadditivity(&env.forcing(), &cfg.hamiltonian, lattice, &list);
    Ok(match report {
        Ok(rep) => check(
            "sub-additivity",
            rep.violations.is_empty(),
            format!("{} triples, {} violations beyond 1e-9 relative", rep.checked, rep.violations.len()),
        ),
        Err(e) => check("sub-additivity", false, format!("evaluation failed: {e}")),
    })
}

/// `L-bar` on the schedule velocities, then convexity, duality sandwich,
/// baseline dominance and the `H-bar` growth bounds.
pub fn effective_checks(cfg: &ExperimentConfig) -> Result<(Vec<Check>, EffectiveTable)> {
    let est = EstimatorLattice { lattice: cfg.lattice.clone(), path_dt: cfg.path_dt };
    let ham = &cfg.hamiltonian;
    let estimates = cfg
        .schedule
        .velocities
        .iter()
        .map(|v| estimate_lbar(v, &cfg.schedule, &cfg.field, ham, &est, cfg.seed))
        .collect::<Result<Vec<_>>>()?;
    let table = effective_hamiltonian(&EffectiveTable::from_estimates(&estimates)?, &cfg.p_grid)?;
    let mut out = Vec::new();
    let viol = table.convexity_violations();
    out.push(check(
        "convexity of L-bar",
        viol.is_empty(),
        format!("{} collinear triples exceed the chord by more than the combined half-widths", viol.len()),
    ));
    let gap = table.duality_gap();
    out.push(check("duality sandwich", gap <= 1e-9, format!("max p.v - L-bar(v) - H-bar(p) = {gap:e}")));
    let worst = estimates
        .iter()
        .map(|e| {
            let se = e.table.last().map_or(0.0, |r| r.se);
            e.value - ham.h_star(&e.v) - 3.0 * se
        })
        .fold(f64::NEG_INFINITY, f64::max);
    out.push(check("baseline dominance", worst <= 1e-9, format!("max L-bar - H* - 3 SE = {worst:e}")));
    let c = ham.growth_constant();
    let bounds_ok = table.p.iter().zip(&table.hbar).all(|(p, h)| {
        let n = p.iter().map(|x| x * x).sum::<f64>().sqrt().powf(ham.q);
        *h >= n / c - c && *h <= c * (n + 1.0)
    });
    out.push(check("H-bar growth bounds", bounds_ok, format!("C = {c}")));
    Ok((out, table))
}

/// Conjugate duality of `H` plus the effective-function checks.
pub fn duality_suite(cfg: &ExperimentConfig) -> Result<InvariantReport> {
    let d = cfg.field.dimension;
    let ham = &cfg.hamiltonian;
    let mut checks = vec![fenchel_young(ham, d, cfg.seed), convexity_of_h(ham, d, cfg.seed)];
    let momenta: Vec<Vec<f64>> = if cfg.p_grid.is_empty() { vec![vec![0.5; d]] } else { cfg.p_grid.clone() };
    checks.push(biconjugation(ham, &momenta)?);
    let (more, table) = effective_checks(cfg)?;
    checks.extend(more);
    Ok(InvariantReport { checks, table: Some(table) })
}

/// Everything `check-invariants` runs.
pub fn check_invariants(cfg: &ExperimentConfig) -> Result<InvariantReport> {
    let mut report = duality_suite(cfg)?;
    let mut lattice = LatticeSpec::cube(cfg.field.dimension, 4.0, cfg.lattice.h.max(0.125), cfg.lattice.dt, cfg.lattice.v_max);
    lattice.subsamples = cfg.lattice.subsamples;
    report.checks.push(subadditivity(cfg, &lattice, 50)?);
    Ok(report)
}
