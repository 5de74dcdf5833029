//! Random environments: smooth random-phase fields `f` and Brownian paths `B`.
//!
//! A field is a finite Fourier sum
//!
//! ```text
//! f(x) = offset + sum_j a_j cos(k_j . x + phi_j)
//! ```
//!
//! with independent uniform phases. Uniform phases make the law of `f`
//! translation invariant; ergodicity additionally needs pairwise rationally
//! independent wavevectors, which [`FieldSpec::validate`] reports as a warning.
//! The Brownian path is sampled on a uniform grid with exact Gaussian
//! increments and interpolated linearly between grid nodes.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};

/// A C¹ vector field `R^d -> R^m` with an analytic gradient.
pub trait VectorField: Send + Sync {
    fn dim(&self) -> usize;
    fn channels(&self) -> usize;
    /// Writes `f(x)` into `out` (length `channels`).
    fn value(&self, x: &[f64], out: &mut [f64]);
    /// Writes `Df(x)` row-major into `out`: `out[c * dim + a] = d f_c / d x_a`.
    fn gradient(&self, x: &[f64], out: &mut [f64]);
    /// True when `Df` vanishes identically.
    fn is_constant(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mode {
    pub amplitude: Vec<f64>,
    pub wavevector: Vec<f64>,
}

fn default_kappa() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSpec {
    pub dimension: usize,
    pub channels: usize,
    #[serde(default)]
    pub modes: Vec<Mode>,
    /// Budget for `sup|f| + sup|Df|`-type bounds.
    pub m0: f64,
    /// Deterministic constant added to every realization (length `channels`).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub offset: Vec<f64>,
    /// Require at least one mode with a nonzero wavevector.
    #[serde(default)]
    pub nonconstant: bool,
    /// Hölder exponent of `Df`; report-only since the fields are smooth.
    #[serde(default = "default_kappa")]
    pub kappa: f64,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl FieldSpec {
    /// The identically zero field.
    pub fn zero(dimension: usize, channels: usize) -> FieldSpec {
        FieldSpec {
            dimension,
            channels,
            modes: Vec::new(),
            m0: 1.0,
            offset: Vec::new(),
            nonconstant: false,
            kappa: default_kappa(),
        }
    }

    /// A deterministic constant field `f = c`.
    pub fn constant(dimension: usize, value: Vec<f64>) -> FieldSpec {
        let m0 = norm(&value).max(1.0);
        FieldSpec { channels: value.len(), offset: value, m0, ..FieldSpec::zero(dimension, 1) }
    }

    /// One scalar mode `a cos(k x + phi)` in dimension one.
    pub fn single_mode(amplitude: f64, wavenumber: f64) -> FieldSpec {
        FieldSpec {
            dimension: 1,
            channels: 1,
            modes: vec![Mode { amplitude: vec![amplitude], wavevector: vec![wavenumber] }],
            m0: amplitude.abs() * (1.0 + wavenumber.abs()),
            offset: Vec::new(),
            nonconstant: wavenumber != 0.0,
            kappa: default_kappa(),
        }
    }

    pub fn offset_or_zero(&self) -> Vec<f64> {
        if self.offset.is_empty() {
            vec![0.0; self.channels]
        } else {
            self.offset.clone()
        }
    }

    /// `(sum_j |a_j| + |offset|, sum_j |a_j| |k_j|)`.
    pub fn sup_bounds(&self) -> (f64, f64) {
        let value = self.modes.iter().map(|m| norm(&m.amplitude)).sum::<f64>()
            + norm(&self.offset_or_zero());
        let grad = self.modes.iter().map(|m| norm(&m.amplitude) * norm(&m.wavevector)).sum();
        (value, grad)
    }

    /// Checks hard invariants and returns soft warnings (ergodicity).
    pub fn validate(&self) -> Result<Vec<String>> {
        if self.dimension == 0 || self.channels == 0 {
            return param("field dimension and channels must be positive");
        }
        if !(self.m0 > 0.0) {
            return param("field m0 must be positive");
        }
        if !self.offset.is_empty() && self.offset.len() != self.channels {
            return param(format!(
                "field offset has length {}, expected {}",
                self.offset.len(),
                self.channels
            ));
        }
        for (j, m) in self.modes.iter().enumerate() {
            if m.amplitude.len() != self.channels || m.wavevector.len() != self.dimension {
                return param(format!("mode {j} has mismatched amplitude/wavevector length"));
            }
            if m.amplitude.iter().chain(&m.wavevector).any(|x| !x.is_finite()) {
                return param(format!("mode {j} has non-finite entries"));
            }
        }
        let (sup_f, sup_df) = self.sup_bounds();
        let tol = 1e-12 * self.m0;
        if sup_f > self.m0 + tol || sup_df > self.m0 + tol {
            return param(format!(
                "field bounds sum|a| = {sup_f}, sum|a||k| = {sup_df} exceed m0 = {}",
                self.m0
            ));
        }
        if self.nonconstant && !self.modes.iter().any(|m| norm(&m.wavevector) > 0.0) {
            return param("field flagged nonconstant but every wavevector is zero");
        }
        if !(self.kappa > 0.0 && self.kappa < 1.0) {
            return param("kappa must lie in (0, 1)");
        }
        let mut warnings = Vec::new();
        for i in 0..self.modes.len() {
            for j in i + 1..self.modes.len() {
                if let Some((p, q)) =
                    rational_dependence(&self.modes[i].wavevector, &self.modes[j].wavevector)
                {
                    warnings.push(format!(
                        "modes {i} and {j} have rationally dependent wavevectors ({p}:{q}); \
                         the field is periodic along that direction and not ergodic"
                    ));
                }
            }
        }
        Ok(warnings)
    }
}

/// Detects `k_i = (p/q) k_j` with small denominators.
fn rational_dependence(a: &[f64], b: &[f64]) -> Option<(i64, i64)> {
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    let cos = dot(a, b) / (na * nb);
    if (cos.abs() - 1.0).abs() > 1e-12 {
        return None;
    }
    let ratio = na / nb;
    for q in 1..=64i64 {
        let p = (ratio * q as f64).round();
        if p >= 1.0 && (ratio * q as f64 - p).abs() < 1e-9 * q as f64 {
            return Some((p as i64 * cos.signum() as i64, q));
        }
    }
    None
}

/// `E|Df(0)|^2 = sum_j |a_j|^2 |k_j|^2 / 2` for uniform phases.
pub fn grad_energy(spec: &FieldSpec) -> f64 {
    spec.modes
        .iter()
        .map(|m| 0.5 * dot(&m.amplitude, &m.amplitude) * dot(&m.wavevector, &m.wavevector))
        .sum()
}

/// One realization of a random-phase field.
///
/// Spatial shifts are stored as an accumulated translation so the group law
/// `shift(y1).shift(y2) == shift(y1 + y2)` holds exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomField {
    spec: FieldSpec,
    phases: Vec<f64>,
    translation: Vec<f64>,
    offset: Vec<f64>,
}

impl RandomField {
    pub fn new(spec: FieldSpec, phases: Vec<f64>) -> Result<RandomField> {
        spec.validate()?;
        if phases.len() != spec.modes.len() {
            return param("one phase per mode is required");
        }
        let offset = spec.offset_or_zero();
        let translation = vec![0.0; spec.dimension];
        Ok(RandomField { spec, phases, translation, offset })
    }

    pub fn spec(&self) -> &FieldSpec {
        &self.spec
    }

    /// Phases with the accumulated translation folded in, reduced to `[0, 2pi)`.
    pub fn phases(&self) -> Vec<f64> {
        self.spec
            .modes
            .iter()
            .zip(&self.phases)
            .map(|(m, p)| (p + dot(&m.wavevector, &self.translation)).rem_euclid(TAU))
            .collect()
    }

    /// Realizes `tau_y`: the shifted field at `x` equals this field at `x + y`.
    pub fn shift(&self, y: &[f64]) -> RandomField {
        let mut out = self.clone();
        for (t, yi) in out.translation.iter_mut().zip(y) {
            *t += yi;
        }
        out
    }
}

impl VectorField for RandomField {
    fn dim(&self) -> usize {
        self.spec.dimension
    }

    fn channels(&self) -> usize {
        self.spec.channels
    }

    fn value(&self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.offset);
        for (m, phase) in self.spec.modes.iter().zip(&self.phases) {
            let arg = m
                .wavevector
                .iter()
                .zip(x)
                .zip(&self.translation)
                .map(|((k, xi), ti)| k * (xi + ti))
                .sum::<f64>()
                + phase;
            let c = arg.cos();
            for (o, a) in out.iter_mut().zip(&m.amplitude) {
                *o += a * c;
            }
        }
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        let d = self.spec.dimension;
        for (m, phase) in self.spec.modes.iter().zip(&self.phases) {
            let arg = m
                .wavevector
                .iter()
                .zip(x)
                .zip(&self.translation)
                .map(|((k, xi), ti)| k * (xi + ti))
                .sum::<f64>()
                + phase;
            let s = arg.sin();
            for (c, a) in m.amplitude.iter().enumerate() {
                for (axis, k) in m.wavevector.iter().enumerate() {
                    out[c * d + axis] -= a * s * k;
                }
            }
        }
    }

    fn is_constant(&self) -> bool {
        self.spec.modes.iter().all(|m| norm(&m.wavevector) == 0.0 || norm(&m.amplitude) == 0.0)
    }
}

/// `g(x) = amplitude * f(scale * x)`, used for the `eps`-rescaled problems.
pub struct ScaledField<'a> {
    pub inner: &'a dyn VectorField,
    pub amplitude: f64,
    pub scale: f64,
}

impl ScaledField<'_> {
    fn scaled(&self, x: &[f64]) -> [f64; 4] {
        let mut buf = [0.0; 4];
        for (b, xi) in buf.iter_mut().zip(x) {
            *b = xi * self.scale;
        }
        buf
    }
}

impl VectorField for ScaledField<'_> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn channels(&self) -> usize {
        self.inner.channels()
    }

    fn value(&self, x: &[f64], out: &mut [f64]) {
        let buf = self.scaled(x);
        self.inner.value(&buf[..x.len()], out);
        for o in out.iter_mut() {
            *o *= self.amplitude;
        }
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        let buf = self.scaled(x);
        self.inner.gradient(&buf[..x.len()], out);
        let factor = self.amplitude * self.scale;
        for o in out.iter_mut() {
            *o *= factor;
        }
    }

    fn is_constant(&self) -> bool {
        self.inner.is_constant()
    }
}

/// Brownian path sampled on `0, dt, 2dt, ..., T`.
#[derive(Debug, Clone, PartialEq)]
pub struct BrownianPath {
    dt: f64,
    channels: usize,
    /// Row-major `(steps + 1) x channels`.
    values: Vec<f64>,
}

const GRID_TOL: f64 = 1e-9;

/// Rounds `t / dt` to an integer, failing when `t` is off the grid.
pub(crate) fn grid_index(t: f64, dt: f64) -> Option<usize> {
    let r = t / dt;
    let k = r.round();
    if k < 0.0 || (r - k).abs() > GRID_TOL * r.abs().max(1.0) {
        None
    } else {
        Some(k as usize)
    }
}

impl BrownianPath {
    pub fn from_values(dt: f64, channels: usize, values: Vec<f64>) -> Result<BrownianPath> {
        if !(dt > 0.0) || channels == 0 || values.len() < channels || !values.len().is_multiple_of(channels) {
            return param("malformed Brownian path values");
        }
        Ok(BrownianPath { dt, channels, values })
    }

    /// Samples a path with exact Gaussian increments of variance `dt`.
    pub fn sample(horizon: f64, dt: f64, channels: usize, rng: &mut impl Rng) -> Result<BrownianPath> {
        if !(horizon > 0.0) || !(dt > 0.0) {
            return param("Brownian horizon and dt must be positive");
        }
        let steps = grid_index(horizon, dt)
            .ok_or_else(|| Error::Alignment(format!("dt = {dt} does not divide horizon {horizon}")))?;
        let sd = dt.sqrt();
        let mut values = vec![0.0; (steps + 1) * channels];
        for k in 1..=steps {
            for c in 0..channels {
                let z: f64 = rng.sample(StandardNormal);
                values[k * channels + c] = values[(k - 1) * channels + c] + sd * z;
            }
        }
        Ok(BrownianPath { dt, channels, values })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn steps(&self) -> usize {
        self.values.len() / self.channels - 1
    }

    pub fn horizon(&self) -> f64 {
        self.steps() as f64 * self.dt
    }

    /// Values at grid node `k`.
    pub fn node(&self, k: usize) -> &[f64] {
        &self.values[k * self.channels..(k + 1) * self.channels]
    }

    /// Linear interpolation at any `t` in `[0, T]`; clamps outside.
    pub fn eval(&self, t: f64, out: &mut [f64]) {
        let steps = self.steps();
        let r = (t / self.dt).clamp(0.0, steps as f64);
        let k = (r.floor() as usize).min(steps.saturating_sub(1));
        let frac = r - k as f64;
        if steps == 0 || frac == 0.0 {
            out.copy_from_slice(self.node(k.min(steps)));
            return;
        }
        let (a, b) = (self.node(k), self.node(k + 1));
        for c in 0..self.channels {
            out[c] = a[c] + (b[c] - a[c]) * frac;
        }
    }

    /// `s -> B(t + s) - B(t)` on the remaining horizon.
    pub fn shift(&self, t: f64) -> Result<BrownianPath> {
        let k0 = grid_index(t, self.dt)
            .filter(|k| *k <= self.steps())
            .ok_or_else(|| Error::Parameter(format!("shift time {t} is off the path grid")))?;
        let base = self.node(k0).to_vec();
        let mut values = Vec::with_capacity((self.steps() - k0 + 1) * self.channels);
        for k in k0..=self.steps() {
            for (c, b) in base.iter().enumerate() {
                values.push(self.values[k * self.channels + c] - b);
            }
        }
        Ok(BrownianPath { dt: self.dt, channels: self.channels, values })
    }

    /// `t -> sqrt(eps) B(t / eps)` on the grid `eps * dt`, truncated to `horizon`.
    pub fn rescale(&self, eps: f64, horizon: f64) -> Result<BrownianPath> {
        if !(eps > 0.0) {
            return param("rescale factor must be positive");
        }
        let new_dt = self.dt * eps;
        if horizon > eps * self.horizon() * (1.0 + GRID_TOL) {
            return Err(Error::Range(format!(
                "rescaled horizon {horizon} needs the path up to {} but it stops at {}",
                horizon / eps,
                self.horizon()
            )));
        }
        let steps = (horizon / new_dt - GRID_TOL).ceil().max(0.0) as usize;
        let steps = steps.min(self.steps());
        let factor = eps.sqrt();
        let values =
            self.values[..(steps + 1) * self.channels].iter().map(|v| v * factor).collect();
        Ok(BrownianPath { dt: new_dt, channels: self.channels, values })
    }

    /// Multiplies every value by `factor`.
    pub fn scaled(&self, factor: f64) -> BrownianPath {
        BrownianPath {
            dt: self.dt,
            channels: self.channels,
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }
}

/// A forcing `f(x) . dB(t)` as seen by the action evaluators.
#[derive(Clone, Copy)]
pub struct Forcing<'a> {
    pub field: &'a dyn VectorField,
    pub path: &'a BrownianPath,
}

/// One realization `omega = (f, B)` with provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomEnvironment {
    pub field: RandomField,
    pub path: BrownianPath,
    pub seed: u64,
    pub index: u64,
}

impl RandomEnvironment {
    pub fn forcing(&self) -> Forcing<'_> {
        Forcing { field: &self.field, path: &self.path }
    }
}

const STREAM_FIELD: u64 = 1;
const STREAM_PATH: u64 = 2;

fn splitmix(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(tag: &str) -> u64 {
    tag.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

/// Counter-based generator for `(master seed, tag, sub-stream, realization)`.
///
/// Each tuple addresses its own ChaCha stream, so realizations can be produced
/// in any order (or in parallel) with identical results.
pub fn substream(master_seed: u64, tag: &str, stream: u64, index: u64) -> ChaCha8Rng {
    let mut state = master_seed ^ fnv1a(tag).rotate_left(17) ^ stream.wrapping_mul(0xA24B_AED4_963E_E407);
    let mut seed = [0u8; 32];
    for chunk in seed.chunks_mut(8) {
        chunk.copy_from_slice(&splitmix(&mut state).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_stream(index);
    rng
}

pub const DEFAULT_TAG: &str = "env";

pub fn sample_environment(
    spec: &FieldSpec,
    horizon: f64,
    dt: f64,
    master_seed: u64,
    index: u64,
) -> Result<RandomEnvironment> {
    sample_environment_tagged(spec, horizon, dt, master_seed, DEFAULT_TAG, index)
}

/// A Brownian path alone, from the path sub-stream of `(master_seed, tag, index)`.
pub fn sample_path(
    horizon: f64,
    dt: f64,
    channels: usize,
    master_seed: u64,
    tag: &str,
    index: u64,
) -> Result<BrownianPath> {
    let mut rng = substream(master_seed, tag, STREAM_PATH, index);
    BrownianPath::sample(horizon, dt, channels, &mut rng)
}

/// Draws the field phases and the Brownian path from independent sub-streams.
pub fn sample_environment_tagged(
    spec: &FieldSpec,
    horizon: f64,
    dt: f64,
    master_seed: u64,
    tag: &str,
    index: u64,
) -> Result<RandomEnvironment> {
    if !(horizon > 0.0) || !(dt > 0.0) {
        return param(format!("horizon ({horizon}) and dt ({dt}) must be positive"));
    }
    let mut field_rng = substream(master_seed, tag, STREAM_FIELD, index);
    let phases = (0..spec.modes.len()).map(|_| field_rng.random::<f64>() * TAU).collect();
    let field = RandomField::new(spec.clone(), phases)?;
    let mut path_rng = substream(master_seed, tag, STREAM_PATH, index);
    let path = BrownianPath::sample(horizon, dt, spec.channels, &mut path_rng)?;
    Ok(RandomEnvironment { field, path, seed: master_seed, index })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_d_spec() -> FieldSpec {
        FieldSpec {
            dimension: 2,
            channels: 2,
            modes: vec![
                Mode { amplitude: vec![0.3, -0.2], wavevector: vec![1.0, 0.5] },
                Mode { amplitude: vec![0.1, 0.25], wavevector: vec![-0.7, 2.0f64.sqrt()] },
            ],
            m0: 2.0,
            offset: Vec::new(),
            nonconstant: true,
            kappa: 0.5,
        }
    }

    #[test]
    fn deterministic_per_seed_and_index() {
        let spec = two_d_spec();
        let a = sample_environment(&spec, 2.0, 0.25, 11, 3).unwrap();
        let b = sample_environment(&spec, 2.0, 0.25, 11, 3).unwrap();
        let c = sample_environment(&spec, 2.0, 0.25, 11, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.path, c.path);
    }

    #[test]
    fn zero_modes_give_zero_field() {
        let env = sample_environment(&FieldSpec::zero(2, 1), 1.0, 0.5, 1, 0).unwrap();
        let mut v = [1.0];
        let mut g = [1.0, 1.0];
        env.field.value(&[0.3, -4.0], &mut v);
        env.field.gradient(&[0.3, -4.0], &mut g);
        assert_eq!(v, [0.0]);
        assert_eq!(g, [0.0, 0.0]);
    }

    #[test]
    fn single_mode_at_origin() {
        let field = RandomField::new(FieldSpec::single_mode(1.0, 1.0), vec![0.0]).unwrap();
        let (mut v, mut g) = ([0.0], [0.0]);
        field.value(&[0.0], &mut v);
        field.gradient(&[0.0], &mut g);
        assert_eq!(v, [1.0]);
        assert_eq!(g[0], 0.0);
    }

    #[test]
    fn shift_matches_translated_evaluation() {
        let env = sample_environment(&two_d_spec(), 1.0, 0.5, 5, 0).unwrap();
        let y = [0.37, -1.25];
        let shifted = env.field.shift(&y);
        let x = [0.11, 0.9];
        let xy = [x[0] + y[0], x[1] + y[1]];
        let (mut a, mut b) = ([0.0; 2], [0.0; 2]);
        shifted.value(&x, &mut a);
        env.field.value(&xy, &mut b);
        assert_eq!(a, b);
        assert_eq!(env.field.shift(&[0.0, 0.0]), env.field);
    }

    #[test]
    fn shift_group_law_is_exact() {
        let env = sample_environment(&two_d_spec(), 1.0, 0.5, 5, 0).unwrap();
        let (y1, y2) = ([0.3, 1.7], [-2.2, 0.45]);
        let sum = [y1[0] + y2[0], y1[1] + y2[1]];
        assert_eq!(env.field.shift(&y1).shift(&y2).phases(), env.field.shift(&sum).phases());
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(sample_environment(&two_d_spec(), 0.0, 0.1, 0, 0).is_err());
        assert!(sample_environment(&two_d_spec(), 1.0, -0.1, 0, 0).is_err());
        let mut spec = two_d_spec();
        spec.m0 = 0.1;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn warns_on_commensurate_wavevectors() {
        let spec = FieldSpec {
            modes: vec![
                Mode { amplitude: vec![0.2], wavevector: vec![1.0] },
                Mode { amplitude: vec![0.2], wavevector: vec![2.0] },
            ],
            m0: 1.0,
            ..FieldSpec::single_mode(0.2, 1.0)
        };
        assert_eq!(spec.validate().unwrap().len(), 1);
        let spec = FieldSpec {
            modes: vec![
                Mode { amplitude: vec![0.2], wavevector: vec![1.0] },
                Mode { amplitude: vec![0.2], wavevector: vec![2.0f64.sqrt()] },
            ],
            ..spec
        };
        assert!(spec.validate().unwrap().is_empty());
    }

    #[test]
    fn grad_energy_closed_form() {
        assert_eq!(grad_energy(&FieldSpec::zero(1, 1)), 0.0);
        assert_eq!(grad_energy(&FieldSpec::single_mode(1.0, 1.0)), 0.5);
    }

    #[test]
    fn path_shift_and_rescale_identities() {
        let mut rng = substream(1, "t", 0, 0);
        let path = BrownianPath::sample(4.0, 0.25, 2, &mut rng).unwrap();
        assert_eq!(path.node(0), &[0.0, 0.0]);
        assert_eq!(path.shift(0.0).unwrap(), path);
        assert!(path.shift(0.3).is_err());
        let shifted = path.shift(1.0).unwrap();
        assert_eq!(shifted.steps(), path.steps() - 4);
        assert_eq!(shifted.node(2)[1], path.node(6)[1] - path.node(4)[1]);
        assert_eq!(path.rescale(1.0, 4.0).unwrap(), path);
        assert!(path.rescale(0.5, 4.0).is_err());

        let once = path.rescale(0.25, 1.0).unwrap();
        let twice = path.rescale(0.5, 2.0).unwrap().rescale(0.5, 1.0).unwrap();
        assert_eq!(once.steps(), twice.steps());
        for k in 0..=once.steps() {
            for c in 0..2 {
                assert!((once.node(k)[c] - twice.node(k)[c]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn interpolation_is_linear_between_nodes() {
        let path = BrownianPath::from_values(0.5, 1, vec![0.0, 1.0, -1.0]).unwrap();
        let mut out = [0.0];
        path.eval(0.25, &mut out);
        assert_eq!(out, [0.5]);
        path.eval(0.75, &mut out);
        assert_eq!(out, [0.0]);
        path.eval(1.0, &mut out);
        assert_eq!(out, [-1.0]);
    }
}
