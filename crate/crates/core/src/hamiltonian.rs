//! Isotropic power-law Hamiltonians, numeric Legendre transforms and the
//! geometry maps used by the enhancement estimates.

use serde::{Deserialize, Serialize};

use crate::error::{param, Result};

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn default_scale() -> f64 {
    1.0
}

/// `H(p) = c |p|^q / q` and its conjugate `H*(v) = c^(1-q') |v|^q' / q'`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerLawHamiltonian {
    pub q: f64,
    #[serde(default = "default_scale")]
    pub c: f64,
}

impl PowerLawHamiltonian {
    pub fn new(q: f64, c: f64) -> Result<PowerLawHamiltonian> {
        let h = PowerLawHamiltonian { q, c };
        h.validate()?;
        Ok(h)
    }

    pub fn quadratic() -> PowerLawHamiltonian {
        PowerLawHamiltonian { q: 2.0, c: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.q > 1.0 && self.q.is_finite()) {
            return param(format!("exponent q = {} must exceed 1", self.q));
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return param(format!("scale c = {} must be positive", self.c));
        }
        Ok(())
    }

    /// Dual exponent `q' = q / (q - 1)`.
    pub fn q_prime(&self) -> f64 {
        self.q / (self.q - 1.0)
    }

    pub fn h(&self, p: &[f64]) -> f64 {
        self.c * norm(p).powf(self.q) / self.q
    }

    pub fn h_star(&self, v: &[f64]) -> f64 {
        let qp = self.q_prime();
        self.h_star_of_norm(norm(v), qp)
    }

    #[inline]
    pub(crate) fn h_star_of_norm(&self, speed: f64, qp: f64) -> f64 {
        if self.q == 2.0 {
            0.5 * speed * speed / self.c
        } else {
            self.c.powf(1.0 - qp) * speed.powf(qp) / qp
        }
    }

    /// `DH*(v)`: the momentum dual to velocity `v`. Sends 0 to 0.
    pub fn map_p(&self, v: &[f64]) -> Vec<f64> {
        let qp = self.q_prime();
        let n = norm(v);
        if n == 0.0 {
            return vec![0.0; v.len()];
        }
        let factor = self.c.powf(1.0 - qp) * n.powf(qp - 2.0);
        v.iter().map(|x| factor * x).collect()
    }

    /// `DH(p)`: the velocity dual to momentum `p`. Sends 0 to 0.
    pub fn map_v(&self, p: &[f64]) -> Vec<f64> {
        let n = norm(p);
        if n == 0.0 {
            return vec![0.0; p.len()];
        }
        let factor = self.c * n.powf(self.q - 2.0);
        p.iter().map(|x| factor * x).collect()
    }

    /// Constant `C > 1` for which the two-sided growth bounds on `H`, `H*`
    /// and the local Lipschitz bound on `H*` hold.
    pub fn growth_constant(&self) -> f64 {
        let (q, qp, c) = (self.q, self.q_prime(), self.c);
        let star = c.powf(1.0 - qp);
        [c, 1.0 / c, q / c, c / q, qp / star, star / qp, star, 1.0 / star]
            .into_iter()
            .fold(0.0, f64::max)
            + 1.0
    }

    /// Grid radius that keeps the maximizer of `p.v - H*(v)` interior for
    /// `|p| <= max_p`.
    pub fn legendre_radius(&self, max_p: f64) -> f64 {
        (2.0 * max_p * self.growth_constant()).powf(1.0 / (self.q_prime() - 1.0)) + 1.0
    }

    /// `G(v) = sup_rho (1/rho) max_{|z| <= rho} [H*(v+z) - H*(v) - p(v).z]`.
    ///
    /// The sup is taken over a finite sample, so this is a lower bound on the
    /// exact value.
    pub fn growth_g(&self, v: &[f64]) -> f64 {
        self.growth_g_with(v, 8, 64, 8)
    }

    pub fn growth_g_with(&self, v: &[f64], rho_levels: u32, directions: usize, radii: usize) -> f64 {
        let d = v.len();
        let dirs = unit_directions(d, directions);
        let base = self.h_star(v);
        let pv = self.map_p(v);
        let mut best = 0.0f64;
        let mut z = vec![0.0; d];
        let mut vz = vec![0.0; d];
        for level in 0..=rho_levels {
            let rho = 2f64.powi(level as i32 - rho_levels as i32);
            let mut inner = 0.0f64;
            for dir in &dirs {
                for j in 1..=radii {
                    let r = rho * j as f64 / radii as f64;
                    for a in 0..d {
                        z[a] = r * dir[a];
                        vz[a] = v[a] + z[a];
                    }
                    inner = inner.max(self.h_star(&vz) - base - dot(&pv, &z));
                }
            }
            best = best.max(inner / rho);
        }
        best
    }
}

/// `count` evenly spaced unit vectors in dimension 2, `{-1, +1}` in dimension 1.
pub fn unit_directions(d: usize, count: usize) -> Vec<Vec<f64>> {
    match d {
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..count)
            .map(|i| {
                let a = std::f64::consts::TAU * i as f64 / count as f64;
                vec![a.cos(), a.sin()]
            })
            .collect(),
        _ => {
            let mut out = Vec::new();
            for a in 0..d {
                for s in [1.0, -1.0] {
                    let mut e = vec![0.0; d];
                    e[a] = s;
                    out.push(e);
                }
            }
            out
        }
    }
}

/// Points of the box `[-radius, radius]^d` with spacing `step` (d = 1 or 2).
pub fn cube_grid(d: usize, radius: f64, step: f64) -> Vec<Vec<f64>> {
    let n = (radius / step).round() as i64;
    let axis: Vec<f64> = (-n..=n).map(|i| i as f64 * step).collect();
    match d {
        1 => axis.iter().map(|x| vec![*x]).collect(),
        _ => {
            let mut out = Vec::with_capacity(axis.len() * axis.len());
            for x in &axis {
                for y in &axis {
                    out.push(vec![*x, *y]);
                }
            }
            out
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conjugate {
    pub value: f64,
    pub argmax: usize,
    /// The supremum was attained on the hull of the sample box, so the true
    /// supremum may lie outside the sampled region.
    pub truncation_suspect: bool,
}

/// Discrete conjugate `max_i (p.v_i - values_i)` over sampled points.
pub fn legendre_numeric(points: &[Vec<f64>], values: &[f64], query: &[f64]) -> Result<Conjugate> {
    if points.is_empty() || points.len() != values.len() {
        return param("legendre_numeric needs one value per sample point");
    }
    let d = query.len();
    if points.iter().any(|p| p.len() != d) {
        return param("sample points and query have different dimensions");
    }
    let mut best = f64::NEG_INFINITY;
    let mut argmax = 0;
    for (i, (v, f)) in points.iter().zip(values).enumerate() {
        let s = dot(query, v) - f;
        if s > best {
            best = s;
            argmax = i;
        }
    }
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for p in points {
        for a in 0..d {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    let at = &points[argmax];
    let truncation_suspect = (0..d).any(|a| at[a] == lo[a] || at[a] == hi[a]);
    Ok(Conjugate { value: best, argmax, truncation_suspect })
}

/// Lower convex envelope of scattered samples, evaluated at the samples.
///
/// Exact lower hull in dimension one; in dimension two a discrete biconjugate
/// through a momentum grid spanning the sample slopes (a valid minorant that
/// is convex along every line of the sample grid).
pub fn convexify(points: &[Vec<f64>], values: &[f64]) -> Result<Vec<f64>> {
    if points.len() != values.len() || points.is_empty() {
        return param("convexify needs one value per point");
    }
    match points[0].len() {
        1 => Ok(lower_hull_1d(points, values)),
        2 => Ok(biconjugate_2d(points, values)),
        d => param(format!("convexify supports d = 1, 2, got {d}")),
    }
}

fn lower_hull_1d(points: &[Vec<f64>], values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|a, b| points[*a][0].total_cmp(&points[*b][0]));
    let mut hull: Vec<(f64, f64)> = Vec::new();
    for &i in &order {
        let pt = (points[i][0], values[i]);
        if let Some(last) = hull.last() {
            if last.0 == pt.0 {
                if pt.1 < last.1 {
                    hull.pop();
                } else {
                    continue;
                }
            }
        }
        while hull.len() >= 2 {
            let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            let cross = (b.0 - a.0) * (pt.1 - a.1) - (b.1 - a.1) * (pt.0 - a.0);
            if cross <= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(pt);
    }
    points
        .iter()
        .map(|p| {
            let x = p[0];
            let k = hull.partition_point(|h| h.0 < x);
            if k < hull.len() && hull[k].0 == x {
                hull[k].1
            } else {
                let (a, b) = (hull[k - 1], hull[k]);
                a.1 + (b.1 - a.1) * (x - a.0) / (b.0 - a.0)
            }
        })
        .collect()
}

fn biconjugate_2d(points: &[Vec<f64>], values: &[f64]) -> Vec<f64> {
    let spread = points
        .iter()
        .flat_map(|p| p.iter().copied())
        .fold(0.0f64, |m, x| m.max(x.abs()))
        .max(1e-12);
    let vmax = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let vmin = values.iter().copied().fold(f64::INFINITY, f64::min);
    let slope = 4.0 * (vmax - vmin).max(1e-12) / spread + 1.0;
    let momenta = cube_grid(2, slope, slope / 100.0);
    let conj: Vec<f64> = momenta
        .iter()
        .map(|p| points.iter().zip(values).map(|(v, f)| dot(p, v) - f).fold(f64::NEG_INFINITY, f64::max))
        .collect();
    points
        .iter()
        .zip(values)
        .map(|(v, f)| {
            let bi = momenta
                .iter()
                .zip(&conj)
                .map(|(p, c)| dot(p, v) - c)
                .fold(f64::NEG_INFINITY, f64::max);
            bi.min(*f)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn quadratic_is_self_dual() {
        let h = PowerLawHamiltonian::quadratic();
        assert_eq!(h.h(&[3.0, 4.0]), 12.5);
        assert_eq!(h.h_star(&[3.0, 4.0]), 12.5);
        assert_eq!(h.map_p(&[1.5, -2.0]), vec![1.5, -2.0]);
        assert_eq!(h.map_v(&[1.5, -2.0]), vec![1.5, -2.0]);
    }

    #[test]
    fn quartic_conjugate_by_hand() {
        let h = PowerLawHamiltonian::new(4.0, 1.0).unwrap();
        assert!((h.h_star(&[1.0, 0.0]) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn cubic_velocity_map() {
        let h = PowerLawHamiltonian::new(3.0, 1.0).unwrap();
        assert_eq!(h.map_v(&[2.0, 0.0]), vec![4.0, 0.0]);
    }

    #[test]
    fn numeric_conjugate_matches_closed_form() {
        let h = PowerLawHamiltonian::new(4.0, 1.0).unwrap();
        let grid = cube_grid(2, 2.0, 0.01);
        let vals: Vec<f64> = grid.iter().map(|p| h.h(p)).collect();
        let conj = legendre_numeric(&grid, &vals, &[1.0, 0.0]).unwrap();
        assert!((conj.value - 0.75).abs() < 1e-3);
        assert!(!conj.truncation_suspect);
    }

    #[test]
    fn quadratic_grid_conjugate() {
        let grid = cube_grid(2, 5.0, 0.05);
        let vals: Vec<f64> = grid.iter().map(|v| 0.5 * dot(v, v)).collect();
        let conj = legendre_numeric(&grid, &vals, &[1.0, 0.0]).unwrap();
        assert!((conj.value - 0.5).abs() < 0.003);
    }

    #[test]
    fn boundary_maximizer_is_flagged() {
        let grid = cube_grid(1, 1.0, 0.1);
        let vals: Vec<f64> = grid.iter().map(|v| 0.5 * v[0] * v[0]).collect();
        assert!(legendre_numeric(&grid, &vals, &[3.0]).unwrap().truncation_suspect);
    }

    #[test]
    fn cubic_duality_recovers_h() {
        let h = PowerLawHamiltonian::new(3.0, 1.0).unwrap();
        let r = h.legendre_radius(2.0);
        let grid = cube_grid(1, r, 0.001);
        let vals: Vec<f64> = grid.iter().map(|v| h.h_star(v)).collect();
        for p in [-2.0, -1.3, 0.0, 0.4, 1.0, 2.0] {
            let conj = legendre_numeric(&grid, &vals, &[p]).unwrap();
            assert!((conj.value - h.h(&[p])).abs() < 1e-2, "p = {p}");
            assert!(!conj.truncation_suspect);
        }
    }

    #[test]
    fn biconjugate_of_convex_sample() {
        let grid = cube_grid(1, 3.0, 0.05);
        let vals: Vec<f64> = grid.iter().map(|v| v[0].abs().powf(1.5) + 0.3 * v[0]).collect();
        let slopes = cube_grid(1, 4.0, 0.01);
        let conj: Vec<f64> =
            slopes.iter().map(|p| legendre_numeric(&grid, &vals, p).unwrap().value).collect();
        for (v, f) in grid.iter().zip(&vals).filter(|(v, _)| v[0].abs() <= 2.0) {
            let bi = legendre_numeric(&slopes, &conj, v).unwrap().value;
            assert!((bi - f).abs() < 1e-3, "v = {v:?}");
        }
    }

    #[test]
    fn growth_g_quadratic() {
        let h = PowerLawHamiltonian::quadratic();
        assert!((h.growth_g(&[3.0, -1.0]) - 0.5).abs() < 1e-3);
        assert!((h.growth_g(&[0.0]) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn growth_g_bounded_for_large_dual_exponent() {
        // q = 1.5 gives q' = 3 >= 2.
        let h = PowerLawHamiltonian::new(1.5, 1.0).unwrap();
        let c = h.growth_constant();
        for v in [0.0, 0.5, 1.0, 3.0, 10.0] {
            let g = h.growth_g(&[v, 0.0]);
            assert!(g >= 0.0);
            assert!(g <= c * (1.0 + v).powf(h.q_prime() - 2.0), "v = {v}, G = {g}");
        }
    }

    #[test]
    fn convexify_1d_is_lower_hull() {
        let pts: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64]).collect();
        let vals = [0.0, 2.0, 1.0, 3.0, 4.0];
        let out = convexify(&pts, &vals).unwrap();
        assert_eq!(out, vec![0.0, 0.5, 1.0, 2.5, 4.0]);
    }

    #[test]
    fn convexify_noise_shift_bounded() {
        let pts: Vec<Vec<f64>> = (-20..=20).map(|i| vec![i as f64 * 0.1]).collect();
        let noise = 0.01;
        let vals: Vec<f64> = pts
            .iter()
            .enumerate()
            .map(|(i, v)| 0.5 * v[0] * v[0] + if i % 2 == 0 { noise } else { -noise })
            .collect();
        let out = convexify(&pts, &vals).unwrap();
        for (a, b) in out.iter().zip(&vals) {
            assert!(a <= b && b - a <= 2.0 * noise + 1e-12);
        }
    }

    #[test]
    fn convexify_2d_is_minorant_and_exact_on_convex() {
        let pts = cube_grid(2, 1.0, 0.25);
        let vals: Vec<f64> = pts.iter().map(|v| dot(v, v)).collect();
        let out = convexify(&pts, &vals).unwrap();
        for (a, b) in out.iter().zip(&vals) {
            assert!(a <= b && b - a < 2e-2);
        }
    }

    proptest! {
        #[test]
        fn fenchel_young(q in 1.2f64..5.0, c in 0.3f64..3.0,
                         p in prop::collection::vec(-3.0f64..3.0, 2),
                         v in prop::collection::vec(-3.0f64..3.0, 2)) {
            let h = PowerLawHamiltonian::new(q, c).unwrap();
            prop_assert!(dot(&p, &v) <= h.h(&p) + h.h_star(&v) + 1e-10);
            let vp = h.map_v(&p);
            let gap = h.h(&p) + h.h_star(&vp) - dot(&p, &vp);
            prop_assert!(gap.abs() <= 1e-10 * (1.0 + h.h(&p)));
        }

        #[test]
        fn maps_are_inverse(q in 1.2f64..5.0, c in 0.3f64..3.0,
                            p in prop::collection::vec(-3.0f64..3.0, 2)) {
            let h = PowerLawHamiltonian::new(q, c).unwrap();
            let back = h.map_p(&h.map_v(&p));
            for (a, b) in back.iter().zip(&p) {
                prop_assert!((a - b).abs() <= 1e-10 * (1.0 + b.abs()));
            }
        }

        #[test]
        fn growth_bounds(q in 1.2f64..5.0, c in 0.3f64..3.0,
                         p in prop::collection::vec(-5.0f64..5.0, 2)) {
            let h = PowerLawHamiltonian::new(q, c).unwrap();
            let k = h.growth_constant();
            let (np, qp) = (norm(&p), h.q_prime());
            prop_assert!(h.h(&p) >= np.powf(q) / k - k);
            prop_assert!(h.h(&p) <= k * (np.powf(q) + 1.0));
            prop_assert!(h.h_star(&p) >= np.powf(qp) / k - k);
            prop_assert!(h.h_star(&p) <= k * (np.powf(qp) + 1.0));
        }

        #[test]
        fn h_star_locally_lipschitz(q in 1.2f64..5.0, c in 0.3f64..3.0,
                                    a in prop::collection::vec(-4.0f64..4.0, 2),
                                    b in prop::collection::vec(-4.0f64..4.0, 2)) {
            let h = PowerLawHamiltonian::new(q, c).unwrap();
            let k = h.growth_constant();
            let e = h.q_prime() - 1.0;
            let diff: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
            let bound = k * (1.0 + norm(&a).powf(e) + norm(&b).powf(e)) * norm(&diff);
            prop_assert!((h.h_star(&a) - h.h_star(&b)).abs() <= bound + 1e-12);
        }

        #[test]
        fn midpoint_convexity(q in 1.2f64..5.0,
                              a in prop::collection::vec(-4.0f64..4.0, 2),
                              b in prop::collection::vec(-4.0f64..4.0, 2)) {
            let h = PowerLawHamiltonian::new(q, 1.0).unwrap();
            let m: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect();
            prop_assert!(h.h(&m) <= 0.5 * (h.h(&a) + h.h(&b)) + 1e-12);
            prop_assert!(h.h_star(&m) <= 0.5 * (h.h_star(&a) + h.h_star(&b)) + 1e-12);
        }

        #[test]
        fn legendre_is_monotone(shift in prop::collection::vec(0.0f64..1.0, 21), p in -2.0f64..2.0) {
            let grid = cube_grid(1, 1.0, 0.1);
            let base: Vec<f64> = grid.iter().map(|v| v[0] * v[0]).collect();
            let bigger: Vec<f64> = base.iter().zip(&shift).map(|(a, s)| a + s).collect();
            let lo = legendre_numeric(&grid, &bigger, &[p]).unwrap().value;
            let hi = legendre_numeric(&grid, &base, &[p]).unwrap().value;
            prop_assert!(lo <= hi);
        }
    }
}
