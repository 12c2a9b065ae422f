//! Closed-form profiles: stationary solutions, trapezia on `[0, 1]`, the
//! minimal-speed travelling wave and stationary states with diffuse injection.

use std::f64::consts::SQRT_2;

use crate::profile::{DensityProfile, FluxParams, Grid};
use crate::variants::InjectionLaw;

/// Height at the origin of the stationary profile of mass `m`.
pub fn stationary_height(m: f64, p: FluxParams) -> f64 {
    2.0 * (p.j * m).sqrt()
}

/// Right end of the support of the stationary profile of mass `m`.
pub fn stationary_edge(m: f64, p: FluxParams) -> f64 {
    stationary_height(m, p) / (2.0 * p.j)
}

/// `∫_r^∞ (a - 2js)_+ ds`.
pub fn stationary_tail(m: f64, p: FluxParams, r: f64) -> f64 {
    let a = stationary_height(m, p);
    let x = (a - 2.0 * p.j * r.max(0.0)).max(0.0);
    x * x / (4.0 * p.j)
}

/// `ρ(r) = (a - 2jr)_+` with `a = 2√(jM)`.
pub fn stationary_profile(m: f64, p: FluxParams, grid: Grid) -> DensityProfile {
    assert!(m > 0.0, "mass must be positive");
    DensityProfile::from_tail_fn(grid, |r| stationary_tail(m, p, r))
}

pub fn trapezoid_tail(m: f64, p: FluxParams, r: f64) -> f64 {
    let j = p.j;
    if m <= j {
        return stationary_tail(m, p, r);
    }
    if r >= 1.0 {
        return 0.0;
    }
    let r = r.max(0.0);
    (m + j) * (1.0 - r) - j * (1.0 - r * r)
}

/// Stationary profile on `[0, 1]` when mass is removed at `r = 1`:
/// a triangle for `M ≤ j`, otherwise `-2jr + M + j` on the whole interval.
pub fn trapezoid_profile(m: f64, p: FluxParams, grid: Grid) -> DensityProfile {
    assert!(m > 0.0, "mass must be positive");
    DensityProfile::from_tail_fn(grid, |r| trapezoid_tail(m, p, r))
}

pub fn trapezoid_value(m: f64, p: FluxParams, r: f64) -> f64 {
    let j = p.j;
    if !(0.0..=1.0).contains(&r) {
        return 0.0;
    }
    if m > j {
        -2.0 * j * r + m + j
    } else {
        (2.0 * (m * j).sqrt() - 2.0 * j * r).max(0.0)
    }
}

/// Travelling wave `ρ(r) = M V² r e^{-Vr}` with `V = √2`, in the frame of the left edge.
#[derive(Debug, Clone, Copy)]
pub struct BdWave {
    pub mass: f64,
    pub speed: f64,
}

impl BdWave {
    pub fn new(mass: f64) -> Self {
        Self {
            mass,
            speed: SQRT_2,
        }
    }

    pub fn value(&self, r: f64) -> f64 {
        if r < 0.0 {
            return 0.0;
        }
        let v = self.speed;
        self.mass * v * v * r * (-v * r).exp()
    }

    pub fn tail(&self, r: f64) -> f64 {
        let v = self.speed;
        let r = r.max(0.0);
        self.mass * (1.0 + v * r) * (-v * r).exp()
    }
}

pub fn bd_wave(m: f64, grid: Grid) -> DensityProfile {
    let w = BdWave::new(m);
    DensityProfile::from_tail_fn(grid, |r| w.tail(r))
}

/// Stationary state `ρ = (a - 2Φ₂)_+` of `½ρ'' + f = 0` with `j = 1`, where
/// `Φ₂(r) = ∫_0^r ∫_0^x f`.
#[derive(Debug, Clone)]
pub struct DiffuseStationary {
    pub height: f64,
    pub edge: f64,
    // per piece: start, width, density and Φ₁, Φ₂, Φ₃ at the start
    pieces: Vec<[f64; 6]>,
}

impl DiffuseStationary {
    pub fn new(m: f64, f: &InjectionLaw) -> Self {
        assert!(m > 0.0, "mass must be positive");
        let mut raw: Vec<(f64, f64, f64)> = f
            .pieces()
            .into_iter()
            .filter(|p| p.1 > 0.0)
            .collect();
        assert!(
            raw.first().is_some_and(|p| p.0 >= -1e-12),
            "injection law must live on the half-line"
        );
        // an empty piece from the origin up to the first cell
        if raw[0].0 > 0.0 {
            raw.insert(0, (0.0, raw[0].0, 0.0));
        }
        let mut pieces = Vec::with_capacity(raw.len());
        let (mut p1, mut p2, mut p3) = (0.0, 0.0, 0.0);
        for (x0, w, c) in raw {
            pieces.push([x0, w, c, p1, p2, p3]);
            p3 += p2 * w + p1 * w * w / 2.0 + c * w * w * w / 6.0;
            p2 += p1 * w + c * w * w / 2.0;
            p1 += c * w;
        }
        let mut me = Self {
            height: 0.0,
            edge: 0.0,
            pieces,
        };
        // mass(a) = aX(a) - 2Φ₃(X(a)) is increasing in a
        let (mut lo, mut hi) = (0.0, 1.0);
        while me.mass_for(hi) < m {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if me.mass_for(mid) < m {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-16 * hi {
                break;
            }
        }
        me.height = 0.5 * (lo + hi);
        me.edge = me.level_crossing(me.height / 2.0);
        me
    }

    fn primitives(&self, r: f64) -> (f64, f64, f64) {
        let k = self
            .pieces
            .partition_point(|p| p[0] <= r)
            .saturating_sub(1);
        let [x0, w, c, p1, p2, p3] = self.pieces[k];
        // past the last piece the density is zero
        let (s, c) = if r <= x0 + w { (r - x0, c) } else { (w, c) };
        let (q1, mut q2, mut q3) = (
            p1 + c * s,
            p2 + p1 * s + c * s * s / 2.0,
            p3 + p2 * s + p1 * s * s / 2.0 + c * s * s * s / 6.0,
        );
        let extra = r - x0 - s;
        if extra > 0.0 {
            q3 += q2 * extra + q1 * extra * extra / 2.0;
            q2 += q1 * extra;
        }
        (q1, q2, q3)
    }

    fn phi2(&self, r: f64) -> f64 {
        self.primitives(r).1
    }

    fn phi3(&self, r: f64) -> f64 {
        self.primitives(r).2
    }

    /// Smallest `r` with `Φ₂(r) = level`.
    fn level_crossing(&self, level: f64) -> f64 {
        let (mut lo, mut hi) = (0.0, 1.0);
        while self.phi2(hi) < level {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.phi2(mid) < level {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-16 * hi.max(1e-300) {
                break;
            }
        }
        0.5 * (lo + hi)
    }

    fn mass_for(&self, a: f64) -> f64 {
        let x = self.level_crossing(a / 2.0);
        a * x - 2.0 * self.phi3(x)
    }

    pub fn value(&self, r: f64) -> f64 {
        if r < 0.0 || r >= self.edge {
            return 0.0;
        }
        (self.height - 2.0 * self.phi2(r)).max(0.0)
    }

    pub fn tail(&self, r: f64) -> f64 {
        let x = self.edge;
        if r >= x {
            return 0.0;
        }
        let r = r.max(0.0);
        self.height * (x - r) - 2.0 * (self.phi3(x) - self.phi3(r))
    }

    pub fn profile(&self, grid: Grid) -> DensityProfile {
        DensityProfile::from_tail_fn(grid, |r| self.tail(r))
    }
}

pub fn diffuse_stationary(m: f64, f: &InjectionLaw, grid: Grid) -> DensityProfile {
    DiffuseStationary::new(m, f).profile(grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(j: f64) -> FluxParams {
        FluxParams::new(j).unwrap()
    }

    /// Midpoint rule on a fine mesh.
    fn quad(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
        let n = 200_000;
        let dx = (b - a) / n as f64;
        (0..n).map(|i| f(a + (i as f64 + 0.5) * dx)).sum::<f64>() * dx
    }

    #[test]
    fn stationary_shape() {
        let g = Grid::new(1.0 / 400.0, 800).unwrap();
        let u = stationary_profile(1.0, p(1.0), g);
        assert!((u.total_mass() - 1.0).abs() < 1e-12);
        assert!((stationary_height(1.0, p(1.0)) - 2.0).abs() < 1e-15);
        assert!((u.support_end() - 1.0).abs() < 1e-12);
        let (m, j) = (0.7_f64, 1.9_f64);
        let a = 2.0 * (j * m).sqrt();
        for r in [0.0, 0.1, 0.3, a / (2.0 * j)] {
            let q = quad(|s| (a - 2.0 * j * s).max(0.0), r, 2.0);
            assert!((stationary_tail(m, p(j), r) - q).abs() < 1e-9);
        }
    }

    #[test]
    fn trapezoid_endpoints() {
        let (m, j) = (3.0, 1.0);
        assert!((trapezoid_value(m, p(j), 0.0) - (m + j)).abs() < 1e-12);
        assert!((trapezoid_value(m, p(j), 1.0) - (m - j)).abs() < 1e-12);
        let g = Grid::new(1.0 / 128.0, 128).unwrap();
        assert!((trapezoid_profile(m, p(j), g).total_mass() - m).abs() < 1e-12);
        assert!((trapezoid_profile(0.5, p(j), g).total_mass() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn bd_wave_solves_the_travelling_equation() {
        let w = BdWave::new(1.3);
        let v = w.speed;
        assert!((v * v - 2.0).abs() < 1e-15);
        for r in [0.2, 0.7, 1.5, 3.0] {
            // exact derivatives of M V² r e^{-Vr}
            let e = (-v * r).exp();
            let d1 = w.mass * v * v * e * (1.0 - v * r);
            let d2 = w.mass * v * v * e * (v * v * r - 2.0 * v);
            let res = -v * d1 - 0.5 * d2 - w.value(r);
            assert!(res.abs() < 1e-12, "{res}");
        }
        let g = Grid::new(0.01, 4000).unwrap();
        assert!((bd_wave(1.3, g).total_mass() - 1.3).abs() < 1e-10);
        // flux at the edge
        let h = 1e-6;
        assert!((0.5 * (w.value(h) - w.value(0.0)) / h - w.mass).abs() < 1e-4);
    }

    #[test]
    fn diffuse_stationary_mass_and_residual() {
        let f = InjectionLaw::uniform(0.0, 0.5, 1).unwrap();
        let s = DiffuseStationary::new(1.0, &f);
        let g = Grid::new(1.0 / 400.0, 1200).unwrap();
        assert!((s.profile(g).total_mass() - 1.0).abs() < 1e-10);
        let q = quad(|r| s.value(r), 0.0, s.edge);
        assert!((q - 1.0).abs() < 1e-8);
        let h = 1e-3;
        for r in [0.1, 0.3, 0.7] {
            if r + h < s.edge {
                let d2 = (s.value(r + h) - 2.0 * s.value(r) + s.value(r - h)) / (h * h);
                let fr = if r < 0.5 { 2.0 } else { 0.0 };
                assert!((0.5 * d2 + fr).abs() < 1e-6, "r={r}");
            }
        }
        // a narrow bump at the origin recovers the boundary-current profile
        let narrow = InjectionLaw::uniform(0.0, 1e-6, 1).unwrap();
        let s = DiffuseStationary::new(1.0, &narrow);
        assert!((s.height - 2.0).abs() < 1e-5);
    }
}
