//! Heat kernels with Neumann reflection at the origin (half-line) or at
//! both ends of `[0, 1]` (interval), their cell-exact action on
//! piecewise-constant profiles, and the boundary-current source term.

use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::profile::{DensityProfile, FluxParams, Grid};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GreenError {
    #[error("time must be positive and finite, got {0}")]
    NonPositiveTime(f64),
    #[error("interval kernel needs a grid covering exactly [0, 1], got r_max = {0}")]
    IntervalGrid(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KernelVariant {
    HalfLine,
    Interval,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    pub variant: KernelVariant,
    pub t: f64,
    /// Image pairs kept on each side for pointwise interval evaluation.
    pub image_cutoff: usize,
}

impl KernelSpec {
    pub fn half_line(t: f64) -> Self {
        Self {
            variant: KernelVariant::HalfLine,
            t,
            image_cutoff: 0,
        }
    }

    /// Images further than `8√t + 1` from `[0, 1]` are dropped.
    pub fn interval(t: f64) -> Self {
        let reach = 8.0 * t.max(0.0).sqrt() + 1.0;
        Self {
            variant: KernelVariant::Interval,
            t,
            image_cutoff: (reach / 2.0).ceil() as usize + 1,
        }
    }

    fn check(&self) -> Result<(), GreenError> {
        if self.t.is_finite() && self.t > 0.0 {
            Ok(())
        } else {
            Err(GreenError::NonPositiveTime(self.t))
        }
    }
}

pub fn gaussian(t: f64, x: f64) -> f64 {
    (-x * x / (2.0 * t)).exp() / (2.0 * PI * t).sqrt()
}

fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

fn std_normal_sf(z: f64) -> f64 {
    0.5 * libm::erfc(z / SQRT_2)
}

/// Pointwise kernel `G_t(r_src, r_dst)`.
pub fn kernel_value(spec: &KernelSpec, r_src: f64, r_dst: f64) -> Result<f64, GreenError> {
    spec.check()?;
    let t = spec.t;
    Ok(match spec.variant {
        KernelVariant::HalfLine => gaussian(t, r_dst - r_src) + gaussian(t, r_dst + r_src),
        KernelVariant::Interval => {
            let k = spec.image_cutoff as i64;
            (-k..=k)
                .map(|m| {
                    let s = 2.0 * m as f64;
                    gaussian(t, r_dst - r_src - s) + gaussian(t, r_dst + r_src - s)
                })
                .sum()
        }
    })
}

const GL_X: [f64; 8] = [
    0.019_855_071_751_231_885,
    0.101_666_761_293_186_63,
    0.237_233_795_041_835_5,
    0.408_282_678_752_175_1,
    0.591_717_321_247_824_9,
    0.762_766_204_958_164_5,
    0.898_333_238_706_813_4,
    0.980_144_928_248_768_1,
];
const GL_W: [f64; 8] = [
    0.050_614_268_145_188_13,
    0.111_190_517_226_687_24,
    0.156_853_322_938_943_64,
    0.181_341_891_689_180_99,
    0.181_341_891_689_180_99,
    0.156_853_322_938_943_64,
    0.111_190_517_226_687_24,
    0.050_614_268_145_188_13,
];

/// `∫_{-η}^{η} (η - |s|) φ(a + s) ds`, the second difference of `Ψ(z) = zΦ(z) + φ(z)`.
fn second_difference(a: f64, eta: f64) -> f64 {
    if eta > 1.0 {
        // no cancellation worth worrying about at this step
        let psi_neg = |z: f64| {
            let z = z.abs();
            std_normal_pdf(z) - z * std_normal_sf(z)
        };
        let lin = |z: f64| z.max(0.0);
        return psi_neg(a + eta) - 2.0 * psi_neg(a) + psi_neg(a - eta)
            + (lin(a + eta) - 2.0 * lin(a) + lin(a - eta));
    }
    let mut s = 0.0;
    for (x, w) in GL_X.iter().zip(GL_W.iter()) {
        let u = eta * x;
        s += w * (eta - u) * (std_normal_pdf(a + u) + std_normal_pdf(a - u));
    }
    s * eta
}

/// Cell-to-cell weights `W(d)` for `|d| <= band`, with `Σ_d W(d) = 1`.
fn toeplitz_weights(t: f64, h: f64) -> Vec<f64> {
    let sigma = t.sqrt();
    let eta = h / sigma;
    let band = (10.0 / eta).ceil() as usize + 2;
    (0..=band)
        .map(|d| second_difference(d as f64 * eta, eta) / eta)
        .collect()
}

/// Discrete evolution operator for cell-averaged data.
#[derive(Debug, Clone)]
pub struct CellKernel {
    variant: KernelVariant,
    grid: Grid,
    weights: Vec<f64>,
    dense: Option<Vec<f64>>,
}

impl CellKernel {
    pub fn new(spec: &KernelSpec, grid: Grid) -> Result<Self, GreenError> {
        spec.check()?;
        let weights = toeplitz_weights(spec.t, grid.h());
        Self::from_weights(spec.variant, grid, weights)
    }

    /// Builds the operator from symmetric weights `W(0..=band)`.
    pub fn from_weights(variant: KernelVariant, grid: Grid, weights: Vec<f64>) -> Result<Self, GreenError> {
        let dense = match variant {
            KernelVariant::HalfLine => None,
            KernelVariant::Interval => {
                if (grid.r_max() - 1.0).abs() > 1e-9 {
                    return Err(GreenError::IntervalGrid(grid.r_max()));
                }
                Some(interval_matrix(&weights, grid.n()))
            }
        };
        Ok(Self {
            variant,
            grid,
            weights,
            dense,
        })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn variant(&self) -> KernelVariant {
        self.variant
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// The operator for twice the time: `W ↦ W * W` on the reflected lattice.
    pub fn squared(&self) -> Self {
        let w = &self.weights;
        let b = w.len() - 1;
        let at = |d: i64| -> f64 {
            let d = d.unsigned_abs() as usize;
            if d <= b {
                w[d]
            } else {
                0.0
            }
        };
        let mut out: Vec<f64> = (0..=2 * b as i64)
            .map(|d| {
                let lo = (d - b as i64).max(-(b as i64));
                let hi = b as i64;
                (lo..=hi).map(|e| at(e) * at(d - e)).sum()
            })
            .collect();
        while out.len() > 1 && *out.last().unwrap() < 1e-20 {
            out.pop();
        }
        Self::from_weights(self.variant, self.grid, out).expect("grid already validated")
    }

    /// Applies the operator to cell averages; returns the mass carried past `r_max`.
    pub fn apply(&self, u: &[f64], out: &mut [f64]) -> f64 {
        let n = self.grid.n();
        assert_eq!(u.len(), n);
        assert_eq!(out.len(), n);
        out.iter_mut().for_each(|x| *x = 0.0);
        if let Some(m) = &self.dense {
            for (k, o) in out.iter_mut().enumerate() {
                let row = &m[k * n..(k + 1) * n];
                *o = row.iter().zip(u.iter()).map(|(a, b)| a * b).sum();
            }
            return 0.0;
        }
        let w = &self.weights;
        let band = w.len() - 1;
        let active = u.iter().rposition(|&v| v != 0.0).map_or(0, |i| i + 1);
        let mut inside = 0.0;
        for (i, &ui) in u[..active].iter().enumerate() {
            if ui == 0.0 {
                continue;
            }
            let lo = i.saturating_sub(band);
            let hi = (i + band + 1).min(n);
            for (k, o) in out[lo..hi].iter_mut().enumerate() {
                let k = k + lo;
                *o += ui * w[k.abs_diff(i)];
            }
            // image of cell i across the origin sits at -i-1
            if i < band {
                let reach = (band - i).min(n);
                for (k, o) in out[..reach].iter_mut().enumerate() {
                    *o += ui * w[k + i + 1];
                }
            }
            inside += ui;
        }
        let h = self.grid.h();
        let lost = h * (inside - out.iter().sum::<f64>());
        lost.max(0.0)
    }

    pub fn apply_profile(&self, u: &DensityProfile) -> DensityProfile {
        let mut out = vec![0.0; self.grid.n()];
        let lost = self.apply(u.values(), &mut out);
        if lost > u.tail_tolerance() {
            log::warn!("mass {lost:e} carried past r_max = {}", self.grid.r_max());
        }
        for v in out.iter_mut() {
            *v = v.max(0.0);
        }
        DensityProfile::new(self.grid, out)
            .expect("kernel output is finite and non-negative")
            .with_tail_tolerance(u.tail_tolerance())
    }
}

/// Dense matrix `M[k][i] = Σ_m W(k-i-2nm) + W(k+i+1-2nm)` for the interval.
fn interval_matrix(w: &[f64], n: usize) -> Vec<f64> {
    let band = (w.len() - 1) as i64;
    let period = 2 * n as i64;
    let mut m = vec![0.0; n * n];
    for k in 0..n as i64 {
        for i in 0..n as i64 {
            let mut s = 0.0;
            for base in [k - i, k + i + 1] {
                // all d ≡ base (mod 2n) with |d| <= band
                let first = base - period * ((base + band).div_euclid(period));
                let mut d = first;
                while d <= band {
                    if d >= -band {
                        s += w[d.unsigned_abs() as usize];
                    }
                    d += period;
                }
            }
            m[k as usize * n + i as usize] = s;
        }
    }
    m
}

/// `G_t * u` on cell averages.
pub fn convolve(spec: &KernelSpec, u: &DensityProfile) -> Result<DensityProfile, GreenError> {
    let kernel = CellKernel::new(spec, u.grid())?;
    Ok(kernel.apply_profile(u))
}

/// `∫_r^∞ ψ_t`, where `ψ_t(r) = 2j[√(2t/π) e^{-r²/2t} - r erfc(r/√(2t))]`.
pub fn flux_source_tail(t: f64, p: FluxParams, r: f64) -> f64 {
    let s = (2.0 * t).sqrt();
    p.j * ((t + r * r) * libm::erfc(r / s) - r * s / PI.sqrt() * (-r * r / (2.0 * t)).exp())
}

pub fn flux_source_value(t: f64, p: FluxParams, r: f64) -> f64 {
    let s = (2.0 * t).sqrt();
    2.0 * p.j * (s / PI.sqrt() * (-r * r / (2.0 * t)).exp() - r * libm::erfc(r / s))
}

/// Mass injected at the origin over time `t` and spread by the Neumann kernel.
pub fn flux_source(t: f64, p: FluxParams, grid: Grid) -> Result<DensityProfile, GreenError> {
    if !(t.is_finite() && t > 0.0) {
        return Err(GreenError::NonPositiveTime(t));
    }
    Ok(DensityProfile::from_tail_fn(grid, |r| flux_source_tail(t, p, r)))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Cell-to-cell mass by brute-force 2D midpoint quadrature.
    fn brute_cell_weight(t: f64, h: f64, d: i64) -> f64 {
        let m = 400;
        let mut s = 0.0;
        for a in 0..m {
            let x = (a as f64 + 0.5) / m as f64 * h;
            for b in 0..m {
                let y = d as f64 * h + (b as f64 + 0.5) / m as f64 * h;
                s += gaussian(t, y - x);
            }
        }
        s * h / (m * m) as f64
    }

    #[test]
    fn weights_agree_with_quadrature() {
        for (t, h) in [(0.01, 0.05), (1e-4, 0.05), (0.3, 0.01)] {
            let w = toeplitz_weights(t, h);
            for d in [0usize, 1, 2, 5] {
                if d < w.len() {
                    let b = brute_cell_weight(t, h, d as i64);
                    assert!((w[d] - b).abs() < 2e-5 * b.max(1e-3), "t={t} d={d} {} {b}", w[d]);
                }
            }
        }
    }

    #[test]
    fn weights_sum_to_one() {
        for (t, h) in [(1.0, 0.0025), (1e-6, 0.0025), (0.01, 0.1), (3.0, 0.5)] {
            let w = toeplitz_weights(t, h);
            let s = w[0] + 2.0 * w[1..].iter().sum::<f64>();
            assert!((s - 1.0).abs() < 1e-13, "t={t} h={h} sum={s}");
            assert!(w.iter().all(|&x| x >= 0.0));
        }
    }

    #[test]
    fn half_line_kernel_integrates_to_one() {
        let spec = KernelSpec::half_line(0.3);
        let n = 20000;
        let dx = 10.0 / n as f64;
        let s: f64 = (0..n)
            .map(|i| kernel_value(&spec, 0.4, (i as f64 + 0.5) * dx).unwrap())
            .sum::<f64>()
            * dx;
        assert!((s - 1.0).abs() < 1e-8);
        assert!(kernel_value(&spec, 0.1, 0.2).is_ok());
        assert!(matches!(
            kernel_value(&KernelSpec::half_line(0.0), 0.0, 0.0),
            Err(GreenError::NonPositiveTime(_))
        ));
    }

    #[test]
    fn interval_kernel_cutoff_is_saturated() {
        for t in [0.01, 0.2, 1.0] {
            let spec = KernelSpec::interval(t);
            let mut wider = spec;
            wider.image_cutoff += 4;
            for (a, b) in [(0.0, 1.0), (0.3, 0.7), (0.9, 0.95)] {
                let x = kernel_value(&spec, a, b).unwrap();
                let y = kernel_value(&wider, a, b).unwrap();
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn flux_source_mass_and_derivative() {
        let p = FluxParams::new(1.7).unwrap();
        let t = 0.4;
        assert!((flux_source_tail(t, p, 0.0) - p.j * t).abs() < 1e-14);
        // d/dr of the tail is -ψ
        for r in [0.0, 0.3, 1.1] {
            let e = 1e-5;
            let d = (flux_source_tail(t, p, r + e) - flux_source_tail(t, p, r - e)) / (2.0 * e);
            assert!((d + flux_source_value(t, p, r)).abs() < 1e-8, "{r}");
        }
        // flux at the origin: -½ ψ'(0) = j
        let e = 1e-6;
        let slope = (flux_source_value(t, p, e) - flux_source_value(t, p, 0.0)) / e;
        assert!((-0.5 * slope - p.j).abs() < 1e-5);
    }

    #[test]
    fn squared_kernel_is_twice_the_time() {
        let g = Grid::new(0.02, 200).unwrap();
        let k = CellKernel::new(&KernelSpec::half_line(0.01), g).unwrap();
        let k2 = k.squared();
        let direct = CellKernel::new(&KernelSpec::half_line(0.02), g).unwrap();
        for d in 0..10 {
            assert!((k2.weights()[d] - direct.weights()[d]).abs() < 5e-3 * direct.weights()[0]);
        }
        let s = k2.weights()[0] + 2.0 * k2.weights()[1..].iter().sum::<f64>();
        assert!((s - 1.0).abs() < 1e-13);
    }

    #[test]
    fn interval_operator_conserves_mass() {
        let g = Grid::new(1.0 / 64.0, 64).unwrap();
        for t in [1e-3, 0.05, 2.0] {
            let k = CellKernel::new(&KernelSpec::interval(t), g).unwrap();
            let u: Vec<f64> = (0..64).map(|i| ((i * 7) % 5) as f64).collect();
            let mut out = vec![0.0; 64];
            k.apply(&u, &mut out);
            let a: f64 = u.iter().sum();
            let b: f64 = out.iter().sum();
            assert!((a - b).abs() < 1e-12 * a, "t={t}");
        }
        assert!(CellKernel::new(&KernelSpec::interval(0.1), Grid::new(0.1, 5).unwrap()).is_err());
    }
}
