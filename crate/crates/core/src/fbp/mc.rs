use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::solver::EdgePath;
use crate::profile::{CellSampler, DensityProfile, FluxParams};
use crate::rng::stream;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub estimate: f64,
    pub stderr: f64,
    pub n_paths: usize,
}

/// Exit time in `[start, horizon]` of reflected Brownian motion from `x`
/// through the edge, or `None`. Crossings between substeps are caught with
/// the Brownian-bridge probability for a linear boundary.
fn exit_time<R: Rng + ?Sized>(
    rng: &mut R,
    mut x: f64,
    start: f64,
    horizon: f64,
    edge: &EdgePath,
    dt: f64,
) -> Option<f64> {
    let n = ((horizon - start) / dt).ceil().max(1.0) as usize;
    let step = (horizon - start) / n as f64;
    let sq = step.sqrt();
    let mut t = start;
    let mut xe = edge.at(t);
    if x >= xe {
        return Some(t);
    }
    for _ in 0..n {
        let tn = t + step;
        let z: f64 = rng.sample(StandardNormal);
        let xn = (x + sq * z).abs();
        let xen = edge.at(tn);
        if xn >= xen {
            return Some(tn);
        }
        let p = (-2.0 * (xe - x) * (xen - xn) / step).exp();
        if rng.random::<f64>() < p {
            return Some(tn);
        }
        x = xn;
        xe = xen;
        t = tn;
    }
    None
}

/// Monte-Carlo estimate of the mass lost at the edge during `I = [t1, t2]`:
/// paths start from `u` at time 0 with total weight `∫u`, or at the origin at
/// a uniform time in `[0, t2]` with total weight `j t2`.
pub fn mc_exit(
    u: &DensityProfile,
    edge: &EdgePath,
    interval: (f64, f64),
    p: FluxParams,
    n_paths: usize,
    seed: u64,
    dt: f64,
) -> McEstimate {
    let (t1, t2) = interval;
    let m0 = u.total_mass();
    let total = m0 + p.j * t2;
    let n_paths = n_paths.max(1);
    let sampler = CellSampler::new(u);
    let hits: usize = (0..n_paths)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream(seed, &[k as u64]);
            let from_profile = rng.random::<f64>() * total < m0;
            let (x, s) = if from_profile {
                (sampler.sample(&mut rng), 0.0)
            } else {
                (0.0, rng.random::<f64>() * t2)
            };
            match exit_time(&mut rng, x, s, t2, edge, dt) {
                Some(tau) if tau >= t1 => 1,
                _ => 0,
            }
        })
        .sum();
    let q = hits as f64 / n_paths as f64;
    McEstimate {
        estimate: total * q,
        stderr: total * (q * (1.0 - q) / n_paths as f64).sqrt(),
        n_paths,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fbp::analytic::stationary_profile;
    use crate::profile::Grid;

    #[test]
    fn far_edge_loses_nothing() {
        let g = Grid::new(0.01, 2000).unwrap();
        let p = FluxParams::new(1.0).unwrap();
        let u = stationary_profile(1.0, p, g);
        let edge = EdgePath::constant(12.0, 0.5).unwrap();
        let est = mc_exit(&u, &edge, (0.0, 0.5), p, 2000, 3, 1e-2);
        assert!(est.estimate <= 3.0 * est.stderr + 1e-12);
    }

    #[test]
    fn stderr_shrinks_like_root_n() {
        let g = Grid::new(0.01, 300).unwrap();
        let p = FluxParams::new(1.0).unwrap();
        let u = stationary_profile(1.0, p, g);
        let edge = EdgePath::constant(1.0, 0.2).unwrap();
        let a = mc_exit(&u, &edge, (0.0, 0.2), p, 4000, 5, 1e-3);
        let b = mc_exit(&u, &edge, (0.0, 0.2), p, 8000, 5, 1e-3);
        let ratio = a.stderr / b.stderr;
        assert!((ratio - 2f64.sqrt()).abs() < 0.15, "{ratio}");
        // the stationary edge removes j per unit time
        assert!((b.estimate - 0.2).abs() < 4.0 * b.stderr + 0.01, "{b:?}");
    }
}
