//! The N-particle Brownian model with injection at the origin and removal of
//! the rightmost particle, its coupled stochastic barriers, empirical tails
//! and partition seminorms.

use rand::Rng;
use rand_distr::{Exp, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::profile::{CellSampler, DensityProfile, FluxParams};
use crate::rng::{stream, SimRng};
use crate::stats::quantile;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParticleError {
    #[error("invalid particle run: {0}")]
    Invalid(String),
}

/// Particle positions sorted ascending, with the time they refer to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleState {
    positions: Vec<f64>,
    pub time: f64,
}

impl ParticleState {
    pub fn new(mut positions: Vec<f64>, time: f64) -> Self {
        positions.sort_by(f64::total_cmp);
        Self { positions, time }
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// `#{x_i ≥ r} / N`.
    pub fn tail(&self, r: f64) -> f64 {
        if self.positions.is_empty() {
            return 0.0;
        }
        let below = self.positions.partition_point(|&x| x < r);
        (self.positions.len() - below) as f64 / self.positions.len() as f64
    }

    /// `sup_r |tail(r) - F(r)/F(0)|` for a reference profile, checked on both
    /// sides of every jump of the empirical tail and at the reference grid nodes.
    pub fn sup_tail_distance(&self, reference: &DensityProfile) -> f64 {
        let n = self.positions.len() as f64;
        let total = reference.total_mass();
        let f = |r: f64| reference.tail_mass(r) / total;
        let mut sup: f64 = 0.0;
        for (k, &x) in self.positions.iter().enumerate() {
            let fx = f(x);
            // just left of x the count is n - k (ties are harmless: both sides checked)
            sup = sup.max(((n - k as f64) / n - fx).abs());
            sup = sup.max(((n - k as f64 - 1.0) / n - fx).abs());
        }
        let g = reference.grid();
        for k in 0..=g.n() {
            let r = g.node(k);
            sup = sup.max((self.tail(r) - f(r)).abs());
        }
        sup
    }
}

pub fn empirical_tail(state: &ParticleState, r: f64) -> f64 {
    state.tail(r)
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub snapshots: Vec<ParticleState>,
    pub events: u64,
}

/// Index of the largest entry, ties to the largest index.
fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x >= xs[best] {
            best = i;
        }
    }
    best
}

fn diffuse_all(xs: &mut [f64], dt: f64, rng: &mut SimRng) {
    let s = dt.sqrt();
    for x in xs.iter_mut() {
        let z: f64 = rng.sample(StandardNormal);
        *x = (*x + s * z).abs();
    }
}

fn check_times(n: usize, t_end: f64, save_times: &[f64]) -> Result<Vec<f64>, ParticleError> {
    if n == 0 {
        return Err(ParticleError::Invalid("need at least one particle".into()));
    }
    if !(t_end.is_finite() && t_end >= 0.0) {
        return Err(ParticleError::Invalid(format!("horizon {t_end}")));
    }
    let mut ts: Vec<f64> = save_times.to_vec();
    if ts.iter().any(|t| !(0.0..=t_end).contains(t)) {
        return Err(ParticleError::Invalid("save time outside [0, T]".into()));
    }
    ts.sort_by(f64::total_cmp);
    Ok(ts)
}

pub fn sample_initial(n: usize, rho0: &DensityProfile, rng: &mut SimRng) -> Result<Vec<f64>, ParticleError> {
    if !(rho0.total_mass() > 0.0) {
        return Err(ParticleError::Invalid("initial profile has no mass".into()));
    }
    let sampler = CellSampler::new(rho0);
    Ok((0..n).map(|_| sampler.sample(rng)).collect())
}

/// Exact simulation: exponential(jN) gaps, reflected Gaussian endpoints in between,
/// and the rightmost particle sent to 0 at each event.
pub fn simulate_basic(
    n: usize,
    rho0: &DensityProfile,
    p: FluxParams,
    t_end: f64,
    save_times: &[f64],
    seed: u64,
) -> Result<Trajectory, ParticleError> {
    let saves = check_times(n, t_end, save_times)?;
    let mut rng = stream(seed, &[0]);
    let mut xs = sample_initial(n, rho0, &mut rng)?;
    let gaps = Exp::new(p.j * n as f64).map_err(|e| ParticleError::Invalid(e.to_string()))?;
    let mut clock = 0.0;
    let mut events = 0u64;
    let mut snapshots = Vec::with_capacity(saves.len());
    let mut next_save = 0;
    let last = saves.last().copied().unwrap_or(0.0);
    loop {
        let gap: f64 = rng.sample(gaps);
        let event_time = clock + gap;
        while next_save < saves.len() && saves[next_save] <= event_time {
            let s = saves[next_save];
            if s > clock {
                diffuse_all(&mut xs, s - clock, &mut rng);
                clock = s;
            }
            snapshots.push(ParticleState::new(xs.clone(), s));
            next_save += 1;
        }
        if next_save == saves.len() && event_time > last {
            break;
        }
        diffuse_all(&mut xs, event_time - clock, &mut rng);
        clock = event_time;
        let i = argmax(&xs);
        xs[i] = 0.0;
        events += 1;
    }
    Ok(Trajectory { snapshots, events })
}

/// Runs `f(replica, seed)` for every replica in parallel; results ordered by replica.
pub fn run_replicas<T: Send>(replicas: usize, master: u64, f: impl Fn(usize, u64) -> T + Sync) -> Vec<T> {
    (0..replicas)
        .into_par_iter()
        .map(|r| f(r, crate::rng::derive_seed(master, &[r as u64])))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowFlags {
    pub window: usize,
    pub time: f64,
    pub events: usize,
    pub lower_ok: bool,
    /// `None` once the upper barrier is undefined.
    pub upper_ok: Option<bool>,
    pub degenerate: bool,
}

/// Lower, main and upper systems at one grid time.
#[derive(Debug, Clone)]
pub struct BarrierTriple {
    pub lower: ParticleState,
    pub main: ParticleState,
    pub upper: Option<ParticleState>,
}

#[derive(Debug, Clone)]
pub struct BarrierTrajectory {
    pub flags: Vec<WindowFlags>,
    pub triples: Vec<BarrierTriple>,
}

/// `a ≼ b` for counting measures of equal size: sorted `a_(k) ≤ b_(k)`.
pub fn counting_order(a: &[f64], b: &[f64]) -> bool {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    a.len() == b.len() && a.iter().zip(b.iter()).all(|(x, y)| x <= y)
}

/// Lower, main and upper particle systems driven by common Poisson events, with
/// pairs `(x⁻_i, x_i)` and `(x_i, x⁺_i)` coupled increasingly: independent until
/// they meet (detected on substeps of `gap / substeps`), identical afterwards.
pub fn simulate_barriers(
    n: usize,
    rho0: &DensityProfile,
    p: FluxParams,
    delta: f64,
    windows: usize,
    substeps: usize,
    seed: u64,
) -> Result<BarrierTrajectory, ParticleError> {
    if !(delta.is_finite() && delta > 0.0) || substeps == 0 || n == 0 {
        return Err(ParticleError::Invalid(format!(
            "δ = {delta}, substeps = {substeps}, N = {n}"
        )));
    }
    let mut rng = stream(seed, &[0]);
    let init = sample_initial(n, rho0, &mut rng)?;
    let gaps = Exp::new(p.j * n as f64).map_err(|e| ParticleError::Invalid(e.to_string()))?;
    let mut x = init.clone();
    // lower system: labels 0..n pair with x; extra labels are singles
    let mut lo = init.clone();
    let mut lo_met = vec![true; n];
    // upper system: y paired with x; red = removed at the window start
    let mut up = init;
    let mut up_met = vec![true; n];
    let mut red = vec![false; n];
    let mut upper_alive = true;
    let mut flags = Vec::with_capacity(windows);
    let mut triples = Vec::with_capacity(windows + 1);
    triples.push(BarrierTriple {
        lower: ParticleState::new(lo.clone(), 0.0),
        main: ParticleState::new(x.clone(), 0.0),
        upper: Some(ParticleState::new(up.clone(), 0.0)),
    });
    for w in 0..windows {
        let mut wrng = stream(seed, &[1, w as u64]);
        let t0 = w as f64 * delta;
        let mut times = Vec::new();
        let mut s = 0.0;
        loop {
            s += wrng.sample(gaps);
            if s >= delta {
                break;
            }
            times.push(s);
        }
        let n_k = times.len();
        let degenerate = n_k >= n;
        if degenerate {
            upper_alive = false;
        }
        if upper_alive {
            // the n_k rightmost of the upper system turn red
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| up[a].total_cmp(&up[b]).then(a.cmp(&b)));
            for &i in order.iter().rev().take(n_k) {
                red[i] = true;
            }
        }
        let mut clock = 0.0;
        for k in 0..=n_k {
            let until = if k < n_k { times[k] } else { delta };
            let gap = until - clock;
            if gap > 0.0 {
                let dt = gap / substeps as f64;
                let sq = dt.sqrt();
                for _ in 0..substeps {
                    for i in 0..n {
                        let z: f64 = wrng.sample(StandardNormal);
                        let xi = (x[i] + sq * z).abs();
                        x[i] = xi;
                        if lo_met[i] {
                            lo[i] = xi;
                        } else {
                            let z2: f64 = wrng.sample(StandardNormal);
                            let v = (lo[i] + sq * z2).abs();
                            if v >= xi {
                                lo[i] = xi;
                                lo_met[i] = true;
                            } else {
                                lo[i] = v;
                            }
                        }
                        if upper_alive {
                            if up_met[i] {
                                up[i] = xi;
                            } else {
                                let z3: f64 = wrng.sample(StandardNormal);
                                let v = (up[i] + sq * z3).abs();
                                if v <= xi {
                                    up[i] = xi;
                                    up_met[i] = true;
                                } else {
                                    up[i] = v;
                                }
                            }
                        }
                    }
                    // extra lower particles move freely
                    for v in lo[n..].iter_mut() {
                        let z: f64 = wrng.sample(StandardNormal);
                        *v = (*v + sq * z).abs();
                    }
                }
            }
            clock = until;
            if k == n_k {
                break;
            }
            let i = argmax(&x);
            // lower: the old partner becomes a single, the pair restarts at 0
            lo.push(lo[i]);
            lo[i] = 0.0;
            lo_met[i] = true;
            if upper_alive {
                let mut jr = usize::MAX;
                for (k2, &is_red) in red.iter().enumerate() {
                    if is_red && (jr == usize::MAX || x[k2] >= x[jr]) {
                        jr = k2;
                    }
                }
                debug_assert!(jr != usize::MAX, "one red particle per event");
                if jr != i {
                    up[jr] = up[i];
                    up_met[jr] = up[jr] == x[jr];
                }
                red[jr] = false;
                red[i] = false;
                up[i] = 0.0;
                up_met[i] = true;
            }
            x[i] = 0.0;
        }
        // lower: drop the n_k rightmost, relabelling broken pairs by the smallest single
        for _ in 0..n_k {
            let r = argmax(&lo);
            if r >= n {
                lo.remove(r);
            } else {
                let v = lo.remove(n);
                lo[r] = v;
                lo_met[r] = lo[r] == x[r];
            }
        }
        debug_assert_eq!(lo.len(), n);
        let t = t0 + delta;
        let lower_ok = counting_order(&lo, &x);
        let upper_ok = upper_alive.then(|| counting_order(&x, &up));
        flags.push(WindowFlags {
            window: w,
            time: t,
            events: n_k,
            lower_ok,
            upper_ok,
            degenerate,
        });
        triples.push(BarrierTriple {
            lower: ParticleState::new(lo.clone(), t),
            main: ParticleState::new(x.clone(), t),
            upper: upper_alive.then(|| ParticleState::new(up.clone(), t)),
        });
    }
    Ok(BarrierTrajectory { flags, triples })
}

/// Partition of `ℝ₊` into cells of length `ℓ = N^{-β}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartitionSeminorm {
    pub ell: f64,
}

impl PartitionSeminorm {
    pub fn new(n: usize, beta: f64) -> Self {
        assert!(beta > 0.0 && beta < 1.0, "β must lie in (0, 1)");
        Self {
            ell: (n as f64).powf(-beta),
        }
    }

    /// Per-cell masses of a particle configuration (unit mass per particle).
    pub fn bin_particles(&self, state: &ParticleState, cells: usize) -> Vec<f64> {
        let mut out = vec![0.0; cells];
        for &x in state.positions() {
            let k = ((x / self.ell) as usize).min(cells - 1);
            out[k] += 1.0;
        }
        out
    }

    /// Per-cell masses of `scale · ν`.
    pub fn bin_profile(&self, nu: &DensityProfile, scale: f64, cells: usize) -> Vec<f64> {
        (0..cells)
            .map(|k| {
                let a = nu.tail_mass(k as f64 * self.ell);
                let b = if k + 1 == cells { 0.0 } else { nu.tail_mass((k + 1) as f64 * self.ell) };
                scale * (a - b)
            })
            .collect()
    }

    pub fn cells_for(&self, state: &ParticleState, nu: &DensityProfile) -> usize {
        let reach = state
            .positions()
            .last()
            .copied()
            .unwrap_or(0.0)
            .max(nu.grid().r_max());
        (reach / self.ell).floor() as usize + 1
    }

    /// `Σ_I [μ(I) - m_I + ν(I) - m_I]` with `μ` the counting measure and `ν = scale · nu`.
    pub fn value(&self, mu: &ParticleState, nu: &DensityProfile, scale: f64) -> f64 {
        let cells = self.cells_for(mu, nu);
        seminorm(&self.bin_particles(mu, cells), &self.bin_profile(nu, scale, cells))
    }
}

/// `Σ_I [μ(I) - m_I + ν(I) - m_I]` with `m_I = ⌊min(μ(I), ν(I))⌋`.
pub fn seminorm(mu_cells: &[f64], nu_cells: &[f64]) -> f64 {
    assert_eq!(mu_cells.len(), nu_cells.len());
    mu_cells
        .iter()
        .zip(nu_cells.iter())
        .map(|(&a, &b)| {
            let m = a.min(b).max(0.0).floor();
            (a - m) + (b - m)
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HydroReport {
    pub distances: Vec<f64>,
    pub median: f64,
    pub q95: f64,
    pub fraction_within: f64,
    pub tol: f64,
    pub pass: bool,
}

/// Sup tail distance of each replica to the reference `S_t ρ0`; passes when at
/// least `coverage` of the replicas are within `tol`.
pub fn hydro_check(states: &[ParticleState], reference: &DensityProfile, tol: f64, coverage: f64) -> HydroReport {
    let distances: Vec<f64> = states.iter().map(|s| s.sup_tail_distance(reference)).collect();
    let within = distances.iter().filter(|&&d| d <= tol).count() as f64 / distances.len().max(1) as f64;
    HydroReport {
        median: quantile(&distances, 0.5),
        q95: quantile(&distances, 0.95),
        fraction_within: within,
        tol,
        pass: within >= coverage,
        distances,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fbp::analytic::stationary_profile;
    use crate::green::{convolve, KernelSpec};
    use crate::profile::Grid;

    fn p1() -> FluxParams {
        FluxParams::new(1.0).unwrap()
    }

    #[test]
    fn tails_of_a_grid_configuration() {
        let s = ParticleState::new((0..100).map(|k| k as f64 / 100.0).collect(), 0.0);
        assert_eq!(s.tail(0.0), 1.0);
        assert_eq!(s.tail(1.5), 0.0);
        for r in [0.13, 0.5, 0.991] {
            assert!((s.tail(r) - (1.0 - r)).abs() <= 0.01 + 1e-12);
        }
    }

    #[test]
    fn counts_are_constant_and_events_poisson() {
        let g = Grid::new(0.01, 300).unwrap();
        let u = stationary_profile(1.0, p1(), g);
        let counts: Vec<u64> = run_replicas(40, 9, |_, seed| {
            let tr = simulate_basic(200, &u, p1(), 1.0, &[0.5, 1.0], seed).unwrap();
            assert!(tr.snapshots.iter().all(|s| s.len() == 200));
            assert!(tr.snapshots.iter().all(|s| s.positions()[0] >= 0.0));
            tr.events
        });
        let mean = counts.iter().sum::<u64>() as f64 / counts.len() as f64;
        // mean jNT = 200 with standard error √200/√40
        assert!((mean - 200.0).abs() < 3.0 * (200.0f64 / 40.0).sqrt(), "{mean}");
    }

    #[test]
    fn free_particles_follow_the_neumann_kernel() {
        let g = Grid::new(0.01, 600).unwrap();
        let u = stationary_profile(1.0, p1(), g);
        let n = 10_000;
        let tiny = FluxParams { j: 1e-300 };
        let tr = simulate_basic(n, &u, tiny, 0.3, &[0.3], 4).unwrap();
        let exact = convolve(&KernelSpec::half_line(0.3), &u).unwrap();
        let d = tr.snapshots[0].sup_tail_distance(&exact);
        let band = 3.0 * ((n as f64).ln() / n as f64).sqrt();
        assert!(d <= band, "{d} > {band}");
    }

    #[test]
    fn barrier_order_holds_pathwise() {
        let g = Grid::new(0.01, 300).unwrap();
        let u = stationary_profile(1.0, p1(), g);
        for seed in 0..5 {
            let tr = simulate_barriers(100, &u, p1(), 0.05, 6, 8, seed).unwrap();
            for f in &tr.flags {
                assert!(f.lower_ok && f.upper_ok != Some(false), "{f:?}");
            }
        }
        // a single particle: the lower barrier teleports to the origin
        let tr = simulate_barriers(1, &u, p1(), 0.1, 4, 4, 1).unwrap();
        assert!(tr.flags.iter().all(|f| f.lower_ok));
    }

    #[test]
    fn seminorm_by_hand() {
        assert!((seminorm(&[3.0], &[2.2]) - 1.2).abs() < 1e-12);
        assert_eq!(seminorm(&[2.0, 1.0], &[2.0, 1.0]), 0.0);
        let a = [0.4, 5.0, 1.7];
        let b = [1.1, 4.2, 1.7];
        assert!((seminorm(&a, &b) - seminorm(&b, &a)).abs() < 1e-15);
        for i in 0..3 {
            assert!((a[i] - b[i]).abs() <= seminorm(&a[i..=i], &b[i..=i]) + 1e-15);
        }
    }
}
