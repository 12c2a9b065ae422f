use rand::Rng;
use rand_distr::{Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{InjectionLaw, VariantError};
use crate::particles::{sample_initial, ParticleState};
use crate::profile::{cut_mass, CutSide, DensityProfile};
use crate::rng::{stream, SimRng};
use crate::stats::quantile;

/// Order statistics of a configuration at one time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeStats {
    pub time: f64,
    pub min: f64,
    pub median: f64,
    pub max: f64,
}

impl EdgeStats {
    fn of(state: &ParticleState) -> Self {
        let x = state.positions();
        Self {
            time: state.time,
            min: x[0],
            median: quantile(x, 0.5),
            max: x[x.len() - 1],
        }
    }
}

#[derive(Debug, Clone)]
pub struct VariantTrajectory {
    pub snapshots: Vec<ParticleState>,
    pub edges: Vec<EdgeStats>,
    pub events: u64,
}

fn prepare(n: usize, t_end: f64, save_times: &[f64]) -> Result<Vec<f64>, VariantError> {
    if n == 0 {
        return Err(VariantError::Invalid("need at least one particle".into()));
    }
    if !(t_end.is_finite() && t_end >= 0.0) || save_times.iter().any(|t| !(0.0..=t_end).contains(t)) {
        return Err(VariantError::Invalid("save times must lie in [0, T]".into()));
    }
    let mut s = save_times.to_vec();
    s.sort_by(f64::total_cmp);
    Ok(s)
}

fn initial(n: usize, rho0: &DensityProfile, rng: &mut SimRng) -> Result<Vec<f64>, VariantError> {
    sample_initial(n, rho0, rng).map_err(|e| VariantError::Invalid(e.to_string()))
}

/// Shared event loop: `Exp(N)` gaps, `advance(xs, dt, rng)` between events,
/// `event(xs, rng)` at each event.
fn event_loop(
    mut xs: Vec<f64>,
    t_end: f64,
    saves: &[f64],
    rng: &mut SimRng,
    mut advance: impl FnMut(&mut [f64], f64, &mut SimRng),
    mut event: impl FnMut(&mut Vec<f64>, &mut SimRng),
) -> VariantTrajectory {
    let gaps = Exp::new(xs.len() as f64).expect("positive rate");
    let mut clock = 0.0;
    let mut events = 0u64;
    let mut snapshots = Vec::with_capacity(saves.len());
    let mut next = 0;
    loop {
        let t_ev = clock + rng.sample(gaps);
        while next < saves.len() && saves[next] <= t_ev {
            if saves[next] > clock {
                advance(&mut xs, saves[next] - clock, rng);
                clock = saves[next];
            }
            snapshots.push(ParticleState::new(xs.clone(), clock));
            next += 1;
        }
        if t_ev > t_end {
            break;
        }
        advance(&mut xs, t_ev - clock, rng);
        clock = t_ev;
        event(&mut xs, rng);
        events += 1;
    }
    let edges = snapshots.iter().map(EdgeStats::of).collect();
    VariantTrajectory { snapshots, edges, events }
}

fn reflected(xs: &mut [f64], dt: f64, rng: &mut SimRng) {
    let s = dt.sqrt();
    for x in xs.iter_mut() {
        let z: f64 = rng.sample(StandardNormal);
        *x = (*x + s * z).abs();
    }
}

fn free(xs: &mut [f64], dt: f64, rng: &mut SimRng) {
    let s = dt.sqrt();
    for x in xs.iter_mut() {
        let z: f64 = rng.sample(StandardNormal);
        *x += s * z;
    }
}

fn argmin(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x < xs[best] {
            best = i;
        }
    }
    best
}

/// Reflected Brownian cells; at rate `N` a cell is born with law `f` and the
/// rightmost cell (possibly the newborn) is removed.
pub fn diffuse_simulate(
    n: usize,
    rho0: &DensityProfile,
    f: &InjectionLaw,
    t_end: f64,
    save_times: &[f64],
    seed: u64,
) -> Result<VariantTrajectory, VariantError> {
    let saves = prepare(n, t_end, save_times)?;
    let mut rng = stream(seed, &[0]);
    let xs = initial(n, rho0, &mut rng)?;
    Ok(event_loop(xs, t_end, &saves, &mut rng, reflected, |xs, rng| {
        let y = f.sample(rng).max(0.0);
        let mut top = 0;
        for (i, &x) in xs.iter().enumerate() {
            if x >= xs[top] {
                top = i;
            }
        }
        if y < xs[top] {
            xs[top] = y;
        }
    }))
}

/// Brunet–Derrida selection on `ℝ`: free Brownian cells, a uniformly chosen cell
/// duplicates in place at rate `N` and the leftmost cell is deleted.
pub fn bd_simulate(
    n: usize,
    rho0: &DensityProfile,
    t_end: f64,
    save_times: &[f64],
    seed: u64,
) -> Result<VariantTrajectory, VariantError> {
    let saves = prepare(n, t_end, save_times)?;
    let mut rng = stream(seed, &[0]);
    let xs = initial(n, rho0, &mut rng)?;
    Ok(event_loop(xs, t_end, &saves, &mut rng, free, |xs, rng| {
        let parent = rng.random_range(0..xs.len());
        let child = xs[parent];
        let low = argmin(xs);
        xs[low] = child;
    }))
}

/// Durrett–Remenik: static cells, a uniform parent at `r'` creates a child at
/// `r' + κ`-sample and the leftmost cell is erased.
pub fn dr_simulate(
    n: usize,
    rho0: &DensityProfile,
    kappa: &InjectionLaw,
    t_end: f64,
    save_times: &[f64],
    seed: u64,
) -> Result<VariantTrajectory, VariantError> {
    let saves = prepare(n, t_end, save_times)?;
    let mut rng = stream(seed, &[0]);
    let xs = initial(n, rho0, &mut rng)?;
    Ok(event_loop(xs, t_end, &saves, &mut rng, |_, _, _| {}, |xs, rng| {
        let parent = rng.random_range(0..xs.len());
        let child = xs[parent] + kappa.sample(rng);
        let low = argmin(xs);
        if child > xs[low] {
            xs[low] = child;
        }
    }))
}

#[derive(Debug, Clone)]
pub struct MeanField {
    pub profile: DensityProfile,
    /// Mass pushed beyond the grid and not accounted for by the cut.
    pub lost: f64,
}

/// Grid oracle for `∂ρ/∂t = ∫κ(r - r')ρ(r')dr'` with the leftmost mass erased:
/// each step of length `δ` applies `exp(δK)` and then cuts the excess at the
/// left end, so the mass stays equal to the initial one.
pub fn dr_mean_field(
    rho0: &DensityProfile,
    kappa: &InjectionLaw,
    t: f64,
    delta: f64,
) -> Result<MeanField, VariantError> {
    let g = rho0.grid();
    let (offset, probs) = kappa.cell_transfer(g.h())?;
    let steps = (t / delta).round().max(1.0) as usize;
    let delta = t / steps as f64;
    let m0 = rho0.total_mass();
    let n = rho0.values().len();
    let mut u = rho0.clone();
    let mut lost = 0.0;
    for _ in 0..steps {
        let mut acc = u.values().to_vec();
        let mut term = acc.clone();
        let mut k = 1;
        // mass sent left of 0 is the leftmost and goes first under the cut
        let mut below = 0.0;
        loop {
            let mut next = vec![0.0; n];
            for (i, &v) in term.iter().enumerate() {
                if v == 0.0 {
                    continue;
                }
                for (q, &pq) in probs.iter().enumerate() {
                    let dst = i as i64 + offset + q as i64;
                    if dst < 0 {
                        below += pq * v * delta / k as f64 * g.h();
                    } else if dst < n as i64 {
                        next[dst as usize] += pq * v;
                    }
                }
            }
            let scale = delta / k as f64;
            let mut size = 0.0;
            for (a, x) in acc.iter_mut().zip(next.iter_mut()) {
                *x *= scale;
                *a += *x;
                size += *x;
            }
            term = next;
            k += 1;
            if size * g.h() < 1e-17 * m0 {
                break;
            }
        }
        let grown = DensityProfile::new(g, acc).map_err(|e| VariantError::Invalid(e.to_string()))?;
        let excess = grown.total_mass() + below - m0;
        lost += m0 * delta.exp() - grown.total_mass() - below;
        if excess < below {
            // the cut stops left of 0; the mass kept there is not representable
            lost += below - excess;
        }
        u = cut_mass(&grown, (excess - below).max(0.0), CutSide::Left)
            .map_err(|e| VariantError::Invalid(e.to_string()))?;
    }
    Ok(MeanField { profile: u, lost })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fbp::analytic::{diffuse_stationary, stationary_profile};
    use crate::particles::simulate_basic;
    use crate::profile::{FluxParams, Grid};

    #[test]
    fn counts_are_conserved() {
        let g = Grid::new(0.01, 300).unwrap();
        let u = stationary_profile(1.0, FluxParams::new(1.0).unwrap(), g);
        let f = InjectionLaw::uniform(0.0, 0.5, 10).unwrap();
        let k = InjectionLaw::uniform(-0.25, 0.25, 10).unwrap();
        let a = diffuse_simulate(50, &u, &f, 1.0, &[0.5, 1.0], 1).unwrap();
        let b = bd_simulate(50, &u, 1.0, &[0.5, 1.0], 1).unwrap();
        let c = dr_simulate(50, &u, &k, 1.0, &[0.5, 1.0], 1).unwrap();
        for tr in [&a, &b, &c] {
            assert_eq!(tr.snapshots.len(), 2);
            assert!(tr.snapshots.iter().all(|s| s.len() == 50));
        }
    }

    #[test]
    fn narrow_injection_matches_the_basic_model() {
        let p = FluxParams::new(1.0).unwrap();
        let g = Grid::new(0.01, 300).unwrap();
        let u = stationary_profile(1.0, p, g);
        let f = InjectionLaw::uniform(0.0, 1e-6, 1).unwrap();
        let n = 4000;
        let a = diffuse_simulate(n, &u, &f, 0.5, &[0.5], 3).unwrap();
        let b = simulate_basic(n, &u, p, 0.5, &[0.5], 4).unwrap();
        let d = a.snapshots[0].sup_tail_distance(&u).max(b.snapshots[0].sup_tail_distance(&u));
        assert!(d < 0.05, "{d}");
    }

    #[test]
    fn diffuse_stationary_start_stays_put() {
        let f = InjectionLaw::uniform(0.0, 0.4, 8).unwrap();
        let g = Grid::new(0.005, 600).unwrap();
        let rho = diffuse_stationary(1.0, &f, g);
        let tr = diffuse_simulate(5000, &rho, &f, 0.5, &[0.25, 0.5], 6).unwrap();
        for s in &tr.snapshots {
            let d = s.sup_tail_distance(&rho);
            assert!(d < 0.04, "{d}");
        }
    }

    #[test]
    fn bd_children_sit_on_parents_and_front_moves_right() {
        let g = Grid::new(0.01, 600).unwrap();
        let u = crate::fbp::analytic::bd_wave(1.0, g);
        let tr = bd_simulate(2000, &u, 1.0, &[0.0, 1.0], 5).unwrap();
        assert!(tr.edges[1].median > tr.edges[0].median);
        assert!(tr.edges[1].min > tr.edges[0].min);
    }

    #[test]
    fn dr_point_kernel_pushes_the_minimum() {
        let g = Grid::new(0.01, 300).unwrap();
        let u = stationary_profile(1.0, FluxParams::new(1.0).unwrap(), g);
        let k = InjectionLaw::point(0.2);
        let tr = dr_simulate(500, &u, &k, 2.0, &[0.0, 1.0, 2.0], 2).unwrap();
        assert!(tr.edges.windows(2).all(|w| w[1].min >= w[0].min));
        assert!(tr.edges[2].min > tr.edges[0].min);
    }

    #[test]
    fn mean_field_keeps_the_mass() {
        let g = Grid::new(0.01, 1600).unwrap();
        let u = DensityProfile::from_fn(g, |r| if (1.0..2.0).contains(&r) { 1.0 } else { 0.0 });
        let k = InjectionLaw::uniform(-0.5, 0.5, 10).unwrap();
        let mf = dr_mean_field(&u, &k, 1.0, 0.01).unwrap();
        assert!((mf.profile.total_mass() - u.total_mass()).abs() < 1e-10);
        assert!(mf.lost.abs() < 1e-9, "{}", mf.lost);
        // the left edge moved right
        assert!(mf.profile.values()[110] == 0.0);
    }
}
