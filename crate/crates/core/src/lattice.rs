//! Independent random walkers on `{0, …, N}` with current reservoirs: injection
//! at site 0 and removal from the rightmost occupied site, both at rate `j/N`.

use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fbp::analytic::trapezoid_tail;
use crate::profile::FluxParams;
use crate::rng::{stream, SimRng};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LatticeError {
    #[error("invalid lattice run: {0}")]
    Invalid(String),
}

/// Fenwick tree over site occupations, for uniform particle selection.
#[derive(Debug, Clone)]
struct Fenwick {
    tree: Vec<i64>,
    top: usize,
}

impl Fenwick {
    fn new(counts: &[u64]) -> Self {
        let n = counts.len();
        let mut tree = vec![0i64; n + 1];
        for (i, &c) in counts.iter().enumerate() {
            let mut k = i + 1;
            while k <= n {
                tree[k] += c as i64;
                k += k & k.wrapping_neg();
            }
        }
        let mut top = 1;
        while top * 2 <= n {
            top *= 2;
        }
        Self { tree, top }
    }

    fn add(&mut self, site: usize, d: i64) {
        let mut k = site + 1;
        while k < self.tree.len() {
            self.tree[k] += d;
            k += k & k.wrapping_neg();
        }
    }

    /// Site holding the `rank`-th particle (0-based) in left-to-right order.
    fn find(&self, mut rank: i64) -> usize {
        let mut pos = 0;
        let mut step = self.top;
        while step > 0 {
            let next = pos + step;
            if next < self.tree.len() && self.tree[next] <= rank {
                pos = next;
                rank -= self.tree[next];
            }
            step /= 2;
        }
        pos
    }
}

/// Occupation numbers on sites `0..=N` and the current time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeState {
    pub occupation: Vec<u64>,
    pub time: f64,
}

impl LatticeState {
    pub fn new(occupation: Vec<u64>) -> Result<Self, LatticeError> {
        if occupation.len() < 2 {
            return Err(LatticeError::Invalid("need at least sites 0 and 1".into()));
        }
        Ok(Self { occupation, time: 0.0 })
    }

    /// Largest site index `N`.
    pub fn size(&self) -> usize {
        self.occupation.len() - 1
    }

    pub fn total(&self) -> u64 {
        self.occupation.iter().sum()
    }

    pub fn rightmost(&self) -> Option<usize> {
        self.occupation.iter().rposition(|&c| c > 0)
    }

    /// `(1/N) Σ_{y ≥ x} ξ(y)` for every site `x`.
    pub fn macro_tails(&self) -> Vec<f64> {
        let n = self.size() as f64;
        let mut out = vec![0.0; self.occupation.len()];
        let mut acc = 0u64;
        for x in (0..self.occupation.len()).rev() {
            acc += self.occupation[x];
            out[x] = acc as f64 / n;
        }
        out
    }

    /// `max_x |(1/N) Σ_{y≥x} ξ(y) - F(x/N)|`.
    pub fn sup_tail_distance(&self, tail: impl Fn(f64) -> f64) -> f64 {
        let n = self.size() as f64;
        self.macro_tails()
            .iter()
            .enumerate()
            .map(|(x, &v)| (v - tail(x as f64 / n)).abs())
            .fold(0.0, f64::max)
    }
}

/// Integer configuration with `N Σ_{y≥x} ξ(y) ≈ F(x/N)`: site `x` receives
/// `N (F(x/N) - F((x+1)/N))` rounded by largest remainder.
pub fn discretize(n: usize, tail: impl Fn(f64) -> f64) -> Vec<u64> {
    let nf = n as f64;
    let target: Vec<f64> = (0..=n)
        .map(|x| {
            let hi = if x == n { 0.0 } else { tail((x + 1) as f64 / nf) };
            (nf * (tail(x as f64 / nf) - hi)).max(0.0)
        })
        .collect();
    let total = target.iter().sum::<f64>().round() as u64;
    let mut occ: Vec<u64> = target.iter().map(|t| t.floor() as u64).collect();
    let mut left = total.saturating_sub(occ.iter().sum());
    let mut order: Vec<usize> = (0..=n).collect();
    order.sort_by(|&a, &b| {
        let ra = target[a] - target[a].floor();
        let rb = target[b] - target[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &x in &order {
        if left == 0 {
            break;
        }
        occ[x] += 1;
        left -= 1;
    }
    occ
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReservoirKind {
    Injection,
    Removal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReservoirEvent {
    pub time: f64,
    pub kind: ReservoirKind,
    pub site: usize,
    /// `|ξ|` right after the event.
    pub mass: u64,
}

#[derive(Debug, Clone)]
pub struct LatticeTrajectory {
    pub initial_mass: u64,
    pub snapshots: Vec<LatticeState>,
    pub reservoir: Vec<ReservoirEvent>,
    /// Attempted bulk jumps, suppressed ones included.
    pub bulk_events: u64,
}

/// Exact continuous-time simulation up to micro time `t_end`. Each particle
/// jumps at rate 1 to a uniformly chosen neighbour, jumps out of `[0, N]` are
/// suppressed.
pub fn simulate_lattice(
    xi0: &LatticeState,
    p: FluxParams,
    t_end: f64,
    save_times: &[f64],
    seed: u64,
) -> Result<LatticeTrajectory, LatticeError> {
    let mut rng = stream(seed, &[0]);
    simulate_with(xi0, p, t_end, save_times, &mut rng)
}

pub fn simulate_with(
    xi0: &LatticeState,
    p: FluxParams,
    t_end: f64,
    save_times: &[f64],
    rng: &mut SimRng,
) -> Result<LatticeTrajectory, LatticeError> {
    if !(t_end.is_finite() && t_end >= 0.0) {
        return Err(LatticeError::Invalid(format!("horizon {t_end}")));
    }
    let mut saves = save_times.to_vec();
    if saves.iter().any(|t| !(0.0..=t_end).contains(t)) {
        return Err(LatticeError::Invalid("save time outside [0, T]".into()));
    }
    saves.sort_by(f64::total_cmp);
    let n_sites = xi0.size();
    let rate_res = p.j / n_sites as f64;
    let mut occ = xi0.occupation.clone();
    let mut fen = Fenwick::new(&occ);
    let mut count: u64 = occ.iter().sum();
    let mut right = xi0.rightmost();
    let mut clock = xi0.time;
    let horizon = xi0.time + t_end;
    let mut snapshots = Vec::with_capacity(saves.len());
    let mut next_save = 0;
    let mut reservoir = Vec::new();
    let mut bulk_events = 0u64;
    let initial_mass = count;
    loop {
        let rate = count as f64 + rate_res + if count > 0 { rate_res } else { 0.0 };
        let e: f64 = rng.sample(Exp1);
        let t_next = clock + e / rate;
        while next_save < saves.len() && xi0.time + saves[next_save] < t_next {
            snapshots.push(LatticeState {
                occupation: occ.clone(),
                time: xi0.time + saves[next_save],
            });
            next_save += 1;
        }
        if t_next > horizon {
            break;
        }
        clock = t_next;
        let u = rng.random::<f64>() * rate;
        if u < count as f64 {
            bulk_events += 1;
            let rank = (u.floor() as i64).min(count as i64 - 1);
            let x = fen.find(rank);
            let to = if rng.random::<bool>() { x.checked_add(1) } else { x.checked_sub(1) };
            let Some(y) = to.filter(|&y| y <= n_sites) else { continue };
            occ[x] -= 1;
            occ[y] += 1;
            fen.add(x, -1);
            fen.add(y, 1);
            let r = right.expect("occupied");
            if y > r {
                right = Some(y);
            } else if x == r && occ[x] == 0 {
                right = Some(r - 1);
            }
        } else if u < count as f64 + rate_res {
            occ[0] += 1;
            fen.add(0, 1);
            count += 1;
            right = right.or(Some(0));
            reservoir.push(ReservoirEvent {
                time: clock,
                kind: ReservoirKind::Injection,
                site: 0,
                mass: count,
            });
        } else {
            let r = right.expect("removal only when occupied");
            debug_assert!(occ[r] > 0 && occ[r + 1..].iter().all(|&c| c == 0));
            occ[r] -= 1;
            fen.add(r, -1);
            count -= 1;
            if occ[r] == 0 {
                right = occ[..r].iter().rposition(|&c| c > 0);
            }
            reservoir.push(ReservoirEvent {
                time: clock,
                kind: ReservoirKind::Removal,
                site: r,
                mass: count,
            });
        }
    }
    Ok(LatticeTrajectory {
        initial_mass,
        snapshots,
        reservoir,
        bulk_events,
    })
}

/// `(t, |ξ_t|)` at time 0 and after every reservoir event.
pub fn total_mass_series(traj: &LatticeTrajectory) -> Vec<(f64, u64)> {
    let t0 = traj.snapshots.first().map(|s| s.time).unwrap_or(0.0).min(0.0);
    std::iter::once((t0, traj.initial_mass))
        .chain(traj.reservoir.iter().map(|e| (e.time, e.mass)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Regime {
    /// Macro time `ln ln N`.
    Subcritical,
    /// Macro time `N t`.
    Critical { t: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub n: usize,
    pub micro_time: f64,
    pub mass_initial: f64,
    pub mass_final: f64,
    /// Against the stationary profile of the measured mass.
    pub sup_distance: f64,
    /// Against the stationary profile of the initial mass.
    pub sup_distance_initial: f64,
    /// `(macro t, |ξ|/N)` in the critical regime.
    pub mass_path: Vec<(f64, f64)>,
}

/// Starts from the stationary profile of mass `M` and measures the macroscopic
/// tail at the end of the regime's time window, for every `N`.
pub fn scaling_experiment(
    n_list: &[usize],
    regime: Regime,
    m: f64,
    p: FluxParams,
    seed: u64,
) -> Result<Vec<ScalingRow>, LatticeError> {
    n_list
        .iter()
        .map(|&n| {
            if n < 3 {
                return Err(LatticeError::Invalid(format!("N = {n}")));
            }
            let occ = discretize(n, |r| trapezoid_tail(m, p, r));
            let xi0 = LatticeState::new(occ)?;
            let nf = n as f64;
            let mass_initial = xi0.total() as f64 / nf;
            let (micro, saves): (f64, Vec<f64>) = match regime {
                Regime::Subcritical => (nf * nf * nf.ln().ln(), vec![]),
                Regime::Critical { t } => {
                    let micro = nf.powi(3) * t;
                    (micro, (1..=16).map(|k| micro * k as f64 / 16.0).collect())
                }
            };
            let mut saves = saves;
            saves.push(micro);
            saves.dedup();
            let traj = simulate_lattice(&xi0, p, micro, &saves, crate::rng::derive_seed(seed, &[n as u64]))?;
            let last = traj.snapshots.last().expect("final snapshot");
            let mass_final = last.total() as f64 / nf;
            let sup_distance = if mass_final > 0.0 {
                last.sup_tail_distance(|r| trapezoid_tail(mass_final, p, r))
            } else {
                0.0
            };
            let sup_distance_initial = last.sup_tail_distance(|r| trapezoid_tail(m, p, r));
            let mass_path = match regime {
                Regime::Critical { .. } => std::iter::once((0.0, mass_initial))
                    .chain(traj.snapshots.iter().map(|s| (s.time / nf.powi(3), s.total() as f64 / nf)))
                    .collect(),
                Regime::Subcritical => vec![],
            };
            Ok(ScalingRow {
                n,
                micro_time: micro,
                mass_initial,
                mass_final,
                sup_distance,
                sup_distance_initial,
                mass_path,
            })
        })
        .collect()
}
