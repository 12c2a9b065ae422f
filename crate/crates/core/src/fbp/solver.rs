use serde::{Deserialize, Serialize};

use super::FbpError;
use crate::profile::{DensityProfile, FluxParams, Grid};

/// Piecewise-linear edge trajectory on a uniform time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgePath {
    dt: f64,
    nodes: Vec<f64>,
}

impl EdgePath {
    pub fn new(dt: f64, nodes: Vec<f64>) -> Result<Self, FbpError> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(FbpError::InvalidEdge(format!("time step {dt}")));
        }
        if nodes.len() < 2 {
            return Err(FbpError::InvalidEdge("need at least two nodes".into()));
        }
        if let Some(x) = nodes.iter().find(|x| !(x.is_finite() && **x > 0.0)) {
            return Err(FbpError::InvalidEdge(format!("edge value {x} is not positive")));
        }
        Ok(Self { dt, nodes })
    }

    pub fn constant(x: f64, duration: f64) -> Result<Self, FbpError> {
        Self::new(duration, vec![x, x])
    }

    /// `X_t = x0 + v t` on `[0, duration]`.
    pub fn linear(x0: f64, v: f64, duration: f64) -> Result<Self, FbpError> {
        Self::new(duration, vec![x0, x0 + v * duration])
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn duration(&self) -> f64 {
        self.dt * (self.nodes.len() - 1) as f64
    }

    fn segment(&self, t: f64) -> usize {
        ((t / self.dt).floor().max(0.0) as usize).min(self.nodes.len() - 2)
    }

    pub fn at(&self, t: f64) -> f64 {
        let k = self.segment(t);
        let s = (t - self.dt * k as f64) / self.dt;
        self.nodes[k] + s * (self.nodes[k + 1] - self.nodes[k])
    }

    pub fn velocity(&self, t: f64) -> f64 {
        let k = self.segment(t);
        (self.nodes[k + 1] - self.nodes[k]) / self.dt
    }

    pub fn velocities(&self) -> Vec<f64> {
        self.nodes.windows(2).map(|w| (w[1] - w[0]) / self.dt).collect()
    }
}

/// Output of a moving-domain run. Mass, flux and edge are recorded at every step.
#[derive(Debug, Clone)]
pub struct PdeRun {
    pub j: f64,
    pub times: Vec<f64>,
    pub mass: Vec<f64>,
    pub flux: Vec<f64>,
    pub edge: Vec<f64>,
    pub snapshots: Vec<(f64, DensityProfile)>,
    pub clip_mass: f64,
}

impl PdeRun {
    fn index(&self, t: f64) -> usize {
        let k = self.times.partition_point(|&s| s < t - 1e-12 * t.abs().max(1.0));
        k.min(self.times.len() - 1)
    }

    pub fn mass_at(&self, t: f64) -> f64 {
        self.mass[self.index(t)]
    }

    /// `Δ_{[t1,t2]} = m(t1) - m(t2) + j (t2 - t1)`.
    pub fn lost(&self, t1: f64, t2: f64) -> f64 {
        let (a, b) = (self.index(t1), self.index(t2));
        self.mass[a] - self.mass[b] + self.j * (self.times[b] - self.times[a])
    }

    /// Accumulated loss `Δ_{[0,t]}` at every recorded time.
    pub fn lost_series(&self) -> Vec<f64> {
        let m0 = self.mass[0];
        self.times
            .iter()
            .zip(self.mass.iter())
            .map(|(t, m)| m0 - m + self.j * (t - self.times[0]))
            .collect()
    }

    pub fn snapshot(&self, t: f64) -> Option<&DensityProfile> {
        self.snapshots
            .iter()
            .find(|(s, _)| (s - t).abs() <= 1e-9 * t.abs().max(1.0))
            .map(|(_, p)| p)
    }

    /// `∫ λ dt` by the trapezoid rule over the recorded steps.
    pub fn integrated_flux(&self, t1: f64, t2: f64) -> f64 {
        let (a, b) = (self.index(t1), self.index(t2));
        (a..b)
            .map(|k| 0.5 * (self.flux[k] + self.flux[k + 1]) * (self.times[k + 1] - self.times[k]))
            .sum()
    }

    fn push(&mut self, state: &MovingHeat) {
        self.times.push(state.time);
        self.mass.push(state.mass());
        self.flux.push(state.edge_flux());
        self.edge.push(state.edge);
    }

    fn append(&mut self, other: PdeRun) {
        // the first record of `other` repeats our last one
        self.times.extend_from_slice(&other.times[1..]);
        self.mass.extend_from_slice(&other.mass[1..]);
        self.flux.extend_from_slice(&other.flux[1..]);
        self.edge.extend_from_slice(&other.edge[1..]);
        self.snapshots.extend(other.snapshots);
        self.clip_mass += other.clip_mass;
    }
}

/// `λ` at time `t` (nearest recorded step).
pub fn edge_flux(run: &PdeRun, t: f64) -> f64 {
    run.flux[run.index(t)]
}

/// Number of fully implicit steps at the start of a run.
const STARTUP_STEPS: usize = 4;

/// Nodal finite-volume state for `∂_t ρ = ½∂²ρ` on `[0, X_t]` with current `j`
/// entering at 0 and `ρ(X_t) = 0`.
///
/// Nodes sit at `r_i = i h`. The last node inside the domain carries a cut
/// cell of width `θh` to the edge. Faces within `2h` of the edge and the edge
/// face are backward Euler, faces beyond `4h` Crank–Nicolson, with a linear
/// blend in between, so the discrete solution depends continuously on `X`.
#[derive(Debug, Clone)]
pub struct MovingHeat {
    grid: Grid,
    j: f64,
    rho: Vec<f64>,
    edge: f64,
    time: f64,
    steps: usize,
    clip_mass: f64,
}

impl MovingHeat {
    pub fn new(u0: &DensityProfile, x0: f64, p: FluxParams) -> Result<Self, FbpError> {
        let grid = u0.grid();
        if !(x0 > 0.0 && x0 < grid.r_max()) {
            return Err(FbpError::EdgeOutOfDomain { t: 0.0, x: x0 });
        }
        let outside = u0.tail_mass(x0);
        if outside > 1e-9 * u0.total_mass().max(1e-300) {
            return Err(FbpError::InvalidInitial(format!(
                "mass {outside:e} lies beyond the initial edge {x0}"
            )));
        }
        let v = u0.values();
        let n = grid.n();
        let mut rho = vec![0.0; n + 1];
        rho[0] = (1.5 * v[0] - 0.5 * v[1]).max(0.0);
        for k in 1..n {
            rho[k] = 0.5 * (v[k - 1] + v[k]);
        }
        let mut state = Self {
            grid,
            j: p.j,
            rho,
            edge: x0,
            time: 0.0,
            steps: 0,
            clip_mass: 0.0,
        };
        let last = state.last_node(x0);
        state.rho[last + 1..].iter_mut().for_each(|r| *r = 0.0);
        Ok(state)
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn edge(&self) -> f64 {
        self.edge
    }

    pub fn clip_mass(&self) -> f64 {
        self.clip_mass
    }

    pub fn nodal(&self) -> &[f64] {
        &self.rho
    }

    /// Largest node index strictly inside `[0, x)`.
    fn last_node(&self, x: f64) -> usize {
        let s = x / self.grid.h();
        let k = s.ceil() as usize;
        k.saturating_sub(1).min(self.grid.n())
    }

    fn theta(&self, x: f64, last: usize) -> f64 {
        ((x - self.grid.node(last)) / self.grid.h()).clamp(1e-300, 1.0)
    }

    fn weights(&self, x: f64) -> (usize, f64, Vec<f64>) {
        let h = self.grid.h();
        let last = self.last_node(x);
        let th = self.theta(x, last);
        let mut w = vec![h; last + 1];
        if last == 0 {
            w[0] = 0.5 * th * h;
        } else {
            w[0] = 0.5 * h;
            w[last] = 0.5 * (1.0 + th) * h;
        }
        (last, th, w)
    }

    /// Trapezoid mass including the partial cell at the edge.
    pub fn mass(&self) -> f64 {
        let (_, _, w) = self.weights(self.edge);
        w.iter().zip(self.rho.iter()).map(|(a, b)| a * b).sum()
    }

    /// `λ = -½ ∂ρ/∂r (X)` from a one-sided second-order difference.
    pub fn edge_flux(&self) -> f64 {
        let h = self.grid.h();
        let last = self.last_node(self.edge);
        let d1 = self.theta(self.edge, last) * h;
        let a = self.rho[last];
        if last == 0 {
            return 0.5 * a / d1;
        }
        let d2 = d1 + h;
        let b = self.rho[last - 1];
        0.5 * (a * d2 * d2 - b * d1 * d1) / (d1 * d2 * (d2 - d1))
    }

    /// Cell averages of the piecewise-linear nodal interpolant.
    pub fn profile(&self) -> DensityProfile {
        let n = self.grid.n();
        let last = self.last_node(self.edge);
        let th = self.theta(self.edge, last);
        let mut v = vec![0.0; n];
        for (k, c) in v.iter_mut().enumerate().take(last) {
            *c = 0.5 * (self.rho[k] + self.rho[k + 1]);
        }
        if last < n {
            v[last] = 0.5 * th * self.rho[last];
        }
        DensityProfile::new(self.grid, v).expect("clipped nodal values are non-negative")
    }

    fn face_theta(&self, face_pos: f64, x: f64) -> f64 {
        if self.steps < STARTUP_STEPS {
            return 1.0;
        }
        let d = (x - face_pos) / self.grid.h();
        if d <= 2.0 {
            1.0
        } else if d >= 4.0 {
            0.5
        } else {
            1.0 - 0.25 * (d - 2.0)
        }
    }

    /// Advances by `dt` with the edge moving linearly to `x_new`.
    pub fn step(&mut self, dt: f64, x_new: f64) -> Result<(), FbpError> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(FbpError::UnstableStep(dt));
        }
        let t_new = self.time + dt;
        if !(x_new > 0.0 && x_new < self.grid.r_max()) {
            return Err(FbpError::EdgeOutOfDomain { t: t_new, x: x_new });
        }
        let h = self.grid.h();
        let (last, th, w) = self.weights(x_new);
        let m = last + 1;
        let c = 0.5 / h;
        let ce = 0.5 / (th * h);
        // tridiagonal system: lower a, diagonal b, upper d, right side rhs
        let mut a = vec![0.0; m];
        let mut b = vec![0.0; m];
        let mut d = vec![0.0; m];
        let mut rhs = vec![0.0; m];
        for i in 0..m {
            b[i] = w[i] / dt;
            rhs[i] = w[i] / dt * self.rho[i];
        }
        rhs[0] += self.j;
        for i in 0..last {
            let th_f = self.face_theta(self.grid.node(i) + 0.5 * h, x_new);
            let flux_old = c * (self.rho[i + 1] - self.rho[i]);
            b[i] += th_f * c;
            d[i] -= th_f * c;
            b[i + 1] += th_f * c;
            a[i + 1] -= th_f * c;
            rhs[i] += (1.0 - th_f) * flux_old;
            rhs[i + 1] -= (1.0 - th_f) * flux_old;
        }
        b[last] += ce;
        solve_tridiagonal(&a, &mut b, &d, &mut rhs);
        for (i, r) in rhs.into_iter().enumerate() {
            if r < 0.0 {
                if r < -1e-12 {
                    self.clip_mass -= r * w[i];
                }
                self.rho[i] = 0.0;
            } else {
                self.rho[i] = r;
            }
        }
        self.rho[m..].iter_mut().for_each(|r| *r = 0.0);
        self.edge = x_new;
        self.time = t_new;
        self.steps += 1;
        Ok(())
    }

    /// Runs over `[time, time + duration]` with `X` linear between `self.edge` and `x_end`.
    pub fn run_linear(&mut self, duration: f64, x_end: f64, dt: f64, record: bool) -> Result<PdeRun, FbpError> {
        let n = (duration / dt - 1e-9).ceil().max(1.0) as usize;
        let step = duration / n as f64;
        let (t0, x0) = (self.time, self.edge);
        let mut run = self.empty_run();
        if record {
            run.push(self);
        }
        for k in 1..=n {
            let s = k as f64 / n as f64;
            self.step(step, x0 + s * (x_end - x0))?;
            if record {
                run.push(self);
            }
        }
        // keep the clock on the nominal grid
        self.time = t0 + duration;
        if let Some(t) = run.times.last_mut() {
            *t = self.time;
        }
        Ok(run)
    }

    fn empty_run(&self) -> PdeRun {
        PdeRun {
            j: self.j,
            times: Vec::new(),
            mass: Vec::new(),
            flux: Vec::new(),
            edge: Vec::new(),
            snapshots: Vec::new(),
            clip_mass: 0.0,
        }
    }
}

/// Thomas algorithm; `b` and `rhs` are overwritten, the solution ends up in `rhs`.
fn solve_tridiagonal(a: &[f64], b: &mut [f64], d: &[f64], rhs: &mut [f64]) {
    let m = b.len();
    for i in 1..m {
        let f = a[i] / b[i - 1];
        b[i] -= f * d[i - 1];
        rhs[i] -= f * rhs[i - 1];
    }
    rhs[m - 1] /= b[m - 1];
    for i in (0..m - 1).rev() {
        rhs[i] = (rhs[i] - d[i] * rhs[i + 1]) / b[i];
    }
}

/// Solves on `[0, X_t]` for `t ∈ [0, duration of X]`. Step sizes are at most
/// `dt` and every save time and every node of `X` is hit exactly.
pub fn heat_solve_moving(
    u0: &DensityProfile,
    x: &EdgePath,
    p: FluxParams,
    dt: f64,
    save_times: &[f64],
) -> Result<PdeRun, FbpError> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(FbpError::UnstableStep(dt));
    }
    let total = x.duration();
    let mut marks: Vec<f64> = (0..x.nodes().len()).map(|k| k as f64 * x.dt()).collect();
    marks.extend(save_times.iter().copied().filter(|&s| s > 0.0 && s < total));
    marks.sort_by(f64::total_cmp);
    marks.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * total);
    let mut state = MovingHeat::new(u0, x.at(0.0), p)?;
    let mut run = state.empty_run();
    run.push(&state);
    let wants = |t: f64| save_times.iter().any(|s| (s - t).abs() <= 1e-12 * total.max(1.0));
    if wants(0.0) {
        run.snapshots.push((0.0, state.profile()));
    }
    for win in marks.windows(2) {
        let (ta, tb) = (win[0], win[1]);
        let n = ((tb - ta) / dt - 1e-9).ceil().max(1.0) as usize;
        let step = (tb - ta) / n as f64;
        for k in 1..=n {
            let t = if k == n { tb } else { ta + step * k as f64 };
            state.step(step, x.at(t))?;
            state.time = t;
            run.push(&state);
        }
        if wants(tb) {
            run.snapshots.push((tb, state.profile()));
        }
    }
    run.clip_mass = state.clip_mass;
    if run.clip_mass > 0.0 {
        log::info!("clipped mass {:e}", run.clip_mass);
    }
    Ok(run)
}

/// `Δ^X_I(u)`: mass lost at the edge during `I = [t1, t2]`.
pub fn mass_loss(u: &DensityProfile, x: &EdgePath, interval: (f64, f64), p: FluxParams, dt: f64) -> Result<f64, FbpError> {
    let (t1, t2) = interval;
    if !(0.0 <= t1 && t1 <= t2 && t2 <= x.duration() * (1.0 + 1e-12)) {
        return Err(FbpError::InvalidEdge(format!("interval [{t1}, {t2}] outside the edge path")));
    }
    let run = heat_solve_moving(u, x, p, dt, &[t1, t2])?;
    Ok(run.lost(t1, t2))
}

pub(crate) fn concat(runs: Vec<PdeRun>) -> Option<PdeRun> {
    let mut it = runs.into_iter();
    let mut first = it.next()?;
    for r in it {
        first.append(r);
    }
    Some(first)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fbp::analytic::{stationary_edge, stationary_profile};

    fn p(j: f64) -> FluxParams {
        FluxParams { j }
    }

    #[test]
    fn edge_path_interpolates() {
        let x = EdgePath::new(0.5, vec![1.0, 2.0, 1.5]).unwrap();
        assert_eq!(x.duration(), 1.0);
        assert!((x.at(0.25) - 1.5).abs() < 1e-15);
        assert!((x.at(0.75) - 1.75).abs() < 1e-15);
        assert_eq!(x.velocities(), vec![2.0, -1.0]);
        assert!(EdgePath::new(0.5, vec![1.0, 0.0]).is_err());
    }

    #[test]
    fn stationary_profile_is_kept() {
        let g = Grid::new(1.0 / 400.0, 1200).unwrap();
        let u = stationary_profile(1.0, p(1.0), g);
        let x = EdgePath::constant(stationary_edge(1.0, p(1.0)), 1.0).unwrap();
        let run = heat_solve_moving(&u, &x, p(1.0), 1e-3, &[1.0]).unwrap();
        for m in &run.mass {
            assert!((m - 1.0).abs() < 1e-6);
        }
        let drift = run.snapshot(1.0).unwrap().l1_distance(&u);
        assert!(drift < 1e-4, "{drift}");
        assert!((edge_flux(&run, 0.5) - 1.0).abs() < 1e-2);
        assert!((run.lost(0.2, 0.7) - 0.5).abs() < 1e-6);
    }

    /// `ρ(r,t) = Σ_k c_k e^{-λ_k t} cos((k+½)πr/L)` with zero flux at 0 and `ρ(L) = 0`.
    #[test]
    fn matches_spectral_series_without_current() {
        let l = 2.0;
        let g = Grid::new(1.0 / 400.0, 1000).unwrap();
        let shape = |r: f64| if r < l { (std::f64::consts::PI * r / (2.0 * l)).cos() } else { 0.0 };
        let u = DensityProfile::from_fn(g, shape);
        let x = EdgePath::constant(l, 0.5).unwrap();
        let run = heat_solve_moving(&u, &x, p(0.0), 1e-3, &[0.5]).unwrap();
        let lambda = 0.5 * (std::f64::consts::PI / (2.0 * l)).powi(2);
        let decay = (-lambda * 0.5).exp();
        let exact = DensityProfile::from_fn(g, |r| shape(r) * decay);
        let got = run.snapshot(0.5).unwrap();
        assert!(got.sup_tail_distance(&exact) < 1e-4);
        let lost = run.mass[0] - *run.mass.last().unwrap();
        let integrated = run.integrated_flux(0.0, 0.5);
        assert!((integrated - lost).abs() < 0.02 * lost);
        assert!(run.flux.iter().all(|&f| f >= 0.0));
    }

    #[test]
    fn loss_is_continuous_in_the_edge_speed() {
        let g = Grid::new(1.0 / 200.0, 800).unwrap();
        let u = stationary_profile(1.0, p(1.0), g);
        let f = |v: f64| mass_loss(&u, &EdgePath::linear(1.0, v, 0.1).unwrap(), (0.0, 0.1), p(1.0), 1e-3).unwrap();
        let mut prev = f(-9.0);
        let mut v = -9.0;
        while v < 10.0 {
            v += 0.01;
            let cur = f(v);
            assert!((cur - prev).abs() < 5e-3, "jump at v={v}: {prev} -> {cur}");
            prev = cur;
        }
    }

    #[test]
    fn rejects_edges_outside_the_grid() {
        let g = Grid::new(0.01, 100).unwrap();
        let u = stationary_profile(0.2, p(1.0), g);
        let x = EdgePath::linear(0.5, 10.0, 1.0).unwrap();
        assert!(matches!(
            heat_solve_moving(&u, &x, p(1.0), 0.01, &[]),
            Err(FbpError::EdgeOutOfDomain { .. })
        ));
        let x = EdgePath::constant(0.5, 1.0).unwrap();
        assert!(matches!(heat_solve_moving(&u, &x, p(1.0), 0.0, &[]), Err(FbpError::UnstableStep(_))));
    }
}
