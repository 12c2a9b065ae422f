//! Order and contraction properties of the cut, free evolution and barrier
//! operators, evaluated on concrete profile pairs. Shared by the property tests
//! and the `verify` harness.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::barriers::{Side, Stepper};
use crate::green::KernelVariant;
use crate::profile::{order_leq_mod, CutSide, DensityProfile, FluxParams, Grid};
use crate::rng::SimRng;

/// One property evaluated on one pair: `excess > slack` is a failure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyOutcome {
    pub name: String,
    /// Largest amount by which the claimed inequality is exceeded (≤ 0 when it holds).
    pub excess: f64,
}

fn excess(u: &DensityProfile, v: &DensityProfile, m: f64) -> f64 {
    order_leq_mod(u, v, m).max_violation
}

/// `sup_r F(r;u) - F(r;v)`, clipped at 0: the smallest `m` with `u ≼ v` modulo `m`.
pub fn order_gap(u: &DensityProfile, v: &DensityProfile) -> f64 {
    excess(u, v, 0.0).max(0.0)
}

/// Random bump mixture supported in `[0, reach]` with total mass in `[m_lo, m_hi]`.
pub fn random_profile(rng: &mut SimRng, grid: Grid, reach: f64, m_lo: f64, m_hi: f64) -> DensityProfile {
    let bumps = rng.random_range(1..=4);
    let spec: Vec<(f64, f64, f64)> = (0..bumps)
        .map(|_| {
            let a = rng.random::<f64>() * reach * 0.8;
            let w = (0.05 + rng.random::<f64>() * 0.5).min(reach - a);
            (a, w.max(grid.h()), rng.random::<f64>() + 0.1)
        })
        .collect();
    let u = DensityProfile::from_fn(grid, |r| {
        spec.iter()
            .filter(|(a, w, _)| r >= *a && r < a + w)
            .map(|(_, _, c)| *c)
            .sum()
    });
    let target = m_lo + rng.random::<f64>() * (m_hi - m_lo);
    u.scaled(target / u.total_mass())
}

/// `v ≽ u`: `u` moved right by a random number of cells plus extra non-negative mass.
pub fn random_dominating(rng: &mut SimRng, u: &DensityProfile, max_shift: usize, extra: f64) -> DensityProfile {
    let g = u.grid();
    let s = rng.random_range(0..=max_shift);
    let mut v = vec![0.0; g.n()];
    for (i, &x) in u.values().iter().enumerate() {
        if i + s < g.n() {
            v[i + s] += x;
        }
    }
    if extra > 0.0 {
        let w = random_profile(rng, g, g.r_max() * 0.5, extra * 0.5, extra);
        v.iter_mut().zip(w.values()).for_each(|(a, b)| *a += b);
    }
    DensityProfile::new(g, v).expect("non-negative")
}

/// Operators for one `δ`, with a switchable cut direction for mutation tests.
pub struct OrderChecker {
    stepper: Stepper,
    pub steps: usize,
    pub flux: FluxParams,
}

impl OrderChecker {
    pub fn new(grid: Grid, delta: f64, steps: usize, flux: FluxParams, cut_side: CutSide) -> Self {
        let stepper = Stepper::new(grid, delta, KernelVariant::HalfLine, flux)
            .expect("valid step")
            .with_cut_side(cut_side);
        Self { stepper, steps, flux }
    }

    fn jd(&self) -> f64 {
        self.flux.j * self.stepper.delta()
    }

    fn heat(&self, u: &DensityProfile) -> DensityProfile {
        // G * u alone: T_δ u minus the injected part, computed on the raw kernel
        let zero = DensityProfile::zeros(u.grid());
        let t_u = self.stepper.free(u).into_values();
        let src = self.stepper.free(&zero).into_values();
        let vals = t_u.iter().zip(src.iter()).map(|(a, b)| (a - b).max(0.0)).collect();
        DensityProfile::new(u.grid(), vals).expect("non-negative")
    }

    /// Properties that assume `u ≼ v` (no modulus): the first order lemma pair.
    pub fn ordered(&self, u: &DensityProfile, v: &DensityProfile) -> Vec<PropertyOutcome> {
        let s = &self.stepper;
        let mut out = vec![
            outcome("heat_preserves_order", excess(&self.heat(u), &self.heat(v), 0.0)),
            outcome("free_preserves_order", excess(&s.free(u), &s.free(v), 0.0)),
        ];
        if let (Ok(cu), Ok(cv)) = (s.cut(u), s.cut(v)) {
            out.push(outcome("cut_below_input", excess(&cu, u, 0.0)));
            out.push(outcome("cut_preserves_order", excess(&cu, &cv, 0.0)));
        }
        out
    }

    /// Properties for `u ≼ v` modulo `m` (lemmas on the modulus and the barrier theorem).
    pub fn modulo(&self, u: &DensityProfile, v: &DensityProfile, m: f64) -> Vec<PropertyOutcome> {
        let s = &self.stepper;
        let jd = self.jd();
        let mut out = vec![
            outcome("free_mod_m", excess(&s.free(u), &s.free(v), m)),
            outcome("heat_mod_m", excess(&self.heat(u), &self.heat(v), m)),
        ];
        if let Ok(cv) = s.cut(v) {
            out.push(outcome("into_cut_mod_m_plus_jd", excess(u, &cv, m + jd)));
        }
        if m >= jd {
            if let Ok(cu) = s.cut(u) {
                out.push(outcome("cut_mod_m_minus_jd", excess(&cu, v, m - jd)));
            }
        }
        if let (Ok(cu), Ok(cv)) = (s.cut(u), s.cut(v)) {
            out.push(outcome("cut_mod_m", excess(&cu, &cv, m)));
        }
        for (side, name) in [(Side::Upper, "upper_barrier_mod_m"), (Side::Lower, "lower_barrier_mod_m")] {
            if let (Ok(a), Ok(b)) = (s.evolve(u, self.steps, side), s.evolve(v, self.steps, side)) {
                out.push(outcome(name, excess(&a, &b, m)));
            }
        }
        out
    }

    /// `u ≼ v mod m`, `v ≼ w mod m'` ⇒ `u ≼ w mod m + m'`.
    pub fn composition(u: &DensityProfile, v: &DensityProfile, w: &DensityProfile) -> PropertyOutcome {
        let m = order_gap(u, v);
        let m2 = order_gap(v, w);
        outcome("modulo_composes", excess(u, w, m + m2))
    }

    /// L¹ contraction of the cut and both barriers, and pointwise monotonicity.
    pub fn contraction(&self, u: &DensityProfile, v: &DensityProfile) -> Vec<PropertyOutcome> {
        let s = &self.stepper;
        let d0 = u.l1_distance(v);
        let mut out = Vec::new();
        if let (Ok(cu), Ok(cv)) = (s.cut(u), s.cut(v)) {
            out.push(outcome("cut_l1_contraction", cu.l1_distance(&cv) - d0));
        }
        for (side, name) in [(Side::Upper, "upper_l1_contraction"), (Side::Lower, "lower_l1_contraction")] {
            if let (Ok(a), Ok(b)) = (s.evolve(u, self.steps, side), s.evolve(v, self.steps, side)) {
                out.push(outcome(name, a.l1_distance(&b) - d0));
            }
        }
        // u ∧ v ≤ u pointwise
        let lo: Vec<f64> = u.values().iter().zip(v.values()).map(|(a, b)| a.min(*b)).collect();
        let lo = DensityProfile::new(u.grid(), lo).expect("non-negative");
        if let (Ok(cl), Ok(cu)) = (s.cut(&lo), s.cut(u)) {
            out.push(outcome("cut_pointwise_monotone", pointwise_excess(&cl, &cu)));
        }
        if let (Ok(a), Ok(b)) = (s.evolve(&lo, self.steps, Side::Upper), s.evolve(u, self.steps, Side::Upper)) {
            out.push(outcome("upper_pointwise_monotone", pointwise_excess(&a, &b)));
        }
        out
    }
}

/// `max_i (a_i - b_i)·h`, the cell mass by which `a ≤ b` fails.
fn pointwise_excess(a: &DensityProfile, b: &DensityProfile) -> f64 {
    let h = a.grid().h();
    a.values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (x - y) * h)
        .fold(f64::NEG_INFINITY, f64::max)
}

fn outcome(name: &str, excess: f64) -> PropertyOutcome {
    PropertyOutcome {
        name: name.to_string(),
        excess,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteSummary {
    pub name: String,
    pub checked: usize,
    pub failures: usize,
    pub worst_excess: f64,
}

/// Aggregates outcomes by property name, in first-seen order.
pub fn summarize(outcomes: &[PropertyOutcome], slack: f64) -> Vec<SuiteSummary> {
    let mut out: Vec<SuiteSummary> = Vec::new();
    for o in outcomes {
        let idx = match out.iter().position(|s| s.name == o.name) {
            Some(i) => i,
            None => {
                out.push(SuiteSummary {
                    name: o.name.clone(),
                    checked: 0,
                    failures: 0,
                    worst_excess: f64::NEG_INFINITY,
                });
                out.len() - 1
            }
        };
        let s = &mut out[idx];
        s.checked += 1;
        if o.excess > slack {
            s.failures += 1;
        }
        s.worst_excess = s.worst_excess.max(o.excess);
    }
    out
}

/// The full order suite on `pairs` random pairs drawn from `rng`.
pub fn order_suite(rng: &mut SimRng, pairs: usize, cut_side: CutSide) -> Vec<PropertyOutcome> {
    let grid = Grid::new(0.02, 300).expect("grid");
    let p = FluxParams::new(1.0).expect("flux");
    let checkers: Vec<OrderChecker> = [1.0 / 64.0, 1.0 / 32.0, 1.0 / 16.0]
        .iter()
        .map(|&d| OrderChecker::new(grid, d, 3, p, cut_side))
        .collect();
    let mut out = Vec::new();
    for k in 0..pairs {
        let c = &checkers[k % checkers.len()];
        let u = random_profile(rng, grid, 2.0, 0.3, 2.0);
        let extra = if rng.random::<bool>() { 0.3 } else { 0.0 };
        let v = random_dominating(rng, &u, 10, extra);
        out.extend(c.ordered(&u, &v));
        let a = random_profile(rng, grid, 2.0, 0.3, 2.0);
        let b = random_profile(rng, grid, 2.0, 0.3, 2.0);
        let m = order_gap(&a, &b);
        out.extend(c.modulo(&a, &b, m));
        let w = random_profile(rng, grid, 2.0, 0.3, 2.0);
        out.push(OrderChecker::composition(&a, &b, &w));
        out.extend(c.contraction(&a, &b));
    }
    out
}
