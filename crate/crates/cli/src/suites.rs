//! Verification suites shared by `fbplab verify` and the acceptance tests.
//!
//! Every suite is a pure function of the scale, the master seed and the cut
//! direction, so reports are reproducible byte for byte.

use std::f64::consts::PI;

use serde::Serialize;
use serde_json::{json, Value};

use fbplab_core::barriers::{separating_element, DyadicFamily, SeparatingOptions, Side, Stepper};
use fbplab_core::checks::{order_suite, summarize};
use fbplab_core::fbp::analytic::{trapezoid_value, BdWave, DiffuseStationary};
use fbplab_core::fbp::{
    bd_wave, diffuse_stationary, mass_loss, mc_exit, recommended_r_max, relaxed_solve, squeeze_check,
    stationary_profile, EdgePath, RelaxedOptions,
};
use fbplab_core::green::KernelVariant;
use fbplab_core::lattice::{discretize, simulate_lattice, total_mass_series, LatticeState};
use fbplab_core::particles::{hydro_check, run_replicas, simulate_barriers, simulate_basic};
use fbplab_core::profile::CutSide;
use fbplab_core::rng::{derive_seed, stream};
use fbplab_core::stats::{folded_normal_moments, ks_p_value, ks_statistic, mean, quantile, variance};
use fbplab_core::variants::{bd_simulate, diffuse_simulate, dr_mean_field, dr_simulate, InjectionLaw};
use fbplab_core::{fbp::analytic::trapezoid_tail, DensityProfile, FluxParams, Grid};

/// Desk runs in a couple of minutes; acceptance uses the published parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Desk,
    Acceptance,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub suite: String,
    pub name: String,
    pub pass: bool,
    /// Headline number compared against `threshold`.
    pub metric: f64,
    pub threshold: f64,
    pub detail: Value,
}

impl Check {
    fn new(suite: &str, name: &str, metric: f64, threshold: f64, detail: Value) -> Self {
        Self {
            suite: suite.into(),
            name: name.into(),
            pass: metric <= threshold,
            metric,
            threshold,
            detail,
        }
    }

    fn error(suite: &str, name: &str, err: impl std::fmt::Display) -> Self {
        Self {
            suite: suite.into(),
            name: name.into(),
            pass: false,
            metric: f64::NAN,
            threshold: f64::NAN,
            detail: json!({ "error": err.to_string() }),
        }
    }
}

pub const SUITES: [&str; 6] = ["order", "barriers", "fbp", "particles", "lattice", "variants"];

/// Runs one named suite, or all of them for `"all"`.
pub fn run_suite(name: &str, scale: Scale, seed: u64, cut: CutSide) -> Option<Vec<Check>> {
    let sub = |k: u64| derive_seed(seed, &[k]);
    let checks = match name {
        "order" => vec![order_properties(sub(1), cut)],
        "barriers" => {
            let mut v = vec![stationary_fixed_point(cut)];
            v.extend(gap_law(cut));
            v.push(dyadic_monotonicity(cut));
            v
        }
        "fbp" => {
            let mut v = relaxed_solver(scale);
            v.push(mass_loss_oracle(scale, sub(3)));
            v
        }
        "particles" => {
            let mut v = particle_hydrodynamics(scale, sub(4));
            v.push(particle_barrier_order(scale, sub(5)));
            v
        }
        "lattice" => mass_law(scale, sub(6)),
        "variants" => {
            let mut v = variant_analytics();
            v.extend(variant_simulations(scale, sub(7)));
            v
        }
        "all" => {
            let mut v = Vec::new();
            for s in SUITES {
                v.extend(run_suite(s, scale, seed, cut)?);
            }
            v
        }
        _ => return None,
    };
    Some(checks)
}

fn p1() -> FluxParams {
    FluxParams::new(1.0).expect("j = 1")
}

fn uniform_unit(g: Grid) -> DensityProfile {
    DensityProfile::from_tail_fn(g, |r| (1.0 - r).clamp(0.0, 1.0))
}

// The barrier checks take seconds, so both scales use the full resolution.
fn barrier_grid() -> Grid {
    let h = 1.0 / 400.0;
    // room for the free evolution over the coarsest step t/4 with t = 1
    Grid::covering(h, 6.0).expect("grid")
}

fn test_profiles(g: Grid) -> [(&'static str, DensityProfile); 2] {
    [("stationary", stationary_profile(1.0, p1(), g)), ("uniform", uniform_unit(g))]
}

pub fn order_properties(seed: u64, cut: CutSide) -> Check {
    let mut rng = stream(seed, &[]);
    let outcomes = order_suite(&mut rng, 200, cut);
    let summary = summarize(&outcomes, 1e-8);
    let failures: usize = summary.iter().map(|s| s.failures).sum();
    Check::new(
        "order",
        "order_lemmas",
        failures as f64,
        0.0,
        json!({ "pairs": 200, "slack": 1e-8, "properties": summary }),
    )
}

/// `‖S_t u - u‖₁` for the stationary profile of mass 1.
pub fn stationary_fixed_point(cut: CutSide) -> Check {
    let g = barrier_grid();
    let u = stationary_profile(1.0, p1(), g);
    let opts = SeparatingOptions {
        max_depth: 12,
        cut_side: cut,
        ..Default::default()
    };
    let mut worst: f64 = 0.0;
    let mut rows = Vec::new();
    for t in [0.25, 1.0] {
        match separating_element(&u, t, 1e-3, p1(), &opts) {
            Ok(res) => {
                let d = res.profile.l1_distance(&u);
                worst = worst.max(d);
                rows.push(json!({ "t": t, "l1": d, "levels": res.n_levels, "gap_sup": res.gap }));
            }
            Err(e) => return Check::error("barriers", "stationary_fixed_point", e),
        }
    }
    Check::new("barriers", "stationary_fixed_point", worst, 5e-3, json!({ "h": g.h(), "runs": rows }))
}

/// `|S⁺ - S⁻|₁ ≤ 2jδ + 10kh` and mass conservation at every step of every δ.
pub fn gap_law(cut: CutSide) -> [Check; 2] {
    let g = barrier_grid();
    let t = 1.0;
    let finest = 8;
    let mut worst_ratio: f64 = 0.0;
    let mut worst_mass: f64 = 0.0;
    let mut rows = Vec::new();
    for (label, u) in test_profiles(g) {
        let m0 = u.total_mass();
        for n in 2..=finest {
            let delta = t / f64::from(1u32 << n);
            let s = match Stepper::new(g, delta, KernelVariant::HalfLine, p1()) {
                Ok(s) => s.with_cut_side(cut),
                Err(e) => {
                    let e = e.to_string();
                    return [Check::error("barriers", "gap_law", &e), Check::error("barriers", "barrier_mass", e)];
                }
            };
            let (mut up, mut lo) = (u.clone(), u.clone());
            let mut level_ratio: f64 = 0.0;
            for k in 1..=(1usize << n) {
                let next = s.step(&up, Side::Upper).and_then(|a| Ok((a, s.step(&lo, Side::Lower)?)));
                match next {
                    Ok((a, b)) => {
                        up = a;
                        lo = b;
                    }
                    Err(e) => {
                        let e = e.to_string();
                        return [Check::error("barriers", "gap_law", &e), Check::error("barriers", "barrier_mass", e)];
                    }
                }
                let bound = 2.0 * p1().j * delta + 10.0 * k as f64 * g.h();
                level_ratio = level_ratio.max(up.l1_distance(&lo) / bound);
                worst_mass = worst_mass.max((up.total_mass() - m0).abs()).max((lo.total_mass() - m0).abs());
            }
            worst_ratio = worst_ratio.max(level_ratio);
            rows.push(json!({ "profile": label, "delta": delta, "worst_gap_over_bound": level_ratio }));
        }
    }
    [
        Check::new("barriers", "gap_law", worst_ratio, 1.0, json!({ "h": g.h(), "levels": rows })),
        Check::new("barriers", "barrier_mass", worst_mass, 1e-9, json!({ "h": g.h() })),
    ]
}

/// Upper barriers decrease and lower barriers increase along `δ = t 2^{-n}`.
pub fn dyadic_monotonicity(cut: CutSide) -> Check {
    let g = barrier_grid();
    let depth = 8;
    let mut worst: f64 = 0.0;
    let mut rows = Vec::new();
    for t in [0.25, 1.0] {
        let fam = match DyadicFamily::new(g, t, depth, KernelVariant::HalfLine, p1()) {
            Ok(f) => f.with_cut_side(cut),
            Err(e) => return Check::error("barriers", "dyadic_monotonicity", e),
        };
        for (label, u) in test_profiles(g) {
            let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;
            let mut defect: f64 = 0.0;
            for level in 2..=depth {
                let pair = fam
                    .barrier(&u, level, Side::Upper)
                    .and_then(|a| Ok((a, fam.barrier(&u, level, Side::Lower)?)));
                let (up, lo) = match pair {
                    Ok(p) => p,
                    Err(e) => return Check::error("barriers", "dyadic_monotonicity", e),
                };
                let (fu, fl) = (up.node_tails(), lo.node_tails());
                if let Some((pu, pl)) = &prev {
                    for k in 0..fu.len() {
                        defect = defect.max(fu[k] - pu[k]).max(pl[k] - fl[k]);
                    }
                }
                prev = Some((fu, fl));
            }
            worst = worst.max(defect);
            rows.push(json!({ "t": t, "profile": label, "defect": defect }));
        }
    }
    Check::new("barriers", "dyadic_monotonicity", worst, 1e-8, json!({ "depth": depth, "runs": rows }))
}

/// Relaxed solution from `1.2 ×` the stationary profile: mass excursions,
/// restoration at window ends and the barrier squeeze at the final time.
pub fn relaxed_solver(scale: Scale) -> Vec<Check> {
    let (h, t_end, eps, dt) = match scale {
        Scale::Desk => (1.0 / 100.0, 0.25, 0.05, 5e-4),
        Scale::Acceptance => (1.0 / 200.0, 1.0, 0.02, 1e-4),
    };
    let p = p1();
    let g = Grid::covering(h, recommended_r_max(1.0, t_end)).expect("grid");
    let u0 = stationary_profile(1.0, p, g).scaled(1.2);
    let opts = RelaxedOptions { dt, ..Default::default() };
    let sol = match relaxed_solve(&u0, t_end, eps, p, &opts) {
        Ok(s) => s,
        Err(e) => return vec![Check::error("fbp", "relaxed_mass", e)],
    };
    let m0 = sol.run.mass[0];
    let excursion = sol.run.mass.iter().fold(0.0f64, |a, m| a.max((m - m0).abs()));
    let windows = sol.edge.nodes().len() - 1;
    let restore = (1..=windows)
        .map(|k| (sol.run.mass_at(k as f64 * sol.window) - m0).abs())
        .fold(0.0f64, f64::max);
    let delta = t_end / 64.0;
    let sq = squeeze_check(&sol, &u0, t_end, delta, p, 10.0);
    let squeeze_metric = sq.lower_violation.max(sq.upper_violation);
    vec![
        Check::new(
            "fbp",
            "relaxed_mass_excursion",
            excursion,
            eps + 1e-4,
            json!({ "epsilon": eps, "T": t_end, "h": h, "window": sol.window, "windows": windows }),
        ),
        Check::new("fbp", "relaxed_mass_restored", restore, 1e-6, json!({ "windows": windows })),
        Check {
            pass: sq.pass,
            ..Check::new(
                "fbp",
                "relaxed_squeeze",
                squeeze_metric,
                sq.modulus,
                json!({ "delta": delta, "lower_violation": sq.lower_violation, "upper_violation": sq.upper_violation }),
            )
        },
    ]
}

/// PDE mass loss against the Monte-Carlo exit estimate on five edge paths.
pub fn mass_loss_oracle(scale: Scale, seed: u64) -> Check {
    let p = p1();
    let (h, paths, dt) = match scale {
        Scale::Desk => (1.0 / 100.0, 4_000, 5e-4),
        Scale::Acceptance => (1.0 / 200.0, 40_000, 1e-4),
    };
    let g = Grid::covering(h, 12.0).expect("grid");
    let u = stationary_profile(1.0, p, g);
    // (label, x0, velocity, duration, interval)
    let configs = [
        ("constant", 1.0, 0.0, 0.5, (0.0, 0.5)),
        ("advancing", 1.0, 0.5, 0.5, (0.1, 0.5)),
        ("receding", 1.0, -0.5, 0.5, (0.0, 0.5)),
        ("collapsing", 1.0, -1.9, 0.5, (0.0, 0.5)),
        ("fast", 1.0, 10.0, 0.5, (0.0, 0.5)),
    ];
    let mut worst = f64::NEG_INFINITY;
    let mut rows = Vec::new();
    for (k, (label, x0, v, dur, interval)) in configs.into_iter().enumerate() {
        let edge = match EdgePath::linear(x0, v, dur) {
            Ok(e) => e,
            Err(e) => return Check::error("fbp", "mass_loss_oracle", e),
        };
        let pde = match mass_loss(&u, &edge, interval, p, dt) {
            Ok(x) => x,
            Err(e) => return Check::error("fbp", "mass_loss_oracle", e),
        };
        let mc = mc_exit(&u, &edge, interval, p, paths, derive_seed(seed, &[k as u64]), dt);
        let excess = (pde - mc.estimate).abs() - (3.0 * mc.stderr + 0.01);
        worst = worst.max(excess);
        rows.push(json!({
            "edge": label, "velocity": v, "interval": [interval.0, interval.1],
            "pde": pde, "mc": mc.estimate, "stderr": mc.stderr,
        }));
    }
    Check::new("fbp", "mass_loss_oracle", worst, 0.0, json!({ "paths": paths, "configs": rows }))
}

fn reference_profile(t: f64) -> Result<DensityProfile, String> {
    let g = Grid::covering(1.0 / 400.0, 6.0).map_err(|e| e.to_string())?;
    let u = stationary_profile(1.0, p1(), g);
    separating_element(&u, t, 1e-3, p1(), &SeparatingOptions::default())
        .map(|r| r.profile)
        .map_err(|e| e.to_string())
}

/// Sup tail distance of the empirical measure to `S_t ρ0` and its decay in `N`.
pub fn particle_hydrodynamics(scale: Scale, seed: u64) -> Vec<Check> {
    let t = 0.5;
    let (n_main, replicas, ladder, tol): (usize, usize, [(usize, usize); 3], f64) = match scale {
        Scale::Desk => (2_000, 12, [(500, 12), (2_000, 12), (8_000, 4)], 0.03 * (1e4f64 / 2e3).sqrt()),
        Scale::Acceptance => (10_000, 50, [(2_500, 50), (10_000, 50), (40_000, 10)], 0.03),
    };
    let reference = match reference_profile(t) {
        Ok(r) => r,
        Err(e) => return vec![Check::error("particles", "hydrodynamics", e)],
    };
    let rho0 = stationary_profile(1.0, p1(), reference.grid());
    let distances = |n: usize, reps: usize, k: u64| -> Result<Vec<f64>, String> {
        let states = run_replicas(reps, derive_seed(seed, &[k]), |_, s| {
            simulate_basic(n, &rho0, p1(), t, &[t], s).map(|tr| tr.snapshots.into_iter().last().expect("snapshot"))
        });
        let states: Result<Vec<_>, _> = states.into_iter().collect();
        let states = states.map_err(|e| e.to_string())?;
        Ok(hydro_check(&states, &reference, tol, 0.95).distances)
    };
    let mut medians = Vec::new();
    let mut main = None;
    for (k, &(n, reps)) in ladder.iter().enumerate() {
        let d = match distances(n, reps, k as u64) {
            Ok(d) => d,
            Err(e) => return vec![Check::error("particles", "hydrodynamics", e)],
        };
        medians.push(json!({ "n": n, "replicas": reps, "median": quantile(&d, 0.5) }));
        if n == n_main {
            main = Some(d);
        }
    }
    let d = main.expect("main size is on the ladder");
    let within = d.iter().filter(|&&x| x <= tol).count() as f64 / d.len() as f64;
    let meds: Vec<f64> = medians.iter().map(|m| m["median"].as_f64().unwrap_or(f64::NAN)).collect();
    let increases = meds.windows(2).filter(|w| !(w[1] < w[0])).count();
    vec![
        Check {
            pass: within >= 0.95,
            ..Check::new(
                "particles",
                "hydrodynamics",
                1.0 - within,
                0.05,
                json!({ "n": n_main, "replicas": replicas, "t": t, "tol": tol, "median": quantile(&d, 0.5), "q95": quantile(&d, 0.95) }),
            )
        },
        Check::new("particles", "hydrodynamics_trend", increases as f64, 0.0, json!({ "medians": medians })),
    ]
}

/// Lower, main and upper particle systems stay in counting order at every window end.
pub fn particle_barrier_order(scale: Scale, seed: u64) -> Check {
    let (n, runs) = match scale {
        Scale::Desk => (300, 20),
        Scale::Acceptance => (1_000, 100),
    };
    let (delta, windows, substeps) = (0.05, 8, 32);
    let g = Grid::covering(1.0 / 200.0, 2.0).expect("grid");
    let rho0 = stationary_profile(1.0, p1(), g);
    let results = run_replicas(runs, seed, |_, s| simulate_barriers(n, &rho0, p1(), delta, windows, substeps, s));
    let mut bad = 0usize;
    let mut degenerate = 0usize;
    for r in &results {
        match r {
            Ok(tr) => {
                let ok = tr.flags.iter().all(|f| f.lower_ok && f.upper_ok.unwrap_or(true));
                degenerate += tr.flags.iter().filter(|f| f.degenerate).count();
                if !ok {
                    bad += 1;
                }
            }
            Err(e) => return Check::error("particles", "barrier_order", e),
        }
    }
    Check::new(
        "particles",
        "barrier_order",
        bad as f64,
        0.0,
        json!({ "n": n, "runs": runs, "delta": delta, "windows": windows, "substeps": substeps, "degenerate_windows": degenerate }),
    )
}

/// Embedded jump chain and holding times of `|ξ_t|`, and its variance on the `N³` scale.
pub fn mass_law(scale: Scale, seed: u64) -> Vec<Check> {
    let p = p1();
    let (n, var_n, var_reps) = match scale {
        Scale::Desk => (32usize, 32usize, 1_000usize),
        Scale::Acceptance => (64, 64, 1_200),
    };
    let nf = n as f64;
    let rate = 2.0 * p.j / nf;
    let events_wanted = 12_000.0;
    let xi0 = match LatticeState::new(discretize(n, |r| trapezoid_tail(1.0, p, r))) {
        Ok(x) => x,
        Err(e) => return vec![Check::error("lattice", "mass_jumps", e)],
    };
    let traj = match simulate_lattice(&xi0, p, events_wanted / rate, &[], derive_seed(seed, &[0])) {
        Ok(t) => t,
        Err(e) => return vec![Check::error("lattice", "mass_jumps", e)],
    };
    let series = total_mass_series(&traj);
    let (mut ups, mut moves) = (0u64, 0u64);
    let mut gaps = Vec::new();
    for w in series.windows(2) {
        let ((t0, m0), (t1, m1)) = (w[0], w[1]);
        if m0 > 0 {
            moves += 1;
            if m1 > m0 {
                ups += 1;
            }
            gaps.push(t1 - t0);
        }
    }
    let freq = ups as f64 / moves as f64;
    let sigma = 0.5 / (moves as f64).sqrt();
    let d = ks_statistic(&gaps, |x| 1.0 - (-rate * x).exp());
    let p_value = ks_p_value(d, gaps.len());

    // variance of |ξ|/N at macro time t on the N³ scale
    let t = 0.05;
    let vn = var_n as f64;
    let xi_v = match LatticeState::new(discretize(var_n, |r| trapezoid_tail(1.0, p, r))) {
        Ok(x) => x,
        Err(e) => return vec![Check::error("lattice", "mass_variance", e)],
    };
    let m_start = xi_v.total() as f64 / vn;
    let micro = vn.powi(3) * t;
    let finals = run_replicas(var_reps, derive_seed(seed, &[1]), |_, s| {
        simulate_lattice(&xi_v, p, micro, &[micro], s).map(|tr| tr.snapshots.last().map_or(0, |x| x.total()) as f64 / vn)
    });
    let finals: Result<Vec<f64>, _> = finals.into_iter().collect();
    let finals = match finals {
        Ok(f) => f,
        Err(e) => return vec![Check::error("lattice", "mass_variance", e)],
    };
    let (m1, m2) = folded_normal_moments(m_start, (2.0 * p.j * t).sqrt());
    let oracle = m2 - m1 * m1;
    let var = variance(&finals);
    let rel = (var / oracle - 1.0).abs();
    vec![
        Check::new(
            "lattice",
            "mass_jumps",
            (freq - 0.5).abs() / sigma,
            3.0,
            json!({ "n": n, "moves": moves, "up_frequency": freq }),
        ),
        Check {
            pass: p_value >= 0.01 && gaps.len() >= 10_000,
            ..Check::new(
                "lattice",
                "mass_holding_times",
                -p_value,
                -0.01,
                json!({ "n": n, "gaps": gaps.len(), "ks": d, "p_value": p_value, "rate": rate }),
            )
        },
        Check::new(
            "lattice",
            "mass_variance",
            rel,
            0.15,
            json!({ "n": var_n, "replicas": var_reps, "t": t, "variance": var, "oracle": oracle, "mean": mean(&finals) }),
        ),
    ]
}

fn second_difference(f: impl Fn(f64) -> f64, r: f64, e: f64) -> (f64, f64) {
    let (a, b, c) = (f(r - e), f(r), f(r + e));
    ((c - 2.0 * b + a) / (e * e), (c - a) / (2.0 * e))
}

/// Closed-form profiles solve their equations.
pub fn variant_analytics() -> Vec<Check> {
    // ½ρ'' + Vρ' + ρ = 0 for the wave, V² = 2
    let w = BdWave::new(1.0);
    let mut bd_res: f64 = (w.speed * w.speed - 2.0).abs();
    let e = 5e-4;
    for i in 1..=400 {
        let r = i as f64 * 0.025;
        let (d2, d1) = second_difference(|x| w.value(x), r, e);
        bd_res = bd_res.max((0.5 * d2 + w.speed * d1 + w.value(r)).abs());
    }
    bd_res = bd_res.max(w.value(0.0).abs()).max((w.tail(0.0) - 1.0).abs());

    // ½ρ'' + f = 0 inside the support, ρ'(0) = 0, ρ(X) = 0, mass M
    let f = InjectionLaw::cells(0.0, 0.1, vec![1.0, 3.0, 2.0, 0.5, 1.0]).expect("law");
    let pieces = f.pieces();
    let density = |r: f64| {
        pieces
            .iter()
            .find(|(a, w, _)| r >= *a && r < a + w)
            .map_or(0.0, |p| p.2)
    };
    let m = 1.3;
    let ds = DiffuseStationary::new(m, &f);
    let e = 1e-3;
    let mut diff_res: f64 = 0.0;
    for i in 0..400 {
        let r = (i as f64 + 0.5) * ds.edge / 400.0;
        let near_kink = pieces.iter().any(|(a, w, _)| (r - a).abs() < 2.0 * e || (r - a - w).abs() < 2.0 * e);
        if near_kink || r < 2.0 * e || r > ds.edge - 2.0 * e {
            continue;
        }
        let (d2, _) = second_difference(|x| ds.value(x), r, e);
        diff_res = diff_res.max((0.5 * d2 + density(r)).abs());
    }
    // one-sided, exact for the quadratic first piece
    let slope0 = (-3.0 * ds.value(0.0) + 4.0 * ds.value(e) - ds.value(2.0 * e)) / (2.0 * e);
    diff_res = diff_res
        .max(slope0.abs())
        .max(ds.value(ds.edge - 1e-12).abs())
        .max((ds.tail(0.0) - m).abs());

    // trapezia: ρ(0) = M + j and ρ(1) = M - j for M > j; triangle otherwise
    let mut trap: f64 = 0.0;
    for (m, j) in [(1.5, 1.0), (3.0, 0.5), (0.5, 1.0)] {
        let p = FluxParams::new(j).expect("flux");
        let (a, b) = if m > j { (m + j, m - j) } else { (2.0 * (m * j).sqrt(), 0.0) };
        trap = trap
            .max((trapezoid_value(m, p, 0.0) - a).abs())
            .max((trapezoid_value(m, p, 1.0) - b).abs())
            .max((trapezoid_tail(m, p, 0.0) - m).abs());
    }
    vec![
        Check::new("variants", "bd_wave_residual", bd_res, 1e-6, json!({ "mass": 1.0 })),
        Check::new("variants", "diffuse_stationary_residual", diff_res, 1e-6, json!({ "mass": m, "edge": ds.edge })),
        Check::new("variants", "trapezoid_endpoints", trap, 1e-12, json!({})),
    ]
}

/// Finite-N runs of the three variants against their deterministic descriptions.
pub fn variant_simulations(scale: Scale, seed: u64) -> Vec<Check> {
    let n = match scale {
        Scale::Desk => 2_000,
        Scale::Acceptance => 5_000,
    };
    let nf = n as f64;
    let g = Grid::covering(1.0 / 200.0, 6.0).expect("grid");
    let mut out = Vec::new();

    // diffuse injection started at its stationary state stays there
    let f = InjectionLaw::uniform(0.0, 0.4, 8).expect("law");
    let rho = diffuse_stationary(1.0, &f, g);
    match diffuse_simulate(n, &rho, &f, 0.5, &[0.5], derive_seed(seed, &[0])) {
        Ok(tr) => {
            let d = tr.snapshots[0].sup_tail_distance(&rho);
            out.push(Check::new("variants", "diffuse_stays_stationary", d, 3.0 / nf.sqrt(), json!({ "n": n })));
        }
        Err(e) => out.push(Check::error("variants", "diffuse_stays_stationary", e)),
    }

    // nonlocal branching against its mean-field oracle
    let kappa = InjectionLaw::uniform(-0.5, 1.0, 15).expect("law");
    let rho = DensityProfile::from_tail_fn(g, |r| (1.0 - (r - 1.0).max(0.0)).clamp(0.0, 1.0));
    let t = 0.5;
    let res = dr_mean_field(&rho, &kappa, t, 1e-3)
        .map_err(|e| e.to_string())
        .and_then(|mf| {
            dr_simulate(n, &rho, &kappa, t, &[t], derive_seed(seed, &[1]))
                .map(|tr| tr.snapshots[0].sup_tail_distance(&mf.profile))
                .map_err(|e| e.to_string())
        });
    match res {
        Ok(d) => out.push(Check::new("variants", "dr_mean_field", d, 3.0 / nf.sqrt() + 0.01, json!({ "n": n, "t": t }))),
        Err(e) => out.push(Check::error("variants", "dr_mean_field", e)),
    }

    // selected branching Brownian motion: speed of the median against √2 - π²/(√2 ln² N)
    let wave = bd_wave(1.0, g);
    let t_end = 4.0;
    let saves = [t_end / 2.0, t_end];
    match bd_simulate(n, &wave, t_end, &saves, derive_seed(seed, &[2])) {
        Ok(tr) => {
            let (a, b) = (tr.edges[0], tr.edges[1]);
            let speed = (b.median - a.median) / (b.time - a.time);
            let predicted = 2f64.sqrt() - PI * PI / (2f64.sqrt() * nf.ln().powi(2));
            out.push(Check::new(
                "variants",
                "bd_front_speed",
                (speed - predicted).abs(),
                0.15,
                json!({ "n": n, "speed": speed, "predicted": predicted }),
            ));
        }
        Err(e) => out.push(Check::error("variants", "bd_front_speed", e)),
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn analytic_checks_pass() {
        for c in variant_analytics() {
            assert!(c.pass, "{c:?}");
        }
    }

    #[test]
    fn unknown_suite_is_none() {
        assert!(run_suite("nope", Scale::Desk, 1, CutSide::Right).is_none());
    }
}
