//! Free evolution, the upper and lower barrier iterations and their dyadic
//! refinement to the separating element; also the interval (finite-volume)
//! variants where injection is a point mass at the origin.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::green::{flux_source, CellKernel, GreenError, KernelSpec, KernelVariant};
use crate::profile::{cut_mass, CutSide, DensityProfile, FluxParams, Grid, ProfileError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BarrierError {
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error(transparent)]
    Green(#[from] GreenError),
    #[error("no convergence at depth {depth}: gap {gap:e} above tolerance {tol:e}")]
    NoConvergence {
        depth: u32,
        gap: f64,
        tol: f64,
        levels: Vec<LevelRecord>,
    },
    #[error("invalid barrier request: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Upper,
    Lower,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BarrierConfig {
    pub delta: f64,
    pub side: Side,
    pub variant: KernelVariant,
    pub flux: FluxParams,
    /// Where the cut removes mass; only `Right` gives the barrier scheme.
    pub cut_side: CutSide,
}

impl BarrierConfig {
    pub fn new(delta: f64, side: Side, flux: FluxParams) -> Self {
        Self {
            delta,
            side,
            variant: KernelVariant::HalfLine,
            flux,
            cut_side: CutSide::Right,
        }
    }

    pub fn interval(mut self) -> Self {
        self.variant = KernelVariant::Interval;
        self
    }
}

/// One step size `δ` worth of operators on a fixed grid.
#[derive(Debug, Clone)]
pub struct Stepper {
    kernel: CellKernel,
    /// Cell averages of the injected mass (half-line only).
    source: Vec<f64>,
    delta: f64,
    flux: FluxParams,
    cut_side: CutSide,
}

impl Stepper {
    pub fn new(grid: Grid, delta: f64, variant: KernelVariant, flux: FluxParams) -> Result<Self, BarrierError> {
        let spec = match variant {
            KernelVariant::HalfLine => KernelSpec::half_line(delta),
            KernelVariant::Interval => KernelSpec::interval(delta),
        };
        let kernel = CellKernel::new(&spec, grid)?;
        let source = match variant {
            KernelVariant::HalfLine => flux_source(delta, flux, grid)?.into_values(),
            KernelVariant::Interval => Vec::new(),
        };
        Ok(Self {
            kernel,
            source,
            delta,
            flux,
            cut_side: CutSide::Right,
        })
    }

    pub fn with_cut_side(mut self, side: CutSide) -> Self {
        self.cut_side = side;
        self
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn grid(&self) -> Grid {
        self.kernel.grid()
    }

    /// `T_δ T_δ` as a single operator with step `2δ`.
    pub fn doubled(&self) -> Self {
        let kernel = self.kernel.squared();
        let source = if self.source.is_empty() {
            Vec::new()
        } else {
            let mut s = vec![0.0; self.source.len()];
            self.kernel.apply(&self.source, &mut s);
            s.iter_mut().zip(self.source.iter()).for_each(|(a, b)| *a += b);
            s
        };
        Self {
            kernel,
            source,
            delta: 2.0 * self.delta,
            flux: self.flux,
            cut_side: self.cut_side,
        }
    }

    /// `T_δ u` (half-line: Neumann kernel plus injected mass; interval: kernel only).
    pub fn free(&self, u: &DensityProfile) -> DensityProfile {
        let mut out = self.kernel.apply_profile(u).into_values();
        if !self.source.is_empty() {
            out.iter_mut().zip(self.source.iter()).for_each(|(a, b)| *a += b);
        }
        DensityProfile::new(self.grid(), out)
            .expect("sum of non-negative cell values")
            .with_tail_tolerance(u.tail_tolerance())
    }

    /// `C_δ u`, plus the point mass `jδ` at the origin on the interval.
    pub fn cut(&self, u: &DensityProfile) -> Result<DensityProfile, BarrierError> {
        let amount = self.flux.j * self.delta;
        let c = cut_mass(u, amount, self.cut_side)?;
        if self.source.is_empty() && self.kernel.variant() == KernelVariant::Interval {
            let mut v = c.into_values();
            v[0] += amount / self.grid().h();
            return Ok(DensityProfile::new(self.grid(), v)?.with_tail_tolerance(u.tail_tolerance()));
        }
        Ok(c)
    }

    pub fn step(&self, u: &DensityProfile, side: Side) -> Result<DensityProfile, BarrierError> {
        match side {
            Side::Upper => Ok(self.free(&self.cut(u)?)),
            Side::Lower => self.cut(&self.free(u)),
        }
    }

    pub fn evolve(&self, u: &DensityProfile, k: usize, side: Side) -> Result<DensityProfile, BarrierError> {
        let mut cur = u.clone();
        for _ in 0..k {
            cur = self.step(&cur, side)?;
        }
        Ok(cur)
    }
}

fn check_delta(delta: f64) -> Result<(), BarrierError> {
    if delta.is_finite() && delta > 0.0 {
        Ok(())
    } else {
        Err(GreenError::NonPositiveTime(delta).into())
    }
}

/// `T_δ u = G^neum_δ * u + ψ_δ`.
pub fn free_evolve(u: &DensityProfile, delta: f64, p: FluxParams) -> Result<DensityProfile, BarrierError> {
    check_delta(delta)?;
    Ok(Stepper::new(u.grid(), delta, KernelVariant::HalfLine, p)?.free(u))
}

/// `(T_δ C_δ)^k u` for the upper side, `(C_δ T_δ)^k u` for the lower side.
pub fn barrier_evolve(u: &DensityProfile, k: usize, cfg: &BarrierConfig) -> Result<DensityProfile, BarrierError> {
    check_delta(cfg.delta)?;
    if k == 0 {
        return Ok(u.clone());
    }
    Stepper::new(u.grid(), cfg.delta, cfg.variant, cfg.flux)?
        .with_cut_side(cfg.cut_side)
        .evolve(u, k, cfg.side)
}

/// Barrier iteration on `[0, 1]` with reflecting kernel and lumped injection.
pub fn finite_volume_barrier(u: &DensityProfile, k: usize, cfg: &BarrierConfig) -> Result<DensityProfile, BarrierError> {
    if cfg.variant != KernelVariant::Interval {
        return Err(BarrierError::Invalid("finite-volume barrier needs the interval variant".into()));
    }
    barrier_evolve(u, k, cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeparatingOptions {
    pub min_depth: u32,
    pub max_depth: u32,
    pub variant: KernelVariant,
    pub cut_side: CutSide,
    /// Generate every level by doubling the finest kernel (exact dyadic
    /// monotonicity, but the repeated cell averaging adds diffusion of order
    /// `h²/δ_finest`). Otherwise each level gets its own kernel.
    pub exact_dyadic: bool,
}

impl Default for SeparatingOptions {
    fn default() -> Self {
        Self {
            min_depth: 2,
            max_depth: 14,
            variant: KernelVariant::HalfLine,
            cut_side: CutSide::Right,
            exact_dyadic: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelRecord {
    pub level: u32,
    pub delta: f64,
    pub gap_l1: f64,
    pub gap_sup: f64,
    pub mass_upper: f64,
    pub mass_lower: f64,
    /// Largest increase of `F(·;S⁺)` and decrease of `F(·;S⁻)` against the previous level.
    pub refinement_defect: f64,
}

#[derive(Debug, Clone)]
pub struct SeparatingResult {
    pub profile: DensityProfile,
    pub upper: DensityProfile,
    pub lower: DensityProfile,
    pub n_levels: u32,
    pub gap: f64,
    pub levels: Vec<LevelRecord>,
}

/// Operators for `δ_n = t 2^{-n}`, `n ≤ max_depth`, generated from the finest
/// step by doubling so that `T_{2δ} = T_δ T_δ` holds exactly on the grid.
#[derive(Debug, Clone)]
pub struct DyadicFamily {
    t: f64,
    max_depth: u32,
    steppers: Vec<Stepper>,
}

impl DyadicFamily {
    pub fn new(grid: Grid, t: f64, max_depth: u32, variant: KernelVariant, p: FluxParams) -> Result<Self, BarrierError> {
        check_delta(t)?;
        let finest = Stepper::new(grid, t / 2f64.powi(max_depth as i32), variant, p)?;
        let mut steppers = vec![finest];
        for _ in 0..max_depth {
            let next = steppers.last().unwrap().doubled();
            steppers.push(next);
        }
        steppers.reverse();
        Ok(Self { t, max_depth, steppers })
    }

    /// Every level built from its own cell-exact kernel.
    pub fn direct(grid: Grid, t: f64, max_depth: u32, variant: KernelVariant, p: FluxParams) -> Result<Self, BarrierError> {
        check_delta(t)?;
        let steppers = (0..=max_depth)
            .map(|n| Stepper::new(grid, t / 2f64.powi(n as i32), variant, p))
            .collect::<Result<_, _>>()?;
        Ok(Self { t, max_depth, steppers })
    }

    pub fn with_cut_side(mut self, side: CutSide) -> Self {
        self.steppers = self.steppers.into_iter().map(|s| s.with_cut_side(side)).collect();
        self
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn max_depth(&self) -> u32 {
        self.max_depth
    }

    pub fn stepper(&self, level: u32) -> &Stepper {
        &self.steppers[level as usize]
    }

    /// `S^{δ_n,±}_t u`.
    pub fn barrier(&self, u: &DensityProfile, level: u32, side: Side) -> Result<DensityProfile, BarrierError> {
        self.stepper(level).evolve(u, 1usize << level, side)
    }
}

fn level_pair(family: &DyadicFamily, u: &DensityProfile, level: u32) -> Result<(DensityProfile, DensityProfile), BarrierError> {
    let (up, lo) = rayon::join(
        || family.barrier(u, level, Side::Upper),
        || family.barrier(u, level, Side::Lower),
    );
    Ok((up?, lo?))
}

/// Refines dyadically until the barriers agree within `tol` in sup-norm of tails.
pub fn separating_element(
    u: &DensityProfile,
    t: f64,
    tol: f64,
    p: FluxParams,
    opts: &SeparatingOptions,
) -> Result<SeparatingResult, BarrierError> {
    check_delta(t)?;
    let family = if opts.exact_dyadic {
        DyadicFamily::new(u.grid(), t, opts.max_depth, opts.variant, p)?
    } else {
        DyadicFamily::direct(u.grid(), t, opts.max_depth, opts.variant, p)?
    };
    let family = family.with_cut_side(opts.cut_side);
    separating_with(&family, u, tol, opts.min_depth)
}

pub fn separating_with(
    family: &DyadicFamily,
    u: &DensityProfile,
    tol: f64,
    min_depth: u32,
) -> Result<SeparatingResult, BarrierError> {
    let t = family.t();
    let mass = u.total_mass();
    let j = family.stepper(0).flux.j;
    let mut start = min_depth;
    while start < family.max_depth() && !(mass > j * t / 2f64.powi(start as i32)) {
        start += 1;
    }
    let mut levels = Vec::new();
    let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;
    let mut last = None;
    for level in start..=family.max_depth() {
        let (up, lo) = level_pair(family, u, level)?;
        let fu = up.node_tails();
        let fl = lo.node_tails();
        let gap_sup = fu
            .iter()
            .zip(fl.iter())
            .fold(0.0_f64, |acc, (a, b)| acc.max((a - b).abs()));
        let defect = prev.as_ref().map_or(0.0, |(pu, pl)| {
            let a = fu.iter().zip(pu.iter()).fold(0.0_f64, |acc, (x, y)| acc.max(x - y));
            let b = fl.iter().zip(pl.iter()).fold(0.0_f64, |acc, (x, y)| acc.max(y - x));
            a.max(b)
        });
        levels.push(LevelRecord {
            level,
            delta: family.stepper(level).delta(),
            gap_l1: up.l1_distance(&lo),
            gap_sup,
            mass_upper: up.total_mass(),
            mass_lower: lo.total_mass(),
            refinement_defect: defect,
        });
        if defect > 1e-8 * mass.max(1.0) {
            log::debug!("dyadic refinement defect {defect:e} at level {level}");
        }
        prev = Some((fu, fl));
        let done = gap_sup <= tol;
        last = Some((up, lo, gap_sup, level));
        if done {
            break;
        }
    }
    let (up, lo, gap, level) = last.ok_or_else(|| BarrierError::Invalid("empty level range".into()))?;
    if gap > tol {
        return Err(BarrierError::NoConvergence {
            depth: level,
            gap,
            tol,
            levels,
        });
    }
    let mid: Vec<f64> = up
        .values()
        .iter()
        .zip(lo.values().iter())
        .map(|(a, b)| 0.5 * (a + b))
        .collect();
    let profile = DensityProfile::new(u.grid(), mid)?.with_tail_tolerance(u.tail_tolerance());
    Ok(SeparatingResult {
        profile,
        upper: up,
        lower: lo,
        n_levels: level,
        gap,
        levels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fbp::analytic::{stationary_profile, trapezoid_profile};
    use crate::profile::order_leq_mod;

    fn p1() -> FluxParams {
        FluxParams::new(1.0).unwrap()
    }

    #[test]
    fn free_evolution_adds_jdelta() {
        let g = Grid::new(0.01, 600).unwrap();
        let u = stationary_profile(1.0, p1(), g);
        let v = free_evolve(&u, 0.05, p1()).unwrap();
        assert!((v.total_mass() - 1.05).abs() < 1e-10);
        let z = free_evolve(&DensityProfile::zeros(g), 0.05, p1()).unwrap();
        let src = flux_source(0.05, p1(), g).unwrap();
        assert!(z.l1_distance(&src) < 1e-15);
        assert!(free_evolve(&u, 0.0, p1()).is_err());
    }

    #[test]
    fn barriers_keep_mass_and_order() {
        let g = Grid::new(0.01, 600).unwrap();
        let u = stationary_profile(1.0, p1(), g);
        let delta = 1.0 / 32.0;
        let up = barrier_evolve(&u, 16, &BarrierConfig::new(delta, Side::Upper, p1())).unwrap();
        let lo = barrier_evolve(&u, 16, &BarrierConfig::new(delta, Side::Lower, p1())).unwrap();
        assert!((up.total_mass() - 1.0).abs() < 1e-10);
        assert!((lo.total_mass() - 1.0).abs() < 1e-10);
        assert!(order_leq_mod(&lo, &up, 1e-12).holds);
        assert!(lo.l1_distance(&up) <= 2.0 * delta + 1e-9);
        assert_eq!(barrier_evolve(&u, 0, &BarrierConfig::new(delta, Side::Upper, p1())).unwrap(), u);
    }

    #[test]
    fn upper_barrier_rejects_small_mass() {
        let g = Grid::new(0.01, 200).unwrap();
        let u = stationary_profile(0.01, p1(), g);
        let err = barrier_evolve(&u, 1, &BarrierConfig::new(0.1, Side::Upper, p1())).unwrap_err();
        assert!(matches!(err, BarrierError::Profile(ProfileError::MassTooSmall { .. })));
    }

    #[test]
    fn doubled_stepper_is_the_square() {
        let g = Grid::new(0.02, 300).unwrap();
        let u = stationary_profile(1.0, p1(), g);
        let s = Stepper::new(g, 0.01, KernelVariant::HalfLine, p1()).unwrap();
        let twice = s.free(&s.free(&u));
        let once = s.doubled().free(&u);
        assert!(twice.sup_tail_distance(&once) < 1e-13);
    }

    #[test]
    fn separating_element_of_stationary_profile() {
        let g = Grid::new(1.0 / 100.0, 700).unwrap();
        let u = stationary_profile(1.0, p1(), g);
        let opts = SeparatingOptions {
            max_depth: 9,
            exact_dyadic: true,
            ..Default::default()
        };
        let res = separating_element(&u, 0.5, 5e-3, p1(), &opts).unwrap();
        assert!(res.gap <= 5e-3);
        assert!((res.profile.total_mass() - 1.0).abs() < 1e-10);
        assert!(res.profile.l1_distance(&u) < 1e-2);
        for rec in &res.levels {
            assert!(rec.refinement_defect < 1e-10, "{rec:?}");
            assert!(rec.gap_l1 <= 2.0 * rec.delta + 1e-9);
        }
        let tight = separating_element(&u, 0.5, 1e-9, p1(), &SeparatingOptions { max_depth: 4, ..opts });
        assert!(matches!(tight, Err(BarrierError::NoConvergence { depth: 4, .. })));
    }

    #[test]
    fn direct_levels_avoid_the_doubling_diffusion() {
        // finest step well below h²: doubling from it smears the profile
        let g = Grid::covering(1.0 / 100.0, 6.0).unwrap();
        let u = stationary_profile(1.0, p1(), g);
        let opts = SeparatingOptions {
            max_depth: 12,
            ..Default::default()
        };
        let direct = separating_element(&u, 0.25, 1e-3, p1(), &opts).unwrap();
        let doubled = separating_element(&u, 0.25, 1e-3, p1(), &SeparatingOptions { exact_dyadic: true, ..opts }).unwrap();
        assert!(direct.profile.l1_distance(&u) < 1e-2, "{}", direct.profile.l1_distance(&u));
        assert!(doubled.profile.l1_distance(&u) > 3.0 * direct.profile.l1_distance(&u));
    }

    #[test]
    fn trapezoid_is_fixed_by_interval_barriers() {
        let g = Grid::new(1.0 / 128.0, 128).unwrap();
        let u = trapezoid_profile(2.0, p1(), g);
        let cfg = BarrierConfig::new(1.0 / 64.0, Side::Upper, p1()).interval();
        let up = finite_volume_barrier(&u, 32, &cfg).unwrap();
        let lo = finite_volume_barrier(&u, 32, &BarrierConfig { side: Side::Lower, ..cfg }).unwrap();
        assert!((up.total_mass() - 2.0).abs() < 1e-10);
        assert!((lo.total_mass() - 2.0).abs() < 1e-10);
        assert!(up.sup_tail_distance(&u) < 2.0 / 64.0 + 0.02);
        assert!(lo.sup_tail_distance(&u) < 2.0 / 64.0 + 0.02);
        assert!(finite_volume_barrier(&u, 1, &BarrierConfig::new(0.1, Side::Upper, p1())).is_err());
    }
}
