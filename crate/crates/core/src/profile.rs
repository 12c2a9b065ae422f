//! Cell-averaged density profiles on the half-line, tail masses, the
//! stochastic order modulo `m`, the cut operator and transport maps.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::io::fmt_f64;

/// Default threshold above which mass pushed beyond `r_max` is reported.
pub const DEFAULT_TAIL_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProfileError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("value {value} at cell {index} is negative or not finite")]
    InvalidValue { index: usize, value: f64 },
    #[error("mass {mass} does not exceed the cut amount {amount}")]
    MassTooSmall { mass: f64, amount: f64 },
    #[error("transport map needs u ≼ v: {0}")]
    NotOrdered(String),
    #[error("masses differ: {0} vs {1}")]
    MassMismatch(f64, f64),
    #[error("invalid flux parameter j = {0}")]
    InvalidFlux(f64),
    #[error("i/o failure: {0}")]
    Io(String),
    #[error("malformed profile file: {0}")]
    Parse(String),
}

/// Boundary current: mass `j` per unit time enters at the origin and leaves at the edge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluxParams {
    pub j: f64,
}

impl FluxParams {
    pub fn new(j: f64) -> Result<Self, ProfileError> {
        if j.is_finite() && j > 0.0 {
            Ok(Self { j })
        } else {
            Err(ProfileError::InvalidFlux(j))
        }
    }
}

/// Uniform grid of `n` cells `[i h, (i + 1) h)` covering `[0, n h]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    h: f64,
    n: usize,
}

impl Grid {
    pub fn new(h: f64, n: usize) -> Result<Self, ProfileError> {
        if !(h.is_finite() && h > 0.0) {
            return Err(ProfileError::InvalidGrid(format!("spacing {h} must be positive")));
        }
        if n < 2 {
            return Err(ProfileError::InvalidGrid(format!("need at least 2 cells, got {n}")));
        }
        Ok(Self { h, n })
    }

    /// Grid with spacing `h` and at least enough cells to reach `r_max`.
    pub fn covering(h: f64, r_max: f64) -> Result<Self, ProfileError> {
        if !(r_max.is_finite() && r_max > 0.0) {
            return Err(ProfileError::InvalidGrid(format!("r_max {r_max} must be positive")));
        }
        let n = (r_max / h - 1e-9).ceil().max(2.0) as usize;
        Self::new(h, n)
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn r_max(&self) -> f64 {
        self.h * self.n as f64
    }

    pub fn node(&self, k: usize) -> f64 {
        self.h * k as f64
    }

    pub fn center(&self, i: usize) -> f64 {
        self.h * (i as f64 + 0.5)
    }

    pub fn same_as(&self, other: &Grid) -> bool {
        self.n == other.n && (self.h - other.h).abs() <= 1e-14 * self.h
    }
}

/// Piecewise-constant density: `values[i]` is the average of the density over cell `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityProfile {
    grid: Grid,
    values: Vec<f64>,
    tail_tolerance: f64,
}

impl DensityProfile {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self, ProfileError> {
        if values.len() != grid.n {
            return Err(ProfileError::InvalidGrid(format!(
                "{} values for {} cells",
                values.len(),
                grid.n
            )));
        }
        if let Some((index, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v >= 0.0))
        {
            return Err(ProfileError::InvalidValue { index, value });
        }
        Ok(Self {
            grid,
            values,
            tail_tolerance: DEFAULT_TAIL_TOLERANCE,
        })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.n],
            tail_tolerance: DEFAULT_TAIL_TOLERANCE,
        }
    }

    /// Exact cell averages from a tail function `F(r) = ∫_r^∞ ρ`.
    pub fn from_tail_fn(grid: Grid, tail: impl Fn(f64) -> f64) -> Self {
        let h = grid.h;
        let mut prev = tail(0.0);
        let values = (0..grid.n)
            .map(|i| {
                let next = tail(grid.node(i + 1));
                let v = ((prev - next) / h).max(0.0);
                prev = next;
                v
            })
            .collect();
        Self {
            grid,
            values,
            tail_tolerance: DEFAULT_TAIL_TOLERANCE,
        }
    }

    /// Cell averages of a pointwise density by 5-point Gauss-Legendre quadrature.
    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Self {
        const X: [f64; 5] = [
            0.0,
            -0.538_469_310_105_683_1,
            0.538_469_310_105_683_1,
            -0.906_179_845_938_664,
            0.906_179_845_938_664,
        ];
        const W: [f64; 5] = [
            0.568_888_888_888_888_9,
            0.478_628_670_499_366_47,
            0.478_628_670_499_366_47,
            0.236_926_885_056_189_08,
            0.236_926_885_056_189_08,
        ];
        let values = (0..grid.n)
            .map(|i| {
                let c = grid.center(i);
                let s: f64 = X
                    .iter()
                    .zip(W.iter())
                    .map(|(x, w)| w * f(c + 0.5 * grid.h * x))
                    .sum();
                (0.5 * s).max(0.0)
            })
            .collect();
        Self {
            grid,
            values,
            tail_tolerance: DEFAULT_TAIL_TOLERANCE,
        }
    }

    pub fn with_tail_tolerance(mut self, tol: f64) -> Self {
        self.tail_tolerance = tol;
        self
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn tail_tolerance(&self) -> f64 {
        self.tail_tolerance
    }

    pub fn total_mass(&self) -> f64 {
        self.grid.h * self.values.iter().sum::<f64>()
    }

    /// `F(x_k)` at every node `k = 0..=n`, accumulated from the right.
    pub fn node_tails(&self) -> Vec<f64> {
        let n = self.grid.n;
        let mut tails = vec![0.0; n + 1];
        for i in (0..n).rev() {
            tails[i] = tails[i + 1] + self.grid.h * self.values[i];
        }
        tails
    }

    /// `F(r) = ∫_r^∞ ρ`, exact for the piecewise-constant density.
    pub fn tail_mass(&self, r: f64) -> f64 {
        let h = self.grid.h;
        if r <= 0.0 {
            return self.total_mass();
        }
        if r >= self.grid.r_max() {
            return 0.0;
        }
        let k = ((r / h) as usize).min(self.grid.n - 1);
        let right: f64 = self.values[k + 1..].iter().sum::<f64>() * h;
        right + self.values[k] * (self.grid.node(k + 1) - r)
    }

    /// Index one past the last non-zero cell.
    pub fn active_len(&self) -> usize {
        self.values
            .iter()
            .rposition(|&v| v != 0.0)
            .map_or(0, |i| i + 1)
    }

    pub fn support_end(&self) -> f64 {
        self.grid.node(self.active_len())
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn scaled(&self, c: f64) -> Self {
        assert!(c >= 0.0 && c.is_finite());
        Self {
            grid: self.grid,
            values: self.values.iter().map(|v| v * c).collect(),
            tail_tolerance: self.tail_tolerance,
        }
    }

    /// Conservative transfer onto another grid; exact for cell tails at the new nodes.
    pub fn resample(&self, grid: Grid) -> Self {
        if self.grid.same_as(&grid) {
            return self.clone();
        }
        Self::from_tail_fn(grid, |r| self.tail_mass(r)).with_tail_tolerance(self.tail_tolerance)
    }

    /// Same spacing, more cells; the extra cells are empty.
    pub fn padded(&self, n: usize) -> Self {
        let mut values = self.values.clone();
        values.resize(n.max(self.grid.n), 0.0);
        Self {
            grid: Grid {
                h: self.grid.h,
                n: values.len(),
            },
            values,
            tail_tolerance: self.tail_tolerance,
        }
    }

    pub fn l1_distance(&self, other: &Self) -> f64 {
        let other = other.resample(self.grid);
        self.grid.h
            * self
                .values
                .iter()
                .zip(other.values.iter())
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>()
    }

    /// `sup_r |F(r; self) - F(r; other)|`, attained at grid nodes.
    pub fn sup_tail_distance(&self, other: &Self) -> f64 {
        tail_differences(self, other)
            .into_iter()
            .fold(0.0, |acc, d| acc.max(d.abs()))
    }

    pub fn to_csv_string(&self) -> String {
        let mut s = String::from("r,value\n");
        for (i, v) in self.values.iter().enumerate() {
            let _ = writeln!(s, "{},{}", fmt_f64(self.grid.center(i)), fmt_f64(*v));
        }
        s
    }

    pub fn sidecar(&self) -> ProfileSidecar {
        ProfileSidecar {
            h: self.grid.h,
            n: self.grid.n,
            tail_tolerance: self.tail_tolerance,
        }
    }

    /// Writes `<stem>.csv` and the `<stem>.json` sidecar.
    pub fn write(&self, csv_path: &Path) -> Result<(), ProfileError> {
        std::fs::write(csv_path, self.to_csv_string()).map_err(|e| ProfileError::Io(e.to_string()))?;
        let json = serde_json::to_string_pretty(&self.sidecar())
            .map_err(|e| ProfileError::Io(e.to_string()))?;
        std::fs::write(csv_path.with_extension("json"), json + "\n")
            .map_err(|e| ProfileError::Io(e.to_string()))
    }

    pub fn read(csv_path: &Path) -> Result<Self, ProfileError> {
        let csv = std::fs::read_to_string(csv_path).map_err(|e| ProfileError::Io(e.to_string()))?;
        let json = std::fs::read_to_string(csv_path.with_extension("json"))
            .map_err(|e| ProfileError::Io(e.to_string()))?;
        let meta: ProfileSidecar =
            serde_json::from_str(&json).map_err(|e| ProfileError::Parse(e.to_string()))?;
        Self::from_csv_str(&csv, &meta)
    }

    pub fn from_csv_str(csv: &str, meta: &ProfileSidecar) -> Result<Self, ProfileError> {
        let mut lines = csv.lines();
        match lines.next() {
            Some(head) if head.trim() == "r,value" => {}
            other => return Err(ProfileError::Parse(format!("bad header {other:?}"))),
        }
        let mut values = Vec::with_capacity(meta.n);
        for (row, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let field = line
                .split(',')
                .nth(1)
                .ok_or_else(|| ProfileError::Parse(format!("row {row}: missing value")))?;
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| ProfileError::Parse(format!("row {row}: bad number {field:?}")))?;
            values.push(v);
        }
        let grid = Grid::new(meta.h, meta.n)?;
        Ok(Self::new(grid, values)?.with_tail_tolerance(meta.tail_tolerance))
    }
}

/// JSON metadata stored next to a profile CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileSidecar {
    pub h: f64,
    pub n: usize,
    pub tail_tolerance: f64,
}

/// `F(r; u) - F(r; v)` at the union of both node sets (where the difference is extremal).
fn tail_differences(u: &DensityProfile, v: &DensityProfile) -> Vec<f64> {
    if u.grid.same_as(&v.grid) {
        let fu = u.node_tails();
        let fv = v.node_tails();
        return fu.iter().zip(fv.iter()).map(|(a, b)| a - b).collect();
    }
    let mut points: Vec<f64> = (0..=u.grid.n)
        .map(|k| u.grid.node(k))
        .chain((0..=v.grid.n).map(|k| v.grid.node(k)))
        .collect();
    points.sort_by(f64::total_cmp);
    points.dedup();
    points
        .into_iter()
        .map(|r| u.tail_mass(r) - v.tail_mass(r))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrderReport {
    pub holds: bool,
    /// `sup_r [F(r;u) - F(r;v)] - m`; non-positive iff `u ≼ v` modulo `m`.
    pub max_violation: f64,
}

/// Decides `u ≼ v` modulo `m`: `F(r;u) ≤ F(r;v) + m` for every `r`.
pub fn order_leq_mod(u: &DensityProfile, v: &DensityProfile, m: f64) -> OrderReport {
    let sup = tail_differences(u, v)
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max);
    let max_violation = sup - m;
    OrderReport {
        holds: max_violation <= 0.0,
        max_violation,
    }
}

/// Which end of the support loses mass under a cut.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum CutSide {
    #[default]
    Right,
    Left,
}

/// Removes exactly `amount` of mass from one end of the support, splitting a cell linearly.
pub fn cut_mass(u: &DensityProfile, amount: f64, side: CutSide) -> Result<DensityProfile, ProfileError> {
    let mass = u.total_mass();
    if !(mass > amount) {
        return Err(ProfileError::MassTooSmall { mass, amount });
    }
    let h = u.grid.h;
    let mut values = u.values.clone();
    let order: Box<dyn Iterator<Item = usize>> = match side {
        CutSide::Right => Box::new((0..values.len()).rev()),
        CutSide::Left => Box::new(0..values.len()),
    };
    let mut removed = 0.0;
    for i in order {
        let cell = h * values[i];
        if removed + cell < amount {
            removed += cell;
            values[i] = 0.0;
        } else {
            values[i] = (values[i] - (amount - removed) / h).max(0.0);
            break;
        }
    }
    Ok(DensityProfile {
        grid: u.grid,
        values,
        tail_tolerance: u.tail_tolerance,
    })
}

/// The cut `C_δ`: drop mass `jδ` from the far right of the support.
pub fn cut(u: &DensityProfile, delta: f64, p: FluxParams) -> Result<DensityProfile, ProfileError> {
    cut_mass(u, p.j * delta, CutSide::Right)
}

/// Monotone map pushing `u` forward to `v`, `f(r) = sup{r' : ∫_0^{r'} v = ∫_0^r u}`.
#[derive(Debug, Clone)]
pub struct TransportMap {
    u: DensityProfile,
    v_grid: Grid,
    v_values: Vec<f64>,
    v_cumulative: Vec<f64>,
}

impl TransportMap {
    pub fn eval(&self, r: f64) -> f64 {
        let tail = self.u.tail_mass(r);
        let cum = &self.v_cumulative;
        let n = self.v_grid.n;
        // masses agree only up to rounding; match them exactly before inverting
        let level = ((self.u.total_mass() - tail) * cum[n] / self.u.total_mass()).max(0.0);
        if tail <= 0.0 || level >= cum[n] {
            return self.v_grid.r_max();
        }
        // largest l with cum[l] <= level (up to rounding); cell l then has positive density
        let eps = 1e-12 * cum[n];
        let l = cum.partition_point(|&c| c <= level + eps).saturating_sub(1);
        if l >= n {
            return self.v_grid.r_max();
        }
        let x = self.v_grid.node(l) + (level - cum[l]).max(0.0) / self.v_values[l];
        x.min(self.v_grid.node(l + 1))
    }

    /// `f` evaluated at the nodes of the source grid.
    pub fn at_nodes(&self) -> Vec<f64> {
        (0..=self.u.grid.n).map(|k| self.eval(self.u.grid.node(k))).collect()
    }
}

/// Transport map from `u` to `v`; requires equal masses and `u ≼ v`.
pub fn transport_map(u: &DensityProfile, v: &DensityProfile) -> Result<TransportMap, ProfileError> {
    let (mu, mv) = (u.total_mass(), v.total_mass());
    let tol = 1e-9 * mu.max(mv).max(1.0);
    if (mu - mv).abs() > tol {
        return Err(ProfileError::MassMismatch(mu, mv));
    }
    let report = order_leq_mod(u, v, tol);
    if !report.holds {
        return Err(ProfileError::NotOrdered(format!(
            "u is not below v (excess {})",
            report.max_violation + tol
        )));
    }
    let mut v_cumulative = Vec::with_capacity(v.grid.n + 1);
    let mut acc = 0.0;
    v_cumulative.push(0.0);
    for x in &v.values {
        acc += v.grid.h * x;
        v_cumulative.push(acc);
    }
    Ok(TransportMap {
        u: u.clone(),
        v_grid: v.grid,
        v_values: v.values.clone(),
        v_cumulative,
    })
}

/// Inverse-CDF sampler for a piecewise-constant density.
#[derive(Debug, Clone)]
pub struct CellSampler {
    h: f64,
    cumulative: Vec<f64>,
}

impl CellSampler {
    pub fn new(u: &DensityProfile) -> Self {
        let mut acc = 0.0;
        let cumulative = u
            .values()
            .iter()
            .map(|v| {
                acc += v;
                acc
            })
            .collect();
        Self {
            h: u.grid().h(),
            cumulative,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let total = *self.cumulative.last().unwrap_or(&0.0);
        let target = rng.random::<f64>() * total;
        let i = self
            .cumulative
            .partition_point(|&c| c <= target)
            .min(self.cumulative.len() - 1);
        self.h * (i as f64 + rng.random::<f64>())
    }
}
