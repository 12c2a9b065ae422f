use rand::Rng;
use serde::{Deserialize, Serialize};

use super::VariantError;
use crate::profile::DensityProfile;

/// Probability law used for injected positions (diffuse model) or offspring
/// displacements (nonlocal branching).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum InjectionLaw {
    /// Piecewise-constant density on `[origin, origin + h·len)`; `masses` sum to 1.
    Cells { origin: f64, h: f64, masses: Vec<f64> },
    Point(f64),
}

impl InjectionLaw {
    pub fn cells(origin: f64, h: f64, weights: Vec<f64>) -> Result<Self, VariantError> {
        if !(h.is_finite() && h > 0.0 && origin.is_finite()) || weights.is_empty() {
            return Err(VariantError::InvalidLaw("bad grid".into()));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(VariantError::InvalidLaw("negative or non-finite weight".into()));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(VariantError::InvalidLaw("zero total mass".into()));
        }
        let masses = weights.into_iter().map(|w| w / total).collect();
        Ok(Self::Cells { origin, h, masses })
    }

    /// Uniform density on `[a, b]` split into `cells` equal cells.
    pub fn uniform(a: f64, b: f64, cells: usize) -> Result<Self, VariantError> {
        if !(b > a) || cells == 0 {
            return Err(VariantError::InvalidLaw(format!("empty interval [{a}, {b}]")));
        }
        Self::cells(a, (b - a) / cells as f64, vec![1.0; cells])
    }

    /// Normalized copy of a half-line profile.
    pub fn from_profile(f: &DensityProfile) -> Result<Self, VariantError> {
        let g = f.grid();
        Self::cells(0.0, g.h(), f.values().iter().map(|v| v * g.h()).collect())
    }

    pub fn point(a: f64) -> Self {
        Self::Point(a)
    }

    pub fn total_mass(&self) -> f64 {
        match self {
            Self::Cells { masses, .. } => masses.iter().sum(),
            Self::Point(_) => 1.0,
        }
    }

    /// Pieces `(left end, width, density)`; a point mass has none.
    pub fn pieces(&self) -> Vec<(f64, f64, f64)> {
        match self {
            Self::Cells { origin, h, masses } => masses
                .iter()
                .enumerate()
                .map(|(i, m)| (origin + h * i as f64, *h, m / h))
                .collect(),
            Self::Point(_) => Vec::new(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Self::Point(a) => *a,
            Self::Cells { origin, h, masses } => {
                let mut u: f64 = rng.random();
                for (i, m) in masses.iter().enumerate() {
                    if u < *m {
                        return origin + h * (i as f64 + u / m);
                    }
                    u -= m;
                }
                let last = masses.iter().rposition(|m| *m > 0.0).unwrap_or(0);
                origin + h * (last as f64 + 1.0)
            }
        }
    }

    /// Cell-to-cell transfer for a grid of spacing `h`: the returned
    /// `(offset, probs)` send mass from cell `i` to cell `i + offset + k`
    /// with probability `probs[k]`, for a uniform position inside cell `i`.
    pub fn cell_transfer(&self, h: f64) -> Result<(i64, Vec<f64>), VariantError> {
        match self {
            Self::Point(a) => {
                let q = (a / h).floor();
                let frac = a / h - q;
                Ok((q as i64, vec![1.0 - frac, frac]))
            }
            Self::Cells { origin, h: hk, masses } => {
                let ratio = hk / h;
                let shift = origin / h;
                if (ratio - ratio.round()).abs() > 1e-9 || (shift - shift.round()).abs() > 1e-9 {
                    return Err(VariantError::InvalidLaw(format!(
                        "kernel grid (origin {origin}, h {hk}) is not aligned with spacing {h}"
                    )));
                }
                let ratio = ratio.round() as usize;
                let mut probs = vec![0.0; masses.len() * ratio + 1];
                // a uniform point plus a uniform offset within one sub-cell
                // splits evenly between that sub-cell and the next
                for (k, m) in masses.iter().enumerate() {
                    for s in 0..ratio {
                        let p = m / ratio as f64;
                        probs[k * ratio + s] += 0.5 * p;
                        probs[k * ratio + s + 1] += 0.5 * p;
                    }
                }
                Ok((shift.round() as i64, probs))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn normalizes_and_samples_inside() {
        let f = InjectionLaw::cells(-1.0, 0.5, vec![1.0, 3.0, 0.0, 4.0]).unwrap();
        assert!((f.total_mass() - 1.0).abs() < 1e-15);
        let mut rng = stream(1, &[]);
        let mut in_second = 0;
        for _ in 0..20000 {
            let x = f.sample(&mut rng);
            assert!((-1.0..1.0).contains(&x));
            assert!(!(0.0..0.5).contains(&x));
            if (-0.5..0.0).contains(&x) {
                in_second += 1;
            }
        }
        let frac = in_second as f64 / 20000.0;
        assert!((frac - 0.375).abs() < 0.015, "{frac}");
        assert!(InjectionLaw::cells(0.0, 1.0, vec![0.0]).is_err());
        assert!(InjectionLaw::cells(0.0, 1.0, vec![-1.0, 2.0]).is_err());
    }

    #[test]
    fn transfer_sums_to_one() {
        let f = InjectionLaw::uniform(-0.5, 0.5, 4).unwrap();
        let (off, p) = f.cell_transfer(0.125).unwrap();
        assert_eq!(off, -4);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        let (off, p) = InjectionLaw::point(0.3).cell_transfer(0.125).unwrap();
        assert_eq!(off, 2);
        assert!((p[1] - 0.4).abs() < 1e-12);
        assert!(f.cell_transfer(0.1).is_err());
    }
}
