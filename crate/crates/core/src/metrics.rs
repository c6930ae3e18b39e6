//! Distances and summary statistics for one-dimensional distributions.
//!
//! Two representations cover everything the solvers produce: weighted point
//! masses (agent snapshots, delta limits) and histograms understood as
//! piecewise-uniform densities (binned output, finite-volume marginals).
//! The Wasserstein-1 distance uses the 1D identity `W1 = ∫ |F - G| dx`,
//! evaluated exactly on the merged breakpoints of the two CDFs, which are
//! piecewise linear with jumps only at atoms.

use crate::{Error, Result};

/// Tolerance on input total mass before renormalisation is refused.
const MASS_TOL: f64 = 1e-8;

#[derive(Debug, Clone)]
enum Repr {
    /// Sorted positions with positive weights.
    Atoms { xs: Vec<f64>, ws: Vec<f64> },
    /// Strictly increasing bin edges with per-bin masses (uniform inside).
    Histogram { edges: Vec<f64>, masses: Vec<f64> },
}

/// A probability distribution on the line.
#[derive(Debug, Clone)]
pub struct Distribution1D {
    repr: Repr,
}

impl Distribution1D {
    /// Weighted atoms. Weights must be nonnegative, finite, and sum to 1
    /// within 1e-8 (then renormalised exactly).
    pub fn from_atoms(points: &[(f64, f64)]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Domain("empty atom list".into()));
        }
        let mut pts: Vec<(f64, f64)> = points.to_vec();
        for &(x, w) in &pts {
            if !x.is_finite() || !w.is_finite() || w < 0.0 {
                return Err(Error::Domain(format!("bad atom ({x}, {w})")));
            }
        }
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let total: f64 = pts.iter().map(|p| p.1).sum();
        check_mass(total)?;
        let xs = pts.iter().map(|p| p.0).collect();
        let ws = pts.iter().map(|p| p.1 / total).collect();
        Ok(Distribution1D { repr: Repr::Atoms { xs, ws } })
    }

    /// Equal-weight atoms at sample positions.
    pub fn from_samples(samples: &[f64]) -> Result<Self> {
        let w = 1.0 / samples.len() as f64;
        Self::from_atoms(&samples.iter().map(|&x| (x, w)).collect::<Vec<_>>())
    }

    /// Piecewise-uniform density: `edges.len() == masses.len() + 1`, edges
    /// strictly increasing, masses nonnegative and summing to 1 within 1e-8.
    pub fn from_histogram(edges: &[f64], masses: &[f64]) -> Result<Self> {
        if edges.len() != masses.len() + 1 || masses.is_empty() {
            return Err(Error::Domain(format!(
                "histogram needs n+1 edges for n>=1 masses, got {} edges / {} masses",
                edges.len(),
                masses.len()
            )));
        }
        if edges.windows(2).any(|w| !(w[0] < w[1])) || edges.iter().any(|e| !e.is_finite()) {
            return Err(Error::Domain("bin edges must be finite and strictly increasing".into()));
        }
        if masses.iter().any(|m| !m.is_finite() || *m < 0.0) {
            return Err(Error::Domain("bin masses must be finite and nonnegative".into()));
        }
        let total: f64 = masses.iter().sum();
        check_mass(total)?;
        Ok(Distribution1D {
            repr: Repr::Histogram {
                edges: edges.to_vec(),
                masses: masses.iter().map(|m| m / total).collect(),
            },
        })
    }

    /// Positions where the CDF changes slope or jumps.
    fn breakpoints(&self) -> &[f64] {
        match &self.repr {
            Repr::Atoms { xs, .. } => xs,
            Repr::Histogram { edges, .. } => edges,
        }
    }

    /// CDF limit from the right: `P(X <= x)`.
    fn cdf_right(&self, x: f64) -> f64 {
        match &self.repr {
            Repr::Atoms { xs, ws } => {
                let idx = xs.partition_point(|&p| p <= x);
                ws[..idx].iter().sum()
            }
            Repr::Histogram { .. } => self.cdf_continuous(x),
        }
    }

    /// CDF limit from the left: `P(X < x)`.
    fn cdf_left(&self, x: f64) -> f64 {
        match &self.repr {
            Repr::Atoms { xs, ws } => {
                let idx = xs.partition_point(|&p| p < x);
                ws[..idx].iter().sum()
            }
            Repr::Histogram { .. } => self.cdf_continuous(x),
        }
    }

    fn cdf_continuous(&self, x: f64) -> f64 {
        let Repr::Histogram { edges, masses } = &self.repr else {
            unreachable!()
        };
        if x <= edges[0] {
            return 0.0;
        }
        if x >= *edges.last().unwrap() {
            return 1.0;
        }
        let bin = edges.partition_point(|&e| e <= x) - 1;
        let below: f64 = masses[..bin].iter().sum();
        let frac = (x - edges[bin]) / (edges[bin + 1] - edges[bin]);
        below + masses[bin] * frac
    }

    /// Mean of the distribution.
    pub fn mean(&self) -> f64 {
        match &self.repr {
            Repr::Atoms { xs, ws } => xs.iter().zip(ws).map(|(x, w)| x * w).sum(),
            Repr::Histogram { edges, masses } => masses
                .iter()
                .enumerate()
                .map(|(i, m)| m * 0.5 * (edges[i] + edges[i + 1]))
                .sum(),
        }
    }

    /// Variance; bins contribute their exact uniform-slab second moment.
    pub fn variance(&self) -> f64 {
        let mu = self.mean();
        match &self.repr {
            Repr::Atoms { xs, ws } => xs.iter().zip(ws).map(|(x, w)| w * (x - mu).powi(2)).sum(),
            Repr::Histogram { edges, masses } => masses
                .iter()
                .enumerate()
                .map(|(i, m)| {
                    let c = 0.5 * (edges[i] + edges[i + 1]);
                    let w = edges[i + 1] - edges[i];
                    m * ((c - mu).powi(2) + w * w / 12.0)
                })
                .sum(),
        }
    }
}

fn check_mass(total: f64) -> Result<()> {
    if !total.is_finite() || (total - 1.0).abs() > MASS_TOL {
        return Err(Error::Domain(format!(
            "distribution mass must be 1 within {MASS_TOL:e}, got {total}"
        )));
    }
    Ok(())
}

/// Wasserstein-1 distance `∫ |F_a(x) - F_b(x)| dx`, exact for these CDFs.
pub fn wasserstein1(a: &Distribution1D, b: &Distribution1D) -> f64 {
    let mut breaks: Vec<f64> = a
        .breakpoints()
        .iter()
        .chain(b.breakpoints())
        .copied()
        .collect();
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();

    let mut total = 0.0;
    for w in breaks.windows(2) {
        let (u, v) = (w[0], w[1]);
        // F_a - F_b is linear on the open segment; take one-sided limits.
        let d_u = a.cdf_right(u) - b.cdf_right(u);
        let d_v = a.cdf_left(v) - b.cdf_left(v);
        let len = v - u;
        total += if d_u * d_v >= 0.0 {
            0.5 * (d_u.abs() + d_v.abs()) * len
        } else {
            // Sign change: two triangles around the crossing point.
            0.5 * (d_u * d_u + d_v * d_v) / (d_u.abs() + d_v.abs()) * len
        };
    }
    total
}

/// L¹ distance between two histograms on the same binning:
/// `∫ |p_a - p_b| dx = Σ |m_a,i - m_b,i|`.
pub fn l1_histogram_distance(a: &Distribution1D, b: &Distribution1D) -> Result<f64> {
    let (Repr::Histogram { edges: ea, masses: ma }, Repr::Histogram { edges: eb, masses: mb }) =
        (&a.repr, &b.repr)
    else {
        return Err(Error::Domain(
            "L1 histogram distance needs two histogram distributions".into(),
        ));
    };
    if ea.len() != eb.len() || ea.iter().zip(eb).any(|(x, y)| x != y) {
        return Err(Error::Domain("histograms must share identical bin edges".into()));
    }
    Ok(ma.iter().zip(mb).map(|(x, y)| (x - y).abs()).sum())
}

/// L¹ distance between two per-bin mass vectors on a shared binning.
pub fn l1_mass_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Domain(format!(
            "mass vectors differ in length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum())
}
