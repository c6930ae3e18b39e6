//! Deterministic finite-volume solver for the two-velocity kinetic-transport
//! system in `(x, a)`.
//!
//! The stored unknowns are cell averages of the *measure* densities
//! `u± = q±/(N·α0·a(1−a))`, in which the activity advection takes plain flux
//! form `∂_a(Φ(a)·u±)` with [`a_flux_coefficient`] `Φ`, and the conserved
//! total is the plain integral `∬ (u⁺+u⁻)/2 dx da = 1`. One `advance` step
//! Strang-splits the stiff tumbling exchange around the transport terms:
//! half-step exchange, donor-cell upwind in `x` (periodic), donor-cell upwind
//! in `a`, half-step exchange. The exchange is integrated exactly as a 2×2
//! relaxation toward the local direction mean, so it is unconditionally
//! positive and conservative; `Φ` vanishes at `a = 0, 1`, so the activity
//! boundaries need no condition (asserted, not imposed).
//!
//! At a CFL number of exactly 1 the spatial upwind step degenerates to an
//! exact cell shift with no numerical diffusion, which the macroscopic
//! comparison runs exploit by choosing `dt = Δx·ε^{β−1}/v0`.

use rayon::prelude::*;
use serde::Serialize;

use crate::closure::ClosureProfile;
use crate::params::{Environment, PhysParams};
use crate::{Error, Result};

/// Discretisation request: `nx` periodic cells in `x`, `na` cells covering
/// `(0,1)` in `a`, refined geometrically toward each segment boundary by
/// `cluster_ratio` per cell (1.0 = uniform within segments).
#[derive(Debug, Clone, Serialize)]
pub struct GridSpec {
    pub nx: usize,
    pub na: usize,
    pub cluster_ratio: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { nx: 256, na: 512, cluster_ratio: 1.05 }
    }
}

/// Advection speed in activity for direction `dir = ±1`, in 1/s:
/// the methylation drift seen through the activity coordinate,
/// `(−dir·v0·G/α0 + kR(1 − a/a0))·N·α0·a(1−a)`.
///
/// Vanishes at `a = 0` and `a = 1` for any parameters, and (for `dir = +1`)
/// at the lower closure edge `a1` when that lies inside `(0,1)`.
pub fn a_flux_coefficient(p: &PhysParams, g_spatial: f64, a: f64, dir: f64) -> f64 {
    (-dir * p.v0 * g_spatial / p.alpha0 + p.adaptation_rate(a)) * p.n * p.alpha0 * a * (1.0 - a)
}

/// Steady-state detection summary from [`KineticField::run_to_steady`].
#[derive(Debug, Clone, Serialize)]
pub struct SteadyReport {
    pub converged: bool,
    pub steps: u64,
    /// Scaled time at exit.
    pub time: f64,
    /// ‖dq/dt‖₁ estimate over the last check interval.
    pub residual_rate: f64,
}

/// Cell-averaged kinetic state for one `(ε, μ, β)` scaling.
#[derive(Debug, Clone)]
pub struct KineticField {
    pub params: PhysParams,
    pub env: Environment,
    pub eps: f64,
    pub mu: f64,
    pub beta: f64,
    /// Scaled time.
    pub time: f64,
    nx: usize,
    dx: f64,
    a_edges: Vec<f64>,
    da: Vec<f64>,
    a_centers: Vec<f64>,
    /// Unscaled Φ at the `na+1` activity edges, per direction.
    phi_plus: Vec<f64>,
    phi_minus: Vec<f64>,
    /// Unscaled Z at activity centers.
    z_centers: Vec<f64>,
    /// Row-major `[x][a]` measure densities.
    qplus: Vec<f64>,
    qminus: Vec<f64>,
    scratch: Vec<f64>,
    /// max over cells of edge-|Φ|/Δa, for the CFL precondition.
    cfl_a_coeff: f64,
}

/// Cell edges over `[0,1]` anchored exactly at the flux zeros: segment ends
/// are `{0, 1}`, plus `{a1, a2}` when `0 < g < 1` (so the support boundary
/// coincides with cell edges and confinement is exact), plus the set point
/// when `g = 0` (where all mass funnels). Interior segments get the bulk of
/// the cells; outer segments, which hold no mass in the confined regimes,
/// get `na/8` each.
pub fn clustered_a_edges(
    p: &PhysParams,
    g_spatial: f64,
    na: usize,
    cluster_ratio: f64,
) -> Result<Vec<f64>> {
    if na < 16 {
        return Err(Error::Config(format!("need at least 16 activity cells, got {na}")));
    }
    if !(cluster_ratio >= 1.0) || !cluster_ratio.is_finite() {
        return Err(Error::Config(format!(
            "cluster ratio must be >= 1, got {cluster_ratio}"
        )));
    }
    let g = p.gradient_number(g_spatial)?;
    let mut anchors = vec![0.0, 1.0];
    if g == 0.0 {
        anchors.push(p.a0);
    } else if g < 1.0 {
        anchors.push(PhysParams::a_minus(g));
        anchors.push(PhysParams::a_plus(g));
    }
    anchors.sort_by(f64::total_cmp);

    let nseg = anchors.len() - 1;
    let mut alloc = vec![0usize; nseg];
    if nseg == 1 {
        alloc[0] = na;
    } else if nseg == 2 {
        alloc[0] = na / 2;
        alloc[1] = na - alloc[0];
    } else {
        let outer = (na / 8).max(8);
        alloc[0] = outer;
        alloc[nseg - 1] = outer;
        alloc[1] = na - 2 * outer;
    }

    let mut edges = Vec::with_capacity(na + 1);
    edges.push(0.0);
    for s in 0..nseg {
        let (lo, hi) = (anchors[s], anchors[s + 1]);
        let n = alloc[s];
        // Spacing weights grow geometrically away from both segment ends,
        // capped so the finest cell is at most ~16× smaller than the bulk:
        // enough to resolve edge power laws without starving the interior
        // (where the broad-support profiles put their mass) or the CFL bound.
        let cap = if cluster_ratio > 1.0 + 1e-9 {
            (16.0_f64.ln() / cluster_ratio.ln()).ceil() as usize
        } else {
            0
        };
        let weights: Vec<f64> = (0..n)
            .map(|t| cluster_ratio.powi(t.min(n - 1 - t).min(cap) as i32))
            .collect();
        let total: f64 = weights.iter().sum();
        let mut acc = 0.0;
        for w in weights.iter().take(n - 1) {
            acc += w;
            edges.push(lo + (hi - lo) * acc / total);
        }
        edges.push(hi);
    }
    Ok(edges)
}

impl KineticField {
    /// Uniform initial data (mass 1, equal directions) on a fresh grid.
    pub fn new(
        p: &PhysParams,
        env: &Environment,
        eps: f64,
        mu: f64,
        beta: f64,
        grid: &GridSpec,
    ) -> Result<Self> {
        p.validate()?;
        if !(eps > 0.0) || !eps.is_finite() {
            return Err(Error::Config(format!("eps must be positive, got {eps}")));
        }
        if !(0.0..=1.0).contains(&mu) {
            return Err(Error::Config(format!("mu must lie in [0,1], got {mu}")));
        }
        if !(1.0..=2.0).contains(&beta) {
            return Err(Error::Config(format!("beta must lie in [1,2], got {beta}")));
        }
        // Only the two scalings the theory uses are meaningful here.
        if beta != 1.0 && (beta - (1.0 + mu)).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "beta must be 1 or 1+mu, got beta={beta} with mu={mu}"
            )));
        }
        if grid.nx < 1 {
            return Err(Error::Config("need at least one spatial cell".into()));
        }
        let a_edges = clustered_a_edges(p, env.g_spatial, grid.na, grid.cluster_ratio)?;
        let na = a_edges.len() - 1;
        let da: Vec<f64> = a_edges.windows(2).map(|w| w[1] - w[0]).collect();
        let a_centers: Vec<f64> = a_edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        let phi_plus: Vec<f64> = a_edges
            .iter()
            .map(|&a| a_flux_coefficient(p, env.g_spatial, a, 1.0))
            .collect();
        let phi_minus: Vec<f64> = a_edges
            .iter()
            .map(|&a| a_flux_coefficient(p, env.g_spatial, a, -1.0))
            .collect();
        debug_assert_eq!(phi_plus[0], 0.0);
        debug_assert_eq!(phi_plus[na], 0.0);
        let z_centers: Vec<f64> = a_centers.iter().map(|&a| p.tumbling_rate(a)).collect();
        let mut cfl_a_coeff = 0.0_f64;
        for j in 0..na {
            let m = phi_plus[j]
                .abs()
                .max(phi_plus[j + 1].abs())
                .max(phi_minus[j].abs())
                .max(phi_minus[j + 1].abs());
            cfl_a_coeff = cfl_a_coeff.max(m / da[j]);
        }
        let len = env.length();
        let value = 1.0 / len;
        Ok(KineticField {
            params: p.clone(),
            env: env.clone(),
            eps,
            mu,
            beta,
            time: 0.0,
            nx: grid.nx,
            dx: len / grid.nx as f64,
            a_edges,
            da,
            a_centers,
            phi_plus,
            phi_minus,
            z_centers,
            qplus: vec![value; grid.nx * na],
            qminus: vec![value; grid.nx * na],
            scratch: vec![0.0; grid.nx * na],
            cfl_a_coeff,
        })
    }

    pub fn na(&self) -> usize {
        self.da.len()
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn a_edges(&self) -> &[f64] {
        &self.a_edges
    }

    pub fn a_centers(&self) -> &[f64] {
        &self.a_centers
    }

    pub fn x_centers(&self) -> Vec<f64> {
        (0..self.nx)
            .map(|i| self.env.x_min + (i as f64 + 0.5) * self.dx)
            .collect()
    }

    /// Φ for this field's gradient (unscaled; `advance` divides by ε^β).
    pub fn flux_coefficient(&self, a: f64, dir: f64) -> f64 {
        a_flux_coefficient(&self.params, self.env.g_spatial, a, dir)
    }

    /// Overwrites the state from a pointwise pair of direction densities
    /// evaluated at cell centers, then normalises to total mass 1.
    pub fn set_from(&mut self, f: impl Fn(f64, f64) -> (f64, f64) + Sync) -> Result<()> {
        let na = self.na();
        let xc = self.x_centers();
        for i in 0..self.nx {
            for j in 0..na {
                let (vp, vm) = f(xc[i], self.a_centers[j]);
                if !(vp >= 0.0) || !(vm >= 0.0) {
                    return Err(Error::Domain(format!(
                        "initial data must be nonnegative, got ({vp}, {vm}) at (x={}, a={})",
                        xc[i], self.a_centers[j]
                    )));
                }
                self.qplus[i * na + j] = vp;
                self.qminus[i * na + j] = vm;
            }
        }
        self.normalize()
    }

    /// Scales the state so the conserved integral is exactly 1.
    pub fn normalize(&mut self) -> Result<()> {
        let m = self.mass();
        if !(m > 0.0) || !m.is_finite() {
            return Err(Error::Domain(format!("cannot normalise mass {m}")));
        }
        let s = 1.0 / m;
        self.qplus.iter_mut().for_each(|v| *v *= s);
        self.qminus.iter_mut().for_each(|v| *v *= s);
        Ok(())
    }

    /// x-uniform state equal to the stationary closure profile.
    pub fn project_closure(&mut self, prof: &ClosureProfile) -> Result<()> {
        let (lo, hi) = prof.support();
        let na = self.na();
        let locate = |v: f64| -> usize {
            self.a_edges
                .iter()
                .position(|&e| (e - v).abs() <= 1e-12)
                .unwrap_or_else(|| self.a_edges.partition_point(|&e| e < v))
        };
        let j1 = locate(lo);
        let j2 = locate(hi);
        if j2 <= j1 {
            return Err(Error::Domain(
                "grid does not resolve the closure support".into(),
            ));
        }
        let (mp, mm) = prof.bin_masses(&self.a_edges[j1..=j2])?;
        let len = self.env.length();
        self.qplus.iter_mut().for_each(|v| *v = 0.0);
        self.qminus.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..self.nx {
            for (k, (&wp, &wm)) in mp.iter().zip(&mm).enumerate() {
                let j = j1 + k;
                self.qplus[i * na + j] = 2.0 * wp / (self.da[j] * len);
                self.qminus[i * na + j] = 2.0 * wm / (self.da[j] * len);
            }
        }
        Ok(())
    }

    /// Reshapes the spatial profile by per-cell weights (e.g. a bump),
    /// leaving the activity structure untouched, then renormalises.
    pub fn modulate_x(&mut self, weights: &[f64]) -> Result<()> {
        if weights.len() != self.nx {
            return Err(Error::Config(format!(
                "expected {} spatial weights, got {}",
                self.nx,
                weights.len()
            )));
        }
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::Domain("spatial weights must be nonnegative".into()));
        }
        let na = self.na();
        for i in 0..self.nx {
            for j in 0..na {
                self.qplus[i * na + j] *= weights[i];
                self.qminus[i * na + j] *= weights[i];
            }
        }
        self.normalize()
    }

    /// Conserved total `∬ (u⁺+u⁻)/2 dx da`.
    pub fn mass(&self) -> f64 {
        let na = self.na();
        let mut total = 0.0;
        for i in 0..self.nx {
            for j in 0..na {
                total += (self.qplus[i * na + j] + self.qminus[i * na + j]) * self.da[j];
            }
        }
        0.5 * total * self.dx
    }

    pub fn min_value(&self) -> f64 {
        self.qplus
            .iter()
            .chain(&self.qminus)
            .fold(f64::INFINITY, |m, &v| m.min(v))
    }

    /// Largest `dt` honouring both CFL bounds.
    pub fn max_stable_dt(&self) -> f64 {
        let cx = self.eps.powf(1.0 - self.beta) * self.params.v0;
        let ca = self.cfl_a_coeff / self.eps.powf(self.beta);
        (self.dx / cx).min(if ca > 0.0 { 1.0 / ca } else { f64::INFINITY })
    }

    /// One Strang-split step of scaled time `dt`.
    pub fn advance(&mut self, dt: f64) -> Result<()> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::Config(format!("dt must be positive, got {dt}")));
        }
        let eps_b = self.eps.powf(self.beta);
        let nu_x = self.eps.powf(1.0 - self.beta) * self.params.v0 * dt / self.dx;
        let nu_a = self.cfl_a_coeff * dt / eps_b;
        if nu_x > 1.0 + 1e-9 || nu_a > 1.0 + 1e-9 {
            return Err(Error::Config(format!(
                "CFL violation: x-number {nu_x:.3}, a-number {nu_a:.3} (dt_max = {:.3e})",
                self.max_stable_dt()
            )));
        }

        self.exchange(0.5 * dt / eps_b);
        self.transport_x(nu_x);
        self.advect_a(dt / eps_b);
        self.exchange(0.5 * dt / eps_b);
        self.time += dt;
        Ok(())
    }

    /// Exact pointwise relaxation toward the direction mean over time `h`
    /// (already divided by ε^β).
    fn exchange(&mut self, h: f64) {
        let na = self.na();
        let decay: Vec<f64> = self.z_centers.iter().map(|&z| (-z * h).exp()).collect();
        let qm = &mut self.qminus;
        self.qplus
            .par_chunks_mut(na)
            .zip(qm.par_chunks_mut(na))
            .for_each(|(rp, rm)| {
                for j in 0..na {
                    let mean = 0.5 * (rp[j] + rm[j]);
                    rp[j] = mean + (rp[j] - mean) * decay[j];
                    rm[j] = mean + (rm[j] - mean) * decay[j];
                }
            });
    }

    /// Donor-cell periodic shift at CFL number `nu` (exact at `nu = 1`);
    /// the plus field moves right, the minus field moves left.
    fn transport_x(&mut self, nu: f64) {
        let na = self.na();
        let nx = self.nx;
        for (field, from_left) in [(&mut self.qplus, true), (&mut self.qminus, false)] {
            self.scratch.copy_from_slice(field);
            let src = &self.scratch;
            field
                .par_chunks_mut(na)
                .enumerate()
                .for_each(|(i, row)| {
                    let n = if from_left { (i + nx - 1) % nx } else { (i + 1) % nx };
                    let neigh = &src[n * na..(n + 1) * na];
                    let own = &src[i * na..(i + 1) * na];
                    if nu == 1.0 {
                        // Exact shift; spelled out so no roundoff creeps in.
                        row.copy_from_slice(neigh);
                    } else {
                        for j in 0..na {
                            row[j] = own[j] - nu * (own[j] - neigh[j]);
                        }
                    }
                });
        }
    }

    /// Donor-cell upwind advection in `a` over time `h` (already divided by
    /// ε^β). The edge coefficients vanish at `a = 0, 1`, so no flux crosses
    /// the activity boundaries.
    fn advect_a(&mut self, h: f64) {
        let na = self.na();
        let da = &self.da;
        for (field, phi) in [(&mut self.qplus, &self.phi_plus), (&mut self.qminus, &self.phi_minus)]
        {
            field.par_chunks_mut(na).for_each(|row| {
                let mut flux_left = 0.0;
                for j in 0..na {
                    let pe = phi[j + 1];
                    let flux_right = if j + 1 == na {
                        0.0
                    } else if pe > 0.0 {
                        pe * row[j]
                    } else {
                        pe * row[j + 1]
                    };
                    row[j] -= h * (flux_right - flux_left) / da[j];
                    flux_left = flux_right;
                }
            });
        }
    }

    /// Advances until `‖dq/dt‖₁ ≤ tol·‖q‖₁`, checking every `check_every`
    /// steps against a snapshot.
    pub fn run_to_steady(
        &mut self,
        dt: f64,
        tol: f64,
        check_every: usize,
        max_steps: u64,
    ) -> Result<SteadyReport> {
        let check = check_every.max(1) as u64;
        let mut snapshot_p = self.qplus.clone();
        let mut snapshot_m = self.qminus.clone();
        let mut steps = 0u64;
        while steps < max_steps {
            for _ in 0..check.min(max_steps - steps) {
                self.advance(dt)?;
                steps += 1;
            }
            let mut diff = 0.0;
            let mut norm = 0.0;
            let na = self.na();
            for i in 0..self.nx {
                for j in 0..na {
                    let w = self.da[j];
                    diff += ((self.qplus[i * na + j] - snapshot_p[i * na + j]).abs()
                        + (self.qminus[i * na + j] - snapshot_m[i * na + j]).abs())
                        * w;
                    norm += (self.qplus[i * na + j].abs() + self.qminus[i * na + j].abs()) * w;
                }
            }
            let residual_rate = 0.5 * diff * self.dx / (check as f64 * dt);
            let norm = 0.5 * norm * self.dx;
            if residual_rate <= tol * norm {
                return Ok(SteadyReport {
                    converged: true,
                    steps,
                    time: self.time,
                    residual_rate,
                });
            }
            snapshot_p.copy_from_slice(&self.qplus);
            snapshot_m.copy_from_slice(&self.qminus);
        }
        Ok(SteadyReport {
            converged: false,
            steps,
            time: self.time,
            residual_rate: f64::NAN,
        })
    }

    /// Per-direction x-integrated masses per activity cell; together they
    /// sum to 1.
    pub fn marginal_masses(&self) -> (Vec<f64>, Vec<f64>) {
        let na = self.na();
        let mut mp = vec![0.0; na];
        let mut mm = vec![0.0; na];
        for i in 0..self.nx {
            for j in 0..na {
                mp[j] += self.qplus[i * na + j] * self.da[j];
                mm[j] += self.qminus[i * na + j] * self.da[j];
            }
        }
        let w = 0.5 * self.dx;
        mp.iter_mut().for_each(|v| *v *= w);
        mm.iter_mut().for_each(|v| *v *= w);
        (mp, mm)
    }

    /// Per-direction marginal densities over activity (mass/Δa).
    pub fn marginal_activity(&self) -> (Vec<f64>, Vec<f64>) {
        let (mut mp, mut mm) = self.marginal_masses();
        for j in 0..self.na() {
            mp[j] /= self.da[j];
            mm[j] /= self.da[j];
        }
        (mp, mm)
    }

    /// Spatial density ρ(x) (integrates to 1 over the periodic domain).
    pub fn density(&self) -> Vec<f64> {
        let na = self.na();
        (0..self.nx)
            .map(|i| {
                let mut s = 0.0;
                for j in 0..na {
                    s += (self.qplus[i * na + j] + self.qminus[i * na + j]) * self.da[j];
                }
                0.5 * s
            })
            .collect()
    }

    /// Mass lying more than `pad` cells outside `[lo, hi]` in activity.
    pub fn mass_outside(&self, lo: f64, hi: f64, pad: usize) -> f64 {
        let na = self.na();
        let j_lo = self.a_edges.partition_point(|&e| e < lo - 1e-15).saturating_sub(pad);
        let j_hi = (self.a_edges.partition_point(|&e| e <= hi + 1e-15) - 1 + pad).min(na);
        let (mp, mm) = self.marginal_masses();
        let mut outside = 0.0;
        for j in 0..na {
            if j < j_lo || j >= j_hi {
                outside += mp[j] + mm[j];
            }
        }
        outside
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{wasserstein1, Distribution1D};

    fn field(g_spatial: f64, grid: &GridSpec, eps: f64) -> KineticField {
        let p = PhysParams::default();
        let env = Environment::with_bounds(g_spatial, 0.0, 100.0).unwrap();
        KineticField::new(&p, &env, eps, 0.0, 1.0, grid).unwrap()
    }

    /// Deterministic pseudo-random cell values for conservation tests.
    fn scrambled(i: usize, j: usize) -> (f64, f64) {
        let h = |k: u64| {
            let mut v = k.wrapping_mul(0x9e3779b97f4a7c15);
            v ^= v >> 33;
            (v as f64 / u64::MAX as f64) + 0.05
        };
        (h((i * 7919 + j) as u64), h((i * 104729 + 3 * j + 1) as u64))
    }

    #[test]
    fn flux_coefficient_zeros() {
        let p = PhysParams::default();
        assert_eq!(a_flux_coefficient(&p, 1e-3, 0.0, 1.0), 0.0);
        assert_eq!(a_flux_coefficient(&p, 1e-3, 1.0, -1.0), 0.0);
        // No gradient: the adaptation fixed point is the only interior zero.
        assert_eq!(a_flux_coefficient(&p, 0.0, p.a0, 1.0), 0.0);
        // kR = 0.005, G = 5·10⁻⁴: the plus-direction zero sits at a1 ≈ 0.157.
        let g = p.gradient_number(5e-4).unwrap();
        let a1 = PhysParams::a_minus(g);
        assert!((a1 - 0.157).abs() < 1e-3);
        assert_eq!(a_flux_coefficient(&p, 5e-4, a1, 1.0), 0.0);
        assert!(a_flux_coefficient(&p, 5e-4, a1 - 0.01, 1.0) > 0.0);
        assert!(a_flux_coefficient(&p, 5e-4, a1 + 0.01, 1.0) < 0.0);
    }

    #[test]
    fn grid_edges_hit_anchors_exactly() {
        let p = PhysParams::default();
        let g = p.gradient_number(5e-4).unwrap();
        let edges = clustered_a_edges(&p, 5e-4, 256, 1.05).unwrap();
        assert_eq!(edges[0], 0.0);
        assert_eq!(*edges.last().unwrap(), 1.0);
        assert_eq!(edges.len(), 257);
        assert!(edges.windows(2).all(|w| w[1] > w[0]));
        assert!(edges.contains(&PhysParams::a_minus(g)));
        assert!(edges.contains(&PhysParams::a_plus(g)));
    }

    #[test]
    fn mass_conserved_and_positive_on_scrambled_data() {
        let grid = GridSpec { nx: 24, na: 96, cluster_ratio: 1.05 };
        let mut f = field(1e-3, &grid, 0.1);
        f.set_from(|x, a| scrambled((x * 10.0) as usize, (a * 1000.0) as usize)).unwrap();
        let dt = 0.5 * f.max_stable_dt();
        let mut prev = f.mass();
        assert!((prev - 1.0).abs() < 1e-14);
        for _ in 0..300 {
            f.advance(dt).unwrap();
            let m = f.mass();
            assert!(
                ((m - prev) / prev).abs() <= 1e-12,
                "mass drifted by {:.3e} in one step",
                (m - prev) / prev
            );
            prev = m;
        }
        assert!(f.min_value() >= 0.0);
    }

    #[test]
    fn cfl_violation_is_an_error() {
        let grid = GridSpec { nx: 16, na: 64, cluster_ratio: 1.0 };
        let mut f = field(1e-3, &grid, 0.1);
        let too_big = 2.1 * f.max_stable_dt();
        assert!(f.advance(too_big).is_err());
        assert!(f.advance(-0.1).is_err());
        assert!(f.advance(0.9 * f.max_stable_dt()).is_ok());
    }

    #[test]
    fn unbiased_delta_funnels_to_set_point() {
        let grid = GridSpec { nx: 4, na: 128, cluster_ratio: 1.02 };
        let mut f = field(0.0, &grid, 0.1);
        f.set_from(|_, a| {
            let w = (-(a - 0.3_f64).powi(2) / (2.0 * 0.01_f64.powi(2))).exp();
            (w, w)
        })
        .unwrap();
        let dt = 0.5 * f.max_stable_dt();
        let mean_a = |f: &KineticField| {
            let (mp, mm) = f.marginal_masses();
            f.a_centers()
                .iter()
                .enumerate()
                .map(|(j, &a)| a * (mp[j] + mm[j]))
                .sum::<f64>()
        };
        let mut prev = mean_a(&f);
        assert!((prev - 0.3).abs() < 0.01);
        let mut last_change = f64::INFINITY;
        for _ in 0..40 {
            for _ in 0..200 {
                f.advance(dt).unwrap();
            }
            let m = mean_a(&f);
            let change = m - prev;
            assert!(change > -1e-12, "mean activity moved away from the set point");
            assert!(change < last_change + 1e-12, "approach should slow, not oscillate");
            last_change = change;
            prev = m;
        }
        // The set point is a cell edge with zero flux, so the funnelled mass
        // piles into the cell just below it: within one cell width of 1/2.
        let j_mid = f.a_edges.partition_point(|&e| e < 0.5) - 1;
        assert!((prev - 0.5).abs() <= f.da[j_mid], "mean a = {prev}");
    }

    #[test]
    fn symmetric_data_keeps_directions_identical() {
        let grid = GridSpec { nx: 8, na: 64, cluster_ratio: 1.0 };
        let mut f = field(0.0, &grid, 0.2);
        f.set_from(|_, a| {
            let w = 1.0 + 0.3 * (6.0 * a).sin();
            (w, w)
        })
        .unwrap();
        let dt = 0.7 * f.max_stable_dt();
        for _ in 0..100 {
            f.advance(dt).unwrap();
        }
        let (mp, mm) = f.marginal_masses();
        assert_eq!(mp, mm);
    }

    #[test]
    fn projected_closure_is_discretely_stationary() {
        let p = PhysParams::default();
        let env = Environment::with_bounds(1e-3, 0.0, 100.0).unwrap();
        let prof = ClosureProfile::compute(&p, 1e-3).unwrap();
        let grid = GridSpec { nx: 4, na: 384, cluster_ratio: 1.03 };
        let mut f = KineticField::new(&p, &env, 0.1, 0.0, 1.0, &grid).unwrap();
        f.project_closure(&prof).unwrap();
        assert!((f.mass() - 1.0).abs() < 1e-10);

        let dt = 0.5 * f.max_stable_dt();
        let q0 = (f.qplus.clone(), f.qminus.clone());
        f.advance(dt).unwrap();
        // First-step L¹ rate = discrete residual of the projected profile
        // (grid truncation); the drift over a long run must stay of that
        // order rather than accumulate.
        let l1_rate = |f: &KineticField, q: &(Vec<f64>, Vec<f64>), t: f64| {
            let na = f.na();
            let mut d = 0.0;
            for i in 0..f.nx {
                for j in 0..na {
                    d += ((f.qplus[i * na + j] - q.0[i * na + j]).abs()
                        + (f.qminus[i * na + j] - q.1[i * na + j]).abs())
                        * f.da[j];
                }
            }
            0.5 * d * f.dx / t
        };
        let truncation = l1_rate(&f, &q0, dt);
        let horizon = 400;
        for _ in 0..horizon - 1 {
            f.advance(dt).unwrap();
        }
        let late = l1_rate(&f, &q0, horizon as f64 * dt);
        assert!(
            late <= 10.0 * truncation,
            "late drift rate {late:.3e} vs truncation estimate {truncation:.3e}"
        );
    }

    #[test]
    fn steady_marginals_self_converge_to_closure() {
        let p = PhysParams::default();
        let env = Environment::with_bounds(1e-3, 0.0, 100.0).unwrap();
        let prof = ClosureProfile::compute(&p, 1e-3).unwrap();
        let rescale = |m: &[f64]| {
            let s: f64 = m.iter().sum();
            m.iter().map(|v| v / s).collect::<Vec<f64>>()
        };
        let ref_edges = closure_edges(&prof, 1024);
        let (cp, cm) = prof.bin_masses(&ref_edges).unwrap();
        let ref_p = Distribution1D::from_histogram(&ref_edges, &rescale(&cp)).unwrap();
        let ref_m = Distribution1D::from_histogram(&ref_edges, &rescale(&cm)).unwrap();

        let mut errs = Vec::new();
        for na in [128, 256, 512] {
            // Uniform spacing isolates the scheme's first-order behaviour
            // from grid-layout effects.
            let grid = GridSpec { nx: 2, na, cluster_ratio: 1.0 };
            let mut f = KineticField::new(&p, &env, 0.05, 0.0, 1.0, &grid).unwrap();
            let report = f
                .run_to_steady(0.5 * f.max_stable_dt(), 1e-8, 200, 5_000_000)
                .unwrap();
            assert!(report.converged, "no steady state at na={na}: {report:?}");
            // Joint-normalised marginals: renormalise each direction to a
            // probability distribution before comparing.
            let (mp, mm) = f.marginal_masses();
            let sim_p = Distribution1D::from_histogram(f.a_edges(), &rescale(&mp)).unwrap();
            let sim_m = Distribution1D::from_histogram(f.a_edges(), &rescale(&mm)).unwrap();
            errs.push(wasserstein1(&sim_p, &ref_p).max(wasserstein1(&sim_m, &ref_m)));
        }
        // First-order scheme: each grid doubling should shrink the distance
        // by close to 2×; demand at least 1.5× and a small absolute error on
        // the finest grid.
        assert!(
            errs[0] / errs[1] >= 1.5 && errs[1] / errs[2] >= 1.5,
            "W1 sequence {errs:?}"
        );
        assert!(errs[2] <= 0.012, "finest-grid W1 {:.4}", errs[2]);
    }

    fn closure_edges(prof: &ClosureProfile, n: usize) -> Vec<f64> {
        let (lo, hi) = prof.support();
        (0..=n).map(|k| lo + (hi - lo) * k as f64 / n as f64).collect()
    }

    #[test]
    fn confined_support_leaks_nothing() {
        let p = PhysParams::default();
        let g = p.gradient_number(5e-4).unwrap();
        let (a1, a2) = (PhysParams::a_minus(g), PhysParams::a_plus(g));
        let env = Environment::with_bounds(5e-4, 0.0, 100.0).unwrap();
        let grid = GridSpec { nx: 8, na: 192, cluster_ratio: 1.02 };
        let mut f = KineticField::new(&p, &env, 0.1, 0.0, 1.0, &grid).unwrap();
        let mid = 0.5 * (a1 + a2);
        let width = 0.2 * (a2 - a1);
        f.set_from(|_, a| {
            if a <= a1 || a >= a2 {
                return (0.0, 0.0);
            }
            let w = (-(a - mid).powi(2) / (2.0 * width * width)).exp();
            (w, w)
        })
        .unwrap();
        assert!(f.mass_outside(a1, a2, 0) < 1e-15);
        let dt = 0.5 * f.max_stable_dt();
        for _ in 0..2000 {
            f.advance(dt).unwrap();
        }
        assert!(f.mass_outside(a1, a2, 2) <= 1e-10);
    }

    #[test]
    fn exact_shift_transport_revolves_cleanly() {
        // Suppress tumbling and adaptation so a full revolution at CFL = 1
        // must reproduce the initial spatial profile.
        let p = PhysParams { z0: 0.0, h: 64.0, k_r: 1e-12, ..PhysParams::default() };
        let env = Environment::with_bounds(0.0, 0.0, 64.0).unwrap();
        let grid = GridSpec { nx: 32, na: 32, cluster_ratio: 1.0 };
        let mut f = KineticField::new(&p, &env, 1.0, 0.0, 1.0, &grid).unwrap();
        f.set_from(|x, a| {
            let w = (-(x - 20.0_f64).powi(2) / 18.0).exp();
            // All mass below the set point, where Z ≈ 0.
            let cut = if (a - 0.25).abs() < 0.1 { 1.0 } else { 0.0 };
            (w * cut, w * cut)
        })
        .unwrap();
        let rho0 = f.density();
        let dt = f.dx / p.v0;
        for _ in 0..32 {
            f.advance(dt).unwrap();
        }
        let rho1 = f.density();
        let l1: f64 = rho0
            .iter()
            .zip(&rho1)
            .map(|(a, b)| (a - b).abs() * f.dx)
            .sum();
        assert!(l1 <= 1e-9, "revolution L1 error {l1:.3e}");
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| {
                let grid = GridSpec { nx: 16, na: 80, cluster_ratio: 1.04 };
                let mut f = field(1e-3, &grid, 0.1);
                f.set_from(|x, a| scrambled(x as usize, (a * 500.0) as usize)).unwrap();
                let dt = 0.6 * f.max_stable_dt();
                for _ in 0..50 {
                    f.advance(dt).unwrap();
                }
                let bits: Vec<u64> = f.qplus.iter().map(|v| v.to_bits()).collect();
                bits
            })
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn marginals_and_density_normalise() {
        let grid = GridSpec { nx: 12, na: 64, cluster_ratio: 1.05 };
        let mut f = field(1e-3, &grid, 0.1);
        f.set_from(|x, a| scrambled(x as usize, (a * 300.0) as usize)).unwrap();
        let (mp, mm) = f.marginal_masses();
        let total: f64 = mp.iter().chain(&mm).sum();
        assert!((total - 1.0).abs() < 1e-12);
        let rho = f.density();
        let sum: f64 = rho.iter().map(|r| r * f.dx()).sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }
}
