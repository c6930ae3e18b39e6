//! Stationary activity distributions of up- and down-moving cells, and the
//! drift/diffusion coefficients they induce.
//!
//! With `a1 = (1-g)/2`, `a2 = (1+g)/2` the stationary distributions of the
//! two swim directions solve the coupled first-order system
//!
//! ```text
//! a(1-a) d/da[(a1 - a) Q+] = Z(a)/(4 N alpha0 kR) · (Q- - Q+),
//! a(1-a) d/da[(a2 - a) Q-] = Z(a)/(4 N alpha0 kR) · (Q+ - Q-),
//! ```
//!
//! whose solution is explicit up to one scalar quadrature:
//!
//! ```text
//! Q+(a) = c0 (1/2 - a1)/(a - a1) · e^{W(a)},
//! Q-(a) = c0 (1/2 - a1)/(a2 - a) · e^{W(a)},
//! W(a)  = 1/(4 N alpha0 kR) ∫_{1/2}^{a} Z(t)(2t-1) / [t(1-t)(a1-t)(a2-t)] dt.
//! ```
//!
//! The integrand has simple poles exactly at the support endpoints (0 and 1
//! for `g > 1`, `a1` and `a2` for `0 < g < 1`), with coefficients equal to the
//! boundary exponents below. We subtract these poles analytically, integrate
//! the smooth remainder adaptively, and restore closed-form logarithms, so
//! `W` — and with it the densities — is accurate arbitrarily close to the
//! endpoints. All integrals of the density (normalisation, drift speed, bin
//! masses) treat the endpoint power laws `(distance)^{theta-1}` by an exact
//! change of variables rather than brute-force refinement.
//!
//! Densities are reported with the weight applied, i.e. as
//! `dens±(a) = Q±(a) / (2 N alpha0 a(1-a))`, so that
//! `∫ (dens+ + dens-) da = 1` and the two integrals are the fractions of
//! cells moving in each direction.

use serde::Serialize;

use crate::params::{classify_regime, PhysParams, Regime};
use crate::quad;
use crate::{Error, Result};

/// Numerical knobs for building a [`ClosureProfile`].
#[derive(Debug, Clone)]
pub struct ClosureOptions {
    /// Number of output grid nodes across the support.
    pub grid_nodes: usize,
    /// Requested growth ratio of consecutive node spacings away from the
    /// endpoints; tightened automatically if the node count cannot fit
    /// between the floating-point floor and the support half-width.
    pub cluster_ratio: f64,
    /// Relative tolerance of all adaptive quadratures.
    pub rel_tol: f64,
    /// Absolute tolerance floor of all adaptive quadratures.
    pub abs_tol: f64,
}

impl Default for ClosureOptions {
    fn default() -> Self {
        ClosureOptions {
            grid_nodes: 2048,
            cluster_ratio: 1.05,
            rel_tol: 1e-10,
            abs_tol: 1e-13,
        }
    }
}

/// Power-law exponents of the total stationary density at the support edges:
/// `dens(a) ~ (a - left_edge)^{at_left - 1}` as `a -> left_edge`, and
/// symmetrically on the right. These same constants are the residues of the
/// `W`-integrand's endpoint poles.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BoundaryExponents {
    pub left_edge: f64,
    pub right_edge: f64,
    pub at_left: f64,
    pub at_right: f64,
}

/// Exponents for gradient number `g`; requires `0 < g`, `g != 1`.
pub fn boundary_exponents(p: &PhysParams, g: f64) -> Result<BoundaryExponents> {
    p.validate()?;
    if !(g > 0.0) || !g.is_finite() {
        return Err(Error::Domain(format!(
            "boundary exponents need g > 0, got {g} (g = 0 has a point support)"
        )));
    }
    if g == 1.0 {
        return Err(Error::Singular(
            "g = 1: lower support edge degenerates to a = 0".into(),
        ));
    }
    let a1 = PhysParams::a_minus(g);
    let a2 = PhysParams::a_plus(g);
    let scale = 0.25 / (p.n * p.alpha0 * p.k_r);
    if g > 1.0 {
        Ok(BoundaryExponents {
            left_edge: 0.0,
            right_edge: 1.0,
            // Z(0) = z0 exactly; a1·a2 < 0 makes this positive.
            at_left: -p.z0 * scale / (a1 * a2),
            at_right: p.tumbling_rate(1.0) * scale / ((1.0 - a1) * (a2 - 1.0)),
        })
    } else {
        Ok(BoundaryExponents {
            left_edge: a1,
            right_edge: a2,
            at_left: p.tumbling_rate(a1) * scale / (a1 * (1.0 - a1)),
            at_right: p.tumbling_rate(a2) * scale / (a2 * (1.0 - a2)),
        })
    }
}

/// Stationary two-direction activity profile for a fixed gradient.
#[derive(Debug, Clone)]
pub struct ClosureProfile {
    pub params: PhysParams,
    /// Spatial log-slope `G` (1/µm).
    pub g_spatial: f64,
    /// Gradient number `g`.
    pub g: f64,
    pub regime: Regime,
    pub exponents: BoundaryExponents,
    /// Normalisation constant of `Q±`.
    pub c0: f64,
    /// Population drift speed (µm/s, positive up-gradient).
    pub kappa: f64,
    /// Fractions of cells moving up/down gradient; sum to 1.
    pub frac_plus: f64,
    pub frac_minus: f64,
    /// Output nodes, strictly inside the support, clustered at its edges.
    pub a_grid: Vec<f64>,
    /// `Q+ / (2 N alpha0 a(1-a))` at the grid nodes.
    pub density_plus: Vec<f64>,
    /// `Q- / (2 N alpha0 a(1-a))` at the grid nodes.
    pub density_minus: Vec<f64>,

    a1: f64,
    a2: f64,
    scale: f64,
    /// Overall factor such that `dens+ + dens- = kc · u(a)`.
    kc: f64,
    /// Cached cumulative integral of the pole-subtracted integrand.
    r_nodes: Vec<f64>,
    r_cum: Vec<f64>,
}

impl ClosureProfile {
    /// Builds the profile with default numerical options.
    pub fn compute(p: &PhysParams, g_spatial: f64) -> Result<Self> {
        Self::compute_with(p, g_spatial, &ClosureOptions::default())
    }

    pub fn compute_with(p: &PhysParams, g_spatial: f64, opts: &ClosureOptions) -> Result<Self> {
        p.validate()?;
        let g = p.gradient_number(g_spatial)?;
        if g == 0.0 {
            return Err(Error::Singular(
                "g = 0 concentrates on a single point; use delta_closure".into(),
            ));
        }
        let exponents = boundary_exponents(p, g)?;
        if opts.grid_nodes < 16 {
            return Err(Error::Config(format!(
                "need at least 16 grid nodes, got {}",
                opts.grid_nodes
            )));
        }
        if !(opts.cluster_ratio > 1.0) {
            return Err(Error::Config(format!(
                "cluster ratio must exceed 1, got {}",
                opts.cluster_ratio
            )));
        }
        let regime = classify_regime(g, None)?;
        let a1 = PhysParams::a_minus(g);
        let a2 = PhysParams::a_plus(g);
        let scale = 0.25 / (p.n * p.alpha0 * p.k_r);

        let mut profile = ClosureProfile {
            params: p.clone(),
            g_spatial,
            g,
            regime,
            exponents,
            c0: f64::NAN,
            kappa: f64::NAN,
            frac_plus: f64::NAN,
            frac_minus: f64::NAN,
            a_grid: build_grid(
                exponents.left_edge,
                exponents.right_edge,
                opts.grid_nodes,
                opts.cluster_ratio,
            ),
            density_plus: Vec::new(),
            density_minus: Vec::new(),
            a1,
            a2,
            scale,
            kc: 1.0,
            r_nodes: Vec::new(),
            r_cum: Vec::new(),
        };
        profile.build_r_cache(opts)?;

        // Normalise: dens+ + dens- = kc·u with ∫(dens+ + dens-) da = 1.
        let total = profile.weighted_integral(|_| 1.0, opts)?;
        if !(total.is_finite() && total > 0.0) {
            return Err(Error::Numerical(format!(
                "normalisation integral came out as {total}"
            )));
        }
        profile.kc = 1.0 / total;
        // kc = c0 (1/2 - a1)(a2 - a1) / (2 N alpha0).
        profile.c0 =
            profile.kc * 2.0 * p.n * p.alpha0 / ((0.5 - a1) * (a2 - a1));

        // Drift speed as a ratio of integrals; the denominator is the
        // normalisation, so this stays correct even if kc drifts slightly.
        let odd = profile.weighted_integral(|a| 1.0 - 2.0 * a, opts)?;
        profile.kappa = p.v0 * odd / ((a2 - a1) * total);

        let plus = profile.weighted_integral(|a| a2 - a, opts)?;
        profile.frac_plus = profile.kc * plus / (a2 - a1);
        let minus = profile.weighted_integral(|a| a - a1, opts)?;
        profile.frac_minus = profile.kc * minus / (a2 - a1);

        profile.density_plus = profile
            .a_grid
            .iter()
            .map(|&a| profile.density_pair_inner(a).0)
            .collect();
        profile.density_minus = profile
            .a_grid
            .iter()
            .map(|&a| profile.density_pair_inner(a).1)
            .collect();
        Ok(profile)
    }

    /// Support interval of the activity distribution.
    pub fn support(&self) -> (f64, f64) {
        (self.exponents.left_edge, self.exponents.right_edge)
    }

    /// The log-weight `W(a)`; zero at `a = 1/2`, decreasing toward both
    /// support edges. Errors outside the open support.
    pub fn log_weight(&self, a: f64) -> Result<f64> {
        let (lo, hi) = self.support();
        if !(a > lo && a < hi) {
            return Err(Error::Domain(format!(
                "log weight defined on the open support ({lo}, {hi}), got {a}"
            )));
        }
        Ok(self.w_decomposed(a))
    }

    /// Per-direction densities `(dens+, dens-)` at `a` (jointly normalised).
    pub fn density_pair(&self, a: f64) -> Result<(f64, f64)> {
        let (lo, hi) = self.support();
        if !(a > lo && a < hi) {
            return Err(Error::Domain(format!(
                "density defined on the open support ({lo}, {hi}), got {a}"
            )));
        }
        Ok(self.density_pair_inner(a))
    }

    /// Per-direction masses over consecutive bins `edges` (joint convention:
    /// plus-masses over the whole support sum to `frac_plus`). Edges must be
    /// increasing and inside `[left_edge, right_edge]`.
    pub fn bin_masses(&self, edges: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let (lo, hi) = self.support();
        if edges.len() < 2 || edges.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Domain("bin edges must be strictly increasing".into()));
        }
        if edges[0] < lo - 1e-12 * (hi - lo) || *edges.last().unwrap() > hi + 1e-12 * (hi - lo) {
            return Err(Error::Domain(format!(
                "bins [{}, {}] exceed the support [{lo}, {hi}]",
                edges[0],
                edges.last().unwrap()
            )));
        }
        let opts = ClosureOptions::default();
        let mut plus = Vec::with_capacity(edges.len() - 1);
        let mut minus = Vec::with_capacity(edges.len() - 1);
        for w in edges.windows(2) {
            let (b0, b1) = (w[0].max(lo), w[1].min(hi));
            let a2 = self.a2;
            let a1 = self.a1;
            let p = self.ranged_integral(b0, b1, |a| a2 - a, &opts)?;
            let m = self.ranged_integral(b0, b1, |a| a - a1, &opts)?;
            plus.push(self.kc * p / (a2 - a1));
            minus.push(self.kc * m / (a2 - a1));
        }
        Ok((plus, minus))
    }

    // ---- internal machinery -------------------------------------------

    /// Pole-subtracted `W`-integrand; smooth on the closed support.
    fn resid(&self, t: f64) -> f64 {
        let p = &self.params;
        let f = self.scale * p.tumbling_rate(t) * (2.0 * t - 1.0)
            / (t * (1.0 - t) * (self.a1 - t) * (self.a2 - t));
        let e = &self.exponents;
        f - e.at_left / (t - e.left_edge) + e.at_right / (e.right_edge - t)
    }

    /// Closed-form part of `W`: the two endpoint logarithms.
    fn pole_logs(&self, a: f64) -> f64 {
        let e = &self.exponents;
        e.at_left * ((a - e.left_edge) / (0.5 - e.left_edge)).ln()
            + e.at_right * ((e.right_edge - a) / (e.right_edge - 0.5)).ln()
    }

    /// Integrates the pole-subtracted integrand over one short segment.
    ///
    /// Very close to an edge with a large exponent the subtraction leaves
    /// pure cancellation noise, so full precision is unreachable — but there
    /// `e^W` has already underflowed for any conceivable remainder value, so
    /// a loose tolerance is accepted in that (and only that) case.
    fn integrate_resid(&self, from: f64, to: f64, abs_tol: f64, rel_tol: f64) -> Result<f64> {
        match quad::integrate(|t| self.resid(t), from, to, abs_tol, rel_tol) {
            Ok(v) => Ok(v),
            Err(err) => {
                if self.pole_logs(from) < -700.0 && self.pole_logs(to) < -700.0 {
                    quad::integrate(|t| self.resid(t), from, to, 1e-8, 1e-5).map_err(|_| err)
                } else {
                    Err(err)
                }
            }
        }
    }

    /// `W(a)` from its decomposition: exact endpoint logarithms plus the
    /// cached smooth remainder.
    fn w_decomposed(&self, a: f64) -> f64 {
        self.pole_logs(a) + self.r_at(a)
    }

    fn build_r_cache(&mut self, opts: &ClosureOptions) -> Result<()> {
        let mut nodes = self.a_grid.clone();
        let anchor = 0.5;
        if nodes.binary_search_by(|x| x.total_cmp(&anchor)).is_err() {
            let pos = nodes.partition_point(|&x| x < anchor);
            nodes.insert(pos, anchor);
        }
        let idx0 = nodes.binary_search_by(|x| x.total_cmp(&anchor)).unwrap();
        let mut cum = vec![0.0; nodes.len()];
        // Per-segment absolute tolerance; even with ~2000 segments the
        // accumulated bound stays far below the 1e-8 target on W.
        let seg_tol = opts.abs_tol;
        for j in idx0..nodes.len() - 1 {
            let seg = self.integrate_resid(nodes[j], nodes[j + 1], seg_tol, opts.rel_tol)?;
            cum[j + 1] = cum[j] + seg;
        }
        for j in (0..idx0).rev() {
            let seg = self.integrate_resid(nodes[j], nodes[j + 1], seg_tol, opts.rel_tol)?;
            cum[j] = cum[j + 1] - seg;
        }
        self.r_nodes = nodes;
        self.r_cum = cum;
        Ok(())
    }

    /// Smooth remainder `R(a) = ∫_{1/2}^a resid`; cache plus a short top-up.
    fn r_at(&self, a: f64) -> f64 {
        let nodes = &self.r_nodes;
        let idx = nodes.partition_point(|&x| x <= a);
        let (base_idx, base) = if idx == 0 {
            (0, self.r_cum[0])
        } else {
            (idx - 1, self.r_cum[idx - 1])
        };
        let from = nodes[base_idx];
        if from == a {
            return base;
        }
        // One short smooth segment beyond the nearest cached node.
        base + self.integrate_resid(from, a, 1e-13, 1e-10).unwrap_or(f64::NAN)
    }

    fn density_pair_inner(&self, a: f64) -> (f64, f64) {
        let lnu = self.ln_u(a);
        let common = self.kc / (self.a2 - self.a1);
        let dp = common * (self.a2 - a) * lnu.exp();
        let dm = common * (a - self.a1) * lnu.exp();
        (dp, dm)
    }

    /// `ln u(a)` with `u = e^W / [a(1-a)(a-a1)(a2-a)]`.
    fn ln_u(&self, a: f64) -> f64 {
        self.w_decomposed(a)
            - a.ln()
            - (1.0 - a).ln()
            - (a - self.a1).ln()
            - (self.a2 - a).ln()
    }

    /// `ln h(a)` where `u(a) = (distance to edge)^{theta-1} · h(a)`; the
    /// edge's own logarithms cancel analytically, so this is stable at any
    /// distance from the endpoint.
    fn ln_edge(&self, a: f64, left: bool) -> f64 {
        let e = &self.exponents;
        if left {
            -e.at_left * (0.5 - e.left_edge).ln()
                + e.at_right * ((e.right_edge - a) / (e.right_edge - 0.5)).ln()
                + self.r_at(a)
                - self.other_distance_logs(a, e.left_edge)
        } else {
            -e.at_right * (e.right_edge - 0.5).ln()
                + e.at_left * ((a - e.left_edge) / (0.5 - e.left_edge)).ln()
                + self.r_at(a)
                - self.other_distance_logs(a, e.right_edge)
        }
    }

    /// Sum of `ln |a - c|` over the four weight roots `{0, 1, a1, a2}`,
    /// skipping the one at the given edge.
    fn other_distance_logs(&self, a: f64, skip: f64) -> f64 {
        let mut s = 0.0;
        for c in [0.0, 1.0, self.a1, self.a2] {
            if c != skip {
                s += (a - c).abs().ln();
            }
        }
        s
    }

    /// `∫ u(a)·w(a) da` over the whole support, endpoint power laws handled
    /// by exact substitution `s = ((a-edge)/delta)^theta`.
    fn weighted_integral<Wt: Fn(f64) -> f64 + Copy>(
        &self,
        w: Wt,
        opts: &ClosureOptions,
    ) -> Result<f64> {
        let (lo, hi) = self.support();
        self.ranged_integral(lo, hi, w, opts)
    }

    /// Same, over `[lo, hi] ⊆ support`, detecting contact with either edge.
    fn ranged_integral<Wt: Fn(f64) -> f64 + Copy>(
        &self,
        lo: f64,
        hi: f64,
        w: Wt,
        opts: &ClosureOptions,
    ) -> Result<f64> {
        let e = &self.exponents;
        let width = e.right_edge - e.left_edge;
        let delta = 0.1 * width;
        let mut total = 0.0;
        let mut bulk_lo = lo;
        let mut bulk_hi = hi;

        // Edge contact within floating-point resolution counts as touching.
        let touches_left = lo - e.left_edge <= 1e-12 * width;
        let touches_right = e.right_edge - hi <= 1e-12 * width;

        if touches_left && hi > e.left_edge + delta {
            total += self.edge_integral(true, delta, w, opts)?;
            bulk_lo = e.left_edge + delta;
        } else if touches_left {
            // Entire range sits inside the left tail.
            return self.edge_piece(true, lo, hi, w, opts);
        }
        if touches_right && lo < e.right_edge - delta {
            total += self.edge_integral(false, delta, w, opts)?;
            bulk_hi = e.right_edge - delta;
        } else if touches_right {
            return self.edge_piece(false, lo, hi, w, opts);
        }

        if bulk_lo < bulk_hi {
            total += quad::integrate(
                |a| self.ln_u(a).exp() * w(a),
                bulk_lo,
                bulk_hi,
                opts.abs_tol,
                opts.rel_tol,
            )?;
        }
        Ok(total)
    }

    /// `∫_{edge}^{edge±delta} u·w da` via `s = (dist/delta)^theta`.
    fn edge_integral<Wt: Fn(f64) -> f64 + Copy>(
        &self,
        left: bool,
        delta: f64,
        w: Wt,
        opts: &ClosureOptions,
    ) -> Result<f64> {
        let e = &self.exponents;
        let (edge, theta) = if left {
            (e.left_edge, e.at_left)
        } else {
            (e.right_edge, e.at_right)
        };
        // Jacobian delta^theta/theta folded into the integrand in log space:
        // for large theta the two factors overflow/underflow separately but
        // their combination is tame.
        let ln_jac = theta * delta.ln() - theta.ln();
        let f = |s: f64| {
            let dist = delta * s.powf(1.0 / theta);
            let a = if left { edge + dist } else { edge - dist };
            (self.ln_edge(a, left) + ln_jac).exp() * w(a)
        };
        quad::integrate(f, 0.0, 1.0, opts.abs_tol, opts.rel_tol)
    }

    /// Tail piece not anchored at distance `delta`: integrate in the
    /// substituted variable between the two mapped endpoints.
    fn edge_piece<Wt: Fn(f64) -> f64 + Copy>(
        &self,
        left: bool,
        lo: f64,
        hi: f64,
        w: Wt,
        opts: &ClosureOptions,
    ) -> Result<f64> {
        let e = &self.exponents;
        let (edge, theta) = if left {
            (e.left_edge, e.at_left)
        } else {
            (e.right_edge, e.at_right)
        };
        let (d0, d1) = if left {
            (lo - edge, hi - edge)
        } else {
            (e.right_edge - hi, e.right_edge - lo)
        };
        let dref = d1; // outer distance of the piece
        if !(dref > 0.0) {
            return Ok(0.0);
        }
        let s0 = (d0 / dref).max(0.0).powf(theta);
        let ln_jac = theta * dref.ln() - theta.ln();
        let f = |s: f64| {
            let dist = dref * s.powf(1.0 / theta);
            let a = if left { edge + dist } else { edge - dist };
            (self.ln_edge(a, left) + ln_jac).exp() * w(a)
        };
        quad::integrate(f, s0, 1.0, opts.abs_tol, opts.rel_tol)
    }
}

/// Output grid: two per-side geometric ladders of distances from the edges,
/// merged at the midpoint. The requested ratio is honoured unless the node
/// count cannot fit above a relative floor of 1e-12, in which case the
/// effective ratio tightens.
fn build_grid(lo: f64, hi: f64, n: usize, ratio: f64) -> Vec<f64> {
    let width = hi - lo;
    let half = 0.5 * width;
    let m = n / 2;
    let d_small = (half * ratio.powi(-(m as i32 - 1))).max(width * 1e-12);
    let mut grid = Vec::with_capacity(2 * m);
    for k in 0..m {
        // Log-spaced distances in [d_small, half].
        let t = if m == 1 { 0.0 } else { k as f64 / (m - 1) as f64 };
        let d = half * (d_small / half).powf(t);
        grid.push(lo + d);
        grid.push(hi - d);
    }
    grid.sort_by(f64::total_cmp);
    grid.dedup_by(|a, b| (*a - *b).abs() <= width * 1e-15);
    grid
}

/// Limiting objects at `g = 0`: the activity distribution collapses onto the
/// set point with equal mass per direction, drift vanishes, and transport is
/// purely diffusive.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DeltaClosure {
    /// Location of the point mass (the activity set point).
    pub atom: f64,
    pub mass_plus: f64,
    pub mass_minus: f64,
    pub drift: f64,
    /// `v0² / Z(a0)` (µm²/s).
    pub diffusion: f64,
}

pub fn delta_closure(p: &PhysParams) -> Result<DeltaClosure> {
    p.validate()?;
    Ok(DeltaClosure {
        atom: p.a0,
        mass_plus: 0.5,
        mass_minus: 0.5,
        drift: 0.0,
        diffusion: p.v0 * p.v0 / p.tumbling_rate(p.a0),
    })
}

/// Transport coefficients of the weak-gradient (drift–diffusion) limit.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct WeakGradientCoefficients {
    /// Diffusion coefficient `v0²/Z(a0)` (µm²/s).
    pub diffusion: f64,
    /// Drift per unit spatial log-slope (µm²/s): multiply by the gradient
    /// (in 1/µm) to get the drift speed. Positive: cells climb the gradient.
    pub drift_per_gradient: f64,
}

/// In the strict scaling limit the drift slope is `(N/4)·v0²·Z'(a0)/Z(a0)²`;
/// at finite adaptation rate the exact closure drift approaches
/// `slope · Z/(Z + N·alpha0·kR/2)` as the gradient vanishes, the extra factor
/// reflecting that activity keeps relaxing between tumbles.
pub fn weak_gradient_coefficients(p: &PhysParams) -> Result<WeakGradientCoefficients> {
    p.validate()?;
    let z = p.tumbling_rate(p.a0);
    // |d(1/Z)/da| at the set point; the drift pushes up-gradient because
    // tumbling decreases where runs point uphill.
    let inv_z_slope = p.tumbling_rate_deriv(p.a0) / (z * z);
    Ok(WeakGradientCoefficients {
        diffusion: p.v0 * p.v0 / z,
        drift_per_gradient: 0.25 * p.n * p.v0 * p.v0 * inv_z_slope,
    })
}
