//! Physical parameters, signal field, and the internal-state response maps.
//!
//! A cell at position `x` in an exponential ligand profile `S(x) = S0·e^{G x}`
//! carries a methylation level `m`. Receptor free energy combines the two:
//!
//! ```text
//! E(m, S) = -alpha0 * (m - M(S)),      M(S) = m0 + ln(S / KI) / alpha0,
//! a(m, S) = 1 / (1 + exp(N * E)),
//! ```
//!
//! so `M(S)` is the methylation level that centres the activity at 1/2 and
//! `dM/dx = G / alpha0` is constant in an exponential profile. Activity feeds
//! two rates: adaptation `F(a) = kR (1 - a/a0)` pulling `a` back to its set
//! point, and tumbling `Z(a) = z0 + (1/tau0) (a/a0)^H` ending straight runs.
//!
//! The single dimensionless group `g = (v0/kR) (G/alpha0)` measures gradient
//! steepness against adaptation speed and selects the qualitative regime, from
//! full-support activity distributions (`g > 1`) down to the drift–diffusion
//! limit (`g ≤ 0.01`).

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Cell-level parameters. Defaults are the standard wild-type set used by all
/// built-in experiments; every field can be overridden from a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysParams {
    /// Run speed projected on one dimension (µm/s).
    pub v0: f64,
    /// Methylation (adaptation) rate constant (1/s).
    pub k_r: f64,
    /// Adapted activity set point.
    pub a0: f64,
    /// Free-energy change per methylation unit.
    pub alpha0: f64,
    /// Baseline tumbling rate (1/s).
    pub z0: f64,
    /// Tumbling time scale entering the activity-dependent part (s).
    pub tau0: f64,
    /// Hill exponent of tumbling vs. activity.
    pub h: f64,
    /// Dissociation constant of the inactive receptor (µM).
    pub k_i: f64,
    /// Dissociation constant of the active receptor (µM).
    pub k_a: f64,
    /// Ligand concentration at x = 0 (µM).
    pub s0: f64,
    /// Receptor gain (number of cooperative units).
    pub n: f64,
    /// Reference methylation level; observables must not depend on it.
    pub m0: f64,
}

impl Default for PhysParams {
    fn default() -> Self {
        PhysParams {
            v0: 16.5 / std::f64::consts::SQRT_2,
            k_r: 0.005,
            a0: 0.5,
            alpha0: 1.7,
            z0: 0.14,
            tau0: 0.8,
            h: 10.0,
            k_i: 18.2,
            k_a: 3000.0,
            s0: 4.0 * 18.2,
            n: 6.0,
            m0: 1.0,
        }
    }
}

impl PhysParams {
    /// Checks positivity and ordering constraints. Called by every solver
    /// entry point, so a bad config fails loudly before any work happens.
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("v0", self.v0),
            ("k_r", self.k_r),
            ("alpha0", self.alpha0),
            ("tau0", self.tau0),
            ("k_i", self.k_i),
            ("k_a", self.k_a),
            ("s0", self.s0),
            ("n", self.n),
        ];
        for (name, value) in positive {
            if !(value > 0.0) || !value.is_finite() {
                return Err(Error::Config(format!("{name} must be positive, got {value}")));
            }
        }
        if !(self.z0 >= 0.0) || !self.z0.is_finite() {
            return Err(Error::Config(format!("z0 must be >= 0, got {}", self.z0)));
        }
        if !(self.a0 > 0.0 && self.a0 < 1.0) {
            return Err(Error::Config(format!("a0 must lie in (0,1), got {}", self.a0)));
        }
        if !(self.h >= 1.0) {
            return Err(Error::Config(format!("h must be >= 1, got {}", self.h)));
        }
        if !(self.k_i < self.k_a) {
            return Err(Error::Config(format!(
                "k_i must be below k_a, got k_i={} k_a={}",
                self.k_i, self.k_a
            )));
        }
        if !self.m0.is_finite() {
            return Err(Error::Config("m0 must be finite".into()));
        }
        Ok(())
    }

    /// Methylation level at which the activity equals 1/2 for signal `s`.
    pub fn preferred_methylation(&self, s: f64) -> Result<f64> {
        if !(s > 0.0) {
            return Err(Error::Domain(format!(
                "preferred methylation needs a positive concentration, got {s}"
            )));
        }
        Ok(self.m0 + (s / self.k_i).ln() / self.alpha0)
    }

    /// Receptor activity `a(m, S) ∈ (0, 1)`.
    pub fn activity(&self, m: f64, s: f64) -> Result<f64> {
        let m_star = self.preferred_methylation(s)?;
        Ok(self.activity_from_offset(m - m_star))
    }

    /// Activity as a function of `m - M(S)` alone; the hot-loop form, since
    /// in an exponential profile the offset is linear in `x` and needs no log.
    #[inline]
    pub fn activity_from_offset(&self, m_minus_mstar: f64) -> f64 {
        let e = -self.alpha0 * m_minus_mstar;
        let a = 1.0 / (1.0 + (self.n * e).exp());
        // Clamp into the open interval so rate and log expressions downstream
        // stay finite even for saturating inputs.
        a.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
    }

    /// Tumbling rate `Z(a) = z0 + (1/tau0)·(a/a0)^H` (1/s), for `a ∈ [0, 1]`.
    #[inline]
    pub fn tumbling_rate(&self, a: f64) -> f64 {
        debug_assert!((0.0..=1.0).contains(&a), "activity out of [0,1]: {a}");
        self.z0 + powf_fast(a / self.a0, self.h) / self.tau0
    }

    /// Derivative `Z'(a)` (1/s).
    #[inline]
    pub fn tumbling_rate_deriv(&self, a: f64) -> f64 {
        self.h / (self.tau0 * self.a0) * powf_fast(a / self.a0, self.h - 1.0)
    }

    /// Methylation drift `F(a) = kR (1 - a/a0)` (1/s).
    #[inline]
    pub fn adaptation_rate(&self, a: f64) -> f64 {
        self.k_r * (1.0 - a / self.a0)
    }

    /// Dimensionless gradient strength `g = (v0/kR)·(G/alpha0)` for `G ≥ 0`.
    pub fn gradient_number(&self, g_spatial: f64) -> Result<f64> {
        if !(g_spatial >= 0.0) || !g_spatial.is_finite() {
            return Err(Error::Domain(format!(
                "gradient must be finite and >= 0, got {g_spatial}"
            )));
        }
        Ok((self.v0 / self.k_r) * (g_spatial / self.alpha0))
    }

    /// Lower activity fixed point `a1 = (1 - g)/2` of up-moving cells.
    /// Negative when `g > 1`.
    #[inline]
    pub fn a_minus(g: f64) -> f64 {
        0.5 - 0.5 * g
    }

    /// Upper activity fixed point `a2 = 1 - a1` of down-moving cells.
    #[inline]
    pub fn a_plus(g: f64) -> f64 {
        1.0 - Self::a_minus(g)
    }

    /// Domain `[x_min, x_max]` on which the signal stays inside the receptors'
    /// log-sensing band `5·KI < S ≤ KA/5`. Requires `G > 0`.
    pub fn domain_bounds(&self, g_spatial: f64) -> Result<(f64, f64)> {
        if !(g_spatial > 0.0) || !g_spatial.is_finite() {
            return Err(Error::Domain(format!(
                "domain bounds need a positive gradient, got {g_spatial}"
            )));
        }
        let x_min = (5.0 * self.k_i / self.s0).ln() / g_spatial;
        let x_max = (self.k_a / (5.0 * self.s0)).ln() / g_spatial;
        if !(x_min < x_max) {
            return Err(Error::Config(format!(
                "sensing band is empty for s0={} (k_i={}, k_a={})",
                self.s0, self.k_i, self.k_a
            )));
        }
        Ok((x_min, x_max))
    }
}

/// `x^p` with a fast path for non-negative integer exponents (the default
/// Hill exponent is 10, and `powi` beats `powf` by a wide margin in the
/// agent loop).
#[inline]
fn powf_fast(x: f64, p: f64) -> f64 {
    if p.fract() == 0.0 && (0.0..=64.0).contains(&p) {
        x.powi(p as i32)
    } else {
        x.powf(p)
    }
}

/// Exponential signal profile on a periodic interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    /// Spatial log-slope `G` of the signal (1/µm); `G ≥ 0`.
    pub g_spatial: f64,
    /// Left edge of the periodic domain (µm).
    pub x_min: f64,
    /// Right edge of the periodic domain (µm).
    pub x_max: f64,
}

impl Environment {
    /// Domain sized so the signal spans exactly the log-sensing band.
    pub fn for_gradient(p: &PhysParams, g_spatial: f64) -> Result<Self> {
        let (x_min, x_max) = p.domain_bounds(g_spatial)?;
        Ok(Environment { g_spatial, x_min, x_max })
    }

    /// Explicit domain; the only option for `G = 0`.
    pub fn with_bounds(g_spatial: f64, x_min: f64, x_max: f64) -> Result<Self> {
        if !(g_spatial >= 0.0) || !g_spatial.is_finite() {
            return Err(Error::Domain(format!(
                "gradient must be finite and >= 0, got {g_spatial}"
            )));
        }
        if !(x_min < x_max) || !x_min.is_finite() || !x_max.is_finite() {
            return Err(Error::Config(format!(
                "domain must satisfy x_min < x_max, got [{x_min}, {x_max}]"
            )));
        }
        Ok(Environment { g_spatial, x_min, x_max })
    }

    /// Domain length (µm).
    #[inline]
    pub fn length(&self) -> f64 {
        self.x_max - self.x_min
    }

    /// Signal concentration `S(x) = S0·e^{G x}` (µM).
    #[inline]
    pub fn signal(&self, p: &PhysParams, x: f64) -> f64 {
        p.s0 * (self.g_spatial * x).exp()
    }

    /// Preferred methylation at position `x`, computed in the linear form
    /// `M(x) = m0 + (ln(S0/KI) + G·x)/alpha0` (no exponential round trip).
    #[inline]
    pub fn preferred_methylation(&self, p: &PhysParams, x: f64) -> f64 {
        p.m0 + ((p.s0 / p.k_i).ln() + self.g_spatial * x) / p.alpha0
    }

    /// Wraps `x` into `[x_min, x_max)`.
    #[inline]
    pub fn wrap(&self, x: f64) -> f64 {
        let len = self.length();
        let mut y = x;
        if y >= self.x_max {
            y -= len;
            if y >= self.x_max {
                y = self.x_min + (y - self.x_min).rem_euclid(len);
            }
        } else if y < self.x_min {
            y += len;
            if y < self.x_min {
                y = self.x_min + (y - self.x_min).rem_euclid(len);
            }
        }
        y
    }
}

/// Qualitative dynamical regime selected by the gradient strength `g`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    /// `g > 1`: activity distributions supported on all of (0, 1).
    CaseISupercritical,
    /// `0.1 < g ≤ 1`: support pinched to `[a1, a2]`.
    CaseISubcritical,
    /// `0.01 < g ≤ 0.1`: weak gradient, advective limit.
    CaseIIHyperbolic,
    /// `0 < g ≤ 0.01`: weakest gradients, drift–diffusion limit.
    CaseIIKellerSegel,
    /// `g = 0`: no gradient, unbiased motion.
    Unbiased,
}

impl Regime {
    /// Short lowercase label used in reports and CSV columns.
    pub fn label(self) -> &'static str {
        match self {
            Regime::CaseISupercritical => "case1_supercritical",
            Regime::CaseISubcritical => "case1_subcritical",
            Regime::CaseIIHyperbolic => "case2_hyperbolic",
            Regime::CaseIIKellerSegel => "case2_keller_segel",
            Regime::Unbiased => "unbiased",
        }
    }
}

/// Classifies by thresholds on `g` (half-open from above: a boundary value
/// belongs to the weaker regime). When the caller knows the scaling exponent
/// `mu` of a weak-gradient setup, `mu_hint` overrides the split between the
/// two Case II variants: `mu ≥ 1` means drift–diffusion scaling.
pub fn classify_regime(g: f64, mu_hint: Option<f64>) -> Result<Regime> {
    if !(g >= 0.0) || !g.is_finite() {
        return Err(Error::Domain(format!("gradient number must be >= 0, got {g}")));
    }
    let regime = if g > 1.0 {
        Regime::CaseISupercritical
    } else if g > 0.1 {
        Regime::CaseISubcritical
    } else if g > 0.0 {
        match mu_hint {
            Some(mu) => {
                if mu >= 1.0 {
                    Regime::CaseIIKellerSegel
                } else {
                    Regime::CaseIIHyperbolic
                }
            }
            None => {
                if g > 0.01 {
                    Regime::CaseIIHyperbolic
                } else {
                    Regime::CaseIIKellerSegel
                }
            }
        }
    } else {
        Regime::Unbiased
    };
    Ok(regime)
}
