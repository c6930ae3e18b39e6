//! Agent-based Monte Carlo: run-and-tumble motion coupled to the adaptation
//! pathway.
//!
//! Each agent carries a position, a velocity sign, and a methylation level.
//! Methylation is stored as the offset from the local preferred level
//! `m − M(S(x))`, which is what the activity actually depends on; the
//! absolute level is reconstructed on demand. This makes two contracts
//! structural rather than approximate: the periodic wrap preserves activity
//! exactly (the offset simply does not change), and no observable can
//! depend on the reference level `m0`.
//!
//! Per step, with `a` evaluated once from the pre-step state: methylation
//! moves by explicit Euler `dt·kR(1 − a/a0)`, the position advances
//! ballistically and wraps, and the direction is redrawn uniformly with the
//! exact exponential probability `1 − exp(−Z(a)·dt)`. Multiple tumbles
//! within one step collapse to a single uniform redraw, so the exponential
//! form stays valid even where `Z·dt` is large.
//!
//! Every agent owns one counter-based RNG stream, and ensemble statistics
//! reduce over integer counts, so results are bit-identical for any thread
//! count.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::params::{Environment, PhysParams};
use crate::{Error, Result};

/// Direction counts after one step; the drift estimate is
/// `v0·(n_plus − n_minus)/(n_plus + n_minus)`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DriftSample {
    pub t: f64,
    pub n_plus: u64,
    pub n_minus: u64,
}

impl DriftSample {
    pub fn drift(&self, v0: f64) -> f64 {
        let n = (self.n_plus + self.n_minus) as f64;
        v0 * (self.n_plus as f64 - self.n_minus as f64) / n
    }
}

/// Converged (or partial, on timeout) steady-state drift statistics.
#[derive(Debug, Clone, Serialize)]
pub struct SteadyStats {
    /// Mean drift over the final two windows (µm/s).
    pub drift_mean: f64,
    /// Batch-means standard error of the mean.
    pub drift_stderr: f64,
    /// Simulated seconds elapsed in this call.
    pub elapsed: f64,
    /// Completed averaging windows.
    pub windows: usize,
    pub converged: bool,
}

/// Explicit agent state for custom initial conditions.
#[derive(Debug, Clone, Copy)]
pub struct AgentState {
    pub x: f64,
    /// Velocity sign, ±1.
    pub dir: f64,
    /// Methylation relative to the local preferred level `M(S(x))`.
    pub m_offset: f64,
}

impl AgentState {
    /// From an absolute methylation level.
    pub fn with_methylation(x: f64, dir: f64, m: f64, env: &Environment, p: &PhysParams) -> Self {
        AgentState { x, dir, m_offset: m - env.preferred_methylation(p, x) }
    }
}

/// A population of run-and-tumble agents in a shared exponential gradient.
pub struct Ensemble {
    pub params: PhysParams,
    pub env: Environment,
    /// Simulated time (s).
    pub time: f64,
    x: Vec<f64>,
    dir: Vec<f64>,
    m_off: Vec<f64>,
    rngs: Vec<ChaCha8Rng>,
    drift_log: Vec<DriftSample>,
    log_every: usize,
    steps_taken: u64,
}

impl Ensemble {
    /// Agents uniform in `x`, direction uniform, methylation at the local
    /// preferred level (activity exactly `1/2`).
    pub fn new(p: &PhysParams, env: &Environment, n_agents: usize, seed: u64) -> Result<Self> {
        p.validate()?;
        if n_agents == 0 {
            return Err(Error::Config("ensemble needs at least one agent".into()));
        }
        let mut x = Vec::with_capacity(n_agents);
        let mut dir = Vec::with_capacity(n_agents);
        let mut rngs = Vec::with_capacity(n_agents);
        let len = env.length();
        for i in 0..n_agents {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            x.push(env.x_min + len * rng.random::<f64>());
            dir.push(if rng.random::<f64>() < 0.5 { 1.0 } else { -1.0 });
            rngs.push(rng);
        }
        Ok(Ensemble {
            params: p.clone(),
            env: env.clone(),
            time: 0.0,
            x,
            dir,
            m_off: vec![0.0; n_agents],
            rngs,
            drift_log: Vec::new(),
            log_every: 1,
            steps_taken: 0,
        })
    }

    /// Prescribed initial states; RNG streams are still indexed per agent.
    pub fn with_states(
        p: &PhysParams,
        env: &Environment,
        states: &[AgentState],
        seed: u64,
    ) -> Result<Self> {
        let mut e = Self::new(p, env, states.len().max(1), seed)?;
        if states.is_empty() {
            return Err(Error::Config("ensemble needs at least one agent".into()));
        }
        for (i, s) in states.iter().enumerate() {
            if s.dir != 1.0 && s.dir != -1.0 {
                return Err(Error::Config(format!("agent {i}: dir must be ±1, got {}", s.dir)));
            }
            e.x[i] = env.wrap(s.x);
            e.dir[i] = s.dir;
            e.m_off[i] = s.m_offset;
        }
        Ok(e)
    }

    pub fn n_agents(&self) -> usize {
        self.x.len()
    }

    /// `(x, dir, m)` with the absolute methylation level reconstructed.
    pub fn agent(&self, i: usize) -> (f64, f64, f64) {
        let m = self.m_off[i] + self.env.preferred_methylation(&self.params, self.x[i]);
        (self.x[i], self.dir[i], m)
    }

    pub fn activity(&self, i: usize) -> f64 {
        self.params.activity_from_offset(self.m_off[i])
    }

    /// Record every `n`-th step's counts in the drift log (default 1).
    pub fn set_log_every(&mut self, n: usize) {
        self.log_every = n.max(1);
    }

    pub fn drift_log(&self) -> &[DriftSample] {
        &self.drift_log
    }

    /// Instantaneous drift estimate from the current direction counts.
    pub fn drift_estimator(&self) -> f64 {
        let n_plus = self.dir.iter().filter(|&&d| d > 0.0).count() as f64;
        let n = self.x.len() as f64;
        self.params.v0 * (2.0 * n_plus - n) / n
    }

    fn check_dt(&self, dt: f64) -> Result<()> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::Config(format!("dt must be positive, got {dt}")));
        }
        let p = &self.params;
        // Accuracy guards on the explicitly integrated scales: adaptation and
        // the typical tumbling rate. The exponential tumble probability needs
        // no stability bound of its own.
        let guard = 0.1 / p.k_r.max(p.tumbling_rate(p.a0));
        if dt > guard {
            return Err(Error::Config(format!(
                "dt = {dt} exceeds the accuracy guard 0.1/max(kR, Z(a0)) = {guard:.4}"
            )));
        }
        Ok(())
    }

    /// Advances every agent by `dt` and returns the post-step counts.
    pub fn step(&mut self, dt: f64) -> Result<DriftSample> {
        self.check_dt(dt)?;
        let p = self.params.clone();
        let env = self.env.clone();
        let grad_over_alpha = env.g_spatial / p.alpha0;

        self.x
            .par_iter_mut()
            .zip(self.dir.par_iter_mut())
            .zip(self.m_off.par_iter_mut())
            .zip(self.rngs.par_iter_mut())
            .for_each(|(((x, dir), m_off), rng)| {
                let a = p.activity_from_offset(*m_off);
                *m_off += dt * p.adaptation_rate(a);
                let dx = *dir * p.v0 * dt;
                let moved = *x + dx;
                // The wrap changes M(S(x)) but not the offset: activity is
                // preserved exactly.
                *x = env.wrap(moved);
                *m_off -= grad_over_alpha * dx;
                let tumble_prob = -(-p.tumbling_rate(a) * dt).exp_m1();
                if rng.random::<f64>() < tumble_prob {
                    *dir = if rng.random::<f64>() < 0.5 { 1.0 } else { -1.0 };
                }
            });

        self.time += dt;
        self.steps_taken += 1;
        let n_plus: u64 = self.dir.par_iter().map(|&d| (d > 0.0) as u64).sum();
        let sample = DriftSample {
            t: self.time,
            n_plus,
            n_minus: self.x.len() as u64 - n_plus,
        };
        if self.steps_taken % self.log_every as u64 == 0 {
            self.drift_log.push(sample);
        }
        Ok(sample)
    }

    /// Runs until the windowed drift mean and variance both settle, then
    /// reports the mean over the final two windows with a batch-means
    /// standard error. Convergence: between consecutive windows,
    /// `|Δmean| < tol·v0` and `|Δvar| ≤ tol·v0²`.
    pub fn run_to_steady_state(
        &mut self,
        dt: f64,
        window: usize,
        tol: f64,
        max_time: f64,
    ) -> Result<SteadyStats> {
        if window < 100 {
            return Err(Error::Config(format!(
                "steady-state window must cover at least 100 samples, got {window}"
            )));
        }
        let v0 = self.params.v0;
        let start = self.time;
        let mut recent: VecDeque<f64> = VecDeque::with_capacity(2 * window);
        let mut prev: Option<(f64, f64)> = None;
        let mut windows = 0usize;

        loop {
            let mut sum = 0.0;
            let mut sumsq = 0.0;
            for _ in 0..window {
                let s = self.step(dt)?;
                let v = s.drift(v0);
                sum += v;
                sumsq += v * v;
                if recent.len() == 2 * window {
                    recent.pop_front();
                }
                recent.push_back(v);
            }
            windows += 1;
            let mean = sum / window as f64;
            let var = (sumsq / window as f64 - mean * mean).max(0.0);

            if let Some((pm, pv)) = prev {
                if (mean - pm).abs() < tol * v0 && (var - pv).abs() <= tol * v0 * v0 {
                    let (drift_mean, drift_stderr) = batch_means(recent.make_contiguous());
                    return Ok(SteadyStats {
                        drift_mean,
                        drift_stderr,
                        elapsed: self.time - start,
                        windows,
                        converged: true,
                    });
                }
            }
            prev = Some((mean, var));

            if self.time - start >= max_time {
                let (drift_mean, drift_stderr) = batch_means(recent.make_contiguous());
                return Err(Error::Timeout {
                    elapsed: self.time - start,
                    partial: Box::new(SteadyStats {
                        drift_mean,
                        drift_stderr,
                        elapsed: self.time - start,
                        windows,
                        converged: false,
                    }),
                });
            }
        }
    }

    /// Per-direction activity histograms over the given bin edges, jointly
    /// normalised: the masses of the two histograms sum to the respective
    /// direction fractions (and to 1 together). Agents outside the edge
    /// range are ignored.
    pub fn activity_histogram(&self, edges: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        if edges.len() < 2 || edges.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Domain("bin edges must be strictly increasing".into()));
        }
        let nb = edges.len() - 1;
        let mut counts_plus = vec![0u64; nb];
        let mut counts_minus = vec![0u64; nb];
        for i in 0..self.x.len() {
            let a = self.params.activity_from_offset(self.m_off[i]);
            if a < edges[0] || a >= edges[nb] {
                continue;
            }
            let b = edges.partition_point(|&e| e <= a) - 1;
            if self.dir[i] > 0.0 {
                counts_plus[b] += 1;
            } else {
                counts_minus[b] += 1;
            }
        }
        let n = self.x.len() as f64;
        let density = |counts: &[u64]| {
            counts
                .iter()
                .enumerate()
                .map(|(b, &c)| c as f64 / n / (edges[b + 1] - edges[b]))
                .collect::<Vec<f64>>()
        };
        Ok((density(&counts_plus), density(&counts_minus)))
    }

    /// Uniform-bin convenience form over `[0, 1]`.
    pub fn activity_histogram_uniform(&self, bins: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        if bins < 10 {
            return Err(Error::Config(format!("need at least 10 bins, got {bins}")));
        }
        let edges: Vec<f64> = (0..=bins).map(|i| i as f64 / bins as f64).collect();
        self.activity_histogram(&edges)
    }

    /// Fraction of agents whose activity lies in `[lo, hi]`.
    pub fn fraction_in(&self, lo: f64, hi: f64) -> f64 {
        let inside = self
            .m_off
            .iter()
            .filter(|&&off| {
                let a = self.params.activity_from_offset(off);
                a >= lo && a <= hi
            })
            .count();
        inside as f64 / self.x.len() as f64
    }

    /// Mean and variance of activity per spatial bin.
    pub fn per_x_activity(&self, nx: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let nx = nx.max(1);
        let len = self.env.length();
        let mut count = vec![0u64; nx];
        let mut sum = vec![0.0; nx];
        let mut sumsq = vec![0.0; nx];
        for i in 0..self.x.len() {
            let frac = (self.x[i] - self.env.x_min) / len;
            let b = ((frac * nx as f64) as usize).min(nx - 1);
            let a = self.params.activity_from_offset(self.m_off[i]);
            count[b] += 1;
            sum[b] += a;
            sumsq[b] += a * a;
        }
        let centers: Vec<f64> = (0..nx)
            .map(|b| self.env.x_min + len * (b as f64 + 0.5) / nx as f64)
            .collect();
        let means: Vec<f64> = (0..nx)
            .map(|b| if count[b] > 0 { sum[b] / count[b] as f64 } else { f64::NAN })
            .collect();
        let vars: Vec<f64> = (0..nx)
            .map(|b| {
                if count[b] > 0 {
                    (sumsq[b] / count[b] as f64 - means[b] * means[b]).max(0.0)
                } else {
                    f64::NAN
                }
            })
            .collect();
        (centers, means, vars)
    }
}

/// Batch-means estimate of (mean, stderr of the mean) for an autocorrelated
/// series: 20 batches, each long enough to decorrelate at typical run times.
fn batch_means(samples: &[f64]) -> (f64, f64) {
    let n = samples.len();
    let mean = samples.iter().sum::<f64>() / n as f64;
    let nb = 20.min(n);
    if nb < 2 {
        return (mean, f64::NAN);
    }
    let len = n / nb;
    let mut var_between = 0.0;
    for b in 0..nb {
        let batch = &samples[b * len..(b + 1) * len];
        let bm = batch.iter().sum::<f64>() / len as f64;
        var_between += (bm - mean) * (bm - mean);
    }
    var_between /= (nb - 1) as f64;
    (mean, (var_between / nb as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quiet_env() -> Environment {
        Environment::with_bounds(0.0, 0.0, 1000.0).unwrap()
    }

    #[test]
    fn dt_guards_reject_coarse_steps() {
        let p = PhysParams::default();
        let mut e = Ensemble::new(&p, &quiet_env(), 10, 1).unwrap();
        // 0.1/Z(a0) = 0.1/1.39 ≈ 0.072 s is the binding guard at defaults.
        assert!(e.step(0.08).is_err());
        assert!(e.step(-1.0).is_err());
        assert!(e.step(0.05).is_ok());

        // With fast adaptation the kR guard binds instead.
        let fast = PhysParams { k_r: 5.0, ..PhysParams::default() };
        let mut e = Ensemble::new(&fast, &quiet_env(), 10, 1).unwrap();
        assert!(e.step(0.05).is_err());
        assert!(e.step(0.01).is_ok());
    }

    #[test]
    fn ballistic_motion_without_tumbling() {
        // z0 = 0 and a Hill exponent steep enough that Z vanishes below a0;
        // adaptation is slowed so the activity stays down for the whole run.
        let p = PhysParams { z0: 0.0, h: 64.0, k_r: 1e-12, ..PhysParams::default() };
        let env = quiet_env();
        let states = [
            AgentState { x: 100.0, dir: 1.0, m_offset: -0.1 }, // a ≈ 0.26
            AgentState { x: 900.0, dir: -1.0, m_offset: -0.2 },
        ];
        let mut e = Ensemble::with_states(&p, &env, &states, 7).unwrap();
        let dt = 0.05;
        let steps = 4000;
        let mut expect: Vec<f64> = states.iter().map(|s| s.x).collect();
        for _ in 0..steps {
            e.step(dt).unwrap();
            for (k, s) in states.iter().enumerate() {
                expect[k] = env.wrap(expect[k] + s.dir * p.v0 * dt);
            }
        }
        assert_eq!(e.agent(0).0.to_bits(), expect[0].to_bits());
        assert_eq!(e.agent(1).0.to_bits(), expect[1].to_bits());
        assert_eq!(e.agent(0).1, 1.0);
        assert_eq!(e.agent(1).1, -1.0);
    }

    #[test]
    fn adaptation_pulls_activity_to_set_point() {
        let p = PhysParams::default();
        let env = quiet_env();
        let states: Vec<AgentState> = (0..2000)
            .map(|i| AgentState {
                x: 500.0,
                dir: if i % 2 == 0 { 1.0 } else { -1.0 },
                m_offset: if i % 2 == 0 { -0.8 } else { 0.9 },
            })
            .collect();
        let mut e = Ensemble::with_states(&p, &env, &states, 3).unwrap();
        let dt = 0.05;
        let t_relax = 10.0 / p.k_r;
        for _ in 0..(t_relax / dt) as usize {
            e.step(dt).unwrap();
        }
        assert!(e.fraction_in(0.45, 0.55) >= 0.99);
    }

    #[test]
    fn wrap_preserves_activity_and_shifts_methylation() {
        let p = PhysParams::default();
        let env = Environment::with_bounds(1e-3, 0.0, 500.0).unwrap();
        let start = AgentState { x: 499.9, dir: 1.0, m_offset: 0.3 };
        let mut e = Ensemble::with_states(&p, &env, &[start], 11).unwrap();
        let a_before = e.activity(0);
        let m_before = e.agent(0).2;
        let dt = 0.05;
        // One substep crosses the boundary (v0·dt ≈ 0.58 µm > 0.1 µm left).
        e.step(dt).unwrap();
        let (x_after, _, m_after) = e.agent(0);
        assert!(x_after < 1.0, "agent should re-enter from the left, x = {x_after}");

        // The offset evolves exactly as if no boundary existed.
        let mut off = start.m_offset;
        off += dt * p.adaptation_rate(a_before);
        off -= env.g_spatial / p.alpha0 * (p.v0 * dt);
        assert_eq!(e.m_off[0].to_bits(), off.to_bits());

        // Idle comparison at the wrap instant: activity from the absolute
        // (m, S) pair agrees whether evaluated at the wrapped or unwrapped
        // position.
        let x_unwrapped = start.x + p.v0 * dt;
        let m_unwrapped = e.m_off[0] + env.preferred_methylation(&p, x_unwrapped);
        let a_unwrapped = p.activity(m_unwrapped, env.signal(&p, x_unwrapped)).unwrap();
        let a_wrapped = p.activity(m_after, env.signal(&p, x_after)).unwrap();
        assert!((a_wrapped - a_unwrapped).abs() <= 1e-12);

        // In absolute terms the wrap shifts methylation by −G·L/α0: the
        // in-step gradient term cancels against the preferred-level change,
        // so only adaptation needs removing.
        let dm_wrap = (m_after - m_before) - dt * p.adaptation_rate(a_before);
        let expected = -env.g_spatial * env.length() / p.alpha0;
        assert!(
            ((dm_wrap - expected) / expected).abs() < 1e-9,
            "Δm = {dm_wrap}, expected {expected}"
        );
    }

    #[test]
    fn drift_estimator_counts_directions() {
        let p = PhysParams::default();
        let env = quiet_env();
        let all_plus: Vec<AgentState> =
            (0..8).map(|i| AgentState { x: i as f64, dir: 1.0, m_offset: 0.0 }).collect();
        let e = Ensemble::with_states(&p, &env, &all_plus, 1).unwrap();
        assert_eq!(e.drift_estimator(), p.v0);

        let half: Vec<AgentState> = (0..8)
            .map(|i| AgentState {
                x: i as f64,
                dir: if i < 4 { 1.0 } else { -1.0 },
                m_offset: 0.0,
            })
            .collect();
        let e = Ensemble::with_states(&p, &env, &half, 1).unwrap();
        assert_eq!(e.drift_estimator(), 0.0);
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let p = PhysParams::default();
        let env = Environment::for_gradient(&p, 1e-3).unwrap();
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| {
                let mut e = Ensemble::new(&p, &env, 300, 42).unwrap();
                for _ in 0..400 {
                    e.step(0.02).unwrap();
                }
                let xs: Vec<u64> = (0..300).map(|i| e.agent(i).0.to_bits()).collect();
                let log: Vec<(u64, u64)> =
                    e.drift_log().iter().map(|s| (s.n_plus, s.n_minus)).collect();
                (xs, log)
            })
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn reference_methylation_level_never_enters() {
        let env = Environment::for_gradient(&PhysParams::default(), 5e-4).unwrap();
        let run = |m0: f64| {
            let p = PhysParams { m0, ..PhysParams::default() };
            let mut e = Ensemble::new(&p, &env, 200, 9).unwrap();
            for _ in 0..300 {
                e.step(0.02).unwrap();
            }
            (0..200)
                .map(|i| (e.agent(i).0.to_bits(), e.activity(i).to_bits()))
                .collect::<Vec<_>>()
        };
        assert_eq!(run(1.0), run(3.7));
    }

    #[test]
    fn unbiased_environment_gives_no_drift() {
        let p = PhysParams::default();
        let env = quiet_env();
        let mut e = Ensemble::new(&p, &env, 4000, 17).unwrap();
        e.set_log_every(1000);
        let stats = e.run_to_steady_state(0.02, 2000, 1e-2, 1e5).unwrap();
        assert!(stats.converged);
        assert!(
            stats.drift_mean.abs() <= 4.0 * stats.drift_stderr,
            "drift {} ± {}",
            stats.drift_mean,
            stats.drift_stderr
        );
    }

    #[test]
    fn instantaneous_drift_variance_matches_binomial_counting() {
        let p = PhysParams::default();
        let env = quiet_env();
        let n = 4000usize;
        let mut e = Ensemble::new(&p, &env, n, 23).unwrap();
        // Equilibrate directions, then sample.
        for _ in 0..500 {
            e.step(0.05).unwrap();
        }
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        let samples = 4000;
        for _ in 0..samples {
            let s = e.step(0.05).unwrap();
            let v = s.drift(p.v0);
            sum += v;
            sumsq += v * v;
        }
        let mean = sum / samples as f64;
        let var = sumsq / samples as f64 - mean * mean;
        let predicted = p.v0 * p.v0 / n as f64;
        assert!(
            var / predicted > 0.5 && var / predicted < 1.7,
            "var {var:.3e} vs binomial prediction {predicted:.3e}"
        );
    }

    #[test]
    fn activity_histogram_masses_are_direction_fractions() {
        let p = PhysParams::default();
        let env = Environment::for_gradient(&p, 1e-3).unwrap();
        let mut e = Ensemble::new(&p, &env, 5000, 5).unwrap();
        for _ in 0..2000 {
            e.step(0.02).unwrap();
        }
        let (hp, hm) = e.activity_histogram_uniform(50).unwrap();
        let da = 1.0 / 50.0;
        let mass_p: f64 = hp.iter().map(|d| d * da).sum();
        let mass_m: f64 = hm.iter().map(|d| d * da).sum();
        let n_plus = e.dir.iter().filter(|&&d| d > 0.0).count() as f64 / 5000.0;
        assert!((mass_p - n_plus).abs() < 1e-12);
        assert!((mass_p + mass_m - 1.0).abs() < 1e-12);
        assert!(e.activity_histogram_uniform(5).is_err());
    }

    #[test]
    fn timeout_carries_partial_statistics() {
        let p = PhysParams::default();
        let env = Environment::for_gradient(&p, 1e-3).unwrap();
        let mut e = Ensemble::new(&p, &env, 50, 2).unwrap();
        // Impossible tolerance and a tiny time budget force the timeout path.
        match e.run_to_steady_state(0.02, 100, 0.0, 10.0) {
            Err(Error::Timeout { elapsed, partial }) => {
                assert!(elapsed >= 10.0);
                assert!(!partial.converged);
                assert!(partial.drift_mean.is_finite());
            }
            other => panic!("expected timeout, got {other:?}"),
        }
    }

    #[test]
    fn spatial_activity_profile_is_homogeneous() {
        let p = PhysParams::default();
        let env = Environment::for_gradient(&p, 1e-3).unwrap();
        let mut e = Ensemble::new(&p, &env, 10_000, 31).unwrap();
        for _ in 0..12_500 {
            e.step(0.02).unwrap();
        }
        let (_, means, _) = e.per_x_activity(16);
        let global: f64 = means.iter().sum::<f64>() / means.len() as f64;
        for m in &means {
            assert!(
                (m - global).abs() / global < 0.05,
                "per-x mean {m} vs global {global}"
            );
        }
    }
}
