//! Steady-state Kalman filter for one relative coordinate modeled as a sampled
//! double integrator driven by the relative acceleration.
//!
//! ```text
//! x_k = A x_{k-1} + B ν_{k-1},   q_k = C x_k + noise
//! A = [[1, T], [0, 1]],  B = [T²/2, T]ᵀ,  C = [1, 0],  W = w B Bᵀ
//! ```

use std::collections::BTreeMap;

use nalgebra::{Matrix2, RowVector2, Vector2};

use crate::error::{Error, Result};
use crate::formation::{common_neighbors, neighbor_views, FormationGraph};
use crate::testbed::realized_avg_force_1d;

/// Iteration cap of the Riccati fixed point.
pub const DARE_MAX_ITER: usize = 1_000_000;

/// Sampling period and noise variances of a relative-position filter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KalmanConfig {
    /// s
    pub period: f64,
    /// Measurement noise variance `V`, m².
    pub meas_var: f64,
    /// Acceleration disturbance variance `w`, m²/s⁴.
    pub dist_var: f64,
}

impl KalmanConfig {
    pub fn new(period: f64, meas_var: f64, dist_var: f64) -> Result<Self> {
        let cfg = Self {
            period,
            meas_var,
            dist_var,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("period", self.period), ("V", self.meas_var), ("w", self.dist_var)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid("kalman config", format!("{name} must be > 0, got {v}")));
            }
        }
        Ok(())
    }

    pub fn a(&self) -> Matrix2<f64> {
        Matrix2::new(1.0, self.period, 0.0, 1.0)
    }

    pub fn b(&self) -> Vector2<f64> {
        Vector2::new(self.period * self.period / 2.0, self.period)
    }

    pub fn c(&self) -> RowVector2<f64> {
        RowVector2::new(1.0, 0.0)
    }

    pub fn w(&self) -> Matrix2<f64> {
        let b = self.b();
        b * b.transpose() * self.dist_var
    }

    /// One step of the predicted-covariance Riccati map.
    pub fn riccati_map(&self, p: &Matrix2<f64>) -> Matrix2<f64> {
        let (a, c) = (self.a(), self.c());
        let apc = a * p * c.transpose();
        let s = (c * p * c.transpose())[(0, 0)] + self.meas_var;
        a * p * a.transpose() - apc * apc.transpose() / s + self.w()
    }
}

/// Stabilizing solution of `P = A P Aᵀ − A P Cᵀ (C P Cᵀ + V)⁻¹ C P Aᵀ + W`
/// by fixed-point iteration from the identity.
pub fn solve_dare(cfg: &KalmanConfig) -> Result<Matrix2<f64>> {
    cfg.validate()?;
    let mut p = Matrix2::identity();
    for _ in 0..DARE_MAX_ITER {
        let next = cfg.riccati_map(&p);
        let next = (next + next.transpose()) * 0.5;
        if !next.iter().all(|v| v.is_finite()) {
            return Err(Error::Numeric("Riccati iteration diverged".into()));
        }
        let step = (next - p).amax();
        p = next;
        if step <= 1e-15 * p.amax() {
            return Ok(p);
        }
    }
    Err(Error::Numeric(format!(
        "Riccati iteration did not converge in {DARE_MAX_ITER} steps"
    )))
}

/// `L = P Cᵀ (C P Cᵀ + V)⁻¹`.
pub fn kalman_gain(p: &Matrix2<f64>, cfg: &KalmanConfig) -> Result<Vector2<f64>> {
    let c = cfg.c();
    let s = (c * p * c.transpose())[(0, 0)] + cfg.meas_var;
    if !(s > 0.0) {
        return Err(Error::Numeric(format!("innovation variance {s} is not positive")));
    }
    Ok(p * c.transpose() / s)
}

/// `‖map(P) − P‖∞`.
pub fn dare_residual(p: &Matrix2<f64>, cfg: &KalmanConfig) -> f64 {
    (cfg.riccati_map(p) - p).amax()
}

/// Spectral radius of the error dynamics `A − L C A`.
pub fn error_spectral_radius(gain: &Vector2<f64>, cfg: &KalmanConfig) -> f64 {
    let a = cfg.a();
    let m = a - gain * cfg.c() * a;
    let tr = m.trace();
    let det = m.determinant();
    let disc = tr * tr / 4.0 - det;
    if disc >= 0.0 {
        let s = disc.sqrt();
        (tr / 2.0 + s).abs().max((tr / 2.0 - s).abs())
    } else {
        det.abs().sqrt()
    }
}

/// Filtered relative position and velocity of one ordered pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KalmanState {
    /// m
    pub r_hat: f64,
    /// m/s
    pub v_hat: f64,
    pub gain: Vector2<f64>,
}

impl KalmanState {
    /// Starts from the first measurement at rest.
    pub fn new(q0: f64, gain: Vector2<f64>) -> Self {
        Self {
            r_hat: q0,
            v_hat: 0.0,
            gain,
        }
    }
}

/// `x_k = (A − LCA) x_{k−1} + (B − LCB) ν̂_{k−1} + L q_k`.
pub fn kf_update(state: &KalmanState, q: f64, nu_hat: f64, cfg: &KalmanConfig) -> KalmanState {
    let (a, b, c) = (cfg.a(), cfg.b(), cfg.c());
    let l = state.gain;
    let x = Vector2::new(state.r_hat, state.v_hat);
    let next = (a - l * c * a) * x + (b - l * c * b) * nu_hat + l * q;
    KalmanState {
        r_hat: next[0],
        v_hat: next[1],
        gain: l,
    }
}

/// Index sets of the relative-acceleration estimate for pair `(i, j)`:
/// `(N_i, {i} ∪ (N_i ∩ N_j))`.
pub fn input_index_sets(graph: &FormationGraph, i: usize, j: usize) -> Result<(Vec<usize>, Vec<usize>)> {
    if !graph.has_edge(i, j) {
        return Err(Error::Contract(format!("({i}, {j}) is not an edge")));
    }
    let own = neighbor_views(graph, i)?;
    let mut theirs = vec![i];
    theirs.extend(common_neighbors(graph, i, j)?);
    theirs.sort_unstable();
    Ok((own, theirs))
}

/// Relative acceleration estimate `ν̂_ij` (m/s²) built from what satellite `i`
/// holds: its own estimates `r̂_ig` for every neighbor `g` and the moment
/// amplitudes `p_ab` applied during the elapsed window.
///
/// Forces on `j` from satellites that are not neighbors of `i` are unknown to
/// `i` and left out.
pub fn input_estimate<P>(
    i: usize,
    j: usize,
    graph: &FormationGraph,
    mass: f64,
    r_hat: &BTreeMap<usize, f64>,
    moment: P,
) -> Result<f64>
where
    P: Fn(usize, usize) -> f64,
{
    let (own, theirs) = input_index_sets(graph, i, j)?;
    let est = |g: usize| {
        r_hat
            .get(&g)
            .copied()
            .ok_or_else(|| Error::Contract(format!("satellite {i} has no estimate toward {g}")))
    };
    let mut total = 0.0;
    for &g in &own {
        total += realized_avg_force_1d(est(g)?, moment(i, g), moment(g, i))?;
    }
    let r_ij = est(j)?;
    for &h in &theirs {
        let r_jh = if h == i { -r_ij } else { est(h)? - r_ij };
        total -= realized_avg_force_1d(r_jh, moment(j, h), moment(h, j))?;
    }
    Ok(total / mass)
}
