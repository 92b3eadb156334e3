//! Per-satellite sampled control loops.
//!
//! A [`SatelliteController`] only reaches the outside world through a
//! [`RelativeSensor`], and only for pairs it belongs to as listed by
//! [`neighbor_views`]. Tests wrap the sensor to audit that access pattern.

use std::collections::BTreeMap;

use nalgebra::Vector2;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::amff::FrequencyPlan;
use crate::em_model::Vec3;
use crate::error::{Error, Result};
use crate::estimator::{input_estimate, kf_update, KalmanConfig, KalmanState};
use crate::formation::{neighbor_views, FormationGraph};
use crate::testbed::{
    desired_force_1d, pair_current, peak_window_current, saturate_currents, Band, CoilSpec, IntegratorState,
};

/// Range measurement of `r_ij = x_i − x_j` taken by satellite `i`.
pub trait RelativeSensor {
    fn measure(&mut self, i: usize, j: usize) -> f64;
}

/// True separation plus zero-mean Gaussian noise, one independent draw per call.
pub struct NoisySensor<'a, R: Rng> {
    positions: &'a [Vec3],
    std_dev: f64,
    rng: &'a mut R,
}

impl<'a, R: Rng> NoisySensor<'a, R> {
    pub fn new(positions: &'a [Vec3], variance: f64, rng: &'a mut R) -> Self {
        Self {
            positions,
            std_dev: variance.sqrt(),
            rng,
        }
    }
}

impl<R: Rng> RelativeSensor for NoisySensor<'_, R> {
    fn measure(&mut self, i: usize, j: usize) -> f64 {
        let z: f64 = self.rng.sample(StandardNormal);
        self.positions[i].x - self.positions[j].x + self.std_dev * z
    }
}

/// What a satellite's tick needs besides its own state.
pub struct TickContext<'a> {
    pub graph: &'a FormationGraph,
    pub plan: &'a FrequencyPlan,
    pub coil: &'a CoilSpec,
    pub kalman: &'a KalmanConfig,
    pub mass: f64,
    /// Control is switched on for this window.
    pub active: bool,
    /// Fixed currents `I_ij` when running open loop.
    pub open_loop: Option<&'a BTreeMap<(usize, usize), f64>>,
    /// Moment amplitudes `p_ab` (A·m², along x) applied during the elapsed window.
    pub previous_moment: &'a dyn Fn(usize, usize) -> f64,
}

/// One neighbor's entry of a tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairReport {
    pub q: f64,
    pub r_hat: f64,
    pub v_hat: f64,
    pub xi: f64,
    /// Commanded current amplitude `I_ij` after weighting and saturation, A.
    pub current: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TickReport {
    pub pairs: BTreeMap<usize, PairReport>,
    /// Largest `|I_i(t)|` over the coming window, A.
    pub peak_current: f64,
}

/// The decentralized loop run by satellite `id`.
#[derive(Debug, Clone)]
pub struct SatelliteController {
    id: usize,
    neighbors: Vec<usize>,
    gain: Vector2<f64>,
    filters: BTreeMap<usize, KalmanState>,
    integrator: Option<IntegratorState>,
}

impl SatelliteController {
    pub fn new(id: usize, graph: &FormationGraph, gain: Vector2<f64>, band: Option<Band>) -> Result<Self> {
        let neighbors = neighbor_views(graph, id)?;
        let integrator = band.map(|b| IntegratorState::new(b, &neighbors));
        Ok(Self {
            id,
            neighbors,
            gain,
            filters: BTreeMap::new(),
            integrator,
        })
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn neighbors(&self) -> &[usize] {
        &self.neighbors
    }

    /// Measure, filter and command currents for window `k`.
    pub fn tick(&mut self, k: usize, ctx: &TickContext<'_>, sensor: &mut dyn RelativeSensor) -> Result<TickReport> {
        let me = self.id;
        let mut qs = BTreeMap::new();
        for &j in &self.neighbors {
            qs.insert(j, sensor.measure(me, j));
        }

        if k == 0 || self.filters.is_empty() {
            for (&j, &q) in &qs {
                self.filters.insert(j, KalmanState::new(q, self.gain));
            }
        } else {
            let previous: BTreeMap<usize, f64> = self.filters.iter().map(|(&j, s)| (j, s.r_hat)).collect();
            for (&j, &q) in &qs {
                let nu = input_estimate(me, j, ctx.graph, ctx.mass, &previous, ctx.previous_moment)?;
                let state = self.filters[&j];
                self.filters.insert(j, kf_update(&state, q, nu, ctx.kalman));
            }
        }

        let mut xis = BTreeMap::new();
        let mut currents = BTreeMap::new();
        match (ctx.active, ctx.open_loop) {
            (false, _) => {
                if let Some(int) = &mut self.integrator {
                    int.reset();
                }
                for &j in &self.neighbors {
                    xis.insert(j, 0.0);
                    currents.insert(j, 0.0);
                }
            }
            (true, Some(fixed)) => {
                for &j in &self.neighbors {
                    xis.insert(j, 0.0);
                    currents.insert(j, fixed.get(&(me, j)).copied().unwrap_or(0.0));
                }
            }
            (true, None) => {
                let beta = ctx.graph.beta();
                let mut raw = BTreeMap::new();
                let mut gamma = BTreeMap::new();
                for &j in &self.neighbors {
                    let est = self.filters[&j];
                    let d = ctx
                        .graph
                        .desired(me, j)
                        .ok_or_else(|| Error::Contract(format!("({me}, {j}) is not an edge")))?
                        .x;
                    let xi = match &mut self.integrator {
                        Some(int) => int.update(j, est.r_hat, d),
                        None => 0.0,
                    };
                    let f_star = desired_force_1d(
                        est.r_hat,
                        est.v_hat,
                        d,
                        xi,
                        ctx.graph.alpha(me, j),
                        beta,
                        ctx.graph.rho(me, j),
                        ctx.mass,
                    )?;
                    xis.insert(j, xi);
                    raw.insert(j, pair_current(me, j, est.r_hat, f_star, ctx.coil)?);
                    gamma.insert(j, ctx.graph.gamma(me, j).unwrap_or(1.0));
                }
                let weighted = self.tones(&raw, Some(&gamma), ctx.plan)?;
                let peak = peak_window_current(&weighted, ctx.plan.period());
                currents = saturate_currents(&raw, &gamma, peak, ctx.coil.max_current)?;
            }
        }

        let tones = self.tones(&currents, None, ctx.plan)?;
        let peak_current = peak_window_current(&tones, ctx.plan.period());
        let pairs = self
            .neighbors
            .iter()
            .map(|&j| {
                let est = self.filters[&j];
                (
                    j,
                    PairReport {
                        q: qs[&j],
                        r_hat: est.r_hat,
                        v_hat: est.v_hat,
                        xi: xis[&j],
                        current: currents[&j],
                    },
                )
            })
            .collect();
        Ok(TickReport { pairs, peak_current })
    }

    fn tones(
        &self,
        amps: &BTreeMap<usize, f64>,
        weights: Option<&BTreeMap<usize, f64>>,
        plan: &FrequencyPlan,
    ) -> Result<Vec<(f64, f64)>> {
        amps.iter()
            .map(|(&j, &a)| {
                let w = plan
                    .omega(self.id, j)
                    .ok_or_else(|| Error::Contract(format!("pair ({}, {j}) has no frequency", self.id)))?;
                let g = weights.and_then(|m| m.get(&j)).copied().unwrap_or(1.0);
                Ok((g * a, w))
            })
            .collect()
    }
}
