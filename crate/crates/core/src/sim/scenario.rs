use std::collections::BTreeMap;

use crate::amff::FrequencyPlan;
use crate::em_model::{SatelliteBody, Vec3};
use crate::error::{Error, Result};
use crate::estimator::KalmanConfig;
use crate::formation::FormationGraph;
use crate::testbed::{Band, CoilSpec};

/// Relative tolerance for "dt divides T" and "duration is a whole number of windows".
pub const DIVISIBILITY_TOL: f64 = 1e-9;

/// How coil currents are chosen once control is switched on.
#[derive(Debug, Clone, PartialEq)]
pub enum Mode {
    /// Feedback through the estimator, desired-force law and current allocation.
    ClosedLoop,
    /// Constant current amplitudes `I_ij` (A) per ordered pair.
    OpenLoop { currents: BTreeMap<(usize, usize), f64> },
}

/// A new desired offset `d_ij` taking effect at the first control tick at or
/// after `time`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SetpointChange {
    pub time: f64,
    pub pair: (usize, usize),
    pub desired: Vec3,
}

/// Everything needed for one deterministic run.
///
/// The sampled controller acts along the x axis: satellites ride a common
/// track, relative positions are the x components and moments point along x.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub bodies: Vec<SatelliteBody>,
    pub graph: FormationGraph,
    pub plan: FrequencyPlan,
    pub coil: CoilSpec,
    pub kalman: KalmanConfig,
    /// Replaces the Riccati gain when set.
    pub kalman_gain: Option<[f64; 2]>,
    /// Deadband of the integrator; `None` disables integral action.
    pub band: Option<Band>,
    /// s
    pub duration: f64,
    /// Integrator step, s.
    pub dt: f64,
    /// Control switches on at the first tick at or after this time, s.
    pub control_on: f64,
    /// Variance of the range-sensor noise, m².
    pub noise_var: f64,
    pub seed: u64,
    pub mode: Mode,
    pub setpoints: Vec<SetpointChange>,
    /// Keep the true state at every integrator step.
    pub record_fine: bool,
}

fn whole_ratio(num: f64, den: f64) -> Option<usize> {
    let q = num / den;
    let n = q.round();
    ((q - n).abs() <= DIVISIBILITY_TOL * q.max(1.0)).then_some(n as usize)
}

impl Scenario {
    pub fn period(&self) -> f64 {
        self.plan.period()
    }

    /// Number of control windows simulated.
    pub fn windows(&self) -> usize {
        whole_ratio(self.duration, self.period()).unwrap_or(0)
    }

    /// Integrator steps per window.
    pub fn substeps(&self) -> usize {
        whole_ratio(self.period(), self.dt).unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.bodies.len();
        if n != self.graph.n() {
            return Err(Error::invalid(
                "scenario",
                format!("{n} satellites listed but the graph has {}", self.graph.n()),
            ));
        }
        for b in &self.bodies {
            b.validate()?;
        }
        self.graph.validate()?;
        self.plan.validate()?;
        self.coil.validate()?;
        self.kalman.validate()?;
        if let Some(b) = &self.band {
            b.validate()?;
        }
        if let Some(l) = self.kalman_gain {
            if !l.iter().all(|g| g.is_finite()) {
                return Err(Error::invalid("scenario", "kalman gain override must be finite"));
            }
        }

        let edges: Vec<_> = self.graph.edges().map(|(k, _)| k).collect();
        let planned: Vec<_> = self.plan.pairs().map(|(k, _)| k).collect();
        if edges != planned {
            return Err(Error::invalid(
                "scenario",
                format!("frequency pairs {planned:?} do not match graph edges {edges:?}"),
            ));
        }
        if (self.kalman.period - self.period()).abs() > DIVISIBILITY_TOL * self.period() {
            return Err(Error::invalid(
                "scenario",
                format!(
                    "filter period {} s differs from control period {} s",
                    self.kalman.period,
                    self.period()
                ),
            ));
        }

        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::invalid("scenario", format!("dt must be > 0, got {}", self.dt)));
        }
        if whole_ratio(self.period(), self.dt).is_none_or(|s| s == 0) {
            return Err(Error::invalid(
                "scenario",
                format!("dt = {} s does not divide the control period {} s", self.dt, self.period()),
            ));
        }
        let limit = self.plan.shortest_period() / 40.0;
        if self.dt > limit * (1.0 + DIVISIBILITY_TOL) {
            return Err(Error::invalid(
                "scenario",
                format!("dt = {} s exceeds 1/40 of the shortest tone period ({limit} s)", self.dt),
            ));
        }
        if !(self.duration >= 0.0 && self.duration.is_finite()) {
            return Err(Error::invalid("scenario", format!("duration must be >= 0, got {}", self.duration)));
        }
        if whole_ratio(self.duration, self.period()).is_none() {
            return Err(Error::invalid(
                "scenario",
                format!(
                    "duration {} s is not a whole number of {} s windows",
                    self.duration,
                    self.period()
                ),
            ));
        }
        if !(self.control_on >= 0.0 && self.control_on <= self.duration) {
            return Err(Error::invalid(
                "scenario",
                format!(
                    "control-on time {} s must lie in [0, duration = {} s]",
                    self.control_on, self.duration
                ),
            ));
        }
        if !(self.noise_var >= 0.0 && self.noise_var.is_finite()) {
            return Err(Error::invalid(
                "scenario",
                format!("noise variance must be >= 0, got {}", self.noise_var),
            ));
        }

        let on_axis = |v: &Vec3| v.y == 0.0 && v.z == 0.0;
        for (i, b) in self.bodies.iter().enumerate() {
            if !on_axis(&b.position) || !on_axis(&b.velocity) {
                return Err(Error::invalid(
                    "scenario",
                    format!("satellite {i} must start on the x axis with velocity along x"),
                ));
            }
        }
        for (k, g) in self.graph.edges() {
            if !on_axis(&g.desired) {
                return Err(Error::invalid("scenario", format!("desired offset of edge {k:?} must lie along x")));
            }
            if g.rho > 0.0 && self.band.is_none() {
                return Err(Error::invalid(
                    "scenario",
                    format!("edge {k:?} has rho > 0 but no integrator band is configured"),
                ));
            }
        }
        for sp in &self.setpoints {
            let (i, j) = sp.pair;
            if !self.graph.has_edge(i, j) || i == j {
                return Err(Error::invalid("scenario", format!("setpoint pair ({i}, {j}) is not an edge")));
            }
            if !on_axis(&sp.desired) {
                return Err(Error::invalid("scenario", "setpoint offsets must lie along x"));
            }
            if !(sp.time >= 0.0 && sp.time.is_finite()) {
                return Err(Error::invalid("scenario", format!("setpoint time must be >= 0, got {}", sp.time)));
            }
        }
        if let Mode::OpenLoop { currents } = &self.mode {
            for (&(i, j), &c) in currents {
                if !self.graph.has_edge(i, j) || i == j {
                    return Err(Error::invalid("scenario", format!("open-loop current on non-edge ({i}, {j})")));
                }
                if !c.is_finite() {
                    return Err(Error::invalid("scenario", format!("open-loop current on ({i}, {j}) is not finite")));
                }
            }
        }
        Ok(())
    }

    /// Desired offset (x component) of `(i, j)` in force after all setpoint
    /// changes up to and including time `t`.
    pub fn desired_at(&self, i: usize, j: usize, t: f64) -> Option<f64> {
        let mut d = self.graph.desired(i, j)?.x;
        let mut changes: Vec<_> = self.setpoints.iter().filter(|s| s.time <= t).collect();
        changes.sort_by(|a, b| a.time.total_cmp(&b.time));
        for s in changes {
            if s.pair == (i, j) {
                d = s.desired.x;
            } else if s.pair == (j, i) {
                d = -s.desired.x;
            }
        }
        Some(d)
    }

    /// Time of the last setpoint change touching `(i, j)`, if any.
    pub fn last_switch(&self, i: usize, j: usize) -> Option<f64> {
        self.setpoints
            .iter()
            .filter(|s| s.pair == (i, j) || s.pair == (j, i))
            .map(|s| s.time)
            .fold(None, |acc: Option<f64>, t| Some(acc.map_or(t, |a| a.max(t))))
    }
}
