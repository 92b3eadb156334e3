use std::collections::BTreeMap;

use nalgebra::Vector2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::control::{NoisySensor, SatelliteController, TickContext};
use super::scenario::{Mode, Scenario};
use crate::amff::{AmplitudeSet, FrequencyPlan};
use crate::em_model::{accelerations_into, SatelliteBody, Vec3};
use crate::error::Error;
use crate::estimator::{kalman_gain, solve_dare};
use crate::testbed::realized_avg_force_1d;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error(transparent)]
    Invalid(#[from] Error),
    #[error("simulation aborted at t = {t:.6} s: satellites {i} and {j} are {separation:e} m apart")]
    Aborted { t: f64, i: usize, j: usize, separation: f64 },
}

/// True state at one integrator step.
#[derive(Debug, Clone, PartialEq)]
pub struct FineSample {
    pub t: f64,
    pub positions: Vec<Vec3>,
    pub velocities: Vec<Vec3>,
}

/// Logged quantities of ordered pair `(i, j)` as held by satellite `i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairSample {
    /// Noisy range, m.
    pub q: f64,
    /// Filtered range, m.
    pub r_hat: f64,
    /// Filtered range rate, m/s.
    pub v_hat: f64,
    /// Current amplitude for the window, A.
    pub current: f64,
    /// Approximate average force from the window's amplitudes at `r̂`, N.
    pub force: f64,
    /// Integrator state, m.
    pub xi: f64,
}

/// One control tick.
#[derive(Debug, Clone, PartialEq)]
pub struct TelemetryRow {
    pub k: usize,
    pub t: f64,
    /// Same order as [`Telemetry::pairs`].
    pub pairs: Vec<PairSample>,
    pub positions: Vec<Vec3>,
    pub velocities: Vec<Vec3>,
    /// Per-satellite peak `|I_i(t)|` over the window, A.
    pub peak_current: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Telemetry {
    /// Sorted ordered pairs.
    pub pairs: Vec<(usize, usize)>,
    pub masses: Vec<f64>,
    pub rows: Vec<TelemetryRow>,
    /// Filled only when the scenario asks for it.
    pub fine: Vec<FineSample>,
}

/// Time series of one ordered pair.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PairSeries {
    pub t: Vec<f64>,
    pub q: Vec<f64>,
    pub r_hat: Vec<f64>,
    pub v_hat: Vec<f64>,
    pub current: Vec<f64>,
    pub force: Vec<f64>,
}

impl Telemetry {
    pub fn pair_index(&self, i: usize, j: usize) -> Option<usize> {
        self.pairs.iter().position(|&p| p == (i, j))
    }

    pub fn series(&self, i: usize, j: usize) -> Option<PairSeries> {
        let idx = self.pair_index(i, j)?;
        let mut s = PairSeries::default();
        for row in &self.rows {
            let p = row.pairs[idx];
            s.t.push(row.t);
            s.q.push(p.q);
            s.r_hat.push(p.r_hat);
            s.v_hat.push(p.v_hat);
            s.current.push(p.current);
            s.force.push(p.force);
        }
        Some(s)
    }

    /// `Σ m_i v_i` at every tick.
    pub fn momentum(&self) -> Vec<Vec3> {
        self.rows
            .iter()
            .map(|r| r.velocities.iter().zip(&self.masses).map(|(v, m)| v * *m).sum())
            .collect()
    }

    /// Largest per-satellite peak current over the run.
    pub fn max_peak_current(&self) -> f64 {
        self.rows
            .iter()
            .flat_map(|r| r.peak_current.iter().copied())
            .fold(0.0, f64::max)
    }
}

fn moments_at(tones: &[Vec<(f64, Vec3)>], t: f64, out: &mut [Vec3]) {
    for (u, list) in out.iter_mut().zip(tones) {
        *u = list.iter().map(|(w, p)| p * (w * t).sin()).sum();
    }
}

/// Advance `bodies` from `kT` to `(k + 1)T` with classical RK4 while the moments
/// follow `amps`. `sin(ω t)` is evaluated exactly at every stage.
pub fn integrate_window(
    bodies: &mut [SatelliteBody],
    plan: &FrequencyPlan,
    amps: &AmplitudeSet,
    k: usize,
    dt: f64,
    mut fine: Option<&mut Vec<FineSample>>,
) -> Result<(), SimError> {
    let period = plan.period();
    let steps = (period / dt).round();
    if steps < 1.0 || (period / dt - steps).abs() > 1e-9 * steps {
        return Err(Error::Contract(format!("dt = {dt} s does not divide T = {period} s")).into());
    }
    if amps.step() != k {
        return Err(Error::Contract(format!("amplitudes belong to window {}, not {k}", amps.step())).into());
    }
    let steps = steps as usize;
    let n = bodies.len();
    let mut tones: Vec<Vec<(f64, Vec3)>> = vec![Vec::new(); n];
    for ((i, j), p) in amps.iter() {
        let w = plan
            .omega(i, j)
            .ok_or_else(|| Error::Contract(format!("pair ({i}, {j}) has no frequency")))?;
        if i >= n {
            return Err(Error::Contract(format!("amplitude for satellite {i} of {n}")).into());
        }
        if p != Vec3::zeros() {
            tones[i].push((w, p));
        }
    }

    let masses: Vec<f64> = bodies.iter().map(|b| b.mass).collect();
    let damping: Vec<f64> = bodies.iter().map(|b| b.damping).collect();
    let mut x: Vec<Vec3> = bodies.iter().map(|b| b.position).collect();
    let mut v: Vec<Vec3> = bodies.iter().map(|b| b.velocity).collect();
    let mut u = vec![Vec3::zeros(); n];
    let mut xs = vec![Vec3::zeros(); n];
    let mut vs = vec![Vec3::zeros(); n];
    let mut ka = [vec![Vec3::zeros(); n], vec![Vec3::zeros(); n], vec![Vec3::zeros(); n], vec![Vec3::zeros(); n]];
    let mut kv = ka.clone();
    let t0 = k as f64 * period;

    for s in 0..steps {
        let t = t0 + s as f64 * dt;
        let stage_times = [t, t + 0.5 * dt, t + 0.5 * dt, t0 + (s + 1) as f64 * dt];
        for stage in 0..4 {
            let h = match stage {
                0 => 0.0,
                1 | 2 => 0.5 * dt,
                _ => dt,
            };
            for q in 0..n {
                if stage == 0 {
                    xs[q] = x[q];
                    vs[q] = v[q];
                } else {
                    xs[q] = x[q] + kv[stage - 1][q] * h;
                    vs[q] = v[q] + ka[stage - 1][q] * h;
                }
            }
            moments_at(&tones, stage_times[stage], &mut u);
            accelerations_into(&xs, &vs, &masses, &damping, &u, &mut ka[stage]).map_err(|(i, j, sep)| {
                SimError::Aborted {
                    t: stage_times[stage],
                    i,
                    j,
                    separation: sep,
                }
            })?;
            kv[stage].copy_from_slice(&vs);
        }
        for q in 0..n {
            x[q] += (kv[0][q] + kv[1][q] * 2.0 + kv[2][q] * 2.0 + kv[3][q]) * (dt / 6.0);
            v[q] += (ka[0][q] + ka[1][q] * 2.0 + ka[2][q] * 2.0 + ka[3][q]) * (dt / 6.0);
        }
        if let Some(log) = fine.as_deref_mut() {
            log.push(FineSample {
                t: t0 + (s + 1) as f64 * dt,
                positions: x.clone(),
                velocities: v.clone(),
            });
        }
    }
    for (b, (xq, vq)) in bodies.iter_mut().zip(x.into_iter().zip(v)) {
        b.position = xq;
        b.velocity = vq;
    }
    Ok(())
}

/// Full deterministic run. Noise is drawn from a ChaCha8 stream seeded with
/// `s.seed`, one draw per ordered pair per tick in sorted pair order.
pub fn run_scenario(s: &Scenario) -> Result<Telemetry, SimError> {
    s.validate()?;
    let period = s.period();
    let windows = s.windows();
    let mut graph = s.graph.clone();
    let mut bodies = s.bodies.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    let gain = match s.kalman_gain {
        Some([a, b]) => Vector2::new(a, b),
        None => kalman_gain(&solve_dare(&s.kalman)?, &s.kalman)?,
    };
    let mut controllers = (0..graph.n())
        .map(|i| SatelliteController::new(i, &graph, gain, s.band))
        .collect::<Result<Vec<_>, _>>()?;
    let pairs = graph.ordered_pairs();
    let na = s.coil.moment_per_amp();
    let open_loop = match &s.mode {
        Mode::OpenLoop { currents } => Some(currents),
        Mode::ClosedLoop => None,
    };
    let mut setpoints = s.setpoints.clone();
    setpoints.sort_by(|a, b| a.time.total_cmp(&b.time));
    let mut next_setpoint = 0;

    let mut telemetry = Telemetry {
        pairs: pairs.clone(),
        masses: bodies.iter().map(|b| b.mass).collect(),
        rows: Vec::with_capacity(windows + 1),
        fine: Vec::new(),
    };
    let mut previous: BTreeMap<(usize, usize), f64> = pairs.iter().map(|&p| (p, 0.0)).collect();
    let slack = 1e-9 * period;

    for k in 0..=windows {
        let t = k as f64 * period;
        while next_setpoint < setpoints.len() && setpoints[next_setpoint].time <= t + slack {
            let sp = setpoints[next_setpoint];
            graph.set_desired(sp.pair.0, sp.pair.1, sp.desired)?;
            next_setpoint += 1;
        }
        let positions: Vec<Vec3> = bodies.iter().map(|b| b.position).collect();
        let active = t + slack >= s.control_on;
        let prev_moment = |a: usize, b: usize| previous.get(&(a, b)).copied().unwrap_or(0.0);
        let mut reports = Vec::with_capacity(controllers.len());
        {
            let mut sensor = NoisySensor::new(&positions, s.noise_var, &mut rng);
            for c in controllers.iter_mut() {
                let ctx = TickContext {
                    graph: &graph,
                    plan: &s.plan,
                    coil: &s.coil,
                    kalman: &s.kalman,
                    mass: bodies[c.id()].mass,
                    active,
                    open_loop,
                    previous_moment: &prev_moment,
                };
                reports.push(c.tick(k, &ctx, &mut sensor)?);
            }
        }

        let mut amps = AmplitudeSet::zeros(&s.plan, k);
        let mut moment = BTreeMap::new();
        for &(i, j) in &pairs {
            let p = na * reports[i].pairs[&j].current;
            amps.set(i, j, Vec3::new(p, 0.0, 0.0))?;
            moment.insert((i, j), p);
        }
        let mut row_pairs = Vec::with_capacity(pairs.len());
        for &(i, j) in &pairs {
            let rep = reports[i].pairs[&j];
            let force = realized_avg_force_1d(rep.r_hat, moment[&(i, j)], moment[&(j, i)])?;
            row_pairs.push(PairSample {
                q: rep.q,
                r_hat: rep.r_hat,
                v_hat: rep.v_hat,
                current: rep.current,
                force,
                xi: rep.xi,
            });
        }
        telemetry.rows.push(TelemetryRow {
            k,
            t,
            pairs: row_pairs,
            positions,
            velocities: bodies.iter().map(|b| b.velocity).collect(),
            peak_current: reports.iter().map(|r| r.peak_current).collect(),
        });

        if k < windows {
            let fine = s.record_fine.then_some(&mut telemetry.fine);
            integrate_window(&mut bodies, &s.plan, &amps, k, s.dt, fine)?;
        }
        previous = moment;
    }
    Ok(telemetry)
}
