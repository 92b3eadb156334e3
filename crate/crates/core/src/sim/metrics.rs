use rayon::prelude::*;

use super::engine::{run_scenario, PairSeries, SimError};
use super::scenario::Scenario;
use crate::error::{Error, Result};

/// Settling band as a fraction of `|d|`.
pub const SETTLING_FRACTION: f64 = 0.01;

/// Transient performance of one pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    /// Largest excursion of `|r̂|` past `|d|` in the direction of approach, cm.
    /// Negative when the target is never reached.
    pub overshoot_cm: f64,
    /// Time after the evaluation start from which `|r̂|` stays within 1% of
    /// `|d|`; `None` if it is still outside at the last sample.
    pub settling_time: Option<f64>,
    /// `max |F̂|`, N.
    pub max_force: f64,
    /// `√(mean F̂²)`, N.
    pub force_rms: f64,
    /// Number of samples evaluated.
    pub samples: usize,
}

/// Metrics of `series` against target `d`, using samples with `t ≥ from_t`.
/// Settling time is measured from `from_t`.
pub fn compute_metrics(series: &PairSeries, d: f64, from_t: f64) -> Result<Metrics> {
    let start = series.t.iter().position(|&t| t >= from_t - 1e-9);
    let Some(start) = start else {
        return Err(Error::invalid("telemetry", format!("no samples at or after t = {from_t} s")));
    };
    let target = d.abs();
    let r: Vec<f64> = series.r_hat[start..].iter().map(|x| x.abs()).collect();
    let t = &series.t[start..];
    let f = &series.force[start..];

    let direction = if r[0] > target { -1.0 } else { 1.0 };
    let overshoot = r
        .iter()
        .map(|&x| direction * (x - target))
        .fold(f64::NEG_INFINITY, f64::max);

    let tol = SETTLING_FRACTION * target;
    let settling_time = match r.iter().rposition(|&x| (x - target).abs() > tol) {
        None => Some(t[0] - from_t.min(t[0])),
        Some(last) if last + 1 < r.len() => Some(t[last + 1] - from_t),
        Some(_) => None,
    };

    let max_force = f.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let force_rms = (f.iter().map(|x| x * x).sum::<f64>() / f.len() as f64).sqrt();
    Ok(Metrics {
        overshoot_cm: overshoot * 100.0,
        settling_time,
        max_force,
        force_rms,
        samples: r.len(),
    })
}

/// Mean and sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Some(Self { mean, std })
    }
}

/// Which pair to score, against which target, from which time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricSpec {
    pub pair: (usize, usize),
    pub desired: f64,
    pub from_t: f64,
}

impl MetricSpec {
    /// Pair `(0, 1)` scored against its final target from its last setpoint switch.
    pub fn default_for(s: &Scenario) -> Option<Self> {
        let pair = *s.graph.ordered_pairs().first()?;
        let desired = s.desired_at(pair.0, pair.1, f64::INFINITY)?;
        let from_t = s.last_switch(pair.0, pair.1).unwrap_or(0.0);
        Some(Self { pair, desired, from_t })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarlo {
    pub seeds: Vec<u64>,
    /// In seed order.
    pub runs: Vec<Metrics>,
    pub overshoot_cm: Stat,
    /// Over settled runs only.
    pub settling_time: Option<Stat>,
    pub unsettled: usize,
    pub max_force: Stat,
    pub force_rms: Stat,
    /// Largest peak current seen in any run, A.
    pub max_peak_current: f64,
}

/// Independent runs of `s` for each seed, in parallel, merged in seed order.
pub fn monte_carlo(s: &Scenario, seeds: &[u64], spec: &MetricSpec) -> Result<MonteCarlo, SimError> {
    if seeds.is_empty() {
        return Err(Error::invalid("monte carlo", "needs at least one seed").into());
    }
    let results: Vec<Result<(Metrics, f64), SimError>> = seeds
        .par_iter()
        .map(|&seed| {
            let mut run = s.clone();
            run.seed = seed;
            let tel = run_scenario(&run)?;
            let series = tel
                .series(spec.pair.0, spec.pair.1)
                .ok_or_else(|| Error::Contract(format!("pair {:?} not logged", spec.pair)))?;
            Ok((compute_metrics(&series, spec.desired, spec.from_t)?, tel.max_peak_current()))
        })
        .collect();
    let mut runs = Vec::with_capacity(seeds.len());
    let mut peak: f64 = 0.0;
    for r in results {
        let (m, p) = r?;
        runs.push(m);
        peak = peak.max(p);
    }
    let col = |f: fn(&Metrics) -> f64| runs.iter().map(f).collect::<Vec<_>>();
    let settled: Vec<f64> = runs.iter().filter_map(|m| m.settling_time).collect();
    Ok(MonteCarlo {
        seeds: seeds.to_vec(),
        overshoot_cm: Stat::of(&col(|m| m.overshoot_cm)).expect("non-empty"),
        settling_time: Stat::of(&settled),
        unsettled: runs.len() - settled.len(),
        max_force: Stat::of(&col(|m| m.max_force)).expect("non-empty"),
        force_rms: Stat::of(&col(|m| m.force_rms)).expect("non-empty"),
        max_peak_current: peak,
        runs,
    })
}
