//! Sampled-data closed-loop simulation: fixed-step RK4 integration of the
//! n-body dipole dynamics between control ticks, noisy range sensing, per
//! satellite estimation and current allocation, telemetry and metrics.

mod control;
mod engine;
mod metrics;
mod scenario;

pub use control::{NoisySensor, PairReport, RelativeSensor, SatelliteController, TickContext, TickReport};
pub use engine::{
    integrate_window, run_scenario, FineSample, PairSample, PairSeries, SimError, Telemetry, TelemetryRow,
};
pub use metrics::{compute_metrics, monte_carlo, MetricSpec, Metrics, MonteCarlo, Stat, SETTLING_FRACTION};
pub use scenario::{Mode, Scenario, SetpointChange, DIVISIBILITY_TOL};
