//! One-dimensional current-level controller for satellites riding a common
//! track: coil currents, authority weighting, amplitude saturation and a
//! deadband integrator.
//!
//! Along a single axis the moment of satellite `i` toward neighbor `j` is
//! `p_ij = N A I_ij`, and the averaged shape reduces to
//! `f = −2 sgn(r) p_ij p_ji`.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use crate::amff::sgn;
use crate::em_model::{C0, MIN_SEPARATION};
use crate::error::{Error, Result};

/// Samples per window used to locate the peak of a multi-tone current.
pub const PEAK_GRID: usize = 2000;

/// Coil geometry and current limit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoilSpec {
    pub turns: u32,
    /// m²
    pub area: f64,
    /// Largest current magnitude the driver may produce, A.
    pub max_current: f64,
}

impl Default for CoilSpec {
    /// 500 turns around a 0.1 m radius loop, limited to 2.35 A.
    fn default() -> Self {
        Self {
            turns: 500,
            area: PI * 0.1 * 0.1,
            max_current: 2.35,
        }
    }
}

impl CoilSpec {
    pub fn validate(&self) -> Result<()> {
        if self.turns < 1 {
            return Err(Error::invalid("coil", "turns must be >= 1"));
        }
        if !(self.area > 0.0 && self.area.is_finite()) {
            return Err(Error::invalid("coil", format!("area must be > 0, got {}", self.area)));
        }
        if !(self.max_current > 0.0 && self.max_current.is_finite()) {
            return Err(Error::invalid(
                "coil",
                format!("max current must be > 0, got {}", self.max_current),
            ));
        }
        Ok(())
    }

    /// Moment per ampere, `N A` (A·m² per A).
    pub fn moment_per_amp(&self) -> f64 {
        self.turns as f64 * self.area
    }
}

/// Error band `(ε0, ε1)` inside which the integrator accumulates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Band {
    pub eps0: f64,
    pub eps1: f64,
}

impl Band {
    pub fn new(eps0: f64, eps1: f64) -> Result<Self> {
        let band = Self { eps0, eps1 };
        band.validate()?;
        Ok(band)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps0 > 0.0) {
            return Err(Error::invalid("integrator band", format!("eps0 must be > 0, got {}", self.eps0)));
        }
        if !(self.eps1 > self.eps0 && self.eps1.is_finite()) {
            return Err(Error::invalid(
                "integrator band",
                format!("eps1 must exceed eps0 (eps0 = {}, eps1 = {})", self.eps0, self.eps1),
            ));
        }
        Ok(())
    }

    pub fn contains(&self, err: f64) -> bool {
        let a = err.abs();
        a > self.eps0 && a < self.eps1
    }
}

/// Per-neighbor integrator states of one satellite.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegratorState {
    pub band: Band,
    pub xi: BTreeMap<usize, f64>,
}

impl IntegratorState {
    pub fn new(band: Band, neighbors: &[usize]) -> Self {
        Self {
            band,
            xi: neighbors.iter().map(|&j| (j, 0.0)).collect(),
        }
    }

    /// Advance the state for neighbor `j` and return the new value.
    pub fn update(&mut self, j: usize, r: f64, d: f64) -> f64 {
        let slot = self.xi.entry(j).or_insert(0.0);
        *slot = integrator_update(*slot, r, d, &self.band);
        *slot
    }

    pub fn reset(&mut self) {
        self.xi.values_mut().for_each(|v| *v = 0.0);
    }
}

/// Deadband integrator step: accumulate `r − d` while `|r − d|` lies strictly
/// inside the band, otherwise reset to zero. The error is summed per step,
/// not multiplied by the period.
pub fn integrator_update(xi_prev: f64, r: f64, d: f64, band: &Band) -> f64 {
    let err = r - d;
    if band.contains(err) {
        xi_prev + err
    } else {
        0.0
    }
}

/// Desired scalar force shape with integral action:
/// `−(2 m |r|^4 / c0) (α ((r − d) + β v) + ρ ξ)`.
#[allow(clippy::too_many_arguments)]
pub fn desired_force_1d(r: f64, v: f64, d: f64, xi: f64, alpha: f64, beta: f64, rho: f64, m_sat: f64) -> Result<f64> {
    guard(r)?;
    Ok(-(2.0 * m_sat * r.powi(4) / C0) * (alpha * ((r - d) + beta * v) + rho * xi))
}

fn guard(r: f64) -> Result<()> {
    if !(r.abs() >= MIN_SEPARATION) {
        return Err(Error::SingularSeparation {
            separation: r.abs(),
            min: MIN_SEPARATION,
        });
    }
    Ok(())
}

/// Current amplitude for one end of a pair:
/// `−sgn(f*) √(|f*|/2) / (NA)` when `i − j < 0`, and
/// `+sgn(r) √(|f*|/2) / (NA)` when `i − j > 0`.
///
/// Both ends must evaluate this with the same `(r, f*)`; see [`pair_current`].
pub fn raw_current(r: f64, f_star: f64, i_minus_j: i64, coil: &CoilSpec) -> Result<f64> {
    guard(r)?;
    let mag = (f_star.abs() / 2.0).sqrt() / coil.moment_per_amp();
    match i_minus_j.signum() {
        -1 => Ok(-sgn(f_star) * mag),
        1 => Ok(sgn(r) * mag),
        _ => Err(Error::Contract("a satellite cannot pair with itself".into())),
    }
}

/// Current satellite `i` drives toward `j` from its own view `(r_ij, f*_ij)`.
///
/// The formula is evaluated in the frame of the lower-indexed satellite, so
/// satellite `i > j` passes `(r_ji, f*_ji) = (−r_ij, −f*_ij)`. This makes
/// `−2 sgn(r_ij) p_ij p_ji = f*_ij`.
pub fn pair_current(i: usize, j: usize, r_ij: f64, f_star_ij: f64, coil: &CoilSpec) -> Result<f64> {
    let diff = i as i64 - j as i64;
    if diff < 0 {
        raw_current(r_ij, f_star_ij, diff, coil)
    } else {
        raw_current(-r_ij, -f_star_ij, diff, coil)
    }
}

/// Peak of `|Σ a sin(ω t)|` over `[0, T)` sampled on [`PEAK_GRID`] points.
/// `tones` holds `(amplitude, ω)`.
pub fn peak_window_current(tones: &[(f64, f64)], period: f64) -> f64 {
    let mut peak: f64 = 0.0;
    for s in 0..PEAK_GRID {
        let t = period * s as f64 / PEAK_GRID as f64;
        let sum: f64 = tones.iter().map(|&(a, w)| a * (w * t).sin()).sum();
        peak = peak.max(sum.abs());
    }
    peak
}

/// Weighted currents `γ_ij I*_ij` for one satellite, uniformly scaled by
/// `Ī / peak` when the peak exceeds the limit. `peak` must come from the same
/// weighted set.
pub fn saturate_currents(
    raw: &BTreeMap<usize, f64>,
    gamma: &BTreeMap<usize, f64>,
    peak: f64,
    max_current: f64,
) -> Result<BTreeMap<usize, f64>> {
    let scale = if peak > max_current { max_current / peak } else { 1.0 };
    raw.iter()
        .map(|(&j, &i_star)| {
            let g = gamma
                .get(&j)
                .ok_or_else(|| Error::Contract(format!("no authority weight for neighbor {j}")))?;
            Ok((j, g * i_star * scale))
        })
        .collect()
}

/// Averaged force (N) along the track from moment amplitudes `p_ij`, `p_ji`:
/// `(c0 / (2 r^4)) (−2 sgn(r) p_ij p_ji)`.
pub fn realized_avg_force_1d(r: f64, p_ij: f64, p_ji: f64) -> Result<f64> {
    guard(r)?;
    Ok(C0 / (2.0 * r.powi(4)) * (-2.0 * sgn(r) * p_ij * p_ji))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::amff::{allocate_pair, approx_avg_force};
    use crate::em_model::Vec3;

    fn band() -> Band {
        Band::new(0.015, 0.021).unwrap()
    }

    #[test]
    fn integrator_inside_band_accumulates() {
        let xi = integrator_update(0.002, 0.468, 0.45, &band());
        assert!((xi - 0.02).abs() < 1e-12);
        let xi = integrator_update(0.002, 0.432, 0.45, &band());
        assert!((xi - (0.002 - 0.018)).abs() < 1e-12);
    }

    #[test]
    fn integrator_resets_outside_band() {
        assert_eq!(integrator_update(0.3, 0.5, 0.45, &band()), 0.0);
        assert_eq!(integrator_update(0.3, 0.46, 0.45, &band()), 0.0);
    }

    #[test]
    fn band_validation() {
        assert!(Band::new(0.02, 0.02).is_err());
        assert!(Band::new(0.0, 0.02).is_err());
        assert!(Band::new(0.021, 0.015).is_err());
    }

    #[test]
    fn integrator_state_tracks_neighbors() {
        let mut s = IntegratorState::new(band(), &[1, 2]);
        assert!((s.update(1, 0.468, 0.45) - 0.018).abs() < 1e-12);
        assert!((s.update(1, 0.468, 0.45) - 0.036).abs() < 1e-12);
        assert_eq!(s.xi[&2], 0.0);
        s.reset();
        assert_eq!(s.xi[&1], 0.0);
    }

    #[test]
    fn desired_force_signs() {
        let m = 3.8;
        assert_eq!(desired_force_1d(0.45, 0.0, 0.45, 0.0, 0.0158, 6.89, 0.0, m).unwrap(), 0.0);
        assert!(desired_force_1d(0.5, 0.0, 0.45, 0.0, 0.0158, 6.89, 0.0, m).unwrap() < 0.0);
        assert!(desired_force_1d(0.4, 0.0, 0.45, 0.0, 0.0158, 6.89, 0.0, m).unwrap() > 0.0);
        let with_rho = desired_force_1d(0.4, 0.01, 0.45, 0.0, 0.0158, 6.89, 5.0, m).unwrap();
        let without = desired_force_1d(0.4, 0.01, 0.45, 0.0, 0.0158, 6.89, 0.0, m).unwrap();
        assert_eq!(with_rho, without);
        assert!(desired_force_1d(0.0, 0.0, 0.45, 0.0, 0.0158, 6.89, 0.0, m).is_err());
    }

    #[test]
    fn raw_current_branches() {
        let coil = CoilSpec::default();
        assert_eq!(raw_current(0.4, 0.0, -1, &coil).unwrap(), 0.0);
        assert_eq!(raw_current(0.4, 0.0, 1, &coil).unwrap(), 0.0);
        assert!(raw_current(0.4, 1.0, 0, &coil).is_err());
        let f = 3.0;
        let a = raw_current(0.4, f, -1, &coil).unwrap() * coil.moment_per_amp();
        let b = raw_current(0.4, f, 1, &coil).unwrap() * coil.moment_per_amp();
        assert!((-2.0 * a * b - f).abs() < 1e-12);
    }

    #[test]
    fn raw_current_matches_allocation_on_axis() {
        let coil = CoilSpec::default();
        let na = coil.moment_per_amp();
        for &(r, f) in &[(0.4, 2.0), (0.4, -2.0), (-0.5, 1.5), (-0.5, -0.7)] {
            let pair = allocate_pair(&Vec3::new(r, 0.0, 0.0), &Vec3::new(f, 0.0, 0.0)).unwrap();
            assert!((na * raw_current(r, f, -1, &coil).unwrap() - pair.g.x).abs() < 1e-12);
            assert!((na * raw_current(r, f, 1, &coil).unwrap() - pair.h.x).abs() < 1e-12);
        }
    }

    #[test]
    fn pair_current_realizes_target_from_both_views() {
        let coil = CoilSpec::default();
        let na = coil.moment_per_amp();
        for &(r12, f12) in &[(-0.4, 20.0), (-0.4, -20.0), (0.42, 5.0), (0.42, -5.0)] {
            let p12 = na * pair_current(0, 1, r12, f12, &coil).unwrap();
            let p21 = na * pair_current(1, 0, -r12, -f12, &coil).unwrap();
            assert!((-2.0 * sgn(r12) * p12 * p21 - f12).abs() < 1e-9 * f12.abs());
        }
    }

    #[test]
    fn own_frame_current_reverses_the_force() {
        let coil = CoilSpec::default();
        let na = coil.moment_per_amp();
        let (r12, f12) = (-0.4, 20.0);
        let p12 = na * raw_current(r12, f12, -1, &coil).unwrap();
        let p21 = na * raw_current(-r12, -f12, 1, &coil).unwrap();
        assert!((-2.0 * sgn(r12) * p12 * p21 + f12).abs() < 1e-9 * f12);
    }

    #[test]
    fn peak_single_tone() {
        let w = 40.0 * PI;
        assert!((peak_window_current(&[(1.7, w)], 0.1) - 1.7).abs() < 1e-12);
        assert!((peak_window_current(&[(-0.9, w)], 0.1) - 0.9).abs() < 1e-12);
        assert_eq!(peak_window_current(&[(0.0, w), (0.0, 2.0 * w)], 0.1), 0.0);
    }

    #[test]
    fn peak_two_tones_against_fine_search() {
        let period = 2.0 * PI;
        let grid = peak_window_current(&[(1.0, 1.0), (1.0, 2.0)], period);
        // Golden-section refinement around the coarse maximum of sin x + sin 2x.
        let f = |x: f64| -(x.sin() + (2.0 * x).sin());
        let (mut a, mut b) = (0.5, 1.5);
        let phi = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let c = b - phi * (b - a);
            let d = a + phi * (b - a);
            if f(c) < f(d) {
                b = d;
            } else {
                a = c;
            }
        }
        let exact = -f(0.5 * (a + b));
        assert!((exact - 1.7602).abs() < 1e-4);
        assert!((grid - exact).abs() < 1e-4);
        assert!((1.0..=2.0).contains(&grid));
    }

    #[test]
    fn saturation_scaling() {
        let raw = BTreeMap::from([(1, 1.0), (2, -2.0)]);
        let gamma = BTreeMap::from([(1, 0.8), (2, 0.8)]);
        let same = saturate_currents(&raw, &gamma, 1.0, 2.0).unwrap();
        assert_eq!(same[&1], 0.8);
        assert_eq!(same[&2], -1.6);
        let halved = saturate_currents(&raw, &gamma, 4.0, 2.0).unwrap();
        assert_eq!(halved[&1], 0.4);
        assert_eq!(halved[&2], -0.8);
        assert!(saturate_currents(&raw, &BTreeMap::new(), 1.0, 2.0).is_err());
    }

    #[test]
    fn saturated_waveform_respects_limit() {
        let (w1, w2) = (20.0 * PI, 40.0 * PI);
        let raw = BTreeMap::from([(1, 2.0), (2, 1.9)]);
        let gamma = BTreeMap::from([(1, 0.8), (2, 0.8)]);
        let weighted: Vec<_> = [(0.8 * 2.0, w1), (0.8 * 1.9, w2)].to_vec();
        let peak = peak_window_current(&weighted, 0.1);
        assert!(peak > 2.35);
        let sat = saturate_currents(&raw, &gamma, peak, 2.35).unwrap();
        let after = peak_window_current(&[(sat[&1], w1), (sat[&2], w2)], 0.1);
        assert!(after <= 2.35 + 1e-12);
    }

    #[test]
    fn saturation_attenuates_force_by_product() {
        let coil = CoilSpec::default();
        let na = coil.moment_per_amp();
        let (r, f) = (-0.4, 900.0);
        let imax = coil.max_current;
        let a = pair_current(0, 1, r, f, &coil).unwrap();
        let b = pair_current(1, 0, -r, -f, &coil).unwrap();
        let (peak_a, peak_b) = (a.abs(), b.abs());
        let sa = a * imax / peak_a.max(imax);
        let sb = b * imax / peak_b.max(imax);
        let realized = -2.0 * sgn(r) * (na * sa) * (na * sb);
        let factor = imax * imax / (peak_a.max(imax) * peak_b.max(imax));
        assert!((realized - factor * f).abs() < 1e-9 * f);
    }

    #[test]
    fn gamma_leaves_force_unchanged() {
        let coil = CoilSpec::default();
        let na = coil.moment_per_amp();
        let (r, f) = (0.42, -3.0);
        let a = pair_current(0, 1, r, f, &coil).unwrap();
        let b = pair_current(1, 0, -r, -f, &coil).unwrap();
        for gamma in [0.1, 0.8, 1.25, 7.0] {
            let weighted = realized_avg_force_1d(r, na * gamma * a, na * b / gamma).unwrap();
            let plain = realized_avg_force_1d(r, na * a, na * b).unwrap();
            assert!((weighted - plain).abs() <= 1e-12 * plain.abs());
        }
    }

    #[test]
    fn realized_force_examples() {
        let na = 500.0 * 0.1 * PI * PI;
        let f = realized_avg_force_1d(0.45, na, na).unwrap();
        let expected = -3e-7 * na * na / 0.45f64.powi(4);
        assert!((f - expected).abs() < 1e-12 * expected.abs());
        assert!((f - -1.7816).abs() < 1e-3);
        assert_eq!(realized_avg_force_1d(0.45, 0.0, na).unwrap(), 0.0);
        let on_axis = approx_avg_force(&Vec3::new(-0.3, 0.0, 0.0), &Vec3::new(2.0, 0.0, 0.0), &Vec3::new(-5.0, 0.0, 0.0))
            .unwrap();
        assert!((realized_avg_force_1d(-0.3, 2.0, -5.0).unwrap() - on_axis.x).abs() < 1e-15);
    }

    #[test]
    fn unsaturated_pipeline_commands_spring_force() {
        let coil = CoilSpec::default();
        let na = coil.moment_per_amp();
        let m = 3.80417;
        let (r, v, d, xi) = (-0.43, 0.004, -0.45, 0.017);
        let (alpha, beta, rho) = (0.0158, 7.38, 0.00136);
        let f = desired_force_1d(r, v, d, xi, alpha, beta, rho, m).unwrap();
        let p12 = na * pair_current(0, 1, r, f, &coil).unwrap();
        let p21 = na * pair_current(1, 0, -r, -f, &coil).unwrap();
        let fhat = realized_avg_force_1d(r, p12, p21).unwrap();
        let expected = -m * (alpha * ((r - d) + beta * v) + rho * xi);
        assert!((fhat - expected).abs() <= 1e-9 * expected.abs());
    }
}
