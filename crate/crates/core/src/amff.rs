//! Alternating magnetic field forces: frequency-multiplexed sinusoidal moments,
//! their time average, and the closed-form amplitude pair that realizes a
//! prescribed force shape.
//!
//! Over a control window `[kT, kT + T)` every satellite drives
//!
//! ```text
//! u_i(t) = Σ_j p_ij,k sin(ω_ij t)
//! ```
//!
//! with one frequency per unordered pair. Because `T` holds a whole number of
//! periods of every tone, cross-frequency products average to zero and the
//! window-averaged shape between `i` and `j` only sees their shared tone:
//! `½ f(r, p_ij, p_ji)`. [`allocate_pair`] inverts that relation.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use crate::em_model::{force_shape, Vec3, C0, MIN_SEPARATION};
use crate::error::{Error, Result};

/// Relative tolerance for "T is a whole number of periods".
pub const PERIOD_MULTIPLE_TOL: f64 = 1e-9;

/// `r × f*` is treated as zero below this fraction of `|r| |f*|`.
pub const COLLINEAR_TOL: f64 = 1e-12;

/// Default node count of the Simpson oracle (intervals; nodes = intervals + 1).
pub const ORACLE_INTERVALS: usize = 4096;

/// Sign function with `sgn(0) = 0`.
#[inline]
pub fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[inline]
fn key(i: usize, j: usize) -> (usize, usize) {
    (i.min(j), i.max(j))
}

/// Interaction frequency of every coupled pair plus the common control period.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyPlan {
    pair_freq: BTreeMap<(usize, usize), f64>,
    period: f64,
}

impl FrequencyPlan {
    /// `pairs` lists unordered pairs (either orientation) with their ω in rad/s.
    pub fn new(period: f64, pairs: impl IntoIterator<Item = ((usize, usize), f64)>) -> Result<Self> {
        let mut pair_freq = BTreeMap::new();
        for ((i, j), w) in pairs {
            if i == j {
                return Err(Error::invalid("frequency plan", format!("pair ({i}, {i}) is not a pair")));
            }
            if pair_freq.insert(key(i, j), w).is_some() {
                return Err(Error::invalid("frequency plan", format!("pair ({i}, {j}) listed twice")));
            }
        }
        let plan = Self { pair_freq, period };
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.period > 0.0 && self.period.is_finite()) {
            return Err(Error::invalid("frequency plan", format!("period must be > 0, got {}", self.period)));
        }
        let entries: Vec<_> = self.pair_freq.iter().collect();
        for (idx, (&(i, j), &w)) in entries.iter().enumerate() {
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::invalid(
                    "frequency plan",
                    format!("omega for pair ({i}, {j}) must be > 0, got {w}"),
                ));
            }
            let cycles = self.period * w / (2.0 * PI);
            let whole = cycles.round();
            if whole < 1.0 || (cycles - whole).abs() > PERIOD_MULTIPLE_TOL * cycles {
                return Err(Error::invalid(
                    "frequency plan",
                    format!(
                        "period {} s is not a whole multiple of 2π/ω for pair ({i}, {j}) ({cycles} cycles)",
                        self.period
                    ),
                ));
            }
            for (&(a, b), &w2) in &entries[idx + 1..] {
                if (w - w2).abs() <= 1e-12 * w.max(w2) {
                    return Err(Error::invalid(
                        "frequency plan",
                        format!("pairs ({i}, {j}) and ({a}, {b}) share omega = {w}"),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn omega(&self, i: usize, j: usize) -> Option<f64> {
        self.pair_freq.get(&key(i, j)).copied()
    }

    /// Unordered pairs `(lo, hi)` with their frequency.
    pub fn pairs(&self) -> impl Iterator<Item = ((usize, usize), f64)> + '_ {
        self.pair_freq.iter().map(|(&k, &w)| (k, w))
    }

    pub fn shortest_period(&self) -> f64 {
        self.pair_freq
            .values()
            .map(|w| 2.0 * PI / w)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Moment amplitudes `p_ij,k` for one control window.
#[derive(Debug, Clone, PartialEq)]
pub struct AmplitudeSet {
    step: usize,
    amp: BTreeMap<(usize, usize), Vec3>,
}

impl AmplitudeSet {
    /// Zero amplitudes for both orientations of every pair in `plan`.
    pub fn zeros(plan: &FrequencyPlan, step: usize) -> Self {
        let mut amp = BTreeMap::new();
        for ((i, j), _) in plan.pairs() {
            amp.insert((i, j), Vec3::zeros());
            amp.insert((j, i), Vec3::zeros());
        }
        Self { step, amp }
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn get(&self, i: usize, j: usize) -> Option<Vec3> {
        self.amp.get(&(i, j)).copied()
    }

    pub fn set(&mut self, i: usize, j: usize, p: Vec3) -> Result<()> {
        match self.amp.get_mut(&(i, j)) {
            Some(slot) => {
                *slot = p;
                Ok(())
            }
            None => Err(Error::Contract(format!("no amplitude slot for ordered pair ({i}, {j})"))),
        }
    }

    /// Ordered pairs `(i, j)` with amplitude `p_ij`.
    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize), Vec3)> + '_ {
        self.amp.iter().map(|(&k, &v)| (k, v))
    }
}

/// `u_i(t) = Σ_j p_ij,k sin(ω_ij t)` for `t` in window `k`.
pub fn moment_waveform(i: usize, t: f64, plan: &FrequencyPlan, amps: &AmplitudeSet, k: usize) -> Result<Vec3> {
    if amps.step != k {
        return Err(Error::Contract(format!("amplitudes belong to window {}, not {k}", amps.step)));
    }
    let start = k as f64 * plan.period;
    let slack = 1e-12 * start.abs().max(1.0);
    if t < start - slack || t >= start + plan.period - slack {
        return Err(Error::Contract(format!(
            "t = {t} s lies outside window {k} [{start}, {}) s",
            start + plan.period
        )));
    }
    let mut u = Vec3::zeros();
    for (&(a, j), p) in amps.amp.range((i, 0)..=(i, usize::MAX)) {
        debug_assert_eq!(a, i);
        let w = plan
            .omega(i, j)
            .ok_or_else(|| Error::Contract(format!("pair ({i}, {j}) has no frequency")))?;
        u += p * (w * t).sin();
    }
    Ok(u)
}

/// Window average of the shape between two same-frequency sinusoidal moments:
/// `½ f(r, p_ij, p_ji)`.
pub fn averaged_force_shape(r: &Vec3, p_ij: &Vec3, p_ji: &Vec3) -> Result<Vec3> {
    Ok(force_shape(r, p_ij, p_ji)? * 0.5)
}

/// Composite-Simpson time average of `f(r, u_i(t), u_j(t))` over `[kT, kT + T)`
/// with `r` frozen. `intervals` is rounded up to an even number and is at least
/// [`ORACLE_INTERVALS`].
pub fn numeric_average_oracle<Fi, Fj>(
    r: &Vec3,
    waveform_i: Fi,
    waveform_j: Fj,
    k: usize,
    period: f64,
    intervals: usize,
) -> Result<Vec3>
where
    Fi: Fn(f64) -> Vec3,
    Fj: Fn(f64) -> Vec3,
{
    let n = intervals.max(ORACLE_INTERVALS).next_multiple_of(2);
    let t0 = k as f64 * period;
    let h = period / n as f64;
    let mut acc = Vec3::zeros();
    for s in 0..=n {
        let t = t0 + s as f64 * h;
        let weight = if s == 0 || s == n {
            1.0
        } else if s % 2 == 1 {
            4.0
        } else {
            2.0
        };
        acc += force_shape(r, &waveform_i(t), &waveform_j(t))? * weight;
    }
    Ok(acc * (h / 3.0) / period)
}

/// Approximate average intersatellite force (N) over a window with the
/// separation frozen at its sample: `c0 / (2|r|^4) f(r, p_ij, p_ji)`.
pub fn approx_avg_force(r: &Vec3, p_ij: &Vec3, p_ji: &Vec3) -> Result<Vec3> {
    let shape = force_shape(r, p_ij, p_ji)?;
    Ok(shape * (C0 / (2.0 * r.norm().powi(4))))
}

/// Scalar ingredients of the closed-form amplitude pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairComponents {
    pub g_r: f64,
    pub g_rf: f64,
    pub h_r: f64,
    pub h_rf: f64,
    pub phi1: f64,
    pub phi2: f64,
    /// Whether `r × f*` was treated as zero.
    pub collinear: bool,
}

/// Amplitude pair `(g, h)` with `f(r, g, h) = f*`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmplitudePair {
    pub g: Vec3,
    pub h: Vec3,
}

/// Scalar components `g_r, g_rf, h_r, h_rf` and `Φ1, Φ2` for `(r, f*)`.
pub fn pair_components(r: &Vec3, f_star: &Vec3) -> Result<PairComponents> {
    let rn = r.norm();
    if !(rn >= MIN_SEPARATION) {
        return Err(Error::SingularSeparation {
            separation: rn,
            min: MIN_SEPARATION,
        });
    }
    let rf = r.dot(f_star);
    let rf_abs = rf.abs();
    let s = sgn(rf);
    let cross = r.cross(f_star);
    let c2 = cross.norm_squared();
    let phi1 = (c2 + rn * rn * f_star.norm_squared()).sqrt();
    let phi2 = (2.0 - s * s) * phi1;

    // Φ1² − (r·f*)² = 2|r×f*|², so Φ1 − |r·f*| is formed without cancellation.
    let phi1_minus = if phi1 + rf_abs > 0.0 {
        2.0 * c2 / (phi1 + rf_abs)
    } else {
        0.0
    };
    let phi2_minus = if s == 0.0 { phi2 } else { phi1_minus };

    let g_r = -0.5 * s * ((rf_abs + phi1) / rn).sqrt();
    let g_rf = (phi2_minus / rn).sqrt() / std::f64::consts::SQRT_2;
    let h_r = 0.5 * ((rf_abs + phi2) / rn).sqrt();
    let h_rf = -s * (phi1_minus / rn).sqrt() / std::f64::consts::SQRT_2;

    let collinear = c2.sqrt() <= COLLINEAR_TOL * rn * f_star.norm();
    Ok(PairComponents {
        g_r,
        g_rf,
        h_r,
        h_rf,
        phi1,
        phi2,
        collinear,
    })
}

/// Closed-form amplitude pair: `f(r, g(r, f*), h(r, f*)) = f*` for all `r ≠ 0`.
///
/// Both amplitudes lie in the plane of `r` and `f*`: a radial part along `r̂`
/// and, unless `r × f*` vanishes, a transverse part along `(r × f*) × r`.
pub fn allocate_pair(r: &Vec3, f_star: &Vec3) -> Result<AmplitudePair> {
    let c = pair_components(r, f_star)?;
    let rn = r.norm();
    let radial = r / rn;
    if c.collinear {
        return Ok(AmplitudePair {
            g: radial * c.g_r,
            h: radial * c.h_r,
        });
    }
    let cross = r.cross(f_star);
    let transverse = cross.cross(r) / (rn * cross.norm());
    Ok(AmplitudePair {
        g: radial * c.g_r + transverse * c.g_rf,
        h: radial * c.h_r + transverse * c.h_rf,
    })
}

/// Amplitude satellite `i` drives toward neighbor `j`, given its own view
/// `r_ij = r_i − r_j` and desired shape `f*_ij`.
///
/// The pair is always allocated in the frame of its lower-indexed member: the
/// lower index takes `g(r, f*)` and the higher index takes `h(r, f*)` with
/// `(r, f*) = (r_lo,hi, f*_lo,hi)`. Since `f*_ji = −f*_ij`, satellite `i > j`
/// evaluates `h(−r_ij, −f*_ij)`. Evaluating `h` in its own frame instead would
/// produce `f(r, p_ij, p_ji) = −f*` because `h(−r, −f*) = −h(r, f*)`.
pub fn select_amplitudes(i: usize, j: usize, r_ij: &Vec3, f_star_ij: &Vec3) -> Result<Vec3> {
    use std::cmp::Ordering;
    match i.cmp(&j) {
        Ordering::Less => Ok(allocate_pair(r_ij, f_star_ij)?.g),
        Ordering::Greater => Ok(allocate_pair(&-r_ij, &-f_star_ij)?.h),
        Ordering::Equal => Err(Error::Contract(format!("satellite {i} cannot pair with itself"))),
    }
}
