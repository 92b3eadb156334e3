//! Self-checks of the analytic results the library relies on, runnable from
//! the command line. Each suite reports pass/fail with its worst error.
//!
//! The allocation suites take the allocator as a parameter so a deliberately
//! broken one (see [`faults`]) can confirm that they catch real mistakes.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::Vector2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::amff::{approx_avg_force, averaged_force_shape, numeric_average_oracle, AmplitudePair, ORACLE_INTERVALS};
use crate::config::load_bundled;
use crate::em_model::{force_shape, Vec3};
use crate::error::Result;
use crate::estimator::{dare_residual, error_spectral_radius, kalman_gain, solve_dare, KalmanConfig};
use crate::formation::desired_force_shape;
use crate::sim::run_scenario;

fn show(v: &Vec3) -> String {
    format!("({:.4e}, {:.4e}, {:.4e})", v.x, v.y, v.z)
}

pub type Allocator = fn(&Vec3, &Vec3) -> Result<AmplitudePair>;

/// Relative tolerance of the allocation identity.
pub const ALLOCATION_TOL: f64 = 1e-9;
/// Relative tolerance of analytic versus quadrature averages.
pub const AVERAGING_TOL: f64 = 1e-9;
/// Bound on `‖map(P) − P‖∞`.
pub const RICCATI_TOL: f64 = 1e-12;
/// Momentum drift relative to `max(1, Σ|m v0|)`.
pub const MOMENTUM_TOL: f64 = 1e-9;

/// Onboard filter gains reported for the two testbed configurations, as
/// `(V, L)` with `T = 0.1 s` and `w = 5e-6`.
pub const REFERENCE_GAINS: [(f64, [f64; 2]); 2] = [(1.2e-6, [0.0942, 0.0466]), (2e-6, [0.1064, 0.0598])];

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteResult {
    pub name: &'static str,
    pub passed: bool,
    pub cases: usize,
    pub worst: f64,
    pub detail: String,
}

impl fmt::Display for SuiteResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {:<22} cases={:<6} worst={:.3e}  {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.cases,
            self.worst,
            self.detail
        )
    }
}

/// Riccati gain for one reference configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct GainReport {
    pub meas_var: f64,
    pub gain: [f64; 2],
    pub reference: [f64; 2],
    pub abs_error: [f64; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub suites: Vec<SuiteResult>,
    pub gains: Vec<GainReport>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.suites.iter().all(|s| s.passed)
    }
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo..hi)
}

fn vec_in(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> Vec3 {
    Vec3::new(uniform(rng, lo, hi), uniform(rng, lo, hi), uniform(rng, lo, hi))
}

fn random_perpendicular(rng: &mut ChaCha8Rng, r: &Vec3, scale: f64) -> Vec3 {
    let v = vec_in(rng, -1.0, 1.0);
    let p = v - r * (v.dot(r) / r.norm_squared());
    p * (scale / p.norm().max(1e-300))
}

/// `|f(r, g, h) − f*| ≤ tol · max(1, |f*|)` on fuzz cases over
/// `r ∈ [0.1, 2]³`, `f* ∈ [−10, 10]³` plus the `r·f* = 0`, `r × f* = 0` and
/// `f* = 0` manifolds.
pub fn allocation_suite(allocate: Allocator, fuzz: usize, seed: u64) -> SuiteResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    let mut failure = None;
    let mut check = |r: Vec3, f: Vec3, tag: &str| {
        cases += 1;
        let err = match allocate(&r, &f).and_then(|p| force_shape(&r, &p.g, &p.h)) {
            Ok(real) => (real - f).norm() / f.norm().max(1.0),
            Err(_) => f64::INFINITY,
        };
        if err > worst {
            worst = err;
        }
        if err > ALLOCATION_TOL && failure.is_none() {
            failure = Some(format!("{tag}: r = {}, f* = {}", show(&r), show(&f)));
        }
    };
    for _ in 0..fuzz {
        let r = vec_in(&mut rng, 0.1, 2.0);
        let f = vec_in(&mut rng, -10.0, 10.0);
        check(r, f, "fuzz");
    }
    for _ in 0..(fuzz / 10).max(10) {
        let r = vec_in(&mut rng, 0.1, 2.0);
        let scale = uniform(&mut rng, 0.0, 10.0);
        check(r, random_perpendicular(&mut rng, &r, scale), "r·f* = 0");
        check(r, r * uniform(&mut rng, -5.0, 5.0), "r × f* = 0");
        check(r, Vec3::zeros(), "f* = 0");
    }
    SuiteResult {
        name: "allocation",
        passed: failure.is_none(),
        cases,
        worst,
        detail: failure.unwrap_or_else(|| "f(r, g, h) = f*".into()),
    }
}

/// Desired shape → allocation → averaged force equals `−m α ((r − d) + β v)`.
pub fn spring_dashpot_suite(allocate: Allocator, fuzz: usize, seed: u64) -> SuiteResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut failure = None;
    for _ in 0..fuzz {
        let r = vec_in(&mut rng, 0.1, 2.0);
        let d = vec_in(&mut rng, 0.1, 2.0);
        let v = vec_in(&mut rng, -0.1, 0.1);
        let alpha = uniform(&mut rng, 1e-3, 0.1);
        let beta = uniform(&mut rng, 0.5, 10.0);
        let m = uniform(&mut rng, 0.5, 10.0);
        let expected = -((r - d) + v * beta) * (m * alpha);
        let err = desired_force_shape(&r, &v, &d, alpha, beta, m)
            .and_then(|f| allocate(&r, &f))
            .and_then(|p| approx_avg_force(&r, &p.g, &p.h))
            .map(|got| (got - expected).norm() / expected.norm().max(1e-300))
            .unwrap_or(f64::INFINITY);
        worst = worst.max(err);
        if err > ALLOCATION_TOL && failure.is_none() {
            failure = Some(format!("r = {}, d = {}, v = {}", show(&r), show(&d), show(&v)));
        }
    }
    SuiteResult {
        name: "spring-dashpot",
        passed: failure.is_none(),
        cases: fuzz,
        worst,
        detail: failure.unwrap_or_else(|| "F̂ = −mα((r−d)+βv)".into()),
    }
}

/// Analytic window average against composite Simpson on same-frequency
/// pairs, and vanishing averages on cross-frequency pairs.
pub fn averaging_suite(cases: usize, seed: u64) -> SuiteResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let period = 0.1;
    let tones = [20.0 * PI, 40.0 * PI, 60.0 * PI, 100.0 * PI];
    let mut worst: f64 = 0.0;
    let mut failure = None;
    for n in 0..cases {
        let r = vec_in(&mut rng, -2.0, 2.0);
        if r.norm() < 0.1 {
            continue;
        }
        let a = vec_in(&mut rng, -50.0, 50.0);
        let b = vec_in(&mut rng, -50.0, 50.0);
        let w = tones[n % tones.len()];
        let k = rng.random_range(0..1000);
        let same = numeric_average_oracle(&r, |t| a * (w * t).sin(), |t| b * (w * t).sin(), k, period, ORACLE_INTERVALS);
        let analytic = averaged_force_shape(&r, &a, &b);
        let err = match (same, analytic) {
            (Ok(q), Ok(an)) => (q - an).norm() / an.norm().max(1e-300),
            _ => f64::INFINITY,
        };
        worst = worst.max(err);
        if err > AVERAGING_TOL && failure.is_none() {
            failure = Some(format!("same-frequency case {n}"));
        }

        let w2 = tones[(n + 1) % tones.len()];
        let scale = a.norm() * b.norm();
        let cross = numeric_average_oracle(&r, |t| a * (w * t).sin(), |t| b * (w2 * t).sin(), k, period, ORACLE_INTERVALS)
            .map(|q| q.norm() / scale)
            .unwrap_or(f64::INFINITY);
        worst = worst.max(cross);
        if cross > AVERAGING_TOL && failure.is_none() {
            failure = Some(format!("cross-frequency case {n}"));
        }
    }
    SuiteResult {
        name: "averaging",
        passed: failure.is_none(),
        cases: 2 * cases,
        worst,
        detail: failure.unwrap_or_else(|| "½f(r,p,p') matches quadrature; cross tones vanish".into()),
    }
}

/// Riccati fixed point, filter stability and gain monotonicity for both
/// reference configurations. Also returns the gains with their distance from
/// the reference values.
pub fn riccati_suite() -> (SuiteResult, Vec<GainReport>) {
    let mut worst: f64 = 0.0;
    let mut failure = None;
    let mut gains = Vec::new();
    for (v, reference) in REFERENCE_GAINS {
        let cfg = KalmanConfig {
            period: 0.1,
            meas_var: v,
            dist_var: 5e-6,
        };
        let noisy = KalmanConfig { meas_var: 100.0 * v, ..cfg };
        let outcome = (|| -> Result<(Vector2<f64>, f64, f64, Vector2<f64>)> {
            let p = solve_dare(&cfg)?;
            let l = kalman_gain(&p, &cfg)?;
            let l_noisy = kalman_gain(&solve_dare(&noisy)?, &noisy)?;
            Ok((l, dare_residual(&p, &cfg), error_spectral_radius(&l, &cfg), l_noisy))
        })();
        match outcome {
            Ok((l, residual, radius, l_noisy)) => {
                worst = worst.max(residual);
                if residual > RICCATI_TOL && failure.is_none() {
                    failure = Some(format!("V = {v}: residual {residual:e}"));
                }
                if !(radius < 1.0) && failure.is_none() {
                    failure = Some(format!("V = {v}: spectral radius {radius}"));
                }
                if !(l_noisy[0] < l[0] && l_noisy[1] < l[1]) && failure.is_none() {
                    failure = Some(format!("V = {v}: gain does not drop with noisier sensor"));
                }
                gains.push(GainReport {
                    meas_var: v,
                    gain: [l[0], l[1]],
                    reference,
                    abs_error: [(l[0] - reference[0]).abs(), (l[1] - reference[1]).abs()],
                });
            }
            Err(e) => {
                failure.get_or_insert(format!("V = {v}: {e}"));
            }
        }
    }
    (
        SuiteResult {
            name: "riccati",
            passed: failure.is_none(),
            cases: REFERENCE_GAINS.len(),
            worst,
            detail: failure.unwrap_or_else(|| "fixed point, stable, monotone in V".into()),
        },
        gains,
    )
}

/// Total momentum of an undamped three-satellite closed-loop run.
pub fn momentum_suite(duration: f64) -> SuiteResult {
    let outcome = (|| -> std::result::Result<f64, String> {
        let mut s = load_bundled("exp6_three_repulsion").map_err(|e| e.to_string())?;
        for b in &mut s.bodies {
            b.damping = 0.0;
        }
        s.duration = duration;
        let tel = run_scenario(&s).map_err(|e| e.to_string())?;
        let p = tel.momentum();
        let scale = tel.rows[0]
            .velocities
            .iter()
            .zip(&tel.masses)
            .map(|(v, m)| (v * *m).norm())
            .sum::<f64>()
            .max(1.0);
        Ok(p.iter().map(|q| (q - p[0]).norm()).fold(0.0, f64::max) / scale)
    })();
    match outcome {
        Ok(drift) => SuiteResult {
            name: "momentum",
            passed: drift <= MOMENTUM_TOL,
            cases: 1,
            worst: drift,
            detail: format!("3 satellites, {duration} s, no damping"),
        },
        Err(e) => SuiteResult {
            name: "momentum",
            passed: false,
            cases: 1,
            worst: f64::INFINITY,
            detail: e,
        },
    }
}

/// All suites with `allocate` as the allocator.
pub fn run_suites(allocate: Allocator) -> VerifyReport {
    let (riccati, gains) = riccati_suite();
    VerifyReport {
        suites: vec![
            allocation_suite(allocate, 10_000, 0x5eed),
            spring_dashpot_suite(allocate, 1_000, 0x5eed + 1),
            averaging_suite(100, 0x5eed + 2),
            riccati,
            momentum_suite(100.0),
        ],
        gains,
    }
}

/// Deliberately wrong allocators for checking that the suites catch mistakes.
pub mod faults {
    use super::*;
    use crate::amff::pair_components;

    /// The closed-form pair with the sign of the radial part of `h` flipped.
    pub fn flipped_h_radial(r: &Vec3, f_star: &Vec3) -> Result<AmplitudePair> {
        let c = pair_components(r, f_star)?;
        let pair = crate::amff::allocate_pair(r, f_star)?;
        let radial = r / r.norm();
        Ok(AmplitudePair {
            g: pair.g,
            h: pair.h - radial * (2.0 * c.h_r),
        })
    }
}
