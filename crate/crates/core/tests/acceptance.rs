//! Acceptance checks: one PASS/FAIL line per criterion, nonzero exit if any
//! fails. Every tolerance is pinned here rather than borrowed from the library.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use emff::amff::allocate_pair;
use emff::config::{load_bundled, BUNDLED};
use emff::estimator::{kalman_gain, solve_dare, KalmanConfig};
use emff::sim::{compute_metrics, monte_carlo, run_scenario, MetricSpec, MonteCarlo, Telemetry};
use emff::telemetry_csv::write_csv;
use emff::verify;

const SEEDS: u64 = 20;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(checks: &[(bool, String)]) -> Outcome {
    Outcome {
        passed: checks.iter().all(|(ok, _)| *ok),
        detail: checks
            .iter()
            .map(|(ok, s)| format!("{}{s}", if *ok { "" } else { "[x] " }))
            .collect::<Vec<_>>()
            .join("; "),
    }
}

fn within(x: f64, lo: f64, hi: f64) -> bool {
    (lo..=hi).contains(&x)
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let start = Instant::now();
    let v = f();
    (v, start.elapsed())
}

fn kalman_gains() -> Outcome {
    const TOL: f64 = 5e-4;
    let (res, took) = timed(|| {
        [(1.2e-6, [0.0942, 0.0466]), (2e-6, [0.1064, 0.0598])].map(|(v, reference)| {
            let cfg = KalmanConfig::new(0.1, v, 5e-6).unwrap();
            let l = kalman_gain(&solve_dare(&cfg).unwrap(), &cfg).unwrap();
            let ok = (l[0] - reference[0]).abs() <= TOL && (l[1] - reference[1]).abs() <= TOL;
            (
                ok,
                format!(
                    "V={v:e}: L=[{:.4}, {:.4}] vs [{}, {}]",
                    l[0], l[1], reference[0], reference[1]
                ),
            )
        })
    });
    let mut checks = res.to_vec();
    checks.push((took < Duration::from_secs(1), format!("{:.3} s", took.as_secs_f64())));
    outcome(&checks)
}

fn allocation() -> Outcome {
    const TOL: f64 = 1e-9;
    let (suite, took) = timed(|| verify::allocation_suite(allocate_pair, 10_000, 2024));
    outcome(&[
        (suite.passed && suite.worst <= TOL, format!("{} cases, worst {:.2e}", suite.cases, suite.worst)),
        (suite.cases >= 10_000 + 3, "fuzz plus three manifolds".into()),
        (took < Duration::from_secs(5), format!("{:.3} s", took.as_secs_f64())),
    ])
}

fn averaging() -> Outcome {
    const TOL: f64 = 1e-9;
    let (suite, took) = timed(|| verify::averaging_suite(100, 2025));
    outcome(&[
        (suite.passed && suite.worst <= TOL, format!("{} cases, worst {:.2e}", suite.cases, suite.worst)),
        (suite.cases == 200, "100 same-tone and 100 cross-tone".into()),
        (took < Duration::from_secs(10), format!("{:.3} s", took.as_secs_f64())),
    ])
}

fn momentum() -> Outcome {
    const TOL: f64 = 1e-9;
    let suite = verify::momentum_suite(100.0);
    outcome(&[(suite.passed && suite.worst <= TOL, format!("drift {:.2e} over 100 s", suite.worst))])
}

fn batch(name: &str) -> (MonteCarlo, Duration) {
    let s = load_bundled(name).unwrap();
    let spec = MetricSpec::default_for(&s).unwrap();
    let seeds: Vec<u64> = (1..=SEEDS).collect();
    timed(|| monte_carlo(&s, &seeds, &spec).unwrap())
}

fn table_checks(
    mc: &MonteCarlo,
    settling: (f64, f64),
    max_force: (f64, f64),
    power: (f64, f64),
) -> Vec<(bool, String)> {
    let ts = mc.settling_time.map_or(f64::NAN, |s| s.mean);
    vec![
        (mc.unsettled == 0, format!("{} of {} runs settled", mc.runs.len() - mc.unsettled, mc.runs.len())),
        (
            within(ts, settling.0, settling.1),
            format!("T_s {ts:.2} s in [{}, {}]", settling.0, settling.1),
        ),
        (
            within(mc.max_force.mean, max_force.0, max_force.1),
            format!("max|F| {:.3e} in [{:e}, {:e}]", mc.max_force.mean, max_force.0, max_force.1),
        ),
        (
            within(mc.force_rms.mean, power.0, power.1),
            format!("P {:.3e} in [{:e}, {:e}]", mc.force_rms.mean, power.0, power.1),
        ),
    ]
}

fn table_repulsion() -> Outcome {
    let (mc, took) = batch("exp3_repulsion");
    let mut checks = table_checks(&mc, (16.5, 20.1), (2.1e-3, 3.2e-3), (1.0e-4, 1.8e-4));
    checks.push((mc.overshoot_cm.mean <= 1.2, format!("r_os {:.2} cm <= 1.2", mc.overshoot_cm.mean)));
    checks.push((took < Duration::from_secs(60), format!("{:.2} s", took.as_secs_f64())));
    outcome(&checks)
}

fn table_attraction() -> Outcome {
    let (mc, _) = batch("exp4_attraction");
    outcome(&table_checks(&mc, (16.9, 20.7), (2.6e-3, 4.2e-3), (1.2e-4, 2.1e-4)))
}

/// True gap between satellites 1 and 2 at each tick.
fn gap(tel: &Telemetry) -> Vec<f64> {
    tel.rows.iter().map(|r| (r.positions[1] - r.positions[0]).norm()).collect()
}

fn open_loop() -> Outcome {
    let mut checks = Vec::new();
    for (name, start, approach) in [("exp1_open_attraction", 0.508, true), ("exp2_open_repulsion", 0.404, false)] {
        let s = load_bundled(name).unwrap();
        let g = gap(&run_scenario(&s).unwrap());
        let monotone = g.windows(2).all(|w| if approach { w[1] <= w[0] } else { w[1] >= w[0] });
        let change = (g[g.len() - 1] - g[0]).abs();
        let actuation = s.duration - s.control_on;
        checks.push((
            (g[0] - start).abs() < 1e-12 && monotone && within(change, 0.01, 0.5) && actuation >= 15.0,
            format!(
                "{name}: {:.3} -> {:.3} m over {actuation} s, {}",
                g[0],
                g[g.len() - 1],
                if approach { "approach" } else { "separation" }
            ),
        ));
    }
    outcome(&checks)
}

fn three_satellites() -> Outcome {
    const EPS0: f64 = 0.015;
    const BY: f64 = 40.0;
    const MAX_CURRENT: f64 = 2.35;
    let mut checks = Vec::new();
    for name in ["exp6_three_repulsion", "exp7_three_attraction", "exp8_three_mixed"] {
        let s = load_bundled(name).unwrap();
        let tel = run_scenario(&s).unwrap();
        let mut reached = Vec::new();
        for (i, j) in [(0, 1), (0, 2)] {
            let d = s.desired_at(i, j, f64::INFINITY).unwrap();
            let series = tel.series(i, j).unwrap();
            let first = series
                .t
                .iter()
                .zip(&series.r_hat)
                .find(|(_, r)| (*r - d).abs() < EPS0)
                .map(|(t, _)| *t);
            reached.push(first);
        }
        let peak = tel.max_peak_current();
        let ok = reached.iter().all(|t| t.is_some_and(|t| t <= BY)) && peak <= MAX_CURRENT * (1.0 + 1e-12);
        let show = |t: Option<f64>| t.map_or("never".into(), |t| format!("{t:.1} s"));
        checks.push((
            ok,
            format!("{name}: in band at {} / {}, peak {peak:.3} A", show(reached[0]), show(reached[1])),
        ));
    }
    outcome(&checks)
}

fn multi_setpoint() -> Outcome {
    let s = load_bundled("exp5_multi_setpoint").unwrap();
    let spec = MetricSpec::default_for(&s).unwrap();
    let tel = run_scenario(&s).unwrap();
    let m = compute_metrics(&tel.series(0, 1).unwrap(), spec.desired, spec.from_t).unwrap();
    let ts = m.settling_time.unwrap_or(f64::INFINITY);
    outcome(&[
        ((spec.from_t - 60.0).abs() < 1e-9, format!("switch at {} s", spec.from_t)),
        ((spec.desired.abs() - 0.5).abs() < 1e-12, format!("|d| = {}", spec.desired.abs())),
        (ts <= 35.0, format!("re-settled {ts:.1} s after the switch")),
    ])
}

fn engineering() -> Outcome {
    let (all_ok, took) = timed(|| {
        let report = verify::run_suites(allocate_pair);
        let runs = BUNDLED
            .iter()
            .all(|(name, _)| run_scenario(&load_bundled(name).unwrap()).is_ok());
        report.passed() && runs
    });
    let csv = |seed: u64| {
        let mut s = load_bundled("exp3_repulsion").unwrap();
        s.seed = seed;
        let mut buf = Vec::new();
        write_csv(&run_scenario(&s).unwrap(), &mut buf).unwrap();
        buf
    };
    let a = csv(11);
    outcome(&[
        (all_ok, "verify and every bundled scenario succeed".into()),
        (took < Duration::from_secs(300), format!("{:.2} s", took.as_secs_f64())),
        (a == csv(11), "same seed, byte-identical CSV".into()),
        (a != csv(12), "different seed, different CSV".into()),
    ])
}

fn main() -> ExitCode {
    type Check = fn() -> Outcome;
    let criteria: [(&str, Check); 10] = [
        ("Kalman gains", kalman_gains),
        ("amplitude allocation", allocation),
        ("window averaging", averaging),
        ("momentum conservation", momentum),
        ("repulsion transient", table_repulsion),
        ("attraction transient", table_attraction),
        ("open-loop direction", open_loop),
        ("three-satellite convergence", three_satellites),
        ("setpoint change", multi_setpoint),
        ("runtime and determinism", engineering),
    ];
    let mut failed = 0;
    for (n, (name, check)) in criteria.iter().enumerate() {
        let o = check();
        if !o.passed {
            failed += 1;
        }
        println!(
            "{} criterion {:>2} {name}: {}",
            if o.passed { "PASS" } else { "FAIL" },
            n + 1,
            o.detail
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
