use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use emff::config::{self, BUNDLED};
use emff::sim::{compute_metrics, monte_carlo, run_scenario, MetricSpec, Metrics, PairSeries, Scenario, SimError};
use emff::telemetry_csv::{read_csv, write_csv};
use emff::verify::{self, Allocator};
use emff::Error;

/// Output directory used when `--out` is not given.
const OUT_DIR_ENV: &str = "EMFF_OUT_DIR";

#[derive(Parser)]
#[command(name = "emff", version, about = "Electromagnetic formation flying simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario file or bundled scenario; writes telemetry.csv and metrics.json.
    Run {
        /// Path to a scenario TOML file, or the name of a bundled scenario.
        scenario: String,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory; results go to `<out>/<scenario name>/`.
        #[arg(long, env = OUT_DIR_ENV, default_value = "out")]
        out: PathBuf,
        /// Integrator step override, s.
        #[arg(long)]
        dt: Option<f64>,
        /// Also run this many consecutive seeds and report mean and spread.
        #[arg(long, value_name = "N")]
        monte_carlo: Option<u64>,
    },
    /// Run the numerical self-checks; exit 1 if any fails.
    Verify {
        #[arg(long, hide = true)]
        inject_fault: Option<Fault>,
    },
    /// Draw one SVG per ordered pair of a telemetry CSV.
    Plot {
        csv: PathBuf,
        #[arg(long, env = OUT_DIR_ENV, default_value = "out")]
        out: PathBuf,
        /// Target separation drawn as a reference line, m.
        #[arg(long, allow_hyphen_values = true)]
        desired: Option<f64>,
    },
    /// Transient metrics of a telemetry CSV.
    Metrics {
        csv: PathBuf,
        /// Ordered pair as `i,j` (1-based). Defaults to every pair with i < j.
        #[arg(long, value_parser = parse_pair)]
        pair: Option<(usize, usize)>,
        /// Target separation, m. Defaults to the last filtered range.
        #[arg(long, allow_hyphen_values = true)]
        desired: Option<f64>,
        /// Ignore samples before this time, s.
        #[arg(long, default_value_t = 0.0)]
        from: f64,
    },
    /// List the bundled scenarios.
    List,
}

#[derive(Clone, Copy, ValueEnum)]
enum Fault {
    FlipHRadial,
}

/// A failed command and its exit status.
enum Failure {
    /// A check or output step failed.
    General(String),
    /// Bad scenario, arguments or CSV.
    Input(String),
    /// The simulation itself broke down.
    Numeric(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::General(_) => 1,
            Failure::Input(_) => 2,
            Failure::Numeric(_) => 3,
        }
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Invalid(Error::Invalid { .. } | Error::Contract(_)) => Failure::Input(e.to_string()),
            other => Failure::Numeric(other.to_string()),
        }
    }
}

fn parse_pair(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once(',').ok_or("expected `i,j`")?;
    let a: usize = a.trim().parse().map_err(|_| format!("bad index `{a}`"))?;
    let b: usize = b.trim().parse().map_err(|_| format!("bad index `{b}`"))?;
    if a == 0 || b == 0 || a == b {
        return Err("indices are 1-based and distinct".into());
    }
    Ok((a - 1, b - 1))
}

fn load_scenario(arg: &str) -> Result<Scenario, Failure> {
    let path = Path::new(arg);
    let loaded = if path.exists() {
        config::load_path(path)
    } else if config::bundled(arg).is_some() {
        config::load_bundled(arg)
    } else {
        let names: Vec<_> = BUNDLED.iter().map(|(n, _)| *n).collect();
        return Err(Failure::Input(format!(
            "`{arg}` is neither a file nor a bundled scenario ({})",
            names.join(", ")
        )));
    };
    loaded.map_err(|e| Failure::Input(format!("{arg}: {e}")))
}

fn metrics_json(m: &Metrics) -> Value {
    json!({
        "overshoot_cm": m.overshoot_cm,
        "settling_time_s": m.settling_time,
        "max_force_n": m.max_force,
        "force_rms_n": m.force_rms,
        "samples": m.samples,
    })
}

fn describe(label: (usize, usize), d: f64, m: &Metrics) -> String {
    let settle = m.settling_time.map_or("not settled".to_string(), |t| format!("{t:.2} s"));
    format!(
        "pair ({}, {}) |d| = {:.4} m: r_os = {:.3} cm, T_s = {settle}, max|F| = {:.3e} N, P = {:.3e} N",
        label.0 + 1,
        label.1 + 1,
        d.abs(),
        m.overshoot_cm,
        m.max_force,
        m.force_rms
    )
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::General(format!("cannot create {}: {e}", dir.display())))
}

fn cmd_run(
    scenario: &str,
    seed: Option<u64>,
    out: &Path,
    dt: Option<f64>,
    runs: Option<u64>,
) -> Result<(), Failure> {
    let mut s = load_scenario(scenario)?;
    if let Some(seed) = seed {
        s.seed = seed;
    }
    if let Some(dt) = dt {
        s.dt = dt;
    }
    s.validate().map_err(|e| Failure::Input(e.to_string()))?;

    let tel = run_scenario(&s)?;
    let dir = out.join(&s.name);
    create_dir(&dir)?;
    let csv_path = dir.join("telemetry.csv");
    let file = fs::File::create(&csv_path)
        .map_err(|e| Failure::General(format!("cannot write {}: {e}", csv_path.display())))?;
    write_csv(&tel, BufWriter::new(file)).map_err(|e| Failure::General(e.to_string()))?;

    let mut pairs = Vec::new();
    for &(i, j) in tel.pairs.iter().filter(|(i, j)| i < j) {
        let Some(d) = s.desired_at(i, j, f64::INFINITY) else { continue };
        let from_t = s.last_switch(i, j).unwrap_or(0.0);
        let series = tel.series(i, j).expect("logged pair");
        let m = compute_metrics(&series, d, from_t).map_err(|e| Failure::Numeric(e.to_string()))?;
        println!("{}", describe((i, j), d, &m));
        let mut entry = metrics_json(&m);
        entry["pair"] = json!([i + 1, j + 1]);
        entry["desired_m"] = json!(d);
        entry["from_s"] = json!(from_t);
        pairs.push(entry);
    }
    let mut summary = json!({
        "scenario": s.name,
        "seed": s.seed,
        "dt_s": s.dt,
        "duration_s": s.duration,
        "max_peak_current_a": tel.max_peak_current(),
        "pairs": pairs,
    });

    if let Some(n) = runs.filter(|&n| n > 0) {
        let spec = MetricSpec::default_for(&s)
            .ok_or_else(|| Failure::Input("scenario has no controlled pair to score".into()))?;
        let seeds: Vec<u64> = (0..n).map(|k| s.seed.wrapping_add(k)).collect();
        let mc = monte_carlo(&s, &seeds, &spec)?;
        let stat = |st: emff::sim::Stat| json!({ "mean": st.mean, "std": st.std });
        println!(
            "{} seeds: T_s = {}, max|F| = {:.3e} N, P = {:.3e} N, r_os = {:.3} cm",
            n,
            mc.settling_time
                .map_or("never settled".into(), |st| format!("{:.2} ± {:.2} s", st.mean, st.std)),
            mc.max_force.mean,
            mc.force_rms.mean,
            mc.overshoot_cm.mean
        );
        summary["monte_carlo"] = json!({
            "pair": [spec.pair.0 + 1, spec.pair.1 + 1],
            "seeds": seeds,
            "overshoot_cm": stat(mc.overshoot_cm),
            "settling_time_s": mc.settling_time.map(stat),
            "unsettled": mc.unsettled,
            "max_force_n": stat(mc.max_force),
            "force_rms_n": stat(mc.force_rms),
            "max_peak_current_a": mc.max_peak_current,
        });
    }

    let json_path = dir.join("metrics.json");
    let text = serde_json::to_string_pretty(&summary).expect("plain JSON values");
    fs::write(&json_path, text + "\n")
        .map_err(|e| Failure::General(format!("cannot write {}: {e}", json_path.display())))?;
    eprintln!("wrote {} and {}", csv_path.display(), json_path.display());
    Ok(())
}

fn cmd_verify(fault: Option<Fault>) -> Result<(), Failure> {
    let allocate: Allocator = match fault {
        None => emff::amff::allocate_pair,
        Some(Fault::FlipHRadial) => verify::faults::flipped_h_radial,
    };
    let report = verify::run_suites(allocate);
    for s in &report.suites {
        println!("{s}");
    }
    for g in &report.gains {
        println!(
            "gain V = {:.1e}: L = [{:.5}, {:.5}], reference [{:.4}, {:.4}], |error| = [{:.2e}, {:.2e}]",
            g.meas_var, g.gain[0], g.gain[1], g.reference[0], g.reference[1], g.abs_error[0], g.abs_error[1]
        );
    }
    if report.passed() {
        Ok(())
    } else {
        let failed = report.suites.iter().filter(|s| !s.passed).count();
        Err(Failure::General(format!("{failed} suite(s) failed")))
    }
}

fn read_telemetry(path: &Path) -> Result<emff::telemetry_csv::CsvTelemetry, Failure> {
    let file = fs::File::open(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    read_csv(file).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn cmd_plot(csv: &Path, out: &Path, desired: Option<f64>) -> Result<(), Failure> {
    let tel = read_telemetry(csv)?;
    create_dir(out)?;
    for (&(i, j), series) in tel.pairs.iter().zip(&tel.series) {
        let svg = emff::plot::render_pair_svg(series, (i + 1, j + 1), desired);
        let path = out.join(format!("plot_{}_{}.svg", i + 1, j + 1));
        fs::write(&path, svg).map_err(|e| Failure::General(format!("cannot write {}: {e}", path.display())))?;
        println!("{}", path.display());
    }
    Ok(())
}

fn cmd_metrics(csv: &Path, pair: Option<(usize, usize)>, desired: Option<f64>, from: f64) -> Result<(), Failure> {
    let tel = read_telemetry(csv)?;
    let chosen: Vec<((usize, usize), &PairSeries)> = match pair {
        Some(p) => {
            let s = tel
                .series(p.0, p.1)
                .ok_or_else(|| Failure::Input(format!("pair ({}, {}) is not in the CSV", p.0 + 1, p.1 + 1)))?;
            vec![(p, s)]
        }
        None => tel
            .pairs
            .iter()
            .copied()
            .zip(&tel.series)
            .filter(|((i, j), _)| i < j)
            .collect(),
    };
    for (p, series) in chosen {
        let d = match desired {
            Some(d) => d,
            None => {
                let last = *series.r_hat.last().expect("non-empty telemetry");
                eprintln!("pair ({}, {}): no --desired given, using final r_hat {last}", p.0 + 1, p.1 + 1);
                last
            }
        };
        let m = compute_metrics(series, d, from).map_err(|e| Failure::Input(e.to_string()))?;
        println!("{}", describe(p, d, &m));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            scenario,
            seed,
            out,
            dt,
            monte_carlo,
        } => cmd_run(&scenario, seed, &out, dt, monte_carlo),
        Command::Verify { inject_fault } => cmd_verify(inject_fault),
        Command::Plot { csv, out, desired } => cmd_plot(&csv, &out, desired),
        Command::Metrics {
            csv,
            pair,
            desired,
            from,
        } => cmd_metrics(&csv, pair, desired, from),
        Command::List => {
            for (name, _) in BUNDLED {
                println!("{name}");
            }
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (Failure::General(msg) | Failure::Input(msg) | Failure::Numeric(msg)) = &f;
            eprintln!("emff: {msg}");
            ExitCode::from(f.code())
        }
    }
}
