//! Scenario files: a versioned TOML document describing satellites on a common
//! track, the control graph, coils, filter and run settings.
//!
//! Satellites are numbered from 1 in files and from 0 in the library.
//! Positions, velocities and desired offsets are scalars along the track.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::amff::FrequencyPlan;
use crate::em_model::{SatelliteBody, Vec3};
use crate::error::Error;
use crate::estimator::KalmanConfig;
use crate::formation::{EdgeGains, FormationGraph};
use crate::sim::{Mode, Scenario, SetpointChange, DIVISIBILITY_TOL};
use crate::testbed::{Band, CoilSpec};

pub const FORMAT_VERSION: u32 = 1;

/// Scenarios shipped with the library, by name.
pub const BUNDLED: &[(&str, &str)] = &[
    ("exp1_open_attraction", include_str!("../scenarios/exp1_open_attraction.toml")),
    ("exp2_open_repulsion", include_str!("../scenarios/exp2_open_repulsion.toml")),
    ("exp3_repulsion", include_str!("../scenarios/exp3_repulsion.toml")),
    ("exp4_attraction", include_str!("../scenarios/exp4_attraction.toml")),
    ("exp5_multi_setpoint", include_str!("../scenarios/exp5_multi_setpoint.toml")),
    ("exp6_three_repulsion", include_str!("../scenarios/exp6_three_repulsion.toml")),
    ("exp7_three_attraction", include_str!("../scenarios/exp7_three_attraction.toml")),
    ("exp8_three_mixed", include_str!("../scenarios/exp8_three_mixed.toml")),
];

pub fn bundled(name: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, text)| *text)
}

pub fn load_bundled(name: &str) -> Result<Scenario, ConfigError> {
    let text = bundled(name).ok_or_else(|| ConfigError {
        line: None,
        message: format!("no bundled scenario named `{name}`"),
    })?;
    load_str(text)
}

/// A config problem, with the 1-based line it points at when known.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => write!(f, "{}", self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub format_version: u32,
    pub name: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    pub simulation: SimulationSection,
    #[serde(default)]
    pub coil: CoilSection,
    pub kalman: KalmanSection,
    pub control: ControlSection,
    #[serde(rename = "satellite")]
    pub satellites: Vec<SatelliteSection>,
    #[serde(rename = "edge")]
    pub edges: Vec<EdgeSection>,
    #[serde(default, rename = "setpoint", skip_serializing_if = "Vec::is_empty")]
    pub setpoints: Vec<SetpointSection>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeName {
    ClosedLoop,
    OpenLoop,
}

fn default_dt() -> f64 {
    5e-4
}

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    pub mode: ModeName,
    pub duration_s: f64,
    pub control_period_s: f64,
    #[serde(default = "default_dt")]
    pub dt_s: f64,
    pub control_on_s: f64,
    pub noise_variance_m2: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "is_false")]
    pub record_fine: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoilSection {
    pub turns: u32,
    pub area_m2: f64,
    pub max_current_a: f64,
}

impl Default for CoilSection {
    fn default() -> Self {
        let c = CoilSpec::default();
        Self {
            turns: c.turns,
            area_m2: c.area,
            max_current_a: c.max_current,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KalmanSection {
    pub measurement_variance_m2: f64,
    pub disturbance_variance_m2ps4: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gain: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlSection {
    pub beta_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub integrator: Option<IntegratorSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSection {
    pub eps0_m: f64,
    pub eps1_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SatelliteSection {
    pub id: usize,
    pub mass_kg: f64,
    pub position_m: f64,
    #[serde(default)]
    pub velocity_mps: f64,
    #[serde(default)]
    pub damping_nspm: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeSection {
    pub pair: [usize; 2],
    pub omega_radps: f64,
    pub alpha_per_s2: f64,
    #[serde(default)]
    pub rho_per_s2: f64,
    #[serde(default = "one")]
    pub gamma: f64,
    /// `d` for the pair in the listed orientation, m.
    pub desired_m: f64,
    /// `[I_ij, I_ji]` in the listed orientation, A. Open loop only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub open_loop_current_a: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetpointSection {
    pub time_s: f64,
    pub pair: [usize; 2],
    pub desired_m: f64,
}

/// Finds the line of `key` inside the `index`-th `[table]` / `[[table]]`
/// header, or of the header itself.
struct Locator<'a> {
    lines: Vec<&'a str>,
}

impl<'a> Locator<'a> {
    fn new(text: &'a str) -> Self {
        Self {
            lines: text.lines().collect(),
        }
    }

    fn header_name(line: &str) -> Option<&str> {
        let t = line.trim();
        let t = t.split('#').next()?.trim();
        if let Some(inner) = t.strip_prefix("[[").and_then(|s| s.strip_suffix("]]")) {
            Some(inner.trim())
        } else {
            t.strip_prefix('[').and_then(|s| s.strip_suffix(']')).map(str::trim)
        }
    }

    fn key_of(line: &str) -> Option<&str> {
        let t = line.trim();
        if t.starts_with('#') || t.starts_with('[') {
            return None;
        }
        t.split_once('=').map(|(k, _)| k.trim())
    }

    fn find(&self, table: &str, index: usize, key: Option<&str>) -> Option<usize> {
        let mut seen = 0;
        let mut start = None;
        for (n, line) in self.lines.iter().enumerate() {
            if Self::header_name(line) == Some(table) {
                if seen == index {
                    start = Some(n);
                    break;
                }
                seen += 1;
            }
        }
        let start = start?;
        let Some(key) = key else {
            return Some(start + 1);
        };
        for (n, line) in self.lines.iter().enumerate().skip(start + 1) {
            if Self::header_name(line).is_some() {
                break;
            }
            if Self::key_of(line) == Some(key) {
                return Some(n + 1);
            }
        }
        Some(start + 1)
    }

    fn top_key(&self, key: &str) -> Option<usize> {
        for (n, line) in self.lines.iter().enumerate() {
            if Self::header_name(line).is_some() {
                break;
            }
            if Self::key_of(line) == Some(key) {
                return Some(n + 1);
            }
        }
        None
    }

    fn err(&self, table: &str, index: usize, key: Option<&str>, message: impl fmt::Display) -> ConfigError {
        ConfigError {
            line: self.find(table, index, key),
            message: message.to_string(),
        }
    }
}

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

/// Parse, validate and convert a scenario document.
pub fn load_str(text: &str) -> Result<Scenario, ConfigError> {
    let file: ScenarioFile = toml::from_str(text).map_err(|e| ConfigError {
        line: e.span().map(|s| line_of_offset(text, s.start)),
        message: e.message().trim().to_string(),
    })?;
    file.to_scenario_located(&Locator::new(text))
}

pub fn load_path(path: &std::path::Path) -> Result<Scenario, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
        line: None,
        message: format!("cannot read {}: {e}", path.display()),
    })?;
    load_str(&text)
}

/// Serialize a scenario back to a document that [`load_str`] accepts.
pub fn dump(s: &Scenario) -> Result<String, ConfigError> {
    let file = ScenarioFile::from_scenario(s)?;
    toml::to_string(&file).map_err(|e| ConfigError {
        line: None,
        message: e.to_string(),
    })
}

fn x(v: f64) -> Vec3 {
    Vec3::new(v, 0.0, 0.0)
}

impl ScenarioFile {
    pub fn to_scenario(&self) -> Result<Scenario, ConfigError> {
        self.to_scenario_located(&Locator::new(""))
    }

    fn to_scenario_located(&self, loc: &Locator<'_>) -> Result<Scenario, ConfigError> {
        if self.format_version != FORMAT_VERSION {
            return Err(ConfigError {
                line: loc.top_key("format_version"),
                message: format!(
                    "unsupported format_version {} (expected {FORMAT_VERSION})",
                    self.format_version
                ),
            });
        }
        let sim = &self.simulation;
        let period = sim.control_period_s;
        if !(period > 0.0 && period.is_finite()) {
            return Err(loc.err("simulation", 0, Some("control_period_s"), "control period must be > 0"));
        }
        let ratio = period / sim.dt_s;
        if !(sim.dt_s > 0.0) || (ratio - ratio.round()).abs() > DIVISIBILITY_TOL * ratio.max(1.0) || ratio.round() < 1.0 {
            return Err(loc.err(
                "simulation",
                0,
                Some("dt_s"),
                format!("dt_s = {} does not divide control_period_s = {period}", sim.dt_s),
            ));
        }
        let windows = sim.duration_s / period;
        if !(sim.duration_s >= 0.0) || (windows - windows.round()).abs() > DIVISIBILITY_TOL * windows.max(1.0) {
            return Err(loc.err(
                "simulation",
                0,
                Some("duration_s"),
                format!("duration_s = {} is not a whole number of control periods", sim.duration_s),
            ));
        }

        let coil = CoilSpec {
            turns: self.coil.turns,
            area: self.coil.area_m2,
            max_current: self.coil.max_current_a,
        };
        coil.validate().map_err(|e| loc.err("coil", 0, None, e))?;

        let kalman = KalmanConfig::new(period, self.kalman.measurement_variance_m2, self.kalman.disturbance_variance_m2ps4)
            .map_err(|e| loc.err("kalman", 0, None, e))?;

        let band = match &self.control.integrator {
            Some(b) => Some(Band::new(b.eps0_m, b.eps1_m).map_err(|e| {
                let key = if b.eps0_m > 0.0 { "eps1_m" } else { "eps0_m" };
                loc.err("control.integrator", 0, Some(key), e)
            })?),
            None => None,
        };

        let n = self.satellites.len();
        let mut bodies: Vec<Option<SatelliteBody>> = vec![None; n];
        for (idx, s) in self.satellites.iter().enumerate() {
            if s.id < 1 || s.id > n {
                return Err(loc.err("satellite", idx, Some("id"), format!("id {} outside 1..={n}", s.id)));
            }
            if bodies[s.id - 1].is_some() {
                return Err(loc.err("satellite", idx, Some("id"), format!("id {} listed twice", s.id)));
            }
            let body = SatelliteBody::new(s.mass_kg, x(s.position_m), x(s.velocity_mps), s.damping_nspm)
                .map_err(|e| loc.err("satellite", idx, None, e))?;
            bodies[s.id - 1] = Some(body);
        }
        let bodies: Vec<SatelliteBody> = bodies.into_iter().flatten().collect();

        let index = |idx: usize, pair: [usize; 2], table: &str| -> Result<(usize, usize), ConfigError> {
            let [a, b] = pair;
            if a < 1 || b < 1 || a > n || b > n || a == b {
                return Err(loc.err(table, idx, Some("pair"), format!("pair [{a}, {b}] is not two distinct satellites in 1..={n}")));
            }
            Ok((a - 1, b - 1))
        };

        let mut gains = Vec::new();
        let mut freqs = Vec::new();
        let mut currents = BTreeMap::new();
        for (idx, e) in self.edges.iter().enumerate() {
            let (i, j) = index(idx, e.pair, "edge")?;
            FrequencyPlan::new(period, [((i, j), e.omega_radps)])
                .map_err(|err| loc.err("edge", idx, Some("omega_radps"), err))?;
            let g = EdgeGains {
                alpha: e.alpha_per_s2,
                rho: e.rho_per_s2,
                gamma: e.gamma,
                desired: x(e.desired_m),
            };
            FormationGraph::new(2, 1.0, [((0, 1), g)]).map_err(|err| loc.err("edge", idx, None, err))?;
            gains.push(((i, j), g));
            freqs.push(((i, j), e.omega_radps));
            match (sim.mode, e.open_loop_current_a) {
                (ModeName::OpenLoop, Some([a, b])) => {
                    currents.insert((i, j), a);
                    currents.insert((j, i), b);
                }
                (ModeName::OpenLoop, None) => {
                    return Err(loc.err("edge", idx, None, "open-loop scenarios need open_loop_current_a on every edge"));
                }
                (ModeName::ClosedLoop, Some(_)) => {
                    return Err(loc.err(
                        "edge",
                        idx,
                        Some("open_loop_current_a"),
                        "open_loop_current_a is only allowed with mode = \"open_loop\"",
                    ));
                }
                (ModeName::ClosedLoop, None) => {}
            }
        }
        let graph = FormationGraph::new(n, self.control.beta_s, gains).map_err(|e| {
            let table = if e.to_string().contains("beta") { "control" } else { "edge" };
            loc.err(table, 0, None, e)
        })?;
        let plan = FrequencyPlan::new(period, freqs).map_err(|e| loc.err("edge", 0, None, e))?;

        let mut setpoints = Vec::new();
        for (idx, sp) in self.setpoints.iter().enumerate() {
            let pair = index(idx, sp.pair, "setpoint")?;
            setpoints.push(SetpointChange {
                time: sp.time_s,
                pair,
                desired: x(sp.desired_m),
            });
        }

        let scenario = Scenario {
            name: self.name.clone(),
            bodies,
            graph,
            plan,
            coil,
            kalman,
            kalman_gain: self.kalman.gain,
            band,
            duration: sim.duration_s,
            dt: sim.dt_s,
            control_on: sim.control_on_s,
            noise_var: sim.noise_variance_m2,
            seed: sim.seed,
            mode: match sim.mode {
                ModeName::ClosedLoop => Mode::ClosedLoop,
                ModeName::OpenLoop => Mode::OpenLoop { currents },
            },
            setpoints,
            record_fine: sim.record_fine,
        };
        scenario.validate().map_err(|e| locate_scenario_error(loc, &e))?;
        Ok(scenario)
    }

    pub fn from_scenario(s: &Scenario) -> Result<Self, ConfigError> {
        s.validate().map_err(|e| ConfigError {
            line: None,
            message: e.to_string(),
        })?;
        let currents = match &s.mode {
            Mode::OpenLoop { currents } => Some(currents),
            Mode::ClosedLoop => None,
        };
        let edges = s
            .graph
            .edges()
            .map(|((i, j), g)| EdgeSection {
                pair: [i + 1, j + 1],
                omega_radps: s.plan.omega(i, j).unwrap_or(0.0),
                alpha_per_s2: g.alpha,
                rho_per_s2: g.rho,
                gamma: g.gamma,
                desired_m: g.desired.x,
                open_loop_current_a: currents.map(|c| {
                    [
                        c.get(&(i, j)).copied().unwrap_or(0.0),
                        c.get(&(j, i)).copied().unwrap_or(0.0),
                    ]
                }),
            })
            .collect();
        Ok(Self {
            format_version: FORMAT_VERSION,
            name: s.name.clone(),
            description: String::new(),
            simulation: SimulationSection {
                mode: if currents.is_some() {
                    ModeName::OpenLoop
                } else {
                    ModeName::ClosedLoop
                },
                duration_s: s.duration,
                control_period_s: s.period(),
                dt_s: s.dt,
                control_on_s: s.control_on,
                noise_variance_m2: s.noise_var,
                seed: s.seed,
                record_fine: s.record_fine,
            },
            coil: CoilSection {
                turns: s.coil.turns,
                area_m2: s.coil.area,
                max_current_a: s.coil.max_current,
            },
            kalman: KalmanSection {
                measurement_variance_m2: s.kalman.meas_var,
                disturbance_variance_m2ps4: s.kalman.dist_var,
                gain: s.kalman_gain,
            },
            control: ControlSection {
                beta_s: s.graph.beta(),
                integrator: s.band.map(|b| IntegratorSection {
                    eps0_m: b.eps0,
                    eps1_m: b.eps1,
                }),
            },
            satellites: s
                .bodies
                .iter()
                .enumerate()
                .map(|(i, b)| SatelliteSection {
                    id: i + 1,
                    mass_kg: b.mass,
                    position_m: b.position.x,
                    velocity_mps: b.velocity.x,
                    damping_nspm: b.damping,
                })
                .collect(),
            edges,
            setpoints: s
                .setpoints
                .iter()
                .map(|sp| SetpointSection {
                    time_s: sp.time,
                    pair: [sp.pair.0 + 1, sp.pair.1 + 1],
                    desired_m: sp.desired.x,
                })
                .collect(),
        })
    }
}

fn locate_scenario_error(loc: &Locator<'_>, e: &Error) -> ConfigError {
    let msg = e.to_string();
    let (table, key) = if msg.contains("dt") {
        ("simulation", Some("dt_s"))
    } else if msg.contains("control-on") {
        ("simulation", Some("control_on_s"))
    } else if msg.contains("noise") {
        ("simulation", Some("noise_variance_m2"))
    } else if msg.contains("duration") {
        ("simulation", Some("duration_s"))
    } else if msg.contains("setpoint") {
        ("setpoint", None)
    } else if msg.contains("rho") {
        ("edge", Some("rho_per_s2"))
    } else if msg.contains("kalman gain") {
        ("kalman", Some("gain"))
    } else {
        ("simulation", None)
    };
    loc.err(table, 0, key, msg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_scenarios_load() {
        for (name, _) in BUNDLED {
            let s = load_bundled(name).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(&s.name, name);
        }
        assert!(load_bundled("nope").is_err());
    }

    #[test]
    fn round_trip_is_idempotent() {
        for (name, _) in BUNDLED {
            let a = load_bundled(name).unwrap();
            let text = dump(&a).unwrap();
            let b = load_str(&text).unwrap();
            assert_eq!(a, b, "{name}");
            assert_eq!(text, dump(&b).unwrap());
        }
    }

    #[test]
    fn inverted_band_points_at_eps1() {
        let text = bundled("exp6_three_repulsion").unwrap().replace("eps1_m = 0.021", "eps1_m = 0.01");
        let err = load_str(&text).unwrap_err();
        let line = text.lines().position(|l| l.starts_with("eps1_m")).unwrap() + 1;
        assert_eq!(err.line, Some(line));
        assert!(err.message.contains("eps1 must exceed eps0"), "{err}");
    }

    #[test]
    fn unknown_key_rejected_with_line() {
        let text = bundled("exp3_repulsion").unwrap().replace("beta_s =", "bogus = 1\nbeta_s =");
        let err = load_str(&text).unwrap_err();
        let line = text.lines().position(|l| l.starts_with("bogus")).unwrap() + 1;
        assert_eq!(err.line, Some(line));
        assert!(err.message.contains("bogus"), "{err}");
    }

    #[test]
    fn dt_must_divide_period() {
        let text = bundled("exp3_repulsion").unwrap().replace("dt_s = 0.0005", "dt_s = 0.0003");
        let err = load_str(&text).unwrap_err();
        let line = text.lines().position(|l| l.starts_with("dt_s")).unwrap() + 1;
        assert_eq!(err.line, Some(line));
    }

    #[test]
    fn bad_frequency_points_at_edge() {
        let text = bundled("exp3_repulsion").unwrap().replace("omega_radps = 125.66370614359172", "omega_radps = 100.0");
        let err = load_str(&text).unwrap_err();
        let line = text.lines().position(|l| l.starts_with("omega_radps")).unwrap() + 1;
        assert_eq!(err.line, Some(line));
    }
}
