//! Run configuration: flat `section.key = value` lines.
//!
//! ```text
//! # comments run to the end of the line
//! scenario.id = bessel
//! motion.kind = stretch          # identity | translation | stretch | rotating_ellipse
//! motion.a = "0.2*sin(t)"
//! grid.n_r = 128
//! grid.n_theta = 256
//! physics.nu = 1e-2, 1e-3, 1e-4  # a list makes a family run
//! physics.T = 1
//! physics.dt = 1e-3
//! physics.forcing = potential    # or an expression in t, x, y for curl f
//! initial.preset = offset_bump
//! initial.x0 = 0.3
//! ```
//!
//! Motion parameters per kind: `translation` takes `motion.cx`, `motion.cy`;
//! `stretch` takes `motion.a`; `rotating_ellipse` takes numbers `motion.ax`,
//! `motion.ay` (default `1 / ax`) and `motion.phi`. Time functions use the
//! grammar of [`crate::expr`]. Values may be double-quoted.
//!
//! Every problem found is reported, each with its line number.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use crate::expr::Expr;
use crate::harness::Scenario;
use crate::motion::{MotionSpec, TimeFn};
use crate::solver::{AdvectionScheme, DiffusionScheme, Forcing, InitialPreset, StepConfig};

pub const GRID_RANGE: (usize, usize) = (8, 4096);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    /// 1-based; 0 when the problem is a missing key.
    pub line: usize,
    pub msg: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line == 0 {
            write!(f, "config: {}", self.msg)
        } else {
            write!(f, "line {}: {}", self.line, self.msg)
        }
    }
}

#[derive(Debug, Clone)]
pub enum InitialSource {
    Preset(InitialPreset),
    Snapshot(PathBuf),
}

#[derive(Debug, Clone)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Write a vorticity snapshot every this many steps (0 disables).
    pub snapshot_every: usize,
    pub diagnostics: bool,
}

/// Invariant checks that decide the exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Checks {
    pub monotonicity: bool,
    pub tangency: bool,
    /// Uniform bounds, Cauchy decrease and residual fit of a family.
    pub family: bool,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub id: String,
    pub motion: MotionSpec,
    /// The expression strings as written, for reports.
    pub motion_text: String,
    pub n_r: usize,
    pub n_theta: usize,
    /// One entry for a single run; several (strictly decreasing) for a family.
    pub nus: Vec<f64>,
    pub horizon: f64,
    pub step: StepConfig,
    pub forcing: Forcing,
    pub forcing_text: String,
    pub initial: InitialSource,
    pub mollify: bool,
    pub output: OutputConfig,
    pub checks: Checks,
}

impl RunConfig {
    pub fn is_family(&self) -> bool {
        self.nus.len() > 1
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.step.dt).round() as usize
    }
}

const KEYS: &[&str] = &[
    "scenario.id",
    "motion.kind",
    "motion.cx",
    "motion.cy",
    "motion.a",
    "motion.ax",
    "motion.ay",
    "motion.phi",
    "grid.n_r",
    "grid.n_theta",
    "physics.nu",
    "physics.T",
    "physics.dt",
    "physics.forcing",
    "numerics.advection",
    "numerics.diffusion",
    "numerics.cfl",
    "initial.preset",
    "initial.snapshot",
    "initial.amplitude",
    "initial.x0",
    "initial.y0",
    "initial.width",
    "initial.radius",
    "initial.mollify",
    "output.dir",
    "output.snapshot_every",
    "output.diagnostics",
    "checks.monotonicity",
    "checks.tangency",
    "checks.family",
];

struct Entries {
    map: BTreeMap<String, (usize, String)>,
    errors: Vec<ConfigError>,
}

impl Entries {
    fn err(&mut self, line: usize, msg: impl Into<String>) {
        self.errors.push(ConfigError { line, msg: msg.into() });
    }

    fn line(&self, key: &str) -> usize {
        self.map.get(key).map_or(0, |e| e.0)
    }

    fn raw(&self, key: &str) -> Option<(usize, String)> {
        self.map.get(key).cloned()
    }

    fn string(&self, key: &str, default: &str) -> String {
        self.raw(key).map_or(default.to_string(), |e| e.1)
    }

    fn required(&mut self, key: &str) -> Option<(usize, String)> {
        let r = self.raw(key);
        if r.is_none() {
            self.err(0, format!("missing required key `{key}`"));
        }
        r
    }

    fn number(&mut self, key: &str, default: f64) -> f64 {
        match self.raw(key) {
            None => default,
            Some((line, v)) => match v.parse::<f64>() {
                Ok(x) if x.is_finite() => x,
                _ => {
                    self.err(line, format!("`{key}` expects a number, got `{v}`"));
                    default
                }
            },
        }
    }

    fn count(&mut self, key: &str, default: usize) -> usize {
        match self.raw(key) {
            None => default,
            Some((line, v)) => v.parse::<usize>().unwrap_or_else(|_| {
                self.err(line, format!("`{key}` expects a non-negative integer, got `{v}`"));
                default
            }),
        }
    }

    fn flag(&mut self, key: &str, default: bool) -> bool {
        match self.raw(key) {
            None => default,
            Some((line, v)) => match v.as_str() {
                "true" | "yes" | "on" => true,
                "false" | "no" | "off" => false,
                _ => {
                    self.err(line, format!("`{key}` expects true or false, got `{v}`"));
                    default
                }
            },
        }
    }

    fn time_fn(&mut self, key: &str, default: Option<&str>) -> Option<TimeFn> {
        let (line, src) = match (self.raw(key), default) {
            (Some(e), _) => e,
            (None, Some(d)) => (0, d.to_string()),
            (None, None) => {
                self.err(0, format!("missing required key `{key}`"));
                return None;
            }
        };
        match TimeFn::parse(&src) {
            Ok(f) => Some(f),
            Err(e) => {
                self.err(line, format!("malformed expression for `{key}`: {e}"));
                None
            }
        }
    }
}

fn strip_comment(line: &str) -> &str {
    let mut quoted = false;
    for (i, c) in line.char_indices() {
        match c {
            '"' => quoted = !quoted,
            '#' if !quoted => return &line[..i],
            _ => {}
        }
    }
    line
}

fn unquote(v: &str) -> String {
    let v = v.trim();
    if v.len() >= 2 && v.starts_with('"') && v.ends_with('"') {
        v[1..v.len() - 1].to_string()
    } else {
        v.to_string()
    }
}

fn lex_entries(text: &str) -> Entries {
    let mut e = Entries {
        map: BTreeMap::new(),
        errors: Vec::new(),
    };
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let body = strip_comment(raw).trim();
        if body.is_empty() {
            continue;
        }
        let Some((key, value)) = body.split_once('=') else {
            e.err(line, format!("expected `section.key = value`, got `{body}`"));
            continue;
        };
        let key = key.trim();
        if !KEYS.contains(&key) {
            e.err(line, format!("unknown key `{key}`"));
            continue;
        }
        if let Some((first, _)) = e.map.get(key) {
            let first = *first;
            e.err(line, format!("duplicate key `{key}` (first set on line {first})"));
            continue;
        }
        e.map.insert(key.to_string(), (line, unquote(value)));
    }
    e
}

fn parse_motion(e: &mut Entries, horizon: f64) -> (Option<MotionSpec>, String) {
    let Some((line, kind)) = e.required("motion.kind") else {
        return (None, String::new());
    };
    let allowed: &[&str] = match kind.as_str() {
        "identity" => &[],
        "translation" => &["motion.cx", "motion.cy"],
        "stretch" => &["motion.a"],
        "rotating_ellipse" => &["motion.ax", "motion.ay", "motion.phi"],
        _ => {
            e.err(line, format!("unknown motion kind `{kind}`"));
            return (None, kind);
        }
    };
    for key in ["motion.cx", "motion.cy", "motion.a", "motion.ax", "motion.ay", "motion.phi"] {
        if !allowed.contains(&key) && e.map.contains_key(key) {
            let l = e.line(key);
            e.err(l, format!("`{key}` does not apply to motion kind {kind}"));
        }
    }
    let text: Vec<String> = std::iter::once(kind.clone())
        .chain(allowed.iter().filter_map(|k| e.raw(k).map(|v| format!("{}={}", &k[7..], v.1))))
        .collect();
    let text = text.join(" ");
    let spec = match kind.as_str() {
        "identity" => Some(Ok(MotionSpec::identity(horizon))),
        "translation" => {
            let cx = e.time_fn("motion.cx", Some("0"));
            let cy = e.time_fn("motion.cy", Some("0"));
            cx.zip(cy).map(|(cx, cy)| MotionSpec::translation(cx, cy, horizon))
        }
        "stretch" => e.time_fn("motion.a", None).map(|a| MotionSpec::stretch(a, horizon)),
        _ => {
            let ax = e.number("motion.ax", 1.0);
            let ay = e.number("motion.ay", 1.0 / ax);
            e.time_fn("motion.phi", None)
                .map(|phi| MotionSpec::rotating_ellipse(ax, ay, phi, horizon))
        }
    };
    match spec {
        Some(Ok(m)) => (Some(m), text),
        Some(Err(err)) => {
            e.err(line, format!("invalid {kind} motion: {err}"));
            (None, text)
        }
        None => (None, text),
    }
}

fn parse_initial(e: &mut Entries) -> Option<InitialSource> {
    let preset = e.raw("initial.preset");
    let snapshot = e.raw("initial.snapshot");
    let amplitude = e.number("initial.amplitude", 1.0);
    match (preset, snapshot) {
        (Some(_), Some((line, _))) => {
            e.err(line, "give either `initial.preset` or `initial.snapshot`, not both");
            None
        }
        (None, None) => {
            e.err(0, "missing required key `initial.preset` (or `initial.snapshot`)");
            None
        }
        (None, Some((_, path))) => Some(InitialSource::Snapshot(PathBuf::from(path))),
        (Some((line, name)), None) => {
            let p = match name.as_str() {
                "bessel_mode" => InitialPreset::BesselMode { amplitude },
                "radial_poly" => InitialPreset::RadialPoly { amplitude },
                "offset_bump" => {
                    let width = e.number("initial.width", 0.4);
                    if !(width > 0.0) {
                        let l = e.line("initial.width");
                        e.err(l, "`initial.width` must be positive");
                    }
                    InitialPreset::OffsetBump {
                        amplitude,
                        x0: e.number("initial.x0", 0.3),
                        y0: e.number("initial.y0", 0.0),
                        width,
                    }
                }
                "disk_indicator" => InitialPreset::DiskIndicator {
                    amplitude,
                    radius: e.number("initial.radius", 0.5),
                },
                _ => {
                    e.err(line, format!("unknown initial preset `{name}`"));
                    return None;
                }
            };
            let used: &[&str] = match p {
                InitialPreset::OffsetBump { .. } => &["initial.x0", "initial.y0", "initial.width"],
                InitialPreset::DiskIndicator { .. } => &["initial.radius"],
                _ => &[],
            };
            for key in ["initial.x0", "initial.y0", "initial.width", "initial.radius"] {
                if !used.contains(&key) && e.map.contains_key(key) {
                    let l = e.line(key);
                    e.err(l, format!("`{key}` does not apply to preset {name}"));
                }
            }
            Some(InitialSource::Preset(p))
        }
    }
}

fn parse_nus(e: &mut Entries) -> Vec<f64> {
    let Some((line, v)) = e.required("physics.nu") else {
        return vec![0.0];
    };
    let parsed: Result<Vec<f64>, _> = v
        .trim_matches(|c| c == '[' || c == ']')
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect();
    let Ok(nus) = parsed else {
        e.err(line, format!("`physics.nu` expects a number or a comma-separated list, got `{v}`"));
        return vec![0.0];
    };
    if nus.iter().any(|n| !(n.is_finite() && *n >= 0.0)) {
        e.err(line, "viscosities must be finite and non-negative");
    } else if nus.len() > 1 {
        if nus.contains(&0.0) {
            e.err(line, "family viscosities must be positive");
        } else if nus.windows(2).any(|w| w[1] >= w[0]) {
            e.err(line, "family viscosities must be strictly decreasing");
        }
    }
    nus
}

fn parse_grid(e: &mut Entries) -> (usize, usize) {
    let n_r = e.count("grid.n_r", 64);
    let n_theta = e.count("grid.n_theta", 2 * n_r);
    let derived = !e.map.contains_key("grid.n_theta");
    for (key, n) in [("grid.n_r", n_r), ("grid.n_theta", n_theta)] {
        if n < GRID_RANGE.0 || n > GRID_RANGE.1 {
            let l = e.line(key);
            e.err(l, format!("`{key}` = {n} outside [{}, {}]", GRID_RANGE.0, GRID_RANGE.1));
            if derived {
                // n_theta defaults to 2 n_r; one report is enough
                break;
            }
        }
    }
    if n_theta % 2 == 1 {
        let l = e.line("grid.n_theta");
        e.err(l, "`grid.n_theta` must be even");
    }
    (n_r, n_theta)
}

fn parse_step(e: &mut Entries, horizon: f64) -> StepConfig {
    let dt = e.number("physics.dt", 1e-3);
    let mut step = StepConfig::new(dt);
    if !(dt > 0.0) {
        let l = e.line("physics.dt");
        e.err(l, "`physics.dt` must be positive");
    } else if horizon > 0.0 {
        let n = horizon / dt;
        if (n - n.round()).abs() > 1e-6 * n.max(1.0) {
            let l = e.line("physics.dt");
            e.err(l, format!("`physics.T` = {horizon} is not a whole number of steps of {dt}"));
        }
    }
    let adv = e.string("numerics.advection", "upwind_muscl");
    step.advection = match adv.as_str() {
        "upwind_muscl" => AdvectionScheme::UpwindMuscl,
        "central_rk2" => AdvectionScheme::CentralRk2,
        "upwind" => AdvectionScheme::Upwind,
        _ => {
            let l = e.line("numerics.advection");
            e.err(l, format!("unknown advection scheme `{adv}`"));
            step.advection
        }
    };
    let dif = e.string("numerics.diffusion", "backward_euler");
    step.diffusion = match dif.as_str() {
        "backward_euler" => DiffusionScheme::BackwardEuler,
        "crank_nicolson" => DiffusionScheme::CrankNicolson,
        _ => {
            let l = e.line("numerics.diffusion");
            e.err(l, format!("unknown diffusion scheme `{dif}`"));
            step.diffusion
        }
    };
    step.cfl_limit = e.number("numerics.cfl", step.cfl_limit);
    if !(step.cfl_limit > 0.0 && step.cfl_limit <= 1.0) {
        let l = e.line("numerics.cfl");
        e.err(l, "`numerics.cfl` must lie in (0, 1]");
    }
    step
}

/// Parses and validates a configuration, collecting every error.
pub fn parse_config(text: &str) -> Result<RunConfig, Vec<ConfigError>> {
    let mut e = lex_entries(text);
    let id = e.string("scenario.id", "run");
    if id.is_empty() || !id.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
        let l = e.line("scenario.id");
        e.err(l, format!("`scenario.id` must be a non-empty [A-Za-z0-9_-] name, got `{id}`"));
    }
    let horizon = e.number("physics.T", 1.0);
    if !(horizon > 0.0) {
        let l = e.line("physics.T");
        e.err(l, "`physics.T` must be positive");
    }
    let (motion, motion_text) = parse_motion(&mut e, horizon.max(f64::MIN_POSITIVE));
    let (n_r, n_theta) = parse_grid(&mut e);
    let nus = parse_nus(&mut e);
    let step = parse_step(&mut e, horizon);
    let forcing_text = e.string("physics.forcing", "potential");
    let forcing = if forcing_text == "potential" {
        Forcing::Potential
    } else {
        match Expr::parse(&forcing_text) {
            Ok(x) => Forcing::from_expr(x),
            Err(err) => {
                let l = e.line("physics.forcing");
                e.err(l, format!("malformed expression for `physics.forcing`: {err}"));
                Forcing::Potential
            }
        }
    };
    let initial = parse_initial(&mut e);
    let mollify = e.flag("initial.mollify", false);
    let output = OutputConfig {
        dir: PathBuf::from(e.string("output.dir", "out")),
        snapshot_every: e.count("output.snapshot_every", 0),
        diagnostics: e.flag("output.diagnostics", true),
    };
    let viscous = nus.iter().all(|&n| n > 0.0);
    let checks = Checks {
        monotonicity: e.flag("checks.monotonicity", viscous && forcing.is_potential()),
        tangency: e.flag("checks.tangency", true),
        family: e.flag("checks.family", nus.len() > 1),
    };
    if checks.monotonicity && !(viscous && forcing.is_potential()) {
        let l = e.line("checks.monotonicity");
        e.err(l, "monotonicity check needs nu > 0 and potential forcing");
    }
    if !e.errors.is_empty() {
        let mut errs = e.errors;
        errs.sort_by_key(|x| x.line);
        return Err(errs);
    }
    Ok(RunConfig {
        id,
        motion: motion.expect("motion validated"),
        motion_text,
        n_r,
        n_theta,
        nus,
        horizon,
        step,
        forcing,
        forcing_text,
        initial: initial.expect("initial data validated"),
        mollify,
        output,
        checks,
    })
}

impl RunConfig {
    /// Scenario with the initial field loaded (a snapshot is read from disk).
    pub fn scenario(&self) -> crate::Result<Scenario> {
        let grid = crate::grid::Grid::new(self.n_r, self.n_theta)?;
        let omega0 = match &self.initial {
            InitialSource::Preset(p) => p.sample(grid)?,
            InitialSource::Snapshot(path) => {
                let (f, _) = crate::grid::load_snapshot(path)?;
                if f.grid() != grid {
                    return Err(crate::FlowError::Argument(format!(
                        "snapshot {} is {}x{}, config asks for {}x{}",
                        path.display(),
                        f.grid().n_r(),
                        f.grid().n_theta(),
                        self.n_r,
                        self.n_theta
                    )));
                }
                f
            }
        };
        Ok(Scenario {
            id: self.id.clone(),
            motion: self.motion.clone(),
            omega0,
            forcing: self.forcing.clone(),
            horizon: self.horizon,
            step: self.step,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "motion.kind = identity\ninitial.preset = bessel_mode\nphysics.nu = 0.01\n";

    #[test]
    fn minimal_config_fills_defaults() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.id, "run");
        assert_eq!((c.n_r, c.n_theta), (64, 128));
        assert_eq!(c.nus, vec![0.01]);
        assert_eq!(c.horizon, 1.0);
        assert_eq!(c.step.dt, 1e-3);
        assert!(!c.is_family());
        assert!(c.checks.monotonicity && c.checks.tangency && !c.checks.family);
        assert!(matches!(c.initial, InitialSource::Preset(InitialPreset::BesselMode { amplitude }) if amplitude == 1.0));
    }

    #[test]
    fn unknown_motion_kind_reports_line() {
        let errs = parse_config("# header\nmotion.kind = \"spiral\"\ninitial.preset = bessel_mode\nphysics.nu = 0.01\n").unwrap_err();
        assert_eq!(errs.len(), 1);
        assert_eq!(errs[0].line, 2);
        assert!(errs[0].msg.contains("unknown motion kind"), "{}", errs[0]);
    }

    #[test]
    fn nu_list_makes_family() {
        let c = parse_config(&MINIMAL.replace("0.01", "1e-2, 1e-3, 1e-4")).unwrap();
        assert!(c.is_family());
        assert_eq!(c.nus, vec![1e-2, 1e-3, 1e-4]);
        assert!(c.checks.family);
    }

    #[test]
    fn collects_all_errors() {
        let text = "motion.kind = stretch\nmotion.a = 0.2*sin(\ngrid.n_r = 4\nphysics.nu = 1e-3, 1e-2\nbogus.key = 1\nphysics.dt = 0.3\ninitial.preset = bessel_mode\n";
        let errs = parse_config(text).unwrap_err();
        let lines: Vec<usize> = errs.iter().map(|e| e.line).collect();
        assert_eq!(lines, vec![2, 3, 4, 5, 6], "{errs:?}");
        assert!(errs[0].msg.contains("malformed expression"));
        assert!(errs[1].msg.contains("outside [8, 4096]"));
    }

    #[test]
    fn motion_parameters_must_match_kind() {
        let errs = parse_config(&format!("{MINIMAL}motion.a = t\n")).unwrap_err();
        assert!(errs[0].msg.contains("does not apply"));
        let errs = parse_config("motion.kind = stretch\nmotion.a = 0.2 + t\ninitial.preset = bessel_mode\nphysics.nu = 0\n").unwrap_err();
        assert!(errs[0].msg.contains("invalid stretch motion"), "{errs:?}");
    }

    #[test]
    fn parses_every_field() {
        let text = r#"
scenario.id = ell
motion.kind = rotating_ellipse
motion.ax = 1.5
motion.phi = "0.5*t"   # angle
grid.n_r = 32
grid.n_theta = 64
physics.nu = 0
physics.T = 0.5
physics.dt = 0.01
physics.forcing = "sin(pi*x)*y"
numerics.advection = central_rk2
numerics.diffusion = crank_nicolson
numerics.cfl = 0.5
initial.preset = offset_bump
initial.width = 0.3
output.dir = /tmp/x
output.snapshot_every = 10
output.diagnostics = false
checks.tangency = false
"#;
        let c = parse_config(text).unwrap();
        assert_eq!(c.id, "ell");
        assert_eq!(c.motion.kind_name(), "rotating_ellipse");
        assert_eq!(c.steps(), 50);
        assert_eq!(c.step.advection, AdvectionScheme::CentralRk2);
        assert_eq!(c.step.diffusion, DiffusionScheme::CrankNicolson);
        assert!(!c.forcing.is_potential());
        assert!(!c.checks.monotonicity && !c.checks.tangency);
        assert_eq!(c.output.snapshot_every, 10);
        assert!(!c.output.diagnostics);
        assert_eq!(c.motion_text, "rotating_ellipse ax=1.5 phi=0.5*t");
    }

    #[test]
    fn duplicate_and_malformed_lines() {
        let errs = parse_config(&format!("{MINIMAL}physics.nu = 0.1\nnot a pair\n")).unwrap_err();
        assert_eq!(errs.len(), 2);
        assert!(errs[0].msg.contains("duplicate") && errs[0].msg.contains("line 3"));
        assert!(errs[1].msg.contains("expected"));
    }

    #[test]
    fn missing_keys_are_reported() {
        let errs = parse_config("").unwrap_err();
        assert_eq!(errs.len(), 3);
        assert!(errs.iter().all(|e| e.line == 0));
    }
}
