//! Plain-text experiment configuration.
//!
//! ```text
//! experiment=linear-control
//! grid.nx=32
//! dual.epsilon=1e-4
//! sweep.epsilons=1e-2,1e-3,1e-4,1e-5
//! ```
//!
//! One `key=value` per line, `#` starts a comment line, sections are
//! spelled with dotted keys. Unknown and duplicate keys are rejected with
//! their line number; every omitted key falls back to the standard
//! 32x32x64 unit-square setup. Geometry is validated at parse time,
//! including the bump-function admissibility of the patch pair, so a
//! config that parses will not fail on construction later.

use nullctrl_core::hum::DualConfig;
use nullctrl_core::picard::{EpsilonSchedule, PicardConfig};
use nullctrl_core::{BoxRegion, DomainSpec, EtaField, GridSpec};
use std::collections::HashSet;
use std::fmt;
use std::path::PathBuf;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    WeightReport,
    Trajectory,
    LinearControl,
    NonlinearControl,
    CarlemanRatio,
    NeumannDemo,
}

impl Experiment {
    pub fn as_str(&self) -> &'static str {
        match self {
            Experiment::WeightReport => "weight-report",
            Experiment::Trajectory => "trajectory",
            Experiment::LinearControl => "linear-control",
            Experiment::NonlinearControl => "nonlinear-control",
            Experiment::CarlemanRatio => "carleman-ratio",
            Experiment::NeumannDemo => "neumann-demo",
        }
    }
}

#[derive(Debug)]
pub enum CliError {
    /// the text could not be read as key=value lines
    Parse { line: usize, message: String },
    /// the values violate a documented invariant
    Validation(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Parse { line, message } => write!(f, "line {line}: {message}"),
            CliError::Validation(message) => write!(f, "{message}"),
        }
    }
}

impl std::error::Error for CliError {}

/// Fully resolved run description; construction implies validity.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub domain: DomainSpec,
    pub grid: GridSpec,
    pub s: f64,
    pub lambda: f64,
    pub dual: DualConfig,
    pub picard: PicardConfig,
    pub output_dir: PathBuf,
    pub seed: u64,
    /// sine-mode amplitude of the initial temperature data; None defers to
    /// the experiment default (1e-2 linear, picard.delta nonlinear)
    pub theta_amp: Option<f64>,
    /// amplitude of the background column sin(pi x2)
    pub bar_amp: f64,
    /// penalizations visited by the linear-control sweep, tightest last
    pub sweep_epsilons: Vec<f64>,
    pub samples: usize,
    pub alpha_family: bool,
    /// every stride-th time level is dumped, plus the terminal one
    pub stride: usize,
}

impl RunConfig {
    pub fn resolved_theta_amp(&self) -> f64 {
        self.theta_amp.unwrap_or(match self.experiment {
            Experiment::NonlinearControl => self.picard.delta,
            _ => 1e-2,
        })
    }

    /// The full resolved configuration as manifest pairs, in config-key
    /// order, so every run records exactly what it executed.
    pub fn manifest_pairs(&self) -> Vec<(&'static str, String)> {
        let fmt_box = |b: &BoxRegion| format!("{},{},{},{}", b.lo[0], b.hi[0], b.lo[1], b.hi[1]);
        let (schedule, eps0) = match self.picard.epsilon_schedule {
            EpsilonSchedule::Fixed(e) => ("fixed", e),
            EpsilonSchedule::Geometric(e) => ("geometric", e),
        };
        vec![
            ("experiment", self.experiment.as_str().to_string()),
            ("seed", self.seed.to_string()),
            ("output_dir", self.output_dir.display().to_string()),
            ("domain.t_final", self.domain.t_final.to_string()),
            ("domain.omega", fmt_box(&self.domain.omega)),
            ("domain.omega0", fmt_box(&self.domain.omega0)),
            ("grid.nx", self.grid.nx.to_string()),
            ("grid.ny", self.grid.ny.to_string()),
            ("grid.nt", self.grid.nt.to_string()),
            ("weights.s", self.s.to_string()),
            ("weights.lambda", self.lambda.to_string()),
            ("dual.epsilon", self.dual.epsilon.to_string()),
            ("dual.cg_tol", self.dual.cg_tol.to_string()),
            ("dual.cg_max_iters", self.dual.cg_max_iters.to_string()),
            ("dual.observe_velocity", self.dual.observe_velocity.to_string()),
            ("dual.j_index", self.dual.j_index.to_string()),
            ("picard.delta", self.picard.delta.to_string()),
            ("picard.max_outer", self.picard.max_outer.to_string()),
            ("picard.outer_tol", self.picard.outer_tol.to_string()),
            ("picard.schedule", schedule.to_string()),
            ("picard.epsilon0", eps0.to_string()),
            ("data.theta_amp", self.resolved_theta_amp().to_string()),
            ("data.bar_amp", self.bar_amp.to_string()),
            (
                "sweep.epsilons",
                self.sweep_epsilons
                    .iter()
                    .map(|e| e.to_string())
                    .collect::<Vec<_>>()
                    .join(","),
            ),
            ("samples", self.samples.to_string()),
            ("alpha_family", self.alpha_family.to_string()),
            ("stride", self.stride.to_string()),
            ("threads", "1".to_string()),
        ]
    }
}

fn parse_err(line: usize, message: String) -> CliError {
    CliError::Parse { line, message }
}

fn num<T: std::str::FromStr>(line: usize, key: &str, v: &str, kind: &str) -> Result<T, CliError> {
    v.parse()
        .map_err(|_| parse_err(line, format!("{key} expects {kind}, got `{v}`")))
}

fn bool_val(line: usize, key: &str, v: &str) -> Result<bool, CliError> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(parse_err(line, format!("{key} expects true or false, got `{v}`"))),
    }
}

fn box_val(line: usize, key: &str, v: &str) -> Result<BoxRegion, CliError> {
    let parts: Vec<&str> = v.split(',').collect();
    if parts.len() != 4 {
        return Err(parse_err(
            line,
            format!("{key} expects x0,x1,y0,y1 (4 numbers), got {} fields", parts.len()),
        ));
    }
    let mut c = [0.0; 4];
    for (slot, p) in c.iter_mut().zip(&parts) {
        *slot = num(line, key, p.trim(), "a number")?;
    }
    Ok(BoxRegion::new2(c[0], c[1], c[2], c[3]))
}

fn list_val(line: usize, key: &str, v: &str) -> Result<Vec<f64>, CliError> {
    v.split(',')
        .map(|p| num(line, key, p.trim(), "a number"))
        .collect()
}

fn invalid(message: String) -> CliError {
    CliError::Validation(message)
}

fn require_positive(name: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be positive and finite, got {v}")))
    }
}

/// Parses and validates; returns a config whose geometry, grid, and
/// solver knobs all satisfy their invariants.
pub fn parse_config(text: &str) -> Result<RunConfig, CliError> {
    let mut experiment = None;
    let mut seed = 0u64;
    let mut output_dir = PathBuf::from("out");
    let mut t_final = 1.0;
    let mut omega = BoxRegion::new2(0.25, 0.75, 0.25, 0.75);
    let mut omega0 = BoxRegion::new2(0.4, 0.6, 0.4, 0.6);
    let (mut nx, mut ny, mut nt) = (32usize, 32usize, 64usize);
    let (mut s, mut lambda) = (2.0, 1.5);
    let mut dual = DualConfig::default();
    let mut delta = 1e-3f64;
    let mut max_outer = 8usize;
    let mut outer_tol = 1e-8;
    let mut schedule = "fixed".to_string();
    let mut epsilon0 = 1e-4;
    let mut theta_amp: Option<f64> = None;
    let mut bar_amp = 0.5f64;
    let mut sweep = None;
    let mut samples = 50usize;
    let mut alpha_family = false;
    let mut stride = 8usize;

    let mut seen = HashSet::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (key, value) = trimmed
            .split_once('=')
            .ok_or_else(|| parse_err(line, format!("expected key=value, got `{trimmed}`")))?;
        let (key, v) = (key.trim(), value.trim());
        if !seen.insert(key.to_string()) {
            return Err(parse_err(line, format!("duplicate key `{key}`")));
        }
        match key {
            "experiment" => {
                experiment = Some(match v {
                    "weight-report" => Experiment::WeightReport,
                    "trajectory" => Experiment::Trajectory,
                    "linear-control" => Experiment::LinearControl,
                    "nonlinear-control" => Experiment::NonlinearControl,
                    "carleman-ratio" => Experiment::CarlemanRatio,
                    "neumann-demo" => Experiment::NeumannDemo,
                    _ => {
                        return Err(parse_err(
                            line,
                            format!(
                                "unknown experiment `{v}` (expected weight-report, trajectory, \
                                 linear-control, nonlinear-control, carleman-ratio, or neumann-demo)"
                            ),
                        ))
                    }
                })
            }
            "seed" => seed = num(line, key, v, "an unsigned integer")?,
            "output_dir" => output_dir = PathBuf::from(v),
            "domain.t_final" => t_final = num(line, key, v, "a number")?,
            "domain.omega" => omega = box_val(line, key, v)?,
            "domain.omega0" => omega0 = box_val(line, key, v)?,
            "grid.nx" => nx = num(line, key, v, "an integer")?,
            "grid.ny" => ny = num(line, key, v, "an integer")?,
            "grid.nt" => nt = num(line, key, v, "an integer")?,
            "weights.s" => s = num(line, key, v, "a number")?,
            "weights.lambda" => lambda = num(line, key, v, "a number")?,
            "dual.epsilon" => dual.epsilon = num(line, key, v, "a number")?,
            "dual.cg_tol" => dual.cg_tol = num(line, key, v, "a number")?,
            "dual.cg_max_iters" => dual.cg_max_iters = num(line, key, v, "an integer")?,
            "dual.observe_velocity" => dual.observe_velocity = bool_val(line, key, v)?,
            "dual.j_index" => dual.j_index = num(line, key, v, "an integer")?,
            "picard.delta" => delta = num(line, key, v, "a number")?,
            "picard.max_outer" => max_outer = num(line, key, v, "an integer")?,
            "picard.outer_tol" => outer_tol = num(line, key, v, "a number")?,
            "picard.schedule" => schedule = v.to_string(),
            "picard.epsilon0" => epsilon0 = num(line, key, v, "a number")?,
            "data.theta_amp" => theta_amp = Some(num(line, key, v, "a number")?),
            "data.bar_amp" => bar_amp = num(line, key, v, "a number")?,
            "sweep.epsilons" => sweep = Some(list_val(line, key, v)?),
            "samples" => samples = num(line, key, v, "an integer")?,
            "alpha_family" => alpha_family = bool_val(line, key, v)?,
            "stride" => stride = num(line, key, v, "an integer")?,
            _ => return Err(parse_err(line, format!("unknown key `{key}`"))),
        }
    }

    let experiment = experiment
        .ok_or_else(|| invalid("experiment must be set (e.g. experiment=weight-report)".into()))?;

    let domain = DomainSpec::new(2, [1.0, 1.0, 0.0], omega, omega0, t_final)
        .map_err(|e| invalid(e.to_string()))?;
    let grid = GridSpec::new(&domain, nx, ny, nt).map_err(|e| invalid(e.to_string()))?;
    // admissibility probe: the bump function must exist for this patch
    // pair, and catching that here beats failing mid-run
    EtaField::build(&domain, &grid).map_err(|e| invalid(e.to_string()))?;

    require_positive("weights.s", s)?;
    require_positive("weights.lambda", lambda)?;
    require_positive("dual.epsilon", dual.epsilon)?;
    require_positive("dual.cg_tol", dual.cg_tol)?;
    if dual.cg_max_iters == 0 {
        return Err(invalid("dual.cg_max_iters must be at least 1".into()));
    }
    if dual.j_index > 1 {
        return Err(invalid(format!(
            "dual.j_index must be 0 or 1 on a 2D grid, got {}",
            dual.j_index
        )));
    }
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(invalid(format!(
            "picard.delta must be nonnegative and finite, got {delta}"
        )));
    }
    if max_outer == 0 {
        return Err(invalid("picard.max_outer must be at least 1".into()));
    }
    require_positive("picard.outer_tol", outer_tol)?;
    require_positive("picard.epsilon0", epsilon0)?;
    let epsilon_schedule = match schedule.as_str() {
        "fixed" => EpsilonSchedule::Fixed(epsilon0),
        "geometric" => EpsilonSchedule::Geometric(epsilon0),
        other => {
            return Err(invalid(format!(
                "picard.schedule must be fixed or geometric, got `{other}`"
            )))
        }
    };
    let sweep_epsilons = sweep.unwrap_or_else(|| vec![dual.epsilon]);
    if sweep_epsilons.is_empty() {
        return Err(invalid("sweep.epsilons must list at least one value".into()));
    }
    for e in &sweep_epsilons {
        require_positive("sweep.epsilons entry", *e)?;
    }
    if samples == 0 {
        return Err(invalid("samples must be at least 1".into()));
    }
    if stride == 0 {
        return Err(invalid("stride must be at least 1".into()));
    }
    if let Some(a) = theta_amp {
        if !a.is_finite() {
            return Err(invalid(format!("data.theta_amp must be finite, got {a}")));
        }
    }
    if !bar_amp.is_finite() {
        return Err(invalid(format!("data.bar_amp must be finite, got {bar_amp}")));
    }

    let picard = PicardConfig {
        delta,
        max_outer,
        outer_tol,
        epsilon_schedule,
        dual: dual.clone(),
    };
    Ok(RunConfig {
        experiment,
        domain,
        grid,
        s,
        lambda,
        dual,
        picard,
        output_dir,
        seed,
        theta_amp,
        bar_amp,
        sweep_epsilons,
        samples,
        alpha_family,
        stride,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_fills_the_documented_defaults() {
        let cfg = parse_config("experiment=weight-report\n").unwrap();
        assert_eq!(cfg.experiment, Experiment::WeightReport);
        assert_eq!((cfg.grid.nx, cfg.grid.ny, cfg.grid.nt), (32, 32, 64));
        assert_eq!(cfg.domain.t_final, 1.0);
        assert_eq!((cfg.s, cfg.lambda), (2.0, 1.5));
        assert_eq!(cfg.dual.epsilon, 1e-4);
        assert_eq!(cfg.seed, 0);
        assert_eq!(cfg.sweep_epsilons, vec![1e-4]);
    }

    #[test]
    fn off_center_inner_patch_is_rejected_at_parse_time() {
        let text = "experiment=weight-report\n\
                    domain.omega=0.3,0.7,0.3,0.7\n\
                    domain.omega0=0.55,0.65,0.55,0.65\n";
        let err = parse_config(text).unwrap_err();
        match err {
            CliError::Validation(msg) => {
                assert!(msg.contains("admissibility"), "unexpected message: {msg}")
            }
            other => panic!("expected a validation error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_number_reports_its_line() {
        let text = "experiment=trajectory\ngrid.nx=abc\n";
        match parse_config(text).unwrap_err() {
            CliError::Parse { line, message } => {
                assert_eq!(line, 2);
                assert!(message.contains("grid.nx"), "message: {message}");
            }
            other => panic!("expected a parse error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_and_duplicate_keys_are_rejected() {
        match parse_config("experiment=trajectory\ngrid.nz=3\n").unwrap_err() {
            CliError::Parse { line, message } => {
                assert_eq!(line, 2);
                assert!(message.contains("unknown key"), "message: {message}");
            }
            other => panic!("{other:?}"),
        }
        match parse_config("experiment=trajectory\nseed=1\nseed=2\n").unwrap_err() {
            CliError::Parse { line, message } => {
                assert_eq!(line, 3);
                assert!(message.contains("duplicate"), "message: {message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_experiment_is_a_validation_error() {
        match parse_config("seed=3\n").unwrap_err() {
            CliError::Validation(msg) => assert!(msg.contains("experiment"), "message: {msg}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn sweep_schedule_and_amplitude_parse() {
        let text = "experiment=nonlinear-control\n\
                    # comment line\n\
                    sweep.epsilons=1e-2, 1e-3 ,1e-4\n\
                    picard.schedule=geometric\n\
                    picard.epsilon0=1e-3\n\
                    data.theta_amp=5e-4\n";
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.sweep_epsilons, vec![1e-2, 1e-3, 1e-4]);
        assert_eq!(cfg.picard.epsilon_schedule, EpsilonSchedule::Geometric(1e-3));
        assert_eq!(cfg.resolved_theta_amp(), 5e-4);
        // without the override the nonlinear default tracks picard.delta
        let cfg2 = parse_config("experiment=nonlinear-control\npicard.delta=2e-3\n").unwrap();
        assert_eq!(cfg2.resolved_theta_amp(), 2e-3);
    }

    #[test]
    fn invariant_violations_name_the_knob() {
        for (text, needle) in [
            ("experiment=trajectory\ndual.epsilon=0\n", "dual.epsilon"),
            ("experiment=trajectory\nweights.s=-1\n", "weights.s"),
            ("experiment=trajectory\npicard.schedule=linear\n", "picard.schedule"),
            ("experiment=trajectory\ndual.j_index=2\n", "j_index"),
            ("experiment=trajectory\nstride=0\n", "stride"),
        ] {
            match parse_config(text).unwrap_err() {
                CliError::Validation(msg) => {
                    assert!(msg.contains(needle), "`{msg}` does not mention {needle}")
                }
                other => panic!("{other:?}"),
            }
        }
    }

    #[test]
    fn manifest_pairs_echo_every_resolved_key() {
        let cfg = parse_config("experiment=linear-control\nseed=7\n").unwrap();
        let pairs = cfg.manifest_pairs();
        let get = |k: &str| {
            pairs
                .iter()
                .find(|(key, _)| *key == k)
                .map(|(_, v)| v.clone())
                .unwrap_or_else(|| panic!("manifest misses {k}"))
        };
        assert_eq!(get("experiment"), "linear-control");
        assert_eq!(get("seed"), "7");
        assert_eq!(get("grid.nx"), "32");
        assert_eq!(get("domain.omega"), "0.25,0.75,0.25,0.75");
        assert_eq!(get("data.theta_amp"), "0.01");
        assert_eq!(get("threads"), "1");
    }
}
