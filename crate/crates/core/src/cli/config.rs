//! TOML run configuration.
//!
//! ```toml
//! [mesh]
//! nx = 16          # ny defaults to nx
//! degree = 2
//!
//! [time]
//! T = 80.0
//! dt = 0.1
//! scheme = "DBDF2"
//!
//! [environment]
//! K = "(1.2+2.5*pi^2*exp(-(x-0.5)^2-(y-0.5)^2))*(1.0+0.3*cos(t))"
//! boundary = "no-flux"   # or "dirichlet"
//!
//! [species.1]
//! d = 1.0
//! mu = 0.0009
//! r = "1"
//! u0 = 1.6
//! ```
//!
//! Optional tables: `[domain]` (x0, x1, y0, y1), `[output]` (dir,
//! snapshots, verification, C) and `[convergence.spatial]` /
//! `[convergence.temporal]`. A species with `exact = "..."` turns the run
//! into a manufactured-solution run: `f`, `u0` and the Dirichlet data are
//! derived from the exact solutions, which every species must then supply.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::expr::{parse, Expr};
use crate::fem::Degree;
use crate::mesh::Rect;
use crate::model::{BoundaryCondition, Scheme, SpeciesParams, SystemSpec, DEFAULT_POINCARE_C};
use crate::verify::{Axis, MmsCase};

#[derive(Debug)]
pub enum ConfigError {
    Io { path: PathBuf, source: std::io::Error },
    Parse(String),
    Invalid { field: String, message: String },
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Io { path, source } => write!(f, "cannot read {}: {source}", path.display()),
            ConfigError::Parse(m) => write!(f, "config parse error: {m}"),
            ConfigError::Invalid { field, message } => write!(f, "invalid config field `{field}`: {message}"),
        }
    }
}

impl std::error::Error for ConfigError {}

fn invalid(field: impl Into<String>, message: impl fmt::Display) -> ConfigError {
    ConfigError::Invalid {
        field: field.into(),
        message: message.to_string(),
    }
}

/// A number or an expression string.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum ExprValue {
    Num(f64),
    Text(String),
}

impl ExprValue {
    fn to_expr(&self, field: &str) -> Result<Expr, ConfigError> {
        match self {
            ExprValue::Num(v) => Ok(Expr::num(*v)),
            ExprValue::Text(s) => parse(s).map_err(|e| invalid(field, e)),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDomain {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMesh {
    nx: usize,
    ny: Option<usize>,
    #[serde(default = "default_degree")]
    degree: usize,
}

fn default_degree() -> usize {
    2
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTime {
    #[serde(rename = "T")]
    t_end: f64,
    dt: f64,
    scheme: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEnvironment {
    #[serde(rename = "K")]
    capacity: ExprValue,
    boundary: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpecies {
    d: f64,
    #[serde(default)]
    mu: f64,
    r: ExprValue,
    f: Option<ExprValue>,
    u0: Option<ExprValue>,
    g: Option<ExprValue>,
    exact: Option<ExprValue>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Option<PathBuf>,
    #[serde(default)]
    snapshots: Vec<f64>,
    #[serde(default)]
    verification: bool,
    #[serde(rename = "C")]
    constant_c: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStudyOverride {
    #[serde(rename = "T")]
    t_end: Option<f64>,
    steps: Option<usize>,
    n: Option<usize>,
    levels: Option<Vec<usize>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStudy {
    #[serde(rename = "T")]
    t_end: f64,
    /// Spatial study: `dt = T / steps`.
    steps: Option<usize>,
    /// Temporal study: mesh subdivisions.
    n: Option<usize>,
    levels: Vec<usize>,
    #[serde(rename = "DBE")]
    dbe: Option<RawStudyOverride>,
    #[serde(rename = "DBDF2")]
    dbdf2: Option<RawStudyOverride>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConvergence {
    spatial: Option<RawStudy>,
    temporal: Option<RawStudy>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    domain: Option<RawDomain>,
    mesh: RawMesh,
    time: RawTime,
    environment: RawEnvironment,
    species: BTreeMap<String, RawSpecies>,
    #[serde(default)]
    output: RawOutput,
    #[serde(default)]
    convergence: RawConvergence,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub snapshots: Vec<f64>,
    pub verification: bool,
    pub constant_c: f64,
}

/// One convergence study: end time, the fixed parameter of the other axis
/// (`dt = T/fixed` for spatial, `n = fixed` for temporal) and the levels.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyPlan {
    pub t_end: f64,
    pub fixed: usize,
    pub levels: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub spec: SystemSpec,
    pub mms: Option<MmsCase>,
    pub output: OutputConfig,
    spatial: Option<(StudyPlan, [Option<RawStudyOverride>; 2])>,
    temporal: Option<(StudyPlan, [Option<RawStudyOverride>; 2])>,
}

impl RunConfig {
    /// The study for `axis` and `scheme`, with any scheme-specific override
    /// applied.
    pub fn study(&self, axis: Axis, scheme: Scheme) -> Option<StudyPlan> {
        let (plan, overrides) = match axis {
            Axis::Spatial => self.spatial.as_ref()?,
            Axis::Temporal => self.temporal.as_ref()?,
        };
        let mut plan = plan.clone();
        let slot = match scheme {
            Scheme::Dbe => &overrides[0],
            Scheme::Dbdf2 => &overrides[1],
        };
        if let Some(o) = slot {
            if let Some(t) = o.t_end {
                plan.t_end = t;
            }
            let fixed = match axis {
                Axis::Spatial => o.steps,
                Axis::Temporal => o.n,
            };
            if let Some(f) = fixed {
                plan.fixed = f;
            }
            if let Some(l) = &o.levels {
                plan.levels = l.clone();
            }
        }
        Some(plan)
    }
}

/// Reads and validates a config file.
pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text)
}

fn study_plan(raw: RawStudy, axis: Axis) -> Result<(StudyPlan, [Option<RawStudyOverride>; 2]), ConfigError> {
    let (name, fixed, wrong) = match axis {
        Axis::Spatial => ("convergence.spatial", raw.steps, raw.n.map(|_| "n")),
        Axis::Temporal => ("convergence.temporal", raw.n, raw.steps.map(|_| "steps")),
    };
    if let Some(key) = wrong {
        return Err(invalid(format!("{name}.{key}"), "not used by this study"));
    }
    let key = if axis == Axis::Spatial { "steps" } else { "n" };
    let fixed = fixed.ok_or_else(|| invalid(format!("{name}.{key}"), "missing"))?;
    let check = |o: &Option<RawStudyOverride>, scheme: &str| -> Result<(), ConfigError> {
        if let Some(o) = o {
            let wrong = match axis {
                Axis::Spatial => o.n.map(|_| "n"),
                Axis::Temporal => o.steps.map(|_| "steps"),
            };
            if let Some(k) = wrong {
                return Err(invalid(format!("{name}.{scheme}.{k}"), "not used by this study"));
            }
        }
        Ok(())
    };
    check(&raw.dbe, "DBE")?;
    check(&raw.dbdf2, "DBDF2")?;
    Ok((
        StudyPlan {
            t_end: raw.t_end,
            fixed,
            levels: raw.levels,
        },
        [raw.dbe, raw.dbdf2],
    ))
}

/// Parses config text. Unknown keys are rejected.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;

    let n = raw.species.len();
    if n == 0 {
        return Err(invalid("species", "at least one [species.N] table is required"));
    }
    let mut ordered = Vec::with_capacity(n);
    for k in 1..=n {
        let s = raw.species.get(&k.to_string()).ok_or_else(|| {
            invalid(
                "species",
                format!("species must be numbered 1..{n}; missing species.{k}"),
            )
        })?;
        ordered.push(s);
    }

    let domain = match raw.domain {
        Some(d) => Rect {
            x0: d.x0,
            x1: d.x1,
            y0: d.y0,
            y1: d.y1,
        },
        None => Rect::UNIT,
    };
    let degree = Degree::from_order(raw.mesh.degree).map_err(|e| invalid("mesh.degree", e))?;
    let scheme: Scheme = raw.time.scheme.parse().map_err(|e| invalid("time.scheme", e))?;
    let capacity = raw.environment.capacity.to_expr("environment.K")?;
    let dirichlet = match raw.environment.boundary.as_str() {
        "no-flux" => false,
        "dirichlet" => true,
        other => {
            return Err(invalid(
                "environment.boundary",
                format!("{other:?} (expected \"no-flux\" or \"dirichlet\")"),
            ))
        }
    };

    let with_exact = ordered.iter().filter(|s| s.exact.is_some()).count();
    if with_exact != 0 && with_exact != n {
        return Err(invalid(
            "species.exact",
            "either every species or none gives an exact solution",
        ));
    }
    let mms = with_exact == n;

    let mut species = Vec::with_capacity(n);
    let mut boundary = Vec::new();
    let mut exact = Vec::new();
    for (k, s) in ordered.iter().enumerate() {
        let field = |name: &str| format!("species.{}.{name}", k + 1);
        let r = s.r.to_expr(&field("r"))?;
        if mms {
            for (name, present) in [("f", s.f.is_some()), ("u0", s.u0.is_some()), ("g", s.g.is_some())] {
                if present {
                    return Err(invalid(field(name), "derived from `exact`; remove it"));
                }
            }
            exact.push(s.exact.as_ref().expect("checked above").to_expr(&field("exact"))?);
            species.push(SpeciesParams {
                d: s.d,
                mu: s.mu,
                r,
                f: Expr::num(0.0),
                u0: Expr::num(0.0),
            });
            continue;
        }
        let f = match &s.f {
            Some(v) => v.to_expr(&field("f"))?,
            None => Expr::num(0.0),
        };
        let u0 =
            s.u0.as_ref()
                .ok_or_else(|| invalid(field("u0"), "missing"))?
                .to_expr(&field("u0"))?;
        match (&s.g, dirichlet) {
            (Some(g), true) => boundary.push(g.to_expr(&field("g"))?),
            (None, true) => return Err(invalid(field("g"), "required for Dirichlet boundaries")),
            (Some(_), false) => return Err(invalid(field("g"), "only valid with boundary = \"dirichlet\"")),
            (None, false) => {}
        }
        species.push(SpeciesParams {
            d: s.d,
            mu: s.mu,
            r,
            f,
            u0,
        });
    }
    if mms && !dirichlet {
        return Err(invalid(
            "environment.boundary",
            "manufactured solutions need \"dirichlet\"",
        ));
    }

    let spec = SystemSpec {
        species,
        capacity,
        bc: if dirichlet && !mms {
            BoundaryCondition::Dirichlet(boundary)
        } else {
            BoundaryCondition::NoFlux
        },
        domain,
        t_end: raw.time.t_end,
        dt: raw.time.dt,
        scheme,
        nx: raw.mesh.nx,
        ny: raw.mesh.ny.unwrap_or(raw.mesh.nx),
        degree,
    };
    let map_model = |e: crate::model::ModelError| match e {
        crate::model::ModelError::Invalid { field, message } => invalid(config_field(&field), message),
        other => invalid("config", other),
    };
    let (spec, mms) = if mms {
        let case = MmsCase::new(spec, exact).map_err(|e| match e {
            crate::schemes::SchemeError::Model(m) => map_model(m),
            other => invalid("species.exact", other),
        })?;
        (case.spec().clone(), Some(case))
    } else {
        spec.validate().map_err(map_model)?;
        (spec, None)
    };

    let constant_c = raw.output.constant_c.unwrap_or(DEFAULT_POINCARE_C);
    if !constant_c.is_finite() || constant_c < 0.0 {
        return Err(invalid("output.C", "must be a non-negative number"));
    }
    if raw.output.verification && mms.is_none() {
        return Err(invalid("output.verification", "requires exact solutions"));
    }
    let spatial = raw
        .convergence
        .spatial
        .map(|s| study_plan(s, Axis::Spatial))
        .transpose()?;
    let temporal = raw
        .convergence
        .temporal
        .map(|s| study_plan(s, Axis::Temporal))
        .transpose()?;

    Ok(RunConfig {
        spec,
        mms,
        output: OutputConfig {
            dir: raw.output.dir.unwrap_or_else(|| PathBuf::from("out")),
            snapshots: raw.output.snapshots,
            verification: raw.output.verification,
            constant_c,
        },
        spatial,
        temporal,
    })
}

/// Maps model field names onto config keys.
fn config_field(model_field: &str) -> String {
    match model_field {
        "dt" => "time.dt".into(),
        "T" => "time.T".into(),
        "mesh" => "mesh.nx".into(),
        "boundary" => "environment.boundary".into(),
        other => other.into(),
    }
}
