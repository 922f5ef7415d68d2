//! Competition-system data and the coercivity / time-step diagnostics.

use std::fmt;

use thiserror::Error;

use crate::expr::{Expr, ExprError, Var};
use crate::fem::{quad_rule, Degree, FemError, ASSEMBLY_QUAD_DEGREE};
use crate::mesh::{build_rect_mesh, MeshError, Rect};

/// Default Poincaré-type constant `1/(sqrt(2) pi)` of the unit square.
pub const DEFAULT_POINCARE_C: f64 = std::f64::consts::FRAC_1_SQRT_2 / std::f64::consts::PI;

/// Relative tolerance for `T/dt` being an integer.
pub const STEP_COUNT_RTOL: f64 = 1e-9;

/// Upper limit on the number of time levels sampled by [`estimate_bounds`].
pub const MAX_TIME_SAMPLES: usize = 1025;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid `{field}`: {message}")]
    Invalid { field: String, message: String },
    #[error("carrying capacity not positive on sample grid: K({t}, {x}, {y}) = {value}")]
    NonPositiveCapacity { t: f64, x: f64, y: f64, value: f64 },
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Fem(#[from] FemError),
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> ModelError {
    ModelError::Invalid {
        field: field.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeciesParams {
    /// Diffusion rate, positive.
    pub d: f64,
    /// Harvesting (positive) or stocking (negative) coefficient.
    pub mu: f64,
    /// Intrinsic growth rate `r_i(t, x, y)`.
    pub r: Expr,
    /// Source term `f_i(t, x, y)`.
    pub f: Expr,
    /// Initial density.
    pub u0: Expr,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BoundaryCondition {
    /// Homogeneous Neumann.
    NoFlux,
    /// `u_i = g_i(t, x, y)` on the boundary, one expression per species.
    Dirichlet(Vec<Expr>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    Dbe,
    Dbdf2,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Dbe => "DBE",
            Scheme::Dbdf2 => "DBDF2",
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().replace('-', "").as_str() {
            "DBE" => Ok(Scheme::Dbe),
            "DBDF2" => Ok(Scheme::Dbdf2),
            _ => Err(invalid(
                "scheme",
                format!("unknown scheme {s:?} (expected DBE or DBDF2)"),
            )),
        }
    }
}

/// The full problem: species, shared carrying capacity, boundary
/// condition, domain, uniform time grid and discretisation.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemSpec {
    pub species: Vec<SpeciesParams>,
    pub capacity: Expr,
    pub bc: BoundaryCondition,
    pub domain: Rect,
    pub t_end: f64,
    pub dt: f64,
    pub scheme: Scheme,
    pub nx: usize,
    pub ny: usize,
    pub degree: Degree,
}

impl SystemSpec {
    pub fn num_species(&self) -> usize {
        self.species.len()
    }

    /// Checks every invariant; the error names the offending field.
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.species.is_empty() {
            return Err(invalid("species", "at least one species is required"));
        }
        for (i, s) in self.species.iter().enumerate() {
            if !(s.d > 0.0 && s.d.is_finite()) {
                return Err(invalid(
                    format!("species.{}.d", i + 1),
                    format!("must be positive, got {}", s.d),
                ));
            }
            if !s.mu.is_finite() {
                return Err(invalid(format!("species.{}.mu", i + 1), "must be finite"));
            }
        }
        if let BoundaryCondition::Dirichlet(g) = &self.bc {
            if g.len() != self.species.len() {
                return Err(invalid(
                    "boundary",
                    format!("{} Dirichlet expressions for {} species", g.len(), self.species.len()),
                ));
            }
        }
        let d = self.domain;
        if !(d.x1 > d.x0 && d.y1 > d.y0) || ![d.x0, d.x1, d.y0, d.y1].iter().all(|v| v.is_finite()) {
            return Err(invalid("domain", "expected x0 < x1 and y0 < y1"));
        }
        if self.nx == 0 || self.ny == 0 {
            return Err(invalid("mesh", "nx and ny must be at least 1"));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(invalid("T", format!("must be positive, got {}", self.t_end)));
        }
        self.num_steps().map(|_| ())
    }

    /// `M = T / dt`, which must be an integer up to [`STEP_COUNT_RTOL`].
    pub fn num_steps(&self) -> Result<usize, ModelError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(invalid("dt", format!("must be positive, got {}", self.dt)));
        }
        let ratio = self.t_end / self.dt;
        let m = ratio.round();
        if m < 1.0 || (ratio - m).abs() > STEP_COUNT_RTOL * ratio {
            return Err(invalid("dt", format!("T/dt = {ratio} is not a positive integer")));
        }
        Ok(m as usize)
    }

    /// Effective step `T / M`; equals `dt` up to the validation tolerance.
    pub fn step_size(&self) -> f64 {
        self.t_end / (self.t_end / self.dt).round()
    }

    /// `t^n = n T / M`, so that `t^M = T` exactly.
    pub fn time(&self, n: usize) -> f64 {
        n as f64 * self.t_end / (self.t_end / self.dt).round()
    }
}

/// Sampled extrema of the coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    /// Largest sampled `|r_i|` per species (a lower bound for the sup norm).
    pub r_inf: Vec<f64>,
    /// Smallest sampled `K` (an upper bound for the infimum).
    pub k_min: f64,
}

/// Time levels visited by the sampler: all of them, or an evenly strided
/// subset including both ends when there are more than [`MAX_TIME_SAMPLES`].
fn sample_levels(m: usize) -> Vec<usize> {
    if m < MAX_TIME_SAMPLES {
        return (0..=m).collect();
    }
    let k = MAX_TIME_SAMPLES - 1;
    let mut v: Vec<usize> = (0..=k)
        .map(|j| ((j as u128 * m as u128 + k as u128 / 2) / k as u128) as usize)
        .collect();
    v.dedup();
    v
}

/// Samples `r_i` and `K` at every assembly quadrature point of the mesh and
/// at the time levels `t^n`. The results are estimates, not certified extrema.
pub fn estimate_bounds(spec: &SystemSpec) -> Result<Bounds, ModelError> {
    spec.validate()?;
    let m = spec.num_steps()?;
    let d = spec.domain;
    let mesh = build_rect_mesh(d.x0, d.x1, d.y0, d.y1, spec.nx, spec.ny)?;
    let rule = quad_rule(ASSEMBLY_QUAD_DEGREE)?;
    let mut points = Vec::with_capacity(mesh.num_triangles() * rule.len());
    for tri in 0..mesh.num_triangles() {
        let [p0, p1, p2] = mesh.triangle_coords(tri);
        for [xi, eta] in rule.points() {
            points.push([
                p0[0] + (p1[0] - p0[0]) * xi + (p2[0] - p0[0]) * eta,
                p0[1] + (p1[1] - p0[1]) * xi + (p2[1] - p0[1]) * eta,
            ]);
        }
    }
    let levels = sample_levels(m);
    let times = |e: &Expr| -> Vec<f64> {
        if e.depends_on(Var::T) {
            levels.iter().map(|&n| spec.time(n)).collect()
        } else {
            vec![0.0]
        }
    };

    let mut k_min = f64::INFINITY;
    for t in times(&spec.capacity) {
        for &[x, y] in &points {
            let value = spec.capacity.eval(t, x, y)?;
            if !(value > 0.0) {
                return Err(ModelError::NonPositiveCapacity { t, x, y, value });
            }
            k_min = k_min.min(value);
        }
    }
    let mut r_inf = Vec::with_capacity(spec.species.len());
    for s in &spec.species {
        let mut best = 0.0f64;
        for t in times(&s.r) {
            for &[x, y] in &points {
                best = best.max(s.r.eval(t, x, y)?.abs());
            }
        }
        r_inf.push(best);
    }
    Ok(Bounds { r_inf, k_min })
}

/// `d - C r_inf (|1 - mu| + 1/K_min)`.
pub fn alpha_value(d: f64, mu: f64, r_inf: f64, k_min: f64, c: f64) -> f64 {
    d - c * r_inf * ((1.0 - mu).abs() + 1.0 / k_min)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepBound {
    Bounded(f64),
    /// No restriction can be derived (non-positive denominator).
    Unconditional,
}

impl StepBound {
    pub fn allows(self, dt: f64) -> bool {
        match self {
            StepBound::Bounded(b) => dt <= b,
            StepBound::Unconditional => true,
        }
    }
}

impl fmt::Display for StepBound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StepBound::Bounded(b) => write!(f, "{b:.6e}"),
            StepBound::Unconditional => f.write_str("unconditional"),
        }
    }
}

/// `K_min / (|1 - mu| r_inf K_min + C r_inf)`.
pub fn dt_max_value(mu: f64, r_inf: f64, k_min: f64, c: f64) -> StepBound {
    let denom = (1.0 - mu).abs() * r_inf * k_min + c * r_inf;
    if denom > 0.0 && denom.is_finite() {
        StepBound::Bounded(k_min / denom)
    } else {
        StepBound::Unconditional
    }
}

pub fn alpha(spec: &SystemSpec, bounds: &Bounds, i: usize, c: f64) -> f64 {
    alpha_value(spec.species[i].d, spec.species[i].mu, bounds.r_inf[i], bounds.k_min, c)
}

pub fn dt_max(spec: &SystemSpec, bounds: &Bounds, i: usize, c: f64) -> StepBound {
    dt_max_value(spec.species[i].mu, bounds.r_inf[i], bounds.k_min, c)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeciesStability {
    pub r_inf: f64,
    pub alpha: f64,
    pub dt_max: StepBound,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub c_used: f64,
    pub k_min: f64,
    pub dt: f64,
    pub species: Vec<SpeciesStability>,
}

impl StabilityReport {
    pub fn new(spec: &SystemSpec, c: f64) -> Result<Self, ModelError> {
        let bounds = estimate_bounds(spec)?;
        Ok(Self::from_bounds(spec, &bounds, c))
    }

    pub fn from_bounds(spec: &SystemSpec, bounds: &Bounds, c: f64) -> Self {
        let species = (0..spec.num_species())
            .map(|i| SpeciesStability {
                r_inf: bounds.r_inf[i],
                alpha: alpha(spec, bounds, i, c),
                dt_max: dt_max(spec, bounds, i, c),
            })
            .collect();
        Self {
            c_used: c,
            k_min: bounds.k_min,
            dt: spec.dt,
            species,
        }
    }

    /// Species (0-based) whose `dt_max` is smaller than the configured step.
    pub fn violations(&self) -> Vec<usize> {
        (0..self.species.len())
            .filter(|&i| !self.species[i].dt_max.allows(self.dt))
            .collect()
    }
}

impl fmt::Display for StabilityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "stability report (sampled estimates)")?;
        writeln!(f, "  C = {:.4}", self.c_used)?;
        writeln!(f, "  K_min = {:.6e}", self.k_min)?;
        writeln!(f, "  dt = {}", self.dt)?;
        for (i, s) in self.species.iter().enumerate() {
            writeln!(
                f,
                "  species {}: r_inf = {:.6e}  alpha = {:.6e}{}  dt_max = {}{}",
                i + 1,
                s.r_inf,
                s.alpha,
                if s.alpha > 0.0 { "" } else { " (not positive)" },
                s.dt_max,
                if s.dt_max.allows(self.dt) {
                    ""
                } else {
                    " (dt exceeds bound)"
                },
            )?;
        }
        Ok(())
    }
}
