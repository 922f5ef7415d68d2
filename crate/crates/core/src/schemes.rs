//! Decoupled time steppers (DBE and DBDF-2) and the simulation driver.
//!
//! Every species solves its own linear system per step. The coupling term
//! only reads fields from earlier levels, so the solves are independent and
//! run concurrently.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::expr::{Expr, ExprError};
use crate::fem::{
    apply_dirichlet_values, assemble_load_from_qp, assemble_mass, assemble_mass_from_qp_into, assemble_stiffness,
    interpolate, FEField, FemError, FunctionSpace, MassWeight,
};
use crate::mesh::build_rect_mesh;
use crate::model::{BoundaryCondition, ModelError, Scheme, StabilityReport, SystemSpec, DEFAULT_POINCARE_C};
use crate::sparse::{CsrMatrix, LuFactorization, LuSymbolic, SparseError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SchemeError {
    #[error("linear solve failed for species {species} at step {step}: {source}")]
    Solve {
        species: usize,
        step: usize,
        source: SparseError,
    },
    #[error("DBDF-2 step needs two prior levels")]
    MissingHistory,
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Observer(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Expr(#[from] ExprError),
}

/// Fields at level `n` and, once a step has been taken, level `n - 1`.
#[derive(Debug, Clone)]
pub struct SystemState {
    pub n: usize,
    pub t: f64,
    pub current: Vec<FEField>,
    pub previous: Option<Vec<FEField>>,
}

/// `(1/|Ω|) ∫ u` from the basis integrals, summed as deviations from the
/// first coefficient so that constant fields average to exactly their value.
pub fn average_density(u: &FEField) -> f64 {
    let c = u.coeffs();
    let Some(&base) = c.first() else {
        return 0.0;
    };
    let w = u.space().basis_integrals();
    let dev: f64 = c.iter().zip(w).map(|(ci, wi)| (ci - base) * wi).sum();
    base + dev / u.space().domain_area()
}

fn sample(e: &Expr, t: f64, pts: &[[f64; 2]]) -> Result<Vec<f64>, ExprError> {
    if let Some(c) = e.as_constant() {
        return Ok(vec![c; pts.len()]);
    }
    pts.iter().map(|p| e.eval(t, p[0], p[1])).collect()
}

/// Matrices and factorisation data reused across steps of one run.
pub struct Stepper<'a> {
    spec: &'a SystemSpec,
    space: Arc<FunctionSpace>,
    mass: CsrMatrix,
    stiffness: CsrMatrix,
    symbolic: Arc<LuSymbolic>,
    order: Vec<usize>,
    boundary_dofs: Vec<usize>,
}

impl<'a> Stepper<'a> {
    pub fn new(spec: &'a SystemSpec) -> Result<Self, SchemeError> {
        spec.validate()?;
        let d = spec.domain;
        let mesh = build_rect_mesh(d.x0, d.x1, d.y0, d.y1, spec.nx, spec.ny).map_err(FemError::from)?;
        let space = FunctionSpace::new(Arc::new(mesh), spec.degree)?;
        Self::with_space(spec, space)
    }

    pub fn with_space(spec: &'a SystemSpec, space: Arc<FunctionSpace>) -> Result<Self, SchemeError> {
        spec.validate()?;
        let mass = assemble_mass(&space, &MassWeight::Unit, 0.0)?;
        let stiffness = assemble_stiffness(&space, 1.0)?;
        let symbolic = Arc::new(LuSymbolic::analyze(space.pattern()));
        let boundary_dofs = match spec.bc {
            BoundaryCondition::NoFlux => Vec::new(),
            BoundaryCondition::Dirichlet(_) => space.boundary_dofs(),
        };
        Ok(Self {
            spec,
            space,
            mass,
            stiffness,
            symbolic,
            order: (0..spec.num_species()).collect(),
            boundary_dofs,
        })
    }

    pub fn space(&self) -> &Arc<FunctionSpace> {
        &self.space
    }

    pub fn mass(&self) -> &CsrMatrix {
        &self.mass
    }

    /// Order in which species systems are handed to the solver pool.
    pub fn set_species_order(&mut self, order: Vec<usize>) -> Result<(), SchemeError> {
        let mut sorted = order.clone();
        sorted.sort_unstable();
        if sorted != (0..self.spec.num_species()).collect::<Vec<_>>() {
            return Err(SchemeError::Usage(format!(
                "species order {order:?} is not a permutation"
            )));
        }
        self.order = order;
        Ok(())
    }

    /// Interpolates the initial data.
    pub fn initial_state(&self) -> Result<SystemState, SchemeError> {
        let current = self
            .spec
            .species
            .iter()
            .map(|s| interpolate(&self.space, &s.u0, 0.0))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(SystemState {
            n: 0,
            t: 0.0,
            current,
            previous: None,
        })
    }

    /// One step of the decoupled backward Euler scheme.
    pub fn dbe_step(&self, state: &SystemState) -> Result<SystemState, SchemeError> {
        let dt = self.spec.step_size();
        let history: Vec<Vec<f64>> = state
            .current
            .iter()
            .map(|u| u.coeffs().iter().map(|c| c / dt).collect())
            .collect();
        let extrapolated: Vec<(&FEField, f64)> = state.current.iter().map(|u| (u, 1.0)).collect();
        self.advance(state, 1.0 / dt, &history, &extrapolated)
    }

    /// One step of the decoupled BDF2 scheme; needs `state.previous`.
    pub fn dbdf2_step(&self, state: &SystemState) -> Result<SystemState, SchemeError> {
        let prev = state.previous.as_ref().ok_or(SchemeError::MissingHistory)?;
        let dt = self.spec.step_size();
        let history: Vec<Vec<f64>> = state
            .current
            .iter()
            .zip(prev)
            .map(|(u, v)| {
                u.coeffs()
                    .iter()
                    .zip(v.coeffs())
                    .map(|(a, b)| (4.0 * a - b) / (2.0 * dt))
                    .collect()
            })
            .collect();
        let mut extrapolated: Vec<(&FEField, f64)> = state.current.iter().map(|u| (u, 2.0)).collect();
        extrapolated.extend(prev.iter().map(|u| (u, -1.0)));
        self.advance(state, 1.5 / dt, &history, &extrapolated)
    }

    /// Takes the scheme's step, bootstrapping DBDF-2 with DBE at `n = 0`.
    pub fn step(&self, state: &SystemState) -> Result<SystemState, SchemeError> {
        match self.spec.scheme {
            Scheme::Dbdf2 if state.previous.is_some() => self.dbdf2_step(state),
            _ => self.dbe_step(state),
        }
    }

    /// Solves `(coef M + d_i S + M[c_i]) u_i = M h_i + F_i` for every species,
    /// with `c_i = -(1 - mu_i) r_i + (r_i / K) Σ_j w_j u_j` at `t^{n+1}`.
    fn advance(
        &self,
        state: &SystemState,
        coef: f64,
        history: &[Vec<f64>],
        extrapolated: &[(&FEField, f64)],
    ) -> Result<SystemState, SchemeError> {
        let n_species = self.spec.num_species();
        if state.current.len() != n_species {
            return Err(SchemeError::Usage(format!(
                "state has {} fields for {} species",
                state.current.len(),
                n_species
            )));
        }
        for (u, _) in extrapolated {
            if !Arc::ptr_eq(u.space(), &self.space) {
                return Err(FemError::MismatchedSpace.into());
            }
        }
        let step = state.n + 1;
        let t1 = self.spec.time(step);
        let cache = self.space.assembly_quadrature();
        let pts = cache.points();

        let capacity = sample(&self.spec.capacity, t1, pts)?;
        let mut total = vec![0.0; pts.len()];
        for (u, w) in extrapolated {
            u.accumulate_values_at(cache, *w, &mut total);
        }
        let competition: Vec<f64> = total.iter().zip(&capacity).map(|(s, k)| s / k).collect();

        let solve_one = |i: usize| -> Result<Vec<f64>, SchemeError> {
            let sp = &self.spec.species[i];
            let r = sample(&sp.r, t1, pts)?;
            let weight: Vec<f64> = r
                .iter()
                .zip(&competition)
                .map(|(r, q)| r * (q - (1.0 - sp.mu)))
                .collect();
            let mut a = self.space.pattern().clone();
            assemble_mass_from_qp_into(&self.space, &weight, &mut a)?;
            for ((v, m), s) in a
                .values_mut()
                .iter_mut()
                .zip(self.mass.values())
                .zip(self.stiffness.values())
            {
                *v += coef * m + sp.d * s;
            }
            let mut b = self.mass.matvec(&history[i]);
            if sp.f.as_constant() != Some(0.0) {
                let f = sample(&sp.f, t1, pts)?;
                for (bi, li) in b.iter_mut().zip(assemble_load_from_qp(&self.space, &f)?) {
                    *bi += li;
                }
            }
            if let BoundaryCondition::Dirichlet(g) = &self.spec.bc {
                let coords = self.space.dof_coords();
                let values = self
                    .boundary_dofs
                    .iter()
                    .map(|&dof| Ok((dof, g[i].eval(t1, coords[dof][0], coords[dof][1])?)))
                    .collect::<Result<Vec<_>, ExprError>>()?;
                apply_dirichlet_values(&mut a, &mut b, &values)?;
            }
            let wrap = |source| SchemeError::Solve {
                species: i + 1,
                step,
                source,
            };
            let lu = LuFactorization::new(&a, Some(&self.symbolic)).map_err(wrap)?;
            lu.solve(&b).map_err(wrap)
        };

        let solved: Vec<(usize, Result<Vec<f64>, SchemeError>)> =
            self.order.par_iter().map(|&i| (i, solve_one(i))).collect();
        let mut next: Vec<Option<FEField>> = vec![None; n_species];
        for (i, res) in solved {
            next[i] = Some(FEField::new(Arc::clone(&self.space), res?, t1)?);
        }
        Ok(SystemState {
            n: step,
            t: t1,
            current: next.into_iter().map(|f| f.expect("every species solved")).collect(),
            previous: Some(state.current.clone()),
        })
    }
}

/// Full-field copy of one time level.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub step: usize,
    pub time: f64,
    pub fields: Vec<FEField>,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// `averages[n][i]` is the average density of species `i` at `t^n`.
    pub averages: Vec<Vec<f64>>,
    pub snapshots: Vec<Snapshot>,
    /// Every level, kept only when requested.
    pub levels: Option<Vec<Vec<FEField>>>,
    pub stability: Option<StabilityReport>,
}

impl Trajectory {
    fn empty(keep_levels: bool) -> Self {
        Self {
            times: Vec::new(),
            averages: Vec::new(),
            snapshots: Vec::new(),
            levels: keep_levels.then(Vec::new),
            stability: None,
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn num_species(&self) -> usize {
        self.averages.first().map_or(0, Vec::len)
    }

    /// Average density series of species `i` (0-based).
    pub fn series(&self, i: usize) -> Vec<f64> {
        self.averages.iter().map(|row| row[i]).collect()
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub snapshot_times: Vec<f64>,
    pub keep_levels: bool,
    pub species_order: Option<Vec<usize>>,
    /// Constant used for the stability report; `None` skips the report.
    pub stability_constant: Option<f64>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            snapshot_times: Vec::new(),
            keep_levels: false,
            species_order: None,
            stability_constant: Some(DEFAULT_POINCARE_C),
        }
    }
}

/// A failed run together with everything recorded before the failure.
#[derive(Debug)]
pub struct RunFailure {
    pub partial: Trajectory,
    pub error: SchemeError,
}

impl fmt::Display for RunFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (after {} recorded levels)", self.error, self.partial.len())
    }
}

impl std::error::Error for RunFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

impl From<SchemeError> for Box<RunFailure> {
    fn from(error: SchemeError) -> Self {
        Box::new(RunFailure {
            partial: Trajectory::empty(false),
            error,
        })
    }
}

/// Maps each requested time to the nearest step; more than `dt/2` off the
/// grid is an error.
pub fn snapshot_steps(spec: &SystemSpec, times: &[f64]) -> Result<Vec<usize>, SchemeError> {
    let m = spec.num_steps()?;
    let mut steps = Vec::with_capacity(times.len());
    for &t in times {
        let dt = spec.step_size();
        let n = (t / dt).round();
        if !t.is_finite() || n < 0.0 || n as usize > m || (t - n * dt).abs() > 0.5 * dt {
            return Err(SchemeError::Usage(format!(
                "snapshot time {t} is not within half a step of the grid on [0, {}]",
                spec.t_end
            )));
        }
        steps.push(n as usize);
    }
    steps.sort_unstable();
    steps.dedup();
    Ok(steps)
}

/// Runs with default options.
pub fn run(spec: &SystemSpec) -> Result<Trajectory, Box<RunFailure>> {
    run_with(spec, &RunOptions::default(), |_, _| Ok(()))
}

/// Runs the configured scheme from `t = 0` to `T`. `observer` sees every
/// level (including the initial one) with its average densities.
pub fn run_with<F>(spec: &SystemSpec, opts: &RunOptions, mut observer: F) -> Result<Trajectory, Box<RunFailure>>
where
    F: FnMut(&SystemState, &[f64]) -> Result<(), SchemeError>,
{
    let m = spec.num_steps().map_err(SchemeError::from)?;
    let snaps = snapshot_steps(spec, &opts.snapshot_times)?;
    let mut stepper = Stepper::new(spec)?;
    if let Some(order) = &opts.species_order {
        stepper.set_species_order(order.clone())?;
    }
    let mut traj = Trajectory::empty(opts.keep_levels);
    if let Some(c) = opts.stability_constant {
        traj.stability = Some(StabilityReport::new(spec, c).map_err(SchemeError::from)?);
    }

    let mut record = |traj: &mut Trajectory, state: &SystemState| -> Result<(), SchemeError> {
        let avg: Vec<f64> = state.current.iter().map(average_density).collect();
        traj.times.push(state.t);
        if let Some(levels) = traj.levels.as_mut() {
            levels.push(state.current.clone());
        }
        if snaps.binary_search(&state.n).is_ok() {
            traj.snapshots.push(Snapshot {
                step: state.n,
                time: state.t,
                fields: state.current.clone(),
            });
        }
        observer(state, &avg)?;
        traj.averages.push(avg);
        Ok(())
    };

    let fail = |partial: Trajectory, error: SchemeError| Box::new(RunFailure { partial, error });
    let mut state = match stepper.initial_state() {
        Ok(s) => s,
        Err(e) => return Err(fail(traj, e)),
    };
    if let Err(e) = record(&mut traj, &state) {
        return Err(fail(traj, e));
    }
    for _ in 0..m {
        state = match stepper.step(&state) {
            Ok(s) => s,
            Err(e) => return Err(fail(traj, e)),
        };
        if let Err(e) = record(&mut traj, &state) {
            return Err(fail(traj, e));
        }
    }
    Ok(traj)
}
