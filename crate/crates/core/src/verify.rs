//! Manufactured-solution verification: forcings, space-time error norms and
//! convergence tables.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::expr::{self, parse, Expr, Var};
use crate::fem::{error_norms, Degree, ExactSolution};
use crate::mesh::Rect;
use crate::model::{BoundaryCondition, Scheme, SpeciesParams, SystemSpec};
use crate::schemes::{run_with, RunOptions, SchemeError, Trajectory};

/// A system whose forcing, initial data and Dirichlet data come from known
/// exact solutions.
#[derive(Debug, Clone)]
pub struct MmsCase {
    spec: SystemSpec,
    exact: Vec<ExactSolution>,
}

/// `f_i = ∂u_i/∂t - d_i Δu_i - r_i u_i (1 - mu_i - (1/K) Σ_j u_j)`.
pub fn forcing_expr(spec: &SystemSpec, exact: &[Expr], i: usize) -> Expr {
    let sp = &spec.species[i];
    let u = &exact[i];
    let total = exact.iter().cloned().reduce(expr::add).unwrap_or(Expr::num(0.0));
    let growth = expr::sub(Expr::num(1.0 - sp.mu), expr::div(total, spec.capacity.clone()));
    let reaction = expr::mul(expr::mul(sp.r.clone(), u.clone()), growth);
    expr::sub(
        expr::sub(u.differentiate(Var::T), expr::mul(Expr::num(sp.d), u.laplacian())),
        reaction,
    )
}

impl MmsCase {
    /// Replaces the forcing, initial data and boundary condition of `base`
    /// with the ones implied by `exact`.
    pub fn new(base: SystemSpec, exact: Vec<Expr>) -> Result<Self, SchemeError> {
        if exact.len() != base.num_species() {
            return Err(SchemeError::Usage(format!(
                "{} exact solutions for {} species",
                exact.len(),
                base.num_species()
            )));
        }
        let mut spec = base;
        for i in 0..exact.len() {
            let f = forcing_expr(&spec, &exact, i);
            spec.species[i].f = f;
            spec.species[i].u0 = exact[i].clone();
        }
        spec.bc = BoundaryCondition::Dirichlet(exact.clone());
        spec.validate()?;
        Ok(Self {
            spec,
            exact: exact.into_iter().map(ExactSolution::new).collect(),
        })
    }

    pub fn spec(&self) -> &SystemSpec {
        &self.spec
    }

    pub fn exact(&self, i: usize) -> &ExactSolution {
        &self.exact[i]
    }

    pub fn num_species(&self) -> usize {
        self.exact.len()
    }

    pub fn exact_solutions(&self) -> &[ExactSolution] {
        &self.exact
    }

    /// Same case with a different grid, step or scheme.
    pub fn with_discretisation(&self, n: usize, dt: f64, t_end: f64, scheme: Scheme) -> Self {
        let mut c = self.clone();
        c.spec.nx = n;
        c.spec.ny = n;
        c.spec.dt = dt;
        c.spec.t_end = t_end;
        c.spec.scheme = scheme;
        c
    }
}

/// The generated forcing of species `i`.
pub fn mms_forcing(case: &MmsCase, i: usize) -> &Expr {
    &case.spec.species[i].f
}

/// Two- or three-species benchmark with `d_i = 1` on the unit square.
pub fn benchmark_case(n_species: usize, scheme: Scheme) -> Result<MmsCase, SchemeError> {
    let exact_src = [
        "(1.1+sin(t))*(2.0+sin(y))",
        "(2.0+cos(t))*(1.1+cos(x))",
        "(1.1+sin(t))*(1.1+cos(y))",
    ];
    let mu = [0.001, 0.0006, 0.0];
    if !(1..=3).contains(&n_species) {
        return Err(SchemeError::Usage(format!(
            "benchmark has 1 to 3 species, not {n_species}"
        )));
    }
    let r = parse("(1.5+sin(x)*sin(y))*(1.2+sin(t))")?;
    let species = (0..n_species)
        .map(|i| SpeciesParams {
            d: 1.0,
            mu: mu[i],
            r: r.clone(),
            f: Expr::num(0.0),
            u0: Expr::num(0.0),
        })
        .collect();
    let base = SystemSpec {
        species,
        capacity: parse("(2.1+cos(x)*cos(y))*(1.1+cos(t))")?,
        bc: BoundaryCondition::NoFlux,
        domain: Rect::UNIT,
        t_end: 1.0,
        dt: 0.25,
        scheme,
        nx: 4,
        ny: 4,
        degree: Degree::P2,
    };
    let exact = exact_src[..n_species]
        .iter()
        .map(|s| parse(s))
        .collect::<Result<Vec<_>, _>>()?;
    MmsCase::new(base, exact)
}

/// Accumulates `Δt Σ_{n≥1} ||u_h^n - u(t^n)||_{H1}^2` level by level.
#[derive(Debug, Clone)]
pub struct ErrorAccumulator {
    dt: f64,
    sums: Vec<f64>,
}

impl ErrorAccumulator {
    pub fn new(num_species: usize, dt: f64) -> Self {
        Self {
            dt,
            sums: vec![0.0; num_species],
        }
    }

    /// Adds level `n`; the initial level is skipped.
    pub fn add_level(
        &mut self,
        n: usize,
        fields: &[crate::fem::FEField],
        exact: &[ExactSolution],
        t: f64,
    ) -> Result<(), SchemeError> {
        if n == 0 {
            return Ok(());
        }
        for ((s, u), e) in self.sums.iter_mut().zip(fields).zip(exact) {
            *s += error_norms(u, e, t)?.h1.powi(2);
        }
        Ok(())
    }

    pub fn finish(&self) -> Vec<f64> {
        self.sums.iter().map(|s| (self.dt * s).sqrt()).collect()
    }
}

/// `||e_i||_{2,1}` from a trajectory that kept every level.
pub fn error_21(traj: &Trajectory, case: &MmsCase, i: usize) -> Result<f64, SchemeError> {
    let levels = traj
        .levels
        .as_ref()
        .ok_or_else(|| SchemeError::Usage("trajectory did not keep field levels".into()))?;
    if traj.times.len() < 2 {
        return Ok(0.0);
    }
    let dt = traj.times[1] - traj.times[0];
    let mut sum = 0.0;
    for (fields, &t) in levels.iter().zip(&traj.times).skip(1) {
        sum += error_norms(&fields[i], &case.exact[i], t)?.h1.powi(2);
    }
    Ok((dt * sum).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Spatial,
    Temporal,
}

impl std::str::FromStr for Axis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "spatial" => Ok(Axis::Spatial),
            "temporal" => Ok(Axis::Temporal),
            other => Err(format!("unknown axis {other:?} (expected spatial or temporal)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateRow {
    /// `h = 1/n` or `Δt = T/k`.
    pub param: f64,
    pub label: String,
    pub errors: Vec<f64>,
    /// `log2(e_prev / e)`; `None` on the first row.
    pub rates: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateTable {
    pub axis: Axis,
    pub scheme: Scheme,
    pub rows: Vec<RateRow>,
}

impl RateTable {
    pub fn from_errors(axis: Axis, scheme: Scheme, entries: Vec<(f64, String, Vec<f64>)>) -> Self {
        let mut rows: Vec<RateRow> = Vec::with_capacity(entries.len());
        for (param, label, errors) in entries {
            let rates = match rows.last() {
                Some(prev) => prev
                    .errors
                    .iter()
                    .zip(&errors)
                    .map(|(a, b)| Some((a / b).log2()))
                    .collect(),
                None => vec![None; errors.len()],
            };
            rows.push(RateRow {
                param,
                label,
                errors,
                rates,
            });
        }
        Self { axis, scheme, rows }
    }

    pub fn num_species(&self) -> usize {
        self.rows.first().map_or(0, |r| r.errors.len())
    }

    /// Error column of species `i`.
    pub fn errors(&self, i: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r.errors[i]).collect()
    }

    /// Rates of species `i` (one fewer than rows).
    pub fn rates(&self, i: usize) -> Vec<f64> {
        self.rows.iter().filter_map(|r| r.rates[i]).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("level_param");
        for i in 1..=self.num_species() {
            let _ = write!(s, ",err_{i},rate_{i}");
        }
        s.push('\n');
        for r in &self.rows {
            let _ = write!(s, "{:e}", r.param);
            for (e, rate) in r.errors.iter().zip(&r.rates) {
                let _ = write!(s, ",{e:e},");
                if let Some(rate) = rate {
                    let _ = write!(s, "{rate:.2}");
                }
            }
            s.push('\n');
        }
        s
    }

    pub fn to_text(&self) -> String {
        let head = match self.axis {
            Axis::Spatial => "h",
            Axis::Temporal => "dt",
        };
        let mut s = format!("{} {} convergence\n", self.scheme.name(), head_name(self.axis));
        let _ = write!(s, "{head:>8}");
        for i in 1..=self.num_species() {
            let _ = write!(s, "  {:>11}  {:>5}", format!("||e{i}||"), "rate");
        }
        s.push('\n');
        for r in &self.rows {
            let _ = write!(s, "{:>8}", r.label);
            for (e, rate) in r.errors.iter().zip(&r.rates) {
                let rate = rate.map_or(String::new(), |v| format!("{v:.2}"));
                let _ = write!(s, "  {e:>11.4e}  {rate:>5}");
            }
            s.push('\n');
        }
        s
    }
}

fn head_name(axis: Axis) -> &'static str {
    match axis {
        Axis::Spatial => "spatial",
        Axis::Temporal => "temporal",
    }
}

/// Runs one simulation and returns `||e_i||_{2,1}` for every species
/// without keeping the field history.
pub fn run_errors(case: &MmsCase) -> Result<Vec<f64>, SchemeError> {
    let spec = case.spec();
    let mut acc = ErrorAccumulator::new(case.num_species(), spec.step_size());
    let opts = RunOptions {
        stability_constant: None,
        ..RunOptions::default()
    };
    run_with(spec, &opts, |state, _| {
        acc.add_level(state.n, &state.current, &case.exact, state.t)
    })
    .map_err(|f| f.error)?;
    Ok(acc.finish())
}

/// Runs `case` once per level. For the spatial axis each level is a mesh
/// subdivision count `n` (so `h = 1/n`) and `fixed` the step divisor
/// (`Δt = T/fixed`); for the temporal axis the roles swap. Levels must be
/// successive halvings.
pub fn convergence_study(case: &MmsCase, axis: Axis, levels: &[usize], fixed: usize) -> Result<RateTable, SchemeError> {
    if levels.is_empty() || fixed == 0 || levels.contains(&0) {
        return Err(SchemeError::Usage(
            "levels and the fixed parameter must be positive".into(),
        ));
    }
    if levels.windows(2).any(|w| w[1] != 2 * w[0]) {
        return Err(SchemeError::Usage(format!(
            "levels {levels:?} are not successive halvings"
        )));
    }
    let spec = case.spec();
    let t_end = spec.t_end;
    let results: Vec<Result<(f64, String, Vec<f64>), SchemeError>> = levels
        .par_iter()
        .map(|&k| {
            let (n, div) = match axis {
                Axis::Spatial => (k, fixed),
                Axis::Temporal => (fixed, k),
            };
            let c = case.with_discretisation(n, t_end / div as f64, t_end, spec.scheme);
            let errors = run_errors(&c)?;
            Ok(match axis {
                Axis::Spatial => (1.0 / k as f64, format!("1/{k}"), errors),
                Axis::Temporal => (t_end / k as f64, format!("T/{k}"), errors),
            })
        })
        .collect();
    let entries = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(RateTable::from_errors(axis, spec.scheme, entries))
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;
    use std::sync::Arc;

    use super::*;
    use crate::fem::{interpolate, FEField, FunctionSpace};
    use crate::mesh::Mesh;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn single(r: &str, k: &str, d: f64, mu: f64) -> SystemSpec {
        SystemSpec {
            species: vec![SpeciesParams {
                d,
                mu,
                r: parse(r).unwrap(),
                f: Expr::num(0.0),
                u0: Expr::num(0.0),
            }],
            capacity: parse(k).unwrap(),
            bc: BoundaryCondition::NoFlux,
            domain: Rect::UNIT,
            t_end: 1.0,
            dt: 0.1,
            scheme: Scheme::Dbe,
            nx: 2,
            ny: 2,
            degree: Degree::P2,
        }
    }

    /// Fourth-order central differences.
    fn d1(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
        (-f(x + 2.0 * h) + 8.0 * f(x + h) - 8.0 * f(x - h) + f(x - 2.0 * h)) / (12.0 * h)
    }

    fn d2(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
        (-f(x + 2.0 * h) + 16.0 * f(x + h) - 30.0 * f(x) + 16.0 * f(x - h) - f(x - 2.0 * h)) / (12.0 * h * h)
    }

    fn fd_residual(case: &MmsCase, i: usize, t: f64, x: f64, y: f64) -> f64 {
        let spec = case.spec();
        let u = |j: usize, t: f64, x: f64, y: f64| case.exact(j).value.eval(t, x, y).unwrap();
        let h = 2e-3;
        let ut = d1(|s| u(i, s, x, y), t, h);
        let lap = d2(|s| u(i, t, s, y), x, h) + d2(|s| u(i, t, x, s), y, h);
        let sp = &spec.species[i];
        let total: f64 = (0..case.num_species()).map(|j| u(j, t, x, y)).sum();
        let k = spec.capacity.eval(t, x, y).unwrap();
        let r = sp.r.eval(t, x, y).unwrap();
        let f = mms_forcing(case, i).eval(t, x, y).unwrap();
        ut - sp.d * lap - r * u(i, t, x, y) * (1.0 - sp.mu - total / k) - f
    }

    #[test]
    fn forcing_of_constant_solution() {
        let case = MmsCase::new(single("1.7", "3", 1.0, 0.2), vec![Expr::num(0.9)]).unwrap();
        let f = mms_forcing(&case, 0).eval(0.3, 0.1, 0.2).unwrap();
        let expected = -1.7 * 0.9 * (1.0 - 0.2 - 0.9 / 3.0);
        assert!((f - expected).abs() < 1e-14);
    }

    #[test]
    fn heat_eigenfunction_needs_no_forcing() {
        let u = parse("exp(-2*pi^2*t)*sin(pi*x)*sin(pi*y)").unwrap();
        let case = MmsCase::new(single("0", "1", 1.0, 0.0), vec![u]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let (t, x, y) = (rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>());
            assert!(mms_forcing(&case, 0).eval(t, x, y).unwrap().abs() <= 1e-10);
        }
    }

    #[test]
    fn benchmark_forcing_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in [2, 3] {
            let case = benchmark_case(n, Scheme::Dbe).unwrap();
            for _ in 0..200 {
                let (t, x, y) = (rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>());
                for i in 0..n {
                    let res = fd_residual(&case, i, t, x, y);
                    assert!(res.abs() <= 1e-8, "species {i} residual {res} at ({t},{x},{y})");
                }
            }
        }
        let case = benchmark_case(2, Scheme::Dbe).unwrap();
        assert!(fd_residual(&case, 0, 0.0, 0.0, 0.0).abs() <= 1e-6);
    }

    #[test]
    fn case_sets_boundary_and_initial_data() {
        let case = benchmark_case(2, Scheme::Dbdf2).unwrap();
        assert!(matches!(&case.spec().bc, BoundaryCondition::Dirichlet(g) if g.len() == 2));
        assert_eq!(case.spec().species[1].u0, parse("(2.0+cos(t))*(1.1+cos(x))").unwrap());
        assert!(MmsCase::new(single("1", "1", 1.0, 0.0), vec![]).is_err());
        assert!(benchmark_case(4, Scheme::Dbe).is_err());
    }

    fn traj_with(levels: Vec<Vec<FEField>>, dt: f64) -> Trajectory {
        let n = levels.len();
        Trajectory {
            times: (0..n).map(|k| k as f64 * dt).collect(),
            averages: vec![vec![0.0]; n],
            snapshots: Vec::new(),
            levels: Some(levels),
            stability: None,
        }
    }

    #[test]
    fn error_21_examples() {
        let space = FunctionSpace::new(Arc::new(Mesh::unit_square(16).unwrap()), Degree::P2).unwrap();
        let g = parse("sin(pi*x)*sin(pi*y)").unwrap();
        let case = MmsCase::new(single("0", "1", 1.0, 0.0), vec![g.clone()]).unwrap();
        let zero = FEField::zeros(Arc::clone(&space), 0.0);
        let e = error_21(&traj_with(vec![vec![zero.clone()], vec![zero.clone()]], 1.0), &case, 0).unwrap();
        assert!((e - (0.25 + PI * PI / 2.0).sqrt()).abs() < 1e-9);

        // Constant per-level error e over T gives e sqrt(T).
        let lv = vec![vec![zero.clone()]; 5];
        let e4 = error_21(&traj_with(lv, 0.25), &case, 0).unwrap();
        assert!((e4 - (0.25 + PI * PI / 2.0).sqrt()).abs() < 1e-9);

        let poly = parse("1 + x*y - y^2").unwrap();
        let exact_case = MmsCase::new(single("0", "1", 1.0, 0.0), vec![poly.clone()]).unwrap();
        let u = interpolate(&space, &poly, 0.0).unwrap();
        let e0 = error_21(&traj_with(vec![vec![u.clone()]; 3], 0.5), &exact_case, 0).unwrap();
        assert!(e0 <= 1e-11);

        let mut no_levels = traj_with(vec![vec![u]], 0.5);
        no_levels.levels = None;
        assert!(matches!(error_21(&no_levels, &case, 0), Err(SchemeError::Usage(_))));
    }

    #[test]
    fn streaming_error_equals_stored_levels() {
        let case = benchmark_case(2, Scheme::Dbdf2)
            .unwrap()
            .with_discretisation(4, 0.1, 0.4, Scheme::Dbdf2);
        let opts = RunOptions {
            keep_levels: true,
            stability_constant: None,
            ..RunOptions::default()
        };
        let traj = run_with(case.spec(), &opts, |_, _| Ok(())).unwrap();
        let streamed = run_errors(&case).unwrap();
        for (i, s) in streamed.iter().enumerate() {
            let stored = error_21(&traj, &case, i).unwrap();
            assert!((s - stored).abs() <= 1e-15 * stored.max(1.0));
        }
    }

    #[test]
    fn time_independent_solution_error_is_spatial_only() {
        let u = parse("2+sin(y)+0.5*cos(2*x)").unwrap();
        let base = single("1+x", "4", 1.0, 0.0);
        let case = MmsCase::new(base, vec![u]).unwrap();
        let a = run_errors(&case.with_discretisation(4, 0.1, 1.0, Scheme::Dbe)).unwrap()[0];
        let b = run_errors(&case.with_discretisation(4, 0.05, 1.0, Scheme::Dbe)).unwrap()[0];
        assert!((a - b).abs() <= 0.01 * b, "{a} vs {b}");
    }

    #[test]
    fn single_level_table() {
        let case = benchmark_case(2, Scheme::Dbe)
            .unwrap()
            .with_discretisation(4, 1e-4 / 2.0, 1e-4, Scheme::Dbe);
        let t = convergence_study(&case, Axis::Spatial, &[4], 2).unwrap();
        assert_eq!(t.rows.len(), 1);
        assert!(t.rows[0].rates.iter().all(Option::is_none));
        assert!(t.rates(0).is_empty());
        let csv = t.to_csv();
        assert!(csv.starts_with("level_param,err_1,rate_1,err_2,rate_2\n"));
        assert!(csv.lines().nth(1).unwrap().ends_with(','));
    }

    #[test]
    fn rejects_non_halving_levels() {
        let case = benchmark_case(1, Scheme::Dbe).unwrap();
        assert!(convergence_study(&case, Axis::Spatial, &[4, 6], 2).is_err());
        assert!(convergence_study(&case, Axis::Temporal, &[], 2).is_err());
    }

    #[test]
    fn coarse_spatial_rates_are_second_order() {
        let case = benchmark_case(2, Scheme::Dbe)
            .unwrap()
            .with_discretisation(4, 1e-4 / 8.0, 1e-4, Scheme::Dbe);
        let t = convergence_study(&case, Axis::Spatial, &[4, 8, 16], 8).unwrap();
        for i in 0..2 {
            for r in t.rates(i) {
                assert!((r - 2.0).abs() < 0.1, "{r}");
            }
        }
        let text = t.to_text();
        assert!(text.contains("1/16") && text.contains("rate"));
    }

    #[test]
    fn rate_table_arithmetic() {
        let t = RateTable::from_errors(
            Axis::Temporal,
            Scheme::Dbe,
            vec![
                (0.5, "T/2".into(), vec![4.0, 1.0]),
                (0.25, "T/4".into(), vec![1.0, 0.5]),
            ],
        );
        assert_eq!(t.rates(0), vec![2.0]);
        assert_eq!(t.rates(1), vec![1.0]);
        assert_eq!(t.errors(0), vec![4.0, 1.0]);
        assert!(t.to_csv().ends_with("5e-1,4e0,,1e0,\n2.5e-1,1e0,2.00,5e-1,1.00\n"));
    }

    #[test]
    fn axis_parse() {
        assert_eq!("spatial".parse::<Axis>().unwrap(), Axis::Spatial);
        assert!("both".parse::<Axis>().is_err());
    }
}
