use std::sync::Arc;

use super::basis::eval_into;
use super::quadrature::QuadRule;
use super::space::{ElementMap, FEField, FunctionSpace};
use super::{Degree, FemError, ScalarField};
use crate::sparse::{CsrMatrix, LuFactorization};

/// Weight of a mass-type bilinear form `∫ w φ_a φ_b`.
pub enum MassWeight<'a> {
    /// `w ≡ 1`.
    Unit,
    /// `w = c(t, x, y)`.
    Function(&'a dyn ScalarField),
    /// `w = c(t, x, y) · Σ_j u_j(x, y)`.
    FieldWeighted {
        coefficient: &'a dyn ScalarField,
        fields: &'a [&'a FEField],
    },
}

/// Element mass matrix `∫_T w φ_a φ_b` on an arbitrary triangle.
pub fn element_mass(
    k: Degree,
    coords: [[f64; 2]; 3],
    rule: &QuadRule,
    weight: impl Fn(f64, f64) -> f64,
) -> Vec<Vec<f64>> {
    let nb = k.local_dofs();
    let map = ElementMap::new(coords);
    let mut m = vec![vec![0.0; nb]; nb];
    let mut v = [0.0; 6];
    let mut g = [[0.0; 2]; 6];
    for (p, w) in rule.points().iter().zip(rule.weights()) {
        eval_into(k, *p, &mut v, &mut g);
        let [x, y] = map.map(*p);
        let c = w * map.det.abs() * weight(x, y);
        for a in 0..nb {
            for b in 0..nb {
                m[a][b] += c * v[a] * v[b];
            }
        }
    }
    m
}

/// Element stiffness matrix `∫_T ∇φ_a · ∇φ_b` on an arbitrary triangle.
pub fn element_stiffness(k: Degree, coords: [[f64; 2]; 3], rule: &QuadRule) -> Vec<Vec<f64>> {
    let nb = k.local_dofs();
    let map = ElementMap::new(coords);
    let mut s = vec![vec![0.0; nb]; nb];
    let mut v = [0.0; 6];
    let mut g = [[0.0; 2]; 6];
    for (p, w) in rule.points().iter().zip(rule.weights()) {
        eval_into(k, *p, &mut v, &mut g);
        let jw = w * map.det.abs();
        let pg: Vec<[f64; 2]> = g[..nb].iter().map(|gr| map.grad(*gr)).collect();
        for a in 0..nb {
            for b in 0..nb {
                s[a][b] += jw * (pg[a][0] * pg[b][0] + pg[a][1] * pg[b][1]);
            }
        }
    }
    s
}

fn sample_weight(space: &FunctionSpace, weight: &MassWeight<'_>, t: f64) -> Result<Vec<f64>, FemError> {
    let cache = space.assembly_quadrature();
    let pts = cache.points();
    match weight {
        MassWeight::Unit => Ok(vec![1.0; pts.len()]),
        MassWeight::Function(c) => pts
            .iter()
            .map(|p| c.value(t, p[0], p[1]).map_err(FemError::from))
            .collect(),
        MassWeight::FieldWeighted { coefficient, fields } => {
            let mut sum = vec![0.0; pts.len()];
            for f in fields.iter() {
                if !std::ptr::eq(f.space().as_ref(), space) {
                    return Err(FemError::MismatchedSpace);
                }
                f.accumulate_values_at(cache, 1.0, &mut sum);
            }
            for (s, p) in sum.iter_mut().zip(pts) {
                *s *= coefficient.value(t, p[0], p[1])?;
            }
            Ok(sum)
        }
    }
}

/// Assembles `M[w]_{ab} = Σ_T ∫_T w φ_a φ_b`.
pub fn assemble_mass(space: &FunctionSpace, weight: &MassWeight<'_>, t: f64) -> Result<CsrMatrix, FemError> {
    let w = sample_weight(space, weight, t)?;
    assemble_mass_from_qp(space, &w)
}

/// Weighted mass matrix from weights given at the assembly quadrature
/// points (element-major, see [`FunctionSpace::assembly_quadrature`]).
pub fn assemble_mass_from_qp(space: &FunctionSpace, w: &[f64]) -> Result<CsrMatrix, FemError> {
    let mut m = space.pattern().clone();
    assemble_mass_from_qp_into(space, w, &mut m)?;
    Ok(m)
}

/// Like [`assemble_mass_from_qp`] but overwrites a matrix that already has
/// the space's pattern.
pub fn assemble_mass_from_qp_into(space: &FunctionSpace, w: &[f64], out: &mut CsrMatrix) -> Result<(), FemError> {
    let cache = space.assembly_quadrature();
    let nq = cache.points_per_element();
    let expected = space.num_cells() * nq;
    if w.len() != expected {
        return Err(FemError::Length { expected, got: w.len() });
    }
    if !out.same_pattern(space.pattern()) {
        return Err(FemError::MismatchedSpace);
    }
    let nb = space.local_dofs();
    let vals = out.values_mut();
    vals.iter_mut().for_each(|v| *v = 0.0);
    let jxw = cache.jxw();
    let phi = cache.values();
    let mut local = [0.0; 36];
    for e in 0..space.num_cells() {
        local[..nb * nb].iter_mut().for_each(|v| *v = 0.0);
        for q in 0..nq {
            let c = jxw[e * nq + q] * w[e * nq + q];
            let pq = &phi[q];
            for a in 0..nb {
                let ca = c * pq[a];
                for b in 0..nb {
                    local[a * nb + b] += ca * pq[b];
                }
            }
        }
        for (pos, v) in space.scatter(e).iter().zip(&local[..nb * nb]) {
            vals[*pos] += v;
        }
    }
    Ok(())
}

/// Assembles `d · Σ_T ∫_T ∇φ_a · ∇φ_b`.
pub fn assemble_stiffness(space: &FunctionSpace, d: f64) -> Result<CsrMatrix, FemError> {
    if !(d > 0.0) || !d.is_finite() {
        return Err(FemError::NonPositiveDiffusion(d));
    }
    let cache = space.assembly_quadrature();
    let nq = cache.points_per_element();
    let nb = space.local_dofs();
    let mut out = space.pattern().clone();
    let vals = out.values_mut();
    let jxw = cache.jxw();
    let mut local = [0.0; 36];
    let mut pg = [[0.0; 2]; 6];
    for e in 0..space.num_cells() {
        let map = space.map(e);
        local[..nb * nb].iter_mut().for_each(|v| *v = 0.0);
        for q in 0..nq {
            let jw = d * jxw[e * nq + q];
            for (a, g) in pg[..nb].iter_mut().enumerate() {
                *g = map.grad(cache.ref_grads()[q][a]);
            }
            for a in 0..nb {
                for b in 0..nb {
                    local[a * nb + b] += jw * (pg[a][0] * pg[b][0] + pg[a][1] * pg[b][1]);
                }
            }
        }
        for (pos, v) in space.scatter(e).iter().zip(&local[..nb * nb]) {
            vals[*pos] += v;
        }
    }
    Ok(out)
}

/// Load vector `b_a = Σ_T ∫_T f φ_a`.
pub fn assemble_load(space: &FunctionSpace, f: &dyn ScalarField, t: f64) -> Result<Vec<f64>, FemError> {
    let cache = space.assembly_quadrature();
    let fv = cache
        .points()
        .iter()
        .map(|p| f.value(t, p[0], p[1]))
        .collect::<Result<Vec<_>, _>>()?;
    assemble_load_from_qp(space, &fv)
}

/// Load vector from source values at the assembly quadrature points.
pub fn assemble_load_from_qp(space: &FunctionSpace, fv: &[f64]) -> Result<Vec<f64>, FemError> {
    let cache = space.assembly_quadrature();
    let nq = cache.points_per_element();
    let expected = space.num_cells() * nq;
    if fv.len() != expected {
        return Err(FemError::Length {
            expected,
            got: fv.len(),
        });
    }
    let mut b = vec![0.0; space.num_dofs()];
    let jxw = cache.jxw();
    for e in 0..space.num_cells() {
        let dofs = space.cell_dofs(e);
        for q in 0..nq {
            let c = jxw[e * nq + q] * fv[e * nq + q];
            let phi = &cache.values()[q];
            for (a, &g) in dofs.iter().enumerate() {
                b[g] += c * phi[a];
            }
        }
    }
    Ok(b)
}

/// Nodal interpolant: coefficient `a` is `g(t, x_a, y_a)`.
pub fn interpolate(space: &Arc<FunctionSpace>, g: &dyn ScalarField, t: f64) -> Result<FEField, FemError> {
    let coeffs = space
        .dof_coords()
        .iter()
        .map(|p| g.value(t, p[0], p[1]))
        .collect::<Result<Vec<_>, _>>()?;
    FEField::new(Arc::clone(space), coeffs, t)
}

/// L2 projection: solves `M c = (g, φ)`.
pub fn l2_project(space: &Arc<FunctionSpace>, g: &dyn ScalarField, t: f64) -> Result<FEField, FemError> {
    let m = assemble_mass(space, &MassWeight::Unit, t)?;
    let b = assemble_load(space, g, t)?;
    let c = LuFactorization::new(&m, None)?.solve(&b)?;
    FEField::new(Arc::clone(space), c, t)
}

/// Replaces each boundary row by an identity row and sets the right-hand
/// side to `g` at the DOF coordinate. Columns are left untouched.
pub fn apply_dirichlet(
    a: &mut CsrMatrix,
    b: &mut [f64],
    space: &FunctionSpace,
    g: &dyn ScalarField,
    t: f64,
) -> Result<(), FemError> {
    let mut values = Vec::new();
    for dof in space.boundary_dofs() {
        let [x, y] = space.dof_coords()[dof];
        values.push((dof, g.value(t, x, y)?));
    }
    apply_dirichlet_values(a, b, &values)
}

/// Row replacement with explicitly given `(dof, value)` pairs.
pub fn apply_dirichlet_values(a: &mut CsrMatrix, b: &mut [f64], values: &[(usize, f64)]) -> Result<(), FemError> {
    if b.len() != a.n() {
        return Err(FemError::Length {
            expected: a.n(),
            got: b.len(),
        });
    }
    for &(dof, v) in values {
        let start = a.offsets()[dof];
        let end = a.offsets()[dof + 1];
        let cols: Vec<usize> = a.col_indices()[start..end].to_vec();
        let vals = a.values_mut();
        let mut has_diag = false;
        for (p, c) in (start..end).zip(cols) {
            if c == dof {
                vals[p] = 1.0;
                has_diag = true;
            } else {
                vals[p] = 0.0;
            }
        }
        if !has_diag {
            return Err(FemError::MismatchedSpace);
        }
        b[dof] = v;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;
    use crate::fem::quad_rule;
    use crate::mesh::Mesh;
    use crate::sparse::lu_solve;

    const REF: [[f64; 2]; 3] = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];

    fn space(n: usize, k: Degree) -> Arc<FunctionSpace> {
        FunctionSpace::new(Arc::new(Mesh::unit_square(n).unwrap()), k).unwrap()
    }

    #[test]
    fn p1_reference_mass() {
        let m = element_mass(Degree::P1, REF, &quad_rule(5).unwrap(), |_, _| 1.0);
        let area = 0.5;
        let expected = [[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]];
        for a in 0..3 {
            for b in 0..3 {
                assert!((m[a][b] - area / 12.0 * expected[a][b]).abs() <= 1e-13);
            }
        }
    }

    #[test]
    fn p1_reference_stiffness() {
        let s = element_stiffness(Degree::P1, REF, &quad_rule(5).unwrap());
        let expected = [[2.0, -1.0, -1.0], [-1.0, 1.0, 0.0], [-1.0, 0.0, 1.0]];
        for a in 0..3 {
            for b in 0..3 {
                assert!((s[a][b] - 0.5 * expected[a][b]).abs() <= 1e-13);
            }
        }
    }

    #[test]
    fn mass_sums_to_area() {
        for k in [Degree::P1, Degree::P2] {
            let s = space(5, k);
            let m = assemble_mass(&s, &MassWeight::Unit, 0.0).unwrap();
            let ones = vec![1.0; s.num_dofs()];
            let total: f64 = m.matvec(&ones).iter().sum();
            assert!((total - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn constant_weight_scales_mass() {
        let s = space(4, Degree::P2);
        let m1 = assemble_mass(&s, &MassWeight::Unit, 0.0).unwrap();
        let c = |_: f64, _: f64, _: f64| 2.5;
        let mc = assemble_mass(&s, &MassWeight::Function(&c), 0.0).unwrap();
        for (a, b) in m1.values().iter().zip(mc.values()) {
            assert!((2.5 * a - b).abs() <= 1e-13);
        }
    }

    #[test]
    fn field_weighted_mass_uses_field_sum() {
        let s = space(3, Degree::P2);
        let u1 = FEField::constant(Arc::clone(&s), 1.5, 0.0);
        let u2 = FEField::constant(Arc::clone(&s), 0.5, 0.0);
        let r = |_: f64, _: f64, _: f64| 3.0;
        let fields = [&u1, &u2];
        let m = assemble_mass(
            &s,
            &MassWeight::FieldWeighted {
                coefficient: &r,
                fields: &fields,
            },
            0.0,
        )
        .unwrap();
        let m1 = assemble_mass(&s, &MassWeight::Unit, 0.0).unwrap();
        for (a, b) in m1.values().iter().zip(m.values()) {
            assert!((6.0 * a - b).abs() <= 1e-13);
        }
        let other = space(3, Degree::P2);
        let stranger = FEField::constant(other, 1.0, 0.0);
        let bad = [&stranger];
        let res = assemble_mass(
            &s,
            &MassWeight::FieldWeighted {
                coefficient: &r,
                fields: &bad,
            },
            0.0,
        );
        assert!(matches!(res, Err(FemError::MismatchedSpace)));
    }

    #[test]
    fn stiffness_properties() {
        for k in [Degree::P1, Degree::P2] {
            let s = space(4, k);
            let a1 = assemble_stiffness(&s, 1.0).unwrap();
            let ones = vec![1.0; s.num_dofs()];
            assert!(a1.matvec(&ones).iter().all(|v| v.abs() < 1e-12));
            let a2 = assemble_stiffness(&s, 2.0).unwrap();
            for (x, y) in a1.values().iter().zip(a2.values()) {
                assert!((2.0 * x - y).abs() <= 1e-13);
            }
            assert!(a1.max_asymmetry() <= 1e-13);
        }
        let s = space(2, Degree::P1);
        assert!(matches!(
            assemble_stiffness(&s, 0.0),
            Err(FemError::NonPositiveDiffusion(_))
        ));
        assert!(matches!(
            assemble_stiffness(&s, -1.0),
            Err(FemError::NonPositiveDiffusion(_))
        ));
    }

    #[test]
    fn load_vector_integrals() {
        let s = space(4, Degree::P2);
        let zero = assemble_load(&s, &|_: f64, _: f64, _: f64| 0.0, 0.0).unwrap();
        assert!(zero.iter().all(|v| *v == 0.0));
        let one: f64 = assemble_load(&s, &|_: f64, _: f64, _: f64| 1.0, 0.0)
            .unwrap()
            .iter()
            .sum();
        assert!((one - 1.0).abs() < 1e-13);
        let fx: f64 = assemble_load(&s, &parse("x").unwrap(), 0.0).unwrap().iter().sum();
        assert!((fx - 0.5).abs() < 1e-13);
    }

    #[test]
    fn interpolation_reproduces_quadratics() {
        let s = space(3, Degree::P2);
        let g = parse("1+2*x-3*y+x*y+0.5*x^2-y^2").unwrap();
        let u = interpolate(&s, &g, 0.0).unwrap();
        for &(x, y) in &[(0.1, 0.2), (0.77, 0.31), (0.5, 0.99), (0.33, 0.66)] {
            assert!((u.eval(x, y).unwrap() - g.eval(0.0, x, y).unwrap()).abs() < 1e-12);
        }
        let c = interpolate(&s, &|_: f64, _: f64, _: f64| 1.6, 0.0).unwrap();
        assert!(c.coeffs().iter().all(|v| *v == 1.6));
        assert!(matches!(u.eval(1.2, 0.5), Err(FemError::OutsideDomain { .. })));
    }

    #[test]
    fn projection_of_constant_and_of_fe_function() {
        let s = space(4, Degree::P2);
        let p = l2_project(&s, &|_: f64, _: f64, _: f64| 2.0, 0.0).unwrap();
        assert!(p.coeffs().iter().all(|v| (v - 2.0).abs() < 1e-10));
        let g = parse("x^2*y + sin(x)").unwrap();
        let u = interpolate(&s, &g, 0.0).unwrap();
        let uf = u.clone();
        let fe_fn = move |_: f64, x: f64, y: f64| uf.eval(x, y).unwrap();
        let pu = l2_project(&s, &fe_fn, 0.0).unwrap();
        for (a, b) in u.coeffs().iter().zip(pu.coeffs()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn dirichlet_rows_are_identity() {
        let s = space(3, Degree::P2);
        let mut a = assemble_stiffness(&s, 1.0).unwrap();
        let mut b = vec![0.0; s.num_dofs()];
        let g = parse("x").unwrap();
        apply_dirichlet(&mut a, &mut b, &s, &g, 0.0).unwrap();
        // -Δu = 0 with u = x on the boundary has the exact solution x.
        let u = lu_solve(&a, &b).unwrap();
        for (c, p) in u.iter().zip(s.dof_coords()) {
            assert!((c - p[0]).abs() < 1e-10);
        }
        for dof in s.boundary_dofs() {
            let (cols, vals) = a.row(dof);
            for (c, v) in cols.iter().zip(vals) {
                assert_eq!(*v, if *c == dof { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn zero_dirichlet_gives_zero_boundary_values() {
        let s = space(4, Degree::P1);
        let mut a = assemble_stiffness(&s, 1.0).unwrap();
        let mut b = assemble_load(&s, &|_: f64, _: f64, _: f64| 1.0, 0.0).unwrap();
        apply_dirichlet(&mut a, &mut b, &s, &|_: f64, _: f64, _: f64| 0.0, 0.0).unwrap();
        let u = lu_solve(&a, &b).unwrap();
        for dof in s.boundary_dofs() {
            assert_eq!(u[dof], 0.0);
        }
    }

    #[test]
    fn empty_dirichlet_set_changes_nothing() {
        let s = space(2, Degree::P1);
        let a0 = assemble_stiffness(&s, 1.0).unwrap();
        let mut a = a0.clone();
        let mut b = vec![1.0; s.num_dofs()];
        apply_dirichlet_values(&mut a, &mut b, &[]).unwrap();
        assert_eq!(a, a0);
        assert!(b.iter().all(|v| *v == 1.0));
    }
}
