use std::sync::{Arc, OnceLock};

use super::basis::{eval_into, reference_nodes};
use super::quadrature::{quad_rule, QuadRule};
use super::{Degree, FemError, ASSEMBLY_QUAD_DEGREE, ERROR_QUAD_DEGREE};
use crate::mesh::Mesh;
use crate::sparse::{csr_from_triplets, CsrMatrix, TripletBuffer};

/// Affine map `x = origin + jac * (xi, eta)` of one triangle.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ElementMap {
    pub origin: [f64; 2],
    pub jac: [[f64; 2]; 2],
    pub det: f64,
    /// Inverse transpose of `jac`, maps reference gradients to physical ones.
    pub jinv_t: [[f64; 2]; 2],
}

impl ElementMap {
    pub fn new(coords: [[f64; 2]; 3]) -> Self {
        let [p0, p1, p2] = coords;
        let jac = [[p1[0] - p0[0], p2[0] - p0[0]], [p1[1] - p0[1], p2[1] - p0[1]]];
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        let jinv_t = [[jac[1][1] / det, -jac[1][0] / det], [-jac[0][1] / det, jac[0][0] / det]];
        Self {
            origin: p0,
            jac,
            det,
            jinv_t,
        }
    }

    pub fn map(&self, p: [f64; 2]) -> [f64; 2] {
        [
            self.origin[0] + self.jac[0][0] * p[0] + self.jac[0][1] * p[1],
            self.origin[1] + self.jac[1][0] * p[0] + self.jac[1][1] * p[1],
        ]
    }

    pub fn grad(&self, g: [f64; 2]) -> [f64; 2] {
        [
            self.jinv_t[0][0] * g[0] + self.jinv_t[0][1] * g[1],
            self.jinv_t[1][0] * g[0] + self.jinv_t[1][1] * g[1],
        ]
    }
}

/// Reference basis data at the points of one rule, plus the physical points
/// and `weight * |det J|` of every element.
#[derive(Debug, Clone)]
pub struct QuadCache {
    rule: QuadRule,
    values: Vec<[f64; 6]>,
    ref_grads: Vec<[[f64; 2]; 6]>,
    points: Vec<[f64; 2]>,
    jxw: Vec<f64>,
}

impl QuadCache {
    fn new(space_degree: Degree, maps: &[ElementMap], rule: QuadRule) -> Self {
        let mut values = Vec::with_capacity(rule.len());
        let mut ref_grads = Vec::with_capacity(rule.len());
        for &p in rule.points() {
            let mut v = [0.0; 6];
            let mut g = [[0.0; 2]; 6];
            eval_into(space_degree, p, &mut v, &mut g);
            values.push(v);
            ref_grads.push(g);
        }
        let nq = rule.len();
        let mut points = Vec::with_capacity(maps.len() * nq);
        let mut jxw = Vec::with_capacity(maps.len() * nq);
        for m in maps {
            for (p, w) in rule.points().iter().zip(rule.weights()) {
                points.push(m.map(*p));
                jxw.push(w * m.det.abs());
            }
        }
        Self {
            rule,
            values,
            ref_grads,
            points,
            jxw,
        }
    }

    pub fn rule(&self) -> &QuadRule {
        &self.rule
    }

    pub fn points_per_element(&self) -> usize {
        self.rule.len()
    }

    /// Physical coordinates of all quadrature points, element-major.
    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub(crate) fn jxw(&self) -> &[f64] {
        &self.jxw
    }

    pub(crate) fn values(&self) -> &[[f64; 6]] {
        &self.values
    }

    pub(crate) fn ref_grads(&self) -> &[[[f64; 2]; 6]] {
        &self.ref_grads
    }
}

/// A P1 or P2 Lagrange space on a mesh.
///
/// P2 degrees of freedom are numbered vertices first, then edge midpoints in
/// the mesh's edge order.
#[derive(Debug)]
pub struct FunctionSpace {
    mesh: Arc<Mesh>,
    degree: Degree,
    dof_coords: Vec<[f64; 2]>,
    cell_dofs: Vec<[usize; 6]>,
    boundary: Vec<bool>,
    maps: Vec<ElementMap>,
    pattern: CsrMatrix,
    /// Position in the pattern's value array of local entry (a, b) of each element.
    scatter: Vec<usize>,
    assembly_quad: QuadCache,
    error_quad: OnceLock<QuadCache>,
    integrals: Vec<f64>,
}

impl FunctionSpace {
    pub fn new(mesh: Arc<Mesh>, degree: Degree) -> Result<Arc<Self>, FemError> {
        let nv = mesh.num_vertices();
        let mut dof_coords: Vec<[f64; 2]> = mesh.vertices().to_vec();
        let mut boundary: Vec<bool> = (0..nv).map(|v| mesh.is_boundary_vertex(v)).collect();
        let mut cell_dofs = Vec::with_capacity(mesh.num_triangles());
        match degree {
            Degree::P1 => {
                for tri in mesh.triangles() {
                    cell_dofs.push([tri[0], tri[1], tri[2], 0, 0, 0]);
                }
            }
            Degree::P2 => {
                let (edges, tri_edges) = mesh.edges();
                let b = mesh.bounds();
                for [a, c] in &edges {
                    let pa = mesh.vertices()[*a];
                    let pc = mesh.vertices()[*c];
                    dof_coords.push([0.5 * (pa[0] + pc[0]), 0.5 * (pa[1] + pc[1])]);
                    // An edge is on the boundary when both ends share a boundary line.
                    let on = (pa[0] == b.x0 && pc[0] == b.x0)
                        || (pa[0] == b.x1 && pc[0] == b.x1)
                        || (pa[1] == b.y0 && pc[1] == b.y0)
                        || (pa[1] == b.y1 && pc[1] == b.y1);
                    boundary.push(on);
                }
                for (tri, te) in mesh.triangles().iter().zip(&tri_edges) {
                    cell_dofs.push([tri[0], tri[1], tri[2], nv + te[0], nv + te[1], nv + te[2]]);
                }
            }
        }
        let maps: Vec<ElementMap> = (0..mesh.num_triangles())
            .map(|t| ElementMap::new(mesh.triangle_coords(t)))
            .collect();

        let nb = degree.local_dofs();
        let ndofs = dof_coords.len();
        let mut trip = TripletBuffer::with_capacity(cell_dofs.len() * nb * nb);
        for dofs in &cell_dofs {
            for &a in &dofs[..nb] {
                for &b in &dofs[..nb] {
                    trip.push(a, b, 0.0);
                }
            }
        }
        let pattern = csr_from_triplets(ndofs, &trip)?;
        let mut scatter = Vec::with_capacity(cell_dofs.len() * nb * nb);
        for dofs in &cell_dofs {
            for &a in &dofs[..nb] {
                for &b in &dofs[..nb] {
                    scatter.push(pattern.position(a, b).expect("entry in pattern"));
                }
            }
        }

        let assembly_quad = QuadCache::new(degree, &maps, quad_rule(ASSEMBLY_QUAD_DEGREE)?);
        let mut integrals = vec![0.0; ndofs];
        let nq = assembly_quad.points_per_element();
        for (e, dofs) in cell_dofs.iter().enumerate() {
            for q in 0..nq {
                let jw = assembly_quad.jxw[e * nq + q];
                for (a, &ga) in dofs[..nb].iter().enumerate() {
                    integrals[ga] += jw * assembly_quad.values[q][a];
                }
            }
        }

        Ok(Arc::new(Self {
            mesh,
            degree,
            dof_coords,
            cell_dofs,
            boundary,
            maps,
            pattern,
            scatter,
            assembly_quad,
            error_quad: OnceLock::new(),
            integrals,
        }))
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn degree(&self) -> Degree {
        self.degree
    }

    pub fn num_dofs(&self) -> usize {
        self.dof_coords.len()
    }

    pub fn dof_coords(&self) -> &[[f64; 2]] {
        &self.dof_coords
    }

    pub fn is_boundary_dof(&self, a: usize) -> bool {
        self.boundary[a]
    }

    pub fn boundary_dofs(&self) -> Vec<usize> {
        (0..self.num_dofs()).filter(|&a| self.boundary[a]).collect()
    }

    pub fn local_dofs(&self) -> usize {
        self.degree.local_dofs()
    }

    /// Global indices of the local DOFs of element `e`.
    pub fn cell_dofs(&self, e: usize) -> &[usize] {
        &self.cell_dofs[e][..self.degree.local_dofs()]
    }

    pub fn num_cells(&self) -> usize {
        self.cell_dofs.len()
    }

    pub(crate) fn map(&self, e: usize) -> &ElementMap {
        &self.maps[e]
    }

    /// Zero matrix with the space's sparsity pattern.
    pub fn pattern(&self) -> &CsrMatrix {
        &self.pattern
    }

    pub(crate) fn scatter(&self, e: usize) -> &[usize] {
        let nb2 = self.local_dofs() * self.local_dofs();
        &self.scatter[e * nb2..(e + 1) * nb2]
    }

    pub fn assembly_quadrature(&self) -> &QuadCache {
        &self.assembly_quad
    }

    pub fn error_quadrature(&self) -> &QuadCache {
        self.error_quad.get_or_init(|| {
            QuadCache::new(
                self.degree,
                &self.maps,
                quad_rule(ERROR_QUAD_DEGREE).expect("degree-7 rule exists"),
            )
        })
    }

    /// `integrals[a] = ∫ φ_a`, i.e. the row sums of the mass matrix.
    pub fn basis_integrals(&self) -> &[f64] {
        &self.integrals
    }

    pub fn domain_area(&self) -> f64 {
        self.mesh.bounds().area()
    }

    /// Reference coordinates of the local nodes, mapped to element `e`.
    pub fn local_node_coords(&self, e: usize) -> Vec<[f64; 2]> {
        reference_nodes(self.degree)
            .iter()
            .map(|p| self.maps[e].map(*p))
            .collect()
    }
}

/// Coefficient vector of a finite-element function at one time level.
#[derive(Debug, Clone)]
pub struct FEField {
    space: Arc<FunctionSpace>,
    coeffs: Vec<f64>,
    time: f64,
}

impl FEField {
    pub fn new(space: Arc<FunctionSpace>, coeffs: Vec<f64>, time: f64) -> Result<Self, FemError> {
        if coeffs.len() != space.num_dofs() {
            return Err(FemError::Length {
                expected: space.num_dofs(),
                got: coeffs.len(),
            });
        }
        Ok(Self { space, coeffs, time })
    }

    pub fn zeros(space: Arc<FunctionSpace>, time: f64) -> Self {
        let n = space.num_dofs();
        Self {
            space,
            coeffs: vec![0.0; n],
            time,
        }
    }

    pub fn constant(space: Arc<FunctionSpace>, value: f64, time: f64) -> Self {
        let n = space.num_dofs();
        Self {
            space,
            coeffs: vec![value; n],
            time,
        }
    }

    pub fn space(&self) -> &Arc<FunctionSpace> {
        &self.space
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn set_time(&mut self, t: f64) {
        self.time = t;
    }

    pub fn same_space(&self, other: &FEField) -> bool {
        Arc::ptr_eq(&self.space, &other.space)
    }

    /// Value and physical gradient at `(x, y)`. Points outside the mesh are
    /// an error.
    pub fn eval_with_gradient(&self, x: f64, y: f64) -> Result<(f64, [f64; 2]), FemError> {
        let (e, p) = self.space.mesh().locate(x, y).ok_or(FemError::OutsideDomain { x, y })?;
        let mut v = [0.0; 6];
        let mut g = [[0.0; 2]; 6];
        eval_into(self.space.degree(), p, &mut v, &mut g);
        let map = self.space.map(e);
        let mut val = 0.0;
        let mut grad = [0.0; 2];
        for (a, &ga) in self.space.cell_dofs(e).iter().enumerate() {
            let c = self.coeffs[ga];
            val += c * v[a];
            let pg = map.grad(g[a]);
            grad[0] += c * pg[0];
            grad[1] += c * pg[1];
        }
        Ok((val, grad))
    }

    pub fn eval(&self, x: f64, y: f64) -> Result<f64, FemError> {
        self.eval_with_gradient(x, y).map(|(v, _)| v)
    }

    /// Values at every point of `cache`, element-major.
    pub fn values_at(&self, cache: &QuadCache) -> Vec<f64> {
        let nq = cache.points_per_element();
        let mut out = Vec::with_capacity(self.space.num_cells() * nq);
        for e in 0..self.space.num_cells() {
            let dofs = self.space.cell_dofs(e);
            for q in 0..nq {
                let phi = &cache.values()[q];
                out.push(dofs.iter().enumerate().map(|(a, &g)| self.coeffs[g] * phi[a]).sum());
            }
        }
        out
    }

    /// Adds `alpha * self` at every point of `cache` into `acc`.
    pub fn accumulate_values_at(&self, cache: &QuadCache, alpha: f64, acc: &mut [f64]) {
        let nq = cache.points_per_element();
        for e in 0..self.space.num_cells() {
            let dofs = self.space.cell_dofs(e);
            for q in 0..nq {
                let phi = &cache.values()[q];
                let v: f64 = dofs.iter().enumerate().map(|(a, &g)| self.coeffs[g] * phi[a]).sum();
                acc[e * nq + q] += alpha * v;
            }
        }
    }

    /// Exact integral of the field over the domain.
    pub fn integral(&self) -> f64 {
        self.coeffs
            .iter()
            .zip(self.space.basis_integrals())
            .map(|(c, w)| c * w)
            .sum()
    }
}
