use super::space::FEField;
use super::FemError;
use crate::expr::{Expr, Var};

/// A closed-form solution together with its spatial derivatives.
#[derive(Debug, Clone)]
pub struct ExactSolution {
    pub value: Expr,
    pub dx: Expr,
    pub dy: Expr,
}

impl ExactSolution {
    pub fn new(value: Expr) -> Self {
        let dx = value.differentiate(Var::X);
        let dy = value.differentiate(Var::Y);
        Self { value, dx, dy }
    }
}

/// `L2` and full `H1` norms of `u_h - u(t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorNorms {
    pub l2: f64,
    pub h1: f64,
}

/// Computes the error norms with the degree-7 rule.
pub fn error_norms(u_h: &FEField, exact: &ExactSolution, t: f64) -> Result<ErrorNorms, FemError> {
    let space = u_h.space();
    let cache = space.error_quadrature();
    let nq = cache.points_per_element();
    let pts = cache.points();
    let coeffs = u_h.coeffs();
    let mut l2 = 0.0;
    let mut semi = 0.0;
    for e in 0..space.num_cells() {
        let dofs = space.cell_dofs(e);
        let map = space.map(e);
        for q in 0..nq {
            let phi = &cache.values()[q];
            let grads = &cache.ref_grads()[q];
            let mut v = 0.0;
            let mut rg = [0.0; 2];
            for (a, &g) in dofs.iter().enumerate() {
                v += coeffs[g] * phi[a];
                rg[0] += coeffs[g] * grads[a][0];
                rg[1] += coeffs[g] * grads[a][1];
            }
            let grad = map.grad(rg);
            let [x, y] = pts[e * nq + q];
            let w = cache.jxw()[e * nq + q];
            let ev = v - exact.value.eval(t, x, y)?;
            let ex = grad[0] - exact.dx.eval(t, x, y)?;
            let ey = grad[1] - exact.dy.eval(t, x, y)?;
            l2 += w * ev * ev;
            semi += w * (ex * ex + ey * ey);
        }
    }
    Ok(ErrorNorms {
        l2: l2.sqrt(),
        h1: (l2 + semi).sqrt(),
    })
}
