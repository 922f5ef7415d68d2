//! Lagrange shape functions on the reference triangle.
//!
//! Local numbering: vertices 0, 1, 2 at (0,0), (1,0), (0,1); for P2 the
//! edge midpoints follow as 3 = (0,1), 4 = (1,2), 5 = (2,0).

use super::Degree;

/// Reference coordinates of the local nodes.
pub fn reference_nodes(k: Degree) -> &'static [[f64; 2]] {
    match k {
        Degree::P1 => &[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
        Degree::P2 => &[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.5, 0.0], [0.5, 0.5], [0.0, 0.5]],
    }
}

/// Basis values and reference gradients at `p`.
pub fn reference_basis(k: Degree, p: [f64; 2]) -> (Vec<f64>, Vec<[f64; 2]>) {
    let mut v = [0.0; 6];
    let mut g = [[0.0; 2]; 6];
    eval_into(k, p, &mut v, &mut g);
    let nb = k.local_dofs();
    (v[..nb].to_vec(), g[..nb].to_vec())
}

/// Allocation-free variant; fills the first `k.local_dofs()` slots.
pub fn eval_into(k: Degree, p: [f64; 2], v: &mut [f64; 6], g: &mut [[f64; 2]; 6]) {
    let [xi, eta] = p;
    let l0 = 1.0 - xi - eta;
    let l1 = xi;
    let l2 = eta;
    const G0: [f64; 2] = [-1.0, -1.0];
    const G1: [f64; 2] = [1.0, 0.0];
    const G2: [f64; 2] = [0.0, 1.0];
    match k {
        Degree::P1 => {
            v[0] = l0;
            v[1] = l1;
            v[2] = l2;
            g[0] = G0;
            g[1] = G1;
            g[2] = G2;
        }
        Degree::P2 => {
            v[0] = l0 * (2.0 * l0 - 1.0);
            v[1] = l1 * (2.0 * l1 - 1.0);
            v[2] = l2 * (2.0 * l2 - 1.0);
            v[3] = 4.0 * l0 * l1;
            v[4] = 4.0 * l1 * l2;
            v[5] = 4.0 * l2 * l0;
            let s = |c: f64, gr: [f64; 2]| [c * gr[0], c * gr[1]];
            g[0] = s(4.0 * l0 - 1.0, G0);
            g[1] = s(4.0 * l1 - 1.0, G1);
            g[2] = s(4.0 * l2 - 1.0, G2);
            let pair = |la: f64, ga: [f64; 2], lb: f64, gb: [f64; 2]| {
                [4.0 * (la * gb[0] + lb * ga[0]), 4.0 * (la * gb[1] + lb * ga[1])]
            };
            g[3] = pair(l0, G0, l1, G1);
            g[4] = pair(l1, G1, l2, G2);
            g[5] = pair(l2, G2, l0, G0);
        }
    }
}
