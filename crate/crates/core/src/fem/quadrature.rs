//! Symmetric quadrature rules on the reference triangle
//! `{(xi, eta) : xi, eta >= 0, xi + eta <= 1}` (area 1/2).

use super::FemError;

#[derive(Debug, Clone, PartialEq)]
pub struct QuadRule {
    degree: usize,
    points: Vec<[f64; 2]>,
    weights: Vec<f64>,
}

impl QuadRule {
    /// Highest total polynomial degree integrated exactly.
    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(f64, f64) -> f64) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(p, w)| w * f(p[0], p[1]))
            .sum()
    }
}

/// Points of an `S21` orbit `(a, a, 1-2a)` in barycentric coordinates.
fn orbit_s21(a: f64, w: f64, pts: &mut Vec<[f64; 2]>, wts: &mut Vec<f64>) {
    let b = 1.0 - 2.0 * a;
    for p in [[a, a], [a, b], [b, a]] {
        pts.push(p);
        wts.push(w);
    }
}

/// Points of an `S111` orbit: all permutations of `(a, b, 1-a-b)`.
fn orbit_s111(a: f64, b: f64, w: f64, pts: &mut Vec<[f64; 2]>, wts: &mut Vec<f64>) {
    let c = 1.0 - a - b;
    for p in [[a, b], [b, a], [a, c], [c, a], [b, c], [c, b]] {
        pts.push(p);
        wts.push(w);
    }
}

/// Returns the rule of the requested degree. Supported: 2 (3 points),
/// 5 (7 points), 7 (15 points).
pub fn quad_rule(degree: usize) -> Result<QuadRule, FemError> {
    let mut points = Vec::new();
    let mut weights = Vec::new();
    match degree {
        2 => {
            orbit_s21(1.0 / 6.0, 1.0 / 6.0, &mut points, &mut weights);
        }
        5 => {
            let s15 = 15f64.sqrt();
            points.push([1.0 / 3.0, 1.0 / 3.0]);
            weights.push(9.0 / 80.0);
            orbit_s21((6.0 - s15) / 21.0, (155.0 - s15) / 2400.0, &mut points, &mut weights);
            orbit_s21((6.0 + s15) / 21.0, (155.0 + s15) / 2400.0, &mut points, &mut weights);
        }
        7 => {
            // Fully symmetric, positive weights, all points interior.
            orbit_s21(
                0.064_344_564_719_191_56,
                0.026_076_767_547_555_727,
                &mut points,
                &mut weights,
            );
            orbit_s21(
                0.230_844_833_476_569,
                0.050_979_100_115_278_7,
                &mut points,
                &mut weights,
            );
            orbit_s21(
                0.411_386_174_306_012_3,
                0.020_685_747_468_624_35,
                &mut points,
                &mut weights,
            );
            orbit_s111(
                0.312_504_551_836_816_86,
                0.043_304_277_131_166_63,
                0.034_462_525_767_603_94,
                &mut points,
                &mut weights,
            );
        }
        other => return Err(FemError::UnsupportedQuadrature(other)),
    }
    Ok(QuadRule {
        degree,
        points,
        weights,
    })
}
