//! Structured triangulations of axis-aligned rectangles.

use std::collections::HashMap;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MeshError {
    #[error("invalid rectangle bounds: x in [{x0}, {x1}], y in [{y0}, {y1}]")]
    Bounds { x0: f64, x1: f64, y0: f64, y1: f64 },
    #[error("subdivision counts must be at least 1 (got nx={nx}, ny={ny})")]
    Counts { nx: usize, ny: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub const UNIT: Rect = Rect {
        x0: 0.0,
        x1: 1.0,
        y0: 0.0,
        y1: 1.0,
    };

    pub fn area(&self) -> f64 {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }

    pub fn contains(&self, x: f64, y: f64, tol: f64) -> bool {
        x >= self.x0 - tol && x <= self.x1 + tol && y >= self.y0 - tol && y <= self.y1 + tol
    }
}

/// A uniform triangulation: every grid cell is split along the diagonal from
/// its lower-left to its upper-right corner.
#[derive(Debug, Clone)]
pub struct Mesh {
    vertices: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    on_boundary: Vec<bool>,
    bounds: Rect,
    nx: usize,
    ny: usize,
}

/// Builds the structured mesh of `[x0,x1] x [y0,y1]` with `nx` by `ny` cells.
pub fn build_rect_mesh(x0: f64, x1: f64, y0: f64, y1: f64, nx: usize, ny: usize) -> Result<Mesh, MeshError> {
    let finite = [x0, x1, y0, y1].iter().all(|v| v.is_finite());
    if !finite || x1 <= x0 || y1 <= y0 {
        return Err(MeshError::Bounds { x0, x1, y0, y1 });
    }
    if nx == 0 || ny == 0 {
        return Err(MeshError::Counts { nx, ny });
    }
    let bounds = Rect { x0, x1, y0, y1 };
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    let mut on_boundary = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        // Endpoints are assigned exactly so boundary coordinates compare equal
        // to the rectangle bounds.
        let y = if j == ny {
            y1
        } else {
            y0 + (y1 - y0) * j as f64 / ny as f64
        };
        for i in 0..=nx {
            let x = if i == nx {
                x1
            } else {
                x0 + (x1 - x0) * i as f64 / nx as f64
            };
            vertices.push([x, y]);
            on_boundary.push(i == 0 || i == nx || j == 0 || j == ny);
        }
    }
    let idx = |i: usize, j: usize| j * (nx + 1) + i;
    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let ll = idx(i, j);
            let lr = idx(i + 1, j);
            let ul = idx(i, j + 1);
            let ur = idx(i + 1, j + 1);
            triangles.push([ll, lr, ur]);
            triangles.push([ll, ur, ul]);
        }
    }
    Ok(Mesh {
        vertices,
        triangles,
        on_boundary,
        bounds,
        nx,
        ny,
    })
}

impl Mesh {
    pub fn unit_square(n: usize) -> Result<Mesh, MeshError> {
        build_rect_mesh(0.0, 1.0, 0.0, 1.0, n, n)
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn bounds(&self) -> Rect {
        self.bounds
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        self.on_boundary[v]
    }

    /// Indices of vertices lying on the rectangle boundary, ascending.
    pub fn boundary_vertices(&self) -> Vec<usize> {
        (0..self.vertices.len()).filter(|&v| self.on_boundary[v]).collect()
    }

    pub fn triangle_coords(&self, t: usize) -> [[f64; 2]; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    /// Signed area (positive for counter-clockwise orientation).
    pub fn signed_area(&self, t: usize) -> f64 {
        let [p, q, r] = self.triangle_coords(t);
        0.5 * ((q[0] - p[0]) * (r[1] - p[1]) - (r[0] - p[0]) * (q[1] - p[1]))
    }

    pub fn diameter(&self, t: usize) -> f64 {
        let [p, q, r] = self.triangle_coords(t);
        let d = |a: [f64; 2], b: [f64; 2]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
        d(p, q).max(d(q, r)).max(d(r, p))
    }

    /// Maximum triangle diameter.
    pub fn h(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.diameter(t)).fold(0.0, f64::max)
    }

    /// Unique edges as sorted vertex pairs, numbered in first-visit order of
    /// the triangle loop, together with the per-triangle edge indices for the
    /// local edges (0,1), (1,2), (2,0).
    pub fn edges(&self) -> (Vec<[usize; 2]>, Vec<[usize; 3]>) {
        let mut lookup: HashMap<[usize; 2], usize> = HashMap::with_capacity(3 * self.triangles.len());
        let mut edges = Vec::new();
        let mut tri_edges = Vec::with_capacity(self.triangles.len());
        for tri in &self.triangles {
            let mut local = [0usize; 3];
            for (k, (a, b)) in [(0, 1), (1, 2), (2, 0)].into_iter().enumerate() {
                let (u, v) = (tri[a], tri[b]);
                let key = if u < v { [u, v] } else { [v, u] };
                let id = *lookup.entry(key).or_insert_with(|| {
                    edges.push(key);
                    edges.len() - 1
                });
                local[k] = id;
            }
            tri_edges.push(local);
        }
        (edges, tri_edges)
    }

    /// Locates the triangle containing `(x, y)` and its reference
    /// coordinates `(xi, eta)`. Uses the structured layout, so the lookup is
    /// constant time.
    pub fn locate(&self, x: f64, y: f64) -> Option<(usize, [f64; 2])> {
        let tol = 1e-12 * (self.bounds.x1 - self.bounds.x0).max(self.bounds.y1 - self.bounds.y0);
        if !self.bounds.contains(x, y, tol) {
            return None;
        }
        let fx = (x - self.bounds.x0) / (self.bounds.x1 - self.bounds.x0) * self.nx as f64;
        let fy = (y - self.bounds.y0) / (self.bounds.y1 - self.bounds.y0) * self.ny as f64;
        let i = (fx.floor().max(0.0) as usize).min(self.nx - 1);
        let j = (fy.floor().max(0.0) as usize).min(self.ny - 1);
        let cell = j * self.nx + i;
        for t in [2 * cell, 2 * cell + 1] {
            let [p, q, r] = self.triangle_coords(t);
            let det = (q[0] - p[0]) * (r[1] - p[1]) - (r[0] - p[0]) * (q[1] - p[1]);
            let dx = x - p[0];
            let dy = y - p[1];
            let xi = ((r[1] - p[1]) * dx - (r[0] - p[0]) * dy) / det;
            let eta = (-(q[1] - p[1]) * dx + (q[0] - p[0]) * dy) / det;
            let eps = 1e-10;
            if xi >= -eps && eta >= -eps && xi + eta <= 1.0 + eps {
                return Some((t, [xi.clamp(0.0, 1.0), eta.clamp(0.0, 1.0)]));
            }
        }
        None
    }
}
