//! P1 finite elements for `-div(A grad u) = 0` on the unit square with
//! `u = 0` on the left edge, `u = 1` on the right edge and zero flux on the
//! top and bottom edges.
//!
//! Meshes are uniform: `n x n` square cells, each split along the diagonal
//! from its lower-left to its upper-right corner. The coefficient is taken
//! constant per element, equal to its value at the element centroid.

use crate::error::{Error, Result};

/// Axis-aligned rectangle `[x0, x1] x [y0, y1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub fn area(&self) -> f64 {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }
}

type Tri = [usize; 3];

#[derive(Debug, Clone)]
pub struct Mesh {
    cells: usize,
    h: f64,
    elements: Vec<Tri>,
    /// Index of each element centroid into the centroid-coordinate grid.
    centroid_index: Vec<(usize, usize)>,
    centroid_coords: Vec<f64>,
    /// Unit-coefficient local stiffness for lower (0) and upper (1) triangles.
    templates: [[[f64; 3]; 3]; 2],
    qoi_weights: Vec<(usize, f64)>,
}

fn triangle_stiffness(p: [(f64, f64); 3]) -> [[f64; 3]; 3] {
    let det = (p[1].0 - p[0].0) * (p[2].1 - p[0].1) - (p[2].0 - p[0].0) * (p[1].1 - p[0].1);
    let area = 0.5 * det.abs();
    // grad lambda_i = perp(p_{i+2} - p_{i+1}) / det
    let mut g = [(0.0, 0.0); 3];
    for (i, gi) in g.iter_mut().enumerate() {
        let a = p[(i + 1) % 3];
        let b = p[(i + 2) % 3];
        *gi = ((a.1 - b.1) / det, (b.0 - a.0) / det);
    }
    let mut k = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            k[i][j] = area * (g[i].0 * g[j].0 + g[i].1 * g[j].1);
        }
    }
    k
}

fn barycentric(p: [(f64, f64); 3], q: (f64, f64)) -> [f64; 3] {
    let det = (p[1].0 - p[0].0) * (p[2].1 - p[0].1) - (p[2].0 - p[0].0) * (p[1].1 - p[0].1);
    let l1 = ((q.0 - p[0].0) * (p[2].1 - p[0].1) - (p[2].0 - p[0].0) * (q.1 - p[0].1)) / det;
    let l2 = ((p[1].0 - p[0].0) * (q.1 - p[0].1) - (q.0 - p[0].0) * (p[1].1 - p[0].1)) / det;
    [1.0 - l1 - l2, l1, l2]
}

/// Sutherland–Hodgman clip of a convex polygon against a rectangle.
fn clip(poly: &[(f64, f64)], r: &Rect) -> Vec<(f64, f64)> {
    let planes: [(usize, f64, bool); 4] = [(0, r.x0, true), (0, r.x1, false), (1, r.y0, true), (1, r.y1, false)];
    let mut out: Vec<(f64, f64)> = poly.to_vec();
    for &(axis, c, keep_above) in &planes {
        if out.is_empty() {
            break;
        }
        let coord = |p: &(f64, f64)| if axis == 0 { p.0 } else { p.1 };
        let inside = |p: &(f64, f64)| if keep_above { coord(p) >= c } else { coord(p) <= c };
        let input = std::mem::take(&mut out);
        for i in 0..input.len() {
            let cur = input[i];
            let prev = input[(i + input.len() - 1) % input.len()];
            let (ci, pi) = (inside(&cur), inside(&prev));
            if ci != pi {
                let t = (c - coord(&prev)) / (coord(&cur) - coord(&prev));
                out.push((prev.0 + t * (cur.0 - prev.0), prev.1 + t * (cur.1 - prev.1)));
            }
            if ci {
                out.push(cur);
            }
        }
    }
    out
}

fn polygon_area(p: &[(f64, f64)]) -> f64 {
    let mut a = 0.0;
    for i in 0..p.len() {
        let j = (i + 1) % p.len();
        a += p[i].0 * p[j].1 - p[j].0 * p[i].1;
    }
    0.5 * a.abs()
}

impl Mesh {
    /// Uniform mesh with `cells` squares per side; the quantity of interest
    /// is the mean of `u` over `qoi_box`.
    pub fn new(cells: usize, qoi_box: Rect) -> Result<Self> {
        if cells < 2 {
            return Err(Error::InvalidInput("mesh needs at least 2 cells per side".into()));
        }
        let n = cells;
        let h = 1.0 / n as f64;
        let node = |i: usize, j: usize| i * (n + 1) + j;
        let mut elements = Vec::with_capacity(2 * n * n);
        let mut centroid_index = Vec::with_capacity(2 * n * n);
        for i in 0..n {
            for j in 0..n {
                // lower triangle, centroid (x_i + 2h/3, y_j + h/3)
                elements.push([node(i, j), node(i + 1, j), node(i + 1, j + 1)]);
                centroid_index.push((2 * i + 1, 2 * j));
                // upper triangle, centroid (x_i + h/3, y_j + 2h/3)
                elements.push([node(i, j), node(i + 1, j + 1), node(i, j + 1)]);
                centroid_index.push((2 * i, 2 * j + 1));
            }
        }
        let centroid_coords = (0..n)
            .flat_map(|i| {
                let x = i as f64 * h;
                [x + h / 3.0, x + 2.0 * h / 3.0]
            })
            .collect();
        let templates = [
            triangle_stiffness([(0.0, 0.0), (h, 0.0), (h, h)]),
            triangle_stiffness([(0.0, 0.0), (h, h), (0.0, h)]),
        ];
        let mut mesh = Self {
            cells: n,
            h,
            elements,
            centroid_index,
            centroid_coords,
            templates,
            qoi_weights: Vec::new(),
        };
        mesh.qoi_weights = mesh.box_mean_weights(&qoi_box)?;
        Ok(mesh)
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn num_nodes(&self) -> usize {
        (self.cells + 1) * (self.cells + 1)
    }

    pub fn num_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn node_coords(&self, id: usize) -> (f64, f64) {
        let i = id / (self.cells + 1);
        let j = id % (self.cells + 1);
        (i as f64 * self.h, j as f64 * self.h)
    }

    /// Distinct centroid x (equivalently y) coordinates, `2 n` of them.
    pub fn centroid_coords(&self) -> &[f64] {
        &self.centroid_coords
    }

    pub fn centroid_index(&self) -> &[(usize, usize)] {
        &self.centroid_index
    }

    pub fn centroid(&self, e: usize) -> (f64, f64) {
        let (a, b) = self.centroid_index[e];
        (self.centroid_coords[a], self.centroid_coords[b])
    }

    fn vertex_coords(&self, e: usize) -> [(f64, f64); 3] {
        let t = self.elements[e];
        [self.node_coords(t[0]), self.node_coords(t[1]), self.node_coords(t[2])]
    }

    /// Nodal weights `w` with `sum_n w_n u_n = |B|^-1 int_B u_h` exactly for
    /// the piecewise-linear interpolant.
    fn box_mean_weights(&self, b: &Rect) -> Result<Vec<(usize, f64)>> {
        if !(b.x0 < b.x1 && b.y0 < b.y1) || b.x0 < 0.0 || b.y0 < 0.0 || b.x1 > 1.0 || b.y1 > 1.0 {
            return Err(Error::InvalidInput(format!("box {b:?} must be a non-empty subset of the unit square")));
        }
        let mut w = vec![0.0; self.num_nodes()];
        for e in 0..self.elements.len() {
            let p = self.vertex_coords(e);
            let poly = clip(&p, b);
            if poly.len() < 3 {
                continue;
            }
            for k in 1..poly.len() - 1 {
                let sub = [poly[0], poly[k], poly[k + 1]];
                let area = polygon_area(&sub);
                if area == 0.0 {
                    continue;
                }
                for v in sub {
                    let l = barycentric(p, v);
                    for (local, &global) in self.elements[e].iter().enumerate() {
                        w[global] += area / 3.0 * l[local];
                    }
                }
            }
        }
        let inv = 1.0 / b.area();
        Ok(w.into_iter().enumerate().filter(|(_, x)| *x != 0.0).map(|(i, x)| (i, x * inv)).collect())
    }

    pub fn box_mean(&self, u: &[f64]) -> f64 {
        self.qoi_weights.iter().map(|&(i, w)| w * u[i]).sum()
    }

    /// Solves for nodal values given per-element coefficients.
    pub fn solve(&self, coeff: &[f64]) -> Result<FemSolution> {
        if coeff.len() != self.elements.len() {
            return Err(Error::DimensionMismatch { expected: self.elements.len(), found: coeff.len() });
        }
        if let Some(e) = coeff.iter().position(|a| !(*a > 0.0 && a.is_finite())) {
            return Err(Error::InvalidInput(format!("coefficient on element {e} is not positive")));
        }
        let n = self.cells;
        let rows = n + 1;
        // unknowns: nodes with 0 < i < n, numbered (i - 1) * rows + j
        let unknowns = (n - 1) * rows;
        let bw = rows + 1;
        let mut mat = BandedSpd::zeros(unknowns, bw);
        let mut rhs = vec![0.0; unknowns];
        let dirichlet = |id: usize| -> Option<f64> {
            match id / rows {
                0 => Some(0.0),
                i if i == n => Some(1.0),
                _ => None,
            }
        };
        for (e, tri) in self.elements.iter().enumerate() {
            let k = &self.templates[e % 2];
            let a = coeff[e];
            for r in 0..3 {
                if dirichlet(tri[r]).is_some() {
                    continue;
                }
                let ur = tri[r] - rows;
                for c in 0..3 {
                    let v = a * k[r][c];
                    match dirichlet(tri[c]) {
                        Some(g) => rhs[ur] -= v * g,
                        None => {
                            let uc = tri[c] - rows;
                            if uc <= ur {
                                mat.add(ur, uc, v);
                            }
                        }
                    }
                }
            }
        }
        mat.factor()?;
        mat.solve_in_place(&mut rhs);
        let mut u = vec![0.0; self.num_nodes()];
        for (id, val) in u.iter_mut().enumerate() {
            *val = dirichlet(id).unwrap_or_else(|| rhs[id - rows]);
        }
        Ok(FemSolution { u, coeff: coeff.to_vec() })
    }

    /// Net flux `(left, right)` through the Dirichlet edges, from the
    /// residual of the assembled system at the boundary nodes.
    pub fn boundary_fluxes(&self, sol: &FemSolution) -> (f64, f64) {
        let n = self.cells;
        let rows = n + 1;
        let mut left = 0.0;
        let mut right = 0.0;
        for (e, tri) in self.elements.iter().enumerate() {
            let k = &self.templates[e % 2];
            for r in 0..3 {
                let col = tri[r] / rows;
                if col != 0 && col != n {
                    continue;
                }
                let res: f64 = (0..3).map(|c| sol.coeff[e] * k[r][c] * sol.u[tri[c]]).sum();
                if col == 0 {
                    left += res;
                } else {
                    right += res;
                }
            }
        }
        (left, right)
    }
}

#[derive(Debug, Clone)]
pub struct FemSolution {
    pub u: Vec<f64>,
    pub coeff: Vec<f64>,
}

/// Symmetric positive definite band matrix with in-place Cholesky.
///
/// Row `r` stores columns `r - bw ..= r`.
#[derive(Debug, Clone)]
struct BandedSpd {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandedSpd {
    fn zeros(n: usize, bw: usize) -> Self {
        Self { n, bw, data: vec![0.0; n * (bw + 1)] }
    }

    #[inline]
    fn idx(&self, r: usize, c: usize) -> usize {
        debug_assert!(c <= r && r - c <= self.bw);
        r * (self.bw + 1) + c + self.bw - r
    }

    fn add(&mut self, r: usize, c: usize, v: f64) {
        let i = self.idx(r, c);
        self.data[i] += v;
    }

    fn factor(&mut self) -> Result<()> {
        let bw = self.bw;
        for j in 0..self.n {
            let j0 = j.saturating_sub(bw);
            for k in j0..=j {
                let mut s = self.data[self.idx(j, k)];
                if k > j0 {
                    let rj = self.idx(j, j0);
                    let rk = self.idx(k, j0);
                    let len = k - j0;
                    let (a, b) = (&self.data[rj..rj + len], &self.data[rk..rk + len]);
                    s -= a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
                }
                if k == j {
                    if s <= 0.0 {
                        return Err(Error::InvalidInput(format!("stiffness matrix not positive definite at row {j}")));
                    }
                    let i = self.idx(j, j);
                    self.data[i] = s.sqrt();
                } else {
                    let d = self.data[self.idx(k, k)];
                    let i = self.idx(j, k);
                    self.data[i] = s / d;
                }
            }
        }
        Ok(())
    }

    fn solve_in_place(&self, b: &mut [f64]) {
        let bw = self.bw;
        for j in 0..self.n {
            let j0 = j.saturating_sub(bw);
            let mut s = b[j];
            for (m, bm) in b.iter().enumerate().take(j).skip(j0) {
                s -= self.data[self.idx(j, m)] * bm;
            }
            b[j] = s / self.data[self.idx(j, j)];
        }
        for j in (0..self.n).rev() {
            let mut s = b[j];
            for (r, br) in b.iter().enumerate().take((j + bw + 1).min(self.n)).skip(j + 1) {
                s -= self.data[self.idx(r, j)] * br;
            }
            b[j] = s / self.data[self.idx(j, j)];
        }
    }
}
