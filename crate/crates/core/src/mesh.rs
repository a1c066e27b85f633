//! Structured conforming triangulations of axis-aligned rectangles.

use std::collections::HashMap;
use std::sync::Arc;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Left,
    Right,
    Bottom,
    Top,
}

/// Local edge `k` of a triangle joins local vertices `EDGE_VERTICES[k]`.
pub const EDGE_VERTICES: [[usize; 2]; 3] = [[0, 1], [1, 2], [2, 0]];

/// Affine element data: area and the (constant) gradients of the
/// barycentric coordinates.
#[derive(Debug, Clone, Copy)]
pub struct ElementGeometry {
    pub area: f64,
    pub grad_lambda: [[f64; 2]; 3],
}

impl ElementGeometry {
    pub fn new(v: [[f64; 2]; 3]) -> Self {
        let (x0, y0) = (v[0][0], v[0][1]);
        let (x1, y1) = (v[1][0], v[1][1]);
        let (x2, y2) = (v[2][0], v[2][1]);
        let det = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0);
        let inv = 1.0 / det;
        Self {
            area: 0.5 * det,
            grad_lambda: [
                [(y1 - y2) * inv, (x2 - x1) * inv],
                [(y2 - y0) * inv, (x0 - x2) * inv],
                [(y0 - y1) * inv, (x1 - x0) * inv],
            ],
        }
    }
}

#[derive(Debug)]
pub struct Mesh {
    pub lx: f64,
    pub ly: f64,
    pub nx: usize,
    pub ny: usize,
    pub vertices: Vec<[f64; 2]>,
    /// Counter-clockwise vertex triples.
    pub triangles: Vec<[usize; 3]>,
    pub boundary_edges: Vec<([usize; 2], Side)>,
    /// Undirected edges as sorted vertex pairs.
    pub edges: Vec<[usize; 2]>,
    /// Global edge index of each local edge (see [`EDGE_VERTICES`]).
    pub triangle_edges: Vec<[usize; 3]>,
    edge_lookup: HashMap<(usize, usize), usize>,
    pub geometry: Vec<ElementGeometry>,
    pub h_max: f64,
    /// Coarse mesh this one was red-refined from; child `4 t + k` lies in
    /// parent triangle `t`.
    pub parent: Option<Arc<Mesh>>,
}

impl Mesh {
    fn from_parts(
        lx: f64,
        ly: f64,
        nx: usize,
        ny: usize,
        vertices: Vec<[f64; 2]>,
        triangles: Vec<[usize; 3]>,
        parent: Option<Arc<Mesh>>,
    ) -> Self {
        let mut edges = Vec::new();
        let mut edge_lookup = HashMap::new();
        let mut triangle_edges = Vec::with_capacity(triangles.len());
        for t in &triangles {
            let mut te = [0; 3];
            for (k, [a, b]) in EDGE_VERTICES.iter().enumerate() {
                let key = (t[*a].min(t[*b]), t[*a].max(t[*b]));
                te[k] = *edge_lookup.entry(key).or_insert_with(|| {
                    edges.push([key.0, key.1]);
                    edges.len() - 1
                });
            }
            triangle_edges.push(te);
        }

        let tol = 1e-12 * lx.max(ly);
        let side_of = |p: [f64; 2], q: [f64; 2]| {
            if p[0].abs() < tol && q[0].abs() < tol {
                Some(Side::Left)
            } else if (p[0] - lx).abs() < tol && (q[0] - lx).abs() < tol {
                Some(Side::Right)
            } else if p[1].abs() < tol && q[1].abs() < tol {
                Some(Side::Bottom)
            } else if (p[1] - ly).abs() < tol && (q[1] - ly).abs() < tol {
                Some(Side::Top)
            } else {
                None
            }
        };
        let boundary_edges = edges
            .iter()
            .filter_map(|&[a, b]| side_of(vertices[a], vertices[b]).map(|s| ([a, b], s)))
            .collect();

        let geometry: Vec<_> = triangles
            .iter()
            .map(|t| ElementGeometry::new([vertices[t[0]], vertices[t[1]], vertices[t[2]]]))
            .collect();
        let h_max = triangles
            .iter()
            .map(|t| {
                EDGE_VERTICES
                    .iter()
                    .map(|[a, b]| dist(vertices[t[*a]], vertices[t[*b]]))
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);

        Self {
            lx,
            ly,
            nx,
            ny,
            vertices,
            triangles,
            boundary_edges,
            edges,
            triangle_edges,
            edge_lookup,
            geometry,
            h_max,
            parent,
        }
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn area(&self) -> f64 {
        self.lx * self.ly
    }

    /// P2 node index of the midpoint of edge `{a, b}`: vertices come first,
    /// then one node per edge.
    pub fn edge_midpoint_index(&self, a: usize, b: usize) -> Option<usize> {
        self.edge_lookup
            .get(&(a.min(b), a.max(b)))
            .map(|e| self.vertices.len() + e)
    }

    pub fn is_boundary_point(&self, p: [f64; 2]) -> bool {
        let tol = 1e-12 * self.lx.max(self.ly);
        p[0].abs() < tol || p[1].abs() < tol || (p[0] - self.lx).abs() < tol || (p[1] - self.ly).abs() < tol
    }

    /// Coordinates of the P2 nodes (vertices, then edge midpoints).
    pub fn p2_node_coordinates(&self) -> Vec<[f64; 2]> {
        let mut out = self.vertices.clone();
        out.extend(self.edges.iter().map(|&[a, b]| midpoint(self.vertices[a], self.vertices[b])));
        out
    }

    pub fn triangle_vertices(&self, t: usize) -> [[f64; 2]; 3] {
        let tri = self.triangles[t];
        [self.vertices[tri[0]], self.vertices[tri[1]], self.vertices[tri[2]]]
    }

    /// Physical point at barycentric coordinates `l` in triangle `t`.
    pub fn map_point(&self, t: usize, l: &[f64; 3]) -> [f64; 2] {
        let v = self.triangle_vertices(t);
        [
            l[0] * v[0][0] + l[1] * v[1][0] + l[2] * v[2][0],
            l[0] * v[0][1] + l[1] * v[1][1] + l[2] * v[2][1],
        ]
    }

    /// Barycentric coordinates of `p` with respect to triangle `t`.
    pub fn barycentric(&self, t: usize, p: [f64; 2]) -> [f64; 3] {
        let v = self.triangle_vertices(t);
        let g = &self.geometry[t].grad_lambda;
        let l1 = g[1][0] * (p[0] - v[0][0]) + g[1][1] * (p[1] - v[0][1]);
        let l2 = g[2][0] * (p[0] - v[0][0]) + g[2][1] * (p[1] - v[0][1]);
        [1.0 - l1 - l2, l1, l2]
    }

    /// Smallest inscribed-circle diameter over all elements.
    pub fn min_inscribed_diameter(&self) -> f64 {
        self.triangles
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let perim: f64 = EDGE_VERTICES
                    .iter()
                    .map(|[a, b]| dist(self.vertices[t[*a]], self.vertices[t[*b]]))
                    .sum();
                4.0 * self.geometry[i].area / perim
            })
            .fold(f64::INFINITY, f64::min)
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn midpoint(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]
}

/// `[0, lx] x [0, ly]` split into `nx * ny` cells, each cut along its
/// south-west to north-east diagonal.
pub fn build_structured_mesh(lx: f64, ly: f64, nx: usize, ny: usize) -> Result<Mesh> {
    if !(lx > 0.0 && ly > 0.0 && lx.is_finite() && ly.is_finite()) {
        return Err(Error::InvalidArgument(format!("domain size must be positive, got {lx} x {ly}")));
    }
    if nx == 0 || ny == 0 {
        return Err(Error::InvalidArgument(format!("cell counts must be >= 1, got {nx} x {ny}")));
    }
    let idx = |i: usize, j: usize| j * (nx + 1) + i;
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            vertices.push([lx * i as f64 / nx as f64, ly * j as f64 / ny as f64]);
        }
    }
    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (v00, v10, v01, v11) = (idx(i, j), idx(i + 1, j), idx(i, j + 1), idx(i + 1, j + 1));
            triangles.push([v00, v10, v11]);
            triangles.push([v00, v11, v01]);
        }
    }
    Ok(Mesh::from_parts(lx, ly, nx, ny, vertices, triangles, None))
}

/// Red refinement: every triangle is split into four similar children
/// through its edge midpoints.
pub fn refine_uniform(mesh: &Arc<Mesh>) -> Mesh {
    let nv = mesh.vertices.len();
    let mut vertices = mesh.vertices.clone();
    vertices.extend(mesh.edges.iter().map(|&[a, b]| midpoint(mesh.vertices[a], mesh.vertices[b])));
    let mut triangles = Vec::with_capacity(4 * mesh.triangles.len());
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let te = mesh.triangle_edges[t];
        let (m01, m12, m20) = (nv + te[0], nv + te[1], nv + te[2]);
        let [a, b, c] = *tri;
        triangles.push([a, m01, m20]);
        triangles.push([m01, b, m12]);
        triangles.push([m20, m12, c]);
        triangles.push([m01, m12, m20]);
    }
    Mesh::from_parts(
        mesh.lx,
        mesh.ly,
        2 * mesh.nx,
        2 * mesh.ny,
        vertices,
        triangles,
        Some(Arc::clone(mesh)),
    )
}

/// Canonical representative of every node under the torus identification
/// `x ~ x + lx`, `y ~ y + ly`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PeriodicMap {
    pub representative: Vec<usize>,
}

impl PeriodicMap {
    pub fn identity(n: usize) -> Self {
        Self {
            representative: (0..n).collect(),
        }
    }

    /// Matches nodes on the right/top sides with their left/bottom partners
    /// by coordinates.
    pub fn from_coordinates(coords: &[[f64; 2]], lx: f64, ly: f64) -> Result<Self> {
        let scale = lx.max(ly);
        let tol = 1e-9 * scale;
        let key = |p: [f64; 2]| ((p[0] / tol).round() as i64, (p[1] / tol).round() as i64);
        let lookup: HashMap<_, _> = coords.iter().enumerate().map(|(i, &p)| (key(p), i)).collect();
        let mut representative = Vec::with_capacity(coords.len());
        for (i, &p) in coords.iter().enumerate() {
            let mut q = p;
            if (q[0] - lx).abs() < tol {
                q[0] = 0.0;
            }
            if (q[1] - ly).abs() < tol {
                q[1] = 0.0;
            }
            if q == p {
                representative.push(i);
                continue;
            }
            let partner = lookup.get(&key(q)).copied().ok_or_else(|| {
                Error::Topology(format!("node {i} at ({}, {}) has no periodic partner", p[0], p[1]))
            })?;
            representative.push(partner);
        }
        Ok(Self { representative })
    }

    pub fn apply(&self, node: usize) -> usize {
        self.representative[node]
    }

    pub fn class_count(&self) -> usize {
        self.representative
            .iter()
            .enumerate()
            .filter(|(i, r)| *i == **r)
            .count()
    }
}

/// Periodic identification of the mesh vertices (P1 nodes).
pub fn build_periodic_map(mesh: &Mesh) -> Result<PeriodicMap> {
    PeriodicMap::from_coordinates(&mesh.vertices, mesh.lx, mesh.ly)
}

/// Periodic identification of the P2 nodes (vertices and edge midpoints).
pub fn build_periodic_map_p2(mesh: &Mesh) -> Result<PeriodicMap> {
    PeriodicMap::from_coordinates(&mesh.p2_node_coordinates(), mesh.lx, mesh.ly)
}
