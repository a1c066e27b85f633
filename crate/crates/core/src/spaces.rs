//! Continuous Lagrange spaces (scalar P1, vector P2) on structured meshes,
//! with periodic DOF merging and boundary constraint kinds.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mesh::{build_periodic_map, build_periodic_map_p2, ElementGeometry, Mesh, PeriodicMap};
use crate::quadrature::triangle_rule;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Degree {
    P1,
    P2,
}

impl Degree {
    pub fn nodes_per_element(self) -> usize {
        match self {
            Degree::P1 => 3,
            Degree::P2 => 6,
        }
    }

    pub fn order(self) -> usize {
        match self {
            Degree::P1 => 1,
            Degree::P2 => 2,
        }
    }
}

/// Which DOFs are unknowns and what the remaining ones hold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Constraint {
    Free,
    ZeroTrace,
    FixedTrace(f64),
    MeanZero,
}

/// A continuous Lagrange space. Coefficient vectors cover every DOF (after
/// periodic merging), constrained ones included; `components > 1` stores
/// the components as consecutive blocks.
#[derive(Debug)]
pub struct LagrangeSpace {
    pub mesh: Arc<Mesh>,
    pub degree: Degree,
    pub components: usize,
    pub constraint: Constraint,
    pub periodic: bool,
    node_dof: Vec<usize>,
    dof_node: Vec<usize>,
    dof_on_boundary: Vec<bool>,
    element_dofs: Vec<usize>,
}

/// `V_h`-type scalar space.
pub fn scalar_p1(mesh: &Arc<Mesh>, constraint: Constraint, periodic: bool) -> Result<Arc<LagrangeSpace>> {
    LagrangeSpace::new(mesh, Degree::P1, 1, constraint, periodic).map(Arc::new)
}

/// `X_h`-type vector space.
pub fn vector_p2(mesh: &Arc<Mesh>, constraint: Constraint, periodic: bool) -> Result<Arc<LagrangeSpace>> {
    LagrangeSpace::new(mesh, Degree::P2, 2, constraint, periodic).map(Arc::new)
}

impl LagrangeSpace {
    pub fn new(
        mesh: &Arc<Mesh>,
        degree: Degree,
        components: usize,
        constraint: Constraint,
        periodic: bool,
    ) -> Result<Self> {
        if components == 0 {
            return Err(Error::InvalidArgument("space needs at least one component".into()));
        }
        let coords = match degree {
            Degree::P1 => mesh.vertices.clone(),
            Degree::P2 => mesh.p2_node_coordinates(),
        };
        let map = if periodic {
            match degree {
                Degree::P1 => build_periodic_map(mesh)?,
                Degree::P2 => build_periodic_map_p2(mesh)?,
            }
        } else {
            PeriodicMap::identity(coords.len())
        };

        let mut node_dof = vec![usize::MAX; coords.len()];
        let mut dof_node = Vec::new();
        for node in 0..coords.len() {
            let rep = map.apply(node);
            if node_dof[rep] == usize::MAX {
                node_dof[rep] = dof_node.len();
                dof_node.push(rep);
            }
            node_dof[node] = node_dof[rep];
        }
        let dof_on_boundary = dof_node.iter().map(|&n| mesh.is_boundary_point(coords[n])).collect();

        let npe = degree.nodes_per_element();
        let nv = mesh.vertex_count();
        let mut element_dofs = Vec::with_capacity(npe * mesh.triangle_count());
        for (t, tri) in mesh.triangles.iter().enumerate() {
            element_dofs.extend(tri.iter().map(|&v| node_dof[v]));
            if degree == Degree::P2 {
                element_dofs.extend(mesh.triangle_edges[t].iter().map(|&e| node_dof[nv + e]));
            }
        }

        Ok(Self {
            mesh: Arc::clone(mesh),
            degree,
            components,
            constraint,
            periodic,
            node_dof,
            dof_node,
            dof_on_boundary,
            element_dofs,
        })
    }

    /// DOFs per component.
    pub fn dof_count(&self) -> usize {
        self.dof_node.len()
    }

    /// Length of a coefficient vector.
    pub fn coefficient_count(&self) -> usize {
        self.components * self.dof_count()
    }

    pub fn element_dofs(&self, t: usize) -> &[usize] {
        let npe = self.degree.nodes_per_element();
        &self.element_dofs[t * npe..(t + 1) * npe]
    }

    pub fn node_dof(&self, node: usize) -> usize {
        self.node_dof[node]
    }

    /// Whether the DOF sits on the domain boundary. Periodic spaces have no
    /// boundary in the constraint sense.
    pub fn is_constrained(&self, dof: usize) -> bool {
        match self.constraint {
            Constraint::ZeroTrace | Constraint::FixedTrace(_) => !self.periodic && self.dof_on_boundary[dof],
            Constraint::Free | Constraint::MeanZero => false,
        }
    }

    /// Value a constrained DOF carries; `None` for unknowns.
    pub fn prescribed_value(&self, dof: usize) -> Option<f64> {
        if !self.is_constrained(dof) {
            return None;
        }
        match self.constraint {
            Constraint::FixedTrace(v) => Some(v),
            _ => Some(0.0),
        }
    }

    pub fn on_boundary(&self, dof: usize) -> bool {
        self.dof_on_boundary[dof]
    }

    /// Coordinates of the canonical node of every DOF.
    pub fn dof_coordinates(&self) -> Vec<[f64; 2]> {
        let coords = match self.degree {
            Degree::P1 => self.mesh.vertices.clone(),
            Degree::P2 => self.mesh.p2_node_coordinates(),
        };
        self.dof_node.iter().map(|&n| coords[n]).collect()
    }

    /// Number of unknowns left after boundary constraints are removed.
    pub fn unknown_count(&self) -> usize {
        let free = (0..self.dof_count()).filter(|&d| !self.is_constrained(d)).count();
        self.components * free
    }

    /// `<N_i, 1>` for every DOF of a scalar space.
    pub fn mass_vector(&self) -> Vec<f64> {
        let rule = triangle_rule(2 * self.degree.order()).expect("tabulated");
        let mut out = vec![0.0; self.dof_count()];
        for t in 0..self.mesh.triangle_count() {
            let dofs = self.element_dofs(t);
            let area = self.mesh.geometry[t].area;
            for (l, w) in rule.iter() {
                let n = basis_values(self.degree, l);
                for (k, &d) in dofs.iter().enumerate() {
                    out[d] += 2.0 * area * w * n[k];
                }
            }
        }
        out
    }
}

/// Local node order: vertices 0, 1, 2, then midpoints of edges (0,1),
/// (1,2), (2,0).
pub fn basis_values(degree: Degree, l: &[f64; 3]) -> [f64; 6] {
    match degree {
        Degree::P1 => [l[0], l[1], l[2], 0.0, 0.0, 0.0],
        Degree::P2 => [
            l[0] * (2.0 * l[0] - 1.0),
            l[1] * (2.0 * l[1] - 1.0),
            l[2] * (2.0 * l[2] - 1.0),
            4.0 * l[0] * l[1],
            4.0 * l[1] * l[2],
            4.0 * l[2] * l[0],
        ],
    }
}

pub fn basis_gradients(degree: Degree, l: &[f64; 3], geom: &ElementGeometry) -> [[f64; 2]; 6] {
    let g = &geom.grad_lambda;
    match degree {
        Degree::P1 => [g[0], g[1], g[2], [0.0; 2], [0.0; 2], [0.0; 2]],
        Degree::P2 => {
            let vert = |i: usize| {
                let c = 4.0 * l[i] - 1.0;
                [c * g[i][0], c * g[i][1]]
            };
            let edge = |a: usize, b: usize| {
                [
                    4.0 * (l[b] * g[a][0] + l[a] * g[b][0]),
                    4.0 * (l[b] * g[a][1] + l[a] * g[b][1]),
                ]
            };
            [vert(0), vert(1), vert(2), edge(0, 1), edge(1, 2), edge(2, 0)]
        }
    }
}

/// Finite-element function: a coefficient vector bound to a space.
#[derive(Debug, Clone)]
pub struct FeFunction {
    pub space: Arc<LagrangeSpace>,
    pub coefficients: Vec<f64>,
}

impl FeFunction {
    pub fn zeros(space: &Arc<LagrangeSpace>) -> Self {
        Self {
            space: Arc::clone(space),
            coefficients: vec![0.0; space.coefficient_count()],
        }
    }

    pub fn from_coefficients(space: &Arc<LagrangeSpace>, coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.len() != space.coefficient_count() {
            return Err(Error::InvalidArgument(format!(
                "expected {} coefficients, got {}",
                space.coefficient_count(),
                coefficients.len()
            )));
        }
        Ok(Self {
            space: Arc::clone(space),
            coefficients,
        })
    }

    pub fn component(&self, c: usize) -> &[f64] {
        let n = self.space.dof_count();
        &self.coefficients[c * n..(c + 1) * n]
    }

    /// Value and gradient of every component at barycentric point `l` of
    /// element `t`.
    pub fn evaluate(&self, t: usize, l: &[f64; 3]) -> Result<Vec<(f64, [f64; 2])>> {
        let mesh = &self.space.mesh;
        if t >= mesh.triangle_count() {
            return Err(Error::InvalidArgument(format!(
                "element {t} out of range ({} elements)",
                mesh.triangle_count()
            )));
        }
        if l.iter().any(|&x| x < -1e-12) || (l.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!("invalid barycentric point {l:?}")));
        }
        Ok(self.evaluate_unchecked(t, l))
    }

    pub(crate) fn evaluate_unchecked(&self, t: usize, l: &[f64; 3]) -> Vec<(f64, [f64; 2])> {
        let space = &self.space;
        let dofs = space.element_dofs(t);
        let n = basis_values(space.degree, l);
        let dn = basis_gradients(space.degree, l, &space.mesh.geometry[t]);
        (0..space.components)
            .map(|c| {
                let coef = self.component(c);
                let mut v = 0.0;
                let mut g = [0.0; 2];
                for (k, &d) in dofs.iter().enumerate() {
                    v += coef[d] * n[k];
                    g[0] += coef[d] * dn[k][0];
                    g[1] += coef[d] * dn[k][1];
                }
                (v, g)
            })
            .collect()
    }

    /// Value and gradient of a scalar function.
    pub fn value_gradient(&self, t: usize, l: &[f64; 3]) -> Result<(f64, [f64; 2])> {
        Ok(self.evaluate(t, l)?[0])
    }

    pub fn sub(&self, other: &FeFunction) -> Result<FeFunction> {
        if !Arc::ptr_eq(&self.space, &other.space) {
            return Err(Error::InvalidArgument("functions live in different spaces".into()));
        }
        let coefficients = self
            .coefficients
            .iter()
            .zip(&other.coefficients)
            .map(|(a, b)| a - b)
            .collect();
        Ok(FeFunction {
            space: Arc::clone(&self.space),
            coefficients,
        })
    }

    /// `(||f||_{L2}^2, |f|_{H1}^2)` with a rule exact for the squared
    /// piecewise polynomials.
    fn squared_norms(&self) -> (f64, f64) {
        let space = &self.space;
        let rule = triangle_rule(2 * space.degree.order()).expect("tabulated");
        let mut l2 = 0.0;
        let mut h1 = 0.0;
        for t in 0..space.mesh.triangle_count() {
            let area = space.mesh.geometry[t].area;
            for (l, w) in rule.iter() {
                for (v, g) in self.evaluate_unchecked(t, l) {
                    l2 += 2.0 * area * w * v * v;
                    h1 += 2.0 * area * w * (g[0] * g[0] + g[1] * g[1]);
                }
            }
        }
        (l2, h1)
    }

    pub fn norm_l2(&self) -> f64 {
        self.squared_norms().0.sqrt()
    }

    pub fn seminorm_h1(&self) -> f64 {
        self.squared_norms().1.sqrt()
    }

    pub fn norm_h1(&self) -> f64 {
        let (a, b) = self.squared_norms();
        (a + b).sqrt()
    }

    /// `<f, 1>` of a scalar function.
    pub fn mean_integral(&self) -> f64 {
        self.space
            .mass_vector()
            .iter()
            .zip(self.component(0))
            .map(|(m, c)| m * c)
            .sum()
    }
}

fn check_finite(v: f64, p: [f64; 2]) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::InvalidData(format!("non-finite value {v} at ({}, {})", p[0], p[1])))
    }
}

/// Nodal interpolation of a scalar function; constrained DOFs take their
/// prescribed values.
pub fn interpolate(space: &Arc<LagrangeSpace>, f: impl Fn([f64; 2]) -> f64) -> Result<FeFunction> {
    if space.components != 1 {
        return Err(Error::InvalidArgument("scalar interpolation into a vector space".into()));
    }
    let coefficients = space
        .dof_coordinates()
        .into_iter()
        .enumerate()
        .map(|(d, p)| space.prescribed_value(d).map_or_else(|| check_finite(f(p), p), Ok))
        .collect::<Result<Vec<_>>>()?;
    FeFunction::from_coefficients(space, coefficients)
}

/// Nodal interpolation of a two-component vector field.
pub fn interpolate_vector(space: &Arc<LagrangeSpace>, f: impl Fn([f64; 2]) -> [f64; 2]) -> Result<FeFunction> {
    if space.components != 2 {
        return Err(Error::InvalidArgument("vector interpolation needs a two-component space".into()));
    }
    let coords = space.dof_coordinates();
    let n = coords.len();
    let mut coefficients = vec![0.0; 2 * n];
    for (i, &p) in coords.iter().enumerate() {
        let v = match space.prescribed_value(i) {
            Some(c) => [c, c],
            None => f(p),
        };
        coefficients[i] = check_finite(v[0], p)?;
        coefficients[n + i] = check_finite(v[1], p)?;
    }
    FeFunction::from_coefficients(space, coefficients)
}

/// Exact representation of a coarse function on the red refinement of its
/// mesh.
pub fn prolongate(f: &FeFunction, fine: &Arc<LagrangeSpace>) -> Result<FeFunction> {
    let coarse = &f.space;
    let lineage_ok = fine
        .mesh
        .parent
        .as_ref()
        .is_some_and(|p| Arc::ptr_eq(p, &coarse.mesh));
    if !lineage_ok {
        return Err(Error::Topology("fine space is not built on the refinement of the coarse mesh".into()));
    }
    if fine.degree != coarse.degree || fine.components != coarse.components {
        return Err(Error::Topology("prolongation between different element types".into()));
    }
    let n_fine = fine.dof_count();
    let mut out = vec![0.0; fine.coefficient_count()];
    let mut done = vec![false; n_fine];
    let coords = match fine.degree {
        Degree::P1 => fine.mesh.vertices.clone(),
        Degree::P2 => fine.mesh.p2_node_coordinates(),
    };
    let nv = fine.mesh.vertex_count();
    for t in 0..fine.mesh.triangle_count() {
        let parent = t / 4;
        let tri = fine.mesh.triangles[t];
        let mut nodes = tri.to_vec();
        if fine.degree == Degree::P2 {
            nodes.extend(fine.mesh.triangle_edges[t].iter().map(|e| nv + e));
        }
        for (k, &d) in fine.element_dofs(t).iter().enumerate() {
            if done[d] {
                continue;
            }
            let l = coarse.mesh.barycentric(parent, coords[nodes[k]]);
            for (c, (v, _)) in f.evaluate_unchecked(parent, &l).into_iter().enumerate() {
                out[c * n_fine + d] = v;
            }
            done[d] = true;
        }
    }
    FeFunction::from_coefficients(fine, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_structured_mesh, refine_uniform};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit(n: usize) -> Arc<Mesh> {
        Arc::new(build_structured_mesh(1.0, 1.0, n, n).unwrap())
    }

    fn random_bary(rng: &mut ChaCha8Rng) -> [f64; 3] {
        let (mut a, mut b): (f64, f64) = (rng.gen(), rng.gen());
        if a + b > 1.0 {
            a = 1.0 - a;
            b = 1.0 - b;
        }
        [1.0 - a - b, a, b]
    }

    #[test]
    fn constants_and_affine_reproduction() {
        let mesh = unit(3);
        let p1 = scalar_p1(&mesh, Constraint::Free, false).unwrap();
        let one = interpolate(&p1, |_| 1.0).unwrap();
        let (v, g) = one.value_gradient(4, &[0.2, 0.3, 0.5]).unwrap();
        assert!((v - 1.0).abs() < 1e-14 && g[0].abs() < 1e-12 && g[1].abs() < 1e-12);

        let aff = interpolate(&p1, |p| 2.0 * p[0] + 3.0 * p[1]).unwrap();
        let l = [0.1, 0.6, 0.3];
        let x = mesh.map_point(7, &l);
        let (v, g) = aff.value_gradient(7, &l).unwrap();
        assert!((v - (2.0 * x[0] + 3.0 * x[1])).abs() < 1e-13);
        assert!((g[0] - 2.0).abs() < 1e-12 && (g[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn p2_reproduces_quadratics() {
        let mesh = unit(4);
        let p2 = vector_p2(&mesh, Constraint::Free, false).unwrap();
        let f = interpolate_vector(&p2, |p| [p[0] * p[0], p[0] * p[1]]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let t = rng.gen_range(0..mesh.triangle_count());
            let l = random_bary(&mut rng);
            let x = mesh.map_point(t, &l);
            let e = f.evaluate(t, &l).unwrap();
            assert!((e[0].0 - x[0] * x[0]).abs() < 1e-12);
            assert!((e[0].1[0] - 2.0 * x[0]).abs() < 1e-11);
            assert!((e[1].0 - x[0] * x[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn partition_of_unity() {
        let mesh = unit(2);
        let rule = triangle_rule(6).unwrap();
        for degree in [Degree::P1, Degree::P2] {
            for (l, _) in rule.iter() {
                let s: f64 = basis_values(degree, l).iter().sum();
                assert!((s - 1.0).abs() < 1e-13);
                let g = basis_gradients(degree, l, &mesh.geometry[0]);
                let gs = g.iter().fold([0.0, 0.0], |a, b| [a[0] + b[0], a[1] + b[1]]);
                assert!(gs[0].abs() < 1e-12 && gs[1].abs() < 1e-12);
            }
        }
    }

    #[test]
    fn evaluate_rejects_bad_input() {
        let mesh = unit(1);
        let p1 = scalar_p1(&mesh, Constraint::Free, false).unwrap();
        let f = FeFunction::zeros(&p1);
        assert!(f.evaluate(2, &[1.0, 0.0, 0.0]).is_err());
        assert!(f.evaluate(0, &[0.5, 0.6, -0.1]).is_err());
    }

    #[test]
    fn interpolation_values() {
        let mesh = unit(4);
        let p1 = scalar_p1(&mesh, Constraint::Free, false).unwrap();
        let c = interpolate(&p1, |_| 2.5).unwrap();
        assert!(c.coefficients.iter().all(|&v| v == 2.5));
        assert!(interpolate(&p1, |p| if p[0] > 0.5 { f64::NAN } else { 0.0 }).is_err());
    }

    #[test]
    fn norms() {
        let mesh = unit(4);
        let p1 = scalar_p1(&mesh, Constraint::Free, false).unwrap();
        let one = interpolate(&p1, |_| 1.0).unwrap();
        assert!((one.norm_l2() - 1.0).abs() < 1e-14);
        assert!(one.seminorm_h1().abs() < 1e-12);
        assert!((one.norm_h1() - one.norm_l2()).abs() < 1e-12);
        let x = interpolate(&p1, |p| p[0]).unwrap();
        assert!((x.norm_l2() - (1.0f64 / 3.0).sqrt()).abs() < 1e-14);
        assert!((x.seminorm_h1() - 1.0).abs() < 1e-13);
    }

    #[test]
    fn periodic_merging_and_zero_trace() {
        let mesh = unit(2);
        let p1 = scalar_p1(&mesh, Constraint::Free, true).unwrap();
        assert_eq!(p1.dof_count(), 4);
        let p2 = vector_p2(&mesh, Constraint::Free, true).unwrap();
        assert_eq!(p2.dof_count(), 16);

        let p2b = vector_p2(&mesh, Constraint::ZeroTrace, false).unwrap();
        let interior = (0..p2b.dof_count()).filter(|&d| !p2b.is_constrained(d)).count();
        // 2x2 mesh: interior vertex 1, interior edges 8 (16 edges, 8 on boundary)
        assert_eq!(interior, 1 + 8);
        let mut f = interpolate_vector(&p2b, |p| [p[0] + 1.0, p[1] - 2.0]).unwrap();
        let n = p2b.dof_count();
        for d in 0..n {
            if p2b.is_constrained(d) {
                f.coefficients[d] = 0.0;
                f.coefficients[n + d] = 0.0;
            }
        }
        let rule = triangle_rule(6).unwrap();
        for t in 0..mesh.triangle_count() {
            for (l, _) in rule.iter() {
                for k in 0..3 {
                    // points on edge opposite vertex k
                    let mut lb = *l;
                    let s = lb[(k + 1) % 3] + lb[(k + 2) % 3];
                    lb[k] = 0.0;
                    lb[(k + 1) % 3] /= s;
                    lb[(k + 2) % 3] /= s;
                    let x = mesh.map_point(t, &lb);
                    if mesh.is_boundary_point(x) {
                        let e = f.evaluate(t, &lb).unwrap();
                        assert!(e[0].0.abs() <= 1e-13 && e[1].0.abs() <= 1e-13);
                    }
                }
            }
        }
    }

    #[test]
    fn prolongation_is_exact() {
        let coarse = unit(3);
        let fine = Arc::new(refine_uniform(&coarse));
        for periodic in [false, true] {
            let pc = vector_p2(&coarse, Constraint::Free, periodic).unwrap();
            let pf = vector_p2(&fine, Constraint::Free, periodic).unwrap();
            let tau = std::f64::consts::TAU;
            let f = interpolate_vector(&pc, |p| [(tau * p[0]).sin() * (tau * p[1]).cos(), (tau * p[1]).sin()]).unwrap();
            let g = prolongate(&f, &pf).unwrap();
            assert!(((g.norm_l2() - f.norm_l2()) / f.norm_l2()).abs() < 1e-12);
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            for _ in 0..20 {
                let tf = rng.gen_range(0..fine.triangle_count());
                let l = random_bary(&mut rng);
                let x = fine.map_point(tf, &l);
                let lc = coarse.barycentric(tf / 4, x);
                let a = g.evaluate(tf, &l).unwrap();
                let b = f.evaluate(tf / 4, &lc).unwrap();
                for c in 0..2 {
                    assert!((a[c].0 - b[c].0).abs() <= 1e-12);
                }
            }
        }
        let p1c = scalar_p1(&coarse, Constraint::Free, false).unwrap();
        let p1f = scalar_p1(&fine, Constraint::Free, false).unwrap();
        let c = interpolate(&p1c, |_| 4.0).unwrap();
        let cf = prolongate(&c, &p1f).unwrap();
        assert!(cf.coefficients.iter().all(|&v| (v - 4.0).abs() < 1e-14));
        // wrong lineage
        let other = scalar_p1(&unit(6), Constraint::Free, false).unwrap();
        assert!(matches!(prolongate(&c, &other), Err(Error::Topology(_))));
    }

    #[test]
    fn periodic_interpolant_unchanged_by_identification() {
        let mesh = unit(4);
        let tau = std::f64::consts::TAU;
        let g = |p: [f64; 2]| (tau * p[0]).sin() + (tau * p[1]).cos();
        let plain = scalar_p1(&mesh, Constraint::Free, false).unwrap();
        let per = scalar_p1(&mesh, Constraint::Free, true).unwrap();
        let a = interpolate(&plain, g).unwrap();
        let b = interpolate(&per, g).unwrap();
        for v in 0..mesh.vertex_count() {
            let va = a.coefficients[plain.node_dof(v)];
            let vb = b.coefficients[per.node_dof(v)];
            assert!((va - vb).abs() < 1e-12);
        }
    }
}
