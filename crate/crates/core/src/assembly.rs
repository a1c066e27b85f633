//! Monolithic residual and Jacobian of the fully discrete scheme.
//!
//! Unknown vector layout: `[phi | mu | theta | u_x | u_y | p | lambda]`,
//! where `lambda` is the multiplier enforcing a mean-free pressure. All
//! coefficients at the previous level (mobility, conductivity, viscosity,
//! Korteweg stress, entropy, convecting velocity) and the sources are taken
//! at `t^n`.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::physics::{gradient_contribution, potential_f, time_averaged_dfdphi, viscosity, MaterialParams};
use crate::quadrature::{triangle_rule, TriangleRule, ASSEMBLY_DEGREE};
use crate::solver::{SparseMatrix, SparsityPattern};
use crate::spaces::{basis_gradients, basis_values, scalar_p1, vector_p2, Constraint, Degree, FeFunction, LagrangeSpace};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundaryKind {
    Periodic,
    /// No-slip walls, insulated.
    Closed,
    /// No-slip walls held at temperature `theta_b`.
    Thermal { theta_b: f64 },
}

impl BoundaryKind {
    pub fn theta_b(&self) -> Option<f64> {
        match *self {
            BoundaryKind::Thermal { theta_b } => Some(theta_b),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Field {
    Phi,
    Mu,
    Theta,
    Ux,
    Uy,
    Pressure,
}

impl Field {
    pub const ALL: [Field; 6] = [Field::Phi, Field::Mu, Field::Theta, Field::Ux, Field::Uy, Field::Pressure];
}

/// `(1 - tanh z) / 2`, a smooth step from 1 to 0.
pub fn trans(z: f64) -> f64 {
    0.5 * (1.0 - z.tanh())
}

/// Moving laser spot followed by a uniform cooling phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaserSource {
    pub peak: f64,
    pub on_until: f64,
    pub cooling: f64,
    pub cool_from: f64,
    pub cool_until: f64,
    pub path_center: [f64; 2],
    pub path_radius: f64,
    pub spot_scale: f64,
    pub spot_radius: f64,
    pub spot_width: f64,
}

impl Default for LaserSource {
    fn default() -> Self {
        Self {
            peak: 200.0,
            on_until: 1.0,
            cooling: -1.0,
            cool_from: 1.5,
            cool_until: 2.0,
            path_center: [2.5, 2.5],
            path_radius: 1.5,
            spot_scale: 2.5,
            spot_radius: 0.2,
            spot_width: 0.1,
        }
    }
}

impl LaserSource {
    pub fn position(&self, t: f64) -> [f64; 2] {
        let a = std::f64::consts::TAU * t;
        [
            self.path_center[0] + self.path_radius * a.cos(),
            self.path_center[1] + self.path_radius * a.sin(),
        ]
    }

    pub fn eval(&self, x: [f64; 2], t: f64) -> f64 {
        if t <= self.on_until {
            let p = self.position(t);
            let d = (self.spot_scale * ((x[0] - p[0]).powi(2) + (x[1] - p[1]).powi(2))).sqrt();
            self.peak * trans((d - self.spot_radius) / self.spot_width)
        } else if t >= self.cool_from && t <= self.cool_until {
            self.cooling
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HeatSource {
    Zero,
    Constant(f64),
    Laser(LaserSource),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BodyForce {
    Zero,
    Constant([f64; 2]),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sources {
    pub heat: HeatSource,
    pub force: BodyForce,
}

impl Default for Sources {
    fn default() -> Self {
        Self {
            heat: HeatSource::Zero,
            force: BodyForce::Zero,
        }
    }
}

impl Sources {
    pub fn heat_at(&self, x: [f64; 2], t: f64) -> f64 {
        match &self.heat {
            HeatSource::Zero => 0.0,
            HeatSource::Constant(q) => *q,
            HeatSource::Laser(l) => l.eval(x, t),
        }
    }

    pub fn force_at(&self, _x: [f64; 2], _t: f64) -> [f64; 2] {
        match self.force {
            BodyForce::Zero => [0.0, 0.0],
            BodyForce::Constant(b) => b,
        }
    }
}

/// Block offsets of the global unknown vector and its Dirichlet mask.
#[derive(Debug, Clone)]
pub struct SystemLayout {
    pub n_p1: usize,
    pub n_p2: usize,
    pub bc: BoundaryKind,
    dirichlet: Vec<bool>,
}

impl SystemLayout {
    pub fn offset(&self, f: Field) -> usize {
        let (n1, n2) = (self.n_p1, self.n_p2);
        match f {
            Field::Phi => 0,
            Field::Mu => n1,
            Field::Theta => 2 * n1,
            Field::Ux => 3 * n1,
            Field::Uy => 3 * n1 + n2,
            Field::Pressure => 3 * n1 + 2 * n2,
        }
    }

    pub fn block_len(&self, f: Field) -> usize {
        match f {
            Field::Ux | Field::Uy => self.n_p2,
            _ => self.n_p1,
        }
    }

    pub fn block(&self, f: Field) -> std::ops::Range<usize> {
        let o = self.offset(f);
        o..o + self.block_len(f)
    }

    pub fn multiplier(&self) -> usize {
        4 * self.n_p1 + 2 * self.n_p2
    }

    pub fn len(&self) -> usize {
        self.multiplier() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn is_dirichlet(&self, i: usize) -> bool {
        self.dirichlet[i]
    }

    pub fn dirichlet_mask(&self) -> &[bool] {
        &self.dirichlet
    }
}

/// Global coefficient vector at one time level.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    pub t: f64,
    pub values: Vec<f64>,
}

const NLOC: usize = 24;
const OFF: [usize; 6] = [0, 3, 6, 9, 15, 21];
const LEN: [usize; 6] = [3, 3, 3, 6, 6, 3];
/// Basis kind per field: 0 = P1, 1 = P2.
const KIND: [usize; 6] = [0, 0, 0, 1, 1, 0];
const PHI: usize = 0;
const MU: usize = 1;
const THETA: usize = 2;
const UX: usize = 3;
const P: usize = 5;

/// Mesh, spaces, layout and the fixed sparsity pattern of one problem.
#[derive(Debug)]
pub struct Discretization {
    pub mesh: Arc<Mesh>,
    pub bc: BoundaryKind,
    pub p1: Arc<LagrangeSpace>,
    pub theta_space: Arc<LagrangeSpace>,
    pub pressure_space: Arc<LagrangeSpace>,
    pub velocity_space: Arc<LagrangeSpace>,
    pub layout: SystemLayout,
    pattern: Arc<SparsityPattern>,
    element_index: Vec<[usize; NLOC]>,
    pressure_mass: Vec<f64>,
    rule: &'static TriangleRule,
}

impl Discretization {
    pub fn new(mesh: &Arc<Mesh>, bc: BoundaryKind) -> Result<Self> {
        let periodic = bc == BoundaryKind::Periodic;
        if let BoundaryKind::Thermal { theta_b } = bc {
            if !(theta_b > 0.0 && theta_b.is_finite()) {
                return Err(Error::InvalidArgument(format!("boundary temperature must be positive, got {theta_b}")));
            }
        }
        let p1 = scalar_p1(mesh, Constraint::Free, periodic)?;
        let theta_space = match bc {
            BoundaryKind::Thermal { theta_b } => scalar_p1(mesh, Constraint::FixedTrace(theta_b), false)?,
            _ => Arc::clone(&p1),
        };
        let pressure_space = scalar_p1(mesh, Constraint::MeanZero, periodic)?;
        let u_constraint = if periodic { Constraint::Free } else { Constraint::ZeroTrace };
        let velocity_space = vector_p2(mesh, u_constraint, periodic)?;

        let n_p1 = p1.dof_count();
        let n_p2 = velocity_space.dof_count();
        let mut layout = SystemLayout {
            n_p1,
            n_p2,
            bc,
            dirichlet: Vec::new(),
        };
        let mut dirichlet = vec![false; layout.len()];
        for d in 0..n_p1 {
            if theta_space.is_constrained(d) {
                dirichlet[layout.offset(Field::Theta) + d] = true;
            }
        }
        for d in 0..n_p2 {
            if velocity_space.is_constrained(d) {
                dirichlet[layout.offset(Field::Ux) + d] = true;
                dirichlet[layout.offset(Field::Uy) + d] = true;
            }
        }
        layout.dirichlet = dirichlet;

        let element_index: Vec<[usize; NLOC]> = (0..mesh.triangle_count())
            .map(|t| {
                let mut idx = [0usize; NLOC];
                let d1 = p1.element_dofs(t);
                let d2 = velocity_space.element_dofs(t);
                for (f, field) in Field::ALL.iter().enumerate() {
                    let dofs = if KIND[f] == 0 { d1 } else { d2 };
                    for k in 0..LEN[f] {
                        idx[OFF[f] + k] = layout.offset(*field) + dofs[k];
                    }
                }
                idx
            })
            .collect();

        let pressure_mass = pressure_space.mass_vector();
        let pattern = Arc::new(build_pattern(&layout, &element_index)?);
        Ok(Self {
            mesh: Arc::clone(mesh),
            bc,
            p1,
            theta_space,
            pressure_space,
            velocity_space,
            layout,
            pattern,
            element_index,
            pressure_mass,
            rule: triangle_rule(ASSEMBLY_DEGREE)?,
        })
    }

    pub fn pattern(&self) -> &Arc<SparsityPattern> {
        &self.pattern
    }

    pub fn pressure_mass(&self) -> &[f64] {
        &self.pressure_mass
    }

    /// Interpolates initial data and imposes the boundary values of the
    /// temperature and velocity spaces. `mu`, `p` and the multiplier start
    /// at zero.
    pub fn initial_state(
        &self,
        t: f64,
        phi0: impl Fn([f64; 2]) -> f64,
        theta0: impl Fn([f64; 2]) -> f64,
        u0: impl Fn([f64; 2]) -> [f64; 2],
    ) -> Result<SystemState> {
        let phi = crate::spaces::interpolate(&self.p1, phi0)?;
        let theta = crate::spaces::interpolate(&self.theta_space, theta0)?;
        let u = crate::spaces::interpolate_vector(&self.velocity_space, u0)?;
        let mut values = vec![0.0; self.layout.len()];
        values[self.layout.block(Field::Phi)].copy_from_slice(&phi.coefficients);
        values[self.layout.block(Field::Theta)].copy_from_slice(&theta.coefficients);
        let n2 = self.layout.n_p2;
        let ux = self.layout.offset(Field::Ux);
        values[ux..ux + 2 * n2].copy_from_slice(&u.coefficients);
        self.impose_boundary_values(&mut values);
        if let Some(d) = (0..self.layout.n_p1).find(|&d| values[self.layout.offset(Field::Theta) + d] <= 0.0) {
            return Err(Error::InvalidData(format!("initial temperature is not positive at dof {d}")));
        }
        Ok(SystemState { t, values })
    }

    /// Writes the prescribed values into every Dirichlet entry.
    pub fn impose_boundary_values(&self, values: &mut [f64]) {
        let th = self.layout.offset(Field::Theta);
        for (i, v) in values.iter_mut().enumerate() {
            if self.layout.is_dirichlet(i) {
                *v = match self.bc {
                    BoundaryKind::Thermal { theta_b } if (th..th + self.layout.n_p1).contains(&i) => theta_b,
                    _ => 0.0,
                };
            }
        }
    }

    pub fn field(&self, state: &SystemState, f: Field) -> FeFunction {
        let space = match f {
            Field::Theta => &self.theta_space,
            Field::Pressure => &self.pressure_space,
            Field::Phi | Field::Mu => &self.p1,
            Field::Ux | Field::Uy => {
                let c = if f == Field::Ux { 0 } else { 1 };
                let n = self.layout.n_p2;
                let mut coef = vec![0.0; 2 * n];
                coef[c * n..(c + 1) * n].copy_from_slice(&state.values[self.layout.block(f)]);
                return FeFunction {
                    space: Arc::clone(&self.velocity_space),
                    coefficients: coef,
                };
            }
        };
        FeFunction {
            space: Arc::clone(space),
            coefficients: state.values[self.layout.block(f)].to_vec(),
        }
    }

    pub fn velocity(&self, state: &SystemState) -> FeFunction {
        let o = self.layout.offset(Field::Ux);
        FeFunction {
            space: Arc::clone(&self.velocity_space),
            coefficients: state.values[o..o + 2 * self.layout.n_p2].to_vec(),
        }
    }

    pub fn min_theta(&self, values: &[f64]) -> f64 {
        values[self.layout.block(Field::Theta)].iter().copied().fold(f64::INFINITY, f64::min)
    }

    fn gather(&self, t: usize, values: &[f64]) -> [f64; NLOC] {
        let idx = &self.element_index[t];
        std::array::from_fn(|k| values[idx[k]])
    }

    /// Integrates a pointwise functional of the new and old fields over the
    /// domain with the assembly rule. Per-element sums are combined in
    /// element order.
    pub(crate) fn integrate<const K: usize, F>(&self, new: &[f64], old: &[f64], f: F) -> Result<[f64; K]>
    where
        F: Fn(&PointData) -> Result<[f64; K]> + Sync,
    {
        let per_element: Vec<[f64; K]> = (0..self.mesh.triangle_count())
            .into_par_iter()
            .map(|t| {
                let xn = self.gather(t, new);
                let xo = self.gather(t, old);
                let mut acc = [0.0; K];
                for (l, w) in self.rule.iter() {
                    let pd = self.point_data(t, l, w, &xn, &xo);
                    let v = f(&pd)?;
                    for k in 0..K {
                        acc[k] += v[k] * pd.dx;
                    }
                }
                Ok(acc)
            })
            .collect::<Result<_>>()?;
        let mut total = [0.0; K];
        for e in per_element {
            for k in 0..K {
                total[k] += e[k];
            }
        }
        Ok(total)
    }

    fn point_data(&self, t: usize, l: &[f64; 3], w: f64, xn: &[f64; NLOC], xo: &[f64; NLOC]) -> PointData {
        let geom = &self.mesh.geometry[t];
        let basis = PointBasis {
            n: [basis_values(Degree::P1, l), basis_values(Degree::P2, l)],
            dn: [basis_gradients(Degree::P1, l, geom), basis_gradients(Degree::P2, l, geom)],
        };
        let new = basis.evaluate(xn);
        let old = basis.evaluate(xo);
        PointData {
            x: self.mesh.map_point(t, l),
            dx: 2.0 * geom.area * w,
            basis,
            new,
            old,
        }
    }
}

fn build_pattern(layout: &SystemLayout, element_index: &[[usize; NLOC]]) -> Result<SparsityPattern> {
    let n = layout.len();
    let mut dof_elements: Vec<Vec<u32>> = vec![Vec::new(); n];
    for (t, idx) in element_index.iter().enumerate() {
        for &i in idx {
            if dof_elements[i].last() != Some(&(t as u32)) {
                dof_elements[i].push(t as u32);
            }
        }
    }
    let lambda = layout.multiplier();
    let pblock = layout.block(Field::Pressure);
    let mut entries = Vec::new();
    let mut rows = Vec::new();
    for col in 0..n {
        rows.clear();
        rows.push(col);
        for &t in &dof_elements[col] {
            rows.extend_from_slice(&element_index[t as usize]);
        }
        if pblock.contains(&col) {
            rows.push(lambda);
        }
        if col == lambda {
            rows.extend(pblock.clone());
        }
        rows.sort_unstable();
        rows.dedup();
        entries.extend(rows.iter().map(|&r| (r, col)));
    }
    SparsityPattern::from_entries(n, entries)
}

pub(crate) struct PointBasis {
    pub n: [[f64; 6]; 2],
    pub dn: [[[f64; 2]; 6]; 2],
}

/// Values and gradients of the six scalar fields at a point.
#[derive(Debug, Clone, Copy)]
pub(crate) struct FieldValues {
    pub val: [f64; 6],
    pub grad: [[f64; 2]; 6],
}

impl FieldValues {
    pub fn u(&self) -> [f64; 2] {
        [self.val[UX], self.val[UX + 1]]
    }

    /// Symmetric gradient `Du[c][d]`.
    pub fn sym_grad(&self) -> [[f64; 2]; 2] {
        let g = [self.grad[UX], self.grad[UX + 1]];
        [
            [g[0][0], 0.5 * (g[0][1] + g[1][0])],
            [0.5 * (g[0][1] + g[1][0]), g[1][1]],
        ]
    }
}

impl PointBasis {
    fn evaluate(&self, x: &[f64; NLOC]) -> FieldValues {
        let mut val = [0.0; 6];
        let mut grad = [[0.0; 2]; 6];
        for f in 0..6 {
            let (n, dn) = (&self.n[KIND[f]], &self.dn[KIND[f]]);
            for k in 0..LEN[f] {
                let c = x[OFF[f] + k];
                val[f] += c * n[k];
                grad[f][0] += c * dn[k][0];
                grad[f][1] += c * dn[k][1];
            }
        }
        FieldValues { val, grad }
    }
}

pub(crate) struct PointData {
    pub x: [f64; 2],
    pub dx: f64,
    basis: PointBasis,
    pub new: FieldValues,
    pub old: FieldValues,
}

fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

#[derive(Debug, Clone, Copy, Default)]
struct Coupling {
    vv: f64,
    vg: [f64; 2],
    gv: [f64; 2],
    gg: [[f64; 2]; 2],
}

/// Inputs of one nonlinear step.
#[derive(Clone, Copy)]
pub struct StepContext<'a> {
    pub disc: &'a Discretization,
    pub params: &'a MaterialParams,
    pub sources: &'a Sources,
    pub prev: &'a SystemState,
    pub tau: f64,
}

struct ElementContribution {
    r: [f64; NLOC],
    j: Option<Vec<f64>>,
    /// Quadrature points where the gradient hessian is not positive definite.
    indefinite: usize,
}

impl StepContext<'_> {
    fn check(&self, guess: &[f64]) -> Result<()> {
        if !(self.tau > 0.0) {
            return Err(Error::InvalidArgument(format!("time step must be positive, got {}", self.tau)));
        }
        let n = self.disc.layout.len();
        if guess.len() != n || self.prev.values.len() != n {
            return Err(Error::InvalidArgument(format!(
                "state length mismatch: expected {n}, got {} and {}",
                guess.len(),
                self.prev.values.len()
            )));
        }
        Ok(())
    }

    fn element(&self, t: usize, guess: &[f64], want_jac: bool) -> Result<ElementContribution> {
        let disc = self.disc;
        let p = self.params;
        let tau = self.tau;
        let t_star = self.prev.t;
        let xn = disc.gather(t, guess);
        let xo = disc.gather(t, &self.prev.values);
        let mut r = [0.0; NLOC];
        let mut jac = want_jac.then(|| vec![0.0; NLOC * NLOC]);
        let mut indefinite = 0;

        for (l, w) in disc.rule.iter() {
            let pd = disc.point_data(t, l, w, &xn, &xo);
            let (n, o) = (&pd.new, &pd.old);
            let theta = n.val[THETA];
            let theta_o = o.val[THETA];
            if !(theta > 0.0) {
                return Err(Error::PositivityViolation { element: t, value: theta });
            }
            if !(theta_o > 0.0) {
                return Err(Error::Domain(theta_o));
            }
            let phi = n.val[PHI];
            let phi_o = o.val[PHI];
            let gphi = n.grad[PHI];
            let gphi_o = o.grad[PHI];
            let mu = n.val[MU];
            let gth = n.grad[THETA];
            let u = n.u();
            let uo = o.u();
            let du = n.sym_grad();
            let du2: f64 = du.iter().flatten().map(|v| v * v).sum();
            let pr = n.val[P];

            let a = p.mobility / theta_o;
            let k = p.conductivity / theta_o.powi(3);
            let eta_o = viscosity(phi_o, p).0;
            let pot_n = potential_f(phi, theta, p)?;
            let pot_o = potential_f(phi_o, theta_o, p)?;
            let g_n = gradient_contribution(gphi, &p.gradient_model);
            let g_o = gradient_contribution(gphi_o, &p.gradient_model);
            let s_n = -g_n.value - pot_n.df_dtheta;
            let s_o = -g_o.value - pot_o.df_dtheta;
            let avg = time_averaged_dfdphi(phi, phi_o, theta, p)?;
            let q = self.sources.heat_at(pd.x, t_star);
            let b = self.sources.force_at(pd.x, t_star);
            let go = g_o.grad;
            let dphi_dt = (phi - phi_o) / tau;

            let mut c0 = [0.0; 6];
            let mut c1 = [[0.0; 2]; 6];
            c0[PHI] = dphi_dt + dot(u, gphi_o) + a * mu;
            c0[MU] = mu - avg.value - dot(go, gth);
            c1[MU] = [-theta * g_n.grad[0], -theta * g_n.grad[1]];
            let prod = a * mu * mu + eta_o * du2 + k * dot(gth, gth) + q;
            c0[THETA] = (s_n - s_o) / tau - prod / theta;
            let adv = dot(gphi_o, u);
            for d in 0..2 {
                c1[THETA][d] = k * gth[d] - go[d] * dphi_dt - go[d] * adv - s_o * u[d];
            }
            for c in 0..2 {
                let f = UX + c;
                c0[f] = (u[c] - uo[c]) / tau + 0.5 * dot(uo, n.grad[f]) + go[c] * dot(gphi_o, gth) + s_o * gth[c]
                    - mu * gphi_o[c]
                    - b[c];
                for d in 0..2 {
                    let kron = if c == d { 1.0 } else { 0.0 };
                    c1[f][d] = -0.5 * u[c] * uo[d] + eta_o * du[c][d] - pr * kron;
                }
            }
            c0[P] = n.grad[UX][0] + n.grad[UX + 1][1];

            let basis = &pd.basis;
            for f in 0..6 {
                let (nb, db) = (&basis.n[KIND[f]], &basis.dn[KIND[f]]);
                for i in 0..LEN[f] {
                    r[OFF[f] + i] += (c0[f] * nb[i] + dot(c1[f], db[i])) * pd.dx;
                }
            }

            let Some(jac) = jac.as_mut() else { continue };
            let mut cp = [[Coupling::default(); 6]; 6];
            let mut active = [[false; 6]; 6];
            let mut on = |rf: usize, cf: usize| {
                active[rf][cf] = true;
            };

            // phase row
            cp[PHI][PHI].vv = 1.0 / tau;
            cp[PHI][MU].vv = a;
            on(PHI, PHI);
            on(PHI, MU);
            for c in 0..2 {
                cp[PHI][UX + c].vv = gphi_o[c];
                on(PHI, UX + c);
            }

            let h = g_n.hess;
            if !(h[0][0] > 0.0 && h[0][0] * h[1][1] - h[0][1] * h[1][0] > 0.0) {
                indefinite += 1;
            }

            // chemical potential row
            cp[MU][MU].vv = 1.0;
            cp[MU][PHI].vv = -avg.d_phi_new;
            for d in 0..2 {
                for m in 0..2 {
                    cp[MU][PHI].gg[d][m] = -theta * g_n.hess[d][m];
                }
            }
            cp[MU][THETA].vv = -avg.d_theta;
            cp[MU][THETA].vg = [-go[0], -go[1]];
            cp[MU][THETA].gv = [-g_n.grad[0], -g_n.grad[1]];
            on(MU, MU);
            on(MU, PHI);
            on(MU, THETA);

            // entropy row
            let th2 = theta * theta;
            cp[THETA][THETA].vv = p.c_vsh / (theta * tau) + prod / th2;
            cp[THETA][THETA].vg = [-2.0 * k * gth[0] / theta, -2.0 * k * gth[1] / theta];
            cp[THETA][THETA].gg = [[k, 0.0], [0.0, k]];
            cp[THETA][MU].vv = -2.0 * a * mu / theta;
            cp[THETA][PHI].vv = -pot_n.d2f_dphitheta / tau;
            cp[THETA][PHI].vg = [-g_n.grad[0] / tau, -g_n.grad[1] / tau];
            cp[THETA][PHI].gv = [-go[0] / tau, -go[1] / tau];
            on(THETA, THETA);
            on(THETA, MU);
            on(THETA, PHI);
            for c in 0..2 {
                let f = UX + c;
                for m in 0..2 {
                    cp[THETA][f].vg[m] = -2.0 * eta_o / theta * du[c][m];
                }
                for d in 0..2 {
                    let kron = if c == d { 1.0 } else { 0.0 };
                    cp[THETA][f].gv[d] = -go[d] * gphi_o[c] - s_o * kron;
                }
                on(THETA, f);
            }

            // momentum rows
            for c in 0..2 {
                let f = UX + c;
                cp[f][f].vv = 1.0 / tau;
                cp[f][f].vg = [0.5 * uo[0], 0.5 * uo[1]];
                cp[f][f].gv = [-0.5 * uo[0], -0.5 * uo[1]];
                for e in 0..2 {
                    let g = UX + e;
                    for d in 0..2 {
                        for m in 0..2 {
                            let kd = |x: usize, y: usize| if x == y { 1.0 } else { 0.0 };
                            cp[f][g].gg[d][m] += eta_o * 0.5 * (kd(c, e) * kd(d, m) + kd(d, e) * kd(c, m));
                        }
                    }
                    on(f, g);
                }
                for d in 0..2 {
                    let kron = if c == d { 1.0 } else { 0.0 };
                    cp[f][THETA].vg[d] = go[c] * gphi_o[d] + s_o * kron;
                    cp[f][P].gv[d] = -kron;
                }
                cp[f][MU].vv = -gphi_o[c];
                on(f, THETA);
                on(f, P);
                on(f, MU);

                // continuity row
                cp[P][f].vg[c] = 1.0;
                on(P, f);
            }

            for rf in 0..6 {
                let (nr, dr) = (&basis.n[KIND[rf]], &basis.dn[KIND[rf]]);
                for cf in 0..6 {
                    if !active[rf][cf] {
                        continue;
                    }
                    let cpl = &cp[rf][cf];
                    let (nc, dc) = (&basis.n[KIND[cf]], &basis.dn[KIND[cf]]);
                    for i in 0..LEN[rf] {
                        let row = (OFF[rf] + i) * NLOC + OFF[cf];
                        let gi = [
                            cpl.gg[0][0] * dr[i][0] + cpl.gg[1][0] * dr[i][1],
                            cpl.gg[0][1] * dr[i][0] + cpl.gg[1][1] * dr[i][1],
                        ];
                        let vi = cpl.vv * nr[i] + dot(cpl.gv, dr[i]);
                        let wi = nr[i];
                        for j in 0..LEN[cf] {
                            let v = vi * nc[j] + wi * dot(cpl.vg, dc[j]) + dot(gi, dc[j]);
                            jac[row + j] += v * pd.dx;
                        }
                    }
                }
            }
        }
        Ok(ElementContribution { r, j: jac, indefinite })
    }

    /// Residual and (optionally) Jacobian, boundary conditions applied.
    pub fn assemble(&self, guess: &[f64], want_jac: bool) -> Result<(Vec<f64>, Option<SparseMatrix>)> {
        self.check(guess)?;
        let disc = self.disc;
        let layout = &disc.layout;
        let n = layout.len();
        let mut res = vec![0.0; n];
        let mut jac = want_jac.then(|| SparseMatrix::zeros(&disc.pattern));
        let n_el = disc.mesh.triangle_count();
        const CHUNK: usize = 2048;
        let mut indefinite = 0;
        for start in (0..n_el).step_by(CHUNK) {
            let end = (start + CHUNK).min(n_el);
            let locals: Vec<ElementContribution> = (start..end)
                .into_par_iter()
                .map(|t| self.element(t, guess, want_jac))
                .collect::<Result<_>>()?;
            for (t, loc) in (start..end).zip(locals) {
                indefinite += loc.indefinite;
                let idx = &disc.element_index[t];
                for i in 0..NLOC {
                    if !layout.is_dirichlet(idx[i]) {
                        res[idx[i]] += loc.r[i];
                    }
                }
                if let (Some(m), Some(lj)) = (jac.as_mut(), loc.j.as_ref()) {
                    for i in 0..NLOC {
                        if layout.is_dirichlet(idx[i]) {
                            continue;
                        }
                        for j in 0..NLOC {
                            let v = lj[i * NLOC + j];
                            if v != 0.0 {
                                m.add(idx[i], idx[j], v);
                            }
                        }
                    }
                }
            }
        }

        if indefinite > 0 {
            log::debug!("gradient hessian not positive definite at {indefinite} quadrature points");
        }

        let lambda_idx = layout.multiplier();
        let lambda = guess[lambda_idx];
        let po = layout.offset(Field::Pressure);
        let mut mean = 0.0;
        for (i, &m) in disc.pressure_mass.iter().enumerate() {
            res[po + i] += lambda * m;
            mean += m * guess[po + i];
        }
        res[lambda_idx] = mean;
        if let Some(m) = jac.as_mut() {
            for (i, &w) in disc.pressure_mass.iter().enumerate() {
                m.add(po + i, lambda_idx, w);
                m.add(lambda_idx, po + i, w);
            }
        }
        apply_boundary_conditions(layout, jac.as_mut(), &mut res);
        Ok((res, jac))
    }
}

/// Replaces Dirichlet rows by identity rows with zero residual: the
/// prescribed values already sit in the iterate, so the increment vanishes.
pub fn apply_boundary_conditions(layout: &SystemLayout, matrix: Option<&mut SparseMatrix>, residual: &mut [f64]) {
    for (i, r) in residual.iter_mut().enumerate() {
        if layout.is_dirichlet(i) {
            *r = 0.0;
        }
    }
    if let Some(m) = matrix {
        m.set_identity_rows(layout.dirichlet_mask());
    }
}

pub fn assemble_residual(ctx: &StepContext<'_>, guess: &[f64]) -> Result<Vec<f64>> {
    Ok(ctx.assemble(guess, false)?.0)
}

pub fn assemble_jacobian(ctx: &StepContext<'_>, guess: &[f64]) -> Result<SparseMatrix> {
    Ok(ctx.assemble(guess, true)?.1.expect("jacobian requested"))
}

/// `1/2 <(w . grad) u, v> - 1/2 <(w . grad) v, u>` for vector fields in the
/// same space.
pub fn skew_convection(w: &FeFunction, u: &FeFunction, v: &FeFunction) -> Result<f64> {
    let space = &w.space;
    if !(Arc::ptr_eq(space, &u.space) && Arc::ptr_eq(space, &v.space)) || space.components != 2 {
        return Err(Error::InvalidArgument("skew convection needs three fields of one vector space".into()));
    }
    let rule = triangle_rule(ASSEMBLY_DEGREE)?;
    let mut total = 0.0;
    for t in 0..space.mesh.triangle_count() {
        let area = space.mesh.geometry[t].area;
        for (l, wq) in rule.iter() {
            let we = w.evaluate_unchecked(t, l);
            let ue = u.evaluate_unchecked(t, l);
            let ve = v.evaluate_unchecked(t, l);
            let wv = [we[0].0, we[1].0];
            let mut s = 0.0;
            for c in 0..2 {
                s += 0.5 * dot(wv, ue[c].1) * ve[c].0 - 0.5 * dot(wv, ve[c].1) * ue[c].0;
            }
            total += 2.0 * area * wq * s;
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_structured_mesh;
    use crate::physics::GradientModel;
    use crate::spaces::interpolate_vector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params(model: GradientModel) -> MaterialParams {
        MaterialParams {
            mobility: 10.0,
            conductivity: 0.01,
            eta_l: 0.001,
            eta_s: 1.0,
            theta_m: 1.0,
            latent: 1.0,
            h_pt: 1.0,
            h_cf: 0.1,
            c_vsh: 1.0,
            gradient_model: model,
        }
    }

    fn disc(n: usize, bc: BoundaryKind) -> Discretization {
        let mesh = Arc::new(build_structured_mesh(1.0, 1.0, n, n).unwrap());
        Discretization::new(&mesh, bc).unwrap()
    }

    #[test]
    fn layout_blocks_are_contiguous() {
        let d = disc(3, BoundaryKind::Closed);
        let l = &d.layout;
        let mut end = 0;
        for f in Field::ALL {
            assert_eq!(l.offset(f), end);
            end += l.block_len(f);
        }
        assert_eq!(l.multiplier(), end);
        assert_eq!(l.len(), end + 1);
        // closed: only velocity boundary rows
        let masked: Vec<usize> = (0..l.len()).filter(|&i| l.is_dirichlet(i)).collect();
        assert!(masked.iter().all(|&i| i >= l.offset(Field::Ux) && i < l.offset(Field::Pressure)));
        let p = disc(3, BoundaryKind::Periodic);
        assert!((0..p.layout.len()).all(|i| !p.layout.is_dirichlet(i)));
        let th = disc(3, BoundaryKind::Thermal { theta_b: 0.6 });
        assert_eq!(th.layout.block(Field::Theta).filter(|&i| th.layout.is_dirichlet(i)).count(), 12);
    }

    #[test]
    fn pure_phase_fixed_points_have_zero_residual() {
        let p = params(GradientModel::Isotropic { gamma: 0.05 });
        for bc in [BoundaryKind::Periodic, BoundaryKind::Closed, BoundaryKind::Thermal { theta_b: 1.0 }] {
            let d = disc(4, bc);
            for phase in [0.0, 1.0] {
                let s = d.initial_state(0.0, |_| phase, |_| 1.0, |_| [0.0, 0.0]).unwrap();
                let sources = Sources::default();
                let ctx = StepContext {
                    disc: &d,
                    params: &p,
                    sources: &sources,
                    prev: &s,
                    tau: 1e-3,
                };
                let r = assemble_residual(&ctx, &s.values).unwrap();
                assert!(r.iter().all(|v| v.abs() < 1e-12), "{bc:?} {phase}");
            }
        }
    }

    fn random_state(d: &Discretization, rng: &mut ChaCha8Rng, t: f64) -> SystemState {
        let mut v: Vec<f64> = (0..d.layout.len()).map(|_| rng.gen_range(-0.5..0.5)).collect();
        for i in d.layout.block(Field::Phi) {
            v[i] = rng.gen_range(-0.2..1.2);
        }
        for i in d.layout.block(Field::Theta) {
            v[i] = rng.gen_range(0.5..1.5);
        }
        d.impose_boundary_values(&mut v);
        SystemState { t, values: v }
    }

    fn fd_check(model: GradientModel, bc: BoundaryKind, sources: Sources) {
        let p = params(model);
        let d = disc(2, bc);
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let prev = random_state(&d, &mut rng, 0.3);
        let guess = random_state(&d, &mut rng, 0.3);
        let ctx = StepContext {
            disc: &d,
            params: &p,
            sources: &sources,
            prev: &prev,
            tau: 0.01,
        };
        let jac = assemble_jacobian(&ctx, &guess.values).unwrap();
        let eps = 1e-6;
        for _ in 0..10 {
            let mut dir: Vec<f64> = (0..d.layout.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            for (i, v) in dir.iter_mut().enumerate() {
                if d.layout.is_dirichlet(i) {
                    *v = 0.0;
                }
            }
            let plus: Vec<f64> = guess.values.iter().zip(&dir).map(|(x, v)| x + eps * v).collect();
            let minus: Vec<f64> = guess.values.iter().zip(&dir).map(|(x, v)| x - eps * v).collect();
            let rp = assemble_residual(&ctx, &plus).unwrap();
            let rm = assemble_residual(&ctx, &minus).unwrap();
            let jd = jac.matvec(&dir);
            let mut num = 0.0;
            let mut den = 0.0;
            for i in 0..jd.len() {
                if d.layout.is_dirichlet(i) {
                    continue;
                }
                let fd = (rp[i] - rm[i]) / (2.0 * eps);
                num += (jd[i] - fd).powi(2);
                den += jd[i].powi(2);
            }
            assert!(num.sqrt() <= 1e-5 * den.sqrt(), "relative error {}", num.sqrt() / den.sqrt());
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let q = Sources {
            heat: HeatSource::Constant(0.7),
            force: BodyForce::Constant([0.3, -0.2]),
        };
        fd_check(GradientModel::Isotropic { gamma: 0.3 }, BoundaryKind::Periodic, Sources::default());
        fd_check(GradientModel::Isotropic { gamma: 0.3 }, BoundaryKind::Closed, q);
        fd_check(GradientModel::Anisotropic { gamma0: 0.3, delta: 0.9 }, BoundaryKind::Periodic, q);
        fd_check(
            GradientModel::Anisotropic { gamma0: 0.3, delta: 0.9 },
            BoundaryKind::Thermal { theta_b: 0.8 },
            Sources::default(),
        );
    }

    #[test]
    fn multiplier_column_is_pressure_mass() {
        let p = params(GradientModel::Isotropic { gamma: 0.05 });
        let d = disc(3, BoundaryKind::Periodic);
        let s = d.initial_state(0.0, |_| 0.5, |_| 1.0, |_| [0.0, 0.0]).unwrap();
        let src = Sources::default();
        let ctx = StepContext {
            disc: &d,
            params: &p,
            sources: &src,
            prev: &s,
            tau: 0.1,
        };
        let j = assemble_jacobian(&ctx, &s.values).unwrap();
        let lam = d.layout.multiplier();
        let po = d.layout.offset(Field::Pressure);
        let total: f64 = d.pressure_mass().iter().sum();
        assert!((total - 1.0).abs() < 1e-14);
        for (i, &m) in d.pressure_mass().iter().enumerate() {
            assert!((j.get(po + i, lam) - m).abs() < 1e-15);
            assert!((j.get(lam, po + i) - m).abs() < 1e-15);
        }
    }

    #[test]
    fn theta_rows_sum_to_entropy_balance() {
        // with omega = 1 the theta rows add up to the entropy balance
        let p = params(GradientModel::Isotropic { gamma: 0.2 });
        let d = disc(3, BoundaryKind::Periodic);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let prev = random_state(&d, &mut rng, 0.0);
        let guess = random_state(&d, &mut rng, 0.0);
        let src = Sources {
            heat: HeatSource::Constant(0.4),
            force: BodyForce::Zero,
        };
        let tau = 0.05;
        let ctx = StepContext {
            disc: &d,
            params: &p,
            sources: &src,
            prev: &prev,
            tau,
        };
        let r = assemble_residual(&ctx, &guess.values).unwrap();
        let sum: f64 = r[d.layout.block(Field::Theta)].iter().sum();
        // independent oracle: pointwise terms through the public physics API
        let [ds, dh, q] = d
            .integrate(&guess.values, &prev.values, |pd| {
                let (n, o) = (&pd.new, &pd.old);
                let sn = crate::physics::entropy_density(n.val[0], n.grad[0], n.val[2], &p)?;
                let so = crate::physics::entropy_density(o.val[0], o.grad[0], o.val[2], &p)?;
                let du = n.sym_grad();
                let du2: f64 = du.iter().flatten().map(|v| v * v).sum();
                let eta = viscosity(o.val[0], &p).0;
                let th = n.val[2];
                let tho = o.val[2];
                let g2 = dot(n.grad[2], n.grad[2]);
                let dh = p.mobility / (th * tho) * n.val[1].powi(2)
                    + p.conductivity / (th * tho.powi(3)) * g2
                    + eta / th * du2;
                Ok([(sn - so) / tau, dh, 0.4 / th])
            })
            .unwrap();
        let expect = ds - dh - q;
        assert!((sum - expect).abs() <= 1e-11 * (1.0 + expect.abs()), "{sum} vs {expect}");
    }

    #[test]
    fn divergence_rows_vanish_for_constant_velocity() {
        let p = params(GradientModel::Isotropic { gamma: 0.05 });
        let d = disc(3, BoundaryKind::Periodic);
        let s = d.initial_state(0.0, |_| 0.0, |_| 1.0, |_| [0.3, -1.2]).unwrap();
        let src = Sources::default();
        let ctx = StepContext {
            disc: &d,
            params: &p,
            sources: &src,
            prev: &s,
            tau: 0.1,
        };
        let r = assemble_residual(&ctx, &s.values).unwrap();
        assert!(r[d.layout.block(Field::Pressure)].iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn positivity_violation_is_reported() {
        let p = params(GradientModel::Isotropic { gamma: 0.05 });
        let d = disc(2, BoundaryKind::Periodic);
        let s = d.initial_state(0.0, |_| 0.0, |_| 1.0, |_| [0.0, 0.0]).unwrap();
        let mut bad = s.values.clone();
        bad[d.layout.offset(Field::Theta)] = -0.5;
        let src = Sources::default();
        let ctx = StepContext {
            disc: &d,
            params: &p,
            sources: &src,
            prev: &s,
            tau: 0.1,
        };
        assert!(matches!(
            assemble_residual(&ctx, &bad),
            Err(Error::PositivityViolation { .. })
        ));
    }

    #[test]
    fn skew_form_properties() {
        let mesh = Arc::new(build_structured_mesh(1.0, 1.0, 4, 4).unwrap());
        let sp = vector_p2(&mesh, Constraint::Free, true).unwrap();
        let tau = std::f64::consts::TAU;
        let w = interpolate_vector(&sp, |x| [(tau * x[1]).sin(), (tau * x[0]).cos()]).unwrap();
        let u = interpolate_vector(&sp, |x| [(tau * x[0]).cos(), (tau * (x[0] + x[1])).sin()]).unwrap();
        let v = interpolate_vector(&sp, |x| [(tau * x[1]).cos() * 2.0, 1.0]).unwrap();
        assert!(skew_convection(&w, &v, &v).unwrap().abs() < 1e-14);
        let a = skew_convection(&w, &u, &v).unwrap();
        let b = skew_convection(&w, &v, &u).unwrap();
        assert!((a + b).abs() < 1e-14);
    }

    #[test]
    fn skew_form_dense_oracle() {
        // constant w = (1, 0), u = (y, 0), v = (x, 0) on the unit square:
        // 1/2 <d_x y, x> - 1/2 <d_x x, y> = -1/2 * int y = -1/4
        let mesh = Arc::new(build_structured_mesh(1.0, 1.0, 4, 4).unwrap());
        let sp = vector_p2(&mesh, Constraint::Free, false).unwrap();
        let w = interpolate_vector(&sp, |_| [1.0, 0.0]).unwrap();
        let u = interpolate_vector(&sp, |x| [x[1], 0.0]).unwrap();
        let v = interpolate_vector(&sp, |x| [x[0], 0.0]).unwrap();
        let oracle = {
            // midpoint rule on a 400x400 grid; the integrand -y/2 is affine
            let m = 400;
            let h = 1.0 / m as f64;
            let mut s = 0.0;
            for i in 0..m {
                for j in 0..m {
                    let (x, y) = ((i as f64 + 0.5) * h, (j as f64 + 0.5) * h);
                    s += (0.5 * 0.0 * x - 0.5 * y) * h * h;
                }
            }
            s
        };
        assert!((skew_convection(&w, &u, &v).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn laser_source_values() {
        let l = LaserSource::default();
        let p0 = l.position(0.0);
        assert!((p0[0] - 4.0).abs() < 1e-14 && (p0[1] - 2.5).abs() < 1e-14);
        let peak = l.eval(p0, 0.0);
        assert!((peak - 200.0 * 0.5 * (1.0 + 2f64.tanh())).abs() < 1e-12);
        assert!((peak - 196.4).abs() < 0.05);
        assert_eq!(l.eval([1.0, 1.0], 1.25), 0.0);
        assert_eq!(l.eval([1.0, 1.0], 1.75), -1.0);
        assert_eq!(l.eval([1.0, 1.0], 2.5), 0.0);
    }
}
