//! Time stepping and the thermodynamic ledger of each step.

use crate::assembly::{Discretization, Field, Sources, StepContext, SystemState};
use crate::error::{Error, Result};
use crate::physics::{entropy_density, total_energy, viscosity, MaterialParams};
use crate::solver::{newton_solve, LinearSolver, NewtonConfig, NewtonReport, NonlinearProblem, SparseMatrix};

/// Per-step record of integrals and balance residuals.
#[derive(Debug, Clone, PartialEq)]
pub struct StepDiagnostics {
    pub step: usize,
    pub t: f64,
    pub entropy: f64,
    pub total_energy: f64,
    /// `E_tot - theta_b S`; NaN unless the boundary is thermal.
    pub exergy: f64,
    pub entropy_production: f64,
    pub energy_balance_residual: f64,
    pub entropy_balance_residual: f64,
    /// NaN unless the boundary is thermal.
    pub exergy_balance_residual: f64,
    pub min_theta: f64,
    pub newton: NewtonReport,
}

impl StepDiagnostics {
    /// Tolerance for the discrete balance identities.
    pub fn identity_tol(&self) -> f64 {
        1e-7 * (1.0 + self.total_energy.abs())
    }
}

/// `(S, E_tot)` of a state.
pub fn totals(disc: &Discretization, state: &SystemState, params: &MaterialParams) -> Result<(f64, f64)> {
    let [s, e] = disc.integrate(&state.values, &state.values, |pd| {
        let n = &pd.new;
        Ok([
            entropy_density(n.val[0], n.grad[0], n.val[2], params)?,
            total_energy(n.val[0], n.val[2], n.u(), params)?,
        ])
    })?;
    Ok((s, e))
}

struct Balances {
    s_new: f64,
    s_old: f64,
    e_new: f64,
    e_old: f64,
    d_h: f64,
    q: f64,
    q_over_theta: f64,
    work: f64,
}

fn balances(
    disc: &Discretization,
    new: &SystemState,
    prev: &SystemState,
    params: &MaterialParams,
    sources: &Sources,
) -> Result<Balances> {
    let t_star = prev.t;
    let v = disc.integrate(&new.values, &prev.values, |pd| {
        let (n, o) = (&pd.new, &pd.old);
        let (th, tho) = (n.val[2], o.val[2]);
        if !(th > 0.0) {
            return Err(Error::Domain(th));
        }
        let du = n.sym_grad();
        let du2: f64 = du.iter().flatten().map(|x| x * x).sum();
        let g2 = n.grad[2][0].powi(2) + n.grad[2][1].powi(2);
        let eta = viscosity(o.val[0], params).0;
        let d_h = params.mobility / (th * tho) * n.val[1].powi(2)
            + params.conductivity / (th * tho.powi(3)) * g2
            + eta / th * du2;
        let q = sources.heat_at(pd.x, t_star);
        let b = sources.force_at(pd.x, t_star);
        let u = n.u();
        Ok([
            entropy_density(n.val[0], n.grad[0], th, params)?,
            entropy_density(o.val[0], o.grad[0], tho, params)?,
            total_energy(n.val[0], th, u, params)?,
            total_energy(o.val[0], tho, o.u(), params)?,
            d_h,
            q,
            q / th,
            b[0] * u[0] + b[1] * u[1],
        ])
    })?;
    Ok(Balances {
        s_new: v[0],
        s_old: v[1],
        e_new: v[2],
        e_old: v[3],
        d_h: v[4],
        q: v[5],
        q_over_theta: v[6],
        work: v[7],
    })
}

/// Entropy production of the step `prev -> new`.
pub fn entropy_production(
    disc: &Discretization,
    new: &SystemState,
    prev: &SystemState,
    params: &MaterialParams,
) -> Result<f64> {
    Ok(balances(disc, new, prev, params, &Sources::default())?.d_h)
}

/// `<d_tau e_tot, 1> - <Q, 1> - <b, u>`: the numerical dissipation.
pub fn energy_balance_residual(
    disc: &Discretization,
    new: &SystemState,
    prev: &SystemState,
    params: &MaterialParams,
    sources: &Sources,
    tau: f64,
) -> Result<f64> {
    let b = balances(disc, new, prev, params, sources)?;
    Ok((b.e_new - b.e_old) / tau - b.q - b.work)
}

/// `<d_tau s, 1> - D_h - <Q, 1/theta>`.
pub fn entropy_balance_residual(
    disc: &Discretization,
    new: &SystemState,
    prev: &SystemState,
    params: &MaterialParams,
    sources: &Sources,
    tau: f64,
) -> Result<f64> {
    let b = balances(disc, new, prev, params, sources)?;
    Ok((b.s_new - b.s_old) / tau - b.d_h - b.q_over_theta)
}

/// `<d_tau (e_tot - theta_b s), 1> + theta_b D_h - <Q, 1 - theta_b/theta> - <b, u>`.
pub fn exergy_balance_residual(
    disc: &Discretization,
    new: &SystemState,
    prev: &SystemState,
    params: &MaterialParams,
    sources: &Sources,
    tau: f64,
    theta_b: f64,
) -> Result<f64> {
    let b = balances(disc, new, prev, params, sources)?;
    Ok(exergy_residual_of(&b, tau, theta_b))
}

fn exergy_residual_of(b: &Balances, tau: f64, theta_b: f64) -> f64 {
    let x_new = b.e_new - theta_b * b.s_new;
    let x_old = b.e_old - theta_b * b.s_old;
    (x_new - x_old) / tau + theta_b * b.d_h - (b.q - theta_b * b.q_over_theta) - b.work
}

struct StepProblem<'a> {
    ctx: StepContext<'a>,
    theta_floor: f64,
}

impl NonlinearProblem for StepProblem<'_> {
    fn residual(&mut self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.ctx.assemble(x, false)?.0)
    }

    fn jacobian(&mut self, x: &[f64]) -> Result<SparseMatrix> {
        Ok(self.ctx.assemble(x, true)?.1.expect("jacobian requested"))
    }

    fn admissible(&self, x: &[f64]) -> bool {
        self.ctx.disc.min_theta(x) > self.theta_floor
    }
}

/// Everything that stays fixed during a run.
pub struct StepSetup<'a> {
    pub disc: &'a Discretization,
    pub params: &'a MaterialParams,
    pub sources: &'a Sources,
    pub tau: f64,
    pub newton: NewtonConfig,
}

/// One time step: Newton solve plus diagnostics. Ledger inequalities that
/// fail beyond tolerance are logged as warnings.
pub fn advance(
    setup: &StepSetup<'_>,
    state: &SystemState,
    step: usize,
    t_new: f64,
    linear: &mut LinearSolver,
) -> Result<(SystemState, StepDiagnostics)> {
    let disc = setup.disc;
    let ctx = StepContext {
        disc,
        params: setup.params,
        sources: setup.sources,
        prev: state,
        tau: setup.tau,
    };
    let mut problem = StepProblem {
        ctx,
        theta_floor: setup.newton.theta_floor_fraction * setup.params.theta_m,
    };
    let (values, report) = newton_solve(&mut problem, state.values.clone(), &setup.newton, linear)?;
    let new = SystemState { t: t_new, values };

    let b = balances(disc, &new, state, setup.params, setup.sources)?;
    let tau = setup.tau;
    let theta_b = disc.bc.theta_b();
    let diag = StepDiagnostics {
        step,
        t: t_new,
        entropy: b.s_new,
        total_energy: b.e_new,
        exergy: theta_b.map_or(f64::NAN, |tb| b.e_new - tb * b.s_new),
        entropy_production: b.d_h,
        energy_balance_residual: (b.e_new - b.e_old) / tau - b.q - b.work,
        entropy_balance_residual: (b.s_new - b.s_old) / tau - b.d_h - b.q_over_theta,
        exergy_balance_residual: theta_b.map_or(f64::NAN, |tb| exergy_residual_of(&b, tau, tb)),
        min_theta: disc.min_theta(&new.values),
        newton: report,
    };
    warn_on_violations(&diag, theta_b.is_some());
    Ok((new, diag))
}

fn warn_on_violations(d: &StepDiagnostics, thermal: bool) {
    let tol = d.identity_tol();
    if d.entropy_production < -tol {
        log::warn!("step {}: negative entropy production {:.3e}", d.step, d.entropy_production);
    }
    if thermal {
        if d.exergy_balance_residual > tol {
            log::warn!("step {}: exergy balance residual {:.3e} above {tol:.1e}", d.step, d.exergy_balance_residual);
        }
    } else {
        if d.entropy_balance_residual.abs() > tol {
            log::warn!("step {}: entropy balance residual {:.3e} above {tol:.1e}", d.step, d.entropy_balance_residual);
        }
        if d.energy_balance_residual > tol {
            log::warn!("step {}: energy balance residual {:.3e} above {tol:.1e}", d.step, d.energy_balance_residual);
        }
    }
}

/// Owns the state of a running simulation.
pub struct Simulation<'a> {
    pub setup: StepSetup<'a>,
    pub state: SystemState,
    pub step: usize,
    t0: f64,
    linear: LinearSolver,
}

impl<'a> Simulation<'a> {
    pub fn new(setup: StepSetup<'a>, initial: SystemState) -> Result<Self> {
        if !(setup.tau > 0.0 && setup.tau.is_finite()) {
            return Err(Error::InvalidArgument(format!("time step must be positive, got {}", setup.tau)));
        }
        let t0 = initial.t;
        Ok(Self {
            setup,
            state: initial,
            step: 0,
            t0,
            linear: LinearSolver::new(),
        })
    }

    pub fn time(&self) -> f64 {
        self.state.t
    }

    /// Number of steps needed to reach `t_end` from the initial time.
    pub fn steps_until(&self, t_end: f64) -> usize {
        ((t_end - self.t0) / self.setup.tau - 1e-9).ceil().max(0.0) as usize
    }

    pub fn step(&mut self) -> Result<StepDiagnostics> {
        let n = self.step + 1;
        let t_new = self.t0 + n as f64 * self.setup.tau;
        let (state, diag) = advance(&self.setup, &self.state, n, t_new, &mut self.linear)?;
        self.state = state;
        self.step = n;
        Ok(diag)
    }

    /// Steps until `t_end`, handing each new state and its diagnostics to
    /// `observe`.
    pub fn run_until(
        &mut self,
        t_end: f64,
        mut observe: impl FnMut(&SystemState, &StepDiagnostics) -> Result<()>,
    ) -> Result<()> {
        let total = self.steps_until(t_end);
        while self.step < total {
            let d = self.step()?;
            observe(&self.state, &d)?;
        }
        Ok(())
    }

    pub fn field(&self, f: Field) -> crate::spaces::FeFunction {
        self.setup.disc.field(&self.state, f)
    }
}
