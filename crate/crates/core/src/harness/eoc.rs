//! Experimental orders of convergence against the next finer level.
//!
//! Spatial studies use `nx = ny = 2^k` cells on nested meshes and prolongate
//! each coarse solution onto its refinement. Temporal studies use
//! `tau_k = 2^-k tau_0` on one mesh and compare step `n` of level `k` with
//! step `2n` of level `k + 1`. All levels advance in lockstep so only the
//! current states are held in memory.

use std::fmt::Write as _;

use rayon::prelude::*;

use super::scenario::ScenarioConfig;
use crate::assembly::{Discretization, Field, SystemState};
use crate::dynamics::{advance, StepSetup};
use crate::error::{Error, Result};
use crate::mesh::refine_uniform;
use crate::solver::{LinearSolver, NewtonConfig};
use crate::spaces::{prolongate, FeFunction};

pub const QUANTITY_COUNT: usize = 7;

/// Column labels in report order.
pub const QUANTITIES: [&str; QUANTITY_COUNT] = ["grad_phi", "mu", "theta", "grad_theta", "u", "grad_u", "p"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeNorm {
    /// Maximum over all time levels, the initial one included.
    Max,
    /// `sqrt(tau sum_{n>=1} e_n^2)`.
    L2,
}

pub const TIME_NORMS: [TimeNorm; QUANTITY_COUNT] = [
    TimeNorm::Max,
    TimeNorm::L2,
    TimeNorm::Max,
    TimeNorm::L2,
    TimeNorm::Max,
    TimeNorm::L2,
    TimeNorm::L2,
];

/// `log2(coarse / fine)`, defined only for two positive errors.
pub fn rate(coarse: f64, fine: f64) -> Option<f64> {
    (coarse > 0.0 && fine > 0.0 && coarse.is_finite() && fine.is_finite()).then(|| (coarse / fine).log2())
}

/// Rates for consecutive rows; the first row has none.
pub fn eoc_rates(errors: &[[f64; QUANTITY_COUNT]]) -> Vec<[Option<f64>; QUANTITY_COUNT]> {
    let mut out = vec![[None; QUANTITY_COUNT]; errors.len()];
    for i in 1..errors.len() {
        for q in 0..QUANTITY_COUNT {
            out[i][q] = rate(errors[i - 1][q], errors[i][q]);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EocKind {
    Space,
    Time,
}

impl EocKind {
    fn name(self) -> &'static str {
        match self {
            Self::Space => "space",
            Self::Time => "time",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EocReport {
    pub kind: EocKind,
    pub levels: Vec<u32>,
    pub errors: Vec<[f64; QUANTITY_COUNT]>,
}

impl EocReport {
    pub fn new(kind: EocKind, levels: Vec<u32>, errors: Vec<[f64; QUANTITY_COUNT]>) -> Result<Self> {
        if levels.len() != errors.len() {
            return Err(Error::InvalidData(format!(
                "{} levels but {} error rows",
                levels.len(),
                errors.len()
            )));
        }
        if let Some(e) = errors.iter().flatten().find(|e| !(**e >= 0.0)) {
            return Err(Error::InvalidData(format!("errors must be nonnegative, got {e}")));
        }
        Ok(Self { kind, levels, errors })
    }

    pub fn rates(&self) -> Vec<[Option<f64>; QUANTITY_COUNT]> {
        eoc_rates(&self.errors)
    }

    /// Rate of quantity `q` between the last two rows.
    pub fn finest_rate(&self, q: usize) -> Option<f64> {
        self.rates().last().and_then(|r| r[q])
    }

    /// Errors in shortest round-trip form, so `from_csv` restores them
    /// exactly.
    pub fn to_csv(&self) -> String {
        let mut s = format!("# eoc {}\nk", self.kind.name());
        for q in QUANTITIES {
            let _ = write!(s, ",err_{q},eoc_{q}");
        }
        s.push('\n');
        for ((k, e), r) in self.levels.iter().zip(&self.errors).zip(self.rates()) {
            let _ = write!(s, "{k}");
            for q in 0..QUANTITY_COUNT {
                let _ = write!(s, ",{},{}", e[q], r[q].map_or(String::new(), |v| v.to_string()));
            }
            s.push('\n');
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let bad = |m: &str| Error::InvalidData(format!("eoc csv: {m}"));
        let mut lines = text.lines();
        let kind = match lines.next().map(str::trim) {
            Some("# eoc space") => EocKind::Space,
            Some("# eoc time") => EocKind::Time,
            _ => return Err(bad("missing `# eoc` header")),
        };
        lines.next().ok_or_else(|| bad("missing column header"))?;
        let (mut levels, mut errors) = (Vec::new(), Vec::new());
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != 1 + 2 * QUANTITY_COUNT {
                return Err(bad(&format!("expected {} columns in `{line}`", 1 + 2 * QUANTITY_COUNT)));
            }
            levels.push(cells[0].parse().map_err(|_| bad(&format!("bad level `{}`", cells[0])))?);
            let mut e = [0.0; QUANTITY_COUNT];
            for (q, v) in e.iter_mut().enumerate() {
                let c = cells[1 + 2 * q];
                *v = c.parse().map_err(|_| bad(&format!("bad error `{c}`")))?;
            }
            errors.push(e);
        }
        Self::new(kind, levels, errors)
    }

    /// Aligned table: errors to 3 significant digits, rates to 2 decimals.
    pub fn to_table(&self) -> String {
        let mut header = vec!["k".to_string()];
        for q in QUANTITIES {
            header.push(format!("err({q})"));
            header.push("eoc".into());
        }
        let mut rows = vec![header];
        for ((k, e), r) in self.levels.iter().zip(&self.errors).zip(self.rates()) {
            let mut row = vec![k.to_string()];
            for q in 0..QUANTITY_COUNT {
                row.push(format_error(e[q]));
                row.push(format_rate(r[q]));
            }
            rows.push(row);
        }
        let widths: Vec<usize> = (0..rows[0].len())
            .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0))
            .collect();
        let mut s = String::new();
        for row in &rows {
            let cells: Vec<String> = row.iter().zip(&widths).map(|(c, w)| format!("{c:>w$}")).collect();
            s.push_str(cells.join("  ").trim_end());
            s.push('\n');
        }
        s
    }
}

pub fn format_error(e: f64) -> String {
    format!("{e:.2e}")
}

pub fn format_rate(r: Option<f64>) -> String {
    r.map_or_else(|| "--".to_string(), |v| format!("{v:.2}"))
}

/// Report plus the smallest nodal temperature seen in any level.
#[derive(Debug, Clone)]
pub struct EocOutcome {
    pub report: EocReport,
    pub min_theta: f64,
}

/// Norms of the seven tracked differences between a coarse and a fine
/// solution, the coarse one prolongated first when the meshes differ.
pub fn level_differences(
    coarse: (&Discretization, &SystemState),
    fine: (&Discretization, &SystemState),
) -> Result<[f64; QUANTITY_COUNT]> {
    let same_mesh = std::sync::Arc::ptr_eq(&coarse.0.mesh, &fine.0.mesh);
    let lift = |c: FeFunction, f: &FeFunction| -> Result<FeFunction> {
        let c = if same_mesh {
            FeFunction {
                space: std::sync::Arc::clone(&f.space),
                coefficients: c.coefficients,
            }
        } else {
            prolongate(&c, &f.space)?
        };
        c.sub(f)
    };
    let diff = |field: Field| lift(coarse.0.field(coarse.1, field), &fine.0.field(fine.1, field));
    let phi = diff(Field::Phi)?;
    let mu = diff(Field::Mu)?;
    let theta = diff(Field::Theta)?;
    let p = diff(Field::Pressure)?;
    let u = lift(coarse.0.velocity(coarse.1), &fine.0.velocity(fine.1))?;
    Ok([
        phi.norm_h1(),
        mu.norm_l2(),
        theta.norm_l2(),
        theta.norm_h1(),
        u.norm_l2(),
        u.norm_h1(),
        p.norm_l2(),
    ])
}

struct Level {
    disc: usize,
    tau: f64,
    /// Finest-level steps per own step.
    stride: usize,
    state: SystemState,
    step: usize,
    linear: LinearSolver,
}

fn step_count(t_end: f64, tau: f64) -> Result<usize> {
    let n = t_end / tau;
    let r = n.round();
    if (n - r).abs() > 1e-8 * n.max(1.0) {
        return Err(Error::InvalidArgument(format!("t_end {t_end} is not a multiple of tau {tau}")));
    }
    Ok(r as usize)
}

fn run_lockstep(
    base: &ScenarioConfig,
    kind: EocKind,
    ks: Vec<u32>,
    discs: Vec<Discretization>,
    mut levels: Vec<Level>,
) -> Result<EocOutcome> {
    let finest_tau = levels.last().map(|l| l.tau).unwrap_or(base.tau);
    let ticks = step_count(base.t_end, finest_tau)?;
    for l in &levels {
        step_count(base.t_end, l.tau)?;
    }
    let pairs = levels.len() - 1;
    let mut max_err = vec![[0.0f64; QUANTITY_COUNT]; pairs];
    let mut sum_err = vec![[0.0f64; QUANTITY_COUNT]; pairs];
    let newton = NewtonConfig::default();

    let mut min_theta = f64::INFINITY;
    for l in &levels {
        min_theta = min_theta.min(discs[l.disc].min_theta(&l.state.values));
    }
    for i in 0..pairs {
        let d = level_differences((&discs[levels[i].disc], &levels[i].state), (&discs[levels[i + 1].disc], &levels[i + 1].state))?;
        for q in 0..QUANTITY_COUNT {
            if TIME_NORMS[q] == TimeNorm::Max {
                max_err[i][q] = max_err[i][q].max(d[q]);
            }
        }
    }

    for tick in 1..=ticks {
        let stepped: Vec<Result<f64>> = levels
            .par_iter_mut()
            .filter(|l| tick % l.stride == 0)
            .map(|l| {
                let setup = StepSetup {
                    disc: &discs[l.disc],
                    params: &base.params,
                    sources: &base.sources,
                    tau: l.tau,
                    newton,
                };
                let n = l.step + 1;
                let (state, diag) = advance(&setup, &l.state, n, n as f64 * l.tau, &mut l.linear)?;
                l.state = state;
                l.step = n;
                Ok(diag.min_theta)
            })
            .collect();
        for r in stepped {
            min_theta = min_theta.min(r?);
        }
        for i in 0..pairs {
            if tick % levels[i].stride != 0 {
                continue;
            }
            let (c, f) = (&levels[i], &levels[i + 1]);
            let d = level_differences((&discs[c.disc], &c.state), (&discs[f.disc], &f.state))?;
            for q in 0..QUANTITY_COUNT {
                match TIME_NORMS[q] {
                    TimeNorm::Max => max_err[i][q] = max_err[i][q].max(d[q]),
                    TimeNorm::L2 => sum_err[i][q] += c.tau * d[q] * d[q],
                }
            }
        }
        if tick % 16 == 0 || tick == ticks {
            log::info!("eoc {}: tick {tick}/{ticks}", kind.name());
        }
    }

    let errors = (0..pairs)
        .map(|i| {
            std::array::from_fn(|q| match TIME_NORMS[q] {
                TimeNorm::Max => max_err[i][q],
                TimeNorm::L2 => sum_err[i][q].sqrt(),
            })
        })
        .collect();
    Ok(EocOutcome {
        report: EocReport::new(kind, ks, errors)?,
        min_theta,
    })
}

fn check_levels(k_min: u32, k_max: u32) -> Result<()> {
    if k_min > k_max || k_max >= 30 {
        return Err(Error::InvalidArgument(format!("invalid level range {k_min}..{k_max}")));
    }
    Ok(())
}

/// Errors for `k = k_min..=k_max` on `2^k x 2^k` meshes; level `k_max + 1`
/// is solved as the reference.
pub fn eoc_spatial(base: &ScenarioConfig, k_min: u32, k_max: u32, tau: f64) -> Result<EocOutcome> {
    check_levels(k_min, k_max)?;
    base.validate()?;
    let n0 = 1usize << k_min;
    let mut mesh = std::sync::Arc::new(crate::mesh::build_structured_mesh(base.lx, base.ly, n0, n0)?);
    let mut discs = Vec::new();
    let mut levels = Vec::new();
    for k in k_min..=k_max + 1 {
        if k > k_min {
            mesh = std::sync::Arc::new(refine_uniform(&mesh));
        }
        let disc = Discretization::new(&mesh, base.bc)?;
        levels.push(Level {
            disc: discs.len(),
            tau,
            stride: 1,
            state: base.initial_state(&disc)?,
            step: 0,
            linear: LinearSolver::new(),
        });
        discs.push(disc);
    }
    let cfg = ScenarioConfig { tau, ..base.clone() };
    run_lockstep(&cfg, EocKind::Space, (k_min..=k_max).collect(), discs, levels)
}

/// Errors for `tau_k = 2^-k tau0`, `k = k_min..=k_max`, on an `nx x nx`
/// mesh; level `k_max + 1` is solved as the reference.
pub fn eoc_temporal(base: &ScenarioConfig, nx: usize, k_min: u32, k_max: u32, tau0: f64) -> Result<EocOutcome> {
    check_levels(k_min, k_max)?;
    let cfg = ScenarioConfig {
        nx,
        ny: nx,
        ..base.clone()
    };
    let disc = cfg.discretization()?;
    let initial = cfg.initial_state(&disc)?;
    let levels = (k_min..=k_max + 1)
        .map(|k| Level {
            disc: 0,
            tau: tau0 / (1u64 << k) as f64,
            stride: 1 << (k_max + 1 - k),
            state: initial.clone(),
            step: 0,
            linear: LinearSolver::new(),
        })
        .collect();
    run_lockstep(&cfg, EocKind::Time, (k_min..=k_max).collect(), vec![disc], levels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::scenario::scenario_convergence;

    #[test]
    fn rate_definition() {
        assert_eq!(rate(4.0, 1.0), Some(2.0));
        assert_eq!(rate(0.0, 1.0), None);
        assert_eq!(rate(1.0, 0.0), None);
        assert!((rate(8.94e-1, 4.98e-1).unwrap() - 0.844).abs() < 1e-3);
    }

    #[test]
    fn report_text_and_csv() {
        let e1 = [8.94e-1, 9.84e-3, 2.59e-2, 3.70e-1, 9.55e-3, 1.39e-1, 4.92e-3];
        let e2 = [4.98e-1, 3.12e-3, 7.43e-3, 2.05e-1, 1.74e-3, 6.10e-2, 0.0];
        let r = EocReport::new(EocKind::Space, vec![4, 5], vec![e1, e2]).unwrap();
        let table = r.to_table();
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[1].contains("8.94e-1") && lines[1].contains("--"));
        assert!(lines[2].contains("0.84") && lines[2].contains("1.80"));
        assert!(lines[2].trim_end().ends_with("--"));
        let back = EocReport::from_csv(&r.to_csv()).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.to_table(), table);
        assert!(EocReport::new(EocKind::Time, vec![1], vec![[-1.0; 7]]).is_err());
    }

    #[test]
    fn zero_field_gives_zero_errors() {
        let mut cfg = scenario_convergence();
        cfg.initial = crate::harness::scenario::InitialCondition::Uniform { phi: 0.0, theta: 1.0 };
        cfg.t_end = 0.0125;
        let out = eoc_temporal(&cfg, 2, 3, 4, 0.1).unwrap();
        assert_eq!(out.report.levels, vec![3, 4]);
        for row in &out.report.errors {
            for e in row {
                assert!(*e < 1e-12, "{e}");
            }
        }
        assert!(out.report.rates().iter().flatten().all(|r| r.is_none()));
    }

    #[test]
    fn identical_levels_compare_to_zero() {
        let cfg = scenario_convergence();
        let disc = crate::harness::scenario::ScenarioConfig { nx: 4, ny: 4, ..cfg.clone() }
            .discretization()
            .unwrap();
        let s = cfg.initial_state(&disc).unwrap();
        let d = level_differences((&disc, &s), (&disc, &s)).unwrap();
        assert_eq!(d, [0.0; 7]);
    }

    #[test]
    fn spatial_initial_error_is_interpolation_error() {
        let mut cfg = scenario_convergence();
        cfg.t_end = 0.0;
        let out = eoc_spatial(&cfg, 2, 3, 0.01).unwrap();
        let e = &out.report.errors;
        assert!(e[0][2] > e[1][2] && e[1][2] > 0.0);
        // L2-in-time group is empty without steps
        assert_eq!(e[0][1], 0.0);
    }
}
