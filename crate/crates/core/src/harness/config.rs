//! Flat `key = value` configuration files.
//!
//! ```text
//! scenario = melt
//! [mesh]
//! nx = 32
//! [time]
//! t_end = 0.2   # overrides the preset
//! ```
//!
//! A named scenario supplies every value not given in the file; `custom`
//! requires all keys. Unknown sections and keys are rejected.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::scenario::{preset, InitialCondition, ScenarioConfig, ScenarioKind};
use crate::assembly::{BodyForce, BoundaryKind, HeatSource, LaserSource, Sources};
use crate::error::{Error, Result};
use crate::physics::{GradientModel, MaterialParams};

const SECTIONS: [&str; 7] = ["mesh", "time", "material", "bc", "sources", "initial", "output"];

pub fn load(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path)?;
    parse(&text, path)
}

pub fn save(cfg: &ScenarioConfig, path: &Path) -> Result<()> {
    std::fs::write(path, serialize(cfg))?;
    Ok(())
}

/// `path` only labels error messages.
pub fn parse(text: &str, path: &Path) -> Result<ScenarioConfig> {
    let mut e = Entries::read(text, path)?;
    let cfg = build(&mut e)?;
    e.finish()?;
    cfg.validate().map_err(|err| e.error(0, err.to_string()))?;
    Ok(cfg)
}

struct Entries {
    path: PathBuf,
    map: BTreeMap<String, (String, usize)>,
    used: BTreeSet<String>,
}

impl Entries {
    fn error(&self, line: usize, message: impl Into<String>) -> Error {
        Error::Config {
            path: self.path.clone(),
            line,
            message: message.into(),
        }
    }

    fn read(text: &str, path: &Path) -> Result<Self> {
        let mut e = Entries {
            path: path.to_path_buf(),
            map: BTreeMap::new(),
            used: BTreeSet::new(),
        };
        let mut section: Option<&str> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(name) = content.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                let name = name.trim();
                match SECTIONS.iter().find(|&&s| s == name) {
                    Some(s) => section = Some(s),
                    None => return Err(e.error(line, format!("unknown section [{name}]"))),
                }
                continue;
            }
            let Some((k, v)) = content.split_once('=') else {
                return Err(e.error(line, format!("expected `key = value`, got `{content}`")));
            };
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(e.error(line, "empty key"));
            }
            let full = match section {
                Some(s) => format!("{s}.{k}"),
                None => k.to_string(),
            };
            if e.map.insert(full.clone(), (v.to_string(), line)).is_some() {
                return Err(e.error(line, format!("duplicate key `{full}`")));
            }
        }
        Ok(e)
    }

    fn raw(&mut self, key: &str) -> Option<(String, usize)> {
        let hit = self.map.get(key).cloned();
        if hit.is_some() {
            self.used.insert(key.to_string());
        }
        hit
    }

    fn value<T: FromStr>(&mut self, key: &str, base: Option<T>) -> Result<T> {
        match self.raw(key) {
            Some((v, line)) => v
                .parse()
                .map_err(|_| self.error(line, format!("cannot parse `{v}` for `{key}`"))),
            None => base.ok_or_else(|| self.error(0, format!("missing key `{key}`"))),
        }
    }

    fn word(&mut self, key: &str, base: Option<&str>) -> Result<(String, usize)> {
        match self.raw(key) {
            Some(hit) => Ok(hit),
            None => base
                .map(|b| (b.to_string(), 0))
                .ok_or_else(|| self.error(0, format!("missing key `{key}`"))),
        }
    }

    fn finish(&self) -> Result<()> {
        match self.map.iter().find(|(k, _)| !self.used.contains(*k)) {
            Some((k, (_, line))) => Err(self.error(*line, format!("unknown key `{k}`"))),
            None => Ok(()),
        }
    }
}

fn gradient_name(m: &GradientModel) -> &'static str {
    match m {
        GradientModel::Isotropic { .. } => "isotropic",
        GradientModel::Anisotropic { .. } => "anisotropic",
    }
}

fn bc_name(bc: &BoundaryKind) -> &'static str {
    match bc {
        BoundaryKind::Periodic => "periodic",
        BoundaryKind::Closed => "closed",
        BoundaryKind::Thermal { .. } => "thermal",
    }
}

fn heat_name(h: &HeatSource) -> &'static str {
    match h {
        HeatSource::Zero => "zero",
        HeatSource::Constant(_) => "constant",
        HeatSource::Laser(_) => "laser",
    }
}

fn force_name(b: &BodyForce) -> &'static str {
    match b {
        BodyForce::Zero => "zero",
        BodyForce::Constant(_) => "constant",
    }
}

fn initial_name(ic: &InitialCondition) -> &'static str {
    match ic {
        InitialCondition::TwoGrains => "two_grains",
        InitialCondition::LaserSpot => "laser_spot",
        InitialCondition::Seed { .. } => "seed",
        InitialCondition::Uniform { .. } => "uniform",
    }
}

fn laser_fields(l: &LaserSource) -> [(&'static str, f64); 11] {
    [
        ("laser_peak", l.peak),
        ("laser_on_until", l.on_until),
        ("laser_cooling", l.cooling),
        ("laser_cool_from", l.cool_from),
        ("laser_cool_until", l.cool_until),
        ("laser_center_x", l.path_center[0]),
        ("laser_center_y", l.path_center[1]),
        ("laser_path_radius", l.path_radius),
        ("laser_spot_scale", l.spot_scale),
        ("laser_spot_radius", l.spot_radius),
        ("laser_spot_width", l.spot_width),
    ]
}

fn build(e: &mut Entries) -> Result<ScenarioConfig> {
    let (name, line) = e.word("scenario", None)?;
    let kind = ScenarioKind::from_name(&name).ok_or_else(|| e.error(line, format!("unknown scenario `{name}`")))?;
    let base = preset(kind);
    let b = base.as_ref();

    let lx = e.value("mesh.lx", b.map(|c| c.lx))?;
    let ly = e.value("mesh.ly", b.map(|c| c.ly))?;
    let nx = e.value("mesh.nx", b.map(|c| c.nx))?;
    let ny = e.value("mesh.ny", b.map(|c| c.ny))?;
    let tau = e.value("time.tau", b.map(|c| c.tau))?;
    let t_end = e.value("time.t_end", b.map(|c| c.t_end))?;

    let bp = b.map(|c| c.params);
    let (gm, line) = e.word("material.gradient_model", bp.as_ref().map(|p| gradient_name(&p.gradient_model)))?;
    let base_gm = bp.map(|p| p.gradient_model);
    let gradient_model = match gm.as_str() {
        "isotropic" => {
            let g = match base_gm {
                Some(GradientModel::Isotropic { gamma }) => Some(gamma),
                _ => None,
            };
            GradientModel::Isotropic {
                gamma: e.value("material.gamma", g)?,
            }
        }
        "anisotropic" => {
            let (g0, d) = match base_gm {
                Some(GradientModel::Anisotropic { gamma0, delta }) => (Some(gamma0), Some(delta)),
                _ => (None, None),
            };
            GradientModel::Anisotropic {
                gamma0: e.value("material.gamma0", g0)?,
                delta: e.value("material.delta", d)?,
            }
        }
        other => return Err(e.error(line, format!("unknown gradient model `{other}`"))),
    };
    let params = MaterialParams {
        mobility: e.value("material.mobility", bp.map(|p| p.mobility))?,
        conductivity: e.value("material.conductivity", bp.map(|p| p.conductivity))?,
        eta_l: e.value("material.eta_l", bp.map(|p| p.eta_l))?,
        eta_s: e.value("material.eta_s", bp.map(|p| p.eta_s))?,
        theta_m: e.value("material.theta_m", bp.map(|p| p.theta_m))?,
        latent: e.value("material.latent", bp.map(|p| p.latent))?,
        h_pt: e.value("material.h_pt", bp.map(|p| p.h_pt))?,
        h_cf: e.value("material.h_cf", bp.map(|p| p.h_cf))?,
        c_vsh: e.value("material.c_vsh", bp.map(|p| p.c_vsh))?,
        gradient_model,
    };

    let (bck, line) = e.word("bc.kind", b.map(|c| bc_name(&c.bc)))?;
    let bc = match bck.as_str() {
        "periodic" => BoundaryKind::Periodic,
        "closed" => BoundaryKind::Closed,
        "thermal" => BoundaryKind::Thermal {
            theta_b: e.value("bc.theta_b", b.and_then(|c| c.bc.theta_b()))?,
        },
        other => return Err(e.error(line, format!("unknown boundary kind `{other}`"))),
    };

    let bs = b.map(|c| c.sources);
    let (hk, line) = e.word("sources.heat", bs.as_ref().map(|s| heat_name(&s.heat)))?;
    let heat = match hk.as_str() {
        "zero" => HeatSource::Zero,
        "constant" => {
            let q = match bs.map(|s| s.heat) {
                Some(HeatSource::Constant(q)) => Some(q),
                _ => None,
            };
            HeatSource::Constant(e.value("sources.heat_value", q)?)
        }
        "laser" => {
            let base_laser = match bs.map(|s| s.heat) {
                Some(HeatSource::Laser(l)) => Some(l),
                _ => None,
            };
            let mut v = [0.0; 11];
            let names = laser_fields(&LaserSource::default()).map(|(n, _)| n);
            for (i, n) in names.iter().enumerate() {
                let fallback = base_laser.map(|l| laser_fields(&l)[i].1);
                v[i] = e.value(&format!("sources.{n}"), fallback)?;
            }
            HeatSource::Laser(LaserSource {
                peak: v[0],
                on_until: v[1],
                cooling: v[2],
                cool_from: v[3],
                cool_until: v[4],
                path_center: [v[5], v[6]],
                path_radius: v[7],
                spot_scale: v[8],
                spot_radius: v[9],
                spot_width: v[10],
            })
        }
        other => return Err(e.error(line, format!("unknown heat source `{other}`"))),
    };
    let (fk, line) = e.word("sources.force", bs.as_ref().map(|s| force_name(&s.force)))?;
    let force = match fk.as_str() {
        "zero" => BodyForce::Zero,
        "constant" => {
            let f = match bs.map(|s| s.force) {
                Some(BodyForce::Constant(f)) => [Some(f[0]), Some(f[1])],
                _ => [None, None],
            };
            BodyForce::Constant([e.value("sources.force_x", f[0])?, e.value("sources.force_y", f[1])?])
        }
        other => return Err(e.error(line, format!("unknown body force `{other}`"))),
    };

    let bi = b.map(|c| c.initial);
    let (ik, line) = e.word("initial.kind", bi.as_ref().map(initial_name))?;
    let initial = match ik.as_str() {
        "two_grains" => InitialCondition::TwoGrains,
        "laser_spot" => InitialCondition::LaserSpot,
        "seed" => {
            let (r, t) = match bi {
                Some(InitialCondition::Seed { radius, theta_far }) => (Some(radius), Some(theta_far)),
                _ => (None, None),
            };
            InitialCondition::Seed {
                radius: e.value("initial.radius", r)?,
                theta_far: e.value("initial.theta_far", t)?,
            }
        }
        "uniform" => {
            let (p, t) = match bi {
                Some(InitialCondition::Uniform { phi, theta }) => (Some(phi), Some(theta)),
                _ => (None, None),
            };
            InitialCondition::Uniform {
                phi: e.value("initial.phi", p)?,
                theta: e.value("initial.theta", t)?,
            }
        }
        other => return Err(e.error(line, format!("unknown initial condition `{other}`"))),
    };

    let snapshot_stride = e.value("output.snapshot_stride", b.map(|c| c.snapshot_stride))?;
    let out_dir = match e.raw("output.out_dir") {
        Some((v, _)) => PathBuf::from(v),
        None => b
            .map(|c| c.out_dir.clone())
            .ok_or_else(|| e.error(0, "missing key `output.out_dir`"))?,
    };

    Ok(ScenarioConfig {
        scenario: kind,
        lx,
        ly,
        nx,
        ny,
        tau,
        t_end,
        bc,
        params,
        sources: Sources { heat, force },
        initial,
        snapshot_stride,
        out_dir,
    })
}

/// Writes every field; `parse(serialize(c)) == c`.
pub fn serialize(cfg: &ScenarioConfig) -> String {
    let mut s = String::new();
    let kv = |s: &mut String, k: &str, v: &dyn std::fmt::Display| {
        let _ = writeln!(s, "{k} = {v}");
    };
    kv(&mut s, "scenario", &cfg.scenario.name());

    s.push_str("\n[mesh]\n");
    kv(&mut s, "lx", &cfg.lx);
    kv(&mut s, "ly", &cfg.ly);
    kv(&mut s, "nx", &cfg.nx);
    kv(&mut s, "ny", &cfg.ny);

    s.push_str("\n[time]\n");
    kv(&mut s, "tau", &cfg.tau);
    kv(&mut s, "t_end", &cfg.t_end);

    let p = &cfg.params;
    s.push_str("\n[material]\n");
    for (k, v) in [
        ("mobility", p.mobility),
        ("conductivity", p.conductivity),
        ("eta_l", p.eta_l),
        ("eta_s", p.eta_s),
        ("theta_m", p.theta_m),
        ("latent", p.latent),
        ("h_pt", p.h_pt),
        ("h_cf", p.h_cf),
        ("c_vsh", p.c_vsh),
    ] {
        kv(&mut s, k, &v);
    }
    kv(&mut s, "gradient_model", &gradient_name(&p.gradient_model));
    match p.gradient_model {
        GradientModel::Isotropic { gamma } => kv(&mut s, "gamma", &gamma),
        GradientModel::Anisotropic { gamma0, delta } => {
            kv(&mut s, "gamma0", &gamma0);
            kv(&mut s, "delta", &delta);
        }
    }

    s.push_str("\n[bc]\n");
    kv(&mut s, "kind", &bc_name(&cfg.bc));
    if let BoundaryKind::Thermal { theta_b } = cfg.bc {
        kv(&mut s, "theta_b", &theta_b);
    }

    s.push_str("\n[sources]\n");
    kv(&mut s, "heat", &heat_name(&cfg.sources.heat));
    match &cfg.sources.heat {
        HeatSource::Zero => {}
        HeatSource::Constant(q) => kv(&mut s, "heat_value", q),
        HeatSource::Laser(l) => {
            for (k, v) in laser_fields(l) {
                kv(&mut s, k, &v);
            }
        }
    }
    kv(&mut s, "force", &force_name(&cfg.sources.force));
    if let BodyForce::Constant(f) = cfg.sources.force {
        kv(&mut s, "force_x", &f[0]);
        kv(&mut s, "force_y", &f[1]);
    }

    s.push_str("\n[initial]\n");
    kv(&mut s, "kind", &initial_name(&cfg.initial));
    match cfg.initial {
        InitialCondition::Seed { radius, theta_far } => {
            kv(&mut s, "radius", &radius);
            kv(&mut s, "theta_far", &theta_far);
        }
        InitialCondition::Uniform { phi, theta } => {
            kv(&mut s, "phi", &phi);
            kv(&mut s, "theta", &theta);
        }
        InitialCondition::TwoGrains | InitialCondition::LaserSpot => {}
    }

    s.push_str("\n[output]\n");
    kv(&mut s, "snapshot_stride", &cfg.snapshot_stride);
    kv(&mut s, "out_dir", &cfg.out_dir.display());
    s
}
