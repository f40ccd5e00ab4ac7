//! Benchmark presets and the key-value run configuration.
//!
//! A config file is TOML restricted to dotted scalar/array keys, e.g.
//!
//! ```toml
//! benchmark = "pendulum"
//! seed = 3
//! cost.gamma = 0.0
//! regression.threshold = 0.05
//! init.center = [3.27, 1.92]
//! ```
//!
//! The `benchmark` key selects the preset; every other key overrides one
//! field of it. Unknown keys are rejected.

use std::f64::consts::PI;
use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use toml::Value;

use crate::error::{Error, Result};
use crate::plants::{
    CartpoleParams, DomainBox, DoublePendulumParams, LinearParams, LorenzParams, PendulumParams, PlantModel,
    PlantSpec, SimClock,
};
use crate::sol_loop::{DatabaseConfig, DerivativeSource, InitialState, SolConfig, SuccessCriterion};
use crate::sysid::RegressionConfig;
use crate::valuegrad::CostSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Benchmark {
    Pendulum,
    Lorenz,
    Cartpole,
    DoublePendulum,
    LinearOracle,
}

impl Benchmark {
    pub const ALL: [Benchmark; 5] = [
        Benchmark::Pendulum,
        Benchmark::Lorenz,
        Benchmark::Cartpole,
        Benchmark::DoublePendulum,
        Benchmark::LinearOracle,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Benchmark::Pendulum => "pendulum",
            Benchmark::Lorenz => "lorenz",
            Benchmark::Cartpole => "cartpole",
            Benchmark::DoublePendulum => "double_pendulum",
            Benchmark::LinearOracle => "linear_oracle",
        }
    }
}

impl fmt::Display for Benchmark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Benchmark {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Benchmark::ALL
            .into_iter()
            .find(|b| b.name() == s)
            .ok_or_else(|| Error::validation("benchmark", format!("unknown benchmark `{s}`")))
    }
}

fn vector(xs: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(xs)
}

fn diag(xs: &[f64]) -> DMatrix<f64> {
    DMatrix::from_diagonal(&vector(xs))
}

/// Unstable, controllable two-state plant used by the Riccati cross-check.
pub fn linear_oracle_plant() -> LinearParams {
    LinearParams {
        a: DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 2.0, -1.0]),
        b: DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
    }
}

/// The preset for `benchmark`.
pub fn preset(benchmark: Benchmark) -> SolConfig {
    let base = |plant: PlantSpec, basis: &str, q: &[f64], x_ref: Vec<f64>| {
        let n = plant.state_dim();
        SolConfig {
            basis: basis.to_string(),
            cost: CostSpec {
                q: diag(q),
                r: vector(&[1.0]),
                gamma: 0.0,
                x_ref: DVector::from_vec(x_ref),
            },
            clock: SimClock::default(),
            regression: RegressionConfig::default(),
            database: DatabaseConfig::default(),
            success: SuccessCriterion {
                tolerance: DVector::from_element(n, 0.05),
                hold: 1.0,
                periodic: vec![false; n],
            },
            init: InitialState {
                center: DVector::zeros(n),
                spread: DVector::zeros(n),
            },
            seed: 0,
            dither: 0.0,
            u_limit: None,
            p_substeps: 1,
            derivative: DerivativeSource::FiniteDifference,
            snapshot_period: 0.05,
            plant,
        }
    };

    match benchmark {
        Benchmark::Pendulum => {
            let plant = PlantSpec {
                model: PlantModel::Pendulum(PendulumParams::default()),
                domain: DomainBox::symmetric(&[2.0 * PI, 20.0]),
                t_max: 10.0,
            };
            let mut cfg = base(plant, "1,x,sin(x)", &[1.0, 1.0], vec![0.0, 0.0]);
            cfg.cost.r = vector(&[2.0]);
            cfg.init.center = vector(&[-0.51, -1.18]);
            cfg.dither = 0.05;
            cfg
        }
        Benchmark::Lorenz => {
            let plant = PlantSpec {
                model: PlantModel::Lorenz(LorenzParams::default()),
                // The initial set is [−40, 40]³ and the attractor itself
                // leaves it, so the safety box is wider.
                domain: DomainBox::symmetric(&[100.0, 100.0, 100.0]),
                t_max: 10.0,
            };
            let s = 72f64.sqrt();
            let mut cfg = base(plant, "1,x,x^2,x^3,xi*xj", &[160.0, 160.0, 12.0], vec![-s, -s, 27.0]);
            cfg.init.spread = vector(&[40.0, 40.0, 40.0]);
            cfg.success.tolerance = DVector::from_element(3, 1.0);
            cfg.dither = 1.0;
            cfg
        }
        Benchmark::Cartpole => {
            let plant = PlantSpec {
                model: PlantModel::Cartpole(CartpoleParams::default()),
                domain: DomainBox::symmetric(&[2.0 * PI, 25.0, 5.0, 25.0]),
                t_max: 15.0,
            };
            let mut cfg = base(plant, "1,x,x^2,x^3,sin(x),cos(x)", &[60.0, 1.5, 180.0, 45.0], vec![0.0; 4]);
            cfg.init.center = vector(&[PI, 0.0, 0.0, 0.0]);
            cfg.init.spread = vector(&[0.3, 0.0, 0.0, 0.0]);
            cfg.success.tolerance = vector(&[0.1, f64::INFINITY, 0.5, f64::INFINITY]);
            cfg.success.periodic = vec![true, false, false, false];
            cfg.regression.ridge = 1e-3;
            cfg.u_limit = Some(20.0);
            cfg.dither = 0.5;
            cfg
        }
        Benchmark::DoublePendulum => {
            let plant = PlantSpec {
                model: PlantModel::DoublePendulum(DoublePendulumParams::default()),
                domain: DomainBox::symmetric(&[5.0, PI / 2.0, PI / 2.0, 10.0, 10.0, 10.0]),
                t_max: 15.0,
            };
            let mut cfg = base(plant, "1,x,x^2", &[15.0, 15.0, 15.0, 1.0, 1.0, 1.0], vec![0.0; 6]);
            cfg.init.spread = vector(&[0.0, 0.1, 0.1, 0.0, 0.0, 0.0]);
            cfg.regression.ridge = 1e-3;
            cfg.regression.threshold = 0.1;
            cfg.dither = 0.5;
            cfg
        }
        Benchmark::LinearOracle => {
            let plant = PlantSpec {
                model: PlantModel::Linear(linear_oracle_plant()),
                domain: DomainBox::symmetric(&[10.0, 10.0]),
                t_max: 10.0,
            };
            let mut cfg = base(plant, "1,x", &[1.0, 1.0], vec![0.0, 0.0]);
            cfg.init.center = vector(&[1.0, 0.0]);
            cfg.dither = 0.05;
            cfg
        }
    }
}

/// Parsed run configuration with the benchmark it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedConfig {
    pub benchmark: Benchmark,
    pub config: SolConfig,
}

pub fn load_config(path: &Path) -> Result<LoadedConfig> {
    let text = std::fs::read_to_string(path)?;
    let mut loaded = parse_config(&text)?;
    // relative preload paths resolve against the config file
    if let Some(pre) = &loaded.config.database.preload {
        if pre.is_relative() {
            if let Some(dir) = path.parent() {
                loaded.config.database.preload = Some(dir.join(pre));
            }
        }
    }
    Ok(loaded)
}

/// Parses config text. `benchmark` is required.
pub fn parse_config(text: &str) -> Result<LoadedConfig> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| {
        let line = e
            .span()
            .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
            .unwrap_or(0);
        Error::ConfigParse {
            line,
            message: e.message().to_string(),
        }
    })?;
    let mut entries = Vec::new();
    flatten("", &table, &mut entries);

    let benchmark = match entries.iter().find(|(k, _)| k == "benchmark") {
        Some((_, Value::String(s))) => s.parse()?,
        Some(_) => return Err(Error::validation("benchmark", "must be a string")),
        None => return Err(Error::validation("benchmark", "missing required key")),
    };
    let mut config = preset(benchmark);
    for (key, value) in &entries {
        if key != "benchmark" {
            apply(&mut config, key, value)?;
        }
    }
    config.validate()?;
    Ok(LoadedConfig { benchmark, config })
}

/// Applies `key = value` overrides (already in `key = value` TOML lines) to
/// a preset.
pub fn with_overrides(benchmark: Benchmark, overrides: &str) -> Result<SolConfig> {
    let text = format!("benchmark = \"{}\"\n{}", benchmark.name(), overrides);
    Ok(parse_config(&text)?.config)
}

fn flatten(prefix: &str, table: &toml::Table, out: &mut Vec<(String, Value)>) {
    for (k, v) in table {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            Value::Table(t) => flatten(&key, t, out),
            other => out.push((key, other.clone())),
        }
    }
}

fn as_f64(key: &str, v: &Value) -> Result<f64> {
    match v {
        Value::Float(f) => Ok(*f),
        Value::Integer(i) => Ok(*i as f64),
        _ => Err(Error::validation(key, "expected a number")),
    }
}

fn as_usize(key: &str, v: &Value) -> Result<usize> {
    match v {
        Value::Integer(i) if *i >= 0 => Ok(*i as usize),
        _ => Err(Error::validation(key, "expected a non-negative integer")),
    }
}

fn as_vec(key: &str, v: &Value) -> Result<Vec<f64>> {
    match v {
        Value::Array(items) => items.iter().map(|x| as_f64(key, x)).collect(),
        _ => Ok(vec![as_f64(key, v)?]),
    }
}

fn as_bools(key: &str, v: &Value) -> Result<Vec<bool>> {
    match v {
        Value::Array(items) => items
            .iter()
            .map(|x| x.as_bool().ok_or_else(|| Error::validation(key, "expected booleans")))
            .collect(),
        _ => Err(Error::validation(key, "expected an array of booleans")),
    }
}

fn as_vec_len(key: &str, v: &Value, n: usize) -> Result<DVector<f64>> {
    let xs = match v {
        Value::Array(_) => as_vec(key, v)?,
        _ => vec![as_f64(key, v)?; n],
    };
    if xs.len() != n {
        return Err(Error::validation(key, format!("expected {n} entries, got {}", xs.len())));
    }
    Ok(DVector::from_vec(xs))
}

fn as_matrix(key: &str, v: &Value) -> Result<DMatrix<f64>> {
    let Value::Array(rows) = v else {
        return Err(Error::validation(key, "expected an array"));
    };
    if rows.iter().all(|r| matches!(r, Value::Array(_))) && !rows.is_empty() {
        let rows: Vec<Vec<f64>> = rows.iter().map(|r| as_vec(key, r)).collect::<Result<_>>()?;
        let cols = rows[0].len();
        if cols == 0 || rows.iter().any(|r| r.len() != cols) {
            return Err(Error::validation(key, "rows must have equal, nonzero length"));
        }
        let flat: Vec<f64> = rows.concat();
        Ok(DMatrix::from_row_slice(rows.len(), cols, &flat))
    } else {
        Err(Error::validation(key, "expected an array of rows"))
    }
}

fn apply(cfg: &mut SolConfig, key: &str, v: &Value) -> Result<()> {
    let n = cfg.plant.state_dim();
    match key {
        "basis" => match v {
            Value::String(s) => cfg.basis = s.clone(),
            _ => return Err(Error::validation(key, "expected a string")),
        },
        "seed" => cfg.seed = as_usize(key, v)? as u64,
        "dither" => cfg.dither = as_f64(key, v)?,
        "derivative" => {
            cfg.derivative = match v.as_str() {
                Some("finite_difference") => DerivativeSource::FiniteDifference,
                Some("exact") => DerivativeSource::Exact,
                _ => return Err(Error::validation(key, "expected \"finite_difference\" or \"exact\"")),
            }
        }
        "plant.t_max" => cfg.plant.t_max = as_f64(key, v)?,
        "plant.domain_lower" => cfg.plant.domain.lower = as_vec_len(key, v, n)?,
        "plant.domain_upper" => cfg.plant.domain.upper = as_vec_len(key, v, n)?,
        k if k.starts_with("plant.") => apply_plant(&mut cfg.plant.model, key, &k["plant.".len()..], v)?,
        "cost.q" => {
            cfg.cost.q = match v {
                Value::Array(items) if items.iter().all(|i| matches!(i, Value::Array(_))) => as_matrix(key, v)?,
                _ => DMatrix::from_diagonal(&as_vec_len(key, v, n)?),
            }
        }
        "cost.r" => cfg.cost.r = DVector::from_vec(as_vec(key, v)?),
        "cost.gamma" => cfg.cost.gamma = as_f64(key, v)?,
        "cost.x_ref" => cfg.cost.x_ref = as_vec_len(key, v, n)?,
        "clock.h" => cfg.clock.h = as_f64(key, v)?,
        "clock.control_divisor" => cfg.clock.control_divisor = as_usize(key, v)?,
        "regression.threshold" => cfg.regression.threshold = as_f64(key, v)?,
        "regression.max_sweeps" => cfg.regression.max_sweeps = as_usize(key, v)?,
        "regression.ridge" => cfg.regression.ridge = as_f64(key, v)?,
        "database.capacity" => cfg.database.capacity = as_usize(key, v)?,
        "database.e_min" => cfg.database.e_min = as_f64(key, v)?,
        "database.min_fit_samples" => cfg.database.min_fit_samples = as_usize(key, v)?,
        "database.preload" => match v {
            Value::String(s) if s.is_empty() => cfg.database.preload = None,
            Value::String(s) => cfg.database.preload = Some(PathBuf::from(s)),
            _ => return Err(Error::validation(key, "expected a path string")),
        },
        "success.tolerance" => cfg.success.tolerance = as_vec_len(key, v, n)?,
        "success.hold" => cfg.success.hold = as_f64(key, v)?,
        "success.periodic" => cfg.success.periodic = as_bools(key, v)?,
        "init.center" | "init.x0" => cfg.init.center = as_vec_len(key, v, n)?,
        "init.spread" => cfg.init.spread = as_vec_len(key, v, n)?,
        "control.limit" => {
            let l = as_f64(key, v)?;
            cfg.u_limit = if l == 0.0 { None } else { Some(l) };
        }
        "solver.p_substeps" => cfg.p_substeps = as_usize(key, v)?,
        "trace.snapshot_period" => cfg.snapshot_period = as_f64(key, v)?,
        _ => return Err(Error::validation(key, "unknown key")),
    }
    Ok(())
}

fn apply_plant(model: &mut PlantModel, key: &str, field: &str, v: &Value) -> Result<()> {
    let unknown = || Error::validation(key, "unknown key");
    match model {
        PlantModel::Pendulum(p) => {
            let slot = match field {
                "mass" => &mut p.mass,
                "length" => &mut p.length,
                "friction" => &mut p.friction,
                "gravity" => &mut p.gravity,
                _ => return Err(unknown()),
            };
            *slot = as_f64(key, v)?;
        }
        PlantModel::Lorenz(p) => {
            let slot = match field {
                "sigma" => &mut p.sigma,
                "rho" => &mut p.rho,
                "beta" => &mut p.beta,
                _ => return Err(unknown()),
            };
            *slot = as_f64(key, v)?;
        }
        PlantModel::Cartpole(p) => {
            let slot = match field {
                "pole_mass" => &mut p.pole_mass,
                "cart_mass" => &mut p.cart_mass,
                "length" => &mut p.length,
                "gravity" => &mut p.gravity,
                _ => return Err(unknown()),
            };
            *slot = as_f64(key, v)?;
        }
        PlantModel::DoublePendulum(p) => {
            let slot = match field {
                "cart_mass" => &mut p.cart_mass,
                "mass1" => &mut p.mass1,
                "mass2" => &mut p.mass2,
                "length1" => &mut p.length1,
                "length2" => &mut p.length2,
                "damping_cart" => &mut p.damping_cart,
                "damping1" => &mut p.damping1,
                "damping2" => &mut p.damping2,
                "gravity" => &mut p.gravity,
                _ => return Err(unknown()),
            };
            *slot = as_f64(key, v)?;
        }
        PlantModel::Linear(p) => match field {
            "a" => p.a = as_matrix(key, v)?,
            "b" => p.b = as_matrix(key, v)?,
            _ => return Err(unknown()),
        },
    }
    Ok(())
}

fn fmt_f64(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{v:.1}")
    } else {
        format!("{v}")
    }
}

fn fmt_vec<'a>(xs: impl IntoIterator<Item = &'a f64>) -> String {
    let items: Vec<String> = xs.into_iter().map(|v| fmt_f64(*v)).collect();
    format!("[{}]", items.join(", "))
}

fn fmt_matrix(m: &DMatrix<f64>) -> String {
    let rows: Vec<String> = m.row_iter().map(|r| fmt_vec(r.iter())).collect();
    format!("[{}]", rows.join(", "))
}

/// Renders a complete config for `benchmark`, every key at its preset value.
pub fn dump_defaults(benchmark: Benchmark) -> String {
    render_config(benchmark, &preset(benchmark))
}

pub fn render_config(benchmark: Benchmark, cfg: &SolConfig) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "benchmark = \"{}\"", benchmark.name());
    let _ = writeln!(s, "basis = \"{}\"", cfg.basis);
    let _ = writeln!(s, "seed = {}", cfg.seed);
    let _ = writeln!(s, "dither = {}", fmt_f64(cfg.dither));
    let _ = writeln!(
        s,
        "derivative = \"{}\"",
        match cfg.derivative {
            DerivativeSource::FiniteDifference => "finite_difference",
            DerivativeSource::Exact => "exact",
        }
    );
    let _ = writeln!(s);
    match &cfg.plant.model {
        PlantModel::Pendulum(p) => {
            let _ = writeln!(s, "plant.mass = {}", fmt_f64(p.mass));
            let _ = writeln!(s, "plant.length = {}", fmt_f64(p.length));
            let _ = writeln!(s, "plant.friction = {}", fmt_f64(p.friction));
            let _ = writeln!(s, "plant.gravity = {}", fmt_f64(p.gravity));
        }
        PlantModel::Lorenz(p) => {
            let _ = writeln!(s, "plant.sigma = {}", fmt_f64(p.sigma));
            let _ = writeln!(s, "plant.rho = {}", fmt_f64(p.rho));
            let _ = writeln!(s, "plant.beta = {}", fmt_f64(p.beta));
        }
        PlantModel::Cartpole(p) => {
            let _ = writeln!(s, "plant.pole_mass = {}", fmt_f64(p.pole_mass));
            let _ = writeln!(s, "plant.cart_mass = {}", fmt_f64(p.cart_mass));
            let _ = writeln!(s, "plant.length = {}", fmt_f64(p.length));
            let _ = writeln!(s, "plant.gravity = {}", fmt_f64(p.gravity));
        }
        PlantModel::DoublePendulum(p) => {
            let _ = writeln!(s, "plant.cart_mass = {}", fmt_f64(p.cart_mass));
            let _ = writeln!(s, "plant.mass1 = {}", fmt_f64(p.mass1));
            let _ = writeln!(s, "plant.mass2 = {}", fmt_f64(p.mass2));
            let _ = writeln!(s, "plant.length1 = {}", fmt_f64(p.length1));
            let _ = writeln!(s, "plant.length2 = {}", fmt_f64(p.length2));
            let _ = writeln!(s, "plant.damping_cart = {}", fmt_f64(p.damping_cart));
            let _ = writeln!(s, "plant.damping1 = {}", fmt_f64(p.damping1));
            let _ = writeln!(s, "plant.damping2 = {}", fmt_f64(p.damping2));
            let _ = writeln!(s, "plant.gravity = {}", fmt_f64(p.gravity));
        }
        PlantModel::Linear(p) => {
            let _ = writeln!(s, "plant.a = {}", fmt_matrix(&p.a));
            let _ = writeln!(s, "plant.b = {}", fmt_matrix(&p.b));
        }
    }
    let _ = writeln!(s, "plant.domain_lower = {}", fmt_vec(cfg.plant.domain.lower.iter()));
    let _ = writeln!(s, "plant.domain_upper = {}", fmt_vec(cfg.plant.domain.upper.iter()));
    let _ = writeln!(s, "plant.t_max = {}", fmt_f64(cfg.plant.t_max));
    let _ = writeln!(s);
    let _ = writeln!(s, "cost.q = {}", fmt_matrix(&cfg.cost.q));
    let _ = writeln!(s, "cost.r = {}", fmt_vec(cfg.cost.r.iter()));
    let _ = writeln!(s, "cost.gamma = {}", fmt_f64(cfg.cost.gamma));
    let _ = writeln!(s, "cost.x_ref = {}", fmt_vec(cfg.cost.x_ref.iter()));
    let _ = writeln!(s);
    let _ = writeln!(s, "clock.h = {}", fmt_f64(cfg.clock.h));
    let _ = writeln!(s, "clock.control_divisor = {}", cfg.clock.control_divisor);
    let _ = writeln!(s, "solver.p_substeps = {}", cfg.p_substeps);
    let _ = writeln!(s, "control.limit = {}", fmt_f64(cfg.u_limit.unwrap_or(0.0)));
    let _ = writeln!(s);
    let _ = writeln!(s, "regression.threshold = {}", fmt_f64(cfg.regression.threshold));
    let _ = writeln!(s, "regression.max_sweeps = {}", cfg.regression.max_sweeps);
    let _ = writeln!(s, "regression.ridge = {}", fmt_f64(cfg.regression.ridge));
    let _ = writeln!(s, "database.capacity = {}", cfg.database.capacity);
    let _ = writeln!(s, "database.e_min = {}", fmt_f64(cfg.database.e_min));
    let _ = writeln!(s, "database.min_fit_samples = {}", cfg.database.min_fit_samples);
    let preload = cfg.database.preload.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
    let _ = writeln!(s, "database.preload = \"{preload}\"");
    let _ = writeln!(s);
    let _ = writeln!(s, "success.tolerance = {}", fmt_vec(cfg.success.tolerance.iter()));
    let _ = writeln!(s, "success.hold = {}", fmt_f64(cfg.success.hold));
    let flags: Vec<&str> = cfg.success.periodic.iter().map(|b| if *b { "true" } else { "false" }).collect();
    let _ = writeln!(s, "success.periodic = [{}]", flags.join(", "));
    let _ = writeln!(s, "init.center = {}", fmt_vec(cfg.init.center.iter()));
    let _ = writeln!(s, "init.spread = {}", fmt_vec(cfg.init.spread.iter()));
    let _ = writeln!(s, "trace.snapshot_period = {}", fmt_f64(cfg.snapshot_period));
    s
}
