//! Experiment configuration: a TOML file with one table per concern.
//!
//! ```toml
//! scenario = "compare"
//! seed = 7
//!
//! [lattice]
//! dim = 1
//! x_max = 3.141592653589793
//! dx = 0.10471975511965977
//! boundary = "periodic"
//!
//! [operator]
//! id = "heat"
//!
//! [u0]
//! kind = "cos"
//! ```
//!
//! Every key is optional; unknown keys and ill-typed values are rejected
//! with the dotted key path in the error.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use toml::{Table, Value};

use crate::doubling::PenaltySchedule;
use crate::error::{LabError, Result};
use crate::fields::{Boundary, SpatialGrid, SpatialLattice};
use crate::operators::{catalog, CatalogParams, OperatorId, OperatorSpec};
use crate::scheme::SCHEME_TOL;

pub const SCENARIOS: [&str; 8] = [
    "solve",
    "compare",
    "key-estimate",
    "lemma-diagnostics",
    "perron",
    "tos-check",
    "regularity",
    "all",
];

fn config_err(key: &str, message: impl Into<String>) -> LabError {
    LabError::Config {
        key: key.to_string(),
        message: message.into(),
    }
}

/// A table plus its dotted prefix, for error messages.
struct Section<'a> {
    prefix: String,
    table: Option<&'a Table>,
}

impl<'a> Section<'a> {
    fn of(root: &'a Table, name: &str, allowed: &[&str]) -> Result<Self> {
        let table = match root.get(name) {
            None => None,
            Some(Value::Table(t)) => Some(t),
            Some(_) => return Err(config_err(name, "expected a table")),
        };
        let s = Section {
            prefix: name.to_string(),
            table,
        };
        s.reject_unknown(allowed)?;
        Ok(s)
    }

    fn key(&self, name: &str) -> String {
        format!("{}.{name}", self.prefix)
    }

    fn reject_unknown(&self, allowed: &[&str]) -> Result<()> {
        if let Some(t) = self.table {
            if let Some(k) = t.keys().find(|k| !allowed.contains(&k.as_str())) {
                return Err(config_err(&self.key(k), "unknown key"));
            }
        }
        Ok(())
    }

    fn get(&self, name: &str) -> Option<&'a Value> {
        self.table.and_then(|t| t.get(name))
    }

    fn f64_or(&self, name: &str, default: f64) -> Result<f64> {
        match self.get(name) {
            None => Ok(default),
            Some(v) => as_f64(v).ok_or_else(|| config_err(&self.key(name), "expected a number")),
        }
    }

    fn positive_or(&self, name: &str, default: f64) -> Result<f64> {
        let v = self.f64_or(name, default)?;
        if v > 0.0 && v.is_finite() {
            Ok(v)
        } else {
            Err(config_err(&self.key(name), format!("must be positive, got {v}")))
        }
    }

    fn usize_or(&self, name: &str, default: usize) -> Result<usize> {
        match self.get(name) {
            None => Ok(default),
            Some(Value::Integer(i)) if *i >= 0 => Ok(*i as usize),
            Some(_) => Err(config_err(&self.key(name), "expected a nonnegative integer")),
        }
    }

    fn str_or(&self, name: &str, default: &'a str) -> Result<&'a str> {
        match self.get(name) {
            None => Ok(default),
            Some(Value::String(s)) => Ok(s),
            Some(_) => Err(config_err(&self.key(name), "expected a string")),
        }
    }

    fn f64_list_or(&self, name: &str, default: &[f64]) -> Result<Vec<f64>> {
        match self.get(name) {
            None => Ok(default.to_vec()),
            Some(Value::Array(a)) => a
                .iter()
                .map(|v| as_f64(v).ok_or_else(|| config_err(&self.key(name), "expected an array of numbers")))
                .collect(),
            Some(_) => Err(config_err(&self.key(name), "expected an array of numbers")),
        }
    }
}

fn as_f64(v: &Value) -> Option<f64> {
    match v {
        Value::Float(f) => Some(*f),
        Value::Integer(i) => Some(*i as f64),
        _ => None,
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LatticeConfig {
    pub dim: usize,
    pub x_max: f64,
    pub dx: f64,
    pub boundary: Boundary,
}

impl LatticeConfig {
    /// Periodic `[−π, π]` with 60 cells.
    pub fn periodic_default() -> Self {
        Self {
            dim: 1,
            x_max: PI,
            dx: PI / 30.0,
            boundary: Boundary::Periodic,
        }
    }

    /// Clamped `[−2, 2]` with `Δx = 0.05`, used by the cone scenario.
    pub fn clamped_default() -> Self {
        Self {
            dim: 1,
            x_max: 2.0,
            dx: 0.05,
            boundary: Boundary::Clamped,
        }
    }

    pub fn build(&self) -> Result<SpatialLattice<f64>> {
        SpatialLattice::new(self.dim, self.x_max, self.dx, self.boundary)
    }
}

/// Initial data on the lattice.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DataKind {
    /// `a·cos(k·x₁)`.
    Cos {
        amplitude: f64,
        frequency: f64,
    },
    /// `|x|`.
    Abs,
    Const(f64),
    /// `min(1, |x|^{1/2})`: bounded, uniformly continuous, not Lipschitz.
    SqrtAbs,
}

impl DataKind {
    pub fn name(&self) -> &'static str {
        match self {
            DataKind::Cos { .. } => "cos",
            DataKind::Abs => "abs",
            DataKind::Const(_) => "const",
            DataKind::SqrtAbs => "sqrt_abs",
        }
    }

    pub fn grid(&self, lattice: SpatialLattice<f64>) -> SpatialGrid<f64> {
        match *self {
            DataKind::Cos { amplitude, frequency } => {
                SpatialGrid::from_fn(lattice, |x| amplitude * (frequency * x[0]).cos())
            }
            DataKind::Abs => SpatialGrid::from_fn(lattice, |x| x.norm()),
            DataKind::Const(c) => SpatialGrid::constant(lattice, c),
            DataKind::SqrtAbs => SpatialGrid::from_fn(lattice, |x| x.norm().sqrt().min(1.0)),
        }
    }

    fn parse(section: &Section, default: DataKind) -> Result<Self> {
        let kind = section.str_or("kind", default.name())?;
        match kind {
            "cos" => Ok(DataKind::Cos {
                amplitude: section.f64_or("amplitude", 1.0)?,
                frequency: section.f64_or("frequency", 1.0)?,
            }),
            "abs" => Ok(DataKind::Abs),
            "const" => Ok(DataKind::Const(section.f64_or("value", 0.0)?)),
            "zero" => Ok(DataKind::Const(0.0)),
            "sqrt_abs" => Ok(DataKind::SqrtAbs),
            other => Err(config_err(&section.key("kind"), format!("unknown data kind `{other}`"))),
        }
    }
}

impl DataKind {
    pub const UNIT_COS: DataKind = DataKind::Cos {
        amplitude: 1.0,
        frequency: 1.0,
    };
}

const DATA_KEYS: &[&str] = &["kind", "amplitude", "frequency", "value"];

#[derive(Clone, Copy, Debug)]
pub struct OperatorConfig {
    pub id: OperatorId,
    pub params: CatalogParams<f64>,
}

impl OperatorConfig {
    pub fn build(&self, dim: usize) -> OperatorSpec<f64> {
        catalog(self.id, dim, self.params)
    }
}

#[derive(Clone, Debug)]
pub struct Config {
    pub scenario: String,
    pub seed: u64,
    pub outdir: Option<PathBuf>,
    /// `None` means the scenario default.
    pub lattice: Option<LatticeConfig>,
    /// `None` means heat, or the whole catalog for `all`.
    pub operator: Option<OperatorConfig>,
    pub params: CatalogParams<f64>,
    /// `None` means the scenario default.
    pub u0: Option<DataKind>,
    /// Second data set for the initial-slice diagnostics.
    pub partner: DataKind,
    pub horizon: f64,
    pub cfl_fraction: f64,
    pub schedule: PenaltySchedule<f64>,
    pub tol: f64,
    /// Admissible `L∞` error against a closed-form solution.
    pub oracle_tol: Option<f64>,
    pub compare_shift: f64,
    pub comparison_pairs: usize,
    pub perron_l_count: usize,
    pub perron_eps_min: f64,
    pub perron_halvings: usize,
    pub contraction_pairs: usize,
    pub tos_alpha: f64,
    pub tos_cases: usize,
    pub monotonicity_jets: usize,
    pub kappa: f64,
    pub etas: Vec<f64>,
    pub radius: f64,
    pub x0_stride: usize,
}

impl Config {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let root: Table = text
            .parse()
            .map_err(|e: toml::de::Error| LabError::Parse(e.to_string()))?;
        const TOP: &[&str] = &[
            "scenario",
            "seed",
            "outdir",
            "lattice",
            "operator",
            "u0",
            "partner",
            "solve",
            "schedule",
            "tolerances",
            "compare",
            "perron",
            "tos",
            "regularity",
        ];
        if let Some(k) = root.keys().find(|k| !TOP.contains(&k.as_str())) {
            return Err(config_err(k, "unknown key"));
        }
        let scenario = match root.get("scenario") {
            None => "all".to_string(),
            Some(Value::String(s)) => s.clone(),
            Some(_) => return Err(config_err("scenario", "expected a string")),
        };
        if !SCENARIOS.contains(&scenario.as_str()) {
            return Err(config_err(
                "scenario",
                format!(
                    "unknown scenario `{scenario}` (expected one of {})",
                    SCENARIOS.join(", ")
                ),
            ));
        }
        let seed = match root.get("seed") {
            None => 0,
            Some(Value::Integer(i)) if *i >= 0 => *i as u64,
            Some(_) => return Err(config_err("seed", "expected a nonnegative integer")),
        };
        let outdir = match root.get("outdir") {
            None => None,
            Some(Value::String(s)) => Some(PathBuf::from(s)),
            Some(_) => return Err(config_err("outdir", "expected a string")),
        };

        let lat = Section::of(&root, "lattice", &["dim", "x_max", "dx", "boundary"])?;
        let lattice = match lat.table {
            None => None,
            Some(_) => {
                let d = LatticeConfig::periodic_default();
                let boundary = match lat.str_or("boundary", "periodic")? {
                    "periodic" => Boundary::Periodic,
                    "clamped" => Boundary::Clamped,
                    other => return Err(config_err(&lat.key("boundary"), format!("unknown boundary `{other}`"))),
                };
                let dim = lat.usize_or("dim", 1)?;
                if !(1..=2).contains(&dim) {
                    return Err(config_err(
                        &lat.key("dim"),
                        format!("dimension must be 1 or 2, got {dim}"),
                    ));
                }
                let cfg = LatticeConfig {
                    dim,
                    x_max: lat.positive_or("x_max", d.x_max)?,
                    dx: lat.positive_or("dx", d.dx)?,
                    boundary,
                };
                cfg.build().map_err(|e| config_err("lattice", e.to_string()))?;
                Some(cfg)
            }
        };

        let op = Section::of(&root, "operator", &["id", "gamma", "lambda", "big_lambda"])?;
        let defaults = CatalogParams::<f64>::default();
        let params = CatalogParams {
            gamma: op.positive_or("gamma", defaults.gamma)?,
            lambda: op.positive_or("lambda", defaults.lambda)?,
            big_lambda: op.positive_or("big_lambda", defaults.big_lambda)?,
        };
        if params.big_lambda < params.lambda {
            return Err(config_err("operator.big_lambda", "must be at least operator.lambda"));
        }
        let operator = match op.get("id") {
            None if op.table.is_none() => None,
            None => Some(OperatorId::Heat),
            Some(Value::String(s)) => Some(OperatorId::parse(s).ok_or_else(|| {
                let known: Vec<&str> = OperatorId::ALL.iter().map(|i| i.as_str()).collect();
                config_err(
                    "operator.id",
                    format!("unknown operator `{s}` (expected one of {})", known.join(", ")),
                )
            })?),
            Some(_) => return Err(config_err("operator.id", "expected a string")),
        }
        .map(|id| OperatorConfig { id, params });

        let u0_section = Section::of(&root, "u0", DATA_KEYS)?;
        let u0 = match u0_section.table {
            None => None,
            Some(_) => Some(DataKind::parse(&u0_section, DataKind::UNIT_COS)?),
        };
        let partner = DataKind::parse(&Section::of(&root, "partner", DATA_KEYS)?, DataKind::Const(0.0))?;

        let solve = Section::of(&root, "solve", &["horizon", "cfl_fraction", "oracle_tol"])?;
        let cfl_fraction = solve.positive_or("cfl_fraction", 0.9)?;
        if cfl_fraction > 1.0 {
            return Err(config_err("solve.cfl_fraction", "must not exceed 1"));
        }
        let oracle_tol = match solve.get("oracle_tol") {
            None => None,
            Some(_) => Some(solve.positive_or("oracle_tol", 1.0)?),
        };

        let sched = Section::of(&root, "schedule", &["alphas", "c", "inner"])?;
        let d = PenaltySchedule::<f64>::default();
        let schedule = PenaltySchedule::new(
            sched.f64_list_or("alphas", d.alphas())?,
            sched.positive_or("c", d.c())?,
            sched.usize_or("inner", d.inner())?,
        )
        .map_err(|e| config_err("schedule", e.to_string()))?;

        let tols = Section::of(&root, "tolerances", &["scheme"])?;
        let compare = Section::of(&root, "compare", &["shift", "pairs"])?;
        let perron = Section::of(
            &root,
            "perron",
            &["l_count", "eps_min", "halvings", "contraction_pairs"],
        )?;
        let tos = Section::of(&root, "tos", &["alpha", "cases", "monotonicity_jets", "kappa"])?;
        let reg = Section::of(&root, "regularity", &["etas", "radius", "x0_stride"])?;
        let etas = reg.f64_list_or("etas", &[0.05, 0.1, 0.2])?;
        if etas.is_empty() || etas.iter().any(|e| !(*e > 0.0)) {
            return Err(config_err(
                "regularity.etas",
                "must be a nonempty list of positive numbers",
            ));
        }
        let shift = compare.f64_or("shift", 0.2)?;
        if shift < 0.0 {
            return Err(config_err("compare.shift", "must be nonnegative"));
        }
        let l_count = perron.usize_or("l_count", 4)?;
        if l_count == 0 {
            return Err(config_err("perron.l_count", "must be positive"));
        }

        Ok(Config {
            scenario,
            seed,
            outdir,
            lattice,
            operator,
            params,
            u0,
            partner,
            horizon: solve.positive_or("horizon", 0.5)?,
            cfl_fraction,
            schedule,
            tol: tols.positive_or("scheme", SCHEME_TOL)?,
            oracle_tol,
            compare_shift: shift,
            comparison_pairs: compare.usize_or("pairs", 3)?,
            perron_l_count: l_count,
            perron_eps_min: perron.positive_or("eps_min", 1e-3)?,
            perron_halvings: perron.usize_or("halvings", 3)?,
            contraction_pairs: perron.usize_or("contraction_pairs", 10)?,
            tos_alpha: tos.positive_or("alpha", 1.0)?,
            tos_cases: tos.usize_or("cases", 20)?,
            monotonicity_jets: tos.usize_or("monotonicity_jets", 100)?,
            kappa: tos.positive_or("kappa", 0.5)?,
            etas,
            radius: reg.positive_or("radius", 1.0)?,
            x0_stride: reg.usize_or("x0_stride", 10)?.max(1),
        })
    }

    /// Operators the scenario runs over.
    pub fn operators(&self) -> Vec<OperatorConfig> {
        match self.operator {
            Some(op) => vec![op],
            None if self.scenario == "all" => OperatorId::ALL
                .iter()
                .map(|&id| OperatorConfig {
                    id,
                    params: self.params,
                })
                .collect(),
            None => vec![OperatorConfig {
                id: OperatorId::Heat,
                params: self.params,
            }],
        }
    }

    /// Initial data: `cos`, or the non-Lipschitz `sqrt_abs` for the cone
    /// scenario.
    pub fn u0_for(&self, scenario: &str) -> DataKind {
        self.u0.unwrap_or(if scenario == "perron" {
            DataKind::SqrtAbs
        } else {
            DataKind::UNIT_COS
        })
    }

    pub fn lattice_for(&self, scenario: &str) -> LatticeConfig {
        self.lattice.unwrap_or(if scenario == "perron" {
            LatticeConfig::clamped_default()
        } else {
            LatticeConfig::periodic_default()
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_uses_defaults() {
        let c = Config::from_toml("").unwrap();
        assert_eq!(c.scenario, "all");
        assert_eq!(c.operators().len(), 5);
        assert_eq!(c.etas, vec![0.05, 0.1, 0.2]);
    }

    #[test]
    fn unknown_operator_names_the_key() {
        let err = Config::from_toml("scenario = \"compare\"\n[operator]\nid = \"heat2\"\n").unwrap_err();
        match err {
            LabError::Config { key, message } => {
                assert_eq!(key, "operator.id");
                assert!(message.contains("heat2"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_keys_and_bad_types_are_rejected() {
        for (text, key) in [
            ("[lattice]\ndxx = 0.1\n", "lattice.dxx"),
            ("[lattice]\ndx = \"a\"\n", "lattice.dx"),
            ("scenario = \"nope\"\n", "scenario"),
            ("bogus = 1\n", "bogus"),
            ("[u0]\nkind = \"spiral\"\n", "u0.kind"),
            ("[regularity]\netas = []\n", "regularity.etas"),
        ] {
            match Config::from_toml(text) {
                Err(LabError::Config { key: k, .. }) => assert_eq!(k, key, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
        assert!(matches!(Config::from_toml("[lattice"), Err(LabError::Parse(_))));
    }

    #[test]
    fn data_kinds_evaluate() {
        let lat = LatticeConfig::clamped_default().build().unwrap();
        let g = DataKind::SqrtAbs.grid(lat);
        assert_eq!(g.max(), 1.0);
        assert_eq!(g.min(), 0.0);
        assert_eq!(DataKind::Const(0.3).grid(lat).max(), 0.3);
    }
}
