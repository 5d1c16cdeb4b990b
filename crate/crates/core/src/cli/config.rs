//! Experiment description read from a TOML file.
//!
//! ```toml
//! [problem]
//! alpha = 1.5
//! T = 1.0
//! N = 256
//! A = [[0, 1], [-2, 0]]
//! B = [[0, 0], [1, 0]]              # or { polynomial = [B0, B1] } or { samples = "b.csv" }
//! f = [1, 0]                        # or "zero", { polynomial = [f0, f1] }, { samples = "f.csv" }
//! x = [1, 0]                        # or "random"
//! y = "random"
//!
//! [solvers]
//! list = ["series", "nonpermutable", "oracle"]
//!
//! [tolerances]
//! series_tol = 1e-12
//! quad_assert_tol = 1e-2
//! cross_tol = 1e-4
//!
//! [envelope]                        # optional; estimated when absent
//! M = 1.0
//! omega = 0.5
//!
//! [outputs]                         # relative to --out-dir
//! solution = "solution.csv"
//! ```
//!
//! Sample files are CSV with a header row and columns `t, v_1, ..., v_k`
//! (matrices row-major) on a uniform grid starting at 0, resolved relative
//! to the config file.

use std::fmt;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use toml::{Table, Value};

use crate::closedform::commutator;
use crate::error::Error;
use crate::families::GrowthEnvelope;
use crate::grid::{Forcing, TimeDependentOperator, TimeGrid};
use crate::mlfunc::FractionalOrder;
use crate::operator::BoundedOperator;

/// A config problem, naming the offending field.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfigError {
    pub field: String,
    pub reason: String,
}

impl ConfigError {
    fn new(field: impl Into<String>, reason: impl fmt::Display) -> Self {
        Self {
            field: field.into(),
            reason: reason.to_string(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config field `{}`: {}", self.field, self.reason)
    }
}

impl std::error::Error for ConfigError {}

type ConfigResult<T> = std::result::Result<T, ConfigError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SolverKind {
    Series,
    Nonpermutable,
    Permutable,
    Classical,
    Oracle,
}

impl SolverKind {
    pub const ALL: [SolverKind; 5] = [
        SolverKind::Series,
        SolverKind::Nonpermutable,
        SolverKind::Permutable,
        SolverKind::Classical,
        SolverKind::Oracle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SolverKind::Series => "series",
            SolverKind::Nonpermutable => "nonpermutable",
            SolverKind::Permutable => "permutable",
            SolverKind::Classical => "classical",
            SolverKind::Oracle => "oracle",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerances {
    /// Series truncation tolerance.
    pub series_tol: f64,
    /// Largest accepted interior residual.
    pub quad_assert_tol: f64,
    /// Largest accepted pairwise deviation between solvers.
    pub cross_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            series_tol: 1e-12,
            quad_assert_tol: 1e-2,
            cross_tol: 1e-4,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Outputs {
    pub solution: PathBuf,
    pub residual: PathBuf,
    pub bounds: PathBuf,
    pub report: PathBuf,
}

impl Default for Outputs {
    fn default() -> Self {
        Self {
            solution: "solution.csv".into(),
            residual: "residual.csv".into(),
            bounds: "bounds.csv".into(),
            report: "report.txt".into(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub alpha: FractionalOrder,
    pub grid: TimeGrid,
    pub a: BoundedOperator,
    pub b: TimeDependentOperator,
    pub f: Forcing,
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    pub solvers: Vec<SolverKind>,
    pub tolerances: Tolerances,
    pub envelope: Option<GrowthEnvelope>,
    pub outputs: Outputs,
    /// Non-fatal findings, such as unknown keys.
    pub warnings: Vec<String>,
}

impl ExperimentConfig {
    pub fn load(path: &Path, seed: u64) -> ConfigResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::new("<file>", format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base, seed)
    }

    /// Parses `text`; sample files are resolved against `base`.
    pub fn parse(text: &str, base: &Path, seed: u64) -> ConfigResult<Self> {
        let root: Table = text
            .parse()
            .map_err(|e: toml::de::Error| ConfigError::new("<file>", e.message()))?;
        let mut warnings = Vec::new();
        unknown_keys(
            &root,
            "",
            &["problem", "solvers", "tolerances", "envelope", "outputs"],
            &mut warnings,
        );

        let problem = section(&root, "problem")?.ok_or_else(|| ConfigError::new("problem", "missing section"))?;
        unknown_keys(
            problem,
            "problem.",
            &["alpha", "T", "N", "A", "B", "f", "x", "y"],
            &mut warnings,
        );

        let alpha_v = number(required(problem, "problem.alpha", "alpha")?, "problem.alpha")?;
        let alpha = FractionalOrder::new(alpha_v).map_err(|e| ConfigError::new("problem.alpha", e))?;
        let t_end = number(required(problem, "problem.T", "T")?, "problem.T")?;
        let steps = integer(required(problem, "problem.N", "N")?, "problem.N")?;
        if steps < 8 {
            return Err(ConfigError::new(
                "problem.N",
                format!("must be at least 8, got {steps}"),
            ));
        }
        let grid = TimeGrid::new(t_end, steps).map_err(|e| ConfigError::new("problem.T", e))?;

        let a_mat = matrix(required(problem, "problem.A", "A")?, "problem.A")?;
        let a = BoundedOperator::new(a_mat).map_err(|e| ConfigError::new("problem.A", e))?;
        let n = a.dim();

        let b = match problem.get("B") {
            None => TimeDependentOperator::zero(n),
            Some(v) => perturbation(v, n, &grid, base)?,
        };
        let f = match problem.get("f") {
            None => Forcing::Zero(n),
            Some(v) => forcing(v, n, &grid, base)?,
        };

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = initial(required(problem, "problem.x", "x")?, "problem.x", n, &mut rng)?;
        let y = initial(required(problem, "problem.y", "y")?, "problem.y", n, &mut rng)?;

        let solvers = match section(&root, "solvers")? {
            None => vec![SolverKind::Series],
            Some(t) => {
                unknown_keys(t, "solvers.", &["list"], &mut warnings);
                solver_list(required(t, "solvers.list", "list")?)?
            }
        };

        let mut tolerances = Tolerances::default();
        if let Some(t) = section(&root, "tolerances")? {
            unknown_keys(
                t,
                "tolerances.",
                &["series_tol", "quad_assert_tol", "cross_tol"],
                &mut warnings,
            );
            for (key, slot) in [
                ("series_tol", &mut tolerances.series_tol),
                ("quad_assert_tol", &mut tolerances.quad_assert_tol),
                ("cross_tol", &mut tolerances.cross_tol),
            ] {
                if let Some(v) = t.get(key) {
                    let field = format!("tolerances.{key}");
                    let v = number(v, &field)?;
                    if !(v > 0.0) {
                        return Err(ConfigError::new(field, format!("must be positive, got {v}")));
                    }
                    *slot = v;
                }
            }
        }

        let envelope = match section(&root, "envelope")? {
            None => None,
            Some(t) => {
                unknown_keys(t, "envelope.", &["M", "omega"], &mut warnings);
                let m = number(required(t, "envelope.M", "M")?, "envelope.M")?;
                let omega = number(required(t, "envelope.omega", "omega")?, "envelope.omega")?;
                Some(GrowthEnvelope::new(m, omega).map_err(|e| ConfigError::new("envelope", e))?)
            }
        };

        let mut outputs = Outputs::default();
        if let Some(t) = section(&root, "outputs")? {
            unknown_keys(
                t,
                "outputs.",
                &["solution", "residual", "bounds", "report"],
                &mut warnings,
            );
            for (key, slot) in [
                ("solution", &mut outputs.solution),
                ("residual", &mut outputs.residual),
                ("bounds", &mut outputs.bounds),
                ("report", &mut outputs.report),
            ] {
                if let Some(v) = t.get(key) {
                    *slot = string(v, &format!("outputs.{key}"))?.into();
                }
            }
        }

        let cfg = Self {
            alpha,
            grid,
            a,
            b,
            f,
            x,
            y,
            solvers,
            tolerances,
            envelope,
            outputs,
            warnings,
        };
        cfg.check_solvers()?;
        Ok(cfg)
    }

    /// Rejects solvers whose preconditions the problem does not meet.
    fn check_solvers(&self) -> ConfigResult<()> {
        for &s in &self.solvers {
            let needs_constant = matches!(
                s,
                SolverKind::Nonpermutable | SolverKind::Permutable | SolverKind::Classical
            );
            let Some(b) = self.b.as_constant() else {
                if needs_constant {
                    return Err(ConfigError::new(
                        "solvers.list",
                        format!("solver `{s}` requires a constant B"),
                    ));
                }
                continue;
            };
            if s == SolverKind::Classical && !self.alpha.is_classical() {
                return Err(ConfigError::new(
                    "solvers.list",
                    format!("solver `classical` requires alpha = 2, got {}", self.alpha.value()),
                ));
            }
            if s == SolverKind::Permutable {
                let c = commutator(&self.a, b).map_err(|e| ConfigError::new("problem.B", e))?;
                if !c.is_zero {
                    let err = Error::NotPermutable {
                        commutator_norm: c.value.norm(),
                    };
                    return Err(ConfigError::new("solvers.list", format!("solver `permutable`: {err}")));
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.a.dim()
    }
}

fn section<'a>(root: &'a Table, name: &str) -> ConfigResult<Option<&'a Table>> {
    match root.get(name) {
        None => Ok(None),
        Some(Value::Table(t)) => Ok(Some(t)),
        Some(_) => Err(ConfigError::new(name, "must be a section")),
    }
}

fn unknown_keys(t: &Table, prefix: &str, known: &[&str], warnings: &mut Vec<String>) {
    for key in t.keys().filter(|k| !known.contains(&k.as_str())) {
        warnings.push(format!("unknown config key `{prefix}{key}` ignored"));
    }
}

fn required<'a>(t: &'a Table, field: &str, key: &str) -> ConfigResult<&'a Value> {
    t.get(key).ok_or_else(|| ConfigError::new(field, "missing"))
}

fn number(v: &Value, field: &str) -> ConfigResult<f64> {
    let x = match v {
        Value::Float(x) => *x,
        Value::Integer(i) => *i as f64,
        _ => return Err(ConfigError::new(field, "expected a number")),
    };
    if !x.is_finite() {
        return Err(ConfigError::new(field, "must be finite"));
    }
    Ok(x)
}

fn integer(v: &Value, field: &str) -> ConfigResult<usize> {
    match v {
        Value::Integer(i) if *i >= 0 => Ok(*i as usize),
        _ => Err(ConfigError::new(field, "expected a non-negative integer")),
    }
}

fn string<'a>(v: &'a Value, field: &str) -> ConfigResult<&'a str> {
    v.as_str().ok_or_else(|| ConfigError::new(field, "expected a string"))
}

fn numbers(v: &Value, field: &str) -> ConfigResult<Vec<f64>> {
    let arr = v
        .as_array()
        .ok_or_else(|| ConfigError::new(field, "expected a list of numbers"))?;
    arr.iter().map(|x| number(x, field)).collect()
}

fn vector(v: &Value, field: &str, n: usize) -> ConfigResult<DVector<f64>> {
    let data = numbers(v, field)?;
    if data.len() != n {
        return Err(ConfigError::new(
            field,
            format!("expected {n} entries, got {}", data.len()),
        ));
    }
    Ok(DVector::from_vec(data))
}

/// Row-major nested list; every row must have the same length.
fn matrix(v: &Value, field: &str) -> ConfigResult<DMatrix<f64>> {
    let rows = v
        .as_array()
        .ok_or_else(|| ConfigError::new(field, "expected a list of rows"))?;
    let rows = rows
        .iter()
        .map(|r| numbers(r, field))
        .collect::<ConfigResult<Vec<_>>>()?;
    let cols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || cols == 0 || rows.iter().any(|r| r.len() != cols) {
        return Err(ConfigError::new(field, "rows must be non-empty and of equal length"));
    }
    Ok(DMatrix::from_row_iterator(rows.len(), cols, rows.into_iter().flatten()))
}

fn square(v: &Value, field: &str, n: usize) -> ConfigResult<BoundedOperator> {
    let m = matrix(v, field)?;
    if m.shape() != (n, n) {
        return Err(ConfigError::new(
            field,
            format!("expected {n}x{n}, got {}x{}", m.nrows(), m.ncols()),
        ));
    }
    BoundedOperator::new(m).map_err(|e| ConfigError::new(field, e))
}

fn perturbation(v: &Value, n: usize, grid: &TimeGrid, base: &Path) -> ConfigResult<TimeDependentOperator> {
    match v {
        Value::String(s) if s == "zero" => Ok(TimeDependentOperator::zero(n)),
        Value::Array(_) => Ok(TimeDependentOperator::constant(square(v, "problem.B", n)?)),
        Value::Table(t) => match (t.get("polynomial"), t.get("samples")) {
            (Some(p), None) => {
                let field = "problem.B.polynomial";
                let coeffs = p
                    .as_array()
                    .ok_or_else(|| ConfigError::new(field, "expected a list of matrices"))?;
                let coeffs = coeffs
                    .iter()
                    .map(|c| square(c, field, n))
                    .collect::<ConfigResult<Vec<_>>>()?;
                TimeDependentOperator::polynomial(coeffs).map_err(|e| ConfigError::new(field, e))
            }
            (None, Some(s)) => {
                let field = "problem.B.samples";
                let (sgrid, rows) = samples(&base.join(string(s, field)?), field, n * n, grid)?;
                let values = rows.into_iter().map(|r| DMatrix::from_row_iterator(n, n, r)).collect();
                TimeDependentOperator::tabulated(sgrid, values).map_err(|e| ConfigError::new(field, e))
            }
            _ => Err(ConfigError::new(
                "problem.B",
                "expected exactly one of `polynomial`, `samples`",
            )),
        },
        _ => Err(ConfigError::new("problem.B", "expected \"zero\", a matrix or a table")),
    }
}

fn forcing(v: &Value, n: usize, grid: &TimeGrid, base: &Path) -> ConfigResult<Forcing> {
    match v {
        Value::String(s) if s == "zero" => Ok(Forcing::Zero(n)),
        Value::Array(_) => Ok(Forcing::Constant(vector(v, "problem.f", n)?)),
        Value::Table(t) => match (t.get("polynomial"), t.get("samples")) {
            (Some(p), None) => {
                let field = "problem.f.polynomial";
                let coeffs = p
                    .as_array()
                    .ok_or_else(|| ConfigError::new(field, "expected a list of vectors"))?;
                let coeffs = coeffs
                    .iter()
                    .map(|c| vector(c, field, n))
                    .collect::<ConfigResult<Vec<_>>>()?;
                Forcing::polynomial(coeffs).map_err(|e| ConfigError::new(field, e))
            }
            (None, Some(s)) => {
                let field = "problem.f.samples";
                let (sgrid, rows) = samples(&base.join(string(s, field)?), field, n, grid)?;
                let values = rows.into_iter().map(DVector::from_vec).collect();
                Forcing::tabulated(sgrid, values).map_err(|e| ConfigError::new(field, e))
            }
            _ => Err(ConfigError::new(
                "problem.f",
                "expected exactly one of `polynomial`, `samples`",
            )),
        },
        _ => Err(ConfigError::new("problem.f", "expected \"zero\", a vector or a table")),
    }
}

/// Reads `t, v_1..v_width` rows; the times must form a uniform grid from 0
/// that covers `[0, T]` of the problem grid.
fn samples(path: &Path, field: &str, width: usize, grid: &TimeGrid) -> ConfigResult<(TimeGrid, Vec<Vec<f64>>)> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| ConfigError::new(field, format!("{}: {e}", path.display())))?;
    let mut times = Vec::new();
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| ConfigError::new(field, e))?;
        let vals = record
            .iter()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| ConfigError::new(field, format!("row {}: {e}", i + 1)))?;
        if vals.len() != width + 1 {
            return Err(ConfigError::new(
                field,
                format!("row {}: expected {} columns, got {}", i + 1, width + 1, vals.len()),
            ));
        }
        times.push(vals[0]);
        rows.push(vals[1..].to_vec());
    }
    if times.len() < 2 {
        return Err(ConfigError::new(field, "need at least two sample rows"));
    }
    let steps = times.len() - 1;
    let t_end = times[steps];
    let sgrid = TimeGrid::new(t_end, steps).map_err(|e| ConfigError::new(field, e))?;
    let h = sgrid.step();
    if times
        .iter()
        .enumerate()
        .any(|(i, &t)| (t - sgrid.node(i)).abs() > 1e-9 * h.max(t_end))
    {
        return Err(ConfigError::new(field, "sample times must be uniform and start at 0"));
    }
    if t_end < grid.t_end() * (1.0 - 1e-12) {
        return Err(ConfigError::new(
            field,
            format!("samples end at {t_end}, before T = {}", grid.t_end()),
        ));
    }
    Ok((sgrid, rows))
}

fn initial(v: &Value, field: &str, n: usize, rng: &mut ChaCha8Rng) -> ConfigResult<DVector<f64>> {
    match v {
        Value::String(s) if s == "random" => Ok(DVector::from_fn(n, |_, _| rng.random_range(-1.0..=1.0))),
        Value::Array(_) => vector(v, field, n),
        _ => Err(ConfigError::new(field, "expected a vector or \"random\"")),
    }
}

fn solver_list(v: &Value) -> ConfigResult<Vec<SolverKind>> {
    let field = "solvers.list";
    let arr = v
        .as_array()
        .ok_or_else(|| ConfigError::new(field, "expected a list of solver names"))?;
    let mut out = Vec::new();
    for item in arr {
        let name = string(item, field)?;
        let kind = SolverKind::parse(name).ok_or_else(|| {
            let known: Vec<_> = SolverKind::ALL.iter().map(|k| k.name()).collect();
            ConfigError::new(field, format!("unknown solver `{name}` (known: {})", known.join(", ")))
        })?;
        if out.contains(&kind) {
            return Err(ConfigError::new(field, format!("solver `{name}` listed twice")));
        }
        out.push(kind);
    }
    if out.is_empty() {
        return Err(ConfigError::new(field, "must name at least one solver"));
    }
    Ok(out)
}
