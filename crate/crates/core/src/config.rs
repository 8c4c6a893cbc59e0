//! TOML run configuration.
//!
//! Every real-valued entry may be a TOML number or an expression string
//! (see [`crate::expr`]), e.g. `beta = "lambda1"`. Errors name the offending
//! key together with its line and column.

use std::ops::Range;
use std::path::PathBuf;

use serde::Deserialize;
use toml::Spanned;

use crate::error::{FlatError, Result};
use crate::expr::{eval_constant, parse_field, Expr};
use crate::nonlinearity::{make_arctan_family, make_bump_family, make_linear, Nonlinearity};
use crate::solver::{Quadrature, SolverOptions, MAX_EIGENPAIRS};

#[derive(Deserialize)]
#[serde(untagged)]
enum RawNumber {
    Int(i64),
    Float(f64),
    Text(String),
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawLevels {
    One(i64),
    Many(Vec<i64>),
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawInterval {
    Keyword(String),
    Bounds(Vec<RawNumber>),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    output_dir: Option<String>,
    interval: Option<Spanned<RawInterval>>,
    mesh: RawMesh,
    nonlinearity: RawNonlinearity,
    rhs: Option<RawRhs>,
    initial: Option<RawInitial>,
    solver: Option<RawSolver>,
    trace: Option<RawTrace>,
    eigs: Option<RawEigs>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMesh {
    m: Spanned<RawLevels>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNonlinearity {
    family: Spanned<String>,
    alpha: Option<Spanned<RawNumber>>,
    beta: Option<Spanned<RawNumber>>,
    gamma: Option<Spanned<RawNumber>>,
    s0: Option<Spanned<RawNumber>>,
    width: Option<Spanned<RawNumber>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRhs {
    kind: Spanned<String>,
    expr: Option<Spanned<String>>,
    u0: Option<Spanned<Vec<(i64, RawNumber)>>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInitial {
    u0: Option<Spanned<Vec<(i64, RawNumber)>>>,
    field: Option<Spanned<String>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSolver {
    c: Option<Spanned<RawNumber>>,
    tol: Option<Spanned<RawNumber>>,
    max_iter: Option<Spanned<i64>>,
    depth_max: Option<Spanned<i64>>,
    dense_limit: Option<Spanned<i64>>,
    quadrature: Option<Spanned<String>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTrace {
    window: Option<Spanned<Vec<RawNumber>>>,
    steps: Option<Spanned<i64>>,
    radius: Option<Spanned<RawNumber>>,
    points: Option<Spanned<i64>>,
    directions: Option<Spanned<Vec<Vec<RawNumber>>>>,
    r_max: Option<Spanned<RawNumber>>,
    radial_steps: Option<Spanned<i64>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEigs {
    count: Option<Spanned<i64>>,
}

/// Parameters of a built-in nonlinearity, with expressions already evaluated.
#[derive(Clone, Debug, PartialEq)]
pub enum NonlinearitySpec {
    Linear {
        beta: f64,
    },
    Arctan {
        alpha: f64,
        beta: f64,
    },
    Bump {
        beta: f64,
        alpha: f64,
        gamma: f64,
        s0: f64,
        width: f64,
    },
}

impl NonlinearitySpec {
    pub fn build(&self) -> Result<Nonlinearity> {
        match *self {
            Self::Linear { beta } => Ok(make_linear(beta)),
            Self::Arctan { alpha, beta } => make_arctan_family(alpha, beta),
            Self::Bump {
                beta,
                alpha,
                gamma,
                s0,
                width,
            } => make_bump_family(beta, alpha, gamma, s0, width),
        }
    }
}

/// Right-hand side `g`.
#[derive(Clone, Debug, PartialEq)]
pub enum RhsSpec {
    /// `ĝ = M ḡ` with `ḡ` the nodal interpolant of a closed-form expression.
    Expr { source: String, expr: Expr },
    /// `ĝ = F(Σ c_k φ_k)`.
    FOfU0(Vec<(usize, f64)>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceSpec {
    pub window: (f64, f64),
    pub steps: usize,
    pub radius: f64,
    pub points: usize,
    pub directions: Vec<[f64; 2]>,
    pub r_max: f64,
    pub radial_steps: usize,
}

impl Default for TraceSpec {
    fn default() -> Self {
        Self {
            window: (-120.0, 120.0),
            steps: 121,
            radius: 60.0,
            points: 72,
            directions: vec![[1.0, 0.0], [-1.0, 0.0]],
            r_max: 150.0,
            radial_steps: 60,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub levels: Vec<u32>,
    pub nonlinearity: NonlinearitySpec,
    /// `None` means the derivative range of the nonlinearity.
    pub interval: Option<(f64, f64)>,
    pub rhs: RhsSpec,
    /// Starting point `Σ c_k φ_k` for horizontal solves.
    pub initial: Vec<(usize, f64)>,
    /// Field CSV used as starting point instead, relative to the config file.
    pub initial_field: Option<PathBuf>,
    pub solver: SolverOptions,
    pub trace: TraceSpec,
    pub eigs_count: usize,
    pub output_dir: Option<PathBuf>,
}

impl RunConfig {
    /// The single mesh level, for commands that do not loop over levels.
    pub fn single_level(&self) -> Result<u32> {
        match self.levels.as_slice() {
            [m] => Ok(*m),
            _ => Err(FlatError::Config(format!(
                "this command needs a single mesh level, the config lists {:?}",
                self.levels
            ))),
        }
    }

    /// Eigenpairs needed to resolve every coefficient index in the config.
    pub fn max_coefficient_index(&self) -> usize {
        let rhs = match &self.rhs {
            RhsSpec::FOfU0(c) => c.iter().map(|&(k, _)| k).max().unwrap_or(0),
            RhsSpec::Expr { .. } => 0,
        };
        rhs.max(self.initial.iter().map(|&(k, _)| k).max().unwrap_or(0))
    }
}

struct Ctx<'a> {
    src: &'a str,
}

impl Ctx<'_> {
    fn position(&self, offset: usize) -> (usize, usize) {
        let before = &self.src[..offset.min(self.src.len())];
        let line = before.matches('\n').count() + 1;
        let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
        (line, column)
    }

    fn fail<T>(&self, span: Range<usize>, key: &str, message: impl std::fmt::Display) -> Result<T> {
        let (line, column) = self.position(span.start);
        Err(FlatError::Config(format!(
            "line {line}, column {column}: `{key}`: {message}"
        )))
    }

    fn number(&self, raw: &Spanned<RawNumber>, key: &str) -> Result<f64> {
        let value = match raw.get_ref() {
            RawNumber::Int(v) => *v as f64,
            RawNumber::Float(v) => *v,
            RawNumber::Text(s) => match eval_constant(s) {
                Ok(v) => v,
                Err(FlatError::Expression { column, message }) => {
                    return self.fail(raw.span(), key, format!("in expression at column {column}: {message}"))
                }
                Err(e) => return self.fail(raw.span(), key, e),
            },
        };
        if !value.is_finite() {
            return self.fail(raw.span(), key, "value is not finite");
        }
        Ok(value)
    }

    fn opt_number(&self, raw: &Option<Spanned<RawNumber>>, key: &str, default: f64) -> Result<f64> {
        raw.as_ref().map_or(Ok(default), |r| self.number(r, key))
    }

    fn required(&self, raw: &Option<Spanned<RawNumber>>, key: &str, section: Range<usize>) -> Result<f64> {
        match raw {
            Some(r) => self.number(r, key),
            None => self.fail(section, key, "missing required value"),
        }
    }

    fn count(&self, raw: &Option<Spanned<i64>>, key: &str, default: usize, min: usize, max: usize) -> Result<usize> {
        let Some(raw) = raw else { return Ok(default) };
        let v = *raw.get_ref();
        if v < min as i64 || v > max as i64 {
            return self.fail(
                raw.span(),
                key,
                format!("expected an integer in {min}..={max}, got {v}"),
            );
        }
        Ok(v as usize)
    }

    fn coefficients(&self, raw: &Spanned<Vec<(i64, RawNumber)>>, key: &str) -> Result<Vec<(usize, f64)>> {
        let mut out = Vec::new();
        for (k, c) in raw.get_ref() {
            if *k < 1 || *k > MAX_EIGENPAIRS as i64 {
                return self.fail(
                    raw.span(),
                    key,
                    format!("eigenvector index {k} outside 1..={MAX_EIGENPAIRS}"),
                );
            }
            let value = match c {
                RawNumber::Int(v) => *v as f64,
                RawNumber::Float(v) => *v,
                RawNumber::Text(s) => eval_constant(s).or_else(|e| self.fail(raw.span(), key, e))?,
            };
            if !value.is_finite() {
                return self.fail(raw.span(), key, "coefficient is not finite");
            }
            if out.iter().any(|&(j, _)| j == *k as usize) {
                return self.fail(raw.span(), key, format!("eigenvector index {k} listed twice"));
            }
            out.push((*k as usize, value));
        }
        Ok(out)
    }
}

/// Parses and validates a configuration file.
pub fn parse_config(src: &str) -> Result<RunConfig> {
    let raw: RawConfig = toml::from_str(src).map_err(|e| FlatError::Config(e.to_string().trim_end().to_string()))?;
    let ctx = Ctx { src };

    let levels = match raw.mesh.m.get_ref() {
        RawLevels::One(m) => vec![*m],
        RawLevels::Many(ms) => ms.clone(),
    };
    if levels.is_empty() {
        return ctx.fail(raw.mesh.m.span(), "mesh.m", "no mesh level given");
    }
    for &m in &levels {
        if !(crate::mesh::MIN_LEVEL as i64..=crate::mesh::MAX_LEVEL as i64).contains(&m) {
            return ctx.fail(
                raw.mesh.m.span(),
                "mesh.m",
                format!(
                    "level {m} outside {}..={}",
                    crate::mesh::MIN_LEVEL,
                    crate::mesh::MAX_LEVEL
                ),
            );
        }
    }
    let levels: Vec<u32> = levels.into_iter().map(|m| m as u32).collect();

    let nl = &raw.nonlinearity;
    let section = nl.family.span();
    let nonlinearity = match nl.family.get_ref().as_str() {
        "linear" => {
            for (v, k) in [
                (&nl.alpha, "alpha"),
                (&nl.gamma, "gamma"),
                (&nl.s0, "s0"),
                (&nl.width, "width"),
            ] {
                if let Some(v) = v {
                    return ctx.fail(
                        v.span(),
                        &format!("nonlinearity.{k}"),
                        "not a parameter of the linear family",
                    );
                }
            }
            NonlinearitySpec::Linear {
                beta: ctx.required(&nl.beta, "nonlinearity.beta", section.clone())?,
            }
        }
        "arctan" => {
            for (v, k) in [(&nl.gamma, "gamma"), (&nl.s0, "s0"), (&nl.width, "width")] {
                if let Some(v) = v {
                    return ctx.fail(
                        v.span(),
                        &format!("nonlinearity.{k}"),
                        "not a parameter of the arctan family",
                    );
                }
            }
            NonlinearitySpec::Arctan {
                alpha: ctx.required(&nl.alpha, "nonlinearity.alpha", section.clone())?,
                beta: ctx.required(&nl.beta, "nonlinearity.beta", section.clone())?,
            }
        }
        "bump" => NonlinearitySpec::Bump {
            beta: ctx.required(&nl.beta, "nonlinearity.beta", section.clone())?,
            alpha: ctx.opt_number(&nl.alpha, "nonlinearity.alpha", 0.0)?,
            gamma: ctx.required(&nl.gamma, "nonlinearity.gamma", section.clone())?,
            s0: ctx.opt_number(&nl.s0, "nonlinearity.s0", 0.0)?,
            width: ctx.required(&nl.width, "nonlinearity.width", section.clone())?,
        },
        other => {
            return ctx.fail(
                section,
                "nonlinearity.family",
                format!("unknown family `{other}` (expected linear, arctan or bump)"),
            )
        }
    };
    // surface parameter errors (e.g. negative width) as config errors
    if let Err(e) = nonlinearity.build() {
        return ctx.fail(nl.family.span(), "nonlinearity", e);
    }

    let interval = match &raw.interval {
        None => None,
        Some(sp) => match sp.get_ref() {
            RawInterval::Keyword(k) if k == "auto" => None,
            RawInterval::Keyword(k) => {
                return ctx.fail(
                    sp.span(),
                    "interval",
                    format!("expected \"auto\" or [a, b], got \"{k}\""),
                )
            }
            RawInterval::Bounds(b) => {
                let [a, b] = b.as_slice() else {
                    return ctx.fail(sp.span(), "interval", "expected exactly two bounds");
                };
                let a = ctx.number(&Spanned::new(sp.span(), clone_number(a)), "interval[0]")?;
                let b = ctx.number(&Spanned::new(sp.span(), clone_number(b)), "interval[1]")?;
                if !(a < b) {
                    return ctx.fail(
                        sp.span(),
                        "interval",
                        format!("lower bound {a} is not below upper bound {b}"),
                    );
                }
                Some((a, b))
            }
        },
    };

    let rhs = match &raw.rhs {
        None => RhsSpec::FOfU0(Vec::new()),
        Some(r) => match r.kind.get_ref().as_str() {
            "expr" => {
                if let Some(u0) = &r.u0 {
                    return ctx.fail(u0.span(), "rhs.u0", "not used when rhs.kind = \"expr\"");
                }
                let Some(src_expr) = &r.expr else {
                    return ctx.fail(r.kind.span(), "rhs.expr", "missing required value");
                };
                let expr = match parse_field(src_expr.get_ref()) {
                    Ok(e) => e,
                    Err(FlatError::Expression { column, message }) => {
                        return ctx.fail(src_expr.span(), "rhs.expr", format!("at column {column}: {message}"))
                    }
                    Err(e) => return Err(e),
                };
                RhsSpec::Expr {
                    source: src_expr.get_ref().clone(),
                    expr,
                }
            }
            "f-of-u0" => {
                if let Some(e) = &r.expr {
                    return ctx.fail(e.span(), "rhs.expr", "not used when rhs.kind = \"f-of-u0\"");
                }
                match &r.u0 {
                    Some(u0) => RhsSpec::FOfU0(ctx.coefficients(u0, "rhs.u0")?),
                    None => RhsSpec::FOfU0(Vec::new()),
                }
            }
            other => {
                return ctx.fail(
                    r.kind.span(),
                    "rhs.kind",
                    format!("unknown kind `{other}` (expected expr or f-of-u0)"),
                )
            }
        },
    };

    let (initial, initial_field) = match &raw.initial {
        Some(RawInitial {
            u0: Some(u0),
            field: Some(_),
        }) => return ctx.fail(u0.span(), "initial", "give either u0 or field, not both"),
        Some(RawInitial { u0: Some(u0), .. }) => (ctx.coefficients(u0, "initial.u0")?, None),
        Some(RawInitial { field: Some(f), .. }) => {
            if f.get_ref().is_empty() {
                return ctx.fail(f.span(), "initial.field", "empty path");
            }
            (Vec::new(), Some(PathBuf::from(f.get_ref())))
        }
        _ => (Vec::new(), None),
    };

    let mut solver = SolverOptions::default();
    if let Some(s) = &raw.solver {
        solver.c = ctx.opt_number(&s.c, "solver.c", solver.c)?;
        solver.tol = ctx.opt_number(&s.tol, "solver.tol", solver.tol)?;
        if let Some(t) = &s.tol {
            if !(solver.tol > 0.0 && solver.tol < 1.0) {
                return ctx.fail(t.span(), "solver.tol", "expected a value in (0, 1)");
            }
        }
        solver.max_iter = ctx.count(&s.max_iter, "solver.max_iter", solver.max_iter, 1, 1000)?;
        solver.depth_max = ctx.count(&s.depth_max, "solver.depth_max", solver.depth_max, 0, 30)?;
        solver.dense_limit = ctx.count(&s.dense_limit, "solver.dense_limit", solver.dense_limit, 0, 1 << 20)?;
        if let Some(q) = &s.quadrature {
            solver.quadrature = q
                .get_ref()
                .parse::<Quadrature>()
                .or_else(|e| ctx.fail(q.span(), "solver.quadrature", e))?;
        }
    }

    let mut trace = TraceSpec::default();
    if let Some(t) = &raw.trace {
        if let Some(w) = &t.window {
            let [a, b] = w.get_ref().as_slice() else {
                return ctx.fail(w.span(), "trace.window", "expected [t_min, t_max]");
            };
            let a = ctx.number(&Spanned::new(w.span(), clone_number(a)), "trace.window[0]")?;
            let b = ctx.number(&Spanned::new(w.span(), clone_number(b)), "trace.window[1]")?;
            if !(a < b) {
                return ctx.fail(w.span(), "trace.window", "t_min must be below t_max");
            }
            trace.window = (a, b);
        }
        trace.steps = ctx.count(&t.steps, "trace.steps", trace.steps, 2, 100_000)?;
        trace.radius = ctx.opt_number(&t.radius, "trace.radius", trace.radius)?;
        if let Some(r) = &t.radius {
            if trace.radius < 0.0 {
                return ctx.fail(r.span(), "trace.radius", "radius must be non-negative");
            }
        }
        trace.points = ctx.count(&t.points, "trace.points", trace.points, 3, 100_000)?;
        if let Some(d) = &t.directions {
            let mut dirs = Vec::new();
            for pair in d.get_ref() {
                let [a, b] = pair.as_slice() else {
                    return ctx.fail(d.span(), "trace.directions", "each direction needs two components");
                };
                let a = ctx.number(&Spanned::new(d.span(), clone_number(a)), "trace.directions")?;
                let b = ctx.number(&Spanned::new(d.span(), clone_number(b)), "trace.directions")?;
                if a == 0.0 && b == 0.0 {
                    return ctx.fail(d.span(), "trace.directions", "zero direction");
                }
                dirs.push([a, b]);
            }
            trace.directions = dirs;
        }
        trace.r_max = ctx.opt_number(&t.r_max, "trace.r_max", trace.r_max)?;
        if let Some(r) = &t.r_max {
            if trace.r_max < 0.0 {
                return ctx.fail(r.span(), "trace.r_max", "r_max must be non-negative");
            }
        }
        trace.radial_steps = ctx.count(&t.radial_steps, "trace.radial_steps", trace.radial_steps, 1, 100_000)?;
    }

    let eigs_count = match &raw.eigs {
        Some(e) => ctx.count(&e.count, "eigs.count", 3, 1, MAX_EIGENPAIRS)?,
        None => 3,
    };

    Ok(RunConfig {
        levels,
        nonlinearity,
        interval,
        rhs,
        initial,
        initial_field,
        solver,
        trace,
        eigs_count,
        output_dir: raw.output_dir.map(PathBuf::from),
    })
}

fn clone_number(n: &RawNumber) -> RawNumber {
    match n {
        RawNumber::Int(v) => RawNumber::Int(*v),
        RawNumber::Float(v) => RawNumber::Float(*v),
        RawNumber::Text(s) => RawNumber::Text(s.clone()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::analytic_eigenvalues;
    use std::f64::consts::PI;

    const TABLE: &str = r#"
output_dir = "out/table"

[mesh]
m = [3, 4, 5]

[nonlinearity]
family = "arctan"
alpha = "(lambda2 - lambda1) / pi"
beta = "lambda1"

[rhs]
kind = "expr"
expr = "-100*x*(x-1)*y*(y-2)"

[initial]
u0 = [[2, 100]]

[solver]
tol = 1e-12
quadrature = "nodal"
"#;

    fn message(src: &str) -> String {
        match parse_config(src) {
            Err(FlatError::Config(m)) => m,
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn parses_a_full_config() {
        let c = parse_config(TABLE).unwrap();
        let l = analytic_eigenvalues(2);
        assert_eq!(c.levels, vec![3, 4, 5]);
        match c.nonlinearity {
            NonlinearitySpec::Arctan { alpha, beta } => {
                assert!((alpha - (l[1] - l[0]) / PI).abs() < 1e-14);
                assert_eq!(beta, l[0]);
            }
            ref other => panic!("{other:?}"),
        }
        assert_eq!(c.interval, None);
        match &c.rhs {
            RhsSpec::Expr { expr, .. } => assert_eq!(expr.eval(0.5, 1.0), -25.0),
            other => panic!("{other:?}"),
        }
        assert_eq!(c.initial, vec![(2, 100.0)]);
        assert_eq!(c.initial_field, None);
        assert_eq!(c.solver.tol, 1e-12);
        assert_eq!(c.solver.quadrature, Quadrature::Nodal);
        assert_eq!(c.solver.max_iter, 20);
        assert_eq!(c.trace, TraceSpec::default());
        assert_eq!(c.output_dir, Some(PathBuf::from("out/table")));
        assert!(c.single_level().is_err());
    }

    #[test]
    fn minimal_config_uses_defaults() {
        let c = parse_config("[mesh]\nm = 2\n[nonlinearity]\nfamily = \"linear\"\nbeta = 3\n").unwrap();
        assert_eq!(c.single_level().unwrap(), 2);
        assert_eq!(c.nonlinearity, NonlinearitySpec::Linear { beta: 3.0 });
        assert_eq!(c.rhs, RhsSpec::FOfU0(Vec::new()));
        assert_eq!(c.solver, SolverOptions::default());
        assert_eq!(c.eigs_count, 3);
    }

    #[test]
    fn explicit_interval_and_bump_family() {
        let src = r#"
interval = ["lambda1 - 7.5", "lambda1 + 3"]
[mesh]
m = 4
[nonlinearity]
family = "bump"
beta = "lambda1 - 10"
gamma = 17
s0 = 10
width = 15
[rhs]
kind = "f-of-u0"
u0 = [[1, -50], [2, "5*2"]]
"#;
        let c = parse_config(src).unwrap();
        let l1 = analytic_eigenvalues(1)[0];
        assert_eq!(c.interval, Some((l1 - 7.5, l1 + 3.0)));
        assert_eq!(c.rhs, RhsSpec::FOfU0(vec![(1, -50.0), (2, 10.0)]));
        assert_eq!(c.max_coefficient_index(), 2);
    }

    #[test]
    fn diagnostics_carry_line_and_key() {
        let m = message("[mesh]\nm = 0\n[nonlinearity]\nfamily = \"linear\"\nbeta = 1\n");
        assert!(m.contains("line 2") && m.contains("mesh.m"), "{m}");
        let m = message("[mesh]\nm = 3\n[nonlinearity]\nfamily = \"arctan\"\nalpha = \"1 +\"\nbeta = 1\n");
        assert!(
            m.contains("line 5") && m.contains("nonlinearity.alpha") && m.contains("column"),
            "{m}"
        );
        let m = message("[mesh]\nm = 3\n[nonlinearity]\nfamily = \"cubic\"\n");
        assert!(m.contains("line 4") && m.contains("unknown family"), "{m}");
        let m = message("[mesh]\nm = 3\n[nonlinearity]\nfamily = \"arctan\"\nbeta = 1\n");
        assert!(m.contains("nonlinearity.alpha") && m.contains("missing"), "{m}");
        let m = message("[mesh]\nm = 3\nwidth = 2\n[nonlinearity]\nfamily = \"linear\"\nbeta = 1\n");
        assert!(m.contains("line 3") && m.contains("width"), "{m}");
        let m = message("[mesh]\nm = 3\n[nonlinearity\n");
        assert!(m.contains("line 3"), "{m}");
        let m = message(
            "[mesh]\nm = 3\n[nonlinearity]\nfamily = \"linear\"\nbeta = 1\n[rhs]\nkind = \"f-of-u0\"\nu0 = [[11, 1]]\n",
        );
        assert!(m.contains("line 8") && m.contains("rhs.u0"), "{m}");
        let m = message(
            "[mesh]\nm = 3\n[nonlinearity]\nfamily = \"linear\"\nbeta = 1\n[solver]\nquadrature = \"midpoint\"\n",
        );
        assert!(m.contains("line 7") && m.contains("solver.quadrature"), "{m}");
        let m = message("interval = [2, 1]\n[mesh]\nm = 3\n[nonlinearity]\nfamily = \"linear\"\nbeta = 1\n");
        assert!(m.contains("line 1") && m.contains("interval"), "{m}");
        let m = message("[mesh]\nm = 3\n[nonlinearity]\nfamily = \"bump\"\nbeta = 1\ngamma = 1\nwidth = -1\n");
        assert!(m.contains("nonlinearity") && m.contains("width"), "{m}");
    }

    #[test]
    fn initial_field_excludes_coefficients() {
        let base = "[mesh]\nm = 3\n[nonlinearity]\nfamily = \"linear\"\nbeta = 1\n[initial]\n";
        let c = parse_config(&format!("{base}field = \"start.csv\"\n")).unwrap();
        assert_eq!(c.initial_field, Some(PathBuf::from("start.csv")));
        let m = message(&format!("{base}field = \"start.csv\"\nu0 = [[1, 2]]\n"));
        assert!(m.contains("either"), "{m}");
    }

    #[test]
    fn missing_sections_are_reported() {
        assert!(message("[nonlinearity]\nfamily = \"linear\"\nbeta = 1\n").contains("mesh"));
        assert!(message("[mesh]\nm = 3\n").contains("nonlinearity"));
    }
}
