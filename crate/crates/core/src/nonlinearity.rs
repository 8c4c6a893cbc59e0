//! Nonlinearities `f(x, s)` with bounded `∂₂f`, and the built-in families.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::error::{FlatError, Result};
use crate::field::NodalField;
use crate::mesh::{Mesh, Point};
use crate::spectral::{default_gap, index_set};

/// Number of samples used to bound `∂₂f` for families without closed-form extrema.
pub const VALIDATION_GRID: usize = 100_000;

type ScalarFn = Arc<dyn Fn(Point, f64) -> f64 + Send + Sync>;

#[derive(Clone)]
enum Family {
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
    Custom {
        f: ScalarFn,
        d2f: ScalarFn,
    },
}

/// `f` together with `∂₂f` and certified bounds `∂₂f(Ω × ℝ) ⊂ [a, b]`.
#[derive(Clone)]
pub struct Nonlinearity {
    family: Family,
    range: (f64, f64),
    label: String,
}

impl fmt::Debug for Nonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Nonlinearity")
            .field("label", &self.label)
            .field("range", &self.range)
            .finish()
    }
}

/// `s·atan(s) − ½ ln(1 + s²)`, the antiderivative of `atan` vanishing at 0.
fn atan_antiderivative(s: f64) -> f64 {
    s * s.atan() - 0.5 * (s * s).ln_1p()
}

/// Linear `f(s) = βs`.
pub fn make_linear(beta: f64) -> Nonlinearity {
    Nonlinearity {
        family: Family::Arctan { alpha: 0.0, beta },
        range: (beta, beta),
        label: format!("linear(beta={beta})"),
    }
}

/// `f′(s) = α atan(s) + β`, `f(0) = 0`.
pub fn make_arctan_family(alpha: f64, beta: f64) -> Result<Nonlinearity> {
    if !(alpha >= 0.0) || !beta.is_finite() || !alpha.is_finite() {
        return Err(FlatError::Argument(format!(
            "arctan family needs finite alpha >= 0, got {alpha}"
        )));
    }
    Ok(Nonlinearity {
        family: Family::Arctan { alpha, beta },
        range: (beta - alpha * PI / 2.0, beta + alpha * PI / 2.0),
        label: format!("arctan(alpha={alpha},beta={beta})"),
    })
}

/// `f′(s) = β + α atan(s) + γ exp(−((s − s₀)/w)²)`, `f(0) = 0`.
///
/// The bounds come from the asymptotic limits `β ± |α|π/2` together with the
/// extrema of `f′` on a fine grid, each polished by golden-section search.
pub fn make_bump_family(beta: f64, alpha: f64, gamma: f64, s0: f64, width: f64) -> Result<Nonlinearity> {
    if !(width > 0.0) || ![beta, alpha, gamma, s0, width].iter().all(|v| v.is_finite()) {
        return Err(FlatError::Argument(format!(
            "bump family needs finite parameters and width > 0, got {width}"
        )));
    }
    let d2f = |s: f64| beta + alpha * s.atan() + gamma * (-((s - s0) / width).powi(2)).exp();
    let lo = (s0 - 12.0 * width).min(-50.0);
    let hi = (s0 + 12.0 * width).max(50.0);
    let step = (hi - lo) / (VALIDATION_GRID - 1) as f64;
    let (mut imin, mut imax) = (0, 0);
    let (mut vmin, mut vmax) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..VALIDATION_GRID {
        let v = d2f(lo + i as f64 * step);
        if v < vmin {
            vmin = v;
            imin = i;
        }
        if v > vmax {
            vmax = v;
            imax = i;
        }
    }
    let polish = |i: usize, sign: f64| {
        let centre = lo + i as f64 * step;
        let x = golden_section(|s| -sign * d2f(s), centre - step, centre + step);
        sign * (sign * d2f(x)).max(sign * d2f(centre))
    };
    vmin = polish(imin, -1.0);
    vmax = polish(imax, 1.0);
    let limit = alpha.abs() * PI / 2.0;
    Ok(Nonlinearity {
        family: Family::Bump {
            beta,
            alpha,
            gamma,
            s0,
            width,
        },
        range: (vmin.min(beta - limit), vmax.max(beta + limit)),
        label: format!("bump(beta={beta},alpha={alpha},gamma={gamma},s0={s0},width={width})"),
    })
}

/// Minimizer of a unimodal `g` on `[a, b]`.
fn golden_section(g: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    for _ in 0..200 {
        if (b - a).abs() <= 1e-14 * (1.0 + a.abs()) {
            break;
        }
        if g(c) < g(d) {
            b = d;
        } else {
            a = c;
        }
        c = b - r * (b - a);
        d = a + r * (b - a);
    }
    0.5 * (a + b)
}

impl Nonlinearity {
    /// A user-supplied (possibly non-autonomous) nonlinearity. `range` must
    /// enclose every value of `d2f`.
    pub fn custom(
        label: impl Into<String>,
        f: impl Fn(Point, f64) -> f64 + Send + Sync + 'static,
        d2f: impl Fn(Point, f64) -> f64 + Send + Sync + 'static,
        range: (f64, f64),
    ) -> Result<Self> {
        if !(range.0 <= range.1) {
            return Err(FlatError::Argument(format!("empty derivative range {range:?}")));
        }
        Ok(Self {
            family: Family::Custom {
                f: Arc::new(f),
                d2f: Arc::new(d2f),
            },
            range,
            label: label.into(),
        })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// `[a, b] ⊇ ∂₂f(Ω × ℝ)`.
    pub fn range_bounds(&self) -> (f64, f64) {
        self.range
    }

    pub fn f(&self, x: Point, s: f64) -> f64 {
        match &self.family {
            Family::Arctan { alpha, beta } => alpha * atan_antiderivative(s) + beta * s,
            Family::Bump {
                beta,
                alpha,
                gamma,
                s0,
                width,
            } => {
                let gauss = gamma * width * PI.sqrt() / 2.0 * (libm::erf((s - s0) / width) + libm::erf(s0 / width));
                alpha * atan_antiderivative(s) + beta * s + gauss
            }
            Family::Custom { f, .. } => f(x, s),
        }
    }

    pub fn d2f(&self, x: Point, s: f64) -> f64 {
        match &self.family {
            Family::Arctan { alpha, beta } => alpha * s.atan() + beta,
            Family::Bump {
                beta,
                alpha,
                gamma,
                s0,
                width,
            } => beta + alpha * s.atan() + gamma * (-((s - s0) / width).powi(2)).exp(),
            Family::Custom { d2f, .. } => d2f(x, s),
        }
    }

    /// Extremes of `∂₂f` over a log-spaced grid of `s ∈ [−10⁴, 10⁴]` and a
    /// coarse grid of points in `Ω`.
    pub fn sampled_d2f_extrema(&self) -> (f64, f64) {
        let mut ss = vec![0.0];
        for i in 0..=400 {
            let mag = 10f64.powf(-4.0 + 8.0 * i as f64 / 400.0);
            ss.push(mag);
            ss.push(-mag);
        }
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for ix in 0..=4 {
            for iy in 0..=4 {
                let x = [ix as f64 / 4.0, 2.0 * iy as f64 / 4.0];
                for &s in &ss {
                    let v = self.d2f(x, s);
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
            }
        }
        (lo, hi)
    }
}

/// Outcome of [`validate_appropriate`].
#[derive(Clone, Debug)]
pub struct Verdict {
    /// `(k, λ_k, λ_k − a, b − λ_k)` for every computed eigenvalue.
    pub distances: Vec<(usize, f64, f64, f64)>,
    pub index_set: Vec<usize>,
    pub margin: f64,
    pub passed: bool,
}

/// Checks the standing hypotheses for `[a, b]` (defaults to the nonlinearity's
/// derivative bounds) against the computed spectrum.
pub fn validate_appropriate(nl: &Nonlinearity, eigenvalues: &[f64], interval: Option<(f64, f64)>) -> Result<Verdict> {
    let (a, b) = interval.unwrap_or(nl.range);
    let (ra, rb) = nl.range;
    if a > ra || b < rb {
        return Err(FlatError::Argument(format!(
            "interval [{a}, {b}] does not contain the derivative range [{ra}, {rb}]"
        )));
    }
    let largest = eigenvalues.last().copied().unwrap_or(f64::NEG_INFINITY);
    if largest <= b {
        return Err(FlatError::NeedsMoreEigenvalues { largest, upper: b });
    }
    let margin = default_gap(a, b);
    let distances = eigenvalues
        .iter()
        .enumerate()
        .map(|(i, &l)| (i + 1, l, l - a, b - l))
        .collect();
    let (index_set, passed) = match index_set(eigenvalues, a, b, margin) {
        Ok(set) => (set, true),
        Err(FlatError::Resonance { .. }) => (
            eigenvalues
                .iter()
                .enumerate()
                .filter(|(_, &l)| a <= l && l <= b)
                .map(|(i, _)| i + 1)
                .collect(),
            false,
        ),
        Err(e) => return Err(e),
    };
    Ok(Verdict {
        distances,
        index_set,
        margin,
        passed,
    })
}

fn eval_nodal(mesh: &Mesh, u: &NodalField, context: &'static str, g: impl Fn(Point, f64) -> f64) -> Result<NodalField> {
    assert_eq!(u.len(), mesh.num_dofs());
    let mut out = Vec::with_capacity(u.len());
    for (node, (p, &s)) in mesh.dof_points().zip(u.0.iter()).enumerate() {
        let value = g(p, s);
        if !value.is_finite() {
            return Err(FlatError::Evaluation { node, value, context });
        }
        out.push(value);
    }
    Ok(NodalField::from_vec(out))
}

/// `f(ν_j, ū_j)` at every interior node.
pub fn eval_f_nodal(nl: &Nonlinearity, mesh: &Mesh, u: &NodalField) -> Result<NodalField> {
    eval_nodal(mesh, u, "f", |p, s| nl.f(p, s))
}

/// `∂₂f(ν_j, ū_j)` at every interior node.
pub fn eval_d2f_nodal(nl: &Nonlinearity, mesh: &Mesh, u: &NodalField) -> Result<NodalField> {
    eval_nodal(mesh, u, "d2f", |p, s| nl.d2f(p, s))
}
