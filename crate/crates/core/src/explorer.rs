//! Sampling fibers and inverting `F` restricted to them.
//!
//! A fiber `α_g` is parameterized by height `t ∈ R^|𝒦|` through `H_g`; its
//! image is the vertical line (or plane) `P_Y ĝ + V`, coordinatized by
//! `s_k = φ_kᵀ F(H_g(t))`. Solutions of `F(u) = ĝ` are the fiber points whose
//! image height equals the height of `ĝ`.

use crate::error::{FlatError, Result};
use crate::field::{DualField, NodalField};
use crate::solver::{fiber_point_at, move_along_fiber, newton_full, Problem};

/// Bracket width at which bisection on a 1-D trace stops.
pub const BISECTION_WIDTH: f64 = 1e-6;

/// Normalized full residual demanded from polished solutions.
pub const POLISH_TOL: f64 = 1e-10;

/// Sampled restriction of `F` to a fiber.
#[derive(Clone, Debug)]
pub struct FiberTrace {
    pub heights_in: Vec<Vec<f64>>,
    pub heights_out: Vec<Vec<f64>>,
    pub fiber_points: Vec<NodalField>,
    pub g_ref: DualField,
    /// The samples form a closed loop (circle traces).
    pub closed: bool,
}

impl FiberTrace {
    fn new(g: &DualField, closed: bool) -> Self {
        Self {
            heights_in: Vec::new(),
            heights_out: Vec::new(),
            fiber_points: Vec::new(),
            g_ref: g.clone(),
            closed,
        }
    }

    pub fn len(&self) -> usize {
        self.heights_in.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heights_in.is_empty()
    }

    fn push(&mut self, p: &Problem, t: Vec<f64>, u: NodalField) -> Result<()> {
        self.heights_out.push(image_heights(p, &u)?);
        self.heights_in.push(t);
        self.fiber_points.push(u);
        Ok(())
    }
}

/// `s_k = ⟨F(u), Kφ_k⟩_Y = φ_kᵀ F(u)` for `k ∈ 𝒦`.
pub fn image_heights(p: &Problem, u: &NodalField) -> Result<Vec<f64>> {
    Ok(p.spectral().heights_y(&p.eval_f(u)?))
}

fn require_dim(p: &Problem, dim: usize, what: &str) -> Result<()> {
    let got = p.spectral().vertical_dim();
    if got != dim {
        return Err(FlatError::Argument(format!(
            "{what} needs |𝒦| = {dim}, the problem has |𝒦| = {got}"
        )));
    }
    Ok(())
}

fn aborted(trace: FiberTrace, requested: usize, source: FlatError) -> FlatError {
    FlatError::TraceAborted {
        partial: Box::new(trace),
        requested,
        source: Box::new(source),
    }
}

/// Follows a path of heights, each point warm-started from the previous one.
fn follow(p: &Problem, g: &DualField, path: &[Vec<f64>], closed: bool) -> Result<FiberTrace> {
    let mut trace = FiberTrace::new(g, closed);
    let mut prev: Option<(Vec<f64>, NodalField)> = None;
    for t in path {
        let step = match &prev {
            None => fiber_point_at(p, t, g),
            Some((t0, u0)) => {
                let dt: Vec<f64> = t.iter().zip(t0).map(|(a, b)| a - b).collect();
                move_along_fiber(p, u0, &dt, g)
            }
        };
        let u = match step.and_then(|(u, _)| image_heights(p, &u).map(|_| u)) {
            Ok(u) => u,
            Err(e) => return Err(aborted(trace, path.len(), e)),
        };
        trace.push(p, t.clone(), u.clone())?;
        prev = Some((t.clone(), u));
    }
    Ok(trace)
}

/// Samples `s(t)` on `steps` equispaced heights in `[t_min, t_max]`.
pub fn trace_fiber_1d(p: &Problem, g: &DualField, t_min: f64, t_max: f64, steps: usize) -> Result<FiberTrace> {
    require_dim(p, 1, "a 1-D trace")?;
    if steps < 2 || !(t_min < t_max) {
        return Err(FlatError::Argument(format!(
            "1-D trace needs t_min < t_max and at least 2 samples, got [{t_min}, {t_max}] with {steps}"
        )));
    }
    let h = (t_max - t_min) / (steps - 1) as f64;
    let path: Vec<Vec<f64>> = (0..steps).map(|i| vec![t_min + h * i as f64]).collect();
    follow(p, g, &path, false)
}

/// Samples the image of the circle `radius·(cos θ_j, sin θ_j)`, `θ_j = 2πj/n`.
pub fn trace_circle_2d(p: &Problem, g: &DualField, radius: f64, n: usize) -> Result<FiberTrace> {
    require_dim(p, 2, "a circle trace")?;
    if n < 3 || !(radius >= 0.0) {
        return Err(FlatError::Argument(format!(
            "circle trace needs n ≥ 3 and radius ≥ 0, got n = {n}, radius = {radius}"
        )));
    }
    let path: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let theta = 2.0 * std::f64::consts::PI * j as f64 / n as f64;
            vec![radius * theta.cos(), radius * theta.sin()]
        })
        .collect();
    follow(p, g, &path, true)
}

/// Samples the image of the ray `r·direction`, `r = r_max·i/steps`, `i = 0..=steps`.
pub fn trace_radial_2d(
    p: &Problem,
    g: &DualField,
    direction: [f64; 2],
    r_max: f64,
    steps: usize,
) -> Result<FiberTrace> {
    require_dim(p, 2, "a radial trace")?;
    let norm = direction[0].hypot(direction[1]);
    if !(norm > 0.0) || !(r_max >= 0.0) || steps == 0 {
        return Err(FlatError::Argument(
            "radial trace needs a nonzero direction, r_max ≥ 0 and steps ≥ 1".into(),
        ));
    }
    let d = [direction[0] / norm, direction[1] / norm];
    let count = if r_max == 0.0 { 1 } else { steps + 1 };
    let path: Vec<Vec<f64>> = (0..count)
        .map(|i| {
            let r = r_max * i as f64 / steps as f64;
            vec![r * d[0], r * d[1]]
        })
        .collect();
    follow(p, g, &path, false)
}

/// Distinct solutions of `F(u) = ĝ` found on a fiber.
#[derive(Clone, Debug, Default)]
pub struct SolutionSet {
    pub solutions: Vec<NodalField>,
    /// Normalized full residuals, see [`newton_full`].
    pub residuals: Vec<f64>,
    /// Fiber heights at which each solution was bracketed.
    pub heights: Vec<Vec<f64>>,
    pub multiplicity: usize,
    /// Heights where `|s − s*|` has a small local minimum without a sign change.
    pub near_touches: Vec<f64>,
}

impl SolutionSet {
    /// Adds `u` unless it lies within `1e-4·(1 + max norm)` of a known member.
    pub fn insert(&mut self, p: &Problem, u: NodalField, residual: f64, heights: Vec<f64>) -> bool {
        let spec = p.spectral();
        let nu = spec.norm_x(&u);
        let duplicate = self.solutions.iter().any(|v| {
            let threshold = 1e-4 * (1.0 + nu.max(spec.norm_x(v)));
            spec.norm_x(&(&u - v)) <= threshold
        });
        if duplicate {
            return false;
        }
        self.solutions.push(u);
        self.residuals.push(residual);
        self.heights.push(heights);
        self.multiplicity = self.solutions.len();
        true
    }
}

/// Brackets sign changes of `s(t) − s*` along a 1-D trace, bisects each to
/// [`BISECTION_WIDTH`] and polishes with full Newton.
pub fn solve_on_fiber_1d(p: &Problem, g: &DualField, trace: &FiberTrace) -> Result<SolutionSet> {
    require_dim(p, 1, "1-D fiber inversion")?;
    let target = p.spectral().heights_y(g)[0];
    let t: Vec<f64> = trace.heights_in.iter().map(|h| h[0]).collect();
    let d: Vec<f64> = trace.heights_out.iter().map(|s| s[0] - target).collect();
    if t.len() < 2 {
        return Err(FlatError::Argument("trace has fewer than two samples".into()));
    }
    let scale = 1.0 + target.abs() + d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut out = SolutionSet::default();
    for i in 0..t.len() - 1 {
        let root_t = if d[i] == 0.0 {
            Some((t[i], trace.fiber_points[i].clone()))
        } else if d[i] * d[i + 1] < 0.0 {
            Some(bisect(
                p,
                g,
                target,
                (t[i], d[i], &trace.fiber_points[i]),
                (t[i + 1], d[i + 1]),
            )?)
        } else {
            None
        };
        if let Some((th, u)) = root_t {
            let (u, report) = newton_full(p, &u, g, POLISH_TOL)?;
            let residual = *report.residuals.last().expect("newton records the start");
            out.insert(p, u, residual, vec![th]);
        }
        // interior local minimum of |s − s*| close to zero: possible tangency
        if i > 0 && d[i] != 0.0 && d[i - 1] * d[i] > 0.0 && d[i] * d[i + 1] > 0.0 {
            let a = d[i].abs();
            if a < d[i - 1].abs() && a < d[i + 1].abs() && a <= 1e-3 * scale {
                out.near_touches.push(t[i]);
            }
        }
    }
    if let Some(&last) = d.last() {
        if last == 0.0 {
            let (u, report) = newton_full(p, trace.fiber_points.last().unwrap(), g, POLISH_TOL)?;
            let residual = *report.residuals.last().unwrap();
            out.insert(p, u, residual, vec![*t.last().unwrap()]);
        }
    }
    Ok(out)
}

fn bisect(
    p: &Problem,
    g: &DualField,
    target: f64,
    lo: (f64, f64, &NodalField),
    hi: (f64, f64),
) -> Result<(f64, NodalField)> {
    let (mut a, mut da, ua) = lo;
    let (mut b, _) = hi;
    let mut ua = ua.clone();
    while b - a > BISECTION_WIDTH {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            return Err(FlatError::BisectionStagnation { lo: a, hi: b });
        }
        let (um, _) = move_along_fiber(p, &ua, &[mid - a], g)?;
        let dm = image_heights(p, &um)?[0] - target;
        if dm == 0.0 {
            return Ok((mid, um));
        }
        if dm * da < 0.0 {
            b = mid;
        } else {
            a = mid;
            da = dm;
            ua = um;
        }
    }
    Ok((a, ua))
}

/// Transverse crossing of two segments of a planar polygon.
#[derive(Clone, Debug, PartialEq)]
pub struct Crossing {
    pub point: [f64; 2],
    /// Segment indices `i < j`; segment `i` joins samples `i` and `i + 1`.
    pub segments: (usize, usize),
    /// Interpolated fiber heights on the two branches.
    pub heights: (Vec<f64>, Vec<f64>),
}

/// Place where the image polygon passes through the target.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetHit {
    pub segment: usize,
    pub distance: f64,
    pub heights: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Intersections {
    pub crossings: Vec<Crossing>,
    pub hits: Vec<TargetHit>,
}

fn lerp(a: &[f64], b: &[f64], s: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + s * (y - x)).collect()
}

fn cross(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

/// Parameters `(s, u) ∈ [0,1]²` of a proper crossing of `p0p1` and `q0q1`.
pub fn segment_intersection(p0: [f64; 2], p1: [f64; 2], q0: [f64; 2], q1: [f64; 2]) -> Option<(f64, f64)> {
    let r = [p1[0] - p0[0], p1[1] - p0[1]];
    let d = [q1[0] - q0[0], q1[1] - q0[1]];
    let denom = cross(r, d);
    let scale = (r[0].hypot(r[1]) * d[0].hypot(d[1])).max(f64::MIN_POSITIVE);
    if denom.abs() <= 1e-14 * scale {
        return None;
    }
    let w = [q0[0] - p0[0], q0[1] - p0[1]];
    let s = cross(w, d) / denom;
    let u = cross(w, r) / denom;
    ((0.0..=1.0).contains(&s) && (0.0..=1.0).contains(&u)).then_some((s, u))
}

/// Self-crossings of the polygonal image curve of a 2-D trace, and the
/// segments passing within `tol` of `target` (when given).
pub fn find_intersections_2d(trace: &FiberTrace, target: Option<[f64; 2]>, tol: f64) -> Result<Intersections> {
    let pts: Vec<[f64; 2]> = trace
        .heights_out
        .iter()
        .map(|s| match s.as_slice() {
            [a, b] => Ok([*a, *b]),
            _ => Err(FlatError::Argument(
                "find_intersections_2d needs two image coordinates per sample".into(),
            )),
        })
        .collect::<Result<_>>()?;
    let n = pts.len();
    let nseg = if trace.closed { n } else { n.saturating_sub(1) };
    let seg = |i: usize| (pts[i], pts[(i + 1) % n], i, (i + 1) % n);
    let mut out = Intersections::default();
    for i in 0..nseg {
        for j in i + 1..nseg {
            // neighbours share an endpoint
            if j == i + 1 || (trace.closed && i == 0 && j == nseg - 1) {
                continue;
            }
            let (p0, p1, a0, a1) = seg(i);
            let (q0, q1, b0, b1) = seg(j);
            if let Some((s, u)) = segment_intersection(p0, p1, q0, q1) {
                out.crossings.push(Crossing {
                    point: [p0[0] + s * (p1[0] - p0[0]), p0[1] + s * (p1[1] - p0[1])],
                    segments: (i, j),
                    heights: (
                        lerp(&trace.heights_in[a0], &trace.heights_in[a1], s),
                        lerp(&trace.heights_in[b0], &trace.heights_in[b1], u),
                    ),
                });
            }
        }
    }
    if let Some(x) = target {
        for i in 0..nseg {
            let (p0, p1, a0, a1) = seg(i);
            let r = [p1[0] - p0[0], p1[1] - p0[1]];
            let len2 = r[0] * r[0] + r[1] * r[1];
            let s = if len2 > 0.0 {
                (((x[0] - p0[0]) * r[0] + (x[1] - p0[1]) * r[1]) / len2).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let c = [p0[0] + s * r[0], p0[1] + s * r[1]];
            let distance = (x[0] - c[0]).hypot(x[1] - c[1]);
            // a hit at a shared vertex is reported once
            if distance <= tol && !(s == 0.0 && i > 0 && out.hits.last().is_some_and(|h| h.segment + 1 == i)) {
                out.hits.push(TargetHit {
                    segment: i,
                    distance,
                    heights: lerp(&trace.heights_in[a0], &trace.heights_in[a1], s),
                });
            }
        }
    }
    Ok(out)
}
