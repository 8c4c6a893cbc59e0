//! Horizontal Newton iteration and motion along fibers.
//!
//! With `P`/`Q` the horizontal/vertical projections on either side, the
//! iteration `u ← u + P_X η`, `L_c(u) η = ĝ − F(u)` keeps `Q_X u` fixed and
//! drives the horizontal residual `P_Y(ĝ − F(u))` to zero. `L_c(u)` acts as
//! `P_Y DF(u)` on horizontal vectors and as `K − cM` on vertical ones, which
//! keeps it a sparse matrix plus a low-rank correction.
//!
//! Two discretizations of the nonlinear term are available, see
//! [`Quadrature`]. With the default one `DF = K − W` is the exact
//! derivative of the discrete map.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use crate::error::{FlatError, Result};
use crate::field::{DualField, NodalField};
use crate::linalg::{dense_solve, gmres, SymSparseMatrix};
use crate::mesh::{assemble_load_with, assemble_weighted_mass, assemble_weighted_mass_with, Mesh};
use crate::nonlinearity::{eval_f_nodal, Nonlinearity};
use crate::spectral::SpectralData;

/// Relative `Y`-norm residual demanded from every linear solve.
pub const LINEAR_SOLVE_TOL: f64 = 1e-12;

/// How `f(x, u)` and `∂₂f(x, u)` enter the discrete equations.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Quadrature {
    /// `N_i = ∫ f(x, u_h) ψ_i` and `W_jk = ∫ ∂₂f(x, u_h) ψ_j ψ_k`, both on the
    /// same Gauss points, so `K − W` is the Jacobian of `Kū − N(ū)`.
    #[default]
    Consistent,
    /// `N = M f(ū)` from nodal values and `W` weighted by the P1 interpolant
    /// of `∂₂f(·, ū)`. `K − W` then only approximates the Jacobian, with an
    /// `O(h²)` defect.
    Nodal,
}

impl std::str::FromStr for Quadrature {
    type Err = FlatError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "consistent" => Ok(Self::Consistent),
            "nodal" => Ok(Self::Nodal),
            other => Err(FlatError::Argument(format!(
                "unknown quadrature `{other}` (expected consistent or nodal)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverOptions {
    /// Vertical shift in `L_c`.
    pub c: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub depth_max: usize,
    /// Largest system solved by dense LU; bigger ones use preconditioned GMRES.
    pub dense_limit: usize,
    pub quadrature: Quadrature,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            c: 0.0,
            tol: 1e-8,
            max_iter: 20,
            depth_max: 6,
            dense_limit: 8192,
            quadrature: Quadrature::Consistent,
        }
    }
}

/// Everything needed to evaluate `F^h` and run the fiber algorithms.
#[derive(Debug)]
pub struct Problem {
    mesh: Mesh,
    spectral: SpectralData,
    nl: Nonlinearity,
    options: SolverOptions,
}

impl Problem {
    pub fn new(mesh: Mesh, spectral: SpectralData, nl: Nonlinearity, options: SolverOptions) -> Result<Self> {
        if mesh.num_dofs() != spectral.dim() {
            return Err(FlatError::Argument(
                "mesh and spectral data disagree on the DOF count".into(),
            ));
        }
        let (a, b) = spectral.interval();
        let (ra, rb) = nl.range_bounds();
        if ra < a || rb > b {
            return Err(FlatError::Argument(format!(
                "interval [{a}, {b}] does not contain the derivative range [{ra}, {rb}]"
            )));
        }
        for &k in spectral.index_set() {
            let lambda = spectral.eigenvalue(k);
            if (options.c - lambda).abs() <= 1e-10 * lambda {
                return Err(FlatError::Argument(format!(
                    "shift c = {} coincides with λ_{k}",
                    options.c
                )));
            }
        }
        if !(options.tol > 0.0) {
            return Err(FlatError::Argument(format!(
                "tolerance must be positive, got {}",
                options.tol
            )));
        }
        Ok(Self {
            mesh,
            spectral,
            nl,
            options,
        })
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn spectral(&self) -> &SpectralData {
        &self.spectral
    }

    pub fn nonlinearity(&self) -> &Nonlinearity {
        &self.nl
    }

    pub fn options(&self) -> &SolverOptions {
        &self.options
    }

    pub fn with_options(mut self, options: SolverOptions) -> Result<Self> {
        let Problem { mesh, spectral, nl, .. } = self;
        self = Problem::new(mesh, spectral, nl, options)?;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.mesh.num_dofs()
    }

    fn u_h(&self, t: usize, u: &NodalField, l: &[f64; 3]) -> f64 {
        let c = self.mesh.corner_values(t, u);
        l[0] * c[0] + l[1] * c[1] + l[2] * c[2]
    }

    /// Discrete Nemytskii term `N(ū)`, `⟨ψ_i, f(·, u)⟩₀` in coordinates.
    pub fn nemytskii(&self, u: &NodalField) -> Result<DualField> {
        check_finite(u, "argument of F")?;
        let out = match self.options.quadrature {
            Quadrature::Consistent => DualField(assemble_load_with(&self.mesh, |t, x, l| {
                self.nl.f(x, self.u_h(t, u, l))
            })),
            Quadrature::Nodal => {
                let fv = eval_f_nodal(&self.nl, &self.mesh, u)?;
                DualField(self.spectral.mass().mul_vec(&fv.0))
            }
        };
        check_finite_dual(&out, "f")?;
        Ok(out)
    }

    /// `W(ū)_jk = ∫ ∂₂f(x, u) ψ_j ψ_k`.
    pub fn derivative_weight(&self, u: &NodalField) -> Result<SymSparseMatrix> {
        check_finite(u, "argument of DF")?;
        let w = match self.options.quadrature {
            Quadrature::Consistent => {
                assemble_weighted_mass_with(&self.mesh, |t, x, l| self.nl.d2f(x, self.u_h(t, u, l)))
            }
            Quadrature::Nodal => {
                // boundary vertices carry u = 0
                let w: Vec<f64> = (0..self.mesh.vertices().len())
                    .map(|v| {
                        let s = self.mesh.dof_of_vertex(v).map_or(0.0, |d| u.0[d]);
                        self.nl.d2f(self.mesh.vertices()[v], s)
                    })
                    .collect();
                assemble_weighted_mass(&self.mesh, &w)
            }
        };
        if let Some((r, _, v)) = w.triplets().find(|(_, _, v)| !v.is_finite()) {
            return Err(FlatError::Evaluation {
                node: r,
                value: v,
                context: "d2f",
            });
        }
        Ok(w)
    }

    /// `F^h(ū) = K ū − N(ū)`.
    pub fn eval_f(&self, u: &NodalField) -> Result<DualField> {
        let ku = DualField(self.spectral.stiffness().mul_vec(&u.0));
        Ok(&ku - &self.nemytskii(u)?)
    }

    /// `DF(ū) = K − W(ū)`.
    pub fn assemble_df(&self, u: &NodalField) -> Result<SymSparseMatrix> {
        Ok(self
            .spectral
            .stiffness()
            .lin_comb(1.0, &self.derivative_weight(u)?, -1.0))
    }

    /// Scale used to make residuals dimensionless: `‖ĝ‖_Y + ‖ū‖_X + ‖N(ū)‖_Y`.
    pub fn residual_scale(&self, u: &NodalField, g: &DualField) -> Result<f64> {
        let s = self.spectral.norm_y(g) + self.spectral.norm_x(u) + self.spectral.norm_y(&self.nemytskii(u)?);
        Ok(if s > 0.0 { s } else { 1.0 })
    }

    /// Solves `A z = r` to `‖Az − r‖_Y ≤ LINEAR_SOLVE_TOL ‖r‖_Y`.
    fn solve_linear(
        &self,
        dense: impl FnOnce() -> DMatrix<f64>,
        apply: impl Fn(&DVector<f64>) -> DVector<f64>,
        r: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        let spec = &self.spectral;
        let rnorm = spec.norm_y(&DualField(r.clone()));
        if rnorm == 0.0 {
            return Ok(DVector::zeros(r.len()));
        }
        let residual = |z: &DVector<f64>| spec.norm_y(&DualField(r - apply(z)));
        let z = if self.dim() <= self.options.dense_limit {
            let a = dense();
            let mut z = dense_solve(a.clone(), r)?;
            for _ in 0..3 {
                if residual(&z) <= LINEAR_SOLVE_TOL * rnorm {
                    break;
                }
                let correction = dense_solve(a.clone(), &(r - apply(&z)))?;
                z += correction;
            }
            z
        } else {
            // symmetric preconditioning with K = L Lᵀ turns the Euclidean
            // GMRES residual into the Y^h residual
            let chol = spec.stiffness_factor();
            let rhs = chol.forward(r);
            let out = gmres(
                |y| chol.forward(&apply(&chol.backward(y))),
                &rhs,
                LINEAR_SOLVE_TOL,
                80,
                2000,
            );
            chol.backward(&out.x)
        };
        let rel = residual(&z) / rnorm;
        if !(rel <= 1e3 * LINEAR_SOLVE_TOL) {
            return Err(FlatError::LinearAlgebra(format!(
                "linear solve stalled at relative residual {rel:.3e}"
            )));
        }
        Ok(z)
    }

    /// Solves `DF(ū) η = r` (full-space Newton step).
    pub fn solve_df(&self, u: &NodalField, r: &DualField) -> Result<NodalField> {
        let df = self.assemble_df(u)?;
        let z = self.solve_linear(|| df.to_dense(), |z| df.mul_vec(z), &r.0)?;
        Ok(NodalField(z))
    }
}

fn check_finite(u: &NodalField, context: &'static str) -> Result<()> {
    match u.0.iter().position(|v| !v.is_finite()) {
        Some(node) => Err(FlatError::Evaluation {
            node,
            value: u.0[node],
            context,
        }),
        None => Ok(()),
    }
}

fn check_finite_dual(g: &DualField, context: &'static str) -> Result<()> {
    match g.0.iter().position(|v| !v.is_finite()) {
        Some(node) => Err(FlatError::Evaluation {
            node,
            value: g.0[node],
            context,
        }),
        None => Ok(()),
    }
}

/// `L_c(ū)` frozen at one state.
pub struct LcOperator<'p> {
    problem: &'p Problem,
    weight: SymSparseMatrix,
}

impl<'p> LcOperator<'p> {
    pub fn new(problem: &'p Problem, u: &NodalField) -> Result<Self> {
        Ok(Self {
            problem,
            weight: problem.derivative_weight(u)?,
        })
    }

    /// `K z − P_Y[W P_X z] − c M Q_X z`.
    pub fn apply(&self, z: &NodalField) -> DualField {
        let spec = self.problem.spectral();
        let pz = spec.project_horizontal_x(z);
        let qz = spec.project_vertical_x(z);
        let kz = DualField(spec.stiffness().mul_vec(&z.0));
        let wpz = spec.project_horizontal_y(&DualField(self.weight.mul_vec(&pz.0)));
        let mqz = DualField(spec.mass().mul_vec(&qz.0) * self.problem.options.c);
        &(&kz - &wpz) - &mqz
    }

    /// Dense form `K − W + WΦ(KΦ)ᵀ + KΦ(WΦ)ᵀ − KΦ(ΦᵀWΦ)(KΦ)ᵀ − c MΦ(KΦ)ᵀ`.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let spec = self.problem.spectral();
        let n = spec.dim();
        let r = spec.vertical_dim();
        let mut l = spec.stiffness().to_dense() - self.weight.to_dense();
        if r == 0 {
            return l;
        }
        let phi = DMatrix::from_columns(spec.vertical_basis());
        let kphi = DMatrix::from_columns(spec.vertical_dual_basis());
        let wphi = DMatrix::from_fn(n, r, |_, _| 0.0);
        let mut wphi = wphi;
        let mut mphi = DMatrix::zeros(n, r);
        for j in 0..r {
            let col = phi.column(j).into_owned();
            wphi.set_column(j, &self.weight.mul_vec(&col));
            mphi.set_column(j, &spec.mass().mul_vec(&col));
        }
        let g = phi.transpose() * &wphi;
        l += &wphi * kphi.transpose();
        l += &kphi * wphi.transpose();
        l -= &kphi * g * kphi.transpose();
        l -= mphi * kphi.transpose() * self.problem.options.c;
        l
    }

    pub fn solve(&self, r: &DualField) -> Result<NodalField> {
        let z = self
            .problem
            .solve_linear(|| self.to_dense(), |z| self.apply(&NodalField(z.clone())).0, &r.0)?;
        Ok(NodalField(z))
    }
}

pub fn apply_lc(p: &Problem, u: &NodalField, z: &NodalField) -> Result<DualField> {
    Ok(LcOperator::new(p, u)?.apply(z))
}

pub fn solve_lc(p: &Problem, u: &NodalField, r: &DualField) -> Result<NodalField> {
    LcOperator::new(p, u)?.solve(r)
}

#[derive(Clone, Debug, PartialEq)]
pub enum SolveStatus {
    Converged,
    MaxIter,
    /// Converged after bisecting the target segment; `depth` is the deepest level used.
    ContinuationUsed {
        depth: usize,
        subdivisions: usize,
    },
    Failed(String),
}

impl SolveStatus {
    pub fn is_converged(&self) -> bool {
        matches!(self, SolveStatus::Converged | SolveStatus::ContinuationUsed { .. })
    }
}

/// History of a horizontal solve.
///
/// `residuals[n]` is `e_n = ‖P_Y(ĝ − F(u_n))‖ / ‖P_Y(ĝ − F(u_0))‖` in the `Y^h`
/// norm; `residuals_l2` the same ratio in `L²`. Iteration stops once
/// `‖P_Y(ĝ − F(u_n))‖_Y ≤ tol · scale(u_n)` (see [`Problem::residual_scale`]).
#[derive(Clone, Debug)]
pub struct SolveReport {
    pub iterates: Vec<NodalField>,
    pub residuals: Vec<f64>,
    pub residuals_l2: Vec<f64>,
    pub absolute: Vec<f64>,
    pub status: SolveStatus,
    pub step_seconds: Vec<f64>,
}

impl SolveReport {
    pub fn solution(&self) -> &NodalField {
        self.iterates.last().expect("report holds the initial iterate")
    }

    /// Newton steps taken (the initial iterate is not a step).
    pub fn steps(&self) -> usize {
        self.iterates.len() - 1
    }

    pub fn into_result(self) -> Result<(NodalField, SolveReport)> {
        match &self.status {
            s if s.is_converged() => Ok((self.solution().clone(), self)),
            SolveStatus::MaxIter => Err(FlatError::MaxIterations {
                iterations: self.steps(),
                residual: self.residuals.last().copied().unwrap_or(f64::NAN),
            }),
            SolveStatus::Failed(msg) => Err(FlatError::SolveFailed(msg.clone())),
            _ => unreachable!(),
        }
    }
}

struct Residual {
    y: f64,
    l2: f64,
    scale: f64,
}

fn horizontal_residual(p: &Problem, u: &NodalField, g: &DualField) -> Result<(DualField, Residual)> {
    let spec = p.spectral();
    let nemytskii = p.nemytskii(u)?;
    let f = &DualField(spec.stiffness().mul_vec(&u.0)) - &nemytskii;
    let r = spec.project_horizontal_y(&(g - &f));
    let scale = spec.norm_y(g) + spec.norm_x(u) + spec.norm_y(&nemytskii);
    let res = Residual {
        y: spec.norm_y(&r),
        l2: spec.norm_l2_dual(&r),
        scale: if scale > 0.0 { scale } else { 1.0 },
    };
    Ok((g - &f, res))
}

/// Newton run toward `target`, with residual ratios taken against `reference`.
fn newton_leg(
    p: &Problem,
    u0: &NodalField,
    target: &DualField,
    reference: Option<(f64, f64)>,
    tol: f64,
    max_iter: usize,
) -> Result<SolveReport> {
    let spec = p.spectral();
    let heights = spec.heights_x(u0);
    let vertical = spec.vertical_x(&heights);
    let (mut full_res, r0) = horizontal_residual(p, u0, target)?;
    let (ref_y, ref_l2) = reference.unwrap_or((r0.y, r0.l2));
    let ratio = |v: f64, r: f64| if r > 0.0 { v / r } else { 0.0 };
    let mut report = SolveReport {
        iterates: vec![u0.clone()],
        residuals: vec![ratio(r0.y, ref_y)],
        residuals_l2: vec![ratio(r0.l2, ref_l2)],
        absolute: vec![r0.y],
        status: SolveStatus::MaxIter,
        step_seconds: Vec::new(),
    };
    if r0.y <= tol * r0.scale {
        report.status = SolveStatus::Converged;
        return Ok(report);
    }
    let mut u = u0.clone();
    for _ in 0..max_iter {
        let start = Instant::now();
        let eta = match LcOperator::new(p, &u).and_then(|op| op.solve(&full_res)) {
            Ok(eta) => eta,
            Err(e) => {
                report.status = SolveStatus::Failed(e.to_string());
                return Ok(report);
            }
        };
        // re-impose the height exactly: u ← P_X(u + η) + Q_X u₀
        u = &spec.project_horizontal_x(&(&u + &eta)) + &vertical;
        let (next_full, r) = match horizontal_residual(p, &u, target) {
            Ok(v) => v,
            Err(e) => {
                report.status = SolveStatus::Failed(e.to_string());
                return Ok(report);
            }
        };
        full_res = next_full;
        report.step_seconds.push(start.elapsed().as_secs_f64());
        report.iterates.push(u.clone());
        report.residuals.push(ratio(r.y, ref_y));
        report.residuals_l2.push(ratio(r.l2, ref_l2));
        report.absolute.push(r.y);
        if !r.y.is_finite() {
            report.status = SolveStatus::Failed("non-finite residual".into());
            return Ok(report);
        }
        if r.y <= tol * r.scale {
            report.status = SolveStatus::Converged;
            return Ok(report);
        }
        // a residual that grows for three consecutive steps is treated as divergence
        let n = report.absolute.len();
        if n >= 4
            && report.absolute[n - 3..].windows(2).all(|w| w[1] > w[0])
            && report.absolute[n - 4] < report.absolute[n - 3]
        {
            report.status = SolveStatus::Failed("residual increasing".into());
            return Ok(report);
        }
    }
    Ok(report)
}

/// Horizontal Newton iteration from `u0` toward the fiber of `g`.
pub fn horizontal_newton(
    p: &Problem,
    u0: &NodalField,
    g: &DualField,
    tol: f64,
    max_iter: usize,
) -> Result<SolveReport> {
    if !(tol > 0.0) {
        return Err(FlatError::Argument(format!("tolerance must be positive, got {tol}")));
    }
    newton_leg(p, u0, g, None, tol, max_iter)
}

/// Horizontal Newton with recursive bisection of the target segment
/// `t ↦ (1−t) P_Y F(ū₀) + t P_Y ĝ` whenever a leg fails to converge.
pub fn continuation_horizontal(p: &Problem, u0: &NodalField, g: &DualField, depth_max: usize) -> Result<SolveReport> {
    let opts = p.options();
    let first = newton_leg(p, u0, g, None, opts.tol, opts.max_iter)?;
    if first.status.is_converged() {
        return Ok(first);
    }
    let spec = p.spectral();
    let f0 = p.eval_f(u0)?;
    let start = spec.project_horizontal_y(&f0);
    let end = spec.project_horizontal_y(g);
    // vertical part of the target is irrelevant to the horizontal residual
    let target_at = |t: f64| {
        if t == 1.0 {
            g.clone()
        } else {
            &(&start * (1.0 - t)) + &(&end * t)
        }
    };
    let (_, r0) = horizontal_residual(p, u0, g)?;
    let reference = Some((r0.y, r0.l2));

    let mut report = SolveReport {
        iterates: vec![u0.clone()],
        residuals: vec![1.0],
        residuals_l2: vec![1.0],
        absolute: vec![r0.y],
        status: SolveStatus::MaxIter,
        step_seconds: Vec::new(),
    };
    let mut subdivisions = 0;
    let mut deepest = 0;

    struct Ctx<'a, T: Fn(f64) -> DualField> {
        p: &'a Problem,
        target_at: T,
        reference: Option<(f64, f64)>,
        depth_max: usize,
    }

    #[allow(clippy::too_many_arguments)]
    fn segment<T: Fn(f64) -> DualField>(
        ctx: &Ctx<'_, T>,
        t0: f64,
        t1: f64,
        u: &NodalField,
        depth: usize,
        report: &mut SolveReport,
        subdivisions: &mut usize,
        deepest: &mut usize,
    ) -> Result<NodalField> {
        let opts = ctx.p.options();
        let leg = newton_leg(ctx.p, u, &(ctx.target_at)(t1), ctx.reference, opts.tol, opts.max_iter)?;
        if leg.status.is_converged() {
            report.iterates.extend(leg.iterates.iter().skip(1).cloned());
            report.residuals.extend(&leg.residuals[1..]);
            report.residuals_l2.extend(&leg.residuals_l2[1..]);
            report.absolute.extend(&leg.absolute[1..]);
            report.step_seconds.extend(&leg.step_seconds);
            return Ok(leg.solution().clone());
        }
        if depth >= ctx.depth_max {
            return Err(FlatError::ContinuationExhausted { depth, t0, t1 });
        }
        *subdivisions += 1;
        *deepest = (*deepest).max(depth + 1);
        let mid = 0.5 * (t0 + t1);
        let u_mid = segment(ctx, t0, mid, u, depth + 1, report, subdivisions, deepest)?;
        segment(ctx, mid, t1, &u_mid, depth + 1, report, subdivisions, deepest)
    }

    let ctx = Ctx {
        p,
        target_at,
        reference,
        depth_max,
    };
    // the plain attempt above is the depth-0 leg; start by splitting it
    let outcome = if depth_max == 0 {
        Err(FlatError::ContinuationExhausted {
            depth: 0,
            t0: 0.0,
            t1: 1.0,
        })
    } else {
        subdivisions += 1;
        deepest = 1;
        segment(&ctx, 0.0, 0.5, u0, 1, &mut report, &mut subdivisions, &mut deepest)
            .and_then(|u_mid| segment(&ctx, 0.5, 1.0, &u_mid, 1, &mut report, &mut subdivisions, &mut deepest))
    };
    report.status = match outcome {
        Ok(_) => SolveStatus::ContinuationUsed {
            depth: deepest,
            subdivisions,
        },
        Err(e) => SolveStatus::Failed(e.to_string()),
    };
    Ok(report)
}

/// `H_g(v)`: the fiber point of `ĝ` with height `v ∈ V^h`.
pub fn fiber_point(p: &Problem, v: &NodalField, g: &DualField) -> Result<(NodalField, SolveReport)> {
    let spec = p.spectral();
    let horizontal = spec.norm_x(&spec.project_horizontal_x(v));
    if horizontal > 1e-10 * (1.0 + spec.norm_x(v)) {
        return Err(FlatError::Argument(format!(
            "fiber_point expects a vertical starting point (horizontal part {horizontal:.3e})"
        )));
    }
    continuation_horizontal(p, v, g, p.options().depth_max)?.into_result()
}

/// `H_g` at the vertical point with coordinates `heights` against `φ_k`, `k ∈ 𝒦`.
pub fn fiber_point_at(p: &Problem, heights: &[f64], g: &DualField) -> Result<(NodalField, SolveReport)> {
    fiber_point(p, &p.spectral().vertical_x(heights), g)
}

/// Predictor-corrector step along a fiber: start from `u_on_fiber + Σ step_k φ_k`
/// and move horizontally back onto the fiber.
pub fn move_along_fiber(
    p: &Problem,
    u_on_fiber: &NodalField,
    step: &[f64],
    g: &DualField,
) -> Result<(NodalField, SolveReport)> {
    let predictor = u_on_fiber + &p.spectral().vertical_x(step);
    continuation_horizontal(p, &predictor, g, p.options().depth_max)?.into_result()
}

/// Full-space Newton on `F(u) = ĝ`.
#[derive(Clone, Debug)]
pub struct NewtonReport {
    /// `‖ĝ − F(u_n)‖_Y / scale(u_n)`.
    pub residuals: Vec<f64>,
    pub steps: usize,
}

pub fn newton_full(p: &Problem, u0: &NodalField, g: &DualField, tol: f64) -> Result<(NodalField, NewtonReport)> {
    let spec = p.spectral();
    let mut u = u0.clone();
    let mut residuals = Vec::new();
    for step in 0..=p.options().max_iter {
        let nemytskii = p.nemytskii(&u)?;
        let f = &DualField(spec.stiffness().mul_vec(&u.0)) - &nemytskii;
        let r = g - &f;
        let scale = spec.norm_y(g) + spec.norm_x(&u) + spec.norm_y(&nemytskii);
        let rel = spec.norm_y(&r) / if scale > 0.0 { scale } else { 1.0 };
        residuals.push(rel);
        if !rel.is_finite() {
            return Err(FlatError::MaxIterations {
                iterations: step,
                residual: rel,
            });
        }
        if rel <= tol {
            return Ok((u, NewtonReport { residuals, steps: step }));
        }
        if step == p.options().max_iter {
            break;
        }
        let eta = p.solve_df(&u, &r)?;
        u = &u + &eta;
    }
    Err(FlatError::MaxIterations {
        iterations: p.options().max_iter,
        residual: residuals.last().copied().unwrap_or(f64::NAN),
    })
}

/// Builds mesh, matrices, eigenpairs and the splitting for `[a, b]`
/// (the nonlinearity's derivative range when `interval` is `None`).
///
/// Eigenpairs are added until the largest exceeds `b`.
pub fn build_problem(
    m: u32,
    nl: Nonlinearity,
    interval: Option<(f64, f64)>,
    options: SolverOptions,
) -> Result<Problem> {
    build_problem_with(m, nl, interval, options, 4)
}

/// As [`build_problem`], computing at least `min_pairs` eigenpairs.
pub fn build_problem_with(
    m: u32,
    nl: Nonlinearity,
    interval: Option<(f64, f64)>,
    options: SolverOptions,
    min_pairs: usize,
) -> Result<Problem> {
    if min_pairs > MAX_EIGENPAIRS {
        return Err(FlatError::Argument(format!(
            "at most {MAX_EIGENPAIRS} eigenpairs are supported, {min_pairs} requested"
        )));
    }
    let mesh = crate::mesh::build_mesh(m)?;
    let k = crate::mesh::assemble_stiffness(&mesh);
    let mass = crate::mesh::assemble_mass(&mesh);
    let (a, b) = interval.unwrap_or(nl.range_bounds());
    let mut count = min_pairs.max(4).min(mesh.num_dofs());
    let eig = loop {
        let eig = crate::spectral::compute_eigenpairs(&k, &mass, count)?;
        if eig.largest() > b || count == mesh.num_dofs() || count >= MAX_EIGENPAIRS {
            break eig;
        }
        count = (count + 4).min(mesh.num_dofs()).min(MAX_EIGENPAIRS);
    };
    let spectral = SpectralData::new(k, mass, eig, (a, b))?;
    Problem::new(mesh, spectral, nl, options)
}

/// Upper limit on eigenpairs computed by [`build_problem`].
pub const MAX_EIGENPAIRS: usize = 10;
