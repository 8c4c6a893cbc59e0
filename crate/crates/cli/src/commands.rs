use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use flatmap::config::{RhsSpec, RunConfig};
use flatmap::explorer::{
    find_intersections_2d, image_heights, solve_on_fiber_1d, trace_circle_2d, trace_fiber_1d, trace_radial_2d,
    FiberTrace, Intersections, SolutionSet, POLISH_TOL,
};
use flatmap::mesh::{assemble_mass, assemble_stiffness, build_mesh, interpolate};
use flatmap::solver::{build_problem_with, continuation_horizontal, fiber_point_at, newton_full, Problem};
use flatmap::spectral::{analytic_eigenvalues, compute_eigenpairs};
use flatmap::{DualField, FlatError, NodalField, Result};

use crate::artifacts::Artifacts;

pub struct Run {
    pub config: RunConfig,
    pub config_dir: PathBuf,
    pub quiet: bool,
}

impl Run {
    fn say(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            say(msg.as_ref());
        }
    }

    fn problem(&self, m: u32) -> Result<Problem> {
        let c = &self.config;
        build_problem_with(
            m,
            c.nonlinearity.build()?,
            c.interval,
            c.solver.clone(),
            c.max_coefficient_index(),
        )
    }

    fn rhs(&self, p: &Problem) -> Result<DualField> {
        match &self.config.rhs {
            RhsSpec::Expr { expr, .. } => {
                let g = interpolate(p.mesh(), |x, y| expr.eval(x, y))?;
                Ok(DualField(p.spectral().mass().mul_vec(&g.0)))
            }
            RhsSpec::FOfU0(c) => p.eval_f(&combination(p, c)),
        }
    }

    fn initial(&self, p: &Problem) -> Result<NodalField> {
        match &self.config.initial_field {
            Some(path) => {
                let path = self.config_dir.join(path);
                let file = File::open(&path)
                    .map_err(|e| FlatError::Config(format!("cannot open initial field {}: {e}", path.display())))?;
                p.mesh().read_field_csv(BufReader::new(file))
            }
            None => Ok(combination(p, &self.config.initial)),
        }
    }
}

/// Prints a progress line; a closed stdout is not an error.
pub fn say(msg: &str) {
    let _ = writeln!(std::io::stdout(), "{msg}");
}

fn combination(p: &Problem, coefficients: &[(usize, f64)]) -> NodalField {
    let spec = p.spectral();
    let mut u = NodalField::zeros(p.dim());
    for &(k, c) in coefficients {
        u = &u + &(spec.eigenvector(k) * c);
    }
    u
}

fn num(v: f64) -> String {
    v.to_string()
}

pub fn mesh(run: &Run, out: &mut Artifacts) -> Result<()> {
    let m = run.config.single_level()?;
    let mesh = build_mesh(m)?;
    let h = out.header(&format!("m={m}"));
    out.add("vertices.csv", |b| mesh.write_vertices_csv(b, &h))?;
    out.add("triangles.csv", |b| mesh.write_triangles_csv(b, &h))?;
    out.add("dofs.csv", |b| mesh.write_dofs_csv(b, &h))?;
    let k = assemble_stiffness(&mesh);
    let mass = assemble_mass(&mesh);
    out.add("stiffness.csv", |b| k.write_csv(b, &h))?;
    out.add("mass.csv", |b| mass.write_csv(b, &h))?;
    run.say(format!(
        "mesh m={m}: {} vertices, {} triangles, {} interior dofs",
        mesh.vertices().len(),
        mesh.triangles().len(),
        mesh.num_dofs()
    ));
    Ok(())
}

pub fn eigs(run: &Run, out: &mut Artifacts) -> Result<()> {
    let count = run.config.eigs_count;
    let exact = analytic_eigenvalues(count);
    let mut rows = Vec::new();
    for &m in &run.config.levels {
        let mesh = build_mesh(m)?;
        if count > mesh.num_dofs() {
            return Err(FlatError::Config(format!(
                "eigs.count = {count} exceeds the {} dofs at m = {m}",
                mesh.num_dofs()
            )));
        }
        let start = Instant::now();
        let eig = compute_eigenpairs(&assemble_stiffness(&mesh), &assemble_mass(&mesh), count)?;
        for (k, (&lh, &l)) in eig.values.iter().zip(&exact).enumerate() {
            rows.push(vec![
                m.to_string(),
                (k + 1).to_string(),
                num(lh),
                num(l),
                num((lh - l) / l),
            ]);
            run.say(format!(
                "m={m} k={} lambda_h={lh:.6} lambda={l:.6} rel_err={:.3e}",
                k + 1,
                (lh - l) / l
            ));
        }
        run.say(format!("m={m}: {:.2?}", start.elapsed()));
    }
    out.add_table(
        "eigs.csv",
        "",
        &["m", "k", "lambda_h", "lambda_analytic", "rel_err"],
        &rows,
    )
}

pub fn fiber_point(run: &Run, out: &mut Artifacts) -> Result<()> {
    let mut residual_rows = Vec::new();
    let mut table_rows = Vec::new();
    let mut failure = None;
    for &m in &run.config.levels {
        let start = Instant::now();
        let p = run.problem(m)?;
        let g = run.rhs(&p)?;
        let u0 = run.initial(&p)?;
        let report = match continuation_horizontal(&p, &u0, &g, p.options().depth_max) {
            Ok(r) => r,
            Err(e) => {
                failure = Some(e);
                break;
            }
        };
        for n in 0..report.residuals.len() {
            residual_rows.push(vec![
                m.to_string(),
                n.to_string(),
                num(report.residuals[n]),
                num(report.residuals_l2[n]),
                num(report.absolute[n]),
            ]);
        }
        let pick = |v: &[f64], n: usize| v.get(n).map_or(String::new(), |x| num(*x));
        let mut row = vec![m.to_string()];
        row.extend((1..=3).map(|n| pick(&report.residuals, n)));
        row.extend((1..=3).map(|n| pick(&report.residuals_l2, n)));
        table_rows.push(row);
        let header = out.header(&format!("m={m}"));
        let u = report.solution().clone();
        let mesh = p.mesh();
        out.add(format!("fiber_point_m{m}.csv"), |b| {
            mesh.write_field_csv(&u, b, &header)
        })?;
        let e: Vec<String> = report.residuals.iter().skip(1).map(|v| format!("{v:.3e}")).collect();
        run.say(format!(
            "m={m} K={:?} status={:?} e_n=[{}] ({:.2?})",
            p.spectral().index_set(),
            report.status,
            e.join(", "),
            start.elapsed()
        ));
        if !report.status.is_converged() {
            failure = Some(report.into_result().expect_err("not converged"));
            break;
        }
    }
    out.add_table(
        "residuals.csv",
        "",
        &["m", "n", "e_y", "e_l2", "residual_y"],
        &residual_rows,
    )?;
    out.add_table(
        "table.csv",
        "",
        &["m", "e1_y", "e2_y", "e3_y", "e1_l2", "e2_l2", "e3_l2"],
        &table_rows,
    )?;
    failure.map_or(Ok(()), Err)
}

fn trace_rows(trace: &FiberTrace) -> Vec<Vec<String>> {
    trace
        .heights_in
        .iter()
        .zip(&trace.heights_out)
        .map(|(t, s)| t.iter().chain(s).map(|v| num(*v)).collect())
        .collect()
}

fn columns(dim: usize) -> Vec<&'static str> {
    if dim == 1 {
        vec!["t", "s"]
    } else {
        vec!["t1", "t2", "s1", "s2"]
    }
}

/// Writes a trace; an aborted trace is stored as far as it got before the error propagates.
fn store_trace(
    out: &mut Artifacts,
    name: &str,
    extra: &str,
    result: Result<FiberTrace>,
    dim: usize,
) -> Result<FiberTrace> {
    match result {
        Ok(trace) => {
            out.add_table(name, extra, &columns(dim), &trace_rows(&trace))?;
            Ok(trace)
        }
        Err(FlatError::TraceAborted {
            partial,
            requested,
            source,
        }) => {
            out.add_table(name, extra, &columns(dim), &trace_rows(&partial))?;
            Err(FlatError::TraceAborted {
                partial,
                requested,
                source,
            })
        }
        Err(e) => Err(e),
    }
}

fn require_trace_dim(p: &Problem) -> Result<usize> {
    match p.spectral().vertical_dim() {
        d @ (1 | 2) => Ok(d),
        d => Err(FlatError::Config(format!(
            "fiber exploration needs |K| = 1 or 2, the interval gives |K| = {d} (K = {:?})",
            p.spectral().index_set()
        ))),
    }
}

struct Traces2d {
    circle: FiberTrace,
    rays: Vec<FiberTrace>,
}

fn trace_2d(run: &Run, p: &Problem, g: &DualField, out: &mut Artifacts, m: u32) -> Result<Traces2d> {
    let t = &run.config.trace;
    let extra = format!("m={m} radius={}", t.radius);
    let circle = store_trace(out, "circle.csv", &extra, trace_circle_2d(p, g, t.radius, t.points), 2)?;
    let mut rays = Vec::new();
    for (i, d) in t.directions.iter().enumerate() {
        let extra = format!("m={m} direction={},{}", d[0], d[1]);
        let ray = trace_radial_2d(p, g, *d, t.r_max, t.radial_steps);
        rays.push(store_trace(out, &format!("ray_{i}.csv"), &extra, ray, 2)?);
    }
    Ok(Traces2d { circle, rays })
}

fn write_crossings(out: &mut Artifacts, found: &Intersections, m: u32) -> Result<()> {
    let rows: Vec<Vec<String>> = found
        .crossings
        .iter()
        .map(|c| {
            [
                c.point[0],
                c.point[1],
                c.heights.0[0],
                c.heights.0[1],
                c.heights.1[0],
                c.heights.1[1],
            ]
            .iter()
            .map(|v| num(*v))
            .collect()
        })
        .collect();
    out.add_table(
        "crossings.csv",
        &format!("m={m}"),
        &["s1", "s2", "t1_a", "t2_a", "t1_b", "t2_b"],
        &rows,
    )
}

pub fn trace_fiber(run: &Run, out: &mut Artifacts) -> Result<()> {
    let m = run.config.single_level()?;
    let start = Instant::now();
    let p = run.problem(m)?;
    let dim = require_trace_dim(&p)?;
    let g = run.rhs(&p)?;
    let target = p.spectral().heights_y(&g);
    let t = &run.config.trace;
    if dim == 1 {
        let trace = store_trace(
            out,
            "trace.csv",
            &format!("m={m}"),
            trace_fiber_1d(&p, &g, t.window.0, t.window.1, t.steps),
            1,
        )?;
        let s: Vec<f64> = trace.heights_out.iter().map(|v| v[0]).collect();
        let ups = s.windows(2).filter(|w| w[1] > w[0]).count();
        run.say(format!(
            "m={m} K={:?}: {} samples, s rises on {ups} of {} intervals, target s*={:.6} ({:.2?})",
            p.spectral().index_set(),
            s.len(),
            s.len() - 1,
            target[0],
            start.elapsed()
        ));
    } else {
        let traces = trace_2d(run, &p, &g, out, m)?;
        let found = find_intersections_2d(&traces.circle, None, 0.0)?;
        write_crossings(out, &found, m)?;
        run.say(format!(
            "m={m} K={:?}: circle of {} points, {} self-crossings, {} rays ({:.2?})",
            p.spectral().index_set(),
            traces.circle.len(),
            found.crossings.len(),
            traces.rays.len(),
            start.elapsed()
        ));
    }
    let rows: Vec<Vec<String>> = target
        .iter()
        .enumerate()
        .map(|(k, s)| vec![(k + 1).to_string(), num(*s)])
        .collect();
    out.add_table("target.csv", &format!("m={m}"), &["k", "s"], &rows)
}

pub fn solve(run: &Run, out: &mut Artifacts) -> Result<()> {
    let m = run.config.single_level()?;
    let start = Instant::now();
    let p = run.problem(m)?;
    let dim = require_trace_dim(&p)?;
    let g = run.rhs(&p)?;
    let t = &run.config.trace;
    let (target, set, labels) = if dim == 1 {
        let trace = store_trace(
            out,
            "trace.csv",
            &format!("m={m}"),
            trace_fiber_1d(&p, &g, t.window.0, t.window.1, t.steps),
            1,
        )?;
        let set = solve_on_fiber_1d(&p, &g, &trace)?;
        let touches: Vec<Vec<String>> = set.near_touches.iter().map(|t| vec![num(*t)]).collect();
        out.add_table("near_touches.csv", &format!("m={m}"), &["t"], &touches)?;
        let labels = (1..=set.multiplicity).map(|i| format!("s{i}")).collect();
        (g, set, labels)
    } else {
        solve_2d(run, &p, &g, out, m)?
    };
    let spec = p.spectral();
    let mut rows = Vec::new();
    for (i, u) in set.solutions.iter().enumerate() {
        let header = out.header(&format!("m={m} solution={} label={}", i + 1, labels[i]));
        let mesh = p.mesh();
        out.add(format!("solution_{}.csv", i + 1), |b| {
            mesh.write_field_csv(u, b, &header)
        })?;
        let mut row = vec![(i + 1).to_string(), labels[i].clone(), num(set.residuals[i])];
        row.extend(spec.heights_x(u).iter().map(|v| num(*v)));
        row.extend(image_heights(&p, u)?.iter().map(|v| num(*v)));
        rows.push(row);
    }
    let mut cols = vec!["index", "label", "residual"];
    cols.extend(if dim == 1 {
        vec!["t", "s"]
    } else {
        vec!["t1", "t2", "s1", "s2"]
    });
    out.add_table("summary.csv", &format!("m={m}"), &cols, &rows)?;
    let s_star = spec.heights_y(&target);
    run.say(format!(
        "m={m} K={:?}: {} solutions of F(u) = g with target heights {:?}, residuals {:?} ({:.2?})",
        spec.index_set(),
        set.multiplicity,
        s_star,
        set.residuals.iter().map(|r| format!("{r:.2e}")).collect::<Vec<_>>(),
        start.elapsed()
    ));
    Ok(())
}

/// Circle crossing gives the target and the `U`/`D` guesses; rays through it give the rest.
fn solve_2d(
    run: &Run,
    p: &Problem,
    g_ref: &DualField,
    out: &mut Artifacts,
    m: u32,
) -> Result<(DualField, SolutionSet, Vec<String>)> {
    let spec = p.spectral();
    let traces = trace_2d(run, p, g_ref, out, m)?;
    let found = find_intersections_2d(&traces.circle, None, 0.0)?;
    write_crossings(out, &found, m)?;
    let Some(crossing) = found.crossings.first() else {
        return Err(FlatError::Argument(format!(
            "the image of the circle of radius {} does not self-intersect; try another trace.radius",
            run.config.trace.radius
        )));
    };
    let target = &spec.project_horizontal_y(g_ref) + &spec.vertical_y(&crossing.point);
    let (a, b) = &crossing.heights;
    let (up, down) = if a[1] >= b[1] { (a, b) } else { (b, a) };
    let mut guesses = vec![("U".to_string(), up.clone()), ("D".to_string(), down.clone())];
    let scale = 1.0 + crossing.point[0].abs().max(crossing.point[1].abs());
    for (i, (ray, d)) in traces.rays.iter().zip(&run.config.trace.directions).enumerate() {
        let label = match (d[0].signum(), d[1]) {
            (s, y) if y == 0.0 && s > 0.0 => "R".to_string(),
            (s, y) if y == 0.0 && s < 0.0 => "L".to_string(),
            _ => format!("ray{i}"),
        };
        for hit in find_intersections_2d(ray, Some(crossing.point), 1e-6 * scale)?.hits {
            guesses.push((label.clone(), hit.heights));
        }
    }
    let mut set = SolutionSet::default();
    let mut labels = Vec::new();
    let mut rows = Vec::new();
    for (label, h) in guesses {
        let (start, _) = fiber_point_at(p, &h, &target)?;
        let (u, report) = newton_full(p, &start, &target, POLISH_TOL)?;
        let residual = *report.residuals.last().expect("newton records the start");
        let new = set.insert(p, u, residual, h.clone());
        rows.push(vec![
            label.clone(),
            num(h[0]),
            num(h[1]),
            report.steps.to_string(),
            new.to_string(),
        ]);
        if new {
            labels.push(label);
        }
    }
    out.add_table(
        "guesses.csv",
        &format!("m={m}"),
        &["label", "t1", "t2", "newton_steps", "distinct"],
        &rows,
    )?;
    Ok((target, set, labels))
}

pub fn resolve_out_dir(config: &RunConfig, config_dir: &Path, flag: Option<PathBuf>) -> PathBuf {
    match (flag, &config.output_dir) {
        (Some(dir), _) => dir,
        (None, Some(dir)) => config_dir.join(dir),
        (None, None) => PathBuf::from("out"),
    }
}
