//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.
//!
//! Criteria 1-4 and 6 drive the `flatmap` binary on the frozen configs;
//! criterion 5 checks the solver properties in process.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use flatmap::mesh::interpolate;
use flatmap::nonlinearity::{make_arctan_family, make_linear};
use flatmap::solver::{
    build_problem, continuation_horizontal, fiber_point, horizontal_newton, LcOperator, Problem, SolverOptions,
};
use flatmap::spectral::analytic_eigenvalues;
use flatmap::{DualField, NodalField};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = std::result::Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Check + 'a>);

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

struct Output {
    dir: PathBuf,
    elapsed: Duration,
}

fn flatmap(command: &str, config: &str, out: &Path) -> std::result::Result<Output, String> {
    let start = Instant::now();
    let status = Command::new(env!("CARGO_BIN_EXE_flatmap"))
        .args([command, "--quiet", "--config"])
        .arg(configs().join(config))
        .arg("--out")
        .arg(out)
        .status()
        .map_err(|e| format!("cannot run flatmap: {e}"))?;
    if !status.success() {
        return Err(format!("flatmap {command} {config} exited with {status}"));
    }
    Ok(Output {
        dir: out.to_path_buf(),
        elapsed: start.elapsed(),
    })
}

/// Rows of an artifact CSV keyed by column name.
fn table(path: &Path) -> std::result::Result<Vec<BTreeMap<String, String>>, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let body: String = text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| format!("{l}\n"))
        .collect();
    let mut r = csv::Reader::from_reader(body.as_bytes());
    let headers = r.headers().map_err(|e| e.to_string())?.clone();
    r.records()
        .map(|rec| {
            let rec = rec.map_err(|e| e.to_string())?;
            Ok(headers
                .iter()
                .map(String::from)
                .zip(rec.iter().map(String::from))
                .collect())
        })
        .collect()
}

fn column(rows: &[BTreeMap<String, String>], name: &str) -> std::result::Result<Vec<f64>, String> {
    rows.iter()
        .map(|r| {
            r.get(name)
                .ok_or_else(|| format!("missing column {name}"))?
                .parse::<f64>()
                .map_err(|e| format!("column {name}: {e}"))
        })
        .collect()
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn eigenvalues(work: &Path) -> Check {
    let out = flatmap("eigs", "eigs.cfg", &work.join("eigs"))?;
    let rows = table(&out.dir.join("eigs.csv"))?;
    let exact = [5.0 * PI * PI / 4.0, 2.0 * PI * PI, 13.0 * PI * PI / 4.0];
    let err = |m: &str, k: usize| -> std::result::Result<f64, String> {
        let row = rows
            .iter()
            .find(|r| r["m"] == m && r["k"] == k.to_string())
            .ok_or_else(|| format!("no row m={m} k={k}"))?;
        let lh: f64 = row["lambda_h"].parse().map_err(|e| format!("{e}"))?;
        Ok((lh - exact[k - 1]).abs() / exact[k - 1])
    };
    let mut worst = 0.0f64;
    let mut ratios = Vec::new();
    for k in 1..=3 {
        let e5 = err("5", k)?;
        worst = worst.max(e5);
        for (a, b) in [("4", "5"), ("5", "6")] {
            ratios.push(err(a, k)? / err(b, k)?);
        }
    }
    ensure(worst <= 0.02, || format!("m=5 relative error {worst:.3e} > 2%"))?;
    ensure(ratios.iter().all(|r| (3.0..=5.0).contains(r)), || {
        format!("error ratios {ratios:.3?}")
    })?;
    ensure(out.elapsed <= Duration::from_secs(30), || {
        format!("took {:.1?}", out.elapsed)
    })?;
    let (lo, hi) = ratios
        .iter()
        .fold((f64::MAX, 0.0f64), |(a, b), r| (a.min(*r), b.max(*r)));
    Ok(format!(
        "m=5 max rel err {worst:.2e}, ratios in [{lo:.2}, {hi:.2}], {:.1?}",
        out.elapsed
    ))
}

/// Reference Y^h and L^2 errors e_1..e_3 for m = 3, 4, 5.
const REFERENCE_TABLE: [(u32, [f64; 6]); 3] = [
    (3, [1.42e-2, 5.27e-5, 4.48e-8, 1.97e-2, 9.37e-5, 7.45e-8]),
    (4, [1.70e-2, 1.12e-4, 3.93e-8, 2.36e-2, 1.74e-4, 1.21e-7]),
    (5, [1.75e-2, 1.31e-4, 4.25e-8, 2.44e-2, 1.93e-4, 1.11e-7]),
];

fn horizontal_table(work: &Path) -> Check {
    let out = flatmap("fiber-point", "table_horizontal.cfg", &work.join("table"))?;
    let rows = table(&out.dir.join("table.csv"))?;
    let cols = ["e1_y", "e2_y", "e3_y", "e1_l2", "e2_l2", "e3_l2"];
    let windows = [(1e-3, 1e-1), (1e-5, 1e-3), (1e-9, 1e-6)];
    let mut worst_factor = 1.0f64;
    for (m, reference) in REFERENCE_TABLE {
        let row = rows
            .iter()
            .find(|r| r["m"] == m.to_string())
            .ok_or_else(|| format!("no row for m={m}"))?;
        for (i, col) in cols.iter().enumerate() {
            let e: f64 = row[*col].parse().map_err(|_| format!("m={m} {col} missing"))?;
            let (lo, hi) = windows[i % 3];
            ensure((lo..=hi).contains(&e), || {
                format!("m={m} {col} = {e:.3e} outside [{lo:e}, {hi:e}]")
            })?;
            let factor = (e / reference[i]).max(reference[i] / e);
            ensure(factor <= 10.0, || {
                format!("m={m} {col} = {e:.3e} vs reference {:.2e}", reference[i])
            })?;
            worst_factor = worst_factor.max(factor);
        }
    }
    ensure(out.elapsed <= Duration::from_secs(120), || {
        format!("took {:.1?}", out.elapsed)
    })?;
    Ok(format!(
        "all 18 entries in range, worst factor to reference {worst_factor:.2}, {:.1?}",
        out.elapsed
    ))
}

fn solutions(dir: &Path, expected: usize) -> std::result::Result<Vec<BTreeMap<String, String>>, String> {
    let rows = table(&dir.join("summary.csv"))?;
    ensure(rows.len() == expected, || {
        format!("{}: {} solutions, expected {expected}", dir.display(), rows.len())
    })?;
    let residuals = column(&rows, "residual")?;
    ensure(residuals.iter().all(|r| *r <= 1e-8), || {
        format!("{}: residuals {residuals:?}", dir.display())
    })?;
    Ok(rows)
}

fn multiplicities(work: &Path) -> Check {
    let mut notes = Vec::new();
    for (cfg, rising) in [("fig03_hamsub1.cfg", true), ("fig04_hamsup1.cfg", false)] {
        let out = flatmap("solve", cfg, &work.join(cfg))?;
        let s = column(&table(&out.dir.join("trace.csv"))?, "s")?;
        let monotone = s.windows(2).all(|w| if rising { w[1] > w[0] } else { w[1] < w[0] });
        ensure(monotone, || format!("{cfg}: trace not strictly monotone"))?;
        solutions(&out.dir, 1)?;
        notes.push(format!("{} 1", if rising { "DH-up" } else { "DH-down" }));
    }
    let out = flatmap("solve", "fig05_06_ap.cfg", &work.join("ap"))?;
    let rows = solutions(&out.dir, 2)?;
    let s = column(&table(&out.dir.join("trace.csv"))?, "s")?;
    let target = column(&rows, "s")?[0];
    let top = s.iter().cloned().fold(f64::MIN, f64::max);
    ensure(target < top && s[0] < target && s[s.len() - 1] < target, || {
        format!("AP target {target:.3} not below the fold top {top:.3}")
    })?;
    notes.push("AP 2".into());
    for (cfg, label) in [
        ("fig07_08_nonconvex.cfg", "non-convex"),
        ("fig10_11_lambda2.cfg", "K={2}"),
    ] {
        let out = flatmap("solve", cfg, &work.join(cfg))?;
        solutions(&out.dir, 3)?;
        notes.push(format!("{label} 3"));
    }
    Ok(notes.join(", "))
}

fn two_d_fiber(work: &Path) -> Check {
    let out = flatmap("solve", "fig12_15_fish.cfg", &work.join("fish"))?;
    let crossings = table(&out.dir.join("crossings.csv"))?;
    ensure(!crossings.is_empty(), || "circle image does not self-intersect".into())?;
    let rows = solutions(&out.dir, 4)?;
    let mut labels: Vec<&str> = rows.iter().map(|r| r["label"].as_str()).collect();
    labels.sort_unstable();
    ensure(labels == ["D", "L", "R", "U"], || format!("labels {labels:?}"))?;
    ensure(out.elapsed <= Duration::from_secs(600), || {
        format!("took {:.1?}", out.elapsed)
    })?;
    let worst = column(&rows, "residual")?.into_iter().fold(0.0, f64::max);
    Ok(format!(
        "{} crossing(s), solutions U D R L, max residual {worst:.1e}, {:.1?}",
        crossings.len(),
        out.elapsed
    ))
}

fn ap_problem(m: u32) -> Problem {
    let l = analytic_eigenvalues(2);
    build_problem(
        m,
        make_arctan_family((l[1] - l[0]) / PI, l[0]).unwrap(),
        None,
        SolverOptions::default(),
    )
    .unwrap()
}

fn random_field(p: &Problem, rng: &mut ChaCha8Rng, amplitude: f64) -> NodalField {
    let c: Vec<f64> = (0..9).map(|_| rng.random_range(-1.0..1.0)).collect();
    interpolate(p.mesh(), |x, y| {
        let mut s = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                s += c[3 * i + j] * ((i + 1) as f64 * PI * x).sin() * ((j + 1) as f64 * PI * y / 2.0).sin();
            }
        }
        amplitude * s
    })
    .unwrap()
}

fn rhs(p: &Problem) -> DualField {
    let g = interpolate(p.mesh(), |x, y| -100.0 * x * (x - 1.0) * y * (y - 2.0)).unwrap();
    DualField(p.spectral().mass().mul_vec(&g.0))
}

fn max_abs(a: &DMatrix<f64>) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn properties() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut notes = Vec::new();

    let p = ap_problem(3);
    let spec = p.spectral();
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let u = random_field(&p, &mut rng, 50.0);
        let (q, h) = (spec.project_vertical_x(&u), spec.project_horizontal_x(&u));
        let ku = DualField(spec.stiffness().mul_vec(&u.0));
        let scale = spec.norm_x(&u);
        worst = worst
            .max(spec.norm_x(&(&spec.project_vertical_x(&q) - &q)) / scale)
            .max(spec.norm_x(&(&(&q + &h) - &u)) / scale)
            .max(spec.norm_y(&(&(&spec.project_vertical_y(&ku) + &spec.project_horizontal_y(&ku)) - &ku)) / scale)
            .max(spec.norm_y(&spec.project_vertical_y(&spec.project_horizontal_y(&ku))) / scale)
            .max((spec.norm_y(&ku) - scale).abs() / scale);
    }
    ensure(worst <= 1e-10, || format!("projection/isometry defect {worst:.2e}"))?;
    notes.push(format!("projections {worst:.0e}"));

    let p = ap_problem(4);
    let eps = 1e-6;
    let mut fd_worst = 0.0f64;
    for _ in 0..5 {
        let u = random_field(&p, &mut rng, 20.0);
        let h = random_field(&p, &mut rng, 1.0);
        let fd = (&p.eval_f(&(&u + &(&h * eps))).unwrap().0 - &p.eval_f(&u).unwrap().0) / eps;
        let dh = p.assemble_df(&u).unwrap().mul_vec(&h.0);
        fd_worst = fd_worst.max((&fd - &dh).norm() / dh.norm());
    }
    ensure(fd_worst <= 1e-5, || format!("DF vs finite differences {fd_worst:.2e}"))?;
    notes.push(format!("DF-FD {fd_worst:.0e}"));

    let l1 = analytic_eigenvalues(1)[0];
    let lin = build_problem(
        4,
        make_linear(11.0),
        Some((l1 - 3.0, l1 + 3.0)),
        SolverOptions::default(),
    )
    .unwrap();
    let u0 = random_field(&lin, &mut rng, 50.0);
    let e1 = horizontal_newton(&lin, &u0, &rhs(&lin), 1e-14, 5)
        .map_err(|e| e.to_string())?
        .residuals[1];
    ensure(e1 <= 1e-12, || format!("linear one-step e1 = {e1:.2e}"))?;
    notes.push(format!("linear e1 {e1:.0e}"));

    let spec = p.spectral();
    let g = rhs(&p);
    let tol = p.options().tol;
    let v = spec.vertical_x(&[25.0]);
    let (a, _) = fiber_point(&p, &v, &g).map_err(|e| e.to_string())?;
    let drift = spec.norm_x(&(&spec.project_vertical_x(&a) - &v));
    ensure(drift <= 1e-10, || format!("height drift {drift:.2e}"))?;
    let other = &v + &spec.project_horizontal_x(&random_field(&p, &mut rng, 60.0));
    let (b, _) = continuation_horizontal(&p, &other, &g, 6)
        .and_then(|r| r.into_result())
        .map_err(|e| e.to_string())?;
    let gap = spec.norm_x(&(&a - &b)) / spec.norm_x(&a);
    ensure(gap <= 10.0 * tol, || format!("two starts differ by {gap:.2e}"))?;
    notes.push(format!("heights {drift:.0e}, uniqueness {gap:.0e}"));

    let p = build_problem(
        2,
        make_arctan_family((analytic_eigenvalues(2)[1] - l1) / PI, l1).unwrap(),
        None,
        SolverOptions {
            c: 3.5,
            ..Default::default()
        },
    )
    .unwrap();
    let spec = p.spectral();
    let n = p.dim();
    let u = random_field(&p, &mut rng, 30.0);
    let k = spec.stiffness().to_dense();
    let phi = &spec.eigenvector(1).0;
    let qx = phi * (&k * phi).transpose();
    let qy = (&k * phi) * phi.transpose();
    let id = DMatrix::<f64>::identity(n, n);
    let w = p.derivative_weight(&u).unwrap().to_dense();
    let oracle = &k - (&id - &qy) * w * (&id - &qx) - spec.mass().to_dense() * &qx * 3.5;
    let lc = LcOperator::new(&p, &u).map_err(|e| e.to_string())?.to_dense();
    let lc_err = max_abs(&(lc - &oracle)) / max_abs(&oracle);
    let z = random_field(&p, &mut rng, 1.0);
    let proj_err = (&spec.project_vertical_x(&z).0 - &qx * &z.0).norm() / z.0.norm();
    ensure(lc_err <= 1e-10 && proj_err <= 1e-10, || {
        format!("dense oracle: L_c {lc_err:.2e}, Q_X {proj_err:.2e}")
    })?;
    notes.push(format!("oracle {:.0e}", lc_err.max(proj_err)));

    let p = ap_problem(2);
    let spec = p.spectral();
    let chol = spec.stiffness_factor();
    let mut smallest = f64::INFINITY;
    for _ in 0..20 {
        let u = random_field(&p, &mut rng, 100.0);
        let l = LcOperator::new(&p, &u).map_err(|e| e.to_string())?.to_dense();
        let mut scaled = DMatrix::zeros(n, n);
        for j in 0..n {
            let mut e = DVector::zeros(n);
            e[j] = 1.0;
            scaled.set_column(j, &chol.forward(&(&l * chol.backward(&e))));
        }
        smallest = smallest.min(scaled.singular_values().min());
    }
    ensure(smallest > 0.0, || format!("smallest singular value {smallest:.3e}"))?;
    notes.push(format!("coercivity {smallest:.3}"));
    Ok(notes.join(", "))
}

fn files(dir: &Path) -> std::result::Result<BTreeMap<String, Vec<u8>>, String> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir).map_err(|e| e.to_string())? {
        let path = entry.map_err(|e| e.to_string())?.path();
        let bytes = fs::read(&path).map_err(|e| e.to_string())?;
        out.insert(path.file_name().unwrap().to_string_lossy().into_owned(), bytes);
    }
    Ok(out)
}

fn determinism(work: &Path) -> Check {
    let mut count = 0;
    for (command, cfg) in [("fiber-point", "table_horizontal.cfg"), ("solve", "fig12_15_fish.cfg")] {
        let a = flatmap(command, cfg, &work.join(format!("{cfg}.a")))?;
        let b = flatmap(command, cfg, &work.join(format!("{cfg}.b")))?;
        let (fa, fb) = (files(&a.dir)?, files(&b.dir)?);
        ensure(fa.keys().eq(fb.keys()), || format!("{cfg}: different file sets"))?;
        for (name, bytes) in &fa {
            ensure(fb[name] == *bytes, || format!("{cfg}: {name} differs between runs"))?;
        }
        count += fa.len();
    }
    Ok(format!("{count} files byte-identical across two runs"))
}

fn main() {
    let work = tempfile::tempdir().expect("temporary directory");
    let criteria: [Criterion; 6] = [
        ("eigenvalues", Box::new(|| eigenvalues(work.path()))),
        ("horizontal-error table", Box::new(|| horizontal_table(work.path()))),
        ("solution multiplicities", Box::new(|| multiplicities(work.path()))),
        ("2-D fiber", Box::new(|| two_d_fiber(work.path()))),
        ("property suites", Box::new(properties)),
        ("determinism", Box::new(|| determinism(work.path()))),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("criterion {} ({name}): PASS: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {} ({name}): FAIL: {detail}", i + 1);
            }
        }
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
