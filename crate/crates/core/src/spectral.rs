//! Discrete Dirichlet eigenpairs and the vertical/horizontal splitting they induce.
//!
//! Eigenvectors are normalized in the discrete `H¹₀` product `⟨u, v⟩_X = uᵀ K v`.
//! The range side carries `⟨g, h⟩_Y = gᵀ K⁻¹ h`; `K` is then an isometry from
//! `X^h` onto `Y^h` and the vertical range subspace is spanned by `K φ_k`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{FlatError, Result};
use crate::field::{DualField, NodalField};
use crate::linalg::{BandedCholesky, SymSparseMatrix};

/// Eigenpairs beyond this size are never attempted densely.
pub const DENSE_EIGEN_LIMIT: usize = 2500;
/// Relative residual every returned eigenpair satisfies.
pub const EIGEN_RESIDUAL_TOL: f64 = 1e-10;
/// Consecutive eigenvalues closer than this (relative) count as one cluster.
pub const DEGENERACY_TOL: f64 = 1e-8;
const MAX_SWEEPS: usize = 500;

/// Exact Dirichlet eigenvalues `π²(p² + q²/4)` of `[0,1] x [0,2]`, ascending.
pub fn analytic_eigenvalues(count: usize) -> Vec<f64> {
    let reach = count + 2;
    let mut all: Vec<f64> = (1..=reach)
        .flat_map(|p| (1..=2 * reach).map(move |q| PI * PI * ((p * p) as f64 + (q * q) as f64 / 4.0)))
        .collect();
    all.sort_by(f64::total_cmp);
    all.truncate(count);
    all
}

/// The `count` smallest generalized eigenpairs of `K φ = λ M φ`.
#[derive(Clone, Debug)]
pub struct Eigenpairs {
    pub values: Vec<f64>,
    /// `K`-orthonormal, first significant coefficient positive.
    pub vectors: Vec<NodalField>,
}

impl Eigenpairs {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn largest(&self) -> f64 {
        self.values.last().copied().unwrap_or(f64::NEG_INFINITY)
    }
}

fn relative_residual(k: &SymSparseMatrix, m: &SymSparseMatrix, lambda: f64, x: &DVector<f64>) -> f64 {
    let kx = k.mul_vec(x);
    (&kx - m.mul_vec(x) * lambda).norm() / kx.norm()
}

fn deterministic_start(n: usize, p: usize) -> DMatrix<f64> {
    // xorshift; fixed seed keeps runs bit-reproducible
    let mut state: u64 = 0x9E37_79B9_7F4A_7C15;
    DMatrix::from_fn(n, p, |_, _| {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    })
}

/// Solves the small dense pencil `(A, B)`, returning ascending values and
/// `B`-orthonormal vectors.
fn dense_pencil(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let chol = b
        .clone()
        .cholesky()
        .ok_or_else(|| FlatError::LinearAlgebra("mass matrix is not positive definite".into()))?;
    let l = chol.l();
    let linv_a = l
        .solve_lower_triangular(a)
        .ok_or_else(|| FlatError::LinearAlgebra("singular Cholesky factor".into()))?;
    let c = l
        .solve_lower_triangular(&linv_a.transpose())
        .ok_or_else(|| FlatError::LinearAlgebra("singular Cholesky factor".into()))?;
    let c = (&c + c.transpose()) * 0.5;
    let eig = SymmetricEigen::new(c);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let sorted = DMatrix::from_fn(a.nrows(), order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
    let vectors = l
        .transpose()
        .solve_upper_triangular(&sorted)
        .ok_or_else(|| FlatError::LinearAlgebra("singular Cholesky factor".into()))?;
    Ok((values, vectors))
}

fn subspace_iteration(
    k: &SymSparseMatrix,
    m: &SymSparseMatrix,
    k_factor: &BandedCholesky,
    count: usize,
) -> std::result::Result<(Vec<f64>, DMatrix<f64>), Vec<f64>> {
    let n = k.dim();
    let p = (2 * count).max(count + 8).min(n);
    let mut x = deterministic_start(n, p);
    let mut history = Vec::new();
    for _ in 0..MAX_SWEEPS {
        // shift-invert step (shift 0): Y = K⁻¹ M X
        let mut y = DMatrix::zeros(n, p);
        for j in 0..p {
            let col = k_factor.solve(&m.mul_vec(&x.column(j).into_owned()));
            y.set_column(j, &col);
        }
        let ky = DMatrix::from_fn(n, p, |_, _| 0.0);
        let mut ky = ky;
        let mut my = DMatrix::zeros(n, p);
        for j in 0..p {
            let c = y.column(j).into_owned();
            ky.set_column(j, &k.mul_vec(&c));
            my.set_column(j, &m.mul_vec(&c));
        }
        let kr = y.transpose() * &ky;
        let mr = y.transpose() * &my;
        let kr = (&kr + kr.transpose()) * 0.5;
        let mr = (&mr + mr.transpose()) * 0.5;
        let Ok((theta, v)) = dense_pencil(&kr, &mr) else {
            return Err(history);
        };
        x = &y * v;
        let worst = (0..count)
            .map(|j| relative_residual(k, m, theta[j], &x.column(j).into_owned()))
            .fold(0.0f64, f64::max);
        history.push(worst);
        if worst <= 1e-2 * EIGEN_RESIDUAL_TOL {
            return Ok((theta, x));
        }
    }
    Err(history)
}

/// The `count` smallest eigenpairs of `K φ = λ M φ`.
///
/// Uses shift-invert subspace iteration on a banded factorization of `K`
/// and falls back to a dense solve for `N ≤ DENSE_EIGEN_LIMIT`.
pub fn compute_eigenpairs(k: &SymSparseMatrix, m: &SymSparseMatrix, count: usize) -> Result<Eigenpairs> {
    let n = k.dim();
    if count == 0 || count > n {
        return Err(FlatError::Argument(format!(
            "cannot compute {count} eigenpairs of a {n}x{n} pencil"
        )));
    }
    let k_factor = BandedCholesky::factor(k)?;
    // ask for one extra pair so clusters straddling the cutoff are detected
    let want = (count + 1).min(n);
    let (values, vectors) = if n <= 2 * want + 8 {
        dense_pencil(&k.to_dense(), &m.to_dense())?
    } else {
        match subspace_iteration(k, m, &k_factor, want) {
            Ok(found) => found,
            Err(_) if n <= DENSE_EIGEN_LIMIT => dense_pencil(&k.to_dense(), &m.to_dense())?,
            Err(history) => return Err(FlatError::EigenNonConvergence { history }),
        }
    };

    for w in values[..want].windows(2) {
        if (w[1] - w[0]).abs() <= DEGENERACY_TOL * w[1].abs() {
            return Err(FlatError::DegenerateEigenvalues {
                first: w[0],
                second: w[1],
            });
        }
    }

    let mut out_vectors = Vec::with_capacity(count);
    for (j, &lambda) in values.iter().enumerate().take(count) {
        let mut v = vectors.column(j).into_owned();
        let knorm = v.dot(&k.mul_vec(&v)).sqrt();
        v /= knorm;
        let scale = v.amax();
        if let Some(first) = v.iter().find(|c| c.abs() > 1e-8 * scale) {
            if *first < 0.0 {
                v = -v;
            }
        }
        let res = relative_residual(k, m, lambda, &v);
        if !(res <= EIGEN_RESIDUAL_TOL) {
            return Err(FlatError::EigenNonConvergence { history: vec![res] });
        }
        out_vectors.push(NodalField(v));
    }
    Ok(Eigenpairs {
        values: values[..count].to_vec(),
        vectors: out_vectors,
    })
}

/// Default endpoint-resonance margin for `[a, b]`.
pub fn default_gap(a: f64, b: f64) -> f64 {
    (1e-6 * (b - a)).max(1e-12 * a.abs().max(b.abs()).max(1.0))
}

/// 1-based indices `k` with `λ_k ∈ [a, b]`.
///
/// Fails with [`FlatError::Resonance`] when an eigenvalue lies within `gap` of
/// either endpoint.
pub fn index_set(eigenvalues: &[f64], a: f64, b: f64, gap: f64) -> Result<Vec<usize>> {
    if !(a <= b) {
        return Err(FlatError::Argument(format!("interval [{a}, {b}] is empty")));
    }
    let mut set = Vec::new();
    for (i, &lambda) in eigenvalues.iter().enumerate() {
        for endpoint in [a, b] {
            if (lambda - endpoint).abs() <= gap {
                return Err(FlatError::Resonance {
                    eigenvalue: lambda,
                    endpoint,
                    margin: gap,
                });
            }
        }
        if a <= lambda && lambda <= b {
            set.push(i + 1);
        }
    }
    Ok(set)
}

/// Eigen data, the interval `[a, b]`, and the projections of the induced splitting.
#[derive(Clone, Debug)]
pub struct SpectralData {
    eigen: Eigenpairs,
    interval: (f64, f64),
    index_set: Vec<usize>,
    stiffness: SymSparseMatrix,
    mass: SymSparseMatrix,
    k_factor: BandedCholesky,
    m_factor: BandedCholesky,
    // φ_k and K φ_k for k in the index set
    basis: Vec<DVector<f64>>,
    dual_basis: Vec<DVector<f64>>,
}

impl SpectralData {
    pub fn new(
        stiffness: SymSparseMatrix,
        mass: SymSparseMatrix,
        eigen: Eigenpairs,
        interval: (f64, f64),
    ) -> Result<Self> {
        let (a, b) = interval;
        let index_set = index_set(&eigen.values, a, b, default_gap(a, b))?;
        if eigen.largest() <= b {
            return Err(FlatError::NeedsMoreEigenvalues {
                largest: eigen.largest(),
                upper: b,
            });
        }
        let basis: Vec<_> = index_set.iter().map(|&k| eigen.vectors[k - 1].0.clone()).collect();
        let dual_basis = basis.iter().map(|phi| stiffness.mul_vec(phi)).collect();
        let k_factor = BandedCholesky::factor(&stiffness)?;
        let m_factor = BandedCholesky::factor(&mass)?;
        Ok(Self {
            eigen,
            interval,
            index_set,
            stiffness,
            mass,
            k_factor,
            m_factor,
            basis,
            dual_basis,
        })
    }

    pub fn eigenpairs(&self) -> &Eigenpairs {
        &self.eigen
    }

    pub fn eigenvalue(&self, k: usize) -> f64 {
        self.eigen.values[k - 1]
    }

    /// `φ_k` (1-based).
    pub fn eigenvector(&self, k: usize) -> &NodalField {
        &self.eigen.vectors[k - 1]
    }

    pub fn interval(&self) -> (f64, f64) {
        self.interval
    }

    pub fn index_set(&self) -> &[usize] {
        &self.index_set
    }

    /// `|𝒦|`, the dimension of the vertical subspaces.
    pub fn vertical_dim(&self) -> usize {
        self.index_set.len()
    }

    pub fn stiffness(&self) -> &SymSparseMatrix {
        &self.stiffness
    }

    pub fn mass(&self) -> &SymSparseMatrix {
        &self.mass
    }

    pub fn stiffness_factor(&self) -> &BandedCholesky {
        &self.k_factor
    }

    pub fn dim(&self) -> usize {
        self.stiffness.dim()
    }

    /// Vertical basis `φ_k`, `k ∈ 𝒦`.
    pub fn vertical_basis(&self) -> &[DVector<f64>] {
        &self.basis
    }

    /// `K φ_k`, `k ∈ 𝒦`.
    pub fn vertical_dual_basis(&self) -> &[DVector<f64>] {
        &self.dual_basis
    }

    /// Heights `⟨z, φ_k⟩_X = φ_kᵀ K z`.
    pub fn heights_x(&self, z: &NodalField) -> Vec<f64> {
        self.dual_basis.iter().map(|kphi| kphi.dot(&z.0)).collect()
    }

    /// Heights `⟨ĝ, K φ_k⟩_Y = φ_kᵀ ĝ`.
    pub fn heights_y(&self, g: &DualField) -> Vec<f64> {
        self.basis.iter().map(|phi| phi.dot(&g.0)).collect()
    }

    /// `Σ t_k φ_k`.
    pub fn vertical_x(&self, heights: &[f64]) -> NodalField {
        assert_eq!(heights.len(), self.basis.len());
        let mut out = DVector::zeros(self.dim());
        for (t, phi) in heights.iter().zip(&self.basis) {
            out.axpy(*t, phi, 1.0);
        }
        NodalField(out)
    }

    /// `Σ s_k K φ_k`.
    pub fn vertical_y(&self, heights: &[f64]) -> DualField {
        assert_eq!(heights.len(), self.dual_basis.len());
        let mut out = DVector::zeros(self.dim());
        for (s, kphi) in heights.iter().zip(&self.dual_basis) {
            out.axpy(*s, kphi, 1.0);
        }
        DualField(out)
    }

    pub fn project_vertical_x(&self, z: &NodalField) -> NodalField {
        self.vertical_x(&self.heights_x(z))
    }

    pub fn project_horizontal_x(&self, z: &NodalField) -> NodalField {
        z - &self.project_vertical_x(z)
    }

    pub fn project_vertical_y(&self, g: &DualField) -> DualField {
        self.vertical_y(&self.heights_y(g))
    }

    pub fn project_horizontal_y(&self, g: &DualField) -> DualField {
        g - &self.project_vertical_y(g)
    }

    pub fn inner_x(&self, u: &NodalField, v: &NodalField) -> f64 {
        u.0.dot(&self.stiffness.mul_vec(&v.0))
    }

    pub fn norm_x(&self, u: &NodalField) -> f64 {
        self.inner_x(u, u).max(0.0).sqrt()
    }

    /// `K⁻¹ ĝ`: the domain element mapped onto `ĝ` by the isometry.
    pub fn stiffness_solve(&self, g: &DualField) -> NodalField {
        NodalField(self.k_factor.solve(&g.0))
    }

    pub fn inner_y(&self, g: &DualField, h: &DualField) -> f64 {
        self.k_factor.solve(&g.0).dot(&h.0)
    }

    /// `‖ĝ‖_Y = sqrt(ĝᵀ K⁻¹ ĝ)`, one banded solve.
    pub fn norm_y(&self, g: &DualField) -> f64 {
        // ‖L⁻¹ĝ‖₂ with K = L Lᵀ, nonnegative by construction
        self.k_factor.forward(&g.0).norm()
    }

    /// `L²` norm of the P1 function with dual coordinates `ĝ`: `sqrt(ĝᵀ M⁻¹ ĝ)`.
    pub fn norm_l2_dual(&self, g: &DualField) -> f64 {
        self.m_factor.forward(&g.0).norm()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{assemble_mass, assemble_stiffness, build_mesh};

    fn pencil(m: u32) -> (SymSparseMatrix, SymSparseMatrix) {
        let mesh = build_mesh(m).unwrap();
        (assemble_stiffness(&mesh), assemble_mass(&mesh))
    }

    #[test]
    fn analytic_values() {
        let l = analytic_eigenvalues(6);
        let pi2 = PI * PI;
        let expected = [1.25, 2.0, 3.25, 4.25, 5.0, 5.0];
        for (a, e) in l.iter().zip(expected) {
            assert!((a - e * pi2).abs() < 1e-12);
        }
    }

    #[test]
    fn subspace_iteration_agrees_with_dense() {
        let (k, m) = pencil(4);
        let eig = compute_eigenpairs(&k, &m, 4).unwrap();
        let (dense, _) = dense_pencil(&k.to_dense(), &m.to_dense()).unwrap();
        for (a, b) in eig.values.iter().zip(&dense).take(4) {
            assert!((a - b).abs() < 1e-9 * b);
        }
    }

    #[test]
    fn k_orthonormal_and_sign_fixed() {
        let (k, m) = pencil(3);
        let eig = compute_eigenpairs(&k, &m, 5).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let kij = eig.vectors[i].0.dot(&k.mul_vec(&eig.vectors[j].0));
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((kij - expect).abs() < 1e-10, "({i},{j}) {kij}");
            }
            let v = &eig.vectors[i].0;
            let first = v.iter().find(|c| c.abs() > 1e-8 * v.amax()).unwrap();
            assert!(*first > 0.0);
            assert!(relative_residual(&k, &m, eig.values[i], v) <= EIGEN_RESIDUAL_TOL);
        }
    }

    #[test]
    fn first_mode_is_positive() {
        let (k, m) = pencil(4);
        let eig = compute_eigenpairs(&k, &m, 1).unwrap();
        assert!(eig.vectors[0].0.iter().all(|&c| c > 0.0));
    }

    #[test]
    fn degenerate_cluster_is_rejected() {
        // two decoupled copies of the same pencil have every eigenvalue doubled
        let (k, m) = pencil(2);
        let n = k.dim();
        let dup = |a: &SymSparseMatrix| {
            SymSparseMatrix::from_triplets(
                2 * n,
                a.triplets().chain(a.triplets().map(|(r, c, v)| (r + n, c + n, v))),
            )
        };
        let err = compute_eigenpairs(&dup(&k), &dup(&m), 2).unwrap_err();
        assert!(matches!(err, FlatError::DegenerateEigenvalues { .. }));
    }

    #[test]
    fn index_set_examples() {
        let (k, m) = pencil(4);
        let eig = compute_eigenpairs(&k, &m, 4).unwrap();
        let l = &eig.values;
        assert!(index_set(l, 1.0, 10.0, default_gap(1.0, 10.0)).unwrap().is_empty());
        let (a, b) = (l[0] - 3.7, l[0] + 3.7);
        assert_eq!(index_set(l, a, b, default_gap(a, b)).unwrap(), vec![1]);
        let hw = (l[1] - l[0]) / 2.0;
        let (a, b) = (l[1] - 0.99 * hw, l[1] + 0.99 * hw);
        assert_eq!(index_set(l, a, b, default_gap(a, b)).unwrap(), vec![2]);
        assert!(matches!(
            index_set(l, l[0], l[0] + 1.0, default_gap(l[0], l[0] + 1.0)),
            Err(FlatError::Resonance { .. })
        ));
        assert!(index_set(l, 2.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn needs_more_eigenvalues() {
        let (k, m) = pencil(3);
        let eig = compute_eigenpairs(&k, &m, 1).unwrap();
        let err = SpectralData::new(k, m, eig, (1.0, 15.0)).unwrap_err();
        assert!(matches!(err, FlatError::NeedsMoreEigenvalues { .. }));
    }

    #[test]
    fn basis_vector_projections() {
        let (k, m) = pencil(3);
        let eig = compute_eigenpairs(&k, &m, 3).unwrap();
        let spec = SpectralData::new(k, m, eig, (10.0, 16.0)).unwrap();
        assert_eq!(spec.index_set(), &[1]);
        let phi = spec.eigenvector(1).clone();
        let q = spec.project_vertical_x(&phi);
        assert!((&q - &phi).0.norm() < 1e-12);
        assert!(spec.project_horizontal_x(&phi).0.norm() < 1e-12);

        let kphi = DualField(spec.stiffness().mul_vec(&phi.0));
        assert!((&spec.project_vertical_y(&kphi) - &kphi).0.norm() < 1e-12 * kphi.0.norm());
        assert!(spec.norm_y(&DualField::zeros(spec.dim())) == 0.0);
        assert!((spec.norm_y(&kphi) - 1.0).abs() < 1e-12);
    }
}
