//! Self-contained dense linear algebra for the small symmetric systems the
//! fitter needs (3×3 covariances, 7×7 parameter-space matrices).
//!
//! Everything here is deterministic: cyclic Jacobi sweeps in a fixed order,
//! sequential accumulation, no randomized pivoting. Identical inputs yield
//! bit-identical outputs on a given platform.

use thiserror::Error;

/// Errors raised by the dense solvers.
#[derive(Debug, Error)]
pub enum LinalgError {
    /// A Cholesky pivot fell below the positive-definiteness threshold.
    #[error("matrix not positive definite: pivot {pivot:.3e} at index {index}")]
    NotPositiveDefinite { pivot: f64, index: usize },
    /// The Jacobi iteration exhausted its sweep budget (NaN contamination
    /// upstream is the usual cause).
    #[error("symmetric eigensolver did not converge within {0} sweeps")]
    NoConvergence(usize),
    /// Operands have incompatible orders.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// Maximum number of cyclic Jacobi sweeps before giving up.
pub const JACOBI_MAX_SWEEPS: usize = 50;

/// Dense symmetric matrix of small order, stored row-major.
///
/// Symmetry is enforced on construction: every constructor stores the
/// symmetric part `(A + Aᵀ)/2` of its input.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    order: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    /// Zero matrix of the given order.
    pub fn zeros(order: usize) -> Self {
        Self {
            order,
            data: vec![0.0; order * order],
        }
    }

    /// Identity matrix of the given order.
    pub fn identity(order: usize) -> Self {
        let mut m = Self::zeros(order);
        for i in 0..order {
            m.data[i * order + i] = 1.0;
        }
        m
    }

    /// Diagonal matrix from the given entries.
    pub fn from_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m.data[i * diag.len() + i] = d;
        }
        m
    }

    /// Build from a row-major slice, symmetrizing the input.
    ///
    /// # Panics
    /// Panics if `data.len() != order * order`.
    pub fn from_row_major(order: usize, data: &[f64]) -> Self {
        assert_eq!(data.len(), order * order, "row-major data length");
        let mut m = Self::zeros(order);
        for i in 0..order {
            for j in 0..order {
                m.data[i * order + j] = 0.5 * (data[i * order + j] + data[j * order + i]);
            }
        }
        m
    }

    /// Build entry-wise from a function of `(row, col)`, symmetrizing.
    /// Each unordered pair is evaluated once, so stateful closures still
    /// yield a symmetric matrix.
    pub fn from_fn(order: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(order);
        for i in 0..order {
            for j in i..order {
                let value = if i == j {
                    f(i, i)
                } else {
                    0.5 * (f(i, j) + f(j, i))
                };
                m.data[i * order + j] = value;
                m.data[j * order + i] = value;
            }
        }
        m
    }

    pub fn order(&self) -> usize {
        self.order
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.order + j]
    }

    /// Set entry `(i, j)` and its mirror `(j, i)`.
    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.order + j] = v;
        self.data[j * self.order + i] = v;
    }

    /// `self += s * other`.
    pub fn add_scaled(&mut self, other: &SymMatrix, s: f64) {
        debug_assert_eq!(self.order, other.order);
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += s * b;
        }
    }

    /// Rank-one update `self += w * v vᵀ`.
    pub fn add_outer(&mut self, v: &[f64], w: f64) {
        debug_assert_eq!(v.len(), self.order);
        for i in 0..self.order {
            let wi = w * v[i];
            for j in 0..self.order {
                self.data[i * self.order + j] += wi * v[j];
            }
        }
    }

    /// `self += r * I`.
    pub fn add_ridge(&mut self, r: f64) {
        for i in 0..self.order {
            self.data[i * self.order + i] += r;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for a in self.data.iter_mut() {
            *a *= s;
        }
    }

    pub fn trace(&self) -> f64 {
        (0..self.order).map(|i| self.get(i, i)).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|a| a * a).sum::<f64>().sqrt()
    }

    /// `vᵀ A v`.
    pub fn quadratic_form(&self, v: &[f64]) -> f64 {
        debug_assert_eq!(v.len(), self.order);
        let mut acc = 0.0;
        for i in 0..self.order {
            let mut row = 0.0;
            for j in 0..self.order {
                row += self.get(i, j) * v[j];
            }
            acc += v[i] * row;
        }
        acc
    }

    /// `A v`.
    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.order);
        (0..self.order)
            .map(|i| (0..self.order).map(|j| self.get(i, j) * v[j]).sum())
            .collect()
    }

    /// Lower-triangular Cholesky factor `L` with `L Lᵀ = A`.
    ///
    /// Fails with [`LinalgError::NotPositiveDefinite`] when a pivot drops to
    /// `1e-14 · trace(A) / order` or below, which signals a degenerate input
    /// that the caller should regularize.
    pub fn cholesky(&self) -> Result<Cholesky, LinalgError> {
        let n = self.order;
        let tol = 1e-14 * self.trace() / n as f64;
        let mut l = vec![0.0; n * n];
        for j in 0..n {
            let mut pivot = self.get(j, j);
            for k in 0..j {
                pivot -= l[j * n + k] * l[j * n + k];
            }
            if !(pivot > tol) {
                return Err(LinalgError::NotPositiveDefinite { pivot, index: j });
            }
            let d = pivot.sqrt();
            l[j * n + j] = d;
            for i in (j + 1)..n {
                let mut s = self.get(i, j);
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = s / d;
            }
        }
        Ok(Cholesky { order: n, lower: l })
    }

    /// Full symmetric eigendecomposition by cyclic Jacobi rotations.
    ///
    /// Eigenvalues are returned in ascending order with orthonormal
    /// eigenvectors. The sweep order is fixed, so the result is deterministic.
    pub fn sym_eig(&self) -> Result<SymEigen, LinalgError> {
        let n = self.order;
        let mut a = self.data.clone();
        let mut v = vec![0.0; n * n];
        for i in 0..n {
            v[i * n + i] = 1.0;
        }

        let norm = self.frobenius_norm();
        let tol = f64::EPSILON * if norm > 0.0 { norm } else { 1.0 };

        let mut converged = false;
        for _sweep in 0..JACOBI_MAX_SWEEPS {
            let mut off = 0.0;
            for p in 0..n {
                for q in (p + 1)..n {
                    off += 2.0 * a[p * n + q] * a[p * n + q];
                }
            }
            if off.sqrt() <= tol {
                converged = true;
                break;
            }
            for p in 0..(n - 1) {
                for q in (p + 1)..n {
                    let apq = a[p * n + q];
                    if apq == 0.0 {
                        continue;
                    }
                    let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                    // Smaller-magnitude root of t² + 2θt − 1 = 0.
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    let tau = s / (1.0 + c);

                    let app = a[p * n + p];
                    let aqq = a[q * n + q];
                    a[p * n + p] = app - t * apq;
                    a[q * n + q] = aqq + t * apq;
                    a[p * n + q] = 0.0;
                    a[q * n + p] = 0.0;
                    for k in 0..n {
                        if k != p && k != q {
                            let akp = a[k * n + p];
                            let akq = a[k * n + q];
                            a[k * n + p] = akp - s * (akq + tau * akp);
                            a[k * n + q] = akq + s * (akp - tau * akq);
                            a[p * n + k] = a[k * n + p];
                            a[q * n + k] = a[k * n + q];
                        }
                    }
                    for k in 0..n {
                        let vkp = v[k * n + p];
                        let vkq = v[k * n + q];
                        v[k * n + p] = vkp - s * (vkq + tau * vkp);
                        v[k * n + q] = vkq + s * (vkp - tau * vkq);
                    }
                }
            }
        }
        if !converged {
            return Err(LinalgError::NoConvergence(JACOBI_MAX_SWEEPS));
        }

        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| {
            a[i * n + i]
                .partial_cmp(&a[j * n + j])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(i.cmp(&j))
        });
        let values: Vec<f64> = order.iter().map(|&i| a[i * n + i]).collect();
        let vectors: Vec<Vec<f64>> = order
            .iter()
            .map(|&col| (0..n).map(|row| v[row * n + col]).collect())
            .collect();
        Ok(SymEigen { values, vectors })
    }
}

/// Lower-triangular Cholesky factor.
#[derive(Debug, Clone)]
pub struct Cholesky {
    order: usize,
    lower: Vec<f64>,
}

impl Cholesky {
    pub fn order(&self) -> usize {
        self.order
    }

    /// Entry of the lower factor (zero above the diagonal).
    pub fn lower_entry(&self, i: usize, j: usize) -> f64 {
        if j > i {
            0.0
        } else {
            self.lower[i * self.order + j]
        }
    }

    /// Solve `L x = b` by forward substitution.
    pub fn solve_lower(&self, b: &[f64]) -> Vec<f64> {
        let n = self.order;
        let mut x = vec![0.0; n];
        for i in 0..n {
            let mut s = b[i];
            for k in 0..i {
                s -= self.lower[i * n + k] * x[k];
            }
            x[i] = s / self.lower[i * n + i];
        }
        x
    }

    /// Solve `Lᵀ x = b` by back substitution.
    pub fn solve_lower_transpose(&self, b: &[f64]) -> Vec<f64> {
        let n = self.order;
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in (i + 1)..n {
                s -= self.lower[k * n + i] * x[k];
            }
            x[i] = s / self.lower[i * n + i];
        }
        x
    }

    /// `L Lᵀ`, for reconstruction tests.
    pub fn reconstruct(&self) -> SymMatrix {
        let n = self.order;
        SymMatrix::from_fn(n, |i, j| {
            (0..=i.min(j))
                .map(|k| self.lower_entry(i, k) * self.lower_entry(j, k))
                .sum()
        })
    }
}

/// Result of a symmetric (or generalized symmetric) eigendecomposition,
/// eigenvalues ascending, `vectors[k]` paired with `values[k]`.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
}

/// All eigenpairs of the generalized problem `B x = λ C x`.
///
/// `C` is reduced by its Cholesky factor `L` to the standard symmetric
/// problem on `L⁻¹ B L⁻ᵀ`; eigenvectors are mapped back to the original
/// coordinates (they are `C`-orthonormal rather than orthonormal).
pub fn gen_eig(b: &SymMatrix, c: &SymMatrix) -> Result<SymEigen, LinalgError> {
    let n = b.order();
    if c.order() != n {
        return Err(LinalgError::DimensionMismatch(format!(
            "B is {}x{n} but C is {}x{}",
            n,
            c.order(),
            c.order()
        )));
    }
    let chol = c.cholesky()?;

    // X = L⁻¹ B, column by column.
    let mut x = vec![0.0; n * n];
    for j in 0..n {
        let col: Vec<f64> = (0..n).map(|i| b.get(i, j)).collect();
        let solved = chol.solve_lower(&col);
        for i in 0..n {
            x[i * n + j] = solved[i];
        }
    }
    // Ã = X L⁻ᵀ; row i of Ã solves L y = (row i of X).
    let mut at = vec![0.0; n * n];
    for i in 0..n {
        let row: Vec<f64> = (0..n).map(|j| x[i * n + j]).collect();
        let solved = chol.solve_lower(&row);
        at[i * n..(i + 1) * n].copy_from_slice(&solved);
    }
    let reduced = SymMatrix::from_row_major(n, &at);
    let eig = reduced.sym_eig()?;

    let vectors = eig
        .vectors
        .iter()
        .map(|y| chol.solve_lower_transpose(y))
        .collect();
    Ok(SymEigen {
        values: eig.values,
        vectors,
    })
}

/// Eigenpair of `B x = λ C x` whose eigenvalue is closest to zero, with the
/// eigenvector in canonical form (unit norm, largest-magnitude component
/// positive).
pub fn gen_eig_smallest(b: &SymMatrix, c: &SymMatrix) -> Result<(f64, Vec<f64>), LinalgError> {
    let eig = gen_eig(b, c)?;
    let mut best = 0;
    for k in 1..eig.values.len() {
        if eig.values[k].abs() < eig.values[best].abs() {
            best = k;
        }
    }
    let mut v = eig.vectors[best].clone();
    canonicalize(&mut v);
    Ok((eig.values[best], v))
}

/// Normalize `v` to unit Euclidean norm and flip its sign so the
/// largest-magnitude component (first of ties) is positive.
pub fn canonicalize(v: &mut [f64]) {
    let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    if norm > 0.0 {
        for a in v.iter_mut() {
            *a /= norm;
        }
    }
    let mut lead = 0;
    for (i, a) in v.iter().enumerate() {
        if a.abs() > v[lead].abs() {
            lead = i;
        }
    }
    if v[lead] < 0.0 {
        for a in v.iter_mut() {
            *a = -*a;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_sym(rng: &mut impl Rng, n: usize) -> SymMatrix {
        SymMatrix::from_fn(n, |_, _| rng.random_range(-1.0..1.0))
    }

    /// SPD matrix G Gᵀ + small ridge.
    fn random_spd(rng: &mut impl Rng, n: usize) -> SymMatrix {
        let g: Vec<f64> = (0..n * n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut m = SymMatrix::from_fn(n, |i, j| {
            (0..n).map(|k| g[i * n + k] * g[j * n + k]).sum()
        });
        m.add_ridge(1e-3);
        m
    }

    #[test]
    fn cholesky_identity() {
        let a = SymMatrix::identity(7);
        let l = a.cholesky().unwrap();
        for i in 0..7 {
            for j in 0..7 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert_eq!(l.lower_entry(i, j), expect);
            }
        }
    }

    #[test]
    fn cholesky_diagonal() {
        let a = SymMatrix::from_diagonal(&[4.0, 9.0]);
        let l = a.cholesky().unwrap();
        assert_eq!(l.lower_entry(0, 0), 2.0);
        assert_eq!(l.lower_entry(1, 1), 3.0);
        assert_eq!(l.lower_entry(1, 0), 0.0);
    }

    #[test]
    fn cholesky_reconstructs_random_spd() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let a = random_spd(&mut rng, 7);
            let l = a.cholesky().unwrap();
            let back = l.reconstruct();
            let mut diff = a.clone();
            diff.add_scaled(&back, -1.0);
            assert!(
                diff.frobenius_norm() <= 1e-10 * a.frobenius_norm(),
                "reconstruction error {:.3e}",
                diff.frobenius_norm()
            );
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = SymMatrix::from_diagonal(&[1.0, -1.0, 1.0]);
        match a.cholesky() {
            Err(LinalgError::NotPositiveDefinite { index, .. }) => assert_eq!(index, 1),
            other => panic!("expected NotPositiveDefinite, got {other:?}"),
        }
    }

    #[test]
    fn cholesky_solves_agree_with_reconstruction() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_spd(&mut rng, 5);
        let l = a.cholesky().unwrap();
        let b: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
        // Solve A x = b as Lᵀ x = L⁻¹ b, then check the residual.
        let y = l.solve_lower(&b);
        let x = l.solve_lower_transpose(&y);
        let ax = a.mul_vec(&x);
        for (ai, bi) in ax.iter().zip(b.iter()) {
            assert!((ai - bi).abs() < 1e-10);
        }
    }

    #[test]
    fn sym_eig_identity() {
        let eig = SymMatrix::identity(5).sym_eig().unwrap();
        for v in &eig.values {
            assert!((v - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn sym_eig_diagonal_sorted() {
        let eig = SymMatrix::from_diagonal(&[3.0, 1.0, 2.0]).sym_eig().unwrap();
        assert_eq!(eig.values, vec![1.0, 2.0, 3.0]);
        // Eigenvector of eigenvalue 1.0 is e_y.
        assert!((eig.vectors[0][1].abs() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn sym_eig_residuals_and_orthonormality() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let a = random_sym(&mut rng, 7);
            let norm = a.frobenius_norm();
            let eig = a.sym_eig().unwrap();
            for (lambda, v) in eig.values.iter().zip(eig.vectors.iter()) {
                let av = a.mul_vec(v);
                let res: f64 = av
                    .iter()
                    .zip(v.iter())
                    .map(|(avi, vi)| (avi - lambda * vi).powi(2))
                    .sum::<f64>()
                    .sqrt();
                assert!(res <= 1e-10 * norm, "residual {res:.3e} vs {norm:.3e}");
            }
            for i in 0..7 {
                for j in 0..7 {
                    let dot: f64 = eig.vectors[i]
                        .iter()
                        .zip(eig.vectors[j].iter())
                        .map(|(a, b)| a * b)
                        .sum();
                    let expect = if i == j { 1.0 } else { 0.0 };
                    assert!((dot - expect).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn sym_eig_rejects_nan() {
        let mut a = SymMatrix::identity(3);
        a.set(0, 1, f64::NAN);
        assert!(matches!(a.sym_eig(), Err(LinalgError::NoConvergence(_))));
    }

    #[test]
    fn gen_eig_with_identity_matches_sym_eig() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let b = random_spd(&mut rng, 7);
        let c = SymMatrix::identity(7);
        let (lambda, m) = gen_eig_smallest(&b, &c).unwrap();
        let eig = b.sym_eig().unwrap();
        assert!((lambda - eig.values[0]).abs() <= 1e-10 * b.frobenius_norm());
        let dot: f64 = m.iter().zip(eig.vectors[0].iter()).map(|(a, b)| a * b).sum();
        assert!((dot.abs() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn gen_eig_explicit_diagonal() {
        let b = SymMatrix::from_diagonal(&[2.0, 0.0, 1.0, 1.0, 1.0, 1.0, 1.0]);
        let c = SymMatrix::identity(7);
        let (lambda, m) = gen_eig_smallest(&b, &c).unwrap();
        assert!(lambda.abs() < 1e-14);
        let e2: Vec<f64> = (0..7).map(|i| if i == 1 { 1.0 } else { 0.0 }).collect();
        for (a, b) in m.iter().zip(e2.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn gen_eig_random_residuals() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            // PSD B of deficient rank, PD C.
            let g: Vec<f64> = (0..7 * 4).map(|_| rng.random_range(-1.0..1.0)).collect();
            let b = SymMatrix::from_fn(7, |i, j| {
                (0..4).map(|k| g[i * 4 + k] * g[j * 4 + k]).sum()
            });
            let c = random_spd(&mut rng, 7);
            let (lambda, m) = gen_eig_smallest(&b, &c).unwrap();
            let bm = b.mul_vec(&m);
            let cm = c.mul_vec(&m);
            let res: f64 = bm
                .iter()
                .zip(cm.iter())
                .map(|(bi, ci)| (bi - lambda * ci).powi(2))
                .sum::<f64>()
                .sqrt();
            let bound = 1e-10 * (b.frobenius_norm() + lambda.abs() * c.frobenius_norm());
            assert!(res <= bound, "residual {res:.3e} vs bound {bound:.3e}");
        }
    }

    #[test]
    fn gen_eig_rayleigh_quotient_matches_eigenvalue() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let b = random_spd(&mut rng, 7);
        let c = random_spd(&mut rng, 7);
        let (lambda, m) = gen_eig_smallest(&b, &c).unwrap();
        let rayleigh = b.quadratic_form(&m) / c.quadratic_form(&m);
        assert!((rayleigh - lambda).abs() <= 1e-10 * (1.0 + lambda.abs()));
    }

    #[test]
    fn gen_eig_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let b = random_spd(&mut rng, 7);
        let c = random_spd(&mut rng, 7);
        let (l1, m1) = gen_eig_smallest(&b, &c).unwrap();
        let (l2, m2) = gen_eig_smallest(&b, &c).unwrap();
        assert_eq!(l1.to_bits(), l2.to_bits());
        for (a, b) in m1.iter().zip(m2.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn canonicalize_unit_norm_and_sign() {
        let mut v = vec![0.3, -0.9, 0.1];
        canonicalize(&mut v);
        let norm: f64 = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-15);
        assert!(v[1] > 0.0, "largest-magnitude component must be positive");
        assert!(v[0] < 0.0);
    }
}
