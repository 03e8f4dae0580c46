//! Dense complex linear algebra kernel.
//!
//! Every algebra element in this crate is a square [`Matrix`] of complex
//! entries. Equality of algebra elements is always decided in operator
//! norm against [`Tolerances::eq_tol`]; Hilbert–Schmidt quantities only
//! appear inside projections and least-squares solves.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type Scalar = Complex64;
pub type Matrix = DMatrix<Complex64>;
pub type Vector = DVector<Complex64>;

pub const ZERO: Scalar = Complex64::new(0.0, 0.0);
pub const ONE: Scalar = Complex64::new(1.0, 0.0);

/// Numerical thresholds shared by every check in the crate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Matrix-equality threshold, operator norm.
    pub eq_tol: f64,
    /// Eigenvalue cutoff for pseudo-inverses and support projections.
    pub rank_tol: f64,
    /// Agreement threshold between independently computed angle values.
    pub angle_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            eq_tol: 1e-9,
            rank_tol: 1e-10,
            angle_tol: 1e-8,
        }
    }
}

impl Tolerances {
    pub fn validate(&self) -> Result<()> {
        let all_positive = [self.eq_tol, self.rank_tol, self.angle_tol]
            .iter()
            .all(|t| t.is_finite() && *t > 0.0);
        if !all_positive {
            return Err(Error::Argument(
                "tolerances must be finite and strictly positive".into(),
            ));
        }
        if self.rank_tol > self.eq_tol {
            return Err(Error::Argument(format!(
                "rank_tol ({:e}) must not exceed eq_tol ({:e})",
                self.rank_tol, self.eq_tol
            )));
        }
        Ok(())
    }
}

/// Spectral function applied by [`psd_calculus`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PsdFunction {
    Sqrt,
    /// λ^{-1/2} on eigenvalues above `rank_tol`, zero on the rest.
    PinvSqrt,
    Inv,
}

pub fn identity(n: usize) -> Matrix {
    Matrix::identity(n, n)
}

pub fn real(x: f64) -> Scalar {
    Complex64::new(x, 0.0)
}

fn gemm(transpose_a: bool, a: &Matrix, b: &Matrix) -> Matrix {
    use matrixmultiply::CGemmOption;
    let (m, k) = if transpose_a {
        (a.ncols(), a.nrows())
    } else {
        (a.nrows(), a.ncols())
    };
    assert_eq!(k, b.nrows(), "inner dimensions disagree");
    let n = b.ncols();
    let mut out = Matrix::zeros(m, n);
    if m == 0 || n == 0 || k == 0 {
        return out;
    }
    // Column-major storage: entry (i, j) sits at i + j·nrows. The adjoint is
    // read from the conjugate through swapped strides.
    let conj;
    let (lhs, rsa, csa) = if transpose_a {
        conj = a.conjugate();
        (&conj, a.nrows() as isize, 1)
    } else {
        (a, 1, a.nrows() as isize)
    };
    // SAFETY: Complex<f64> is #[repr(C)] { re, im }, the layout of [f64; 2].
    // The pointers cover m·k, k·n and m·n contiguous entries respectively,
    // and `out` does not alias the inputs.
    unsafe {
        matrixmultiply::zgemm(
            CGemmOption::Standard,
            CGemmOption::Standard,
            m,
            k,
            n,
            [1.0, 0.0],
            lhs.as_ptr().cast(),
            rsa,
            csa,
            b.as_ptr().cast(),
            1,
            b.nrows() as isize,
            [0.0, 0.0],
            out.as_mut_ptr().cast(),
            1,
            m as isize,
        );
    }
    out
}

/// `a b` through a packed complex GEMM kernel; much faster than the
/// generic product for the larger matrices of a basic construction.
pub fn matmul(a: &Matrix, b: &Matrix) -> Matrix {
    gemm(false, a, b)
}

/// `a* b`.
pub fn ad_matmul(a: &Matrix, b: &Matrix) -> Matrix {
    gemm(true, a, b)
}

/// Largest singular value.
pub fn op_norm(m: &Matrix) -> Result<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Err(Error::Dimension("operator norm of an empty matrix".into()));
    }
    Ok(norm(m))
}

/// Infallible operator norm for matrices already known to be non-empty.
pub(crate) fn norm(m: &Matrix) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.clone()
        .singular_values()
        .iter()
        .cloned()
        .fold(0.0, f64::max)
}

/// `max_i ‖m_i‖ / s_i` in operator norm. Candidates are visited in
/// decreasing order of the Frobenius bound `‖m‖_F ≥ ‖m‖`, and the scan stops
/// once no remaining bound can beat the running maximum, so only a few
/// singular-value decompositions are needed.
pub(crate) fn max_scaled_norm(items: impl IntoIterator<Item = (Matrix, f64)>) -> f64 {
    let mut bounded: Vec<(f64, Matrix, f64)> = items
        .into_iter()
        .map(|(m, scale)| (hs_norm(&m) / scale, m, scale))
        .collect();
    bounded.sort_by(|x, y| y.0.total_cmp(&x.0));
    let mut best: f64 = 0.0;
    for (bound, m, scale) in &bounded {
        if *bound <= best {
            break;
        }
        best = best.max(norm(m) / scale);
    }
    best
}

/// Raw Hilbert–Schmidt inner product `Tr(a* b)`.
pub fn hs_inner(a: &Matrix, b: &Matrix) -> Scalar {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

/// Raw Hilbert–Schmidt (Frobenius) norm.
pub fn hs_norm(a: &Matrix) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// Normalized trace `Tr(a)/n`.
pub fn normalized_trace(a: &Matrix) -> Scalar {
    a.trace() / real(a.nrows() as f64)
}

pub fn kron(a: &Matrix, b: &Matrix) -> Matrix {
    a.kronecker(b)
}

pub fn commutator(a: &Matrix, b: &Matrix) -> Matrix {
    a * b - b * a
}

fn check_hermitian(h: &Matrix, tol: &Tolerances) -> Result<Matrix> {
    if h.nrows() != h.ncols() {
        return Err(Error::Shape(format!(
            "expected a square matrix, got {}x{}",
            h.nrows(),
            h.ncols()
        )));
    }
    if h.nrows() == 0 {
        return Err(Error::Dimension("empty matrix".into()));
    }
    let skew = h - h.adjoint();
    let scale = norm(h).max(1.0);
    let dev = norm(&skew);
    if dev > tol.eq_tol * scale {
        return Err(Error::Shape(format!(
            "matrix is not Hermitian (deviation {dev:.3e})"
        )));
    }
    Ok((h + h.adjoint()).scale(0.5))
}

/// Eigen-decomposition of a Hermitian matrix: ascending real eigenvalues
/// with orthonormal eigenvector columns.
pub fn hermitian_eigen(h: &Matrix) -> (Vec<f64>, Matrix) {
    let sym = (h + h.adjoint()).scale(0.5);
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = Matrix::from_columns(
        &order
            .iter()
            .map(|&i| eig.eigenvectors.column(i).into_owned())
            .collect::<Vec<_>>(),
    );
    (values, vectors)
}

fn apply_spectral(values: &[f64], vectors: &Matrix, f: impl Fn(f64) -> f64) -> Matrix {
    let n = vectors.nrows();
    let mut out = Matrix::zeros(n, n);
    for (k, &lam) in values.iter().enumerate() {
        let w = f(lam);
        if w == 0.0 {
            continue;
        }
        let v = vectors.column(k);
        out += (v * v.adjoint()).scale(w);
    }
    out
}

/// Applies a spectral function to a positive semidefinite Hermitian matrix.
pub fn psd_calculus(h: &Matrix, f: PsdFunction, tol: &Tolerances) -> Result<Matrix> {
    let h = check_hermitian(h, tol)?;
    let (values, vectors) = hermitian_eigen(&h);
    if let Some(&min) = values.first() {
        if min < -tol.rank_tol.max(tol.eq_tol * norm(&h).max(1.0)) {
            return Err(Error::Shape(format!(
                "matrix is not positive semidefinite (eigenvalue {min:.3e})"
            )));
        }
    }
    let cut = tol.rank_tol;
    match f {
        PsdFunction::Sqrt => Ok(apply_spectral(&values, &vectors, |l| l.max(0.0).sqrt())),
        PsdFunction::PinvSqrt => Ok(apply_spectral(&values, &vectors, |l| {
            if l <= cut {
                0.0
            } else {
                1.0 / l.sqrt()
            }
        })),
        PsdFunction::Inv => {
            if values.iter().any(|&l| l <= cut) {
                return Err(Error::Singular(format!(
                    "smallest eigenvalue {:.3e} is below rank_tol",
                    values[0]
                )));
            }
            Ok(apply_spectral(&values, &vectors, |l| 1.0 / l))
        }
    }
}

/// Inverse of a Hermitian positive definite matrix (e.g. an index value).
pub fn inverse_positive(h: &Matrix, tol: &Tolerances) -> Result<Matrix> {
    psd_calculus(h, PsdFunction::Inv, tol)
}

/// Moore–Penrose pseudo-inverse of a Hermitian PSD matrix, eigenvalues at or
/// below `rel_cut * λ_max` treated as zero.
pub(crate) fn psd_pinv_relative(h: &Matrix, rel_cut: f64) -> Matrix {
    let (values, vectors) = hermitian_eigen(h);
    let top = values.iter().cloned().fold(0.0, f64::max);
    if top <= 0.0 {
        return Matrix::zeros(h.nrows(), h.ncols());
    }
    apply_spectral(&values, &vectors, |l| if l <= rel_cut * top { 0.0 } else { 1.0 / l })
}

/// Minimum-norm least-squares solution and its residual.
#[derive(Debug, Clone)]
pub struct LeastSquares {
    pub coefficients: Vector,
    /// `‖Σ cᵢ Mᵢ − target‖_HS`.
    pub residual: f64,
}

/// Solves `min ‖Σ cᵢ Mᵢ − target‖_HS`, returning the minimum-norm `c`.
pub fn lstsq_solve(columns: &[Matrix], target: &Matrix, tol: &Tolerances) -> Result<LeastSquares> {
    lstsq_solve_many(columns, std::slice::from_ref(target), tol).map(|mut v| v.remove(0))
}

/// Like [`lstsq_solve`] for several targets sharing one spanning set.
pub fn lstsq_solve_many(
    columns: &[Matrix],
    targets: &[Matrix],
    tol: &Tolerances,
) -> Result<Vec<LeastSquares>> {
    let first = columns
        .first()
        .ok_or_else(|| Error::Argument("least squares needs at least one column".into()))?;
    let shape = first.shape();
    if columns.iter().chain(targets).any(|m| m.shape() != shape) {
        return Err(Error::Dimension(
            "least-squares columns and targets must share dimensions".into(),
        ));
    }
    let k = columns.len();
    let mut gram = Matrix::zeros(k, k);
    for i in 0..k {
        for j in i..k {
            let g = hs_inner(&columns[i], &columns[j]);
            gram[(i, j)] = g;
            gram[(j, i)] = g.conj();
        }
    }
    let pinv = psd_pinv_relative(&gram, tol.rank_tol);
    Ok(targets
        .iter()
        .map(|t| {
            let rhs = Vector::from_iterator(k, columns.iter().map(|c| hs_inner(c, t)));
            let coefficients = &pinv * rhs;
            let mut fit = Matrix::zeros(shape.0, shape.1);
            for (c, m) in coefficients.iter().zip(columns) {
                fit += m * *c;
            }
            let residual = hs_norm(&(fit - t));
            LeastSquares {
                coefficients,
                residual,
            }
        })
        .collect())
}

/// Orthonormal columns spanning the kernel of a Gram matrix `C* C`,
/// eigenvalues at or below `rel_cut * max(1, λ_max)` counted as zero.
pub(crate) fn null_space(gram: &Matrix, rel_cut: f64) -> Matrix {
    let (values, vectors) = hermitian_eigen(gram);
    let top = values.iter().cloned().fold(0.0, f64::max).max(1.0);
    let cols: Vec<_> = values
        .iter()
        .enumerate()
        .filter(|(_, &l)| l <= rel_cut * top)
        .map(|(i, _)| vectors.column(i).into_owned())
        .collect();
    if cols.is_empty() {
        Matrix::zeros(gram.nrows(), 0)
    } else {
        Matrix::from_columns(&cols)
    }
}

pub fn random_complex_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| {
        Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    })
}

pub fn random_unitary<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Matrix {
    let z = random_complex_matrix(rng, n, n);
    let qr = z.qr();
    let (q, r) = qr.unpack();
    let phases = Matrix::from_diagonal(&Vector::from_iterator(
        n,
        (0..n).map(|i| {
            let d = r[(i, i)];
            if d.norm() == 0.0 {
                ONE
            } else {
                d / d.norm()
            }
        }),
    ));
    q * phases
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    fn diag(values: &[f64]) -> Matrix {
        Matrix::from_diagonal(&Vector::from_iterator(
            values.len(),
            values.iter().map(|&v| real(v)),
        ))
    }

    /// Power iteration on M*M, used as an independent route to σ_max.
    fn power_iteration_norm(m: &Matrix) -> f64 {
        let mtm = m.adjoint() * m;
        let mut v = Vector::from_element(m.ncols(), ONE);
        let mut lam = 0.0;
        for _ in 0..5000 {
            let w = &mtm * &v;
            let nw = w.norm();
            v = w / real(nw);
            lam = nw;
        }
        lam.sqrt()
    }

    #[test]
    fn op_norm_identity_and_diagonal() {
        assert!((op_norm(&identity(3)).unwrap() - 1.0).abs() < 1e-14);
        assert!((op_norm(&diag(&[3.0, -4.0])).unwrap() - 4.0).abs() < 1e-14);
    }

    #[test]
    fn packed_products_match_generic_products() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for (m, k, n) in [(1, 1, 1), (3, 5, 2), (7, 4, 9), (16, 16, 16)] {
            let a = random_complex_matrix(&mut rng, m, k);
            let b = random_complex_matrix(&mut rng, k, n);
            assert!(hs_norm(&(matmul(&a, &b) - &a * &b)) < 1e-12);
            let c = random_complex_matrix(&mut rng, m, n);
            assert!(hs_norm(&(ad_matmul(&a, &c) - a.adjoint() * &c)) < 1e-12);
        }
        assert_eq!(matmul(&Matrix::zeros(2, 0), &Matrix::zeros(0, 3)), Matrix::zeros(2, 3));
    }

    #[test]
    fn lazy_max_norm_matches_exhaustive_max() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let items: Vec<(Matrix, f64)> = (0..12)
            .map(|k| (random_complex_matrix(&mut rng, 4, 4), 1.0 + k as f64 / 3.0))
            .collect();
        let exhaustive = items
            .iter()
            .map(|(m, s)| norm(m) / s)
            .fold(0.0, f64::max);
        assert_eq!(max_scaled_norm(items), exhaustive);
        assert_eq!(max_scaled_norm(Vec::new()), 0.0);
    }

    #[test]
    fn op_norm_empty_is_dimension_error() {
        let empty = Matrix::zeros(0, 0);
        assert!(matches!(op_norm(&empty), Err(Error::Dimension(_))));
    }

    #[test]
    fn op_norm_matches_power_iteration() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let m = random_complex_matrix(&mut rng, 5, 5);
            let a = op_norm(&m).unwrap();
            let b = power_iteration_norm(&m);
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn op_norm_unitarily_invariant_and_submultiplicative() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let m = random_complex_matrix(&mut rng, 4, 4);
            let k = random_complex_matrix(&mut rng, 4, 4);
            let u = random_unitary(&mut rng, 4);
            let v = random_unitary(&mut rng, 4);
            let n = op_norm(&m).unwrap();
            assert!((op_norm(&(&u * &m * &v)).unwrap() - n).abs() < 1e-9);
            assert!(op_norm(&(&m * &k)).unwrap() <= n * op_norm(&k).unwrap() + 1e-9);
        }
    }

    #[test]
    fn psd_sqrt_and_pinv_sqrt_examples() {
        let s = psd_calculus(&diag(&[4.0, 0.0]), PsdFunction::Sqrt, &tol()).unwrap();
        assert!(norm(&(s - diag(&[2.0, 0.0]))) < 1e-12);
        let p = psd_calculus(&identity(3), PsdFunction::PinvSqrt, &tol()).unwrap();
        assert!(norm(&(p - identity(3))) < 1e-12);
        let q = psd_calculus(&diag(&[4.0, 0.0]), PsdFunction::PinvSqrt, &tol()).unwrap();
        assert!(norm(&(q - diag(&[0.5, 0.0]))) < 1e-12);
    }

    #[test]
    fn psd_sqrt_squares_back() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..5 {
            let a = random_complex_matrix(&mut rng, 4, 4);
            let h = a.adjoint() * &a;
            let s = psd_calculus(&h, PsdFunction::Sqrt, &tol()).unwrap();
            assert!(norm(&(&s * &s - &h)) < 1e-9 * norm(&h).max(1.0));
        }
    }

    #[test]
    fn psd_errors() {
        let nonherm = Matrix::from_row_slice(2, 2, &[ONE, ONE, ZERO, ONE]);
        assert!(matches!(
            psd_calculus(&nonherm, PsdFunction::Sqrt, &tol()),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            psd_calculus(&diag(&[1.0, 0.0]), PsdFunction::Inv, &tol()),
            Err(Error::Singular(_))
        ));
        let inv = psd_calculus(&diag(&[2.0, 4.0]), PsdFunction::Inv, &tol()).unwrap();
        assert!(norm(&(inv - diag(&[0.5, 0.25]))) < 1e-14);
    }

    #[test]
    fn lstsq_exact_independent_columns() {
        let cols = vec![diag(&[1.0, 0.0]), diag(&[0.0, 1.0])];
        let target = diag(&[2.0, -3.0]);
        let sol = lstsq_solve(&cols, &target, &tol()).unwrap();
        assert!(sol.residual < 1e-12);
        assert!((sol.coefficients[0] - real(2.0)).norm() < 1e-12);
        assert!((sol.coefficients[1] - real(-3.0)).norm() < 1e-12);
    }

    #[test]
    fn lstsq_redundant_gives_minimum_norm() {
        // Columns e11, e11, e22; min-norm split of 2·e11 is (1, 1).
        let cols = vec![diag(&[1.0, 0.0]), diag(&[1.0, 0.0]), diag(&[0.0, 1.0])];
        let target = diag(&[2.0, 5.0]);
        let sol = lstsq_solve(&cols, &target, &tol()).unwrap();
        assert!(sol.residual < 1e-12);
        // Pseudo-inverse oracle: A = [[1,1,0],[0,0,1]], A⁺ b = (1, 1, 5).
        let expect = [1.0, 1.0, 5.0];
        for (c, e) in sol.coefficients.iter().zip(expect) {
            assert!((c - real(e)).norm() < 1e-10);
        }
    }

    #[test]
    fn lstsq_orthogonal_target() {
        let cols = vec![diag(&[1.0, 0.0])];
        let target = diag(&[0.0, 3.0]);
        let sol = lstsq_solve(&cols, &target, &tol()).unwrap();
        assert!(sol.coefficients[0].norm() < 1e-14);
        assert!((sol.residual - 3.0).abs() < 1e-12);
        assert!(matches!(
            lstsq_solve(&[], &target, &tol()),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn lstsq_never_worse_than_candidate() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let cols: Vec<Matrix> = (0..3).map(|_| random_complex_matrix(&mut rng, 3, 3)).collect();
        let target = random_complex_matrix(&mut rng, 3, 3);
        let sol = lstsq_solve(&cols, &target, &tol()).unwrap();
        for _ in 0..20 {
            let cand = random_complex_matrix(&mut rng, 3, 1);
            let mut fit = Matrix::zeros(3, 3);
            for (c, m) in cand.iter().zip(&cols) {
                fit += m * *c;
            }
            assert!(sol.residual <= hs_norm(&(fit - &target)) + 1e-12);
        }
    }

    #[test]
    fn kron_identities() {
        assert!(norm(&(kron(&identity(2), &identity(3)) - identity(6))) < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_complex_matrix(&mut rng, 2, 2);
        let b = random_complex_matrix(&mut rng, 2, 2);
        let c = random_complex_matrix(&mut rng, 2, 2);
        let d = random_complex_matrix(&mut rng, 2, 2);
        assert!(norm(&(kron(&a, &b).adjoint() - kron(&a.adjoint(), &b.adjoint()))) < 1e-14);
        let lhs = kron(&a, &b) * kron(&c, &d);
        let rhs = kron(&(&a * &c), &(&b * &d));
        assert!(norm(&(lhs - rhs)) < 1e-12);
    }

    #[test]
    fn tolerance_validation() {
        assert!(tol().validate().is_ok());
        let bad = Tolerances {
            rank_tol: 1e-6,
            ..tol()
        };
        assert!(bad.validate().is_err());
        let neg = Tolerances {
            angle_tol: -1.0,
            ..tol()
        };
        assert!(neg.validate().is_err());
    }
}
