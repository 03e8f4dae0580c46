//! The reduced basic construction realized on `A` itself.
//!
//! `A` is turned into a `d`-dimensional Hilbert space (`d = dim A`) with the
//! inner product `⟨x, y⟩ = τ(E(x* y))`, `τ` the normalized ambient trace.
//! Left multiplication `λ(a)` and the Jones projection `e` (the matrix of
//! `E`) are then `d × d` matrices, module adjoints become matrix adjoints,
//! and `M₁` is the algebra generated by `λ(A)` and `e`.

use std::sync::Arc;

use crate::algebra::{columns_of, commutant_kernel, nhs_norm, Inclusion, StarAlgebra};
use crate::error::{Error, Result};
use crate::expectation::{CompatibleIntermediate, CondExpectation, ExpectationKind};
use crate::linalg::{
    ad_matmul, identity, lstsq_solve_many, matmul, max_scaled_norm, norm, psd_calculus, real, Matrix, PsdFunction,
    Tolerances, Vector,
};
use crate::pimsner::{self, ModuleBasis, WatataniIndex};

/// Largest residuals of the identities checked when a construction is built.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasicDiagnostics {
    /// `max(‖e² − e‖, ‖e* − e‖)`.
    pub projection: f64,
    /// `max_a ‖e λ(a) e − λ(E(a)) e‖`.
    pub jones_relation: f64,
    /// Linear dimension of `{e}' ∩ λ(A)`.
    pub commutant_dim: usize,
    /// `max_b ‖[e, λ(b)]‖` over the basis of `B`.
    pub commutant_residual: f64,
    /// `‖Σ_j λ(m_j) e λ(m_j)* − 1‖`.
    pub completeness: f64,
}

/// `E₁: M₁ → λ(A)` obtained by least squares from its prescribed values
/// `E₁(λ(x) e λ(y)) = λ(Ind⁻¹ x y)` on the spanning set.
#[derive(Debug, Clone)]
pub struct DualExpectation {
    pub m1: Arc<StarAlgebra>,
    pub lambda_a: Arc<StarAlgebra>,
    images: Vec<Matrix>,
    /// Largest `‖E₁(s) − v‖` over the spanning pairs `(s, v)`.
    pub consistency_residual: f64,
}

impl DualExpectation {
    pub fn apply(&self, z: &Matrix) -> Matrix {
        let c = self.m1.coefficients(z);
        let d = self.m1.ambient_dim();
        let mut out = Matrix::zeros(d, d);
        for (img, ci) in self.images.iter().zip(c) {
            out += img * ci;
        }
        out
    }

    pub fn images(&self) -> &[Matrix] {
        &self.images
    }

    /// `E₁` as a verified conditional expectation for `λ(A) ⊂ M₁`.
    pub fn as_cond_expectation(&self, tol: &Tolerances) -> Result<CondExpectation> {
        let inclusion = Inclusion::new(self.m1.clone(), self.lambda_a.clone(), tol)?;
        CondExpectation::custom(inclusion, self.images.clone(), tol)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BuildOptions {
    /// Generate `M₁` as an algebra and fit the least-squares dual expectation.
    pub materialize_m1: bool,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions {
            materialize_m1: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BasicConstruction {
    source: CondExpectation,
    tol: Tolerances,
    d: usize,
    /// Columns are the flattened orthonormal basis of `A` (`n² × d`).
    flat: Matrix,
    /// `G^{1/2}` and `G^{-1/2}` for the Gram matrix `G_ij = τ(E(a_i* a_j))`;
    /// `None` when `G = 1` (trace-preserving `E`).
    gram_sqrt: Option<(Matrix, Matrix)>,
    lambda_basis: Vec<Matrix>,
    e_proj: Matrix,
    module_basis: ModuleBasis,
    index: WatataniIndex,
    index_inv: Matrix,
    diagnostics: BasicDiagnostics,
    m1: Option<Arc<StarAlgebra>>,
    dual: Option<DualExpectation>,
}

fn flatten(m: &Matrix) -> Vector {
    Vector::from_column_slice(m.as_slice())
}

impl BasicConstruction {
    pub fn build(e: &CondExpectation, tol: &Tolerances) -> Result<Self> {
        BasicConstruction::build_with(e, BuildOptions::default(), tol)
    }

    /// Skips `M₁` and the least-squares `E₁`; `E₁` is then evaluated with
    /// [`BasicConstruction::dual_apply`].
    pub fn build_light(e: &CondExpectation, tol: &Tolerances) -> Result<Self> {
        BasicConstruction::build_with(
            e,
            BuildOptions {
                materialize_m1: false,
            },
            tol,
        )
    }

    pub fn build_with(e: &CondExpectation, options: BuildOptions, tol: &Tolerances) -> Result<Self> {
        let a = e.big();
        let d = a.dim();
        let cols: Vec<Vector> = a.basis().iter().map(flatten).collect();
        let flat = Matrix::from_columns(&cols);
        let gram_sqrt = match e.kind() {
            ExpectationKind::TracePreserving => None,
            ExpectationKind::Custom => {
                // G_ij = τ(E(a_i* a_j)) = Tr(a_i* a_j D).
                let density = e.state_density();
                let n = a.ambient_dim();
                let mut shifted = Matrix::zeros(n * n, d);
                for (j, aj) in a.basis().iter().enumerate() {
                    shifted.column_mut(j).copy_from_slice(matmul(aj, &density).as_slice());
                }
                let g = ad_matmul(&flat, &shifted);
                let g = (&g + g.adjoint()) * real(0.5);
                let s = psd_calculus(&g, PsdFunction::Sqrt, tol)?;
                let si = psd_calculus(&g, PsdFunction::PinvSqrt, tol)?;
                if norm(&(&s * &si - identity(d))) > tol.eq_tol.sqrt() {
                    return Err(Error::Internal(
                        "state τ∘E is not faithful on A".into(),
                    ));
                }
                Some((s, si))
            }
        };
        let (module_basis, index) = pimsner::index_of(e, tol)?;
        let index_inv = index.inverse(tol)?;
        let mut bc = BasicConstruction {
            source: e.clone(),
            tol: *tol,
            d,
            flat,
            gram_sqrt,
            lambda_basis: Vec::new(),
            e_proj: Matrix::zeros(d, d),
            module_basis,
            index,
            index_inv,
            diagnostics: BasicDiagnostics {
                projection: 0.0,
                jones_relation: 0.0,
                commutant_dim: 0,
                commutant_residual: 0.0,
                completeness: 0.0,
            },
            m1: None,
            dual: None,
        };
        bc.lambda_basis = a.basis().iter().map(|x| bc.lambda(x)).collect();
        bc.e_proj = bc.operator_matrix(|x| e.apply(x));
        bc.diagnostics = bc.check_identities()?;
        if options.materialize_m1 {
            let m1 = Arc::new(bc.generate_m1()?);
            bc.m1 = Some(m1.clone());
            bc.dual = Some(bc.fit_dual(m1)?);
        }
        Ok(bc)
    }

    fn hs_coords(&self, x: &Matrix) -> Vector {
        let n = self.source.ambient_dim() as f64;
        self.flat.ad_mul(&flatten(x)) / real(n)
    }

    /// Conjugates an operator written in HS coordinates into the
    /// `τ∘E`-orthonormal frame.
    fn to_frame(&self, hs: &Matrix) -> Matrix {
        match &self.gram_sqrt {
            None => hs.clone(),
            Some((s, si)) => matmul(&matmul(s, hs), si),
        }
    }

    /// Coordinates `η(x)` of `x ∈ A` in the `τ∘E`-orthonormal frame.
    pub fn eta(&self, x: &Matrix) -> Vector {
        let c = self.hs_coords(x);
        match &self.gram_sqrt {
            None => c,
            Some((s, _)) => s * c,
        }
    }

    /// Inverse of [`BasicConstruction::eta`].
    pub fn eta_inv(&self, v: &Vector) -> Matrix {
        let alpha = match &self.gram_sqrt {
            None => v.clone(),
            Some((_, si)) => si * v,
        };
        let n = self.source.ambient_dim();
        let flat = &self.flat * alpha;
        Matrix::from_column_slice(n, n, flat.as_slice())
    }

    /// Matrix of left multiplication by `a` on `A`.
    pub fn lambda(&self, a: &Matrix) -> Matrix {
        let basis = self.source.big().basis();
        let n = self.source.ambient_dim();
        let mut products = Matrix::zeros(n * n, basis.len());
        for (j, b) in basis.iter().enumerate() {
            products.column_mut(j).copy_from_slice(matmul(a, b).as_slice());
        }
        let hs = ad_matmul(&self.flat, &products) / real(n as f64);
        self.to_frame(&hs)
    }

    fn check_identities(&self) -> Result<BasicDiagnostics> {
        let tol = &self.tol;
        let e = &self.e_proj;
        let d = self.d;
        let projection = norm(&(matmul(e, e) - e)).max(norm(&(e.adjoint() - e)));
        if projection >= tol.eq_tol {
            return Err(Error::construction("e² = e = e*", projection));
        }
        // λ is linear, so every λ(E(x)) is one combination of the λ basis.
        let a = self.source.big();
        let lambda_flat = columns_of(&self.lambda_basis, d);
        let mut e_coeffs = Matrix::zeros(d, d);
        for (i, x) in a.basis().iter().enumerate() {
            let c = a.coefficients(&self.source.apply(x));
            e_coeffs.column_mut(i).copy_from_slice(&c);
        }
        let lambda_e = matmul(&lambda_flat, &e_coeffs);
        let jones_relation = max_scaled_norm(a.basis().iter().zip(&self.lambda_basis).enumerate().map(
            |(i, (x, lx))| {
                let lhs = matmul(&matmul(e, lx), e);
                let lex = Matrix::from_column_slice(d, d, lambda_e.column(i).as_slice());
                (lhs - matmul(&lex, e), norm(x).max(1.0))
            },
        ));
        if jones_relation >= tol.eq_tol {
            return Err(Error::construction("e λ(a) e = λ(E(a)) e", jones_relation));
        }
        let kernel = commutant_kernel(&self.lambda_basis, std::slice::from_ref(e), tol);
        let commutant_dim = kernel.ncols();
        let commutant_residual = self
            .source
            .small()
            .basis()
            .iter()
            .map(|b| {
                let lb = self.lambda(b);
                norm(&(matmul(e, &lb) - matmul(&lb, e))) / norm(b).max(1.0)
            })
            .fold(0.0, f64::max);
        if commutant_dim != self.source.small().dim() || commutant_residual >= tol.eq_tol {
            return Err(Error::construction(
                format!(
                    "{{e}}' ∩ λ(A) = λ(B) (dimension {commutant_dim} vs {})",
                    self.source.small().dim()
                ),
                commutant_residual,
            ));
        }
        let mut sum = Matrix::zeros(d, d);
        for m in &self.module_basis.elements {
            let lm = self.lambda(m);
            sum += matmul(&matmul(&lm, e), &lm.adjoint());
        }
        let completeness = norm(&(sum - identity(d)));
        if completeness >= tol.eq_tol {
            return Err(Error::construction("Σ λ(m_j) e λ(m_j)* = 1", completeness));
        }
        Ok(BasicDiagnostics {
            projection,
            jones_relation,
            commutant_dim,
            commutant_residual,
            completeness,
        })
    }

    fn lambda_generators(&self) -> Vec<Matrix> {
        let a = self.source.big();
        if a.generators().is_empty() {
            self.lambda_basis.clone()
        } else {
            a.generators().iter().map(|g| self.lambda(g)).collect()
        }
    }

    fn generate_m1(&self) -> Result<StarAlgebra> {
        let mut gens = self.lambda_generators();
        gens.push(self.e_proj.clone());
        StarAlgebra::from_generators(self.d, &gens, &self.tol)
    }

    /// `λ(A)` as a subalgebra of `M_d`.
    pub fn lambda_algebra(&self) -> Result<StarAlgebra> {
        StarAlgebra::from_spanning(self.d, &self.lambda_basis, &self.lambda_generators(), &self.tol)
    }

    fn fit_dual(&self, m1: Arc<StarAlgebra>) -> Result<DualExpectation> {
        let tol = &self.tol;
        let basis = self.source.big().basis();
        let mut spanning = Vec::with_capacity(self.d * self.d);
        let mut values = Vec::with_capacity(self.d * self.d);
        for (x, lx) in basis.iter().zip(&self.lambda_basis) {
            let lxe = lx * &self.e_proj;
            for (y, ly) in basis.iter().zip(&self.lambda_basis) {
                spanning.push(&lxe * ly);
                values.push(self.lambda(&(&self.index_inv * x * y)));
            }
        }
        let fits = lstsq_solve_many(&spanning, m1.basis(), tol)?;
        let images: Vec<Matrix> = fits
            .iter()
            .map(|fit| {
                let mut out = Matrix::zeros(self.d, self.d);
                for (c, v) in fit.coefficients.iter().zip(&values) {
                    out += v * *c;
                }
                out
            })
            .collect();
        let lambda_a = Arc::new(self.lambda_algebra()?);
        let mut dual = DualExpectation {
            m1,
            lambda_a,
            images,
            consistency_residual: 0.0,
        };
        dual.consistency_residual = spanning
            .iter()
            .zip(&values)
            .map(|(s, v)| norm(&(dual.apply(s) - v)))
            .fold(0.0, f64::max);
        if dual.consistency_residual >= tol.eq_tol {
            return Err(Error::construction(
                "E₁(λ(x) e λ(y)) = λ(Ind⁻¹ x y) consistency",
                dual.consistency_residual,
            ));
        }
        Ok(dual)
    }

    pub fn source(&self) -> &CondExpectation {
        &self.source
    }

    pub fn tolerances(&self) -> &Tolerances {
        &self.tol
    }

    pub fn rep_dim(&self) -> usize {
        self.d
    }

    pub fn e_proj(&self) -> &Matrix {
        &self.e_proj
    }

    pub fn index(&self) -> &WatataniIndex {
        &self.index
    }

    pub fn index_inverse(&self) -> &Matrix {
        &self.index_inv
    }

    pub fn module_basis(&self) -> &ModuleBasis {
        &self.module_basis
    }

    pub fn diagnostics(&self) -> &BasicDiagnostics {
        &self.diagnostics
    }

    pub fn lambda_basis(&self) -> &[Matrix] {
        &self.lambda_basis
    }

    pub fn m1(&self) -> Option<&Arc<StarAlgebra>> {
        self.m1.as_ref()
    }

    pub fn dual_expectation(&self) -> Option<&DualExpectation> {
        self.dual.as_ref()
    }

    fn require_in_a(&self, x: &Matrix, what: &str) -> Result<()> {
        let a = self.source.big();
        if x.nrows() != a.ambient_dim() || x.ncols() != a.ambient_dim() {
            return Err(Error::Argument(format!("{what} has the wrong shape")));
        }
        let r = a.residual(x);
        if r >= self.tol.eq_tol * nhs_norm(x).max(1.0) {
            return Err(Error::Argument(format!(
                "{what} is not an element of A (residual {r:.3e})"
            )));
        }
        Ok(())
    }

    /// Rank-one module operator `θ_{x,y}: z ↦ x E(y* z)`, i.e. `λ(x) e λ(y*)`.
    pub fn theta(&self, x: &Matrix, y: &Matrix) -> Result<Matrix> {
        self.require_in_a(x, "x")?;
        self.require_in_a(y, "y")?;
        Ok(self.lambda(x) * &self.e_proj * self.lambda(&y.adjoint()))
    }

    /// `E₁(z)` as an element `a ∈ A` with `E₁(z) = λ(a)`, through the
    /// pull-down identity: for `z ∈ M₁`, `z λ(m_j) e = λ(a_j) e` with
    /// `η(a_j) = z η(m_j)`, so `z = Σ_j λ(a_j) e λ(m_j)*` and
    /// `E₁(z) = λ(Ind⁻¹ Σ_j a_j m_j*)`.
    pub fn dual_pull_down(&self, z: &Matrix) -> Matrix {
        let n = self.source.ambient_dim();
        let mut acc = Matrix::zeros(n, n);
        for m in &self.module_basis.elements {
            let a_j = self.eta_inv(&(z * self.eta(m)));
            acc += a_j * m.adjoint();
        }
        &self.index_inv * acc
    }

    /// `E₁(z)` as an element of `A`: least-squares map when `M₁` is
    /// materialized, pull-down otherwise.
    pub fn dual_apply(&self, z: &Matrix) -> Matrix {
        match &self.dual {
            Some(dual) => {
                let lam = dual.apply(z);
                // λ(a) η(1) = η(a)
                self.eta_inv(&(lam * self.eta(&identity(self.source.ambient_dim()))))
            }
            None => self.dual_pull_down(z),
        }
    }

    /// Matrix of a linear map `A → A` in the `τ∘E`-orthonormal frame.
    pub fn operator_matrix(&self, f: impl Fn(&Matrix) -> Matrix) -> Matrix {
        let cols: Vec<Vector> = self
            .source
            .big()
            .basis()
            .iter()
            .map(|x| self.hs_coords(&f(x)))
            .collect();
        self.to_frame(&Matrix::from_columns(&cols))
    }

    /// `E₁` as a verified conditional expectation `M₁ → λ(A)`. Uses the
    /// least-squares map when `M₁` is materialized, otherwise generates `M₁`
    /// and evaluates `E₁` by pull-down.
    pub fn dual_cond_expectation(&self) -> Result<CondExpectation> {
        if let Some(dual) = &self.dual {
            return dual.as_cond_expectation(&self.tol);
        }
        let m1 = Arc::new(self.generate_m1()?);
        let lambda_a = Arc::new(self.lambda_algebra()?);
        let images = m1
            .basis()
            .iter()
            .map(|z| self.lambda(&self.dual_pull_down(z)))
            .collect();
        let inclusion = Inclusion::new(m1, lambda_a, &self.tol)?;
        CondExpectation::custom(inclusion, images, &self.tol)
    }

    /// `e_P = Σ_j λ(μ_j) e λ(μ_j)*` for a given quasi-basis `{μ_j}` of `E|_P`.
    pub fn jones_projection_from(&self, quasi_basis: &[Matrix]) -> Matrix {
        let mut out = Matrix::zeros(self.d, self.d);
        for mu in quasi_basis {
            let l = self.lambda(mu);
            out += matmul(&matmul(&l, &self.e_proj), &l.adjoint());
        }
        out
    }

    /// Jones projection of a compatible intermediate, built from a quasi-basis
    /// of `E|_P` and checked to be a projection with `e_P e = e = e e_P`
    /// that acts on `A` as `F`.
    pub fn intermediate_jones_projection(&self, ci: &CompatibleIntermediate) -> Result<Matrix> {
        let tol = &self.tol;
        let mu = pimsner::orthonormal_basis(&ci.e_restricted, tol)?;
        let ep = self.jones_projection_from(&mu.elements);
        let proj = norm(&(&ep * &ep - &ep)).max(norm(&(ep.adjoint() - &ep)));
        if proj >= tol.eq_tol {
            return Err(Error::invariant("e_P is a projection", proj));
        }
        let e = &self.e_proj;
        let dom = norm(&(&ep * e - e)).max(norm(&(e * &ep - e)));
        if dom >= tol.eq_tol {
            return Err(Error::invariant("e_P e = e = e e_P", dom));
        }
        let action = norm(&(&ep - self.operator_matrix(|x| ci.f.apply(x))));
        if action >= tol.eq_tol {
            return Err(Error::invariant("e_P implements F", action));
        }
        Ok(ep)
    }
}
