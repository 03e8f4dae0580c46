//! Concrete finite-dimensional *-algebras: unital *-closed subspaces of
//! `n × n` complex matrices, stored with a basis orthonormal for the
//! normalized Hilbert–Schmidt inner product `⟨x, y⟩ = Tr(x* y) / n`.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::expectation::CondExpectation;
use crate::groups::{Perm, PermGroup};
use crate::linalg::{self, hs_inner, identity, kron, null_space, real, Matrix, Tolerances, ONE, ZERO};

/// Normalized Hilbert–Schmidt inner product on `n × n` matrices.
pub fn nhs_inner(a: &Matrix, b: &Matrix) -> linalg::Scalar {
    hs_inner(a, b) / real(a.nrows() as f64)
}

pub fn nhs_norm(a: &Matrix) -> f64 {
    (linalg::hs_norm(a).powi(2) / a.nrows() as f64).sqrt()
}

/// Removes the span of `basis` from `x` (two Gram–Schmidt passes).
fn residual_against(basis: &[Matrix], x: &Matrix) -> Matrix {
    let mut r = x.clone();
    for _ in 0..2 {
        for b in basis {
            let c = nhs_inner(b, &r);
            if c != ZERO {
                r -= b * c;
            }
        }
    }
    r
}

/// Appends the normalized residual of `x` to `basis` when it is not already
/// in the span. Returns whether the span grew.
fn extend_orthonormal(basis: &mut Vec<Matrix>, x: &Matrix, tol: &Tolerances) -> bool {
    let scale = nhs_norm(x);
    if scale <= tol.rank_tol {
        return false;
    }
    let r = residual_against(basis, x);
    let rn = nhs_norm(&r);
    if rn <= tol.eq_tol * scale.max(1.0) {
        return false;
    }
    basis.push(r / real(rn));
    true
}

/// Self-adjoint completion of a generator list, without repeats.
fn with_adjoints(gens: &[Matrix], tol: &Tolerances) -> Vec<Matrix> {
    let mut out: Vec<Matrix> = Vec::with_capacity(2 * gens.len());
    let mut push = |m: Matrix| {
        if !out.iter().any(|o| linalg::norm(&(o - &m)) <= tol.eq_tol) {
            out.push(m);
        }
    };
    for g in gens {
        push(g.clone());
        push(g.adjoint());
    }
    out
}

/// A unital *-subalgebra of `M_n(ℂ)` whose unit is the ambient identity.
#[derive(Debug, Clone)]
pub struct StarAlgebra {
    ambient_dim: usize,
    basis: Vec<Matrix>,
    generators: Vec<Matrix>,
    /// Basis elements as the columns of an `n² × dim` matrix.
    flat: Matrix,
}

pub(crate) fn flatten(m: &Matrix) -> linalg::Vector {
    linalg::Vector::from_column_slice(m.as_slice())
}

pub(crate) fn columns_of(ms: &[Matrix], n: usize) -> Matrix {
    let mut out = Matrix::zeros(n * n, ms.len());
    for (j, m) in ms.iter().enumerate() {
        out.column_mut(j).copy_from_slice(m.as_slice());
    }
    out
}

pub(crate) fn unflatten(cols: &Matrix, n: usize) -> Vec<Matrix> {
    cols.column_iter()
        .map(|c| Matrix::from_column_slice(n, n, c.as_slice()))
        .collect()
}

impl StarAlgebra {
    fn assemble(ambient_dim: usize, basis: Vec<Matrix>, generators: Vec<Matrix>) -> Self {
        let flat = columns_of(&basis, ambient_dim);
        StarAlgebra {
            ambient_dim,
            basis,
            generators,
            flat,
        }
    }

    /// `ℂ·1` inside `M_n`.
    pub fn scalars(n: usize) -> Self {
        StarAlgebra::assemble(n, vec![identity(n)], Vec::new())
    }

    /// All of `M_n`, with the scaled matrix units `√n e_ij` as basis.
    pub fn full(n: usize) -> Self {
        let mut basis = Vec::with_capacity(n * n);
        let s = (n as f64).sqrt();
        for i in 0..n {
            for j in 0..n {
                let mut e = Matrix::zeros(n, n);
                e[(i, j)] = real(s);
                basis.push(e);
            }
        }
        let mut generators = Vec::new();
        for i in 0..n.saturating_sub(1) {
            let mut e = Matrix::zeros(n, n);
            e[(i, i + 1)] = ONE;
            generators.push(e.adjoint());
            generators.push(e);
        }
        for i in 0..n {
            let mut e = Matrix::zeros(n, n);
            e[(i, i)] = ONE;
            generators.push(e);
        }
        StarAlgebra::assemble(n, basis, generators)
    }

    /// Diagonal matrices in `M_n`.
    pub fn diagonal(n: usize) -> Self {
        let s = (n as f64).sqrt();
        let basis: Vec<Matrix> = (0..n)
            .map(|i| {
                let mut e = Matrix::zeros(n, n);
                e[(i, i)] = real(s);
                e
            })
            .collect();
        let generators = basis.clone();
        StarAlgebra::assemble(n, basis, generators)
    }

    /// Smallest unital *-subalgebra of `M_n` containing `gens`.
    ///
    /// Closes `span{1}` under left multiplication by the self-adjoint
    /// completion of `gens`; the span of all words is the generated algebra.
    pub fn from_generators(n: usize, gens: &[Matrix], tol: &Tolerances) -> Result<Self> {
        for g in gens {
            if g.nrows() != n || g.ncols() != n {
                return Err(Error::Argument(format!(
                    "generator of shape {}x{} in ambient dimension {n}",
                    g.nrows(),
                    g.ncols()
                )));
            }
        }
        let generators = with_adjoints(gens, tol);
        let mut basis = vec![identity(n)];
        let mut next = 0;
        while next < basis.len() {
            let v = basis[next].clone();
            for g in &generators {
                extend_orthonormal(&mut basis, &(g * &v), tol);
            }
            if basis.len() > n * n {
                return Err(Error::Internal(
                    "closure did not stabilize within n² steps".into(),
                ));
            }
            next += 1;
        }
        let alg = StarAlgebra::assemble(n, basis, generators);
        alg.verify(tol)?;
        Ok(alg)
    }

    /// Orthonormalizes `spanning` (in order) and checks that the result is
    /// the unital *-algebra generated by `generators`.
    pub fn from_spanning(
        n: usize,
        spanning: &[Matrix],
        generators: &[Matrix],
        tol: &Tolerances,
    ) -> Result<Self> {
        if spanning
            .iter()
            .chain(generators)
            .any(|m| m.nrows() != n || m.ncols() != n)
        {
            return Err(Error::Argument(format!(
                "spanning element does not live in M_{n}"
            )));
        }
        let mut basis = Vec::new();
        for x in spanning {
            extend_orthonormal(&mut basis, x, tol);
        }
        let alg = StarAlgebra::assemble(n, basis, with_adjoints(generators, tol));
        alg.verify(tol)?;
        Ok(alg)
    }

    /// Checks the structural invariants: orthonormal basis, identity in the
    /// span, span closed under adjoints and under left multiplication by the
    /// generating set.
    pub fn verify(&self, tol: &Tolerances) -> Result<()> {
        let n = self.ambient_dim;
        let d = self.basis.len();
        if d == 0 {
            return Err(Error::invariant("non-empty basis", 1.0));
        }
        let mut gram_dev: f64 = 0.0;
        for i in 0..d {
            for j in i..d {
                let g = nhs_inner(&self.basis[i], &self.basis[j]);
                let target = if i == j { ONE } else { ZERO };
                gram_dev = gram_dev.max((g - target).norm());
            }
        }
        if gram_dev > tol.eq_tol {
            return Err(Error::invariant("orthonormal basis", gram_dev));
        }
        let unit_res = self.residual(&identity(n));
        if unit_res > tol.eq_tol {
            return Err(Error::invariant("unit in span", unit_res));
        }
        for b in &self.basis {
            let r = self.residual(&b.adjoint());
            if r > tol.eq_tol {
                return Err(Error::invariant("closed under adjoint", r));
            }
        }
        for g in &self.generators {
            let r = self.residual(g);
            if r > tol.eq_tol * nhs_norm(g).max(1.0) {
                return Err(Error::invariant("generators in span", r));
            }
            for b in &self.basis {
                let p = g * b;
                let r = self.residual(&p);
                if r > tol.eq_tol * nhs_norm(&p).max(1.0) {
                    return Err(Error::invariant("closed under products", r));
                }
            }
        }
        Ok(())
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn basis(&self) -> &[Matrix] {
        &self.basis
    }

    pub fn generators(&self) -> &[Matrix] {
        &self.generators
    }

    pub fn unit(&self) -> Matrix {
        identity(self.ambient_dim)
    }

    /// Coordinates `⟨bᵢ, x⟩` of `x` against the orthonormal basis.
    pub fn coefficients(&self, x: &Matrix) -> Vec<linalg::Scalar> {
        self.coefficient_vector(x).as_slice().to_vec()
    }

    fn coefficient_vector(&self, x: &Matrix) -> linalg::Vector {
        self.flat.ad_mul(&flatten(x)) / real(self.ambient_dim as f64)
    }

    pub fn element(&self, coefficients: &[linalg::Scalar]) -> Matrix {
        let n = self.ambient_dim;
        let c = linalg::Vector::from_column_slice(coefficients);
        Matrix::from_column_slice(n, n, (&self.flat * c).as_slice())
    }

    /// Coefficients of several elements at once, one column each.
    pub(crate) fn coefficient_columns(&self, xs: &[Matrix]) -> Matrix {
        linalg::ad_matmul(&self.flat, &columns_of(xs, self.ambient_dim)) / real(self.ambient_dim as f64)
    }

    pub(crate) fn project_many(&self, xs: &[Matrix]) -> Vec<Matrix> {
        unflatten(&linalg::matmul(&self.flat, &self.coefficient_columns(xs)), self.ambient_dim)
    }

    /// Hilbert–Schmidt orthogonal projection onto the span.
    pub fn project(&self, x: &Matrix) -> Matrix {
        let n = self.ambient_dim;
        let c = self.coefficient_vector(x);
        Matrix::from_column_slice(n, n, (&self.flat * c).as_slice())
    }

    /// Normalized HS norm of `x − project(x)`.
    pub fn residual(&self, x: &Matrix) -> f64 {
        nhs_norm(&(x - self.project(x)))
    }

    /// Membership test: `(residual < eq_tol, residual)`, residual in
    /// normalized HS norm.
    pub fn contains(&self, x: &Matrix, tol: &Tolerances) -> (bool, f64) {
        if x.nrows() != self.ambient_dim || x.ncols() != self.ambient_dim {
            return (false, f64::INFINITY);
        }
        let r = self.residual(x);
        (r < tol.eq_tol, r)
    }

    /// Largest residual of `other`'s basis against this span.
    pub fn containment_residual(&self, other: &StarAlgebra) -> f64 {
        if other.ambient_dim != self.ambient_dim {
            return f64::INFINITY;
        }
        other
            .basis
            .iter()
            .map(|b| self.residual(b))
            .fold(0.0, f64::max)
    }

    pub fn contains_algebra(&self, other: &StarAlgebra, tol: &Tolerances) -> bool {
        self.containment_residual(other) < tol.eq_tol
    }

    /// `{x ∈ self : xb = bx for all b ∈ other}`.
    pub fn relative_commutant(&self, other: &StarAlgebra, tol: &Tolerances) -> Result<StarAlgebra> {
        if self.ambient_dim != other.ambient_dim {
            return Err(Error::Argument(format!(
                "ambient mismatch {} vs {}",
                self.ambient_dim, other.ambient_dim
            )));
        }
        let constraints: Vec<Matrix> = if other.generators.is_empty() {
            other.basis.clone()
        } else {
            other.generators.clone()
        };
        let kernel = commutant_kernel(&self.basis, &constraints, tol);
        let elements: Vec<Matrix> = kernel
            .column_iter()
            .map(|c| self.element(c.as_slice()))
            .collect();
        StarAlgebra::from_spanning(self.ambient_dim, &elements, &elements, tol)
    }

    pub fn center(&self, tol: &Tolerances) -> Result<StarAlgebra> {
        self.relative_commutant(self, tol)
    }

    /// `self ⊗ M_k` inside `M_{n k}`.
    pub fn tensor_by_factor(&self, k: usize, tol: &Tolerances) -> Result<StarAlgebra> {
        if k < 1 {
            return Err(Error::Argument("tensor factor must be at least 1".into()));
        }
        if k == 1 {
            return Ok(self.clone());
        }
        let units = StarAlgebra::full(k);
        let mut spanning = Vec::with_capacity(self.dim() * k * k);
        for b in &self.basis {
            for e in units.basis() {
                // √k e_ij already carries the normalization.
                spanning.push(kron(b, e));
            }
        }
        let mut gens: Vec<Matrix> = self
            .generators
            .iter()
            .map(|g| kron(g, &identity(k)))
            .collect();
        gens.extend(units.generators().iter().map(|e| kron(&identity(self.ambient_dim), e)));
        StarAlgebra::from_spanning(self.ambient_dim * k, &spanning, &gens, tol)
    }
}

/// Orthonormal coefficient vectors `c` with `[Σ cᵢ aᵢ, b] = 0` for every
/// constraint `b`.
pub(crate) fn commutant_kernel(basis: &[Matrix], constraints: &[Matrix], tol: &Tolerances) -> Matrix {
    let d = basis.len();
    let mut gram = Matrix::zeros(d, d);
    for b in constraints {
        let comms: Vec<Matrix> = basis
            .iter()
            .map(|a| linalg::matmul(a, b) - linalg::matmul(b, a))
            .collect();
        let flat = columns_of(&comms, b.nrows());
        gram += linalg::ad_matmul(&flat, &flat);
    }
    null_space(&gram, tol.rank_tol)
}

/// `B ⊂ A` with a common unit.
#[derive(Debug, Clone)]
pub struct Inclusion {
    pub big: Arc<StarAlgebra>,
    pub small: Arc<StarAlgebra>,
}

impl Inclusion {
    pub fn new(big: Arc<StarAlgebra>, small: Arc<StarAlgebra>, tol: &Tolerances) -> Result<Self> {
        if big.ambient_dim() != small.ambient_dim() {
            return Err(Error::Argument(format!(
                "ambient mismatch {} vs {}",
                big.ambient_dim(),
                small.ambient_dim()
            )));
        }
        let r = big.containment_residual(&small);
        if r >= tol.eq_tol {
            return Err(Error::Containment(format!(
                "subalgebra not contained in algebra (residual {r:.3e})"
            )));
        }
        Ok(Inclusion { big, small })
    }

    pub fn ambient_dim(&self) -> usize {
        self.big.ambient_dim()
    }
}

/// Permutation matrix with `P e_i = e_{p(i)}`.
pub fn permutation_matrix(p: &Perm) -> Matrix {
    let n = p.degree();
    let mut m = Matrix::zeros(n, n);
    for i in 0..n {
        m[(p.apply(i), i)] = ONE;
    }
    m
}

/// A unitary representation `g ↦ U_g` of a permutation group, acting on an
/// algebra by `Ad(U_g)`.
#[derive(Debug, Clone)]
pub struct GroupAction {
    group: PermGroup,
    unitaries: Vec<Matrix>,
}

impl GroupAction {
    /// Extends unitaries given on generators to the whole group along the
    /// Cayley graph, then checks the homomorphism property on all pairs.
    pub fn from_generators(group: PermGroup, gens: &[(Perm, Matrix)], tol: &Tolerances) -> Result<Self> {
        let m = gens
            .first()
            .map(|(_, u)| u.nrows())
            .ok_or_else(|| Error::Argument("action needs at least one generator".into()))?;
        let mut unitaries: Vec<Option<Matrix>> = vec![None; group.order()];
        unitaries[0] = Some(identity(m));
        let mut queue = std::collections::VecDeque::from([0usize]);
        while let Some(i) = queue.pop_front() {
            let x = group.elements()[i].clone();
            let ux = unitaries[i].clone().expect("visited");
            for (g, ug) in gens {
                let y = x.compose(g);
                let j = group.position(&y).ok_or_else(|| {
                    Error::Argument(format!("generator {g} is not in the group"))
                })?;
                if unitaries[j].is_none() {
                    unitaries[j] = Some(&ux * ug);
                    queue.push_back(j);
                }
            }
        }
        let unitaries = unitaries
            .into_iter()
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| Error::Argument("generators do not generate the group".into()))?;
        let action = GroupAction { group, unitaries };
        action.verify(tol)?;
        Ok(action)
    }

    /// Permutation action of `group` on `ℂ^degree`.
    pub fn permutation(group: PermGroup) -> Self {
        let unitaries = group.elements().iter().map(permutation_matrix).collect();
        GroupAction { group, unitaries }
    }

    /// Every element acts by the identity on `ℂ^m`.
    pub fn trivial(group: PermGroup, m: usize) -> Self {
        let unitaries = vec![identity(m); group.order()];
        GroupAction { group, unitaries }
    }

    pub fn verify(&self, tol: &Tolerances) -> Result<()> {
        let els = self.group.elements();
        let m = self.dim();
        let dev = linalg::norm(&(&self.unitaries[0] - identity(m)));
        if dev > tol.eq_tol {
            return Err(Error::invariant("U_e = 1", dev));
        }
        for u in &self.unitaries {
            let dev = linalg::norm(&(u.adjoint() * u - identity(m)));
            if dev > tol.eq_tol {
                return Err(Error::invariant("U_g unitary", dev));
            }
        }
        for (i, g) in els.iter().enumerate() {
            for (j, h) in els.iter().enumerate() {
                let k = self.group.position(&g.compose(h)).expect("closed group");
                let dev = linalg::norm(&(&self.unitaries[i] * &self.unitaries[j] - &self.unitaries[k]));
                if dev > tol.eq_tol {
                    return Err(Error::invariant("U_g U_h = U_gh", dev));
                }
            }
        }
        Ok(())
    }

    pub fn group(&self) -> &PermGroup {
        &self.group
    }

    pub fn dim(&self) -> usize {
        self.unitaries[0].nrows()
    }

    pub fn unitary(&self, index: usize) -> &Matrix {
        &self.unitaries[index]
    }

    pub fn unitaries(&self) -> &[Matrix] {
        &self.unitaries
    }

    /// `Ad(U_g)(x) = U_g x U_g*` for the group element at `index`.
    pub fn ad(&self, index: usize, x: &Matrix) -> Matrix {
        let u = &self.unitaries[index];
        u * x * u.adjoint()
    }

    /// Largest residual of `Ad(U_g)(b)` outside `alg`.
    pub fn normalization_residual(&self, alg: &StarAlgebra) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.unitaries.len() {
            for b in alg.basis() {
                worst = worst.max(alg.residual(&self.ad(i, b)));
            }
        }
        worst
    }

    fn check_normalizes(&self, alg: &StarAlgebra, tol: &Tolerances) -> Result<()> {
        if self.dim() != alg.ambient_dim() {
            return Err(Error::Argument(format!(
                "action on ℂ^{} but algebra in M_{}",
                self.dim(),
                alg.ambient_dim()
            )));
        }
        let r = self.normalization_residual(alg);
        if r >= tol.eq_tol {
            return Err(Error::Argument(format!(
                "action does not normalize the algebra (residual {r:.3e})"
            )));
        }
        Ok(())
    }
}

/// `ℂ[G]` in its left regular representation on `ℂ^{|G|}`.
#[derive(Debug, Clone)]
pub struct GroupAlgebra {
    pub group: PermGroup,
    pub algebra: Arc<StarAlgebra>,
    lambdas: Vec<Matrix>,
}

/// Matrix of left translation by the element at `index`: `λ_g e_h = e_{gh}`.
fn left_translation(group: &PermGroup, index: usize) -> Matrix {
    let n = group.order();
    let g = &group.elements()[index];
    let mut m = Matrix::zeros(n, n);
    for (j, h) in group.elements().iter().enumerate() {
        let k = group.position(&g.compose(h)).expect("closed group");
        m[(k, j)] = ONE;
    }
    m
}

pub fn group_algebra(group: &PermGroup, tol: &Tolerances) -> Result<GroupAlgebra> {
    let lambdas: Vec<Matrix> = (0..group.order()).map(|i| left_translation(group, i)).collect();
    let gens: Vec<Matrix> = group
        .generating_set()
        .iter()
        .map(|g| lambdas[group.position(g).expect("generator in group")].clone())
        .collect();
    let algebra = StarAlgebra::from_spanning(group.order(), &lambdas, &gens, tol)?;
    Ok(GroupAlgebra {
        group: group.clone(),
        algebra: Arc::new(algebra),
        lambdas,
    })
}

impl GroupAlgebra {
    pub fn lambda(&self, g: &Perm) -> Option<&Matrix> {
        self.group.position(g).map(|i| &self.lambdas[i])
    }

    pub fn lambdas(&self) -> &[Matrix] {
        &self.lambdas
    }

    /// `ℂ[H] = span{λ_h : h ∈ H}` for a subgroup `H`.
    pub fn subalgebra(&self, sub: &PermGroup, tol: &Tolerances) -> Result<Arc<StarAlgebra>> {
        if !sub.is_subgroup_of(&self.group) {
            return Err(Error::Containment("not a subgroup".into()));
        }
        let span: Vec<Matrix> = sub
            .elements()
            .iter()
            .map(|h| self.lambda(h).expect("subgroup element").clone())
            .collect();
        let gens: Vec<Matrix> = sub
            .generating_set()
            .iter()
            .map(|h| self.lambda(h).expect("subgroup element").clone())
            .collect();
        StarAlgebra::from_spanning(self.group.order(), &span, &gens, tol).map(Arc::new)
    }

    /// Coefficient `x_g` of `x = Σ x_g λ_g`.
    pub fn coefficient(&self, x: &Matrix, g: &Perm) -> Option<linalg::Scalar> {
        self.lambda(g).map(|l| nhs_inner(l, x))
    }
}

/// `M ⋊ G` in its regular covariant representation on `ℂ^m ⊗ ℂ^{|G|}`.
#[derive(Debug, Clone)]
pub struct CrossedProduct {
    pub base: Arc<StarAlgebra>,
    pub action: GroupAction,
    pub algebra: Arc<StarAlgebra>,
    units: Vec<Matrix>,
}

fn matrix_unit(n: usize, i: usize, j: usize) -> Matrix {
    let mut e = Matrix::zeros(n, n);
    e[(i, j)] = ONE;
    e
}

pub fn crossed_product(base: Arc<StarAlgebra>, action: GroupAction, tol: &Tolerances) -> Result<CrossedProduct> {
    action.check_normalizes(&base, tol)?;
    let group = action.group().clone();
    let order = group.order();
    let m = base.ambient_dim();
    let units: Vec<Matrix> = group
        .elements()
        .iter()
        .map(|h| {
            let mut u = Matrix::zeros(order, order);
            for (j, g) in group.elements().iter().enumerate() {
                let k = group.position(&h.compose(g)).expect("closed group");
                u[(k, j)] = ONE;
            }
            kron(&identity(m), &u)
        })
        .collect();
    let mut cp = CrossedProduct {
        base,
        action,
        algebra: Arc::new(StarAlgebra::scalars(m * order)),
        units,
    };
    cp.algebra = cp.subalgebra(&group, tol)?;
    Ok(cp)
}

impl CrossedProduct {
    /// `π(x) = Σ_g Ad(U_g⁻¹)(x) ⊗ e_gg`.
    pub fn pi(&self, x: &Matrix) -> Matrix {
        let group = self.action.group();
        let order = group.order();
        let m = self.base.ambient_dim();
        let mut out = Matrix::zeros(m * order, m * order);
        for (i, g) in group.elements().iter().enumerate() {
            let inv = group.position(&g.inverse()).expect("closed group");
            out += kron(&self.action.ad(inv, x), &matrix_unit(order, i, i));
        }
        out
    }

    /// `u_h = Σ_g 1 ⊗ e_{hg, g}` for the group element at `index`.
    pub fn unit(&self, index: usize) -> &Matrix {
        &self.units[index]
    }

    pub fn group(&self) -> &PermGroup {
        self.action.group()
    }

    /// `M ⋊ H = span{π(m) u_h : h ∈ H}`.
    pub fn subalgebra(&self, sub: &PermGroup, tol: &Tolerances) -> Result<Arc<StarAlgebra>> {
        let group = self.action.group();
        if !sub.is_subgroup_of(group) {
            return Err(Error::Containment("not a subgroup".into()));
        }
        let pis: Vec<Matrix> = self.base.basis().iter().map(|b| self.pi(b)).collect();
        let hs: Vec<usize> = sub
            .elements()
            .iter()
            .map(|h| group.position(h).expect("subgroup element"))
            .collect();
        let mut spanning = Vec::with_capacity(pis.len() * hs.len());
        for &h in &hs {
            for p in &pis {
                spanning.push(p * &self.units[h]);
            }
        }
        let mut gens: Vec<Matrix> = self.base.generators().iter().map(|g| self.pi(g)).collect();
        if self.base.generators().is_empty() {
            gens.extend(pis.iter().cloned());
        }
        gens.extend(
            sub.generating_set()
                .iter()
                .map(|h| self.units[group.position(h).expect("subgroup element")].clone()),
        );
        StarAlgebra::from_spanning(self.base.ambient_dim() * group.order(), &spanning, &gens, tol)
            .map(Arc::new)
    }
}

/// Fixed-point algebra `A^G` with the averaging expectation
/// `E(x) = |G|⁻¹ Σ_g Ad(U_g)(x)`.
pub fn fixed_point(
    alg: Arc<StarAlgebra>,
    action: &GroupAction,
    tol: &Tolerances,
) -> Result<(Arc<StarAlgebra>, CondExpectation)> {
    action.check_normalizes(&alg, tol)?;
    let order = action.group().order() as f64;
    let average = |x: &Matrix| {
        let mut acc = Matrix::zeros(x.nrows(), x.ncols());
        for i in 0..action.group().order() {
            acc += action.ad(i, x);
        }
        acc / real(order)
    };
    let images: Vec<Matrix> = alg.basis().iter().map(average).collect();
    let fixed = Arc::new(StarAlgebra::from_spanning(
        alg.ambient_dim(),
        &images,
        &images,
        tol,
    )?);
    let inclusion = Inclusion::new(alg, fixed.clone(), tol)?;
    let e = CondExpectation::custom(inclusion, images, tol)?;
    Ok((fixed, e))
}
