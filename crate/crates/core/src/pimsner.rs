//! Orthonormal bases of partial isometries for `A` as a right Hilbert
//! module over `B`, quasi-bases, and the Watatani index.
//!
//! In finite dimensions every orthonormal basis `{m_j}` (with
//! `E(m_j* m_k) = δ_jk p_j`, `p_j` projections) is a finite quasi-basis:
//! `x = Σ_j m_j E(m_j* x)` for all `x ∈ A`. The index is then
//! `Ind_W(E) = Σ_j m_j m_j*`, a positive invertible central element that does
//! not depend on which quasi-basis is used.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::expectation::{random_element, CondExpectation};
use crate::linalg::{
    commutator, hermitian_eigen, identity, inverse_positive, norm, normalized_trace, psd_calculus,
    real, Matrix, PsdFunction, Tolerances,
};

/// Orthonormal basis `{m_j}` of `A` over `B` with support projections
/// `p_j = E(m_j* m_j)`.
#[derive(Debug, Clone)]
pub struct ModuleBasis {
    pub elements: Vec<Matrix>,
    pub support_projections: Vec<Matrix>,
}

/// Largest violations of the module-basis invariants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasisDiagnostics {
    pub projection: f64,
    pub orthogonality: f64,
    pub reconstruction: f64,
}

impl ModuleBasis {
    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn diagnostics(&self, e: &CondExpectation) -> BasisDiagnostics {
        let mut projection: f64 = 0.0;
        for p in &self.support_projections {
            projection = projection
                .max(norm(&(p * p - p)))
                .max(norm(&(p.adjoint() - p)))
                .max(e.small().residual(p));
        }
        let mut orthogonality: f64 = 0.0;
        for (j, mj) in self.elements.iter().enumerate() {
            for (k, mk) in self.elements.iter().enumerate() {
                if j != k {
                    orthogonality = orthogonality.max(norm(&e.apply(&(mj.adjoint() * mk))));
                }
            }
        }
        let reconstruction = e
            .big()
            .basis()
            .iter()
            .map(|x| reconstruction_residual(e, &self.elements, x))
            .fold(0.0, f64::max);
        BasisDiagnostics {
            projection,
            orthogonality,
            reconstruction,
        }
    }

    pub fn verify(&self, e: &CondExpectation, tol: &Tolerances) -> Result<BasisDiagnostics> {
        let d = self.diagnostics(e);
        if d.projection >= tol.eq_tol {
            return Err(Error::invariant("support projections are projections in B", d.projection));
        }
        if d.orthogonality >= tol.eq_tol {
            return Err(Error::invariant("mutual orthogonality", d.orthogonality));
        }
        if d.reconstruction >= tol.eq_tol {
            return Err(Error::invariant("quasi-basis reconstruction", d.reconstruction));
        }
        Ok(d)
    }
}

/// `‖x − Σ u_i E(u_i* x)‖`.
pub fn reconstruction_residual(e: &CondExpectation, candidate: &[Matrix], x: &Matrix) -> f64 {
    let mut r = x.clone();
    for u in candidate {
        r -= u * e.apply(&(u.adjoint() * x));
    }
    norm(&r)
}

/// Orthonormal basis built by sweeping over `A`'s linear basis in its
/// natural order.
pub fn orthonormal_basis(e: &CondExpectation, tol: &Tolerances) -> Result<ModuleBasis> {
    let order: Vec<usize> = (0..e.big().dim()).collect();
    orthonormal_basis_ordered(e, &order, tol)
}

/// Greedy construction seeded with the unit: for each source vector `a`
/// (the unit first, then `A`'s basis in the given order), take the residual
/// `r = a − Σ_j m_j E(m_j* a)`; if `h = E(r* r)` is non-zero append
/// `m = r · h^{-1/2}` (pseudo-inverse square root). Sweeps repeat until every
/// residual vanishes.
pub fn orthonormal_basis_ordered(
    e: &CondExpectation,
    order: &[usize],
    tol: &Tolerances,
) -> Result<ModuleBasis> {
    let basis = e.big().basis();
    if order.iter().any(|&i| i >= basis.len()) {
        return Err(Error::Argument("ordering index out of range".into()));
    }
    let unit = identity(e.ambient_dim());
    let sources: Vec<&Matrix> = std::iter::once(&unit)
        .chain(order.iter().map(|&i| &basis[i]))
        .collect();
    let mut elements: Vec<Matrix> = Vec::new();
    let mut support_projections: Vec<Matrix> = Vec::new();
    let max_sweeps = basis.len() + 1;
    for _ in 0..max_sweeps {
        let mut grew = false;
        for a in &sources {
            let a = *a;
            let mut r = a.clone();
            for m in &elements {
                r -= m * e.apply(&(m.adjoint() * a));
            }
            let scale = norm(a).max(1.0);
            let rn = norm(&r);
            if rn <= tol.eq_tol * scale * 1e-2 {
                continue;
            }
            let h = e.apply(&(r.adjoint() * &r));
            let h = (&h + h.adjoint()).scale(0.5);
            if norm(&h) <= tol.rank_tol {
                if rn > tol.eq_tol * scale {
                    return Err(Error::Internal(format!(
                        "expectation is not faithful: residual {rn:.3e} with E(r*r) ≈ 0"
                    )));
                }
                continue;
            }
            let s_inv = psd_calculus(&h, PsdFunction::PinvSqrt, tol)?;
            let m = &r * &s_inv;
            let p = e.apply(&(m.adjoint() * &m));
            let p = (&p + p.adjoint()).scale(0.5);
            elements.push(m);
            support_projections.push(p);
            grew = true;
        }
        if !grew {
            let basis = ModuleBasis {
                elements,
                support_projections,
            };
            basis.verify(e, tol)?;
            return Ok(basis);
        }
    }
    Err(Error::Internal(
        "orthonormal basis construction did not settle".into(),
    ))
}

/// The Watatani index `Σ m_j m_j*`, a central positive invertible element
/// of `A`; `scalar` is set when the value is a multiple of the unit.
#[derive(Debug, Clone)]
pub struct WatataniIndex {
    pub value: Matrix,
    pub scalar: Option<f64>,
}

impl WatataniIndex {
    pub fn inverse(&self, tol: &Tolerances) -> Result<Matrix> {
        inverse_positive(&self.value, tol)
    }

    pub fn norm(&self) -> f64 {
        norm(&self.value)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        hermitian_eigen(&self.value).0.first().copied().unwrap_or(0.0)
    }
}

/// `Σ u_i u_i*` for a verified quasi-basis, with centrality and positivity
/// checked against `A`.
pub fn index_from_elements(e: &CondExpectation, elements: &[Matrix], tol: &Tolerances) -> Result<WatataniIndex> {
    let n = e.ambient_dim();
    let mut value = Matrix::zeros(n, n);
    for m in elements {
        value += m * m.adjoint();
    }
    let value = (&value + value.adjoint()).scale(0.5);
    let scale = norm(&value).max(1.0);
    let centrality = e
        .big()
        .basis()
        .iter()
        .map(|a| norm(&commutator(&value, a)) / norm(a).max(1.0))
        .fold(0.0, f64::max);
    if centrality >= tol.eq_tol * scale {
        return Err(Error::invariant("index is central", centrality));
    }
    let min = hermitian_eigen(&value).0[0];
    if min <= tol.rank_tol {
        return Err(Error::invariant("index is positive invertible", min));
    }
    let c = normalized_trace(&value).re;
    let scalar = (norm(&(&value - identity(n) * real(c))) < tol.eq_tol * scale).then_some(c);
    Ok(WatataniIndex { value, scalar })
}

pub fn watatani_index(e: &CondExpectation, basis: &ModuleBasis, tol: &Tolerances) -> Result<WatataniIndex> {
    index_from_elements(e, &basis.elements, tol)
}

/// Index computed from an arbitrary candidate quasi-basis after checking
/// the reconstruction identity on `A`'s basis.
pub fn index_from_quasi_basis(e: &CondExpectation, candidate: &[Matrix], tol: &Tolerances) -> Result<WatataniIndex> {
    let residual = verify_quasi_basis(e, candidate, 0, 0);
    if residual >= tol.eq_tol {
        return Err(Error::invariant("quasi-basis reconstruction", residual));
    }
    index_from_elements(e, candidate, tol)
}

/// Basis and index in one step.
pub fn index_of(e: &CondExpectation, tol: &Tolerances) -> Result<(ModuleBasis, WatataniIndex)> {
    let basis = orthonormal_basis(e, tol)?;
    let index = watatani_index(e, &basis, tol)?;
    Ok((basis, index))
}

/// Largest reconstruction residual over `A`'s basis and `samples` seeded
/// random unit-HS-norm elements of `A`.
pub fn verify_quasi_basis(e: &CondExpectation, candidate: &[Matrix], samples: usize, seed: u64) -> f64 {
    let mut worst = e
        .big()
        .basis()
        .iter()
        .map(|x| reconstruction_residual(e, candidate, x))
        .fold(0.0, f64::max);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..samples {
        let x = random_element(&mut rng, e.big());
        worst = worst.max(reconstruction_residual(e, candidate, &x));
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{fixed_point, group_algebra, GroupAction, Inclusion, StarAlgebra};
    use crate::groups::presets;
    use crate::linalg::{ONE, ZERO};
    use std::sync::Arc;

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    fn tp(a: Arc<StarAlgebra>, b: Arc<StarAlgebra>) -> CondExpectation {
        CondExpectation::trace_preserving(Inclusion::new(a, b, &tol()).unwrap(), &tol()).unwrap()
    }

    fn unit(n: usize, i: usize, j: usize) -> Matrix {
        let mut m = Matrix::zeros(n, n);
        m[(i, j)] = ONE;
        m
    }

    #[test]
    fn b_equals_a_gives_single_unit() {
        let a = Arc::new(StarAlgebra::full(3));
        let e = tp(a.clone(), a);
        let (basis, index) = index_of(&e, &tol()).unwrap();
        assert_eq!(basis.len(), 1);
        assert!(norm(&(&basis.support_projections[0] - identity(3))) < 1e-12);
        assert!((index.scalar.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn scalars_in_matrix_algebra() {
        for n in 2..=4 {
            let e = tp(Arc::new(StarAlgebra::full(n)), Arc::new(StarAlgebra::scalars(n)));
            let (basis, index) = index_of(&e, &tol()).unwrap();
            assert_eq!(basis.len(), n * n);
            assert!((index.scalar.unwrap() - (n * n) as f64).abs() < 1e-9);
        }
        // A hand-written orthonormal family for ℂ ⊂ M₂.
        let e = tp(Arc::new(StarAlgebra::full(2)), Arc::new(StarAlgebra::scalars(2)));
        let s2 = real(2f64.sqrt());
        let sz = Matrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE]);
        let family = vec![identity(2), unit(2, 0, 1) * s2, unit(2, 1, 0) * s2, sz];
        let mb = ModuleBasis {
            support_projections: family.iter().map(|m| e.apply(&(m.adjoint() * m))).collect(),
            elements: family,
        };
        mb.verify(&e, &tol()).unwrap();
        assert!((watatani_index(&e, &mb, &tol()).unwrap().scalar.unwrap() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn coset_representatives_are_a_quasi_basis() {
        let cases = [
            (presets::s3(), PermGroup::from_cycle_strings(3, &["(1 2)"]).unwrap()),
            (presets::d4(), presets::d4_center()),
            (presets::s4(), presets::klein_four()),
        ];
        for (g, h) in cases {
            let ga = group_algebra(&g, &tol()).unwrap();
            let b = ga.subalgebra(&h, &tol()).unwrap();
            let e = tp(ga.algebra.clone(), b);
            let reps: Vec<Matrix> = g
                .left_coset_representatives(&h)
                .unwrap()
                .iter()
                .map(|r| ga.lambda(r).unwrap().clone())
                .collect();
            assert_eq!(reps.len(), g.index(&h).unwrap());
            assert!(verify_quasi_basis(&e, &reps, 20, 1) < 1e-12);
            let idx = index_from_quasi_basis(&e, &reps, &tol()).unwrap();
            assert!((idx.scalar.unwrap() - g.index(&h).unwrap() as f64).abs() < 1e-12);
            let (_, from_basis) = index_of(&e, &tol()).unwrap();
            assert!(norm(&(from_basis.value - idx.value)) < 1e-9);
            // Dropping a representative breaks reconstruction.
            assert!(verify_quasi_basis(&e, &reps[1..], 0, 0) > 0.1);
        }
    }

    use crate::groups::PermGroup;

    #[test]
    fn index_is_independent_of_ordering() {
        let g = presets::d4();
        let ga = group_algebra(&g, &tol()).unwrap();
        let b = ga.subalgebra(&presets::d4_center(), &tol()).unwrap();
        let e = tp(ga.algebra.clone(), b);
        let forward: Vec<usize> = (0..8).collect();
        let backward: Vec<usize> = (0..8).rev().collect();
        let i1 = watatani_index(&e, &orthonormal_basis_ordered(&e, &forward, &tol()).unwrap(), &tol()).unwrap();
        let i2 = watatani_index(&e, &orthonormal_basis_ordered(&e, &backward, &tol()).unwrap(), &tol()).unwrap();
        assert!(norm(&(i1.value - i2.value)) < 1e-9);
    }

    #[test]
    fn non_scalar_index_for_diagonal_in_block_algebra() {
        // B = ℂ ⊕ ℂ (diagonal) ⊂ A = M₂ ⊕ ℂ: the index is central but not scalar.
        let mut gens = vec![unit(3, 0, 1)];
        gens.push(unit(3, 2, 2));
        let a = Arc::new(StarAlgebra::from_generators(3, &gens, &tol()).unwrap());
        assert_eq!(a.dim(), 5);
        let b = Arc::new(StarAlgebra::diagonal(3));
        let e = tp(a, b);
        let (_, index) = index_of(&e, &tol()).unwrap();
        assert!(index.scalar.is_none());
        assert!(index.min_eigenvalue() > 0.5);
    }

    #[test]
    fn fixed_point_index_is_group_order() {
        let g = presets::cyclic2();
        let sz = Matrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE]);
        let act = GroupAction::from_generators(g.clone(), &[(g.elements()[1].clone(), sz)], &tol()).unwrap();
        let (_, e) = fixed_point(Arc::new(StarAlgebra::full(2)), &act, &tol()).unwrap();
        let (basis, index) = index_of(&e, &tol()).unwrap();
        assert!((index.scalar.unwrap() - 2.0).abs() < 1e-9);
        assert!(verify_quasi_basis(&e, &basis.elements, 50, 3) < 1e-9);
    }

    #[test]
    fn index_is_stable_under_tensoring() {
        let g = presets::cyclic2();
        let sz = Matrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE]);
        let act = GroupAction::from_generators(g.clone(), &[(g.elements()[1].clone(), sz)], &tol()).unwrap();
        let (_, e) = fixed_point(Arc::new(StarAlgebra::full(2)), &act, &tol()).unwrap();
        let (_, index) = index_of(&e, &tol()).unwrap();
        for k in [2, 3] {
            let ek = e.tensor_by_factor(k, &tol()).unwrap();
            assert_eq!(ek.kind(), crate::expectation::ExpectationKind::Custom);
            let (_, ik) = index_of(&ek, &tol()).unwrap();
            let expect = index.value.kronecker(&identity(k));
            assert!(norm(&(ik.value - expect)) < 1e-9);
        }
        let non_scalar = {
            let gens = [unit(3, 0, 1), unit(3, 2, 2)];
            let a = Arc::new(StarAlgebra::from_generators(3, &gens, &tol()).unwrap());
            tp(a, Arc::new(StarAlgebra::diagonal(3)))
        };
        let (_, index) = index_of(&non_scalar, &tol()).unwrap();
        let (_, i2) = index_of(&non_scalar.tensor_by_factor(2, &tol()).unwrap(), &tol()).unwrap();
        assert!(norm(&(i2.value - index.value.kronecker(&identity(2)))) < 1e-9);
    }
}
