//! Interior and exterior angles between compatible intermediates
//! `B ⊆ P, Q ⊆ A`, computed either from Jones projections in the basic
//! construction or from quasi-bases of `E|_P` and `E|_Q`.
//!
//! With `z_P = e_P − e` (a projection, since `e ≤ e_P`),
//!
//! ```text
//! cos α(P, Q) = ‖E₁(z_P z_Q)‖ / (‖E₁(z_P)‖^{1/2} ‖E₁(z_Q)‖^{1/2})
//! ```
//!
//! and, for quasi-bases `{μ_j}` of `E|_P` and `{δ_k}` of `E|_Q`,
//! `E₁(z_P z_Q) = Ind⁻¹(Σ μ_j E(μ_j* δ_k) δ_k* − 1)` and
//! `E₁(z_P) = Ind⁻¹(Ind(E|_P) − 1)`. The exterior angle is the interior
//! angle of `P₁ = ⟨λ(A), e_P⟩` and `Q₁` for `E₁: M₁ → λ(A)`.

use std::sync::{Arc, OnceLock};

use crate::algebra::StarAlgebra;
use crate::basic::{BasicConstruction, BuildOptions};
use crate::error::{Error, Result};
use crate::expectation::{make_compatible, CompatibleIntermediate, CondExpectation};
use crate::groups::PermGroup;
use crate::linalg::{identity, norm, Matrix, Tolerances};
use crate::pimsner::{self, ModuleBasis, WatataniIndex};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnglePath {
    Definition,
    Quasibasis,
    Both,
}

impl AnglePath {
    pub fn name(self) -> &'static str {
        match self {
            AnglePath::Definition => "definition",
            AnglePath::Quasibasis => "quasibasis",
            AnglePath::Both => "both",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AngleReport {
    /// Cosine clamped to `[0, 1]`.
    pub cos_value: f64,
    pub raw_cos: f64,
    /// `arccos(cos_value)`, in `[0, π/2]`.
    pub angle: f64,
    pub path: AnglePath,
    pub definition_cos: Option<f64>,
    pub quasibasis_cos: Option<f64>,
    /// `|definition_cos − quasibasis_cos|` when both paths ran.
    pub path_disagreement: Option<f64>,
    /// Numerator and denominators of the reported cosine.
    pub numerator: f64,
    pub denominators: (f64, f64),
    pub commuting_square: bool,
    pub commuting_square_residual: f64,
    pub provenance: String,
}

/// An intermediate prepared for angle computations: its compatible pair,
/// Jones projection (when a basic construction is available) and an
/// orthonormal basis of `E|_P` with the index it produces.
#[derive(Debug, Clone)]
pub struct Intermediate {
    pub compatible: CompatibleIntermediate,
    pub jones: Option<Matrix>,
    pub quasi_basis: ModuleBasis,
    pub restricted_index: WatataniIndex,
}

impl Intermediate {
    pub fn algebra(&self) -> &Arc<StarAlgebra> {
        &self.compatible.algebra
    }
}

struct PathValue {
    cos: f64,
    numerator: f64,
    denominators: (f64, f64),
}

/// Shared state for angles over a fixed `E: A → B`.
#[derive(Debug)]
pub struct AngleContext {
    e: CondExpectation,
    tol: Tolerances,
    index_inv: Matrix,
    basic: Option<BasicConstruction>,
    first_floor: OnceLock<Result<Box<AngleContext>>>,
}

impl AngleContext {
    /// Context with a basic construction without `M₁` (`E₁` by pull-down).
    pub fn new(e: &CondExpectation, tol: &Tolerances) -> Result<Self> {
        AngleContext::with_options(e, BuildOptions { materialize_m1: false }, tol)
    }

    pub fn with_options(e: &CondExpectation, options: BuildOptions, tol: &Tolerances) -> Result<Self> {
        tol.validate()?;
        let bc = BasicConstruction::build_with(e, options, tol)?;
        Ok(AngleContext {
            e: e.clone(),
            tol: *tol,
            index_inv: bc.index_inverse().clone(),
            basic: Some(bc),
            first_floor: OnceLock::new(),
        })
    }

    /// Context supporting only the quasi-basis path.
    pub fn quasibasis_only(e: &CondExpectation, tol: &Tolerances) -> Result<Self> {
        tol.validate()?;
        let (_, index) = pimsner::index_of(e, tol)?;
        Ok(AngleContext {
            e: e.clone(),
            tol: *tol,
            index_inv: index.inverse(tol)?,
            basic: None,
            first_floor: OnceLock::new(),
        })
    }

    pub fn expectation(&self) -> &CondExpectation {
        &self.e
    }

    pub fn basic(&self) -> Option<&BasicConstruction> {
        self.basic.as_ref()
    }

    pub fn tolerances(&self) -> &Tolerances {
        &self.tol
    }

    /// Makes `P` compatible with `E` and prepares it.
    pub fn intermediate(&self, p: Arc<StarAlgebra>) -> Result<Intermediate> {
        let ci = make_compatible(&self.e, p, &self.tol)?;
        self.prepare(ci)
    }

    pub fn prepare(&self, ci: CompatibleIntermediate) -> Result<Intermediate> {
        if ci.compatibility_residual >= self.tol.eq_tol {
            return Err(Error::Incompatible {
                residual: ci.compatibility_residual,
            });
        }
        let (quasi_basis, restricted_index) = pimsner::index_of(&ci.e_restricted, &self.tol)?;
        let jones = match &self.basic {
            Some(bc) => Some(self.jones_from_f(bc, &ci)?),
            None => None,
        };
        Ok(Intermediate {
            compatible: ci,
            jones,
            quasi_basis,
            restricted_index,
        })
    }

    /// `e_P` as the matrix of `F` on `L²(A, τ∘E)`.
    fn jones_from_f(&self, bc: &BasicConstruction, ci: &CompatibleIntermediate) -> Result<Matrix> {
        let ep = bc.operator_matrix(|x| ci.f.apply(x));
        let proj = norm(&(&ep * &ep - &ep)).max(norm(&(ep.adjoint() - &ep)));
        if proj >= self.tol.eq_tol {
            return Err(Error::invariant("e_P is a projection", proj));
        }
        let e = bc.e_proj();
        let dom = norm(&(&ep * e - e));
        if dom >= self.tol.eq_tol {
            return Err(Error::invariant("e ≤ e_P", dom));
        }
        Ok(ep)
    }

    /// `‖e_P e_Q − e‖` in the basic construction, or, without one,
    /// `max_a ‖F(G(a)) − E(a)‖ / ‖a‖` over the basis of `A`.
    pub fn commuting_square(&self, p: &Intermediate, q: &Intermediate) -> (bool, f64) {
        let residual = match (&self.basic, &p.jones, &q.jones) {
            (Some(bc), Some(ep), Some(eq)) => norm(&(ep * eq - bc.e_proj())),
            _ => self
                .e
                .big()
                .basis()
                .iter()
                .map(|a| {
                    let fg = p.compatible.f.apply(&q.compatible.f.apply(a));
                    norm(&(fg - self.e.apply(a))) / norm(a).max(1.0)
                })
                .fold(0.0, f64::max),
        };
        (residual < self.tol.eq_tol, residual)
    }

    fn definition_path(&self, p: &Intermediate, q: &Intermediate) -> Result<PathValue> {
        let (Some(bc), Some(ep), Some(eq)) = (&self.basic, &p.jones, &q.jones) else {
            return Err(Error::Argument(
                "definition path needs a basic construction".into(),
            ));
        };
        let e = bc.e_proj();
        let zp = ep - e;
        let zq = eq - e;
        let dp = norm(&bc.dual_apply(&zp));
        let dq = norm(&bc.dual_apply(&zq));
        self.check_denominators(dp, dq)?;
        let numerator = norm(&bc.dual_apply(&(&zp * &zq)));
        Ok(PathValue {
            cos: numerator / (dp.sqrt() * dq.sqrt()),
            numerator,
            denominators: (dp.sqrt(), dq.sqrt()),
        })
    }

    fn quasibasis_path(&self, p: &Intermediate, q: &Intermediate) -> Result<PathValue> {
        let n = self.e.ambient_dim();
        let one = identity(n);
        let dp = norm(&(&self.index_inv * (&p.restricted_index.value - &one)));
        let dq = norm(&(&self.index_inv * (&q.restricted_index.value - &one)));
        self.check_denominators(dp, dq)?;
        let mut sum = Matrix::zeros(n, n);
        for mu in &p.quasi_basis.elements {
            let mu_adj = mu.adjoint();
            for delta in &q.quasi_basis.elements {
                sum += mu * self.e.apply(&(&mu_adj * delta)) * delta.adjoint();
            }
        }
        let numerator = norm(&(&self.index_inv * (sum - one)));
        Ok(PathValue {
            cos: numerator / (dp.sqrt() * dq.sqrt()),
            numerator,
            denominators: (dp.sqrt(), dq.sqrt()),
        })
    }

    fn check_denominators(&self, dp: f64, dq: f64) -> Result<()> {
        if dp < self.tol.eq_tol || dq < self.tol.eq_tol {
            return Err(Error::DegenerateDenominator);
        }
        Ok(())
    }

    pub fn interior_angle(&self, p: &Intermediate, q: &Intermediate, path: AnglePath) -> Result<AngleReport> {
        let definition = match path {
            AnglePath::Quasibasis => None,
            _ => Some(self.definition_path(p, q)?),
        };
        let quasibasis = match path {
            AnglePath::Definition => None,
            _ => Some(self.quasibasis_path(p, q)?),
        };
        let path_disagreement = match (&definition, &quasibasis) {
            (Some(d), Some(b)) => Some((d.cos - b.cos).abs()),
            _ => None,
        };
        if let Some(disagreement) = path_disagreement {
            if !(disagreement < self.tol.angle_tol) {
                return Err(Error::PathDisagreement { disagreement });
            }
        }
        let definition_cos = definition.as_ref().map(|v| v.cos);
        let quasibasis_cos = quasibasis.as_ref().map(|v| v.cos);
        let chosen = definition.or(quasibasis).expect("at least one path runs");
        if !(chosen.cos <= 1.0 + self.tol.angle_tol) {
            return Err(Error::invariant("cosine at most 1", chosen.cos - 1.0));
        }
        let cos_value = chosen.cos.clamp(0.0, 1.0);
        let (commuting_square, commuting_square_residual) = self.commuting_square(p, q);
        Ok(AngleReport {
            cos_value,
            raw_cos: chosen.cos,
            angle: cos_value.acos(),
            path,
            definition_cos,
            quasibasis_cos,
            path_disagreement,
            numerator: chosen.numerator,
            denominators: chosen.denominators,
            commuting_square,
            commuting_square_residual,
            provenance: self.provenance(p, q, path),
        })
    }

    fn provenance(&self, p: &Intermediate, q: &Intermediate, path: AnglePath) -> String {
        let mut parts = Vec::new();
        if path != AnglePath::Quasibasis {
            let e1 = match self.basic.as_ref().and_then(|bc| bc.dual_expectation()) {
                Some(_) => "least-squares E₁ on M₁",
                None => "E₁ by pull-down",
            };
            parts.push(format!("definition: e_P, e_Q as matrices of F, G; {e1}"));
        }
        if path != AnglePath::Definition {
            parts.push(format!(
                "quasibasis: orthonormal bases of E|_P ({} elements, dim P = {}) and E|_Q ({} elements, dim Q = {})",
                p.quasi_basis.len(),
                p.algebra().dim(),
                q.quasi_basis.len(),
                q.algebra().dim()
            ));
        }
        parts.join("; ")
    }

    /// The context one floor up: `E₁: M₁ → λ(A)`, with its own basic
    /// construction when `with_second_floor` holds. Built once and cached;
    /// the first call decides whether the second floor exists.
    pub fn first_floor(&self, with_second_floor: bool) -> Result<&AngleContext> {
        let cell = self.first_floor.get_or_init(|| {
            let bc = self
                .basic
                .as_ref()
                .ok_or_else(|| Error::Argument("exterior angle needs a basic construction".into()))?;
            let e1 = bc.dual_cond_expectation()?;
            let ctx = if with_second_floor {
                AngleContext::new(&e1, &self.tol)?
            } else {
                AngleContext::quasibasis_only(&e1, &self.tol)?
            };
            Ok(Box::new(ctx))
        });
        match cell {
            Ok(ctx) => Ok(ctx),
            Err(err) => Err(err.clone()),
        }
    }

    /// `P₁ = ⟨λ(A), e_P⟩` made compatible with `E₁`.
    pub fn lift(&self, p: &Intermediate, floor: &AngleContext) -> Result<Intermediate> {
        let bc = self
            .basic
            .as_ref()
            .ok_or_else(|| Error::Argument("exterior angle needs a basic construction".into()))?;
        let ep = p.jones.as_ref().expect("jones projection present with a basic construction");
        let lambda_a = floor.e.small();
        let mut gens: Vec<Matrix> = lambda_a.generators().to_vec();
        if gens.is_empty() {
            gens = lambda_a.basis().to_vec();
        }
        gens.push(ep.clone());
        let p1 = Arc::new(StarAlgebra::from_generators(bc.rep_dim(), &gens, &self.tol)?);
        let ci = match make_compatible(&floor.e, p1, &self.tol) {
            Ok(ci) => ci,
            Err(Error::Incompatible { residual }) => return Err(Error::ExteriorAngleUndefined { residual }),
            Err(err) => return Err(err),
        };
        if ci.compatibility_residual >= self.tol.eq_tol {
            return Err(Error::ExteriorAngleUndefined {
                residual: ci.compatibility_residual,
            });
        }
        floor.prepare(ci)
    }

    /// `β(P, Q) = α(P₁, Q₁)` by the quasi-basis formula one floor up; with
    /// `cross_check`, also by the definition path on the second floor.
    pub fn exterior_angle(&self, p: &Intermediate, q: &Intermediate, cross_check: bool) -> Result<AngleReport> {
        let floor = self.first_floor(cross_check)?;
        let path = if cross_check && floor.basic.is_some() {
            AnglePath::Both
        } else {
            AnglePath::Quasibasis
        };
        let p1 = self.lift(p, floor)?;
        let q1 = self.lift(q, floor)?;
        let mut report = floor.interior_angle(&p1, &q1, path)?;
        if path == AnglePath::Both {
            // One-floor-up quasi-basis value is the primary result here.
            let qb = report.quasibasis_cos.expect("both paths ran");
            report.raw_cos = qb;
            report.cos_value = qb.clamp(0.0, 1.0);
            report.angle = report.cos_value.acos();
        }
        report.provenance = format!("one floor up (E₁: M₁ → λ(A)); {}", report.provenance);
        Ok(report)
    }

    /// Symmetric table of interior angles; failed pairs keep their error.
    pub fn angle_matrix(&self, intermediates: &[Intermediate], path: AnglePath) -> AngleMatrix {
        let n = intermediates.len();
        let mut entries: Vec<Vec<Option<Result<AngleReport>>>> = vec![vec![None; n]; n];
        for i in 0..n {
            for j in i..n {
                let r = self.interior_angle(&intermediates[i], &intermediates[j], path);
                entries[j][i] = Some(r.clone());
                entries[i][j] = Some(r);
            }
        }
        AngleMatrix {
            entries: entries
                .into_iter()
                .map(|row| row.into_iter().map(|e| e.expect("filled")).collect())
                .collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct AngleMatrix {
    pub entries: Vec<Vec<Result<AngleReport>>>,
}

impl AngleMatrix {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> &Result<AngleReport> {
        &self.entries[i][j]
    }

    /// Angles with failed entries as `NaN`.
    pub fn angles(&self) -> Vec<Vec<f64>> {
        self.entries
            .iter()
            .map(|row| {
                row.iter()
                    .map(|r| r.as_ref().map(|a| a.angle).unwrap_or(f64::NAN))
                    .collect()
            })
            .collect()
    }
}

/// Interior angle for a single pair, building a fresh context.
pub fn interior_angle(
    e: &CondExpectation,
    p: Arc<StarAlgebra>,
    q: Arc<StarAlgebra>,
    path: AnglePath,
    tol: &Tolerances,
) -> Result<AngleReport> {
    let ctx = match path {
        AnglePath::Quasibasis => AngleContext::quasibasis_only(e, tol)?,
        _ => AngleContext::new(e, tol)?,
    };
    let p = ctx.intermediate(p)?;
    let q = ctx.intermediate(q)?;
    ctx.interior_angle(&p, &q, path)
}

/// `([K∩L : H] − 1) / (√([K:H] − 1) √([L:H] − 1))`; `None` when `K = H` or
/// `L = H`.
pub fn group_closed_form(h: &PermGroup, k: &PermGroup, l: &PermGroup) -> Result<Option<f64>> {
    let kl = k.intersect(l)?;
    let ikl = kl.index(h)? as f64;
    let ik = k.index(h)? as f64;
    let il = l.index(h)? as f64;
    if ik == 1.0 || il == 1.0 {
        return Ok(None);
    }
    Ok(Some((ikl - 1.0) / ((ik - 1.0).sqrt() * (il - 1.0).sqrt())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;
    use crate::algebra::{crossed_product, group_algebra, GroupAction, GroupAlgebra, Inclusion};
    use crate::groups::presets;

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    struct GroupCase {
        ga: GroupAlgebra,
        e: CondExpectation,
    }

    fn case(g: &PermGroup, h: &PermGroup) -> GroupCase {
        let ga = group_algebra(g, &tol()).unwrap();
        let b = ga.subalgebra(h, &tol()).unwrap();
        let inc = Inclusion::new(ga.algebra.clone(), b, &tol()).unwrap();
        let e = CondExpectation::trace_preserving(inc, &tol()).unwrap();
        GroupCase { ga, e }
    }

    fn sub(g: &PermGroup, gens: &[&str]) -> PermGroup {
        PermGroup::from_cycle_strings(g.degree(), gens).unwrap()
    }

    // Independent oracle: the normalized inner product of the coefficient
    // projections P_K − P_H and P_L − P_H on ℓ²(G), in the Hilbert–Schmidt
    // sense, which for group inclusions reduces to counting.
    fn counting_cos(h: &PermGroup, k: &PermGroup, l: &PermGroup) -> f64 {
        let count = |a: &PermGroup| a.order() as f64;
        let kl = k.intersect(l).unwrap();
        let overlap = count(&kl) - count(h);
        overlap / ((count(k) - count(h)).sqrt() * (count(l) - count(h)).sqrt())
    }

    #[test]
    fn equal_intermediates_have_zero_angle() {
        let g = presets::d4();
        let c = case(&g, &presets::trivial(4));
        let ctx = AngleContext::new(&c.e, &tol()).unwrap();
        let k = ctx.intermediate(c.ga.subalgebra(&presets::d4_rotations(), &tol()).unwrap()).unwrap();
        let r = ctx.interior_angle(&k, &k, AnglePath::Both).unwrap();
        assert!((r.raw_cos - 1.0).abs() < 1e-10);
        assert!(r.angle < 1e-4);
        assert!(!r.commuting_square);
    }

    #[test]
    fn s3_rotation_and_transposition_are_orthogonal() {
        let g = presets::s3();
        let c = case(&g, &presets::trivial(3));
        let ctx = AngleContext::new(&c.e, &tol()).unwrap();
        let k = ctx.intermediate(c.ga.subalgebra(&sub(&g, &["(1 2 3)"]), &tol()).unwrap()).unwrap();
        let l = ctx.intermediate(c.ga.subalgebra(&sub(&g, &["(1 2)"]), &tol()).unwrap()).unwrap();
        let r = ctx.interior_angle(&k, &l, AnglePath::Both).unwrap();
        assert!(r.cos_value < 1e-10);
        assert!((r.angle - FRAC_PI_2).abs() < 1e-8);
        assert!(r.commuting_square);
    }

    #[test]
    fn d4_rotations_against_klein() {
        let g = presets::d4();
        let c = case(&g, &presets::trivial(4));
        let ctx = AngleContext::new(&c.e, &tol()).unwrap();
        let k = presets::d4_rotations();
        let l = presets::d4_klein_s();
        let pk = ctx.intermediate(c.ga.subalgebra(&k, &tol()).unwrap()).unwrap();
        let pl = ctx.intermediate(c.ga.subalgebra(&l, &tol()).unwrap()).unwrap();
        let r = ctx.interior_angle(&pk, &pl, AnglePath::Both).unwrap();
        assert!((r.cos_value - 1.0 / 3.0).abs() < 1e-10);
        assert!((counting_cos(&presets::trivial(4), &k, &l) - 1.0 / 3.0).abs() < 1e-15);
        assert!(r.path_disagreement.unwrap() < 1e-10);
        assert!(!r.commuting_square);
        assert!(r.commuting_square_residual > 0.1);
        let swapped = ctx.interior_angle(&pl, &pk, AnglePath::Both).unwrap();
        assert!((swapped.cos_value - r.cos_value).abs() < 1e-10);
    }

    #[test]
    fn closed_form_over_every_d4_pair() {
        let g = presets::d4();
        let h = presets::d4_center();
        let c = case(&g, &h);
        let ctx = AngleContext::new(&c.e, &tol()).unwrap();
        let subs: Vec<PermGroup> = g
            .intermediate_subgroups(&h, 48)
            .unwrap()
            .into_iter()
            .filter(|s| s.order() != h.order() && s.order() != g.order())
            .collect();
        assert_eq!(subs.len(), 3);
        let prepared: Vec<Intermediate> = subs
            .iter()
            .map(|s| ctx.intermediate(c.ga.subalgebra(s, &tol()).unwrap()).unwrap())
            .collect();
        for (i, k) in subs.iter().enumerate() {
            for (j, l) in subs.iter().enumerate() {
                let r = ctx.interior_angle(&prepared[i], &prepared[j], AnglePath::Both).unwrap();
                let expect = counting_cos(&h, k, l);
                assert!((r.cos_value - expect).abs() < 1e-9, "{i} {j}: {} vs {expect}", r.cos_value);
                let closed = group_closed_form(&h, k, l).unwrap().unwrap();
                assert!((closed - expect).abs() < 1e-12);
                let inter = k.intersect(l).unwrap();
                assert_eq!(r.commuting_square, inter.order() == h.order());
            }
        }
    }

    #[test]
    fn base_algebra_is_degenerate() {
        let g = presets::s3();
        let c = case(&g, &presets::trivial(3));
        let ctx = AngleContext::new(&c.e, &tol()).unwrap();
        let b = ctx.intermediate(c.e.small().clone()).unwrap();
        let k = ctx.intermediate(c.ga.subalgebra(&sub(&g, &["(1 2)"]), &tol()).unwrap()).unwrap();
        for path in [AnglePath::Definition, AnglePath::Quasibasis, AnglePath::Both] {
            assert!(matches!(ctx.interior_angle(&b, &k, path), Err(Error::DegenerateDenominator)));
        }
        assert!(ctx.commuting_square(&b, &k).0);
    }

    #[test]
    fn tensor_stability() {
        let g = presets::s3();
        let h = presets::trivial(3);
        let c = case(&g, &h);
        let k = c.ga.subalgebra(&sub(&g, &["(1 2 3)"]), &tol()).unwrap();
        let l = c.ga.subalgebra(&sub(&g, &["(1 2)"]), &tol()).unwrap();
        let base = interior_angle(&c.e, k.clone(), k.clone(), AnglePath::Both, &tol()).unwrap();
        let kl = interior_angle(&c.e, k.clone(), l.clone(), AnglePath::Both, &tol()).unwrap();
        for factor in [2, 3] {
            let t = |a: &StarAlgebra| Arc::new(a.tensor_by_factor(factor, &tol()).unwrap());
            let inc = Inclusion::new(t(c.e.big()), t(c.e.small()), &tol()).unwrap();
            let e = CondExpectation::trace_preserving(inc, &tol()).unwrap();
            let r = interior_angle(&e, t(&k), t(&l), AnglePath::Both, &tol()).unwrap();
            assert!((r.cos_value - kl.cos_value).abs() < 1e-9);
            let r = interior_angle(&e, t(&k), t(&k), AnglePath::Quasibasis, &tol()).unwrap();
            assert!((r.cos_value - base.cos_value).abs() < 1e-9);
        }
    }

    #[test]
    fn crossed_product_matches_group_formula() {
        // S3 permuting the three points of the diagonal algebra ℂ³.
        let g = presets::s3();
        let base = Arc::new(StarAlgebra::diagonal(3));
        let cp = crossed_product(base, GroupAction::permutation(g.clone()), &tol()).unwrap();
        let h = presets::trivial(3);
        let b = cp.subalgebra(&h, &tol()).unwrap();
        let inc = Inclusion::new(cp.algebra.clone(), b, &tol()).unwrap();
        let e = CondExpectation::trace_preserving(inc, &tol()).unwrap();
        let ctx = AngleContext::new(&e, &tol()).unwrap();
        let subs = [sub(&g, &["(1 2 3)"]), sub(&g, &["(1 2)"]), sub(&g, &["(1 3)"])];
        let prepared: Vec<Intermediate> = subs
            .iter()
            .map(|s| ctx.intermediate(cp.subalgebra(s, &tol()).unwrap()).unwrap())
            .collect();
        for i in 0..3 {
            for j in 0..3 {
                let r = ctx.interior_angle(&prepared[i], &prepared[j], AnglePath::Both).unwrap();
                let expect = counting_cos(&h, &subs[i], &subs[j]);
                assert!((r.cos_value - expect).abs() < 1e-9, "{i} {j}: {}", r.cos_value);
            }
        }
    }

    #[test]
    fn angle_matrix_is_symmetric_with_zero_diagonal() {
        let g = presets::s3();
        let h = presets::trivial(3);
        let c = case(&g, &h);
        let ctx = AngleContext::new(&c.e, &tol()).unwrap();
        let subs: Vec<Intermediate> = g
            .intermediate_subgroups(&h, 48)
            .unwrap()
            .into_iter()
            .filter(|s| s.order() != 1 && s.order() != 6)
            .map(|s| ctx.intermediate(c.ga.subalgebra(&s, &tol()).unwrap()).unwrap())
            .collect();
        assert_eq!(subs.len(), 4);
        let m = ctx.angle_matrix(&subs, AnglePath::Both);
        let angles = m.angles();
        for i in 0..4 {
            assert!(angles[i][i] < 1e-4);
            for j in 0..4 {
                assert_eq!(angles[i][j], angles[j][i]);
                if i != j {
                    assert!((angles[i][j] - FRAC_PI_2).abs() < 1e-8);
                }
            }
        }
        let single = ctx.angle_matrix(&subs[..1], AnglePath::Both);
        assert_eq!(single.len(), 1);
    }

    #[test]
    fn exterior_angle_floors_agree() {
        let g = presets::d4();
        let c = case(&g, &presets::trivial(4));
        let ctx = AngleContext::new(&c.e, &tol()).unwrap();
        let pk = ctx.intermediate(c.ga.subalgebra(&presets::d4_rotations(), &tol()).unwrap()).unwrap();
        let pl = ctx.intermediate(c.ga.subalgebra(&presets::d4_klein_s(), &tol()).unwrap()).unwrap();
        let r = ctx.exterior_angle(&pk, &pl, true).unwrap();
        let qb = r.quasibasis_cos.unwrap();
        let def = r.definition_cos.unwrap();
        assert!((qb - def).abs() < 1e-7);
        assert!((0.0..=FRAC_PI_2).contains(&r.angle));
        let same = ctx.exterior_angle(&pk, &pk, true).unwrap();
        assert!((same.raw_cos - 1.0).abs() < 1e-9);
    }

    /// Matrix of right translation `e_x ↦ e_{x g⁻¹}` on `ℓ²(G)`.
    fn right_translation(g: &PermGroup, x: &crate::groups::Perm) -> Matrix {
        let n = g.order();
        let inv = x.inverse();
        let mut m = Matrix::zeros(n, n);
        for (j, y) in g.elements().iter().enumerate() {
            m[(g.position(&y.compose(&inv)).unwrap(), j)] = crate::linalg::ONE;
        }
        m
    }

    // Independent oracle for exterior angles over H = {e}: the first floor
    // is ρ(G)' ⊂ ρ(K)', ρ(L)' ⊂ B(ℓ²(G)) with the trace-preserving
    // expectation, where ρ is the right regular representation.
    fn dual_inclusion_cos(g: &PermGroup, k: &PermGroup, l: &PermGroup) -> f64 {
        let full = StarAlgebra::full(g.order());
        let commutant = |s: &PermGroup| {
            let gens: Vec<Matrix> = s.elements().iter().map(|x| right_translation(g, x)).collect();
            let rho = StarAlgebra::from_generators(g.order(), &gens, &tol()).unwrap();
            Arc::new(full.relative_commutant(&rho, &tol()).unwrap())
        };
        let inc = Inclusion::new(Arc::new(full.clone()), commutant(g), &tol()).unwrap();
        let e = CondExpectation::trace_preserving(inc, &tol()).unwrap();
        interior_angle(&e, commutant(k), commutant(l), AnglePath::Both, &tol())
            .unwrap()
            .cos_value
    }

    #[test]
    fn exterior_angle_matches_dual_inclusion() {
        let g = presets::d4();
        let c = case(&g, &presets::trivial(4));
        let ctx = AngleContext::new(&c.e, &tol()).unwrap();
        let pairs = [
            (sub(&g, &["(1 3)"]), sub(&g, &["(1 4)(2 3)"])),
            (sub(&g, &["(1 3)"]), presets::d4_klein_s()),
            (presets::d4_rotations(), presets::d4_klein_s()),
        ];
        let mut nontrivial = 0;
        for (k, l) in &pairs {
            let pk = ctx.intermediate(c.ga.subalgebra(k, &tol()).unwrap()).unwrap();
            let pl = ctx.intermediate(c.ga.subalgebra(l, &tol()).unwrap()).unwrap();
            let r = ctx.exterior_angle(&pk, &pl, true).unwrap();
            let oracle = dual_inclusion_cos(&g, k, l);
            assert!((r.cos_value - oracle).abs() < 1e-8, "{} vs {oracle}", r.cos_value);
            if oracle > 1e-3 && oracle < 1.0 - 1e-3 {
                nontrivial += 1;
            }
        }
        assert!(nontrivial >= 1);
    }
}
