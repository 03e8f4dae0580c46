//! Conditional expectations `E: A → B`, compatibility of intermediate
//! algebras, and a randomized lower-bound estimator for the probabilistic
//! index.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::algebra::{columns_of, unflatten, Inclusion, StarAlgebra};
use crate::error::{Error, Result};
use crate::linalg::{
    ad_matmul, hermitian_eigen, identity, matmul, max_scaled_norm, norm, normalized_trace, psd_calculus, real, Matrix, PsdFunction,
    Scalar, Tolerances, Vector,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExpectationKind {
    /// Hilbert–Schmidt orthogonal projection onto the subalgebra; preserves
    /// the normalized ambient trace.
    TracePreserving,
    /// Given by its values on the basis of the big algebra.
    Custom,
}

/// A conditional expectation `E: A → B` stored through its values on the
/// orthonormal basis of `A`.
#[derive(Debug, Clone)]
pub struct CondExpectation {
    inclusion: Inclusion,
    kind: ExpectationKind,
    images: Vec<Matrix>,
    images_flat: Matrix,
}

/// Worst violations of the conditional-expectation axioms.
#[derive(Debug, Clone, PartialEq)]
pub struct VerificationReport {
    pub idempotency: f64,
    pub range: f64,
    pub fixes_subalgebra: f64,
    pub unitality: f64,
    /// Relative to `‖b‖ ‖x‖`.
    pub bimodule: f64,
    /// Magnitude of the most negative eigenvalue of `E(x* x)` over samples.
    pub positivity: f64,
    /// Smallest `‖E(x* x)‖ / ‖x* x‖` over samples; strictly positive when
    /// `E` is faithful.
    pub faithfulness: f64,
    pub samples: usize,
    pub passed: bool,
}

impl VerificationReport {
    /// The first failing axiom with its residual, if any.
    pub fn failure(&self, tol: &Tolerances) -> Option<(&'static str, f64)> {
        [
            ("idempotency", self.idempotency),
            ("range in subalgebra", self.range),
            ("fixes subalgebra", self.fixes_subalgebra),
            ("unitality", self.unitality),
            ("bimodule property", self.bimodule),
            ("positivity", self.positivity),
        ]
        .into_iter()
        .find(|(_, v)| !(*v < tol.eq_tol))
        .or(if self.faithfulness > tol.rank_tol {
            None
        } else {
            Some(("faithfulness", self.faithfulness))
        })
    }
}

impl CondExpectation {
    /// The trace-preserving expectation: HS-orthogonal projection of `A`
    /// onto `B`, verified before return.
    pub fn trace_preserving(inclusion: Inclusion, tol: &Tolerances) -> Result<Self> {
        let images: Vec<Matrix> = inclusion
            .big
            .basis()
            .iter()
            .map(|a| inclusion.small.project(a))
            .collect();
        let images_flat = columns_of(&images, inclusion.ambient_dim());
        let e = CondExpectation {
            inclusion,
            kind: ExpectationKind::TracePreserving,
            images,
            images_flat,
        };
        e.check(tol)?;
        Ok(e)
    }

    /// An expectation given by its values on the basis of `A`; the axioms
    /// are verified before return.
    pub fn custom(inclusion: Inclusion, images: Vec<Matrix>, tol: &Tolerances) -> Result<Self> {
        let e = CondExpectation::from_images_unchecked(inclusion, images)?;
        e.check(tol)?;
        Ok(e)
    }

    /// Builds the linear map without checking any axiom. Useful for
    /// diagnosing candidate maps with [`CondExpectation::verify`].
    pub fn from_images_unchecked(inclusion: Inclusion, images: Vec<Matrix>) -> Result<Self> {
        if images.len() != inclusion.big.dim() {
            return Err(Error::Argument(format!(
                "expected {} basis images, got {}",
                inclusion.big.dim(),
                images.len()
            )));
        }
        let n = inclusion.ambient_dim();
        if images.iter().any(|m| m.nrows() != n || m.ncols() != n) {
            return Err(Error::Dimension("basis image has the wrong shape".into()));
        }
        let images_flat = columns_of(&images, n);
        Ok(CondExpectation {
            inclusion,
            kind: ExpectationKind::Custom,
            images,
            images_flat,
        })
    }

    fn check(&self, tol: &Tolerances) -> Result<()> {
        let report = self.verify_basis(tol);
        match report.failure(tol) {
            Some((axiom, residual)) => Err(Error::construction(axiom, residual)),
            None => Ok(()),
        }
    }

    pub fn inclusion(&self) -> &Inclusion {
        &self.inclusion
    }

    pub fn big(&self) -> &Arc<StarAlgebra> {
        &self.inclusion.big
    }

    pub fn small(&self) -> &Arc<StarAlgebra> {
        &self.inclusion.small
    }

    pub fn kind(&self) -> ExpectationKind {
        self.kind
    }

    pub fn images(&self) -> &[Matrix] {
        &self.images
    }

    pub fn ambient_dim(&self) -> usize {
        self.inclusion.ambient_dim()
    }

    /// `E(x)` for `x ∈ A`. Inputs outside `A` are first projected onto `A`.
    pub fn apply(&self, x: &Matrix) -> Matrix {
        match self.kind {
            // B ⊆ A, so projecting onto B also projects out the part outside A.
            ExpectationKind::TracePreserving => self.inclusion.small.project(x),
            ExpectationKind::Custom => {
                let c = Vector::from_vec(self.inclusion.big.coefficients(x));
                let n = self.ambient_dim();
                Matrix::from_column_slice(n, n, (&self.images_flat * c).as_slice())
            }
        }
    }

    /// `E` on each element of `xs`, computed with two matrix products.
    pub fn apply_many(&self, xs: &[Matrix]) -> Vec<Matrix> {
        match self.kind {
            ExpectationKind::TracePreserving => self.inclusion.small.project_many(xs),
            ExpectationKind::Custom => {
                let c = self.inclusion.big.coefficient_columns(xs);
                unflatten(&matmul(&self.images_flat, &c), self.ambient_dim())
            }
        }
    }

    /// The faithful state `τ ∘ E`, `τ` the normalized ambient trace.
    pub fn state(&self, x: &Matrix) -> Scalar {
        normalized_trace(&self.apply(x))
    }

    /// Density of the state on `A`: `D = n⁻¹ Σ_k τ(E(b_k)) b_k*`, so that
    /// `τ(E(y)) = Tr(D y)` for every `y ∈ A`.
    pub fn state_density(&self) -> Matrix {
        let n = self.ambient_dim();
        let mut d = Matrix::zeros(n, n);
        for (b, img) in self.big().basis().iter().zip(&self.images) {
            d += b.adjoint() * normalized_trace(img);
        }
        d / real(n as f64)
    }

    /// Deterministic axiom checks on basis elements and generators.
    fn verify_basis(&self, tol: &Tolerances) -> VerificationReport {
        let a = &self.inclusion.big;
        let b = &self.inclusion.small;
        let n = self.ambient_dim();
        let differences = |xs: &[Matrix], targets: &[Matrix]| -> f64 {
            max_scaled_norm(
                self.apply_many(xs)
                    .into_iter()
                    .zip(targets)
                    .map(|(ex, t)| (ex - t, 1.0)),
            )
        };
        let idempotency = differences(&self.images, &self.images);
        let range = self
            .images
            .iter()
            .map(|img| b.residual(img))
            .fold(0.0, f64::max);
        let fixes_subalgebra = differences(b.basis(), b.basis());
        let unitality = norm(&(self.apply(&identity(n)) - identity(n)));
        let left_right: Vec<Matrix> = if b.generators().is_empty() {
            b.basis().to_vec()
        } else {
            b.generators().to_vec()
        };
        let basis_norms: Vec<f64> = a.basis().iter().map(|x| norm(x).max(f64::MIN_POSITIVE)).collect();
        let mut bimodule: f64 = 0.0;
        for g in &left_right {
            let ng = norm(g).max(f64::MIN_POSITIVE);
            let left: Vec<Matrix> = a.basis().iter().map(|x| matmul(g, x)).collect();
            let right: Vec<Matrix> = a.basis().iter().map(|x| matmul(x, g)).collect();
            let (el, er) = (self.apply_many(&left), self.apply_many(&right));
            let residuals = self.images.iter().enumerate().flat_map(|(i, ex)| {
                let scale = ng * basis_norms[i];
                [
                    (&el[i] - matmul(g, ex), scale),
                    (&er[i] - matmul(ex, g), scale),
                ]
            });
            bimodule = bimodule.max(max_scaled_norm(residuals));
        }
        let mut positivity: f64 = 0.0;
        let mut faithfulness = f64::INFINITY;
        for x in a.basis() {
            let (p, f) = self.positivity_probe(x, tol);
            positivity = positivity.max(p);
            faithfulness = faithfulness.min(f);
        }
        let mut report = VerificationReport {
            idempotency,
            range,
            fixes_subalgebra,
            unitality,
            bimodule,
            positivity,
            faithfulness,
            samples: 0,
            passed: false,
        };
        report.passed = report.failure(tol).is_none();
        report
    }

    fn positivity_probe(&self, x: &Matrix, _tol: &Tolerances) -> (f64, f64) {
        let xx = x.adjoint() * x;
        let exx = self.apply(&xx);
        let (values, _) = hermitian_eigen(&exx);
        let neg = values.first().map(|&l| (-l).max(0.0)).unwrap_or(0.0);
        let ratio = norm(&exx) / norm(&xx).max(f64::MIN_POSITIVE);
        (neg, ratio)
    }

    /// Full diagnostic: basis and generator checks plus `samples` seeded
    /// random elements for the bimodule, positivity and faithfulness probes.
    pub fn verify(&self, samples: usize, seed: u64, tol: &Tolerances) -> VerificationReport {
        let mut report = self.verify_basis(tol);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = &self.inclusion.big;
        let b = &self.inclusion.small;
        for _ in 0..samples {
            let x = random_element(&mut rng, a);
            let b1 = random_element(&mut rng, b);
            let b2 = random_element(&mut rng, b);
            let lhs = self.apply(&(&b1 * &x * &b2));
            let rhs = &b1 * self.apply(&x) * &b2;
            let scale = (norm(&b1) * norm(&x) * norm(&b2)).max(f64::MIN_POSITIVE);
            report.bimodule = report.bimodule.max(norm(&(lhs - rhs)) / scale);
            let (p, f) = self.positivity_probe(&x, tol);
            report.positivity = report.positivity.max(p);
            report.faithfulness = report.faithfulness.min(f);
        }
        report.samples = samples;
        report.passed = report.failure(tol).is_none();
        report
    }

    /// `E` restricted to an intermediate algebra `B ⊆ P ⊆ A`, as an
    /// expectation `P → B`.
    pub fn restrict(&self, p: Arc<StarAlgebra>, tol: &Tolerances) -> Result<CondExpectation> {
        let inclusion = Inclusion::new(p.clone(), self.small().clone(), tol)?;
        match self.kind {
            ExpectationKind::TracePreserving => CondExpectation::trace_preserving(inclusion, tol),
            ExpectationKind::Custom => {
                let images = p.basis().iter().map(|x| self.apply(x)).collect();
                CondExpectation::custom(inclusion, images, tol)
            }
        }
    }
}

impl CondExpectation {
    /// `E ⊗ id` on `A ⊗ M_k` with range `B ⊗ M_k`.
    pub fn tensor_by_factor(&self, k: usize, tol: &Tolerances) -> Result<CondExpectation> {
        let big = Arc::new(self.big().tensor_by_factor(k, tol)?);
        let small = Arc::new(self.small().tensor_by_factor(k, tol)?);
        let inclusion = Inclusion::new(big.clone(), small, tol)?;
        match self.kind {
            ExpectationKind::TracePreserving => CondExpectation::trace_preserving(inclusion, tol),
            ExpectationKind::Custom => {
                let n = self.ambient_dim();
                let images = big
                    .basis()
                    .iter()
                    .map(|y| {
                        let mut out = Matrix::zeros(n * k, n * k);
                        for s in 0..k {
                            for t in 0..k {
                                let block = Matrix::from_fn(n, n, |r, c| y[(r * k + s, c * k + t)]);
                                let mut unit = Matrix::zeros(k, k);
                                unit[(s, t)] = Scalar::new(1.0, 0.0);
                                out += self.apply(&block).kronecker(&unit);
                            }
                        }
                        out
                    })
                    .collect();
                CondExpectation::custom(inclusion, images, tol)
            }
        }
    }
}

/// Random element of `alg` with standard complex Gaussian coordinates,
/// scaled to unit normalized HS norm.
pub fn random_element<R: Rng + ?Sized>(rng: &mut R, alg: &StarAlgebra) -> Matrix {
    let coeffs: Vec<Scalar> = (0..alg.dim())
        .map(|_| Scalar::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect();
    let norm = coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    let coeffs: Vec<Scalar> = coeffs.iter().map(|c| c / real(norm)).collect();
    alg.element(&coeffs)
}

/// An intermediate `B ⊆ P ⊆ A` together with `F: A → P` and `E|_P: P → B`
/// satisfying `E|_P ∘ F = E`.
#[derive(Debug, Clone)]
pub struct CompatibleIntermediate {
    pub algebra: Arc<StarAlgebra>,
    pub f: CondExpectation,
    pub e_restricted: CondExpectation,
    /// `max ‖E|_P(F(a)) − E(a)‖` over the basis of `A`.
    pub compatibility_residual: f64,
}

/// `F` as the `φ`-orthogonal projection onto `P`, `φ = τ ∘ E`. With the
/// density `D` of `φ`, `φ(q* x) = Tr(q* x D)`, so the Gram matrix and the
/// right-hand sides are plain products.
fn state_projection(e: &CondExpectation, p: &Arc<StarAlgebra>, tol: &Tolerances) -> Result<Vec<Matrix>> {
    let n = e.ambient_dim();
    let density = e.state_density();
    let times_density = |ms: &[Matrix]| {
        let shifted: Vec<Matrix> = ms.iter().map(|m| matmul(m, &density)).collect();
        columns_of(&shifted, n)
    };
    let p_flat = columns_of(p.basis(), n);
    let gram = ad_matmul(&p_flat, &times_density(p.basis()));
    let gram = (&gram + gram.adjoint()).scale(0.5);
    let ginv = psd_calculus(&gram, PsdFunction::Inv, tol)?;
    let rhs = ad_matmul(&p_flat, &times_density(e.big().basis()));
    Ok(unflatten(&matmul(&p_flat, &matmul(&ginv, &rhs)), n))
}

/// Builds the compatible pair `(F, E|_P)` for an intermediate `P`.
pub fn make_compatible(
    e: &CondExpectation,
    p: Arc<StarAlgebra>,
    tol: &Tolerances,
) -> Result<CompatibleIntermediate> {
    if !p.contains_algebra(e.small(), tol) {
        return Err(Error::Containment("intermediate does not contain B".into()));
    }
    if !e.big().contains_algebra(&p, tol) {
        return Err(Error::Containment("intermediate is not inside A".into()));
    }
    let to_p = Inclusion::new(e.big().clone(), p.clone(), tol)?;
    let f = match e.kind() {
        ExpectationKind::TracePreserving => CondExpectation::trace_preserving(to_p, tol)?,
        ExpectationKind::Custom => {
            let images = state_projection(e, &p, tol)?;
            let candidate = CondExpectation::from_images_unchecked(to_p, images)?;
            let report = candidate.verify_basis(tol);
            if let Some((_, residual)) = report.failure(tol) {
                return Err(Error::Incompatible { residual });
            }
            candidate
        }
    };
    let e_restricted = e.restrict(p.clone(), tol)?;
    let compatibility_residual = max_scaled_norm(
        e_restricted
            .apply_many(f.images())
            .into_iter()
            .zip(e.images())
            .map(|(efa, ea)| (efa - ea, 1.0)),
    );
    if compatibility_residual >= tol.eq_tol {
        return Err(Error::Incompatible {
            residual: compatibility_residual,
        });
    }
    Ok(CompatibleIntermediate {
        algebra: p,
        f,
        e_restricted,
        compatibility_residual,
    })
}

/// Best `γ` found with `γ E(x) ≥ x` forced, i.e. the largest
/// `λ_max(E(x)^{-1/2} x E(x)^{-1/2})` over the positive elements visited.
fn index_ratio(e: &CondExpectation, x: &Matrix, tol: &Tolerances) -> f64 {
    let h = e.apply(x);
    let h = (&h + h.adjoint()).scale(0.5);
    let Ok(s) = psd_calculus(&h, PsdFunction::PinvSqrt, tol) else {
        return 0.0;
    };
    let m = &s * x * &s;
    let (values, _) = hermitian_eigen(&m);
    values.last().copied().unwrap_or(0.0)
}

/// Spectral projections of a positive `x ∈ A`; each one is a polynomial in
/// `x` and therefore lies in `A`.
fn spectral_projections(x: &Matrix) -> Vec<Matrix> {
    let (values, vectors) = hermitian_eigen(x);
    let top = values.iter().cloned().fold(0.0, f64::max).max(1e-300);
    let mut out = Vec::new();
    let mut start = 0;
    while start < values.len() {
        let mut end = start + 1;
        while end < values.len() && (values[end] - values[start]).abs() <= 1e-8 * top {
            end += 1;
        }
        let n = x.nrows();
        let mut p = Matrix::zeros(n, n);
        for k in start..end {
            let v = vectors.column(k);
            p += v * v.adjoint();
        }
        out.push(p);
        start = end;
    }
    out
}

fn trial_seed(master: u64, trial: u64) -> u64 {
    // splitmix64 step
    let mut z = master.wrapping_add(trial.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn single_trial(e: &CondExpectation, seed: u64, tol: &Tolerances) -> f64 {
    let a = e.big();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let y = random_element(&mut rng, a);
    let x = y.adjoint() * &y;
    let mut best_x = x.clone();
    let mut best = index_ratio(e, &x, tol);
    for p in spectral_projections(&x) {
        let (inside, _) = a.contains(&p, &Tolerances { eq_tol: 1e-7, ..*tol });
        if !inside {
            continue;
        }
        let r = index_ratio(e, &p, tol);
        if r > best {
            best = r;
            best_x = p;
        }
    }
    let n = a.ambient_dim();
    let mut step = 0.3;
    for _ in 0..60 {
        let z = random_element(&mut rng, a);
        let g = identity(n) + z * real(step);
        let candidate = g.adjoint() * &best_x * &g;
        let r = index_ratio(e, &candidate, tol);
        if r > best {
            best = r;
            best_x = candidate;
        } else {
            step *= 0.85;
        }
    }
    best
}

/// Lower-bound estimate of the probabilistic index `Ind_p(E)`.
///
/// Each trial starts from a random positive `x = y* y` in `A`, also tries
/// the spectral projections of `x`, then runs a multiplicative perturbation
/// ascent `x ← (1 + tZ)* x (1 + tZ)`. The result is the best ratio over all
/// trials, so it never decreases as `trials` grows.
pub fn ind_p_estimate(e: &CondExpectation, trials: usize, seed: u64, tol: &Tolerances) -> f64 {
    let trials = trials.max(1);
    let mut best = index_ratio(e, &identity(e.ambient_dim()), tol);
    for t in 0..trials {
        best = best.max(single_trial(e, trial_seed(seed, t as u64), tol));
    }
    best
}

/// Running maxima of the estimator over `1..=trials`.
pub fn ind_p_trace(e: &CondExpectation, trials: usize, seed: u64, tol: &Tolerances) -> Vec<f64> {
    let mut best = index_ratio(e, &identity(e.ambient_dim()), tol);
    (0..trials)
        .map(|t| {
            best = best.max(single_trial(e, trial_seed(seed, t as u64), tol));
            best
        })
        .collect()
}
