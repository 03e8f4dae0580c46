//! Scenario files: JSON schema, validation and construction of the
//! inclusion they describe.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use watatani::algebra::{
    crossed_product, fixed_point, group_algebra, CrossedProduct, GroupAction, GroupAlgebra, Inclusion,
    StarAlgebra,
};
use watatani::expectation::CondExpectation;
use watatani::groups::{presets, Perm, PermGroup};
use watatani::linalg::{lstsq_solve, Scalar};
use watatani::{Matrix, Tolerances};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Group,
    CrossedProduct,
    FixedPoint,
    CustomMatrix,
}

/// A complex entry: `[re, im]` or a bare real number.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Entry {
    Complex([f64; 2]),
    Real(f64),
}

pub type MatrixSpec = Vec<Vec<Entry>>;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupSpec {
    /// One of `s3`, `d4`, `s4`, `klein_four`, `cyclic2`.
    pub preset: Option<String>,
    pub degree: Option<usize>,
    pub generators: Option<Vec<String>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgebraSpec {
    pub dim: usize,
    /// One of `full`, `diagonal`, `scalars`.
    pub preset: Option<String>,
    pub generators: Option<Vec<MatrixSpec>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnitarySpec {
    /// Group element in cycle notation.
    pub element: String,
    pub matrix: MatrixSpec,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionSpec {
    /// Permutation matrices on `ℂ^degree`.
    #[serde(default)]
    pub permutation: bool,
    #[serde(default)]
    pub unitaries: Vec<UnitarySpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImagePair {
    pub x: MatrixSpec,
    pub image: MatrixSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpectationSpec {
    /// `trace_preserving` or `images`.
    pub kind: String,
    #[serde(default)]
    pub images: Vec<ImagePair>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Options {
    pub eq_tol: Option<f64>,
    pub rank_tol: Option<f64>,
    pub angle_tol: Option<f64>,
    pub seed: Option<u64>,
    pub tensor_factor: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: Option<String>,
    pub kind: ScenarioKind,
    pub group: Option<GroupSpec>,
    pub h: Option<Vec<String>>,
    pub k: Option<Vec<String>>,
    pub l: Option<Vec<String>>,
    /// Base algebra `M` of a crossed product.
    pub base: Option<AlgebraSpec>,
    /// `A` for `fixed_point` and `custom_matrix`.
    pub algebra: Option<AlgebraSpec>,
    pub action: Option<ActionSpec>,
    /// `B` for `custom_matrix`.
    pub subalgebra: Option<AlgebraSpec>,
    pub p: Option<AlgebraSpec>,
    pub q: Option<AlgebraSpec>,
    pub expectation: Option<ExpectationSpec>,
    #[serde(default)]
    pub options: Options,
}

#[derive(Debug, Clone)]
pub struct Subgroups {
    pub g: PermGroup,
    pub h: PermGroup,
    pub k: Option<PermGroup>,
    pub l: Option<PermGroup>,
}

#[derive(Debug, Clone)]
pub struct ParsedAlgebra {
    pub dim: usize,
    pub preset: Option<String>,
    pub generators: Vec<Matrix>,
}

#[derive(Debug, Clone)]
pub enum ParsedAction {
    Permutation,
    Unitaries(Vec<(Perm, Matrix)>),
}

#[derive(Debug, Clone)]
pub enum ParsedExpectation {
    TracePreserving,
    Images(Vec<(Matrix, Matrix)>),
}

/// A scenario that passed schema and invariant checks; no numerics yet.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub raw: Value,
    pub file: ScenarioFile,
    pub subgroups: Option<Subgroups>,
    pub base: Option<ParsedAlgebra>,
    pub algebra: Option<ParsedAlgebra>,
    pub subalgebra: Option<ParsedAlgebra>,
    pub p: Option<ParsedAlgebra>,
    pub q: Option<ParsedAlgebra>,
    pub action: Option<ParsedAction>,
    pub expectation: Option<ParsedExpectation>,
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

pub fn read_raw(path: &Path) -> Result<Value, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|err| invalid(format!("cannot read {}: {err}", path.display())))?;
    serde_json::from_str(&text).map_err(|err| invalid(format!("{}: {err}", path.display())))
}

pub fn load(path: &Path) -> Result<Scenario, CliError> {
    Scenario::from_value(read_raw(path)?)
}

fn parse_matrix(spec: &MatrixSpec, n: usize, what: &str) -> Result<Matrix, CliError> {
    if spec.len() != n || spec.iter().any(|row| row.len() != n) {
        return Err(invalid(format!("{what}: expected a {n}×{n} matrix")));
    }
    let mut m = Matrix::zeros(n, n);
    for (i, row) in spec.iter().enumerate() {
        for (j, entry) in row.iter().enumerate() {
            let (re, im) = match *entry {
                Entry::Complex([re, im]) => (re, im),
                Entry::Real(re) => (re, 0.0),
            };
            if !re.is_finite() || !im.is_finite() {
                return Err(invalid(format!("{what}: entry ({}, {}) is not finite", i + 1, j + 1)));
            }
            m[(i, j)] = Scalar::new(re, im);
        }
    }
    Ok(m)
}

fn parse_algebra(spec: &AlgebraSpec, what: &str) -> Result<ParsedAlgebra, CliError> {
    if spec.dim == 0 {
        return Err(invalid(format!("{what}: dim must be positive")));
    }
    if let Some(p) = &spec.preset {
        if !matches!(p.as_str(), "full" | "diagonal" | "scalars") {
            return Err(invalid(format!("{what}: unknown preset {p:?}")));
        }
        if spec.generators.is_some() {
            return Err(invalid(format!("{what}: give either a preset or generators")));
        }
    }
    let generators = spec
        .generators
        .iter()
        .flatten()
        .enumerate()
        .map(|(i, m)| parse_matrix(m, spec.dim, &format!("{what}.generators[{i}]")))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ParsedAlgebra {
        dim: spec.dim,
        preset: spec.preset.clone(),
        generators,
    })
}

fn parse_group(spec: &GroupSpec) -> Result<PermGroup, CliError> {
    match (&spec.preset, &spec.generators) {
        (Some(_), Some(_)) => Err(invalid("group: give either a preset or generators")),
        (Some(p), None) => match p.as_str() {
            "s3" => Ok(presets::s3()),
            "d4" => Ok(presets::d4()),
            "s4" => Ok(presets::s4()),
            "klein_four" => Ok(presets::klein_four()),
            "cyclic2" => Ok(presets::cyclic2()),
            other => Err(invalid(format!("group: unknown preset {other:?}"))),
        },
        (None, Some(gens)) => {
            let degree = spec
                .degree
                .ok_or_else(|| invalid("group: degree is required with generators"))?;
            generated(degree, gens, "group")
        }
        (None, None) => Err(invalid("group: needs a preset or generators")),
    }
}

fn generated(degree: usize, gens: &[String], what: &str) -> Result<PermGroup, CliError> {
    let perms = gens
        .iter()
        .enumerate()
        .map(|(i, s)| {
            Perm::parse_cycles(degree, s).map_err(|err| invalid(format!("{what}[{i}] {s:?}: {err}")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    PermGroup::closure(degree, &perms).map_err(|err| invalid(format!("{what}: {err}")))
}

impl Scenario {
    pub fn from_value(raw: Value) -> Result<Scenario, CliError> {
        let file: ScenarioFile =
            serde_json::from_value(raw.clone()).map_err(|err| invalid(format!("schema: {err}")))?;
        let kind = file.kind;
        let needs_group = kind != ScenarioKind::CustomMatrix;
        let subgroups = if needs_group {
            let spec = file
                .group
                .as_ref()
                .ok_or_else(|| invalid("group: required for this kind"))?;
            let g = parse_group(spec)?;
            let sub = |gens: &Option<Vec<String>>, what: &str| -> Result<Option<PermGroup>, CliError> {
                match gens {
                    None => Ok(None),
                    Some(gens) => {
                        let s = generated(g.degree(), gens, what)?;
                        if !s.is_subgroup_of(&g) {
                            return Err(invalid(format!("containment: {what} is not a subgroup of G")));
                        }
                        Ok(Some(s))
                    }
                }
            };
            let h = sub(&file.h, "h")?.unwrap_or_else(|| PermGroup::trivial(g.degree()));
            if kind == ScenarioKind::FixedPoint && file.h.is_some() {
                return Err(invalid("h: not used by fixed_point scenarios (B is the fixed-point algebra)"));
            }
            let k = sub(&file.k, "k")?;
            let l = sub(&file.l, "l")?;
            for (name, s) in [("k", &k), ("l", &l)] {
                if let Some(s) = s {
                    if !h.is_subgroup_of(s) {
                        return Err(invalid(format!("containment: {name} does not contain h")));
                    }
                }
            }
            Some(Subgroups { g, h, k, l })
        } else {
            for (name, present) in [
                ("group", file.group.is_some()),
                ("h", file.h.is_some()),
                ("k", file.k.is_some()),
                ("l", file.l.is_some()),
            ] {
                if present {
                    return Err(invalid(format!("{name}: not used by custom_matrix scenarios")));
                }
            }
            None
        };

        let opt = |spec: &Option<AlgebraSpec>, what: &str| spec.as_ref().map(|s| parse_algebra(s, what)).transpose();
        let base = opt(&file.base, "base")?;
        let algebra = opt(&file.algebra, "algebra")?;
        let subalgebra = opt(&file.subalgebra, "subalgebra")?;
        let p = opt(&file.p, "p")?;
        let q = opt(&file.q, "q")?;

        let require = |present: bool, what: &str| {
            if present {
                Ok(())
            } else {
                Err(invalid(format!("{what}: required for this kind")))
            }
        };
        let forbid = |present: bool, what: &str| {
            if present {
                Err(invalid(format!("{what}: not used by this kind")))
            } else {
                Ok(())
            }
        };
        match kind {
            ScenarioKind::Group => {
                for (name, present) in [
                    ("base", base.is_some()),
                    ("algebra", algebra.is_some()),
                    ("action", file.action.is_some()),
                    ("subalgebra", subalgebra.is_some()),
                    ("p", p.is_some()),
                    ("q", q.is_some()),
                    ("expectation", file.expectation.is_some()),
                ] {
                    forbid(present, name)?;
                }
            }
            ScenarioKind::CrossedProduct | ScenarioKind::FixedPoint => {
                let (needed, unused) = if kind == ScenarioKind::CrossedProduct {
                    (("base", base.is_some()), ("algebra", algebra.is_some()))
                } else {
                    (("algebra", algebra.is_some()), ("base", base.is_some()))
                };
                require(needed.1, needed.0)?;
                forbid(unused.1, unused.0)?;
                require(file.action.is_some(), "action")?;
                for (name, present) in [
                    ("subalgebra", subalgebra.is_some()),
                    ("p", p.is_some()),
                    ("q", q.is_some()),
                    ("expectation", file.expectation.is_some()),
                ] {
                    forbid(present, name)?;
                }
            }
            ScenarioKind::CustomMatrix => {
                require(algebra.is_some(), "algebra")?;
                require(subalgebra.is_some(), "subalgebra")?;
                forbid(base.is_some(), "base")?;
                forbid(file.action.is_some(), "action")?;
                let n = algebra.as_ref().map(|a| a.dim);
                for (name, a) in [("subalgebra", &subalgebra), ("p", &p), ("q", &q)] {
                    if let Some(a) = a {
                        if Some(a.dim) != n {
                            return Err(invalid(format!("{name}: dim must equal algebra.dim")));
                        }
                    }
                }
            }
        }

        let action = match (&file.action, &subgroups) {
            (Some(spec), Some(sg)) => {
                let m = match kind {
                    ScenarioKind::CrossedProduct => base.as_ref().map(|b| b.dim),
                    _ => algebra.as_ref().map(|a| a.dim),
                }
                .expect("checked above");
                Some(parse_action(spec, &sg.g, m)?)
            }
            _ => None,
        };

        let expectation = match &file.expectation {
            None => None,
            Some(spec) => {
                let n = algebra.as_ref().map(|a| a.dim).expect("custom_matrix has an algebra");
                Some(match spec.kind.as_str() {
                    "trace_preserving" => {
                        if !spec.images.is_empty() {
                            return Err(invalid("expectation: images given for a trace_preserving expectation"));
                        }
                        ParsedExpectation::TracePreserving
                    }
                    "images" => {
                        if spec.images.is_empty() {
                            return Err(invalid("expectation: images must not be empty"));
                        }
                        let pairs = spec
                            .images
                            .iter()
                            .enumerate()
                            .map(|(i, pair)| {
                                Ok((
                                    parse_matrix(&pair.x, n, &format!("expectation.images[{i}].x"))?,
                                    parse_matrix(&pair.image, n, &format!("expectation.images[{i}].image"))?,
                                ))
                            })
                            .collect::<Result<Vec<_>, CliError>>()?;
                        ParsedExpectation::Images(pairs)
                    }
                    other => return Err(invalid(format!("expectation: unknown kind {other:?}"))),
                })
            }
        };

        let o = &file.options;
        for (name, v) in [("eq_tol", o.eq_tol), ("rank_tol", o.rank_tol), ("angle_tol", o.angle_tol)] {
            if let Some(v) = v {
                if !(v.is_finite() && v > 0.0) {
                    return Err(invalid(format!("options.{name}: must be finite and positive")));
                }
            }
        }
        if o.tensor_factor == Some(0) {
            return Err(invalid("options.tensor_factor: must be at least 1"));
        }

        Ok(Scenario {
            raw,
            file,
            subgroups,
            base,
            algebra,
            subalgebra,
            p,
            q,
            action,
            expectation,
        })
    }

    pub fn kind(&self) -> ScenarioKind {
        self.file.kind
    }

    pub fn has_pair(&self) -> bool {
        match &self.subgroups {
            Some(sg) => sg.k.is_some() && sg.l.is_some(),
            None => self.p.is_some() && self.q.is_some(),
        }
    }
}

fn parse_action(spec: &ActionSpec, g: &PermGroup, m: usize) -> Result<ParsedAction, CliError> {
    match (spec.permutation, spec.unitaries.is_empty()) {
        (true, true) => {
            if m != g.degree() {
                return Err(invalid(format!(
                    "action: permutation action needs dimension {} (the group degree), found {m}",
                    g.degree()
                )));
            }
            Ok(ParsedAction::Permutation)
        }
        (false, false) => {
            let gens = spec
                .unitaries
                .iter()
                .enumerate()
                .map(|(i, u)| {
                    let p = Perm::parse_cycles(g.degree(), &u.element)
                        .map_err(|err| invalid(format!("action.unitaries[{i}].element: {err}")))?;
                    if !g.contains(&p) {
                        return Err(invalid(format!("action.unitaries[{i}].element is not in G")));
                    }
                    Ok((p, parse_matrix(&u.matrix, m, &format!("action.unitaries[{i}].matrix"))?))
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok(ParsedAction::Unitaries(gens))
        }
        _ => Err(invalid("action: give exactly one of permutation or unitaries")),
    }
}

/// Maps subgroups `H ≤ K ≤ G` to intermediate algebras.
#[derive(Debug, Clone)]
pub enum Family {
    Group(GroupAlgebra),
    Crossed(CrossedProduct),
    Fixed {
        algebra: Arc<StarAlgebra>,
        action: GroupAction,
    },
}

impl Family {
    pub fn algebra_for(&self, sub: &PermGroup, tol: &Tolerances) -> watatani::Result<Arc<StarAlgebra>> {
        match self {
            Family::Group(ga) => ga.subalgebra(sub, tol),
            Family::Crossed(cp) => cp.subalgebra(sub, tol),
            Family::Fixed { algebra, action } => {
                let g = action.group();
                let gens: Vec<(Perm, Matrix)> = sub
                    .elements()
                    .iter()
                    .map(|x| (x.clone(), action.unitary(g.position(x).expect("subgroup")).clone()))
                    .collect();
                let restricted = GroupAction::from_generators(sub.clone(), &gens, tol)?;
                Ok(fixed_point(algebra.clone(), &restricted, tol)?.0)
            }
        }
    }

    /// Whether the group closed forms apply (`ℂ[H] ⊂ ℂ[G]` and crossed
    /// products with their canonical expectation).
    pub fn has_group_oracle(&self) -> bool {
        !matches!(self, Family::Fixed { .. })
    }
}

/// The numerical objects a scenario describes.
#[derive(Debug, Clone)]
pub struct Setup {
    pub e: CondExpectation,
    pub p: Option<Arc<StarAlgebra>>,
    pub q: Option<Arc<StarAlgebra>>,
    pub family: Option<Family>,
    pub tensor_factor: usize,
}

impl Setup {
    pub fn tensor(&self, a: Arc<StarAlgebra>, tol: &Tolerances) -> watatani::Result<Arc<StarAlgebra>> {
        if self.tensor_factor == 1 {
            Ok(a)
        } else {
            Ok(Arc::new(a.tensor_by_factor(self.tensor_factor, tol)?))
        }
    }

    pub fn intermediate_for(&self, sub: &PermGroup, tol: &Tolerances) -> watatani::Result<Arc<StarAlgebra>> {
        let family = self
            .family
            .as_ref()
            .ok_or_else(|| watatani::Error::Argument("scenario has no subgroup family".into()))?;
        self.tensor(family.algebra_for(sub, tol)?, tol)
    }
}

fn build_algebra(spec: &ParsedAlgebra, tol: &Tolerances) -> watatani::Result<Arc<StarAlgebra>> {
    let n = spec.dim;
    let alg = match spec.preset.as_deref() {
        Some("full") => StarAlgebra::full(n),
        Some("diagonal") => StarAlgebra::diagonal(n),
        Some("scalars") => StarAlgebra::scalars(n),
        _ => StarAlgebra::from_generators(n, &spec.generators, tol)?,
    };
    Ok(Arc::new(alg))
}

fn build_action(parsed: &ParsedAction, g: &PermGroup, tol: &Tolerances) -> watatani::Result<GroupAction> {
    match parsed {
        ParsedAction::Permutation => Ok(GroupAction::permutation(g.clone())),
        ParsedAction::Unitaries(gens) => GroupAction::from_generators(g.clone(), gens, tol),
    }
}

/// Fits the linear map `x ↦ image` on the basis of `A` from the given pairs.
fn images_on_basis(a: &StarAlgebra, pairs: &[(Matrix, Matrix)], tol: &Tolerances) -> watatani::Result<Vec<Matrix>> {
    let xs: Vec<Matrix> = pairs.iter().map(|(x, _)| x.clone()).collect();
    a.basis()
        .iter()
        .map(|b| {
            let fit = lstsq_solve(&xs, b, tol)?;
            if fit.residual >= tol.eq_tol {
                return Err(watatani::Error::Argument(format!(
                    "expectation images do not span the algebra (residual {:.3e})",
                    fit.residual
                )));
            }
            let n = a.ambient_dim();
            let mut out = Matrix::zeros(n, n);
            for ((_, img), c) in pairs.iter().zip(fit.coefficients.iter()) {
                out += img * *c;
            }
            Ok(out)
        })
        .collect()
}

impl Scenario {
    pub fn build(&self, tol: &Tolerances) -> watatani::Result<Setup> {
        let tensor_factor = self.file.options.tensor_factor.unwrap_or(1);
        let (e, family) = match self.kind() {
            ScenarioKind::Group => {
                let sg = self.subgroups.as_ref().expect("validated");
                let ga = group_algebra(&sg.g, tol)?;
                let b = ga.subalgebra(&sg.h, tol)?;
                let e = CondExpectation::trace_preserving(Inclusion::new(ga.algebra.clone(), b, tol)?, tol)?;
                (e, Family::Group(ga))
            }
            ScenarioKind::CrossedProduct => {
                let sg = self.subgroups.as_ref().expect("validated");
                let base = build_algebra(self.base.as_ref().expect("validated"), tol)?;
                let action = build_action(self.action.as_ref().expect("validated"), &sg.g, tol)?;
                let cp = crossed_product(base, action, tol)?;
                let b = cp.subalgebra(&sg.h, tol)?;
                let e = CondExpectation::trace_preserving(Inclusion::new(cp.algebra.clone(), b, tol)?, tol)?;
                (e, Family::Crossed(cp))
            }
            ScenarioKind::FixedPoint => {
                let sg = self.subgroups.as_ref().expect("validated");
                let algebra = build_algebra(self.algebra.as_ref().expect("validated"), tol)?;
                let action = build_action(self.action.as_ref().expect("validated"), &sg.g, tol)?;
                let (_, e) = fixed_point(algebra.clone(), &action, tol)?;
                (e, Family::Fixed { algebra, action })
            }
            ScenarioKind::CustomMatrix => {
                let a = build_algebra(self.algebra.as_ref().expect("validated"), tol)?;
                let b = build_algebra(self.subalgebra.as_ref().expect("validated"), tol)?;
                let inclusion = Inclusion::new(a.clone(), b, tol)?;
                let e = match self.expectation.as_ref().unwrap_or(&ParsedExpectation::TracePreserving) {
                    ParsedExpectation::TracePreserving => CondExpectation::trace_preserving(inclusion, tol)?,
                    ParsedExpectation::Images(pairs) => {
                        let images = images_on_basis(&a, pairs, tol)?;
                        CondExpectation::custom(inclusion, images, tol)?
                    }
                };
                let p = self.p.as_ref().map(|s| build_algebra(s, tol)).transpose()?;
                let q = self.q.as_ref().map(|s| build_algebra(s, tol)).transpose()?;
                let mut setup = Setup {
                    e: tensor_expectation(e, tensor_factor, tol)?,
                    p: None,
                    q: None,
                    family: None,
                    tensor_factor,
                };
                setup.p = p.map(|p| setup.tensor(p, tol)).transpose()?;
                setup.q = q.map(|q| setup.tensor(q, tol)).transpose()?;
                return Ok(setup);
            }
        };
        let mut setup = Setup {
            e: tensor_expectation(e, tensor_factor, tol)?,
            p: None,
            q: None,
            family: Some(family),
            tensor_factor,
        };
        let sg = self.subgroups.as_ref().expect("validated");
        if let Some(k) = &sg.k {
            setup.p = Some(setup.intermediate_for(k, tol)?);
        }
        if let Some(l) = &sg.l {
            setup.q = Some(setup.intermediate_for(l, tol)?);
        }
        Ok(setup)
    }
}

fn tensor_expectation(e: CondExpectation, k: usize, tol: &Tolerances) -> watatani::Result<CondExpectation> {
    if k == 1 {
        Ok(e)
    } else {
        e.tensor_by_factor(k, tol)
    }
}
