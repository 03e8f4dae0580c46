//! Finite permutation groups stored as explicit, canonically sorted element
//! lists.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use crate::error::{Error, Result};

/// Default bound on the group order accepted by subgroup enumeration.
pub const DEFAULT_ENUMERATION_BOUND: usize = 48;

/// A permutation of `{0, …, n-1}` given by its image array.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Perm {
    images: Vec<usize>,
}

impl Perm {
    pub fn identity(degree: usize) -> Self {
        Perm {
            images: (0..degree).collect(),
        }
    }

    pub fn from_images(images: Vec<usize>) -> Result<Self> {
        let n = images.len();
        let mut seen = vec![false; n];
        for &i in &images {
            if i >= n || seen[i] {
                return Err(Error::Argument(format!(
                    "image array {images:?} is not a bijection"
                )));
            }
            seen[i] = true;
        }
        Ok(Perm { images })
    }

    /// Builds a permutation from 0-based disjoint cycles.
    pub fn from_cycles(degree: usize, cycles: &[Vec<usize>]) -> Result<Self> {
        let mut images: Vec<usize> = (0..degree).collect();
        let mut used = vec![false; degree];
        for cycle in cycles {
            for (k, &a) in cycle.iter().enumerate() {
                if a >= degree {
                    return Err(Error::Argument(format!(
                        "point {} outside 1..={degree}",
                        a + 1
                    )));
                }
                if used[a] {
                    return Err(Error::Argument(format!(
                        "point {} repeated in cycle notation",
                        a + 1
                    )));
                }
                used[a] = true;
                images[a] = cycle[(k + 1) % cycle.len()];
            }
        }
        Ok(Perm { images })
    }

    /// Parses disjoint-cycle notation with 1-based points, e.g. `"(1 2 3)(4 5)"`.
    /// `"()"` and the empty string denote the identity.
    pub fn parse_cycles(degree: usize, text: &str) -> Result<Self> {
        let mut cycles = Vec::new();
        let mut current: Option<Vec<usize>> = None;
        let mut number = String::new();
        let chars: Vec<char> = text.chars().collect();
        let parse_err = |pos: usize, msg: &str| {
            Error::Argument(format!("cycle parse error at position {pos}: {msg} in {text:?}"))
        };
        let flush = |number: &mut String, current: &mut Option<Vec<usize>>, pos: usize| {
            if number.is_empty() {
                return Ok(());
            }
            let value: usize = number
                .parse()
                .map_err(|_| parse_err(pos, "invalid number"))?;
            if value == 0 {
                return Err(parse_err(pos, "points are 1-based"));
            }
            current
                .as_mut()
                .ok_or_else(|| parse_err(pos, "number outside parentheses"))?
                .push(value - 1);
            number.clear();
            Ok(())
        };
        for (pos, &c) in chars.iter().enumerate() {
            match c {
                '(' => {
                    if current.is_some() {
                        return Err(parse_err(pos, "nested '('"));
                    }
                    current = Some(Vec::new());
                }
                ')' => {
                    flush(&mut number, &mut current, pos)?;
                    let cycle = current
                        .take()
                        .ok_or_else(|| parse_err(pos, "unmatched ')'"))?;
                    if !cycle.is_empty() {
                        cycles.push(cycle);
                    }
                }
                ' ' | ',' | '\t' => flush(&mut number, &mut current, pos)?,
                d if d.is_ascii_digit() => {
                    if current.is_none() {
                        return Err(parse_err(pos, "number outside parentheses"));
                    }
                    number.push(d);
                }
                other => {
                    return Err(parse_err(pos, &format!("unexpected character {other:?}")));
                }
            }
        }
        if current.is_some() {
            return Err(parse_err(chars.len(), "unterminated cycle"));
        }
        Perm::from_cycles(degree, &cycles)
    }

    pub fn degree(&self) -> usize {
        self.images.len()
    }

    pub fn images(&self) -> &[usize] {
        &self.images
    }

    pub fn apply(&self, point: usize) -> usize {
        self.images[point]
    }

    /// `self ∘ other`: first `other`, then `self`.
    pub fn compose(&self, other: &Perm) -> Perm {
        Perm {
            images: other.images.iter().map(|&i| self.images[i]).collect(),
        }
    }

    pub fn inverse(&self) -> Perm {
        let mut images = vec![0; self.images.len()];
        for (i, &j) in self.images.iter().enumerate() {
            images[j] = i;
        }
        Perm { images }
    }

    pub fn is_identity(&self) -> bool {
        self.images.iter().enumerate().all(|(i, &j)| i == j)
    }

    /// Order in the symmetric group: lcm of the cycle lengths.
    pub fn order(&self) -> usize {
        fn gcd(a: usize, b: usize) -> usize {
            if b == 0 {
                a
            } else {
                gcd(b, a % b)
            }
        }
        self.cycles()
            .iter()
            .map(Vec::len)
            .fold(1, |acc, len| acc / gcd(acc, len) * len)
    }

    /// Disjoint cycles of length ≥ 2, 0-based, each starting at its least point.
    pub fn cycles(&self) -> Vec<Vec<usize>> {
        let mut seen = vec![false; self.images.len()];
        let mut out = Vec::new();
        for start in 0..self.images.len() {
            if seen[start] {
                continue;
            }
            let mut cycle = vec![start];
            seen[start] = true;
            let mut j = self.images[start];
            while j != start {
                seen[j] = true;
                cycle.push(j);
                j = self.images[j];
            }
            if cycle.len() > 1 {
                out.push(cycle);
            }
        }
        out
    }
}

impl fmt::Display for Perm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let cycles = self.cycles();
        if cycles.is_empty() {
            return write!(f, "()");
        }
        for c in cycles {
            let pts: Vec<String> = c.iter().map(|p| (p + 1).to_string()).collect();
            write!(f, "({})", pts.join(" "))?;
        }
        Ok(())
    }
}

/// A finite permutation group with its elements listed in lexicographic
/// order of their image arrays. The identity is therefore always first.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PermGroup {
    degree: usize,
    elements: Vec<Perm>,
}

impl PermGroup {
    pub fn trivial(degree: usize) -> Self {
        PermGroup {
            degree,
            elements: vec![Perm::identity(degree)],
        }
    }

    /// Smallest group containing `generators`, by orbit closure under right
    /// multiplication.
    pub fn closure(degree: usize, generators: &[Perm]) -> Result<Self> {
        for g in generators {
            if g.degree() != degree {
                return Err(Error::Argument(format!(
                    "generator {g} acts on {} points, expected {degree}",
                    g.degree()
                )));
            }
        }
        let mut seen: BTreeSet<Perm> = BTreeSet::new();
        let id = Perm::identity(degree);
        seen.insert(id.clone());
        let mut queue = VecDeque::from([id]);
        while let Some(x) = queue.pop_front() {
            for g in generators {
                let y = x.compose(g);
                if seen.insert(y.clone()) {
                    queue.push_back(y);
                }
            }
        }
        Ok(PermGroup {
            degree,
            elements: seen.into_iter().collect(),
        })
    }

    pub fn from_cycle_strings(degree: usize, generators: &[&str]) -> Result<Self> {
        let gens = generators
            .iter()
            .map(|s| Perm::parse_cycles(degree, s))
            .collect::<Result<Vec<_>>>()?;
        PermGroup::closure(degree, &gens)
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn order(&self) -> usize {
        self.elements.len()
    }

    /// A small generating set, chosen greedily: elements of larger order
    /// first, each kept only if it enlarges the subgroup generated so far.
    /// Empty for the trivial group.
    pub fn generating_set(&self) -> Vec<Perm> {
        let mut candidates: Vec<&Perm> = self.elements.iter().filter(|p| !p.is_identity()).collect();
        candidates.sort_by_key(|p| std::cmp::Reverse(p.order()));
        let mut gens: Vec<Perm> = Vec::new();
        let mut span = PermGroup::trivial(self.degree);
        for p in candidates {
            if span.order() == self.order() {
                break;
            }
            if !span.contains(p) {
                gens.push(p.clone());
                span = PermGroup::closure(self.degree, &gens).expect("degrees agree");
            }
        }
        gens
    }

    pub fn elements(&self) -> &[Perm] {
        &self.elements
    }

    pub fn position(&self, p: &Perm) -> Option<usize> {
        self.elements.binary_search(p).ok()
    }

    pub fn contains(&self, p: &Perm) -> bool {
        self.position(p).is_some()
    }

    pub fn is_subgroup_of(&self, other: &PermGroup) -> bool {
        self.degree == other.degree && self.elements.iter().all(|p| other.contains(p))
    }

    /// Group axioms checked directly on the element list.
    pub fn is_closed(&self) -> bool {
        self.contains(&Perm::identity(self.degree))
            && self.elements.iter().all(|a| {
                self.contains(&a.inverse())
                    && self.elements.iter().all(|b| self.contains(&a.compose(b)))
            })
    }

    /// `[self : sub]`.
    pub fn index(&self, sub: &PermGroup) -> Result<usize> {
        if !sub.is_subgroup_of(self) {
            return Err(Error::Containment(
                "index requested for a non-subgroup".into(),
            ));
        }
        if !self.order().is_multiple_of(sub.order()) {
            return Err(Error::Internal("Lagrange violated".into()));
        }
        Ok(self.order() / sub.order())
    }

    pub fn intersect(&self, other: &PermGroup) -> Result<PermGroup> {
        if self.degree != other.degree {
            return Err(Error::Argument(format!(
                "degree mismatch {} vs {}",
                self.degree, other.degree
            )));
        }
        Ok(PermGroup {
            degree: self.degree,
            elements: self
                .elements
                .iter()
                .filter(|p| other.contains(p))
                .cloned()
                .collect(),
        })
    }

    /// One representative per left coset `gH`, the least element of each coset.
    pub fn left_coset_representatives(&self, sub: &PermGroup) -> Result<Vec<Perm>> {
        self.index(sub)?;
        let mut covered: BTreeSet<Perm> = BTreeSet::new();
        let mut reps = Vec::new();
        for g in &self.elements {
            if covered.contains(g) {
                continue;
            }
            reps.push(g.clone());
            for h in &sub.elements {
                covered.insert(g.compose(h));
            }
        }
        Ok(reps)
    }

    pub fn conjugacy_class_count(&self) -> usize {
        let mut seen: BTreeSet<Perm> = BTreeSet::new();
        let mut count = 0;
        for x in &self.elements {
            if seen.contains(x) {
                continue;
            }
            count += 1;
            for g in &self.elements {
                seen.insert(g.compose(x).compose(&g.inverse()));
            }
        }
        count
    }

    /// All subgroups `M` with `sub ⊆ M ⊆ self`, endpoints included, ordered by
    /// `(order, elements)`.
    pub fn intermediate_subgroups(&self, sub: &PermGroup, bound: usize) -> Result<Vec<PermGroup>> {
        if self.order() > bound {
            return Err(Error::Size(format!(
                "group order {} exceeds enumeration bound {bound}",
                self.order()
            )));
        }
        if !sub.is_subgroup_of(self) {
            return Err(Error::Containment(
                "lower subgroup is not contained in the group".into(),
            ));
        }
        let mut found: BTreeSet<(usize, Vec<Perm>)> = BTreeSet::new();
        let mut queue = VecDeque::from([sub.clone()]);
        found.insert((sub.order(), sub.elements.clone()));
        while let Some(m) = queue.pop_front() {
            let gens: Vec<Perm> = m.elements.clone();
            for g in &self.elements {
                if m.contains(g) {
                    continue;
                }
                let mut with_g = gens.clone();
                with_g.push(g.clone());
                let bigger = PermGroup::closure(self.degree, &with_g)?;
                if found.insert((bigger.order(), bigger.elements.clone())) {
                    queue.push_back(bigger);
                }
            }
        }
        Ok(found
            .into_iter()
            .map(|(_, elements)| PermGroup {
                degree: self.degree,
                elements,
            })
            .collect())
    }

    /// Cycle-notation strings of all elements, in canonical order.
    pub fn element_labels(&self) -> Vec<String> {
        self.elements.iter().map(|p| p.to_string()).collect()
    }
}

/// Named groups and subgroups used by tests, examples and the CLI.
pub mod presets {
    use super::PermGroup;

    fn g(degree: usize, gens: &[&str]) -> PermGroup {
        PermGroup::from_cycle_strings(degree, gens).expect("preset generators are valid")
    }

    pub fn cyclic2() -> PermGroup {
        g(2, &["(1 2)"])
    }

    pub fn s3() -> PermGroup {
        g(3, &["(1 2)", "(1 2 3)"])
    }

    /// Dihedral group of the square on 4 points, `r = (1 2 3 4)`, `s = (1 3)`.
    pub fn d4() -> PermGroup {
        g(4, &["(1 2 3 4)", "(1 3)"])
    }

    pub fn d4_rotations() -> PermGroup {
        g(4, &["(1 2 3 4)"])
    }

    /// `⟨r²⟩`, the center of D₄.
    pub fn d4_center() -> PermGroup {
        g(4, &["(1 3)(2 4)"])
    }

    /// `⟨r², s⟩`.
    pub fn d4_klein_s() -> PermGroup {
        g(4, &["(1 3)(2 4)", "(1 3)"])
    }

    pub fn s4() -> PermGroup {
        g(4, &["(1 2)", "(1 2 3 4)"])
    }

    /// Normal Klein four-subgroup of S₄.
    pub fn klein_four() -> PermGroup {
        g(4, &["(1 2)(3 4)", "(1 3)(2 4)"])
    }

    pub fn trivial(degree: usize) -> PermGroup {
        PermGroup::trivial(degree)
    }
}
