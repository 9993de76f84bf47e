//! Fock-space mechanics: creation/annihilation modes over a graded Frobenius
//! algebra, sparse state vectors, and finitely-presented operator
//! expressions.
//!
//! States are spanned by monomials in creation modes applied to the vacuum.
//! A creation factor of mode `n >= 1` and class `alpha` raises the level by
//! `n`, the cohomological degree by `|alpha| + 2(n-1)`, and the age by
//! `n - 1`.  The two sign conventions differ only in the central term of the
//! commutator between an annihilator and a creator of the same mode:
//!
//! * `Hilbert`:  `[a_m, a_{-m}] = -m <.,.>  (m > 0)`
//! * `Orbifold`: `[p_m, p_{-m}] = +m <.,.>`
//!
//! Operator expressions are finite lists of terms `c * modes(tensor)` plus an
//! optional locally finite family: a generator that materializes, per input
//! level, the finitely many terms of an infinite sum that can act there.
//! All classes are even, so factors commute up to central terms and no
//! Koszul signs appear anywhere.

use crate::frobenius::{AlgebraElement, GradedFrobeniusAlgebra, TensorElement};
use crate::scalar::{Rational, Scalar};
use num::bigint::BigInt;
use num::traits::One;
use std::collections::BTreeMap;
use std::fmt;
use std::sync::{Arc, Mutex};

/// Which central sign the mode algebra uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum CentralSign {
    /// Hilbert-scheme side: `[a_m, a_{-m}] = -m <.,.>`, letter `a`.
    Hilbert,
    /// Symmetric-product side: `[p_m, p_{-m}] = +m <.,.>`, letter `p`.
    Orbifold,
}

impl CentralSign {
    /// Central factor picked up when the annihilator of mode `m > 0` crosses
    /// a creator of the same mode (before the class pairing).
    pub fn central_factor(self, m: i64) -> i64 {
        match self {
            CentralSign::Hilbert => -m,
            CentralSign::Orbifold => m,
        }
    }

    /// Sign of the adjoint of a creation factor of mode `n`:
    /// `a_{-n}^+ = (-1)^n a_n` on the Hilbert side, `p_{-n}^+ = p_n` on the
    /// orbifold side.
    pub fn adjoint_sign(self, n: u32) -> i64 {
        match self {
            CentralSign::Hilbert => {
                if n.is_multiple_of(2) {
                    1
                } else {
                    -1
                }
            }
            CentralSign::Orbifold => 1,
        }
    }

    /// Display letter for mode factors.
    pub fn mode_letter(self) -> char {
        match self {
            CentralSign::Hilbert => 'a',
            CentralSign::Orbifold => 'p',
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FockError {
    #[error("tensor arity {arity} does not match mode count {modes}")]
    ArityMismatch { arity: usize, modes: usize },
    #[error("the empty generalized partition does not index an operator")]
    EmptyPartition,
    #[error("{denominator:?} is not a submonomial of {numerator:?}")]
    NotASubmonomial {
        numerator: String,
        denominator: String,
    },
    #[error("mode 0 is not a valid creation or annihilation index")]
    ZeroMode,
}

// ---------------------------------------------------------------------------
// Generalized partitions
// ---------------------------------------------------------------------------

/// A multiset of nonzero integers: negative parts index creators, positive
/// parts annihilators.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Default)]
pub struct GeneralizedPartition {
    parts: BTreeMap<i64, u32>,
}

impl GeneralizedPartition {
    pub fn empty() -> Self {
        GeneralizedPartition::default()
    }

    pub fn new(parts: &[i64]) -> Result<Self, FockError> {
        let mut map = BTreeMap::new();
        for &p in parts {
            if p == 0 {
                return Err(FockError::ZeroMode);
            }
            *map.entry(p).or_insert(0) += 1;
        }
        Ok(GeneralizedPartition { parts: map })
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    /// `l(lambda)`: total number of parts.
    pub fn length(&self) -> usize {
        self.parts.values().map(|&m| m as usize).sum()
    }

    /// `|lambda|`: weighted sum of parts.
    pub fn weight(&self) -> i64 {
        self.parts.iter().map(|(&p, &m)| p * m as i64).sum()
    }

    /// `s(lambda)`: sum of squared parts.
    pub fn square_sum(&self) -> i64 {
        self.parts.iter().map(|(&p, &m)| p * p * m as i64).sum()
    }

    /// `lambda^!`: product of the factorials of the multiplicities.
    pub fn symmetry_factorial(&self) -> Rational {
        let mut out = BigInt::one();
        for &m in self.parts.values() {
            for f in 2..=m as u64 {
                out *= f;
            }
        }
        Rational::from_integer(out)
    }

    /// Modes in canonical operator order: ascending as integers, so all
    /// creators stand left of all annihilators.
    pub fn mode_string(&self) -> Vec<i64> {
        let mut out = Vec::with_capacity(self.length());
        for (&p, &m) in &self.parts {
            for _ in 0..m {
                out.push(p);
            }
        }
        out
    }

    pub fn multiplicity(&self, part: i64) -> u32 {
        self.parts.get(&part).copied().unwrap_or(0)
    }

    pub fn parts(&self) -> impl Iterator<Item = (i64, u32)> + '_ {
        self.parts.iter().map(|(&p, &m)| (p, m))
    }

    /// Text form `(-2, 1, 1)`: canonical ascending order.
    pub fn text(&self) -> String {
        let body = self
            .mode_string()
            .iter()
            .map(|m| m.to_string())
            .collect::<Vec<_>>()
            .join(", ");
        format!("({body})")
    }
}

/// Ordinary partitions of `total` into exactly `count` parts, each part at
/// least 1, in deterministic order.
pub fn partitions_exact(total: i64, count: usize) -> Vec<Vec<i64>> {
    fn rec(total: i64, count: usize, max: i64, prefix: &mut Vec<i64>, out: &mut Vec<Vec<i64>>) {
        if count == 0 {
            if total == 0 {
                out.push(prefix.clone());
            }
            return;
        }
        // Parts are listed non-increasing; the next part is at most `max`
        // and at least ceil(total / count) feasibility keeps recursion short.
        let mut part = max.min(total - (count as i64 - 1));
        while part >= 1 && part * count as i64 >= total {
            prefix.push(part);
            rec(total - part, count - 1, part, prefix, out);
            prefix.pop();
            part -= 1;
        }
    }
    let mut out = Vec::new();
    if total == 0 && count == 0 {
        out.push(Vec::new());
        return out;
    }
    if total <= 0 || count == 0 {
        return out;
    }
    let mut prefix = Vec::new();
    rec(total, count, total, &mut prefix, &mut out);
    out
}

/// All generalized partitions with the given length and weight whose
/// annihilation budget (sum of positive parts) is at most `annih_budget`.
/// These are exactly the partitions that can act on states of level
/// `annih_budget` without immediately killing them.
pub fn partitions_with(length: usize, weight: i64, annih_budget: i64) -> Vec<GeneralizedPartition> {
    let mut out = Vec::new();
    if annih_budget < 0 {
        return out;
    }
    for annih_count in 0..=length {
        let create_count = length - annih_count;
        for annih_total in 0..=annih_budget {
            let create_total = annih_total - weight;
            if create_total < 0 {
                continue;
            }
            let annih_parts = partitions_exact(annih_total, annih_count);
            if annih_parts.is_empty() {
                continue;
            }
            let create_parts = partitions_exact(create_total, create_count);
            for nu in &annih_parts {
                for mu in &create_parts {
                    let mut parts: Vec<i64> = mu.iter().map(|&p| -p).collect();
                    parts.extend_from_slice(nu);
                    out.push(
                        GeneralizedPartition::new(&parts)
                            .expect("enumerated parts are nonzero"),
                    );
                }
            }
        }
    }
    out.sort();
    out.dedup();
    out
}

// ---------------------------------------------------------------------------
// Monomials and vectors
// ---------------------------------------------------------------------------

/// A product of creation factors applied to the vacuum, in canonical order:
/// modes descending, basis index ascending within a mode.  The pair
/// `(n, b)` stands for the creation operator of mode `-n` on basis class
/// `b`; `n >= 1` always.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct NakajimaMonomial {
    factors: Vec<(u32, usize)>,
}

impl NakajimaMonomial {
    pub fn vacuum() -> Self {
        NakajimaMonomial::default()
    }

    pub fn new(factors: &[(u32, usize)]) -> Self {
        assert!(
            factors.iter().all(|&(n, _)| n >= 1),
            "creation modes are at least 1"
        );
        let mut sorted = factors.to_vec();
        sorted.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        NakajimaMonomial { factors: sorted }
    }

    pub fn is_vacuum(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn factor_count(&self) -> usize {
        self.factors.len()
    }

    pub fn factors(&self) -> &[(u32, usize)] {
        &self.factors
    }

    /// Sum of creation modes.
    pub fn level(&self) -> u32 {
        self.factors.iter().map(|&(n, _)| n).sum()
    }

    /// Sum of `mode - 1` over the factors.
    pub fn age(&self) -> u32 {
        self.factors.iter().map(|&(n, _)| n - 1).sum()
    }

    /// Cohomological degree: sum of `|class| + 2(mode - 1)`.
    pub fn degree(&self, alg: &GradedFrobeniusAlgebra) -> u32 {
        self.factors
            .iter()
            .map(|&(n, b)| alg.degree_of(b) + 2 * (n - 1))
            .sum()
    }

    pub fn with_factor(&self, mode: u32, basis: usize) -> Self {
        assert!(mode >= 1, "creation modes are at least 1");
        let mut factors = self.factors.clone();
        factors.push((mode, basis));
        factors.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        NakajimaMonomial { factors }
    }

    pub fn remove_one(&self, mode: u32, basis: usize) -> Option<Self> {
        let pos = self.factors.iter().position(|&f| f == (mode, basis))?;
        let mut factors = self.factors.clone();
        factors.remove(pos);
        Some(NakajimaMonomial { factors })
    }

    /// Factor multiset union; levels and ages add.
    pub fn concat(&self, other: &Self) -> Self {
        let mut factors = self.factors.clone();
        factors.extend_from_slice(&other.factors);
        factors.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        NakajimaMonomial { factors }
    }

    /// Multiset difference: `self / other`, defined when every factor of
    /// `other` occurs in `self` with at least its multiplicity.
    pub fn divide(&self, other: &Self) -> Result<Self, FockError> {
        let mut factors = self.factors.clone();
        for f in &other.factors {
            match factors.iter().position(|g| g == f) {
                Some(pos) => {
                    factors.remove(pos);
                }
                None => {
                    return Err(FockError::NotASubmonomial {
                        numerator: format!("{:?}", self.factors),
                        denominator: format!("{:?}", other.factors),
                    })
                }
            }
        }
        Ok(NakajimaMonomial { factors })
    }

    /// Distinct factors with multiplicities, in storage order.
    pub fn factor_groups(&self) -> Vec<((u32, usize), u32)> {
        let mut out: Vec<((u32, usize), u32)> = Vec::new();
        for &f in &self.factors {
            match out.last_mut() {
                Some((g, m)) if *g == f => *m += 1,
                _ => out.push((f, 1)),
            }
        }
        out
    }

    /// Render with basis names, e.g. `a[-2](h) a[-1](1) |0>`.
    pub fn display_with(&self, alg: &GradedFrobeniusAlgebra, letter: char) -> String {
        let mut out = String::new();
        for &(n, b) in &self.factors {
            out.push_str(&format!("{letter}[-{n}]({}) ", alg.basis()[b].name));
        }
        out.push_str("|0>");
        out
    }
}

/// Sparse Fock-space vector: zero coefficients are pruned eagerly, so the
/// zero vector is the empty map and equality is structural.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FockVector {
    terms: BTreeMap<NakajimaMonomial, Scalar>,
}

impl FockVector {
    pub fn zero() -> Self {
        FockVector::default()
    }

    pub fn vacuum() -> Self {
        FockVector::monomial(NakajimaMonomial::vacuum(), Scalar::one())
    }

    pub fn monomial(m: NakajimaMonomial, c: Scalar) -> Self {
        let mut v = FockVector::zero();
        v.add_term(m, c);
        v
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn term_count(&self) -> usize {
        self.terms.len()
    }

    pub fn coeff(&self, m: &NakajimaMonomial) -> Scalar {
        self.terms.get(m).cloned().unwrap_or_else(Scalar::zero)
    }

    pub fn terms(&self) -> impl Iterator<Item = (&NakajimaMonomial, &Scalar)> {
        self.terms.iter()
    }

    pub fn add_term(&mut self, m: NakajimaMonomial, c: Scalar) {
        if c.is_zero() {
            return;
        }
        match self.terms.entry(m) {
            std::collections::btree_map::Entry::Occupied(mut slot) => {
                *slot.get_mut() += c;
                if slot.get().is_zero() {
                    slot.remove();
                }
            }
            std::collections::btree_map::Entry::Vacant(slot) => {
                slot.insert(c);
            }
        }
    }

    pub fn add_scaled(&mut self, other: &FockVector, factor: &Scalar) {
        if factor.is_zero() {
            return;
        }
        for (m, c) in &other.terms {
            self.add_term(m.clone(), c * factor);
        }
    }

    pub fn add_assign(&mut self, other: &FockVector) {
        self.add_scaled(other, &Scalar::one());
    }

    pub fn scaled(&self, factor: &Scalar) -> FockVector {
        let mut out = FockVector::zero();
        out.add_scaled(self, factor);
        out
    }

    pub fn minus(&self, other: &FockVector) -> FockVector {
        let mut out = self.clone();
        out.add_scaled(other, &-Scalar::one());
        out
    }

    /// Level of a level-homogeneous vector; `None` for 0 or mixed levels.
    pub fn homogeneous_level(&self) -> Option<u32> {
        let mut levels = self.terms.keys().map(|m| m.level());
        let first = levels.next()?;
        levels.all(|l| l == first).then_some(first)
    }

    /// Cohomological degree of a degree-homogeneous vector.
    pub fn homogeneous_degree(&self, alg: &GradedFrobeniusAlgebra) -> Option<u32> {
        let mut degrees = self.terms.keys().map(|m| m.degree(alg));
        let first = degrees.next()?;
        degrees.all(|d| d == first).then_some(first)
    }

    /// Split into level-homogeneous buckets.
    pub fn split_levels(&self) -> BTreeMap<u32, FockVector> {
        let mut out: BTreeMap<u32, FockVector> = BTreeMap::new();
        for (m, c) in &self.terms {
            out.entry(m.level())
                .or_default()
                .add_term(m.clone(), c.clone());
        }
        out
    }

    /// Canonical text form: terms in monomial order joined by ` + `, complex
    /// coefficients parenthesized, unit coefficients omitted.
    pub fn display_with(&self, alg: &GradedFrobeniusAlgebra, letter: char) -> String {
        if self.terms.is_empty() {
            return "0".to_string();
        }
        self.terms
            .iter()
            .map(|(m, c)| {
                let body = m.display_with(alg, letter);
                if *c == Scalar::one() {
                    body
                } else if c.is_real() {
                    format!("{} {}", c.file_string(), body)
                } else {
                    format!("({}) {}", c.file_string(), body)
                }
            })
            .collect::<Vec<_>>()
            .join(" + ")
    }
}

// ---------------------------------------------------------------------------
// Mode application
// ---------------------------------------------------------------------------

/// Apply a single mode with a fixed basis class: creation for `mode < 0`,
/// annihilation for `mode > 0` (which walks the factors of each monomial and
/// contracts against equal-mode creators with the central factor and the
/// class pairing).
pub fn apply_single_mode(
    sign: CentralSign,
    alg: &GradedFrobeniusAlgebra,
    mode: i64,
    basis: usize,
    v: &FockVector,
) -> FockVector {
    assert!(mode != 0, "mode 0 never appears");
    let mut out = FockVector::zero();
    if mode < 0 {
        let n = (-mode) as u32;
        for (m, c) in v.terms() {
            out.add_term(m.with_factor(n, basis), c.clone());
        }
        return out;
    }
    let n = mode as u32;
    let central = Scalar::from_int(sign.central_factor(mode));
    let pairing = alg.pairing_matrix();
    for (m, c) in v.terms() {
        for ((fn_mode, fn_basis), mult) in m.factor_groups() {
            if fn_mode != n {
                continue;
            }
            let pair_value = &pairing[basis][fn_basis];
            if pair_value.is_zero() {
                continue;
            }
            let coeff = &(c * &central) * &(pair_value * &Scalar::from_int(mult as i64));
            if coeff.is_zero() {
                continue;
            }
            let reduced = m
                .remove_one(fn_mode, fn_basis)
                .expect("factor group member exists");
            out.add_term(reduced, coeff);
        }
    }
    out
}

/// Apply a mode string against a coefficient tensor: the result is
/// `sum over tensor entries (b_1 .. b_k) of  c * mode_1(e_{b_1}) ... mode_k(e_{b_k}) v`,
/// with the rightmost mode acting first.
pub fn apply_modes(
    sign: CentralSign,
    alg: &GradedFrobeniusAlgebra,
    modes: &[i64],
    tensor: &TensorElement,
    v: &FockVector,
) -> Result<FockVector, FockError> {
    if modes.len() != tensor.arity() {
        return Err(FockError::ArityMismatch {
            arity: tensor.arity(),
            modes: modes.len(),
        });
    }
    if modes.contains(&0) {
        return Err(FockError::ZeroMode);
    }
    Ok(apply_modes_rec(sign, alg, modes, tensor, v))
}

fn apply_modes_rec(
    sign: CentralSign,
    alg: &GradedFrobeniusAlgebra,
    modes: &[i64],
    tensor: &TensorElement,
    v: &FockVector,
) -> FockVector {
    if v.is_zero() {
        return FockVector::zero();
    }
    if modes.is_empty() {
        return v.scaled(&tensor.scalar_value());
    }
    let (last, head) = modes.split_last().expect("nonempty modes");
    let mut out = FockVector::zero();
    for (basis, sub) in tensor.split_last_slot() {
        let w = apply_single_mode(sign, alg, *last, basis, v);
        if w.is_zero() {
            continue;
        }
        out.add_assign(&apply_modes_rec(sign, alg, head, &sub, &w));
    }
    out
}

// ---------------------------------------------------------------------------
// Operator expressions
// ---------------------------------------------------------------------------

/// One summand of an operator expression: `coeff * modes(tensor)`.
#[derive(Debug, Clone)]
pub struct OperatorTerm {
    coeff: Scalar,
    modes: Vec<i64>,
    tensor: TensorElement,
}

impl OperatorTerm {
    pub fn new(coeff: Scalar, modes: Vec<i64>, tensor: TensorElement) -> Result<Self, FockError> {
        if modes.len() != tensor.arity() {
            return Err(FockError::ArityMismatch {
                arity: tensor.arity(),
                modes: modes.len(),
            });
        }
        if modes.contains(&0) {
            return Err(FockError::ZeroMode);
        }
        Ok(OperatorTerm {
            coeff,
            modes,
            tensor,
        })
    }

    pub fn modes(&self) -> &[i64] {
        &self.modes
    }

    pub fn apply(
        &self,
        sign: CentralSign,
        alg: &GradedFrobeniusAlgebra,
        v: &FockVector,
    ) -> FockVector {
        if self.coeff.is_zero() {
            return FockVector::zero();
        }
        apply_modes_rec(sign, alg, &self.modes, &self.tensor, v).scaled(&self.coeff)
    }

    pub fn scaled(mut self, factor: &Scalar) -> Self {
        self.coeff = &self.coeff * factor;
        self
    }
}

type FamilyFn = dyn Fn(u32) -> Vec<OperatorTerm> + Send + Sync;

/// A linear operator presented as finitely many explicit terms plus an
/// optional locally finite family materialized per input level and cached.
pub struct OperatorExpr {
    sign: CentralSign,
    alg: Arc<GradedFrobeniusAlgebra>,
    label: String,
    finite: Vec<OperatorTerm>,
    family: Option<Arc<FamilyFn>>,
    materialized: Mutex<BTreeMap<u32, Arc<Vec<OperatorTerm>>>>,
}

impl fmt::Debug for OperatorExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OperatorExpr")
            .field("label", &self.label)
            .field("sign", &self.sign)
            .field("finite_terms", &self.finite.len())
            .field("has_family", &self.family.is_some())
            .finish()
    }
}

impl OperatorExpr {
    pub fn new_finite(
        sign: CentralSign,
        alg: Arc<GradedFrobeniusAlgebra>,
        label: impl Into<String>,
        terms: Vec<OperatorTerm>,
    ) -> Self {
        OperatorExpr {
            sign,
            alg,
            label: label.into(),
            finite: terms,
            family: None,
            materialized: Mutex::new(BTreeMap::new()),
        }
    }

    pub fn new_family(
        sign: CentralSign,
        alg: Arc<GradedFrobeniusAlgebra>,
        label: impl Into<String>,
        finite: Vec<OperatorTerm>,
        family: Arc<FamilyFn>,
    ) -> Self {
        OperatorExpr {
            sign,
            alg,
            label: label.into(),
            finite,
            family: Some(family),
            materialized: Mutex::new(BTreeMap::new()),
        }
    }

    pub fn zero(sign: CentralSign, alg: Arc<GradedFrobeniusAlgebra>) -> Self {
        OperatorExpr::new_finite(sign, alg, "0", Vec::new())
    }

    pub fn sign(&self) -> CentralSign {
        self.sign
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn algebra(&self) -> &Arc<GradedFrobeniusAlgebra> {
        &self.alg
    }

    fn family_terms(&self, level: u32) -> Option<Arc<Vec<OperatorTerm>>> {
        let family = self.family.as_ref()?;
        if let Some(hit) = self
            .materialized
            .lock()
            .expect("operator cache poisoned")
            .get(&level)
        {
            return Some(hit.clone());
        }
        let terms = Arc::new(family(level));
        Some(
            self.materialized
                .lock()
                .expect("operator cache poisoned")
                .entry(level)
                .or_insert(terms)
                .clone(),
        )
    }

    /// Apply to a vector.  Finite terms see the whole input; family terms
    /// are materialized per level bucket.
    pub fn apply(&self, v: &FockVector) -> FockVector {
        let mut out = FockVector::zero();
        for term in &self.finite {
            out.add_assign(&term.apply(self.sign, &self.alg, v));
        }
        if self.family.is_some() {
            for (level, bucket) in v.split_levels() {
                let terms = self.family_terms(level).expect("family present");
                for term in terms.iter() {
                    out.add_assign(&term.apply(self.sign, &self.alg, &bucket));
                }
            }
        }
        out
    }

    /// Rescale every term (drops the materialization cache).
    pub fn scaled(self, factor: Scalar) -> Self {
        let OperatorExpr {
            sign,
            alg,
            label,
            finite,
            family,
            ..
        } = self;
        let finite = finite
            .into_iter()
            .map(|t| t.scaled(&factor))
            .collect::<Vec<_>>();
        let family = family.map(|f| {
            let factor = factor.clone();
            Arc::new(move |level: u32| {
                f(level)
                    .into_iter()
                    .map(|t| t.scaled(&factor))
                    .collect::<Vec<_>>()
            }) as Arc<FamilyFn>
        });
        OperatorExpr {
            sign,
            alg,
            label,
            finite,
            family,
            materialized: Mutex::new(BTreeMap::new()),
        }
    }

    /// Sum of two operators under the same sign convention.
    pub fn plus(self, other: OperatorExpr) -> Self {
        assert_eq!(self.sign, other.sign, "cannot mix sign conventions");
        let label = format!("{} + {}", self.label, other.label);
        let mut finite = self.finite;
        finite.extend(other.finite);
        let family = match (self.family, other.family) {
            (None, None) => None,
            (Some(f), None) | (None, Some(f)) => Some(f),
            (Some(f), Some(g)) => Some(Arc::new(move |level: u32| {
                let mut terms = f(level);
                terms.extend(g(level));
                terms
            }) as Arc<FamilyFn>),
        };
        OperatorExpr {
            sign: self.sign,
            alg: self.alg,
            label,
            finite,
            family,
            materialized: Mutex::new(BTreeMap::new()),
        }
    }
}

/// `F G v - G F v`.
pub fn commutator(f: &OperatorExpr, g: &OperatorExpr, v: &FockVector) -> FockVector {
    assert_eq!(f.sign(), g.sign(), "cannot mix sign conventions");
    let mut out = f.apply(&g.apply(v));
    out.add_scaled(&g.apply(&f.apply(v)), &-Scalar::one());
    out
}

/// The operator `a_lambda(tau_* alpha)`: the modes of `lambda` in canonical
/// ascending order against the `l(lambda)`-th coproduct of `alpha`.
pub fn a_lambda_tau(
    sign: CentralSign,
    alg: &Arc<GradedFrobeniusAlgebra>,
    lambda: &GeneralizedPartition,
    alpha: &AlgebraElement,
) -> Result<OperatorExpr, FockError> {
    if lambda.is_empty() {
        return Err(FockError::EmptyPartition);
    }
    let modes = lambda.mode_string();
    let tensor = alg.coproduct(alpha, lambda.length());
    let term = OperatorTerm::new(Scalar::one(), modes, tensor)?;
    Ok(OperatorExpr::new_finite(
        sign,
        alg.clone(),
        format!("modes{}(tau*)", lambda.text()),
        vec![term],
    ))
}

/// The normal-ordered cubic zero-mode sum: over all ordered triples of
/// nonzero modes summing to zero, the normally ordered product against the
/// third coproduct of `alpha`.  Materialized per level `L` with all modes
/// bounded by `L` in absolute value; larger annihilators kill the state and
/// larger creators cannot appear in a weight-zero triple within budget.
pub fn cube_zero_mode(
    sign: CentralSign,
    alg: &Arc<GradedFrobeniusAlgebra>,
    alpha: &AlgebraElement,
) -> OperatorExpr {
    let tensor = Arc::new(alg.coproduct(alpha, 3));
    let family = {
        let tensor = tensor.clone();
        Arc::new(move |level: u32| {
            let bound = level as i64;
            let mut terms = Vec::new();
            // Sorted triples m1 <= m2 <= m3, nonzero, summing to zero,
            // weighted by the number of ordered rearrangements.  Sorting
            // ascending is exactly normal order: creators to the left.
            for m1 in -bound..=bound {
                if m1 == 0 {
                    continue;
                }
                for m2 in m1..=bound {
                    if m2 == 0 {
                        continue;
                    }
                    let m3 = -(m1 + m2);
                    if m3 == 0 || m3 < m2 || m3 > bound {
                        continue;
                    }
                    let orderings = if m1 == m2 && m2 == m3 {
                        1
                    } else if m1 == m2 || m2 == m3 {
                        3
                    } else {
                        6
                    };
                    terms.push(
                        OperatorTerm::new(
                            Scalar::from_int(orderings),
                            vec![m1, m2, m3],
                            (*tensor).clone(),
                        )
                        .expect("modes are nonzero and arity matches"),
                    );
                }
            }
            terms
        }) as Arc<FamilyFn>
    };
    OperatorExpr::new_family(sign, alg.clone(), ":m^3:_0", Vec::new(), family)
}

/// Closed-form commutator of two coproduct-contracted mode strings:
///
/// `[modes_f(tau_* alpha), modes_g(tau_* beta)]` equals the sum over pairs
/// `(t, j)` with `f_t = -g_j` of the central factor of `f_t` times the mode
/// string `g_1 .. g_{j-1}, f_1 .. (t omitted) .. f_k, g_{j+1} .. g_s`
/// against `tau_{(k+s-2)*}(alpha*beta)`.
pub fn tau_commutator(
    sign: CentralSign,
    alg: &Arc<GradedFrobeniusAlgebra>,
    modes_f: &[i64],
    alpha: &AlgebraElement,
    modes_g: &[i64],
    beta: &AlgebraElement,
) -> Result<OperatorExpr, FockError> {
    if modes_f.iter().chain(modes_g.iter()).any(|&m| m == 0) {
        return Err(FockError::ZeroMode);
    }
    if modes_f.is_empty() || modes_g.is_empty() {
        // A scalar multiple of the identity commutes with everything.
        return Ok(OperatorExpr::zero(sign, alg.clone()));
    }
    let product = alg.multiply(alpha, beta);
    let arity = modes_f.len() + modes_g.len() - 2;
    let tensor = alg.coproduct(&product, arity);
    let mut terms = Vec::new();
    for (t, &ft) in modes_f.iter().enumerate() {
        for (j, &gj) in modes_g.iter().enumerate() {
            if ft != -gj {
                continue;
            }
            let mut modes = Vec::with_capacity(arity);
            modes.extend_from_slice(&modes_g[..j]);
            for (u, &fu) in modes_f.iter().enumerate() {
                if u != t {
                    modes.push(fu);
                }
            }
            modes.extend_from_slice(&modes_g[j + 1..]);
            let coeff = Scalar::from_int(sign.central_factor(ft));
            terms.push(OperatorTerm::new(coeff, modes, tensor.clone())?);
        }
    }
    Ok(OperatorExpr::new_finite(
        sign,
        alg.clone(),
        format!("[{modes_f:?}(tau*), {modes_g:?}(tau*)]"),
        terms,
    ))
}

/// Bilinear Fock pairing.  Creation adjoints are `(-1)^n a_n` on the Hilbert
/// side and `p_n` on the orbifold side; monomials of different levels pair
/// to zero.
pub fn fock_pair(
    sign: CentralSign,
    alg: &GradedFrobeniusAlgebra,
    v: &FockVector,
    w: &FockVector,
) -> Scalar {
    let mut out = Scalar::zero();
    let vacuum = NakajimaMonomial::vacuum();
    for (m, cm) in v.terms() {
        // Adjoint of the whole monomial: product of per-factor signs.
        let mut adjoint_sign = 1i64;
        for &(n, _) in m.factors() {
            adjoint_sign *= sign.adjoint_sign(n);
        }
        for (n_mono, cn) in w.terms() {
            if m.level() != n_mono.level() {
                continue;
            }
            let mut state = FockVector::monomial(n_mono.clone(), Scalar::one());
            for &(mode, basis) in m.factors() {
                state = apply_single_mode(sign, alg, mode as i64, basis, &state);
                if state.is_zero() {
                    break;
                }
            }
            let amplitude = state.coeff(&vacuum);
            if amplitude.is_zero() {
                continue;
            }
            out += &(cm * cn) * &(amplitude * Scalar::from_int(adjoint_sign));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frobenius::fixtures;
    use proptest::prelude::*;

    fn p2() -> Arc<GradedFrobeniusAlgebra> {
        fixtures::p2()
    }

    fn h() -> AlgebraElement {
        AlgebraElement::basis(1)
    }

    fn unit() -> AlgebraElement {
        AlgebraElement::basis(0)
    }

    #[test]
    fn partition_statistics() {
        let lambda = GeneralizedPartition::new(&[1, 1, 2]).unwrap();
        assert_eq!(lambda.length(), 3);
        assert_eq!(lambda.weight(), 4);
        assert_eq!(lambda.square_sum(), 6);
        assert_eq!(
            lambda.symmetry_factorial(),
            Rational::from_integer(BigInt::from(2))
        );
        assert_eq!(lambda.mode_string(), vec![1, 1, 2]);
        assert_eq!(lambda.text(), "(1, 1, 2)");
    }

    #[test]
    fn partition_rejects_zero_parts() {
        assert_eq!(
            GeneralizedPartition::new(&[1, 0]).unwrap_err(),
            FockError::ZeroMode
        );
    }

    #[test]
    fn partition_enumeration_small() {
        let pairs = partitions_with(2, 0, 3);
        let texts: Vec<String> = pairs.iter().map(|p| p.text()).collect();
        assert_eq!(texts, vec!["(-3, 3)", "(-2, 2)", "(-1, 1)"]);
        // Weight -1, length 2: one creator carries the excess.
        let neg = partitions_with(2, -1, 3);
        let texts: Vec<String> = neg.iter().map(|p| p.text()).collect();
        assert_eq!(texts, vec!["(-4, 3)", "(-3, 2)", "(-2, 1)"]);
        // Length 0 admits exactly the empty partition at weight 0.
        assert_eq!(partitions_with(0, 0, 5), vec![GeneralizedPartition::empty()]);
        assert!(partitions_with(0, 1, 5).is_empty());
    }

    #[test]
    fn partitions_exact_basics() {
        assert_eq!(partitions_exact(0, 0), vec![Vec::<i64>::new()]);
        assert!(partitions_exact(3, 0).is_empty());
        assert_eq!(partitions_exact(4, 2), vec![vec![3, 1], vec![2, 2]]);
    }

    #[test]
    fn monomial_invariants() {
        let alg = p2();
        let m = NakajimaMonomial::new(&[(1, 0), (2, 1)]);
        assert_eq!(m.level(), 3);
        assert_eq!(m.age(), 1);
        assert_eq!(m.degree(&alg), 4); // (2 + 2*1) + (0 + 0)
        assert_eq!(m.display_with(&alg, 'a'), "a[-2](h) a[-1](1) |0>");
    }

    #[test]
    fn monomial_concat_and_divide() {
        let a = NakajimaMonomial::new(&[(2, 1), (1, 0)]);
        let b = NakajimaMonomial::new(&[(1, 0)]);
        let joined = a.concat(&b);
        assert_eq!(joined.level(), a.level() + b.level());
        assert_eq!(joined.divide(&b).unwrap(), a);
        let c = NakajimaMonomial::new(&[(3, 0)]);
        assert!(matches!(
            a.divide(&c),
            Err(FockError::NotASubmonomial { .. })
        ));
    }

    proptest! {
        #[test]
        fn concat_divide_round_trip(
            a_modes in proptest::collection::vec((1u32..4, 0usize..3), 0..4),
            b_modes in proptest::collection::vec((1u32..4, 0usize..3), 0..4),
        ) {
            let a = NakajimaMonomial::new(&a_modes);
            let b = NakajimaMonomial::new(&b_modes);
            let joined = a.concat(&b);
            prop_assert_eq!(joined.divide(&b).unwrap(), a.clone());
            prop_assert_eq!(joined.divide(&a).unwrap(), b.clone());
            prop_assert_eq!(joined.level(), a.level() + b.level());
            prop_assert_eq!(joined.age(), a.age() + b.age());
        }
    }

    #[test]
    fn single_commutator_both_signs() {
        let alg = p2();
        // a_1(h) a_{-1}(h) |0> picks up the central term only.
        let tensor = TensorElement::monomial(&[1, 1], Scalar::one());
        let hilbert = apply_modes(
            CentralSign::Hilbert,
            &alg,
            &[1, -1],
            &tensor,
            &FockVector::vacuum(),
        )
        .unwrap();
        assert_eq!(hilbert, FockVector::vacuum().scaled(&Scalar::from_int(-1)));
        let orbifold = apply_modes(
            CentralSign::Orbifold,
            &alg,
            &[1, -1],
            &tensor,
            &FockVector::vacuum(),
        )
        .unwrap();
        assert_eq!(orbifold, FockVector::vacuum());
    }

    #[test]
    fn mode_two_commutator_weights_by_mode() {
        let alg = p2();
        let tensor = TensorElement::monomial(&[1, 1], Scalar::one());
        let got = apply_modes(
            CentralSign::Hilbert,
            &alg,
            &[2, -2],
            &tensor,
            &FockVector::vacuum(),
        )
        .unwrap();
        assert_eq!(got, FockVector::vacuum().scaled(&Scalar::from_int(-2)));
    }

    #[test]
    fn annihilator_kills_vacuum() {
        let alg = p2();
        let got = apply_single_mode(CentralSign::Hilbert, &alg, 3, 1, &FockVector::vacuum());
        assert!(got.is_zero());
    }

    #[test]
    fn arity_mismatch_is_rejected() {
        let alg = p2();
        let tensor = TensorElement::monomial(&[1], Scalar::one());
        assert!(matches!(
            apply_modes(CentralSign::Hilbert, &alg, &[1, -1], &tensor, &FockVector::vacuum()),
            Err(FockError::ArityMismatch { .. })
        ));
    }

    #[test]
    fn heisenberg_relation_small_exhaustive() {
        // [mode_m(e_i), mode_n(e_j)] v = central * <e_i, e_j> * v with the
        // central factor -m delta_{m,-n} (Hilbert) or +m (orbifold).
        for name in ["p2", "p1xp1"] {
            let alg = fixtures::by_name(name).unwrap();
            let states: Vec<NakajimaMonomial> = enumerate_monomials(&alg, 3);
            for sign in [CentralSign::Hilbert, CentralSign::Orbifold] {
                for m in [-3i64, -2, -1, 1, 2, 3] {
                    for n in [-3i64, -2, -1, 1, 2, 3] {
                        for i in 0..alg.dim() {
                            for j in 0..alg.dim() {
                                let tensor_ij = TensorElement::monomial(&[i, j], Scalar::one());
                                let tensor_ji = TensorElement::monomial(&[j, i], Scalar::one());
                                for state in &states {
                                    let v = FockVector::monomial(state.clone(), Scalar::one());
                                    let mut got = apply_modes(sign, &alg, &[m, n], &tensor_ij, &v)
                                        .unwrap();
                                    got.add_scaled(
                                        &apply_modes(sign, &alg, &[n, m], &tensor_ji, &v).unwrap(),
                                        &-Scalar::one(),
                                    );
                                    let mut want = FockVector::zero();
                                    if m == -n {
                                        let central =
                                            Scalar::from_int(sign.central_factor(m));
                                        let pairing = alg.pairing_matrix()[i][j].clone();
                                        want = v.scaled(&(central * pairing));
                                    }
                                    assert_eq!(got, want, "{name} {sign:?} m={m} n={n}");
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    /// All level-`n` monomials for tests (small levels only).
    fn enumerate_monomials(alg: &GradedFrobeniusAlgebra, max_level: u32) -> Vec<NakajimaMonomial> {
        let mut out = vec![NakajimaMonomial::vacuum()];
        let mut frontier = vec![NakajimaMonomial::vacuum()];
        for _ in 0..max_level {
            let mut next = Vec::new();
            for m in &frontier {
                for mode in 1..=max_level {
                    for b in 0..alg.dim() {
                        let candidate = m.with_factor(mode, b);
                        if candidate.level() <= max_level && !out.contains(&candidate) {
                            out.push(candidate.clone());
                            next.push(candidate);
                        }
                    }
                }
            }
            frontier = next;
        }
        out
    }

    #[test]
    fn cube_zero_mode_matches_hand_computation() {
        let alg = p2();
        let cube = cube_zero_mode(CentralSign::Hilbert, &alg, &unit());
        // On the vacuum and on level 1 the sum acts as zero.
        assert!(cube.apply(&FockVector::vacuum()).is_zero());
        let level1 = FockVector::monomial(NakajimaMonomial::new(&[(1, 0)]), Scalar::one());
        assert!(cube.apply(&level1).is_zero());
        // On a_{-1}(1)^2 |0> the raw sum gives 6 a_{-2}(1) |0>.
        let squared = FockVector::monomial(NakajimaMonomial::new(&[(1, 0), (1, 0)]), Scalar::one());
        let got = cube.apply(&squared);
        let want = FockVector::monomial(NakajimaMonomial::new(&[(2, 0)]), Scalar::from_int(6));
        assert_eq!(got, want);
    }

    #[test]
    fn a_lambda_tau_creation_only_matches_direct_product() {
        let alg = p2();
        let x = AlgebraElement::basis(2);
        let lambda = GeneralizedPartition::new(&[-2, -1]).unwrap();
        let op = a_lambda_tau(CentralSign::Hilbert, &alg, &lambda, &x).unwrap();
        // tau_2*(x) = x tensor x, so the operator creates both factors with
        // the point class.
        let got = op.apply(&FockVector::vacuum());
        let want = FockVector::monomial(NakajimaMonomial::new(&[(2, 2), (1, 2)]), Scalar::one());
        assert_eq!(got, want);
    }

    #[test]
    fn a_lambda_tau_rejects_empty_partition() {
        let alg = p2();
        assert!(matches!(
            a_lambda_tau(
                CentralSign::Hilbert,
                &alg,
                &GeneralizedPartition::empty(),
                &unit()
            ),
            Err(FockError::EmptyPartition)
        ));
    }

    #[test]
    fn tau_commutator_single_modes_is_central_pairing() {
        let alg = p2();
        let op = tau_commutator(CentralSign::Hilbert, &alg, &[1], &h(), &[-1], &h()).unwrap();
        let v = FockVector::monomial(NakajimaMonomial::new(&[(2, 1)]), Scalar::one());
        // -<h,h> Id = -Id.
        assert_eq!(op.apply(&v), v.scaled(&Scalar::from_int(-1)));
        assert_eq!(op.apply(&FockVector::vacuum()), FockVector::vacuum().scaled(&Scalar::from_int(-1)));
    }

    #[test]
    fn tau_commutator_agrees_with_direct_commutator() {
        let alg = p2();
        let cases: Vec<(Vec<i64>, Vec<i64>)> = vec![
            (vec![1], vec![-1]),
            (vec![-2, 2], vec![-2]),
            (vec![-1, 1], vec![1]),
            (vec![2, 1], vec![-1, -2]),
            (vec![-1, 2], vec![-2, 1]),
        ];
        for sign in [CentralSign::Hilbert, CentralSign::Orbifold] {
            for (mf, mg) in &cases {
                for (alpha, beta) in [(unit(), h()), (h(), h()), (h(), unit())] {
                    let closed =
                        tau_commutator(sign, &alg, mf, &alpha, mg, &beta).unwrap();
                    let f = OperatorExpr::new_finite(
                        sign,
                        alg.clone(),
                        "f",
                        vec![OperatorTerm::new(
                            Scalar::one(),
                            mf.clone(),
                            alg.coproduct(&alpha, mf.len()),
                        )
                        .unwrap()],
                    );
                    let g = OperatorExpr::new_finite(
                        sign,
                        alg.clone(),
                        "g",
                        vec![OperatorTerm::new(
                            Scalar::one(),
                            mg.clone(),
                            alg.coproduct(&beta, mg.len()),
                        )
                        .unwrap()],
                    );
                    for state in enumerate_monomials(&alg, 4) {
                        let v = FockVector::monomial(state.clone(), Scalar::one());
                        assert_eq!(
                            closed.apply(&v),
                            commutator(&f, &g, &v),
                            "{sign:?} {mf:?} {mg:?} on {state:?}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn fock_pair_mode_two_diagonal() {
        let alg = p2();
        let v = FockVector::monomial(NakajimaMonomial::new(&[(2, 1)]), Scalar::one());
        assert_eq!(
            fock_pair(CentralSign::Hilbert, &alg, &v, &v),
            Scalar::from_int(-2)
        );
        assert_eq!(
            fock_pair(CentralSign::Orbifold, &alg, &v, &v),
            Scalar::from_int(2)
        );
    }

    #[test]
    fn fock_pair_orbifold_single_modes() {
        let alg = p2();
        for n in 1..=4u32 {
            let v = FockVector::monomial(NakajimaMonomial::new(&[(n, 1)]), Scalar::one());
            let w = FockVector::monomial(NakajimaMonomial::new(&[(n, 1)]), Scalar::one());
            assert_eq!(
                fock_pair(CentralSign::Orbifold, &alg, &v, &w),
                Scalar::from_int(n as i64)
            );
        }
    }

    #[test]
    fn fock_pair_cross_level_is_zero() {
        let alg = p2();
        let v = FockVector::monomial(NakajimaMonomial::new(&[(2, 1)]), Scalar::one());
        let w = FockVector::monomial(NakajimaMonomial::new(&[(1, 1)]), Scalar::one());
        assert_eq!(fock_pair(CentralSign::Hilbert, &alg, &v, &w), Scalar::zero());
    }

    #[test]
    fn fock_pair_adjoint_identity() {
        // <mode_{-n}(beta) v, w> = adjoint_sign(n) <v, mode_n(beta) w>.
        let alg = p2();
        let states = enumerate_monomials(&alg, 3);
        for sign in [CentralSign::Hilbert, CentralSign::Orbifold] {
            for n in 1..=2i64 {
                for b in 0..alg.dim() {
                    for sv in &states {
                        for sw in &states {
                            let v = FockVector::monomial(sv.clone(), Scalar::one());
                            let w = FockVector::monomial(sw.clone(), Scalar::one());
                            let created = apply_single_mode(sign, &alg, -n, b, &v);
                            let lhs = fock_pair(sign, &alg, &created, &w);
                            let annihilated = apply_single_mode(sign, &alg, n, b, &w);
                            let rhs = fock_pair(sign, &alg, &v, &annihilated);
                            let factor = Scalar::from_int(sign.adjoint_sign(n as u32));
                            assert_eq!(lhs, factor * rhs, "{sign:?} n={n} b={b}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn gram_matrix_nondegenerate_small_levels() {
        use crate::frobenius::invert_matrix;
        let alg = p2();
        for level in 0..=3u32 {
            let basis: Vec<NakajimaMonomial> = enumerate_monomials(&alg, level)
                .into_iter()
                .filter(|m| m.level() == level)
                .collect();
            for sign in [CentralSign::Hilbert, CentralSign::Orbifold] {
                let gram: Vec<Vec<Scalar>> = basis
                    .iter()
                    .map(|mi| {
                        basis
                            .iter()
                            .map(|mj| {
                                fock_pair(
                                    sign,
                                    &alg,
                                    &FockVector::monomial(mi.clone(), Scalar::one()),
                                    &FockVector::monomial(mj.clone(), Scalar::one()),
                                )
                            })
                            .collect()
                    })
                    .collect();
                assert!(
                    invert_matrix(&gram).is_some(),
                    "level {level} {sign:?} Gram degenerate"
                );
            }
        }
    }

    #[test]
    fn operator_scaling_and_sum() {
        let alg = p2();
        let cube = cube_zero_mode(CentralSign::Hilbert, &alg, &unit());
        let scaled = cube_zero_mode(CentralSign::Hilbert, &alg, &unit())
            .scaled(Scalar::from_ratio(-1, 6));
        let squared = FockVector::monomial(NakajimaMonomial::new(&[(1, 0), (1, 0)]), Scalar::one());
        assert_eq!(
            scaled.apply(&squared),
            cube.apply(&squared).scaled(&Scalar::from_ratio(-1, 6))
        );
        let double = cube_zero_mode(CentralSign::Hilbert, &alg, &unit())
            .plus(cube_zero_mode(CentralSign::Hilbert, &alg, &unit()));
        assert_eq!(
            double.apply(&squared),
            cube.apply(&squared).scaled(&Scalar::from_int(2))
        );
    }
}
