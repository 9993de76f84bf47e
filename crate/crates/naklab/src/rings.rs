//! The two ring structures on the level-`n` slice of Fock space, and the
//! weighted transform that matches them.
//!
//! Both sides share the same underlying vector space: the span of the
//! level-`n` creation monomials.  What differs is which multiplication
//! operators define the product:
//!
//! * `Side::Orbifold` uses the symmetric-product operators `O_k(alpha)`
//!   under the orbifold sign convention;
//! * `Side::QuantumCorrected` uses the operators `Gt_k(alpha)` under the
//!   Hilbert-scheme sign convention.
//!
//! A [`RingModel`] is built degree by degree.  In each cohomological degree
//! it enumerates products of the generating operators (orders
//! `0 <= k <= n-1`, all algebra basis classes) applied to the fundamental
//! class, keeps a maximal linearly independent set, and inverts the change
//! of basis.  The result is a reduction table sending every creation
//! monomial to a polynomial in the generators; every ring product is
//! `reduce the left factor, then apply the corresponding operator chains to
//! the right factor`.  If some degree cannot be generated the build fails
//! loudly with the degree and the corank.
//!
//! The transform `psi` rescales a monomial with creation modes
//! `-n_1, ..., -n_s` by `i^(-sum (n_j - 1))`.  It is an isomorphism from
//! the orbifold ring to the quantum-corrected ring, and [`verify_iso`]
//! checks exactly that statement on every pair of basis vectors.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fock::{fock_pair, CentralSign, FockVector, NakajimaMonomial, OperatorExpr};
use crate::frobenius::{invert_matrix, AlgebraElement, GradedFrobeniusAlgebra};
use crate::operators::{
    enumerate_monomials, gtilde_operator, gtilde_operator_mutated, ok_operator, unit_power_class,
};
use crate::scalar::{parse_rational, rational_file_string, Scalar};

/// Which product structure a ring model carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Side {
    /// Symmetric-product side: operators `O_k`, orbifold sign convention.
    Orbifold,
    /// Hilbert-scheme side: operators `Gt_k`, geometric sign convention.
    QuantumCorrected,
}

impl Side {
    pub fn central_sign(self) -> CentralSign {
        match self {
            Side::Orbifold => CentralSign::Orbifold,
            Side::QuantumCorrected => CentralSign::Hilbert,
        }
    }

    /// Letter used when printing creation monomials on this side.
    pub fn letter(self) -> char {
        self.central_sign().mode_letter()
    }

    /// Letter used when printing generator monomials on this side.
    pub fn generator_letter(self) -> char {
        match self {
            Side::Orbifold => 'O',
            Side::QuantumCorrected => 'G',
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Side::Orbifold => "orbifold",
            Side::QuantumCorrected => "quantum",
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Rescale each monomial by `i^(-age)`, where the age of a monomial with
/// creation modes `-n_1, ..., -n_s` is `sum (n_j - 1)`.  This is the ring
/// isomorphism from the orbifold side to the quantum-corrected side.
pub fn psi(v: &FockVector) -> FockVector {
    phase_twist(v, -1)
}

/// Inverse of [`psi`]: rescale each monomial by `i^(+age)`.
pub fn psi_inverse(v: &FockVector) -> FockVector {
    phase_twist(v, 1)
}

fn phase_twist(v: &FockVector, direction: i64) -> FockVector {
    let mut out = FockVector::zero();
    for (mono, c) in v.terms() {
        let phase = Scalar::i_pow(direction * mono.age() as i64);
        out.add_term(mono.clone(), c * &phase);
    }
    out
}

/// One multiplicative generator: the operator of order `order` attached to
/// the algebra basis class `basis`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct GeneratorId {
    pub order: u32,
    pub basis: usize,
}

/// A formal product of generators, kept sorted so equal multisets compare
/// equal.  The empty product is the ring unit.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Default)]
pub struct GeneratorMonomial {
    factors: Vec<GeneratorId>,
}

impl GeneratorMonomial {
    pub fn unit() -> Self {
        GeneratorMonomial::default()
    }

    pub fn new(mut factors: Vec<GeneratorId>) -> Self {
        factors.sort();
        GeneratorMonomial { factors }
    }

    pub fn is_unit(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn factors(&self) -> &[GeneratorId] {
        &self.factors
    }

    fn split_first(&self) -> Option<(GeneratorId, GeneratorMonomial)> {
        let (&first, rest) = self.factors.split_first()?;
        Some((
            first,
            GeneratorMonomial {
                factors: rest.to_vec(),
            },
        ))
    }

    /// Text form like `O[1](h) O[0](x)`; the unit prints as `1`.
    pub fn display_with(&self, alg: &GradedFrobeniusAlgebra, letter: char) -> String {
        if self.factors.is_empty() {
            return "1".to_string();
        }
        let parts: Vec<String> = self
            .factors
            .iter()
            .map(|g| format!("{letter}[{}]({})", g.order, alg.basis()[g.basis].name))
            .collect();
        parts.join(" ")
    }
}

/// Sparse linear combination of generator monomials.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct GeneratorPolynomial {
    terms: BTreeMap<GeneratorMonomial, Scalar>,
}

impl GeneratorPolynomial {
    pub fn zero() -> Self {
        GeneratorPolynomial::default()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn term_count(&self) -> usize {
        self.terms.len()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&GeneratorMonomial, &Scalar)> {
        self.terms.iter()
    }

    pub fn coeff(&self, m: &GeneratorMonomial) -> Scalar {
        self.terms.get(m).cloned().unwrap_or_else(Scalar::zero)
    }

    pub fn add_term(&mut self, m: GeneratorMonomial, c: Scalar) {
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

    pub fn add_scaled(&mut self, other: &GeneratorPolynomial, factor: &Scalar) {
        for (m, c) in &other.terms {
            self.add_term(m.clone(), c * factor);
        }
    }

    pub fn display_with(&self, alg: &GradedFrobeniusAlgebra, letter: char) -> String {
        if self.terms.is_empty() {
            return "0".to_string();
        }
        let parts: Vec<String> = self
            .terms
            .iter()
            .map(|(m, c)| {
                let mono = m.display_with(alg, letter);
                if c == &Scalar::one() {
                    mono
                } else {
                    format!("{} {mono}", c.compact_string())
                }
            })
            .collect();
        parts.join(" + ")
    }
}

/// Errors raised while building or using a ring model.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RingError {
    /// Some cohomological degree is not spanned by generator products.
    /// `corank` is the number of missing dimensions.
    #[error("degree {degree} is not generated: corank {corank}")]
    GenerationFailure { degree: u32, corank: usize },
    /// A vector contained a monomial outside the ring's reduction table,
    /// for example one of the wrong level.
    #[error("monomial {monomial} has no reduction in this ring")]
    NotReduced { monomial: String },
}

/// Per-degree record of how the generation step went: how many generator
/// monomials were tried and which ones were kept as a spanning set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DegreeCertificate {
    pub degree: u32,
    pub dimension: usize,
    pub tried: usize,
    pub chosen: Vec<String>,
}

/// A fully built multiplication structure on the level-`n` slice.
pub struct RingModel {
    alg: Arc<GradedFrobeniusAlgebra>,
    side: Side,
    n: u32,
    mutated: bool,
    basis: Vec<NakajimaMonomial>,
    index: BTreeMap<NakajimaMonomial, usize>,
    degrees: Vec<u32>,
    generators: Vec<GeneratorId>,
    ops: BTreeMap<GeneratorId, Arc<OperatorExpr>>,
    reduction: BTreeMap<NakajimaMonomial, GeneratorPolynomial>,
    certificate: Vec<DegreeCertificate>,
}

/// Build the ring of the requested side at level `n`.
pub fn build_ring(
    alg: &Arc<GradedFrobeniusAlgebra>,
    side: Side,
    n: u32,
) -> Result<RingModel, RingError> {
    RingModel::build_with(alg, side, n, false, n.saturating_sub(1))
}

/// Build the quantum-corrected ring with the deliberately wrong operator
/// variant.  Used as a negative control: [`verify_iso`] must fail on it.
pub fn build_ring_mutated(
    alg: &Arc<GradedFrobeniusAlgebra>,
    n: u32,
) -> Result<RingModel, RingError> {
    RingModel::build_with(alg, Side::QuantumCorrected, n, true, n.saturating_sub(1))
}

impl RingModel {
    fn build_with(
        alg: &Arc<GradedFrobeniusAlgebra>,
        side: Side,
        n: u32,
        mutated: bool,
        max_order: u32,
    ) -> Result<RingModel, RingError> {
        assert!(n >= 1, "ring level must be positive");
        debug_assert!(!(mutated && side == Side::Orbifold));

        let mut basis: Vec<NakajimaMonomial> = enumerate_monomials(alg, n)
            .into_iter()
            .filter(|m| m.level() == n)
            .collect();
        basis.sort_by_key(|m| (m.degree(alg), m.clone()));
        let degrees: Vec<u32> = basis.iter().map(|m| m.degree(alg)).collect();
        let index: BTreeMap<NakajimaMonomial, usize> = basis
            .iter()
            .enumerate()
            .map(|(i, m)| (m.clone(), i))
            .collect();

        let mut generators = Vec::new();
        for order in 0..=max_order {
            for b in 0..alg.dim() {
                if alg.degree_of(b) + 2 * order == 0 {
                    // The order-0 operator of the unit class is the
                    // identity; it generates nothing new and would make
                    // monomial enumeration by degree non-terminating.
                    continue;
                }
                generators.push(GeneratorId { order, basis: b });
            }
        }

        let mut ops = BTreeMap::new();
        for g in &generators {
            let class = AlgebraElement::basis(g.basis);
            let op = match (side, mutated) {
                (Side::Orbifold, _) => ok_operator(alg, g.order, &class, false),
                (Side::QuantumCorrected, false) => gtilde_operator(alg, g.order, &class, false),
                (Side::QuantumCorrected, true) => gtilde_operator_mutated(alg, g.order, &class),
            };
            ops.insert(*g, Arc::new(op));
        }

        let mut model = RingModel {
            alg: alg.clone(),
            side,
            n,
            mutated,
            basis,
            index,
            degrees,
            generators,
            ops,
            reduction: BTreeMap::new(),
            certificate: Vec::new(),
        };

        let mut buckets: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (i, &d) in model.degrees.iter().enumerate() {
            buckets.entry(d).or_default().push(i);
        }

        let mut memo: BTreeMap<GeneratorMonomial, Arc<FockVector>> = BTreeMap::new();
        for (&degree, bucket) in &buckets {
            let dim_d = bucket.len();
            let col_of: BTreeMap<usize, usize> = bucket
                .iter()
                .enumerate()
                .map(|(col, &i)| (i, col))
                .collect();

            let mut echelon: Vec<Vec<Scalar>> = Vec::new();
            let mut pivots: Vec<usize> = Vec::new();
            let mut chosen: Vec<(GeneratorMonomial, Vec<Scalar>)> = Vec::new();
            let mut tried = 0usize;

            // Every generator has degree at least 2, so products of more
            // than degree/2 factors overshoot.
            'counts: for count in 0..=(degree as usize) / 2 {
                for gm in model.generator_monomials(count, degree) {
                    tried += 1;
                    let class = model.evaluate_memo(&gm, &mut memo);
                    if class.is_zero() {
                        continue;
                    }
                    let coords = model.bucket_coords(&class, dim_d, &col_of);
                    let mut row = coords.clone();
                    for (r, &p) in echelon.iter().zip(pivots.iter()) {
                        if !row[p].is_zero() {
                            let factor = row[p].clone();
                            for (slot, val) in row.iter_mut().zip(r.iter()) {
                                *slot -= &factor * val;
                            }
                        }
                    }
                    if let Some(p) = row.iter().position(|c| !c.is_zero()) {
                        let inv = row[p].inverse().expect("nonzero scalar");
                        for slot in row.iter_mut() {
                            *slot = &*slot * &inv;
                        }
                        echelon.push(row);
                        pivots.push(p);
                        chosen.push((gm, coords));
                        if chosen.len() == dim_d {
                            break 'counts;
                        }
                    }
                }
            }

            if chosen.len() < dim_d {
                return Err(RingError::GenerationFailure {
                    degree,
                    corank: dim_d - chosen.len(),
                });
            }

            let mut mat = vec![vec![Scalar::zero(); dim_d]; dim_d];
            for (col, (_, coords)) in chosen.iter().enumerate() {
                for (row, value) in coords.iter().enumerate() {
                    mat[row][col] = value.clone();
                }
            }
            let inv = invert_matrix(&mat).expect("chosen columns are independent");
            for (pos, &i) in bucket.iter().enumerate() {
                let mut poly = GeneratorPolynomial::zero();
                for (col, (gm, _)) in chosen.iter().enumerate() {
                    poly.add_term(gm.clone(), inv[col][pos].clone());
                }
                model.reduction.insert(model.basis[i].clone(), poly);
            }
            model.certificate.push(DegreeCertificate {
                degree,
                dimension: dim_d,
                tried,
                chosen: chosen
                    .iter()
                    .map(|(gm, _)| gm.display_with(alg, side.generator_letter()))
                    .collect(),
            });
        }

        Ok(model)
    }

    pub fn algebra(&self) -> &Arc<GradedFrobeniusAlgebra> {
        &self.alg
    }

    pub fn side(&self) -> Side {
        self.side
    }

    pub fn level(&self) -> u32 {
        self.n
    }

    pub fn is_mutated(&self) -> bool {
        self.mutated
    }

    /// The canonical ordered basis: level-`n` creation monomials sorted by
    /// (cohomological degree, monomial order).
    pub fn basis(&self) -> &[NakajimaMonomial] {
        &self.basis
    }

    pub fn basis_degrees(&self) -> &[u32] {
        &self.degrees
    }

    pub fn basis_position(&self, m: &NakajimaMonomial) -> Option<usize> {
        self.index.get(m).copied()
    }

    pub fn generators(&self) -> &[GeneratorId] {
        &self.generators
    }

    pub fn certificate(&self) -> &[DegreeCertificate] {
        &self.certificate
    }

    /// The multiplicative unit: `1/n! * (mode -1 of the unit class)^n`.
    pub fn unit_class(&self) -> FockVector {
        unit_power_class(&self.alg, self.n)
    }

    pub fn reduction_of(&self, m: &NakajimaMonomial) -> Option<&GeneratorPolynomial> {
        self.reduction.get(m)
    }

    fn generator_degree(&self, g: &GeneratorId) -> u32 {
        self.alg.degree_of(g.basis) + 2 * g.order
    }

    /// All sorted products of `count` generators with total degree
    /// `degree`, in lexicographic order.
    fn generator_monomials(&self, count: usize, degree: u32) -> Vec<GeneratorMonomial> {
        let degs: Vec<u32> = self
            .generators
            .iter()
            .map(|g| self.generator_degree(g))
            .collect();
        let mut out = Vec::new();
        let mut stack: Vec<GeneratorId> = Vec::new();
        fn rec(
            gens: &[GeneratorId],
            degs: &[u32],
            start: usize,
            left_count: usize,
            left_degree: u32,
            stack: &mut Vec<GeneratorId>,
            out: &mut Vec<GeneratorMonomial>,
        ) {
            if left_count == 0 {
                if left_degree == 0 {
                    out.push(GeneratorMonomial {
                        factors: stack.clone(),
                    });
                }
                return;
            }
            for idx in start..gens.len() {
                if degs[idx] > left_degree {
                    continue;
                }
                stack.push(gens[idx]);
                rec(
                    gens,
                    degs,
                    idx,
                    left_count - 1,
                    left_degree - degs[idx],
                    stack,
                    out,
                );
                stack.pop();
            }
        }
        rec(
            &self.generators,
            &degs,
            0,
            count,
            degree,
            &mut stack,
            &mut out,
        );
        out
    }

    /// Class of a generator monomial: the operator chain applied to the
    /// unit class, rightmost factor first.  Shared suffixes are memoized.
    fn evaluate_memo(
        &self,
        gm: &GeneratorMonomial,
        memo: &mut BTreeMap<GeneratorMonomial, Arc<FockVector>>,
    ) -> Arc<FockVector> {
        if let Some(v) = memo.get(gm) {
            return v.clone();
        }
        let value = match gm.split_first() {
            None => self.unit_class(),
            Some((first, rest)) => {
                let sub = self.evaluate_memo(&rest, memo);
                self.ops[&first].apply(&sub)
            }
        };
        let value = Arc::new(value);
        memo.insert(gm.clone(), value.clone());
        value
    }

    /// Evaluate a generator polynomial to the Fock-space class it denotes.
    pub fn evaluate_polynomial(&self, poly: &GeneratorPolynomial) -> FockVector {
        let mut memo = BTreeMap::new();
        let mut out = FockVector::zero();
        for (gm, c) in poly.terms() {
            let v = self.evaluate_memo(gm, &mut memo);
            out.add_scaled(&v, c);
        }
        out
    }

    fn bucket_coords(
        &self,
        class: &FockVector,
        dim_d: usize,
        col_of: &BTreeMap<usize, usize>,
    ) -> Vec<Scalar> {
        let mut coords = vec![Scalar::zero(); dim_d];
        for (mono, c) in class.terms() {
            let i = *self
                .index
                .get(mono)
                .expect("operator chains preserve the level");
            let col = *col_of
                .get(&i)
                .expect("operator chains are degree homogeneous");
            coords[col] = c.clone();
        }
        coords
    }

    /// Express a level-`n` class as a polynomial in the generators.
    pub fn reduce(&self, v: &FockVector) -> Result<GeneratorPolynomial, RingError> {
        let mut out = GeneratorPolynomial::zero();
        for (mono, c) in v.terms() {
            let poly = self
                .reduction
                .get(mono)
                .ok_or_else(|| RingError::NotReduced {
                    monomial: mono.display_with(&self.alg, self.side.letter()),
                })?;
            out.add_scaled(poly, c);
        }
        Ok(out)
    }

    /// Product of a generator monomial with the `j`-th basis vector,
    /// memoized per `j` through the suffix chain.
    fn monomial_times_basis(
        &self,
        gm: &GeneratorMonomial,
        j: usize,
        memo: &mut BTreeMap<GeneratorMonomial, Arc<FockVector>>,
    ) -> Arc<FockVector> {
        if let Some(v) = memo.get(gm) {
            return v.clone();
        }
        let value = match gm.split_first() {
            None => FockVector::monomial(self.basis[j].clone(), Scalar::one()),
            Some((first, rest)) => {
                let sub = self.monomial_times_basis(&rest, j, memo);
                self.ops[&first].apply(&sub)
            }
        };
        let value = Arc::new(value);
        memo.insert(gm.clone(), value.clone());
        value
    }

    fn polynomial_times_basis(
        &self,
        poly: &GeneratorPolynomial,
        j: usize,
        memo: &mut BTreeMap<GeneratorMonomial, Arc<FockVector>>,
    ) -> FockVector {
        let mut out = FockVector::zero();
        for (gm, c) in poly.terms() {
            let v = self.monomial_times_basis(gm, j, memo);
            out.add_scaled(&v, c);
        }
        out
    }

    /// The ring product of two level-`n` classes: reduce the left factor
    /// to generators, then apply the operator chains to the right factor.
    pub fn ring_product(&self, v: &FockVector, w: &FockVector) -> Result<FockVector, RingError> {
        let poly = self.reduce(v)?;
        let mut out = FockVector::zero();
        for (mono, cw) in w.terms() {
            let j = *self.index.get(mono).ok_or_else(|| RingError::NotReduced {
                monomial: mono.display_with(&self.alg, self.side.letter()),
            })?;
            let mut memo = BTreeMap::new();
            let column = self.polynomial_times_basis(&poly, j, &mut memo);
            out.add_scaled(&column, cw);
        }
        Ok(out)
    }

    /// `<v . w, u>` under this side's bilinear Fock pairing.
    pub fn triple_product(
        &self,
        v: &FockVector,
        w: &FockVector,
        u: &FockVector,
    ) -> Result<Scalar, RingError> {
        let vw = self.ring_product(v, w)?;
        Ok(fock_pair(self.side.central_sign(), &self.alg, &vw, u))
    }

    /// All structure constants `basis_i . basis_j = sum_k c_{ijk} basis_k`
    /// for `i <= j`, as an exportable table.
    pub fn structure_constants(&self) -> StructureTable {
        let mut entries = Vec::new();
        for j in 0..self.basis.len() {
            let mut memo = BTreeMap::new();
            for i in 0..=j {
                let poly = &self.reduction[&self.basis[i]];
                let product = self.polynomial_times_basis(poly, j, &mut memo);
                for (mono, c) in product.terms() {
                    let k = *self
                        .index
                        .get(mono)
                        .expect("products stay in the level-n span");
                    entries.push(TableEntry {
                        degree: self.degrees[i] + self.degrees[j],
                        i,
                        j,
                        k,
                        re: rational_file_string(&c.re),
                        im: rational_file_string(&c.im),
                    });
                }
            }
        }
        entries.sort_by_key(|e| (e.i, e.j, e.k));
        StructureTable {
            model: self.alg.name().to_string(),
            side: self.side.name().to_string(),
            n: self.n,
            basis: self
                .basis
                .iter()
                .enumerate()
                .map(|(index, m)| BasisEntry {
                    index,
                    degree: self.degrees[index],
                    monomial: m.display_with(&self.alg, self.side.letter()),
                })
                .collect(),
            entries,
        }
    }
}

// ---------------------------------------------------------------------------
// Structure-constant tables
// ---------------------------------------------------------------------------

/// One basis vector of the table, for readability of exports.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasisEntry {
    pub index: usize,
    pub degree: u32,
    pub monomial: String,
}

/// One nonzero structure constant `c_{ijk}`, with the scalar split into
/// exact rational real and imaginary parts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableEntry {
    pub degree: u32,
    pub i: usize,
    pub j: usize,
    pub k: usize,
    pub re: String,
    pub im: String,
}

impl TableEntry {
    pub fn value(&self) -> Scalar {
        let re = parse_rational(&self.re).expect("table entries hold exact rationals");
        let im = parse_rational(&self.im).expect("table entries hold exact rationals");
        Scalar::new(re, im)
    }
}

/// Full structure-constant table of one ring, exportable as JSON or CSV
/// and byte-stable across runs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructureTable {
    pub model: String,
    pub side: String,
    pub n: u32,
    pub basis: Vec<BasisEntry>,
    pub entries: Vec<TableEntry>,
}

/// Errors from parsing an exported table back in.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TableParseError {
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
}

pub const TABLE_CSV_HEADER: &str = "degree,i,j,k,re,im";

impl StructureTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(TABLE_CSV_HEADER);
        out.push('\n');
        for e in &self.entries {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                e.degree, e.i, e.j, e.k, e.re, e.im
            ));
        }
        out
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("table serializes");
        text.push('\n');
        text
    }

    pub fn from_json(text: &str) -> Result<StructureTable, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Parse the entry rows of a CSV export.  Scalars are re-canonicalized,
    /// so `entries_from_csv(table.to_csv()) == table.entries` exactly.
    pub fn entries_from_csv(text: &str) -> Result<Vec<TableEntry>, TableParseError> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, header)) if header.trim() == TABLE_CSV_HEADER => {}
            Some((_, header)) => {
                return Err(TableParseError::Malformed {
                    line: 1,
                    reason: format!("expected header {TABLE_CSV_HEADER:?}, found {header:?}"),
                })
            }
            None => {
                return Err(TableParseError::Malformed {
                    line: 1,
                    reason: "empty table".to_string(),
                })
            }
        }
        let mut entries = Vec::new();
        for (zero_based, line) in lines {
            let line_no = zero_based + 1;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 6 {
                return Err(TableParseError::Malformed {
                    line: line_no,
                    reason: format!("expected 6 fields, found {}", fields.len()),
                });
            }
            let malformed = |reason: String| TableParseError::Malformed {
                line: line_no,
                reason,
            };
            let degree: u32 = fields[0]
                .trim()
                .parse()
                .map_err(|e| malformed(format!("bad degree: {e}")))?;
            let parse_index = |text: &str, label: &str| -> Result<usize, TableParseError> {
                text.trim()
                    .parse()
                    .map_err(|e| malformed(format!("bad {label}: {e}")))
            };
            let i = parse_index(fields[1], "i")?;
            let j = parse_index(fields[2], "j")?;
            let k = parse_index(fields[3], "k")?;
            let re = parse_rational(fields[4].trim())
                .map_err(|e| malformed(format!("bad re: {e}")))?;
            let im = parse_rational(fields[5].trim())
                .map_err(|e| malformed(format!("bad im: {e}")))?;
            entries.push(TableEntry {
                degree,
                i,
                j,
                k,
                re: rational_file_string(&re),
                im: rational_file_string(&im),
            });
        }
        Ok(entries)
    }
}

// ---------------------------------------------------------------------------
// Cross-side verification
// ---------------------------------------------------------------------------

/// First counterexample found by [`verify_iso`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IsoFailure {
    pub left: String,
    pub right: String,
    pub expected: String,
    pub got: String,
}

/// Outcome of the ring-isomorphism check.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IsoReport {
    pub model: String,
    pub n: u32,
    pub checks: usize,
    pub failure: Option<IsoFailure>,
}

impl IsoReport {
    pub fn pass(&self) -> bool {
        self.failure.is_none()
    }
}

/// Check `psi(v . w) = psi(v) . psi(w)` for every pair of basis vectors of
/// the level-`n` rings: orbifold product on the left, quantum-corrected
/// product on the right.  With `mutated` set, the right side uses the
/// deliberately wrong operators, and the report must carry a failure.
pub fn verify_iso(
    alg: &Arc<GradedFrobeniusAlgebra>,
    n: u32,
    mutated: bool,
) -> Result<IsoReport, RingError> {
    let orb = build_ring(alg, Side::Orbifold, n)?;
    let qc = if mutated {
        build_ring_mutated(alg, n)?
    } else {
        build_ring(alg, Side::QuantumCorrected, n)?
    };
    let mut checks = 0usize;
    for j in 0..orb.basis.len() {
        let mut memo_orb = BTreeMap::new();
        let mut memo_qc = BTreeMap::new();
        for i in 0..=j {
            let orb_product =
                orb.polynomial_times_basis(&orb.reduction[&orb.basis[i]], j, &mut memo_orb);
            let qc_product =
                qc.polynomial_times_basis(&qc.reduction[&qc.basis[i]], j, &mut memo_qc);
            let expected = psi(&orb_product);
            let phase =
                Scalar::i_pow(-(orb.basis[i].age() as i64) - (orb.basis[j].age() as i64));
            let got = qc_product.scaled(&phase);
            checks += 1;
            if expected != got {
                return Ok(IsoReport {
                    model: alg.name().to_string(),
                    n,
                    checks,
                    failure: Some(IsoFailure {
                        left: orb.basis[i].display_with(alg, 'p'),
                        right: orb.basis[j].display_with(alg, 'p'),
                        expected: expected.display_with(alg, 'a'),
                        got: got.display_with(alg, 'a'),
                    }),
                });
            }
        }
    }
    Ok(IsoReport {
        model: alg.name().to_string(),
        n,
        checks,
        failure: None,
    })
}

/// First counterexample found by [`verify_pairing`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairingFailure {
    pub left: String,
    pub right: String,
    pub orbifold: String,
    pub hilbert: String,
}

/// Outcome of the pairing-preservation check.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairingReport {
    pub model: String,
    pub max_level: u32,
    pub checks: usize,
    pub failure: Option<PairingFailure>,
}

impl PairingReport {
    pub fn pass(&self) -> bool {
        self.failure.is_none()
    }
}

/// Check that `psi` preserves the bilinear Fock pairing: for every pair of
/// monomials of equal level up to `max_level`, the orbifold pairing equals
/// the Hilbert-side pairing of the transformed vectors.
pub fn verify_pairing(alg: &Arc<GradedFrobeniusAlgebra>, max_level: u32) -> PairingReport {
    let mut checks = 0usize;
    let all = enumerate_monomials(alg, max_level);
    for level in 0..=max_level {
        let monomials: Vec<&NakajimaMonomial> =
            all.iter().filter(|m| m.level() == level).collect();
        for (pos, left) in monomials.iter().enumerate() {
            for right in &monomials[pos..] {
                let v = FockVector::monomial((*left).clone(), Scalar::one());
                let w = FockVector::monomial((*right).clone(), Scalar::one());
                let orbifold = fock_pair(CentralSign::Orbifold, alg, &v, &w);
                let hilbert = fock_pair(CentralSign::Hilbert, alg, &psi(&v), &psi(&w));
                checks += 1;
                if orbifold != hilbert {
                    return PairingReport {
                        model: alg.name().to_string(),
                        max_level,
                        checks,
                        failure: Some(PairingFailure {
                            left: left.display_with(alg, 'p'),
                            right: right.display_with(alg, 'p'),
                            orbifold: orbifold.file_string(),
                            hilbert: hilbert.file_string(),
                        }),
                    };
                }
            }
        }
    }
    PairingReport {
        model: alg.name().to_string(),
        max_level,
        checks,
        failure: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frobenius::fixtures;
    use crate::operators::{gtilde_class, ok_class};

    fn monomial_vector(factors: &[(u32, usize)]) -> FockVector {
        FockVector::monomial(NakajimaMonomial::new(factors), Scalar::one())
    }

    #[test]
    fn level_one_ring_is_the_surface_cohomology() {
        for alg in [fixtures::p2(), fixtures::p1xp1()] {
            for side in [Side::Orbifold, Side::QuantumCorrected] {
                let ring = build_ring(&alg, side, 1).unwrap();
                assert_eq!(ring.basis().len(), alg.dim());
                // Basis k of the ring is mode -1 of algebra class k.
                for (i, m) in ring.basis().iter().enumerate() {
                    assert_eq!(m.factors(), &[(1, i)]);
                }
                for i in 0..alg.dim() {
                    for j in 0..alg.dim() {
                        let vi = monomial_vector(&[(1, i)]);
                        let vj = monomial_vector(&[(1, j)]);
                        let product = ring.ring_product(&vi, &vj).unwrap();
                        let expected_alg = alg.basis_product(i, j);
                        let mut expected = FockVector::zero();
                        for (b, c) in expected_alg.iter() {
                            expected.add_term(NakajimaMonomial::new(&[(1, b)]), c.clone());
                        }
                        assert_eq!(product, expected, "{} {side} {i} {j}", alg.name());
                    }
                }
            }
        }
    }

    #[test]
    fn level_one_structure_table_matches_multiplication_table() {
        let alg = fixtures::p2();
        let ring = build_ring(&alg, Side::Orbifold, 1).unwrap();
        let table = ring.structure_constants();
        for i in 0..alg.dim() {
            for j in i..alg.dim() {
                let product = alg.basis_product(i, j);
                for k in 0..alg.dim() {
                    let expected = product.coeff(k);
                    let found: Vec<&TableEntry> = table
                        .entries
                        .iter()
                        .filter(|e| e.i == i && e.j == j && e.k == k)
                        .collect();
                    if expected.is_zero() {
                        assert!(found.is_empty(), "unexpected entry at ({i},{j},{k})");
                    } else {
                        assert_eq!(found.len(), 1);
                        assert_eq!(found[0].value(), expected);
                        assert_eq!(found[0].degree, alg.degree_of(i) + alg.degree_of(j));
                    }
                }
            }
        }
    }

    #[test]
    fn unit_class_is_the_multiplicative_identity() {
        let alg = fixtures::p2();
        for side in [Side::Orbifold, Side::QuantumCorrected] {
            let ring = build_ring(&alg, side, 2).unwrap();
            let unit = ring.unit_class();
            for m in ring.basis() {
                let w = FockVector::monomial(m.clone(), Scalar::one());
                assert_eq!(ring.ring_product(&unit, &w).unwrap(), w, "left unit");
                assert_eq!(ring.ring_product(&w, &unit).unwrap(), w, "right unit");
            }
        }
    }

    #[test]
    fn reduction_tables_re_expand_to_the_monomials() {
        for alg in [fixtures::p2(), fixtures::p1xp1()] {
            for side in [Side::Orbifold, Side::QuantumCorrected] {
                let ring = build_ring(&alg, side, 3).unwrap();
                for m in ring.basis() {
                    let poly = ring.reduction_of(m).expect("all basis monomials reduce");
                    let class = ring.evaluate_polynomial(poly);
                    assert_eq!(
                        class,
                        FockVector::monomial(m.clone(), Scalar::one()),
                        "{} {side} {}",
                        alg.name(),
                        m.display_with(&alg, side.letter())
                    );
                }
            }
        }
    }

    #[test]
    fn mode_two_monomial_is_minus_two_times_the_order_one_class() {
        let alg = fixtures::p2();
        let h = alg.basis_index("h").unwrap();
        // At level 2 the order-1 class of alpha is -1/2 mode -2 of alpha,
        // so the monomial equals -2 times it.
        let expected = gtilde_class(&alg, 1, &AlgebraElement::basis(h), 2)
            .scaled(&Scalar::from_int(-2));
        assert_eq!(monomial_vector(&[(2, h)]), expected);

        // The reduction table must agree after evaluation.
        let ring = build_ring(&alg, Side::QuantumCorrected, 2).unwrap();
        let mono = NakajimaMonomial::new(&[(2, h)]);
        let poly = ring.reduction_of(&mono).unwrap();
        assert_eq!(
            ring.evaluate_polynomial(poly),
            monomial_vector(&[(2, h)])
        );
    }

    #[test]
    fn order_zero_orbifold_product_twists_a_mode_two_monomial() {
        let alg = fixtures::p2();
        let h = alg.basis_index("h").unwrap();
        let ring = build_ring(&alg, Side::Orbifold, 2).unwrap();
        let left = ok_class(&alg, 0, &AlgebraElement::basis(h), 2);
        let right = monomial_vector(&[(2, 0)]);
        let product = ring.ring_product(&left, &right).unwrap();
        let expected = monomial_vector(&[(2, h)]).scaled(&Scalar::from_int(2));
        assert_eq!(product, expected);
    }

    #[test]
    fn psi_rescales_by_age() {
        let alg = fixtures::p2();
        let h = alg.basis_index("h").unwrap();
        // Age 0: fixed by psi.
        let v = monomial_vector(&[(1, h), (1, h)]);
        assert_eq!(psi(&v), v);
        // Age 1: picks up i^(-1) = -i.
        let w = monomial_vector(&[(2, 0)]);
        assert_eq!(psi(&w), w.scaled(&-Scalar::i()));
        // Round trip on a mixed vector.
        let mut mixed = v.clone();
        mixed.add_scaled(&w, &Scalar::from_ratio(3, 7));
        assert_eq!(psi_inverse(&psi(&mixed)), mixed);
        assert_eq!(psi(&psi_inverse(&mixed)), mixed);
    }

    #[test]
    fn triple_products_are_symmetric_in_the_first_two_slots() {
        let alg = fixtures::p2();
        let ring = build_ring(&alg, Side::Orbifold, 2).unwrap();
        let basis = ring.basis().to_vec();
        for i in 0..basis.len() {
            for j in 0..basis.len() {
                let v = FockVector::monomial(basis[i].clone(), Scalar::one());
                let w = FockVector::monomial(basis[j].clone(), Scalar::one());
                for u in &basis {
                    let u = FockVector::monomial(u.clone(), Scalar::one());
                    let vw = ring.triple_product(&v, &w, &u).unwrap();
                    let wv = ring.triple_product(&w, &v, &u).unwrap();
                    assert_eq!(vw, wv);
                }
            }
        }
    }

    #[test]
    fn iso_holds_at_level_two_and_mutation_is_caught() {
        for alg in [fixtures::p2(), fixtures::p1xp1()] {
            let report = verify_iso(&alg, 2, false).unwrap();
            assert!(report.pass(), "{:?}", report.failure);
            assert!(report.checks > 0);

            let mutated = verify_iso(&alg, 2, true).unwrap();
            assert!(
                !mutated.pass(),
                "mutated operators must break the isomorphism on {}",
                alg.name()
            );
            let failure = mutated.failure.unwrap();
            assert_ne!(failure.expected, failure.got);
        }
    }

    #[test]
    fn pairing_is_preserved_through_psi() {
        for alg in [fixtures::p2(), fixtures::p1xp1()] {
            let report = verify_pairing(&alg, 3);
            assert!(report.pass(), "{:?}", report.failure);
            assert!(report.checks > 0);
        }
    }

    #[test]
    fn pairing_example_single_modes() {
        let alg = fixtures::p2();
        let h = alg.basis_index("h").unwrap();
        let v = monomial_vector(&[(2, h)]);
        // Orbifold: +2 <h, h> = 2 int(x) = 2.
        assert_eq!(
            fock_pair(CentralSign::Orbifold, &alg, &v, &v),
            Scalar::from_int(2)
        );
        // Hilbert side after psi: (-i)^2 * (-2) <h, h> = 2 as well.
        let tv = psi(&v);
        assert_eq!(
            fock_pair(CentralSign::Hilbert, &alg, &tv, &tv),
            Scalar::from_int(2)
        );
    }

    #[test]
    fn structure_table_round_trips_and_is_deterministic() {
        let alg = fixtures::p2();
        let ring = build_ring(&alg, Side::QuantumCorrected, 2).unwrap();
        let table = ring.structure_constants();
        let again = ring.structure_constants();
        assert_eq!(table.to_csv(), again.to_csv());
        assert_eq!(table.to_json(), again.to_json());

        let entries = StructureTable::entries_from_csv(&table.to_csv()).unwrap();
        assert_eq!(entries, table.entries);
        let parsed = StructureTable::from_json(&table.to_json()).unwrap();
        assert_eq!(parsed, table);
    }

    #[test]
    fn csv_parser_rejects_malformed_input() {
        assert!(StructureTable::entries_from_csv("").is_err());
        assert!(StructureTable::entries_from_csv("nonsense\n").is_err());
        let bad_row = format!("{TABLE_CSV_HEADER}\n0,0,0\n");
        assert!(StructureTable::entries_from_csv(&bad_row).is_err());
        let bad_scalar = format!("{TABLE_CSV_HEADER}\n0,0,0,0,one,0\n");
        assert!(StructureTable::entries_from_csv(&bad_scalar).is_err());
    }

    #[test]
    fn table_degrees_are_additive() {
        let alg = fixtures::p2();
        for side in [Side::Orbifold, Side::QuantumCorrected] {
            let ring = build_ring(&alg, side, 3).unwrap();
            let degrees = ring.basis_degrees().to_vec();
            let table = ring.structure_constants();
            for e in &table.entries {
                assert_eq!(e.degree, degrees[e.i] + degrees[e.j]);
                assert_eq!(e.degree, degrees[e.k]);
            }
        }
    }

    #[test]
    fn generation_fails_loudly_when_orders_are_capped() {
        let alg = fixtures::p2();
        let result = RingModel::build_with(&alg, Side::QuantumCorrected, 2, false, 0);
        assert_eq!(
            result.err(),
            Some(RingError::GenerationFailure {
                degree: 2,
                corank: 1
            })
        );
    }

    #[test]
    fn reduce_rejects_monomials_of_the_wrong_level() {
        let alg = fixtures::p2();
        let ring = build_ring(&alg, Side::Orbifold, 2).unwrap();
        let wrong = monomial_vector(&[(3, 0)]);
        match ring.reduce(&wrong) {
            Err(RingError::NotReduced { monomial }) => {
                assert!(monomial.contains("p[-3]"), "{monomial}");
            }
            other => panic!("expected NotReduced, got {other:?}"),
        }
    }

    #[test]
    fn certificates_record_full_rank() {
        let alg = fixtures::p1xp1();
        let ring = build_ring(&alg, Side::Orbifold, 3).unwrap();
        let total: usize = ring.certificate().iter().map(|c| c.dimension).sum();
        assert_eq!(total, ring.basis().len());
        for cert in ring.certificate() {
            assert_eq!(cert.dimension, cert.chosen.len());
            assert!(cert.tried >= cert.dimension);
        }
    }

    #[test]
    fn generator_monomials_are_lexicographic_and_complete() {
        let alg = fixtures::p2();
        let ring = build_ring(&alg, Side::QuantumCorrected, 2).unwrap();
        let singles = ring.generator_monomials(1, 2);
        let labels: Vec<String> = singles
            .iter()
            .map(|m| m.display_with(&alg, 'G'))
            .collect();
        assert_eq!(labels, vec!["G[0](h)", "G[1](1)"]);
        let pairs = ring.generator_monomials(2, 4);
        let labels: Vec<String> = pairs.iter().map(|m| m.display_with(&alg, 'G')).collect();
        assert_eq!(
            labels,
            vec![
                "G[0](h) G[0](h)",
                "G[0](h) G[1](1)",
                "G[1](1) G[1](1)"
            ]
        );
    }
}
