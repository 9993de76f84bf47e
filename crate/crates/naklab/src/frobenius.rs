//! Graded Frobenius algebras: the coefficient rings of the Fock-space
//! calculus.
//!
//! An algebra here models the even-degree cohomology ring of a smooth
//! projective surface together with its intersection theory:
//!
//! * a finite basis of homogeneous classes with even degrees `<= top_degree`;
//! * a commutative, associative, unital multiplication table;
//! * a counit `T` supported in the top degree with `T(point) = 1`, inducing
//!   the nondegenerate pairing `<a, b> = T(a*b)`;
//! * distinguished classes `K` (canonical) and `e` (Euler).
//!
//! The `k`-th coproduct `coproduct(a, k)` is the tensor `C` characterized by
//! `<C, b_1 x ... x b_k> = T(a * b_1 * ... * b_k)`; it is computed through
//! the dual basis of the pairing and cached per basis element.  `k = 0`
//! degenerates to the scalar `T(a)`.

use crate::scalar::{parse_rational, rational_file_string, Scalar};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::sync::{Arc, Mutex, OnceLock};

/// One homogeneous basis class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasisClass {
    pub name: String,
    pub degree: u32,
}

/// Sparse element of the algebra in the fixed basis.
#[derive(Debug, Clone, PartialEq, Eq, Default, PartialOrd, Ord)]
pub struct AlgebraElement {
    coeffs: BTreeMap<usize, Scalar>,
}

impl AlgebraElement {
    pub fn zero() -> Self {
        AlgebraElement::default()
    }

    pub fn basis(index: usize) -> Self {
        let mut coeffs = BTreeMap::new();
        coeffs.insert(index, Scalar::one());
        AlgebraElement { coeffs }
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn coeff(&self, index: usize) -> Scalar {
        self.coeffs.get(&index).cloned().unwrap_or_else(Scalar::zero)
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &Scalar)> {
        self.coeffs.iter().map(|(&i, c)| (i, c))
    }

    pub fn add_scaled(&mut self, other: &AlgebraElement, factor: &Scalar) {
        if factor.is_zero() {
            return;
        }
        for (&i, c) in &other.coeffs {
            let entry = self
                .coeffs
                .entry(i)
                .or_insert_with(Scalar::zero);
            *entry += &(c * factor);
            if entry.is_zero() {
                self.coeffs.remove(&i);
            }
        }
    }

    pub fn set_coeff(&mut self, index: usize, value: Scalar) {
        if value.is_zero() {
            self.coeffs.remove(&index);
        } else {
            self.coeffs.insert(index, value);
        }
    }

    pub fn scaled(&self, factor: &Scalar) -> AlgebraElement {
        let mut out = AlgebraElement::zero();
        out.add_scaled(self, factor);
        out
    }

    pub fn plus(&self, other: &AlgebraElement) -> AlgebraElement {
        let mut out = self.clone();
        out.add_scaled(other, &Scalar::one());
        out
    }
}

/// Sparse symmetric tensor of fixed arity over the algebra basis.
/// Arity 0 is a plain scalar stored at the empty index tuple.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorElement {
    arity: usize,
    entries: BTreeMap<Vec<usize>, Scalar>,
}

impl TensorElement {
    pub fn zero(arity: usize) -> Self {
        TensorElement {
            arity,
            entries: BTreeMap::new(),
        }
    }

    pub fn scalar(value: Scalar) -> Self {
        let mut t = TensorElement::zero(0);
        t.add_entry(&[], value);
        t
    }

    /// Rank-one tensor `e_{i_1} x ... x e_{i_k}` scaled by `value`.
    pub fn monomial(indices: &[usize], value: Scalar) -> Self {
        let mut t = TensorElement::zero(indices.len());
        t.add_entry(indices, value);
        t
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&[usize], &Scalar)> {
        self.entries.iter().map(|(k, v)| (k.as_slice(), v))
    }

    pub fn add_entry(&mut self, indices: &[usize], value: Scalar) {
        assert_eq!(indices.len(), self.arity, "tensor arity mismatch");
        if value.is_zero() {
            return;
        }
        let slot = self
            .entries
            .entry(indices.to_vec())
            .or_insert_with(Scalar::zero);
        *slot += value;
        if slot.is_zero() {
            self.entries.remove(indices);
        }
    }

    pub fn add_scaled(&mut self, other: &TensorElement, factor: &Scalar) {
        assert_eq!(self.arity, other.arity, "tensor arity mismatch");
        if factor.is_zero() {
            return;
        }
        for (idx, c) in &other.entries {
            self.add_entry(idx, c * factor);
        }
    }

    pub fn scaled(&self, factor: &Scalar) -> TensorElement {
        let mut out = TensorElement::zero(self.arity);
        out.add_scaled(self, factor);
        out
    }

    /// Value of an arity-0 tensor.
    pub fn scalar_value(&self) -> Scalar {
        assert_eq!(self.arity, 0, "not a scalar tensor");
        self.entries
            .get(&Vec::new())
            .cloned()
            .unwrap_or_else(Scalar::zero)
    }

    /// Splits off the last slot: groups entries by their final index.
    /// Returns pairs (last index, sub-tensor of arity - 1).
    pub fn split_last_slot(&self) -> Vec<(usize, TensorElement)> {
        assert!(self.arity > 0, "cannot split a scalar tensor");
        let mut groups: BTreeMap<usize, TensorElement> = BTreeMap::new();
        for (idx, c) in &self.entries {
            let (&last, head) = idx.split_last().expect("nonempty index");
            groups
                .entry(last)
                .or_insert_with(|| TensorElement::zero(self.arity - 1))
                .add_entry(head, c.clone());
        }
        groups.into_iter().collect()
    }

    /// True when every permutation of every index tuple carries the same
    /// coefficient.  Coproducts of a commutative algebra are symmetric.
    pub fn is_symmetric(&self) -> bool {
        // Group entries by sorted index tuple: within a group all values must
        // agree, and the group must contain every distinct permutation.
        let mut groups: BTreeMap<Vec<usize>, (Scalar, u64)> = BTreeMap::new();
        for (idx, c) in &self.entries {
            let mut sorted = idx.clone();
            sorted.sort_unstable();
            match groups.get_mut(&sorted) {
                None => {
                    groups.insert(sorted, (c.clone(), 1));
                }
                Some((value, count)) => {
                    if value != c {
                        return false;
                    }
                    *count += 1;
                }
            }
        }
        groups
            .into_iter()
            .all(|(sorted, (_, count))| distinct_permutations(&sorted) == count)
    }
}

fn distinct_permutations(sorted: &[usize]) -> u64 {
    let mut total: u64 = 1;
    for k in 2..=sorted.len() as u64 {
        total *= k;
    }
    let mut run = 1u64;
    for w in 1..sorted.len() {
        if sorted[w] == sorted[w - 1] {
            run += 1;
            total /= run;
        } else {
            run = 1;
        }
    }
    total
}

/// A violated structural invariant, reported by `validate`.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ValidationDefect {
    #[error("basis class {name:?} has odd degree {degree}")]
    OddDegreeBasis { name: String, degree: u32 },
    #[error("basis class {name:?} has degree {degree} above top degree {top}")]
    DegreeOutOfRange { name: String, degree: u32, top: u32 },
    #[error("product of {i:?} and {j:?} leaves degree {expected}")]
    DegreeViolation { i: String, j: String, expected: u32 },
    #[error("multiplication is not commutative on ({i:?}, {j:?})")]
    NotCommutative { i: String, j: String },
    #[error("multiplication is not associative on ({i:?}, {j:?}, {k:?})")]
    NonAssociative { i: String, j: String, k: String },
    #[error("unit class does not act as identity on {i:?}")]
    UnitNotIdentity { i: String },
    #[error("counit is nonzero on {name:?} outside the top degree")]
    BadCounitSupport { name: String },
    #[error("point class must have top degree and counit value 1")]
    BadPointClass,
    #[error("the pairing <a, b> = T(a*b) is degenerate")]
    DegeneratePairing,
    #[error("distinguished class {which:?} is not homogeneous of degree {expected}")]
    BadElementDegree { which: String, expected: u32 },
}

/// Errors from model-file I/O.
#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("cannot read model file: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed model JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unknown basis name {0:?}")]
    UnknownBasisName(String),
    #[error("duplicate basis name {0:?}")]
    DuplicateBasisName(String),
    #[error("malformed rational {0:?}")]
    BadRational(String),
    #[error("model violates algebra invariants: {}", format_defects(.0))]
    Invalid(Vec<ValidationDefect>),
}

fn format_defects(defects: &[ValidationDefect]) -> String {
    defects
        .iter()
        .map(|d| d.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

/// A graded Frobenius algebra with distinguished canonical and Euler classes.
pub struct GradedFrobeniusAlgebra {
    name: String,
    top_degree: u32,
    basis: Vec<BasisClass>,
    mult: Vec<Vec<AlgebraElement>>,
    counit: Vec<Scalar>,
    unit: usize,
    point: usize,
    canonical: AlgebraElement,
    euler: AlgebraElement,
    pairing: OnceLock<Vec<Vec<Scalar>>>,
    dual: OnceLock<Option<Vec<AlgebraElement>>>,
    coproducts: Mutex<BTreeMap<(usize, usize), Arc<TensorElement>>>,
}

impl fmt::Debug for GradedFrobeniusAlgebra {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GradedFrobeniusAlgebra")
            .field("name", &self.name)
            .field("dim", &self.basis.len())
            .field("top_degree", &self.top_degree)
            .finish()
    }
}

impl GradedFrobeniusAlgebra {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: impl Into<String>,
        top_degree: u32,
        basis: Vec<BasisClass>,
        mult: Vec<Vec<AlgebraElement>>,
        counit: Vec<Scalar>,
        unit: usize,
        point: usize,
        canonical: AlgebraElement,
        euler: AlgebraElement,
    ) -> Self {
        GradedFrobeniusAlgebra {
            name: name.into(),
            top_degree,
            basis,
            mult,
            counit,
            unit,
            point,
            canonical,
            euler,
            pairing: OnceLock::new(),
            dual: OnceLock::new(),
            coproducts: Mutex::new(BTreeMap::new()),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn top_degree(&self) -> u32 {
        self.top_degree
    }

    pub fn basis(&self) -> &[BasisClass] {
        &self.basis
    }

    pub fn degree_of(&self, index: usize) -> u32 {
        self.basis[index].degree
    }

    pub fn unit_index(&self) -> usize {
        self.unit
    }

    pub fn point_index(&self) -> usize {
        self.point
    }

    pub fn unit(&self) -> AlgebraElement {
        AlgebraElement::basis(self.unit)
    }

    pub fn point(&self) -> AlgebraElement {
        AlgebraElement::basis(self.point)
    }

    /// The canonical class `K`.
    pub fn canonical_class(&self) -> &AlgebraElement {
        &self.canonical
    }

    /// The Euler class `e`.
    pub fn euler_class(&self) -> &AlgebraElement {
        &self.euler
    }

    pub fn basis_index(&self, name: &str) -> Option<usize> {
        self.basis.iter().position(|b| b.name == name)
    }

    pub fn basis_product(&self, i: usize, j: usize) -> &AlgebraElement {
        &self.mult[i][j]
    }

    pub fn multiply(&self, a: &AlgebraElement, b: &AlgebraElement) -> AlgebraElement {
        let mut out = AlgebraElement::zero();
        for (i, ca) in a.iter() {
            for (j, cb) in b.iter() {
                out.add_scaled(&self.mult[i][j], &(ca * cb));
            }
        }
        out
    }

    /// The counit `T`.
    pub fn integrate(&self, a: &AlgebraElement) -> Scalar {
        let mut out = Scalar::zero();
        for (i, c) in a.iter() {
            out += &(c * &self.counit[i]);
        }
        out
    }

    /// `<a, b> = T(a*b)`.
    pub fn pair(&self, a: &AlgebraElement, b: &AlgebraElement) -> Scalar {
        self.integrate(&self.multiply(a, b))
    }

    /// Pairing Gram matrix on the basis.
    pub fn pairing_matrix(&self) -> &Vec<Vec<Scalar>> {
        self.pairing.get_or_init(|| {
            let n = self.dim();
            (0..n)
                .map(|i| {
                    (0..n)
                        .map(|j| self.integrate(&self.mult[i][j]))
                        .collect()
                })
                .collect()
        })
    }

    /// Dual basis `e^j` with `<e^j, e_i> = delta_{ij}`, or `None` when the
    /// pairing is degenerate.
    pub fn dual_basis(&self) -> Option<&Vec<AlgebraElement>> {
        self.dual
            .get_or_init(|| {
                let inv = invert_matrix(self.pairing_matrix())?;
                // Column j of the inverse gives the expansion of e^j.
                let n = self.dim();
                let duals = (0..n)
                    .map(|j| {
                        let mut e = AlgebraElement::zero();
                        for (i, row) in inv.iter().enumerate() {
                            e.set_coeff(i, row[j].clone());
                        }
                        e
                    })
                    .collect();
                Some(duals)
            })
            .as_ref()
    }

    /// Coproduct of a basis element, cached.
    fn coproduct_basis(&self, index: usize, k: usize) -> Arc<TensorElement> {
        if let Some(hit) = self
            .coproducts
            .lock()
            .expect("coproduct cache poisoned")
            .get(&(index, k))
        {
            return hit.clone();
        }
        let computed = Arc::new(self.coproduct_uncached(&AlgebraElement::basis(index), k));
        self.coproducts
            .lock()
            .expect("coproduct cache poisoned")
            .entry((index, k))
            .or_insert(computed)
            .clone()
    }

    /// `k`-th coproduct of `a`: the unique tensor `C` with
    /// `<C, b_1 x ... x b_k> = T(a * b_1 * ... * b_k)` for all basis tuples.
    pub fn coproduct(&self, a: &AlgebraElement, k: usize) -> TensorElement {
        let mut out = TensorElement::zero(k);
        for (i, c) in a.iter() {
            out.add_scaled(&self.coproduct_basis(i, k), c);
        }
        out
    }

    fn coproduct_uncached(&self, a: &AlgebraElement, k: usize) -> TensorElement {
        if k == 0 {
            return TensorElement::scalar(self.integrate(a));
        }
        let duals = self
            .dual_basis()
            .expect("degenerate pairing: validate the algebra first");
        let mut out = TensorElement::zero(k);
        let mut tuple = vec![0usize; k];
        self.coproduct_rec(a, k, 0, &mut tuple, duals, &mut out);
        out
    }

    fn coproduct_rec(
        &self,
        partial: &AlgebraElement,
        k: usize,
        depth: usize,
        tuple: &mut Vec<usize>,
        duals: &[AlgebraElement],
        out: &mut TensorElement,
    ) {
        if partial.is_zero() {
            return;
        }
        if depth == k {
            let weight = self.integrate(partial);
            if weight.is_zero() {
                return;
            }
            // T(a e_{j_1} ... e_{j_k}) * e^{j_1} x ... x e^{j_k}, expanded
            // into basis tensors through the dual-basis coordinates.
            let mut indices = vec![0usize; k];
            expand_dual_product(duals, tuple, 0, &weight, &mut indices, out);
            return;
        }
        for j in 0..self.dim() {
            tuple[depth] = j;
            let next = self.multiply(partial, &AlgebraElement::basis(j));
            self.coproduct_rec(&next, k, depth + 1, tuple, duals, out);
        }
    }

    /// All structural defects of the algebra data; empty means valid.
    pub fn validate(&self) -> Vec<ValidationDefect> {
        let mut defects = Vec::new();
        let n = self.dim();
        for b in &self.basis {
            if b.degree % 2 != 0 {
                defects.push(ValidationDefect::OddDegreeBasis {
                    name: b.name.clone(),
                    degree: b.degree,
                });
            }
            if b.degree > self.top_degree {
                defects.push(ValidationDefect::DegreeOutOfRange {
                    name: b.name.clone(),
                    degree: b.degree,
                    top: self.top_degree,
                });
            }
        }
        for i in 0..n {
            for j in 0..n {
                let product = &self.mult[i][j];
                let expected = self.basis[i].degree + self.basis[j].degree;
                let homogeneous = product
                    .iter()
                    .all(|(idx, _)| self.basis[idx].degree == expected);
                if !homogeneous {
                    defects.push(ValidationDefect::DegreeViolation {
                        i: self.basis[i].name.clone(),
                        j: self.basis[j].name.clone(),
                        expected,
                    });
                }
                if self.mult[i][j] != self.mult[j][i] {
                    defects.push(ValidationDefect::NotCommutative {
                        i: self.basis[i].name.clone(),
                        j: self.basis[j].name.clone(),
                    });
                }
            }
        }
        for j in 0..n {
            if self.mult[self.unit][j] != AlgebraElement::basis(j) {
                defects.push(ValidationDefect::UnitNotIdentity {
                    i: self.basis[j].name.clone(),
                });
            }
        }
        'triples: for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let left = self.multiply(&self.mult[i][j], &AlgebraElement::basis(k));
                    let right = self.multiply(&AlgebraElement::basis(i), &self.mult[j][k]);
                    if left != right {
                        defects.push(ValidationDefect::NonAssociative {
                            i: self.basis[i].name.clone(),
                            j: self.basis[j].name.clone(),
                            k: self.basis[k].name.clone(),
                        });
                        break 'triples;
                    }
                }
            }
        }
        for (i, value) in self.counit.iter().enumerate() {
            if !value.is_zero() && self.basis[i].degree != self.top_degree {
                defects.push(ValidationDefect::BadCounitSupport {
                    name: self.basis[i].name.clone(),
                });
            }
        }
        if self.basis[self.point].degree != self.top_degree
            || self.counit[self.point] != Scalar::one()
        {
            defects.push(ValidationDefect::BadPointClass);
        }
        if invert_matrix(self.pairing_matrix()).is_none() {
            defects.push(ValidationDefect::DegeneratePairing);
        }
        for (which, elem, expected) in [
            ("K", &self.canonical, 2u32),
            ("e", &self.euler, self.top_degree),
        ] {
            let homogeneous = elem
                .iter()
                .all(|(idx, _)| self.basis[idx].degree == expected);
            if !homogeneous {
                defects.push(ValidationDefect::BadElementDegree {
                    which: which.to_string(),
                    expected,
                });
            }
        }
        defects
    }

    /// Render an element with basis names, e.g. `-3/1*h`.
    pub fn element_string(&self, a: &AlgebraElement) -> String {
        if a.is_zero() {
            return "0".to_string();
        }
        a.iter()
            .map(|(i, c)| format!("{}*{}", c.file_string(), self.basis[i].name))
            .collect::<Vec<_>>()
            .join(" + ")
    }

    fn element_from_names(
        &self,
        coeffs: &BTreeMap<String, String>,
    ) -> Result<AlgebraElement, ModelError> {
        let mut out = AlgebraElement::zero();
        for (name, value) in coeffs {
            let index = self
                .basis_index(name)
                .ok_or_else(|| ModelError::UnknownBasisName(name.clone()))?;
            let r = parse_rational(value)
                .map_err(|_| ModelError::BadRational(value.clone()))?;
            out.set_coeff(index, Scalar::from_rational(r));
        }
        Ok(out)
    }
}

/// Exact inverse of a square Scalar matrix, or `None` if singular.
pub fn invert_matrix(m: &[Vec<Scalar>]) -> Option<Vec<Vec<Scalar>>> {
    let n = m.len();
    let mut a: Vec<Vec<Scalar>> = m.to_vec();
    let mut inv: Vec<Vec<Scalar>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| if i == j { Scalar::one() } else { Scalar::zero() })
                .collect()
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n).find(|&r| !a[r][col].is_zero())?;
        a.swap(col, pivot);
        inv.swap(col, pivot);
        let lead = a[col][col].clone();
        let lead_inv = lead.inverse()?;
        for j in 0..n {
            a[col][j] = &a[col][j] * &lead_inv;
            inv[col][j] = &inv[col][j] * &lead_inv;
        }
        for r in 0..n {
            if r == col || a[r][col].is_zero() {
                continue;
            }
            let factor = a[r][col].clone();
            for j in 0..n {
                let da = &factor * &a[col][j];
                let di = &factor * &inv[col][j];
                a[r][j] -= da;
                inv[r][j] -= di;
            }
        }
    }
    Some(inv)
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LinearSolveError {
    #[error("system is rank deficient: {missing} unknowns undetermined")]
    RankDeficient { missing: usize },
    #[error("system admits no exact solution")]
    Inconsistent,
}

/// Solve `rows * x = rhs` exactly over the Gaussian rationals.  The system
/// must determine every unknown uniquely: underdetermined systems report
/// `RankDeficient` and contradictory ones `Inconsistent`.
pub fn solve_linear_system(
    rows: &[Vec<Scalar>],
    rhs: &[Scalar],
) -> Result<Vec<Scalar>, LinearSolveError> {
    assert_eq!(rows.len(), rhs.len(), "one right-hand side per row");
    let unknowns = rows.first().map(|r| r.len()).unwrap_or(0);
    let mut aug: Vec<(Vec<Scalar>, Scalar)> = rows
        .iter()
        .cloned()
        .zip(rhs.iter().cloned())
        .collect();
    let mut pivot_cols: Vec<usize> = Vec::new();
    for col in 0..unknowns {
        let start = pivot_cols.len();
        let Some(found) = (start..aug.len()).find(|&r| !aug[r].0[col].is_zero()) else {
            continue;
        };
        aug.swap(start, found);
        let inv = aug[start].0[col]
            .inverse()
            .expect("pivot entry is nonzero");
        for c in col..unknowns {
            aug[start].0[c] = &aug[start].0[c] * &inv;
        }
        aug[start].1 = &aug[start].1 * &inv;
        let pivot_row = aug[start].clone();
        for (r, row) in aug.iter_mut().enumerate() {
            if r == start || row.0[col].is_zero() {
                continue;
            }
            let factor = row.0[col].clone();
            for c in col..unknowns {
                let delta = &factor * &pivot_row.0[c];
                row.0[c] -= delta;
            }
            let delta = &factor * &pivot_row.1;
            row.1 -= delta;
        }
        pivot_cols.push(col);
    }
    for (coeffs, value) in aug.iter().skip(pivot_cols.len()) {
        if coeffs.iter().all(|c| c.is_zero()) && !value.is_zero() {
            return Err(LinearSolveError::Inconsistent);
        }
    }
    if pivot_cols.len() < unknowns {
        return Err(LinearSolveError::RankDeficient {
            missing: unknowns - pivot_cols.len(),
        });
    }
    let mut solution = vec![Scalar::zero(); unknowns];
    for (row, &col) in pivot_cols.iter().enumerate() {
        solution[col] = aug[row].1.clone();
    }
    Ok(solution)
}

fn expand_dual_product(
    duals: &[AlgebraElement],
    tuple: &[usize],
    depth: usize,
    weight: &Scalar,
    indices: &mut Vec<usize>,
    out: &mut TensorElement,
) {
    if weight.is_zero() {
        return;
    }
    if depth == tuple.len() {
        out.add_entry(indices, weight.clone());
        return;
    }
    for (i, c) in duals[tuple[depth]].iter() {
        indices[depth] = i;
        expand_dual_product(duals, tuple, depth + 1, &(weight * c), indices, out);
    }
}

// ---------------------------------------------------------------------------
// Model files
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
struct MultEntry {
    i: String,
    j: String,
    coeffs: BTreeMap<String, String>,
}

/// On-disk model description.  All rationals are strings `p/q` with `q > 0`
/// and `gcd(p, q) = 1` on output; bare integers are accepted on input.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    name: String,
    top_degree: u32,
    basis: Vec<BasisClass>,
    unit: String,
    point: String,
    mult: Vec<MultEntry>,
    counit: BTreeMap<String, String>,
    #[serde(rename = "K")]
    canonical: BTreeMap<String, String>,
    e: BTreeMap<String, String>,
}

impl GradedFrobeniusAlgebra {
    pub fn from_model(model: &ModelFile) -> Result<Arc<Self>, ModelError> {
        let n = model.basis.len();
        let mut seen = BTreeMap::new();
        for (i, b) in model.basis.iter().enumerate() {
            if seen.insert(b.name.clone(), i).is_some() {
                return Err(ModelError::DuplicateBasisName(b.name.clone()));
            }
        }
        let index_of = |name: &str| -> Result<usize, ModelError> {
            seen.get(name)
                .copied()
                .ok_or_else(|| ModelError::UnknownBasisName(name.to_string()))
        };
        let unit = index_of(&model.unit)?;
        let point = index_of(&model.point)?;
        let mut mult = vec![vec![AlgebraElement::zero(); n]; n];
        let mut given = vec![vec![false; n]; n];
        let mut shell = GradedFrobeniusAlgebra::new(
            model.name.clone(),
            model.top_degree,
            model.basis.clone(),
            mult.clone(),
            vec![Scalar::zero(); n],
            unit,
            point,
            AlgebraElement::zero(),
            AlgebraElement::zero(),
        );
        for entry in &model.mult {
            let i = index_of(&entry.i)?;
            let j = index_of(&entry.j)?;
            let value = shell.element_from_names(&entry.coeffs)?;
            mult[i][j] = value;
            given[i][j] = true;
        }
        // Mirror one-sided entries; explicit asymmetric pairs are kept as
        // given so validation can surface the commutativity defect.
        for i in 0..n {
            for j in 0..n {
                if given[i][j] && !given[j][i] {
                    mult[j][i] = mult[i][j].clone();
                    given[j][i] = true;
                }
            }
        }
        let mut counit = vec![Scalar::zero(); n];
        for (name, value) in &model.counit {
            let i = index_of(name)?;
            let r = parse_rational(value)
                .map_err(|_| ModelError::BadRational(value.clone()))?;
            counit[i] = Scalar::from_rational(r);
        }
        shell.mult = mult;
        shell.counit = counit;
        shell.canonical = shell.element_from_names(&model.canonical)?;
        shell.euler = shell.element_from_names(&model.e)?;
        let algebra = Arc::new(shell);
        let defects = algebra.validate();
        if !defects.is_empty() {
            return Err(ModelError::Invalid(defects));
        }
        Ok(algebra)
    }

    /// Canonical export: sorted upper-triangle mult entries, nonzero
    /// coefficients only, rationals in `p/q` form.
    pub fn to_model(&self) -> ModelFile {
        let names: Vec<&str> = self.basis.iter().map(|b| b.name.as_str()).collect();
        let elem_map = |a: &AlgebraElement| -> BTreeMap<String, String> {
            a.iter()
                .map(|(i, c)| {
                    let r = c
                        .as_rational()
                        .expect("model coefficients are rational")
                        .clone();
                    (names[i].to_string(), rational_file_string(&r))
                })
                .collect()
        };
        let mut mult = Vec::new();
        for i in 0..self.dim() {
            for j in i..self.dim() {
                if !self.mult[i][j].is_zero() {
                    mult.push(MultEntry {
                        i: names[i].to_string(),
                        j: names[j].to_string(),
                        coeffs: elem_map(&self.mult[i][j]),
                    });
                }
            }
        }
        let counit = self
            .counit
            .iter()
            .enumerate()
            .filter(|(_, v)| !v.is_zero())
            .map(|(i, v)| {
                let r = v.as_rational().expect("counit is rational").clone();
                (names[i].to_string(), rational_file_string(&r))
            })
            .collect();
        ModelFile {
            name: self.name.clone(),
            top_degree: self.top_degree,
            basis: self.basis.clone(),
            unit: names[self.unit].to_string(),
            point: names[self.point].to_string(),
            mult,
            counit,
            canonical: elem_map(&self.canonical),
            e: elem_map(&self.euler),
        }
    }

    pub fn load_file(path: impl AsRef<Path>) -> Result<Arc<Self>, ModelError> {
        let text = std::fs::read_to_string(path)?;
        let model: ModelFile = serde_json::from_str(&text)?;
        Self::from_model(&model)
    }

    pub fn save_file(&self, path: impl AsRef<Path>) -> Result<(), ModelError> {
        std::fs::write(path, self.to_canonical_json())?;
        Ok(())
    }

    pub fn to_canonical_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(&self.to_model())
            .expect("model serialization cannot fail");
        text.push('\n');
        text
    }
}

// ---------------------------------------------------------------------------
// Built-in fixtures
// ---------------------------------------------------------------------------

/// Built-in surface models used by the verification suites.
pub mod fixtures {
    use super::*;

    struct Builder {
        name: String,
        top: u32,
        basis: Vec<BasisClass>,
        products: Vec<(usize, usize, AlgebraElement)>,
        counit: Vec<(usize, Scalar)>,
        unit: usize,
        point: usize,
        canonical: AlgebraElement,
        euler: AlgebraElement,
    }

    impl Builder {
        fn build(self) -> Arc<GradedFrobeniusAlgebra> {
            let n = self.basis.len();
            let mut mult = vec![vec![AlgebraElement::zero(); n]; n];
            for (j, row) in mult.iter_mut().enumerate() {
                row[self.unit] = AlgebraElement::basis(j);
            }
            for (j, cell) in mult[self.unit].iter_mut().enumerate() {
                *cell = AlgebraElement::basis(j);
            }
            for (i, j, value) in self.products {
                mult[i][j] = value.clone();
                mult[j][i] = value;
            }
            let mut counit = vec![Scalar::zero(); n];
            for (i, value) in self.counit {
                counit[i] = value;
            }
            let alg = Arc::new(GradedFrobeniusAlgebra::new(
                self.name,
                self.top,
                self.basis,
                mult,
                counit,
                self.unit,
                self.point,
                self.canonical,
                self.euler,
            ));
            let defects = alg.validate();
            assert!(defects.is_empty(), "fixture invalid: {defects:?}");
            alg
        }
    }

    fn deg(name: &str, degree: u32) -> BasisClass {
        BasisClass {
            name: name.to_string(),
            degree,
        }
    }

    /// The projective plane: basis `1, h, x` with `h*h = x`, `K = -3h`,
    /// `e = 3x`.
    pub fn p2() -> Arc<GradedFrobeniusAlgebra> {
        let mut canonical = AlgebraElement::zero();
        canonical.set_coeff(1, Scalar::from_int(-3));
        let mut euler = AlgebraElement::zero();
        euler.set_coeff(2, Scalar::from_int(3));
        Builder {
            name: "p2".to_string(),
            top: 4,
            basis: vec![deg("1", 0), deg("h", 2), deg("x", 4)],
            products: vec![(1, 1, AlgebraElement::basis(2))],
            counit: vec![(2, Scalar::one())],
            unit: 0,
            point: 2,
            canonical,
            euler,
        }
        .build()
    }

    /// A quadric: basis `1, f1, f2, x` with `f1*f2 = x`, square-zero rulings,
    /// `K = -2f1 - 2f2`, `e = 4x`.
    pub fn p1xp1() -> Arc<GradedFrobeniusAlgebra> {
        let mut canonical = AlgebraElement::zero();
        canonical.set_coeff(1, Scalar::from_int(-2));
        canonical.set_coeff(2, Scalar::from_int(-2));
        let mut euler = AlgebraElement::zero();
        euler.set_coeff(3, Scalar::from_int(4));
        Builder {
            name: "p1xp1".to_string(),
            top: 4,
            basis: vec![deg("1", 0), deg("f1", 2), deg("f2", 2), deg("x", 4)],
            products: vec![(1, 2, AlgebraElement::basis(3))],
            counit: vec![(3, Scalar::one())],
            unit: 0,
            point: 3,
            canonical,
            euler,
        }
        .build()
    }

    /// The plane blown up at `r` points: exceptional classes square to `-x`,
    /// `K = -3h + sum(e_i)`, `e = (3+r) x`.  `K*K = (9-r) x` and the Euler
    /// number is `3 + r`, so different `r` give independent test data.
    pub fn blowup(r: usize) -> Arc<GradedFrobeniusAlgebra> {
        assert!(r >= 1, "blowup needs at least one point");
        let mut basis = vec![deg("1", 0), deg("h", 2)];
        for i in 1..=r {
            basis.push(deg(&format!("e{i}"), 2));
        }
        let point = basis.len();
        basis.push(deg("x", 4));
        let mut products = vec![(1, 1, AlgebraElement::basis(point))];
        for i in 0..r {
            products.push((2 + i, 2 + i, AlgebraElement::basis(point).scaled(&Scalar::from_int(-1))));
        }
        let mut canonical = AlgebraElement::zero();
        canonical.set_coeff(1, Scalar::from_int(-3));
        for i in 0..r {
            canonical.set_coeff(2 + i, Scalar::one());
        }
        let mut euler = AlgebraElement::zero();
        euler.set_coeff(point, Scalar::from_int(3 + r as i64));
        Builder {
            name: format!("p2-blowup-{r}"),
            top: 4,
            basis,
            products,
            counit: vec![(point, Scalar::one())],
            unit: 0,
            point,
            canonical,
            euler,
        }
        .build()
    }

    /// A synthetic model with trivial canonical class and a non-unimodular
    /// middle pairing: `h*h = 2x`, `K = 0`, `e = 3x`.  Useful for isolating
    /// the cubic part of operators whose other terms carry `K`.
    pub fn k_trivial() -> Arc<GradedFrobeniusAlgebra> {
        let mut euler = AlgebraElement::zero();
        euler.set_coeff(2, Scalar::from_int(3));
        Builder {
            name: "k-trivial".to_string(),
            top: 4,
            basis: vec![deg("1", 0), deg("h", 2), deg("x", 4)],
            products: vec![(1, 1, AlgebraElement::basis(2).scaled(&Scalar::from_int(2)))],
            counit: vec![(2, Scalar::one())],
            unit: 0,
            point: 2,
            canonical: AlgebraElement::zero(),
            euler,
        }
        .build()
    }

    /// Look up a fixture by name: `p2`, `p1xp1`, `p2-blowup-<r>`, `k-trivial`.
    pub fn by_name(name: &str) -> Option<Arc<GradedFrobeniusAlgebra>> {
        match name {
            "p2" => Some(p2()),
            "p1xp1" => Some(p1xp1()),
            "k-trivial" => Some(k_trivial()),
            _ => name
                .strip_prefix("p2-blowup-")
                .and_then(|r| r.parse::<usize>().ok())
                .filter(|&r| (1..=4).contains(&r))
                .map(blowup),
        }
    }

    /// Names accepted by `by_name`, in canonical order.
    pub fn names() -> Vec<&'static str> {
        vec!["p2", "p1xp1", "p2-blowup-1", "p2-blowup-2", "k-trivial"]
    }
}

/// Euler-class sanity: the diagonal class `sum_i e_i * e^i`.  Honest surface
/// models satisfy `euler_class == diagonal_euler_class`.
pub fn diagonal_euler_class(alg: &GradedFrobeniusAlgebra) -> Option<AlgebraElement> {
    let duals = alg.dual_basis()?;
    let mut out = AlgebraElement::zero();
    for (i, dual) in duals.iter().enumerate() {
        let product = alg.multiply(&AlgebraElement::basis(i), dual);
        out.add_scaled(&product, &Scalar::one());
    }
    Some(out)
}
