//! Fock-to-qubit sign mappings and the commuting-diagram search.
//!
//! A mapping multiplies selected basis vectors (rows and the matching
//! columns of the matrix representation) by -1. Globally all such
//! mappings are unitarily equivalent; they stop being interchangeable
//! once partial traces enter, because the naive tensor-product trace on
//! the qubit side must reproduce the fermionic inside-out trace. The
//! search below decides, per coefficient sparsity pattern, whether any
//! sign assignment makes the diagram commute for generic coefficients.

use std::collections::BTreeSet;

use num_complex::Complex64;
use thiserror::Error;

use crate::numerics::ComplexMatrix;
use crate::states::{ChargePattern, DensityOperator};
use crate::trace::{element_contributions, inside_out_matrix, ModePartition};

#[derive(Debug, Error, PartialEq)]
pub enum MappingError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("no consistent mapping witness available: {0}")]
    NoMappingWitness(String),
}

/// One sign per occupation basis vector, vacuum fixed to +1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignAssignment {
    n_modes: usize,
    signs: Vec<i8>,
}

impl SignAssignment {
    /// Decode a bitmask over the non-vacuum basis vectors: bit `i-1`
    /// set means basis vector `i` carries -1.
    pub fn from_mask(n_modes: usize, mask: usize) -> Self {
        let dim = 1usize << n_modes;
        assert!(mask < (1usize << (dim - 1)), "mask out of range");
        let signs = (0..dim)
            .map(|i| {
                if i > 0 && mask & (1 << (i - 1)) != 0 {
                    -1
                } else {
                    1
                }
            })
            .collect();
        SignAssignment { n_modes, signs }
    }

    pub fn identity(n_modes: usize) -> Self {
        Self::from_mask(n_modes, 0)
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn signs(&self) -> &[i8] {
        &self.signs
    }

    pub fn sign(&self, index: usize) -> i8 {
        self.signs[index]
    }

    /// Conjugate a matrix by diag(signs).
    pub fn conjugate(&self, m: &ComplexMatrix) -> ComplexMatrix {
        let dim = self.signs.len();
        assert_eq!((m.rows(), m.cols()), (dim, dim));
        let mut out = m.clone();
        for r in 0..dim {
            for c in 0..dim {
                let s = (self.signs[r] * self.signs[c]) as f64;
                out.set(r, c, m.get(r, c) * s);
            }
        }
        out
    }
}

/// The representation pi_i(rho) = D rho D with D = diag(signs).
pub fn apply_mapping(
    rho: &DensityOperator,
    s: &SignAssignment,
) -> Result<ComplexMatrix, MappingError> {
    if s.n_modes() != rho.n_modes() {
        return Err(MappingError::DimensionMismatch(format!(
            "state has {} modes, sign assignment {}",
            rho.n_modes(),
            s.n_modes()
        )));
    }
    Ok(s.conjugate(rho.matrix()))
}

/// Standard index-contraction partial trace on the qubit tensor
/// structure (no fermionic signs).
pub fn naive_tensor_trace(m: &ComplexMatrix, p: &ModePartition) -> ComplexMatrix {
    let kept_dim = p.kept_dim();
    let traced_dim = 1usize << p.traced().len();
    let mut out = ComplexMatrix::zeros(kept_dim, kept_dim);
    for r in 0..kept_dim {
        for c in 0..kept_dim {
            let mut acc = Complex64::new(0.0, 0.0);
            for t in 0..traced_dim {
                acc += m.get(p.global_index(r, t), p.global_index(c, t));
            }
            out.set(r, c, acc);
        }
    }
    out
}

/// Signed-contribution table: for each reduced element, which global
/// elements feed it under the fermionic partial trace and with which
/// relative sign. Purely structural, no state required.
#[derive(Debug, Clone)]
pub struct CoefficientFlow {
    kept_dim: usize,
    table: Vec<Vec<((usize, usize), i8)>>,
}

impl CoefficientFlow {
    pub fn kept_dim(&self) -> usize {
        self.kept_dim
    }

    pub fn contributions(&self, r: usize, c: usize) -> &[((usize, usize), i8)] {
        &self.table[r * self.kept_dim + c]
    }
}

pub fn coefficient_flow(n_modes: usize, p: &ModePartition) -> CoefficientFlow {
    assert_eq!(n_modes, p.n_modes());
    CoefficientFlow {
        kept_dim: p.kept_dim(),
        table: element_contributions(p),
    }
}

/// Which off-diagonal coefficients of the global matrix may be nonzero.
/// Diagonal entries are always allowed. Positions are stored with
/// row < column; the conjugate mirror is implied.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparsityPattern {
    n_modes: usize,
    allowed: BTreeSet<(usize, usize)>,
}

impl SparsityPattern {
    pub fn new(n_modes: usize, positions: &[(usize, usize)]) -> Self {
        let allowed = positions
            .iter()
            .map(|&(r, c)| (r.min(c), r.max(c)))
            .filter(|&(r, c)| r != c)
            .collect();
        SparsityPattern { n_modes, allowed }
    }

    /// Every off-diagonal coefficient free.
    pub fn unrestricted(n_modes: usize) -> Self {
        let dim = 1usize << n_modes;
        let positions: Vec<(usize, usize)> = (0..dim)
            .flat_map(|r| ((r + 1)..dim).map(move |c| (r, c)))
            .collect();
        Self::new(n_modes, &positions)
    }

    /// Coherences allowed exactly between equal-charge basis vectors.
    pub fn from_charges(charges: &ChargePattern) -> Self {
        let n_modes = charges.n_modes();
        let dim = 1usize << n_modes;
        let positions: Vec<(usize, usize)> = (0..dim)
            .flat_map(|r| ((r + 1)..dim).map(move |c| (r, c)))
            .filter(|&(r, c)| charges.charge_of_index(r) == charges.charge_of_index(c))
            .collect();
        Self::new(n_modes, &positions)
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn allows(&self, r: usize, c: usize) -> bool {
        r == c || self.allowed.contains(&(r.min(c), r.max(c)))
    }

    pub fn allowed(&self) -> &BTreeSet<(usize, usize)> {
        &self.allowed
    }
}

/// Outcome of the exhaustive sign-assignment search.
#[derive(Debug, Clone)]
pub struct MappingVerdict {
    pub exists: bool,
    pub witnesses: Vec<SignAssignment>,
    /// Human-readable description of an unsatisfiable subset of sign
    /// equations; empty when a witness exists.
    pub obstruction: String,
}

/// Union-find with parity, for the per-assignment consistency check.
struct ParityDsu {
    parent: Vec<usize>,
    /// Parity of the path to the representative.
    offset: Vec<u8>,
}

impl ParityDsu {
    fn new(n: usize) -> Self {
        ParityDsu {
            parent: (0..n).collect(),
            offset: vec![0; n],
        }
    }

    fn find(&mut self, x: usize) -> (usize, u8) {
        if self.parent[x] == x {
            return (x, 0);
        }
        let (root, parity) = self.find(self.parent[x]);
        self.parent[x] = root;
        self.offset[x] ^= parity;
        (root, self.offset[x])
    }

    /// Enforce x xor y = value; false on contradiction.
    fn union(&mut self, x: usize, y: usize, value: u8) -> bool {
        let (rx, px) = self.find(x);
        let (ry, py) = self.find(y);
        if rx == ry {
            return px ^ py == value;
        }
        self.parent[rx] = ry;
        self.offset[rx] = px ^ py ^ value;
        true
    }
}

/// One structural sign equation produced by a partition.
#[derive(Debug, Clone)]
struct SignEquation {
    partition_label: usize,
    reduced: (usize, usize),
    global: (usize, usize),
    fermionic_sign: i8,
}

/// Collect the sign equations for every partition: the qubit-side trace
/// contributes s(R)s(C), the fermionic side f(R,C) s'(r)s'(c), and for
/// generic coefficients those must agree per contribution.
fn sign_equations(pattern: &SparsityPattern, partitions: &[ModePartition]) -> Vec<SignEquation> {
    let mut equations = Vec::new();
    for p in partitions {
        let flow = coefficient_flow(pattern.n_modes(), p);
        let kept_dim = flow.kept_dim();
        for r in 0..kept_dim {
            for c in 0..kept_dim {
                for &((ket, bra), sign) in flow.contributions(r, c) {
                    if ket >= bra || !pattern.allows(ket, bra) {
                        // Diagonal equations are trivially satisfied and
                        // the lower triangle mirrors the upper.
                        continue;
                    }
                    equations.push(SignEquation {
                        partition_label: p.traced()[0],
                        reduced: (r, c),
                        global: (ket, bra),
                        fermionic_sign: sign,
                    });
                }
            }
        }
    }
    equations
}

/// Check one candidate global assignment against all partitions,
/// existentially solving for a reduced-side assignment per partition.
fn assignment_consistent(
    s: &SignAssignment,
    equations: &[SignEquation],
    partitions: &[ModePartition],
) -> bool {
    for p in partitions {
        let kept_dim = p.kept_dim();
        let mut dsu = ParityDsu::new(kept_dim);
        for eq in equations
            .iter()
            .filter(|eq| eq.partition_label == p.traced()[0])
        {
            let lhs = (s.sign(eq.global.0) * s.sign(eq.global.1) * eq.fermionic_sign) < 0;
            if !dsu.union(eq.reduced.0, eq.reduced.1, lhs as u8) {
                return false;
            }
        }
    }
    true
}

/// GF(2) elimination over global and reduced sign bits, tracking which
/// original equations combine into a contradiction.
fn find_obstruction(
    pattern: &SparsityPattern,
    partitions: &[ModePartition],
    equations: &[SignEquation],
) -> String {
    let n_modes = pattern.n_modes();
    let global_vars = (1usize << n_modes) - 1; // vacuum sign is fixed
    let mut var_count = global_vars;
    let mut reduced_var_base = std::collections::BTreeMap::new();
    for p in partitions {
        reduced_var_base.insert(p.traced()[0], var_count);
        var_count += p.kept_dim() - 1; // reduced vacuum sign fixed too
    }

    // Row = (coefficient bits, rhs, combination of original equations).
    let mut rows: Vec<(u128, u8, u128)> = Vec::new();
    for (idx, eq) in equations.iter().enumerate() {
        let mut bits: u128 = 0;
        for g in [eq.global.0, eq.global.1] {
            if g > 0 {
                bits ^= 1u128 << (g - 1);
            }
        }
        let base = reduced_var_base[&eq.partition_label];
        for r in [eq.reduced.0, eq.reduced.1] {
            if r > 0 {
                bits ^= 1u128 << (base + r - 1);
            }
        }
        let rhs = (eq.fermionic_sign < 0) as u8;
        rows.push((bits, rhs, 1u128 << idx));
    }

    // Forward elimination; a zero row with rhs 1 is the contradiction.
    let mut pivots: Vec<(usize, usize)> = Vec::new(); // (row, bit)
    for i in 0..rows.len() {
        let mut row = rows[i];
        for &(r, bit) in &pivots {
            if row.0 & (1u128 << bit) != 0 {
                row.0 ^= rows[r].0;
                row.1 ^= rows[r].1;
                row.2 ^= rows[r].2;
            }
        }
        rows[i] = row;
        if row.0 == 0 {
            if row.1 == 1 {
                let involved: Vec<String> = equations
                    .iter()
                    .enumerate()
                    .filter(|(k, _)| row.2 & (1u128 << k) != 0)
                    .map(|(_, eq)| {
                        format!(
                            "trace mode {}: reduced ({},{}) <- rho({},{}) sign {}",
                            eq.partition_label,
                            eq.reduced.0,
                            eq.reduced.1,
                            eq.global.0,
                            eq.global.1,
                            if eq.fermionic_sign > 0 { "+" } else { "-" }
                        )
                    })
                    .collect();
                return format!(
                    "unsatisfiable sign-equation subset: {}",
                    involved.join("; ")
                );
            }
            continue;
        }
        let bit = (0..var_count).find(|&b| row.0 & (1u128 << b) != 0).unwrap();
        pivots.push((i, bit));
    }
    String::new()
}

/// Exhaustively enumerate all sign assignments (global phase fixed) and
/// return every witness under which the fermionic partial traces of all
/// listed partitions commute with the mapping for generic coefficients
/// drawn from the sparsity pattern.
pub fn consistent_mapping_search(
    n_modes: usize,
    pattern: &SparsityPattern,
    partitions: &[ModePartition],
) -> MappingVerdict {
    consistent_mapping_search_jobs(n_modes, pattern, partitions, 1)
}

/// Same verdict as `consistent_mapping_search`, with the assignment
/// enumeration split over `jobs` threads. Witnesses are merged in mask
/// order, so the output is identical for every job count.
pub fn consistent_mapping_search_jobs(
    n_modes: usize,
    pattern: &SparsityPattern,
    partitions: &[ModePartition],
    jobs: usize,
) -> MappingVerdict {
    assert!(n_modes <= 4, "search space is 2^(2^n - 1) assignments");
    assert_eq!(pattern.n_modes(), n_modes);
    assert!(partitions.iter().all(|p| p.n_modes() == n_modes));

    let equations = sign_equations(pattern, partitions);
    let dim = 1usize << n_modes;
    let total = 1usize << (dim - 1);
    let jobs = jobs.clamp(1, total);

    let mut witness_masks: Vec<usize> = if jobs == 1 {
        (0..total)
            .filter(|&mask| {
                assignment_consistent(
                    &SignAssignment::from_mask(n_modes, mask),
                    &equations,
                    partitions,
                )
            })
            .collect()
    } else {
        let chunk = total.div_ceil(jobs);
        std::thread::scope(|scope| {
            let handles: Vec<_> = (0..jobs)
                .map(|j| {
                    let equations = &equations;
                    scope.spawn(move || {
                        (j * chunk..total.min((j + 1) * chunk))
                            .filter(|&mask| {
                                assignment_consistent(
                                    &SignAssignment::from_mask(n_modes, mask),
                                    equations,
                                    partitions,
                                )
                            })
                            .collect::<Vec<usize>>()
                    })
                })
                .collect();
            handles
                .into_iter()
                .flat_map(|h| h.join().expect("search worker panicked"))
                .collect()
        })
    };
    witness_masks.sort_unstable();
    let witnesses: Vec<SignAssignment> = witness_masks
        .into_iter()
        .map(|mask| SignAssignment::from_mask(n_modes, mask))
        .collect();
    let exists = !witnesses.is_empty();
    let obstruction = if exists {
        String::new()
    } else {
        find_obstruction(pattern, partitions, &equations)
    };
    MappingVerdict {
        exists,
        witnesses,
        obstruction,
    }
}

/// All single-mode traces, the partition family the commuting-diagram
/// criterion quantifies over.
pub fn single_mode_partitions(n_modes: usize) -> Vec<ModePartition> {
    (1..=n_modes)
        .map(|m| ModePartition::trace_out(n_modes, &[m]).expect("n_modes >= 2"))
        .collect()
}

/// Numeric companion to the structural search: the max-entry difference
/// between the naive qubit-side trace of the mapped state and the mapped
/// fermionic reduced state.
pub fn verify_diagram(
    rho: &DensityOperator,
    s: &SignAssignment,
    p: &ModePartition,
    reduced_signs: &SignAssignment,
) -> Result<f64, MappingError> {
    if s.n_modes() != rho.n_modes() || p.n_modes() != rho.n_modes() {
        return Err(MappingError::DimensionMismatch(format!(
            "state has {} modes, signs {}, partition {}",
            rho.n_modes(),
            s.n_modes(),
            p.n_modes()
        )));
    }
    if reduced_signs.n_modes() != p.kept().len() {
        return Err(MappingError::DimensionMismatch(format!(
            "reduced signs cover {} modes, partition keeps {}",
            reduced_signs.n_modes(),
            p.kept().len()
        )));
    }
    let mapped = s.conjugate(rho.matrix());
    let qubit_side = naive_tensor_trace(&mapped, p);
    let fermionic_side = reduced_signs.conjugate(&inside_out_matrix(rho.matrix(), p));
    Ok(qubit_side.max_abs_diff(&fermionic_side))
}

/// Best (smallest) diagram residual over all reduced-side sign choices.
pub fn best_diagram_residual(
    rho: &DensityOperator,
    s: &SignAssignment,
    p: &ModePartition,
) -> Result<f64, MappingError> {
    let kept = p.kept().len();
    let mut best = f64::INFINITY;
    for mask in 0..(1usize << ((1usize << kept) - 1)) {
        let reduced = SignAssignment::from_mask(kept, mask);
        best = best.min(verify_diagram(rho, s, p, &reduced)?);
    }
    Ok(best)
}
