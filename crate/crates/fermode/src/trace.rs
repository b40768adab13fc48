//! The fermionic partial trace over mode subspaces.
//!
//! Two independent routes are provided. `inside_out_partial_trace` is
//! the fast combinatorial rule: a global element contributes to the
//! reduced state iff ket and bra agree on every traced mode, with a sign
//! counting the anticommutations needed to bring the traced operators
//! next to the vacuum projector. `TraceOracle` instead treats the
//! defining consistency conditions as a linear system: expectation
//! values of a complete Hermitian operator set on the kept modes pin the
//! reduced matrix uniquely. The two must always agree; the oracle is the
//! arbiter of the sign convention.

use num_complex::Complex64;
use thiserror::Error;

use crate::fock::{bit_of, build_ladder_operators, LadderOperatorSet};
use crate::numerics::{trace_product, ComplexMatrix, LuReal, NumericsError};
use crate::states::{DensityOperator, StateError};

#[derive(Debug, Error, PartialEq)]
pub enum TraceError {
    #[error("invalid partition: {0}")]
    PartitionMismatch(String),
    #[error("consistency system is singular: {0}")]
    SingularSystem(String),
    #[error("reduced matrix failed state validation: {0}")]
    InvalidReduced(#[from] StateError),
}

/// Disjoint split of the mode labels into a kept set and a traced set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModePartition {
    n_modes: usize,
    kept: Vec<usize>,
    traced: Vec<usize>,
}

impl ModePartition {
    /// Keep the listed modes (1-based), trace out the rest.
    pub fn keep(n_modes: usize, kept: &[usize]) -> Result<Self, TraceError> {
        let mut kept: Vec<usize> = kept.to_vec();
        kept.sort_unstable();
        kept.dedup();
        if kept.iter().any(|&m| m == 0 || m > n_modes) {
            return Err(TraceError::PartitionMismatch(format!(
                "kept modes {kept:?} out of range for {n_modes} modes"
            )));
        }
        if kept.is_empty() || kept.len() == n_modes {
            return Err(TraceError::PartitionMismatch(
                "kept and traced sets must both be nonempty".into(),
            ));
        }
        let traced = (1..=n_modes).filter(|m| !kept.contains(m)).collect();
        Ok(ModePartition {
            n_modes,
            kept,
            traced,
        })
    }

    /// Trace out the listed modes, keep the rest.
    pub fn trace_out(n_modes: usize, traced: &[usize]) -> Result<Self, TraceError> {
        let kept: Vec<usize> = (1..=n_modes).filter(|m| !traced.contains(m)).collect();
        Self::keep(n_modes, &kept)
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn kept(&self) -> &[usize] {
        &self.kept
    }

    pub fn traced(&self) -> &[usize] {
        &self.traced
    }

    pub fn kept_dim(&self) -> usize {
        1 << self.kept.len()
    }

    /// Reduced basis index: occupation bits of the kept modes, in
    /// ascending mode order, first kept mode as MSB.
    pub fn reduced_index(&self, global_index: usize) -> usize {
        self.kept.iter().fold(0usize, |acc, &m| {
            (acc << 1) | bit_of(global_index, m, self.n_modes) as usize
        })
    }

    /// Whether ket and bra indices agree on every traced mode.
    pub fn traced_bits_agree(&self, ket: usize, bra: usize) -> bool {
        self.traced
            .iter()
            .all(|&m| bit_of(ket, m, self.n_modes) == bit_of(bra, m, self.n_modes))
    }

    /// Rebuild a global index from a reduced index plus an occupation
    /// pattern for the traced modes (given as bits of `traced_bits` in
    /// ascending traced-mode order, first traced mode as MSB).
    pub fn global_index(&self, reduced: usize, traced_bits: usize) -> usize {
        let mut global = 0usize;
        for (i, &m) in self.kept.iter().enumerate() {
            let bit = (reduced >> (self.kept.len() - 1 - i)) & 1;
            global |= bit << (self.n_modes - m);
        }
        for (i, &m) in self.traced.iter().enumerate() {
            let bit = (traced_bits >> (self.traced.len() - 1 - i)) & 1;
            global |= bit << (self.n_modes - m);
        }
        global
    }
}

/// Sign of the inside-out contribution of global element (ket, bra).
///
/// Each occupied traced mode m is anticommuted to the vacuum projector:
/// on the ket side its creator crosses every kept creator with a higher
/// mode index occupied in the ket, and symmetrically on the bra side.
/// Crossings with other traced operators occur in matched ket/bra pairs
/// and cancel, so only kept crossings are counted.
pub fn inside_out_sign(p: &ModePartition, ket: usize, bra: usize) -> i8 {
    debug_assert!(p.traced_bits_agree(ket, bra));
    let n = p.n_modes();
    let mut crossings = 0u32;
    for &m in p.traced() {
        if !bit_of(ket, m, n) {
            continue;
        }
        for &j in p.kept() {
            if j > m {
                crossings += bit_of(ket, j, n) as u32 + bit_of(bra, j, n) as u32;
            }
        }
    }
    if crossings.is_multiple_of(2) {
        1
    } else {
        -1
    }
}

/// Structural contribution table of the fermionic partial trace: for
/// each reduced element, the global elements feeding it and their signs.
pub fn element_contributions(p: &ModePartition) -> Vec<Vec<((usize, usize), i8)>> {
    let kept_dim = p.kept_dim();
    let traced_dim = 1usize << p.traced().len();
    let mut table = vec![Vec::new(); kept_dim * kept_dim];
    for r in 0..kept_dim {
        for c in 0..kept_dim {
            let entry = &mut table[r * kept_dim + c];
            for t in 0..traced_dim {
                let ket = p.global_index(r, t);
                let bra = p.global_index(c, t);
                entry.push(((ket, bra), inside_out_sign(p, ket, bra)));
            }
        }
    }
    table
}

/// The inside-out fermionic partial trace.
pub fn inside_out_partial_trace(
    rho: &DensityOperator,
    p: &ModePartition,
) -> Result<DensityOperator, TraceError> {
    if rho.n_modes() != p.n_modes() {
        return Err(TraceError::PartitionMismatch(format!(
            "state has {} modes, partition {}",
            rho.n_modes(),
            p.n_modes()
        )));
    }
    let kept_dim = p.kept_dim();
    let mut reduced = ComplexMatrix::zeros(kept_dim, kept_dim);
    let table = element_contributions(p);
    for r in 0..kept_dim {
        for c in 0..kept_dim {
            let mut acc = Complex64::new(0.0, 0.0);
            for &((ket, bra), sign) in &table[r * kept_dim + c] {
                acc += rho.matrix().get(ket, bra) * sign as f64;
            }
            reduced.set(r, c, acc);
        }
    }
    Ok(DensityOperator::new(p.kept().len(), reduced)?)
}

/// Raw matrix variant of the inside-out trace, without density-operator
/// validation. Used where the input is a sign-conjugated representation
/// rather than a canonical state.
pub fn inside_out_matrix(m: &ComplexMatrix, p: &ModePartition) -> ComplexMatrix {
    let kept_dim = p.kept_dim();
    let mut reduced = ComplexMatrix::zeros(kept_dim, kept_dim);
    for (idx, contributions) in element_contributions(p).iter().enumerate() {
        let mut acc = Complex64::new(0.0, 0.0);
        for &((ket, bra), sign) in contributions {
            acc += m.get(ket, bra) * sign as f64;
        }
        reduced.set(idx / kept_dim, idx % kept_dim, acc);
    }
    reduced
}

/// Expectation value Tr(op rho).
pub fn expectation(op: &ComplexMatrix, rho: &DensityOperator) -> Complex64 {
    trace_product(op, rho.matrix())
}

/// Complete Hermitian operator set on the kept modes, realized twice:
/// embedded in the full space (with the global ladder operators and
/// their parity strings) and on the standalone kept-mode Fock space.
///
/// Each operator is built from a ladder string b_l1..b_lk b^dag_t1..
/// b^dag_tl over disjoint kept-mode subsets, its Hermitian x/p
/// combinations, and occupation projectors on the remaining kept modes.
pub struct TraceOracle {
    partition: ModePartition,
    kept_ops: Vec<ComplexMatrix>,
    full_ops: Vec<ComplexMatrix>,
    gram: LuReal,
}

impl TraceOracle {
    pub fn new(p: &ModePartition) -> Result<Self, TraceError> {
        let full_ladder = build_ladder_operators(p.n_modes()).expect("n_modes validated");
        let kept_ladder = build_ladder_operators(p.kept().len()).expect("kept nonempty");

        let m = p.kept().len();
        let mut kept_ops = Vec::new();
        let mut full_ops = Vec::new();

        // Encode each kept mode as one of: 0 = project empty,
        // 1 = project occupied, 2 = lambda (annihilator), 3 = tau
        // (creator). Unordered (lambda, tau) pairs are canonicalized by
        // requiring the lowest ladder mode to sit in lambda.
        for code in 0..(1usize << (2 * m)) {
            let states: Vec<usize> = (0..m).map(|i| (code >> (2 * i)) & 3).collect();
            let lambda: Vec<usize> = (0..m).filter(|&i| states[i] == 2).collect();
            let tau: Vec<usize> = (0..m).filter(|&i| states[i] == 3).collect();
            let diagonal = lambda.is_empty() && tau.is_empty();
            if !diagonal {
                let first_ladder = (0..m).find(|&i| states[i] >= 2).unwrap();
                if states[first_ladder] == 3 {
                    continue; // counted as the swapped pair
                }
            }

            let build = |ladder: &LadderOperatorSet, mode_of: &dyn Fn(usize) -> usize| {
                let dim = ladder.dim();
                let mut op = ComplexMatrix::identity(dim);
                for (i, &s) in states.iter().enumerate() {
                    let k = mode_of(i);
                    let factor = match s {
                        0 => ComplexMatrix::identity(dim)
                            .sub(&ladder.number_operator(k))
                            .expect("same dim"),
                        1 => ladder.number_operator(k),
                        _ => continue,
                    };
                    op = op.mul(&factor).expect("same dim");
                }
                for &i in &lambda {
                    op = op.mul(ladder.annihilator(mode_of(i))).expect("same dim");
                }
                for &i in &tau {
                    op = op.mul(ladder.creator(mode_of(i))).expect("same dim");
                }
                op
            };

            let kept_m = build(&kept_ladder, &|i| i + 1);
            let full_m = build(&full_ladder, &|i| p.kept()[i]);

            if diagonal {
                kept_ops.push(kept_m);
                full_ops.push(full_m);
            } else {
                let minus_i = Complex64::new(0.0, -1.0);
                kept_ops.push(kept_m.add(&kept_m.adjoint()).expect("same dim"));
                full_ops.push(full_m.add(&full_m.adjoint()).expect("same dim"));
                kept_ops.push(
                    kept_m
                        .sub(&kept_m.adjoint())
                        .expect("same dim")
                        .scale(minus_i),
                );
                full_ops.push(
                    full_m
                        .sub(&full_m.adjoint())
                        .expect("same dim")
                        .scale(minus_i),
                );
            }
        }

        let n_ops = kept_ops.len();
        debug_assert_eq!(n_ops, p.kept_dim() * p.kept_dim());
        let mut gram = vec![vec![0.0f64; n_ops]; n_ops];
        for i in 0..n_ops {
            for j in i..n_ops {
                let g = trace_product(&kept_ops[i], &kept_ops[j]).re;
                gram[i][j] = g;
                gram[j][i] = g;
            }
        }
        let gram = LuReal::factor(gram).map_err(|e| match e {
            NumericsError::SingularSystem(p) => {
                TraceError::SingularSystem(format!("operator Gram matrix, pivot {p:.3e}"))
            }
            other => TraceError::SingularSystem(other.to_string()),
        })?;

        Ok(TraceOracle {
            partition: p.clone(),
            kept_ops,
            full_ops,
            gram,
        })
    }

    /// Solve the consistency conditions for the unique reduced state.
    pub fn reduce(&self, rho: &DensityOperator) -> Result<DensityOperator, TraceError> {
        if rho.n_modes() != self.partition.n_modes() {
            return Err(TraceError::PartitionMismatch(format!(
                "state has {} modes, oracle built for {}",
                rho.n_modes(),
                self.partition.n_modes()
            )));
        }
        let expectations: Vec<f64> = self
            .full_ops
            .iter()
            .map(|op| trace_product(op, rho.matrix()).re)
            .collect();
        let coeffs = self.gram.solve(&expectations);
        let dim = self.partition.kept_dim();
        let mut reduced = ComplexMatrix::zeros(dim, dim);
        for (c, op) in coeffs.iter().zip(&self.kept_ops) {
            reduced = reduced
                .add(&op.scale(Complex64::new(*c, 0.0)))
                .expect("same dim");
        }
        Ok(DensityOperator::new(self.partition.kept().len(), reduced)?)
    }
}

/// One-shot oracle reduction (builds the operator basis each call; use
/// `TraceOracle` directly when reducing many states).
pub fn oracle_partial_trace(
    rho: &DensityOperator,
    p: &ModePartition,
) -> Result<DensityOperator, TraceError> {
    TraceOracle::new(p)?.reduce(rho)
}

/// Trace out single modes one at a time, in the listed order. Labels
/// refer to the original state; tracing every mode yields the 1x1 full
/// trace.
pub fn sequential_trace(
    rho: &DensityOperator,
    traces: &[usize],
) -> Result<DensityOperator, TraceError> {
    let mut seen = std::collections::BTreeSet::new();
    for &m in traces {
        if m == 0 || m > rho.n_modes() || !seen.insert(m) {
            return Err(TraceError::PartitionMismatch(format!(
                "invalid or repeated trace label {m}"
            )));
        }
    }
    let mut alive: Vec<usize> = (1..=rho.n_modes()).collect();
    let mut current = rho.clone();
    for &m in traces {
        let pos = alive.iter().position(|&x| x == m).expect("validated") + 1;
        if alive.len() == 1 {
            // Full trace of a one-mode state: the scalar 1.
            let mut one = ComplexMatrix::zeros(1, 1);
            one.set(0, 0, current.matrix().trace());
            current = DensityOperator::new(0, one)?;
        } else {
            let p = ModePartition::trace_out(alive.len(), &[pos])?;
            current = inside_out_partial_trace(&current, &p)?;
        }
        alive.retain(|&x| x != m);
    }
    Ok(current)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{build_ladder_operators, Factor, FactorKind, OperatorString};
    use crate::states::{
        from_pure, general_two_mode, random_state, TwoModeCoefficients,
    };

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_two_mode(seed: u64) -> (TwoModeCoefficients, DensityOperator) {
        let rho = random_state(2, 4, seed, None);
        let coeffs = TwoModeCoefficients::from_matrix(rho.matrix());
        (coeffs, rho)
    }

    #[test]
    fn vacuum_traces_to_vacuum() {
        let mut v = vec![c(0.0, 0.0); 4];
        v[0] = c(1.0, 0.0);
        let rho = from_pure(&v).unwrap();
        for kept in [[1usize], [2usize]] {
            let p = ModePartition::keep(2, &kept).unwrap();
            let reduced = inside_out_partial_trace(&rho, &p).unwrap();
            assert_eq!(reduced.matrix().get(0, 0), c(1.0, 0.0));
            assert_eq!(reduced.matrix().get(1, 1), c(0.0, 0.0));
        }
    }

    #[test]
    fn two_mode_reduced_states_closed_form() {
        for seed in 0..20 {
            let (coeffs, rho) = random_two_mode(seed);
            let a = &coeffs.alpha;
            let b = &coeffs.beta;

            // Trace kappa-prime (mode 2), keep kappa.
            let keep1 = ModePartition::keep(2, &[1]).unwrap();
            let red = inside_out_partial_trace(&rho, &keep1).unwrap();
            assert!((red.matrix().get(0, 0) - c(a[0] + a[1], 0.0)).norm() < 1e-12);
            assert!((red.matrix().get(1, 1) - c(a[2] + a[3], 0.0)).norm() < 1e-12);
            assert!((red.matrix().get(0, 1) - (b[1] + b[4])).norm() < 1e-12);

            // Trace kappa (mode 1), keep kappa-prime.
            let keep2 = ModePartition::keep(2, &[2]).unwrap();
            let red = inside_out_partial_trace(&rho, &keep2).unwrap();
            assert!((red.matrix().get(0, 0) - c(a[0] + a[2], 0.0)).norm() < 1e-12);
            assert!((red.matrix().get(1, 1) - c(a[1] + a[3], 0.0)).norm() < 1e-12);
            assert!((red.matrix().get(0, 1) - (b[0] - b[5])).norm() < 1e-12);
        }
    }

    #[test]
    fn inside_out_string_example() {
        // Tr_m(b_m^dag |0><0| b_m b_n) = |0><1_n| with sign +1.
        let ops = build_ladder_operators(2).unwrap();
        let s = OperatorString {
            factors: vec![
                Factor {
                    kind: FactorKind::Creator,
                    mode: 1,
                },
                Factor {
                    kind: FactorKind::Annihilator,
                    mode: 1,
                },
                Factor {
                    kind: FactorKind::Annihilator,
                    mode: 2,
                },
            ],
            vacuum_projector_after: Some(1),
        };
        let m = crate::fock::operator_string_to_matrix(&s, &ops).unwrap();
        let p = ModePartition::trace_out(2, &[1]).unwrap();
        let reduced = inside_out_matrix(&m, &p);
        // |0><1_n| on the kept mode.
        assert_eq!(reduced.get(0, 1), c(1.0, 0.0));
        assert_eq!(reduced.get(0, 0), c(0.0, 0.0));
        assert_eq!(reduced.get(1, 0), c(0.0, 0.0));
        assert_eq!(reduced.get(1, 1), c(0.0, 0.0));
    }

    #[test]
    fn vanishing_offdiagonal_classes() {
        // The three element classes that connect different traced
        // occupations contribute nothing.
        let p = ModePartition::trace_out(2, &[1]).unwrap();
        let table = element_contributions(&p);
        let all_globals: Vec<(usize, usize)> = table
            .iter()
            .flat_map(|entry| entry.iter().map(|&(g, _)| g))
            .collect();
        // |1_m><1_n| = (0b10, 0b01), |0><1_m 1_n| = (0b00, 0b11),
        // |1_n><1_m 1_n| = (0b01, 0b11): traced bits differ, dropped.
        for dropped in [(0b10, 0b01), (0b00, 0b11), (0b01, 0b11)] {
            assert!(!all_globals.contains(&dropped));
        }
    }

    #[test]
    fn expectation_closed_forms() {
        let ops = build_ladder_operators(2).unwrap();
        for seed in 0..10 {
            let (coeffs, rho) = random_two_mode(seed);
            let b = &coeffs.beta;
            let x1 = ops.annihilator(1).add(ops.creator(1)).unwrap();
            let p1 = ops
                .annihilator(1)
                .sub(ops.creator(1))
                .unwrap()
                .scale(c(0.0, 1.0));
            let x2 = ops.annihilator(2).add(ops.creator(2)).unwrap();
            let p2 = ops
                .annihilator(2)
                .sub(ops.creator(2))
                .unwrap()
                .scale(c(0.0, 1.0));
            assert!((expectation(&x1, &rho).re - 2.0 * (b[1] + b[4]).re).abs() < 1e-12);
            assert!((expectation(&p1, &rho).re - 2.0 * (b[1] + b[4]).im).abs() < 1e-12);
            assert!((expectation(&x2, &rho).re - 2.0 * (b[0] - b[5]).re).abs() < 1e-12);
            assert!((expectation(&p2, &rho).re - 2.0 * (b[0] - b[5]).im).abs() < 1e-12);
        }
    }

    #[test]
    fn oracle_matches_inside_out_small() {
        for n in 2..=4usize {
            for seed in 0..5u64 {
                let rho = random_state(n, 1 << n, seed, None);
                for kept_mask in 1..((1usize << n) - 1) {
                    let kept: Vec<usize> =
                        (1..=n).filter(|&m| kept_mask & (1 << (m - 1)) != 0).collect();
                    if kept.is_empty() || kept.len() == n {
                        continue;
                    }
                    let p = ModePartition::keep(n, &kept).unwrap();
                    let fast = inside_out_partial_trace(&rho, &p).unwrap();
                    let slow = oracle_partial_trace(&rho, &p).unwrap();
                    assert!(
                        fast.matrix().max_abs_diff(slow.matrix()) < 1e-10,
                        "n={n} seed={seed} kept={kept:?}"
                    );
                }
            }
        }
    }

    #[test]
    fn oracle_expectation_consistency() {
        // The defining property: every kept-mode operator has the same
        // expectation in the global and reduced states.
        let rho = random_state(3, 8, 77, None);
        let p = ModePartition::keep(3, &[1, 3]).unwrap();
        let oracle = TraceOracle::new(&p).unwrap();
        let reduced = inside_out_partial_trace(&rho, &p).unwrap();
        for (full_op, kept_op) in oracle.full_ops.iter().zip(&oracle.kept_ops) {
            let global = trace_product(full_op, rho.matrix()).re;
            let local = trace_product(kept_op, reduced.matrix()).re;
            assert!((global - local).abs() < 1e-10);
        }
    }

    #[test]
    fn trace_order_irrelevant() {
        for seed in 0..5u64 {
            let rho = random_state(3, 8, seed, None);
            let a = sequential_trace(&rho, &[2, 3]).unwrap();
            let b = sequential_trace(&rho, &[3, 2]).unwrap();
            let one_shot =
                inside_out_partial_trace(&rho, &ModePartition::keep(3, &[1]).unwrap()).unwrap();
            assert!(a.matrix().max_abs_diff(b.matrix()) < 1e-10);
            assert!(a.matrix().max_abs_diff(one_shot.matrix()) < 1e-10);
        }
    }

    #[test]
    fn full_trace_is_scalar_one() {
        let rho = random_state(2, 4, 5, None);
        let t = sequential_trace(&rho, &[1, 2]).unwrap();
        assert_eq!(t.dim(), 1);
        assert!((t.matrix().get(0, 0) - c(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn five_mode_pair_traces_commute() {
        let rho = random_state(5, 8, 99, None);
        for a in 1..=5usize {
            for b in (a + 1)..=5 {
                let ab = sequential_trace(&rho, &[a, b]).unwrap();
                let ba = sequential_trace(&rho, &[b, a]).unwrap();
                let p = ModePartition::trace_out(5, &[a, b]).unwrap();
                let one_shot = inside_out_partial_trace(&rho, &p).unwrap();
                assert!(ab.matrix().max_abs_diff(ba.matrix()) < 1e-10);
                assert!(ab.matrix().max_abs_diff(one_shot.matrix()) < 1e-10);
            }
        }
    }

    #[test]
    fn reduced_state_is_valid() {
        // Trace preservation, Hermiticity, and positivity are enforced
        // by DensityOperator::new on the reduced output.
        let rho = random_state(4, 6, 3, None);
        let p = ModePartition::keep(4, &[2, 4]).unwrap();
        let reduced = inside_out_partial_trace(&rho, &p).unwrap();
        assert!((reduced.matrix().trace().re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn partition_validation() {
        assert!(ModePartition::keep(3, &[]).is_err());
        assert!(ModePartition::keep(3, &[1, 2, 3]).is_err());
        assert!(ModePartition::keep(3, &[4]).is_err());
        let rho = random_state(2, 2, 1, None);
        let p = ModePartition::keep(3, &[1]).unwrap();
        assert!(matches!(
            inside_out_partial_trace(&rho, &p),
            Err(TraceError::PartitionMismatch(_))
        ));
    }

    #[test]
    fn bell_reduction_is_maximally_mixed() {
        let mut beta = [c(0.0, 0.0); 6];
        beta[3] = c(0.5, 0.0);
        let rho = general_two_mode(&TwoModeCoefficients {
            alpha: [0.0, 0.5, 0.5, 0.0],
            beta,
        })
        .unwrap();
        let p = ModePartition::keep(2, &[1]).unwrap();
        let reduced = inside_out_partial_trace(&rho, &p).unwrap();
        assert!((reduced.matrix().get(0, 0) - c(0.5, 0.0)).norm() < 1e-12);
        assert!((reduced.matrix().get(1, 1) - c(0.5, 0.0)).norm() < 1e-12);
        assert!(reduced.matrix().get(0, 1).norm() < 1e-12);
    }
}
