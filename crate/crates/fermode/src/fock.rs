//! The n-mode fermionic Fock space in the occupation-number basis, and
//! ladder-operator matrices satisfying the canonical anticommutation
//! relations exactly.
//!
//! Conventions, fixed once for the whole crate:
//!
//! * Mode labels are 1-based.
//! * A basis vector is labelled by its occupation bitstring read as a
//!   binary integer with mode 1 as the most significant bit. For two
//!   modes the basis order is therefore
//!   `{|00>, |01>, |10>, |11>} = {vacuum, mode 2, mode 1, both}`.
//! * The basis vector for occupation `(n_1, ..., n_n)` denotes
//!   `(b_1^dag)^{n_1} ... (b_n^dag)^{n_n} |0>` with creators applied in
//!   increasing mode order.
//!
//! With that convention the annihilator `b_k` acts on a basis vector by
//! clearing the mode-k bit and picking up `(-1)^(number of occupied
//! modes below k)`, which is the Jordan-Wigner form: mode k carries the
//! parity string over modes `< k`.

use num_complex::Complex64;
use thiserror::Error;

use crate::numerics::ComplexMatrix;

/// Memory guard: 2^10 x 2^10 complex matrices are the largest we build.
pub const MAX_MODES: usize = 10;

#[derive(Debug, Error, PartialEq)]
pub enum FockError {
    #[error("mode count {0} exceeds the supported maximum of {MAX_MODES}")]
    TooManyModes(usize),
    #[error("mode count must be at least 1")]
    NoModes,
    #[error("operator refers to mode {mode} but only {n_modes} modes exist")]
    ModeIndexOutOfRange { mode: usize, n_modes: usize },
    #[error("occupation state has {occ} modes but the operator set has {ops}")]
    ModeCountMismatch { occ: usize, ops: usize },
    #[error("malformed operator string: {0}")]
    MalformedString(String),
}

/// Occupation bitstring labelling one Fock basis vector.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct OccupationState {
    n_modes: usize,
    occupations: Vec<u8>,
}

impl OccupationState {
    pub fn new(occupations: Vec<u8>) -> Result<Self, FockError> {
        let n_modes = occupations.len();
        if n_modes == 0 {
            return Err(FockError::NoModes);
        }
        if n_modes > MAX_MODES {
            return Err(FockError::TooManyModes(n_modes));
        }
        assert!(occupations.iter().all(|&b| b <= 1), "occupations are bits");
        Ok(OccupationState {
            n_modes,
            occupations,
        })
    }

    pub fn vacuum(n_modes: usize) -> Result<Self, FockError> {
        Self::new(vec![0; n_modes])
    }

    /// Decode a basis index (mode 1 = most significant bit).
    pub fn from_index(index: usize, n_modes: usize) -> Result<Self, FockError> {
        let occ = (0..n_modes)
            .map(|k| ((index >> (n_modes - 1 - k)) & 1) as u8)
            .collect();
        Self::new(occ)
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    /// Occupation of mode `k` (1-based).
    pub fn occupied(&self, k: usize) -> bool {
        self.occupations[k - 1] == 1
    }

    pub fn occupations(&self) -> &[u8] {
        &self.occupations
    }

    /// Basis index with mode 1 as the most significant bit.
    pub fn index(&self) -> usize {
        self.occupations
            .iter()
            .fold(0usize, |acc, &b| (acc << 1) | b as usize)
    }

    pub fn particle_count(&self) -> u32 {
        self.occupations.iter().map(|&b| b as u32).sum()
    }
}

/// Whether the mode-`k` bit of basis index `i` is set (mode 1 = MSB).
#[inline]
pub fn bit_of(index: usize, mode: usize, n_modes: usize) -> bool {
    (index >> (n_modes - mode)) & 1 == 1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FactorKind {
    Creator,
    Annihilator,
}

/// One ladder operator in a string, e.g. `b_3` or `b_3^dag`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Factor {
    pub kind: FactorKind,
    pub mode: usize,
}

/// An ordered product of ladder operators, optionally with the vacuum
/// projector |0><0| inserted at a fixed position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OperatorString {
    pub factors: Vec<Factor>,
    /// Number of factors to the left of the vacuum projector, if present.
    pub vacuum_projector_after: Option<usize>,
}

impl OperatorString {
    pub fn identity() -> Self {
        OperatorString {
            factors: Vec::new(),
            vacuum_projector_after: None,
        }
    }
}

/// Matrix representations of all `b_k`, `b_k^dag` on the 2^n space.
#[derive(Debug, Clone)]
pub struct LadderOperatorSet {
    n_modes: usize,
    annihilators: Vec<ComplexMatrix>,
    creators: Vec<ComplexMatrix>,
}

impl LadderOperatorSet {
    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn dim(&self) -> usize {
        1 << self.n_modes
    }

    /// `b_k`, 1-based.
    pub fn annihilator(&self, k: usize) -> &ComplexMatrix {
        &self.annihilators[k - 1]
    }

    /// `b_k^dag`, 1-based.
    pub fn creator(&self, k: usize) -> &ComplexMatrix {
        &self.creators[k - 1]
    }

    pub fn vacuum_vector(&self) -> Vec<Complex64> {
        let mut v = vec![Complex64::new(0.0, 0.0); self.dim()];
        v[0] = Complex64::new(1.0, 0.0);
        v
    }

    pub fn vacuum_projector(&self) -> ComplexMatrix {
        let v = self.vacuum_vector();
        ComplexMatrix::outer(&v, &v)
    }

    /// Number operator `b_k^dag b_k`.
    pub fn number_operator(&self, k: usize) -> ComplexMatrix {
        self.creator(k).mul(self.annihilator(k)).expect("same dim")
    }
}

/// Build the CAR-exact ladder operators for `n_modes` modes.
pub fn build_ladder_operators(n_modes: usize) -> Result<LadderOperatorSet, FockError> {
    if n_modes == 0 {
        return Err(FockError::NoModes);
    }
    if n_modes > MAX_MODES {
        return Err(FockError::TooManyModes(n_modes));
    }
    let dim = 1usize << n_modes;
    let mut annihilators = Vec::with_capacity(n_modes);
    for k in 1..=n_modes {
        let mut b = ComplexMatrix::zeros(dim, dim);
        let mode_bit = 1usize << (n_modes - k);
        for col in 0..dim {
            if col & mode_bit == 0 {
                continue;
            }
            let row = col & !mode_bit;
            // Parity of the occupied modes with index below k.
            let above_mask = !((mode_bit << 1) - 1) & (dim - 1);
            let crossings = (col & above_mask).count_ones();
            let sign = if crossings.is_multiple_of(2) { 1.0 } else { -1.0 };
            b.set(row, col, Complex64::new(sign, 0.0));
        }
        annihilators.push(b);
    }
    let creators = annihilators.iter().map(|b| b.adjoint()).collect();
    Ok(LadderOperatorSet {
        n_modes,
        annihilators,
        creators,
    })
}

/// The unit vector `(b_1^dag)^{n_1} ... (b_n^dag)^{n_n} |0>`.
pub fn basis_state(
    occ: &OccupationState,
    ops: &LadderOperatorSet,
) -> Result<Vec<Complex64>, FockError> {
    if occ.n_modes() != ops.n_modes() {
        return Err(FockError::ModeCountMismatch {
            occ: occ.n_modes(),
            ops: ops.n_modes(),
        });
    }
    let mut v = ops.vacuum_vector();
    for k in (1..=occ.n_modes()).rev() {
        if occ.occupied(k) {
            v = ops.creator(k).mul_vec(&v);
        }
    }
    Ok(v)
}

/// Multiply out an operator string, realizing |0><0| as the vacuum
/// projector on the full space.
pub fn operator_string_to_matrix(
    s: &OperatorString,
    ops: &LadderOperatorSet,
) -> Result<ComplexMatrix, FockError> {
    for f in &s.factors {
        if f.mode == 0 || f.mode > ops.n_modes() {
            return Err(FockError::ModeIndexOutOfRange {
                mode: f.mode,
                n_modes: ops.n_modes(),
            });
        }
    }
    if let Some(split) = s.vacuum_projector_after {
        if split > s.factors.len() {
            return Err(FockError::MalformedString(format!(
                "projector position {split} past the end of {} factors",
                s.factors.len()
            )));
        }
    }
    let factor_matrix = |f: &Factor| match f.kind {
        FactorKind::Creator => ops.creator(f.mode).clone(),
        FactorKind::Annihilator => ops.annihilator(f.mode).clone(),
    };
    let mut out = ComplexMatrix::identity(ops.dim());
    for (i, f) in s.factors.iter().enumerate() {
        if s.vacuum_projector_after == Some(i) {
            out = out.mul(&ops.vacuum_projector()).expect("same dim");
        }
        out = out.mul(&factor_matrix(f)).expect("same dim");
    }
    if s.vacuum_projector_after == Some(s.factors.len()) {
        out = out.mul(&ops.vacuum_projector()).expect("same dim");
    }
    Ok(out)
}

/// `{a, b} = ab + ba`.
pub fn anticommutator(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a.mul(b)
        .expect("same dim")
        .add(&b.mul(a).expect("same dim"))
        .expect("same dim")
}

/// Worst entrywise residual over all distinct anticommutator identities
/// at `n` modes. Zero for a CAR-exact representation.
pub fn car_residual(n: usize) -> Result<f64, FockError> {
    let ops = build_ladder_operators(n)?;
    let dim = ops.dim();
    let identity = ComplexMatrix::identity(dim);
    let zero = ComplexMatrix::zeros(dim, dim);
    let mut worst = 0.0f64;
    for m in 1..=n {
        for k in 1..=n {
            let mixed = anticommutator(ops.annihilator(m), ops.creator(k));
            let expected = if m == k { &identity } else { &zero };
            worst = worst.max(mixed.max_abs_diff(expected));
            if k >= m {
                let bb = anticommutator(ops.annihilator(m), ops.annihilator(k));
                worst = worst.max(bb.max_abs());
                let cc = anticommutator(ops.creator(m), ops.creator(k));
                worst = worst.max(cc.max_abs());
            }
        }
    }
    Ok(worst)
}
