//! Mode-entanglement measures.
//!
//! Entropy of entanglement works directly on the Fock representation
//! via the fermionic partial trace. Negativity, concurrence and the
//! Wootters entanglement of formation are tensor-product notions: they
//! only apply after a consistent Fock-to-qubit mapping has been
//! established, so those operations take a `QubitImage` that can only
//! be built from a mapping witness. The superselection-restricted EoF
//! is estimated by a seeded multi-start descent over pure-state
//! decompositions and is reported strictly as an upper bound.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::mapping::{MappingVerdict, SignAssignment};
use crate::numerics::{
    hermitian_eigen, hermitian_eigenvalues, psd_sqrt, von_neumann_entropy, ComplexMatrix,
    NumericsError,
};
use crate::states::{check_ssr, ChargePattern, DensityOperator, StateError};
use crate::trace::{inside_out_partial_trace, ModePartition, TraceError};

pub const TOL_EIGEN: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum EntanglementError {
    #[error("state is not pure (second eigenvalue {0:.3e})")]
    NotPure(f64),
    #[error("no consistent qubit mapping: {0}")]
    NoMappingWitness(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("state violates the superselection rule")]
    SsrViolation,
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    State(#[from] StateError),
}

/// Entropy of entanglement of a pure state across a mode partition, in
/// bits. The fermionic reduced state is used; by purity the kept and
/// traced reductions have the same spectrum.
pub fn entropy_of_entanglement(
    rho: &DensityOperator,
    p: &ModePartition,
) -> Result<f64, EntanglementError> {
    let spectrum = rho.spectrum();
    if (spectrum[0] - 1.0).abs() > TOL_EIGEN || spectrum[1].abs() > TOL_EIGEN {
        return Err(EntanglementError::NotPure(spectrum[1]));
    }
    let reduced = inside_out_partial_trace(rho, p)?;
    Ok(von_neumann_entropy(reduced.matrix(), TOL_EIGEN)?)
}

/// A state matrix carried to the qubit tensor-product basis by a sign
/// assignment that the mapping search certified as consistent. Only
/// this type is accepted by the tensor-product measures below.
#[derive(Debug, Clone)]
pub struct QubitImage {
    n_modes: usize,
    matrix: ComplexMatrix,
}

impl QubitImage {
    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }
}

/// Apply the verdict's witness of the given index to the state.
pub fn map_to_qubits(
    rho: &DensityOperator,
    verdict: &MappingVerdict,
    witness: usize,
) -> Result<QubitImage, EntanglementError> {
    if !verdict.exists {
        return Err(EntanglementError::NoMappingWitness(
            verdict.obstruction.clone(),
        ));
    }
    let sign: &SignAssignment = &verdict.witnesses[witness];
    if sign.n_modes() != rho.n_modes() {
        return Err(EntanglementError::DimensionMismatch(format!(
            "witness covers {} modes, state has {}",
            sign.n_modes(),
            rho.n_modes()
        )));
    }
    Ok(QubitImage {
        n_modes: rho.n_modes(),
        matrix: sign.conjugate(rho.matrix()),
    })
}

/// Transpose the second factor of a (d1 x d2) tensor structure.
pub fn partial_transpose(
    m: &ComplexMatrix,
    dims: (usize, usize),
) -> Result<ComplexMatrix, EntanglementError> {
    let (d1, d2) = dims;
    if m.rows() != d1 * d2 || m.cols() != d1 * d2 {
        return Err(EntanglementError::DimensionMismatch(format!(
            "matrix is {}x{}, factors {}x{}",
            m.rows(),
            m.cols(),
            d1,
            d2
        )));
    }
    let mut out = ComplexMatrix::zeros(d1 * d2, d1 * d2);
    for a in 0..d1 {
        for b in 0..d2 {
            for ap in 0..d1 {
                for bp in 0..d2 {
                    out.set(a * d2 + bp, ap * d2 + b, m.get(a * d2 + b, ap * d2 + bp));
                }
            }
        }
    }
    Ok(out)
}

/// Negativity across the given two-factor split of the qubit image:
/// the magnitude of the sum of negative eigenvalues of the partial
/// transpose over the second factor. Zero for PPT states.
pub fn negativity(img: &QubitImage, dims: (usize, usize)) -> Result<f64, EntanglementError> {
    let pt = partial_transpose(&img.matrix, dims)?;
    let spectrum = hermitian_eigenvalues(&pt, TOL_EIGEN)?;
    let negative_sum: f64 = spectrum
        .eigenvalues
        .iter()
        .filter(|&&l| l < 0.0)
        .sum::<f64>();
    Ok(negative_sum.abs())
}

fn entrywise_conj(m: &ComplexMatrix) -> ComplexMatrix {
    let mut out = ComplexMatrix::zeros(m.rows(), m.cols());
    for r in 0..m.rows() {
        for c in 0..m.cols() {
            out.set(r, c, m.get(r, c).conj());
        }
    }
    out
}

fn sigma_y_pair() -> ComplexMatrix {
    // sigma_y (x) sigma_y: antidiagonal (-1, 1, 1, -1).
    let mut m = ComplexMatrix::zeros(4, 4);
    m.set(0, 3, Complex64::new(-1.0, 0.0));
    m.set(1, 2, Complex64::new(1.0, 0.0));
    m.set(2, 1, Complex64::new(1.0, 0.0));
    m.set(3, 0, Complex64::new(-1.0, 0.0));
    m
}

/// Wootters concurrence of a two-qubit image, via the Hermitian
/// square-root route: the descending square roots s_i of the
/// eigenvalues of sqrt(rho) rho~ sqrt(rho) give C = max(0, s1-s2-s3-s4)
/// with rho~ the spin-flipped conjugate.
pub fn concurrence_two_qubit(img: &QubitImage) -> Result<f64, EntanglementError> {
    if img.matrix.rows() != 4 {
        return Err(EntanglementError::DimensionMismatch(format!(
            "concurrence needs a two-qubit (4x4) image, got {}x{}",
            img.matrix.rows(),
            img.matrix.cols()
        )));
    }
    let yy = sigma_y_pair();
    let flipped = yy.mul(&entrywise_conj(&img.matrix))?.mul(&yy)?;
    let root = psd_sqrt(&img.matrix, TOL_EIGEN)?;
    let product = root.mul(&flipped)?.mul(&root)?;
    let spectrum = hermitian_eigenvalues(&product.symmetrized(), TOL_EIGEN)?;
    // The square root amplifies eigenvalue noise near zero (1e-16
    // perturbations become 1e-8 in s), so truly-zero eigenvalues are
    // cut before taking roots.
    let s: Vec<f64> = spectrum
        .eigenvalues
        .iter()
        .map(|&l| if l > 1e-12 { l.sqrt() } else { 0.0 })
        .collect();
    Ok((s[0] - s[1] - s[2] - s[3]).max(0.0))
}

fn binary_entropy(x: f64) -> f64 {
    let mut h = 0.0;
    for p in [x, 1.0 - x] {
        if p > 0.0 {
            h -= p * p.log2();
        }
    }
    h
}

/// Entanglement of formation in bits as a function of the concurrence.
pub fn eof_wootters(concurrence: f64) -> f64 {
    let c = concurrence.clamp(0.0, 1.0);
    binary_entropy(0.5 * (1.0 + (1.0 - c * c).sqrt()))
}

/// Budget for the superselection-restricted EoF search.
#[derive(Debug, Clone, Copy)]
pub struct SsrEofBudget {
    pub restarts: usize,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for SsrEofBudget {
    fn default() -> Self {
        SsrEofBudget {
            restarts: 32,
            iterations: 500,
            seed: 7,
        }
    }
}

/// Result of the decomposition search: an upper bound, never a claimed
/// minimum, together with the witnessing ensemble.
#[derive(Debug, Clone)]
pub struct SsrEofEstimate {
    pub upper_bound_bits: f64,
    /// (weight, normalized state vector) pairs of the best ensemble.
    pub decomposition: Vec<(f64, Vec<Complex64>)>,
}

/// Entropy of entanglement across mode 1 | mode 2 of a pure two-mode
/// vector, closed form: the reduced 2x2 state has entries
/// (|g0|^2+|g1|^2, g0 g2* + g1 g3*; ., |g2|^2+|g3|^2).
fn pure_two_mode_entropy(g: &[Complex64]) -> f64 {
    let a = g[0].norm_sqr() + g[1].norm_sqr();
    let d = g[2].norm_sqr() + g[3].norm_sqr();
    let b = g[0] * g[2].conj() + g[1] * g[3].conj();
    let mid = 0.5 * (a + d);
    let radius = (0.25 * (a - d) * (a - d) + b.norm_sqr()).sqrt();
    let lo = (mid - radius).clamp(0.0, 1.0);
    binary_entropy(lo)
}

/// A pure component respects the SSR iff its support sits in a single
/// charge sector.
fn vector_respects_ssr(g: &[Complex64], charges: &ChargePattern) -> bool {
    let mut sector: Option<i64> = None;
    for (i, amp) in g.iter().enumerate() {
        if amp.norm_sqr() > 1e-18 {
            let q = charges.charge_of_index(i);
            match sector {
                None => sector = Some(q),
                Some(s) if s != q => return false,
                _ => {}
            }
        }
    }
    true
}

/// Average entanglement of the ensemble generated by isometry v (rows =
/// members) from the scaled eigenvectors; infinite if any member with
/// nonvanishing weight breaks the superselection rule.
fn ensemble_objective(
    v: &[Vec<Complex64>],
    scaled_eigvecs: &[Vec<Complex64>],
    charges: &ChargePattern,
) -> f64 {
    let dim = scaled_eigvecs[0].len();
    let mut total = 0.0;
    for row in v {
        let mut phi = vec![Complex64::new(0.0, 0.0); dim];
        for (i, coeff) in row.iter().enumerate() {
            if coeff.norm_sqr() == 0.0 {
                continue;
            }
            for (k, target) in phi.iter_mut().enumerate() {
                *target += coeff * scaled_eigvecs[i][k];
            }
        }
        let weight: f64 = phi.iter().map(|z| z.norm_sqr()).sum();
        if weight < 1e-14 {
            continue;
        }
        let inv = 1.0 / weight.sqrt();
        let psi: Vec<Complex64> = phi.iter().map(|z| z * inv).collect();
        if !vector_respects_ssr(&psi, charges) {
            return f64::INFINITY;
        }
        total += weight * pure_two_mode_entropy(&psi);
    }
    total
}

/// Upper-bound the SSR-restricted entanglement of formation of a
/// two-mode state across mode 1 | mode 2.
///
/// Decompositions are generated from the eigendecomposition by
/// isometric mixing (ensemble size rank^2); a seeded multi-start greedy
/// descent over random plane rotations of the isometry minimizes the
/// average component entanglement. Members that violate the
/// superselection pattern send the objective to +infinity, so only
/// SSR-respecting decompositions compete.
pub fn eof_ssr_minimize(
    rho: &DensityOperator,
    charges: &ChargePattern,
    budget: &SsrEofBudget,
) -> Result<SsrEofEstimate, EntanglementError> {
    if rho.n_modes() != 2 {
        return Err(EntanglementError::DimensionMismatch(format!(
            "SSR EoF search handles 2 modes, got {}",
            rho.n_modes()
        )));
    }
    if !check_ssr(rho, charges)? {
        return Err(EntanglementError::SsrViolation);
    }

    let eig = hermitian_eigen(rho.matrix(), 1e-12)?;
    let dim = rho.dim();
    let mut scaled: Vec<Vec<Complex64>> = Vec::new();
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda <= 1e-12 {
            continue;
        }
        let root = lambda.sqrt();
        scaled.push((0..dim).map(|i| eig.eigenvectors.get(i, k) * root).collect());
    }
    let rank = scaled.len();
    let members = (rank * rank).max(rank);

    // Identity isometry = the eigendecomposition itself; its members
    // live in single charge sectors because rho is block diagonal.
    let identity_v = |members: usize, rank: usize| -> Vec<Vec<Complex64>> {
        (0..members)
            .map(|j| {
                (0..rank)
                    .map(|i| Complex64::new(if i == j { 1.0 } else { 0.0 }, 0.0))
                    .collect()
            })
            .collect()
    };

    let mut best_value = f64::INFINITY;
    let mut best_v = identity_v(members, rank);

    for restart in 0..budget.restarts.max(1) {
        let mut rng = ChaCha8Rng::seed_from_u64(budget.seed.wrapping_add(restart as u64 * 0x9e37));
        let mut v = identity_v(members, rank);
        let mut current = ensemble_objective(&v, &scaled, charges);
        for iteration in 0..if members < 2 { 0 } else { budget.iterations } {
            let a = rng.gen_range(0..members);
            let mut b = rng.gen_range(0..members - 1);
            if b >= a {
                b += 1;
            }
            let scale = 1.0 / (1.0 + iteration as f64 / 50.0);
            let theta: f64 = rng.gen_range(-1.5..1.5) * scale;
            let phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let (c, s) = (theta.cos(), theta.sin());
            let twiddle = Complex64::from_polar(s, phase);
            let mut candidate = v.clone();
            for i in 0..rank {
                let (xa, xb) = (v[a][i], v[b][i]);
                candidate[a][i] = c * xa + twiddle * xb;
                candidate[b][i] = -twiddle.conj() * xa + c * xb;
            }
            let value = ensemble_objective(&candidate, &scaled, charges);
            if value <= current {
                current = value;
                v = candidate;
            }
        }
        if current < best_value {
            best_value = current;
            best_v = v;
        }
    }

    let mut decomposition = Vec::new();
    for row in &best_v {
        let mut phi = vec![Complex64::new(0.0, 0.0); dim];
        for (i, coeff) in row.iter().enumerate() {
            for (k, target) in phi.iter_mut().enumerate() {
                *target += coeff * scaled[i][k];
            }
        }
        let weight: f64 = phi.iter().map(|z| z.norm_sqr()).sum();
        if weight < 1e-14 {
            continue;
        }
        let inv = 1.0 / weight.sqrt();
        decomposition.push((weight, phi.iter().map(|z| z * inv).collect()));
    }

    Ok(SsrEofEstimate {
        upper_bound_bits: best_value,
        decomposition,
    })
}

/// Aggregated measures for one state and partition, as emitted by the
/// CLI. Tensor-product measures are present only when a mapping witness
/// exists; `note` explains any omission.
#[derive(Debug, Clone)]
pub struct EntanglementReport {
    pub partition: ModePartition,
    pub entropy_of_entanglement: Option<f64>,
    pub negativity: Option<f64>,
    pub concurrence: Option<f64>,
    pub eof_wootters: Option<f64>,
    pub eof_ssr_estimate: Option<f64>,
    pub bound_chain_ok: bool,
    pub note: Option<String>,
}

/// Evaluate every applicable measure. `verdict` gates the qubit-side
/// measures; `charges` additionally enables the SSR EoF search.
pub fn full_report(
    rho: &DensityOperator,
    p: &ModePartition,
    verdict: &MappingVerdict,
    charges: Option<&ChargePattern>,
    budget: &SsrEofBudget,
) -> Result<EntanglementReport, EntanglementError> {
    let entropy = entropy_of_entanglement(rho, p).ok();
    let mut note = None;

    let (mut neg, mut conc, mut eof, mut eof_ssr) = (None, None, None, None);
    if verdict.exists && rho.n_modes() == 2 {
        let img = map_to_qubits(rho, verdict, 0)?;
        neg = Some(negativity(&img, (2, 2))?);
        conc = Some(concurrence_two_qubit(&img)?);
        eof = conc.map(eof_wootters);
        if let Some(charges) = charges {
            match eof_ssr_minimize(rho, charges, budget) {
                Ok(estimate) => eof_ssr = Some(estimate.upper_bound_bits),
                Err(EntanglementError::SsrViolation) => {
                    note = Some("state violates the charge pattern; SSR EoF skipped".into());
                }
                Err(e) => return Err(e),
            }
        }
    } else if !verdict.exists {
        note = Some(format!(
            "no consistent qubit mapping; tensor-product measures omitted ({})",
            verdict.obstruction
        ));
    }

    let mut bound_chain_ok = true;
    if let (Some(n), Some(c)) = (neg, conc) {
        bound_chain_ok &= 2.0 * n <= c + 1e-9;
    }
    if let (Some(e), Some(eb)) = (eof, eof_ssr) {
        bound_chain_ok &= e <= eb + 1e-6;
    }

    Ok(EntanglementReport {
        partition: p.clone(),
        entropy_of_entanglement: entropy,
        negativity: neg,
        concurrence: conc,
        eof_wootters: eof,
        eof_ssr_estimate: eof_ssr,
        bound_chain_ok,
        note,
    })
}
