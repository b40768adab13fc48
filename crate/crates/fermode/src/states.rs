//! Density operators on the fermionic Fock space, the canonical two- and
//! three-mode state families, superselection predicates, and seeded
//! random-state generation.

use num_complex::Complex64;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::fock::{bit_of, OccupationState};
use crate::numerics::{hermitian_eigenvalues, ComplexMatrix, TOL_EIGEN, TOL_EXACT};

#[derive(Debug, Error, PartialEq)]
pub enum StateError {
    #[error("matrix dimension {dim} does not match {n_modes} modes")]
    DimensionMismatch { dim: usize, n_modes: usize },
    #[error("matrix is not Hermitian within tolerance (defect {0:.3e})")]
    NotHermitian(f64),
    #[error("trace is {0}, expected 1")]
    BadTrace(f64),
    #[error("matrix is not positive semidefinite (min eigenvalue {0:.3e})")]
    NotPositive(f64),
    #[error("state vector is not normalized (norm {0})")]
    NotNormalized(f64),
    #[error("mixture weights must be nonnegative and sum to 1 (sum {0})")]
    BadWeights(f64),
    #[error("charge pattern has {charges} entries for {n_modes} modes")]
    ChargeCountMismatch { charges: usize, n_modes: usize },
}

/// Hermitian, unit-trace, PSD matrix over the occupation basis.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityOperator {
    n_modes: usize,
    matrix: ComplexMatrix,
}

impl DensityOperator {
    /// Validate and wrap a matrix. The input is symmetrized before the
    /// Hermiticity, trace, and positivity checks.
    pub fn new(n_modes: usize, matrix: ComplexMatrix) -> Result<Self, StateError> {
        let dim = 1usize << n_modes;
        if matrix.rows() != dim || matrix.cols() != dim {
            return Err(StateError::DimensionMismatch {
                dim: matrix.rows(),
                n_modes,
            });
        }
        let defect = matrix.hermiticity_defect();
        if defect > TOL_EXACT {
            return Err(StateError::NotHermitian(defect));
        }
        let matrix = matrix.symmetrized();
        let tr = matrix.trace().re;
        if (tr - 1.0).abs() > TOL_EXACT * dim as f64 {
            return Err(StateError::BadTrace(tr));
        }
        let spectrum = hermitian_eigenvalues(&matrix, TOL_EXACT).expect("symmetrized");
        let min = *spectrum.eigenvalues.last().expect("nonempty");
        if min < -TOL_EIGEN {
            return Err(StateError::NotPositive(min));
        }
        Ok(DensityOperator { n_modes, matrix })
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn dim(&self) -> usize {
        1 << self.n_modes
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn spectrum(&self) -> Vec<f64> {
        hermitian_eigenvalues(&self.matrix, TOL_EXACT)
            .expect("stored matrix is Hermitian")
            .eigenvalues
    }

    /// Spectrum is {1, 0, ...} within the eigen tolerance.
    pub fn is_pure(&self) -> bool {
        let spec = self.spectrum();
        (spec[0] - 1.0).abs() <= TOL_EIGEN && spec[1..].iter().all(|l| l.abs() <= TOL_EIGEN)
    }
}

/// Rank-1 projector on a normalized state vector.
pub fn from_pure(vector: &[Complex64]) -> Result<DensityOperator, StateError> {
    let dim = vector.len();
    assert!(dim.is_power_of_two() && dim >= 2, "Fock space dimension");
    let n_modes = dim.trailing_zeros() as usize;
    let norm: f64 = vector.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > TOL_EXACT {
        return Err(StateError::NotNormalized(norm));
    }
    DensityOperator::new(n_modes, ComplexMatrix::outer(vector, vector))
}

/// Convex combination of density operators.
pub fn mix(states: &[DensityOperator], weights: &[f64]) -> Result<DensityOperator, StateError> {
    assert_eq!(states.len(), weights.len());
    assert!(!states.is_empty());
    let sum: f64 = weights.iter().sum();
    if weights.iter().any(|&w| w < 0.0) || (sum - 1.0).abs() > TOL_EXACT {
        return Err(StateError::BadWeights(sum));
    }
    let n_modes = states[0].n_modes();
    let dim = states[0].dim();
    let mut acc = ComplexMatrix::zeros(dim, dim);
    for (s, &w) in states.iter().zip(weights) {
        if s.n_modes() != n_modes {
            return Err(StateError::DimensionMismatch {
                dim: s.dim(),
                n_modes,
            });
        }
        acc = acc
            .add(&s.matrix().scale(Complex64::new(w, 0.0)))
            .expect("same dim");
    }
    DensityOperator::new(n_modes, acc)
}

/// Coefficients of the general mixed two-mode state: four real diagonal
/// weights and six complex coherences, laid out as the 4x4 array
///
/// ```text
///   ( a1   b1   b2   b3 )
///   ( b1*  a2   b4   b5 )
///   ( b2*  b4*  a3   b6 )
///   ( b3*  b5*  b6*  a4 )
/// ```
///
/// over the basis `{|00>, |01>, |10>, |11>}` (mode 1 = kappa = MSB), so
/// b1 couples the vacuum to the mode-2 excitation, b2 the vacuum to the
/// mode-1 excitation, and b4 the two single-particle vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoModeCoefficients {
    pub alpha: [f64; 4],
    pub beta: [Complex64; 6],
}

impl TwoModeCoefficients {
    /// Read coefficients off a 4x4 state matrix. Exact by construction.
    pub fn from_matrix(m: &ComplexMatrix) -> Self {
        assert_eq!((m.rows(), m.cols()), (4, 4));
        TwoModeCoefficients {
            alpha: [
                m.get(0, 0).re,
                m.get(1, 1).re,
                m.get(2, 2).re,
                m.get(3, 3).re,
            ],
            beta: [
                m.get(0, 1),
                m.get(0, 2),
                m.get(0, 3),
                m.get(1, 2),
                m.get(1, 3),
                m.get(2, 3),
            ],
        }
    }

    pub fn assemble(&self) -> ComplexMatrix {
        let mut m = ComplexMatrix::zeros(4, 4);
        for (i, a) in self.alpha.iter().enumerate() {
            m.set(i, i, Complex64::new(*a, 0.0));
        }
        let positions = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];
        for (&(r, c), b) in positions.iter().zip(&self.beta) {
            m.set(r, c, *b);
            m.set(c, r, b.conj());
        }
        m
    }
}

/// The general mixed two-mode state, in the fixed basis order above.
pub fn general_two_mode(c: &TwoModeCoefficients) -> Result<DensityOperator, StateError> {
    DensityOperator::new(2, c.assemble())
}

/// Coefficients of the general equal-charge three-mode state: eight real
/// diagonal weights mu1..mu8 and six complex coherences nu1..nu6 within
/// the one- and two-particle sectors. Basis order is the occupation
/// index (mode 1 = kappa = MSB), with nonzero positions
///
/// ```text
///   (2,3)=nu1  (2,5)=nu2  (3,5)=nu3  (4,6)=nu4  (4,7)=nu5  (6,7)=nu6
/// ```
///
/// in 1-based row/column labels; everything else off-diagonal is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ThreeModeCoefficients {
    pub mu: [f64; 8],
    pub nu: [Complex64; 6],
}

/// Off-diagonal positions of nu1..nu6, 0-based.
pub const THREE_MODE_NU_POSITIONS: [(usize, usize); 6] =
    [(1, 2), (1, 4), (2, 4), (3, 5), (3, 6), (5, 6)];

impl ThreeModeCoefficients {
    pub fn from_matrix(m: &ComplexMatrix) -> Self {
        assert_eq!((m.rows(), m.cols()), (8, 8));
        let mut mu = [0.0; 8];
        for (i, v) in mu.iter_mut().enumerate() {
            *v = m.get(i, i).re;
        }
        let mut nu = [Complex64::new(0.0, 0.0); 6];
        for (v, &(r, c)) in nu.iter_mut().zip(&THREE_MODE_NU_POSITIONS) {
            *v = m.get(r, c);
        }
        ThreeModeCoefficients { mu, nu }
    }

    pub fn assemble(&self) -> ComplexMatrix {
        let mut m = ComplexMatrix::zeros(8, 8);
        for (i, v) in self.mu.iter().enumerate() {
            m.set(i, i, Complex64::new(*v, 0.0));
        }
        for (v, &(r, c)) in self.nu.iter().zip(&THREE_MODE_NU_POSITIONS) {
            m.set(r, c, *v);
            m.set(c, r, v.conj());
        }
        m
    }
}

/// The general equal-charge three-mode state.
pub fn general_three_mode(c: &ThreeModeCoefficients) -> Result<DensityOperator, StateError> {
    DensityOperator::new(3, c.assemble())
}

/// Conserved charge per mode, in units of the elementary charge.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChargePattern {
    charges: Vec<i64>,
}

impl ChargePattern {
    pub fn new(charges: Vec<i64>) -> Self {
        ChargePattern { charges }
    }

    /// Equal unit charge on every mode.
    pub fn equal(n_modes: usize) -> Self {
        ChargePattern {
            charges: vec![1; n_modes],
        }
    }

    pub fn n_modes(&self) -> usize {
        self.charges.len()
    }

    pub fn charges(&self) -> &[i64] {
        &self.charges
    }

    /// Total charge of an occupation pattern given as a basis index.
    pub fn charge_of_index(&self, index: usize) -> i64 {
        let n = self.charges.len();
        (1..=n)
            .filter(|&k| bit_of(index, k, n))
            .map(|k| self.charges[k - 1])
            .sum()
    }

    pub fn charge_of(&self, occ: &OccupationState) -> i64 {
        assert_eq!(occ.n_modes(), self.n_modes());
        self.charge_of_index(occ.index())
    }

    /// Charges reduced mod 2, the parity superselection instance.
    pub fn parity(&self) -> ChargePattern {
        ChargePattern {
            charges: self.charges.iter().map(|c| c.rem_euclid(2)).collect(),
        }
    }
}

/// True iff every matrix element connecting occupation states of
/// different total charge is below 1e-12.
pub fn check_ssr(rho: &DensityOperator, charges: &ChargePattern) -> Result<bool, StateError> {
    if charges.n_modes() != rho.n_modes() {
        return Err(StateError::ChargeCountMismatch {
            charges: charges.n_modes(),
            n_modes: rho.n_modes(),
        });
    }
    let dim = rho.dim();
    let m = rho.matrix();
    for r in 0..dim {
        let qr = charges.charge_of_index(r);
        for c in 0..dim {
            if qr != charges.charge_of_index(c) && m.get(r, c).norm() > TOL_EXACT {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Seeded random density operator of the given rank. With a charge
/// pattern, each pure component is drawn inside a single charge sector
/// so the result respects the superselection rule.
pub fn random_state(
    n_modes: usize,
    rank: usize,
    seed: u64,
    ssr: Option<&ChargePattern>,
) -> DensityOperator {
    let dim = 1usize << n_modes;
    assert!(rank >= 1 && rank <= dim, "rank must be in 1..=2^n");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let sectors: Option<Vec<Vec<usize>>> = ssr.map(|charges| {
        let mut by_charge: std::collections::BTreeMap<i64, Vec<usize>> = Default::default();
        for i in 0..dim {
            by_charge
                .entry(charges.charge_of_index(i))
                .or_default()
                .push(i);
        }
        by_charge.into_values().collect()
    });

    let mut weights: Vec<f64> = (0..rank).map(|_| rng.gen::<f64>() + 0.05).collect();
    let total: f64 = weights.iter().sum();
    for w in weights.iter_mut() {
        *w /= total;
    }

    let mut acc = ComplexMatrix::zeros(dim, dim);
    for &w in &weights {
        let support: Vec<usize> = match &sectors {
            Some(sectors) => sectors[rng.gen_range(0..sectors.len())].clone(),
            None => (0..dim).collect(),
        };
        let mut v = vec![Complex64::new(0.0, 0.0); dim];
        for &i in &support {
            v[i] = Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5);
        }
        let norm: f64 = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        for x in v.iter_mut() {
            *x /= norm;
        }
        acc = acc
            .add(&ComplexMatrix::outer(&v, &v).scale(Complex64::new(w, 0.0)))
            .expect("same dim");
    }
    // Renormalize the trace exactly; rounding in the weights otherwise
    // trips the 1e-12 trace check.
    let tr = acc.trace().re;
    acc = acc.scale(Complex64::new(1.0 / tr, 0.0));
    DensityOperator::new(n_modes, acc).expect("construction is valid by design")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn pure_vacuum() {
        let mut v = vec![c(0.0, 0.0); 4];
        v[0] = c(1.0, 0.0);
        let rho = from_pure(&v).unwrap();
        assert_eq!(rho.matrix().get(0, 0), c(1.0, 0.0));
        assert!(rho.is_pure());
    }

    #[test]
    fn pure_rejects_unnormalized() {
        let v = vec![c(1.0, 0.0), c(1.0, 0.0)];
        assert!(matches!(from_pure(&v), Err(StateError::NotNormalized(_))));
    }

    #[test]
    fn pure_single_excitation_superposition() {
        // (|1_k> + |1_k'>)/sqrt(2): four entries of 1/2 in the
        // one-particle block, indices 1 and 2.
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let v = vec![c(0.0, 0.0), c(s, 0.0), c(s, 0.0), c(0.0, 0.0)];
        let rho = from_pure(&v).unwrap();
        for r in 1..=2 {
            for cc in 1..=2 {
                assert!((rho.matrix().get(r, cc) - c(0.5, 0.0)).norm() < TOL_EXACT);
            }
        }
        assert_eq!(rho.matrix().get(0, 0), c(0.0, 0.0));
        let spec = rho.spectrum();
        assert!((spec[0] - 1.0).abs() < TOL_EIGEN);
        assert!(spec[1..].iter().all(|l| l.abs() < TOL_EIGEN));
    }

    #[test]
    fn mix_identity_and_weights() {
        let mut v0 = vec![c(0.0, 0.0); 4];
        v0[0] = c(1.0, 0.0);
        let mut v3 = vec![c(0.0, 0.0); 4];
        v3[3] = c(1.0, 0.0);
        let rho0 = from_pure(&v0).unwrap();
        let rho3 = from_pure(&v3).unwrap();

        let single = mix(std::slice::from_ref(&rho0), &[1.0]).unwrap();
        assert_eq!(single.matrix(), rho0.matrix());

        let even = mix(&[rho0.clone(), rho3.clone()], &[0.5, 0.5]).unwrap();
        assert_eq!(even.matrix().get(0, 0), c(0.5, 0.0));
        assert_eq!(even.matrix().get(3, 3), c(0.5, 0.0));

        // Orthogonal projector mixture has the weights as its spectrum.
        let skew = mix(&[rho0, rho3], &[0.7, 0.3]).unwrap();
        let spec = skew.spectrum();
        assert!((spec[0] - 0.7).abs() < TOL_EIGEN && (spec[1] - 0.3).abs() < TOL_EIGEN);
    }

    #[test]
    fn mix_rejects_bad_weights() {
        let mut v0 = vec![c(0.0, 0.0); 2];
        v0[0] = c(1.0, 0.0);
        let rho = from_pure(&v0).unwrap();
        assert!(matches!(
            mix(&[rho], &[0.5]),
            Err(StateError::BadWeights(_))
        ));
    }

    #[test]
    fn two_mode_vacuum_projector() {
        let coeffs = TwoModeCoefficients {
            alpha: [1.0, 0.0, 0.0, 0.0],
            beta: [c(0.0, 0.0); 6],
        };
        let rho = general_two_mode(&coeffs).unwrap();
        assert_eq!(rho.matrix().get(0, 0), c(1.0, 0.0));
    }

    #[test]
    fn two_mode_bell_type() {
        // alpha = (0, 1/2, 1/2, 0), beta4 = 1/2: projector on
        // (|1_k> + |1_k'>)/sqrt(2).
        let mut beta = [c(0.0, 0.0); 6];
        beta[3] = c(0.5, 0.0);
        let coeffs = TwoModeCoefficients {
            alpha: [0.0, 0.5, 0.5, 0.0],
            beta,
        };
        let rho = general_two_mode(&coeffs).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let v = vec![c(0.0, 0.0), c(s, 0.0), c(s, 0.0), c(0.0, 0.0)];
        let expected = from_pure(&v).unwrap();
        assert!(rho.matrix().max_abs_diff(expected.matrix()) < TOL_EXACT);
    }

    #[test]
    fn two_mode_element_positions() {
        let beta = [
            c(0.01, 0.0),
            c(0.02, 0.0),
            c(0.03, 0.0),
            c(0.04, 0.0),
            c(0.05, 0.0),
            c(0.06, 0.0),
        ];
        let coeffs = TwoModeCoefficients {
            alpha: [0.4, 0.3, 0.2, 0.1],
            beta,
        };
        let m = coeffs.assemble();
        // Row 2 is (b1*, a2, b4, b5): element (2,4) is beta5.
        assert_eq!(m.get(1, 3), beta[4]);
        assert_eq!(m.get(1, 0), beta[0].conj());
        let roundtrip = TwoModeCoefficients::from_matrix(&m);
        assert_eq!(roundtrip, coeffs);
    }

    #[test]
    fn two_mode_rejects_non_psd() {
        let mut beta = [c(0.0, 0.0); 6];
        beta[0] = c(0.5, 0.0); // vacuum-coherence with zero weight on |1_k'>
        let coeffs = TwoModeCoefficients {
            alpha: [1.0, 0.0, 0.0, 0.0],
            beta,
        };
        assert!(matches!(
            general_two_mode(&coeffs),
            Err(StateError::NotPositive(_))
        ));
    }

    #[test]
    fn three_mode_vacuum_and_pattern() {
        let coeffs = ThreeModeCoefficients {
            mu: [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            nu: [c(0.0, 0.0); 6],
        };
        let rho = general_three_mode(&coeffs).unwrap();
        assert_eq!(rho.matrix().get(0, 0), c(1.0, 0.0));

        let nu = [
            c(0.011, 0.001),
            c(0.012, 0.002),
            c(0.013, 0.003),
            c(0.014, 0.004),
            c(0.015, 0.005),
            c(0.016, 0.006),
        ];
        let coeffs = ThreeModeCoefficients {
            mu: [0.2, 0.15, 0.15, 0.1, 0.15, 0.1, 0.1, 0.05],
            nu,
        };
        let m = coeffs.assemble();
        for (k, &(r, cc)) in THREE_MODE_NU_POSITIONS.iter().enumerate() {
            assert_eq!(m.get(r, cc), nu[k]);
        }
        // Sparsity: everything outside the listed positions and the
        // diagonal is zero.
        for r in 0..8 {
            for cc in (r + 1)..8 {
                if !THREE_MODE_NU_POSITIONS.contains(&(r, cc)) {
                    assert_eq!(m.get(r, cc), c(0.0, 0.0));
                }
            }
        }
    }

    #[test]
    fn three_mode_one_particle_bell() {
        // mu3 = mu5 = 1/2, nu3 = 1/2: Bell-type state between kappa and
        // kappa-prime, the outer product of (|100> + |010>)/sqrt(2).
        let mut nu = [c(0.0, 0.0); 6];
        nu[2] = c(0.5, 0.0);
        let coeffs = ThreeModeCoefficients {
            mu: [0.0, 0.0, 0.5, 0.0, 0.5, 0.0, 0.0, 0.0],
            nu,
        };
        let rho = general_three_mode(&coeffs).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let mut v = vec![c(0.0, 0.0); 8];
        v[0b100] = c(s, 0.0);
        v[0b010] = c(s, 0.0);
        let expected = from_pure(&v).unwrap();
        assert!(rho.matrix().max_abs_diff(expected.matrix()) < TOL_EXACT);
    }

    #[test]
    fn ssr_verdicts() {
        let charges = ChargePattern::equal(2);

        // Any diagonal state passes.
        let diag = general_two_mode(&TwoModeCoefficients {
            alpha: [0.4, 0.3, 0.2, 0.1],
            beta: [c(0.0, 0.0); 6],
        })
        .unwrap();
        assert!(check_ssr(&diag, &charges).unwrap());

        // beta4 couples equal-charge vectors: allowed.
        let mut beta = [c(0.0, 0.0); 6];
        beta[3] = c(0.2, 0.1);
        let b4_only = general_two_mode(&TwoModeCoefficients {
            alpha: [0.3, 0.3, 0.3, 0.1],
            beta,
        })
        .unwrap();
        assert!(check_ssr(&b4_only, &charges).unwrap());

        // beta1 couples vacuum to a charged vector: must vanish.
        let mut beta = [c(0.0, 0.0); 6];
        beta[0] = c(0.1, 0.0);
        let b1_state = general_two_mode(&TwoModeCoefficients {
            alpha: [0.4, 0.3, 0.2, 0.1],
            beta,
        })
        .unwrap();
        assert!(!check_ssr(&b1_state, &charges).unwrap());
    }

    #[test]
    fn ssr_invariant_under_mixing() {
        let charges = ChargePattern::equal(2);
        let a = random_state(2, 3, 17, Some(&charges));
        let b = random_state(2, 2, 18, Some(&charges));
        let m = mix(&[a, b], &[0.6, 0.4]).unwrap();
        assert!(check_ssr(&m, &charges).unwrap());
    }

    #[test]
    fn random_state_properties() {
        let pure = random_state(3, 1, 42, None);
        assert!(pure.is_pure());

        let a = random_state(3, 4, 7, None);
        let b = random_state(3, 4, 7, None);
        assert_eq!(a.matrix(), b.matrix());

        let charges = ChargePattern::equal(3);
        let constrained = random_state(3, 4, 9, Some(&charges));
        assert!(check_ssr(&constrained, &charges).unwrap());
    }

    #[test]
    fn coefficient_roundtrip_is_exact() {
        let rho = random_state(2, 4, 123, None);
        let coeffs = TwoModeCoefficients::from_matrix(rho.matrix());
        assert!(coeffs.assemble().max_abs_diff(rho.matrix()) < 1e-15);
    }

    #[test]
    fn parity_pattern() {
        let p = ChargePattern::new(vec![3, 2, 1]).parity();
        assert_eq!(p.charges(), &[1, 0, 1]);
    }
}
