//! Phase states `2^{−n/2} Σ_x (−1)^{βˣ·P⁻¹(x)} |x⟩` built from a Hadamard
//! layer and a classical permutation, and their string expectations.
//! Nothing here allocates a `2ⁿ` vector.

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuits::{random_word, word_len, ClassicalCircuit, CircuitError, Word};
use crate::otoc::{Mode, MAX_EXACT_LINES};
use crate::pauli::PauliString;
use crate::sampling::{chunked_map, rng_for, Estimate, Moments};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PrsError {
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error("string must be a qubit string on {want} sites")]
    BadString { want: usize },
    #[error("the flip string must have no z part")]
    FlipHasZ,
    #[error("trivial string rejected")]
    TrivialString,
    #[error("exact mode needs n ≤ {max}, got {n}")]
    TooLargeForExact { n: usize, max: usize },
    #[error("at least one sample is required")]
    ZeroSamples,
    #[error("basis label has bits beyond n = {0}")]
    BasisRange(usize),
    #[error("empty string set")]
    EmptySet,
}

fn to_word(bits: &[u32]) -> Word {
    let mut w = vec![0u64; word_len(bits.len())];
    for (i, &b) in bits.iter().enumerate() {
        if b & 1 == 1 {
            w[i >> 6] |= 1 << (i & 63);
        }
    }
    w
}

fn parity_and(a: &[u64], b: &[u64]) -> u32 {
    a.iter().zip(b).map(|(x, y)| (x & y).count_ones()).sum::<u32>() & 1
}

/// The permutation `P`, its inverse, and the flip string `βˣ`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseState {
    pub n: usize,
    pub p: ClassicalCircuit,
    p_inv: ClassicalCircuit,
    pub beta_x: PauliString,
    beta: Word,
}

impl PhaseState {
    pub fn new(p: ClassicalCircuit, beta_x: PauliString) -> Result<Self, PrsError> {
        let n = p.n;
        if beta_x.d() != 2 || beta_x.n() != n {
            return Err(PrsError::BadString { want: n });
        }
        if beta_x.u().iter().any(|&z| z != 0) {
            return Err(PrsError::FlipHasZ);
        }
        p.validate()?;
        let beta = to_word(beta_x.v());
        Ok(PhaseState { n, p_inv: p.inverse(), p, beta_x, beta })
    }

    pub fn inverse_permutation(&self) -> &ClassicalCircuit {
        &self.p_inv
    }

    fn sign_of(&self, x: &[u64]) -> u32 {
        let y = if self.n <= 64 {
            vec![self.p_inv.run_u64(x[0], self.p_inv.depth())]
        } else {
            self.p_inv.evaluate(x, None).expect("validated input")
        };
        parity_and(&self.beta, &y)
    }
}

/// `±2^{−n/2}` with sign `(−1)^{βˣ·P⁻¹(x)}`.
pub fn phase_state_amplitude(state: &PhaseState, x: &[u64]) -> Result<f64, PrsError> {
    let wl = word_len(state.n);
    if x.iter().skip(wl).any(|&l| l != 0) {
        return Err(PrsError::BasisRange(state.n));
    }
    let mut check: Word = x.iter().take(wl).copied().collect();
    check.resize(wl, 0);
    if state.n % 64 != 0 && check[wl - 1] >> (state.n % 64) != 0 {
        return Err(PrsError::BasisRange(state.n));
    }
    let mag = 2f64.powf(-(state.n as f64) / 2.0);
    Ok(if state.sign_of(&check) == 1 { -mag } else { mag })
}

/// `(−1)^{αᶻ·αˣ} 2⁻ⁿ Σ_x (−1)^{βˣ·[P⁻¹(x) ⊕ P⁻¹(x⊕αˣ)]} (−1)^{αᶻ·x}`.
pub fn string_expectation_prs(state: &PhaseState, alpha: &PauliString, mode: Mode, samples: u64, seed: u64) -> Result<Estimate, PrsError> {
    let n = state.n;
    if alpha.d() != 2 || alpha.n() != n {
        return Err(PrsError::BadString { want: n });
    }
    let az = to_word(alpha.u());
    let ax = to_word(alpha.v());
    let global = if parity_and(&az, &ax) == 1 { -1.0 } else { 1.0 };
    let term = |x: &[u64]| -> i64 {
        let shifted: Word = x.iter().zip(&ax).map(|(a, b)| a ^ b).collect();
        let p = state.sign_of(x) ^ state.sign_of(&shifted) ^ parity_and(&az, x);
        if p == 1 {
            -1
        } else {
            1
        }
    };
    match mode {
        Mode::Exact => {
            if n > MAX_EXACT_LINES {
                return Err(PrsError::TooLargeForExact { n, max: MAX_EXACT_LINES });
            }
            let total = 1usize << n;
            let parts = chunked_map(total, |range| range.map(|x| term(&[x as u64])).sum::<i64>());
            let sum: i64 = parts.into_iter().sum();
            Ok(Estimate { estimate: global * sum as f64 / total as f64, stderr: 0.0, samples: total as u64, seed })
        }
        Mode::Sampled => {
            if samples == 0 {
                return Err(PrsError::ZeroSamples);
            }
            let parts = chunked_map(samples as usize, |range| {
                let mut m = Moments::default();
                for k in range {
                    let x = random_word(n, &mut rng_for(seed, 0x5052_5300, k as u64));
                    m.push(global * term(&x) as f64);
                }
                m
            });
            Ok(parts.into_iter().fold(Moments::default(), Moments::merge).estimate(seed))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanEntry {
    pub alpha: String,
    pub estimate: f64,
    pub stderr: f64,
    /// `|⟨Ŝ_α⟩|²` and its delta-method standard error.
    pub squared: f64,
    pub squared_stderr: f64,
    pub samples: u64,
    pub exceeds_threshold: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanReport {
    pub n: usize,
    pub threshold: f64,
    pub mode: Mode,
    pub seed: u64,
    pub ensemble: String,
    pub entries: Vec<ScanEntry>,
    pub exceedances: Vec<String>,
    pub max_squared: f64,
    pub mean_squared: f64,
}

/// Scans `|⟨Ŝ_α⟩|²` over `alphas` and flags values above `threshold`.
pub fn prs_scan(state: &PhaseState, alphas: &[PauliString], threshold: f64, mode: Mode, samples: u64, seed: u64, ensemble: &str) -> Result<ScanReport, PrsError> {
    if alphas.is_empty() {
        return Err(PrsError::EmptySet);
    }
    let mut entries = Vec::with_capacity(alphas.len());
    for (k, a) in alphas.iter().enumerate() {
        if a.is_identity() {
            return Err(PrsError::TrivialString);
        }
        let e = string_expectation_prs(state, a, mode, samples, crate::sampling::derive_seed(seed, 0x5343_414e, k as u64))?;
        let sq = e.estimate * e.estimate;
        entries.push(ScanEntry {
            alpha: a.to_string(),
            estimate: e.estimate,
            stderr: e.stderr,
            squared: sq,
            squared_stderr: 2.0 * e.estimate.abs() * e.stderr,
            samples: e.samples,
            exceeds_threshold: sq > threshold,
        });
    }
    let exceedances = entries.iter().filter(|e| e.exceeds_threshold).map(|e| e.alpha.clone()).collect();
    let max_squared = entries.iter().map(|e| e.squared).fold(0.0, f64::max);
    let mean_squared = entries.iter().map(|e| e.squared).sum::<f64>() / entries.len() as f64;
    Ok(ScanReport { n: state.n, threshold, mode, seed, ensemble: ensemble.into(), entries, exceedances, max_squared, mean_squared })
}

/// All strings of weight ≤ `max_weight` (at most 2) plus `extra` uniformly
/// random nontrivial strings.
pub fn default_alphas(n: usize, max_weight: usize, extra: usize, seed: u64) -> Vec<PauliString> {
    let mut out = Vec::new();
    let local = [(0u32, 1u32), (1, 1), (1, 0)];
    if max_weight >= 1 {
        for i in 0..n {
            for &(z, x) in &local {
                out.push(PauliString::single_site(2, n, i, z, x).expect("valid site"));
            }
        }
    }
    if max_weight >= 2 {
        for i in 0..n {
            for j in i + 1..n {
                for &(zi, xi) in &local {
                    for &(zj, xj) in &local {
                        let mut u = vec![0; n];
                        let mut v = vec![0; n];
                        (u[i], v[i], u[j], v[j]) = (zi, xi, zj, xj);
                        out.push(PauliString::new(2, u, v).expect("valid string"));
                    }
                }
            }
        }
    }
    out.extend(random_alphas(n, extra, seed));
    out
}

pub fn random_alphas(n: usize, count: usize, seed: u64) -> Vec<PauliString> {
    (0..count)
        .map(|k| {
            let mut rng = rng_for(seed, 0x414c_5048, k as u64);
            loop {
                let u: Vec<u32> = (0..n).map(|_| rng.gen_range(0..2)).collect();
                let v: Vec<u32> = (0..n).map(|_| rng.gen_range(0..2)).collect();
                let s = PauliString::new(2, u, v).expect("valid string");
                if !s.is_identity() {
                    break s;
                }
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuits::{build_three_stage_cipher, random_circuit, GateFamily};
    use crate::dense::{basis_state, QuantumCircuit, QuantumGate};
    use crate::otoc::sac_otoc;

    fn flip(n: usize, j: usize) -> PauliString {
        PauliString::single_site(2, n, j, 0, 1).unwrap()
    }

    #[test]
    fn amplitudes_on_identity() {
        let s = PhaseState::new(ClassicalCircuit::identity(4), flip(4, 2)).unwrap();
        for x in 0..16u64 {
            let a = phase_state_amplitude(&s, &[x]).unwrap();
            let expect = if x >> 2 & 1 == 1 { -0.25 } else { 0.25 };
            assert_eq!(a, expect);
        }
        assert!(phase_state_amplitude(&s, &[16]).is_err());
        let zero = PhaseState::new(ClassicalCircuit::identity(4), PauliString::identity(2, 4).unwrap()).unwrap();
        assert!((0..16).all(|x| phase_state_amplitude(&zero, &[x]).unwrap() == 0.25));
        assert_eq!(PhaseState::new(ClassicalCircuit::identity(4), PauliString::single_site(2, 4, 0, 1, 0).unwrap()), Err(PrsError::FlipHasZ));
    }

    #[test]
    fn amplitudes_match_dense_simulation() {
        let p = random_circuit(8, 5, GateFamily::Any, 3).unwrap();
        let beta = PauliString::new(2, vec![0; 8], vec![1, 0, 0, 1, 1, 0, 0, 0]).unwrap();
        let s = PhaseState::new(p.clone(), beta).unwrap();
        let mut gates: Vec<QuantumGate> = (0..8).map(QuantumGate::Hadamard).collect();
        gates.push(QuantumGate::Permutation(p));
        let c = QuantumCircuit::new(8, gates).unwrap();
        let mut psi = basis_state(8, 0b0001_1001);
        c.apply(&mut psi);
        let mut norm = 0.0;
        for x in 0..256u64 {
            let a = phase_state_amplitude(&s, &[x]).unwrap();
            norm += a * a;
            assert!((psi[x as usize].re - a).abs() < 1e-12 && psi[x as usize].im.abs() < 1e-12);
        }
        assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identity_expectations() {
        let n = 5;
        for j in 0..n {
            let s = PhaseState::new(ClassicalCircuit::identity(n), flip(n, j)).unwrap();
            for i in 0..n {
                let e = string_expectation_prs(&s, &flip(n, i), Mode::Exact, 0, 0).unwrap();
                assert_eq!(e.estimate, if i == j { -1.0 } else { 1.0 });
            }
        }
        let p = random_circuit(9, 4, GateFamily::Any, 1).unwrap();
        let s = PhaseState::new(p, flip(9, 3)).unwrap();
        let z = PauliString::single_site(2, 9, 4, 1, 0).unwrap();
        assert_eq!(string_expectation_prs(&s, &z, Mode::Exact, 0, 0).unwrap().estimate, 0.0);
    }

    #[test]
    fn reduces_to_sac() {
        let p = build_three_stage_cipher(9, 4).unwrap();
        for (i, j) in [(0, 0), (2, 5), (8, 1)] {
            let s = PhaseState::new(p.clone(), flip(9, j)).unwrap();
            let prs = string_expectation_prs(&s, &flip(9, i), Mode::Exact, 0, 0).unwrap();
            let sac = sac_otoc(s.inverse_permutation(), i, j, None, Mode::Exact, 0, 0).unwrap();
            assert_eq!(prs.estimate, sac.estimate);
        }
    }

    #[test]
    fn sampled_agrees_with_exact_and_y_phase() {
        let p = random_circuit(10, 2, GateFamily::Any, 6).unwrap();
        let s = PhaseState::new(p, flip(10, 0)).unwrap();
        let alpha = PauliString::new(2, vec![1, 0, 0, 0, 0, 0, 0, 0, 0, 0], vec![1, 1, 0, 0, 0, 0, 0, 0, 0, 0]).unwrap();
        let exact = string_expectation_prs(&s, &alpha, Mode::Exact, 0, 0).unwrap();
        let sampled = string_expectation_prs(&s, &alpha, Mode::Sampled, 20000, 2).unwrap();
        assert!(sampled.z_score(exact.estimate) < 5.0);
    }

    #[test]
    fn scan_flags_identity_permutation() {
        let n = 6;
        let s = PhaseState::new(ClassicalCircuit::identity(n), flip(n, 0)).unwrap();
        let alphas: Vec<_> = (0..n).map(|i| flip(n, i)).collect();
        let r = prs_scan(&s, &alphas, 0.5, Mode::Exact, 0, 0, "weight-1 x").unwrap();
        assert_eq!(r.exceedances.len(), n);
        assert_eq!(r.max_squared, 1.0);
        assert!(prs_scan(&s, &[PauliString::identity(2, n).unwrap()], 0.5, Mode::Exact, 0, 0, "").is_err());
        assert_eq!(default_alphas(4, 2, 3, 1).len(), 12 + 6 * 9 + 3);
    }
}
