//! Dense state-vector simulation on at most 14 qubits. Qubit `i` is bit `i`
//! of the basis index.

use num_complex::Complex64;
use rand::Rng as _;
use thiserror::Error;

use crate::circuits::ClassicalCircuit;
use crate::pauli::PauliString;
use crate::sampling::Rng;

pub const MAX_QUBITS: usize = 14;

type C = Complex64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DenseError {
    #[error("{n} qubits exceeds the dense cap of {max}")]
    TooManyQubits { n: usize, max: usize },
    #[error("gate matrix is not unitary (deviation {0:e})")]
    NotUnitary(f64),
    #[error("qubit {q} out of range for n = {n}")]
    QubitRange { q: usize, n: usize },
    #[error("two-qubit gate needs distinct qubits, got {0} twice")]
    SameQubit(usize),
    #[error("classical circuit acts on {got} lines, expected {want}")]
    LineCount { got: usize, want: usize },
    #[error("string must be a qubit string on {want} sites")]
    BadString { want: usize },
    #[error("basis state {x} out of range for n = {n}")]
    BasisRange { x: u64, n: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub enum QuantumGate {
    Hadamard(usize),
    /// Phase gate `diag(1, i)`.
    Phase(usize),
    Cnot { control: usize, target: usize },
    /// Row-major 2×2 matrix.
    Single { q: usize, m: [C; 4] },
    /// Row-major 4×4 matrix on local index `bit(a) + 2·bit(b)`.
    Two { a: usize, b: usize, m: [C; 16] },
    /// `|x⟩ ↦ |P(x)⟩`.
    Permutation(ClassicalCircuit),
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantumCircuit {
    pub n: usize,
    pub gates: Vec<QuantumGate>,
}

fn unitarity_defect(m: &[C], dim: usize) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..dim {
        for j in 0..dim {
            let mut s = C::new(0.0, 0.0);
            for k in 0..dim {
                s += m[k * dim + i].conj() * m[k * dim + j];
            }
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((s - target).norm());
        }
    }
    worst
}

impl QuantumCircuit {
    pub fn new(n: usize, gates: Vec<QuantumGate>) -> Result<Self, DenseError> {
        if n > MAX_QUBITS {
            return Err(DenseError::TooManyQubits { n, max: MAX_QUBITS });
        }
        let check = |q: usize| if q < n { Ok(()) } else { Err(DenseError::QubitRange { q, n }) };
        for g in &gates {
            match g {
                QuantumGate::Hadamard(q) | QuantumGate::Phase(q) => check(*q)?,
                QuantumGate::Cnot { control: a, target: b } | QuantumGate::Two { a, b, .. } => {
                    check(*a)?;
                    check(*b)?;
                    if a == b {
                        return Err(DenseError::SameQubit(*a));
                    }
                }
                QuantumGate::Single { q, .. } => check(*q)?,
                QuantumGate::Permutation(c) => {
                    if c.n != n {
                        return Err(DenseError::LineCount { got: c.n, want: n });
                    }
                }
            }
            let defect = match g {
                QuantumGate::Single { m, .. } => unitarity_defect(m, 2),
                QuantumGate::Two { m, .. } => unitarity_defect(m, 4),
                _ => 0.0,
            };
            if defect > 1e-10 {
                return Err(DenseError::NotUnitary(defect));
            }
        }
        Ok(QuantumCircuit { n, gates })
    }

    pub fn identity(n: usize) -> Result<Self, DenseError> {
        Self::new(n, Vec::new())
    }

    pub fn apply(&self, psi: &mut Vec<C>) {
        for g in &self.gates {
            apply_gate(g, psi, false);
        }
    }

    pub fn apply_adjoint(&self, psi: &mut Vec<C>) {
        for g in self.gates.iter().rev() {
            apply_gate(g, psi, true);
        }
    }

    /// Column `y` is `U|y⟩`.
    pub fn unitary(&self) -> Matrix {
        let dim = 1usize << self.n;
        let mut m = Matrix::zeros(dim);
        for y in 0..dim {
            let mut psi = basis_state(self.n, y as u64);
            self.apply(&mut psi);
            for (x, a) in psi.into_iter().enumerate() {
                m.set(x, y, a);
            }
        }
        m
    }
}

fn apply_gate(g: &QuantumGate, psi: &mut Vec<C>, adjoint: bool) {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    match g {
        QuantumGate::Hadamard(q) => {
            let m = [C::new(h, 0.0), C::new(h, 0.0), C::new(h, 0.0), C::new(-h, 0.0)];
            apply_single(*q, &m, psi);
        }
        QuantumGate::Phase(q) => {
            let p = if adjoint { C::new(0.0, -1.0) } else { C::new(0.0, 1.0) };
            for (x, a) in psi.iter_mut().enumerate() {
                if x >> q & 1 == 1 {
                    *a *= p;
                }
            }
        }
        QuantumGate::Cnot { control, target } => {
            for x in 0..psi.len() {
                if x >> control & 1 == 1 && x >> target & 1 == 0 {
                    psi.swap(x, x | 1 << target);
                }
            }
        }
        QuantumGate::Single { q, m } => {
            let m = if adjoint { [m[0].conj(), m[2].conj(), m[1].conj(), m[3].conj()] } else { *m };
            apply_single(*q, &m, psi);
        }
        QuantumGate::Two { a, b, m } => {
            let mut mm = *m;
            if adjoint {
                for r in 0..4 {
                    for c in 0..4 {
                        mm[r * 4 + c] = m[c * 4 + r].conj();
                    }
                }
            }
            for x in 0..psi.len() {
                if x >> a & 1 == 1 || x >> b & 1 == 1 {
                    continue;
                }
                let idx = [x, x | 1 << a, x | 1 << b, x | 1 << a | 1 << b];
                let v = idx.map(|i| psi[i]);
                for (r, &i) in idx.iter().enumerate() {
                    psi[i] = (0..4).map(|c| mm[r * 4 + c] * v[c]).sum();
                }
            }
        }
        QuantumGate::Permutation(c) => {
            let perm = if adjoint { c.inverse() } else { c.clone() };
            let mut out = vec![C::new(0.0, 0.0); psi.len()];
            for (x, &a) in psi.iter().enumerate() {
                out[perm.run_u64(x as u64, perm.depth()) as usize] = a;
            }
            *psi = out;
        }
    }
}

fn apply_single(q: usize, m: &[C; 4], psi: &mut [C]) {
    for x in 0..psi.len() {
        if x >> q & 1 == 0 {
            let y = x | 1 << q;
            let (a, b) = (psi[x], psi[y]);
            psi[x] = m[0] * a + m[1] * b;
            psi[y] = m[2] * a + m[3] * b;
        }
    }
}

pub fn basis_state(n: usize, x: u64) -> Vec<C> {
    let mut v = vec![C::new(0.0, 0.0); 1 << n];
    v[x as usize] = C::new(1.0, 0.0);
    v
}

/// `(z, x)` bitmasks of a qubit string.
pub fn string_masks(alpha: &PauliString, n: usize) -> Result<(u64, u64), DenseError> {
    if alpha.d() != 2 || alpha.n() != n || n > 64 {
        return Err(DenseError::BadString { want: n });
    }
    let mask = |v: &[u32]| v.iter().enumerate().fold(0u64, |m, (i, &b)| m | ((b as u64 & 1) << i));
    Ok((mask(alpha.u()), mask(alpha.v())))
}

/// `Ŝ_α|y⟩ = (−1)^{αᶻ·y} |y ⊕ αˣ⟩`.
pub fn apply_string(z: u64, x: u64, psi: &[C]) -> Vec<C> {
    let mut out = vec![C::new(0.0, 0.0); psi.len()];
    for (y, &a) in psi.iter().enumerate() {
        let sign = if (z & y as u64).count_ones() % 2 == 1 { -1.0 } else { 1.0 };
        out[y ^ x as usize] = a * sign;
    }
    out
}

pub fn inner(a: &[C], b: &[C]) -> C {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Square complex matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub dim: usize,
    pub data: Vec<C>,
}

impl Matrix {
    pub fn zeros(dim: usize) -> Self {
        Matrix { dim, data: vec![C::new(0.0, 0.0); dim * dim] }
    }

    pub fn get(&self, r: usize, c: usize) -> C {
        self.data[r * self.dim + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: C) {
        self.data[r * self.dim + c] = v;
    }

    pub fn mul(&self, o: &Matrix) -> Matrix {
        let d = self.dim;
        let mut out = Matrix::zeros(d);
        for i in 0..d {
            for k in 0..d {
                let a = self.data[i * d + k];
                if a == C::new(0.0, 0.0) {
                    continue;
                }
                for j in 0..d {
                    out.data[i * d + j] += a * o.data[k * d + j];
                }
            }
        }
        out
    }

    pub fn adjoint(&self) -> Matrix {
        let d = self.dim;
        let mut out = Matrix::zeros(d);
        for i in 0..d {
            for j in 0..d {
                out.data[j * d + i] = self.data[i * d + j].conj();
            }
        }
        out
    }

    pub fn trace(&self) -> C {
        (0..self.dim).map(|i| self.data[i * self.dim + i]).sum()
    }

    /// Matrix of `Ŝ_α` for masks `(z, x)`.
    pub fn string(n: usize, z: u64, x: u64) -> Matrix {
        let d = 1usize << n;
        let mut m = Matrix::zeros(d);
        for y in 0..d {
            let sign = if (z & y as u64).count_ones() % 2 == 1 { -1.0 } else { 1.0 };
            m.set(y ^ x as usize, y, C::new(sign, 0.0));
        }
        m
    }

    /// Projector onto `|x⟩`.
    pub fn projector(n: usize, x: u64) -> Matrix {
        let mut m = Matrix::zeros(1 << n);
        m.set(x as usize, x as usize, C::new(1.0, 0.0));
        m
    }
}

fn gaussian(rng: &mut Rng) -> C {
    // Box–Muller
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    let r = (-2.0 * u1.ln()).sqrt();
    let t = 2.0 * std::f64::consts::PI * u2;
    C::new(r * t.cos(), r * t.sin())
}

/// Haar-random unitary by Gram–Schmidt on a complex Gaussian matrix;
/// row-major `dim × dim`.
pub fn haar_unitary(dim: usize, rng: &mut Rng) -> Vec<C> {
    let mut cols: Vec<Vec<C>> = Vec::with_capacity(dim);
    for _ in 0..dim {
        let mut v: Vec<C> = (0..dim).map(|_| gaussian(rng)).collect();
        for c in &cols {
            let p = inner(c, &v);
            for (vi, ci) in v.iter_mut().zip(c) {
                *vi -= p * ci;
            }
        }
        let norm = v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        v.iter_mut().for_each(|a| *a /= norm);
        cols.push(v);
    }
    let mut m = vec![C::new(0.0, 0.0); dim * dim];
    for (j, c) in cols.iter().enumerate() {
        for (i, &a) in c.iter().enumerate() {
            m[i * dim + j] = a;
        }
    }
    m
}

/// Random layers of Haar two-qubit gates interleaved with single-qubit
/// Haar gates.
pub fn random_haar_circuit(n: usize, layers: usize, rng: &mut Rng) -> Result<QuantumCircuit, DenseError> {
    let mut gates = Vec::new();
    for _ in 0..layers {
        for q in 0..n {
            let m = haar_unitary(2, rng);
            gates.push(QuantumGate::Single { q, m: [m[0], m[1], m[2], m[3]] });
        }
        if n >= 2 {
            let a = rng.gen_range(0..n);
            let mut b = rng.gen_range(0..n - 1);
            if b >= a {
                b += 1;
            }
            let m = haar_unitary(4, rng);
            gates.push(QuantumGate::Two { a, b, m: m.try_into().expect("4×4") });
        }
    }
    QuantumCircuit::new(n, gates)
}

/// Random circuit of Hadamard, phase and CNOT gates.
pub fn random_clifford_circuit(n: usize, gates: usize, rng: &mut Rng) -> Result<QuantumCircuit, DenseError> {
    let gs = (0..gates)
        .map(|_| match rng.gen_range(0..3) {
            0 => QuantumGate::Hadamard(rng.gen_range(0..n)),
            1 => QuantumGate::Phase(rng.gen_range(0..n)),
            _ if n >= 2 => {
                let a = rng.gen_range(0..n);
                let b = (a + rng.gen_range(1..n)) % n;
                QuantumGate::Cnot { control: a, target: b }
            }
            _ => QuantumGate::Hadamard(0),
        })
        .collect();
    QuantumCircuit::new(n, gs)
}
