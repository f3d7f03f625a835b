//! The 3-bit reversible gate universe S₈.
//!
//! Inputs are encoded as `x = x₀ + 2x₁ + 4x₂` and output bit `i` of `g(x)` is
//! `(g(x) >> i) & 1`. Composition follows `(g∘h)(x) = g(h(x))`.
//!
//! All spectral quantities are exact rationals. For output bit `i`:
//!
//! * `f_c = (1/8) Σ_x (−1)^{g_i(x) ⊕ g_i(x⊕c)}` is the autocorrelation,
//! * `C_c = (f_c + 1)/2` the fraction of inputs whose bit `i` does not flip
//!   when the inputs in `c` flip,
//! * `C̃_a = (1/8) Σ_c (−1)^{a·c} C_c` its Fourier transform.
//!
//! With `s = 2p − 1` the no-flip recursion becomes
//! `s' = Σ_{a≠0} 2C̃_a Π_k s_k^{a_k}`, since `C̃_0 = 1/2` for every balanced
//! output bit. The set-averaged moment polynomials are assembled from these.

use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Rational = Ratio<i64>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GateError {
    #[error("gate table is not a permutation of 0..8: {0:?}")]
    NotPermutation(Vec<u32>),
    #[error("malformed gate row: {0}")]
    Parse(String),
    #[error("cannot average over an empty gate set")]
    EmptySet,
}

#[inline]
pub(crate) fn parity(x: u32) -> u32 {
    x.count_ones() & 1
}

#[inline]
fn sign(bit: u32) -> i64 {
    if bit & 1 == 0 {
        1
    } else {
        -1
    }
}

/// A 3-bit reversible gate: a permutation of `{0, …, 7}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<u32>", into = "Vec<u32>")]
pub struct Gate3([u8; 8]);

impl Gate3 {
    pub const IDENTITY: Gate3 = Gate3([0, 1, 2, 3, 4, 5, 6, 7]);

    pub fn new(table: [u8; 8]) -> Result<Self, GateError> {
        let mut seen = 0u8;
        for &t in &table {
            if t > 7 || seen & (1 << t) != 0 {
                return Err(GateError::NotPermutation(table.iter().map(|&t| t as u32).collect()));
            }
            seen |= 1 << t;
        }
        Ok(Gate3(table))
    }

    #[inline]
    pub fn apply(&self, x: u32) -> u32 {
        self.0[x as usize] as u32
    }

    #[inline]
    pub fn table(&self) -> [u8; 8] {
        self.0
    }

    /// `(self ∘ inner)(x) = self(inner(x))`.
    pub fn compose(&self, inner: &Gate3) -> Gate3 {
        let mut t = [0u8; 8];
        for (x, slot) in t.iter_mut().enumerate() {
            *slot = self.0[inner.0[x] as usize];
        }
        Gate3(t)
    }

    pub fn inverse(&self) -> Gate3 {
        let mut t = [0u8; 8];
        for x in 0..8 {
            t[self.0[x] as usize] = x as u8;
        }
        Gate3(t)
    }

    /// Relabels bitlines: bit `k` of inputs and outputs moves to position `perm[k]`.
    pub fn relabel(&self, perm: [usize; 3]) -> Gate3 {
        let map = |x: u32| -> u32 { (0..3).map(|k| ((x >> k) & 1) << perm[k]).sum() };
        let mut t = [0u8; 8];
        for x in 0..8u32 {
            t[map(x) as usize] = map(self.apply(x)) as u8;
        }
        Gate3(t)
    }

    /// `g(x⊕y) = g(x)⊕g(y)⊕g(0)` for all `x, y`.
    pub fn is_linear(&self) -> bool {
        let c = self.apply(0);
        (0..8).all(|x| (0..8).all(|y| self.apply(x ^ y) == self.apply(x) ^ self.apply(y) ^ c))
    }

    /// Linear, and every single-bit input flip flips at least two output bits.
    pub fn is_inflationary(&self) -> bool {
        self.is_linear() && (0..3).all(|k| (self.apply(0) ^ self.apply(1 << k)).count_ones() >= 2)
    }

    /// `8 · W_{ab}` where `W_{ab} = (1/8) Σ_x (−1)^{a·g(x) ⊕ b·x}`.
    #[inline]
    pub fn walsh_scaled(&self, a: u32, b: u32) -> i64 {
        (0..8u32).map(|x| sign(parity(a & self.apply(x)) ^ parity(b & x))).sum()
    }

    /// Mean over nonzero `a` of the Shannon entropy (bits) of `b ↦ W_{ab}²`.
    pub fn branching_entropy(&self) -> f64 {
        let total: f64 = (1..8).map(|a| self.row_entropy(a)).sum();
        total / 7.0
    }

    fn row_entropy(&self, a: u32) -> f64 {
        (0..8)
            .map(|b| {
                let w = self.walsh_scaled(a, b) as f64 / 8.0;
                let p = w * w;
                if p > 0.0 {
                    -p * p.log2()
                } else {
                    0.0
                }
            })
            .sum()
    }

    /// Smallest row entropy over nonzero `a`.
    pub fn min_row_entropy(&self) -> f64 {
        (1..8).map(|a| self.row_entropy(a)).fold(f64::INFINITY, f64::min)
    }

    pub fn walsh_profile(&self) -> WalshProfile {
        let mut f = [[Rational::from_integer(0); 8]; 3];
        let mut cc = f;
        let mut ct = f;
        for i in 0..3 {
            let bit = |x: u32| (self.apply(x) >> i) & 1;
            for c in 0..8u32 {
                let s: i64 = (0..8u32).map(|x| sign(bit(x) ^ bit(x ^ c))).sum();
                f[i][c as usize] = Rational::new(s, 8);
                cc[i][c as usize] = (f[i][c as usize] + 1) / 2;
            }
            for a in 0..8u32 {
                let s: Rational = (0..8u32).map(|c| cc[i][c as usize] * sign(parity(a & c))).sum();
                ct[i][a as usize] = s / 8;
            }
        }
        WalshProfile { f, c: cc, ctilde: ct }
    }

    pub fn classify(&self) -> GateClass {
        if self.is_inflationary() {
            GateClass::Inflationary
        } else if self.is_linear() {
            GateClass::Linear
        } else if self.branching_entropy() >= max_branching_entropy() - ENTROPY_TOL {
            GateClass::SupernonlinearCandidate
        } else {
            GateClass::Other
        }
    }
}

impl TryFrom<Vec<u32>> for Gate3 {
    type Error = GateError;
    fn try_from(v: Vec<u32>) -> Result<Self, Self::Error> {
        let table: [u8; 8] = v
            .iter()
            .map(|&t| u8::try_from(t).unwrap_or(u8::MAX))
            .collect::<Vec<_>>()
            .try_into()
            .map_err(|_| GateError::NotPermutation(v.clone()))?;
        Gate3::new(table)
    }
}

impl From<Gate3> for Vec<u32> {
    fn from(g: Gate3) -> Vec<u32> {
        g.0.iter().map(|&t| t as u32).collect()
    }
}

impl fmt::Display for Gate3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(u8::to_string).collect();
        f.write_str(&parts.join(" "))
    }
}

impl FromStr for Gate3 {
    type Err = GateError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let v = s
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
            .map(|t| t.parse::<u32>().map_err(|_| GateError::Parse(format!("bad entry {t:?}"))))
            .collect::<Result<Vec<_>, _>>()?;
        Gate3::try_from(v)
    }
}

/// Newline-delimited permutation rows.
pub fn write_gate_set<'a>(gates: impl IntoIterator<Item = &'a Gate3>) -> String {
    gates.into_iter().map(|g| format!("{g}\n")).collect()
}

pub fn read_gate_set(text: &str) -> Result<Vec<Gate3>, GateError> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::parse)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateClass {
    /// Linear but not inflationary.
    Linear,
    /// Linear and inflationary.
    Inflationary,
    SupernonlinearCandidate,
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WalshProfile {
    /// `f[i][c]`
    pub f: [[Rational; 8]; 3],
    /// `C[i][c]`
    pub c: [[Rational; 8]; 3],
    /// `C̃[i][a]`
    pub ctilde: [[Rational; 8]; 3],
}

/// All 40320 gates in lexicographic order of their tables.
pub fn all_gates() -> Vec<Gate3> {
    let mut t = [0u8, 1, 2, 3, 4, 5, 6, 7];
    let mut out = Vec::with_capacity(40320);
    loop {
        out.push(Gate3(t));
        // next lexicographic permutation
        let Some(i) = (0..7).rev().find(|&i| t[i] < t[i + 1]) else {
            break;
        };
        let j = (i + 1..8).rev().find(|&j| t[j] > t[i]).unwrap();
        t.swap(i, j);
        t[i + 1..].reverse();
    }
    out
}

const ENTROPY_TOL: f64 = 1e-9;

/// Largest branching entropy attained in S₈.
pub fn max_branching_entropy() -> f64 {
    static MAX: OnceLock<f64> = OnceLock::new();
    *MAX.get_or_init(|| all_gates().iter().map(Gate3::branching_entropy).fold(0.0, f64::max))
}

pub fn linear_gates() -> Vec<Gate3> {
    all_gates().into_iter().filter(Gate3::is_linear).collect()
}

pub fn inflationary_gates() -> Vec<Gate3> {
    all_gates().into_iter().filter(Gate3::is_inflationary).collect()
}

/// Maximizers of the branching entropy.
pub fn supernonlinear_gates() -> Vec<Gate3> {
    let max = max_branching_entropy();
    all_gates().into_iter().filter(|g| g.branching_entropy() >= max - ENTROPY_TOL).collect()
}

/// Maximizers of `(min row entropy, mean row entropy)` in lexicographic order;
/// the alternative criterion for the supernonlinear family.
pub fn supernonlinear_gates_lexicographic() -> Vec<Gate3> {
    let all = all_gates();
    let keys: Vec<(f64, f64)> = all.iter().map(|g| (g.min_row_entropy(), g.branching_entropy())).collect();
    let best = keys.iter().fold((f64::NEG_INFINITY, f64::NEG_INFINITY), |acc, &k| {
        if k.0 > acc.0 + ENTROPY_TOL || ((k.0 - acc.0).abs() <= ENTROPY_TOL && k.1 > acc.1) {
            k
        } else {
            acc
        }
    });
    all.into_iter()
        .zip(keys)
        .filter(|(_, k)| (k.0 - best.0).abs() <= ENTROPY_TOL && (k.1 - best.1).abs() <= ENTROPY_TOL)
        .map(|(g, _)| g)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Census {
    pub total: usize,
    /// All linear gates, inflationary ones included.
    pub linear: usize,
    pub inflationary: usize,
    pub supernonlinear: usize,
    /// Neither linear nor supernonlinear.
    pub other: usize,
}

pub fn census() -> Census {
    let mut c = Census { total: 0, linear: 0, inflationary: 0, supernonlinear: 0, other: 0 };
    for g in all_gates() {
        c.total += 1;
        match g.classify() {
            GateClass::Inflationary => {
                c.linear += 1;
                c.inflationary += 1;
            }
            GateClass::Linear => c.linear += 1,
            GateClass::SupernonlinearCandidate => c.supernonlinear += 1,
            GateClass::Other => c.other += 1,
        }
    }
    c
}

/// A controlled-NOT; the polarity is chosen per network in [`cnot_network`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cnot {
    pub control: usize,
    pub target: usize,
}

/// CNOT networks whose relabelings and polarity choices give the 144
/// inflationary gates: two four-CNOT networks (24 gates each) and two
/// three-CNOT networks (48 gates each).
pub const TOPOLOGIES: [(&str, &[Cnot]); 4] = [
    (
        "A",
        &[
            Cnot { control: 0, target: 1 },
            Cnot { control: 0, target: 2 },
            Cnot { control: 1, target: 0 },
            Cnot { control: 2, target: 0 },
        ],
    ),
    (
        "B",
        &[
            Cnot { control: 0, target: 1 },
            Cnot { control: 1, target: 2 },
            Cnot { control: 2, target: 0 },
            Cnot { control: 0, target: 1 },
        ],
    ),
    (
        "C",
        &[Cnot { control: 0, target: 1 }, Cnot { control: 1, target: 2 }, Cnot { control: 2, target: 0 }],
    ),
    (
        "D",
        &[Cnot { control: 0, target: 1 }, Cnot { control: 2, target: 0 }, Cnot { control: 1, target: 2 }],
    ),
];

/// Gate realized by a CNOT network with the given polarities (bit `k` of
/// `polarities` set means CNOT `k` fires on control = 1).
pub fn cnot_network(ops: &[Cnot], perm: [usize; 3], polarities: u32) -> Gate3 {
    let mut t = [0u8; 8];
    for (x, slot) in t.iter_mut().enumerate() {
        let mut y = x as u32;
        for (k, op) in ops.iter().enumerate() {
            let pol = (polarities >> k) & 1;
            if (y >> perm[op.control]) & 1 == pol {
                y ^= 1 << perm[op.target];
            }
        }
        *slot = y as u8;
    }
    Gate3(t)
}

const PERMS3: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];

/// Distinct gates produced by one topology over all bitline permutations and
/// control polarities.
pub fn topology_gates(ops: &[Cnot]) -> BTreeSet<Gate3> {
    let mut out = BTreeSet::new();
    for perm in PERMS3 {
        for pol in 0..(1u32 << ops.len()) {
            out.insert(cnot_network(ops, perm, pol));
        }
    }
    out
}

/// Union of all four topologies, with the per-topology counts.
pub fn inflationary_from_topologies() -> (BTreeSet<Gate3>, Vec<(&'static str, usize)>) {
    let mut all = BTreeSet::new();
    let mut counts = Vec::new();
    for (name, ops) in TOPOLOGIES {
        let set = topology_gates(ops);
        counts.push((name, set.len()));
        all.extend(set);
    }
    (all, counts)
}

/// Breadth-first closure under composition.
pub fn closure_under_composition(generators: &[Gate3]) -> HashSet<Gate3> {
    let mut seen: HashSet<Gate3> = generators.iter().copied().collect();
    let mut queue: VecDeque<Gate3> = generators.iter().copied().collect();
    while let Some(g) = queue.pop_front() {
        for h in generators {
            let prod = h.compose(&g);
            if seen.insert(prod) {
                queue.push_back(prod);
            }
        }
    }
    seen
}

/// Coefficients of the set-averaged moment recursions
/// `s' = Σ_j σ_j s^j` and `q' = Σ_{j,k} κ_{jk} s^j q^k`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecursionPolynomials {
    /// `s_poly[j]` multiplies `s^j`, `j = 0..=3`.
    pub s_poly: [Rational; 4],
    /// `(j, k) → κ_{jk}`, zero coefficients omitted.
    pub q_poly: BTreeMap<(u32, u32), Rational>,
}

impl RecursionPolynomials {
    pub fn s_coefficient(&self, power: u32) -> Rational {
        self.s_poly.get(power as usize).copied().unwrap_or_else(|| Rational::from_integer(0))
    }

    pub fn q_coefficient(&self, s_power: u32, q_power: u32) -> Rational {
        self.q_poly.get(&(s_power, q_power)).copied().unwrap_or_else(|| Rational::from_integer(0))
    }

    pub fn eval_s_exact(&self, s: Rational) -> Rational {
        self.s_poly.iter().rev().fold(Rational::from_integer(0), |acc, &c| acc * s + c)
    }

    pub fn eval_q_exact(&self, s: Rational, q: Rational) -> Rational {
        self.q_poly
            .iter()
            .map(|(&(j, k), &c)| c * pow_ratio(s, j) * pow_ratio(q, k))
            .sum()
    }

    pub fn eval_s(&self, s: f64) -> f64 {
        self.s_poly.iter().rev().fold(0.0, |acc, c| acc * s + to_f64(*c))
    }

    pub fn eval_q(&self, s: f64, q: f64) -> f64 {
        self.q_poly
            .iter()
            .map(|(&(j, k), &c)| to_f64(c) * s.powi(j as i32) * q.powi(k as i32))
            .sum()
    }
}

fn pow_ratio(x: Rational, k: u32) -> Rational {
    (0..k).fold(Rational::from_integer(1), |acc, _| acc * x)
}

pub fn to_f64(r: Rational) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// Exact set- and output-bit-averaged recursion polynomials.
///
/// Works in integer units of `1/64` per gate (`8·f̃_a = Σ_c (−1)^{a·c} f_c · 8`
/// is an integer multiple of 1/8), summing over gates before dividing.
pub fn set_average_recursions(gates: &[Gate3]) -> Result<RecursionPolynomials, GateError> {
    if gates.is_empty() {
        return Err(GateError::EmptySet);
    }
    // accumulate 64·f̃_a and (64·f̃_a)(64·f̃_b) as integers
    let mut s_acc = [0i64; 4];
    let mut q_acc: BTreeMap<(u32, u32), i64> = BTreeMap::new();
    for g in gates {
        let prof = g.walsh_profile();
        for i in 0..3 {
            // f̃_a = 2 C̃_a for a ≠ 0
            let ft: Vec<i64> = (0..8)
                .map(|a| {
                    let v = prof.ctilde[i][a] * 2 * 64;
                    debug_assert!(v.is_integer());
                    v.to_integer()
                })
                .collect();
            for a in 1..8u32 {
                if ft[a as usize] == 0 {
                    continue;
                }
                s_acc[a.count_ones() as usize] += ft[a as usize];
                for b in 1..8u32 {
                    if ft[b as usize] == 0 {
                        continue;
                    }
                    let s_pow = (a ^ b).count_ones();
                    let q_pow = (a & b).count_ones();
                    *q_acc.entry((s_pow, q_pow)).or_insert(0) += ft[a as usize] * ft[b as usize];
                }
            }
        }
    }
    let norm = 3 * gates.len() as i64;
    let mut s_poly = [Rational::from_integer(0); 4];
    for (j, &v) in s_acc.iter().enumerate() {
        s_poly[j] = Rational::new(v, 64 * norm);
    }
    let q_poly = q_acc
        .into_iter()
        .filter(|&(_, v)| v != 0)
        .map(|(k, v)| (k, Rational::new(v, 64 * 64 * norm)))
        .collect();
    Ok(RecursionPolynomials { s_poly, q_poly })
}
