//! Circuit wiring (trees, brickwork, random matchings), wire permutations and
//! classical reversible circuits of 3-bit gates.
//!
//! Line 0 is the least significant bit of an input word. Words wider than 64
//! lines are little-endian `u64` limbs.

use std::sync::OnceLock;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gates::{self, Gate3};
use crate::sampling::{derive_seed, rng_for, Rng};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CircuitError {
    #[error("n = {n} is not a power of {k}")]
    NotPowerOf { n: usize, k: usize },
    #[error("tree degree must be at least 2, got {0}")]
    BadDegree(usize),
    #[error("brickwork needs an even line count, got {0}")]
    OddLineCount(usize),
    #[error("permutation is not a bijection on 0..{0}")]
    NotBijection(usize),
    #[error("layer {layer}: {reason}")]
    BadLayer { layer: usize, reason: String },
    #[error("input word has bits set beyond line {0}")]
    InputOutOfRange(usize),
    #[error("layer {requested} requested but the circuit has {depth} layers")]
    LayerOutOfRange { requested: usize, depth: usize },
    #[error("gate slot {slot} in layer {layer} spans {arity} lines, expected 3")]
    GateArity { layer: usize, slot: usize, arity: usize },
    #[error("line {line} out of range for n = {n}")]
    LineOutOfRange { line: usize, n: usize },
}

/// Layers of disjoint `k`-tuples of line indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Wiring {
    pub n: usize,
    pub k: usize,
    pub layers: Vec<Vec<Vec<usize>>>,
}

impl Wiring {
    /// Checks ranges, arity and disjointness within each layer.
    pub fn validate(&self) -> Result<(), CircuitError> {
        for (l, layer) in self.layers.iter().enumerate() {
            let mut used = vec![false; self.n];
            for t in layer {
                if t.len() != self.k {
                    return Err(CircuitError::BadLayer { layer: l, reason: format!("tuple {t:?} is not a {}-tuple", self.k) });
                }
                for &i in t {
                    if i >= self.n {
                        return Err(CircuitError::LineOutOfRange { line: i, n: self.n });
                    }
                    if used[i] {
                        return Err(CircuitError::BadLayer { layer: l, reason: format!("line {i} used twice") });
                    }
                    used[i] = true;
                }
            }
        }
        Ok(())
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }
}

/// Exact integer `log_k n`, if `n` is a power of `k`.
pub fn exact_log(n: usize, k: usize) -> Option<u32> {
    if n == 0 || k < 2 {
        return None;
    }
    let (mut m, mut q) = (n, 0);
    while m % k == 0 {
        m /= k;
        q += 1;
    }
    (m == 1).then_some(q)
}

/// Tuples of layer `layer` (1-based) of a degree-`k` tree on `k^q` lines:
/// lines differing only in base-`k` digit `(layer − 1) mod q`.
fn tree_layer(n: usize, k: usize, q: u32, layer: usize) -> Vec<Vec<usize>> {
    let pos = ((layer - 1) % q as usize) as u32;
    let stride = k.pow(pos);
    (0..n)
        .filter(|i| (i / stride) % k == 0)
        .map(|base| (0..k).map(|j| base + j * stride).collect())
        .collect()
}

/// Degree-`k` tree wiring; layers beyond `log_k n` recycle earlier layers.
pub fn tree_wiring(n: usize, k: usize, layers: usize) -> Result<Wiring, CircuitError> {
    if k < 2 {
        return Err(CircuitError::BadDegree(k));
    }
    let q = exact_log(n, k).filter(|&q| q >= 1).ok_or(CircuitError::NotPowerOf { n, k })?;
    let layers = (1..=layers).map(|l| tree_layer(n, k, q, l)).collect();
    Ok(Wiring { n, k, layers })
}

/// Relabels every line `i` as `perm[i]`.
pub fn permute_wiring(w: &Wiring, perm: &[usize]) -> Result<Wiring, CircuitError> {
    check_bijection(perm, w.n)?;
    let layers = w
        .layers
        .iter()
        .map(|layer| layer.iter().map(|t| t.iter().map(|&i| perm[i]).collect()).collect())
        .collect();
    Ok(Wiring { n: w.n, k: w.k, layers })
}

fn check_bijection(perm: &[usize], n: usize) -> Result<(), CircuitError> {
    if perm.len() != n {
        return Err(CircuitError::NotBijection(n));
    }
    let mut seen = vec![false; n];
    for &p in perm {
        if p >= n || std::mem::replace(&mut seen[p], true) {
            return Err(CircuitError::NotBijection(n));
        }
    }
    Ok(())
}

pub fn random_permutation(n: usize, rng: &mut Rng) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    p
}

/// One-dimensional brickwork of pairs with open boundaries.
pub fn brickwork_wiring(n: usize, layers: usize) -> Result<Wiring, CircuitError> {
    if n % 2 != 0 || n == 0 {
        return Err(CircuitError::OddLineCount(n));
    }
    let layers = (1..=layers)
        .map(|l| {
            let start = if l % 2 == 1 { 0 } else { 1 };
            (start..n.saturating_sub(1)).step_by(2).filter(|&i| i + 1 < n).map(|i| vec![i, i + 1]).collect()
        })
        .collect();
    Ok(Wiring { n, k: 2, layers })
}

/// Each layer is an independent uniformly random partition of `⌊n/k⌋·k`
/// lines into `k`-tuples.
pub fn random_wiring(n: usize, k: usize, layers: usize, rng: &mut Rng) -> Wiring {
    let layers = (0..layers)
        .map(|_| {
            let p = random_permutation(n, rng);
            p.chunks_exact(k).map(|c| c.to_vec()).collect()
        })
        .collect();
    Wiring { n, k, layers }
}

/// Gate families a layer can draw from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateFamily {
    Inflationary,
    Supernonlinear,
    Linear,
    /// All of S₈.
    Any,
    Identity,
}

impl GateFamily {
    pub fn members(self) -> &'static [Gate3] {
        static INFL: OnceLock<Vec<Gate3>> = OnceLock::new();
        static SNL: OnceLock<Vec<Gate3>> = OnceLock::new();
        static LIN: OnceLock<Vec<Gate3>> = OnceLock::new();
        static ALL: OnceLock<Vec<Gate3>> = OnceLock::new();
        static ID: [Gate3; 1] = [Gate3::IDENTITY];
        match self {
            GateFamily::Inflationary => INFL.get_or_init(gates::inflationary_gates),
            GateFamily::Supernonlinear => SNL.get_or_init(gates::supernonlinear_gates),
            GateFamily::Linear => LIN.get_or_init(gates::linear_gates),
            GateFamily::Any => ALL.get_or_init(gates::all_gates),
            GateFamily::Identity => &ID,
        }
    }

    pub fn sample(self, rng: &mut Rng) -> Gate3 {
        let m = self.members();
        m[rng.gen_range(0..m.len())]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slot {
    pub lines: [usize; 3],
    pub gate: Gate3,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stage {
    pub name: String,
    pub layers: usize,
}

/// Layers of 3-bit gates on `n` lines.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassicalCircuit {
    pub n: usize,
    pub stages: Vec<Stage>,
    pub layers: Vec<Vec<Slot>>,
}

pub type Word = Vec<u64>;

pub fn word_len(n: usize) -> usize {
    n.div_ceil(64).max(1)
}

#[inline]
pub fn get_bit(w: &[u64], i: usize) -> u32 {
    ((w[i >> 6] >> (i & 63)) & 1) as u32
}

#[inline]
pub fn flip_bit(w: &mut [u64], i: usize) {
    w[i >> 6] ^= 1 << (i & 63);
}

#[inline]
fn set_bit(w: &mut [u64], i: usize, b: u32) {
    let mask = 1u64 << (i & 63);
    if b != 0 {
        w[i >> 6] |= mask;
    } else {
        w[i >> 6] &= !mask;
    }
}

pub fn random_word(n: usize, rng: &mut Rng) -> Word {
    let mut w: Word = (0..word_len(n)).map(|_| rng.gen()).collect();
    mask_word(&mut w, n);
    w
}

fn mask_word(w: &mut [u64], n: usize) {
    let full = n / 64;
    for (i, limb) in w.iter_mut().enumerate() {
        if i > full || (i == full && n % 64 == 0) {
            *limb = 0;
        } else if i == full {
            *limb &= (1u64 << (n % 64)) - 1;
        }
    }
}

impl ClassicalCircuit {
    /// Builds a circuit from a 3-wiring and one gate per slot.
    pub fn from_wiring(w: &Wiring, gates: Vec<Vec<Gate3>>, stage: &str) -> Result<Self, CircuitError> {
        w.validate()?;
        if w.k != 3 {
            return Err(CircuitError::GateArity { layer: 0, slot: 0, arity: w.k });
        }
        let mut layers = Vec::with_capacity(w.depth());
        for (l, (tuples, gs)) in w.layers.iter().zip(gates).enumerate() {
            if tuples.len() != gs.len() {
                return Err(CircuitError::BadLayer {
                    layer: l,
                    reason: format!("{} tuples but {} gates", tuples.len(), gs.len()),
                });
            }
            layers.push(tuples.iter().zip(gs).map(|(t, gate)| Slot { lines: [t[0], t[1], t[2]], gate }).collect());
        }
        Ok(ClassicalCircuit { n: w.n, stages: vec![Stage { name: stage.into(), layers: w.depth() }], layers })
    }

    pub fn identity(n: usize) -> Self {
        ClassicalCircuit { n, stages: Vec::new(), layers: Vec::new() }
    }

    /// Re-checks slot arity, line ranges and per-layer disjointness.
    pub fn validate(&self) -> Result<(), CircuitError> {
        for (l, layer) in self.layers.iter().enumerate() {
            let mut used = vec![false; self.n];
            for s in layer {
                for &i in &s.lines {
                    if i >= self.n {
                        return Err(CircuitError::LineOutOfRange { line: i, n: self.n });
                    }
                    if std::mem::replace(&mut used[i], true) {
                        return Err(CircuitError::BadLayer { layer: l, reason: format!("line {i} used twice") });
                    }
                }
            }
        }
        Ok(())
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn gate_count(&self) -> usize {
        self.layers.iter().map(Vec::len).sum()
    }

    /// Concatenates `next` after `self`.
    pub fn then(mut self, next: ClassicalCircuit) -> Self {
        debug_assert_eq!(self.n, next.n);
        self.stages.extend(next.stages);
        self.layers.extend(next.layers);
        self
    }

    /// Layers reversed with inverted gates.
    pub fn inverse(&self) -> Self {
        let layers = self
            .layers
            .iter()
            .rev()
            .map(|layer| layer.iter().map(|s| Slot { lines: s.lines, gate: s.gate.inverse() }).collect())
            .collect();
        let stages = self
            .stages
            .iter()
            .rev()
            .map(|s| Stage { name: format!("{}^-1", s.name), layers: s.layers })
            .collect();
        ClassicalCircuit { n: self.n, stages, layers }
    }

    #[inline]
    pub fn apply_layer(&self, layer: usize, w: &mut [u64]) {
        for s in &self.layers[layer] {
            let [a, b, c] = s.lines;
            let x = get_bit(w, a) | get_bit(w, b) << 1 | get_bit(w, c) << 2;
            let y = s.gate.apply(x);
            set_bit(w, a, y & 1);
            set_bit(w, b, (y >> 1) & 1);
            set_bit(w, c, (y >> 2) & 1);
        }
    }

    /// Applies the first `upto_layer` layers (all by default).
    pub fn evaluate(&self, x: &[u64], upto_layer: Option<usize>) -> Result<Word, CircuitError> {
        let depth = upto_layer.unwrap_or(self.depth());
        if depth > self.depth() {
            return Err(CircuitError::LayerOutOfRange { requested: depth, depth: self.depth() });
        }
        let mut w = x.to_vec();
        w.resize(word_len(self.n), 0);
        let mut check = w.clone();
        mask_word(&mut check, self.n);
        if check != w || x.len() > word_len(self.n) && x[word_len(self.n)..].iter().any(|&l| l != 0) {
            return Err(CircuitError::InputOutOfRange(self.n));
        }
        for l in 0..depth {
            self.apply_layer(l, &mut w);
        }
        Ok(w)
    }

    /// Fast path for `n ≤ 64`.
    pub fn evaluate_u64(&self, x: u64, upto_layer: Option<usize>) -> Result<u64, CircuitError> {
        Ok(self.evaluate(&[x], upto_layer)?[0])
    }

    /// Allocation-free evaluation of layers `0..upto` for `n ≤ 64`; the
    /// caller guarantees range and depth.
    #[inline]
    pub fn run_u64(&self, mut x: u64, upto: usize) -> u64 {
        for layer in &self.layers[..upto] {
            for s in layer {
                let [a, b, c] = s.lines;
                let i = (x >> a & 1) | (x >> b & 1) << 1 | (x >> c & 1) << 2;
                let o = s.gate.apply(i as u32) as u64;
                x &= !(1 << a | 1 << b | 1 << c);
                x |= (o & 1) << a | (o >> 1 & 1) << b | (o >> 2 & 1) << c;
            }
        }
        x
    }

    pub fn invert(&self, y: &[u64]) -> Result<Word, CircuitError> {
        self.inverse().evaluate(y, None)
    }

    /// Sets of circuit inputs feeding each line after `layers` layers.
    pub fn input_cones(&self, layers: usize) -> Vec<Vec<usize>> {
        let mut cones: Vec<Vec<usize>> = (0..self.n).map(|i| vec![i]).collect();
        for layer in &self.layers[..layers] {
            for s in layer {
                let mut merged: Vec<usize> = s.lines.iter().flat_map(|&i| cones[i].iter().copied()).collect();
                merged.sort_unstable();
                merged.dedup();
                for &i in &s.lines {
                    cones[i] = merged.clone();
                }
            }
        }
        cones
    }
}

/// Samples one gate per slot of `w`, all from `family`; slot seeds are
/// `hash(seed, stream, layer, slot)`.
pub fn sample_gates(w: &Wiring, family: GateFamily, seed: u64, stream: u64) -> Vec<Vec<Gate3>> {
    w.layers
        .iter()
        .enumerate()
        .map(|(l, layer)| {
            (0..layer.len())
                .map(|slot| {
                    let mut rng = rng_for(seed, derive_seed(stream, l as u64, 0), slot as u64);
                    family.sample(&mut rng)
                })
                .collect()
        })
        .collect()
}

/// A ternary-tree circuit whose layer `ℓ` draws from `families[ℓ]`, wired by
/// consecutive tree layers after an optional random relabeling of lines.
pub fn tree_circuit(n: usize, families: &[GateFamily], seed: u64, permute: bool) -> Result<ClassicalCircuit, CircuitError> {
    let mut w = tree_wiring(n, 3, families.len())?;
    if permute {
        let perm = random_permutation(n, &mut rng_for(seed, 0x7065_726d, 0));
        w = permute_wiring(&w, &perm)?;
    }
    let gates = w
        .layers
        .iter()
        .enumerate()
        .map(|(l, layer)| {
            (0..layer.len())
                .map(|slot| families[l].sample(&mut rng_for(seed, derive_seed(0x7472_6565, l as u64, 0), slot as u64)))
                .collect()
        })
        .collect();
    let mut c = ClassicalCircuit::from_wiring(&w, gates, "tree")?;
    c.stages = families.iter().map(|f| Stage { name: format!("{f:?}").to_lowercase(), layers: 1 }).collect();
    Ok(c)
}

/// Layers of independent random 3-tuples (`⌊n/3⌋` per layer) with gates
/// drawn from `family`.
pub fn random_circuit(n: usize, depth: usize, family: GateFamily, seed: u64) -> Result<ClassicalCircuit, CircuitError> {
    let w = random_wiring(n, 3, depth, &mut rng_for(seed, 0x7769_7265, 0));
    let gates = sample_gates(&w, family, seed, 0x7261_6e64);
    ClassicalCircuit::from_wiring(&w, gates, "random")
}

/// Stage depths `(L, N)` of the three-stage cipher on `n = 3^q` lines:
/// `⌈log₂ n⌉` inflationary layers per bookend and `log₃ n` nonlinear layers.
pub fn cipher_depths(n: usize) -> Result<(usize, usize), CircuitError> {
    let q = exact_log(n, 3).filter(|&q| q >= 1).ok_or(CircuitError::NotPowerOf { n, k: 3 })?;
    let l = (usize::BITS - (n - 1).leading_zeros()) as usize;
    Ok((l, q as usize))
}

/// `P = L_r N L_l`, each stage a ternary tree with its own random relabeling.
pub fn build_three_stage_cipher(n: usize, seed: u64) -> Result<ClassicalCircuit, CircuitError> {
    let (l_depth, n_depth) = cipher_depths(n)?;
    let spec = [("L_l", GateFamily::Inflationary, l_depth), ("N", GateFamily::Supernonlinear, n_depth), ("L_r", GateFamily::Inflationary, l_depth)];
    let mut circuit = ClassicalCircuit::identity(n);
    for (stage, (name, family, depth)) in spec.into_iter().enumerate() {
        let stage = stage as u64;
        let perm = random_permutation(n, &mut rng_for(seed, 0x1000 + stage, 0));
        let w = permute_wiring(&tree_wiring(n, 3, depth)?, &perm)?;
        let gates = sample_gates(&w, family, seed, stage);
        circuit = circuit.then(ClassicalCircuit::from_wiring(&w, gates, name)?);
    }
    Ok(circuit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use crate::sampling::Rng;

    #[test]
    fn binary_tree_layers() {
        let w = tree_wiring(8, 2, 4).unwrap();
        assert_eq!(w.layers[0], vec![vec![0, 1], vec![2, 3], vec![4, 5], vec![6, 7]]);
        assert_eq!(w.layers[1], vec![vec![0, 2], vec![1, 3], vec![4, 6], vec![5, 7]]);
        assert_eq!(w.layers[2], vec![vec![0, 4], vec![1, 5], vec![2, 6], vec![3, 7]]);
        // recycled
        assert_eq!(w.layers[3], w.layers[0]);
        let w16 = tree_wiring(16, 2, 4).unwrap();
        assert_eq!(&w16.layers[3][..3], &[vec![0, 8], vec![1, 9], vec![2, 10]]);
    }

    #[test]
    fn ternary_tree_layers() {
        let w = tree_wiring(27, 3, 3).unwrap();
        assert_eq!(&w.layers[0][..3], &[vec![0, 1, 2], vec![3, 4, 5], vec![6, 7, 8]]);
        assert_eq!(&w.layers[1][..3], &[vec![0, 3, 6], vec![1, 4, 7], vec![2, 5, 8]]);
        assert_eq!(&w.layers[2][..3], &[vec![0, 9, 18], vec![1, 10, 19], vec![2, 11, 20]]);
        let w81 = tree_wiring(81, 3, 4).unwrap();
        assert_eq!(&w81.layers[3][..3], &[vec![0, 27, 54], vec![1, 28, 55], vec![2, 29, 56]]);
        assert_eq!(tree_wiring(24, 3, 1), Err(CircuitError::NotPowerOf { n: 24, k: 3 }));
        assert_eq!(tree_wiring(1, 3, 1), Err(CircuitError::NotPowerOf { n: 1, k: 3 }));
        assert_eq!(tree_wiring(16, 4, 2).unwrap().layers[1][0], vec![0, 4, 8, 12]);
    }

    #[test]
    fn tree_tuples_differ_in_one_digit() {
        for (n, k) in [(27usize, 3usize), (64, 2), (64, 4), (125, 5)] {
            let q = exact_log(n, k).unwrap() as usize;
            let w = tree_wiring(n, k, q).unwrap();
            w.validate().unwrap();
            for layer in &w.layers {
                assert_eq!(layer.len() * k, n);
                for t in layer {
                    for &a in t {
                        for &b in t {
                            if a == b {
                                continue;
                            }
                            let differing = (0..q).filter(|&p| (a / k.pow(p as u32)) % k != (b / k.pow(p as u32)) % k).count();
                            assert_eq!(differing, 1);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn permute_examples() {
        let w = tree_wiring(8, 2, 1).unwrap();
        let id: Vec<usize> = (0..8).collect();
        assert_eq!(permute_wiring(&w, &id).unwrap(), w);
        let rev: Vec<usize> = (0..8).rev().collect();
        assert_eq!(permute_wiring(&w, &rev).unwrap().layers[0], vec![vec![7, 6], vec![5, 4], vec![3, 2], vec![1, 0]]);
        assert_eq!(permute_wiring(&w, &[0, 0, 1, 2, 3, 4, 5, 6]), Err(CircuitError::NotBijection(8)));
        assert_eq!(permute_wiring(&w, &[0, 1]), Err(CircuitError::NotBijection(8)));
    }

    #[test]
    fn brickwork_layers() {
        let w = brickwork_wiring(6, 2).unwrap();
        assert_eq!(w.layers[0], vec![vec![0, 1], vec![2, 3], vec![4, 5]]);
        assert_eq!(w.layers[1], vec![vec![1, 2], vec![3, 4]]);
        w.validate().unwrap();
        assert_eq!(brickwork_wiring(5, 1), Err(CircuitError::OddLineCount(5)));
    }

    #[test]
    fn single_gate_evaluation() {
        let w = Wiring { n: 3, k: 3, layers: vec![vec![vec![0, 1, 2]]] };
        let g: Gate3 = "0 3 5 6 7 4 2 1".parse().unwrap();
        let c = ClassicalCircuit::from_wiring(&w, vec![vec![g]], "one").unwrap();
        assert_eq!(c.evaluate_u64(1, None).unwrap(), 3);
        for x in 0..8 {
            assert_eq!(c.evaluate_u64(x, None).unwrap(), g.apply(x as u32) as u64);
        }
        assert_eq!(c.evaluate_u64(8, None), Err(CircuitError::InputOutOfRange(3)));
        assert!(matches!(c.evaluate_u64(1, Some(2)), Err(CircuitError::LayerOutOfRange { .. })));
        assert_eq!(c.evaluate_u64(5, Some(0)).unwrap(), 5);
    }

    #[test]
    fn identity_gates_do_nothing() {
        let c = tree_circuit(27, &[GateFamily::Identity; 3], 5, true).unwrap();
        let mut rng = Rng::seed_from_u64(1);
        let x = random_word(27, &mut rng);
        assert_eq!(c.evaluate(&x, None).unwrap(), x);
    }

    #[test]
    fn cipher_shape() {
        let c = build_three_stage_cipher(27, 11).unwrap();
        let names: Vec<_> = c.stages.iter().map(|s| (s.name.as_str(), s.layers)).collect();
        assert_eq!(names, vec![("L_l", 5), ("N", 3), ("L_r", 5)]);
        assert_eq!(c.depth(), 13);
        assert_eq!(c.gate_count(), 13 * 9);
        c.validate().unwrap();
        assert_eq!(build_three_stage_cipher(27, 11).unwrap(), c);
        assert_ne!(build_three_stage_cipher(27, 12).unwrap(), c);
        assert!(build_three_stage_cipher(30, 1).is_err());
        let infl = GateFamily::Inflationary.members();
        let snl = GateFamily::Supernonlinear.members();
        assert!(c.layers[..5].iter().flatten().all(|s| infl.contains(&s.gate)));
        assert!(c.layers[5..8].iter().flatten().all(|s| snl.contains(&s.gate)));
        assert_eq!(cipher_depths(729).unwrap(), (10, 6));
        assert_eq!(cipher_depths(3).unwrap(), (2, 1));
    }

    #[test]
    fn json_round_trip() {
        let c = build_three_stage_cipher(9, 3).unwrap();
        let s = serde_json::to_string(&c).unwrap();
        let back: ClassicalCircuit = serde_json::from_str(&s).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn tree_branches_are_independent_up_to_log3_n() {
        let n = 81;
        let c = tree_circuit(n, &[GateFamily::Any; 4], 9, true).unwrap();
        for l in 0..4 {
            let cones = c.input_cones(l);
            for s in &c.layers[l] {
                let [a, b, d] = s.lines;
                let total = cones[a].len() + cones[b].len() + cones[d].len();
                let mut union: Vec<usize> = [&cones[a], &cones[b], &cones[d]].iter().flat_map(|c| c.iter().copied()).collect();
                union.sort_unstable();
                union.dedup();
                assert_eq!(union.len(), total, "layer {}", l + 1);
            }
        }
    }

    proptest! {
        #[test]
        fn round_trip_and_prefix_consistency(seed in any::<u64>(), xseed in any::<u64>()) {
            let c = build_three_stage_cipher(27, seed).unwrap();
            let mut rng = Rng::seed_from_u64(xseed);
            let x = random_word(27, &mut rng);
            let y = c.evaluate(&x, None).unwrap();
            prop_assert_eq!(c.invert(&y).unwrap(), x.clone());
            let l = (xseed % 13) as usize;
            let mut partial = c.evaluate(&x, Some(l)).unwrap();
            c.apply_layer(l, &mut partial);
            prop_assert_eq!(partial, c.evaluate(&x, Some(l + 1)).unwrap());
            let x0 = x[0] & ((1 << 27) - 1);
            prop_assert_eq!(c.run_u64(x0, l), c.evaluate_u64(x0, Some(l)).unwrap());
        }

        #[test]
        fn permuted_layers_remain_partitions(seed in any::<u64>()) {
            let mut rng = Rng::seed_from_u64(seed);
            let perm = random_permutation(27, &mut rng);
            let w = permute_wiring(&tree_wiring(27, 3, 5).unwrap(), &perm).unwrap();
            w.validate().unwrap();
            for layer in &w.layers {
                let mut all: Vec<usize> = layer.iter().flatten().copied().collect();
                all.sort_unstable();
                prop_assert_eq!(all, (0..27).collect::<Vec<_>>());
            }
            let r = random_wiring(16, 3, 3, &mut rng);
            r.validate().unwrap();
            prop_assert!(r.layers.iter().all(|l| l.len() == 5));
        }
    }
}
