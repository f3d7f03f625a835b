//! Two-qudit Clifford gates as symplectic matrices over 𝔽_d.
//!
//! A gate acts on a string by right multiplication `g ↦ g·M`, so row `i` of
//! `M` is the image of the `i`-th basis string in the order
//! `(Z_1, …, Z_m, X_1, …, X_m)`. A matrix is a valid Clifford action iff its
//! rows keep the commutation form: `M Λ Mᵀ = Λ` (equivalently `Mᵀ Λ M = Λ`).

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{FieldError, Prime};
use crate::pauli::{PauliError, PauliString, SymplecticForm};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CliffordError {
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Pauli(#[from] PauliError),
    #[error("no two-qubit inflationary Clifford exists (d = 2)")]
    NoQubitInflationary,
    #[error("matrix does not preserve the symplectic form")]
    NotSymplectic,
    #[error("expected {expected} entries, got {got}")]
    WrongSize { expected: usize, got: usize },
    #[error("string acts on {got} sites, gate on {expected}")]
    SupportMismatch { expected: usize, got: usize },
    #[error("field mismatch: gate over d = {gate}, string over d = {string}")]
    FieldMismatch { gate: u32, string: u32 },
    #[error("enumerating Sp(4, {0}) is not supported (d must be 2, 3 or 5)")]
    EnumerationTooLarge(u32),
    #[error("bad gate text: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SymplecticGate {
    d: Prime,
    m: usize,
    /// Row-major `2m × 2m`.
    matrix: Vec<u32>,
}

impl SymplecticGate {
    /// Validates the entries and the symplectic condition.
    pub fn new(d: u32, m: usize, matrix: Vec<u32>) -> Result<Self, CliffordError> {
        let p = Prime::new(d)?;
        let dim = 2 * m;
        if matrix.len() != dim * dim {
            return Err(CliffordError::WrongSize { expected: dim * dim, got: matrix.len() });
        }
        if let Some(&value) = matrix.iter().find(|&&x| x >= d) {
            return Err(PauliError::ComponentRange { value, d }.into());
        }
        let gate = SymplecticGate { d: p, m, matrix };
        if !gate.is_symplectic() {
            return Err(CliffordError::NotSymplectic);
        }
        Ok(gate)
    }

    pub fn identity(d: u32, m: usize) -> Result<Self, CliffordError> {
        let dim = 2 * m;
        let mut matrix = vec![0; dim * dim];
        for i in 0..dim {
            matrix[i * dim + i] = 1;
        }
        Self::new(d, m, matrix)
    }

    /// Exchanges the two sites of a two-site block.
    pub fn swap(d: u32) -> Result<Self, CliffordError> {
        #[rustfmt::skip]
        let matrix = vec![
            0, 1, 0, 0,
            1, 0, 0, 0,
            0, 0, 0, 1,
            0, 0, 1, 0,
        ];
        Self::new(d, 2, matrix)
    }

    /// Assembles a two-site gate from the images of `Z_1, X_1, Z_2, X_2`.
    pub fn from_generator_images(d: u32, images: &GeneratorImages) -> Result<Self, CliffordError> {
        let rows = [&images.z1, &images.z2, &images.x1, &images.x2];
        let matrix = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Self::new(d, 2, matrix)
    }

    #[inline]
    pub fn d(&self) -> u32 {
        self.d.get()
    }

    #[inline]
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn matrix(&self) -> &[u32] {
        &self.matrix
    }

    #[inline]
    fn dim(&self) -> usize {
        2 * self.m
    }

    /// Row `i`: the image of basis string `i`.
    pub fn row(&self, i: usize) -> &[u32] {
        let dim = self.dim();
        &self.matrix[i * dim..(i + 1) * dim]
    }

    /// Images of `Z_1, X_1, Z_2, X_2` (only for `m = 2`).
    pub fn generator_images(&self) -> Option<GeneratorImages> {
        if self.m != 2 {
            return None;
        }
        let r = |i: usize| -> [u32; 4] { self.row(i).try_into().unwrap() };
        Some(GeneratorImages { z1: r(0), x1: r(2), z2: r(1), x2: r(3) })
    }

    fn is_symplectic(&self) -> bool {
        let form = SymplecticForm::new(self.d(), self.m).expect("prime validated");
        let lam = form.matrix();
        let dim = self.dim();
        // rows keep the form: M Λ Mᵀ = Λ
        for i in 0..dim {
            for j in 0..dim {
                if form.eval(self.row(i), self.row(j)) != lam[i][j] {
                    return false;
                }
            }
        }
        true
    }

    /// `Mᵀ Λ M == Λ`; equivalent to the row condition for square matrices.
    pub fn preserves_form_columnwise(&self) -> bool {
        let form = SymplecticForm::new(self.d(), self.m).expect("prime validated");
        let lam = form.matrix();
        let dim = self.dim();
        let col = |j: usize| -> Vec<u32> { (0..dim).map(|i| self.matrix[i * dim + j]).collect() };
        (0..dim).all(|i| (0..dim).all(|j| form.eval(&col(i), &col(j)) == lam[i][j]))
    }

    /// Image `g·M` of a string on the gate's `m` sites.
    pub fn conjugate(&self, g: &PauliString) -> Result<PauliString, CliffordError> {
        if g.n() != self.m {
            return Err(CliffordError::SupportMismatch { expected: self.m, got: g.n() });
        }
        if g.d() != self.d() {
            return Err(CliffordError::FieldMismatch { gate: self.d(), string: g.d() });
        }
        let out = self.apply_vector(&g.symplectic_vector());
        let (u, v) = out.split_at(self.m);
        Ok(PauliString::from_parts_unchecked(self.d, u.to_vec(), v.to_vec()))
    }

    /// Row vector times matrix on a raw `(u|v)` vector.
    pub fn apply_vector(&self, g: &[u32]) -> Vec<u32> {
        let p = self.d;
        let dim = self.dim();
        let mut out = vec![0u32; dim];
        for (i, &gi) in g.iter().enumerate() {
            if gi == 0 {
                continue;
            }
            for (j, o) in out.iter_mut().enumerate() {
                *o = p.add(*o, p.mul(gi, self.matrix[i * dim + j]));
            }
        }
        out
    }

    /// Composition: apply `self` first, then `next`.
    pub fn then(&self, next: &SymplecticGate) -> Result<SymplecticGate, CliffordError> {
        if self.d != next.d || self.m != next.m {
            return Err(CliffordError::FieldMismatch { gate: self.d(), string: next.d() });
        }
        let dim = self.dim();
        let matrix = (0..dim).flat_map(|i| next.apply_vector(self.row(i))).collect();
        Ok(SymplecticGate { d: self.d, m: self.m, matrix })
    }

    /// True iff every nontrivial single-site string on either site maps to
    /// weight 2. All `2(d²−1)` strings are checked, not just the generators.
    pub fn is_inflationary(&self) -> bool {
        if self.m != 2 {
            return false;
        }
        let d = self.d();
        for site in 0..2 {
            for zp in 0..d {
                for xp in 0..d {
                    if zp == 0 && xp == 0 {
                        continue;
                    }
                    let mut g = [0u32; 4];
                    g[site] = zp;
                    g[2 + site] = xp;
                    let img = self.apply_vector(&g);
                    let w = (0..2).filter(|&s| img[s] != 0 || img[2 + s] != 0).count();
                    if w != 2 {
                        return false;
                    }
                }
            }
        }
        true
    }

    /// `d` on the first line, then `2m` rows of space-separated entries.
    pub fn to_text(&self) -> String {
        let mut s = format!("d={}\n", self.d());
        let dim = self.dim();
        for i in 0..dim {
            let row: Vec<String> = self.row(i).iter().map(u32::to_string).collect();
            s.push_str(&row.join(" "));
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, CliffordError> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let header = lines.next().ok_or_else(|| CliffordError::Parse("empty input".into()))?;
        let d: u32 = header
            .strip_prefix("d=")
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| CliffordError::Parse(format!("bad header {header:?}")))?;
        let mut entries = Vec::new();
        for line in lines {
            for tok in line.split_whitespace() {
                entries.push(tok.parse::<u32>().map_err(|_| CliffordError::Parse(format!("bad entry {tok:?}")))?);
            }
        }
        let dim = (entries.len() as f64).sqrt() as usize;
        if dim * dim != entries.len() || dim % 2 != 0 || dim == 0 {
            return Err(CliffordError::Parse(format!("{} entries do not form a 2m×2m matrix", entries.len())));
        }
        Self::new(d, dim / 2, entries)
    }
}

impl fmt::Display for SymplecticGate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

/// Images of the four single-site generators under a two-site gate, each in
/// `(u_1, u_2 | v_1, v_2)` layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorImages {
    pub z1: [u32; 4],
    pub x1: [u32; 4],
    pub z2: [u32; 4],
    pub x2: [u32; 4],
}

/// Builds a two-qudit inflationary Clifford for prime `d ≥ 3`.
///
/// The images are `Z₁ → (1,1|0,0)`, `X₁ → (0,0|h,h)`, `Z₂ → (a,b|0,0)` and
/// `X₂ → (0,0|1,d−1)`, where `h = 2⁻¹` solves `2h = 1` and `(a, b)` is the
/// unique solution of `a − b = 1`, `h(a + b) = 0`. These rows are the matrix.
pub fn construct_inflationary(d: u32) -> Result<SymplecticGate, CliffordError> {
    let p = Prime::new(d)?;
    if d == 2 {
        return Err(CliffordError::NoQubitInflationary);
    }
    // step 1: ã₁ + b̃₁ = 1 with ã₁ = b̃₁
    let h = p.inv(2).expect("2 is invertible for odd d");
    let (ta1, tb1) = (h, h);
    // step 2: ã₂ + b̃₂ = 0
    let (ta2, tb2) = (1, d - 1);
    // step 3: a₂ã₂ + b₂b̃₂ = 1 and a₂ã₁ + b₂b̃₁ = 0, by Cramer's rule
    let det = p.sub(p.mul(ta2, tb1), p.mul(tb2, ta1));
    let det_inv = p.inv(det).ok_or(CliffordError::NotSymplectic)?;
    let a2 = p.mul(tb1, det_inv);
    let b2 = p.mul(p.neg(ta1), det_inv);
    let images = GeneratorImages {
        z1: [1, 1, 0, 0],
        x1: [0, 0, ta1, tb1],
        z2: [a2, b2, 0, 0],
        x2: [0, 0, ta2, tb2],
    };
    SymplecticGate::from_generator_images(d, &images)
}

/// All nonzero vectors of 𝔽_d⁴.
fn nonzero_vectors(d: u32) -> Vec<[u32; 4]> {
    let mut out = Vec::with_capacity((d as usize).pow(4) - 1);
    for a in 0..d {
        for b in 0..d {
            for c in 0..d {
                for e in 0..d {
                    if a | b | c | e != 0 {
                        out.push([a, b, c, e]);
                    }
                }
            }
        }
    }
    out
}

/// Streams every element of Sp(4, d) exactly once, as ordered symplectic
/// bases `(e₁, e₂ ; f₁, f₂)` with `⟨eᵢ, fⱼ⟩ = δᵢⱼ` and all other pairings zero.
pub fn enumerate_symplectic(d: u32) -> Result<impl Iterator<Item = SymplecticGate>, CliffordError> {
    let p = Prime::new(d)?;
    if d > 5 {
        return Err(CliffordError::EnumerationTooLarge(d));
    }
    let form = Arc::new(SymplecticForm::new(d, 2)?);
    let vecs = Arc::new(nonzero_vectors(d));
    let outer: Vec<[u32; 4]> = vecs.to_vec();
    let f0 = Arc::clone(&form);
    Ok(outer.into_iter().flat_map(move |e1| {
        let (v1, f1_) = (Arc::clone(&vecs), Arc::clone(&form));
        let firsts: Vec<[u32; 4]> = vecs.iter().copied().filter(|f1| f0.eval(&e1, f1) == 1).collect();
        firsts.into_iter().flat_map(move |f1| {
            let (v2, f2_) = (Arc::clone(&v1), Arc::clone(&f1_));
            let seconds: Vec<[u32; 4]> = v1
                .iter()
                .copied()
                .filter(|e2| f1_.eval(&e1, e2) == 0 && f1_.eval(&f1, e2) == 0)
                .collect();
            seconds.into_iter().flat_map(move |e2| {
                let thirds: Vec<[u32; 4]> = v2
                    .iter()
                    .copied()
                    .filter(|f2| f2_.eval(&e2, f2) == 1 && f2_.eval(&e1, f2) == 0 && f2_.eval(&f1, f2) == 0)
                    .collect();
                thirds.into_iter().map(move |f2| {
                    let matrix = [e1, e2, f1, f2].iter().flat_map(|r| r.iter().copied()).collect();
                    SymplecticGate { d: p, m: 2, matrix }
                })
            })
        })
    }))
}

/// `|Sp(4, d)| = d⁴ (d² − 1)(d⁴ − 1)`.
pub fn symplectic_group_order(d: u64) -> u64 {
    d.pow(4) * (d * d - 1) * (d.pow(4) - 1)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoGoReport {
    pub d: u32,
    pub total_gates: u64,
    pub inflationary_count: u64,
    pub witness: Option<SymplecticGate>,
}

/// Exhaustively counts inflationary gates in Sp(4, d).
pub fn no_go_report(d: u32) -> Result<NoGoReport, CliffordError> {
    let mut total = 0u64;
    let mut count = 0u64;
    let mut witness = None;
    for gate in enumerate_symplectic(d)? {
        total += 1;
        if gate.is_inflationary() {
            count += 1;
            if witness.is_none() {
                witness = Some(gate);
            }
        }
    }
    Ok(NoGoReport { d, total_gates: total, inflationary_count: count, witness })
}

/// The two-qubit case: all 720 Clifford actions, none inflationary.
pub fn qubit_no_go_report() -> NoGoReport {
    no_go_report(2).expect("d = 2 is always enumerable")
}
