//! Generalized Pauli strings on `n` qudits in phase-free symplectic form.
//!
//! A string `Z_1^{u_1} X_1^{v_1} ⊗ … ⊗ Z_n^{u_n} X_n^{v_n}` is stored as the
//! vector `(u_1,…,u_n | v_1,…,v_n)` over 𝔽_d. Products are vector sums and
//! the commutation phase `S₁S₂ = ω^r S₂S₁` is recovered from the symplectic
//! form `r = u₁·v₂ − v₁·u₂ (mod d)`. Global phases are not tracked.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{FieldError, Prime};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PauliError {
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("component {value} out of range for d = {d}")]
    ComponentRange { value: u32, d: u32 },
    #[error("u has length {u} but v has length {v}")]
    LengthMismatch { u: usize, v: usize },
    #[error("strings differ in shape: (n={n1}, d={d1}) vs (n={n2}, d={d2})")]
    ShapeMismatch { n1: usize, d1: u32, n2: usize, d2: u32 },
    #[error("malformed string text: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PauliString {
    d: Prime,
    u: Vec<u32>,
    v: Vec<u32>,
}

impl PauliString {
    pub fn new(d: u32, u: Vec<u32>, v: Vec<u32>) -> Result<Self, PauliError> {
        let d = Prime::new(d)?;
        if u.len() != v.len() {
            return Err(PauliError::LengthMismatch { u: u.len(), v: v.len() });
        }
        if let Some(&value) = u.iter().chain(v.iter()).find(|&&x| x >= d.get()) {
            return Err(PauliError::ComponentRange { value, d: d.get() });
        }
        Ok(PauliString { d, u, v })
    }

    pub fn identity(d: u32, n: usize) -> Result<Self, PauliError> {
        Self::new(d, vec![0; n], vec![0; n])
    }

    /// `Z_site^zpow X_site^xpow` on `n` sites.
    pub fn single_site(d: u32, n: usize, site: usize, zpow: u32, xpow: u32) -> Result<Self, PauliError> {
        let mut u = vec![0; n];
        let mut v = vec![0; n];
        if site >= n {
            return Err(PauliError::Parse(format!("site {site} out of range for n = {n}")));
        }
        u[site] = zpow;
        v[site] = xpow;
        Self::new(d, u, v)
    }

    /// Builds from the concatenated layout `(u_1..u_n, v_1..v_n)`.
    pub fn from_symplectic(d: u32, g: &[u32]) -> Result<Self, PauliError> {
        if g.len() % 2 != 0 {
            return Err(PauliError::LengthMismatch { u: g.len() / 2 + 1, v: g.len() / 2 });
        }
        let n = g.len() / 2;
        Self::new(d, g[..n].to_vec(), g[n..].to_vec())
    }

    pub(crate) fn from_parts_unchecked(d: Prime, u: Vec<u32>, v: Vec<u32>) -> Self {
        PauliString { d, u, v }
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.u.len()
    }

    #[inline]
    pub fn d(&self) -> u32 {
        self.d.get()
    }

    #[inline]
    pub fn field(&self) -> Prime {
        self.d
    }

    pub fn u(&self) -> &[u32] {
        &self.u
    }

    pub fn v(&self) -> &[u32] {
        &self.v
    }

    /// Concatenated `(u | v)` vector.
    pub fn symplectic_vector(&self) -> Vec<u32> {
        self.u.iter().chain(self.v.iter()).copied().collect()
    }

    pub fn is_identity(&self) -> bool {
        self.weight() == 0
    }

    /// Number of sites carrying a nontrivial local operator.
    pub fn weight(&self) -> usize {
        self.u.iter().zip(&self.v).filter(|(&a, &b)| a != 0 || b != 0).count()
    }

    /// Sites with a nontrivial local operator, ascending.
    pub fn support(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.u[i] != 0 || self.v[i] != 0).collect()
    }

    fn check_shape(&self, other: &Self) -> Result<(), PauliError> {
        if self.n() != other.n() || self.d != other.d {
            return Err(PauliError::ShapeMismatch {
                n1: self.n(),
                d1: self.d(),
                n2: other.n(),
                d2: other.d(),
            });
        }
        Ok(())
    }

    /// `r` with `S₁S₂ = ω^r S₂S₁`, i.e. `g₁ Λ g₂ᵀ mod d`.
    pub fn symplectic_product(&self, other: &Self) -> Result<u32, PauliError> {
        self.check_shape(other)?;
        let p = self.d;
        let mut r = 0u32;
        for i in 0..self.n() {
            r = p.add(r, p.mul(self.u[i], other.v[i]));
            r = p.sub(r, p.mul(self.v[i], other.u[i]));
        }
        Ok(r)
    }

    pub fn commutes_with(&self, other: &Self) -> Result<bool, PauliError> {
        Ok(self.symplectic_product(other)? == 0)
    }

    /// Operator product up to phase: component-wise sum mod d.
    pub fn multiply(&self, other: &Self) -> Result<Self, PauliError> {
        self.check_shape(other)?;
        let p = self.d;
        let u = self.u.iter().zip(&other.u).map(|(&a, &b)| p.add(a, b)).collect();
        let v = self.v.iter().zip(&other.v).map(|(&a, &b)| p.add(a, b)).collect();
        Ok(PauliString { d: p, u, v })
    }

    /// `k`-th power up to phase.
    pub fn scale(&self, k: u32) -> Self {
        let p = self.d;
        let k = k % p.get();
        PauliString {
            d: p,
            u: self.u.iter().map(|&a| p.mul(a, k)).collect(),
            v: self.v.iter().map(|&a| p.mul(a, k)).collect(),
        }
    }

    /// Two-line text form: a `d=<d> n=<n>` header, then `u1,…,un|v1,…,vn`.
    pub fn to_text(&self) -> String {
        format!("d={} n={}\n{}", self.d(), self.n(), self)
    }

    /// Parses the two-line form written by [`PauliString::to_text`].
    pub fn from_text(text: &str) -> Result<Self, PauliError> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let header = lines.next().ok_or_else(|| PauliError::Parse("empty input".into()))?;
        let body = lines.next().ok_or_else(|| PauliError::Parse("missing body line".into()))?;
        let mut d = None;
        let mut n = None;
        for tok in header.split_whitespace() {
            let (k, val) = tok
                .split_once('=')
                .ok_or_else(|| PauliError::Parse(format!("bad header token {tok:?}")))?;
            let val: u64 = val.parse().map_err(|_| PauliError::Parse(format!("bad number {val:?}")))?;
            match k {
                "d" => d = Some(val as u32),
                "n" => n = Some(val as usize),
                _ => return Err(PauliError::Parse(format!("unknown header key {k:?}"))),
            }
        }
        let d = d.ok_or_else(|| PauliError::Parse("header lacks d".into()))?;
        let n = n.ok_or_else(|| PauliError::Parse("header lacks n".into()))?;
        let (u, v) = parse_body(body)?;
        if u.len() != n {
            return Err(PauliError::Parse(format!("header says n={n} but body has {} sites", u.len())));
        }
        Self::new(d, u, v)
    }
}

fn parse_body(body: &str) -> Result<(Vec<u32>, Vec<u32>), PauliError> {
    let (us, vs) = body
        .split_once('|')
        .ok_or_else(|| PauliError::Parse(format!("missing '|' in {body:?}")))?;
    let parse = |s: &str| -> Result<Vec<u32>, PauliError> {
        if s.trim().is_empty() {
            return Ok(Vec::new());
        }
        s.split(',')
            .map(|t| t.trim().parse::<u32>().map_err(|_| PauliError::Parse(format!("bad component {t:?}"))))
            .collect()
    };
    let u = parse(us)?;
    let v = parse(vs)?;
    if u.len() != v.len() {
        return Err(PauliError::LengthMismatch { u: u.len(), v: v.len() });
    }
    Ok((u, v))
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |xs: &[u32]| xs.iter().map(u32::to_string).collect::<Vec<_>>().join(",");
        write!(f, "{}|{}", join(&self.u), join(&self.v))
    }
}

impl FromStr for PauliString {
    type Err = PauliError;

    /// Accepts the two-line form, or a single `d=<d>:u…|v…` line.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some(rest) = s.trim().strip_prefix("d=") {
            if let Some((d, body)) = rest.split_once(':') {
                let d: u32 = d.parse().map_err(|_| PauliError::Parse(format!("bad d {d:?}")))?;
                let (u, v) = parse_body(body)?;
                return Self::new(d, u, v);
            }
        }
        Self::from_text(s)
    }
}

/// The symplectic form `Λ = [[0, 1], [−1, 0]]` on `m` sites.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymplecticForm {
    d: Prime,
    m: usize,
}

impl SymplecticForm {
    pub fn new(d: u32, m: usize) -> Result<Self, PauliError> {
        Ok(SymplecticForm { d: Prime::new(d)?, m })
    }

    /// Dense `2m × 2m` matrix with entries in `[0, d)`.
    pub fn matrix(&self) -> Vec<Vec<u32>> {
        let dim = 2 * self.m;
        let mut lam = vec![vec![0; dim]; dim];
        for i in 0..self.m {
            lam[i][self.m + i] = 1;
            lam[self.m + i][i] = self.d.neg(1);
        }
        lam
    }

    /// `a Λ bᵀ` for concatenated `(u|v)` vectors of length `2m`.
    pub fn eval(&self, a: &[u32], b: &[u32]) -> u32 {
        let p = self.d;
        let m = self.m;
        let mut r = 0;
        for i in 0..m {
            r = p.add(r, p.mul(a[i], b[m + i]));
            r = p.sub(r, p.mul(a[m + i], b[i]));
        }
        r
    }
}
