//! String-support dynamics under gate-averaged random two-site gates: the
//! uniform Markov model, mean-field density recursions, weight-1 stay
//! probabilities, operator fronts on brickwork circuits and the continuum
//! layer count.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuits::exact_log;
use crate::clifford::{construct_inflationary, enumerate_symplectic, SymplecticGate};
use crate::field::Prime;
use crate::sampling::{chunked_map, rng_for, Estimate, Moments, Rng};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    #[error("{name} = {value} outside [{lo}, {hi}]")]
    OutOfRange { name: &'static str, value: f64, lo: f64, hi: f64 },
    #[error("at least one sample is required")]
    ZeroSamples,
    #[error("invalid gate support ({a}, {b}) on {n} sites")]
    InvalidSupport { a: usize, b: usize, n: usize },
    #[error("{0}")]
    BadSize(String),
}

fn check_range(name: &'static str, value: f64, lo: f64, hi: f64) -> Result<(), DynamicsError> {
    if value.is_finite() && value >= lo && value <= hi {
        Ok(())
    } else {
        Err(DynamicsError::OutOfRange { name, value, lo, hi })
    }
}

/// Per-site local class: 0 is the identity, `1..d²` the nontrivial classes
/// (for `d = 2`: 1 = X, 2 = Y, 3 = Z).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupportState {
    pub d: u32,
    pub support: Vec<u16>,
}

pub const CLASS_Z: u16 = 3;

impl SupportState {
    pub fn single(d: u32, n: usize, site: usize, class: u16) -> Self {
        let mut support = vec![0; n];
        support[site] = class;
        SupportState { d, support }
    }

    pub fn n(&self) -> usize {
        self.support.len()
    }

    pub fn weight(&self) -> usize {
        self.support.iter().filter(|&&c| c != 0).count()
    }
}

/// Resamples the two sites uniformly over the `d⁴ − 1` nontrivial two-site
/// classes unless both are the identity.
pub fn haar_markov_step(state: &mut SupportState, a: usize, b: usize, rng: &mut Rng) -> Result<(), DynamicsError> {
    let n = state.n();
    if a == b || a >= n || b >= n {
        return Err(DynamicsError::InvalidSupport { a, b, n });
    }
    let (sa, sb) = resample_pair(state.d, state.support[a], state.support[b], rng);
    state.support[a] = sa;
    state.support[b] = sb;
    Ok(())
}

#[inline]
fn resample_pair(d: u32, sa: u16, sb: u16, rng: &mut Rng) -> (u16, u16) {
    if sa == 0 && sb == 0 {
        return (0, 0);
    }
    let local = (d * d) as u16;
    let k = rng.gen_range(1..local * local);
    (k % local, k / local)
}

/// Row-stochastic `d⁴ × d⁴` transition matrix of one averaged two-site gate,
/// indexed by `class_a + d²·class_b`.
pub fn two_site_transition_matrix(d: u32) -> Vec<Vec<f64>> {
    let s = (d * d * d * d) as usize;
    (0..s)
        .map(|i| {
            if i == 0 {
                let mut row = vec![0.0; s];
                row[0] = 1.0;
                row
            } else {
                (0..s).map(|j| if j == 0 { 0.0 } else { 1.0 / (s - 1) as f64 }).collect()
            }
        })
        .collect()
}

/// `ρ ↦ (4/5)ρ(2 − ρ)`.
pub fn mean_field_rho_step(rho: f64) -> Result<f64, DynamicsError> {
    check_range("rho", rho, 0.0, 1.0)?;
    Ok(4.0 * rho * (2.0 - rho) / 5.0)
}

/// `ε ↦ (2/5)ε + (3/5)ε²`.
pub fn epsilon_step(eps: f64) -> Result<f64, DynamicsError> {
    check_range("eps", eps, -1.0 / 3.0, 1.0)?;
    Ok(0.4 * eps + 0.6 * eps * eps)
}

pub fn rho_to_eps(rho: f64) -> f64 {
    1.0 - 4.0 * rho / 3.0
}

pub fn eps_to_rho(eps: f64) -> f64 {
    0.75 * (1.0 - eps)
}

pub fn mean_field_trajectory(rho0: f64, layers: usize) -> Result<Vec<f64>, DynamicsError> {
    let mut out = vec![rho0];
    for _ in 0..layers {
        out.push(mean_field_rho_step(*out.last().unwrap())?);
    }
    Ok(out)
}

/// Layers needed by the continuum flow `dρ/dℓ = (3/5)ρ(1 − 4ρ/3)` to go from
/// `ρ = 1/n` to `ρ = (3/4)(1 − ε)`, by Simpson's rule in `ln ρ`.
pub fn continuum_layer_count(n: f64, eps_target: f64) -> Result<f64, DynamicsError> {
    check_range("eps_target", eps_target, f64::MIN_POSITIVE, 1.0 - f64::EPSILON)?;
    if !(n >= 4.0 / 3.0) {
        return Err(DynamicsError::BadSize(format!("n = {n} must be at least 4/3")));
    }
    continuum_layers_between(1.0 / n, eps_to_rho(eps_target))
}

pub fn continuum_layers_between(rho0: f64, rho1: f64) -> Result<f64, DynamicsError> {
    check_range("rho0", rho0, f64::MIN_POSITIVE, 0.75)?;
    check_range("rho1", rho1, rho0, 0.75)?;
    if rho1 >= 0.75 && rho0 < 0.75 {
        return Err(DynamicsError::OutOfRange { name: "rho1", value: rho1, lo: rho0, hi: 0.75 });
    }
    let (a, b) = (rho0.ln(), rho1.ln());
    if b <= a {
        return Ok(0.0);
    }
    let f = |t: f64| 1.0 / (0.6 * (1.0 - 4.0 * t.exp() / 3.0));
    let steps = 200_000;
    let h = (b - a) / steps as f64;
    let mut sum = f(a) + f(b);
    for i in 1..steps {
        sum += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    Ok(sum * h / 3.0)
}

/// `(5/3)[ln n + ln(1/ε)]`.
pub fn continuum_asymptotic(n: f64, eps_target: f64) -> f64 {
    5.0 / 3.0 * (n.ln() + (1.0 / eps_target).ln())
}

/// Where gates are placed on a string in the support Markov model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    /// Independent uniform perfect matching per layer.
    CompleteGraph,
    /// `n/2` gates per layer, each on an independent uniform pair.
    SequentialPairs,
    /// Binary tree wiring with recycling (`n` a power of 2).
    Tree,
}

impl std::str::FromStr for Placement {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "complete" | "complete-graph" | "complete_graph" => Ok(Placement::CompleteGraph),
            "sequential" | "sequential-pairs" | "sequential_pairs" => Ok(Placement::SequentialPairs),
            "tree" => Ok(Placement::Tree),
            _ => Err(format!("unknown placement {s:?}")),
        }
    }
}

/// A string stored as its nontrivial sites only.
#[derive(Debug, Clone, Default)]
struct Sparse {
    sites: BTreeMap<usize, u16>,
}

impl Sparse {
    fn get(&self, i: usize) -> u16 {
        self.sites.get(&i).copied().unwrap_or(0)
    }

    fn set(&mut self, i: usize, c: u16) {
        if c == 0 {
            self.sites.remove(&i);
        } else {
            self.sites.insert(i, c);
        }
    }

    fn apply_pair(&mut self, d: u32, a: usize, b: usize, rng: &mut Rng) {
        let (sa, sb) = resample_pair(d, self.get(a), self.get(b), rng);
        self.set(a, sa);
        self.set(b, sb);
    }

    /// One layer; only gates touching the string are drawn. Under a uniform
    /// perfect matching, partners of active sites are drawn one at a time,
    /// each uniform over the still-unmatched sites.
    fn layer(&mut self, d: u32, n: usize, placement: Placement, layer: usize, rng: &mut Rng) {
        match placement {
            Placement::CompleteGraph => {
                let active: Vec<usize> = self.sites.keys().copied().collect();
                let mut partner: BTreeMap<usize, usize> = BTreeMap::new();
                let mut pairs = Vec::new();
                for &i in &active {
                    if partner.contains_key(&i) {
                        continue;
                    }
                    let j = loop {
                        let j = rng.gen_range(0..n);
                        if j != i && !partner.contains_key(&j) {
                            break j;
                        }
                    };
                    partner.insert(i, j);
                    partner.insert(j, i);
                    pairs.push((i, j));
                }
                for (a, b) in pairs {
                    self.apply_pair(d, a, b, rng);
                }
            }
            Placement::SequentialPairs => {
                for _ in 0..n / 2 {
                    let a = rng.gen_range(0..n);
                    let mut b = rng.gen_range(0..n - 1);
                    if b >= a {
                        b += 1;
                    }
                    if self.get(a) != 0 || self.get(b) != 0 {
                        self.apply_pair(d, a, b, rng);
                    }
                }
            }
            Placement::Tree => {
                let q = exact_log(n, 2).unwrap_or(1).max(1) as usize;
                let bit = 1usize << ((layer - 1) % q);
                let lows: std::collections::BTreeSet<usize> = self.sites.keys().map(|&i| i & !bit).collect();
                for a in lows {
                    self.apply_pair(d, a, a | bit, rng);
                }
            }
        }
    }
}

fn check_placement(n: usize, placement: Placement) -> Result<(), DynamicsError> {
    if n < 2 {
        return Err(DynamicsError::BadSize(format!("need at least 2 sites, got {n}")));
    }
    match placement {
        Placement::CompleteGraph if n % 2 != 0 => Err(DynamicsError::BadSize(format!("perfect matching needs even n, got {n}"))),
        Placement::Tree if exact_log(n, 2).is_none() => Err(DynamicsError::BadSize(format!("tree placement needs n a power of 2, got {n}"))),
        _ => Ok(()),
    }
}

/// One row of a stay-probability scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StayRow {
    pub layer: usize,
    /// Fraction of trajectories with total weight 1.
    pub weight_one: Estimate,
    /// Fraction still of weight 1 on the starting site.
    pub same_site: Estimate,
    /// Mean of `3^{−w}`, the σᶻ-expectation average.
    pub z_average: Estimate,
}

/// Monte Carlo over weight-1 starts at site 0 (`d = 2`, class Z).
pub fn stay_probability_scan(
    n: usize,
    depth: usize,
    placement: Placement,
    samples: u64,
    seed: u64,
) -> Result<Vec<StayRow>, DynamicsError> {
    if samples == 0 {
        return Err(DynamicsError::ZeroSamples);
    }
    check_placement(n, placement)?;
    let parts = chunked_map(samples as usize, |range| {
        let mut acc = vec![[Moments::default(); 3]; depth + 1];
        for i in range {
            let mut rng = rng_for(seed, 0x5354_4159, i as u64);
            let mut s = Sparse::default();
            s.set(0, CLASS_Z);
            for (l, row) in acc.iter_mut().enumerate() {
                if l > 0 {
                    s.layer(2, n, placement, l, &mut rng);
                }
                let w = s.sites.len();
                row[0].push((w == 1) as u8 as f64);
                row[1].push((w == 1 && s.get(0) != 0) as u8 as f64);
                row[2].push(3f64.powi(-(w as i32)));
            }
        }
        acc
    });
    let mut total = vec![[Moments::default(); 3]; depth + 1];
    for part in parts {
        for (t, p) in total.iter_mut().zip(part) {
            for k in 0..3 {
                t[k] = t[k].merge(p[k]);
            }
        }
    }
    Ok(total
        .into_iter()
        .enumerate()
        .map(|(layer, m)| StayRow { layer, weight_one: m[0].estimate(seed), same_site: m[1].estimate(seed), z_average: m[2].estimate(seed) })
        .collect())
}

/// Monte Carlo string density on the complete graph from an i.i.d. start
/// where each site is nontrivial with probability `rho0` (`d = 2`).
pub fn density_trajectory_mc(n: usize, rho0: f64, layers: usize, samples: u64, seed: u64) -> Result<Vec<Estimate>, DynamicsError> {
    check_range("rho0", rho0, 0.0, 1.0)?;
    if samples == 0 {
        return Err(DynamicsError::ZeroSamples);
    }
    check_placement(n, Placement::CompleteGraph)?;
    let parts = chunked_map(samples as usize, |range| {
        let mut acc = vec![Moments::default(); layers + 1];
        for i in range {
            let mut rng = rng_for(seed, 0x4445_4e53, i as u64);
            let mut s = Sparse::default();
            for site in 0..n {
                if rng.gen_bool(rho0) {
                    s.set(site, rng.gen_range(1..4));
                }
            }
            for (l, m) in acc.iter_mut().enumerate() {
                if l > 0 {
                    s.layer(2, n, Placement::CompleteGraph, l, &mut rng);
                }
                m.push(s.sites.len() as f64 / n as f64);
            }
        }
        acc
    });
    let mut total = vec![Moments::default(); layers + 1];
    for part in parts {
        for (t, p) in total.iter_mut().zip(part) {
            *t = t.merge(p);
        }
    }
    Ok(total.into_iter().map(|m| m.estimate(seed)).collect())
}

fn ln_factorial(k: usize) -> f64 {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    let t = TABLE.get_or_init(|| {
        let mut v = vec![0.0; 1 << 17];
        for i in 1..v.len() {
            v[i] = v[i - 1] + (i as f64).ln();
        }
        v
    });
    t[k]
}

/// `ln (2m − 1)!!`, the number of perfect matchings of `2m` points.
fn ln_matchings(points: usize) -> f64 {
    let m = points / 2;
    ln_factorial(points) - ln_factorial(m) - m as f64 * std::f64::consts::LN_2
}

fn ln_choose(a: usize, b: usize) -> f64 {
    ln_factorial(a) - ln_factorial(b) - ln_factorial(a - b)
}

/// Exact weight distributions on the complete graph (`d = 2`, uniform perfect
/// matchings) from a weight-1 start, one vector per layer `0..=depth`.
/// Weights above `cap` are dropped; the dropped mass is returned alongside.
pub fn exact_weight_chain(n: usize, depth: usize, cap: usize) -> Result<Vec<(Vec<f64>, f64)>, DynamicsError> {
    check_placement(n, Placement::CompleteGraph)?;
    if n >= (1 << 16) {
        return Err(DynamicsError::BadSize(format!("n = {n} too large for the exact chain")));
    }
    let cap = cap.min(n);
    let mut p = vec![0.0; cap + 1];
    p[1] = 1.0;
    let mut dropped = 0.0;
    let mut out = vec![(p.clone(), dropped)];
    let ln_all = ln_matchings(n);
    for _ in 0..depth {
        let mut next = vec![0.0; cap + 1];
        for (w, &pw) in p.iter().enumerate() {
            if pw == 0.0 {
                continue;
            }
            for k in 0..=w / 2 {
                if w - 2 * k > n - w {
                    continue;
                }
                let ln_count = ln_choose(w, 2 * k)
                    + ln_matchings(2 * k)
                    + ln_choose(n - w, w - 2 * k)
                    + ln_factorial(w - 2 * k)
                    + ln_matchings(n + 2 * k - 2 * w);
                let pk = (ln_count - ln_all).exp();
                if pk == 0.0 {
                    continue;
                }
                let m = w - k;
                // each active pair ends with weight 2 w.p. 9/15
                for j in 0..=m {
                    let pj = (ln_choose(m, j) + j as f64 * 0.6f64.ln() + (m - j) as f64 * 0.4f64.ln()).exp();
                    let nw = m + j;
                    if nw <= cap {
                        next[nw] += pw * pk * pj;
                    } else {
                        dropped += pw * pk * pj;
                    }
                }
            }
        }
        p = next;
        out.push((p.clone(), dropped));
    }
    Ok(out)
}

/// `E[3^{−w}]` for each layer of [`exact_weight_chain`]; the returned bound
/// covers the truncated mass.
pub fn exact_z_average(n: usize, depth: usize, cap: usize) -> Result<Vec<(f64, f64)>, DynamicsError> {
    let chain = exact_weight_chain(n, depth, cap)?;
    let bound = 3f64.powi(-(cap.min(n) as i32) - 1);
    Ok(chain
        .into_iter()
        .map(|(p, dropped)| (p.iter().enumerate().map(|(w, &pw)| pw * 3f64.powi(-(w as i32))).sum(), dropped * bound))
        .collect())
}

/// Brute-force evolution of the full `4ⁿ` class distribution on the complete
/// graph (`n ≤ 6`), averaging over all perfect matchings per layer.
/// Returns `P(weight = 1)` per layer from a single Z on site 0.
pub fn dense_weight_one_probability(n: usize, depth: usize) -> Result<Vec<f64>, DynamicsError> {
    check_placement(n, Placement::CompleteGraph)?;
    if n > 6 {
        return Err(DynamicsError::BadSize(format!("dense chain limited to n ≤ 6, got {n}")));
    }
    let states = 1usize << (2 * n);
    let matchings = all_matchings(&(0..n).collect::<Vec<_>>());
    let mut p = vec![0.0; states];
    p[CLASS_Z as usize] = 1.0;
    let weight = |s: usize| (0..n).filter(|&i| (s >> (2 * i)) & 3 != 0).count();
    let mut out = vec![p.iter().enumerate().filter(|(s, _)| weight(*s) == 1).map(|(_, v)| v).sum()];
    for _ in 0..depth {
        let mut next = vec![0.0; states];
        for m in &matchings {
            let mut q = p.clone();
            for &(a, b) in m {
                let mut r = vec![0.0; states];
                for (s, &v) in q.iter().enumerate() {
                    if v == 0.0 {
                        continue;
                    }
                    let mask = (3 << (2 * a)) | (3 << (2 * b));
                    if s & mask == 0 {
                        r[s] += v;
                        continue;
                    }
                    let rest = s & !mask;
                    for k in 1..16usize {
                        r[rest | ((k & 3) << (2 * a)) | ((k >> 2) << (2 * b))] += v / 15.0;
                    }
                }
                q = r;
            }
            for (x, y) in next.iter_mut().zip(&q) {
                *x += y / matchings.len() as f64;
            }
        }
        p = next;
        out.push(p.iter().enumerate().filter(|(s, _)| weight(*s) == 1).map(|(_, v)| v).sum());
    }
    Ok(out)
}

fn all_matchings(items: &[usize]) -> Vec<Vec<(usize, usize)>> {
    if items.is_empty() {
        return vec![Vec::new()];
    }
    let first = items[0];
    let mut out = Vec::new();
    for i in 1..items.len() {
        let rest: Vec<usize> = items[1..].iter().copied().filter(|&x| x != items[i]).collect();
        for mut m in all_matchings(&rest) {
            m.insert(0, (first, items[i]));
            out.push(m);
        }
    }
    out
}

/// Least-squares fit `y = a + b x`; returns `(a, b, R²)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (my - slope * mx, slope, r2)
}

/// Power-law fit of the σᶻ-expectation average at depth `log₂ n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerLawReport {
    pub n: Vec<usize>,
    pub z_average: Vec<f64>,
    pub exponent: f64,
    pub prefactor: f64,
    pub r_squared: f64,
}

pub fn z_average_power_law(exponents: std::ops::RangeInclusive<u32>, cap: usize) -> Result<PowerLawReport, DynamicsError> {
    let mut ns = Vec::new();
    let mut zs = Vec::new();
    for e in exponents {
        let n = 1usize << e;
        let z = exact_z_average(n, e as usize, cap)?;
        ns.push(n);
        zs.push(z[e as usize].0);
    }
    let lx: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
    let ly: Vec<f64> = zs.iter().map(|z| z.ln()).collect();
    let (a, b, r2) = linear_fit(&lx, &ly);
    Ok(PowerLawReport { n: ns, z_average: zs, exponent: b, prefactor: a.exp(), r_squared: r2 })
}

/// Gate model for brickwork fronts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrontKind {
    /// Uniform over the 720 two-qubit symplectic gates.
    RandomClifford,
    /// The constructed `d = 3` inflationary gate everywhere.
    IqQudit,
}

impl std::str::FromStr for FrontKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "random-clifford" | "random_clifford" | "clifford" => Ok(FrontKind::RandomClifford),
            "iq" | "iq-qudit" | "iq_qudit" => Ok(FrontKind::IqQudit),
            _ => Err(format!("unknown front kind {s:?}")),
        }
    }
}

fn two_qubit_cliffords() -> &'static [SymplecticGate] {
    static G: OnceLock<Vec<SymplecticGate>> = OnceLock::new();
    G.get_or_init(|| enumerate_symplectic(2).expect("d = 2 enumerates").collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontRow {
    pub t: usize,
    pub mean_endpoint: f64,
    pub mean_stderr: f64,
    pub width: f64,
    /// Distribution of right endpoints over positions `0..n`.
    pub rho_r: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontProfile {
    pub kind: FrontKind,
    pub n: usize,
    pub samples: u64,
    pub seed: u64,
    pub rows: Vec<FrontRow>,
}

#[inline]
fn apply_local(m: &[u32], d: Prime, g: [u32; 4]) -> [u32; 4] {
    let mut out = [0u32; 4];
    for (i, &gi) in g.iter().enumerate() {
        if gi == 0 {
            continue;
        }
        for (j, o) in out.iter_mut().enumerate() {
            *o = d.add(*o, d.mul(gi, m[i * 4 + j]));
        }
    }
    out
}

/// Right-endpoint statistics of a string started on site 0 under brickwork
/// layers, for `t = 0..=t_max`.
pub fn front_profile(kind: FrontKind, n: usize, t_max: usize, samples: u64, seed: u64) -> Result<FrontProfile, DynamicsError> {
    if samples == 0 {
        return Err(DynamicsError::ZeroSamples);
    }
    if n % 2 != 0 || n < t_max + 2 {
        return Err(DynamicsError::BadSize(format!("n = {n} must be even and exceed the light cone t_max + 1 = {}", t_max + 1)));
    }
    let (d, fixed) = match kind {
        FrontKind::RandomClifford => (2, None),
        FrontKind::IqQudit => (3, Some(construct_inflationary(3).expect("d = 3 is prime"))),
    };
    let p = Prime::new(d).expect("prime");
    let cliffords = two_qubit_cliffords();
    let parts = chunked_map(samples as usize, |range| {
        let mut hist = vec![vec![0u64; n]; t_max + 1];
        let mut sum = vec![Moments::default(); t_max + 1];
        for i in range {
            let mut rng = rng_for(seed, 0x4652_4f4e, i as u64);
            let mut u = vec![0u32; n];
            let mut v = vec![0u32; n];
            loop {
                u[0] = rng.gen_range(0..d);
                v[0] = rng.gen_range(0..d);
                if u[0] != 0 || v[0] != 0 {
                    break;
                }
            }
            let mut end = 0usize;
            for t in 0..=t_max {
                if t > 0 {
                    let start = if t % 2 == 1 { 0 } else { 1 };
                    let mut a = start;
                    while a + 1 < n && a <= end {
                        let m = match &fixed {
                            Some(g) => g.matrix(),
                            None => cliffords[rng.gen_range(0..cliffords.len())].matrix(),
                        };
                        let out = apply_local(m, p, [u[a], u[a + 1], v[a], v[a + 1]]);
                        u[a] = out[0];
                        u[a + 1] = out[1];
                        v[a] = out[2];
                        v[a + 1] = out[3];
                        a += 2;
                    }
                    end = (0..(end + 2).min(n)).rev().find(|&k| u[k] != 0 || v[k] != 0).unwrap_or(0);
                }
                hist[t][end] += 1;
                sum[t].push(end as f64);
            }
        }
        (hist, sum)
    });
    let mut hist = vec![vec![0u64; n]; t_max + 1];
    let mut sum = vec![Moments::default(); t_max + 1];
    for (h, s) in parts {
        for t in 0..=t_max {
            for (a, b) in hist[t].iter_mut().zip(&h[t]) {
                *a += b;
            }
            sum[t] = sum[t].merge(s[t]);
        }
    }
    let rows = (0..=t_max)
        .map(|t| {
            let m = &sum[t];
            let mean = m.mean();
            let var = (m.sum_sq / m.count as f64 - mean * mean).max(0.0);
            FrontRow {
                t,
                mean_endpoint: mean,
                mean_stderr: m.stderr(),
                width: var.sqrt(),
                rho_r: hist[t].iter().map(|&c| c as f64 / samples as f64).collect(),
            }
        })
        .collect();
    Ok(FrontProfile { kind, n, samples, seed, rows })
}

/// Velocity (slope of the mean endpoint) and width exponent (slope of
/// `ln width` against `ln t`) over `t ∈ [t0, t1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrontFit {
    pub velocity: f64,
    pub width_exponent: Option<f64>,
    pub max_width: f64,
}

impl FrontProfile {
    pub fn fit(&self, t0: usize, t1: usize) -> FrontFit {
        let rows: Vec<&FrontRow> = self.rows.iter().filter(|r| r.t >= t0 && r.t <= t1).collect();
        let t: Vec<f64> = rows.iter().map(|r| r.t as f64).collect();
        let mean: Vec<f64> = rows.iter().map(|r| r.mean_endpoint).collect();
        let (_, velocity, _) = linear_fit(&t, &mean);
        let max_width = rows.iter().map(|r| r.width).fold(0.0, f64::max);
        let width_exponent = rows.iter().all(|r| r.width > 0.0).then(|| {
            let lt: Vec<f64> = t.iter().map(|x| x.ln()).collect();
            let lw: Vec<f64> = rows.iter().map(|r| r.width.ln()).collect();
            linear_fit(&lt, &lw).1
        });
        FrontFit { velocity, width_exponent, max_width }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn mean_field_values() {
        assert_eq!(mean_field_rho_step(0.75).unwrap(), 0.75);
        assert_eq!(mean_field_rho_step(0.0).unwrap(), 0.0);
        assert!((mean_field_rho_step(1.0).unwrap() - 0.8).abs() < 1e-15);
        assert_eq!(epsilon_step(0.0).unwrap(), 0.0);
        assert_eq!(epsilon_step(1.0).unwrap(), 1.0);
        assert!((epsilon_step(0.1).unwrap() - 0.046).abs() < 1e-15);
        assert!(mean_field_rho_step(1.5).is_err());
        assert!(epsilon_step(-0.5).is_err());
    }

    #[test]
    fn epsilon_conjugacy() {
        let mut rng = Rng::seed_from_u64(3);
        for _ in 0..100 {
            let rho: f64 = rng.gen();
            let a = epsilon_step(rho_to_eps(rho)).unwrap();
            let b = rho_to_eps(mean_field_rho_step(rho).unwrap());
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn transition_matrix_is_stochastic() {
        let m = two_site_transition_matrix(2);
        assert_eq!(m.len(), 16);
        for row in &m {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert_eq!(m[0][0], 1.0);
        // weight-1 start: 6 of 15 outcomes keep weight 1
        let stay: f64 = (1..16).filter(|k| (k & 3 == 0) != (k >> 2 == 0)).map(|k| m[1][k]).sum();
        assert!((stay - 0.4).abs() < 1e-12);
    }

    #[test]
    fn markov_step_behaviour() {
        let mut rng = Rng::seed_from_u64(0);
        let mut s = SupportState { d: 2, support: vec![0, 0, 1] };
        haar_markov_step(&mut s, 0, 1, &mut rng).unwrap();
        assert_eq!(s.support, vec![0, 0, 1]);
        assert!(haar_markov_step(&mut s, 1, 1, &mut rng).is_err());
        assert!(haar_markov_step(&mut s, 1, 5, &mut rng).is_err());
        let mut counts = [0u32; 16];
        for _ in 0..30000 {
            let mut s = SupportState::single(2, 2, 0, 1);
            haar_markov_step(&mut s, 0, 1, &mut rng).unwrap();
            assert_ne!(s.weight(), 0);
            counts[(s.support[0] + 4 * s.support[1]) as usize] += 1;
        }
        assert_eq!(counts[0], 0);
        for &c in &counts[1..] {
            assert!((c as f64 - 2000.0).abs() < 200.0);
        }
    }

    #[test]
    fn continuum_matches_closed_form() {
        assert_eq!(continuum_layers_between(0.75, 0.75).unwrap(), 0.0);
        let (n, eps) = (1e6, 1e-3);
        let l = continuum_layer_count(n, eps).unwrap();
        let rho0 = 1.0 / n;
        let rho1 = eps_to_rho(eps);
        let closed = 5.0 / 3.0 * ((rho1 / rho0).ln() - ((1.0 - 4.0 * rho1 / 3.0) / (1.0 - 4.0 * rho0 / 3.0)).ln());
        assert!((l - closed).abs() / closed < 1e-6, "{l} vs {closed}");
        assert!((l - continuum_asymptotic(n, eps)).abs() / l < 0.05);
    }

    #[test]
    fn exact_chain_one_layer() {
        let chain = exact_weight_chain(64, 1, 64).unwrap();
        assert!((chain[1].0[1] - 0.4).abs() < 1e-12);
        assert!((chain[1].0[2] - 0.6).abs() < 1e-12);
        for (p, dropped) in &chain {
            assert!((p.iter().sum::<f64>() + dropped - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn exact_chain_matches_dense_chain() {
        for n in [4, 6] {
            let dense = dense_weight_one_probability(n, 4).unwrap();
            let chain = exact_weight_chain(n, 4, n).unwrap();
            for l in 0..=4 {
                assert!((dense[l] - chain[l].0[1]).abs() < 1e-12, "n={n} l={l}");
            }
        }
    }

    #[test]
    fn stay_scan_matches_exact_chain() {
        let rows = stay_probability_scan(32, 4, Placement::CompleteGraph, 20000, 5).unwrap();
        let chain = exact_weight_chain(32, 4, 32).unwrap();
        assert_eq!(rows[0].weight_one.estimate, 1.0);
        for r in &rows {
            assert!(r.weight_one.z_score(chain[r.layer].0[1]) < 4.0, "{r:?}");
        }
        assert!(rows[1].weight_one.z_score(0.4) < 4.0);
        let tree = stay_probability_scan(32, 5, Placement::Tree, 4000, 5).unwrap();
        // on a tree every layer touches the string, so weight 1 survives
        // with probability (2/5)^ℓ
        for r in &tree {
            assert!(r.weight_one.z_score(0.4f64.powi(r.layer as i32)) < 4.0, "{r:?}");
        }
        assert!(stay_probability_scan(32, 2, Placement::SequentialPairs, 1000, 1).is_ok());
        assert_eq!(stay_probability_scan(32, 2, Placement::Tree, 0, 1), Err(DynamicsError::ZeroSamples));
    }

    #[test]
    fn density_tracks_mean_field() {
        let est = density_trajectory_mc(256, 0.5, 4, 2000, 9).unwrap();
        let mf = mean_field_trajectory(0.5, 4).unwrap();
        for (e, m) in est.iter().zip(&mf) {
            assert!(e.z_score(*m) < 3.0, "{e:?} vs {m}");
        }
    }

    #[test]
    fn iq_front_is_ballistic() {
        let f = front_profile(FrontKind::IqQudit, 64, 40, 200, 1).unwrap();
        for r in &f.rows {
            assert_eq!(r.mean_endpoint, r.t as f64);
            assert_eq!(r.width, 0.0);
        }
        assert!(front_profile(FrontKind::IqQudit, 40, 40, 10, 1).is_err());
    }

    #[test]
    fn clifford_front_is_slower() {
        let f = front_profile(FrontKind::RandomClifford, 64, 40, 300, 2).unwrap();
        let fit = f.fit(10, 40);
        assert!(fit.velocity < 0.95 && fit.velocity > 0.3, "{fit:?}");
        for r in &f.rows {
            assert!((r.rho_r.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}
