//! String expectations and OTOCs: dense identity checks, the SAC OTOC of
//! classical permutation circuits, and the gate-set moment recursions.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use num_complex::Complex64;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuits::{exact_log, flip_bit, get_bit, random_word, tree_wiring, ClassicalCircuit, CircuitError, GateFamily};
use crate::dense::{apply_string, basis_state, inner, string_masks, DenseError, Matrix, QuantumCircuit};
use crate::gates::{set_average_recursions, to_f64, Rational, RecursionPolynomials};
use crate::pauli::PauliString;
use crate::sampling::{chunked_map, rng_for, Estimate, Moments};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OtocError {
    #[error(transparent)]
    Dense(#[from] DenseError),
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error("bit index {index} out of range for n = {n}")]
    BitRange { index: usize, n: usize },
    #[error("exact mode needs n ≤ {max}, got {n}")]
    TooLargeForExact { n: usize, max: usize },
    #[error("trace forms need n ≤ {max}, got {n}")]
    TooLargeForTrace { n: usize, max: usize },
    #[error("at least one sample is required")]
    ZeroSamples,
    #[error("{0}")]
    Invalid(String),
}

pub const MAX_EXACT_LINES: usize = 24;
pub const MAX_TRACE_QUBITS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Exact,
    Sampled,
}

impl std::str::FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "exact" => Ok(Mode::Exact),
            "sampled" => Ok(Mode::Sampled),
            _ => Err(format!("unknown mode {s:?}")),
        }
    }
}

/// `⟨x|Ŝ_α(τ)|x⟩` with `Ŝ_α(τ) = Û†Ŝ_αÛ`.
pub fn string_expectation_exact(c: &QuantumCircuit, x: u64, alpha: &PauliString) -> Result<Complex64, OtocError> {
    let (z, xm) = string_masks(alpha, c.n)?;
    if x >> c.n != 0 {
        return Err(DenseError::BasisRange { x, n: c.n }.into());
    }
    let mut psi = basis_state(c.n, x);
    c.apply(&mut psi);
    let phi = apply_string(z, xm, &psi);
    Ok(inner(&psi, &phi))
}

fn evolved_string(c: &QuantumCircuit, z: u64, x: u64, forward: bool) -> Matrix {
    let u = c.unitary();
    let s = Matrix::string(c.n, z, x);
    if forward {
        u.adjoint().mul(&s).mul(&u)
    } else {
        u.mul(&s).mul(&u.adjoint())
    }
}

/// `tr[P̂_x Ŝ_α†(τ) P̂_x Ŝ_α(τ)]`.
pub fn expectation_squared_projector_form(c: &QuantumCircuit, x: u64, alpha: &PauliString) -> Result<f64, OtocError> {
    check_trace(c.n)?;
    let (z, xm) = string_masks(alpha, c.n)?;
    let m = evolved_string(c, z, xm, true);
    let p = Matrix::projector(c.n, x);
    Ok(p.mul(&m.adjoint()).mul(&p).mul(&m).trace().re)
}

/// `4⁻ⁿ Σ_{β,β'} (−1)^{(β⊕β')·x} tr[Ŝ_β Ŝ_α†(τ) Ŝ_β' Ŝ_α(τ)]` over z-strings.
pub fn expectation_squared_trace_form(c: &QuantumCircuit, x: u64, alpha: &PauliString) -> Result<f64, OtocError> {
    check_trace(c.n)?;
    let (z, xm) = string_masks(alpha, c.n)?;
    let m = evolved_string(c, z, xm, true);
    let md = m.adjoint();
    let dim = 1u64 << c.n;
    let mut total = Complex64::new(0.0, 0.0);
    for b2 in 0..dim {
        let right = md.mul(&Matrix::string(c.n, b2, 0)).mul(&m);
        for b1 in 0..dim {
            let sign = if ((b1 ^ b2) & x).count_ones() % 2 == 1 { -1.0 } else { 1.0 };
            total += Matrix::string(c.n, b1, 0).mul(&right).trace() * sign;
        }
    }
    Ok(total.re / (dim * dim) as f64)
}

/// `Q_α = 2⁻ⁿ Σ_x |⟨x|Ŝ_α(τ)|x⟩|²` from state evolution.
pub fn q_alpha_average(c: &QuantumCircuit, alpha: &PauliString) -> Result<f64, OtocError> {
    let dim = 1u64 << c.n;
    let mut sum = 0.0;
    for x in 0..dim {
        sum += string_expectation_exact(c, x, alpha)?.norm_sqr();
    }
    Ok(sum / dim as f64)
}

/// `2⁻ⁿ Σ_{βᶻ} 2⁻ⁿ tr[Ŝ_β†(−τ) Ŝ_α† Ŝ_β(−τ) Ŝ_α]`, the averaged OTOC.
pub fn q_alpha_trace_form(c: &QuantumCircuit, alpha: &PauliString) -> Result<f64, OtocError> {
    check_trace(c.n)?;
    let (z, xm) = string_masks(alpha, c.n)?;
    let s = Matrix::string(c.n, z, xm);
    let sd = s.adjoint();
    let dim = 1u64 << c.n;
    let mut total = Complex64::new(0.0, 0.0);
    for b in 0..dim {
        let sb = evolved_string(c, b, 0, false);
        total += sb.adjoint().mul(&sd).mul(&sb).mul(&s).trace();
    }
    Ok(total.re / (dim * dim) as f64)
}

fn check_trace(n: usize) -> Result<(), OtocError> {
    if n > MAX_TRACE_QUBITS {
        Err(OtocError::TooLargeForTrace { n, max: MAX_TRACE_QUBITS })
    } else {
        Ok(())
    }
}

/// `2⁻ⁿ Σ_x (−1)^{C_j(x,ℓ) ⊕ C_j(x⊕c_i,ℓ)}` where `C(·,ℓ)` is the first `ℓ`
/// layers of `circuit` (the inverse permutation in the cipher setting).
pub fn sac_otoc(
    circuit: &ClassicalCircuit,
    i: usize,
    j: usize,
    layers: Option<usize>,
    mode: Mode,
    samples: u64,
    seed: u64,
) -> Result<Estimate, OtocError> {
    let n = circuit.n;
    for index in [i, j] {
        if index >= n {
            return Err(OtocError::BitRange { index, n });
        }
    }
    let l = layers.unwrap_or(circuit.depth());
    if l > circuit.depth() {
        return Err(CircuitError::LayerOutOfRange { requested: l, depth: circuit.depth() }.into());
    }
    match mode {
        Mode::Exact => {
            if n > MAX_EXACT_LINES {
                return Err(OtocError::TooLargeForExact { n, max: MAX_EXACT_LINES });
            }
            let total = 1u64 << n;
            let parts = chunked_map(total as usize, |range| {
                let mut acc = 0i64;
                for x in range {
                    let x = x as u64;
                    let a = circuit.run_u64(x, l) >> j & 1;
                    let b = circuit.run_u64(x ^ 1 << i, l) >> j & 1;
                    acc += if a == b { 1 } else { -1 };
                }
                acc
            });
            let sum: i64 = parts.into_iter().sum();
            Ok(Estimate { estimate: sum as f64 / total as f64, stderr: 0.0, samples: total, seed })
        }
        Mode::Sampled => {
            if samples == 0 {
                return Err(OtocError::ZeroSamples);
            }
            let parts = chunked_map(samples as usize, |range| {
                let mut m = Moments::default();
                for k in range {
                    let mut rng = rng_for(seed, 0x5341_4300, k as u64);
                    let x = random_word(n, &mut rng);
                    let y = sac_sign(circuit, &x, i, j, l);
                    m.push(y);
                }
                m
            });
            Ok(parts.into_iter().fold(Moments::default(), Moments::merge).estimate(seed))
        }
    }
}

fn sac_sign(circuit: &ClassicalCircuit, x: &[u64], i: usize, j: usize, l: usize) -> f64 {
    if circuit.n <= 64 {
        let a = circuit.run_u64(x[0], l) >> j & 1;
        let b = circuit.run_u64(x[0] ^ 1 << i, l) >> j & 1;
        return if a == b { 1.0 } else { -1.0 };
    }
    let mut xa = x.to_vec();
    let mut xb = x.to_vec();
    flip_bit(&mut xb, i);
    for layer in 0..l {
        circuit.apply_layer(layer, &mut xa);
        circuit.apply_layer(layer, &mut xb);
    }
    if get_bit(&xa, j) == get_bit(&xb, j) {
        1.0
    } else {
        -1.0
    }
}

/// `(s, q)`: mean of the SAC variable and its second moment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentPair {
    pub s: f64,
    pub q: f64,
}

/// Recursion polynomials derived from the gate family itself.
pub fn family_polynomials(family: GateFamily) -> &'static RecursionPolynomials {
    static CACHE: OnceLock<BTreeMap<u8, RecursionPolynomials>> = OnceLock::new();
    let all = CACHE.get_or_init(|| {
        [GateFamily::Inflationary, GateFamily::Supernonlinear, GateFamily::Linear, GateFamily::Any, GateFamily::Identity]
            .into_iter()
            .map(|f| (f as u8, set_average_recursions(f.members()).expect("nonempty family")))
            .collect()
    });
    &all[&(family as u8)]
}

pub fn recursion_step(pair: MomentPair, family: GateFamily) -> MomentPair {
    let p = family_polynomials(family);
    MomentPair { s: p.eval_s(pair.s), q: p.eval_q(pair.s, pair.q) }
}

pub fn recursion_step_exact(s: Rational, q: Rational, family: GateFamily) -> (Rational, Rational) {
    let p = family_polynomials(family);
    (p.eval_s_exact(s), p.eval_q_exact(s, q))
}

/// Moments after each layer, `families[ℓ]` acting at layer `ℓ + 1`.
pub fn trajectory(start: MomentPair, families: &[GateFamily]) -> Vec<MomentPair> {
    let mut out = vec![start];
    for &f in families {
        out.push(recursion_step(*out.last().unwrap(), f));
    }
    out
}

/// Published polynomials: `(s coefficients by power, q coefficients by (s power, q power))`.
pub fn golden_polynomials(family: GateFamily) -> Option<([Rational; 4], BTreeMap<(u32, u32), Rational>)> {
    let r = |a: i64, b: i64| Rational::new(a, b);
    match family {
        GateFamily::Inflationary => Some(([r(0, 1), r(0, 1), r(2, 3), r(1, 3)], [((0, 2), r(2, 3)), ((0, 3), r(1, 3))].into_iter().collect())),
        GateFamily::Supernonlinear => Some((
            [r(0, 1), r(3, 7), r(3, 7), r(1, 7)],
            [
                ((2, 0), r(3, 28)),
                ((3, 0), r(3, 28)),
                ((0, 1), r(3, 28)),
                ((1, 1), r(6, 28)),
                ((2, 1), r(6, 28)),
                ((0, 2), r(3, 28)),
                ((1, 2), r(3, 28)),
                ((0, 3), r(1, 28)),
            ]
            .into_iter()
            .collect(),
        )),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientDiff {
    pub term: String,
    pub expected: String,
    pub derived: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyCheck {
    pub family: GateFamily,
    pub gates: usize,
    pub s_poly: Vec<String>,
    pub q_poly: BTreeMap<String, String>,
    pub mismatches: Vec<CoefficientDiff>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientReport {
    pub families: Vec<FamilyCheck>,
    pub ok: bool,
}

fn term_name(sp: u32, qp: u32) -> String {
    let f = |v: &str, p: u32| match p {
        0 => String::new(),
        1 => v.to_string(),
        _ => format!("{v}^{p}"),
    };
    let t = format!("{}{}", f("s", sp), f("q", qp));
    if t.is_empty() {
        "1".into()
    } else {
        t
    }
}

/// Compares the derived recursion polynomials with the published ones.
pub fn verify_coefficient_pipeline() -> CoefficientReport {
    let families: Vec<FamilyCheck> = [GateFamily::Inflationary, GateFamily::Supernonlinear]
        .into_iter()
        .map(|family| {
            let derived = family_polynomials(family);
            let (gs, gq) = golden_polynomials(family).expect("golden family");
            let mut mismatches = Vec::new();
            for p in 0..4u32 {
                let d = derived.s_coefficient(p);
                if d != gs[p as usize] {
                    mismatches.push(CoefficientDiff { term: format!("s' : {}", term_name(p, 0)), expected: gs[p as usize].to_string(), derived: d.to_string() });
                }
            }
            let mut keys: Vec<(u32, u32)> = gq.keys().copied().collect();
            keys.extend(derived.q_poly.keys().copied());
            keys.sort_unstable();
            keys.dedup();
            for (sp, qp) in keys {
                let e = gq.get(&(sp, qp)).copied().unwrap_or_default();
                let d = derived.q_coefficient(sp, qp);
                if d != e {
                    mismatches.push(CoefficientDiff { term: format!("q' : {}", term_name(sp, qp)), expected: e.to_string(), derived: d.to_string() });
                }
            }
            FamilyCheck {
                family,
                gates: family.members().len(),
                s_poly: (0..4).map(|p| derived.s_coefficient(p).to_string()).collect(),
                q_poly: derived.q_poly.iter().filter(|(_, v)| **v != Rational::default()).map(|(&(a, b), v)| (term_name(a, b), v.to_string())).collect(),
                mismatches,
            }
        })
        .collect();
    let ok = families.iter().all(|f| f.mismatches.is_empty());
    CoefficientReport { families, ok }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InflationaryRow {
    pub layer: usize,
    pub q_full: f64,
    /// `q' = (2/3)q²` only.
    pub q_leading: f64,
    /// `(3/2)[(2/3)q(0)]^{2^ℓ}`.
    pub closed_form: f64,
    /// `(3/2)A^{2^ℓ}` with the asymptotic amplitude `A` of the full recursion.
    pub closed_form_renormalized: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticsReport {
    pub q0: f64,
    pub lyapunov_window: (usize, usize),
    pub lyapunov_estimate: f64,
    pub lyapunov_expected: f64,
    pub lyapunov_relative_error: f64,
    pub amplitude: f64,
    pub inflationary: Vec<InflationaryRow>,
}

impl AsymptoticsReport {
    pub fn row(&self, layer: usize) -> Option<&InflationaryRow> {
        self.inflationary.iter().find(|r| r.layer == layer)
    }
}

/// Lyapunov exponent of the supernonlinear recursion from `(s, q) = (0, q0)`
/// (slope of `−ln q` over `window`), and the inflationary trajectory against
/// its double-exponential forms for `ℓ = 0..=inflationary_layers`.
pub fn asymptotics_report(q0: f64, window: (usize, usize), inflationary_layers: usize) -> Result<AsymptoticsReport, OtocError> {
    if !(q0 > 0.0 && q0 < 1.0) {
        return Err(OtocError::Invalid(format!("q0 = {q0} must lie in (0, 1)")));
    }
    if window.0 >= window.1 {
        return Err(OtocError::Invalid("empty fit window".into()));
    }
    let traj = trajectory(MomentPair { s: 0.0, q: q0 }, &vec![GateFamily::Supernonlinear; window.1]);
    let xs: Vec<f64> = (window.0..=window.1).map(|l| l as f64).collect();
    let ys: Vec<f64> = (window.0..=window.1).map(|l| -traj[l].q.ln()).collect();
    let (_, slope, _) = crate::dynamics::linear_fit(&xs, &ys);
    let expected = (28.0f64 / 3.0).ln();

    // log of a = (2/3) q under a' = a²(1 + 3a/4)
    let mut la = (2.0 / 3.0 * q0).ln();
    let mut logs = vec![la];
    for _ in 0..64 {
        la = 2.0 * la + (0.75 * la.exp()).ln_1p();
        logs.push(la);
    }
    let ln_amp = logs[64] / 2f64.powi(64);
    let mut q_full = q0;
    let mut q_lead = q0;
    let mut rows = Vec::new();
    for l in 0..=inflationary_layers {
        let e = 2f64.powi(l as i32);
        rows.push(InflationaryRow {
            layer: l,
            q_full,
            q_leading: q_lead,
            closed_form: 1.5 * (2.0 / 3.0 * q0).powf(e),
            closed_form_renormalized: 1.5 * (ln_amp * e).exp(),
        });
        q_full = recursion_step(MomentPair { s: 0.0, q: q_full }, GateFamily::Inflationary).q;
        q_lead = 2.0 / 3.0 * q_lead * q_lead;
    }
    Ok(AsymptoticsReport {
        q0,
        lyapunov_window: window,
        lyapunov_estimate: slope,
        lyapunov_expected: expected,
        lyapunov_relative_error: (slope - expected).abs() / expected,
        amplitude: ln_amp.exp(),
        inflationary: rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentRow {
    pub layer: usize,
    pub s: Estimate,
    pub q: Estimate,
    pub s_predicted: f64,
    pub q_predicted: f64,
}

impl MomentRow {
    pub fn max_z(&self) -> f64 {
        self.s.z_score(self.s_predicted).max(self.q.z_score(self.q_predicted))
    }
}

/// Monte Carlo `(s, q)` on ternary-tree circuits on `n` lines whose layer
/// `ℓ` draws gates from `families[ℓ − 1]`. Each sample draws a circuit, a flip
/// pattern `c` with i.i.d. bits of probability `flip`, and two inputs `x, x'`;
/// with `Y_x = (−1)^{C_0(x) ⊕ C_0(x⊕c)}`, `s` estimates `E[Y]` and `q`
/// estimates `E[Y_x Y_x']`. Only the backward cone of output line 0 is built.
pub fn tree_moments_mc(n: usize, families: &[GateFamily], flip: f64, samples: u64, seed: u64) -> Result<Vec<MomentRow>, OtocError> {
    if samples == 0 {
        return Err(OtocError::ZeroSamples);
    }
    if !(0.0..=1.0).contains(&flip) {
        return Err(OtocError::Invalid(format!("flip fraction {flip} outside [0, 1]")));
    }
    let q = exact_log(n, 3).ok_or(CircuitError::NotPowerOf { n, k: 3 })? as usize;
    if families.len() > q {
        return Err(OtocError::Invalid(format!("{} layers exceed the independent depth log3 n = {q}", families.len())));
    }
    let depth = families.len();
    let w = tree_wiring(n, 3, depth.max(1))?;
    // backward cone of line 0
    let mut needed = vec![false; n];
    needed[0] = true;
    let mut cone: Vec<Vec<[usize; 3]>> = vec![Vec::new(); depth];
    for l in (0..depth).rev() {
        let slots: Vec<[usize; 3]> = w.layers[l].iter().filter(|t| t.iter().any(|&i| needed[i])).map(|t| [t[0], t[1], t[2]]).collect();
        for s in &slots {
            for &i in s {
                needed[i] = true;
            }
        }
        cone[l] = slots;
    }
    let leaves: Vec<usize> = (0..n).filter(|&i| needed[i]).collect();
    let parts = chunked_map(samples as usize, |range| {
        let mut acc = vec![[Moments::default(); 2]; depth + 1];
        let mut lanes = vec![0u8; n];
        for k in range {
            let mut rng = rng_for(seed, 0x5452_4545, k as u64);
            for &i in &leaves {
                let x: u8 = rng.gen_range(0..2);
                let xp: u8 = rng.gen_range(0..2);
                let c = rng.gen_bool(flip) as u8;
                lanes[i] = x | (x ^ c) << 1 | xp << 2 | (xp ^ c) << 3;
            }
            for l in 0..=depth {
                if l > 0 {
                    let fam = families[l - 1];
                    for s in &cone[l - 1] {
                        let g = fam.sample(&mut rng);
                        let [a, b, c] = *s;
                        let (va, vb, vc) = (lanes[a], lanes[b], lanes[c]);
                        let (mut oa, mut ob, mut oc) = (0u8, 0u8, 0u8);
                        for lane in 0..4 {
                            let input = (va >> lane & 1) | (vb >> lane & 1) << 1 | (vc >> lane & 1) << 2;
                            let o = g.apply(input as u32) as u8;
                            oa |= (o & 1) << lane;
                            ob |= (o >> 1 & 1) << lane;
                            oc |= (o >> 2 & 1) << lane;
                        }
                        lanes[a] = oa;
                        lanes[b] = ob;
                        lanes[c] = oc;
                    }
                }
                let v = lanes[0];
                let y = if (v ^ v >> 1) & 1 == 0 { 1.0 } else { -1.0 };
                let yp = if (v >> 2 ^ v >> 3) & 1 == 0 { 1.0 } else { -1.0 };
                acc[l][0].push(0.5 * (y + yp));
                acc[l][1].push(y * yp);
            }
        }
        acc
    });
    let mut total = vec![[Moments::default(); 2]; depth + 1];
    for p in parts {
        for (t, a) in total.iter_mut().zip(p) {
            t[0] = t[0].merge(a[0]);
            t[1] = t[1].merge(a[1]);
        }
    }
    let pred = trajectory(MomentPair { s: 1.0 - 2.0 * flip, q: 1.0 }, families);
    Ok(total
        .into_iter()
        .zip(pred)
        .enumerate()
        .map(|(layer, (m, p))| MomentRow { layer, s: m[0].estimate(seed), q: m[1].estimate(seed), s_predicted: p.s, q_predicted: p.q })
        .collect())
}

pub fn rational_to_f64(r: Rational) -> f64 {
    to_f64(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuits::{random_circuit, tree_circuit};
    use crate::dense::{random_clifford_circuit, random_haar_circuit};
    use crate::sampling::Rng;
    use rand::SeedableRng;

    fn z_string(n: usize, i: usize) -> PauliString {
        PauliString::single_site(2, n, i, 1, 0).unwrap()
    }

    fn x_string(n: usize, i: usize) -> PauliString {
        PauliString::single_site(2, n, i, 0, 1).unwrap()
    }

    #[test]
    fn identity_circuit_expectations() {
        let c = QuantumCircuit::identity(3).unwrap();
        let alpha = PauliString::new(2, vec![1, 0, 1], vec![0, 0, 0]).unwrap();
        for x in 0..8u64 {
            let sign = if (x & 0b101).count_ones() % 2 == 1 { -1.0 } else { 1.0 };
            assert_eq!(string_expectation_exact(&c, x, &alpha).unwrap(), Complex64::new(sign, 0.0));
            assert_eq!(string_expectation_exact(&c, x, &x_string(3, 1)).unwrap(), Complex64::new(0.0, 0.0));
        }
        assert_eq!(q_alpha_average(&c, &z_string(3, 0)).unwrap(), 1.0);
        assert_eq!(q_alpha_average(&c, &x_string(3, 0)).unwrap(), 0.0);
    }

    #[test]
    fn trace_forms_agree() {
        let mut rng = Rng::seed_from_u64(4);
        for n in 2..=4 {
            for k in 0..3 {
                let c = if k == 0 { random_clifford_circuit(n, 12, &mut rng).unwrap() } else { random_haar_circuit(n, 2, &mut rng).unwrap() };
                let u: Vec<u32> = (0..n).map(|_| rng.gen_range(0..2)).collect();
                let v: Vec<u32> = (0..n).map(|_| rng.gen_range(0..2)).collect();
                let alpha = PauliString::new(2, u, v).unwrap();
                let x = rng.gen_range(0..1u64 << n);
                let lhs = string_expectation_exact(&c, x, &alpha).unwrap().norm_sqr();
                assert!((lhs - expectation_squared_projector_form(&c, x, &alpha).unwrap()).abs() < 1e-10);
                assert!((lhs - expectation_squared_trace_form(&c, x, &alpha).unwrap()).abs() < 1e-10);
                let avg = q_alpha_average(&c, &alpha).unwrap();
                assert!((avg - q_alpha_trace_form(&c, &alpha).unwrap()).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn sac_on_identity() {
        let c = ClassicalCircuit::identity(5);
        assert_eq!(sac_otoc(&c, 1, 2, None, Mode::Exact, 0, 0).unwrap().estimate, 1.0);
        assert_eq!(sac_otoc(&c, 2, 2, None, Mode::Exact, 0, 0).unwrap().estimate, -1.0);
        assert_eq!(sac_otoc(&c, 2, 2, None, Mode::Sampled, 100, 0).unwrap().estimate, -1.0);
        assert!(sac_otoc(&c, 5, 2, None, Mode::Exact, 0, 0).is_err());
        assert!(sac_otoc(&c, 1, 2, None, Mode::Sampled, 0, 0).is_err());
    }

    #[test]
    fn sac_exact_vs_sampled() {
        let c = random_circuit(12, 4, GateFamily::Any, 8).unwrap();
        let exact = sac_otoc(&c, 3, 7, None, Mode::Exact, 0, 1).unwrap();
        let sampled = sac_otoc(&c, 3, 7, None, Mode::Sampled, 20000, 1).unwrap();
        assert!(sampled.z_score(exact.estimate) < 5.0);
        // the wide-word path agrees with the u64 path
        let wide = tree_circuit(81, &[GateFamily::Any; 3], 2, true).unwrap();
        let mut rng = Rng::seed_from_u64(3);
        for _ in 0..20 {
            let x = random_word(81, &mut rng);
            let mut xa = x.clone();
            let mut xb = x.clone();
            flip_bit(&mut xb, 70);
            xa = wide.evaluate(&xa, None).unwrap();
            xb = wide.evaluate(&xb, None).unwrap();
            let expect = if get_bit(&xa, 65) == get_bit(&xb, 65) { 1.0 } else { -1.0 };
            assert_eq!(sac_sign(&wide, &x, 70, 65, 3), expect);
        }
    }

    #[test]
    fn recursion_examples() {
        let one = MomentPair { s: 1.0, q: 1.0 };
        for f in [GateFamily::Inflationary, GateFamily::Supernonlinear] {
            let p = recursion_step(one, f);
            assert!((p.s - 1.0).abs() < 1e-15 && (p.q - 1.0).abs() < 1e-15);
            assert_eq!(recursion_step(MomentPair { s: 0.0, q: 0.0 }, f), MomentPair { s: 0.0, q: 0.0 });
        }
        let p = recursion_step(MomentPair { s: 0.0, q: 0.5 }, GateFamily::Inflationary);
        assert!((p.q - 0.208_333_333_333_333_3).abs() < 1e-15);
        let p = recursion_step(MomentPair { s: 0.0, q: 1e-6 }, GateFamily::Supernonlinear);
        assert!((p.q / 1e-6 - 3.0 / 28.0).abs() < 1e-6);
        let (s, q) = recursion_step_exact(Rational::new(1, 2), Rational::new(1, 2), GateFamily::Inflationary);
        assert_eq!((s, q), (Rational::new(5, 24), Rational::new(5, 24)));
    }

    #[test]
    fn recursions_map_unit_square_into_itself() {
        let mut rng = Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let p = MomentPair { s: rng.gen(), q: rng.gen() };
            for f in [GateFamily::Inflationary, GateFamily::Supernonlinear] {
                let r = recursion_step(p, f);
                assert!((0.0..=1.0).contains(&r.s) && (0.0..=1.0).contains(&r.q));
            }
            let r = recursion_step(p, GateFamily::Inflationary);
            assert!(r.q <= p.q);
        }
    }

    #[test]
    fn coefficient_pipeline_matches() {
        let report = verify_coefficient_pipeline();
        assert!(report.ok, "{report:?}");
        assert_eq!(report.families[1].s_poly[1], "3/7");
    }

    #[test]
    fn asymptotics() {
        let r = asymptotics_report(0.1, (10, 20), 6).unwrap();
        assert!(r.lyapunov_relative_error < 0.01, "{r:?}");
        let row = r.row(5).unwrap();
        assert!((row.q_leading / row.closed_form - 1.0).abs() < 1e-12);
        assert!((row.q_full / row.closed_form_renormalized - 1.0).abs() < 1e-6);
        assert!(asymptotics_report(1.0, (10, 20), 6).is_err());
    }

    #[test]
    fn tree_moments_follow_recursion() {
        let rows = tree_moments_mc(27, &[GateFamily::Supernonlinear; 3], 0.1, 20000, 3).unwrap();
        assert_eq!(rows[0].q.estimate, 1.0);
        for r in &rows {
            assert!(r.max_z() < 4.0, "{r:?}");
        }
        let rows = tree_moments_mc(27, &[GateFamily::Identity; 2], 0.5, 1000, 3).unwrap();
        assert_eq!(rows[2].q.estimate, 1.0);
        assert!(tree_moments_mc(27, &[GateFamily::Any; 4], 0.5, 10, 3).is_err());
    }
}
