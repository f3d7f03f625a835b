//! Browser bindings for three interactive views: moment recursions, weight-1
//! stay probabilities and operator fronts. Each call returns a JSON string.

use scramble_core::circuits::GateFamily;
use scramble_core::dynamics::{exact_weight_chain, front_profile, stay_probability_scan, FrontKind, Placement};
use scramble_core::otoc::{trajectory, MomentPair};
use serde_json::json;
use wasm_bindgen::prelude::*;

pub const MAX_LINES: usize = 4096;
pub const MAX_SAMPLES: u32 = 20_000;

fn family(name: &str) -> Result<GateFamily, String> {
    match name {
        "inflationary" => Ok(GateFamily::Inflationary),
        "supernonlinear" => Ok(GateFamily::Supernonlinear),
        "linear" => Ok(GateFamily::Linear),
        "any" => Ok(GateFamily::Any),
        other => Err(format!("unknown gate family {other:?}")),
    }
}

fn bounded(n: usize, samples: u32) -> Result<(), String> {
    if n > MAX_LINES {
        return Err(format!("n = {n} exceeds {MAX_LINES}"));
    }
    if samples == 0 || samples > MAX_SAMPLES {
        return Err(format!("samples must lie in 1..={MAX_SAMPLES}"));
    }
    Ok(())
}

/// `(s, q)` after `first` layers of `family_a` followed by `second` layers of
/// `family_b`.
pub fn recursion_json(family_a: &str, first: usize, family_b: &str, second: usize, s0: f64, q0: f64) -> Result<String, String> {
    if !(0.0..=1.0).contains(&s0) || !(0.0..=1.0).contains(&q0) {
        return Err("initial moments must lie in [0, 1]".into());
    }
    if first + second > 64 {
        return Err("at most 64 layers".into());
    }
    let mut families = vec![family(family_a)?; first];
    families.extend(vec![family(family_b)?; second]);
    let t = trajectory(MomentPair { s: s0, q: q0 }, &families);
    Ok(json!({ "s": t.iter().map(|p| p.s).collect::<Vec<_>>(), "q": t.iter().map(|p| p.q).collect::<Vec<_>>() }).to_string())
}

/// Monte Carlo and exact weight-1 stay probabilities for random pairings of
/// `n` sites.
pub fn stay_json(n: usize, depth: usize, samples: u32, seed: u32) -> Result<String, String> {
    bounded(n, samples)?;
    if depth > 16 {
        return Err("depth at most 16".into());
    }
    let rows = stay_probability_scan(n, depth, Placement::CompleteGraph, samples as u64, seed as u64).map_err(|e| e.to_string())?;
    let exact = exact_weight_chain(n, depth, 200).map_err(|e| e.to_string())?;
    Ok(json!({
        "layer": rows.iter().map(|r| r.layer).collect::<Vec<_>>(),
        "weight_one": rows.iter().map(|r| r.weight_one.estimate).collect::<Vec<_>>(),
        "weight_one_stderr": rows.iter().map(|r| r.weight_one.stderr).collect::<Vec<_>>(),
        "z_average": rows.iter().map(|r| r.z_average.estimate).collect::<Vec<_>>(),
        "exact_weight_one": exact.iter().map(|(p, _)| p[1]).collect::<Vec<_>>(),
    })
    .to_string())
}

/// Mean right endpoint and width of a string started on site 0.
pub fn front_json(kind: &str, n: usize, t_max: usize, samples: u32, seed: u32) -> Result<String, String> {
    bounded(n, samples)?;
    let kind: FrontKind = kind.parse()?;
    let p = front_profile(kind, n, t_max, samples as u64, seed as u64).map_err(|e| e.to_string())?;
    let fit = p.fit(t_max / 5, t_max);
    Ok(json!({
        "t": p.rows.iter().map(|r| r.t).collect::<Vec<_>>(),
        "mean": p.rows.iter().map(|r| r.mean_endpoint).collect::<Vec<_>>(),
        "width": p.rows.iter().map(|r| r.width).collect::<Vec<_>>(),
        "velocity": fit.velocity,
        "width_exponent": fit.width_exponent,
    })
    .to_string())
}

#[wasm_bindgen]
pub fn recursion(family_a: &str, first: usize, family_b: &str, second: usize, s0: f64, q0: f64) -> Result<String, JsError> {
    recursion_json(family_a, first, family_b, second, s0, q0).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn stay(n: usize, depth: usize, samples: u32, seed: u32) -> Result<String, JsError> {
    stay_json(n, depth, samples, seed).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn front(kind: &str, n: usize, t_max: usize, samples: u32, seed: u32) -> Result<String, JsError> {
    front_json(kind, n, t_max, samples, seed).map_err(|e| JsError::new(&e))
}
