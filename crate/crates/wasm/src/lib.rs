//! Browser bindings: ladder bands, a short emulated run and the Fock label lookup.
//!
//! Each export has a plain Rust twin returning `Result<_, String>` so the logic
//! can be tested off the browser.

use std::sync::Arc;

use serde_json::json;
use wasm_bindgen::prelude::*;

use timebin::device::{run_emulation, EmulationConfig, EmulationMode, StateVector};
use timebin::fock::{FockBasis, FockOccupancy};
use timebin::lattice::{build_lattice, LatticeGraph, LatticeSpec};
use timebin::scenario::scenario_bands;
use timebin::schedule::compile_schedule;

/// Largest lattice the page will emulate; keeps the tab responsive.
pub const MAX_SITES: usize = 200;
pub const MAX_ITERATIONS: u32 = 5000;

fn msg(e: timebin::Error) -> String {
    e.to_string()
}

/// Bands of a periodic ladder as JSON `[{band, k, energy, weight}, ...]`.
pub fn ladder_bands_json(rungs: usize, kappa: f64, alpha: f64) -> Result<String, String> {
    if !(2..=MAX_SITES / 2).contains(&rungs) {
        return Err(format!("rungs must be between 2 and {}", MAX_SITES / 2));
    }
    let graph = build_lattice(LatticeSpec::HallLadder { rungs }, kappa, alpha, true).map_err(msg)?;
    let (bands, _) = scenario_bands(&graph, 0.0, 0.0, None).map_err(msg)?;
    let points: Vec<_> = bands
        .points
        .iter()
        .map(|p| json!({"band": p.band_index, "k": p.k, "energy": p.energy, "weight": p.leg_weight}))
        .collect();
    Ok(serde_json::Value::Array(points).to_string())
}

/// Occupations after each iteration, flattened row-major as `(iterations + 1) x sites`.
///
/// `lattice` is a lattice document; `initial` lists `bin:count` pairs.
pub fn evolve_occupations(lattice: &str, initial: &str, iterations: u32, u: f64) -> Result<Vec<f64>, String> {
    let graph = LatticeGraph::from_document(lattice).map_err(msg)?;
    if graph.num_sites() > MAX_SITES {
        return Err(format!("at most {MAX_SITES} sites"));
    }
    if iterations > MAX_ITERATIONS {
        return Err(format!("at most {MAX_ITERATIONS} iterations"));
    }
    let pairs = parse_pairs(initial)?;
    let bosons: u32 = pairs.iter().map(|&(_, c)| c).sum();
    if bosons == 0 || bosons > 2 {
        return Err("place one or two photons".into());
    }
    let basis = Arc::new(FockBasis::new(graph.num_sites(), bosons as usize).map_err(msg)?);
    let psi = StateVector::from_pairs(basis, &pairs).map_err(msg)?;
    let schedule = compile_schedule(&graph, None).map_err(msg)?;
    let config = EmulationConfig {
        iterations: iterations as u64,
        mode: EmulationMode::Fast,
        u,
        ..Default::default()
    };
    let traj = run_emulation(&psi, &schedule, &config).map_err(msg)?;
    Ok(traj.snapshots.into_iter().flat_map(|s| s.occupations).collect())
}

fn parse_pairs(text: &str) -> Result<Vec<(usize, u32)>, String> {
    text.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|item| {
            let (b, c) = item.split_once(':').unwrap_or((item, "1"));
            match (b.trim().parse(), c.trim().parse()) {
                (Ok(b), Ok(c)) => Ok((b, c)),
                _ => Err(format!("expected bin:count, got '{item}'")),
            }
        })
        .collect()
}

/// Label of an occupation pattern within its boson-number sector (1-based).
pub fn label_of(counts: &[u32]) -> Result<u64, String> {
    let n: u32 = counts.iter().sum();
    let basis = FockBasis::new(counts.len(), n as usize).map_err(msg)?;
    let idx = basis.index_of(&FockOccupancy::new(counts.to_vec())).map_err(msg)?;
    Ok(idx.label)
}

/// Inverse of [`label_of`].
pub fn occupation_of(sites: usize, bosons: usize, label: u64) -> Result<Vec<u32>, String> {
    let basis = FockBasis::new(sites, bosons).map_err(msg)?;
    Ok(basis.occupancy_of(bosons, label).map_err(msg)?.counts().to_vec())
}

#[wasm_bindgen(js_name = ladderBands)]
pub fn ladder_bands(rungs: usize, kappa: f64, alpha: f64) -> Result<String, JsError> {
    ladder_bands_json(rungs, kappa, alpha).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = evolve)]
pub fn evolve(lattice: &str, initial: &str, iterations: u32, u: f64) -> Result<Vec<f64>, JsError> {
    evolve_occupations(lattice, initial, iterations, u).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = fockLabel)]
pub fn fock_label(counts: Vec<u32>) -> Result<u64, JsError> {
    label_of(&counts).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = fockState)]
pub fn fock_state(sites: usize, bosons: usize, label: u64) -> Result<Vec<u32>, JsError> {
    occupation_of(sites, bosons, label).map_err(|e| JsError::new(&e))
}
