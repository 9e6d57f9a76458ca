use crate::circuit::{
    build_deinterleaver, build_shaper, BlockParams, CircuitGraph, DeinterleaverSpec, ShaperConfig,
};
use crate::error::{Error, Result};
use crate::experiments::{ring_round_trip, tuned_deinterleaver, RING_FINESSE};
use crate::transfer::PhaseShifterState;

use super::NetlistDocument;

/// Names accepted after `preset:`.
pub const PRESET_NETLISTS: [&str; 5] = [
    "deinterleaver",
    "deinterleaver_tuned",
    "shaper",
    "shaper_tuned",
    "identity",
];

/// Built-in netlist text; the `_tuned` variants carry optimized de-interleaver heaters.
pub fn preset_netlist(name: &str) -> Result<String> {
    let graph = match name {
        "deinterleaver" => build_deinterleaver(&DeinterleaverSpec::default())?,
        "deinterleaver_tuned" => build_deinterleaver(&tuned_deinterleaver(0)?)?,
        "shaper" | "shaper_tuned" => {
            let mut config = ShaperConfig::with_ring_amplitude(ring_round_trip(RING_FINESSE)?)?;
            if name == "shaper_tuned" {
                config.deinterleaver = tuned_deinterleaver(0)?;
            }
            build_shaper(&config)?
        }
        "identity" => CircuitGraph::builder()
            .block("id", BlockParams::PhaseShifter(PhaseShifterState::from_phase(0.0)))
            .input("in", "id.in")
            .output("out", "id.out")
            .build()?,
        _ => {
            return Err(Error::config(format!(
                "unknown preset netlist '{name}' (known: {})",
                PRESET_NETLISTS.join(", ")
            )))
        }
    };
    let mut doc = NetlistDocument::from_graph(&graph);
    doc.params.push(("p_pi_mw".into(), crate::transfer::DEFAULT_P_PI_MW));
    Ok(doc.to_string())
}
