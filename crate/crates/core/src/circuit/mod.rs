//! Port-connected feed-forward circuits of building blocks.
//!
//! Blocks are wired output-port to input-port. Unconnected input ports are
//! dark (zero field) and unconnected output ports are discarded, so a
//! tunable coupler used as a 1x1 attenuator needs no dummy terminations.
//! Resonant feedback only exists inside ring blocks; inter-block loops are
//! rejected.

mod builders;

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use num_complex::Complex;

pub use builders::*;

use crate::error::{Error, Result};
use crate::scalar::{wrap_phase, Scalar};
use crate::transfer::{
    h_phase_shifter, h_ring_allpass, h_tunable_coupler, h_waveguide, ring_adddrop_terms,
    h_coupler_3db, PhaseShifterState, RingParams, TransferMatrix2x2, WaveguideParams,
};

/// Default optical carrier, THz (about 1550 nm).
pub const DEFAULT_CARRIER_THZ: f64 = 193.4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BlockKind {
    Waveguide,
    PhaseShifter,
    Coupler3db,
    TunableCoupler,
    RingAllPass,
    RingAddDrop,
}

impl BlockKind {
    pub const ALL: [BlockKind; 6] = [
        BlockKind::Waveguide,
        BlockKind::PhaseShifter,
        BlockKind::Coupler3db,
        BlockKind::TunableCoupler,
        BlockKind::RingAllPass,
        BlockKind::RingAddDrop,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BlockKind::Waveguide => "waveguide",
            BlockKind::PhaseShifter => "phase_shifter",
            BlockKind::Coupler3db => "coupler_3db",
            BlockKind::TunableCoupler => "tunable_coupler",
            BlockKind::RingAllPass => "ring_allpass",
            BlockKind::RingAddDrop => "ring_adddrop",
        }
    }

    pub fn inputs(self) -> &'static [&'static str] {
        match self {
            BlockKind::Waveguide | BlockKind::PhaseShifter | BlockKind::RingAllPass => &["in"],
            BlockKind::Coupler3db | BlockKind::TunableCoupler => &["in1", "in2"],
            BlockKind::RingAddDrop => &["in", "add"],
        }
    }

    pub fn outputs(self) -> &'static [&'static str] {
        match self {
            BlockKind::Waveguide | BlockKind::PhaseShifter | BlockKind::RingAllPass => &["out"],
            BlockKind::Coupler3db | BlockKind::TunableCoupler => &["out1", "out2"],
            BlockKind::RingAddDrop => &["through", "drop"],
        }
    }
}

impl fmt::Display for BlockKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BlockKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BlockKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown block kind '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BlockParams<T> {
    Waveguide(WaveguideParams<T>),
    PhaseShifter(PhaseShifterState<T>),
    Coupler3db,
    TunableCoupler(PhaseShifterState<T>),
    RingAllPass(RingParams<T>),
    RingAddDrop(RingParams<T>),
}

/// Response of one block at one frequency.
#[derive(Debug, Clone, Copy)]
pub enum BlockTransfer<T> {
    Scalar(Complex<T>),
    Matrix(TransferMatrix2x2<T>),
}

/// Which physical quantity a heater phase drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum HeaterParam {
    /// Phase of a phase shifter or tunable coupler arm.
    Phase,
    /// Ring resonance position: `detune = phase * fsr / 2pi`.
    Detune,
    /// Bus coupler of a ring (itself a balanced MZI): `kappa = sin^2(phase/2)`.
    Kappa,
    /// Drop coupler of an add-drop ring.
    KappaDrop,
}

impl HeaterParam {
    fn suffix(self) -> Option<&'static str> {
        match self {
            HeaterParam::Phase => None,
            HeaterParam::Detune => Some("detune"),
            HeaterParam::Kappa => Some("kappa"),
            HeaterParam::KappaDrop => Some("kappa_drop"),
        }
    }
}

/// A named tunable parameter of a block, expressed as a heater phase.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct HeaterRef {
    pub name: String,
    pub block: String,
    pub param: HeaterParam,
}

fn kappa_to_phase<T: Scalar>(kappa: T) -> T {
    T::lit(2.0) * kappa.sqrt().asin()
}

fn phase_to_kappa<T: Scalar>(phase: T) -> T {
    let s = (phase / T::lit(2.0)).sin();
    (s * s).min(T::one())
}

impl<T: Scalar> BlockParams<T> {
    pub fn kind(&self) -> BlockKind {
        match self {
            BlockParams::Waveguide(_) => BlockKind::Waveguide,
            BlockParams::PhaseShifter(_) => BlockKind::PhaseShifter,
            BlockParams::Coupler3db => BlockKind::Coupler3db,
            BlockParams::TunableCoupler(_) => BlockKind::TunableCoupler,
            BlockParams::RingAllPass(_) => BlockKind::RingAllPass,
            BlockParams::RingAddDrop(_) => BlockKind::RingAddDrop,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            BlockParams::Waveguide(w) => w.validate(),
            BlockParams::PhaseShifter(s) | BlockParams::TunableCoupler(s) => {
                if s.phase_rad.is_finite() {
                    Ok(())
                } else {
                    Err(Error::domain("phase_rad must be finite"))
                }
            }
            BlockParams::Coupler3db => Ok(()),
            BlockParams::RingAllPass(r) => r.validate(),
            BlockParams::RingAddDrop(r) => {
                r.validate()?;
                if r.kappa_drop.is_none() {
                    return Err(Error::config("ring_adddrop requires kappa_drop"));
                }
                Ok(())
            }
        }
    }

    pub fn transfer(&self, offset_ghz: T) -> Result<BlockTransfer<T>> {
        Ok(match self {
            BlockParams::Waveguide(w) => BlockTransfer::Scalar(h_waveguide(offset_ghz, w)?),
            BlockParams::PhaseShifter(s) => BlockTransfer::Scalar(h_phase_shifter(s.phase_rad)?),
            BlockParams::Coupler3db => BlockTransfer::Matrix(h_coupler_3db()),
            BlockParams::TunableCoupler(s) => {
                BlockTransfer::Matrix(h_tunable_coupler(s.phase_rad)?)
            }
            BlockParams::RingAllPass(r) => BlockTransfer::Scalar(h_ring_allpass(offset_ghz, r)?),
            BlockParams::RingAddDrop(r) => {
                let (t, d, t_add) = ring_adddrop_terms(offset_ghz, r)?;
                BlockTransfer::Matrix(TransferMatrix2x2::new([[t, d], [d, t_add]]))
            }
        })
    }

    /// Tunable parameters this block exposes.
    pub fn heater_params(&self) -> &'static [HeaterParam] {
        match self {
            BlockParams::PhaseShifter(_) | BlockParams::TunableCoupler(_) => &[HeaterParam::Phase],
            BlockParams::RingAllPass(_) => &[HeaterParam::Detune, HeaterParam::Kappa],
            BlockParams::RingAddDrop(_) => {
                &[HeaterParam::Detune, HeaterParam::Kappa, HeaterParam::KappaDrop]
            }
            BlockParams::Waveguide(_) | BlockParams::Coupler3db => &[],
        }
    }

    /// Current heater phase of `param`.
    pub fn heater_phase(&self, param: HeaterParam) -> Option<T> {
        match (self, param) {
            (BlockParams::PhaseShifter(s) | BlockParams::TunableCoupler(s), HeaterParam::Phase) => {
                Some(s.phase_rad)
            }
            (BlockParams::RingAllPass(r) | BlockParams::RingAddDrop(r), HeaterParam::Detune) => {
                Some(wrap_phase(T::two_pi() * r.detune_ghz / r.fsr_ghz))
            }
            (BlockParams::RingAllPass(r) | BlockParams::RingAddDrop(r), HeaterParam::Kappa) => {
                Some(kappa_to_phase(r.kappa))
            }
            (BlockParams::RingAddDrop(r), HeaterParam::KappaDrop) => {
                r.kappa_drop.map(kappa_to_phase)
            }
            _ => None,
        }
    }

    pub fn set_heater_phase(&mut self, param: HeaterParam, phase: T) -> Result<()> {
        if !phase.is_finite() {
            return Err(Error::domain("heater phase must be finite"));
        }
        match (self, param) {
            (BlockParams::PhaseShifter(s) | BlockParams::TunableCoupler(s), HeaterParam::Phase) => {
                *s = PhaseShifterState::from_phase(phase);
            }
            (BlockParams::RingAllPass(r) | BlockParams::RingAddDrop(r), HeaterParam::Detune) => {
                r.detune_ghz = phase * r.fsr_ghz / T::two_pi();
            }
            (BlockParams::RingAllPass(r) | BlockParams::RingAddDrop(r), HeaterParam::Kappa) => {
                r.kappa = phase_to_kappa(phase);
            }
            (BlockParams::RingAddDrop(r), HeaterParam::KappaDrop) => {
                r.kappa_drop = Some(phase_to_kappa(phase));
            }
            (p, param) => {
                return Err(Error::config(format!(
                    "{} block has no {param:?} heater",
                    p.kind()
                )))
            }
        }
        Ok(())
    }
}

/// One named block of a circuit.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockInstance<T> {
    pub id: String,
    pub params: BlockParams<T>,
    pub heater_refs: Vec<HeaterRef>,
}

impl<T: Scalar> BlockInstance<T> {
    /// Creates a block exposing all of its heaters under the default names
    /// (`<id>` for phase heaters, `<id>.<param>` for ring heaters).
    pub fn new(id: impl Into<String>, params: BlockParams<T>) -> Self {
        let id = id.into();
        let heater_refs = params
            .heater_params()
            .iter()
            .map(|&param| HeaterRef {
                name: match param.suffix() {
                    None => id.clone(),
                    Some(s) => format!("{id}.{s}"),
                },
                block: id.clone(),
                param,
            })
            .collect();
        Self {
            id,
            params,
            heater_refs,
        }
    }

    pub fn kind(&self) -> BlockKind {
        self.params.kind()
    }
}

/// `<block>.<port>`
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PortRef {
    pub block: String,
    pub port: String,
}

impl PortRef {
    pub fn new(block: impl Into<String>, port: impl Into<String>) -> Self {
        Self {
            block: block.into(),
            port: port.into(),
        }
    }
}

impl fmt::Display for PortRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.block, self.port)
    }
}

impl FromStr for PortRef {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.rsplit_once('.') {
            Some((b, p)) if !b.is_empty() && !p.is_empty() => Ok(PortRef::new(b, p)),
            _ => Err(Error::config(format!("expected <block>.<port>, got '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Connection {
    pub from: PortRef,
    pub to: PortRef,
}

/// Heater phases keyed by heater name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TuningVector<T>(pub BTreeMap<String, T>);

impl<T: Scalar> TuningVector<T> {
    pub fn new() -> Self {
        Self(BTreeMap::new())
    }

    pub fn set(&mut self, name: impl Into<String>, phase: T) -> &mut Self {
        self.0.insert(name.into(), phase);
        self
    }

    pub fn with(mut self, name: impl Into<String>, phase: T) -> Self {
        self.set(name, phase);
        self
    }

    pub fn get(&self, name: &str) -> Option<T> {
        self.0.get(name).copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, T)> {
        self.0.iter().map(|(k, v)| (k.as_str(), *v))
    }

    /// Same names, every phase wrapped into `[0, 2pi)`.
    pub fn wrapped(&self) -> Self {
        Self(self.0.iter().map(|(k, v)| (k.clone(), wrap_phase(*v))).collect())
    }
}

#[derive(Debug, Clone, Copy)]
enum Sink {
    Block(usize, usize),
    External(usize),
    Dropped,
}

/// Immutable, validated feed-forward circuit.
#[derive(Debug, Clone)]
pub struct CircuitGraph<T> {
    blocks: Vec<BlockInstance<T>>,
    connections: Vec<Connection>,
    inputs: Vec<(String, PortRef)>,
    outputs: Vec<(String, PortRef)>,
    order: Vec<usize>,
    sinks: Vec<Vec<Sink>>,
    drives: Vec<(usize, usize)>,
}

/// Incremental construction of a [`CircuitGraph`].
#[derive(Debug, Clone, Default)]
pub struct GraphBuilder<T> {
    blocks: Vec<BlockInstance<T>>,
    connections: Vec<Connection>,
    inputs: Vec<(String, PortRef)>,
    outputs: Vec<(String, PortRef)>,
    errors: Vec<String>,
}

impl<T: Scalar> GraphBuilder<T> {
    pub fn new() -> Self {
        Self {
            blocks: Vec::new(),
            connections: Vec::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            errors: Vec::new(),
        }
    }

    pub fn block(mut self, id: &str, params: BlockParams<T>) -> Self {
        self.blocks.push(BlockInstance::new(id, params));
        self
    }

    pub fn instance(mut self, block: BlockInstance<T>) -> Self {
        self.blocks.push(block);
        self
    }

    fn port(&mut self, s: &str) -> PortRef {
        s.parse().unwrap_or_else(|e: Error| {
            self.errors.push(e.to_string());
            PortRef::new("?", "?")
        })
    }

    pub fn connect(mut self, from: &str, to: &str) -> Self {
        let from = self.port(from);
        let to = self.port(to);
        self.connections.push(Connection { from, to });
        self
    }

    pub fn input(mut self, name: &str, port: &str) -> Self {
        let p = self.port(port);
        self.inputs.push((name.to_string(), p));
        self
    }

    pub fn output(mut self, name: &str, port: &str) -> Self {
        let p = self.port(port);
        self.outputs.push((name.to_string(), p));
        self
    }

    pub fn build(self) -> Result<CircuitGraph<T>> {
        if let Some(e) = self.errors.into_iter().next() {
            return Err(Error::config(e));
        }
        CircuitGraph::new(self.blocks, self.connections, self.inputs, self.outputs)
    }
}

impl<T: Scalar> CircuitGraph<T> {
    pub fn builder() -> GraphBuilder<T> {
        GraphBuilder::new()
    }

    pub fn new(
        blocks: Vec<BlockInstance<T>>,
        connections: Vec<Connection>,
        inputs: Vec<(String, PortRef)>,
        outputs: Vec<(String, PortRef)>,
    ) -> Result<Self> {
        let mut index = HashMap::new();
        for (i, b) in blocks.iter().enumerate() {
            if index.insert(b.id.clone(), i).is_some() {
                return Err(Error::config(format!("duplicate block id '{}'", b.id)));
            }
            b.params
                .validate()
                .map_err(|e| Error::config(format!("block '{}': {e}", b.id)))?;
        }
        let mut heater_names = HashMap::new();
        for b in &blocks {
            for h in &b.heater_refs {
                if h.block != b.id || !b.params.heater_params().contains(&h.param) {
                    return Err(Error::config(format!(
                        "heater '{}' does not resolve on block '{}'",
                        h.name, b.id
                    )));
                }
                if heater_names.insert(h.name.clone(), ()).is_some() {
                    return Err(Error::config(format!("duplicate heater name '{}'", h.name)));
                }
            }
        }

        let resolve = |p: &PortRef, want_output: bool| -> Result<(usize, usize)> {
            let &bi = index
                .get(&p.block)
                .ok_or_else(|| Error::topology(format!("unknown block in port '{p}'")))?;
            let kind = blocks[bi].kind();
            let (list, other) = if want_output {
                (kind.outputs(), kind.inputs())
            } else {
                (kind.inputs(), kind.outputs())
            };
            match list.iter().position(|&n| n == p.port) {
                Some(pi) => Ok((bi, pi)),
                None if other.contains(&p.port.as_str()) => Err(Error::topology(format!(
                    "port '{p}' is an {} port; expected an {} port",
                    if want_output { "input" } else { "output" },
                    if want_output { "output" } else { "input" },
                ))),
                None => Err(Error::topology(format!(
                    "{kind} block '{}' has no port '{}' (ports: {})",
                    p.block,
                    p.port,
                    kind.inputs()
                        .iter()
                        .chain(kind.outputs())
                        .copied()
                        .collect::<Vec<_>>()
                        .join(", ")
                ))),
            }
        };

        let mut sinks: Vec<Vec<Sink>> = blocks
            .iter()
            .map(|b| vec![Sink::Dropped; b.kind().outputs().len()])
            .collect();
        let mut used_out = HashMap::new();
        let mut used_in = HashMap::new();
        let mut claim_in = |key: (usize, usize), what: &PortRef| -> Result<()> {
            if used_in.insert(key, ()).is_some() {
                return Err(Error::topology(format!("port '{what}' is driven more than once")));
            }
            Ok(())
        };
        let mut succ: Vec<Vec<usize>> = vec![Vec::new(); blocks.len()];
        for c in &connections {
            let src = resolve(&c.from, true)?;
            let dst = resolve(&c.to, false)?;
            if used_out.insert(src, ()).is_some() {
                return Err(Error::topology(format!("port '{}' is used more than once", c.from)));
            }
            claim_in(dst, &c.to)?;
            sinks[src.0][src.1] = Sink::Block(dst.0, dst.1);
            succ[src.0].push(dst.0);
        }
        let mut drives = Vec::new();
        let mut seen = HashMap::new();
        for (name, p) in &inputs {
            if seen.insert(format!("in:{name}"), ()).is_some() {
                return Err(Error::config(format!("duplicate input name '{name}'")));
            }
            let dst = resolve(p, false)?;
            claim_in(dst, p)?;
            drives.push(dst);
        }
        for (k, (name, p)) in outputs.iter().enumerate() {
            if seen.insert(format!("out:{name}"), ()).is_some() {
                return Err(Error::config(format!("duplicate output name '{name}'")));
            }
            let src = resolve(p, true)?;
            if used_out.insert(src, ()).is_some() {
                return Err(Error::topology(format!("port '{p}' is used more than once")));
            }
            sinks[src.0][src.1] = Sink::External(k);
        }

        // Kahn topological sort; leftovers sit on a cycle.
        let mut indeg = vec![0usize; blocks.len()];
        for s in &succ {
            for &d in s {
                indeg[d] += 1;
            }
        }
        let mut queue: VecDeque<usize> = (0..blocks.len()).filter(|&i| indeg[i] == 0).collect();
        let mut order = Vec::with_capacity(blocks.len());
        while let Some(i) = queue.pop_front() {
            order.push(i);
            for &d in &succ[i] {
                indeg[d] -= 1;
                if indeg[d] == 0 {
                    queue.push_back(d);
                }
            }
        }
        if order.len() != blocks.len() {
            let cyc: Vec<_> = (0..blocks.len())
                .filter(|&i| indeg[i] > 0)
                .map(|i| blocks[i].id.as_str())
                .collect();
            return Err(Error::topology(format!(
                "feedback loop between blocks: {}",
                cyc.join(", ")
            )));
        }

        // Every external output must be fed, directly or not, by an external input.
        let mut lit = vec![false; blocks.len()];
        for &(b, _) in &drives {
            lit[b] = true;
        }
        for &i in &order {
            if lit[i] {
                for &d in &succ[i] {
                    lit[d] = true;
                }
            }
        }
        for (name, p) in &outputs {
            let b = index[&p.block];
            if !lit[b] {
                return Err(Error::topology(format!(
                    "dangling output '{name}' ({p}) is not reachable from any input"
                )));
            }
        }

        Ok(Self {
            blocks,
            connections,
            inputs,
            outputs,
            order,
            sinks,
            drives,
        })
    }

    pub fn blocks(&self) -> &[BlockInstance<T>] {
        &self.blocks
    }

    pub fn block(&self, id: &str) -> Option<&BlockInstance<T>> {
        self.blocks.iter().find(|b| b.id == id)
    }

    pub fn connections(&self) -> &[Connection] {
        &self.connections
    }

    pub fn inputs(&self) -> &[(String, PortRef)] {
        &self.inputs
    }

    pub fn outputs(&self) -> &[(String, PortRef)] {
        &self.outputs
    }

    pub fn output_names(&self) -> Vec<&str> {
        self.outputs.iter().map(|(n, _)| n.as_str()).collect()
    }

    pub fn heaters(&self) -> Vec<&HeaterRef> {
        self.blocks.iter().flat_map(|b| b.heater_refs.iter()).collect()
    }

    pub fn heater(&self, name: &str) -> Option<&HeaterRef> {
        self.blocks
            .iter()
            .flat_map(|b| b.heater_refs.iter())
            .find(|h| h.name == name)
    }

    pub fn heater_value(&self, name: &str) -> Result<T> {
        let h = self
            .heater(name)
            .ok_or_else(|| Error::config(format!("unknown heater '{name}'")))?;
        let b = self.block(&h.block).expect("validated heater block");
        b.params
            .heater_phase(h.param)
            .ok_or_else(|| Error::config(format!("heater '{name}' has no value")))
    }

    /// Current values of every exposed heater.
    pub fn heater_values(&self) -> TuningVector<T> {
        let mut v = TuningVector::new();
        for h in self.heaters() {
            if let Ok(x) = self.heater_value(&h.name) {
                v.set(h.name.clone(), x);
            }
        }
        v
    }

    /// Copy of the circuit with the given heater phases applied.
    pub fn with_heaters(&self, values: &TuningVector<T>) -> Result<Self> {
        let mut g = self.clone();
        for (name, phase) in values.iter() {
            g.set_heater(name, phase)?;
        }
        Ok(g)
    }

    fn set_heater(&mut self, name: &str, phase: T) -> Result<()> {
        let h = self
            .heater(name)
            .cloned()
            .ok_or_else(|| Error::config(format!("unknown heater '{name}'")))?;
        let b = self
            .blocks
            .iter_mut()
            .find(|b| b.id == h.block)
            .expect("validated heater block");
        b.params.set_heater_phase(h.param, phase)?;
        b.params.validate()
    }

    /// Copy with one block's parameters replaced (kind must not change).
    pub fn with_block_params(&self, id: &str, params: BlockParams<T>) -> Result<Self> {
        let mut g = self.clone();
        let b = g
            .blocks
            .iter_mut()
            .find(|b| b.id == id)
            .ok_or_else(|| Error::config(format!("unknown block '{id}'")))?;
        if b.kind() != params.kind() {
            return Err(Error::config(format!(
                "block '{id}' is {}, cannot become {}",
                b.kind(),
                params.kind()
            )));
        }
        params.validate()?;
        b.params = params;
        Ok(g)
    }

    /// Response with unit field on the first declared input.
    pub fn evaluate(&self, grid: &FrequencyGrid<T>) -> Result<CircuitResponse<T>> {
        let first = self
            .inputs
            .first()
            .ok_or_else(|| Error::topology("circuit has no external input"))?;
        let one = Complex::new(T::one(), T::zero());
        self.evaluate_driven(grid, &[(first.0.as_str(), one)])
    }

    /// Response to the given complex drive amplitudes on named inputs.
    pub fn evaluate_driven(
        &self,
        grid: &FrequencyGrid<T>,
        drive: &[(&str, Complex<T>)],
    ) -> Result<CircuitResponse<T>> {
        let n = grid.len();
        let zero = Complex::new(T::zero(), T::zero());
        let mut fields: Vec<Vec<Option<Vec<Complex<T>>>>> = self
            .blocks
            .iter()
            .map(|b| vec![None; b.kind().inputs().len()])
            .collect();
        for (name, amp) in drive {
            let k = self
                .inputs
                .iter()
                .position(|(n, _)| n == name)
                .ok_or_else(|| {
                    Error::config(format!(
                        "unknown input '{name}' (inputs: {})",
                        self.inputs.iter().map(|(n, _)| n.as_str()).collect::<Vec<_>>().join(", ")
                    ))
                })?;
            let (b, p) = self.drives[k];
            fields[b][p] = Some(vec![*amp; n]);
        }

        let mut out: Vec<Vec<Complex<T>>> = vec![vec![zero; n]; self.outputs.len()];
        for &bi in &self.order {
            let block = &self.blocks[bi];
            let ins = std::mem::take(&mut fields[bi]);
            if ins.iter().all(Option::is_none) {
                continue;
            }
            let mut outs: Vec<Vec<Complex<T>>> =
                vec![vec![zero; n]; block.kind().outputs().len()];
            for (k, &f) in grid.offsets_ghz.iter().enumerate() {
                let a = |p: usize| ins[p].as_ref().map_or(zero, |v| v[k]);
                match block.params.transfer(f)? {
                    BlockTransfer::Scalar(h) => outs[0][k] = h * a(0),
                    BlockTransfer::Matrix(m) => {
                        let r = m.apply([a(0), a(1)]);
                        outs[0][k] = r[0];
                        outs[1][k] = r[1];
                    }
                }
            }
            for (p, v) in outs.into_iter().enumerate() {
                match self.sinks[bi][p] {
                    Sink::Block(d, dp) => fields[d][dp] = Some(v),
                    Sink::External(o) => out[o] = v,
                    Sink::Dropped => {}
                }
            }
        }

        Ok(CircuitResponse {
            grid: grid.clone(),
            ports: self
                .outputs
                .iter()
                .map(|(n, _)| n.clone())
                .zip(out)
                .collect(),
        })
    }
}

/// Optical frequency grid: carrier plus strictly increasing offsets.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyGrid<T> {
    pub center_thz: T,
    pub offsets_ghz: Vec<T>,
}

impl<T: Scalar> FrequencyGrid<T> {
    pub fn new(center_thz: T, offsets_ghz: Vec<T>) -> Result<Self> {
        if offsets_ghz.iter().any(|x| !x.is_finite()) {
            return Err(Error::domain("grid offsets must be finite"));
        }
        if offsets_ghz.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::domain("grid offsets must be strictly increasing"));
        }
        Ok(Self {
            center_thz,
            offsets_ghz,
        })
    }

    /// Uniform grid `lo, lo+step, ...` up to and including `hi` (within half a step).
    pub fn sweep(lo: T, hi: T, step: T) -> Result<Self> {
        Ok(Self {
            center_thz: T::lit(DEFAULT_CARRIER_THZ),
            offsets_ghz: sweep_points(lo, hi, step)?,
        })
    }

    pub fn with_center(mut self, center_thz: T) -> Self {
        self.center_thz = center_thz;
        self
    }

    pub fn len(&self) -> usize {
        self.offsets_ghz.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets_ghz.is_empty()
    }

    /// Spacing between the first two points, if any.
    pub fn step(&self) -> Option<T> {
        match self.offsets_ghz.as_slice() {
            [a, b, ..] => Some(*b - *a),
            _ => None,
        }
    }
}

/// `lo + i*step` for `i = 0..=round((hi-lo)/step)`, computed by multiplication.
pub fn sweep_points<T: Scalar>(lo: T, hi: T, step: T) -> Result<Vec<T>> {
    if !(step > T::zero()) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::domain("sweep needs finite bounds and step > 0"));
    }
    if hi < lo {
        return Err(Error::domain(format!("sweep upper bound {hi} below lower bound {lo}")));
    }
    let n = ((hi - lo) / step + T::lit(1e-9)).floor().to_usize().unwrap_or(0);
    Ok((0..=n).map(|i| lo + step * T::from_usize(i).unwrap()).collect())
}

/// Complex output amplitudes per external output port.
#[derive(Debug, Clone, PartialEq)]
pub struct CircuitResponse<T> {
    pub grid: FrequencyGrid<T>,
    pub ports: Vec<(String, Vec<Complex<T>>)>,
}

impl<T: Scalar> CircuitResponse<T> {
    pub fn port(&self, name: &str) -> Result<&[Complex<T>]> {
        self.ports
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
            .ok_or_else(|| {
                Error::config(format!(
                    "unknown output port '{name}' (available: {})",
                    self.ports.iter().map(|(n, _)| n.as_str()).collect::<Vec<_>>().join(", ")
                ))
            })
    }

    pub fn port_power(&self, name: &str) -> Result<Vec<T>> {
        Ok(self.port(name)?.iter().map(|z| z.norm_sqr()).collect())
    }

    /// Sum of output powers at grid point `k`.
    pub fn total_power(&self, k: usize) -> T {
        self.ports.iter().map(|(_, v)| v[k].norm_sqr()).sum()
    }
}
