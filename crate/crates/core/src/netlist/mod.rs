//! Line-oriented netlist format, experiment configs and CSV output.
//!
//! ```text
//! format 1
//! param p_pi_mw 35
//! block r1 ring_allpass fsr_ghz=50 kappa=0.0376 round_trip_amplitude=0.981 detune_ghz=0
//! input in r1.in
//! output out r1.out
//! ```

mod config;
pub mod csv;
mod presets;

use std::collections::{HashMap, HashSet};
use std::fmt;

pub use config::load_experiment_config;
pub use presets::{preset_netlist, PRESET_NETLISTS};

use crate::circuit::{
    BlockInstance, BlockKind, BlockParams, CircuitGraph, Connection, PortRef,
};
use crate::error::{Error, Result};
use crate::transfer::{PhaseShifterState, RingParams, WaveguideParams, DEFAULT_P_PI_MW};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
    pub token: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, column {}: {} (at '{}')", self.line, self.column, self.message, self.token)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockDecl {
    pub id: String,
    pub kind: BlockKind,
    /// `key=value` attributes in source order.
    pub attrs: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct NetlistDocument {
    pub params: Vec<(String, f64)>,
    pub blocks: Vec<BlockDecl>,
    pub connections: Vec<(PortRef, PortRef)>,
    pub inputs: Vec<(String, PortRef)>,
    pub outputs: Vec<(String, PortRef)>,
}

/// Attribute keys accepted by each block kind.
pub fn block_keys(kind: BlockKind) -> &'static [&'static str] {
    match kind {
        BlockKind::Waveguide => &["optical_path_length", "loss_db_per_cm", "physical_length_cm"],
        BlockKind::PhaseShifter | BlockKind::TunableCoupler => &["phase_rad", "heater_power_mw"],
        BlockKind::Coupler3db => &[],
        BlockKind::RingAllPass => &["fsr_ghz", "kappa", "round_trip_amplitude", "detune_ghz"],
        BlockKind::RingAddDrop => &[
            "fsr_ghz",
            "kappa",
            "kappa_drop",
            "round_trip_amplitude",
            "detune_ghz",
        ],
    }
}

fn bare_message(e: Error) -> String {
    match e {
        Error::Domain(m) | Error::Config(m) | Error::Topology(m) | Error::Singular(m) => m,
        other => other.to_string(),
    }
}

/// Builds block parameters from attributes; errors name the offending key when known.
fn block_params(
    kind: BlockKind,
    attrs: &[(String, f64)],
    p_pi_mw: f64,
) -> std::result::Result<BlockParams<f64>, (Option<String>, String)> {
    let get = |k: &str| attrs.iter().find(|(n, _)| n == k).map(|(_, v)| *v);
    let blame = |msg: String| {
        let key = attrs
            .iter()
            .map(|(k, _)| k)
            .find(|k| msg.starts_with(k.as_str()))
            .cloned();
        (key, msg)
    };
    let phase = || -> std::result::Result<PhaseShifterState<f64>, (Option<String>, String)> {
        match (get("phase_rad"), get("heater_power_mw")) {
            (Some(_), Some(_)) => Err((
                Some("heater_power_mw".into()),
                "give phase_rad or heater_power_mw, not both".into(),
            )),
            (_, Some(p)) => PhaseShifterState::from_power(p, p_pi_mw)
                .map_err(|e| (Some("heater_power_mw".into()), bare_message(e))),
            (p, None) => Ok(PhaseShifterState::from_phase(p.unwrap_or(0.0))),
        }
    };
    let params = match kind {
        BlockKind::Waveguide => {
            let opl = get("optical_path_length").ok_or((
                None,
                "waveguide requires optical_path_length".to_string(),
            ))?;
            BlockParams::Waveguide(WaveguideParams {
                optical_path_length: opl,
                loss_db_per_cm: get("loss_db_per_cm").unwrap_or(0.0),
                physical_length_cm: get("physical_length_cm").unwrap_or(0.0),
            })
        }
        BlockKind::PhaseShifter => BlockParams::PhaseShifter(phase()?),
        BlockKind::TunableCoupler => BlockParams::TunableCoupler(phase()?),
        BlockKind::Coupler3db => BlockParams::Coupler3db,
        BlockKind::RingAllPass | BlockKind::RingAddDrop => {
            let kappa = get("kappa").unwrap_or(0.0);
            let ring = RingParams {
                fsr_ghz: get("fsr_ghz").unwrap_or(50.0),
                kappa,
                kappa_drop: (kind == BlockKind::RingAddDrop)
                    .then(|| get("kappa_drop").unwrap_or(kappa)),
                round_trip_amplitude: get("round_trip_amplitude").unwrap_or(1.0),
                detune_ghz: get("detune_ghz").unwrap_or(0.0),
            };
            if kind == BlockKind::RingAddDrop {
                BlockParams::RingAddDrop(ring)
            } else {
                BlockParams::RingAllPass(ring)
            }
        }
    };
    params.validate().map_err(|e| blame(bare_message(e)))?;
    Ok(params)
}

fn is_ident(s: &str) -> bool {
    let mut c = s.chars();
    matches!(c.next(), Some(ch) if ch.is_ascii_alphabetic() || ch == '_')
        && c.all(|ch| ch.is_ascii_alphanumeric() || ch == '_')
}

fn parse_number(s: &str) -> Option<f64> {
    s.parse::<f64>().ok().filter(|v| v.is_finite())
}

#[derive(Debug, Clone)]
pub(crate) struct Token<'a> {
    pub text: &'a str,
    pub column: usize,
}

/// Splits one line into whitespace-separated tokens, dropping `#` comments.
pub(crate) fn tokenize(line: &str) -> Vec<Token<'_>> {
    let code = line.split('#').next().unwrap_or("");
    let mut out = Vec::new();
    let mut start = None;
    for (i, (b, ch)) in code.char_indices().enumerate() {
        match (ch.is_whitespace(), start) {
            (false, None) => start = Some((b, i)),
            (true, Some((s, col))) => {
                out.push(Token { text: &code[s..b], column: col + 1 });
                start = None;
            }
            _ => {}
        }
    }
    if let Some((s, col)) = start {
        out.push(Token { text: &code[s..], column: col + 1 });
    }
    out
}

/// Collects at most one error per line.
#[derive(Default)]
pub(crate) struct Errors {
    list: Vec<ParseError>,
    lines: HashSet<usize>,
}

impl Errors {
    pub fn push(&mut self, line: usize, column: usize, token: &str, message: impl Into<String>) {
        if self.lines.insert(line) {
            self.list.push(ParseError {
                line,
                column,
                message: message.into(),
                token: token.to_string(),
            });
        }
    }

    /// Records an error that is not tied to a statement, even on a line that already has one.
    pub fn force(&mut self, line: usize, column: usize, token: &str, message: impl Into<String>) {
        self.lines.insert(line);
        self.list.push(ParseError {
            line,
            column,
            message: message.into(),
            token: token.to_string(),
        });
    }

    pub fn at(&mut self, line: usize, tok: &Token, message: impl Into<String>) {
        self.push(line, tok.column, tok.text, message)
    }

    pub fn finish(mut self) -> std::result::Result<(), Vec<ParseError>> {
        if self.list.is_empty() {
            Ok(())
        } else {
            self.list.sort_by_key(|e| (e.line, e.column));
            Err(self.list)
        }
    }
}

const STATEMENTS: &str = "format, param, block, connect, input or output";

pub fn parse_netlist(text: &str) -> std::result::Result<NetlistDocument, Vec<ParseError>> {
    let lines: Vec<(usize, Vec<Token>)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, tokenize(l)))
        .filter(|(_, t)| !t.is_empty())
        .collect();
    let mut errs = Errors::default();
    let mut doc = NetlistDocument::default();

    // Parameters first: heater powers depend on p_pi_mw wherever it is declared.
    let mut seen_format = false;
    for (ln, toks) in &lines {
        match toks[0].text {
            "format" => {
                if seen_format {
                    errs.at(*ln, &toks[0], "duplicate format line");
                } else if toks.len() != 2 {
                    errs.at(*ln, &toks[0], "expected 'format <version>'");
                } else if toks[1].text != FORMAT_VERSION.to_string() {
                    errs.at(*ln, &toks[1], format!("unsupported format version (expected {FORMAT_VERSION})"));
                }
                seen_format = true;
            }
            "param" => {
                if toks.len() != 3 {
                    errs.at(*ln, &toks[0], "expected 'param <name> <number>'");
                } else if !is_ident(toks[1].text) {
                    errs.at(*ln, &toks[1], "expected a parameter name");
                } else if doc.params.iter().any(|(n, _)| n == toks[1].text) {
                    errs.at(*ln, &toks[1], "duplicate parameter");
                } else if let Some(v) = parse_number(toks[2].text) {
                    if toks[1].text == "p_pi_mw" && !(v > 0.0) {
                        errs.at(*ln, &toks[2], "p_pi_mw must be > 0");
                    } else {
                        doc.params.push((toks[1].text.to_string(), v));
                    }
                } else {
                    errs.at(*ln, &toks[2], "expected a finite number");
                }
            }
            _ => {}
        }
    }
    let p_pi = doc
        .params
        .iter()
        .find(|(n, _)| n == "p_pi_mw")
        .map_or(DEFAULT_P_PI_MW, |(_, v)| *v);

    let mut kinds: HashMap<String, BlockKind> = HashMap::new();
    for (ln, toks) in &lines {
        match toks[0].text {
            "block" => {
                if let Some(decl) = parse_block(*ln, toks, p_pi, &mut kinds, &mut errs) {
                    doc.blocks.push(decl);
                }
            }
            "format" | "param" | "connect" | "input" | "output" => {}
            _ => errs.at(*ln, &toks[0], format!("unknown statement; expected {STATEMENTS}")),
        }
    }

    let mut used_out: HashSet<PortRef> = HashSet::new();
    let mut used_in: HashSet<PortRef> = HashSet::new();
    let mut io_names: HashSet<String> = HashSet::new();
    let mut stmt_line: HashMap<String, usize> = HashMap::new();
    for (ln, toks) in &lines {
        let ln = *ln;
        match toks[0].text {
            "connect" => {
                if toks.len() != 3 {
                    errs.at(ln, &toks[0], "expected 'connect <block>.<port> <block>.<port>'");
                    continue;
                }
                let Some(from) = port_ref(ln, &toks[1], true, &kinds, &mut errs) else { continue };
                let Some(to) = port_ref(ln, &toks[2], false, &kinds, &mut errs) else { continue };
                if used_out.contains(&from) {
                    errs.at(ln, &toks[1], format!("port '{from}' is used more than once"));
                } else if used_in.contains(&to) {
                    errs.at(ln, &toks[2], format!("port '{to}' is driven more than once"));
                } else {
                    used_out.insert(from.clone());
                    used_in.insert(to.clone());
                    stmt_line.insert(format!("connect:{}", from.block), ln);
                    doc.connections.push((from, to));
                }
            }
            kw @ ("input" | "output") => {
                let is_out = kw == "output";
                if toks.len() != 3 {
                    errs.at(ln, &toks[0], format!("expected '{kw} <name> <block>.<port>'"));
                    continue;
                }
                if !is_ident(toks[1].text) {
                    errs.at(ln, &toks[1], format!("expected an {kw} name"));
                    continue;
                }
                let Some(p) = port_ref(ln, &toks[2], is_out, &kinds, &mut errs) else { continue };
                let key = format!("{kw}:{}", toks[1].text);
                if io_names.contains(&key) {
                    errs.at(ln, &toks[1], format!("duplicate {kw} name"));
                } else if is_out && used_out.contains(&p) {
                    errs.at(ln, &toks[2], format!("port '{p}' is used more than once"));
                } else if !is_out && used_in.contains(&p) {
                    errs.at(ln, &toks[2], format!("port '{p}' is driven more than once"));
                } else {
                    io_names.insert(key.clone());
                    stmt_line.insert(key, ln);
                    let entry = (toks[1].text.to_string(), p.clone());
                    if is_out {
                        used_out.insert(p);
                        doc.outputs.push(entry);
                    } else {
                        used_in.insert(p);
                        doc.inputs.push(entry);
                    }
                }
            }
            _ => {}
        }
    }
    errs.finish()?;

    // Whole-graph checks (loops, unreachable outputs) are pinned to the statement they implicate.
    if let Err(e) = doc.to_graph() {
        let msg = bare_message(e);
        let last = lines.last().map_or(1, |(l, _)| *l);
        let line = doc
            .outputs
            .iter()
            .find(|(n, _)| msg.contains(&format!("output '{n}'")))
            .and_then(|(n, _)| stmt_line.get(&format!("output:{n}")))
            .or_else(|| {
                doc.blocks
                    .iter()
                    .filter(|b| msg.contains(b.id.as_str()))
                    .filter_map(|b| stmt_line.get(&format!("connect:{}", b.id)))
                    .max()
            })
            .copied()
            .unwrap_or(last);
        return Err(vec![ParseError {
            line,
            column: 1,
            message: msg,
            token: String::new(),
        }]);
    }
    Ok(doc)
}

fn parse_block(
    ln: usize,
    toks: &[Token],
    p_pi: f64,
    kinds: &mut HashMap<String, BlockKind>,
    errs: &mut Errors,
) -> Option<BlockDecl> {
    if toks.len() < 3 {
        errs.at(ln, &toks[0], "expected 'block <id> <kind> key=value ...'");
        return None;
    }
    let id = &toks[1];
    if !is_ident(id.text) {
        errs.at(ln, id, "expected a block id (letters, digits, '_')");
        return None;
    }
    if kinds.contains_key(id.text) {
        errs.at(ln, id, format!("duplicate block id '{}'", id.text));
        return None;
    }
    let kind: BlockKind = match toks[2].text.parse() {
        Ok(k) => k,
        Err(_) => {
            let known: Vec<_> = BlockKind::ALL.iter().map(|k| k.as_str()).collect();
            errs.at(ln, &toks[2], format!("unknown block kind; expected one of {}", known.join(", ")));
            return None;
        }
    };
    kinds.insert(id.text.to_string(), kind);
    let allowed = block_keys(kind);
    let mut attrs: Vec<(String, f64)> = Vec::new();
    let mut cols: HashMap<String, usize> = HashMap::new();
    for t in &toks[3..] {
        let Some((k, v)) = t.text.split_once('=') else {
            errs.at(ln, t, "expected key=value");
            return None;
        };
        if !allowed.contains(&k) {
            let msg = if allowed.is_empty() {
                format!("{kind} takes no parameters")
            } else {
                format!("unknown key '{k}' for {kind}; expected one of {}", allowed.join(", "))
            };
            errs.at(ln, t, msg);
            return None;
        }
        if cols.contains_key(k) {
            errs.at(ln, t, format!("duplicate key '{k}'"));
            return None;
        }
        let Some(value) = parse_number(v) else {
            errs.at(ln, t, format!("expected a finite number for '{k}'"));
            return None;
        };
        cols.insert(k.to_string(), t.column);
        attrs.push((k.to_string(), value));
    }
    match block_params(kind, &attrs, p_pi) {
        Ok(_) => Some(BlockDecl {
            id: id.text.to_string(),
            kind,
            attrs,
        }),
        Err((key, msg)) => {
            let tok = key
                .and_then(|k| toks[3..].iter().find(|t| t.text.starts_with(&format!("{k}="))))
                .unwrap_or(&toks[2]);
            errs.at(ln, tok, msg);
            None
        }
    }
}

fn port_ref(
    ln: usize,
    tok: &Token,
    want_output: bool,
    kinds: &HashMap<String, BlockKind>,
    errs: &mut Errors,
) -> Option<PortRef> {
    let p: PortRef = match tok.text.parse() {
        Ok(p) => p,
        Err(_) => {
            errs.at(ln, tok, "expected <block>.<port>");
            return None;
        }
    };
    let Some(kind) = kinds.get(&p.block) else {
        errs.at(ln, tok, format!("unknown block '{}'", p.block));
        return None;
    };
    let (list, other) = if want_output {
        (kind.outputs(), kind.inputs())
    } else {
        (kind.inputs(), kind.outputs())
    };
    if list.contains(&p.port.as_str()) {
        return Some(p);
    }
    let msg = if other.contains(&p.port.as_str()) {
        format!(
            "'{}' is an {} port of {kind}; expected one of {}",
            p.port,
            if want_output { "input" } else { "output" },
            list.join(", ")
        )
    } else {
        format!("{kind} has no port '{}'; expected one of {}", p.port, list.join(", "))
    };
    errs.at(ln, tok, msg);
    None
}

impl NetlistDocument {
    pub fn p_pi_mw(&self) -> f64 {
        self.params
            .iter()
            .find(|(n, _)| n == "p_pi_mw")
            .map_or(DEFAULT_P_PI_MW, |(_, v)| *v)
    }

    pub fn to_graph(&self) -> Result<CircuitGraph<f64>> {
        let p_pi = self.p_pi_mw();
        let blocks = self
            .blocks
            .iter()
            .map(|b| {
                block_params(b.kind, &b.attrs, p_pi)
                    .map(|p| BlockInstance::new(b.id.clone(), p))
                    .map_err(|(_, m)| Error::config(format!("block '{}': {m}", b.id)))
            })
            .collect::<Result<Vec<_>>>()?;
        let connections = self
            .connections
            .iter()
            .map(|(f, t)| Connection {
                from: f.clone(),
                to: t.clone(),
            })
            .collect();
        CircuitGraph::new(blocks, connections, self.inputs.clone(), self.outputs.clone())
    }

    /// Document describing `graph`; heater settings are written as `phase_rad`.
    pub fn from_graph(graph: &CircuitGraph<f64>) -> Self {
        let blocks = graph
            .blocks()
            .iter()
            .map(|b| {
                let attrs: Vec<(&str, f64)> = match &b.params {
                    BlockParams::Waveguide(w) => vec![
                        ("optical_path_length", w.optical_path_length),
                        ("loss_db_per_cm", w.loss_db_per_cm),
                        ("physical_length_cm", w.physical_length_cm),
                    ],
                    BlockParams::PhaseShifter(s) | BlockParams::TunableCoupler(s) => {
                        vec![("phase_rad", s.phase_rad)]
                    }
                    BlockParams::Coupler3db => vec![],
                    BlockParams::RingAllPass(r) | BlockParams::RingAddDrop(r) => {
                        let mut v = vec![("fsr_ghz", r.fsr_ghz), ("kappa", r.kappa)];
                        if let Some(kd) = r.kappa_drop {
                            v.push(("kappa_drop", kd));
                        }
                        v.push(("round_trip_amplitude", r.round_trip_amplitude));
                        v.push(("detune_ghz", r.detune_ghz));
                        v
                    }
                };
                BlockDecl {
                    id: b.id.clone(),
                    kind: b.kind(),
                    attrs: attrs.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
                }
            })
            .collect();
        Self {
            params: Vec::new(),
            blocks,
            connections: graph
                .connections()
                .iter()
                .map(|c| (c.from.clone(), c.to.clone()))
                .collect(),
            inputs: graph.inputs().to_vec(),
            outputs: graph.outputs().to_vec(),
        }
    }
}

/// Canonical text form; parsing it back yields an equal document.
impl fmt::Display for NetlistDocument {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "format {FORMAT_VERSION}")?;
        for (n, v) in &self.params {
            writeln!(f, "param {n} {v}")?;
        }
        for b in &self.blocks {
            write!(f, "block {} {}", b.id, b.kind)?;
            for (k, v) in &b.attrs {
                write!(f, " {k}={v}")?;
            }
            writeln!(f)?;
        }
        for (a, b) in &self.connections {
            writeln!(f, "connect {a} {b}")?;
        }
        for (n, p) in &self.inputs {
            writeln!(f, "input {n} {p}")?;
        }
        for (n, p) in &self.outputs {
            writeln!(f, "output {n} {p}")?;
        }
        Ok(())
    }
}

pub fn print_netlist(doc: &NetlistDocument) -> String {
    doc.to_string()
}

/// Parses and builds in one step, mapping positioned errors into [`Error::Parse`].
pub fn load_netlist(text: &str) -> Result<(NetlistDocument, CircuitGraph<f64>)> {
    let doc = parse_netlist(text).map_err(Error::Parse)?;
    let graph = doc.to_graph()?;
    Ok((doc, graph))
}
