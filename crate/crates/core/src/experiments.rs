//! Preset experiments reproducing the shaper measurements in-model.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::{FRAC_PI_2, PI};
use std::path::PathBuf;
use std::sync::{Mutex, OnceLock};

use num_complex::Complex;

use crate::analysis::{fit_round_trip_for_finesse, notch_depth_db, peak_frequency};
use crate::circuit::{
    build_deinterleaver, build_shaper, sweep_points, BlockParams, CircuitGraph, DeinterleaverSpec,
    DropOutput, FrequencyGrid, ShaperConfig, TuningVector, BAR_PS, BAR_TC, DEFAULT_CARRIER_THZ,
    DEINTERLEAVER_CROSS, RING_AP, SHAPER_DETECTOR,
};
use crate::error::{Error, Result};
use crate::rf::{
    make_spectrum, magnitude_db, rf_response_at, LinkSpec, ModulationFormat, RfResponse,
};
use crate::scalar::{unwrap_phase, wrap_phase};
use crate::transfer::{
    critical_coupling_kappa, h_tunable_coupler, heater_phase_from_power, heater_power_from_phase,
    kappa_for_rejection, RingParams, DEFAULT_P_PI_MW,
};
use crate::tuner::{
    optimize, synthesize_cancellation_settings, tune_deinterleaver, Objective, OptimizerConfig,
};

pub const PRESETS: [&str; 8] = [
    "im2pm",
    "pm2im",
    "ssb_notch",
    "cancel_notch",
    "bandpass_tune",
    "deint_phase_probe",
    "amplitude_tuning",
    "coupling_sweep",
];

/// Finesse the fitted ring round-trip amplitude reproduces at critical coupling.
pub const RING_FINESSE: f64 = 17.6;
pub const RING_FSR_GHZ: f64 = 50.0;

const COMMON_KEYS: [&str; 4] = ["carrier_offset_ghz", "modulation_index", "finesse", "p_pi_mw"];

fn preset_keys(name: &str) -> &'static [&'static str] {
    match name {
        "im2pm" | "pm2im" => &["band_lo_ghz", "band_hi_ghz"],
        "ssb_notch" | "cancel_notch" => &["notch_ghz", "optical_rejection_db", "window_ghz"],
        "bandpass_tune" => &["detunes_ghz", "drop_kappa"],
        "amplitude_tuning" => &[
            "rf_ghz",
            "power_lo_mw",
            "power_hi_mw",
            "power_step_mw",
            "reference_phase_rad",
        ],
        "coupling_sweep" => &["steps"],
        _ => &[],
    }
}

/// Whether `set <key>` applies to preset `name`.
pub fn setting_allowed(name: &str, key: &str) -> bool {
    COMMON_KEYS.contains(&key) || preset_keys(name).contains(&key)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    /// RF sweep `(lo, hi, step)` in GHz; each preset has its own default.
    pub sweep: Option<(f64, f64, f64)>,
    /// Heater phases replacing values of the preset's base configuration.
    pub heaters: Vec<(String, f64)>,
    pub settings: BTreeMap<String, Vec<f64>>,
    pub output: Option<PathBuf>,
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            sweep: None,
            heaters: Vec::new(),
            settings: BTreeMap::new(),
            output: None,
            seed: 0,
        }
    }

    pub fn with_setting(mut self, key: &str, values: &[f64]) -> Self {
        self.settings.insert(key.to_string(), values.to_vec());
        self
    }

    pub fn with_heater(mut self, name: &str, phase: f64) -> Self {
        self.heaters.push((name.to_string(), phase));
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !PRESETS.contains(&self.name.as_str()) {
            return Err(Error::config(format!(
                "unknown experiment '{}' (known: {})",
                self.name,
                PRESETS.join(", ")
            )));
        }
        for (k, v) in &self.settings {
            if !setting_allowed(&self.name, k) {
                return Err(Error::config(format!(
                    "setting '{k}' does not apply to experiment '{}'",
                    self.name
                )));
            }
            if v.is_empty() || v.iter().any(|x| !x.is_finite()) {
                return Err(Error::config(format!("setting '{k}' needs finite values")));
            }
        }
        if let Some((lo, hi, step)) = self.sweep {
            sweep_points(lo, hi, step)?;
        }
        Ok(())
    }

    fn get(&self, key: &str, default: f64) -> Result<f64> {
        match self.settings.get(key) {
            None => Ok(default),
            Some(v) if v.len() == 1 => Ok(v[0]),
            Some(_) => Err(Error::config(format!("setting '{key}' takes one value"))),
        }
    }

    fn list(&self, key: &str, default: &[f64]) -> Vec<f64> {
        self.settings.get(key).cloned().unwrap_or_else(|| default.to_vec())
    }

    fn sweep_or(&self, default: (f64, f64, f64)) -> Result<Vec<f64>> {
        let (lo, hi, step) = self.sweep.unwrap_or(default);
        sweep_points(lo, hi, step)
    }

    fn p_pi(&self) -> Result<f64> {
        let p = self.get("p_pi_mw", DEFAULT_P_PI_MW)?;
        if !(p > 0.0) {
            return Err(Error::config("p_pi_mw must be > 0"));
        }
        Ok(p)
    }

    fn modulation_index(&self) -> Result<f64> {
        self.get("modulation_index", 0.1)
    }
}

/// A named numeric table (one row per sweep point).
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    fn new(name: &str, columns: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentOutput {
    pub name: String,
    pub traces: Vec<(String, RfResponse<f64>)>,
    pub tables: Vec<Table>,
    /// `key value` pairs in insertion order.
    pub summary: Vec<(String, String)>,
}

impl ExperimentOutput {
    fn new(name: &str) -> Self {
        Self {
            name: name.to_string(),
            ..Self::default()
        }
    }

    fn put(&mut self, key: &str, value: impl ToString) {
        self.summary.push((key.to_string(), value.to_string()));
    }

    pub fn value(&self, key: &str) -> Option<&str> {
        self.summary.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    /// Numeric summary entry.
    pub fn number(&self, key: &str) -> Option<f64> {
        self.value(key)?.parse().ok()
    }

    pub fn trace(&self, name: &str) -> Option<&RfResponse<f64>> {
        self.traces.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }
}

/// De-interleaver tuned for extinction with optimizer seed `seed` (memoized).
pub fn tuned_deinterleaver(seed: u64) -> Result<DeinterleaverSpec<f64>> {
    static CACHE: OnceLock<Mutex<HashMap<u64, DeinterleaverSpec<f64>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(s) = cache.lock().unwrap().get(&seed) {
        return Ok(*s);
    }
    let config = OptimizerConfig {
        seed,
        ..OptimizerConfig::default()
    };
    let (spec, _) = tune_deinterleaver(&DeinterleaverSpec::default(), &config)?;
    cache.lock().unwrap().insert(seed, spec);
    Ok(spec)
}

/// Round-trip amplitude of the 50 GHz rings fitted to a critical-coupling finesse.
pub fn ring_round_trip(finesse: f64) -> Result<f64> {
    static DEFAULT: OnceLock<f64> = OnceLock::new();
    if finesse == RING_FINESSE {
        if let Some(g) = DEFAULT.get() {
            return Ok(*g);
        }
        let g = fit_round_trip_for_finesse(finesse, RING_FSR_GHZ)?;
        return Ok(*DEFAULT.get_or_init(|| g));
    }
    fit_round_trip_for_finesse(finesse, RING_FSR_GHZ)
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    match cfg.name.as_str() {
        "im2pm" => conversion(cfg, false),
        "pm2im" => conversion(cfg, true),
        "ssb_notch" => notch(cfg, false),
        "cancel_notch" => notch(cfg, true),
        "bandpass_tune" => bandpass(cfg),
        "deint_phase_probe" => phase_probe(cfg),
        "amplitude_tuning" => amplitude_tuning(cfg),
        "coupling_sweep" => coupling_sweep(cfg),
        _ => unreachable!("validated preset name"),
    }
}

fn base_shaper(cfg: &ExperimentConfig, carrier_offset_default: f64) -> Result<ShaperConfig<f64>> {
    let gamma = ring_round_trip(cfg.get("finesse", RING_FINESSE)?)?;
    let mut sc = ShaperConfig::with_ring_amplitude(gamma)?;
    sc.deinterleaver = tuned_deinterleaver(cfg.seed)?;
    sc.carrier_offset_ghz = cfg.get("carrier_offset_ghz", carrier_offset_default)?;
    Ok(sc)
}

fn overrides(cfg: &ExperimentConfig) -> TuningVector<f64> {
    let mut v = TuningVector::new();
    for (n, p) in &cfg.heaters {
        v.set(n.clone(), *p);
    }
    v
}

fn apply_overrides(graph: &CircuitGraph<f64>, cfg: &ExperimentConfig) -> Result<CircuitGraph<f64>> {
    graph.with_heaters(&overrides(cfg))
}

/// Heaters from `names` that the user did not pin.
fn free_heaters(cfg: &ExperimentConfig, names: &[&str]) -> Vec<String> {
    names
        .iter()
        .filter(|n| !cfg.heaters.iter().any(|(h, _)| h == *n))
        .map(|n| n.to_string())
        .collect()
}

fn optimizer(cfg: &ExperimentConfig, max_evals: usize) -> OptimizerConfig {
    OptimizerConfig {
        seed: cfg.seed,
        max_evals,
        ..OptimizerConfig::default()
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn in_band(freqs: &[f64], lo: f64, hi: f64) -> Vec<usize> {
    freqs
        .iter()
        .enumerate()
        .filter(|(_, f)| **f >= lo - 1e-9 && **f <= hi + 1e-9)
        .map(|(i, _)| i)
        .collect()
}

fn conversion(cfg: &ExperimentConfig, from_pm: bool) -> Result<ExperimentOutput> {
    let mut out = ExperimentOutput::new(&cfg.name);
    let p_pi = cfg.p_pi()?;
    let band = (cfg.get("band_lo_ghz", 15.0)?, cfg.get("band_hi_ghz", 25.0)?);
    let band_freqs = sweep_points(band.0, band.1, 0.5)?;
    let m = cfg.modulation_index()?;
    let format = if from_pm { ModulationFormat::pm(m) } else { ModulationFormat::im(m) };
    let link = LinkSpec::new(format, SHAPER_DETECTOR);

    let shaper = base_shaper(cfg, 2.0)?;
    let mut graph = apply_overrides(&build_shaper(&shaper)?, cfg)?;
    let free = free_heaters(cfg, &[BAR_PS, BAR_TC]);
    if !free.is_empty() {
        let objective = Objective::ConversionExtinction {
            link: link.clone(),
            freqs_ghz: band_freqs.clone(),
            toggle_heater: BAR_PS.to_string(),
        };
        let r = optimize(&graph, &free, &objective, &optimizer(cfg, 4000))?;
        graph = r.apply(&graph)?;
        out.put("tuned_objective_db", r.best_value);
    }
    let ps = graph.heater_value(BAR_PS)?;
    let flipped = graph.with_heaters(&TuningVector::new().with(BAR_PS, wrap_phase(ps + PI)))?;

    let freqs = cfg.sweep_or((1.0, 30.0, 0.1))?;
    let a = rf_response_at(&link, &graph, &freqs)?;
    let b = rf_response_at(&link, &flipped, &freqs)?;
    let idx = in_band(&freqs, band.0, band.1);
    if idx.is_empty() {
        return Err(Error::config("sweep does not cover the conversion band"));
    }
    let band_mean = |r: &RfResponse<f64>| mean(&idx.iter().map(|&i| r.mag_db[i]).collect::<Vec<_>>());
    let (im, pm, ps_im) = if band_mean(&a) >= band_mean(&b) {
        (a, b, ps)
    } else {
        (b, a, wrap_phase(ps + PI))
    };
    let extinction = idx
        .iter()
        .map(|&i| im.mag_db[i] - pm.mag_db[i])
        .fold(f64::INFINITY, f64::min);
    let ps_pm = wrap_phase(ps_im + PI);
    let tc = graph.heater_value(BAR_TC)?;

    out.put("input", if from_pm { "pm" } else { "im" });
    out.put("band_lo_ghz", band.0);
    out.put("band_hi_ghz", band.1);
    out.put("extinction_db", extinction);
    out.put("target_extinction_db", 15.0);
    if from_pm {
        out.put("strict_target_extinction_db", 20.0);
    }
    out.put("carrier_offset_ghz", shaper.carrier_offset_ghz);
    out.put("bar_ps_im_rad", ps_im);
    out.put("bar_ps_pm_rad", ps_pm);
    out.put("bar_tc_rad", tc);
    out.put("heater_power_im_mw", heater_power_from_phase(ps_im, p_pi)?);
    out.put("heater_power_pm_mw", heater_power_from_phase(ps_pm, p_pi)?);
    out.put("heater_power_tc_mw", heater_power_from_phase(tc, p_pi)?);
    out.put("toggle_power_mw", p_pi);
    out.traces.push(("im".into(), im));
    out.traces.push(("pm".into(), pm));
    Ok(out)
}

/// Notch depth of `trace` searched within `window` of `center`.
fn local_notch(freqs: &[f64], mag_db: &[f64], center: f64, window: f64) -> Result<(f64, f64)> {
    let idx = in_band(freqs, center - window, center + window);
    if idx.is_empty() {
        return Err(Error::config("sweep does not cover the notch window"));
    }
    let f: Vec<f64> = idx.iter().map(|&i| freqs[i]).collect();
    let m: Vec<f64> = idx.iter().map(|&i| mag_db[i]).collect();
    notch_depth_db(&f, &m, window)
}

fn notch(cfg: &ExperimentConfig, cancel: bool) -> Result<ExperimentOutput> {
    let mut out = ExperimentOutput::new(&cfg.name);
    let notch_ghz = cfg.get("notch_ghz", 15.0)?;
    let rejection = cfg.get("optical_rejection_db", 7.0)?;
    let window = cfg.get("window_ghz", 10.0)?;
    let m = cfg.modulation_index()?;
    let link = LinkSpec::new(ModulationFormat::im(m), SHAPER_DETECTOR);

    let mut shaper = base_shaper(cfg, 2.0)?;
    let gamma = shaper.ring_allpass.round_trip_amplitude;
    let kappa = kappa_for_rejection(gamma, rejection, true)?;
    shaper.ring_allpass = RingParams::all_pass(RING_FSR_GHZ, kappa, gamma, notch_ghz)?;
    shaper.coupler_phase = 0.0;
    let ssb_graph = apply_overrides(&build_shaper(&shaper)?, cfg)?;

    let freqs = cfg.sweep_or((1.0, 30.0, 0.01))?;
    let ssb = rf_response_at(&link, &ssb_graph, &freqs)?;
    let (ssb_depth, ssb_f0) = local_notch(&freqs, &ssb.mag_db, notch_ghz, window)?;
    out.put("optical_rejection_db", rejection);
    out.put("ring_kappa", kappa);
    out.put("ring_round_trip", gamma);
    out.put("ssb_notch_depth_db", ssb_depth);
    out.put("ssb_notch_ghz", ssb_f0);

    if cancel {
        let s = synthesize_cancellation_settings(rejection)?;
        out.put("synth_coupler_rad", s.coupler_phase);
        out.put("synth_phase_shifter_rad", s.phase_shifter_phase);
        let start = ssb_graph.with_heaters(&s.tuning_vector())?;
        let start = apply_overrides(&start, cfg)?;
        let objective = Objective::NotchDepth {
            link: link.clone(),
            notch_ghz,
            reference_ghz: vec![notch_ghz - window, notch_ghz + window],
        };
        let free = free_heaters(cfg, &[BAR_PS, BAR_TC]);
        let graph = if free.is_empty() {
            start
        } else {
            let r = optimize(&start, &free, &objective, &optimizer(cfg, 4000))?;
            out.put("tuned_objective_db", r.best_value);
            r.apply(&start)?
        };
        let c = rf_response_at(&link, &graph, &freqs)?;
        let (depth, f0) = local_notch(&freqs, &c.mag_db, notch_ghz, window)?;
        out.put("cancel_notch_depth_db", depth);
        out.put("cancel_notch_ghz", f0);
        out.put("enhancement_db", depth - ssb_depth);
        out.put("bar_tc_rad", graph.heater_value(BAR_TC)?);
        out.put("bar_ps_rad", graph.heater_value(BAR_PS)?);
        out.traces.push(("ssb".into(), ssb));
        out.traces.push(("cancel".into(), c));
    } else {
        out.put("notch_depth_db", ssb_depth);
        out.put("notch_ghz", ssb_f0);
        out.traces.push(("ssb".into(), ssb));
    }
    Ok(out)
}

fn bandpass(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let mut out = ExperimentOutput::new(&cfg.name);
    let detunes = cfg.list("detunes_ghz", &[8.0, 12.0, 16.0, 20.0]);
    let kappa = cfg.get("drop_kappa", 0.2)?;
    let m = cfg.modulation_index()?;
    let link = LinkSpec::new(ModulationFormat::ssb_upper(m), SHAPER_DETECTOR);
    let freqs = cfg.sweep_or((1.0, 30.0, 0.1))?;
    let step = freqs.get(1).map_or(0.0, |f| f - freqs[0]);

    let mut shaper = base_shaper(cfg, -2.0)?;
    let gamma = shaper.ring_adddrop.round_trip_amplitude;
    shaper.drop_output = DropOutput::Drop;
    // Peaks are searched inside the cross channel, where the drop port feeds the detector.
    let channel = in_band(
        &freqs,
        -shaper.carrier_offset_ghz + shaper.deinterleaver.guard_ghz,
        f64::INFINITY,
    );
    if channel.is_empty() {
        return Err(Error::config("sweep does not reach the cross channel"));
    }
    let cf: Vec<f64> = channel.iter().map(|&i| freqs[i]).collect();
    let mut worst: f64 = 0.0;
    for d in &detunes {
        shaper.ring_adddrop = RingParams::add_drop(RING_FSR_GHZ, kappa, kappa, gamma, *d)?;
        let graph = apply_overrides(&build_shaper(&shaper)?, cfg)?;
        let r = rf_response_at(&link, &graph, &freqs)?;
        let peak = peak_frequency(&cf, &channel.iter().map(|&i| r.mag_db[i]).collect::<Vec<_>>())?;
        worst = worst.max((peak - d).abs());
        out.put(&format!("peak_ghz_{d}"), peak);
        out.traces.push((format!("detune_{d}"), r));
    }
    out.put("max_peak_error_ghz", worst);
    out.put("sweep_step_ghz", step);
    out.put("drop_kappa", kappa);
    out.put("carrier_offset_ghz", shaper.carrier_offset_ghz);
    Ok(out)
}

fn phase_probe(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let mut out = ExperimentOutput::new(&cfg.name);
    let offset = cfg.get("carrier_offset_ghz", 2.0)?;
    let spec = tuned_deinterleaver(cfg.seed)?.with_crossover(-offset);
    let graph = apply_overrides(&build_deinterleaver(&spec)?, cfg)?;
    let m = cfg.modulation_index()?;
    let link = LinkSpec::new(ModulationFormat::ssb_upper(m), DEINTERLEAVER_CROSS);
    let freqs = cfg.sweep_or((1.0, 30.0, 0.1))?;
    let probe = rf_response_at(&link, &graph, &freqs)?;

    let mut offsets = vec![0.0];
    offsets.extend(freqs.iter().copied());
    let resp = graph.evaluate(&FrequencyGrid::new(DEFAULT_CARRIER_THZ, offsets)?)?;
    let h = resp.port(DEINTERLEAVER_CROSS)?;
    let mut model_phase: Vec<f64> = h[1..].iter().map(|z| (z * h[0].conj()).arg()).collect();
    unwrap_phase(&mut model_phase);
    let model_mag: Vec<f64> = h[1..].iter().map(|z| magnitude_db(z.norm() * h[0].norm())).collect();

    let mut table = Table::new(
        "model",
        &["rf_ghz", "probe_mag_db", "probe_phase_rad", "model_mag_db", "model_phase_rad"],
    );
    let mut mag_err: f64 = 0.0;
    let mut phase_err: f64 = 0.0;
    // Unwrapped traces may differ by whole turns at their start.
    let turn = ((probe.phase_rad[0] - model_phase[0]) / (2.0 * PI)).round() * 2.0 * PI;
    for i in 0..freqs.len() {
        mag_err = mag_err.max((probe.mag_db[i] - model_mag[i]).abs());
        phase_err = phase_err.max((probe.phase_rad[i] - model_phase[i] - turn).abs());
        table.rows.push(vec![
            freqs[i],
            probe.mag_db[i],
            probe.phase_rad[i],
            model_mag[i],
            model_phase[i],
        ]);
    }
    // Linear-phase region: straight-line fit over the channel interior.
    let (lo, hi) = spec.cross_band();
    let idx = in_band(&freqs, lo + spec.guard_ghz, hi - spec.guard_ghz);
    if idx.len() >= 2 {
        let xs: Vec<f64> = idx.iter().map(|&i| freqs[i]).collect();
        let ys: Vec<f64> = idx.iter().map(|&i| probe.phase_rad[i]).collect();
        let (mx, my) = (mean(&xs), mean(&ys));
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        let slope = sxy / sxx;
        let rms = (xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| (y - my - slope * (x - mx)).powi(2))
            .sum::<f64>()
            / xs.len() as f64)
            .sqrt();
        out.put("group_delay_ps", -slope / (2.0 * PI) * 1e3);
        out.put("interior_phase_rms_dev_rad", rms);
    }
    out.put("carrier_offset_ghz", offset);
    out.put("probe_model_max_mag_error_db", mag_err);
    out.put("probe_model_max_phase_error_rad", phase_err);
    out.traces.push(("probe".into(), probe));
    out.tables.push(table);
    Ok(out)
}

fn argmin(xs: &[f64], ys: &[f64]) -> f64 {
    let mut best = 0;
    for (i, y) in ys.iter().enumerate() {
        if *y < ys[best] {
            best = i;
        }
    }
    xs[best]
}

fn amplitude_tuning(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let mut out = ExperimentOutput::new(&cfg.name);
    let p_pi = cfg.p_pi()?;
    let rf = cfg.get("rf_ghz", 20.0)?;
    let phi_ref = cfg.get("reference_phase_rad", FRAC_PI_2)?;
    let powers = sweep_points(
        cfg.get("power_lo_mw", 35.0)?,
        cfg.get("power_hi_mw", 105.0)?,
        cfg.get("power_step_mw", 1.0)?,
    )?;
    let m = cfg.modulation_index()?;
    let format = ModulationFormat::pm(m);
    let link = LinkSpec::new(format, SHAPER_DETECTOR);
    let (reference, _) = link.reference(rf)?;

    let shaper = base_shaper(cfg, 2.0)?;
    let base = apply_overrides(&build_shaper(&shaper)?, cfg)?;
    let at_ref = base.with_heaters(&TuningVector::new().with(BAR_TC, phi_ref))?;
    let ps0 = if free_heaters(cfg, &[BAR_PS]).is_empty() {
        base.heater_value(BAR_PS)?
    } else {
        let l = link.clone();
        let objective = Objective::CustomScalar(Box::new(move |g: &CircuitGraph<f64>| {
            Ok(l.phasors(g, &[rf])?[0].norm())
        }));
        let r = optimize(&at_ref, &[BAR_PS.to_string()], &objective, &optimizer(cfg, 2000))?;
        r.best.get(BAR_PS).unwrap()
    };
    let parasitic = |phi: f64| -> Result<f64> {
        let bar = h_tunable_coupler(phi)?.bar();
        Ok(if bar.norm() > 0.0 { bar.arg() } else { 0.0 })
    };
    let ref_arg = parasitic(phi_ref)?;

    let spectrum = make_spectrum(&format, rf, Complex::new(1.0, 0.0))?;
    let grid = FrequencyGrid::new(DEFAULT_CARRIER_THZ, vec![-rf, 0.0, rf])?;
    let mut table = Table::new(
        "sweep",
        &[
            "heater_power_mw",
            "coupler_phase_rad",
            "carrier_db",
            "lower_db",
            "upper_db",
            "rf_db",
            "lower_comp_db",
            "rf_comp_db",
        ],
    );
    for p in &powers {
        let phi = heater_phase_from_power(*p, p_pi)?;
        let mut row = vec![*p, phi];
        for (k, ps) in [ps0, ps0 + parasitic(phi)? - ref_arg].into_iter().enumerate() {
            let g = base.with_heaters(&TuningVector::new().with(BAR_TC, phi).with(BAR_PS, ps))?;
            let h = g.evaluate(&grid)?;
            let h = h.port(SHAPER_DETECTOR)?;
            let tones = spectrum.filtered([h[0], h[1], h[2]]).tones();
            let db = |z: Complex<f64>| magnitude_db(z.norm()) ;
            let rf_db = magnitude_db(link.phasors(&g, &[rf])?[0].norm() / reference.norm());
            if k == 0 {
                row.extend([db(tones[1]), db(tones[0]), db(tones[2]), rf_db]);
            } else {
                row.extend([db(tones[0]), rf_db]);
            }
        }
        table.rows.push(row);
    }
    let col = |n: &str| table.column(n).unwrap();
    let sb_min = argmin(&powers, &col("lower_db"));
    let rf_min = argmin(&powers, &col("rf_db"));
    let sb_min_c = argmin(&powers, &col("lower_comp_db"));
    let rf_min_c = argmin(&powers, &col("rf_comp_db"));
    out.put("rf_ghz", rf);
    out.put("reference_phase_rad", phi_ref);
    out.put("calibrated_bar_ps_rad", wrap_phase(ps0));
    out.put("power_step_mw", powers.get(1).map_or(0.0, |x| x - powers[0]));
    out.put("sideband_min_mw", sb_min);
    out.put("rf_min_mw", rf_min);
    out.put("offset_mw", (rf_min - sb_min).abs());
    out.put("sideband_min_comp_mw", sb_min_c);
    out.put("rf_min_comp_mw", rf_min_c);
    out.put("offset_comp_mw", (rf_min_c - sb_min_c).abs());
    out.tables.push(table);
    Ok(out)
}

fn coupling_sweep(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let mut out = ExperimentOutput::new(&cfg.name);
    let steps = cfg.get("steps", 60.0)?;
    if !(steps >= 1.0) || steps.fract() != 0.0 {
        return Err(Error::config("steps must be a positive integer"));
    }
    let steps = steps as usize;
    let gamma = ring_round_trip(cfg.get("finesse", RING_FINESSE)?)?;
    let detune = 0.0;
    let ring = RingParams::all_pass(RING_FSR_GHZ, 0.0, gamma, detune)?;
    let graph = CircuitGraph::builder()
        .block(RING_AP, BlockParams::RingAllPass(ring))
        .input("in", "ring_ap.in")
        .output("out", "ring_ap.out")
        .build()?;
    let graph = apply_overrides(&graph, cfg)?;
    let grid = FrequencyGrid::new(DEFAULT_CARRIER_THZ, vec![detune, detune + RING_FSR_GHZ / 2.0])?;
    let heater = format!("{RING_AP}.kappa");
    let critical = critical_coupling_kappa(gamma)?;

    let mut table = Table::new(
        "coupling",
        &["kappa_phase_rad", "kappa", "rejection_db", "resonance_phase_rad", "regime"],
    );
    for i in 0..=steps {
        let phase = PI * i as f64 / steps as f64;
        let g = graph.with_heaters(&TuningVector::new().with(heater.clone(), phase))?;
        let h = g.evaluate(&grid)?;
        let h = h.port("out")?;
        let kappa = match &g.block(RING_AP).unwrap().params {
            BlockParams::RingAllPass(r) => r.kappa,
            _ => unreachable!(),
        };
        let c = (1.0 - kappa).sqrt();
        // -1 under-coupled, 0 critical, 1 over-coupled
        let regime = if (c - gamma).abs() < 1e-12 {
            0.0
        } else if c > gamma {
            -1.0
        } else {
            1.0
        };
        let rejection = magnitude_db(h[1].norm()) - magnitude_db(h[0].norm());
        table.rows.push(vec![phase, kappa, rejection, h[0].arg(), regime]);
    }
    let objective = Objective::CriticalCoupling {
        port: "out".into(),
        resonance_offset_ghz: detune,
    };
    let start = graph.with_heaters(&TuningVector::new().with(heater.clone(), FRAC_PI_2))?;
    let r = optimize(&start, std::slice::from_ref(&heater), &objective, &OptimizerConfig {
        tolerance: 1e-9,
        ..optimizer(cfg, 4000)
    })?;
    let phase = r.best.get(&heater).unwrap();
    let s = (phase / 2.0).sin();
    out.put("round_trip_amplitude", gamma);
    out.put("critical_kappa_closed_form", critical);
    out.put("critical_kappa_measured", s * s);
    out.put("critical_rejection_db", r.best_value);
    out.tables.push(table);
    Ok(out)
}
