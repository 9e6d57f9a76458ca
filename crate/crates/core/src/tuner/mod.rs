//! Heater tuning: seeded multi-start simplex search over wrapped phases.

mod nelder_mead;

use std::fmt;

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use crate::circuit::TuningVector;
pub use nelder_mead::{maximize, Convergence, SimplexOutcome};

use crate::analysis::extinction_db;
use crate::circuit::{
    build_deinterleaver, CircuitGraph, DeinterleaverHeaters, DeinterleaverSpec, FrequencyGrid, BAR_PS,
    BAR_TC, DEINTERLEAVER_BAR, DEINTERLEAVER_CROSS,
};
use crate::error::{Error, Result};
use crate::rf::LinkSpec;
use crate::scalar::{wrap_phase, Scalar};
use crate::transfer::h_tunable_coupler;

/// Objective values are clipped to this many dB so exact nulls stay finite.
pub const OBJECTIVE_CAP_DB: f64 = 300.0;

fn ratio_db<T: Scalar>(num: T, den: T) -> T {
    let cap = T::lit(OBJECTIVE_CAP_DB);
    if !(den > T::zero()) {
        return cap;
    }
    (T::lit(10.0) * (num / den).log10()).min(cap).max(-cap)
}

/// Quantity to maximize, in dB for the built-in kinds.
pub type ScalarFn<T> = Box<dyn Fn(&CircuitGraph<T>) -> Result<T> + Send + Sync>;

pub enum Objective<T: Scalar> {
    /// Worst of bar and cross extinction between the channel interiors of `spec`.
    DeinterleaverExtinction { spec: DeinterleaverSpec<T>, step_ghz: T },
    /// RF notch depth at `notch_ghz` below the strongest of `reference_ghz`.
    NotchDepth {
        link: LinkSpec<T>,
        notch_ghz: T,
        reference_ghz: Vec<T>,
    },
    /// Smallest RF level difference over `freqs_ghz` between the current state
    /// and the state with `toggle_heater` advanced by pi (either sign).
    ConversionExtinction {
        link: LinkSpec<T>,
        freqs_ghz: Vec<T>,
        toggle_heater: String,
    },
    /// On-resonance rejection of `port`.
    CriticalCoupling { port: String, resonance_offset_ghz: T },
    CustomScalar(ScalarFn<T>),
}

impl<T: Scalar> fmt::Debug for Objective<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl<T: Scalar> Objective<T> {
    pub fn name(&self) -> &'static str {
        match self {
            Objective::DeinterleaverExtinction { .. } => "deinterleaver_extinction",
            Objective::NotchDepth { .. } => "notch_depth",
            Objective::ConversionExtinction { .. } => "conversion_extinction",
            Objective::CriticalCoupling { .. } => "critical_coupling",
            Objective::CustomScalar(_) => "custom_scalar",
        }
    }

    pub fn evaluate(&self, graph: &CircuitGraph<T>) -> Result<T> {
        match self {
            Objective::DeinterleaverExtinction { spec, step_ghz } => {
                deinterleaver_extinction(graph, spec, *step_ghz)
            }
            Objective::NotchDepth {
                link,
                notch_ghz,
                reference_ghz,
            } => {
                let mut freqs = vec![*notch_ghz];
                freqs.extend(reference_ghz.iter().copied());
                let p = link.phasors(graph, &freqs)?;
                let reference = p[1..].iter().map(|z| z.norm_sqr()).fold(T::zero(), T::max);
                Ok(ratio_db(reference, p[0].norm_sqr()))
            }
            Objective::ConversionExtinction {
                link,
                freqs_ghz,
                toggle_heater,
            } => {
                let a = link.phasors(graph, freqs_ghz)?;
                let phase = graph.heater_value(toggle_heater)?;
                let flipped = graph.with_heaters(
                    &TuningVector::new().with(toggle_heater.clone(), phase + T::PI()),
                )?;
                let b = link.phasors(&flipped, freqs_ghz)?;
                let mut up = T::infinity();
                let mut down = T::infinity();
                for (x, y) in a.iter().zip(&b) {
                    let d = ratio_db(x.norm_sqr(), y.norm_sqr());
                    up = up.min(d);
                    down = down.min(-d);
                }
                Ok(up.max(down))
            }
            Objective::CriticalCoupling {
                port,
                resonance_offset_ghz,
            } => {
                let grid = FrequencyGrid::new(T::lit(crate::circuit::DEFAULT_CARRIER_THZ), vec![
                    *resonance_offset_ghz,
                ])?;
                let r = graph.evaluate(&grid)?;
                Ok(ratio_db(T::one(), r.port(port)?[0].norm_sqr()))
            }
            Objective::CustomScalar(f) => f(graph),
        }
    }
}

/// Extinction of a de-interleaver graph (ports `bar`/`cross`) measured over one period.
pub fn deinterleaver_extinction<T: Scalar>(
    graph: &CircuitGraph<T>,
    spec: &DeinterleaverSpec<T>,
    step_ghz: T,
) -> Result<T> {
    let lo = spec.crossover_ghz - spec.passband_ghz;
    let hi = spec.crossover_ghz + spec.passband_ghz;
    let grid = FrequencyGrid::sweep(lo, hi, step_ghz)?;
    let r = graph.evaluate(&grid)?;
    let bar = r.port_power(DEINTERLEAVER_BAR)?;
    let cross = r.port_power(DEINTERLEAVER_CROSS)?;
    let f = &grid.offsets_ghz;
    let cap = T::lit(OBJECTIVE_CAP_DB);
    let e_bar = extinction_db(f, &bar, spec.bar_band(), spec.cross_band())?.min(cap);
    let e_cross = extinction_db(f, &cross, spec.cross_band(), spec.bar_band())?.min(cap);
    Ok(e_bar.min(e_cross))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    /// Total evaluation budget, split evenly over the restarts.
    pub max_evals: usize,
    pub restarts: usize,
    pub tolerance: f64,
    pub window: usize,
    pub seed: u64,
    /// Edge length of the initial simplex, rad.
    pub initial_step: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            max_evals: 10_000,
            restarts: 8,
            tolerance: 1e-6,
            window: 50,
            seed: 0,
            initial_step: 0.5,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_evals == 0 || self.restarts == 0 || self.window == 0 {
            return Err(Error::config("optimizer budgets must be positive"));
        }
        if !(self.tolerance > 0.0) || !(self.initial_step > 0.0) {
            return Err(Error::config("tolerance and initial step must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RestartTrace<T> {
    pub start: Vec<T>,
    pub value: T,
    pub evals: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuningResult<T> {
    /// Wrapped heater phases of the best point.
    pub best: TuningVector<T>,
    pub best_value: T,
    pub evals: usize,
    /// Whether the restart that produced the best point met the convergence rule.
    pub converged: bool,
    pub restarts: Vec<RestartTrace<T>>,
}

impl<T: Scalar> TuningResult<T> {
    pub fn apply(&self, graph: &CircuitGraph<T>) -> Result<CircuitGraph<T>> {
        graph.with_heaters(&self.best)
    }
}

/// Maximizes `objective` over the named heaters (all exposed heaters when empty).
pub fn optimize<T: Scalar>(
    graph: &CircuitGraph<T>,
    heaters: &[String],
    objective: &Objective<T>,
    config: &OptimizerConfig,
) -> Result<TuningResult<T>> {
    config.validate()?;
    let mut names: Vec<String> = if heaters.is_empty() {
        graph.heaters().iter().map(|h| h.name.clone()).collect()
    } else {
        heaters.to_vec()
    };
    names.sort();
    names.dedup();
    if names.is_empty() {
        return Err(Error::config("circuit exposes no heaters to tune"));
    }
    let x0: Vec<T> = names
        .iter()
        .map(|n| graph.heater_value(n))
        .collect::<Result<_>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let starts: Vec<Vec<T>> = (0..config.restarts)
        .map(|r| {
            if r == 0 {
                x0.clone()
            } else {
                (0..names.len())
                    .map(|_| T::lit(rng.gen_range(0.0..std::f64::consts::TAU)))
                    .collect()
            }
        })
        .collect();
    let per_restart = (config.max_evals / config.restarts).max(1);
    let conv = Convergence {
        tolerance: T::lit(config.tolerance),
        window: config.window,
    };
    let floor = T::lit(-1e30);
    let evaluate = |x: &[T]| -> T {
        let mut v = TuningVector::new();
        for (n, p) in names.iter().zip(x) {
            v.set(n.clone(), wrap_phase(*p));
        }
        match graph.with_heaters(&v).and_then(|g| objective.evaluate(&g)) {
            Ok(val) if val.is_finite() => val,
            Ok(val) if val > T::zero() => T::lit(OBJECTIVE_CAP_DB),
            _ => floor,
        }
    };

    let outcomes: Vec<SimplexOutcome<T>> = std::thread::scope(|s| {
        let handles: Vec<_> = starts
            .iter()
            .map(|x| {
                let evaluate = &evaluate;
                s.spawn(move || maximize(evaluate, x, T::lit(config.initial_step), per_restart, conv))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("restart panicked")).collect()
    });

    let mut best_idx = 0;
    for (i, o) in outcomes.iter().enumerate() {
        if o.value > outcomes[best_idx].value {
            best_idx = i;
        }
    }
    let best_out = &outcomes[best_idx];
    let mut best = TuningVector::new();
    for (n, p) in names.iter().zip(&best_out.x) {
        best.set(n.clone(), wrap_phase(*p));
    }
    Ok(TuningResult {
        best,
        best_value: best_out.value,
        evals: outcomes.iter().map(|o| o.evals).sum(),
        converged: best_out.converged,
        restarts: starts
            .into_iter()
            .zip(&outcomes)
            .map(|(start, o)| RestartTrace {
                start,
                value: o.value,
                evals: o.evals,
                converged: o.converged,
            })
            .collect(),
    })
}

/// Tunes the de-interleaver heaters for extinction; returns the spec with the
/// tuned heaters (crossover unchanged).
pub fn tune_deinterleaver<T: Scalar>(
    spec: &DeinterleaverSpec<T>,
    config: &OptimizerConfig,
) -> Result<(DeinterleaverSpec<T>, TuningResult<T>)> {
    let centred = spec.with_crossover(T::zero());
    let graph = build_deinterleaver(&centred)?;
    let objective = Objective::DeinterleaverExtinction {
        spec: centred,
        step_ghz: T::lit(0.25),
    };
    let result = optimize(&graph, &DeinterleaverSpec::<T>::tuning_heaters(), &objective, config)?;
    let tuned = result.apply(&graph)?;
    let heaters = DeinterleaverHeaters::from_graph(&tuned, &centred)?;
    Ok((spec.with_heaters(heaters), result))
}

/// Tunable-coupler setting for a bar-port power `target_bar_power`, and the
/// phase rotation `-arg(bar)` that removes the coupler's parasitic phase.
/// A phase shifter applies that rotation at heater phase `-compensating_phase`.
pub fn compensate_coupler_phase<T: Scalar>(target_bar_power: T) -> Result<(T, T)> {
    if !(target_bar_power >= T::zero() && target_bar_power <= T::one()) {
        return Err(Error::domain(format!(
            "target bar power {target_bar_power} outside [0, 1]"
        )));
    }
    let phi = T::lit(2.0) * target_bar_power.sqrt().asin();
    if target_bar_power == T::zero() {
        return Ok((phi, T::zero()));
    }
    let bar = h_tunable_coupler(phi)?.bar();
    Ok((phi, -bar.arg()))
}

/// Bar-path settings that attenuate the isolated sideband by the optical notch
/// depth and rotate it by pi.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CancellationSettings<T> {
    pub amplitude_ratio: T,
    pub net_phase: T,
    pub coupler_phase: T,
    pub phase_shifter_phase: T,
}

impl<T: Scalar> CancellationSettings<T> {
    pub fn tuning_vector(&self) -> TuningVector<T> {
        TuningVector::new()
            .with(BAR_TC, self.coupler_phase)
            .with(BAR_PS, self.phase_shifter_phase)
    }

    /// Net bar-path transfer of the phase shifter and coupler.
    pub fn bar_transfer(&self) -> Result<Complex<T>> {
        let ps = crate::transfer::h_phase_shifter(self.phase_shifter_phase)?;
        Ok(ps * h_tunable_coupler(self.coupler_phase)?.bar())
    }
}

pub fn synthesize_cancellation_settings<T: Scalar>(optical_notch_depth_db: T) -> Result<CancellationSettings<T>> {
    if !(optical_notch_depth_db >= T::zero()) {
        return Err(Error::domain("notch depth must be >= 0 dB"));
    }
    let r = T::lit(10.0).powf(-optical_notch_depth_db / T::lit(20.0));
    let (coupler, comp) = compensate_coupler_phase(r * r)?;
    Ok(CancellationSettings {
        amplitude_ratio: r,
        net_phase: T::PI(),
        coupler_phase: coupler,
        phase_shifter_phase: wrap_phase(T::PI() - comp),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::BlockParams;
    use crate::transfer::{critical_coupling_kappa, h_phase_shifter, PhaseShifterState, RingParams};
    use std::f64::consts::PI;

    fn one_ps() -> CircuitGraph<f64> {
        CircuitGraph::builder()
            .block("p", BlockParams::PhaseShifter(PhaseShifterState::from_phase(0.0)))
            .input("in", "p.in")
            .output("out", "p.out")
            .build()
            .unwrap()
    }

    #[test]
    fn quadratic_toy_converges() {
        let obj = Objective::CustomScalar(Box::new(|g: &CircuitGraph<f64>| {
            let x = g.heater_value("p")?;
            Ok(-(x - 1.0) * (x - 1.0))
        }));
        let r = optimize(&one_ps(), &[], &obj, &OptimizerConfig::default()).unwrap();
        assert!((r.best.get("p").unwrap() - 1.0).abs() < 1e-4);
        assert!(r.converged);
        assert!(r.restarts.iter().all(|t| t.value <= r.best_value));
    }

    #[test]
    fn zero_heaters_is_config_error() {
        let g = CircuitGraph::builder()
            .block("c", BlockParams::Coupler3db)
            .input("in", "c.in1")
            .output("out", "c.out1")
            .build()
            .unwrap();
        let obj = Objective::CustomScalar(Box::new(|_: &CircuitGraph<f64>| Ok(0.0)));
        assert!(matches!(
            optimize(&g, &[], &obj, &OptimizerConfig::default()),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn critical_coupling_found() {
        let gamma = 0.93_f64;
        let ring = RingParams::all_pass(50.0, 0.5, gamma, 0.0).unwrap();
        let g = CircuitGraph::builder()
            .block("r", BlockParams::RingAllPass(ring))
            .input("in", "r.in")
            .output("out", "r.out")
            .build()
            .unwrap();
        let obj = Objective::CriticalCoupling {
            port: "out".into(),
            resonance_offset_ghz: 0.0,
        };
        let r = optimize(&g, &["r.kappa".into()], &obj, &OptimizerConfig::default()).unwrap();
        let tuned = r.apply(&g).unwrap();
        let kappa = match &tuned.block("r").unwrap().params {
            BlockParams::RingAllPass(p) => p.kappa,
            _ => unreachable!(),
        };
        assert!((kappa - critical_coupling_kappa(gamma).unwrap()).abs() < 1e-3);
    }

    #[test]
    fn compensation_examples() {
        assert_eq!(compensate_coupler_phase(0.0).unwrap(), (0.0, 0.0));
        let (phi, comp) = compensate_coupler_phase(1.0).unwrap();
        assert!((phi - PI).abs() < 1e-15 && comp.abs() < 1e-15);
        let (phi, comp) = compensate_coupler_phase(0.5).unwrap();
        assert!((phi - PI / 2.0).abs() < 1e-15 && (comp + PI / 4.0).abs() < 1e-15);
        assert!(compensate_coupler_phase(1.5).is_err());
        let a = h_phase_shifter(-comp).unwrap() * h_tunable_coupler(phi).unwrap().bar();
        assert!((a.norm_sqr() - 0.5).abs() < 1e-12 && a.arg().abs() < 1e-12);
    }

    #[test]
    fn cancellation_examples() {
        let s = synthesize_cancellation_settings(7.0_f64).unwrap();
        assert!((s.amplitude_ratio - 0.4467).abs() < 1e-4);
        let h = s.bar_transfer().unwrap();
        assert!((h.norm() - s.amplitude_ratio).abs() < 1e-12);
        assert!((h.arg().abs() - PI).abs() < 1e-12);
        let z = synthesize_cancellation_settings(0.0).unwrap();
        assert!((z.bar_transfer().unwrap() + 1.0).norm() < 1e-12);
    }

    #[test]
    fn seed_and_order_determinism() {
        let ring = RingParams::all_pass(50.0, 0.5, 0.93, 3.0).unwrap();
        let g = CircuitGraph::builder()
            .block("r", BlockParams::RingAllPass(ring))
            .block("p", BlockParams::PhaseShifter(PhaseShifterState::from_phase(0.3)))
            .connect("r.out", "p.in")
            .input("in", "r.in")
            .output("out", "p.out")
            .build()
            .unwrap();
        let obj = Objective::CustomScalar(Box::new(|g: &CircuitGraph<f64>| {
            let r = g.evaluate(&FrequencyGrid::new(193.4, vec![-4.0, 1.0]).unwrap())?;
            let h = r.port("out")?;
            Ok(-(h[0] - Complex::new(0.2, 0.1)).norm() - (h[1] - Complex::new(0.0, -0.5)).norm())
        }));
        let cfg = OptimizerConfig {
            max_evals: 2000,
            seed: 7,
            ..OptimizerConfig::default()
        };
        let names = vec!["r.kappa".to_string(), "r.detune".into(), "p".into()];
        let mut rev = names.clone();
        rev.reverse();
        let a = optimize(&g, &names, &obj, &cfg).unwrap();
        let b = optimize(&g, &rev, &obj, &cfg).unwrap();
        assert_eq!(a, b);
        let bigger = OptimizerConfig {
            max_evals: 4000,
            ..cfg
        };
        assert!(optimize(&g, &names, &obj, &bigger).unwrap().best_value >= a.best_value);
    }
}
