//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test --test acceptance -- --nocapture` to see the report.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use mwp_shaper::analysis::{fit_round_trip_for_finesse, q_and_finesse};
use mwp_shaper::circuit::{BlockParams, CircuitGraph, FrequencyGrid};
use mwp_shaper::experiments::{run_experiment, ExperimentConfig};
use mwp_shaper::netlist::{load_netlist, parse_netlist, NetlistDocument};
use mwp_shaper::rf::{
    detect_rf_phasor, make_spectrum, time_domain_oracle, DetectorParams, ModulatedSpectrum,
    ModulationFormat,
};
use mwp_shaper::transfer::{
    critical_coupling_kappa, h_phase_shifter, h_ring_allpass, h_tunable_coupler, PhaseShifterState,
    RingParams,
};
use mwp_shaper::tuner::{compensate_coupler_phase, optimize, Objective, OptimizerConfig};
use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;
type Criterion = (u32, &'static str, fn() -> Check, Duration);

fn ensure(ok: bool, msg: String) -> Check {
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn c(re: f64, im: f64) -> Complex<f64> {
    Complex::new(re, im)
}

fn random_spectrum(rng: &mut ChaCha8Rng) -> ModulatedSpectrum<f64> {
    let tone = |rng: &mut ChaCha8Rng| {
        Complex::from_polar(rng.gen_range(0.01..2.0), rng.gen_range(-PI..PI))
    };
    let (a, b, d) = (tone(rng), tone(rng), tone(rng));
    ModulatedSpectrum::new(rng.gen_range(1.0..30.0), a, b, d).unwrap()
}

fn criterion_1() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let det = DetectorParams::default();
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let s = random_spectrum(&mut rng);
        let a = detect_rf_phasor(&s, &det);
        let b = time_domain_oracle(&s, &det);
        worst = worst.max((a - b).norm() / b.norm());
    }
    ensure(worst <= 1e-9, format!("max relative error {worst:.3e} over 100 spectra (limit 1e-9)"))
}

fn criterion_2() -> Check {
    let det = DetectorParams::default();
    let mut worst_pm: f64 = 0.0;
    for (k, m) in [0.01, 0.1, 0.3, 0.7].iter().enumerate() {
        let carrier = 0.5 + k as f64;
        let s = make_spectrum(&ModulationFormat::pm(*m), 10.0, c(carrier, 0.0)).unwrap();
        worst_pm = worst_pm.max(detect_rf_phasor(&s, &det).norm() / (carrier * carrier));
    }
    // Brute force over sideband phases at fixed magnitudes.
    let (em, ec, ep) = (0.3, 1.0, 0.2);
    let mut best = (0.0, 0, 0);
    let n = 64;
    for i in 0..n {
        for j in 0..n {
            let pm = 2.0 * PI * i as f64 / n as f64;
            let pp = 2.0 * PI * j as f64 / n as f64;
            let s = ModulatedSpectrum::new(
                10.0,
                Complex::from_polar(em, pm),
                c(ec, 0.0),
                Complex::from_polar(ep, pp),
            )
            .unwrap();
            let v = detect_rf_phasor(&s, &det).norm();
            if v > best.0 + 1e-12 {
                best = (v, i, j);
            }
        }
    }
    let im = make_spectrum(&ModulationFormat::custom(c(em, 0.0), c(ep, 0.0)), 10.0, c(ec, 0.0)).unwrap();
    let im_val = detect_rf_phasor(&im, &det).norm();
    let ok = worst_pm <= 1e-15 && (best.1, best.2) == (0, 0) && (im_val - best.0).abs() < 1e-12;
    ensure(
        ok,
        format!(
            "PM |P|/carrier power {worst_pm:.1e}; brute-force max at phase cells ({}, {}), IM value {im_val:.6} vs max {:.6}",
            best.1, best.2, best.0
        ),
    )
}

/// Extinction and -3 dB widths measured directly on a de-interleaver graph.
fn deinterleaver_metrics(graph: &CircuitGraph<f64>) -> (f64, f64, f64) {
    let grid = FrequencyGrid::sweep(-30.0, 30.0, 0.01).unwrap();
    let r = graph.evaluate(&grid).unwrap();
    let f = &grid.offsets_ghz;
    let bar: Vec<f64> = r.port("bar").unwrap().iter().map(|z| z.norm_sqr()).collect();
    let cross: Vec<f64> = r.port("cross").unwrap().iter().map(|z| z.norm_sqr()).collect();
    let sel = |p: &[f64], lo: f64, hi: f64| -> Vec<f64> {
        f.iter().zip(p).filter(|(x, _)| **x >= lo && **x <= hi).map(|(_, v)| *v).collect()
    };
    let ext = |pass: &[f64], stop: &[f64]| {
        let min_pass = pass.iter().copied().fold(f64::INFINITY, f64::min);
        let max_stop = stop.iter().copied().fold(0.0, f64::max);
        10.0 * (min_pass / max_stop).log10()
    };
    // Channel interiors with a 3 GHz guard: bar [-27, -3], cross [3, 27].
    let e_bar = ext(&sel(&bar, -27.0, -3.0), &sel(&bar, 3.0, 27.0));
    let e_cross = ext(&sel(&cross, 3.0, 27.0), &sel(&cross, -27.0, -3.0));
    let width = |p: &[f64], center: f64| {
        let peak = p.iter().copied().fold(0.0, f64::max);
        let level = peak * 10f64.powf(-0.3);
        let k = f.iter().position(|x| (*x - center).abs() < 0.005).unwrap();
        let (mut l, mut r) = (k, k);
        while l > 0 && p[l - 1] >= level {
            l -= 1;
        }
        while r + 1 < p.len() && p[r + 1] >= level {
            r += 1;
        }
        let interp = |i: usize, j: usize| f[i] + (level - p[i]) * (f[j] - f[i]) / (p[j] - p[i]);
        interp(r, r + 1) - interp(l - 1, l)
    };
    (e_bar.min(e_cross), width(&bar, -15.0), width(&cross, 15.0))
}

fn criterion_3() -> Check {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("tuned.net");
    let code = mwp_shaper::cli::run([
        "mwp-shaper",
        "optimize",
        "preset:deinterleaver",
        "--objective",
        "deinterleaver-extinction",
        "--seed",
        "0",
        "--out",
        out.to_str().unwrap(),
    ]);
    if code != 0 {
        return Err(format!("optimize exited with {code}"));
    }
    let (_, graph) = load_netlist(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let (ext, wb, wc) = deinterleaver_metrics(&graph);
    let ok = ext >= 20.0 && (wb - 30.0).abs() <= 3.0 && (wc - 30.0).abs() <= 3.0;
    ensure(
        ok,
        format!("extinction {ext:.2} dB (>= 20), -3 dB widths bar {wb:.2} / cross {wc:.2} GHz (30 +/- 3)"),
    )
}

/// Finesse of a critically coupled all-pass ring from its closed-form
/// half-depth points: cos(phi) = 2a^2 / (1 + a^4).
fn oracle_finesse(a: f64) -> f64 {
    PI / (2.0 * a * a / (1.0 + a.powi(4))).acos()
}

fn criterion_4() -> Check {
    let fsr = 50.0;
    let gamma = fit_round_trip_for_finesse(17.6, fsr).unwrap();
    let (mut lo, mut hi) = (0.5, 0.999_999);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if oracle_finesse(mid) < 17.6 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let gamma_oracle = 0.5 * (lo + hi);
    let ring = RingParams::all_pass(fsr, critical_coupling_kappa(gamma).unwrap(), gamma, 0.0).unwrap();
    let f: Vec<f64> = (0..=20_000).map(|i| -25.0 + 50.0 * i as f64 / 20_000.0).collect();
    let p: Vec<f64> = f.iter().map(|x| h_ring_allpass(*x, &ring).unwrap().norm_sqr()).collect();
    let m = q_and_finesse(&f, &p, 0.0, fsr, 193.4).unwrap();
    let ok = (m.q / 68_000.0 - 1.0).abs() <= 0.05
        && (m.finesse / 17.6 - 1.0).abs() <= 0.05
        && (gamma - gamma_oracle).abs() < 1e-4;
    ensure(
        ok,
        format!(
            "gamma {gamma:.6} (closed-form root {gamma_oracle:.6}), Q {:.0} (68000 +/- 5%), finesse {:.3} (17.6 +/- 5%)",
            m.q, m.finesse
        ),
    )
}

fn band_extinction(out: &mwp_shaper::experiments::ExperimentOutput) -> f64 {
    let im = out.trace("im").unwrap();
    let pm = out.trace("pm").unwrap();
    im.rf_freqs_ghz
        .iter()
        .enumerate()
        .filter(|(_, f)| **f >= 15.0 - 1e-9 && **f <= 25.0 + 1e-9)
        .map(|(i, _)| im.mag_db[i] - pm.mag_db[i])
        .fold(f64::INFINITY, f64::min)
}

fn criterion_5() -> Check {
    let a = run_experiment(&ExperimentConfig::new("im2pm")).unwrap();
    let b = run_experiment(&ExperimentConfig::new("pm2im")).unwrap();
    let (ea, eb) = (band_extinction(&a), band_extinction(&b));
    let strict = b.number("strict_target_extinction_db");
    let ok = ea >= 15.0 && eb >= 15.0 && strict == Some(20.0);
    ensure(
        ok,
        format!("im2pm {ea:.2} dB, pm2im {eb:.2} dB over 15-25 GHz (>= 15); strict target recorded: {strict:?}"),
    )
}

/// Depth of the deepest point within +/-10 GHz of 15 GHz below the highest point there.
fn local_depth(t: &mwp_shaper::rf::RfResponse<f64>) -> f64 {
    let v: Vec<f64> = t
        .rf_freqs_ghz
        .iter()
        .zip(&t.mag_db)
        .filter(|(f, _)| (**f - 15.0).abs() <= 10.0 + 1e-9)
        .map(|(_, m)| *m)
        .collect();
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = v.iter().copied().fold(f64::INFINITY, f64::min);
    max - min
}

fn criterion_6() -> Check {
    let ssb = run_experiment(&ExperimentConfig::new("ssb_notch")).unwrap();
    let cancel = run_experiment(&ExperimentConfig::new("cancel_notch")).unwrap();
    let d_ssb = local_depth(ssb.trace("ssb").unwrap());
    let d_cancel = local_depth(cancel.trace("cancel").unwrap());
    let ok = (d_ssb - 7.0).abs() <= 1.0 && d_cancel >= 38.0 && d_cancel - d_ssb >= 30.0;
    ensure(
        ok,
        format!(
            "SSB notch {d_ssb:.2} dB (7 +/- 1), cancellation notch {d_cancel:.1} dB (>= 38), enhancement {:.1} dB (>= 30)",
            d_cancel - d_ssb
        ),
    )
}

fn criterion_7() -> Check {
    let out = run_experiment(&ExperimentConfig::new("bandpass_tune")).unwrap();
    let mut msg = Vec::new();
    let mut ok = true;
    for d in [8.0, 12.0, 16.0, 20.0] {
        let t = out.trace(&format!("detune_{d}")).unwrap();
        let step = t.rf_freqs_ghz[1] - t.rf_freqs_ghz[0];
        // Cross channel starts 2 GHz above the carrier; skip a 3 GHz guard.
        let (mut fp, mut best) = (0.0_f64, f64::NEG_INFINITY);
        for (f, m) in t.rf_freqs_ghz.iter().zip(&t.mag_db) {
            if *f >= 5.0 && *m > best {
                best = *m;
                fp = *f;
            }
        }
        ok &= (fp - d).abs() <= step * (1.0 + 1e-9);
        msg.push(format!("{d}->{fp:.2}"));
    }
    ensure(ok, format!("peaks (detune->peak GHz) {} within one 0.1 GHz step", msg.join(", ")))
}

fn criterion_8() -> Check {
    let mut worst_p: f64 = 0.0;
    let mut worst_phase: f64 = 0.0;
    for i in 0..100 {
        let target = i as f64 / 99.0;
        let (phi, comp) = compensate_coupler_phase(target).unwrap();
        let bar = h_tunable_coupler(phi).unwrap().bar();
        worst_p = worst_p.max((bar.norm_sqr() - target).abs());
        if target > 0.0 {
            // Phase shifter applying the compensation sits at heater phase -comp.
            let net = h_phase_shifter(-comp).unwrap() * bar;
            worst_phase = worst_phase.max(net.arg().abs());
        }
    }
    let out = run_experiment(&ExperimentConfig::new("amplitude_tuning")).unwrap();
    let t = out.table("sweep").unwrap();
    let p = t.column("heater_power_mw").unwrap();
    let step = p[1] - p[0];
    let argmin = |col: &str| {
        let v = t.column(col).unwrap();
        let mut k = 0;
        for i in 0..v.len() {
            if v[i] < v[k] {
                k = i;
            }
        }
        p[k]
    };
    let off = (argmin("rf_db") - argmin("lower_db")).abs();
    let off_c = (argmin("rf_comp_db") - argmin("lower_comp_db")).abs();
    let ok = worst_p <= 1e-12 && worst_phase <= 1e-12 && off > step && off_c <= step;
    ensure(
        ok,
        format!(
            "round trip power err {worst_p:.1e}, net phase err {worst_phase:.1e}; RF-min offset {off} mW uncompensated, {off_c} mW compensated (step {step} mW)"
        ),
    )
}

fn criterion_9() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut fails = Vec::new();
    // Unitarity / energy bounds.
    for _ in 0..200 {
        let phi = rng.gen_range(-10.0..10.0);
        if h_tunable_coupler(phi).unwrap().unitarity_error() > 1e-12 {
            fails.push("unitarity");
            break;
        }
    }
    // Ring periodicity and all-pass unit magnitude.
    for _ in 0..200 {
        let ring = RingParams::all_pass(
            rng.gen_range(5.0..100.0),
            rng.gen_range(0.0..1.0),
            1.0,
            rng.gen_range(-20.0..20.0),
        )
        .unwrap();
        let f: f64 = rng.gen_range(-100.0..100.0);
        let (h, hp) = match (h_ring_allpass(f, &ring), h_ring_allpass(f + ring.fsr_ghz, &ring)) {
            (Ok(a), Ok(b)) => (a, b),
            _ => continue,
        };
        if (h - hp).norm() > 1e-9 {
            fails.push("periodicity");
            break;
        }
        if (h.norm() - 1.0).abs() > 1e-12 {
            fails.push("all-pass magnitude");
            break;
        }
    }
    // Cascade equivalence.
    for _ in 0..50 {
        let n = rng.gen_range(1..=8);
        let mut b = CircuitGraph::builder();
        let mut prev: Option<String> = None;
        let mut parts = Vec::new();
        for i in 0..n {
            let id = format!("b{i}");
            let p = if rng.gen_bool(0.5) {
                BlockParams::PhaseShifter(PhaseShifterState::from_phase(rng.gen_range(0.0..6.3)))
            } else {
                BlockParams::RingAllPass(
                    RingParams::all_pass(50.0, rng.gen_range(0.0..0.9), rng.gen_range(0.5..0.99), rng.gen_range(-25.0..25.0))
                        .unwrap(),
                )
            };
            parts.push(p.clone());
            b = b.block(&id, p);
            match &prev {
                Some(pid) => b = b.connect(&format!("{pid}.out"), &format!("{id}.in")),
                None => b = b.input("in", &format!("{id}.in")),
            }
            prev = Some(id);
        }
        let g = b.output("out", &format!("{}.out", prev.unwrap())).build().unwrap();
        let grid = FrequencyGrid::sweep(-30.0, 30.0, 1.5).unwrap();
        let r = g.evaluate(&grid).unwrap();
        for (k, f) in grid.offsets_ghz.iter().enumerate() {
            let mut h = c(1.0, 0.0);
            for p in &parts {
                h *= match p {
                    BlockParams::PhaseShifter(s) => h_phase_shifter(s.phase_rad).unwrap(),
                    BlockParams::RingAllPass(rp) => h_ring_allpass(*f, rp).unwrap(),
                    _ => unreachable!(),
                };
            }
            if (r.port("out").unwrap()[k] - h).norm() > 1e-12 {
                fails.push("cascade");
                break;
            }
        }
    }
    // Parse-print-parse on the shipped netlists.
    for name in mwp_shaper::netlist::PRESET_NETLISTS {
        let text = mwp_shaper::netlist::preset_netlist(name).unwrap();
        let doc = parse_netlist(&text).unwrap();
        let printed = doc.to_string();
        if parse_netlist(&printed).unwrap() != doc || printed != text {
            fails.push("parse-print-parse");
        }
        let g = doc.to_graph().unwrap();
        if NetlistDocument::from_graph(&g).blocks != doc.blocks {
            fails.push("graph round trip");
        }
    }
    // CSV byte determinism.
    let a = run_experiment(&ExperimentConfig::new("ssb_notch")).unwrap();
    let b = run_experiment(&ExperimentConfig::new("ssb_notch")).unwrap();
    let csv = |o: &mwp_shaper::experiments::ExperimentOutput| {
        mwp_shaper::netlist::csv::rf_csv(o.trace("ssb").unwrap())
    };
    if csv(&a) != csv(&b) {
        fails.push("csv determinism");
    }
    // Optimizer seed determinism.
    let ring = RingParams::all_pass(50.0, 0.5, 0.9, 0.0).unwrap();
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
    let cfg = OptimizerConfig {
        seed: 42,
        max_evals: 2000,
        ..OptimizerConfig::default()
    };
    let r1 = optimize(&g, &[], &obj, &cfg).unwrap();
    let r2 = optimize(&g, &[], &obj, &cfg).unwrap();
    if r1 != r2 {
        fails.push("optimizer determinism");
    }
    ensure(
        fails.is_empty(),
        if fails.is_empty() {
            "unitarity, periodicity, all-pass magnitude, cascade (1e-12), parse-print-parse, CSV bytes, optimizer seed: all green; full proptest suites in tests/properties.rs".into()
        } else {
            format!("failing: {}", fails.join(", "))
        },
    )
}

#[test]
fn acceptance() {
    let criteria: [Criterion; 9] = [
        (1, "oracle equivalence", criterion_1, Duration::from_secs(5)),
        (2, "PM null / IM max", criterion_2, Duration::from_secs(10)),
        (3, "de-interleaver targets", criterion_3, Duration::from_secs(60)),
        (4, "ring figures of merit", criterion_4, Duration::from_secs(5)),
        (5, "IM/PM conversion", criterion_5, Duration::from_secs(30)),
        (6, "notch enhancement", criterion_6, Duration::from_secs(30)),
        (7, "bandpass tuning", criterion_7, Duration::from_secs(60)),
        (8, "parasitic-phase compensation", criterion_8, Duration::from_secs(60)),
        (9, "property suites", criterion_9, Duration::from_secs(120)),
    ];
    let mut failed = Vec::new();
    for (n, name, f, limit) in criteria {
        let t = Instant::now();
        let result = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let dt = t.elapsed();
        let (ok, msg) = match result {
            Ok(m) if dt <= limit => (true, m),
            Ok(m) => (false, format!("{m}; too slow")),
            Err(m) => (false, m),
        };
        println!(
            "{} criterion {n} ({name}): {msg} [{:.2} s, limit {} s]",
            if ok { "PASS" } else { "FAIL" },
            dt.as_secs_f64(),
            limit.as_secs()
        );
        if !ok {
            failed.push(n);
        }
    }
    assert!(failed.is_empty(), "failing criteria: {failed:?}");
}
