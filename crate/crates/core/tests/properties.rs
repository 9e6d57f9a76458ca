use std::f64::consts::PI;

use mwp_shaper::circuit::{BlockParams, CircuitGraph, FrequencyGrid};
use mwp_shaper::netlist::csv::{format_number, parse_csv, rf_csv};
use mwp_shaper::netlist::{parse_netlist, NetlistDocument};
use mwp_shaper::rf::{
    detect_rf_phasor, make_spectrum, rf_transmission_sweep, DetectorParams, LinkSpec,
    ModulatedSpectrum, ModulationFormat,
};
use mwp_shaper::transfer::{
    h_coupler_3db, h_ring_adddrop, h_ring_allpass, h_tunable_coupler, PhaseShifterState, RingParams,
    WaveguideParams,
};
use mwp_shaper::tuner::{optimize, Objective, OptimizerConfig};
use num_complex::Complex;
use proptest::prelude::*;

const C: f64 = 299_792_458.0;

#[derive(Debug, Clone)]
enum Part {
    Phase(f64),
    Ring { kappa: f64, gamma: f64, detune: f64 },
    Wave { opl: f64, loss: f64, len: f64 },
}

fn part() -> impl Strategy<Value = Part> {
    prop_oneof![
        (-10.0..10.0f64).prop_map(Part::Phase),
        (0.01..0.95f64, 0.5..0.999f64, -25.0..25.0f64)
            .prop_map(|(kappa, gamma, detune)| Part::Ring { kappa, gamma, detune }),
        (0.001..0.05f64, 0.0..3.0f64, 0.0..2.0f64).prop_map(|(opl, loss, len)| Part::Wave { opl, loss, len }),
    ]
}

fn params(p: &Part) -> BlockParams<f64> {
    match *p {
        Part::Phase(phi) => BlockParams::PhaseShifter(PhaseShifterState::from_phase(phi)),
        Part::Ring { kappa, gamma, detune } => {
            BlockParams::RingAllPass(RingParams::all_pass(50.0, kappa, gamma, detune).unwrap())
        }
        Part::Wave { opl, loss, len } => BlockParams::Waveguide(WaveguideParams::new(opl, loss, len).unwrap()),
    }
}

/// Closed-form response of one element, written out independently.
fn closed_form(p: &Part, f: f64) -> Complex<f64> {
    match *p {
        Part::Phase(phi) => Complex::from_polar(1.0, -phi),
        Part::Ring { kappa, gamma, detune } => {
            let c = (1.0 - kappa).sqrt();
            let z = Complex::from_polar(gamma, -2.0 * PI * (f - detune) / 50.0);
            (c - z) / (1.0 - c * z)
        }
        Part::Wave { opl, loss, len } => {
            let a = 10f64.powf(-loss * len / 20.0);
            Complex::from_polar(a, -2.0 * PI * f * 1e9 * opl / C)
        }
    }
}

fn chain(parts: &[Part]) -> CircuitGraph<f64> {
    let mut b = CircuitGraph::builder().input("in", "b0.in");
    for (i, p) in parts.iter().enumerate() {
        b = b.block(&format!("b{i}"), params(p));
        if i > 0 {
            b = b.connect(&format!("b{}.out", i - 1), &format!("b{i}.in"));
        }
    }
    b.output("out", &format!("b{}.out", parts.len() - 1)).build().unwrap()
}

fn chain_text(parts: &[Part]) -> String {
    NetlistDocument::from_graph(&chain(parts)).to_string()
}

fn tone() -> impl Strategy<Value = Complex<f64>> {
    (0.01..2.0f64, -PI..PI).prop_map(|(m, a)| Complex::from_polar(m, a))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn couplers_are_unitary(phi in -20.0..20.0f64) {
        prop_assert!(h_tunable_coupler(phi).unwrap().unitarity_error() < 1e-12);
        prop_assert!(h_coupler_3db::<f64>().unitarity_error() < 1e-12);
        let bar = h_tunable_coupler(phi).unwrap().bar();
        prop_assert!((bar.norm_sqr() - (phi / 2.0).sin().powi(2)).abs() < 1e-12);
    }

    #[test]
    fn rings_conserve_or_lose_energy(
        f in -200.0..200.0f64, k1 in 0.0..1.0f64, k2 in 0.0..1.0f64,
        g in 0.3..1.0f64, d in -25.0..25.0f64,
    ) {
        let ap = RingParams::all_pass(50.0, k1, g, d).unwrap();
        if let Ok(h) = h_ring_allpass(f, &ap) {
            prop_assert!(h.norm_sqr() <= 1.0 + 1e-12);
        }
        let ad = RingParams::add_drop(50.0, k1, k2, g, d).unwrap();
        if let Ok((t, dr)) = h_ring_adddrop(f, &ad) {
            prop_assert!(t.norm_sqr() + dr.norm_sqr() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn ring_response_is_fsr_periodic(
        f in -100.0..100.0f64, fsr in 5.0..100.0f64, k in 0.01..0.99f64,
        g in 0.3..1.0f64, d in -20.0..20.0f64, n in -3i32..=3,
    ) {
        let r = RingParams::add_drop(fsr, k, k, g, d).unwrap();
        let shifted = f + n as f64 * fsr;
        let a = h_ring_adddrop(f, &r).unwrap();
        let b = h_ring_adddrop(shifted, &r).unwrap();
        prop_assert!((a.0 - b.0).norm() < 1e-10);
        // The drop path carries half a round trip of phase: its power repeats
        // every FSR, its field every two.
        prop_assert!((a.1.norm_sqr() - b.1.norm_sqr()).abs() < 1e-10);
        let two = h_ring_adddrop(f + 2.0 * n as f64 * fsr, &r).unwrap();
        prop_assert!((a.1 - two.1).norm() < 1e-10);
        let ap = RingParams::all_pass(fsr, k, g, d).unwrap();
        prop_assert!((h_ring_allpass(f, &ap).unwrap() - h_ring_allpass(shifted, &ap).unwrap()).norm() < 1e-10);
    }

    #[test]
    fn lossless_allpass_has_unit_magnitude(f in -100.0..100.0f64, k in 0.001..1.0f64, d in -25.0..25.0f64) {
        let r = RingParams::all_pass(50.0, k, 1.0, d).unwrap();
        prop_assert!((h_ring_allpass(f, &r).unwrap().norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cascade_matches_closed_form(parts in prop::collection::vec(part(), 1..=8)) {
        let g = chain(&parts);
        let grid = FrequencyGrid::sweep(-40.0, 40.0, 2.5).unwrap();
        let r = g.evaluate(&grid).unwrap();
        let out = r.port("out").unwrap();
        for (k, f) in grid.offsets_ghz.iter().enumerate() {
            let expect: Complex<f64> = parts.iter().map(|p| closed_form(p, *f)).product();
            prop_assert!((out[k] - expect).norm() <= 1e-12, "at {} GHz: {} vs {}", f, out[k], expect);
        }
    }

    #[test]
    fn parse_print_parse_is_identity(parts in prop::collection::vec(part(), 1..=8)) {
        let text = chain_text(&parts);
        let doc = parse_netlist(&text).unwrap();
        let printed = doc.to_string();
        prop_assert_eq!(&printed, &text);
        prop_assert_eq!(parse_netlist(&printed).unwrap(), doc);
    }

    #[test]
    fn single_line_corruption_reports_that_line(
        parts in prop::collection::vec(part(), 1..=6),
        pick in any::<prop::sample::Index>(),
        how in 0usize..3,
    ) {
        let text = chain_text(&parts);
        let lines: Vec<&str> = text.lines().collect();
        let candidates: Vec<usize> = lines
            .iter()
            .enumerate()
            .filter(|(_, l)| l.starts_with("block ") && l.contains('='))
            .map(|(i, _)| i)
            .collect();
        let i = candidates[pick.index(candidates.len())];
        let mut tokens: Vec<String> = lines[i].split_whitespace().map(String::from).collect();
        let last = tokens.len() - 1;
        let key = tokens[last].split('=').next().unwrap().to_string();
        tokens[last] = match how {
            0 => format!("{key}=not_a_number"),
            1 => format!("bogus_key={}", 1.0),
            _ => format!("{key}=1.0 {key}=2.0"),
        };
        let mut corrupted: Vec<String> = lines.iter().map(|l| l.to_string()).collect();
        corrupted[i] = tokens.join(" ");
        let errs = parse_netlist(&(corrupted.join("\n") + "\n")).unwrap_err();
        prop_assert_eq!(errs.len(), 1, "{:?}", errs);
        prop_assert_eq!(errs[0].line, i + 1);
    }

    #[test]
    fn numbers_round_trip_through_csv(v in prop::num::f64::NORMAL) {
        let s = format_number(v);
        let back: f64 = s.parse().unwrap();
        if v.abs() >= 1e-30 {
            prop_assert!((back - v).abs() <= 5.1e-9 * v.abs(), "{} -> {}", v, s);
        }
        prop_assert_eq!(format_number(back), s.clone());
    }

    #[test]
    fn rf_csv_is_deterministic_and_parses_back(
        k in 0.05..0.9f64, g in 0.6..0.99f64, d in 5.0..25.0f64,
    ) {
        let g = chain(&[Part::Ring { kappa: k, gamma: g, detune: d }]);
        let link = LinkSpec::new(ModulationFormat::ssb_upper(0.1), "out");
        let a = rf_transmission_sweep(&link, &g, 1.0, 30.0, 0.5).unwrap();
        let b = rf_transmission_sweep(&link, &g, 1.0, 30.0, 0.5).unwrap();
        prop_assert_eq!(&a, &b);
        let text = rf_csv(&a);
        prop_assert_eq!(&text, &rf_csv(&b));
        let (header, rows) = parse_csv(&text).unwrap();
        prop_assert_eq!(header, vec!["freq_ghz", "mag_db", "phase_rad"]);
        prop_assert_eq!(rows.len(), a.len());
        for (row, (f, m)) in rows.iter().zip(a.rf_freqs_ghz.iter().zip(&a.mag_db)) {
            prop_assert!((row[0] - f).abs() <= 1e-8 * f.abs().max(1.0));
            prop_assert!((row[1] - m).abs() <= 1e-8 * m.abs().max(1.0));
        }
    }

    #[test]
    fn rf_phasor_scales_with_power(
        l in tone(), c in tone(), u in tone(), a in tone(), f in 1.0..40.0f64,
    ) {
        let det = DetectorParams::default();
        let s = ModulatedSpectrum::new(f, l, c, u).unwrap();
        let p = detect_rf_phasor(&s, &det);
        let q = detect_rf_phasor(&s.scaled(a), &det);
        prop_assert!((q - p * a.norm_sqr()).norm() <= 1e-12 * (1.0 + q.norm()));
    }

    #[test]
    fn pm_detects_to_nothing_and_im_bounds_all_phases(
        m in 0.001..1.0f64, c in tone(), pl in -PI..PI, pu in -PI..PI, f in 1.0..40.0f64,
    ) {
        let det = DetectorParams::default();
        let pm = make_spectrum(&ModulationFormat::pm(m), f, c).unwrap();
        prop_assert!(detect_rf_phasor(&pm, &det).norm() <= 1e-15 * c.norm_sqr().max(1.0));
        let im = detect_rf_phasor(&make_spectrum(&ModulationFormat::im(m), f, c).unwrap(), &det).norm();
        let any = ModulatedSpectrum::new(f, c * Complex::from_polar(m, pl), c, c * Complex::from_polar(m, pu)).unwrap();
        prop_assert!(detect_rf_phasor(&any, &det).norm() <= im * (1.0 + 1e-12));
    }

    #[test]
    fn f32_tracks_f64(parts in prop::collection::vec(part(), 1..=4)) {
        let g64 = chain(&parts);
        let mut b = CircuitGraph::<f32>::builder().input("in", "b0.in");
        for (i, p) in parts.iter().enumerate() {
            let q: BlockParams<f32> = match *p {
                Part::Phase(phi) => BlockParams::PhaseShifter(PhaseShifterState::from_phase(phi as f32)),
                Part::Ring { kappa, gamma, detune } => BlockParams::RingAllPass(
                    RingParams::all_pass(50.0, kappa as f32, gamma as f32, detune as f32).unwrap(),
                ),
                Part::Wave { opl, loss, len } => BlockParams::Waveguide(
                    WaveguideParams::new(opl as f32, loss as f32, len as f32).unwrap(),
                ),
            };
            b = b.block(&format!("b{i}"), q);
            if i > 0 {
                b = b.connect(&format!("b{}.out", i - 1), &format!("b{i}.in"));
            }
        }
        let g32 = b.output("out", &format!("b{}.out", parts.len() - 1)).build().unwrap();
        let r64 = g64.evaluate(&FrequencyGrid::sweep(-20.0, 20.0, 5.0).unwrap()).unwrap();
        let r32 = g32.evaluate(&FrequencyGrid::sweep(-20.0f32, 20.0, 5.0).unwrap()).unwrap();
        for (a, b) in r64.port("out").unwrap().iter().zip(r32.port("out").unwrap()) {
            let d = Complex::new(b.re as f64, b.im as f64) - a;
            prop_assert!(d.norm() < 1e-3, "{} vs {}", a, b);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn optimizer_is_seed_and_order_deterministic(seed in any::<u64>(), k in 0.05..0.95f64) {
        let g = CircuitGraph::builder()
            .block("a", BlockParams::RingAllPass(RingParams::all_pass(50.0, k, 0.9, 0.0).unwrap()))
            .block("p", BlockParams::PhaseShifter(PhaseShifterState::from_phase(0.3)))
            .connect("a.out", "p.in")
            .input("in", "a.in")
            .output("out", "p.out")
            .build()
            .unwrap();
        let obj = Objective::CriticalCoupling { port: "out".into(), resonance_offset_ghz: 0.0 };
        let cfg = OptimizerConfig { seed, max_evals: 600, restarts: 3, ..OptimizerConfig::default() };
        let names = g.heaters().iter().map(|h| h.name.clone()).collect::<Vec<_>>();
        let mut reversed = names.clone();
        reversed.reverse();
        let r1 = optimize(&g, &names, &obj, &cfg).unwrap();
        let r2 = optimize(&g, &reversed, &obj, &cfg).unwrap();
        let r3 = optimize(&g, &[], &obj, &cfg).unwrap();
        prop_assert_eq!(&r1, &r2);
        prop_assert_eq!(&r1, &r3);
    }
}
