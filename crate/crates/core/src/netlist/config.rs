use std::path::PathBuf;

use crate::experiments::{setting_allowed, ExperimentConfig, PRESETS};

use super::{tokenize, Errors, ParseError, FORMAT_VERSION};

const KEYS: &str = "experiment, sweep, heater, set, output, seed or format";

fn number(s: &str) -> Option<f64> {
    s.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Reads an experiment config:
///
/// ```text
/// experiment cancel_notch
/// sweep 1 30 0.01
/// heater bar_ps 1.5708
/// set optical_rejection_db 7
/// output results/cancel
/// seed 0
/// ```
pub fn load_experiment_config(text: &str) -> Result<ExperimentConfig, Vec<ParseError>> {
    let mut errs = Errors::default();
    let mut cfg = ExperimentConfig::new("");
    let mut name_line = None;
    let mut sets = Vec::new();
    let mut seen: Vec<&str> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let ln = i + 1;
        let toks = tokenize(line);
        let Some(key) = toks.first() else { continue };
        let args = &toks[1..];
        let once = matches!(key.text, "experiment" | "sweep" | "output" | "seed" | "format");
        if once && seen.contains(&key.text) {
            errs.at(ln, key, format!("duplicate '{}' line", key.text));
            continue;
        }
        match key.text {
            "experiment" => {
                if args.len() != 1 {
                    errs.at(ln, key, "expected 'experiment <name>'");
                } else if !PRESETS.contains(&args[0].text) {
                    errs.at(ln, &args[0], format!("unknown experiment; expected one of {}", PRESETS.join(", ")));
                } else {
                    cfg.name = args[0].text.to_string();
                    name_line = Some(ln);
                }
            }
            "sweep" => {
                let v: Vec<Option<f64>> = args.iter().map(|t| number(t.text)).collect();
                match v.as_slice() {
                    [Some(lo), Some(hi), Some(step)] => {
                        if !(*step > 0.0) || hi < lo || !(*lo > 0.0) {
                            errs.at(ln, key, "sweep needs 0 < lo <= hi and step > 0");
                        } else {
                            cfg.sweep = Some((*lo, *hi, *step));
                        }
                    }
                    _ => errs.at(ln, key, "expected 'sweep <lo_ghz> <hi_ghz> <step_ghz>'"),
                }
            }
            "heater" => match args {
                [n, v] => match number(v.text) {
                    Some(p) => cfg.heaters.push((n.text.to_string(), p)),
                    None => errs.at(ln, v, "expected a heater phase in radians"),
                },
                _ => errs.at(ln, key, "expected 'heater <name> <phase_rad>'"),
            },
            "set" => {
                if args.len() < 2 {
                    errs.at(ln, key, "expected 'set <key> <number> ...'");
                    continue;
                }
                match args[1..].iter().find(|t| number(t.text).is_none()) {
                    Some(bad) => errs.at(ln, bad, "expected a finite number"),
                    None => {
                        let values = args[1..].iter().map(|t| number(t.text).unwrap()).collect();
                        sets.push((ln, args[0].clone(), values));
                    }
                }
            }
            "output" => match args {
                [p] => cfg.output = Some(PathBuf::from(p.text)),
                _ => errs.at(ln, key, "expected 'output <path>'"),
            },
            "seed" => match args {
                [s] => match s.text.parse::<u64>() {
                    Ok(v) => cfg.seed = v,
                    Err(_) => errs.at(ln, s, "expected a non-negative integer seed"),
                },
                _ => errs.at(ln, key, "expected 'seed <integer>'"),
            },
            "format" => {
                if args.len() != 1 || args[0].text != FORMAT_VERSION.to_string() {
                    errs.at(ln, key, format!("expected 'format {FORMAT_VERSION}'"));
                }
            }
            _ => errs.at(ln, key, format!("unknown key; expected {KEYS}")),
        }
        seen.push(match key.text {
            "experiment" => "experiment",
            "sweep" => "sweep",
            "output" => "output",
            "seed" => "seed",
            "format" => "format",
            _ => "",
        });
    }
    if name_line.is_none() && !seen.contains(&"experiment") {
        errs.force(1, 1, "", "missing required key 'experiment'");
    }
    for (ln, tok, values) in sets {
        if cfg.name.is_empty() {
            break;
        }
        if !setting_allowed(&cfg.name, tok.text) {
            errs.at(ln, &tok, format!("setting does not apply to experiment '{}'", cfg.name));
        } else {
            cfg.settings.insert(tok.text.to_string(), values);
        }
    }
    errs.finish()?;
    Ok(cfg)
}
