//! Measurements on swept responses.

use crate::circuit::{CircuitGraph, FrequencyGrid, BlockParams, DEFAULT_CARRIER_THZ};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::transfer::{critical_coupling_kappa, RingParams};

fn band_values<T: Scalar>(offsets: &[T], values: &[T], band: (T, T)) -> Vec<T> {
    offsets
        .iter()
        .zip(values)
        .filter(|(f, _)| **f >= band.0 && **f <= band.1)
        .map(|(_, v)| *v)
        .collect()
}

/// `10 log10(min passband power / max stopband power)`.
pub fn extinction_db<T: Scalar>(offsets: &[T], power: &[T], passband: (T, T), stopband: (T, T)) -> Result<T> {
    if offsets.len() != power.len() {
        return Err(Error::domain("offset and power lengths differ"));
    }
    let pass = band_values(offsets, power, passband);
    let stop = band_values(offsets, power, stopband);
    if pass.is_empty() || stop.is_empty() {
        return Err(Error::domain(format!(
            "empty {} band",
            if pass.is_empty() { "pass" } else { "stop" }
        )));
    }
    let pmin = pass.iter().copied().fold(T::infinity(), T::min);
    let smax = stop.iter().copied().fold(T::zero(), T::max);
    Ok(T::lit(10.0) * (pmin / smax).log10())
}

/// Resonance width and the figures of merit derived from it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResonanceMetrics<T> {
    pub center_ghz: T,
    pub fwhm_ghz: T,
    pub q: T,
    pub finesse: T,
}

fn crossing<T: Scalar>(x0: T, y0: T, x1: T, y1: T, level: T) -> T {
    if y1 == y0 {
        x0
    } else {
        x0 + (x1 - x0) * (level - y0) / (y1 - y0)
    }
}

/// Full width at half depth (notch) or half height (peak) of the resonance
/// nearest `resonance_offset_ghz`, by linear interpolation of the crossings.
pub fn q_and_finesse<T: Scalar>(
    offsets: &[T],
    power: &[T],
    resonance_offset_ghz: T,
    fsr_ghz: T,
    carrier_thz: T,
) -> Result<ResonanceMetrics<T>> {
    let n = offsets.len();
    if n < 3 || power.len() != n {
        return Err(Error::Analysis("need at least three matching samples".into()));
    }
    let pmax = power.iter().copied().fold(T::neg_infinity(), T::max);
    let pmin = power.iter().copied().fold(T::infinity(), T::min);
    if !(pmax > pmin) {
        return Err(Error::Analysis("flat response has no resonance".into()));
    }
    let start = offsets
        .iter()
        .enumerate()
        .min_by(|a, b| {
            (*a.1 - resonance_offset_ghz)
                .abs()
                .partial_cmp(&(*b.1 - resonance_offset_ghz).abs())
                .unwrap()
        })
        .map(|(i, _)| i)
        .unwrap();
    let notch = power[start] < (pmax + pmin) / T::lit(2.0);
    // Slide to the local extremum.
    let better = |a: T, b: T| if notch { a < b } else { a > b };
    let mut k = start;
    loop {
        if k > 0 && better(power[k - 1], power[k]) {
            k -= 1;
        } else if k + 1 < n && better(power[k + 1], power[k]) {
            k += 1;
        } else {
            break;
        }
    }
    let level = if notch {
        (power[k] + pmax) / T::lit(2.0)
    } else {
        (power[k] + pmin) / T::lit(2.0)
    };
    let inside = |p: T| if notch { p < level } else { p > level };
    let mut l = k;
    while l > 0 && inside(power[l - 1]) {
        l -= 1;
    }
    let mut r = k;
    while r + 1 < n && inside(power[r + 1]) {
        r += 1;
    }
    if l == 0 || r + 1 == n {
        return Err(Error::Analysis(format!(
            "resonance near {resonance_offset_ghz} GHz not resolved inside the sweep"
        )));
    }
    let left = crossing(offsets[l - 1], power[l - 1], offsets[l], power[l], level);
    let right = crossing(offsets[r], power[r], offsets[r + 1], power[r + 1], level);
    let fwhm = right - left;
    if !(fwhm > T::zero()) {
        return Err(Error::Analysis("zero resonance width".into()));
    }
    Ok(ResonanceMetrics {
        center_ghz: offsets[k],
        fwhm_ghz: fwhm,
        q: carrier_thz * T::lit(1000.0) / fwhm,
        finesse: fsr_ghz / fwhm,
    })
}

/// Width of the contiguous region around `center_ghz` within 3 dB of the trace maximum.
pub fn passband_width_3db<T: Scalar>(offsets: &[T], power: &[T], center_ghz: T) -> Result<T> {
    let n = offsets.len();
    if n < 3 || power.len() != n {
        return Err(Error::domain("need at least three matching samples"));
    }
    let level = power.iter().copied().fold(T::zero(), T::max) / T::lit(2.0);
    let k = offsets
        .iter()
        .position(|f| *f >= center_ghz)
        .ok_or_else(|| Error::Analysis("center outside sweep".into()))?;
    if power[k] < level {
        return Err(Error::Analysis(format!("{center_ghz} GHz lies outside the passband")));
    }
    let mut l = k;
    while l > 0 && power[l - 1] >= level {
        l -= 1;
    }
    let mut r = k;
    while r + 1 < n && power[r + 1] >= level {
        r += 1;
    }
    if l == 0 || r + 1 == n {
        return Err(Error::Analysis("passband edge outside sweep".into()));
    }
    let left = crossing(offsets[l - 1], power[l - 1], offsets[l], power[l], level);
    let right = crossing(offsets[r], power[r], offsets[r + 1], power[r + 1], level);
    Ok(right - left)
}

/// Deepest point of a dB trace and its depth below the highest point within
/// `half_window_ghz` of it.
pub fn notch_depth_db<T: Scalar>(freqs: &[T], mag_db: &[T], half_window_ghz: T) -> Result<(T, T)> {
    if freqs.is_empty() || freqs.len() != mag_db.len() {
        return Err(Error::domain("empty or mismatched trace"));
    }
    let (k, min) = mag_db
        .iter()
        .copied()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
        .unwrap();
    let f0 = freqs[k];
    let reference = band_values(freqs, mag_db, (f0 - half_window_ghz, f0 + half_window_ghz))
        .into_iter()
        .fold(T::neg_infinity(), T::max);
    Ok((reference - min, f0))
}

/// Frequency of the largest value (first one on ties).
pub fn peak_frequency<T: Scalar>(freqs: &[T], values: &[T]) -> Result<T> {
    if freqs.is_empty() || freqs.len() != values.len() {
        return Err(Error::domain("empty or mismatched trace"));
    }
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    Ok(freqs[best])
}

/// Small-linewidth finesse of a critically coupled all-pass ring.
pub fn critical_finesse_estimate<T: Scalar>(round_trip_amplitude: T) -> T {
    let a = round_trip_amplitude;
    T::PI() * a / (T::one() - a * a)
}

/// Inverse of [`critical_finesse_estimate`].
pub fn round_trip_estimate_for_finesse<T: Scalar>(finesse: T) -> T {
    let pi = T::PI();
    ((pi * pi + T::lit(4.0) * finesse * finesse).sqrt() - pi) / (T::lit(2.0) * finesse)
}

/// Measured finesse of a critically coupled all-pass ring with round-trip amplitude `gamma`.
pub fn measured_critical_finesse<T: Scalar>(gamma: T, fsr_ghz: T) -> Result<ResonanceMetrics<T>> {
    let kappa = critical_coupling_kappa(gamma)?;
    let ring = RingParams::all_pass(fsr_ghz, kappa, gamma, T::zero())?;
    let graph = CircuitGraph::builder()
        .block("ring", BlockParams::RingAllPass(ring))
        .input("in", "ring.in")
        .output("out", "ring.out")
        .build()?;
    let est = critical_finesse_estimate(gamma).max(T::one());
    let points = (est * T::lit(100.0)).max(T::lit(2000.0)).min(T::lit(2e6));
    let n = points.to_usize().unwrap();
    let half = fsr_ghz / T::lit(2.0);
    let step = fsr_ghz / T::from_usize(n).unwrap();
    let offsets: Vec<T> = (0..=n).map(|i| -half + step * T::from_usize(i).unwrap()).collect();
    let grid = FrequencyGrid::new(T::lit(DEFAULT_CARRIER_THZ), offsets)?;
    let resp = graph.evaluate(&grid)?;
    let power = resp.port_power("out")?;
    q_and_finesse(&grid.offsets_ghz, &power, T::zero(), fsr_ghz, grid.center_thz)
}

/// Round-trip amplitude whose critically coupled ring measures `target_finesse`,
/// by bisection on the measured value.
pub fn fit_round_trip_for_finesse<T: Scalar>(target_finesse: T, fsr_ghz: T) -> Result<T> {
    if !(target_finesse > T::one()) {
        return Err(Error::domain("target finesse must exceed 1"));
    }
    let mut lo = T::lit(0.3);
    let mut hi = T::one() - T::lit(1e-6);
    let f_lo = measured_critical_finesse(lo, fsr_ghz)?.finesse;
    let f_hi = measured_critical_finesse(hi, fsr_ghz)?.finesse;
    if !(f_lo < target_finesse && target_finesse < f_hi) {
        return Err(Error::Analysis(format!(
            "finesse {target_finesse} outside reachable range [{f_lo}, {f_hi}]"
        )));
    }
    for _ in 0..60 {
        let mid = (lo + hi) / T::lit(2.0);
        if measured_critical_finesse(mid, fsr_ghz)?.finesse < target_finesse {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < T::epsilon() * T::lit(4.0) {
            break;
        }
    }
    Ok((lo + hi) / T::lit(2.0))
}
