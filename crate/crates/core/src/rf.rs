//! Small-signal RF-photonic link: three optical tones, a circuit, square-law detection.
//!
//! The detected RF phasor `P` is the complex amplitude of the `exp(j*w*t)`
//! photocurrent term, so the photocurrent carries `2|P| cos(w*t + arg P)`.

use std::fmt;

use num_complex::Complex;

use crate::circuit::{sweep_points, CircuitGraph, FrequencyGrid, DEFAULT_CARRIER_THZ};
use crate::error::{Error, Result};
use crate::scalar::{phasor, unwrap_phase, Scalar};

/// Lower sideband, carrier and upper sideband as complex field amplitudes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModulatedSpectrum<T> {
    pub rf_freq_ghz: T,
    pub e_minus: Complex<T>,
    pub e_carrier: Complex<T>,
    pub e_plus: Complex<T>,
    pub carrier_thz: T,
}

impl<T: Scalar> ModulatedSpectrum<T> {
    pub fn new(
        rf_freq_ghz: T,
        e_minus: Complex<T>,
        e_carrier: Complex<T>,
        e_plus: Complex<T>,
    ) -> Result<Self> {
        let s = Self {
            rf_freq_ghz,
            e_minus,
            e_carrier,
            e_plus,
            carrier_thz: T::lit(DEFAULT_CARRIER_THZ),
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rf_freq_ghz > T::zero()) || !self.rf_freq_ghz.is_finite() {
            return Err(Error::domain("rf_freq_ghz must be finite and > 0"));
        }
        let finite = |z: Complex<T>| z.re.is_finite() && z.im.is_finite();
        if !(finite(self.e_minus) && finite(self.e_carrier) && finite(self.e_plus)) {
            return Err(Error::domain("tone amplitudes must be finite"));
        }
        Ok(())
    }

    /// Optical offsets of the three tones: `[-f, 0, +f]`.
    pub fn offsets_ghz(&self) -> [T; 3] {
        [-self.rf_freq_ghz, T::zero(), self.rf_freq_ghz]
    }

    pub fn tones(&self) -> [Complex<T>; 3] {
        [self.e_minus, self.e_carrier, self.e_plus]
    }

    pub fn scaled(&self, a: Complex<T>) -> Self {
        Self {
            e_minus: self.e_minus * a,
            e_carrier: self.e_carrier * a,
            e_plus: self.e_plus * a,
            ..*self
        }
    }

    /// Multiplies each tone by the circuit response at its offset.
    pub fn filtered(&self, h: [Complex<T>; 3]) -> Self {
        Self {
            e_minus: self.e_minus * h[0],
            e_carrier: self.e_carrier * h[1],
            e_plus: self.e_plus * h[2],
            ..*self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModulationKind<T> {
    Im,
    Pm,
    SsbUpper,
    SsbLower,
    /// Sidebands given relative to the carrier amplitude.
    Custom {
        e_minus: Complex<T>,
        e_plus: Complex<T>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModulationFormat<T> {
    pub kind: ModulationKind<T>,
    /// Sideband to carrier amplitude ratio.
    pub modulation_index: T,
}

impl<T: Scalar> ModulationFormat<T> {
    pub fn im(index: T) -> Self {
        Self {
            kind: ModulationKind::Im,
            modulation_index: index,
        }
    }

    pub fn pm(index: T) -> Self {
        Self {
            kind: ModulationKind::Pm,
            modulation_index: index,
        }
    }

    pub fn ssb_upper(index: T) -> Self {
        Self {
            kind: ModulationKind::SsbUpper,
            modulation_index: index,
        }
    }

    pub fn ssb_lower(index: T) -> Self {
        Self {
            kind: ModulationKind::SsbLower,
            modulation_index: index,
        }
    }

    pub fn custom(e_minus: Complex<T>, e_plus: Complex<T>) -> Self {
        Self {
            kind: ModulationKind::Custom { e_minus, e_plus },
            modulation_index: T::one(),
        }
    }

    /// Intensity-modulation counterpart with the same index.
    pub fn as_im(&self) -> Self {
        match self.kind {
            ModulationKind::Custom { e_minus, e_plus } => {
                let m = (e_minus.norm() + e_plus.norm()) / T::lit(2.0);
                Self::im(m)
            }
            _ => Self::im(self.modulation_index),
        }
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            ModulationKind::Im => "im",
            ModulationKind::Pm => "pm",
            ModulationKind::SsbUpper => "ssb_upper",
            ModulationKind::SsbLower => "ssb_lower",
            ModulationKind::Custom { .. } => "custom",
        }
    }
}

impl<T: Scalar> fmt::Display for ModulationFormat<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorParams<T> {
    pub responsivity_a_per_w: T,
    /// Lumped optical link gain (coupler loss, amplifiers); 1 means off.
    pub link_gain: T,
}

impl<T: Scalar> Default for DetectorParams<T> {
    fn default() -> Self {
        Self {
            responsivity_a_per_w: T::lit(0.8),
            link_gain: T::one(),
        }
    }
}

impl<T: Scalar> DetectorParams<T> {
    pub fn unit() -> Self {
        Self {
            responsivity_a_per_w: T::one(),
            link_gain: T::one(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.responsivity_a_per_w > T::zero()) || !(self.link_gain > T::zero()) {
            return Err(Error::domain("responsivity and link gain must be > 0"));
        }
        Ok(())
    }

    fn factor(&self) -> T {
        self.responsivity_a_per_w * self.link_gain
    }
}

pub fn make_spectrum<T: Scalar>(
    format: &ModulationFormat<T>,
    rf_freq_ghz: T,
    carrier_amplitude: Complex<T>,
) -> Result<ModulatedSpectrum<T>> {
    let m = format.modulation_index;
    if !matches!(format.kind, ModulationKind::Custom { .. }) && !(m > T::zero()) {
        return Err(Error::domain(format!("modulation index must be > 0, got {m}")));
    }
    let c = carrier_amplitude;
    let zero = Complex::new(T::zero(), T::zero());
    let (lo, up) = match format.kind {
        ModulationKind::Im => (c * m, c * m),
        ModulationKind::Pm => (-c * m, c * m),
        ModulationKind::SsbUpper => (zero, c * m),
        ModulationKind::SsbLower => (c * m, zero),
        ModulationKind::Custom { e_minus, e_plus } => (c * e_minus, c * e_plus),
    };
    ModulatedSpectrum::new(rf_freq_ghz, lo, c, up)
}

/// Routes every tone through `graph` to `output_port`.
pub fn apply_circuit<T: Scalar>(
    spec: &ModulatedSpectrum<T>,
    graph: &CircuitGraph<T>,
    output_port: &str,
) -> Result<ModulatedSpectrum<T>> {
    let grid = FrequencyGrid::new(spec.carrier_thz, spec.offsets_ghz().to_vec())?;
    let r = graph.evaluate(&grid)?;
    let h = r.port(output_port)?;
    Ok(spec.filtered([h[0], h[1], h[2]]))
}

/// First-order photocurrent phasor at the RF frequency.
pub fn detect_rf_phasor<T: Scalar>(spec: &ModulatedSpectrum<T>, det: &DetectorParams<T>) -> Complex<T> {
    let beat = spec.e_carrier * spec.e_minus.conj() + spec.e_carrier.conj() * spec.e_plus;
    beat * det.factor()
}

/// Samples the optical intensity in time and projects it onto `exp(-j*w*t)`.
pub fn time_domain_oracle<T: Scalar>(spec: &ModulatedSpectrum<T>, det: &DetectorParams<T>) -> Complex<T> {
    const PER_PERIOD: usize = 64;
    const PERIODS: usize = 8;
    let n = PER_PERIOD * PERIODS;
    let mut acc = Complex::new(T::zero(), T::zero());
    for k in 0..n {
        // w*t over whole periods, taken modulo one period to keep the angle exact.
        let wt = T::two_pi() * T::from_usize(k % PER_PERIOD).unwrap() / T::from_usize(PER_PERIOD).unwrap();
        let rot = phasor(wt);
        let e = spec.e_minus * rot.conj() + spec.e_carrier + spec.e_plus * rot;
        let intensity = e.norm_sqr() * det.factor();
        acc = acc + rot.conj() * intensity;
    }
    acc / T::from_usize(n).unwrap()
}

/// Swept RF transmission relative to a back-to-back reference.
#[derive(Debug, Clone, PartialEq)]
pub struct RfResponse<T> {
    pub rf_freqs_ghz: Vec<T>,
    pub mag_db: Vec<T>,
    pub phase_rad: Vec<T>,
    /// Describes the 0 dB reference.
    pub reference: String,
}

impl<T: Scalar> RfResponse<T> {
    pub fn len(&self) -> usize {
        self.rf_freqs_ghz.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rf_freqs_ghz.is_empty()
    }

    pub fn step(&self) -> Option<T> {
        match self.rf_freqs_ghz.as_slice() {
            [a, b, ..] => Some(*b - *a),
            _ => None,
        }
    }
}

/// Lowest magnitude reported, dB.
pub const MAG_FLOOR_DB: f64 = -300.0;

pub fn magnitude_db<T: Scalar>(ratio: T) -> T {
    let floor = T::lit(MAG_FLOOR_DB);
    if ratio > T::zero() {
        (T::lit(20.0) * ratio.log10()).max(floor)
    } else {
        floor
    }
}

/// Everything but the circuit that defines a link.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkSpec<T> {
    pub format: ModulationFormat<T>,
    pub output_port: String,
    pub detector: DetectorParams<T>,
    pub carrier_amplitude: Complex<T>,
}

impl<T: Scalar> LinkSpec<T> {
    pub fn new(format: ModulationFormat<T>, output_port: impl Into<String>) -> Self {
        Self {
            format,
            output_port: output_port.into(),
            detector: DetectorParams::default(),
            carrier_amplitude: Complex::new(T::one(), T::zero()),
        }
    }

    /// Detected phasors at each RF frequency, evaluating the graph once.
    pub fn phasors(&self, graph: &CircuitGraph<T>, rf_freqs_ghz: &[T]) -> Result<Vec<Complex<T>>> {
        self.detector.validate()?;
        let mut pos: Vec<T> = rf_freqs_ghz.to_vec();
        if pos.iter().any(|f| !(*f > T::zero()) || !f.is_finite()) {
            return Err(Error::domain("RF frequencies must be finite and > 0"));
        }
        pos.sort_by(|a, b| a.partial_cmp(b).unwrap());
        pos.dedup();
        let mut offsets: Vec<T> = pos.iter().rev().map(|f| -*f).collect();
        offsets.push(T::zero());
        offsets.extend(pos.iter().copied());
        let grid = FrequencyGrid::new(T::lit(DEFAULT_CARRIER_THZ), offsets)?;
        let resp = graph.evaluate(&grid)?;
        let h = resp.port(&self.output_port)?;
        let m = pos.len();
        let h0 = h[m];
        rf_freqs_ghz
            .iter()
            .map(|f| {
                let i = pos.binary_search_by(|x| x.partial_cmp(f).unwrap()).unwrap();
                let spec = make_spectrum(&self.format, *f, self.carrier_amplitude)?;
                Ok(detect_rf_phasor(&spec.filtered([h[m - 1 - i], h0, h[m + 1 + i]]), &self.detector))
            })
            .collect()
    }

    /// Back-to-back phasor of this format, falling back to the IM equivalent
    /// when the format detects to nothing (PM).
    pub fn reference(&self, rf_freq_ghz: T) -> Result<(Complex<T>, String)> {
        let spec = make_spectrum(&self.format, rf_freq_ghz, self.carrier_amplitude)?;
        let p = detect_rf_phasor(&spec, &self.detector);
        let scale = self.carrier_amplitude.norm_sqr() * self.detector.factor();
        if p.norm() > T::lit(1e-9) * scale {
            return Ok((p, format!("back-to-back {}", self.format)));
        }
        let im = make_spectrum(&self.format.as_im(), rf_freq_ghz, self.carrier_amplitude)?;
        Ok((
            detect_rf_phasor(&im, &self.detector),
            format!("back-to-back im (index of {} input)", self.format),
        ))
    }
}

/// RF transmission over `lo..=hi` in steps of `step`.
pub fn rf_transmission_sweep<T: Scalar>(
    link: &LinkSpec<T>,
    graph: &CircuitGraph<T>,
    lo_ghz: T,
    hi_ghz: T,
    step_ghz: T,
) -> Result<RfResponse<T>> {
    let freqs = sweep_points(lo_ghz, hi_ghz, step_ghz)?;
    rf_response_at(link, graph, &freqs)
}

pub fn rf_response_at<T: Scalar>(
    link: &LinkSpec<T>,
    graph: &CircuitGraph<T>,
    freqs: &[T],
) -> Result<RfResponse<T>> {
    let p = link.phasors(graph, freqs)?;
    let mut mag_db = Vec::with_capacity(freqs.len());
    let mut phase = Vec::with_capacity(freqs.len());
    let mut label = String::new();
    for (f, z) in freqs.iter().zip(&p) {
        let (r, l) = link.reference(*f)?;
        label = l;
        mag_db.push(magnitude_db(z.norm() / r.norm()));
        phase.push((z / r).arg());
    }
    unwrap_phase(&mut phase);
    Ok(RfResponse {
        rf_freqs_ghz: freqs.to_vec(),
        mag_db,
        phase_rad: phase,
        reference: label,
    })
}
