//! Complex transfer functions of the passive building blocks.
//!
//! All phases follow the `exp(-j*phi)` convention: a positive phase is a
//! delay. Frequencies are offsets in GHz from the optical carrier; the
//! absolute optical phase of a path is absorbed in its heaters.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::scalar::{phasor, Scalar};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Heater power for a pi phase shift, mW.
pub const DEFAULT_P_PI_MW: f64 = 35.0;

/// Waveguide propagation loss, dB/cm.
pub const DEFAULT_LOSS_DB_PER_CM: f64 = 1.2;

fn finite<T: Scalar>(name: &str, x: T) -> Result<T> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::domain(format!("{name} must be finite, got {x}")))
    }
}

/// A straight bus waveguide section.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaveguideParams<T> {
    /// Group optical path length `n_g * L` in meters.
    pub optical_path_length: T,
    pub loss_db_per_cm: T,
    pub physical_length_cm: T,
}

impl<T: Scalar> WaveguideParams<T> {
    pub fn new(optical_path_length: T, loss_db_per_cm: T, physical_length_cm: T) -> Result<Self> {
        let p = Self {
            optical_path_length,
            loss_db_per_cm,
            physical_length_cm,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn lossless(optical_path_length: T) -> Result<Self> {
        Self::new(optical_path_length, T::zero(), T::zero())
    }

    pub fn validate(&self) -> Result<()> {
        finite("optical_path_length", self.optical_path_length)?;
        if !(self.optical_path_length > T::zero()) {
            return Err(Error::domain("optical_path_length must be > 0"));
        }
        amplitude_from_db_loss(self.loss_db_per_cm, self.physical_length_cm).map(|_| ())
    }

    /// Field amplitude factor of the section.
    pub fn amplitude(&self) -> Result<T> {
        amplitude_from_db_loss(self.loss_db_per_cm, self.physical_length_cm)
    }

    /// Frequency period of the section's delay phasor, GHz.
    pub fn fsr_equivalent_ghz(&self) -> T {
        T::lit(SPEED_OF_LIGHT) / self.optical_path_length / T::lit(1e9)
    }
}

/// State of a thermo-optic phase shifter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseShifterState<T> {
    pub phase_rad: T,
    /// Dissipated heater power, when the phase was set from a power.
    pub heater_power_mw: Option<T>,
}

impl<T: Scalar> PhaseShifterState<T> {
    pub fn from_phase(phase_rad: T) -> Self {
        Self {
            phase_rad,
            heater_power_mw: None,
        }
    }

    pub fn from_power(power_mw: T, p_pi_mw: T) -> Result<Self> {
        Ok(Self {
            phase_rad: heater_phase_from_power(power_mw, p_pi_mw)?,
            heater_power_mw: Some(power_mw),
        })
    }
}

/// Ring resonator parametrized by its free spectral range.
///
/// `kappa` couples the bus (input) waveguide; `kappa_drop`, when present,
/// couples the second waveguide of an add-drop ring.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RingParams<T> {
    pub fsr_ghz: T,
    pub kappa: T,
    pub kappa_drop: Option<T>,
    /// Round-trip field amplitude, in `(0, 1]`.
    pub round_trip_amplitude: T,
    /// Resonance position relative to the grid origin, GHz.
    pub detune_ghz: T,
}

impl<T: Scalar> RingParams<T> {
    pub fn all_pass(fsr_ghz: T, kappa: T, round_trip_amplitude: T, detune_ghz: T) -> Result<Self> {
        let r = Self {
            fsr_ghz,
            kappa,
            kappa_drop: None,
            round_trip_amplitude,
            detune_ghz,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn add_drop(
        fsr_ghz: T,
        kappa: T,
        kappa_drop: T,
        round_trip_amplitude: T,
        detune_ghz: T,
    ) -> Result<Self> {
        let r = Self {
            fsr_ghz,
            kappa,
            kappa_drop: Some(kappa_drop),
            round_trip_amplitude,
            detune_ghz,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        finite("fsr_ghz", self.fsr_ghz)?;
        finite("detune_ghz", self.detune_ghz)?;
        if !(self.fsr_ghz > T::zero()) {
            return Err(Error::domain("fsr_ghz must be > 0"));
        }
        check_kappa("kappa", self.kappa)?;
        if let Some(k) = self.kappa_drop {
            check_kappa("kappa_drop", k)?;
        }
        let g = self.round_trip_amplitude;
        if !(g > T::zero() && g <= T::one()) {
            return Err(Error::domain(format!(
                "round_trip_amplitude out of range (0,1]: {g}"
            )));
        }
        Ok(())
    }

    /// Bus self-coupling `sqrt(1 - kappa)`.
    pub fn self_coupling(&self) -> T {
        (T::one() - self.kappa).sqrt()
    }

    /// Round-trip phasor `gamma * exp(-j*2pi*(f - detune)/fsr)`.
    fn round_trip(&self, offset_ghz: T) -> Complex<T> {
        let angle = -T::two_pi() * (offset_ghz - self.detune_ghz) / self.fsr_ghz;
        phasor(angle) * self.round_trip_amplitude
    }
}

fn check_kappa<T: Scalar>(name: &str, k: T) -> Result<()> {
    if k >= T::zero() && k <= T::one() {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} out of range [0,1]: {k}")))
    }
}

/// 2x2 complex transfer matrix, `out[i] = sum_j m[i][j] * in[j]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransferMatrix2x2<T> {
    pub m: [[Complex<T>; 2]; 2],
}

impl<T: Scalar> TransferMatrix2x2<T> {
    pub fn new(m: [[Complex<T>; 2]; 2]) -> Self {
        Self { m }
    }

    pub fn diag(a: Complex<T>, b: Complex<T>) -> Self {
        let z = Complex::new(T::zero(), T::zero());
        Self::new([[a, z], [z, b]])
    }

    /// Bar amplitude (input 1 to output 1).
    pub fn bar(&self) -> Complex<T> {
        self.m[0][0]
    }

    /// Cross amplitude (input 1 to output 2).
    pub fn cross(&self) -> Complex<T> {
        self.m[1][0]
    }

    pub fn mul(&self, rhs: &Self) -> Self {
        let mut out = [[Complex::new(T::zero(), T::zero()); 2]; 2];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = self.m[i][0] * rhs.m[0][j] + self.m[i][1] * rhs.m[1][j];
            }
        }
        Self::new(out)
    }

    pub fn adjoint(&self) -> Self {
        let m = &self.m;
        Self::new([[m[0][0].conj(), m[1][0].conj()], [m[0][1].conj(), m[1][1].conj()]])
    }

    pub fn apply(&self, input: [Complex<T>; 2]) -> [Complex<T>; 2] {
        [
            self.m[0][0] * input[0] + self.m[0][1] * input[1],
            self.m[1][0] * input[0] + self.m[1][1] * input[1],
        ]
    }

    /// Largest entry-wise deviation of `M * M^H` from the identity.
    pub fn unitarity_error(&self) -> T {
        let p = self.mul(&self.adjoint());
        let mut err = T::zero();
        for i in 0..2 {
            for j in 0..2 {
                let expect = if i == j { T::one() } else { T::zero() };
                err = err.max((p.m[i][j] - Complex::new(expect, T::zero())).norm());
            }
        }
        err
    }
}

/// Unit delay phasor `exp(-j*2pi*offset/fsr)`.
pub fn z_inverse<T: Scalar>(offset_ghz: T, fsr_ghz: T) -> Result<Complex<T>> {
    finite("offset_ghz", offset_ghz)?;
    finite("fsr_ghz", fsr_ghz)?;
    if !(fsr_ghz > T::zero()) {
        return Err(Error::domain("fsr_ghz must be > 0"));
    }
    Ok(phasor(-T::two_pi() * offset_ghz / fsr_ghz))
}

/// Field amplitude after `length_cm` of waveguide with power loss `loss_db_per_cm`.
pub fn amplitude_from_db_loss<T: Scalar>(loss_db_per_cm: T, length_cm: T) -> Result<T> {
    finite("loss_db_per_cm", loss_db_per_cm)?;
    finite("length_cm", length_cm)?;
    if loss_db_per_cm < T::zero() || length_cm < T::zero() {
        return Err(Error::domain("loss and length must be >= 0"));
    }
    Ok(T::lit(10.0).powf(-loss_db_per_cm * length_cm / T::lit(20.0)))
}

pub fn h_waveguide<T: Scalar>(offset_ghz: T, params: &WaveguideParams<T>) -> Result<Complex<T>> {
    let gamma = params.amplitude()?;
    Ok(z_inverse(offset_ghz, params.fsr_equivalent_ghz())? * gamma)
}

pub fn h_phase_shifter<T: Scalar>(phase_rad: T) -> Result<Complex<T>> {
    finite("phase_rad", phase_rad)?;
    Ok(phasor(-phase_rad))
}

/// Ideal 3-dB directional coupler.
pub fn h_coupler_3db<T: Scalar>() -> TransferMatrix2x2<T> {
    let a = T::FRAC_1_SQRT_2();
    let z = T::zero();
    TransferMatrix2x2::new([
        [Complex::new(a, z), Complex::new(z, -a)],
        [Complex::new(z, -a), Complex::new(a, z)],
    ])
}

/// Balanced-MZI tunable coupler: two 3-dB couplers around a phase shifter on arm 2.
///
/// Bar amplitude is `0.5 * (1 - exp(-j*phi))`, so the bar power is `sin^2(phi/2)`
/// and its phase rotates with `phi`.
pub fn h_tunable_coupler<T: Scalar>(phase_rad: T) -> Result<TransferMatrix2x2<T>> {
    let arm = h_phase_shifter(phase_rad)?;
    let dc = h_coupler_3db::<T>();
    let one = Complex::new(T::one(), T::zero());
    Ok(dc.mul(&TransferMatrix2x2::diag(one, arm)).mul(&dc))
}

/// All-pass ring through response `(c - p) / (1 - c p)` with round-trip phasor `p`.
pub fn h_ring_allpass<T: Scalar>(offset_ghz: T, params: &RingParams<T>) -> Result<Complex<T>> {
    finite("offset_ghz", offset_ghz)?;
    params.validate()?;
    let c = params.self_coupling();
    if c * params.round_trip_amplitude == T::one() {
        return Err(Error::Singular(
            "self-coupling * round_trip_amplitude == 1 (uncoupled lossless ring)".into(),
        ));
    }
    let p = params.round_trip(offset_ghz);
    let one = Complex::new(T::one(), T::zero());
    Ok((p * -T::one() + c) / (one - p * c))
}

/// Add-drop ring responses `(through, drop)` from the bus input.
///
/// The drop path picks up half a round trip of phase and loss.
pub fn h_ring_adddrop<T: Scalar>(
    offset_ghz: T,
    params: &RingParams<T>,
) -> Result<(Complex<T>, Complex<T>)> {
    let (through, drop, _) = ring_adddrop_terms(offset_ghz, params)?;
    Ok((through, drop))
}

/// `(through, drop, add_to_drop)`; `add_to_drop` swaps the roles of the couplers.
pub(crate) fn ring_adddrop_terms<T: Scalar>(
    offset_ghz: T,
    params: &RingParams<T>,
) -> Result<(Complex<T>, Complex<T>, Complex<T>)> {
    finite("offset_ghz", offset_ghz)?;
    params.validate()?;
    let kd = params
        .kappa_drop
        .ok_or_else(|| Error::config("add-drop ring requires kappa_drop"))?;
    let c1 = params.self_coupling();
    let c2 = (T::one() - kd).sqrt();
    let s1 = params.kappa.sqrt();
    let s2 = kd.sqrt();
    let g = params.round_trip_amplitude;
    if c1 * c2 * g == T::one() {
        return Err(Error::Singular(
            "c1 * c2 * round_trip_amplitude == 1 (uncoupled lossless ring)".into(),
        ));
    }
    let half = -T::PI() * (offset_ghz - params.detune_ghz) / params.fsr_ghz;
    let zh = phasor(half);
    let p = zh * zh * g;
    let one = Complex::new(T::one(), T::zero());
    let den = one - p * (c1 * c2);
    let through = (p * -c2 + c1) / den;
    let drop = zh * (-(s1 * s2 * g.sqrt())) / den;
    let add_to_drop = (p * -c1 + c2) / den;
    Ok((through, drop, add_to_drop))
}

/// Linear thermo-optic model `phi = pi * P / P_pi`.
pub fn heater_phase_from_power<T: Scalar>(power_mw: T, p_pi_mw: T) -> Result<T> {
    finite("power_mw", power_mw)?;
    finite("p_pi_mw", p_pi_mw)?;
    if !(p_pi_mw > T::zero()) {
        return Err(Error::config(format!("p_pi_mw must be > 0, got {p_pi_mw}")));
    }
    if power_mw < T::zero() {
        return Err(Error::domain("heater power must be >= 0"));
    }
    Ok(T::PI() * power_mw / p_pi_mw)
}

/// Inverse of [`heater_phase_from_power`].
pub fn heater_power_from_phase<T: Scalar>(phase_rad: T, p_pi_mw: T) -> Result<T> {
    if !(p_pi_mw > T::zero()) {
        return Err(Error::config(format!("p_pi_mw must be > 0, got {p_pi_mw}")));
    }
    Ok(phase_rad * p_pi_mw / T::PI())
}

/// Bus coupling that makes an all-pass ring critically coupled: `1 - gamma^2`.
pub fn critical_coupling_kappa<T: Scalar>(round_trip_amplitude: T) -> Result<T> {
    let g = round_trip_amplitude;
    if !(g > T::zero() && g <= T::one()) {
        return Err(Error::domain(format!(
            "round_trip_amplitude out of range (0,1]: {g}"
        )));
    }
    Ok(T::one() - g * g)
}

/// Bus coupling giving an on-resonance power rejection of `rejection_db`
/// relative to the anti-resonant level.
///
/// `under_coupled` selects the branch with `c > gamma`.
pub fn kappa_for_rejection<T: Scalar>(
    round_trip_amplitude: T,
    rejection_db: T,
    under_coupled: bool,
) -> Result<T> {
    let g = round_trip_amplitude;
    if !(g > T::zero() && g < T::one()) {
        return Err(Error::domain("round_trip_amplitude must be in (0,1) for a finite notch"));
    }
    if !(rejection_db > T::zero()) {
        return Err(Error::domain("rejection_db must be > 0"));
    }
    // rejection(c) = 20 log10(|H_anti| / |H_res|), monotone in c on each branch
    let rejection = |c: T| {
        let res = (c - g).abs() / (T::one() - c * g);
        let anti = (c + g) / (T::one() + c * g);
        T::lit(20.0) * (anti / res).log10()
    };
    let (mut lo, mut hi) = if under_coupled { (g, T::one()) } else { (T::zero(), g) };
    // bisection in c: rejection is infinite at c = g and smallest at the far end
    for _ in 0..200 {
        let mid = (lo + hi) / T::lit(2.0);
        let r = rejection(mid);
        let towards_critical_is_lo = under_coupled;
        if (r > rejection_db) == towards_critical_is_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let c = (lo + hi) / T::lit(2.0);
    if (rejection(c) - rejection_db).abs() > T::lit(1e-3) {
        return Err(Error::domain(format!(
            "rejection of {rejection_db} dB unreachable on this coupling branch"
        )));
    }
    Ok(T::one() - c * c)
}
