use crate::circuit::{BlockParams, CircuitGraph, GraphBuilder};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::transfer::{
    amplitude_from_db_loss, PhaseShifterState, RingParams, WaveguideParams, DEFAULT_LOSS_DB_PER_CM,
    SPEED_OF_LIGHT,
};

pub const DEINTERLEAVER_BAR: &str = "bar";
pub const DEINTERLEAVER_CROSS: &str = "cross";
pub const SHAPER_DETECTOR: &str = "detector";
pub const SHAPER_MONITOR: &str = "monitor";

pub const DEINT_IN: &str = "deint_in";
pub const DEINT_OUT: &str = "deint_out";
pub const DEINT_ARM: &str = "deint_arm";
pub const DEINT_DELAY: &str = "deint_delay";
pub const DEINT_RINGS: [&str; 3] = ["deint_r1", "deint_r2", "deint_r3"];
pub const BAR_PS: &str = "bar_ps";
pub const BAR_TC: &str = "bar_tc";
pub const RING_AP: &str = "ring_ap";
pub const RING_AD: &str = "ring_ad";
pub const COMBINER: &str = "comb";

/// Heater state of the de-interleaver, expressed for a crossover at offset 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeinterleaverHeaters<T> {
    pub coupler_in: T,
    pub coupler_out: T,
    /// Short-arm phase shifter.
    pub arm_phase: T,
    /// Rings 1 and 2 load the long arm, ring 3 the short arm.
    pub kappas: [T; 3],
    pub detunes_ghz: [T; 3],
}

impl<T: Scalar> Default for DeinterleaverHeaters<T> {
    fn default() -> Self {
        Self {
            coupler_in: T::FRAC_PI_2(),
            coupler_out: T::FRAC_PI_2(),
            arm_phase: T::zero(),
            kappas: [T::lit(0.5); 3],
            detunes_ghz: [T::zero(); 3],
        }
    }
}

impl<T: Scalar> DeinterleaverHeaters<T> {
    /// Reads the heater state back from a graph produced by [`build_deinterleaver`]
    /// (or [`build_shaper`]) with crossover `crossover_ghz`.
    pub fn from_graph(graph: &CircuitGraph<T>, spec: &DeinterleaverSpec<T>) -> Result<Self> {
        let phase = |id: &str| -> Result<T> {
            match graph.block(id).map(|b| &b.params) {
                Some(BlockParams::PhaseShifter(s) | BlockParams::TunableCoupler(s)) => {
                    Ok(s.phase_rad)
                }
                _ => Err(Error::config(format!("graph has no phase block '{id}'"))),
            }
        };
        let mut out = Self {
            coupler_in: phase(DEINT_IN)?,
            coupler_out: phase(DEINT_OUT)?,
            arm_phase: phase(DEINT_ARM)? - spec.arm_phase_shift(),
            ..Self::default()
        };
        for (i, id) in DEINT_RINGS.iter().enumerate() {
            match graph.block(id).map(|b| &b.params) {
                Some(BlockParams::RingAllPass(r)) => {
                    out.kappas[i] = r.kappa;
                    out.detunes_ghz[i] = r.detune_ghz - spec.crossover_ghz;
                }
                _ => return Err(Error::config(format!("graph has no ring '{id}'"))),
            }
        }
        Ok(out)
    }
}

/// Ring-assisted MZI half-band de-interleaver.
///
/// The long arm carries a delay of `1/(2*passband)` and two all-pass rings,
/// the short arm a phase shifter and one ring. All rings have an FSR equal to
/// the passband, so the device period is twice the passband. Bar passes
/// `[crossover - passband, crossover]`, cross the adjacent channel above.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeinterleaverSpec<T> {
    pub passband_ghz: T,
    pub target_extinction_db: T,
    /// Transition band excluded on each side of a channel when measuring extinction.
    pub guard_ghz: T,
    pub group_index: T,
    pub loss_db_per_cm: T,
    pub crossover_ghz: T,
    pub heaters: DeinterleaverHeaters<T>,
}

impl<T: Scalar> Default for DeinterleaverSpec<T> {
    fn default() -> Self {
        Self {
            passband_ghz: T::lit(30.0),
            target_extinction_db: T::lit(20.0),
            guard_ghz: T::lit(3.0),
            group_index: T::lit(4.3),
            loss_db_per_cm: T::lit(DEFAULT_LOSS_DB_PER_CM),
            crossover_ghz: T::zero(),
            heaters: DeinterleaverHeaters::default(),
        }
    }
}

impl<T: Scalar> DeinterleaverSpec<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.passband_ghz > T::zero()) || !self.passband_ghz.is_finite() {
            return Err(Error::domain("passband_ghz must be > 0"));
        }
        if !(self.group_index > T::zero()) {
            return Err(Error::domain("group_index must be > 0"));
        }
        if !(self.guard_ghz >= T::zero()) || self.guard_ghz * T::lit(2.0) >= self.passband_ghz {
            return Err(Error::domain("guard_ghz must lie in [0, passband/2)"));
        }
        Ok(())
    }

    pub fn ring_fsr_ghz(&self) -> T {
        self.passband_ghz
    }

    pub fn period_ghz(&self) -> T {
        self.passband_ghz * T::lit(2.0)
    }

    /// Long-arm excess delay in ns.
    pub fn delay_ns(&self) -> T {
        T::one() / self.period_ghz()
    }

    fn c_over_ng_cm_per_ns(&self) -> T {
        T::lit(SPEED_OF_LIGHT * 1e-7) / self.group_index
    }

    pub fn ring_round_trip_amplitude(&self) -> Result<T> {
        let length_cm = self.c_over_ng_cm_per_ns() / self.ring_fsr_ghz();
        amplitude_from_db_loss(self.loss_db_per_cm, length_cm)
    }

    pub fn delay_line(&self) -> Result<WaveguideParams<T>> {
        let opl_m = T::lit(SPEED_OF_LIGHT * 1e-9) * self.delay_ns();
        let length_cm = self.c_over_ng_cm_per_ns() * self.delay_ns();
        WaveguideParams::new(opl_m, self.loss_db_per_cm, length_cm)
    }

    /// Short-arm phase that moves the whole response by `crossover_ghz`.
    pub fn arm_phase_shift(&self) -> T {
        T::two_pi() * self.crossover_ghz * self.delay_ns()
    }

    pub fn with_crossover(mut self, crossover_ghz: T) -> Self {
        self.crossover_ghz = crossover_ghz;
        self
    }

    pub fn with_heaters(mut self, heaters: DeinterleaverHeaters<T>) -> Self {
        self.heaters = heaters;
        self
    }

    /// Interior of the bar channel `[crossover - passband, crossover]`, guards removed.
    pub fn bar_band(&self) -> (T, T) {
        (
            self.crossover_ghz - self.passband_ghz + self.guard_ghz,
            self.crossover_ghz - self.guard_ghz,
        )
    }

    /// Interior of the cross channel `[crossover, crossover + passband]`.
    pub fn cross_band(&self) -> (T, T) {
        (
            self.crossover_ghz + self.guard_ghz,
            self.crossover_ghz + self.passband_ghz - self.guard_ghz,
        )
    }

    /// Heaters the extinction tuner adjusts.
    pub fn tuning_heaters() -> Vec<String> {
        let mut v = vec![DEINT_ARM.to_string()];
        v.extend(DEINT_RINGS.iter().map(|r| format!("{r}.kappa")));
        v
    }

    fn add_to(&self, g: GraphBuilder<T>) -> Result<GraphBuilder<T>> {
        self.validate()?;
        let h = &self.heaters;
        let gamma = self.ring_round_trip_amplitude()?;
        let ring = |i: usize| -> Result<BlockParams<T>> {
            Ok(BlockParams::RingAllPass(RingParams::all_pass(
                self.ring_fsr_ghz(),
                h.kappas[i],
                gamma,
                h.detunes_ghz[i] + self.crossover_ghz,
            )?))
        };
        let tc = |p: T| BlockParams::TunableCoupler(PhaseShifterState::from_phase(p));
        Ok(g
            .block(DEINT_IN, tc(h.coupler_in))
            .block(
                DEINT_ARM,
                BlockParams::PhaseShifter(PhaseShifterState::from_phase(
                    h.arm_phase + self.arm_phase_shift(),
                )),
            )
            .block(DEINT_RINGS[2], ring(2)?)
            .block(DEINT_DELAY, BlockParams::Waveguide(self.delay_line()?))
            .block(DEINT_RINGS[0], ring(0)?)
            .block(DEINT_RINGS[1], ring(1)?)
            .block(DEINT_OUT, tc(h.coupler_out))
            .connect("deint_in.out1", "deint_arm.in")
            .connect("deint_arm.out", "deint_r3.in")
            .connect("deint_r3.out", "deint_out.in1")
            .connect("deint_in.out2", "deint_delay.in")
            .connect("deint_delay.out", "deint_r1.in")
            .connect("deint_r1.out", "deint_r2.in")
            .connect("deint_r2.out", "deint_out.in2")
            .input("in", "deint_in.in1"))
    }
}

/// Two-output (bar, cross) de-interleaver graph.
pub fn build_deinterleaver<T: Scalar>(spec: &DeinterleaverSpec<T>) -> Result<CircuitGraph<T>> {
    spec.add_to(CircuitGraph::builder())?
        .output(DEINTERLEAVER_BAR, "deint_out.out1")
        .output(DEINTERLEAVER_CROSS, "deint_out.out2")
        .build()
}

/// Which add-drop port feeds the recombiner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DropOutput {
    #[default]
    Through,
    Drop,
}

/// Full spectral shaper: de-interleaver, bar path (phase shifter and tunable
/// coupler acting on the isolated sideband), cross path (all-pass then
/// add-drop ring) and a 3-dB recombiner.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShaperConfig<T> {
    pub deinterleaver: DeinterleaverSpec<T>,
    /// How far the optical carrier sits inside the cross channel; negative
    /// values put it inside the bar channel instead.
    pub carrier_offset_ghz: T,
    pub bar_phase: T,
    pub coupler_phase: T,
    pub ring_allpass: RingParams<T>,
    pub ring_adddrop: RingParams<T>,
    pub drop_output: DropOutput,
}

impl<T: Scalar> ShaperConfig<T> {
    /// Default shaper with ring round-trip amplitude `gamma` on the 50 GHz rings.
    pub fn with_ring_amplitude(gamma: T) -> Result<Self> {
        let fsr = T::lit(50.0);
        Ok(Self {
            deinterleaver: DeinterleaverSpec::default(),
            carrier_offset_ghz: T::lit(2.0),
            bar_phase: T::zero(),
            coupler_phase: T::PI(),
            ring_allpass: RingParams::all_pass(fsr, T::zero(), gamma, T::zero())?,
            ring_adddrop: RingParams::add_drop(fsr, T::zero(), T::zero(), gamma, T::zero())?,
            drop_output: DropOutput::Through,
        })
    }

    pub fn deinterleaver_spec(&self) -> DeinterleaverSpec<T> {
        self.deinterleaver.with_crossover(-self.carrier_offset_ghz)
    }
}

pub fn build_shaper<T: Scalar>(config: &ShaperConfig<T>) -> Result<CircuitGraph<T>> {
    let ring_ad_port = match config.drop_output {
        DropOutput::Through => "ring_ad.through",
        DropOutput::Drop => "ring_ad.drop",
    };
    config
        .deinterleaver_spec()
        .add_to(CircuitGraph::builder())?
        .block(
            BAR_PS,
            BlockParams::PhaseShifter(PhaseShifterState::from_phase(config.bar_phase)),
        )
        .block(
            BAR_TC,
            BlockParams::TunableCoupler(PhaseShifterState::from_phase(config.coupler_phase)),
        )
        .block(RING_AP, BlockParams::RingAllPass(config.ring_allpass))
        .block(RING_AD, BlockParams::RingAddDrop(config.ring_adddrop))
        .block(COMBINER, BlockParams::Coupler3db)
        .connect("deint_out.out1", "bar_ps.in")
        .connect("bar_ps.out", "bar_tc.in1")
        .connect("bar_tc.out1", "comb.in1")
        .connect("deint_out.out2", "ring_ap.in")
        .connect("ring_ap.out", "ring_ad.in")
        .connect(ring_ad_port, "comb.in2")
        .output(SHAPER_DETECTOR, "comb.out1")
        .output(SHAPER_MONITOR, "comb.out2")
        .build()
}
