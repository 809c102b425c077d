//! Component models for the link: faint-pulse source, Mach-Zehnder switch,
//! unbalanced MZI with thermal tuning, fibre with optional polarisation
//! scrambling, and gated photon counters.

use std::f64::consts::{FRAC_1_SQRT_2, TAU};

use num_complex::Complex64;
use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::optics::{
    apply_coupler, apply_delay, apply_jones, apply_loss, apply_phase, db_to_transmission,
    haar_random_unitary, JonesMatrix, JonesVector, ModeState,
};

fn check_unit_interval(name: &str, x: f64) -> Result<()> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(invalid(format!("{name} = {x} must lie in [0, 1]")))
    }
}

fn check_positive(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("{name} = {x} must be positive")))
    }
}

/// Thermo-optic phase model of one interferometer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThermalSpec {
    /// Temperature at which the long-arm thermal phase is zero (K).
    pub t_ref: f64,
    /// Thermo-optic coefficient dn/dT (1/K).
    pub dn_dt: f64,
    /// Arm length difference (m).
    pub delta_l: f64,
    /// Vacuum wavelength (m).
    pub lambda: f64,
}

impl Default for ThermalSpec {
    fn default() -> Self {
        Self { t_ref: 298.15, dn_dt: 1.0e-5, delta_l: 1.6, lambda: 1.55e-6 }
    }
}

impl ThermalSpec {
    pub fn validate(&self) -> Result<()> {
        check_positive("delta_l", self.delta_l)?;
        check_positive("lambda", self.lambda)?;
        check_positive("dn_dt", self.dn_dt)?;
        if !self.t_ref.is_finite() {
            return Err(invalid("t_ref must be finite"));
        }
        Ok(())
    }

    /// Temperature change that advances the phase by one full fringe (K).
    pub fn fringe_period(&self) -> f64 {
        self.lambda / (self.delta_l * self.dn_dt)
    }
}

/// Interferometric phase from temperature detuning, reduced to `[0, 2pi)`.
///
/// `phi = (2 pi / lambda) * dn/dT * dL * (T - T_ref)`.
pub fn temperature_to_phase(thermal: &ThermalSpec, t: f64) -> f64 {
    let phi = TAU / thermal.lambda * thermal.dn_dt * thermal.delta_l * (t - thermal.t_ref);
    wrap_phase(phi)
}

pub(crate) fn wrap_phase(phi: f64) -> f64 {
    let w = phi.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// Unbalanced Mach-Zehnder interferometer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MziSpec {
    pub delay_slots: u32,
    pub r_in: f64,
    pub r_out: f64,
    pub t_short: f64,
    pub t_long: f64,
    pub u_short: JonesMatrix,
    pub u_long: JonesMatrix,
    pub thermal: ThermalSpec,
    pub temperature: f64,
    /// Envelope overlap of this interferometer's delayed pulse with the
    /// reference pulse; scales the coherence of the central-slot paths.
    pub overlap: f64,
}

impl Default for MziSpec {
    /// 50/50 couplers, 8 dB excess loss on the long arm, held at `t_ref`.
    fn default() -> Self {
        Self { t_long: db_to_transmission(8.0), ..Self::ideal() }
    }
}

impl MziSpec {
    /// Lossless, balanced, perfectly coherent interferometer at `t_ref`.
    pub fn ideal() -> Self {
        let thermal = ThermalSpec::default();
        Self {
            delay_slots: 1,
            r_in: 0.5,
            r_out: 0.5,
            t_short: 1.0,
            t_long: 1.0,
            u_short: JonesMatrix::identity(),
            u_long: JonesMatrix::identity(),
            thermal,
            temperature: thermal.t_ref,
            overlap: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.delay_slots < 1 {
            return Err(invalid("delay_slots must be at least 1"));
        }
        check_unit_interval("r_in", self.r_in)?;
        check_unit_interval("r_out", self.r_out)?;
        check_unit_interval("t_short", self.t_short)?;
        check_unit_interval("t_long", self.t_long)?;
        check_unit_interval("overlap", self.overlap)?;
        if !self.temperature.is_finite() {
            return Err(invalid("temperature must be finite"));
        }
        self.thermal.validate()
    }

    /// Long-arm thermal phase at the current temperature.
    pub fn phase(&self) -> f64 {
        temperature_to_phase(&self.thermal, self.temperature)
    }
}

pub(crate) fn short_arm(spec: &MziSpec, state: ModeState, port: u32) -> Result<ModeState> {
    let s = apply_loss(state, port, spec.t_short)?;
    Ok(apply_jones(s, port, &spec.u_short))
}

pub(crate) fn long_arm(spec: &MziSpec, state: ModeState, port: u32, phase: f64) -> Result<ModeState> {
    let s = apply_delay(state, port, spec.delay_slots);
    let s = apply_phase(s, port, phase);
    let s = apply_loss(s, port, spec.t_long)?;
    Ok(apply_jones(s, port, &spec.u_long))
}

/// Propagates `state` (populating `in_port` only) through the interferometer.
///
/// After the input coupler `out_ports.0` is the short arm and `out_ports.1`
/// the long arm; the output coupler recombines them onto the same two ports.
/// An `in_port` outside `out_ports` is fed into the first coupler input.
/// The envelope overlap is not applied here: it acts on probabilities of
/// interfering path pairs and is handled where those pairs are formed.
pub fn mzi_transfer(
    spec: &MziSpec,
    state: ModeState,
    in_port: u32,
    out_ports: (u32, u32),
) -> Result<ModeState> {
    let (p0, p1) = out_ports;
    if p0 == p1 {
        return Err(invalid("MZI output ports must differ"));
    }
    spec.validate()?;
    if let Some(stray) = state.ports().into_iter().find(|&p| p != in_port) {
        return Err(Error::UnsupportedInput(format!(
            "MZI input must populate port {in_port} only, found amplitude on port {stray}"
        )));
    }
    let s = if in_port == p0 || in_port == p1 { state } else { state.relabel_port(in_port, p0)? };
    let s = apply_coupler(s, p0, p1, spec.r_in)?;
    let s = short_arm(spec, s, p0)?;
    let s = long_arm(spec, s, p1, spec.phase())?;
    apply_coupler(s, p0, p1, spec.r_out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SwitchMode {
    Bar,
    Cross,
    Split,
}

/// Mach-Zehnder switch routing plus the phase modulator setting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwitchSetting {
    pub mode: SwitchMode,
    pm_phase: f64,
}

impl SwitchSetting {
    pub const BAR: SwitchSetting = SwitchSetting { mode: SwitchMode::Bar, pm_phase: 0.0 };
    pub const CROSS: SwitchSetting = SwitchSetting { mode: SwitchMode::Cross, pm_phase: 0.0 };

    /// Equal split with the modulator phase reduced to `[0, 2pi)`.
    pub fn split(pm_phase: f64) -> Self {
        Self { mode: SwitchMode::Split, pm_phase: wrap_phase(pm_phase) }
    }

    pub fn pm_phase(&self) -> f64 {
        self.pm_phase
    }
}

/// Routes a single-mode input into the short arm (BAR), the long arm
/// (CROSS), or both with relative phase `pm_phase` on the long arm (SPLIT).
pub fn mzsw_prepare(setting: SwitchSetting, state: ModeState, out_ports: (u32, u32)) -> Result<ModeState> {
    let (short_port, long_port) = out_ports;
    if short_port == long_port {
        return Err(invalid("switch output ports must differ"));
    }
    let pitch = state.slot_pitch();
    let mut out = ModeState::empty(pitch);
    let mut modes = state.iter();
    let Some((idx, j)) = modes.next() else {
        return Ok(out);
    };
    if modes.next().is_some() {
        return Err(Error::UnsupportedInput("switch input must be a single mode".into()));
    }
    match setting.mode {
        SwitchMode::Bar => out.set(idx.slot, short_port, *j),
        SwitchMode::Cross => out.set(idx.slot, long_port, *j),
        SwitchMode::Split => {
            let half = Complex64::new(FRAC_1_SQRT_2, 0.0);
            out.set(idx.slot, short_port, j.scale(half));
            out.set(idx.slot, long_port, j.scale(half * Complex64::cis(setting.pm_phase)));
        }
    }
    Ok(out)
}

/// Attenuated faint-pulse source.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceSpec {
    pub mu: f64,
    pub rep_rate: f64,
    pub polarisation: JonesVector,
}

impl Default for SourceSpec {
    fn default() -> Self {
        Self { mu: 0.1, rep_rate: 500e3, polarisation: JonesVector::te() }
    }
}

impl SourceSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return Err(invalid(format!("mu = {} must be non-negative", self.mu)));
        }
        check_positive("rep_rate", self.rep_rate)?;
        if (self.polarisation.norm_sqr() - 1.0).abs() > 1e-9 {
            return Err(invalid("polarisation must be a unit Jones vector"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FibreSpec {
    pub length_km: f64,
    pub atten_db_per_km: f64,
    /// Random polarisation rotation, common to all slots of a pulse.
    pub scramble: bool,
}

impl Default for FibreSpec {
    fn default() -> Self {
        Self { length_km: 0.0, atten_db_per_km: 0.2, scramble: true }
    }
}

impl FibreSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.length_km >= 0.0 && self.length_km.is_finite()) {
            return Err(invalid("length_km must be non-negative"));
        }
        if !(self.atten_db_per_km >= 0.0 && self.atten_db_per_km.is_finite()) {
            return Err(invalid("atten_db_per_km must be non-negative"));
        }
        if self.transmission() <= 0.0 {
            return Err(invalid("fibre transmission underflows to zero"));
        }
        Ok(())
    }

    pub fn transmission(&self) -> f64 {
        db_to_transmission(self.length_km * self.atten_db_per_km)
    }
}

/// Fibre loss on every port, then an optional common polarisation rotation.
pub fn fibre_transfer_with(
    spec: &FibreSpec,
    state: ModeState,
    rotation: Option<&JonesMatrix>,
) -> Result<ModeState> {
    let t = spec.transmission();
    let mut s = state;
    for port in s.ports() {
        s = apply_loss(s, port, t)?;
        if let Some(u) = rotation {
            s = apply_jones(s, port, u);
        }
    }
    Ok(s)
}

/// Fibre propagation; a scrambling fibre draws one Haar rotation per call.
pub fn fibre_transfer<R: Rng + ?Sized>(spec: &FibreSpec, state: ModeState, rng: &mut R) -> Result<ModeState> {
    let rotation = spec.scramble.then(|| haar_random_unitary(rng));
    fibre_transfer_with(spec, state, rotation.as_ref())
}

/// Gated avalanche photodiode.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorSpec {
    pub efficiency: f64,
    pub dark_prob_per_gate: f64,
    /// Gate duration (s).
    pub gate_width: f64,
    /// Slots (in units of the interferometer delay) in which the gate opens.
    pub gated_slots: Vec<u32>,
}

impl Default for DetectorSpec {
    fn default() -> Self {
        Self { efficiency: 0.10, dark_prob_per_gate: 1e-5, gate_width: 2.5e-9, gated_slots: vec![0, 1, 2] }
    }
}

impl DetectorSpec {
    pub fn validate(&self, slot_pitch: f64) -> Result<()> {
        check_unit_interval("efficiency", self.efficiency)?;
        if !(0.0..1.0).contains(&self.dark_prob_per_gate) {
            return Err(invalid(format!(
                "dark_prob_per_gate = {} must lie in [0, 1)",
                self.dark_prob_per_gate
            )));
        }
        check_positive("gate_width", self.gate_width)?;
        if self.gate_width > slot_pitch {
            return Err(invalid(format!(
                "gate_width = {} s exceeds the slot pitch of {} s",
                self.gate_width, slot_pitch
            )));
        }
        Ok(())
    }

    pub fn gates(&self, slot: u32) -> bool {
        self.gated_slots.contains(&slot)
    }
}

/// Probability that a gate fires, given the single-photon probability of
/// the gated mode: Poissonian photon number with mean `mu * eta * p_mode`,
/// independent dark counts.
pub fn click_probability(p_mode: f64, source: &SourceSpec, det: &DetectorSpec) -> f64 {
    let photon = -(-source.mu * det.efficiency * p_mode).exp_m1();
    let dark = det.dark_prob_per_gate;
    photon + dark - photon * dark
}
