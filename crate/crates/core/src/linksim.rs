//! Full link simulation: switch and Alice's interferometer, fibre, Bob's
//! interferometer and the two gated counters behind it.
//!
//! Alice's interferometer has the switch in place of its input coupler. Bob
//! sees the pulse in three slots: short-short (slot 0), the two interfering
//! mixed paths (slot 1) and long-long (slot 2).

use std::f64::consts::FRAC_PI_2;
use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;

use crate::devices::{
    click_probability, fibre_transfer_with, long_arm, mzi_transfer, mzsw_prepare, short_arm, wrap_phase,
    DetectorSpec, FibreSpec, MziSpec, SourceSpec, SwitchSetting,
};
use crate::error::{invalid, Error, Result};
use crate::optics::{apply_coupler, haar_random_unitary, JonesMatrix, ModeState, DEFAULT_SLOT_PITCH_S};

pub const SLOTS: usize = 3;
pub const PORTS: usize = 2;
pub const CENTRAL_SLOT: usize = 1;

/// Phase added to Alice's long arm so that SPLIT(0) exits Bob's port 0 when
/// the two thermal phases are equal. The switch hands the long arm a real
/// amplitude where a symmetric coupler would give `i`; the three remaining
/// couplers leave the two central paths a quarter wave apart otherwise.
pub const SWITCH_QUADRATURE: f64 = FRAC_PI_2;

/// Alice's switch ports: 0 feeds the short arm, 1 the long arm. Alice's
/// output port 0 is spliced to the fibre, which enters Bob on port 0.
const SHORT: u32 = 0;
const LONG: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct LinkConfig {
    pub source: SourceSpec,
    pub switch_default: SwitchSetting,
    pub alice_mzi: MziSpec,
    pub fibre: FibreSpec,
    pub bob_mzi: MziSpec,
    /// Counters on Bob's output ports 0 and 1.
    pub detectors: (DetectorSpec, DetectorSpec),
    pub pulses_per_point: u64,
    pub seed: u64,
    pub slot_pitch: f64,
}

impl Default for LinkConfig {
    /// Default imperfections: 8 dB long-arm loss in both interferometers,
    /// link coherence 0.995 (carried by Bob), scrambling fibre, eta 0.10,
    /// dark 1e-5 per gate, mu 0.1, 500 kHz for 10 s per scan point.
    fn default() -> Self {
        Self {
            source: SourceSpec::default(),
            switch_default: SwitchSetting::split(0.0),
            alice_mzi: MziSpec::default(),
            fibre: FibreSpec::default(),
            bob_mzi: MziSpec { overlap: 0.995, ..MziSpec::default() },
            detectors: (DetectorSpec::default(), DetectorSpec::default()),
            pulses_per_point: 5_000_000,
            seed: 0,
            slot_pitch: DEFAULT_SLOT_PITCH_S,
        }
    }
}

impl LinkConfig {
    /// Lossless, coherent, noiseless link with a non-scrambling fibre.
    pub fn ideal() -> Self {
        let det = DetectorSpec { efficiency: 1.0, dark_prob_per_gate: 0.0, ..Default::default() };
        Self {
            alice_mzi: MziSpec::ideal(),
            bob_mzi: MziSpec::ideal(),
            fibre: FibreSpec { length_km: 0.0, atten_db_per_km: 0.0, scramble: false },
            detectors: (det.clone(), det),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ctx = |what: &'static str| move |e: Error| prefix_error(what, e);
        self.source.validate().map_err(ctx("source"))?;
        self.alice_mzi.validate().map_err(ctx("alice_mzi"))?;
        self.bob_mzi.validate().map_err(ctx("bob_mzi"))?;
        self.fibre.validate().map_err(ctx("fibre"))?;
        self.detectors.0.validate(self.slot_pitch).map_err(ctx("detector0"))?;
        self.detectors.1.validate(self.slot_pitch).map_err(ctx("detector1"))?;
        if self.alice_mzi.delay_slots != self.bob_mzi.delay_slots {
            return Err(invalid(format!(
                "interferometer delays differ: alice {} slots, bob {} slots",
                self.alice_mzi.delay_slots, self.bob_mzi.delay_slots
            )));
        }
        if self.slot_pitch.is_nan() || self.slot_pitch <= 0.0 {
            return Err(invalid("slot_pitch must be positive"));
        }
        Ok(())
    }

    /// Coherence between the two central-slot paths.
    pub fn coherence(&self) -> f64 {
        self.alice_mzi.overlap * self.bob_mzi.overlap
    }

    /// Thermal phase difference between Alice's and Bob's long arms.
    pub fn delta_phi(&self) -> f64 {
        wrap_phase(self.alice_mzi.phase() - self.bob_mzi.phase())
    }

    pub fn detector(&self, port: usize) -> &DetectorSpec {
        if port == 0 {
            &self.detectors.0
        } else {
            &self.detectors.1
        }
    }
}

fn prefix_error(section: &str, e: Error) -> Error {
    match e {
        Error::InvalidArgument(m) => Error::InvalidArgument(format!("{section}.{m}")),
        other => other,
    }
}

/// Single-photon detection probability per (slot, port) at Bob's outputs.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SlotProbabilities {
    pub table: [[f64; PORTS]; SLOTS],
}

impl SlotProbabilities {
    pub fn get(&self, slot: usize, port: usize) -> f64 {
        self.table[slot][port]
    }

    pub fn slot_total(&self, slot: usize) -> f64 {
        self.table[slot].iter().sum()
    }

    pub fn total(&self) -> f64 {
        self.table.iter().flatten().sum()
    }

    fn add_scaled(&mut self, other: &SlotProbabilities, k: f64) {
        for (row, orow) in self.table.iter_mut().zip(other.table.iter()) {
            for (x, y) in row.iter_mut().zip(orow.iter()) {
                *x += k * y;
            }
        }
    }

    fn scaled(&self, k: f64) -> SlotProbabilities {
        let mut out = SlotProbabilities::default();
        out.add_scaled(self, k);
        out
    }

    /// Largest entrywise absolute difference.
    pub fn max_abs_diff(&self, other: &SlotProbabilities) -> f64 {
        self.table
            .iter()
            .flatten()
            .zip(other.table.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Pure-state propagation from Alice's two arms to Bob's outputs.
fn propagate(
    config: &LinkConfig,
    prepared: ModeState,
    rotation: Option<&JonesMatrix>,
) -> Result<SlotProbabilities> {
    let alice = &config.alice_mzi;
    let s = short_arm(alice, prepared, SHORT)?;
    let s = long_arm(alice, s, LONG, alice.phase() + SWITCH_QUADRATURE)?;
    let s = apply_coupler(s, SHORT, LONG, alice.r_out)?.retain_port(SHORT);
    let s = fibre_transfer_with(&config.fibre, s, rotation)?;
    let s = mzi_transfer(&config.bob_mzi, s, SHORT, (0, 1))?;

    let d = config.bob_mzi.delay_slots;
    let mut probs = SlotProbabilities::default();
    for (idx, j) in s.iter() {
        let slot = (idx.slot / d) as usize;
        debug_assert!(idx.slot % d == 0 && slot < SLOTS);
        probs.table[slot][idx.port as usize] += j.norm_sqr();
    }
    Ok(probs)
}

/// Deterministic single-photon propagation of one prepared pulse.
///
/// `rotation` is a fixed fibre polarisation transform; `None` means no
/// rotation regardless of the fibre's scramble flag. With link coherence
/// below one, the central-slot paths mix coherently with weight `gamma`
/// and incoherently with weight `1 - gamma`.
pub fn chain_probabilities(
    config: &LinkConfig,
    setting: SwitchSetting,
    rotation: Option<&JonesMatrix>,
) -> Result<SlotProbabilities> {
    let input =
        ModeState::new_basis_state(0, 0, config.source.polarisation)?.with_slot_pitch(config.slot_pitch);
    let prepared = mzsw_prepare(setting, input, (SHORT, LONG))?;
    let coherent = propagate(config, prepared.clone(), rotation)?;

    let gamma = config.coherence();
    let both_arms = prepared.ports().len() == 2;
    if gamma >= 1.0 || !both_arms {
        return Ok(coherent);
    }
    let mut incoherent = propagate(config, prepared.clone().retain_port(SHORT), rotation)?;
    incoherent.add_scaled(&propagate(config, prepared.retain_port(LONG), rotation)?, 1.0);

    let mut mixed = coherent.scaled(gamma);
    mixed.add_scaled(&incoherent, 1.0 - gamma);
    Ok(mixed)
}

/// Mean of [`chain_probabilities`] over `n_samples` Haar fibre rotations.
pub fn scrambled_probabilities<R: Rng + ?Sized>(
    config: &LinkConfig,
    setting: SwitchSetting,
    n_samples: usize,
    rng: &mut R,
) -> Result<SlotProbabilities> {
    if n_samples == 0 {
        return Err(invalid("n_samples must be at least 1"));
    }
    let mut acc = SlotProbabilities::default();
    for _ in 0..n_samples {
        let u = haar_random_unitary(rng);
        acc.add_scaled(&chain_probabilities(config, setting, Some(&u))?, 1.0);
    }
    Ok(acc.scaled(1.0 / n_samples as f64))
}

/// Worst-case central-slot visibility over input polarisations for Bob's
/// path transforms: `|Tr(u_short^dagger u_long)| / 2`.
pub fn min_visibility_over_polarisation(u_short: &JonesMatrix, u_long: &JonesMatrix) -> Result<f64> {
    for (name, u) in [("u_short", u_short), ("u_long", u_long)] {
        if !u.is_unitary() {
            return Err(invalid(format!("{name} is not unitary (deviation {:.3e})", u.unitarity_error())));
        }
    }
    Ok(((u_short.adjoint() * *u_long).trace().norm() / 2.0).min(1.0))
}

/// Noise-free central-slot fringe visibility on Bob's port 0 for a fixed
/// fibre rotation, from four modulator phases a quarter wave apart.
pub fn central_visibility(config: &LinkConfig, rotation: Option<&JonesMatrix>) -> Result<f64> {
    let mut p = [0.0; 4];
    for (k, pk) in p.iter_mut().enumerate() {
        let setting = SwitchSetting::split(k as f64 * FRAC_PI_2);
        *pk = chain_probabilities(config, setting, rotation)?.get(CENTRAL_SLOT, 0);
    }
    let mean2 = p[0] + p[2];
    if mean2 <= 0.0 {
        return Err(Error::UndefinedVisibility);
    }
    Ok((p[0] - p[2]).hypot(p[1] - p[3]) / mean2)
}

/// Smallest [`central_visibility`] over `n` Haar-random fibre rotations.
pub fn measured_min_visibility<R: Rng + ?Sized>(config: &LinkConfig, n: usize, rng: &mut R) -> Result<f64> {
    let mut worst = f64::INFINITY;
    for _ in 0..n {
        let u = haar_random_unitary(rng);
        worst = worst.min(central_visibility(config, Some(&u))?);
    }
    Ok(worst)
}

/// Gated counts per (slot, port).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SlotCounts {
    pub table: [[u64; PORTS]; SLOTS],
}

impl SlotCounts {
    pub fn get(&self, slot: usize, port: usize) -> u64 {
        self.table[slot][port]
    }
}

fn pulses_in(config: &LinkConfig, duration_s: f64) -> Result<u64> {
    if !(duration_s > 0.0 && duration_s.is_finite()) {
        return Err(invalid(format!("duration_s = {duration_s} must be positive")));
    }
    Ok((config.source.rep_rate * duration_s).round() as u64)
}

fn binomial<R: Rng + ?Sized>(n: u64, p: f64, rng: &mut R) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    Binomial::new(n, p.min(1.0)).expect("probability clamped to [0, 1]").sample(rng)
}

/// Samples counts over `duration_s` for every gated (slot, port).
pub fn sample_counts<R: Rng + ?Sized>(
    probs: &SlotProbabilities,
    config: &LinkConfig,
    duration_s: f64,
    rng: &mut R,
) -> Result<SlotCounts> {
    let n = pulses_in(config, duration_s)?;
    let mut counts = SlotCounts::default();
    for slot in 0..SLOTS {
        for port in 0..PORTS {
            let det = config.detector(port);
            if det.gates(slot as u32) {
                let p = click_probability(probs.get(slot, port), &config.source, det);
                counts.table[slot][port] = binomial(n, p, rng);
            }
        }
    }
    Ok(counts)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanRow {
    pub t1: f64,
    pub phase: f64,
    pub counts_port0: u64,
    pub counts_port1: u64,
    pub expected_p0: f64,
    pub expected_p1: f64,
}

/// Alice temperature sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanSpec {
    pub t1_start: f64,
    pub t1_stop: f64,
    /// Number of points, both ends included.
    pub steps: usize,
    pub setting: SwitchSetting,
    /// Draw an independent fibre rotation for every pulse.
    pub scramble_per_pulse: bool,
    /// Rotations averaged per point to estimate the per-pulse mean.
    pub scramble_samples: usize,
}

impl ScanSpec {
    /// Two fringe periods from Alice's reference temperature, 24 points per period.
    pub fn two_periods(config: &LinkConfig) -> Self {
        let th = &config.alice_mzi.thermal;
        Self {
            t1_start: th.t_ref,
            t1_stop: th.t_ref + 2.0 * th.fringe_period(),
            steps: 49,
            setting: SwitchSetting::split(0.0),
            scramble_per_pulse: config.fibre.scramble,
            scramble_samples: 256,
        }
    }

    pub fn temperatures(&self) -> Vec<f64> {
        let span = self.t1_stop - self.t1_start;
        let last = (self.steps - 1) as f64;
        (0..self.steps).map(|i| self.t1_start + span * i as f64 / last).collect()
    }
}

/// RNG for one scan point or batch, independent of evaluation order.
pub fn point_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn scan_point(config: &LinkConfig, scan: &ScanSpec, index: usize, t1: f64) -> Result<ScanRow> {
    let mut cfg = config.clone();
    cfg.alice_mzi.temperature = t1;
    let mut rng = point_rng(config.seed, index as u64);

    // Per-pulse scrambling: each pulse clicks with its own rotation's
    // probability, so the count over N pulses is Binomial(N, E[p_click]).
    let rotations: Vec<Option<JonesMatrix>> = if scan.scramble_per_pulse {
        (0..scan.scramble_samples.max(1)).map(|_| Some(haar_random_unitary(&mut rng))).collect()
    } else if cfg.fibre.scramble {
        vec![Some(haar_random_unitary(&mut rng))]
    } else {
        vec![None]
    };

    let mut expected = [0.0; PORTS];
    let mut click = [0.0; PORTS];
    for u in &rotations {
        let probs = chain_probabilities(&cfg, scan.setting, u.as_ref())?;
        for port in 0..PORTS {
            let p = probs.get(CENTRAL_SLOT, port);
            expected[port] += p;
            click[port] += click_probability(p, &cfg.source, cfg.detector(port));
        }
    }
    let k = rotations.len() as f64;
    let mut counts = [0u64; PORTS];
    for port in 0..PORTS {
        expected[port] /= k;
        if cfg.detector(port).gates(CENTRAL_SLOT as u32) {
            counts[port] = binomial(cfg.pulses_per_point, click[port] / k, &mut rng);
        }
    }
    Ok(ScanRow {
        t1,
        phase: cfg.delta_phi(),
        counts_port0: counts[0],
        counts_port1: counts[1],
        expected_p0: expected[0],
        expected_p1: expected[1],
    })
}

/// Central-slot counts at Bob's two ports while Alice's temperature is swept.
///
/// Each point runs `config.pulses_per_point` pulses; points are evaluated in
/// parallel with streams derived from `(config.seed, point index)`.
pub fn fringe_scan(config: &LinkConfig, scan: &ScanSpec) -> Result<Vec<ScanRow>> {
    if scan.steps < 2 {
        return Err(invalid("scan needs at least 2 steps"));
    }
    config.validate()?;
    scan.temperatures().into_par_iter().enumerate().map(|(i, t1)| scan_point(config, scan, i, t1)).collect()
}

/// `(max - min) / (max + min)` over a series.
pub fn visibility<I: IntoIterator<Item = f64>>(series: I) -> Result<f64> {
    let (mut lo, mut hi, mut n) = (f64::INFINITY, f64::NEG_INFINITY, 0usize);
    for x in series {
        lo = lo.min(x);
        hi = hi.max(x);
        n += 1;
    }
    if n == 0 || hi + lo <= 0.0 {
        return Err(Error::UndefinedVisibility);
    }
    Ok((hi - lo) / (hi + lo))
}

/// Least-squares fit of `c + a cos(phi) + b sin(phi)`; returns `sqrt(a^2 + b^2) / c`.
pub fn fitted_visibility(phases: &[f64], values: &[f64]) -> Result<f64> {
    if phases.len() != values.len() || phases.len() < 3 {
        return Err(invalid("fit needs at least 3 paired samples"));
    }
    let mut ata = [[0.0; 3]; 3];
    let mut atb = [0.0; 3];
    for (&phi, &y) in phases.iter().zip(values) {
        let row = [1.0, phi.cos(), phi.sin()];
        for i in 0..3 {
            atb[i] += row[i] * y;
            for j in 0..3 {
                ata[i][j] += row[i] * row[j];
            }
        }
    }
    let [c, a, b] = solve3(ata, atb).ok_or_else(|| invalid("phases do not span a fringe"))?;
    if c <= 0.0 {
        return Err(Error::UndefinedVisibility);
    }
    Ok(a.hypot(b) / c)
}

fn solve3(m: [[f64; 3]; 3], rhs: [f64; 3]) -> Option<[f64; 3]> {
    let det = |m: &[[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(&m);
    if d.abs() < 1e-12 {
        return None;
    }
    let mut out = [0.0; 3];
    for (col, x) in out.iter_mut().enumerate() {
        let mut mc = m;
        for row in 0..3 {
            mc[row][col] = rhs[row];
        }
        *x = det(&mc) / d;
    }
    Some(out)
}

pub const SCAN_CSV_HEADER: &str = "t1_K,phase_rad,counts_p0,counts_p1,expected_p0,expected_p1";

pub fn write_scan_csv<W: Write>(rows: &[ScanRow], mut w: W) -> io::Result<()> {
    writeln!(w, "{SCAN_CSV_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.t1, r.phase, r.counts_port0, r.counts_port1, r.expected_p0, r.expected_p1
        )?;
    }
    Ok(())
}

/// Phase of the prepared state seen in the central slot, `pm + delta_phi`.
pub fn effective_phase(config: &LinkConfig, setting: SwitchSetting) -> f64 {
    wrap_phase(setting.pm_phase() + config.delta_phi())
}

/// Expected ideal-chain central-slot probability at port 0: `(1 + cos) / 8`.
pub fn ideal_central_p0(phase: f64) -> f64 {
    (1.0 + phase.cos()) / 8.0
}
