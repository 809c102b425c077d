//! BB84 over the time-bin link.
//!
//! Alice picks a bit and a basis per pulse and sets the switch accordingly;
//! Bob reads the TIME basis from the extreme slots and the PHASE basis from
//! the output port of a central-slot detection.

use std::f64::consts::PI;
use std::fmt;
use std::io::{self, Write};

use rand::Rng;
use rayon::prelude::*;

use crate::devices::{click_probability, SwitchSetting};
use crate::error::{invalid, Result};
use crate::linksim::{chain_probabilities, point_rng, LinkConfig, SlotProbabilities, PORTS, SLOTS};
use crate::optics::haar_random_unitary;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Basis {
    Time,
    Phase,
}

impl fmt::Display for Basis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Basis::Time => "time",
            Basis::Phase => "phase",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    NoClick,
    Click { slot: u8, port: u8 },
    DoubleClick,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PulseRecord {
    pub index: u64,
    pub alice_bit: u8,
    pub alice_basis: Basis,
    pub outcome: Outcome,
}

impl PulseRecord {
    /// Whether sifting keeps this pulse.
    pub fn kept(&self) -> bool {
        match self.outcome {
            Outcome::Click { slot, port } => interpret(slot, port).0 == self.alice_basis,
            _ => false,
        }
    }
}

/// Switch setting for one of the four BB84 states.
pub fn prepare(bit: u8, basis: Basis) -> SwitchSetting {
    match (basis, bit & 1) {
        (Basis::Time, 0) => SwitchSetting::BAR,
        (Basis::Time, _) => SwitchSetting::CROSS,
        (Basis::Phase, 0) => SwitchSetting::split(0.0),
        (Basis::Phase, _) => SwitchSetting::split(PI),
    }
}

/// Basis and bit implied by a detection in `slot` at Bob's `port`.
pub fn interpret(slot: u8, port: u8) -> (Basis, u8) {
    match slot {
        0 => (Basis::Time, 0),
        1 => (Basis::Phase, port),
        _ => (Basis::Time, 1),
    }
}

const STATES: [(u8, Basis); 4] = [(0, Basis::Time), (1, Basis::Time), (0, Basis::Phase), (1, Basis::Phase)];

fn click_table(config: &LinkConfig, probs: &SlotProbabilities) -> [[f64; PORTS]; SLOTS] {
    let mut out = [[0.0; PORTS]; SLOTS];
    for (slot, row) in out.iter_mut().enumerate() {
        for (port, p) in row.iter_mut().enumerate() {
            let det = config.detector(port);
            if det.gates(slot as u32) {
                *p = click_probability(probs.get(slot, port), &config.source, det);
            }
        }
    }
    out
}

struct Session<'a> {
    config: &'a LinkConfig,
    // click tables for STATES when the fibre does not scramble
    fixed: Option<[[[f64; PORTS]; SLOTS]; 4]>,
}

impl<'a> Session<'a> {
    fn new(config: &'a LinkConfig) -> Result<Self> {
        config.validate()?;
        let fixed = if config.fibre.scramble {
            None
        } else {
            let mut tables = [[[0.0; PORTS]; SLOTS]; 4];
            for (t, &(bit, basis)) in tables.iter_mut().zip(STATES.iter()) {
                *t = click_table(config, &chain_probabilities(config, prepare(bit, basis), None)?);
            }
            Some(tables)
        };
        Ok(Self { config, fixed })
    }

    fn pulse<R: Rng + ?Sized>(&self, index: u64, rng: &mut R) -> Result<PulseRecord> {
        let alice_bit = rng.random::<bool>() as u8;
        let alice_basis = if rng.random::<bool>() { Basis::Phase } else { Basis::Time };
        let clicks = match &self.fixed {
            Some(tables) => {
                let k = STATES.iter().position(|s| *s == (alice_bit, alice_basis)).unwrap();
                tables[k]
            }
            None => {
                let u = haar_random_unitary(rng);
                let probs = chain_probabilities(self.config, prepare(alice_bit, alice_basis), Some(&u))?;
                click_table(self.config, &probs)
            }
        };
        let mut outcome = Outcome::NoClick;
        for (slot, row) in clicks.iter().enumerate() {
            for (port, &p) in row.iter().enumerate() {
                // one uniform per gate keeps the stream layout fixed
                let fired = rng.random::<f64>() < p;
                if fired {
                    outcome = match outcome {
                        Outcome::NoClick => Outcome::Click { slot: slot as u8, port: port as u8 },
                        _ => Outcome::DoubleClick,
                    };
                }
            }
        }
        Ok(PulseRecord { index, alice_bit, alice_basis, outcome })
    }
}

/// Sequential session driven by one generator.
pub fn run_session<R: Rng + ?Sized>(
    config: &LinkConfig,
    n_pulses: u64,
    rng: &mut R,
) -> Result<Vec<PulseRecord>> {
    if n_pulses == 0 {
        return Err(invalid("n_pulses must be at least 1"));
    }
    let session = Session::new(config)?;
    (0..n_pulses).map(|i| session.pulse(i, rng)).collect()
}

/// Pulses per independently seeded batch in [`run_session_batched`].
pub const SESSION_BATCH: u64 = 1 << 16;

/// Session split into fixed-size batches, each with the stream
/// `(seed, batch index)`, run in parallel and merged by pulse index.
pub fn run_session_batched(config: &LinkConfig, n_pulses: u64, seed: u64) -> Result<Vec<PulseRecord>> {
    if n_pulses == 0 {
        return Err(invalid("n_pulses must be at least 1"));
    }
    let session = Session::new(config)?;
    let batches = n_pulses.div_ceil(SESSION_BATCH);
    let chunks: Vec<Vec<PulseRecord>> = (0..batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = point_rng(seed, b);
            let start = b * SESSION_BATCH;
            let end = (start + SESSION_BATCH).min(n_pulses);
            (start..end).map(|i| session.pulse(i, &mut rng)).collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    Ok(chunks.into_iter().flatten().collect())
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SiftedKey {
    pub bits_alice: Vec<u8>,
    pub bits_bob: Vec<u8>,
    /// `None` when no TIME-basis bits were kept.
    pub qber_time: Option<f64>,
    pub qber_phase: Option<f64>,
    pub sift_ratio: f64,
    pub kept_time: usize,
    pub kept_phase: usize,
    pub errors_time: usize,
    pub errors_phase: usize,
}

/// Keeps single clicks whose implied basis matches Alice's, in pulse order.
pub fn sift(records: &[PulseRecord]) -> SiftedKey {
    let mut key = SiftedKey::default();
    for r in records {
        let Outcome::Click { slot, port } = r.outcome else {
            continue;
        };
        let (basis, bob_bit) = interpret(slot, port);
        if basis != r.alice_basis {
            continue;
        }
        let error = bob_bit != r.alice_bit;
        match basis {
            Basis::Time => {
                key.kept_time += 1;
                key.errors_time += error as usize;
            }
            Basis::Phase => {
                key.kept_phase += 1;
                key.errors_phase += error as usize;
            }
        }
        key.bits_alice.push(r.alice_bit);
        key.bits_bob.push(bob_bit);
    }
    let rate = |e: usize, n: usize| (n > 0).then(|| e as f64 / n as f64);
    key.qber_time = rate(key.errors_time, key.kept_time);
    key.qber_phase = rate(key.errors_phase, key.kept_phase);
    key.sift_ratio =
        if records.is_empty() { 0.0 } else { key.bits_alice.len() as f64 / records.len() as f64 };
    key
}

/// Phase-basis error rate implied by a fringe visibility, `(1 - V) / 2`.
pub fn qber_phase_prediction(visibility: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&visibility) {
        return Err(invalid(format!("visibility {visibility} outside [0, 1]")));
    }
    Ok((1.0 - visibility) / 2.0)
}

/// Probability that a pulse survives sifting, for a non-rotating fibre.
///
/// Averages over the four states the chance that exactly one gate fires
/// and that gate lies in the basis Alice used.
pub fn expected_sift_ratio(config: &LinkConfig) -> Result<f64> {
    let mut total = 0.0;
    for &(bit, basis) in &STATES {
        let clicks = click_table(config, &chain_probabilities(config, prepare(bit, basis), None)?);
        let gates: Vec<(usize, usize, f64)> = (0..SLOTS)
            .flat_map(|s| (0..PORTS).map(move |q| (s, q)))
            .map(|(s, q)| (s, q, clicks[s][q]))
            .collect();
        for &(s, q, p) in &gates {
            if interpret(s as u8, q as u8).0 != basis {
                continue;
            }
            let others: f64 = gates.iter().filter(|g| (g.0, g.1) != (s, q)).map(|g| 1.0 - g.2).product();
            total += 0.25 * p * others;
        }
    }
    Ok(total)
}

pub const RECORDS_CSV_HEADER: &str = "index,alice_bit,alice_basis,slot,port,kept";

/// One row per pulse. No detection leaves slot and port empty; a double
/// click writes `dc` in both.
pub fn write_records_csv<W: Write>(records: &[PulseRecord], mut w: W) -> io::Result<()> {
    writeln!(w, "{RECORDS_CSV_HEADER}")?;
    for r in records {
        let (slot, port) = match r.outcome {
            Outcome::NoClick => (String::new(), String::new()),
            Outcome::Click { slot, port } => (slot.to_string(), port.to_string()),
            Outcome::DoubleClick => ("dc".into(), "dc".into()),
        };
        writeln!(w, "{},{},{},{},{},{}", r.index, r.alice_bit, r.alice_basis, slot, port, r.kept() as u8)?;
    }
    Ok(())
}

/// Packs bits MSB-first into bytes and renders lowercase hex.
pub fn bits_to_hex(bits: &[u8]) -> String {
    bits.chunks(8)
        .map(|chunk| {
            let byte = chunk.iter().enumerate().fold(0u8, |acc, (i, b)| acc | ((b & 1) << (7 - i)));
            format!("{byte:02x}")
        })
        .collect()
}
