//! Mode-level linear optics.
//!
//! A single-photon pulse is described by a sparse table of complex
//! amplitudes indexed by (time slot, spatial port), each entry carrying a
//! two-component polarisation (Jones) vector. Elements act on one port or a
//! pair of ports and are applied as value transforms, so an interferometer
//! is just a sequence of calls.
//!
//! Couplers use the symmetric convention
//!
//! ```text
//! | a' |   |  sqrt(r)      i sqrt(1-r) | | a |
//! | b' | = | i sqrt(1-r)     sqrt(r)   | | b |
//! ```
//!
//! applied slot by slot and identically to both polarisation components.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::ops::{Add, Mul};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Result};

const C0: Complex64 = Complex64::new(0.0, 0.0);
const C1: Complex64 = Complex64::new(1.0, 0.0);

/// Tolerance used when checking unitarity of user-supplied matrices.
pub const UNITARY_TOL: f64 = 1e-12;

/// Two-component polarisation amplitude (horizontal/TE, vertical/TM).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JonesVector {
    pub h: Complex64,
    pub v: Complex64,
}

impl JonesVector {
    pub const fn new(h: Complex64, v: Complex64) -> Self {
        Self { h, v }
    }

    /// TE polarisation, (1, 0).
    pub const fn te() -> Self {
        Self { h: C1, v: C0 }
    }

    pub const fn zero() -> Self {
        Self { h: C0, v: C0 }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.h.norm_sqr() + self.v.norm_sqr()
    }

    pub fn is_zero(&self) -> bool {
        self.h == C0 && self.v == C0
    }

    pub fn scale(self, k: Complex64) -> Self {
        Self { h: self.h * k, v: self.v * k }
    }

    /// Hermitian inner product `<self|other>`.
    pub fn inner(&self, other: &JonesVector) -> Complex64 {
        self.h.conj() * other.h + self.v.conj() * other.v
    }
}

impl Add for JonesVector {
    type Output = JonesVector;
    fn add(self, rhs: Self) -> Self {
        Self { h: self.h + rhs.h, v: self.v + rhs.v }
    }
}

/// 2x2 complex polarisation transform, row-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JonesMatrix(pub [[Complex64; 2]; 2]);

impl JonesMatrix {
    pub const fn identity() -> Self {
        JonesMatrix([[C1, C0], [C0, C1]])
    }

    pub fn diag(a: Complex64, b: Complex64) -> Self {
        JonesMatrix([[a, C0], [C0, b]])
    }

    /// Differential retarder `diag(e^{i delta}, e^{-i delta})`.
    pub fn retarder(delta: f64) -> Self {
        Self::diag(Complex64::cis(delta), Complex64::cis(-delta))
    }

    pub fn apply(&self, j: &JonesVector) -> JonesVector {
        let m = &self.0;
        JonesVector { h: m[0][0] * j.h + m[0][1] * j.v, v: m[1][0] * j.h + m[1][1] * j.v }
    }

    pub fn adjoint(&self) -> Self {
        let m = &self.0;
        JonesMatrix([[m[0][0].conj(), m[1][0].conj()], [m[0][1].conj(), m[1][1].conj()]])
    }

    pub fn trace(&self) -> Complex64 {
        self.0[0][0] + self.0[1][1]
    }

    pub fn det(&self) -> Complex64 {
        let m = &self.0;
        m[0][0] * m[1][1] - m[0][1] * m[1][0]
    }

    /// Largest entrywise deviation of `M^dagger M` from the identity.
    pub fn unitarity_error(&self) -> f64 {
        let p = self.adjoint() * *self;
        let mut worst: f64 = 0.0;
        for (i, row) in p.0.iter().enumerate() {
            for (j, z) in row.iter().enumerate() {
                let target = if i == j { C1 } else { C0 };
                worst = worst.max((z - target).norm());
            }
        }
        worst
    }

    pub fn is_unitary(&self) -> bool {
        self.unitarity_error() <= UNITARY_TOL
    }
}

impl Default for JonesMatrix {
    fn default() -> Self {
        Self::identity()
    }
}

impl Mul for JonesMatrix {
    type Output = JonesMatrix;
    fn mul(self, rhs: Self) -> Self {
        let (a, b) = (&self.0, &rhs.0);
        let mut out = [[C0; 2]; 2];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, z) in row.iter_mut().enumerate() {
                *z = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        JonesMatrix(out)
    }
}

/// Time slot (in units of the slot pitch) and spatial port of one mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ModeIndex {
    pub slot: u32,
    pub port: u32,
}

impl ModeIndex {
    pub const fn new(slot: u32, port: u32) -> Self {
        Self { slot, port }
    }
}

/// Single-photon wavefunction of one pulse over discrete modes.
///
/// Entries that are not stored have exactly zero amplitude. Elements never
/// store an all-zero vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeState {
    amplitudes: BTreeMap<ModeIndex, JonesVector>,
    slot_pitch: f64,
}

/// Default slot pitch: one interferometer delay, 8 ns.
pub const DEFAULT_SLOT_PITCH_S: f64 = 8e-9;

impl ModeState {
    pub fn empty(slot_pitch: f64) -> Self {
        Self { amplitudes: BTreeMap::new(), slot_pitch }
    }

    /// A state with a single populated mode.
    pub fn new_basis_state(slot: u32, port: u32, jones: JonesVector) -> Result<Self> {
        let n = jones.norm_sqr();
        if !n.is_finite() || n <= 0.0 {
            return Err(invalid("basis state needs a nonzero, finite Jones vector"));
        }
        let mut s = Self::empty(DEFAULT_SLOT_PITCH_S);
        s.amplitudes.insert(ModeIndex::new(slot, port), jones);
        Ok(s)
    }

    pub fn with_slot_pitch(mut self, slot_pitch: f64) -> Self {
        self.slot_pitch = slot_pitch;
        self
    }

    pub fn slot_pitch(&self) -> f64 {
        self.slot_pitch
    }

    pub fn get(&self, slot: u32, port: u32) -> JonesVector {
        self.amplitudes.get(&ModeIndex::new(slot, port)).copied().unwrap_or(JonesVector::zero())
    }

    /// Sets a mode amplitude; an all-zero vector removes the entry.
    pub fn set(&mut self, slot: u32, port: u32, j: JonesVector) {
        let idx = ModeIndex::new(slot, port);
        if j.is_zero() {
            self.amplitudes.remove(&idx);
        } else {
            self.amplitudes.insert(idx, j);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ModeIndex, &JonesVector)> {
        self.amplitudes.iter()
    }

    pub fn len(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitudes.is_empty()
    }

    /// Distinct populated ports, ascending.
    pub fn ports(&self) -> Vec<u32> {
        let mut ports: Vec<u32> = self.amplitudes.keys().map(|k| k.port).collect();
        ports.sort_unstable();
        ports.dedup();
        ports
    }

    fn slots_on(&self, port: u32) -> Vec<u32> {
        self.amplitudes.keys().filter(|k| k.port == port).map(|k| k.slot).collect()
    }

    pub fn total_probability(&self) -> f64 {
        self.amplitudes.values().map(JonesVector::norm_sqr).sum()
    }

    pub fn port_probability(&self, port: u32) -> f64 {
        self.amplitudes.iter().filter(|(k, _)| k.port == port).map(|(_, j)| j.norm_sqr()).sum()
    }

    /// Keeps only the modes on `port`.
    pub fn retain_port(mut self, port: u32) -> Self {
        self.amplitudes.retain(|k, _| k.port == port);
        self
    }

    /// Moves every mode on `from` to `to`. `to` must be empty.
    pub fn relabel_port(mut self, from: u32, to: u32) -> Result<Self> {
        if from == to {
            return Ok(self);
        }
        if !self.slots_on(to).is_empty() {
            return Err(invalid(format!("relabel target port {to} is already populated")));
        }
        let moved: Vec<_> =
            self.amplitudes.iter().filter(|(k, _)| k.port == from).map(|(k, j)| (k.slot, *j)).collect();
        self.amplitudes.retain(|k, _| k.port != from);
        for (slot, j) in moved {
            self.amplitudes.insert(ModeIndex::new(slot, to), j);
        }
        Ok(self)
    }

    fn map_port(mut self, port: u32, f: impl Fn(JonesVector) -> JonesVector) -> Self {
        let keys: Vec<_> = self.slots_on(port);
        for slot in keys {
            let j = self.get(slot, port);
            self.set(slot, port, f(j));
        }
        self
    }
}

/// Mixes `port_a` and `port_b` with intensity split ratio `r` (bar transmission).
pub fn apply_coupler(state: ModeState, port_a: u32, port_b: u32, r: f64) -> Result<ModeState> {
    if port_a == port_b {
        return Err(invalid("coupler ports must differ"));
    }
    if !(0.0..=1.0).contains(&r) {
        return Err(invalid(format!("coupler ratio {r} outside [0, 1]")));
    }
    let bar = Complex64::new(r.sqrt(), 0.0);
    let cross = Complex64::new(0.0, (1.0 - r).sqrt());

    let mut slots = state.slots_on(port_a);
    slots.extend(state.slots_on(port_b));
    slots.sort_unstable();
    slots.dedup();

    let mut out = state;
    for slot in slots {
        let a = out.get(slot, port_a);
        let b = out.get(slot, port_b);
        out.set(slot, port_a, a.scale(bar) + b.scale(cross));
        out.set(slot, port_b, a.scale(cross) + b.scale(bar));
    }
    Ok(out)
}

pub fn apply_phase(state: ModeState, port: u32, phi: f64) -> ModeState {
    let z = Complex64::cis(phi);
    state.map_port(port, |j| j.scale(z))
}

/// Shifts every amplitude on `port` later by `n_slots`.
pub fn apply_delay(state: ModeState, port: u32, n_slots: u32) -> ModeState {
    if n_slots == 0 {
        return state;
    }
    let mut out = state;
    let moved: Vec<_> =
        out.amplitudes.iter().filter(|(k, _)| k.port == port).map(|(k, j)| (k.slot, *j)).collect();
    out.amplitudes.retain(|k, _| k.port != port);
    for (slot, j) in moved {
        out.amplitudes.insert(ModeIndex::new(slot + n_slots, port), j);
    }
    out
}

/// Attenuates `port` to intensity transmission `t`.
pub fn apply_loss(state: ModeState, port: u32, t: f64) -> Result<ModeState> {
    if !(0.0..=1.0).contains(&t) {
        return Err(invalid(format!("transmission {t} outside [0, 1]")));
    }
    if t == 0.0 {
        let mut out = state;
        out.amplitudes.retain(|k, _| k.port != port);
        return Ok(out);
    }
    let k = Complex64::new(t.sqrt(), 0.0);
    Ok(state.map_port(port, |j| j.scale(k)))
}

pub fn apply_jones(state: ModeState, port: u32, m: &JonesMatrix) -> ModeState {
    state.map_port(port, |j| m.apply(&j))
}

pub fn total_probability(state: &ModeState) -> f64 {
    state.total_probability()
}

/// Intensity transmission for a loss given in decibels.
pub fn db_to_transmission(db: f64) -> f64 {
    10f64.powf(-db / 10.0)
}

/// Draws a Haar-distributed 2x2 unitary.
///
/// A unit quaternion from four standard normals gives a uniform SU(2)
/// element; a uniform global phase extends it to U(2).
pub fn haar_random_unitary<R: Rng + ?Sized>(rng: &mut R) -> JonesMatrix {
    let mut q = [0f64; 4];
    let norm = loop {
        for x in q.iter_mut() {
            *x = rng.sample(StandardNormal);
        }
        let n = q.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-300 {
            break n;
        }
    };
    let [a, b, c, d] = q.map(|x| x / norm);
    let phase = Complex64::cis(rng.random::<f64>() * TAU);
    JonesMatrix([
        [Complex64::new(a, b) * phase, Complex64::new(c, d) * phase],
        [Complex64::new(-c, d) * phase, Complex64::new(a, -b) * phase],
    ])
}
