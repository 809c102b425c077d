//! Brute-force oracles built from explicit dense matrices over the full
//! (slot, port, polarisation) basis. They share no propagation code with
//! the library.

#![allow(dead_code)]

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, TAU};

use num_complex::Complex64 as C;
use plcqkd::devices::{MziSpec, SwitchMode, SwitchSetting};
use plcqkd::linksim::LinkConfig;
use plcqkd::optics::JonesMatrix;

pub type Mat = Vec<Vec<C>>;

pub fn zeros(n: usize) -> Mat {
    vec![vec![C::new(0.0, 0.0); n]; n]
}

pub fn eye(n: usize) -> Mat {
    let mut m = zeros(n);
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = C::new(1.0, 0.0);
    }
    m
}

pub fn matmul(a: &Mat, b: &Mat) -> Mat {
    let n = a.len();
    let mut out = zeros(n);
    for i in 0..n {
        for k in 0..n {
            if a[i][k] == C::new(0.0, 0.0) {
                continue;
            }
            for j in 0..n {
                out[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    out
}

pub fn matvec(a: &Mat, v: &[C]) -> Vec<C> {
    a.iter().map(|row| row.iter().zip(v).map(|(x, y)| x * y).sum()).collect()
}

/// Basis index for `slots` time slots, two ports, two polarisations.
fn idx(slot: usize, port: usize, pol: usize) -> usize {
    slot * 4 + port * 2 + pol
}

/// Symmetric coupler between ports 0 and 1, every slot and polarisation.
fn coupler(slots: usize, r: f64) -> Mat {
    let mut m = zeros(slots * 4);
    let bar = C::new(r.sqrt(), 0.0);
    let cross = C::new(0.0, (1.0 - r).sqrt());
    for s in 0..slots {
        for k in 0..2 {
            let (a, b) = (idx(s, 0, k), idx(s, 1, k));
            m[a][a] = bar;
            m[a][b] = cross;
            m[b][a] = cross;
            m[b][b] = bar;
        }
    }
    m
}

/// Short arm on port 0 (loss, Jones) and long arm on port 1
/// (one-slot delay, phase, loss, Jones).
fn arms(
    slots: usize,
    t_short: f64,
    u_short: &JonesMatrix,
    t_long: f64,
    u_long: &JonesMatrix,
    phase: f64,
) -> Mat {
    let mut m = zeros(slots * 4);
    let ks = C::new(t_short.sqrt(), 0.0);
    let kl = C::new(t_long.sqrt(), 0.0) * C::from_polar(1.0, phase);
    for s in 0..slots {
        for i in 0..2 {
            for j in 0..2 {
                m[idx(s, 0, i)][idx(s, 0, j)] = ks * u_short.0[i][j];
                if s + 1 < slots {
                    m[idx(s + 1, 1, i)][idx(s, 1, j)] = kl * u_long.0[i][j];
                }
            }
        }
    }
    m
}

fn thermal_phase(spec: &MziSpec) -> f64 {
    let th = &spec.thermal;
    TAU / th.lambda * th.dn_dt * th.delta_l * (spec.temperature - th.t_ref)
}

fn probs(v: &[C]) -> [[f64; 2]; 3] {
    let mut out = [[0.0; 2]; 3];
    for (s, row) in out.iter_mut().enumerate() {
        for (q, p) in row.iter_mut().enumerate() {
            *p = (0..2).map(|k| v[idx(s, q, k)].norm_sqr()).sum();
        }
    }
    out
}

/// Dense 12x12 model of the chain: switch amplitudes, Alice's arms with the
/// quadrature bias, Alice's output coupler, projection onto the fibre port,
/// fibre loss and rotation, Bob's interferometer.
pub fn chain_oracle(
    config: &LinkConfig,
    setting: SwitchSetting,
    rotation: Option<&JonesMatrix>,
) -> [[f64; 2]; 3] {
    assert_eq!(config.alice_mzi.delay_slots, 1);
    assert_eq!(config.bob_mzi.delay_slots, 1);
    let n = 12;
    let a = &config.alice_mzi;
    let b = &config.bob_mzi;

    let alice_arms = arms(3, a.t_short, &a.u_short, a.t_long, &a.u_long, thermal_phase(a) + FRAC_PI_2);
    let alice_out = coupler(3, a.r_out);
    let mut project = zeros(n);
    for s in 0..3 {
        for k in 0..2 {
            project[idx(s, 0, k)][idx(s, 0, k)] = C::new(1.0, 0.0);
        }
    }
    let mut fibre = zeros(n);
    let tf = 10f64.powf(-config.fibre.length_km * config.fibre.atten_db_per_km / 10.0);
    let rot = rotation.copied().unwrap_or(JonesMatrix::identity());
    for s in 0..3 {
        for q in 0..2 {
            for i in 0..2 {
                for j in 0..2 {
                    fibre[idx(s, q, i)][idx(s, q, j)] = C::new(tf.sqrt(), 0.0) * rot.0[i][j];
                }
            }
        }
    }
    let bob_in = coupler(3, b.r_in);
    let bob_arms = arms(3, b.t_short, &b.u_short, b.t_long, &b.u_long, thermal_phase(b));
    let bob_out = coupler(3, b.r_out);

    let mut m = eye(n);
    for step in [&alice_arms, &alice_out, &project, &fibre, &bob_in, &bob_arms, &bob_out] {
        m = matmul(step, &m);
    }

    let pol = config.source.polarisation;
    let (amp_s, amp_l) = match setting.mode {
        SwitchMode::Bar => (C::new(1.0, 0.0), C::new(0.0, 0.0)),
        SwitchMode::Cross => (C::new(0.0, 0.0), C::new(1.0, 0.0)),
        SwitchMode::Split => (C::new(FRAC_1_SQRT_2, 0.0), C::from_polar(FRAC_1_SQRT_2, setting.pm_phase())),
    };
    let mut vs = vec![C::new(0.0, 0.0); n];
    let mut vl = vec![C::new(0.0, 0.0); n];
    vs[idx(0, 0, 0)] = amp_s * pol.h;
    vs[idx(0, 0, 1)] = amp_s * pol.v;
    vl[idx(0, 1, 0)] = amp_l * pol.h;
    vl[idx(0, 1, 1)] = amp_l * pol.v;
    let both: Vec<C> = vs.iter().zip(&vl).map(|(x, y)| x + y).collect();

    let coh = probs(&matvec(&m, &both));
    let ps = probs(&matvec(&m, &vs));
    let pl = probs(&matvec(&m, &vl));
    let gamma = a.overlap * b.overlap;
    let mut out = [[0.0; 2]; 3];
    for s in 0..3 {
        for q in 0..2 {
            out[s][q] = gamma * coh[s][q] + (1.0 - gamma) * (ps[s][q] + pl[s][q]);
        }
    }
    out
}

/// Dense 8x8 model of one interferometer on two slots, input on port 0 slot 0.
/// Returns amplitudes indexed `[slot][port][pol]`.
pub fn mzi_oracle(spec: &MziSpec, input: [C; 2]) -> [[[C; 2]; 2]; 2] {
    let m = [
        coupler(2, spec.r_in),
        arms(2, spec.t_short, &spec.u_short, spec.t_long, &spec.u_long, thermal_phase(spec)),
        coupler(2, spec.r_out),
    ]
    .iter()
    .fold(eye(8), |acc, step| matmul(step, &acc));
    let mut v = vec![C::new(0.0, 0.0); 8];
    v[idx(0, 0, 0)] = input[0];
    v[idx(0, 0, 1)] = input[1];
    let out = matvec(&m, &v);
    let mut res = [[[C::new(0.0, 0.0); 2]; 2]; 2];
    for (s, slot) in res.iter_mut().enumerate() {
        for (q, port) in slot.iter_mut().enumerate() {
            for (k, z) in port.iter_mut().enumerate() {
                *z = out[idx(s, q, k)];
            }
        }
    }
    res
}
