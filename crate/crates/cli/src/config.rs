//! Flat `key = value` run configuration.
//!
//! Keys are dotted section paths with units in the name, e.g.
//! `bob_mzi.t_long_db = 8.0`. Lines starting with `#` are comments. The same
//! keys are accepted by `--set key=value`, and [`RunConfig::echo`] writes
//! every key back in a form that parses to the identical value.

use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;
use plcqkd::devices::{DetectorSpec, FibreSpec, MziSpec, SourceSpec, SwitchMode, SwitchSetting, ThermalSpec};
use plcqkd::linksim::{LinkConfig, ScanSpec};
use plcqkd::optics::{db_to_transmission, JonesMatrix, JonesVector};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct ThermalParams {
    pub t_ref_k: f64,
    pub dn_dt_per_k: f64,
    pub delta_l_m: f64,
    pub lambda_m: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MziParams {
    pub delay_slots: u64,
    pub r_in: f64,
    pub r_out: f64,
    pub t_short_db: f64,
    pub t_long_db: f64,
    pub overlap: f64,
    pub temperature_k: f64,
    /// Differential retardance of the long arm relative to the short arm.
    pub pol_unbalance_rad: f64,
    pub thermal: ThermalParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorParams {
    pub efficiency: f64,
    pub dark_prob_per_gate: f64,
    pub gate_width_s: f64,
    pub gated_slots: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub mu: f64,
    pub rep_rate_hz: f64,
    pub pol_theta_rad: f64,
    pub pol_phase_rad: f64,
    pub switch_mode: SwitchMode,
    pub pm_phase_rad: f64,
    pub alice: MziParams,
    pub bob: MziParams,
    pub fibre_length_km: f64,
    pub fibre_atten_db_per_km: f64,
    pub fibre_scramble: bool,
    pub detectors: [DetectorParams; 2],
    pub pulses_per_point: u64,
    pub slot_pitch_s: f64,
    pub scan_t1_start_k: f64,
    pub scan_t1_stop_k: f64,
    pub scan_steps: u64,
    pub scan_scramble_per_pulse: bool,
    pub scan_scramble_samples: u64,
    pub bb84_pulses: u64,
    pub sweep_delta_steps: u64,
    pub sweep_polarisations: u64,
}

fn thermal_params(t: &ThermalSpec) -> ThermalParams {
    ThermalParams { t_ref_k: t.t_ref, dn_dt_per_k: t.dn_dt, delta_l_m: t.delta_l, lambda_m: t.lambda }
}

fn mzi_params(m: &MziSpec, t_long_db: f64) -> MziParams {
    MziParams {
        delay_slots: m.delay_slots as u64,
        r_in: m.r_in,
        r_out: m.r_out,
        t_short_db: 0.0,
        t_long_db,
        overlap: m.overlap,
        temperature_k: m.temperature,
        pol_unbalance_rad: 0.0,
        thermal: thermal_params(&m.thermal),
    }
}

fn detector_params(d: &DetectorSpec) -> DetectorParams {
    DetectorParams {
        efficiency: d.efficiency,
        dark_prob_per_gate: d.dark_prob_per_gate,
        gate_width_s: d.gate_width,
        gated_slots: d.gated_slots.iter().map(|&s| s as u64).collect(),
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        let link = LinkConfig::default();
        let scan = ScanSpec::two_periods(&link);
        Self {
            seed: link.seed,
            mu: link.source.mu,
            rep_rate_hz: link.source.rep_rate,
            pol_theta_rad: 0.0,
            pol_phase_rad: 0.0,
            switch_mode: link.switch_default.mode,
            pm_phase_rad: link.switch_default.pm_phase(),
            alice: mzi_params(&link.alice_mzi, 8.0),
            bob: mzi_params(&link.bob_mzi, 8.0),
            fibre_length_km: link.fibre.length_km,
            fibre_atten_db_per_km: link.fibre.atten_db_per_km,
            fibre_scramble: link.fibre.scramble,
            detectors: [detector_params(&link.detectors.0), detector_params(&link.detectors.1)],
            pulses_per_point: link.pulses_per_point,
            slot_pitch_s: link.slot_pitch,
            scan_t1_start_k: scan.t1_start,
            scan_t1_stop_k: scan.t1_stop,
            scan_steps: scan.steps as u64,
            scan_scramble_per_pulse: scan.scramble_per_pulse,
            scan_scramble_samples: scan.scramble_samples as u64,
            bb84_pulses: 1_000_000,
            sweep_delta_steps: 7,
            sweep_polarisations: 10_000,
        }
    }
}

/// Allowed range of a numeric key.
#[derive(Debug, Clone, Copy)]
enum Check {
    Any,
    NonNegative,
    Positive,
    Unit,
    /// `[0, 1)`
    UnitOpen,
    AtLeast(u64),
}

enum Field<'a> {
    F64(&'a mut f64, Check),
    U64(&'a mut u64, Check),
    Bool(&'a mut bool),
    Mode(&'a mut SwitchMode),
    Slots(&'a mut Vec<u64>),
}

fn mzi_fields<'a>(prefix: &str, m: &'a mut MziParams, out: &mut Vec<(String, Field<'a>)>) {
    let k = |name: &str| format!("{prefix}.{name}");
    out.push((k("delay_slots"), Field::U64(&mut m.delay_slots, Check::AtLeast(1))));
    out.push((k("r_in"), Field::F64(&mut m.r_in, Check::Unit)));
    out.push((k("r_out"), Field::F64(&mut m.r_out, Check::Unit)));
    out.push((k("t_short_db"), Field::F64(&mut m.t_short_db, Check::NonNegative)));
    out.push((k("t_long_db"), Field::F64(&mut m.t_long_db, Check::NonNegative)));
    out.push((k("overlap"), Field::F64(&mut m.overlap, Check::Unit)));
    out.push((k("temperature_k"), Field::F64(&mut m.temperature_k, Check::Any)));
    out.push((k("pol_unbalance_rad"), Field::F64(&mut m.pol_unbalance_rad, Check::Any)));
    out.push((k("thermal.t_ref_k"), Field::F64(&mut m.thermal.t_ref_k, Check::Any)));
    out.push((k("thermal.dn_dt_per_k"), Field::F64(&mut m.thermal.dn_dt_per_k, Check::Positive)));
    out.push((k("thermal.delta_l_m"), Field::F64(&mut m.thermal.delta_l_m, Check::Positive)));
    out.push((k("thermal.lambda_m"), Field::F64(&mut m.thermal.lambda_m, Check::Positive)));
}

fn detector_fields<'a>(prefix: &str, d: &'a mut DetectorParams, out: &mut Vec<(String, Field<'a>)>) {
    let k = |name: &str| format!("{prefix}.{name}");
    out.push((k("efficiency"), Field::F64(&mut d.efficiency, Check::Unit)));
    out.push((k("dark_prob_per_gate"), Field::F64(&mut d.dark_prob_per_gate, Check::UnitOpen)));
    out.push((k("gate_width_s"), Field::F64(&mut d.gate_width_s, Check::Positive)));
    out.push((k("gated_slots"), Field::Slots(&mut d.gated_slots)));
}

impl RunConfig {
    fn fields(&mut self) -> Vec<(String, Field<'_>)> {
        let mut out: Vec<(String, Field<'_>)> = vec![
            ("seed".into(), Field::U64(&mut self.seed, Check::Any)),
            ("source.mu".into(), Field::F64(&mut self.mu, Check::NonNegative)),
            ("source.rep_rate_hz".into(), Field::F64(&mut self.rep_rate_hz, Check::Positive)),
            ("source.pol_theta_rad".into(), Field::F64(&mut self.pol_theta_rad, Check::Any)),
            ("source.pol_phase_rad".into(), Field::F64(&mut self.pol_phase_rad, Check::Any)),
            ("switch.mode".into(), Field::Mode(&mut self.switch_mode)),
            ("switch.pm_phase_rad".into(), Field::F64(&mut self.pm_phase_rad, Check::Any)),
        ];
        mzi_fields("alice_mzi", &mut self.alice, &mut out);
        mzi_fields("bob_mzi", &mut self.bob, &mut out);
        out.push(("fibre.length_km".into(), Field::F64(&mut self.fibre_length_km, Check::NonNegative)));
        out.push((
            "fibre.atten_db_per_km".into(),
            Field::F64(&mut self.fibre_atten_db_per_km, Check::NonNegative),
        ));
        out.push(("fibre.scramble".into(), Field::Bool(&mut self.fibre_scramble)));
        let [d0, d1] = &mut self.detectors;
        detector_fields("detector0", d0, &mut out);
        detector_fields("detector1", d1, &mut out);
        out.extend([
            ("link.pulses_per_point".into(), Field::U64(&mut self.pulses_per_point, Check::AtLeast(1))),
            ("link.slot_pitch_s".into(), Field::F64(&mut self.slot_pitch_s, Check::Positive)),
            ("scan.t1_start_k".into(), Field::F64(&mut self.scan_t1_start_k, Check::Any)),
            ("scan.t1_stop_k".into(), Field::F64(&mut self.scan_t1_stop_k, Check::Any)),
            ("scan.steps".into(), Field::U64(&mut self.scan_steps, Check::AtLeast(2))),
            ("scan.scramble_per_pulse".into(), Field::Bool(&mut self.scan_scramble_per_pulse)),
            ("scan.scramble_samples".into(), Field::U64(&mut self.scan_scramble_samples, Check::AtLeast(1))),
            ("bb84.pulses".into(), Field::U64(&mut self.bb84_pulses, Check::AtLeast(1))),
            ("sweep.delta_steps".into(), Field::U64(&mut self.sweep_delta_steps, Check::AtLeast(2))),
            ("sweep.polarisations".into(), Field::U64(&mut self.sweep_polarisations, Check::AtLeast(1))),
        ]);
        out
    }

    /// Parses and assigns one key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let value = value.trim();
        let bad = |what: &str| CliError::Config(format!("{key}: expected {what}, got `{value}`"));
        let mut fields = self.fields();
        let Some((_, field)) = fields.iter_mut().find(|(k, _)| k == key) else {
            return Err(CliError::Config(format!("unknown key `{key}`")));
        };
        match field {
            Field::F64(x, _) => **x = value.parse().map_err(|_| bad("a number"))?,
            Field::U64(x, _) => **x = value.parse().map_err(|_| bad("a non-negative integer"))?,
            Field::Bool(x) => {
                **x = match value {
                    "true" | "yes" | "on" | "1" => true,
                    "false" | "no" | "off" | "0" => false,
                    _ => return Err(bad("a boolean")),
                }
            }
            Field::Mode(x) => {
                **x = match value.to_ascii_lowercase().as_str() {
                    "bar" => SwitchMode::Bar,
                    "cross" => SwitchMode::Cross,
                    "split" => SwitchMode::Split,
                    _ => return Err(bad("one of bar, cross, split")),
                }
            }
            Field::Slots(x) => {
                **x = if value.is_empty() {
                    Vec::new()
                } else {
                    value
                        .split(',')
                        .map(|s| s.trim().parse::<u64>())
                        .collect::<Result<_, _>>()
                        .map_err(|_| bad("a comma-separated list of slot indices"))?
                }
            }
        }
        Ok(())
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<(), CliError> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split_once('#').map_or(raw, |(body, _)| body).trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("{origin}:{}: expected `key = value`", n + 1)))?;
            self.set(key.trim(), value).map_err(|e| match e {
                CliError::Config(m) => CliError::Config(format!("{origin}:{}: {m}", n + 1)),
                other => other,
            })?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config file {}: {e}", path.display())))?;
        let mut cfg = Self::default();
        cfg.apply_text(&text, &path.display().to_string())?;
        Ok(cfg)
    }

    /// `key = value` for every key, in a stable order.
    pub fn echo(&self) -> String {
        let mut copy = self.clone();
        let mut out = String::new();
        for (key, field) in copy.fields() {
            let value = match field {
                Field::F64(x, _) => format!("{x:?}"),
                Field::U64(x, _) => x.to_string(),
                Field::Bool(x) => x.to_string(),
                Field::Mode(m) => match m {
                    SwitchMode::Bar => "bar",
                    SwitchMode::Cross => "cross",
                    SwitchMode::Split => "split",
                }
                .to_string(),
                Field::Slots(s) => s.iter().map(u64::to_string).collect::<Vec<_>>().join(","),
            };
            let _ = writeln!(out, "{key} = {value}");
        }
        out
    }

    /// Range checks per key, then the cross-field checks of the link model.
    pub fn validate(&self) -> Result<(), CliError> {
        let mut copy = self.clone();
        for (key, field) in copy.fields() {
            let fail = |why: &str, v: String| Err(CliError::Config(format!("{key}: {why} (got {v})")));
            match field {
                Field::F64(x, check) => {
                    let x = *x;
                    if !x.is_finite() {
                        return fail("must be finite", x.to_string());
                    }
                    let ok = match check {
                        Check::Any | Check::AtLeast(_) => true,
                        Check::NonNegative => x >= 0.0,
                        Check::Positive => x > 0.0,
                        Check::Unit => (0.0..=1.0).contains(&x),
                        Check::UnitOpen => (0.0..1.0).contains(&x),
                    };
                    if !ok {
                        return fail(check_text(check), x.to_string());
                    }
                }
                Field::U64(x, Check::AtLeast(min)) if *x < min => {
                    return fail(&format!("must be at least {min}"), x.to_string());
                }
                Field::Slots(s) if s.iter().any(|&v| v > 2) => {
                    return fail("slot indices must be 0, 1 or 2", format!("{s:?}"));
                }
                _ => {}
            }
        }
        if self.alice.delay_slots != self.bob.delay_slots {
            return Err(CliError::Config(format!(
                "bob_mzi.delay_slots: must equal alice_mzi.delay_slots ({} vs {})",
                self.bob.delay_slots, self.alice.delay_slots
            )));
        }
        for (i, d) in self.detectors.iter().enumerate() {
            if d.gate_width_s > self.slot_pitch_s {
                return Err(CliError::Config(format!(
                    "detector{i}.gate_width_s: must not exceed link.slot_pitch_s ({} > {})",
                    d.gate_width_s, self.slot_pitch_s
                )));
            }
        }
        self.link_config().validate().map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn link_config(&self) -> LinkConfig {
        let thermal = |t: &ThermalParams| ThermalSpec {
            t_ref: t.t_ref_k,
            dn_dt: t.dn_dt_per_k,
            delta_l: t.delta_l_m,
            lambda: t.lambda_m,
        };
        let mzi = |m: &MziParams| MziSpec {
            delay_slots: m.delay_slots as u32,
            r_in: m.r_in,
            r_out: m.r_out,
            t_short: db_to_transmission(m.t_short_db),
            t_long: db_to_transmission(m.t_long_db),
            u_short: JonesMatrix::identity(),
            u_long: JonesMatrix::retarder(m.pol_unbalance_rad),
            thermal: thermal(&m.thermal),
            temperature: m.temperature_k,
            overlap: m.overlap,
        };
        let det = |d: &DetectorParams| DetectorSpec {
            efficiency: d.efficiency,
            dark_prob_per_gate: d.dark_prob_per_gate,
            gate_width: d.gate_width_s,
            gated_slots: d.gated_slots.iter().map(|&s| s as u32).collect(),
        };
        let switch_default = match self.switch_mode {
            SwitchMode::Bar => SwitchSetting::BAR,
            SwitchMode::Cross => SwitchSetting::CROSS,
            SwitchMode::Split => SwitchSetting::split(self.pm_phase_rad),
        };
        LinkConfig {
            source: SourceSpec {
                mu: self.mu,
                rep_rate: self.rep_rate_hz,
                polarisation: JonesVector::new(
                    Complex64::new(self.pol_theta_rad.cos(), 0.0),
                    Complex64::from_polar(self.pol_theta_rad.sin(), self.pol_phase_rad),
                ),
            },
            switch_default,
            alice_mzi: mzi(&self.alice),
            fibre: FibreSpec {
                length_km: self.fibre_length_km,
                atten_db_per_km: self.fibre_atten_db_per_km,
                scramble: self.fibre_scramble,
            },
            bob_mzi: mzi(&self.bob),
            detectors: (det(&self.detectors[0]), det(&self.detectors[1])),
            pulses_per_point: self.pulses_per_point,
            seed: self.seed,
            slot_pitch: self.slot_pitch_s,
        }
    }

    pub fn scan_spec(&self) -> ScanSpec {
        let link = self.link_config();
        ScanSpec {
            t1_start: self.scan_t1_start_k,
            t1_stop: self.scan_t1_stop_k,
            steps: self.scan_steps as usize,
            setting: link.switch_default,
            scramble_per_pulse: self.scan_scramble_per_pulse,
            scramble_samples: self.scan_scramble_samples as usize,
        }
    }
}

fn check_text(c: Check) -> &'static str {
    match c {
        Check::NonNegative => "must be non-negative",
        Check::Positive => "must be positive",
        Check::Unit => "must lie in [0, 1]",
        Check::UnitOpen => "must lie in [0, 1)",
        Check::Any | Check::AtLeast(_) => "out of range",
    }
}
