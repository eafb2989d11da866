//! Box-bounded parameter spaces mapping an optimizer vector to
//! [`OscillatorParams`].
//!
//! Entries are addressed by name:
//!
//! | name            | meaning                      |
//! |-----------------|------------------------------|
//! | `amplitude.<i>` | amplitude of joint `i`       |
//! | `offset.<i>`    | offset of joint `i`          |
//! | `phase.<i>`     | phase shift of joint `i`     |
//! | `omega_swing`   | swing frequency (rad/s)      |
//! | `omega_stance`  | stance frequency (rad/s)     |
//!
//! Free entries are sampled by the optimizer inside the unit box and decoded
//! with the affine map `lo + x * (hi - lo)`.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::oscillator::{OscillatorParams, PolicyVariant};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind<T> {
    Fixed(T),
    Uniform { lo: T, hi: T },
    /// Copies the decoded value of another entry.
    Tied(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entry<T> {
    pub name: String,
    #[serde(flatten)]
    pub kind: ParamKind<T>,
}

impl<T> Entry<T> {
    pub fn fixed(name: impl Into<String>, value: T) -> Self {
        Self {
            name: name.into(),
            kind: ParamKind::Fixed(value),
        }
    }

    pub fn uniform(name: impl Into<String>, lo: T, hi: T) -> Self {
        Self {
            name: name.into(),
            kind: ParamKind::Uniform { lo, hi },
        }
    }

    pub fn is_free(&self) -> bool {
        matches!(self.kind, ParamKind::Uniform { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Slot {
    Amplitude(usize),
    Offset(usize),
    Phase(usize),
    OmegaSwing,
    OmegaStance,
}

impl Slot {
    fn parse(name: &str) -> Option<Slot> {
        match name {
            "omega_swing" => return Some(Slot::OmegaSwing),
            "omega_stance" => return Some(Slot::OmegaStance),
            _ => {}
        }
        let (head, index) = name.split_once('.')?;
        let index: usize = index.parse().ok()?;
        match head {
            "amplitude" => Some(Slot::Amplitude(index)),
            "offset" => Some(Slot::Offset(index)),
            "phase" => Some(Slot::Phase(index)),
            _ => None,
        }
    }
}

/// Per-task rows of the default search-space table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Ant,
    HalfCheetah,
    Hopper,
    Swimmer,
    Walker2d,
    Quadruped,
}

impl Preset {
    pub fn joint_count(self) -> usize {
        match self {
            Preset::Ant | Preset::Quadruped => 8,
            Preset::HalfCheetah | Preset::Walker2d => 6,
            Preset::Hopper => 3,
            Preset::Swimmer => 2,
        }
    }

    /// Frequency range in Hz; the search space multiplies by `2*pi`.
    fn frequency_hz(self) -> (f64, f64) {
        match self {
            Preset::Ant | Preset::Swimmer | Preset::Quadruped => (0.4, 2.0),
            Preset::HalfCheetah | Preset::Hopper => (0.4, 5.0),
            Preset::Walker2d => (0.4, 6.0),
        }
    }

    fn amplitude(self) -> Bound {
        match self {
            Preset::Swimmer => Bound::Fixed(1.0),
            Preset::HalfCheetah => Bound::Range(-2.0, 2.0),
            _ => Bound::Range(-1.0, 1.0),
        }
    }

    fn offset(self) -> Bound {
        match self {
            Preset::Swimmer | Preset::Hopper => Bound::Fixed(0.0),
            _ => Bound::Range(-1.0, 1.0),
        }
    }

    /// Maps an external task id such as `Swimmer-v4` to its row.
    pub fn from_task_id(id: &str) -> Option<Preset> {
        let base = id.split('-').next().unwrap_or(id).to_ascii_lowercase();
        match base.as_str() {
            "ant" => Some(Preset::Ant),
            "halfcheetah" => Some(Preset::HalfCheetah),
            "hopper" => Some(Preset::Hopper),
            "swimmer" => Some(Preset::Swimmer),
            "walker2d" | "walker" => Some(Preset::Walker2d),
            "quadruped" => Some(Preset::Quadruped),
            _ => None,
        }
    }
}

enum Bound {
    Fixed(f64),
    Range(f64, f64),
}

impl Bound {
    fn entry<T: Scalar>(&self, name: String) -> Entry<T> {
        match *self {
            Bound::Fixed(v) => Entry::fixed(name, T::lit(v)),
            Bound::Range(lo, hi) => Entry::uniform(name, T::lit(lo), T::lit(hi)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace<T> {
    pub entries: Vec<Entry<T>>,
}

impl<T: Scalar> SearchSpace<T> {
    pub fn new(entries: Vec<Entry<T>>) -> Result<Self> {
        let space = Self { entries };
        space.validate()?;
        Ok(space)
    }

    /// The table row for `preset` with its native joint count.
    pub fn preset(preset: Preset) -> Self {
        Self::preset_with_joints(preset, preset.joint_count())
    }

    /// The table row for `preset` applied to `joints` joints. The first phase
    /// shift is pinned to zero.
    pub fn preset_with_joints(preset: Preset, joints: usize) -> Self {
        let two_pi = 2.0 * std::f64::consts::PI;
        let (f_lo, f_hi) = preset.frequency_hz();
        let mut entries = Vec::with_capacity(3 * joints + 2);
        for i in 0..joints {
            entries.push(preset.amplitude().entry(format!("amplitude.{i}")));
        }
        for i in 0..joints {
            entries.push(preset.offset().entry(format!("offset.{i}")));
        }
        for i in 0..joints {
            let name = format!("phase.{i}");
            entries.push(if i == 0 {
                Entry::fixed(name, T::zero())
            } else {
                Entry::uniform(name, T::zero(), T::lit(two_pi))
            });
        }
        entries.push(Entry::uniform("omega_swing", T::lit(two_pi * f_lo), T::lit(two_pi * f_hi)));
        entries.push(Entry::uniform("omega_stance", T::lit(two_pi * f_lo), T::lit(two_pi * f_hi)));
        Self { entries }
    }

    /// Pins the entries a variant ignores: phase shifts become zero and, for
    /// single-frequency variants, `omega_stance` follows `omega_swing`.
    pub fn restrict_to(mut self, variant: PolicyVariant) -> Self {
        for entry in &mut self.entries {
            match Slot::parse(&entry.name) {
                Some(Slot::Phase(_)) if !variant.uses_phase_shift() => entry.kind = ParamKind::Fixed(T::zero()),
                Some(Slot::OmegaStance) if !variant.switches_frequency() => {
                    entry.kind = ParamKind::Tied("omega_swing".to_string())
                }
                _ => {}
            }
        }
        self
    }

    pub fn joint_count(&self) -> usize {
        self.entries
            .iter()
            .filter_map(|e| match Slot::parse(&e.name) {
                Some(Slot::Amplitude(i)) | Some(Slot::Offset(i)) | Some(Slot::Phase(i)) => Some(i + 1),
                _ => None,
            })
            .max()
            .unwrap_or(0)
    }

    /// Number of free scalars, i.e. the optimizer dimension.
    pub fn param_count(&self) -> usize {
        self.entries.iter().filter(|e| e.is_free()).count()
    }

    pub fn free_names(&self) -> Vec<&str> {
        self.entries.iter().filter(|e| e.is_free()).map(|e| e.name.as_str()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let joints = self.joint_count();
        ensure!(joints >= 1, "search space names no joints");
        let mut seen = vec![false; 3 * joints + 2];
        for entry in &self.entries {
            let slot = Slot::parse(&entry.name)
                .ok_or_else(|| Error::invalid(format!("unknown search-space entry `{}`", entry.name)))?;
            let idx = slot_index(slot, joints);
            ensure!(!seen[idx], "duplicate search-space entry `{}`", entry.name);
            seen[idx] = true;
            match &entry.kind {
                ParamKind::Fixed(v) => ensure!(v.is_finite(), "entry `{}` is not finite", entry.name),
                ParamKind::Uniform { lo, hi } => ensure!(
                    lo.is_finite() && hi.is_finite() && lo < hi,
                    "entry `{}` needs lo < hi, got [{lo}, {hi}]",
                    entry.name
                ),
                ParamKind::Tied(target) => {
                    let target_slot = Slot::parse(target);
                    let ok = self.entries.iter().any(|e| &e.name == target && !matches!(e.kind, ParamKind::Tied(_)));
                    ensure!(
                        ok && target_slot.is_some(),
                        "entry `{}` is tied to `{target}`, which is missing or itself tied",
                        entry.name
                    );
                }
            }
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::invalid(format!(
                "search space is missing `{}`",
                slot_name(missing, joints)
            )));
        }
        Ok(())
    }

    /// Decodes a point of the unit box (one coordinate per free entry, in
    /// entry order) into oscillator parameters.
    pub fn decode(&self, unit: &[T]) -> Result<OscillatorParams<T>> {
        let dim = self.param_count();
        ensure!(unit.len() == dim, "expected {dim} free coordinates, got {}", unit.len());
        let joints = self.joint_count();
        let mut values = vec![T::nan(); 3 * joints + 2];
        let mut coords = unit.iter();
        let mut tied = Vec::new();
        for entry in &self.entries {
            let slot = Slot::parse(&entry.name)
                .ok_or_else(|| Error::invalid(format!("unknown search-space entry `{}`", entry.name)))?;
            let idx = slot_index(slot, joints);
            match &entry.kind {
                ParamKind::Fixed(v) => values[idx] = *v,
                ParamKind::Uniform { lo, hi } => {
                    let x = *coords.next().expect("coordinate count checked");
                    values[idx] = *lo + x * (*hi - *lo);
                }
                ParamKind::Tied(target) => tied.push((idx, target)),
            }
        }
        for (idx, target) in tied {
            let slot = Slot::parse(target).ok_or_else(|| Error::invalid(format!("bad tie target `{target}`")))?;
            values[idx] = values[slot_index(slot, joints)];
        }
        OscillatorParams::new(
            values[..joints].to_vec(),
            values[joints..2 * joints].to_vec(),
            values[2 * joints..3 * joints].to_vec(),
            values[3 * joints],
            values[3 * joints + 1],
        )
    }

    /// Inverse of [`decode`](Self::decode) for the free entries.
    pub fn encode(&self, params: &OscillatorParams<T>) -> Result<Vec<T>> {
        let joints = self.joint_count();
        ensure!(
            params.joint_count() == joints,
            "parameters have {} joints, search space has {joints}",
            params.joint_count()
        );
        let mut flat = params.amplitudes.clone();
        flat.extend_from_slice(&params.offsets);
        flat.extend_from_slice(&params.phase_shifts);
        flat.push(params.omega_swing);
        flat.push(params.omega_stance);
        let mut out = Vec::with_capacity(self.param_count());
        for entry in &self.entries {
            if let ParamKind::Uniform { lo, hi } = entry.kind {
                let slot = Slot::parse(&entry.name).expect("validated");
                out.push((flat[slot_index(slot, joints)] - lo) / (hi - lo));
            }
        }
        Ok(out)
    }

    /// Lower and upper bound of every free entry, in entry order.
    pub fn bounds(&self) -> Vec<(T, T)> {
        self.entries
            .iter()
            .filter_map(|e| match e.kind {
                ParamKind::Uniform { lo, hi } => Some((lo, hi)),
                _ => None,
            })
            .collect()
    }
}

fn slot_index(slot: Slot, joints: usize) -> usize {
    match slot {
        Slot::Amplitude(i) => i,
        Slot::Offset(i) => joints + i,
        Slot::Phase(i) => 2 * joints + i,
        Slot::OmegaSwing => 3 * joints,
        Slot::OmegaStance => 3 * joints + 1,
    }
}

fn slot_name(idx: usize, joints: usize) -> String {
    if idx == 3 * joints {
        "omega_swing".into()
    } else if idx == 3 * joints + 1 {
        "omega_stance".into()
    } else if idx < joints {
        format!("amplitude.{idx}")
    } else if idx < 2 * joints {
        format!("offset.{}", idx - joints)
    } else {
        format!("phase.{}", idx - 2 * joints)
    }
}
