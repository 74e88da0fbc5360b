//! Velocity-disturbance synthesis: seeded impulse and time-varying
//! perturbation sequences applied to the plant's velocity sub-state.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisturbanceKind {
    Impulse,
    TimeVarying,
}

impl DisturbanceKind {
    pub fn label(&self) -> &'static str {
        match self {
            DisturbanceKind::Impulse => "impulse",
            DisturbanceKind::TimeVarying => "time_varying",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisturbanceLevel {
    Small,
    Medium,
    Large,
}

impl DisturbanceLevel {
    pub const ALL: [DisturbanceLevel; 3] = [
        DisturbanceLevel::Small,
        DisturbanceLevel::Medium,
        DisturbanceLevel::Large,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            DisturbanceLevel::Small => "small",
            DisturbanceLevel::Medium => "medium",
            DisturbanceLevel::Large => "large",
        }
    }

    pub fn index(&self) -> usize {
        match self {
            DisturbanceLevel::Small => 0,
            DisturbanceLevel::Medium => 1,
            DisturbanceLevel::Large => 2,
        }
    }
}

/// Disturbance magnitudes per system and kind (velocity units).
pub fn default_magnitude(system: &str, kind: DisturbanceKind, level: DisturbanceLevel) -> f64 {
    let table: [f64; 3] = match (system, kind) {
        ("planar_arm", DisturbanceKind::Impulse) => [0.5, 1.5, 3.0],
        ("planar_arm", DisturbanceKind::TimeVarying) => [0.1, 0.3, 0.6],
        (_, DisturbanceKind::Impulse) => [0.2, 0.7, 1.5],
        (_, DisturbanceKind::TimeVarying) => [0.07, 0.2, 0.4],
    };
    table[level.index()]
}

/// Specification of one disturbance realization family.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DisturbanceSpec {
    pub kind: DisturbanceKind,
    pub level: DisturbanceLevel,
    /// Per-step perturbation norm on the velocity sub-state.
    pub magnitude: f64,
    /// Impulse: the 2-step active window (chosen at random inside
    /// `[10, T-20]` when absent). Time-varying: the active interval,
    /// defaulting to `[30, 100]`.
    pub window: Option<(usize, usize)>,
    /// Base seed mixed with the per-replication seed.
    pub seed: u64,
}

impl DisturbanceSpec {
    pub fn new(kind: DisturbanceKind, level: DisturbanceLevel, magnitude: f64) -> Result<Self> {
        if !(magnitude > 0.0) {
            return Err(Error::Contract(format!("disturbance magnitude must be positive, got {magnitude}")));
        }
        Ok(DisturbanceSpec { kind, level, magnitude, window: None, seed: 0 })
    }

    fn validate(&self, horizon: usize) -> Result<()> {
        if !(self.magnitude > 0.0) {
            return Err(Error::Contract("disturbance magnitude must be positive".into()));
        }
        if let Some((start, end)) = self.window {
            if start >= end || end > horizon {
                return Err(Error::Contract(format!(
                    "disturbance window [{start}, {end}) invalid for horizon {horizon}"
                )));
            }
            if self.kind == DisturbanceKind::Impulse && end - start != 2 {
                return Err(Error::Contract("impulse window must span exactly 2 steps".into()));
            }
        }
        Ok(())
    }
}

fn mix_seeds(a: u64, b: u64) -> u64 {
    // SplitMix64 finalizer over the combined words.
    let mut z = a ^ b.rotate_left(32) ^ 0x9E37_79B9_7F4A_7C15;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn unit_direction(rng: &mut ChaCha12Rng, dim: usize) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(dim, |_, _| {
            let z: f64 = StandardNormal.sample(rng);
            z
        });
        let norm = v.norm();
        if norm > 1e-9 {
            return v / norm;
        }
    }
}

/// Generates the per-step additive velocity perturbation sequence (length
/// `horizon`, each vector of dimension `velocity_dim`).
///
/// Impulse: a fixed random unit direction scaled by the magnitude on exactly
/// two consecutive steps. Time-varying: a low-pass-filtered noise direction,
/// rescaled to the magnitude at every step inside the window.
pub fn make_disturbance(
    spec: &DisturbanceSpec,
    velocity_dim: usize,
    horizon: usize,
    rng_seed: u64,
) -> Result<Vec<DVector<f64>>> {
    spec.validate(horizon)?;
    let mut out = vec![DVector::zeros(velocity_dim); horizon];
    if velocity_dim == 0 {
        return Ok(out);
    }
    let mut rng = ChaCha12Rng::seed_from_u64(mix_seeds(spec.seed, rng_seed));
    match spec.kind {
        DisturbanceKind::Impulse => {
            let direction = unit_direction(&mut rng, velocity_dim);
            let onset = match spec.window {
                Some((start, _)) => start,
                None => {
                    let latest = horizon.saturating_sub(20).max(11);
                    let earliest = 10.min(latest - 1);
                    rng.random_range(earliest..latest)
                }
            };
            let onset = onset.min(horizon.saturating_sub(2));
            for t in onset..(onset + 2).min(horizon) {
                out[t] = &direction * spec.magnitude;
            }
        }
        DisturbanceKind::TimeVarying => {
            let (start, end) = spec.window.unwrap_or((30.min(horizon), 100.min(horizon)));
            let end = end.min(horizon);
            if start >= end {
                return Ok(out);
            }
            // Exponentially smoothed white noise defines the direction path.
            let alpha = 0.45;
            let mut state = unit_direction(&mut rng, velocity_dim);
            let mut prev = state.clone();
            for item in out.iter_mut().take(end).skip(start) {
                let noise = DVector::from_fn(velocity_dim, |_, _| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    z
                });
                state = &state * (1.0 - alpha) + noise * alpha;
                let norm = state.norm();
                let dir = if norm > 1e-9 { &state / norm } else { prev.clone() };
                prev = dir.clone();
                *item = dir * spec.magnitude;
            }
        }
    }
    Ok(out)
}
