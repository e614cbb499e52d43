//! Measured (or simulated) gains and QBERs indexed by intensity setting.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::params::{Basis, IntensityLabel, User};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ComboKey {
    pub alice: IntensityLabel,
    pub bob: IntensityLabel,
    pub basis: Basis,
}

impl ComboKey {
    pub fn new(alice: IntensityLabel, bob: IntensityLabel, basis: Basis) -> Self {
        Self { alice, bob, basis }
    }

    /// Label in the `q_<labelA><labelB>` column convention, e.g. `uv`.
    pub fn pair_label(&self) -> String {
        format!("{}{}", self.alice, self.bob)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComboStats {
    /// Detections per encoding gate.
    pub gain: f64,
    /// QBER folded into [0, 0.5] by bit-flip symmetry.
    pub qber: Option<f64>,
    /// QBER before folding.
    pub qber_raw: Option<f64>,
    #[serde(default)]
    pub pulses: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ComboRecord {
    #[serde(flatten)]
    key: ComboKey,
    #[serde(flatten)]
    stats: ComboStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SingleArmRecord {
    user: User,
    intensity: IntensityLabel,
    gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TalliesRecord {
    combos: Vec<ComboRecord>,
    single_arm: Vec<SingleArmRecord>,
    vacuum_gain: Option<f64>,
}

/// Gains `Q` and QBERs `E` per (Alice intensity, Bob intensity, basis).
///
/// Construction goes through [`MeasurementTallies::insert`] and friends, which
/// reject gains outside [0, 1] and QBERs outside [0, 1] before folding.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TalliesRecord", into = "TalliesRecord")]
pub struct MeasurementTallies {
    combos: BTreeMap<ComboKey, ComboStats>,
    single_arm: BTreeMap<(User, IntensityLabel), f64>,
    vacuum_gain: Option<f64>,
}

fn check_unit(field: &str, value: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&value) {
        return Err(Error::Range {
            field: field.to_string(),
            value,
            line: 0,
        });
    }
    Ok(())
}

/// Bit-flip normalisation, `min(E, 1 - E)`.
pub fn fold_qber(e: f64) -> f64 {
    e.min(1.0 - e)
}

impl MeasurementTallies {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.combos.is_empty() && self.single_arm.is_empty() && self.vacuum_gain.is_none()
    }

    /// Records a combination; `qber_raw` is folded on insertion.
    pub fn insert(&mut self, key: ComboKey, gain: f64, qber_raw: Option<f64>, pulses: u64) -> Result<()> {
        check_unit("gain", gain)?;
        if let Some(e) = qber_raw {
            check_unit("qber", e)?;
        }
        self.combos.insert(
            key,
            ComboStats {
                gain,
                qber: qber_raw.map(fold_qber),
                qber_raw,
                pulses,
            },
        );
        Ok(())
    }

    pub fn with(mut self, key: ComboKey, gain: f64, qber_raw: Option<f64>) -> Result<Self> {
        self.insert(key, gain, qber_raw, 0)?;
        Ok(self)
    }

    pub fn set_single_arm(&mut self, user: User, label: IntensityLabel, gain: f64) -> Result<()> {
        check_unit("single_arm_gain", gain)?;
        self.single_arm.insert((user, label), gain);
        Ok(())
    }

    pub fn set_vacuum_gain(&mut self, gain: f64) -> Result<()> {
        check_unit("vacuum_gain", gain)?;
        self.vacuum_gain = Some(gain);
        Ok(())
    }

    pub fn get(&self, key: &ComboKey) -> Option<&ComboStats> {
        self.combos.get(key)
    }

    pub fn gain(&self, alice: IntensityLabel, bob: IntensityLabel, basis: Basis) -> Option<f64> {
        self.get(&ComboKey::new(alice, bob, basis)).map(|s| s.gain)
    }

    pub fn qber(&self, alice: IntensityLabel, bob: IntensityLabel, basis: Basis) -> Option<f64> {
        self.get(&ComboKey::new(alice, bob, basis)).and_then(|s| s.qber)
    }

    pub fn single_arm_gain(&self, user: User, label: IntensityLabel) -> Option<f64> {
        self.single_arm.get(&(user, label)).copied()
    }

    pub fn vacuum_gain(&self) -> Option<f64> {
        self.vacuum_gain
    }

    pub fn combos(&self) -> impl Iterator<Item = (&ComboKey, &ComboStats)> {
        self.combos.iter()
    }
}

impl TryFrom<TalliesRecord> for MeasurementTallies {
    type Error = Error;

    fn try_from(r: TalliesRecord) -> Result<Self> {
        let mut t = MeasurementTallies::new();
        for c in r.combos {
            t.insert(c.key, c.stats.gain, c.stats.qber_raw.or(c.stats.qber), c.stats.pulses)?;
        }
        for s in r.single_arm {
            t.set_single_arm(s.user, s.intensity, s.gain)?;
        }
        if let Some(q) = r.vacuum_gain {
            t.set_vacuum_gain(q)?;
        }
        Ok(t)
    }
}

impl From<MeasurementTallies> for TalliesRecord {
    fn from(t: MeasurementTallies) -> Self {
        TalliesRecord {
            combos: t
                .combos
                .into_iter()
                .map(|(key, stats)| ComboRecord { key, stats })
                .collect(),
            single_arm: t
                .single_arm
                .into_iter()
                .map(|((user, intensity), gain)| SingleArmRecord { user, intensity, gain })
                .collect(),
            vacuum_gain: t.vacuum_gain,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use IntensityLabel::*;

    #[test]
    fn rejects_out_of_range() {
        let mut t = MeasurementTallies::new();
        let k = ComboKey::new(U, U, Basis::X);
        assert!(t.insert(k, 1.5, None, 0).is_err());
        assert!(t.insert(k, -0.1, None, 0).is_err());
        assert!(t.insert(k, 0.1, Some(1.2), 0).is_err());
        assert!(t.set_vacuum_gain(2.0).is_err());
        assert!(t.set_single_arm(User::Alice, U, -1.0).is_err());
    }

    #[test]
    fn qber_is_folded_and_raw_kept() {
        let mut t = MeasurementTallies::new();
        let k = ComboKey::new(U, U, Basis::X);
        t.insert(k, 1e-3, Some(0.9), 10).unwrap();
        let s = t.get(&k).unwrap();
        assert!((s.qber.unwrap() - 0.1).abs() < 1e-12);
        assert_eq!(s.qber_raw, Some(0.9));
    }

    #[test]
    fn json_round_trip_validates() {
        let mut t = MeasurementTallies::new();
        t.insert(ComboKey::new(U, V, Basis::X), 8.77e-6, None, 100).unwrap();
        t.set_vacuum_gain(25.9e-9).unwrap();
        t.set_single_arm(User::Bob, U, 985.8e-6).unwrap();
        let js = serde_json::to_string(&t).unwrap();
        let back: MeasurementTallies = serde_json::from_str(&js).unwrap();
        assert_eq!(t, back);
        let bad = js.replace("8.77e-6", "3.0");
        assert!(serde_json::from_str::<MeasurementTallies>(&bad).is_err());
    }
}
