//! Radio and deployment configuration.
//!
//! [`SystemConfig`] is the human-editable document (TOML on disk). Every
//! field has a default, and the effective config written next to each
//! artifact carries all of them so runs are self-describing.
//! [`RadioConfig`] is the resolved form consumed by the generators and
//! metrics, with the noise-normalized powers already computed.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Thermal noise density at room temperature (dBm/Hz).
pub const THERMAL_NOISE_DBM_PER_HZ: f64 = -174.0;

/// Three-slope path-loss model parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ThreeSlopeParams {
    /// Inner breakpoint (km); path loss is flat below it.
    pub d0_km: f64,
    /// Outer breakpoint (km); slope changes from 20 to 35 dB/decade.
    pub d1_km: f64,
    /// Carrier- and height-dependent loss constant (dB).
    pub loss_db: f64,
}

impl Default for ThreeSlopeParams {
    fn default() -> Self {
        Self {
            d0_km: 0.01,
            d1_km: 0.05,
            loss_db: 140.7,
        }
    }
}

/// Bandwidth, noise figure and transmit powers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RadioConstants {
    pub bandwidth_hz: f64,
    pub noise_figure_db: f64,
    pub pilot_power_w: f64,
    pub downlink_power_w: f64,
}

impl Default for RadioConstants {
    fn default() -> Self {
        Self {
            bandwidth_hz: 20e6,
            noise_figure_db: 9.0,
            pilot_power_w: 0.1,
            downlink_power_w: 0.2,
        }
    }
}

/// Configuration document. Serialized as TOML.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemConfig {
    /// Preset this config was derived from, if any (1..=5).
    pub scenario: Option<u8>,
    pub aps: usize,
    pub antennas: usize,
    pub k_max: usize,
    pub k_min: usize,
    pub pilot_len: usize,
    pub coherence_len: usize,
    pub area_km2: f64,
    pub shadow_sigma_db: f64,
    pub radio: RadioConstants,
    pub path_loss: ThreeSlopeParams,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self::scenario(1).expect("preset 1 exists")
    }
}

impl SystemConfig {
    /// Built-in deployment presets (coverage area, AP count, UE range).
    pub fn scenario(id: u8) -> Result<Self> {
        let (area_km2, aps, k_max, k_min) = match id {
            1 => (0.16, 16, 8, 8),
            2 => (0.32, 32, 20, 20),
            3 => (0.32, 32, 20, 10),
            4 => (0.32, 64, 40, 40),
            5 => (0.32, 64, 40, 20),
            _ => return Err(Error::Config(format!("unknown scenario preset {id} (expected 1..=5)"))),
        };
        Ok(Self {
            scenario: Some(id),
            aps,
            antennas: 4,
            k_max,
            k_min,
            pilot_len: 18,
            coherence_len: 200,
            area_km2,
            shadow_sigma_db: 8.0,
            radio: RadioConstants::default(),
            path_loss: ThreeSlopeParams::default(),
        })
    }

    /// Training-set size listed for each preset.
    pub fn preset_training_samples(id: u8) -> Option<usize> {
        match id {
            1 => Some(50_000),
            2 | 4 => Some(100_000),
            3 | 5 => Some(800_000),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.aps == 0 {
            return fail("aps must be at least 1".into());
        }
        if self.antennas == 0 {
            return fail("antennas must be at least 1".into());
        }
        if self.k_min == 0 || self.k_min > self.k_max {
            return fail(format!("need 1 <= k_min <= k_max, got k_min={} k_max={}", self.k_min, self.k_max));
        }
        if self.pilot_len == 0 || self.pilot_len >= self.coherence_len {
            return fail(format!(
                "need 1 <= pilot_len < coherence_len, got {} and {}",
                self.pilot_len, self.coherence_len
            ));
        }
        if !(self.area_km2 > 0.0) {
            return fail(format!("area_km2 must be positive, got {}", self.area_km2));
        }
        if !(self.shadow_sigma_db >= 0.0) {
            return fail(format!("shadow_sigma_db must be non-negative, got {}", self.shadow_sigma_db));
        }
        let r = &self.radio;
        for (name, v) in [
            ("bandwidth_hz", r.bandwidth_hz),
            ("pilot_power_w", r.pilot_power_w),
            ("downlink_power_w", r.downlink_power_w),
        ] {
            if !(v > 0.0) {
                return fail(format!("{name} must be positive, got {v}"));
            }
        }
        let p = &self.path_loss;
        if !(p.d0_km > 0.0 && p.d0_km < p.d1_km) {
            return fail(format!("need 0 < d0_km < d1_km, got {} and {}", p.d0_km, p.d1_km));
        }
        Ok(())
    }

    /// Resolve into the form consumed by the generators and metrics.
    pub fn radio(&self) -> Result<RadioConfig> {
        self.validate()?;
        let (zeta_p, zeta_d) = noise_normalized_powers(
            self.radio.bandwidth_hz,
            self.radio.noise_figure_db,
            self.radio.pilot_power_w,
            self.radio.downlink_power_w,
        );
        Ok(RadioConfig {
            m: self.aps,
            n: self.antennas,
            k_max: self.k_max,
            k_min: self.k_min,
            t_p: self.pilot_len,
            t_c: self.coherence_len,
            area_side_km: self.area_km2.sqrt(),
            zeta_p,
            zeta_d,
            sigma_sh_db: self.shadow_sigma_db,
            path_loss: self.path_loss.clone(),
        })
    }

    /// SHA-256 over the canonical JSON encoding of every field.
    pub fn hash(&self) -> [u8; 32] {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&bytes).into()
    }

    pub fn hash_hex(&self) -> String {
        hex(&self.hash())
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

/// Lowercase hexadecimal encoding.
pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

/// Resolved radio configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct RadioConfig {
    /// AP count.
    pub m: usize,
    /// Antennas per AP.
    pub n: usize,
    pub k_max: usize,
    pub k_min: usize,
    /// Pilot length (symbols).
    pub t_p: usize,
    /// Coherence block length (symbols).
    pub t_c: usize,
    pub area_side_km: f64,
    /// Normalized pilot SNR per symbol (linear).
    pub zeta_p: f64,
    /// Normalized maximum downlink power per symbol (linear).
    pub zeta_d: f64,
    pub sigma_sh_db: f64,
    pub path_loss: ThreeSlopeParams,
}

impl RadioConfig {
    /// Pre-log factor `1 - T_p / T_c` of the spectral efficiency.
    pub fn prelog(&self) -> f64 {
        1.0 - self.t_p as f64 / self.t_c as f64
    }
}

/// Noise power in dBm for the given bandwidth and noise figure.
pub fn noise_power_dbm(bandwidth_hz: f64, noise_figure_db: f64) -> f64 {
    THERMAL_NOISE_DBM_PER_HZ + 10.0 * bandwidth_hz.log10() + noise_figure_db
}

/// Transmit powers normalized by the receiver noise power, `(zeta_p, zeta_d)`.
pub fn noise_normalized_powers(
    bandwidth_hz: f64,
    noise_figure_db: f64,
    pilot_power_w: f64,
    downlink_power_w: f64,
) -> (f64, f64) {
    let noise_w = 10f64.powf((noise_power_dbm(bandwidth_hz, noise_figure_db) - 30.0) / 10.0);
    (pilot_power_w / noise_w, downlink_power_w / noise_w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_noise_and_downlink_snr() {
        let noise = noise_power_dbm(20e6, 9.0);
        assert!((noise - (-91.9897)).abs() < 1e-3, "{noise}");
        let (zp, zd) = noise_normalized_powers(20e6, 9.0, 0.1, 0.2);
        // 23.0103 dBm + 91.9897 dB = 115 dB
        assert!((zd.log10() - 11.5).abs() < 1e-9, "{}", zd.log10());
        assert!((zp - zd / 2.0).abs() <= 1e-6 * zd);
    }

    #[test]
    fn doubling_bandwidth_halves_snr() {
        let (zp1, zd1) = noise_normalized_powers(20e6, 9.0, 0.1, 0.2);
        let (zp2, zd2) = noise_normalized_powers(40e6, 9.0, 0.1, 0.2);
        assert!((zp1 / zp2 - 2.0).abs() < 1e-12);
        assert!((zd1 / zd2 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn presets_match_table() {
        let s1 = SystemConfig::scenario(1).unwrap();
        assert_eq!((s1.aps, s1.k_max, s1.k_min), (16, 8, 8));
        assert!((s1.area_km2 - 0.16).abs() < 1e-15);
        let s5 = SystemConfig::scenario(5).unwrap();
        assert_eq!((s5.aps, s5.k_max, s5.k_min), (64, 40, 20));
        assert!(SystemConfig::scenario(6).is_err());
        assert_eq!(SystemConfig::preset_training_samples(3), Some(800_000));
    }

    #[test]
    fn invalid_configs_rejected() {
        let c = SystemConfig { k_min: 9, ..SystemConfig::default() };
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let c = SystemConfig { pilot_len: 200, ..SystemConfig::default() };
        assert!(c.validate().is_err());
        let c = SystemConfig { area_km2: 0.0, ..SystemConfig::default() };
        assert!(c.radio().is_err());
    }

    #[test]
    fn hash_tracks_every_field() {
        let a = SystemConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.radio.noise_figure_db = 9.5;
        assert_ne!(a.hash(), b.hash());
    }
}
