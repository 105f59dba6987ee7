//! Synthetic CSI: a tapped-delay-line channel per activity class evaluated
//! at every sub-carrier frequency, with per-packet perturbations, an
//! unknown phase offset and timing slope, thermal noise, and optional RFI
//! confined to one sub-band.
//!
//! Every class draws from its own seed-derived substream, and RFI from a
//! separate one, so enabling RFI leaves the CSI outside the interfered
//! sub-band bit-identical.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ActivityClass, BandDescriptor, CsiVector, LabeledSample, Sample};
use crate::preprocess::BandSelection;
use crate::rng::substream;

const DEFAULT_SCENARIO: &str = include_str!("../scenarios/default.json");
const DEFAULT_RFI: &str = include_str!("../scenarios/rfi_channel157.json");

/// One propagation path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tap {
    pub delay_ns: f64,
    pub gain_re: f64,
    pub gain_im: f64,
    /// Path reflected off the person; its delay moves while walking.
    #[serde(default)]
    pub body: bool,
}

impl Tap {
    pub fn gain(&self) -> Complex64 {
        Complex64::new(self.gain_re, self.gain_im)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassChannel {
    pub class: ActivityClass,
    pub taps: Vec<Tap>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub band: BandDescriptor,
    pub classes: Vec<ClassChannel>,
    /// Std of the relative complex gain perturbation of every tap, per packet.
    pub static_jitter: f64,
    /// Std (ns) of the per-packet delay shift of body taps in walking classes.
    pub walking_fluctuation_ns: f64,
    pub packets_per_class: usize,
    pub seed: u64,
    pub baseline_snr_db: f64,
    /// Half-width of the uniform SNR jitter (dB).
    pub snr_jitter_db: f64,
    /// Std of the extra SNR variation (dB) while walking.
    pub walking_snr_fluctuation_db: f64,
    /// Apply a random common phase and timing offset to every packet.
    pub phase_offsets: bool,
    /// Std (ns) of the per-packet timing offset.
    pub timing_offset_ns: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        serde_json::from_str(DEFAULT_SCENARIO).expect("shipped default scenario parses")
    }
}

impl ScenarioConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn channel(&self, class: ActivityClass) -> Option<&ClassChannel> {
        self.classes.iter().find(|c| c.class == class)
    }

    pub fn validate(&self) -> Result<()> {
        self.band.validate()?;
        if self.classes.is_empty() {
            return Err(Error::Config("scenario defines no classes".into()));
        }
        for (i, ch) in self.classes.iter().enumerate() {
            if ch.taps.is_empty() {
                return Err(Error::Config(format!("class {} has no taps", ch.class)));
            }
            if self.classes[..i].iter().any(|c| c.class == ch.class) {
                return Err(Error::Config(format!("class {} defined twice", ch.class)));
            }
            if ch.taps.iter().any(|t| !(t.delay_ns.is_finite() && t.gain_re.is_finite() && t.gain_im.is_finite())) {
                return Err(Error::Config(format!("class {} has a non-finite tap", ch.class)));
            }
        }
        let scales = [
            ("static_jitter", self.static_jitter),
            ("walking_fluctuation_ns", self.walking_fluctuation_ns),
            ("snr_jitter_db", self.snr_jitter_db),
            ("walking_snr_fluctuation_db", self.walking_snr_fluctuation_db),
            ("timing_offset_ns", self.timing_offset_ns),
        ];
        for (name, v) in scales {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if !self.baseline_snr_db.is_finite() {
            return Err(Error::Config("baseline_snr_db must be finite".into()));
        }
        Ok(())
    }
}

/// Interference in one sub-band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RfiConfig {
    /// MHz from the lower band edge.
    pub start_mhz_offset: f64,
    pub width_mhz: f64,
    /// Noise power relative to the packet's mean signal power.
    pub noise_power: f64,
    pub snr_drop_db: f64,
    /// Std (dB) of the per-packet interference level; a stronger burst
    /// lowers the reported SNR and raises the noise by the same amount.
    pub snr_fluctuation_db: f64,
}

impl Default for RfiConfig {
    fn default() -> Self {
        serde_json::from_str(DEFAULT_RFI).expect("shipped RFI config parses")
    }
}

impl RfiConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn selection(&self, band: &BandDescriptor) -> Result<BandSelection> {
        BandSelection::new(band, self.start_mhz_offset, self.width_mhz)
    }

    pub fn validate(&self, band: &BandDescriptor) -> Result<()> {
        self.selection(band).map_err(|e| Error::Config(format!("RFI sub-band: {e}")))?;
        if !(self.noise_power.is_finite() && self.noise_power >= 0.0) {
            return Err(Error::Config("RFI noise power must be finite and >= 0".into()));
        }
        if !(self.snr_fluctuation_db.is_finite() && self.snr_fluctuation_db >= 0.0) {
            return Err(Error::Config("RFI SNR fluctuation must be finite and >= 0".into()));
        }
        if !self.snr_drop_db.is_finite() {
            return Err(Error::Config("RFI SNR drop must be finite".into()));
        }
        Ok(())
    }
}

fn complex_gaussian<R: Rng>(rng: &mut R) -> Complex64 {
    // unit total power
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Noise-free frequency response of `taps` on `band`.
pub fn frequency_response(band: &BandDescriptor, taps: &[Tap]) -> Vec<Complex64> {
    (0..band.num_subcarriers)
        .map(|k| {
            let f = band.subcarrier_freq_mhz(k);
            taps.iter()
                .map(|t| t.gain() * Complex64::from_polar(1.0, -2.0 * PI * f * t.delay_ns * 1e-3))
                .sum()
        })
        .collect()
}

/// Generates `packets_per_class` samples for every configured class, in
/// fixed class order.
pub fn generate(scenario: &ScenarioConfig, rfi: Option<&RfiConfig>) -> Result<Vec<LabeledSample>> {
    scenario.validate()?;
    let rfi_band = match rfi {
        Some(r) => {
            r.validate(&scenario.band)?;
            Some((r, r.selection(&scenario.band)?))
        }
        None => None,
    };
    let band = scenario.band;
    let mut out = Vec::with_capacity(scenario.classes.len() * scenario.packets_per_class);
    let mut seq = 0u64;
    for class in ActivityClass::ALL {
        let Some(channel) = scenario.channel(class) else {
            continue;
        };
        let mut rng = substream(scenario.seed, &format!("channel/{class}"));
        let mut rfi_rng = substream(scenario.seed, &format!("rfi/{class}"));
        for _ in 0..scenario.packets_per_class {
            let taps: Vec<Tap> = channel
                .taps
                .iter()
                .map(|t| {
                    let mut t = *t;
                    let g = t.gain() * (Complex64::new(1.0, 0.0) + complex_gaussian(&mut rng) * scenario.static_jitter);
                    t.gain_re = g.re;
                    t.gain_im = g.im;
                    if class.is_walking() && t.body {
                        let shift: f64 = StandardNormal.sample(&mut rng);
                        t.delay_ns += scenario.walking_fluctuation_ns * shift;
                    }
                    t
                })
                .collect();
            let mut values = frequency_response(&band, &taps);

            if scenario.phase_offsets {
                let common = rng.random_range(-PI..PI);
                let timing: f64 = StandardNormal.sample(&mut rng);
                let timing_ns = scenario.timing_offset_ns * timing;
                for (k, v) in values.iter_mut().enumerate() {
                    let f_rel = (k as f64 + 0.5) * band.spacing_mhz();
                    *v *= Complex64::from_polar(1.0, common - 2.0 * PI * f_rel * timing_ns * 1e-3);
                }
            }

            let mut snr_db = scenario.baseline_snr_db + scenario.snr_jitter_db * rng.random_range(-1.0..=1.0);
            if class.is_walking() {
                let extra: f64 = StandardNormal.sample(&mut rng);
                snr_db += scenario.walking_snr_fluctuation_db * extra;
            }
            let power = values.iter().map(|v| v.norm_sqr()).sum::<f64>() / values.len() as f64;
            let thermal = (power * 10f64.powf(-snr_db / 10.0)).sqrt();
            for v in values.iter_mut() {
                *v += complex_gaussian(&mut rng) * thermal;
            }

            if let Some((cfg, sel)) = rfi_band {
                let burst: f64 = StandardNormal.sample(&mut rfi_rng);
                let burst_db = cfg.snr_fluctuation_db * burst;
                snr_db -= cfg.snr_drop_db + burst_db;
                let amp = (cfg.noise_power * power * 10f64.powf(burst_db / 10.0)).sqrt();
                for v in values[sel.lo..sel.hi].iter_mut() {
                    *v += complex_gaussian(&mut rfi_rng) * amp;
                }
            }

            let csi = CsiVector::new(values, band)?;
            out.push(LabeledSample {
                sample: Sample::new(csi, snr_db, seq)?,
                label: class,
            });
            seq += 1;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quiet(mut s: ScenarioConfig) -> ScenarioConfig {
        s.static_jitter = 0.0;
        s.walking_fluctuation_ns = 0.0;
        s.snr_jitter_db = 0.0;
        s.walking_snr_fluctuation_db = 0.0;
        s.phase_offsets = false;
        s.baseline_snr_db = 1e6;
        s
    }

    #[test]
    fn shipped_configs_are_valid() {
        let s = ScenarioConfig::default();
        s.validate().unwrap();
        assert_eq!(s.classes.len(), 8);
        assert_eq!(s.band, BandDescriptor::wasp_5800());
        RfiConfig::default().validate(&s.band).unwrap();
    }

    #[test]
    fn flat_single_tap_channel() {
        let band = BandDescriptor::new(5800.0, 20.0, 8).unwrap();
        let h = frequency_response(&band, &[Tap { delay_ns: 0.0, gain_re: 1.0, gain_im: 0.0, body: false }]);
        assert!(h.iter().all(|v| *v == Complex64::new(1.0, 0.0)));
    }

    #[test]
    fn zero_jitter_static_packets_are_identical() {
        let mut s = quiet(ScenarioConfig::default());
        s.packets_per_class = 4;
        let data = generate(&s, None).unwrap();
        assert_eq!(data.len(), 32);
        let e: Vec<_> = data.iter().filter(|d| d.label == ActivityClass::E).collect();
        for d in &e[1..] {
            assert_eq!(d.sample.csi.values(), e[0].sample.csi.values());
        }
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut s = ScenarioConfig::default();
        s.classes[0].taps.clear();
        assert!(matches!(generate(&s, None), Err(Error::Config(_))));
        let mut s = ScenarioConfig::default();
        s.static_jitter = -1.0;
        assert!(generate(&s, None).is_err());
        let s = ScenarioConfig::default();
        let rfi = RfiConfig { start_mhz_offset: 120.0, ..RfiConfig::default() };
        assert!(matches!(generate(&s, Some(&rfi)), Err(Error::Config(_))));
    }
}
