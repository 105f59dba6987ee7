//! CSI sanitisation, smoothing, amplitude extraction and bandwidth-window
//! slicing.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BandDescriptor, CsiVector};

const TAU: f64 = 2.0 * PI;

/// Absorbs rounding in `width * n / total` products that should be integral.
const INDEX_SLACK: f64 = 1e-9;

/// A contiguous sub-band, given in MHz from the band's lower edge and
/// resolved to the half-open sub-carrier range `lo..hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandSelection {
    pub start_mhz_offset: f64,
    pub width_mhz: f64,
    pub lo: usize,
    pub hi: usize,
}

impl BandSelection {
    pub fn new(band: &BandDescriptor, start_mhz_offset: f64, width_mhz: f64) -> Result<Self> {
        band.validate()?;
        let total = band.total_bandwidth_mhz;
        if !(start_mhz_offset.is_finite() && width_mhz.is_finite()) || start_mhz_offset < 0.0 || width_mhz <= 0.0 {
            return Err(Error::Range(format!(
                "invalid band selection start={start_mhz_offset} width={width_mhz}"
            )));
        }
        if start_mhz_offset + width_mhz > total * (1.0 + INDEX_SLACK) {
            return Err(Error::Range(format!(
                "selection {start_mhz_offset}+{width_mhz} MHz exceeds the {total} MHz band"
            )));
        }
        let per_mhz = band.num_subcarriers as f64 / total;
        let lo = (start_mhz_offset * per_mhz + INDEX_SLACK).floor() as usize;
        let count = (width_mhz * per_mhz + INDEX_SLACK).floor() as usize;
        let hi = lo + count;
        if count == 0 {
            return Err(Error::Range(format!(
                "{width_mhz} MHz holds no complete sub-carrier"
            )));
        }
        if hi > band.num_subcarriers {
            return Err(Error::Range(format!(
                "selection resolves to sub-carriers {lo}..{hi} beyond {}",
                band.num_subcarriers
            )));
        }
        Ok(Self {
            start_mhz_offset,
            width_mhz,
            lo,
            hi,
        })
    }

    /// The whole band.
    pub fn full(band: &BandDescriptor) -> Self {
        Self {
            start_mhz_offset: 0.0,
            width_mhz: band.total_bandwidth_mhz,
            lo: 0,
            hi: band.num_subcarriers,
        }
    }

    pub fn len(&self) -> usize {
        self.hi - self.lo
    }

    pub fn is_empty(&self) -> bool {
        self.hi == self.lo
    }

    /// Band descriptor of the selected sub-carriers.
    pub fn sliced_band(&self, band: &BandDescriptor) -> BandDescriptor {
        let spacing = band.spacing_mhz();
        let n = self.len();
        BandDescriptor {
            center_freq_mhz: band.lower_edge_mhz() + (self.lo as f64 + n as f64 / 2.0) * spacing,
            total_bandwidth_mhz: n as f64 * spacing,
            num_subcarriers: n,
        }
    }
}

/// Exponential smoothing factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothingConfig {
    pub alpha: f64,
}

impl SmoothingConfig {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::Config(format!("smoothing alpha must lie in (0, 1], got {alpha}")));
        }
        Ok(Self { alpha })
    }
}

impl Default for SmoothingConfig {
    fn default() -> Self {
        Self { alpha: 0.5 }
    }
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_phase(t: f64) -> f64 {
    t - TAU * ((t - PI) / TAU).ceil()
}

/// Standard phase unwrapping in index order. Steps of exactly `±pi` are
/// left uncorrected.
pub fn unwrap_phases(phases: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(phases.len());
    for (k, &p) in phases.iter().enumerate() {
        if k == 0 {
            out.push(p);
            continue;
        }
        let d = p - phases[k - 1];
        let step = if (-PI..=PI).contains(&d) { d } else { wrap_phase(d) };
        out.push(out[k - 1] + step);
    }
    out
}

/// Least-squares line `y ~ slope * x + intercept`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return (0.0, my);
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Removes the unknown per-packet phase offset and timing-induced phase slope.
///
/// The output keeps every amplitude and carries the phase residual of a
/// least-squares line fitted to the unwrapped phases. Zero-amplitude
/// sub-carriers get phase 0 and are left out of the fit.
///
/// Unwrapping is done relative to the fitted slope: among the slopes for
/// which the detrended phase is itself an unwrapped sequence with zero
/// least-squares slope, the one with the smallest residual energy wins.
/// This makes the operation idempotent, which unwrap-then-fit alone is not
/// when a detrended step lands beyond `±pi`.
pub fn sanitise(csi: &CsiVector) -> CsiVector {
    let values = sanitise_values(csi.values());
    CsiVector::new(values, *csi.band()).expect("sanitise preserves length and finiteness")
}

pub fn sanitise_values(values: &[Complex64]) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); values.len()];
    let positions: Vec<usize> = (0..values.len()).filter(|&k| values[k].norm() > 0.0).collect();
    match positions.len() {
        0 => return out,
        1 => {
            let k = positions[0];
            out[k] = Complex64::new(values[k].norm(), 0.0);
            return out;
        }
        _ => {}
    }

    let phases: Vec<f64> = positions.iter().map(|&k| values[k].arg()).collect();
    let deltas: Vec<f64> = phases.windows(2).map(|w| w[1] - w[0]).collect();
    let gaps: Vec<f64> = positions.windows(2).map(|w| (w[1] - w[0]) as f64).collect();

    // Slope of the fitted line as a linear functional of the phase steps:
    // slope = sum_m weight[m] * step[m], weights from suffix sums of
    // centred positions.
    let mean_pos = positions.iter().sum::<usize>() as f64 / positions.len() as f64;
    let centred: Vec<f64> = positions.iter().map(|&p| p as f64 - mean_pos).collect();
    let sxx: f64 = centred.iter().map(|c| c * c).sum();
    let mut weights = vec![0.0; deltas.len()];
    let mut tail = 0.0;
    for m in (0..deltas.len()).rev() {
        tail += centred[m + 1];
        weights[m] = tail / sxx;
    }

    let residual_slope = |a: f64| -> f64 {
        deltas
            .iter()
            .zip(&gaps)
            .zip(&weights)
            .map(|((d, h), w)| w * wrap_phase(d - a * h))
            .sum()
    };

    // residual_slope(a) falls with unit slope between breakpoints and jumps
    // up by TAU * weight[m] where step m wraps.
    let mut breakpoints: Vec<(f64, usize)> = Vec::new();
    for (m, (&d, &h)) in deltas.iter().zip(&gaps).enumerate() {
        let hi = ((d + PI + PI * h) / TAU).floor() as i64 + 1;
        let lo = ((d + PI - PI * h) / TAU).ceil() as i64 - 1;
        for j in lo..=hi {
            let a = (d + PI - TAU * j as f64) / h;
            if a > -PI && a <= PI {
                breakpoints.push((a, m));
            }
        }
    }
    breakpoints.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));

    let mut roots = Vec::new();
    let mut seg_start = -PI;
    let mut g = residual_slope(-PI);
    let mut closest = (g.abs(), -PI);
    let scan_segment = |start: f64, end: f64, g_start: f64, roots: &mut Vec<f64>| {
        if g_start >= 0.0 && g_start < end - start {
            roots.push(start + g_start);
        }
    };
    for &(a, m) in &breakpoints {
        scan_segment(seg_start, a, g, &mut roots);
        g -= a - seg_start;
        if g.abs() < closest.0 {
            closest = (g.abs(), a);
        }
        g += TAU * weights[m];
        seg_start = a;
    }
    scan_segment(seg_start, PI, g, &mut roots);
    if roots.is_empty() {
        roots.push(closest.1);
    }

    let detrended = |a: f64| -> Vec<f64> {
        let mut psi = Vec::with_capacity(phases.len());
        psi.push(phases[0] - a * positions[0] as f64);
        for (m, (&d, &h)) in deltas.iter().zip(&gaps).enumerate() {
            psi.push(psi[m] + wrap_phase(d - a * h));
        }
        let mean = psi.iter().sum::<f64>() / psi.len() as f64;
        psi.iter_mut().for_each(|p| *p -= mean);
        psi
    };

    let mut best: Option<(f64, f64, Vec<f64>)> = None;
    for a in roots {
        let psi = detrended(a);
        let energy: f64 = psi.iter().map(|p| p * p).sum();
        let better = match &best {
            None => true,
            Some((e, a_best, _)) => energy < *e || (energy == *e && a.abs() < a_best.abs()),
        };
        if better {
            best = Some((energy, a, psi));
        }
    }
    let (_, _, psi) = best.expect("at least one candidate slope");
    for (&k, phase) in positions.iter().zip(psi) {
        out[k] = Complex64::from_polar(values[k].norm(), phase);
    }
    out
}

/// Exponential smoother applied per sub-carrier to the complex values.
pub fn smooth(stream: &[CsiVector], cfg: SmoothingConfig) -> Result<Vec<CsiVector>> {
    SmoothingConfig::new(cfg.alpha)?;
    let Some(first) = stream.first() else {
        return Ok(Vec::new());
    };
    let n = first.len();
    let mut out: Vec<CsiVector> = Vec::with_capacity(stream.len());
    for (t, csi) in stream.iter().enumerate() {
        if csi.len() != n {
            return Err(Error::Dimension {
                expected: n,
                found: csi.len(),
            });
        }
        if t == 0 {
            out.push(csi.clone());
            continue;
        }
        let prev = out[t - 1].values();
        let values = csi
            .values()
            .iter()
            .zip(prev)
            .map(|(x, p)| x * cfg.alpha + p * (1.0 - cfg.alpha))
            .collect();
        out.push(CsiVector::new(values, *csi.band())?);
    }
    Ok(out)
}

/// Per-sub-carrier modulus.
pub fn amplitude(csi: &CsiVector) -> Vec<f64> {
    csi.values().iter().map(|v| v.norm()).collect()
}

/// Per-sub-carrier phase angle in `(-pi, pi]`.
pub fn phase(csi: &CsiVector) -> Vec<f64> {
    csi.values().iter().map(|v| v.arg()).collect()
}

pub fn slice_band(csi: &CsiVector, sel: &BandSelection) -> Result<CsiVector> {
    if sel.hi > csi.len() || sel.lo >= sel.hi {
        return Err(Error::Range(format!(
            "selection {}..{} outside {} sub-carriers",
            sel.lo,
            sel.hi,
            csi.len()
        )));
    }
    CsiVector::new(csi.values()[sel.lo..sel.hi].to_vec(), sel.sliced_band(csi.band()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn band(n: usize) -> BandDescriptor {
        BandDescriptor::new(5800.0, 20.0, n).unwrap()
    }

    fn csi(values: Vec<Complex64>) -> CsiVector {
        let n = values.len();
        CsiVector::new(values, band(n)).unwrap()
    }

    /// Slope and intercept of the line through the unwrapped phases of the
    /// non-zero entries.
    fn phase_line(values: &[Complex64]) -> (f64, f64) {
        let pos: Vec<usize> = (0..values.len()).filter(|&k| values[k].norm() > 0.0).collect();
        let xs: Vec<f64> = pos.iter().map(|&k| k as f64).collect();
        let ph: Vec<f64> = pos.iter().map(|&k| values[k].arg()).collect();
        linear_fit(&xs, &unwrap_phases(&ph))
    }

    #[test]
    fn constant_phase_is_removed() {
        let x = csi((0..8).map(|k| Complex64::from_polar(1.0 + k as f64, 2.3)).collect());
        let y = sanitise(&x);
        for (a, b) in x.values().iter().zip(y.values()) {
            assert!(b.arg().abs() < 1e-12);
            assert!((a.norm() - b.norm()).abs() < 1e-12);
        }
    }

    #[test]
    fn linear_phase_is_removed() {
        let x = csi((0..16).map(|k| Complex64::from_polar(0.5, -1.1 + 0.9 * k as f64)).collect());
        let y = sanitise(&x);
        assert!(y.values().iter().all(|v| v.arg().abs() < 1e-9));
    }

    #[test]
    fn zero_entries_pass_through_and_are_skipped() {
        let mut v: Vec<Complex64> = (0..10).map(|k| Complex64::from_polar(1.0, 0.4 * k as f64 + 1.0)).collect();
        v[3] = Complex64::new(0.0, 0.0);
        let y = sanitise(&csi(v));
        assert_eq!(y.values()[3], Complex64::new(0.0, 0.0));
        assert!(y.values().iter().all(|v| v.arg().abs() < 1e-9));

        let single = sanitise(&csi(vec![Complex64::new(0.0, 0.0), Complex64::new(0.0, -2.0)]));
        assert!((single.values()[1] - Complex64::new(2.0, 0.0)).norm() < 1e-15);
        let zeros = sanitise(&csi(vec![Complex64::new(0.0, 0.0); 3]));
        assert!(zeros.values().iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn wrap_and_unwrap_conventions() {
        assert_eq!(wrap_phase(PI), PI);
        assert!((wrap_phase(-PI) - PI).abs() < 1e-15);
        assert!((wrap_phase(3.0 * PI) - PI).abs() < 1e-12);
        // exact +-pi steps are kept
        assert_eq!(unwrap_phases(&[0.0, PI, 0.0]), vec![0.0, PI, 0.0]);
        let u = unwrap_phases(&[3.0, -3.0]);
        assert!((u[1] - (2.0 * PI - 3.0)).abs() < 1e-12);
    }

    #[test]
    fn smoothing_recurrence() {
        let b = band(1);
        let s: Vec<_> = [0.0, 2.0]
            .iter()
            .map(|&v| CsiVector::new(vec![Complex64::new(v, 0.0)], b).unwrap())
            .collect();
        let out = smooth(&s, SmoothingConfig { alpha: 0.5 }).unwrap();
        assert_eq!(out[0].values()[0], Complex64::new(0.0, 0.0));
        assert_eq!(out[1].values()[0], Complex64::new(1.0, 0.0));
        assert!(SmoothingConfig::new(0.0).is_err());
        let bad = vec![s[0].clone(), CsiVector::new(vec![Complex64::new(0.0, 0.0); 2], band(2)).unwrap()];
        assert!(matches!(smooth(&bad, SmoothingConfig::default()), Err(Error::Dimension { .. })));
    }

    #[test]
    fn band_selection_resolution() {
        let wasp = BandDescriptor::wasp_5800();
        assert_eq!(BandSelection::new(&wasp, 0.0, 20.0).unwrap().len(), 51);
        assert_eq!(BandSelection::new(&wasp, 0.0, 5.0).unwrap().len(), 12);
        let full = BandSelection::new(&wasp, 0.0, 125.0).unwrap();
        assert_eq!((full.lo, full.hi), (0, 320));
        assert!(BandSelection::new(&wasp, 110.0, 20.0).is_err());
        assert!(BandSelection::new(&wasp, -1.0, 20.0).is_err());
        let ch = BandSelection::new(&wasp, 37.5, 20.0).unwrap();
        assert_eq!((ch.lo, ch.hi), (96, 147));
        let sliced = ch.sliced_band(&wasp);
        assert!((sliced.subcarrier_freq_mhz(0) - wasp.subcarrier_freq_mhz(96)).abs() < 1e-9);
    }

    #[test]
    fn full_slice_is_identity() {
        let x = csi((0..6).map(|k| Complex64::new(k as f64, 1.0)).collect());
        let y = slice_band(&x, &BandSelection::full(x.band())).unwrap();
        assert_eq!(x, y);
        let bad = BandSelection { start_mhz_offset: 0.0, width_mhz: 1.0, lo: 4, hi: 9 };
        assert!(slice_band(&x, &bad).is_err());
    }

    #[test]
    fn amplitude_examples() {
        let x = csi(vec![Complex64::new(3.0, 4.0), Complex64::new(0.0, 0.0)]);
        assert_eq!(amplitude(&x), vec![5.0, 0.0]);
    }

    fn complex_vec(max_len: usize) -> impl Strategy<Value = Vec<Complex64>> {
        prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 1..max_len)
            .prop_map(|v| v.into_iter().map(|(re, im)| Complex64::new(re, im)).collect())
    }

    proptest! {
        #[test]
        fn sanitise_preserves_amplitude_and_is_idempotent(v in complex_vec(64)) {
            let x = csi(v);
            let once = sanitise(&x);
            let twice = sanitise(&once);
            for ((a, b), c) in x.values().iter().zip(once.values()).zip(twice.values()) {
                prop_assert!((a.norm() - b.norm()).abs() <= 1e-12 * a.norm().max(1.0));
                prop_assert!((b - c).norm() <= 1e-12 * b.norm().max(1.0));
            }
        }

        #[test]
        fn sanitised_phase_has_zero_trend(v in complex_vec(64)) {
            let y = sanitise(&csi(v));
            let (slope, intercept) = phase_line(y.values());
            prop_assert!(slope.abs() < 1e-9);
            // the intercept is only defined modulo a full turn
            prop_assert!(wrap_phase(intercept).abs() < 1e-9);
        }

        #[test]
        fn slicing_commutes_with_amplitude(v in complex_vec(40), a in 0usize..40, w in 1usize..40) {
            let x = csi(v);
            let n = x.len();
            let lo = a % n;
            let hi = (lo + w).min(n);
            let sel = BandSelection { start_mhz_offset: 0.0, width_mhz: 1.0, lo, hi };
            let left = amplitude(&slice_band(&x, &sel).unwrap());
            let right = amplitude(&x)[lo..hi].to_vec();
            prop_assert_eq!(left, right);
        }

        #[test]
        fn smoothing_with_unit_alpha_is_identity(v in prop::collection::vec(complex_vec(2), 1..6)) {
            let b = band(v[0].len());
            let stream: Vec<_> = v.into_iter()
                .filter(|x| x.len() == b.num_subcarriers)
                .map(|x| CsiVector::new(x, b).unwrap())
                .collect();
            prop_assert_eq!(smooth(&stream, SmoothingConfig { alpha: 1.0 }).unwrap(), stream);
        }
    }
}
