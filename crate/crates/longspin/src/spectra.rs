//! Frequency-domain analysis of sampled protocol signals.
//!
//! The same time series can be read against two frequency axes: `free_time`
//! treats the dwell as `tau` (free precession only), `total_time` as
//! `tau + mu` (the full block). Peak positions on the total axis equal the
//! free-axis positions times `tau/(tau+mu)` by construction. A third view,
//! carrier alignment, compares spectra taken at different bias fields by
//! scaling one frequency axis by the ratio of rotating-frame carriers
//! (equivalently: comparing in ppm); that is the frame in which a driven-
//! protocol spectrum matches a conventional spectrum at a rescaled field.

use num_complex::Complex64 as C64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::protocols::TimeSeries;
use crate::{Error, Result};

/// Which dwell time labels the frequency axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AxisConvention {
    FreeTime,
    TotalTime,
}

impl std::fmt::Display for AxisConvention {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AxisConvention::FreeTime => "free_time",
            AxisConvention::TotalTime => "total_time",
        })
    }
}

/// Discrete spectrum of a protocol run.
#[derive(Debug, Clone)]
pub struct Spectrum {
    /// Uniformly spaced frequency axis in Hz (ascending).
    pub freqs_hz: Vec<f64>,
    pub amplitudes: Vec<C64>,
    pub axis: AxisConvention,
    /// Dwell used for this axis, seconds.
    pub dwell_s: f64,
    pub zero_fill_factor: usize,
    /// Hz of the 0 ppm carrier, when known.
    pub ppm_reference_hz: Option<f64>,
    /// Description of the run that produced the data.
    pub provenance: String,
}

impl Spectrum {
    /// Frequency bin spacing `1/(n_padded * dwell)`.
    pub fn bin_hz(&self) -> f64 {
        if self.freqs_hz.len() < 2 {
            return 0.0;
        }
        self.freqs_hz[1] - self.freqs_hz[0]
    }

    pub fn magnitudes(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a.norm()).collect()
    }

    /// Total spectral energy `sum |X_k|^2` (unitary normalization, so it
    /// equals the time-series energy when unpadded).
    pub fn energy(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }
}

/// Discrete Fourier transform of a protocol time series.
///
/// The dwell comes from the chosen axis convention. Real-valued signals
/// (aeris/dracaeris) produce conjugate-symmetric spectra, so only the
/// non-negative half axis is reported; complex signals report the full
/// axis in ascending frequency order. Amplitudes carry the unitary
/// `1/sqrt(n_padded)` normalization.
pub fn fourier_transform(
    ts: &TimeSeries,
    axis: AxisConvention,
    zero_fill_factor: usize,
) -> Result<Spectrum> {
    if ts.samples.is_empty() {
        return Err(Error::InvalidParams(
            "cannot transform an empty time series".into(),
        ));
    }
    if zero_fill_factor == 0 {
        return Err(Error::InvalidParams(
            "zero_fill_factor must be at least 1".into(),
        ));
    }
    let dwell = match axis {
        AxisConvention::FreeTime => ts.dwell_free_s,
        AxisConvention::TotalTime => ts.dwell_total_s,
    };
    let n = ts.samples.len();
    let n_padded = n * zero_fill_factor;

    let mut buf: Vec<C64> = Vec::with_capacity(n_padded);
    buf.extend_from_slice(&ts.samples);
    buf.resize(n_padded, C64::new(0.0, 0.0));
    FftPlanner::new()
        .plan_fft_forward(n_padded)
        .process(&mut buf);
    let norm = 1.0 / (n_padded as f64).sqrt();
    for v in buf.iter_mut() {
        *v *= norm;
    }

    let df = 1.0 / (n_padded as f64 * dwell);
    let real_input = ts.samples.iter().all(|s| s.im == 0.0);

    let (freqs_hz, amplitudes) = if real_input {
        // one-sided: bins 0 ..= n_padded/2
        let half = n_padded / 2;
        let freqs = (0..=half).map(|k| k as f64 * df).collect();
        let amps = buf[..=half].to_vec();
        (freqs, amps)
    } else {
        // full axis, ascending from -f_nyquist
        let mut freqs = Vec::with_capacity(n_padded);
        let mut amps = Vec::with_capacity(n_padded);
        let neg_start = n_padded.div_ceil(2);
        for k in neg_start..n_padded {
            freqs.push((k as f64 - n_padded as f64) * df);
            amps.push(buf[k]);
        }
        for (k, &v) in buf.iter().enumerate().take(neg_start) {
            freqs.push(k as f64 * df);
            amps.push(v);
        }
        (freqs, amps)
    };

    Ok(Spectrum {
        freqs_hz,
        amplitudes,
        axis,
        dwell_s: dwell,
        zero_fill_factor,
        ppm_reference_hz: Some(ts.carrier_hz),
        provenance: format!(
            "{} {} tau={:.6e}s mu={:.6e}s b0={}T",
            ts.molecule, ts.kind, ts.params.tau_s, ts.params.mu_s, ts.b0_tesla
        ),
    })
}

/// One located spectral line.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Peak {
    /// Parabolically interpolated position, Hz.
    pub freq_hz: f64,
    /// Position in ppm when the spectrum carries a carrier reference.
    pub freq_ppm: Option<f64>,
    /// Interpolated magnitude at the peak.
    pub amplitude: f64,
    /// Half-power (-3 dB) full width, Hz: the width where the magnitude
    /// crosses peak/sqrt(2), which for a damped sinusoid equals the
    /// absorption-mode FWHM 1/(pi T2).
    pub fwhm_hz: f64,
}

/// Peaks sorted by ascending frequency.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PeakList {
    pub peaks: Vec<Peak>,
}

impl PeakList {
    pub fn frequencies(&self) -> Vec<f64> {
        self.peaks.iter().map(|p| p.freq_hz).collect()
    }

    pub fn len(&self) -> usize {
        self.peaks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.peaks.is_empty()
    }

    /// Multiplies every peak frequency (and width) by `factor`; used to move
    /// a peak list between axis conventions or carrier frames.
    pub fn scale_frequencies(&self, factor: f64) -> PeakList {
        PeakList {
            peaks: self
                .peaks
                .iter()
                .map(|p| Peak {
                    freq_hz: p.freq_hz * factor,
                    fwhm_hz: p.fwhm_hz * factor,
                    ..*p
                })
                .collect(),
        }
    }
}

/// Local maxima of the magnitude spectrum above `rel_threshold * max`,
/// refined by 3-point parabolic interpolation; widths at half power.
pub fn find_peaks(spec: &Spectrum, rel_threshold: f64) -> Result<PeakList> {
    if !(rel_threshold > 0.0 && rel_threshold < 1.0) {
        return Err(Error::InvalidParams(format!(
            "rel_threshold must lie in (0, 1), got {rel_threshold}"
        )));
    }
    let mag = spec.magnitudes();
    let n = mag.len();
    let global_max = mag.iter().copied().fold(0.0f64, f64::max);
    if global_max == 0.0 || n < 3 {
        return Ok(PeakList::default());
    }
    let floor = rel_threshold * global_max;
    let df = spec.bin_hz();

    let mut peaks = Vec::new();
    // an edge bin can carry a real line (the DC bin of a one-sided spectrum
    // holds on-resonance signals); report it without interpolation, with a
    // symmetric width estimate
    if mag[0] >= floor && mag[0] > mag[1] {
        let half = mag[0] / std::f64::consts::SQRT_2;
        let mut right = spec.freqs_hz[0] + 0.5 * df;
        for j in 1..n {
            if mag[j] <= half {
                let (m0, m1) = (mag[j - 1], mag[j]);
                let t = if m0 > m1 {
                    (m0 - half) / (m0 - m1)
                } else {
                    0.0
                };
                right = spec.freqs_hz[j - 1] + t * df;
                break;
            }
            right = spec.freqs_hz[j];
        }
        peaks.push(Peak {
            freq_hz: spec.freqs_hz[0],
            freq_ppm: spec
                .ppm_reference_hz
                .map(|carrier| spec.freqs_hz[0] / carrier * 1e6),
            amplitude: mag[0],
            fwhm_hz: 2.0 * (right - spec.freqs_hz[0]),
        });
    }
    for i in 1..n - 1 {
        let m = mag[i];
        if m < floor || m < mag[i - 1] || m <= mag[i + 1] {
            continue;
        }
        // parabolic refinement on the magnitude
        let (a, b, c) = (mag[i - 1], m, mag[i + 1]);
        let denom = a - 2.0 * b + c;
        let delta = if denom.abs() > 1e-300 {
            (0.5 * (a - c) / denom).clamp(-0.5, 0.5)
        } else {
            0.0
        };
        let freq_hz = spec.freqs_hz[i] + delta * df;
        let amplitude = b - 0.25 * (a - c) * delta;
        let half = amplitude / std::f64::consts::SQRT_2;

        // walk outward to the half-power crossings
        let mut left = freq_hz - 0.5 * df;
        for j in (0..i).rev() {
            if mag[j] <= half {
                let (m0, m1) = (mag[j], mag[j + 1]);
                let t = if m1 > m0 {
                    (half - m0) / (m1 - m0)
                } else {
                    0.0
                };
                left = spec.freqs_hz[j] + t * df;
                break;
            }
            left = spec.freqs_hz[j];
        }
        let mut right = freq_hz + 0.5 * df;
        for j in i + 1..n {
            if mag[j] <= half {
                let (m0, m1) = (mag[j - 1], mag[j]);
                let t = if m0 > m1 {
                    (m0 - half) / (m0 - m1)
                } else {
                    0.0
                };
                right = spec.freqs_hz[j - 1] + t * df;
                break;
            }
            right = spec.freqs_hz[j];
        }
        peaks.push(Peak {
            freq_hz,
            freq_ppm: spec.ppm_reference_hz.map(|carrier| freq_hz / carrier * 1e6),
            amplitude,
            fwhm_hz: right - left,
        });
    }
    peaks.sort_by(|p, q| p.freq_hz.partial_cmp(&q.freq_hz).unwrap());
    Ok(PeakList { peaks })
}

/// One matched pair of peaks.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PeakMatch {
    pub freq_a_hz: f64,
    pub freq_b_hz: f64,
    pub delta_hz: f64,
    /// |amplitude_b| / |amplitude_a|.
    pub amplitude_ratio: f64,
    pub fwhm_a_hz: f64,
    pub fwhm_b_hz: f64,
}

/// Result of greedy nearest-frequency peak matching.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatchReport {
    pub tolerance_hz: f64,
    pub matched: Vec<PeakMatch>,
    pub unmatched_a_hz: Vec<f64>,
    pub unmatched_b_hz: Vec<f64>,
    pub max_abs_delta_hz: f64,
}

impl MatchReport {
    pub fn all_matched(&self) -> bool {
        self.unmatched_a_hz.is_empty() && self.unmatched_b_hz.is_empty()
    }
}

/// Greedily pairs the globally closest peaks within `freq_tol_hz`.
pub fn compare_spectra(a: &PeakList, b: &PeakList, freq_tol_hz: f64) -> MatchReport {
    let mut used_a = vec![false; a.peaks.len()];
    let mut used_b = vec![false; b.peaks.len()];
    let mut matched = Vec::new();

    loop {
        let mut best: Option<(usize, usize, f64)> = None;
        for (i, pa) in a.peaks.iter().enumerate() {
            if used_a[i] {
                continue;
            }
            for (j, pb) in b.peaks.iter().enumerate() {
                if used_b[j] {
                    continue;
                }
                let d = (pa.freq_hz - pb.freq_hz).abs();
                if d <= freq_tol_hz && best.map_or(true, |(_, _, bd)| d < bd) {
                    best = Some((i, j, d));
                }
            }
        }
        match best {
            Some((i, j, _)) => {
                used_a[i] = true;
                used_b[j] = true;
                let (pa, pb) = (&a.peaks[i], &b.peaks[j]);
                matched.push(PeakMatch {
                    freq_a_hz: pa.freq_hz,
                    freq_b_hz: pb.freq_hz,
                    delta_hz: pb.freq_hz - pa.freq_hz,
                    amplitude_ratio: if pa.amplitude != 0.0 {
                        pb.amplitude / pa.amplitude
                    } else {
                        f64::INFINITY
                    },
                    fwhm_a_hz: pa.fwhm_hz,
                    fwhm_b_hz: pb.fwhm_hz,
                });
            }
            None => break,
        }
    }
    matched.sort_by(|p, q| p.freq_a_hz.partial_cmp(&q.freq_a_hz).unwrap());
    let max_abs_delta_hz = matched
        .iter()
        .map(|m| m.delta_hz.abs())
        .fold(0.0f64, f64::max);
    MatchReport {
        tolerance_hz: freq_tol_hz,
        matched,
        unmatched_a_hz: a
            .peaks
            .iter()
            .zip(&used_a)
            .filter(|(_, &u)| !u)
            .map(|(p, _)| p.freq_hz)
            .collect(),
        unmatched_b_hz: b
            .peaks
            .iter()
            .zip(&used_b)
            .filter(|(_, &u)| !u)
            .map(|(p, _)| p.freq_hz)
            .collect(),
        max_abs_delta_hz,
    }
}
