//! Two-level NV ensemble running dynamical-decoupling AC magnetometry.
//!
//! The ensemble magnetization starts along +x (after an ideal pi/2 pulse) as
//! a 2x2 density matrix. Between pi pulses it accumulates a z-rotation phase
//! `2 pi gamma_nv Int (B_offset + B_ac(t)) dt`, integrated in closed form for
//! the sinusoidal test signal. Pi pulses are plain geometric rotations by a
//! configurable angle `theta` about x or y, so `theta != 180` models the
//! rotational pulse error directly. A final pi/2 about x maps the accumulated
//! phase into populations and the sensor reading is `<sigma_z>/2`.
//!
//! Two pulse programs are compared at identical sensing times:
//!
//! * `xy8(N)` - the XYXYYXYX phase pattern repeated N times at uniform
//!   spacing, pulses centered between signal zero crossings.
//! * `rewind2(2N)` - the sequence wrapping a forward+rewind nutation pair
//!   per cycle: 4 pi pulses per cycle at XY4 timing, all driven along x.
//!   The rewind starts at a nutation extremum, where the mirrored signal
//!   continues the same sinusoid, so phase accumulation proceeds as in
//!   CPMG; without the alternating X/Y phases the sequence loses XY-style
//!   error self-correction as cycles stack up.
//!
//! Bias-field dephasing is modeled by averaging over Gaussian-distributed
//! detunings of width `sigma = 1/(sqrt(2) pi T2*)`, drawn deterministically
//! from a seeded generator.

use num_complex::Complex64 as C64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};

use crate::{Error, Result};

/// Rotation axis of a microwave pi pulse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PulseAxis {
    X,
    Y,
}

/// One pi pulse of a decoupling program.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DDPulse {
    pub axis: PulseAxis,
    pub time_s: f64,
}

/// Ordered pulse program for the NV ensemble.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DDSequence {
    pub name: String,
    pub pulses: Vec<DDPulse>,
    pub total_time_s: f64,
}

impl DDSequence {
    /// XY8 phase pattern (X Y X Y Y X Y X) repeated `n_cycles` times; pulse
    /// `j` fires at `(j - 1/2) * spacing`.
    pub fn xy8(n_cycles: usize, spacing_s: f64) -> Self {
        const PATTERN: [PulseAxis; 8] = [
            PulseAxis::X,
            PulseAxis::Y,
            PulseAxis::X,
            PulseAxis::Y,
            PulseAxis::Y,
            PulseAxis::X,
            PulseAxis::Y,
            PulseAxis::X,
        ];
        let n_pulses = 8 * n_cycles;
        let pulses = (0..n_pulses)
            .map(|j| DDPulse {
                axis: PATTERN[j % 8],
                time_s: (j as f64 + 0.5) * spacing_s,
            })
            .collect();
        DDSequence {
            name: format!("xy8-{n_cycles}"),
            pulses,
            total_time_s: n_pulses as f64 * spacing_s,
        }
    }

    /// Forward/rewind acquisition cycle: 4 pi pulses at XY4 timing, all
    /// about x. `rewind2(2N)` spans the same sensing time as `xy8(N)`.
    pub fn rewind2(n_cycles: usize, spacing_s: f64) -> Self {
        let n_pulses = 4 * n_cycles;
        let pulses = (0..n_pulses)
            .map(|j| DDPulse {
                axis: PulseAxis::X,
                time_s: (j as f64 + 0.5) * spacing_s,
            })
            .collect();
        DDSequence {
            name: format!("rewind2-{n_cycles}"),
            pulses,
            total_time_s: n_pulses as f64 * spacing_s,
        }
    }

    pub fn n_pulses(&self) -> usize {
        self.pulses.len()
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |reason: String| Error::InvalidSequence {
            name: self.name.clone(),
            reason,
        };
        if self.pulses.is_empty() {
            return Err(fail("sequence has no pulses".into()));
        }
        if !(self.total_time_s > 0.0) {
            return Err(fail("total_time_s must be positive".into()));
        }
        let mut prev = 0.0;
        for (i, p) in self.pulses.iter().enumerate() {
            if !(p.time_s > prev) {
                return Err(fail(format!(
                    "pulse {i} at {} s is not strictly after {} s",
                    p.time_s, prev
                )));
            }
            if !(p.time_s < self.total_time_s) {
                return Err(fail(format!(
                    "pulse {i} at {} s is not inside (0, {})",
                    p.time_s, self.total_time_s
                )));
            }
            prev = p.time_s;
        }
        Ok(())
    }

    /// Parses a descriptor document (ordered phase/time list).
    pub fn from_json(text: &str) -> Result<Self> {
        let seq: DDSequence = serde_json::from_str(text).map_err(|e| Error::Config {
            path: "<sequence descriptor>".into(),
            reason: e.to_string(),
        })?;
        seq.validate()?;
        Ok(seq)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("sequence serializes")
    }
}

/// Families with built-in constructors for [`error_sweep`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SequenceFamily {
    Xy8,
    Rewind2,
}

impl SequenceFamily {
    pub fn build(self, n_cycles: usize, spacing_s: f64) -> DDSequence {
        match self {
            SequenceFamily::Xy8 => DDSequence::xy8(n_cycles, spacing_s),
            SequenceFamily::Rewind2 => DDSequence::rewind2(n_cycles, spacing_s),
        }
    }
}

/// Test-signal and ensemble parameters for an NV run.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct NVRunParams {
    /// AC signal amplitude, tesla.
    pub signal_amplitude_t: f64,
    /// AC signal frequency, Hz.
    pub signal_freq_hz: f64,
    /// Signal phase in radians; the default pi/2 puts zero crossings on the
    /// pulses and extrema at the segment centers, maximizing the zero-error
    /// response.
    pub signal_phase_rad: f64,
    /// NV gyromagnetic ratio, Hz/T.
    pub nv_gamma_hz_per_t: f64,
    /// Ensemble dephasing time, seconds.
    pub t2_star_s: f64,
    /// Number of Gaussian bias-field samples to average.
    pub n_field_samples: usize,
    /// Pi-pulse rotation angle in degrees (180 = perfect).
    pub pi_rotation_deg: f64,
    pub rng_seed: u64,
}

impl Default for NVRunParams {
    fn default() -> Self {
        NVRunParams {
            signal_amplitude_t: 50e-12,
            signal_freq_hz: 1e6,
            signal_phase_rad: PI / 2.0,
            nv_gamma_hz_per_t: 28.024e9,
            t2_star_s: 100e-9,
            n_field_samples: 100,
            pi_rotation_deg: 180.0,
            rng_seed: 7,
        }
    }
}

impl NVRunParams {
    pub fn validate(&self) -> Result<()> {
        if self.signal_amplitude_t < 0.0 {
            return Err(Error::InvalidParams(
                "signal_amplitude_t must be non-negative".into(),
            ));
        }
        if !(self.signal_freq_hz > 0.0) {
            return Err(Error::InvalidParams(
                "signal_freq_hz must be positive".into(),
            ));
        }
        if !(self.nv_gamma_hz_per_t > 0.0) {
            return Err(Error::InvalidParams(
                "nv_gamma_hz_per_t must be positive".into(),
            ));
        }
        if !(self.t2_star_s > 0.0) {
            return Err(Error::InvalidParams("t2_star_s must be positive".into()));
        }
        if self.n_field_samples == 0 {
            return Err(Error::InvalidParams(
                "n_field_samples must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// Pi-pulse spacing locked to half the signal period.
    pub fn pulse_spacing_s(&self) -> f64 {
        1.0 / (2.0 * self.signal_freq_hz)
    }

    /// Gaussian detuning width `1/(sqrt(2) pi T2*)` in Hz.
    pub fn dephasing_sigma_hz(&self) -> f64 {
        1.0 / (std::f64::consts::SQRT_2 * PI * self.t2_star_s)
    }
}

// 2x2 complex matrices in row-major [a b; c d] order.
type Mat2 = [C64; 4];

fn mat_mul(a: &Mat2, b: &Mat2) -> Mat2 {
    [
        a[0] * b[0] + a[1] * b[2],
        a[0] * b[1] + a[1] * b[3],
        a[2] * b[0] + a[3] * b[2],
        a[2] * b[1] + a[3] * b[3],
    ]
}

fn mat_adjoint(a: &Mat2) -> Mat2 {
    [a[0].conj(), a[2].conj(), a[1].conj(), a[3].conj()]
}

/// `rho -> U rho U^dagger`.
fn apply(rho: &Mat2, u: &Mat2) -> Mat2 {
    mat_mul(&mat_mul(u, rho), &mat_adjoint(u))
}

/// Bloch rotation by `angle` about x, y, or z: `U = cos(a/2) 1 - i sin(a/2) sigma`.
fn rotation(axis: char, angle: f64) -> Mat2 {
    let (c, s) = ((angle / 2.0).cos(), (angle / 2.0).sin());
    let zero = C64::new(0.0, 0.0);
    match axis {
        'x' => [
            C64::new(c, 0.0),
            C64::new(0.0, -s),
            C64::new(0.0, -s),
            C64::new(c, 0.0),
        ],
        'y' => [
            C64::new(c, 0.0),
            C64::new(-s, 0.0),
            C64::new(s, 0.0),
            C64::new(c, 0.0),
        ],
        'z' => [C64::new(c, -s), zero, zero, C64::new(c, s)],
        _ => unreachable!("axis is x, y, or z"),
    }
}

fn sigma_z_expectation(rho: &Mat2) -> f64 {
    (rho[0] - rho[3]).re
}

/// Phase accumulated over `[t1, t2]`: `2 pi gamma (B_off dt + Int B_ac dt)`,
/// with the sinusoid integrated in closed form.
fn segment_phase(params: &NVRunParams, b0_offset_t: f64, t1: f64, t2: f64) -> f64 {
    let w = TAU * params.signal_freq_hz;
    let ac_integral = -params.signal_amplitude_t / w
        * ((w * t2 + params.signal_phase_rad).cos() - (w * t1 + params.signal_phase_rad).cos());
    TAU * params.nv_gamma_hz_per_t * (b0_offset_t * (t2 - t1) + ac_integral)
}

/// One dynamical-decoupling run at a fixed bias-field offset; returns
/// `<M_z> = <sigma_z>/2` in [-1/2, 1/2].
pub fn run_dd(seq: &DDSequence, params: &NVRunParams, b0_offset_t: f64) -> Result<f64> {
    seq.validate()?;
    params.validate()?;

    // start along +x after the initial pi/2
    let half = C64::new(0.5, 0.0);
    let mut rho: Mat2 = [half, half, half, half];

    let theta = params.pi_rotation_deg.to_radians();
    let pulse_x = rotation('x', theta);
    let pulse_y = rotation('y', theta);

    let mut t_prev = 0.0;
    for p in &seq.pulses {
        let phi = segment_phase(params, b0_offset_t, t_prev, p.time_s);
        rho = apply(&rho, &rotation('z', phi));
        rho = apply(
            &rho,
            match p.axis {
                PulseAxis::X => &pulse_x,
                PulseAxis::Y => &pulse_y,
            },
        );
        t_prev = p.time_s;
    }
    let phi = segment_phase(params, b0_offset_t, t_prev, seq.total_time_s);
    rho = apply(&rho, &rotation('z', phi));

    // final pi/2 about x maps the accumulated (y) phase onto z
    rho = apply(&rho, &rotation('x', PI / 2.0));
    Ok(sigma_z_expectation(&rho) / 2.0)
}

/// Signal-locked response at one offset: half the difference between runs
/// with the test signal and with the test signal inverted.
///
/// With imperfect pi pulses a static detuning leaks into the readout as a
/// signal-independent background that can dwarf the picotesla-scale signal
/// term; the inverted-signal difference cancels that background exactly per
/// offset, which is what the differential fluorescence readout measures.
/// For perfect pulses the background is identically zero and this equals
/// [`run_dd`].
pub fn signal_response(seq: &DDSequence, params: &NVRunParams, b0_offset_t: f64) -> Result<f64> {
    let plus = run_dd(seq, params, b0_offset_t)?;
    let inverted = NVRunParams {
        signal_phase_rad: params.signal_phase_rad + PI,
        ..*params
    };
    let minus = run_dd(seq, &inverted, b0_offset_t)?;
    Ok((plus - minus) / 2.0)
}

/// Mean and standard error of [`signal_response`] over the Gaussian detuning
/// ensemble.
///
/// Offsets are drawn in frequency units from `Normal(0, 1/(sqrt(2) pi T2*))`
/// and converted to tesla through the NV gyromagnetic ratio. Identical seeds
/// give bit-identical results; samples are evaluated in draw order.
pub fn dephasing_stats(seq: &DDSequence, params: &NVRunParams) -> Result<(f64, f64)> {
    params.validate()?;
    let sigma_t = params.dephasing_sigma_hz() / params.nv_gamma_hz_per_t;
    let normal = Normal::new(0.0, sigma_t).map_err(|e| Error::InvalidParams(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.rng_seed);
    let offsets: Vec<f64> = (0..params.n_field_samples)
        .map(|_| normal.sample(&mut rng))
        .collect();

    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for &b in &offsets {
        let v = signal_response(seq, params, b)?;
        sum += v;
        sum_sq += v * v;
    }
    let n = params.n_field_samples as f64;
    let mean = sum / n;
    let variance = (sum_sq / n - mean * mean).max(0.0);
    let std_error = if params.n_field_samples > 1 {
        (variance / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok((mean, std_error))
}

/// Gaussian-averaged sensor response (the mean of [`dephasing_stats`]).
pub fn dephasing_average(seq: &DDSequence, params: &NVRunParams) -> Result<f64> {
    Ok(dephasing_stats(seq, params)?.0)
}

/// One point of a pulse-error sweep.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SweepPoint {
    pub theta_deg: f64,
    pub mean_mz: f64,
    pub stderr_mz: f64,
    /// Mean divided by the curve's maximum |mean|.
    pub normalized_mz: f64,
}

/// Dephasing-averaged response at each pi-rotation angle, normalized to the
/// curve maximum. Every (theta, sample) run is independent; the theta grid is
/// mapped in parallel and reduced in grid order, and each theta reuses the
/// same seeded offsets, so results are stable across worker counts.
pub fn error_sweep(
    family: SequenceFamily,
    n_cycles: usize,
    params: &NVRunParams,
    theta_grid_deg: &[f64],
) -> Result<Vec<SweepPoint>> {
    let seq = family.build(n_cycles, params.pulse_spacing_s());
    error_sweep_sequence(&seq, params, theta_grid_deg)
}

/// [`error_sweep`] over an arbitrary pulse program (descriptor files).
pub fn error_sweep_sequence(
    seq: &DDSequence,
    params: &NVRunParams,
    theta_grid_deg: &[f64],
) -> Result<Vec<SweepPoint>> {
    if theta_grid_deg.is_empty() {
        return Err(Error::InvalidParams("theta grid is empty".into()));
    }
    for &t in theta_grid_deg {
        if !(90.0..=270.0).contains(&t) {
            return Err(Error::InvalidParams(format!(
                "theta {t} outside [90, 270] degrees"
            )));
        }
    }
    let stats: Vec<(f64, f64)> = theta_grid_deg
        .par_iter()
        .map(|&theta| {
            let p = NVRunParams {
                pi_rotation_deg: theta,
                ..*params
            };
            dephasing_stats(seq, &p)
        })
        .collect::<Result<_>>()?;

    let max_abs = stats.iter().map(|(m, _)| m.abs()).fold(0.0f64, f64::max);
    Ok(theta_grid_deg
        .iter()
        .zip(stats)
        .map(|(&theta_deg, (mean_mz, stderr_mz))| SweepPoint {
            theta_deg,
            mean_mz,
            stderr_mz,
            normalized_mz: if max_abs > 0.0 {
                mean_mz / max_abs
            } else {
                0.0
            },
        })
        .collect())
}

/// Width of the theta interval where the normalized response stays at or
/// above `level`, found by linear interpolation of the crossings around the
/// grid's maximum point.
pub fn plateau_width_deg(points: &[SweepPoint], level: f64) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    let peak = points
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.normalized_mz.partial_cmp(&b.1.normalized_mz).unwrap())
        .map(|(i, _)| i)
        .unwrap();
    if points[peak].normalized_mz < level {
        return 0.0;
    }
    let cross = |a: &SweepPoint, b: &SweepPoint| -> f64 {
        // linear interpolation of the theta where normalized == level
        let run = b.theta_deg - a.theta_deg;
        let rise = b.normalized_mz - a.normalized_mz;
        if rise.abs() < 1e-300 {
            b.theta_deg
        } else {
            a.theta_deg + run * (level - a.normalized_mz) / rise
        }
    };
    let mut left = points[0].theta_deg;
    for i in (1..=peak).rev() {
        if points[i - 1].normalized_mz < level {
            left = cross(&points[i - 1], &points[i]);
            break;
        }
    }
    let mut right = points[points.len() - 1].theta_deg;
    for i in peak..points.len() - 1 {
        if points[i + 1].normalized_mz < level {
            right = cross(&points[i], &points[i + 1]);
            break;
        }
    }
    right - left
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> NVRunParams {
        NVRunParams::default()
    }

    #[test]
    fn sequence_constructors_have_expected_shape() {
        let spacing = 500e-9;
        let xy8 = DDSequence::xy8(2, spacing);
        assert_eq!(xy8.n_pulses(), 16);
        assert!(xy8.validate().is_ok());
        assert!((xy8.total_time_s - 16.0 * spacing).abs() < 1e-18);
        let axes: Vec<PulseAxis> = xy8.pulses[..8].iter().map(|p| p.axis).collect();
        use PulseAxis::*;
        assert_eq!(axes, vec![X, Y, X, Y, Y, X, Y, X]);

        let r2 = DDSequence::rewind2(4, spacing);
        assert_eq!(r2.n_pulses(), 16);
        assert!(r2.pulses.iter().all(|p| p.axis == X));
        // same sensing time as xy8 with half the cycle count
        assert!((r2.total_time_s - xy8.total_time_s).abs() < 1e-18);
    }

    #[test]
    fn invalid_sequences_are_rejected() {
        let mut seq = DDSequence::xy8(1, 500e-9);
        seq.pulses[3].time_s = seq.pulses[2].time_s;
        assert!(seq.validate().is_err());
        let mut seq = DDSequence::xy8(1, 500e-9);
        seq.pulses[7].time_s = seq.total_time_s + 1e-9;
        assert!(seq.validate().is_err());
    }

    #[test]
    fn descriptor_round_trips_through_json() {
        let seq = DDSequence::xy8(1, 500e-9);
        let parsed = DDSequence::from_json(&seq.to_json()).unwrap();
        assert_eq!(parsed.n_pulses(), seq.n_pulses());
        assert_eq!(parsed.total_time_s, seq.total_time_s);
    }

    #[test]
    fn pulse_and_segment_rotations_are_unitary() {
        for axis in ['x', 'y', 'z'] {
            for angle in [0.3, std::f64::consts::PI, 4.9, 123.456] {
                let u = rotation(axis, angle);
                let prod = mat_mul(&u, &mat_adjoint(&u));
                let id = [
                    C64::new(1.0, 0.0),
                    C64::new(0.0, 0.0),
                    C64::new(0.0, 0.0),
                    C64::new(1.0, 0.0),
                ];
                let dev = prod
                    .iter()
                    .zip(&id)
                    .map(|(a, b)| (a - b).norm())
                    .fold(0.0f64, f64::max);
                assert!(dev < 1e-12, "axis {axis} angle {angle}: {dev}");
            }
        }
    }

    #[test]
    fn zero_signal_zero_offset_gives_zero() {
        let seq = DDSequence::xy8(1, params().pulse_spacing_s());
        let p = NVRunParams {
            signal_amplitude_t: 0.0,
            ..params()
        };
        assert!(run_dd(&seq, &p, 0.0).unwrap().abs() < 1e-15);
    }

    #[test]
    fn perfect_pulses_match_closed_form_phase() {
        // square-toggled sinusoid with pulses at the zero crossings:
        // phi_tot = 2 pi gamma A (2/pi) T = 4 gamma A T
        let p = params();
        for n in [1usize, 2, 4] {
            let seq = DDSequence::xy8(n, p.pulse_spacing_s());
            let phi = 4.0 * p.nv_gamma_hz_per_t * p.signal_amplitude_t * seq.total_time_s;
            let expect = 0.5 * phi.sin();
            let got = run_dd(&seq, &p, 0.0).unwrap();
            assert!(
                (got - expect).abs() < 1e-12,
                "n={n}: got {got}, expected {expect}"
            );
        }
    }

    #[test]
    fn rewind2_equals_xy8_for_perfect_pulses() {
        let p = params();
        for n in [1usize, 2] {
            let xy8 = DDSequence::xy8(n, p.pulse_spacing_s());
            let r2 = DDSequence::rewind2(2 * n, p.pulse_spacing_s());
            let a = run_dd(&xy8, &p, 0.0).unwrap();
            let b = run_dd(&r2, &p, 0.0).unwrap();
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn perfect_pulses_refocus_static_offsets() {
        let p = NVRunParams {
            signal_amplitude_t: 0.0,
            ..params()
        };
        let seq = DDSequence::xy8(2, p.pulse_spacing_s());
        // detuning of a few hundred kHz: fully refocused at theta = 180
        for offset_hz in [1e5, 1e6_f64] {
            let b = offset_hz / p.nv_gamma_hz_per_t;
            let v = run_dd(&seq, &p, b).unwrap();
            assert!(v.abs() < 1e-10, "offset {offset_hz} Hz leaked {v}");
        }
    }

    #[test]
    fn responses_stay_within_physical_bounds() {
        let p = NVRunParams {
            signal_amplitude_t: 5e-9, // absurdly large to push the rotation
            pi_rotation_deg: 137.0,
            ..params()
        };
        let seq = DDSequence::rewind2(4, p.pulse_spacing_s());
        for offset_hz in [-3e6, 0.0, 1e6, 5e6] {
            let v = run_dd(&seq, &p, offset_hz / p.nv_gamma_hz_per_t).unwrap();
            assert!(v.abs() <= 0.5 + 1e-12);
        }
    }

    #[test]
    fn dephasing_sigma_matches_arithmetic() {
        let p = params();
        assert!((p.dephasing_sigma_hz() - 2.2508e6).abs() < 1e2);
    }

    #[test]
    fn dephasing_average_is_deterministic_and_contracting() {
        let p = params();
        let seq = DDSequence::xy8(1, p.pulse_spacing_s());
        let (m1, e1) = dephasing_stats(&seq, &p).unwrap();
        let (m2, e2) = dephasing_stats(&seq, &p).unwrap();
        assert_eq!(m1.to_bits(), m2.to_bits());
        assert_eq!(e1.to_bits(), e2.to_bits());
        // averaging over detunings cannot exceed the zero-offset response
        let ideal = run_dd(&seq, &p, 0.0).unwrap();
        assert!(m1.abs() <= ideal.abs() + 1e-15);
    }

    #[test]
    fn long_t2_star_recovers_zero_offset_run() {
        let p = NVRunParams {
            t2_star_s: 1e3, // sigma -> 0
            ..params()
        };
        let seq = DDSequence::xy8(1, p.pulse_spacing_s());
        let mean = dephasing_average(&seq, &p).unwrap();
        let ideal = run_dd(&seq, &p, 0.0).unwrap();
        assert!((mean - ideal).abs() < 1e-9 * ideal.abs().max(1e-30));
    }

    #[test]
    fn sweep_normalizes_to_curve_maximum_at_180() {
        let p = params();
        let grid: Vec<f64> = (0..=12).map(|k| 90.0 + 15.0 * k as f64).collect();
        let points = error_sweep(SequenceFamily::Xy8, 1, &p, &grid).unwrap();
        let at_180 = points.iter().find(|s| s.theta_deg == 180.0).unwrap();
        assert!((at_180.normalized_mz - 1.0).abs() < 1e-12);
        for s in &points {
            assert!(s.normalized_mz.abs() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn sweep_is_symmetric_about_180() {
        let p = params();
        let grid = [120.0, 150.0, 180.0, 210.0, 240.0];
        for family in [SequenceFamily::Xy8, SequenceFamily::Rewind2] {
            let pts = error_sweep(family, 2, &p, &grid).unwrap();
            for (lo, hi) in [(0usize, 4usize), (1, 3)] {
                let tol = 3.0 * (pts[lo].stderr_mz + pts[hi].stderr_mz) + 1e-9;
                assert!(
                    (pts[lo].mean_mz - pts[hi].mean_mz).abs() <= tol,
                    "{family:?}: {} vs {} (tol {tol})",
                    pts[lo].mean_mz,
                    pts[hi].mean_mz
                );
            }
        }
    }

    #[test]
    fn sweep_rejects_thetas_outside_range() {
        let p = params();
        assert!(error_sweep(SequenceFamily::Xy8, 1, &p, &[80.0]).is_err());
        assert!(error_sweep(SequenceFamily::Xy8, 1, &p, &[]).is_err());
    }

    #[test]
    fn plateau_width_interpolates_crossings() {
        let mk = |vals: &[(f64, f64)]| -> Vec<SweepPoint> {
            vals.iter()
                .map(|&(theta_deg, normalized_mz)| SweepPoint {
                    theta_deg,
                    mean_mz: normalized_mz,
                    stderr_mz: 0.0,
                    normalized_mz,
                })
                .collect()
        };
        // crossings at 135 and 225 exactly
        let pts = mk(&[
            (90.0, 0.2),
            (135.0, 0.8),
            (180.0, 1.0),
            (225.0, 0.8),
            (270.0, 0.2),
        ]);
        let w = plateau_width_deg(&pts, 0.8);
        assert!((w - 90.0).abs() < 1e-9);
        // everything below the level
        let none = mk(&[(90.0, 0.1), (180.0, 0.5), (270.0, 0.1)]);
        assert_eq!(plateau_width_deg(&none, 0.8), 0.0);
    }
}
