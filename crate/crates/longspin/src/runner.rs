//! Experiment orchestration: resolve a config, run the pipeline, write the
//! declared outputs.

use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::config::{ExperimentConfig, NvSweepConfig, OutputKind, ProtocolConfig};
use crate::export::{
    line_chart_svg, peaks_to_csv, report_to_json, spectrum_to_csv, sweep_to_csv, timeseries_to_csv,
    trajectory_to_csv, write_atomic, ChartSeries, ComparisonDocument,
};
use crate::hamiltonians::{rescale_field, FieldContext, MoleculeSpec};
use crate::nvsensor::{error_sweep_sequence, DDSequence, NVRunParams};
use crate::protocols::{run_protocol, trajectory, ProtocolKind, TimeSeries};
use crate::spectra::{
    compare_spectra, find_peaks, fourier_transform, MatchReport, PeakList, Spectrum,
};
use crate::{Error, Result};

/// Peak lists compared after aligning carrier frames.
///
/// When both spectra carry a carrier reference and the carriers differ, the
/// second list's frequencies are scaled by `carrier_a / carrier_b` before
/// matching - a ppm-frame comparison, which is how a spectrum taken at a
/// rescaled bias field lines up with one taken at the original field. The
/// applied factor is returned alongside the report.
pub fn compare_aligned(
    peaks_a: &PeakList,
    carrier_a: Option<f64>,
    peaks_b: &PeakList,
    carrier_b: Option<f64>,
    tolerance_hz: f64,
    align_carriers: bool,
) -> (MatchReport, f64) {
    let factor = match (carrier_a, carrier_b) {
        (Some(a), Some(b)) if align_carriers && a != b && b != 0.0 => a / b,
        _ => 1.0,
    };
    let scaled_b = peaks_b.scale_frequencies(factor);
    (compare_spectra(peaks_a, &scaled_b, tolerance_hz), factor)
}

/// Everything produced by one simulate run.
pub struct ExperimentArtifacts {
    pub molecule: MoleculeSpec,
    pub field: FieldContext,
    pub timeseries: TimeSeries,
    pub spectrum: Spectrum,
    pub peaks: PeakList,
    pub comparison: Option<ComparisonDocument>,
    pub reference: Option<(TimeSeries, Spectrum, PeakList)>,
}

/// One-line summary printed by the CLI.
pub struct RunSummary {
    pub n_blocks: usize,
    pub wall_seconds: f64,
    pub peak_count: usize,
    pub outputs_written: Vec<PathBuf>,
}

/// Runs the protocol + spectral pipeline described by `config`.
///
/// `base_dir` anchors molecule-file references.
pub fn run_experiment(config: &ExperimentConfig, base_dir: &Path) -> Result<ExperimentArtifacts> {
    let molecule = config.molecule.resolve(base_dir)?;
    let field = config.field_context()?;
    let params = config.protocol.to_params(molecule.t2_s)?;
    let timeseries = run_protocol(&molecule, &field, &params)?;
    let spectrum = fourier_transform(
        &timeseries,
        config.spectrum.axis,
        config.spectrum.zero_fill_factor,
    )?;
    let peaks = find_peaks(&spectrum, config.spectrum.peak_threshold)?;

    let mut comparison = None;
    let mut reference = None;
    if let Some(cmp) = &config.compare {
        let ref_protocol = cmp.protocol.clone().unwrap_or(ProtocolConfig {
            kind: ProtocolKind::Conventional,
            tau_s: params.tau_s,
            mu_s: 0.0,
            rabi_hz: 0.0,
            nutation_error: 0.0,
            n_blocks: None,
        });
        let scale = cmp
            .field_scale
            .unwrap_or(params.tau_s / (params.tau_s + params.mu_s));
        let ref_field = rescale_field(&molecule, &field, scale)?;
        let ref_params = ref_protocol.to_params(molecule.t2_s)?;
        let ref_ts = run_protocol(&molecule, &ref_field, &ref_params)?;
        let ref_spectrum = fourier_transform(
            &ref_ts,
            config.spectrum.axis,
            config.spectrum.zero_fill_factor,
        )?;
        let ref_peaks = find_peaks(&ref_spectrum, config.spectrum.peak_threshold)?;
        let (report, factor) = compare_aligned(
            &peaks,
            spectrum.ppm_reference_hz,
            &ref_peaks,
            ref_spectrum.ppm_reference_hz,
            cmp.tolerance_hz,
            cmp.align_carriers,
        );
        comparison = Some(ComparisonDocument {
            spectrum_a: spectrum.provenance.clone(),
            spectrum_b: ref_spectrum.provenance.clone(),
            axis_scale_applied_to_b: factor,
            report,
        });
        reference = Some((ref_ts, ref_spectrum, ref_peaks));
    }

    Ok(ExperimentArtifacts {
        molecule,
        field,
        timeseries,
        spectrum,
        peaks,
        comparison,
        reference,
    })
}

/// Runs an experiment and writes every declared output under `out_dir`.
pub fn run_and_export(
    config: &ExperimentConfig,
    base_dir: &Path,
    out_dir: &Path,
) -> Result<RunSummary> {
    let started = Instant::now();
    let artifacts = run_experiment(config, base_dir)?;
    let mut written = Vec::new();

    for out in &config.outputs {
        let path = out_dir.join(&out.path);
        match out.kind {
            OutputKind::Timeseries => {
                write_atomic(&path, &timeseries_to_csv(&artifacts.timeseries))?;
            }
            OutputKind::Spectrum => {
                write_atomic(&path, &spectrum_to_csv(&artifacts.spectrum))?;
            }
            OutputKind::Peaks => {
                write_atomic(
                    &path,
                    &peaks_to_csv(&artifacts.peaks, &artifacts.spectrum.provenance),
                )?;
            }
            OutputKind::MatchReport => {
                let doc = artifacts.comparison.as_ref().ok_or_else(|| Error::Config {
                    path: out.path.clone(),
                    reason: "match_report output requires a compare section".into(),
                })?;
                write_atomic(&path, &report_to_json(doc))?;
            }
            OutputKind::Trajectory => {
                let mut params = config.protocol.to_params(artifacts.molecule.t2_s)?;
                params.record_trajectory = true;
                let rec = trajectory(
                    &artifacts.molecule,
                    &artifacts.field,
                    &params,
                    out.samples_per_segment.unwrap_or(16),
                )?;
                write_atomic(
                    &path,
                    &trajectory_to_csv(&rec, &artifacts.spectrum.provenance),
                )?;
            }
            OutputKind::Svg => {
                let mut series = vec![ChartSeries {
                    label: "run",
                    points: artifacts
                        .spectrum
                        .freqs_hz
                        .iter()
                        .zip(&artifacts.spectrum.amplitudes)
                        .map(|(f, a)| (*f, a.norm()))
                        .collect(),
                }];
                if let Some((_, ref_spectrum, _)) = &artifacts.reference {
                    series.push(ChartSeries {
                        label: "reference",
                        points: ref_spectrum
                            .freqs_hz
                            .iter()
                            .zip(&ref_spectrum.amplitudes)
                            .map(|(f, a)| (*f, a.norm()))
                            .collect(),
                    });
                }
                let svg = line_chart_svg(
                    &artifacts.spectrum.provenance,
                    "frequency (Hz)",
                    "magnitude",
                    &series,
                );
                write_atomic(&path, &svg)?;
            }
        }
        written.push(path);
    }

    Ok(RunSummary {
        n_blocks: artifacts.timeseries.samples.len(),
        wall_seconds: started.elapsed().as_secs_f64(),
        peak_count: artifacts.peaks.len(),
        outputs_written: written,
    })
}

/// Sweep results plus provenance, ready for export.
pub struct NvSweepArtifacts {
    pub sequence_name: String,
    pub params: NVRunParams,
    pub points: Vec<crate::nvsensor::SweepPoint>,
}

/// Runs the pulse-error sweep described by `config`.
pub fn run_nv_sweep(
    config: &NvSweepConfig,
    base_dir: &Path,
    seed_override: Option<u64>,
) -> Result<NvSweepArtifacts> {
    let mut params = config.nv.to_params();
    if let Some(seed) = seed_override {
        params.rng_seed = seed;
    }
    let sequence = match (&config.family, &config.sequence_file) {
        (Some(family), None) => {
            family.build(config.n_cycles.unwrap_or(1), params.pulse_spacing_s())
        }
        (None, Some(file)) => {
            let path = base_dir.join(file);
            let text = std::fs::read_to_string(&path)
                .map_err(|e| Error::io(path.display().to_string(), e))?;
            DDSequence::from_json(&text)?
        }
        _ => {
            return Err(Error::InvalidParams(
                "sweep needs exactly one of family / sequence_file".into(),
            ))
        }
    };
    let points = error_sweep_sequence(&sequence, &params, &config.theta_grid_deg)?;
    Ok(NvSweepArtifacts {
        sequence_name: sequence.name.clone(),
        params,
        points,
    })
}

/// Runs a sweep and writes its outputs under `out_dir`.
pub fn run_nv_sweep_and_export(
    config: &NvSweepConfig,
    base_dir: &Path,
    out_dir: &Path,
    seed_override: Option<u64>,
) -> Result<(NvSweepArtifacts, Vec<PathBuf>)> {
    let artifacts = run_nv_sweep(config, base_dir, seed_override)?;
    let mut written = Vec::new();
    for out in &config.outputs {
        let path = out_dir.join(&out.path);
        match out.kind {
            OutputKind::Svg => {
                let svg = line_chart_svg(
                    &artifacts.sequence_name,
                    "pi rotation (deg)",
                    "normalized response",
                    &[ChartSeries {
                        label: &artifacts.sequence_name,
                        points: artifacts
                            .points
                            .iter()
                            .map(|p| (p.theta_deg, p.normalized_mz))
                            .collect(),
                    }],
                );
                write_atomic(&path, &svg)?;
            }
            _ => {
                let csv = sweep_to_csv(
                    &artifacts.points,
                    &artifacts.sequence_name,
                    artifacts.params.n_field_samples,
                    artifacts.params.rng_seed,
                );
                write_atomic(&path, &csv)?;
            }
        }
        written.push(path);
    }
    Ok((artifacts, written))
}
