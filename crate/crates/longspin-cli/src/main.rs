//! Command-line front end for the longspin simulation engine.
//!
//! Exit codes: 0 success, 1 comparison failure, 2 input/validation error.

use clap::{Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use longspin::config::{ExperimentConfig, NvSweepConfig};
use longspin::export::{report_to_json, spectrum_from_csv, write_atomic, ComparisonDocument};
use longspin::runner::{compare_aligned, run_and_export, run_nv_sweep_and_export};
use longspin::spectra::find_peaks;

/// Reproduction presets shipped as data files under presets/ in the repo.
const PRESETS: &[(&str, &str)] = &[
    (
        "fig2a-conventional",
        include_str!("../../../presets/fig2a-conventional.json"),
    ),
    (
        "fig2a-aeris",
        include_str!("../../../presets/fig2a-aeris.json"),
    ),
    (
        "fig2a-dracaeris",
        include_str!("../../../presets/fig2a-dracaeris.json"),
    ),
    (
        "fig2b-aeris",
        include_str!("../../../presets/fig2b-aeris.json"),
    ),
    (
        "fig2b-dracaeris",
        include_str!("../../../presets/fig2b-dracaeris.json"),
    ),
    ("fig3a", include_str!("../../../presets/fig3a.json")),
    ("fig3b", include_str!("../../../presets/fig3b.json")),
    ("fig3c", include_str!("../../../presets/fig3c.json")),
    (
        "fig4-ratio1",
        include_str!("../../../presets/fig4-ratio1.json"),
    ),
    (
        "fig4-ratio3",
        include_str!("../../../presets/fig4-ratio3.json"),
    ),
    (
        "fig4-ratio10",
        include_str!("../../../presets/fig4-ratio10.json"),
    ),
    (
        "fig5-xy8-1",
        include_str!("../../../presets/fig5-xy8-1.json"),
    ),
    (
        "fig5-xy8-2",
        include_str!("../../../presets/fig5-xy8-2.json"),
    ),
    (
        "fig5-xy8-4",
        include_str!("../../../presets/fig5-xy8-4.json"),
    ),
    (
        "fig5-rewind2-2",
        include_str!("../../../presets/fig5-rewind2-2.json"),
    ),
    (
        "fig5-rewind2-4",
        include_str!("../../../presets/fig5-rewind2-4.json"),
    ),
    (
        "fig5-rewind2-8",
        include_str!("../../../presets/fig5-rewind2-8.json"),
    ),
];

#[derive(Parser)]
#[command(
    name = "longspin",
    about = "Longitudinally detected NMR simulation engine",
    version
)]
struct Cli {
    /// Output directory (env: LONGSPIN_OUT_DIR); default current directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads (env: LONGSPIN_THREADS); default all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a protocol simulation and write the declared outputs.
    Simulate {
        #[arg(long, conflicts_with = "preset")]
        config: Option<PathBuf>,
        /// Built-in reproduction preset (see list-presets).
        #[arg(long)]
        preset: Option<String>,
    },
    /// Match peaks between two spectrum CSVs; exit 0 iff all peaks pair up.
    Compare {
        spectrum_a: PathBuf,
        spectrum_b: PathBuf,
        /// Frequency tolerance for peak matching, Hz.
        #[arg(long, default_value_t = 1.0)]
        tol_hz: f64,
        /// Peak-picking threshold relative to the spectrum maximum.
        #[arg(long, default_value_t = 0.05)]
        threshold: f64,
        /// Skip carrier (ppm-frame) alignment of the second spectrum.
        #[arg(long)]
        no_align: bool,
        /// Write the match report JSON here.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Sweep pi-pulse rotation errors for an NV decoupling sequence.
    NvSweep {
        #[arg(long, conflicts_with = "preset")]
        config: Option<PathBuf>,
        #[arg(long)]
        preset: Option<String>,
        /// Override the config's RNG seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// List built-in reproduction presets.
    ListPresets,
    /// Parse and validate a config without running it.
    Validate {
        #[arg(long, conflicts_with = "preset")]
        config: Option<PathBuf>,
        #[arg(long)]
        preset: Option<String>,
    },
}

fn preset_text(name: &str) -> Result<&'static str, String> {
    PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| *text)
        .ok_or_else(|| {
            format!(
                "unknown preset `{name}`; available: {}",
                PRESETS
                    .iter()
                    .map(|(n, _)| *n)
                    .collect::<Vec<_>>()
                    .join(", ")
            )
        })
}

enum LoadedConfig {
    Experiment(ExperimentConfig),
    NvSweep(NvSweepConfig),
}

/// Loads a config or preset; sweeps and experiments are distinguished by
/// their fields.
fn load_config(
    config: &Option<PathBuf>,
    preset: &Option<String>,
) -> Result<(LoadedConfig, PathBuf), String> {
    let (text, label, base_dir) = match (config, preset) {
        (Some(path), None) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
            let base = path
                .parent()
                .map(Path::to_path_buf)
                .unwrap_or_else(|| PathBuf::from("."));
            (text, path.display().to_string(), base)
        }
        (None, Some(name)) => (
            preset_text(name)?.to_string(),
            format!("preset {name}"),
            PathBuf::from("."),
        ),
        _ => return Err("exactly one of --config / --preset is required".into()),
    };
    // probe the document kind by its distinguishing fields
    let probe: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| format!("{label}: {e}"))?;
    let is_sweep = probe.get("family").is_some() || probe.get("sequence_file").is_some();
    let loaded = if is_sweep {
        LoadedConfig::NvSweep(NvSweepConfig::from_json(&text, &label).map_err(|e| e.to_string())?)
    } else {
        LoadedConfig::Experiment(
            ExperimentConfig::from_json(&text, &label).map_err(|e| e.to_string())?,
        )
    };
    Ok((loaded, base_dir))
}

fn out_dir(cli_out: &Option<PathBuf>) -> PathBuf {
    cli_out
        .clone()
        .or_else(|| std::env::var_os("LONGSPIN_OUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}

fn install_thread_pool(threads: &Option<usize>) {
    let n = threads.or_else(|| {
        std::env::var("LONGSPIN_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(n) = n {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
}

fn fail(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(2)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    install_thread_pool(&cli.threads);
    let out = out_dir(&cli.out);

    match cli.command {
        Command::Simulate { config, preset } => {
            let (loaded, base_dir) = match load_config(&config, &preset) {
                Ok(v) => v,
                Err(e) => return fail(e),
            };
            match loaded {
                LoadedConfig::Experiment(cfg) => match run_and_export(&cfg, &base_dir, &out) {
                    Ok(summary) => {
                        println!(
                            "simulated {} blocks in {:.2} s; {} peaks; wrote {} file(s) to {}",
                            summary.n_blocks,
                            summary.wall_seconds,
                            summary.peak_count,
                            summary.outputs_written.len(),
                            out.display()
                        );
                        ExitCode::SUCCESS
                    }
                    Err(e) => fail(e),
                },
                LoadedConfig::NvSweep(_) => {
                    fail("this config describes an NV sweep; use `longspin nv-sweep`")
                }
            }
        }
        Command::NvSweep {
            config,
            preset,
            seed,
        } => {
            let (loaded, base_dir) = match load_config(&config, &preset) {
                Ok(v) => v,
                Err(e) => return fail(e),
            };
            match loaded {
                LoadedConfig::NvSweep(cfg) => {
                    match run_nv_sweep_and_export(&cfg, &base_dir, &out, seed) {
                        Ok((artifacts, written)) => {
                            println!(
                                "swept {} over {} angles x {} field samples; wrote {} file(s) to {}",
                                artifacts.sequence_name,
                                artifacts.points.len(),
                                artifacts.params.n_field_samples,
                                written.len(),
                                out.display()
                            );
                            ExitCode::SUCCESS
                        }
                        Err(e) => fail(e),
                    }
                }
                LoadedConfig::Experiment(_) => {
                    fail("this config describes a simulation; use `longspin simulate`")
                }
            }
        }
        Command::Compare {
            spectrum_a,
            spectrum_b,
            tol_hz,
            threshold,
            no_align,
            report,
        } => {
            let load = |path: &PathBuf| -> Result<_, String> {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
                spectrum_from_csv(&text, &path.display().to_string()).map_err(|e| e.to_string())
            };
            let (a, b) = match (load(&spectrum_a), load(&spectrum_b)) {
                (Ok(a), Ok(b)) => (a, b),
                (Err(e), _) | (_, Err(e)) => return fail(e),
            };
            let (peaks_a, peaks_b) = match (find_peaks(&a, threshold), find_peaks(&b, threshold)) {
                (Ok(x), Ok(y)) => (x, y),
                (Err(e), _) | (_, Err(e)) => return fail(e),
            };
            let (match_report, factor) = compare_aligned(
                &peaks_a,
                a.ppm_reference_hz,
                &peaks_b,
                b.ppm_reference_hz,
                tol_hz,
                !no_align,
            );
            let doc = ComparisonDocument {
                spectrum_a: a.provenance.clone(),
                spectrum_b: b.provenance.clone(),
                axis_scale_applied_to_b: factor,
                report: match_report,
            };
            if let Some(path) = report {
                if let Err(e) = write_atomic(&out.join(path), &report_to_json(&doc)) {
                    return fail(e);
                }
            }
            println!(
                "matched {} pair(s), {} + {} unmatched, max |df| = {:.6} Hz (axis scale {:.6})",
                doc.report.matched.len(),
                doc.report.unmatched_a_hz.len(),
                doc.report.unmatched_b_hz.len(),
                doc.report.max_abs_delta_hz,
                doc.axis_scale_applied_to_b
            );
            if doc.report.all_matched() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Command::ListPresets => {
            for (name, _) in PRESETS {
                println!("{name}");
            }
            ExitCode::SUCCESS
        }
        Command::Validate { config, preset } => match load_config(&config, &preset) {
            Ok((LoadedConfig::Experiment(_), _)) => {
                println!("ok: valid simulation config");
                ExitCode::SUCCESS
            }
            Ok((LoadedConfig::NvSweep(_), _)) => {
                println!("ok: valid nv-sweep config");
                ExitCode::SUCCESS
            }
            Err(e) => fail(e),
        },
    }
}
