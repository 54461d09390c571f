//! File exports: CSV with provenance headers, comparison reports, SVG plots.
//!
//! Every CSV starts with `# key = value` header lines carrying the run
//! snapshot, followed by one column-name row. Floats are printed with 17
//! significant digits so each file re-parses to bit-identical values.
//! Writes go through a temp file and rename, so readers never observe a
//! partially written artifact.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::nvsensor::SweepPoint;
use crate::protocols::{ProtocolKind, ProtocolParams, TimeSeries, TrajectoryRecord};
use crate::spectra::{AxisConvention, MatchReport, PeakList, Spectrum};
use crate::{Error, Result};

/// 17-significant-digit float formatting; round-trips exactly through parse.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes `contents` to `path` atomically (write temp, then rename).
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let display = path.display().to_string();
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(display.clone(), e))?;
        }
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp_path = std::path::PathBuf::from(tmp);
    std::fs::write(&tmp_path, contents).map_err(|e| Error::io(display.clone(), e))?;
    std::fs::rename(&tmp_path, path).map_err(|e| Error::io(display, e))?;
    Ok(())
}

fn parse_f64(raw: &str, path: &str, line: usize) -> Result<f64> {
    raw.trim().parse().map_err(|_| Error::Csv {
        path: path.into(),
        line,
        reason: format!("expected a float, got `{raw}`"),
    })
}

/// Split a CSV document into `# key = value` headers and data rows.
fn split_csv(text: &str) -> (BTreeMap<String, String>, Vec<(usize, &str)>) {
    let mut headers = BTreeMap::new();
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix('#') {
            if let Some((k, v)) = rest.split_once('=') {
                headers.insert(k.trim().to_string(), v.trim().to_string());
            }
            continue;
        }
        rows.push((line_no, line));
    }
    (headers, rows)
}

fn header_f64(headers: &BTreeMap<String, String>, key: &str, path: &str) -> Result<f64> {
    let raw = headers.get(key).ok_or_else(|| Error::Csv {
        path: path.into(),
        line: 0,
        reason: format!("missing header `{key}`"),
    })?;
    parse_f64(raw, path, 0)
}

fn header_str<'a>(headers: &'a BTreeMap<String, String>, key: &str, path: &str) -> Result<&'a str> {
    headers
        .get(key)
        .map(|s| s.as_str())
        .ok_or_else(|| Error::Csv {
            path: path.into(),
            line: 0,
            reason: format!("missing header `{key}`"),
        })
}

// ---------------------------------------------------------------------------
// time series

pub fn timeseries_to_csv(ts: &TimeSeries) -> String {
    let mut out = String::new();
    out.push_str("# longspin = timeseries/1\n");
    let _ = writeln!(out, "# molecule = {}", ts.molecule);
    let _ = writeln!(out, "# kind = {}", ts.kind);
    let _ = writeln!(out, "# tau_s = {}", fmt_f64(ts.params.tau_s));
    let _ = writeln!(out, "# mu_s = {}", fmt_f64(ts.params.mu_s));
    let _ = writeln!(out, "# rabi_hz = {}", fmt_f64(ts.params.rabi_hz));
    let _ = writeln!(
        out,
        "# nutation_error = {}",
        fmt_f64(ts.params.nutation_error)
    );
    let _ = writeln!(out, "# n_blocks = {}", ts.params.n_blocks);
    let _ = writeln!(out, "# t2_s = {}", fmt_f64(ts.t2_s));
    let _ = writeln!(out, "# b0_tesla = {}", fmt_f64(ts.b0_tesla));
    let _ = writeln!(out, "# carrier_hz = {}", fmt_f64(ts.carrier_hz));
    let raw = ts.raw_forward.is_some();
    if raw {
        out.push_str("block_index,t_free_s,t_total_s,re,im,s_forward,s_rewind\n");
    } else {
        out.push_str("block_index,t_free_s,t_total_s,re,im\n");
    }
    for (k, s) in ts.samples.iter().enumerate() {
        let t_free = k as f64 * ts.dwell_free_s;
        let t_total = k as f64 * ts.dwell_total_s;
        let _ = write!(
            out,
            "{k},{},{},{},{}",
            fmt_f64(t_free),
            fmt_f64(t_total),
            fmt_f64(s.re),
            fmt_f64(s.im)
        );
        if raw {
            let _ = write!(
                out,
                ",{},{}",
                fmt_f64(ts.raw_forward.as_ref().unwrap()[k]),
                fmt_f64(ts.raw_rewind.as_ref().unwrap()[k])
            );
        }
        out.push('\n');
    }
    out
}

pub fn timeseries_from_csv(text: &str, path: &str) -> Result<TimeSeries> {
    let (headers, rows) = split_csv(text);
    let kind = match header_str(&headers, "kind", path)? {
        "conventional" => ProtocolKind::Conventional,
        "aeris" => ProtocolKind::Aeris,
        "dracaeris" => ProtocolKind::Dracaeris,
        other => {
            return Err(Error::Csv {
                path: path.into(),
                line: 0,
                reason: format!("unknown protocol kind `{other}`"),
            })
        }
    };
    let tau_s = header_f64(&headers, "tau_s", path)?;
    let mu_s = header_f64(&headers, "mu_s", path)?;
    let params = ProtocolParams {
        kind,
        tau_s,
        mu_s,
        rabi_hz: header_f64(&headers, "rabi_hz", path)?,
        nutation_error: header_f64(&headers, "nutation_error", path)?,
        n_blocks: header_f64(&headers, "n_blocks", path)? as usize,
        record_trajectory: false,
    };

    let mut samples = Vec::new();
    let mut raw_forward = Vec::new();
    let mut raw_rewind = Vec::new();
    let mut data_rows = rows.iter();
    // first non-header row is the column header
    let _ = data_rows.next();
    for (line_no, row) in data_rows {
        let fields: Vec<&str> = row.split(',').collect();
        if fields.len() < 5 {
            return Err(Error::Csv {
                path: path.into(),
                line: *line_no,
                reason: format!("expected at least 5 columns, got {}", fields.len()),
            });
        }
        samples.push(C64::new(
            parse_f64(fields[3], path, *line_no)?,
            parse_f64(fields[4], path, *line_no)?,
        ));
        if fields.len() >= 7 {
            raw_forward.push(parse_f64(fields[5], path, *line_no)?);
            raw_rewind.push(parse_f64(fields[6], path, *line_no)?);
        }
    }
    let has_raw = !raw_forward.is_empty();
    Ok(TimeSeries {
        samples,
        dwell_free_s: tau_s,
        dwell_total_s: tau_s + mu_s,
        kind,
        params,
        molecule: header_str(&headers, "molecule", path)?.to_string(),
        t2_s: header_f64(&headers, "t2_s", path)?,
        b0_tesla: header_f64(&headers, "b0_tesla", path)?,
        carrier_hz: header_f64(&headers, "carrier_hz", path)?,
        raw_forward: has_raw.then_some(raw_forward),
        raw_rewind: has_raw.then_some(raw_rewind),
    })
}

// ---------------------------------------------------------------------------
// spectra

pub fn spectrum_to_csv(spec: &Spectrum) -> String {
    let mut out = String::new();
    out.push_str("# longspin = spectrum/1\n");
    let _ = writeln!(out, "# provenance = {}", spec.provenance);
    let _ = writeln!(out, "# axis = {}", spec.axis);
    let _ = writeln!(out, "# dwell_s = {}", fmt_f64(spec.dwell_s));
    let _ = writeln!(out, "# zero_fill = {}", spec.zero_fill_factor);
    if let Some(carrier) = spec.ppm_reference_hz {
        let _ = writeln!(out, "# ppm_reference_hz = {}", fmt_f64(carrier));
    }
    out.push_str("freq_hz,freq_ppm,re,im,magnitude\n");
    for (f, a) in spec.freqs_hz.iter().zip(&spec.amplitudes) {
        let ppm = spec
            .ppm_reference_hz
            .map(|c| fmt_f64(f / c * 1e6))
            .unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{ppm},{},{},{}",
            fmt_f64(*f),
            fmt_f64(a.re),
            fmt_f64(a.im),
            fmt_f64(a.norm())
        );
    }
    out
}

pub fn spectrum_from_csv(text: &str, path: &str) -> Result<Spectrum> {
    let (headers, rows) = split_csv(text);
    let axis = match header_str(&headers, "axis", path)? {
        "free_time" => AxisConvention::FreeTime,
        "total_time" => AxisConvention::TotalTime,
        other => {
            return Err(Error::Csv {
                path: path.into(),
                line: 0,
                reason: format!("unknown axis convention `{other}`"),
            })
        }
    };
    let mut freqs = Vec::new();
    let mut amps = Vec::new();
    let mut data_rows = rows.iter();
    let _ = data_rows.next(); // column header
    for (line_no, row) in data_rows {
        let fields: Vec<&str> = row.split(',').collect();
        if fields.len() < 5 {
            return Err(Error::Csv {
                path: path.into(),
                line: *line_no,
                reason: format!("expected 5 columns, got {}", fields.len()),
            });
        }
        freqs.push(parse_f64(fields[0], path, *line_no)?);
        amps.push(C64::new(
            parse_f64(fields[2], path, *line_no)?,
            parse_f64(fields[3], path, *line_no)?,
        ));
    }
    Ok(Spectrum {
        freqs_hz: freqs,
        amplitudes: amps,
        axis,
        dwell_s: header_f64(&headers, "dwell_s", path)?,
        zero_fill_factor: header_f64(&headers, "zero_fill", path)? as usize,
        ppm_reference_hz: headers
            .get("ppm_reference_hz")
            .map(|v| parse_f64(v, path, 0))
            .transpose()?,
        provenance: header_str(&headers, "provenance", path)?.to_string(),
    })
}

// ---------------------------------------------------------------------------
// peaks, reports, sweeps, trajectories

pub fn peaks_to_csv(peaks: &PeakList, provenance: &str) -> String {
    let mut out = String::new();
    out.push_str("# longspin = peaks/1\n");
    let _ = writeln!(out, "# provenance = {provenance}");
    out.push_str("freq_hz,freq_ppm,amplitude,fwhm_hz\n");
    for p in &peaks.peaks {
        let ppm = p.freq_ppm.map(fmt_f64).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{ppm},{},{}",
            fmt_f64(p.freq_hz),
            fmt_f64(p.amplitude),
            fmt_f64(p.fwhm_hz)
        );
    }
    out
}

/// Comparison artifact written next to match reports.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonDocument {
    pub spectrum_a: String,
    pub spectrum_b: String,
    /// Factor applied to spectrum B frequencies before matching (carrier
    /// alignment); 1.0 when both share a carrier.
    pub axis_scale_applied_to_b: f64,
    pub report: MatchReport,
}

pub fn report_to_json(doc: &ComparisonDocument) -> String {
    serde_json::to_string_pretty(doc).expect("report serializes")
}

pub fn sweep_to_csv(
    points: &[SweepPoint],
    sequence: &str,
    n_field_samples: usize,
    seed: u64,
) -> String {
    let mut out = String::new();
    out.push_str("# longspin = nv-sweep/1\n");
    let _ = writeln!(out, "# sequence = {sequence}");
    let _ = writeln!(out, "# n_field_samples = {n_field_samples}");
    let _ = writeln!(out, "# rng_seed = {seed}");
    out.push_str("theta_deg,mean_mz,stderr_mz,normalized_mz\n");
    for p in points {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            fmt_f64(p.theta_deg),
            fmt_f64(p.mean_mz),
            fmt_f64(p.stderr_mz),
            fmt_f64(p.normalized_mz)
        );
    }
    out
}

pub fn sweep_from_csv(text: &str, path: &str) -> Result<Vec<SweepPoint>> {
    let (_, rows) = split_csv(text);
    let mut points = Vec::new();
    let mut data_rows = rows.iter();
    let _ = data_rows.next();
    for (line_no, row) in data_rows {
        let fields: Vec<&str> = row.split(',').collect();
        if fields.len() != 4 {
            return Err(Error::Csv {
                path: path.into(),
                line: *line_no,
                reason: format!("expected 4 columns, got {}", fields.len()),
            });
        }
        points.push(SweepPoint {
            theta_deg: parse_f64(fields[0], path, *line_no)?,
            mean_mz: parse_f64(fields[1], path, *line_no)?,
            stderr_mz: parse_f64(fields[2], path, *line_no)?,
            normalized_mz: parse_f64(fields[3], path, *line_no)?,
        });
    }
    Ok(points)
}

pub fn trajectory_to_csv(rec: &TrajectoryRecord, provenance: &str) -> String {
    let mut out = String::new();
    out.push_str("# longspin = trajectory/1\n");
    let _ = writeln!(out, "# provenance = {provenance}");
    out.push_str("t_s,mx,my,mz\n");
    for i in 0..rec.time_s.len() {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            fmt_f64(rec.time_s[i]),
            fmt_f64(rec.mx[i]),
            fmt_f64(rec.my[i]),
            fmt_f64(rec.mz[i])
        );
    }
    out
}

// ---------------------------------------------------------------------------
// SVG line charts

pub struct ChartSeries<'a> {
    pub label: &'a str,
    pub points: Vec<(f64, f64)>,
}

const SVG_COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

/// Minimal SVG line chart: axes, tick labels, one polyline per series.
pub fn line_chart_svg(title: &str, x_label: &str, y_label: &str, series: &[ChartSeries]) -> String {
    let (w, h) = (800.0, 500.0);
    let (ml, mr, mt, mb) = (70.0, 20.0, 40.0, 50.0);
    let (pw, ph) = (w - ml - mr, h - mt - mb);

    let mut x_min = f64::INFINITY;
    let mut x_max = f64::NEG_INFINITY;
    let mut y_min = f64::INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    for s in series {
        for &(x, y) in &s.points {
            x_min = x_min.min(x);
            x_max = x_max.max(x);
            y_min = y_min.min(y);
            y_max = y_max.max(y);
        }
    }
    if !x_min.is_finite() {
        x_min = 0.0;
        x_max = 1.0;
        y_min = 0.0;
        y_max = 1.0;
    }
    if x_max == x_min {
        x_max = x_min + 1.0;
    }
    if y_max == y_min {
        y_max = y_min + 1.0;
    }
    let sx = |x: f64| ml + (x - x_min) / (x_max - x_min) * pw;
    let sy = |y: f64| mt + ph - (y - y_min) / (y_max - y_min) * ph;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="24" text-anchor="middle" font-family="sans-serif" font-size="16">{title}</text>"#,
        w / 2.0
    );
    // axes
    let _ = writeln!(
        svg,
        r#"<line x1="{ml}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#,
        mt + ph,
        ml + pw,
        mt + ph
    );
    let _ = writeln!(
        svg,
        r#"<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{}" stroke="black"/>"#,
        mt + ph
    );
    // ticks
    for k in 0..=5 {
        let fx = x_min + (x_max - x_min) * k as f64 / 5.0;
        let px = sx(fx);
        let _ = writeln!(
            svg,
            r#"<line x1="{px}" y1="{}" x2="{px}" y2="{}" stroke="black"/>"#,
            mt + ph,
            mt + ph + 5.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{px}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="11">{fx:.4}</text>"#,
            mt + ph + 18.0
        );
        let fy = y_min + (y_max - y_min) * k as f64 / 5.0;
        let py = sy(fy);
        let _ = writeln!(
            svg,
            r#"<line x1="{}" y1="{py}" x2="{ml}" y2="{py}" stroke="black"/>"#,
            ml - 5.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="end" font-family="sans-serif" font-size="11">{fy:.4}</text>"#,
            ml - 8.0,
            py + 4.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="13">{x_label}</text>"#,
        ml + pw / 2.0,
        h - 10.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{}" text-anchor="middle" font-family="sans-serif" font-size="13" transform="rotate(-90 16 {})">{y_label}</text>"#,
        mt + ph / 2.0,
        mt + ph / 2.0
    );
    for (i, s) in series.iter().enumerate() {
        let color = SVG_COLORS[i % SVG_COLORS.len()];
        let mut d = String::new();
        for &(x, y) in &s.points {
            let _ = write!(d, "{:.2},{:.2} ", sx(x), sy(y));
        }
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.2"/>"#,
            d.trim_end()
        );
        let ly = mt + 16.0 * (i as f64 + 1.0);
        let _ = writeln!(
            svg,
            r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#,
            ml + pw - 150.0,
            ml + pw - 120.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12">{}</text>"#,
            ml + pw - 112.0,
            ly + 4.0,
            s.label
        );
    }
    svg.push_str("</svg>\n");
    svg
}
