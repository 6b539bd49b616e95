//! Flat key=value run configuration: parsing, canonical rendering, and a
//! stable content hash for manifests.
//!
//! The format is line oriented. `#` starts a comment line, blank lines are
//! ignored, and every other line is `key = value`. Keys carry their units
//! (`pointing_dec_deg`, `df_min_hz`) so a config diff is self-describing.
//! Unknown or duplicate keys are errors: a typo must not silently fall back
//! to a default.

use std::collections::{BTreeMap, HashSet};

use sha2::{Digest, Sha256};

use crate::geometry::{ObservatoryConfig, SkyDirection};
use crate::secondlevel::FilterSet;
use crate::simulator::{ScenarioConfig, SourceKind, SourceSpec};
use crate::{Error, Result};

/// Settings for the analysis stage (histograms, sweeps, DOI search).
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisConfig {
    pub n_ra_bins: u32,
    /// Reference window for the background mean, hours of RA.
    pub window_lo_hr: f64,
    pub window_hi_hr: f64,
    /// DOI search range and grid step, hours of RA.
    pub doi_lo_hr: f64,
    pub doi_hi_hr: f64,
    pub doi_step_hr: f64,
    /// Track-count phase tolerance, radians.
    pub phase_tol_rad: f64,
    /// llsnr thresholds for the sweep table, strictly ascending.
    pub sweep_llsnr: Vec<f64>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            n_ra_bins: 3200,
            window_lo_hr: 5.0,
            window_hi_hr: 5.6,
            doi_lo_hr: 5.1,
            doi_hi_hr: 5.4,
            doi_step_hr: 0.00375,
            phase_tol_rad: 0.18,
            sweep_llsnr: vec![-20.0, -10.0, -5.0, -2.70],
        }
    }
}

impl AnalysisConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_ra_bins == 0 {
            return Err(Error::Config("analysis.n_ra_bins must be > 0".into()));
        }
        if !(self.window_lo_hr >= 0.0
            && self.window_lo_hr < self.window_hi_hr
            && self.window_hi_hr <= 24.0)
        {
            return Err(Error::Config(format!(
                "analysis window [{}, {}) hr must lie inside [0, 24]",
                self.window_lo_hr, self.window_hi_hr
            )));
        }
        if !(self.doi_lo_hr < self.doi_hi_hr) {
            return Err(Error::Config(format!(
                "analysis doi range [{}, {}] hr is empty",
                self.doi_lo_hr, self.doi_hi_hr
            )));
        }
        if !(self.doi_step_hr > 0.0) {
            return Err(Error::Config("analysis.doi_step_hr must be > 0".into()));
        }
        if !(self.phase_tol_rad > 0.0) {
            return Err(Error::Config("analysis.phase_tol_rad must be > 0".into()));
        }
        if self.sweep_llsnr.is_empty()
            || self.sweep_llsnr.windows(2).any(|w| !(w[0] < w[1]))
        {
            return Err(Error::Config(
                "analysis.sweep_llsnr must be a non-empty ascending list".into(),
            ));
        }
        Ok(())
    }
}

/// Everything one run needs, grouped by pipeline stage.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    pub observatory: ObservatoryConfig,
    pub scenario: ScenarioConfig,
    pub filters: FilterSet,
    pub analysis: AnalysisConfig,
}

/// Parse a config file. Unspecified keys keep their defaults.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    let mut sources: BTreeMap<u32, BTreeMap<String, String>> = BTreeMap::new();
    let mut seen: HashSet<String> = HashSet::new();
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!("line {lineno}: expected `key = value`, got `{line}`"))
        })?;
        let key = key.trim();
        let value = value.trim();
        if !seen.insert(key.to_string()) {
            return Err(Error::Config(format!(
                "line {lineno}: duplicate key `{key}`"
            )));
        }
        apply_key(&mut cfg, &mut sources, key, value)
            .map_err(|msg| Error::Config(format!("line {lineno}: {msg}")))?;
    }
    for (idx, fields) in sources {
        cfg.scenario.sources.push(
            build_source(idx, fields).map_err(Error::Config)?,
        );
    }
    cfg.observatory.validate()?;
    cfg.filters.validate()?;
    cfg.analysis.validate()?;
    Ok(cfg)
}

fn apply_key(
    cfg: &mut RunConfig,
    sources: &mut BTreeMap<u32, BTreeMap<String, String>>,
    key: &str,
    value: &str,
) -> std::result::Result<(), String> {
    if let Some(rest) = key.strip_prefix("source.") {
        let (idx, field) = rest
            .split_once('.')
            .ok_or_else(|| format!("key `{key}`: expected `source.<index>.<field>`"))?;
        let idx: u32 = idx
            .parse()
            .map_err(|_| format!("key `{key}`: `{idx}` is not a source index"))?;
        sources
            .entry(idx)
            .or_default()
            .insert(field.to_string(), value.to_string());
        return Ok(());
    }
    let obs = &mut cfg.observatory;
    let sc = &mut cfg.scenario;
    let f = &mut cfg.filters;
    let a = &mut cfg.analysis;
    match key {
        "observatory.longitude_east_deg" => obs.longitude_east_deg = f64v(key, value)?,
        "observatory.latitude_deg" => obs.latitude_deg = f64v(key, value)?,
        "observatory.baseline_wavelengths" => obs.baseline_wavelengths = f64v(key, value)?,
        "observatory.reference_freq_mhz" => obs.reference_freq_mhz = f64v(key, value)?,
        "observatory.pointing_dec_deg" => obs.pointing_dec_deg = f64v(key, value)?,
        "observatory.pointing_az_deg" => obs.pointing_az_deg = f64v(key, value)?,
        "observatory.element_fwhm_deg" => obs.element_fwhm_deg = f64v(key, value)?,
        "observatory.instrumental_delay_ns" => obs.instrumental_delay_ns = f64v(key, value)?,
        "scenario.mjd_start" => sc.mjd_start = f64v(key, value)?,
        "scenario.duration_days" => sc.duration_days = f64v(key, value)?,
        "scenario.seed" => {
            sc.seed = value
                .parse()
                .map_err(|_| format!("key `{key}`: expected an unsigned integer, got `{value}`"))?
        }
        "scenario.segments_mhz" => sc.segments_mhz = f64_list(key, value)?,
        "scenario.band_floor_db" => sc.band_floor_db = f64v(key, value)?,
        "filters.df_min_hz" => f.df_min_hz = f64v(key, value)?,
        "filters.df_max_hz" => f.df_max_hz = f64v(key, value)?,
        "filters.ddf_phase_window_rad" => f.ddf_phase_window_rad = f64v(key, value)?,
        "filters.pulse_phase_window_rad" => f.pulse_phase_window_rad = f64v(key, value)?,
        "filters.llsnr_pulse_threshold" => f.llsnr_pulse_threshold = f64v(key, value)?,
        "filters.llsnr_pair_threshold" => f.llsnr_pair_threshold = f64v(key, value)?,
        "filters.rfi_margin_segments" => f.rfi_margin_segments = u32v(key, value)?,
        "filters.rfi_population_limit" => f.rfi_population_limit = u32v(key, value)?,
        "filters.freq_ranges_mhz" => f.freq_ranges_mhz = range_list(key, value)?,
        "filters.detection_threshold_db" => f.detection_threshold_db = f64v(key, value)?,
        "analysis.n_ra_bins" => a.n_ra_bins = u32v(key, value)?,
        "analysis.window_lo_hr" => a.window_lo_hr = f64v(key, value)?,
        "analysis.window_hi_hr" => a.window_hi_hr = f64v(key, value)?,
        "analysis.doi_lo_hr" => a.doi_lo_hr = f64v(key, value)?,
        "analysis.doi_hi_hr" => a.doi_hi_hr = f64v(key, value)?,
        "analysis.doi_step_hr" => a.doi_step_hr = f64v(key, value)?,
        "analysis.phase_tol_rad" => a.phase_tol_rad = f64v(key, value)?,
        "analysis.sweep_llsnr" => a.sweep_llsnr = f64_list(key, value)?,
        _ => return Err(format!("unknown key `{key}`")),
    }
    Ok(())
}

fn f64v(key: &str, value: &str) -> std::result::Result<f64, String> {
    value
        .parse()
        .map_err(|_| format!("key `{key}`: expected a number, got `{value}`"))
}

fn u32v(key: &str, value: &str) -> std::result::Result<u32, String> {
    value
        .parse()
        .map_err(|_| format!("key `{key}`: expected an unsigned integer, got `{value}`"))
}

fn f64_list(key: &str, value: &str) -> std::result::Result<Vec<f64>, String> {
    value.split(',').map(|s| f64v(key, s.trim())).collect()
}

/// Comma-separated `lo:hi` pairs, e.g. `1398:1424,1426:1451`.
fn range_list(key: &str, value: &str) -> std::result::Result<Vec<(f64, f64)>, String> {
    value
        .split(',')
        .map(|s| {
            let (lo, hi) = s
                .trim()
                .split_once(':')
                .ok_or_else(|| format!("key `{key}`: range `{s}` is not `lo:hi`"))?;
            Ok((f64v(key, lo.trim())?, f64v(key, hi.trim())?))
        })
        .collect()
}

fn build_source(
    idx: u32,
    mut fields: BTreeMap<String, String>,
) -> std::result::Result<SourceSpec, String> {
    let prefix = format!("source.{idx}");
    let kind = fields
        .remove("kind")
        .ok_or_else(|| format!("source.{idx}: missing required field `kind`"))?;
    let mut take_f64 = |name: &str| -> std::result::Result<f64, String> {
        let v = fields
            .remove(name)
            .ok_or_else(|| format!("{prefix}: missing required field `{name}`"))?;
        v.parse()
            .map_err(|_| format!("key `{prefix}.{name}`: expected a number, got `{v}`"))
    };
    let kind = match kind.as_str() {
        "celestial_pulse_pair" => SourceKind::CelestialPulsePair {
            direction: SkyDirection {
                ra_hr: take_f64("ra_hr")?,
                dec_deg: take_f64("dec_deg")?,
            },
            snr_db: take_f64("snr_db")?,
            df_min_hz: take_f64("df_min_hz")?,
            df_max_hz: take_f64("df_max_hz")?,
            cadence_per_hr: take_f64("cadence_per_hr")?,
            active_lst_halfwidth_hr: match fields.remove("active_lst_halfwidth_hr") {
                Some(v) => Some(v.parse().map_err(|_| {
                    format!(
                        "key `source.{idx}.active_lst_halfwidth_hr`: expected a number, got `{v}`"
                    )
                })?),
                None => None,
            },
        },
        "terrestrial_rfi" => SourceKind::TerrestrialRfi {
            phase_rad: take_f64("phase_rad")?,
            freq_mhz: take_f64("freq_mhz")?,
            snr_db: take_f64("snr_db")?,
            cadence_per_hr: take_f64("cadence_per_hr")?,
            df_min_hz: take_f64("df_min_hz")?,
            df_max_hz: take_f64("df_max_hz")?,
            populous_bins: match fields.remove("populous_bins") {
                Some(v) => v.parse().map_err(|_| {
                    format!(
                        "key `source.{idx}.populous_bins`: expected an unsigned integer, got `{v}`"
                    )
                })?,
                None => 0,
            },
        },
        "natural_broadband" => SourceKind::NaturalBroadband {
            direction: SkyDirection {
                ra_hr: take_f64("ra_hr")?,
                dec_deg: take_f64("dec_deg")?,
            },
            flux_band_db: take_f64("flux_band_db")?,
        },
        other => {
            return Err(format!(
                "source.{idx}.kind: unknown kind `{other}` (expected celestial_pulse_pair, \
                 terrestrial_rfi, or natural_broadband)"
            ))
        }
    };
    if let Some(stray) = fields.keys().next() {
        return Err(format!("source.{idx}.{stray}: unknown field for this kind"));
    }
    Ok(SourceSpec { kind })
}

/// Render a config in canonical form: fixed key order, shortest-roundtrip
/// floats, sources in index order. `parse_config(render_config(c)) == c`.
pub fn render_config(cfg: &RunConfig) -> String {
    let mut s = String::new();
    let obs = &cfg.observatory;
    let sc = &cfg.scenario;
    let f = &cfg.filters;
    let a = &cfg.analysis;
    let kv = |s: &mut String, k: &str, v: String| {
        s.push_str(k);
        s.push_str(" = ");
        s.push_str(&v);
        s.push('\n');
    };
    kv(&mut s, "observatory.longitude_east_deg", fmtf(obs.longitude_east_deg));
    kv(&mut s, "observatory.latitude_deg", fmtf(obs.latitude_deg));
    kv(&mut s, "observatory.baseline_wavelengths", fmtf(obs.baseline_wavelengths));
    kv(&mut s, "observatory.reference_freq_mhz", fmtf(obs.reference_freq_mhz));
    kv(&mut s, "observatory.pointing_dec_deg", fmtf(obs.pointing_dec_deg));
    kv(&mut s, "observatory.pointing_az_deg", fmtf(obs.pointing_az_deg));
    kv(&mut s, "observatory.element_fwhm_deg", fmtf(obs.element_fwhm_deg));
    kv(&mut s, "observatory.instrumental_delay_ns", fmtf(obs.instrumental_delay_ns));
    kv(&mut s, "scenario.mjd_start", fmtf(sc.mjd_start));
    kv(&mut s, "scenario.duration_days", fmtf(sc.duration_days));
    kv(&mut s, "scenario.seed", sc.seed.to_string());
    kv(&mut s, "scenario.segments_mhz", join_f64(&sc.segments_mhz));
    kv(&mut s, "scenario.band_floor_db", fmtf(sc.band_floor_db));
    for (i, src) in sc.sources.iter().enumerate() {
        render_source(&mut s, i, src);
    }
    kv(&mut s, "filters.df_min_hz", fmtf(f.df_min_hz));
    kv(&mut s, "filters.df_max_hz", fmtf(f.df_max_hz));
    kv(&mut s, "filters.ddf_phase_window_rad", fmtf(f.ddf_phase_window_rad));
    kv(&mut s, "filters.pulse_phase_window_rad", fmtf(f.pulse_phase_window_rad));
    kv(&mut s, "filters.llsnr_pulse_threshold", fmtf(f.llsnr_pulse_threshold));
    kv(&mut s, "filters.llsnr_pair_threshold", fmtf(f.llsnr_pair_threshold));
    kv(&mut s, "filters.rfi_margin_segments", f.rfi_margin_segments.to_string());
    kv(&mut s, "filters.rfi_population_limit", f.rfi_population_limit.to_string());
    kv(
        &mut s,
        "filters.freq_ranges_mhz",
        f.freq_ranges_mhz
            .iter()
            .map(|(lo, hi)| format!("{}:{}", fmtf(*lo), fmtf(*hi)))
            .collect::<Vec<_>>()
            .join(","),
    );
    kv(&mut s, "filters.detection_threshold_db", fmtf(f.detection_threshold_db));
    kv(&mut s, "analysis.n_ra_bins", a.n_ra_bins.to_string());
    kv(&mut s, "analysis.window_lo_hr", fmtf(a.window_lo_hr));
    kv(&mut s, "analysis.window_hi_hr", fmtf(a.window_hi_hr));
    kv(&mut s, "analysis.doi_lo_hr", fmtf(a.doi_lo_hr));
    kv(&mut s, "analysis.doi_hi_hr", fmtf(a.doi_hi_hr));
    kv(&mut s, "analysis.doi_step_hr", fmtf(a.doi_step_hr));
    kv(&mut s, "analysis.phase_tol_rad", fmtf(a.phase_tol_rad));
    kv(&mut s, "analysis.sweep_llsnr", join_f64(&a.sweep_llsnr));
    s
}

fn render_source(s: &mut String, idx: usize, src: &SourceSpec) {
    use std::fmt::Write as _;
    let mut kv = |field: &str, v: String| {
        writeln!(s, "source.{idx}.{field} = {v}").expect("string write");
    };
    match &src.kind {
        SourceKind::CelestialPulsePair {
            direction,
            snr_db,
            df_min_hz,
            df_max_hz,
            cadence_per_hr,
            active_lst_halfwidth_hr,
        } => {
            kv("kind", "celestial_pulse_pair".into());
            kv("ra_hr", fmtf(direction.ra_hr));
            kv("dec_deg", fmtf(direction.dec_deg));
            kv("snr_db", fmtf(*snr_db));
            kv("df_min_hz", fmtf(*df_min_hz));
            kv("df_max_hz", fmtf(*df_max_hz));
            kv("cadence_per_hr", fmtf(*cadence_per_hr));
            if let Some(h) = active_lst_halfwidth_hr {
                kv("active_lst_halfwidth_hr", fmtf(*h));
            }
        }
        SourceKind::TerrestrialRfi {
            phase_rad,
            freq_mhz,
            snr_db,
            cadence_per_hr,
            df_min_hz,
            df_max_hz,
            populous_bins,
        } => {
            kv("kind", "terrestrial_rfi".into());
            kv("phase_rad", fmtf(*phase_rad));
            kv("freq_mhz", fmtf(*freq_mhz));
            kv("snr_db", fmtf(*snr_db));
            kv("cadence_per_hr", fmtf(*cadence_per_hr));
            kv("df_min_hz", fmtf(*df_min_hz));
            kv("df_max_hz", fmtf(*df_max_hz));
            kv("populous_bins", populous_bins.to_string());
        }
        SourceKind::NaturalBroadband {
            direction,
            flux_band_db,
        } => {
            kv("kind", "natural_broadband".into());
            kv("ra_hr", fmtf(direction.ra_hr));
            kv("dec_deg", fmtf(direction.dec_deg));
            kv("flux_band_db", fmtf(*flux_band_db));
        }
    }
}

fn fmtf(x: f64) -> String {
    format!("{x}")
}

fn join_f64(xs: &[f64]) -> String {
    xs.iter().map(|x| fmtf(*x)).collect::<Vec<_>>().join(",")
}

/// Content hash of the canonical rendering; the first 16 hex digits of a
/// SHA-256 digest, used to tie output files to the settings that made them.
pub fn config_hash(cfg: &RunConfig) -> String {
    let digest = Sha256::digest(render_config(cfg).as_bytes());
    let mut s = String::with_capacity(16);
    for b in &digest[..8] {
        use std::fmt::Write as _;
        write!(s, "{b:02x}").expect("string write");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn full_config() -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.scenario.duration_days = 30.0;
        cfg.scenario.seed = 99;
        cfg.scenario.segments_mhz = vec![1420.0, 1420.3, 1420.42, 1420.54, 1421.0];
        cfg.scenario.sources = vec![
            SourceSpec {
                kind: SourceKind::CelestialPulsePair {
                    direction: SkyDirection {
                        ra_hr: 5.25375,
                        dec_deg: -4.3,
                    },
                    snr_db: 12.0,
                    df_min_hz: 300_000.0,
                    df_max_hz: 540_000.0,
                    cadence_per_hr: 60.0,
                    active_lst_halfwidth_hr: Some(0.02),
                },
            },
            SourceSpec {
                kind: SourceKind::TerrestrialRfi {
                    phase_rad: 0.7,
                    freq_mhz: 1420.3,
                    snr_db: 25.0,
                    cadence_per_hr: 6.0,
                    df_min_hz: 100_000.0,
                    df_max_hz: 1_000_000.0,
                    populous_bins: 0,
                },
            },
            SourceSpec {
                kind: SourceKind::NaturalBroadband {
                    direction: SkyDirection {
                        ra_hr: 12.0,
                        dec_deg: -4.0,
                    },
                    flux_band_db: 0.4,
                },
            },
        ];
        cfg
    }

    #[test]
    fn default_and_full_configs_round_trip() {
        let cfg = RunConfig::default();
        assert_eq!(parse_config(&render_config(&cfg)).unwrap(), cfg);
        let cfg = full_config();
        assert_eq!(parse_config(&render_config(&cfg)).unwrap(), cfg);
    }

    #[test]
    fn comments_blanks_and_partial_overrides() {
        let text = "\n# a comment\n\nscenario.seed = 42\nfilters.df_max_hz = 600000\n";
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.scenario.seed, 42);
        assert_eq!(cfg.filters.df_max_hz, 600_000.0);
        assert_eq!(cfg.filters.df_min_hz, 300_000.0);
        assert_eq!(cfg.observatory, ObservatoryConfig::default());
    }

    #[test]
    fn errors_name_the_key_and_line() {
        let err = parse_config("observatory.fwhm = 5.3").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("observatory.fwhm") && msg.contains("line 1"), "{msg}");

        let err = parse_config("\nscenario.seed = soon").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("scenario.seed") && msg.contains("line 2"), "{msg}");

        let err = parse_config("scenario.seed = 1\nscenario.seed = 2").unwrap_err();
        assert!(err.to_string().contains("duplicate key `scenario.seed`"));

        let err = parse_config("just some words").unwrap_err();
        assert!(err.to_string().contains("expected `key = value`"));

        let err = parse_config("filters.freq_ranges_mhz = 1398-1424").unwrap_err();
        assert!(err.to_string().contains("is not `lo:hi`"), "{err}");
    }

    #[test]
    fn source_field_errors() {
        let err = parse_config("source.0.ra_hr = 5.25").unwrap_err();
        assert!(err.to_string().contains("missing required field `kind`"), "{err}");

        let err =
            parse_config("source.0.kind = celestial_pulse_pair\nsource.0.ra_hr = 5.25")
                .unwrap_err();
        assert!(err.to_string().contains("missing required field"), "{err}");

        let text = "source.0.kind = natural_broadband\nsource.0.ra_hr = 1\n\
                    source.0.dec_deg = 2\nsource.0.flux_band_db = 3\nsource.0.snr_db = 9";
        let err = parse_config(text).unwrap_err();
        assert!(err.to_string().contains("source.0.snr_db: unknown field"), "{err}");

        let err = parse_config("source.0.kind = pulsar").unwrap_err();
        assert!(err.to_string().contains("unknown kind `pulsar`"), "{err}");

        let err = parse_config("source.x.kind = terrestrial_rfi").unwrap_err();
        assert!(err.to_string().contains("not a source index"), "{err}");
    }

    #[test]
    fn hash_is_stable_and_value_sensitive() {
        let cfg = full_config();
        let h1 = config_hash(&cfg);
        let h2 = config_hash(&cfg);
        assert_eq!(h1, h2);
        assert_eq!(h1.len(), 16);
        assert!(h1.chars().all(|c| c.is_ascii_hexdigit()));
        let mut other = cfg.clone();
        other.scenario.seed += 1;
        assert_ne!(config_hash(&other), h1);
    }

    #[test]
    fn invalid_settings_are_rejected_after_parse() {
        let err = parse_config("observatory.element_fwhm_deg = -1").unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        let err = parse_config("analysis.window_lo_hr = 9\nanalysis.window_hi_hr = 8");
        assert!(err.is_err());
        let err = parse_config("analysis.sweep_llsnr = -2,-5").unwrap_err();
        assert!(err.to_string().contains("ascending"), "{err}");
    }
}
