//! Command-line drivers: scenario synthesis, pair matching, analysis, the
//! composed pipeline, and the ionosphere/geometry calculators.
//!
//! Every failure exits nonzero after printing a single line of the form
//! `error: <category>: <detail>` so callers can dispatch on the category
//! token without parsing prose.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::{config_hash, parse_config, RunConfig};
use crate::firstlevel::{process_epoch, Channelizer, PulseEvent};
use crate::geometry::{
    beam_gain, boresight_offset_deg, expected_ew_phase, fringe_period, instrumental_phase,
    mjd_to_lst, ra_bin, ra_bin_traversal_s, ra_bin_width_hr, SkyDirection,
};
use crate::io::{
    manifest_path_for, read_pairs, write_pairs, EventReader, EventWriter, RawBlockWriter,
    RunManifest,
};
use crate::ionosphere::{
    faraday_pair_phase_diff, faraday_phase, iono_delay_us, refraction_phase_bound,
    tec_rate_phase_drift, IonoParams,
};
use crate::secondlevel::{FilterSet, PairPipeline};
use crate::simulator::Simulation;
use crate::statistics::{doi_search, llsnr_sweep, ra_histogram, export_report, ReportInputs};
use crate::{Error, Result, T_INT_S};

#[derive(Parser, Debug)]
#[command(
    name = "fringepair",
    version,
    about = "Two-element east-west interferometer pulse-pair pipeline"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Synthesize a scenario into a first-level event file (or raw blocks).
    Simulate(SimulateArgs),
    /// Match an event file into pulse pairs and apply the filter chain.
    Pair(PairArgs),
    /// Histogram, llsnr sweep, DOI search, and report tables from pairs.
    Analyze(AnalyzeArgs),
    /// Simulate, pair, and analyze into one output directory.
    Run(RunArgs),
    /// Print ionospheric phase, delay, and refraction diagnostics.
    Iono(IonoArgs),
    /// Print sidereal time and fringe geometry for a given instant.
    Geom(GeomArgs),
}

#[derive(Args, Debug)]
pub struct CommonArgs {
    /// Run configuration file (`key = value` lines); defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Master seed override; replaces `scenario.seed` from the config.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Output path for the event file (or the capture with --raw).
    #[arg(long)]
    pub out: PathBuf,
    /// Write raw I/Q blocks instead of running first-level detection.
    #[arg(long)]
    pub raw: bool,
}

#[derive(Args, Debug)]
pub struct PairArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Input first-level event file.
    #[arg(long)]
    pub events: PathBuf,
    /// Output pair file.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Input pair file.
    #[arg(long)]
    pub pairs: PathBuf,
    /// Output report directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Output directory; receives events.csv, pairs.csv, and report/.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct IonoArgs {
    /// Line-of-sight geomagnetic field, microtesla.
    #[arg(long, default_value_t = 50.0)]
    pub b_field_ut: f64,
    /// Total electron content, electrons per square meter.
    #[arg(long, default_value_t = 1e18)]
    pub tec_m2: f64,
    /// TEC change rate, electrons per square meter per second.
    #[arg(long, default_value_t = 0.7e16)]
    pub tec_rate_m2_s: f64,
    /// Zenith refraction bend at 100 MHz, degrees.
    #[arg(long, default_value_t = 0.05)]
    pub refraction_100mhz_deg: f64,
    /// Observing frequency, MHz.
    #[arg(long, default_value_t = 1425.0)]
    pub f0_mhz: f64,
    /// Baseline for the refraction bound, wavelengths.
    #[arg(long, default_value_t = 33.0)]
    pub baseline_wavelengths: f64,
}

#[derive(Args, Debug)]
pub struct GeomArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Instant to evaluate, MJD (UTC).
    #[arg(long)]
    pub mjd: f64,
    /// Optional source right ascension, hours.
    #[arg(long)]
    pub ra_hr: Option<f64>,
    /// Source declination, degrees (defaults to the pointing declination).
    #[arg(long)]
    pub dec_deg: Option<f64>,
    /// RF frequency for phase evaluation, MHz (defaults to the reference).
    #[arg(long)]
    pub rf_mhz: Option<f64>,
}

/// Parse argv, dispatch, and map failures onto the one-line error contract.
pub fn run() -> i32 {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            // Display already leads with the stable category token.
            eprintln!("error: {e}");
            1
        }
    }
}

pub fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Simulate(a) => {
            let cfg = load_config(&a.common)?;
            cmd_simulate(&cfg, &a.out, a.raw)
        }
        Command::Pair(a) => {
            let cfg = load_config(&a.common)?;
            cmd_pair(&cfg, &a.events, &a.out)
        }
        Command::Analyze(a) => {
            let cfg = load_config(&a.common)?;
            cmd_analyze(&cfg, &a.pairs, &a.out)
        }
        Command::Run(a) => {
            let cfg = load_config(&a.common)?;
            cmd_run(&cfg, &a.out)
        }
        Command::Iono(a) => cmd_iono(&a),
        Command::Geom(a) => {
            let cfg = load_config(&a.common)?;
            cmd_geom(&cfg, &a)
        }
    }
}

fn load_config(common: &CommonArgs) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                Error::Io(std::io::Error::new(
                    e.kind(),
                    format!("{}: {e}", path.display()),
                ))
            })?;
            parse_config(&text)?
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.scenario.seed = seed;
    }
    Ok(cfg)
}

fn write_run_manifest(
    manifest_out: &Path,
    cfg: &RunConfig,
    inputs: Vec<String>,
    outputs: Vec<String>,
    mjd_range: (f64, f64),
) -> Result<()> {
    RunManifest {
        config_hash: config_hash(cfg),
        seed: cfg.scenario.seed,
        stage_versions: format!("fringepair {}", env!("CARGO_PKG_VERSION")),
        inputs,
        outputs,
        mjd_range,
    }
    .write(manifest_out)
}

/// One-line neutral echo of the active second-level settings.
pub fn filter_summary(fs: &FilterSet) -> String {
    let bands = fs
        .freq_ranges_mhz
        .iter()
        .map(|(lo, hi)| format!("{lo}:{hi}"))
        .collect::<Vec<_>>()
        .join(",");
    format!(
        "pair df = {:.1} kHz - {:.1} kHz | |ddfdphi| <= {} rad | |dphi| <= {:.4} rad | \
         llsnr pulse <= {} | llsnr pair <= {} | rfi margin {} segments | \
         rfi population limit {} | detect > {} dB | bands {} MHz",
        fs.df_min_hz / 1e3,
        fs.df_max_hz / 1e3,
        fs.ddf_phase_window_rad,
        fs.pulse_phase_window_rad,
        fs.llsnr_pulse_threshold,
        fs.llsnr_pair_threshold,
        fs.rfi_margin_segments,
        fs.rfi_population_limit,
        fs.detection_threshold_db,
        bands
    )
}

pub fn cmd_simulate(cfg: &RunConfig, out: &Path, raw: bool) -> Result<()> {
    let hash = config_hash(cfg);
    let sim = Simulation::new(cfg.scenario.clone(), cfg.observatory)?;
    let n = sim.n_epochs();
    let mjd_range = (sim.epoch_mjd(0), sim.epoch_mjd(n.saturating_sub(1)));
    if raw {
        let mut w = RawBlockWriter::create(out, &hash)?;
        let mut blocks = 0u64;
        for epoch in 0..n {
            for b in &sim.synthesize_epoch(epoch)?.blocks {
                w.write(b)?;
                blocks += 1;
            }
        }
        w.finish()?;
        println!(
            "simulate: {blocks} raw blocks over {n} epochs -> {}",
            out.display()
        );
    } else {
        let mut ch = Channelizer::new();
        let mut w = EventWriter::create(out, &hash)?;
        let mut buf: Vec<PulseEvent> = Vec::new();
        for epoch in 0..n {
            let eb = sim.synthesize_epoch(epoch)?;
            buf.clear();
            process_epoch(&mut ch, &eb, cfg.filters.detection_threshold_db, &mut buf)?;
            for e in &buf {
                w.write(e)?;
            }
        }
        let rows = w.finish()?;
        println!(
            "simulate: {rows} events over {n} epochs ({} injected) -> {}",
            sim.realized_events().len(),
            out.display()
        );
    }
    write_run_manifest(
        &manifest_path_for(out),
        cfg,
        vec!["scenario".into()],
        vec![out.display().to_string()],
        mjd_range,
    )
}

pub fn cmd_pair(cfg: &RunConfig, events_path: &Path, out: &Path) -> Result<()> {
    let reader = EventReader::open(events_path)?;
    let mut pipeline = PairPipeline::new(
        cfg.filters.clone(),
        cfg.observatory,
        cfg.analysis.n_ra_bins,
    )?;
    let mut batch: Vec<PulseEvent> = Vec::new();
    let mut mjd_range: Option<(f64, f64)> = None;
    for ev in reader {
        let ev = ev?;
        mjd_range = Some(match mjd_range {
            None => (ev.mjd, ev.mjd),
            Some((lo, hi)) => (lo.min(ev.mjd), hi.max(ev.mjd)),
        });
        if let Some(last) = batch.last() {
            if last.mjd.to_bits() != ev.mjd.to_bits() {
                pipeline.push_events(&batch)?;
                batch.clear();
            }
        }
        batch.push(ev);
    }
    if !batch.is_empty() {
        pipeline.push_events(&batch)?;
    }
    let events_seen = pipeline.events_seen();
    let (outcome, flags) = pipeline.finish()?;
    write_pairs(out, &outcome.accepted, &config_hash(cfg))?;
    write_run_manifest(
        &manifest_path_for(out),
        cfg,
        vec![events_path.display().to_string()],
        vec![out.display().to_string()],
        mjd_range.unwrap_or((0.0, 0.0)),
    )?;
    println!("pair settings: {}", filter_summary(&cfg.filters));
    let rejections = outcome
        .rejection_counts()
        .iter()
        .map(|(r, n)| format!("{} {n}", r.label()))
        .collect::<Vec<_>>()
        .join(" | ");
    println!(
        "pair: {events_seen} events -> {} candidates, {} accepted, {} rfi windows flagged -> {}",
        outcome.accepted.len() + outcome.rejected.len(),
        outcome.accepted.len(),
        flags.flags().len(),
        out.display()
    );
    println!("rejections: {rejections}");
    Ok(())
}

pub fn cmd_analyze(cfg: &RunConfig, pairs_path: &Path, out_dir: &Path) -> Result<()> {
    let (pairs, _) = read_pairs(pairs_path)?;
    let a = &cfg.analysis;
    let window = (a.window_lo_hr, a.window_hi_hr);
    let hist = ra_histogram(&pairs, a.n_ra_bins, window)?;
    let sweep = llsnr_sweep(&pairs, &a.sweep_llsnr, a.n_ra_bins, window)?;
    let doi = doi_search(
        &pairs,
        a.doi_lo_hr,
        a.doi_hi_hr,
        a.doi_step_hr,
        a.phase_tol_rad,
        &cfg.observatory,
        a.n_ra_bins,
    )?;
    let provenance = format!(
        "manifest={} seed={} {}",
        config_hash(cfg),
        cfg.scenario.seed,
        filter_summary(&cfg.filters)
    );
    let files = export_report(
        out_dir,
        &ReportInputs {
            pairs: &pairs,
            hist: &hist,
            sweep: &sweep,
            doi: Some(&doi),
            track_ra_hr: Some(doi.best_ra_hr),
            obs: &cfg.observatory,
            provenance: &provenance,
        },
    )?;
    let mjd_range = pairs.iter().fold(None, |acc: Option<(f64, f64)>, p| {
        Some(match acc {
            None => (p.mjd, p.mjd),
            Some((lo, hi)) => (lo.min(p.mjd), hi.max(p.mjd)),
        })
    });
    write_run_manifest(
        &out_dir.join("manifest.txt"),
        cfg,
        vec![pairs_path.display().to_string()],
        files.iter().map(|p| p.display().to_string()).collect(),
        mjd_range.unwrap_or((0.0, 0.0)),
    )?;
    match hist.z_scores() {
        Ok(zs) => {
            let (peak_bin, peak_z) = zs
                .iter()
                .enumerate()
                .max_by(|x, y| x.1.total_cmp(y.1))
                .map(|(b, z)| (b, *z))
                .unwrap_or((0, 0.0));
            println!(
                "analyze: {} pairs, window mean {:.4} per bin, peak z {:.2} at bin {} \
                 (RA {:.4} hr) -> {} tables in {}",
                pairs.len(),
                hist.mu,
                peak_z,
                peak_bin,
                hist.bin_center_hr(peak_bin),
                files.len(),
                out_dir.display()
            );
        }
        Err(_) => println!(
            "analyze: {} pairs, reference window empty; z-scores undefined -> {} tables in {}",
            pairs.len(),
            files.len(),
            out_dir.display()
        ),
    }
    println!(
        "doi: best RA {:.5} hr, track count {}, null mean {:.3}, critical {}, verdict {}",
        doi.best_ra_hr,
        doi.best_count,
        doi.null_mean,
        doi.null_critical,
        if doi.significant {
            "significant"
        } else {
            "consistent-with-null"
        }
    );
    Ok(())
}

pub fn cmd_run(cfg: &RunConfig, out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let events = out_dir.join("events.csv");
    let pairs = out_dir.join("pairs.csv");
    let report = out_dir.join("report");
    cmd_simulate(cfg, &events, false)?;
    cmd_pair(cfg, &events, &pairs)?;
    cmd_analyze(cfg, &pairs, &report)
}

pub fn cmd_iono(a: &IonoArgs) -> Result<()> {
    let p = IonoParams {
        b_field_t: a.b_field_ut * 1e-6,
        tec_m2: a.tec_m2,
        tec_rate_m2_s: a.tec_rate_m2_s,
        refraction_100mhz_deg: a.refraction_100mhz_deg,
    };
    let f0_ghz = a.f0_mhz / 1000.0;
    println!(
        "faraday rotation phase   = {:.6e} rad",
        faraday_phase(&p, f0_ghz)?
    );
    println!(
        "pair phase difference    = {:.6e} rad/MHz",
        faraday_pair_phase_diff(&p, f0_ghz)?
    );
    println!(
        "group delay              = {:.6e} us",
        iono_delay_us(&p, f0_ghz)?
    );
    println!(
        "phase drift per block    = {:.6e} rad",
        tec_rate_phase_drift(&p, f0_ghz, T_INT_S)?
    );
    println!(
        "refraction phase bound   = {:.6e} rad",
        refraction_phase_bound(&p, f0_ghz, a.baseline_wavelengths)?
    );
    Ok(())
}

pub fn cmd_geom(cfg: &RunConfig, a: &GeomArgs) -> Result<()> {
    let obs = &cfg.observatory;
    let n_bins = cfg.analysis.n_ra_bins;
    let lst = mjd_to_lst(a.mjd, obs.longitude_east_deg)?;
    let rf = a.rf_mhz.unwrap_or(obs.reference_freq_mhz);
    println!("lst                      = {lst:.10} hr");
    println!(
        "ra bin                   = {} of {n_bins} ({} hr wide, {:.1} s traversal)",
        ra_bin(lst, n_bins),
        ra_bin_width_hr(n_bins),
        ra_bin_traversal_s(n_bins)
    );
    println!(
        "fringe period            = {:.10} hr at dec {} deg",
        fringe_period(obs.baseline_at(rf), obs.pointing_dec_deg)?,
        obs.pointing_dec_deg
    );
    println!(
        "instrumental phase       = {:.10} rad at {rf} MHz",
        instrumental_phase(rf, obs.instrumental_delay_ns)
    );
    if let Some(ra_hr) = a.ra_hr {
        let dir = SkyDirection {
            ra_hr,
            dec_deg: a.dec_deg.unwrap_or(obs.pointing_dec_deg),
        };
        let offset = boresight_offset_deg(&dir, lst, obs);
        println!("boresight offset         = {offset:.6} deg");
        println!(
            "beam gain                = {:.6}",
            beam_gain(offset, obs.element_fwhm_deg)
        );
        match expected_ew_phase(&dir, lst, obs, rf) {
            Ok(phase) => println!("expected ew phase        = {phase:.10} rad"),
            Err(Error::OutOfBeam(_)) => {
                println!("expected ew phase        = undefined (outside usable beam)")
            }
            Err(e) => return Err(e),
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn tmpdir(tag: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!("cli-test-{tag}-{}", std::process::id()));
        let _ = fs::remove_dir_all(&dir);
        fs::create_dir_all(&dir).unwrap();
        dir
    }

    #[test]
    fn args_parse_into_subcommands() {
        let cli = Cli::try_parse_from([
            "fringepair",
            "simulate",
            "--config",
            "run.cfg",
            "--seed",
            "9",
            "--out",
            "events.csv",
            "--raw",
        ])
        .unwrap();
        match cli.command {
            Command::Simulate(a) => {
                assert_eq!(a.common.seed, Some(9));
                assert!(a.raw);
            }
            other => panic!("parsed {other:?}"),
        }
        assert!(Cli::try_parse_from(["fringepair", "simulate"]).is_err());
        assert!(Cli::try_parse_from(["fringepair", "iono"]).is_ok());
        assert!(Cli::try_parse_from(["fringepair", "geom", "--mjd", "60498.5"]).is_ok());
    }

    #[test]
    fn filter_summary_echoes_default_settings() {
        let s = filter_summary(&FilterSet::default());
        assert!(s.contains("pair df = 300.0 kHz - 540.0 kHz"), "{s}");
        assert!(s.contains("|ddfdphi| <= 0.18 rad"), "{s}");
        assert!(s.contains("llsnr pair <= -2.7"), "{s}");
        assert!(s.contains("rfi margin 500 segments"), "{s}");
    }

    #[test]
    fn tiny_pipeline_runs_end_to_end_and_is_deterministic() {
        let dir = tmpdir("pipeline");
        let mut cfg = RunConfig::default();
        // 40 s of data keeps this test fast.
        cfg.scenario.duration_days = 40.0 / 86400.0;
        cfg.scenario.seed = 4242;

        let out1 = dir.join("a");
        let out2 = dir.join("b");
        cmd_run(&cfg, &out1).unwrap();
        cmd_run(&cfg, &out2).unwrap();
        for name in ["events.csv", "pairs.csv"] {
            let a = fs::read(out1.join(name)).unwrap();
            let b = fs::read(out2.join(name)).unwrap();
            assert_eq!(a, b, "{name} differs between identical runs");
        }
        for name in [
            "phase_vs_ra.csv",
            "sigma_vs_ra.csv",
            "noise954_vs_ra.csv",
            "band50_vs_ra.csv",
            "mjd_freq_vs_ra.csv",
            "df_vs_ra.csv",
            "doi_profile.csv",
            "doi_summary.txt",
        ] {
            let a = fs::read(out1.join("report").join(name)).unwrap();
            let b = fs::read(out2.join("report").join(name)).unwrap();
            assert_eq!(a, b, "report/{name} differs between identical runs");
        }

        // A different seed must change the event stream.
        let mut other = cfg.clone();
        other.scenario.seed = 4243;
        let out3 = dir.join("c");
        cmd_run(&other, &out3).unwrap();
        assert_ne!(
            fs::read(out1.join("events.csv")).unwrap(),
            fs::read(out3.join("events.csv")).unwrap()
        );

        // Manifests reference the config hash and the data span.
        let manifest = fs::read_to_string(out1.join("events.csv.manifest")).unwrap();
        assert!(manifest.contains(&format!("config_hash = {}", config_hash(&cfg))));
        assert!(manifest.contains("seed = 4242"));
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn load_config_applies_seed_override() {
        let dir = tmpdir("seedover");
        let path = dir.join("run.cfg");
        fs::write(&path, "scenario.seed = 5\n").unwrap();
        let cfg = load_config(&CommonArgs {
            config: Some(path.clone()),
            seed: Some(77),
        })
        .unwrap();
        assert_eq!(cfg.scenario.seed, 77);
        let cfg = load_config(&CommonArgs {
            config: Some(path),
            seed: None,
        })
        .unwrap();
        assert_eq!(cfg.scenario.seed, 5);
        let err = load_config(&CommonArgs {
            config: Some(dir.join("missing.cfg")),
            seed: None,
        })
        .unwrap_err();
        assert_eq!(err.category(), "io-error");
        assert!(err.to_string().contains("missing.cfg"), "{err}");
        fs::remove_dir_all(&dir).unwrap();
    }
}
