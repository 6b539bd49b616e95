//! Deterministic scenario synthesis for the two-element array.
//!
//! A scenario is a start epoch, a duration, a set of 954 Hz frequency
//! segments, and a list of sources. Synthesis produces complex baseband
//! blocks of 256 samples per segment and element, one epoch every
//! `T_INT_S` seconds, with unit-power complex AWGN plus whatever tones the
//! scheduled source events inject into that epoch.
//!
//! Everything is a pure function of the master seed. Noise, wideband power
//! ripple, and source event realization draw from independent counter-based
//! streams (see [`crate::rng`]), so any epoch can be synthesized in isolation
//! and in any order, and a run never needs to hold more than one epoch of
//! samples in memory.
//!
//! Canonical block order within an epoch is segment-major, East before West:
//! `[seg0 E, seg0 W, seg1 E, seg1 W, ...]` with segments in ascending center
//! frequency.

use std::collections::HashMap;
use std::f64::consts::{FRAC_1_SQRT_2, TAU};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};

use crate::geometry::{
    beam_gain, boresight_offset_deg, expected_ew_phase, instrumental_phase, mjd_to_lst, wrap_hr,
    wrap_rad, ObservatoryConfig, SkyDirection,
};
use crate::rng::{stream, Domain};
use crate::{Element, Error, Result, BAND_WIDTH_HZ, BIN_WIDTH_HZ, BLOCK_LEN, T_INT_S};

/// Fractional rms of total-band power over one integration:
/// `1 / sqrt(bandwidth * T_int)`.
pub const RADIOMETER_SIGMA: f64 = 2.730041209347295e-4;

/// Frequency segments must sit inside the digitized observing band, MHz.
pub const BAND_MIN_MHZ: f64 = 1398.0;
pub const BAND_MAX_MHZ: f64 = 1451.0;

/// One 256-sample complex baseband block from one element and segment.
#[derive(Debug, Clone, PartialEq)]
pub struct IqBlock {
    pub element: Element,
    /// Epoch start time.
    pub mjd: f64,
    pub segment_index: u32,
    pub segment_center_mhz: f64,
    /// Exactly `BLOCK_LEN` samples at 954 Hz.
    pub samples: Vec<Complex64>,
}

impl IqBlock {
    /// RF frequency of DFT bin `bin` in this block's segment, Hz.
    pub fn bin_freq_hz(&self, bin: u32) -> f64 {
        bin_freq_hz(self.segment_center_mhz, bin)
    }
}

/// RF frequency of DFT bin `bin` for a segment centered at
/// `segment_center_mhz`, Hz. Bin 128 is the segment center.
pub fn bin_freq_hz(segment_center_mhz: f64, bin: u32) -> f64 {
    segment_center_mhz * 1e6 + (bin as f64 - (BLOCK_LEN / 2) as f64) * BIN_WIDTH_HZ
}

/// All blocks of one epoch plus the per-element 50 MHz band power readings.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochBlocks {
    pub epoch: u64,
    pub mjd: f64,
    /// Indexed by `Element::index()`.
    pub band50_db: [f64; 2],
    pub blocks: Vec<IqBlock>,
}

/// What kind of emitter a scenario source is.
#[derive(Debug, Clone, PartialEq)]
pub enum SourceKind {
    /// A sky-fixed emitter of simultaneous tone pairs. Each event lights the
    /// same bin in two segments whose center spacing falls inside
    /// `[df_min_hz, df_max_hz]`, with the east/west phase difference set by
    /// the fringe geometry at each tone's own frequency.
    CelestialPulsePair {
        direction: SkyDirection,
        /// On-axis per-tone linear SNR in dB; beam attenuation applies on top.
        snr_db: f64,
        df_min_hz: f64,
        df_max_hz: f64,
        cadence_per_hr: f64,
        /// When set, the source only emits while `|lst - ra|` is within this
        /// many hours, letting long runs concentrate events near transit.
        active_lst_halfwidth_hr: Option<f64>,
    },
    /// A ground-fixed emitter. Its east/west phase difference is the fixed
    /// `phase_rad` plus the instrumental term, independent of LST, so its
    /// pair phases stay flat while the sky rotates. With a nonzero `df`
    /// range it emits tone pairs anchored at `freq_mhz`; with
    /// `populous_bins > 0` each event lights that many distinct bins at
    /// once, which is what the population-based excision keys on.
    TerrestrialRfi {
        phase_rad: f64,
        /// Must equal one of the scenario segment centers.
        freq_mhz: f64,
        snr_db: f64,
        cadence_per_hr: f64,
        df_min_hz: f64,
        df_max_hz: f64,
        populous_bins: u32,
    },
    /// A sky-fixed broadband emitter that raises total-band power as it
    /// drifts through the beam but injects no tones.
    NaturalBroadband {
        direction: SkyDirection,
        /// Band power excess at beam center, dB above the noise floor.
        flux_band_db: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceSpec {
    pub kind: SourceKind,
}

/// Full description of a synthetic observing run.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub mjd_start: f64,
    pub duration_days: f64,
    pub seed: u64,
    /// Segment center frequencies, MHz, strictly ascending.
    pub segments_mhz: Vec<f64>,
    /// Quiescent 50 MHz band power, dB (arbitrary reference).
    pub band_floor_db: f64,
    pub sources: Vec<SourceSpec>,
}

impl Default for ScenarioConfig {
    /// One synthetic day of pure receiver noise in a single segment.
    fn default() -> Self {
        ScenarioConfig {
            mjd_start: 60498.0,
            duration_days: 1.0,
            seed: 1,
            segments_mhz: vec![1420.0],
            band_floor_db: 4.0,
            sources: Vec::new(),
        }
    }
}

impl ScenarioConfig {
    pub fn n_epochs(&self) -> u64 {
        (self.duration_days * 86400.0 / T_INT_S).floor() as u64
    }

    pub fn epoch_mjd(&self, epoch: u64) -> f64 {
        self.mjd_start + epoch as f64 * T_INT_S / 86400.0
    }
}

/// One tone scheduled into a specific epoch, segment, and bin.
#[derive(Debug, Clone, PartialEq)]
pub struct Tone {
    pub segment: u32,
    pub bin: u32,
    pub amp: f64,
    pub phase_east: f64,
    pub phase_west: f64,
    pub source: u32,
}

/// Bookkeeping record of one realized source event, for diagnostics and
/// recovery accounting. `df_hz` is zero for single-tone events.
#[derive(Debug, Clone, PartialEq)]
pub struct RealizedEvent {
    pub source: u32,
    pub epoch: u64,
    pub mjd: f64,
    pub lst_hr: f64,
    pub segments: Vec<u32>,
    pub bin: u32,
    pub effective_snr_db: f64,
    pub df_hz: f64,
}

/// A validated scenario with its event schedule realized, ready to
/// synthesize any epoch on demand.
pub struct Simulation {
    cfg: ScenarioConfig,
    obs: ObservatoryConfig,
    n_epochs: u64,
    injections: HashMap<u64, Vec<Tone>>,
    realized: Vec<RealizedEvent>,
    /// `(direction, linear band power excess at beam center)` per broadband
    /// source.
    broadband: Vec<(SkyDirection, f64)>,
}

impl Simulation {
    pub fn new(cfg: ScenarioConfig, obs: ObservatoryConfig) -> Result<Simulation> {
        obs.validate()?;
        validate_scenario(&cfg)?;
        // Both endpoints must convert, so every epoch inside converts too.
        mjd_to_lst(cfg.mjd_start, obs.longitude_east_deg)?;
        mjd_to_lst(
            cfg.mjd_start + cfg.duration_days.max(0.0),
            obs.longitude_east_deg,
        )?;

        let n_epochs = cfg.n_epochs();
        let mut injections: HashMap<u64, Vec<Tone>> = HashMap::new();
        let mut realized = Vec::new();
        let mut broadband = Vec::new();

        for (idx, src) in cfg.sources.iter().enumerate() {
            let idx = idx as u32;
            match &src.kind {
                SourceKind::CelestialPulsePair {
                    direction,
                    snr_db,
                    df_min_hz,
                    df_max_hz,
                    cadence_per_hr,
                    active_lst_halfwidth_hr,
                } => schedule_celestial(
                    &cfg,
                    &obs,
                    idx,
                    direction,
                    *snr_db,
                    *df_min_hz,
                    *df_max_hz,
                    *cadence_per_hr,
                    *active_lst_halfwidth_hr,
                    &mut injections,
                    &mut realized,
                )?,
                SourceKind::TerrestrialRfi {
                    phase_rad,
                    freq_mhz,
                    snr_db,
                    cadence_per_hr,
                    df_min_hz,
                    df_max_hz,
                    populous_bins,
                } => schedule_terrestrial(
                    &cfg,
                    &obs,
                    idx,
                    *phase_rad,
                    *freq_mhz,
                    *snr_db,
                    *cadence_per_hr,
                    *df_min_hz,
                    *df_max_hz,
                    *populous_bins,
                    &mut injections,
                    &mut realized,
                )?,
                SourceKind::NaturalBroadband {
                    direction,
                    flux_band_db,
                } => {
                    broadband.push((*direction, 10f64.powf(flux_band_db / 10.0) - 1.0));
                }
            }
        }

        realized.sort_by_key(|a| (a.epoch, a.source));
        Ok(Simulation {
            cfg,
            obs,
            n_epochs,
            injections,
            realized,
            broadband,
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    pub fn observatory(&self) -> &ObservatoryConfig {
        &self.obs
    }

    pub fn n_epochs(&self) -> u64 {
        self.n_epochs
    }

    pub fn epoch_mjd(&self, epoch: u64) -> f64 {
        self.cfg.epoch_mjd(epoch)
    }

    /// All realized source events, epoch-ordered.
    pub fn realized_events(&self) -> &[RealizedEvent] {
        &self.realized
    }

    /// Tones scheduled for one epoch, if any.
    pub fn injections_at(&self, epoch: u64) -> &[Tone] {
        self.injections.get(&epoch).map_or(&[], Vec::as_slice)
    }

    /// Synthesize every block of one epoch.
    pub fn synthesize_epoch(&self, epoch: u64) -> Result<EpochBlocks> {
        if epoch >= self.n_epochs {
            return Err(Error::Precondition(format!(
                "epoch {epoch} out of range (run has {} epochs)",
                self.n_epochs
            )));
        }
        let mjd = self.epoch_mjd(epoch);
        let tones = self.injections_at(epoch);
        let mut blocks = Vec::with_capacity(self.cfg.segments_mhz.len() * 2);
        for (seg, &center) in self.cfg.segments_mhz.iter().enumerate() {
            let seg = seg as u32;
            for element in Element::BOTH {
                let mut rng = stream(
                    self.cfg.seed,
                    Domain::Noise,
                    epoch,
                    seg as u64 * 2 + element.index() as u64,
                );
                let mut samples = Vec::with_capacity(BLOCK_LEN);
                for _ in 0..BLOCK_LEN {
                    let re: f64 = rng.sample(StandardNormal);
                    let im: f64 = rng.sample(StandardNormal);
                    samples.push(Complex64::new(re, im) * FRAC_1_SQRT_2);
                }
                for tone in tones.iter().filter(|t| t.segment == seg) {
                    let phase = match element {
                        Element::East => tone.phase_east,
                        Element::West => tone.phase_west,
                    };
                    add_tone(&mut samples, tone.bin, tone.amp, phase);
                }
                blocks.push(IqBlock {
                    element,
                    mjd,
                    segment_index: seg,
                    segment_center_mhz: center,
                    samples,
                });
            }
        }
        Ok(EpochBlocks {
            epoch,
            mjd,
            band50_db: [
                self.band50_db(epoch, Element::East),
                self.band50_db(epoch, Element::West),
            ],
            blocks,
        })
    }

    /// Stream every epoch of the run in order.
    pub fn epochs(&self) -> impl Iterator<Item = EpochBlocks> + '_ {
        (0..self.n_epochs).map(|e| {
            self.synthesize_epoch(e)
                .expect("epoch index from run range")
        })
    }

    /// Total 50 MHz band power for one element at one epoch, dB.
    ///
    /// Quiescent floor, plus beam-weighted broadband source flux, plus the
    /// (tiny) fraction the epoch's tones contribute, plus radiometer ripple.
    pub fn band50_db(&self, epoch: u64, element: Element) -> f64 {
        let mut excess = 0.0;
        if !self.broadband.is_empty() {
            let mjd = self.epoch_mjd(epoch);
            let lst = mjd_to_lst(mjd, self.obs.longitude_east_deg)
                .expect("run endpoints validated");
            for (dir, lin_excess) in &self.broadband {
                let off = boresight_offset_deg(dir, lst, &self.obs);
                if off <= 3.0 * self.obs.element_fwhm_deg {
                    excess += beam_gain(off, self.obs.element_fwhm_deg) * lin_excess;
                }
            }
        }
        for tone in self.injections_at(epoch) {
            // Tone linear SNR against one bin's noise is 256 amp^2; against
            // the whole band it is scaled by one bin width over 50 MHz.
            excess += BLOCK_LEN as f64 * tone.amp * tone.amp * BIN_WIDTH_HZ / BAND_WIDTH_HZ;
        }
        let mut rng = stream(self.cfg.seed, Domain::Band, epoch, element.index() as u64);
        let ripple: f64 = rng.sample::<f64, _>(StandardNormal) * RADIOMETER_SIGMA;
        self.cfg.band_floor_db
            + 10.0 * (1.0 + excess).log10()
            + 10.0 * (1.0 + ripple).max(1e-12).log10()
    }
}

fn validate_scenario(cfg: &ScenarioConfig) -> Result<()> {
    if !cfg.mjd_start.is_finite() || !(cfg.duration_days >= 0.0) {
        return Err(Error::Config(format!(
            "mjd_start {} / duration_days {} invalid",
            cfg.mjd_start, cfg.duration_days
        )));
    }
    if cfg.segments_mhz.is_empty() {
        return Err(Error::Config("scenario has no frequency segments".into()));
    }
    for w in cfg.segments_mhz.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::Config(format!(
                "segment centers must be strictly ascending, got {} then {}",
                w[0], w[1]
            )));
        }
    }
    for &c in &cfg.segments_mhz {
        if !(BAND_MIN_MHZ..=BAND_MAX_MHZ).contains(&c) {
            return Err(Error::Config(format!(
                "segment center {c} MHz outside observing band [{BAND_MIN_MHZ}, {BAND_MAX_MHZ}]"
            )));
        }
    }
    if !cfg.band_floor_db.is_finite() {
        return Err(Error::Config("band_floor_db must be finite".into()));
    }
    Ok(())
}

/// Ordered segment index pairs whose center spacing lies in
/// `[df_min_hz, df_max_hz]`.
fn eligible_pairs(segments_mhz: &[f64], df_min_hz: f64, df_max_hz: f64) -> Vec<(u32, u32)> {
    let mut out = Vec::new();
    for i in 0..segments_mhz.len() {
        for j in (i + 1)..segments_mhz.len() {
            let df = (segments_mhz[j] - segments_mhz[i]) * 1e6;
            if df >= df_min_hz && df <= df_max_hz {
                out.push((i as u32, j as u32));
            }
        }
    }
    out
}

fn check_df_range(df_min_hz: f64, df_max_hz: f64) -> Result<()> {
    if !(df_min_hz > 0.0 && df_max_hz >= df_min_hz) {
        return Err(Error::Config(format!(
            "pair spacing range [{df_min_hz}, {df_max_hz}] Hz must satisfy 0 < min <= max"
        )));
    }
    Ok(())
}

/// Draw a uniform phase in (-pi, pi].
fn uniform_phase(rng: &mut impl Rng) -> f64 {
    wrap_rad((rng.gen::<f64>() - 0.5) * TAU)
}

/// Exponential-interarrival event epochs for one source at `cadence_per_hr`.
fn arrival_epochs(rng: &mut impl Rng, cadence_per_hr: f64, n_epochs: u64) -> Result<Vec<u64>> {
    if !(cadence_per_hr > 0.0) {
        return Err(Error::Config(format!(
            "cadence_per_hr must be > 0, got {cadence_per_hr}"
        )));
    }
    let exp = Exp::new(cadence_per_hr / 3600.0)
        .map_err(|e| Error::Config(format!("bad cadence: {e}")))?;
    let run_s = n_epochs as f64 * T_INT_S;
    let mut out = Vec::new();
    let mut t = exp.sample(rng);
    while t < run_s {
        out.push((t / T_INT_S).floor() as u64);
        t += exp.sample(rng);
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn schedule_celestial(
    cfg: &ScenarioConfig,
    obs: &ObservatoryConfig,
    idx: u32,
    direction: &SkyDirection,
    snr_db: f64,
    df_min_hz: f64,
    df_max_hz: f64,
    cadence_per_hr: f64,
    active_lst_halfwidth_hr: Option<f64>,
    injections: &mut HashMap<u64, Vec<Tone>>,
    realized: &mut Vec<RealizedEvent>,
) -> Result<()> {
    check_df_range(df_min_hz, df_max_hz)?;
    let pairs = eligible_pairs(&cfg.segments_mhz, df_min_hz, df_max_hz);
    if pairs.is_empty() {
        return Err(Error::Config(format!(
            "source {idx}: no segment pair has spacing in [{df_min_hz}, {df_max_hz}] Hz"
        )));
    }
    if let Some(w) = active_lst_halfwidth_hr {
        if !(w > 0.0) {
            return Err(Error::Config(format!(
                "source {idx}: active_lst_halfwidth_hr must be > 0, got {w}"
            )));
        }
    }
    let mut rng = stream(cfg.seed, Domain::Events, idx as u64, 0);
    for epoch in arrival_epochs(&mut rng, cadence_per_hr, cfg.n_epochs())? {
        let mjd = cfg.epoch_mjd(epoch);
        let lst = mjd_to_lst(mjd, obs.longitude_east_deg)?;
        if let Some(w) = active_lst_halfwidth_hr {
            if wrap_hr(direction.ra_hr - lst).abs() > w {
                continue;
            }
        }
        let off = boresight_offset_deg(direction, lst, obs);
        if off > 3.0 * obs.element_fwhm_deg {
            continue;
        }
        let gain = beam_gain(off, obs.element_fwhm_deg);
        let s_eff = 10f64.powf(snr_db / 10.0) * gain;
        let amp = (s_eff / BLOCK_LEN as f64).sqrt();

        let (lo, hi) = pairs[rng.gen_range(0..pairs.len())];
        let bin = rng.gen_range(0..BLOCK_LEN as u32);
        let phase_lo_east = uniform_phase(&mut rng);
        let phase_hi_east = uniform_phase(&mut rng);

        let tones = injections.entry(epoch).or_default();
        for (seg, phase_east) in [(lo, phase_lo_east), (hi, phase_hi_east)] {
            let f_mhz = bin_freq_hz(cfg.segments_mhz[seg as usize], bin) / 1e6;
            let geom = expected_ew_phase(direction, lst, obs, f_mhz)?;
            tones.push(Tone {
                segment: seg,
                bin,
                amp,
                phase_east,
                phase_west: wrap_rad(phase_east - geom),
                source: idx,
            });
        }
        realized.push(RealizedEvent {
            source: idx,
            epoch,
            mjd,
            lst_hr: lst,
            segments: vec![lo, hi],
            bin,
            effective_snr_db: 10.0 * s_eff.log10(),
            df_hz: (cfg.segments_mhz[hi as usize] - cfg.segments_mhz[lo as usize]) * 1e6,
        });
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn schedule_terrestrial(
    cfg: &ScenarioConfig,
    obs: &ObservatoryConfig,
    idx: u32,
    phase_rad: f64,
    freq_mhz: f64,
    snr_db: f64,
    cadence_per_hr: f64,
    df_min_hz: f64,
    df_max_hz: f64,
    populous_bins: u32,
    injections: &mut HashMap<u64, Vec<Tone>>,
    realized: &mut Vec<RealizedEvent>,
) -> Result<()> {
    if !phase_rad.is_finite() {
        return Err(Error::Config(format!(
            "source {idx}: phase_rad must be finite"
        )));
    }
    if populous_bins as usize > BLOCK_LEN {
        return Err(Error::Config(format!(
            "source {idx}: populous_bins {populous_bins} exceeds {BLOCK_LEN} bins per segment"
        )));
    }
    let anchor = cfg
        .segments_mhz
        .iter()
        .position(|&c| (c - freq_mhz).abs() < 1e-6)
        .ok_or_else(|| {
            Error::Config(format!(
                "source {idx}: freq {freq_mhz} MHz is not a scenario segment center"
            ))
        })? as u32;
    let pair_mode = df_max_hz > 0.0;
    let partners: Vec<(u32, u32)> = if pair_mode {
        check_df_range(df_min_hz, df_max_hz)?;
        let all = eligible_pairs(&cfg.segments_mhz, df_min_hz, df_max_hz);
        let ours: Vec<_> = all
            .into_iter()
            .filter(|&(i, j)| i == anchor || j == anchor)
            .collect();
        if ours.is_empty() {
            return Err(Error::Config(format!(
                "source {idx}: no partner segment within [{df_min_hz}, {df_max_hz}] Hz of anchor"
            )));
        }
        ours
    } else {
        Vec::new()
    };

    let snr_lin = 10f64.powf(snr_db / 10.0);
    let amp = (snr_lin / BLOCK_LEN as f64).sqrt();
    let mut rng = stream(cfg.seed, Domain::Events, idx as u64, 0);
    for epoch in arrival_epochs(&mut rng, cadence_per_hr, cfg.n_epochs())? {
        let mjd = cfg.epoch_mjd(epoch);
        let lst = mjd_to_lst(mjd, obs.longitude_east_deg)?;
        let segs: Vec<u32> = if pair_mode {
            let (i, j) = partners[rng.gen_range(0..partners.len())];
            vec![i, j]
        } else {
            vec![anchor]
        };
        let bins: Vec<u32> = if populous_bins > 0 {
            rand::seq::index::sample(&mut rng, BLOCK_LEN, populous_bins as usize)
                .into_iter()
                .map(|b| b as u32)
                .collect()
        } else {
            vec![rng.gen_range(0..BLOCK_LEN as u32)]
        };
        let tones = injections.entry(epoch).or_default();
        for &seg in &segs {
            for &bin in &bins {
                let f_mhz = bin_freq_hz(cfg.segments_mhz[seg as usize], bin) / 1e6;
                let dphi = phase_rad + instrumental_phase(f_mhz, obs.instrumental_delay_ns);
                let phase_east = uniform_phase(&mut rng);
                tones.push(Tone {
                    segment: seg,
                    bin,
                    amp,
                    phase_east,
                    phase_west: wrap_rad(phase_east - dphi),
                    source: idx,
                });
            }
        }
        let df_hz = if segs.len() == 2 {
            (cfg.segments_mhz[segs[1] as usize] - cfg.segments_mhz[segs[0] as usize]).abs() * 1e6
        } else {
            0.0
        };
        realized.push(RealizedEvent {
            source: idx,
            epoch,
            mjd,
            lst_hr: lst,
            segments: segs,
            bin: bins[0],
            effective_snr_db: snr_db,
            df_hz,
        });
    }
    Ok(())
}

/// Add `amp * exp(i (2 pi (bin - 128) n / 256 + phase))` to the samples, the
/// tone that lands entirely in DFT bin `bin` with phase `phase`.
fn add_tone(samples: &mut [Complex64], bin: u32, amp: f64, phase: f64) {
    let w = TAU * (bin as f64 - (BLOCK_LEN / 2) as f64) / BLOCK_LEN as f64;
    for (n, s) in samples.iter_mut().enumerate() {
        *s += Complex64::from_polar(amp, w * n as f64 + phase);
    }
}

/// Add one tone to an existing block. `snr_db` is the linear SNR the tone
/// produces against unit-power noise in its DFT bin.
pub fn inject_tone(block: &mut IqBlock, bin: u32, snr_db: f64, phase_rad: f64) -> Result<()> {
    if block.samples.len() != BLOCK_LEN {
        return Err(Error::Shape(format!(
            "block has {} samples, expected {BLOCK_LEN}",
            block.samples.len()
        )));
    }
    if bin as usize >= BLOCK_LEN {
        return Err(Error::Domain(format!("bin {bin} out of range 0..{BLOCK_LEN}")));
    }
    if !snr_db.is_finite() || !phase_rad.is_finite() {
        return Err(Error::Domain("tone snr and phase must be finite".into()));
    }
    let amp = (10f64.powf(snr_db / 10.0) / BLOCK_LEN as f64).sqrt();
    add_tone(&mut block.samples, bin, amp, phase_rad);
    Ok(())
}

/// Inject one celestial pulse pair into the four blocks of an epoch:
/// `lo` and `hi` are `[east, west]` block pairs for the lower and upper
/// frequency segments. The west tone phase at each frequency is the east
/// phase minus the expected east-west fringe phase for `direction` at the
/// blocks' timestamp, so a matched pair built from these blocks lands on the
/// phase-versus-LST track that the statistics search for.
#[allow(clippy::too_many_arguments)]
pub fn inject_pulse_pair(
    lo: [&mut IqBlock; 2],
    hi: [&mut IqBlock; 2],
    bin: u32,
    snr_db: f64,
    phase_lo_east: f64,
    phase_hi_east: f64,
    direction: &SkyDirection,
    obs: &ObservatoryConfig,
) -> Result<()> {
    let mjd = lo[0].mjd;
    for (b, want) in [(&lo, "lo"), (&hi, "hi")] {
        if b[0].element != Element::East || b[1].element != Element::West {
            return Err(Error::Precondition(format!(
                "{want} blocks must be [east, west]"
            )));
        }
        if b[0].mjd != mjd || b[1].mjd != mjd {
            return Err(Error::Precondition(
                "pulse pair blocks must share one epoch".into(),
            ));
        }
        if b[0].segment_center_mhz != b[1].segment_center_mhz {
            return Err(Error::Precondition(
                "east/west blocks must share a segment".into(),
            ));
        }
    }
    if !(hi[0].segment_center_mhz > lo[0].segment_center_mhz) {
        return Err(Error::Precondition(
            "hi segment must be above lo segment".into(),
        ));
    }
    let lst = mjd_to_lst(mjd, obs.longitude_east_deg)?;
    let off = boresight_offset_deg(direction, lst, obs);
    let s_eff = 10f64.powf(snr_db / 10.0) * beam_gain(off, obs.element_fwhm_deg);
    let eff_db = 10.0 * s_eff.log10();
    for (pair, phase_east) in [(lo, phase_lo_east), (hi, phase_hi_east)] {
        let f_mhz = bin_freq_hz(pair[0].segment_center_mhz, bin) / 1e6;
        let geom = expected_ew_phase(direction, lst, obs, f_mhz)?;
        let [east, west] = pair;
        inject_tone(east, bin, eff_db, phase_east)?;
        inject_tone(west, bin, eff_db, wrap_rad(phase_east - geom))?;
    }
    Ok(())
}

/// Inject one terrestrial tone into an `[east, west]` block pair. The
/// east-west phase difference is `phase_rad` plus the instrumental phase at
/// the tone frequency, with no LST dependence.
pub fn inject_rfi(
    pair: [&mut IqBlock; 2],
    bin: u32,
    snr_db: f64,
    phase_rad: f64,
    phase_east: f64,
    obs: &ObservatoryConfig,
) -> Result<()> {
    if pair[0].element != Element::East || pair[1].element != Element::West {
        return Err(Error::Precondition("blocks must be [east, west]".into()));
    }
    if pair[0].segment_center_mhz != pair[1].segment_center_mhz || pair[0].mjd != pair[1].mjd {
        return Err(Error::Precondition(
            "east/west blocks must share segment and epoch".into(),
        ));
    }
    let f_mhz = bin_freq_hz(pair[0].segment_center_mhz, bin) / 1e6;
    let dphi = phase_rad + instrumental_phase(f_mhz, obs.instrumental_delay_ns);
    let [east, west] = pair;
    inject_tone(east, bin, snr_db, phase_east)?;
    inject_tone(west, bin, snr_db, wrap_rad(phase_east - dphi))?;
    Ok(())
}
