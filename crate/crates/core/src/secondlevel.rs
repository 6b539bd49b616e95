//! Second-level processing: match simultaneous detections into pulse pairs
//! across both elements, compute wrapped inter-element phases with
//! instrumental-delay compensation, excise interference by segment
//! population, and apply the pair filter chain.
//!
//! A candidate pair needs four constituent events in one integration epoch:
//! both elements at a lower frequency f0 and both at f0 + df, with df inside
//! the configured spacing window and both frequencies inside the allowed
//! ranges. Epoch equality is exact (same integration).

use std::collections::HashMap;

use crate::firstlevel::{PulseEvent, DETECTION_THRESHOLD_DB};
use crate::geometry::{mjd_to_lst, ra_bin, wrap_rad, ObservatoryConfig};
use crate::{Element, Error, Result, BIN_WIDTH_HZ, BLOCK_LEN};

/// Interference flag windows span 4 hours, six per day.
pub const RFI_WINDOW_PER_DAY: f64 = 6.0;

/// Width of one spectral segment, Hz.
pub const SEGMENT_WIDTH_HZ: f64 = 954.0;

/// Pair selection settings.
///
/// `llsnr` values are log10 noise-origin likelihoods, zero at the detection
/// threshold and increasingly negative for stronger pulses, so a *lower*
/// threshold is a *tighter* significance cut. A pair (or per-pulse
/// composite) is kept when its llsnr is at or below the threshold. The
/// pulse-level default of 0.00 therefore accepts everything, while the
/// pair-level default of -2.70 demands a combined exceedance about 500
/// times less likely than four at-threshold pulses.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterSet {
    pub df_min_hz: f64,
    pub df_max_hz: f64,
    /// Acceptance half-window on `ddfdphi_rad`, radians.
    pub ddf_phase_window_rad: f64,
    /// Acceptance half-window on `dphi0_rad` and `dphidf_rad`, radians.
    /// The default of pi is fully open.
    pub pulse_phase_window_rad: f64,
    pub llsnr_pulse_threshold: f64,
    pub llsnr_pair_threshold: f64,
    /// Veto radius around a flagged segment, in 954 Hz segments.
    pub rfi_margin_segments: u32,
    /// A segment is flagged when more pulses than this (both elements
    /// combined) land in it within one integration.
    pub rfi_population_limit: u32,
    /// Allowed constituent frequency ranges, MHz.
    pub freq_ranges_mhz: Vec<(f64, f64)>,
    /// First-level detection threshold, dB; the llsnr reference point.
    pub detection_threshold_db: f64,
}

impl Default for FilterSet {
    fn default() -> Self {
        FilterSet {
            df_min_hz: 300_000.0,
            df_max_hz: 540_000.0,
            ddf_phase_window_rad: 0.18,
            pulse_phase_window_rad: std::f64::consts::PI,
            llsnr_pulse_threshold: 0.00,
            llsnr_pair_threshold: -2.70,
            rfi_margin_segments: 500,
            rfi_population_limit: 10,
            freq_ranges_mhz: vec![(1398.0, 1424.0), (1426.0, 1451.0)],
            detection_threshold_db: DETECTION_THRESHOLD_DB,
        }
    }
}

impl FilterSet {
    pub fn validate(&self) -> Result<()> {
        if !(self.df_min_hz > 0.0 && self.df_min_hz < self.df_max_hz) {
            return Err(Error::Config(format!(
                "df window [{}, {}] Hz must satisfy 0 < min < max",
                self.df_min_hz, self.df_max_hz
            )));
        }
        if !(self.ddf_phase_window_rad >= 0.0) || !(self.pulse_phase_window_rad >= 0.0) {
            return Err(Error::Config("phase windows must be >= 0".into()));
        }
        if !self.llsnr_pulse_threshold.is_finite() || !self.llsnr_pair_threshold.is_finite() {
            return Err(Error::Config("llsnr thresholds must be finite".into()));
        }
        if self.freq_ranges_mhz.is_empty()
            || self.freq_ranges_mhz.iter().any(|(lo, hi)| !(lo < hi))
        {
            return Err(Error::Config(
                "freq_ranges_mhz must be non-empty [lo, hi) pairs with lo < hi".into(),
            ));
        }
        if !self.detection_threshold_db.is_finite() {
            return Err(Error::Config("detection_threshold_db must be finite".into()));
        }
        Ok(())
    }

    pub fn rfi_margin_hz(&self) -> f64 {
        self.rfi_margin_segments as f64 * SEGMENT_WIDTH_HZ
    }

    fn freq_allowed(&self, freq_hz: f64) -> bool {
        let mhz = freq_hz / 1e6;
        self.freq_ranges_mhz
            .iter()
            .any(|&(lo, hi)| mhz >= lo && mhz <= hi)
    }
}

/// Wrap a finite angle to (-pi, pi]; exactly -pi maps to +pi.
pub fn wrap_phase(x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::Domain(format!("cannot wrap non-finite phase {x}")));
    }
    Ok(wrap_rad(x))
}

/// A matched but not yet filtered pair: the four constituent events,
/// `[east, west]` at f0 and `[east, west]` at f0 + df.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidatePair {
    pub lower: [PulseEvent; 2],
    pub upper: [PulseEvent; 2],
}

/// A pulse pair with derived phases and statistics, mirroring the pair-file
/// columns.
#[derive(Debug, Clone, PartialEq)]
pub struct PulsePair {
    pub mjd: f64,
    pub lst_hr: f64,
    pub ra_bin: u32,
    /// Lower constituent frequency, Hz.
    pub f0_hz: f64,
    pub df_hz: f64,
    pub snr_e0_db: f64,
    pub snr_w0_db: f64,
    pub snr_edf_db: f64,
    pub snr_wdf_db: f64,
    /// East minus West phase of the lower pulse, wrapped.
    pub dphi0_rad: f64,
    /// East minus West phase of the upper pulse, wrapped.
    pub dphidf_rad: f64,
    /// `wrap(dphidf - dphi0 - 2 pi df T_inst)`: the instrumental-delay
    /// compensated spacing phase, near zero for a common arrival direction.
    pub ddfdphi_rad: f64,
    pub llsnr_pair: f64,
    pub segnoise_e0_db: f64,
    pub segnoise_w0_db: f64,
    pub segnoise_edf_db: f64,
    pub segnoise_wdf_db: f64,
    pub band50_e_db: f64,
    pub band50_w_db: f64,
}

/// Conditional exceedance log-likelihood of one detected pulse under AWGN:
/// `log10 P(S >= s | S >= T) = -(10^(s/10) - 10^(T/10)) / ln 10`, zero at
/// the detection threshold and negative above it.
pub fn llsnr(snr_db: f64, threshold_db: f64) -> Result<f64> {
    if !snr_db.is_finite() || !threshold_db.is_finite() {
        return Err(Error::Domain("llsnr needs finite snr and threshold".into()));
    }
    if snr_db < threshold_db {
        return Err(Error::Precondition(format!(
            "snr {snr_db} dB below detection threshold {threshold_db} dB"
        )));
    }
    Ok(-(10f64.powf(snr_db / 10.0) - 10f64.powf(threshold_db / 10.0)) / std::f64::consts::LN_10)
}

/// Composite llsnr of one pulse over both elements.
pub fn llsnr_pulse(east_snr_db: f64, west_snr_db: f64, threshold_db: f64) -> Result<f64> {
    Ok(llsnr(east_snr_db, threshold_db)? + llsnr(west_snr_db, threshold_db)?)
}

/// Composite llsnr of a pair over all four constituents.
pub fn llsnr_pair(snr_db: [f64; 4], threshold_db: f64) -> Result<f64> {
    let mut sum = 0.0;
    for s in snr_db {
        sum += llsnr(s, threshold_db)?;
    }
    Ok(sum)
}

/// Group events by exact epoch and emit every four-constituent candidate
/// whose spacing and frequencies satisfy `fs`. Output is deterministic and
/// independent of event order within an epoch: constituents are keyed by
/// (segment, bin, element), and should duplicates for one key ever appear,
/// the highest-snr one wins.
pub fn match_pairs(events: &[PulseEvent], fs: &FilterSet) -> Vec<CandidatePair> {
    let mut epochs: HashMap<u64, Vec<&PulseEvent>> = HashMap::new();
    for ev in events {
        epochs.entry(ev.mjd.to_bits()).or_default().push(ev);
    }
    let mut keys: Vec<u64> = epochs.keys().copied().collect();
    keys.sort_by(|a, b| f64::from_bits(*a).total_cmp(&f64::from_bits(*b)));

    let mut out = Vec::new();
    for key in keys {
        let group = &epochs[&key];
        // (segment, bin) -> [east, west]
        let mut duals: HashMap<(u32, u32), [Option<&PulseEvent>; 2]> = HashMap::new();
        for ev in group {
            let slot = &mut duals.entry((ev.segment_index, ev.bin_index)).or_default()
                [ev.element.index()];
            let replace = slot.is_none_or(|old| ev.snr_db > old.snr_db);
            if replace {
                *slot = Some(ev);
            }
        }
        let mut complete: Vec<(&PulseEvent, &PulseEvent)> = duals
            .values()
            .filter_map(|pair| match pair {
                [Some(e), Some(w)] => Some((*e, *w)),
                _ => None,
            })
            .collect();
        complete.sort_by(|a, b| a.0.rf_freq_hz.total_cmp(&b.0.rf_freq_hz));
        for i in 0..complete.len() {
            for j in (i + 1)..complete.len() {
                let (e0, w0) = complete[i];
                let (edf, wdf) = complete[j];
                let df = edf.rf_freq_hz - e0.rf_freq_hz;
                if df < fs.df_min_hz || df > fs.df_max_hz {
                    continue;
                }
                if !fs.freq_allowed(e0.rf_freq_hz) || !fs.freq_allowed(edf.rf_freq_hz) {
                    continue;
                }
                out.push(CandidatePair {
                    lower: [e0.clone(), w0.clone()],
                    upper: [edf.clone(), wdf.clone()],
                });
            }
        }
    }
    out
}

/// Derive the pair record from a candidate's constituents: wrapped phase
/// differences, the compensated spacing phase, llsnr, LST, and RA bin.
pub fn compute_pair_phases(
    cand: &CandidatePair,
    obs: &ObservatoryConfig,
    fs: &FilterSet,
    n_ra_bins: u32,
) -> Result<PulsePair> {
    let [e0, w0] = &cand.lower;
    let [edf, wdf] = &cand.upper;
    for (ev, element) in [(e0, Element::East), (w0, Element::West)] {
        if ev.element != element {
            return Err(Error::Precondition(
                "candidate constituents must be [east, west]".into(),
            ));
        }
    }
    if e0.mjd != w0.mjd || e0.mjd != edf.mjd || e0.mjd != wdf.mjd {
        return Err(Error::Precondition(
            "candidate constituents must share one epoch".into(),
        ));
    }
    let lst = mjd_to_lst(e0.mjd, obs.longitude_east_deg)?;
    let df = edf.rf_freq_hz - e0.rf_freq_hz;
    let dphi0 = wrap_rad(e0.phase_rad - w0.phase_rad);
    let dphidf = wrap_rad(edf.phase_rad - wdf.phase_rad);
    let t_inst_s = obs.instrumental_delay_ns * 1e-9;
    let ddf = wrap_rad(dphidf - dphi0 - std::f64::consts::TAU * df * t_inst_s);
    Ok(PulsePair {
        mjd: e0.mjd,
        lst_hr: lst,
        ra_bin: ra_bin(lst, n_ra_bins),
        f0_hz: e0.rf_freq_hz,
        df_hz: df,
        snr_e0_db: e0.snr_db,
        snr_w0_db: w0.snr_db,
        snr_edf_db: edf.snr_db,
        snr_wdf_db: wdf.snr_db,
        dphi0_rad: dphi0,
        dphidf_rad: dphidf,
        ddfdphi_rad: ddf,
        llsnr_pair: llsnr_pair(
            [e0.snr_db, w0.snr_db, edf.snr_db, wdf.snr_db],
            fs.detection_threshold_db,
        )?,
        segnoise_e0_db: e0.seg_noise_db,
        segnoise_w0_db: w0.seg_noise_db,
        segnoise_edf_db: edf.seg_noise_db,
        segnoise_wdf_db: wdf.seg_noise_db,
        band50_e_db: e0.band50_db,
        band50_w_db: w0.band50_db,
    })
}

/// 4-hour window index containing `mjd`.
pub fn rfi_window_index(mjd: f64) -> i64 {
    (mjd * RFI_WINDOW_PER_DAY).floor() as i64
}

/// One population-flagged segment in one 4-hour window.
#[derive(Debug, Clone, PartialEq)]
pub struct RfiFlag {
    pub window: i64,
    pub segment_index: u32,
    pub center_hz: f64,
}

/// The set of flagged (window, segment) combinations for a run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RfiFlags {
    flags: Vec<RfiFlag>,
}

impl RfiFlags {
    pub fn flags(&self) -> &[RfiFlag] {
        &self.flags
    }

    pub fn insert(&mut self, flag: RfiFlag) {
        if !self
            .flags
            .iter()
            .any(|f| f.window == flag.window && f.segment_index == flag.segment_index)
        {
            self.flags.push(flag);
        }
    }

    pub fn merge(&mut self, other: RfiFlags) {
        for f in other.flags {
            self.insert(f);
        }
    }

    /// True when `freq_hz` at time `mjd` falls within `margin_hz` of a
    /// segment flagged in the same window.
    pub fn is_vetoed(&self, mjd: f64, freq_hz: f64, margin_hz: f64) -> bool {
        let w = rfi_window_index(mjd);
        self.flags
            .iter()
            .any(|f| f.window == w && (freq_hz - f.center_hz).abs() <= margin_hz)
    }
}

/// Flag segments whose per-integration pulse population (both elements
/// combined) exceeds `fs.rfi_population_limit`, and return the events that
/// survive the margin veto around those flags.
///
/// Counting is per integration: a burst of many simultaneous narrowband
/// pulses in one segment is the interference signature, while legitimate
/// pulse pairs contribute at most a few events per segment per integration.
/// The flag itself covers the enclosing 4-hour window.
pub fn rfi_excise(events: &[PulseEvent], fs: &FilterSet) -> (RfiFlags, Vec<PulseEvent>) {
    let mut counts: HashMap<(u64, u32), (u32, f64)> = HashMap::new();
    for ev in events {
        let center_hz =
            ev.rf_freq_hz - (ev.bin_index as f64 - (BLOCK_LEN / 2) as f64) * BIN_WIDTH_HZ;
        let entry = counts
            .entry((ev.mjd.to_bits(), ev.segment_index))
            .or_insert((0, center_hz));
        entry.0 += 1;
    }
    let mut flags = RfiFlags::default();
    let mut keys: Vec<(u64, u32)> = counts.keys().copied().collect();
    keys.sort_by(|a, b| {
        (f64::from_bits(a.0), a.1)
            .partial_cmp(&(f64::from_bits(b.0), b.1))
            .expect("finite mjd")
    });
    for key in keys {
        let (count, center_hz) = counts[&key];
        if count > fs.rfi_population_limit {
            flags.insert(RfiFlag {
                window: rfi_window_index(f64::from_bits(key.0)),
                segment_index: key.1,
                center_hz,
            });
        }
    }
    let margin = fs.rfi_margin_hz();
    let kept = events
        .iter()
        .filter(|ev| !flags.is_vetoed(ev.mjd, ev.rf_freq_hz, margin))
        .cloned()
        .collect();
    (flags, kept)
}

/// Why a candidate pair was rejected; the first failing filter in the
/// documented order (interference veto, spacing phase, pulse phase, pulse
/// likelihood, pair likelihood).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RejectReason {
    RfiExcision,
    DdfPhase,
    PulsePhase,
    LlsnrPulse,
    LlsnrPair,
}

impl RejectReason {
    pub const ALL: [RejectReason; 5] = [
        RejectReason::RfiExcision,
        RejectReason::DdfPhase,
        RejectReason::PulsePhase,
        RejectReason::LlsnrPulse,
        RejectReason::LlsnrPair,
    ];

    pub fn label(self) -> &'static str {
        match self {
            RejectReason::RfiExcision => "rfi-excision",
            RejectReason::DdfPhase => "ddf-phase",
            RejectReason::PulsePhase => "pulse-phase",
            RejectReason::LlsnrPulse => "llsnr-pulse",
            RejectReason::LlsnrPair => "llsnr-pair",
        }
    }
}

/// Evaluate the filter chain on one pair. `None` means accepted. The
/// outcome is the same under any filter evaluation order; only the
/// rejection tag depends on the documented order.
pub fn filter_verdict(
    pair: &PulsePair,
    fs: &FilterSet,
    flags: &RfiFlags,
) -> Result<Option<RejectReason>> {
    let margin = fs.rfi_margin_hz();
    if flags.is_vetoed(pair.mjd, pair.f0_hz, margin)
        || flags.is_vetoed(pair.mjd, pair.f0_hz + pair.df_hz, margin)
    {
        return Ok(Some(RejectReason::RfiExcision));
    }
    if pair.ddfdphi_rad.abs() > fs.ddf_phase_window_rad {
        return Ok(Some(RejectReason::DdfPhase));
    }
    if pair.dphi0_rad.abs() > fs.pulse_phase_window_rad
        || pair.dphidf_rad.abs() > fs.pulse_phase_window_rad
    {
        return Ok(Some(RejectReason::PulsePhase));
    }
    let t = fs.detection_threshold_db;
    let lower = llsnr_pulse(pair.snr_e0_db, pair.snr_w0_db, t)?;
    let upper = llsnr_pulse(pair.snr_edf_db, pair.snr_wdf_db, t)?;
    if lower > fs.llsnr_pulse_threshold || upper > fs.llsnr_pulse_threshold {
        return Ok(Some(RejectReason::LlsnrPulse));
    }
    if pair.llsnr_pair > fs.llsnr_pair_threshold {
        return Ok(Some(RejectReason::LlsnrPair));
    }
    Ok(None)
}

/// Result of running the filter chain over a candidate set.
#[derive(Debug, Default)]
pub struct FilterOutcome {
    pub accepted: Vec<PulsePair>,
    pub rejected: Vec<(PulsePair, RejectReason)>,
}

impl FilterOutcome {
    pub fn rejection_counts(&self) -> Vec<(RejectReason, usize)> {
        RejectReason::ALL
            .iter()
            .map(|&r| (r, self.rejected.iter().filter(|(_, why)| *why == r).count()))
            .collect()
    }
}

pub fn apply_filters(
    pairs: Vec<PulsePair>,
    fs: &FilterSet,
    flags: &RfiFlags,
) -> Result<FilterOutcome> {
    let mut out = FilterOutcome::default();
    for pair in pairs {
        match filter_verdict(&pair, fs, flags)? {
            None => out.accepted.push(pair),
            Some(reason) => out.rejected.push((pair, reason)),
        }
    }
    Ok(out)
}

/// Streaming second-level driver. Feed each epoch's events as they are
/// produced; flags accumulate during the pass and the veto is applied at
/// the end, so a burst late in a 4-hour window still vetoes candidates
/// from earlier in that window.
pub struct PairPipeline {
    fs: FilterSet,
    obs: ObservatoryConfig,
    n_ra_bins: u32,
    flags: RfiFlags,
    candidates: Vec<PulsePair>,
    events_seen: u64,
}

impl PairPipeline {
    pub fn new(fs: FilterSet, obs: ObservatoryConfig, n_ra_bins: u32) -> Result<PairPipeline> {
        fs.validate()?;
        obs.validate()?;
        if n_ra_bins == 0 {
            return Err(Error::Config("n_ra_bins must be > 0".into()));
        }
        Ok(PairPipeline {
            fs,
            obs,
            n_ra_bins,
            flags: RfiFlags::default(),
            candidates: Vec::new(),
            events_seen: 0,
        })
    }

    /// Ingest the events of one or more complete epochs.
    pub fn push_events(&mut self, events: &[PulseEvent]) -> Result<()> {
        self.events_seen += events.len() as u64;
        let (flags, _) = rfi_excise(events, &self.fs);
        self.flags.merge(flags);
        for cand in match_pairs(events, &self.fs) {
            self.candidates
                .push(compute_pair_phases(&cand, &self.obs, &self.fs, self.n_ra_bins)?);
        }
        Ok(())
    }

    pub fn events_seen(&self) -> u64 {
        self.events_seen
    }

    pub fn finish(self) -> Result<(FilterOutcome, RfiFlags)> {
        let outcome = apply_filters(self.candidates, &self.fs, &self.flags)?;
        Ok((outcome, self.flags))
    }
}
