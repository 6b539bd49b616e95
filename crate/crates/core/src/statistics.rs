//! Analysis stage: RA-binned pair counts with reference-window z-scores,
//! likelihood-threshold sweeps, direction-of-interest search by diagonal
//! track counting, and delimited-text report export.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::geometry::{
    expected_ew_phase, fringe_period, ra_bin_width_hr, wrap_hr, wrap_rad, ObservatoryConfig,
    SkyDirection,
};
use crate::secondlevel::PulsePair;
use crate::{Error, Result};

/// Default RA binning: 3200 bins of 0.0075 hr (27 s of sidereal drift).
pub const N_RA_BINS_DEFAULT: u32 = 3200;

/// Default reference window for the background mean, hours of RA.
pub const REFERENCE_WINDOW_HR: (f64, f64) = (5.0, 5.6);

/// Default phase tolerance for diagonal track counting, radians.
pub const TRACK_PHASE_TOL_RAD: f64 = 0.18;

/// Accepted-pair counts per RA bin with a reference-window Poisson model.
#[derive(Debug, Clone, PartialEq)]
pub struct RaHistogram {
    pub n_bins: u32,
    pub counts: Vec<u32>,
    pub window_lo_hr: f64,
    pub window_hi_hr: f64,
    /// Bins whose centers fall inside the window.
    pub window_bins: std::ops::Range<usize>,
    /// Mean count per window bin.
    pub mu: f64,
}

impl RaHistogram {
    /// Build directly from per-bin counts (used by re-analysis and null
    /// calibration; `ra_histogram` is the pair-level entry point).
    pub fn from_counts(counts: Vec<u32>, window_hr: (f64, f64)) -> Result<RaHistogram> {
        let n_bins = counts.len() as u32;
        if n_bins == 0 {
            return Err(Error::Domain("histogram needs at least one bin".into()));
        }
        let (lo, hi) = window_hr;
        if !(lo >= 0.0 && lo < hi && hi <= 24.0) {
            return Err(Error::Domain(format!(
                "reference window [{lo}, {hi}) hr must lie inside [0, 24]"
            )));
        }
        let width = ra_bin_width_hr(n_bins);
        let first = (0..n_bins as usize)
            .find(|&b| center_of(b, width) >= lo)
            .unwrap_or(n_bins as usize);
        let mut last = first;
        while last < n_bins as usize && center_of(last, width) < hi {
            last += 1;
        }
        if first == last {
            return Err(Error::DegenerateStatistics(format!(
                "reference window [{lo}, {hi}) hr contains no bin centers"
            )));
        }
        let window_bins = first..last;
        let total: u64 = counts[window_bins.clone()].iter().map(|&c| c as u64).sum();
        let mu = total as f64 / window_bins.len() as f64;
        Ok(RaHistogram {
            n_bins,
            counts,
            window_lo_hr: lo,
            window_hi_hr: hi,
            window_bins,
            mu,
        })
    }

    pub fn bin_center_hr(&self, bin: usize) -> f64 {
        center_of(bin, ra_bin_width_hr(self.n_bins))
    }

    /// Standard score of one bin under the Poisson reference model:
    /// `(count - mu) / sqrt(mu)`.
    pub fn z(&self, bin: usize) -> Result<f64> {
        if !(self.mu > 0.0) {
            return Err(Error::DegenerateStatistics(format!(
                "window mean {} is not positive; z-scores undefined",
                self.mu
            )));
        }
        Ok((self.counts[bin] as f64 - self.mu) / self.mu.sqrt())
    }

    pub fn z_scores(&self) -> Result<Vec<f64>> {
        (0..self.counts.len()).map(|b| self.z(b)).collect()
    }

    pub fn window_total(&self) -> u64 {
        self.counts[self.window_bins.clone()]
            .iter()
            .map(|&c| c as u64)
            .sum()
    }
}

fn center_of(bin: usize, width_hr: f64) -> f64 {
    (bin as f64 + 0.5) * width_hr
}

/// Count accepted pairs per RA bin. Pairs must have been binned with the
/// same `n_bins` (their stored `ra_bin` is trusted).
pub fn ra_histogram(
    pairs: &[PulsePair],
    n_bins: u32,
    window_hr: (f64, f64),
) -> Result<RaHistogram> {
    if n_bins == 0 {
        return Err(Error::Domain("n_bins must be > 0".into()));
    }
    let mut counts = vec![0u32; n_bins as usize];
    for p in pairs {
        if p.ra_bin >= n_bins {
            return Err(Error::Shape(format!(
                "pair ra_bin {} out of range for {} bins",
                p.ra_bin, n_bins
            )));
        }
        counts[p.ra_bin as usize] += 1;
    }
    RaHistogram::from_counts(counts, window_hr)
}

/// Re-filter pairs at each llsnr threshold and histogram the survivors.
/// Thresholds must be ascending; lower (more negative) is stricter, so the
/// first histogram is the sparsest.
pub fn llsnr_sweep(
    pairs: &[PulsePair],
    thresholds: &[f64],
    n_bins: u32,
    window_hr: (f64, f64),
) -> Result<Vec<(f64, RaHistogram)>> {
    if thresholds.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Precondition(
            "llsnr sweep thresholds must be strictly ascending".into(),
        ));
    }
    thresholds
        .iter()
        .map(|&t| {
            if !t.is_finite() {
                return Err(Error::Domain(format!("non-finite sweep threshold {t}")));
            }
            let subset: Vec<PulsePair> = pairs
                .iter()
                .filter(|p| p.llsnr_pair <= t)
                .cloned()
                .collect();
            Ok((t, ra_histogram(&subset, n_bins, window_hr)?))
        })
        .collect()
}

/// LST window used for track counting: half a fringe period either side of
/// the candidate RA. A single east-west baseline repeats its phase track
/// every fringe period of RA, so counting over the full element beam would
/// score alias RAs one period away identically to the true one. Restricting
/// to the central fringe (the diagonal region of a phase-vs-RA plot) stays
/// well inside the beam and leaves the phase test to localize RA within a
/// fraction of a bin.
pub fn track_window_halfwidth_hr(obs: &ObservatoryConfig) -> Result<f64> {
    let period = fringe_period(obs.baseline_wavelengths, obs.pointing_dec_deg)?;
    Ok(0.5 * period.min(2.0 * obs.beam_halfwidth_hr()))
}

/// Count pairs whose lower-pulse phase lies within `phase_tol_rad` of the
/// fringe track a source at `ra_hr` (at the pointing declination) would
/// draw, restricted to pairs whose LST falls inside the central fringe
/// around that RA (see `track_window_halfwidth_hr`).
pub fn celestial_track_count(
    pairs: &[PulsePair],
    ra_hr: f64,
    phase_tol_rad: f64,
    obs: &ObservatoryConfig,
) -> Result<usize> {
    if !(phase_tol_rad > 0.0) {
        return Err(Error::Domain(format!(
            "phase_tol_rad must be > 0, got {phase_tol_rad}"
        )));
    }
    let dir = SkyDirection {
        ra_hr,
        dec_deg: obs.pointing_dec_deg,
    };
    let half = track_window_halfwidth_hr(obs)?;
    let mut count = 0;
    for p in pairs {
        if wrap_hr(ra_hr - p.lst_hr).abs() > half {
            continue;
        }
        let predicted = expected_ew_phase(&dir, p.lst_hr, obs, p.f0_hz / 1e6)?;
        if wrap_rad(p.dphi0_rad - predicted).abs() <= phase_tol_rad {
            count += 1;
        }
    }
    Ok(count)
}

/// Number of pairs inside the track-count LST window around `ra_hr` (the
/// denominator of the track-count null model).
pub fn track_window_count(
    pairs: &[PulsePair],
    ra_hr: f64,
    obs: &ObservatoryConfig,
) -> Result<usize> {
    let half = track_window_halfwidth_hr(obs)?;
    Ok(pairs
        .iter()
        .filter(|p| wrap_hr(ra_hr - p.lst_hr).abs() <= half)
        .count())
}

/// Smallest k whose Poisson(lambda) CDF reaches `q`.
pub fn poisson_quantile(lambda: f64, q: f64) -> u64 {
    if lambda <= 0.0 {
        return 0;
    }
    let mut k = 0u64;
    let mut pmf = (-lambda).exp();
    let mut cdf = pmf;
    while cdf < q && k < 10_000 {
        k += 1;
        pmf *= lambda / k as f64;
        cdf += pmf;
    }
    k
}

/// Outcome of a direction-of-interest search.
#[derive(Debug, Clone, PartialEq)]
pub struct DoiSearch {
    pub best_ra_hr: f64,
    pub best_count: usize,
    /// (candidate RA, track count) over the whole grid.
    pub profile: Vec<(f64, usize)>,
    /// Pairs inside the LST window at the best RA.
    pub best_in_window: usize,
    /// Expected on-track count there if phases were uniform.
    pub null_mean: f64,
    /// Critical count: the Poisson quantile at 1 - 0.01/looks (a Bonferroni
    /// bound over the grid), above which the peak is deemed significant.
    pub null_critical: u64,
    pub significant: bool,
}

/// Scan candidate RAs over `[ra_lo_hr, ra_hi_hr]` in steps of `step_hr`,
/// scoring each by `celestial_track_count`. Ties resolve toward the lowest
/// RA. The step must not exceed the RA bin width for `n_bins`.
pub fn doi_search(
    pairs: &[PulsePair],
    ra_lo_hr: f64,
    ra_hi_hr: f64,
    step_hr: f64,
    phase_tol_rad: f64,
    obs: &ObservatoryConfig,
    n_bins: u32,
) -> Result<DoiSearch> {
    if !(ra_lo_hr < ra_hi_hr) {
        return Err(Error::Domain(format!(
            "empty search range [{ra_lo_hr}, {ra_hi_hr}] hr"
        )));
    }
    if !(step_hr > 0.0) || step_hr > ra_bin_width_hr(n_bins) {
        return Err(Error::Domain(format!(
            "step {step_hr} hr must be positive and at most one RA bin ({} hr)",
            ra_bin_width_hr(n_bins)
        )));
    }
    let n_steps = ((ra_hi_hr - ra_lo_hr) / step_hr + 1e-9).floor() as usize;
    let mut profile = Vec::with_capacity(n_steps + 1);
    let mut best = (ra_lo_hr, 0usize);
    for k in 0..=n_steps {
        let ra = ra_lo_hr + k as f64 * step_hr;
        let count = celestial_track_count(pairs, ra, phase_tol_rad, obs)?;
        if count > best.1 {
            best = (ra, count);
        }
        profile.push((ra, count));
    }
    let best_in_window = track_window_count(pairs, best.0, obs)?;
    let null_mean = best_in_window as f64 * phase_tol_rad / std::f64::consts::PI;
    let looks = profile.len() as f64;
    let null_critical = poisson_quantile(null_mean, 1.0 - 0.01 / looks);
    Ok(DoiSearch {
        best_ra_hr: best.0,
        best_count: best.1,
        profile,
        best_in_window,
        null_mean,
        null_critical,
        significant: best.1 as u64 > null_critical,
    })
}

/// Everything the report writer needs.
pub struct ReportInputs<'a> {
    pub pairs: &'a [PulsePair],
    pub hist: &'a RaHistogram,
    pub sweep: &'a [(f64, RaHistogram)],
    pub doi: Option<&'a DoiSearch>,
    /// RA whose predicted fringe track annotates `phase_vs_ra`.
    pub track_ra_hr: Option<f64>,
    pub obs: &'a ObservatoryConfig,
    /// Single provenance line (config hash, seed, filter settings) placed
    /// at the top of every file.
    pub provenance: &'a str,
}

/// Write the delimited-text report tables into `dir` and return the paths.
///
/// Pair-level tables are sorted by |ddfdphi| ascending (best
/// direction-consistency first) with mjd as tiebreak.
pub fn export_report(dir: &Path, inputs: &ReportInputs) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut order: Vec<&PulsePair> = inputs.pairs.iter().collect();
    order.sort_by(|a, b| {
        (a.ddfdphi_rad.abs(), a.mjd, a.f0_hz)
            .partial_cmp(&(b.ddfdphi_rad.abs(), b.mjd, b.f0_hz))
            .expect("finite pair fields")
    });
    let mut paths = Vec::new();

    let mut body = String::new();
    for p in &order {
        let predicted = inputs.track_ra_hr.and_then(|ra| {
            let dir = SkyDirection {
                ra_hr: ra,
                dec_deg: inputs.obs.pointing_dec_deg,
            };
            expected_ew_phase(&dir, p.lst_hr, inputs.obs, p.f0_hz / 1e6).ok()
        });
        writeln!(
            body,
            "{},{},{},{},{}",
            fmt(p.lst_hr),
            p.ra_bin,
            fmt(p.dphi0_rad),
            fmt(p.ddfdphi_rad),
            predicted.map_or_else(|| "nan".to_string(), fmt)
        )
        .expect("string write");
    }
    paths.push(write_table(
        dir,
        "phase_vs_ra.csv",
        inputs.provenance,
        "lst_hr,ra_bin,dphi0_rad,ddfdphi_rad,predicted_rad",
        &body,
    )?);

    let mut body = String::new();
    for (t, hist) in inputs.sweep {
        for b in 0..hist.counts.len() {
            writeln!(
                body,
                "{},{},{},{},{}",
                fmt(*t),
                b,
                fmt(hist.bin_center_hr(b)),
                hist.counts[b],
                if hist.mu > 0.0 {
                    fmt(hist.z(b)?)
                } else {
                    "nan".to_string()
                }
            )
            .expect("string write");
        }
    }
    paths.push(write_table(
        dir,
        "sigma_vs_ra.csv",
        inputs.provenance,
        "llsnr_threshold,bin_index,ra_center_hr,count,z",
        &body,
    )?);

    let mut body = String::new();
    for p in &order {
        writeln!(
            body,
            "{},{},{},{},{},{}",
            fmt(p.lst_hr),
            p.ra_bin,
            fmt(p.segnoise_e0_db),
            fmt(p.segnoise_w0_db),
            fmt(p.segnoise_edf_db),
            fmt(p.segnoise_wdf_db)
        )
        .expect("string write");
    }
    paths.push(write_table(
        dir,
        "noise954_vs_ra.csv",
        inputs.provenance,
        "lst_hr,ra_bin,segnoise_e0_db,segnoise_w0_db,segnoise_edf_db,segnoise_wdf_db",
        &body,
    )?);

    let mut body = String::new();
    for p in &order {
        writeln!(
            body,
            "{},{},{},{}",
            fmt(p.lst_hr),
            p.ra_bin,
            fmt(p.band50_e_db),
            fmt(p.band50_w_db)
        )
        .expect("string write");
    }
    paths.push(write_table(
        dir,
        "band50_vs_ra.csv",
        inputs.provenance,
        "lst_hr,ra_bin,band50_e_db,band50_w_db",
        &body,
    )?);

    let mut body = String::new();
    for p in &order {
        writeln!(
            body,
            "{},{},{:.9},{}",
            fmt(p.lst_hr),
            p.ra_bin,
            p.mjd,
            fmt(p.f0_hz)
        )
        .expect("string write");
    }
    paths.push(write_table(
        dir,
        "mjd_freq_vs_ra.csv",
        inputs.provenance,
        "lst_hr,ra_bin,mjd,f0_hz",
        &body,
    )?);

    let mut body = String::new();
    for p in &order {
        writeln!(body, "{},{},{}", fmt(p.lst_hr), p.ra_bin, fmt(p.df_hz))
            .expect("string write");
    }
    paths.push(write_table(
        dir,
        "df_vs_ra.csv",
        inputs.provenance,
        "lst_hr,ra_bin,df_hz",
        &body,
    )?);

    if let Some(doi) = inputs.doi {
        let mut body = String::new();
        for (ra, count) in &doi.profile {
            writeln!(body, "{},{count}", fmt(*ra)).expect("string write");
        }
        paths.push(write_table(
            dir,
            "doi_profile.csv",
            inputs.provenance,
            "ra_hr,track_count",
            &body,
        )?);

        let verdict = if doi.significant {
            "significant"
        } else {
            "consistent-with-null"
        };
        let summary = format!(
            "# {}\nbest_ra_hr: {}\ntrack_count: {}\nwindow_pairs: {}\nnull_mean: {}\nnull_critical: {}\nverdict: {}\n",
            inputs.provenance,
            fmt(doi.best_ra_hr),
            doi.best_count,
            doi.best_in_window,
            fmt(doi.null_mean),
            doi.null_critical,
            verdict
        );
        let path = dir.join("doi_summary.txt");
        fs::write(&path, summary)?;
        paths.push(path);
    }

    Ok(paths)
}

/// Shortest-roundtrip float formatting, stable across runs.
fn fmt(x: f64) -> String {
    format!("{x}")
}

fn write_table(
    dir: &Path,
    name: &str,
    provenance: &str,
    header: &str,
    body: &str,
) -> Result<PathBuf> {
    let path = dir.join(name);
    fs::write(&path, format!("# {provenance}\n{header}\n{body}"))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Domain};
    use rand::Rng;
    use std::f64::consts::PI;

    fn test_obs() -> ObservatoryConfig {
        ObservatoryConfig {
            longitude_east_deg: -79.84,
            latitude_deg: 38.43,
            baseline_wavelengths: 33.0,
            reference_freq_mhz: 1425.0,
            pointing_dec_deg: -4.3,
            pointing_az_deg: 180.0,
            element_fwhm_deg: 5.3,
            instrumental_delay_ns: -82.0,
        }
    }

    fn pair(lst_hr: f64, ra_bin: u32, dphi0: f64, llsnr: f64) -> PulsePair {
        PulsePair {
            mjd: 60498.0 + lst_hr / 24.0,
            lst_hr,
            ra_bin,
            f0_hz: 1420.0e6,
            df_hz: 420_000.0,
            snr_e0_db: 14.0,
            snr_w0_db: 14.0,
            snr_edf_db: 14.0,
            snr_wdf_db: 14.0,
            dphi0_rad: dphi0,
            dphidf_rad: 0.0,
            ddfdphi_rad: 0.01,
            llsnr_pair: llsnr,
            segnoise_e0_db: 24.0,
            segnoise_w0_db: 24.0,
            segnoise_edf_db: 24.0,
            segnoise_wdf_db: 24.0,
            band50_e_db: 4.0,
            band50_w_db: 4.0,
        }
    }

    #[test]
    fn reference_window_has_80_bins_and_frozen_mu() {
        // 282 pairs spread uniformly over the window bins.
        let mut counts = vec![0u32; 3200];
        let first = 667;
        for i in 0..282 {
            counts[first + i % 80] += 1;
        }
        let hist = RaHistogram::from_counts(counts, REFERENCE_WINDOW_HR).unwrap();
        assert_eq!(hist.window_bins, 667..747);
        assert_eq!(hist.window_bins.len(), 80);
        assert_eq!(hist.window_total(), 282);
        assert!((hist.mu - 3.525).abs() < 1e-12);

        // z matches (count - mu)/sqrt(mu) with mu estimated from the window.
        let mut counts = vec![0u32; 3200];
        counts[667..747].fill(3);
        counts[700] = 13;
        let total: u64 = counts[667..747].iter().map(|&c| c as u64).sum();
        let hist = RaHistogram::from_counts(counts, REFERENCE_WINDOW_HR).unwrap();
        let mu = total as f64 / 80.0;
        assert!((hist.z(700).unwrap() - (13.0 - mu) / mu.sqrt()).abs() < 1e-12);

        // Frozen scalar reference: a 13-count bin over a 3.6 background.
        let z = (13.0 - 3.6) / 3.6f64.sqrt();
        assert!((z - 4.954_235).abs() < 1e-4);
    }

    #[test]
    fn histogram_totals_and_errors() {
        let pairs: Vec<PulsePair> = (0..50).map(|i| pair(5.2, 693 + i % 3, 0.0, -5.0)).collect();
        let hist = ra_histogram(&pairs, 3200, REFERENCE_WINDOW_HR).unwrap();
        assert_eq!(hist.counts.iter().map(|&c| c as u64).sum::<u64>(), 50);
        assert_eq!(hist.window_total(), 50);

        // All window counts equal: z = 0 everywhere in the window.
        let counts = vec![4u32; 3200];
        let hist = RaHistogram::from_counts(counts, REFERENCE_WINDOW_HR).unwrap();
        for b in hist.window_bins.clone() {
            assert_eq!(hist.z(b).unwrap(), 0.0);
        }

        // Window narrower than a bin: no centers inside.
        let err = RaHistogram::from_counts(vec![0; 3200], (5.0, 5.001));
        assert!(matches!(err, Err(Error::DegenerateStatistics(_))));

        // Empty counts: z undefined.
        let hist = RaHistogram::from_counts(vec![0; 3200], REFERENCE_WINDOW_HR).unwrap();
        assert!(matches!(hist.z(0), Err(Error::DegenerateStatistics(_))));

        // Out-of-range stored bin.
        let bad = vec![pair(5.2, 4000, 0.0, -5.0)];
        assert!(matches!(
            ra_histogram(&bad, 3200, REFERENCE_WINDOW_HR),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn sweep_is_monotone_and_checks_order() {
        let mut pairs = Vec::new();
        for i in 0..40 {
            pairs.push(pair(5.2, 700, 0.0, -1.0 - i as f64 * 0.5));
        }
        let sweep =
            llsnr_sweep(&pairs, &[-15.0, -5.0, -2.0], 3200, REFERENCE_WINDOW_HR).unwrap();
        let totals: Vec<u64> = sweep
            .iter()
            .map(|(_, h)| h.counts.iter().map(|&c| c as u64).sum())
            .collect();
        assert!(totals[0] < totals[1] && totals[1] < totals[2]);
        // Loosest threshold here keeps pairs with llsnr <= -2.0.
        assert_eq!(totals[2], pairs.iter().filter(|p| p.llsnr_pair <= -2.0).count() as u64);

        assert!(matches!(
            llsnr_sweep(&pairs, &[-2.0, -5.0], 3200, REFERENCE_WINDOW_HR),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn track_count_follows_the_fringe_diagonal() {
        let obs = test_obs();
        let ra = 5.25375;
        let dir = SkyDirection {
            ra_hr: ra,
            dec_deg: obs.pointing_dec_deg,
        };
        let mut pairs = Vec::new();
        // Pairs exactly on the predicted track, spread across the central
        // fringe (window halfwidth is 0.058 hr here).
        for k in 0..13 {
            let lst = ra - 0.048 + k as f64 * 0.008;
            let predicted = expected_ew_phase(&dir, lst, &obs, 1420.0).unwrap();
            pairs.push(pair(lst, 700, predicted, -10.0));
        }
        assert_eq!(celestial_track_count(&pairs, ra, 0.18, &obs).unwrap(), 13);
        assert_eq!(
            celestial_track_count(&pairs, ra, 1e-6, &obs).unwrap(),
            13,
            "exact-on-track pairs count at any positive tolerance"
        );

        // Offset by pi: never counted below tol = pi.
        let off: Vec<PulsePair> = pairs
            .iter()
            .map(|p| {
                let mut q = p.clone();
                q.dphi0_rad = wrap_rad(p.dphi0_rad + PI);
                q
            })
            .collect();
        assert_eq!(celestial_track_count(&off, ra, 0.18, &obs).unwrap(), 0);

        // LSTs outside the window are excluded regardless of phase.
        let far = vec![pair(ra + 2.0, 700, 0.0, -10.0)];
        assert_eq!(celestial_track_count(&far, ra, PI - 1e-9, &obs).unwrap(), 0);

        // One fringe period away the phases still line up, but the LST
        // window rejects the alias.
        let period = fringe_period(obs.baseline_wavelengths, obs.pointing_dec_deg).unwrap();
        assert_eq!(
            celestial_track_count(&pairs, ra - period, 0.18, &obs).unwrap(),
            0
        );

        assert!(matches!(
            celestial_track_count(&pairs, ra, 0.0, &obs),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn doi_search_recovers_an_injected_direction() {
        let obs = test_obs();
        let ra_true = 5.25375;
        let dir = SkyDirection {
            ra_hr: ra_true,
            dec_deg: obs.pointing_dec_deg,
        };
        let mut rng = stream(12, Domain::Events, 7, 0);
        let mut pairs = Vec::new();
        for k in 0..15 {
            let lst = ra_true - 0.042 + k as f64 * 0.006;
            let predicted = expected_ew_phase(&dir, lst, &obs, 1420.0).unwrap();
            pairs.push(pair(lst, 700, predicted, -10.0));
        }
        for _ in 0..200 {
            let lst = 4.0 + rng.gen::<f64>() * 3.0;
            let phase = (rng.gen::<f64>() - 0.5) * 2.0 * PI;
            pairs.push(pair(lst, 650, phase, -5.0));
        }
        let got = doi_search(&pairs, 5.1, 5.4, 0.00375, 0.18, &obs, 3200).unwrap();
        assert!(
            (got.best_ra_hr - ra_true).abs() <= 0.0075,
            "recovered {} vs {}",
            got.best_ra_hr,
            ra_true
        );
        assert!(got.best_count >= 15);
        assert!(got.significant, "{got:?}");
        assert_eq!(got.profile.len(), 81);

        // Background-only: not significant, ties resolve to the lowest RA.
        let bg: Vec<PulsePair> = pairs[15..].to_vec();
        let null = doi_search(&bg, 5.1, 5.4, 0.00375, 0.18, &obs, 3200).unwrap();
        assert!(!null.significant, "{null:?}");
        let empty = doi_search(&[], 5.1, 5.4, 0.00375, 0.18, &obs, 3200).unwrap();
        assert_eq!(empty.best_ra_hr, 5.1);
        assert_eq!(empty.best_count, 0);

        // A single on-track pair scores 1 at its RA.
        let one = vec![pairs[7].clone()];
        let got = doi_search(&one, 5.1, 5.4, 0.00375, 0.18, &obs, 3200).unwrap();
        assert_eq!(got.best_count, 1);

        // Parameter validation.
        assert!(matches!(
            doi_search(&pairs, 5.4, 5.1, 0.00375, 0.18, &obs, 3200),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            doi_search(&pairs, 5.1, 5.4, 0.009, 0.18, &obs, 3200),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn doi_profile_is_permutation_invariant() {
        let obs = test_obs();
        let mut rng = stream(13, Domain::Events, 8, 0);
        let mut pairs: Vec<PulsePair> = (0..100)
            .map(|_| {
                let lst = 5.0 + rng.gen::<f64>() * 0.6;
                let phase = (rng.gen::<f64>() - 0.5) * 2.0 * PI;
                pair(lst, 700, phase, -5.0)
            })
            .collect();
        let a = doi_search(&pairs, 5.1, 5.4, 0.0075, 0.18, &obs, 3200).unwrap();
        pairs.reverse();
        let b = doi_search(&pairs, 5.1, 5.4, 0.0075, 0.18, &obs, 3200).unwrap();
        assert_eq!(a.profile, b.profile);
        assert_eq!(a.best_ra_hr, b.best_ra_hr);
    }

    #[test]
    fn poisson_quantile_matches_cdf() {
        for lambda in [0.3, 1.7, 3.5, 9.0] {
            for q in [0.9, 0.99, 0.9999] {
                let k = poisson_quantile(lambda, q);
                let cdf = |upto: u64| -> f64 {
                    let mut pmf = (-lambda).exp();
                    let mut acc = pmf;
                    for i in 1..=upto {
                        pmf *= lambda / i as f64;
                        acc += pmf;
                    }
                    acc
                };
                assert!(cdf(k) >= q);
                if k > 0 {
                    assert!(cdf(k - 1) < q);
                }
            }
        }
        assert_eq!(poisson_quantile(0.0, 0.99), 0);
    }

    #[test]
    fn null_z_tail_calibration() {
        // Poisson count fields with no signal: the fraction of runs showing
        // any |z| >= 4 must match the Poisson-tail expectation within a
        // factor of 3. Uses 200 window bins at mu = 3.5 so the expectation
        // is neither vacuous nor zero.
        let mut rng = stream(14, Domain::Events, 9, 0);
        let lambda = 3.5f64;
        let n_bins = 200usize;
        let runs = 150;
        let mut runs_with_excursion = 0;
        for _ in 0..runs {
            let counts: Vec<u32> = (0..n_bins)
                .map(|_| {
                    // Knuth multiplication sampler.
                    let l = (-lambda).exp();
                    let mut k = 0u32;
                    let mut p = 1.0;
                    loop {
                        p *= rng.gen::<f64>();
                        if p <= l {
                            break;
                        }
                        k += 1;
                    }
                    k
                })
                .collect();
            let hist = RaHistogram::from_counts(counts, (0.0, 24.0)).unwrap();
            let any = hist.z_scores().unwrap().iter().any(|z| z.abs() >= 4.0);
            if any {
                runs_with_excursion += 1;
            }
        }
        // Expectation from the true tail: P(X >= ceil(3.5 + 4 sqrt 3.5)).
        let cut = (lambda + 4.0 * lambda.sqrt()).ceil() as u64;
        let mut pmf = (-lambda).exp();
        let mut cdf = pmf;
        for i in 1..cut {
            pmf *= lambda / i as f64;
            cdf += pmf;
        }
        let p_tail = 1.0 - cdf;
        let expect_frac = 1.0 - (1.0 - p_tail).powi(n_bins as i32);
        let got_frac = runs_with_excursion as f64 / runs as f64;
        assert!(
            got_frac < 3.0 * expect_frac + 1e-12 && got_frac > expect_frac / 3.0 - 0.02,
            "excursion fraction {got_frac} vs expectation {expect_frac}"
        );
    }

    #[test]
    fn report_files_have_provenance_and_rows() {
        let dir = std::env::temp_dir().join(format!("report-test-{}", std::process::id()));
        let _ = fs::remove_dir_all(&dir);
        let obs = test_obs();
        let pairs = vec![pair(5.2, 693, 0.3, -6.0), pair(5.3, 706, -0.4, -8.0)];
        let hist = ra_histogram(&pairs, 3200, REFERENCE_WINDOW_HR).unwrap();
        let sweep = llsnr_sweep(&pairs, &[-7.0, -2.7], 3200, REFERENCE_WINDOW_HR).unwrap();
        let doi = doi_search(&pairs, 5.1, 5.4, 0.0075, 0.18, &obs, 3200).unwrap();
        let inputs = ReportInputs {
            pairs: &pairs,
            hist: &hist,
            sweep: &sweep,
            doi: Some(&doi),
            track_ra_hr: Some(5.25),
            obs: &obs,
            provenance: "config=abc seed=7",
        };
        let paths = export_report(&dir, &inputs).unwrap();
        assert_eq!(paths.len(), 8);
        for p in &paths {
            let text = fs::read_to_string(p).unwrap();
            assert!(
                text.starts_with("# config=abc seed=7\n"),
                "{p:?} missing provenance"
            );
        }
        let phase = fs::read_to_string(dir.join("phase_vs_ra.csv")).unwrap();
        let lines: Vec<&str> = phase.lines().collect();
        assert_eq!(lines[1], "lst_hr,ra_bin,dphi0_rad,ddfdphi_rad,predicted_rad");
        assert_eq!(lines.len(), 4);

        // Empty pair set: headers only, no rows.
        let dir2 = dir.join("empty");
        let hist = RaHistogram::from_counts(vec![0; 3200], REFERENCE_WINDOW_HR).unwrap();
        let inputs = ReportInputs {
            pairs: &[],
            hist: &hist,
            sweep: &[],
            doi: None,
            track_ra_hr: None,
            obs: &obs,
            provenance: "config=abc seed=7",
        };
        let paths = export_report(&dir2, &inputs).unwrap();
        assert_eq!(paths.len(), 6);
        for p in &paths {
            let text = fs::read_to_string(p).unwrap();
            assert_eq!(text.lines().count(), 2, "{p:?} should be header-only");
        }
        fs::remove_dir_all(&dir).unwrap();
    }
}
