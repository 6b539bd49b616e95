//! Fringe geometry and sidereal timekeeping for a two-element east-west
//! interferometer.
//!
//! The array model is deliberately small: two elements separated by a fixed
//! east-west baseline measured in wavelengths at a reference frequency, both
//! pointed at a fixed declination on the meridian. A celestial source drifts
//! through the fan beam once per sidereal day and its inter-element phase
//! advances by one turn per fringe period
//!
//! ```text
//!     P = 12 / (pi * B_lambda * cos(dec))   hours
//! ```
//!
//! Within the usable beam the phase is modeled as linear in the hour-angle
//! offset, so stepping local sidereal time by exactly one fringe period
//! changes the phase by exactly 2*pi. The east element receives a wavefront
//! from a source east of the meridian first; the sign conventions below are
//! fixed once here and asserted by tests, and every other module (simulator,
//! pair phases, track counting) goes through these functions rather than
//! re-deriving its own.

use crate::error::{Error, Result};

/// Degrees of sky rotation per hour of right ascension.
const DEG_PER_HOUR: f64 = 15.0;

/// Sidereal-polynomial validity window, MJD (1990-01-01 .. 2100-01-01).
const MJD_MIN: f64 = 47_892.0;
const MJD_MAX: f64 = 88_069.0;

/// Fixed station and receiver parameters for one observing setup.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservatoryConfig {
    /// Site longitude, degrees east of Greenwich (west sites are negative).
    pub longitude_east_deg: f64,
    /// Site latitude, degrees north.
    pub latitude_deg: f64,
    /// East-west element separation in wavelengths at `reference_freq_mhz`.
    pub baseline_wavelengths: f64,
    /// Frequency at which the baseline is quoted, MHz.
    pub reference_freq_mhz: f64,
    /// Boresight declination of the meridian fan beam, degrees.
    pub pointing_dec_deg: f64,
    /// Boresight azimuth, degrees. The processing assumes a meridian drift
    /// scan (180.0); other values are accepted but flagged as unusual.
    pub pointing_az_deg: f64,
    /// Full width at half maximum of one element response, degrees.
    pub element_fwhm_deg: f64,
    /// Signed instrumental delay of the west chain relative to east, ns.
    pub instrumental_delay_ns: f64,
}

impl Default for ObservatoryConfig {
    /// The two-element east-west setup all built-in examples use: a 33.0
    /// wavelength baseline at 1425 MHz, meridian fan beam at dec -4.3 deg.
    fn default() -> Self {
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
}

impl ObservatoryConfig {
    /// Checks field ranges; returns warnings for legal-but-unusual settings.
    pub fn validate(&self) -> Result<Vec<String>> {
        if !self.longitude_east_deg.is_finite() || self.longitude_east_deg.abs() > 360.0 {
            return Err(Error::Config(format!(
                "longitude_east_deg out of range: {}",
                self.longitude_east_deg
            )));
        }
        if !self.latitude_deg.is_finite() || self.latitude_deg.abs() > 90.0 {
            return Err(Error::Config(format!(
                "latitude_deg out of range: {}",
                self.latitude_deg
            )));
        }
        if !(self.baseline_wavelengths > 0.0) {
            return Err(Error::Config(
                "baseline_wavelengths must be > 0".to_string(),
            ));
        }
        if !(self.reference_freq_mhz > 0.0) {
            return Err(Error::Config("reference_freq_mhz must be > 0".to_string()));
        }
        if self.pointing_dec_deg.abs() >= 90.0 {
            return Err(Error::Config(
                "pointing_dec_deg must lie strictly between -90 and 90".to_string(),
            ));
        }
        if !(self.element_fwhm_deg > 0.0 && self.element_fwhm_deg < 90.0) {
            return Err(Error::Config(
                "element_fwhm_deg must lie in (0, 90)".to_string(),
            ));
        }
        if !self.instrumental_delay_ns.is_finite() {
            return Err(Error::Config("instrumental_delay_ns not finite".to_string()));
        }
        let mut warnings = Vec::new();
        if self.pointing_az_deg != 180.0 {
            warnings.push(format!(
                "pointing_az_deg = {} is not a meridian drift scan (180.0)",
                self.pointing_az_deg
            ));
        }
        Ok(warnings)
    }

    /// Baseline length in wavelengths at an arbitrary RF frequency.
    pub fn baseline_at(&self, rf_freq_mhz: f64) -> f64 {
        self.baseline_wavelengths * rf_freq_mhz / self.reference_freq_mhz
    }

    /// Half-width of the usable (+-3 FWHM) beam crossing, hours of LST.
    pub fn beam_halfwidth_hr(&self) -> f64 {
        3.0 * self.element_fwhm_deg
            / (DEG_PER_HOUR * self.pointing_dec_deg.to_radians().cos())
    }
}

/// A fixed celestial direction in equatorial coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SkyDirection {
    /// Right ascension, hours in [0, 24).
    pub ra_hr: f64,
    /// Declination, degrees.
    pub dec_deg: f64,
}

// --- angle wrapping -------------------------------------------------------

/// Wraps an angle in radians to (-pi, pi]; -pi maps to +pi.
pub fn wrap_rad(x: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let mut r = x.rem_euclid(two_pi);
    if r > std::f64::consts::PI {
        r -= two_pi;
    }
    r
}

/// Wraps an hour difference to (-12, 12].
pub fn wrap_hr(h: f64) -> f64 {
    let mut r = h.rem_euclid(24.0);
    if r > 12.0 {
        r -= 24.0;
    }
    r
}

// --- sidereal time --------------------------------------------------------

/// Local mean sidereal time in hours for a UT-scale MJD.
///
/// Uses the standard mean-sidereal polynomial in its continuous form
/// (degrees of Greenwich mean sidereal angle as a cubic in Julian
/// centuries), good to well under 0.1 s of time across 1990-2100, which is
/// the accepted validity window here. MJD values outside that window return
/// a range error rather than a silently extrapolated answer.
pub fn mjd_to_lst(mjd: f64, longitude_east_deg: f64) -> Result<f64> {
    if !mjd.is_finite() || !(MJD_MIN..=MJD_MAX).contains(&mjd) {
        return Err(Error::MjdOutOfRange(format!(
            "mjd {mjd} outside supported window [{MJD_MIN}, {MJD_MAX}]"
        )));
    }
    let d = mjd - 51_544.5; // days since J2000.0
    let t = d / 36_525.0;
    let theta_deg = 280.460_618_37
        + 360.985_647_366_29 * d
        + 0.000_387_933 * t * t
        - t * t * t / 38_710_000.0;
    Ok(((theta_deg + longitude_east_deg) / DEG_PER_HOUR).rem_euclid(24.0))
}

// --- fringe model ---------------------------------------------------------

/// Time for the inter-element phase of a source at `dec_deg` to advance one
/// turn, in hours: `12 / (pi * B_lambda * cos(dec))`.
pub fn fringe_period(baseline_wavelengths: f64, dec_deg: f64) -> Result<f64> {
    if !(baseline_wavelengths > 0.0) {
        return Err(Error::Domain(format!(
            "baseline_wavelengths must be > 0, got {baseline_wavelengths}"
        )));
    }
    let cos_dec = dec_deg.to_radians().cos();
    if dec_deg.abs() >= 90.0 || cos_dec <= 0.0 {
        return Err(Error::GeometrySingularity(format!(
            "fringe period undefined at dec {dec_deg} deg"
        )));
    }
    Ok(12.0 / (std::f64::consts::PI * baseline_wavelengths * cos_dec))
}

/// Fixed instrumental phase of the west chain at an RF frequency, wrapped.
///
/// MHz times ns is 1e-3 cycles, so the full turn count drops out in the
/// wrap and only the fractional cycle survives.
pub fn instrumental_phase(rf_freq_mhz: f64, instrumental_delay_ns: f64) -> f64 {
    wrap_rad(std::f64::consts::TAU * rf_freq_mhz * instrumental_delay_ns * 1e-3)
}

/// Hour-angle offset of a source east (+) or west (-) of the local meridian,
/// expressed as a sky angle in radians: `(ra - lst) * (2 pi / 24) * cos(dec)`.
pub fn hour_angle_offset_rad(source: &SkyDirection, lst_hr: f64) -> f64 {
    wrap_hr(source.ra_hr - lst_hr) * (std::f64::consts::TAU / 24.0)
        * source.dec_deg.to_radians().cos()
}

/// Predicted east-minus-west phase of a source at the given LST and RF
/// frequency, wrapped to (-pi, pi].
///
/// The fringe model is linear in the hour-angle offset:
///
/// ```text
///     phi = wrap(2 pi * B_lambda(rf) * alpha + phi_inst)
///     alpha = (ra - lst) * (2 pi / 24) * cos(dec)
/// ```
///
/// which makes the phase exactly periodic in one fringe period and gives the
/// constant slope `-2 pi / P` per hour of LST that the pair statistics rely
/// on. A source east of the meridian (ra > lst) has positive alpha and, with
/// zero instrumental delay, positive phase. Directions more than three
/// beamwidths off boresight are outside the modeled response and error out.
pub fn expected_ew_phase(
    source: &SkyDirection,
    lst_hr: f64,
    obs: &ObservatoryConfig,
    rf_freq_mhz: f64,
) -> Result<f64> {
    if !(rf_freq_mhz > 0.0) {
        return Err(Error::Domain(format!("rf_freq_mhz must be > 0, got {rf_freq_mhz}")));
    }
    let ra_offset_deg = wrap_hr(source.ra_hr - lst_hr)
        * DEG_PER_HOUR
        * source.dec_deg.to_radians().cos();
    if ra_offset_deg.abs() > 3.0 * obs.element_fwhm_deg {
        return Err(Error::OutOfBeam(format!(
            "source {:.4} deg off boresight exceeds 3 FWHM ({:.4} deg)",
            ra_offset_deg.abs(),
            3.0 * obs.element_fwhm_deg
        )));
    }
    let alpha = hour_angle_offset_rad(source, lst_hr);
    let phi_inst = instrumental_phase(rf_freq_mhz, obs.instrumental_delay_ns);
    Ok(wrap_rad(
        std::f64::consts::TAU * obs.baseline_at(rf_freq_mhz) * alpha + phi_inst,
    ))
}

/// Total angular offset of a source from boresight, degrees, combining the
/// hour-angle offset with any declination mismatch.
pub fn boresight_offset_deg(
    source: &SkyDirection,
    lst_hr: f64,
    obs: &ObservatoryConfig,
) -> f64 {
    let ra_off = wrap_hr(source.ra_hr - lst_hr)
        * DEG_PER_HOUR
        * source.dec_deg.to_radians().cos();
    let dec_off = source.dec_deg - obs.pointing_dec_deg;
    (ra_off * ra_off + dec_off * dec_off).sqrt()
}

// --- RA binning and beam --------------------------------------------------

/// Index of the RA bin containing `lst_hr`, for `n_bins` uniform bins over
/// [0, 24). Bins are left-closed: lst exactly on an edge belongs to the bin
/// on its right.
pub fn ra_bin(lst_hr: f64, n_bins: u32) -> u32 {
    let b = (lst_hr.rem_euclid(24.0) / 24.0 * n_bins as f64).floor() as i64;
    b.clamp(0, n_bins as i64 - 1) as u32
}

/// Width of one RA bin in hours.
pub fn ra_bin_width_hr(n_bins: u32) -> f64 {
    24.0 / n_bins as f64
}

/// Time for a celestial source to cross one RA bin, seconds of sidereal
/// clock.
pub fn ra_bin_traversal_s(n_bins: u32) -> f64 {
    24.0 * 3600.0 / n_bins as f64
}

/// Gaussian element power response at `offset_deg` from boresight:
/// `exp(-4 ln 2 (offset / fwhm)^2)`, 1.0 on axis, 0.5 at half a FWHM.
pub fn beam_gain(offset_deg: f64, fwhm_deg: f64) -> f64 {
    let u = offset_deg / fwhm_deg;
    (-4.0 * std::f64::consts::LN_2 * u * u).exp()
}
