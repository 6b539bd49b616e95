//! Ionospheric phase and delay diagnostics.
//!
//! These are order-of-magnitude health checks, not corrections: the pipeline
//! evaluates them for the configured band to confirm that ionospheric terms
//! are far inside the pair-phase filter window before that filter is
//! trusted. All formulas are the standard cold-plasma results for a
//! line-of-sight magnetic field `b_field_t` (Tesla), total electron content
//! `tec_m2` (electrons / m^2) and observing frequency `f0_ghz` (GHz).

use crate::error::{Error, Result};

/// Parameters of a single ionospheric sight line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IonoParams {
    /// Line-of-sight geomagnetic field, Tesla.
    pub b_field_t: f64,
    /// Total electron content along the path, electrons per m^2.
    pub tec_m2: f64,
    /// TEC change rate, electrons per m^2 per second.
    pub tec_rate_m2_s: f64,
    /// Zenith refraction bend at 100 MHz, degrees.
    pub refraction_100mhz_deg: f64,
}

impl Default for IonoParams {
    /// Mid-latitude daytime values used as the worked reference case.
    fn default() -> Self {
        IonoParams {
            b_field_t: 50e-6,
            tec_m2: 1e18,
            tec_rate_m2_s: 0.7e16,
            refraction_100mhz_deg: 0.05,
        }
    }
}

fn check_freq(f0_ghz: f64) -> Result<()> {
    if !(f0_ghz > 0.0) || !f0_ghz.is_finite() {
        return Err(Error::Domain(format!("f0_ghz must be finite and > 0, got {f0_ghz}")));
    }
    Ok(())
}

/// One-way Faraday rotation phase, radians:
/// `2.36e-14 * B * N_t / f0^2`.
pub fn faraday_phase(p: &IonoParams, f0_ghz: f64) -> Result<f64> {
    check_freq(f0_ghz)?;
    Ok(2.36e-14 * p.b_field_t * p.tec_m2 / (f0_ghz * f0_ghz))
}

/// Differential Faraday phase between the two tones of a pulse pair,
/// radians per MHz of tone spacing:
/// `-4.72e-17 * B * N_t / f0^3` (the derivative of [`faraday_phase`] with
/// respect to frequency, expressed per MHz).
pub fn faraday_pair_phase_diff(p: &IonoParams, f0_ghz: f64) -> Result<f64> {
    check_freq(f0_ghz)?;
    Ok(-4.72e-17 * p.b_field_t * p.tec_m2 / (f0_ghz * f0_ghz * f0_ghz))
}

/// Ionospheric group delay, microseconds: `1.345e-19 * N_t / f0^2`.
pub fn iono_delay_us(p: &IonoParams, f0_ghz: f64) -> Result<f64> {
    check_freq(f0_ghz)?;
    Ok(1.345e-19 * p.tec_m2 / (f0_ghz * f0_ghz))
}

/// Faraday phase drift across one integration of `t_int_s` seconds caused
/// by a changing TEC, radians.
pub fn tec_rate_phase_drift(p: &IonoParams, f0_ghz: f64, t_int_s: f64) -> Result<f64> {
    check_freq(f0_ghz)?;
    if !(t_int_s >= 0.0) {
        return Err(Error::Domain(format!("t_int_s must be >= 0, got {t_int_s}")));
    }
    let accumulated = IonoParams {
        tec_m2: p.tec_rate_m2_s * t_int_s,
        ..*p
    };
    faraday_phase(&accumulated, f0_ghz)
}

/// Upper bound on the inter-element phase shift from differential
/// refraction, radians: the 100 MHz bend scaled by `(0.1 / f0)^2` and
/// projected onto a baseline of `baseline_wavelengths`.
pub fn refraction_phase_bound(
    p: &IonoParams,
    f0_ghz: f64,
    baseline_wavelengths: f64,
) -> Result<f64> {
    check_freq(f0_ghz)?;
    if !(baseline_wavelengths > 0.0) {
        return Err(Error::Domain(format!(
            "baseline_wavelengths must be > 0, got {baseline_wavelengths}"
        )));
    }
    let bend_deg = p.refraction_100mhz_deg * (0.1 / f0_ghz) * (0.1 / f0_ghz);
    Ok(std::f64::consts::TAU * baseline_wavelengths * bend_deg.to_radians())
}

/// Worst-case differential ionospheric phase across a pair spacing of
/// `df_max_mhz`, radians. The second-level pipeline asserts this is small
/// compared to its pair-phase filter window before applying that filter.
pub fn pair_filter_margin(p: &IonoParams, f0_ghz: f64, df_max_mhz: f64) -> Result<f64> {
    Ok(faraday_pair_phase_diff(p, f0_ghz)?.abs() * df_max_mhz)
}

#[cfg(test)]
mod tests {
    use super::*;

    // Reference evaluation: B = 50 uT, N_t = 1e18 m^-2, f0 = 1.425 GHz.
    const F0: f64 = 1.425;

    #[test]
    fn faraday_phase_reference() {
        let v = faraday_phase(&IonoParams::default(), F0).unwrap();
        assert!((v - 0.581_101_877_5).abs() < 1e-9, "{v}");
    }

    #[test]
    fn pair_phase_diff_reference() {
        let v = faraday_pair_phase_diff(&IonoParams::default(), F0).unwrap();
        assert!((v + 8.155_815_824_6e-4).abs() < 1e-12, "{v}");
        // Published rounding of the same number.
        assert!((v.abs() - 8.1e-4).abs() / 8.1e-4 < 0.01);
    }

    #[test]
    fn group_delay_reference() {
        let v = iono_delay_us(&IonoParams::default(), F0).unwrap();
        assert!((v - 0.066_235_764_9).abs() < 1e-9, "{v}");
        // 66 ns at L-band.
        assert!((v * 1000.0 - 66.0).abs() / 66.0 < 0.01);
    }

    #[test]
    fn tec_drift_reference() {
        let v = tec_rate_phase_drift(&IonoParams::default(), F0, 0.27).unwrap();
        assert!((v - 1.098_282_548_5e-3).abs() < 1e-12, "{v}");
        // Same order of magnitude as the 1.6e-3 rule-of-thumb figure.
        assert!(v > 1.6e-4 && v < 1.6e-2);
    }

    #[test]
    fn refraction_bound_reference() {
        let v = refraction_phase_bound(&IonoParams::default(), F0, 33.0).unwrap();
        assert!((v - 8.910_692_390_4e-4).abs() < 1e-12, "{v}");
        assert!((v - 8.9e-4).abs() / 8.9e-4 < 0.01);
    }

    #[test]
    fn pair_margin_tiny_compared_to_filter_window() {
        let m = pair_filter_margin(&IonoParams::default(), F0, 0.54).unwrap();
        assert!(m < 0.18 / 100.0, "margin {m} not well inside 0.18 rad");
    }

    #[test]
    fn pair_diff_is_frequency_derivative_of_faraday_phase() {
        // Central finite difference of faraday_phase vs the closed form,
        // swept over three decades of each parameter.
        for i in 0..=6 {
            let b = 5e-6 * 10f64.powf(i as f64 / 3.0);
            for j in 0..=6 {
                let nt = 1e16 * 10f64.powf(j as f64 / 2.0);
                for k in 0..=6 {
                    let f0 = 0.4 * 10f64.powf(k as f64 / 6.0);
                    let p = IonoParams {
                        b_field_t: b,
                        tec_m2: nt,
                        ..IonoParams::default()
                    };
                    let df_ghz = f0 * 1e-6;
                    let hi = faraday_phase(&p, f0 + df_ghz).unwrap();
                    let lo = faraday_phase(&p, f0 - df_ghz).unwrap();
                    let fd = (hi - lo) / (2.0 * df_ghz * 1000.0); // per MHz
                    let an = faraday_pair_phase_diff(&p, f0).unwrap();
                    assert!(
                        ((fd - an) / an).abs() < 1e-3,
                        "fd {fd} vs analytic {an} at B={b} Nt={nt} f0={f0}"
                    );
                }
            }
        }
    }

    #[test]
    fn formulas_scale_linearly_in_field_and_tec() {
        let p = IonoParams::default();
        let p2 = IonoParams { b_field_t: p.b_field_t * 2.0, tec_m2: p.tec_m2 * 3.0, ..p };
        let r = faraday_phase(&p2, F0).unwrap() / faraday_phase(&p, F0).unwrap();
        assert!((r - 6.0).abs() < 1e-12);
        let r = iono_delay_us(&p2, F0).unwrap() / iono_delay_us(&p, F0).unwrap();
        assert!((r - 3.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_nonpositive_frequency() {
        assert!(faraday_phase(&IonoParams::default(), 0.0).is_err());
        assert!(iono_delay_us(&IonoParams::default(), -1.0).is_err());
        assert!(faraday_pair_phase_diff(&IonoParams::default(), f64::NAN).is_err());
    }
}
