//! Radio-layer arithmetic: path gains, direct-transmission power,
//! amplify-and-forward relay SNR, MRC combining, and source-power solving.
//!
//! All powers are in watts and all SNRs are linear ratios. Decibel
//! conversions happen at the CLI boundary only.

use thiserror::Error;

/// Relative tolerance of the source-power bisection.
pub const SOLVER_REL_TOL: f64 = 1e-10;

#[derive(Debug, Error, PartialEq)]
pub enum ChannelError {
    #[error("degenerate geometry: non-positive distance {0}")]
    DegenerateGeometry(f64),
}

/// Radio constants shared by every power computation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadioParams {
    /// Path-loss exponent.
    pub kappa: f64,
    /// Noise power in watts.
    pub sigma2: f64,
    /// Minimum link SNR, linear.
    pub gamma: f64,
    /// Maximum transmit power in watts.
    pub p_max: f64,
}

impl Default for RadioParams {
    /// Inverse-cubic loss, -60 dBm noise, 10 dB SNR target, 10 dBm power cap.
    fn default() -> Self {
        RadioParams {
            kappa: 3.0,
            sigma2: 1e-9,
            gamma: 10.0,
            p_max: 0.01,
        }
    }
}

impl RadioParams {
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("kappa", self.kappa),
            ("sigma2", self.sigma2),
            ("gamma", self.gamma),
            ("p_max", self.p_max),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(format!("radio parameter {name} must be positive, got {v}"));
            }
        }
        Ok(())
    }
}

/// Squared channel magnitude |h|^2 of a link, derived from distance.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct LinkGain(pub f64);

/// One relay: its transmit power and the two link gains around it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelayLink {
    /// Relay transmit power P_i in watts.
    pub relay_power: f64,
    /// Source-to-relay gain.
    pub g_sr: LinkGain,
    /// Relay-to-destination gain.
    pub g_rd: LinkGain,
}

/// Result of solving for the source power at the SNR target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerSolution {
    /// Source power P_0 in watts.
    pub p0: f64,
    /// Whether p0 fits under the power cap.
    pub feasible: bool,
    /// Combined SNR at p0.
    pub achieved_snr: f64,
}

/// Distance-based gain g = d^-kappa.
pub fn path_gain(distance: f64, params: &RadioParams) -> Result<LinkGain, ChannelError> {
    if !(distance > 0.0) {
        return Err(ChannelError::DegenerateGeometry(distance));
    }
    Ok(LinkGain(distance.powf(-params.kappa)))
}

/// Power needed to hit the SNR target over a direct link: gamma * sigma2 / g.
///
/// Not clamped to `p_max`; callers decide what an over-cap requirement means.
pub fn direct_power(g_sd: LinkGain, params: &RadioParams) -> f64 {
    params.gamma * params.sigma2 / g_sd.0
}

/// SNR contribution of one amplify-and-forward relay at the MRC output.
pub fn relay_snr(p0: f64, link: &RelayLink, params: &RadioParams) -> f64 {
    let s2 = params.sigma2;
    let num = p0 * link.relay_power * link.g_sr.0 * link.g_rd.0;
    let den = s2 * (p0 * link.g_sr.0 + link.relay_power * link.g_rd.0 + s2);
    num / den
}

/// MRC output SNR: direct term plus every relay contribution.
pub fn combined_snr(p0: f64, g_sd: LinkGain, relays: &[RelayLink], params: &RadioParams) -> f64 {
    let direct = p0 * g_sd.0 / params.sigma2;
    direct + relays.iter().map(|r| relay_snr(p0, r, params)).sum::<f64>()
}

/// Smallest p0 with combined_snr(p0) = gamma, by bisection on [0, direct_power].
///
/// The combined SNR is strictly increasing in p0 and already reaches gamma at
/// the direct-transmission power, so the bracket always holds. With no relays
/// the direct power is returned exactly.
pub fn solve_source_power(
    g_sd: LinkGain,
    relays: &[RelayLink],
    params: &RadioParams,
) -> PowerSolution {
    let p_d = direct_power(g_sd, params);
    let p0 = if relays.is_empty() {
        p_d
    } else {
        let mut lo = 0.0f64;
        let mut hi = p_d;
        while hi - lo > SOLVER_REL_TOL * hi.max(f64::MIN_POSITIVE) {
            let mid = 0.5 * (lo + hi);
            if combined_snr(mid, g_sd, relays, params) < params.gamma {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };
    PowerSolution {
        p0,
        feasible: p0 <= params.p_max,
        achieved_snr: combined_snr(p0, g_sd, relays, params),
    }
}
