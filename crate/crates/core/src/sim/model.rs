//! Emitter and detector parameterization.
//!
//! Every field name carries its unit so the TOML configs read unambiguously.

use serde::{Deserialize, Serialize};

use super::state::Pathway;
use crate::data::C_NM_THZ;
use crate::error::{invalid, Result};

/// Lorentzian-FWHM to Gaussian-σ ratio, 2√(2 ln 2).
pub const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949;
/// Boltzmann constant in meV/K.
pub const K_B_MEV: f64 = 0.086_173_332_62;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmitterModel {
    pub gamma_rad_per_ns: f64,
    pub lifetime_ns: f64,
    pub debye_waller: f64,
    pub p_sat_uw: f64,
    /// Green power giving unit saturation parameter; green excitation is
    /// off-resonant and ignores the detuning.
    pub p_sat_green_uw: f64,
    /// Informational; the detected ceiling is set by the detection model.
    pub i_inf_target_mcps: f64,
    pub gamma_h_ghz: f64,
    pub sigma_inh_ghz: f64,
    /// Detuning-jump target distribution. Empty means Normal(0, σ_inh).
    pub jump_target: Vec<JumpComponent>,
    /// Detuning at t = 0; drawn from the jump target when absent.
    pub initial_detuning_ghz: Option<f64>,
    pub sd_jump_p1: SdJump,
    pub sd_jump_p2: SdJump,
    pub pathway_switch: PathwaySwitch,
    pub shelving: Shelving,
    pub mw: MwResponse,
    pub spectral: SpectralShape,
}

impl Default for EmitterModel {
    fn default() -> Self {
        let lifetime_ns = 1.26;
        Self {
            gamma_rad_per_ns: 1.0 / lifetime_ns,
            lifetime_ns,
            debye_waller: 0.20,
            p_sat_uw: 7.6,
            p_sat_green_uw: 240.0,
            i_inf_target_mcps: 12.5,
            gamma_h_ghz: 1.0 / (2.0 * std::f64::consts::PI * lifetime_ns),
            sigma_inh_ghz: 44.0 / FWHM_PER_SIGMA,
            jump_target: Vec::new(),
            initial_detuning_ghz: None,
            sd_jump_p1: SdJump {
                gamma0_khz: 10.0,
                c_res_khz_per_uw: 3.0,
                c_blue_khz_per_uw: 2.0,
                arrhenius_khz: 110.3,
                activation_mev: 10.0,
            },
            sd_jump_p2: SdJump {
                gamma0_khz: 6.67,
                c_res_khz_per_uw: 2.5,
                c_blue_khz_per_uw: 2.0,
                arrhenius_khz: 1023.0,
                activation_mev: 10.0,
            },
            pathway_switch: PathwaySwitch::default(),
            shelving: Shelving::default(),
            mw: MwResponse::default(),
            spectral: SpectralShape::default(),
        }
    }
}

/// One Gaussian component of the detuning-jump target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JumpComponent {
    pub weight: f64,
    pub mean_ghz: f64,
    pub sigma_ghz: f64,
}

/// γ_sd = γ₀ + c_res·P_res + c_blue·P_blue + A·exp(−E_a/k_B T).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SdJump {
    pub gamma0_khz: f64,
    pub c_res_khz_per_uw: f64,
    pub c_blue_khz_per_uw: f64,
    pub arrhenius_khz: f64,
    pub activation_mev: f64,
}

impl Default for SdJump {
    fn default() -> Self {
        Self {
            gamma0_khz: 0.0,
            c_res_khz_per_uw: 0.0,
            c_blue_khz_per_uw: 0.0,
            arrhenius_khz: 0.0,
            activation_mev: 0.0,
        }
    }
}

impl SdJump {
    /// Jump rate in Hz.
    pub fn rate_hz(&self, temperature_k: f64, p_res_uw: f64, p_blue_uw: f64) -> f64 {
        let thermal = if self.arrhenius_khz == 0.0 {
            0.0
        } else {
            self.arrhenius_khz * (-self.activation_mev / (K_B_MEV * temperature_k)).exp()
        };
        1e3 * (self.gamma0_khz
            + self.c_res_khz_per_uw * p_res_uw
            + self.c_blue_khz_per_uw * p_blue_uw
            + thermal)
    }
}

/// Telegraph switching between the two radiative pathways.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathwaySwitch {
    pub k12_hz: f64,
    pub k21_hz: f64,
    pub k12_blue_hz_per_uw: f64,
    pub k21_blue_hz_per_uw: f64,
    /// Pathway at t = 0; drawn from the stationary occupancy when absent.
    pub initial: Option<Pathway>,
}

impl Default for PathwaySwitch {
    fn default() -> Self {
        Self {
            k12_hz: 0.5,
            k21_hz: 1.5,
            k12_blue_hz_per_uw: 0.05,
            k21_blue_hz_per_uw: 0.0,
            initial: None,
        }
    }
}

/// Metastable shelf with two spin sublevels.
///
/// The defaults reproduce T1 ≈ 5.6 ms and ≈18% pump–probe contrast at 50°
/// under 240 µW green excitation, 5.1 ms at 140° and 1.2 ms at zero field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Shelving {
    /// Entry rates into S↑/S↓ at full excited-state occupation.
    pub kappa_up_hz: f64,
    pub kappa_down_hz: f64,
    pub d_up_hz: f64,
    pub d_down_hz: f64,
    pub r_blue_hz_per_uw: f64,
    pub m0_hz: f64,
    pub m1_hz: f64,
    pub theta_ref_deg: f64,
    pub m_zero_hz: f64,
}

impl Default for Shelving {
    fn default() -> Self {
        Self {
            kappa_up_hz: 77.637,
            kappa_down_hz: 0.0,
            d_up_hz: 158.7887,
            d_down_hz: 2000.0,
            r_blue_hz_per_uw: 0.0,
            m0_hz: 29.04,
            m1_hz: 9.04,
            theta_ref_deg: 140.0,
            m_zero_hz: 1599.13,
        }
    }
}

impl Shelving {
    pub fn mixing_hz(&self, b_field_mt: f64, theta_deg: f64) -> f64 {
        if b_field_mt == 0.0 {
            self.m_zero_hz
        } else {
            let phi = 2.0 * (theta_deg - self.theta_ref_deg).to_radians();
            (self.m0_hz + self.m1_hz * phi.cos()).max(0.0)
        }
    }

    pub fn is_active(&self) -> bool {
        self.kappa_up_hz > 0.0 || self.kappa_down_hz > 0.0
    }
}

/// R_mw(f, P) = R₀·(P/P_ref)·Γ²/(Γ² + (f − f₀)²), powers in mW from dBm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MwResponse {
    pub r0_hz: f64,
    pub p_ref_dbm: f64,
    pub f0_ghz: f64,
    /// Half width of the spin-flip rate line. The default makes the PL
    /// contrast line 200 MHz wide after saturation through the shelf.
    pub gamma_mw_ghz: f64,
}

impl Default for MwResponse {
    fn default() -> Self {
        Self {
            r0_hz: 34.6,
            p_ref_dbm: 0.0,
            f0_ghz: 1.87,
            gamma_mw_ghz: 0.0922,
        }
    }
}

impl MwResponse {
    pub fn flip_rate_hz(&self, frequency_ghz: f64, power_dbm: f64) -> f64 {
        let rel_power = 10f64.powf((power_dbm - self.p_ref_dbm) / 10.0);
        let g2 = self.gamma_mw_ghz * self.gamma_mw_ghz;
        let d = frequency_ghz - self.f0_ghz;
        self.r0_hz * rel_power * g2 / (g2 + d * d)
    }
}

/// Emission spectrum layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectralShape {
    pub zpl_nm: f64,
    /// Pathway-2 ZPL sits this far to the red of pathway 1.
    pub zpl2_offset_nm: f64,
    pub acoustic_gap_thz: f64,
    pub acoustic_sigma_thz: f64,
    /// Share of the phonon sideband in the acoustic peak.
    pub acoustic_fraction: f64,
    pub optical_sidebands_nm: Vec<f64>,
    pub optical_sideband_sigma_nm: f64,
}

impl Default for SpectralShape {
    fn default() -> Self {
        Self {
            zpl_nm: 585.0,
            zpl2_offset_nm: 0.12,
            acoustic_gap_thz: 2.0,
            acoustic_sigma_thz: 0.35,
            acoustic_fraction: 0.3,
            optical_sidebands_nm: vec![631.6, 645.0],
            optical_sideband_sigma_nm: 3.0,
        }
    }
}

impl SpectralShape {
    /// Frequency of the pathway-2 line relative to pathway 1, in GHz
    /// (negative: red shifted).
    pub fn zpl2_offset_ghz(&self) -> f64 {
        let f1 = C_NM_THZ / self.zpl_nm;
        let f2 = C_NM_THZ / (self.zpl_nm + self.zpl2_offset_nm);
        (f2 - f1) * 1e3
    }

    pub fn zpl_center_nm(&self, pathway: Pathway) -> f64 {
        match pathway {
            Pathway::P1 => self.zpl_nm,
            Pathway::P2 => self.zpl_nm + self.zpl2_offset_nm,
        }
    }
}

impl EmitterModel {
    /// Γmax = 1/τ in s⁻¹.
    pub fn gamma_max_per_s(&self) -> f64 {
        self.gamma_rad_per_ns * 1e9
    }

    pub fn sd_jump(&self, pathway: Pathway) -> &SdJump {
        match pathway {
            Pathway::P1 => &self.sd_jump_p1,
            Pathway::P2 => &self.sd_jump_p2,
        }
    }

    /// Line center of `pathway` relative to the pathway-1 line, GHz.
    pub fn line_offset_ghz(&self, pathway: Pathway) -> f64 {
        match pathway {
            Pathway::P1 => 0.0,
            Pathway::P2 => self.spectral.zpl2_offset_ghz(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("gamma_rad_per_ns", self.gamma_rad_per_ns),
            ("lifetime_ns", self.lifetime_ns),
            ("p_sat_uw", self.p_sat_uw),
            ("p_sat_green_uw", self.p_sat_green_uw),
            ("gamma_h_ghz", self.gamma_h_ghz),
            ("sigma_inh_ghz", self.sigma_inh_ghz),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(format!("model.{name} must be positive, got {v}")));
            }
        }
        if (self.gamma_rad_per_ns * self.lifetime_ns - 1.0).abs() > 1e-12 {
            return Err(invalid(format!(
                "model.gamma_rad_per_ns = {} is inconsistent with lifetime_ns = {}",
                self.gamma_rad_per_ns, self.lifetime_ns
            )));
        }
        if !(0.0..=1.0).contains(&self.debye_waller) {
            return Err(invalid("model.debye_waller must lie in [0, 1]"));
        }
        for (i, c) in self.jump_target.iter().enumerate() {
            if !(c.weight >= 0.0 && c.sigma_ghz >= 0.0 && c.mean_ghz.is_finite()) {
                return Err(invalid(format!("model.jump_target[{i}] is malformed")));
            }
        }
        if !self.jump_target.is_empty() && !(self.jump_target.iter().map(|c| c.weight).sum::<f64>() > 0.0) {
            return Err(invalid("model.jump_target weights sum to zero"));
        }
        let sd = [self.sd_jump_p1, self.sd_jump_p2];
        let rates = sd
            .iter()
            .flat_map(|s| [s.gamma0_khz, s.c_res_khz_per_uw, s.c_blue_khz_per_uw, s.arrhenius_khz, s.activation_mev])
            .chain([
                self.pathway_switch.k12_hz,
                self.pathway_switch.k21_hz,
                self.pathway_switch.k12_blue_hz_per_uw,
                self.pathway_switch.k21_blue_hz_per_uw,
                self.shelving.kappa_up_hz,
                self.shelving.kappa_down_hz,
                self.shelving.d_up_hz,
                self.shelving.d_down_hz,
                self.shelving.r_blue_hz_per_uw,
                self.shelving.m_zero_hz,
                self.mw.r0_hz,
            ]);
        for r in rates {
            if !(r >= 0.0 && r.is_finite()) {
                return Err(invalid(format!("rates must be finite and non-negative, got {r}")));
            }
        }
        if self.shelving.m1_hz.abs() > self.shelving.m0_hz {
            return Err(invalid("shelving.m1_hz larger than m0_hz would give negative mixing"));
        }
        if !(self.mw.gamma_mw_ghz > 0.0) {
            return Err(invalid("mw.gamma_mw_ghz must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Band {
    Zpl,
    Psb,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectionModel {
    pub eta: f64,
    pub band: Band,
    pub background_rate_cps: f64,
    /// Multiplier mapping the analytic ceiling onto the measured I∞.
    pub c_cal: f64,
}

impl Default for DetectionModel {
    fn default() -> Self {
        Self {
            eta: 0.10,
            band: Band::All,
            background_rate_cps: 0.0,
            c_cal: 1.0,
        }
    }
}

impl DetectionModel {
    /// Calibration that maps PSB detection with the default η and DW onto a
    /// 12.5 Mc/s saturation ceiling.
    pub fn paper_psb(model: &EmitterModel) -> Self {
        let eta = 0.10;
        let ceiling = eta * (1.0 - model.debye_waller) * model.gamma_max_per_s() / 2.0;
        Self {
            eta,
            band: Band::Psb,
            background_rate_cps: 0.0,
            c_cal: model.i_inf_target_mcps * 1e6 / ceiling,
        }
    }

    pub fn eta_band(&self, debye_waller: f64) -> f64 {
        match self.band {
            Band::Zpl => self.eta * debye_waller,
            Band::Psb => self.eta * (1.0 - debye_waller),
            Band::All => self.eta,
        }
    }

    /// Probability that one emitted photon is recorded.
    pub fn p_detect(&self, debye_waller: f64) -> f64 {
        (self.c_cal * self.eta_band(debye_waller)).min(1.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(invalid("detection.eta must lie in (0, 1]"));
        }
        if !(self.background_rate_cps >= 0.0 && self.background_rate_cps.is_finite()) {
            return Err(invalid("detection.background_rate_cps must be non-negative"));
        }
        if !(self.c_cal > 0.0 && self.c_cal.is_finite()) {
            return Err(invalid("detection.c_cal must be positive"));
        }
        Ok(())
    }
}
