//! Simulation configuration: defaults, flat TOML files and `KEY=VALUE`
//! overrides.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::beamformers::Scheme;
use crate::channel::{ArrayGeometry, ChannelParams};
use crate::{Error, Result};

/// Paths per interferer: one count for all, or one per interferer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GammaPsi {
    Uniform(usize),
    PerInterferer(Vec<usize>),
}

impl GammaPsi {
    /// Expands to one count per interferer.
    pub fn resolve(&self, psi: usize) -> Result<Vec<usize>> {
        let out = match self {
            GammaPsi::Uniform(g) => vec![*g; psi],
            GammaPsi::PerInterferer(v) => {
                if v.len() != psi {
                    return Err(Error::Config(format!("Gamma_psi lists {} entries but Psi = {psi}", v.len())));
                }
                v.clone()
            }
        };
        if out.contains(&0) {
            return Err(Error::Config("every Gamma_psi entry must be at least 1".into()));
        }
        Ok(out)
    }
}

/// The parameter axis swept by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Axis {
    #[serde(rename = "snr_dB")]
    SnrDb,
    #[serde(rename = "isr_dB")]
    IsrDb,
    #[serde(rename = "N_columns")]
    NColumns,
    #[serde(rename = "Gamma")]
    Gamma,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::SnrDb => "snr_dB",
            Axis::IsrDb => "isr_dB",
            Axis::NColumns => "N_columns",
            Axis::Gamma => "Gamma",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        [Axis::SnrDb, Axis::IsrDb, Axis::NColumns, Axis::Gamma]
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown sweep axis `{s}`")))
    }
}

/// Every knob of a simulation run. Unset keys take the reference defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    /// Users per cell.
    #[serde(rename = "K")]
    pub users: usize,
    /// UE antennas.
    #[serde(rename = "Q")]
    pub ue_antennas: usize,
    /// Paths per user, LoS included.
    #[serde(rename = "L")]
    pub paths_per_user: usize,
    /// UPA rows.
    #[serde(rename = "M")]
    pub rows: usize,
    /// UPA columns.
    #[serde(rename = "N")]
    pub cols: usize,
    /// Interfering UEs from other cells.
    #[serde(rename = "Psi")]
    pub interferers: usize,
    #[serde(rename = "Gamma_psi")]
    pub gamma_psi: GammaPsi,
    pub kappa_db: f64,
    pub snr_db: f64,
    pub isr_db: f64,
    pub cell_radius_m: f64,
    pub bs_height_m: f64,
    pub ue_height_range_m: [f64; 2],
    /// Full widths of the NLoS angular spreads `(horizontal, vertical)`.
    pub spread_h_rad: f64,
    pub spread_v_rad: f64,
    /// Element spacings in wavelengths.
    pub d_h: f64,
    pub d_v: f64,
    pub d_t: f64,
    /// Frames per trial with fixed angles and redrawn NLoS gains. Values
    /// above 1 let Alg4 reuse its analog stage after the first frame.
    pub fading_frames: usize,
    pub trials: usize,
    pub master_seed: u64,
    pub schemes: Vec<Scheme>,
    pub sweep_axis: Option<Axis>,
    pub sweep_values: Option<Vec<f64>>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            users: 4,
            ue_antennas: 2,
            paths_per_user: 2,
            rows: 8,
            cols: 16,
            interferers: 2,
            gamma_psi: GammaPsi::Uniform(1),
            kappa_db: 5.0,
            snr_db: 20.0,
            isr_db: 0.0,
            cell_radius_m: 100.0,
            bs_height_m: 10.0,
            ue_height_range_m: [1.5, 22.5],
            spread_h_rad: PI,
            spread_v_rad: PI / 2.0,
            d_h: 0.5,
            d_v: 0.5,
            d_t: 0.5,
            fading_frames: 1,
            trials: 500,
            master_seed: 1,
            schemes: Scheme::ALL.to_vec(),
            sweep_axis: None,
            sweep_values: None,
        }
    }
}

fn parse_override_value(key: &str, raw: &str) -> toml::Value {
    if let Ok(mut t) = toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        if let Some(v) = t.remove("v") {
            return v;
        }
    }
    // Bare comma lists: `1,2,3` or `mmse,alg3`.
    if raw.contains(',') || key == "schemes" {
        if let Ok(mut t) = toml::from_str::<toml::Table>(&format!("v = [{raw}]")) {
            if let Some(v) = t.remove("v") {
                return v;
            }
        }
        return toml::Value::Array(raw.split(',').map(|s| toml::Value::String(s.trim().to_string())).collect());
    }
    toml::Value::String(raw.to_string())
}

/// Splits `KEY=VALUE`.
pub fn parse_assignment(s: &str) -> Result<(String, String)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{s}` is not of the form KEY=VALUE")))?;
    let k = k.trim();
    if k.is_empty() {
        return Err(Error::Config(format!("override `{s}` has an empty key")));
    }
    Ok((k.to_string(), v.trim().to_string()))
}

impl SimConfig {
    /// Defaults, then the TOML text, then the overrides in order.
    pub fn from_layers(file_text: Option<&str>, overrides: &[(String, String)]) -> Result<Self> {
        let mut table = match file_text {
            Some(text) => toml::from_str::<toml::Table>(text).map_err(|e| Error::Config(e.message().to_string()))?,
            None => toml::Table::new(),
        };
        for (k, v) in overrides {
            table.insert(k.clone(), parse_override_value(k, v));
        }
        let cfg: SimConfig =
            toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path` (if any) and applies the overrides.
    pub fn load(path: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let text = match path {
            Some(p) => Some(
                std::fs::read_to_string(p).map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?,
            ),
            None => None,
        };
        Self::from_layers(text.as_deref(), overrides)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("K", self.users),
            ("Q", self.ue_antennas),
            ("L", self.paths_per_user),
            ("M", self.rows),
            ("N", self.cols),
            ("trials", self.trials),
            ("fading_frames", self.fading_frames),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        self.gamma_psi.resolve(self.interferers)?;
        let finite = [
            ("kappa_db", self.kappa_db),
            ("snr_db", self.snr_db),
            ("isr_db", self.isr_db),
        ];
        for (name, v) in finite {
            if !v.is_finite() {
                return Err(Error::Config(format!("{name} must be finite")));
            }
        }
        let nonneg = [
            ("cell_radius_m", self.cell_radius_m),
            ("bs_height_m", self.bs_height_m),
            ("spread_h_rad", self.spread_h_rad),
            ("spread_v_rad", self.spread_v_rad),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be finite and nonnegative")));
            }
        }
        let [lo, hi] = self.ue_height_range_m;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::Config("ue_height_range_m must be [low, high] with low <= high".into()));
        }
        for (name, v) in [("d_h", self.d_h), ("d_v", self.d_v), ("d_t", self.d_t)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.schemes.is_empty() {
            return Err(Error::Config("schemes must list at least one scheme".into()));
        }
        if self.sweep_values.as_ref().is_some_and(|v| v.iter().any(|x| !x.is_finite())) {
            return Err(Error::Config("sweep_values must be finite".into()));
        }
        Ok(())
    }

    pub fn geometry(&self) -> Result<ArrayGeometry> {
        ArrayGeometry::with_spacing(self.rows, self.cols, self.ue_antennas, self.d_h, self.d_v, self.d_t)
            .map_err(|e| Error::Config(e.to_string()))
    }

    pub fn channel_params(&self) -> ChannelParams {
        ChannelParams {
            kappa: 10f64.powf(self.kappa_db / 10.0),
            paths_per_user: self.paths_per_user,
            cell_radius_m: self.cell_radius_m,
            bs_height_m: self.bs_height_m,
            ue_height_min_m: self.ue_height_range_m[0],
            ue_height_max_m: self.ue_height_range_m[1],
            spread_h: self.spread_h_rad,
            spread_v: self.spread_v_rad,
        }
    }

    /// `(P_U, P_I, N0)`: unit user power, `P_I = P_U·10^{ISR/10}`,
    /// `N0 = P_U·10^{−SNR/10}`.
    pub fn powers(&self) -> (f64, f64, f64) {
        let p_u = 1.0;
        (p_u, p_u * 10f64.powf(self.isr_db / 10.0), p_u * 10f64.powf(-self.snr_db / 10.0))
    }

    pub fn gamma_counts(&self) -> Result<Vec<usize>> {
        self.gamma_psi.resolve(self.interferers)
    }

    /// Canonical JSON used for fingerprinting and result files.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// Hex SHA-256 of [`Self::canonical_json`].
    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }

    /// Returns a copy with `axis` set to `value`.
    pub fn with_axis(&self, axis: Axis, value: f64) -> Result<Self> {
        let mut c = self.clone();
        let as_count = |v: f64| -> Result<usize> {
            if v >= 1.0 && v.fract() == 0.0 && v <= usize::MAX as f64 {
                Ok(v as usize)
            } else {
                Err(Error::Config(format!("{} values must be positive integers, got {v}", axis.name())))
            }
        };
        match axis {
            Axis::SnrDb => c.snr_db = value,
            Axis::IsrDb => c.isr_db = value,
            Axis::NColumns => c.cols = as_count(value)?,
            Axis::Gamma => c.gamma_psi = GammaPsi::Uniform(as_count(value)?),
        }
        c.validate()?;
        Ok(c)
    }
}
