//! Per-user SINR decomposition and achievable sum rate.

use serde::{Deserialize, Serialize};

use crate::beamformers::Combiner;
use crate::channel::Scenario;
use crate::{CMatrix, CVector};

/// Received powers after combining for one user (linear scale).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SinrBreakdown {
    pub p_desired: f64,
    pub p_intra: f64,
    pub p_inter: f64,
    pub p_noise: f64,
}

impl SinrBreakdown {
    /// Zero desired power gives 0 even when the denominator vanishes.
    pub fn sinr(&self) -> f64 {
        if self.p_desired == 0.0 {
            return 0.0;
        }
        self.p_desired / (self.p_intra + self.p_inter + self.p_noise)
    }

    /// `log₂(1 + SINR)`.
    pub fn rate(&self) -> f64 {
        self.sinr().ln_1p() / std::f64::consts::LN_2
    }
}

/// Breakdown for combining vector `w`.
pub fn breakdown_for_vector(w: &CVector, k: usize, scenario: &Scenario) -> SinrBreakdown {
    let g = scenario.effective_channel();
    let h = scenario.interference_matrix();
    let wg = w.adjoint() * g;
    let wh = w.adjoint() * h;
    let p_desired = scenario.p_u * wg[k].norm_sqr();
    let p_intra = scenario.p_u * wg.iter().enumerate().filter(|&(q, _)| q != k).map(|(_, z)| z.norm_sqr()).sum::<f64>();
    let p_inter = scenario.p_i * wh.iter().map(|z| z.norm_sqr()).sum::<f64>();
    let p_noise = scenario.n0 * w.norm_squared();
    SinrBreakdown { p_desired, p_intra, p_inter, p_noise }
}

/// Breakdown for user `k` with `w_k = F_RF f_BB(k)`.
pub fn sinr_breakdown<C: Combiner + ?Sized>(k: usize, combiner: &C, scenario: &Scenario) -> SinrBreakdown {
    let w = combiner.combining_matrix();
    breakdown_for_vector(&w.column(k).into_owned(), k, scenario)
}

/// Breakdowns of every user from one combining matrix.
pub fn sinr_breakdowns(w: &CMatrix, scenario: &Scenario) -> Vec<SinrBreakdown> {
    (0..w.ncols()).map(|k| breakdown_for_vector(&w.column(k).into_owned(), k, scenario)).collect()
}

/// `Σ_k log₂(1 + SINR_k)` in bit/s/Hz; 0 with no users.
pub fn sum_rate<C: Combiner + ?Sized>(combiner: &C, scenario: &Scenario) -> f64 {
    sum_rate_of(&combiner.combining_matrix(), scenario)
}

pub fn sum_rate_of(w: &CMatrix, scenario: &Scenario) -> f64 {
    sinr_breakdowns(w, scenario).iter().map(SinrBreakdown::rate).sum()
}
