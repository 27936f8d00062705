use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::analog::{
    allocate_factors, design_column, enhancement_score, measure_matrix_full, measure_matrix_los, AnalogColumn,
    EnhanceMode, FactorAssignment, NullingRule, ScenarioFactors,
};
use super::digital::{mmse_digital, pure_mmse_combiner};
use crate::channel::Scenario;
use crate::kron::PhaseVector;
use crate::{CMatrix, CVector, Error, Result};

/// Cap on `D!/(D−Γ)!` for the exhaustive baseline.
pub const DEFAULT_SEARCH_LIMIT: u128 = 1_000_000;

/// Anything that yields the effective combining matrix `W` (MN × K), whose
/// column `k` is applied to the received signal to estimate user `k`.
pub trait Combiner {
    fn combining_matrix(&self) -> CMatrix;
}

/// Analog matrix with one RF chain per user and a `K × K` digital stage.
#[derive(Debug, Clone)]
pub struct HybridBeamformer {
    pub f_rf: CMatrix,
    pub f_bb: CMatrix,
    /// Design record per user. Empty for schemes without Kronecker structure.
    pub columns: Vec<AnalogColumn>,
}

impl HybridBeamformer {
    /// Stacks the analog columns and solves the MMSE digital stage.
    pub fn from_analog(f_rf: Vec<PhaseVector>, columns: Vec<AnalogColumn>, scenario: &Scenario) -> Result<Self> {
        let cols: Vec<CVector> = f_rf.iter().map(|p| CVector::from_column_slice(p.as_slice())).collect();
        let f_rf = CMatrix::from_columns(&cols);
        let f_bb = mmse_digital(&f_rf, scenario)?;
        Ok(Self { f_rf, f_bb, columns })
    }

    fn from_columns(columns: Vec<AnalogColumn>, scenario: &Scenario) -> Result<Self> {
        let f = columns.iter().map(|c| c.f_rf.clone()).collect();
        Self::from_analog(f, columns, scenario)
    }

    pub fn num_rf_chains(&self) -> usize {
        self.f_rf.ncols()
    }
}

impl Combiner for HybridBeamformer {
    fn combining_matrix(&self) -> CMatrix {
        &self.f_rf * &self.f_bb
    }
}

/// Fully digital combiner (one RF chain per antenna).
#[derive(Debug, Clone)]
pub struct DigitalCombiner {
    pub w: CMatrix,
}

impl Combiner for DigitalCombiner {
    fn combining_matrix(&self) -> CMatrix {
        self.w.clone()
    }
}

/// Knobs shared by the Kronecker designs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesignOptions {
    pub nulling: NullingRule,
    pub search_limit: u128,
}

impl Default for DesignOptions {
    fn default() -> Self {
        Self { nulling: NullingRule::Exact, search_limit: DEFAULT_SEARCH_LIMIT }
    }
}

/// `|f_RF(k)ᴴ G_k v_k|²`, the analog-stage desired power of user `k`.
pub fn analog_desired_power(f_rf: &CMatrix, scenario: &Scenario, k: usize) -> f64 {
    f_rf.column(k).dotc(&scenario.effective_channel().column(k)).norm_sqr()
}

fn column_power(col: &AnalogColumn, scenario: &Scenario, k: usize) -> f64 {
    col.f_rf.inner(scenario.effective_channel().column(k).as_slice()).norm_sqr()
}

/// Greedy allocation against the full multipath measure, then
/// rearrangement and multipath enhancement.
pub fn build_alg3(scenario: &Scenario) -> Result<HybridBeamformer> {
    build_alg3_with(scenario, &DesignOptions::default())
}

pub fn build_alg3_with(scenario: &Scenario, opts: &DesignOptions) -> Result<HybridBeamformer> {
    let sf = ScenarioFactors::new(scenario, opts.nulling)?;
    let columns = (0..scenario.num_users())
        .map(|k| {
            let a = allocate_factors(&measure_matrix_full(&sf, k)?)?;
            design_column(&sf, k, &a, EnhanceMode::Full)
        })
        .collect::<Result<Vec<_>>>()?;
    HybridBeamformer::from_columns(columns, scenario)
}

/// Low-complexity variant: allocation and enhancement use the LoS path
/// only. With `aoa_changed == false` and a cache of `K` columns the analog
/// stage is reused as is; the digital stage is always recomputed.
pub fn build_alg4(scenario: &Scenario, cache: Option<&[AnalogColumn]>, aoa_changed: bool) -> Result<HybridBeamformer> {
    build_alg4_with(scenario, cache, aoa_changed, &DesignOptions::default())
}

pub fn build_alg4_with(
    scenario: &Scenario,
    cache: Option<&[AnalogColumn]>,
    aoa_changed: bool,
    opts: &DesignOptions,
) -> Result<HybridBeamformer> {
    if let (Some(cached), false) = (cache, aoa_changed) {
        if cached.len() == scenario.num_users() {
            return HybridBeamformer::from_columns(cached.to_vec(), scenario);
        }
    }
    let sf = ScenarioFactors::new(scenario, opts.nulling)?;
    let columns = (0..scenario.num_users())
        .map(|k| {
            let a = allocate_factors(&measure_matrix_los(&sf, k)?)?;
            design_column(&sf, k, &a, EnhanceMode::LosOnly)
        })
        .collect::<Result<Vec<_>>>()?;
    HybridBeamformer::from_columns(columns, scenario)
}

/// Calls `visit` with every injective map `ε → d` (as `d` per `ε`), in
/// lexicographic order.
fn for_each_injection(d: usize, g: usize, visit: &mut impl FnMut(&[usize])) {
    fn rec(d: usize, g: usize, used: &mut [bool], cur: &mut Vec<usize>, visit: &mut impl FnMut(&[usize])) {
        if cur.len() == g {
            visit(cur);
            return;
        }
        for i in 0..d {
            if !used[i] {
                used[i] = true;
                cur.push(i);
                rec(d, g, used, cur, visit);
                cur.pop();
                used[i] = false;
            }
        }
    }
    rec(d, g, &mut vec![false; d], &mut Vec::with_capacity(g), visit);
}

fn injection_count(d: usize, g: usize) -> u128 {
    if g > d {
        return 0;
    }
    ((d - g + 1)..=d).map(|x| x as u128).product()
}

fn assignment_from(ds: &[usize]) -> FactorAssignment {
    FactorAssignment::new(ds.iter().enumerate().map(|(e, &d)| (d, e)).collect(), ds.len())
        .expect("injection is a valid assignment")
}

/// Best assignment per user over every injective `ε → d` map, measured by
/// the analog desired power `|f_RFᴴ G_k v_k|²`.
pub fn baseline_exhaustive(scenario: &Scenario) -> Result<HybridBeamformer> {
    baseline_exhaustive_with(scenario, &DesignOptions::default())
}

pub fn baseline_exhaustive_with(scenario: &Scenario, opts: &DesignOptions) -> Result<HybridBeamformer> {
    let sf = ScenarioFactors::new(scenario, opts.nulling)?;
    let d = sf.num_factors();
    let g = sf.num_components();
    let count = injection_count(d, g);
    if count > opts.search_limit {
        return Err(Error::SearchTooLarge { candidates: count, limit: opts.search_limit });
    }
    let columns = (0..scenario.num_users())
        .map(|k| {
            // Screen with the closed-form objective, then rebuild the
            // near-best candidates and compare the realized powers.
            let mut top = 0.0f64;
            for_each_injection(d, g, &mut |ds| top = top.max(enhancement_score(&sf, k, &assignment_from(ds))));
            let cutoff = top * (1.0 - 1e-9);
            let mut best: Option<(f64, AnalogColumn)> = None;
            let mut err = None;
            for_each_injection(d, g, &mut |ds| {
                if err.is_some() {
                    return;
                }
                let a = assignment_from(ds);
                if enhancement_score(&sf, k, &a) < cutoff {
                    return;
                }
                match design_column(&sf, k, &a, EnhanceMode::Full) {
                    Ok(col) => {
                        let p = column_power(&col, scenario, k);
                        if best.as_ref().is_none_or(|(b, _)| p > *b) {
                            best = Some((p, col));
                        }
                    }
                    Err(e) => err = Some(e),
                }
            });
            if let Some(e) = err {
                return Err(e);
            }
            Ok(best.expect("at least one candidate survives the screen").1)
        })
        .collect::<Result<Vec<_>>>()?;
    HybridBeamformer::from_columns(columns, scenario)
}

/// Factors used in natural order: factor `d = ε` nulls component `ε`.
pub fn baseline_successive_khb(scenario: &Scenario) -> Result<HybridBeamformer> {
    baseline_successive_khb_with(scenario, &DesignOptions::default())
}

pub fn baseline_successive_khb_with(scenario: &Scenario, opts: &DesignOptions) -> Result<HybridBeamformer> {
    let sf = ScenarioFactors::new(scenario, opts.nulling)?;
    let a = FactorAssignment::natural(sf.num_components());
    let columns = (0..scenario.num_users())
        .map(|k| design_column(&sf, k, &a, EnhanceMode::Full))
        .collect::<Result<Vec<_>>>()?;
    HybridBeamformer::from_columns(columns, scenario)
}

/// Equal-gain combining: `f_RF(k) = exp(j angle(G_k v_k))`, no nulling.
pub fn baseline_egc(scenario: &Scenario) -> Result<HybridBeamformer> {
    let g = scenario.effective_channel();
    let f = (0..scenario.num_users())
        .map(|k| PhaseVector::phase_of(g.column(k).as_slice()))
        .collect();
    HybridBeamformer::from_analog(f, Vec::new(), scenario)
}

/// Fully digital MMSE over all `MN` antennas.
pub fn baseline_pure_mmse(scenario: &Scenario) -> Result<DigitalCombiner> {
    Ok(DigitalCombiner { w: pure_mmse_combiner(scenario)? })
}

/// The six compared schemes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Mmse,
    Exhaustive,
    Alg3,
    Alg4,
    SuccessiveKhb,
    EgcMmse,
}

impl Scheme {
    pub const ALL: [Scheme; 6] =
        [Scheme::Mmse, Scheme::Exhaustive, Scheme::Alg3, Scheme::Alg4, Scheme::SuccessiveKhb, Scheme::EgcMmse];

    pub fn id(self) -> &'static str {
        match self {
            Scheme::Mmse => "mmse",
            Scheme::Exhaustive => "exhaustive",
            Scheme::Alg3 => "alg3",
            Scheme::Alg4 => "alg4",
            Scheme::SuccessiveKhb => "successive_khb",
            Scheme::EgcMmse => "egc_mmse",
        }
    }

    /// Whether the analog stage nulls every interference path.
    pub fn is_nulling(self) -> bool {
        matches!(self, Scheme::Exhaustive | Scheme::Alg3 | Scheme::Alg4 | Scheme::SuccessiveKhb)
    }

    /// Builds the scheme's combiner on `scenario`. Alg4 runs without a cache.
    pub fn build(self, scenario: &Scenario, opts: &DesignOptions) -> Result<SchemeOutput> {
        Ok(match self {
            Scheme::Mmse => SchemeOutput::Digital(baseline_pure_mmse(scenario)?),
            Scheme::Exhaustive => SchemeOutput::Hybrid(baseline_exhaustive_with(scenario, opts)?),
            Scheme::Alg3 => SchemeOutput::Hybrid(build_alg3_with(scenario, opts)?),
            Scheme::Alg4 => SchemeOutput::Hybrid(build_alg4_with(scenario, None, true, opts)?),
            Scheme::SuccessiveKhb => SchemeOutput::Hybrid(baseline_successive_khb_with(scenario, opts)?),
            Scheme::EgcMmse => SchemeOutput::Hybrid(baseline_egc(scenario)?),
        })
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|x| x.id() == s)
            .ok_or_else(|| Error::Config(format!("unknown scheme `{s}`")))
    }
}

/// Result of [`Scheme::build`].
#[derive(Debug, Clone)]
pub enum SchemeOutput {
    Hybrid(HybridBeamformer),
    Digital(DigitalCombiner),
}

impl SchemeOutput {
    pub fn as_hybrid(&self) -> Option<&HybridBeamformer> {
        match self {
            SchemeOutput::Hybrid(h) => Some(h),
            SchemeOutput::Digital(_) => None,
        }
    }
}

impl Combiner for SchemeOutput {
    fn combining_matrix(&self) -> CMatrix {
        match self {
            SchemeOutput::Hybrid(h) => h.combining_matrix(),
            SchemeOutput::Digital(d) => d.combining_matrix(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{
        gen_interference_channel, gen_user_channel, upa_steering, ArrayGeometry, ChannelParams, Path, PathAngles,
        UserChannel,
    };
    use num_complex::Complex64;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scenario(seed: u64, m: usize, n: usize, k: usize, gammas: &[usize], l: usize) -> Scenario {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let geo = ArrayGeometry::new(m, n, 2).unwrap();
        let params = ChannelParams { paths_per_user: l, ..ChannelParams::default() };
        let users = (0..k).map(|_| gen_user_channel(&geo, &params, &mut rng).unwrap()).collect();
        let ints = gammas.iter().map(|&g| gen_interference_channel(&geo, g, &mut rng).unwrap()).collect();
        Scenario::new(geo, users, ints, 1.0, 1.0, 0.01).unwrap()
    }

    fn max_path_residual(f_rf: &CMatrix, sc: &Scenario) -> f64 {
        let mn = sc.geometry.num_elements() as f64;
        let mut worst = 0.0f64;
        for int in &sc.interferers {
            for p in &int.paths {
                let a = upa_steering(p.angles.phi_r, p.angles.theta_r, &sc.geometry);
                for k in 0..f_rf.ncols() {
                    let r = a.as_slice().iter().zip(f_rf.column(k).iter()).map(|(x, f)| f.conj() * x).sum::<Complex64>();
                    worst = worst.max(r.norm() / mn);
                }
            }
        }
        worst
    }

    #[test]
    fn nulling_schemes_null_every_path() {
        for seed in 0..20 {
            let sc = scenario(seed, 8, 16, 4, &[1, 1], 2);
            for scheme in Scheme::ALL.into_iter().filter(|s| s.is_nulling()) {
                let out = scheme.build(&sc, &DesignOptions::default()).unwrap();
                let h = out.as_hybrid().unwrap();
                assert!(max_path_residual(&h.f_rf, &sc) <= 1e-12, "{scheme}");
                assert!(h.f_rf.iter().all(|z| (z.norm() - 1.0).abs() < 1e-12));
                for col in &h.columns {
                    let rec = col.reconstruct();
                    assert!(rec.iter().zip(col.f_rf.as_slice()).all(|(a, b)| (a - b).norm() < 1e-12));
                }
            }
        }
    }

    #[test]
    fn default_relative_residual_bound() {
        let sc = scenario(99, 8, 16, 4, &[1, 1], 2);
        for h in [build_alg3(&sc).unwrap(), build_alg4(&sc, None, true).unwrap()] {
            for int in &sc.interferers {
                for k in 0..4 {
                    let f = h.f_rf.column(k);
                    let r = f.dotc(&int.h).norm_sqr() / (f.norm_squared() * int.h.norm_squared());
                    assert!(r <= 1e-20, "relative residual {r}");
                }
            }
        }
    }

    #[test]
    fn egc_does_not_null() {
        let mut leaks = Vec::new();
        for seed in 0..21 {
            let sc = scenario(seed, 8, 16, 4, &[1, 1], 2);
            let h = baseline_egc(&sc).unwrap();
            let f = h.f_rf.column(0);
            let int = &sc.interferers[0].h;
            leaks.push(f.dotc(int).norm_sqr() / (f.norm_squared() * int.norm_squared()));
        }
        leaks.sort_by(f64::total_cmp);
        assert!(leaks[10] > 1e-6, "{leaks:?}");
    }

    #[test]
    fn egc_examples() {
        let geo = ArrayGeometry::new(2, 4, 1).unwrap();
        let angles = PathAngles { phi_r: 0.9, theta_r: 1.2, phi_t: 0.0 };
        let alpha = Complex64::from_polar(0.8, 2.1);
        let user = UserChannel::from_paths(vec![Path { alpha, angles }], &geo).unwrap();
        let sc = Scenario::new(geo, vec![user], Vec::new(), 1.0, 1.0, 0.1).unwrap();
        let h = baseline_egc(&sc).unwrap();
        let p = analog_desired_power(&h.f_rf, &sc, 0);
        assert!((p.sqrt() - 8.0 * 0.8).abs() < 1e-12);
    }

    #[test]
    fn no_interference_is_pure_phase_matching() {
        let sc = scenario(4, 4, 8, 3, &[], 2);
        let a3 = build_alg3(&sc).unwrap();
        let egc = baseline_egc(&sc).unwrap();
        assert!((&a3.f_rf - &egc.f_rf).norm() < 1e-9);
        let ex = baseline_exhaustive(&sc).unwrap();
        let khb = baseline_successive_khb(&sc).unwrap();
        assert_eq!(ex.f_rf, a3.f_rf);
        assert_eq!(khb.f_rf, a3.f_rf);
    }

    #[test]
    fn small_array_single_interferer() {
        for seed in 0..30 {
            let sc = scenario(200 + seed, 2, 2, 1, &[1], 2);
            let a3 = build_alg3(&sc).unwrap();
            let khb = baseline_successive_khb(&sc).unwrap();
            let ex = baseline_exhaustive(&sc).unwrap();
            assert!(max_path_residual(&a3.f_rf, &sc) <= 1e-12);
            // Exactly two candidates.
            let sf = ScenarioFactors::new(&sc, NullingRule::Exact).unwrap();
            let best = (0..2)
                .map(|d| {
                    let a = FactorAssignment::new(vec![(d, 0)], 1).unwrap();
                    column_power(&design_column(&sf, 0, &a, EnhanceMode::Full).unwrap(), &sc, 0)
                })
                .fold(0.0, f64::max);
            assert_eq!(analog_desired_power(&ex.f_rf, &sc, 0), best);
            assert!(analog_desired_power(&ex.f_rf, &sc, 0) >= analog_desired_power(&khb.f_rf, &sc, 0));
        }
    }

    #[test]
    fn exhaustive_dominates_alg3() {
        for seed in 0..20 {
            let sc = scenario(300 + seed, 8, 16, 4, &[1, 1], 2);
            let a3 = build_alg3(&sc).unwrap();
            let ex = baseline_exhaustive(&sc).unwrap();
            for k in 0..4 {
                let pe = analog_desired_power(&ex.f_rf, &sc, k);
                let pa = analog_desired_power(&a3.f_rf, &sc, k);
                assert!(pe >= pa && pa >= 0.0, "seed {seed} user {k}: {pe} < {pa}");
            }
        }
    }

    #[test]
    fn alg4_cache_semantics() {
        let sc = scenario(5, 8, 16, 4, &[1, 1], 2);
        let first = build_alg4(&sc, None, true).unwrap();
        let other = sc.with_powers(1.0, 10.0, 0.1).unwrap();
        let reused = build_alg4(&other, Some(&first.columns), false).unwrap();
        assert_eq!(reused.f_rf, first.f_rf);
        assert_ne!(reused.f_bb, first.f_bb);
    }

    #[test]
    fn alg4_equals_alg3_for_los_only_channels() {
        for seed in 0..20 {
            let sc = scenario(400 + seed, 8, 16, 4, &[1, 1], 1);
            let a3 = build_alg3(&sc).unwrap();
            let a4 = build_alg4(&sc, None, true).unwrap();
            for (c3, c4) in a3.columns.iter().zip(&a4.columns) {
                assert_eq!(c3.assignment, c4.assignment);
                // Same column up to one global phase.
                let x = c3.f_rf.inner(c4.f_rf.as_slice());
                assert!((x.norm() - c3.f_rf.len() as f64).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn infeasible_configuration_is_reported() {
        let sc = scenario(6, 2, 4, 4, &[1, 1], 2);
        assert!(matches!(build_alg3(&sc), Err(Error::Infeasible { .. })));
        assert!(matches!(build_alg4(&sc, None, true), Err(Error::Infeasible { .. })));
        assert!(matches!(baseline_exhaustive(&sc), Err(Error::Infeasible { .. })));
        assert!(baseline_egc(&sc).is_ok());
        assert!(baseline_pure_mmse(&sc).is_ok());
    }

    #[test]
    fn search_guard() {
        let sc = scenario(7, 8, 16, 1, &[3], 2);
        let opts = DesignOptions { search_limit: 100, ..DesignOptions::default() };
        assert!(matches!(baseline_exhaustive_with(&sc, &opts), Err(Error::SearchTooLarge { candidates: 210, .. })));
        assert_eq!(injection_count(7, 2), 42);
        assert_eq!(injection_count(2, 3), 0);
        let mut n = 0;
        for_each_injection(4, 2, &mut |_| n += 1);
        assert_eq!(n, 12);
    }

    #[test]
    fn corrupted_nulling_leaks() {
        let sc = scenario(8, 8, 16, 4, &[1, 1], 2);
        let opts = DesignOptions { nulling: NullingRule::SignFlipped, ..DesignOptions::default() };
        let h = build_alg3_with(&sc, &opts).unwrap();
        assert!(max_path_residual(&h.f_rf, &sc) > 1e-6);
    }

    #[test]
    fn scheme_ids_round_trip() {
        for s in Scheme::ALL {
            assert_eq!(s.id().parse::<Scheme>().unwrap(), s);
        }
        assert!("bfgs".parse::<Scheme>().is_err());
    }
}
