//! Seeded Monte-Carlo trials and parameter sweeps.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{Axis, SimConfig};
use crate::beamformers::{
    analog_desired_power, build_alg4, AnalogColumn, Combiner, DesignOptions, Scheme, SchemeOutput,
};
use crate::channel::{gen_interference_channel, gen_user_channel, redraw_nlos_gains, upa_steering, Scenario};
use crate::metrics::sum_rate_of;
use crate::{CMatrix, Error, Result};

const USER_STREAM: u64 = 0;
const INTERFERER_STREAM: u64 = 1;
const FADING_STREAM: u64 = 2;

/// Independent generator for one `(master_seed, trial, stream)` triple.
pub fn trial_rng(master_seed: u64, trial_index: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(master_seed);
    rng.set_stream(trial_index.wrapping_mul(4).wrapping_add(stream));
    rng
}

/// The channel realization of trial `trial_index`.
///
/// Users and interferers come from separate streams, so changing the
/// interference setup leaves the user channels of a trial untouched.
pub fn generate_scenario(config: &SimConfig, trial_index: u64) -> Result<Scenario> {
    let geo = config.geometry()?;
    let params = config.channel_params();
    let mut urng = trial_rng(config.master_seed, trial_index, USER_STREAM);
    let users = (0..config.users)
        .map(|_| gen_user_channel(&geo, &params, &mut urng))
        .collect::<Result<Vec<_>>>()?;
    let mut irng = trial_rng(config.master_seed, trial_index, INTERFERER_STREAM);
    let interferers = config
        .gamma_counts()?
        .into_iter()
        .map(|g| gen_interference_channel(&geo, g, &mut irng))
        .collect::<Result<Vec<_>>>()?;
    let (p_u, p_i, n0) = config.powers();
    Scenario::new(geo, users, interferers, p_u, p_i, n0)
}

/// Largest per-path relative residual `|f_RF(k)ᴴ a_r| / MN` over all users
/// and interference paths.
pub fn max_nulling_residual(f_rf: &CMatrix, scenario: &Scenario) -> f64 {
    let mn = scenario.geometry.num_elements() as f64;
    let mut worst = 0.0f64;
    for p in scenario.interferers.iter().flat_map(|i| i.paths.iter()) {
        let a = upa_steering(p.angles.phi_r, p.angles.theta_r, &scenario.geometry);
        let a = crate::CVector::from_column_slice(a.as_slice());
        for k in 0..f_rf.ncols() {
            worst = worst.max(f_rf.column(k).dotc(&a).norm() / mn);
        }
    }
    worst
}

/// One scheme's outcome in one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeResult {
    pub scheme: Scheme,
    /// Sum rate in bit/s/Hz, averaged over fading frames.
    pub rate: Option<f64>,
    /// Worst nulling residual over frames (hybrid schemes only).
    pub max_residual: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub trial_index: u64,
    pub results: Vec<SchemeResult>,
    /// Users whose exhaustive analog desired power fell below Alg3's
    /// (expected to stay 0; logged when both schemes run).
    pub dominance_violations: usize,
}

impl TrialOutcome {
    pub fn rate(&self, scheme: Scheme) -> Option<f64> {
        self.results.iter().find(|r| r.scheme == scheme).and_then(|r| r.rate)
    }
}

struct Accum {
    rate_sum: f64,
    residual: Option<f64>,
    error: Option<String>,
}

/// Runs every configured scheme on trial `trial_index`.
///
/// With `fading_frames = F > 1` the trial keeps its angles and LoS gains for
/// `F` frames and redraws the NLoS gains each frame; Alg4 designs its analog
/// stage on the first frame and reuses it afterwards.
pub fn run_trial(config: &SimConfig, trial_index: u64) -> Result<TrialOutcome> {
    let opts = DesignOptions::default();
    let mut scenario = generate_scenario(config, trial_index)?;
    let geo = scenario.geometry;
    let params = config.channel_params();
    let mut frng = trial_rng(config.master_seed, trial_index, FADING_STREAM);
    let mut acc: Vec<Accum> =
        config.schemes.iter().map(|_| Accum { rate_sum: 0.0, residual: None, error: None }).collect();
    let mut alg4_cache: Option<Vec<AnalogColumn>> = None;
    let mut violations = 0;
    for frame in 0..config.fading_frames {
        if frame > 0 {
            let users = scenario
                .users
                .iter()
                .map(|u| redraw_nlos_gains(u, &geo, &params, &mut frng))
                .collect::<Result<Vec<_>>>()?;
            scenario = Scenario::new(geo, users, scenario.interferers.clone(), scenario.p_u, scenario.p_i, scenario.n0)?;
        }
        let mut alg3_f: Option<CMatrix> = None;
        let mut exh_f: Option<CMatrix> = None;
        for (scheme, a) in config.schemes.iter().zip(acc.iter_mut()) {
            if a.error.is_some() {
                continue;
            }
            let built = match scheme {
                Scheme::Alg4 => build_alg4(&scenario, alg4_cache.as_deref(), frame == 0).map(|h| {
                    alg4_cache = Some(h.columns.clone());
                    SchemeOutput::Hybrid(h)
                }),
                s => s.build(&scenario, &opts),
            };
            match built {
                Ok(out) => {
                    a.rate_sum += sum_rate_of(&out.combining_matrix(), &scenario);
                    if let Some(h) = out.as_hybrid() {
                        let r = max_nulling_residual(&h.f_rf, &scenario);
                        a.residual = Some(a.residual.map_or(r, |x: f64| x.max(r)));
                        match scheme {
                            Scheme::Alg3 => alg3_f = Some(h.f_rf.clone()),
                            Scheme::Exhaustive => exh_f = Some(h.f_rf.clone()),
                            _ => {}
                        }
                    }
                }
                Err(e) => a.error = Some(e.to_string()),
            }
        }
        if let (Some(a3), Some(ex)) = (&alg3_f, &exh_f) {
            violations += (0..scenario.num_users())
                .filter(|&k| analog_desired_power(ex, &scenario, k) < analog_desired_power(a3, &scenario, k))
                .count();
        }
    }
    let frames = config.fading_frames as f64;
    let results = config
        .schemes
        .iter()
        .zip(acc)
        .map(|(&scheme, a)| match a.error {
            Some(e) => SchemeResult { scheme, rate: None, max_residual: None, error: Some(e) },
            None => SchemeResult { scheme, rate: Some(a.rate_sum / frames), max_residual: a.residual, error: None },
        })
        .collect();
    Ok(TrialOutcome { trial_index, results, dominance_violations: violations })
}

/// Runs trials `0..trials` in parallel; output is in trial order.
pub fn run_trials(config: &SimConfig) -> Result<Vec<TrialOutcome>> {
    (0..config.trials as u64).into_par_iter().map(|t| run_trial(config, t)).collect()
}

/// A one-dimensional parameter sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub axis: Axis,
    values: Vec<f64>,
    pub fixed: SimConfig,
}

impl SweepSpec {
    /// Sorts `values` ascending; rejects empty, repeated or non-finite values.
    pub fn new(axis: Axis, mut values: Vec<f64>, fixed: SimConfig) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Config("sweep needs at least one value".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("sweep values must be finite".into()));
        }
        values.sort_by(f64::total_cmp);
        if values.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("sweep values must be distinct".into()));
        }
        for &v in &values {
            fixed.with_axis(axis, v)?;
        }
        Ok(Self { axis, values, fixed })
    }

    /// Reads `sweep_axis` and `sweep_values` from the config.
    pub fn from_config(config: &SimConfig) -> Result<Self> {
        let axis = config.sweep_axis.ok_or_else(|| Error::Config("sweep_axis is not set".into()))?;
        let values = config.sweep_values.clone().ok_or_else(|| Error::Config("sweep_values is not set".into()))?;
        Self::new(axis, values, config.clone())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// The fixed config with the axis recorded, used for fingerprinting.
    pub fn recorded_config(&self) -> SimConfig {
        SimConfig { sweep_axis: Some(self.axis), sweep_values: Some(self.values.clone()), ..self.fixed.clone() }
    }
}

/// One `(axis value, scheme)` aggregate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub axis_name: String,
    pub axis_value: f64,
    pub scheme: String,
    pub mean_sum_rate_bps_hz: f64,
    pub stderr: f64,
    pub trials: usize,
    pub seed: u64,
}

/// A scheme that failed at an axis value (e.g. infeasible antenna config).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gap {
    pub axis_value: f64,
    pub scheme: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub axis: Axis,
    pub rows: Vec<ResultRow>,
    pub gaps: Vec<Gap>,
    pub trials: usize,
    pub seed: u64,
    pub config: SimConfig,
    pub fingerprint: String,
    /// Total logged exhaustive-below-Alg3 desired-power events.
    pub dominance_violations: usize,
}

impl SweepResult {
    pub fn row(&self, axis_value: f64, scheme: Scheme) -> Option<&ResultRow> {
        self.rows.iter().find(|r| r.axis_value == axis_value && r.scheme == scheme.id())
    }

    pub fn mean(&self, axis_value: f64, scheme: Scheme) -> Option<f64> {
        self.row(axis_value, scheme).map(|r| r.mean_sum_rate_bps_hz)
    }
}

/// Mean and standard error of the mean.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, 0.0);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Averages every scheme over the trials at each axis value.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepResult> {
    let recorded = spec.recorded_config();
    let mut rows = Vec::new();
    let mut gaps = Vec::new();
    let mut violations = 0;
    for &value in spec.values() {
        let cfg = spec.fixed.with_axis(spec.axis, value)?;
        let outcomes = run_trials(&cfg)?;
        violations += outcomes.iter().map(|o| o.dominance_violations).sum::<usize>();
        for (i, &scheme) in cfg.schemes.iter().enumerate() {
            let per_trial: Vec<&SchemeResult> = outcomes.iter().map(|o| &o.results[i]).collect();
            if let Some(err) = per_trial.iter().find_map(|r| r.error.clone()) {
                gaps.push(Gap { axis_value: value, scheme: scheme.id().to_string(), message: err });
                continue;
            }
            let rates: Vec<f64> = per_trial.iter().map(|r| r.rate.expect("no error implies a rate")).collect();
            let (mean, stderr) = mean_stderr(&rates);
            rows.push(ResultRow {
                axis_name: spec.axis.name().to_string(),
                axis_value: value,
                scheme: scheme.id().to_string(),
                mean_sum_rate_bps_hz: mean,
                stderr,
                trials: cfg.trials,
                seed: cfg.master_seed,
            });
        }
    }
    Ok(SweepResult {
        axis: spec.axis,
        rows,
        gaps,
        trials: spec.fixed.trials,
        seed: spec.fixed.master_seed,
        fingerprint: recorded.fingerprint(),
        config: recorded,
        dominance_violations: violations,
    })
}

/// The four figure presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Figure {
    Fig3,
    Fig4,
    Fig5,
    Fig6,
}

impl Figure {
    pub const ALL: [Figure; 4] = [Figure::Fig3, Figure::Fig4, Figure::Fig5, Figure::Fig6];

    pub fn id(self) -> &'static str {
        match self {
            Figure::Fig3 => "fig3",
            Figure::Fig4 => "fig4",
            Figure::Fig5 => "fig5",
            Figure::Fig6 => "fig6",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|f| f.id() == s).ok_or_else(|| Error::Config(format!("unknown figure `{s}`")))
    }

    /// Sweep preset on top of `base` (which supplies trials, seed, schemes
    /// and anything not fixed by the figure).
    pub fn spec(self, base: &SimConfig) -> Result<SweepSpec> {
        let mut fixed = SimConfig { snr_db: 20.0, isr_db: 0.0, ..base.clone() };
        let (axis, values): (Axis, Vec<f64>) = match self {
            Figure::Fig3 => (Axis::SnrDb, (0..=8).map(|i| 5.0 * i as f64).collect()),
            Figure::Fig4 => (Axis::IsrDb, (0..=6).map(|i| -10.0 + 5.0 * i as f64).collect()),
            Figure::Fig5 => {
                fixed.rows = 8;
                (Axis::NColumns, vec![16.0, 32.0, 64.0, 128.0])
            }
            Figure::Fig6 => {
                fixed.interferers = 1;
                (Axis::Gamma, (1..=5).map(f64::from).collect())
            }
        };
        SweepSpec::new(axis, values, fixed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SimConfig {
        SimConfig { rows: 4, cols: 8, trials: 6, ..SimConfig::default() }
    }

    #[test]
    fn trials_are_deterministic() {
        let c = small();
        let a = run_trial(&c, 3).unwrap();
        let b = run_trial(&c, 3).unwrap();
        assert_eq!(a, b);
        assert_ne!(run_trial(&c, 4).unwrap(), a);
        assert_eq!(a.dominance_violations, 0);
        for r in &a.results {
            assert!(r.rate.unwrap().is_finite());
            if r.scheme.is_nulling() {
                assert!(r.max_residual.unwrap() <= 1e-12);
            }
        }
    }

    #[test]
    fn interference_setup_does_not_move_user_draws() {
        let c = small();
        let a = generate_scenario(&c, 2).unwrap();
        let b = generate_scenario(&c.with_axis(Axis::Gamma, 3.0).unwrap(), 2).unwrap();
        assert_eq!(a.users[0].g, b.users[0].g);
        assert_eq!(a.interferers[0].paths[0].angles, b.interferers[0].paths[0].angles);
    }

    #[test]
    fn parallel_equals_serial() {
        let c = small();
        let par = run_trials(&c).unwrap();
        let ser: Vec<_> = (0..c.trials as u64).map(|t| run_trial(&c, t).unwrap()).collect();
        assert_eq!(par, ser);
    }

    #[test]
    fn single_trial_sweep_matches_trial() {
        let c = SimConfig { trials: 1, ..small() };
        let spec = SweepSpec::new(Axis::SnrDb, vec![20.0], c.clone()).unwrap();
        let res = run_sweep(&spec).unwrap();
        let t = run_trial(&c, 0).unwrap();
        for r in &t.results {
            assert_eq!(res.mean(20.0, r.scheme), r.rate);
            assert_eq!(res.row(20.0, r.scheme).unwrap().stderr, 0.0);
        }
    }

    #[test]
    fn value_order_does_not_matter() {
        let c = SimConfig { trials: 2, schemes: vec![Scheme::Alg3, Scheme::Mmse], ..small() };
        let a = run_sweep(&SweepSpec::new(Axis::SnrDb, vec![0.0, 10.0], c.clone()).unwrap()).unwrap();
        let b = run_sweep(&SweepSpec::new(Axis::SnrDb, vec![10.0, 0.0], c).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn infeasible_points_become_gaps() {
        let c = SimConfig { rows: 2, cols: 2, trials: 2, ..SimConfig::default() };
        let res = run_sweep(&SweepSpec::new(Axis::SnrDb, vec![10.0], c).unwrap()).unwrap();
        assert!(res.gaps.iter().any(|g| g.scheme == "alg3"));
        assert!(res.mean(10.0, Scheme::Mmse).is_some());
        assert!(res.mean(10.0, Scheme::Alg3).is_none());
    }

    #[test]
    fn slow_fading_reuses_alg4_stage() {
        let c = SimConfig { fading_frames: 4, schemes: vec![Scheme::Alg4, Scheme::Alg3], ..small() };
        let t = run_trial(&c, 0).unwrap();
        assert!(t.rate(Scheme::Alg4).unwrap() > 0.0);
        // Angles are unchanged, so the cached stage keeps nulling.
        assert!(t.results[0].max_residual.unwrap() <= 1e-12);
        assert_eq!(t, run_trial(&c, 0).unwrap());
    }

    #[test]
    fn stats_helper() {
        assert_eq!(mean_stderr(&[2.0]), (2.0, 0.0));
        let (m, s) = mean_stderr(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 1.0).abs() < 1e-15);
    }

    #[test]
    fn sweep_spec_validation() {
        let c = SimConfig::default();
        assert!(SweepSpec::new(Axis::SnrDb, vec![], c.clone()).is_err());
        assert!(SweepSpec::new(Axis::SnrDb, vec![1.0, 1.0], c.clone()).is_err());
        assert!(SweepSpec::new(Axis::NColumns, vec![0.0], c.clone()).is_err());
        let s = SweepSpec::new(Axis::IsrDb, vec![5.0, -5.0], c).unwrap();
        assert_eq!(s.values(), &[-5.0, 5.0]);
    }

    #[test]
    fn figure_presets() {
        let base = SimConfig::default();
        let f3 = Figure::Fig3.spec(&base).unwrap();
        assert_eq!(f3.values(), &[0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0]);
        assert_eq!(f3.fixed.isr_db, 0.0);
        assert_eq!(f3.fixed.interferers, 2);
        let f5 = Figure::Fig5.spec(&base).unwrap();
        assert_eq!(f5.axis, Axis::NColumns);
        assert_eq!(f5.fixed.rows, 8);
        let f6 = Figure::Fig6.spec(&base).unwrap();
        assert_eq!(f6.fixed.interferers, 1);
        assert_eq!(f6.values().len(), 5);
        assert_eq!(Figure::parse("fig4").unwrap(), Figure::Fig4);
        assert!(Figure::parse("fig7").is_err());
    }
}
