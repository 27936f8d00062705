//! Invariant suites shared by the `verify` subcommand and the tests.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::beamformers::analog::{enhancement_target, rearrange, ScenarioFactors};
use crate::beamformers::{
    allocate_factors, analog_desired_power, baseline_egc, baseline_exhaustive_with, build_alg3_with,
    measure_matrix_full, Combiner, DesignOptions, NullingRule, Scheme,
};
use crate::channel::{complex_normal, Scenario};
use crate::kron::{
    kron_all, primitive_decompose_ramp, swap_permutation, FactorPermutation, KroneckerChain, PhaseVector,
};
use crate::metrics::sinr_breakdowns;
use crate::sim::{generate_scenario, max_nulling_residual, GammaPsi, SimConfig};
use crate::{CMatrix, Error};

/// Outcome of one suite.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub name: &'static str,
    pub passed: bool,
    pub cases: usize,
    pub detail: String,
}

impl SuiteReport {
    fn new(name: &'static str, passed: bool, cases: usize, detail: String) -> Self {
        Self { name, passed, cases, detail }
    }

    fn error(name: &'static str, e: &Error) -> Self {
        Self::new(name, false, 0, format!("error: {e}"))
    }
}

fn random_phase(rng: &mut ChaCha8Rng, n: usize) -> PhaseVector {
    PhaseVector::from_phases((0..n).map(|_| rng.random_range(0.0..TAU)))
}

fn max_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// Ramp decompositions and chain materialization against direct formulas.
pub fn reconstruction_suite(seed: u64, cases: usize) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let n = rng.random_range(1..=256usize);
        let theta = rng.random_range(-TAU..TAU);
        let chain = match primitive_decompose_ramp(theta, n) {
            Ok(c) => c,
            Err(e) => return SuiteReport::error("reconstruction", &e),
        };
        worst = worst.max(max_diff(&chain.materialize(), PhaseVector::ramp(theta, n).as_slice()));

        // Arbitrary chain: entry i is the product of the digit-selected entries.
        let d = rng.random_range(1..=5);
        let lens: Vec<usize> = (0..d).map(|_| [2, 3, 5][rng.random_range(0..3)]).collect();
        let factors: Vec<PhaseVector> = lens.iter().map(|&l| random_phase(&mut rng, l)).collect();
        let total: usize = lens.iter().product();
        let direct: Vec<Complex64> = (0..total)
            .map(|mut i| {
                let mut z = Complex64::new(1.0, 0.0);
                for t in (0..d).rev() {
                    z *= factors[t].as_slice()[i % lens[t]];
                    i /= lens[t];
                }
                z
            })
            .collect();
        worst = worst.max(max_diff(&kron_all(factors.iter()), &direct));
    }
    let passed = worst <= 1e-12;
    SuiteReport::new("reconstruction", passed, cases, format!("max entry error {worst:.3e} (limit 1e-12)"))
}

/// Swap permutations: the Kronecker identity, orthogonality, composition
/// and rearrangement.
pub fn permutation_suite(seed: u64, cases: usize) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut failures = 0usize;
    for _ in 0..cases {
        let d = rng.random_range(2..=6);
        let lens: Vec<usize> = (0..d).map(|_| [2, 2, 3, 5][rng.random_range(0..4)]).collect();
        let p = rng.random_range(0..d);
        let q = (p + rng.random_range(1..d)) % d;
        let factors: Vec<PhaseVector> = lens.iter().map(|&l| random_phase(&mut rng, l)).collect();
        let perm = match swap_permutation(&lens, p, q) {
            Ok(x) => x,
            Err(e) => return SuiteReport::error("permutation", &e),
        };
        let mut swapped = factors.clone();
        swapped.swap(p, q);
        let orig = kron_all(factors.iter());
        let swapped_v = kron_all(swapped.iter());
        worst = worst.max(max_diff(&orig, &perm.apply(&swapped_v)));
        // Pᵀ P = I, checked on the index map.
        if !perm.compose(&inverse(&perm)).is_identity() {
            failures += 1;
        }
        worst = worst.max(max_diff(&perm.apply_transpose(&orig), &swapped_v));

        // Composite of two swaps equals the direct reordering.
        let r = rng.random_range(0..d);
        let s = (r + rng.random_range(1..d)) % d;
        let mut lens2 = lens.clone();
        lens2.swap(p, q);
        let second = swap_permutation(&lens2, r, s).expect("valid indices");
        let mut order: Vec<usize> = (0..d).collect();
        order.swap(p, q);
        order.swap(r, s);
        let direct = FactorPermutation::from_factor_order(&lens, &order).expect("valid order");
        if perm.compose(&second) != direct {
            failures += 1;
        }

        // Rearrangement keeps the reconstruction identity.
        let mask: Vec<bool> = (0..d).map(|_| rng.random_bool(0.5)).collect();
        let data = KroneckerChain::new(lens.iter().map(|&l| random_phase(&mut rng, l)).collect()).expect("nonempty");
        let re = rearrange(&factors, &mask, std::slice::from_ref(&data)).expect("consistent lengths");
        worst = worst.max(max_diff(&orig, &re.permutation.apply(&kron_all(re.factors.iter()))));
        worst = worst.max(max_diff(&data.materialize(), &re.permutation.apply(&re.chains[0].materialize())));
        let g = mask.iter().filter(|&&b| b).count();
        if re.designed[..g].iter().any(|&b| !b) {
            failures += 1;
        }
    }
    let passed = worst <= 1e-12 && failures == 0;
    SuiteReport::new(
        "permutation",
        passed,
        cases,
        format!("max entry error {worst:.3e} (limit 1e-12), {failures} structural failures"),
    )
}

fn inverse(p: &FactorPermutation) -> FactorPermutation {
    let mut inv = vec![0; p.len()];
    for (i, &j) in p.index_map().iter().enumerate() {
        inv[j] = i;
    }
    FactorPermutation::from_index_map(inv).expect("inverse of a permutation")
}

/// Per-path nulling residual of every nulling scheme on seeded scenarios.
pub fn nulling_suite(config: &SimConfig, scenarios: usize, rule: NullingRule) -> SuiteReport {
    let opts = DesignOptions { nulling: rule, ..DesignOptions::default() };
    let mut worst = 0.0f64;
    for t in 0..scenarios as u64 {
        let sc = match generate_scenario(config, t) {
            Ok(s) => s,
            Err(e) => return SuiteReport::error("nulling", &e),
        };
        for scheme in Scheme::ALL.into_iter().filter(|s| s.is_nulling()) {
            match scheme.build(&sc, &opts) {
                Ok(out) => {
                    let h = out.as_hybrid().expect("nulling schemes are hybrid");
                    worst = worst.max(max_nulling_residual(&h.f_rf, &sc));
                }
                Err(e) => return SuiteReport::error("nulling", &e),
            }
        }
    }
    SuiteReport::new(
        "nulling",
        worst <= 1e-12,
        scenarios,
        format!("max |f_RF^H a_r|/MN = {worst:.3e} (limit 1e-12)"),
    )
}

/// Exhaustive ≥ Alg3 ≥ 0 in analog desired power, per user.
pub fn dominance_suite(config: &SimConfig, scenarios: usize) -> SuiteReport {
    let opts = DesignOptions::default();
    let mut violations = 0usize;
    let mut users = 0usize;
    for t in 0..scenarios as u64 {
        let sc = match generate_scenario(config, t) {
            Ok(s) => s,
            Err(e) => return SuiteReport::error("dominance", &e),
        };
        let built = build_alg3_with(&sc, &opts).and_then(|a| Ok((a, baseline_exhaustive_with(&sc, &opts)?)));
        let (a3, ex) = match built {
            Ok(x) => x,
            Err(e) => return SuiteReport::error("dominance", &e),
        };
        for k in 0..sc.num_users() {
            users += 1;
            let pa = analog_desired_power(&a3.f_rf, &sc, k);
            let pe = analog_desired_power(&ex.f_rf, &sc, k);
            if !(pe >= pa && pa >= 0.0) {
                violations += 1;
            }
        }
    }
    SuiteReport::new(
        "dominance",
        violations == 0,
        scenarios,
        format!("{violations} of {users} users with exhaustive < alg3 desired power"),
    )
}

/// The phase-matched enhancement block against random unit-modulus probes
/// on real design instances.
pub fn enhancement_suite(config: &SimConfig, instances: usize, probes: usize) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(config.master_seed ^ 0x5eed);
    let mut beaten = 0usize;
    for t in 0..instances as u64 {
        let sc = match generate_scenario(config, t) {
            Ok(s) => s,
            Err(e) => return SuiteReport::error("enhancement", &e),
        };
        let target = match enhancement_instance(&sc, (t as usize) % sc.num_users()) {
            Ok(g) => g,
            Err(e) => return SuiteReport::error("enhancement", &e),
        };
        let f = PhaseVector::phase_of(&target);
        let best = f.inner(&target).norm();
        for _ in 0..probes {
            let w = random_phase(&mut rng, target.len());
            if w.inner(&target).norm() > best {
                beaten += 1;
            }
        }
    }
    SuiteReport::new(
        "enhancement",
        beaten == 0,
        instances,
        format!("{beaten} of {} random probes beat the phase-matched block", instances * probes),
    )
}

/// `g̃` of user `k` after Alg3's allocation and rearrangement.
fn enhancement_instance(sc: &Scenario, k: usize) -> crate::Result<Vec<Complex64>> {
    let sf = ScenarioFactors::new(sc, NullingRule::Exact)?;
    let a = allocate_factors(&measure_matrix_full(&sf, k)?)?;
    let factors: Vec<PhaseVector> = (0..sf.num_factors())
        .map(|d| match a.component_of(d) {
            Some(e) => sf.candidates[d][e].clone(),
            None => PhaseVector::ones(sf.lengths[d]),
        })
        .collect();
    let r = rearrange(&factors, &a.designed_mask(sf.num_factors()), &sf.users[k].paths)?;
    Ok(enhancement_target(&r.factors[..a.len()], &r.chains, &sf.users[k].gains))
}

/// Rank of Alg3's analog matrix at the smallest feasible array, plus the
/// infeasibility error one size below.
pub fn rank_condition_suite(seed: u64, draws: usize) -> SuiteReport {
    let base = SimConfig {
        users: 4,
        interferers: 2,
        gamma_psi: GammaPsi::Uniform(1),
        rows: 4,
        cols: 4,
        master_seed: seed,
        ..SimConfig::default()
    };
    let opts = DesignOptions::default();
    let mut full_rank = 0usize;
    for t in 0..draws as u64 {
        let sc = match generate_scenario(&base, t) {
            Ok(s) => s,
            Err(e) => return SuiteReport::error("rank", &e),
        };
        match build_alg3_with(&sc, &opts) {
            Ok(h) => {
                if smallest_normalized_singular_value(&h.f_rf) > 1e-6 {
                    full_rank += 1;
                }
            }
            Err(Error::NotPositiveDefinite { .. }) => {}
            Err(e) => return SuiteReport::error("rank", &e),
        }
    }
    let small = SimConfig { rows: 2, cols: 4, ..base };
    let infeasible = matches!(
        generate_scenario(&small, 0).and_then(|sc| build_alg3_with(&sc, &opts)),
        Err(Error::Infeasible { .. })
    );
    let frac = full_rank as f64 / draws.max(1) as f64;
    SuiteReport::new(
        "rank",
        frac >= 0.99 && infeasible,
        draws,
        format!(
            "full rank in {full_rank}/{draws} draws ({:.1}%, need 99%); MN=8 infeasibility error {}",
            100.0 * frac,
            if infeasible { "raised" } else { "NOT raised" }
        ),
    )
}

/// Smallest singular value of `f` after scaling each column to unit norm.
pub fn smallest_normalized_singular_value(f: &CMatrix) -> f64 {
    let mut g = f.clone();
    for mut c in g.column_iter_mut() {
        let n = c.norm();
        if n > 0.0 {
            c.unscale_mut(n);
        }
    }
    g.singular_values().iter().copied().fold(f64::INFINITY, f64::min)
}

/// Worst relative gap between analytic powers and symbol-level sample
/// second moments.
pub fn mmse_oracle_gap(sc: &Scenario, w: &CMatrix, symbols: usize, rng: &mut ChaCha8Rng) -> f64 {
    let analytic = sinr_breakdowns(w, sc);
    let g = sc.effective_channel();
    let h = sc.interference_matrix();
    let k_count = g.ncols();
    let wg = w.adjoint() * g;
    let wh = w.adjoint() * h;
    let wa = w.adjoint();
    let (su, si, sn) = (sc.p_u.sqrt(), sc.p_i.sqrt(), sc.n0.sqrt());
    let mn = sc.geometry.num_elements();
    let mut sums = vec![[0.0f64; 4]; k_count];
    let mut x = vec![Complex64::new(0.0, 0.0); k_count];
    let mut s = vec![Complex64::new(0.0, 0.0); h.ncols()];
    let mut z = crate::CVector::zeros(mn);
    for _ in 0..symbols {
        x.iter_mut().for_each(|v| *v = complex_normal(rng) * su);
        s.iter_mut().for_each(|v| *v = complex_normal(rng) * si);
        z.iter_mut().for_each(|v| *v = complex_normal(rng) * sn);
        let wz = &wa * &z;
        for k in 0..k_count {
            let desired = wg[(k, k)] * x[k];
            let intra: Complex64 = (0..k_count).filter(|&q| q != k).map(|q| wg[(k, q)] * x[q]).sum();
            let inter: Complex64 = (0..s.len()).map(|p| wh[(k, p)] * s[p]).sum();
            sums[k][0] += desired.norm_sqr();
            sums[k][1] += intra.norm_sqr();
            sums[k][2] += inter.norm_sqr();
            sums[k][3] += wz[k].norm_sqr();
        }
    }
    let n = symbols as f64;
    let mut worst = 0.0f64;
    for (b, m) in analytic.iter().zip(&sums) {
        let pairs = [(b.p_desired, m[0]), (b.p_intra, m[1]), (b.p_inter, m[2]), (b.p_noise, m[3])];
        for (a, emp) in pairs {
            let emp = emp / n;
            if a > 0.0 {
                worst = worst.max((emp - a).abs() / a);
            } else if emp > 0.0 {
                worst = f64::INFINITY;
            }
        }
    }
    worst
}

/// Analytic powers of the EGC-MMSE combiner (non-zero leakage in every term)
/// against sample moments.
pub fn mmse_oracle_suite(config: &SimConfig, scenarios: usize, symbols: usize) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(config.master_seed ^ 0x0dd5);
    let mut worst = 0.0f64;
    for t in 0..scenarios as u64 {
        let sc = match generate_scenario(config, t) {
            Ok(s) => s,
            Err(e) => return SuiteReport::error("mmse_oracle", &e),
        };
        let w = match baseline_egc(&sc) {
            Ok(h) => h.combining_matrix(),
            Err(e) => return SuiteReport::error("mmse_oracle", &e),
        };
        worst = worst.max(mmse_oracle_gap(&sc, &w, symbols, &mut rng));
    }
    SuiteReport::new(
        "mmse_oracle",
        worst <= 0.02,
        scenarios,
        format!("max relative gap {:.3}% (limit 2%)", 100.0 * worst),
    )
}

/// Sizes used by [`run_suites`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyPlan {
    pub property_cases: usize,
    pub scenarios: usize,
    pub probe_instances: usize,
    pub probes: usize,
    pub rank_draws: usize,
    pub oracle_scenarios: usize,
    pub oracle_symbols: usize,
    pub nulling: NullingRule,
}

impl Default for VerifyPlan {
    fn default() -> Self {
        Self {
            property_cases: 2_000,
            scenarios: 100,
            probe_instances: 20,
            probes: 2_000,
            rank_draws: 200,
            oracle_scenarios: 2,
            oracle_symbols: 20_000,
            nulling: NullingRule::Exact,
        }
    }
}

impl VerifyPlan {
    /// The sizes of the acceptance runs.
    pub fn full() -> Self {
        Self {
            property_cases: 10_000,
            scenarios: 1_000,
            probe_instances: 100,
            probes: 10_000,
            rank_draws: 1_000,
            oracle_scenarios: 20,
            oracle_symbols: 100_000,
            nulling: NullingRule::Exact,
        }
    }
}

/// Every suite on `config`.
pub fn run_suites(config: &SimConfig, plan: &VerifyPlan) -> Vec<SuiteReport> {
    let seed = config.master_seed;
    vec![
        reconstruction_suite(seed, plan.property_cases),
        permutation_suite(seed.wrapping_add(1), plan.property_cases),
        nulling_suite(config, plan.scenarios, plan.nulling),
        dominance_suite(config, plan.scenarios.min(200)),
        enhancement_suite(config, plan.probe_instances, plan.probes),
        rank_condition_suite(seed, plan.rank_draws),
        mmse_oracle_suite(config, plan.oracle_scenarios, plan.oracle_symbols),
    ]
}
