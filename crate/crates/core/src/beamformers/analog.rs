//! Analog stage built from Kronecker factors: nulling factors, measure
//! matrices, greedy allocation, factor rearrangement and phase-matched
//! enhancement.

use std::f64::consts::TAU;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::channel::{upa_factors, Scenario};
use crate::kron::{inner, kron, kron_all, swap_permutation, FactorPermutation, KroneckerChain, PhaseVector};
use crate::{Error, Result};

/// How a nulling factor is formed from an interference factor.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum NullingRule {
    /// `diag(a)·t` with `t` the n-th roots of unity.
    #[default]
    Exact,
    /// Fault injection: every root but the first has its sign flipped, so
    /// the factor no longer annihilates `a`.
    SignFlipped,
}

fn one() -> Complex64 {
    Complex64::new(1.0, 0.0)
}

/// Factor orthogonal to `a`: `diag(a)·t`, `t_m = e^{j2πm/n}`.
pub fn nulling_factor(a: &PhaseVector) -> Result<PhaseVector> {
    nulling_factor_with(a, NullingRule::Exact)
}

pub fn nulling_factor_with(a: &PhaseVector, rule: NullingRule) -> Result<PhaseVector> {
    let n = a.len();
    if n < 2 {
        return Err(Error::InvalidArgument("cannot null within a length-1 factor".into()));
    }
    let out = a
        .as_slice()
        .iter()
        .enumerate()
        .map(|(m, &z)| {
            let t = if n == 2 {
                // Exact ±1 rather than e^{jπ}.
                if m == 0 { one() } else { -one() }
            } else {
                Complex64::from_polar(1.0, TAU * m as f64 / n as f64)
            };
            let t = match rule {
                NullingRule::Exact => t,
                NullingRule::SignFlipped if m > 0 => -t,
                NullingRule::SignFlipped => t,
            };
            z * t
        })
        .collect();
    PhaseVector::new(out)
}

/// Principal D-th root: modulus root, phase divided by `d`.
pub fn principal_root(z: Complex64, d: usize) -> Complex64 {
    if d <= 1 {
        return z;
    }
    Complex64::from_polar(z.norm().powf(1.0 / d as f64), z.arg() / d as f64)
}

/// The `D × Γ` table `u_{dε}` scoring factor `d` against interference
/// component `ε`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasureMatrix(DMatrix<f64>);

impl MeasureMatrix {
    pub fn new(u: DMatrix<f64>) -> Result<Self> {
        if u.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::InvalidArgument("measure entries must be finite and nonnegative".into()));
        }
        Ok(Self(u))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.len();
        let g = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != g) {
            return Err(Error::InvalidArgument("ragged measure matrix".into()));
        }
        Self::new(DMatrix::from_fn(d, g, |i, j| rows[i][j]))
    }

    pub fn num_factors(&self) -> usize {
        self.0.nrows()
    }

    pub fn num_components(&self) -> usize {
        self.0.ncols()
    }

    pub fn get(&self, d: usize, eps: usize) -> f64 {
        self.0[(d, eps)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }
}

/// Which factor nulls which interference component.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FactorAssignment {
    /// `(d, ε)` pairs sorted by `ε`.
    pairs: Vec<(usize, usize)>,
}

impl FactorAssignment {
    /// Validates that factor and component indices are each distinct and that
    /// the components are exactly `0..num_components`.
    pub fn new(mut pairs: Vec<(usize, usize)>, num_components: usize) -> Result<Self> {
        pairs.sort_by_key(|&(_, e)| e);
        if pairs.len() != num_components || pairs.iter().enumerate().any(|(i, &(_, e))| i != e) {
            return Err(Error::InvalidArgument(format!(
                "assignment must cover components 0..{num_components} exactly once"
            )));
        }
        let mut ds: Vec<usize> = pairs.iter().map(|&(d, _)| d).collect();
        ds.sort_unstable();
        ds.dedup();
        if ds.len() != pairs.len() {
            return Err(Error::InvalidArgument("a factor is assigned to two components".into()));
        }
        Ok(Self { pairs })
    }

    /// Factor `d = ε` for every component.
    pub fn natural(num_components: usize) -> Self {
        Self { pairs: (0..num_components).map(|e| (e, e)).collect() }
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn factor_of(&self, eps: usize) -> usize {
        self.pairs[eps].0
    }

    pub fn component_of(&self, d: usize) -> Option<usize> {
        self.pairs.iter().find(|&&(dd, _)| dd == d).map(|&(_, e)| e)
    }

    pub fn designed_mask(&self, num_factors: usize) -> Vec<bool> {
        let mut mask = vec![false; num_factors];
        for &(d, _) in &self.pairs {
            mask[d] = true;
        }
        mask
    }
}

/// Greedy allocation: repeatedly take the largest remaining `u_{dε}`, then
/// retire row `d` and column `ε`. Ties go to the smallest `d`, then `ε`.
pub fn allocate_factors(u: &MeasureMatrix) -> Result<FactorAssignment> {
    let d_count = u.num_factors();
    let g_count = u.num_components();
    if d_count < g_count {
        return Err(Error::Infeasible {
            factors: d_count,
            lengths: Vec::new(),
            paths: g_count,
            users: 0,
            remaining: 0,
        });
    }
    let mut row_free = vec![true; d_count];
    let mut col_free = vec![true; g_count];
    let mut pairs = Vec::with_capacity(g_count);
    for _ in 0..g_count {
        let mut best: Option<(usize, usize, f64)> = None;
        for d in (0..d_count).filter(|&d| row_free[d]) {
            for e in (0..g_count).filter(|&e| col_free[e]) {
                let v = u.get(d, e);
                if best.is_none_or(|(_, _, b)| v > b) {
                    best = Some((d, e, v));
                }
            }
        }
        let (d, e, _) = best.expect("free rows and columns remain");
        row_free[d] = false;
        col_free[e] = false;
        pairs.push((d, e));
    }
    FactorAssignment::new(pairs, g_count)
}

/// Swaps performed by the two-pointer pass that moves designed factors to
/// the front.
pub fn rearrange_swaps(designed: &[bool]) -> Vec<(usize, usize)> {
    let mut mask = designed.to_vec();
    let mut swaps = Vec::new();
    if mask.len() < 2 {
        return swaps;
    }
    let (mut i, mut j) = (0usize, mask.len() - 1);
    while i < j {
        match (mask[i], mask[j]) {
            (false, true) => {
                mask.swap(i, j);
                swaps.push((i, j));
            }
            (true, true) => i += 1,
            (false, false) => j -= 1,
            (true, false) => {
                i += 1;
                j -= 1;
            }
        }
    }
    swaps
}

/// Output of [`rearrange`].
#[derive(Debug, Clone)]
pub struct Rearranged {
    /// `materialize(original) = P · materialize(reordered)`.
    pub permutation: FactorPermutation,
    pub factors: Vec<PhaseVector>,
    pub designed: Vec<bool>,
    pub chains: Vec<KroneckerChain>,
}

/// Moves the designed factors to the front, composing the swap permutations
/// and applying the same swaps to every data chain.
pub fn rearrange(factors: &[PhaseVector], designed: &[bool], chains: &[KroneckerChain]) -> Result<Rearranged> {
    if factors.len() != designed.len() {
        return Err(Error::InvalidArgument("mask length differs from factor count".into()));
    }
    let mut lengths: Vec<usize> = factors.iter().map(PhaseVector::len).collect();
    if chains.iter().any(|c| c.lengths() != lengths) {
        return Err(Error::InvalidArgument("data chain factor lengths differ from the beamformer's".into()));
    }
    let total: usize = lengths.iter().product();
    let mut permutation = FactorPermutation::identity(total);
    let mut factors = factors.to_vec();
    let mut designed = designed.to_vec();
    let mut chains = chains.to_vec();
    for (p, q) in rearrange_swaps(&designed) {
        let swap = swap_permutation(&lengths, p, q)?;
        permutation = permutation.compose(&swap);
        lengths.swap(p, q);
        factors.swap(p, q);
        designed.swap(p, q);
        for c in &mut chains {
            c.swap_factors(p, q);
        }
    }
    Ok(Rearranged { permutation, factors, designed, chains })
}

/// `g̃ = Σ_l w_l (f′_Γᴴ a′_{l,Γ}) a′_{l,Res}` for rearranged chains whose
/// first `gamma_factors.len()` factors form the nulling block.
pub fn enhancement_target(
    gamma_factors: &[PhaseVector],
    chains: &[KroneckerChain],
    weights: &[Complex64],
) -> Vec<Complex64> {
    let g = gamma_factors.len();
    let mut acc: Option<Vec<Complex64>> = None;
    for (chain, &w) in chains.iter().zip(weights) {
        let head = gamma_factors
            .iter()
            .zip(chain.factors())
            .fold(w, |c, (f, a)| c * inner(f.as_slice(), a.as_slice()));
        let tail = kron_all(chain.factors()[g..].iter());
        match acc.as_mut() {
            None => acc = Some(tail.into_iter().map(|z| z * head).collect()),
            Some(v) => v.iter_mut().zip(tail).for_each(|(x, t)| *x += t * head),
        }
    }
    acc.unwrap_or_else(|| vec![Complex64::new(0.0, 0.0)])
}

/// Phase-matched residual block `exp(j angle(g̃))`.
pub fn enhance_full(gamma_factors: &[PhaseVector], chains: &[KroneckerChain], weights: &[Complex64]) -> PhaseVector {
    PhaseVector::phase_of(&enhancement_target(gamma_factors, chains, weights))
}

/// Decomposed steering vectors of one user.
#[derive(Debug, Clone)]
pub struct UserFactors {
    /// One chain per path; path 0 is LoS.
    pub paths: Vec<KroneckerChain>,
    /// Effective gains `α̃_l = α_l a_tᴴ v`.
    pub gains: Vec<Complex64>,
}

/// Everything the Kronecker designs need from a scenario, computed once.
#[derive(Debug, Clone)]
pub struct ScenarioFactors {
    pub lengths: Vec<usize>,
    pub users: Vec<UserFactors>,
    /// One chain per interference component `ε`, interferers flattened in order.
    pub interference: Vec<KroneckerChain>,
    /// `candidates[d][ε]`: nulling factor for component `ε` at position `d`.
    pub candidates: Vec<Vec<PhaseVector>>,
}

impl ScenarioFactors {
    /// Decomposes every steering vector and fills the candidate table.
    /// Fails with [`Error::Infeasible`] when the array cannot null all
    /// components and still separate the users.
    pub fn new(scenario: &Scenario, rule: NullingRule) -> Result<Self> {
        let geo = &scenario.geometry;
        let lengths = geo.factor_lengths();
        let gamma = scenario.total_interference_paths();
        check_feasible(&lengths, gamma, scenario.num_users())?;
        let users = scenario
            .users
            .iter()
            .map(|u| UserFactors {
                paths: u.paths.iter().map(|p| upa_factors(p.angles.phi_r, p.angles.theta_r, geo)).collect(),
                gains: (0..u.paths.len()).map(|l| u.effective_gain(l, geo)).collect(),
            })
            .collect();
        let interference: Vec<KroneckerChain> = scenario
            .interferers
            .iter()
            .flat_map(|i| i.paths.iter())
            .map(|p| upa_factors(p.angles.phi_r, p.angles.theta_r, geo))
            .collect();
        let candidates = (0..lengths.len())
            .map(|d| {
                interference
                    .iter()
                    .map(|c| nulling_factor_with(&c.factors()[d], rule))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { lengths, users, interference, candidates })
    }

    pub fn num_factors(&self) -> usize {
        self.lengths.len()
    }

    pub fn num_components(&self) -> usize {
        self.interference.len()
    }
}

/// Antenna feasibility: at least `Γ` factors, and the `D − Γ` shortest
/// factors (the worst case left after nulling) must span `K` dimensions.
pub fn check_feasible(lengths: &[usize], gamma: usize, users: usize) -> Result<()> {
    let d = lengths.len();
    let mut sorted = lengths.to_vec();
    sorted.sort_unstable();
    let remaining = d.saturating_sub(gamma);
    let span: usize = sorted.iter().take(remaining).product();
    if d < gamma || span < users {
        return Err(Error::Infeasible { factors: d, lengths: lengths.to_vec(), paths: gamma, users, remaining });
    }
    Ok(())
}

/// Measure matrix with every path weighted by `α̃_l^{1/D}`.
pub fn measure_matrix_full(sf: &ScenarioFactors, k: usize) -> Result<MeasureMatrix> {
    let user = &sf.users[k];
    let d_count = sf.num_factors();
    let roots: Vec<Complex64> = user.gains.iter().map(|&g| principal_root(g, d_count)).collect();
    measure(sf, &user.paths, &roots)
}

/// Measure matrix against the LoS path alone, unweighted.
pub fn measure_matrix_los(sf: &ScenarioFactors, k: usize) -> Result<MeasureMatrix> {
    measure(sf, &sf.users[k].paths[..1], &[one()])
}

fn measure(sf: &ScenarioFactors, paths: &[KroneckerChain], weights: &[Complex64]) -> Result<MeasureMatrix> {
    let d_count = sf.num_factors();
    let g_count = sf.num_components();
    let u = DMatrix::from_fn(d_count, g_count, |d, e| {
        let f = sf.candidates[d][e].as_slice();
        paths
            .iter()
            .zip(weights)
            .map(|(c, &w)| w * inner(f, c.factors()[d].as_slice()))
            .sum::<Complex64>()
            .norm()
    });
    MeasureMatrix::new(u)
}

/// Which paths drive the enhancement step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnhanceMode {
    /// All paths weighted by their effective gains.
    Full,
    /// LoS path only with unit weight.
    LosOnly,
}

/// One designed analog beamforming column.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalogColumn {
    pub f_rf: PhaseVector,
    pub assignment: FactorAssignment,
    pub permutation: FactorPermutation,
    /// Nulling block `f′_Γ`, in rearranged order.
    pub gamma_factors: Vec<PhaseVector>,
    /// Enhancement block `f′_Res`; a single phase-matched vector.
    pub res_factors: Vec<PhaseVector>,
}

impl AnalogColumn {
    /// `P · kron(gamma_factors ++ res_factors)`.
    pub fn reconstruct(&self) -> Vec<Complex64> {
        self.permutation.apply(&kron_all(self.gamma_factors.iter().chain(&self.res_factors)))
    }
}

fn user_paths(sf: &ScenarioFactors, k: usize, mode: EnhanceMode) -> (Vec<KroneckerChain>, Vec<Complex64>) {
    let user = &sf.users[k];
    match mode {
        EnhanceMode::Full => (user.paths.clone(), user.gains.clone()),
        EnhanceMode::LosOnly => (vec![user.paths[0].clone()], vec![one()]),
    }
}

fn initial_factors(sf: &ScenarioFactors, assignment: &FactorAssignment) -> Vec<PhaseVector> {
    (0..sf.num_factors())
        .map(|d| match assignment.component_of(d) {
            Some(e) => sf.candidates[d][e].clone(),
            None => PhaseVector::ones(sf.lengths[d]),
        })
        .collect()
}

/// Builds the column for user `k` from a given assignment: place the nulling
/// factors, rearrange, enhance the remaining block and permute back.
pub fn design_column(
    sf: &ScenarioFactors,
    k: usize,
    assignment: &FactorAssignment,
    mode: EnhanceMode,
) -> Result<AnalogColumn> {
    let factors = initial_factors(sf, assignment);
    let mask = assignment.designed_mask(sf.num_factors());
    let (chains, weights) = user_paths(sf, k, mode);
    let r = rearrange(&factors, &mask, &chains)?;
    let g = assignment.len();
    let gamma_factors = r.factors[..g].to_vec();
    let res = enhance_full(&gamma_factors, &r.chains, &weights);
    let f_prime = kron(&kron_all(gamma_factors.iter()), res.as_slice());
    let f_rf = PhaseVector::new(r.permutation.apply(&f_prime))?;
    Ok(AnalogColumn {
        f_rf,
        assignment: assignment.clone(),
        permutation: r.permutation,
        gamma_factors,
        res_factors: vec![res],
    })
}

/// `‖g̃‖₁` for an assignment, without forming the permutation. Equals
/// `|f_RFᴴ G_k v_k|` of the designed column in exact arithmetic.
pub fn enhancement_score(sf: &ScenarioFactors, k: usize, assignment: &FactorAssignment) -> f64 {
    let factors = initial_factors(sf, assignment);
    let mask = assignment.designed_mask(sf.num_factors());
    let user = &sf.users[k];
    let mut chains = user.paths.clone();
    let mut factors = factors;
    for (p, q) in rearrange_swaps(&mask) {
        factors.swap(p, q);
        for c in &mut chains {
            c.swap_factors(p, q);
        }
    }
    let g = assignment.len();
    enhancement_target(&factors[..g], &chains, &user.gains).iter().map(|z| z.norm()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{gen_interference_channel, gen_user_channel, ArrayGeometry, ChannelParams};
    use crate::kron::primitive_decompose_ramp;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_phase(rng: &mut ChaCha8Rng, n: usize) -> PhaseVector {
        PhaseVector::from_phases((0..n).map(|_| rng.random_range(0.0..TAU)))
    }

    fn scenario(rng: &mut ChaCha8Rng, m: usize, n: usize, k: usize, gammas: &[usize], l: usize) -> Scenario {
        let geo = ArrayGeometry::new(m, n, 2).unwrap();
        let params = ChannelParams { paths_per_user: l, ..ChannelParams::default() };
        let users = (0..k).map(|_| gen_user_channel(&geo, &params, rng).unwrap()).collect();
        let ints = gammas.iter().map(|&g| gen_interference_channel(&geo, g, rng).unwrap()).collect();
        Scenario::new(geo, users, ints, 1.0, 1.0, 0.01).unwrap()
    }

    #[test]
    fn nulling_examples() {
        let f = nulling_factor(&PhaseVector::ones(2)).unwrap();
        assert_eq!(f.as_slice(), &[c(1.0, 0.0), c(-1.0, 0.0)]);
        let a = PhaseVector::from_phases([0.0, 0.7]);
        let f = nulling_factor(&a).unwrap();
        assert!((f.as_slice()[1] + Complex64::from_polar(1.0, 0.7)).norm() < 1e-15);
        assert!(f.inner(a.as_slice()).norm() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in [3, 5, 7] {
            let a = random_phase(&mut rng, n);
            let f = nulling_factor(&a).unwrap();
            assert!(f.inner(a.as_slice()).norm() <= 1e-12);
        }
        assert!(nulling_factor(&PhaseVector::ones(1)).is_err());
    }

    #[test]
    fn corrupted_rule_does_not_null() {
        let a = PhaseVector::from_phases([0.0, 0.3]);
        let f = nulling_factor_with(&a, NullingRule::SignFlipped).unwrap();
        assert!(f.inner(a.as_slice()).norm() > 1.0);
    }

    #[test]
    fn principal_root_branch() {
        let z = Complex64::from_polar(16.0, -3.0);
        let r = principal_root(z, 4);
        assert!((r.norm() - 2.0).abs() < 1e-14);
        assert!((r.arg() + 0.75).abs() < 1e-14);
        assert!((r.powi(4) - z).norm() < 1e-12);
    }

    #[test]
    fn allocation_examples() {
        let u = MeasureMatrix::from_rows(&[vec![3.0, 1.0], vec![2.0, 5.0], vec![0.0, 0.0]]).unwrap();
        let a = allocate_factors(&u).unwrap();
        assert_eq!(a.pairs(), &[(0, 0), (1, 1)]);

        let u = MeasureMatrix::from_rows(&[vec![0.1, 0.2, 9.0], vec![8.0, 0.0, 0.0], vec![0.0, 7.0, 0.5]]).unwrap();
        assert_eq!(allocate_factors(&u).unwrap().pairs(), &[(1, 0), (2, 1), (0, 2)]);

        let u = MeasureMatrix::from_rows(&vec![vec![1.0; 3]; 4]).unwrap();
        assert_eq!(allocate_factors(&u).unwrap().pairs(), &[(0, 0), (1, 1), (2, 2)]);

        let u = MeasureMatrix::from_rows(&[vec![1.0, 2.0, 3.0]]).unwrap();
        assert!(matches!(allocate_factors(&u), Err(Error::Infeasible { .. })));
        assert!(MeasureMatrix::from_rows(&[vec![-1.0]]).is_err());
        assert!(MeasureMatrix::from_rows(&[vec![f64::NAN]]).is_err());
    }

    #[test]
    fn allocation_is_scale_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let rows: Vec<Vec<f64>> = (0..7).map(|_| (0..3).map(|_| rng.random_range(0.0..4.0)).collect()).collect();
            let scaled: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|x| x * 3.7).collect()).collect();
            let a = allocate_factors(&MeasureMatrix::from_rows(&rows).unwrap()).unwrap();
            let b = allocate_factors(&MeasureMatrix::from_rows(&scaled).unwrap()).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn assignment_validation() {
        assert!(FactorAssignment::new(vec![(0, 0), (0, 1)], 2).is_err());
        assert!(FactorAssignment::new(vec![(0, 0)], 2).is_err());
        let a = FactorAssignment::new(vec![(3, 1), (1, 0)], 2).unwrap();
        assert_eq!(a.factor_of(0), 1);
        assert_eq!(a.component_of(3), Some(1));
        assert_eq!(a.designed_mask(4), vec![false, true, false, true]);
    }

    #[test]
    fn rearrange_sorted_mask_is_identity() {
        let factors = vec![PhaseVector::ones(2); 3];
        let r = rearrange(&factors, &[true, true, false], &[]).unwrap();
        assert!(r.permutation.is_identity());
        assert!(rearrange_swaps(&[true, false, false]).is_empty());
    }

    #[test]
    fn rearrange_single_swap_is_perfect_shuffle() {
        let factors = vec![PhaseVector::from_phases([0.0, 0.4]), PhaseVector::from_phases([0.0, 1.3])];
        let r = rearrange(&factors, &[false, true], &[]).unwrap();
        assert_eq!(r.permutation.index_map(), &[0, 2, 1, 3]);
        assert_eq!(r.designed, vec![true, false]);
    }

    #[test]
    fn rearrange_random_masks_reconstruct() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..300 {
            let d = 7;
            let factors: Vec<PhaseVector> = (0..d).map(|_| random_phase(&mut rng, 2)).collect();
            let mask: Vec<bool> = (0..d).map(|_| rng.random_bool(0.4)).collect();
            let chain = KroneckerChain::new((0..d).map(|_| random_phase(&mut rng, 2)).collect()).unwrap();
            let r = rearrange(&factors, &mask, std::slice::from_ref(&chain)).unwrap();
            let g = mask.iter().filter(|&&b| b).count();
            assert!(r.designed[..g].iter().all(|&b| b));
            assert!(r.designed[g..].iter().all(|&b| !b));
            let orig = kron_all(factors.iter());
            let back = r.permutation.apply(&kron_all(r.factors.iter()));
            assert!(orig.iter().zip(&back).all(|(a, b)| (a - b).norm() < 1e-12));
            let orig = chain.materialize();
            let back = r.permutation.apply(&r.chains[0].materialize());
            assert!(orig.iter().zip(&back).all(|(a, b)| (a - b).norm() < 1e-12));
        }
    }

    #[test]
    fn rearrange_mixed_lengths() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let factors: Vec<PhaseVector> = [2, 3, 2, 5].iter().map(|&n| random_phase(&mut rng, n)).collect();
        let mask = [false, false, true, true];
        let r = rearrange(&factors, &mask, &[]).unwrap();
        assert_eq!(r.factors.iter().map(PhaseVector::len).collect::<Vec<_>>(), vec![5, 2, 3, 2]);
        let orig = kron_all(factors.iter());
        let back = r.permutation.apply(&kron_all(r.factors.iter()));
        assert!(orig.iter().zip(&back).all(|(a, b)| (a - b).norm() < 1e-12));
    }

    #[test]
    fn enhancement_examples() {
        let chain = KroneckerChain::new(vec![PhaseVector::ones(3)]).unwrap();
        let res = enhance_full(&[], &[chain], &[c(2.0, 0.0)]);
        assert!(res.as_slice().iter().all(|z| (z - c(1.0, 0.0)).norm() < 1e-15));

        let g = [c(1.0, 0.0), c(0.0, 1.0), c(-1.0, 0.0)];
        let f = PhaseVector::phase_of(&g);
        assert_eq!(f.as_slice(), &g);
        assert!((f.inner(&g).norm() - 3.0).abs() < 1e-15);
        assert_eq!(PhaseVector::phase_of(&[c(0.0, 0.0)]).as_slice(), &[c(1.0, 0.0)]);
    }

    #[test]
    fn enhancement_beats_random_probes() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g: Vec<Complex64> = (0..8).map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
        let f = PhaseVector::phase_of(&g);
        let best = f.inner(&g).norm();
        for _ in 0..10_000 {
            let w = random_phase(&mut rng, 8);
            assert!(best >= w.inner(&g).norm());
        }
    }

    #[test]
    fn measure_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let sc = scenario(&mut rng, 2, 2, 1, &[1], 1);
        let sf = ScenarioFactors::new(&sc, NullingRule::Exact).unwrap();
        let los = measure_matrix_los(&sf, 0).unwrap();
        // Candidate equal to the LoS nulling factor scores zero.
        let mut sf2 = sf.clone();
        sf2.candidates[0][0] = nulling_factor(&sf.users[0].paths[0].factors()[0]).unwrap();
        assert!(measure_matrix_los(&sf2, 0).unwrap().get(0, 0) < 1e-15);
        // Conjugate-aligned candidate scores the factor length.
        sf2.candidates[1][0] = sf.users[0].paths[0].factors()[1].clone();
        assert!((measure_matrix_los(&sf2, 0).unwrap().get(1, 0) - 2.0).abs() < 1e-14);
        let full = measure_matrix_full(&sf2, 0).unwrap();
        let alpha = sf.users[0].gains[0].norm();
        assert!((full.get(1, 0) - 2.0 * alpha.powf(0.5)).abs() < 1e-12);
        assert_eq!(los.num_factors(), 2);
    }

    #[test]
    fn measure_full_matches_direct_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let sc = scenario(&mut rng, 4, 8, 2, &[1, 2], 2);
        let sf = ScenarioFactors::new(&sc, NullingRule::Exact).unwrap();
        let d = sf.num_factors();
        for k in 0..2 {
            let u = measure_matrix_full(&sf, k).unwrap();
            for dd in 0..d {
                for e in 0..3 {
                    let mut acc = c(0.0, 0.0);
                    for (l, p) in sc.users[k].paths.iter().enumerate() {
                        let gain = p.alpha * crate::channel::ula_steering(p.angles.phi_t, &sc.geometry).inner(sc.users[k].v.as_slice());
                        let root = gain.powc(c(1.0 / d as f64, 0.0));
                        let fac = &sf.users[k].paths[l].factors()[dd];
                        acc += root * sf.candidates[dd][e].inner(fac.as_slice());
                    }
                    assert!((u.get(dd, e) - acc.norm()).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn designed_column_nulls_and_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..50 {
            let sc = scenario(&mut rng, 8, 16, 4, &[1, 1], 2);
            let sf = ScenarioFactors::new(&sc, NullingRule::Exact).unwrap();
            for k in 0..4 {
                let a = allocate_factors(&measure_matrix_full(&sf, k).unwrap()).unwrap();
                let col = design_column(&sf, k, &a, EnhanceMode::Full).unwrap();
                let rec = col.reconstruct();
                assert!(rec.iter().zip(col.f_rf.as_slice()).all(|(x, y)| (x - y).norm() < 1e-12));
                for ic in &sf.interference {
                    let r = col.f_rf.inner(&ic.materialize()).norm() / 128.0;
                    assert!(r <= 1e-12, "residual {r}");
                }
                let g = sc.users[k].effective();
                let obj = col.f_rf.inner(g.as_slice()).norm();
                let score = enhancement_score(&sf, k, &a);
                assert!((obj - score).abs() <= 1e-9 * score);
            }
        }
    }

    #[test]
    fn feasibility_rule() {
        assert!(check_feasible(&[2; 7], 2, 4).is_ok());
        assert!(check_feasible(&[2; 4], 2, 4).is_ok());
        assert!(matches!(check_feasible(&[2; 3], 2, 4), Err(Error::Infeasible { .. })));
        assert!(check_feasible(&[2; 2], 3, 1).is_err());
        assert!(check_feasible(&[2, 3], 1, 2).is_ok());
        assert!(check_feasible(&[2, 3], 1, 3).is_err());
    }

    #[test]
    fn chain_factor_count_matches_geometry() {
        let chain = primitive_decompose_ramp(0.3, 16).unwrap();
        assert_eq!(chain.num_factors(), 4);
    }
}
