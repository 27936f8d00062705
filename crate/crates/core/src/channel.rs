//! Array steering vectors and the multipath channel models: Rician
//! Saleh-Valenzuela user channels seen through a UPA at the base station and a
//! ULA at the UE, plus multipath inter-cell interference channels.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::kron::{kron, primitive_decompose_ramp, KroneckerChain, PhaseVector};
use crate::numerics::{top_two_eigpairs, HermitianMatrix};
use crate::{CMatrix, CVector, Error, Result};

/// Base-station UPA and UE ULA dimensions. Spacings are in wavelengths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    /// Rows of the UPA (vertical element count, `M`).
    pub rows: usize,
    /// Columns of the UPA (horizontal element count, `N`).
    pub cols: usize,
    pub d_h: f64,
    pub d_v: f64,
    pub d_t: f64,
    /// UE antenna count (`Q`).
    pub ue_antennas: usize,
}

impl ArrayGeometry {
    /// Half-wavelength spacing everywhere.
    pub fn new(rows: usize, cols: usize, ue_antennas: usize) -> Result<Self> {
        Self::with_spacing(rows, cols, ue_antennas, 0.5, 0.5, 0.5)
    }

    pub fn with_spacing(
        rows: usize,
        cols: usize,
        ue_antennas: usize,
        d_h: f64,
        d_v: f64,
        d_t: f64,
    ) -> Result<Self> {
        if rows == 0 || cols == 0 || ue_antennas == 0 {
            return Err(Error::InvalidArgument(format!(
                "array dimensions must be positive (M={rows}, N={cols}, Q={ue_antennas})"
            )));
        }
        for (name, d) in [("d_h", d_h), ("d_v", d_v), ("d_t", d_t)] {
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {d}")));
            }
        }
        Ok(Self { rows, cols, d_h, d_v, d_t, ue_antennas })
    }

    /// `MN`.
    pub fn num_elements(&self) -> usize {
        self.rows * self.cols
    }

    /// Lengths of the Kronecker factors of a receive steering vector:
    /// horizontal primes then vertical primes.
    pub fn factor_lengths(&self) -> Vec<usize> {
        let mut out = crate::kron::prime_factors(self.cols);
        out.extend(crate::kron::prime_factors(self.rows));
        if out.is_empty() {
            out.push(1);
        }
        out
    }
}

/// Angles of one propagation path. `phi_t` is meaningless for interference
/// paths and set to zero there.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathAngles {
    /// Horizontal angle of arrival.
    pub phi_r: f64,
    /// Vertical angle of arrival, measured from zenith, in `[0, π]`.
    pub theta_r: f64,
    /// Angle of departure at the UE array.
    pub phi_t: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Path {
    pub alpha: Complex64,
    pub angles: PathAngles,
}

/// Horizontal inter-element phase `2π d_h sinθ sinφ`.
pub fn horizontal_phase(phi_r: f64, theta_r: f64, geometry: &ArrayGeometry) -> f64 {
    TAU * geometry.d_h * theta_r.sin() * phi_r.sin()
}

/// Vertical inter-element phase `2π d_v cosθ`.
pub fn vertical_phase(theta_r: f64, geometry: &ArrayGeometry) -> f64 {
    TAU * geometry.d_v * theta_r.cos()
}

/// UE transmit steering vector, entry `q = e^{j 2π q d_t sin φ_t}`.
pub fn ula_steering(phi_t: f64, geometry: &ArrayGeometry) -> PhaseVector {
    PhaseVector::ramp(TAU * geometry.d_t * phi_t.sin(), geometry.ue_antennas)
}

/// Base-station receive steering vector `a_h(Φ) ⊗ a_v(Θ)`.
pub fn upa_steering(phi_r: f64, theta_r: f64, geometry: &ArrayGeometry) -> PhaseVector {
    let h = PhaseVector::ramp(horizontal_phase(phi_r, theta_r, geometry), geometry.cols);
    let v = PhaseVector::ramp(vertical_phase(theta_r, geometry), geometry.rows);
    PhaseVector::new(kron(h.as_slice(), v.as_slice())).expect("product of unit-modulus ramps")
}

/// Prime-length Kronecker factors of [`upa_steering`]: the horizontal ramp's
/// factors followed by the vertical ramp's.
pub fn upa_factors(phi_r: f64, theta_r: f64, geometry: &ArrayGeometry) -> KroneckerChain {
    let h = primitive_decompose_ramp(horizontal_phase(phi_r, theta_r, geometry), geometry.cols)
        .expect("cols validated positive");
    let v = primitive_decompose_ramp(vertical_phase(theta_r, geometry), geometry.rows)
        .expect("rows validated positive");
    // Length-1 placeholder factors (M or N equal to 1) carry no information.
    let factors: Vec<_> = h
        .into_factors()
        .into_iter()
        .chain(v.into_factors())
        .filter(|f| f.len() > 1)
        .collect();
    if factors.is_empty() {
        KroneckerChain::new(vec![PhaseVector::ones(1)]).expect("nonempty")
    } else {
        KroneckerChain::new(factors).expect("nonempty")
    }
}

fn as_cvector(p: &PhaseVector) -> CVector {
    CVector::from_column_slice(p.as_slice())
}

/// Channel from one intra-cell UE: `G = Σ_l α_l a_r a_tᴴ` and its precoder.
#[derive(Debug, Clone)]
pub struct UserChannel {
    /// `MN × Q` channel matrix.
    pub g: CMatrix,
    /// Path 0 is the LoS path.
    pub paths: Vec<Path>,
    /// Unit-norm precoder (dominant right singular vector of `g`).
    pub v: CVector,
}

impl UserChannel {
    /// Assembles `G` from paths and computes the precoder.
    pub fn from_paths(paths: Vec<Path>, geometry: &ArrayGeometry) -> Result<Self> {
        if paths.is_empty() {
            return Err(Error::InvalidArgument("a user channel needs at least one path".into()));
        }
        let mut g = CMatrix::zeros(geometry.num_elements(), geometry.ue_antennas);
        for p in &paths {
            let ar = as_cvector(&upa_steering(p.angles.phi_r, p.angles.theta_r, geometry));
            let at = as_cvector(&ula_steering(p.angles.phi_t, geometry));
            g += (ar * at.adjoint()).scale(1.0) * p.alpha;
        }
        let v = precoder(&g)?;
        Ok(Self { g, paths, v })
    }

    /// Effective channel `G v`.
    pub fn effective(&self) -> CVector {
        &self.g * &self.v
    }

    /// Effective path gain `α a_tᴴ(φ_t) v` of path `l`.
    pub fn effective_gain(&self, l: usize, geometry: &ArrayGeometry) -> Complex64 {
        let p = &self.paths[l];
        let at = ula_steering(p.angles.phi_t, geometry);
        p.alpha * at.inner(self.v.as_slice())
    }
}

/// Channel from one inter-cell interferer: `h = Σ_γ α_γ a_r`.
#[derive(Debug, Clone)]
pub struct InterferenceChannel {
    pub h: CVector,
    pub paths: Vec<Path>,
}

impl InterferenceChannel {
    pub fn from_paths(paths: Vec<Path>, geometry: &ArrayGeometry) -> Result<Self> {
        if paths.is_empty() {
            return Err(Error::InvalidArgument("an interference channel needs at least one path".into()));
        }
        let mut h = CVector::zeros(geometry.num_elements());
        for p in &paths {
            h += as_cvector(&upa_steering(p.angles.phi_r, p.angles.theta_r, geometry)) * p.alpha;
        }
        Ok(Self { h, paths })
    }
}

/// One channel realization with transmit powers (linear scale).
#[derive(Debug, Clone)]
pub struct Scenario {
    pub geometry: ArrayGeometry,
    pub users: Vec<UserChannel>,
    pub interferers: Vec<InterferenceChannel>,
    pub p_u: f64,
    pub p_i: f64,
    pub n0: f64,
    g_eff: CMatrix,
    h_mat: CMatrix,
}

impl Scenario {
    pub fn new(
        geometry: ArrayGeometry,
        users: Vec<UserChannel>,
        interferers: Vec<InterferenceChannel>,
        p_u: f64,
        p_i: f64,
        n0: f64,
    ) -> Result<Self> {
        if users.is_empty() {
            return Err(Error::InvalidArgument("scenario needs at least one user".into()));
        }
        for (name, p) in [("P_U", p_u), ("P_I", p_i), ("N0", n0)] {
            if !(p > 0.0 && p.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {p}")));
            }
        }
        let mn = geometry.num_elements();
        if users.iter().any(|u| u.g.nrows() != mn) || interferers.iter().any(|i| i.h.len() != mn) {
            return Err(Error::InvalidArgument("channel dimensions do not match the array".into()));
        }
        let cols: Vec<CVector> = users.iter().map(UserChannel::effective).collect();
        let g_eff = CMatrix::from_columns(&cols);
        let h_mat = if interferers.is_empty() {
            CMatrix::zeros(mn, 0)
        } else {
            CMatrix::from_columns(&interferers.iter().map(|i| i.h.clone()).collect::<Vec<_>>())
        };
        Ok(Self { geometry, users, interferers, p_u, p_i, n0, g_eff, h_mat })
    }

    /// Same channels, different powers.
    pub fn with_powers(&self, p_u: f64, p_i: f64, n0: f64) -> Result<Self> {
        Self::new(self.geometry, self.users.clone(), self.interferers.clone(), p_u, p_i, n0)
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    /// `Γ = Σ_ψ Γ_ψ`.
    pub fn total_interference_paths(&self) -> usize {
        self.interferers.iter().map(|i| i.paths.len()).sum()
    }

    /// `G V`, one column `G_k v_k` per user.
    pub fn effective_channel(&self) -> &CMatrix {
        &self.g_eff
    }

    /// `H`, one column per interferer.
    pub fn interference_matrix(&self) -> &CMatrix {
        &self.h_mat
    }
}

/// Parameters of the random channel generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    /// Rician K-factor, linear.
    pub kappa: f64,
    /// Paths per user `L_k` (LoS included).
    pub paths_per_user: usize,
    pub cell_radius_m: f64,
    pub bs_height_m: f64,
    pub ue_height_min_m: f64,
    pub ue_height_max_m: f64,
    /// Horizontal NLoS angular spread (full width, radians).
    pub spread_h: f64,
    /// Vertical NLoS angular spread (full width, radians).
    pub spread_v: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self {
            kappa: 10f64.powf(0.5),
            paths_per_user: 2,
            cell_radius_m: 100.0,
            bs_height_m: 10.0,
            ue_height_min_m: 1.5,
            ue_height_max_m: 22.5,
            spread_h: PI,
            spread_v: PI / 2.0,
        }
    }
}

fn wrap_angle(x: f64) -> f64 {
    x.rem_euclid(TAU)
}

/// Circularly symmetric complex Gaussian with unit variance.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// LoS angles of a UE dropped uniformly on the cell disc.
///
/// The UE's ULA axis is aligned with the global x axis, so the LoS departure
/// angle is the reverse bearing.
pub fn sample_los_angles<R: Rng + ?Sized>(params: &ChannelParams, rng: &mut R) -> PathAngles {
    let r = params.cell_radius_m * rng.random::<f64>().sqrt();
    let bearing = rng.random_range(0.0..TAU);
    let h_ue = if params.ue_height_max_m > params.ue_height_min_m {
        rng.random_range(params.ue_height_min_m..params.ue_height_max_m)
    } else {
        params.ue_height_min_m
    };
    let theta = r.atan2(h_ue - params.bs_height_m);
    PathAngles { phi_r: bearing, theta_r: theta, phi_t: wrap_angle(bearing + PI) }
}

fn sample_nlos_angles<R: Rng + ?Sized>(los: &PathAngles, params: &ChannelParams, rng: &mut R) -> PathAngles {
    let half_h = 0.5 * params.spread_h;
    let half_v = 0.5 * params.spread_v;
    let mut offset = |half: f64| if half > 0.0 { rng.random_range(-half..half) } else { 0.0 };
    let phi_r = wrap_angle(los.phi_r + offset(half_h));
    let theta_r = (los.theta_r + offset(half_v)).clamp(0.0, PI);
    let phi_t = wrap_angle(los.phi_t + offset(half_h));
    PathAngles { phi_r, theta_r, phi_t }
}

/// Draws one user channel.
///
/// The LoS gain is `√(κ/(1+κ)) e^{jΦ}` with uniform `Φ`; each of the
/// `L_k − 1` NLoS gains is `√(1/((1+κ)(L_k−1))) α′` with `α′ ~ CN(0,1)`.
pub fn gen_user_channel<R: Rng + ?Sized>(
    geometry: &ArrayGeometry,
    params: &ChannelParams,
    rng: &mut R,
) -> Result<UserChannel> {
    let l_k = params.paths_per_user;
    if l_k == 0 {
        return Err(Error::InvalidArgument("L_k must be at least 1".into()));
    }
    let kappa = params.kappa;
    let los = sample_los_angles(params, rng);
    let los_phase = rng.random_range(0.0..TAU);
    let mut paths = Vec::with_capacity(l_k);
    paths.push(Path {
        alpha: Complex64::from_polar((kappa / (1.0 + kappa)).sqrt(), los_phase),
        angles: los,
    });
    if l_k > 1 {
        let nlos_amp = (1.0 / ((1.0 + kappa) * (l_k - 1) as f64)).sqrt();
        for _ in 1..l_k {
            let angles = sample_nlos_angles(&los, params, rng);
            let alpha = complex_normal(rng) * nlos_amp;
            paths.push(Path { alpha, angles });
        }
    }
    UserChannel::from_paths(paths, geometry)
}

/// Keeps every angle and the LoS gain of `user`, redraws the NLoS gains.
pub fn redraw_nlos_gains<R: Rng + ?Sized>(
    user: &UserChannel,
    geometry: &ArrayGeometry,
    params: &ChannelParams,
    rng: &mut R,
) -> Result<UserChannel> {
    let l_k = user.paths.len();
    let mut paths = user.paths.clone();
    if l_k > 1 {
        let nlos_amp = (1.0 / ((1.0 + params.kappa) * (l_k - 1) as f64)).sqrt();
        for p in paths.iter_mut().skip(1) {
            p.alpha = complex_normal(rng) * nlos_amp;
        }
    }
    UserChannel::from_paths(paths, geometry)
}

/// Draws one interference channel with `gamma_psi` paths, gains
/// `α′/√Γ_ψ`, and AoAs uniform in `[0, 2π)`.
///
/// The vertical draw is folded into `[0, π]` as `π − (θ mod π)`.
pub fn gen_interference_channel<R: Rng + ?Sized>(
    geometry: &ArrayGeometry,
    gamma_psi: usize,
    rng: &mut R,
) -> Result<InterferenceChannel> {
    if gamma_psi == 0 {
        return Err(Error::InvalidArgument("Γ_ψ must be at least 1".into()));
    }
    let scale = 1.0 / (gamma_psi as f64).sqrt();
    let paths = (0..gamma_psi)
        .map(|_| {
            let phi_r = rng.random_range(0.0..TAU);
            let raw: f64 = rng.random_range(0.0..TAU);
            let theta_r = PI - raw.rem_euclid(PI);
            let alpha = complex_normal(rng) * scale;
            Path { alpha, angles: PathAngles { phi_r, theta_r, phi_t: 0.0 } }
        })
        .collect();
    InterferenceChannel::from_paths(paths, geometry)
}

/// Unit-norm dominant right singular vector of `g` (top eigenvector of `gᴴg`).
///
/// The global phase is fixed by making the first non-negligible coordinate
/// real and positive. When the top two eigenvalues of `gᴴg` agree within
/// 1e-12 relative, the eigenvector with the largest first coordinate inside
/// the top eigenspace is returned.
pub fn precoder(g: &CMatrix) -> Result<CVector> {
    if g.iter().all(|z| *z == Complex64::new(0.0, 0.0)) {
        return Err(Error::InvalidArgument("precoder of an all-zero channel".into()));
    }
    let gram = HermitianMatrix::new(g.adjoint() * g)?;
    let (top, second) = top_two_eigpairs(&gram)?;
    let mut v = top.vector;
    if let Some(s) = second {
        if top.value - s.value < 1e-12 * top.value.abs() {
            // Project e₁ onto span{v₁, v₂}.
            let mut w = &v * v[0].conj() + &s.vector * s.vector[0].conj();
            let n = w.norm();
            if n > 1e-12 {
                w.unscale_mut(n);
                v = w;
            }
        }
    }
    let anchor = v.iter().copied().find(|z| z.norm() > 1e-12).unwrap_or(Complex64::new(1.0, 0.0));
    let rot = anchor.conj() / anchor.norm();
    v *= rot;
    let n = v.norm();
    v.unscale_mut(n);
    Ok(v)
}
