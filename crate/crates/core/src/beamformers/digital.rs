//! Linear-MMSE digital combining, after an analog stage or fully digital.

use crate::channel::Scenario;
use crate::numerics::{hpd_solve, HermitianMatrix};
use crate::{CMatrix, Error, Result};

/// `F_BB = C⁻¹ A P_U` with `A = F_RFᴴ G V` and
/// `C = P_U A Aᴴ + P_I (F_RFᴴH)(F_RFᴴH)ᴴ + N0 F_RFᴴ F_RF`.
///
/// Column `k` is the linear-MMSE estimator of `x_k` from `F_RFᴴ y`.
pub fn mmse_digital(f_rf: &CMatrix, scenario: &Scenario) -> Result<CMatrix> {
    let mn = scenario.geometry.num_elements();
    if f_rf.nrows() != mn {
        return Err(Error::InvalidArgument(format!(
            "analog matrix has {} rows, array has {mn} elements",
            f_rf.nrows()
        )));
    }
    let fh = f_rf.adjoint();
    let a = &fh * scenario.effective_channel();
    let b = &fh * scenario.interference_matrix();
    let c = (&a * a.adjoint()).scale(scenario.p_u)
        + (&b * b.adjoint()).scale(scenario.p_i)
        + (&fh * f_rf).scale(scenario.n0);
    hpd_solve(&HermitianMatrix::new(c)?, &a.scale(scenario.p_u))
}

/// Fully digital MMSE combiner `W = C⁻¹ G V P_U` with
/// `C = P_U G V (G V)ᴴ + P_I H Hᴴ + N0 I`.
///
/// Solved through the Woodbury identity on the `(K + Ψ)`-dimensional
/// inner system, which is equivalent to [`mmse_digital`] with `F_RF = I`.
pub fn pure_mmse_combiner(scenario: &Scenario) -> Result<CMatrix> {
    let g = scenario.effective_channel();
    let h = scenario.interference_matrix();
    let (mn, k) = g.shape();
    let psi = h.ncols();
    let mut at = CMatrix::zeros(mn, k + psi);
    at.columns_mut(0, k).copy_from(&g.scale(scenario.p_u.sqrt()));
    if psi > 0 {
        at.columns_mut(k, psi).copy_from(&h.scale(scenario.p_i.sqrt()));
    }
    let n0 = scenario.n0;
    let x = g.scale(scenario.p_u);
    let ath = at.adjoint();
    let inner = &ath * &at + CMatrix::identity(k + psi, k + psi).scale(n0);
    let y = hpd_solve(&HermitianMatrix::new(inner)?, &(&ath * &x))?;
    Ok((x - at * y).unscale(n0))
}
