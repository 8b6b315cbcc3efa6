//! Boundary structure of the theory with the torsion equation imposed by a
//! Lagrange multiplier `t ∈ Ω²(Λ³V)`.
//!
//! Boundary fields are `(𝐭, 𝐞)` with `ϖ = ∫ Tr[δ𝐭 δ𝐞]`. Global linear algebra
//! (tangent spaces of loci and their symplectic orthogonals) is done densely,
//! so it is intended for `n = 2`.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::algebra::{self, Bivector6, Gamma, Signature};
use crate::error::{Error, Result};
use crate::grid::{curvature, site_wedge, wedge_fields, Coframe, Exterior, FormField, Grid3, TracePairing};
use crate::wedge::{self, Shape, RANK_GAP};

#[derive(Clone, Debug)]
pub struct HalfShellState {
    pub e: Coframe,
    pub omega: FormField,
    pub t: FormField,
    /// Reference connection `ω̲`.
    pub omega_ref: FormField,
    pub gamma: Gamma,
    pub sig: Signature,
}

impl HalfShellState {
    pub fn new(
        e: Coframe,
        omega: FormField,
        t: FormField,
        omega_ref: FormField,
        gamma: Gamma,
        sig: Signature,
    ) -> Result<Self> {
        let g = e.grid();
        if omega.grid() != g || t.grid() != g || omega_ref.grid() != g {
            return Err(Error::GridMismatch);
        }
        for (f, p, k) in [(&omega, 1, 2), (&t, 2, 3), (&omega_ref, 1, 2)] {
            if f.degree() != p || f.grade() != k {
                return Err(Error::Shape("half-shell field has the wrong degree or grade".into()));
            }
        }
        Ok(HalfShellState { e, omega, t, omega_ref, gamma, sig })
    }
}

/// `T_γ` applied to the values of a bivector-valued form.
pub fn twist_field(f: &FormField, gamma: Gamma, sig: Signature) -> Result<FormField> {
    if f.grade() != 2 {
        return Err(Error::Shape("twist acts on bivector values".into()));
    }
    let mut out = f.clone();
    for chunk in out.data_mut().chunks_exact_mut(6) {
        let b = Bivector6(core::array::from_fn(|i| chunk[i]));
        chunk.copy_from_slice(&algebra::t_gamma(&b, gamma, sig).0);
    }
    Ok(out)
}

pub fn untwist_field(f: &FormField, gamma: Gamma, sig: Signature) -> Result<FormField> {
    if f.grade() != 2 {
        return Err(Error::Shape("twist acts on bivector values".into()));
    }
    let mut out = f.clone();
    for chunk in out.data_mut().chunks_exact_mut(6) {
        let b = Bivector6(core::array::from_fn(|i| chunk[i]));
        chunk.copy_from_slice(&algebra::t_gamma_inverse(&b, gamma, sig)?.0);
    }
    Ok(out)
}

/// `𝐭 = t + T_γ[ω̲ − ω] ∧ e`, `𝐞 = e`.
pub fn hs_project(state: &HalfShellState) -> Result<(FormField, Coframe)> {
    let diff = state.omega_ref.axpy(-1.0, &state.omega)?;
    let tw = wedge_fields(&Exterior, &twist_field(&diff, state.gamma, state.sig)?, state.e.field())?;
    Ok((state.t.axpy(1.0, &tw)?, state.e.clone()))
}

/// Moves `(ω, t)` along the kernel direction generated by `v`.
pub fn kernel_flow(state: &HalfShellState, v: &FormField, s: f64) -> Result<HalfShellState> {
    let tv = wedge_fields(&Exterior, &twist_field(v, state.gamma, state.sig)?, state.e.field())?;
    Ok(HalfShellState {
        omega: state.omega.axpy(s, v)?,
        t: state.t.axpy(s, &tv)?,
        ..state.clone()
    })
}

/// The reduced-class coordinate `T_γ[ω − ω_ref] ∧ e`.
pub fn class_coordinate(
    e: &Coframe,
    omega: &FormField,
    omega_ref: &FormField,
    gamma: Gamma,
    sig: Signature,
) -> Result<FormField> {
    let d = omega.axpy(-1.0, omega_ref)?;
    wedge_fields(&Exterior, &twist_field(&d, gamma, sig)?, e.field())
}

/// Solves `c ∧ e = rhs` for `c` in the complement of `ker W_e^{(1,2)}`, site by site.
fn solve_wedge12(e: &Coframe, rhs: &FormField, sig: Signature) -> Result<FormField> {
    let g = e.grid();
    let mut out = FormField::zeros(g, 1, 2);
    for s in 0..g.sites() {
        let sp = wedge::split(&e.at(s), sig, Shape::S12)?;
        let m = &sp.matrix * &sp.complement_u;
        let z = m.lu().solve(&DVector::from_column_slice(rhs.site(s))).ok_or(Error::PhiSingular { site: s })?;
        out.site_mut(s).copy_from_slice((&sp.complement_u * z).as_slice());
    }
    Ok(out)
}

/// `𝐭 ↦ ω` with `T_γ[ω − ω_ref] ∧ 𝐞 = 𝐭`, the difference taken in the twisted complement.
pub fn phi_symplecto(
    t_bold: &FormField,
    e_bold: &Coframe,
    omega_ref: &FormField,
    gamma: Gamma,
    sig: Signature,
) -> Result<FormField> {
    if t_bold.degree() != 2 || t_bold.grade() != 3 {
        return Err(Error::Shape("𝐭 must be a trivector-valued 2-form".into()));
    }
    let c = solve_wedge12(e_bold, t_bold, sig)?;
    omega_ref.axpy(1.0, &untwist_field(&c, gamma, sig)?)
}

/// Pushforward of a tangent `(X_𝐭, X_𝐞)` under [`phi_symplecto`] at `(𝐭, 𝐞)`.
pub fn phi_pushforward(
    t_bold: &FormField,
    e_bold: &Coframe,
    omega_ref: &FormField,
    gamma: Gamma,
    sig: Signature,
    x_t: &FormField,
    x_e: &FormField,
) -> Result<FormField> {
    let omega = phi_symplecto(t_bold, e_bold, omega_ref, gamma, sig)?;
    let td = twist_field(&omega.axpy(-1.0, omega_ref)?, gamma, sig)?;
    let rhs = x_t.axpy(-1.0, &wedge_fields(&Exterior, &td, x_e)?)?;
    untwist_field(&solve_wedge12(e_bold, &rhs, sig)?, gamma, sig)
}

/// `ϖ((X_𝐭, X_𝐞), (Y_𝐭, Y_𝐞)) = −h³ Σ [Tr(X_𝐭 ∧ Y_𝐞) − Tr(Y_𝐭 ∧ X_𝐞)]`, with the
/// same graded orientation as the unreduced two-form.
pub fn hs_two_form(x_t: &FormField, x_e: &FormField, y_t: &FormField, y_e: &FormField) -> Result<f64> {
    let a = crate::grid::integrate(&wedge_fields(&TracePairing, x_t, y_e)?)?;
    let b = crate::grid::integrate(&wedge_fields(&TracePairing, y_t, x_e)?)?;
    Ok(-(a - b))
}

/// `h³ Σ [T̂(X_e ∧ e ∧ Y_ω) − T̂(Y_e ∧ e ∧ X_ω)]`, the unreduced two-form on raw tangents.
pub fn pch_two_form(
    e: &Coframe,
    gamma: Gamma,
    sig: Signature,
    x_e: &FormField,
    x_w: &FormField,
    y_e: &FormField,
    y_w: &FormField,
) -> Result<f64> {
    let tw = crate::grid::TwistedPairing { inv_gamma: gamma.inverse(), sig };
    let xe = wedge_fields(&Exterior, x_e, e.field())?;
    let ye = wedge_fields(&Exterior, y_e, e.field())?;
    let a = crate::grid::integrate(&wedge_fields(&tw, &xe, y_w)?)?;
    let b = crate::grid::integrate(&wedge_fields(&tw, &ye, x_w)?)?;
    Ok(a - b)
}

// ---------------------------------------------------------------------------
// Loci

/// `C(𝐞) = 𝐞 ∧ T_γ[F_ω̲] + Λ 𝐞³`, a trivector-valued 3-form.
pub fn locus_residual(e: &Coframe, omega_ref: &FormField, gamma: Gamma, sig: Signature, lambda: f64) -> Result<FormField> {
    let tf = twist_field(&curvature(omega_ref, sig)?, gamma, sig)?;
    let mut c = wedge_fields(&Exterior, e.field(), &tf)?;
    let e3 = wedge_fields(&Exterior, &wedge_fields(&Exterior, e.field(), e.field())?, e.field())?;
    c = c.axpy(lambda, &e3)?;
    Ok(c)
}

/// `Λ` minimising `‖C(𝐞)‖` and the remaining residual.
pub fn solve_lambda(e: &Coframe, omega_ref: &FormField, gamma: Gamma, sig: Signature) -> Result<(f64, f64)> {
    let c0 = locus_residual(e, omega_ref, gamma, sig, 0.0)?;
    let c1 = locus_residual(e, omega_ref, gamma, sig, 1.0)?.axpy(-1.0, &c0)?;
    let den: f64 = c1.data().iter().map(|x| x * x).sum();
    if den == 0.0 {
        return Err(Error::DegenerateCoframe { site: 0, ratio: 0.0 });
    }
    let lam = -c0.data().iter().zip(c1.data()).map(|(a, b)| a * b).sum::<f64>() / den;
    Ok((lam, c0.axpy(lam, &c1)?.sup_norm()))
}

/// Which defining equations cut out the locus.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Locus {
    /// `𝐭 = 0`.
    TZero,
    /// `𝐭 = 0` and `C(𝐞) = 0`.
    Full,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IsotropyReport {
    pub locus: Locus,
    pub phase_dim: usize,
    pub tangent_dim: usize,
    pub orthogonal_dim: usize,
    /// `max |ϖ(X, Y)|` over pairs of tangent basis vectors.
    pub max_pairing: f64,
    /// `sup |C(𝐞)|` at the point.
    pub locus_residual: f64,
    /// Smallest singular-value gap of the two rank decisions.
    pub rank_gap: f64,
}

impl IsotropyReport {
    pub fn isotropic(&self, tol: f64) -> bool {
        self.max_pairing <= tol
    }

    pub fn lagrangian(&self) -> bool {
        self.orthogonal_dim == self.tangent_dim
    }
}

fn t_len(g: Grid3) -> usize {
    g.sites() * 12
}

/// Matrix of `ϖ` on the coordinates `(𝐭, 𝐞)`.
pub fn hs_gram(g: Grid3) -> Result<DMatrix<f64>> {
    let n = 2 * t_len(g);
    let unit = |k: usize| -> (FormField, FormField) {
        let mut t = FormField::zeros(g, 2, 3);
        let mut e = FormField::zeros(g, 1, 1);
        if k < t_len(g) {
            t.data_mut()[k] = 1.0;
        } else {
            e.data_mut()[k - t_len(g)] = 1.0;
        }
        (t, e)
    };
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        let (xt, xe) = unit(i);
        for j in (i + 1)..n {
            let (yt, ye) = unit(j);
            let v = hs_two_form(&xt, &xe, &yt, &ye)?;
            m[(i, j)] = v;
            m[(j, i)] = -v;
        }
    }
    Ok(m)
}

/// Jacobian of the defining equations at `𝐞`, columns ordered `(𝐭, 𝐞)`.
pub fn locus_jacobian(
    e: &Coframe,
    omega_ref: &FormField,
    gamma: Gamma,
    sig: Signature,
    lambda: f64,
    locus: Locus,
) -> Result<DMatrix<f64>> {
    let g = e.grid();
    let nt = t_len(g);
    let rows = nt + if locus == Locus::Full { g.sites() * 4 } else { 0 };
    let mut j = DMatrix::zeros(rows, 2 * nt);
    for k in 0..nt {
        j[(k, k)] = 1.0;
    }
    if locus == Locus::Full {
        let tf = twist_field(&curvature(omega_ref, sig)?, gamma, sig)?;
        let ee = wedge_fields(&Exterior, e.field(), e.field())?;
        for s in 0..g.sites() {
            let es = e.field().site(s);
            for c in 0..12 {
                let mut x = [0.0; 12];
                x[c] = 1.0;
                let mut out = [0.0; 4];
                site_wedge(&Exterior, 1, 1, &x, 2, 2, tf.site(s), &mut out);
                let mut col = [0.0; 4];
                let mut xe = [0.0; 18];
                site_wedge(&Exterior, 1, 1, &x, 1, 1, es, &mut xe);
                let mut ex = [0.0; 18];
                site_wedge(&Exterior, 1, 1, es, 1, 1, &x, &mut ex);
                site_wedge(&Exterior, 2, 2, &xe, 1, 1, es, &mut col);
                site_wedge(&Exterior, 2, 2, &ex, 1, 1, es, &mut col);
                site_wedge(&Exterior, 2, 2, ee.site(s), 1, 1, &x, &mut col);
                for r in 0..4 {
                    j[(nt + 4 * s + r, nt + 12 * s + c)] = out[r] + lambda * col[r];
                }
            }
        }
    }
    Ok(j)
}

/// Rank with the singular-value gap at the cut.
pub fn gapped_rank(m: &DMatrix<f64>) -> Result<(usize, f64)> {
    let sv = m.clone().singular_values();
    let mut v: Vec<f64> = sv.iter().copied().collect();
    v.sort_by(|a, b| b.partial_cmp(a).unwrap_or(core::cmp::Ordering::Equal));
    let top = v.first().copied().unwrap_or(0.0);
    if top == 0.0 {
        return Ok((0, f64::INFINITY));
    }
    let rank = v.iter().filter(|&&x| x > 1e-9 * top).count();
    let gap = match (rank.checked_sub(1).map(|i| v[i]), v.get(rank)) {
        (Some(a), Some(&b)) if b > 0.0 => a / b,
        _ => f64::INFINITY,
    };
    if gap < RANK_GAP {
        return Err(Error::IllConditionedRank { gap });
    }
    Ok((rank, gap))
}

/// Tangent basis of a locus and the dimension of its symplectic orthogonal.
pub fn isotropy_diagnosis(
    e: &Coframe,
    omega_ref: &FormField,
    gamma: Gamma,
    sig: Signature,
    lambda: f64,
    locus: Locus,
) -> Result<IsotropyReport> {
    let g = e.grid();
    let n = 2 * t_len(g);
    let jac = locus_jacobian(e, omega_ref, gamma, sig, lambda, locus)?;
    let (rank_j, gap_j) = gapped_rank(&jac)?;
    let tangent = wedge::null_space_f64(&jac);
    if tangent.ncols() != n - rank_j {
        return Err(Error::IllConditionedRank { gap: gap_j });
    }
    let omega = hs_gram(g)?;
    let pair = tangent.transpose() * &omega * &tangent;
    let max_pairing = pair.amax();
    let (rank_o, gap_o) = gapped_rank(&(tangent.transpose() * &omega))?;
    let residual = locus_residual(e, omega_ref, gamma, sig, lambda)?.sup_norm();
    Ok(IsotropyReport {
        locus,
        phase_dim: n,
        tangent_dim: tangent.ncols(),
        orthogonal_dim: n - rank_o,
        max_pairing,
        locus_residual: if locus == Locus::Full { residual } else { 0.0 },
        rank_gap: gap_j.min(gap_o),
    })
}

/// Residuals of the two boundary loci at a point `(ω, e)` of the unreduced chart.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LociResiduals {
    /// `sup |T_γ[ω] ∧ e|`, normalised: the pulled-back half-shell condition.
    pub half_shell: f64,
    /// `sup |T_γ[ω − ω̲] ∧ e|`, normalised: the PCH condition on the reduced class.
    pub pch: f64,
}

pub fn loci_residuals(
    e: &Coframe,
    omega: &FormField,
    omega_ref: &FormField,
    gamma: Gamma,
    sig: Signature,
) -> Result<LociResiduals> {
    let zero = FormField::zeros(e.grid(), 1, 2);
    let scale = class_coordinate(e, omega_ref, &zero, gamma, sig)?.sup_norm().max(1e-300);
    Ok(LociResiduals {
        half_shell: class_coordinate(e, omega, &zero, gamma, sig)?.sup_norm() / scale,
        pch: class_coordinate(e, omega, omega_ref, gamma, sig)?.sup_norm() / scale,
    })
}

#[cfg(test)]
mod tests;
