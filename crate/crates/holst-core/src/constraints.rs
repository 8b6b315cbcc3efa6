//! Constraint functionals `L_α`, `J_μ` on the structural slice, their
//! Hamiltonian vector fields and Poisson brackets.
//!
//! A state is a coframe with a connection satisfying `p d_ω̃ e = 0`. A
//! functional `F` is extended off the slice by `F(e, ω) = F(e, ω̃(e, ω))`, so
//! gradients are taken in the unconstrained variables and pulled back through
//! the site map `ω ↦ ω̃`. Vector fields are tangent vectors `(X_e, X_ω)`; the
//! bracket is `{F, G} = X_F(G) = δG(X_F)`.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)]
use num_traits::Float;

use crate::algebra::{self, Bivector6, Gamma, Signature};
use crate::eh::{self, M3};
use crate::error::{Error, Result};
use crate::grid::{
    cov_deriv, form_index, integrate, partial, site_wedge, wedge_fields, Action, Coframe, Exterior, FormField,
    Grid3, TrigSpec, TwistedPairing, FORM_MASKS,
};
use crate::reduction::{omega_tilde_with, SiteSplits, Splits};

/// Largest accepted `sup |p d_ω̃ e|` for a state.
pub const STRUCTURAL_TOL: f64 = 1e-9;

/// A point of the structural slice.
#[derive(Clone, Debug)]
pub struct BoundaryState {
    pub e: Coframe,
    pub omega_tilde: FormField,
    pub gamma: Gamma,
    pub lambda: f64,
    pub sig: Signature,
    pub structural_residual: f64,
    splits: Splits,
}

impl BoundaryState {
    /// Solves for `ω̃` from any representative `omega` and certifies it.
    pub fn new(e: Coframe, omega: &FormField, gamma: Gamma, lambda: f64, sig: Signature) -> Result<Self> {
        if omega.grid() != e.grid() {
            return Err(Error::GridMismatch);
        }
        let splits = Splits::new(&e, sig)?;
        let r = omega_tilde_with(&splits, &e, omega)?;
        if !(r.structural_residual <= STRUCTURAL_TOL) {
            return Err(Error::OffShell(r.structural_residual));
        }
        Ok(BoundaryState {
            e,
            omega_tilde: r.omega_tilde,
            gamma,
            lambda,
            sig,
            structural_residual: r.structural_residual,
            splits,
        })
    }

    pub fn grid(&self) -> Grid3 {
        self.e.grid()
    }

    pub fn splits(&self) -> &Splits {
        &self.splits
    }

    pub fn with_gamma(&self, gamma: Gamma) -> Self {
        BoundaryState { gamma, ..self.clone() }
    }

    /// `(e + t X_e, ω̃ + t X_ω)` projected back to the slice.
    pub fn shifted(&self, x: &TangentVector, t: f64) -> Result<Self> {
        let e = Coframe::new(self.e.field().axpy(t, &x.de)?)?;
        let w = self.omega_tilde.axpy(t, &x.domega)?;
        BoundaryState::new(e, &w, self.gamma, self.lambda, self.sig)
    }

    /// `sup |d_ω̃ e|`, zero exactly on the full torsion constraint.
    pub fn torsion(&self) -> Result<f64> {
        Ok(cov_deriv(self.e.field(), &self.omega_tilde, self.sig)?.sup_norm())
    }
}

/// Smearing of a constraint functional.
#[derive(Clone, Debug)]
pub enum Constraint {
    /// `α ∈ Ω⁰(Λ²V)`.
    L(FormField),
    /// `μ ∈ Ω⁰(V)`.
    J(FormField),
}

impl Constraint {
    fn check(&self, grid: Grid3) -> Result<()> {
        let (f, k) = match self {
            Constraint::L(a) => (a, 2),
            Constraint::J(m) => (m, 1),
        };
        if f.grid() != grid {
            return Err(Error::GridMismatch);
        }
        if f.degree() != 0 || f.grade() != k {
            return Err(Error::Shape("smearing field has the wrong degree or grade".into()));
        }
        Ok(())
    }
}

/// `L_α = ∫ T̂_γ[α ∧ e ∧ d_ω̃ e]`.
pub fn eval_l(state: &BoundaryState, alpha: &FormField) -> Result<f64> {
    Constraint::L(alpha.clone()).check(state.grid())?;
    let de = cov_deriv(state.e.field(), &state.omega_tilde, state.sig)?;
    let ede = wedge_fields(&Exterior, state.e.field(), &de)?;
    let tw = TwistedPairing { inv_gamma: state.gamma.inverse(), sig: state.sig };
    integrate(&wedge_fields(&tw, alpha, &ede)?)
}

/// `J_μ = ∫ T̂_γ[μ ∧ e ∧ F_ω̃] + Tr[Λ μ ∧ e³]`.
pub fn eval_j(state: &BoundaryState, mu: &FormField) -> Result<f64> {
    Constraint::J(mu.clone()).check(state.grid())?;
    let f = crate::grid::curvature(&state.omega_tilde, state.sig)?;
    let me = wedge_fields(&Exterior, mu, state.e.field())?;
    let tw = TwistedPairing { inv_gamma: state.gamma.inverse(), sig: state.sig };
    let mut v = integrate(&wedge_fields(&tw, &me, &f)?)?;
    if state.lambda != 0.0 {
        let e3 = wedge_fields(&Exterior, &wedge_fields(&Exterior, &me, state.e.field())?, state.e.field())?;
        v += state.lambda * integrate(&e3)?;
    }
    Ok(v)
}

pub fn eval(state: &BoundaryState, c: &Constraint) -> Result<f64> {
    match c {
        Constraint::L(a) => eval_l(state, a),
        Constraint::J(m) => eval_j(state, m),
    }
}

// ---------------------------------------------------------------------------
// Site jets

const JE: usize = 0;
const JDE: usize = 12;
const JW: usize = 48;
const JDW: usize = 66;
const JET: usize = 120;

type Jet = [f64; JET];

fn site_ext(k_dim: usize, d: [&[f64]; 3], out: &mut [f64]) {
    for (a, da) in d.iter().enumerate() {
        for (j, &m) in FORM_MASKS[1].iter().enumerate() {
            let sgn = algebra::blade_sign(1 << a, m);
            if sgn == 0 {
                continue;
            }
            let o = form_index(m | (1 << a));
            for v in 0..k_dim {
                out[o * k_dim + v] += sgn as f64 * da[j * k_dim + v];
            }
        }
    }
}

fn jet_d_omega_e(j: &Jet, sig: Signature) -> [f64; 12] {
    let mut d = [0.0; 12];
    site_ext(4, [&j[JDE..JDE + 12], &j[JDE + 12..JDE + 24], &j[JDE + 24..JDE + 36]], &mut d);
    site_wedge(&Action(sig), 1, 2, &j[JW..JW + 18], 1, 1, &j[JE..JE + 12], &mut d);
    d
}

fn jet_curvature(j: &Jet, sig: Signature) -> [f64; 18] {
    let mut f = [0.0; 18];
    site_ext(6, [&j[JDW..JDW + 18], &j[JDW + 18..JDW + 36], &j[JDW + 36..JDW + 54]], &mut f);
    let mut ww = [0.0; 18];
    site_wedge(&Action(sig), 1, 2, &j[JW..JW + 18], 1, 2, &j[JW..JW + 18], &mut ww);
    for (x, y) in f.iter_mut().zip(ww) {
        *x += 0.5 * y;
    }
    f
}

/// Integrand of a constraint at one site, before the `h³` weight.
fn density(c: &Constraint, s: usize, j: &Jet, tw: &TwistedPairing, lambda: f64) -> f64 {
    let e = &j[JE..JE + 12];
    let mut out = [0.0];
    match c {
        Constraint::L(alpha) => {
            let d = jet_d_omega_e(j, tw.sig);
            let mut ede = [0.0; 6];
            site_wedge(&Exterior, 1, 1, e, 2, 1, &d, &mut ede);
            site_wedge(tw, 0, 2, alpha.site(s), 3, 2, &ede, &mut out);
        }
        Constraint::J(mu) => {
            let f = jet_curvature(j, tw.sig);
            let mut me = [0.0; 18];
            site_wedge(&Exterior, 0, 1, mu.site(s), 1, 1, e, &mut me);
            site_wedge(tw, 1, 2, &me, 2, 2, &f, &mut out);
            if lambda != 0.0 {
                let mut mee = [0.0; 12];
                site_wedge(&Exterior, 1, 2, &me, 1, 1, e, &mut mee);
                let mut q = [0.0];
                site_wedge(&Exterior, 2, 3, &mee, 1, 1, e, &mut q);
                out[0] += lambda * q[0];
            }
        }
    }
    out[0]
}

fn jets(state: &BoundaryState) -> Vec<Jet> {
    let e = state.e.field();
    let w = &state.omega_tilde;
    let de: [FormField; 3] = core::array::from_fn(|c| partial(e, c));
    let dw: [FormField; 3] = core::array::from_fn(|c| partial(w, c));
    (0..state.grid().sites())
        .map(|s| {
            let mut j = [0.0; JET];
            j[JE..JE + 12].copy_from_slice(e.site(s));
            j[JW..JW + 18].copy_from_slice(w.site(s));
            for c in 0..3 {
                j[JDE + 12 * c..JDE + 12 * c + 12].copy_from_slice(de[c].site(s));
                j[JDW + 18 * c..JDW + 18 * c + 18].copy_from_slice(dw[c].site(s));
            }
            j
        })
        .collect()
}

/// Maps `f` over sites, in parallel when `std` is enabled.
fn map_sites<T: Send, F: Fn(usize) -> T + Sync + Send>(n: usize, f: F) -> Vec<T> {
    #[cfg(feature = "std")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "std"))]
    {
        (0..n).map(f).collect()
    }
}

/// Central difference with one Richardson step; exact for cubics.
fn richardson<F: FnMut(f64) -> f64>(mut f: F, step: f64) -> f64 {
    let d1 = (f(step) - f(-step)) / (2.0 * step);
    let d2 = (f(0.5 * step) - f(-0.5 * step)) / step;
    (4.0 * d2 - d1) / 3.0
}

/// Both densities are at most quadratic in each jet coordinate except the
/// `Λ μ e³` term, which is cubic in `e`; a central difference is exact for
/// quadratics, so only those coordinates take a Richardson step.
fn jet_gradient(c: &Constraint, s: usize, j: &Jet, tw: &TwistedPairing, lambda: f64) -> Jet {
    let mut g = [0.0; JET];
    let mut x = *j;
    let cubic_e = matches!(c, Constraint::J(_)) && lambda != 0.0;
    for k in 0..JET {
        let x0 = x[k];
        let step = 0.25 * x0.abs().max(1.0);
        let mut f = |t: f64| {
            x[k] = x0 + t;
            density(c, s, &x, tw, lambda)
        };
        g[k] = if cubic_e && k < JE + 12 { richardson(&mut f, step) } else { (f(step) - f(-step)) / (2.0 * step) };
        x[k] = x0;
    }
    g
}

// ---------------------------------------------------------------------------
// Slice geometry

/// Linearisation of `ω̃ = G(e, ∂e, ω)` and the pairing blocks at one site.
#[derive(Clone, Debug)]
pub struct SiteGeometry {
    /// `∂G/∂ω`, 18 × 18.
    pub g_w: DMatrix<f64>,
    /// `∂G/∂(∂_c e)`, 18 × 12 each.
    pub g_de: [DMatrix<f64>; 3],
    /// `∂G/∂e` at fixed `∂e` and `ω`, 18 × 12.
    pub g_e: DMatrix<f64>,
    /// `B[i][j] = T̂_γ(x_i ∧ e ∧ y_j)`, 12 × 18.
    pub pairing: DMatrix<f64>,
    /// Complement basis of `ker W_e^{(1,2)}`, 18 × 12.
    pub complement: DMatrix<f64>,
    /// Projector onto `ker W_e^{(1,2)}`.
    pub p: DMatrix<f64>,
}

/// Step of the finite difference in `e` used for `∂G/∂e`.
pub const A_MAP_STEP: f64 = 1e-6;

fn v_tilde_at(e: &[f64], de: [&[f64]; 3], w: &[f64], sig: Signature) -> Result<DVector<f64>> {
    let mut rows = [[0.0; 4]; 3];
    for a in 0..3 {
        rows[a].copy_from_slice(&e[4 * a..4 * a + 4]);
    }
    let ss = SiteSplits::new(&rows, sig)?;
    let mut d = [0.0; 12];
    site_ext(4, de, &mut d);
    site_wedge(&Action(sig), 1, 2, w, 1, 1, e, &mut d);
    ss.v_tilde(&d)
}

fn site_geometry(state: &BoundaryState, s: usize, j: &Jet) -> Result<SiteGeometry> {
    let sig = state.sig;
    let ss = &state.splits().sites[s];
    let d = ss.s12.complement_u.clone();
    // P_e = −K φ⁻¹ K* as a matrix on 2-forms
    let mut pe = DMatrix::zeros(18, 12);
    for c in 0..12 {
        let mut u = [0.0; 12];
        u[c] = 1.0;
        pe.set_column(c, &ss.v_tilde(&u).map_err(|_| Error::AdjointSolve { site: s })?);
    }
    let g_w = DMatrix::identity(18, 18) + &pe * &ss.bracket;
    let g_de: [DMatrix<f64>; 3] = core::array::from_fn(|c| {
        let mut ec = DMatrix::zeros(12, 12);
        for k in 0..12 {
            let mut unit = [0.0; 12];
            unit[k] = 1.0;
            let zero = [0.0; 12];
            let mut out = [0.0; 12];
            let mut slots: [&[f64]; 3] = [&zero, &zero, &zero];
            slots[c] = &unit;
            site_ext(4, slots, &mut out);
            for r in 0..12 {
                ec[(r, k)] = out[r];
            }
        }
        &pe * ec
    });
    let mut g_e = DMatrix::zeros(18, 12);
    let de = [&j[JDE..JDE + 12], &j[JDE + 12..JDE + 24], &j[JDE + 24..JDE + 36]];
    let w = &j[JW..JW + 18];
    for k in 0..12 {
        let mut col = [0.0; 18];
        let mut ex = [0.0; 12];
        ex.copy_from_slice(&j[JE..JE + 12]);
        let x0 = ex[k];
        let h = A_MAP_STEP * x0.abs().max(1.0);
        let mut eval = |t: f64| -> Result<DVector<f64>> {
            ex[k] = x0 + t;
            v_tilde_at(&ex, de, w, sig)
        };
        let (p1, m1) = (eval(h)?, eval(-h)?);
        for r in 0..18 {
            col[r] = (p1[r] - m1[r]) / (2.0 * h);
        }
        for r in 0..18 {
            g_e[(r, k)] = col[r];
        }
    }
    let tw = TwistedPairing { inv_gamma: state.gamma.inverse(), sig };
    let e = &j[JE..JE + 12];
    let mut pairing = DMatrix::zeros(12, 18);
    for i in 0..12 {
        let mut x = [0.0; 12];
        x[i] = 1.0;
        let mut xe = [0.0; 18];
        site_wedge(&Exterior, 1, 1, &x, 1, 1, e, &mut xe);
        for jj in 0..18 {
            let mut y = [0.0; 18];
            y[jj] = 1.0;
            let mut out = [0.0];
            site_wedge(&tw, 2, 2, &xe, 1, 2, &y, &mut out);
            pairing[(i, jj)] = out[0];
        }
    }
    Ok(SiteGeometry { g_w, g_de, g_e, pairing, complement: d, p: ss.s12.p.clone() })
}

/// Per-site linearisations for a state.
#[derive(Clone, Debug)]
pub struct SliceGeometry {
    pub sites: Vec<SiteGeometry>,
    jets: Vec<Jet>,
}

impl SliceGeometry {
    pub fn new(state: &BoundaryState) -> Result<Self> {
        let jets = jets(state);
        let sites = map_sites(jets.len(), |s| site_geometry(state, s, &jets[s])).into_iter().collect::<Result<_>>()?;
        Ok(SliceGeometry { sites, jets })
    }
}

/// A tangent vector in the unconstrained variables.
#[derive(Clone, Debug, PartialEq)]
pub struct TangentVector {
    pub de: FormField,
    pub domega: FormField,
}

impl TangentVector {
    pub fn zeros(grid: Grid3) -> Self {
        TangentVector { de: FormField::zeros(grid, 1, 1), domega: FormField::zeros(grid, 1, 2) }
    }

    pub fn sup_norm(&self) -> f64 {
        self.de.sup_norm().max(self.domega.sup_norm())
    }
}

/// Raw gradient `∂F/∂(field value)` in the unconstrained variables.
#[derive(Clone, Debug)]
pub struct Gradient {
    pub ge: FormField,
    pub gw: FormField,
}

impl Gradient {
    /// `δF(X)`.
    pub fn apply(&self, x: &TangentVector) -> f64 {
        let a: f64 = self.ge.data().iter().zip(x.de.data()).map(|(g, v)| g * v).sum();
        let b: f64 = self.gw.data().iter().zip(x.domega.data()).map(|(g, v)| g * v).sum();
        a + b
    }
}

fn diff_sites(grid: Grid3, f: &[DVector<f64>], axis: usize) -> Vec<DVector<f64>> {
    let c = 0.5 / grid.h();
    (0..grid.sites())
        .map(|s| (&f[grid.neighbour(s, axis, true)] - &f[grid.neighbour(s, axis, false)]) * c)
        .collect()
}

fn field_to_vecs(f: &FormField) -> Vec<DVector<f64>> {
    (0..f.grid().sites()).map(|s| DVector::from_column_slice(f.site(s))).collect()
}

fn vecs_to_field(grid: Grid3, p: usize, k: usize, v: &[DVector<f64>]) -> FormField {
    let mut f = FormField::zeros(grid, p, k);
    for (s, x) in v.iter().enumerate() {
        f.site_mut(s).copy_from_slice(x.as_slice());
    }
    f
}

/// Exact gradient from site jets, pulled back through `ω ↦ ω̃`.
pub fn gradient(state: &BoundaryState, geo: &SliceGeometry, c: &Constraint) -> Result<Gradient> {
    c.check(state.grid())?;
    let grid = state.grid();
    let h3 = grid.h().powi(3);
    let tw = TwistedPairing { inv_gamma: state.gamma.inverse(), sig: state.sig };
    let jg: Vec<Jet> = map_sites(geo.jets.len(), |s| jet_gradient(c, s, &geo.jets[s], &tw, state.lambda));
    let part = |off: usize, len: usize| -> Vec<DVector<f64>> {
        jg.iter().map(|g| DVector::from_column_slice(&g[off..off + len])).collect()
    };
    let mut g_wt = part(JW, 18);
    let mut g_e0 = part(JE, 12);
    for a in 0..3 {
        let dw = diff_sites(grid, &part(JDW + 18 * a, 18), a);
        let de = diff_sites(grid, &part(JDE + 12 * a, 12), a);
        for s in 0..grid.sites() {
            g_wt[s] -= &dw[s];
            g_e0[s] -= &de[s];
        }
    }
    for s in 0..grid.sites() {
        g_wt[s] *= h3;
        g_e0[s] *= h3;
    }
    let mut ge = g_e0;
    let mut gw = Vec::with_capacity(grid.sites());
    for (s, sg) in geo.sites.iter().enumerate() {
        gw.push(sg.g_w.transpose() * &g_wt[s]);
        ge[s] += sg.g_e.transpose() * &g_wt[s];
    }
    for a in 0..3 {
        let q: Vec<DVector<f64>> = geo.sites.iter().zip(&g_wt).map(|(sg, g)| sg.g_de[a].transpose() * g).collect();
        let dq = diff_sites(grid, &q, a);
        for s in 0..grid.sites() {
            ge[s] -= &dq[s];
        }
    }
    Ok(Gradient { ge: vecs_to_field(grid, 1, 1, &ge), gw: vecs_to_field(grid, 1, 2, &gw) })
}

/// Which two-form defines Hamiltonian vector fields.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pairing {
    /// `−∫ T̂_γ[δe ∧ e ∧ δω̃]` restricted to slice tangents.
    Slice,
    /// The same form with `δω̃` replaced by its complement part `p′δω̃`.
    /// Agrees with [`Pairing::Slice`] at `γ = ∞`.
    FreeVariation,
}

fn lu_solve(m: &DMatrix<f64>, b: &DVector<f64>, site: usize) -> Result<DVector<f64>> {
    let sv = m.clone().singular_values();
    if !(sv.min() > 1e-12 * sv.max()) {
        return Err(Error::AdjointSolve { site });
    }
    m.clone().lu().solve(b).ok_or(Error::AdjointSolve { site })
}

/// Slice tangent `dΦ(X)` of an unconstrained vector.
pub fn slice_completion(geo: &SliceGeometry, x: &TangentVector) -> TangentVector {
    let grid = x.de.grid();
    let xe = field_to_vecs(&x.de);
    let xw = field_to_vecs(&x.domega);
    let dxe: [Vec<DVector<f64>>; 3] = core::array::from_fn(|a| diff_sites(grid, &xe, a));
    let out: Vec<DVector<f64>> = geo
        .sites
        .iter()
        .enumerate()
        .map(|(s, sg)| {
            let mut v = &sg.g_w * &xw[s] + &sg.g_e * &xe[s];
            for a in 0..3 {
                v += &sg.g_de[a] * &dxe[a][s];
            }
            v
        })
        .collect();
    TangentVector { de: x.de.clone(), domega: vecs_to_field(grid, 1, 2, &out) }
}

/// Solves `ι_X ϖ = δF` site by site.
pub fn vector_field_of(geo: &SliceGeometry, grad: &Gradient, pairing: Pairing) -> Result<TangentVector> {
    let grid = grad.ge.grid();
    let h3 = grid.h().powi(3);
    let ge = field_to_vecs(&grad.ge);
    let gw = field_to_vecs(&grad.gw);
    let mut xe = Vec::with_capacity(grid.sites());
    let mut mats = Vec::with_capacity(grid.sites());
    for (s, sg) in geo.sites.iter().enumerate() {
        let m = match pairing {
            Pairing::Slice => &sg.pairing * &sg.g_w * &sg.complement,
            Pairing::FreeVariation => &sg.pairing * &sg.complement,
        };
        let rhs = -(sg.complement.transpose() * &gw[s]) / h3;
        xe.push(lu_solve(&m.transpose(), &rhs, s)?);
        mats.push(m);
    }
    let mut xw = Vec::with_capacity(grid.sites());
    match pairing {
        Pairing::FreeVariation => {
            for (s, sg) in geo.sites.iter().enumerate() {
                let c = lu_solve(&mats[s], &(&ge[s] / h3), s)?;
                xw.push(&sg.complement * c);
            }
        }
        Pairing::Slice => {
            let mut r: Vec<DVector<f64>> = geo
                .sites
                .iter()
                .enumerate()
                .map(|(s, sg)| &ge[s] / h3 + sg.g_e.transpose() * (sg.pairing.transpose() * &xe[s]))
                .collect();
            let dxe: [Vec<DVector<f64>>; 3] = core::array::from_fn(|a| diff_sites(grid, &xe, a));
            for a in 0..3 {
                let q: Vec<DVector<f64>> = geo
                    .sites
                    .iter()
                    .zip(&xe)
                    .map(|(sg, x)| sg.g_de[a].transpose() * (sg.pairing.transpose() * x))
                    .collect();
                let dq = diff_sites(grid, &q, a);
                for s in 0..grid.sites() {
                    r[s] -= &dq[s];
                }
            }
            for (s, sg) in geo.sites.iter().enumerate() {
                let mut fixed = &sg.g_e * &xe[s];
                for a in 0..3 {
                    fixed += &sg.g_de[a] * &dxe[a][s];
                }
                let z = lu_solve(&mats[s], &(&r[s] - &sg.pairing * &fixed), s)?;
                xw.push(fixed + &sg.g_w * (&sg.complement * z));
            }
        }
    }
    Ok(TangentVector { de: vecs_to_field(grid, 1, 1, &xe).scaled(-1.0), domega: vecs_to_field(grid, 1, 2, &xw).scaled(-1.0) })
}

/// `ϖ(X, Y) = h³ Σ [T̂(X_e ∧ e ∧ Y_ω) − T̂(Y_e ∧ e ∧ X_ω)]` on slice tangents.
///
/// This is `−∫ T̂_γ[e δe δω̃]` with field variations anticommuting past
/// coordinate 1-forms, the orientation for which `X_{L_α} = ([α, e], −d_ω̃ α)`.
pub fn two_form(geo: &SliceGeometry, x: &TangentVector, y: &TangentVector, pairing: Pairing) -> f64 {
    let grid = x.de.grid();
    let h3 = grid.h().powi(3);
    let (xs, ys) = (slice_completion(geo, x), slice_completion(geo, y));
    let mut v = 0.0;
    for (s, sg) in geo.sites.iter().enumerate() {
        let xe = DVector::from_column_slice(xs.de.site(s));
        let ye = DVector::from_column_slice(ys.de.site(s));
        let mut xw = DVector::from_column_slice(xs.domega.site(s));
        let mut yw = DVector::from_column_slice(ys.domega.site(s));
        if pairing == Pairing::FreeVariation {
            xw -= &sg.p * xw.clone();
            yw -= &sg.p * yw.clone();
        }
        v += xe.dot(&(&sg.pairing * yw)) - ye.dot(&(&sg.pairing * xw));
    }
    v * h3
}

/// Hamiltonian vector field of a constraint.
pub fn hamiltonian_vector_field(state: &BoundaryState, c: &Constraint, pairing: Pairing) -> Result<TangentVector> {
    let geo = SliceGeometry::new(state)?;
    let g = gradient(state, &geo, c)?;
    vector_field_of(&geo, &g, pairing)
}

/// The gauge generator `([α, e], −d_ω̃ α)`.
pub fn gauge_generator(state: &BoundaryState, alpha: &FormField) -> Result<TangentVector> {
    let de = wedge_fields(&Action(state.sig), alpha, state.e.field())?;
    let domega = cov_deriv(alpha, &state.omega_tilde, state.sig)?.scaled(-1.0);
    Ok(TangentVector { de, domega })
}

/// Residuals of the defining wedge equations of `X_{L_α}`:
/// `sup |e ∧ (X_e − [α, e])|` and `sup |e ∧ (X_ω + d_ω̃ α)|`.
pub fn l_field_wedge_residuals(state: &BoundaryState, alpha: &FormField, x: &TangentVector) -> Result<(f64, f64)> {
    let g = gauge_generator(state, alpha)?;
    let e = state.e.field();
    let r1 = wedge_fields(&Exterior, e, &x.de.axpy(-1.0, &g.de)?)?.sup_norm();
    let r2 = wedge_fields(&Exterior, e, &x.domega.axpy(-1.0, &g.domega)?)?.sup_norm();
    Ok((r1, r2))
}

/// `ψ_α = p X_ω̃ + p d_ω̃ α` of the slice completion of `X_{L_α}`.
pub fn psi_alpha(state: &BoundaryState, geo: &SliceGeometry, alpha: &FormField, x: &TangentVector) -> Result<f64> {
    let xs = slice_completion(geo, x);
    let da = cov_deriv(alpha, &state.omega_tilde, state.sig)?;
    let mut worst: f64 = 0.0;
    for (s, sg) in geo.sites.iter().enumerate() {
        let v = DVector::from_column_slice(xs.domega.site(s)) + DVector::from_column_slice(da.site(s));
        worst = worst.max((&sg.p * v).amax());
    }
    Ok(worst)
}

/// `sup |d/dt p d_ω e|` along `X` without re-projection, relative to `sup |X|`;
/// zero for slice tangents.
pub fn constrained_variation_residual(state: &BoundaryState, x: &TangentVector) -> Result<f64> {
    let xn = x.sup_norm();
    if xn == 0.0 {
        return Ok(0.0);
    }
    let at = |t: f64| -> Result<Vec<DVector<f64>>> {
        let e = Coframe::new(state.e.field().axpy(t, &x.de)?)?;
        let w = state.omega_tilde.axpy(t, &x.domega)?;
        let splits = Splits::new(&e, state.sig)?;
        let de = cov_deriv(e.field(), &w, state.sig)?;
        Ok(splits.sites.iter().enumerate().map(|(s, ss)| &ss.s21.p * DVector::from_column_slice(de.site(s))).collect())
    };
    let t = 1e-4 / xn;
    let (p1, m1, p2, m2) = (at(t)?, at(-t)?, at(0.5 * t)?, at(-0.5 * t)?);
    let mut worst: f64 = 0.0;
    for s in 0..p1.len() {
        let d1 = (&p1[s] - &m1[s]) / (2.0 * t);
        let d2 = (&p2[s] - &m2[s]) / t;
        worst = worst.max(((d2 * 4.0 - d1) / 3.0).amax());
    }
    Ok(worst / xn)
}

/// Directional derivative `d/dt F(state + tX)` with re-certified states.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FdEstimate {
    pub value: f64,
    pub error: f64,
    pub step: f64,
}

/// Field-space step relative to the state norm.
pub const FD_REL_STEP: f64 = 1e-5;

pub fn fd_directional(state: &BoundaryState, f: &Constraint, x: &TangentVector) -> Result<FdEstimate> {
    let scale = state.e.field().sup_norm().max(state.omega_tilde.sup_norm()).max(1.0);
    let xn = x.sup_norm();
    if xn == 0.0 {
        return Ok(FdEstimate { value: 0.0, error: 0.0, step: 0.0 });
    }
    let t = FD_REL_STEP * scale / xn;
    let val = |t: f64| -> Result<f64> { eval(&state.shifted(x, t)?, f) };
    let d1 = (val(t)? - val(-t)?) / (2.0 * t);
    let d2 = (val(0.5 * t)? - val(-0.5 * t)?) / t;
    let r = (4.0 * d2 - d1) / 3.0;
    let error = (r - d2).abs();
    let mag = r.abs().max(d1.abs()).max(1e-300);
    if (d1 - d2).abs() > 1e-2 * mag && (d1 - d2).abs() > 1e-9 {
        return Err(Error::Richardson(d1, d2));
    }
    Ok(FdEstimate { value: r, error, step: t })
}

/// `{F, G} = X_F(G)` two ways.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BracketValue {
    /// `δG(X_F)` from the exact gradient of `G`.
    pub gradient_route: f64,
    /// Finite difference of `G` along `X_F`.
    pub fd_route: FdEstimate,
}

pub fn poisson_bracket(state: &BoundaryState, f: &Constraint, g: &Constraint, pairing: Pairing) -> Result<BracketValue> {
    let geo = SliceGeometry::new(state)?;
    let xf = vector_field_of(&geo, &gradient(state, &geo, f)?, pairing)?;
    let gg = gradient(state, &geo, g)?;
    Ok(BracketValue { gradient_route: gg.apply(&xf), fd_route: fd_directional(state, g, &xf)? })
}

/// Pointwise `[a, b]` of bivector fields.
pub fn bracket_fields(a: &FormField, b: &FormField, sig: Signature) -> Result<FormField> {
    if a.grid() != b.grid() {
        return Err(Error::GridMismatch);
    }
    let mut out = FormField::zeros(a.grid(), 0, 2);
    let eta = sig.eta::<f64>();
    for s in 0..a.grid().sites() {
        let x = Bivector6(core::array::from_fn(|i| a.site(s)[i]));
        let y = Bivector6(core::array::from_fn(|i| b.site(s)[i]));
        out.site_mut(s).copy_from_slice(&algebra::bracket2_eta(&x, &y, &eta).0);
    }
    Ok(out)
}

/// Pointwise `[α, μ] = α·μ`.
pub fn act_fields(alpha: &FormField, mu: &FormField, sig: Signature) -> Result<FormField> {
    wedge_fields(&Action(sig), alpha, mu)
}

// ---------------------------------------------------------------------------
// On-shell states

/// Where the spin connection of an on-shell state comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GammaSource {
    /// Solves the discrete torsion equation of the sampled triad exactly.
    Lattice,
    /// Closed-form derivatives of the triad spec; torsion-free up to `O(h²)`.
    Sampled,
}

/// Causal type of the boundary span.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Span {
    /// `w_i = u_1, u_2, u_3` and `w_0 = u_4`.
    Spacelike,
    /// Lorentzian only: `w_i = u_1, u_2, u_4` and `w_0 = −u_3`.
    Timelike,
}

impl Span {
    /// Constant frame rows `w_1, w_2, w_3, w_0` with `η̄` and `η₀₀`.
    pub fn frame(self, sig: Signature) -> Result<([[f64; 4]; 4], [f64; 3], f64)> {
        match (self, sig) {
            (Span::Spacelike, _) => {
                let eta00 = if sig == Signature::Lorentzian { -1.0 } else { 1.0 };
                Ok(([[1., 0., 0., 0.], [0., 1., 0., 0.], [0., 0., 1., 0.], [0., 0., 0., 1.]], [1.0; 3], eta00))
            }
            (Span::Timelike, Signature::Lorentzian) => {
                Ok(([[1., 0., 0., 0.], [0., 1., 0., 0.], [0., 0., 0., 1.], [0., 0., -1., 0.]], [1.0, 1.0, -1.0], 1.0))
            }
            (Span::Timelike, Signature::Euclidean) => Err(Error::UnattainableSignature([1, 1, -1])),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OnShellSpec {
    pub triad: eh::TriadSpec,
    pub k: eh::SymSpec,
    pub gamma: Gamma,
    pub lambda: f64,
    pub sig: Signature,
    pub span: Span,
    pub source: GammaSource,
}

#[derive(Clone, Debug)]
pub struct OnShell {
    pub state: BoundaryState,
    pub frame: [[f64; 4]; 4],
    pub eta00: f64,
    pub triad: eh::Triad,
    pub a_part: Vec<M3>,
    /// `sup |ω̃ − ω|` of the certification step.
    pub certification_shift: f64,
}

/// Assembles `ω = Γ + A` in a constant frame; `A` sits on `w_0 ∧ w_i`.
pub fn assemble_connection(
    grid: Grid3,
    frame: &[[f64; 4]; 4],
    gamma: &[eh::Gamma3],
    a: &[M3],
) -> FormField {
    let w = nalgebra::Matrix4::from_fn(|r, c| frame[r][c]);
    let mut f = FormField::zeros(grid, 1, 2);
    for s in 0..grid.sites() {
        for ax in 0..3 {
            let mw = nalgebra::Matrix4::from_fn(|i, j| match (i, j) {
                (3, 3) => 0.0,
                (3, j) => a[s][(ax, j)],
                (i, 3) => -a[s][(ax, i)],
                (i, j) => gamma[s][ax][(i, j)],
            });
            let mu = w.transpose() * mw * w;
            let m: [[f64; 4]; 4] = core::array::from_fn(|i| core::array::from_fn(|j| mu[(i, j)]));
            f.site_mut(s)[6 * ax..6 * ax + 6].copy_from_slice(&algebra::matrix_to_bivector(&m).0);
        }
    }
    f
}

/// Builds `(e, ω̃)` from a triad and a symmetric `K`, then certifies `ω̃`.
pub fn make_on_shell(spec: &OnShellSpec, grid: Grid3) -> Result<OnShell> {
    spec.k.validate()?;
    let (frame, eta_bar, eta00) = spec.span.frame(spec.sig)?;
    let triad = eh::Triad::from_spec(&spec.triad, grid, eta_bar)?;
    let gamma = match spec.source {
        GammaSource::Lattice => eh::gamma_of_triad(&triad),
        GammaSource::Sampled => eh::gamma_of_spec(&spec.triad, grid, eta_bar),
    };
    let a_part: Vec<M3> =
        (0..grid.sites()).map(|s| eh::a_from_k(&triad.sites()[s], &spec.k.eval(grid.position(s)), eta_bar)).collect();
    let mut ef = FormField::zeros(grid, 1, 1);
    for s in 0..grid.sites() {
        let eb = &triad.sites()[s];
        for a in 0..3 {
            for m in 0..4 {
                let v: f64 = (0..3).map(|i| eb[(a, i)] * frame[i][m]).sum();
                ef.set(s, a, m, v);
            }
        }
    }
    let e = Coframe::new(ef)?;
    let omega = assemble_connection(grid, &frame, &gamma, &a_part);
    let state = BoundaryState::new(e, &omega, spec.gamma, spec.lambda, spec.sig)?;
    let certification_shift = state.omega_tilde.max_diff(&omega)?;
    Ok(OnShell { state, frame, eta00, triad, a_part, certification_shift })
}

// ---------------------------------------------------------------------------
// Comparison with the Einstein–Hilbert constraints

#[derive(Clone, Debug, PartialEq)]
pub struct PchEhReport {
    pub j_lambda0: f64,
    /// `−½ ∫ λ⁰ (H + 12 Λ √g)`.
    pub h_prediction: f64,
    pub j_xi: f64,
    /// `−2 ∫ ξ·M`.
    pub m_prediction: f64,
    /// `J_μ(γ = ½) − J_μ(γ = 10)` for `μ = λ⁰ w_0`.
    pub gamma_dependence: f64,
    /// Same for `μ = ξ^a e_a`.
    pub gamma_dependence_xi: f64,
    /// `sup |R_F − R_metric|`.
    pub ricci_routes: f64,
    /// `sup |M_frame − M_LC|`.
    pub momentum_routes: f64,
    /// `h³ Σ ∂_a(δē_f η ē_g ε^{afg})` for the supplied variation.
    pub exact_term: f64,
    /// Residual of the frame split, `sup |Γ_block − Γ(ē)|`.
    pub split_residual: f64,
    pub k_antisymmetry: f64,
}

impl PchEhReport {
    pub fn hamiltonian_deviation(&self) -> f64 {
        (self.j_lambda0 - self.h_prediction).abs()
    }

    pub fn momentum_deviation(&self) -> f64 {
        (self.j_xi - self.m_prediction).abs()
    }
}

/// Smearings for [`compare_pch_eh`].
#[derive(Clone, Debug, PartialEq)]
pub struct EhProbe {
    pub lambda0: TrigSpec,
    pub xi: [TrigSpec; 3],
    /// Variation `δē` used for the exact-term check.
    pub delta_e: eh::TriadSpec,
}

/// Largest `sup |d_ω̃ e|` accepted as on shell.
pub const ON_SHELL_TORSION: f64 = 0.5;

pub fn compare_pch_eh(state: &BoundaryState, probe: &EhProbe) -> Result<PchEhReport> {
    let torsion = state.torsion()?;
    if torsion > ON_SHELL_TORSION {
        return Err(Error::OffShell(torsion));
    }
    let grid = state.grid();
    let split = eh::split_connection(&state.e, &state.omega_tilde, state.sig)?;
    let eta00 = split.frames[0].eta00;
    if split.frames.iter().any(|f| f.eta00 != eta00) {
        return Err(Error::DegenerateMetric { site: 0 });
    }
    let data = eh::eh_data(&split.triad, &split.a_part, eta00)?;
    let h3 = grid.h().powi(3);
    let mut mu0 = FormField::zeros(grid, 0, 1);
    let mut mux = FormField::zeros(grid, 0, 1);
    let mut h_pred = 0.0;
    let mut m_pred = 0.0;
    for s in 0..grid.sites() {
        let x = grid.position(s);
        let l0 = probe.lambda0.eval(x);
        let xi: [f64; 3] = core::array::from_fn(|a| probe.xi[a].eval(x));
        let e = state.e.at(s);
        for m in 0..4 {
            mu0.set(s, 0, m, l0 * split.frames[s].w[3][m]);
            mux.set(s, 0, m, (0..3).map(|a| xi[a] * e[a][m]).sum());
        }
        h_pred += -0.5 * l0 * (data.h_density[s] + 12.0 * state.lambda * data.sqrt_g[s]);
        m_pred += -2.0 * (0..3).map(|f| xi[f] * data.m_frame[s][f]).sum::<f64>();
    }
    h_pred *= h3;
    m_pred *= h3;
    let g_half = state.with_gamma(Gamma::Finite(0.5));
    let g_ten = state.with_gamma(Gamma::Finite(10.0));
    let ricci_routes = data.ricci_f.iter().zip(&data.ricci_metric).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let momentum_routes = data
        .m_frame
        .iter()
        .zip(&data.m_levi_civita)
        .flat_map(|(a, b)| (0..3).map(move |f| (a[f] - b[f]).abs()))
        .fold(0.0, f64::max);
    let dtri: Vec<M3> = (0..grid.sites()).map(|s| probe.delta_e.eval(grid.position(s))).collect();
    let exact_term = gamma_exact_term(&split.triad, &dtri);
    Ok(PchEhReport {
        j_lambda0: eval_j(state, &mu0)?,
        h_prediction: h_pred,
        j_xi: eval_j(state, &mux)?,
        m_prediction: m_pred,
        gamma_dependence: eval_j(&g_half, &mu0)? - eval_j(&g_ten, &mu0)?,
        gamma_dependence_xi: eval_j(&g_half, &mux)? - eval_j(&g_ten, &mux)?,
        ricci_routes,
        momentum_routes,
        exact_term,
        split_residual: split.residual,
        k_antisymmetry: split.k_antisymmetry,
    })
}

/// `h³ Σ_s Σ_a ∂_a Y^a` with `Y^a = δē_f^i η_ij ē_g^j ε^{afg}` and central differences.
pub fn gamma_exact_term(tri: &eh::Triad, delta: &[M3]) -> f64 {
    let grid = tri.grid();
    let eta = tri.eta_bar();
    let y: Vec<[f64; 3]> = (0..grid.sites())
        .map(|s| {
            let (d, e) = (&delta[s], &tri.sites()[s]);
            core::array::from_fn(|a| {
                let mut v = 0.0;
                for f in 0..3 {
                    for g in 0..3 {
                        let eps = eh::levi3(a, f, g);
                        if eps != 0.0 {
                            v += eps * (0..3).map(|i| d[(f, i)] * eta[i] * e[(g, i)]).sum::<f64>();
                        }
                    }
                }
                v
            })
        })
        .collect();
    let mut sum = 0.0;
    for a in 0..3 {
        let comp: Vec<f64> = y.iter().map(|v| v[a]).collect();
        sum += eh::central_diff(grid, &comp, a).iter().sum::<f64>();
    }
    sum * grid.h().powi(3)
}

/// Per-site counts recorded alongside bracket reports; nothing is asserted on them.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DofInventory {
    pub coframe_components: usize,
    pub connection_components: usize,
    pub kernel_directions: usize,
    pub constraint_densities: usize,
}

pub const DOF_INVENTORY: DofInventory =
    DofInventory { coframe_components: 12, connection_components: 12, kernel_directions: 6, constraint_densities: 10 };

/// `Tr[μ ∧ e³]` density oracle by a direct sum over permutations.
pub fn lambda_epsilon_sum(mu: [f64; 4], e: &[[f64; 4]; 3]) -> f64 {
    let mut v = 0.0;
    for a in 0..3 {
        for b in 0..3 {
            for c in 0..3 {
                let eps = eh::levi3(a, b, c);
                if eps == 0.0 {
                    continue;
                }
                let vecs = [mu, e[a], e[b], e[c]];
                let m = nalgebra::Matrix4::from_fn(|i, j| vecs[j][i]);
                v += eps * m.determinant();
            }
        }
    }
    v
}
