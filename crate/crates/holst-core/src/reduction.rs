//! The compatible representative `ω̃ = ω + ṽ` with `p d_ω̃ e = 0`.
//!
//! Per site, `ṽ ∈ ker W_e^{(1,2)}` solves `φ_e ṽ = −p d_ω e` where
//! `φ_e = p_{(2,1)} ∘ [·, e]` restricted to the kernel.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)]
use num_traits::Float;

use crate::algebra::{self, blade_sign, Eta, Rational, Scalar, Signature};
use crate::error::{Error, Result};
use crate::exact::Mat;
use crate::grid::{cov_deriv, form_index, wedge_fields, Action, Coframe, FormField};
use crate::wedge::{
    self, adapted_frame, domain_transform, null_space_f64, range_f64, rank_f64, split_with, wedge_matrix,
    ComplementSplit, Shape,
};

/// `φ_e` with `σ_min/σ_max` below this is treated as singular.
pub const PHI_SINGULAR_TOL: f64 = 1e-12;

/// Matrix (12 × 18) of `v ↦ [v, e]` from `Ω¹(Λ²V)` to `Ω²(V)`.
pub fn bracket_with_e_matrix<T: Scalar>(e: &[[T; 4]; 3], eta: &Eta<T>) -> Mat<T> {
    let mut m = Mat::zeros(12, 18);
    let mut unit = [T::zero(); 6];
    for a in 0..3 {
        for j in 0..6 {
            unit[j] = T::one();
            for (b, eb) in e.iter().enumerate() {
                let s = blade_sign(1 << a, 1 << b);
                if s == 0 {
                    continue;
                }
                let o = form_index((1 << a) | (1 << b));
                let mut tmp = [T::zero(); 4];
                algebra::act_graded_acc(&unit, 1, eb, eta, &mut tmp);
                for i in 0..4 {
                    m[(o * 4 + i, a * 6 + j)] = m[(o * 4 + i, a * 6 + j)] + T::from_i64(s) * tmp[i];
                }
            }
            unit[j] = T::zero();
        }
    }
    m
}

/// Field-level `[v, e]`.
pub fn bracket_with_e(v: &FormField, e: &Coframe, sig: Signature) -> Result<FormField> {
    wedge_fields(&Action(sig), v, e.field())
}

/// Everything at one site that depends on `e` only.
#[derive(Clone, Debug)]
pub struct SiteSplits {
    pub s12: ComplementSplit,
    pub s21: ComplementSplit,
    /// `[·, e]`, 12 × 18.
    pub bracket: DMatrix<f64>,
    /// `φ_e` in kernel coordinates, 6 × 6.
    pub phi: DMatrix<f64>,
    phi_lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    pub cond: f64,
}

impl SiteSplits {
    pub fn new(e: &[[f64; 4]; 3], sig: Signature) -> Result<Self> {
        // a null boundary has no adapted frame; fall back to u coordinates so φ_e can be examined
        let frame = adapted_frame(e, sig).ok();
        let d = |p, k| match &frame {
            Some(f) => domain_transform(f, p, k).to_dmatrix(),
            None => DMatrix::identity(if p == 1 { 18 } else { 12 }, if p == 1 { 18 } else { 12 }),
        };
        let s12 = split_with(wedge::build_wedge_matrix(e, Shape::S12), d(1, 2), Shape::S12)?;
        let s21 = split_with(wedge::build_wedge_matrix(e, Shape::S21), d(2, 1), Shape::S21)?;
        let bracket = bracket_with_e_matrix(e, &sig.eta()).to_dmatrix();
        let phi = &s21.kernel_coords * &bracket * &s12.kernel_u;
        let sv = phi.clone().singular_values();
        let (smax, smin) = (sv.max(), sv.min());
        if !(smin > PHI_SINGULAR_TOL * smax) {
            return Err(Error::PhiSingular { site: 0 });
        }
        if frame.is_none() {
            return Err(Error::DegenerateMetric { site: 0 });
        }
        let phi_lu = phi.clone().lu();
        Ok(SiteSplits { s12, s21, bracket, phi, phi_lu, cond: smax / smin })
    }

    /// `φ_e⁻¹ b` by LU with two steps of iterative refinement.
    pub fn solve_phi(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        let mut x = self.phi_lu.solve(b).ok_or(Error::PhiSingular { site: 0 })?;
        for _ in 0..2 {
            let r = b - &self.phi * &x;
            if let Some(dx) = self.phi_lu.solve(&r) {
                x += dx;
            }
        }
        let res = (b - &self.phi * &x).norm();
        if res > 1e-10 * (b.norm() + 1e-300) && res > 1e-14 {
            return Err(Error::Conditioning { site: 0, cond: self.cond });
        }
        Ok(x)
    }

    /// `ṽ = −φ_e⁻¹ p d_ω e` at this site, in `u` coordinates (18 values).
    pub fn v_tilde(&self, d_omega_e: &[f64]) -> Result<DVector<f64>> {
        let rhs = &self.s21.kernel_coords * DVector::from_column_slice(d_omega_e);
        let z = self.solve_phi(&rhs)?;
        Ok(-(&self.s12.kernel_u * z))
    }
}

/// Per-site data for a whole coframe field.
#[derive(Clone, Debug)]
pub struct Splits {
    pub sig: Signature,
    pub sites: Vec<SiteSplits>,
}

fn at_site<T>(r: Result<T>, site: usize) -> Result<T> {
    r.map_err(|e| match e {
        Error::PhiSingular { .. } => Error::PhiSingular { site },
        Error::DegenerateMetric { .. } => Error::DegenerateMetric { site },
        Error::Conditioning { cond, .. } => Error::Conditioning { site, cond },
        other => other,
    })
}

impl Splits {
    pub fn new(e: &Coframe, sig: Signature) -> Result<Self> {
        let sites = (0..e.grid().sites())
            .map(|s| at_site(SiteSplits::new(&e.at(s), sig), s))
            .collect::<Result<Vec<_>>>()?;
        Ok(Splits { sig, sites })
    }

    pub fn worst_cond(&self) -> f64 {
        self.sites.iter().fold(0.0, |m, s| m.max(s.cond))
    }
}

#[derive(Clone, Debug)]
pub struct OmegaTildeResult {
    pub v_tilde: FormField,
    pub omega_tilde: FormField,
    /// `sup |p d_ω̃ e|`.
    pub structural_residual: f64,
    /// `sup |ṽ ∧ e|`.
    pub wedge_residual: f64,
    /// Largest condition number of `φ_e`.
    pub solver_conditioning: f64,
}

pub fn omega_tilde(e: &Coframe, omega: &FormField, sig: Signature) -> Result<OmegaTildeResult> {
    let splits = Splits::new(e, sig)?;
    omega_tilde_with(&splits, e, omega)
}

/// `ω̃` reusing precomputed splits of `e`.
pub fn omega_tilde_with(splits: &Splits, e: &Coframe, omega: &FormField) -> Result<OmegaTildeResult> {
    let sig = splits.sig;
    let de = cov_deriv(e.field(), omega, sig)?;
    let grid = e.grid();
    let mut v = FormField::zeros(grid, 1, 2);
    for (s, ss) in splits.sites.iter().enumerate() {
        let vt = at_site(ss.v_tilde(de.site(s)), s)?;
        v.site_mut(s).copy_from_slice(vt.as_slice());
    }
    let omega_tilde = omega.axpy(1.0, &v)?;
    let correction = bracket_with_e(&v, e, sig)?;
    let de_tilde = de.axpy(1.0, &correction)?;
    let mut structural = 0.0f64;
    let mut wedge_res = 0.0f64;
    for (s, ss) in splits.sites.iter().enumerate() {
        let pd = &ss.s21.p * DVector::from_column_slice(de_tilde.site(s));
        structural = structural.max(pd.amax());
        let w = &ss.s12.matrix * DVector::from_column_slice(v.site(s));
        wedge_res = wedge_res.max(w.amax());
    }
    Ok(OmegaTildeResult {
        v_tilde: v,
        omega_tilde,
        structural_residual: structural,
        wedge_residual: wedge_res,
        solver_conditioning: splits.worst_cond(),
    })
}

/// `sup |p d_ω e|` for a given connection.
pub fn structural_residual(splits: &Splits, e: &Coframe, omega: &FormField) -> Result<f64> {
    let de = cov_deriv(e.field(), omega, splits.sig)?;
    let mut worst = 0.0f64;
    for (s, ss) in splits.sites.iter().enumerate() {
        worst = worst.max((&ss.s21.p * DVector::from_column_slice(de.site(s))).amax());
    }
    Ok(worst)
}

/// `dim(ker[·,e] ∩ ker W_e^{(1,2)})` in exact arithmetic.
pub fn kernel_intersection_dim<T: Scalar>(e: &[[T; 4]; 3], eta: &Eta<T>) -> usize {
    let stacked = bracket_with_e_matrix(e, eta).vstack(&wedge_matrix(e, Shape::S12));
    stacked.null_space().cols
}

/// `dim 𝒦` for an abstract diagonal boundary metric.
///
/// Kernel elements of `W^{(1,2)}` carry no normal leg, so `𝒦` depends on `e` only
/// through `g∂`; the standard coframe with `η = diag(g∂, 1)` realises every case.
pub fn kernel_intersection_dim_for_metric(g: [i8; 3]) -> usize {
    let q = |x: i8| Rational::from_i64(x as i64);
    let eta = Eta([q(g[0]), q(g[1]), q(g[2]), q(1)]);
    kernel_intersection_dim(&wedge::standard_coframe::<Rational>(), &eta)
}

/// Exact rank-3 coframe with `g∂ = diag(target)` for the given fiber metric.
pub fn make_degenerate_coframe(target: [i8; 3], sig: Signature) -> Result<[[Rational; 4]; 3]> {
    let o = Rational::from_i64(0);
    let l = Rational::from_i64(1);
    let u = |i: usize| {
        let mut v = [o; 4];
        v[i] = l;
        v
    };
    let null = [o, o, l, l];
    match (sig, target) {
        (_, [1, 1, 1]) => Ok([u(0), u(1), u(2)]),
        (Signature::Lorentzian, [1, 1, -1]) => Ok([u(0), u(1), u(3)]),
        (Signature::Lorentzian, [1, 1, 0]) => Ok([u(0), u(1), null]),
        _ => Err(Error::UnattainableSignature(target)),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExactSequenceReport {
    pub injective: bool,
    pub image_dim: usize,
    pub ker21_dim: usize,
    pub rank21: usize,
    /// `sup |e ∧ [v, e]|` over the unit kernel basis.
    pub wedge_residual: f64,
    /// Distance of `im([·,e]|ker)` from `ker W^{(2,1)}`.
    pub image_in_kernel: f64,
    /// Distance of `ker W^{(2,1)}` from `im([·,e]|ker)`.
    pub kernel_in_image: f64,
}

pub fn exact_sequence_check(e: &[[f64; 4]; 3], sig: Signature) -> Result<ExactSequenceReport> {
    let ss = SiteSplits::new(e, sig)?;
    let k12 = range_f64(&ss.s12.kernel_u);
    let img = &ss.bracket * &k12;
    let q1 = range_f64(&img);
    let q2 = null_space_f64(&ss.s21.matrix);
    let w = &ss.s21.matrix * &img;
    let dist = |a: &DMatrix<f64>, b: &DMatrix<f64>| (a - b * (b.transpose() * a)).norm();
    Ok(ExactSequenceReport {
        injective: rank_f64(&img) == 6,
        image_dim: q1.ncols(),
        ker21_dim: q2.ncols(),
        rank21: rank_f64(&ss.s21.matrix),
        wedge_residual: w.amax(),
        image_in_kernel: dist(&q1, &q2),
        kernel_in_image: dist(&q2, &q1),
    })
}

/// Exact version: `(injective, image ⊂ kernel, dims equal, W^{(2,1)} surjective)`.
pub fn exact_sequence_check_exact<T: Scalar>(e: &[[T; 4]; 3], eta: &Eta<T>) -> [bool; 4] {
    let k = wedge_matrix(e, Shape::S12).null_space();
    let img = bracket_with_e_matrix(e, eta).mul(&k);
    let w21 = wedge_matrix(e, Shape::S21);
    let ri = img.rank();
    let ker21 = w21.null_space().cols;
    [ri == k.cols, w21.mul(&img).is_zero(), ri == ker21, w21.rank() == w21.rows]
}

/// Random kernel-valued field `v` with `v ∧ e = 0` pointwise.
pub fn random_kernel_field<R: rand::Rng>(rng: &mut R, splits: &Splits, e: &Coframe, amp: f64) -> FormField {
    let mut v = FormField::zeros(e.grid(), 1, 2);
    for (s, ss) in splits.sites.iter().enumerate() {
        let z = DVector::from_iterator(6, (0..6).map(|_| amp * rng.gen_range(-1.0..1.0)));
        v.site_mut(s).copy_from_slice((&ss.s12.kernel_u * z).as_slice());
    }
    v
}

/// Site-local inverse of `[·,e]` on `ker W^{(1,2)}`: `w ↦ v` with `p[v,e] = p w`.
pub fn phi_inverse_apply(ss: &SiteSplits, w: &[f64]) -> Result<Vec<f64>> {
    let rhs = &ss.s21.kernel_coords * DVector::from_column_slice(w);
    let z = ss.solve_phi(&rhs)?;
    Ok((&ss.s12.kernel_u * z).as_slice().to_vec())
}
