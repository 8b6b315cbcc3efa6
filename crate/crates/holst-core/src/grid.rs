//! Periodic lattice on the unit 3-torus and fields of valued differential forms.
//!
//! A `p`-form component is labelled by a bitmask over the coordinate axes
//! (bit `a` is `dx^{a+1}`), ordered as in [`FORM_MASKS`]. Values live in `Λ^k V`
//! with the component order of [`crate::algebra`]. Storage is
//! `[site][form component][value component]`.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;

use crate::algebra::{self, blade_sign, grade_dim, Signature};
use crate::error::{Error, Result};

/// Coordinate-form components per degree.
pub const FORM_MASKS: [&[u8]; 4] = [&[0b000], &[0b001, 0b010, 0b100], &[0b011, 0b101, 0b110], &[0b111]];

pub const fn form_dim(p: usize) -> usize {
    match p {
        0 | 3 => 1,
        1 | 2 => 3,
        _ => 0,
    }
}

/// Position of a coordinate blade in its degree's storage order.
pub fn form_index(mask: u8) -> usize {
    FORM_MASKS[mask.count_ones() as usize]
        .iter()
        .position(|&m| m == mask)
        .expect("valid coordinate blade")
}

/// `n³` points with spacing `1/n` on the unit torus.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Grid3 {
    n: usize,
}

impl Grid3 {
    /// Grid for derivative work: `n ≥ 4` and even.
    pub fn new(n: usize) -> Result<Self> {
        if n < 4 {
            return Err(Error::InvalidGrid { n, reason: "need at least 4 points per axis" });
        }
        if n % 2 != 0 {
            return Err(Error::InvalidGrid { n, reason: "points per axis must be even" });
        }
        Ok(Grid3 { n })
    }

    /// Also admits `n = 2`, where every central difference vanishes.
    pub fn coarse(n: usize) -> Result<Self> {
        if n == 2 {
            Ok(Grid3 { n })
        } else {
            Self::new(n)
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn sites(&self) -> usize {
        self.n * self.n * self.n
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.n + j) * self.n + k
    }

    pub fn coords(&self, site: usize) -> [usize; 3] {
        let n = self.n;
        [site / (n * n), (site / n) % n, site % n]
    }

    /// Coordinates of a site in `[0,1)³`.
    pub fn position(&self, site: usize) -> [f64; 3] {
        let c = self.coords(site);
        let h = self.h();
        [c[0] as f64 * h, c[1] as f64 * h, c[2] as f64 * h]
    }

    /// Periodic neighbour along `axis` by `+1` or `-1`.
    pub fn neighbour(&self, site: usize, axis: usize, forward: bool) -> usize {
        let mut c = self.coords(site);
        c[axis] = if forward { (c[axis] + 1) % self.n } else { (c[axis] + self.n - 1) % self.n };
        self.index(c[0], c[1], c[2])
    }
}

/// Grid-sampled `p`-form with values in `Λ^k V` (`k = 0` for scalars).
#[derive(Clone, Debug, PartialEq)]
pub struct FormField {
    grid: Grid3,
    p: usize,
    k: usize,
    data: Vec<f64>,
}

impl FormField {
    pub fn zeros(grid: Grid3, p: usize, k: usize) -> Self {
        assert!(p <= 3 && k <= 4);
        let len = grid.sites() * form_dim(p) * grade_dim(k);
        FormField { grid, p, k, data: vec![0.0; len] }
    }

    pub fn from_data(grid: Grid3, p: usize, k: usize, data: Vec<f64>) -> Result<Self> {
        if p > 3 || k > 4 {
            return Err(Error::Shape(alloc::format!("degree {p}, grade {k}")));
        }
        let want = grid.sites() * form_dim(p) * grade_dim(k);
        if data.len() != want {
            return Err(Error::Shape(alloc::format!("expected {want} values, got {}", data.len())));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::Shape("non-finite entry".into()));
        }
        Ok(FormField { grid, p, k, data })
    }

    pub fn grid(&self) -> Grid3 {
        self.grid
    }

    pub fn degree(&self) -> usize {
        self.p
    }

    pub fn grade(&self) -> usize {
        self.k
    }

    /// Values per site.
    pub fn stride(&self) -> usize {
        form_dim(self.p) * grade_dim(self.k)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn site(&self, s: usize) -> &[f64] {
        let st = self.stride();
        &self.data[s * st..(s + 1) * st]
    }

    pub fn site_mut(&mut self, s: usize) -> &mut [f64] {
        let st = self.stride();
        &mut self.data[s * st..(s + 1) * st]
    }

    pub fn get(&self, s: usize, comp: usize, v: usize) -> f64 {
        self.data[s * self.stride() + comp * grade_dim(self.k) + v]
    }

    pub fn set(&mut self, s: usize, comp: usize, v: usize, x: f64) {
        let st = self.stride();
        self.data[s * st + comp * grade_dim(self.k) + v] = x;
    }

    fn check_same(&self, o: &FormField) -> Result<()> {
        if self.grid != o.grid {
            return Err(Error::GridMismatch);
        }
        if self.p != o.p || self.k != o.k {
            return Err(Error::Shape(alloc::format!(
                "({}, {}) vs ({}, {})",
                self.p,
                self.k,
                o.p,
                o.k
            )));
        }
        Ok(())
    }

    /// `self + c·o`.
    pub fn axpy(&self, c: f64, o: &FormField) -> Result<FormField> {
        self.check_same(o)?;
        let mut out = self.clone();
        for (x, y) in out.data.iter_mut().zip(o.data.iter()) {
            *x += c * y;
        }
        Ok(out)
    }

    pub fn scaled(&self, c: f64) -> FormField {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|x| *x *= c);
        out
    }

    pub fn sup_norm(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn l2_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn max_diff(&self, o: &FormField) -> Result<f64> {
        self.check_same(o)?;
        Ok(self.data.iter().zip(o.data.iter()).fold(0.0, |m, (x, y)| m.max((x - y).abs())))
    }
}

/// One Fourier term `amp · cos(2π(k·x + phase))`; the phase is measured in turns.
#[derive(Clone, Debug, PartialEq)]
pub struct TrigTerm {
    pub amp: f64,
    pub k: [f64; 3],
    pub phase: f64,
}

/// A real trigonometric polynomial on the torus.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct TrigSpec {
    pub constant: f64,
    pub terms: Vec<TrigTerm>,
}

/// `(cos 2πt, sin 2πt)`, exact at quarter turns.
fn cos_sin_turns(t: f64) -> (f64, f64) {
    let r = t - t.floor();
    let q = r * 4.0;
    if q == q.floor() {
        return match q as i64 {
            0 => (1.0, 0.0),
            1 => (0.0, 1.0),
            2 => (-1.0, 0.0),
            _ => (0.0, -1.0),
        };
    }
    let a = 2.0 * PI * r;
    (a.cos(), a.sin())
}

impl TrigSpec {
    pub fn constant(c: f64) -> Self {
        TrigSpec { constant: c, terms: Vec::new() }
    }

    /// `amp · sin(2π k·x)`.
    pub fn sin(amp: f64, k: [f64; 3]) -> Self {
        TrigSpec { constant: 0.0, terms: vec![TrigTerm { amp, k, phase: -0.25 }] }
    }

    /// `amp · cos(2π k·x)`.
    pub fn cos(amp: f64, k: [f64; 3]) -> Self {
        TrigSpec { constant: 0.0, terms: vec![TrigTerm { amp, k, phase: 0.0 }] }
    }

    pub fn plus(mut self, o: TrigSpec) -> Self {
        self.constant += o.constant;
        self.terms.extend(o.terms);
        self
    }

    /// Random low-mode polynomial with wavenumbers in `[-kmax, kmax]`.
    pub fn random<R: Rng>(rng: &mut R, constant: f64, amp: f64, kmax: i32, nterms: usize) -> Self {
        let terms = (0..nterms)
            .map(|_| TrigTerm {
                amp: amp * rng.gen_range(-1.0..1.0),
                k: [
                    rng.gen_range(-kmax..=kmax) as f64,
                    rng.gen_range(-kmax..=kmax) as f64,
                    rng.gen_range(-kmax..=kmax) as f64,
                ],
                phase: rng.gen_range(0.0..1.0),
            })
            .collect();
        TrigSpec { constant, terms }
    }

    pub fn validate(&self) -> Result<()> {
        for t in &self.terms {
            for &k in &t.k {
                if !k.is_finite() || k != k.round() {
                    return Err(Error::NonPeriodic(k));
                }
            }
        }
        Ok(())
    }

    pub fn eval(&self, x: [f64; 3]) -> f64 {
        let mut v = self.constant;
        for t in &self.terms {
            let (c, _) = cos_sin_turns(t.k[0] * x[0] + t.k[1] * x[1] + t.k[2] * x[2] + t.phase);
            v += t.amp * c;
        }
        v
    }

    /// Analytic partial derivative along `axis`.
    pub fn deriv(&self, axis: usize, x: [f64; 3]) -> f64 {
        let mut v = 0.0;
        for t in &self.terms {
            let (_, s) = cos_sin_turns(t.k[0] * x[0] + t.k[1] * x[1] + t.k[2] * x[2] + t.phase);
            v -= t.amp * 2.0 * PI * t.k[axis] * s;
        }
        v
    }

    /// Analytic second partial derivative.
    pub fn deriv2(&self, a: usize, b: usize, x: [f64; 3]) -> f64 {
        let mut v = 0.0;
        for t in &self.terms {
            let (c, _) = cos_sin_turns(t.k[0] * x[0] + t.k[1] * x[1] + t.k[2] * x[2] + t.phase);
            v -= t.amp * 4.0 * PI * PI * t.k[a] * t.k[b] * c;
        }
        v
    }
}

/// Closed-form generator for a whole field: one polynomial per stored component.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldSpec {
    pub p: usize,
    pub k: usize,
    pub comps: Vec<TrigSpec>,
}

impl FieldSpec {
    pub fn zero(p: usize, k: usize) -> Self {
        FieldSpec { p, k, comps: vec![TrigSpec::default(); form_dim(p) * grade_dim(k)] }
    }

    pub fn comp_mut(&mut self, form_comp: usize, v: usize) -> &mut TrigSpec {
        &mut self.comps[form_comp * grade_dim(self.k) + v]
    }

    /// Coframe spec `e_a = u_a + perturbation`.
    pub fn coframe_near_identity<R: Rng>(rng: &mut R, amp: f64, kmax: i32) -> Self {
        let mut s = FieldSpec::zero(1, 1);
        for a in 0..3 {
            for i in 0..4 {
                let c = if a == i { 1.0 } else { 0.0 };
                *s.comp_mut(a, i) = TrigSpec::random(rng, c, amp, kmax, 2);
            }
        }
        s
    }

    pub fn random<R: Rng>(rng: &mut R, p: usize, k: usize, amp: f64, kmax: i32) -> Self {
        let n = form_dim(p) * grade_dim(k);
        FieldSpec { p, k, comps: (0..n).map(|_| TrigSpec::random(rng, 0.0, amp, kmax, 2)).collect() }
    }
}

/// Evaluates a spec on the grid.
pub fn sample_field(spec: &FieldSpec, grid: Grid3) -> Result<FormField> {
    if spec.comps.len() != form_dim(spec.p) * grade_dim(spec.k) {
        return Err(Error::Shape("spec component count".into()));
    }
    for c in &spec.comps {
        c.validate()?;
    }
    let mut f = FormField::zeros(grid, spec.p, spec.k);
    for s in 0..grid.sites() {
        let x = grid.position(s);
        for (dst, c) in f.site_mut(s).iter_mut().zip(spec.comps.iter()) {
            *dst = c.eval(x);
        }
    }
    Ok(f)
}

/// Value product used inside wedges of valued forms.
pub trait ValueProduct {
    fn out_grade(&self, ka: usize, kb: usize) -> usize;
    fn apply(&self, ka: usize, a: &[f64], kb: usize, b: &[f64], out: &mut [f64]);
}

/// Exterior product of values.
pub struct Exterior;

impl ValueProduct for Exterior {
    fn out_grade(&self, ka: usize, kb: usize) -> usize {
        ka + kb
    }
    fn apply(&self, ka: usize, a: &[f64], kb: usize, b: &[f64], out: &mut [f64]) {
        if ka == 0 {
            for (o, y) in out.iter_mut().zip(b) {
                *o += a[0] * y;
            }
        } else if kb == 0 {
            for (o, x) in out.iter_mut().zip(a) {
                *o += x * b[0];
            }
        } else {
            algebra::wedge_acc(ka, a, kb, b, out);
        }
    }
}

/// Bivector-valued left factor acting by derivation on the right factor.
pub struct Action(pub Signature);

impl ValueProduct for Action {
    fn out_grade(&self, _ka: usize, kb: usize) -> usize {
        kb
    }
    fn apply(&self, ka: usize, a: &[f64], kb: usize, b: &[f64], out: &mut [f64]) {
        debug_assert_eq!(ka, 2);
        algebra::act_graded_acc(a, kb, b, &self.0.eta(), out);
    }
}

/// `Tr[T_γ(a) ∧ b]` for bivector values; `inv_gamma = 1/γ`.
pub struct TwistedPairing {
    pub inv_gamma: f64,
    pub sig: Signature,
}

impl ValueProduct for TwistedPairing {
    fn out_grade(&self, _ka: usize, _kb: usize) -> usize {
        0
    }
    fn apply(&self, ka: usize, a: &[f64], kb: usize, b: &[f64], out: &mut [f64]) {
        debug_assert!(ka == 2 && kb == 2);
        let x = algebra::Bivector6([a[0], a[1], a[2], a[3], a[4], a[5]]);
        let y = algebra::Bivector6([b[0], b[1], b[2], b[3], b[4], b[5]]);
        out[0] += algebra::hat_t_inv(&x, &y, self.inv_gamma, self.sig);
    }
}

/// `Tr[a ∧ b]` for values of complementary grades.
pub struct TracePairing;

impl ValueProduct for TracePairing {
    fn out_grade(&self, _ka: usize, _kb: usize) -> usize {
        0
    }
    fn apply(&self, ka: usize, a: &[f64], kb: usize, b: &[f64], out: &mut [f64]) {
        debug_assert_eq!(ka + kb, 4);
        let mut t = [0.0];
        algebra::wedge_acc(ka, a, kb, b, &mut t);
        out[0] += t[0];
    }
}

/// Pointwise wedge of two valued forms at one site.
pub fn site_wedge<P: ValueProduct>(
    prod: &P,
    pa: usize,
    ka: usize,
    a: &[f64],
    pb: usize,
    kb: usize,
    b: &[f64],
    out: &mut [f64],
) {
    let (va, vb) = (grade_dim(ka), grade_dim(kb));
    let vo = grade_dim(prod.out_grade(ka, kb));
    for (i, &ma) in FORM_MASKS[pa].iter().enumerate() {
        for (j, &mb) in FORM_MASKS[pb].iter().enumerate() {
            let s = blade_sign(ma, mb);
            if s == 0 {
                continue;
            }
            let o = form_index(ma | mb);
            let mut tmp = [0.0; 6];
            prod.apply(ka, &a[i * va..(i + 1) * va], kb, &b[j * vb..(j + 1) * vb], &mut tmp[..vo]);
            for v in 0..vo {
                out[o * vo + v] += s as f64 * tmp[v];
            }
        }
    }
}

/// Field-level wedge of valued forms.
pub fn wedge_fields<P: ValueProduct>(prod: &P, a: &FormField, b: &FormField) -> Result<FormField> {
    if a.grid != b.grid {
        return Err(Error::GridMismatch);
    }
    let p = a.p + b.p;
    let k = prod.out_grade(a.k, b.k);
    if p > 3 || k > 4 {
        return Err(Error::GradeOverflow);
    }
    let mut out = FormField::zeros(a.grid, p, k);
    for s in 0..a.grid.sites() {
        let (sa, sb) = (a.site(s), b.site(s));
        site_wedge(prod, a.p, a.k, sa, b.p, b.k, sb, out.site_mut(s));
    }
    Ok(out)
}

/// Central-difference partial derivative of all components along `axis`.
pub fn partial(f: &FormField, axis: usize) -> FormField {
    let g = f.grid;
    let st = f.stride();
    let inv = 1.0 / (2.0 * g.h());
    let mut out = FormField::zeros(g, f.p, f.k);
    for s in 0..g.sites() {
        let (fwd, bwd) = (g.neighbour(s, axis, true), g.neighbour(s, axis, false));
        for c in 0..st {
            out.data[s * st + c] = (f.data[fwd * st + c] - f.data[bwd * st + c]) * inv;
        }
    }
    out
}

/// Discrete exterior derivative from central differences.
pub fn ext_deriv(f: &FormField) -> Result<FormField> {
    if f.p >= 3 {
        return Err(Error::TopForm);
    }
    let vd = grade_dim(f.k);
    let mut out = FormField::zeros(f.grid, f.p + 1, f.k);
    for axis in 0..3 {
        let d = partial(f, axis);
        for (j, &m) in FORM_MASKS[f.p].iter().enumerate() {
            let sgn = blade_sign(1 << axis, m);
            if sgn == 0 {
                continue;
            }
            let o = form_index(m | (1 << axis));
            for s in 0..f.grid.sites() {
                let src = d.site(s);
                let dst = out.site_mut(s);
                for v in 0..vd {
                    dst[o * vd + v] += sgn as f64 * src[j * vd + v];
                }
            }
        }
    }
    Ok(out)
}

/// `d_ω f = d f + ω ∧ f` with ω acting by derivation on the values of `f`.
pub fn cov_deriv(f: &FormField, omega: &FormField, sig: Signature) -> Result<FormField> {
    check_connection(omega)?;
    let mut out = ext_deriv(f)?;
    let alg = wedge_fields(&Action(sig), omega, f)?;
    for (o, a) in out.data.iter_mut().zip(alg.data.iter()) {
        *o += a;
    }
    Ok(out)
}

fn check_connection(omega: &FormField) -> Result<()> {
    if omega.p != 1 || omega.k != 2 {
        return Err(Error::Shape("connection must be a bivector-valued 1-form".into()));
    }
    Ok(())
}

/// `F_ω = dω + ½[ω, ω]`.
pub fn curvature(omega: &FormField, sig: Signature) -> Result<FormField> {
    check_connection(omega)?;
    let mut out = ext_deriv(omega)?;
    let alg = wedge_fields(&Action(sig), omega, omega)?;
    for (o, a) in out.data.iter_mut().zip(alg.data.iter()) {
        *o += 0.5 * a;
    }
    Ok(out)
}

/// Riemann sum `h³ Σ f` of a top-form density (scalar or `Λ⁴`-valued).
pub fn integrate(f: &FormField) -> Result<f64> {
    if f.p != 3 || grade_dim(f.k) != 1 {
        return Err(Error::Shape("integrand must be a scalar 3-form".into()));
    }
    let h = f.grid.h();
    Ok(f.data.iter().sum::<f64>() * h * h * h)
}

/// Sum of a scalar 0-form times `h³`.
pub fn integrate_scalar(f: &FormField) -> Result<f64> {
    if grade_dim(f.k) != 1 || form_dim(f.p) != 1 {
        return Err(Error::Shape("integrand must be a scalar density".into()));
    }
    let h = f.grid.h();
    Ok(f.data.iter().sum::<f64>() * h * h * h)
}

/// Nondegenerate coframe `e ∈ Ω¹(T³, V)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Coframe {
    field: FormField,
}

/// Ratio `σ₃/‖e‖` below which a coframe is rejected.
pub const COFRAME_RANK_TOL: f64 = 1e-6;

impl Coframe {
    pub fn new(field: FormField) -> Result<Self> {
        if field.p != 1 || field.k != 1 {
            return Err(Error::Shape("coframe must be a vector-valued 1-form".into()));
        }
        for s in 0..field.grid.sites() {
            let m = site_matrix(field.site(s));
            let norm = m.norm();
            let sv = m.singular_values();
            let smin = sv.iter().fold(f64::INFINITY, |a, &b| a.min(b));
            let ratio = if norm > 0.0 { smin / norm } else { 0.0 };
            if ratio < COFRAME_RANK_TOL {
                return Err(Error::DegenerateCoframe { site: s, ratio });
            }
        }
        Ok(Coframe { field })
    }

    pub fn from_spec(spec: &FieldSpec, grid: Grid3) -> Result<Self> {
        Self::new(sample_field(spec, grid)?)
    }

    /// `e_a = u_a` at every site.
    pub fn standard(grid: Grid3) -> Self {
        let mut f = FormField::zeros(grid, 1, 1);
        for s in 0..grid.sites() {
            for a in 0..3 {
                f.set(s, a, a, 1.0);
            }
        }
        Coframe { field: f }
    }

    pub fn field(&self) -> &FormField {
        &self.field
    }

    pub fn into_field(self) -> FormField {
        self.field
    }

    pub fn grid(&self) -> Grid3 {
        self.field.grid
    }

    /// Rows `e_a ∈ V` at a site.
    pub fn at(&self, s: usize) -> [[f64; 4]; 3] {
        let d = self.field.site(s);
        let mut e = [[0.0; 4]; 3];
        for a in 0..3 {
            e[a].copy_from_slice(&d[4 * a..4 * a + 4]);
        }
        e
    }

    /// `g_ab = e_a^i η_ij e_b^j`.
    pub fn metric(&self, s: usize, sig: Signature) -> [[f64; 3]; 3] {
        boundary_metric(&self.at(s), sig)
    }
}

pub fn boundary_metric(e: &[[f64; 4]; 3], sig: Signature) -> [[f64; 3]; 3] {
    let eta = sig.eta_diag();
    let mut g = [[0.0; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            g[a][b] = (0..4).map(|i| e[a][i] * eta[i] as f64 * e[b][i]).sum();
        }
    }
    g
}

fn site_matrix(d: &[f64]) -> nalgebra::Matrix3x4<f64> {
    nalgebra::Matrix3x4::from_row_slice(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::Signature::*;
    use crate::rng::stream;
    use proptest::prelude::*;
    use rand::Rng;

    fn g(n: usize) -> Grid3 {
        Grid3::new(n).unwrap()
    }

    #[test]
    fn grid_validation() {
        assert!(Grid3::new(2).is_err());
        assert!(Grid3::new(6).is_ok());
        assert!(Grid3::new(7).is_err());
        assert!(Grid3::coarse(2).is_ok());
        let gr = g(4);
        for s in 0..gr.sites() {
            let c = gr.coords(s);
            assert_eq!(gr.index(c[0], c[1], c[2]), s);
        }
    }

    #[test]
    fn sine_is_exact_on_quarter_points() {
        let mut spec = FieldSpec::zero(0, 0);
        spec.comps[0] = TrigSpec::sin(1.0, [1.0, 0.0, 0.0]);
        let f = sample_field(&spec, g(4)).unwrap();
        let gr = g(4);
        let vals: Vec<f64> = (0..4).map(|i| f.get(gr.index(i, 0, 0), 0, 0)).collect();
        assert_eq!(vals, vec![0.0, 1.0, 0.0, -1.0]);
    }

    #[test]
    fn non_integer_wavenumber_rejected() {
        let mut spec = FieldSpec::zero(0, 0);
        spec.comps[0] = TrigSpec::sin(1.0, [0.5, 0.0, 0.0]);
        assert_eq!(sample_field(&spec, g(4)), Err(Error::NonPeriodic(0.5)));
    }

    #[test]
    fn random_spec_is_bit_reproducible() {
        let a = FieldSpec::random(&mut stream(3, "grid", 0), 1, 2, 0.5, 2);
        let b = FieldSpec::random(&mut stream(3, "grid", 0), 1, 2, 0.5, 2);
        let fa = sample_field(&a, g(8)).unwrap();
        let fb = sample_field(&b, g(8)).unwrap();
        assert!(fa.data().iter().zip(fb.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn constant_field_has_zero_derivative() {
        let mut spec = FieldSpec::zero(1, 2);
        for c in spec.comps.iter_mut() {
            *c = TrigSpec::constant(0.7);
        }
        let f = sample_field(&spec, g(6)).unwrap();
        assert_eq!(ext_deriv(&f).unwrap().sup_norm(), 0.0);
    }

    #[test]
    fn d_squared_vanishes_for_all_degrees_and_values() {
        let gr = g(6);
        for p in 0..2 {
            for k in 0..5 {
                let spec = FieldSpec::random(&mut stream(1, "d2", (p * 5 + k) as u64), p, k, 1.0, 2);
                let f = sample_field(&spec, gr).unwrap();
                let dd = ext_deriv(&ext_deriv(&f).unwrap()).unwrap();
                assert!(dd.sup_norm() < 1e-13, "p={p} k={k} {}", dd.sup_norm());
            }
        }
        let f = FormField::zeros(gr, 3, 1);
        assert_eq!(ext_deriv(&f), Err(Error::TopForm));
    }

    fn d_sine_error(n: usize) -> f64 {
        // α = sin(2πx¹) dx²  ⇒  dα = 2π cos(2πx¹) dx¹∧dx²
        let mut spec = FieldSpec::zero(1, 0);
        *spec.comp_mut(1, 0) = TrigSpec::sin(1.0, [1.0, 0.0, 0.0]);
        let gr = g(n);
        let d = ext_deriv(&sample_field(&spec, gr).unwrap()).unwrap();
        let mut err = 0.0f64;
        for s in 0..gr.sites() {
            let x = gr.position(s);
            let want = 2.0 * PI * (2.0 * PI * x[0]).cos();
            err = err.max((d.get(s, 0, 0) - want).abs());
            err = err.max(d.get(s, 1, 0).abs()).max(d.get(s, 2, 0).abs());
        }
        err
    }

    #[test]
    fn d_of_sine_converges_at_second_order() {
        let r = d_sine_error(8) / d_sine_error(16);
        assert!((3.2..4.8).contains(&r), "{r}");
    }

    #[test]
    fn cov_deriv_reduces_to_d_and_to_algebra() {
        let gr = g(6);
        let f = sample_field(&FieldSpec::random(&mut stream(2, "cd", 0), 1, 1, 1.0, 2), gr).unwrap();
        let zero = FormField::zeros(gr, 1, 2);
        assert_eq!(cov_deriv(&f, &zero, Lorentzian).unwrap(), ext_deriv(&f).unwrap());

        // constant f and ω: pure algebraic term
        let mut fs = FieldSpec::zero(1, 1);
        let mut os = FieldSpec::zero(1, 2);
        let mut r = stream(2, "cd", 1);
        for c in fs.comps.iter_mut().chain(os.comps.iter_mut()) {
            *c = TrigSpec::constant(r.gen_range(-1.0..1.0));
        }
        let f = sample_field(&fs, gr).unwrap();
        let w = sample_field(&os, gr).unwrap();
        let got = cov_deriv(&f, &w, Lorentzian).unwrap();
        let alg = wedge_fields(&Action(Lorentzian), &w, &f).unwrap();
        assert!(got.max_diff(&alg).unwrap() < 1e-15);
    }

    #[test]
    fn leibniz_for_e_wedge_e() {
        // Exact for spatially constant e with arbitrary ω; O(h²) otherwise.
        let gr = g(8);
        let mut es = FieldSpec::zero(1, 1);
        let mut r = stream(4, "leib", 0);
        for c in es.comps.iter_mut() {
            *c = TrigSpec::constant(r.gen_range(-1.0..1.0));
        }
        let e = sample_field(&es, gr).unwrap();
        let w = sample_field(&FieldSpec::random(&mut r, 1, 2, 1.0, 2), gr).unwrap();
        for sig in [Euclidean, Lorentzian] {
            let ee = wedge_fields(&Exterior, &e, &e).unwrap();
            let lhs = cov_deriv(&ee, &w, sig).unwrap();
            let de = cov_deriv(&e, &w, sig).unwrap();
            let rhs = wedge_fields(&Exterior, &de, &e).unwrap().scaled(2.0);
            assert!(lhs.max_diff(&rhs).unwrap() < 1e-12);
        }
        let leib = |n: usize| {
            let gr = g(n);
            let mut r = stream(4, "leib", 1);
            let e = sample_field(&FieldSpec::coframe_near_identity(&mut r, 0.2, 1), gr).unwrap();
            let w = sample_field(&FieldSpec::random(&mut r, 1, 2, 0.5, 1), gr).unwrap();
            let ee = wedge_fields(&Exterior, &e, &e).unwrap();
            let lhs = cov_deriv(&ee, &w, Lorentzian).unwrap();
            let de = cov_deriv(&e, &w, Lorentzian).unwrap();
            let rhs = wedge_fields(&Exterior, &de, &e).unwrap().scaled(2.0);
            lhs.max_diff(&rhs).unwrap()
        };
        let ratio = leib(8) / leib(16);
        assert!((3.2..4.8).contains(&ratio), "{ratio}");
    }

    #[test]
    fn curvature_of_constant_connection_is_algebraic() {
        let gr = g(4);
        assert_eq!(curvature(&FormField::zeros(gr, 1, 2), Lorentzian).unwrap().sup_norm(), 0.0);
        let mut os = FieldSpec::zero(1, 2);
        let mut r = stream(5, "curv", 0);
        for c in os.comps.iter_mut() {
            *c = TrigSpec::constant(r.gen_range(-1.0..1.0));
        }
        let w = sample_field(&os, gr).unwrap();
        let f = curvature(&w, Euclidean).unwrap();
        // F_12 = [ω_1, ω_2]
        let s = 0;
        let w1 = algebra::Bivector6(w.site(s)[0..6].try_into().unwrap());
        let w2 = algebra::Bivector6(w.site(s)[6..12].try_into().unwrap());
        let b = algebra::bracket2(&w1, &w2, Euclidean);
        for v in 0..6 {
            assert!((f.get(s, 0, v) - b.0[v]).abs() < 1e-14);
        }
    }

    fn bianchi(n: usize) -> f64 {
        let gr = g(n);
        let w = sample_field(&FieldSpec::random(&mut stream(6, "bianchi", 0), 1, 2, 0.5, 1), gr).unwrap();
        let f = curvature(&w, Lorentzian).unwrap();
        cov_deriv(&f, &w, Lorentzian).unwrap().sup_norm()
    }

    #[test]
    fn bianchi_identity_converges() {
        let r = bianchi(8) / bianchi(16);
        assert!((3.2..4.8).contains(&r), "{r}");
    }

    #[test]
    fn integration_oracles() {
        let gr = g(8);
        let mut one = FieldSpec::zero(3, 0);
        one.comps[0] = TrigSpec::constant(1.0);
        assert!((integrate(&sample_field(&one, gr).unwrap()).unwrap() - 1.0).abs() < 1e-15);
        let mut s = FieldSpec::zero(3, 0);
        s.comps[0] = TrigSpec::sin(1.0, [1.0, 0.0, 0.0]);
        assert!(integrate(&sample_field(&s, gr).unwrap()).unwrap().abs() < 1e-13);
        // ∫ cos(2π(x+y)) cos(2π(x+y)) = ½ and ∫ sin(2πx)cos(2πx) = 0 below the band
        let c = TrigSpec::cos(1.0, [1.0, 1.0, 0.0]);
        let mut acc = 0.0;
        for site in 0..gr.sites() {
            let x = gr.position(site);
            acc += c.eval(x) * c.eval(x);
        }
        assert!((acc * gr.h().powi(3) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn integral_of_exact_form_vanishes() {
        let gr = g(8);
        let a = sample_field(&FieldSpec::random(&mut stream(7, "int", 0), 2, 0, 1.0, 3), gr).unwrap();
        assert!(integrate(&ext_deriv(&a).unwrap()).unwrap().abs() < 1e-12);
    }

    #[test]
    fn coframe_rejects_rank_deficient_input() {
        let gr = g(4);
        let mut f = FormField::zeros(gr, 1, 1);
        for s in 0..gr.sites() {
            f.set(s, 0, 0, 1.0);
            f.set(s, 1, 1, 1.0);
            f.set(s, 2, 1, 1.0);
        }
        assert!(matches!(Coframe::new(f), Err(Error::DegenerateCoframe { .. })));
        let c = Coframe::standard(gr);
        assert_eq!(c.metric(0, Lorentzian), [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
    }

    proptest! {
        #[test]
        fn cov_deriv_is_linear(seed in 0u64..1000, c in -2.0f64..2.0) {
            let gr = g(4);
            let mut r = stream(seed, "lin", 0);
            let f1 = sample_field(&FieldSpec::random(&mut r, 1, 1, 1.0, 1), gr).unwrap();
            let f2 = sample_field(&FieldSpec::random(&mut r, 1, 1, 1.0, 1), gr).unwrap();
            let w = sample_field(&FieldSpec::random(&mut r, 1, 2, 1.0, 1), gr).unwrap();
            let lhs = cov_deriv(&f1.axpy(c, &f2).unwrap(), &w, Lorentzian).unwrap();
            let rhs = cov_deriv(&f1, &w, Lorentzian).unwrap()
                .axpy(c, &cov_deriv(&f2, &w, Lorentzian).unwrap()).unwrap();
            prop_assert!(lhs.max_diff(&rhs).unwrap() < 1e-11);
        }
    }
}
