//! Exterior algebra of the four-dimensional fiber `(V, η)`.
//!
//! Basis vectors are `u_1..u_4`. Bivectors are stored in the order
//! `(12, 13, 14, 23, 24, 34)`, trivectors by the index of the omitted vector,
//! and the top element relative to `u_1∧u_2∧u_3∧u_4`, whose trace is one.
//! Every routine is generic over [`Scalar`] so sign conventions can be checked
//! in exact rational arithmetic and then reused unchanged on `f64`.

use core::fmt::Debug;
use core::ops::{Add, Mul, Neg, Sub};

use num_rational::Ratio;
#[allow(unused_imports)]
use num_traits::Float;
use num_traits::Num;

use crate::error::{Error, Result};

/// Field of coefficients: `f64` for grid work, [`Rational`] for exact checks.
pub trait Scalar: Copy + Debug + PartialEq + Num + Neg<Output = Self> + 'static {
    fn from_i64(v: i64) -> Self;
}

impl Scalar for f64 {
    fn from_i64(v: i64) -> Self {
        v as f64
    }
}

/// Exact rational coefficients.
pub type Rational = Ratio<i128>;

impl Scalar for Rational {
    fn from_i64(v: i64) -> Self {
        Ratio::from_integer(v as i128)
    }
}

/// Basis blades per grade, as bitmasks over `u_1..u_4` (bit `i` is `u_{i+1}`).
pub const BLADES: [&[u8]; 5] = [
    &[0b0000],
    &[0b0001, 0b0010, 0b0100, 0b1000],
    &[0b0011, 0b0101, 0b1001, 0b0110, 0b1010, 0b1100],
    &[0b1110, 0b1101, 0b1011, 0b0111],
    &[0b1111],
];

/// Number of components of a grade-`k` element.
pub const fn grade_dim(k: usize) -> usize {
    match k {
        0 | 4 => 1,
        1 | 3 => 4,
        2 => 6,
        _ => 0,
    }
}

/// Sign of `e_A ∧ e_B` relative to the sorted blade `e_{A∪B}`; zero on overlap.
///
/// Works for any bit width, so coordinate forms reuse it.
pub fn blade_sign(a: u8, b: u8) -> i64 {
    if a & b != 0 {
        return 0;
    }
    let mut inversions = 0u32;
    for i in 0..8 {
        if a & (1 << i) != 0 {
            inversions += (b & ((1u8 << i) - 1)).count_ones();
        }
    }
    if inversions % 2 == 0 {
        1
    } else {
        -1
    }
}

/// Position of a blade inside its grade's storage order.
pub fn blade_index(mask: u8) -> usize {
    let k = mask.count_ones() as usize;
    BLADES[k]
        .iter()
        .position(|&m| m == mask)
        .expect("mask is a valid grade-k blade")
}

/// Diagonal metric. Entries are usually ±1; zeros are allowed for the
/// abstract degenerate-metric computations.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Eta<T>(pub [T; 4]);

/// The two admissible fiber metrics.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Signature {
    /// `η = diag(1,1,1,1)`
    Euclidean,
    /// `η = diag(1,1,1,-1)`
    Lorentzian,
}

impl Signature {
    pub fn eta_diag(self) -> [i64; 4] {
        match self {
            Signature::Euclidean => [1, 1, 1, 1],
            Signature::Lorentzian => [1, 1, 1, -1],
        }
    }

    /// Sign of `det η`.
    pub fn s(self) -> i64 {
        self.eta_diag().iter().product()
    }

    pub fn eta<T: Scalar>(self) -> Eta<T> {
        let d = self.eta_diag();
        Eta([
            T::from_i64(d[0]),
            T::from_i64(d[1]),
            T::from_i64(d[2]),
            T::from_i64(d[3]),
        ])
    }
}

macro_rules! linear_type {
    ($(#[$doc:meta])* $name:ident, $n:expr) => {
        $(#[$doc])*
        #[derive(Clone, Copy, Debug, PartialEq)]
        pub struct $name<T>(pub [T; $n]);

        impl<T: Scalar> $name<T> {
            pub fn zero() -> Self {
                $name([T::zero(); $n])
            }

            pub fn basis(i: usize) -> Self {
                let mut v = [T::zero(); $n];
                v[i] = T::one();
                $name(v)
            }

            pub fn scale(self, c: T) -> Self {
                let mut v = self.0;
                for x in v.iter_mut() {
                    *x = *x * c;
                }
                $name(v)
            }
        }

        impl $name<f64> {
            /// Euclidean norm of the coefficient vector.
            pub fn norm(&self) -> f64 {
                self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
            }
        }

        impl<T: Scalar> Add for $name<T> {
            type Output = Self;
            fn add(self, o: Self) -> Self {
                let mut v = self.0;
                for (x, y) in v.iter_mut().zip(o.0.iter()) {
                    *x = *x + *y;
                }
                $name(v)
            }
        }

        impl<T: Scalar> Sub for $name<T> {
            type Output = Self;
            fn sub(self, o: Self) -> Self {
                let mut v = self.0;
                for (x, y) in v.iter_mut().zip(o.0.iter()) {
                    *x = *x - *y;
                }
                $name(v)
            }
        }

        impl<T: Scalar> Neg for $name<T> {
            type Output = Self;
            fn neg(self) -> Self {
                self.scale(-T::one())
            }
        }

        impl<T: Scalar> Mul<T> for $name<T> {
            type Output = Self;
            fn mul(self, c: T) -> Self {
                self.scale(c)
            }
        }
    };
}

linear_type!(
    /// Element of `V`.
    Vector4,
    4
);
linear_type!(
    /// Element of `Λ²V` in the order `(12,13,14,23,24,34)`.
    Bivector6,
    6
);
linear_type!(
    /// Element of `Λ³V`; component `l` multiplies the sorted wedge of the other three vectors.
    Trivector4,
    4
);

/// Element of `Λ⁴V` relative to `u_1∧u_2∧u_3∧u_4`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quadvector1<T>(pub T);

/// An element of some fixed grade.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Graded<T> {
    Scalar(T),
    Vector(Vector4<T>),
    Bivector(Bivector6<T>),
    Trivector(Trivector4<T>),
    Quadvector(Quadvector1<T>),
}

impl<T: Scalar> Graded<T> {
    pub fn grade(&self) -> usize {
        match self {
            Graded::Scalar(_) => 0,
            Graded::Vector(_) => 1,
            Graded::Bivector(_) => 2,
            Graded::Trivector(_) => 3,
            Graded::Quadvector(_) => 4,
        }
    }

    pub fn coeffs(&self) -> &[T] {
        match self {
            Graded::Scalar(x) => core::slice::from_ref(x),
            Graded::Vector(v) => &v.0,
            Graded::Bivector(b) => &b.0,
            Graded::Trivector(t) => &t.0,
            Graded::Quadvector(q) => core::slice::from_ref(&q.0),
        }
    }

    /// Builds an element of grade `k` from its coefficients.
    pub fn from_coeffs(k: usize, c: &[T]) -> Result<Self> {
        if k > 4 {
            return Err(Error::GradeOverflow);
        }
        assert_eq!(c.len(), grade_dim(k));
        Ok(match k {
            0 => Graded::Scalar(c[0]),
            1 => Graded::Vector(Vector4([c[0], c[1], c[2], c[3]])),
            2 => Graded::Bivector(Bivector6([c[0], c[1], c[2], c[3], c[4], c[5]])),
            3 => Graded::Trivector(Trivector4([c[0], c[1], c[2], c[3]])),
            _ => Graded::Quadvector(Quadvector1(c[0])),
        })
    }
}

/// Accumulates `x ∧ y` into `out` for grades `kx`, `ky`.
pub fn wedge_acc<T: Scalar>(kx: usize, x: &[T], ky: usize, y: &[T], out: &mut [T]) {
    debug_assert!(kx + ky <= 4);
    for (i, &mx) in BLADES[kx].iter().enumerate() {
        if x[i] == T::zero() {
            continue;
        }
        for (j, &my) in BLADES[ky].iter().enumerate() {
            let s = blade_sign(mx, my);
            if s == 0 {
                continue;
            }
            let idx = blade_index(mx | my);
            let p = x[i] * y[j];
            if s > 0 {
                out[idx] = out[idx] + p;
            } else {
                out[idx] = out[idx] - p;
            }
        }
    }
}

/// Exterior product of two graded elements.
pub fn wedge<T: Scalar>(x: &Graded<T>, y: &Graded<T>) -> Result<Graded<T>> {
    let k = x.grade() + y.grade();
    if k > 4 {
        return Err(Error::GradeOverflow);
    }
    let mut out = [T::zero(); 6];
    wedge_acc(x.grade(), x.coeffs(), y.grade(), y.coeffs(), &mut out[..grade_dim(k)]);
    Graded::from_coeffs(k, &out[..grade_dim(k)])
}

pub fn wedge_vv<T: Scalar>(a: &Vector4<T>, b: &Vector4<T>) -> Bivector6<T> {
    let mut out = Bivector6::zero();
    wedge_acc(1, &a.0, 1, &b.0, &mut out.0);
    out
}

pub fn wedge_bv<T: Scalar>(b: &Bivector6<T>, v: &Vector4<T>) -> Trivector4<T> {
    let mut out = Trivector4::zero();
    wedge_acc(2, &b.0, 1, &v.0, &mut out.0);
    out
}

pub fn wedge_bb<T: Scalar>(a: &Bivector6<T>, b: &Bivector6<T>) -> Quadvector1<T> {
    let mut out = [T::zero()];
    wedge_acc(2, &a.0, 2, &b.0, &mut out);
    Quadvector1(out[0])
}

pub fn wedge_vt<T: Scalar>(v: &Vector4<T>, t: &Trivector4<T>) -> Quadvector1<T> {
    let mut out = [T::zero()];
    wedge_acc(1, &v.0, 3, &t.0, &mut out);
    Quadvector1(out[0])
}

/// Volume pairing `Tr: Λ⁴V → R`.
pub fn trace<T: Scalar>(q: &Quadvector1<T>) -> T {
    q.0
}

/// Internal Hodge star on bivectors: `⋆(u_i∧u_j) = ½ ε_ijkl η^km η^ln u_m∧u_n`.
///
/// Requires `η` with entries ±1 (so `η^kk = η_kk`).
pub fn hodge_star2<T: Scalar>(b: &Bivector6<T>, sig: Signature) -> Bivector6<T> {
    let eta = sig.eta::<T>().0;
    let mut out = Bivector6::zero();
    for (p, &m) in BLADES[2].iter().enumerate() {
        let c = 0b1111 ^ m;
        let q = blade_index(c);
        let (k, l) = two_bits(c);
        let s = T::from_i64(blade_sign(m, c)) * eta[k] * eta[l];
        out.0[q] = out.0[q] + b.0[p] * s;
    }
    out
}

fn two_bits(m: u8) -> (usize, usize) {
    let k = m.trailing_zeros() as usize;
    let l = (m & !(1 << k)).trailing_zeros() as usize;
    (k, l)
}

/// Antisymmetric matrix `A^{ij}` of a bivector.
pub fn bivector_to_matrix<T: Scalar>(b: &Bivector6<T>) -> [[T; 4]; 4] {
    let mut a = [[T::zero(); 4]; 4];
    for (p, &m) in BLADES[2].iter().enumerate() {
        let (i, j) = two_bits(m);
        a[i][j] = b.0[p];
        a[j][i] = -b.0[p];
    }
    a
}

/// Upper-triangular part of an antisymmetric matrix.
pub fn matrix_to_bivector<T: Scalar>(a: &[[T; 4]; 4]) -> Bivector6<T> {
    let mut b = Bivector6::zero();
    for (p, &m) in BLADES[2].iter().enumerate() {
        let (i, j) = two_bits(m);
        b.0[p] = a[i][j];
    }
    b
}

/// `[A,B]^{rs} = A^{rm} η_mn B^{ns} − B^{rm} η_mn A^{ns}`.
pub fn bracket2_eta<T: Scalar>(a: &Bivector6<T>, b: &Bivector6<T>, eta: &Eta<T>) -> Bivector6<T> {
    let ma = bivector_to_matrix(a);
    let mb = bivector_to_matrix(b);
    let mut c = [[T::zero(); 4]; 4];
    for r in 0..4 {
        for s in (r + 1)..4 {
            let mut acc = T::zero();
            for m in 0..4 {
                acc = acc + (ma[r][m] * mb[m][s] - mb[r][m] * ma[m][s]) * eta.0[m];
            }
            c[r][s] = acc;
        }
    }
    matrix_to_bivector(&c)
}

pub fn bracket2<T: Scalar>(a: &Bivector6<T>, b: &Bivector6<T>, sig: Signature) -> Bivector6<T> {
    bracket2_eta(a, b, &sig.eta())
}

/// `(a·v)^i = a^{ij} η_jk v^k`.
pub fn act_on_vector_eta<T: Scalar>(a: &Bivector6<T>, v: &Vector4<T>, eta: &Eta<T>) -> Vector4<T> {
    let m = bivector_to_matrix(a);
    let mut out = Vector4::zero();
    for i in 0..4 {
        let mut acc = T::zero();
        for j in 0..4 {
            acc = acc + m[i][j] * eta.0[j] * v.0[j];
        }
        out.0[i] = acc;
    }
    out
}

pub fn act_on_vector<T: Scalar>(a: &Bivector6<T>, v: &Vector4<T>, sig: Signature) -> Vector4<T> {
    act_on_vector_eta(a, v, &sig.eta())
}

/// Derivation action of a bivector on a grade-`k` element, accumulated into `out`.
///
/// The generator `u_i∧u_j` sends `v ↦ u_i η_jj v^j − u_j η_ii v^i`; on blades it
/// acts by the Leibniz rule, realised as `w ∧ ι_r(B)` summed over the vectors of `B`.
pub fn act_graded_acc<T: Scalar>(a: &[T], k: usize, x: &[T], eta: &Eta<T>, out: &mut [T]) {
    for (p, &m) in BLADES[2].iter().enumerate() {
        if a[p] == T::zero() {
            continue;
        }
        let (i, j) = two_bits(m);
        for (q, &bm) in BLADES[k].iter().enumerate() {
            if x[q] == T::zero() {
                continue;
            }
            // replace u_j by η_jj u_i, and u_i by −η_ii u_j
            for &(from, to, c) in &[(j, i, eta.0[j]), (i, j, -eta.0[i])] {
                if bm & (1 << from) == 0 || c == T::zero() {
                    continue;
                }
                let rest = bm & !(1 << from);
                let s_contract = if (bm & ((1u8 << from) - 1)).count_ones() % 2 == 0 {
                    1
                } else {
                    -1
                };
                let s_wedge = blade_sign(1 << to, rest);
                if s_wedge == 0 {
                    continue;
                }
                let idx = blade_index(rest | (1 << to));
                let coef = a[p] * x[q] * c * T::from_i64(s_contract * s_wedge);
                out[idx] = out[idx] + coef;
            }
        }
    }
}

/// Derivation action on a graded element.
pub fn act_graded<T: Scalar>(a: &Bivector6<T>, x: &Graded<T>, eta: &Eta<T>) -> Graded<T> {
    let k = x.grade();
    let mut out = [T::zero(); 6];
    act_graded_acc(&a.0, k, x.coeffs(), eta, &mut out[..grade_dim(k)]);
    Graded::from_coeffs(k, &out[..grade_dim(k)]).expect("grade preserved")
}

/// Barbero–Immirzi parameter; `Infinite` turns the twist into the identity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Gamma {
    Finite(f64),
    Infinite,
}

impl Gamma {
    pub fn new(g: f64) -> Result<Self> {
        if g == 0.0 {
            Err(Error::ZeroGamma)
        } else if !g.is_finite() {
            Err(Error::NonFiniteGamma(g))
        } else {
            Ok(Gamma::Finite(g))
        }
    }

    /// `1/γ`, zero for the infinite flag.
    pub fn inverse(&self) -> f64 {
        match self {
            Gamma::Finite(g) => 1.0 / g,
            Gamma::Infinite => 0.0,
        }
    }
}

/// `T_γ(α) = α + γ⁻¹ ⋆α`, written in terms of `a = γ⁻¹`.
pub fn t_gamma_inv<T: Scalar>(b: &Bivector6<T>, inv_gamma: T, sig: Signature) -> Bivector6<T> {
    *b + hodge_star2(b, sig) * inv_gamma
}

pub fn t_gamma(b: &Bivector6<f64>, gamma: Gamma, sig: Signature) -> Bivector6<f64> {
    t_gamma_inv(b, gamma.inverse(), sig)
}

/// Inverse twist `(1 − a⋆)/(1 − s a²)`.
pub fn t_gamma_inverse(b: &Bivector6<f64>, gamma: Gamma, sig: Signature) -> Result<Bivector6<f64>> {
    let a = gamma.inverse();
    let den = 1.0 - sig.s() as f64 * a * a;
    if den.abs() < 1e-12 {
        return Err(Error::TwistNotInvertible);
    }
    Ok((*b - hodge_star2(b, sig) * a) * (1.0 / den))
}

/// Twisted pairing `T̂_γ(α ⊗ β) = Tr[T_γ(α) ∧ β]`.
pub fn hat_t_inv<T: Scalar>(a: &Bivector6<T>, b: &Bivector6<T>, inv_gamma: T, sig: Signature) -> T {
    trace(&wedge_bb(&t_gamma_inv(a, inv_gamma, sig), b))
}

pub fn hat_t(a: &Bivector6<f64>, b: &Bivector6<f64>, gamma: Gamma, sig: Signature) -> f64 {
    hat_t_inv(a, b, gamma.inverse(), sig)
}

/// Gram matrix of `T̂_γ` on the bivector basis, with its determinant.
pub fn t_gamma_matrix(gamma: Gamma, sig: Signature) -> (nalgebra::Matrix6<f64>, f64) {
    let m = nalgebra::Matrix6::from_fn(|p, q| {
        hat_t(&Bivector6::basis(p), &Bivector6::basis(q), gamma, sig)
    });
    let d = m.determinant();
    (m, d)
}

/// The auxiliary matrix `F_α` whose determinant is `(1+α²)³`.
pub fn holst_f_matrix(alpha: f64) -> (nalgebra::Matrix6<f64>, f64) {
    let a = alpha;
    #[rustfmt::skip]
    let m = nalgebra::Matrix6::new(
        1.0, 0.0, 0.0, 0.0, 0.0, a,
        0.0, 1.0, 0.0, 0.0, -a, 0.0,
        0.0, 0.0, 1.0, -a, 0.0, 0.0,
        0.0, 0.0, a, 1.0, 0.0, 0.0,
        0.0, a, 0.0, 0.0, 1.0, 0.0,
        -a, 0.0, 0.0, 0.0, 0.0, 1.0,
    );
    let d = m.determinant();
    (m, d)
}

/// `max ‖[T_γA, T_γB] − 2T_γ[A,B]‖ / (‖A‖‖B‖)` over the given pairs.
pub fn morphism_residual(
    gamma: Gamma,
    sig: Signature,
    pairs: &[(Bivector6<f64>, Bivector6<f64>)],
) -> f64 {
    let mut worst = 0.0f64;
    for (a, b) in pairs {
        let lhs = bracket2(&t_gamma(a, gamma, sig), &t_gamma(b, gamma, sig), sig);
        let rhs = t_gamma(&bracket2(a, b, sig), gamma, sig) * 2.0;
        let den = a.norm() * b.norm();
        if den > 0.0 {
            worst = worst.max((lhs - rhs).norm() / den);
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const SIGS: [Signature; 2] = [Signature::Euclidean, Signature::Lorentzian];

    fn q(n: i64) -> Rational {
        Rational::from_i64(n)
    }

    /// Fully antisymmetric symbol by counting inversions.
    fn eps(idx: [usize; 4]) -> i64 {
        for i in 0..4 {
            for j in (i + 1)..4 {
                if idx[i] == idx[j] {
                    return 0;
                }
            }
        }
        let mut inv = 0;
        for i in 0..4 {
            for j in (i + 1)..4 {
                if idx[i] > idx[j] {
                    inv += 1;
                }
            }
        }
        if inv % 2 == 0 {
            1
        } else {
            -1
        }
    }

    /// Star of `u_i∧u_j` by the literal sum over all `k,l,m,n`, as a full antisymmetric tensor.
    fn star_oracle(i: usize, j: usize, sig: Signature) -> [[i64; 4]; 4] {
        let eta = sig.eta_diag();
        let mut t = [[0i64; 4]; 4];
        // ½ ε_ijkl η^km η^ln (u_m⊗u_n − u_n⊗u_m); the two halves of u_m∧u_n give a factor 2
        for k in 0..4 {
            for l in 0..4 {
                for m in 0..4 {
                    for n in 0..4 {
                        let ekm = if k == m { eta[k] } else { 0 };
                        let eln = if l == n { eta[l] } else { 0 };
                        let c = eps([i, j, k, l]) * ekm * eln;
                        t[m][n] += c;
                        t[n][m] -= c;
                    }
                }
            }
        }
        // t now holds 2·(½ ε η η)·(antisymmetrised) = coefficient tensor times 2
        for row in t.iter_mut() {
            for x in row.iter_mut() {
                *x /= 2;
            }
        }
        t
    }

    #[test]
    fn star_matches_epsilon_sum_oracle() {
        for sig in SIGS {
            for (p, &m) in BLADES[2].iter().enumerate() {
                let (i, j) = two_bits(m);
                let want = star_oracle(i, j, sig);
                let got = bivector_to_matrix(&hodge_star2(&Bivector6::<Rational>::basis(p), sig));
                for r in 0..4 {
                    for s in 0..4 {
                        assert_eq!(got[r][s], q(want[r][s]), "{sig:?} p={p} ({r},{s})");
                    }
                }
            }
        }
    }

    #[test]
    fn star_of_u12_frozen_values() {
        // Euclidean: ⋆(u1∧u2) = u3∧u4; Lorentzian picks up η^44 = −1.
        let e = hodge_star2(&Bivector6::<Rational>::basis(0), Signature::Euclidean);
        assert_eq!(e.0, [q(0), q(0), q(0), q(0), q(0), q(1)]);
        let l = hodge_star2(&Bivector6::<Rational>::basis(0), Signature::Lorentzian);
        assert_eq!(l.0, [q(0), q(0), q(0), q(0), q(0), q(-1)]);
    }

    #[test]
    fn star_squares_to_s_exactly() {
        for sig in SIGS {
            for p in 0..6 {
                let b = Bivector6::<Rational>::basis(p);
                let ss = hodge_star2(&hodge_star2(&b, sig), sig);
                assert_eq!(ss, b.scale(q(sig.s())));
            }
        }
    }

    /// Bracket through mixed 4×4 matrices `t^i_j = A^{ik} η_kj` and a plain commutator.
    fn bracket_oracle(a: &Bivector6<f64>, b: &Bivector6<f64>, sig: Signature) -> Bivector6<f64> {
        let eta = nalgebra::Matrix4::from_diagonal(&nalgebra::Vector4::from_iterator(
            sig.eta_diag().iter().map(|&x| x as f64),
        ));
        let to = |x: &Bivector6<f64>| {
            let m = bivector_to_matrix(x);
            nalgebra::Matrix4::from_fn(|i, j| m[i][j]) * eta
        };
        let c = to(a) * to(b) - to(b) * to(a);
        let upper = c * eta; // η⁻¹ = η
        let mut arr = [[0.0; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                arr[i][j] = upper[(i, j)];
            }
        }
        matrix_to_bivector(&arr)
    }

    #[test]
    fn bracket_b12_b13_matches_matrix_oracle() {
        for sig in SIGS {
            let a = Bivector6::basis(0);
            let b = Bivector6::basis(1);
            let got = bracket2(&a, &b, sig);
            let want = bracket_oracle(&a, &b, sig);
            assert!((got - want).norm() < 1e-15);
            // [u12, u13] = −η_11 u23 under this convention
            assert_eq!(got.0, [0.0, 0.0, 0.0, -1.0, 0.0, 0.0]);
        }
    }

    #[test]
    fn act_b12_on_u3_and_u2() {
        for sig in SIGS {
            let b12 = Bivector6::<f64>::basis(0);
            assert_eq!(act_on_vector(&b12, &Vector4::basis(2), sig), Vector4::zero());
            // u1∧u2 · u2 = η_22 u1
            assert_eq!(act_on_vector(&b12, &Vector4::basis(1), sig).0, [1.0, 0.0, 0.0, 0.0]);
            // u1∧u2 · u1 = −η_11 u2
            assert_eq!(act_on_vector(&b12, &Vector4::basis(0), sig).0, [0.0, -1.0, 0.0, 0.0]);
        }
    }

    #[test]
    fn wedge_basic_examples() {
        let u = |i| Graded::Vector(Vector4::<Rational>::basis(i));
        assert_eq!(wedge(&u(0), &u(0)).unwrap(), Graded::Bivector(Bivector6::zero()));
        assert_eq!(wedge(&u(0), &u(1)).unwrap(), Graded::Bivector(Bivector6::basis(0)));
        let b12 = Graded::Bivector(Bivector6::<Rational>::basis(0));
        let b34 = Graded::Bivector(Bivector6::<Rational>::basis(5));
        assert_eq!(wedge(&b12, &b34).unwrap(), Graded::Quadvector(Quadvector1(q(1))));
        assert_eq!(wedge(&b12, &Graded::Trivector(Trivector4::zero())), Err(Error::GradeOverflow));
    }

    #[test]
    fn trace_matches_epsilon() {
        for i in 0..4 {
            for j in 0..4 {
                for k in 0..4 {
                    for l in 0..4 {
                        let u = |x| Graded::Vector(Vector4::<Rational>::basis(x));
                        let w = wedge(&wedge(&wedge(&u(i), &u(j)).unwrap(), &u(k)).unwrap(), &u(l)).unwrap();
                        let Graded::Quadvector(qv) = w else { panic!() };
                        assert_eq!(trace(&qv), q(eps([i, j, k, l])));
                    }
                }
            }
        }
    }

    #[test]
    fn act_on_bivectors_is_the_bracket() {
        for sig in SIGS {
            for p in 0..6 {
                for r in 0..6 {
                    let a = Bivector6::<Rational>::basis(p);
                    let b = Bivector6::<Rational>::basis(r);
                    let viaact = act_graded(&a, &Graded::Bivector(b), &sig.eta());
                    assert_eq!(viaact, Graded::Bivector(bracket2(&a, &b, sig)));
                }
            }
        }
    }

    #[test]
    fn pairing_matrix_entries_follow_closed_form() {
        // Tr[T_γ(u_ij) ∧ u_kl] = ε_ijkl + (2s/γ) η_i⟨k η_l⟩j in this normalisation.
        for sig in SIGS {
            let gamma = Gamma::new(3.0).unwrap();
            let (m, _) = t_gamma_matrix(gamma, sig);
            let eta = sig.eta_diag();
            for (p, &mp) in BLADES[2].iter().enumerate() {
                let (i, j) = two_bits(mp);
                for (r, &mr) in BLADES[2].iter().enumerate() {
                    let (k, l) = two_bits(mr);
                    let d = |x: usize, y: usize| if x == y { eta[x] as f64 } else { 0.0 };
                    let sym = 0.5 * (d(i, k) * d(l, j) - d(i, l) * d(k, j));
                    let want = eps([i, j, k, l]) as f64 + 2.0 * sig.s() as f64 / 3.0 * sym;
                    assert!((m[(p, r)] - want).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn pairing_determinant_frozen_values() {
        let (_, d1) = t_gamma_matrix(Gamma::new(1.0).unwrap(), Signature::Lorentzian);
        assert!((d1 + 8.0).abs() < 1e-12);
        let (_, d2) = t_gamma_matrix(Gamma::new(2.0).unwrap(), Signature::Lorentzian);
        assert!((d2 + 125.0 / 64.0).abs() < 1e-12);
        let (_, f) = holst_f_matrix(1.0);
        assert!((f - 8.0).abs() < 1e-12);
    }

    #[test]
    fn infinite_gamma_is_identity_and_zero_is_rejected() {
        let b = Bivector6([1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(t_gamma(&b, Gamma::Infinite, Signature::Lorentzian), b);
        assert_eq!(Gamma::new(0.0), Err(Error::ZeroGamma));
    }

    fn biv() -> impl Strategy<Value = Bivector6<f64>> {
        prop::array::uniform6(-2.0f64..2.0).prop_map(Bivector6)
    }

    fn vec4() -> impl Strategy<Value = Vector4<f64>> {
        prop::array::uniform4(-2.0f64..2.0).prop_map(Vector4)
    }

    fn sig() -> impl Strategy<Value = Signature> {
        prop_oneof![Just(Signature::Euclidean), Just(Signature::Lorentzian)]
    }

    fn graded() -> impl Strategy<Value = Graded<f64>> {
        (0usize..5, prop::array::uniform6(-2.0f64..2.0))
            .prop_map(|(k, c)| Graded::from_coeffs(k, &c[..grade_dim(k)]).unwrap())
    }

    proptest! {
        #[test]
        fn star_cyclic(a in biv(), b in biv(), s in sig()) {
            let lhs = hodge_star2(&bracket2(&a, &b, s), s);
            prop_assert!((lhs - bracket2(&hodge_star2(&a, s), &b, s)).norm() < 1e-13);
            prop_assert!((lhs - bracket2(&a, &hodge_star2(&b, s), s)).norm() < 1e-13);
        }

        #[test]
        fn jacobi(a in biv(), b in biv(), c in biv(), s in sig()) {
            let j = bracket2(&a, &bracket2(&b, &c, s), s)
                + bracket2(&b, &bracket2(&c, &a, s), s)
                + bracket2(&c, &bracket2(&a, &b, s), s);
            prop_assert!(j.norm() < 1e-13);
        }

        #[test]
        fn bracket_matches_matrix_oracle(a in biv(), b in biv(), s in sig()) {
            prop_assert!((bracket2(&a, &b, s) - bracket_oracle(&a, &b, s)).norm() < 1e-13);
        }

        #[test]
        fn action_is_a_representation(a in biv(), b in biv(), v in vec4(), s in sig()) {
            let lhs = act_on_vector(&bracket2(&a, &b, s), &v, s);
            let rhs = act_on_vector(&a, &act_on_vector(&b, &v, s), s)
                - act_on_vector(&b, &act_on_vector(&a, &v, s), s);
            prop_assert!((lhs - rhs).norm() < 1e-13);
        }

        #[test]
        fn star_squares_to_s_float(b in biv(), s in sig()) {
            let ss = hodge_star2(&hodge_star2(&b, s), s);
            prop_assert!((ss - b * s.s() as f64).norm() < 1e-14);
        }

        #[test]
        fn twist_is_symmetric_and_cyclic(a in biv(), b in biv(), g in 0.3f64..5.0, s in sig()) {
            let gamma = Gamma::new(g).unwrap();
            let x = trace(&wedge_bb(&t_gamma(&a, gamma, s), &b));
            let y = trace(&wedge_bb(&a, &t_gamma(&b, gamma, s)));
            prop_assert!((x - y).abs() < 1e-13);
            let lhs = t_gamma(&bracket2(&a, &b, s), gamma, s);
            prop_assert!((lhs - bracket2(&t_gamma(&a, gamma, s), &b, s)).norm() < 1e-13);
            prop_assert!((lhs - bracket2(&a, &t_gamma(&b, gamma, s), s)).norm() < 1e-13);
        }

        #[test]
        fn twist_inverse_round_trip(a in biv(), g in 0.3f64..5.0) {
            let gamma = Gamma::new(g).unwrap();
            let s = Signature::Lorentzian;
            let back = t_gamma_inverse(&t_gamma(&a, gamma, s), gamma, s).unwrap();
            prop_assert!((back - a).norm() < 1e-12);
        }

        #[test]
        fn wedge_graded_anticommutative(x in graded(), y in graded()) {
            if x.grade() + y.grade() <= 4 {
                let xy = wedge(&x, &y).unwrap();
                let yx = wedge(&y, &x).unwrap();
                let sign = if (x.grade() * y.grade()) % 2 == 0 { 1.0 } else { -1.0 };
                for (p, q) in xy.coeffs().iter().zip(yx.coeffs()) {
                    prop_assert!((p - sign * q).abs() < 1e-13);
                }
            } else {
                prop_assert_eq!(wedge(&x, &y), Err(Error::GradeOverflow));
            }
        }

        #[test]
        fn wedge_associative(x in graded(), y in graded(), z in graded()) {
            if x.grade() + y.grade() + z.grade() <= 4 {
                let l = wedge(&wedge(&x, &y).unwrap(), &z).unwrap();
                let r = wedge(&x, &wedge(&y, &z).unwrap()).unwrap();
                for (p, q) in l.coeffs().iter().zip(r.coeffs()) {
                    prop_assert!((p - q).abs() < 1e-13);
                }
            }
        }

        #[test]
        fn action_is_a_derivation_of_wedge(a in biv(), x in graded(), y in graded(), s in sig()) {
            if x.grade() + y.grade() <= 4 {
                let eta = s.eta();
                let lhs = act_graded(&a, &wedge(&x, &y).unwrap(), &eta);
                let r1 = wedge(&act_graded(&a, &x, &eta), &y).unwrap();
                let r2 = wedge(&x, &act_graded(&a, &y, &eta)).unwrap();
                for ((l, p), q) in lhs.coeffs().iter().zip(r1.coeffs()).zip(r2.coeffs()) {
                    prop_assert!((l - p - q).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn trace_pairing_is_invariant(a in biv(), b in biv(), c in biv(), s in sig()) {
            // Tr[[c,a]∧b] + Tr[a∧[c,b]] = 0
            let x = trace(&wedge_bb(&bracket2(&c, &a, s), &b)) + trace(&wedge_bb(&a, &bracket2(&c, &b, s)));
            prop_assert!(x.abs() < 1e-12);
        }
    }

    #[test]
    fn trace_gram_matrix_has_full_rank() {
        let m = nalgebra::Matrix6::from_fn(|p, q| {
            trace(&wedge_bb(&Bivector6::<f64>::basis(p), &Bivector6::basis(q)))
        });
        assert!((m.determinant().abs() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn morphism_holds_only_for_gamma_squared_equal_s() {
        let pairs: alloc::vec::Vec<_> = (0..6)
            .flat_map(|p| (0..6).map(move |r| (Bivector6::basis(p), Bivector6::basis(r))))
            .collect();
        for g in [1.0, -1.0] {
            assert!(morphism_residual(Gamma::new(g).unwrap(), Signature::Euclidean, &pairs) < 1e-13);
        }
        for g in [0.5, 1.0, 2.0] {
            assert!(morphism_residual(Gamma::new(g).unwrap(), Signature::Lorentzian, &pairs) >= 0.1);
        }
    }
}
