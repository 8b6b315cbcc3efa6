//! Three-dimensional boundary data: triads, their spin connection, extrinsic
//! curvature, momenta and the Einstein–Hilbert constraint densities.
//!
//! A triad is stored per site as a 3×3 matrix `ē[(a, i)] = ē_a^i`, with the
//! coordinate index as row. Internal indices are raised and lowered with the
//! constant diagonal `η̄`. A connection is stored per site as three
//! antisymmetric matrices `Γ_a^{ij}`, one per coordinate axis.

use alloc::vec::Vec;
use core::ops::{Mul, Sub};

use nalgebra::{Matrix3, Matrix4};
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;

use crate::algebra::Signature;
use crate::error::{Error, Result};
use crate::grid::{Grid3, TrigSpec};
use crate::wedge::adapted_frame;

pub type M3 = Matrix3<f64>;

/// Spin connection at one site, indexed by coordinate axis.
pub type Gamma3 = [M3; 3];

/// Coordinate 2-planes in storage order (12, 13, 23).
pub const PLANES: [(usize, usize); 3] = [(0, 1), (0, 2), (1, 2)];

pub fn levi3(i: usize, j: usize, k: usize) -> f64 {
    if i == j || j == k || i == k {
        0.0
    } else if (i, j, k) == (0, 1, 2) || (i, j, k) == (1, 2, 0) || (i, j, k) == (2, 0, 1) {
        1.0
    } else {
        -1.0
    }
}

/// Central difference of a per-site quantity along `axis`.
pub fn central_diff<T>(grid: Grid3, f: &[T], axis: usize) -> Vec<T>
where
    T: Copy + Sub<Output = T> + Mul<f64, Output = T>,
{
    let c = 0.5 / grid.h();
    (0..grid.sites())
        .map(|s| (f[grid.neighbour(s, axis, true)] - f[grid.neighbour(s, axis, false)]) * c)
        .collect()
}

fn diag(eta: [f64; 3]) -> M3 {
    M3::from_diagonal(&nalgebra::Vector3::from(eta))
}

/// η-orthonormal internal frame adapted to the span of a boundary coframe.
#[derive(Clone, Debug, PartialEq)]
pub struct AdaptedFrame {
    /// `ē_a^i`, lower triangular with positive diagonal.
    pub e_bar: M3,
    /// Rows `w_1, w_2, w_3, w_0` in `u` components.
    pub w: [[f64; 4]; 4],
    pub eta_bar: [f64; 3],
    pub eta00: f64,
}

impl AdaptedFrame {
    /// Norms of `w_1, w_2, w_3, w_0`.
    pub fn eta_hat(&self) -> [f64; 4] {
        [self.eta_bar[0], self.eta_bar[1], self.eta_bar[2], self.eta00]
    }

    pub fn w_matrix(&self) -> Matrix4<f64> {
        Matrix4::from_fn(|a, i| self.w[a][i])
    }

    /// `e_a = ē_a^i w_i` in `u` components.
    pub fn reconstruct(&self) -> [[f64; 4]; 3] {
        let mut e = [[0.0; 4]; 3];
        for a in 0..3 {
            for i in 0..3 {
                for m in 0..4 {
                    e[a][m] += self.e_bar[(a, i)] * self.w[i][m];
                }
            }
        }
        e
    }

    /// `max |W η Wᵀ − diag(η̂)|`.
    pub fn orthogonality_residual(&self, sig: Signature) -> f64 {
        let eta = sig.eta_diag();
        let hat = self.eta_hat();
        let mut r: f64 = 0.0;
        for a in 0..4 {
            for b in 0..4 {
                let v: f64 = (0..4).map(|m| self.w[a][m] * eta[m] as f64 * self.w[b][m]).sum();
                let want = if a == b { hat[a] } else { 0.0 };
                r = r.max((v - want).abs());
            }
        }
        r
    }
}

fn eta_dot(sig: Signature, x: &[f64; 4], y: &[f64; 4]) -> f64 {
    let eta = sig.eta_diag();
    (0..4).map(|m| x[m] * eta[m] as f64 * y[m]).sum()
}

/// Gram–Schmidt under `η` on `e_1, e_2, e_3`, completed by the unit normal.
///
/// `w_0` is oriented so that `det[w_1, w_2, w_3, w_0] > 0`.
pub fn orthonormal_frame(e: &[[f64; 4]; 3], sig: Signature) -> Result<AdaptedFrame> {
    let mut w = [[0.0; 4]; 4];
    let mut eps = [0.0; 3];
    let mut e_bar = M3::zeros();
    for a in 0..3 {
        let mut v = e[a];
        for b in 0..a {
            let c = eps[b] * eta_dot(sig, &w[b], &e[a]);
            e_bar[(a, b)] = c;
            for m in 0..4 {
                v[m] -= c * w[b][m];
            }
        }
        let nrm = eta_dot(sig, &v, &v);
        let scale: f64 = e[a].iter().map(|x| x * x).sum();
        if scale == 0.0 || nrm.abs() < 1e-10 * scale {
            return Err(Error::DegenerateMetric { site: 0 });
        }
        let len = nrm.abs().sqrt();
        eps[a] = nrm.signum();
        e_bar[(a, a)] = len;
        for m in 0..4 {
            w[a][m] = v[m] / len;
        }
    }
    let n = adapted_frame(e, sig)?[3];
    w[3] = n;
    let eta00 = eta_dot(sig, &n, &n).signum();
    Ok(AdaptedFrame { e_bar, w, eta_bar: eps, eta00 })
}

/// Adapted frames at every site of a coframe.
pub fn adapted_frames(e: &crate::grid::Coframe, sig: Signature) -> Result<Vec<AdaptedFrame>> {
    (0..e.grid().sites())
        .map(|s| orthonormal_frame(&e.at(s), sig).map_err(|_| Error::DegenerateMetric { site: s }))
        .collect()
}

/// Closed-form triad: one trigonometric polynomial per entry `ē_a^i`.
#[derive(Clone, Debug, PartialEq)]
pub struct TriadSpec {
    pub comps: [[TrigSpec; 3]; 3],
}

impl TriadSpec {
    pub fn constant(m: M3) -> Self {
        TriadSpec { comps: core::array::from_fn(|a| core::array::from_fn(|i| TrigSpec::constant(m[(a, i)]))) }
    }

    pub fn identity() -> Self {
        Self::constant(M3::identity())
    }

    /// `φ(x)·id` for a scalar profile `φ`.
    pub fn conformal(phi: TrigSpec) -> Self {
        TriadSpec {
            comps: core::array::from_fn(|a| {
                core::array::from_fn(|i| if a == i { phi.clone() } else { TrigSpec::default() })
            }),
        }
    }

    /// Identity plus random low modes of size `amp`.
    pub fn random_near_identity<R: Rng>(rng: &mut R, amp: f64, kmax: i32) -> Self {
        TriadSpec {
            comps: core::array::from_fn(|a| {
                core::array::from_fn(|i| TrigSpec::random(rng, if a == i { 1.0 } else { 0.0 }, amp, kmax, 2))
            }),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.comps.iter().flatten().try_for_each(TrigSpec::validate)
    }

    pub fn eval(&self, x: [f64; 3]) -> M3 {
        M3::from_fn(|a, i| self.comps[a][i].eval(x))
    }

    pub fn deriv(&self, axis: usize, x: [f64; 3]) -> M3 {
        M3::from_fn(|a, i| self.comps[a][i].deriv(axis, x))
    }
}

/// Closed-form symmetric tensor; only entries with `a ≤ b` are read.
#[derive(Clone, Debug, PartialEq)]
pub struct SymSpec {
    pub comps: [[TrigSpec; 3]; 3],
}

impl SymSpec {
    pub fn constant(m: M3) -> Self {
        SymSpec {
            comps: core::array::from_fn(|a| {
                core::array::from_fn(|b| TrigSpec::constant(m[(a.min(b), a.max(b))]))
            }),
        }
    }

    pub fn zero() -> Self {
        Self::constant(M3::zeros())
    }

    pub fn random<R: Rng>(rng: &mut R, amp: f64, kmax: i32) -> Self {
        SymSpec {
            comps: core::array::from_fn(|_| core::array::from_fn(|_| TrigSpec::random(rng, 0.0, amp, kmax, 2))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.comps.iter().flatten().try_for_each(TrigSpec::validate)
    }

    pub fn eval(&self, x: [f64; 3]) -> M3 {
        M3::from_fn(|a, b| self.comps[a.min(b)][a.max(b)].eval(x))
    }
}

/// A triad field with a constant internal metric `η̄`.
#[derive(Clone, Debug, PartialEq)]
pub struct Triad {
    grid: Grid3,
    eta_bar: [f64; 3],
    e: Vec<M3>,
}

/// `|det ē|` relative to `‖ē‖³` below which a triad is rejected.
pub const TRIAD_DET_TOL: f64 = 1e-10;

impl Triad {
    pub fn new(grid: Grid3, eta_bar: [f64; 3], e: Vec<M3>) -> Result<Self> {
        if e.len() != grid.sites() {
            return Err(Error::Shape("triad site count".into()));
        }
        if eta_bar.iter().any(|x| x.abs() != 1.0) {
            return Err(Error::Shape("internal metric entries must be ±1".into()));
        }
        for (s, m) in e.iter().enumerate() {
            let n = m.norm();
            if !(m.determinant().abs() > TRIAD_DET_TOL * n * n * n) {
                return Err(Error::NonInvertibleTriad { site: s });
            }
        }
        Ok(Triad { grid, eta_bar, e })
    }

    pub fn from_spec(spec: &TriadSpec, grid: Grid3, eta_bar: [f64; 3]) -> Result<Self> {
        spec.validate()?;
        Self::new(grid, eta_bar, (0..grid.sites()).map(|s| spec.eval(grid.position(s))).collect())
    }

    /// Triads of adapted frames; all frames must share `η̄`.
    pub fn from_frames(grid: Grid3, frames: &[AdaptedFrame]) -> Result<Self> {
        let eta_bar = frames.first().ok_or_else(|| Error::Shape("no frames".into()))?.eta_bar;
        if let Some(s) = frames.iter().position(|f| f.eta_bar != eta_bar) {
            return Err(Error::Shape(alloc::format!("internal signature changes at site {s}")));
        }
        Self::new(grid, eta_bar, frames.iter().map(|f| f.e_bar).collect())
    }

    pub fn grid(&self) -> Grid3 {
        self.grid
    }

    pub fn eta_bar(&self) -> [f64; 3] {
        self.eta_bar
    }

    pub fn sites(&self) -> &[M3] {
        &self.e
    }

    /// `E = ē⁻¹` with `E[(i, a)] = E_i^a`.
    pub fn inverse(&self) -> Vec<M3> {
        self.e.iter().map(|m| m.try_inverse().expect("checked invertible")).collect()
    }

    /// `g_ab = ē_a^i η̄_ij ē_b^j`.
    pub fn metric(&self) -> Vec<M3> {
        let d = diag(self.eta_bar);
        self.e.iter().map(|m| m * d * m.transpose()).collect()
    }

    pub fn sqrt_g(&self) -> Vec<f64> {
        self.e.iter().map(|m| m.determinant().abs()).collect()
    }

    /// `∂_c ē` for `c = 0, 1, 2`.
    pub fn derivatives(&self) -> [Vec<M3>; 3] {
        core::array::from_fn(|c| central_diff(self.grid, &self.e, c))
    }
}

/// The triad spin connection at a point from `ē` and its first derivatives.
///
/// Only the antisymmetric part `∂_[c ē_d]` enters; the symmetric part of the
/// derivative is not part of the torsion equation.
pub fn gamma_point(e: &M3, de: &[M3; 3], eta: [f64; 3]) -> Gamma3 {
    let inv = e.try_inverse().expect("invertible triad");
    let mut dl = [[[0.0; 3]; 3]; 3];
    for c in 0..3 {
        for d in 0..3 {
            for l in 0..3 {
                dl[c][d][l] = 0.5 * (de[c][(d, l)] - de[d][(c, l)]) * eta[l];
            }
        }
    }
    // t[q][k][l] = E_q^c E_k^d D_{cd,l}
    let mut t = [[[0.0; 3]; 3]; 3];
    for q in 0..3 {
        for k in 0..3 {
            for l in 0..3 {
                let mut v = 0.0;
                for c in 0..3 {
                    for d in 0..3 {
                        v += inv[(q, c)] * inv[(k, d)] * dl[c][d][l];
                    }
                }
                t[q][k][l] = v;
            }
        }
    }
    core::array::from_fn(|a| {
        M3::from_fn(|i, j| {
            let mut v = 0.0;
            for q in 0..3 {
                v += e[(a, q)] * (t[q][i][j] + t[j][q][i] - t[i][j][q]);
            }
            v * eta[i] * eta[j]
        })
    })
}

/// Spin connection of a triad field with central-difference derivatives.
pub fn gamma_of_triad(tri: &Triad) -> Vec<Gamma3> {
    let de = tri.derivatives();
    (0..tri.grid.sites())
        .map(|s| gamma_point(&tri.e[s], &[de[0][s], de[1][s], de[2][s]], tri.eta_bar))
        .collect()
}

/// The same connection evaluated from the closed form of the triad.
pub fn gamma_of_spec(spec: &TriadSpec, grid: Grid3, eta: [f64; 3]) -> Vec<Gamma3> {
    (0..grid.sites())
        .map(|s| {
            let x = grid.position(s);
            gamma_point(&spec.eval(x), &core::array::from_fn(|c| spec.deriv(c, x)), eta)
        })
        .collect()
}

/// Christoffel symbols `Γ^c_{ab}` from `g` and `∂g`, stored as `[c][(a, b)]`.
pub fn christoffel_point(g: &M3, dg: &[M3; 3]) -> [M3; 3] {
    let gi = g.try_inverse().expect("nondegenerate metric");
    core::array::from_fn(|c| {
        M3::from_fn(|a, b| {
            (0..3).map(|d| 0.5 * gi[(c, d)] * (dg[a][(b, d)] + dg[b][(a, d)] - dg[d][(a, b)])).sum()
        })
    })
}

/// Spin connection through the Christoffel symbols of `g = ē η̄ ēᵀ`.
///
/// Independent of [`gamma_point`]: `Γ_a{}^i{}_k = −(∂_a ē_b^i − Γ^c_{ab} ē_c^i) E_k^b`.
pub fn gamma_via_christoffel_point(e: &M3, de: &[M3; 3], eta: [f64; 3]) -> Gamma3 {
    let d = diag(eta);
    let g = e * d * e.transpose();
    let dg: [M3; 3] = core::array::from_fn(|c| de[c] * d * e.transpose() + e * d * de[c].transpose());
    let chr = christoffel_point(&g, &dg);
    let inv = e.try_inverse().expect("invertible triad");
    core::array::from_fn(|a| {
        M3::from_fn(|i, j| {
            let mut v = 0.0;
            for b in 0..3 {
                let mut nab = de[a][(b, i)];
                for c in 0..3 {
                    nab -= chr[c][(a, b)] * e[(c, i)];
                }
                v -= nab * inv[(j, b)];
            }
            v * eta[j]
        })
    })
}

/// `max |(d_Γ ē)^i_{ab}|` with central differences.
pub fn torsion_residual(tri: &Triad, gamma: &[Gamma3]) -> f64 {
    let de = tri.derivatives();
    let eta = tri.eta_bar;
    let mut r: f64 = 0.0;
    for s in 0..tri.grid.sites() {
        let e = &tri.e[s];
        for &(a, b) in &PLANES {
            for i in 0..3 {
                let mut v = de[a][s][(b, i)] - de[b][s][(a, i)];
                for j in 0..3 {
                    v += gamma[s][a][(i, j)] * eta[j] * e[(b, j)] - gamma[s][b][(i, j)] * eta[j] * e[(a, j)];
                }
                r = r.max(v.abs());
            }
        }
    }
    r
}

/// `max |Γ − Γ'|` over sites, axes and entries.
pub fn gamma_distance(x: &[Gamma3], y: &[Gamma3]) -> f64 {
    x.iter()
        .zip(y)
        .flat_map(|(a, b)| (0..3).map(move |c| (a[c] - b[c]).amax()))
        .fold(0.0, f64::max)
}

/// `F_{bc} = ∂_b Γ_c − ∂_c Γ_b + Γ_b η̄ Γ_c − Γ_c η̄ Γ_b` per plane of [`PLANES`].
pub fn curvature3(grid: Grid3, gamma: &[Gamma3], eta: [f64; 3]) -> Vec<[M3; 3]> {
    let d = diag(eta);
    let comp: [Vec<M3>; 3] = core::array::from_fn(|a| gamma.iter().map(|g| g[a]).collect());
    let mut f = alloc::vec![[M3::zeros(); 3]; grid.sites()];
    for (p, &(b, c)) in PLANES.iter().enumerate() {
        let dbc = central_diff(grid, &comp[c], b);
        let dcb = central_diff(grid, &comp[b], c);
        for s in 0..grid.sites() {
            let gb = &gamma[s][b];
            let gc = &gamma[s][c];
            f[s][p] = dbc[s] - dcb[s] + gb * d * gc - gc * d * gb;
        }
    }
    f
}

/// `R = (1 / 2 det ē) ε^{abc} ε_{kij} ē_a^k F_{bc}^{ij}`.
pub fn ricci_via_f(tri: &Triad, gamma: &[Gamma3]) -> Vec<f64> {
    let f = curvature3(tri.grid, gamma, tri.eta_bar);
    (0..tri.grid.sites())
        .map(|s| {
            let e = &tri.e[s];
            let mut v = 0.0;
            for a in 0..3 {
                for (p, &(b, c)) in PLANES.iter().enumerate() {
                    let eps = levi3(a, b, c);
                    if eps == 0.0 {
                        continue;
                    }
                    for k in 0..3 {
                        for i in 0..3 {
                            for j in 0..3 {
                                v += eps * levi3(k, i, j) * e[(a, k)] * f[s][p][(i, j)];
                            }
                        }
                    }
                }
            }
            v / e.determinant()
        })
        .collect()
}

/// Christoffel symbols of a metric field with central differences of `g`.
pub fn christoffel_field(grid: Grid3, g: &[M3]) -> Vec<[M3; 3]> {
    let dg: [Vec<M3>; 3] = core::array::from_fn(|c| central_diff(grid, g, c));
    (0..grid.sites()).map(|s| christoffel_point(&g[s], &[dg[0][s], dg[1][s], dg[2][s]])).collect()
}

/// Scalar curvature from the metric alone.
pub fn ricci_via_metric(grid: Grid3, g: &[M3]) -> Vec<f64> {
    let chr = christoffel_field(grid, g);
    // dchr[m][c][s] = ∂_m Γ^c
    let dchr: [[Vec<M3>; 3]; 3] = core::array::from_fn(|m| {
        core::array::from_fn(|c| {
            let comp: Vec<M3> = chr.iter().map(|x| x[c]).collect();
            central_diff(grid, &comp, m)
        })
    });
    (0..grid.sites())
        .map(|s| {
            let ch = &chr[s];
            let gi = g[s].try_inverse().expect("nondegenerate metric");
            let mut r = 0.0;
            for sg in 0..3 {
                for nu in 0..3 {
                    // R_{σν} = ∂_ρ Γ^ρ_{νσ} − ∂_ν Γ^ρ_{ρσ} + Γ^ρ_{ρλ} Γ^λ_{νσ} − Γ^ρ_{νλ} Γ^λ_{ρσ}
                    let mut ric = 0.0;
                    for rho in 0..3 {
                        ric += dchr[rho][rho][s][(nu, sg)] - dchr[nu][rho][s][(rho, sg)];
                        for l in 0..3 {
                            ric += ch[rho][(rho, l)] * ch[l][(nu, sg)] - ch[rho][(nu, l)] * ch[l][(rho, sg)];
                        }
                    }
                    r += gi[(sg, nu)] * ric;
                }
            }
            r
        })
        .collect()
}

/// Full `ē η̄ Aᵀ`, whose symmetric part is `K`.
fn e_eta_at(e: &M3, a: &M3, eta: [f64; 3]) -> M3 {
    e * diag(eta) * a.transpose()
}

/// `K_ab = ē_(a^i A_b)^j η_ij` with `A[(b, j)] = A_b^j`.
pub fn k_from_a(e: &M3, a: &M3, eta: [f64; 3]) -> M3 {
    let m = e_eta_at(e, a, eta);
    (m + m.transpose()) * 0.5
}

/// `max |ē_[a^i A_b]^j η_ij|`; zero exactly when the A-constraint holds.
pub fn k_antisymmetry(e: &M3, a: &M3, eta: [f64; 3]) -> f64 {
    let m = e_eta_at(e, a, eta);
    ((m - m.transpose()) * 0.5).amax()
}

/// `A_b^j = η̄^{jk} E_k^a K_ab`, the unique solution with symmetric `ē η A`.
pub fn a_from_k(e: &M3, k: &M3, eta: [f64; 3]) -> M3 {
    let inv = e.try_inverse().expect("invertible triad");
    (diag(eta) * inv * k).transpose()
}

/// `Π = (√g / 2)(K − g Tr_g K)`.
pub fn pi_from_k(g: &M3, k: &M3) -> M3 {
    let gi = g.try_inverse().expect("nondegenerate metric");
    let sq = g.determinant().abs().sqrt();
    let tr = (gi * k).trace();
    (k - g * tr) * (0.5 * sq)
}

/// Inverse of [`pi_from_k`]: `K = (2/√g)(Π − ½ g Tr_g Π)`.
pub fn k_from_pi(g: &M3, pi: &M3) -> M3 {
    let gi = g.try_inverse().expect("nondegenerate metric");
    let sq = g.determinant().abs().sqrt();
    let tr = (gi * pi).trace();
    (pi - g * (0.5 * tr)) * (2.0 / sq)
}

/// `(Tr_g[K²], Tr_g[K]²)`.
pub fn traces(g: &M3, k: &M3) -> (f64, f64) {
    let gi = g.try_inverse().expect("nondegenerate metric");
    let m = gi * k;
    ((m * m).trace(), m.trace().powi(2))
}

/// `√g (R + η₀₀ (Tr_g[K²] − Tr_g[K]²))`, the normal-normal Gauss equation.
pub fn hamiltonian_density(g: &M3, r: f64, k: &M3, eta00: f64) -> f64 {
    let sq = g.determinant().abs().sqrt();
    let (k2, tr2) = traces(g, k);
    sq * (r + eta00 * (k2 - tr2))
}

/// `√g R − η₀₀ (1/√g)(Tr_g[Π²] − ½ Tr_g[Π]²)` read literally with `d = 3`.
pub fn hamiltonian_density_momentum_form(g: &M3, r: f64, pi: &M3, eta00: f64) -> f64 {
    let sq = g.determinant().abs().sqrt();
    let (p2, tr2) = traces(g, pi);
    sq * r - eta00 / sq * (p2 - 0.5 * tr2)
}

/// `ε_{ijl} ε^{abc} ē_c^l ē_a^i`, indexed `[(j, b)]`; equals `2 det ē · E`.
pub fn cofactor_contraction(e: &M3) -> M3 {
    M3::from_fn(|j, b| {
        let mut v = 0.0;
        for a in 0..3 {
            for c in 0..3 {
                let eps = levi3(a, b, c);
                if eps == 0.0 {
                    continue;
                }
                for i in 0..3 {
                    for l in 0..3 {
                        v += levi3(i, j, l) * eps * e[(c, l)] * e[(a, i)];
                    }
                }
            }
        }
        v
    })
}

/// `ε_{ijl} ε^{abc} ē_a^i ē_b^j ē_c^l`; equals `6 det ē`.
pub fn triple_contraction(e: &M3) -> f64 {
    let mut v = 0.0;
    for a in 0..3 {
        for b in 0..3 {
            for c in 0..3 {
                let eps = levi3(a, b, c);
                if eps == 0.0 {
                    continue;
                }
                for i in 0..3 {
                    for j in 0..3 {
                        for l in 0..3 {
                            v += levi3(i, j, l) * eps * e[(a, i)] * e[(b, j)] * e[(c, l)];
                        }
                    }
                }
            }
        }
    }
    v
}

/// Momentum density in the frame form, `½ ē_f^k (D_b V^b)_k` with
/// `V_k^b = ε_{kmj} ε^{abc} ē_a^m A_c^j` and `D` acting through `Γ` on `k`.
pub fn momentum_frame(tri: &Triad, gamma: &[Gamma3], a: &[M3]) -> Vec<[f64; 3]> {
    let grid = tri.grid;
    let eta = tri.eta_bar;
    // v[s][(k, b)]
    let v: Vec<M3> = (0..grid.sites())
        .map(|s| {
            let e = &tri.e[s];
            M3::from_fn(|k, b| {
                let mut x = 0.0;
                for aa in 0..3 {
                    for c in 0..3 {
                        let eps = levi3(aa, b, c);
                        if eps == 0.0 {
                            continue;
                        }
                        for m in 0..3 {
                            for j in 0..3 {
                                x += levi3(k, m, j) * eps * e[(aa, m)] * a[s][(c, j)];
                            }
                        }
                    }
                }
                x
            })
        })
        .collect();
    let dv: [Vec<M3>; 3] = core::array::from_fn(|b| central_diff(grid, &v, b));
    (0..grid.sites())
        .map(|s| {
            let mut div = [0.0; 3];
            for (k, dk) in div.iter_mut().enumerate() {
                for b in 0..3 {
                    *dk += dv[b][s][(k, b)];
                    for m in 0..3 {
                        *dk -= v[s][(m, b)] * gamma[s][b][(m, k)] * eta[k];
                    }
                }
            }
            core::array::from_fn(|f| 0.5 * (0..3).map(|k| tri.e[s][(f, k)] * div[k]).sum::<f64>())
        })
        .collect()
}

/// Momentum density as the Levi–Civita divergence `∇_b (g^{bc} Π_{cf})`.
pub fn momentum_levi_civita(grid: Grid3, g: &[M3], pi: &[M3]) -> Vec<[f64; 3]> {
    let chr = christoffel_field(grid, g);
    let up: Vec<M3> = g.iter().zip(pi).map(|(g, p)| g.try_inverse().expect("nondegenerate metric") * p).collect();
    let du: [Vec<M3>; 3] = core::array::from_fn(|b| central_diff(grid, &up, b));
    (0..grid.sites())
        .map(|s| {
            core::array::from_fn(|f| {
                let mut x = 0.0;
                for b in 0..3 {
                    x += du[b][s][(b, f)];
                    for c in 0..3 {
                        x -= chr[s][c][(b, f)] * up[s][(b, c)];
                    }
                }
                x
            })
        })
        .collect()
}

/// Per-site Einstein–Hilbert boundary data.
#[derive(Clone, Debug, PartialEq)]
pub struct EhData {
    pub grid: Grid3,
    pub eta_bar: [f64; 3],
    pub eta00: f64,
    pub g: Vec<M3>,
    pub k: Vec<M3>,
    pub pi: Vec<M3>,
    pub sqrt_g: Vec<f64>,
    pub ricci_f: Vec<f64>,
    pub ricci_metric: Vec<f64>,
    /// Built from `ricci_f`.
    pub h_density: Vec<f64>,
    pub h_density_momentum_form: Vec<f64>,
    pub m_frame: Vec<[f64; 3]>,
    pub m_levi_civita: Vec<[f64; 3]>,
}

/// Largest tolerated `‖K_⟨ab⟩‖` relative to `1 + ‖ē η A‖`.
pub const K_SYMMETRY_TOL: f64 = 1e-8;

/// Runs the whole pipeline from a triad and its `A` part.
pub fn eh_data(tri: &Triad, a: &[M3], eta00: f64) -> Result<EhData> {
    if a.len() != tri.grid.sites() {
        return Err(Error::Shape("A field site count".into()));
    }
    let eta = tri.eta_bar;
    let mut worst: f64 = 0.0;
    for s in 0..a.len() {
        let m = e_eta_at(&tri.e[s], &a[s], eta);
        worst = worst.max(k_antisymmetry(&tri.e[s], &a[s], eta) / (1.0 + m.amax()));
    }
    if worst > K_SYMMETRY_TOL {
        return Err(Error::AsymmetricK(worst));
    }
    let gamma = gamma_of_triad(tri);
    let g = tri.metric();
    let k: Vec<M3> = (0..a.len()).map(|s| k_from_a(&tri.e[s], &a[s], eta)).collect();
    let pi: Vec<M3> = g.iter().zip(&k).map(|(g, k)| pi_from_k(g, k)).collect();
    let ricci_f = ricci_via_f(tri, &gamma);
    let ricci_metric = ricci_via_metric(tri.grid, &g);
    let h_density = (0..a.len()).map(|s| hamiltonian_density(&g[s], ricci_f[s], &k[s], eta00)).collect();
    let h_density_momentum_form =
        (0..a.len()).map(|s| hamiltonian_density_momentum_form(&g[s], ricci_f[s], &pi[s], eta00)).collect();
    let m_frame = momentum_frame(tri, &gamma, a);
    let m_levi_civita = momentum_levi_civita(tri.grid, &g, &pi);
    Ok(EhData {
        grid: tri.grid,
        eta_bar: eta,
        eta00,
        sqrt_g: tri.sqrt_g(),
        g,
        k,
        pi,
        ricci_f,
        ricci_metric,
        h_density,
        h_density_momentum_form,
        m_frame,
        m_levi_civita,
    })
}

/// Connection in the adapted frames, split into the `w_i ∧ w_j` block and `A`.
#[derive(Clone, Debug)]
pub struct SplitConnection {
    pub frames: Vec<AdaptedFrame>,
    pub triad: Triad,
    /// `Γ_a^{ij}` read off the spatial block.
    pub gamma_block: Vec<Gamma3>,
    /// `A[(a, i)]`, the `w_0 ∧ w_i` components.
    pub a_part: Vec<M3>,
    /// Spin connection of the adapted triad.
    pub gamma_triad: Vec<Gamma3>,
    /// `max |gamma_block − gamma_triad|`.
    pub residual: f64,
    /// `max ‖K_⟨ab⟩‖` of the `A` part.
    pub k_antisymmetry: f64,
}

/// Rewrites `ω` in the site-dependent adapted frames, including the
/// inhomogeneous term `dW·W⁻¹` of the frame change.
pub fn split_connection(
    e: &crate::grid::Coframe,
    omega: &crate::grid::FormField,
    sig: Signature,
) -> Result<SplitConnection> {
    let grid = e.grid();
    if omega.grid() != grid {
        return Err(Error::GridMismatch);
    }
    if omega.degree() != 1 || omega.grade() != 2 {
        return Err(Error::Shape("connection must be a bivector-valued 1-form".into()));
    }
    let frames = adapted_frames(e, sig)?;
    let triad = Triad::from_frames(grid, &frames)?;
    let wm: Vec<Matrix4<f64>> = frames.iter().map(|f| f.w_matrix()).collect();
    let dw: [Vec<Matrix4<f64>>; 3] = core::array::from_fn(|a| central_diff(grid, &wm, a));
    let eta4 = Matrix4::from_diagonal(&nalgebra::Vector4::from(sig.eta_diag().map(|x| x as f64)));
    let mut gamma_block = Vec::with_capacity(grid.sites());
    let mut a_part = Vec::with_capacity(grid.sites());
    let mut kas: f64 = 0.0;
    for s in 0..grid.sites() {
        let winv = wm[s].try_inverse().ok_or(Error::DegenerateMetric { site: s })?;
        let hat = Matrix4::from_diagonal(&nalgebra::Vector4::from(frames[s].eta_hat()));
        let mut gb = [M3::zeros(); 3];
        let mut am = M3::zeros();
        for a in 0..3 {
            let mut bv = crate::algebra::Bivector6::<f64>::zero();
            bv.0.copy_from_slice(&omega.site(s)[6 * a..6 * a + 6]);
            let up = crate::algebra::bivector_to_matrix(&bv);
            let mixed = Matrix4::from_fn(|i, j| up[i][j]) * eta4;
            let t = dw[a][s] + wm[s] * mixed.transpose();
            let wf = (t * winv).transpose() * hat;
            // antisymmetrise away the O(h²) mismatch of the differenced frame
            let wf = (wf - wf.transpose()) * 0.5;
            gb[a] = M3::from_fn(|i, j| wf[(i, j)]);
            for i in 0..3 {
                am[(a, i)] = wf[(3, i)];
            }
        }
        kas = kas.max(k_antisymmetry(&frames[s].e_bar, &am, frames[s].eta_bar));
        gamma_block.push(gb);
        a_part.push(am);
    }
    let gamma_triad = gamma_of_triad(&triad);
    let residual = gamma_distance(&gamma_block, &gamma_triad);
    Ok(SplitConnection { frames, triad, gamma_block, a_part, gamma_triad, residual, k_antisymmetry: kas })
}
