//! Pointwise maps `X ↦ X∧e`, their kernels, the chosen complements and projectors.
//!
//! Domain coordinates are `[form component][value component]` as in
//! [`crate::grid`]. Complements are orthogonal in the coordinates of the
//! adapted frame `{e_1, e_2, e_3, e_n}`.

use alloc::vec::Vec;

use nalgebra::{DMatrix, Matrix4};
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;

use crate::algebra::{self, blade_sign, grade_dim, Scalar, Signature, BLADES};
use crate::error::{Error, Result};
use crate::exact::Mat;
use crate::grid::{form_dim, form_index, FORM_MASKS};

/// Singular values below `RANK_REL_TOL · σ_max` count as zero.
pub const RANK_REL_TOL: f64 = 1e-10;
/// Required ratio between the smallest kept and largest discarded singular value.
pub const RANK_GAP: f64 = 1e6;

/// Supported `(p, k)` for `W^{(p,k)}_e : Ω^p(Λ^k) → Ω^{p+1}(Λ^{k+1})`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Shape {
    S11,
    S12,
    S21,
}

impl Shape {
    pub fn new(p: usize, k: usize) -> Result<Self> {
        match (p, k) {
            (1, 1) => Ok(Shape::S11),
            (1, 2) => Ok(Shape::S12),
            (2, 1) => Ok(Shape::S21),
            _ => Err(Error::UnsupportedShape(p, k)),
        }
    }

    pub fn pk(self) -> (usize, usize) {
        match self {
            Shape::S11 => (1, 1),
            Shape::S12 => (1, 2),
            Shape::S21 => (2, 1),
        }
    }

    pub fn dom(self) -> usize {
        let (p, k) = self.pk();
        form_dim(p) * grade_dim(k)
    }

    pub fn cod(self) -> usize {
        let (p, k) = self.pk();
        form_dim(p + 1) * grade_dim(k + 1)
    }
}

/// Matrix (codomain × domain) of `X ↦ X∧e` on `Ω^p(Λ^k)`, for any `p ≤ 2`, `k ≤ 3`.
pub fn wedge_matrix_pk<T: Scalar>(e: &[[T; 4]; 3], p: usize, k: usize) -> Mat<T> {
    let (vd, vo) = (grade_dim(k), grade_dim(k + 1));
    let mut m = Mat::zeros(form_dim(p + 1) * vo, form_dim(p) * vd);
    let mut unit = [T::zero(); 6];
    for (i, &fm) in FORM_MASKS[p].iter().enumerate() {
        for j in 0..vd {
            let col = i * vd + j;
            unit[j] = T::one();
            for (b, eb) in e.iter().enumerate() {
                let s = blade_sign(fm, 1 << b);
                if s == 0 {
                    continue;
                }
                let o = form_index(fm | (1 << b));
                let mut tmp = [T::zero(); 6];
                if k == 0 {
                    tmp[..4].copy_from_slice(eb);
                } else {
                    algebra::wedge_acc(k, &unit[..vd], 1, eb, &mut tmp[..vo]);
                }
                for v in 0..vo {
                    m[(o * vo + v, col)] = m[(o * vo + v, col)] + T::from_i64(s) * tmp[v];
                }
            }
            unit[j] = T::zero();
        }
    }
    m
}

pub fn wedge_matrix<T: Scalar>(e: &[[T; 4]; 3], shape: Shape) -> Mat<T> {
    let (p, k) = shape.pk();
    wedge_matrix_pk(e, p, k)
}

/// `Λ^k E`: column `J` is the wedge of the frame vectors in `J`, in `u` coordinates.
pub fn grade_transform<T: Scalar>(frame: &[[T; 4]; 4], k: usize) -> Mat<T> {
    let d = grade_dim(k);
    let mut m = Mat::zeros(d, d);
    for (col, &mask) in BLADES[k].iter().enumerate() {
        let mut acc = [T::zero(); 6];
        acc[0] = T::one();
        let mut g = 0;
        for (mu, f) in frame.iter().enumerate() {
            if mask & (1 << mu) == 0 {
                continue;
            }
            let mut next = [T::zero(); 6];
            algebra::wedge_acc(g, &acc[..grade_dim(g)], 1, f, &mut next[..grade_dim(g + 1)]);
            acc = next;
            g += 1;
        }
        for r in 0..d {
            m[(r, col)] = acc[r];
        }
    }
    m
}

/// `I_{form} ⊗ Λ^k E`: frame coordinates to `u` coordinates on `Ω^p(Λ^k)`.
pub fn domain_transform<T: Scalar>(frame: &[[T; 4]; 4], p: usize, k: usize) -> Mat<T> {
    let g = grade_transform(frame, k);
    let (nf, d) = (form_dim(p), grade_dim(k));
    let mut m = Mat::zeros(nf * d, nf * d);
    for f in 0..nf {
        for r in 0..d {
            for c in 0..d {
                m[(f * d + r, f * d + c)] = g[(r, c)];
            }
        }
    }
    m
}

/// Adapted frame `[e_1, e_2, e_3, e_n]` with `e_n` the unit η-normal, oriented positively.
pub fn adapted_frame(e: &[[f64; 4]; 3], sig: Signature) -> Result<[[f64; 4]; 4]> {
    let eta = sig.eta_diag();
    let mut t = algebra::Trivector4::zero();
    let e12 = algebra::wedge_vv(&algebra::Vector4(e[0]), &algebra::Vector4(e[1]));
    algebra::wedge_acc(2, &e12.0, 1, &e[2], &mut t.0);
    let mut n = [0.0; 4];
    for j in 0..4 {
        let c = algebra::trace(&algebra::wedge_vt(&algebra::Vector4::basis(j), &t));
        n[j] = eta[j] as f64 * c;
    }
    let nn: f64 = (0..4).map(|j| eta[j] as f64 * n[j] * n[j]).sum();
    let nsq: f64 = n.iter().map(|x| x * x).sum();
    if nsq == 0.0 || nn.abs() < 1e-10 * nsq {
        return Err(Error::DegenerateMetric { site: 0 });
    }
    let scale = 1.0 / nn.abs().sqrt();
    n.iter_mut().for_each(|x| *x *= scale);
    let det = Matrix4::from_fn(|i, mu| if mu < 3 { e[mu][i] } else { n[i] }).determinant();
    if det < 0.0 {
        n.iter_mut().for_each(|x| *x = -*x);
    }
    Ok([e[0], e[1], e[2], n])
}

/// Kernel, complement and projectors of one wedge map at one site.
#[derive(Clone, Debug)]
pub struct ComplementSplit {
    pub shape: Shape,
    /// `W_e` in `u` coordinates (codomain × domain).
    pub matrix: DMatrix<f64>,
    /// Frame coordinates to `u` coordinates on the domain.
    pub frame: DMatrix<f64>,
    pub frame_inv: DMatrix<f64>,
    /// Orthonormal kernel basis in frame coordinates.
    pub kernel_e: DMatrix<f64>,
    /// Orthonormal complement basis in frame coordinates.
    pub complement_e: DMatrix<f64>,
    /// Kernel basis in `u` coordinates.
    pub kernel_u: DMatrix<f64>,
    /// Left inverse of `kernel_u` vanishing on the complement.
    pub kernel_coords: DMatrix<f64>,
    pub complement_u: DMatrix<f64>,
    pub complement_coords: DMatrix<f64>,
    /// Projector onto the kernel along the complement.
    pub p: DMatrix<f64>,
    /// `id − p`.
    pub p_prime: DMatrix<f64>,
    /// Orthonormal basis of the image, codomain `u` coordinates.
    pub image: DMatrix<f64>,
    /// Orthogonal projector onto the image.
    pub p_dagger: DMatrix<f64>,
    pub singular_values: Vec<f64>,
    pub gap: f64,
}

impl ComplementSplit {
    pub fn kernel_dim(&self) -> usize {
        self.kernel_e.ncols()
    }

    pub fn rank(&self) -> usize {
        self.image.ncols()
    }
}

/// Builds the wedge matrix at a site.
pub fn build_wedge_matrix(e: &[[f64; 4]; 3], shape: Shape) -> DMatrix<f64> {
    wedge_matrix(e, shape).to_dmatrix()
}

/// Splits `W_e^{shape}` using the adapted frame of `e`.
pub fn split(e: &[[f64; 4]; 3], sig: Signature, shape: Shape) -> Result<ComplementSplit> {
    let frame = adapted_frame(e, sig)?;
    let (p, k) = shape.pk();
    let d = domain_transform(&frame, p, k).to_dmatrix();
    split_with(build_wedge_matrix(e, shape), d, shape)
}

/// Rank decision by SVD of `M·D` with the crate threshold and gap policy.
pub fn split_with(matrix: DMatrix<f64>, frame: DMatrix<f64>, shape: Shape) -> Result<ComplementSplit> {
    let (cod, dom) = (matrix.nrows(), matrix.ncols());
    let frame_inv = frame.clone().try_inverse().ok_or(Error::DegenerateMetric { site: 0 })?;
    let a = &matrix * &frame;
    // zero rows make the thin SVD return a full right basis
    let mut sq = DMatrix::zeros(cod.max(dom), dom);
    sq.view_mut((0, 0), (cod, dom)).copy_from(&a);
    let svd = sq.svd(true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut order: Vec<usize> = (0..dom).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].partial_cmp(&svd.singular_values[i]).unwrap());
    let sv: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let smax = sv[0];
    let r = sv.iter().take(cod.min(dom)).filter(|&&x| x > RANK_REL_TOL * smax).count();
    let gap = if r == 0 {
        0.0
    } else if r < dom {
        sv[r - 1] / sv[r].max(f64::MIN_POSITIVE)
    } else {
        sv[r - 1] / (RANK_REL_TOL * smax)
    };
    if smax == 0.0 || gap < RANK_GAP {
        return Err(Error::IllConditionedRank { gap });
    }
    let kept = &order[..r];
    let dropped = &order[r..];
    let pick_v = |idx: &[usize]| {
        let mut m = DMatrix::zeros(dom, idx.len());
        for (c, &i) in idx.iter().enumerate() {
            for row in 0..dom {
                m[(row, c)] = vt[(i, row)];
            }
        }
        m
    };
    let complement_e = pick_v(kept);
    let kernel_e = pick_v(dropped);
    let mut image = DMatrix::zeros(cod, r);
    for (c, &i) in kept.iter().enumerate() {
        for row in 0..cod {
            image[(row, c)] = u[(row, i)];
        }
    }
    let kernel_u = &frame * &kernel_e;
    let kernel_coords = kernel_e.transpose() * &frame_inv;
    let complement_u = &frame * &complement_e;
    let complement_coords = complement_e.transpose() * &frame_inv;
    let p = &kernel_u * &kernel_coords;
    let p_prime = DMatrix::identity(dom, dom) - &p;
    let p_dagger = &image * image.transpose();
    Ok(ComplementSplit {
        shape,
        matrix,
        frame,
        frame_inv,
        kernel_e,
        complement_e,
        kernel_u,
        kernel_coords,
        complement_u,
        complement_coords,
        p,
        p_prime,
        image,
        p_dagger,
        singular_values: sv[..cod.min(dom)].to_vec(),
        gap,
    })
}

/// Trace pairing `Ω^p(Λ^k) × Ω^{3−p}(Λ^{4−k}) → R` as a Gram matrix.
pub fn trace_pairing_pk<T: Scalar>(p: usize, k: usize) -> Mat<T> {
    let (q, l) = (3 - p, 4 - k);
    let (va, vb) = (grade_dim(k), grade_dim(l));
    let mut g = Mat::zeros(form_dim(p) * va, form_dim(q) * vb);
    for (i, &fa) in FORM_MASKS[p].iter().enumerate() {
        for (j, &fb) in FORM_MASKS[q].iter().enumerate() {
            let s = blade_sign(fa, fb);
            if s == 0 {
                continue;
            }
            for (x, &ba) in BLADES[k].iter().enumerate() {
                for (y, &bb) in BLADES[l].iter().enumerate() {
                    let t = blade_sign(ba, bb);
                    if t != 0 {
                        g[(i * va + x, j * vb + y)] = T::from_i64(s * t);
                    }
                }
            }
        }
    }
    g
}

#[derive(Clone, Debug, PartialEq)]
pub struct AnnihilatorReport {
    /// Dimension of the annihilator of the kernel.
    pub annihilator_dim: usize,
    /// Rank of the dual wedge map `W^{(2−p, 3−k)}`.
    pub dual_rank: usize,
    /// Largest distance of a unit annihilator vector from the dual image.
    pub residual: f64,
}

/// Checks that the annihilator of `ker W_e` is the image of the dual wedge map.
pub fn annihilator_check(split: &ComplementSplit, e: &[[f64; 4]; 3]) -> AnnihilatorReport {
    let (p, k) = split.shape.pk();
    let g = trace_pairing_pk::<f64>(p, k).to_dmatrix();
    let a = split.kernel_u.transpose() * &g;
    let ann = null_space_f64(&a);
    let dual = wedge_matrix_pk(e, 2 - p, 3 - k).to_dmatrix();
    let q = range_f64(&dual);
    let mut residual = 0.0f64;
    for c in 0..ann.ncols() {
        let y = ann.column(c).into_owned();
        let proj = &q * (q.transpose() * &y);
        residual = residual.max((y - proj).norm());
    }
    AnnihilatorReport { annihilator_dim: ann.ncols(), dual_rank: q.ncols(), residual }
}

/// Exact counterpart of [`annihilator_check`]; the residual is 0 or 1.
pub fn annihilator_check_exact<T: Scalar>(e: &[[T; 4]; 3], shape: Shape) -> (usize, usize, bool) {
    let (p, k) = shape.pk();
    let ker = wedge_matrix(e, shape).null_space();
    let g = trace_pairing_pk::<T>(p, k);
    let ann = ker.transpose().mul(&g).null_space();
    let dual = wedge_matrix_pk(e, 2 - p, 3 - k);
    let rd = dual.rank();
    let contained = dual.hstack(&ann).rank() == rd;
    (ann.cols, rd, contained)
}

/// Orthonormal null-space basis by SVD with the crate threshold.
pub fn null_space_f64(a: &DMatrix<f64>) -> DMatrix<f64> {
    let (rows, cols) = a.shape();
    let mut sq = DMatrix::zeros(rows.max(cols), cols);
    sq.view_mut((0, 0), (rows, cols)).copy_from(a);
    let svd = sq.svd(false, true);
    let vt = svd.v_t.unwrap();
    let smax = svd.singular_values.max();
    let idx: Vec<usize> = (0..cols).filter(|&i| svd.singular_values[i] <= RANK_REL_TOL * smax.max(1e-300)).collect();
    let mut out = DMatrix::zeros(cols, idx.len());
    for (c, &i) in idx.iter().enumerate() {
        for r in 0..cols {
            out[(r, c)] = vt[(i, r)];
        }
    }
    out
}

/// Orthonormal basis of the column space.
pub fn range_f64(a: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = a.clone().svd(true, false);
    let u = svd.u.unwrap();
    let rows = a.nrows();
    let smax = svd.singular_values.max();
    let idx: Vec<usize> = (0..svd.singular_values.len()).filter(|&i| svd.singular_values[i] > RANK_REL_TOL * smax).collect();
    let mut out = DMatrix::zeros(rows, idx.len());
    for (c, &i) in idx.iter().enumerate() {
        for r in 0..rows {
            out[(r, c)] = u[(r, i)];
        }
    }
    out
}

/// Numerical rank with the crate threshold.
pub fn rank_f64(a: &DMatrix<f64>) -> usize {
    range_f64(a).ncols()
}

/// Random coframe at a site: `e_a = u_a + amp·noise`, well inside the space-like cone for small `amp`.
pub fn random_site_coframe<R: Rng>(rng: &mut R, amp: f64) -> [[f64; 4]; 3] {
    let mut e = [[0.0; 4]; 3];
    for (a, row) in e.iter_mut().enumerate() {
        for (i, x) in row.iter_mut().enumerate() {
            *x = if a == i { 1.0 } else { 0.0 } + amp * rng.gen_range(-1.0..1.0);
        }
    }
    e
}

/// The standard coframe `e_a = u_a` over any scalar type.
pub fn standard_coframe<T: Scalar>() -> [[T; 4]; 3] {
    let mut e = [[T::zero(); 4]; 3];
    for (a, row) in e.iter_mut().enumerate() {
        row[a] = T::one();
    }
    e
}
