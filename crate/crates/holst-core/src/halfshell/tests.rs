use super::*;
use crate::constraints::{make_on_shell, GammaSource, OnShellSpec, Span};
use crate::eh;
use crate::grid::{sample_field, FieldSpec};
use crate::rng::stream;

const SIGS: [Signature; 2] = [Signature::Euclidean, Signature::Lorentzian];

fn de_sitter_point(n: usize, sig: Signature, gamma: Gamma) -> (Coframe, FormField, f64, f64) {
    let spec = OnShellSpec {
        triad: eh::TriadSpec::identity(),
        k: eh::SymSpec::constant(eh::M3::identity() * 0.6),
        gamma,
        lambda: 0.0,
        sig,
        span: Span::Spacelike,
        source: GammaSource::Lattice,
    };
    let os = make_on_shell(&spec, Grid3::coarse(n).unwrap()).unwrap();
    let (lam, res) = solve_lambda(&os.state.e, &os.state.omega_tilde, gamma, sig).unwrap();
    (os.state.e.clone(), os.state.omega_tilde.clone(), lam, res)
}

fn field(seed: u64, g: Grid3, p: usize, k: usize, amp: f64) -> FormField {
    let mut rng = stream(seed, "halfshell", (p * 10 + k) as u64);
    sample_field(&FieldSpec::random(&mut rng, p, k, amp, 1), g).unwrap()
}

fn coframe(seed: u64, g: Grid3) -> Coframe {
    let mut rng = stream(seed, "halfshell-e", 0);
    Coframe::from_spec(&FieldSpec::coframe_near_identity(&mut rng, 0.15, 1), g).unwrap()
}

fn random_state(seed: u64, n: usize, sig: Signature) -> HalfShellState {
    let g = Grid3::coarse(n).unwrap();
    HalfShellState::new(
        coframe(seed, g),
        field(seed + 1, g, 1, 2, 0.4),
        field(seed + 2, g, 2, 3, 0.4),
        field(seed + 3, g, 1, 2, 0.4),
        Gamma::Finite(0.7),
        sig,
    )
    .unwrap()
}

#[test]
fn state_validates_shapes() {
    let st = random_state(1, 4, Signature::Lorentzian);
    let bad = FormField::zeros(st.e.grid(), 2, 2);
    let r = HalfShellState::new(st.e.clone(), st.omega.clone(), bad, st.omega_ref.clone(), st.gamma, st.sig);
    assert!(matches!(r, Err(Error::Shape(_))));
    let other = FormField::zeros(Grid3::new(6).unwrap(), 1, 2);
    let r = HalfShellState::new(st.e.clone(), other, st.t.clone(), st.omega_ref.clone(), st.gamma, st.sig);
    assert_eq!(r.err(), Some(Error::GridMismatch));
}

#[test]
fn projection_trivial_cases() {
    let st = random_state(2, 4, Signature::Lorentzian);
    let at_ref = HalfShellState { omega: st.omega_ref.clone(), t: FormField::zeros(st.e.grid(), 2, 3), ..st.clone() };
    let (tb, eb) = hs_project(&at_ref).unwrap();
    assert_eq!(tb.sup_norm(), 0.0);
    assert_eq!(eb.field(), st.e.field());
    let no_t = HalfShellState { t: FormField::zeros(st.e.grid(), 2, 3), ..st.clone() };
    let (tb, _) = hs_project(&no_t).unwrap();
    let expect = class_coordinate(&st.e, &st.omega_ref, &st.omega, st.gamma, st.sig).unwrap();
    assert!(tb.max_diff(&expect).unwrap() < 1e-14);
}

#[test]
fn projection_is_kernel_invariant() {
    for sig in SIGS {
        let st = random_state(3, 4, sig);
        let (tb, _) = hs_project(&st).unwrap();
        for k in 0..4 {
            let v = field(10 + k, st.e.grid(), 1, 2, 1.0);
            let moved = kernel_flow(&st, &v, 0.3 + k as f64).unwrap();
            let (tm, em) = hs_project(&moved).unwrap();
            assert!(tm.max_diff(&tb).unwrap() <= 1e-11);
            assert_eq!(em.field(), st.e.field());
        }
    }
}

#[test]
fn twist_round_trip() {
    let g = Grid3::new(4).unwrap();
    let w = field(4, g, 1, 2, 1.0);
    for sig in SIGS {
        for gamma in [Gamma::Finite(0.3), Gamma::Finite(-2.0), Gamma::Infinite] {
            let back = untwist_field(&twist_field(&w, gamma, sig).unwrap(), gamma, sig).unwrap();
            assert!(back.max_diff(&w).unwrap() < 1e-13);
        }
    }
    assert!(twist_field(&FormField::zeros(g, 1, 1), Gamma::Infinite, Signature::Euclidean).is_err());
}

#[test]
fn phi_zero_gives_reference() {
    let st = random_state(5, 2, Signature::Lorentzian);
    let zero = FormField::zeros(st.e.grid(), 2, 3);
    let w = phi_symplecto(&zero, &st.e, &st.omega_ref, st.gamma, st.sig).unwrap();
    assert!(w.max_diff(&st.omega_ref).unwrap() < 1e-14);
    assert!(phi_symplecto(&st.omega, &st.e, &st.omega_ref, st.gamma, st.sig).is_err());
}

#[test]
fn phi_round_trip() {
    for sig in SIGS {
        for gamma in [Gamma::Finite(0.7), Gamma::Infinite] {
            let st = random_state(6, 4, sig);
            let tb = field(7, st.e.grid(), 2, 3, 1.0);
            let w = phi_symplecto(&tb, &st.e, &st.omega_ref, gamma, sig).unwrap();
            let back = class_coordinate(&st.e, &w, &st.omega_ref, gamma, sig).unwrap();
            assert!(back.max_diff(&tb).unwrap() <= 1e-10);
        }
    }
}

#[test]
fn phi_pulls_back_the_two_form() {
    for sig in SIGS {
        let st = random_state(8, 2, sig);
        let g = st.e.grid();
        let tb = field(9, g, 2, 3, 0.5);
        let tangent = |seed| (field(seed, g, 2, 3, 0.5), field(seed + 1, g, 1, 1, 0.5));
        for k in 0..3 {
            let (xt, xe) = tangent(20 + 4 * k);
            let (yt, ye) = tangent(22 + 4 * k);
            let xw = phi_pushforward(&tb, &st.e, &st.omega_ref, st.gamma, sig, &xt, &xe).unwrap();
            let yw = phi_pushforward(&tb, &st.e, &st.omega_ref, st.gamma, sig, &yt, &ye).unwrap();
            let hs = hs_two_form(&xt, &xe, &yt, &ye).unwrap();
            let pch = pch_two_form(&st.e, st.gamma, sig, &xe, &xw, &ye, &yw).unwrap();
            assert!(hs.abs() > 1e-3);
            assert!((hs - pch).abs() <= 1e-9 * hs.abs().max(1.0), "{sig:?}: {hs} vs {pch}");
        }
    }
}

#[test]
fn pushforward_matches_finite_difference_modulo_kernel() {
    let st = random_state(10, 2, Signature::Lorentzian);
    let g = st.e.grid();
    let tb = field(11, g, 2, 3, 0.5);
    let (xt, xe) = (field(12, g, 2, 3, 0.5), field(13, g, 1, 1, 0.5));
    let push = phi_pushforward(&tb, &st.e, &st.omega_ref, st.gamma, st.sig, &xt, &xe).unwrap();
    let at = |s: f64| {
        let e = Coframe::new(st.e.field().axpy(s, &xe).unwrap()).unwrap();
        phi_symplecto(&tb.axpy(s, &xt).unwrap(), &e, &st.omega_ref, st.gamma, st.sig).unwrap()
    };
    let h = 1e-5;
    let fd = at(h).axpy(-1.0, &at(-h)).unwrap().scaled(0.5 / h);
    // the complement of the kernel turns with e, so agreement is up to ker(∧ e)
    let diff = twist_field(&fd.axpy(-1.0, &push).unwrap(), st.gamma, st.sig).unwrap();
    let wedged = wedge_fields(&Exterior, &diff, st.e.field()).unwrap();
    assert!(wedged.sup_norm() < 1e-7 * push.sup_norm());
}

#[test]
fn two_form_gram_is_nondegenerate() {
    let g = Grid3::coarse(2).unwrap();
    let m = hs_gram(g).unwrap();
    assert_eq!(m.nrows(), 192);
    assert!((&m + m.transpose()).amax() == 0.0);
    assert_eq!(gapped_rank(&m).unwrap().0, 192);
}

#[test]
fn de_sitter_reference_solves_locus() {
    for sig in SIGS {
        let (_, _, lam, res) = de_sitter_point(2, sig, Gamma::Finite(0.7));
        assert!(res < 1e-12);
        assert!(lam.abs() > 0.05);
    }
}

#[test]
fn t_zero_locus_is_lagrangian() {
    for sig in SIGS {
        let (e, w, lam, _) = de_sitter_point(2, sig, Gamma::Finite(0.7));
        let r = isotropy_diagnosis(&e, &w, Gamma::Finite(0.7), sig, lam, Locus::TZero).unwrap();
        assert_eq!(r.phase_dim, 192);
        assert_eq!(r.tangent_dim, 96);
        assert!(r.lagrangian());
        assert!(r.isotropic(1e-10));
    }
}

#[test]
fn full_locus_is_isotropic_not_lagrangian() {
    for sig in SIGS {
        for gamma in [Gamma::Finite(0.7), Gamma::Finite(3.0)] {
            let (e, w, lam, _) = de_sitter_point(2, sig, gamma);
            let r = isotropy_diagnosis(&e, &w, gamma, sig, lam, Locus::Full).unwrap();
            assert!(r.isotropic(1e-10));
            assert!(r.orthogonal_dim > r.tangent_dim, "{r:?}");
            assert!(r.locus_residual < 1e-12);
            assert!(r.rank_gap >= RANK_GAP);
        }
    }
}

#[test]
fn projection_has_full_row_rank() {
    let st = random_state(14, 2, Signature::Lorentzian);
    let g = st.e.grid();
    let (nt, nw, ne) = (g.sites() * 12, g.sites() * 18, g.sites() * 12);
    let mut jac = DMatrix::zeros(nt + ne, nt + nw + ne);
    for c in 0..(nt + nw + ne) {
        let mut dt = FormField::zeros(g, 2, 3);
        let mut dw = FormField::zeros(g, 1, 2);
        let mut de = FormField::zeros(g, 1, 1);
        if c < nt {
            dt.data_mut()[c] = 1.0;
        } else if c < nt + nw {
            dw.data_mut()[c - nt] = 1.0;
        } else {
            de.data_mut()[c - nt - nw] = 1.0;
        }
        let at = |s: f64| {
            let moved = HalfShellState {
                e: Coframe::new(st.e.field().axpy(s, &de).unwrap()).unwrap(),
                omega: st.omega.axpy(s, &dw).unwrap(),
                t: st.t.axpy(s, &dt).unwrap(),
                ..st.clone()
            };
            let (tb, eb) = hs_project(&moved).unwrap();
            let mut v = tb.data().to_vec();
            v.extend_from_slice(eb.field().data());
            v
        };
        // the map is polynomial of degree two, so the central difference is exact
        let (p, m) = (at(0.5), at(-0.5));
        for r in 0..(nt + ne) {
            jac[(r, c)] = p[r] - m[r];
        }
    }
    assert_eq!(gapped_rank(&jac).unwrap().0, nt + ne);
}

#[test]
fn loci_are_inequivalent() {
    for sig in SIGS {
        let st = random_state(15, 4, sig);
        let g = st.e.grid();
        // on the reduced PCH locus: ω = ω̲ plus a kernel direction
        let on_pch = loci_residuals(&st.e, &st.omega_ref, &st.omega_ref, st.gamma, sig).unwrap();
        assert_eq!(on_pch.pch, 0.0);
        assert!(on_pch.half_shell >= 0.1);
        // on the pulled-back half-shell locus: T_γ[ω] ∧ e = 0
        let zero = FormField::zeros(g, 1, 2);
        let on_hs = loci_residuals(&st.e, &zero, &st.omega_ref, st.gamma, sig).unwrap();
        assert_eq!(on_hs.half_shell, 0.0);
        assert!(on_hs.pch >= 0.1);
    }
}

#[test]
fn loci_coincide_when_t_vanishes() {
    for sig in SIGS {
        let st = HalfShellState { t: FormField::zeros(Grid3::new(4).unwrap(), 2, 3), ..random_state(16, 4, sig) };
        let (tb, _) = hs_project(&st).unwrap();
        let r = loci_residuals(&st.e, &st.omega, &st.omega_ref, st.gamma, sig).unwrap();
        let zero = FormField::zeros(st.e.grid(), 1, 2);
        let scale = class_coordinate(&st.e, &st.omega_ref, &zero, st.gamma, sig).unwrap().sup_norm();
        assert!((tb.sup_norm() / scale - r.pch).abs() <= 1e-10);
    }
}
