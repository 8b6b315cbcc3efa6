//! Check suites run by `holst verify`.

use std::time::Instant;

use holst_core::algebra::{self, bracket2, hodge_star2, Bivector6, Gamma, Signature};
use holst_core::constraints::{
    act_fields, bracket_fields, compare_pch_eh, eval_j, eval_l, gradient, make_on_shell, poisson_bracket,
    vector_field_of, BoundaryState, Constraint, EhProbe, GammaSource, OnShellSpec, Pairing, PchEhReport,
    SliceGeometry, Span,
};
use holst_core::eh::{SymSpec, TriadSpec, M3};
use holst_core::grid::{sample_field, Coframe, FieldSpec, FormField, Grid3, TrigSpec};
use holst_core::halfshell::{isotropy_diagnosis, solve_lambda, Locus};
use holst_core::reduction::{self, exact_sequence_check, kernel_intersection_dim_for_metric, Splits};
use holst_core::rng::stream;
use holst_core::wedge::{self, Shape, RANK_GAP};
use holst_core::Error;
use rand::Rng;

use crate::config::{RunConfig, Suite};
use crate::report::{digest, ConstraintReport, Environment, Row};

/// Check ids whose bound can be overridden through `tolerances`.
pub const TOLERANCE_KEYS: [&str; 12] = [
    "algebra.twist_det",
    "algebra.holst_f_det",
    "algebra.morphism",
    "algebra.star_cyclic",
    "reduction.exact_wedge",
    "reduction.exact_image",
    "reduction.structural",
    "reduction.kernel_shift",
    "brackets.ll",
    "brackets.lj_global",
    "eh.exact_term",
    "halfshell.isotropy",
];

/// Accepted window for a convergence ratio on a grid doubling.
pub const ORDER2: (f64, f64) = (3.2, 4.8);

struct Ctx<'a> {
    cfg: &'a RunConfig,
    suite: Suite,
    rows: Vec<Row>,
}

impl Ctx<'_> {
    fn rng(&self, index: u64) -> rand_chacha::ChaCha8Rng {
        stream(self.cfg.seed, self.suite.name(), index)
    }

    fn push(&mut self, mut row: Row, started: Instant) {
        let cfg = serde_json::to_vec(self.cfg).unwrap_or_default();
        let idx = (self.rows.len() as u64).to_le_bytes();
        row.inputs_digest = digest(&[&cfg, self.suite.name().as_bytes(), &idx]);
        row.runtime_ms = started.elapsed().as_secs_f64() * 1e3;
        self.rows.push(row);
    }

    fn tol(&self, key: &str, default: f64) -> f64 {
        self.cfg.tolerance(key, default)
    }
}

fn random_bivector<R: Rng>(rng: &mut R) -> Bivector6<f64> {
    Bivector6(core::array::from_fn(|_| rng.gen_range(-2.0..2.0)))
}

fn random_field<R: Rng>(rng: &mut R, g: Grid3, p: usize, k: usize) -> holst_core::Result<FormField> {
    sample_field(&FieldSpec::random(rng, p, k, 0.5, 1), g)
}

fn random_state<R: Rng>(rng: &mut R, cfg: &RunConfig, n: usize) -> holst_core::Result<BoundaryState> {
    let g = Grid3::new(n)?;
    let e = Coframe::from_spec(&FieldSpec::coframe_near_identity(rng, 0.1, 1), g)?;
    let w = sample_field(&FieldSpec::random(rng, 1, 2, 0.2, 1), g)?;
    BoundaryState::new(e, &w, cfg.gamma(), cfg.lambda, cfg.sig())
}

fn on_shell_spec<R: Rng>(rng: &mut R, cfg: &RunConfig) -> OnShellSpec {
    OnShellSpec {
        triad: TriadSpec::random_near_identity(rng, 0.1, 1),
        k: SymSpec::random(rng, 0.2, 1),
        gamma: cfg.gamma(),
        lambda: cfg.lambda,
        sig: cfg.sig(),
        span: Span::Spacelike,
        source: GammaSource::Sampled,
    }
}

pub fn eh_probe<R: Rng>(rng: &mut R) -> EhProbe {
    EhProbe {
        lambda0: TrigSpec::random(rng, 0.5, 0.3, 1, 2),
        xi: core::array::from_fn(|_| TrigSpec::random(rng, 0.2, 0.3, 1, 2)),
        delta_e: TriadSpec::random_near_identity(rng, 0.3, 1),
    }
}

fn ratio_row(id: String, anchor: &str, coarse: f64, fine: f64) -> Row {
    Row::new(id, anchor, coarse / fine, Some(ORDER2.0), Some(ORDER2.1))
}

/// Integrated deviations can lose their leading error term to cancellation, so only the floor applies.
fn floor_ratio_row(id: String, anchor: &str, coarse: f64, fine: f64) -> Row {
    Row::at_least(id, anchor, coarse / fine, ORDER2.0)
}

fn algebra_suite(c: &mut Ctx) -> holst_core::Result<()> {
    let (gamma, sig) = (c.cfg.gamma(), c.cfg.sig());
    let t = Instant::now();
    let (_, d) = algebra::t_gamma_matrix(gamma, sig);
    // ⋆² = −1 in Lorentzian signature and +1 in Euclidean
    let g2 = gamma.inverse().powi(2);
    let expect = match sig {
        Signature::Lorentzian => -(1.0 + g2).powi(3),
        Signature::Euclidean => -(1.0 - g2).powi(3),
    };
    let tol = c.tol("algebra.twist_det", 1e-12);
    let err = (d - expect).abs() / expect.abs().max(1.0);
    c.push(Row::at_most("algebra.twist_det", "determinant of the twisted pairing", err, tol), t);

    let t = Instant::now();
    let worst = [0.5, 1.0].iter().fold(0.0f64, |m, &a| {
        let (_, d) = algebra::holst_f_matrix(a);
        m.max((d - (1.0 + a * a).powi(3)).abs() / (1.0 + a * a).powi(3))
    });
    let tol = c.tol("algebra.holst_f_det", 1e-12);
    c.push(Row::at_most("algebra.holst_f_det", "determinant of F_alpha", worst, tol), t);

    let t = Instant::now();
    let mut rng = c.rng(0);
    let pairs: Vec<_> = (0..100).map(|_| (random_bivector(&mut rng), random_bivector(&mut rng))).collect();
    let exact = [1.0, -1.0]
        .iter()
        .map(|&g| algebra::morphism_residual(Gamma::Finite(g), Signature::Euclidean, &pairs))
        .fold(0.0, f64::max);
    let tol = c.tol("algebra.morphism", 1e-13);
    c.push(Row::at_most("algebra.morphism", "twist is a morphism for Euclidean gamma = ±1", exact, tol), t);
    let t = Instant::now();
    c.push(Row::info("algebra.morphism_config", "morphism residual at the configured gamma", algebra::morphism_residual(gamma, sig, &pairs)), t);

    let t = Instant::now();
    let mut worst: f64 = 0.0;
    for (a, b) in &pairs {
        let lhs = hodge_star2(&bracket2(a, b, sig), sig);
        worst = worst.max((lhs - bracket2(&hodge_star2(a, sig), b, sig)).norm());
        worst = worst.max((lhs - bracket2(a, &hodge_star2(b, sig), sig)).norm());
    }
    let tol = c.tol("algebra.star_cyclic", 1e-13);
    c.push(Row::at_most("algebra.star_cyclic", "star commutes with the bracket", worst, tol), t);
    Ok(())
}

fn kernels_suite(c: &mut Ctx) -> holst_core::Result<()> {
    let sig = c.cfg.sig();
    let t = Instant::now();
    let mut rng = c.rng(0);
    let mut mismatches = 0usize;
    let mut gap = f64::INFINITY;
    for _ in 0..100 {
        let e = wedge::random_site_coframe(&mut rng, 0.4);
        for (shape, kernel, rank) in [(Shape::S11, 0, 12), (Shape::S12, 6, 12), (Shape::S21, 6, 6)] {
            let sp = wedge::split(&e, sig, shape)?;
            mismatches += usize::from(sp.kernel_dim() != kernel || sp.rank() != rank);
            gap = gap.min(sp.gap);
        }
    }
    c.push(Row::equals("kernels.table", "kernel dimensions 0/6/6 of the wedge maps", mismatches as f64, 0.0), t);
    let t = Instant::now();
    c.push(Row::at_least("kernels.rank_gap", "singular-value gap of the rank decisions", gap, RANK_GAP), t);
    for (g, expect) in [([1, 1, 1], Some(0)), ([1, 1, -1], Some(0)), ([1, 1, 0], Some(2)), ([1, -1, 0], Some(2)), ([1, 0, 0], None)] {
        let t = Instant::now();
        let d = kernel_intersection_dim_for_metric(g) as f64;
        let id = format!("kernels.intersection[{},{},{}]", g[0], g[1], g[2]);
        let row = match expect {
            Some(x) => Row::equals(id, "dim of the kernel intersection", d, x as f64),
            // the expected count for this metric is disputed; report the exact value
            None => Row::info(id, "dim of the kernel intersection, disputed case", d),
        };
        c.push(row, t);
    }
    Ok(())
}

fn reduction_suite(c: &mut Ctx) -> holst_core::Result<()> {
    let sig = c.cfg.sig();
    let t = Instant::now();
    let mut rng = c.rng(0);
    let (mut wres, mut ires): (f64, f64) = (0.0, 0.0);
    for _ in 0..50 {
        let r = exact_sequence_check(&wedge::random_site_coframe(&mut rng, 0.4), sig)?;
        wres = wres.max(r.wedge_residual);
        ires = ires.max(r.image_in_kernel).max(r.kernel_in_image);
    }
    let tol = c.tol("reduction.exact_wedge", 1e-12);
    c.push(Row::at_most("reduction.exact_wedge", "e ∧ [v, e] = 0 for kernel v", wres, tol), t);
    let t = Instant::now();
    let tol = c.tol("reduction.exact_image", 1e-10);
    c.push(Row::at_most("reduction.exact_image", "image of [·, e] on the kernel equals ker W21", ires, tol), t);
    for (i, &n) in c.cfg.grid_n.clone().iter().enumerate() {
        let t = Instant::now();
        let mut rng = c.rng(1 + i as u64);
        let g = Grid3::new(n)?;
        let e = Coframe::from_spec(&FieldSpec::coframe_near_identity(&mut rng, 0.15, 1), g)?;
        let w = random_field(&mut rng, g, 1, 2)?;
        let sp = Splits::new(&e, sig)?;
        let r = reduction::omega_tilde_with(&sp, &e, &w)?;
        let v = reduction::random_kernel_field(&mut rng, &sp, &e, 1.0);
        let moved = reduction::omega_tilde_with(&sp, &e, &w.axpy(1.0, &v)?)?;
        let tol = c.tol("reduction.structural", 1e-9);
        c.push(Row::at_most(format!("reduction.structural[{n}]"), "p d e = 0 at the representative", r.structural_residual, tol), t);
        let t = Instant::now();
        let tol = c.tol("reduction.kernel_shift", 1e-9);
        let shift = moved.omega_tilde.max_diff(&r.omega_tilde)?;
        c.push(Row::at_most(format!("reduction.kernel_shift[{n}]"), "representative is invariant under kernel shifts", shift, tol), t);
    }
    Ok(())
}

fn constraints_suite(c: &mut Ctx) -> holst_core::Result<()> {
    let mut rng = c.rng(0);
    let spec = on_shell_spec(&mut rng, c.cfg);
    let mut prev: Option<(usize, f64)> = None;
    for &n in &c.cfg.grid_n.clone() {
        let t = Instant::now();
        let os = make_on_shell(&spec, Grid3::new(n)?)?;
        let alpha = random_field(&mut c.rng(1), os.state.grid(), 0, 2)?;
        let l = eval_l(&os.state, &alpha)?.abs();
        c.push(Row::info(format!("constraints.l_on_shell[{n}]"), "L_alpha on a sampled on-shell state", l), t);
        if let Some((m, lp)) = prev {
            let t = Instant::now();
            c.push(ratio_row(format!("constraints.l_ratio[{m}->{n}]"), "L_alpha vanishes at second order", lp, l), t);
        }
        prev = Some((n, l));
    }
    let t = Instant::now();
    let flat = OnShellSpec { triad: TriadSpec::identity(), k: SymSpec::zero(), lambda: 0.0, ..spec };
    let n = c.cfg.grid_n[0];
    let os = make_on_shell(&flat, Grid3::new(n)?)?;
    let alpha = random_field(&mut c.rng(1), os.state.grid(), 0, 2)?;
    let l = eval_l(&os.state, &alpha)?.abs();
    c.push(Row::equals(format!("constraints.flat[{n}]"), "L_alpha vanishes on the flat state", l, 0.0), t);
    Ok(())
}

fn brackets_suite(c: &mut Ctx) -> holst_core::Result<()> {
    let sig = c.cfg.sig();
    let n = *c.cfg.grid_n.iter().min().unwrap_or(&4);
    let t = Instant::now();
    let mut rng = c.rng(0);
    let st = random_state(&mut rng, c.cfg, n)?;
    let g = st.grid();
    let mut global = FormField::zeros(g, 0, 2);
    for s in 0..g.sites() {
        global.site_mut(s).copy_from_slice(&[0.3, -0.2, 0.5, 0.1, 0.4, -0.6]);
    }
    let local = random_field(&mut rng, g, 0, 2)?;
    let b = poisson_bracket(&st, &Constraint::L(global.clone()), &Constraint::L(local.clone()), Pairing::Slice)?;
    let expect = eval_l(&st, &bracket_fields(&local, &global, sig)?)?;
    let tol = c.tol("brackets.ll", 1e-4);
    let rel = |x: f64| (x - expect).abs() / expect.abs();
    c.push(Row::at_most(format!("brackets.ll_gradient[{n}]"), "{L_a, L_a'} = L_[a',a], global a", rel(b.gradient_route), tol), t);
    let t = Instant::now();
    c.push(Row::at_most(format!("brackets.ll_fd[{n}]"), "{L_a, L_a'} = L_[a',a], global a, difference route", rel(b.fd_route.value), tol), t);

    let t = Instant::now();
    let geo = SliceGeometry::new(&st)?;
    let mu = random_field(&mut rng, g, 0, 1)?;
    let xl = vector_field_of(&geo, &gradient(&st, &geo, &Constraint::L(global.clone()))?, Pairing::Slice)?;
    let jl = -gradient(&st, &geo, &Constraint::J(mu.clone()))?.apply(&xl);
    let expect = eval_j(&st, &act_fields(&global, &mu, sig)?)?;
    let tol = c.tol("brackets.lj_global", 1e-9);
    c.push(Row::at_most(format!("brackets.lj_global[{n}]"), "{J_mu, L_a} = J_[a,mu], global a", (jl - expect).abs() / expect.abs(), tol), t);
    Ok(())
}

fn eh_suite(c: &mut Ctx) -> holst_core::Result<()> {
    let mut rng = c.rng(0);
    let spec = on_shell_spec(&mut rng, c.cfg);
    let probe = eh_probe(&mut c.rng(1));
    let mut prev: Option<(usize, PchEhReport)> = None;
    let metrics: [(&str, &str, fn(&PchEhReport) -> f64); 6] = [
        ("hamiltonian", "J reduces to the Hamiltonian constraint", |r| r.hamiltonian_deviation()),
        ("momentum", "J reduces to the momentum constraint", |r| r.momentum_deviation()),
        ("ricci_routes", "frame and metric Ricci scalars agree", |r| r.ricci_routes),
        ("momentum_routes", "frame and Levi-Civita momenta agree", |r| r.momentum_routes),
        ("gamma_normal", "J along the normal is independent of gamma", |r| r.gamma_dependence.abs()),
        ("gamma_tangent", "J along the boundary is independent of gamma", |r| r.gamma_dependence_xi.abs()),
    ];
    for &n in &c.cfg.grid_n.clone() {
        let t = Instant::now();
        let os = make_on_shell(&spec, Grid3::new(n)?)?;
        let r = compare_pch_eh(&os.state, &probe)?;
        for (name, anchor, f) in metrics {
            c.push(Row::info(format!("eh.{name}[{n}]"), anchor, f(&r)), t);
        }
        let tol = c.tol("eh.exact_term", 1e-12);
        c.push(Row::at_most(format!("eh.exact_term[{n}]"), "gamma term is a total derivative", r.exact_term.abs(), tol), t);
        if let Some((m, p)) = &prev {
            for (name, anchor, f) in metrics {
                let t = Instant::now();
                c.push(floor_ratio_row(format!("eh.{name}_ratio[{m}->{n}]"), anchor, f(p), f(&r)), t);
            }
        }
        prev = Some((n, r));
    }
    Ok(())
}

fn halfshell_suite(c: &mut Ctx) -> holst_core::Result<()> {
    let (gamma, sig) = (c.cfg.gamma(), c.cfg.sig());
    let t = Instant::now();
    let spec = OnShellSpec {
        triad: TriadSpec::identity(),
        k: SymSpec::constant(M3::identity() * 0.6),
        gamma,
        lambda: 0.0,
        sig,
        span: Span::Spacelike,
        source: GammaSource::Lattice,
    };
    let os = make_on_shell(&spec, Grid3::coarse(2)?)?;
    let (e, w) = (&os.state.e, &os.state.omega_tilde);
    let (lambda, residual) = solve_lambda(e, w, gamma, sig)?;
    c.push(Row::info("halfshell.lambda", "cosmological constant solving the locus equation", lambda), t);
    let t = Instant::now();
    c.push(Row::at_most("halfshell.locus_residual", "reference point lies on the locus", residual, 1e-10), t);
    let t = Instant::now();
    let tz = isotropy_diagnosis(e, w, gamma, sig, lambda, Locus::TZero)?;
    let excess = tz.orthogonal_dim as f64 - tz.tangent_dim as f64;
    c.push(Row::equals("halfshell.t_zero_excess", "t = 0 alone is Lagrangian", excess, 0.0), t);
    let t = Instant::now();
    let full = isotropy_diagnosis(e, w, gamma, sig, lambda, Locus::Full)?;
    let tol = c.tol("halfshell.isotropy", 1e-10);
    c.push(Row::at_most("halfshell.isotropy", "the locus is isotropic", full.max_pairing, tol), t);
    let t = Instant::now();
    let excess = full.orthogonal_dim as f64 - full.tangent_dim as f64;
    c.push(Row::at_least("halfshell.full_excess", "the locus is not Lagrangian", excess, 1.0), t);
    Ok(())
}

/// Runs the configured suites in order; stops at the first hard error.
pub fn run_suites(cfg: &RunConfig, threads: usize) -> (ConstraintReport, Option<Error>) {
    let mut report = ConstraintReport { environment: Environment::current(threads), rows: Vec::new(), error: None };
    for &suite in &cfg.suites {
        let mut ctx = Ctx { cfg, suite, rows: Vec::new() };
        let res = match suite {
            Suite::Algebra => algebra_suite(&mut ctx),
            Suite::Kernels => kernels_suite(&mut ctx),
            Suite::Reduction => reduction_suite(&mut ctx),
            Suite::Constraints => constraints_suite(&mut ctx),
            Suite::Brackets => brackets_suite(&mut ctx),
            Suite::Eh => eh_suite(&mut ctx),
            Suite::Halfshell => halfshell_suite(&mut ctx),
        };
        report.rows.append(&mut ctx.rows);
        if let Err(e) = res {
            report.error = Some(format!("{}: {e}", suite.name()));
            return (report, Some(e));
        }
    }
    (report, None)
}
