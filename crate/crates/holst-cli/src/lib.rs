//! Batch runner for `holst-core`: configuration, check suites, reports and field files.

pub mod config;
pub mod fields;
pub mod report;
pub mod suites;

use std::path::Path;

use holst_core::algebra::Gamma;
use holst_core::constraints::{compare_pch_eh, BoundaryState};
use holst_core::reduction;
use holst_core::rng::stream;
use holst_core::Error;

use crate::config::RunConfig;
use crate::fields::FieldFile;
use crate::report::{ConstraintReport, Environment, Row};

/// Process exit codes.
pub mod exit {
    pub const PASS: u8 = 0;
    pub const CHECK_FAILED: u8 = 1;
    pub const CONFIG: u8 = 2;
    pub const CONDITIONING: u8 = 3;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("i/o: {0}")]
    Io(String),
    #[error(transparent)]
    Numeric(#[from] Error),
}

/// Errors that come from a rank or solve decision rather than from the inputs.
pub fn is_conditioning(e: &Error) -> bool {
    matches!(
        e,
        Error::DegenerateCoframe { .. }
            | Error::DegenerateMetric { .. }
            | Error::IllConditionedRank { .. }
            | Error::PhiSingular { .. }
            | Error::Conditioning { .. }
            | Error::AdjointSolve { .. }
            | Error::NonInvertibleTriad { .. }
            | Error::Richardson(..)
            | Error::TwistNotInvertible
    )
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Io(_) => exit::CONFIG,
            CliError::Numeric(e) if is_conditioning(e) => exit::CONDITIONING,
            CliError::Numeric(_) => exit::CHECK_FAILED,
        }
    }
}

/// Exit code for a finished (possibly aborted) run.
pub fn verdict(report: &ConstraintReport, err: Option<&Error>) -> u8 {
    match err {
        Some(e) if is_conditioning(e) => exit::CONDITIONING,
        Some(_) => exit::CHECK_FAILED,
        None if report.all_pass() => exit::PASS,
        None => exit::CHECK_FAILED,
    }
}

/// The state `(e, ω̃)` of a field file under the configured parameters.
pub fn state_from_file(cfg: &RunConfig, f: &FieldFile) -> Result<BoundaryState, CliError> {
    let (e, w) = f.to_fields()?;
    Ok(BoundaryState::new(e, &w, cfg.gamma(), cfg.lambda, cfg.sig())?)
}

/// `ω̃` of a field file, returned as a field file with the connection replaced.
pub fn omega_tilde_file(cfg: &RunConfig, f: &FieldFile) -> Result<(FieldFile, f64), CliError> {
    let (e, w) = f.to_fields()?;
    let r = reduction::omega_tilde(&e, &w, cfg.sig())?;
    Ok((FieldFile::from_fields(&e, &r.omega_tilde), r.structural_residual))
}

/// Compares the constraints of a field file with the Einstein–Hilbert ones.
pub fn reduce_file(cfg: &RunConfig, f: &FieldFile, threads: usize) -> Result<ConstraintReport, CliError> {
    let st = state_from_file(cfg, f)?;
    let probe = suites::eh_probe(&mut stream(cfg.seed, "reduce", 0));
    let r = compare_pch_eh(&st, &probe)?;
    let gamma = match cfg.gamma() {
        Gamma::Finite(g) => g,
        Gamma::Infinite => f64::INFINITY,
    };
    let rows = vec![
        Row::info("reduce.gamma", "plumbing", gamma),
        Row::info("reduce.j_normal", "J along the unit normal", r.j_lambda0),
        Row::info("reduce.h_prediction", "Hamiltonian constraint prediction", r.h_prediction),
        Row::info("reduce.j_tangent", "J along the boundary", r.j_xi),
        Row::info("reduce.m_prediction", "momentum constraint prediction", r.m_prediction),
        Row::info("reduce.hamiltonian_deviation", "J reduces to the Hamiltonian constraint", r.hamiltonian_deviation()),
        Row::info("reduce.momentum_deviation", "J reduces to the momentum constraint", r.momentum_deviation()),
        Row::info("reduce.gamma_normal", "J along the normal is independent of gamma", r.gamma_dependence),
        Row::info("reduce.gamma_tangent", "J along the boundary is independent of gamma", r.gamma_dependence_xi),
        Row::info("reduce.split_residual", "connection splits into spin connection and K", r.split_residual),
        Row::at_most("reduce.exact_term", "gamma term is a total derivative", r.exact_term.abs(), 1e-12),
    ];
    Ok(ConstraintReport { environment: Environment::current(threads), rows, error: None })
}

pub fn read_config(path: &Path) -> Result<RunConfig, CliError> {
    config::load_config(path)
}
