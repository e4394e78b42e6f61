//! Helpers shared by the integration tests.

#![allow(dead_code)]

use std::path::PathBuf;

use recsolve_core::checker::{Solver, SolverConfig};

/// The solver executable: `RECSOLVE_SOLVER` if set, otherwise `z3` on the path.
pub fn solver_path() -> PathBuf {
    std::env::var_os("RECSOLVE_SOLVER").map(PathBuf::from).unwrap_or_else(|| PathBuf::from("z3"))
}

pub fn solver() -> Solver {
    let cfg = SolverConfig { path: solver_path(), timeout_ms: 10_000, ..SolverConfig::default() };
    let solver = Solver::new(cfg).expect("solver backend");
    assert!(
        solver.run("probe", "(check-sat)\n").is_ok(),
        "an SMT solver is required: install z3 or set RECSOLVE_SOLVER"
    );
    solver
}
