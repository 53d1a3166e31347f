//! Cooperative solvers behind one trait, selected by name at runtime.

use std::collections::BTreeMap;

use crate::central::{solve_centralized, CentralOptions};
use crate::dist::{run_admm_vs, run_subgradient, AdmmConfig, SubgradientConfig};
use crate::error::{FogError, Result};
use crate::model::{Allocation, Scenario};
use crate::trace::SolveTrace;

/// Overrides shared by every solver. Unset fields keep the solver default.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolverSettings {
    pub max_iters: Option<usize>,
    pub tol: Option<f64>,
    pub rho: Option<f64>,
    pub step_base: Option<f64>,
    /// Known optimum; distributed solvers stop once within `gap_tol` of it.
    pub oracle: Option<f64>,
    pub gap_tol: Option<f64>,
    pub record_timing: bool,
}

pub trait CoopSolver: Send + Sync {
    fn name(&self) -> &'static str;
    fn solve(&self, s: &Scenario, settings: &SolverSettings) -> Result<(Allocation, SolveTrace)>;
}

pub struct Central;

impl CoopSolver for Central {
    fn name(&self) -> &'static str {
        "central"
    }

    fn solve(&self, s: &Scenario, st: &SolverSettings) -> Result<(Allocation, SolveTrace)> {
        let d = CentralOptions::default();
        let opts = CentralOptions {
            tol: st.tol.unwrap_or(d.tol),
            max_iters: st.max_iters.unwrap_or(d.max_iters),
            record_timing: st.record_timing,
        };
        solve_centralized(s, &opts)
    }
}

pub struct Subgradient;

impl Subgradient {
    pub fn config(st: &SolverSettings) -> SubgradientConfig {
        let d = SubgradientConfig::default();
        SubgradientConfig {
            step_base: st.step_base.unwrap_or(d.step_base),
            max_iters: st.max_iters.unwrap_or(d.max_iters),
            gap_tol: st.gap_tol.unwrap_or(d.gap_tol),
            oracle: st.oracle,
            record_timing: st.record_timing,
        }
    }
}

impl CoopSolver for Subgradient {
    fn name(&self) -> &'static str {
        "subgradient"
    }

    fn solve(&self, s: &Scenario, st: &SolverSettings) -> Result<(Allocation, SolveTrace)> {
        run_subgradient(s, &Self::config(st))
    }
}

pub struct Admm;

impl Admm {
    pub fn config(st: &SolverSettings) -> AdmmConfig {
        let d = AdmmConfig::default();
        AdmmConfig {
            rho: st.rho.unwrap_or(d.rho),
            eps_pri: st.tol.unwrap_or(d.eps_pri),
            eps_dual: st.tol.unwrap_or(d.eps_dual),
            max_iters: st.max_iters.unwrap_or(d.max_iters),
            gap_tol: st.gap_tol.unwrap_or(d.gap_tol),
            oracle: st.oracle,
            record_timing: st.record_timing,
        }
    }
}

impl CoopSolver for Admm {
    fn name(&self) -> &'static str {
        "admm"
    }

    fn solve(&self, s: &Scenario, st: &SolverSettings) -> Result<(Allocation, SolveTrace)> {
        run_admm_vs(s, &Self::config(st))
    }
}

pub struct SolverRegistry {
    solvers: BTreeMap<&'static str, Box<dyn CoopSolver>>,
}

impl SolverRegistry {
    pub fn empty() -> Self {
        Self {
            solvers: BTreeMap::new(),
        }
    }

    /// Registry holding `central`, `subgradient` and `admm`.
    pub fn with_builtin() -> Self {
        let mut r = Self::empty();
        r.register(Box::new(Central));
        r.register(Box::new(Subgradient));
        r.register(Box::new(Admm));
        r
    }

    /// Replaces any solver already registered under the same name.
    pub fn register(&mut self, solver: Box<dyn CoopSolver>) {
        self.solvers.insert(solver.name(), solver);
    }

    pub fn get(&self, name: &str) -> Result<&dyn CoopSolver> {
        self.solvers
            .get(name)
            .map(|b| b.as_ref())
            .ok_or_else(|| FogError::UnknownSolver(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.solvers.keys().copied()
    }
}

impl Default for SolverRegistry {
    fn default() -> Self {
        Self::with_builtin()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_names() {
        let r = SolverRegistry::with_builtin();
        assert_eq!(r.names().collect::<Vec<_>>(), vec!["admm", "central", "subgradient"]);
        assert!(matches!(r.get("simplex"), Err(FogError::UnknownSolver(_))));
    }

    #[test]
    fn registered_solver_is_dispatched() {
        struct CloudOnly;
        impl CoopSolver for CloudOnly {
            fn name(&self) -> &'static str {
                "cloud-only"
            }
            fn solve(&self, s: &Scenario, _: &SolverSettings) -> Result<(Allocation, SolveTrace)> {
                Ok((Allocation::cloud_only(s), SolveTrace::new("cloud-only")))
            }
        }
        let mut r = SolverRegistry::with_builtin();
        r.register(Box::new(CloudOnly));
        let s = crate::scenario::random_desk_scenario(3, 1).unwrap();
        let (a, _) = r.get("cloud-only").unwrap().solve(&s, &SolverSettings::default()).unwrap();
        assert_eq!(a, Allocation::cloud_only(&s));
    }
}
