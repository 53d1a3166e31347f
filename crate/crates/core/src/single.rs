//! Single-node local/cloud split.
//!
//! The numeric minimizer is the reference answer. The published piecewise
//! closed form is kept alongside it for auditing, since its branch
//! conditions do not match the stationarity condition of the objective.

use serde::{Deserialize, Serialize};

use crate::error::{FogError, Result};
use crate::model::{power_efficiency, response_partial, NodeParams, STABILITY_MARGIN};

pub const ALPHA_TOL: f64 = 1e-9;
const BOUNDARY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Binding {
    Interior,
    EfficiencyCap,
    AllLocal,
    AllCloud,
    /// Held at `(1 - STABILITY_MARGIN) * mu`.
    StabilityMargin,
}

/// How the power-efficiency cap restricts local processing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PowerConstraint {
    /// Processed load at most `chi`, the form used by the cooperative problem.
    #[default]
    ProcessingCap,
    /// `eta(alpha) <= eta_cap` whenever anything is processed, i.e.
    /// `alpha = 0` or `alpha * lambda >= chi`.
    EfficiencyBound,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingleSolution {
    pub alpha_star: f64,
    pub response_time: f64,
    /// `None` when nothing is processed locally.
    pub efficiency_at_opt: Option<f64>,
    pub binding: Binding,
}

/// Golden-section minimization of a unimodal `f` on `[lo, hi]`.
pub fn golden_section<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Upper end of the local fraction and what imposes it.
fn upper_limit(n: &NodeParams, constraint: PowerConstraint) -> (f64, Binding) {
    let lambda = n.arrival_rate();
    let mut limit = (1.0, Binding::AllLocal);
    let stab = (1.0 - STABILITY_MARGIN) * n.service_rate() / lambda;
    if stab < limit.0 {
        limit = (stab, Binding::StabilityMargin);
    }
    if constraint == PowerConstraint::ProcessingCap {
        let chi = n.power().chi() / lambda;
        if chi < limit.0 {
            limit = (chi, Binding::EfficiencyCap);
        }
    }
    limit
}

fn solution(n: &NodeParams, cloud_rtt: f64, alpha: f64, binding: Binding) -> Result<SingleSolution> {
    let response_time = response_partial(n, alpha, cloud_rtt)?;
    let efficiency_at_opt = if alpha > 0.0 {
        Some(power_efficiency(n.power(), alpha * n.arrival_rate())?)
    } else {
        None
    };
    Ok(SingleSolution {
        alpha_star: alpha,
        response_time,
        efficiency_at_opt,
        binding,
    })
}

/// Minimize the response time over `alpha` in `[lo, hi]`, snapping to an
/// endpoint when the endpoint is at least as good.
fn minimize_on(
    n: &NodeParams,
    cloud_rtt: f64,
    lo: (f64, Binding),
    hi: (f64, Binding),
) -> Result<SingleSolution> {
    let r = |a: f64| response_partial(n, a, cloud_rtt).unwrap_or(f64::INFINITY);
    let a = golden_section(r, lo.0, hi.0, ALPHA_TOL);
    let mut best = (a, Binding::Interior, r(a));
    for (edge, tag) in [lo, hi] {
        let v = r(edge);
        if v <= best.2 + 1e-15 && (edge - a).abs() <= BOUNDARY_TOL.max(ALPHA_TOL) || v <= best.2 {
            best = (edge, tag, v);
        }
    }
    solution(n, cloud_rtt, best.0, best.1)
}

/// Optimal local fraction under the processing cap.
pub fn optimal_alpha_numeric(n: &NodeParams, cloud_rtt: f64) -> Result<SingleSolution> {
    optimal_alpha_with(n, cloud_rtt, PowerConstraint::ProcessingCap)
}

pub fn optimal_alpha_with(
    n: &NodeParams,
    cloud_rtt: f64,
    constraint: PowerConstraint,
) -> Result<SingleSolution> {
    let hi = upper_limit(n, constraint);
    if !(hi.0 >= 0.0) {
        return Err(FogError::Domain(format!(
            "node {}: empty feasible interval",
            n.id
        )));
    }
    match constraint {
        PowerConstraint::ProcessingCap => minimize_on(n, cloud_rtt, (0.0, Binding::AllCloud), hi),
        PowerConstraint::EfficiencyBound => {
            let floor = n.power().chi() / n.arrival_rate();
            let cloud = solution(n, cloud_rtt, 0.0, Binding::AllCloud)?;
            if floor > hi.0 {
                return Ok(cloud);
            }
            let lo_tag = if floor > 0.0 {
                Binding::EfficiencyCap
            } else {
                Binding::AllCloud
            };
            let local = minimize_on(n, cloud_rtt, (floor, lo_tag), hi)?;
            Ok(if cloud.response_time <= local.response_time {
                cloud
            } else {
                local
            })
        }
    }
}

/// The published closed form, evaluated exactly as written and clamped to
/// `[0, 1]`. Not authoritative; see [`closed_form_audit`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrintedClosedForm {
    pub alpha: f64,
    pub branch: u8,
}

pub fn closed_form_alpha(n: &NodeParams, cloud_rtt: f64) -> Result<PrintedClosedForm> {
    let mu = n.service_rate();
    let lambda = n.arrival_rate();
    let chi = n.power().chi();
    let tau = cloud_rtt;
    let (alpha, branch) = if mu < lambda / (tau + 1.0) {
        (1.0, 1)
    } else if mu >= chi / (2.0 * chi - lambda * (1.0 - tau)) {
        (chi / lambda, 2)
    } else {
        let radicand = 1.0 - lambda / mu * (1.0 - tau);
        if radicand < 0.0 {
            return Err(FogError::UndefinedBranch {
                branch: 3,
                reason: format!("negative radicand {radicand}"),
            });
        }
        (mu / lambda - mu / lambda * radicand.sqrt(), 3)
    };
    Ok(PrintedClosedForm {
        alpha: alpha.clamp(0.0, 1.0),
        branch,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRow {
    pub id: String,
    pub mu: f64,
    pub lambda: f64,
    pub tau_u: f64,
    pub tau_f: f64,
    pub chi: f64,
    pub numeric_alpha: f64,
    pub numeric_response: f64,
    pub branch: Option<u8>,
    pub closed_form_alpha: Option<f64>,
    pub alpha_diff: Option<f64>,
    /// Response at the closed-form alpha minus the numeric optimum; `None`
    /// when the closed form lands on an unstable load.
    pub response_gap: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub rows: Vec<AuditRow>,
    pub count: usize,
    pub undefined: usize,
    pub agree_1e4: usize,
    pub max_alpha_diff: f64,
    pub per_branch: [usize; 3],
}

/// Compare the published closed form with the numeric optimum.
pub fn closed_form_audit(nodes: &[NodeParams], cloud_rtt: f64) -> Result<AuditReport> {
    let mut rows = Vec::with_capacity(nodes.len());
    for n in nodes {
        let num = optimal_alpha_numeric(n, cloud_rtt)?;
        let mut row = AuditRow {
            id: n.id.clone(),
            mu: n.service_rate(),
            lambda: n.arrival_rate(),
            tau_u: n.user_rtt(),
            tau_f: cloud_rtt,
            chi: n.power().chi(),
            numeric_alpha: num.alpha_star,
            numeric_response: num.response_time,
            branch: None,
            closed_form_alpha: None,
            alpha_diff: None,
            response_gap: None,
            error: None,
        };
        match closed_form_alpha(n, cloud_rtt) {
            Ok(cf) => {
                row.branch = Some(cf.branch);
                row.closed_form_alpha = Some(cf.alpha);
                row.alpha_diff = Some((cf.alpha - num.alpha_star).abs());
                row.response_gap = response_partial(n, cf.alpha, cloud_rtt)
                    .ok()
                    .map(|r| r - num.response_time);
            }
            Err(e) => row.error = Some(e.to_string()),
        }
        rows.push(row);
    }
    let mut per_branch = [0usize; 3];
    for b in rows.iter().filter_map(|r| r.branch) {
        per_branch[(b - 1) as usize] += 1;
    }
    Ok(AuditReport {
        count: rows.len(),
        undefined: rows.iter().filter(|r| r.error.is_some()).count(),
        agree_1e4: rows
            .iter()
            .filter(|r| r.alpha_diff.is_some_and(|d| d <= 1e-4))
            .count(),
        max_alpha_diff: rows
            .iter()
            .filter_map(|r| r.alpha_diff)
            .fold(0.0, f64::max),
        per_branch,
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffPoint {
    pub eta_cap: f64,
    pub alpha_star: f64,
    pub response_time: f64,
    pub binding: Binding,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedPoint {
    pub eta_cap: f64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct TradeoffCurve {
    pub points: Vec<TradeoffPoint>,
    pub skipped: Vec<SkippedPoint>,
}

/// Minimum response time as a function of the per-unit power budget.
///
/// Each point enforces `eta(alpha) <= eta_cap` for any nonzero local share,
/// so raising the budget only enlarges the feasible set.
pub fn tradeoff_curve(n: &NodeParams, cloud_rtt: f64, eta_grid: &[f64]) -> Result<TradeoffCurve> {
    let mut curve = TradeoffCurve::default();
    for &eta in eta_grid {
        let power = match n.power().with_efficiency_cap(eta) {
            Ok(p) => p,
            Err(e) => {
                log::warn!("skipping eta_cap {eta}: {e}");
                curve.skipped.push(SkippedPoint {
                    eta_cap: eta,
                    reason: e.to_string(),
                });
                continue;
            }
        };
        let sol = optimal_alpha_with(&n.with_power(power), cloud_rtt, PowerConstraint::EfficiencyBound)?;
        curve.points.push(TradeoffPoint {
            eta_cap: eta,
            alpha_star: sol.alpha_star,
            response_time: sol.response_time,
            binding: sol.binding,
        });
    }
    Ok(curve)
}

/// Evenly spaced eta grid.
pub fn linear_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    match points {
        0 => vec![],
        1 => vec![lo],
        _ => (0..points)
            .map(|k| lo + (hi - lo) * k as f64 / (points - 1) as f64)
            .collect(),
    }
}
