//! Domain types and closed-form response-time / power quantities.
//!
//! Workload quantities are absolute rates (workload-units per second). The
//! allocation matrix `phi` holds amounts; the cloud term of the cooperative
//! response time uses the cloud *fraction* `phi_cloud[j] / lambda_j`.

use serde::{Deserialize, Serialize};

use crate::error::{FogError, Result};

/// Fraction of the service rate that solvers never exceed, keeping every
/// queueing term finite.
pub const STABILITY_MARGIN: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerParams {
    pue: f64,
    static_power: f64,
    dynamic_power_per_unit: f64,
    efficiency_cap: f64,
}

impl PowerParams {
    pub fn new(
        pue: f64,
        static_power: f64,
        dynamic_power_per_unit: f64,
        efficiency_cap: f64,
    ) -> Result<Self> {
        let finite = [pue, static_power, dynamic_power_per_unit, efficiency_cap]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(FogError::InvalidParams("power parameters must be finite".into()));
        }
        if pue < 1.0 {
            return Err(FogError::InvalidParams(format!("pue {pue} < 1")));
        }
        if static_power < 0.0 || dynamic_power_per_unit < 0.0 {
            return Err(FogError::InvalidParams(
                "static and dynamic power must be nonnegative".into(),
            ));
        }
        if efficiency_cap <= pue * dynamic_power_per_unit {
            return Err(FogError::InvalidParams(format!(
                "efficiency cap {efficiency_cap} must exceed pue * dynamic power {}",
                pue * dynamic_power_per_unit
            )));
        }
        Ok(Self {
            pue,
            static_power,
            dynamic_power_per_unit,
            efficiency_cap,
        })
    }

    pub fn pue(&self) -> f64 {
        self.pue
    }
    pub fn static_power(&self) -> f64 {
        self.static_power
    }
    pub fn dynamic_power_per_unit(&self) -> f64 {
        self.dynamic_power_per_unit
    }
    pub fn efficiency_cap(&self) -> f64 {
        self.efficiency_cap
    }

    /// Same hardware with a different efficiency cap.
    pub fn with_efficiency_cap(&self, efficiency_cap: f64) -> Result<Self> {
        Self::new(
            self.pue,
            self.static_power,
            self.dynamic_power_per_unit,
            efficiency_cap,
        )
    }

    /// Workload rate at which the per-unit power equals the efficiency cap.
    pub fn chi(&self) -> f64 {
        capacity_chi(self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeParams {
    pub id: String,
    arrival_rate: f64,
    service_rate: f64,
    user_rtt: f64,
    power: PowerParams,
}

impl NodeParams {
    pub fn new(
        id: impl Into<String>,
        arrival_rate: f64,
        service_rate: f64,
        user_rtt: f64,
        power: PowerParams,
    ) -> Result<Self> {
        let id = id.into();
        if !(arrival_rate > 0.0 && arrival_rate.is_finite()) {
            return Err(FogError::InvalidParams(format!(
                "node {id}: arrival rate {arrival_rate} must be positive"
            )));
        }
        if !(service_rate > 0.0 && service_rate.is_finite()) {
            return Err(FogError::InvalidParams(format!(
                "node {id}: service rate {service_rate} must be positive"
            )));
        }
        if !(user_rtt >= 0.0 && user_rtt.is_finite()) {
            return Err(FogError::InvalidParams(format!(
                "node {id}: user rtt {user_rtt} must be nonnegative"
            )));
        }
        Ok(Self {
            id,
            arrival_rate,
            service_rate,
            user_rtt,
            power,
        })
    }

    pub fn arrival_rate(&self) -> f64 {
        self.arrival_rate
    }
    pub fn service_rate(&self) -> f64 {
        self.service_rate
    }
    pub fn user_rtt(&self) -> f64 {
        self.user_rtt
    }
    pub fn power(&self) -> &PowerParams {
        &self.power
    }

    pub fn with_power(&self, power: PowerParams) -> Self {
        Self {
            power,
            ..self.clone()
        }
    }

    /// Largest load the solvers let this node process:
    /// `min(chi, (1 - STABILITY_MARGIN) * mu)`.
    pub fn effective_capacity(&self) -> f64 {
        self.power
            .chi()
            .min((1.0 - STABILITY_MARGIN) * self.service_rate)
    }
}

/// A cooperative fog deployment.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    nodes: Vec<NodeParams>,
    inter_rtt: Vec<f64>,
    cloud_rtt: f64,
    deadline: f64,
    coop_mask: Vec<bool>,
}

impl Scenario {
    /// `inter_rtt` and `coop_mask` are row-major `n x n`; entry `(j, i)`
    /// describes forwarding from node `j` to node `i`.
    pub fn new(
        nodes: Vec<NodeParams>,
        inter_rtt: Vec<f64>,
        cloud_rtt: f64,
        deadline: f64,
        coop_mask: Vec<bool>,
    ) -> Result<Self> {
        let n = nodes.len();
        if n == 0 {
            return Err(FogError::InvalidParams("scenario has no nodes".into()));
        }
        if inter_rtt.len() != n * n || coop_mask.len() != n * n {
            return Err(FogError::InvalidParams(format!(
                "rtt/mask must be {n}x{n}"
            )));
        }
        for j in 0..n {
            if inter_rtt[j * n + j] != 0.0 {
                return Err(FogError::InvalidParams(format!(
                    "inter_rtt diagonal ({j},{j}) must be zero"
                )));
            }
            if !coop_mask[j * n + j] {
                return Err(FogError::InvalidParams(format!(
                    "coop_mask diagonal ({j},{j}) must be true"
                )));
            }
            for i in 0..n {
                let v = inter_rtt[j * n + i];
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(FogError::InvalidParams(format!(
                        "inter_rtt ({j},{i}) = {v} must be nonnegative"
                    )));
                }
                if v != inter_rtt[i * n + j] {
                    return Err(FogError::InvalidParams(format!(
                        "inter_rtt not symmetric at ({j},{i})"
                    )));
                }
            }
        }
        if !(cloud_rtt >= 0.0 && cloud_rtt.is_finite()) {
            return Err(FogError::InvalidParams("cloud rtt must be nonnegative".into()));
        }
        if !(deadline > 0.0) {
            return Err(FogError::InvalidParams("deadline must be positive".into()));
        }
        Ok(Self {
            nodes,
            inter_rtt,
            cloud_rtt,
            deadline,
            coop_mask,
        })
    }

    /// Every pair may cooperate, all forwarding RTTs equal `rtt`.
    pub fn fully_connected(
        nodes: Vec<NodeParams>,
        rtt: f64,
        cloud_rtt: f64,
        deadline: f64,
    ) -> Result<Self> {
        let n = nodes.len();
        let inter = (0..n * n)
            .map(|k| if k / n == k % n { 0.0 } else { rtt })
            .collect();
        Self::new(nodes, inter, cloud_rtt, deadline, vec![true; n * n])
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }
    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
    pub fn nodes(&self) -> &[NodeParams] {
        &self.nodes
    }
    pub fn node(&self, i: usize) -> &NodeParams {
        &self.nodes[i]
    }
    pub fn inter_rtt(&self, from: usize, to: usize) -> f64 {
        self.inter_rtt[from * self.len() + to]
    }
    pub fn may_forward(&self, from: usize, to: usize) -> bool {
        self.coop_mask[from * self.len() + to]
    }
    /// Fog-to-cloud round trip, used for both `tau^f` and `tau^c`.
    pub fn cloud_rtt(&self) -> f64 {
        self.cloud_rtt
    }
    pub fn deadline(&self) -> f64 {
        self.deadline
    }
    pub fn arrival_rates(&self) -> Vec<f64> {
        self.nodes.iter().map(|n| n.arrival_rate()).collect()
    }
    pub fn total_arrival(&self) -> f64 {
        self.nodes.iter().map(|n| n.arrival_rate()).sum()
    }
    pub fn capacities(&self) -> Vec<f64> {
        self.nodes.iter().map(|n| n.effective_capacity()).collect()
    }

    pub fn with_mask(&self, coop_mask: Vec<bool>) -> Result<Self> {
        Self::new(
            self.nodes.clone(),
            self.inter_rtt.clone(),
            self.cloud_rtt,
            self.deadline,
            coop_mask,
        )
    }

    /// Same nodes, cooperation disabled.
    pub fn isolated(&self) -> Self {
        let n = self.len();
        let mask = (0..n * n).map(|k| k / n == k % n).collect();
        self.with_mask(mask).expect("diagonal mask is always valid")
    }

    pub fn with_nodes(&self, nodes: Vec<NodeParams>) -> Result<Self> {
        Self::new(
            nodes,
            self.inter_rtt.clone(),
            self.cloud_rtt,
            self.deadline,
            self.coop_mask.clone(),
        )
    }

    /// Relabel nodes: new node `k` is old node `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.len();
        let nodes = perm.iter().map(|&p| self.nodes[p].clone()).collect();
        let mut rtt = vec![0.0; n * n];
        let mut mask = vec![false; n * n];
        for a in 0..n {
            for b in 0..n {
                rtt[a * n + b] = self.inter_rtt(perm[a], perm[b]);
                mask[a * n + b] = self.may_forward(perm[a], perm[b]);
            }
        }
        Self::new(nodes, rtt, self.cloud_rtt, self.deadline, mask)
    }
}

/// Workload matrix: `phi[(j, i)]` is node j's workload processed at node i,
/// `cloud[j]` is node j's workload sent to the cloud.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    n: usize,
    phi: Vec<f64>,
    cloud: Vec<f64>,
}

impl Allocation {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            phi: vec![0.0; n * n],
            cloud: vec![0.0; n],
        }
    }

    /// Everything goes to the cloud.
    pub fn cloud_only(s: &Scenario) -> Self {
        let mut a = Self::zeros(s.len());
        a.cloud = s.arrival_rates();
        a
    }

    pub fn from_parts(n: usize, phi: Vec<f64>, cloud: Vec<f64>) -> Result<Self> {
        if phi.len() != n * n || cloud.len() != n {
            return Err(FogError::InvalidParams(format!(
                "allocation must be {n}x{n} plus {n} cloud entries"
            )));
        }
        Ok(Self { n, phi, cloud })
    }

    /// Flat layout used by the solvers: `n*n` fog entries then `n` cloud entries.
    pub fn from_flat(n: usize, flat: &[f64]) -> Self {
        debug_assert_eq!(flat.len(), n * n + n);
        Self {
            n,
            phi: flat[..n * n].to_vec(),
            cloud: flat[n * n..].to_vec(),
        }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = self.phi.clone();
        v.extend_from_slice(&self.cloud);
        v
    }

    pub fn len(&self) -> usize {
        self.n
    }
    pub fn is_empty(&self) -> bool {
        self.n == 0
    }
    pub fn get(&self, from: usize, to: usize) -> f64 {
        self.phi[from * self.n + to]
    }
    pub fn set(&mut self, from: usize, to: usize, v: f64) {
        self.phi[from * self.n + to] = v;
    }
    pub fn cloud(&self, j: usize) -> f64 {
        self.cloud[j]
    }
    pub fn set_cloud(&mut self, j: usize, v: f64) {
        self.cloud[j] = v;
    }
    pub fn cloud_column(&self) -> &[f64] {
        &self.cloud
    }

    /// Total workload of node `j` placed anywhere, cloud included.
    pub fn row_total(&self, j: usize) -> f64 {
        self.phi[j * self.n..(j + 1) * self.n].iter().sum::<f64>() + self.cloud[j]
    }

    /// Total workload processed at node `i`.
    pub fn column_load(&self, i: usize) -> f64 {
        (0..self.n).map(|j| self.phi[j * self.n + i]).sum()
    }

    /// Service vector of node `i`.
    pub fn column(&self, i: usize) -> Vec<f64> {
        (0..self.n).map(|j| self.phi[j * self.n + i]).collect()
    }

    pub fn set_column(&mut self, i: usize, col: &[f64]) {
        for (j, v) in col.iter().enumerate() {
            self.phi[j * self.n + i] = *v;
        }
    }

    pub fn max_abs_diff(&self, other: &Allocation) -> f64 {
        self.phi
            .iter()
            .chain(&self.cloud)
            .zip(other.phi.iter().chain(&other.cloud))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn permuted(&self, perm: &[usize]) -> Self {
        let n = self.n;
        let mut out = Self::zeros(n);
        for a in 0..n {
            out.cloud[a] = self.cloud[perm[a]];
            for b in 0..n {
                out.phi[a * n + b] = self.get(perm[a], perm[b]);
            }
        }
        out
    }
}

/// Power consumed per unit of processed workload.
pub fn power_efficiency(p: &PowerParams, processed: f64) -> Result<f64> {
    if !(processed > 0.0) {
        return Err(FogError::Domain(format!(
            "power efficiency undefined at processed load {processed}"
        )));
    }
    Ok(p.pue * (p.static_power / processed + p.dynamic_power_per_unit))
}

/// Load at which [`power_efficiency`] equals the efficiency cap.
pub fn capacity_chi(p: &PowerParams) -> f64 {
    p.static_power * p.pue / (p.efficiency_cap - p.pue * p.dynamic_power_per_unit)
}

pub fn response_cloud_only(n: &NodeParams, cloud_rtt: f64) -> f64 {
    n.user_rtt + cloud_rtt
}

pub fn response_local_all(n: &NodeParams) -> Result<f64> {
    if n.arrival_rate >= n.service_rate {
        return Err(FogError::Unstable {
            node: 0,
            load: n.arrival_rate,
            mu: n.service_rate,
        });
    }
    Ok(n.user_rtt + 1.0 / (n.service_rate - n.arrival_rate))
}

/// Response time when a fraction `alpha` is processed locally and the rest
/// goes to the cloud.
pub fn response_partial(n: &NodeParams, alpha: f64, cloud_rtt: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(FogError::Domain(format!("alpha {alpha} outside [0, 1]")));
    }
    let load = alpha * n.arrival_rate;
    if load >= n.service_rate {
        return Err(FogError::Unstable {
            node: 0,
            load,
            mu: n.service_rate,
        });
    }
    Ok(n.user_rtt + alpha / (n.service_rate - load) + (1.0 - alpha) * cloud_rtt)
}

fn stable_loads(a: &Allocation, s: &Scenario) -> Result<Vec<f64>> {
    (0..s.len())
        .map(|i| {
            let load = a.column_load(i);
            let mu = s.node(i).service_rate;
            if load >= mu {
                Err(FogError::Unstable { node: i, load, mu })
            } else {
                Ok(load)
            }
        })
        .collect()
}

fn check_mask_row(j: usize, a: &Allocation, s: &Scenario) -> Result<()> {
    for i in 0..s.len() {
        if !s.may_forward(j, i) && a.get(j, i) != 0.0 {
            return Err(FogError::MaskViolation { row: j, col: i });
        }
    }
    Ok(())
}

fn coop_response_with_loads(j: usize, a: &Allocation, s: &Scenario, loads: &[f64]) -> f64 {
    let total = s.total_arrival();
    let fog: f64 = (0..s.len())
        .map(|i| {
            let phi = a.get(j, i);
            if phi == 0.0 {
                0.0
            } else {
                phi * (s.inter_rtt(j, i) + 1.0 / (s.node(i).service_rate - loads[i]))
            }
        })
        .sum();
    s.node(j).user_rtt + fog / total + a.cloud(j) / s.node(j).arrival_rate * s.cloud_rtt()
}

/// Response time of node `j`'s users under cooperative allocation `a`.
pub fn coop_response(j: usize, a: &Allocation, s: &Scenario) -> Result<f64> {
    check_mask_row(j, a, s)?;
    let loads = stable_loads(a, s)?;
    Ok(coop_response_with_loads(j, a, s, &loads))
}

/// Sum of cooperative response times over all nodes.
pub fn coop_objective(a: &Allocation, s: &Scenario) -> Result<f64> {
    for j in 0..s.len() {
        check_mask_row(j, a, s)?;
    }
    let loads = stable_loads(a, s)?;
    Ok((0..s.len())
        .map(|j| coop_response_with_loads(j, a, s, &loads))
        .sum())
}

/// Gradient of [`coop_objective`] in the flat `n*n + n` layout. Masked
/// entries get a zero gradient.
pub fn coop_gradient(a: &Allocation, s: &Scenario) -> Result<Vec<f64>> {
    let n = s.len();
    let loads = stable_loads(a, s)?;
    let total = s.total_arrival();
    let mut g = vec![0.0; n * n + n];
    for i in 0..n {
        let mu = s.node(i).service_rate;
        let slack = mu - loads[i];
        // d/dphi_ki of sum_j phi_ji / (mu - L) = 1/(mu-L) + L/(mu-L)^2 = mu/(mu-L)^2
        let queue = mu / (slack * slack);
        for j in 0..n {
            if s.may_forward(j, i) {
                g[j * n + i] = (s.inter_rtt(j, i) + queue) / total;
            }
        }
    }
    for j in 0..n {
        g[n * n + j] = s.cloud_rtt() / s.node(j).arrival_rate;
    }
    Ok(g)
}
