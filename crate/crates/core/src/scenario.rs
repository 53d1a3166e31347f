//! Scenario files, empirical arrival distributions, synthetic city
//! topologies and an M/M/1 simulator.
//!
//! A topology is a JSON document:
//!
//! ```json
//! {
//!   "cloud_rtt": 0.15, "deadline": 0.5, "coop_radius": 500.0,
//!   "inter_rtt": 0.02, "policy": "radius",
//!   "nodes": [
//!     {"id": "a", "x": 0.0, "y": 0.0, "mu": 500.0, "lambda": 120.0,
//!      "tau_u": 0.01, "pue": 1.2, "w_static": 100.0, "w_dynamic": 0.5,
//!      "eta_cap": 0.9}
//!   ]
//! }
//! ```
//!
//! A node may give `"distribution": "file.csv"` instead of `lambda`; the
//! path is relative to the topology file and the arrival rate is the
//! distribution mean. Distribution CSVs have a `value,weight` header.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{FogError, Result};
use crate::model::{NodeParams, PowerParams, Scenario};

/// Which pairs of nodes may forward workload to each other.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoopPolicy {
    /// Every pair within `coop_radius`.
    #[default]
    Radius,
    /// Each node and its closest neighbour within `coop_radius`, both ways.
    Nearest,
    /// No forwarding between nodes.
    None,
}

impl std::str::FromStr for CoopPolicy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "radius" => Ok(Self::Radius),
            "nearest" => Ok(Self::Nearest),
            "none" => Ok(Self::None),
            _ => Err(format!("unknown cooperation policy {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeRecord {
    pub id: String,
    /// Meters.
    pub x: f64,
    pub y: f64,
    /// Workload units per second.
    pub mu: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distribution: Option<String>,
    /// Seconds.
    pub tau_u: f64,
    pub pue: f64,
    /// Watts.
    pub w_static: f64,
    /// Watts per workload unit.
    pub w_dynamic: f64,
    /// Watts per workload unit.
    pub eta_cap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Topology {
    /// Seconds.
    pub cloud_rtt: f64,
    /// Seconds.
    pub deadline: f64,
    /// Meters.
    pub coop_radius: f64,
    /// Seconds, for every permitted pair.
    pub inter_rtt: f64,
    #[serde(default)]
    pub policy: CoopPolicy,
    pub nodes: Vec<NodeRecord>,
}

fn scenario_error(path: &Path, reason: impl Into<String>) -> FogError {
    FogError::Scenario {
        path: path.display().to_string(),
        reason: reason.into(),
    }
}

impl Topology {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| scenario_error(path, e.to_string()))?;
        let mut topo: Topology = serde_json::from_str(&text).map_err(|e| scenario_error(path, e.to_string()))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        for rec in &mut topo.nodes {
            if let Some(dist) = &rec.distribution {
                let d = EmpiricalDist::from_csv(&base.join(dist))?;
                if rec.lambda.is_some() {
                    return Err(scenario_error(path, format!("node {}: both lambda and distribution given", rec.id)));
                }
                rec.lambda = Some(d.mean());
            }
        }
        topo.validate().map_err(|reason| scenario_error(path, reason))?;
        Ok(topo)
    }

    /// Writes the topology with every arrival rate inline.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = self.clone();
        for rec in &mut out.nodes {
            rec.distribution = None;
        }
        let mut text = serde_json::to_string_pretty(&out)?;
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        for (name, v) in [
            ("cloud_rtt", self.cloud_rtt),
            ("deadline", self.deadline),
            ("coop_radius", self.coop_radius),
            ("inter_rtt", self.inter_rtt),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("{name} = {v} must be positive"));
            }
        }
        if self.nodes.is_empty() {
            return Err("no nodes".into());
        }
        let mut ids = HashSet::new();
        for rec in &self.nodes {
            if !ids.insert(rec.id.as_str()) {
                return Err(format!("duplicate node id {:?}", rec.id));
            }
            if !(rec.x.is_finite() && rec.y.is_finite()) {
                return Err(format!("node {}: coordinates must be finite", rec.id));
            }
            if rec.lambda.is_none() {
                return Err(format!("node {}: needs lambda or distribution", rec.id));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn distance(&self, a: usize, b: usize) -> f64 {
        let (p, q) = (&self.nodes[a], &self.nodes[b]);
        (p.x - q.x).hypot(p.y - q.y)
    }

    /// Row-major `n x n` cooperation mask under `policy`.
    pub fn mask(&self, policy: CoopPolicy) -> Vec<bool> {
        let n = self.len();
        let mut mask: Vec<bool> = (0..n * n).map(|k| k / n == k % n).collect();
        match policy {
            CoopPolicy::None => {}
            CoopPolicy::Radius => {
                for j in 0..n {
                    for i in 0..n {
                        if self.distance(j, i) <= self.coop_radius {
                            mask[j * n + i] = true;
                        }
                    }
                }
            }
            CoopPolicy::Nearest => {
                for j in 0..n {
                    let nearest = (0..n)
                        .filter(|&i| i != j && self.distance(j, i) <= self.coop_radius)
                        .min_by(|&a, &b| self.distance(j, a).total_cmp(&self.distance(j, b)));
                    if let Some(i) = nearest {
                        mask[j * n + i] = true;
                        mask[i * n + j] = true;
                    }
                }
            }
        }
        mask
    }

    pub fn to_scenario(&self, policy: CoopPolicy) -> Result<Scenario> {
        let n = self.len();
        let nodes = self
            .nodes
            .iter()
            .map(|r| {
                let lambda = r
                    .lambda
                    .ok_or_else(|| FogError::InvalidParams(format!("node {}: arrival rate unresolved", r.id)))?;
                let power = PowerParams::new(r.pue, r.w_static, r.w_dynamic, r.eta_cap)
                    .map_err(|e| FogError::InvalidParams(format!("node {}: {e}", r.id)))?;
                NodeParams::new(r.id.clone(), lambda, r.mu, r.tau_u, power)
                    .map_err(|e| FogError::InvalidParams(format!("node {}: {e}", r.id)))
            })
            .collect::<Result<Vec<_>>>()?;
        let mask = self.mask(policy);
        let rtt = (0..n * n)
            .map(|k| if mask[k] && k / n != k % n { self.inter_rtt } else { 0.0 })
            .collect::<Vec<_>>();
        // keep the RTT matrix symmetric even when the mask is not
        let rtt = (0..n * n)
            .map(|k| rtt[k].max(rtt[(k % n) * n + k / n]))
            .collect();
        Scenario::new(nodes, rtt, self.cloud_rtt, self.deadline, mask)
    }
}

/// Load a topology file and build the scenario under its own policy.
pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let topo = Topology::load(path)?;
    topo.to_scenario(topo.policy)
        .map_err(|e| scenario_error(path, e.to_string()))
}

/// Discrete workload distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalDist {
    support: Vec<f64>,
    weights: Vec<f64>,
}

#[derive(Debug, Deserialize)]
struct DistRow {
    value: f64,
    weight: f64,
}

impl EmpiricalDist {
    pub fn new(support: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if support.is_empty() || support.len() != weights.len() {
            return Err(FogError::InvalidParams("support and weights must be non-empty and equally long".into()));
        }
        if support.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(FogError::InvalidParams("support values must be nonnegative".into()));
        }
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(FogError::InvalidParams("weights must be nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(FogError::InvalidParams(format!("weights sum to {total}, not 1")));
        }
        Ok(Self { support, weights })
    }

    pub fn point_mass(v: f64) -> Result<Self> {
        Self::new(vec![v], vec![1.0])
    }

    pub fn from_csv(path: &Path) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path).map_err(|e| scenario_error(path, e.to_string()))?;
        let mut support = Vec::new();
        let mut weights = Vec::new();
        for row in reader.deserialize::<DistRow>() {
            let row = row.map_err(|e| scenario_error(path, e.to_string()))?;
            support.push(row.value);
            weights.push(row.weight);
        }
        Self::new(support, weights).map_err(|e| scenario_error(path, e.to_string()))
    }

    pub fn support(&self) -> &[f64] {
        &self.support
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn mean(&self) -> f64 {
        self.support.iter().zip(&self.weights).map(|(v, w)| v * w).sum()
    }
}

/// `n` independent draws, reproducible for a given seed.
pub fn sample_arrivals(d: &EmpiricalDist, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let index = WeightedIndex::new(&d.weights).expect("validated weights");
    (0..n).map(|_| d.support[index.sample(&mut rng)]).collect()
}

/// Mean sojourn time of a FIFO M/M/1 queue, simulated job by job.
///
/// The first 10% of the horizon (`departures / 9` jobs on top of the
/// `departures` measured ones) is discarded as warm-up. Successive sojourns
/// follow the Lindley recursion `W' = max(0, W + S - A)`.
pub fn mm1_simulate(lambda: f64, mu: f64, departures: usize, seed: u64) -> Result<f64> {
    if !(lambda > 0.0 && mu > 0.0) {
        return Err(FogError::InvalidParams("rates must be positive".into()));
    }
    if lambda >= mu {
        return Err(FogError::Unstable { node: 0, load: lambda, mu });
    }
    if departures == 0 {
        return Err(FogError::InvalidParams("departures must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inter = Exp::new(lambda).expect("positive rate");
    let service = Exp::new(mu).expect("positive rate");
    let warmup = departures / 9;
    let mut wait = 0.0f64;
    let mut total = 0.0;
    for k in 0..warmup + departures {
        let s: f64 = service.sample(&mut rng);
        let sojourn = wait + s;
        if k >= warmup {
            total += sojourn;
        }
        let a: f64 = inter.sample(&mut rng);
        wait = (sojourn - a).max(0.0);
    }
    Ok(total / departures as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DensityProfile {
    /// Clustered placement, many neighbours within the cooperation radius.
    Urban,
    /// Sparse jittered grid, no two nodes within the cooperation radius.
    Rural,
}

impl std::str::FromStr for DensityProfile {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "urban" => Ok(Self::Urban),
            "rural" => Ok(Self::Rural),
            _ => Err(format!("unknown density profile {s:?}")),
        }
    }
}

/// City defaults for generated topologies.
pub mod city {
    /// Frames per second each node may process under its efficiency cap.
    pub const FRAME_CAPACITY: f64 = 400.0;
    pub const DEADLINE: f64 = 0.5;
    pub const INTER_RTT: f64 = 0.020;
    pub const COOP_RADIUS: f64 = 500.0;
    pub const CLOUD_RTT: f64 = 0.15;
    pub const SERVICE_RATE: f64 = 500.0;
    pub const PUE: f64 = 1.2;
    pub const W_STATIC: f64 = 100.0;
    pub const W_DYNAMIC: f64 = 0.5;
    /// Rural grid spacing, meters.
    pub const RURAL_SPACING: f64 = 800.0;
}

/// Frame rates of a single bus, frames per second.
pub fn bus_frame_rates() -> EmpiricalDist {
    EmpiricalDist::new(
        vec![18.0, 22.0, 26.0, 30.0, 34.0, 38.0],
        vec![0.10, 0.20, 0.30, 0.20, 0.15, 0.05],
    )
    .expect("valid table")
}

/// Synthetic city deployment following the paper-style defaults: every node
/// processes at most [`city::FRAME_CAPACITY`] frames/s under its efficiency
/// cap, 0.5 s deadline, 20 ms forwarding RTT and a 500 m radius.
///
/// Half of the nodes sit on bus routes and serve 16 to 32 buses; the others
/// serve 0 to 4. A node's arrival rate is its bus count times the mean bus
/// frame rate.
pub fn make_dublin_like(profile: DensityProfile, node_count: usize, seed: u64) -> Result<Topology> {
    use city::*;
    if node_count == 0 {
        return Err(FogError::InvalidParams("node_count must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let positions: Vec<(f64, f64)> = match profile {
        DensityProfile::Urban => {
            let clusters = node_count.div_ceil(7).max(1);
            let centers: Vec<(f64, f64)> = (0..clusters)
                .map(|_| (rng.random_range(0.0..1500.0), rng.random_range(0.0..1500.0)))
                .collect();
            let spread = Normal::new(0.0, 150.0).expect("positive spread");
            (0..node_count)
                .map(|k| {
                    let (cx, cy) = centers[k % clusters];
                    (cx + spread.sample(&mut rng), cy + spread.sample(&mut rng))
                })
                .collect()
        }
        DensityProfile::Rural => {
            let side = (node_count as f64).sqrt().ceil() as usize;
            // jitter keeps every pair at least RURAL_SPACING - 200 m apart
            (0..node_count)
                .map(|k| {
                    let (gx, gy) = ((k % side) as f64, (k / side) as f64);
                    (
                        gx * RURAL_SPACING + rng.random_range(-100.0..100.0),
                        gy * RURAL_SPACING + rng.random_range(-100.0..100.0),
                    )
                })
                .collect()
        }
    };
    let per_bus = bus_frame_rates().mean();
    let eta_cap = PUE * (W_STATIC / FRAME_CAPACITY + W_DYNAMIC);
    let nodes = positions
        .into_iter()
        .enumerate()
        .map(|(k, (x, y))| {
            let on_route = rng.random_bool(0.5);
            let buses: u32 = if on_route {
                rng.random_range(16..=32)
            } else {
                rng.random_range(0..=4)
            };
            // a node with no buses still sees background traffic
            let lambda = (buses as f64 * per_bus).max(1.0);
            NodeRecord {
                id: format!("fog-{k:02}"),
                x,
                y,
                mu: SERVICE_RATE,
                lambda: Some(lambda),
                distribution: None,
                tau_u: rng.random_range(0.005..0.015),
                pue: PUE,
                w_static: W_STATIC,
                w_dynamic: W_DYNAMIC,
                eta_cap,
            }
        })
        .collect();
    Ok(Topology {
        cloud_rtt: CLOUD_RTT,
        deadline: DEADLINE,
        coop_radius: COOP_RADIUS,
        inter_rtt: INTER_RTT,
        policy: CoopPolicy::Radius,
        nodes,
    })
}

/// Small random instance for tests and benchmarks: fully connected, loads
/// spread on both sides of capacity.
pub fn random_desk_scenario(n: usize, seed: u64) -> Result<Scenario> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nodes = (0..n)
        .map(|k| {
            let mu = rng.random_range(8.0..20.0);
            let chi: f64 = rng.random_range(0.4..0.95) * mu;
            let lambda = rng.random_range(0.2..1.4) * chi;
            let w_static = rng.random_range(1.0..10.0);
            let w_dynamic = rng.random_range(0.0..0.5);
            let pue = rng.random_range(1.0..1.5);
            let eta_cap = pue * (w_static / chi + w_dynamic);
            let power = PowerParams::new(pue, w_static, w_dynamic, eta_cap)?;
            NodeParams::new(format!("n{k}"), lambda, mu, rng.random_range(0.005..0.02), power)
        })
        .collect::<Result<Vec<_>>>()?;
    let rtt = rng.random_range(0.005..0.03);
    let cloud = rng.random_range(0.1..0.3);
    Scenario::fully_connected(nodes, rtt, cloud, 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(id: &str, x: f64) -> NodeRecord {
        NodeRecord {
            id: id.into(),
            x,
            y: 0.0,
            mu: 10.0,
            lambda: Some(5.0),
            distribution: None,
            tau_u: 0.01,
            pue: 1.0,
            w_static: 1.0,
            w_dynamic: 0.1,
            eta_cap: 0.3,
        }
    }

    fn pair(gap: f64) -> Topology {
        Topology {
            cloud_rtt: 0.1,
            deadline: 0.5,
            coop_radius: 500.0,
            inter_rtt: 0.02,
            policy: CoopPolicy::Radius,
            nodes: vec![record("a", 0.0), record("b", gap)],
        }
    }

    #[test]
    fn radius_geometry() {
        assert_eq!(pair(400.0).mask(CoopPolicy::Radius), vec![true; 4]);
        assert_eq!(pair(600.0).mask(CoopPolicy::Radius), vec![true, false, false, true]);
        let s = pair(400.0).to_scenario(CoopPolicy::Radius).unwrap();
        assert_eq!(s.inter_rtt(0, 1), 0.02);
        let s = pair(600.0).to_scenario(CoopPolicy::Radius).unwrap();
        assert_eq!(s.inter_rtt(0, 1), 0.0);
        assert!(!s.may_forward(0, 1));
    }

    #[test]
    fn nearest_links_closest_only() {
        let mut t = pair(100.0);
        t.nodes.push(record("c", 300.0));
        let m = t.mask(CoopPolicy::Nearest);
        // a <-> b and c -> b (and b <-> c by symmetry)
        assert!(m[1] && m[3]);
        assert!(!m[2] && !m[6]);
        assert!(m[5] && m[7]);
    }

    #[test]
    fn duplicate_ids_rejected() {
        let mut t = pair(10.0);
        t.nodes[1].id = "a".into();
        assert!(t.validate().is_err());
    }

    #[test]
    fn point_mass_and_determinism() {
        let d = EmpiricalDist::point_mass(3.5).unwrap();
        assert!(sample_arrivals(&d, 100, 1).iter().all(|v| *v == 3.5));
        let u = EmpiricalDist::new(vec![1.0, 2.0], vec![0.5, 0.5]).unwrap();
        assert_eq!(sample_arrivals(&u, 50, 9), sample_arrivals(&u, 50, 9));
        assert!(EmpiricalDist::new(vec![1.0], vec![0.9]).is_err());
        assert!(EmpiricalDist::new(vec![-1.0], vec![1.0]).is_err());
    }

    #[test]
    fn mm1_rejects_unstable() {
        assert!(matches!(mm1_simulate(10.0, 10.0, 10, 1), Err(FogError::Unstable { .. })));
        assert_eq!(mm1_simulate(5.0, 10.0, 1000, 3).unwrap(), mm1_simulate(5.0, 10.0, 1000, 3).unwrap());
    }

    #[test]
    fn city_capacity_is_400_frames() {
        let t = make_dublin_like(DensityProfile::Urban, 5, 1).unwrap();
        let s = t.to_scenario(CoopPolicy::Radius).unwrap();
        for n in s.nodes() {
            assert!((n.power().chi() - city::FRAME_CAPACITY).abs() < 1e-9);
            assert!((n.effective_capacity() - city::FRAME_CAPACITY).abs() < 1e-9);
        }
        assert_eq!(s.deadline(), 0.5);
    }

    #[test]
    fn rural_is_isolated() {
        let t = make_dublin_like(DensityProfile::Rural, 12, 4).unwrap();
        let n = t.len();
        for j in 0..n {
            for i in 0..n {
                if i != j {
                    assert!(t.distance(i, j) > city::COOP_RADIUS);
                }
            }
        }
        assert_eq!(t.mask(CoopPolicy::Radius), t.mask(CoopPolicy::None));
    }
}
