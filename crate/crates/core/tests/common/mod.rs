#![allow(dead_code)]

use fogopt::{Allocation, NodeParams, PowerParams, Scenario};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

/// Total cooperative response time written out from the model definition,
/// without going through the crate's evaluator. `None` on an unstable load.
pub fn objective_ref(s: &Scenario, a: &Allocation) -> Option<f64> {
    let n = s.len();
    let total: f64 = (0..n).map(|j| s.node(j).arrival_rate()).sum();
    let loads: Vec<f64> = (0..n).map(|i| (0..n).map(|j| a.get(j, i)).sum()).collect();
    let mut out = 0.0;
    for j in 0..n {
        let mut fog = 0.0;
        for i in 0..n {
            let x = a.get(j, i);
            if x == 0.0 {
                continue;
            }
            let mu = s.node(i).service_rate();
            if loads[i] >= mu {
                return None;
            }
            fog += x * (s.inter_rtt(j, i) + 1.0 / (mu - loads[i]));
        }
        out += s.node(j).user_rtt() + fog / total + a.cloud(j) * s.cloud_rtt() / s.node(j).arrival_rate();
    }
    Some(out)
}

/// Minimize `f` over the box `[lo, hi]` by a dense grid followed by
/// repeated zooming around the incumbent. `f` returns `None` off-domain.
pub fn grid_refine<F>(f: F, lo: &[f64], hi: &[f64], points: usize, rounds: usize) -> (Vec<f64>, f64)
where
    F: Fn(&[f64]) -> Option<f64>,
{
    let d = lo.len();
    let mut lo = lo.to_vec();
    let mut hi = hi.to_vec();
    let mut best: Option<(Vec<f64>, f64)> = None;
    for _ in 0..rounds {
        let total = points.pow(d as u32);
        let mut x = vec![0.0; d];
        for k in 0..total {
            let mut rem = k;
            for c in 0..d {
                let idx = rem % points;
                rem /= points;
                x[c] = lo[c] + (hi[c] - lo[c]) * idx as f64 / (points - 1) as f64;
            }
            if let Some(v) = f(&x) {
                if best.as_ref().is_none_or(|(_, b)| v < *b) {
                    best = Some((x.clone(), v));
                }
            }
        }
        let Some((centre, _)) = &best else { break };
        for c in 0..d {
            let half = (hi[c] - lo[c]) / (points - 1) as f64 * 3.0;
            let (l, h) = (lo[c], hi[c]);
            lo[c] = (centre[c] - half).max(l);
            hi[c] = (centre[c] + half).min(h);
        }
    }
    best.expect("grid found no feasible point")
}

pub fn power_for_chi(chi: f64, rng: &mut impl Rng) -> PowerParams {
    let pue = rng.random_range(1.0..1.6);
    let w_static = rng.random_range(1.0..10.0);
    let w_dynamic = rng.random_range(0.0..0.5);
    let eta = pue * (w_static / chi + w_dynamic);
    PowerParams::new(pue, w_static, w_dynamic, eta).unwrap()
}

/// Node with `mu` in [5, 50), load factor in [0.1, 1.5) and chi anywhere
/// from a small fraction of `mu` to well above it.
pub fn random_node(rng: &mut impl Rng, id: usize) -> NodeParams {
    let mu = rng.random_range(5.0..50.0);
    let lambda = rng.random_range(0.1..1.5) * mu;
    let chi = rng.random_range(0.05..2.0) * mu;
    let tau_u = rng.random_range(0.0..0.05);
    NodeParams::new(format!("n{id}"), lambda, mu, tau_u, power_for_chi(chi, rng)).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// The random instances used by the solver comparisons: `N = 2 + seed % 9`.
pub fn desk_cases(count: u64) -> Vec<Scenario> {
    (0..count)
        .map(|seed| fogopt::scenario::random_desk_scenario(2 + (seed as usize % 9), seed).unwrap())
        .collect()
}

fn golden_point(f: &mut dyn FnMut(f64) -> (f64, Vec<f64>), lo: f64, hi: f64, iters: usize) -> (f64, Vec<f64>) {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..iters {
        if fc.0 <= fd.0 {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    [f(lo), f(hi), fc, fd]
        .into_iter()
        .min_by(|x, y| x.0.total_cmp(&y.0))
        .unwrap()
}

/// Minimize a convex `f` over `{x : 0 <= x_k <= upper(x_0..x_{k-1})}` by
/// nested golden-section search. Partial minimization of a convex function
/// over a convex set stays convex, so every level is unimodal. `f` returns
/// `None` off-domain.
pub fn nested_golden<F, U>(f: &F, upper: &U, dim: usize, iters: usize) -> (Vec<f64>, f64)
where
    F: Fn(&[f64]) -> Option<f64>,
    U: Fn(&[f64]) -> f64,
{
    fn level<F, U>(f: &F, upper: &U, prefix: &mut Vec<f64>, dim: usize, iters: usize) -> (f64, Vec<f64>)
    where
        F: Fn(&[f64]) -> Option<f64>,
        U: Fn(&[f64]) -> f64,
    {
        if prefix.len() == dim {
            return (f(prefix).unwrap_or(f64::INFINITY), prefix.clone());
        }
        let hi = upper(prefix).max(0.0);
        golden_point(
            &mut |x| {
                prefix.push(x);
                let out = level(f, upper, prefix, dim, iters);
                prefix.pop();
                out
            },
            0.0,
            hi,
            iters,
        )
    }
    let (v, x) = level(f, upper, &mut Vec::with_capacity(dim), dim, iters);
    (x, v)
}
