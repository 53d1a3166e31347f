//! Euclidean projections onto the polyhedra used by the solvers.

/// Project `v` onto `{x >= 0, sum(x) = total}`. `total` must be >= 0.
pub fn project_simplex(v: &[f64], total: f64) -> Vec<f64> {
    if v.is_empty() {
        return Vec::new();
    }
    if total <= 0.0 {
        return vec![0.0; v.len()];
    }
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (k, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let t = (cumsum - total) / (k + 1) as f64;
        if u - t > 0.0 {
            theta = t;
        } else {
            break;
        }
    }
    let mut x: Vec<f64> = v.iter().map(|&x| (x - theta).max(0.0)).collect();
    restore_sum(&mut x, None, total);
    x
}

/// Spread the rounding error in `sum(x) - target` over the entries strictly
/// inside their bounds. Large inputs lose absolute precision in `v - theta`.
fn restore_sum(x: &mut [f64], hi: Option<&[f64]>, target: f64) {
    for _ in 0..3 {
        let excess = x.iter().sum::<f64>() - target;
        if excess == 0.0 {
            return;
        }
        let upper = |k: usize| hi.map_or(f64::INFINITY, |h| h[k]);
        let free: Vec<usize> = (0..x.len())
            .filter(|&k| x[k] > 0.0 && x[k] < upper(k))
            .collect();
        if free.is_empty() {
            return;
        }
        let share = excess / free.len() as f64;
        for k in free {
            x[k] = (x[k] - share).clamp(0.0, upper(k));
        }
    }
}

/// Project `v` onto `{x >= 0, sum(x) <= cap}`.
pub fn project_capped_simplex(v: &[f64], cap: f64) -> Vec<f64> {
    let clipped: Vec<f64> = v.iter().map(|x| x.max(0.0)).collect();
    if clipped.iter().sum::<f64>() <= cap {
        clipped
    } else {
        project_simplex(v, cap)
    }
}

/// Project `v` onto `{lo <= x <= hi, sum(x) <= cap}` with `lo = 0`.
///
/// When the clipped point exceeds the budget, the result is
/// `clip(v - theta, 0, hi)` with `theta` solving the budget equation; the
/// budget function is piecewise linear in `theta`, so it is solved exactly
/// between consecutive breakpoints.
pub fn project_box_budget(v: &[f64], hi: &[f64], cap: f64) -> Vec<f64> {
    debug_assert_eq!(v.len(), hi.len());
    let clip = |theta: f64| -> Vec<f64> {
        v.iter()
            .zip(hi)
            .map(|(&x, &h)| (x - theta).clamp(0.0, h))
            .collect()
    };
    let at_zero = clip(0.0);
    if at_zero.iter().sum::<f64>() <= cap {
        return at_zero;
    }
    let cap = cap.max(0.0);
    let budget = |theta: f64| -> f64 {
        v.iter()
            .zip(hi)
            .map(|(&x, &h)| (x - theta).clamp(0.0, h))
            .sum()
    };
    let mut breaks: Vec<f64> = v
        .iter()
        .zip(hi)
        .flat_map(|(&x, &h)| [x - h, x])
        .filter(|&t| t > 0.0)
        .collect();
    breaks.push(0.0);
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    // budget is nonincreasing; find the segment [a, b] with budget(a) >= cap >= budget(b)
    let mut lo = 0.0;
    let mut f_lo = budget(lo);
    for &b in &breaks {
        if b <= lo {
            continue;
        }
        let f_b = budget(b);
        if f_b <= cap {
            let theta = if f_lo == f_b {
                b
            } else {
                lo + (f_lo - cap) * (b - lo) / (f_lo - f_b)
            };
            let mut x = clip(theta);
            restore_sum(&mut x, Some(hi), cap);
            return x;
        }
        lo = b;
        f_lo = f_b;
    }
    vec![0.0; v.len()]
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn simplex_examples() {
        assert_eq!(project_simplex(&[2.0, 2.0], 1.0), vec![0.5, 0.5]);
        assert_eq!(project_simplex(&[0.2, 0.8], 1.0), vec![0.2, 0.8]);
        assert_eq!(project_simplex(&[5.0, -3.0], 1.0), vec![1.0, 0.0]);
        assert_eq!(project_simplex(&[1.0, 1.0], 0.0), vec![0.0, 0.0]);
    }

    #[test]
    fn box_budget_examples() {
        assert_eq!(project_box_budget(&[0.5, 0.5], &[1.0, 1.0], 2.0), vec![0.5, 0.5]);
        assert_eq!(project_box_budget(&[3.0, -1.0], &[1.0, 1.0], 2.0), vec![1.0, 0.0]);
        let p = project_box_budget(&[3.0, 3.0, 0.5], &[1.0, 5.0, 1.0], 2.0);
        assert!((p.iter().sum::<f64>() - 2.0).abs() < 1e-12);
        assert!((p[0] - 1.0).abs() < 1e-12);
    }

    fn dist2(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
    }

    proptest! {
        // optimality: no random feasible point is closer than the projection
        #[test]
        fn box_budget_is_nearest(
            v in prop::collection::vec(-3.0f64..6.0, 1..6),
            cap in 0.1f64..8.0,
            seeds in prop::collection::vec(0.0f64..1.0, 30),
        ) {
            let hi: Vec<f64> = v.iter().enumerate().map(|(k, _)| 1.0 + k as f64).collect();
            let p = project_box_budget(&v, &hi, cap);
            prop_assert!(p.iter().sum::<f64>() <= cap + 1e-9);
            for (x, h) in p.iter().zip(&hi) {
                prop_assert!(*x >= 0.0 && *x <= *h + 1e-12);
            }
            let d = dist2(&p, &v);
            for w in seeds.chunks(1) {
                // random feasible point: scaled box point
                let q: Vec<f64> = hi.iter().enumerate()
                    .map(|(k, h)| h * ((w[0] + 0.37 * k as f64) % 1.0)).collect();
                let s: f64 = q.iter().sum();
                let scale = if s > cap { cap / s } else { 1.0 };
                let q: Vec<f64> = q.iter().map(|x| x * scale).collect();
                prop_assert!(dist2(&q, &v) >= d - 1e-9);
                // convex combination toward the feasible point never gets closer
                let mid: Vec<f64> = p.iter().zip(&q).map(|(a, b)| 0.9 * a + 0.1 * b).collect();
                prop_assert!(dist2(&mid, &v) >= d - 1e-9);
            }
        }

        #[test]
        fn simplex_sums_to_total(v in prop::collection::vec(-5.0f64..5.0, 1..8), total in 0.0f64..10.0) {
            let p = project_simplex(&v, total);
            prop_assert!((p.iter().sum::<f64>() - total).abs() <= 1e-12 * (1.0 + total));
            prop_assert!(p.iter().all(|x| *x >= 0.0));
        }
    }
}
