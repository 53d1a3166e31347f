use std::path::Path;

use fogopt::scenario::{
    load_scenario, make_dublin_like, mm1_simulate, random_desk_scenario, sample_arrivals, CoopPolicy, DensityProfile,
    EmpiricalDist, Topology,
};
use proptest::prelude::*;

fn fixture(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

#[test]
fn fixture_loads_and_resolves_distribution() {
    let topo = Topology::load(&fixture("n6.json")).unwrap();
    assert_eq!(topo.len(), 6);
    let frames = EmpiricalDist::from_csv(&fixture("camera_frames.csv")).unwrap();
    // 30*.1 + 40*.25 + 50*.3 + 60*.2 + 70*.15
    assert!((frames.mean() - 50.5).abs() < 1e-12);
    assert_eq!(topo.nodes[0].lambda, Some(frames.mean()));
    let s = load_scenario(&fixture("n6.json")).unwrap();
    assert_eq!(s.len(), 6);
}

#[test]
fn topology_roundtrips_through_json() {
    let dir = tempfile::tempdir().unwrap();
    for profile in [DensityProfile::Urban, DensityProfile::Rural] {
        let topo = make_dublin_like(profile, 12, 4).unwrap();
        let path = dir.path().join("t.json");
        topo.save(&path).unwrap();
        let back = Topology::load(&path).unwrap();
        assert_eq!(back, topo);
        let a = topo.to_scenario(CoopPolicy::Radius).unwrap();
        let b = back.to_scenario(CoopPolicy::Radius).unwrap();
        assert_eq!(format!("{a:?}"), format!("{b:?}"));
    }
}

#[test]
fn malformed_topologies_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    let good = std::fs::read_to_string(fixture("n6.json")).unwrap();
    for bad in [
        good.replace("\"cloud_rtt\"", "\"cloud_rtt_typo\""),
        good.replacen("\"bridge\"", "\"quay\"", 1),
        "{".to_string(),
    ] {
        std::fs::write(&path, bad).unwrap();
        assert!(matches!(Topology::load(&path), Err(fogopt::FogError::Scenario { .. })));
    }
}

#[test]
fn uniform_two_point_sample_frequencies() {
    let d = EmpiricalDist::new(vec![1.0, 2.0], vec![0.5, 0.5]).unwrap();
    let draws = sample_arrivals(&d, 100_000, 17);
    let ones = draws.iter().filter(|&&x| x == 1.0).count() as f64 / draws.len() as f64;
    assert!((ones - 0.5).abs() <= 0.02, "frequency {ones}");
    assert!(draws.iter().all(|&x| x == 1.0 || x == 2.0));
}

#[test]
fn camera_sample_mean_is_close() {
    let d = EmpiricalDist::from_csv(&fixture("camera_frames.csv")).unwrap();
    let draws = sample_arrivals(&d, 50_000, 3);
    let mean = draws.iter().sum::<f64>() / draws.len() as f64;
    assert!((mean - d.mean()).abs() / d.mean() < 0.01);
    assert_eq!(draws, sample_arrivals(&d, 50_000, 3));
}

#[test]
fn mm1_is_seeded_and_accurate() {
    for (lambda, mu) in [(2.0, 5.0), (4.0, 5.0), (30.0, 40.0)] {
        let a = mm1_simulate(lambda, mu, 100_000, 9).unwrap();
        assert_eq!(a.to_bits(), mm1_simulate(lambda, mu, 100_000, 9).unwrap().to_bits());
        let exact = 1.0 / (mu - lambda);
        assert!((a - exact).abs() / exact < 0.05, "lambda {lambda}, mu {mu}: {a} vs {exact}");
    }
}

#[test]
fn generators_are_deterministic() {
    for profile in [DensityProfile::Urban, DensityProfile::Rural] {
        assert_eq!(make_dublin_like(profile, 20, 8).unwrap(), make_dublin_like(profile, 20, 8).unwrap());
    }
    let a = random_desk_scenario(6, 2).unwrap();
    let b = random_desk_scenario(6, 2).unwrap();
    assert_eq!(format!("{a:?}"), format!("{b:?}"));
    let c = random_desk_scenario(6, 3).unwrap();
    assert_ne!(format!("{a:?}"), format!("{c:?}"));
}

#[test]
fn single_node_topology_is_degenerate_but_valid() {
    let topo = make_dublin_like(DensityProfile::Urban, 1, 0).unwrap();
    for policy in [CoopPolicy::Radius, CoopPolicy::Nearest, CoopPolicy::None] {
        assert_eq!(topo.mask(policy), vec![true]);
        let s = topo.to_scenario(policy).unwrap();
        assert_eq!(s.len(), 1);
    }
}

#[test]
fn nearest_is_a_subset_of_radius() {
    for seed in 0..5 {
        let topo = make_dublin_like(DensityProfile::Urban, 20, seed).unwrap();
        let nn = topo.mask(CoopPolicy::Nearest);
        let radius = topo.mask(CoopPolicy::Radius);
        let none = topo.mask(CoopPolicy::None);
        for k in 0..nn.len() {
            assert!(!none[k] || nn[k]);
            assert!(!nn[k] || radius[k]);
        }
    }
}

proptest! {
    #[test]
    fn masks_are_symmetric_with_unit_diagonal(seed in 0u64..500, n in 1usize..25, urban in any::<bool>()) {
        let profile = if urban { DensityProfile::Urban } else { DensityProfile::Rural };
        let topo = make_dublin_like(profile, n, seed).unwrap();
        for policy in [CoopPolicy::Radius, CoopPolicy::Nearest, CoopPolicy::None] {
            let m = topo.mask(policy);
            for j in 0..n {
                prop_assert!(m[j * n + j]);
                for i in 0..n {
                    prop_assert_eq!(m[j * n + i], m[i * n + j]);
                }
            }
        }
    }
}
