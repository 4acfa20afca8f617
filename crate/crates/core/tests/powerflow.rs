use num_complex::Complex64;
use proptest::prelude::*;

use lvtariff::domain::SLOTS_PER_DAY;
use lvtariff::powerflow::{
    run_timeseries, solve_snapshot, EdgeSpec, LoadPointSpec, Network, NetworkFile, Phase,
    SnapshotResult, SweepOptions,
};

const FEEDER: &str = include_str!("../fixtures/desk_feeder.json");

fn feeder_file() -> NetworkFile {
    serde_json::from_str(FEEDER).unwrap()
}

/// The desk feeder with a load point on every phase of every node.
fn three_phase_feeder() -> Network {
    let mut f = feeder_file();
    f.customers = (1..f.nodes.len())
        .flat_map(|n| {
            Phase::ALL.into_iter().map(move |phase| LoadPointSpec {
                id: format!("n{n}{phase:?}"),
                node: n,
                phase,
            })
        })
        .collect();
    Network::from_file(f).unwrap()
}

/// |V1| of a single-phase line feeding constant power P + jQ, from
/// v⁴ + (2(RP + XQ) − V0²)v² + |Z|²|S|² = 0.
fn two_bus_closed_form(v0: f64, r: f64, x: f64, p: f64, q: f64) -> f64 {
    let b = v0 * v0 - 2.0 * (r * p + x * q);
    let c = (r * r + x * x) * (p * p + q * q);
    ((b + (b * b - 4.0 * c).sqrt()) / 2.0).sqrt()
}

fn two_bus(r: f64, x: f64) -> Network {
    let m = |v: f64| -> Vec<Vec<f64>> {
        (0..3).map(|i| (0..3).map(|j| if i == j { v } else { 0.0 }).collect()).collect()
    };
    Network::from_file(NetworkFile {
        name: None,
        nodes: vec![0, 1],
        edges: vec![EdgeSpec {
            from: 0,
            to: 1,
            r: m(r),
            x: m(x),
            length_km: None,
        }],
        customers: vec![LoadPointSpec {
            id: "load".into(),
            node: 1,
            phase: Phase::A,
        }],
        head_rating_a: 100.0,
        v0_pu: 1.0,
        nominal_voltage_v: 230.0,
        base_kva: 100.0,
    })
    .unwrap()
}

/// Σ over branches of Jᴴ R J, computed from the currents alone.
fn i2r_losses(net: &Network, r: &SnapshotResult) -> f64 {
    net.branches
        .iter()
        .zip(&r.branch_currents)
        .map(|(b, j)| {
            let mut s = Complex64::new(0.0, 0.0);
            for p in 0..3 {
                for q in 0..3 {
                    s += j[p].conj() * b.z[p][q].re * j[q];
                }
            }
            s.re
        })
        .sum()
}

fn balance_residual_pu(net: &Network, r: &SnapshotResult, loads_kw: &[f64]) -> f64 {
    let slack = r.slack_power(net).re;
    let loads: f64 = loads_kw.iter().sum::<f64>() * 1000.0;
    (slack - loads - i2r_losses(net, r)).abs() / (net.base_kva * 1000.0)
}

#[test]
fn two_bus_matches_closed_form() {
    for (r, x, kw) in [(0.1, 0.05, 2.0), (0.3, 0.1, 7.5), (0.05, 0.2, -5.0)] {
        let net = two_bus(r, x);
        let s = solve_snapshot(&net, &[kw], &SweepOptions::default()).unwrap();
        assert!(s.converged);
        let oracle = two_bus_closed_form(230.0, r, x, kw * 1000.0, 0.0);
        let v1 = s.voltages[1][0].norm();
        assert!((v1 - oracle).abs() < 1e-6, "{v1} vs {oracle}");
    }
    let v = two_bus_closed_form(230.0, 0.1, 0.05, 2000.0, 0.0);
    assert!((v - 229.13).abs() < 0.005);
}

#[test]
fn doubling_light_load_slightly_more_than_doubles_head_current() {
    let net = Network::desk_feeder();
    let light: Vec<f64> = (0..net.load_points.len()).map(|k| 0.3 + 0.02 * k as f64).collect();
    let double: Vec<f64> = light.iter().map(|v| 2.0 * v).collect();
    let opts = SweepOptions::default();
    let a = solve_snapshot(&net, &light, &opts).unwrap();
    let b = solve_snapshot(&net, &double, &opts).unwrap();
    for p in 0..3 {
        let ratio = b.head_current[p] / a.head_current[p];
        assert!(ratio > 2.0 && ratio < 2.05, "phase {p}: {ratio}");
    }
}

#[test]
fn time_invariant_and_idle_years() {
    let net = Network::desk_feeder();
    let n = net.load_points.len();
    let days = 3;
    let constant: Vec<Vec<f64>> = (0..n).map(|k| vec![1.0 + 0.1 * k as f64; days * SLOTS_PER_DAY]).collect();
    let ts = run_timeseries(&net, 10, &constant, &SweepOptions::default()).unwrap();
    for t in 1..ts.slots {
        assert_eq!(ts.head_current[t], ts.head_current[0]);
        assert_eq!(ts.point_series(5)[t], ts.point_series(5)[0]);
    }
    let idle = vec![vec![0.0; 365 * SLOTS_PER_DAY]; n];
    let ts = run_timeseries(&net, 1, &idle, &SweepOptions::default()).unwrap();
    assert!(ts.head_current.iter().all(|&i| i == 0.0));
    assert!(ts.voltages_pu.iter().all(|&v| (v - net.v0_pu).abs() < 1e-12));
    assert!(ts.nonconverged.is_empty());
}

#[test]
fn malformed_inputs_rejected() {
    let net = Network::desk_feeder();
    assert!(solve_snapshot(&net, &[1.0], &SweepOptions::default()).is_err());
    let short = vec![vec![0.0; 47]; net.load_points.len()];
    assert!(run_timeseries(&net, 1, &short, &SweepOptions::default()).is_err());
    let mut f = feeder_file();
    f.edges[3].r[0][1] += 0.1;
    assert!(Network::from_file(f).is_err());
    let mut f = feeder_file();
    f.customers[0].node = 99;
    assert!(Network::from_file(f).is_err());
}

#[test]
fn nonconvergence_is_reported_not_fatal() {
    let net = Network::desk_feeder();
    let n = net.load_points.len();
    let mut inj = vec![vec![0.5; SLOTS_PER_DAY]; n];
    inj.iter_mut().for_each(|s| s[7] = 40.0);
    let opts = SweepOptions {
        tol_pu: 1e-12,
        max_iter: 2,
    };
    let ts = run_timeseries(&net, 5, &inj, &opts).unwrap();
    assert!(ts.nonconverged.contains(&(5, 8)));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn slack_power_covers_loads_and_losses(
        loads in prop::collection::vec(-6.0f64..6.0, 30)
    ) {
        let net = Network::desk_feeder();
        let r = solve_snapshot(&net, &loads, &SweepOptions::default()).unwrap();
        prop_assert!(r.converged);
        prop_assert!(balance_residual_pu(&net, &r, &loads) < 1e-6);
        prop_assert!(r.max_mismatch_pu < 1e-6);
    }

    #[test]
    fn balanced_loads_give_symmetric_phases_and_falling_voltage(
        per_node in prop::collection::vec(0.0f64..4.0, 30)
    ) {
        let net = three_phase_feeder();
        let loads: Vec<f64> = per_node.iter().flat_map(|&v| [v, v, v]).collect();
        let r = solve_snapshot(&net, &loads, &SweepOptions::default()).unwrap();
        prop_assert!(r.converged);
        for node in 0..net.n_nodes {
            let m: Vec<f64> = Phase::ALL.iter().map(|&p| r.voltage_pu(&net, node, p)).collect();
            prop_assert!((m[0] - m[1]).abs() < 1e-9 && (m[1] - m[2]).abs() < 1e-9);
        }
        for b in &net.branches {
            for p in Phase::ALL {
                prop_assert!(r.voltage_pu(&net, b.to, p) <= r.voltage_pu(&net, b.from, p) + 1e-12);
            }
        }
    }
}
