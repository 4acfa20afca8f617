//! Unbalanced three-phase power flow on radial feeders by backward/forward
//! sweep, a half-hourly time-series driver and the voltage and thermal
//! problem detectors.

use std::collections::{BTreeSet, VecDeque};
use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::SLOTS_PER_DAY;

pub type PhaseMatrix = [[Complex64; 3]; 3];
pub type PhaseVector = [Complex64; 3];

/// Voltage band, pu.
pub const V_LOW: f64 = 0.95;
pub const V_HIGH: f64 = 1.05;
/// Share of days a customer may spend outside the band before it counts as a
/// voltage problem.
pub const VIOLATION_DAY_SHARE: f64 = 0.05;

#[derive(Debug, Error)]
pub enum PowerflowError {
    #[error("network: {0}")]
    Topology(String),
    #[error("network: branch {from}-{to}: {reason}")]
    Impedance {
        from: usize,
        to: usize,
        reason: String,
    },
    #[error("network: {0}")]
    LoadPoint(String),
    #[error("expected {expected} injection series, got {got}")]
    InjectionCount { expected: usize, got: usize },
    #[error("injection series must have equal lengths covering whole days")]
    InjectionLength,
    #[error("injection {value} kW at load point {point} is not finite")]
    InjectionValue { point: usize, value: f64 },
    #[error("empty current series")]
    EmptySeries,
    #[error("rating must be positive, got {0}")]
    Rating(f64),
    #[error("network file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("results file: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    A,
    B,
    C,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::A, Phase::B, Phase::C];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Series impedance as given in a network file: 3×3 phase or 4×4
/// phase-plus-neutral matrices, in Ω or Ω/km when a length is present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeSpec {
    pub from: usize,
    pub to: usize,
    pub r: Vec<Vec<f64>>,
    pub x: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length_km: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadPointSpec {
    pub id: String,
    pub node: usize,
    pub phase: Phase,
}

fn default_nominal() -> f64 {
    230.0
}

fn default_base_kva() -> f64 {
    100.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkFile {
    #[serde(default)]
    pub name: Option<String>,
    pub nodes: Vec<usize>,
    pub edges: Vec<EdgeSpec>,
    pub customers: Vec<LoadPointSpec>,
    pub head_rating_a: f64,
    pub v0_pu: f64,
    /// Line-to-neutral, V.
    #[serde(default = "default_nominal")]
    pub nominal_voltage_v: f64,
    /// Three-phase base power for per-unit mismatch figures, kVA.
    #[serde(default = "default_base_kva")]
    pub base_kva: f64,
}

/// A branch oriented away from the slack.
#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub from: usize,
    pub to: usize,
    pub z: PhaseMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadPoint {
    pub id: String,
    pub node: usize,
    pub phase: Phase,
}

/// A validated radial feeder. Node 0 is the slack; branches are stored in
/// breadth-first order so every branch follows the one feeding it.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub name: String,
    pub n_nodes: usize,
    pub branches: Vec<Branch>,
    pub load_points: Vec<LoadPoint>,
    pub head_rating: f64,
    pub nominal_voltage: f64,
    pub v0_pu: f64,
    pub base_kva: f64,
    /// Branch feeding each node; `None` for the slack.
    parent: Vec<Option<usize>>,
    head: usize,
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn kron(r: &[Vec<f64>], x: &[Vec<f64>]) -> PhaseMatrix {
    let z = |i: usize, j: usize| c(r[i][j], x[i][j]);
    let mut out = [[c(0.0, 0.0); 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = if r.len() == 4 {
                z(i, j) - z(i, 3) * z(3, j) / z(3, 3)
            } else {
                z(i, j)
            };
        }
    }
    out
}

fn positive_definite(m: &[[f64; 3]; 3]) -> bool {
    let mut l = [[0.0f64; 3]; 3];
    for i in 0..3 {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                let d = m[i][i] - s;
                if d <= 0.0 {
                    return false;
                }
                l[i][i] = d.sqrt();
            } else {
                l[i][j] = (m[i][j] - s) / l[j][j];
            }
        }
    }
    true
}

fn branch_impedance(e: &EdgeSpec) -> Result<PhaseMatrix, PowerflowError> {
    let bad = |reason: &str| PowerflowError::Impedance {
        from: e.from,
        to: e.to,
        reason: reason.into(),
    };
    let n = e.r.len();
    if !(n == 3 || n == 4) || e.x.len() != n || e.r.iter().chain(&e.x).any(|row| row.len() != n) {
        return Err(bad("R and X must both be 3x3 or 4x4"));
    }
    if e.r.iter().chain(&e.x).flatten().any(|v| !v.is_finite()) {
        return Err(bad("non-finite impedance"));
    }
    for i in 0..n {
        for j in 0..n {
            if (e.r[i][j] - e.r[j][i]).abs() > 1e-12 || (e.x[i][j] - e.x[j][i]).abs() > 1e-12 {
                return Err(bad("impedance matrices must be symmetric"));
            }
        }
    }
    let scale = match e.length_km {
        Some(l) if l > 0.0 && l.is_finite() => l,
        Some(_) => return Err(bad("length must be positive")),
        None => 1.0,
    };
    let mut z = kron(&e.r, &e.x);
    z.iter_mut().flatten().for_each(|v| *v *= scale);
    let re = z.map(|row| row.map(|v| v.re));
    if !positive_definite(&re) {
        return Err(bad("resistance matrix must be positive definite"));
    }
    Ok(z)
}

impl Network {
    pub fn from_file(f: NetworkFile) -> Result<Self, PowerflowError> {
        let n = f.nodes.len();
        let ids: BTreeSet<usize> = f.nodes.iter().copied().collect();
        if n == 0 || ids.len() != n || ids.iter().next_back() != Some(&(n - 1)) {
            return Err(PowerflowError::Topology(
                "nodes must be the distinct integers 0..n-1".into(),
            ));
        }
        if f.edges.len() + 1 != n {
            return Err(PowerflowError::Topology(format!(
                "{} edges for {n} nodes; a radial feeder needs {}",
                f.edges.len(),
                n - 1
            )));
        }
        for (what, v) in [
            ("head rating", f.head_rating_a),
            ("v0_pu", f.v0_pu),
            ("nominal voltage", f.nominal_voltage_v),
            ("base power", f.base_kva),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(PowerflowError::Topology(format!("{what} must be positive")));
            }
        }
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (k, e) in f.edges.iter().enumerate() {
            if e.from >= n || e.to >= n || e.from == e.to {
                return Err(PowerflowError::Topology(format!(
                    "edge {}-{} does not join two distinct nodes",
                    e.from, e.to
                )));
            }
            adj[e.from].push(k);
            adj[e.to].push(k);
        }
        if adj[0].len() != 1 {
            return Err(PowerflowError::Topology(
                "the slack must feed exactly one head branch".into(),
            ));
        }
        let mut parent = vec![None; n];
        let mut seen = vec![false; n];
        let mut branches = Vec::with_capacity(n - 1);
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(u) = queue.pop_front() {
            for &k in &adj[u] {
                let e = &f.edges[k];
                let v = if e.from == u { e.to } else { e.from };
                if seen[v] {
                    continue;
                }
                seen[v] = true;
                parent[v] = Some(branches.len());
                branches.push(Branch {
                    from: u,
                    to: v,
                    z: branch_impedance(e)?,
                });
                queue.push_back(v);
            }
        }
        if let Some(v) = seen.iter().position(|s| !s) {
            return Err(PowerflowError::Topology(format!("node {v} is not connected to the slack")));
        }
        let mut used = BTreeSet::new();
        let mut load_points = Vec::with_capacity(f.customers.len());
        for lp in f.customers {
            if lp.node == 0 || lp.node >= n {
                return Err(PowerflowError::LoadPoint(format!(
                    "`{}` must sit on a non-slack node",
                    lp.id
                )));
            }
            if !used.insert(lp.id.clone()) {
                return Err(PowerflowError::LoadPoint(format!("`{}` appears twice", lp.id)));
            }
            load_points.push(LoadPoint {
                id: lp.id,
                node: lp.node,
                phase: lp.phase,
            });
        }
        Ok(Self {
            name: f.name.unwrap_or_default(),
            n_nodes: n,
            branches,
            load_points,
            head_rating: f.head_rating_a,
            nominal_voltage: f.nominal_voltage_v,
            v0_pu: f.v0_pu,
            base_kva: f.base_kva,
            parent,
            head: 0,
        })
    }

    pub fn from_json_str(s: &str) -> Result<Self, PowerflowError> {
        Self::from_file(serde_json::from_str(s)?)
    }

    pub fn from_path(path: &Path) -> Result<Self, PowerflowError> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    /// Desk-scale feeder shipped with the crate: 30 single-phase customers
    /// on a 31-node four-wire feeder.
    pub fn desk_feeder() -> Self {
        Self::from_json_str(include_str!("../fixtures/desk_feeder.json"))
            .expect("bundled feeder is valid")
    }

    pub fn head_branch(&self) -> &Branch {
        &self.branches[self.head]
    }

    pub fn parent_branch(&self, node: usize) -> Option<usize> {
        self.parent[node]
    }

    /// Slack phase voltages, V.
    pub fn slack_voltage(&self) -> PhaseVector {
        let v = self.v0_pu * self.nominal_voltage;
        let a = Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI / 3.0);
        [c(v, 0.0), a * v, a * a * v]
    }

    /// Base power per phase, VA.
    fn phase_base_va(&self) -> f64 {
        self.base_kva * 1000.0 / 3.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    /// Largest voltage change between iterations at convergence, pu.
    pub tol_pu: f64,
    pub max_iter: usize,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            tol_pu: 1e-9,
            max_iter: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotResult {
    /// Per node, V.
    pub voltages: Vec<PhaseVector>,
    /// Per branch in network order, flowing away from the slack, A.
    pub branch_currents: Vec<PhaseVector>,
    /// Head current magnitude per phase, A.
    pub head_current: [f64; 3],
    pub converged: bool,
    pub iterations: usize,
    /// Largest gap between specified and realized load power, pu of the
    /// per-phase base.
    pub max_mismatch_pu: f64,
}

impl SnapshotResult {
    pub fn voltage_pu(&self, net: &Network, node: usize, phase: Phase) -> f64 {
        self.voltages[node][phase.index()].norm() / net.nominal_voltage
    }

    pub fn head_current_max(&self) -> f64 {
        self.head_current.iter().copied().fold(0.0, f64::max)
    }

    /// Complex power delivered by the slack, VA.
    pub fn slack_power(&self, net: &Network) -> Complex64 {
        let v = self.voltages[0];
        let i = self.branch_currents[net.head];
        (0..3).map(|p| v[p] * i[p].conj()).sum()
    }

    /// Complex series losses summed over branches, VA.
    pub fn losses(&self, net: &Network) -> Complex64 {
        net.branches
            .iter()
            .zip(&self.branch_currents)
            .map(|(b, i)| {
                (0..3)
                    .map(|p| (self.voltages[b.from][p] - self.voltages[b.to][p]) * i[p].conj())
                    .sum::<Complex64>()
            })
            .sum()
    }
}

fn per_node_load(net: &Network, injections_kw: &[f64]) -> Vec<[f64; 3]> {
    let mut p = vec![[0.0; 3]; net.n_nodes];
    for (lp, &kw) in net.load_points.iter().zip(injections_kw) {
        p[lp.node][lp.phase.index()] += kw * 1000.0;
    }
    p
}

fn sweep(net: &Network, load_w: &[[f64; 3]], opts: &SweepOptions) -> SnapshotResult {
    let n = net.n_nodes;
    let slack = net.slack_voltage();
    let mut v = vec![slack; n];
    let mut j = vec![[c(0.0, 0.0); 3]; net.branches.len()];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        let mut node_i: Vec<PhaseVector> = (0..n)
            .map(|k| {
                let mut out = [c(0.0, 0.0); 3];
                for p in 0..3 {
                    if load_w[k][p] != 0.0 {
                        out[p] = (c(load_w[k][p], 0.0) / v[k][p]).conj();
                    }
                }
                out
            })
            .collect();
        for (b, br) in net.branches.iter().enumerate().rev() {
            j[b] = node_i[br.to];
            for p in 0..3 {
                node_i[br.from][p] += j[b][p];
            }
        }
        let mut dv: f64 = 0.0;
        for (b, br) in net.branches.iter().enumerate() {
            let mut next = v[br.from];
            for (p, nv) in next.iter_mut().enumerate() {
                for q in 0..3 {
                    *nv -= br.z[p][q] * j[b][q];
                }
            }
            for p in 0..3 {
                dv = dv.max((next[p] - v[br.to][p]).norm());
            }
            v[br.to] = next;
        }
        if dv / net.nominal_voltage <= opts.tol_pu {
            converged = true;
            break;
        }
    }
    let mismatch = load_mismatch(net, load_w, &v, &j) / net.phase_base_va();
    let head = j[net.head];
    SnapshotResult {
        voltages: v,
        branch_currents: j,
        head_current: head.map(|i| i.norm()),
        converged,
        iterations,
        max_mismatch_pu: mismatch,
    }
}

/// Largest |V·I* − S| over loaded node phases, with the load current taken
/// from the branch currents by Kirchhoff's current law.
fn load_mismatch(net: &Network, load_w: &[[f64; 3]], v: &[PhaseVector], j: &[PhaseVector]) -> f64 {
    let mut drawn = vec![[c(0.0, 0.0); 3]; net.n_nodes];
    for (b, br) in net.branches.iter().enumerate() {
        for p in 0..3 {
            drawn[br.to][p] += j[b][p];
            drawn[br.from][p] -= j[b][p];
        }
    }
    let mut worst: f64 = 0.0;
    for k in 1..net.n_nodes {
        for p in 0..3 {
            let s = v[k][p] * drawn[k][p].conj();
            worst = worst.max((s - c(load_w[k][p], 0.0)).norm());
        }
    }
    worst
}

fn check_injections(net: &Network, injections_kw: &[f64]) -> Result<(), PowerflowError> {
    if injections_kw.len() != net.load_points.len() {
        return Err(PowerflowError::InjectionCount {
            expected: net.load_points.len(),
            got: injections_kw.len(),
        });
    }
    if let Some((point, &value)) = injections_kw.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(PowerflowError::InjectionValue { point, value });
    }
    Ok(())
}

/// Solve one snapshot. `injections_kw` holds the net demand of each load
/// point in network order; negative values are exports.
pub fn solve_snapshot(
    net: &Network,
    injections_kw: &[f64],
    opts: &SweepOptions,
) -> Result<SnapshotResult, PowerflowError> {
    check_injections(net, injections_kw)?;
    Ok(sweep(net, &per_node_load(net, injections_kw), opts))
}

/// Columnar results of a run of half-hourly snapshots.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeseriesResult {
    pub start_day: usize,
    pub slots: usize,
    pub n_points: usize,
    /// Load-point voltage magnitudes, pu, indexed `slot * n_points + point`.
    pub voltages_pu: Vec<f64>,
    /// Head current per slot and phase, A.
    pub head_phase_current: Vec<[f64; 3]>,
    /// Largest phase head current per slot, A.
    pub head_current: Vec<f64>,
    /// (day, slot) of every snapshot that did not converge, 1-based slot.
    pub nonconverged: Vec<(usize, usize)>,
    /// Largest mismatch over converged snapshots, pu.
    pub max_mismatch_pu: f64,
}

impl TimeseriesResult {
    pub fn days(&self) -> usize {
        self.slots / SLOTS_PER_DAY
    }

    pub fn voltage(&self, slot: usize, point: usize) -> f64 {
        self.voltages_pu[slot * self.n_points + point]
    }

    /// Per-point series, useful for plotting.
    pub fn point_series(&self, point: usize) -> Vec<f64> {
        (0..self.slots).map(|s| self.voltage(s, point)).collect()
    }
}

/// Solve every slot of `injections_kw` (one equal-length series per load
/// point, whole days from `start_day`). Slots are solved in parallel and
/// collected in time order.
pub fn run_timeseries(
    net: &Network,
    start_day: usize,
    injections_kw: &[Vec<f64>],
    opts: &SweepOptions,
) -> Result<TimeseriesResult, PowerflowError> {
    let n_points = net.load_points.len();
    if injections_kw.len() != n_points {
        return Err(PowerflowError::InjectionCount {
            expected: n_points,
            got: injections_kw.len(),
        });
    }
    let slots = injections_kw.first().map_or(0, Vec::len);
    if slots == 0 || !slots.is_multiple_of(SLOTS_PER_DAY) || injections_kw.iter().any(|s| s.len() != slots) {
        return Err(PowerflowError::InjectionLength);
    }
    for (point, series) in injections_kw.iter().enumerate() {
        if let Some(&value) = series.iter().find(|v| !v.is_finite()) {
            return Err(PowerflowError::InjectionValue { point, value });
        }
    }
    let snapshots: Vec<(Vec<f64>, [f64; 3], bool, f64)> = (0..slots)
        .into_par_iter()
        .map(|t| {
            let inj: Vec<f64> = injections_kw.iter().map(|s| s[t]).collect();
            let r = sweep(net, &per_node_load(net, &inj), opts);
            let v = net
                .load_points
                .iter()
                .map(|lp| r.voltage_pu(net, lp.node, lp.phase))
                .collect();
            (v, r.head_current, r.converged, r.max_mismatch_pu)
        })
        .collect();
    let mut out = TimeseriesResult {
        start_day,
        slots,
        n_points,
        voltages_pu: Vec::with_capacity(slots * n_points),
        head_phase_current: Vec::with_capacity(slots),
        head_current: Vec::with_capacity(slots),
        nonconverged: Vec::new(),
        max_mismatch_pu: 0.0,
    };
    for (t, (v, head, converged, mismatch)) in snapshots.into_iter().enumerate() {
        out.voltages_pu.extend(v);
        out.head_phase_current.push(head);
        out.head_current.push(head.iter().copied().fold(0.0, f64::max));
        if converged {
            out.max_mismatch_pu = out.max_mismatch_pu.max(mismatch);
        } else {
            out.nonconverged
                .push((start_day + t / SLOTS_PER_DAY, t % SLOTS_PER_DAY + 1));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VoltageReport {
    pub violating_days: Vec<usize>,
    pub flagged: Vec<bool>,
}

impl VoltageReport {
    pub fn flagged_share(&self) -> f64 {
        if self.flagged.is_empty() {
            return 0.0;
        }
        self.flagged.iter().filter(|&&f| f).count() as f64 / self.flagged.len() as f64
    }
}

/// Count days with any slot outside the band per load point; a point is
/// flagged when those days exceed 5% of the days covered (19 of 365).
pub fn detect_voltage_problems(ts: &TimeseriesResult) -> VoltageReport {
    let days = ts.days();
    let mut violating_days = vec![0usize; ts.n_points];
    for d in 0..days {
        for (c, count) in violating_days.iter_mut().enumerate() {
            let bad = (d * SLOTS_PER_DAY..(d + 1) * SLOTS_PER_DAY).any(|s| {
                let v = ts.voltage(s, c);
                !(V_LOW..=V_HIGH).contains(&v)
            });
            if bad {
                *count += 1;
            }
        }
    }
    let limit = VIOLATION_DAY_SHARE * days as f64;
    let flagged = violating_days.iter().map(|&n| n as f64 > limit).collect();
    VoltageReport {
        violating_days,
        flagged,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThermalReport {
    pub overloaded: bool,
    pub worst: f64,
    pub slots_over: usize,
}

pub fn detect_thermal_overload(head_current: &[f64], rating: f64) -> Result<ThermalReport, PowerflowError> {
    if head_current.is_empty() {
        return Err(PowerflowError::EmptySeries);
    }
    if !(rating > 0.0 && rating.is_finite()) {
        return Err(PowerflowError::Rating(rating));
    }
    let worst = head_current.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let slots_over = head_current.iter().filter(|&&i| i > rating).count();
    Ok(ThermalReport {
        overloaded: slots_over > 0,
        worst,
        slots_over,
    })
}

/// Columnar CSV: day, slot, head current per phase and its maximum, then one
/// voltage column per load point.
pub fn write_timeseries_csv<W: std::io::Write>(
    out: W,
    net: &Network,
    ts: &TimeseriesResult,
) -> Result<(), PowerflowError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec![
        "day".to_string(),
        "slot".into(),
        "head_a_a".into(),
        "head_b_a".into(),
        "head_c_a".into(),
        "head_max_a".into(),
    ];
    header.extend(net.load_points.iter().map(|lp| format!("v_{}_pu", lp.id)));
    w.write_record(&header)?;
    for t in 0..ts.slots {
        let mut row = vec![
            (ts.start_day + t / SLOTS_PER_DAY).to_string(),
            (t % SLOTS_PER_DAY + 1).to_string(),
        ];
        row.extend(ts.head_phase_current[t].iter().map(|v| format!("{v:.6}")));
        row.push(format!("{:.6}", ts.head_current[t]));
        row.extend((0..ts.n_points).map(|p| format!("{:.8}", ts.voltage(t, p))));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
