//! Single-phase radial feeder power flow by backward/forward sweep.
//!
//! Injections follow the load convention: positive P/Q is consumption,
//! negative is injection. Voltages are solved in per-unit on the feeder's
//! base power; powers enter and leave the solver in kW / kvar.

use std::collections::{BTreeMap, HashMap, VecDeque};

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// One bus of a radial feeder and the line that feeds it from its parent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BusRecord {
    pub id: String,
    /// `None` marks the slack (substation) bus.
    #[serde(default)]
    pub parent: Option<String>,
    /// Series resistance of the line from the parent, p.u.
    #[serde(default)]
    pub r: f64,
    /// Series reactance of the line from the parent, p.u.
    #[serde(default)]
    pub x: f64,
}

impl BusRecord {
    pub fn slack(id: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            parent: None,
            r: 0.0,
            x: 0.0,
        }
    }

    pub fn line(id: impl Into<String>, parent: impl Into<String>, r: f64, x: f64) -> Self {
        Self {
            id: id.into(),
            parent: Some(parent.into()),
            r,
            x,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeederModel {
    pub buses: Vec<BusRecord>,
    #[serde(default = "default_slack_voltage")]
    pub slack_voltage: f64,
    #[serde(default = "default_base_kva")]
    pub base_kva: f64,
    #[serde(default = "default_base_kv")]
    pub base_kv: f64,
}

fn default_slack_voltage() -> f64 {
    1.0
}
fn default_base_kva() -> f64 {
    1000.0
}
fn default_base_kv() -> f64 {
    4.16
}

impl FeederModel {
    pub fn new(buses: Vec<BusRecord>) -> Self {
        Self {
            buses,
            slack_voltage: default_slack_voltage(),
            base_kva: default_base_kva(),
            base_kv: default_base_kv(),
        }
    }

    /// The default 13-bus test feeder: a trunk `b1..b6` with laterals, every
    /// line R = 0.01, X = 0.02 p.u. on a 1 MVA / 4.16 kV base.
    pub fn radial_13_bus() -> Self {
        let (r, x) = (0.01, 0.02);
        let lines = [
            ("b1", "sub"),
            ("b2", "b1"),
            ("b3", "b2"),
            ("b4", "b3"),
            ("b5", "b4"),
            ("b6", "b5"),
            ("b7", "b2"),
            ("b8", "b7"),
            ("b9", "b3"),
            ("b10", "b9"),
            ("b11", "b4"),
            ("b12", "b11"),
        ];
        let mut buses = vec![BusRecord::slack("sub")];
        buses.extend(lines.iter().map(|(id, p)| BusRecord::line(*id, *p, r, x)));
        Self::new(buses)
    }

    pub fn len(&self) -> usize {
        self.buses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buses.is_empty()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    pub fn slack_id(&self) -> Option<&str> {
        self.buses
            .iter()
            .find(|b| b.parent.is_none())
            .map(|b| b.id.as_str())
    }

    /// Checks the radial-tree invariants and returns the breadth-first order
    /// (slack first, siblings by id) together with each bus's parent index.
    pub fn topology(&self) -> Result<Topology> {
        if self.buses.is_empty() {
            return Err(Error::config("feeder has no buses"));
        }
        if !(self.slack_voltage.is_finite() && self.slack_voltage > 0.0) {
            return Err(Error::config(format!(
                "feeder slack voltage must be positive, got {}",
                self.slack_voltage
            )));
        }
        if !(self.base_kva.is_finite() && self.base_kva > 0.0) {
            return Err(Error::config("feeder base_kva must be positive"));
        }
        let mut index = HashMap::with_capacity(self.buses.len());
        for (k, bus) in self.buses.iter().enumerate() {
            if index.insert(bus.id.as_str(), k).is_some() {
                return Err(Error::config(format!("duplicate bus id '{}'", bus.id)));
            }
            if !(bus.r >= 0.0 && bus.x >= 0.0 && bus.r.is_finite() && bus.x.is_finite()) {
                return Err(Error::config(format!(
                    "bus '{}': line impedance must be finite and non-negative (r={}, x={})",
                    bus.id, bus.r, bus.x
                )));
            }
        }
        let slacks: Vec<usize> = (0..self.buses.len())
            .filter(|&k| self.buses[k].parent.is_none())
            .collect();
        let slack = match slacks.as_slice() {
            [only] => *only,
            [] => return Err(Error::config("feeder has no slack bus")),
            _ => {
                let ids: Vec<&str> = slacks.iter().map(|&k| self.buses[k].id.as_str()).collect();
                return Err(Error::config(format!(
                    "feeder has multiple roots: {}",
                    ids.join(", ")
                )));
            }
        };

        let mut parent = vec![None; self.buses.len()];
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); self.buses.len()];
        for (k, bus) in self.buses.iter().enumerate() {
            if let Some(p) = &bus.parent {
                let pk = *index.get(p.as_str()).ok_or_else(|| {
                    Error::config(format!("bus '{}' references unknown parent '{p}'", bus.id))
                })?;
                parent[k] = Some(pk);
                children[pk].push(k);
            }
        }
        for list in &mut children {
            list.sort_by(|&a, &b| self.buses[a].id.cmp(&self.buses[b].id));
        }

        let mut order = Vec::with_capacity(self.buses.len());
        let mut queue = VecDeque::from([slack]);
        while let Some(k) = queue.pop_front() {
            order.push(k);
            queue.extend(children[k].iter().copied());
        }
        if order.len() != self.buses.len() {
            return Err(Error::config(
                "feeder parent links contain a cycle or a component detached from the slack bus",
            ));
        }
        Ok(Topology {
            slack,
            order,
            parent,
        })
    }
}

#[derive(Clone, Debug)]
pub struct Topology {
    pub slack: usize,
    /// Breadth-first order from the slack bus.
    pub order: Vec<usize>,
    pub parent: Vec<Option<usize>>,
}

/// Net complex power per bus, aligned with [`FeederModel::buses`].
#[derive(Clone, Debug, PartialEq)]
pub struct InjectionSet<T> {
    pub p_kw: Vec<T>,
    pub q_kvar: Vec<T>,
}

impl<T: Scalar> InjectionSet<T> {
    pub fn zeros(n_buses: usize) -> Self {
        Self {
            p_kw: vec![T::zero(); n_buses],
            q_kvar: vec![T::zero(); n_buses],
        }
    }

    pub fn for_feeder(feeder: &FeederModel) -> Self {
        Self::zeros(feeder.len())
    }

    pub fn len(&self) -> usize {
        self.p_kw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p_kw.is_empty()
    }

    pub fn add(&mut self, bus: usize, p_kw: T, q_kvar: T) {
        self.p_kw[bus] += p_kw;
        self.q_kvar[bus] += q_kvar;
    }

    pub fn add_by_id(&mut self, feeder: &FeederModel, id: &str, p_kw: T, q_kvar: T) -> Result<()> {
        let bus = feeder
            .index_of(id)
            .ok_or_else(|| Error::config(format!("injection references unknown bus '{id}'")))?;
        self.add(bus, p_kw, q_kvar);
        Ok(())
    }

    pub fn total_p_kw(&self) -> T {
        self.p_kw.iter().fold(T::zero(), |a, &b| a + b)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Largest voltage change (p.u.) of a converged sweep; floored at 16
    /// machine epsilons of the solver scalar.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_iterations: 50,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PowerFlowResult<T> {
    /// Voltage magnitudes, p.u., in feeder bus order.
    pub magnitudes: Vec<T>,
    /// Voltage angles, radians, in feeder bus order.
    pub angles: Vec<T>,
    pub losses_kw: T,
    pub losses_kvar: T,
    /// Complex power drawn from the slack bus (substation), kW / kvar.
    pub slack_p_kw: T,
    pub slack_q_kvar: T,
    pub iterations: usize,
    pub converged: bool,
    /// Largest voltage change of the final sweep, p.u.
    pub residual: T,
    pub slack: usize,
}

impl<T: Scalar> PowerFlowResult<T> {
    pub fn magnitude(&self, bus: usize) -> T {
        self.magnitudes[bus]
    }

    /// Largest magnitude over non-slack buses; errors when unconverged.
    pub fn max_voltage(&self) -> Result<T> {
        self.non_slack_extreme(|a, b| a.max(b))
    }

    fn non_slack_extreme(&self, pick: impl Fn(T, T) -> T) -> Result<T> {
        if !self.converged {
            return Err(Error::PowerFlow(
                "voltage extremes requested from an unconverged solution".into(),
            ));
        }
        let mut it = self
            .magnitudes
            .iter()
            .enumerate()
            .filter(|(k, _)| *k != self.slack)
            .map(|(_, &v)| v);
        match it.next() {
            Some(first) => Ok(it.fold(first, pick)),
            // A feeder with only the slack bus.
            None => Ok(self.magnitudes[self.slack]),
        }
    }
}

/// Minimum voltage magnitude over non-slack buses.
pub fn min_voltage<T: Scalar>(result: &PowerFlowResult<T>) -> Result<T> {
    result.non_slack_extreme(|a, b| a.min(b))
}

/// Distance of `v` outside the band `[v_lower, v_upper]`; zero inside.
pub fn voltage_violation<T: Scalar>(v: T, v_lower: T, v_upper: T) -> T {
    (v - v_upper).max(T::zero()) + (v_lower - v).max(T::zero())
}

/// Boundary between the environments and any power flow backend.
pub trait PowerFlowSolver<T: Scalar> {
    fn feeder(&self) -> &FeederModel;
    fn solve(&self, injections: &InjectionSet<T>) -> Result<PowerFlowResult<T>>;
}

/// Backward/forward sweep solver with the feeder topology precomputed.
#[derive(Clone, Debug)]
pub struct SweepSolver<T> {
    feeder: FeederModel,
    topology: Topology,
    impedance: Vec<Complex<T>>,
    options: SolverOptions,
}

impl<T: Scalar> SweepSolver<T> {
    pub fn new(feeder: FeederModel) -> Result<Self> {
        Self::with_options(feeder, SolverOptions::default())
    }

    pub fn with_options(feeder: FeederModel, options: SolverOptions) -> Result<Self> {
        if !(options.tolerance > 0.0) || options.max_iterations == 0 {
            return Err(Error::config(
                "solver tolerance must be positive and max_iterations at least 1",
            ));
        }
        let topology = feeder.topology()?;
        let impedance = feeder
            .buses
            .iter()
            .map(|b| Complex::new(T::of(b.r), T::of(b.x)))
            .collect();
        Ok(Self {
            feeder,
            topology,
            impedance,
            options,
        })
    }

    pub fn options(&self) -> SolverOptions {
        self.options
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    /// Branch currents (p.u.) for the given voltages: entry `k` is the
    /// current entering bus `k` from its parent, the slack entry is the
    /// total feeder current.
    fn branch_currents(&self, loads: &[Complex<T>], volts: &[Complex<T>], out: &mut [Complex<T>]) {
        for k in 0..loads.len() {
            out[k] = (loads[k] / volts[k]).conj();
        }
        for &k in self.topology.order.iter().rev() {
            if let Some(p) = self.topology.parent[k] {
                let j = out[k];
                out[p] += j;
            }
        }
    }
}

impl<T: Scalar> PowerFlowSolver<T> for SweepSolver<T> {
    fn feeder(&self) -> &FeederModel {
        &self.feeder
    }

    fn solve(&self, injections: &InjectionSet<T>) -> Result<PowerFlowResult<T>> {
        let n = self.feeder.len();
        if injections.len() != n || injections.q_kvar.len() != n {
            return Err(Error::contract(format!(
                "injection set has {} entries, feeder has {n} buses",
                injections.len()
            )));
        }
        let base = T::of(self.feeder.base_kva);
        let mut loads = Vec::with_capacity(n);
        for k in 0..n {
            let (p, q) = (injections.p_kw[k], injections.q_kvar[k]);
            if !(p.is_finite() && q.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "injection at bus '{}' is ({p}, {q})",
                    self.feeder.buses[k].id
                )));
            }
            loads.push(Complex::new(p / base, q / base));
        }

        let v0 = Complex::new(T::of(self.feeder.slack_voltage), T::zero());
        // A tolerance below the scalar's resolution could never be met.
        let tol = T::of(self.options.tolerance).max(T::of(16.0) * T::epsilon());
        let mut volts = vec![v0; n];
        let mut next = volts.clone();
        let mut currents = vec![Complex::new(T::zero(), T::zero()); n];
        let mut converged = false;
        let mut iterations = 0;
        let mut residual = T::infinity();

        for it in 1..=self.options.max_iterations {
            iterations = it;
            self.branch_currents(&loads, &volts, &mut currents);
            next[self.topology.slack] = v0;
            for &k in &self.topology.order {
                if let Some(p) = self.topology.parent[k] {
                    next[k] = next[p] - self.impedance[k] * currents[k];
                }
            }
            residual = next
                .iter()
                .zip(&volts)
                .map(|(a, b)| (*a - *b).norm())
                .fold(T::zero(), |m, d| if d > m || d.is_nan() { d } else { m });
            std::mem::swap(&mut volts, &mut next);
            let collapsed = volts
                .iter()
                .any(|v| !(v.re.is_finite() && v.im.is_finite()) || v.norm() < T::of(1e-6));
            if collapsed || residual.is_nan() {
                break;
            }
            if residual < tol {
                converged = true;
                break;
            }
        }

        // Currents consistent with the final voltages give the losses and the
        // slack exchange.
        self.branch_currents(&loads, &volts, &mut currents);
        let mut losses = Complex::new(T::zero(), T::zero());
        for k in 0..n {
            if self.topology.parent[k].is_some() {
                losses += self.impedance[k] * Complex::new(currents[k].norm_sqr(), T::zero());
            }
        }
        let slack_power = v0 * currents[self.topology.slack].conj();

        Ok(PowerFlowResult {
            magnitudes: volts.iter().map(|v| v.norm()).collect(),
            angles: volts.iter().map(|v| v.arg()).collect(),
            losses_kw: losses.re * base,
            losses_kvar: losses.im * base,
            slack_p_kw: slack_power.re * base,
            slack_q_kvar: slack_power.im * base,
            iterations,
            converged,
            residual,
            slack: self.topology.slack,
        })
    }
}

/// One-shot solve; validates the feeder on every call.
pub fn solve<T: Scalar>(
    feeder: &FeederModel,
    injections: &InjectionSet<T>,
) -> Result<PowerFlowResult<T>> {
    SweepSolver::new(feeder.clone())?.solve(injections)
}

/// Per-bus magnitudes keyed by bus id, for order-independent comparisons.
pub fn magnitudes_by_id<T: Scalar>(
    feeder: &FeederModel,
    result: &PowerFlowResult<T>,
) -> BTreeMap<String, T> {
    feeder
        .buses
        .iter()
        .zip(&result.magnitudes)
        .map(|(b, &v)| (b.id.clone(), v))
        .collect()
}
