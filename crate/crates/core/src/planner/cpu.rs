use serde::{Deserialize, Serialize};

use super::Assignment;
use crate::error::PlanError;
use crate::link::min_cpu_frequency;

/// One vehicle's digital-twin update for the coming slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DtTask {
    pub cycles_per_bit: f64,
    pub bits: f64,
    /// Extra cycles driven by the previous slot's sensing error.
    pub workload: f64,
}

/// Latency-binding CPU frequency per vehicle, hosted by its serving RSU.
/// Fails when an RSU's summed demand exceeds `f_max`.
pub fn allocate_cpu(assignment: &Assignment, tasks: &[DtTask], t_max: f64, f_max: f64) -> Result<Vec<f64>, PlanError> {
    if tasks.len() != assignment.n_vehicles() {
        return Err(PlanError::InvalidAssignment(format!(
            "{} tasks for {} vehicles",
            tasks.len(),
            assignment.n_vehicles()
        )));
    }
    let freqs = tasks
        .iter()
        .map(|t| min_cpu_frequency(t.cycles_per_bit, t.bits, t.workload, t_max))
        .collect::<Result<Vec<_>, _>>()?;
    for m in 0..assignment.n_rsu() {
        let demand: f64 = assignment.served_by(m).map(|k| freqs[k]).sum();
        if demand > f_max * (1.0 + 1e-12) {
            return Err(PlanError::CpuInfeasible { rsu: m, demand, capacity: f_max });
        }
    }
    Ok(freqs)
}
