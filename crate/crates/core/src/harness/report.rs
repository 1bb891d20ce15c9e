//! CSV result tables and the summary JSON.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ScenarioConfig;
use super::experiment::{Estimate, ResultRow};
use crate::error::HarnessError;

/// CSV column order.
pub const COLUMNS: [&str; 22] = [
    "sweep",
    "method",
    "parameter",
    "value",
    "seed",
    "failed",
    "slots",
    "degraded_slots",
    "mean_rate_bps_hz",
    "mean_rcrb_angle_deg",
    "mean_rcrb_dist_m",
    "rmse_angle_deg",
    "rmse_dist_m",
    "rmse_velocity_mps",
    "dt_rmse_x_m",
    "dt_rmse_y_m",
    "mean_power_w",
    "mean_ao_iterations",
    "data_bits",
    "cycles_per_bit",
    "f_min_hz",
    "p_dt_w",
];

const METRICS: [&str; 14] = [
    "mean_rate_bps_hz",
    "mean_rcrb_angle_deg",
    "mean_rcrb_dist_m",
    "rmse_angle_deg",
    "rmse_dist_m",
    "rmse_velocity_mps",
    "dt_rmse_x_m",
    "dt_rmse_y_m",
    "mean_power_w",
    "mean_ao_iterations",
    "data_bits",
    "cycles_per_bit",
    "f_min_hz",
    "p_dt_w",
];

fn metric(row: &ResultRow, name: &str) -> Option<f64> {
    match name {
        "mean_rate_bps_hz" => row.mean_rate_bps_hz,
        "mean_rcrb_angle_deg" => row.mean_rcrb_angle_deg,
        "mean_rcrb_dist_m" => row.mean_rcrb_dist_m,
        "rmse_angle_deg" => row.rmse_angle_deg,
        "rmse_dist_m" => row.rmse_dist_m,
        "rmse_velocity_mps" => row.rmse_velocity_mps,
        "dt_rmse_x_m" => row.dt_rmse_x_m,
        "dt_rmse_y_m" => row.dt_rmse_y_m,
        "mean_power_w" => row.mean_power_w,
        "mean_ao_iterations" => row.mean_ao_iterations,
        "data_bits" => row.data_bits,
        "cycles_per_bit" => row.cycles_per_bit,
        "f_min_hz" => row.f_min_hz,
        "p_dt_w" => row.p_dt_w,
        _ => None,
    }
}

pub fn write_csv<W: Write>(rows: &[ResultRow], out: W) -> Result<(), HarnessError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(COLUMNS)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<ResultRow>, HarnessError> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    if header != COLUMNS {
        return Err(HarnessError::Config(format!("unexpected CSV columns {header:?}")));
    }
    r.deserialize().map(|row| row.map_err(HarnessError::from)).collect()
}

/// One (sweep, method, point) cell aggregated over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryCell {
    pub sweep: String,
    pub method: String,
    pub parameter: String,
    pub value: f64,
    pub seeds: usize,
    pub failed: usize,
    pub degraded_slots: usize,
    pub metrics: BTreeMap<String, Estimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub config_fingerprint: String,
    pub seeds: Vec<u64>,
    pub cells: Vec<SummaryCell>,
}

/// Groups rows by (sweep, method, parameter, value) in first-seen order.
/// Failed rows are counted and excluded from the estimates.
pub fn summarize(rows: &[ResultRow], fingerprint: &str) -> Summary {
    let mut order: Vec<(String, String, String, u64)> = Vec::new();
    let mut groups: BTreeMap<(String, String, String, u64), Vec<&ResultRow>> = BTreeMap::new();
    let mut seeds: Vec<u64> = Vec::new();
    for r in rows {
        let key = (r.sweep.clone(), r.method.clone(), r.parameter.clone(), r.value.to_bits());
        if !groups.contains_key(&key) {
            order.push(key.clone());
        }
        groups.entry(key).or_default().push(r);
        if !seeds.contains(&r.seed) {
            seeds.push(r.seed);
        }
    }
    seeds.sort_unstable();
    let cells = order
        .into_iter()
        .map(|key| {
            let members = &groups[&key];
            let ok: Vec<&&ResultRow> = members.iter().filter(|r| !r.failed).collect();
            let metrics = METRICS
                .iter()
                .filter_map(|&name| {
                    let x: Vec<f64> = ok.iter().filter_map(|r| metric(r, name)).collect();
                    Estimate::from_samples(&x).map(|e| (name.to_owned(), e))
                })
                .collect();
            SummaryCell {
                sweep: key.0,
                method: key.1,
                parameter: key.2,
                value: f64::from_bits(key.3),
                seeds: members.len(),
                failed: members.len() - ok.len(),
                degraded_slots: members.iter().map(|r| r.degraded_slots).sum(),
                metrics,
            }
        })
        .collect();
    Summary {
        config_fingerprint: fingerprint.to_owned(),
        seeds,
        cells,
    }
}

/// Writes `results.csv` and `summary.json` into `dir`.
pub fn emit_report(rows: &[ResultRow], cfg: &ScenarioConfig, dir: &Path) -> Result<Summary, HarnessError> {
    fs::create_dir_all(dir)?;
    write_csv(rows, fs::File::create(dir.join("results.csv"))?)?;
    let summary = summarize(rows, &cfg.fingerprint());
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows() -> Vec<ResultRow> {
        let mut a = ResultRow::new("vehicles", "hh", "vehicles", 2.0, 1);
        a.mean_rate_bps_hz = Some(3.25);
        a.mean_rcrb_dist_m = Some(0.1 + 0.2);
        let mut b = ResultRow::new("vehicles", "hh", "vehicles", 2.0, 2);
        b.mean_rate_bps_hz = Some(2.75);
        let mut c = ResultRow::new("vehicles", "greedy", "vehicles", 2.0, 1);
        c.failed = true;
        vec![a, b, c]
    }

    #[test]
    fn empty_table_is_header_only() {
        let mut out = Vec::new();
        write_csv(&[], &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), format!("{}\n", COLUMNS.join(",")));
    }

    #[test]
    fn csv_round_trip() {
        let mut out = Vec::new();
        write_csv(&rows(), &mut out).unwrap();
        assert_eq!(read_csv(out.as_slice()).unwrap(), rows());
    }

    #[test]
    fn serialized_fields_match_columns() {
        let json = serde_json::to_value(ResultRow::new("s", "m", "p", 0.0, 0)).unwrap();
        let keys: Vec<&String> = json.as_object().unwrap().keys().collect();
        let mut sorted = COLUMNS.to_vec();
        sorted.sort_unstable();
        let mut got: Vec<&str> = keys.iter().map(|k| k.as_str()).collect();
        got.sort_unstable();
        assert_eq!(got, sorted);
    }

    #[test]
    fn summary_excludes_failed_rows() {
        let s = summarize(&rows(), "abc");
        assert_eq!(s.seeds, vec![1, 2]);
        assert_eq!(s.cells.len(), 2);
        let hh = &s.cells[0];
        assert_eq!((hh.seeds, hh.failed), (2, 0));
        assert_eq!(hh.metrics["mean_rate_bps_hz"].mean, 3.0);
        assert_eq!(hh.metrics["mean_rcrb_dist_m"].n, 1);
        let g = &s.cells[1];
        assert_eq!((g.seeds, g.failed), (1, 1));
        assert!(g.metrics.is_empty());
    }
}
