//! On-disk formats: trajectory CSV time series, metric snapshot JSON, and
//! report/fit JSON. All writers format through `f64`'s shortest round-trip
//! representation, so identical runs produce byte-identical files.

use std::io::Write;

use nalgebra::DVector;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::flows::{FlowKind, Trajectory};
use crate::grid::Grid;
use crate::metric::{ConformalMetric, Metric, WarpedMetric};
use crate::real::Real;

pub const SCHEMA_SNAPSHOT: &str = "ricci-lab/snapshot/v1";
pub const SCHEMA_FITS: &str = "ricci-lab/fits/v1";
pub const SCHEMA_REPORT: &str = "ricci-lab/report/v1";

pub const TRAJECTORY_HEADER: &str = "t,mu,grad_mu_norm,area,sup_R_dev,dt";

/// One line of the trajectory time series.
#[derive(Clone, Copy, Debug)]
pub struct TrajectoryRow<T: Real> {
    pub t: T,
    pub mu: T,
    pub grad_mu_norm: T,
    pub area: T,
    pub sup_r_dev: T,
    pub dt: T,
}

pub fn trajectory_rows<T: Real>(traj: &Trajectory<T>) -> Vec<TrajectoryRow<T>> {
    traj.states
        .iter()
        .map(|s| TrajectoryRow {
            t: s.time,
            mu: s.diagnostics.mu,
            grad_mu_norm: s.diagnostics.grad_mu_norm,
            area: s.diagnostics.area,
            sup_r_dev: s.diagnostics.sup_r_dev,
            dt: s.diagnostics.dt_used,
        })
        .collect()
}

pub fn write_trajectory_csv<T: Real>(
    rows: &[TrajectoryRow<T>],
    out: &mut impl Write,
) -> std::io::Result<()> {
    writeln!(out, "{TRAJECTORY_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.t.as_f64(),
            r.mu.as_f64(),
            r.grad_mu_norm.as_f64(),
            r.area.as_f64(),
            r.sup_r_dev.as_f64(),
            r.dt.as_f64()
        )?;
    }
    Ok(())
}

pub fn parse_trajectory_csv(text: &str) -> Result<Vec<TrajectoryRow<f64>>> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Format("empty trajectory file".into()))?;
    if header.trim() != TRAJECTORY_HEADER {
        return Err(Error::Format(format!(
            "unexpected trajectory header {header:?}; want {TRAJECTORY_HEADER:?}"
        )));
    }
    let mut rows = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(Error::Format(format!(
                "line {}: expected 6 fields, got {}",
                lineno + 2,
                fields.len()
            )));
        }
        let mut v = [0.0f64; 6];
        for (k, f) in fields.iter().enumerate() {
            v[k] = f.trim().parse::<f64>().map_err(|e| {
                Error::Format(format!("line {}: bad number {f:?}: {e}", lineno + 2))
            })?;
        }
        rows.push(TrajectoryRow {
            t: v[0],
            mu: v[1],
            grad_mu_norm: v[2],
            area: v[3],
            sup_r_dev: v[4],
            dt: v[5],
        });
    }
    Ok(rows)
}

fn values_to_json<T: Real>(v: &DVector<T>) -> Value {
    Value::Array(v.iter().map(|x| json!(x.as_f64())).collect())
}

/// Snapshot of one metric at one flow time. Grid nodes are implied by the
/// grid size (Gauss-Legendre is deterministic).
pub fn snapshot_to_json<T: Real>(metric: &Metric<T>, time: T, flow: FlowKind) -> Value {
    let flow_name = match flow {
        FlowKind::Normalized => "normalized",
        FlowKind::Modified => "modified",
    };
    let metric_value = match metric {
        Metric::Conformal(m) => json!({
            "kind": "conformal",
            "phi": values_to_json(m.phi().values()),
        }),
        Metric::Warped(m) => json!({
            "kind": "warped",
            "a_sq": values_to_json(m.a_sq().values()),
            "b_sq": values_to_json(m.b_sq().values()),
        }),
    };
    json!({
        "schema": SCHEMA_SNAPSHOT,
        "grid_size": metric.grid().n(),
        "flow": flow_name,
        "time": time.as_f64(),
        "metric": metric_value,
    })
}

fn json_f64_array(v: &Value, key: &str) -> Result<Vec<f64>> {
    v.get(key)
        .and_then(Value::as_array)
        .ok_or_else(|| Error::Format(format!("snapshot missing array {key:?}")))?
        .iter()
        .map(|x| {
            x.as_f64()
                .ok_or_else(|| Error::Format(format!("non-numeric entry in {key:?}")))
        })
        .collect()
}

pub fn snapshot_from_json(text: &str) -> Result<(Metric<f64>, f64, FlowKind)> {
    let v: Value =
        serde_json::from_str(text).map_err(|e| Error::Format(format!("bad snapshot JSON: {e}")))?;
    let schema = v.get("schema").and_then(Value::as_str).unwrap_or("");
    if schema != SCHEMA_SNAPSHOT {
        return Err(Error::Format(format!(
            "unknown snapshot schema {schema:?}; want {SCHEMA_SNAPSHOT:?}"
        )));
    }
    let n = v
        .get("grid_size")
        .and_then(Value::as_u64)
        .ok_or_else(|| Error::Format("snapshot missing grid_size".into()))? as usize;
    let flow = match v.get("flow").and_then(Value::as_str) {
        Some("normalized") => FlowKind::Normalized,
        Some("modified") => FlowKind::Modified,
        other => return Err(Error::Format(format!("unknown flow kind {other:?}"))),
    };
    let time = v
        .get("time")
        .and_then(Value::as_f64)
        .ok_or_else(|| Error::Format("snapshot missing time".into()))?;
    let grid = Grid::<f64>::new(n)?;
    let mv = v
        .get("metric")
        .ok_or_else(|| Error::Format("snapshot missing metric".into()))?;
    let metric = match mv.get("kind").and_then(Value::as_str) {
        Some("conformal") => {
            let phi = json_f64_array(mv, "phi")?;
            Metric::Conformal(ConformalMetric::new(ScalarField::new(
                grid,
                DVector::from_vec(phi),
            )?))
        }
        Some("warped") => {
            let a = json_f64_array(mv, "a_sq")?;
            let b = json_f64_array(mv, "b_sq")?;
            Metric::Warped(WarpedMetric::new(
                ScalarField::new(grid.clone(), DVector::from_vec(a))?,
                ScalarField::new(grid, DVector::from_vec(b))?,
            )?)
        }
        other => return Err(Error::Format(format!("unknown metric kind {other:?}"))),
    };
    Ok((metric, time, flow))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::ScalarField;

    #[test]
    fn trajectory_csv_round_trip() {
        let rows = vec![
            TrajectoryRow {
                t: 0.0,
                mu: 3.5,
                grad_mu_norm: 0.1,
                area: 12.566,
                sup_r_dev: 0.5,
                dt: 0.0,
            },
            TrajectoryRow {
                t: 0.25,
                mu: 3.51,
                grad_mu_norm: 0.05,
                area: 12.566,
                sup_r_dev: 0.25,
                dt: 1e-3,
            },
        ];
        let mut buf = Vec::new();
        write_trajectory_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,mu,grad_mu_norm,area,sup_R_dev,dt\n"));
        let parsed = parse_trajectory_csv(&text).unwrap();
        assert_eq!(parsed.len(), 2);
        assert_eq!(parsed[1].t, 0.25);
        assert_eq!(parsed[1].dt, 1e-3);
    }

    #[test]
    fn rejects_malformed_trajectory() {
        assert!(parse_trajectory_csv("").is_err());
        assert!(parse_trajectory_csv("a,b\n1,2\n").is_err());
        let text = format!("{TRAJECTORY_HEADER}\n1,2,3\n");
        assert!(parse_trajectory_csv(&text).is_err());
    }

    #[test]
    fn snapshot_round_trip_conformal_and_warped() {
        let grid = Grid::<f64>::new(16).unwrap();
        let phi = ScalarField::from_fn(&grid, |x| 0.05 * x);
        let m = Metric::Conformal(ConformalMetric::new(phi));
        let j = snapshot_to_json(&m, 1.25, FlowKind::Normalized);
        let (back, time, flow) = snapshot_from_json(&j.to_string()).unwrap();
        assert_eq!(time, 1.25);
        assert_eq!(flow, FlowKind::Normalized);
        let Metric::Conformal(b) = back else { panic!() };
        let Metric::Conformal(orig) = &m else { panic!() };
        assert!(b.phi().sup_distance(orig.phi()).unwrap() == 0.0);

        let w = Metric::Warped(orig.to_warped());
        let j = snapshot_to_json(&w, 0.0, FlowKind::Modified);
        let (back, _, flow) = snapshot_from_json(&j.to_string()).unwrap();
        assert_eq!(flow, FlowKind::Modified);
        assert!(matches!(back, Metric::Warped(_)));
    }

    #[test]
    fn snapshot_rejects_unknown_schema() {
        let text = r#"{"schema":"other/v9","grid_size":16}"#;
        assert!(matches!(snapshot_from_json(text), Err(Error::Format(_))));
    }
}
