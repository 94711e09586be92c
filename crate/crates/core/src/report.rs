//! Flat CSV and JSON emission. CSV files have a header row, comma separators,
//! LF line endings and floats with 17 significant digits, so that identical
//! runs give identical bytes.

use std::io::Write;

use serde::Serialize;

use crate::dynamics::TrajectoryRow;
use crate::error::Result;
use crate::estimators::{AsymptoticsReport, CorrelationSeries, ProbeReport, SurvivalCurve};

/// Round-trippable float formatting (17 significant digits).
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

fn row<W: Write>(w: &mut W, fields: &[String]) -> Result<()> {
    w.write_all(fields.join(",").as_bytes())?;
    w.write_all(b"\n")?;
    Ok(())
}

pub fn write_json<W: Write, T: Serialize>(w: &mut W, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut *w, value)?;
    w.write_all(b"\n")?;
    Ok(())
}

pub fn write_survival_csv<W: Write>(w: &mut W, curve: &SurvivalCurve) -> Result<()> {
    row(w, &["threshold".into(), "count".into(), "survival".into()])?;
    for k in 0..curve.thresholds.len() {
        row(
            w,
            &[
                fmt_f64(curve.thresholds[k]),
                curve.counts[k].to_string(),
                fmt_f64(curve.survival[k]),
            ],
        )?;
    }
    Ok(())
}

pub fn write_correlation_csv<W: Write>(w: &mut W, series: &CorrelationSeries) -> Result<()> {
    let map = !series.lags.is_empty();
    row(
        w,
        &[
            if map { "lag" } else { "time" }.into(),
            "value".into(),
            "signed_value".into(),
            "std_error".into(),
        ],
    )?;
    for k in 0..series.values.len() {
        let axis = if map {
            series.lags[k].to_string()
        } else {
            fmt_f64(series.times[k])
        };
        row(
            w,
            &[
                axis,
                fmt_f64(series.values[k]),
                fmt_f64(series.signed_values[k]),
                fmt_f64(series.std_errors[k]),
            ],
        )?;
    }
    Ok(())
}

pub fn write_probe_csv<W: Write>(w: &mut W, report: &ProbeReport) -> Result<()> {
    row(
        w,
        &["cell", "theta_p", "theta_q", "distance", "ratio"].map(String::from),
    )?;
    for p in &report.pairs {
        row(
            w,
            &[
                p.cell.to_string(),
                fmt_f64(p.theta_p),
                fmt_f64(p.theta_q),
                fmt_f64(p.distance),
                fmt_f64(p.ratio),
            ],
        )?;
    }
    Ok(())
}

/// Per-bin power-sum maxima of an asymptotics report.
pub fn write_power_bins_csv<W: Write>(w: &mut W, report: &AsymptoticsReport) -> Result<()> {
    row(w, &["n_lo", "n_hi", "count", "max_power_sum"].map(String::from))?;
    for b in &report.bins {
        row(
            w,
            &[
                b.n_lo.to_string(),
                b.n_hi.to_string(),
                b.count.to_string(),
                fmt_f64(b.max_power_sum),
            ],
        )?;
    }
    Ok(())
}

pub fn write_running_max_csv<W: Write>(w: &mut W, report: &AsymptoticsReport) -> Result<()> {
    row(w, &["n".into(), "running_max".into()])?;
    for &(n, v) in &report.running_max {
        row(w, &[n.to_string(), fmt_f64(v)])?;
    }
    Ok(())
}

pub fn write_trajectory_csv<W: Write>(w: &mut W, rows: &[TrajectoryRow]) -> Result<()> {
    row(
        w,
        &["step", "piece", "r", "phi", "x", "y", "phi_vertical", "tau"].map(String::from),
    )?;
    for t in rows {
        row(
            w,
            &[
                t.step.to_string(),
                t.m.piece.to_string(),
                fmt_f64(t.m.r),
                fmt_f64(t.m.phi),
                fmt_f64(t.m.pos.x),
                fmt_f64(t.m.pos.y),
                t.phi_vertical.map(fmt_f64).unwrap_or_default(),
                fmt_f64(t.tau),
            ],
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip_with_seventeen_digits() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 12345.678901234567] {
            let s = fmt_f64(x);
            assert_eq!(s.parse::<f64>().unwrap(), x);
            let mantissa = s.split('e').next().unwrap().replace(['-', '.'], "");
            assert_eq!(mantissa.len(), 17);
        }
        assert_eq!(fmt_f64(f64::NAN), "NaN");
    }

    #[test]
    fn survival_csv_layout() {
        let c = SurvivalCurve::from_counts("R", vec![1.0, 2.0], vec![4, 1], 4);
        let mut out = Vec::new();
        write_survival_csv(&mut out, &c).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(
            text,
            "threshold,count,survival\n\
             1.0000000000000000e0,4,1.0000000000000000e0\n\
             2.0000000000000000e0,1,2.5000000000000000e-1\n"
        );
    }
}
