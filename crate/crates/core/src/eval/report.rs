use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// One point of a metric tracked over rounds or steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub round: usize,
    pub value: f64,
}

/// A single reported metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metric: String,
    pub value: f64,
    /// Number of items the value averages over.
    pub n: usize,
    /// SHA-256 of the resolved configuration that produced it.
    pub config_digest: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub series: Vec<SeriesPoint>,
}

/// Writes `round,metric,value` rows for every report that carries a series.
pub fn write_series_csv(mut writer: impl Write, reports: &[EvalReport]) -> Result<()> {
    writeln!(writer, "round,metric,value")?;
    for report in reports {
        for p in &report.series {
            writeln!(writer, "{},{},{}", p.round, report.metric, p.value)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_rows() {
        let reports = vec![
            EvalReport {
                metric: "win_rate".into(),
                value: 0.5,
                n: 4,
                config_digest: "abc".into(),
                series: vec![SeriesPoint { round: 0, value: 0.25 }, SeriesPoint { round: 10, value: 0.5 }],
            },
            EvalReport {
                metric: "agreement".into(),
                value: 0.9,
                n: 10,
                config_digest: "abc".into(),
                series: vec![],
            },
        ];
        let mut out = Vec::new();
        write_series_csv(&mut out, &reports).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "round,metric,value\n0,win_rate,0.25\n10,win_rate,0.5\n");
    }
}
