//! CSV row schemas and their parsers.

use std::io::{Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::analysis::Analysis;
use crate::config::SystemConfig;
use crate::error::Result;
use crate::sim::SimMetrics;

/// One analysis point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisRow {
    pub source: String,
    #[serde(rename = "U")]
    pub users: usize,
    pub q: f64,
    pub gamma: f64,
    #[serde(rename = "gammaU")]
    pub load: f64,
    pub dmax: usize,
    pub throughput: f64,
    pub e_delta0: f64,
    pub e_y: f64,
    pub peak_aoi: f64,
    pub mean_active: f64,
    /// `none`, `argmax` (best point of a q-grid), or `golden` / `grid`
    /// (throughput-optimal q found by refinement / on the grid).
    pub qstar_flag: String,
}

impl AnalysisRow {
    pub fn new(a: &Analysis, qstar_flag: &str) -> Self {
        let cfg = &a.config;
        let (e_delta0, e_y, peak_aoi) = match &a.aoi {
            Some(r) => (r.e_delta0, r.e_y, r.peak_aoi),
            None => (f64::NAN, f64::NAN, f64::NAN),
        };
        AnalysisRow {
            source: "analysis".into(),
            users: cfg.num_users(),
            q: cfg.tx_prob(),
            gamma: cfg.gen_prob(),
            load: cfg.load(),
            dmax: cfg.max_cp_len(),
            throughput: a.throughput(),
            e_delta0,
            e_y,
            peak_aoi,
            mean_active: a.mean_active(),
            qstar_flag: qstar_flag.into(),
        }
    }
}

/// One simulated point: the analysis columns plus run identification and
/// 95% half-widths.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimRow {
    pub source: String,
    #[serde(rename = "U")]
    pub users: usize,
    pub q: f64,
    pub gamma: f64,
    #[serde(rename = "gammaU")]
    pub load: f64,
    pub dmax: usize,
    pub throughput: f64,
    pub e_delta0: f64,
    pub e_y: f64,
    pub peak_aoi: f64,
    pub mean_active: f64,
    pub qstar_flag: String,
    pub seed: u64,
    pub n_cps: u64,
    pub tput_ci: f64,
    pub aoi_ci: f64,
}

impl SimRow {
    pub fn new(cfg: &SystemConfig, m: &SimMetrics) -> Self {
        SimRow {
            source: "sim".into(),
            users: cfg.num_users(),
            q: cfg.tx_prob(),
            gamma: cfg.gen_prob(),
            load: cfg.load(),
            dmax: cfg.max_cp_len(),
            throughput: m.throughput,
            e_delta0: m.e_delta0,
            e_y: m.peak_aoi - m.e_delta0,
            peak_aoi: m.peak_aoi,
            mean_active: m.mean_active,
            qstar_flag: "none".into(),
            seed: m.seed,
            n_cps: m.cp_count,
            tput_ci: m.throughput_ci,
            aoi_ci: m.peak_aoi_ci,
        }
    }
}

/// Analysis and simulation side by side; z-scores use the batch-means
/// standard error.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    #[serde(rename = "U")]
    pub users: usize,
    pub q: f64,
    pub gamma: f64,
    #[serde(rename = "gammaU")]
    pub load: f64,
    pub dmax: usize,
    pub seed: u64,
    pub n_cps: u64,
    pub tput_analysis: f64,
    pub tput_sim: f64,
    pub tput_ci: f64,
    pub tput_z: f64,
    pub aoi_analysis: f64,
    pub aoi_sim: f64,
    pub aoi_ci: f64,
    pub aoi_z: f64,
    pub active_analysis: f64,
    pub active_sim: f64,
    /// Both metrics within three half-widths of the analysis.
    pub agree: bool,
}

impl CompareRow {
    pub fn new(a: &Analysis, m: &SimMetrics) -> Self {
        let cfg = &a.config;
        let within = |x: f64, y: f64, ci: f64| (x - y).abs() <= 3.0 * ci;
        let (aoi, tput) = (a.peak_aoi(), a.throughput());
        CompareRow {
            users: cfg.num_users(),
            q: cfg.tx_prob(),
            gamma: cfg.gen_prob(),
            load: cfg.load(),
            dmax: cfg.max_cp_len(),
            seed: m.seed,
            n_cps: m.cp_count,
            tput_analysis: tput,
            tput_sim: m.throughput,
            tput_ci: m.throughput_ci,
            tput_z: (m.throughput - tput) / m.throughput_se,
            aoi_analysis: aoi,
            aoi_sim: m.peak_aoi,
            aoi_ci: m.peak_aoi_ci,
            aoi_z: (m.peak_aoi - aoi) / m.peak_aoi_se,
            active_analysis: a.mean_active(),
            active_sim: m.mean_active,
            agree: within(m.throughput, tput, m.throughput_ci) && within(m.peak_aoi, aoi, m.peak_aoi_ci),
        }
    }
}

/// Result of checking the analytic tables against enumeration for one `n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleRow {
    pub n: usize,
    pub q: f64,
    pub dmax: usize,
    pub dev_cp_len: f64,
    pub dev_decoded: f64,
    pub dev_beta: f64,
    pub pass: bool,
}

/// Entry of a stationary or empirical distribution, written with the column
/// names given to [`write_distribution`].
#[derive(Clone, Debug, PartialEq)]
pub struct DistEntry {
    pub value: usize,
    pub prob: f64,
}

pub fn write_rows<W: Write, T: Serialize>(out: W, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows<R: Read, T: DeserializeOwned>(input: R) -> Result<Vec<T>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .map(|r| r.map_err(Into::into))
        .collect()
}

pub fn read_rows_from<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    read_rows(std::fs::File::open(path)?)
}

/// Writes `value_col,prob_col` rows, `value = offset + index`.
pub fn write_distribution<W: Write>(out: W, value_col: &str, prob_col: &str, offset: usize, probs: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([value_col, prob_col])?;
    for (i, p) in probs.iter().enumerate() {
        w.write_record([(offset + i).to_string(), p.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a two-column distribution file written by [`write_distribution`],
/// checking the header.
pub fn read_distribution<R: Read>(input: R, value_col: &str, prob_col: &str) -> Result<Vec<DistEntry>> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers()?.clone();
    if headers.len() != 2 || &headers[0] != value_col || &headers[1] != prob_col {
        return Err(crate::error::Error::Usage(format!(
            "expected columns {value_col},{prob_col}, found {}",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    r.records()
        .map(|rec| {
            let rec = rec?;
            let bad = |what: &str| crate::error::Error::Usage(format!("bad {what} in {rec:?}"));
            Ok(DistEntry {
                value: rec[0].parse().map_err(|_| bad(value_col))?,
                prob: rec[1].parse().map_err(|_| bad(prob_col))?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::analyze;

    #[test]
    fn analysis_header_matches_schema() {
        let cfg = SystemConfig::with_load(3, 0.3, 0.6, 4).unwrap();
        let row = AnalysisRow::new(&analyze(&cfg).unwrap(), "none");
        let mut buf = Vec::new();
        write_rows(&mut buf, std::slice::from_ref(&row)).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "source,U,q,gamma,gammaU,dmax,throughput,e_delta0,e_y,peak_aoi,mean_active,qstar_flag"
        );
        let back: Vec<AnalysisRow> = read_rows(text.as_bytes()).unwrap();
        assert_eq!(back, vec![row]);
    }

    #[test]
    fn sim_header_extends_analysis_header() {
        let cfg = SystemConfig::with_load(3, 0.3, 0.6, 4).unwrap();
        let m = crate::sim::simulate(&cfg, 1, 300, 10).unwrap();
        let row = SimRow::new(&cfg, &m);
        let mut buf = Vec::new();
        write_rows(&mut buf, std::slice::from_ref(&row)).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with(
            "source,U,q,gamma,gammaU,dmax,throughput,e_delta0,e_y,peak_aoi,mean_active,qstar_flag,seed,n_cps,tput_ci,aoi_ci\n"
        ));
        let back: Vec<SimRow> = read_rows(text.as_bytes()).unwrap();
        assert_eq!(back, vec![row]);
    }

    #[test]
    fn nan_survives_round_trip() {
        let cfg = SystemConfig::new(2, 0.3, 0.0, 3).unwrap();
        let row = AnalysisRow::new(&analyze(&cfg).unwrap(), "none");
        let mut buf = Vec::new();
        write_rows(&mut buf, std::slice::from_ref(&row)).unwrap();
        let back: Vec<AnalysisRow> = read_rows(buf.as_slice()).unwrap();
        assert!(back[0].peak_aoi.is_nan());
    }

    #[test]
    fn distribution_round_trip_and_header_check() {
        let mut buf = Vec::new();
        write_distribution(&mut buf, "d", "pi_d", 1, &[0.25, 0.75]).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "d,pi_d\n1,0.25\n2,0.75\n");
        let back = read_distribution(buf.as_slice(), "d", "pi_d").unwrap();
        assert_eq!(back[1], DistEntry { value: 2, prob: 0.75 });
        assert!(read_distribution(buf.as_slice(), "n", "pi_n").is_err());
    }
}
