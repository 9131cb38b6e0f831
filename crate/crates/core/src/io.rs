//! File formats: dataset CSV with JSON sidecar, model checkpoints, sample /
//! density / virtual-target CSV artifacts, and training reports.
//!
//! Every CSV is RFC 4180 (CRLF records, header row) and every float is
//! written with 17 significant digits, so artifacts round-trip bit-exactly
//! and identical seeds produce byte-identical files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::CnfModel;
use crate::norm::NormalizationParams;
use crate::predict::{PdfGrid, SampleTensor};
use crate::train::TrainReport;
use crate::types::{Trajectory, TrajectoryDataset};

pub const DATASET_FORMAT_VERSION: u32 = 1;
pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

/// 17 significant digits: enough for exact double-precision round-trips.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// JSON sidecar of a dataset CSV: dimensions plus free-form provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSidecar {
    pub format_version: u32,
    pub dim: usize,
    pub n_psi: usize,
    pub meta: BTreeMap<String, String>,
}

fn dataset_header(dim: usize, n_psi: usize) -> String {
    let mut header = String::from("traj_id,t");
    for c in 0..dim {
        let _ = write!(header, ",p{c}");
    }
    for c in 0..n_psi {
        let _ = write!(header, ",psi{c}");
    }
    header
}

/// Render a dataset as CSV text (rows: one per trajectory step, psi columns
/// repeated per row).
pub fn dataset_to_csv(dataset: &TrajectoryDataset) -> String {
    let mut out = String::new();
    let _ = write!(out, "{}\r\n", dataset_header(dataset.dim, dataset.n_psi));
    for (id, (traj, psi)) in dataset.trajectories.iter().zip(&dataset.params).enumerate() {
        for k in 0..traj.len() {
            let _ = write!(out, "{id},{}", fmt_f64(traj.times[k]));
            for v in traj.position(k) {
                let _ = write!(out, ",{}", fmt_f64(*v));
            }
            for v in psi {
                let _ = write!(out, ",{}", fmt_f64(*v));
            }
            let _ = write!(out, "\r\n");
        }
    }
    out
}

/// Write `<base>.csv` and `<base>.json` for a dataset.
pub fn save_dataset(dataset: &TrajectoryDataset, base: &Path) -> Result<()> {
    let sidecar = DatasetSidecar {
        format_version: DATASET_FORMAT_VERSION,
        dim: dataset.dim,
        n_psi: dataset.n_psi,
        meta: dataset.meta.clone(),
    };
    fs::write(base.with_extension("csv"), dataset_to_csv(dataset))?;
    fs::write(base.with_extension("json"), serde_json::to_string_pretty(&sidecar)?)?;
    Ok(())
}

/// Parse dataset CSV text against its sidecar.
pub fn dataset_from_csv(csv: &str, sidecar: &DatasetSidecar) -> Result<TrajectoryDataset> {
    let expected_header = dataset_header(sidecar.dim, sidecar.n_psi);
    let mut lines = csv.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| Error::parse(1, "empty dataset file"))?;
    if header.trim_end() != expected_header {
        return Err(Error::parse(1, format!("expected header '{expected_header}'")));
    }
    let mut trajectories: Vec<Trajectory> = Vec::new();
    let mut params: Vec<Vec<f64>> = Vec::new();
    let mut current: Option<(usize, Vec<f64>, Vec<f64>, Vec<f64>)> = None;
    let columns = 2 + sidecar.dim + sidecar.n_psi;

    let mut finish = |cur: Option<(usize, Vec<f64>, Vec<f64>, Vec<f64>)>| -> Result<()> {
        if let Some((_, times, positions, psi)) = cur {
            trajectories.push(Trajectory::new(times, positions, sidecar.dim)?);
            params.push(psi);
        }
        Ok(())
    };

    for (idx, line) in lines {
        let line_no = idx + 1;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != columns {
            return Err(Error::parse(
                line_no,
                format!("expected {columns} fields, found {}", fields.len()),
            ));
        }
        let traj_id: usize = fields[0]
            .parse()
            .map_err(|_| Error::parse(line_no, format!("bad trajectory id '{}'", fields[0])))?;
        let mut values = Vec::with_capacity(columns - 1);
        for f in &fields[1..] {
            values.push(
                f.parse::<f64>()
                    .map_err(|_| Error::parse(line_no, format!("bad number '{f}'")))?,
            );
        }
        let (t, rest) = (values[0], &values[1..]);
        let (pos, psi) = rest.split_at(sidecar.dim);
        match &mut current {
            Some((id, times, positions, _)) if *id == traj_id => {
                times.push(t);
                positions.extend_from_slice(pos);
            }
            _ => {
                finish(current.take())?;
                current = Some((traj_id, vec![t], pos.to_vec(), psi.to_vec()));
            }
        }
    }
    finish(current.take())?;
    let mut dataset =
        TrajectoryDataset::new(sidecar.dim, sidecar.n_psi, trajectories, params)?;
    dataset.meta = sidecar.meta.clone();
    Ok(dataset)
}

/// Load `<base>.csv` + `<base>.json`.
pub fn load_dataset(base: &Path) -> Result<TrajectoryDataset> {
    let sidecar: DatasetSidecar =
        serde_json::from_str(&fs::read_to_string(base.with_extension("json"))?)?;
    if sidecar.format_version != DATASET_FORMAT_VERSION {
        return Err(Error::config(format!(
            "unsupported dataset format version {}",
            sidecar.format_version
        )));
    }
    dataset_from_csv(&fs::read_to_string(base.with_extension("csv"))?, &sidecar)
}

/// Versioned JSON wrapper around a serialized model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub model: CnfModel,
}

pub fn save_checkpoint(model: &CnfModel, path: &Path) -> Result<()> {
    let file = Checkpoint { format_version: CHECKPOINT_FORMAT_VERSION, model: model.clone() };
    fs::write(path, serde_json::to_string(&file)?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<CnfModel> {
    let file: Checkpoint = serde_json::from_str(&fs::read_to_string(path)?)?;
    if file.format_version != CHECKPOINT_FORMAT_VERSION {
        return Err(Error::config(format!(
            "unsupported checkpoint format version {}",
            file.format_version
        )));
    }
    Ok(file.model)
}

/// Samples CSV: `target_id,sample_id,step,t,p0..` in world meters, invalid
/// (outlier-removed) entries omitted.
pub fn samples_to_csv(samples: &SampleTensor, norm: &NormalizationParams) -> String {
    let mut out = String::from("target_id,sample_id,step,t");
    for c in 0..samples.dim {
        let _ = write!(out, ",p{c}");
    }
    let _ = write!(out, "\r\n");
    for i in 0..samples.n_targets {
        for j in 0..samples.n_samples {
            for k in 0..samples.n_steps {
                if !samples.is_valid(i, j, k) {
                    continue;
                }
                let world = norm.denormalize_position(samples.position(i, j, k));
                let _ = write!(out, "{i},{j},{k},{}", fmt_f64(samples.times[k]));
                for v in &world {
                    let _ = write!(out, ",{}", fmt_f64(*v));
                }
                let _ = write!(out, "\r\n");
            }
        }
    }
    out
}

/// Density CSV: `x,y,pdf` rows over the grid.
pub fn density_to_csv(grid: &PdfGrid) -> String {
    let mut out = String::from("x,y,pdf\r\n");
    for (r, row) in grid.values.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            let _ = write!(
                out,
                "{},{},{}\r\n",
                fmt_f64(grid.spec.x_at(c)),
                fmt_f64(grid.spec.y_at(r)),
                fmt_f64(*v)
            );
        }
    }
    out
}

/// Virtual-target CSV: `virtual_id,t,p0..` rows.
pub fn virtual_targets_to_csv(trajectories: &[Trajectory]) -> String {
    let dim = trajectories.first().map_or(2, |t| t.dim);
    let mut out = String::from("virtual_id,t");
    for c in 0..dim {
        let _ = write!(out, ",p{c}");
    }
    let _ = write!(out, "\r\n");
    for (id, traj) in trajectories.iter().enumerate() {
        for k in 0..traj.len() {
            let _ = write!(out, "{id},{}", fmt_f64(traj.times[k]));
            for v in traj.position(k) {
                let _ = write!(out, ",{}", fmt_f64(*v));
            }
            let _ = write!(out, "\r\n");
        }
    }
    out
}

/// Training report CSV: `epoch,train_nll,val_nll`.
pub fn report_to_csv(report: &TrainReport) -> String {
    let mut out = String::from("epoch,train_nll,val_nll\r\n");
    for (e, (t, v)) in report.train_nll.iter().zip(&report.val_nll).enumerate() {
        let _ = write!(out, "{e},{},{}\r\n", fmt_f64(*t), fmt_f64(*v));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{simulate_ballistic, simulate_simple, BallisticConfig, SimpleTargetConfig};
    use proptest::prelude::*;

    #[test]
    fn float_formatting_round_trips_exactly() {
        for v in [0.1, -1.0 / 3.0, 1.2345678901234567e300, 5e-324, 0.0, 2.0_f64.powi(-52)] {
            let s = fmt_f64(v);
            let back: f64 = s.parse().unwrap();
            assert_eq!(back.to_bits(), v.to_bits(), "{v} -> {s} -> {back}");
        }
    }

    proptest! {
        #[test]
        fn prop_float_round_trip(bits in any::<u64>()) {
            let v = f64::from_bits(bits);
            prop_assume!(v.is_finite());
            let back: f64 = fmt_f64(v).parse().unwrap();
            prop_assert_eq!(back.to_bits(), v.to_bits());
        }
    }

    #[test]
    fn dataset_round_trip_is_exact() {
        let config = SimpleTargetConfig { duration: 2.0, rng_seed: 9, ..Default::default() };
        let ds = simulate_simple(&config, 3).unwrap();
        let sidecar = DatasetSidecar {
            format_version: DATASET_FORMAT_VERSION,
            dim: ds.dim,
            n_psi: ds.n_psi,
            meta: ds.meta.clone(),
        };
        let csv = dataset_to_csv(&ds);
        let back = dataset_from_csv(&csv, &sidecar).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn ballistic_dataset_round_trip_keeps_psi() {
        let config = BallisticConfig { duration: 1.0, rng_seed: 4, ..Default::default() };
        let ds = simulate_ballistic(&config, 2).unwrap();
        let sidecar = DatasetSidecar {
            format_version: DATASET_FORMAT_VERSION,
            dim: 3,
            n_psi: 1,
            meta: ds.meta.clone(),
        };
        let back = dataset_from_csv(&dataset_to_csv(&ds), &sidecar).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let sidecar = DatasetSidecar {
            format_version: DATASET_FORMAT_VERSION,
            dim: 2,
            n_psi: 0,
            meta: BTreeMap::new(),
        };
        let csv = "traj_id,t,p0,p1\r\n0,0.0,1.0,2.0\r\n0,not_a_number,1.0,2.0\r\n";
        match dataset_from_csv(csv, &sidecar) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
        let csv = "traj_id,t,p0,p1\r\n0,0.0,1.0\r\n";
        match dataset_from_csv(csv, &sidecar) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn checkpoint_reload_reproduces_log_density_exactly() {
        use crate::flow::{CnfModel, SplineConfig};
        let norm = NormalizationParams {
            center: vec![0.0, 0.0, 50.0],
            half_range: vec![1.0, 1.0, 50.0],
            dim: 2,
            n_psi: 0,
        };
        let model =
            CnfModel::new_identity(2, 0, 4, SplineConfig::default(), &[32, 32], norm, 77).unwrap();
        let dir = std::env::temp_dir().join("trajflow-checkpoint-test");
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("model.json");
        save_checkpoint(&model, &path).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back, model);
        for probe in [[0.3, -0.8], [0.0, 0.0], [1.4, 0.2]] {
            let a = model.log_density(&probe, 0.5, &[]).unwrap();
            let b = back.log_density(&probe, 0.5, &[]).unwrap();
            assert_eq!(a.to_bits(), b.to_bits());
        }
        fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn csv_emitters_use_crlf_and_headers() {
        let config = SimpleTargetConfig { duration: 1.0, rng_seed: 2, ..Default::default() };
        let ds = simulate_simple(&config, 1).unwrap();
        let csv = dataset_to_csv(&ds);
        assert!(csv.starts_with("traj_id,t,p0,p1\r\n"));
        assert!(csv.ends_with("\r\n"));
    }
}
