//! Target list files: one row per real target with world position, velocity,
//! and dynamics parameters. Heading derives from the velocity direction.

use std::path::Path;

use trajflow_core::pose::Pose;
use trajflow_core::{Error, Result};

/// Expected header for a model with `dim` position axes and `n_psi`
/// parameters, e.g. `target_id,p0,p1,v0,v1,psi0`.
pub fn targets_header(dim: usize, n_psi: usize) -> String {
    let mut h = String::from("target_id");
    for c in 0..dim {
        h.push_str(&format!(",p{c}"));
    }
    for c in 0..dim {
        h.push_str(&format!(",v{c}"));
    }
    for c in 0..n_psi {
        h.push_str(&format!(",psi{c}"));
    }
    h
}

/// Parse a targets CSV into (pose, psi) pairs ordered by row.
pub fn parse_targets(text: &str, dim: usize, n_psi: usize) -> Result<Vec<(Pose, Vec<f64>)>> {
    let expected = targets_header(dim, n_psi);
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| Error::parse(1, "empty targets file"))?;
    if header.trim_end() != expected {
        return Err(Error::parse(1, format!("expected header '{expected}'")));
    }
    let columns = 1 + 2 * dim + n_psi;
    let mut targets = Vec::new();
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
        let mut values = Vec::with_capacity(columns - 1);
        for f in &fields[1..] {
            values.push(
                f.parse::<f64>()
                    .map_err(|_| Error::parse(line_no, format!("bad number '{f}'")))?,
            );
        }
        let position = values[..dim].to_vec();
        let velocity = &values[dim..2 * dim];
        let psi = values[2 * dim..].to_vec();
        let heading = Pose::heading_from_velocity(velocity);
        targets.push((Pose::new(position, heading), psi));
    }
    if targets.is_empty() {
        return Err(Error::config("targets file contains no targets"));
    }
    Ok(targets)
}

pub fn load_targets(path: &Path, dim: usize, n_psi: usize) -> Result<Vec<(Pose, Vec<f64>)>> {
    parse_targets(&std::fs::read_to_string(path)?, dim, n_psi)
}

/// Parse "a,b,c" into floats.
pub fn parse_float_list(text: &str) -> Result<Vec<f64>> {
    if text.trim().is_empty() {
        return Ok(vec![]);
    }
    text.split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| Error::config(format!("bad number '{p}' in list")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_three_targets() {
        let text = "target_id,p0,p1,v0,v1\r\n0,0,0,0,200\r\n1,0,-40000,0,200\r\n2,0,40000,0,200\r\n";
        let targets = parse_targets(text, 2, 0).unwrap();
        assert_eq!(targets.len(), 3);
        assert_eq!(targets[1].0.position, vec![0.0, -40000.0]);
        assert_eq!(targets[0].0.heading, 0.0);
    }

    #[test]
    fn header_mismatch_is_line_one_error() {
        match parse_targets("id,x,y\r\n", 2, 0) {
            Err(Error::Parse { line: 1, .. }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn psi_columns_follow_velocity() {
        let text = "target_id,p0,p1,p2,v0,v1,v2,psi0\r\n0,0,0,-1000,100,0,0,500\r\n";
        let targets = parse_targets(text, 3, 1).unwrap();
        assert_eq!(targets[0].1, vec![500.0]);
    }
}
