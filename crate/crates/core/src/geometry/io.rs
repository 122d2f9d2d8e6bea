//! Plain-text point-cloud files and the on-disk dataset layout.
//!
//! A `.pcd` file is a header line `pcd v1 <n> <d>` followed by `n` lines of
//! `d` space-separated decimals with 17 significant digits, which round-trips
//! every `f64` exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::cloud::PointCloud;
use super::synthetic::DatasetEntry;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub fn format_pcd<T: Scalar>(cloud: &PointCloud<T>) -> String {
    let mut out = String::with_capacity(cloud.len() * cloud.dim() * 25 + 32);
    let _ = writeln!(out, "pcd v1 {} {}", cloud.len(), cloud.dim());
    for p in cloud.points() {
        for (k, x) in p.iter().enumerate() {
            if k > 0 {
                out.push(' ');
            }
            let _ = write!(out, "{:.16e}", x.to_f64_lossy());
        }
        out.push('\n');
    }
    out
}

pub fn parse_pcd<T: Scalar>(text: &str) -> Result<PointCloud<T>> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        msg: "empty file".into(),
    })?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    let bad_header = || Error::Parse {
        line: 1,
        msg: format!("expected header `pcd v1 <n> <d>`, found {header:?}"),
    };
    if fields.len() != 4 || fields[0] != "pcd" || fields[1] != "v1" {
        return Err(bad_header());
    }
    let n: usize = fields[2].parse().map_err(|_| bad_header())?;
    let d: usize = fields[3].parse().map_err(|_| bad_header())?;

    let mut coords = Vec::with_capacity(n * d);
    let mut rows = 0;
    for (line_no, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        if rows == n {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("more than {n} points"),
            });
        }
        let before = coords.len();
        for tok in line.split_whitespace() {
            let v: f64 = tok.parse().map_err(|_| Error::Parse {
                line: line_no,
                msg: format!("invalid number {tok:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("non-finite value {tok:?}"),
                });
            }
            coords.push(T::lit(v));
        }
        if coords.len() - before != d {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("expected {d} coordinates, found {}", coords.len() - before),
            });
        }
        rows += 1;
    }
    if rows != n {
        return Err(Error::Parse {
            line: text.lines().count() + 1,
            msg: format!("expected {n} points, found {rows}"),
        });
    }
    PointCloud::from_flat(d, coords).map_err(|e| Error::Parse {
        line: 1,
        msg: e.to_string(),
    })
}

pub fn write_pcd<T: Scalar>(path: &Path, cloud: &PointCloud<T>) -> Result<()> {
    fs::write(path, format_pcd(cloud))?;
    Ok(())
}

pub fn read_pcd<T: Scalar>(path: &Path) -> Result<PointCloud<T>> {
    parse_pcd(&fs::read_to_string(path)?)
}

fn entry_file(dir: &Path, index: usize, suffix: &str) -> std::path::PathBuf {
    dir.join(format!("{index:04}_{suffix}.pcd"))
}

/// Writes `NNNN_partial.pcd`, `NNNN_complete.pcd`, `NNNN_mode<k>.pcd` and `labels.csv`.
pub fn write_dataset<T: Scalar>(dir: &Path, entries: &[DatasetEntry<T>]) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut labels = String::from("index,mode_label\n");
    for (i, e) in entries.iter().enumerate() {
        write_pcd(&entry_file(dir, i, "partial"), &e.partial)?;
        write_pcd(&entry_file(dir, i, "complete"), &e.complete)?;
        for (k, r) in e.mode_refs.iter().enumerate() {
            write_pcd(&entry_file(dir, i, &format!("mode{k}")), r)?;
        }
        let _ = writeln!(labels, "{i},{}", e.mode_label);
    }
    fs::write(dir.join("labels.csv"), labels)?;
    Ok(())
}

pub fn read_dataset<T: Scalar>(dir: &Path) -> Result<Vec<DatasetEntry<T>>> {
    let labels = fs::read_to_string(dir.join("labels.csv"))?;
    let mut entries = Vec::new();
    for (line_no, line) in labels.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |msg: String| Error::Parse {
            line: line_no + 1,
            msg,
        };
        let (idx, label) = line
            .split_once(',')
            .ok_or_else(|| parse_err(format!("expected `index,mode_label`, found {line:?}")))?;
        let index: usize = idx
            .trim()
            .parse()
            .map_err(|_| parse_err(format!("bad index {idx:?}")))?;
        let mode_label: usize = label
            .trim()
            .parse()
            .map_err(|_| parse_err(format!("bad label {label:?}")))?;
        if index != entries.len() {
            return Err(parse_err(format!(
                "expected index {}, found {index}",
                entries.len()
            )));
        }
        let mut mode_refs = Vec::new();
        loop {
            let path = entry_file(dir, index, &format!("mode{}", mode_refs.len()));
            if !path.exists() {
                break;
            }
            mode_refs.push(read_pcd(&path)?);
        }
        entries.push(DatasetEntry {
            partial: read_pcd(&entry_file(dir, index, "partial"))?,
            complete: read_pcd(&entry_file(dir, index, "complete"))?,
            mode_label,
            mode_refs,
        });
    }
    Ok(entries)
}
