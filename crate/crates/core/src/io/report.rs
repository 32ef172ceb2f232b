use std::path::Path;

use super::{read_json, write_json};
use crate::error::{Error, Result};
use crate::metrics::{EvalReport, ViewRecord};

pub fn write_report_json(report: &EvalReport, path: &Path) -> Result<()> {
    write_json(report, path)
}

pub fn read_report_json(path: &Path) -> Result<EvalReport> {
    read_json(path)
}

/// One row per evaluated view: `t,s,psnr_db,identical,ssim`.
pub fn write_report_csv(report: &EvalReport, path: &Path) -> Result<()> {
    super::ensure_parent(path)?;
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
    for v in &report.views {
        w.serialize(v)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_report_csv(path: &Path) -> Result<Vec<ViewRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}
