//! CSV ledgers and JSON reports.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::Result;
use crate::ledger::{LedgerRow, NormLedger};

/// Header row followed by one row per ledger sample; the first column is `t`.
pub fn write_ledger(path: &Path, ledger: &NormLedger) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    if ledger.rows.is_empty() {
        w.serialize(LedgerRow::default())?;
        drop(w);
        // keep just the header for an empty ledger
        let text = std::fs::read_to_string(path)?;
        let header = text.lines().next().unwrap_or("");
        std::fs::write(path, format!("{header}\n"))?;
        return Ok(());
    }
    for row in &ledger.rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_ledger(path: &Path) -> Result<NormLedger> {
    let mut r = csv::Reader::from_path(path)?;
    let rows = r.deserialize().collect::<std::result::Result<Vec<LedgerRow>, _>>()?;
    Ok(NormLedger { rows })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cns_model::{FlowState, Model};
    use crate::integrator::{run, IntegratorConfig};
    use crate::spectral::{GridSpec, RealField2D};

    #[test]
    fn three_sample_ledger_has_four_lines() {
        let m = Model::with_defaults(GridSpec::new(16, 1.0).unwrap());
        let mut s = FlowState::zeros(m.grid());
        s.a = RealField2D::from_fn(m.grid(), |x, _| 1e-3 * x.sin());
        let cfg = IntegratorConfig {
            t_end: 0.2,
            dt_init: 0.05,
            dt_max: 0.05,
            adaptive: false,
            ledger_stride: 2,
            ..IntegratorConfig::default()
        };
        let rec = run(&m, &s, &cfg, &mut []).unwrap();
        assert_eq!(rec.ledger.rows.len(), 3);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ledger.csv");
        write_ledger(&p, &rec.ledger).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[0].starts_with("t,"));
        let back = read_ledger(&p).unwrap();
        assert_eq!(back, rec.ledger);
        assert!(back.rows.windows(2).all(|w| w[1].t > w[0].t));
    }

    #[test]
    fn empty_ledger_is_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("empty.csv");
        write_ledger(&p, &NormLedger::default()).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert!(read_ledger(&p).unwrap().rows.is_empty());
    }
}
