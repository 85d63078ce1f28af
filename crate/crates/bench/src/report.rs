//! CSV output. Durations are milliseconds.

use std::io::Write;

use crate::bandwidth::BandwidthReport;
use crate::phases::{ListMode, PhaseReport, SignatureReport};

/// One row of a latency table: which benchmark, its size parameter, and the
/// list mode where it applies.
#[derive(Debug, Clone, Copy)]
pub struct PhaseRow {
    pub bench: &'static str,
    pub param: usize,
    pub mode: Option<ListMode>,
    pub report: PhaseReport,
}

pub const PHASE_HEADER: [&str; 11] = [
    "bench",
    "param",
    "mode",
    "init_enclave_ms",
    "pre_enclave_ms",
    "in_enclave_ms",
    "post_enclave_ms",
    "sign_ops_ms",
    "total_ms",
    "bytes_sent",
    "bytes_received",
];

pub fn write_phases<W: Write>(out: W, rows: &[PhaseRow]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(PHASE_HEADER)?;
    for row in rows {
        let r = &row.report;
        w.write_record([
            row.bench.to_owned(),
            row.param.to_string(),
            row.mode.map(|m| m.to_string()).unwrap_or_default(),
            format!("{:.4}", r.init_enclave),
            format!("{:.4}", r.pre_enclave),
            format!("{:.4}", r.in_enclave),
            format!("{:.4}", r.post_enclave),
            format!("{:.4}", r.sign_ops),
            format!("{:.4}", r.total()),
            r.bytes_sent.to_string(),
            r.bytes_received.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_signatures<W: Write>(out: W, r: &SignatureReport) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["operation", "mean_ms"])?;
    for (op, v) in [
        ("ecdsa_sign", r.ecdsa_sign),
        ("ecdsa_verify", r.ecdsa_verify),
        ("group_sign", r.group_sign),
        ("group_verify", r.group_verify),
    ] {
        w.write_record([op.to_owned(), format!("{v:.4}")])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_bandwidth<W: Write>(out: W, r: &BandwidthReport) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["sent", "received", "total"])?;
    w.write_record([r.sent, r.received, r.total()].map(|n| n.to_string()))?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phase_rows_round_trip_through_a_reader() {
        let rows = [PhaseRow {
            bench: "lists",
            param: 16,
            mode: Some(ListMode::New),
            report: PhaseReport {
                in_enclave: 1.5,
                sign_ops: 0.25,
                bytes_sent: 900,
                bytes_received: 260,
                ..Default::default()
            },
        }];
        let mut buf = Vec::new();
        write_phases(&mut buf, &rows).unwrap();
        let mut r = csv::Reader::from_reader(buf.as_slice());
        assert_eq!(r.headers().unwrap(), PHASE_HEADER.as_slice());
        let rec = r.records().next().unwrap().unwrap();
        assert_eq!(&rec[0], "lists");
        assert_eq!(&rec[2], "new");
        assert_eq!(&rec[8], "1.7500");
        assert_eq!(&rec[9], "900");
    }

    #[test]
    fn bandwidth_total_column() {
        let mut buf = Vec::new();
        write_bandwidth(&mut buf, &BandwidthReport { sent: 3, received: 4 }).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "sent,received,total\n3,4,7\n");
    }
}
