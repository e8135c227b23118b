use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Metrics of one epoch, all measured on the validation split except the
/// training losses and the weight statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainRecord {
    pub epoch: usize,
    pub loss_total: f64,
    pub loss_ce: f64,
    /// Distillation term after reweighting, before `kd_weight`.
    pub loss_kd: f64,
    pub acc_student: f64,
    pub acc_teacher: f64,
    /// Share of the (weighted) distillation loss per teacher-entropy quartile, low to high.
    pub quartile_shares: [f64; 4],
    /// Teacher accuracy minus student accuracy per teacher-entropy quartile.
    pub segment_gaps: [f64; 4],
    /// Min / mean / max of every weight applied during the epoch.
    pub weight_min: f64,
    pub weight_mean: f64,
    pub weight_max: f64,
    /// Student entropy over the top decile of teacher entropy: min, Q1, median, Q3, max.
    pub student_entropy_box: [f64; 5],
}

pub const TRAIN_LOG_HEADER: &str = "epoch,loss_total,loss_ce,loss_kd,acc_student,acc_teacher,q1_share,q2_share,q3_share,q4_share,seg1_gap,seg2_gap,seg3_gap,seg4_gap,w_min,w_mean,w_max,hs_min,hs_q1,hs_med,hs_q3,hs_max";

const FIELDS: usize = 22;

impl TrainRecord {
    fn values(&self) -> Vec<f64> {
        let mut v = vec![
            self.loss_total,
            self.loss_ce,
            self.loss_kd,
            self.acc_student,
            self.acc_teacher,
        ];
        v.extend(self.quartile_shares);
        v.extend(self.segment_gaps);
        v.extend([self.weight_min, self.weight_mean, self.weight_max]);
        v.extend(self.student_entropy_box);
        v
    }

    fn from_values(epoch: usize, v: &[f64]) -> Self {
        TrainRecord {
            epoch,
            loss_total: v[0],
            loss_ce: v[1],
            loss_kd: v[2],
            acc_student: v[3],
            acc_teacher: v[4],
            quartile_shares: [v[5], v[6], v[7], v[8]],
            segment_gaps: [v[9], v[10], v[11], v[12]],
            weight_min: v[13],
            weight_mean: v[14],
            weight_max: v[15],
            student_entropy_box: [v[16], v[17], v[18], v[19], v[20]],
        }
    }
}

/// Renders the log with the fixed header. Floats use the shortest
/// round-trip representation.
pub fn format_train_log(records: &[TrainRecord]) -> String {
    let mut out = String::from(TRAIN_LOG_HEADER);
    out.push('\n');
    for r in records {
        write!(out, "{}", r.epoch).expect("write to string");
        for v in r.values() {
            write!(out, ",{v:?}").expect("write to string");
        }
        out.push('\n');
    }
    out
}

pub fn write_train_log(records: &[TrainRecord], path: &Path) -> Result<()> {
    fs::write(path, format_train_log(records)).map_err(|e| Error::io(path, e))
}

pub fn parse_train_log(text: &str, source: &str) -> Result<Vec<TrainRecord>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim_end() == TRAIN_LOG_HEADER => {}
        Some(_) => return Err(Error::record(source, 0, "unexpected header")),
        None => return Err(Error::record(source, 0, "empty log")),
    }
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        let record = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != FIELDS {
            return Err(Error::record(
                source,
                record,
                format!("{} fields, expected {FIELDS}", fields.len()),
            ));
        }
        let epoch = fields[0]
            .trim()
            .parse()
            .map_err(|_| Error::record(source, record, format!("bad epoch {:?}", fields[0])))?;
        let values = fields[1..]
            .iter()
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::record(source, record, format!("bad number {f:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        records.push(TrainRecord::from_values(epoch, &values));
    }
    Ok(records)
}

pub fn read_train_log(path: &Path) -> Result<Vec<TrainRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_train_log(&text, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(epoch: usize) -> TrainRecord {
        TrainRecord {
            epoch,
            loss_total: 1.0 / 3.0,
            loss_ce: 0.1,
            loss_kd: 0.2,
            acc_student: 0.5,
            acc_teacher: 0.75,
            quartile_shares: [0.4, 0.3, 0.2, 0.1],
            segment_gaps: [0.0, 0.01, -0.02, 0.3],
            weight_min: 0.0,
            weight_mean: 1.5,
            weight_max: 2.9,
            student_entropy_box: [0.1, 0.2, 0.3, 0.4, 0.5],
        }
    }

    #[test]
    fn header_is_fixed() {
        assert_eq!(TRAIN_LOG_HEADER.split(',').count(), FIELDS);
        assert!(format_train_log(&[]).starts_with("epoch,loss_total,loss_ce,loss_kd,acc_student"));
    }

    #[test]
    fn round_trip() {
        let records = vec![record(1), record(2)];
        let text = format_train_log(&records);
        assert_eq!(parse_train_log(&text, "mem").unwrap(), records);
    }

    #[test]
    fn malformed_lines() {
        let mut text = format_train_log(&[record(1)]);
        text.push_str("2,1.0\n");
        assert!(matches!(parse_train_log(&text, "mem"), Err(Error::Record { record: 2, .. })));
        assert!(parse_train_log("epoch,x\n", "mem").is_err());
        assert!(parse_train_log("", "mem").is_err());
    }
}
