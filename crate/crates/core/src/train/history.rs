use serde::{Deserialize, Serialize};

use crate::error::{KanError, Result};

/// One recorded optimizer step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub step: usize,
    #[serde(rename = "G")]
    pub grid: usize,
    pub train_rmse: f64,
    pub test_rmse: f64,
    pub l1: f64,
    pub entropy: f64,
    pub seconds: f64,
}

/// Training curve, one row per step.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub rows: Vec<HistoryRow>,
}

impl History {
    /// Appends a row. Rows must arrive in increasing step order.
    pub fn push(&mut self, row: HistoryRow) {
        debug_assert!(self.rows.last().is_none_or(|r| r.step < row.step));
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn last(&self) -> Option<&HistoryRow> {
        self.rows.last()
    }

    /// Continue the step numbering of `self` with `other`.
    pub fn append(&mut self, other: &History) {
        let offset = self.rows.last().map_or(0, |r| r.step);
        for r in &other.rows {
            self.rows.push(HistoryRow {
                step: r.step + offset,
                ..*r
            });
        }
    }

    /// Rows recorded while grid size `g` was in force.
    pub fn stage(&self, g: usize) -> impl Iterator<Item = &HistoryRow> {
        self.rows.iter().filter(move |r| r.grid == g)
    }

    /// `step,G,train_rmse,test_rmse,l1,entropy,seconds`
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        if self.rows.is_empty() {
            w.write_record(["step", "G", "train_rmse", "test_rmse", "l1", "entropy", "seconds"])
                .expect("in-memory write");
        }
        for r in &self.rows {
            w.serialize(r).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(text.as_bytes());
        let rows = rd
            .deserialize()
            .collect::<std::result::Result<Vec<HistoryRow>, _>>()
            .map_err(|e| KanError::Malformed(e.to_string()))?;
        if rows.windows(2).any(|w| w[1].step <= w[0].step) {
            return Err(KanError::Malformed("history steps must increase".into()));
        }
        Ok(Self { rows })
    }
}
