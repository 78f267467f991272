//! Input/target tables with a fixed train/test split.
//!
//! CSV form: one JSON header line, one column-name line, then one row per
//! sample holding the inputs, the targets and a `split` column (`train` or
//! `test`).

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{KanError, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub inputs: Matrix,
    pub targets: Matrix,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub variables: Vec<String>,
    /// Per-input `(lo, hi)` box.
    pub domain: Vec<(f64, f64)>,
}

/// First line of a dataset CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub name: String,
    pub d: usize,
    pub m: usize,
    pub domain: Vec<(f64, f64)>,
    pub n_train: usize,
    pub n_test: usize,
    #[serde(default)]
    pub variables: Vec<String>,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        inputs: Matrix,
        targets: Matrix,
        train: Vec<usize>,
        test: Vec<usize>,
        domain: Vec<(f64, f64)>,
    ) -> Result<Self> {
        let d = inputs.cols();
        let variables = (1..=d).map(|i| format!("x{i}")).collect();
        let ds = Self {
            name: name.into(),
            inputs,
            targets,
            train,
            test,
            variables,
            domain,
        };
        ds.validate()?;
        Ok(ds)
    }

    /// First `n_train` rows train, the rest test.
    pub fn split_at(
        name: impl Into<String>,
        inputs: Matrix,
        targets: Matrix,
        n_train: usize,
        domain: Vec<(f64, f64)>,
    ) -> Result<Self> {
        let n = inputs.rows();
        if n_train > n {
            return Err(KanError::Config(format!("{n_train} training rows requested from {n}")));
        }
        Self::new(name, inputs, targets, (0..n_train).collect(), (n_train..n).collect(), domain)
    }

    pub fn with_variables(mut self, variables: Vec<String>) -> Result<Self> {
        if variables.len() != self.d() {
            return Err(KanError::Dimension {
                expected: self.d(),
                got: variables.len(),
            });
        }
        self.variables = variables;
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        let n = self.inputs.rows();
        if self.targets.rows() != n {
            return Err(KanError::SampleMismatch {
                xs: n,
                ys: self.targets.rows(),
            });
        }
        if self.domain.len() != self.inputs.cols() {
            return Err(KanError::Dimension {
                expected: self.inputs.cols(),
                got: self.domain.len(),
            });
        }
        let mut seen = vec![false; n];
        for &i in self.train.iter().chain(&self.test) {
            if i >= n || seen[i] {
                return Err(KanError::Malformed(format!("split index {i} repeated or out of range")));
            }
            seen[i] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(KanError::Malformed("split does not cover every sample".into()));
        }
        for r in 0..n {
            for (c, &(lo, hi)) in self.domain.iter().enumerate() {
                let v = self.inputs.get(r, c);
                if !(v >= lo && v <= hi) {
                    return Err(KanError::Malformed(format!(
                        "input {v} in row {r} outside [{lo}, {hi}]"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.rows() == 0
    }

    pub fn d(&self) -> usize {
        self.inputs.cols()
    }

    pub fn m(&self) -> usize {
        self.targets.cols()
    }

    pub fn train_inputs(&self) -> Matrix {
        self.inputs.select_rows(&self.train)
    }

    pub fn train_targets(&self) -> Matrix {
        self.targets.select_rows(&self.train)
    }

    pub fn test_inputs(&self) -> Matrix {
        self.inputs.select_rows(&self.test)
    }

    pub fn test_targets(&self) -> Matrix {
        self.targets.select_rows(&self.test)
    }

    pub fn header(&self) -> DatasetHeader {
        DatasetHeader {
            name: self.name.clone(),
            d: self.d(),
            m: self.m(),
            domain: self.domain.clone(),
            n_train: self.train.len(),
            n_test: self.test.len(),
            variables: self.variables.clone(),
        }
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let io = |e: std::io::Error| KanError::Config(e.to_string());
        let header = serde_json::to_string(&self.header()).map_err(|e| KanError::Malformed(e.to_string()))?;
        writeln!(out, "{header}").map_err(io)?;
        let mut split = vec![""; self.len()];
        for &i in &self.train {
            split[i] = "train";
        }
        for &i in &self.test {
            split[i] = "test";
        }
        let mut w = csv::Writer::from_writer(out);
        let mut names: Vec<String> = self.variables.clone();
        names.extend((1..=self.m()).map(|j| format!("y{j}")));
        names.push("split".into());
        w.write_record(&names).map_err(|e| KanError::Config(e.to_string()))?;
        for r in 0..self.len() {
            let mut rec: Vec<String> = self.inputs.row(r).iter().map(|v| v.to_string()).collect();
            rec.extend(self.targets.row(r).iter().map(|v| v.to_string()));
            rec.push(split[r].to_string());
            w.write_record(&rec).map_err(|e| KanError::Config(e.to_string()))?;
        }
        w.flush().map_err(io)?;
        Ok(())
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| KanError::Malformed(e.to_string()))
    }

    pub fn read_csv<R: BufRead>(mut input: R) -> Result<Self> {
        let mut line = String::new();
        input
            .read_line(&mut line)
            .map_err(|e| KanError::Malformed(e.to_string()))?;
        let header: DatasetHeader =
            serde_json::from_str(line.trim()).map_err(|e| KanError::Malformed(format!("header: {e}")))?;
        let mut reader = csv::Reader::from_reader(input);
        let (d, m) = (header.d, header.m);
        let (mut xs, mut ys) = (Vec::new(), Vec::new());
        let (mut train, mut test) = (Vec::new(), Vec::new());
        for (r, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| KanError::Malformed(e.to_string()))?;
            if rec.len() != d + m + 1 {
                return Err(KanError::Malformed(format!(
                    "row {r} has {} fields, expected {}",
                    rec.len(),
                    d + m + 1
                )));
            }
            for c in 0..d + m {
                let v: f64 = rec[c]
                    .trim()
                    .parse()
                    .map_err(|_| KanError::Malformed(format!("row {r}: bad number {:?}", &rec[c])))?;
                if c < d {
                    xs.push(v);
                } else {
                    ys.push(v);
                }
            }
            match rec[d + m].trim() {
                "train" => train.push(r),
                "test" => test.push(r),
                other => return Err(KanError::Malformed(format!("row {r}: unknown split {other:?}"))),
            }
        }
        if train.len() != header.n_train || test.len() != header.n_test {
            return Err(KanError::Malformed("split sizes disagree with header".into()));
        }
        let n = train.len() + test.len();
        let ds = Dataset::new(
            header.name,
            Matrix::new(n, d, xs)?,
            Matrix::new(n, m, ys)?,
            train,
            test,
            header.domain,
        )?;
        if header.variables.is_empty() {
            Ok(ds)
        } else {
            ds.with_variables(header.variables)
        }
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        Self::read_csv(text.as_bytes())
    }
}
