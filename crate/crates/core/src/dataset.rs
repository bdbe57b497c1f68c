//! Multi-resolution datasets `D = {(h_i, t_ij, q_ij)}`.

use std::cmp::Ordering;
use std::io::{Read, Write};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{BbpnError, Result};

/// Ordinate `t = (t_1, ..., t_p)` made of `p` real blocks. `p = 0` is allowed for scalar outputs.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Ordinate {
    blocks: Vec<Vec<f64>>,
}

impl Ordinate {
    pub fn new(blocks: Vec<Vec<f64>>) -> Self {
        Self { blocks }
    }

    /// Ordinate with no blocks.
    pub fn empty() -> Self {
        Self::default()
    }

    /// One one-dimensional block per value.
    pub fn scalars(values: &[f64]) -> Self {
        Self::new(values.iter().map(|&v| vec![v]).collect())
    }

    /// Single one-dimensional block holding an index (component or eigenvalue number).
    pub fn index(i: usize) -> Self {
        Self::new(vec![vec![i as f64]])
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn block(&self, i: usize) -> &[f64] {
        &self.blocks[i]
    }

    pub fn blocks(&self) -> &[Vec<f64>] {
        &self.blocks
    }

    /// All coordinates, block after block.
    pub fn flat(&self) -> Vec<f64> {
        self.blocks.iter().flatten().copied().collect()
    }

    /// Euclidean distance between block `i` of two ordinates.
    #[inline]
    pub fn block_distance(&self, other: &Ordinate, i: usize) -> f64 {
        self.blocks[i]
            .iter()
            .zip(&other.blocks[i])
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    /// Lexicographic order on the flattened coordinates.
    pub fn lex_cmp(&self, other: &Ordinate) -> Ordering {
        let a = self.flat();
        let b = other.flat();
        for (x, y) in a.iter().zip(&b) {
            match x.total_cmp(y) {
                Ordering::Equal => continue,
                ord => return ord,
            }
        }
        a.len().cmp(&b.len())
    }

    fn shape(&self) -> Vec<usize> {
        self.blocks.iter().map(Vec::len).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Datum {
    pub h: f64,
    pub t: Ordinate,
    pub value: f64,
}

/// Validated dataset sorted by decreasing `h`, then lexicographically by ordinate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    data: Vec<Datum>,
    resolutions: Vec<f64>,
    counts: Vec<usize>,
}

impl Dataset {
    /// Builds a dataset from raw triples. Exact duplicates are merged; the same
    /// `(h, t)` with different values is an error.
    pub fn build<I>(points: I) -> Result<Self>
    where
        I: IntoIterator<Item = (f64, Ordinate, f64)>,
    {
        let mut data: Vec<Datum> = points
            .into_iter()
            .map(|(h, t, value)| Datum { h, t, value })
            .collect();
        if data.is_empty() {
            return Err(BbpnError::EmptyDataset);
        }
        let shape = data[0].t.shape();
        for d in &data {
            if !(d.h > 0.0 && d.h.is_finite()) {
                return Err(BbpnError::invalid(format!("resolution must be positive and finite, got {}", d.h)));
            }
            if !d.value.is_finite() {
                return Err(BbpnError::invalid(format!("non-finite value at h = {}", d.h)));
            }
            if d.t.flat().iter().any(|x| !x.is_finite()) {
                return Err(BbpnError::invalid("non-finite ordinate"));
            }
            if d.t.shape() != shape {
                return Err(BbpnError::invalid("all ordinates must share the same block structure"));
            }
        }
        data.sort_by(|a, b| b.h.total_cmp(&a.h).then_with(|| a.t.lex_cmp(&b.t)));
        let mut merged: Vec<Datum> = Vec::with_capacity(data.len());
        for d in data {
            if let Some(last) = merged.last() {
                if last.h == d.h && last.t == d.t {
                    if last.value != d.value {
                        return Err(BbpnError::DataConsistency {
                            h: d.h,
                            t: d.t.flat(),
                            first: last.value,
                            second: d.value,
                        });
                    }
                    continue;
                }
            }
            merged.push(d);
        }
        let mut resolutions = Vec::new();
        let mut counts = Vec::new();
        for d in &merged {
            if resolutions.last() == Some(&d.h) {
                *counts.last_mut().unwrap() += 1;
            } else {
                resolutions.push(d.h);
                counts.push(1);
            }
        }
        Ok(Self {
            data: merged,
            resolutions,
            counts,
        })
    }

    /// Single-resolution dataset from the output of one run.
    pub fn from_run(h: f64, outputs: Vec<(Ordinate, f64)>) -> Result<Self> {
        Self::build(outputs.into_iter().map(|(t, q)| (h, t, q)))
    }

    pub fn data(&self) -> &[Datum] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Distinct resolutions, coarsest first.
    pub fn resolutions(&self) -> &[f64] {
        &self.resolutions
    }

    /// Number of ordinates at each resolution.
    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn n_resolutions(&self) -> usize {
        self.resolutions.len()
    }

    pub fn h_finest(&self) -> f64 {
        *self.resolutions.last().expect("dataset is never empty")
    }

    /// Number of ordinate blocks.
    pub fn p(&self) -> usize {
        self.data[0].t.num_blocks()
    }

    pub fn values(&self) -> DVector<f64> {
        DVector::from_iterator(self.data.len(), self.data.iter().map(|d| d.value))
    }

    /// Distinct ordinates in lexicographic order.
    pub fn ordinates(&self) -> Vec<Ordinate> {
        let mut ts: Vec<Ordinate> = self.data.iter().map(|d| d.t.clone()).collect();
        ts.sort_by(|a, b| a.lex_cmp(b));
        ts.dedup();
        ts
    }

    /// `(h, value)` pairs observed at ordinate `t`, coarsest first.
    pub fn sequence_at(&self, t: &Ordinate) -> Vec<(f64, f64)> {
        self.data
            .iter()
            .filter(|d| &d.t == t)
            .map(|d| (d.h, d.value))
            .collect()
    }

    /// Sub-dataset restricted to the given ordinates.
    pub fn restrict(&self, keep: impl Fn(&Ordinate) -> bool) -> Result<Self> {
        Self::build(
            self.data
                .iter()
                .filter(|d| keep(&d.t))
                .map(|d| (d.h, d.t.clone(), d.value)),
        )
    }

    /// Union of two datasets.
    pub fn union(&self, other: &Dataset) -> Result<Self> {
        Self::build(
            self.data
                .iter()
                .chain(&other.data)
                .map(|d| (d.h, d.t.clone(), d.value)),
        )
    }

    /// Reads a CSV with header `h, t_1, ..., t_p, value`. Each `t_j` column is a one-dimensional block.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let n = headers.len();
        if n < 2 || &headers[0] != "h" || &headers[n - 1] != "value" {
            return Err(BbpnError::invalid(
                "CSV header must start with `h` and end with `value`",
            ));
        }
        let mut points = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let parse = |i: usize| -> Result<f64> {
                rec[i].parse::<f64>().map_err(|e| {
                    BbpnError::invalid(format!("row {}, column `{}`: {e}", row + 1, &headers[i]))
                })
            };
            let h = parse(0)?;
            let ts = (1..n - 1).map(parse).collect::<Result<Vec<_>>>()?;
            let value = parse(n - 1)?;
            points.push((h, Ordinate::scalars(&ts), value));
        }
        Self::build(points)
    }

    /// Writes the dataset in the format read by [`Dataset::read_csv`]. Multi-dimensional blocks are flattened.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let d = self.data[0].t.flat().len();
        let mut header = vec!["h".to_string()];
        header.extend((1..=d).map(|i| format!("t_{i}")));
        header.push("value".into());
        wtr.write_record(&header)?;
        for datum in &self.data {
            let mut row = vec![datum.h.to_string()];
            row.extend(datum.t.flat().iter().map(f64::to_string));
            row.push(datum.value.to_string());
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Cumulative datasets `D_1 subset D_2 subset ...` from single runs ordered coarse to fine.
pub fn augment_cumulative(runs: &[Dataset]) -> Result<Vec<Dataset>> {
    let mut out: Vec<Dataset> = Vec::with_capacity(runs.len());
    for run in runs {
        let next = match out.last() {
            Some(prev) => prev.union(run)?,
            None => run.clone(),
        };
        out.push(next);
    }
    Ok(out)
}

/// Map between a resolution parameter `w` (step size, iteration count) and `h`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum HParameterization {
    /// `h = w`.
    #[default]
    Identity,
    /// `h = w^(-power)`, for iteration counts `w >= 1`.
    InversePower { power: f64 },
}

impl HParameterization {
    pub fn to_h(&self, w: f64) -> Result<f64> {
        let h = match *self {
            HParameterization::Identity => w,
            HParameterization::InversePower { power } => {
                if !(power > 0.0) {
                    return Err(BbpnError::invalid("inverse-power exponent must be positive"));
                }
                w.powf(-power)
            }
        };
        if !(h > 0.0 && h.is_finite() && w.is_finite() && w > 0.0) {
            return Err(BbpnError::invalid(format!("resolution parameter {w} maps to invalid h = {h}")));
        }
        Ok(h)
    }

    pub fn to_w(&self, h: f64) -> f64 {
        match *self {
            HParameterization::Identity => h,
            HParameterization::InversePower { power } => h.powf(-1.0 / power),
        }
    }

    /// Iteration count encoded by `h`, rounded to the nearest integer.
    pub fn iterations(&self, h: f64) -> Result<usize> {
        let w = self.to_w(h);
        let n = w.round();
        if !(n >= 1.0) || (w - n).abs() > 1e-6 * n {
            return Err(BbpnError::invalid(format!("h = {h} does not encode an iteration count")));
        }
        Ok(n as usize)
    }
}
