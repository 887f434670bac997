//! Calibration grids of single-shot measurement counts.
//!
//! On-disk layout: the first line is a JSON header
//!
//! ```text
//! {"format":"qmetro-grid-dataset","version":1,"grid":{"lo":..,"hi":..,"n_per_axis":..,"dims":..},"r":..,"outcomes":..,"points":..}
//! ```
//!
//! followed by exactly `points` CSV lines, one per grid point in flat index
//! order, each holding `outcomes` nonnegative integer counts that sum to `r`.

use std::io::{BufWriter, Write};
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ParameterGrid, ProbTable};
use crate::models::LikelihoodModel;
use crate::rng;

const FORMAT_TAG: &str = "qmetro-grid-dataset";
const FORMAT_VERSION: u32 = 1;

pub fn build_grid(lo: f64, hi: f64, n_per_axis: usize, dims: usize) -> Result<ParameterGrid> {
    ParameterGrid::new(lo, hi, n_per_axis, dims)
}

/// Per-grid-point outcome counts from `r` single-shot events each.
#[derive(Clone, Debug, PartialEq)]
pub struct GridDataset {
    grid: ParameterGrid,
    r: u64,
    outcomes: usize,
    counts: Vec<u64>,
}

impl GridDataset {
    pub fn new(grid: ParameterGrid, r: u64, outcomes: usize, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != grid.len() * outcomes {
            return Err(Error::Shape(format!(
                "{} counts for {} points × {outcomes} outcomes",
                counts.len(),
                grid.len()
            )));
        }
        for (j, row) in counts.chunks(outcomes).enumerate() {
            let total: u64 = row.iter().sum();
            if total != r {
                return Err(Error::Shape(format!(
                    "grid point {j} holds {total} events, expected {r}"
                )));
            }
        }
        Ok(Self {
            grid,
            r,
            outcomes,
            counts,
        })
    }

    pub fn grid(&self) -> &ParameterGrid {
        &self.grid
    }

    /// Events recorded per grid point.
    pub fn r(&self) -> u64 {
        self.r
    }

    pub fn outcomes(&self) -> usize {
        self.outcomes
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn counts_at(&self, point: usize) -> &[u64] {
        &self.counts[point * self.outcomes..(point + 1) * self.outcomes]
    }

    pub fn total_events(&self) -> u64 {
        self.r * self.grid.len() as u64
    }
}

/// Draws `r` outcomes at every grid point (controls zero). Each point uses
/// its own random stream derived from `(seed, point)`.
pub fn sample_grid_dataset(
    model: &dyn LikelihoodModel,
    grid: &ParameterGrid,
    r: u64,
    seed: u64,
) -> Result<GridDataset> {
    if r == 0 {
        return Err(Error::Config("need at least one event per grid point".into()));
    }
    if model.dims() != grid.dims() {
        return Err(Error::Shape(format!(
            "model has {} phases but the grid has {} axes",
            model.dims(),
            grid.dims()
        )));
    }
    let outcomes = model.outcome_count();
    let zeros = vec![0.0; grid.dims()];
    let mut counts = vec![0u64; grid.len() * outcomes];
    counts
        .par_chunks_mut(outcomes)
        .enumerate()
        .try_for_each(|(j, row)| -> Result<()> {
            let dist = model.outcome_probs(&grid.point(j), &zeros);
            let sampler = WeightedIndex::new(dist.probs())
                .map_err(|e| Error::InvalidModel(e.to_string()))?;
            let mut rng = rng::stream(seed, &[j as u64]);
            for _ in 0..r {
                row[sampler.sample(&mut rng)] += 1;
            }
            Ok(())
        })?;
    GridDataset::new(grid.clone(), r, outcomes, counts)
}

/// `f[d][j] = counts[j][d] / r`.
pub fn outcome_frequencies(dataset: &GridDataset) -> ProbTable {
    let n = dataset.grid.len();
    let d = dataset.outcomes;
    let r = dataset.r as f64;
    let mut values = vec![0.0; n * d];
    for j in 0..n {
        for (outcome, &c) in dataset.counts_at(j).iter().enumerate() {
            values[outcome * n + j] = c as f64 / r;
        }
    }
    ProbTable::new(dataset.grid.clone(), d, values).expect("shape follows the dataset")
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    grid: ParameterGrid,
    r: u64,
    outcomes: usize,
    points: usize,
}

pub fn save_dataset(dataset: &GridDataset, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut out = BufWriter::new(file);
    write_dataset(dataset, &mut out)?;
    out.flush()?;
    Ok(())
}

pub fn write_dataset<W: Write>(dataset: &GridDataset, out: W) -> Result<()> {
    let mut out = out;
    let header = Header {
        format: FORMAT_TAG.to_string(),
        version: FORMAT_VERSION,
        grid: dataset.grid.clone(),
        r: dataset.r,
        outcomes: dataset.outcomes,
        points: dataset.grid.len(),
    };
    serde_json::to_writer(&mut out, &header).map_err(|e| Error::Io(e.into()))?;
    out.write_all(b"\n")?;
    let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    for row in dataset.counts.chunks(dataset.outcomes) {
        writer
            .write_record(row.iter().map(|c| c.to_string()))
            .map_err(csv_io)?;
    }
    writer.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<GridDataset> {
    let text = std::fs::read_to_string(path)?;
    parse_dataset(&text)
}

pub fn parse_dataset(text: &str) -> Result<GridDataset> {
    let (first, rest) = match text.split_once('\n') {
        Some(split) => split,
        None => (text, ""),
    };
    let header: Header = serde_json::from_str(first).map_err(|e| Error::Parse {
        line: 1,
        column: e.column(),
        message: format!("invalid header: {e}"),
    })?;
    let parse_err = |line: usize, message: String| Error::Parse {
        line,
        column: 1,
        message,
    };
    if header.format != FORMAT_TAG || header.version != FORMAT_VERSION {
        return Err(parse_err(
            1,
            format!("unsupported format {} v{}", header.format, header.version),
        ));
    }
    let grid = ParameterGrid::new(
        header.grid.lo(),
        header.grid.hi(),
        header.grid.n_per_axis(),
        header.grid.dims(),
    )
    .map_err(|e| parse_err(1, e.to_string()))?;
    if header.points != grid.len() {
        return Err(parse_err(
            1,
            format!("header declares {} points, grid has {}", header.points, grid.len()),
        ));
    }

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(rest.as_bytes());
    let mut counts = Vec::with_capacity(header.points * header.outcomes);
    let mut rows = 0usize;
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize) + 1;
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(rows + 1, |p| p.line() as usize) + 1;
        if record.len() != header.outcomes {
            return Err(parse_err(
                line,
                format!("expected {} counts, found {}", header.outcomes, record.len()),
            ));
        }
        let mut total = 0u64;
        for (col, field) in record.iter().enumerate() {
            let c: u64 = field.trim().parse().map_err(|_| Error::Parse {
                line,
                column: col + 1,
                message: format!("invalid count {field:?}"),
            })?;
            total += c;
            counts.push(c);
        }
        if total != header.r {
            return Err(parse_err(
                line,
                format!("row sums to {total}, expected r = {}", header.r),
            ));
        }
        rows += 1;
    }
    if rows != header.points {
        return Err(parse_err(
            rows + 2,
            format!("truncated data: expected {} rows, found {rows}", header.points),
        ));
    }
    GridDataset::new(grid, header.r, header.outcomes, counts)
}
